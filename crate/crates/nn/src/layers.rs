//! Parameter storage and the dense/recurrent building blocks.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::tape::{Matrix, Tape, Var};

/// Named parameter matrices of one network.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub names: Vec<String>,
    pub values: Vec<Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Records every parameter as a leaf on `tape`, in index order.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.values.iter().map(|v| tape.leaf(v.clone())).collect()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().flat_map(|v| v.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Flattened copy of all parameters in index order.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<'t>(self, x: Var<'t>) -> Var<'t> {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.relu(),
            Activation::LeakyRelu => x.leaky_relu(0.2),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => x.sigmoid(),
        }
    }
}

/// Uniform fan-in initialisation, `U(-1/√fan_in, 1/√fan_in)`.
pub fn fan_in_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let bound = 1.0 / (rows.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = params.add(format!("{name}.weight"), fan_in_uniform(input, output, rng));
        let bias = params.add(format!("{name}.bias"), Array2::zeros((1, output)));
        Self { weight, bias, input, output }
    }

    pub fn forward<'t>(&self, p: &[Var<'t>], x: Var<'t>) -> Var<'t> {
        x.matmul(p[self.weight]).add_row(p[self.bias])
    }

    pub fn num_scalars(&self) -> usize {
        self.input * self.output + self.output
    }
}

/// Fully connected stack: hidden layers use `activation`, the last layer is linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = input;
        for (i, &h) in hidden.iter().chain(std::iter::once(&output)).enumerate() {
            layers.push(Linear::new(params, &format!("{name}.{i}"), width, h, rng));
            width = h;
        }
        Self { layers, activation }
    }

    pub fn forward<'t>(&self, p: &[Var<'t>], mut x: Var<'t>) -> Var<'t> {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(p, x);
            if i < last {
                x = self.activation.apply(x);
            }
        }
        x
    }

    pub fn input(&self) -> usize {
        self.layers[0].input
    }

    pub fn output(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    pub fn num_scalars(&self) -> usize {
        self.layers.iter().map(Linear::num_scalars).sum()
    }

    /// Closed-form parameter count for the given widths.
    pub fn count_for(input: usize, hidden: &[usize], output: usize) -> usize {
        let mut total = 0;
        let mut width = input;
        for &h in hidden.iter().chain(std::iter::once(&output)) {
            total += width * h + h;
            width = h;
        }
        total
    }
}

/// Single LSTM cell with gate order input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_input: usize,
    pub w_hidden: usize,
    pub bias: usize,
    pub input: usize,
    pub hidden: usize,
}

/// Hidden and cell state of an [`LstmCell`].
#[derive(Clone, Copy, Debug)]
pub struct LstmState<'t> {
    pub h: Var<'t>,
    pub c: Var<'t>,
}

impl LstmCell {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w_input = params.add(format!("{name}.w_input"), fan_in_uniform(input, 4 * hidden, rng));
        let w_hidden =
            params.add(format!("{name}.w_hidden"), fan_in_uniform(hidden, 4 * hidden, rng));
        // forget gate starts open
        let mut b = Array2::zeros((1, 4 * hidden));
        b.slice_mut(ndarray::s![.., hidden..2 * hidden]).fill(1.0);
        let bias = params.add(format!("{name}.bias"), b);
        Self { w_input, w_hidden, bias, input, hidden }
    }

    pub fn zero_state<'t>(&self, tape: &'t Tape, batch: usize) -> LstmState<'t> {
        LstmState { h: tape.zeros(batch, self.hidden), c: tape.zeros(batch, self.hidden) }
    }

    pub fn step<'t>(&self, p: &[Var<'t>], x: Var<'t>, state: LstmState<'t>) -> LstmState<'t> {
        let h = self.hidden;
        let gates = (x.matmul(p[self.w_input]) + state.h.matmul(p[self.w_hidden]))
            .add_row(p[self.bias]);
        let i = gates.slice_cols(0, h).sigmoid();
        let f = gates.slice_cols(h, 2 * h).sigmoid();
        let g = gates.slice_cols(2 * h, 3 * h).tanh();
        let o = gates.slice_cols(3 * h, 4 * h).sigmoid();
        let c = f * state.c + i * g;
        LstmState { h: o * c.tanh(), c }
    }

    pub fn num_scalars(&self) -> usize {
        Self::count_for(self.input, self.hidden)
    }

    pub fn count_for(input: usize, hidden: usize) -> usize {
        (input + hidden) * 4 * hidden + 4 * hidden
    }
}
