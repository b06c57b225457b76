use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

/// One affine layer, `y = W x + b` with `W` stored as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((outputs, inputs)),
            b: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }
}

/// Multilayer perceptron with tanh hidden units and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations kept from a forward pass for backprop.
pub struct Tape {
    /// Input followed by every hidden activation.
    acts: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        for l in &mut net.layers {
            let limit = (6.0 / (l.inputs() + l.outputs()) as f64).sqrt();
            let u = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            l.w.mapv_inplace(|_| u.sample(rng));
        }
        net
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs()];
        s.extend(self.layers.iter().map(Layer::outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Layer::outputs).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// Forward pass over a batch whose rows are inputs.
    pub fn forward_tape(&self, x: ArrayView2<f64>) -> Tape {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_owned();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = cur.dot(&l.w.t());
            z += &l.b;
            acts.push(cur);
            if k < last {
                z.mapv_inplace(f64::tanh);
            }
            cur = z;
        }
        Tape { acts, output: cur }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_tape(x).output
    }

    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let row = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        self.forward(row).into_raw_vec_and_offset().0
    }

    /// Gradient of `mse(forward(x), y)` given the tape of `forward(x)`.
    pub fn backward(&self, tape: &Tape, y: ArrayView2<f64>) -> Mlp {
        let (n, d) = tape.output.dim();
        let scale = 2.0 / (n * d) as f64;
        let mut delta = (&tape.output - &y) * scale;
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let input = &tape.acts[k];
            grads.push(Layer {
                w: delta.t().dot(input),
                b: delta.sum_axis(Axis(0)),
            });
            if k > 0 {
                let mut back = delta.dot(&self.layers[k].w);
                // `input` holds tanh outputs of the previous layer.
                Zip::from(&mut back).and(input).for_each(|g, &h| *g *= 1.0 - h * h);
                delta = back;
            }
        }
        grads.reverse();
        Mlp { layers: grads }
    }

    /// Mean squared error and its gradient.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> (f64, Mlp) {
        let tape = self.forward_tape(x);
        let loss = mse(tape.output.view(), y);
        (loss, self.backward(&tape, y))
    }

    pub fn loss(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
        mse(self.forward(x).view(), y)
    }

    /// All parameters, layer by layer, weights row-major before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, k: usize, v: f64) {
        *self.flat_mut(k) = v;
    }

    pub fn get_flat(&self, mut k: usize) -> f64 {
        for l in &self.layers {
            if k < l.w.len() {
                return l.w.as_slice().expect("standard layout")[k];
            }
            k -= l.w.len();
            if k < l.b.len() {
                return l.b[k];
            }
            k -= l.b.len();
        }
        panic!("parameter index out of range")
    }

    fn flat_mut(&mut self, mut k: usize) -> &mut f64 {
        for l in &mut self.layers {
            if k < l.w.len() {
                return &mut l.w.as_slice_mut().expect("standard layout")[k];
            }
            k -= l.w.len();
            if k < l.b.len() {
                return &mut l.b[k];
            }
            k -= l.b.len();
        }
        panic!("parameter index out of range")
    }
}

pub fn mse(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> f64 {
    let n = pred.len();
    let mut acc = 0.0;
    Zip::from(pred).and(target).for_each(|p, t| acc += (p - t) * (p - t));
    acc / n as f64
}
