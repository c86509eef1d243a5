use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Matrix, NnError};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// A chain of fully connected layers over a borrowed flat parameter slice.
///
/// Layout per layer: weights `out × in` row-major, then `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseStack {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
}

/// Layer inputs and activated outputs recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct StackCache {
    inputs: Vec<Matrix>,
    outputs: Vec<Matrix>,
}

impl StackCache {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("at least one layer")
    }
}

impl DenseStack {
    /// `sizes` lists input width then each layer's width; one activation per layer.
    pub fn new(sizes: Vec<usize>, activations: Vec<Activation>) -> Self {
        assert!(sizes.len() >= 2, "a stack needs at least one layer");
        assert_eq!(activations.len(), sizes.len() - 1, "one activation per layer");
        Self { sizes, activations }
    }

    /// Every layer with the same activation.
    pub fn uniform(sizes: Vec<usize>, activation: Activation) -> Self {
        let n = sizes.len() - 1;
        Self::new(sizes, vec![activation; n])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.activations.len()
    }

    /// (fan_in, fan_out) per layer.
    pub fn layer_shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sizes.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().map(|(i, o)| o * i + o).sum()
    }

    /// Orthogonal weights scaled by the per-layer gain, zero biases.
    pub fn init_params(&self, gains: &[f64], rng: &mut Rng) -> Vec<f64> {
        assert_eq!(gains.len(), self.n_layers());
        let mut params = Vec::with_capacity(self.param_count());
        for ((fan_in, fan_out), &gain) in self.layer_shapes().zip(gains) {
            params.extend(orthogonal(fan_out, fan_in, gain, rng));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        params
    }

    pub fn forward(&self, params: &[f64], input: &Matrix) -> Result<StackCache, NnError> {
        if params.len() != self.param_count() {
            return Err(NnError::ShapeMismatch { expected: self.param_count(), got: params.len() });
        }
        if input.cols() != self.input_dim() {
            return Err(NnError::ShapeMismatch { expected: self.input_dim(), got: input.cols() });
        }
        let mut inputs = Vec::with_capacity(self.n_layers());
        let mut outputs = Vec::with_capacity(self.n_layers());
        let mut x = input.clone();
        let mut offset = 0;
        for ((fan_in, fan_out), &act) in self.layer_shapes().zip(&self.activations) {
            let w = &params[offset..offset + fan_in * fan_out];
            let b = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let mut y = Matrix::zeros(x.rows(), fan_out);
            for r in 0..x.rows() {
                let xr = x.row(r);
                let yr = y.row_mut(r);
                for o in 0..fan_out {
                    let wo = &w[o * fan_in..(o + 1) * fan_in];
                    let z = b[o] + wo.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
                    yr[o] = act.apply(z);
                }
            }
            inputs.push(x);
            x = y.clone();
            outputs.push(y);
        }
        Ok(StackCache { inputs, outputs })
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the stack input.
    pub fn backward(&self, params: &[f64], cache: &StackCache, grad_output: &Matrix, grads: &mut [f64]) -> Matrix {
        assert_eq!(grads.len(), self.param_count());
        let mut offsets = Vec::with_capacity(self.n_layers());
        let mut offset = 0;
        for (fan_in, fan_out) in self.layer_shapes() {
            offsets.push(offset);
            offset += fan_in * fan_out + fan_out;
        }
        let mut g = grad_output.clone();
        for l in (0..self.n_layers()).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let act = self.activations[l];
            let off = offsets[l];
            let x = &cache.inputs[l];
            let y = &cache.outputs[l];
            for r in 0..g.rows() {
                let yr = y.row(r);
                for (gv, &yv) in g.row_mut(r).iter_mut().zip(yr) {
                    *gv *= act.derivative_from_output(yv);
                }
            }
            let w = &params[off..off + fan_in * fan_out];
            let mut gx = Matrix::zeros(g.rows(), fan_in);
            {
                let (gw, gb) = grads[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for r in 0..g.rows() {
                    let gr = g.row(r);
                    let xr = x.row(r);
                    let gxr = gx.row_mut(r);
                    for o in 0..fan_out {
                        let go = gr[o];
                        if go == 0.0 {
                            continue;
                        }
                        gb[o] += go;
                        let gwo = &mut gw[o * fan_in..(o + 1) * fan_in];
                        for (d, &xv) in gwo.iter_mut().zip(xr) {
                            *d += go * xv;
                        }
                        let wo = &w[o * fan_in..(o + 1) * fan_in];
                        for (d, &wv) in gxr.iter_mut().zip(wo) {
                            *d += go * wv;
                        }
                    }
                }
            }
            g = gx;
        }
        g
    }
}

/// `rows × cols` matrix with orthonormal rows (or columns, when taller than
/// wide), scaled by `gain`.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Vec<f64> {
    let (r, c) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut m: Vec<Vec<f64>> = (0..r).map(|_| (0..c).map(|_| StandardNormal.sample(rng)).collect()).collect();
    for i in 0..r {
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for j in 0..i {
                let dot: f64 = m[i].iter().zip(&m[j]).map(|(a, b)| a * b).sum();
                let (head, tail) = m.split_at_mut(i);
                for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                    *a -= dot * b;
                }
            }
        }
        let norm = m[i].iter().map(|a| a * a).sum::<f64>().sqrt();
        m[i].iter_mut().for_each(|a| *a /= norm);
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows <= cols { m[i][j] } else { m[j][i] };
            out[i * cols + j] = gain * v;
        }
    }
    out
}

/// Stand-alone MLP owning its parameters, with a recorded forward pass for
/// `backward`.
#[derive(Debug, Clone)]
pub struct Mlp {
    stack: DenseStack,
    params: Vec<f64>,
    cache: Option<StackCache>,
}

impl Mlp {
    pub fn new(stack: DenseStack, params: Vec<f64>) -> Result<Self, NnError> {
        if params.len() != stack.param_count() {
            return Err(NnError::ShapeMismatch { expected: stack.param_count(), got: params.len() });
        }
        Ok(Self { stack, params, cache: None })
    }

    pub fn stack(&self) -> &DenseStack {
        &self.stack
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix, NnError> {
        super::check_finite(input)?;
        let cache = self.stack.forward(&self.params, input)?;
        let out = cache.output().clone();
        self.cache = Some(cache);
        Ok(out)
    }

    /// Gradient of a scalar loss given `d loss / d output` for the last forward pass.
    pub fn backward(&mut self, grad_output: &Matrix) -> Result<Vec<f64>, NnError> {
        let cache = self.cache.take().ok_or(NnError::NoForwardPass)?;
        let mut grads = vec![0.0; self.params.len()];
        self.stack.backward(&self.params, &cache, grad_output, &mut grads);
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn orthogonal_rows_and_columns() {
        let mut rng = rng_for(1, 0);
        for (r, c) in [(4usize, 7usize), (7, 4), (5, 5)] {
            let w = orthogonal(r, c, 1.0, &mut rng);
            let small = r.min(c);
            for i in 0..small {
                for j in 0..small {
                    let dot: f64 = if r <= c {
                        (0..c).map(|k| w[i * c + k] * w[j * c + k]).sum()
                    } else {
                        (0..r).map(|k| w[k * c + i] * w[k * c + j]).sum()
                    };
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let stack = DenseStack::uniform(vec![3, 4, 2], Activation::Tanh);
        let mut mlp = Mlp::new(stack.clone(), vec![0.0; stack.param_count()]).unwrap();
        let out = mlp.forward(&Matrix::from_rows(&[[1.0, -2.0, 3.0]])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_requires_forward() {
        let stack = DenseStack::uniform(vec![2, 2], Activation::Identity);
        let mut mlp = Mlp::new(stack, vec![0.0; 6]).unwrap();
        assert_eq!(mlp.backward(&Matrix::zeros(1, 2)), Err(NnError::NoForwardPass));
        mlp.forward(&Matrix::zeros(1, 2)).unwrap();
        assert!(mlp.backward(&Matrix::zeros(1, 2)).is_ok());
        assert_eq!(mlp.backward(&Matrix::zeros(1, 2)), Err(NnError::NoForwardPass));
    }

    #[test]
    fn shape_errors() {
        assert!(Mlp::new(DenseStack::uniform(vec![2, 2], Activation::Tanh), vec![0.0; 5]).is_err());
        let mut mlp = Mlp::new(DenseStack::uniform(vec![2, 2], Activation::Tanh), vec![0.0; 6]).unwrap();
        assert!(matches!(mlp.forward(&Matrix::zeros(1, 3)), Err(NnError::ShapeMismatch { .. })));
        assert_eq!(mlp.forward(&Matrix::from_rows(&[[f64::NAN, 0.0]])), Err(NnError::NonFiniteInput));
    }

    #[test]
    fn identity_network_least_squares_gradient() {
        // y = W x + b, loss = ½ Σ_r ||y_r − t_r||²  ⇒  dW = Σ_r (y_r − t_r) x_rᵀ, db = Σ_r (y_r − t_r)
        let stack = DenseStack::uniform(vec![3, 2], Activation::Identity);
        let params = vec![0.5, -1.0, 2.0, 0.1, 0.3, -0.7, 0.25, -0.5];
        let mut mlp = Mlp::new(stack, params.clone()).unwrap();
        let xs = [[1.0, 2.0, -1.0], [0.5, 0.0, 3.0], [-2.0, 1.0, 1.0]];
        let ts = [[1.0, 0.0], [0.0, 1.0], [2.0, -1.0]];
        let y = mlp.forward(&Matrix::from_rows(&xs)).unwrap();
        let mut resid = Matrix::zeros(3, 2);
        for r in 0..3 {
            for o in 0..2 {
                resid.set(r, o, y.get(r, o) - ts[r][o]);
            }
        }
        let grads = mlp.backward(&resid).unwrap();
        let mut expect = vec![0.0; 8];
        for r in 0..3 {
            for o in 0..2 {
                let pred = params[6 + o] + (0..3).map(|i| params[o * 3 + i] * xs[r][i]).sum::<f64>();
                let e = pred - ts[r][o];
                for i in 0..3 {
                    expect[o * 3 + i] += e * xs[r][i];
                }
                expect[6 + o] += e;
            }
        }
        for (g, e) in grads.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn tanh_saturates_within_open_interval() {
        let stack = DenseStack::uniform(vec![2, 3], Activation::Tanh);
        let params = orthogonal(3, 2, 1.0, &mut rng_for(4, 0)).into_iter().chain([0.0; 3]).collect();
        let mut mlp = Mlp::new(stack, params).unwrap();
        let out = mlp.forward(&Matrix::from_rows(&[[1e3, -1e3]])).unwrap();
        assert!(out.data().iter().all(|v| v.abs() <= 1.0));
    }
}
