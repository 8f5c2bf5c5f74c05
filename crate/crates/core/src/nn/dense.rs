//! Batched forward and backward passes.
//!
//! Produces the same numbers as the scalar tape path in `nn` (up to
//! summation order), but one matrix product per layer instead of one tape
//! node per multiply-add. Rows are split into chunks that run under the
//! chosen [`Execution`] policy; chunk gradients are summed in chunk order.

use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis};

use super::{Activation, Network, NnError};
use crate::exec::Execution;

const MIN_CHUNK_ROWS: usize = 64;

/// Layer activations of one chunk, input first and output last.
#[derive(Debug, Clone)]
pub struct BatchCache {
    activations: Vec<Array2<f64>>,
}

impl BatchCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().unwrap()
    }
}

/// Forward state of a whole batch, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchForward {
    ranges: Vec<Range<usize>>,
    caches: Vec<BatchCache>,
    rows: usize,
    width: usize,
}

impl BatchForward {
    /// Network outputs, `rows x output_width`.
    pub fn output(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.width));
        for (r, c) in self.ranges.iter().zip(&self.caches) {
            out.slice_mut(s![r.clone(), ..]).assign(c.output());
        }
        out
    }

    /// First output column as a vector.
    pub fn output_column(&self) -> Vec<f64> {
        self.caches
            .iter()
            .flat_map(|c| c.output().column(0).to_vec())
            .collect()
    }
}

impl Network {
    fn weight_view(&self, k: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.sizes[k + 1], self.sizes[k]), self.weights(k)).unwrap()
    }

    /// Forward pass over the rows of `x`, keeping every activation.
    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<BatchCache, NnError> {
        if x.ncols() != self.input_width() {
            return Err(NnError::InputWidth {
                expected: self.input_width(),
                got: x.ncols(),
            });
        }
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        activations.push(x.to_owned());
        for k in 0..self.num_layers() {
            let w = self.weight_view(k);
            let b = ndarray::ArrayView1::from(self.biases(k));
            let mut z = activations[k].dot(&w.t());
            z += &b;
            if self.activations[k] == Activation::Tanh {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        Ok(BatchCache { activations })
    }

    /// Backpropagates `d_out` (dLoss/dOutput per row), adding parameter
    /// gradients into `grad` and returning dLoss/dInput per row.
    pub fn backward_cached(
        &self,
        cache: &BatchCache,
        d_out: ArrayView2<'_, f64>,
        grad: &mut [f64],
    ) -> Array2<f64> {
        assert_eq!(grad.len(), self.num_params());
        assert_eq!(d_out.dim(), cache.output().dim());
        let mut delta = d_out.to_owned();
        let last = self.num_layers() - 1;
        if self.activations[last] == Activation::Tanh {
            delta.zip_mut_with(cache.output(), |d, &y| *d *= 1.0 - y * y);
        }
        for k in (0..self.num_layers()).rev() {
            let a_prev = &cache.activations[k];
            let (w_off, b_off) = self.layer_offsets(k);
            let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
            {
                let mut gw =
                    ArrayViewMut2::from_shape((n_out, n_in), &mut grad[w_off..b_off]).unwrap();
                general_mat_mul(1.0, &delta.t(), a_prev, 1.0, &mut gw);
            }
            for (g, s) in grad[b_off..b_off + n_out]
                .iter_mut()
                .zip(delta.sum_axis(Axis(0)))
            {
                *g += s;
            }
            let mut d_prev = delta.dot(&self.weight_view(k));
            if k > 0 {
                let act = self.activations[k - 1];
                d_prev.zip_mut_with(a_prev, |d, &y| *d *= act.derivative_from_output(y));
            }
            delta = d_prev;
        }
        delta
    }

    /// Chunked forward pass under `exec`.
    pub fn forward_batch(
        &self,
        x: ArrayView2<'_, f64>,
        exec: Execution,
    ) -> Result<BatchForward, NnError> {
        let ranges = exec.chunks(x.nrows(), MIN_CHUNK_ROWS);
        let caches = exec
            .map(&ranges, |r| self.forward_cached(x.slice(s![r.clone(), ..])))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BatchForward {
            ranges,
            caches,
            rows: x.nrows(),
            width: self.output_width(),
        })
    }

    /// Chunked backward pass; returns (parameter gradient, input gradient).
    pub fn backward_batch(
        &self,
        fwd: &BatchForward,
        d_out: ArrayView2<'_, f64>,
        exec: Execution,
    ) -> (Vec<f64>, Array2<f64>) {
        let idx: Vec<usize> = (0..fwd.ranges.len()).collect();
        let parts = exec.map(&idx, |&i| {
            let mut g = vec![0.0; self.num_params()];
            let d = self.backward_cached(
                &fwd.caches[i],
                d_out.slice(s![fwd.ranges[i].clone(), ..]),
                &mut g,
            );
            (g, d)
        });
        let mut grad = vec![0.0; self.num_params()];
        let mut d_in = Array2::zeros((fwd.rows, self.input_width()));
        for ((g, d), r) in parts.into_iter().zip(&fwd.ranges) {
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            d_in.slice_mut(s![r.clone(), ..]).assign(&d);
        }
        (grad, d_in)
    }

    /// Outputs for every row of `x` without keeping activations.
    pub fn predict_batch(
        &self,
        x: ArrayView2<'_, f64>,
        exec: Execution,
    ) -> Result<Array2<f64>, NnError> {
        Ok(self.forward_batch(x, exec)?.output())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use ndarray::Array2;

    fn sample_inputs(rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(i, j)| ((i * 7 + j * 3) as f64 * 0.37).sin())
    }

    #[test]
    fn batch_forward_matches_single() {
        let net = Network::new(&[2, 9, 7, 1], Activation::Tanh, 5).unwrap();
        let x = sample_inputs(150, 2);
        for exec in [Execution::Sequential, Execution::Parallel] {
            let y = net.predict_batch(x.view(), exec).unwrap();
            for i in 0..x.nrows() {
                let single = net.forward(&[x[[i, 0]], x[[i, 1]]]).unwrap()[0];
                assert!((y[[i, 0]] - single).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn batch_gradients_match_tape() {
        let mut net = Network::new(&[3, 5, 4, 2], Activation::Tanh, 8).unwrap();
        for (i, p) in net.params_mut().iter_mut().enumerate() {
            *p += 0.05 * (i as f64 * 0.3).cos();
        }
        let x = sample_inputs(130, 3);
        // loss = sum_i (y_i0^2 + 3 y_i1)
        let fwd = net.forward_batch(x.view(), Execution::Parallel).unwrap();
        let out = fwd.output();
        let mut d_out = Array2::zeros(out.dim());
        for i in 0..out.nrows() {
            d_out[[i, 0]] = 2.0 * out[[i, 0]];
            d_out[[i, 1]] = 3.0;
        }
        let (grad, d_in) = net.backward_batch(&fwd, d_out.view(), Execution::Parallel);

        let tape = Tape::new();
        let params = net.lift_params(&tape);
        let mut inputs = Vec::new();
        let mut loss = tape.lift(0.0);
        for i in 0..x.nrows() {
            let xi: Vec<_> = x.row(i).iter().map(|&v| tape.lift(v)).collect();
            let y = net.forward_tape(&params, &xi).unwrap();
            loss = loss + y[0] * y[0] + y[1] * 3.0;
            inputs.push(xi);
        }
        let g = tape.backward(loss).unwrap();
        for (a, p) in grad.iter().zip(&params) {
            let b = g.wrt(*p);
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
        }
        for (i, xi) in inputs.iter().enumerate() {
            for (j, v) in xi.iter().enumerate() {
                assert!((d_in[[i, j]] - g.wrt(*v)).abs() < 1e-10);
            }
        }
    }
}
