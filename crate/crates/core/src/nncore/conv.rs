use super::{gemm, Module, NnError, Param, Tensor};
use crate::rng::Rng;

/// Valid (unpadded), stride-1 1D cross-correlation.
///
/// Kernels are `[C_out, C_in, K]`; `y[b, o, l] = bias[o] + Σ_{c,k} w[o, c, k] · x[b, c, l + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub weight: Param,
    pub bias: Param,
}

impl Conv1d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut Rng) -> Self {
        let fan_in = in_channels * kernel;
        Self {
            weight: Param::uniform(&[out_channels, in_channels, kernel], fan_in, rng),
            bias: Param::uniform(&[out_channels], fan_in, rng),
        }
    }

    pub fn from_params(weight: Tensor, bias: Tensor) -> Result<Self, NnError> {
        weight.expect_rank("conv1d weight", 3)?;
        bias.expect_shape("conv1d bias", &[weight.shape()[0]])?;
        Ok(Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape()[2]
    }

    pub fn output_len(&self, len: usize) -> Result<usize, NnError> {
        if self.kernel() > len {
            return Err(NnError::Shape(format!(
                "conv1d kernel {} longer than input length {len}",
                self.kernel()
            )));
        }
        Ok(len - self.kernel() + 1)
    }

    fn dims(&self, x: &Tensor) -> Result<(usize, usize, usize), NnError> {
        x.expect_rank("conv1d input", 3)?;
        let (batch, cin, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if cin != self.in_channels() {
            return Err(NnError::Shape(format!(
                "conv1d input {:?} does not match kernel {:?}",
                x.shape(),
                self.weight.value.shape()
            )));
        }
        Ok((batch, len, self.output_len(len)?))
    }

    /// `cols[(c·K + k), l] = x[c, l + k]` for one sample.
    fn im2col(&self, x: &[f64], len: usize, out_len: usize, cols: &mut [f64]) {
        let k = self.kernel();
        for c in 0..self.in_channels() {
            let src = &x[c * len..(c + 1) * len];
            for kk in 0..k {
                let row = &mut cols[(c * k + kk) * out_len..(c * k + kk + 1) * out_len];
                row.copy_from_slice(&src[kk..kk + out_len]);
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (batch, len, out_len) = self.dims(x)?;
        let (cin, cout, k) = (self.in_channels(), self.out_channels(), self.kernel());
        let mut y = vec![0.0; batch * cout * out_len];
        let mut cols = vec![0.0; cin * k * out_len];
        for b in 0..batch {
            self.im2col(&x.data()[b * cin * len..(b + 1) * cin * len], len, out_len, &mut cols);
            let yb = &mut y[b * cout * out_len..(b + 1) * cout * out_len];
            for (o, row) in yb.chunks_mut(out_len).enumerate() {
                row.fill(self.bias.value.data()[o]);
            }
            gemm(
                cout,
                cin * k,
                out_len,
                self.weight.value.data(),
                false,
                &cols,
                false,
                1.0,
                yb,
            );
        }
        Tensor::from_vec(&[batch, cout, out_len], y)
    }

    /// Accumulates kernel and bias gradients, returns `dx`.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let (batch, len, out_len) = self.dims(x)?;
        let (cin, cout, k) = (self.in_channels(), self.out_channels(), self.kernel());
        grad_out.expect_shape("conv1d grad_out", &[batch, cout, out_len])?;
        let mut dx = vec![0.0; batch * cin * len];
        let mut cols = vec![0.0; cin * k * out_len];
        let mut dcols = vec![0.0; cin * k * out_len];
        for b in 0..batch {
            let dy = &grad_out.data()[b * cout * out_len..(b + 1) * cout * out_len];
            self.im2col(&x.data()[b * cin * len..(b + 1) * cin * len], len, out_len, &mut cols);
            gemm(
                cout,
                out_len,
                cin * k,
                dy,
                false,
                &cols,
                true,
                1.0,
                self.weight.grad.data_mut(),
            );
            for (g, row) in self.bias.grad.data_mut().iter_mut().zip(dy.chunks(out_len)) {
                *g += row.iter().sum::<f64>();
            }
            gemm(
                cin * k,
                cout,
                out_len,
                self.weight.value.data(),
                true,
                dy,
                false,
                0.0,
                &mut dcols,
            );
            let dxb = &mut dx[b * cin * len..(b + 1) * cin * len];
            for c in 0..cin {
                for kk in 0..k {
                    let row = &dcols[(c * k + kk) * out_len..(c * k + kk + 1) * out_len];
                    for (d, v) in dxb[c * len + kk..c * len + kk + out_len].iter_mut().zip(row) {
                        *d += v;
                    }
                }
            }
        }
        Tensor::from_vec(&[batch, cin, len], dx)
    }
}

impl Module for Conv1d {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}

/// Non-overlapping max pooling; a trailing remainder shorter than the
/// window is dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool1d {
    pub window: usize,
}

/// Flat argmax positions into the pooled input, one per output element.
#[derive(Clone, Debug)]
pub struct PoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl MaxPool1d {
    pub fn new(window: usize) -> Result<Self, NnError> {
        if window == 0 {
            return Err(NnError::Shape("max-pool window must be at least 1".into()));
        }
        Ok(Self { window })
    }

    pub fn output_len(&self, len: usize) -> usize {
        len / self.window
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, PoolCache), NnError> {
        x.expect_rank("maxpool1d input", 3)?;
        let (batch, chans, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let out_len = self.output_len(len);
        let mut y = Vec::with_capacity(batch * chans * out_len);
        let mut argmax = Vec::with_capacity(batch * chans * out_len);
        for (r, row) in x.data().chunks(len.max(1)).enumerate().take(batch * chans) {
            for w in 0..out_len {
                let start = w * self.window;
                let mut best = start;
                for i in start + 1..start + self.window {
                    // strict comparison keeps the first index on ties
                    if row[i] > row[best] {
                        best = i;
                    }
                }
                y.push(row[best]);
                argmax.push(r * len + best);
            }
        }
        let cache = PoolCache {
            input_shape: x.shape().to_vec(),
            argmax,
        };
        Ok((Tensor::from_vec(&[batch, chans, out_len], y)?, cache))
    }

    pub fn backward(&self, cache: &PoolCache, grad_out: &Tensor) -> Result<Tensor, NnError> {
        if grad_out.len() != cache.argmax.len() {
            return Err(NnError::Shape(format!(
                "maxpool1d grad_out {:?} does not match cached output of {} values",
                grad_out.shape(),
                cache.argmax.len()
            )));
        }
        let mut dx = Tensor::zeros(&cache.input_shape);
        for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
            dx.data_mut()[idx] += g;
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cross_correlation() {
        let conv = Conv1d::from_params(
            Tensor::from_vec(&[1, 1, 3], vec![1.0, 0.0, -1.0]).unwrap(),
            Tensor::zeros(&[1]),
        )
        .unwrap();
        let x = Tensor::from_vec(&[1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(conv.forward(&x).unwrap().data(), &[-2.0, -2.0]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let conv = Conv1d::from_params(Tensor::full(&[1, 1, 1], 1.0), Tensor::zeros(&[1])).unwrap();
        let x = Tensor::from_vec(&[2, 1, 5], (0..10).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn kernel_longer_than_input_is_rejected() {
        let conv = Conv1d::from_params(Tensor::zeros(&[1, 1, 5]), Tensor::zeros(&[1])).unwrap();
        assert!(conv.forward(&Tensor::zeros(&[1, 1, 4])).is_err());
    }

    #[test]
    fn pool_forward_and_routing() {
        let pool = MaxPool1d::new(2).unwrap();
        let x = Tensor::from_vec(&[1, 1, 4], vec![1.0, 3.0, 2.0, 5.0]).unwrap();
        let (y, cache) = pool.forward(&x).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0]);
        let dx = pool.backward(&cache, &Tensor::full(&[1, 1, 2], 1.0)).unwrap();
        assert_eq!(dx.data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn pool_ties_route_to_first_and_drop_remainder() {
        let pool = MaxPool1d::new(2).unwrap();
        let x = Tensor::from_vec(&[1, 1, 5], vec![4.0, 4.0, 0.0, 1.0, 9.0]).unwrap();
        let (y, cache) = pool.forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0, 1.0]);
        let dx = pool.backward(&cache, &Tensor::full(&[1, 1, 2], 2.0)).unwrap();
        assert_eq!(dx.data(), &[2.0, 0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn pool_window_one_is_identity() {
        let pool = MaxPool1d::new(1).unwrap();
        let x = Tensor::from_vec(&[1, 2, 3], vec![1.0, -1.0, 2.0, 0.5, 0.5, 3.0]).unwrap();
        assert_eq!(pool.forward(&x).unwrap().0, x);
        assert!(MaxPool1d::new(0).is_err());
    }
}
