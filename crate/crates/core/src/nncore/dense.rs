use super::{gemm, Module, NnError, Param, Tensor};
use crate::rng::Rng;

/// Fully connected layer `y = x·W + b` with `W: [in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Self {
            weight: Param::uniform(&[inputs, outputs], inputs, rng),
            bias: Param::uniform(&[outputs], inputs, rng),
        }
    }

    pub fn from_params(weight: Tensor, bias: Tensor) -> Result<Self, NnError> {
        weight.expect_rank("dense weight", 2)?;
        bias.expect_shape("dense bias", &[weight.shape()[1]])?;
        Ok(Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    fn check_input(&self, x: &Tensor) -> Result<usize, NnError> {
        if x.rank() != 2 || x.shape()[1] != self.inputs() {
            return Err(NnError::Shape(format!(
                "dense input {:?} does not match weight {:?}",
                x.shape(),
                self.weight.value.shape()
            )));
        }
        Ok(x.shape()[0])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let batch = self.check_input(x)?;
        Tensor::from_vec(&[batch, self.outputs()], self.forward_raw(batch, x.data()))
    }

    /// Forward on a flat row-major `[rows, in]` slice.
    pub(crate) fn forward_raw(&self, rows: usize, x: &[f64]) -> Vec<f64> {
        let (din, dout) = (self.inputs(), self.outputs());
        let mut y = Vec::with_capacity(rows * dout);
        for _ in 0..rows {
            y.extend_from_slice(self.bias.value.data());
        }
        gemm(rows, din, dout, x, false, self.weight.value.data(), false, 1.0, &mut y);
        y
    }

    /// Accumulates `dW`, `db` and returns `dx`.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let batch = self.check_input(x)?;
        grad_out.expect_shape("dense grad_out", &[batch, self.outputs()])?;
        let dx = self.backward_raw(batch, x.data(), grad_out.data(), true);
        Tensor::from_vec(&[batch, self.inputs()], dx)
    }

    pub(crate) fn backward_raw(&mut self, rows: usize, x: &[f64], dy: &[f64], want_dx: bool) -> Vec<f64> {
        let (din, dout) = (self.inputs(), self.outputs());
        gemm(din, rows, dout, x, true, dy, false, 1.0, self.weight.grad.data_mut());
        let db = self.bias.grad.data_mut();
        for row in dy.chunks(dout) {
            for (g, v) in db.iter_mut().zip(row) {
                *g += v;
            }
        }
        if !want_dx {
            return Vec::new();
        }
        self.input_grad_raw(rows, dy)
    }

    /// `dx = dy·Wᵀ` without touching parameter gradients.
    pub(crate) fn input_grad_raw(&self, rows: usize, dy: &[f64]) -> Vec<f64> {
        let (din, dout) = (self.inputs(), self.outputs());
        let mut dx = vec![0.0; rows * din];
        gemm(rows, dout, din, dy, false, self.weight.value.data(), true, 0.0, &mut dx);
        dx
    }
}

impl Module for Dense {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight_passes_input_through() {
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let layer = Dense::from_params(w, Tensor::zeros(&[3])).unwrap();
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.5, 0.25, 0.0, 9.0]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_input_yields_broadcast_bias() {
        let mut rng = crate::rng::seeded(3);
        let layer = Dense::new(4, 2, &mut rng);
        let y = layer.forward(&Tensor::zeros(&[3, 4])).unwrap();
        for r in 0..3 {
            assert_eq!(y.row(r), layer.bias.value.data());
        }
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut rng = crate::rng::seeded(3);
        let layer = Dense::new(4, 2, &mut rng);
        let err = layer.forward(&Tensor::zeros(&[3, 5])).unwrap_err().to_string();
        assert!(err.contains("[3, 5]") && err.contains("[4, 2]"), "{err}");
    }
}
