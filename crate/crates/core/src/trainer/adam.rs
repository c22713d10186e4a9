use crate::error::{Error, Result};
use crate::numcore::DenseMatrix;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&(r, c)| DenseMatrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| DenseMatrix::zeros(r, c)).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut DenseMatrix], grads: &[DenseMatrix]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape("adam", format!("{} params, {} grads", params.len(), grads.len())));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[k].shape() {
                return Err(Error::shape("adam", format!("tensor {k}: {:?} vs {:?}", p.shape(), g.shape())));
            }
            let (m, v) = (self.m[k].as_mut_slice(), self.v[k].as_mut_slice());
            for (((x, &gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                *x -= self.lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
