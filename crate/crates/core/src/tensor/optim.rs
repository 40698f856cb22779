use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

/// Adaptive-moment optimizer state with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Adam {
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_EPS,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }

    pub(crate) fn restore(&mut self, step: u64, first: Vec<Tensor>, second: Vec<Tensor>) -> Result<()> {
        for (m, new) in self.first.iter().zip(&first).chain(self.second.iter().zip(&second)) {
            if m.shape() != new.shape() {
                return Err(Error::shape("adam_restore", m.shape(), new.shape()));
            }
        }
        if first.len() != self.first.len() || second.len() != self.second.len() {
            return Err(Error::InvalidArgument("optimizer state length mismatch".into()));
        }
        self.step = step;
        self.first = first;
        self.second = second;
        Ok(())
    }

    /// Applies one update. Gradients are given in store order.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::shape("adam", p.shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (i, (_, p)) in params.values_mut().enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (j, (pv, &gv)) in p.data_mut().iter_mut().zip(grads[i].data()).enumerate() {
                m[j] = b1 * m[j] + (1.0 - b1) * gv;
                v[j] = b2 * v[j] + (1.0 - b2) * gv * gv;
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::scalar(v)).unwrap();
        p
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = store(0.37);
        let mut opt = Adam::new(&p, 1e-4);
        opt.step(&mut p, &[Tensor::scalar(0.0)]).unwrap();
        assert_eq!(p.get("x").unwrap().item(), 0.37);
        assert_eq!(opt.moments().0[0].item(), 0.0);
        assert_eq!(opt.moments().1[0].item(), 0.0);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = v̂ = 1 at t = 1, so the step is lr / (1 + eps).
        let mut p = store(1.0);
        let mut opt = Adam::new(&p, 1e-4);
        opt.step(&mut p, &[Tensor::scalar(1.0)]).unwrap();
        let expected = 1.0 - 1e-4 / (1.0 + 1e-8);
        assert!((p.get("x").unwrap().item() - expected).abs() < 1e-15);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = store(0.5);
            let mut opt = Adam::new(&p, 1e-3);
            for k in 0..10 {
                opt.step(&mut p, &[Tensor::scalar((k as f64).sin())]).unwrap();
            }
            p.get("x").unwrap().item().to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = store(0.0);
        let mut opt = Adam::new(&p, 1e-4);
        let err = opt.step(&mut p, &[Tensor::scalar(f64::NAN)]).unwrap_err();
        assert!(err.to_string().contains("x"), "{err}");
        assert_eq!(opt.step_count(), 0);
    }
}
