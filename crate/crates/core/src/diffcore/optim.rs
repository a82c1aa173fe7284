use super::{DiffError, Tensor};

/// Plain SGD with optional classical momentum and L2 weight decay:
///
/// ```text
/// d = g + wd·p
/// v = μ·v + d        (v = d when μ = 0)
/// p = p − lr·v
/// ```
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), DiffError> {
        if params.len() != grads.len() {
            return Err(DiffError::CountMismatch {
                op: "sgd_step",
                expected: params.len(),
                found: grads.len(),
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(DiffError::ShapeMismatch {
                    op: "sgd_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }
        if self.momentum > 0.0 && self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        }

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (lr, wd, mu) = (self.lr, self.weight_decay, self.momentum);
            if mu > 0.0 {
                let v = self.velocity[i].data_mut();
                for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
                    *vv = mu * *vv + gv + wd * *pv;
                    *pv -= lr * *vv;
                }
            } else {
                for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                    *pv -= lr * (gv + wd * *pv);
                }
            }
            if !p.is_finite() {
                return Err(DiffError::NonFinite { op: "sgd_step" });
            }
        }
        Ok(())
    }
}
