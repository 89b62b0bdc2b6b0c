use crate::autodiff::{forward, Graph, ParamSet};
use crate::optim::{Optimizer, StepReport};
use crate::{Error, Real, Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub t: u64,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
}

impl AdamState {
    pub fn new(like: &ParamSet) -> Self {
        AdamState {
            m: ParamSet::zeros_like(like),
            v: ParamSet::zeros_like(like),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ParamSet, grads: &ParamSet, state: &mut AdamState, lr: Real) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dimension("adam: parameters, gradients and state disagree"));
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (i, g) in grads.tensors().iter().enumerate() {
        let p = &mut params.tensors_mut()[i];
        if p.shape() != g.shape() {
            return Err(Error::dimension(format!(
                "adam: parameter {:?} with gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
        let m = state.m.tensors_mut()[i].data_mut();
        let v = state.v.tensors_mut()[i].data_mut();
        for (k, (pv, gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[k] = b1 * m[k] + (1.0 - b1) * gv;
            v[k] = b2 * v[k] + (1.0 - b2) * gv * gv;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            *pv -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Adam with a fixed learning rate.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: Real,
    pub state: Option<AdamState>,
}

impl Adam {
    pub fn new(lr: Real) -> Self {
        Adam { lr, state: None }
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn step(&mut self, graph: &Graph, params: &mut ParamSet, batch: &Tensor, labels: &Tensor) -> Result<StepReport> {
        let (loss, grads) = {
            let (loss, mut tape) = forward(graph, params, batch, labels)?;
            (loss, tape.backward()?)
        };
        let state = self.state.get_or_insert_with(|| AdamState::new(params));
        adam_step(params, &grads, state, self.lr)?;
        if !params.is_finite() {
            return Err(Error::numeric("adam produced non-finite parameters"));
        }
        Ok(StepReport {
            loss,
            alpha: Real::NAN,
            z: Real::NAN,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(values: &[Real]) -> ParamSet {
        ParamSet::new(vec![Tensor::vector(values.to_vec())])
    }

    #[test]
    fn first_step_moves_by_lr_in_sign_direction() {
        let mut p = set(&[1.0, 1.0, 1.0]);
        let g = set(&[0.3, -2.0, 1e-3]);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, 0.01).unwrap();
        let moved: Vec<Real> = p.tensors()[0].data().iter().map(|x| x - 1.0).collect();
        for (d, gv) in moved.iter().zip(g.tensors()[0].data()) {
            let expected = -0.01 * gv / (gv.abs() + 1e-8);
            assert!((d - expected).abs() < 1e-12, "{d} vs {expected}");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = set(&[0.5, -0.25]);
        let mut s = AdamState::new(&p);
        for _ in 0..3 {
            adam_step(&mut p, &set(&[0.0, 0.0]), &mut s, 0.1).unwrap();
        }
        assert_eq!(p, set(&[0.5, -0.25]));
    }

    #[test]
    fn first_step_is_gradient_scale_invariant() {
        let g = set(&[0.7, -0.02, 3.0]);
        let g2 = ParamSet::new(vec![g.tensors()[0].scale(2.0)]);
        let (mut a, mut b) = (set(&[0.0; 3]), set(&[0.0; 3]));
        let mut sa = AdamState::new(&a);
        adam_step(&mut a, &g, &mut sa, 1e-3).unwrap();
        let mut sb = AdamState::new(&b);
        adam_step(&mut b, &g2, &mut sb, 1e-3).unwrap();
        // update = -lr·g/(|g| + eps); doubling g changes it by at most lr·eps/|g|.
        let diff = a.tensors()[0].sub(&b.tensors()[0]).unwrap().max_abs();
        assert!(diff < 1e-3 * 1e-8 / 0.02, "{diff}");
    }

    #[test]
    fn second_moment_stays_nonnegative() {
        let mut p = set(&[0.0, 0.0]);
        let mut s = AdamState::new(&p);
        for k in 0..10 {
            let g = set(&[(k as Real).sin(), -(k as Real)]);
            adam_step(&mut p, &g, &mut s, 0.1).unwrap();
            assert!(s.v.tensors()[0].data().iter().all(|&v| v >= 0.0));
        }
    }
}
