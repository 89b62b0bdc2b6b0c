use crate::tensor::reduce_mean;
use crate::{Error, Real, Result, Tensor};

/// EMA estimates of a neuron's feature mean `μ` and elementwise second moment `χ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub mean: Tensor,
    pub second: Tensor,
    /// EMA decay in `[0, 1)`; 0 keeps only the latest batch.
    pub decay: Real,
    pub initialized: bool,
}

impl MomentState {
    pub fn new(dim: usize, decay: Real) -> Self {
        MomentState {
            mean: Tensor::zeros(&[dim]),
            second: Tensor::zeros(&[dim]),
            decay,
            initialized: false,
        }
    }

    /// Moments of a single batch.
    pub fn from_batch(x: &Tensor) -> Result<Self> {
        let mut s = MomentState::new(x.cols(), 0.0);
        s.update(x)?;
        Ok(s)
    }

    /// Folds in one batch. The first batch is copied rather than blended with
    /// the zero initialization.
    pub fn update(&mut self, x: &Tensor) -> Result<()> {
        if x.ndim() != 2 || x.cols() != self.mean.len() {
            return Err(Error::dimension(format!(
                "moment update of width {} with batch {:?}",
                self.mean.len(),
                x.shape()
            )));
        }
        if x.rows() == 0 {
            return Err(Error::Degenerate("moment update with an empty batch".into()));
        }
        let mean = reduce_mean(x)?;
        let second = reduce_mean(&x.map(|v| v * v))?;
        if !self.initialized {
            self.mean = mean;
            self.second = second;
            self.initialized = true;
            return Ok(());
        }
        let b = self.decay;
        for (m, v) in self.mean.data_mut().iter_mut().zip(mean.data()) {
            *m = b * *m + (1.0 - b) * v;
        }
        for (m, v) in self.second.data_mut().iter_mut().zip(second.data()) {
            *m = b * *m + (1.0 - b) * v;
        }
        Ok(())
    }

    /// `χ − μ⊙μ`, the diagonal of the feature covariance.
    pub fn variance(&self) -> Tensor {
        let mut v = self.second.clone();
        for (s, m) in v.data_mut().iter_mut().zip(self.mean.data()) {
            *s -= m * m;
        }
        v
    }
}

/// Functional form of [`MomentState::update`].
pub fn update_moments(state: &MomentState, x: &Tensor) -> Result<MomentState> {
    let mut next = state.clone();
    next.update(x)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn first_batch_is_copied() {
        let s = MomentState::new(2, 0.9);
        let x = Tensor::from_rows(&[[1.0, 3.0]]).unwrap();
        let s = update_moments(&s, &x).unwrap();
        assert_eq!(s.mean.data(), &[1.0, 3.0]);
        assert_eq!(s.second.data(), &[1.0, 9.0]);
    }

    #[test]
    fn ema_formula() {
        let mut s = MomentState::new(1, 0.9);
        s.update(&Tensor::from_rows(&[[0.0]]).unwrap()).unwrap();
        s.update(&Tensor::from_rows(&[[1.0]]).unwrap()).unwrap();
        assert!((s.mean.data()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn constant_stream_converges() {
        let mut s = MomentState::new(1, 0.9);
        s.update(&Tensor::from_rows(&[[10.0]]).unwrap()).unwrap();
        for _ in 0..400 {
            s.update(&Tensor::from_rows(&[[2.5], [2.5]]).unwrap()).unwrap();
        }
        assert!((s.mean.data()[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_is_degenerate() {
        let mut s = MomentState::new(3, 0.5);
        assert!(matches!(s.update(&Tensor::zeros(&[0, 3])), Err(Error::Degenerate(_))));
    }

    proptest! {
        #[test]
        fn second_moment_and_variance_stay_nonnegative(seed in 0u64..500, decay in 0.0..0.999 as Real, batches in 1usize..6) {
            let mut g = rng::stream(seed, 0);
            let mut s = MomentState::new(4, decay);
            for _ in 0..batches {
                let x = rng::normal(&mut g, &[3, 4], 3.0);
                s.update(&x).unwrap();
                prop_assert!(s.second.data().iter().all(|&c| c >= 0.0));
                prop_assert!(s.variance().data().iter().all(|&v| v >= -1e-12));
            }
        }
    }
}
