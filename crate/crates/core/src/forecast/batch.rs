use twinforecast_autodiff::Real;

use crate::features::WindowSample;

/// Scaled model inputs for a batch of windows, sample-major.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub size: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub covariates: usize,
    /// `[size, lookback]`
    pub past_target: Vec<T>,
    /// `[size, lookback, covariates]`
    pub past_covariates: Vec<T>,
    /// `[size, horizon, covariates]`
    pub future_covariates: Vec<T>,
    /// Scaled future target, `[size, horizon]`.
    pub target: Vec<T>,
}

impl<T: Real> Batch<T> {
    /// All samples must share lookback, horizon and covariate count.
    pub fn from_samples(samples: &[WindowSample<'_>]) -> Self {
        let first = samples.first().expect("non-empty batch");
        let (l, h, c) = (first.lookback(), first.horizon(), first.num_covariates());
        let n = samples.len();
        let mut b = Batch {
            size: n,
            lookback: l,
            horizon: h,
            covariates: c,
            past_target: Vec::with_capacity(n * l),
            past_covariates: Vec::with_capacity(n * l * c),
            future_covariates: Vec::with_capacity(n * h * c),
            target: Vec::with_capacity(n * h),
        };
        for s in samples {
            debug_assert_eq!((s.lookback(), s.horizon(), s.num_covariates()), (l, h, c));
            b.past_target.extend(s.past_target().iter().map(|&v| T::of(v)));
            b.past_covariates.extend(s.past_covariates().iter().map(|&v| T::of(v)));
            b.future_covariates
                .extend(s.future_covariates().iter().map(|&v| T::of(v)));
            b.target.extend(s.future_target_scaled().iter().map(|&v| T::of(v)));
        }
        b
    }

    pub fn cast<U: Real>(&self) -> Batch<U> {
        let c = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect();
        Batch {
            size: self.size,
            lookback: self.lookback,
            horizon: self.horizon,
            covariates: self.covariates,
            past_target: c(&self.past_target),
            past_covariates: c(&self.past_covariates),
            future_covariates: c(&self.future_covariates),
            target: c(&self.target),
        }
    }
}
