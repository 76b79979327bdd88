//! Desk-scale experiment drivers: density comparison, Fisher maps,
//! parameter estimation and MSE studies.
//!
//! Every driver is deterministic given its configuration: trials run on a
//! worker pool but results are collected in a fixed order.

mod config;
mod density;
mod fisher;
mod mse;
mod params;

pub use config::{ExperimentConfig, Scene, SceneConfig, XAxis};
pub use density::{run_density_compare, DensityReport, DensityRow, DensityTrace};
pub use fisher::{fisher_table, run_fisher_map, FisherRow};
pub use mse::{loglog_interpolate, run_mse_study, MseRow, MseStudy, TrialRecord};
pub use params::{run_param_estimation, ParamReport, ParamRow, ParamTrial};

use rand::Rng;

use crate::error::{Error, Result};
use crate::simulate::{rng_for, STREAM_DELAY};

/// Runs `f` on a dedicated pool with `threads` workers, or on the global
/// pool when `threads` is `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// `½ Σ |p_i − q_i|` after normalizing both vectors to unit sum.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    0.5 * p
        .iter()
        .zip(q)
        .map(|(a, b)| (a / sp - b / sq).abs())
        .sum::<f64>()
}

/// Sums consecutive groups of `factor` bins.
pub fn aggregate(values: &[f64], factor: usize) -> Vec<f64> {
    values
        .chunks(factor.max(1))
        .map(|c| c.iter().sum())
        .collect()
}

/// True delay of a trial: the configured value, or uniform on `[0, t_r)`.
pub(crate) fn trial_delay(fixed: Option<f64>, t_r: f64, seed: u64) -> f64 {
    match fixed {
        Some(t) => t.rem_euclid(t_r),
        None => rng_for(seed, STREAM_DELAY).random::<f64>() * t_r,
    }
}

/// Mean and standard error of the mean.
pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Linear-interpolated sample quantile.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_basics() {
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 2.0]), 1.0);
        assert!(total_variation(&[1.0, 3.0], &[2.0, 6.0]).abs() < 1e-15);
    }

    #[test]
    fn aggregation_sums_groups() {
        assert_eq!(aggregate(&[1.0, 2.0, 3.0, 4.0], 2), vec![3.0, 7.0]);
    }

    #[test]
    fn summary_statistics() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
    }

    #[test]
    fn fixed_delay_is_used_verbatim() {
        assert_eq!(trial_delay(Some(130.0), 100.0, 9), 30.0);
        let a = trial_delay(None, 100.0, 9);
        assert_eq!(a, trial_delay(None, 100.0, 9));
        assert!((0.0..100.0).contains(&a));
    }
}
