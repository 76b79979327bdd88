//! Periodic arrival-intensity model: a Gaussian return pulse on a constant
//! background, repeated every illumination period.
//!
//! All times are in nanoseconds, rates in photons/ns, and `signal` /
//! `background` are expected photons per illumination period.

use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// Scene and acquisition parameters that define the arrival intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneModel {
    /// Illumination period (ns).
    pub t_r: f64,
    /// Detector dead time (ns).
    pub t_d: f64,
    /// Half pulse width (ns).
    pub sigma: f64,
    /// Expected signal photons per period.
    #[serde(rename = "S")]
    pub signal: f64,
    /// Expected background photons per period.
    #[serde(rename = "B")]
    pub background: f64,
    /// Round-trip delay 2z/c (ns), in `[0, t_r)`.
    pub tau: f64,
}

impl SceneModel {
    pub fn new(
        t_r: f64,
        t_d: f64,
        sigma: f64,
        signal: f64,
        background: f64,
        tau: f64,
    ) -> Result<Self> {
        let model = SceneModel {
            t_r,
            t_d,
            sigma,
            signal,
            background,
            tau,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if !(self.t_r.is_finite() && self.t_r > 0.0) {
            return bad(format!("t_r must be positive, got {}", self.t_r));
        }
        if !(self.t_d.is_finite() && self.t_d >= 0.0) {
            return bad(format!("t_d must be non-negative, got {}", self.t_d));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        // Only the three nearest periodic images of the pulse are summed.
        if self.sigma >= self.t_r / 8.0 {
            return bad(format!(
                "sigma = {} must be below t_r / 8 = {}",
                self.sigma,
                self.t_r / 8.0
            ));
        }
        if !(self.signal.is_finite() && self.signal >= 0.0) {
            return bad(format!("S must be non-negative, got {}", self.signal));
        }
        if !(self.background.is_finite() && self.background >= 0.0) {
            return bad(format!("B must be non-negative, got {}", self.background));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0 && self.tau < self.t_r) {
            return bad(format!("tau must lie in [0, t_r), got {}", self.tau));
        }
        Ok(())
    }

    /// Total flux Λ = S + B per period.
    pub fn total_flux(&self) -> f64 {
        self.signal + self.background
    }

    /// Signal-to-background ratio, undefined without background.
    pub fn sbr(&self) -> Option<f64> {
        (self.background > 0.0).then(|| self.signal / self.background)
    }

    /// Effective dead time x_d = t_d mod t_r.
    pub fn dead_time_mod(&self) -> f64 {
        self.t_d.rem_euclid(self.t_r)
    }

    /// Background rate λ_b = B / t_r (photons/ns).
    pub fn background_rate(&self) -> f64 {
        self.background / self.t_r
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        SceneModel {
            tau: tau.rem_euclid(self.t_r),
            ..*self
        }
    }

    pub fn with_flux(&self, signal: f64, background: f64) -> Self {
        SceneModel {
            signal,
            background,
            ..*self
        }
    }

    /// Normalizer of the three-image pulse over one period.
    fn pulse_mass(&self) -> f64 {
        let s = self.sigma;
        normal_cdf((2.0 * self.t_r - self.tau) / s) - normal_cdf((-self.t_r - self.tau) / s)
    }

    /// Unit-mass pulse shape s(x − τ) at phase `x ∈ [0, t_r)`.
    fn pulse(&self, x: f64) -> f64 {
        let s = self.sigma;
        let norm = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt() * self.pulse_mass());
        let d = x - self.tau;
        [-self.t_r, 0.0, self.t_r]
            .iter()
            .map(|shift| {
                let z = (d - shift) / s;
                (-0.5 * z * z).exp()
            })
            .sum::<f64>()
            * norm
    }

    /// ∫₀ˣ pulse for `x ∈ [0, t_r]`.
    fn pulse_cdf(&self, x: f64) -> f64 {
        let s = self.sigma;
        let acc: f64 = [-self.t_r, 0.0, self.t_r]
            .iter()
            .map(|shift| {
                let c = self.tau + shift;
                normal_cdf_diff((0.0 - c) / s, (x - c) / s)
            })
            .sum();
        acc / self.pulse_mass()
    }

    /// Expected count from the start of a period to phase `x ∈ [0, t_r]`.
    pub(crate) fn phase_cumulative(&self, x: f64) -> f64 {
        if x >= self.t_r {
            return self.total_flux();
        }
        self.background * x / self.t_r + self.signal * self.pulse_cdf(x)
    }

    /// Expected count on `[0, t)` for any real `t` (negative allowed).
    fn cumulative_from_zero(&self, t: f64) -> f64 {
        let k = (t / self.t_r).floor();
        let x = (t - k * self.t_r).clamp(0.0, self.t_r);
        k * self.total_flux() + self.phase_cumulative(x)
    }
}

/// Arrival intensity λ(x) in photons/ns; `x` is taken modulo `t_r`.
pub fn intensity_at(model: &SceneModel, x: f64) -> f64 {
    let phase = x.rem_euclid(model.t_r);
    model.background_rate() + model.signal * model.pulse(phase)
}

/// Expected number of arrivals on `[a, b]`, i.e. ∫ₐᵇ λ.
pub fn cumulative_intensity(model: &SceneModel, a: f64, b: f64) -> Result<f64> {
    if a > b || a.is_nan() || b.is_nan() {
        return Err(Error::InvalidInterval { a, b });
    }
    if a == b {
        return Ok(0.0);
    }
    // Split off whole periods so long spans stay exact.
    let periods = ((b - a) / model.t_r).floor();
    let rest_end = b - periods * model.t_r;
    let partial = model.cumulative_from_zero(rest_end) - model.cumulative_from_zero(a);
    Ok((periods * model.total_flux() + partial).max(0.0))
}

/// Arrival-time density λ(b_k)/Λ on the bin centers, renormalized so that
/// `Σ pdf · t_bin = 1`.
pub fn arrival_pdf(model: &SceneModel, grid: &BinGrid) -> Result<Vec<f64>> {
    let flux = model.total_flux();
    if flux <= 0.0 {
        return Err(Error::DegenerateModel("arrival pdf needs S + B > 0".into()));
    }
    let mut pdf: Vec<f64> = grid
        .centers()
        .map(|b| intensity_at(model, b) / flux)
        .collect();
    let mass: f64 = pdf.iter().sum::<f64>() * grid.bin_width();
    pdf.iter_mut().for_each(|v| *v /= mass);
    Ok(pdf)
}

/// Equally spaced bins over one illumination period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinGrid {
    n_bins: usize,
    period: f64,
    dead_bins: usize,
}

impl BinGrid {
    /// `n_bins` bins over `[0, period)`; `dead_time` sets the dead-time length in bins.
    pub fn new(period: f64, n_bins: usize, dead_time: f64) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::InvalidArgument("grid needs at least one bin".into()));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "period must be positive, got {period}"
            )));
        }
        if !(dead_time.is_finite() && dead_time >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dead time must be non-negative, got {dead_time}"
            )));
        }
        let bin_width = period / n_bins as f64;
        let x_d = dead_time.rem_euclid(period);
        let dead_bins = ((x_d / bin_width).round() as usize) % n_bins;
        Ok(BinGrid {
            n_bins,
            period,
            dead_bins,
        })
    }

    pub fn for_model(model: &SceneModel, n_bins: usize) -> Result<Self> {
        Self::new(model.t_r, n_bins, model.t_d)
    }

    /// Grid with a requested bin width; `t_r / t_bin` must be (close to) an integer.
    pub fn with_bin_width(model: &SceneModel, t_bin: f64) -> Result<Self> {
        if !(t_bin.is_finite() && t_bin > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bin width must be positive, got {t_bin}"
            )));
        }
        let ratio = model.t_r / t_bin;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "t_r = {} is not an integer multiple of t_bin = {t_bin}",
                model.t_r
            )));
        }
        Self::for_model(model, n as usize)
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn bin_width(&self) -> f64 {
        self.period / self.n_bins as f64
    }

    /// n_d = round(x_d / t_bin), reduced modulo n_b.
    pub fn dead_bins(&self) -> usize {
        self.dead_bins
    }

    pub fn center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.bin_width()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_bins).map(move |k| self.center(k))
    }

    /// Bin index of an absolute time by floor division of its phase.
    pub fn bin_of(&self, t: f64) -> usize {
        let phase = t.rem_euclid(self.period);
        let k = (phase / self.bin_width()).floor() as usize;
        k.min(self.n_bins - 1)
    }
}

/// Standard normal CDF.
pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Φ(b) − Φ(a) for a ≤ b, evaluated on the side that avoids cancellation.
fn normal_cdf_diff(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        0.5 * (libm::erfc(a / SQRT_2) - libm::erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b / SQRT_2) - libm::erfc(-a / SQRT_2))
    } else {
        0.5 * (libm::erf(b / SQRT_2) - libm::erf(a / SQRT_2))
    }
}
