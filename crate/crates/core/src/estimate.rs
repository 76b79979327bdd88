//! Flux and delay estimators.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use serde::{Deserialize, Serialize};

use crate::correction::{solve_mchc, InverseProblem, SolverOptions};
use crate::error::{Error, Result};
use crate::markov::{
    detection_pdf, detection_pdf_with, DEFAULT_MAX_ITER, DEFAULT_TOL, DENSITY_FLOOR,
};
use crate::scene::{arrival_pdf, BinGrid, SceneModel};
use crate::simulate::{BinnedHistogram, EventSequence};

/// Value returned for Λ̂ when it is unbounded or exceeds this cap.
pub const LAMBDA_MAX: f64 = 20.0;
/// Smallest signal estimate.
pub const S_MIN: f64 = 0.01;
/// Smallest background estimate.
pub const B_MIN: f64 = 0.01;

/// Maximum-likelihood total flux from interdetection periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaEstimate {
    pub value: f64,
    /// Set when every period count was zero or the estimate hit the cap.
    pub saturated: bool,
}

/// `Λ̂ = −ln(Σr / (n + Σr))`, capped at [`LAMBDA_MAX`].
pub fn estimate_lambda_ml(r: &[u64]) -> Result<LambdaEstimate> {
    estimate_lambda_ml_capped(r, LAMBDA_MAX)
}

pub fn estimate_lambda_ml_capped(r: &[u64], cap: f64) -> Result<LambdaEstimate> {
    if r.is_empty() {
        return Err(Error::InsufficientData("no interdetection periods".into()));
    }
    let n = r.len() as f64;
    let sum = r.iter().sum::<u64>() as f64;
    if sum == 0.0 {
        return Ok(LambdaEstimate {
            value: cap,
            saturated: true,
        });
    }
    let value = -(sum / (n + sum)).ln();
    Ok(if value > cap {
        LambdaEstimate {
            value: cap,
            saturated: true,
        }
    } else {
        LambdaEstimate {
            value,
            saturated: false,
        }
    })
}

/// Background rate from a laser-off acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BackgroundEstimate {
    /// λ̂_b in photons/ns.
    pub rate: f64,
    /// B̂ = λ̂_b · t_r.
    pub per_period: f64,
}

/// `λ̂_b = (n−1) / ((t_n − t_1) − (n−1)·t_d)`.
pub fn estimate_background_ml(detections: &EventSequence, t_d: f64) -> Result<BackgroundEstimate> {
    let t = detections.times();
    let n = t.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "background estimate needs at least 2 detections, got {n}"
        )));
    }
    let k = (n - 1) as f64;
    let live = (t[n - 1] - t[0]) - k * t_d;
    if !(live > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "detections are not separated by the dead time {t_d}"
        )));
    }
    let rate = k / live;
    Ok(BackgroundEstimate {
        rate,
        per_period: rate * detections.period(),
    })
}

/// Clamped flux estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluxEstimates {
    pub lambda_hat: f64,
    pub b_hat: f64,
    pub s_hat: f64,
    pub n_used: usize,
}

/// `B̂ ← max(B̂, B_min)`, `Λ̂ ← max(Λ̂, B̂ + S_min)`, `Ŝ = Λ̂ − B̂`.
pub fn estimate_signal(lambda_hat: f64, b_hat: f64) -> FluxEstimates {
    let b = b_hat.max(B_MIN);
    let lambda = lambda_hat.max(b + S_MIN);
    FluxEstimates {
        lambda_hat: lambda,
        b_hat: b,
        s_hat: lambda - b,
        n_used: 0,
    }
}

/// Depth estimation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Attenuated acquisition, filtered against the arrival pdf.
    LF,
    /// High-flux acquisition, filtered against the arrival pdf.
    HF,
    /// HF minus the mode shift of the detection pdf.
    SC,
    /// High-flux acquisition, filtered against the detection pdf.
    MCPDF,
    /// Corrected high-flux histogram, filtered against the arrival pdf.
    MCHC,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::LF,
        Method::HF,
        Method::SC,
        Method::MCPDF,
        Method::MCHC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::LF => "LF",
            Method::HF => "HF",
            Method::SC => "SC",
            Method::MCPDF => "MCPDF",
            Method::MCHC => "MCHC",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Delay estimate on the grid of reference shifts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayEstimate {
    /// τ̂ in `[0, t_r)`.
    pub tau_hat: f64,
    pub method: Option<Method>,
    /// Score for every circular shift `k` of the reference (index k).
    pub score_curve: Option<Vec<f64>>,
}

/// Circular log-matched filter.
///
/// `ref_pdf` is the model density for delay `ref_tau`; the returned delay is
/// `ref_tau + s·t_bin` for the shift `s ∈ (−n_b/2, n_b/2]` maximizing
/// `Σ_k h_k ln f_ref[k − s]`. Equal scores go to the smallest `|s|`, then to
/// the smaller `s`.
pub fn log_matched_filter(
    hist: &BinnedHistogram,
    ref_pdf: &[f64],
    ref_tau: f64,
) -> Result<DelayEstimate> {
    let weights: Vec<f64> = hist.counts().iter().map(|&c| c as f64).collect();
    MatchedFilter::new(ref_pdf, ref_tau, hist.grid())?.estimate(&weights, true)
}

/// Reference for repeated log-matched filtering against one pdf.
#[derive(Clone)]
pub struct MatchedFilter {
    grid: BinGrid,
    ref_tau: f64,
    log_ref: Vec<f64>,
    /// conj(FFT(log f_ref))
    spectrum: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for MatchedFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatchedFilter")
            .field("n_bins", &self.grid.n_bins())
            .field("ref_tau", &self.ref_tau)
            .finish()
    }
}

/// Sparse direct scoring is used below this many multiply-adds.
const DIRECT_LIMIT: usize = 1 << 18;

impl MatchedFilter {
    pub fn new(ref_pdf: &[f64], ref_tau: f64, grid: &BinGrid) -> Result<Self> {
        let n_b = grid.n_bins();
        if ref_pdf.len() != n_b {
            return Err(Error::InvalidArgument(format!(
                "reference has {} bins, grid has {n_b}",
                ref_pdf.len()
            )));
        }
        if ref_pdf.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "reference pdf must be finite and >= 0".into(),
            ));
        }
        let log_ref: Vec<f64> = ref_pdf.iter().map(|&v| v.max(DENSITY_FLOOR).ln()).collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n_b);
        let inverse = planner.plan_fft_inverse(n_b);
        let mut spectrum: Vec<Complex<f64>> =
            log_ref.iter().map(|&v| Complex::new(v, 0.0)).collect();
        forward.process(&mut spectrum);
        spectrum.iter_mut().for_each(|z| *z = z.conj());
        Ok(MatchedFilter {
            grid: *grid,
            ref_tau,
            log_ref,
            spectrum,
            forward,
            inverse,
        })
    }

    pub fn grid(&self) -> &BinGrid {
        &self.grid
    }

    pub fn ref_tau(&self) -> f64 {
        self.ref_tau
    }

    /// Exact score of circular shift `shift` for sparse weights.
    fn score(&self, support: &[(usize, f64)], shift: usize) -> f64 {
        let n_b = self.log_ref.len();
        support
            .iter()
            .map(|&(k, w)| w * self.log_ref[(k + n_b - shift) % n_b])
            .sum()
    }

    /// Scores of all shifts by FFT correlation; accurate to rounding.
    fn scores_fft(&self, weights: &[f64]) -> Vec<f64> {
        let n_b = weights.len();
        let mut buf: Vec<Complex<f64>> = weights.iter().map(|&w| Complex::new(w, 0.0)).collect();
        self.forward.process(&mut buf);
        buf.iter_mut()
            .zip(&self.spectrum)
            .for_each(|(a, b)| *a *= b);
        self.inverse.process(&mut buf);
        buf.iter().map(|z| z.re / n_b as f64).collect()
    }

    /// Delay estimate for real-valued bin weights. With `keep_curve` the
    /// exact score of every circular shift is returned as well.
    pub fn estimate(&self, weights: &[f64], keep_curve: bool) -> Result<DelayEstimate> {
        let n_b = self.grid.n_bins();
        if weights.len() != n_b {
            return Err(Error::InvalidArgument(format!(
                "histogram has {} bins, reference has {n_b}",
                weights.len()
            )));
        }
        let support: Vec<(usize, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(k, &w)| (k, w))
            .collect();
        if support.is_empty() {
            return Err(Error::InsufficientData("histogram is empty".into()));
        }
        let exact_all = keep_curve || support.len() * n_b <= DIRECT_LIMIT;
        let (candidates, exact): (Vec<usize>, Vec<f64>) = if exact_all {
            let s: Vec<f64> = (0..n_b).map(|k| self.score(&support, k)).collect();
            ((0..n_b).collect(), s)
        } else {
            // Rescore every shift the FFT cannot separate from the maximum.
            let approx = self.scores_fft(weights);
            let top = approx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let scale: f64 = support.iter().map(|(_, w)| w.abs()).sum::<f64>()
                * self.log_ref.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let slack = 1e-9 * scale + f64::MIN_POSITIVE;
            let cands: Vec<usize> = (0..n_b).filter(|&k| approx[k] >= top - slack).collect();
            let s = cands.iter().map(|&k| self.score(&support, k)).collect();
            (cands, s)
        };
        let half = (n_b / 2) as i64;
        let signed = |k: usize| -> i64 {
            let k = k as i64;
            if k > half {
                k - n_b as i64
            } else {
                k
            }
        };
        let mut best = 0;
        for i in 1..candidates.len() {
            let (si, sb) = (signed(candidates[i]), signed(candidates[best]));
            let better = exact[i] > exact[best]
                || (exact[i] == exact[best] && (si.abs(), si) < (sb.abs(), sb));
            if better {
                best = i;
            }
        }
        let s = signed(candidates[best]);
        let tau_hat = wrap_phase(
            self.ref_tau + s as f64 * self.grid.bin_width(),
            self.grid.period(),
        );
        Ok(DelayEstimate {
            tau_hat,
            method: None,
            score_curve: if exact_all && keep_curve {
                Some(exact)
            } else {
                None
            },
        })
    }
}

fn wrap_phase(x: f64, t_r: f64) -> f64 {
    let w = x.rem_euclid(t_r);
    if w >= t_r {
        0.0
    } else {
        w
    }
}

/// Signed difference wrapped to `(−t_r/2, t_r/2]`.
pub fn wrapped_difference(a: f64, b: f64, t_r: f64) -> f64 {
    let d = (a - b).rem_euclid(t_r);
    if d > t_r / 2.0 {
        d - t_r
    } else {
        d
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mode shift of the detection pdf relative to the arrival pdf, in ns.
pub fn shift_correction_offset(model: &SceneModel, grid: &BinGrid) -> Result<f64> {
    let fa = arrival_pdf(model, grid)?;
    let fd = detection_pdf(model, grid)?;
    Ok(mode_offset(&fa, &fd, grid))
}

fn mode_offset(arrival: &[f64], detection: &[f64], grid: &BinGrid) -> f64 {
    let bins = argmax(detection) as f64 - argmax(arrival) as f64;
    wrapped_difference(bins * grid.bin_width(), 0.0, grid.period())
}

/// Reference pdfs and constants shared by all methods for one scene.
#[derive(Debug, Clone)]
pub struct DepthReferences {
    flux: f64,
    arrival: MatchedFilter,
    detection: MatchedFilter,
    arrival_pdf: Vec<f64>,
    detection_pdf: Vec<f64>,
    offset: f64,
    solver: SolverOptions,
}

impl DepthReferences {
    /// References for `model` evaluated at the central bin of the grid,
    /// so every candidate delay lies on a bin center.
    pub fn new(model: &SceneModel, grid: &BinGrid) -> Result<Self> {
        Self::with_power_iteration(model, grid, DEFAULT_TOL, DEFAULT_MAX_ITER)
    }

    /// [`DepthReferences::new`] with explicit power-iteration settings.
    pub fn with_power_iteration(
        model: &SceneModel,
        grid: &BinGrid,
        tol: f64,
        max_iter: usize,
    ) -> Result<Self> {
        let tau_ref = grid.center(grid.n_bins() / 2);
        let m = model.with_tau(tau_ref);
        let fa = arrival_pdf(&m, grid)?;
        let fd = detection_pdf_with(&m, grid, tol, max_iter)?;
        let offset = mode_offset(&fa, &fd, grid);
        Ok(DepthReferences {
            flux: model.total_flux(),
            arrival: MatchedFilter::new(&fa, tau_ref, grid)?,
            detection: MatchedFilter::new(&fd, tau_ref, grid)?,
            arrival_pdf: fa,
            detection_pdf: fd,
            offset,
            solver: SolverOptions::default(),
        })
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    pub fn grid(&self) -> &BinGrid {
        self.arrival.grid()
    }

    pub fn tau_ref(&self) -> f64 {
        self.arrival.ref_tau()
    }

    pub fn arrival(&self) -> &[f64] {
        &self.arrival_pdf
    }

    pub fn detection(&self) -> &[f64] {
        &self.detection_pdf
    }

    /// Mode shift used by SC, in ns.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn flux(&self) -> f64 {
        self.flux
    }
}

/// Delay estimate for one method. LF expects the attenuated histogram;
/// the other methods expect the high-flux one.
pub fn estimate_depth(
    method: Method,
    hist: &BinnedHistogram,
    refs: &DepthReferences,
) -> Result<DelayEstimate> {
    let grid = refs.grid();
    if hist.grid() != grid {
        return Err(Error::InvalidArgument(
            "histogram grid differs from the reference grid".into(),
        ));
    }
    let counts: Vec<f64> = hist.counts().iter().map(|&c| c as f64).collect();
    let mut est = match method {
        Method::LF | Method::HF => refs.arrival.estimate(&counts, false)?,
        Method::MCPDF => refs.detection.estimate(&counts, false)?,
        Method::SC => {
            let mut e = refs.arrival.estimate(&counts, false)?;
            e.tau_hat = wrap_phase(e.tau_hat - refs.offset, grid.period());
            e
        }
        Method::MCHC => {
            if hist.total() == 0 {
                return Err(Error::InsufficientData("histogram is empty".into()));
            }
            let problem = InverseProblem::new(&counts, grid.dead_bins(), refs.flux)?;
            let result = solve_mchc(&problem, &refs.solver)?;
            if result.corrected_hist.is_empty() {
                return Err(Error::DegenerateResult(
                    "recovered intensity is identically zero".into(),
                ));
            }
            refs.arrival.estimate(&result.corrected_hist, false)?
        }
    };
    est.method = Some(method);
    Ok(est)
}
