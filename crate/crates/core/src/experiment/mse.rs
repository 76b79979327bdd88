use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Scene};
use super::{mean_se, trial_delay};
use crate::correction::{Init, SolverOptions};
use crate::error::{Error, Result};
use crate::estimate::{estimate_depth, wrapped_difference, DepthReferences, Method};
use crate::io::{fmt_f64, Table};
use crate::simulate::{apply_dead_time, bin_detections, sample_arrivals, thin, BinnedHistogram};

/// Outcome of one method on one Monte Carlo trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub scene: usize,
    pub signal: f64,
    pub background: f64,
    pub t_r: f64,
    pub method: Method,
    pub n_r: u64,
    /// Detections in the histogram the method used.
    pub detections: u64,
    pub tau_true: f64,
    pub tau_hat: f64,
    /// Squared wrapped delay error (ns²).
    pub sq_err: f64,
    pub seed: u64,
}

/// One point of an MSE curve. `x` is `n_r` on the illuminations axis and
/// the quantile-group index on the detections axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseRow {
    pub scene: usize,
    pub signal: f64,
    pub background: f64,
    pub t_r: f64,
    pub method: Method,
    pub x: u64,
    pub trials: usize,
    pub mean_detections: f64,
    pub mse: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseStudy {
    pub records: Vec<TrialRecord>,
    pub by_illuminations: Vec<MseRow>,
    pub by_detections: Vec<MseRow>,
}

impl MseStudy {
    /// Curve of one (scene, method) pair on the chosen axis.
    pub fn curve(&self, scene: usize, method: Method, detections_axis: bool) -> Vec<&MseRow> {
        let rows = if detections_axis {
            &self.by_detections
        } else {
            &self.by_illuminations
        };
        rows.iter()
            .filter(|r| r.scene == scene && r.method == method)
            .collect()
    }

    pub fn trials_table(&self) -> Table {
        let mut t = Table::new(&[
            "scene",
            "S",
            "B",
            "t_r",
            "method",
            "n_r",
            "detections",
            "tau_true",
            "tau_hat",
            "sq_err",
            "seed",
        ]);
        for r in &self.records {
            t.push(vec![
                r.scene.to_string(),
                fmt_f64(r.signal),
                fmt_f64(r.background),
                fmt_f64(r.t_r),
                r.method.to_string(),
                r.n_r.to_string(),
                r.detections.to_string(),
                fmt_f64(r.tau_true),
                fmt_f64(r.tau_hat),
                fmt_f64(r.sq_err),
                r.seed.to_string(),
            ]);
        }
        t
    }

    pub fn summary_table(&self, detections_axis: bool) -> Table {
        let x_name = if detections_axis { "group" } else { "n_r" };
        let mut t = Table::new(&[
            "scene",
            "S",
            "B",
            "t_r",
            "method",
            x_name,
            "trials",
            "mean_detections",
            "mse",
            "se",
        ]);
        let rows = if detections_axis {
            &self.by_detections
        } else {
            &self.by_illuminations
        };
        for r in rows {
            t.push(vec![
                r.scene.to_string(),
                fmt_f64(r.signal),
                fmt_f64(r.background),
                fmt_f64(r.t_r),
                r.method.to_string(),
                r.x.to_string(),
                r.trials.to_string(),
                fmt_f64(r.mean_detections),
                fmt_f64(r.mse),
                fmt_f64(r.se),
            ]);
        }
        t
    }

    /// Writes `trials.csv` and `mse.csv` or `mse_detections.csv`.
    pub fn write(&self, dir: &Path, detections_axis: bool) -> Result<()> {
        self.trials_table().write(&dir.join("trials.csv"))?;
        let name = if detections_axis {
            "mse_detections.csv"
        } else {
            "mse.csv"
        };
        self.summary_table(detections_axis).write(&dir.join(name))
    }
}

pub(crate) fn solver_options(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions {
        max_iter: cfg.solver_max_iter,
        tol: cfg.solver_tol,
        init: Init::FixedPoint,
        ..SolverOptions::default()
    }
}

/// Delay estimate for a possibly empty histogram. An empty histogram
/// gives a flat score, so the filter's tie rule returns the reference delay.
pub(crate) fn estimate_or_reference(
    method: Method,
    hist: &BinnedHistogram,
    refs: &DepthReferences,
) -> Result<f64> {
    if hist.total() == 0 {
        return Ok(refs.tau_ref());
    }
    match estimate_depth(method, hist, refs) {
        Ok(e) => Ok(e.tau_hat),
        Err(Error::InsufficientData(_)) | Err(Error::DegenerateResult(_)) => Ok(refs.tau_ref()),
        Err(e) => Err(e),
    }
}

fn run_trial(
    cfg: &ExperimentConfig,
    scene: &Scene,
    refs: &DepthReferences,
    n_r: u64,
    trial: usize,
) -> Result<Vec<TrialRecord>> {
    let seed = cfg.trial_seed(trial);
    let t_r = scene.model.t_r;
    let tau = trial_delay(cfg.tau, t_r, seed);
    let model = scene.model.with_tau(tau);
    let arrivals = sample_arrivals(&model, n_r, seed)?;
    let high = bin_detections(&apply_dead_time(&arrivals, model.t_d), &scene.grid);
    let low = if cfg.methods.contains(&Method::LF) {
        let keep = (cfg.lf_flux / model.total_flux()).min(1.0);
        let thinned = thin(&arrivals, keep, seed)?;
        Some(bin_detections(
            &apply_dead_time(&thinned, model.t_d),
            &scene.grid,
        ))
    } else {
        None
    };
    cfg.methods
        .iter()
        .map(|&method| {
            let hist = match method {
                Method::LF => low.as_ref().expect("LF histogram"),
                _ => &high,
            };
            let tau_hat = estimate_or_reference(method, hist, refs)?;
            let err = wrapped_difference(tau_hat, tau, t_r);
            Ok(TrialRecord {
                scene: scene.id,
                signal: model.signal,
                background: model.background,
                t_r,
                method,
                n_r,
                detections: hist.total(),
                tau_true: tau,
                tau_hat,
                sq_err: err * err,
                seed,
            })
        })
        .collect()
}

/// Monte Carlo MSE of every configured method over scenes, `n_r` values
/// and trials.
pub fn run_mse_study(cfg: &ExperimentConfig) -> Result<MseStudy> {
    cfg.validate()?;
    let scenes = cfg.scenes()?;
    let refs: Vec<DepthReferences> = scenes
        .par_iter()
        .map(|s| {
            DepthReferences::with_power_iteration(
                &s.model,
                &s.grid,
                cfg.power_tol,
                cfg.power_max_iter,
            )
            .map(|r| r.with_solver(solver_options(cfg)))
        })
        .collect::<Result<_>>()?;

    let units: Vec<(usize, u64, usize)> = (0..scenes.len())
        .flat_map(|s| {
            cfg.n_r
                .iter()
                .flat_map(move |&n| (0..cfg.trials).map(move |t| (s, n, t)))
        })
        .collect();
    let records: Vec<TrialRecord> = units
        .par_iter()
        .map(|&(s, n, t)| run_trial(cfg, &scenes[s], &refs[s], n, t))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let by_illuminations = summarize_by_illuminations(cfg, &scenes, &records);
    let by_detections = summarize_by_detections(cfg, &scenes, &records);
    Ok(MseStudy {
        records,
        by_illuminations,
        by_detections,
    })
}

fn row(scene: &Scene, method: Method, x: u64, group: &[&TrialRecord]) -> MseRow {
    let errs: Vec<f64> = group.iter().map(|r| r.sq_err).collect();
    let (mse, se) = mean_se(&errs);
    let mean_detections =
        group.iter().map(|r| r.detections as f64).sum::<f64>() / group.len().max(1) as f64;
    MseRow {
        scene: scene.id,
        signal: scene.model.signal,
        background: scene.model.background,
        t_r: scene.model.t_r,
        method,
        x,
        trials: group.len(),
        mean_detections,
        mse,
        se,
    }
}

fn summarize_by_illuminations(
    cfg: &ExperimentConfig,
    scenes: &[Scene],
    records: &[TrialRecord],
) -> Vec<MseRow> {
    let mut out = Vec::new();
    for scene in scenes {
        for &method in &cfg.methods {
            for &n_r in &cfg.n_r {
                let group: Vec<&TrialRecord> = records
                    .iter()
                    .filter(|r| r.scene == scene.id && r.method == method && r.n_r == n_r)
                    .collect();
                out.push(row(scene, method, n_r, &group));
            }
        }
    }
    out
}

/// Pools all trials of a (scene, method) pair, orders them by detection
/// count and splits them into `detection_bins` equal-size groups.
fn summarize_by_detections(
    cfg: &ExperimentConfig,
    scenes: &[Scene],
    records: &[TrialRecord],
) -> Vec<MseRow> {
    let mut out = Vec::new();
    for scene in scenes {
        for &method in &cfg.methods {
            let mut pool: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.scene == scene.id && r.method == method)
                .collect();
            pool.sort_by_key(|r| (r.detections, r.n_r, r.seed));
            let n = pool.len();
            let k = cfg.detection_bins.min(n).max(1);
            for g in 0..k {
                let group = &pool[g * n / k..(g + 1) * n / k];
                out.push(row(scene, method, g as u64, group));
            }
        }
    }
    out
}

/// Interpolates `y(x)` linearly in `(ln x, ln y)`; `None` outside the
/// range of `xs` or when any value involved is not positive.
pub fn loglog_interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.len() != ys.len() || xs.is_empty() || !(x > 0.0) {
        return None;
    }
    let mut pts: Vec<(f64, f64)> = xs.iter().cloned().zip(ys.iter().cloned()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if x < pts[0].0 || x > pts[pts.len() - 1].0 {
        return None;
    }
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 <= x && x <= x1 {
            if x0 <= 0.0 || y0 <= 0.0 || y1 <= 0.0 {
                return None;
            }
            if x1 == x0 {
                return Some(y0);
            }
            let t = (x.ln() - x0.ln()) / (x1.ln() - x0.ln());
            return Some((y0.ln() + t * (y1.ln() - y0.ln())).exp());
        }
    }
    (pts.len() == 1 && pts[0].0 == x).then_some(pts[0].1)
}
