use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Scene};
use super::mse::{estimate_or_reference, solver_options};
use super::{mean_se, quantile, trial_delay};
use crate::error::{Error, Result};
use crate::estimate::{
    estimate_background_ml, estimate_lambda_ml, estimate_signal, wrapped_difference,
    DepthReferences, FluxEstimates, Method,
};
use crate::io::{fmt_f64, Table};
use crate::simulate::{
    apply_dead_time, bin_detections, interdetection_periods, sample_arrivals, sample_arrivals_on,
    STREAM_BACKGROUND,
};

/// Flux estimates and MCPDF errors of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamTrial {
    pub scene: usize,
    pub n_r: u64,
    pub seed: u64,
    pub estimates: FluxEstimates,
    pub lambda_saturated: bool,
    pub tau_true: f64,
    /// Squared error of MCPDF with the true S and B.
    pub sq_err_true: f64,
    /// Squared error of MCPDF with the estimated S and B.
    pub sq_err_est: f64,
}

/// Per (scene, n_r) summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamRow {
    pub scene: usize,
    pub signal: f64,
    pub background: f64,
    pub n_r: u64,
    pub trials: usize,
    pub b_median: f64,
    pub b_q25: f64,
    pub b_q75: f64,
    pub lambda_median: f64,
    pub lambda_q25: f64,
    pub lambda_q75: f64,
    pub s_median: f64,
    pub s_q25: f64,
    pub s_q75: f64,
    pub b_abs_err_median: f64,
    pub mse_true: f64,
    pub se_true: f64,
    pub mse_est: f64,
    pub se_est: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    pub trials: Vec<ParamTrial>,
    pub rows: Vec<ParamRow>,
}

impl ParamReport {
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(&[
            "scene",
            "S",
            "B",
            "n_r",
            "trials",
            "B_hat_median",
            "B_hat_q25",
            "B_hat_q75",
            "Lambda_hat_median",
            "Lambda_hat_q25",
            "Lambda_hat_q75",
            "S_hat_median",
            "S_hat_q25",
            "S_hat_q75",
            "B_abs_err_median",
            "mse_true",
            "se_true",
            "mse_est",
            "se_est",
        ]);
        for r in &self.rows {
            let mut row = vec![
                r.scene.to_string(),
                fmt_f64(r.signal),
                fmt_f64(r.background),
                r.n_r.to_string(),
                r.trials.to_string(),
            ];
            row.extend(
                [
                    r.b_median,
                    r.b_q25,
                    r.b_q75,
                    r.lambda_median,
                    r.lambda_q25,
                    r.lambda_q75,
                    r.s_median,
                    r.s_q25,
                    r.s_q75,
                    r.b_abs_err_median,
                    r.mse_true,
                    r.se_true,
                    r.mse_est,
                    r.se_est,
                ]
                .map(fmt_f64),
            );
            t.push(row);
        }
        t
    }

    pub fn trials_table(&self) -> Table {
        let mut t = Table::new(&[
            "scene",
            "n_r",
            "seed",
            "detections",
            "Lambda_hat",
            "B_hat",
            "S_hat",
            "saturated",
            "tau_true",
            "sq_err_true",
            "sq_err_est",
        ]);
        for p in &self.trials {
            t.push(vec![
                p.scene.to_string(),
                p.n_r.to_string(),
                p.seed.to_string(),
                p.estimates.n_used.to_string(),
                fmt_f64(p.estimates.lambda_hat),
                fmt_f64(p.estimates.b_hat),
                fmt_f64(p.estimates.s_hat),
                p.lambda_saturated.to_string(),
                fmt_f64(p.tau_true),
                fmt_f64(p.sq_err_true),
                fmt_f64(p.sq_err_est),
            ]);
        }
        t
    }

    /// Writes `params.csv` and `param_trials.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.summary_table().write(&dir.join("params.csv"))?;
        self.trials_table().write(&dir.join("param_trials.csv"))
    }
}

fn run_trial(
    cfg: &ExperimentConfig,
    scene: &Scene,
    refs_true: &DepthReferences,
    n_r: u64,
    trial: usize,
) -> Result<ParamTrial> {
    let seed = cfg.trial_seed(trial);
    let t_r = scene.model.t_r;
    let tau = trial_delay(cfg.tau, t_r, seed);
    let model = scene.model.with_tau(tau);

    let detections = apply_dead_time(&sample_arrivals(&model, n_r, seed)?, model.t_d);
    let r = interdetection_periods(&detections, &model);
    let (lambda_ml, saturated) = match estimate_lambda_ml(&r) {
        Ok(l) => (l.value, l.saturated),
        Err(Error::InsufficientData(_)) => (0.0, false),
        Err(e) => return Err(e),
    };
    let dark = model.with_flux(0.0, model.background);
    let off = apply_dead_time(
        &sample_arrivals_on(&dark, n_r, seed, STREAM_BACKGROUND)?,
        model.t_d,
    );
    let b_ml = match estimate_background_ml(&off, model.t_d) {
        Ok(b) => b.per_period,
        Err(Error::InsufficientData(_)) => 0.0,
        Err(e) => return Err(e),
    };
    let mut estimates = estimate_signal(lambda_ml, b_ml);
    estimates.n_used = detections.len();

    let hist = bin_detections(&detections, &scene.grid);
    let est_model = scene.model.with_flux(estimates.s_hat, estimates.b_hat);
    let refs_est = DepthReferences::with_power_iteration(
        &est_model,
        &scene.grid,
        cfg.power_tol,
        cfg.power_max_iter,
    )?
    .with_solver(solver_options(cfg));
    let e_true = wrapped_difference(
        estimate_or_reference(Method::MCPDF, &hist, refs_true)?,
        tau,
        t_r,
    );
    let e_est = wrapped_difference(
        estimate_or_reference(Method::MCPDF, &hist, &refs_est)?,
        tau,
        t_r,
    );
    Ok(ParamTrial {
        scene: scene.id,
        n_r,
        seed,
        estimates,
        lambda_saturated: saturated,
        tau_true: tau,
        sq_err_true: e_true * e_true,
        sq_err_est: e_est * e_est,
    })
}

/// Flux estimates from a high-flux acquisition plus a laser-off
/// acquisition of equal length, and MCPDF ranging with true versus
/// estimated parameters.
pub fn run_param_estimation(cfg: &ExperimentConfig) -> Result<ParamReport> {
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
        })
        .collect::<Result<_>>()?;
    let units: Vec<(usize, u64, usize)> = (0..scenes.len())
        .flat_map(|s| {
            cfg.n_r
                .iter()
                .flat_map(move |&n| (0..cfg.trials).map(move |t| (s, n, t)))
        })
        .collect();
    let trials: Vec<ParamTrial> = units
        .par_iter()
        .map(|&(s, n, t)| run_trial(cfg, &scenes[s], &refs[s], n, t))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for scene in &scenes {
        for &n_r in &cfg.n_r {
            let group: Vec<&ParamTrial> = trials
                .iter()
                .filter(|p| p.scene == scene.id && p.n_r == n_r)
                .collect();
            let sorted = |f: &dyn Fn(&ParamTrial) -> f64| {
                let mut v: Vec<f64> = group.iter().map(|p| f(p)).collect();
                v.sort_by(|a, b| a.total_cmp(b));
                v
            };
            let b = sorted(&|p| p.estimates.b_hat);
            let l = sorted(&|p| p.estimates.lambda_hat);
            let s = sorted(&|p| p.estimates.s_hat);
            let b_err = sorted(&|p| (p.estimates.b_hat - scene.model.background).abs());
            let (mse_true, se_true) =
                mean_se(&group.iter().map(|p| p.sq_err_true).collect::<Vec<_>>());
            let (mse_est, se_est) =
                mean_se(&group.iter().map(|p| p.sq_err_est).collect::<Vec<_>>());
            rows.push(ParamRow {
                scene: scene.id,
                signal: scene.model.signal,
                background: scene.model.background,
                n_r,
                trials: group.len(),
                b_median: quantile(&b, 0.5),
                b_q25: quantile(&b, 0.25),
                b_q75: quantile(&b, 0.75),
                lambda_median: quantile(&l, 0.5),
                lambda_q25: quantile(&l, 0.25),
                lambda_q75: quantile(&l, 0.75),
                s_median: quantile(&s, 0.5),
                s_q25: quantile(&s, 0.25),
                s_q75: quantile(&s, 0.75),
                b_abs_err_median: quantile(&b_err, 0.5),
                mse_true,
                se_true,
                mse_est,
                se_est,
            });
        }
    }
    Ok(ParamReport { trials, rows })
}
