use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::io::{fmt_f64, Table};
use crate::markov::{fisher_information, Distribution};

/// Fisher information about τ per detection for one scene (1/ns²).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FisherRow {
    pub signal: f64,
    pub background: f64,
    pub t_r: f64,
    pub fi_arrival: f64,
    pub fi_detection: f64,
    pub ratio: f64,
}

/// `FI_D / FI_A` over the scene grid.
pub fn run_fisher_map(cfg: &ExperimentConfig) -> Result<Vec<FisherRow>> {
    cfg.validate()?;
    let scenes = cfg.scenes()?;
    scenes
        .par_iter()
        .map(|s| {
            let delta = cfg.delta_tau.unwrap_or(s.grid.bin_width());
            let fi_arrival = fisher_information(&s.model, &s.grid, Distribution::Arrival, delta)?;
            let fi_detection =
                fisher_information(&s.model, &s.grid, Distribution::Detection, delta)?;
            Ok(FisherRow {
                signal: s.model.signal,
                background: s.model.background,
                t_r: s.model.t_r,
                fi_arrival,
                fi_detection,
                ratio: fi_detection / fi_arrival,
            })
        })
        .collect()
}

pub fn fisher_table(rows: &[FisherRow]) -> Table {
    let mut t = Table::new(&["S", "B", "t_r", "FI_A", "FI_D", "ratio"]);
    for r in rows {
        t.push(vec![
            fmt_f64(r.signal),
            fmt_f64(r.background),
            fmt_f64(r.t_r),
            fmt_f64(r.fi_arrival),
            fmt_f64(r.fi_detection),
            fmt_f64(r.ratio),
        ]);
    }
    t
}
