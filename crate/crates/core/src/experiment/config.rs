use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::Method;
use crate::scene::{BinGrid, SceneModel};

/// Horizontal axis of an MSE study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XAxis {
    #[default]
    Illuminations,
    Detections,
}

/// Parameters shared by all experiments. Scenes are the Cartesian product
/// of the `S`, `B` and `t_r` lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(rename = "S")]
    pub signal: Vec<f64>,
    #[serde(rename = "B")]
    pub background: Vec<f64>,
    pub t_r: Vec<f64>,
    pub t_d: f64,
    pub sigma: f64,
    pub t_bin: f64,
    /// Fixed true delay; when absent each trial draws τ uniformly on `[0, t_r)`.
    pub tau: Option<f64>,
    pub n_r: Vec<u64>,
    pub trials: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub out_dir: Option<PathBuf>,
    pub x_axis: XAxis,
    /// Expected arrivals per period after attenuation for LF.
    pub lf_flux: f64,
    /// Bin width for total-variation comparisons of densities.
    pub tv_bin: f64,
    /// Number of quantile groups on the detections axis.
    pub detection_bins: usize,
    /// Fisher difference step; defaults to `t_bin`.
    pub delta_tau: Option<f64>,
    pub power_tol: f64,
    pub power_max_iter: usize,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            signal: vec![3.16],
            background: vec![0.562],
            t_r: vec![100.0],
            t_d: 75.0,
            sigma: 2.0,
            t_bin: 0.05,
            tau: None,
            n_r: vec![100, 300, 1_000, 3_000, 10_000],
            trials: 100,
            base_seed: 0,
            methods: Method::ALL.to_vec(),
            out_dir: None,
            x_axis: XAxis::Illuminations,
            lf_flux: 0.05,
            tv_bin: 4.0,
            detection_bins: 10,
            delta_tau: None,
            power_tol: crate::markov::DEFAULT_TOL,
            power_max_iter: crate::markov::DEFAULT_MAX_ITER,
            solver_tol: crate::correction::DEFAULT_TOL,
            solver_max_iter: crate::correction::DEFAULT_MAX_ITER,
        }
    }
}

/// One point of the scene grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scene {
    pub id: usize,
    pub model: SceneModel,
    pub grid: BinGrid,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: ExperimentConfig =
            serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.signal.is_empty() || self.background.is_empty() || self.t_r.is_empty() {
            return bad("S, B and t_r lists must be nonempty".into());
        }
        if self.n_r.is_empty() || self.n_r.contains(&0) {
            return bad("n_r must be a nonempty list of positive counts".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must be nonempty".into());
        }
        if !(self.lf_flux > 0.0) {
            return bad(format!("lf_flux must be positive, got {}", self.lf_flux));
        }
        if self.detection_bins == 0 {
            return bad("detection_bins must be at least 1".into());
        }
        if !(self.power_tol > 0.0 && self.solver_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        for scene in self.scenes_unchecked() {
            let scene = scene.map_err(|e| Error::Config(e.to_string()))?;
            let ratio = self.tv_bin / self.t_bin;
            let per = scene.model.t_r / self.tv_bin;
            if !(ratio.round() >= 1.0
                && (ratio - ratio.round()).abs() < 1e-6 * ratio
                && (per - per.round()).abs() < 1e-6 * per)
            {
                return bad(format!(
                    "tv_bin = {} must be a multiple of t_bin and divide t_r = {}",
                    self.tv_bin, scene.model.t_r
                ));
            }
        }
        Ok(())
    }

    fn scenes_unchecked(&self) -> impl Iterator<Item = Result<Scene>> + '_ {
        let mut id = 0;
        let mut out = Vec::new();
        for &s in &self.signal {
            for &b in &self.background {
                for &t_r in &self.t_r {
                    let tau = self.tau.unwrap_or(t_r / 2.0);
                    let r =
                        SceneModel::new(t_r, self.t_d, self.sigma, s, b, tau).and_then(|model| {
                            if model.total_flux() <= 0.0 {
                                return Err(Error::DegenerateModel("scene needs S + B > 0".into()));
                            }
                            let grid = BinGrid::with_bin_width(&model, self.t_bin)?;
                            Ok(Scene { id, model, grid })
                        });
                    out.push(r);
                    id += 1;
                }
            }
        }
        out.into_iter()
    }

    /// Scenes in (S, B, t_r) order.
    pub fn scenes(&self) -> Result<Vec<Scene>> {
        self.scenes_unchecked().collect()
    }

    /// Seed of Monte Carlo trial `t`.
    pub fn trial_seed(&self, t: usize) -> u64 {
        self.base_seed.wrapping_add(t as u64)
    }
}

/// Single-scene input for the `simulate` and `stationary` commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub t_r: f64,
    pub t_d: f64,
    pub sigma: f64,
    #[serde(rename = "S")]
    pub signal: f64,
    #[serde(rename = "B")]
    pub background: f64,
    pub tau: f64,
    #[serde(default = "default_t_bin")]
    pub t_bin: f64,
    #[serde(default = "default_n_r")]
    pub n_r: u64,
}

fn default_t_bin() -> f64 {
    0.05
}

fn default_n_r() -> u64 {
    50_000
}

impl SceneConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: SceneConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        c.scene()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(c)
    }

    pub fn scene(&self) -> Result<Scene> {
        let model = SceneModel::new(
            self.t_r,
            self.t_d,
            self.sigma,
            self.signal,
            self.background,
            self.tau,
        )?;
        let grid = BinGrid::with_bin_width(&model, self.t_bin)?;
        Ok(Scene { id: 0, model, grid })
    }
}
