//! Detection-time Markov chain: transition density, discretized kernel,
//! stationary distribution, spectral gap and Fisher information.
//!
//! The default discretization treats λ as constant on each bin (value at
//! the bin center) and averages the chain's starting point over its bin.
//! Rows are then exactly stochastic and, when the dead time is a whole
//! number of periods, the stationary vector is exactly the arrival pdf.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::{arrival_pdf, cumulative_intensity, intensity_at, BinGrid, SceneModel};

/// Default power-iteration tolerance (ℓ₁ change between iterates).
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default power-iteration budget.
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Default limit on `n_b` for dense kernels.
pub const DEFAULT_DENSE_CAP: usize = 2048;
/// Density floor used before dividing or taking logs.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Continuous transition density of the detection-time chain,
/// `f(x_next | x_prev)` in 1/ns.
pub fn transition_pdf(model: &SceneModel, x_prev: f64, x_next: f64) -> Result<f64> {
    let flux = model.total_flux();
    if flux <= 0.0 {
        return Err(Error::DegenerateModel(
            "transition pdf needs S + B > 0".into(),
        ));
    }
    let t_r = model.t_r;
    for x in [x_prev, x_next] {
        if !(0.0..t_r).contains(&x) {
            return Err(Error::InvalidArgument(format!(
                "phase {x} outside [0, {t_r})"
            )));
        }
    }
    let start = x_prev + model.dead_time_mod();
    let k = ((start - x_next) / t_r).floor() + 1.0;
    let end = k * t_r + x_next;
    let survival = (-cumulative_intensity(model, start, end)?).exp();
    Ok(intensity_at(model, x_next) * survival / -(-flux).exp_m1())
}

/// How the continuous kernel is reduced to a matrix over bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// Piecewise-constant intensity, bin-averaged starting point.
    #[default]
    CellAverage,
    /// Density sampled at bin centers, rows normalized to one.
    PointSample,
}

/// Storage of the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    Dense,
    /// O(n_b) left application without forming the matrix.
    #[default]
    MatrixFree,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    pub mode: KernelMode,
    pub discretization: Discretization,
    /// Largest `n_b` accepted in dense mode.
    pub dense_cap: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            mode: KernelMode::MatrixFree,
            discretization: Discretization::CellAverage,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

impl KernelOptions {
    pub fn dense() -> Self {
        KernelOptions {
            mode: KernelMode::Dense,
            ..Self::default()
        }
    }

    pub fn with_discretization(mut self, d: Discretization) -> Self {
        self.discretization = d;
        self
    }
}

/// Discretized transition operator over the bins of one period.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    model: SceneModel,
    grid: BinGrid,
    discretization: Discretization,
    ops: Operator,
    dense: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
enum Operator {
    Cell(CellOperator),
    Point(PointOperator),
}

/// Bin masses `a_n = λ(b_n)·t_bin`; starts at bin `m` are moved to bin
/// `(m + n_d) mod n_b` by the dead time.
#[derive(Debug, Clone)]
struct CellOperator {
    a: Vec<f64>,
    /// expm1(a)/a
    eps: Vec<f64>,
    /// 1 − e^{−a}
    delta: Vec<f64>,
    /// Probability of landing back in the starting bin.
    diag: Vec<f64>,
    /// Row sums; equal to one up to rounding.
    row_sum: Vec<f64>,
    /// Left-edge cumulative masses Ψ_n.
    psi: Vec<f64>,
    flux: f64,
    shift: usize,
    p_detect: f64,
}

impl CellOperator {
    fn new(model: &SceneModel, grid: &BinGrid) -> Self {
        let t_bin = grid.bin_width();
        let a: Vec<f64> = grid
            .centers()
            .map(|b| intensity_at(model, b) * t_bin)
            .collect();
        let flux: f64 = a.iter().sum();
        let e_neg = (-flux).exp();
        let p_detect = -(-flux).exp_m1();
        let eps: Vec<f64> = a.iter().map(|&x| exprel(x)).collect();
        let delta: Vec<f64> = a.iter().map(|&x| -(-x).exp_m1()).collect();
        let diag: Vec<f64> = a
            .iter()
            .map(|&x| (stay_before(x) + e_neg * stay_after(x)) / p_detect)
            .collect();
        let row_sum = a
            .iter()
            .zip(&eps)
            .zip(&diag)
            .map(|((&x, &e), &d)| e * ((-x).exp() - e_neg) / p_detect + d)
            .collect();
        let mut psi = Vec::with_capacity(a.len());
        let mut acc = 0.0;
        for &x in &a {
            psi.push(acc);
            acc += x;
        }
        CellOperator {
            a,
            eps,
            delta,
            diag,
            row_sum,
            psi,
            flux,
            shift: grid.dead_bins(),
            p_detect,
        }
    }

    fn landing(&self, m: usize) -> usize {
        (m + self.shift) % self.a.len()
    }

    fn entry(&self, m: usize, n: usize) -> f64 {
        let j = self.landing(m);
        let v = if n == j {
            self.diag[j]
        } else {
            let wrap = if n < j { self.flux } else { 0.0 };
            self.eps[j] * self.delta[n] * (self.psi[j] - self.psi[n] - wrap).exp() / self.p_detect
        };
        v / self.row_sum[j]
    }

    fn apply_left(&self, f: &[f64], out: &mut [f64]) {
        let n_b = self.a.len();
        let e_neg = (-self.flux).exp();
        // Mass arriving at landing bin j, already divided by its row sum.
        let moved = |j: usize| f[(j + n_b - self.shift) % n_b] / self.row_sum[j];
        let mut pre = 0.0;
        for n in 0..n_b {
            out[n] = pre;
            pre = (pre + moved(n) * self.eps[n]) * (-self.a[n]).exp();
        }
        let mut post = 0.0;
        for n in (0..n_b).rev() {
            let g = moved(n);
            out[n] = (self.delta[n] * (out[n] + post)) / self.p_detect + g * self.diag[n];
            if n > 0 {
                post = (post + g * self.eps[n] * e_neg) * self.a[n - 1].exp();
            }
        }
    }
}

/// expm1(x)/x with its limit at zero.
fn exprel(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + x / 2.0
    } else {
        x.exp_m1() / x
    }
}

/// 1 − (1 − e^{−a})/a: landing after the start within the same bin.
fn stay_before(a: f64) -> f64 {
    if a < 1e-5 {
        a / 2.0 - a * a / 6.0
    } else {
        1.0 + (-a).exp_m1() / a
    }
}

/// (e^{a} − 1)/a − 1: wrapping a full period back into the same bin.
fn stay_after(a: f64) -> f64 {
    if a < 1e-5 {
        a / 2.0 + a * a / 6.0
    } else {
        a.exp_m1() / a - 1.0
    }
}

/// Point-sampled kernel `P̃_{m,n} ∝ A_n c_{mn}` with `A_n = λ(b_n)e^{−φ(b_n)}`
/// and `c = 1` when `b_n` lies after the restart phase, `e^{−Λ}` otherwise.
#[derive(Debug, Clone)]
struct PointOperator {
    weight: Vec<f64>,
    /// Restart position of each row in bin units, relative to bin centers.
    restart: Vec<f64>,
    /// Row normalizers.
    norm: Vec<f64>,
    /// Rows ordered by restart position.
    order: Vec<usize>,
    e_neg: f64,
}

impl PointOperator {
    fn new(model: &SceneModel, grid: &BinGrid) -> Self {
        let n_b = grid.n_bins();
        let t_bin = grid.bin_width();
        let flux = model.total_flux();
        let e_neg = (-flux).exp();
        let weight: Vec<f64> = grid
            .centers()
            .map(|b| intensity_at(model, b) * (-model.phase_cumulative(b)).exp())
            .collect();
        let mut offset = model.dead_time_mod() / t_bin;
        if (offset - offset.round()).abs() < 1e-9 {
            offset = offset.round();
        }
        let restart: Vec<f64> = (0..n_b)
            .map(|m| (m as f64 + offset).rem_euclid(n_b as f64))
            .collect();
        // prefix[n] = Σ_{k<n} A_k
        let mut prefix = vec![0.0; n_b + 1];
        for n in 0..n_b {
            prefix[n + 1] = prefix[n] + weight[n];
        }
        let total = prefix[n_b];
        let norm = restart
            .iter()
            .map(|&w| {
                // Bins strictly after the restart position get c = 1.
                let first_after = first_index_after(w, n_b);
                let after = total - prefix[first_after];
                after + e_neg * prefix[first_after]
            })
            .collect();
        let mut order: Vec<usize> = (0..n_b).collect();
        order.sort_by(|&i, &j| restart[i].total_cmp(&restart[j]).then(i.cmp(&j)));
        PointOperator {
            weight,
            restart,
            norm,
            order,
            e_neg,
        }
    }

    fn entry(&self, m: usize, n: usize) -> f64 {
        let c = if (n as f64) > self.restart[m] {
            1.0
        } else {
            self.e_neg
        };
        self.weight[n] * c / self.norm[m]
    }

    fn apply_left(&self, f: &[f64], out: &mut [f64]) {
        let total: f64 = f.iter().zip(&self.norm).map(|(v, r)| v / r).sum();
        // before = Σ f_m/R_m over rows whose restart lies strictly before bin n.
        let mut before = 0.0;
        let mut cursor = 0;
        for (n, o) in out.iter_mut().enumerate() {
            while cursor < self.order.len() && self.restart[self.order[cursor]] < n as f64 {
                let m = self.order[cursor];
                before += f[m] / self.norm[m];
                cursor += 1;
            }
            *o = self.weight[n] * (before + self.e_neg * (total - before));
        }
    }
}

/// Smallest bin index `n` with `n > w`.
fn first_index_after(w: f64, n_b: usize) -> usize {
    ((w.floor() as usize) + 1).min(n_b)
}

/// Builds the discretized transition operator.
pub fn build_kernel(
    model: &SceneModel,
    grid: &BinGrid,
    options: KernelOptions,
) -> Result<TransitionKernel> {
    model.validate()?;
    if grid.n_bins() < 2 {
        return Err(Error::InvalidArgument(
            "kernel needs at least two bins".into(),
        ));
    }
    if (grid.period() - model.t_r).abs() > 1e-9 * model.t_r {
        return Err(Error::InvalidArgument(format!(
            "grid period {} does not match t_r = {}",
            grid.period(),
            model.t_r
        )));
    }
    if model.total_flux() <= 0.0 {
        return Err(Error::DegenerateModel("kernel needs S + B > 0".into()));
    }
    let n_b = grid.n_bins();
    if options.mode == KernelMode::Dense && n_b > options.dense_cap {
        return Err(Error::Capacity {
            n_bins: n_b,
            cap: options.dense_cap,
        });
    }
    let ops = match options.discretization {
        Discretization::CellAverage => Operator::Cell(CellOperator::new(model, grid)),
        Discretization::PointSample => Operator::Point(PointOperator::new(model, grid)),
    };
    let mut kernel = TransitionKernel {
        model: *model,
        grid: *grid,
        discretization: options.discretization,
        ops,
        dense: None,
    };
    if options.mode == KernelMode::Dense {
        let mut rows = vec![0.0; n_b * n_b];
        rows.par_chunks_mut(n_b).enumerate().for_each(|(m, row)| {
            for (n, v) in row.iter_mut().enumerate() {
                *v = kernel.entry(m, n);
            }
        });
        kernel.dense = Some(rows);
    }
    Ok(kernel)
}

impl TransitionKernel {
    pub fn model(&self) -> &SceneModel {
        &self.model
    }

    pub fn grid(&self) -> &BinGrid {
        &self.grid
    }

    pub fn discretization(&self) -> Discretization {
        self.discretization
    }

    pub fn mode(&self) -> KernelMode {
        if self.dense.is_some() {
            KernelMode::Dense
        } else {
            KernelMode::MatrixFree
        }
    }

    /// Row-major dense matrix, when built in dense mode.
    pub fn matrix(&self) -> Option<&[f64]> {
        self.dense.as_deref()
    }

    /// Single entry `P̃_{m,n}`, computed on demand in either mode.
    pub fn entry(&self, m: usize, n: usize) -> f64 {
        match &self.ops {
            Operator::Cell(c) => c.entry(m, n),
            Operator::Point(p) => p.entry(m, n),
        }
    }

    /// `out = f P̃` for a row vector `f`.
    pub fn apply_left(&self, f: &[f64], out: &mut [f64]) {
        let n_b = self.grid.n_bins();
        assert_eq!(f.len(), n_b, "input length must equal n_b");
        assert_eq!(out.len(), n_b, "output length must equal n_b");
        match &self.dense {
            Some(rows) => {
                out.fill(0.0);
                for (fm, row) in f.iter().zip(rows.chunks_exact(n_b)) {
                    if *fm != 0.0 {
                        out.iter_mut().zip(row).for_each(|(o, p)| *o += fm * p);
                    }
                }
            }
            None => match &self.ops {
                Operator::Cell(c) => c.apply_left(f, out),
                Operator::Point(p) => p.apply_left(f, out),
            },
        }
    }
}

/// Stationary detection-time density and solver diagnostics.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StationaryResult {
    /// Density over bin centers (1/ns), `Σ pdf · t_bin = 1`.
    pub pdf: Vec<f64>,
    /// `1 − |λ₂|`, filled in only when requested on a dense kernel.
    pub gap: Option<f64>,
    pub iterations: usize,
    /// `‖f P̃ − f‖₁` for the returned probability vector.
    pub residual: f64,
}

impl StationaryResult {
    /// Probability mass per bin, `pdf · t_bin`.
    pub fn masses(&self, grid: &BinGrid) -> Vec<f64> {
        let t_bin = grid.bin_width();
        self.pdf.iter().map(|v| v * t_bin).collect()
    }
}

/// Power iteration for the leading left eigenvector from a uniform start.
pub fn stationary_distribution(
    kernel: &TransitionKernel,
    tol: f64,
    max_iter: usize,
) -> Result<StationaryResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let n_b = kernel.grid.n_bins();
    let mut f = vec![1.0 / n_b as f64; n_b];
    let mut next = vec![0.0; n_b];
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        kernel.apply_left(&f, &mut next);
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        change = l1_distance(&f, &next);
        std::mem::swap(&mut f, &mut next);
        iterations += 1;
        if change < tol {
            break;
        }
    }
    if !(change < tol) {
        return Err(Error::NotConverged {
            iterations,
            residual: change,
        });
    }
    kernel.apply_left(&f, &mut next);
    let residual = l1_distance(&f, &next);
    let t_bin = kernel.grid.bin_width();
    let pdf = f.iter().map(|v| v / t_bin).collect();
    Ok(StationaryResult {
        pdf,
        gap: None,
        iterations,
        residual,
    })
}

/// Stationary pdf with default tolerance and a matrix-free cell-averaged kernel.
pub fn detection_pdf(model: &SceneModel, grid: &BinGrid) -> Result<Vec<f64>> {
    detection_pdf_with(model, grid, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// [`detection_pdf`] with explicit power-iteration settings.
pub fn detection_pdf_with(
    model: &SceneModel,
    grid: &BinGrid,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let kernel = build_kernel(model, grid, KernelOptions::default())?;
    Ok(stationary_distribution(&kernel, tol, max_iter)?.pdf)
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `1 − |λ₂|` of a dense kernel.
pub fn spectral_gap(kernel: &TransitionKernel) -> Result<f64> {
    let rows = kernel.matrix().ok_or(Error::UnsupportedMode)?;
    dense_spectral_gap(rows, kernel.grid.n_bins())
}

/// `1 − |λ₂|` for a row-major `n × n` row-stochastic matrix.
pub fn dense_spectral_gap(rows: &[f64], n: usize) -> Result<f64> {
    if n < 2 || rows.len() != n * n {
        return Err(Error::InvalidArgument(format!(
            "expected a square matrix with n >= 2, got {} entries for n = {n}",
            rows.len()
        )));
    }
    let m = DMatrix::from_row_slice(n, n, rows);
    let mut moduli: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    Ok(1.0 - moduli[1])
}

/// Which distribution a Fisher information refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    Arrival,
    Detection,
}

/// Fisher information about τ per detection (1/ns²), by central
/// differences of the pdf under a delay shift of `delta_tau`.
///
/// The step is rounded to a whole number of bins (at least one), so the
/// shifted pdfs are exact circular shifts of the pdf at τ.
pub fn fisher_information(
    model: &SceneModel,
    grid: &BinGrid,
    which: Distribution,
    delta_tau: f64,
) -> Result<f64> {
    if !(delta_tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "delta_tau must be positive, got {delta_tau}"
        )));
    }
    let pdf = match which {
        Distribution::Arrival => arrival_pdf(model, grid)?,
        Distribution::Detection => detection_pdf(model, grid)?,
    };
    let n_b = pdf.len();
    let t_bin = grid.bin_width();
    let k = ((delta_tau / t_bin).round() as usize).clamp(1, n_b / 2);
    let step = k as f64 * t_bin;
    let fi = (0..n_b)
        .map(|i| {
            // A delay increase moves mass to later bins.
            let plus = pdf[(i + n_b - k) % n_b];
            let minus = pdf[(i + k) % n_b];
            let d = (plus - minus) / (2.0 * step);
            d * d / pdf[i].max(DENSITY_FLOOR)
        })
        .sum::<f64>()
        * t_bin;
    Ok(fi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig2(s: f64, b: f64) -> SceneModel {
        SceneModel::new(100.0, 75.0, 2.0, s, b, 50.0).unwrap()
    }

    #[test]
    fn transition_pdf_integrates_to_one() {
        let m = fig2(3.16, 3.16);
        let n = 40_000;
        let h = m.t_r / n as f64;
        for y in [0.0, 12.3, 49.0, 99.9] {
            let total: f64 = (0..n)
                .map(|k| transition_pdf(&m, y, (k as f64 + 0.5) * h).unwrap() * h)
                .sum();
            assert!((total - 1.0).abs() < 1e-6, "y={y}: {total}");
        }
    }

    #[test]
    fn transition_pdf_background_closed_form() {
        let m = fig2(0.0, 1.0);
        let lb = m.background_rate();
        for (y, x) in [(10.0, 90.0), (10.0, 80.0), (60.0, 20.0), (0.0, 75.5)] {
            let gap = (x - y - 75.0f64).rem_euclid(100.0);
            let want = lb * (-lb * gap).exp() / -(-1.0f64).exp_m1();
            let got = transition_pdf(&m, y, x).unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn transition_pdf_rejects_zero_flux() {
        assert!(transition_pdf(&fig2(0.0, 0.0), 1.0, 2.0).is_err());
    }

    #[test]
    fn dense_rows_are_stochastic() {
        for d in [Discretization::CellAverage, Discretization::PointSample] {
            let m = fig2(3.16, 3.16);
            let g = BinGrid::for_model(&m, 200).unwrap();
            let k = build_kernel(&m, &g, KernelOptions::dense().with_discretization(d)).unwrap();
            for row in k.matrix().unwrap().chunks_exact(200) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                assert!(row.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn matrix_free_matches_dense() {
        for d in [Discretization::CellAverage, Discretization::PointSample] {
            for t_d in [75.0, 0.0, 100.0, 37.3] {
                let m = SceneModel::new(100.0, t_d, 2.0, 3.16, 0.562, 31.0).unwrap();
                let g = BinGrid::for_model(&m, 200).unwrap();
                let dense =
                    build_kernel(&m, &g, KernelOptions::dense().with_discretization(d)).unwrap();
                let free =
                    build_kernel(&m, &g, KernelOptions::default().with_discretization(d)).unwrap();
                let f: Vec<f64> = (0..200).map(|i| 1.0 + ((i * 37) % 11) as f64).collect();
                let mut a = vec![0.0; 200];
                let mut b = vec![0.0; 200];
                dense.apply_left(&f, &mut a);
                free.apply_left(&f, &mut b);
                let err = a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                assert!(err < 1e-8, "{d:?} t_d={t_d}: {err}");
            }
        }
    }

    #[test]
    fn background_only_rows_are_circular_shifts() {
        let m = fig2(0.0, 2.0);
        let g = BinGrid::for_model(&m, 64).unwrap();
        for d in [Discretization::CellAverage, Discretization::PointSample] {
            let k = build_kernel(&m, &g, KernelOptions::dense().with_discretization(d)).unwrap();
            for r in 1..64 {
                for c in 0..64 {
                    let diff = (k.entry(r, c) - k.entry(0, (c + 64 - r) % 64)).abs();
                    assert!(diff < 1e-12, "{d:?} ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn dense_cap_is_enforced() {
        let m = fig2(1.0, 1.0);
        let g = BinGrid::for_model(&m, 500).unwrap();
        let opts = KernelOptions {
            dense_cap: 100,
            ..KernelOptions::dense()
        };
        assert!(matches!(
            build_kernel(&m, &g, opts),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn whole_period_dead_time_leaves_pdf_unchanged() {
        for t_d in [100.0, 200.0] {
            let m = SceneModel::new(100.0, t_d, 2.0, 3.16, 3.16, 50.0).unwrap();
            let g = BinGrid::for_model(&m, 500).unwrap();
            let fd = detection_pdf(&m, &g).unwrap();
            let fa = arrival_pdf(&m, &g).unwrap();
            let err = fd
                .iter()
                .zip(&fa)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-8, "{err}");
        }
    }

    #[test]
    fn background_only_stationary_is_uniform() {
        let m = fig2(0.0, 3.0);
        let g = BinGrid::for_model(&m, 300).unwrap();
        let f = detection_pdf(&m, &g).unwrap();
        assert!(f.iter().all(|v| (v - 0.01).abs() < 1e-8));
    }

    #[test]
    fn stationary_residual_and_normalization() {
        let m = fig2(3.16, 3.16);
        let g = BinGrid::for_model(&m, 400).unwrap();
        let k = build_kernel(&m, &g, KernelOptions::default()).unwrap();
        let r = stationary_distribution(&k, 1e-11, 10_000).unwrap();
        assert!(r.residual < 1e-11);
        assert!((r.pdf.iter().sum::<f64>() * g.bin_width() - 1.0).abs() < 1e-9);
        assert!(r.pdf.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn nonconvergence_is_reported() {
        let m = fig2(3.16, 3.16);
        let g = BinGrid::for_model(&m, 200).unwrap();
        let k = build_kernel(&m, &g, KernelOptions::default()).unwrap();
        assert!(matches!(
            stationary_distribution(&k, 1e-14, 2),
            Err(Error::NotConverged { iterations: 2, .. })
        ));
    }

    #[test]
    fn delay_shift_rotates_stationary_pdf() {
        let m = fig2(3.16, 0.562);
        let g = BinGrid::for_model(&m, 400).unwrap();
        let base = detection_pdf(&m, &g).unwrap();
        let k = 37;
        let shifted = detection_pdf(&m.with_tau(m.tau + k as f64 * g.bin_width()), &g).unwrap();
        for i in 0..400 {
            assert!((shifted[(i + k) % 400] - base[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn rank_one_kernel_has_unit_gap() {
        let gap = dense_spectral_gap(&[0.5, 0.5, 0.5, 0.5], 2).unwrap();
        assert!((gap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn circulant_gap_matches_dft() {
        let n = 64;
        let m = fig2(0.0, 1.5);
        let g = BinGrid::for_model(&m, n).unwrap();
        let k = build_kernel(&m, &g, KernelOptions::dense()).unwrap();
        let row: Vec<f64> = (0..n).map(|c| k.entry(0, c)).collect();
        let mut moduli: Vec<f64> = (0..n)
            .map(|j| {
                let (mut re, mut im) = (0.0, 0.0);
                for (c, v) in row.iter().enumerate() {
                    let th = -2.0 * std::f64::consts::PI * (j * c) as f64 / n as f64;
                    re += v * th.cos();
                    im += v * th.sin();
                }
                re.hypot(im)
            })
            .collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        let gap = spectral_gap(&k).unwrap();
        assert!((gap - (1.0 - moduli[1])).abs() < 1e-9);
    }

    #[test]
    fn gap_needs_dense_kernel() {
        let m = fig2(1.0, 1.0);
        let g = BinGrid::for_model(&m, 50).unwrap();
        let k = build_kernel(&m, &g, KernelOptions::default()).unwrap();
        assert!(matches!(spectral_gap(&k), Err(Error::UnsupportedMode)));
    }

    #[test]
    fn gaussian_location_information() {
        let m = fig2(1.0, 0.0);
        let g = BinGrid::for_model(&m, 2000).unwrap();
        let fi = fisher_information(&m, &g, Distribution::Arrival, g.bin_width()).unwrap();
        assert_relative_eq!(fi, 1.0 / (m.sigma * m.sigma), max_relative = 1e-3);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn stationary_pdf_is_a_density(
            s in 0.0f64..5.0,
            b in 0.01f64..5.0,
            t_d in 1.0f64..150.0,
            tau in 0.0f64..100.0,
        ) {
            let m = SceneModel::new(100.0, t_d, 2.0, s, b, tau).unwrap();
            let grid = BinGrid::for_model(&m, 200).unwrap();
            let dense = build_kernel(&m, &grid, KernelOptions::dense()).unwrap();
            let free = build_kernel(&m, &grid, KernelOptions::default()).unwrap();
            let a = stationary_distribution(&dense, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let c = stationary_distribution(&free, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let mass: f64 = a.masses(&grid).iter().sum();
            proptest::prop_assert!((mass - 1.0).abs() < 1e-9);
            proptest::prop_assert!(a.pdf.iter().all(|&v| v >= 0.0));
            let diff = a.pdf.iter().zip(&c.pdf).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            proptest::prop_assert!(diff < 1e-7);
        }
    }
}
