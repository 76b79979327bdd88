//! Histogram correction: recovers per-bin arrival intensities from a
//! detection histogram by inverting the stationary condition
//! `T(λ) = h` with a monotone accelerated projected gradient method.

use serde::Serialize;

use crate::error::{Error, Result};

/// Default relative objective-change tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default iteration budget.
pub const DEFAULT_MAX_ITER: usize = 50_000;
/// Box bound multiplier applied to the largest initial intensity.
pub const BOX_FACTOR: f64 = 10.0;

/// `g_i = Σ_{k=i−n_d}^{i−1} h_k`, indices taken circularly.
pub fn gate_vector(h: &[f64], n_d: usize) -> Vec<f64> {
    let n_b = h.len();
    let mut g = vec![0.0; n_b];
    if n_b == 0 || n_d == 0 {
        return g;
    }
    // Running window sum; recomputed from scratch periodically to bound drift.
    let window = |i: usize| (1..=n_d).map(|k| h[(i + n_b * n_d - k) % n_b]).sum::<f64>();
    let mut acc = window(0);
    for i in 0..n_b {
        if i % 1024 == 0 {
            acc = window(i);
        }
        g[i] = acc;
        let enter = h[i];
        let leave = h[(i + n_b * n_d - n_d) % n_b];
        acc += enter - leave;
    }
    g
}

/// Data of one inversion: histogram, gate vector, total flux and box bound.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseProblem {
    h: Vec<f64>,
    g: Vec<f64>,
    flux: f64,
    bound: f64,
}

impl InverseProblem {
    /// Builds the problem from a histogram (normalized internally), the dead
    /// time in bins and the total flux Λ. The box bound defaults to
    /// `10 · max λ⁰` of the fixed-point initialization.
    pub fn new(hist: &[f64], n_d: usize, flux: f64) -> Result<Self> {
        let mut p = Self::unbounded(hist, n_d, flux)?;
        let (_, lambda0) = fixed_point(&p);
        let peak = lambda0.iter().cloned().fold(0.0, f64::max);
        p.bound = if peak > 0.0 { BOX_FACTOR * peak } else { flux };
        Ok(p)
    }

    /// Same as [`InverseProblem::new`] with an explicit box bound `M`.
    pub fn with_bound(hist: &[f64], n_d: usize, flux: f64, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "box bound must be positive, got {bound}"
            )));
        }
        let mut p = Self::unbounded(hist, n_d, flux)?;
        p.bound = bound;
        Ok(p)
    }

    fn unbounded(hist: &[f64], n_d: usize, flux: f64) -> Result<Self> {
        let n_b = hist.len();
        if n_b < 2 {
            return Err(Error::InvalidArgument(
                "histogram needs at least two bins".into(),
            ));
        }
        if n_d >= n_b {
            return Err(Error::InvalidArgument(format!(
                "n_d = {n_d} must be below n_b = {n_b}"
            )));
        }
        if !(flux.is_finite() && flux > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "flux must be positive, got {flux}"
            )));
        }
        if hist.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "histogram entries must be finite and >= 0".into(),
            ));
        }
        let total: f64 = hist.iter().sum();
        if total <= 0.0 {
            return Err(Error::InsufficientData("histogram is empty".into()));
        }
        let h: Vec<f64> = hist.iter().map(|v| v / total).collect();
        let g = gate_vector(&h, n_d);
        Ok(InverseProblem {
            h,
            g,
            flux,
            bound: f64::INFINITY,
        })
    }

    pub fn histogram(&self) -> &[f64] {
        &self.h
    }

    pub fn gate(&self) -> &[f64] {
        &self.g
    }

    pub fn flux(&self) -> f64 {
        self.flux
    }

    /// Upper box bound `M`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn n_bins(&self) -> usize {
        self.h.len()
    }
}

/// `T(λ) = −g∘λ + λ/Λ + (gᵀλ)λ/Λ`.
pub fn forward_operator(lambda: &[f64], p: &InverseProblem) -> Vec<f64> {
    let gl = dot(&p.g, lambda);
    let scale = (1.0 + gl) / p.flux;
    lambda
        .iter()
        .zip(&p.g)
        .map(|(&l, &g)| l * (scale - g))
        .collect()
}

/// `D(λ) = ½‖h − T(λ)‖²`.
pub fn objective(lambda: &[f64], p: &InverseProblem) -> f64 {
    let t = forward_operator(lambda, p);
    0.5 * t
        .iter()
        .zip(&p.h)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
}

/// `∇D(λ) = J(λ)ᵀ (T(λ) − h)` with h, g and Λ held fixed.
pub fn gradient(lambda: &[f64], p: &InverseProblem) -> Vec<f64> {
    let mut out = vec![0.0; lambda.len()];
    gradient_into(lambda, p, &mut out);
    out
}

/// Writes the gradient into `out` and returns `D(λ)`.
fn gradient_into(lambda: &[f64], p: &InverseProblem, out: &mut [f64]) -> f64 {
    let gl = dot(&p.g, lambda);
    let scale = (1.0 + gl) / p.flux;
    let mut lv = 0.0;
    let mut d = 0.0;
    for i in 0..lambda.len() {
        let r = lambda[i] * (scale - p.g[i]) - p.h[i];
        out[i] = r;
        lv += lambda[i] * r;
        d += r * r;
    }
    let c = lv / p.flux;
    for i in 0..lambda.len() {
        let r = out[i];
        out[i] = p.g[i] * c + (scale - p.g[i]) * r;
    }
    0.5 * d
}

/// Closed-form bound `L_u` on the Lipschitz constant of ∇D over the box
/// `[0, M]^{n_b}`. Its derivation takes `‖g‖ ≤ 1`, while `Σ g = n_d` for a
/// normalized histogram, so the true constant can exceed it.
pub fn lipschitz_bound(n_b: usize, bound: f64, flux: f64) -> f64 {
    let n = n_b as f64;
    let inv = 1.0 / flux;
    2.0 * inv * inv * n * bound * bound
        + (2.0 * inv * inv + 2.0 + 6.0 * inv) * n.sqrt() * bound
        + 4.0 * inv
        + 2.0
}

/// Lipschitz bound of ∇D over `[0, M]^{n_b}` using the actual gate vector:
/// `κ² + 2‖g‖(τ + ‖h‖)/Λ` with `κ = (2‖g‖√n_b·M + 1)/Λ + max g` and
/// `τ = (‖g‖ n_b M² + √n_b M)/Λ + max g·√n_b M`.
pub fn certified_lipschitz_bound(p: &InverseProblem) -> f64 {
    let inv = 1.0 / p.flux;
    let g_norm = dot(&p.g, &p.g).sqrt();
    let g_max = p.g.iter().cloned().fold(0.0, f64::max);
    let h_norm = dot(&p.h, &p.h).sqrt();
    let u = (p.n_bins() as f64).sqrt() * p.bound;
    let kappa = inv * (2.0 * g_norm * u + 1.0) + g_max;
    let tau = inv * (g_norm * u * u + u) + g_max * u;
    kappa * kappa + 2.0 * inv * g_norm * (tau + h_norm)
}

/// Result of the fixed-point initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointInit {
    /// Root `Ĉ = gᵀλ⁰`.
    pub c_hat: f64,
    /// Initial intensities, clipped to the box.
    pub lambda0: Vec<f64>,
    /// True when bisection failed and `λ⁰ = Λ·h` was used instead.
    pub fallback: bool,
}

/// Solves `C = Σ h_i g_i / ((1+C)/Λ − g_i)` by bisection and sets
/// `λ⁰_i = h_i / ((1+Ĉ)/Λ − g_i)`, which satisfies `T(λ⁰) = h`.
pub fn init_fixed_point(p: &InverseProblem) -> FixedPointInit {
    let (c_hat, lambda0) = fixed_point(p);
    match c_hat {
        Some(c) => FixedPointInit {
            c_hat: c,
            lambda0: lambda0.into_iter().map(|v| v.clamp(0.0, p.bound)).collect(),
            fallback: false,
        },
        None => {
            log::warn!("fixed-point initialization failed; starting from flux-scaled histogram");
            FixedPointInit {
                c_hat: 0.0,
                lambda0: p
                    .h
                    .iter()
                    .map(|v| (v * p.flux).clamp(0.0, p.bound))
                    .collect(),
                fallback: true,
            }
        }
    }
}

fn fixed_point(p: &InverseProblem) -> (Option<f64>, Vec<f64>) {
    let flux = p.flux;
    let g_max = p.g.iter().cloned().fold(0.0, f64::max);
    let excess = |c: f64| {
        let s = (1.0 + c) / flux;
        c - p
            .h
            .iter()
            .zip(&p.g)
            .map(|(&h, &g)| h * g / (s - g))
            .sum::<f64>()
    };
    let floor = (flux * g_max - 1.0).max(0.0);
    let mut lo = floor + 1e-12 * floor.max(1.0);
    let root = if excess(lo) >= 0.0 {
        Some(lo)
    } else {
        let mut hi = (2.0 * lo).max(1.0);
        let mut ok = true;
        while excess(hi) < 0.0 {
            hi *= 2.0;
            if !hi.is_finite() || hi > 1e300 {
                ok = false;
                break;
            }
        }
        if ok {
            for _ in 0..400 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if excess(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let c = 0.5 * (lo + hi);
            c.is_finite().then_some(c)
        } else {
            None
        }
    };
    let lambda0 = match root {
        Some(c) => {
            let s = (1.0 + c) / flux;
            p.h.iter()
                .zip(&p.g)
                .map(|(&h, &g)| h / (s - g))
                .collect::<Vec<_>>()
        }
        None => Vec::new(),
    };
    if lambda0.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return (None, Vec::new());
    }
    (root, lambda0)
}

/// Starting point of the solver.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    #[default]
    FixedPoint,
    /// Caller-supplied intensities, projected onto the box.
    Given(Vec<f64>),
}

/// Source of the step size `1/L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// `L = L_u` from [`lipschitz_bound`].
    #[default]
    ClosedForm,
    /// `L` from [`certified_lipschitz_bound`].
    Certified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub init: Init,
    pub step: StepRule,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            init: Init::FixedPoint,
            step: StepRule::ClosedForm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tolerance,
    MaxIter,
}

/// Recovered intensities and solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionResult {
    /// Per-bin expected arrivals, inside `[0, M]`.
    pub lambda_hat: Vec<f64>,
    /// `F(λ^k)` for k = 0, 1, ...
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub terminated: Termination,
    /// `λ̂ / Σ λ̂`; empty when `λ̂` is identically zero.
    pub corrected_hist: Vec<f64>,
    pub box_bound: f64,
    pub step_size: f64,
}

impl CorrectionResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

/// `ĥ^A = λ̂ / Σλ̂`.
pub fn corrected_histogram(result: &CorrectionResult) -> Result<Vec<f64>> {
    normalize(&result.lambda_hat)
}

fn normalize(lambda: &[f64]) -> Result<Vec<f64>> {
    let s: f64 = lambda.iter().sum();
    if !(s > 0.0) {
        return Err(Error::DegenerateResult(
            "recovered intensity is identically zero".into(),
        ));
    }
    Ok(lambda.iter().map(|v| v / s).collect())
}

/// Monotone accelerated projected gradient with step `1/L`.
pub fn solve_mchc(p: &InverseProblem, options: &SolverOptions) -> Result<CorrectionResult> {
    let n = p.n_bins();
    let m = p.bound;
    if !m.is_finite() {
        return Err(Error::InvalidArgument("box bound must be finite".into()));
    }
    let mut lam = match &options.init {
        Init::FixedPoint => init_fixed_point(p).lambda0,
        Init::Given(v) => {
            if v.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "initial vector has {} entries, expected {n}",
                    v.len()
                )));
            }
            v.iter().map(|x| x.clamp(0.0, m)).collect()
        }
    };
    let step = match options.step {
        StepRule::ClosedForm => 1.0 / lipschitz_bound(n, m, p.flux),
        StepRule::Certified => 1.0 / certified_lipschitz_bound(p),
    };
    let project = |x: f64| x.clamp(0.0, m);

    let mut grad = vec![0.0; n];
    let mut f = objective(&lam, p);
    let mut trace = vec![f];
    let mut prev = lam.clone();
    let mut z = lam.clone();
    let mut y = vec![0.0; n];
    let mut x = vec![0.0; n];
    let (mut q_prev, mut q) = (0.0f64, 1.0f64);
    let mut terminated = Termination::MaxIter;
    let mut iterations = 0;

    while iterations < options.max_iter {
        for i in 0..n {
            y[i] =
                lam[i] + (q_prev / q) * (z[i] - lam[i]) + ((q_prev - 1.0) / q) * (lam[i] - prev[i]);
        }
        gradient_into(&y, p, &mut grad);
        for i in 0..n {
            z[i] = project(y[i] - step * grad[i]);
        }
        gradient_into(&lam, p, &mut grad);
        for i in 0..n {
            x[i] = project(lam[i] - step * grad[i]);
        }
        let fz = objective(&z, p);
        let fx = objective(&x, p);
        q_prev = q;
        q = ((4.0 * q * q + 1.0).sqrt() + 1.0) / 2.0;
        std::mem::swap(&mut prev, &mut lam);
        let f_new = if fz <= fx && fz <= f {
            lam.copy_from_slice(&z);
            fz
        } else if fx <= f {
            lam.copy_from_slice(&x);
            fx
        } else {
            // Rounding can make both candidates marginally worse.
            lam.copy_from_slice(&prev);
            f
        };
        iterations += 1;
        trace.push(f_new);
        let change = (f - f_new).abs() / f.max(1e-30);
        f = f_new;
        if change < options.tol {
            terminated = Termination::Tolerance;
            break;
        }
    }

    let corrected_hist = normalize(&lam).unwrap_or_default();
    Ok(CorrectionResult {
        lambda_hat: lam,
        objective_trace: trace,
        iterations,
        terminated,
        corrected_hist,
        box_bound: m,
        step_size: step,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gate_hand_example() {
        let g = gate_vector(&[0.1, 0.2, 0.3, 0.4], 2);
        let want = [0.7, 0.5, 0.3, 0.5];
        for (a, b) in g.iter().zip(want) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(gate_vector(&[0.1, 0.2, 0.3, 0.4], 0)
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn gate_sum_counts_each_bin_n_d_times() {
        let h: Vec<f64> = (0..3000).map(|i| ((i * 7919) % 101) as f64).collect();
        let s: f64 = h.iter().sum();
        let h: Vec<f64> = h.iter().map(|v| v / s).collect();
        let g = gate_vector(&h, 1500);
        assert_relative_eq!(g.iter().sum::<f64>(), 1500.0, max_relative = 1e-10);
        for (i, v) in g.iter().enumerate().step_by(97) {
            let direct: f64 = (1..=1500).map(|k| h[(i + 3000 - k) % 3000]).sum();
            assert_relative_eq!(*v, direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_operator_trivial_cases() {
        let h = [0.1, 0.2, 0.3, 0.4];
        let p = InverseProblem::with_bound(&h, 0, 2.0, 10.0).unwrap();
        let lam: Vec<f64> = h.iter().map(|v| v * 2.0).collect();
        for (a, b) in forward_operator(&lam, &p).iter().zip(h) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(forward_operator(&[0.0; 4], &p).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lipschitz_hand_value() {
        assert_relative_eq!(lipschitz_bound(4, 1.0, 1.0), 34.0, epsilon = 1e-12);
        assert!(lipschitz_bound(4, 2.0, 1.0) > lipschitz_bound(4, 1.0, 1.0));
        assert!(lipschitz_bound(9, 1.0, 1.0) > lipschitz_bound(4, 1.0, 1.0));
    }

    #[test]
    fn fixed_point_uniform_case() {
        let n = 10;
        let h = vec![1.0 / n as f64; n];
        let p = InverseProblem::with_bound(&h, 5, 1.0, 1.0).unwrap();
        let init = init_fixed_point(&p);
        assert!(!init.fallback);
        assert_relative_eq!(init.c_hat, 0.5, epsilon = 1e-12);
        for v in init.lambda0 {
            assert_relative_eq!(v, 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn fixed_point_without_gate_is_scaled_histogram() {
        let h = [0.1, 0.2, 0.3, 0.4];
        let p = InverseProblem::with_bound(&h, 0, 3.0, 10.0).unwrap();
        let init = init_fixed_point(&p);
        assert!(init.c_hat.abs() < 1e-9);
        for (a, b) in init.lambda0.iter().zip(h) {
            assert_relative_eq!(*a, 3.0 * b, epsilon = 1e-9);
        }
    }

    #[test]
    fn fixed_point_reproduces_histogram() {
        let h: Vec<f64> = (0..200)
            .map(|i| 1.0 + (i as f64 * 0.1).sin().powi(2))
            .collect();
        let p = InverseProblem::new(&h, 120, 4.0).unwrap();
        let init = init_fixed_point(&p);
        let t = forward_operator(&init.lambda0, &p);
        for (a, b) in t.iter().zip(p.histogram()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_relative_eq!(
            p.bound(),
            10.0 * init.lambda0.iter().cloned().fold(0.0, f64::max)
        );
    }

    #[test]
    fn gradient_vanishes_at_exact_solution() {
        let h: Vec<f64> = (0..50).map(|i| 1.0 + (i % 7) as f64).collect();
        let p = InverseProblem::new(&h, 20, 2.5).unwrap();
        let lam0 = init_fixed_point(&p).lambda0;
        assert!(gradient(&lam0, &p).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn solver_without_gate_returns_scaled_histogram() {
        let h = [0.1, 0.2, 0.3, 0.4];
        let p = InverseProblem::with_bound(&h, 0, 2.0, 5.0).unwrap();
        let opts = SolverOptions {
            init: Init::Given(vec![0.5; 4]),
            max_iter: 20_000,
            tol: 1e-14,
            ..SolverOptions::default()
        };
        let r = solve_mchc(&p, &opts).unwrap();
        for (a, b) in r.lambda_hat.iter().zip(h) {
            assert!((a - 2.0 * b).abs() < 1e-5, "{a} vs {}", 2.0 * b);
        }
    }

    #[test]
    fn corrected_histogram_normalizes() {
        let r = CorrectionResult {
            lambda_hat: vec![1.0, 3.0],
            objective_trace: vec![0.0],
            iterations: 0,
            terminated: Termination::Tolerance,
            corrected_hist: vec![],
            box_bound: 10.0,
            step_size: 0.1,
        };
        assert_eq!(corrected_histogram(&r).unwrap(), vec![0.25, 0.75]);
        let zero = CorrectionResult {
            lambda_hat: vec![0.0, 0.0],
            ..r
        };
        assert!(matches!(
            corrected_histogram(&zero),
            Err(Error::DegenerateResult(_))
        ));
    }

    #[test]
    fn rejects_bad_problems() {
        assert!(InverseProblem::new(&[0.0, 0.0, 0.0], 1, 1.0).is_err());
        assert!(InverseProblem::new(&[1.0, 1.0], 2, 1.0).is_err());
        assert!(InverseProblem::new(&[1.0, 1.0], 1, 0.0).is_err());
        assert!(InverseProblem::with_bound(&[1.0, 1.0], 1, 1.0, -1.0).is_err());
    }

    fn random_problem(h: &[f64], n_d: usize, flux: f64) -> InverseProblem {
        InverseProblem::new(h, n_d, flux).unwrap()
    }

    proptest::proptest! {
        #[test]
        fn gradient_matches_finite_differences(
            h in proptest::collection::vec(0.01f64..1.0, 12..30),
            lam in proptest::collection::vec(0.0f64..0.5, 30),
            n_d in 1usize..10,
            flux in 0.2f64..5.0,
        ) {
            let p = random_problem(&h, n_d, flux);
            let lam = &lam[..h.len()];
            let g = gradient(lam, &p);
            let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs())) + 1e-12;
            // Five-point stencil; exact up to rounding for the quartic objective.
            for i in 0..lam.len() {
                let e = 1e-2;
                let at = |d: f64| {
                    let mut x = lam.to_vec();
                    x[i] += d;
                    objective(&x, &p)
                };
                let fd = (-at(2.0 * e) + 8.0 * at(e) - 8.0 * at(-e) + at(-2.0 * e)) / (12.0 * e);
                proptest::prop_assert!((fd - g[i]).abs() <= 1e-8 * scale);
            }
        }

        #[test]
        fn gradient_is_lipschitz_on_the_box(
            h in proptest::collection::vec(0.01f64..1.0, 8..20),
            u in proptest::collection::vec(0.0f64..1.0, 40),
            n_d in 1usize..6,
            flux in 0.2f64..5.0,
        ) {
            let p = random_problem(&h, n_d, flux);
            let n = h.len();
            let m = p.bound();
            let a: Vec<f64> = u[..n].iter().map(|v| v * m).collect();
            let b: Vec<f64> = u[n..2 * n].iter().map(|v| v * m).collect();
            let ga = gradient(&a, &p);
            let gb = gradient(&b, &p);
            let num = ga.iter().zip(&gb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            let den = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            proptest::prop_assume!(den > 0.0);
            proptest::prop_assert!(num / den <= certified_lipschitz_bound(&p));
        }

        #[test]
        fn solver_objective_never_increases(
            h in proptest::collection::vec(0.0f64..1.0, 10..40),
            start in proptest::collection::vec(0.0f64..2.0, 40),
            n_d in 1usize..8,
            flux in 0.5f64..6.0,
        ) {
            proptest::prop_assume!(h.iter().sum::<f64>() > 0.0);
            let p = random_problem(&h, n_d, flux);
            let opts = SolverOptions {
                max_iter: 300,
                tol: 0.0,
                init: Init::Given(start[..h.len()].to_vec()),
                ..SolverOptions::default()
            };
            let r = solve_mchc(&p, &opts).unwrap();
            for w in r.objective_trace.windows(2) {
                proptest::prop_assert!(w[1] <= w[0]);
            }
            proptest::prop_assert!(r.lambda_hat.iter().all(|&v| (0.0..=p.bound()).contains(&v)));
        }
    }

    #[test]
    fn closed_form_bound_can_be_exceeded() {
        // Concentrated histogram with a wide gate: ‖g‖ ≈ √n_d.
        let mut h = vec![0.0; 50];
        h[0] = 1.0;
        let p = InverseProblem::with_bound(&h, 40, 1.0, 1.0).unwrap();
        let u = vec![1.0; 50];
        let mut v = u.clone();
        v[10] = 0.999;
        let dg: Vec<f64> = gradient(&u, &p)
            .iter()
            .zip(gradient(&v, &p))
            .map(|(a, b)| a - b)
            .collect();
        let ratio = dot(&dg, &dg).sqrt() / 1e-3;
        assert!(ratio > lipschitz_bound(50, 1.0, 1.0));
        assert!(ratio <= certified_lipschitz_bound(&p));
    }

    #[test]
    fn certified_step_also_descends() {
        let h: Vec<f64> = (0..60)
            .map(|i| 1.0 + (i as f64 * 0.3).sin().abs())
            .collect();
        let p = InverseProblem::new(&h, 20, 2.0).unwrap();
        let opts = SolverOptions {
            max_iter: 200,
            init: Init::Given(vec![0.1; 60]),
            step: StepRule::Certified,
            ..SolverOptions::default()
        };
        let r = solve_mchc(&p, &opts).unwrap();
        assert!(r.step_size < 1.0 / lipschitz_bound(60, p.bound(), 2.0));
        assert!(r.final_objective() < r.objective_trace[0]);
    }
}
