//! One-dimensional Wasserstein-p distances against the standard normal and
//! between samples, normal CDF/quantile primitives, the Stein-equation
//! solver, and log-log rate fitting.
//!
//! In one dimension the optimal coupling is monotone, so W_p is the L^p
//! distance between quantile functions; the estimators below are direct
//! discretizations of that integral.

use crate::error::{Error, Result};
use crate::functions::Smooth;
use crate::numeric::{gauss_hermite, gauss_legendre, ols_fit, pairwise_sum};

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail Phi^c(x) = 1 - Phi(x), computed without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Quantile function on (0, 1): Acklam's rational approximation polished by
/// one Halley step. Absolute error is far below 1e-9 on (1e-12, 1-1e-12).
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(0.0 < u && u < 1.0) {
        return Err(Error::domain(format!(
            "quantile argument {u} outside (0,1)"
        )));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const U_LOW: f64 = 0.02425;
    let x = if u < U_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - U_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    };
    // Halley polish
    let e = normal_cdf(x) - u;
    let r = e / normal_pdf(x);
    Ok(x - r / (1.0 + x * r / 2.0))
}

/// A sorted sample.
#[derive(Debug, Clone)]
pub struct SampleVector {
    values: Vec<f64>,
}

impl SampleVector {
    /// Sorts the input.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::domain("samples need at least 2 points"));
        }
        values.sort_by(f64::total_cmp);
        Ok(SampleVector { values })
    }

    /// Requires presorted input.
    pub fn from_sorted(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::domain("samples need at least 2 points"));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::domain("input is not sorted ascending"));
        }
        Ok(SampleVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Right-continuous empirical quantile at level q in (0, 1).
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.values.len();
        let idx = ((q * n as f64).ceil() as usize).clamp(1, n);
        self.values[idx - 1]
    }
}

/// Estimator variants for the one-sample distance to N(0,1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WpMethod {
    /// Quantile coupling at midpoints (i - 1/2)/n.
    Midpoint,
    /// Panel quadrature of the quantile-coupling integral.
    Quadrature,
}

const TAIL_CLAMP: f64 = 1e-12;

/// W_p between the empirical law of the sample and N(0,1) via the quantile
/// coupling.
pub fn wp_vs_normal(sample: &SampleVector, p: f64, method: WpMethod) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::domain("p must be >= 1"));
    }
    let n = sample.len();
    let nf = n as f64;
    match method {
        WpMethod::Midpoint => {
            let terms: Vec<f64> = sample
                .values
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let u = (i as f64 + 0.5) / nf;
                    (x - normal_quantile(u).expect("u in (0,1)")).abs().powf(p)
                })
                .collect();
            Ok((pairwise_sum(&terms) / nf).powf(1.0 / p))
        }
        WpMethod::Quadrature => {
            let (nodes, weights) = gauss_legendre(16);
            let terms: Vec<f64> = sample
                .values
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let lo = i as f64 / nf;
                    let hi = (i as f64 + 1.0) / nf;
                    let mut acc = 0.0;
                    for (&t, &w) in nodes.iter().zip(&weights) {
                        let u =
                            (lo + (hi - lo) * 0.5 * (t + 1.0)).clamp(TAIL_CLAMP, 1.0 - TAIL_CLAMP);
                        acc += w * (x - normal_quantile(u).expect("clamped")).abs().powf(p);
                    }
                    acc * (hi - lo) * 0.5
                })
                .collect();
            Ok(pairwise_sum(&terms).powf(1.0 / p))
        }
    }
}

/// Two-sample W_p under the 1-d monotone coupling. Equal lengths pair order
/// statistics directly; otherwise both quantile functions are evaluated at
/// the midpoints of the finer grid.
pub fn wp_two_sample(a: &SampleVector, b: &SampleVector, p: f64) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::domain("p must be >= 1"));
    }
    if a.len() == b.len() {
        let n = a.len() as f64;
        let terms: Vec<f64> = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(&x, &y)| (x - y).abs().powf(p))
            .collect();
        return Ok((pairwise_sum(&terms) / n).powf(1.0 / p));
    }
    let n = a.len().max(b.len());
    let nf = n as f64;
    let terms: Vec<f64> = (0..n)
        .map(|i| {
            let u = (i as f64 + 0.5) / nf;
            (a.quantile(u) - b.quantile(u)).abs().powf(p)
        })
        .collect();
    Ok((pairwise_sum(&terms) / nf).powf(1.0 / p))
}

// ---------------------------------------------------------------------------
// Stein equation
// ---------------------------------------------------------------------------

/// Solver for f' (w) - w f(w) = h(w) - N h, carrying its quadrature state.
pub struct SteinSolver {
    gh_nodes: Vec<f64>,
    gh_weights: Vec<f64>,
    gl_nodes: Vec<f64>,
    gl_weights: Vec<f64>,
    /// Upper limit of the one-sided integral; the e^{-s^2/2} factor is below
    /// 1e-42 there.
    s_max: f64,
    panels: usize,
}

impl Default for SteinSolver {
    fn default() -> Self {
        Self::new()
    }
}

impl SteinSolver {
    pub fn new() -> Self {
        let (gh_nodes, gh_weights) = gauss_hermite(64);
        let (gl_nodes, gl_weights) = gauss_legendre(32);
        SteinSolver {
            gh_nodes,
            gh_weights,
            gl_nodes,
            gl_weights,
            s_max: 14.0,
            panels: 14,
        }
    }

    /// N h = E[h(Z)] by 64-node Gauss-Hermite.
    pub fn normal_mean(&self, h: &dyn Smooth) -> f64 {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let terms: Vec<f64> = self
            .gh_nodes
            .iter()
            .zip(&self.gh_weights)
            .map(|(&x, &w)| w * h.eval(std::f64::consts::SQRT_2 * x))
            .collect();
        pairwise_sum(&terms) / sqrt_pi
    }

    /// f_h(w), evaluating the better-conditioned one-sided integral: the
    /// weight is e^{-|w| s - s^2/2} on both branches.
    pub fn solve(&self, h: &dyn Smooth, w: f64) -> f64 {
        let nh = self.normal_mean(h);
        self.solve_with_mean(h, nh, w)
    }

    pub fn solve_with_mean(&self, h: &dyn Smooth, nh: f64, w: f64) -> f64 {
        let step = self.s_max / self.panels as f64;
        let mut acc = 0.0;
        for panel in 0..self.panels {
            let lo = panel as f64 * step;
            for (&t, &wt) in self.gl_nodes.iter().zip(&self.gl_weights) {
                let s = lo + step * 0.5 * (t + 1.0);
                let weight = (-w.abs() * s - s * s / 2.0).exp();
                let arg = if w >= 0.0 { w + s } else { w - s };
                acc += wt * weight * (h.eval(arg) - nh) * step * 0.5;
            }
        }
        if w >= 0.0 {
            -acc
        } else {
            acc
        }
    }

    /// `solve` with a convergence check: the panel count is doubled and the
    /// two evaluations must agree, else the quadrature is flagged.
    pub fn solve_checked(&self, h: &dyn Smooth, w: f64) -> Result<f64> {
        let nh = self.normal_mean(h);
        if !nh.is_finite() {
            return Err(Error::Quadrature(format!("N h diverges for w = {w}")));
        }
        let coarse = self.solve_with_mean(h, nh, w);
        let fine = SteinSolver {
            gh_nodes: self.gh_nodes.clone(),
            gh_weights: self.gh_weights.clone(),
            gl_nodes: self.gl_nodes.clone(),
            gl_weights: self.gl_weights.clone(),
            s_max: self.s_max,
            panels: self.panels * 2,
        }
        .solve_with_mean(h, nh, w);
        if !coarse.is_finite() || (coarse - fine).abs() > 1e-8 * (1.0 + coarse.abs()) {
            return Err(Error::Quadrature(format!(
                "panel refinement moved f_h({w}) from {coarse} to {fine}"
            )));
        }
        Ok(fine)
    }

    /// |f'(w) - w f(w) - h(w) + N h| with f' from 5-point central
    /// differences at step 1e-5.
    pub fn residual(&self, h: &dyn Smooth, w: f64) -> f64 {
        let nh = self.normal_mean(h);
        let d = 1e-5;
        let fp = (-self.solve_with_mean(h, nh, w + 2.0 * d)
            + 8.0 * self.solve_with_mean(h, nh, w + d)
            - 8.0 * self.solve_with_mean(h, nh, w - d)
            + self.solve_with_mean(h, nh, w - 2.0 * d))
            / (12.0 * d);
        let f = self.solve_with_mean(h, nh, w);
        (fp - w * f - h.eval(w) + nh).abs()
    }
}

/// Least squares on (log size, log distance): (slope, intercept, stderr).
pub fn fit_rate(sizes: &[usize], distances: &[f64]) -> Result<(f64, f64, f64)> {
    if sizes.len() != distances.len() {
        return Err(Error::shape("sizes and distances differ in length"));
    }
    if sizes.len() < 3 {
        return Err(Error::domain("rate fit needs at least 3 points"));
    }
    if distances.iter().any(|&d| d <= 0.0) {
        return Err(Error::domain(
            "distances must be positive for a log-log fit",
        ));
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = distances.iter().map(|&d| d.ln()).collect();
    Ok(ols_fit(&xs, &ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{Poly, Sinusoid, TanhFn};
    use crate::rng::Stream;

    #[test]
    fn cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.6448536269514722) - 0.95).abs() < 1e-12);
        assert!((normal_sf(3.0) - 1.349898031630094e-3).abs() < 1e-15);
        // symmetry without cancellation
        assert!((normal_sf(8.0) - normal_cdf(-8.0)).abs() < 1e-18);
    }

    #[test]
    fn quantile_round_trips() {
        let x = normal_quantile(normal_cdf(1.96)).unwrap();
        assert!((x - 1.96).abs() < 1e-9);
        for &u in &[1e-12, 1e-6, 0.3, 0.5, 0.7, 1.0 - 1e-6, 1.0 - 1e-12] {
            let x = normal_quantile(u).unwrap();
            assert!((normal_cdf(x) - u).abs() < 1e-11 * u.max(1.0 - u).max(1e-3));
        }
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn midpoint_estimator_is_exact_on_its_grid() {
        let n = 200;
        let values: Vec<f64> = (0..n)
            .map(|i| normal_quantile((i as f64 + 0.5) / n as f64).unwrap())
            .collect();
        let s = SampleVector::from_sorted(values).unwrap();
        let d = wp_vs_normal(&s, 1.0, WpMethod::Midpoint).unwrap();
        assert!(d < 1e-14);
    }

    #[test]
    fn translation_shifts_distance() {
        let n = 2000;
        let mu = 0.35;
        let values: Vec<f64> = (0..n)
            .map(|i| normal_quantile((i as f64 + 0.5) / n as f64).unwrap() + mu)
            .collect();
        let s = SampleVector::from_sorted(values).unwrap();
        for method in [WpMethod::Midpoint, WpMethod::Quadrature] {
            let d = wp_vs_normal(&s, 1.0, method).unwrap();
            assert!((d - mu).abs() < 2.0 / (n as f64).sqrt(), "{method:?}: {d}");
        }
    }

    #[test]
    fn distance_monotone_in_scale() {
        let n = 4000;
        let base: Vec<f64> = (0..n)
            .map(|i| normal_quantile((i as f64 + 0.5) / n as f64).unwrap())
            .collect();
        let mut prev = 0.0;
        for scale in [1.2, 1.5, 2.0, 3.0] {
            let s = SampleVector::from_sorted(base.iter().map(|x| x * scale).collect()).unwrap();
            let d = wp_vs_normal(&s, 1.0, WpMethod::Midpoint).unwrap();
            assert!(d > prev, "scale {scale}: {d} vs {prev}");
            prev = d;
        }
    }

    #[test]
    fn unsorted_input_rejected() {
        assert!(SampleVector::from_sorted(vec![1.0, 0.0]).is_err());
        assert!(SampleVector::new(vec![1.0]).is_err());
    }

    #[test]
    fn empirical_floor_for_normal_samples() {
        // R = 1e5 exact-normal samples sit within the documented floor.
        let n = 100_000;
        for seed in [1u64, 2, 3] {
            let mut s = Stream::from_seed(seed);
            let values: Vec<f64> = (0..n).map(|_| s.next_normal()).collect();
            let sv = SampleVector::new(values).unwrap();
            let d = wp_vs_normal(&sv, 1.0, WpMethod::Midpoint).unwrap();
            assert!(d < 0.02, "seed {seed}: {d}");
        }
    }

    #[test]
    fn quadrature_and_midpoint_converge_together() {
        // no order relation between the two estimators, but their gap
        // shrinks as the sample grows
        let mut gaps = Vec::new();
        for exp in [3u32, 4, 5] {
            let n = 10usize.pow(exp);
            let mut s = Stream::from_seed(exp as u64);
            let values: Vec<f64> = (0..n).map(|_| s.next_normal()).collect();
            let sv = SampleVector::new(values).unwrap();
            let mid = wp_vs_normal(&sv, 1.0, WpMethod::Midpoint).unwrap();
            let quad = wp_vs_normal(&sv, 1.0, WpMethod::Quadrature).unwrap();
            gaps.push((mid - quad).abs());
        }
        assert!(gaps[1] < gaps[0]);
        assert!(gaps[2] < gaps[1]);
    }

    #[test]
    fn two_sample_basics() {
        let a = SampleVector::new(vec![0.3, -1.0, 0.9, 2.0]).unwrap();
        assert!(wp_two_sample(&a, &a, 2.0).unwrap() < 1e-15);
        let shift = 0.75;
        let b = SampleVector::new(a.values().iter().map(|x| x + shift).collect()).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let d = wp_two_sample(&a, &b, p).unwrap();
            assert!((d - shift).abs() < 1e-12, "p={p}: {d}");
        }
    }

    #[test]
    fn monotone_coupling_beats_all_assignments() {
        // brute force over permutations at n = 8
        let mut rng = Stream::from_seed(23);
        let xs: Vec<f64> = (0..8).map(|_| rng.next_normal()).collect();
        let ys: Vec<f64> = (0..8).map(|_| rng.next_normal()).collect();
        let a = SampleVector::new(xs.clone()).unwrap();
        let b = SampleVector::new(ys.clone()).unwrap();
        for p in [1.0, 2.0] {
            let monotone = wp_two_sample(&a, &b, p).unwrap();
            let mut best = f64::INFINITY;
            let mut perm: Vec<usize> = (0..8).collect();
            permute(&mut perm, 0, &mut |perm| {
                let cost: f64 = (0..8)
                    .map(|i| (xs[i] - ys[perm[i]]).abs().powf(p))
                    .sum::<f64>()
                    / 8.0;
                best = best.min(cost.powf(1.0 / p));
            });
            assert!(monotone <= best + 1e-12, "p={p}: {monotone} vs {best}");
            assert!((monotone - best).abs() < 1e-9);
        }
    }

    fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == perm.len() {
            visit(perm);
            return;
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            permute(perm, k + 1, visit);
            perm.swap(k, i);
        }
    }

    #[test]
    fn two_sample_triangle_inequality() {
        let mut rng = Stream::from_seed(31);
        for _ in 0..10 {
            let n = 16;
            let a = SampleVector::new((0..n).map(|_| rng.next_normal()).collect()).unwrap();
            let b = SampleVector::new((0..n).map(|_| rng.next_normal()).collect()).unwrap();
            let c = SampleVector::new((0..n).map(|_| rng.next_normal()).collect()).unwrap();
            for p in [1.0, 2.0] {
                let ab = wp_two_sample(&a, &b, p).unwrap();
                let bc = wp_two_sample(&b, &c, p).unwrap();
                let ac = wp_two_sample(&a, &c, p).unwrap();
                assert!(ac <= ab + bc + 1e-12);
            }
        }
    }

    #[test]
    fn stein_linear_h_gives_constant_solution() {
        let solver = SteinSolver::new();
        let h = Poly::new(vec![0.0, 1.0]); // h(w) = w
        let mut w = -4.0;
        while w <= 4.0 {
            let f = solver.solve(&h, w);
            assert!((f + 1.0).abs() < 1e-6, "f({w}) = {f}");
            assert!(solver.residual(&h, w) < 1e-6);
            w += 0.5;
        }
    }

    #[test]
    fn stein_constant_h_gives_zero_solution() {
        let solver = SteinSolver::new();
        let h = Poly::new(vec![2.5]);
        for &w in &[-3.0, -0.4, 0.0, 1.7] {
            assert!(solver.solve(&h, w).abs() < 1e-12);
        }
    }

    #[test]
    fn stein_checked_flags_divergence() {
        use crate::functions::Expo;
        let solver = SteinSolver::new();
        assert!(solver
            .solve_checked(&Poly::new(vec![0.0, 1.0]), 1.3)
            .is_ok());
        // e^{60 Z} overflows the Gauss-Hermite mean: flagged, not garbage
        assert!(solver.solve_checked(&Expo { rate: 60.0 }, 0.0).is_err());
    }

    #[test]
    fn stein_residuals_small_for_regression_suite() {
        let solver = SteinSolver::new();
        let hs: Vec<Box<dyn Smooth>> = vec![
            Box::new(Poly::new(vec![0.0, 1.0])),
            Box::new(Sinusoid::sin()),
            Box::new(TanhFn),
        ];
        for h in &hs {
            let mut w = -4.0;
            while w <= 4.0 {
                let r = solver.residual(h.as_ref(), w);
                assert!(r < 1e-6, "residual {r} at w = {w}");
                w += 0.25;
            }
        }
    }

    #[test]
    fn fit_rate_recovers_known_slopes() {
        let sizes = [256usize, 512, 1024, 2048, 4096];
        let exact: Vec<f64> = sizes.iter().map(|&n| 3.0 * (n as f64).powf(-0.5)).collect();
        let (slope, _, se) = fit_rate(&sizes, &exact).unwrap();
        assert!((slope + 0.5).abs() < 1e-12);
        assert!(se < 1e-12);
        let constant = vec![2.0; 5];
        let (slope, _, _) = fit_rate(&sizes, &constant).unwrap();
        assert!(slope.abs() < 1e-12);
        // noisy synthetic: slope recovered within 0.05
        let mut rng = Stream::from_seed(77);
        let noisy: Vec<f64> = sizes
            .iter()
            .map(|&n| 3.0 * (n as f64).powf(-0.5) * (1.0 + 0.02 * rng.next_normal()))
            .collect();
        let (slope, _, _) = fit_rate(&sizes, &noisy).unwrap();
        assert!((slope + 0.5).abs() < 0.05);
        assert!(fit_rate(&sizes, &[1.0, 2.0, -1.0, 1.0, 1.0]).is_err());
    }
}
