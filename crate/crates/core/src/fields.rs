//! Dependent-data generators and exact finite probability spaces.
//!
//! [`TinyField`] is the brute-force oracle: a random field whose base
//! variables have finite support, so every expectation is an exact finite
//! sum. The seeded [`FieldModel`] generators produce the Monte Carlo side:
//! m-dependent moving windows, polynomially decaying linear causal fields,
//! and U-statistics.

use std::io::Write;
use std::sync::Arc;

use crate::combinatorics::{cumulants_from_moments, CumulantSequence, MomentSequence};
use crate::dependency::{IndexPoint, IndexSet};
use crate::error::{Error, Result};
use crate::numeric::{binomial, pairwise_sum};
use crate::rng::{mix64, Stream};

/// Hard cap on joint outcomes of a TinyField.
pub const OUTCOME_BUDGET: u64 = 1 << 20;

/// A base variable with finite support: (value, probability) pairs.
#[derive(Debug, Clone)]
pub struct TinyVar {
    pub support: Vec<(f64, f64)>,
}

impl TinyVar {
    pub fn new(support: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = support.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Normalization(format!(
                "probabilities sum to {total}"
            )));
        }
        if support.iter().any(|&(_, p)| p < 0.0) {
            return Err(Error::domain("negative probability"));
        }
        Ok(TinyVar { support })
    }

    pub fn rademacher() -> Self {
        TinyVar {
            support: vec![(1.0, 0.5), (-1.0, 0.5)],
        }
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().map(|&(v, p)| v * p).sum()
    }
}

type FieldFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// An exactly enumerable random field: independent finite-support base
/// variables and one deterministic map per index point.
#[derive(Clone)]
pub struct TinyField {
    vars: Vec<TinyVar>,
    index: IndexSet,
    probs: Vec<f64>,
    /// `xs[i][o]` = X_i at joint outcome o (unnormalized).
    xs: Vec<Vec<f64>>,
    /// `base[o][v]` = value of base variable v at outcome o.
    base: Vec<Vec<f64>>,
    sigma: f64,
}

impl std::fmt::Debug for TinyField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TinyField")
            .field("vars", &self.vars.len())
            .field("indices", &self.index.len())
            .field("outcomes", &self.probs.len())
            .field("sigma", &self.sigma)
            .finish()
    }
}

impl TinyField {
    pub fn new(vars: Vec<TinyVar>, index: IndexSet, maps: Vec<FieldFn>) -> Result<Self> {
        if maps.len() != index.len() {
            return Err(Error::shape(format!(
                "{} maps for {} index points",
                maps.len(),
                index.len()
            )));
        }
        let mut outcome_count: u64 = 1;
        for v in &vars {
            outcome_count = outcome_count.saturating_mul(v.support.len() as u64);
            if outcome_count > OUTCOME_BUDGET {
                return Err(Error::Budget(outcome_count, OUTCOME_BUDGET));
            }
        }
        let n_out = outcome_count as usize;
        let mut probs = Vec::with_capacity(n_out);
        let mut base = Vec::with_capacity(n_out);
        let mut digits = vec![0usize; vars.len()];
        let mut assignment: Vec<f64> = vars.iter().map(|v| v.support[0].0).collect();
        loop {
            let mut p = 1.0;
            for (v, &d) in vars.iter().zip(&digits) {
                p *= v.support[d].1;
            }
            probs.push(p);
            base.push(assignment.clone());
            // advance the mixed-radix counter
            let mut pos = 0;
            loop {
                if pos == vars.len() {
                    let xs: Vec<Vec<f64>> = maps
                        .iter()
                        .map(|f| base.iter().map(|b| f(b)).collect())
                        .collect();
                    let mut field = TinyField {
                        vars,
                        index,
                        probs,
                        xs,
                        base,
                        sigma: 0.0,
                    };
                    let var = field.variance_of_sum_raw();
                    if var <= 1e-14 {
                        return Err(Error::Degenerate(format!("Var(sum X_i) = {var}")));
                    }
                    field.sigma = var.sqrt();
                    return Ok(field);
                }
                digits[pos] += 1;
                if digits[pos] < vars[pos].support.len() {
                    assignment[pos] = vars[pos].support[digits[pos]].0;
                    break;
                }
                digits[pos] = 0;
                assignment[pos] = vars[pos].support[0].0;
                pos += 1;
            }
        }
    }

    /// Independent Rademacher variables on the line {0, ..., n-1},
    /// X_i = the i-th variable.
    pub fn rademacher_line(n: usize) -> Result<Self> {
        let vars = vec![TinyVar::rademacher(); n];
        let index = IndexSet::line(0, n as i64 - 1);
        let maps: Vec<FieldFn> = (0..n)
            .map(|i| Arc::new(move |b: &[f64]| b[i]) as FieldFn)
            .collect();
        TinyField::new(vars, index, maps)
    }

    /// i.i.d. copies of a given base variable on the line.
    pub fn iid_line(var: TinyVar, n: usize) -> Result<Self> {
        let vars = vec![var; n];
        let index = IndexSet::line(0, n as i64 - 1);
        let maps: Vec<FieldFn> = (0..n)
            .map(|i| Arc::new(move |b: &[f64]| b[i]) as FieldFn)
            .collect();
        TinyField::new(vars, index, maps)
    }

    /// Exactly m-dependent window field on a line of n sites: base
    /// variables on the half-spacing refinement, X_i = mean of the
    /// (2m+1)-window around refined position 2i.
    pub fn window_line(var: TinyVar, n: usize, m: usize) -> Result<Self> {
        // refined positions 2i + delta for delta in [-m, m], shifted to
        // start at zero
        let n_base = 2 * (n - 1) + 2 * m + 1;
        let vars = vec![var; n_base];
        let index = IndexSet::line(0, n as i64 - 1);
        let width = (2 * m + 1) as f64;
        let maps: Vec<FieldFn> = (0..n)
            .map(|i| {
                Arc::new(move |b: &[f64]| {
                    let acc: f64 = b[2 * i..=2 * i + 2 * m].iter().sum();
                    acc / width
                }) as FieldFn
            })
            .collect();
        TinyField::new(vars, index, maps)
    }

    /// Seeded random centered field for regression suites: up to `max_vars`
    /// base variables with supports of size <= `max_support`, field maps of
    /// the form a*v_i + b*(v_i * v_{i+1}) (centered by independence).
    pub fn random(seed: u64, max_vars: usize, max_support: usize) -> Result<Self> {
        let mut s = Stream::from_seed(seed);
        let n = 2 + (s.next_u64() as usize) % (max_vars.max(2) - 1);
        let mut vars = Vec::with_capacity(n);
        for _ in 0..n {
            let k = 2 + (s.next_u64() as usize) % (max_support.max(2) - 1);
            // random support values, centered, with random positive weights
            let mut vals: Vec<f64> = (0..k).map(|_| 2.0 * s.next_f64() - 1.0).collect();
            let mut probs: Vec<f64> = (0..k).map(|_| 0.2 + s.next_f64()).collect();
            let z: f64 = probs.iter().sum();
            for p in &mut probs {
                *p /= z;
            }
            let mean: f64 = vals.iter().zip(&probs).map(|(v, p)| v * p).sum();
            for v in &mut vals {
                *v -= mean;
            }
            // avoid near-degenerate supports
            if vals.iter().all(|v| v.abs() < 1e-3) {
                vals[0] += 0.5;
                let mean: f64 = vals.iter().zip(&probs).map(|(v, p)| v * p).sum();
                for v in &mut vals {
                    *v -= mean;
                }
            }
            vars.push(TinyVar::new(vals.into_iter().zip(probs).collect())?);
        }
        let index = IndexSet::line(0, n as i64 - 1);
        let maps: Vec<FieldFn> = (0..n)
            .map(|i| {
                let a = 0.5 + s.next_f64();
                let b = s.next_f64() - 0.5;
                let j = (i + 1) % n;
                Arc::new(move |base: &[f64]| a * base[i] + b * base[i] * base[j]) as FieldFn
            })
            .collect();
        TinyField::new(vars, index, maps)
    }

    pub fn index(&self) -> &IndexSet {
        &self.index
    }

    pub fn n_indices(&self) -> usize {
        self.index.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn base_outcome(&self, o: usize) -> &[f64] {
        &self.base[o]
    }

    /// Unnormalized X_i per outcome.
    pub fn x_outcomes(&self, i: usize) -> &[f64] {
        &self.xs[i]
    }

    /// Exact sigma of the unnormalized sum.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn variance_of_sum_raw(&self) -> f64 {
        let n_out = self.probs.len();
        let mut mean = 0.0;
        let mut sums = vec![0.0; n_out];
        for (o, slot) in sums.iter_mut().enumerate() {
            let s: f64 = self.xs.iter().map(|x| x[o]).sum();
            *slot = s;
            mean += self.probs[o] * s;
        }
        let mut var = 0.0;
        for (&p, &s) in self.probs.iter().zip(&sums) {
            var += p * (s - mean) * (s - mean);
        }
        var
    }

    /// Exact expectation of an arbitrary functional of the base outcome.
    pub fn exact_expectation(&self, functional: impl Fn(&[f64]) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .probs
            .iter()
            .zip(&self.base)
            .map(|(&p, b)| p * functional(b))
            .collect();
        pairwise_sum(&terms)
    }

    /// Expectation of an outcome-indexed random variable.
    pub fn expect(&self, rv: &[f64]) -> f64 {
        debug_assert_eq!(rv.len(), self.probs.len());
        let terms: Vec<f64> = self.probs.iter().zip(rv).map(|(&p, &v)| p * v).collect();
        pairwise_sum(&terms)
    }

    /// W = sigma^{-1} sum_i X_i per outcome.
    pub fn w_outcomes(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.probs.len()];
        for x in &self.xs {
            for (wo, &xo) in w.iter_mut().zip(x) {
                *wo += xo;
            }
        }
        let inv = 1.0 / self.sigma;
        for wo in &mut w {
            *wo *= inv;
        }
        w
    }

    /// W(J) = sigma^{-1} sum_{i not in J} X_i per outcome.
    pub fn w_excluding(&self, excluded: &std::collections::BTreeSet<usize>) -> Vec<f64> {
        let mut w = vec![0.0; self.probs.len()];
        for (i, x) in self.xs.iter().enumerate() {
            if excluded.contains(&i) {
                continue;
            }
            for (wo, &xo) in w.iter_mut().zip(x) {
                *wo += xo;
            }
        }
        let inv = 1.0 / self.sigma;
        for wo in &mut w {
            *wo *= inv;
        }
        w
    }

    /// Compositional expectation [eta_1, ..., eta_l] |> (Y_1, ..., Y_t):
    /// the product of block expectations of consecutive variable groups,
    /// with the Y's given as outcome-indexed random variables.
    pub fn compositional_expectation(
        &self,
        comp: &crate::combinatorics::Composition,
        values: &[Vec<f64>],
    ) -> Result<f64> {
        if comp.total() != values.len() {
            return Err(Error::shape(format!(
                "composition of {} against {} variables",
                comp.total(),
                values.len()
            )));
        }
        let mut acc = 1.0;
        let mut slot = 0usize;
        for &eta in &comp.parts {
            let mut block = vec![1.0; self.n_outcomes()];
            for rv in &values[slot..slot + eta] {
                for (b, &v) in block.iter_mut().zip(rv) {
                    *b *= v;
                }
            }
            acc *= self.expect(&block);
            slot += eta;
        }
        Ok(acc)
    }

    /// Exact moments mu_0..mu_order of W.
    pub fn moments_of_w(&self, order: usize) -> MomentSequence {
        let w = self.w_outcomes();
        let mut values = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let rv: Vec<f64> = w.iter().map(|&v| v.powi(k as i32)).collect();
            values.push(self.expect(&rv));
        }
        MomentSequence::new(values)
    }

    /// Exact cumulants kappa_1..kappa_order of W, through the Bell-polynomial
    /// link from exact moments.
    pub fn cumulants_of_w(&self, order: usize) -> Result<CumulantSequence> {
        cumulants_from_moments(&self.moments_of_w(order))
    }

    pub fn cumulant_of_sum(&self, k: usize) -> Result<f64> {
        if k > 10 {
            return Err(Error::domain("cumulant order capped at 10"));
        }
        Ok(self.cumulants_of_w(k)?.kappa(k))
    }
}

/// Noise laws for the seeded generators, standardized to mean 0, variance 1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum NoiseLaw {
    StdNormal,
    Rademacher,
    CenteredExponential,
    /// (Bernoulli(p) - p) / sqrt(p (1 - p)); strongly skewed for small p.
    CenteredBernoulli {
        p: f64,
    },
}

impl NoiseLaw {
    pub fn sample(&self, s: &mut Stream) -> f64 {
        match *self {
            NoiseLaw::StdNormal => s.next_normal(),
            NoiseLaw::Rademacher => s.next_rademacher(),
            NoiseLaw::CenteredExponential => s.next_centered_exponential(),
            NoiseLaw::CenteredBernoulli { p } => {
                let scale = (p * (1.0 - p)).sqrt();
                if s.next_f64() < p {
                    (1.0 - p) / scale
                } else {
                    -p / scale
                }
            }
        }
    }

    /// E |X|^r, exact where a closed form exists.
    pub fn abs_moment(&self, r: f64) -> f64 {
        match *self {
            // E|Z|^r = 2^{r/2} Gamma((r+1)/2) / sqrt(pi)
            NoiseLaw::StdNormal => {
                2.0f64.powf(r / 2.0) * libm::tgamma((r + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
            }
            NoiseLaw::Rademacher => 1.0,
            // E|E - 1|^r for E ~ Exp(1), by quadrature on [0,1] and the
            // closed-form tail integral via the upper incomplete gamma.
            NoiseLaw::CenteredExponential => {
                let (nodes, weights) = crate::numeric::gauss_legendre(64);
                let mut low = 0.0;
                for (&x, &w) in nodes.iter().zip(&weights) {
                    let t = 0.5 * (x + 1.0);
                    low += 0.5 * w * (1.0 - t).powf(r) * (-t).exp();
                }
                // integral_1^inf (x-1)^r e^-x dx = Gamma(r+1) / e
                let high = libm::tgamma(r + 1.0) / std::f64::consts::E;
                low + high
            }
            NoiseLaw::CenteredBernoulli { p } => {
                let scale = (p * (1.0 - p)).sqrt();
                p * ((1.0 - p) / scale).powf(r) + (1.0 - p) * (p / scale).powf(r)
            }
        }
    }

    /// Signed moment E X^k.
    pub fn moment(&self, k: usize) -> f64 {
        match *self {
            NoiseLaw::StdNormal => {
                if k.is_multiple_of(2) {
                    crate::numeric::double_factorial_odd(k / 2)
                } else {
                    0.0
                }
            }
            NoiseLaw::Rademacher => {
                if k.is_multiple_of(2) {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseLaw::CenteredExponential => {
                // moments of Exp(1) shifted by -1: E[(E-1)^k]
                let mut acc = 0.0;
                for j in 0..=k {
                    let sign = if (k - j).is_multiple_of(2) { 1.0 } else { -1.0 };
                    acc += binomial(k, j) * crate::numeric::factorial(j) * sign;
                }
                acc
            }
            NoiseLaw::CenteredBernoulli { p } => {
                let scale = (p * (1.0 - p)).sqrt();
                p * ((1.0 - p) / scale).powi(k as i32) + (1.0 - p) * (-p / scale).powi(k as i32)
            }
        }
    }
}

/// Window functionals for the moving-window model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum WindowKernel {
    /// Mean of the (2m+1)^d window noises.
    Mean,
    /// Product of the window noises (centered automatically).
    Product,
    /// Constant zero; used to exercise degeneracy reporting.
    Zero,
}

/// Parametric generators of dependent fields.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum FieldModel {
    MovingWindow {
        d: usize,
        m: u64,
        kernel: WindowKernel,
        noise: NoiseLaw,
    },
    LinearCausal {
        decay: f64,
        trunc: usize,
        noise: NoiseLaw,
    },
}

/// One seeded draw of a field on T.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub values: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

impl FieldSample {
    /// Normalized sum W = sigma^{-1} sum_i `values[i]`.
    pub fn w(&self) -> f64 {
        pairwise_sum(&self.values) / self.sigma
    }

    /// CSV export: one row per index (coords..., value).
    pub fn write_csv(&self, t: &IndexSet, out: &mut impl Write) -> Result<()> {
        writeln!(out, "# depclt v1")?;
        let d = t.dim();
        let header: Vec<String> = (0..d).map(|k| format!("coord{k}")).collect();
        writeln!(out, "{},value", header.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            let coords: Vec<String> = t.point(i).coords.iter().map(|c| c.to_string()).collect();
            writeln!(out, "{},{:.16e}", coords.join(","), v)?;
        }
        Ok(())
    }
}

fn point_tag(p: &IndexPoint) -> u64 {
    let mut acc = 0x243f_6a88_85a3_08d3u64;
    for &c in &p.coords {
        acc = mix64(acc ^ (c as u64));
    }
    acc
}

/// Noise attached to a lattice point: deterministic in (seed, point), so a
/// sample restricted to a sub-lattice is the restriction of the sample.
fn noise_at(seed: u64, p: &IndexPoint, law: NoiseLaw) -> f64 {
    law.sample(&mut Stream::derive(seed, point_tag(p)))
}

// Window noises live on the half-spacing refinement of the index lattice
// (site i maps to 2i), so a (2m+1)^d window around each site makes the
// field exactly m-dependent: windows of sites at max-norm distance > m are
// disjoint, while distance m shares one refined layer.

/// Draw the field on T. Deterministic for fixed (model, T, seed).
pub fn sample_field(model: &FieldModel, t: &IndexSet, seed: u64) -> Result<FieldSample> {
    let sigma2 = variance_of_sum(model, t)?;
    let values = sample_field_values(model, t, seed)?;
    Ok(FieldSample {
        values,
        sigma: sigma2.sqrt(),
        seed,
    })
}

/// Values-only draw, for replicate loops that hold sigma fixed.
pub fn sample_field_values(model: &FieldModel, t: &IndexSet, seed: u64) -> Result<Vec<f64>> {
    match model {
        FieldModel::MovingWindow {
            d,
            m,
            kernel,
            noise,
        } => {
            if *d != t.dim() {
                return Err(Error::domain(format!(
                    "model dimension {d} vs index set dimension {}",
                    t.dim()
                )));
            }
            if *d == 1 {
                // fast path for 1-d lines (possibly with gaps): refined
                // lattice positions 2c - m .. 2c + m
                let lo = 2 * t.points().first().unwrap().coords[0] - *m as i64;
                let hi = 2 * t.points().last().unwrap().coords[0] + *m as i64;
                let noises: Vec<f64> = (lo..=hi)
                    .map(|c| noise_at(seed, &IndexPoint::new(vec![c]), *noise))
                    .collect();
                let width = (2 * m + 1) as f64;
                let values = t
                    .points()
                    .iter()
                    .map(|p| {
                        let start = (2 * p.coords[0] - *m as i64 - lo) as usize;
                        let window = &noises[start..start + (2 * m + 1) as usize];
                        match kernel {
                            WindowKernel::Mean => window.iter().sum::<f64>() / width,
                            WindowKernel::Product => window.iter().product(),
                            WindowKernel::Zero => 0.0,
                        }
                    })
                    .collect();
                return Ok(values);
            }
            // general d: walk the window box around each point
            let values = t
                .points()
                .iter()
                .map(|p| {
                    let mut acc_sum = 0.0;
                    let mut acc_prod = 1.0;
                    let mut count = 0usize;
                    let mut offset = vec![-(*m as i64); *d];
                    loop {
                        let q = IndexPoint::new(
                            p.coords
                                .iter()
                                .zip(&offset)
                                .map(|(a, b)| 2 * a + b)
                                .collect(),
                        );
                        let e = noise_at(seed, &q, *noise);
                        acc_sum += e;
                        acc_prod *= e;
                        count += 1;
                        let mut axis = 0;
                        loop {
                            if axis == *d {
                                return match kernel {
                                    WindowKernel::Mean => acc_sum / count as f64,
                                    WindowKernel::Product => acc_prod,
                                    WindowKernel::Zero => 0.0,
                                };
                            }
                            offset[axis] += 1;
                            if offset[axis] <= *m as i64 {
                                break;
                            }
                            offset[axis] = -(*m as i64);
                            axis += 1;
                        }
                    }
                })
                .collect();
            Ok(values)
        }
        FieldModel::LinearCausal {
            decay,
            trunc,
            noise,
        } => {
            if t.dim() != 1 {
                return Err(Error::domain("linear causal fields are 1-d"));
            }
            let rho: Vec<f64> = (0..=*trunc)
                .map(|j| (1.0 + j as f64).powf(-decay))
                .collect();
            let values = t
                .points()
                .iter()
                .map(|p| {
                    let mut acc = 0.0;
                    for (j, &r) in rho.iter().enumerate() {
                        let q = IndexPoint::new(vec![p.coords[0] - j as i64]);
                        acc += r * noise_at(seed, &q, *noise);
                    }
                    acc
                })
                .collect();
            Ok(values)
        }
    }
}

/// Exact variance of sum_{i in T} X_i under the model (noise variance 1).
pub fn variance_of_sum(model: &FieldModel, t: &IndexSet) -> Result<f64> {
    let var = match model {
        FieldModel::MovingWindow {
            d,
            m,
            kernel,
            noise: _,
        } => {
            if *d != t.dim() {
                return Err(Error::domain("dimension mismatch"));
            }
            match kernel {
                // X_i = W_i / (2m+1)^d with W_i the window sum; sum_i X_i is a
                // weighted noise sum, so the variance is the sum of squared
                // accumulated weights.
                WindowKernel::Mean => {
                    use std::collections::BTreeMap;
                    let width = (2 * m + 1) as f64;
                    let w_unit = 1.0 / width.powi(*d as i32);
                    let mut weights: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
                    for p in t.points() {
                        let mut offset = vec![-(*m as i64); *d];
                        'box_walk: loop {
                            let q: Vec<i64> = p
                                .coords
                                .iter()
                                .zip(&offset)
                                .map(|(a, b)| 2 * a + b)
                                .collect();
                            *weights.entry(q).or_insert(0.0) += w_unit;
                            let mut axis = 0;
                            loop {
                                if axis == *d {
                                    break 'box_walk;
                                }
                                offset[axis] += 1;
                                if offset[axis] <= *m as i64 {
                                    break;
                                }
                                offset[axis] = -(*m as i64);
                                axis += 1;
                            }
                        }
                    }
                    weights.values().map(|w| w * w).sum()
                }
                // distinct windows share no full overlap; products of
                // centered noises are uncorrelated unless identical
                WindowKernel::Product => t.len() as f64,
                WindowKernel::Zero => 0.0,
            }
        }
        FieldModel::LinearCausal {
            decay,
            trunc,
            noise: _,
        } => {
            if t.dim() != 1 {
                return Err(Error::domain("linear causal fields are 1-d"));
            }
            let rho: Vec<f64> = (0..=*trunc)
                .map(|j| (1.0 + j as f64).powf(-decay))
                .collect();
            use std::collections::BTreeMap;
            let mut weights: BTreeMap<i64, f64> = BTreeMap::new();
            for p in t.points() {
                for (j, &r) in rho.iter().enumerate() {
                    *weights.entry(p.coords[0] - j as i64).or_insert(0.0) += r;
                }
            }
            weights.values().map(|w| w * w).sum()
        }
    };
    if var <= 1e-14 {
        return Err(Error::Degenerate(format!("Var(sum) = {var}")));
    }
    Ok(var)
}

/// Monte Carlo check of the variance with a jackknife-free standard error.
pub fn variance_of_sum_mc(
    model: &FieldModel,
    t: &IndexSet,
    seed: u64,
    reps: usize,
) -> Result<(f64, f64)> {
    let mut sums = Vec::with_capacity(reps);
    for r in 0..reps {
        let vals = sample_field_values(model, t, mix64(seed ^ (r as u64)))?;
        sums.push(pairwise_sum(&vals));
    }
    let n = reps as f64;
    let mean = pairwise_sum(&sums) / n;
    let sq: Vec<f64> = sums.iter().map(|&s| (s - mean) * (s - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    // SE of a sample variance: var * sqrt(2/(n-1)) for near-normal sums
    let se = var * (2.0 / (n - 1.0)).sqrt();
    Ok((var, se))
}

// ---------------------------------------------------------------------------
// U-statistics
// ---------------------------------------------------------------------------

/// Symmetric kernels of arity 2.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum UKernel {
    /// h(x, y) = x + y + x y (non-degenerate: g(x) = x).
    SumProd,
    /// h(x, y) = x + y.
    Sum,
    /// h(x, y) = x y (degenerate for centered inputs: g = 0).
    Product,
}

impl UKernel {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            UKernel::SumProd => x + y + x * y,
            UKernel::Sum => x + y,
            UKernel::Product => x * y,
        }
    }

    /// Sum of h over strict pairs i < j. Uses the algebraic identities for
    /// the built-in kernels; `total_pairwise` is the generic reference.
    pub fn total(&self, xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let s = pairwise_sum(xs);
        let sq: Vec<f64> = xs.iter().map(|&x| x * x).collect();
        let q = pairwise_sum(&sq);
        match self {
            UKernel::SumProd => (n - 1.0) * s + 0.5 * (s * s - q),
            UKernel::Sum => (n - 1.0) * s,
            UKernel::Product => 0.5 * (s * s - q),
        }
    }

    pub fn total_pairwise(&self, xs: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                acc += self.eval(xs[i], xs[j]);
            }
        }
        acc
    }

    /// (zeta1, zeta2) = (Var g, Var h) for a standardized base law.
    fn zetas(&self, noise: NoiseLaw) -> (f64, f64) {
        let m2 = 1.0;
        let m22 = noise.moment(2) * noise.moment(2); // E[x^2 y^2] = 1
        match self {
            UKernel::SumProd => (m2, 2.0 * m2 + m22),
            UKernel::Sum => (m2, 2.0 * m2),
            UKernel::Product => (0.0, m22),
        }
    }

    /// Var of the conditional mean g(x) = E[h(x, Y)].
    pub fn var_g(&self, noise: NoiseLaw) -> f64 {
        self.zetas(noise).0
    }
}

/// U-statistic model: kernel over n i.i.d. draws of the base law.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UStatModel {
    pub n: usize,
    pub kernel: UKernel,
    pub noise: NoiseLaw,
}

impl UStatModel {
    /// Exact Var(sum_{i<j} h) = C(n,2) [zeta2 + 2 (n-2) zeta1].
    pub fn variance_of_sum(&self) -> Result<f64> {
        let (z1, z2) = self.kernel.zetas(self.noise);
        let n = self.n as f64;
        let var = binomial(self.n, 2) * (z2 + 2.0 * (n - 2.0) * z1);
        if var <= 1e-14 {
            return Err(Error::Degenerate("U-statistic variance".into()));
        }
        Ok(var)
    }

    /// One normalized draw W = sigma^{-1} sum_{i<j} h(X_i, X_j).
    pub fn sample_w(&self, seed: u64, replicate: u64) -> Result<f64> {
        let sigma = self.variance_of_sum()?.sqrt();
        let mut s = Stream::derive(seed, replicate);
        let xs: Vec<f64> = (0..self.n).map(|_| self.noise.sample(&mut s)).collect();
        Ok(self.kernel.total(&xs) / sigma)
    }

    /// Per-tuple sample xi_{(i,j)} = h(X_i, X_j) over strict pairs, for
    /// small n; the tuple order matches `ustat_dependency_graph`.
    pub fn sample_tuples(&self, seed: u64, replicate: u64) -> Result<FieldSample> {
        let pairs = self.n * (self.n - 1) / 2;
        if pairs as u64 > OUTCOME_BUDGET {
            return Err(Error::Budget(pairs as u64, OUTCOME_BUDGET));
        }
        let sigma = self.variance_of_sum()?.sqrt();
        let mut s = Stream::derive(seed, replicate);
        let xs: Vec<f64> = (0..self.n).map(|_| self.noise.sample(&mut s)).collect();
        let mut values = Vec::with_capacity(pairs);
        for i in 0..self.n {
            for j in i + 1..self.n {
                values.push(self.kernel.eval(xs[i], xs[j]));
            }
        }
        Ok(FieldSample {
            values,
            sigma,
            seed,
        })
    }

    /// Monte Carlo estimate of Var g with its standard error; the kernel is
    /// flagged degenerate when the estimate falls below `threshold`.
    pub fn nondegeneracy_check(
        &self,
        seed: u64,
        outer: usize,
        inner: usize,
        threshold: f64,
    ) -> (f64, f64, bool) {
        let mut gs = Vec::with_capacity(outer);
        for r in 0..outer {
            let mut s = Stream::derive(seed ^ 0x5151, r as u64);
            let x = self.noise.sample(&mut s);
            let mut acc = 0.0;
            for _ in 0..inner {
                acc += self.kernel.eval(x, self.noise.sample(&mut s));
            }
            gs.push(acc / inner as f64);
        }
        let n = outer as f64;
        let mean = pairwise_sum(&gs) / n;
        let sq: Vec<f64> = gs.iter().map(|&g| (g - mean) * (g - mean)).collect();
        // subtract the inner-loop noise variance E[Var(h|X)] / inner
        let raw = pairwise_sum(&sq) / (n - 1.0);
        let se = raw * (2.0 / (n - 1.0)).sqrt().max(1e-12);
        (raw, se, raw < threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_var_validation() {
        assert!(TinyVar::new(vec![(1.0, 0.6), (-1.0, 0.4)]).is_ok());
        assert!(TinyVar::new(vec![(1.0, 0.6), (-1.0, 0.5)]).is_err());
    }

    #[test]
    fn rademacher_field_basics() {
        let tf = TinyField::rademacher_line(3).unwrap();
        assert_eq!(tf.n_outcomes(), 8);
        // normalization and centering
        assert!((tf.exact_expectation(|_| 1.0) - 1.0).abs() < 1e-15);
        assert!(tf.exact_expectation(|b| b[0]).abs() < 1e-15);
        assert!((tf.sigma() - 3.0f64.sqrt()).abs() < 1e-12);
        let k = tf.cumulants_of_w(2).unwrap();
        assert!(k.kappa(1).abs() < 1e-12);
        assert!((k.kappa(2) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rademacher_sum_fourth_cumulant() {
        // kappa_4 of one Rademacher is -2; cumulants add over independent
        // summands and scale by n^{-2} after normalization: -2/n.
        let tf = TinyField::rademacher_line(3).unwrap();
        let k4 = tf.cumulant_of_sum(4).unwrap();
        assert!((k4 - (-2.0 / 3.0)).abs() < 1e-10, "kappa_4 = {k4}");
    }

    #[test]
    fn cumulant_scaling_matches_iid_theory() {
        // kappa_{j+2}(V) = q^{-j/2} kappa_{j+2}(xi) for V = q^{-1/2} sum xi_i
        let xi = TinyVar::new(vec![(1.5, 0.4), (-1.0, 0.6)]).unwrap();
        let single = TinyField::iid_line(xi.clone(), 1).unwrap();
        let q = 4usize;
        let summed = TinyField::iid_line(xi, q).unwrap();
        for j in 1..=3usize {
            let lhs = summed.cumulant_of_sum(j + 2).unwrap();
            let rhs = (q as f64).powf(-(j as f64) / 2.0) * single.cumulant_of_sum(j + 2).unwrap();
            assert!((lhs - rhs).abs() < 1e-10, "j={j}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn compositional_expectation_blocks() {
        use crate::combinatorics::Composition;
        let tf = TinyField::rademacher_line(3).unwrap();
        let y1 = tf.x_outcomes(0).to_vec();
        let y2 = tf.x_outcomes(1).to_vec();
        let y3: Vec<f64> = tf
            .x_outcomes(0)
            .iter()
            .zip(tf.x_outcomes(2))
            .map(|(&a, &b)| a + b)
            .collect();
        // [2,1] |> (Y1, Y2, Y3) = E[Y1 Y2] E[Y3]
        let comp = Composition::new(vec![2, 1]).unwrap();
        let got = tf
            .compositional_expectation(&comp, &[y1.clone(), y2.clone(), y3.clone()])
            .unwrap();
        let p12: Vec<f64> = y1.iter().zip(&y2).map(|(&a, &b)| a * b).collect();
        let expect = tf.expect(&p12) * tf.expect(&y3);
        assert!((got - expect).abs() < 1e-14);
        // constants in a single block give 1
        let ones = vec![1.0; tf.n_outcomes()];
        let comp = Composition::new(vec![3]).unwrap();
        let got = tf
            .compositional_expectation(&comp, &[ones.clone(), ones.clone(), ones.clone()])
            .unwrap();
        assert!((got - 1.0).abs() < 1e-15);
        // [1,1] on a two-point field: the product of means, by hand
        let var = TinyVar::new(vec![(1.5, 0.4), (-1.0, 0.6)]).unwrap();
        let tf2 = TinyField::iid_line(var, 2).unwrap();
        let comp = Composition::new(vec![1, 1]).unwrap();
        let shifted: Vec<Vec<f64>> = (0..2)
            .map(|i| tf2.x_outcomes(i).iter().map(|&x| x + 0.5).collect())
            .collect();
        let got = tf2.compositional_expectation(&comp, &shifted).unwrap();
        // each mean is 0.4*1.5 - 0.6 + 0.5 = 0.5 exactly
        assert!((got - 0.25).abs() < 1e-14);
        // shape mismatch
        let bad = Composition::new(vec![3]).unwrap();
        assert!(tf2.compositional_expectation(&bad, &shifted).is_err());
    }

    #[test]
    fn moments_two_routes_agree() {
        let tf = TinyField::random(7, 4, 3).unwrap();
        let mu = tf.moments_of_w(8);
        let kappa = cumulants_from_moments(&mu).unwrap();
        let back = crate::combinatorics::moments_from_cumulants(&kappa);
        for (a, b) in mu.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn tiny_field_moments_are_hamburger_feasible() {
        // moments of a genuine law always pass the Hankel criterion
        for seed in 0..12u64 {
            let tf = TinyField::random(seed, 4, 3).unwrap();
            let mu = tf.moments_of_w(8);
            let check = crate::combinatorics::hamburger_feasible(&mu).unwrap();
            assert!(check.feasible, "seed {seed}: {:?}", check.determinants);
        }
    }

    #[test]
    fn degenerate_field_rejected() {
        let vars = vec![TinyVar::rademacher()];
        let index = IndexSet::line(0, 0);
        let maps: Vec<FieldFn> = vec![Arc::new(|_: &[f64]| 0.0)];
        assert!(matches!(
            TinyField::new(vars, index, maps),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn sample_field_deterministic() {
        let model = FieldModel::MovingWindow {
            d: 1,
            m: 1,
            kernel: WindowKernel::Mean,
            noise: NoiseLaw::StdNormal,
        };
        let t = IndexSet::line(0, 63);
        let a = sample_field(&model, &t, 42).unwrap();
        let b = sample_field(&model, &t, 42).unwrap();
        assert_eq!(a.values, b.values);
        let c = sample_field(&model, &t, 43).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn iid_limit_of_moving_window() {
        // m = 0 with the mean kernel is just the noise itself
        let model = FieldModel::MovingWindow {
            d: 1,
            m: 0,
            kernel: WindowKernel::Mean,
            noise: NoiseLaw::StdNormal,
        };
        let t = IndexSet::line(0, 9);
        assert!((variance_of_sum(&model, &t).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn window_covariance_vanishes_beyond_m() {
        let model = FieldModel::MovingWindow {
            d: 1,
            m: 1,
            kernel: WindowKernel::Mean,
            noise: NoiseLaw::StdNormal,
        };
        let t = IndexSet::line(0, 40);
        let reps = 40_000usize;
        let (mut c1, mut c2) = (0.0f64, 0.0f64);
        for r in 0..reps {
            let v =
                sample_field_values(&model, &t, Stream::derive(5, r as u64).next_u64()).unwrap();
            c1 += v[10] * v[11]; // lag 1 <= m: correlated
            c2 += v[10] * v[12]; // lag 2 > m: independent windows
        }
        let n = reps as f64;
        assert!((c1 / n).abs() > 0.02);
        assert!((c2 / n).abs() < 3.0 / n.sqrt());
    }

    #[test]
    fn window_variance_closed_form_vs_mc() {
        let model = FieldModel::MovingWindow {
            d: 1,
            m: 1,
            kernel: WindowKernel::Mean,
            noise: NoiseLaw::Rademacher,
        };
        let t = IndexSet::line(0, 31);
        let exact = variance_of_sum(&model, &t).unwrap();
        let (mc, se) = variance_of_sum_mc(&model, &t, 99, 4000).unwrap();
        assert!((mc - exact).abs() < 3.0 * se, "{mc} vs {exact} (se {se})");
    }

    #[test]
    fn linear_causal_field() {
        let model = FieldModel::LinearCausal {
            decay: 2.0,
            trunc: 64,
            noise: NoiseLaw::Rademacher,
        };
        let t = IndexSet::line(0, 49);
        let a = sample_field(&model, &t, 4).unwrap();
        let b = sample_field(&model, &t, 4).unwrap();
        assert_eq!(a.values, b.values);
        // closed-form variance against Monte Carlo
        let exact = variance_of_sum(&model, &t).unwrap();
        let (mc, se) = variance_of_sum_mc(&model, &t, 12, 3000).unwrap();
        assert!((mc - exact).abs() < 3.0 * se, "{mc} vs {exact}");
        // qualitative polynomial decay: lag-8 autocovariance well below lag-1
        let reps = 20_000usize;
        let (mut c1, mut c8) = (0.0f64, 0.0f64);
        for r in 0..reps {
            let v =
                sample_field_values(&model, &t, Stream::derive(9, r as u64).next_u64()).unwrap();
            c1 += v[20] * v[21];
            c8 += v[20] * v[28];
        }
        assert!(c8.abs() < 0.3 * c1.abs(), "lag-8 {c8} vs lag-1 {c1}");
        // wrong dimension is rejected
        assert!(sample_field(&model, &IndexSet::cube(2, 0, 3), 1).is_err());
    }

    #[test]
    fn two_dimensional_window_field() {
        let model = FieldModel::MovingWindow {
            d: 2,
            m: 1,
            kernel: WindowKernel::Mean,
            noise: NoiseLaw::Rademacher,
        };
        let t = IndexSet::cube(2, 0, 5);
        let exact = variance_of_sum(&model, &t).unwrap();
        let (mc, se) = variance_of_sum_mc(&model, &t, 3, 3000).unwrap();
        assert!((mc - exact).abs() < 3.0 * se, "{mc} vs {exact} (se {se})");
        // dimension mismatch between model and index set
        assert!(sample_field(&model, &IndexSet::line(0, 9), 1).is_err());
    }

    #[test]
    fn zero_kernel_is_degenerate() {
        let model = FieldModel::MovingWindow {
            d: 1,
            m: 1,
            kernel: WindowKernel::Zero,
            noise: NoiseLaw::StdNormal,
        };
        let t = IndexSet::line(0, 7);
        assert!(matches!(
            variance_of_sum(&model, &t),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn ukernel_totals_match_pairwise() {
        let mut s = Stream::from_seed(17);
        let xs: Vec<f64> = (0..9).map(|_| s.next_normal()).collect();
        for k in [UKernel::SumProd, UKernel::Sum, UKernel::Product] {
            let fast = k.total(&xs);
            let slow = k.total_pairwise(&xs);
            assert!((fast - slow).abs() < 1e-9 * (1.0 + slow.abs()), "{k:?}");
        }
    }

    #[test]
    fn ustat_degeneracy_detection() {
        let nondeg = UStatModel {
            n: 16,
            kernel: UKernel::SumProd,
            noise: NoiseLaw::StdNormal,
        };
        let (vg, _, flag) = nondeg.nondegeneracy_check(3, 4000, 64, 0.05);
        assert!(!flag, "Var g = {vg} wrongly flagged");
        assert!((nondeg.kernel.var_g(NoiseLaw::StdNormal) - 1.0).abs() < 1e-12);

        let deg = UStatModel {
            n: 16,
            kernel: UKernel::Product,
            noise: NoiseLaw::StdNormal,
        };
        let (vg, _, flag) = deg.nondegeneracy_check(3, 4000, 64, 0.05);
        assert!(flag, "degenerate kernel not flagged (Var g = {vg})");
    }

    #[test]
    fn sum_kernel_reduces_to_iid_sum() {
        // h(x,y) = x + y makes the U-statistic a scaled i.i.d. sum, so the
        // exact variance formula must agree with the direct one.
        let model = UStatModel {
            n: 10,
            kernel: UKernel::Sum,
            noise: NoiseLaw::StdNormal,
        };
        let var = model.variance_of_sum().unwrap();
        // sum_{i<j}(x_i + x_j) = (n-1) S, Var = (n-1)^2 n
        assert!((var - 81.0 * 10.0).abs() < 1e-9);
    }

    #[test]
    fn ustat_tuple_sample_matches_graph_layout() {
        let model = UStatModel {
            n: 4,
            kernel: UKernel::SumProd,
            noise: NoiseLaw::Rademacher,
        };
        let s = model.sample_tuples(8, 0).unwrap();
        assert_eq!(s.values.len(), 6);
        let g = crate::dependency::ustat_dependency_graph(4, 2).unwrap();
        assert_eq!(g.tuples.len(), 6);
    }

    #[test]
    fn csv_export_shape() {
        let model = FieldModel::MovingWindow {
            d: 1,
            m: 1,
            kernel: WindowKernel::Mean,
            noise: NoiseLaw::StdNormal,
        };
        let t = IndexSet::line(0, 4);
        let sample = sample_field(&model, &t, 1).unwrap();
        let mut buf = Vec::new();
        sample.write_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# depclt v1\ncoord0,value\n"));
        assert_eq!(text.lines().count(), 2 + 5);
    }
}
