//! Evaluation of genogram sums on TinyFields: the B/D constraint chains, the
//! generalized covariance operators, the per-genogram summand E_G, the sums
//! S(G), T_f(G), U_f(G), the adjusted cumulant, and exact verification of the
//! growth and gluing identities.

use std::collections::{BTreeSet, HashMap};

use num_rational::Ratio;

use crate::dependency::ranked_neighborhood;
use crate::error::{Error, Result};
use crate::fields::TinyField;
use crate::functions::{poly_eval, Poly, Smooth};
use crate::genogram::{b_h, enumerate_classes, Genogram};
use crate::numeric::{factorial, gauss_legendre};

/// A random variable on the field's outcome space.
type Rv = Vec<f64>;

/// Which sum a chain walk is computing.
enum Kind<'f> {
    S,
    T(&'f dyn Smooth),
    U(&'f dyn Smooth),
}

/// Exact evaluator for genogram sums over a TinyField with lattice
/// m-neighborhoods. All field values are sigma-normalized.
pub struct GenogramEvaluator<'a> {
    tf: &'a TinyField,
    m: u64,
    xn: Vec<Rv>,
    w_cache: HashMap<Vec<usize>, Rv>,
    gl01: (Vec<f64>, Vec<f64>),
}

#[derive(Clone)]
struct Level {
    b: BTreeSet<usize>,
    d: BTreeSet<usize>,
    chosen: usize,
}

impl<'a> GenogramEvaluator<'a> {
    pub fn new(tf: &'a TinyField, m: u64) -> Self {
        let inv = 1.0 / tf.sigma();
        let xn = (0..tf.n_indices())
            .map(|i| tf.x_outcomes(i).iter().map(|&x| x * inv).collect())
            .collect();
        let (nodes, weights) = gauss_legendre(32);
        // map to [0, 1]
        let nodes01: Vec<f64> = nodes.iter().map(|&x| 0.5 * (x + 1.0)).collect();
        let weights01: Vec<f64> = weights.iter().map(|&w| 0.5 * w).collect();
        GenogramEvaluator {
            tf,
            m,
            xn,
            w_cache: HashMap::new(),
            gl01: (nodes01, weights01),
        }
    }

    pub fn field(&self) -> &TinyField {
        self.tf
    }

    fn expect(&self, rv: &[f64]) -> f64 {
        self.tf.expect(rv)
    }

    fn w_excluding(&mut self, excluded: &BTreeSet<usize>) -> Rv {
        let key: Vec<usize> = excluded.iter().copied().collect();
        if let Some(w) = self.w_cache.get(&key) {
            return w.clone();
        }
        let w = self.tf.w_excluding(excluded);
        self.w_cache.insert(key, w.clone());
        w
    }

    // -- generalized covariance operators ---------------------------------

    /// D(Y_1, ..., Y_t): the centered recursion; a random variable.
    pub fn d_centered(&self, args: &[Rv]) -> Rv {
        debug_assert!(!args.is_empty());
        if args.len() == 1 {
            let mean = self.expect(&args[0]);
            return args[0].iter().map(|&y| y - mean).collect();
        }
        let inner = self.d_centered(&args[1..]);
        let prod: Rv = args[0].iter().zip(&inner).map(|(&a, &b)| a * b).collect();
        let mean = self.expect(&prod);
        prod.iter().map(|&y| y - mean).collect()
    }

    /// D*(Y_1, ..., Y_t): E[Y_1 D(Y_2, ..., Y_t)]; covariance at t = 2.
    pub fn d_star(&self, args: &[Rv]) -> f64 {
        debug_assert!(!args.is_empty());
        if args.len() == 1 {
            return self.expect(&args[0]);
        }
        let inner = self.d_centered(&args[1..]);
        let prod: Rv = args[0].iter().zip(&inner).map(|(&a, &b)| a * b).collect();
        self.expect(&prod)
    }

    /// The signed composition expansion of D*: sum over all compositions of
    /// (-1)^{l-1} times the compositional expectation. An independent route
    /// to the recursive definition.
    pub fn d_star_composition(&self, args: &[Rv]) -> Result<f64> {
        let t = args.len();
        let mut total = 0.0;
        for comp in crate::combinatorics::enumerate_compositions(t)? {
            let sign = if (comp.len() - 1) % 2 == 0 { 1.0 } else { -1.0 };
            let mut prod = 1.0;
            let mut slot = 0usize;
            for &eta in &comp.parts {
                let mut block = vec![1.0; self.tf.n_outcomes()];
                for rv in &args[slot..slot + eta] {
                    for (b, &v) in block.iter_mut().zip(rv) {
                        *b *= v;
                    }
                }
                prod *= self.expect(&block);
                slot += eta;
            }
            total += sign * prod;
        }
        Ok(total)
    }

    /// Compositional D*: group the slots into the composition's blocks, take
    /// products within each block, and apply D* to the block variables.
    pub fn gen_cov_star(
        &self,
        args: &[Rv],
        comp: &crate::combinatorics::Composition,
    ) -> Result<f64> {
        if comp.total() != args.len() {
            return Err(Error::shape(format!(
                "composition of {} against {} variables",
                comp.total(),
                args.len()
            )));
        }
        let mut blocks = Vec::with_capacity(comp.len());
        let mut slot = 0usize;
        for &eta in &comp.parts {
            let mut block = vec![1.0; self.tf.n_outcomes()];
            for rv in &args[slot..slot + eta] {
                for (b, &v) in block.iter_mut().zip(rv) {
                    *b *= v;
                }
            }
            blocks.push(block);
            slot += eta;
        }
        Ok(self.d_star(&blocks))
    }

    // -- the per-genogram summand E_G --------------------------------------

    /// E_G(Y_1, ..., Y_k): a product of one D* factor per branch of the tree,
    /// peeled off the last branch (starting at q_0) recursively.
    pub fn epsilon(&self, g: &Genogram, slots: &[Rv]) -> f64 {
        let k = slots.len();
        debug_assert_eq!(k, g.order());
        if k == 1 {
            return self.expect(&slots[0]);
        }
        // q0: the starting vertex of the last branch
        let mut q0 = 1usize;
        for j in 2..=k {
            if g.parent(j) != j - 1 {
                q0 = j;
            }
        }
        // non-negative positions strictly after q0 split the branch into the
        // D* arguments
        let mut bounds = vec![q0];
        bounds.extend((q0 + 1..=k).filter(|&t| g.id(t) >= 0));
        bounds.push(k + 1);
        let args: Vec<Rv> = bounds
            .windows(2)
            .map(|w| {
                let mut block = vec![1.0; self.tf.n_outcomes()];
                for rv in &slots[w[0] - 1..w[1] - 1] {
                    for (b, &v) in block.iter_mut().zip(rv) {
                        *b *= v;
                    }
                }
                block
            })
            .collect();
        let factor = self.d_star(&args);
        if q0 == 1 {
            factor
        } else {
            self.epsilon(&g.sub(q0 - 1), &slots[..q0 - 1]) * factor
        }
    }

    // -- constraint sets ----------------------------------------------------

    /// (B_j, D_j) for the level being entered, from the already chosen
    /// prefix.
    fn constraint_sets_at(
        &mut self,
        g: &Genogram,
        j: usize,
        levels: &[Level],
    ) -> (BTreeSet<usize>, BTreeSet<usize>) {
        debug_assert!(j >= 2);
        let s_j = g.id(j);
        let anc: Vec<usize> = g
            .ancestors(j)
            .iter()
            .map(|&l| levels[l - 1].chosen)
            .collect();
        let d_g = levels[g.progenitor(j) - 1].d.clone();
        if s_j == -1 {
            let b = levels[g.u_index(j) - 1].b.clone();
            return (b, d_g);
        }
        let mut b: BTreeSet<usize> =
            ranked_neighborhood(self.tf.index(), &anc, s_j as usize, self.m)
                .expect("prefix ids valid");
        b.extend(d_g.iter().copied());
        let d = if s_j >= 1 {
            let mut d: BTreeSet<usize> =
                ranked_neighborhood(self.tf.index(), &anc, s_j as usize - 1, self.m)
                    .expect("prefix ids valid");
            d.extend(d_g.iter().copied());
            d
        } else {
            d_g
        };
        (b, d)
    }

    /// Public view of the constraint chain: (B_j, D_j) for j = 1..=order,
    /// with the running indexes fixed to `prefix` (length order - 1 suffices
    /// for the last level).
    pub fn constraint_chain(
        &mut self,
        g: &Genogram,
        prefix: &[usize],
    ) -> Result<Vec<(BTreeSet<usize>, BTreeSet<usize>)>> {
        let k = g.order();
        if prefix.len() + 1 < k {
            return Err(Error::shape(format!(
                "prefix of {} indexes for an order-{k} genogram",
                prefix.len()
            )));
        }
        let all: BTreeSet<usize> = (0..self.tf.n_indices()).collect();
        let mut levels = vec![Level {
            b: all.clone(),
            d: BTreeSet::new(),
            chosen: prefix[0],
        }];
        let mut out = vec![(all, BTreeSet::new())];
        for j in 2..=k {
            let (b, d) = self.constraint_sets_at(g, j, &levels);
            out.push((b.clone(), d.clone()));
            let chosen = prefix.get(j - 1).copied().unwrap_or(usize::MAX);
            levels.push(Level { b, d, chosen });
        }
        Ok(out)
    }

    // -- the sums -----------------------------------------------------------

    /// S(G): nested sums of E_G over the B_j \ D_j chains.
    pub fn sum_s(&mut self, g: &Genogram) -> f64 {
        self.run(g, Kind::S)
    }

    /// T_f(G): the last slot is X_{i_k} d^{k-1} f(W(D_k)).
    pub fn sum_t(&mut self, g: &Genogram, f: &dyn Smooth) -> f64 {
        self.run(g, Kind::T(f))
    }

    /// U_f(G): k-1 running indexes; the last slot is the adjusted
    /// f-difference Delta_f(G).
    pub fn sum_u(&mut self, g: &Genogram, f: &dyn Smooth) -> Result<f64> {
        if g.order() < 2 {
            return Err(Error::Genogram("U_f needs order >= 2".into()));
        }
        Ok(self.run(g, Kind::U(f)))
    }

    fn run(&mut self, g: &Genogram, kind: Kind<'_>) -> f64 {
        let mut levels: Vec<Level> = Vec::with_capacity(g.order());
        self.run_rec(g, &kind, 1, &mut levels)
    }

    fn run_rec(&mut self, g: &Genogram, kind: &Kind<'_>, j: usize, levels: &mut Vec<Level>) -> f64 {
        let k = g.order();
        let (b, d) = if j == 1 {
            (
                (0..self.tf.n_indices()).collect::<BTreeSet<usize>>(),
                BTreeSet::new(),
            )
        } else {
            self.constraint_sets_at(g, j, levels)
        };
        // U-sums stop iterating at the last level; B_k/D_k only feed Delta_f
        if j == k {
            if let Kind::U(f) = kind {
                let delta = self.adjusted_difference(g, *f, &b, &d);
                let mut slots: Vec<Rv> = levels.iter().map(|l| self.xn[l.chosen].clone()).collect();
                slots.push(delta);
                return self.epsilon(g, &slots);
            }
        }
        let domain: Vec<usize> = b.difference(&d).copied().collect();
        let mut acc = 0.0;
        for i in domain {
            levels.push(Level {
                b: b.clone(),
                d: d.clone(),
                chosen: i,
            });
            if j == k {
                acc += self.leaf_value(g, kind, levels);
            } else {
                acc += self.run_rec(g, kind, j + 1, levels);
            }
            levels.pop();
        }
        acc
    }

    fn leaf_value(&mut self, g: &Genogram, kind: &Kind<'_>, levels: &[Level]) -> f64 {
        let k = g.order();
        let mut slots: Vec<Rv> = levels.iter().map(|l| self.xn[l.chosen].clone()).collect();
        match kind {
            Kind::S => {}
            Kind::T(f) => {
                let w = self.w_excluding(&levels[k - 1].d.clone());
                let i_k = levels[k - 1].chosen;
                slots[k - 1] = self.xn[i_k]
                    .iter()
                    .zip(&w)
                    .map(|(&x, &wv)| x * f.deriv(k - 1, wv))
                    .collect();
            }
            Kind::U(_) => unreachable!("U leaves are handled one level up"),
        }
        self.epsilon(g, &slots)
    }

    /// Delta_f(G): for a non-negative last identifier the plain difference
    /// of d^{k-2} f between W(B_k) and W(D_k); for a negative one the
    /// v-integral remainder, in closed form for polynomial f and by 32-node
    /// quadrature otherwise.
    fn adjusted_difference(
        &mut self,
        g: &Genogram,
        f: &dyn Smooth,
        b_k: &BTreeSet<usize>,
        d_k: &BTreeSet<usize>,
    ) -> Rv {
        let k = g.order();
        let wb = self.w_excluding(b_k);
        let wd = self.w_excluding(d_k);
        let u = g.u_index(k);
        if u == k {
            return wb
                .iter()
                .zip(&wd)
                .map(|(&b, &d)| f.deriv(k - 2, b) - f.deriv(k - 2, d))
                .collect();
        }
        let a = (k - u) as f64;
        if let Some(coeffs) = f.poly_coeffs() {
            // d^{k-2} f as a polynomial g2; integrate the Taylor expansion of
            // g2(B + v (A - B)) term by term: int a v^{a-1+j} dv = a/(a+j)
            let g2 = Poly::new(coeffs.to_vec()).deriv_coeffs(k - 2);
            let degree = g2.len() - 1;
            let mut deriv_coeffs = vec![g2.clone()];
            for _ in 0..degree {
                let last = deriv_coeffs.last().unwrap();
                let next: Vec<f64> = last
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(j, &c)| j as f64 * c)
                    .collect();
                deriv_coeffs.push(if next.is_empty() { vec![0.0] } else { next });
            }
            return wb
                .iter()
                .zip(&wd)
                .map(|(&b, &d)| {
                    let mut acc = 0.0;
                    let step = d - b;
                    let mut step_pow = 1.0;
                    for (j, dc) in deriv_coeffs.iter().enumerate() {
                        acc += poly_eval(dc, b) * step_pow / factorial(j) * a / (a + j as f64);
                        step_pow *= step;
                    }
                    acc - poly_eval(&g2, d)
                })
                .collect();
        }
        let (nodes, weights) = (self.gl01.0.clone(), self.gl01.1.clone());
        wb.iter()
            .zip(&wd)
            .map(|(&b, &d)| {
                let mut acc = 0.0;
                for (&v, &w) in nodes.iter().zip(&weights) {
                    acc += w
                        * a
                        * v.powf(a - 1.0)
                        * (f.deriv(k - 2, v * d + (1.0 - v) * b) - f.deriv(k - 2, d));
                }
                acc
            })
            .collect()
    }

    // -- identities ---------------------------------------------------------

    /// Growth identity: T_f(G) - S(G) E[d^{l-1} f(W)] equals
    /// -sum over children grown at `v[l]` plus sum over children grown at
    /// proper ancestors, of U_f. The identifier cap |T| is exact: higher
    /// identifiers index empty constraint sets.
    pub fn verify_step1(&mut self, g: &Genogram, f: &dyn Smooth) -> Result<f64> {
        let l = g.order();
        let cap = self.tf.n_indices() as i64;
        let w = self.tf.w_outcomes();
        let deriv: Rv = w.iter().map(|&x| f.deriv(l - 1, x)).collect();
        let lhs = self.sum_t(g, f) - self.sum_s(g) * self.expect(&deriv);
        let mut rhs = 0.0;
        for site in g.growth_sites() {
            let hi = g.max_id_at(site).unwrap_or(cap).min(cap);
            for s in 0..=hi {
                let h = g.grow(site, s)?;
                let u = self.sum_u(&h, f)?;
                if site == l {
                    rhs -= u;
                } else {
                    rhs += u;
                }
            }
        }
        Ok((lhs - rhs).abs())
    }

    /// Gluing identity: U_f(G) expanded through paths of negative vertices,
    ///
    /// U_f(G) = sum_{j=0}^{K} (-1)^{j+1} a!/(j+1+a)! T_f(Lambda_j G)
    ///        + (-1)^{K+1} a!/(K+1+a)! U_f(Lambda_{K+1} G),  a = l - u(l).
    pub fn verify_step2(&mut self, g: &Genogram, f: &dyn Smooth, depth: usize) -> Result<f64> {
        let l = g.order();
        if l < 2 {
            return Err(Error::Genogram("gluing identity needs order >= 2".into()));
        }
        let a = l - g.u_index(l);
        let lhs = self.sum_u(g, f)?;
        let mut rhs = 0.0;
        for j in 0..=depth {
            let coeff = factorial(a) / factorial(j + 1 + a);
            let sign = if (j + 1) % 2 == 0 { 1.0 } else { -1.0 };
            rhs += sign * coeff * self.sum_t(&g.glue(j)?, f);
        }
        let tail_sign = if (depth + 1).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        let tail_coeff = factorial(a) / factorial(depth + 1 + a);
        rhs += tail_sign * tail_coeff * self.sum_u(&g.glue(depth + 1)?, f)?;
        Ok((lhs - rhs).abs())
    }

    /// Full expansion: E[W f(W)] = sum_{j=1}^{k} kappa_{j+1}(W)/j!
    /// E[d^j f(W)] + sum over order-(k+2) genograms of b_H U_f(H).
    pub fn verify_wfw(&mut self, k: usize, f: &dyn Smooth) -> Result<f64> {
        let cap = self.tf.n_indices() as i64;
        let w = self.tf.w_outcomes();
        let wf: Rv = w.iter().map(|&x| x * f.eval(x)).collect();
        let lhs = self.expect(&wf);
        let kappa = self.tf.cumulants_of_w(k + 1)?;
        let mut mid = 0.0;
        for j in 1..=k {
            let rv: Rv = w.iter().map(|&x| f.deriv(j, x)).collect();
            mid += kappa.kappa(j + 1) / factorial(j) * self.expect(&rv);
        }
        let mut rem = 0.0;
        for h in crate::genogram::enumerate(k + 2, cap) {
            let b = b_h(&h)?;
            let b = *b.numer() as f64 / *b.denom() as f64;
            rem += b * self.sum_u(&h, f)?;
        }
        Ok((lhs - mid - rem).abs())
    }

    /// The adjusted cumulant kappa~_{k+1} = kappa_{k+1}(W)
    /// + sum_{H in G0(k+1)} k! b_H / (k+2-u(k+1)) S(H), with components.
    pub fn kappa_tilde(&mut self, k: usize) -> Result<KappaTilde> {
        let cap = self.tf.n_indices() as i64;
        let kappa = self.tf.cumulants_of_w(k + 1)?.kappa(k + 1);
        let (_, g0, _) = enumerate_classes(k + 1, cap);
        let mut correction = 0.0;
        let mut components = Vec::new();
        for h in &g0 {
            let b = b_h(h)?;
            let weight = factorial(k) * ratio_f64(b) / (k as f64 + 2.0 - h.u_index(k + 1) as f64);
            let s = self.sum_s(h);
            if s != 0.0 {
                components.push((h.to_string(), weight * s));
            }
            correction += weight * s;
        }
        Ok(KappaTilde {
            value: kappa + correction,
            kappa,
            correction,
            components,
        })
    }

    /// The same quantity through the complementary class:
    /// kappa~_{k+1} = -k! sum_{H in P0(k+1)} b_H / (k+2-u(k+1)) S(H).
    /// Equality with `kappa_tilde` encodes the cumulant identity for
    /// Q_{k+1}.
    pub fn kappa_tilde_via_p0(&mut self, k: usize) -> Result<f64> {
        let cap = self.tf.n_indices() as i64;
        let (p0, _, _) = enumerate_classes(k + 1, cap);
        let mut acc = 0.0;
        for h in &p0 {
            let b = b_h(h)?;
            acc -= factorial(k) * ratio_f64(b) / (k as f64 + 2.0 - h.u_index(k + 1) as f64)
                * self.sum_s(h);
        }
        Ok(acc)
    }
}

fn ratio_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Adjusted cumulant with its decomposition.
#[derive(Debug, Clone, serde::Serialize)]
pub struct KappaTilde {
    pub value: f64,
    pub kappa: f64,
    pub correction: f64,
    pub components: Vec<(String, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::Composition;
    use crate::fields::{TinyField, TinyVar};
    use crate::functions::Sinusoid;
    use crate::genogram::{fixture_g1, fixture_g2};
    use crate::rng::Stream;

    fn small_field() -> TinyField {
        TinyField::rademacher_line(3).unwrap()
    }

    fn random_rvs(ev: &GenogramEvaluator<'_>, t: usize, seed: u64) -> Vec<Rv> {
        let mut s = Stream::from_seed(seed);
        (0..t)
            .map(|_| {
                (0..ev.field().n_outcomes())
                    .map(|_| s.next_normal())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn d_star_base_cases() {
        let tf = small_field();
        let ev = GenogramEvaluator::new(&tf, 1);
        let ones = vec![1.0; tf.n_outcomes()];
        assert!((ev.d_star(std::slice::from_ref(&ones)) - 1.0).abs() < 1e-15);
        // D*(Y1, Y2) is the covariance
        let y1: Rv = tf.x_outcomes(0).to_vec();
        let y2: Rv = tf
            .x_outcomes(0)
            .iter()
            .zip(tf.x_outcomes(1))
            .map(|(&a, &b)| a + b)
            .collect();
        let got = ev.d_star(&[y1.clone(), y2.clone()]);
        let mean1 = tf.expect(&y1);
        let mean2 = tf.expect(&y2);
        let cov: Rv = y1
            .iter()
            .zip(&y2)
            .map(|(&a, &b)| (a - mean1) * (b - mean2))
            .collect();
        assert!((got - tf.expect(&cov)).abs() < 1e-14);
        // centered D always has mean zero
        let args = random_rvs(&ev, 4, 5);
        let centered = ev.d_centered(&args);
        assert!(tf.expect(&centered).abs() < 1e-12);
    }

    #[test]
    fn d_star_matches_composition_expansion() {
        let tf = small_field();
        let ev = GenogramEvaluator::new(&tf, 1);
        for t in 1..=5usize {
            for seed in 0..4u64 {
                let args = random_rvs(&ev, t, 100 + seed);
                let rec = ev.d_star(&args);
                let exp = ev.d_star_composition(&args).unwrap();
                assert!(
                    (rec - exp).abs() < 1e-12,
                    "t={t} seed={seed}: {rec} vs {exp}"
                );
            }
        }
    }

    #[test]
    fn gen_cov_star_known_covariance() {
        // two-point joint law via a shared base variable
        let tf = small_field();
        let ev = GenogramEvaluator::new(&tf, 1);
        let y1: Rv = tf.x_outcomes(0).to_vec();
        let y2: Rv = tf.x_outcomes(1).to_vec();
        // covariance of independent Rademacher components is 0
        let comp = Composition::new(vec![1, 1]).unwrap();
        let got = ev.gen_cov_star(&[y1.clone(), y2.clone()], &comp).unwrap();
        assert!(got.abs() < 1e-14);
        // blocking both into one slot gives the plain mean of the product
        let comp = Composition::new(vec![2]).unwrap();
        let got = ev.gen_cov_star(&[y1.clone(), y1.clone()], &comp).unwrap();
        assert!((got - 1.0).abs() < 1e-14); // E[X_0^2] = 1
        assert!(ev
            .gen_cov_star(&[y1], &Composition::new(vec![3]).unwrap())
            .is_err());
    }

    #[test]
    fn epsilon_factorizations_match_worked_examples() {
        // E_{G1} = D*(Y1,Y2) D*(Y3) D*(Y4 Y5, Y6) D*(Y7)
        let tf = TinyField::rademacher_line(4).unwrap();
        let ev = GenogramEvaluator::new(&tf, 1);
        let g1 = fixture_g1();
        let ys = random_rvs(&ev, 7, 42);
        let got = ev.epsilon(&g1, &ys);
        let y45: Rv = ys[3].iter().zip(&ys[4]).map(|(&a, &b)| a * b).collect();
        let expect = ev.d_star(&[ys[0].clone(), ys[1].clone()])
            * ev.d_star(&[ys[2].clone()])
            * ev.d_star(&[y45, ys[5].clone()])
            * ev.d_star(&[ys[6].clone()]);
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");

        // E_{G2} = D*(Y1,Y2,Y3) D*(Y4,Y5) D*(Y6 Y7)
        let g2 = fixture_g2();
        let got = ev.epsilon(&g2, &ys);
        let y67: Rv = ys[5].iter().zip(&ys[6]).map(|(&a, &b)| a * b).collect();
        let expect = ev.d_star(&[ys[0].clone(), ys[1].clone(), ys[2].clone()])
            * ev.d_star(&[ys[3].clone(), ys[4].clone()])
            * ev.d_star(&[y67]);
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");

        // single vertex: plain expectation
        let root = Genogram::root();
        let got = ev.epsilon(&root, &ys[..1]);
        assert!((got - tf.expect(&ys[0])).abs() < 1e-14);
    }

    #[test]
    fn constraint_chain_matches_table() {
        // on a 1-d line with m = 1, the chains for the two worked genograms
        // reduce to the ranked-neighborhood table
        let tf = TinyField::rademacher_line(8).unwrap();
        let t = tf.index().clone();
        let mut ev = GenogramEvaluator::new(&tf, 1);
        let nb = |ids: &[usize], s: usize| ranked_neighborhood(&t, ids, s, 1).unwrap();

        let g1 = fixture_g1();
        // a valid chain: i1 = 3, i2/i3 ranked singles, i4 in N(i1), i5
        // repeats B4\D4, i6 ranked, i7 in N(i1,i4,i5)
        let prefix = [3usize, 5, 1, 2, 4, 6, 3];
        let chain = ev.constraint_chain(&g1, &prefix).unwrap();
        assert_eq!(chain[1].0, nb(&[3], 2)); // B2 = N^(2)(i1)
        assert_eq!(chain[1].1, nb(&[3], 1)); // D2 = N^(1)(i1)
        assert_eq!(chain[2].0, nb(&[3], 1)); // B3 = N^(1)(i1)
        assert_eq!(chain[2].1, nb(&[3], 0)); // D3 = N(i1)
        assert_eq!(chain[3].0, nb(&[3], 0)); // B4 = N(i1)
        assert!(chain[3].1.is_empty()); // D4 = {}
        assert_eq!(chain[4].0, chain[3].0); // B5 = B4 (negative vertex)
        assert!(chain[4].1.is_empty()); // D5 = {}
        assert_eq!(chain[5].0, nb(&[3, 2, 4], 2)); // B6 = N^(2)(i1,i4,i5)
        assert_eq!(chain[5].1, nb(&[3, 2, 4], 1)); // D6
        assert_eq!(chain[6].0, nb(&[3, 2, 4], 0)); // B7 = N(i1,i4,i5)
        assert!(chain[6].1.is_empty()); // D7 = {}

        let g2 = fixture_g2();
        let prefix = [3usize, 4, 0, 6, 1, 7, 7];
        let chain = ev.constraint_chain(&g2, &prefix).unwrap();
        assert_eq!(chain[1].0, nb(&[3], 0)); // B2 = N(i1)
        assert!(chain[1].1.is_empty());
        assert_eq!(chain[2].0, nb(&[3, 4], 5)); // B3 = N^(5)(i1,i2)
        assert_eq!(chain[2].1, nb(&[3, 4], 4)); // D3 = N^(4)(i1,i2)
        assert_eq!(chain[3].0, nb(&[3, 4], 3)); // B4 = N^(3)(i1,i2)
        assert_eq!(chain[3].1, nb(&[3, 4], 2)); // D4 = N^(2)(i1,i2)
                                                // B5 = N^(2)(i1,i2,i4) u D4, D5 = N^(1)(i1,i2,i4) u D4
        let union = |mut a: BTreeSet<usize>, b: &BTreeSet<usize>| {
            a.extend(b.iter().copied());
            a
        };
        assert_eq!(chain[4].0, union(nb(&[3, 4, 6], 2), &chain[3].1));
        assert_eq!(chain[4].1, union(nb(&[3, 4, 6], 1), &chain[3].1));
        assert_eq!(chain[5].0, union(nb(&[3, 4, 6], 1), &chain[3].1)); // B6
        assert_eq!(chain[5].1, union(nb(&[3, 4, 6], 0), &chain[3].1)); // D6
        assert_eq!(chain[6].0, chain[5].0); // B7 = B_{u(7)} = B6
        assert_eq!(chain[6].1, chain[5].1); // D7 = D_{g(7)} = D6
                                            // D_j is contained in B_j at every level
        for (b, d) in &chain {
            assert!(d.is_subset(b));
        }
    }

    #[test]
    fn order_one_t_sum_is_wfw() {
        let tf = small_field();
        let mut ev = GenogramEvaluator::new(&tf, 1);
        let f = Poly::new(vec![0.0, 0.0, 1.0]); // f(w) = w^2
        let got = ev.sum_t(&Genogram::root(), &f);
        let w = tf.w_outcomes();
        let rv: Rv = w.iter().map(|&x| x * x * x).collect();
        assert!((got - tf.expect(&rv)).abs() < 1e-13);
    }

    #[test]
    fn sum_s_hand_enumeration() {
        // order-2 path with id 0: sum_{i1} sum_{i2 in N(i1)} Cov(X~_i1, X~_i2)
        let tf = small_field();
        let mut ev = GenogramEvaluator::new(&tf, 1);
        let g = Genogram::root().grow(1, 0).unwrap();
        let got = ev.sum_s(&g);
        let sigma2 = tf.sigma() * tf.sigma();
        let mut expect = 0.0;
        for i1 in 0..3usize {
            for i2 in 0..3usize {
                if i1.abs_diff(i2) <= 1 {
                    let prod: Rv = tf
                        .x_outcomes(i1)
                        .iter()
                        .zip(tf.x_outcomes(i2))
                        .map(|(&a, &b)| a * b)
                        .collect();
                    expect += tf.expect(&prod) / sigma2; // means vanish
                }
            }
        }
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn polynomial_u_sums_vanish_at_low_degree() {
        // deg f <= |G| - 2 makes d^{k-2} f constant, so Delta_f = 0
        let tf = small_field();
        let mut ev = GenogramEvaluator::new(&tf, 1);
        let f = Poly::new(vec![0.5, 2.0]); // degree 1
        for h in crate::genogram::enumerate(3, 3) {
            let u = ev.sum_u(&h, &f).unwrap();
            assert!(u.abs() < 1e-13, "U_f({h}) = {u}");
        }
    }

    #[test]
    fn step1_identity_small_cases() {
        let tf = small_field();
        let mut ev = GenogramEvaluator::new(&tf, 1);
        let f = Sinusoid::sin();
        // from the root
        let res = ev.verify_step1(&Genogram::root(), &f).unwrap();
        assert!(res < 1e-10, "root residual {res}");
        // from an order-2 genogram
        let g = Genogram::root().grow(1, 0).unwrap();
        let res = ev.verify_step1(&g, &f).unwrap();
        assert!(res < 1e-10, "order-2 residual {res}");
    }

    #[test]
    fn step2_identity_small_cases() {
        let tf = small_field();
        let mut ev = GenogramEvaluator::new(&tf, 1);
        let f = Sinusoid::sin();
        for depth in [0usize, 1, 2] {
            let g = Genogram::root().grow(1, 1).unwrap();
            let res = ev.verify_step2(&g, &f, depth).unwrap();
            assert!(res < 1e-10, "depth {depth}: residual {res}");
        }
        // a genogram whose last vertex is negative (u(l) < l)
        let g = Genogram::root().grow(1, 0).unwrap().glue(1).unwrap();
        let res = ev.verify_step2(&g, &f, 1).unwrap();
        assert!(res < 1e-10, "negative-tail residual {res}");
    }

    #[test]
    fn wfw_identity_polynomial_reduction() {
        // for polynomial f of degree <= k the U terms vanish and the graph
        // expansion reduces to the cumulant identity
        let tf = small_field();
        let mut ev = GenogramEvaluator::new(&tf, 1);
        let f = Poly::new(vec![0.0, 0.3, 0.5]);
        let res = ev.verify_wfw(2, &f).unwrap();
        assert!(res < 1e-12, "residual {res}");
    }

    #[test]
    fn wfw_identity_transcendental() {
        // the expansion is exact for every choice of the free parameter m
        let tf = small_field();
        for m in [0u64, 1, 2] {
            let mut ev = GenogramEvaluator::new(&tf, m);
            let res = ev.verify_wfw(1, &Sinusoid::sin()).unwrap();
            assert!(res < 1e-9, "m={m}: k=1 residual {res}");
        }
    }

    #[test]
    fn kappa_tilde_routes_agree() {
        for (tf, m) in [
            (TinyField::rademacher_line(3).unwrap(), 1),
            (TinyField::random(3, 3, 2).unwrap(), 1),
            (TinyField::random(3, 3, 2).unwrap(), 2),
        ] {
            let mut ev = GenogramEvaluator::new(&tf, m);
            for k in [1usize, 2] {
                let via_g0 = ev.kappa_tilde(k).unwrap();
                let via_p0 = ev.kappa_tilde_via_p0(k).unwrap();
                assert!(
                    (via_g0.value - via_p0).abs() < 1e-10,
                    "k={k}: {} vs {via_p0}",
                    via_g0.value
                );
                // |kappa~ - kappa| <= k! sum |S(H)| over G0
                let cap = tf.n_indices() as i64;
                let (_, g0, _) = enumerate_classes(k + 1, cap);
                let mut bound = 0.0;
                for h in &g0 {
                    bound += factorial(k) * ev.sum_s(h).abs();
                }
                assert!((via_g0.value - via_g0.kappa).abs() <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn zero_field_kappa_tilde() {
        // a field with vanishing third cumulant: kappa~_2 correction exists
        // but kappa_3-based quantities stay 0
        let tf = TinyField::rademacher_line(3).unwrap();
        let mut ev = GenogramEvaluator::new(&tf, 1);
        let kt = ev.kappa_tilde(2).unwrap();
        // Rademacher sums are symmetric: kappa_3(W) = 0
        assert!(kt.kappa.abs() < 1e-12);
    }

    #[test]
    fn ustat_like_window_field_kappa_tilde() {
        let tf = TinyField::window_line(TinyVar::rademacher(), 4, 1).unwrap();
        let mut ev = GenogramEvaluator::new(&tf, 1);
        let kt = ev.kappa_tilde(1).unwrap();
        // kappa~_2 for k = 1: kappa_2(W) = 1 plus the S corrections
        let via_p0 = ev.kappa_tilde_via_p0(1).unwrap();
        assert!((kt.value - via_p0).abs() < 1e-10);
    }
}
