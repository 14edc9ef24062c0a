//! Integer compositions, compositional expectations, Bell polynomials, the
//! moment/cumulant correspondence, and Hankel positivity checks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::factorial;

/// An ordered tuple of positive integers summing to `total()`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Composition {
    pub parts: Vec<usize>,
}

impl Composition {
    pub fn new(parts: Vec<usize>) -> Result<Self> {
        if parts.is_empty() || parts.contains(&0) {
            return Err(Error::domain("composition parts must be positive"));
        }
        Ok(Composition { parts })
    }

    pub fn total(&self) -> usize {
        self.parts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

/// All compositions of `t`, in lexicographic order of the parts vector.
/// There are exactly 2^(t-1) of them.
pub fn enumerate_compositions(t: usize) -> Result<Vec<Composition>> {
    if t == 0 {
        return Err(Error::EmptyInput("compositions of 0"));
    }
    let mut out = Vec::with_capacity(1 << (t - 1));
    let mut parts = Vec::new();
    fn rec(remaining: usize, parts: &mut Vec<usize>, out: &mut Vec<Composition>) {
        if remaining == 0 {
            out.push(Composition {
                parts: parts.clone(),
            });
            return;
        }
        for first in 1..=remaining {
            parts.push(first);
            rec(remaining - first, parts, out);
            parts.pop();
        }
    }
    rec(t, &mut parts, &mut out);
    Ok(out)
}

/// The restricted class C*(t): compositions whose parts are all >= 2 except
/// possibly the last. Requires t >= 2.
pub fn enumerate_restricted_compositions(t: usize) -> Result<Vec<Composition>> {
    if t < 2 {
        return Err(Error::domain(format!("C*({t}) needs t >= 2")));
    }
    Ok(enumerate_compositions(t)?
        .into_iter()
        .filter(|c| c.parts[..c.parts.len() - 1].iter().all(|&p| p >= 2))
        .collect())
}

/// Partial exponential Bell polynomial B_{n,j}(x_1, ..., x_{n-j+1}):
/// sum over nonnegative (i_1, ..., i_{n-j+1}) with sum i = j and
/// sum t*i_t = n of n!/(prod i_t!) prod (x_t/t!)^{i_t}.
pub fn bell_partial(n: usize, j: usize, x: &[f64]) -> Result<f64> {
    if j == 0 || j > n {
        return Err(Error::domain(format!("B_{{{n},{j}}} needs 1 <= j <= n")));
    }
    if x.len() != n - j + 1 {
        return Err(Error::shape(format!(
            "B_{{{n},{j}}} takes {} arguments, got {}",
            n - j + 1,
            x.len()
        )));
    }
    let mut total = 0.0;
    // counts[t-1] = i_t
    let mut counts = vec![0usize; n - j + 1];
    fn rec(
        t: usize,
        blocks_left: usize,
        weight_left: usize,
        counts: &mut [usize],
        x: &[f64],
        n: usize,
        total: &mut f64,
    ) {
        if t == counts.len() {
            if blocks_left == 0 && weight_left == 0 {
                // n! / (prod i_t! (t!)^{i_t}) is an integer (the number of
                // set partitions with the given block profile); computing it
                // exactly keeps each term to one rounding.
                let mut term = faa_di_bruno_coefficient(n, counts);
                for (idx, &c) in counts.iter().enumerate() {
                    term *= x[idx].powi(c as i32);
                }
                *total += term;
            }
            return;
        }
        let size = t + 1;
        let max_c = blocks_left.min(weight_left / size);
        for c in 0..=max_c {
            counts[t] = c;
            rec(
                t + 1,
                blocks_left - c,
                weight_left - c * size,
                counts,
                x,
                n,
                total,
            );
        }
        counts[t] = 0;
    }
    rec(0, j, n, &mut counts, x, n, &mut total);
    Ok(total)
}

/// n! / (prod_t i_t! (t!)^{i_t}) as an exact integer whenever it fits u128
/// (n <= 25 covers every order this crate touches), else in doubles.
fn faa_di_bruno_coefficient(n: usize, counts: &[usize]) -> f64 {
    if n <= 25 {
        let mut denom = 1u128;
        let mut ok = true;
        for (idx, &c) in counts.iter().enumerate() {
            let size = idx + 1;
            for _ in 0..c {
                match denom.checked_mul(crate::numeric::factorial_u128(size)) {
                    Some(v) => denom = v,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            match denom.checked_mul(crate::numeric::factorial_u128(c)) {
                Some(v) => denom = v,
                None => ok = false,
            }
            if !ok {
                break;
            }
        }
        if ok {
            return (crate::numeric::factorial_u128(n) / denom) as f64;
        }
    }
    let mut coeff = factorial(n);
    for (idx, &c) in counts.iter().enumerate() {
        coeff /= factorial(c) * factorial(idx + 1).powi(c as i32);
    }
    coeff
}

/// Complete Bell polynomial B_n(x_1, ..., x_n) = sum_j B_{n,j}.
pub fn bell_complete(n: usize, x: &[f64]) -> Result<f64> {
    if x.len() != n {
        return Err(Error::shape(format!(
            "B_{n} takes {n} arguments, got {}",
            x.len()
        )));
    }
    let mut acc = 0.0;
    for j in 1..=n {
        acc += bell_partial(n, j, &x[..n - j + 1])?;
    }
    Ok(acc)
}

/// Moments mu_0..mu_n of a law (mu_0 = 1 for probability laws).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSequence {
    pub values: Vec<f64>,
}

impl MomentSequence {
    /// `values[j]` = mu_j, starting at mu_0.
    pub fn new(values: Vec<f64>) -> Self {
        MomentSequence { values }
    }

    pub fn order(&self) -> usize {
        self.values.len() - 1
    }
}

/// Cumulants kappa_1..kappa_n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulantSequence {
    pub values: Vec<f64>,
}

impl CumulantSequence {
    /// `values[j-1]` = kappa_j, starting at kappa_1.
    pub fn new(values: Vec<f64>) -> Self {
        assert!(!values.is_empty());
        CumulantSequence { values }
    }

    pub fn order(&self) -> usize {
        self.values.len()
    }

    pub fn kappa(&self, j: usize) -> f64 {
        self.values[j - 1]
    }
}

/// mu_n = B_n(kappa_1, ..., kappa_n) for each n up to the input order.
pub fn moments_from_cumulants(kappa: &CumulantSequence) -> MomentSequence {
    let order = kappa.order();
    let mut values = Vec::with_capacity(order + 1);
    values.push(1.0);
    for n in 1..=order {
        values.push(bell_complete(n, &kappa.values[..n]).expect("orders match"));
    }
    MomentSequence::new(values)
}

/// kappa_n = sum_j (-1)^(j-1) (j-1)! B_{n,j}(mu_1, ..., mu_{n-j+1}).
pub fn cumulants_from_moments(mu: &MomentSequence) -> Result<CumulantSequence> {
    if (mu.values[0] - 1.0).abs() > 1e-12 {
        return Err(Error::Normalization(format!(
            "moment sequence must start at mu_0 = 1, got {}",
            mu.values[0]
        )));
    }
    let order = mu.order();
    if order == 0 {
        return Err(Error::EmptyInput("moment sequence of order 0"));
    }
    let raw = &mu.values[1..];
    let mut values = Vec::with_capacity(order);
    for n in 1..=order {
        let mut acc = 0.0;
        for j in 1..=n {
            let sign = if (j - 1) % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * factorial(j - 1) * bell_partial(n, j, &raw[..n - j + 1])?;
        }
        values.push(acc);
    }
    Ok(CumulantSequence::new(values))
}

/// Check the linear recursion mu_n = sum_j C(n-1, j-1) kappa_j mu_{n-j};
/// returns the largest residual over 1 <= n <= order.
pub fn moment_cumulant_recursion_residual(mu: &MomentSequence, kappa: &CumulantSequence) -> f64 {
    let order = mu.order().min(kappa.order());
    let mut worst = 0.0f64;
    for n in 1..=order {
        let mut rhs = 0.0;
        for j in 1..=n {
            rhs += crate::numeric::binomial(n - 1, j - 1) * kappa.kappa(j) * mu.values[n - j];
        }
        worst = worst.max((mu.values[n] - rhs).abs());
    }
    worst
}

/// Determinants H_0..H_j of the nested Hankel minors of a moment sequence of
/// even order 2j, via LU with partial pivoting.
pub fn hankel_determinants(mu: &MomentSequence) -> Result<Vec<f64>> {
    let order = mu.order();
    if !order.is_multiple_of(2) {
        return Err(Error::shape(format!(
            "Hankel determinants need an even moment order, got {order}"
        )));
    }
    let j_max = order / 2;
    let mut out = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        let dim = j + 1;
        let mut mat = vec![0.0f64; dim * dim];
        for r in 0..dim {
            for c in 0..dim {
                mat[r * dim + c] = mu.values[r + c];
            }
        }
        out.push(det_lu(&mut mat, dim));
    }
    Ok(out)
}

fn det_lu(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0f64;
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[pivot * n + col].abs() {
                pivot = r;
            }
        }
        if a[pivot * n + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for c in 0..n {
                a.swap(col * n + c, pivot * n + c);
            }
            det = -det;
        }
        det *= a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
        }
    }
    det
}

/// Outcome of a Hamburger solvability check (Sylvester criterion on the
/// Hankel minors). Two-point laws sit exactly on the semidefinite boundary
/// (some H_j = 0); those are genuine laws, so they are reported feasible
/// with the boundary flag set.
#[derive(Debug, Clone, Serialize)]
pub struct HamburgerCheck {
    pub feasible: bool,
    pub on_boundary: bool,
    pub determinants: Vec<f64>,
}

pub const HANKEL_TOL: f64 = 1e-12;

pub fn hamburger_feasible(mu: &MomentSequence) -> Result<HamburgerCheck> {
    if (mu.values[0] - 1.0).abs() > 1e-12 {
        return Err(Error::Normalization("mu_0 must be 1".into()));
    }
    let dets = hankel_determinants(mu)?;
    let feasible = dets.iter().all(|&h| h > -HANKEL_TOL);
    let on_boundary = feasible && dets.iter().any(|&h| h.abs() <= HANKEL_TOL);
    Ok(HamburgerCheck {
        feasible,
        on_boundary,
        determinants: dets,
    })
}

/// Moments of the standard normal up to the given order: mu_{2l} = (2l-1)!!.
pub fn normal_moments(order: usize) -> MomentSequence {
    let mut values = Vec::with_capacity(order + 1);
    for n in 0..=order {
        if n % 2 == 0 {
            values.push(crate::numeric::double_factorial_odd(n / 2));
        } else {
            values.push(0.0);
        }
    }
    MomentSequence::new(values)
}
