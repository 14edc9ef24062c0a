//! Constructive cumulant matching: pick the i.i.d. block count q, set the
//! target cumulants, assemble a moment sequence through Bell polynomials,
//! extend it with the Hankel-preserving recursion, and certify positivity.
//!
//! The construction stops at a certified moment sequence; realizing a random
//! variable from it (moment-problem inversion) is out of scope.

use serde::Serialize;

use crate::combinatorics::{
    bell_complete, cumulants_from_moments, hankel_determinants, MomentSequence,
};
use crate::error::{Error, Result};
use crate::fields::TinyField;

/// Certification threshold: every Hankel minor of a feasible sequence must
/// reach 1 up to rounding.
pub const HANKEL_FLOOR: f64 = 1.0 - 1e-9;

/// Outcome of `choose_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChosenQ {
    /// All targets vanish: take a standard normal and any q >> |I_n|.
    Normal,
    Q(u64),
}

/// q = floor( min over nonzero u_j of C_p^2 |u_j|^{-2/j} ), or the normal
/// sentinel when every u_j is zero.
pub fn choose_q(u: &[f64], c_p: f64) -> Result<ChosenQ> {
    if !(0.0 < c_p && c_p <= 1.0) {
        return Err(Error::domain(format!("C_p = {c_p} outside (0,1]")));
    }
    if u.iter().all(|&x| x == 0.0) {
        return Ok(ChosenQ::Normal);
    }
    let mut best = f64::INFINITY;
    for (idx, &uj) in u.iter().enumerate() {
        if uj == 0.0 {
            continue;
        }
        let j = (idx + 1) as f64;
        best = best.min(c_p * c_p * uj.abs().powf(-2.0 / j));
    }
    let q = best.floor();
    if q < 1.0 {
        return Err(Error::domain(format!(
            "u too large for matching at this n: floor(min C_p^2 |u_j|^(-2/j)) = {q}"
        )));
    }
    Ok(ChosenQ::Q(q as u64))
}

/// Target cumulants kappa~_{j+2} = q^{j/2} u_j for j = 1..k-1.
pub fn target_cumulants(u: &[f64], q: ChosenQ, k: usize) -> Vec<f64> {
    match q {
        ChosenQ::Normal => vec![0.0; k - 1],
        ChosenQ::Q(q) => (0..k - 1)
            .map(|idx| (q as f64).powf((idx + 1) as f64 / 2.0) * u[idx])
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchingResult {
    pub q: ChosenQ,
    /// kappa~_1..kappa~_{k+1} (starts 0, 1, then the targets).
    pub kappa_tilde: Vec<f64>,
    pub mu_tilde: MomentSequence,
    pub hankel: Vec<f64>,
    pub feasible: bool,
    /// Hankel index that broke certification, when infeasible.
    pub failed_index: Option<usize>,
}

/// Build the moment sequence for given targets kappa~_3..kappa~_{k+1}
/// (kappa~_1 = 0, kappa~_2 = 1 implicit):
///
/// * initial moments through order k+1 via complete Bell polynomials,
/// * mu~_{k+2} = 0 when k is odd,
/// * odd extension moments 0; each even extension moment is chosen through
///   the Laplace expansion H_{j+1} = H_{j+1}|_{mu=0} + mu_{2j+2} H_j so that
///   the minors grow like the standard normal's, H_{j+1} = (j+1)! H_j. For
///   vanishing targets this reproduces the normal moment tail exactly. The
///   worst-case closed form (j+1)(j+1)! C^{j+2} + 1 certifies the same
///   inequality but overflows doubles past order 10,
/// * certification that every Hankel minor stays >= 1 - 1e-9.
pub fn build_moment_sequence(
    kappa3_up: &[f64],
    k: usize,
    extension_order: usize,
) -> Result<MatchingResult> {
    if k < 1 {
        return Err(Error::domain("k must be >= 1"));
    }
    if kappa3_up.len() + 1 != k {
        return Err(Error::shape(format!(
            "expected {} target cumulants for k = {k}, got {}",
            k - 1,
            kappa3_up.len()
        )));
    }
    if !extension_order.is_multiple_of(2) {
        return Err(Error::domain("extension order must be even"));
    }
    let mut kappa = vec![0.0, 1.0];
    kappa.extend_from_slice(kappa3_up);

    let mut mu = vec![1.0, 0.0];
    for n in 2..=k + 1 {
        mu.push(bell_complete(n, &kappa[..n])?);
    }
    if k % 2 == 1 {
        mu.push(0.0);
    }
    // mu is now known through the odd order 2 ceil(k/2) + 1
    debug_assert_eq!(mu.len() % 2, 0);

    while mu.len() <= extension_order {
        // appending the even index e = mu.len(): Hankel step j = e/2 - 1
        let e = mu.len();
        let j = e / 2 - 1;
        let h_j = leading_hankel(&mu, j);
        mu.push(0.0);
        let rest = leading_hankel(&mu, j + 1);
        mu.pop();
        let target = crate::numeric::factorial(j + 1) * h_j;
        let next = if h_j.abs() > 1e-100 {
            (target - rest) / h_j
        } else {
            f64::INFINITY
        };
        mu.push(next);
        if mu.len() <= extension_order {
            mu.push(0.0);
        }
    }
    mu.truncate(extension_order + 1);

    let mu_tilde = MomentSequence::new(mu);
    let hankel = hankel_determinants(&mu_tilde)?;
    let failed_index = hankel.iter().position(|&h| h < HANKEL_FLOOR);
    Ok(MatchingResult {
        q: ChosenQ::Q(0), // caller overwrites; standalone builds carry no q
        kappa_tilde: kappa,
        mu_tilde,
        hankel,
        feasible: failed_index.is_none(),
        failed_index,
    })
}

/// H_j of the first moments in `mu` (needs indices up to 2j).
fn leading_hankel(mu: &[f64], j: usize) -> f64 {
    let slice = MomentSequence::new(mu[..=2 * j].to_vec());
    *hankel_determinants(&slice)
        .expect("even order")
        .last()
        .unwrap()
}

/// Full matching problem: scaled targets u, order parameter p, the matching
/// constant C_p, and the extension order for the certified prefix.
#[derive(Debug, Clone)]
pub struct MatchingProblem {
    pub u: Vec<f64>,
    pub p: f64,
    pub c_p: f64,
    pub extension_order: usize,
}

impl MatchingProblem {
    pub fn k(&self) -> usize {
        self.p.ceil() as usize
    }

    pub fn solve(&self) -> Result<MatchingResult> {
        let k = self.k();
        if self.u.len() + 1 != k {
            return Err(Error::shape(format!(
                "u must have length ceil(p) - 1 = {}, got {}",
                k - 1,
                self.u.len()
            )));
        }
        let q = choose_q(&self.u, self.c_p)?;
        let targets = target_cumulants(&self.u, q, k);
        let mut result = build_moment_sequence(&targets, k, self.extension_order)?;
        result.q = q;
        Ok(result)
    }
}

/// Residuals of a matching run against the exact cumulants of a TinyField:
/// the recovered kappa_{j+2}(W) from the targets, and the round-trip of the
/// built moment prefix.
#[derive(Debug, Clone, Serialize)]
pub struct MatchingResiduals {
    pub cumulant_match: f64,
    pub prefix_round_trip: f64,
    pub feasible: bool,
}

pub fn verify_matching(
    tf: &TinyField,
    p: f64,
    c_p: f64,
    extension_order: usize,
) -> Result<MatchingResiduals> {
    let k = p.ceil() as usize;
    if k < 2 {
        return Err(Error::domain("verification needs p > 1"));
    }
    let kappa_w = tf.cumulants_of_w(k + 1)?;
    let u: Vec<f64> = (1..k).map(|j| kappa_w.kappa(j + 2)).collect();
    let problem = MatchingProblem {
        u: u.clone(),
        p,
        c_p,
        extension_order,
    };
    let result = problem.solve()?;

    // kappa~_{j+2} / q^{j/2} must reproduce kappa_{j+2}(W)
    let mut cumulant_match = 0.0f64;
    if let ChosenQ::Q(q) = result.q {
        for (idx, &uj) in u.iter().enumerate() {
            let j = (idx + 1) as f64;
            let recovered = result.kappa_tilde[idx + 2] / (q as f64).powf(j / 2.0);
            cumulant_match = cumulant_match.max((recovered - uj).abs());
        }
    }
    // the built moments round-trip to (0, 1, kappa~_3, ...)
    let back = cumulants_from_moments(&result.mu_tilde)?;
    let mut prefix_round_trip = 0.0f64;
    for (j, &kt) in result.kappa_tilde.iter().enumerate() {
        prefix_round_trip = prefix_round_trip.max((back.values[j] - kt).abs());
    }
    Ok(MatchingResiduals {
        cumulant_match,
        prefix_round_trip,
        feasible: result.feasible,
    })
}
