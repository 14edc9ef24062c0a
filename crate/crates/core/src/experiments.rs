//! Experiment campaigns: empirical Wasserstein-p convergence of dependent
//! sums across sizes, tail-bound dominance checks, and the regression
//! verification suite. The CLI is a thin wrapper over these functions; the
//! acceptance tests call them directly.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{FieldModel, NoiseLaw, UKernel, UStatModel};
use crate::rng::{mix64, Stream};
use crate::wasserstein::{fit_rate, wp_vs_normal, SampleVector, WpMethod};

/// What produces one replicate of W_n.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub enum RateModel {
    Field(FieldModel),
    UStat { kernel: UKernel, noise: NoiseLaw },
}

/// Replicate seed derivation: a fixed hash chain over (seed, size, tag,
/// replicate). Part of the reproducibility contract.
fn replicate_seed(seed: u64, size: usize, tag: u64, replicate: u64) -> u64 {
    mix64(seed ^ mix64(size as u64 ^ mix64(tag ^ mix64(replicate))))
}

/// One row of a rate experiment.
#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub size: usize,
    pub p: f64,
    /// W_p between the R replicates of W_n and N(0,1).
    pub wp: f64,
    /// Same estimator on R exact normal draws: the estimator floor.
    pub floor: f64,
    /// Split-half spread of the estimate.
    pub se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// Log-log slope fitted on the raw estimates.
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    /// Slope refitted on max(wp - floor, wp/50): the floor-corrected view.
    pub slope_floor_adjusted: f64,
}

/// Draw `reps` replicates of W_n for the model at the given size.
pub fn draw_w_replicates(
    model: &RateModel,
    size: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    match model {
        RateModel::Field(fm) => {
            let t = crate::dependency::IndexSet::line(0, size as i64 - 1);
            // sigma is per-size, shared across replicates
            let sigma = crate::fields::variance_of_sum(fm, &t)?.sqrt();
            let values: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let s = replicate_seed(seed, size, 0x6669656c64, r as u64);
                    let vals =
                        crate::fields::sample_field_values(fm, &t, s).expect("validated model");
                    crate::numeric::pairwise_sum(&vals) / sigma
                })
                .collect();
            Ok(values)
        }
        RateModel::UStat { kernel, noise } => {
            let model = UStatModel {
                n: size,
                kernel: *kernel,
                noise: *noise,
            };
            model.variance_of_sum()?;
            // rate claims need the Hajek projection alive
            if kernel.var_g(*noise) < 1e-9 {
                return Err(Error::Degenerate(format!(
                    "kernel {kernel:?} has Var(g) = 0 under the base law"
                )));
            }
            let values: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let s = replicate_seed(seed, size, 0x75737461, r as u64);
                    model.sample_w(s, r as u64).expect("non-degenerate")
                })
                .collect();
            Ok(values)
        }
    }
}

/// The estimator floor: the same W_p estimator applied to `reps` exact
/// normal draws.
pub fn estimator_floor(reps: usize, p: f64, seed: u64) -> Result<f64> {
    let values: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| Stream::derive(mix64(seed ^ 0x666c6f6f72), r as u64).next_normal())
        .collect();
    wp_vs_normal(&SampleVector::new(values)?, p, WpMethod::Midpoint)
}

/// Run a full rate experiment over the given sizes.
pub fn rate_experiment(
    model: &RateModel,
    sizes: &[usize],
    reps: usize,
    p: f64,
    seed: u64,
) -> Result<RateTable> {
    if sizes.len() < 3 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "sizes must be strictly increasing, at least 3".into(),
        ));
    }
    if reps < 100 {
        return Err(Error::Config(format!(
            "reps = {reps} too small; need >= 100"
        )));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let ws = draw_w_replicates(model, size, reps, seed)?;
        let half = reps / 2;
        let first = SampleVector::new(ws[..half].to_vec())?;
        let second = SampleVector::new(ws[half..].to_vec())?;
        let d1 = wp_vs_normal(&first, p, WpMethod::Midpoint)?;
        let d2 = wp_vs_normal(&second, p, WpMethod::Midpoint)?;
        let wp = wp_vs_normal(&SampleVector::new(ws)?, p, WpMethod::Midpoint)?;
        let floor = estimator_floor(reps, p, mix64(seed ^ size as u64))?;
        rows.push(RateRow {
            size,
            p,
            wp,
            floor,
            se: (d1 - d2).abs() / 2.0,
        });
    }
    let dists: Vec<f64> = rows.iter().map(|r| r.wp).collect();
    let (slope, intercept, stderr) = fit_rate(sizes, &dists)?;
    let corrected: Vec<f64> = rows
        .iter()
        .map(|r| (r.wp - r.floor).max(r.wp / 50.0))
        .collect();
    let (slope_adj, _, _) = fit_rate(sizes, &corrected)?;
    Ok(RateTable {
        rows,
        slope,
        intercept,
        stderr,
        slope_floor_adjusted: slope_adj,
    })
}

/// One row of a tail experiment.
#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub t: f64,
    pub bound: f64,
    pub rho: f64,
    /// Monte Carlo P(W_n >= t), when a model was supplied.
    pub p_mc: Option<f64>,
    pub mc_se: Option<f64>,
}

/// Evaluate the tail bound on a t-grid, optionally against Monte Carlo
/// tail frequencies of a model at one size. `k_p` of None calibrates
/// K_p = (measured W_p) * sqrt(n) from the replicates.
pub fn tail_experiment(
    model: Option<&RateModel>,
    size: usize,
    reps: usize,
    p: f64,
    k_p: Option<f64>,
    ts: &[f64],
    seed: u64,
) -> Result<(f64, Vec<TailRow>)> {
    let (k_p, ws) = match model {
        Some(model) => {
            let ws = draw_w_replicates(model, size, reps, seed)?;
            let k_p = match k_p {
                Some(k) => k,
                None => {
                    let d = wp_vs_normal(&SampleVector::new(ws.clone())?, p, WpMethod::Midpoint)?;
                    d * (size as f64).sqrt()
                }
            };
            (k_p, Some(ws))
        }
        None => (k_p.unwrap_or(1.0), None),
    };
    let mut rows = Vec::with_capacity(ts.len());
    for &t in ts {
        let (bound, rho) = crate::bounds::tail_bound(t, p, k_p, size)?;
        let (p_mc, mc_se) = match &ws {
            Some(ws) => {
                let hits = ws.iter().filter(|&&w| w >= t).count() as f64;
                let phat = hits / ws.len() as f64;
                let se = (phat * (1.0 - phat) / ws.len() as f64).sqrt();
                (Some(phat), Some(se))
            }
            None => (None, None),
        };
        rows.push(TailRow {
            t,
            bound,
            rho,
            p_mc,
            mc_se,
        });
    }
    Ok((k_p, rows))
}

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct VerifyItem {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn item(name: impl Into<String>, residual: f64, tolerance: f64) -> VerifyItem {
    VerifyItem {
        name: name.into(),
        residual,
        tolerance,
        pass: residual < tolerance,
    }
}

/// The shipped regression suite: exact-identity checks on TinyFields.
/// `selection` of None runs everything; otherwise item names containing the
/// selector run. `tol_override` replaces every per-item tolerance.
pub fn verify_suite_with(
    selection: Option<&str>,
    tol_override: Option<f64>,
) -> Result<Vec<VerifyItem>> {
    let mut items = verify_suite(selection)?;
    if let Some(tol) = tol_override {
        for i in &mut items {
            i.tolerance = tol;
            i.pass = i.residual < tol;
        }
    }
    Ok(items)
}

/// The shipped regression suite at its default tolerances.
pub fn verify_suite(selection: Option<&str>) -> Result<Vec<VerifyItem>> {
    use crate::bounds::SumEvaluator;
    use crate::fields::{TinyField, TinyVar};
    use crate::functions::{Poly, Sinusoid};
    use crate::genogram::{Genogram, GenogramEvaluator};
    use crate::matching::verify_matching;

    let mut items = Vec::new();

    // polynomial expansion of E[W f(W)] on randomized fields
    for seed in 0..8u64 {
        let tf = TinyField::random(seed, 4, 3)?;
        let mut ev = SumEvaluator::new(&tf, 1);
        let f = Poly::new(vec![0.2, 1.0, -0.4, 0.3, 0.05, -0.02, 0.01]);
        let res = ev.verify_wfw_polynomial(&f)?;
        items.push(item(format!("wfw-polynomial/seed-{seed}"), res, 1e-10));
    }

    // remainder aggregation: definition route vs R-sum route
    for seed in 0..4u64 {
        let tf = TinyField::random(seed + 100, 4, 3)?;
        let mut ev = SumEvaluator::new(&tf, 1);
        for (k, omega) in [(1usize, 1.0), (2, 0.75)] {
            let a = ev.remainder_r(k, omega)?;
            let b = ev.remainder_r_aggregated(k, omega)?;
            items.push(item(
                format!("remainder-aggregation/seed-{seed}-k{k}"),
                (a - b).abs(),
                1e-10,
            ));
        }
    }

    // genogram telescoping identities
    let fields = [
        TinyField::rademacher_line(3)?,
        TinyField::window_line(TinyVar::rademacher(), 4, 1)?,
        TinyField::random(7, 3, 2)?,
    ];
    let sin = Sinusoid::sin();
    let poly = Poly::new(vec![0.0, 0.5, 0.25, -0.1]);
    for (fi, tf) in fields.iter().enumerate() {
        let mut gv = GenogramEvaluator::new(tf, 1);
        let root = Genogram::root();
        let g2 = root.grow(1, 0)?;
        let g2b = root.grow(1, 1)?;
        items.push(item(
            format!("step1/root/field-{fi}"),
            gv.verify_step1(&root, &sin)?,
            1e-9,
        ));
        items.push(item(
            format!("step1/order2/field-{fi}"),
            gv.verify_step1(&g2, &sin)?,
            1e-9,
        ));
        items.push(item(
            format!("step2/order2/field-{fi}"),
            gv.verify_step2(&g2b, &sin, 1)?,
            1e-9,
        ));
        items.push(item(
            format!("wfw-graph/k1/field-{fi}"),
            gv.verify_wfw(1, &sin)?,
            1e-9,
        ));
        items.push(item(
            format!("wfw-graph/poly/field-{fi}"),
            gv.verify_wfw(2, &poly)?,
            1e-9,
        ));
        let kt = gv.kappa_tilde(1)?;
        let p0 = gv.kappa_tilde_via_p0(1)?;
        items.push(item(
            format!("kappa-tilde/field-{fi}"),
            (kt.value - p0).abs(),
            1e-9,
        ));
    }

    // cumulant matching round trips
    for seed in [11u64, 13] {
        let tf = TinyField::random(seed, 4, 3)?;
        if tf.cumulant_of_sum(3)?.abs() < 0.2 {
            let res = verify_matching(&tf, 2.0, 0.5, 12)?;
            items.push(item(
                format!("matching/cumulants/seed-{seed}"),
                res.cumulant_match,
                1e-10,
            ));
            items.push(item(
                format!("matching/round-trip/seed-{seed}"),
                res.prefix_round_trip,
                1e-9,
            ));
        }
    }

    if let Some(sel) = selection {
        items.retain(|i| i.name.contains(sel));
        if items.is_empty() {
            return Err(Error::Config(format!(
                "no verification item matches '{sel}'"
            )));
        }
    }
    Ok(items)
}
