//! Output sinks and row formatting. Floats are printed with 17 significant
//! digits so identical configs reproduce byte-identical files.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use depclt::bounds::{mdep_bracket, wp_bracket_ld2, BoundReport};
use depclt::dependency::mdep_neighborhood_bound;
use depclt::error::{Error, Result};
use depclt::experiments::{RateModel, RateTable, TailRow, VerifyItem};
use depclt::fields::UStatModel;
use depclt::genogram::{a_coeff, b_coeff, b_h, enumerate_classes, Genogram};
use depclt::numeric::pairwise_sum;
use depclt::rng::{mix64, Stream};

use crate::config::ModelSpec;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Sink {
    inner: Box<dyn Write>,
}

impl Sink {
    pub fn open(path: Option<&Path>) -> Result<Self> {
        let inner: Box<dyn Write> = match path {
            None => Box::new(std::io::stdout().lock()),
            Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        };
        Ok(Sink { inner })
    }

    pub fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.inner, "{line}")?;
        Ok(())
    }

    pub fn write_json(&mut self, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Config(format!("serialization: {e}")))?;
        writeln!(self.inner, "{text}")?;
        Ok(())
    }
}

pub fn write_rate_table(sink: &mut Sink, table: &RateTable) -> Result<()> {
    sink.write_line("# depclt v1")?;
    sink.write_line("size,p,wp,floor,se")?;
    for row in &table.rows {
        sink.write_line(&format!(
            "{},{},{},{},{}",
            row.size,
            fmt_f64(row.p),
            fmt_f64(row.wp),
            fmt_f64(row.floor),
            fmt_f64(row.se)
        ))?;
    }
    sink.write_line(&format!(
        "# slope={} intercept={} stderr={} slope_floor_adjusted={}",
        fmt_f64(table.slope),
        fmt_f64(table.intercept),
        fmt_f64(table.stderr),
        fmt_f64(table.slope_floor_adjusted)
    ))?;
    Ok(())
}

pub fn write_tail_table(sink: &mut Sink, k_p: f64, rows: &[TailRow]) -> Result<()> {
    sink.write_line("# depclt v1")?;
    sink.write_line(&format!("# K_p={}", fmt_f64(k_p)))?;
    sink.write_line("t,bound,rho,p_mc,mc_se")?;
    for row in rows {
        let p_mc = row.p_mc.map_or("".into(), fmt_f64);
        let mc_se = row.mc_se.map_or("".into(), fmt_f64);
        sink.write_line(&format!(
            "{},{},{},{},{}",
            fmt_f64(row.t),
            fmt_f64(row.bound),
            fmt_f64(row.rho),
            p_mc,
            mc_se
        ))?;
    }
    Ok(())
}

pub fn write_verify_table(sink: &mut Sink, items: &[VerifyItem]) -> Result<()> {
    sink.write_line("# depclt v1")?;
    sink.write_line("name,residual,tolerance,pass")?;
    for i in items {
        sink.write_line(&format!(
            "{},{},{},{}",
            i.name,
            fmt_f64(i.residual),
            fmt_f64(i.tolerance),
            i.pass
        ))?;
    }
    Ok(())
}

/// Stationary per-site absolute moment E|X_i|^r by Monte Carlo with the
/// (for a sample mean, exact) jackknife standard error.
fn abs_moment_mc(
    model: &RateModel,
    size: usize,
    r: f64,
    reps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let values: Vec<f64> = match model {
        RateModel::Field(fm) => {
            let t = depclt::dependency::IndexSet::line(0, size as i64 - 1);
            let mid = size / 2;
            (0..reps)
                .map(|rep| {
                    let s = mix64(seed ^ mix64(rep as u64));
                    let sample = depclt::fields::sample_field(fm, &t, s).expect("valid model");
                    sample.values[mid].abs().powf(r)
                })
                .collect()
        }
        RateModel::UStat { kernel, noise } => (0..reps)
            .map(|rep| {
                let mut s = Stream::derive(seed, rep as u64);
                let x = noise.sample(&mut s);
                let y = noise.sample(&mut s);
                kernel.eval(x, y).abs().powf(r)
            })
            .collect(),
    };
    let n = values.len() as f64;
    let mean = pairwise_sum(&values) / n;
    let sq: Vec<f64> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let se = (pairwise_sum(&sq) / (n - 1.0)).sqrt() / n.sqrt();
    Ok((mean, se))
}

#[derive(Serialize)]
pub struct BoundsReport {
    pub model: String,
    pub size: usize,
    pub p: f64,
    pub sigma: f64,
    pub m_cap: f64,
    pub abs_moment_p2: f64,
    pub abs_moment_p2_se: f64,
    pub ld2: BoundReport,
    /// Half-spread of the ld2 bracket under +-1 SE of the moment estimate.
    pub ld2_bracket_se: f64,
    pub mdep: Option<BoundReport>,
}

pub fn bounds_report(
    spec: &ModelSpec,
    size: usize,
    p: f64,
    reps: usize,
    seed: u64,
) -> Result<BoundsReport> {
    // small-field Monte Carlo needs only a window around one site
    let mc_size = (4 * spec.m as usize + 3).min(size).max(3);
    let rate_model = spec.to_rate_model()?;
    let omega = {
        let w = p + 1.0 - p.ceil();
        if w == 0.0 {
            1.0
        } else {
            w
        }
    };
    let (sigma, m_cap, n_terms) = match &rate_model {
        RateModel::Field(fm) => {
            let t = depclt::dependency::IndexSet::line(0, size as i64 - 1);
            let sigma = depclt::fields::variance_of_sum(fm, &t)?.sqrt();
            let q = p.ceil() as usize + 1;
            (
                sigma,
                mdep_neighborhood_bound(q, spec.m, spec.d),
                size as f64,
            )
        }
        RateModel::UStat { kernel, noise } => {
            let model = UStatModel {
                n: size,
                kernel: *kernel,
                noise: *noise,
            };
            let sigma = model.variance_of_sum()?.sqrt();
            let q = p.ceil() + 1.0;
            let nf = size as f64;
            let cap = nf.powi(2) - (nf - 2.0 * q).powi(2);
            (sigma, cap, nf * (nf - 1.0) / 2.0)
        }
    };
    let (mom_p2, se_p2) = abs_moment_mc(&rate_model, mc_size, p + 2.0, reps, seed)?;
    let (mom_o2, _) = abs_moment_mc(&rate_model, mc_size, omega + 2.0, reps, mix64(seed))?;
    let ld2 = wp_bracket_ld2(m_cap, sigma, n_terms * mom_o2, n_terms * mom_p2, p)?;
    let hi = wp_bracket_ld2(
        m_cap,
        sigma,
        n_terms * mom_o2,
        n_terms * (mom_p2 + se_p2),
        p,
    )?;
    let lo = wp_bracket_ld2(
        m_cap,
        sigma,
        n_terms * mom_o2,
        n_terms * (mom_p2 - se_p2).max(0.0),
        p,
    )?;
    let ld2_bracket_se = (hi.bracket - lo.bracket).abs() / 2.0;
    let mdep = match &rate_model {
        RateModel::Field(_) => Some(mdep_bracket(
            spec.m.max(1),
            spec.d,
            p,
            omega,
            1.0,
            sigma,
            n_terms * mom_p2,
        )?),
        RateModel::UStat { .. } => None,
    };
    Ok(BoundsReport {
        model: spec.name.clone(),
        size,
        p,
        sigma,
        m_cap,
        abs_moment_p2: mom_p2,
        abs_moment_p2_se: se_p2,
        ld2,
        ld2_bracket_se,
        mdep,
    })
}

#[derive(Serialize)]
struct EnumerateReport {
    order: usize,
    id_cap: i64,
    total: usize,
    tree_shapes: usize,
    p0: usize,
    g0: usize,
    p1: usize,
}

#[derive(Serialize)]
struct InspectReport {
    text: String,
    order: usize,
    valid: bool,
    leaves: usize,
    negatives: usize,
    progenitor: Vec<usize>,
    u_index: Vec<usize>,
    b_h: Option<String>,
}

pub fn run_genogram(sink: &mut Sink, action: crate::Action) -> Result<()> {
    match action {
        crate::Action::Enumerate { order, id_cap } => {
            let (p0, g0, p1) = enumerate_classes(order, id_cap);
            let all = depclt::genogram::enumerate(order, id_cap);
            let mut shapes: Vec<Vec<usize>> = all
                .iter()
                .map(|g| (2..=g.order()).map(|j| g.parent(j)).collect())
                .collect();
            shapes.sort();
            shapes.dedup();
            sink.write_json(&EnumerateReport {
                order,
                id_cap,
                total: all.len(),
                tree_shapes: shapes.len(),
                p0: p0.len(),
                g0: g0.len(),
                p1: p1.len(),
            })
        }
        crate::Action::Inspect { text } => {
            let g: Genogram = text.parse()?;
            let order = g.order();
            sink.write_json(&InspectReport {
                text: g.to_string(),
                order,
                valid: g.validate().is_empty(),
                leaves: g.leaves_count(),
                negatives: g.negatives_count(),
                progenitor: (1..=order).map(|j| g.progenitor(j)).collect(),
                u_index: (1..=order).map(|j| g.u_index(j)).collect(),
                b_h: if order >= 2 {
                    let b = b_h(&g)?;
                    Some(format!("{}/{}", b.numer(), b.denom()))
                } else {
                    None
                },
            })
        }
        crate::Action::Coeff { g, h } => {
            let g: Genogram = g.parse()?;
            let h: Genogram = h.parse()?;
            let a = a_coeff(&h, &g)?;
            let b = if h.order() > g.order() {
                let b = b_coeff(&h, &g)?;
                format!("{}/{}", b.numer(), b.denom())
            } else {
                "undefined".into()
            };
            sink.write_line("# depclt v1")?;
            sink.write_line(&format!("a={}/{}", a.numer(), a.denom()))?;
            sink.write_line(&format!("b={b}"))?;
            Ok(())
        }
    }
}
