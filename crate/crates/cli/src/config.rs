//! JSON config file plus flag overrides. Flags win over file fields.

use std::path::Path;

use serde::Deserialize;

use depclt::error::{Error, Result};
use depclt::experiments::RateModel;
use depclt::fields::{FieldModel, NoiseLaw, UKernel, WindowKernel};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<String>,
    pub d: Option<usize>,
    pub m: Option<u64>,
    pub noise: Option<String>,
    pub kernel: Option<String>,
    pub sizes: Option<Vec<usize>>,
    pub size: Option<usize>,
    pub reps: Option<usize>,
    pub p: Option<f64>,
    pub seed: Option<u64>,
    pub t_grid: Option<Vec<f64>>,
    /// Truncation length of the linear causal model.
    pub trunc: Option<usize>,
    /// Decay exponent of the linear causal model.
    pub decay: Option<f64>,
    /// Tolerance override for the verification suite.
    pub tol: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
        }
    }
}

/// Fully resolved model description; the kernel text is interpreted by the
/// model kind.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub d: usize,
    pub m: u64,
    pub noise: NoiseLaw,
    pub kernel: String,
    pub decay: f64,
    pub trunc: usize,
}

impl ModelSpec {
    pub fn resolve(
        file: &FileConfig,
        model: Option<String>,
        d: Option<usize>,
        m: Option<u64>,
        noise: Option<String>,
        kernel: Option<String>,
    ) -> Result<Self> {
        let name = model
            .or_else(|| file.model.clone())
            .unwrap_or_else(|| "window".into());
        let noise_text = noise
            .or_else(|| file.noise.clone())
            .unwrap_or_else(|| "normal".into());
        let spec = ModelSpec {
            name: name.clone(),
            d: d.or(file.d).unwrap_or(1),
            m: m.or(file.m).unwrap_or(1),
            noise: parse_noise(&noise_text)?,
            kernel: kernel.or_else(|| file.kernel.clone()).unwrap_or_default(),
            decay: file.decay.unwrap_or(2.0),
            trunc: file.trunc.unwrap_or(512),
        };
        match name.as_str() {
            "window" | "linear" | "ustat" => Ok(spec),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (expected window, linear, or ustat)"
            ))),
        }
    }

    pub fn to_rate_model(&self) -> Result<RateModel> {
        Ok(match self.name.as_str() {
            "window" => RateModel::Field(FieldModel::MovingWindow {
                d: self.d,
                m: self.m,
                kernel: parse_window_kernel(&self.kernel)?,
                noise: self.noise,
            }),
            "linear" => RateModel::Field(FieldModel::LinearCausal {
                decay: self.decay,
                trunc: self.trunc,
                noise: self.noise,
            }),
            "ustat" => RateModel::UStat {
                kernel: parse_u_kernel(&self.kernel)?,
                noise: self.noise,
            },
            other => return Err(Error::Config(format!("unknown model '{other}'"))),
        })
    }
}

pub fn parse_noise(text: &str) -> Result<NoiseLaw> {
    match text {
        "" | "normal" => Ok(NoiseLaw::StdNormal),
        "rademacher" => Ok(NoiseLaw::Rademacher),
        "exponential" => Ok(NoiseLaw::CenteredExponential),
        other => {
            if let Some(p_text) = other.strip_prefix("bernoulli:") {
                let p: f64 = p_text
                    .parse()
                    .map_err(|_| Error::Config(format!("bad bernoulli parameter '{p_text}'")))?;
                if !(0.0 < p && p < 1.0) {
                    return Err(Error::Config(format!("bernoulli p = {p} outside (0,1)")));
                }
                Ok(NoiseLaw::CenteredBernoulli { p })
            } else {
                Err(Error::Config(format!("unknown noise law '{other}'")))
            }
        }
    }
}

pub fn parse_window_kernel(text: &str) -> Result<WindowKernel> {
    match text {
        "" | "mean" | "sumprod" | "sum" => Ok(WindowKernel::Mean),
        "product" => Ok(WindowKernel::Product),
        "zero" => Ok(WindowKernel::Zero),
        other => Err(Error::Config(format!("unknown kernel '{other}'"))),
    }
}

pub fn parse_u_kernel(text: &str) -> Result<UKernel> {
    match text {
        "" | "sumprod" | "mean" => Ok(UKernel::SumProd),
        "sum" => Ok(UKernel::Sum),
        "product" => Ok(UKernel::Product),
        other => Err(Error::Config(format!("unknown kernel '{other}'"))),
    }
}

pub fn resolve_sizes(file: &FileConfig, flag: Option<String>) -> Result<Vec<usize>> {
    let sizes: Vec<usize> = match flag {
        Some(text) => text
            .split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad size '{t}'")))
            })
            .collect::<Result<_>>()?,
        None => file
            .sizes
            .clone()
            .unwrap_or_else(|| vec![256, 512, 1024, 2048]),
    };
    if sizes.len() < 3 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "sizes must be strictly increasing, at least 3".into(),
        ));
    }
    Ok(sizes)
}

pub fn resolve_t_grid(file: &FileConfig, flag: Option<String>) -> Result<Vec<f64>> {
    let ts: Vec<f64> = match flag {
        Some(text) => text
            .split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad t value '{t}'")))
            })
            .collect::<Result<_>>()?,
        None => file
            .t_grid
            .clone()
            .unwrap_or_else(|| vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5]),
    };
    if ts.is_empty() || ts.iter().any(|&t| t <= 0.0) {
        return Err(Error::Config("t grid must be positive".into()));
    }
    Ok(ts)
}
