use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs;

use num_complex::Complex64;
use phasekit::estimation::ErrorFunction;
use phasekit::fock_core::{coherent_state, number_state, uniform_state};
use phasekit::phase_pom::PhaseFunction;
use phasekit::{FockDim, StateVector};
use serde::{Deserialize, Serialize};

/// Bad flag, spec or input file. Maps to exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Fully resolved run parameters. Serialized as the canonical config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub dim: Option<usize>,
    pub nu: Option<usize>,
    pub state: Option<String>,
    pub f: Option<String>,
    pub w: Option<String>,
    pub pair: Option<[usize; 2]>,
    pub grid: Option<usize>,
    pub theta: Option<Vec<f64>>,
    pub dims: Option<Vec<usize>>,
    pub probes: Option<String>,
    pub generator: Option<String>,
    pub out: Option<String>,
    pub format: Format,
    pub seed: u64,
    pub tol: BTreeMap<String, f64>,
}

impl RunConfig {
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        serde_json::from_str(text).map_err(|e| usage(format!("bad config file: {e}")))
    }

    pub fn tol(&self, name: &str) -> f64 {
        self.tol[name]
    }

    pub fn require_dim(&self) -> anyhow::Result<FockDim> {
        let s = self.dim.ok_or_else(|| usage("--dim is required"))?;
        FockDim::new(s).map_err(|e| usage(e.to_string()))
    }
}

/// Fills defaults for `names` and rejects unknown overrides.
pub fn resolve_tolerances(
    overrides: &[(String, f64)],
    defaults: &[(&str, f64)],
) -> anyhow::Result<BTreeMap<String, f64>> {
    let mut map: BTreeMap<String, f64> = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in overrides {
        if !map.contains_key(k) {
            let known: Vec<&str> = defaults.iter().map(|(k, _)| *k).collect();
            return Err(usage(format!("unknown tolerance `{k}` (known: {})", known.join(", "))));
        }
        map.insert(k.clone(), *v);
    }
    Ok(map)
}

pub fn parse_tol(text: &str) -> Result<(String, f64), String> {
    let (name, value) = text.split_once('=').ok_or("expected NAME=VAL")?;
    let v: f64 = value.trim().parse().map_err(|_| format!("bad tolerance value `{value}`"))?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(format!("tolerance must be finite and non-negative, got {v}"));
    }
    Ok((name.trim().to_string(), v))
}

pub fn parse_pair(text: &str) -> Result<[usize; 2], String> {
    let (a, b) = text.split_once(',').ok_or("expected n,n'")?;
    let p = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad index `{t}`"));
    Ok([p(a)?, p(b)?])
}

pub fn parse_usize_list(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("bad integer `{t}`")))
        .collect()
}

/// Number, `pi`, or `[a]pi[/b]` such as `7pi/4`.
pub fn parse_angle(text: &str) -> Result<f64, String> {
    let t = text.trim();
    if let Ok(v) = t.parse::<f64>() {
        return if v.is_finite() { Ok(v) } else { Err(format!("bad angle `{t}`")) };
    }
    let Some((num, den)) = t.split_once("pi") else {
        return Err(format!("bad angle `{t}`"));
    };
    let a = if num.is_empty() { 1.0 } else { num.parse::<f64>().map_err(|_| format!("bad angle `{t}`"))? };
    let b = match den {
        "" => 1.0,
        d => d
            .strip_prefix('/')
            .and_then(|d| d.parse::<f64>().ok())
            .ok_or_else(|| format!("bad angle `{t}`"))?,
    };
    Ok(a * PI / b)
}

pub fn parse_angle_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',').map(parse_angle).collect()
}

fn read_file(path: &str) -> anyhow::Result<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read `{path}`: {e}")))
}

/// `number:n | coherent:re,im | amps:<path> | uniform:k`
pub fn parse_state(spec: &str, dim: Option<usize>) -> anyhow::Result<StateVector> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| usage(format!("bad state spec `{spec}`")))?;
    let need_dim = || -> anyhow::Result<FockDim> {
        let s = dim.ok_or_else(|| usage(format!("state `{spec}` needs --dim")))?;
        FockDim::new(s).map_err(|e| usage(e.to_string()))
    };
    let int = |t: &str| t.trim().parse::<usize>().map_err(|_| usage(format!("bad integer in `{spec}`")));
    match kind {
        "number" => Ok(number_state(need_dim()?, int(arg)?)?),
        "uniform" => Ok(uniform_state(need_dim()?, int(arg)?)?),
        "coherent" => {
            let (re, im) = arg.split_once(',').unwrap_or((arg, "0"));
            let num = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| usage(format!("bad number in `{spec}`")))
            };
            Ok(coherent_state(need_dim()?, Complex64::new(num(re)?, num(im)?))?)
        }
        "amps" => {
            let psi = StateVector::parse_text(&read_file(arg)?).map_err(|e| usage(format!("{arg}: {e}")))?;
            if let Some(s) = dim {
                if s != psi.dim().get() {
                    return Err(usage(format!("--dim {s} disagrees with {} amplitudes in `{arg}`", psi.dim().get())));
                }
            }
            psi.require_normalized()?;
            Ok(psi)
        }
        _ => Err(usage(format!("unknown state kind `{kind}`"))),
    }
}

/// `theta | theta2 | cos | sin | expi | fourier:<path>`
pub fn parse_function(spec: &str) -> anyhow::Result<PhaseFunction> {
    match spec {
        "theta" => Ok(PhaseFunction::Theta),
        "theta2" => Ok(PhaseFunction::ThetaSquared),
        "cos" => Ok(PhaseFunction::Cos),
        "sin" => Ok(PhaseFunction::Sin),
        "expi" => Ok(PhaseFunction::ExpI(1)),
        _ => {
            let path = spec
                .strip_prefix("fourier:")
                .ok_or_else(|| usage(format!("unknown function `{spec}`")))?;
            let text = read_file(path)?;
            let mut terms = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let cols: Vec<&str> = line.split_whitespace().collect();
                let bad = || usage(format!("{path}:{}: expected `k re im`", i + 1));
                let [k, re, im] = cols.as_slice() else { return Err(bad()) };
                let k: i64 = k.parse().map_err(|_| bad())?;
                let re: f64 = re.parse().map_err(|_| bad())?;
                let im: f64 = im.parse().map_err(|_| bad())?;
                if !(re.is_finite() && im.is_finite()) {
                    return Err(bad());
                }
                terms.push((k, Complex64::new(re, im)));
            }
            if terms.is_empty() {
                return Err(usage(format!("{path}: no Fourier terms")));
            }
            Ok(PhaseFunction::Fourier(terms))
        }
    }
}

/// `sin2 | delta | custom:<path>` (one sample per line on a uniform grid).
pub fn parse_error_function(spec: &str) -> anyhow::Result<ErrorFunction> {
    match spec {
        "sin2" => Ok(ErrorFunction::Sin2),
        "delta" => Ok(ErrorFunction::DeltaSurrogate),
        _ => {
            let path = spec
                .strip_prefix("custom:")
                .ok_or_else(|| usage(format!("unknown error function `{spec}`")))?;
            let values = read_file(path)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.parse::<f64>().map_err(|_| usage(format!("{path}: bad sample `{l}`"))))
                .collect::<anyhow::Result<Vec<f64>>>()?;
            ErrorFunction::custom(values).map_err(|e| usage(format!("{path}: {e}")))
        }
    }
}
