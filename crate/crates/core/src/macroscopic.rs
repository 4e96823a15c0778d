//! Emulation of the hyperfinite extension at a large finite dimension ν.
//!
//! A bounded operator on the full Fock space is given by a rule
//! `(n, n') ↦ ⟨n|T|n'⟩`. Its extension to the ν-dimensional space `D` is
//! the lazy restriction of that rule to `[0, ν)²`; compression back to a
//! `k`-dimensional space takes the top-left block. Indices in the top band
//! `ν−w..ν−1` stand in for nonstandard (macroscopic) indices.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PhaseError, Result};
use crate::fock_core::{FockDim, StateVector};
use crate::operator::DenseOperator;
use crate::phase_ops::{apply_phase_function, pb_phase_state, PhaseGrid};
use crate::phase_pom::{distribution, phase_pom, DistributionResult, PhaseFunction};

pub const DEFAULT_NU: usize = 1 << 16;
pub const MIN_NU: usize = 1 << 10;
pub const DEFAULT_WINDOW: usize = 64;
pub const DEFAULT_PROBE_FLOOR: usize = 1 << 12;
pub const DEFAULT_CAUCHY_TOL: f64 = 1e-3;

type Rule = dyn Fn(usize, usize) -> Complex64 + Send + Sync;

/// Pure rule for `⟨n|T|n'⟩` together with a declared uniform bound.
#[derive(Clone)]
pub struct MatrixElementGenerator {
    id: String,
    bound: f64,
    diagonal: bool,
    rule: Arc<Rule>,
}

impl fmt::Debug for MatrixElementGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixElementGenerator")
            .field("id", &self.id)
            .field("bound", &self.bound)
            .field("diagonal", &self.diagonal)
            .finish_non_exhaustive()
    }
}

impl MatrixElementGenerator {
    pub fn new<F>(id: impl Into<String>, bound: f64, rule: F) -> Self
    where
        F: Fn(usize, usize) -> Complex64 + Send + Sync + 'static,
    {
        Self {
            id: id.into(),
            bound,
            diagonal: false,
            rule: Arc::new(rule),
        }
    }

    /// Marks the rule as vanishing off the diagonal.
    pub fn diagonal_only(mut self) -> Self {
        self.diagonal = true;
        self
    }

    pub fn identity() -> Self {
        Self::new("identity", 1.0, |n, np| if n == np { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
            .diagonal_only()
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(format!("constant:{},{}", c.re, c.im), c.norm(), move |_, _| c)
    }

    /// `δ_{nn'} n/(n+1)`
    pub fn n_over_n_plus_one() -> Self {
        Self::new("diag:n_over_n_plus_1", 1.0, |n, np| {
            if n == np {
                Complex64::new(n as f64 / (n as f64 + 1.0), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .diagonal_only()
    }

    /// `1/(1 + n + n')`
    pub fn inverse_sum() -> Self {
        Self::new("inv_sum", 1.0, |n, np| Complex64::new(1.0 / (1.0 + n as f64 + np as f64), 0.0))
    }

    /// ½ on the first super- and sub-diagonal.
    pub fn sg_cos() -> Self {
        Self::new("sg_cos", 0.5, |n, np| {
            if n.abs_diff(np) == 1 {
                Complex64::new(0.5, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Finite matrix, zero outside its block.
    pub fn from_matrix(id: impl Into<String>, op: &DenseOperator) -> Self {
        let m = op.matrix().clone();
        let s = m.nrows();
        let bound = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Self::new(id, bound, move |n, np| {
            if n < s && np < s {
                m[(n, np)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Built-in generator by id: `identity`, `constant:re[,im]`,
    /// `diag:n_over_n_plus_1`, `inv_sum`, `sg_cos`.
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "identity" => Ok(Self::identity()),
            "diag:n_over_n_plus_1" => Ok(Self::n_over_n_plus_one()),
            "inv_sum" => Ok(Self::inverse_sum()),
            "sg_cos" => Ok(Self::sg_cos()),
            _ => {
                let Some(rest) = id.strip_prefix("constant:") else {
                    return Err(PhaseError::Parse(format!("unknown generator `{id}`")));
                };
                let parts: Vec<&str> = rest.split(',').collect();
                let num = |t: &str| {
                    t.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| PhaseError::Parse(format!("bad constant `{rest}`")))
                };
                let c = match parts.as_slice() {
                    [re] => Complex64::new(num(re)?, 0.0),
                    [re, im] => Complex64::new(num(re)?, num(im)?),
                    _ => return Err(PhaseError::Parse(format!("bad constant `{rest}`"))),
                };
                Ok(Self::constant(c))
            }
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    /// Evaluates the rule, rejecting non-finite output.
    pub fn eval(&self, n: usize, n_prime: usize) -> Result<Complex64> {
        let z = (self.rule)(n, n_prime);
        if z.re.is_finite() && z.im.is_finite() {
            Ok(z)
        } else {
            Err(PhaseError::GeneratorFailure {
                id: self.id.clone(),
                n,
                n_prime,
            })
        }
    }
}

/// Emulated dimension ν and the width of the macroscopic band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperfiniteModel {
    nu: FockDim,
    window: usize,
}

impl Default for HyperfiniteModel {
    fn default() -> Self {
        Self::new(DEFAULT_NU, DEFAULT_WINDOW).expect("valid defaults")
    }
}

impl HyperfiniteModel {
    /// Requires `ν ≥ 2^10` and `1 ≤ w ≤ ν/16`.
    pub fn new(nu: usize, window: usize) -> Result<Self> {
        if nu < MIN_NU {
            return Err(PhaseError::InvalidModel(format!("nu = {nu} is below {MIN_NU}")));
        }
        if window == 0 || window > nu / 16 {
            return Err(PhaseError::InvalidModel(format!("window {window} not in 1..={}", nu / 16)));
        }
        Ok(Self {
            nu: FockDim::new(nu)?,
            window,
        })
    }

    pub fn nu(&self) -> FockDim {
        self.nu
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// `ν−w..ν`
    pub fn band(&self) -> std::ops::Range<usize> {
        let nu = self.nu.get();
        nu - self.window..nu
    }

    pub fn in_band(&self, n: usize) -> bool {
        self.band().contains(&n)
    }
}

/// `P_D T P_D`, evaluated on demand.
#[derive(Debug, Clone)]
pub struct ExtendedOperator {
    generator: MatrixElementGenerator,
    model: HyperfiniteModel,
}

pub fn extend_to_d(generator: &MatrixElementGenerator, model: HyperfiniteModel) -> ExtendedOperator {
    ExtendedOperator {
        generator: generator.clone(),
        model,
    }
}

impl ExtendedOperator {
    pub fn model(&self) -> HyperfiniteModel {
        self.model
    }

    pub fn generator(&self) -> &MatrixElementGenerator {
        &self.generator
    }

    pub fn element(&self, n: usize, n_prime: usize) -> Result<Complex64> {
        let nu = self.model.nu.get();
        for index in [n, n_prime] {
            if index >= nu {
                return Err(PhaseError::IndexOutOfRange { index, dim: nu });
            }
        }
        self.generator.eval(n, n_prime)
    }

    /// Top-left `k×k` block.
    pub fn block(&self, k: usize) -> Result<DenseOperator> {
        let dim = FockDim::new(k)?;
        if k > self.model.nu.get() {
            return Err(PhaseError::DimensionMismatch {
                expected: self.model.nu.get(),
                found: k,
            });
        }
        let mut failure = None;
        let op = DenseOperator::from_fn(dim, |n, np| match self.generator.eval(n, np) {
            Ok(z) => z,
            Err(e) => {
                failure.get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        });
        match failure {
            Some(e) => Err(e),
            None => op,
        }
    }

    /// `max_n |⟨n|T_D|n⟩|` over all ν diagonal entries.
    pub fn diagonal_sup(&self) -> Result<f64> {
        (0..self.model.nu.get())
            .into_par_iter()
            .map(|n| self.generator.eval(n, n).map(|z| z.norm()))
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
    }
}

/// Compression `P_H T_D P_H` to the first `k` number states.
pub fn compress_to_h(extended: &ExtendedOperator, k: usize) -> Result<DenseOperator> {
    extended.block(k)
}

/// `⟨k|T_D|k'⟩` at emulated macroscopic indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroscopicElement {
    pub value: Complex64,
    /// False when either index lies outside the band; the value is still
    /// returned but does not represent a macroscopic element.
    pub in_band: bool,
}

pub fn macroscopic_matrix_element(
    generator: &MatrixElementGenerator,
    model: HyperfiniteModel,
    k: usize,
    k_prime: usize,
) -> Result<MacroscopicElement> {
    let value = extend_to_d(generator, model).element(k, k_prime)?;
    Ok(MacroscopicElement {
        value,
        in_band: model.in_band(k) && model.in_band(k_prime),
    })
}

/// Index pairs sampled for the Cauchy diagnostic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSet {
    pairs: Vec<(usize, usize)>,
}

const OFFSETS: [i64; 8] = [1, -1, 3, -3, 17, -17, 255, -255];

fn spread(floor: usize, top: usize, count: usize) -> Vec<usize> {
    (0..count)
        .map(|i| floor + (top - floor) * i / (count - 1))
        .collect()
}

impl ProbeSet {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(PhaseError::Validation("empty probe set".into()));
        }
        Ok(Self { pairs })
    }

    /// 16 diagonal pairs spread over `[floor, ν)` and 16 off-diagonal
    /// pairs at offsets ±1, ±3, ±17, ±255.
    pub fn mixed(model: HyperfiniteModel, floor: usize) -> Result<Self> {
        let top = Self::check_floor(model, floor)?;
        let rows = spread(floor, top, 16);
        let mut pairs: Vec<(usize, usize)> = rows.iter().map(|&n| (n, n)).collect();
        for (i, &n) in rows.iter().enumerate() {
            let off = OFFSETS[i % OFFSETS.len()];
            let mut np = n as i64 + off;
            if np < floor as i64 || np > top as i64 {
                np = n as i64 - off;
            }
            pairs.push((n, np as usize));
        }
        Ok(Self { pairs })
    }

    /// 32 diagonal pairs spread over `[floor, ν)`.
    pub fn diagonal(model: HyperfiniteModel, floor: usize) -> Result<Self> {
        let top = Self::check_floor(model, floor)?;
        Ok(Self {
            pairs: spread(floor, top, 32).into_iter().map(|n| (n, n)).collect(),
        })
    }

    /// Diagonal probes for diagonal-only generators, mixed otherwise.
    pub fn default_for(generator: &MatrixElementGenerator, model: HyperfiniteModel) -> Result<Self> {
        let floor = DEFAULT_PROBE_FLOOR.min(model.nu.get() / 2);
        if generator.is_diagonal() {
            Self::diagonal(model, floor)
        } else {
            Self::mixed(model, floor)
        }
    }

    fn check_floor(model: HyperfiniteModel, floor: usize) -> Result<usize> {
        let top = model.nu.get() - 1;
        if floor + 2 * 255 > top {
            return Err(PhaseError::InvalidModel(format!(
                "probe floor {floor} leaves no room below nu = {}",
                model.nu.get()
            )));
        }
        Ok(top)
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitEstimate {
    /// Mean over the probes.
    pub value: Complex64,
    /// Largest pairwise distance between probe values.
    pub residual: f64,
    pub cauchy: bool,
}

/// Probe values and the resulting estimate.
pub fn cauchy_probe_values(
    extended: &ExtendedOperator,
    probes: &ProbeSet,
) -> Result<Vec<Complex64>> {
    probes
        .pairs
        .par_iter()
        .map(|&(n, np)| extended.element(n, np))
        .collect()
}

pub fn cauchy_limit_estimate(extended: &ExtendedOperator, probes: &ProbeSet, tol: f64) -> Result<LimitEstimate> {
    let values = cauchy_probe_values(extended, probes)?;
    Ok(estimate_from_values(&values, tol))
}

fn estimate_from_values(values: &[Complex64], tol: f64) -> LimitEstimate {
    let value = values.iter().sum::<Complex64>() / values.len() as f64;
    let mut residual = 0.0f64;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            residual = residual.max((a - b).norm());
        }
    }
    LimitEstimate {
        value,
        residual,
        cauchy: residual <= tol,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub n: usize,
    #[serde(rename = "n'")]
    pub n_prime: usize,
    pub value: [f64; 2],
}

/// Serialized classical-limit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub generator_id: String,
    pub nu: usize,
    pub band: [usize; 2],
    pub probes: Vec<ProbeRecord>,
    pub limit: [f64; 2],
    pub residual: f64,
    pub cauchy_verdict: bool,
}

pub fn limit_report(generator: &MatrixElementGenerator, model: HyperfiniteModel, probes: &ProbeSet, tol: f64) -> Result<LimitReport> {
    let extended = extend_to_d(generator, model);
    let values = cauchy_probe_values(&extended, probes)?;
    let est = estimate_from_values(&values, tol);
    let band = model.band();
    Ok(LimitReport {
        generator_id: generator.id().to_string(),
        nu: model.nu.get(),
        band: [band.start, band.end - 1],
        probes: probes
            .pairs
            .iter()
            .zip(&values)
            .map(|(&(n, n_prime), z)| ProbeRecord { n, n_prime, value: [z.re, z.im] })
            .collect(),
        limit: [est.value.re, est.value.im],
        residual: est.residual,
        cauchy_verdict: est.cauchy,
    })
}

/// `f(φ_ν) ψ` through the phase basis.
pub fn apply_phase_function_at(model: HyperfiniteModel, f: &PhaseFunction, psi: &StateVector) -> Result<StateVector> {
    if psi.dim() != model.nu {
        return Err(PhaseError::DimensionMismatch {
            expected: model.nu.get(),
            found: psi.dim().get(),
        });
    }
    apply_phase_function(psi, &f.grid_values(model.nu))
}

/// `‖φ_ν|θ_m⟩ − θ_m|θ_m⟩‖` via the fast path.
pub fn macroscopic_phase_eigencheck(model: HyperfiniteModel, m: usize) -> Result<f64> {
    let state = pb_phase_state(model.nu, m)?;
    let image = apply_phase_function_at(model, &PhaseFunction::Theta, state.state())?;
    let theta = state.angle();
    Ok(image
        .amplitudes()
        .iter()
        .zip(state.state().amplitudes())
        .map(|(a, b)| (a - b * theta).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Largest gap between consecutive eigenvalues `θ_m`, including the wrap
/// from `θ_{ν−1}` to 2π.
pub fn phase_spectrum_max_gap(model: HyperfiniteModel) -> f64 {
    let grid = PhaseGrid::new(model.nu);
    let mut prev = 0.0;
    let mut gap = 0.0f64;
    for t in grid.points().skip(1).chain(std::iter::once(TAU)) {
        gap = gap.max(t - prev);
        prev = t;
    }
    gap
}

/// `|⟨θ_m|θ_{m'}⟩|` at dimension ν.
pub fn phase_state_overlap(model: HyperfiniteModel, m: usize, m_prime: usize) -> Result<f64> {
    let a = pb_phase_state(model.nu, m)?;
    let b = pb_phase_state(model.nu, m_prime)?;
    Ok(a.state().inner(b.state())?.norm())
}

/// `(|0⟩ + |ν−1⟩)/√2`
pub fn superposition_state(model: HyperfiniteModel) -> StateVector {
    let nu = model.nu.get();
    let mut amps = vec![Complex64::new(0.0, 0.0); nu];
    let r = std::f64::consts::FRAC_1_SQRT_2;
    amps[0] = Complex64::new(r, 0.0);
    amps[nu - 1] = Complex64::new(r, 0.0);
    StateVector::from_amplitudes(amps).expect("finite amplitudes")
}

/// Phase distribution of `(|0⟩ + |ν−1⟩)/√2` on `intervals + 1` points.
/// `intervals ≥ ν` resolves the density oscillation.
pub fn superposition_demo(model: HyperfiniteModel, intervals: usize) -> Result<DistributionResult> {
    if intervals < model.nu.get() {
        return Err(PhaseError::Validation(format!(
            "{intervals} intervals under-resolve period 2π/{}",
            model.nu.get() - 1
        )));
    }
    let psi = superposition_state(model);
    distribution(&phase_pom(model.nu), &psi, intervals)
}
