//! Truncated Fock space: dimensions, state vectors and the elementary
//! number-basis operators.
//!
//! Truncation convention: the lowering operator loses the coupling out of
//! |s−1⟩, so identities such as `N = a†a` and `[N, a] = −a` hold exactly on
//! the interior block `n, n' ≤ s−2` only.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PhaseError, Result};
use crate::operator::DenseOperator;

/// Tolerance used when a caller asks whether a state is normalized.
pub const NORM_TOL: f64 = 1e-10;

/// Units. The single-mode Hamiltonian is `ħω(N + ½)`; it shifts every
/// phase statistic by nothing and is not materialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConvention;

impl PhysicalConvention {
    pub const HBAR: f64 = 1.0;
    pub const OMEGA: f64 = 1.0;
}

/// Number of retained number states, `s ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FockDim(usize);

impl FockDim {
    pub fn new(s: usize) -> Result<Self> {
        if s < 2 {
            return Err(PhaseError::InvalidDimension(s));
        }
        Ok(Self(s))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for FockDim {
    type Error = PhaseError;
    fn try_from(s: usize) -> Result<Self> {
        Self::new(s)
    }
}

impl From<FockDim> for usize {
    fn from(d: FockDim) -> usize {
        d.0
    }
}

impl fmt::Display for FockDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Amplitudes `c_0..c_{s−1}` in the number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    dim: FockDim,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let dim = FockDim::new(amps.len())?;
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(PhaseError::NonFinite("state amplitude".into()));
        }
        Ok(Self { dim, amps })
    }

    /// Scales to unit norm. The zero vector is rejected.
    pub fn normalized(mut self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if n2 == 0.0 {
            return Err(PhaseError::ZeroState);
        }
        let inv = n2.sqrt().recip();
        self.amps.iter_mut().for_each(|z| *z *= inv);
        Ok(self)
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    /// Errors unless the state is zero-free and normalized within `NORM_TOL`.
    pub fn require_normalized(&self) -> Result<()> {
        let n2 = self.norm_sqr();
        if n2 == 0.0 {
            return Err(PhaseError::ZeroState);
        }
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(PhaseError::NotNormalized(n2));
        }
        Ok(())
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.dim != other.dim {
            return Err(PhaseError::DimensionMismatch {
                expected: self.dim.get(),
                found: other.dim.get(),
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Indices with non-zero amplitude, paired with the amplitude.
    pub fn support(&self) -> Vec<(usize, Complex64)> {
        self.amps
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm_sqr() > 0.0)
            .map(|(n, z)| (n, *z))
            .collect()
    }

    /// Parses a state file: one amplitude per line as `re im`, index order.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut amps = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (re, im) = match (fields.next(), fields.next(), fields.next()) {
                (Some(re), Some(im), None) => (re, im),
                _ => {
                    return Err(PhaseError::Parse(format!(
                        "line {}: expected `re im`",
                        lineno + 1
                    )))
                }
            };
            let parse = |v: &str| {
                v.parse::<f64>()
                    .map_err(|e| PhaseError::Parse(format!("line {}: {e}", lineno + 1)))
            };
            amps.push(Complex64::new(parse(re)?, parse(im)?));
        }
        Self::from_amplitudes(amps)
    }

    /// Inverse of [`StateVector::parse_text`] at 17 significant digits.
    pub fn to_text(&self) -> String {
        self.amps
            .iter()
            .map(|z| format!("{:.16e} {:.16e}\n", z.re, z.im))
            .collect()
    }
}

/// Diagonal `N` with entries `0, 1, …, s−1`.
pub fn number_operator(dim: FockDim) -> DenseOperator {
    let diag: Vec<Complex64> = (0..dim.get()).map(|n| Complex64::new(n as f64, 0.0)).collect();
    DenseOperator::diagonal(&diag).expect("finite diagonal")
}

/// Truncated lowering operator: `⟨n|a|n+1⟩ = √(n+1)`.
pub fn annihilation(dim: FockDim) -> DenseOperator {
    DenseOperator::from_fn(dim, |n, np| {
        if np == n + 1 {
            Complex64::new((np as f64).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
    .expect("finite entries")
}

pub fn creation(dim: FockDim) -> DenseOperator {
    annihilation(dim).adjoint()
}

/// `e^{iθN}`, diagonal with entries `e^{inθ}`.
pub fn phase_shift_unitary(dim: FockDim, theta: f64) -> Result<DenseOperator> {
    if !theta.is_finite() {
        return Err(PhaseError::NonFinite(format!("phase shift {theta}")));
    }
    let diag: Vec<Complex64> = (0..dim.get())
        .map(|n| Complex64::from_polar(1.0, n as f64 * theta))
        .collect();
    Ok(DenseOperator::diagonal(&diag)?.with_hermitian_flag(false))
}

pub fn number_state(dim: FockDim, n: usize) -> Result<StateVector> {
    if n >= dim.get() {
        return Err(PhaseError::IndexOutOfRange { index: n, dim: dim.get() });
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); dim.get()];
    amps[n] = Complex64::new(1.0, 0.0);
    StateVector::from_amplitudes(amps)
}

/// Truncated coherent state, renormalized.
pub fn coherent_state(dim: FockDim, alpha: Complex64) -> Result<StateVector> {
    coherent_state_with_residual(dim, alpha).map(|(psi, _)| psi)
}

/// Truncated coherent state together with the probability weight
/// `1 − Σ_{n<s} |c_n|²` discarded by the truncation.
pub fn coherent_state_with_residual(dim: FockDim, alpha: Complex64) -> Result<(StateVector, f64)> {
    if !alpha.re.is_finite() || !alpha.im.is_finite() {
        return Err(PhaseError::NonFinite(format!("coherent amplitude {alpha}")));
    }
    let s = dim.get();
    let mut amps = Vec::with_capacity(s);
    let mut c = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    amps.push(c);
    for n in 1..s {
        c = c * alpha / (n as f64).sqrt();
        amps.push(c);
    }
    let kept: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
    let residual = (1.0 - kept).max(0.0);
    let psi = StateVector::from_amplitudes(amps)?.normalized()?;
    Ok((psi, residual))
}

/// Equal-weight superposition of `|0⟩..|k−1⟩`.
pub fn uniform_state(dim: FockDim, k: usize) -> Result<StateVector> {
    if k == 0 || k > dim.get() {
        return Err(PhaseError::IndexOutOfRange { index: k, dim: dim.get() });
    }
    let w = (k as f64).sqrt().recip();
    let amps = (0..dim.get())
        .map(|n| Complex64::new(if n < k { w } else { 0.0 }, 0.0))
        .collect();
    StateVector::from_amplitudes(amps)
}

/// ⟨ψ|T|ψ⟩
pub fn expectation(psi: &StateVector, op: &DenseOperator) -> Result<Complex64> {
    let t_psi = op.apply(psi)?;
    psi.inner(&t_psi)
}
