//! Dense complex matrices over the truncated number basis.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{PhaseError, Result};
use crate::fock_core::{FockDim, StateVector};

/// An s×s complex matrix in the number basis, `entry(n, n') = ⟨n|T|n'⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    dim: FockDim,
    entries: DMatrix<Complex64>,
    hermitian: bool,
}

impl DenseOperator {
    pub fn zeros(dim: FockDim) -> Self {
        let s = dim.get();
        Self {
            dim,
            entries: DMatrix::zeros(s, s),
            hermitian: true,
        }
    }

    pub fn identity(dim: FockDim) -> Self {
        let s = dim.get();
        Self {
            dim,
            entries: DMatrix::identity(s, s),
            hermitian: true,
        }
    }

    /// Builds an operator from `f(n, n')`. Rejects non-finite entries.
    pub fn from_fn<F>(dim: FockDim, f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Complex64,
    {
        let s = dim.get();
        let entries = DMatrix::from_fn(s, s, f);
        Self::from_matrix(entries)
    }

    pub fn from_matrix(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(PhaseError::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        if let Some(bad) = entries.iter().find(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(PhaseError::NonFinite(format!("matrix entry {bad}")));
        }
        let dim = FockDim::new(entries.nrows())?;
        Ok(Self {
            dim,
            entries,
            hermitian: false,
        })
    }

    /// Wraps a square matrix already known to be finite.
    pub(crate) fn from_finite_matrix(entries: DMatrix<Complex64>, hermitian: bool) -> Self {
        debug_assert_eq!(entries.nrows(), entries.ncols());
        let dim = FockDim::new(entries.nrows()).expect("dimension at least 2");
        Self {
            dim,
            entries,
            hermitian,
        }
    }

    /// Diagonal operator with the given entries.
    pub fn diagonal(values: &[Complex64]) -> Result<Self> {
        let dim = FockDim::new(values.len())?;
        let mut op = Self::zeros(dim);
        for (n, v) in values.iter().enumerate() {
            op.entries[(n, n)] = *v;
        }
        op.hermitian = values.iter().all(|v| v.im == 0.0);
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(PhaseError::NonFinite("diagonal entry".into()));
        }
        Ok(op)
    }

    /// Marks the operator Hermitian after checking conjugate symmetry.
    pub fn into_hermitian(mut self, tol: f64) -> Result<Self> {
        let resid = self.hermiticity_residual();
        if resid > tol {
            return Err(PhaseError::Validation(format!(
                "operator is not Hermitian (residual {resid:e})"
            )));
        }
        self.hermitian = true;
        Ok(self)
    }

    pub(crate) fn with_hermitian_flag(mut self, flag: bool) -> Self {
        self.hermitian = flag;
        self
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    #[inline]
    pub fn get(&self, n: usize, n_prime: usize) -> Complex64 {
        self.entries[(n, n_prime)]
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim)?;
        Ok(Self {
            dim: self.dim,
            entries: &self.entries * &other.entries,
            hermitian: false,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim)?;
        Ok(Self {
            dim: self.dim,
            entries: &self.entries + &other.entries,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim)?;
        Ok(Self {
            dim: self.dim,
            entries: &self.entries - &other.entries,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            dim: self.dim,
            entries: &self.entries * factor,
            hermitian: self.hermitian && factor.im == 0.0,
        }
    }

    /// T·ψ
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        self.check_dim(psi.dim())?;
        let s = self.dim.get();
        let amps = psi.amplitudes();
        let out = (0..s)
            .map(|n| (0..s).map(|k| self.entries[(n, k)] * amps[k]).sum())
            .collect();
        StateVector::from_amplitudes(out)
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_dim(other.dim)?;
        Ok(self
            .entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let s = self.dim.get();
        let mut worst = 0.0f64;
        for r in 0..s {
            for c in r..s {
                worst = worst.max((self.entries[(r, c)] - self.entries[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Ascending eigenvalues of the Hermitian part `(T + T†)/2`.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.entries + self.entries.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.hermitian_eigenvalues()
            .first()
            .copied()
            .unwrap_or(f64::NAN)
    }

    /// Top-left `k×k` block, copied verbatim.
    pub fn leading_block(&self, k: usize) -> Result<Self> {
        let dim = FockDim::new(k)?;
        if k > self.dim.get() {
            return Err(PhaseError::DimensionMismatch {
                expected: self.dim.get(),
                found: k,
            });
        }
        Ok(Self {
            dim,
            entries: self.entries.view((0, 0), (k, k)).into_owned(),
            hermitian: self.hermitian,
        })
    }

    fn check_dim(&self, other: FockDim) -> Result<()> {
        if self.dim != other {
            return Err(PhaseError::DimensionMismatch {
                expected: self.dim.get(),
                found: other.get(),
            });
        }
        Ok(())
    }
}
