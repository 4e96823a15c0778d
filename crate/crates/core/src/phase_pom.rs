//! Covariant phase measurements.
//!
//! A covariant POM on the truncated space is fixed by a kernel `h` through
//!
//! ```text
//! ⟨n|dP(θ)|n'⟩ = h_{nn'} e^{i(n−n')θ} dθ/2π
//! ```
//!
//! The canonical phase POM has `h ≡ 1`. Statistics follow the Born rule
//! `⟨ψ|P(θ)|ψ⟩ = Σ c̄_n c_{n'} h_{nn'} ∫_0^θ e^{i(n−n')u} du/2π`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PhaseError, Result};
use crate::fock_core::{FockDim, StateVector};
use crate::operator::DenseOperator;
use crate::phase_ops::{spectral_family_element, PhaseGrid};

/// Minimum-eigenvalue tolerance for every positivity check in this module.
pub const PSD_TOL: f64 = -1e-10;

/// Trapezoid nodes used for Fourier coefficients of closure-defined functions.
pub const DEFAULT_QUADRATURE_NODES: usize = 8192;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// A function of the phase on `[0, 2π]`.
#[derive(Clone)]
pub enum PhaseFunction {
    One,
    Theta,
    ThetaSquared,
    /// `e^{ijθ}`
    ExpI(i64),
    Cos,
    Sin,
    /// Indicator of `[start, end)`, `0 ≤ start ≤ end ≤ 2π`.
    Indicator { start: f64, end: f64 },
    /// Trigonometric polynomial `Σ_j a_j e^{ijθ}` given as `(j, a_j)`.
    Fourier(Vec<(i64, Complex64)>),
    /// Arbitrary function; Fourier coefficients by composite trapezoid.
    Custom {
        f: Arc<dyn Fn(f64) -> Complex64 + Send + Sync>,
        nodes: usize,
    },
}

impl fmt::Debug for PhaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::One => write!(f, "One"),
            Self::Theta => write!(f, "Theta"),
            Self::ThetaSquared => write!(f, "ThetaSquared"),
            Self::ExpI(j) => write!(f, "ExpI({j})"),
            Self::Cos => write!(f, "Cos"),
            Self::Sin => write!(f, "Sin"),
            Self::Indicator { start, end } => write!(f, "Indicator[{start}, {end})"),
            Self::Fourier(t) => write!(f, "Fourier({} terms)", t.len()),
            Self::Custom { nodes, .. } => write!(f, "Custom({nodes} nodes)"),
        }
    }
}

impl PhaseFunction {
    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(f64) -> Complex64 + Send + Sync + 'static,
    {
        Self::Custom {
            f: Arc::new(f),
            nodes: DEFAULT_QUADRATURE_NODES,
        }
    }

    pub fn indicator(start: f64, end: f64) -> Result<Self> {
        if !(0.0..=TAU).contains(&start) || !(0.0..=TAU).contains(&end) || start > end {
            return Err(PhaseError::AngleOutOfRange(if start > end { end } else { start }));
        }
        Ok(Self::Indicator { start, end })
    }

    pub fn eval(&self, theta: f64) -> Complex64 {
        match self {
            Self::One => Complex64::new(1.0, 0.0),
            Self::Theta => Complex64::new(theta, 0.0),
            Self::ThetaSquared => Complex64::new(theta * theta, 0.0),
            Self::ExpI(j) => Complex64::from_polar(1.0, *j as f64 * theta),
            Self::Cos => Complex64::new(theta.cos(), 0.0),
            Self::Sin => Complex64::new(theta.sin(), 0.0),
            Self::Indicator { start, end } => {
                Complex64::new(if theta >= *start && theta < *end { 1.0 } else { 0.0 }, 0.0)
            }
            Self::Fourier(terms) => terms
                .iter()
                .map(|(j, a)| a * Complex64::from_polar(1.0, *j as f64 * theta))
                .sum(),
            Self::Custom { f, .. } => f(theta),
        }
    }

    pub fn is_real(&self) -> bool {
        match self {
            Self::ExpI(j) => *j == 0,
            Self::Fourier(terms) => {
                // real iff a_{-j} = conj(a_j)
                let coeff = |j: i64| -> Complex64 {
                    terms.iter().filter(|(k, _)| *k == j).map(|(_, a)| *a).sum()
                };
                terms.iter().all(|(j, _)| (coeff(-*j) - coeff(*j).conj()).norm() < 1e-15)
            }
            Self::Custom { .. } => false,
            _ => true,
        }
    }

    /// `c_f(k) = (1/2π) ∫_0^{2π} e^{ikθ} f(θ) dθ`.
    pub fn fourier_coefficient(&self, k: i64) -> Complex64 {
        let kf = k as f64;
        match self {
            Self::One => {
                if k == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    ZERO
                }
            }
            Self::Theta => {
                if k == 0 {
                    Complex64::new(PI, 0.0)
                } else {
                    Complex64::new(0.0, -1.0 / kf)
                }
            }
            Self::ThetaSquared => {
                if k == 0 {
                    Complex64::new(4.0 * PI * PI / 3.0, 0.0)
                } else {
                    Complex64::new(2.0 / (kf * kf), -TAU / kf)
                }
            }
            Self::ExpI(j) => {
                if k == -*j {
                    Complex64::new(1.0, 0.0)
                } else {
                    ZERO
                }
            }
            Self::Cos => {
                if k.abs() == 1 {
                    Complex64::new(0.5, 0.0)
                } else {
                    ZERO
                }
            }
            Self::Sin => match k {
                -1 => Complex64::new(0.0, -0.5),
                1 => Complex64::new(0.0, 0.5),
                _ => ZERO,
            },
            Self::Indicator { start, end } => interval_coefficient(*start, *end, k),
            Self::Fourier(terms) => terms.iter().filter(|(j, _)| *j == -k).map(|(_, a)| *a).sum(),
            Self::Custom { f, nodes } => {
                let m = (*nodes).max(2);
                let h = TAU / m as f64;
                let g = |t: f64| f(t) * Complex64::from_polar(1.0, kf * t);
                let interior: Complex64 = (1..m).map(|j| g(h * j as f64)).sum();
                (interior + (g(0.0) + g(TAU)) * 0.5) * h / TAU
            }
        }
    }

    /// Values on the phase grid of `dim`.
    pub fn grid_values(&self, dim: FockDim) -> Vec<Complex64> {
        PhaseGrid::new(dim).sample(|t| self.eval(t))
    }
}

/// `∫_a^b e^{iku} du / 2π`
pub fn interval_coefficient(start: f64, end: f64, k: i64) -> Complex64 {
    if k == 0 {
        return Complex64::new((end - start) / TAU, 0.0);
    }
    let kf = k as f64;
    (Complex64::from_polar(1.0, kf * end) - Complex64::from_polar(1.0, kf * start)) / (I * TAU * kf)
}

/// `I_k(θ) = ∫_0^θ e^{iku} du / 2π`
#[inline]
pub fn cumulative_coefficient(theta: f64, k: i64) -> Complex64 {
    interval_coefficient(0.0, theta, k)
}

#[derive(Debug, Clone, PartialEq)]
enum KernelRepr {
    AllOnes,
    /// `h_{nn'} = e^{i(β_n − β_{n'})}`
    RankOne(Vec<f64>),
    Dense(DenseOperator),
}

/// Kernel `h` of a covariant POM. Structured kernels are stored without an
/// s×s allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct POMKernel {
    dim: FockDim,
    repr: KernelRepr,
}

impl POMKernel {
    /// Validated dense kernel.
    pub fn new(h: DenseOperator) -> Result<Self> {
        let kernel = Self::unchecked(h);
        let violations = kernel.validate();
        if !violations.is_empty() {
            return Err(PhaseError::InvalidKernel(violations.join("; ")));
        }
        Ok(kernel)
    }

    /// Dense kernel accepted as-is; [`POMKernel::validate`] lists problems.
    pub fn unchecked(h: DenseOperator) -> Self {
        Self {
            dim: h.dim(),
            repr: KernelRepr::Dense(h),
        }
    }

    /// Rank-one kernel `e^{i(β_n − β_{n'})}`.
    pub fn from_phases(phases: Vec<f64>) -> Result<Self> {
        let dim = FockDim::new(phases.len())?;
        if phases.iter().any(|b| !b.is_finite()) {
            return Err(PhaseError::NonFinite("kernel phase".into()));
        }
        Ok(Self {
            dim,
            repr: KernelRepr::RankOne(phases),
        })
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    /// The phases of a rank-one kernel, when it is stored as one.
    pub fn phases(&self) -> Option<&[f64]> {
        match &self.repr {
            KernelRepr::AllOnes => None,
            KernelRepr::RankOne(b) => Some(b),
            KernelRepr::Dense(_) => None,
        }
    }

    #[inline]
    pub fn entry(&self, n: usize, n_prime: usize) -> Complex64 {
        match &self.repr {
            KernelRepr::AllOnes => Complex64::new(1.0, 0.0),
            KernelRepr::RankOne(b) => Complex64::from_polar(1.0, b[n] - b[n_prime]),
            KernelRepr::Dense(h) => h.get(n, n_prime),
        }
    }

    pub fn to_dense(&self) -> DenseOperator {
        match &self.repr {
            KernelRepr::Dense(h) => h.clone(),
            _ => DenseOperator::from_fn(self.dim, |n, np| self.entry(n, np))
                .expect("finite kernel")
                .with_hermitian_flag(true),
        }
    }

    /// Hermiticity, unit diagonal and positivity violations.
    pub fn validate(&self) -> Vec<String> {
        let h = match &self.repr {
            KernelRepr::Dense(h) => h,
            _ => return Vec::new(),
        };
        let mut out = Vec::new();
        let herm = h.hermiticity_residual();
        if herm > 1e-12 {
            out.push(format!("kernel not Hermitian (residual {herm:e})"));
        }
        for n in 0..self.dim.get() {
            let d = h.get(n, n);
            if (d - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
                out.push(format!("diagonal h[{n}][{n}] = {d} is not 1"));
            }
        }
        let min_ev = h.min_eigenvalue();
        if min_ev.is_nan() || min_ev < PSD_TOL {
            out.push(format!("kernel not positive semidefinite (min eigenvalue {min_ev:e})"));
        }
        out
    }

    fn check_state(&self, psi: &StateVector) -> Result<()> {
        if psi.dim() != self.dim {
            return Err(PhaseError::DimensionMismatch {
                expected: self.dim.get(),
                found: psi.dim().get(),
            });
        }
        psi.require_normalized()
    }
}

/// The canonical phase POM, `h ≡ 1`.
pub fn phase_pom(dim: FockDim) -> POMKernel {
    POMKernel {
        dim,
        repr: KernelRepr::AllOnes,
    }
}

fn check_angle(theta: f64) -> Result<()> {
    if !(0.0..=TAU).contains(&theta) {
        return Err(PhaseError::AngleOutOfRange(theta));
    }
    Ok(())
}

/// `Σ_{n,n'} c̄_n c_{n'} h_{nn'} g(n − n')` over the support of ψ.
fn kernel_quadratic_form<G>(pom: &POMKernel, psi: &StateVector, g: G) -> Complex64
where
    G: Fn(i64) -> Complex64,
{
    let support = psi.support();
    let mut acc = ZERO;
    for &(n, cn) in &support {
        for &(np, cnp) in &support {
            acc += cn.conj() * cnp * pom.entry(n, np) * g(n as i64 - np as i64);
        }
    }
    acc
}

/// `Pr[φ ≤ θ | ψ] = ⟨ψ|P(θ)|ψ⟩`, evaluated analytically.
pub fn pom_cdf(pom: &POMKernel, psi: &StateVector, theta: f64) -> Result<f64> {
    pom.check_state(psi)?;
    check_angle(theta)?;
    Ok(kernel_quadratic_form(pom, psi, |k| cumulative_coefficient(theta, k)).re)
}

/// Phase density (per radian) at θ.
pub fn pom_density(pom: &POMKernel, psi: &StateVector, theta: f64) -> Result<f64> {
    pom.check_state(psi)?;
    check_angle(theta)?;
    Ok(density_unchecked(pom, psi, theta))
}

pub(crate) fn density_unchecked(pom: &POMKernel, psi: &StateVector, theta: f64) -> f64 {
    kernel_quadratic_form(pom, psi, |k| Complex64::from_polar(1.0, k as f64 * theta)).re / TAU
}

/// `f̂ = ∫ f(θ) dP(θ)`: `⟨n|f̂|n'⟩ = h_{nn'} c_f(n − n')`.
pub fn moment_operator(pom: &POMKernel, f: &PhaseFunction) -> DenseOperator {
    let s = pom.dim.get() as i64;
    let coeffs: Vec<Complex64> = (-(s - 1)..s).map(|k| f.fourier_coefficient(k)).collect();
    let op = DenseOperator::from_fn(pom.dim, |n, np| {
        pom.entry(n, np) * coeffs[(n as i64 - np as i64 + s - 1) as usize]
    })
    .expect("finite moment operator");
    let hermitian = f.is_real() && op.hermiticity_residual() <= 1e-12;
    op.with_hermitian_flag(hermitian)
}

/// Phase statistics tabulated on `θ_j = 2πj/M`, `j = 0..=M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionResult {
    pub theta: Vec<f64>,
    pub cdf: Vec<f64>,
    pub density: Vec<f64>,
}

impl DistributionResult {
    /// CDF monotonicity, endpoint values, density sign and normalization.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.cdf.windows(2).any(|w| w[1] < w[0] - 1e-12) {
            out.push("cdf is not monotone".to_string());
        }
        if let (Some(first), Some(last)) = (self.cdf.first(), self.cdf.last()) {
            if first.abs() > 1e-10 {
                out.push(format!("cdf(0) = {first}"));
            }
            if (last - 1.0).abs() > 1e-10 {
                out.push(format!("cdf(2π) = {last}"));
            }
        }
        if let Some(min) = self.density.iter().copied().reduce(f64::min) {
            if min < -1e-12 {
                out.push(format!("negative density {min:e}"));
            }
        }
        let total = self.density_integral();
        if (total - 1.0).abs() > 1e-8 {
            out.push(format!("density integrates to {total}"));
        }
        out
    }

    /// Periodic trapezoid over the grid (the last point duplicates θ = 0).
    pub fn density_integral(&self) -> f64 {
        let m = self.theta.len().saturating_sub(1);
        if m == 0 {
            return 0.0;
        }
        let h = TAU / m as f64;
        self.density[..m].iter().sum::<f64>() * h
    }

    /// `theta,cdf,density` with 17 significant digits, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,cdf,density\n");
        for ((t, c), d) in self.theta.iter().zip(&self.cdf).zip(&self.density) {
            out.push_str(&format!("{t:.16e},{c:.16e},{d:.16e}\n"));
        }
        out
    }
}

/// Tabulates CDF and density of ψ under `pom` on an `M`-interval grid.
pub fn distribution(pom: &POMKernel, psi: &StateVector, intervals: usize) -> Result<DistributionResult> {
    pom.check_state(psi)?;
    if intervals == 0 {
        return Err(PhaseError::Validation("grid needs at least one interval".into()));
    }
    let theta: Vec<f64> = (0..=intervals)
        .map(|j| if j == intervals { TAU } else { TAU * j as f64 / intervals as f64 })
        .collect();
    let cdf = theta
        .iter()
        .map(|&t| kernel_quadratic_form(pom, psi, |k| cumulative_coefficient(t, k)).re)
        .collect();
    let density = theta.iter().map(|&t| density_unchecked(pom, psi, t)).collect();
    Ok(DistributionResult { theta, cdf, density })
}

/// Outcome of [`verify_pom_axioms`].
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub kernel_violations: Vec<String>,
    /// Smallest eigenvalue over all increments `P(θ_{j+1}) − P(θ_j)`.
    pub min_increment_eigenvalue: f64,
    /// `max |P(0)|`
    pub start_residual: f64,
    /// `max |P(2π) − 1|`
    pub end_residual: f64,
    /// `(k, max_θ max|P(θ + 1/k) − P(θ)|)`. A finite surrogate for strong
    /// right-continuity, not the exact condition.
    pub right_continuity: Vec<(usize, f64)>,
    pub violations: Vec<String>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn cumulative_operator(pom: &POMKernel, theta: f64) -> DenseOperator {
    let s = pom.dim.get() as i64;
    let coeffs: Vec<Complex64> = (-(s - 1)..s).map(|k| cumulative_coefficient(theta, k)).collect();
    DenseOperator::from_fn(pom.dim, |n, np| {
        pom.entry(n, np) * coeffs[(n as i64 - np as i64 + s - 1) as usize]
    })
    .expect("finite")
}

/// Checks the POM conditions on a grid of angles in `[0, 2π]`.
pub fn verify_pom_axioms(pom: &POMKernel, grid: &[f64]) -> Result<AxiomReport> {
    for &t in grid {
        check_angle(t)?;
    }
    let mut thetas: Vec<f64> = grid.to_vec();
    thetas.extend([0.0, TAU]);
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();

    let kernel_violations = pom.validate();
    let mut violations = kernel_violations.clone();
    let ops: Vec<DenseOperator> = thetas.iter().map(|&t| cumulative_operator(pom, t)).collect();

    let mut min_increment_eigenvalue = f64::INFINITY;
    for (w, t) in ops.windows(2).zip(thetas.windows(2)) {
        let ev = w[1].sub(&w[0])?.min_eigenvalue();
        if ev < PSD_TOL {
            violations.push(format!("increment on [{}, {}] has eigenvalue {ev:e}", t[0], t[1]));
        }
        min_increment_eigenvalue = min_increment_eigenvalue.min(ev);
    }

    let zero = DenseOperator::zeros(pom.dim);
    let start_residual = ops[0].max_abs_diff(&zero)?;
    if start_residual > 1e-10 {
        violations.push(format!("P(0) ≠ 0 (residual {start_residual:e})"));
    }
    let end_residual = ops[ops.len() - 1].max_abs_diff(&DenseOperator::identity(pom.dim))?;
    if end_residual > 1e-10 {
        violations.push(format!("P(2π) ≠ 1 (residual {end_residual:e})"));
    }

    let mut right_continuity = Vec::new();
    for k in [10usize, 100, 1000, 10_000] {
        let eps = 1.0 / k as f64;
        let mut worst = 0.0f64;
        for (op, &t) in ops.iter().zip(&thetas) {
            let shifted = cumulative_operator(pom, (t + eps).min(TAU));
            worst = worst.max(shifted.max_abs_diff(op)?);
        }
        right_continuity.push((k, worst));
    }
    if right_continuity.windows(2).any(|w| w[1].1 > w[0].1 + 1e-15)
        || right_continuity.last().is_some_and(|(_, r)| *r > 1e-3)
    {
        violations.push("right-continuity surrogate does not settle".to_string());
    }

    Ok(AxiomReport {
        kernel_violations,
        min_increment_eigenvalue,
        start_residual,
        end_residual,
        right_continuity,
        violations,
    })
}

/// Compression of the emulated spectral family against the phase POM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaimarkCheck {
    /// `⟨n|F(θ)|n'⟩` at the emulated dimension.
    pub lhs: Complex64,
    /// `∫_0^θ e^{i(n−n')u} du / 2π`
    pub rhs: Complex64,
    pub error: f64,
    /// `(1 + |n − n'|)/s`
    pub bound: f64,
    /// False when the indices are not small against the dimension
    /// (`max(n, n') > s/64`); the bound is then not meaningful.
    pub standard_indices: bool,
}

pub fn naimark_check(emulated: FockDim, n: usize, n_prime: usize, theta: f64) -> Result<NaimarkCheck> {
    check_angle(theta)?;
    let lhs = spectral_family_element(emulated, theta, 0.0, n, n_prime)?;
    let k = n as i64 - n_prime as i64;
    let rhs = cumulative_coefficient(theta, k);
    let s = emulated.get() as f64;
    Ok(NaimarkCheck {
        lhs,
        rhs,
        error: (lhs - rhs).norm(),
        bound: (1.0 + k.unsigned_abs() as f64) / s,
        standard_indices: n.max(n_prime) * 64 <= emulated.get(),
    })
}
