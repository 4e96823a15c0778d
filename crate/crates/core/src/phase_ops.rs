//! Pegg–Barnett phase states and operators, Susskind–Glogower exponentials,
//! and the spectral family of the finite phase operator.
//!
//! The phase basis is `|θ_m⟩ = s^{-1/2} Σ_n e^{inθ_m} |n⟩` with
//! `θ_m = 2πm/s`. The phase-basis transform maps number amplitudes `c_n`
//! to phase amplitudes
//!
//! ```text
//! a_m = ⟨θ_m|ψ⟩ = s^{-1/2} Σ_n e^{-inθ_m} c_n
//! ```
//!
//! which is the unitary forward DFT; synthesis uses the `e^{+inθ_m}` kernel.
//! Every operator diagonal in the phase basis is a circulant in the number
//! basis: `⟨n|f(φ_s)|n'⟩ = (1/s) Σ_m f(θ_m) e^{i(n−n')θ_m}`.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{PhaseError, Result};
use crate::fock_core::{FockDim, StateVector};
use crate::operator::DenseOperator;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Uniform grid `θ_m = 2πm/s`, `m = 0..s−1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseGrid {
    dim: FockDim,
}

impl PhaseGrid {
    pub fn new(dim: FockDim) -> Self {
        Self { dim }
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.dim.get()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.dim.get() as f64
    }

    #[inline]
    pub fn point(&self, m: usize) -> f64 {
        TAU * m as f64 / self.dim.get() as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|m| self.point(m))
    }

    /// Evaluates `f` on the grid.
    pub fn sample<F: FnMut(f64) -> Complex64>(&self, mut f: F) -> Vec<Complex64> {
        self.points().map(&mut f).collect()
    }

    /// Number of grid points with `θ_m ≤ x`.
    pub fn count_at_or_below(&self, x: f64) -> usize {
        if x < 0.0 {
            return 0;
        }
        let s = self.len();
        let guess = ((x / TAU) * s as f64).floor();
        let mut count = if guess.is_finite() { (guess.max(0.0) as usize + 1).min(s) } else { s };
        while count > 0 && self.point(count - 1) > x {
            count -= 1;
        }
        while count < s && self.point(count) <= x {
            count += 1;
        }
        count
    }
}

#[inline]
fn signed_mod(k: i64, s: usize) -> usize {
    k.rem_euclid(s as i64) as usize
}

/// An approximate phase eigenstate `|θ_m⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    index: usize,
    state: StateVector,
}

impl PhaseState {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn angle(&self) -> f64 {
        PhaseGrid::new(self.state.dim()).point(self.index)
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn into_state(self) -> StateVector {
        self.state
    }
}

pub fn pb_phase_state(dim: FockDim, m: usize) -> Result<PhaseState> {
    let s = dim.get();
    if m >= s {
        return Err(PhaseError::IndexOutOfRange { index: m, dim: s });
    }
    let norm = (s as f64).sqrt().recip();
    let amps = (0..s)
        .map(|n| Complex64::from_polar(norm, TAU * ((n * m) % s) as f64 / s as f64))
        .collect();
    Ok(PhaseState {
        index: m,
        state: StateVector::from_amplitudes(amps)?,
    })
}

/// `Σ_m f(θ_m) |θ_m⟩⟨θ_m|`, stored by its values on the phase grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagonalOperator {
    dim: FockDim,
    values: Vec<Complex64>,
}

impl PhaseDiagonalOperator {
    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    /// Circulant generator `c_k = (1/s) Σ_m f(θ_m) e^{ikθ_m}`, `k = 0..s−1`,
    /// by one inverse FFT.
    pub fn circulant_coefficients(&self) -> Vec<Complex64> {
        let s = self.dim.get();
        let mut buf = self.values.clone();
        FftPlanner::new().plan_fft_inverse(s).process(&mut buf);
        let inv = 1.0 / s as f64;
        buf.iter_mut().for_each(|z| *z *= inv);
        buf
    }

    /// `⟨n|f(φ_s)|n'⟩` in O(s), without materializing the matrix.
    pub fn element(&self, n: usize, n_prime: usize) -> Result<Complex64> {
        let s = self.dim.get();
        for idx in [n, n_prime] {
            if idx >= s {
                return Err(PhaseError::IndexOutOfRange { index: idx, dim: s });
            }
        }
        let k = signed_mod(n as i64 - n_prime as i64, s);
        let acc: Complex64 = self
            .values
            .iter()
            .enumerate()
            .map(|(m, f)| f * Complex64::from_polar(1.0, TAU * ((k * m) % s) as f64 / s as f64))
            .sum();
        Ok(acc / s as f64)
    }

    pub fn to_dense(&self) -> DenseOperator {
        let s = self.dim.get();
        let coeffs = self.circulant_coefficients();
        let mut m = DMatrix::zeros(s, s);
        // column n' holds c_{n−n'}: the coefficient vector rotated down by n'
        for (np, mut col) in m.column_iter_mut().enumerate() {
            let col = col.as_mut_slice();
            col[np..].copy_from_slice(&coeffs[..s - np]);
            col[..np].copy_from_slice(&coeffs[s - np..]);
        }
        assert!(
            coeffs.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            "circulant coefficients overflowed"
        );
        DenseOperator::from_finite_matrix(m, self.is_real())
    }

    /// Fast application through the phase basis.
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        apply_phase_function(psi, &self.values)
    }
}

pub fn function_of_phase(dim: FockDim, values: Vec<Complex64>) -> Result<PhaseDiagonalOperator> {
    if values.len() != dim.get() {
        return Err(PhaseError::DimensionMismatch {
            expected: dim.get(),
            found: values.len(),
        });
    }
    if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(PhaseError::NonFinite("phase function value".into()));
    }
    Ok(PhaseDiagonalOperator { dim, values })
}

/// The Pegg–Barnett operator `φ_s = Σ_m θ_m |θ_m⟩⟨θ_m|`.
pub fn pb_phase_operator(dim: FockDim) -> DenseOperator {
    let grid = PhaseGrid::new(dim);
    let values = grid.sample(|t| Complex64::new(t, 0.0));
    function_of_phase(dim, values)
        .expect("grid-sized values")
        .to_dense()
}

/// Phase amplitudes `a_m = ⟨θ_m|ψ⟩`.
pub fn to_phase_amplitudes(psi: &StateVector) -> Vec<Complex64> {
    let s = psi.dim().get();
    let mut buf = psi.amplitudes().to_vec();
    FftPlanner::new().plan_fft_forward(s).process(&mut buf);
    let norm = (s as f64).sqrt().recip();
    buf.iter_mut().for_each(|z| *z *= norm);
    buf
}

/// Inverse of [`to_phase_amplitudes`].
pub fn from_phase_amplitudes(dim: FockDim, phase_amps: &[Complex64]) -> Result<StateVector> {
    let s = dim.get();
    if phase_amps.len() != s {
        return Err(PhaseError::DimensionMismatch { expected: s, found: phase_amps.len() });
    }
    let mut buf = phase_amps.to_vec();
    FftPlanner::new().plan_fft_inverse(s).process(&mut buf);
    let norm = (s as f64).sqrt().recip();
    buf.iter_mut().for_each(|z| *z *= norm);
    StateVector::from_amplitudes(buf)
}

/// `f(φ_s) ψ` via forward transform, pointwise multiply, inverse transform.
/// O(s log s) for every s (mixed-radix / Bluestein FFT).
pub fn apply_phase_function(psi: &StateVector, values: &[Complex64]) -> Result<StateVector> {
    let s = psi.dim().get();
    if values.len() != s {
        return Err(PhaseError::DimensionMismatch { expected: s, found: values.len() });
    }
    let mut planner = FftPlanner::new();
    let mut buf = psi.amplitudes().to_vec();
    planner.plan_fft_forward(s).process(&mut buf);
    buf.iter_mut().zip(values).for_each(|(a, f)| *a *= f);
    planner.plan_fft_inverse(s).process(&mut buf);
    let inv = 1.0 / s as f64;
    buf.iter_mut().for_each(|z| *z *= inv);
    StateVector::from_amplitudes(buf)
}

/// Which Susskind–Glogower exponential.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpSign {
    /// `(N+1)^{-1/2} a = Σ_n |n⟩⟨n+1|`
    Plus,
    /// the adjoint, `Σ_n |n+1⟩⟨n|`
    Minus,
}

pub fn sg_exp(dim: FockDim, sign: ExpSign) -> DenseOperator {
    let s = dim.get();
    let mut m = DMatrix::zeros(s, s);
    for n in 0..s - 1 {
        match sign {
            ExpSign::Plus => m[(n, n + 1)] = ONE,
            ExpSign::Minus => m[(n + 1, n)] = ONE,
        }
    }
    DenseOperator::from_finite_matrix(m, false)
}

pub fn sg_cos(dim: FockDim) -> DenseOperator {
    let half = Complex64::new(0.5, 0.0);
    sg_exp(dim, ExpSign::Plus)
        .add(&sg_exp(dim, ExpSign::Minus))
        .expect("same dim")
        .scale(half)
        .with_hermitian_flag(true)
}

pub fn sg_sin(dim: FockDim) -> DenseOperator {
    // 1/(2i) = −i/2
    let factor = Complex64::new(0.0, -0.5);
    sg_exp(dim, ExpSign::Plus)
        .sub(&sg_exp(dim, ExpSign::Minus))
        .expect("same dim")
        .scale(factor)
        .with_hermitian_flag(true)
}

fn check_family_args(theta: f64, shift: f64) -> Result<()> {
    if !(0.0..=TAU).contains(&theta) {
        return Err(PhaseError::AngleOutOfRange(theta));
    }
    if !shift.is_finite() || shift < 0.0 {
        return Err(PhaseError::AngleOutOfRange(shift));
    }
    Ok(())
}

/// Projection `F(θ) = Σ_{θ_m ≤ θ+shift} |θ_m⟩⟨θ_m|`.
pub fn spectral_family(dim: FockDim, theta: f64, shift: f64) -> Result<DenseOperator> {
    check_family_args(theta, shift)?;
    let grid = PhaseGrid::new(dim);
    let count = grid.count_at_or_below(theta + shift);
    let values = (0..dim.get())
        .map(|m| if m < count { ONE } else { ZERO })
        .collect();
    Ok(function_of_phase(dim, values)?.to_dense())
}

/// Single entry `⟨n|F(θ)|n'⟩` of [`spectral_family`], in O(s) time and memory
/// independent of s beyond the loop.
pub fn spectral_family_element(
    dim: FockDim,
    theta: f64,
    shift: f64,
    n: usize,
    n_prime: usize,
) -> Result<Complex64> {
    check_family_args(theta, shift)?;
    let s = dim.get();
    for idx in [n, n_prime] {
        if idx >= s {
            return Err(PhaseError::IndexOutOfRange { index: idx, dim: s });
        }
    }
    let count = PhaseGrid::new(dim).count_at_or_below(theta + shift);
    let k = signed_mod(n as i64 - n_prime as i64, s);
    let acc: Complex64 = (0..count)
        .map(|m| Complex64::from_polar(1.0, TAU * ((k * m) % s) as f64 / s as f64))
        .sum();
    Ok(acc / s as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dim(s: usize) -> FockDim {
        FockDim::new(s).unwrap()
    }

    #[test]
    fn grid_structure() {
        let g = PhaseGrid::new(dim(7));
        assert_eq!(g.point(0), 0.0);
        let pts: Vec<f64> = g.points().collect();
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        assert!((pts[6] + g.spacing() - TAU).abs() < 1e-15);
        assert_eq!(g.count_at_or_below(-0.1), 0);
        assert_eq!(g.count_at_or_below(0.0), 1);
        assert_eq!(g.count_at_or_below(g.point(3)), 4);
        assert_eq!(g.count_at_or_below(TAU), 7);
    }

    #[test]
    fn phase_state_small() {
        assert!(FockDim::new(1).is_err());
        let p = pb_phase_state(dim(2), 0).unwrap();
        let h = 0.5f64.sqrt();
        for z in p.state().amplitudes() {
            assert!((z - Complex64::new(h, 0.0)).norm() < 1e-15);
        }
        assert!(pb_phase_state(dim(4), 4).is_err());
    }

    #[test]
    fn phase_states_orthonormal() {
        let d = dim(128);
        let states: Vec<_> = (0..128).map(|m| pb_phase_state(d, m).unwrap()).collect();
        for (i, a) in states.iter().enumerate() {
            for (j, b) in states.iter().enumerate() {
                let ip = a.state().inner(b.state()).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - Complex64::new(expect, 0.0)).norm() <= 1e-12, "({i},{j}) {ip}");
            }
        }
    }

    #[test]
    fn pb_operator_diagonal_and_offdiagonal() {
        let s = 24;
        let op = pb_phase_operator(dim(s));
        assert!(op.is_hermitian());
        let diag = PI * (s as f64 - 1.0) / s as f64;
        for n in 0..s {
            assert!((op.get(n, n).re - diag).abs() < 1e-12);
        }
        // direct summation oracle
        for n in 0..s {
            for np in 0..s {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..s {
                    let th = TAU * m as f64 / s as f64;
                    acc += th * Complex64::from_polar(1.0, (n as f64 - np as f64) * th);
                }
                acc /= s as f64;
                assert!((op.get(n, np) - acc).norm() < 1e-12, "({n},{np})");
            }
        }
        assert!(op.hermiticity_residual() < 1e-12);
    }

    #[test]
    fn pb_operator_eigenrelation() {
        let s = 256;
        let d = dim(s);
        let op = pb_phase_operator(d);
        for m in [0, 1, 17, 128, 255] {
            let p = pb_phase_state(d, m).unwrap();
            let lhs = op.apply(p.state()).unwrap();
            let resid: f64 = lhs
                .amplitudes()
                .iter()
                .zip(p.state().amplitudes())
                .map(|(a, b)| (a - p.angle() * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(resid <= 1e-10, "m={m} resid={resid}");
        }
    }

    #[test]
    fn function_of_constant_and_exponential() {
        let s = 10;
        let d = dim(s);
        let id = function_of_phase(d, vec![ONE; s]).unwrap().to_dense();
        assert!(id.max_abs_diff(&DenseOperator::identity(d)).unwrap() < 1e-14);
        let grid = PhaseGrid::new(d);
        let exp = function_of_phase(d, grid.sample(|t| Complex64::from_polar(1.0, t)))
            .unwrap()
            .to_dense();
        for n in 0..s {
            for np in 0..s {
                // brute-force projector sum oracle
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..s {
                    let p = pb_phase_state(d, m).unwrap();
                    let a = p.state().amplitudes();
                    acc += Complex64::from_polar(1.0, grid.point(m)) * a[n] * a[np].conj();
                }
                assert!((exp.get(n, np) - acc).norm() < 1e-12);
                let expect = if (1 + n + s - np) % s == 0 { 1.0 } else { 0.0 };
                assert!((exp.get(n, np).re - expect).abs() < 1e-12);
            }
        }
        assert!(function_of_phase(d, vec![ONE; 3]).is_err());
    }

    #[test]
    fn function_of_theta_is_pb_operator() {
        let d = dim(16);
        let f = function_of_phase(d, PhaseGrid::new(d).sample(|t| Complex64::new(t, 0.0))).unwrap();
        assert_eq!(f.to_dense(), pb_phase_operator(d));
    }

    #[test]
    fn element_agrees_with_dense() {
        let d = dim(13);
        let f = function_of_phase(d, PhaseGrid::new(d).sample(|t| Complex64::new(t * t, t.sin()))).unwrap();
        let dense = f.to_dense();
        for n in 0..13 {
            for np in 0..13 {
                assert!((f.element(n, np).unwrap() - dense.get(n, np)).norm() < 1e-12);
            }
        }
        assert!(f.element(13, 0).is_err());
    }

    #[test]
    fn cyclic_shift_application() {
        let d = dim(8);
        let grid = PhaseGrid::new(d);
        let psi = crate::fock_core::number_state(d, 3).unwrap();
        let out = apply_phase_function(&psi, &grid.sample(|t| Complex64::from_polar(1.0, t))).unwrap();
        let expect = crate::fock_core::number_state(d, 2).unwrap();
        for (a, b) in out.amplitudes().iter().zip(expect.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
        let same = apply_phase_function(&psi, &[ONE; 8]).unwrap();
        for (a, b) in same.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
        assert!(apply_phase_function(&psi, &[ONE; 7]).is_err());
    }

    #[test]
    fn phase_transform_round_trip_and_matches_definition() {
        let d = dim(12);
        let psi = StateVector::from_amplitudes(
            (0..12).map(|n| Complex64::new((n as f64).cos(), 0.3 * n as f64)).collect(),
        )
        .unwrap();
        let a = to_phase_amplitudes(&psi);
        for (m, am) in a.iter().enumerate() {
            let direct = pb_phase_state(d, m).unwrap().state().inner(&psi).unwrap();
            assert!((am - direct).norm() < 1e-12);
        }
        let back = from_phase_amplitudes(d, &a).unwrap();
        for (x, y) in back.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn sg_operators() {
        let d = dim(6);
        let ep = sg_exp(d, ExpSign::Plus);
        let vac = crate::fock_core::number_state(d, 0).unwrap();
        assert!(ep.apply(&vac).unwrap().amplitudes().iter().all(|z| z.norm() == 0.0));
        let em = sg_exp(d, ExpSign::Minus);
        assert_eq!(em, ep.adjoint().with_hermitian_flag(false));
        let c = sg_cos(d);
        let sn = sg_sin(d);
        assert!(c.hermiticity_residual() == 0.0 && sn.hermiticity_residual() == 0.0);
        assert_eq!(c.get(0, 1), Complex64::new(0.5, 0.0));
        assert_eq!(sn.get(0, 1), Complex64::new(0.0, -0.5));
        assert_eq!(sn.get(1, 0), Complex64::new(0.0, 0.5));
    }

    #[test]
    fn sg_exp_is_normalized_lowering() {
        use crate::fock_core::{annihilation, number_operator};
        let s = 20;
        let d = dim(s);
        let n_plus_1 = number_operator(d).add(&DenseOperator::identity(d)).unwrap();
        let inv_sqrt: Vec<Complex64> = (0..s).map(|n| Complex64::new(1.0 / n_plus_1.get(n, n).re.sqrt(), 0.0)).collect();
        let lhs = DenseOperator::diagonal(&inv_sqrt).unwrap().matmul(&annihilation(d)).unwrap();
        assert!(lhs.max_abs_diff(&sg_exp(d, ExpSign::Plus)).unwrap() <= 1e-12);
    }

    #[test]
    fn spectral_family_endpoints() {
        let d = dim(9);
        let full = spectral_family(d, TAU, 0.0).unwrap();
        assert!(full.max_abs_diff(&DenseOperator::identity(d)).unwrap() < 1e-12);
        let first = spectral_family(d, 0.0, 0.0).unwrap();
        let p0 = pb_phase_state(d, 0).unwrap();
        let a = p0.state().amplitudes();
        for n in 0..9 {
            for np in 0..9 {
                assert!((first.get(n, np) - a[n] * a[np].conj()).norm() < 1e-14);
            }
        }
        let ev = first.hermitian_eigenvalues();
        assert!((ev[8] - 1.0).abs() < 1e-12 && ev[7].abs() < 1e-12);
        assert!(spectral_family(d, -0.1, 0.0).is_err());
        assert!(spectral_family(d, 1.0, -0.1).is_err());
    }

    #[test]
    fn spectral_family_projection_and_quadrature() {
        let s = 64;
        let d = dim(s);
        for theta in [0.3, 1.0, PI, 5.5] {
            let f = spectral_family(d, theta, 0.0).unwrap();
            let sq = f.matmul(&f).unwrap();
            assert!(sq.max_abs_diff(&f).unwrap() < 1e-10);
            assert!(f.hermiticity_residual() < 1e-10);
            for n in 0..6 {
                for np in 0..6 {
                    let k = n as f64 - np as f64;
                    let exact = if k == 0.0 {
                        Complex64::new(theta / TAU, 0.0)
                    } else {
                        (Complex64::from_polar(1.0, k * theta) - 1.0) / Complex64::new(0.0, TAU * k)
                    };
                    let err = (f.get(n, np) - exact).norm();
                    assert!(err <= TAU / s as f64 * (1.0 + k.abs()), "θ={theta} ({n},{np}) err={err}");
                    let el = spectral_family_element(d, theta, 0.0, n, np).unwrap();
                    assert!((el - f.get(n, np)).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn spectral_family_monotone() {
        let d = dim(16);
        let thetas = [0.0, 0.2, 0.9, 2.0, 3.3, 4.4, 6.0, TAU];
        for w in thetas.windows(2) {
            let lo = spectral_family(d, w[0], 0.0).unwrap();
            let hi = spectral_family(d, w[1], 0.0).unwrap();
            assert!(hi.sub(&lo).unwrap().min_eigenvalue() >= -1e-10);
        }
    }

    #[test]
    fn spectral_family_shift_stabilizes() {
        // strong-limit surrogate: F(θ, 1/k) settles on F(θ, 0) once 1/k < gap
        let d = dim(32);
        let theta = 1.0;
        let base = spectral_family(d, theta, 0.0).unwrap();
        let gap = PhaseGrid::new(d).point(PhaseGrid::new(d).count_at_or_below(theta)) - theta;
        for k in [100usize, 1000, 10_000] {
            let shifted = spectral_family(d, theta, 1.0 / k as f64).unwrap();
            if 1.0 / (k as f64) < gap {
                assert_eq!(shifted, base);
            }
        }
    }

    #[test]
    fn cyclic_shift_has_order_s() {
        let s = 7;
        let d = dim(s);
        let grid = PhaseGrid::new(d);
        let e = function_of_phase(d, grid.sample(|t| Complex64::from_polar(1.0, t))).unwrap().to_dense();
        let mut p = DenseOperator::identity(d);
        for _ in 0..s {
            p = p.matmul(&e).unwrap();
        }
        assert!(p.max_abs_diff(&DenseOperator::identity(d)).unwrap() < 1e-12);
    }
}
