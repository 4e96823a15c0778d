//! Bayes-optimal covariant phase estimation.
//!
//! A reference state ψ is shifted to `e^{iθN}ψ` by an unknown θ and
//! measured with a covariant POM. The estimate error `τ = θ̄ − θ` has density
//!
//! ```text
//! q(τ) = (1/2π) Σ_{n,n'} c̄_n c_{n'} h_{nn'} e^{i(n−n')τ}
//! ```
//!
//! and the risk for a periodic penalty `W` is `∫ W(−τ) q(τ) dτ`. Writing
//! `ŵ(j) = (1/2π) ∫ W(u) e^{−iju} du`, the risk is the finite sum
//! `Re Σ ŵ(n−n') c̄_n c_{n'} h_{nn'}`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{PhaseError, Result};
use crate::fock_core::{phase_shift_unitary, StateVector};
use crate::operator::DenseOperator;
use crate::phase_pom::{density_unchecked, moment_operator, POMKernel, PhaseFunction};

/// Agreement required between the reduced single integral and the direct
/// double quadrature.
pub const QUADRATURE_AGREEMENT: f64 = 1e-6;

/// Periodic penalty `W`.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorFunction {
    /// `W(x) = 4 sin²(x/2)`
    Sin2,
    /// `W(x) = −δ(x)`, handled through the peak density `q(0)`.
    DeltaSurrogate,
    /// Real samples `W(2πl/L)`, `l = 0..L−1`.
    Custom(Vec<f64>),
}

impl ErrorFunction {
    pub fn custom(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(PhaseError::Validation("custom error function needs at least 2 samples".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PhaseError::NonFinite("error function sample".into()));
        }
        Ok(Self::Custom(values))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sin2 => "sin2",
            Self::DeltaSurrogate => "delta_surrogate",
            Self::Custom(_) => "custom",
        }
    }

    pub fn eval(&self, x: f64) -> Option<f64> {
        match self {
            Self::Sin2 => Some(4.0 * (x / 2.0).sin().powi(2)),
            Self::DeltaSurrogate => None,
            Self::Custom(v) => {
                let l = v.len();
                let pos = (x.rem_euclid(TAU) / TAU * l as f64).round() as usize % l;
                Some(v[pos])
            }
        }
    }

    /// `ŵ(j)` for `j = −(s−1)..=(s−1)`, index `j + s − 1`.
    fn coefficients(&self, s: usize) -> Vec<Complex64> {
        let span = 2 * s - 1;
        match self {
            Self::Sin2 => (0..span)
                .map(|i| match i as i64 - (s as i64 - 1) {
                    0 => Complex64::new(2.0, 0.0),
                    1 | -1 => Complex64::new(-1.0, 0.0),
                    _ => Complex64::new(0.0, 0.0),
                })
                .collect(),
            Self::DeltaSurrogate => vec![Complex64::new(-1.0 / TAU, 0.0); span],
            Self::Custom(v) => {
                let l = v.len();
                let mut buf: Vec<Complex64> = v.iter().map(|&w| Complex64::new(w, 0.0)).collect();
                FftPlanner::new().plan_fft_forward(l).process(&mut buf);
                (0..span)
                    .map(|i| {
                        let j = i as i64 - (s as i64 - 1);
                        buf[j.rem_euclid(l as i64) as usize] / l as f64
                    })
                    .collect()
            }
        }
    }
}

/// Risk from both routes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEvaluation {
    /// Reduced single integral (closed form for analytic `W`).
    pub reduced: f64,
    /// Quadrature over the joint distribution of `(θ, θ̄)`.
    pub double_quadrature: f64,
}

impl RiskEvaluation {
    pub fn discrepancy(&self) -> f64 {
        (self.reduced - self.double_quadrature).abs()
    }
}

fn check_inputs(pom: &POMKernel, psi: &StateVector) -> Result<()> {
    if pom.dim() != psi.dim() {
        return Err(PhaseError::DimensionMismatch {
            expected: pom.dim().get(),
            found: psi.dim().get(),
        });
    }
    psi.require_normalized()?;
    let violations = pom.validate();
    if !violations.is_empty() {
        return Err(PhaseError::InvalidKernel(violations.join("; ")));
    }
    Ok(())
}

fn reduced_risk(pom: &POMKernel, psi: &StateVector, w: &ErrorFunction) -> f64 {
    let s = psi.dim().get();
    let coeffs = w.coefficients(s);
    let support = psi.support();
    let mut acc = Complex64::new(0.0, 0.0);
    for &(n, cn) in &support {
        for &(np, cnp) in &support {
            let j = (n as i64 - np as i64 + s as i64 - 1) as usize;
            acc += coeffs[j] * cn.conj() * cnp * pom.entry(n, np);
        }
    }
    acc.re
}

/// Both routes, without input validation.
pub fn evaluate_risk(pom: &POMKernel, psi: &StateVector, w: &ErrorFunction) -> Result<RiskEvaluation> {
    check_inputs(pom, psi)?;
    let s = psi.dim().get();
    let reduced = reduced_risk(pom, psi, w);
    let double_quadrature = match w {
        ErrorFunction::DeltaSurrogate => {
            // −∫ p(θ, θ) dθ along the diagonal of the joint density
            let m = (4 * s).max(16);
            let mut acc = 0.0;
            for a in 0..m {
                let theta = TAU * a as f64 / m as f64;
                let shifted = phase_shift_unitary(psi.dim(), theta)?.apply(psi)?;
                acc += density_unchecked(pom, &shifted, theta) / TAU;
            }
            -acc * TAU / m as f64
        }
        _ => {
            // sin2 makes the integrand a trigonometric polynomial of degree ≤ s
            // in each variable; custom W is sampled on its own grid.
            let m = match w {
                ErrorFunction::Custom(v) => v.len(),
                _ => (4 * s).max(16),
            };
            let h = TAU / m as f64;
            let mut acc = 0.0;
            for a in 0..m {
                let theta = h * a as f64;
                let shifted = phase_shift_unitary(psi.dim(), theta)?.apply(psi)?;
                for b in 0..m {
                    let estimate = h * b as f64;
                    let joint = density_unchecked(pom, &shifted, estimate) / TAU;
                    let penalty = match w {
                        ErrorFunction::Custom(v) => v[(a + m - b) % m],
                        _ => w.eval(theta - estimate).unwrap_or(0.0),
                    };
                    acc += penalty * joint;
                }
            }
            acc * h * h
        }
    };
    Ok(RiskEvaluation { reduced, double_quadrature })
}

/// Average penalty of `pom` on ψ. Fails if the two evaluation routes
/// disagree by more than [`QUADRATURE_AGREEMENT`].
pub fn bayes_risk(pom: &POMKernel, psi: &StateVector, w: &ErrorFunction) -> Result<f64> {
    let eval = evaluate_risk(pom, psi, w)?;
    if eval.discrepancy() > QUADRATURE_AGREEMENT {
        return Err(PhaseError::Validation(format!(
            "risk routes disagree: reduced {} vs quadrature {}",
            eval.reduced, eval.double_quadrature
        )));
    }
    Ok(eval.reduced)
}

/// `arg c_n`, with 0 where `c_n = 0`.
pub fn state_phases(psi: &StateVector) -> Vec<f64> {
    psi.amplitudes()
        .iter()
        .map(|c| if c.norm_sqr() == 0.0 { 0.0 } else { c.arg() })
        .collect()
}

/// Kernel `h_{nn'} = e^{i(α_n − α_{n'})}` with `α_n = arg c_n`.
pub fn optimal_pom(psi: &StateVector) -> Result<POMKernel> {
    psi.require_normalized()?;
    POMKernel::from_phases(state_phases(psi))
}

/// Peak error density `q(0) = (1/2π) Σ c̄_n c_{n'} h_{nn'}`.
pub fn likelihood_at_true(pom: &POMKernel, psi: &StateVector) -> Result<f64> {
    check_inputs(pom, psi)?;
    Ok(density_unchecked(pom, psi, 0.0))
}

/// `2 − 2 Σ |c_n||c_{n+1}|`, the smallest `W = 4sin²(x/2)` risk any valid
/// covariant kernel can reach on ψ.
pub fn sin2_risk_lower_bound(psi: &StateVector) -> f64 {
    let a = psi.amplitudes();
    2.0 - 2.0 * a.windows(2).map(|w| w[0].norm() * w[1].norm()).sum::<f64>()
}

/// Interval `[start, end)` with `0 ≤ start ≤ end ≤ 2π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseInterval {
    pub start: f64,
    pub end: f64,
}

impl PhaseInterval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        PhaseFunction::indicator(start, end)?;
        Ok(Self { start, end })
    }

    /// `(B − θ₀) mod 2π`, as one or two intervals.
    pub fn shifted_back(&self, theta0: f64) -> Vec<PhaseInterval> {
        let t0 = theta0.rem_euclid(TAU);
        let (a, b) = (self.start - t0, self.end - t0);
        if a >= 0.0 {
            vec![PhaseInterval { start: a, end: b }]
        } else if b <= 0.0 {
            vec![PhaseInterval { start: a + TAU, end: b + TAU }]
        } else {
            vec![
                PhaseInterval { start: a + TAU, end: TAU },
                PhaseInterval { start: 0.0, end: b },
            ]
        }
    }
}

fn interval_moment(pom: &POMKernel, pieces: &[PhaseInterval]) -> Result<DenseOperator> {
    let mut acc = DenseOperator::zeros(pom.dim());
    for piece in pieces {
        let f = PhaseFunction::indicator(piece.start, piece.end)?;
        acc = acc.add(&moment_operator(pom, &f))?;
    }
    Ok(acc)
}

/// `max |e^{−iθ₀N} P̄(B) e^{iθ₀N} − P̄(B − θ₀)|` entrywise.
pub fn covariance_transform_check(pom: &POMKernel, theta0: f64, interval: PhaseInterval) -> Result<f64> {
    let dim = pom.dim();
    let p_b = interval_moment(pom, &[interval])?;
    let conj = phase_shift_unitary(dim, -theta0)?
        .matmul(&p_b)?
        .matmul(&phase_shift_unitary(dim, theta0)?)?;
    let target = interval_moment(pom, &interval.shifted_back(theta0))?;
    conj.max_abs_diff(&target)
}

/// Risk of the rank-one kernel `e^{i(β_n − β_{n'})}` as a function of β.
#[derive(Debug, Clone)]
pub struct CovariantRiskObjective {
    /// `A_{nn'} = ŵ(n − n') c̄_n c_{n'}`, row-major.
    weights: Vec<Complex64>,
    s: usize,
}

impl CovariantRiskObjective {
    pub fn new(psi: &StateVector, w: &ErrorFunction) -> Result<Self> {
        psi.require_normalized()?;
        let s = psi.dim().get();
        let coeffs = w.coefficients(s);
        let a = psi.amplitudes();
        let mut weights = vec![Complex64::new(0.0, 0.0); s * s];
        for n in 0..s {
            for np in 0..s {
                weights[n * s + np] = coeffs[n + s - 1 - np] * a[n].conj() * a[np];
            }
        }
        Ok(Self { weights, s })
    }

    pub fn dim(&self) -> usize {
        self.s
    }

    pub fn risk(&self, beta: &[f64]) -> f64 {
        let s = self.s;
        let mut acc = 0.0;
        for n in 0..s {
            for np in 0..s {
                let a = self.weights[n * s + np];
                if a.norm_sqr() != 0.0 {
                    acc += (a * Complex64::from_polar(1.0, beta[n] - beta[np])).re;
                }
            }
        }
        acc
    }

    /// Risk and `∂risk/∂β_p` for every p.
    pub fn risk_and_gradient(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let s = self.s;
        let mut risk = 0.0;
        let mut grad = vec![0.0; s];
        for n in 0..s {
            for np in 0..s {
                let a = self.weights[n * s + np];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                let term = a * Complex64::from_polar(1.0, beta[n] - beta[np]);
                risk += term.re;
                // d/dβ_n Re(term) = Re(i term) = −Im(term); d/dβ_{n'} = +Im(term)
                grad[n] -= term.im;
                grad[np] += term.im;
            }
        }
        (risk, grad)
    }
}

/// Gradient-descent settings for [`optimize_covariant_pom`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
}

impl OptimizerOptions {
    /// 64 restarts up to s = 16, 16 beyond.
    pub fn for_dim(s: usize) -> Self {
        Self {
            restarts: if s <= 16 { 64 } else { 16 },
            max_iters: 10_000,
            grad_tol: 1e-8,
            seed: 0,
            armijo: 1e-4,
        }
    }
}

/// Rank-one covariant kernel parameters with gauge `β_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariantPOMParams {
    pub beta: Vec<f64>,
}

impl CovariantPOMParams {
    /// Shifts to `β_0 = 0` and wraps into `(−π, π]`.
    pub fn gauge_fixed(beta: &[f64]) -> Self {
        let b0 = beta.first().copied().unwrap_or(0.0);
        Self {
            beta: beta
                .iter()
                .map(|b| {
                    let r = (b - b0).rem_euclid(TAU);
                    if r > PI {
                        r - TAU
                    } else {
                        r
                    }
                })
                .collect(),
        }
    }

    pub fn kernel(&self) -> Result<POMKernel> {
        POMKernel::from_phases(self.beta.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub seed: u64,
    pub iters: usize,
    pub risk: f64,
    pub beta: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub risk: f64,
    pub beta: Vec<f64>,
}

/// Serialized optimizer trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    /// Amplitudes as `[re, im]`.
    pub state: Vec<[f64; 2]>,
    #[serde(rename = "W")]
    pub w: String,
    pub restarts: Vec<RestartRecord>,
    pub best: BestRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub params: CovariantPOMParams,
    pub risk: f64,
    pub trace: OptimizerTrace,
    /// False when no restart met the gradient tolerance; `params` is then
    /// the best point seen.
    pub converged: bool,
}

fn descend(objective: &CovariantRiskObjective, start: Vec<f64>, opts: &OptimizerOptions) -> (Vec<f64>, f64, usize, bool) {
    // β_0 stays fixed at its start value (gauge); only β_1.. move.
    let mut x = start;
    let (mut f, mut g) = objective.risk_and_gradient(&x);
    g[0] = 0.0;
    let mut step: f64 = 1.0;
    for iter in 0..opts.max_iters {
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() <= opts.grad_tol {
            return (x, f, iter, true);
        }
        // backtracking from a Barzilai–Borwein trial step
        let mut t = step.clamp(1e-10, 1e6);
        let mut trial: Vec<f64>;
        let mut f_trial;
        let mut tries = 0;
        loop {
            trial = x.iter().zip(&g).map(|(xi, gi)| xi - t * gi).collect();
            f_trial = objective.risk(&trial);
            if f_trial <= f - opts.armijo * t * gnorm2 || tries >= 60 {
                break;
            }
            t *= 0.5;
            tries += 1;
        }
        if f_trial > f {
            return (x, f, iter, false);
        }
        let (_, mut g_new) = objective.risk_and_gradient(&trial);
        g_new[0] = 0.0;
        let sy: f64 = trial.iter().zip(&x).zip(g_new.iter().zip(&g)).map(|((a, b), (c, d))| (a - b) * (c - d)).sum();
        let ss: f64 = trial.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
        step = if sy > 0.0 { ss / sy } else { 1.0 };
        x = trial;
        f = f_trial;
        g = g_new;
    }
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    (x, f, opts.max_iters, gnorm <= opts.grad_tol)
}

/// Minimizes the risk over rank-one covariant kernels by gradient descent
/// with random restarts, run in parallel with per-restart seeds
/// `seed + index`.
pub fn optimize_covariant_pom(psi: &StateVector, w: &ErrorFunction, opts: &OptimizerOptions) -> Result<OptimizationResult> {
    if opts.restarts == 0 {
        return Err(PhaseError::Validation("at least one restart is required".into()));
    }
    let objective = CovariantRiskObjective::new(psi, w)?;
    let s = objective.dim();
    let restarts: Vec<RestartRecord> = (0..opts.restarts)
        .into_par_iter()
        .map(|i| {
            let seed = opts.seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start: Vec<f64> = (0..s)
                .map(|n| if n == 0 { 0.0 } else { rng.gen_range(0.0..TAU) })
                .collect();
            let (beta, risk, iters, converged) = descend(&objective, start, opts);
            RestartRecord {
                seed,
                iters,
                risk,
                beta: CovariantPOMParams::gauge_fixed(&beta).beta,
                converged,
            }
        })
        .collect();

    let best = restarts
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.risk.total_cmp(&b.risk).then(ia.cmp(ib)))
        .map(|(_, r)| r.clone())
        .expect("non-empty restarts");
    let converged = restarts.iter().any(|r| r.converged);
    let trace = OptimizerTrace {
        state: psi.amplitudes().iter().map(|z| [z.re, z.im]).collect(),
        w: w.name().to_string(),
        restarts,
        best: BestRecord {
            risk: best.risk,
            beta: best.beta.clone(),
        },
    };
    Ok(OptimizationResult {
        params: CovariantPOMParams { beta: best.beta },
        risk: best.risk,
        trace,
        converged,
    })
}

/// Smallest `|a − b|` modulo 2π.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}
