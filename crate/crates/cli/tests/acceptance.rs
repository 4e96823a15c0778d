//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use phasekit::estimation::{
    bayes_risk, circular_distance, covariance_transform_check, evaluate_risk, optimal_pom, optimize_covariant_pom,
    sin2_risk_lower_bound, state_phases, ErrorFunction, OptimizerOptions, PhaseInterval,
};
use phasekit::macroscopic::{
    cauchy_limit_estimate, compress_to_h, extend_to_d, macroscopic_matrix_element, HyperfiniteModel,
    MatrixElementGenerator, ProbeSet,
};
use phasekit::phase_ops::{apply_phase_function, function_of_phase, sg_cos, sg_exp, sg_sin, ExpSign, PhaseGrid};
use phasekit::phase_pom::{moment_operator, naimark_check, phase_pom, POMKernel, PhaseFunction};
use phasekit::{DenseOperator, FockDim, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Tracking;

thread_local! {
    static TRACK: Cell<bool> = const { Cell::new(false) };
    static LARGEST: Cell<usize> = const { Cell::new(0) };
}

unsafe impl GlobalAlloc for Tracking {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        note(layout.size());
        unsafe { System.alloc(layout) }
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        note(layout.size());
        unsafe { System.alloc_zeroed(layout) }
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        note(new_size);
        unsafe { System.realloc(ptr, layout, new_size) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }
}

fn note(size: usize) {
    let _ = TRACK.try_with(|t| {
        if t.get() {
            let _ = LARGEST.try_with(|l| l.set(l.get().max(size)));
        }
    });
}

#[global_allocator]
static GLOBAL: Tracking = Tracking;

/// Largest single allocation made on this thread while `f` runs.
fn largest_allocation<T>(f: impl FnOnce() -> T) -> (T, usize) {
    LARGEST.with(|l| l.set(0));
    TRACK.with(|t| t.set(true));
    let out = f();
    TRACK.with(|t| t.set(false));
    (out, LARGEST.with(Cell::get))
}

/// Name, runtime budget in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn dim(s: usize) -> FockDim {
    FockDim::new(s).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, s: usize) -> StateVector {
    let amps = (0..s)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    StateVector::from_amplitudes(amps).unwrap().normalized().unwrap()
}

fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn c1_sg_algebra() -> Outcome {
    let mut worst_full: f64 = 0.0;
    let mut worst_interior: f64 = 0.0;
    let mut worst_vacuum: f64 = 0.0;
    for s in [8, 64, 512] {
        let d = dim(s);
        let plus = sg_exp(d, ExpSign::Plus);
        let minus = sg_exp(d, ExpSign::Minus);
        let pm = plus.matmul(&minus).unwrap();
        let id = DenseOperator::identity(d);
        worst_full = worst_full.max(pm.max_abs_diff(&id).unwrap());
        let interior = pm.leading_block(s - 1).unwrap();
        worst_interior = worst_interior.max(interior.max_abs_diff(&DenseOperator::identity(dim(s - 1))).unwrap());
        let mut gap = id.into_matrix();
        gap[(0, 0)] = Complex64::new(0.0, 0.0);
        let mp = minus.matmul(&plus).unwrap();
        worst_vacuum = worst_vacuum.max(mp.max_abs_diff(&DenseOperator::from_matrix(gap).unwrap()).unwrap());
    }
    let pass = worst_full <= 1e-12 && worst_vacuum <= 1e-12;
    outcome(
        pass,
        format!(
            "E+E- vs I: {worst_full:e} (interior block {worst_interior:e}; truncation empties the top level); E-E+ vs I-|0><0|: {worst_vacuum:e}"
        ),
    )
}

fn c2_sg_moments() -> Outcome {
    let d = dim(64);
    let p = phase_pom(d);
    let cases = [
        (PhaseFunction::ExpI(1), sg_exp(d, ExpSign::Plus)),
        (PhaseFunction::ExpI(-1), sg_exp(d, ExpSign::Minus)),
        (PhaseFunction::Cos, sg_cos(d)),
        (PhaseFunction::Sin, sg_sin(d)),
    ];
    let worst = cases
        .iter()
        .map(|(f, sg)| moment_operator(&p, f).max_abs_diff(sg).unwrap())
        .fold(0.0, f64::max);
    outcome(worst <= 1e-12, format!("max entrywise residual {worst:e} at s=64"))
}

fn c3_weak_limit_corner() -> Outcome {
    let mut failures = Vec::new();
    for s in (8..=1024).rev() {
        let d = dim(s);
        let values = PhaseGrid::new(d).sample(|t| Complex64::from_polar(1.0, t));
        let pb = function_of_phase(d, values).unwrap().to_dense();
        let sg = sg_exp(d, ExpSign::Plus);
        // column-major walk; |Δ|² > 1e−24 is |Δ| > 1e−12
        let differing: Vec<(usize, usize)> = pb
            .matrix()
            .iter()
            .zip(sg.matrix().iter())
            .enumerate()
            .filter(|(_, (a, b))| (*a - *b).norm_sqr() > 1e-24)
            .map(|(i, _)| (i % s, i / s))
            .collect();
        let corner_ok = differing == [(s - 1, 0)] && (pb.get(s - 1, 0) - Complex64::new(1.0, 0.0)).norm() <= 1e-12;
        let fixed_ok = (0..4).all(|n| {
            (0..4).all(|np| {
                let expect = if np == n + 1 && s > n + 1 { 1.0 } else { 0.0 };
                (pb.get(n, np) - Complex64::new(expect, 0.0)).norm() <= 1e-12
            })
        });
        if !(corner_ok && fixed_ok) {
            failures.insert(0, s);
        }
    }
    outcome(
        failures.is_empty(),
        format!("s=8..=1024: single differing element at (s-1,0); failing sizes {failures:?}"),
    )
}

fn c4_pb_convergence() -> Outcome {
    let sizes: Vec<usize> = (6..=13).map(|k| 1usize << k).collect();
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, f) in [("theta", PhaseFunction::Theta), ("cos", PhaseFunction::Cos)] {
        for (n, np) in [(0usize, 0usize), (0, 1), (2, 5)] {
            let target = f.fourier_coefficient(n as i64 - np as i64);
            let errs: Vec<(f64, f64)> = sizes
                .iter()
                .map(|&s| {
                    let d = dim(s);
                    let z = function_of_phase(d, f.grid_values(d)).unwrap().element(n, np).unwrap();
                    (s as f64, (z - target).norm())
                })
                .collect();
            let max_err = errs.iter().map(|e| e.1).fold(0.0, f64::max);
            let ok_points = errs.iter().all(|e| e.1 > 0.0);
            let slope = if ok_points { loglog_slope(&errs) } else { f64::NAN };
            let ok = (slope + 1.0).abs() <= 0.1;
            pass &= ok;
            lines.push(format!("{name}({n},{np}) slope {slope:.4} max_err {max_err:.1e}"));
        }
    }
    outcome(pass, lines.join("; "))
}

fn c5_naimark() -> Outcome {
    let thetas = [PI / 4.0, PI, 7.0 * PI / 4.0];
    let mut pairs = Vec::new();
    for n in [0usize, 3, 10] {
        for k in -8i64..=8 {
            let np = n as i64 + k;
            if np >= 0 {
                pairs.push((n, np as usize));
            }
        }
    }
    let worst_at = |nu: usize, theta: f64| {
        pairs
            .iter()
            .map(|&(n, np)| naimark_check(dim(nu), n, np, theta).unwrap().error)
            .fold(0.0, f64::max)
    };
    let mut bound_ok = true;
    let mut ratio_ok = true;
    let mut parts = Vec::new();
    for &theta in &thetas {
        let e14 = worst_at(1 << 14, theta);
        let e15 = worst_at(1 << 15, theta);
        let ratio = e15 / e14;
        bound_ok &= e14 <= 1e-3;
        ratio_ok &= (ratio / 0.5 - 1.0).abs() <= 0.15;
        parts.push(format!("θ={theta:.4}: err(2^14)={e14:.3e} ratio={ratio:.4}"));
    }
    outcome(bound_ok && ratio_ok, parts.join("; "))
}

fn c6_risk_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let w = ErrorFunction::Sin2;
    let mut bound_err: f64 = 0.0;
    let mut beaten = 0;
    for _ in 0..20 {
        let psi = random_state(&mut rng, 8);
        let best = bayes_risk(&optimal_pom(&psi).unwrap(), &psi, &w).unwrap();
        bound_err = bound_err.max((best - sin2_risk_lower_bound(&psi)).abs());
        for _ in 0..200 {
            let beta: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..TAU)).collect();
            let other = evaluate_risk(&POMKernel::from_phases(beta).unwrap(), &psi, &w).unwrap().reduced;
            if other < best - 1e-12 {
                beaten += 1;
            }
        }
    }
    let mut recovery: f64 = 0.0;
    for i in 0..3 {
        let psi = random_state(&mut rng, 8);
        let alpha = state_phases(&psi);
        let opts = OptimizerOptions { seed: 100 * i, ..OptimizerOptions::for_dim(8) };
        let res = optimize_covariant_pom(&psi, &w, &opts).unwrap();
        for n in 0..8 {
            let d = circular_distance(res.params.beta[n] - res.params.beta[0], alpha[n] - alpha[0]);
            recovery = recovery.max(d);
        }
    }
    let pass = bound_err <= 1e-12 && beaten == 0 && recovery <= 1e-5;
    outcome(
        pass,
        format!("closed-form gap {bound_err:.1e}; random kernels beating optimum {beaten}/4000; phase recovery error {recovery:.1e}"),
    )
}

fn c7_worked_risk() -> Outcome {
    let psi = StateVector::from_amplitudes(vec![Complex64::new(FRAC_1_SQRT_2, 0.0); 2]).unwrap();
    let r = evaluate_risk(&phase_pom(dim(2)), &psi, &ErrorFunction::Sin2).unwrap();
    let pass = (r.reduced - 1.0).abs() <= 1e-6 && (r.double_quadrature - 1.0).abs() <= 1e-6;
    outcome(pass, format!("closed form {:.9}, double quadrature {:.9}", r.reduced, r.double_quadrature))
}

fn c8_covariance() -> Outcome {
    let s = 16;
    let p = phase_pom(dim(s));
    let step = TAU / s as f64;
    let intervals = [
        PhaseInterval::new(0.0, PI).unwrap(),
        PhaseInterval::new(1.5 * PI, TAU).unwrap(),
        PhaseInterval::new(0.3, 2.9).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for k in 0..s {
        for b in &intervals {
            worst = worst.max(covariance_transform_check(&p, step * k as f64, *b).unwrap());
        }
    }
    outcome(worst <= 1e-9, format!("max residual {worst:.2e} over θ0 = kΔθ, k=0..15, incl. wrap-around"))
}

fn c9_classical_limit() -> Outcome {
    let model = HyperfiniteModel::new(1 << 16, 64).unwrap();
    let top = (1 << 16) - 1;
    let diag = macroscopic_matrix_element(&MatrixElementGenerator::n_over_n_plus_one(), model, top, top).unwrap();
    let g = MatrixElementGenerator::sg_cos();
    let est = cauchy_limit_estimate(&extend_to_d(&g, model), &ProbeSet::default_for(&g, model).unwrap(), 1e-3).unwrap();
    let diag_err = (diag.value.re - 1.0).abs();
    let pass = diag.in_band && diag_err <= 2e-5 && !est.cauchy && est.residual == 0.5;
    outcome(pass, format!("|T(ν-1,ν-1) - 1| = {diag_err:.2e}; sg_cos residual {} (cauchy={})", est.residual, est.cauchy))
}

fn c10_round_trip_and_fast_path() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let t = DenseOperator::from_fn(dim(32), |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).unwrap();
    let g = MatrixElementGenerator::from_matrix("random", &t);
    let model14 = HyperfiniteModel::new(1 << 14, 64).unwrap();
    let back = compress_to_h(&extend_to_d(&g, model14), 32).unwrap();
    let bit_exact = back.matrix() == t.matrix();

    // fast vs dense at s = 256
    let s = 256;
    let psi = random_state(&mut rng, s);
    let f = PhaseFunction::Theta;
    let op = function_of_phase(dim(s), f.grid_values(dim(s))).unwrap();
    let dense = op.to_dense().apply(&psi).unwrap();
    let fast = op.apply(&psi).unwrap();
    let small_err = dense
        .amplitudes()
        .iter()
        .zip(fast.amplitudes())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);

    // fast path at ν = 2^16 on a state supported in the first 256 levels,
    // checked against element-wise sums on that block
    let nu = 1usize << 16;
    let mut amps = vec![Complex64::new(0.0, 0.0); nu];
    amps[..s].copy_from_slice(psi.amplitudes());
    let big = StateVector::from_amplitudes(amps).unwrap();
    let values = f.grid_values(dim(nu));
    let (image, largest) = largest_allocation(|| apply_phase_function(&big, &values).unwrap());
    let big_op = function_of_phase(dim(nu), values).unwrap();
    let mut by_offset = vec![Complex64::new(0.0, 0.0); 2 * s - 1];
    for (i, slot) in by_offset.iter_mut().enumerate() {
        let k = i as i64 - (s as i64 - 1);
        *slot = if k >= 0 {
            big_op.element(k as usize, 0).unwrap()
        } else {
            big_op.element(0, (-k) as usize).unwrap()
        };
    }
    let mut big_err: f64 = 0.0;
    for n in 0..s {
        let direct: Complex64 = (0..s).map(|np| by_offset[n + s - 1 - np] * psi.amplitudes()[np]).sum();
        big_err = big_err.max((direct - image.amplitudes()[n]).norm());
    }
    let budget = 256 * nu;
    let pass = bit_exact && small_err <= 1e-10 && big_err <= 1e-10 && largest <= budget;
    outcome(
        pass,
        format!(
            "round trip bit-exact={bit_exact}; s=256 fast vs dense {small_err:.1e}; ν=2^16 fast vs element sums {big_err:.1e}; largest allocation {largest} B (budget {budget} B, ν×ν would be {} B)",
            nu * nu * 16
        ),
    )
}

fn c11_cli_reproducible() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let bin = env!("CARGO_BIN_EXE_phasekit");
    let runs: [&[&str]; 3] = [
        &["risk-opt", "--dim", "6", "--state", "coherent:0.6,-0.3", "--seed", "7"],
        &["phase-dist", "--dim", "12", "--state", "coherent:1.0,0.5", "--grid", "512"],
        &["naimark", "--dims", "1024,2048,4096", "--pair", "2,6", "--format", "json"],
    ];
    let mut identical = true;
    let mut files = 0;
    for (i, args) in runs.iter().enumerate() {
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("run{i}"));
            let status = Command::new(bin)
                .args(*args)
                .args(["--out", out.to_str().unwrap()])
                .output()
                .unwrap()
                .status;
            if !status.success() {
                return outcome(false, format!("{args:?} exited with {status} on repetition {rep}"));
            }
            let echo = dir.path().join(format!("run{i}.config.json"));
            bytes.push((fs::read(&out).unwrap(), fs::read(&echo).unwrap()));
        }
        identical &= bytes[0] == bytes[1];
        files += 2;
    }
    outcome(identical, format!("{files} output/echo files compared across two runs"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 SG algebra", 1, c1_sg_algebra),
        ("2 SG = measurement moments", 1, c2_sg_moments),
        ("3 weak-limit corner", 5, c3_weak_limit_corner),
        ("4 Pegg-Barnett convergence rate", 30, c4_pb_convergence),
        ("5 Naimark identity", 30, c5_naimark),
        ("6 risk optimality", 60, c6_risk_optimality),
        ("7 worked risk value", 5, c7_worked_risk),
        ("8 covariance", 5, c8_covariance),
        ("9 classical limit", 5, c9_classical_limit),
        ("10 round trip and fast path", 10, c10_round_trip_and_fast_path),
        ("11 CLI reproducibility", 10, c11_cli_reproducible),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(budget);
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} [{name}] {} ({:.2}s of {budget}s)",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
