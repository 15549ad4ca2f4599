//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vitl_core::data::{build_single, EmotionSelector, Mode};
use vitl_core::eval::{
    angular_path, cross_validate, default_bandwidths, fit_trajectories, generate_synthetic, identity_split, log_spaced,
    missing_data_sweep, radial_path, rank_sweep, test_error, GridSpec, Hyper, OutputChoice, SplitPlan, SyntheticTask,
};
use vitl_core::kernel::{build_gram_dense, emotion_gram, input_gram, squared_distance, GramMatrix};
use vitl_core::model::output_matrix;
use vitl_core::solver::{objective, objective_gradient, solve_kron, solve_ridge_identity, solve_sylvester};
use vitl_core::{fit, EmotionPoint, KernelSpec, LandmarkVector, OutputStructure, TripletDataset, VitlModel};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn main() {
    let checks: [(&str, Check); 9] = [
        ("solver oracle equivalence", solver_equivalence),
        ("optimality", optimality),
        ("interpolation limit", interpolation),
        ("synthetic recovery", synthetic_recovery),
        ("low-rank structure", low_rank),
        ("masking robustness", masking),
        ("reparameterization invariance", reparameterization),
        ("path generators", paths),
        ("kdef conditional", kdef),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match v {
            Verdict::Pass(d) => println!("PASS {name} ({secs:.2}s): {d}"),
            Verdict::Skip(d) => println!("SKIP {name}: {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("FAIL {name} ({secs:.2}s): {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn rand_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let a = &b * b.transpose() + DMatrix::identity(d, d) * 0.1;
    (&a + a.transpose()) * 0.5
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

struct Instance {
    data: TripletDataset,
    spec: KernelSpec,
    lambda: f64,
}

/// Random shared-grid instance with `t ≤ 5, m ≤ 4, d ≤ 6`.
fn instance(rng: &mut ChaCha8Rng) -> Instance {
    let (t, m, d) = (rng.random_range(1..=5), rng.random_range(1..=4), rng.random_range(1..=6));
    let grid: Vec<EmotionPoint> = (0..m).map(|_| EmotionPoint::new(rand_vec(rng, 2)).unwrap()).collect();
    let inputs = (0..t).map(|_| LandmarkVector::new(rand_vec(rng, d)).unwrap()).collect();
    let outputs = (0..t).map(|_| (0..m).map(|_| LandmarkVector::new(rand_vec(rng, d)).unwrap()).collect()).collect();
    let data = TripletDataset::new(inputs, outputs, vec![grid; t]).unwrap();
    let spec = KernelSpec::gaussian(rng.random_range(0.2..2.0), rng.random_range(0.2..2.0)).unwrap();
    let lambda = 10f64.powf(rng.random_range(-3.0..0.0));
    Instance { data, spec, lambda }
}

fn solver_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let (mut worst_ridge, mut worst_kron) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let inst = instance(&mut rng);
        let d = inst.data.d();
        let y = output_matrix(&inst.data);
        let dense = build_gram_dense(inst.data.inputs(), inst.data.emotions(), &inst.spec).unwrap();
        let ridge = solve_ridge_identity(&dense, &y, inst.lambda).unwrap();
        let syl = solve_sylvester(&dense, &y, &DMatrix::identity(d, d), inst.lambda).unwrap();
        worst_ridge = worst_ridge.max(rel(&syl, &ridge));

        let a = rand_spd(&mut rng, d);
        let kx = input_gram(inst.data.inputs(), inst.spec.gamma_x());
        let kt = emotion_gram(&inst.data.emotions()[0], inst.spec.gamma_theta());
        let kron = solve_kron(&kx, &kt, &y, &a, inst.lambda).unwrap();
        let dense_a = solve_sylvester(&dense, &y, &a, inst.lambda).unwrap();
        worst_kron = worst_kron.max(rel(&kron, &dense_a));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_ridge <= 1e-9 && worst_kron <= 1e-9 && secs < 10.0,
        format!("max rel err sylvester/ridge {worst_ridge:.2e}, kron/dense {worst_kron:.2e} (≤ 1e-9); {secs:.2}s (< 10s)"),
    )
}

fn optimality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2000);
    let mut worst_grad = 0.0f64;
    for k in 0..50 {
        let inst = instance(&mut rng);
        let d = inst.data.d();
        let spec = match k % 3 {
            0 => inst.spec.clone(),
            _ => inst.spec.with_output(OutputStructure::Explicit(rand_spd(&mut rng, d))).unwrap(),
        };
        let y = output_matrix(&inst.data);
        for force_dense in [false, true] {
            let model = vitl_core::fit_with(&inst.data, &spec, inst.lambda, vitl_core::FitOptions { force_dense }).unwrap();
            let g = objective_gradient(model.coefficients(), &model.gram().unwrap(), &y, model.a_matrix(), inst.lambda).unwrap();
            worst_grad = worst_grad.max(g.norm() / y.norm());
        }
    }

    let mut worst_fd = 0.0f64;
    let mut frng = ChaCha8Rng::seed_from_u64(2001);
    let inst = instance(&mut frng);
    let d = inst.data.d();
    let a = rand_spd(&mut frng, d);
    let k: GramMatrix = build_gram_dense(inst.data.inputs(), inst.data.emotions(), &inst.spec).unwrap();
    let y = output_matrix(&inst.data);
    let h = 1e-5;
    for _ in 0..5 {
        let c = DMatrix::from_fn(y.nrows(), d, |_, _| frng.random_range(-1.0..1.0));
        let g = objective_gradient(&c, &k, &y, &a, inst.lambda).unwrap();
        let mut fd = DMatrix::zeros(c.nrows(), c.ncols());
        for idx in 0..c.len() {
            let (mut cp, mut cm) = (c.clone(), c.clone());
            cp[idx] += h;
            cm[idx] -= h;
            fd[idx] = (objective(&cp, &k, &y, &a, inst.lambda).unwrap() - objective(&cm, &k, &y, &a, inst.lambda).unwrap()) / (2.0 * h);
        }
        worst_fd = worst_fd.max(rel(&fd, &g));
    }
    verdict(
        worst_grad <= 1e-7 && worst_fd <= 1e-5,
        format!("max ‖∇‖/‖Y‖ {worst_grad:.2e} (≤ 1e-7) over 100 fits; finite differences rel err {worst_fd:.2e} (≤ 1e-5)"),
    )
}

fn interpolation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3000);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let inst = instance(&mut rng);
        // half the instances use per-row emotion anchors (dense path)
        let data = if k % 2 == 0 {
            inst.data
        } else {
            let emotions = (0..inst.data.t())
                .map(|_| (0..inst.data.m()).map(|_| EmotionPoint::new(rand_vec(&mut rng, 2)).unwrap()).collect())
                .collect();
            TripletDataset::new(inst.data.inputs().to_vec(), inst.data.outputs().to_vec(), emotions).unwrap()
        };
        let model = fit(&data, &inst.spec, 1e-12).unwrap();
        let preds = model.predict_dataset(&data).unwrap();
        let ymax = data.outputs().iter().flatten().map(|y| norm(y.as_slice())).fold(0.0, f64::max);
        for (pr, yr) in preds.iter().zip(data.outputs()) {
            for (p, y) in pr.iter().zip(yr) {
                worst = worst.max(squared_distance(p.as_slice(), y.as_slice()).sqrt() / ymax);
            }
        }
    }
    verdict(worst <= 1e-4, format!("max training residual / max ‖y‖ = {worst:.2e} (≤ 1e-4) over 20 instances"))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn neutral() -> Mode {
    Mode::Single(EmotionSelector::Label("neutral".into()))
}

fn plan(seed: u64, n_splits: usize) -> SplitPlan {
    SplitPlan { n_splits, test_fraction: 0.1, fold_count: 6, seed }
}

fn synthetic_recovery() -> Verdict {
    let start = Instant::now();
    let mode = neutral();
    let mut details = Vec::new();
    let mut ok = true;
    for seed in 0..3u64 {
        // noiseless, ground truth in the hypothesis space
        let task = SyntheticTask::new(50, 7, 10, seed);
        let (data, _) = generate_synthetic(&task).unwrap();
        let (train, test) = identity_split(&data, &plan(seed, 1)).unwrap().remove(0);
        let (gx, _) = default_bandwidths(&mode.build(&train).unwrap()).unwrap();
        let h = Hyper { gamma_x: gx, gamma_theta: task.gamma_theta, lambda: 1e-8 };
        let model = fit_trajectories(&train, &mode, &OutputChoice::Identity, &h).unwrap();
        let clean = test_error(&model, &test, &mode).unwrap();
        ok &= clean.mse <= 1e-6;

        // noisy, hyperparameters by cross-validation on the training split
        let sigma = 0.05;
        let task = task.with_noise(sigma);
        let (data, _) = generate_synthetic(&task).unwrap();
        let (train, test) = identity_split(&data, &plan(seed, 1)).unwrap().remove(0);
        let (gx, gt) = default_bandwidths(&mode.build(&train).unwrap()).unwrap();
        let grid = GridSpec::new(
            [0.3, 1.0, 3.0, 10.0].iter().map(|s| s * gx).collect(),
            [0.3, 1.0, 3.0].iter().map(|s| s * gt).collect(),
            log_spaced(1e-6, 1e-1, 6).unwrap(),
        )
        .unwrap();
        let cv = cross_validate(&train, &grid, 6, &mode, &OutputChoice::Identity, seed).unwrap();
        let model = fit_trajectories(&train, &mode, &OutputChoice::Identity, &cv.best.hyper()).unwrap();
        let noisy = test_error(&model, &test, &mode).unwrap();
        let bound = 1.5 * sigma * sigma * 10.0 / 2.0;
        ok &= noisy.mse_half <= bound;
        details.push(format!("seed {seed}: clean mse {:.1e}, noisy mse_half {:.4} (≤ {bound:.4})", clean.mse, noisy.mse_half));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    verdict(ok, format!("{}; {secs:.1}s (< 60s)", details.join("; ")))
}

fn low_rank() -> Verdict {
    let mode = neutral();
    let d = 10;
    let mut within = 0;
    let mut worse = 0;
    let mut ratios = Vec::new();
    for seed in 0..10u64 {
        let task = SyntheticTask::new(50, 7, d, 100 + seed).with_output_rank(3).with_noise(0.05);
        let (data, _) = generate_synthetic(&task).unwrap();
        let p = plan(seed, 3);
        let (train, _) = identity_split(&data, &p).unwrap().remove(0);
        let (gx, gt) = default_bandwidths(&mode.build(&train).unwrap()).unwrap();
        let h = Hyper { gamma_x: gx, gamma_theta: gt, lambda: 1e-3 };
        let sweep = rank_sweep(&data, &p, &mode, &h, &[1, 3, 5, d]).unwrap();
        let at = |r: usize| sweep.summary.iter().find(|s| s.rank == r).unwrap().mse_half_mean;
        let full = at(d);
        if [3, 5].iter().all(|&r| (at(r) - full).abs() <= 0.05 * full) {
            within += 1;
        }
        if at(1) >= 2.0 * full {
            worse += 1;
        }
        ratios.push(format!("{:.3}/{:.2}", at(3) / full, at(1) / full));
    }
    verdict(
        within == 10 && worse >= 8,
        format!("MSE(r≥3) within 5% of MSE(d) on {within}/10 seeds; MSE(1) ≥ 2·MSE(d) on {worse}/10; ratios r3/r1: {}", ratios.join(" ")),
    )
}

fn masking() -> Verdict {
    let mode = neutral();
    let fractions = [1.0, 0.8, 0.6, 0.4, 0.2];
    let mut violations = 0;
    let mut bitwise = true;
    for seed in 0..10u64 {
        let task = SyntheticTask::new(30, 7, 6, 200 + seed).with_noise(0.05);
        let (data, _) = generate_synthetic(&task).unwrap();
        let p = plan(seed, 2);
        let (train, test) = identity_split(&data, &p).unwrap().remove(0);
        let (gx, gt) = default_bandwidths(&mode.build(&train).unwrap()).unwrap();
        let h = Hyper { gamma_x: gx, gamma_theta: gt, lambda: 1e-3 };
        let sweep = missing_data_sweep(&data, &p, &mode, &OutputChoice::Identity, &h, &fractions, 4).unwrap();
        violations += sweep.violations();

        let unmasked = fit_trajectories(&train, &mode, &OutputChoice::Identity, &h).unwrap();
        let e = test_error(&unmasked, &test, &mode).unwrap();
        bitwise &= sweep
            .rows
            .iter()
            .filter(|r| r.split_id == 0 && r.observed_fraction == 1.0)
            .all(|r| r.mse_half.to_bits() == e.mse_half.to_bits() && r.mse.to_bits() == e.mse.to_bits());
    }
    verdict(
        violations <= 1 && bitwise,
        format!("{violations} monotonicity violations over 10 seeds (≤ 1); fraction 1.0 bitwise equal to unmasked: {bitwise}"),
    )
}

fn reparameterization() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4000);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let inst = instance(&mut rng);
        let d = inst.data.d();
        let (a1, a2) = (rand_spd(&mut rng, d), rand_spd(&mut rng, d));
        let m1 = fit(&inst.data, &inst.spec.with_output(OutputStructure::Explicit(a1)).unwrap(), inst.lambda).unwrap();
        let m2 = m1.reparameterize(&a2).unwrap();
        for _ in 0..10 {
            let x = LandmarkVector::new(rand_vec(&mut rng, d)).unwrap();
            let th = EmotionPoint::new(rand_vec(&mut rng, 2)).unwrap();
            let (p1, p2) = (m1.predict(&x, &th).unwrap(), m2.predict(&x, &th).unwrap());
            let scale = norm(p1.as_slice()).max(1e-300);
            worst = worst.max(squared_distance(p1.as_slice(), p2.as_slice()).sqrt() / scale);
        }
    }
    verdict(worst <= 1e-9, format!("max relative prediction change {worst:.2e} (≤ 1e-9) over 10 pairs × 10 queries"))
}

fn paths() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5000);
    let (mut collinear, mut radius) = (0.0f64, 0.0f64);
    let mut exact = true;
    let (data, _) = generate_synthetic(&SyntheticTask::new(10, 5, 6, 9)).unwrap();
    let triplets = build_single(&data, &EmotionSelector::Label("neutral".into())).unwrap();
    let model: VitlModel = fit(&triplets, &KernelSpec::gaussian(0.1, 1.0).unwrap(), 1e-3).unwrap();
    for _ in 0..20 {
        let dir = EmotionPoint::new(rand_vec(&mut rng, 2)).unwrap();
        let radii: Vec<f64> = (0..10).map(|k| k as f64 * 0.15).collect();
        let rp = radial_path(&dir, &radii).unwrap();
        for (p, r) in rp.iter().zip(&radii) {
            let (c, u) = (p.coords(), dir.coords());
            collinear = collinear.max((c[0] * u[1] - c[1] * u[0]).abs());
            radius = radius.max((p.norm() - r).abs());
        }
        let from = EmotionPoint::new(rand_vec(&mut rng, 2)).unwrap();
        let to = EmotionPoint::new(rand_vec(&mut rng, 2)).unwrap();
        let ap = angular_path(&from, &to, 25).unwrap();
        for p in &ap {
            radius = radius.max((p.norm() - from.norm()).abs());
        }
        let x = LandmarkVector::new(rand_vec(&mut rng, 6)).unwrap();
        for path in [&rp, &ap] {
            let curve = model.predict_curve(&x, path).unwrap();
            exact &= curve.iter().zip(path.iter()).all(|(c, t)| *c == model.predict(&x, t).unwrap());
        }
    }
    verdict(
        collinear <= 1e-12 && radius <= 1e-12 && exact,
        format!("max cross product {collinear:.1e}, max radius error {radius:.1e} (≤ 1e-12); predict_curve == predict: {exact}"),
    )
}

/// Runs only when `VITL_KDEF_DATASET` names a preprocessed landmark file.
fn kdef() -> Verdict {
    let Ok(path) = std::env::var("VITL_KDEF_DATASET") else {
        return Verdict::Skip("set VITL_KDEF_DATASET to a preprocessed frontal landmark file to run".into());
    };
    let data = match vitl_core::data::io::load_dataset(&path) {
        Ok(d) => d,
        Err(e) => return Verdict::Fail(format!("cannot load {path}: {e}")),
    };
    let mode = Mode::Joint;
    let p = SplitPlan { n_splits: 10, test_fraction: 0.1, fold_count: 6, seed: 0 };
    let mut mse = Vec::new();
    let mut half = Vec::new();
    for (train, test) in identity_split(&data, &p).unwrap() {
        let (gx, gt) = default_bandwidths(&mode.build(&train).unwrap()).unwrap();
        let grid = GridSpec::new(
            [0.1, 0.3, 1.0, 3.0].iter().map(|s| s * gx).collect(),
            [0.3, 1.0, 3.0].iter().map(|s| s * gt).collect(),
            log_spaced(1e-6, 1e-1, 6).unwrap(),
        )
        .unwrap();
        let cv = cross_validate(&train, &grid, 6, &mode, &OutputChoice::Identity, p.seed).unwrap();
        let model = fit_trajectories(&train, &mode, &OutputChoice::Identity, &cv.best.hyper()).unwrap();
        let e = test_error(&model, &test, &mode).unwrap();
        mse.push(e.mse);
        half.push(e.mse_half);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (a, b) = (mean(&mse), mean(&half));
    let in_range = |v: f64| (0.008..=0.014).contains(&v);
    verdict(in_range(a) || in_range(b), format!("test mse {a:.4}, mse_half {b:.4} (target 0.011 ± 0.003)"))
}
