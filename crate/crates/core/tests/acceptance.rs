//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines always
//! reach the terminal.

mod common;

use std::io::Write as _;
use std::time::{Duration, Instant};

use common::{max_retained_error, random_problem, Problem, ProblemShape};
use hlr::baselines::{finite_difference_gradient, kernel_ridge};
use hlr::data::{Dataset, MultiViewSample};
use hlr::experiment::{run, ExperimentConfig, Report};
use hlr::hlr::{
    fit_with_gram, in_sample_predictions, initial_solve, objective_gradient, objective_value, refine_step,
    stationarity_residual, HlrConfig, HlrState,
};
use hlr::kernels::build_gram;
use hlr::loss::mre;
use hlr::manifold::ManifoldOperator;
use hlr::HlrError;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn flat_to_matrix(v: &DVector<f64>, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |i, a| v[i * m + a])
}

fn psi_bound(p: &Problem, state: &HlrState) -> (f64, f64) {
    let retained = state.retained(&p.dataset).unwrap();
    let psi = stationarity_residual(&state.w, &retained, &p.gram, &p.manifold, &p.config, state.xi).unwrap();
    (psi.amax(), 1e-8 * (1.0 + state.w.amax()))
}

/// Runs the refinement loop by hand, calling `visit` on every state.
fn walk(p: &Problem, mut visit: impl FnMut(&HlrState)) -> Vec<HlrState> {
    let mut state = initial_solve(&p.dataset, &p.gram, &p.manifold, &p.config).unwrap();
    visit(&state);
    let mut states = vec![state.clone()];
    for _ in 0..p.config.refinements {
        let out = refine_step(&state, &p.dataset, &p.gram, &p.manifold, &p.config).unwrap();
        if out.termination.is_some() {
            break;
        }
        state = out.state;
        visit(&state);
        states.push(state.clone());
    }
    states
}

fn criterion_1() -> Outcome {
    let shape = ProblemShape {
        max_n: 30,
        max_views: 3,
        outlier_rate: 0.15,
    };
    let results: Vec<(f64, usize, bool)> = (0..200u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + k);
            let p = random_problem(&mut rng, &shape);
            let mut worst_ratio: f64 = 0.0;
            let mut ok = true;
            let states = walk(&p, |s| {
                let (psi, bound) = psi_bound(&p, s);
                worst_ratio = worst_ratio.max(psi / bound);
                ok &= psi <= bound;
            });
            (worst_ratio, states.len(), ok)
        })
        .collect();
    let checked: usize = results.iter().map(|r| r.1).sum();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let failures = results.iter().filter(|r| !r.2).count();
    outcome(
        failures == 0,
        format!("{checked} states over 200 instances, worst ‖ψ‖∞/bound = {worst:.2e}, {failures} failing instances"),
    )
}

fn criterion_2() -> Outcome {
    let shape = ProblemShape {
        max_n: 12,
        max_views: 3,
        outlier_rate: 0.1,
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut seed = 5000u64;
    while checked < 50 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, &shape);
        let (n, m) = (p.dataset.n(), p.dataset.n_views());
        let w = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let f = in_sample_predictions(&p.gram, &p.config.view_weights, &w).unwrap();
        let errors: Vec<f64> = p
            .dataset
            .labelled_indices()
            .into_iter()
            .map(|i| (p.dataset.label(i).unwrap() - f[i]).abs())
            .collect();
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        let xi = sorted[sorted.len() / 2].max(1e-3) * rng.random_range(0.7..1.3);
        // a coordinate step of h moves a prediction by at most h·max_row Σ|c_α G^α_ij|
        let lip = (0..n)
            .map(|i| {
                (0..m)
                    .map(|a| p.config.view_weights[a].abs() * p.gram.view(a).row(i).amax())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if errors.iter().any(|e| (e - xi).abs() <= 10.0 * h * lip.max(1.0)) {
            continue;
        }
        let analytic = objective_gradient(&w, &p.dataset, &p.gram, &p.manifold, &p.config, xi).unwrap();
        let x0 = DVector::from_fn(n * m, |k, _| w[(k / m, k % m)]);
        let numeric = finite_difference_gradient(
            |x| objective_value(&flat_to_matrix(x, n, m), &p.dataset, &p.gram, &p.manifold, &p.config, xi),
            &x0,
            h,
        )
        .unwrap();
        let rel = (&numeric - &analytic).amax() / analytic.amax().max(1.0);
        worst = worst.max(rel);
        checked += 1;
    }
    outcome(worst <= 1e-5, format!("50 non-kink points, worst relative deviation {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let shape = ProblemShape {
        max_n: 30,
        max_views: 3,
        outlier_rate: 0.2,
    };
    let results: Vec<(bool, bool, usize)> = (0..100u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(9000 + k);
            let p = random_problem(&mut rng, &shape);
            let mut bounded = true;
            let states = walk(&p, |s| {
                let retained = s.retained(&p.dataset).unwrap();
                bounded &= max_retained_error(&p, &retained, &s.w) <= s.xi;
            });
            let decreasing = states.windows(2).all(|w| w[1].xi < w[0].xi);
            let model = fit_with_gram(&p.dataset, &p.kernels, &p.gram, &p.manifold, &p.config).unwrap();
            let history_decreasing = model.xi_history.windows(2).all(|w| w[1] < w[0]);
            (bounded, decreasing && history_decreasing, states.len() - 1)
        })
        .collect();
    let refinements: usize = results.iter().map(|r| r.2).sum();
    let bad_bound = results.iter().filter(|r| !r.0).count();
    let bad_decrease = results.iter().filter(|r| !r.1).count();
    outcome(
        bad_bound == 0 && bad_decrease == 0 && refinements > 0,
        format!(
            "100 fits, {refinements} completed refinements, {bad_bound} with an error above ξ, {bad_decrease} non-decreasing histories"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(20_000 + k);
        let n = rng.random_range(2..=40);
        let d = rng.random_range(1..=5);
        let samples: Vec<MultiViewSample> = (0..n)
            .map(|_| MultiViewSample::single((0..d).map(|_| rng.random_range(-2.0..2.0)).collect()))
            .collect();
        let ell = rng.random_range(1..=n);
        let labels: Vec<f64> = (0..ell).map(|_| rng.random_range(-3.0..3.0)).collect();
        let ds = Dataset::new(samples, labels).unwrap();
        let kernel = common::random_kernel(&mut rng);
        let lambda = 10f64.powf(rng.random_range(-4.0..0.0));
        let cfg = HlrConfig::new(lambda, 0.0, 0.1, 0, 1);
        let gram = build_gram(std::slice::from_ref(&kernel), ds.samples()).unwrap();
        let model = fit_with_gram(&ds, std::slice::from_ref(&kernel), &gram, &ManifoldOperator::zeros(n, 1), &cfg)
            .unwrap();
        let ridge = kernel_ridge(&ds, &kernel, lambda).unwrap();
        let scale = ridge.alpha.amax().max(f64::MIN_POSITIVE);
        let mut dev: f64 = 0.0;
        for i in 0..n {
            let expect = if i < ell { ridge.alpha[i] } else { 0.0 };
            dev = dev.max((model.w[(i, 0)] - expect).abs());
        }
        worst = worst.max(dev / scale);
    }
    outcome(worst <= 1e-10, format!("50 instances, worst relative coefficient deviation {worst:.2e}"))
}

fn report(text: &str) -> Report {
    run(&ExperimentConfig::from_toml(text).unwrap().resolve().unwrap()).unwrap()
}

fn criterion_5() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut slowest: f64 = 0.0;
    for n in [50, 100, 500, 1000] {
        let clean = report(&format!(
            "task = \"synth-linear\"\nrepetitions = 10\n[data]\nn = {n}\nd = 10\nnoise_std = 0.0\n"
        ));
        let noisy = report(&format!(
            "task = \"synth-linear\"\nrepetitions = 10\n[data]\nn = {n}\nd = 10\nnoise_std = {}\n",
            0.1f64.sqrt()
        ));
        let (hc, qc) = (
            clean.mean("hlr_reconstruction_mae").unwrap(),
            clean.mean("quadratic_reconstruction_mae").unwrap(),
        );
        let (hn, qn) = (
            noisy.mean("hlr_reconstruction_mae").unwrap(),
            noisy.mean("quadratic_reconstruction_mae").unwrap(),
        );
        let clean_ok = (hc - qc).abs() <= 0.1 * qc;
        let noisy_ok = hn <= qn;
        pass &= clean_ok && noisy_ok;
        for r in [&clean, &noisy] {
            slowest = slowest.max(r.timings.run_seconds.iter().copied().fold(0.0, f64::max));
        }
        parts.push(format!(
            "n={n}: clean {hc:.4} vs {qc:.4}{}, noisy {hn:.4} vs {qn:.4}{}",
            if clean_ok { "" } else { " (off by >10%)" },
            if noisy_ok { "" } else { " (HLR worse)" }
        ));
    }
    // a repetition fits both learners, so this bounds a single n=1000 fit
    pass &= slowest < 60.0;
    parts.push(format!("slowest n=1000 repetition {slowest:.1}s"));
    outcome(pass, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut means = Vec::new();
    for rate in [0.01, 0.1, 0.25] {
        let r = report(&format!(
            "task = \"noisy-curve\"\nrepetitions = 10\nkernels = [{{ kind = \"linear\" }}]\n[data]\nn = 500\nrate = {rate}\n"
        ));
        means.push((r.mean("dice").unwrap(), r.mean("hlr_reconstruction_mae").unwrap()));
    }
    let elapsed = start.elapsed();
    let pass = means[0].0 >= 0.95
        && means[1].0 >= 0.95
        && (means[2].0 - 0.89).abs() <= 0.15
        && means[1].1 <= 1.5 * means[0].1
        && elapsed < Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "Dice 1%/10%/25% = {:.3}/{:.3}/{:.3}, error 1%/10%/25% = {:.4}/{:.4}/{:.4}, {:.1}s",
            means[0].0,
            means[1].0,
            means[2].0,
            means[0].1,
            means[1].1,
            means[2].1,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    let r = report("task = \"noisy-binary\"\nrepetitions = 10\n[data]\nrho_plus = 0.2\nrho_minus = 0.2\n");
    let (h, q) = (r.mean("hlr_accuracy").unwrap(), r.mean("quadratic_accuracy").unwrap());
    outcome(h >= q, format!("clean-test accuracy HLR {h:.4} vs quadratic {q:.4}"))
}

fn write_csv(path: &std::path::Path, rows: &[(Vec<f64>, f64)]) {
    let mut f = std::fs::File::create(path).unwrap();
    writeln!(f, "a,b,c,target").unwrap();
    for (x, y) in rows {
        let xs: Vec<String> = x.iter().map(f64::to_string).collect();
        writeln!(f, "{},{y}", xs.join(",")).unwrap();
    }
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let rows: Vec<(Vec<f64>, f64)> = (0..60)
        .map(|i| {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            let y = if i % 7 == 0 { 0.0 } else { 1.0 + x[0] - 0.5 * x[1] + x[2] * x[2] };
            (x, y)
        })
        .collect();
    let with_zeros = dir.path().join("zeros.csv");
    let positive = dir.path().join("positive.csv");
    write_csv(&with_zeros, &rows);
    let shifted: Vec<(Vec<f64>, f64)> = rows.iter().map(|(x, y)| (x.clone(), y + 1.0)).collect();
    write_csv(&positive, &shifted);
    let cfg = |p: &std::path::Path| {
        format!(
            "task = \"folds-bench\"\nkernels = [{{ kind = \"gaussian\", bandwidth = 0.7 }}]\n[data]\ntrain = {:?}\nview_dims = [3]\nfolds = 5\n",
            p.to_str().unwrap()
        )
    };
    let z = report(&cfg(&with_zeros));
    let p = report(&cfg(&positive));
    let finite = |r: &Report| {
        r.runs.len() == 5
            && r.runs.iter().all(|run| {
                ["mae", "mse"]
                    .iter()
                    .all(|k| run.metrics[*k].is_some_and(f64::is_finite))
            })
    };
    let diverges = z
        .runs
        .iter()
        .any(|r| r.metrics["mre"].is_none() && r.warnings.iter().any(|w| w.contains("diverges")));
    let direct = matches!(mre(&[1.0, 0.0], &[1.0, 0.5]), Err(HlrError::Divergence { index: 1 }));
    let positive_mre = p.runs.iter().all(|r| r.metrics["mre"].is_some_and(f64::is_finite));
    outcome(
        finite(&z) && finite(&p) && diverges && direct && positive_mre,
        format!(
            "5 folds each; MAE/MSE finite: {}, zero-target MRE flagged: {diverges}, mre() divergence error: {direct}, positive-target MRE finite: {positive_mre}",
            finite(&z) && finite(&p)
        ),
    )
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("train.csv");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<(Vec<f64>, f64)> = (0..40)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = x[0] * 2.0 - x[2] + 0.5;
            (x, y)
        })
        .collect();
    write_csv(&csv, &rows);
    let model = dir.path().join("model.json");
    let configs = [
        "task = \"synth-linear\"\nseed = 11\nrepetitions = 4\n[data]\nn = 80\nnoise_std = 0.3\n".to_string(),
        "task = \"noisy-curve\"\nseed = 12\nrepetitions = 4\n[data]\nn = 120\nrate = 0.2\n".to_string(),
        "task = \"noisy-binary\"\nseed = 13\nrepetitions = 4\n[data]\nn = 100\n".to_string(),
        format!(
            "task = \"folds-bench\"\n[data]\ntrain = {:?}\nview_dims = [1, 2]\nfolds = 4\n",
            csv.to_str().unwrap()
        ),
        format!(
            "task = \"fit\"\nmodel = {:?}\n[data]\ntrain = {:?}\nview_dims = [2, 1]\n",
            model.to_str().unwrap(),
            csv.to_str().unwrap()
        ),
    ];
    let mut identical = 0;
    for text in &configs {
        let mut outputs = Vec::new();
        for threads in [1, 3] {
            let mut cfg = ExperimentConfig::from_toml(text).unwrap();
            cfg.threads = Some(threads);
            let mut resolved = cfg.resolve().unwrap();
            let r = run(&resolved).unwrap();
            resolved.threads = 0;
            let mut echo = r.clone();
            echo.config = resolved;
            let model_bytes = std::fs::read(&model).unwrap_or_default();
            outputs.push((echo.deterministic_part().unwrap(), model_bytes));
        }
        if outputs[0] == outputs[1] {
            identical += 1;
        }
    }
    outcome(
        identical == configs.len(),
        format!("{identical}/{} configurations byte-identical across reruns (1 and 3 threads)", configs.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("exactness of every refinement state", criterion_1, Duration::from_secs(60)),
        ("analytic gradient vs finite differences", criterion_2, Duration::from_secs(30)),
        ("threshold monotonicity and error bound", criterion_3, Duration::from_secs(60)),
        ("reduction to kernel ridge", criterion_4, Duration::from_secs(10)),
        ("synthetic linear comparison with the quadratic baseline", criterion_5, Duration::MAX),
        ("noisy curve fitting", criterion_6, Duration::from_secs(300)),
        ("binary labels with symmetric flips", criterion_7, Duration::MAX),
        ("fold benchmark metrics", criterion_8, Duration::MAX),
        ("determinism", criterion_9, Duration::MAX),
    ];
    let mut failed = 0;
    for (k, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut o = check();
        let elapsed = start.elapsed();
        if elapsed > *budget {
            o.pass = false;
            o.detail.push_str(&format!(" (over the {}s budget)", budget.as_secs()));
        }
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {}: {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            k + 1,
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
