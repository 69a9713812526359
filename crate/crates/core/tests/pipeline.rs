use std::io::Write;
use std::path::Path;

use hlr::data::{load_csv, read_csv, save_csv, Dataset, MultiViewSample, Seed};
use hlr::experiment::{run, ExperimentConfig, Report, Task};
use hlr::hlr::fit;
use hlr::kernels::KernelSpec;
use hlr::manifold::{assemble_manifold, AdjacencySpec, ViewManifold};
use hlr::model_io::load_model;
use hlr::HlrConfig;

fn resolve(text: &str) -> hlr::experiment::ResolvedConfig {
    ExperimentConfig::from_toml(text).unwrap().resolve().unwrap()
}

fn write_rows(path: &Path, rows: usize, labelled: bool) {
    let mut f = std::fs::File::create(path).unwrap();
    for i in 0..rows {
        let t = i as f64 / rows as f64;
        let (a, b, c) = (t, (3.0 * t).sin(), (t * t) - 0.3);
        if labelled {
            writeln!(f, "{a},{b},{c},{}", 1.0 + a - b + 0.5 * c).unwrap();
        } else {
            writeln!(f, "{a},{b},{c}").unwrap();
        }
    }
}

#[test]
fn noiseless_linear_recovery() {
    let r = run(&resolve(
        "task = \"synth-linear\"\n[hlr]\nlambda = 1e-10\ngamma = 0.0\nrefinements = 1\n[data]\nn = 100\nnoise_std = 0.0\n",
    ))
    .unwrap();
    assert!(r.mean("hlr_reconstruction_mae").unwrap() <= 1e-6);
    assert_eq!(r.runs.len(), 1);
    assert_eq!(r.config.data.n, Some(100));
}

#[test]
fn noisy_curve_reports_dice_per_repetition() {
    let r = run(&resolve("task = \"noisy-curve\"\nrepetitions = 3\n[data]\nn = 150\nrate = 0.1\n")).unwrap();
    assert_eq!(r.runs.len(), 3);
    assert!(r.runs.iter().all(|x| x.metrics["dice"].is_some()));
    assert_eq!(r.aggregate["dice"].count, 3);
    assert_eq!(r.mean("corrupted"), Some(15.0));
}

#[test]
fn fit_then_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let queries = dir.path().join("queries.csv");
    let model = dir.path().join("model.json");
    let fit_pred = dir.path().join("fit.csv");
    let pred = dir.path().join("pred.csv");
    write_rows(&train, 30, true);
    write_rows(&queries, 30, false);
    let fit_report = run(&resolve(&format!(
        "task = \"fit\"\nmodel = {model:?}\npredictions = {fit_pred:?}\nkernels = [{{ kind = \"gaussian\", bandwidth = 0.5 }}, {{ kind = \"linear\" }}]\n[data]\ntrain = {train:?}\nview_dims = [1, 2]\n"
    )))
    .unwrap();
    assert!(fit_report.runs[0].metrics["mae"].unwrap().is_finite());
    let r = run(&resolve(&format!(
        "task = \"predict\"\nmodel = {model:?}\npredictions = {pred:?}\n[data]\ntest = {queries:?}\nlabelled = false\n"
    )))
    .unwrap();
    assert!(r.runs[0].metrics.is_empty());

    let loaded = load_model(&model).unwrap();
    let ds = load_csv(&queries, &[1, 2], false).unwrap();
    let text = std::fs::read_to_string(&pred).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("truth,prediction"));
    for (line, s) in lines.zip(ds.samples()) {
        let (truth, p) = line.split_once(',').unwrap();
        assert!(truth.is_empty());
        assert_eq!(p.parse::<f64>().unwrap().to_bits(), loaded.predict(s).unwrap().to_bits());
    }
    // the training predictions written by fit match the loaded model bit for bit
    let train_ds = load_csv(&train, &[1, 2], true).unwrap();
    let text = std::fs::read_to_string(&fit_pred).unwrap();
    for (line, s) in text.lines().skip(1).zip(train_ds.samples()) {
        let p: f64 = line.split_once(',').unwrap().1.parse().unwrap();
        assert_eq!(p.to_bits(), loaded.predict(s).unwrap().to_bits());
    }
}

#[test]
fn predict_with_wrong_view_dims_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let model = dir.path().join("model.json");
    write_rows(&train, 12, true);
    run(&resolve(&format!(
        "task = \"fit\"\nmodel = {model:?}\n[data]\ntrain = {train:?}\nview_dims = [3]\n"
    )))
    .unwrap();
    let narrow = dir.path().join("narrow.csv");
    std::fs::write(&narrow, "0.1,0.2\n0.3,0.4\n").unwrap();
    let err = run(&resolve(&format!(
        "task = \"predict\"\nmodel = {model:?}\n[data]\ntest = {narrow:?}\nlabelled = false\n"
    )))
    .unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn folds_bench_structure() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let pred = dir.path().join("pred.csv");
    write_rows(&train, 25, true);
    let r = run(&resolve(&format!(
        "task = \"folds-bench\"\npredictions = {pred:?}\n[data]\ntrain = {train:?}\nview_dims = [3]\nfolds = 5\n"
    )))
    .unwrap();
    assert_eq!(r.runs.len(), 5);
    assert_eq!(r.aggregate["mae"].count, 5);
    assert_eq!(std::fs::read_to_string(&pred).unwrap().lines().count(), 26);
    let bad = ExperimentConfig::from_toml(&format!(
        "task = \"folds-bench\"\n[data]\ntrain = {train:?}\nview_dims = [3]\nfolds = 30\n"
    ))
    .unwrap()
    .resolve()
    .unwrap();
    assert_eq!(run(&bad).unwrap_err().exit_code(), 3);
}

#[test]
fn report_json_round_trip_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let cfg = resolve(&format!(
        "task = \"noisy-binary\"\nseed = 5\nrepetitions = 2\noutput = {out:?}\n[data]\nn = 60\nn_test = 100\n"
    ));
    let r = run(&cfg).unwrap();
    let back = Report::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.config.task, Task::NoisyBinary);
    assert_eq!(back.config.hlr, r.config.hlr);
    assert_eq!(back.config.data.rho_plus, Some(0.2));
    assert_eq!(back.format, "hlr-report");
}

#[test]
fn semi_supervised_fit_uses_unlabelled_inputs() {
    let samples: Vec<MultiViewSample> = (0..40)
        .map(|i| {
            let t = i as f64 / 40.0;
            MultiViewSample::new(vec![vec![t], vec![t.cos(), t.sin()]])
        })
        .collect();
    let labels: Vec<f64> = samples.iter().take(10).map(|s| s.views[0][0] * 2.0).collect();
    let ds = Dataset::new(samples, labels).unwrap();
    let kernels = [KernelSpec::Gaussian { bandwidth: 0.3 }, KernelSpec::Linear];
    let manifold = assemble_manifold(&ds, &[ViewManifold::Graph(AdjacencySpec::default()), ViewManifold::Zero]).unwrap();
    let default_c = fit(&ds, &kernels, &manifold, &HlrConfig::paper_uci(2)).unwrap();
    let explicit_c = fit(&ds, &kernels, &manifold, &HlrConfig::paper_uci(2).with_view_weights(vec![0.5, 0.5])).unwrap();
    assert_eq!(default_c.w.nrows(), 40);
    assert_eq!(default_c.w, explicit_c.w);
    // unlabelled coefficients are driven only by the manifold coupling
    assert!(default_c.w.view((10, 0), (30, 1)).iter().any(|v| *v != 0.0));
    assert!(default_c.w.view((10, 1), (30, 1)).iter().all(|v| *v == 0.0));
}

#[test]
fn csv_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds.csv");
    let ds = hlr::data::gen_linear_uniform(15, 4, &[0.25; 4], 0.1, Seed(2)).unwrap();
    let ds = hlr::data::mask_labels(&ds, &hlr::data::Keep::Fraction(0.6), Seed(3)).unwrap();
    save_csv(&ds, &path).unwrap();
    let back = load_csv(&path, &[4], true).unwrap();
    // unlabelled rows move after the labelled ones
    assert_eq!(back.n_labelled(), ds.n_labelled());
    assert_eq!(back.labelled_values(), ds.labelled_values());
    let err = read_csv("1,2\n3,x\n".as_bytes(), &[1], true).unwrap_err();
    assert!(matches!(err, hlr::HlrError::Parse { row: 2, column: 2, .. }), "{err}");
}
