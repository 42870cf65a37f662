use std::path::Path;
use std::process::{Command, Output};

use epinn::commands::{evaluate_predictor, CHECKPOINT_FILE, CURVE_FILE, DATASET_FILE};
use epinn::manifest::{sha256_file, Manifest};
use epinn_core::metrics::ExactPredictor;
use epinn_core::problems::{generate_dataset, DatasetCounts, NoiseModel, ProblemKind};

fn epinn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epinn"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn rows_with_role(csv: &str, role: &str) -> usize {
    csv.lines().filter(|l| l.ends_with(&format!(",{role}"))).count()
}

const SMALL_NET: &str = "[network]\nhidden_layers = 2\nhidden_width = 8\n";

#[test]
fn generate_writes_the_default_point_counts() {
    let dir = tempfile::tempdir().unwrap();
    for (problem, boundary) in [("poisson1d", 0), ("diffreact2d", 200)] {
        let out = dir.path().join(problem);
        let o = epinn(&["generate", "--problem", problem, "--out", out.to_str().unwrap()], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let csv = std::fs::read_to_string(out.join(DATASET_FILE)).unwrap();
        assert_eq!(rows_with_role(&csv, "obs"), 200);
        assert_eq!(rows_with_role(&csv, "colloc"), 500);
        assert_eq!(rows_with_role(&csv, "boundary"), boundary);
    }
}

#[test]
fn same_seed_gives_identical_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        assert!(epinn(&["generate", "--seed", seed, "--out", out.to_str().unwrap()], dir.path()).status.success());
        Manifest::load(&out).unwrap().unwrap().hash_of(DATASET_FILE).unwrap().to_string()
    };
    let a = run("a", "5");
    assert_eq!(a, run("b", "5"));
    assert_ne!(a, run("c", "6"));
    assert_eq!(a, sha256_file(&dir.path().join("b").join(DATASET_FILE)).unwrap());
}

#[test]
fn regularizer_column_only_for_evidential_methods() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), format!("ensemble_members = 3\n{SMALL_NET}")).unwrap();
    for (method, has_reg, has_member) in
        [("plain_pinn", false, false), ("epinn", true, false), ("epinn_v", true, false), ("deep_ensemble", false, true)]
    {
        let out = dir.path().join(method);
        let o = epinn(
            &["train", "--config", "small.toml", "--method", method, "--epochs", "5", "--out", out.to_str().unwrap()],
            dir.path(),
        );
        assert!(o.status.success(), "{method}: {}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.contains("kappa ="), "{stdout}");
        let curve = std::fs::read_to_string(out.join(CURVE_FILE)).unwrap();
        let header = curve.lines().next().unwrap();
        assert_eq!(header.contains("regularizer"), has_reg, "{method}: {header}");
        assert_eq!(header.starts_with("member,"), has_member, "{method}: {header}");
        assert!(out.join(CHECKPOINT_FILE).exists());
    }
}

#[test]
fn bad_config_exits_1_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "epochs = \"many\"\n").unwrap();
    std::fs::write(dir.path().join("unknown.toml"), "colour = 3\n").unwrap();
    for args in [
        vec!["train", "--config", "bad.toml", "--out", "out1"],
        vec!["train", "--config", "unknown.toml", "--out", "out2"],
        vec!["train", "--method", "svm", "--out", "out3"],
        vec!["generate", "--preset", "table9", "--out", "out4"],
        vec!["train", "--config", "missing.toml", "--out", "out5"],
        vec!["train", "--epochs", "lots", "--out", "out6"],
    ] {
        let o = epinn(&args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    }
    let left: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left.len(), 2, "{left:?}");
}

#[test]
fn divergence_exits_2_and_keeps_last_good_parameters() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("wild.toml"), format!("learning_rate = 1e12\n{SMALL_NET}")).unwrap();
    let o = epinn(&["train", "--config", "wild.toml", "--method", "plain_pinn", "--epochs", "50", "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("training stopped at epoch"));
    assert!(dir.path().join("run/checkpoint_last_good.json").exists());
    assert!(!dir.path().join("run").join(CHECKPOINT_FILE).exists());
}

#[test]
fn evaluate_is_read_only_and_training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL_NET).unwrap();
    for run in ["a", "b"] {
        let o = epinn(&["train", "--config", "small.toml", "--epochs", "20", "--seed", "3", "--out", run], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for f in [CHECKPOINT_FILE, CURVE_FILE, DATASET_FILE] {
        assert_eq!(sha256_file(&a.join(f)).unwrap(), sha256_file(&b.join(f)).unwrap(), "{f}");
    }

    let before: Vec<_> = [CHECKPOINT_FILE, DATASET_FILE]
        .iter()
        .map(|f| (sha256_file(&a.join(f)).unwrap(), std::fs::metadata(a.join(f)).unwrap().modified().unwrap()))
        .collect();
    let o = epinn(&["evaluate", "--out", "a"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let after: Vec<_> = [CHECKPOINT_FILE, DATASET_FILE]
        .iter()
        .map(|f| (sha256_file(&a.join(f)).unwrap(), std::fs::metadata(a.join(f)).unwrap().modified().unwrap()))
        .collect();
    assert_eq!(before, after);
    for f in ["metrics.json", "metrics.txt", "prediction.svg"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let table = String::from_utf8_lossy(&o.stdout);
    for col in ["kappa", "sigma_kappa", "ECP", "rho_e", "rho_n"] {
        assert!(table.contains(col), "{col} missing from\n{table}");
    }
    let m = Manifest::load(&a).unwrap().unwrap();
    assert!(m.steps.iter().any(|s| s.command == "evaluate"));

    let o = epinn(&["report", "a", "--out", "summary"], dir.path());
    assert!(o.status.success());
    assert!(dir.path().join("summary/report.txt").exists());
}

#[test]
fn evaluate_rejects_mismatched_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL_NET).unwrap();
    assert!(epinn(&["train", "--config", "small.toml", "--epochs", "2", "--out", "one"], dir.path()).status.success());
    assert!(epinn(&["generate", "--problem", "diffreact2d", "--out", "two"], dir.path()).status.success());
    let o = epinn(&["evaluate", "--out", "one", "--dataset", "two/dataset.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dimension"));
}

#[test]
fn exact_solution_as_model_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [ProblemKind::Poisson1d, ProblemKind::DiffReact2d] {
        let spec = kind.spec();
        let ds = generate_dataset(&spec, &NoiseModel::default_for(kind, 0), &DatasetCounts::default_for(kind)).unwrap();
        let mock = ExactPredictor { problem: spec.clone(), sigma: 1e-3 };
        let out = dir.path().join(kind.name());
        let r = evaluate_predictor(&mock, (spec.kappa_true, 0.0), kind, &ds, &out, "exact", 0).unwrap();
        assert_eq!(r.mean_error, 0.0);
        assert_eq!(r.ecp, 1.0);
        assert_eq!(r.ecp_extended, 1.0);
        if let Some(b) = r.boundary_mean_error {
            assert!(b < 1e-15);
        }
        let svgs = std::fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg")).count();
        assert_eq!(svgs, if kind == ProblemKind::Poisson1d { 1 } else { 3 });
    }
}
