use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn clustlda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clustlda")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = clustlda(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &[&str] = &["--k", "3", "--clusters", "2", "--vocab-size", "40", "--docs", "60", "--authors", "20", "--mean-doc-len", "30"];

fn simulate_small(dir: &Path, seed: u64) {
    let seed = seed.to_string();
    let mut args = vec!["simulate", "--seed", &seed, "--out", path(dir)];
    args.extend_from_slice(SMALL);
    ok(&args);
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_fit_evaluate_pipeline() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    let fit = tmp.path().join("fit");
    let eval = tmp.path().join("eval");
    simulate_small(&sim, 3);
    for f in ["corpus.json", "truth.json", "documents.jsonl", "manifest.json"] {
        assert!(sim.join(f).exists(), "{f}");
    }
    assert_eq!(manifest(&sim)["command"], "simulate");
    assert_eq!(manifest(&sim)["seed"], 3);

    ok(&["fit", "--corpus", path(&sim.join("corpus.json")), "--k", "3", "--clusters", "2", "--restarts", "2", "--seed", "5", "--out", path(&fit)]);
    for f in ["model.json", "corpus.json", "restarts.csv", "trace.csv", "assignments.csv", "doc_topics.csv", "author_topics.csv", "manifest.json"] {
        assert!(fit.join(f).exists(), "{f}");
    }
    let restarts = fs::read_to_string(fit.join("restarts.csv")).unwrap();
    assert!(restarts.starts_with("restart,seed,d_lik,d_disp,converged,outer_iters,error"));
    assert_eq!(restarts.lines().count(), 3);

    ok(&["evaluate", "--fit", path(&fit), "--truth", path(&sim.join("truth.json")), "--top-n", "5", "--out", path(&eval)]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    let ri = report["rand_index"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&ri));
    assert!(report["mae"].as_f64().unwrap() <= 2.0);
    let contingency = fs::read_to_string(eval.join("contingency.csv")).unwrap();
    assert!(contingency.starts_with("source,cluster_0,cluster_1"));
    for line in contingency.lines().skip(1) {
        let total: f64 = line.split(',').skip(1).map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((total - 100.0).abs() < 0.01);
    }
    let top = fs::read_to_string(eval.join("top_words.csv")).unwrap();
    assert_eq!(top.lines().count(), 1 + 3 * 5);
    assert!(eval.join("projection.csv").exists() && eval.join("cluster_topics.csv").exists());
}

#[test]
fn baselines_and_raw_jsonl_input() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    simulate_small(&sim, 4);
    let jsonl = sim.join("documents.jsonl");
    for model in ["lda", "at"] {
        let out = tmp.path().join(model);
        ok(&["fit", "--corpus", path(&jsonl), "--min-count", "1", "--no-stem", "--model", model, "--k", "3", "--out", path(&out)]);
        let model_json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
        assert_eq!(model_json["model"], model);
        assert!(model_json["labels"].is_null());
        let eval = tmp.path().join(format!("{model}-eval"));
        ok(&["evaluate", "--fit", path(&out), "--truth", path(&sim.join("truth.json")), "--labels-field", "label", "--out", path(&eval)]);
        let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
        assert!(report["mae"].as_f64().is_some());
        assert!(report["rand_index"].is_null());
    }
}

#[test]
fn bic_range_picks_a_cluster_count() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    let fit = tmp.path().join("fit");
    simulate_small(&sim, 6);
    ok(&["fit", "--corpus", path(&sim.join("corpus.json")), "--k", "3", "--bic-range", "1..3", "--restarts", "2", "--out", path(&fit)]);
    let bic = fs::read_to_string(fit.join("bic.csv")).unwrap();
    assert!(bic.starts_with("n_clusters,loglik,n_params,bic"));
    assert_eq!(bic.lines().count(), 4);
}

#[test]
fn replay_reproduces_outputs_and_seed_edits_change_them() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    let fit = tmp.path().join("fit");
    simulate_small(&sim, 8);
    ok(&["fit", "--corpus", path(&sim.join("corpus.json")), "--k", "3", "--clusters", "2", "--restarts", "3", "--seed", "1", "--out", path(&fit)]);

    let replayed = tmp.path().join("replayed");
    ok(&["replay", path(&fit.join("manifest.json")), "--out", path(&replayed)]);
    for f in ["model.json", "restarts.csv", "trace.csv", "assignments.csv"] {
        assert_eq!(fs::read(fit.join(f)).unwrap(), fs::read(replayed.join(f)).unwrap(), "{f}");
    }

    let mut edited = manifest(&fit);
    edited["plan"]["seed"] = serde_json::json!(2);
    let edited_path = tmp.path().join("edited.json");
    fs::write(&edited_path, edited.to_string()).unwrap();
    let reseeded = tmp.path().join("reseeded");
    ok(&["replay", path(&edited_path), "--out", path(&reseeded)]);
    assert_ne!(fs::read(fit.join("restarts.csv")).unwrap(), fs::read(reseeded.join("restarts.csv")).unwrap());

    let sim2 = tmp.path().join("sim2");
    ok(&["replay", path(&sim.join("manifest.json")), "--out", path(&sim2)]);
    assert_eq!(fs::read(sim.join("corpus.json")).unwrap(), fs::read(sim2.join("corpus.json")).unwrap());
}

#[test]
fn single_cell_sweep_writes_one_row() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sweep");
    let mut args = vec!["sweep", "--eta", "0.5", "--sigma0", "1", "--replicates", "1", "--restarts", "1", "--out", path(&out)];
    args.extend_from_slice(SMALL);
    ok(&args);
    let cells = fs::read_to_string(out.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 2);
    assert!(cells.starts_with("cell,eta,sigma0,completed,failed,ri_mean,ri_sd"));
    let rep = out.join("cells").join("eta=0.5_sigma0=1").join("rep000");
    for f in ["clustlda.json", "lda.json", "at.json", "outcome.csv", "restarts.csv"] {
        assert!(rep.join(f).exists(), "{f}");
    }
    assert_eq!(manifest(&out)["command"], "sweep");
}

#[test]
fn sweep_from_config_file_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("sweep.toml");
    fs::write(
        &config,
        "seed = 9\nreplicates = 2\nrestarts = 2\neta = [0.5]\nsigma0 = [0.5, 3.0]\nsave_models = false\n\n[base]\nk = 3\nn_clusters = 2\nvocab_size = 40\nn_docs = 60\nn_authors = 20\nmean_doc_len = 30.0\n",
    )
    .unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["sweep", "--config", path(&config), "--threads", "2", "--out", path(&a)]);
    ok(&["sweep", "--config", path(&config), "--out", path(&b)]);
    let cells = fs::read_to_string(a.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 3);
    assert_eq!(cells, fs::read_to_string(b.join("cells.csv")).unwrap());
    assert_eq!(fs::read(a.join("replicates.csv")).unwrap(), fs::read(b.join("replicates.csv")).unwrap());
    // Flags win over the file.
    let c = tmp.path().join("c");
    ok(&["sweep", "--config", path(&config), "--replicates", "1", "--sigma0", "0.5", "--out", path(&c)]);
    assert_eq!(fs::read_to_string(c.join("replicates.csv")).unwrap().lines().count(), 2);
}

#[test]
fn sweep_where_everything_fails_exits_nonzero() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sweep");
    // More clusters than authors: every replicate is rejected.
    let result = clustlda(&[
        "sweep", "--replicates", "2", "--restarts", "1", "--k", "3", "--clusters", "5", "--authors", "3", "--docs", "10", "--out", path(&out),
    ]);
    assert!(!result.status.success());
    let rows = fs::read_to_string(out.join("replicates.csv")).unwrap();
    assert!(rows.lines().skip(1).all(|l| l.contains("error")));
}

#[test]
fn bad_input_is_reported() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    let result = clustlda(&["fit", "--corpus", path(&missing), "--out", path(&tmp.path().join("o"))]);
    assert!(!result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("nope.json"));
    assert!(!clustlda(&["fit", "--corpus", "x", "--model", "stm", "--out", "o"]).status.success());
}
