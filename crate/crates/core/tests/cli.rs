use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use augeval::augmentor::AugmentationPlan;
use augeval::pipeline::{
    make_synthetic_corpus, Experiment, ExperimentConfig, MatchedGenerator, CHECKSUM_FILE, MODEL_FILE, REPORT_FILE,
    RESOLVED_CONFIG_FILE,
};

fn augeval(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_augeval"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn augeval")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const CONFIG: &str = r#"
[experiment]
trials = 1
seeds = [3]
output_dir = "runs"

[corpus]
train = "corpus/train.tsv"
validation = "corpus/validation.tsv"
test = "corpus/test.tsv"

[classifier]
backbone_width = 8
num_conv_blocks = 1
attention_heads = 2
window_s = 2.0
max_epochs = 3
patience = 2

[classifier.mel]
sample_rate_hz = 8000
window = 512
hop = 256
n_mels = 24
f_max_hz = 3800.0

[generator]
kind = "matched"
"#;

/// Small synthetic corpus plus config in a fresh directory.
fn workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    make_synthetic_corpus(&dir.path().join("corpus"), 3, 0.1, 8000, 5).unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, CONFIG).unwrap();
    (dir, cfg)
}

#[test]
fn baseline_run_writes_reports_and_checkpoint() {
    let (dir, cfg) = workspace();
    ok(&augeval(&["baseline-run", "--config", cfg.to_str().unwrap()], dir.path()));
    let runs = dir.path().join("runs");
    for f in [RESOLVED_CONFIG_FILE, CHECKSUM_FILE, "vocabulary.json"] {
        assert!(runs.join(f).is_file(), "missing {f}");
    }
    let trial = runs.join("baseline").join("trial0");
    assert!(trial.join(MODEL_FILE).is_file());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(trial.join(REPORT_FILE)).unwrap()).unwrap();
    let auc = report["rocauc_macro"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
}

#[test]
fn reruns_are_bit_identical() {
    let (dir, cfg) = workspace();
    let mut a = ExperimentConfig::load(&cfg).unwrap();
    a.experiment.output_dir = dir.path().join("a");
    let mut b = a.clone();
    b.experiment.output_dir = dir.path().join("b");
    let ra = Experiment::prepare(&a).unwrap().run_baseline().unwrap();
    let rb = Experiment::prepare(&b).unwrap().run_baseline().unwrap();
    assert_eq!(ra.test, rb.test);
    let scores = |root: &Path| fs::read(root.join("baseline/trial0/test_scores.json")).unwrap();
    assert_eq!(scores(&a.experiment.output_dir), scores(&b.experiment.output_dir));
}

#[test]
fn tampered_held_out_audio_aborts_the_run() {
    let (dir, cfg) = workspace();
    let cfg = ExperimentConfig::load(&cfg).unwrap();
    let exp = Experiment::prepare(&cfg).unwrap();
    let victim = fs::read_to_string(dir.path().join("corpus/test.tsv")).unwrap();
    let rel = victim.lines().nth(1).unwrap().split('\t').nth(1).unwrap().to_string();
    let path = dir.path().join("corpus").join(rel);
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    fs::write(&path, bytes).unwrap();
    let err = exp.run_augmented(&MatchedGenerator::new(3, 4.0, 8000)).unwrap_err();
    assert!(err.to_string().contains("changed"), "{err}");
}

#[test]
fn plan_command_on_large_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    fs::create_dir_all(&corpus).unwrap();
    let mut train = String::from("track_id\tpath\tduration\ttags\n");
    for i in 0..56 * 140 {
        train.push_str(&format!("t{i:05}\taudio/{i}.mp3\t{:.6}\tmood{:02}\n", 160.0 * 3600.0 / 7840.0, i % 56));
    }
    fs::write(corpus.join("train.tsv"), train).unwrap();
    for split in ["validation", "test"] {
        fs::write(corpus.join(format!("{split}.tsv")), "track_id\tpath\tduration\ttags\nv0\ta.mp3\t30\tmood00\n").unwrap();
    }
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, CONFIG.replace("kind = \"matched\"", "kind = \"harmonic_noise\"")).unwrap();
    let out = augeval(&["plan", "--config", cfg.to_str().unwrap(), "--out", "plan.json"], dir.path());
    ok(&out);
    let plan = AugmentationPlan::load(&dir.path().join("plan.json")).unwrap();
    assert_eq!(plan.entries.len(), 56 * plan.samples_per_class);
    assert!((plan.total_duration_s - 8.0 * 3600.0).abs() <= 56.0 * 4.0);
}

#[test]
fn generated_samples_can_be_classified() {
    let (dir, cfg) = workspace();
    let c = cfg.to_str().unwrap();
    ok(&augeval(&["train-classifier", "--config", c], dir.path()));
    ok(&augeval(&["generate", "--config", c, "--out", "gen"], dir.path()));
    let model = dir.path().join("runs/classifier").join(MODEL_FILE);
    let out = augeval(
        &["classify-generated", "--model", model.to_str().unwrap(), "--samples", "gen/matched", "--out", "cls"],
        dir.path(),
    );
    ok(&out);
    let cls = dir.path().join("cls");
    for f in ["confusion.csv", "confusion.png", "prediction_histogram.csv", "classification.json"] {
        assert!(cls.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn invalid_config_exits_with_code_one() {
    let (dir, cfg) = workspace();
    fs::write(&cfg, CONFIG.replace("trials = 1", "trials = 2")).unwrap();
    let out = augeval(&["baseline-run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
