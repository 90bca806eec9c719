use super::*;
use crate::generators::{GenerationRequest, Provenance};

fn report(values: [f64; 6]) -> MetricReport {
    MetricReport::from_values(values, vec![0.5; 4], 10)
}

#[test]
fn identical_reports_have_no_highlights() {
    let b = report([0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
    let t = compare(&b, &[("same".into(), b.clone())], HighlightMode::Relative).unwrap();
    assert_eq!(t.rows.len(), 6);
    assert!(t.rows.iter().all(|r| r.delta == Some(0.0) && !r.highlight));
}

#[test]
fn relative_highlight_threshold() {
    let (d, hl) = delta(0.125, 0.134, HighlightMode::Relative);
    assert!((d.unwrap() - 0.072).abs() < 1e-12);
    assert!(hl);
    let (d, hl) = delta(0.5, 0.504, HighlightMode::Relative);
    assert!((d.unwrap() - 0.008).abs() < 1e-12);
    assert!(!hl);
    assert!(delta(0.5, 0.505, HighlightMode::Relative).1);
    assert!(!delta(0.5, 0.4, HighlightMode::Relative).1);
    assert_eq!(delta(0.0, 0.1, HighlightMode::Relative), (None, true));
}

#[test]
fn absolute_mode_differs_from_relative() {
    // +0.005 absolute on a 0.125 baseline is +4% relative.
    assert!(delta(0.125, 0.130, HighlightMode::Relative).1);
    assert!(!delta(0.125, 0.130, HighlightMode::Absolute).1);
    assert!(delta(0.125, 0.135, HighlightMode::Absolute).1);
}

#[test]
fn highlights_recomputable_from_stored_reports() {
    let b = report([0.064, 0.134, 0.125, 0.148, 0.745, 0.794]);
    let a = report([0.07, 0.13, 0.134, 0.15, 0.75, 0.79]);
    let t = compare(&b, &[("samplernn".into(), a.clone())], HighlightMode::Relative).unwrap();
    let b2 = MetricReport::from_json(&b.to_json().unwrap()).unwrap();
    let a2 = MetricReport::from_json(&a.to_json().unwrap()).unwrap();
    let t2 = compare(&b2, &[("samplernn".into(), a2)], HighlightMode::Relative).unwrap();
    assert_eq!(t, t2);
    let names: Vec<String> = t.highlights().iter().map(|r| format!("{}_{}", r.metric, r.averaging)).collect();
    assert_eq!(names, ["f1_macro", "prauc_macro", "prauc_micro"]);
    let csv = t.to_table_csv();
    assert!(csv.contains("samplernn,0.070*,0.130,0.134*,0.150*,0.750,0.790"), "{csv}");
    assert!(t.render_text().contains("+7.2%"));
}

#[test]
fn mismatched_reports_rejected() {
    let b = report([0.5; 6]);
    let a = MetricReport::from_values([0.5; 6], vec![0.5; 3], 10);
    assert!(matches!(compare(&b, &[("x".into(), a)], HighlightMode::Relative), Err(Error::Mismatch(_))));
}

#[test]
fn averaging_is_elementwise_mean() {
    let a = report([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
    assert_eq!(average_reports(std::slice::from_ref(&a)).unwrap(), a);
    let mut b = report([0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
    b.prauc_excluded = vec![2];
    let m = average_reports(&[a.clone(), b]).unwrap();
    for (x, want) in m.values().iter().zip([0.2, 0.3, 0.4, 0.5, 0.6, 0.7]) {
        assert!((x - want).abs() < 1e-15);
    }
    assert_eq!(m.prauc_excluded, vec![2]);
    assert!(average_reports(&[]).is_err());
}

fn write_tables(dir: &Path) {
    for s in ["train", "validation", "test"] {
        fs::write(dir.join(format!("{s}.tsv")), "track_id\tpath\tduration\ttags\n").unwrap();
    }
}

const MIN_CONFIG: &str = r#"
[experiment]
trials = 2
seeds = [3, 4]
output_dir = "out"

[corpus]
train = "train.tsv"
validation = "validation.tsv"
test = "test.tsv"
task = "emotional"
"#;

#[test]
fn config_resolves_paths_and_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    write_tables(dir.path());
    let p = dir.path().join("c.toml");
    fs::write(&p, MIN_CONFIG).unwrap();
    let cfg = ExperimentConfig::load(&p).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.corpus.train, dir.path().join("train.tsv"));
    assert_eq!(cfg.corpus.task, LabelTask::Emotional);
    assert_eq!(cfg.classifier, ClassifierConfig::default());
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml().unwrap(), Path::new("/elsewhere")).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn config_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_tables(dir.path());
    let bad_seeds = MIN_CONFIG.replace("seeds = [3, 4]", "seeds = [3]");
    let cfg = ExperimentConfig::from_toml_str(&bad_seeds, dir.path()).unwrap();
    assert!(matches!(cfg.validate(), Err(Error::Config(m)) if m.contains("seeds")));
    let missing = MIN_CONFIG.replace("test.tsv", "nope.tsv");
    assert!(ExperimentConfig::from_toml_str(&missing, dir.path()).unwrap().validate().is_err());
    let bad_fraction = format!("{MIN_CONFIG}\n[policy]\nbudget_fraction = 0.0\n");
    assert!(ExperimentConfig::from_toml_str(&bad_fraction, dir.path()).unwrap().validate().is_err());
    assert!(ExperimentConfig::from_toml_str("corpus = 3", dir.path()).is_err());
}

#[test]
fn lock_is_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let a = RunLock::acquire(dir.path()).unwrap();
    assert!(RunLock::acquire(dir.path()).is_err());
    drop(a);
    RunLock::acquire(dir.path()).unwrap();
}

#[test]
fn synthetic_f0_ranges_are_disjoint() {
    for n in [1, 4, 16] {
        let ranges: Vec<_> = (0..n).map(|k| synthetic::f0_range(k, n)).collect();
        for w in ranges.windows(2) {
            assert!(w[0].1 < w[1].0);
        }
        assert!(ranges.last().unwrap().1 < 1800.0);
    }
}

#[test]
fn synthetic_corpus_splits_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c1 = make_synthetic_corpus(a.path(), 4, 0.25, 8000, 7).unwrap();
    let c2 = make_synthetic_corpus(b.path(), 4, 0.25, 8000, 7).unwrap();
    // 900 s / 10 s = 90 tracks, 22 per class: 18/2/2 after rounding 10%.
    let hours = crate::corpus::split_durations(&c1.records);
    assert_eq!(c1.records.len(), 88);
    assert!((hours[&Split::Train] * 3600.0 - 72.0 * 10.0).abs() < 1e-6);
    assert!((hours[&Split::Test] * 3600.0 - 8.0 * 10.0).abs() < 1e-6);
    assert!(c1.centroid_accuracy >= 0.95);
    for (r1, r2) in c1.records.iter().zip(&c2.records) {
        assert_eq!(fs::read(&r1.audio_path).unwrap(), fs::read(&r2.audio_path).unwrap());
    }
    for s in Split::ALL {
        let t = load_metadata(&c1.metadata_path(s), s).unwrap();
        assert_eq!(t.len(), c1.split(s).len());
    }
    let c3 = make_synthetic_corpus(&a.path().join("other"), 4, 0.25, 8000, 8).unwrap();
    assert_ne!(fs::read(&c1.records[0].audio_path).unwrap(), fs::read(&c3.records[0].audio_path).unwrap());
    assert!(make_synthetic_corpus(a.path(), 17, 1.0, 8000, 0).is_err());
    assert!(make_synthetic_corpus(a.path(), 4, 5.0, 8000, 0).is_err());
}

#[test]
fn reference_generators_follow_requests() {
    let req = GenerationRequest {
        target_class: 2,
        source: None,
        source_id: None,
        requested_length_s: 4.0,
        seed: 5,
    };
    let m = MatchedGenerator::new(4, 4.0, 8000);
    let s = m.generate(&req).unwrap();
    assert_eq!((s.audio.len(), s.inherited_label), (32000, 2));
    assert_eq!(s.audio, m.generate(&req).unwrap().audio);
    assert!(m.generate(&GenerationRequest { target_class: 4, ..req.clone() }).is_err());
    let n = NoiseGenerator::new(4.0, 8000).generate(&req).unwrap();
    assert_eq!(n.audio.len(), 32000);
    assert!(n.flags.is_empty());
}

fn tiny_model(dir: &Path) -> (TrainedModel, SyntheticCorpus) {
    let corpus = make_synthetic_corpus(dir, 2, 0.1, 8000, 1).unwrap();
    let cfg = ClassifierConfig {
        num_classes: 2,
        backbone_width: 8,
        num_conv_blocks: 1,
        window_s: 1.0,
        max_epochs: 3,
        patience: 2,
        mel: synthetic::oracle_mel(8000),
        ..ClassifierConfig::default()
    };
    let vocab = synthetic::synthetic_vocabulary(2);
    let feats = |s: Split| {
        let recs = corpus.split(s);
        let f = featurize(&recs, &cfg.mel, None).unwrap();
        labeled(f, recs.iter().map(|r| vocab.encode(r.tags.iter())).collect())
    };
    let model = classifier::train(&feats(Split::Train), &feats(Split::Validation), &vocab, &cfg).unwrap();
    (model, corpus)
}

#[test]
fn classify_generated_contract() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = tiny_model(dir.path());
    assert!(classify_generated(&model, &[]).is_err());
    let sample = GeneratedSample::finish(
        crate::corpus::AudioBuffer::silence(16000, 16000),
        1,
        Provenance {
            generator: "x".into(),
            source_id: None,
            seed: 0,
            mode: crate::generators::GeneratorMode::External,
        },
        Vec::new(),
    );
    let c = classify_generated(&model, std::slice::from_ref(&sample)).unwrap();
    assert_eq!(c.histogram.iter().sum::<usize>(), 1);
    assert_eq!(c.confusion.normalized[1].iter().sum::<f64>(), 1.0);
    assert!(c.confusion.normalized[1].iter().all(|v| *v == 0.0 || *v == 1.0));
    assert_eq!(c.confusion.empty_rows, vec![0]);
    let bad = GeneratedSample { inherited_label: 5, ..sample };
    assert!(classify_generated(&model, &[bad]).is_err());
    let out = dir.path().join("cls");
    write_classification(&out, &model.vocabulary, &c).unwrap();
    assert!(out.join("confusion.png").is_file() && out.join("confusion.csv").is_file());
}

#[test]
fn cli_exit_codes() {
    assert_eq!(cli::run(["augeval", "frobnicate"]), 1);
    assert_eq!(cli::run(["augeval", "baseline-run", "--bogus"]), 1);
    assert_eq!(cli::run(["augeval", "--help"]), 0);
    assert_eq!(cli::run(["augeval", "baseline-run", "--config", "/nonexistent/c.toml"]), 2);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    fs::write(&p, "[experiment]\ntrials = 0\n").unwrap();
    assert_eq!(cli::run(["augeval", "baseline-run", "--config", p.to_str().unwrap()]), 1);
}

#[test]
fn cli_compare_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b.json");
    let a = dir.path().join("a.json");
    fs::write(&b, report([0.5; 6]).to_json().unwrap()).unwrap();
    fs::write(&a, report([0.6, 0.5, 0.5, 0.5, 0.5, 0.5]).to_json().unwrap()).unwrap();
    let out = dir.path().join("cmp");
    let code = cli::run([
        "augeval",
        "compare",
        "--baseline",
        b.to_str().unwrap(),
        "--augmented",
        &format!("gen={}", a.display()),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert!(csv.contains("gen,f1,macro,0.500000,0.600000,0.200000,true"), "{csv}");
}
