use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;

use super::*;
use crate::corpus::{load_audio, Split};
use crate::generators::{GeneratorMode, Provenance, MANIFEST_FILE};

fn record(id: &str, dur: f64, tags: &[&str]) -> TrackRecord {
    TrackRecord {
        track_id: id.to_string(),
        audio_path: PathBuf::from(format!("{id}.wav")),
        duration_s: dur,
        tags: tags.iter().map(|t| t.to_string()).collect(),
        split: Split::Train,
    }
}

fn vocab(n: usize) -> LabelVocabulary {
    LabelVocabulary::new((0..n).map(|i| format!("c{i:02}")).collect()).unwrap()
}

/// `per_class` single-tag tracks per class totalling `hours`.
fn metadata(n_classes: usize, per_class: usize, hours: f64) -> Vec<TrackRecord> {
    let n = n_classes * per_class;
    let dur = hours * 3600.0 / n as f64;
    (0..n).map(|i| record(&format!("t{i:05}"), dur, &[&format!("c{:02}", i % n_classes)])).collect()
}

#[test]
fn paper_scale_budget() {
    let v = vocab(56);
    let md = metadata(56, 140, 160.0);
    let policy = AugmentationPolicy::default();
    for (profile, per_class) in [(GeneratorProfile::tiered(), 51), (GeneratorProfile::harmonic_noise(), 129)] {
        let plan = build_plan(&md, &v, &policy, &profile).unwrap();
        // 0.05 * 160 h = 8 h, 28800 s / 56 classes.
        assert!((plan.budget_s - 28_800.0).abs() < 1e-6);
        assert!((plan.target_per_class_s - 514.285_714_285_714_3).abs() < 1e-9);
        assert_eq!(plan.samples_per_class, per_class);
        assert_eq!(plan.entries.len(), 56 * per_class);
        assert!((plan.total_duration_s - plan.budget_s).abs() <= 56.0 * profile.sample_length_s);
        let ids: HashSet<_> = plan.entries.iter().map(|e| e.source_id.clone().unwrap()).collect();
        assert_eq!(ids.len(), plan.entries.len());
    }
}

#[test]
fn one_class_small_case() {
    let plan = build_plan(
        &[record("a", 60.0, &["x"]), record("b", 40.0, &["x"])],
        &LabelVocabulary::new(vec!["x".into()]).unwrap(),
        &AugmentationPolicy::default(),
        &GeneratorProfile::harmonic_noise(),
    )
    .unwrap();
    assert_eq!(plan.entries.len(), 1);
    assert_eq!(plan.total_duration_s, 4.0);
}

#[test]
fn deterministic_and_seed_sensitive() {
    let v = vocab(4);
    let md = metadata(4, 60, 2.0);
    let p = GeneratorProfile::harmonic_noise();
    let a = build_plan(&md, &v, &AugmentationPolicy::default(), &p).unwrap();
    let mut shuffled = md.clone();
    shuffled.reverse();
    assert_eq!(a, build_plan(&shuffled, &v, &AugmentationPolicy::default(), &p).unwrap());
    let b = build_plan(&md, &v, &AugmentationPolicy { seed: 1, ..Default::default() }, &p).unwrap();
    assert_ne!(a.entries, b.entries);
}

#[test]
fn insufficient_sources_name_the_class() {
    let mut md = metadata(3, 40, 1.0);
    md.retain(|r| !r.tags.contains("c01") || r.track_id < "t00010".to_string());
    let err = build_plan(&md, &vocab(3), &AugmentationPolicy::default(), &GeneratorProfile::harmonic_noise()).unwrap_err();
    match err {
        Error::InsufficientSources { class, available, .. } => {
            assert_eq!(class, "c01");
            assert_eq!(available, 3);
        }
        other => panic!("{other}"),
    }
}

#[test]
fn multi_label_tracks_serve_one_class_only() {
    let v = vocab(2);
    let md: Vec<_> = (0..4).map(|i| record(&format!("m{i}"), 100.0, &["c00", "c01"])).collect();
    // Budget 20 s over 2 classes at 4 s: 3 per class would need 6 tracks.
    let err = build_plan(&md, &v, &AugmentationPolicy::default(), &GeneratorProfile::harmonic_noise()).unwrap_err();
    assert!(matches!(err, Error::InsufficientSources { ref class, available: 1, .. } if class == "c01"), "{err}");
}

#[test]
fn zero_budget_and_bad_policy() {
    let v = vocab(1);
    assert!(build_plan(&[], &v, &AugmentationPolicy::default(), &GeneratorProfile::harmonic_noise()).is_err());
    for f in [0.0, -0.1, 1.5, f64::NAN] {
        let policy = AugmentationPolicy { budget_fraction: f, ..Default::default() };
        assert!(policy.validate().is_err());
    }
}

#[test]
fn external_plans_need_no_sources() {
    let plan = build_plan(&metadata(2, 1, 1.0), &vocab(2), &AugmentationPolicy::default(), &GeneratorProfile::external()).unwrap();
    // 180 s budget / 2 classes / 24 s = 3.75 -> 4
    assert_eq!(plan.samples_per_class, 4);
    assert!(plan.entries.iter().all(|e| e.source_id.is_none()));
}

#[test]
fn plan_json_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let plan = build_plan(&metadata(3, 20, 1.0), &vocab(3), &AugmentationPolicy::default(), &GeneratorProfile::harmonic_noise()).unwrap();
    let p = dir.path().join(PLAN_FILE);
    plan.save(&p).unwrap();
    assert_eq!(AugmentationPlan::load(&p).unwrap(), plan);
}

fn small_profile() -> GeneratorProfile {
    GeneratorProfile {
        name: "stub".into(),
        mode: GeneratorMode::Reconstruction,
        sample_length_s: 0.5,
        prime_length_s: 0.0,
        sample_rate_hz: 8000,
    }
}

/// Returns its source unchanged; fails on listed seeds.
struct Echo {
    profile: GeneratorProfile,
    fail_seeds: Vec<u64>,
    fail_all: bool,
    calls: AtomicUsize,
}

impl Echo {
    fn new(profile: GeneratorProfile) -> Self {
        Echo {
            profile,
            fail_seeds: Vec::new(),
            fail_all: false,
            calls: AtomicUsize::new(0),
        }
    }
}

impl Generator for Echo {
    fn profile(&self) -> &GeneratorProfile {
        &self.profile
    }

    fn generate(&self, r: &GenerationRequest) -> Result<GeneratedSample> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.fail_all || self.fail_seeds.contains(&r.seed) {
            return Err(crate::generators::generation_error(&self.profile, r, "stub failure"));
        }
        Ok(GeneratedSample::finish(
            r.source.clone().unwrap(),
            r.target_class,
            Provenance {
                generator: self.profile.name.clone(),
                source_id: r.source_id.clone(),
                seed: r.seed,
                mode: self.profile.mode,
            },
            Vec::new(),
        ))
    }
}

fn stub_sources() -> impl Fn(&str) -> Result<AudioBuffer> + Sync {
    |id: &str| {
        let k = id.bytes().map(|b| b as f32).sum::<f32>();
        Ok(AudioBuffer::new((0..16000).map(|i| ((i as f32 + k) * 0.05).sin() * 0.5).collect(), 16000))
    }
}

fn three_entry_plan() -> AugmentationPlan {
    // 30 s train * 0.05 = 1.5 s over 3 classes = 0.5 s -> one sample each.
    let md: Vec<_> = (0..6).map(|i| record(&format!("s{i}"), 5.0, &[&format!("c{:02}", i % 3)])).collect();
    build_plan(&md, &vocab(3), &AugmentationPolicy::default(), &small_profile()).unwrap()
}

fn train_items(n: usize) -> Vec<TrainItem> {
    (0..n)
        .map(|i| TrainItem {
            id: format!("r{i}"),
            audio: AudioBuffer::silence(100, 16000),
            labels: MultiHotLabels::one_hot(3, i % 3),
        })
        .collect()
}

#[test]
fn echo_stub_extends_train_set() {
    let plan = three_entry_plan();
    assert_eq!(plan.entries.len(), 3);
    let gen = Echo::new(small_profile());
    let ex = execute_plan(&plan, &gen, &stub_sources(), 16000, None).unwrap();
    assert!(ex.shortfall.failed.is_empty());
    assert!(ex.samples.iter().all(|s| s.audio.sample_rate_hz == 16000 && s.audio.len() == 8000));
    let train = train_items(5);
    let aug = augmented_set(&train, &ex.samples, 3);
    assert_eq!(aug.len(), 8);
    for (s, e) in aug[5..].iter().zip(&plan.entries) {
        assert_eq!(s.labels, MultiHotLabels::one_hot(3, e.class));
    }
}

#[test]
fn total_failure_is_reported_not_fatal() {
    let plan = three_entry_plan();
    let gen = Echo { fail_all: true, ..Echo::new(small_profile()) };
    let ex = execute_plan(&plan, &gen, &stub_sources(), 16000, None).unwrap();
    assert!(ex.samples.is_empty());
    assert_eq!(ex.shortfall.fraction(), 1.0);
    assert!(ex.shortfall.failed.iter().all(|f| f.errors.len() == 2));
    assert_eq!(gen.calls.load(Ordering::SeqCst), 6);
    assert_eq!(augmented_set(&train_items(4), &ex.samples, 3).len(), 4);
}

#[test]
fn failure_retries_with_fresh_seed() {
    let plan = three_entry_plan();
    let first = plan.entries[1].seed;
    let gen = Echo { fail_seeds: vec![first], ..Echo::new(small_profile()) };
    let ex = execute_plan(&plan, &gen, &stub_sources(), 8000, None).unwrap();
    assert_eq!(ex.samples.len(), 3);
    assert_ne!(ex.samples[1].provenance.seed, first);
}

#[test]
fn profile_mismatch_is_rejected() {
    let plan = three_entry_plan();
    let gen = Echo::new(GeneratorProfile { sample_length_s: 1.0, ..small_profile() });
    assert!(matches!(
        execute_plan(&plan, &gen, &stub_sources(), 16000, None),
        Err(Error::Mismatch(_))
    ));
}

#[test]
fn written_durations_balance_per_class() {
    let dir = tempfile::tempdir().unwrap();
    let md: Vec<_> = (0..40).map(|i| record(&format!("s{i:02}"), 5.0 + i as f64 * 0.1, &[&format!("c{:02}", i % 4)])).collect();
    let plan = build_plan(&md, &vocab(4), &AugmentationPolicy::default(), &small_profile()).unwrap();
    let gen = Echo::new(small_profile());
    execute_plan(&plan, &gen, &stub_sources(), 16000, Some(dir.path())).unwrap();

    // Independent accounting: re-read every WAV named in the manifest.
    let root = dir.path().join("stub");
    let text = fs::read_to_string(root.join(MANIFEST_FILE)).unwrap();
    let mut per_class: BTreeMap<String, f64> = BTreeMap::new();
    for line in text.lines() {
        let e: ManifestEntry = serde_json::from_str(line).unwrap();
        let a = load_audio(&root.join(&e.path), 16000).unwrap();
        *per_class.entry(e.class).or_default() += a.duration_s();
    }
    assert_eq!(per_class.len(), 4);
    let max = per_class.values().cloned().fold(f64::MIN, f64::max);
    let min = per_class.values().cloned().fold(f64::MAX, f64::min);
    assert!(max - min <= plan.profile.sample_length_s);
    assert!(dir.path().join(SHORTFALL_FILE).exists());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plan_invariants(
        n_classes in 1usize..6,
        tracks in prop::collection::vec((1.0f64..60.0, prop::collection::btree_set(0usize..6, 1..3)), 10..80),
        fraction in 0.01f64..0.3,
        seed in any::<u64>(),
    ) {
        let v = vocab(n_classes);
        let md: Vec<_> = tracks.iter().enumerate().map(|(i, (d, tags))| {
            let names: Vec<String> = tags.iter().map(|t| format!("c{:02}", t)).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            record(&format!("p{i:03}"), *d, &refs)
        }).collect();
        let policy = AugmentationPolicy { budget_fraction: fraction, seed, ..Default::default() };
        let profile = small_profile();
        match build_plan(&md, &v, &policy, &profile) {
            Ok(plan) => {
                let ids: Vec<_> = plan.entries.iter().map(|e| e.source_id.clone().unwrap()).collect();
                let unique: HashSet<_> = ids.iter().collect();
                prop_assert_eq!(unique.len(), ids.len());
                prop_assert!((plan.total_duration_s - plan.budget_s).abs() <= n_classes as f64 * profile.sample_length_s + 1e-9);
                let mut counts = vec![0usize; n_classes];
                for e in &plan.entries {
                    counts[e.class] += 1;
                    let r = md.iter().find(|r| Some(&r.track_id) == e.source_id.as_ref()).unwrap();
                    prop_assert!(r.tags.contains(v.name(e.class)));
                }
                prop_assert!(counts.iter().all(|c| *c == counts[0] && *c >= 1));
                prop_assert_eq!(&plan, &build_plan(&md, &v, &policy, &profile).unwrap());
            }
            Err(Error::InsufficientSources { needed, available, .. }) => prop_assert!(available < needed),
            Err(e) => prop_assert!(false, "unexpected error {}", e),
        }
    }
}
