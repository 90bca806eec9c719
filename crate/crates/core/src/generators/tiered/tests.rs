use super::*;

fn pattern_audio(repeats: usize) -> AudioBuffer {
    let pattern = [0.0f32, 0.5, 0.9, 0.3, -0.2, -0.7, -0.95, -0.4];
    AudioBuffer::new(pattern.iter().cycle().take(8 * repeats).copied().collect(), 16000)
}

fn small_cfg() -> TieredConfig {
    TieredConfig {
        top_hidden: 16,
        mid_hidden: 16,
        sample_hidden: 32,
        embed_dim: 8,
        seq_len: 128,
        steps: 60,
        learning_rate: 1e-2,
        ..TieredConfig::default()
    }
}

#[test]
fn learns_repeating_pattern() {
    let model = tiered_train(&[pattern_audio(400)], &small_cfg()).unwrap();
    let (ce, acc) = model.evaluate(&pattern_audio(200)).unwrap();
    assert!(acc >= 0.99, "accuracy {acc}, ce {ce}");
    assert!(ce < (256f64).ln());
}

#[test]
fn stepper_matches_tape_forward() {
    let model = tiered_train(&[pattern_audio(100)], &TieredConfig { steps: 2, ..small_cfg() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let chunk: Vec<u8> = (0..64 + 128).map(|_| rng.random_range(0..=255u8)).collect();
    let mut t = Tape::new(&model.params);
    let logits = model.forward(&mut t, &chunk);
    let lv = t.value(logits).clone();
    let mut st = Stepper::new(&model);
    for p in 64..chunk.len() {
        st.advance(&chunk, p);
        let l = st.logits(&chunk, p);
        for (a, b) in l.iter().zip(lv.row(p - 64)) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn continuation_keeps_prime_and_respects_seed() {
    let model = tiered_train(&[pattern_audio(100)], &TieredConfig { steps: 3, ..small_cfg() }).unwrap();
    let prime = AudioBuffer::new((0..640).map(|i| ((i as f32) * 0.01).sin() * 0.6).collect(), 16000);
    let out = tiered_continue(&model, &prime, 0.1, 1.0, 1).unwrap();
    assert_eq!(out.len(), 1600);
    let rt = mu_law_decode(&mu_law_encode(&prime.samples).unwrap());
    assert_eq!(&out.samples[..640], &rt[..]);

    let other = tiered_continue(&model, &prime, 0.1, 1.0, 2).unwrap();
    assert_ne!(out.samples[640..], other.samples[640..]);
    let g1 = tiered_continue(&model, &prime, 0.1, 0.0, 1).unwrap();
    let g2 = tiered_continue(&model, &prime, 0.1, 0.0, 99).unwrap();
    assert_eq!(g1, g2);

    assert!(tiered_continue(&model, &AudioBuffer::new(prime.samples.clone(), 8000), 0.1, 1.0, 1).is_err());
}

#[test]
fn smoke_history_and_generator_contract() {
    let model = tiered_train(&[pattern_audio(100)], &TieredConfig { steps: 1, ..small_cfg() }).unwrap();
    assert_eq!(model.history.len(), 1);
    let profile = GeneratorProfile {
        sample_length_s: 0.05,
        prime_length_s: 0.02,
        ..GeneratorProfile::tiered()
    };
    let gen = TieredGenerator { model, profile, temperature: 1.0 };
    let req = GenerationRequest {
        target_class: 3,
        source: Some(AudioBuffer::silence(320, 16000)),
        source_id: Some("x".into()),
        requested_length_s: 0.05,
        seed: 8,
    };
    let s = gen.generate(&req).unwrap();
    assert_eq!(s.audio.len(), 800);
    assert_eq!(s.inherited_label, 3);
    assert_eq!(s.audio, gen.generate(&req).unwrap().audio);
    let bad = GenerationRequest { source: Some(AudioBuffer::silence(100, 16000)), ..req };
    assert!(gen.generate(&bad).is_err());
}
