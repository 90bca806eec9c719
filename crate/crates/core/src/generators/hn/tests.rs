use super::*;
use rand::Rng;
use std::f64::consts::PI;

pub(crate) fn tone(f0: f64, secs: f64, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (secs * 16000.0) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / 16000.0;
            let h: f64 = (1..=6).map(|k| 0.25 / k as f64 * (2.0 * PI * k as f64 * f0 * t).sin()).sum();
            (h + rng.random_range(-0.003..0.003)) as f32
        })
        .collect();
    AudioBuffer::new(samples, 16000)
}

fn corpus(n: usize, seed: u64) -> Vec<AudioBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| tone(rng.random_range(120.0..700.0), 1.0, seed * 100 + i as u64)).collect()
}

fn quick_cfg() -> HnConfig {
    HnConfig {
        steps: 120,
        batch_size: 4,
        learning_rate: 5e-3,
        ..HnConfig::default()
    }
}

fn samples64(a: &AudioBuffer) -> Vec<f64> {
    a.samples.iter().map(|v| *v as f64).collect()
}

#[test]
fn trained_model_beats_silence_and_keeps_pitch() {
    let model = hn_train(&corpus(16, 1), &quick_cfg()).unwrap();
    let first = model.history[..10].iter().sum::<f64>();
    let last = model.history[model.history.len() - 10..].iter().sum::<f64>();
    assert!(last < first);

    let profile = GeneratorProfile { sample_length_s: 1.0, ..GeneratorProfile::harmonic_noise() };
    let gen = HnGenerator { model, profile };
    let src = tone(440.0, 1.0, 77);
    let req = GenerationRequest {
        target_class: 2,
        source: Some(src.clone()),
        source_id: Some("t".into()),
        requested_length_s: 1.0,
        seed: 5,
    };
    let out = gen.generate(&req).unwrap();
    assert_eq!(out.audio.len(), src.len());
    assert_eq!(out.inherited_label, 2);
    assert!(out.flags.is_empty(), "{:?}", out.flags);
    let again = gen.generate(&req).unwrap();
    assert_eq!(out.audio, again.audio);

    let target = samples64(&src);
    let rec = SpectralLoss::new(&target).loss(&samples64(&out.audio));
    let silence = SpectralLoss::new(&target).loss(&vec![0.0; target.len()]);
    assert!(rec * 3.0 <= silence, "{rec} vs {silence}");

    // FFT peak oracle.
    let n = 16384;
    let mut fft = RealFft::new(n);
    let w = hann(n);
    let frame: Vec<f64> = (0..n).map(|i| out.audio.samples.get(i).copied().unwrap_or(0.0) as f64 * w[i]).collect();
    let mut mags = vec![0.0; n / 2 + 1];
    fft.magnitudes(&frame, &mut mags);
    let k = mags
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    let peak = k as f64 * 16000.0 / n as f64;
    assert!((peak - 440.0).abs() <= 4.4, "{peak}");
}

#[test]
fn silence_corpus_reconstructs_silence() {
    let cfg = HnConfig { steps: 3, ..quick_cfg() };
    let model = hn_train(&[AudioBuffer::silence(32000, 16000)], &cfg).unwrap();
    let c = model.controls(&AudioBuffer::silence(16000, 16000)).unwrap();
    assert!(c.amplitude.iter().all(|a| *a == 0.0));
    let out = model.synthesize(&c, 16000, 0).unwrap();
    assert!(out.samples.iter().all(|v| *v == 0.0));
}

#[test]
fn seeds_change_training() {
    let data = corpus(4, 2);
    let a = hn_train(&data, &HnConfig { steps: 4, seed: 1, ..quick_cfg() }).unwrap();
    let b = hn_train(&data, &HnConfig { steps: 4, seed: 2, ..quick_cfg() }).unwrap();
    let a2 = hn_train(&data, &HnConfig { steps: 4, seed: 1, ..quick_cfg() }).unwrap();
    assert_ne!(a.history, b.history);
    assert_eq!(a.history, a2.history);
}

#[test]
fn controls_are_normalised() {
    let model = hn_train(&corpus(2, 3), &HnConfig { steps: 2, ..quick_cfg() }).unwrap();
    let c = model.controls(&tone(300.0, 0.5, 1)).unwrap();
    for i in 0..c.harmonic_distribution.rows {
        let s: f64 = c.harmonic_distribution.row(i).iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
    assert!(c.amplitude.iter().all(|a| *a >= 0.0));
    assert!(c.noise_mags.data.iter().all(|a| *a >= 0.0));
}

#[test]
fn reconstruct_rejects_bad_sources() {
    let model = hn_train(&corpus(2, 3), &HnConfig { steps: 1, ..quick_cfg() }).unwrap();
    let profile = GeneratorProfile::harmonic_noise();
    let mut req = GenerationRequest {
        target_class: 0,
        source: Some(AudioBuffer::new(vec![], 16000)),
        source_id: None,
        requested_length_s: 4.0,
        seed: 0,
    };
    assert!(hn_reconstruct(&model, &profile, &req).is_err());
    req.source = Some(AudioBuffer::silence(100, 8000));
    assert!(hn_reconstruct(&model, &profile, &req).is_err());
}

#[test]
fn polyphony_flag() {
    assert!(!is_polyphonic(&tone(220.0, 1.0, 0)));
    let a = tone(220.0, 1.0, 0);
    let b = tone(277.2, 1.0, 1);
    let chord = AudioBuffer::new(a.samples.iter().zip(&b.samples).map(|(x, y)| 0.5 * (x + y)).collect(), 16000);
    assert!(is_polyphonic(&chord));
}
