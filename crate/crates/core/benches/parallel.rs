use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use augeval::corpus::AudioBuffer;
use augeval::exec;
use augeval::features::{mel_spectrogram, MelConfig};

fn clips(n: usize, secs: f64, rate: u32) -> Vec<AudioBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..n)
        .map(|_| {
            let len = (secs * rate as f64) as usize;
            AudioBuffer::new((0..len).map(|_| rng.random_range(-0.5f32..0.5)).collect(), rate)
        })
        .collect()
}

fn featurize(c: &mut Criterion) {
    let cfg = MelConfig::default();
    let mut group = c.benchmark_group("mel_spectrogram");
    group.sample_size(10);
    for n in [8usize, 32] {
        let audio = clips(n, 2.0, cfg.sample_rate_hz);
        group.bench_with_input(BenchmarkId::new("seq", n), &audio, |b, a| {
            b.iter(|| exec::seq::map_slice(a, |x| mel_spectrogram(x, &cfg).unwrap()))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", n), &audio, |b, a| {
            b.iter(|| exec::par::map_slice(a, |x| mel_spectrogram(x, &cfg).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, featurize);
criterion_main!(benches);
