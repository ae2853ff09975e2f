use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use pulsecancel_core::spectral::{top_peaks, SpectralEstimator};
use pulsecancel_core::Taper;

fn spectrum(c: &mut Criterion) {
    let x: Vec<f64> = (0..2000)
        .map(|i| {
            let t = i as f64 / 100.0;
            (2.0 * std::f64::consts::PI * 1.2 * t).sin()
                + 0.5 * (2.0 * std::f64::consts::PI * 2.4 * t).cos()
        })
        .collect();
    let mut est = SpectralEstimator::new();

    let mut g = c.benchmark_group("power spectrum 20 s");
    for pad in [1, 4, 8] {
        g.bench_with_input(BenchmarkId::from_parameter(pad), &pad, |b, &pad| {
            b.iter(|| {
                est.power_spectrum(black_box(&x), 100.0, pad, Taper::Hann)
                    .unwrap()
            })
        });
    }
    g.finish();

    let s = est.power_spectrum(&x, 100.0, 8, Taper::Hann).unwrap();
    c.bench_function("top peaks", |b| {
        b.iter(|| top_peaks(black_box(&s), 0.7, 4.0, 2).unwrap())
    });
}

criterion_group!(benches, spectrum);
criterion_main!(benches);
