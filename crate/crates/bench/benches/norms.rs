use criterion::{criterion_group, criterion_main, Criterion};
use num_rational::BigRational;
use tslab_bench::{compact_21, uniform};
use tslab_core::{norm, preset, NormOptions, SparseVector};

fn plain_norms(c: &mut Criterion) {
    let spec = preset("tsirelson").unwrap();
    let opts = NormOptions::default();
    let x = uniform(5, 24);
    c.bench_function("tsirelson_norm_uniform_20_points", |b| {
        b.iter(|| norm(std::hint::black_box(&x), &spec, &opts).unwrap())
    });
    let y = compact_21();
    let mixed = preset("mixed_fn").unwrap();
    c.bench_function("mixed_fn_norm_compact_21_points", |b| {
        b.iter(|| norm(std::hint::black_box(&y), &mixed, &opts).unwrap())
    });
}

fn modified_norms(c: &mut Criterion) {
    let spec = preset("schlumprecht_modified").unwrap();
    let opts = NormOptions::default();
    let coeff = BigRational::new(1.into(), 2.into());
    let x = SparseVector::from_entries(
        (3..=12).map(|i| (i, coeff.clone() / BigRational::from(i64::from(i) .into()))).collect(),
    )
    .unwrap();
    c.bench_function("schlumprecht_modified_norm_10_points", |b| {
        b.iter(|| norm(std::hint::black_box(&x), &spec, &opts).unwrap())
    });
}

criterion_group!(benches, plain_norms, modified_norms);
criterion_main!(benches);
