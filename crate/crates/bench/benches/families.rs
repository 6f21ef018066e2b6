use criterion::{criterion_group, criterion_main, Criterion};
use tslab_bench::uniform;
use tslab_core::{FamilyDescriptor, FiniteSet};

fn membership(c: &mut Criterion) {
    let family = FamilyDescriptor::schreier(2);
    let set = FiniteSet::new((12..=40).collect()).unwrap();
    c.bench_function("schreier2_membership_29_points", |b| {
        b.iter(|| family.member(std::hint::black_box(&set)))
    });
}

fn weighted_maximum(c: &mut Criterion) {
    let x = uniform(10, 120);
    let s1 = FamilyDescriptor::schreier(1);
    c.bench_function("schreier1_max_weight_111_points", |b| {
        b.iter(|| s1.max_weight(std::hint::black_box(&x)).unwrap())
    });
    let s2 = FamilyDescriptor::schreier(2);
    let y = uniform(8, 48);
    c.bench_function("schreier2_max_weight_41_points", |b| {
        b.iter(|| s2.max_weight(std::hint::black_box(&y)).unwrap())
    });
}

fn window_enumeration(c: &mut Criterion) {
    let family = FamilyDescriptor::schreier(1);
    c.bench_function("schreier1_maximal_members_window_6_16", |b| {
        b.iter(|| family.maximal_members(6, 16).unwrap())
    });
}

criterion_group!(benches, membership, weighted_maximum, window_enumeration);
criterion_main!(benches);
