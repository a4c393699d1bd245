use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use coreclear::coreanalysis::JTable;
use coreclear::generate;
use coreclear::markets::clear_all;
use coreclear::mechanisms::{bocs_direct, ccg, vcg};
use coreclear::solver::solve_indicator;

fn clearing(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sg = generate::single_good(&mut rng, 8, false);
    let net = generate::network(&mut rng, 6);
    let mt = generate::multi_type_steps(&mut rng, 8, 3);
    c.bench_function("clear/single_good_8", |b| b.iter(|| clear_all(&sg.market, black_box(&sg.bids))));
    c.bench_function("clear/network_6", |b| b.iter(|| clear_all(&net.market, black_box(&net.bids))));
    c.bench_function("clear/multi_type_steps_8", |b| b.iter(|| clear_all(&mt.market, black_box(&mt.bids))));
}

fn payments(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = generate::network(&mut rng, 6);
    c.bench_function("vcg/network_6", |b| b.iter(|| vcg(&net.market, black_box(&net.bids), &net.true_costs)));
    c.bench_function("bocs_direct/network_6", |b| {
        b.iter(|| bocs_direct(&net.market, black_box(&net.bids), &net.true_costs))
    });
    c.bench_function("ccg/network_6", |b| b.iter(|| ccg(&net.market, black_box(&net.bids), &net.true_costs)));
}

fn analysis(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sg = generate::single_good(&mut rng, 10, true);
    c.bench_function("jtable/single_good_10", |b| b.iter(|| JTable::build(&sg.market, black_box(&sg.bids))));
    let table = JTable::build(&sg.market, &sg.bids).unwrap();
    c.bench_function("supermodular_witness/10", |b| b.iter(|| black_box(&table).supermodular_witness()));
}

fn indicator(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    c.bench_function("solve_indicator/k8", |b| {
        b.iter_batched(
            || generate::indicator_program(&mut rng, 8),
            |p| solve_indicator(&p),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, clearing, payments, analysis, indicator);
criterion_main!(benches);
