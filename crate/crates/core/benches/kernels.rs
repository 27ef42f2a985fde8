//! Sequential against data-parallel execution for the hot loops.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use seqmem::classifiers::SymbolTable;
use seqmem::config::RunConfig;
use seqmem::encoders::{PoolerParams, SpatialPooler};
use seqmem::exec::Exec;
use seqmem::sdr::Sdr;
use seqmem::symbol::Symbol;
use seqmem::tasklab::run_replicas;

const STRATEGIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn pooler_scores(c: &mut Criterion) {
    let width = 1200;
    let pooler = SpatialPooler::new(PoolerParams { seed: 1, ..PoolerParams::default() }, width).unwrap();
    let input = Sdr::random(width, 120, 2).unwrap();
    let mut g = c.benchmark_group("pooler_scores");
    for (name, exec) in STRATEGIES {
        g.bench_function(name, |b| b.iter(|| pooler.scores(black_box(&input), exec).unwrap()));
    }
    g.finish();
}

fn topk_scan(c: &mut Criterion) {
    let mut g = c.benchmark_group("topk_scan");
    for n in [1_000usize, 20_000] {
        let mut table = SymbolTable::new(2048);
        for i in 0..n {
            table.insert(Symbol::Seq(i as u32), &Sdr::random(2048, 40, i as u64).unwrap()).unwrap();
        }
        let predicted = Sdr::random(2048, 160, 99).unwrap();
        for (name, exec) in STRATEGIES {
            g.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| table.classify_topk_with(black_box(&predicted), 4, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn replicas(c: &mut Criterion) {
    let mut cfg = RunConfig::discrete();
    cfg.discrete.orders = vec![3];
    cfg.discrete.groups_per_order = 1;
    cfg.discrete.elements = 300;
    let mut g = c.benchmark_group("replicas");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(name, |b| b.iter(|| run_replicas(black_box(&cfg), 4, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, pooler_scores, topk_scan, replicas);
criterion_main!(benches);
