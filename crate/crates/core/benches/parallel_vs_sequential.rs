//! Same workloads through `par::parallel` and `par::sequential`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use memopt::bankmap::{run_global, AnchorRegistry, DEFAULT_BANKS};
use memopt::dme::run_dme;
use memopt::frontend::{generate_random, generate_wavenet_analog};
use memopt::interp::{random_inputs, run};
use memopt::ir::Program;
use memopt::par;

type MapRange = fn(usize, &(dyn Fn(usize) -> u64 + Sync)) -> Vec<u64>;

fn sequential(n: usize, f: &(dyn Fn(usize) -> u64 + Sync)) -> Vec<u64> {
    par::sequential::map_range(n, f)
}

#[cfg(feature = "parallel")]
fn parallel(n: usize, f: &(dyn Fn(usize) -> u64 + Sync)) -> Vec<u64> {
    par::parallel::map_range(n, f)
}

fn strategies() -> Vec<(&'static str, MapRange)> {
    #[cfg_attr(not(feature = "parallel"), allow(unused_mut))]
    let mut s: Vec<(&'static str, MapRange)> = vec![("sequential", sequential)];
    #[cfg(feature = "parallel")]
    s.push(("parallel", parallel));
    s
}

/// Interpreter trials on the 124-pair chain, as `verify` runs them.
fn interpreter_trials(c: &mut Criterion) {
    let p = generate_wavenet_analog(124, 1, 0);
    let mut group = c.benchmark_group("interpreter_trials");
    for trials in [8usize, 32] {
        for (name, map) in strategies() {
            group.bench_with_input(BenchmarkId::new(name, trials), &trials, |b, &n| {
                b.iter(|| {
                    map(n, &|k| {
                        let out = run(&p, &random_inputs(&p, k as u64)).expect("runs");
                        out.len() as u64
                    })
                })
            });
        }
    }
    group.finish();
}

/// DME and global bank mapping over a batch of random programs.
fn pass_batch(c: &mut Criterion) {
    let programs: Vec<Program> = (0..64).map(generate_random).collect();
    let reg = AnchorRegistry::default();
    let mut group = c.benchmark_group("pass_batch");
    for (name, map) in strategies() {
        group.bench_function(BenchmarkId::new(name, programs.len()), |b| {
            b.iter(|| {
                map(programs.len(), &|k| {
                    let p = &programs[k];
                    let d = run_dme(p);
                    let (g, _, _) = run_global(&d.program, &reg, DEFAULT_BANKS).expect("maps");
                    black_box(g.nests.len() as u64)
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, interpreter_trials, pass_batch);
criterion_main!(benches);
