use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use loraq_core::sched::{compare, run_trace};
use loraq_core::simcore::{reference_event_sim, simulate};
use loraq_core::workload::build_lora_trace;
use loraq_core::{
    ArrayConfig, Dataflow, GemmOp, HardwareConfig, MemConfig, ModelConfig, Pass, Policy, Precision,
};

fn analytic(c: &mut Criterion) {
    let a = ArrayConfig::default();
    let m = MemConfig::default();
    let mut group = c.benchmark_group("analytic");
    for (label, dims) in [
        ("attn_4096", (4096, 320, 77)),
        ("lora_down", (77, 768, 4)),
        ("proj_1280", (256, 1280, 1280)),
    ] {
        let g = GemmOp::new(label, "b", Pass::Forward, dims, Precision::Int8).unwrap();
        for df in [Dataflow::WeightStationary, Dataflow::OutputStationary] {
            group.bench_with_input(BenchmarkId::new(df.to_string(), label), &g, |b, g| {
                b.iter(|| simulate(black_box(g), &a, &m, df))
            });
        }
    }
    group.finish();
}

fn reference(c: &mut Criterion) {
    let a = ArrayConfig::new(8, 8, 400.0).unwrap();
    let g = GemmOp::new("g", "b", Pass::Forward, (64, 32, 24), Precision::Int8).unwrap();
    let mut group = c.benchmark_group("reference_sim");
    for df in [Dataflow::WeightStationary, Dataflow::OutputStationary] {
        group.bench_function(df.to_string(), |b| {
            b.iter(|| reference_event_sim(black_box(&g), &a, df, true).unwrap())
        });
    }
    group.finish();
}

fn traces(c: &mut Criterion) {
    let model = ModelConfig::sd_v1_default();
    let hw = HardwareConfig::default();
    let trace = build_lora_trace(&model).unwrap();
    c.bench_function("default_lora_trace_hybrid", |b| {
        b.iter(|| {
            run_trace(
                black_box(&trace),
                &hw.array,
                &hw.memory,
                &hw.energy,
                Policy::HybridMinLatency,
            )
            .unwrap()
        })
    });
    c.bench_function("compare_default", |b| {
        b.iter(|| compare(black_box(&model), &hw).unwrap())
    });
}

criterion_group!(benches, analytic, reference, traces);
criterion_main!(benches);
