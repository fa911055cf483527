use loraq_core::sched::{compare, run_trace};
use loraq_core::workload::{
    build_full_finetune_trace, build_lora_trace, check_shape_chaining, trace_macs, Projection,
};
use loraq_core::{
    ArrayConfig, Dataflow, EnergyConfig, GemmOp, HardwareConfig, MemConfig, ModelConfig, Pass,
    Policy, Precision,
};
use proptest::prelude::*;

/// Independent count of the LoRA trace MACs for K/V adapters, one block at a time.
fn lora_macs_by_hand(cfg: &ModelConfig) -> u64 {
    let r = cfg.rank as u64;
    cfg.blocks
        .iter()
        .map(|b| {
            let (d, c, i, t) = (
                b.d_model as u64,
                b.d_context as u64,
                b.n_img as u64,
                b.n_txt as u64,
            );
            let forward = i * d * d      // q
                + 2 * t * c * d          // k, v
                + 2 * (t * c * r + t * r * d) // adapters
                + 2 * i * d * t          // score, value
                + i * d * d; // out
            let backward = 2 * i * d * d // out and q input gradients
                + 4 * i * d * t          // both operand gradients of score and value
                + 2 * (t * d * r + d * t * r + c * t * r); // adapter gradients
            let update = 2 * (c * r + d * r);
            (forward + backward + update) * b.count as u64
        })
        .sum()
}

#[test]
fn default_lora_trace_macs_golden() {
    let cfg = ModelConfig::sd_v1_default();
    let trace = build_lora_trace(&cfg).unwrap();
    assert_eq!(trace_macs(&trace), lora_macs_by_hand(&cfg));
    // frozen after the hand check above
    assert_eq!(trace_macs(&trace), 31_824_128_000);
}

#[test]
fn default_traces_chain_and_conserve() {
    let cfg = ModelConfig::sd_v1_default();
    let lora = build_lora_trace(&cfg).unwrap();
    let full = build_full_finetune_trace(&cfg).unwrap();
    check_shape_chaining(&lora).unwrap();
    check_shape_chaining(&full).unwrap();

    let frozen_forward = |t: &[GemmOp]| -> u64 {
        t.iter()
            .filter(|g| g.pass == Pass::Forward && !g.name.contains("_lora_"))
            .map(GemmOp::macs)
            .sum()
    };
    assert_eq!(frozen_forward(&lora), frozen_forward(&full));
    assert!(lora.iter().all(|g| g.precision == Precision::Int8));
    assert!(full.iter().all(|g| g.precision == Precision::Fp32));
}

#[test]
fn lora_trace_has_no_frozen_weight_gradient() {
    let lora = build_lora_trace(&ModelConfig::sd_v1_default()).unwrap();
    for p in Projection::ALL {
        let base = p.op_name();
        assert!(
            !lora.iter().any(|g| g.base_name() == base
                && (g.name.ends_with(".grad_w") || g.name.ends_with(".update"))),
            "{base} has a weight gradient or update in the LoRA trace"
        );
    }
}

#[test]
fn default_comparison_is_deterministic_and_ordered() {
    let model = ModelConfig::sd_v1_default();
    let hw = HardwareConfig::default();
    let a = compare(&model, &hw).unwrap();
    let b = compare(&model, &hw).unwrap();
    assert_eq!(a, b);
    let names: Vec<_> = a.rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(
        names,
        ["FullModel-FP32", "LoRA-OS", "LoRA-WS", "LoRA-Hybrid"]
    );
    assert_eq!(a.rows[0].speedup_vs_full, 1.0);
    // directional claims that hold under the model
    assert!(a.hybrid_speedup_vs_full() > 1.0);
    assert!(a.hybrid_speedup_vs("LoRA-OS") >= 1.0);
    assert!(a.hybrid_speedup_vs("LoRA-WS") >= 1.0);
    assert!(a.hybrid_edp_gain_vs_full() > 1.0);
}

#[test]
fn default_trace_uses_both_dataflows() {
    let hw = HardwareConfig::default();
    let trace = build_lora_trace(&ModelConfig::sd_v1_default()).unwrap();
    let r = run_trace(
        &trace,
        &hw.array,
        &hw.memory,
        &hw.energy,
        Policy::HybridMinLatency,
    )
    .unwrap();
    assert!(r.count(Dataflow::WeightStationary) > 0);
    assert!(r.count(Dataflow::OutputStationary) > 0);
}

fn gemm() -> impl Strategy<Value = GemmOp> {
    let dim = prop_oneof![1u64..10, Just(77u64), 10u64..2000, Just(4096u64)];
    (dim.clone(), dim.clone(), dim, any::<bool>()).prop_map(|(m, k, n, int8)| {
        let p = if int8 {
            Precision::Int8
        } else {
            Precision::Fp32
        };
        GemmOp::new("g", "l", Pass::Forward, (m, k, n), p).unwrap()
    })
}

fn policy() -> impl Strategy<Value = Policy> {
    prop_oneof![
        Just(Policy::ForceWS),
        Just(Policy::ForceOS),
        Just(Policy::HybridMinLatency),
        Just(Policy::HybridMinEDP),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hybrid_dominates_fixed_policies(
        trace in prop::collection::vec(gemm(), 1..20), rows in 1u64..128, cols in 1u64..128,
    ) {
        let a = ArrayConfig::new(rows, cols, 400.0).unwrap();
        let (m, e) = (MemConfig::default(), EnergyConfig::default());
        let cycles = |p| run_trace(&trace, &a, &m, &e, p).unwrap().totals.cycles;
        let hy = cycles(Policy::HybridMinLatency);
        let (ws, os) = (cycles(Policy::ForceWS), cycles(Policy::ForceOS));
        prop_assert!(hy <= ws && hy <= os);

        let report = run_trace(&trace, &a, &m, &e, Policy::HybridMinLatency).unwrap();
        let winners_differ = report.count(Dataflow::WeightStationary) > 0
            && report.count(Dataflow::OutputStationary) > 0
            && trace.iter().zip(&report.ops).all(|(g, o)| {
                let other = match o.result.dataflow {
                    Dataflow::WeightStationary => Dataflow::OutputStationary,
                    Dataflow::OutputStationary => Dataflow::WeightStationary,
                };
                loraq_core::simcore::simulate(g, &a, &m, other).cycles > o.result.cycles
            });
        if winners_differ {
            prop_assert!(hy < ws.min(os));
        }
    }

    #[test]
    fn totals_are_sums_of_ops(trace in prop::collection::vec(gemm(), 1..12), p in policy()) {
        let hw = HardwareConfig::default();
        let r = run_trace(&trace, &hw.array, &hw.memory, &hw.energy, p).unwrap();
        r.check_totals(&hw.array).unwrap();
        let t = &r.totals;
        prop_assert_eq!(t.cycles, r.ops.iter().map(|o| o.result.cycles).sum::<u64>());
        prop_assert_eq!(t.macs, r.ops.iter().map(|o| o.result.macs).sum::<u64>());
        prop_assert_eq!(t.dram_bytes, r.ops.iter().map(|o| o.result.dram_bytes).sum::<u64>());
        prop_assert_eq!(t.sram_read_bytes, r.ops.iter().map(|o| o.result.sram_read_bytes).sum::<u64>());
        prop_assert_eq!(t.sram_write_bytes, r.ops.iter().map(|o| o.result.sram_write_bytes).sum::<u64>());
        let e: f64 = r.ops.iter().map(|o| o.energy_j).sum();
        prop_assert!((t.energy_j - e).abs() <= 1e-12 * e.abs());
        prop_assert_eq!(r.clone(), run_trace(&trace, &hw.array, &hw.memory, &hw.energy, p).unwrap());
    }
}
