use super::{dram_fetch, tile_sizes, ArrayConfig, Dataflow, MemConfig, SimResult, SramTraffic};
use crate::workload::GemmOp;

/// Output-stationary model.
///
/// Each `M_t x N_t` output tile accumulates for `K` cycles (one broadcast
/// input/weight pair per cycle) and then drains one row per cycle. There is a
/// single accumulator set, so the drain of `M_t` cycles is serial with the next tile.
/// Outputs are written once; there is no partial-sum read-back.
pub fn simulate_os(g: &GemmOp, a: &ArrayConfig, m: &MemConfig) -> SimResult {
    let m_tiles = tile_sizes(g.m, a.rows);
    let n_tiles = tile_sizes(g.n, a.cols);
    let m_count = g.m.div_ceil(a.rows);
    let n_count = g.n.div_ceil(a.cols);

    let mut cycles = 0u64;
    let mut sram = SramTraffic::default();
    for m_t in m_tiles {
        for n_t in n_tiles.clone() {
            cycles += g.k + m_t;
            sram.input_reads += g.k * m_t;
            sram.weight_reads += g.k * n_t;
            sram.output_writes += m_t * n_t;
        }
    }

    let wb = g.precision.word_bytes();
    let input = dram_fetch(g.m * g.k * wb, m.input_bytes(), n_count);
    let weight = dram_fetch(g.k * g.n * wb, m.weight_bytes(), m_count);
    let output = g.m * g.n * wb;

    SimResult::assemble(
        g,
        a,
        m,
        Dataflow::OutputStationary,
        cycles,
        sram,
        input + weight + output,
    )
}
