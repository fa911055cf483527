use super::{dram_fetch, tile_sizes, ArrayConfig, Dataflow, MemConfig, SimResult, SramTraffic};
use crate::workload::GemmOp;

/// Weight-stationary model.
///
/// Tiles run N-tile outer, K-tile inner. Each `K_t x N_t` weight tile is preloaded
/// one row per cycle (`K_t` cycles), then all `M` input rows stream through with a
/// skewed entry and a column drain: `M + K_t + N_t - 2` cycles. With double
/// buffering the next preload runs under the current stream, exposing only
/// `max(0, K_t(next) - stream(current))` cycles. Partial sums accumulate in the
/// output SRAM, so every K-tile after the first reads back `M x N_t` words.
pub fn simulate_ws(g: &GemmOp, a: &ArrayConfig, m: &MemConfig) -> SimResult {
    let k_tiles = tile_sizes(g.k, a.rows);
    let n_tiles = tile_sizes(g.n, a.cols);
    let k_count = g.k.div_ceil(a.rows);
    let n_count = g.n.div_ceil(a.cols);

    let mut cycles = 0u64;
    let mut prev_stream: Option<u64> = None;
    let mut sram = SramTraffic::default();
    for n_t in n_tiles {
        for (ki, k_t) in k_tiles.clone().enumerate() {
            let stream = g.m + k_t + n_t - 2;
            cycles += match prev_stream {
                Some(prev) if m.double_buffered => k_t.saturating_sub(prev),
                _ => k_t,
            };
            cycles += stream;
            prev_stream = Some(stream);

            sram.weight_reads += k_t * n_t;
            sram.input_reads += g.m * k_t;
            sram.output_writes += g.m * n_t;
            if ki > 0 {
                sram.output_reads += g.m * n_t;
            }
        }
    }

    let wb = g.precision.word_bytes();
    let input = dram_fetch(g.m * g.k * wb, m.input_bytes(), n_count);
    // every weight element belongs to exactly one tile
    let weight = g.k * g.n * wb;
    let psum_working_set = g.m * g.n.min(a.cols) * m.accum_bytes;
    let output = if psum_working_set <= m.output_bytes() {
        g.m * g.n * wb
    } else {
        // spilled partial sums: written per K-tile, read back for every K-tile after the first
        (2 * k_count - 1) * g.m * g.n * m.accum_bytes
    };

    SimResult::assemble(
        g,
        a,
        m,
        Dataflow::WeightStationary,
        cycles,
        sram,
        input + weight + output,
    )
}
