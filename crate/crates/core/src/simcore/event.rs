//! Register-level reference simulator for both dataflows.
//!
//! Every PE register is stepped once per clock. The simulator carries real
//! operand values, checks the assembled product against a plain GEMM, and counts
//! cycles from the first weight load (WS) or first broadcast (OS) to the cycle in
//! which the last output leaves the array. It shares no timing formulas with
//! the analytic models.

use super::{ArrayConfig, Dataflow, SramTraffic};
use crate::error::{Error, Result};
use crate::workload::GemmOp;

/// Largest array the reference simulator accepts.
pub const MAX_EVENT_SIM_PES: u64 = 64 * 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSimOutcome {
    pub cycles: u64,
    /// SRAM accesses observed at the array boundary.
    pub sram: SramTraffic,
}

/// Deterministic small-integer operands, so the product check is exact.
fn operands(g: &GemmOp) -> (Vec<i64>, Vec<i64>) {
    let (m, k, n) = (g.m as usize, g.k as usize, g.n as usize);
    let lhs = (0..m * k).map(|i| ((i * 7 + 3) % 11) as i64 - 5).collect();
    let rhs = (0..k * n).map(|i| ((i * 5 + 1) % 13) as i64 - 6).collect();
    (lhs, rhs)
}

fn reference_product(g: &GemmOp, lhs: &[i64], rhs: &[i64]) -> Vec<i64> {
    let (m, k, n) = (g.m as usize, g.k as usize, g.n as usize);
    let mut out = vec![0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] = (0..k).map(|p| lhs[i * k + p] * rhs[p * n + j]).sum();
        }
    }
    out
}

pub fn reference_event_sim(
    g: &GemmOp,
    a: &ArrayConfig,
    dataflow: Dataflow,
    double_buffered: bool,
) -> Result<EventSimOutcome> {
    if a.pes() > MAX_EVENT_SIM_PES {
        return Err(Error::Domain(format!(
            "reference simulator supports at most {MAX_EVENT_SIM_PES} PEs, got {}x{}",
            a.rows, a.cols
        )));
    }
    let (lhs, rhs) = operands(g);
    let mut out = vec![0i64; (g.m * g.n) as usize];
    let outcome = match dataflow {
        Dataflow::WeightStationary => WsArray::new(g, a, &lhs, &rhs).run(double_buffered, &mut out),
        Dataflow::OutputStationary => run_os(g, a, &lhs, &rhs, &mut out),
    };
    if out != reference_product(g, &lhs, &rhs) {
        return Err(Error::Invariant(format!(
            "{dataflow} reference simulation of {}x{}x{} produced a wrong product",
            g.m, g.k, g.n
        )));
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy)]
struct WsTile {
    k0: usize,
    kt: usize,
    n0: usize,
    nt: usize,
    first_k: bool,
}

struct WsArray<'a> {
    rows: usize,
    cols: usize,
    m: usize,
    k: usize,
    n: usize,
    lhs: &'a [i64],
    rhs: &'a [i64],
    tiles: Vec<WsTile>,
    active: Vec<i64>,
    shadow: Vec<i64>,
    /// Input travelling right: (row of X, value).
    x_reg: Vec<Option<(usize, i64)>>,
    /// Partial sum travelling down: (row of X, value).
    psum_reg: Vec<Option<(usize, i64)>>,
    sram: SramTraffic,
}

struct Load {
    tile: usize,
    rows_in: usize,
}

struct Stream {
    tile: usize,
    tick: usize,
    collected: usize,
}

impl<'a> WsArray<'a> {
    fn new(g: &GemmOp, a: &ArrayConfig, lhs: &'a [i64], rhs: &'a [i64]) -> Self {
        let (rows, cols) = (a.rows as usize, a.cols as usize);
        let (m, k, n) = (g.m as usize, g.k as usize, g.n as usize);
        let mut tiles = Vec::new();
        for n0 in (0..n).step_by(cols) {
            for k0 in (0..k).step_by(rows) {
                tiles.push(WsTile {
                    k0,
                    kt: rows.min(k - k0),
                    n0,
                    nt: cols.min(n - n0),
                    first_k: k0 == 0,
                });
            }
        }
        Self {
            rows,
            cols,
            m,
            k,
            n,
            lhs,
            rhs,
            tiles,
            active: vec![0; rows * cols],
            shadow: vec![0; rows * cols],
            x_reg: vec![None; rows * cols],
            psum_reg: vec![None; rows * cols],
            sram: SramTraffic::default(),
        }
    }

    /// Shifts the shadow weight chain down by one row and inserts the next weight
    /// row at the top. Rows enter bottom-first so row `i` of the tile ends at PE row `i`.
    fn load_step(&mut self, load: &mut Load) {
        let t = self.tiles[load.tile];
        for r in (1..self.rows).rev() {
            for c in 0..self.cols {
                self.shadow[r * self.cols + c] = self.shadow[(r - 1) * self.cols + c];
            }
        }
        let src = t.kt - 1 - load.rows_in;
        for c in 0..self.cols {
            self.shadow[c] = if c < t.nt {
                self.sram.weight_reads += 1;
                self.rhs[(t.k0 + src) * self.n + t.n0 + c]
            } else {
                0
            };
        }
        load.rows_in += 1;
    }

    /// One clock of the stream: every PE takes the input from its left neighbour and
    /// the partial sum from the PE above, both as registered last cycle.
    fn stream_step(&mut self, s: &mut Stream, out: &mut [i64]) {
        let t = self.tiles[s.tile];
        let cols = self.cols;
        let prev_x = self.x_reg.clone();
        let prev_p = self.psum_reg.clone();
        for r in 0..t.kt {
            for c in 0..t.nt {
                let x_in = if c == 0 {
                    // skewed feeder: X row `m` enters array row `r` at tick m + r
                    s.tick.checked_sub(r).filter(|&mm| mm < self.m).map(|mm| {
                        self.sram.input_reads += 1;
                        (mm, self.lhs[mm * self.k + t.k0 + r])
                    })
                } else {
                    prev_x[r * cols + c - 1]
                };
                let p_in = if r == 0 {
                    x_in.map(|(mm, _)| (mm, 0))
                } else {
                    prev_p[(r - 1) * cols + c]
                };
                let idx = r * cols + c;
                self.x_reg[idx] = x_in;
                self.psum_reg[idx] = match (x_in, p_in) {
                    (Some((mx, xv)), Some((mp, pv))) => {
                        assert_eq!(mx, mp, "input and partial sum out of step");
                        Some((mx, pv + self.active[idx] * xv))
                    }
                    (None, None) => None,
                    _ => panic!("input and partial sum out of step"),
                };
            }
        }
        for c in 0..t.nt {
            if let Some((mm, v)) = self.psum_reg[(t.kt - 1) * cols + c] {
                let o = &mut out[mm * self.n + t.n0 + c];
                if t.first_k {
                    *o = v;
                } else {
                    self.sram.output_reads += 1;
                    *o += v;
                }
                self.sram.output_writes += 1;
                s.collected += 1;
            }
        }
        s.tick += 1;
    }

    fn run(mut self, double_buffered: bool, out: &mut [i64]) -> EventSimOutcome {
        let mut clock = 0u64;
        let mut next_load = 1;
        let mut load = Some(Load {
            tile: 0,
            rows_in: 0,
        });
        let mut loaded: Option<usize> = None;
        let mut stream: Option<Stream> = None;
        let mut streamed = 0;

        while streamed < self.tiles.len() {
            if let Some(s) = stream.as_mut() {
                self.stream_step(s, out);
            }
            if let Some(l) = load.as_mut() {
                self.load_step(l);
            }
            clock += 1;

            if let Some(s) = &stream {
                if s.collected == self.m * self.tiles[s.tile].nt {
                    stream = None;
                    streamed += 1;
                    self.x_reg.fill(None);
                    self.psum_reg.fill(None);
                }
            }
            if let Some(l) = &load {
                if l.rows_in == self.tiles[l.tile].kt {
                    loaded = Some(l.tile);
                    load = None;
                }
            }
            if stream.is_none() {
                if let Some(tile) = loaded.take() {
                    std::mem::swap(&mut self.active, &mut self.shadow);
                    stream = Some(Stream {
                        tile,
                        tick: 0,
                        collected: 0,
                    });
                }
            }
            // a second weight bank frees up as soon as the previous one goes live;
            // without it the next load waits for the array to go idle
            let bank_free = if double_buffered {
                load.is_none() && loaded.is_none()
            } else {
                load.is_none() && loaded.is_none() && stream.is_none()
            };
            if bank_free && next_load < self.tiles.len() {
                load = Some(Load {
                    tile: next_load,
                    rows_in: 0,
                });
                next_load += 1;
            }
        }
        EventSimOutcome {
            cycles: clock,
            sram: self.sram,
        }
    }
}

fn run_os(
    g: &GemmOp,
    a: &ArrayConfig,
    lhs: &[i64],
    rhs: &[i64],
    out: &mut [i64],
) -> EventSimOutcome {
    let (rows, cols) = (a.rows as usize, a.cols as usize);
    let (m, k, n) = (g.m as usize, g.k as usize, g.n as usize);
    let mut acc = vec![0i64; rows * cols];
    let mut sram = SramTraffic::default();
    let mut clock = 0u64;

    for m0 in (0..m).step_by(rows) {
        let mt = rows.min(m - m0);
        for n0 in (0..n).step_by(cols) {
            let nt = cols.min(n - n0);
            acc.fill(0);
            // accumulate: one column of X and one row of W broadcast per clock
            for p in 0..k {
                let x_bus: Vec<i64> = (0..mt).map(|r| lhs[(m0 + r) * k + p]).collect();
                let w_bus: Vec<i64> = (0..nt).map(|c| rhs[p * n + n0 + c]).collect();
                sram.input_reads += mt as u64;
                sram.weight_reads += nt as u64;
                for r in 0..mt {
                    for c in 0..nt {
                        acc[r * cols + c] += x_bus[r] * w_bus[c];
                    }
                }
                clock += 1;
            }
            // drain: the bottom row leaves each clock and the rest shift down
            for step in 0..mt {
                let leaving = mt - 1 - step;
                for c in 0..nt {
                    out[(m0 + leaving) * n + n0 + c] = acc[(mt - 1) * cols + c];
                    sram.output_writes += 1;
                }
                for r in (1..mt).rev() {
                    for c in 0..nt {
                        acc[r * cols + c] = acc[(r - 1) * cols + c];
                    }
                }
                acc[..nt].fill(0);
                clock += 1;
            }
        }
    }
    EventSimOutcome {
        cycles: clock,
        sram,
    }
}
