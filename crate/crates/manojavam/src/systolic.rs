//! Cycle-stepped simulation of one output-stationary T-by-T systolic MAC
//! array and its paired partial-product accumulator.
//!
//! Two equivalent product paths exist. [`SystolicArray::pump`] steps the PE
//! grid register by register and is used to validate the dataflow itself
//! (occupancy, fire windows, drain timing). [`tile_product_fast`] computes
//! the identical result — same per-element MAC order, bit for bit — and
//! charges the same deterministic `3T-2` cycles per tile without touching
//! per-cycle state. The engine defaults to the fast path; the equivalence
//! of the two is pinned by tests here.

use crate::fixed::SatTracker;
use crate::matrix::{SkewedStream, Tile};
use crate::scalar::Scalar;

/// One multiply-accumulate processing element.
#[derive(Clone, Debug)]
struct Pe<S> {
    acc: S,
    a_reg: (S, bool),
    b_reg: (S, bool),
    fires: u64,
}

/// The cycle-stepped PE grid.
#[derive(Clone, Debug)]
pub struct SystolicArray<S> {
    t: usize,
    pes: Vec<Pe<S>>,
    cycle: u64,
    busy: bool,
}

/// Outcome of pumping a stream pair through the grid.
#[derive(Clone, Debug)]
pub struct PumpReport<S> {
    /// In-PE accumulated product of the unskewed tiles (summed over all
    /// tiles if the streams were concatenated back to back).
    pub product: Tile<S>,
    pub cycles: u64,
    /// Valid MAC count per PE, row-major.
    pub fires_per_pe: Vec<u64>,
    /// Cycles during which every PE performed a valid MAC.
    pub full_occupancy_cycles: Vec<u64>,
}

impl<S: Scalar> SystolicArray<S> {
    pub fn new(t: usize, exemplar: S) -> Self {
        let zero = exemplar.zero_like();
        let pe = Pe { acc: zero, a_reg: (zero, false), b_reg: (zero, false), fires: 0 };
        Self { t, pes: vec![pe; t * t], cycle: 0, busy: false }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_busy(&self) -> bool {
        self.busy
    }

    /// Stream a skewed LHS/RHS pair through the grid, returning the product
    /// and the exact cycle count (`3T-2` for a single-tile stream: `T-1`
    /// fill, `T` compute, `T-1` drain).
    pub fn pump(
        &mut self,
        lhs: &SkewedStream<S>,
        rhs: &SkewedStream<S>,
        sats: &SatTracker,
    ) -> crate::Result<PumpReport<S>> {
        let t = self.t;
        if lhs.lane_count() != t || rhs.lane_count() != t {
            return Err(crate::Error::DimMismatch(format!(
                "stream lanes {}x{} do not match array dimension {}",
                lhs.lane_count(),
                rhs.lane_count(),
                t
            )));
        }
        if lhs.total_slots() != rhs.total_slots() {
            return Err(crate::Error::DimMismatch(
                "lhs and rhs streams carry different slot counts".into(),
            ));
        }
        if self.busy {
            return Err(crate::Error::ModeMismatch("systolic array is busy".into()));
        }
        self.busy = true;

        let zero = self.pes[0].acc.zero_like();
        for pe in &mut self.pes {
            pe.acc = zero;
            pe.a_reg = (zero, false);
            pe.b_reg = (zero, false);
            pe.fires = 0;
        }

        // Data occupies total_slots edge cycles; the final slot still needs
        // T-1 cycles to propagate to the far corner.
        let cycles = (lhs.total_slots() + t - 1) as u64;
        let mut full_occupancy_cycles = Vec::new();

        for cycle in 0..cycles {
            // Shift from the previous state: operand A moves along rows,
            // operand B down columns; edge PEs take the injected slots.
            let prev = self.pes.clone();
            for i in 0..t {
                for j in 0..t {
                    let pe = &mut self.pes[i * t + j];
                    pe.a_reg =
                        if j == 0 { lhs.slot(i, cycle as usize) } else { prev[i * t + j - 1].a_reg };
                    pe.b_reg =
                        if i == 0 { rhs.slot(j, cycle as usize) } else { prev[(i - 1) * t + j].b_reg };
                    if pe.a_reg.1 && pe.b_reg.1 {
                        pe.acc = pe.acc.add_sat(pe.a_reg.0.mul_sat(pe.b_reg.0, sats), sats);
                        pe.fires += 1;
                    }
                }
            }
            if self.pes.iter().all(|pe| pe.a_reg.1 && pe.b_reg.1) {
                full_occupancy_cycles.push(cycle);
            }
        }
        self.cycle += cycles;
        self.busy = false;

        let mut product = Tile::zero(t, 0, 0, zero);
        product.set_valid(t, t);
        for i in 0..t {
            for j in 0..t {
                product.set(i, j, self.pes[i * t + j].acc);
            }
        }
        Ok(PumpReport {
            product,
            cycles,
            fires_per_pe: self.pes.iter().map(|pe| pe.fires).collect(),
            full_occupancy_cycles,
        })
    }
}

/// Deterministic per-tile cycle cost of the output-stationary dataflow:
/// T-1 fill, T compute, T-1 drain.
pub fn tile_cycles(t: usize) -> u64 {
    (3 * t - 2) as u64
}

/// Tile product on the fast path: the same MAC per PE in the same k order
/// as the stepped grid, with the cycle count taken from [`tile_cycles`].
pub fn tile_product_fast<S: Scalar>(
    lhs: &Tile<S>,
    rhs: &Tile<S>,
    sats: &SatTracker,
) -> crate::Result<(Tile<S>, u64)> {
    if lhs.t() != rhs.t() {
        return Err(crate::Error::DimMismatch(format!(
            "tile sizes differ: {} vs {}",
            lhs.t(),
            rhs.t()
        )));
    }
    let t = lhs.t();
    let zero = lhs.get(0, 0).zero_like();
    let mut out = Tile::zero(t, lhs.origin().0, rhs.origin().1, zero);
    out.set_valid(lhs.valid_rows(), rhs.valid_cols());
    for i in 0..t {
        for j in 0..t {
            let mut acc = zero;
            for k in 0..t {
                acc = acc.add_sat(lhs.get(i, k).mul_sat(rhs.get(k, j), sats), sats);
            }
            out.set(i, j, acc);
        }
    }
    Ok((out, tile_cycles(t)))
}

/// Partial-product accumulator paired with one systolic array.
#[derive(Clone, Debug)]
pub struct Accumulator<S> {
    t: usize,
    partial: Tile<S>,
    passes_accumulated: u32,
    expected_passes: u32,
}

impl<S: Scalar> Accumulator<S> {
    pub fn new(t: usize, exemplar: S) -> Self {
        Self { t, partial: Tile::zero(t, 0, 0, exemplar), passes_accumulated: 0, expected_passes: 0 }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn passes_accumulated(&self) -> u32 {
        self.passes_accumulated
    }

    /// Arm the accumulator for one output block: its origin and the number
    /// of product tiles that must arrive before a drain is legal.
    pub fn begin_block(&mut self, block_row: usize, block_col: usize, expected: u32) {
        let zero = self.partial.get(0, 0).zero_like();
        self.partial = Tile::zero(self.t, block_row, block_col, zero);
        self.passes_accumulated = 0;
        self.expected_passes = expected;
    }

    /// Elementwise add of one product tile.
    pub fn accumulate(&mut self, product: &Tile<S>, sats: &SatTracker) -> crate::Result<()> {
        if product.t() != self.t {
            return Err(crate::Error::DimMismatch(format!(
                "accumulator holds {}x{} tiles, got {}x{}",
                self.t,
                self.t,
                product.t(),
                product.t()
            )));
        }
        for r in 0..self.t {
            for c in 0..self.t {
                self.partial.set(r, c, self.partial.get(r, c).add_sat(product.get(r, c), sats));
            }
        }
        let vr = self.partial.valid_rows().max(product.valid_rows());
        let vc = self.partial.valid_cols().max(product.valid_cols());
        self.partial.set_valid(vr, vc);
        self.passes_accumulated += 1;
        Ok(())
    }

    /// Hand the completed block downstream and reset to zero / zero passes.
    pub fn drain(&mut self) -> crate::Result<Tile<S>> {
        if self.passes_accumulated < self.expected_passes {
            return Err(crate::Error::IncompleteAccumulation {
                got: self.passes_accumulated,
                expected: self.expected_passes,
            });
        }
        let zero = self.partial.get(0, 0).zero_like();
        let (br, bc) = self.partial.origin();
        let out = std::mem::replace(&mut self.partial, Tile::zero(self.t, br, bc, zero));
        self.passes_accumulated = 0;
        self.expected_passes = 0;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{mpu_skew_lhs, mpu_skew_rhs, tile, Matrix};
    use crate::oracle::oracle_matmul;

    fn rng_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut state = seed | 1;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 16) as i32 % 2000) as f64 / 128.0
        };
        let data = (0..rows * cols).map(|_| next()).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn pump_tiles(a: &Matrix<f64>, b: &Matrix<f64>, t: usize) -> (Tile<f64>, u64) {
        let ta = tile(a, t).unwrap();
        let tb = tile(b, t).unwrap();
        let sats = SatTracker::new();
        let mut sa = SystolicArray::new(t, 0.0f64);
        let report = sa
            .pump(&mpu_skew_lhs(ta.tile_at(0, 0)), &mpu_skew_rhs(tb.tile_at(0, 0)), &sats)
            .unwrap();
        (report.product, report.cycles)
    }

    #[test]
    fn identity_times_a_is_a() {
        let a = rng_matrix(4, 4, 11);
        let id = Matrix::identity_like(4, 1.0f64);
        let (p, cycles) = pump_tiles(&id, &a, 4);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(p.get(i, j), a.get(i, j));
            }
        }
        assert_eq!(cycles, 10); // 3*4 - 2
    }

    #[test]
    fn zero_times_a_is_zero() {
        let z = Matrix::filled(4, 4, 0.0f64);
        let a = rng_matrix(4, 4, 5);
        let (p, _) = pump_tiles(&z, &a, 4);
        assert!(p.is_all_zero());
    }

    #[test]
    fn sixteen_by_sixteen_matches_oracle_and_cycle_count() {
        let a = rng_matrix(16, 16, 21);
        let b = rng_matrix(16, 16, 22);
        let (p, cycles) = pump_tiles(&a, &b, 16);
        let want = oracle_matmul(&a, &b);
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(p.get(i, j), want.get(i, j));
            }
        }
        assert_eq!(cycles, 46);
    }

    #[test]
    fn streaming_equals_dense_across_sizes() {
        // 500 random pairs spread over t in {2,4,8,16}; the stepped grid and
        // the dense oracle must agree bit for bit on the float path.
        let mut case = 0u64;
        for t in [2usize, 4, 8, 16] {
            for rep in 0..125 {
                case += 1;
                let a = rng_matrix(t, t, 1000 + case);
                let b = rng_matrix(t, t, 2000 + case);
                let (p, cycles) = pump_tiles(&a, &b, t);
                let want = oracle_matmul(&a, &b);
                for i in 0..t {
                    for j in 0..t {
                        assert_eq!(p.get(i, j), want.get(i, j), "t={t} rep={rep}");
                    }
                }
                assert_eq!(cycles, tile_cycles(t));
            }
        }
    }

    #[test]
    fn fast_path_is_bit_identical_to_stepped_grid() {
        let sats = SatTracker::new();
        for t in [2usize, 3, 4, 8] {
            for rep in 0..50u64 {
                let a = rng_matrix(t, t, 31 * t as u64 + rep);
                let b = rng_matrix(t, t, 77 * t as u64 + rep);
                let ta = tile(&a, t).unwrap();
                let tb = tile(&b, t).unwrap();
                let (fast, fast_cycles) =
                    tile_product_fast(ta.tile_at(0, 0), tb.tile_at(0, 0), &sats).unwrap();
                let mut sa = SystolicArray::new(t, 0.0f64);
                let report = sa
                    .pump(&mpu_skew_lhs(ta.tile_at(0, 0)), &mpu_skew_rhs(tb.tile_at(0, 0)), &sats)
                    .unwrap();
                for i in 0..t {
                    for j in 0..t {
                        assert_eq!(fast.get(i, j), report.product.get(i, j));
                    }
                }
                assert_eq!(fast_cycles, report.cycles);
            }
        }
    }

    #[test]
    fn cycle_count_is_deterministic() {
        let a = rng_matrix(8, 8, 3);
        let b = rng_matrix(8, 8, 4);
        let (_, c1) = pump_tiles(&a, &b, 8);
        let (_, c2) = pump_tiles(&a, &b, 8);
        assert_eq!(c1, c2);
        assert_eq!(c1, 22);
    }

    #[test]
    fn lane_mismatch_rejected() {
        let a = rng_matrix(4, 4, 3);
        let ta = tile(&a, 4).unwrap();
        let sats = SatTracker::new();
        let mut sa = SystolicArray::new(8, 0.0f64);
        let err = sa.pump(&mpu_skew_lhs(ta.tile_at(0, 0)), &mpu_skew_rhs(ta.tile_at(0, 0)), &sats);
        assert!(err.is_err());
    }

    #[test]
    fn steady_state_occupancy_with_back_to_back_tiles() {
        // Two tiles streamed back to back: every PE runs a valid MAC on each
        // cycle of the primed window [2T-2, mT-1] and fires exactly m*T
        // times overall.
        let t = 4;
        let m = 2;
        let a1 = rng_matrix(t, t, 71);
        let a2 = rng_matrix(t, t, 72);
        let b1 = rng_matrix(t, t, 73);
        let b2 = rng_matrix(t, t, 74);
        let lhs = mpu_skew_lhs(tile(&a1, t).unwrap().tile_at(0, 0))
            .concat(&mpu_skew_lhs(tile(&a2, t).unwrap().tile_at(0, 0)));
        let rhs = mpu_skew_rhs(tile(&b1, t).unwrap().tile_at(0, 0))
            .concat(&mpu_skew_rhs(tile(&b2, t).unwrap().tile_at(0, 0)));
        let sats = SatTracker::new();
        let mut sa = SystolicArray::new(t, 0.0f64);
        let report = sa.pump(&lhs, &rhs, &sats).unwrap();

        for &fires in &report.fires_per_pe {
            assert_eq!(fires, (m * t) as u64);
        }
        let want: Vec<u64> = (2 * t as u64 - 2..(m * t) as u64).collect();
        assert_eq!(report.full_occupancy_cycles, want);

        // In-PE accumulation across the pair equals the sum of the products.
        let p1 = oracle_matmul(&a1, &b1);
        let p2 = oracle_matmul(&a2, &b2);
        for i in 0..t {
            for j in 0..t {
                assert_eq!(report.product.get(i, j), p1.get(i, j) + p2.get(i, j));
            }
        }
    }

    #[test]
    fn accumulator_lifecycle() {
        let sats = SatTracker::new();
        let t = 4;
        let mut acc = Accumulator::new(t, 0.0f64);

        // Zero plus P is P.
        let p = tile(&rng_matrix(t, t, 9), t).unwrap().tile_at(0, 0).clone();
        acc.begin_block(0, 0, 1);
        acc.accumulate(&p, &sats).unwrap();
        let drained = acc.drain().unwrap();
        for i in 0..t {
            for j in 0..t {
                assert_eq!(drained.get(i, j), p.get(i, j));
            }
        }

        // 250 all-ones product tiles sum to 250 in every entry, matching the
        // per-block tile count of a 1000-row operand at t=4.
        let ones = tile(&Matrix::filled(t, t, 1.0f64), t).unwrap().tile_at(0, 0).clone();
        acc.begin_block(0, 0, 250);
        for _ in 0..250 {
            acc.accumulate(&ones, &sats).unwrap();
        }
        let drained = acc.drain().unwrap();
        for i in 0..t {
            for j in 0..t {
                assert_eq!(drained.get(i, j), 250.0);
            }
        }

        // P then -P cancels.
        let mut neg = p.clone();
        for i in 0..t {
            for j in 0..t {
                neg.set(i, j, -p.get(i, j));
            }
        }
        acc.begin_block(0, 0, 2);
        acc.accumulate(&p, &sats).unwrap();
        acc.accumulate(&neg, &sats).unwrap();
        assert!(acc.drain().unwrap().is_all_zero());
    }

    #[test]
    fn premature_drain_rejected_and_reset_contract() {
        let sats = SatTracker::new();
        let mut acc = Accumulator::new(2, 0.0f64);
        let p = tile(&rng_matrix(2, 2, 13), 2).unwrap().tile_at(0, 0).clone();
        acc.begin_block(0, 0, 2);
        acc.accumulate(&p, &sats).unwrap();
        assert!(matches!(
            acc.drain(),
            Err(crate::Error::IncompleteAccumulation { got: 1, expected: 2 })
        ));
        acc.accumulate(&p, &sats).unwrap();
        assert!(acc.drain().is_ok());
        // Drain after reset yields the zero tile.
        assert!(acc.drain().unwrap().is_all_zero());
    }
}
