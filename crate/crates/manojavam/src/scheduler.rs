//! MM-Engine top-level controller: block-streaming pass scheduling of S
//! systolic arrays over row/column blocks, for covariance products and for
//! rotation updates through the same datapath.
//!
//! A pass binds one LHS row block to up to S RHS column blocks, one per
//! array. Within a pass the engine steps through the inner tile index in
//! lockstep: one broadcast LHS load from the shared cache, S private RHS
//! loads in parallel, then the tile products. The block's tiles stream
//! back to back, so partial sums stay resident in the PEs across the whole
//! inner dimension and every output element is a single ascending-k MAC
//! chain. Loads and compute never overlap (no prefetching) and each tile
//! is charged the full 3T-2 fill/compute/drain, which is the conservative
//! dataflow the cycle model assumes. Arrays are costed in parallel (pass
//! latency is the slowest array) by default; a fully serialized costing is
//! available for pessimistic bounds.
//!
//! Array `i` always serves column blocks congruent to `i` mod S, so every
//! RHS tile address has a fixed private-cache owner.

use crate::fixed::SatTracker;
use crate::matrix::{mpu_skew_lhs, mpu_skew_rhs, tile, Matrix, Tile};
use crate::memory::{CacheHierarchy, CacheSide, CacheStatsRow, EngineMode, Region};
use crate::scalar::Scalar;
use crate::systolic::{tile_cycles, Accumulator, SystolicArray};

/// Engine-shape parameters plus simulation knobs.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct EngineConfig {
    /// Systolic tile dimension T.
    pub t: usize,
    /// Parallelism index S: number of array/accumulator/private-cache sets.
    pub s: usize,
    pub fidelity: DataflowFidelity,
    pub costing: CostingMode,
    /// Worker threads for the per-pass array fan-out. `None` reads
    /// `MANOJAVAM_SIM_THREADS` (default 1). Results are bit-identical at
    /// any thread count.
    pub threads: Option<usize>,
}

/// How tile products are produced.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize)]
pub enum DataflowFidelity {
    /// Direct per-tile MACs in dataflow order plus the closed-form 3T-2
    /// cycle charge. Bit-identical to the stepped grid.
    TileApproximate,
    /// Pump every tile through the register-level PE grid.
    CycleStepped,
}

/// How per-pass array work is charged.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize)]
pub enum CostingMode {
    /// Arrays run in lockstep; a pass costs its slowest array.
    LockstepParallel,
    /// Pessimistic bound: arrays charged one after another.
    SerializedArrays,
}

impl EngineConfig {
    pub fn new(t: usize, s: usize) -> crate::Result<Self> {
        if t < 2 {
            return Err(crate::Error::InvalidConfig(format!("tile size must be >= 2, got {t}")));
        }
        if s < 1 {
            return Err(crate::Error::InvalidConfig("parallelism index must be >= 1".into()));
        }
        Ok(Self {
            t,
            s,
            fidelity: DataflowFidelity::TileApproximate,
            costing: CostingMode::LockstepParallel,
            threads: None,
        })
    }

    pub fn with_fidelity(mut self, fidelity: DataflowFidelity) -> Self {
        self.fidelity = fidelity;
        self
    }

    pub fn with_costing(mut self, costing: CostingMode) -> Self {
        self.costing = costing;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads.max(1));
        self
    }

    fn effective_threads(&self) -> usize {
        self.threads.unwrap_or_else(|| {
            std::env::var("MANOJAVAM_SIM_THREADS")
                .ok()
                .and_then(|v| v.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .unwrap_or(1)
        })
    }
}

/// One scheduled pass: a row block paired with up to S column blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pass {
    pub pass_id: usize,
    pub row_block: usize,
    pub column_blocks: Vec<usize>,
    pub tiles_per_block: usize,
}

/// The full schedule for one engine product.
#[derive(Clone, Debug)]
pub struct PassPlan {
    pub passes: Vec<Pass>,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub tiles_per_block: usize,
}

/// Row-major block order; within a row block, column blocks are consumed S
/// at a time (the last pass of a row block may drive fewer arrays).
pub fn plan_passes(
    lhs_grid: (usize, usize),
    rhs_grid: (usize, usize),
    cfg: &EngineConfig,
) -> crate::Result<PassPlan> {
    if lhs_grid.1 != rhs_grid.0 {
        return Err(crate::Error::DimMismatch(format!(
            "inner tile grids disagree: lhs {}x{}, rhs {}x{}",
            lhs_grid.0, lhs_grid.1, rhs_grid.0, rhs_grid.1
        )));
    }
    let (grid_rows, inner) = lhs_grid;
    let grid_cols = rhs_grid.1;
    let mut passes = Vec::with_capacity(grid_rows * grid_cols.div_ceil(cfg.s));
    for row_block in 0..grid_rows {
        for chunk_start in (0..grid_cols).step_by(cfg.s) {
            let column_blocks: Vec<usize> =
                (chunk_start..(chunk_start + cfg.s).min(grid_cols)).collect();
            passes.push(Pass {
                pass_id: passes.len(),
                row_block,
                column_blocks,
                tiles_per_block: inner,
            });
        }
    }
    Ok(PassPlan { passes, grid_rows, grid_cols, tiles_per_block: inner })
}

/// Per-pass trace record, exported as CSV.
#[derive(Clone, Debug)]
pub struct PassRecord {
    pub pass_id: usize,
    pub row_block: usize,
    pub column_blocks: Vec<usize>,
    pub cycles: u64,
    pub lhs_hits: u64,
    pub lhs_misses: u64,
    pub rhs_hits: u64,
    pub rhs_misses: u64,
}

/// Observer tap on every drained output tile, in drain order. This is how
/// the eigensolver's lookup engine watches the product stream without
/// re-reading memory.
pub trait DrainObserver<S> {
    fn on_drained_tile(
        &mut self,
        tile: &Tile<S>,
        origin: (usize, usize),
        array_index: usize,
        row_block: usize,
    );
}

/// Cycle breakdown of one engine product.
#[derive(Clone, Copy, Debug, Default)]
pub struct CycleBreakdown {
    pub load: u64,
    pub compute: u64,
    pub drain: u64,
}

impl CycleBreakdown {
    pub fn total(&self) -> u64 {
        self.load + self.compute + self.drain
    }
}

/// Counters and trace from one region-level engine product.
#[derive(Clone, Debug)]
pub struct EngineRun {
    /// Totals under the configured costing mode.
    pub cycles: CycleBreakdown,
    /// Totals under the pessimistic serialized-arrays costing.
    pub cycles_serialized: CycleBreakdown,
    pub trace: Vec<PassRecord>,
    /// Lockstep load steps (one LHS plus one parallel RHS load per inner
    /// tile per pass) split into hit/miss by their charged latency.
    pub step_hits: u64,
    pub step_misses: u64,
    pub saturations: u64,
}

/// Result of a one-shot engine matmul.
#[derive(Clone, Debug)]
pub struct MatMulResult<S> {
    pub product: Matrix<S>,
    pub cycles: u64,
    pub run: EngineRun,
    pub cache_stats: Vec<CacheStatsRow>,
    pub passes: usize,
}

struct ArrayOutcome<S> {
    drained: Tile<S>,
    rhs_latencies: Vec<u64>,
}

fn run_array_job<S: Scalar>(
    cache: &mut crate::memory::TileCache<S>,
    backing: &crate::memory::BackingStore<S>,
    rhs_region: &Region,
    column_block: usize,
    row_block: usize,
    lhs_tiles: &[Tile<S>],
    cfg: &EngineConfig,
    sats: &SatTracker,
) -> crate::Result<ArrayOutcome<S>> {
    let t = cfg.t;
    let k = lhs_tiles.len();
    let exemplar = lhs_tiles[0].get(0, 0);
    let zero = exemplar.zero_like();

    // The block's tiles stream back to back; partial sums stay resident in
    // the PEs, so each output element accumulates over the global inner
    // index in ascending order (the same chain as a plain triple loop).
    let mut rhs_latencies = Vec::with_capacity(k);
    let mut rhs_tiles = Vec::with_capacity(k);
    for kk in 0..k {
        let addr = rhs_region.addr(kk, column_block);
        let (rhs_tile, lat) = cache.read_through(addr, backing)?;
        rhs_latencies.push(lat);
        rhs_tiles.push(rhs_tile);
    }
    let valid_rows = lhs_tiles[0].valid_rows();
    let valid_cols = rhs_tiles[0].valid_cols();

    let mut block = match cfg.fidelity {
        DataflowFidelity::TileApproximate => {
            let mut accs = vec![zero; t * t];
            for (lhs_tile, rhs_tile) in lhs_tiles.iter().zip(&rhs_tiles) {
                for i in 0..t {
                    for j in 0..t {
                        let mut acc = accs[i * t + j];
                        for x in 0..t {
                            acc = acc.add_sat(lhs_tile.get(i, x).mul_sat(rhs_tile.get(x, j), sats), sats);
                        }
                        accs[i * t + j] = acc;
                    }
                }
            }
            let mut out = Tile::zero(t, row_block, column_block, exemplar);
            for i in 0..t {
                for j in 0..t {
                    out.set(i, j, accs[i * t + j]);
                }
            }
            out
        }
        DataflowFidelity::CycleStepped => {
            let mut lhs_stream = mpu_skew_lhs(&lhs_tiles[0]);
            let mut rhs_stream = mpu_skew_rhs(&rhs_tiles[0]);
            for kk in 1..k {
                lhs_stream = lhs_stream.concat(&mpu_skew_lhs(&lhs_tiles[kk]));
                rhs_stream = rhs_stream.concat(&mpu_skew_rhs(&rhs_tiles[kk]));
            }
            let mut sa = SystolicArray::new(t, exemplar);
            let report = sa.pump(&lhs_stream, &rhs_stream, sats)?;
            report.product
        }
    };
    block.set_origin(row_block, column_block);
    block.set_valid(valid_rows, valid_cols);

    // The paired accumulator takes the completed block and hands it to the
    // drain path.
    let mut acc = Accumulator::new(t, exemplar);
    acc.begin_block(row_block, column_block, 1);
    acc.accumulate(&block, sats)?;
    let mut drained = acc.drain()?;
    drained.set_origin(row_block, column_block);
    Ok(ArrayOutcome { drained, rhs_latencies })
}

/// Per-pass counters gathered before the drain phase.
struct PassOutcome<S> {
    lhs_load_cycles: u64,
    lhs_hits: u64,
    lhs_misses: u64,
    rhs_hits: u64,
    rhs_misses: u64,
    outcomes: Vec<ArrayOutcome<S>>,
}

fn run_pass_phases<S: Scalar>(
    h: &mut CacheHierarchy<S>,
    pass: &Pass,
    lhs_region: &Region,
    rhs_region: &Region,
    cfg: &EngineConfig,
    sats: &SatTracker,
    threads: usize,
) -> crate::Result<PassOutcome<S>> {
    let k = pass.tiles_per_block;
    let views = h.pass_views();
    let lhs_before = views.lhs.stats;

    // Broadcast phase: each inner tile is read once from the shared cache
    // and served to every array.
    let mut lhs_tiles = Vec::with_capacity(k);
    let mut lhs_load_cycles = 0u64;
    for kk in 0..k {
        let (t, lat) =
            views.lhs.read_through(lhs_region.addr(pass.row_block, kk), views.backing)?;
        lhs_load_cycles += lat;
        lhs_tiles.push(t);
    }
    let lhs_after = views.lhs.stats;

    // Array phase: private RHS load plus tile product per inner tile,
    // independent per array (disjoint caches and accumulators). Array i
    // owns column blocks congruent to i mod S.
    let rhs_before: Vec<_> =
        pass.column_blocks.iter().map(|cb| views.rhs[cb % cfg.s].stats).collect();
    let active = pass.column_blocks.len();
    let mut outcomes: Vec<Option<ArrayOutcome<S>>> = (0..active).map(|_| None).collect();
    {
        let backing = views.backing;
        let lhs_tiles = &lhs_tiles;
        let mut jobs = Vec::with_capacity(active);
        let mut caches: Vec<_> = views.rhs.iter_mut().enumerate().collect();
        let mut outs: Vec<_> = outcomes.iter_mut().collect();
        for &cb in pass.column_blocks.iter().rev() {
            let owner = cb % cfg.s;
            let pos = caches.iter().position(|(i, _)| *i == owner).expect("owner cache");
            let (_, cache) = caches.swap_remove(pos);
            jobs.push((cb, cache, outs.pop().expect("outcome slot")));
        }
        let run_job = |(cb, cache, out): &mut (
            usize,
            &mut crate::memory::TileCache<S>,
            &mut Option<ArrayOutcome<S>>,
        )|
         -> crate::Result<()> {
            **out = Some(run_array_job(
                cache,
                backing,
                rhs_region,
                *cb,
                pass.row_block,
                lhs_tiles,
                cfg,
                sats,
            )?);
            Ok(())
        };
        if threads <= 1 || active <= 1 {
            for job in &mut jobs {
                run_job(job)?;
            }
        } else {
            let workers = threads.min(active);
            let mut groups: Vec<Vec<_>> = (0..workers).map(|_| Vec::new()).collect();
            for (i, job) in jobs.into_iter().enumerate() {
                groups[i % workers].push(job);
            }
            std::thread::scope(|scope| -> crate::Result<()> {
                let handles: Vec<_> = groups
                    .into_iter()
                    .map(|mut group| {
                        scope.spawn(move || -> crate::Result<()> {
                            for job in &mut group {
                                run_job(job)?;
                            }
                            Ok(())
                        })
                    })
                    .collect();
                for handle in handles {
                    handle.join().expect("array worker panicked")?;
                }
                Ok(())
            })?;
        }
    }
    let rhs_after: Vec<_> =
        pass.column_blocks.iter().map(|cb| views.rhs[cb % cfg.s].stats).collect();
    let (rhs_hits, rhs_misses) = rhs_before.iter().zip(&rhs_after).fold((0, 0), |(h0, m0), (b, a)| {
        (h0 + a.hits - b.hits, m0 + a.misses - b.misses)
    });

    Ok(PassOutcome {
        lhs_load_cycles,
        lhs_hits: lhs_after.hits - lhs_before.hits,
        lhs_misses: lhs_after.misses - lhs_before.misses,
        rhs_hits,
        rhs_misses,
        outcomes: outcomes.into_iter().map(|o| o.expect("array outcome")).collect(),
    })
}

/// Region-level engine product: `dst = lhs x rhs`, streamed through the
/// cache hierarchy with full pass/cycle accounting. Every drained output
/// tile is offered to `observer` before being written back.
#[allow(clippy::too_many_arguments)]
pub fn run_matmul_regions<S: Scalar>(
    h: &mut CacheHierarchy<S>,
    lhs_region: &Region,
    rhs_region: &Region,
    dst_region: &Region,
    cfg: &EngineConfig,
    sats: &SatTracker,
    mut observer: Option<&mut dyn DrainObserver<S>>,
) -> crate::Result<EngineRun> {
    if lhs_region.t != cfg.t || rhs_region.t != cfg.t || dst_region.t != cfg.t {
        return Err(crate::Error::InvalidConfig("region tile size differs from engine T".into()));
    }
    if lhs_region.src_cols != rhs_region.src_rows {
        return Err(crate::Error::DimMismatch(format!(
            "inner dimensions disagree: lhs is {}x{}, rhs is {}x{}",
            lhs_region.src_rows, lhs_region.src_cols, rhs_region.src_rows, rhs_region.src_cols
        )));
    }
    if dst_region.grid_rows != lhs_region.grid_rows
        || dst_region.grid_cols != rhs_region.grid_cols
    {
        return Err(crate::Error::DimMismatch("output region grid does not match operands".into()));
    }
    let plan = plan_passes(
        (lhs_region.grid_rows, lhs_region.grid_cols),
        (rhs_region.grid_rows, rhs_region.grid_cols),
        cfg,
    )?;
    let sat_start = sats.count();
    let threads = cfg.effective_threads();
    let compute_per_step = tile_cycles(cfg.t);

    let mut run = EngineRun {
        cycles: CycleBreakdown::default(),
        cycles_serialized: CycleBreakdown::default(),
        trace: Vec::with_capacity(plan.passes.len()),
        step_hits: 0,
        step_misses: 0,
        saturations: 0,
    };

    for pass in &plan.passes {
        let k = pass.tiles_per_block;
        let active = pass.column_blocks.len();
        let outcome = run_pass_phases(h, pass, lhs_region, rhs_region, cfg, sats, threads)?;

        // Drain phase: observer tap, then posted write-back through the
        // producing array's private cache, in array order.
        let mut drain_max = 0u64;
        let mut drain_sum = 0u64;
        for (ai, (out, &cb)) in outcome.outcomes.iter().zip(&pass.column_blocks).enumerate() {
            if let Some(obs) = observer.as_deref_mut() {
                obs.on_drained_tile(&out.drained, (pass.row_block, cb), ai, pass.row_block);
            }
            let lat = h.write_tile(
                CacheSide::Rhs(cb % cfg.s),
                dst_region.addr(pass.row_block, cb),
                out.drained.clone(),
            )?;
            drain_max = drain_max.max(lat);
            drain_sum += lat;
        }

        // Lockstep costing: per inner tile, one broadcast load plus the
        // slowest private load plus one tile of compute.
        let mut rhs_lockstep = 0u64;
        for kk in 0..k {
            let step_max =
                outcome.outcomes.iter().map(|o| o.rhs_latencies[kk]).max().unwrap_or(0);
            rhs_lockstep += step_max;
            if step_max <= 1 {
                run.step_hits += 1;
            } else {
                run.step_misses += 1;
            }
        }
        run.step_hits += outcome.lhs_hits;
        run.step_misses += outcome.lhs_misses;

        let rhs_total: u64 = outcome.outcomes.iter().flat_map(|o| &o.rhs_latencies).sum();
        let pass_parallel =
            outcome.lhs_load_cycles + rhs_lockstep + (k as u64) * compute_per_step + drain_max;
        let pass_serialized = outcome.lhs_load_cycles
            + rhs_total
            + (active as u64) * (k as u64) * compute_per_step
            + drain_sum;

        run.cycles.load += outcome.lhs_load_cycles + rhs_lockstep;
        run.cycles.compute += (k as u64) * compute_per_step;
        run.cycles.drain += drain_max;
        run.cycles_serialized.load += outcome.lhs_load_cycles + rhs_total;
        run.cycles_serialized.compute += (active as u64) * (k as u64) * compute_per_step;
        run.cycles_serialized.drain += drain_sum;

        run.trace.push(PassRecord {
            pass_id: pass.pass_id,
            row_block: pass.row_block,
            column_blocks: pass.column_blocks.clone(),
            cycles: match cfg.costing {
                CostingMode::LockstepParallel => pass_parallel,
                CostingMode::SerializedArrays => pass_serialized,
            },
            lhs_hits: outcome.lhs_hits,
            lhs_misses: outcome.lhs_misses,
            rhs_hits: outcome.rhs_hits,
            rhs_misses: outcome.rhs_misses,
        });
    }

    run.saturations = sats.count() - sat_start;
    Ok(run)
}

/// Cycle total of a run under the configured costing mode.
pub fn selected_cycles(run: &EngineRun, cfg: &EngineConfig) -> u64 {
    match cfg.costing {
        CostingMode::LockstepParallel => run.cycles.total(),
        CostingMode::SerializedArrays => run.cycles_serialized.total(),
    }
}

/// One-shot engine matmul: sets the mode signal, lays both operands into
/// freshly allocated regions, streams the product, and reads it back.
pub fn run_matmul<S: Scalar>(
    lhs: &Matrix<S>,
    rhs: &Matrix<S>,
    cfg: &EngineConfig,
    h: &mut CacheHierarchy<S>,
    mode: EngineMode,
    observer: Option<&mut dyn DrainObserver<S>>,
) -> crate::Result<MatMulResult<S>> {
    if lhs.cols() != rhs.rows() {
        return Err(crate::Error::DimMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            lhs.rows(),
            lhs.cols(),
            rhs.rows(),
            rhs.cols()
        )));
    }
    if h.rhs_count() < cfg.s {
        return Err(crate::Error::InvalidConfig(format!(
            "hierarchy has {} private caches but the engine needs {}",
            h.rhs_count(),
            cfg.s
        )));
    }
    h.set_mode(mode);
    let exemplar = lhs.exemplar();
    let lhs_region = h.alloc_region(lhs.rows(), lhs.cols(), cfg.t, exemplar);
    let rhs_region = h.alloc_region(rhs.rows(), rhs.cols(), cfg.t, exemplar);
    let dst_region = h.alloc_region(lhs.rows(), rhs.cols(), cfg.t, exemplar);
    h.load_region(&lhs_region, &tile(lhs, cfg.t)?)?;
    h.load_region(&rhs_region, &tile(rhs, cfg.t)?)?;
    let sats = SatTracker::new();
    let run = run_matmul_regions(h, &lhs_region, &rhs_region, &dst_region, cfg, &sats, observer)?;
    let product = h.region_matrix(&dst_region)?;
    let passes = run.trace.len();
    Ok(MatMulResult {
        product,
        cycles: selected_cycles(&run, cfg),
        run,
        cache_stats: h.stats_rows(),
        passes,
    })
}

/// Regions used by one rotation update, ping-ponged by the eigensolver.
#[derive(Clone, Copy, Debug)]
pub struct RotationRegions {
    pub givens_t: Region,
    pub givens: Region,
    pub c_in: Region,
    pub m: Region,
    pub c_out: Region,
    pub v_in: Region,
    pub v_out: Region,
}

impl RotationRegions {
    pub fn alloc<S: Scalar>(h: &mut CacheHierarchy<S>, n: usize, t: usize, exemplar: S) -> Self {
        Self {
            givens_t: h.alloc_region(n, n, t, exemplar),
            givens: h.alloc_region(n, n, t, exemplar),
            c_in: h.alloc_region(n, n, t, exemplar),
            m: h.alloc_region(n, n, t, exemplar),
            c_out: h.alloc_region(n, n, t, exemplar),
            v_in: h.alloc_region(n, n, t, exemplar),
            v_out: h.alloc_region(n, n, t, exemplar),
        }
    }

    /// Swap input/output roles of the C and V buffers.
    pub fn ping_pong(&mut self) {
        std::mem::swap(&mut self.c_in, &mut self.c_out);
        std::mem::swap(&mut self.v_in, &mut self.v_out);
    }
}

/// One rotation update over pre-loaded regions:
/// `M = Gᵀ C`, `C' = M G` (observer tap on the drains), `V' = V G`.
/// The Givens operand and its transpose must already sit in their regions.
pub fn rotation_step_regions<S: Scalar>(
    h: &mut CacheHierarchy<S>,
    regs: &RotationRegions,
    cfg: &EngineConfig,
    sats: &SatTracker,
    observer: Option<&mut dyn DrainObserver<S>>,
) -> crate::Result<(EngineRun, EngineRun, EngineRun)> {
    if h.mode() != EngineMode::Rotation {
        return Err(crate::Error::ModeMismatch(
            "rotation update requires the Rotation mode signal".into(),
        ));
    }
    let m_run = run_matmul_regions(h, &regs.givens_t, &regs.c_in, &regs.m, cfg, sats, None)?;
    let c_run = run_matmul_regions(h, &regs.m, &regs.givens, &regs.c_out, cfg, sats, observer)?;
    let v_run = run_matmul_regions(h, &regs.v_in, &regs.givens, &regs.v_out, cfg, sats, None)?;
    Ok((m_run, c_run, v_run))
}

/// One-shot rotation update `(C', V') = (RᵀCR, VR)` through the engine
/// datapath. The hierarchy must already carry the Rotation mode signal.
pub fn run_rotation_update<S: Scalar>(
    c: &Matrix<S>,
    v: &Matrix<S>,
    givens: &Matrix<S>,
    cfg: &EngineConfig,
    h: &mut CacheHierarchy<S>,
) -> crate::Result<(Matrix<S>, Matrix<S>, u64)> {
    let n = c.rows();
    if c.cols() != n || v.rows() != n || v.cols() != n || givens.rows() != n || givens.cols() != n {
        return Err(crate::Error::DimMismatch(
            "rotation update needs square C, V and Givens of one size".into(),
        ));
    }
    if h.mode() != EngineMode::Rotation {
        return Err(crate::Error::ModeMismatch(
            "rotation update requires the Rotation mode signal".into(),
        ));
    }
    let exemplar = c.exemplar();
    let regs = RotationRegions::alloc(h, n, cfg.t, exemplar);
    h.load_region(&regs.givens, &tile(givens, cfg.t)?)?;
    h.load_region(&regs.givens_t, &tile(&givens.transpose(), cfg.t)?)?;
    h.load_region(&regs.c_in, &tile(c, cfg.t)?)?;
    h.load_region(&regs.v_in, &tile(v, cfg.t)?)?;
    let sats = SatTracker::new();
    let (m_run, c_run, v_run) = rotation_step_regions(h, &regs, cfg, &sats, None)?;
    let cycles = selected_cycles(&m_run, cfg)
        + selected_cycles(&c_run, cfg)
        + selected_cycles(&v_run, cfg);
    Ok((h.region_matrix(&regs.c_out)?, h.region_matrix(&regs.v_out)?, cycles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::CacheConfig;
    use crate::oracle::oracle_matmul;

    fn hierarchy(s: usize, t: usize) -> CacheHierarchy<f64> {
        CacheHierarchy::new(
            CacheConfig::new(256, t, 8).unwrap(),
            CacheConfig::new(64, t, 8).unwrap(),
            s,
        )
    }

    fn rng_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut state = seed | 1;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 16) as i32 % 2000) as f64 / 300.0
        };
        let data = (0..rows * cols).map(|_| next()).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn plan_covers_streaming_illustration() {
        // 1000x1024 covariance: LHS grid 256x250, RHS grid 250x256 at T=4.
        let cfg = EngineConfig::new(4, 8).unwrap();
        let plan = plan_passes((256, 250), (250, 256), &cfg).unwrap();
        assert_eq!(plan.grid_rows, 256);
        assert_eq!(plan.grid_cols, 256);
        assert_eq!(plan.tiles_per_block, 250);
        assert_eq!(plan.passes.len(), 8192);
        assert!(plan.passes.iter().all(|p| p.column_blocks.len() == 8));
        assert_eq!(plan.passes[0].column_blocks, vec![0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(plan.passes[1].column_blocks, vec![8, 9, 10, 11, 12, 13, 14, 15]);
    }

    #[test]
    fn plan_single_tile_operands() {
        let cfg = EngineConfig::new(2, 1).unwrap();
        let plan = plan_passes((1, 1), (1, 1), &cfg).unwrap();
        assert_eq!(plan.passes.len(), 1);
        assert_eq!(plan.passes[0].tiles_per_block, 1);
    }

    #[test]
    fn plan_partial_last_pass() {
        let cfg = EngineConfig::new(4, 8).unwrap();
        let plan = plan_passes((1, 3), (3, 5), &cfg).unwrap();
        assert_eq!(plan.passes.len(), 1);
        assert_eq!(plan.passes[0].column_blocks.len(), 5);
    }

    #[test]
    fn plan_covers_every_block_pair_exactly_once() {
        for (r, k, c, t, s) in [(3, 2, 5, 2, 2), (4, 4, 4, 4, 8), (7, 1, 9, 2, 4)] {
            let cfg = EngineConfig::new(t, s).unwrap();
            let plan = plan_passes((r, k), (k, c), &cfg).unwrap();
            let mut seen = vec![false; r * c];
            for pass in &plan.passes {
                for &cb in &pass.column_blocks {
                    let idx = pass.row_block * c + cb;
                    assert!(!seen[idx], "block pair seen twice");
                    seen[idx] = true;
                }
            }
            assert!(seen.iter().all(|&b| b));
            assert_eq!(plan.passes.len(), r * c.div_ceil(s));
        }
    }

    #[test]
    fn plan_rejects_mismatched_inner_grids() {
        let cfg = EngineConfig::new(4, 2).unwrap();
        assert!(plan_passes((3, 2), (3, 4), &cfg).is_err());
    }

    #[test]
    fn engine_config_validation() {
        assert!(EngineConfig::new(1, 4).is_err());
        assert!(EngineConfig::new(4, 0).is_err());
        assert!(EngineConfig::new(2, 1).is_ok());
    }

    #[test]
    fn identity_lhs_returns_rhs_exactly() {
        let cfg = EngineConfig::new(4, 2).unwrap();
        let mut h = hierarchy(2, 4);
        let id = Matrix::identity_like(8, 1.0f64);
        let b = rng_matrix(8, 6, 17);
        let r = run_matmul(&id, &b, &cfg, &mut h, EngineMode::Covariance, None).unwrap();
        assert_eq!(r.product, b);
    }

    #[test]
    fn gram_product_matches_oracle_and_is_symmetric() {
        let cfg = EngineConfig::new(4, 2).unwrap();
        let mut h = hierarchy(2, 4);
        let x = rng_matrix(8, 8, 5);
        let r = run_matmul(&x.transpose(), &x, &cfg, &mut h, EngineMode::Covariance, None).unwrap();
        let want = oracle_matmul(&x.transpose(), &x);
        assert_eq!(r.product, want);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(r.product.get(i, j), r.product.get(j, i));
            }
        }
    }

    #[test]
    fn engine_equals_oracle_across_shapes_and_configs() {
        let mut case = 0u64;
        for t in [2usize, 4, 8] {
            for s in [1usize, 2, 4, 8] {
                for _ in 0..4 {
                    case += 1;
                    let m = 1 + (case as usize * 7) % 48;
                    let k = 1 + (case as usize * 13) % 48;
                    let n = 1 + (case as usize * 29) % 48;
                    let a = rng_matrix(m, k, 100 + case);
                    let b = rng_matrix(k, n, 200 + case);
                    let cfg = EngineConfig::new(t, s).unwrap();
                    let mut h = hierarchy(s, t);
                    let r =
                        run_matmul(&a, &b, &cfg, &mut h, EngineMode::Covariance, None).unwrap();
                    assert_eq!(r.product, oracle_matmul(&a, &b), "t={t} s={s} {m}x{k}x{n}");
                }
            }
        }
    }

    #[test]
    fn stepped_fidelity_matches_fast_fidelity_bit_for_bit() {
        let a = rng_matrix(10, 7, 41);
        let b = rng_matrix(7, 9, 42);
        let fast_cfg = EngineConfig::new(4, 2).unwrap();
        let stepped_cfg = fast_cfg.with_fidelity(DataflowFidelity::CycleStepped);
        let mut h1 = hierarchy(2, 4);
        let mut h2 = hierarchy(2, 4);
        let r1 = run_matmul(&a, &b, &fast_cfg, &mut h1, EngineMode::Covariance, None).unwrap();
        let r2 = run_matmul(&a, &b, &stepped_cfg, &mut h2, EngineMode::Covariance, None).unwrap();
        assert_eq!(r1.product, r2.product);
        assert_eq!(r1.cycles, r2.cycles);
    }

    #[test]
    fn pass_count_halves_when_parallelism_doubles() {
        // The MN/(S*T^2) batch law, visible as pass counts within ceilings.
        let x = rng_matrix(32, 32, 3);
        let mut counts = Vec::new();
        for s in [1usize, 2, 4, 8] {
            let cfg = EngineConfig::new(4, s).unwrap();
            let mut h = hierarchy(s, 4);
            let r = run_matmul(&x.transpose(), &x, &cfg, &mut h, EngineMode::Covariance, None)
                .unwrap();
            counts.push(r.passes);
        }
        assert_eq!(counts, vec![64, 32, 16, 8]);
    }

    #[test]
    fn sequential_and_threaded_runs_are_bit_identical() {
        let a = rng_matrix(24, 16, 7);
        let b = rng_matrix(16, 24, 8);
        let run = |threads: usize| {
            let cfg = EngineConfig::new(4, 4).unwrap().with_threads(threads);
            let mut h = hierarchy(4, 4);
            let r = run_matmul(&a, &b, &cfg, &mut h, EngineMode::Covariance, None).unwrap();
            (r.product, r.cycles, r.run.step_hits, r.run.step_misses)
        };
        let seq = run(1);
        let par = run(4);
        assert_eq!(seq.0, par.0);
        assert_eq!(seq.1, par.1);
        assert_eq!((seq.2, seq.3), (par.2, par.3));
    }

    #[test]
    fn rotation_update_requires_mode_signal() {
        let cfg = EngineConfig::new(4, 2).unwrap();
        let mut h = hierarchy(2, 4);
        let c = rng_matrix(4, 4, 1);
        let v = Matrix::identity_like(4, 1.0f64);
        let g = Matrix::identity_like(4, 1.0f64);
        // Covariance mode: rejected.
        h.set_mode(EngineMode::Covariance);
        assert!(run_rotation_update(&c, &v, &g, &cfg, &mut h).is_err());
    }

    #[test]
    fn rotation_with_identity_is_identity() {
        let cfg = EngineConfig::new(4, 2).unwrap();
        let mut h = hierarchy(2, 4);
        h.set_mode(EngineMode::Rotation);
        let x = rng_matrix(8, 8, 2);
        let mut c = Matrix::filled(8, 8, 0.0);
        for i in 0..8 {
            for j in 0..8 {
                c.set(i, j, 0.5 * (x.get(i, j) + x.get(j, i)));
            }
        }
        let v = rng_matrix(8, 8, 3);
        let g = Matrix::identity_like(8, 1.0f64);
        let (c2, v2, _) = run_rotation_update(&c, &v, &g, &cfg, &mut h).unwrap();
        assert_eq!(c2, c);
        assert_eq!(v2, v);
    }

    #[test]
    fn rotation_annihilates_pivot_and_preserves_norm() {
        let cfg = EngineConfig::new(4, 2).unwrap();
        let mut h = hierarchy(2, 4);
        h.set_mode(EngineMode::Rotation);
        let x = rng_matrix(8, 8, 11);
        let mut c = Matrix::filled(8, 8, 0.0);
        for i in 0..8 {
            for j in 0..8 {
                c.set(i, j, 0.5 * (x.get(i, j) + x.get(j, i)));
            }
        }
        let (p, q) = (2usize, 5usize);
        let theta = 0.5
            * (2.0 * c.get(p, q)).atan2(c.get(p, p) - c.get(q, q));
        let g = crate::jacobi::build_givens(8, p, q, theta.sin(), theta.cos()).unwrap();
        let v = Matrix::identity_like(8, 1.0f64);
        let (c2, _, _) = run_rotation_update(&c, &v, &g, &cfg, &mut h).unwrap();
        assert!(c2.get(p, q).abs() < 1e-12, "pivot not annihilated: {}", c2.get(p, q));
        let frob = |m: &Matrix<f64>| m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((frob(&c) - frob(&c2)).abs() < 1e-9);
    }

    #[test]
    fn two_by_two_symmetric_diagonalizes() {
        let cfg = EngineConfig::new(2, 1).unwrap();
        let mut h = hierarchy(1, 2);
        h.set_mode(EngineMode::Rotation);
        let c = Matrix::from_vec(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let v = Matrix::identity_like(2, 1.0f64);
        let s = std::f64::consts::FRAC_PI_4.sin();
        let g = crate::jacobi::build_givens(2, 0, 1, s, s).unwrap();
        let (c2, _, _) = run_rotation_update(&c, &v, &g, &cfg, &mut h).unwrap();
        assert!((c2.get(0, 0) - 3.0).abs() < 1e-12);
        assert!((c2.get(1, 1) - 1.0).abs() < 1e-12);
        assert!(c2.get(0, 1).abs() < 1e-12);
        assert!(c2.get(1, 0).abs() < 1e-12);
    }
}
