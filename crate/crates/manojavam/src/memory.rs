//! Two-tier cache hierarchy: one shared LHS cache plus S private RHS
//! caches, all direct-mapped with one full tile per row entry, in front of a
//! flat tile-addressed backing store.
//!
//! The write-miss policy follows the engine mode: covariance work streams
//! its outputs past the caches (write-around), rotation work allocates
//! written tiles without fetching (write-allocate no-fetch). Writes are
//! write-through, so a valid line always mirrors the backing store; a write
//! through one cache invalidates matching lines everywhere else, which is
//! what keeps that invariant global.

use crate::matrix::{Matrix, Tile, TiledMatrix};
use crate::scalar::Scalar;

/// Geometry and timing of one tile cache.
#[derive(Clone, Copy, Debug)]
pub struct CacheConfig {
    /// Number of tile rows; direct-mapped, must be a power of two.
    pub rows: usize,
    /// Payload bytes per row entry (one complete tile).
    pub tile_bytes: usize,
    /// Backing-store access cost as a multiple of the hit time.
    pub dram_penalty: u64,
    /// Cycles for a hit.
    pub cache_hit_time: u64,
}

impl CacheConfig {
    pub fn new(rows: usize, t: usize, scalar_bytes: usize) -> crate::Result<Self> {
        if rows == 0 || !rows.is_power_of_two() {
            return Err(crate::Error::InvalidConfig(format!(
                "cache rows must be a nonzero power of two, got {rows}"
            )));
        }
        Ok(Self { rows, tile_bytes: t * t * scalar_bytes, dram_penalty: 10, cache_hit_time: 1 })
    }

    pub fn miss_latency(&self) -> u64 {
        self.dram_penalty * self.cache_hit_time
    }
}

/// Write-miss handling.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum WriteMissPolicy {
    /// Send the write to backing only; do not allocate a line.
    WriteAround,
    /// Allocate a line and fill it from the written tile, no backing fetch.
    WriteAllocateNoFetch,
}

/// The one-bit mode signal distributed to every cache controller.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize)]
pub enum EngineMode {
    Covariance,
    Rotation,
}

impl EngineMode {
    /// Fixed mode-to-policy mapping.
    pub fn write_miss_policy(self) -> WriteMissPolicy {
        match self {
            EngineMode::Covariance => WriteMissPolicy::WriteAround,
            EngineMode::Rotation => WriteMissPolicy::WriteAllocateNoFetch,
        }
    }
}

/// Hit/miss accounting. Hits and misses count read accesses; writebacks
/// count writes reaching the backing store; allocations count lines
/// allocated by write misses.
#[derive(Clone, Copy, Default, Debug, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub writebacks: u64,
    pub allocations: u64,
}

impl CacheStats {
    pub fn reads(&self) -> u64 {
        self.hits + self.misses
    }

    pub fn measured_hit_rate(&self) -> Option<f64> {
        let n = self.reads();
        (n > 0).then(|| self.hits as f64 / n as f64)
    }
}

#[derive(Clone, Debug)]
struct Line<S> {
    tag: u64,
    payload: Tile<S>,
}

/// One direct-mapped tile cache.
#[derive(Clone, Debug)]
pub struct TileCache<S> {
    config: CacheConfig,
    lines: Vec<Option<Line<S>>>,
    policy: WriteMissPolicy,
    pub stats: CacheStats,
}

impl<S: Scalar> TileCache<S> {
    pub fn new(config: CacheConfig, policy: WriteMissPolicy) -> Self {
        Self { config, lines: vec![None; config.rows], policy, stats: CacheStats::default() }
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn policy(&self) -> WriteMissPolicy {
        self.policy
    }

    fn line_index(&self, addr: u64) -> usize {
        (addr % self.config.rows as u64) as usize
    }

    fn lookup(&self, addr: u64) -> Option<&Tile<S>> {
        self.lines[self.line_index(addr)]
            .as_ref()
            .filter(|line| line.tag == addr)
            .map(|line| &line.payload)
    }

    fn install(&mut self, addr: u64, payload: Tile<S>) {
        let idx = self.line_index(addr);
        self.lines[idx] = Some(Line { tag: addr, payload });
    }

    fn invalidate(&mut self, addr: u64) {
        let idx = self.line_index(addr);
        if self.lines[idx].as_ref().is_some_and(|line| line.tag == addr) {
            self.lines[idx] = None;
        }
    }

    /// Read through this cache against an explicit backing store. Split
    /// borrow form used by the per-array workers; hits cost the hit time,
    /// misses fetch at the DRAM penalty and always allocate.
    pub fn read_through(
        &mut self,
        addr: u64,
        backing: &BackingStore<S>,
    ) -> crate::Result<(Tile<S>, u64)> {
        if let Some(tile) = self.lookup(addr) {
            let tile = tile.clone();
            self.stats.hits += 1;
            return Ok((tile, self.config.cache_hit_time));
        }
        self.stats.misses += 1;
        let tile = backing.get(addr)?.clone();
        self.install(addr, tile.clone());
        Ok((tile, self.config.miss_latency()))
    }
}

/// Flat tile-addressed simulated DRAM, zero-filled at region allocation.
#[derive(Clone, Debug, Default)]
pub struct BackingStore<S> {
    tiles: Vec<Tile<S>>,
}

impl<S: Scalar> BackingStore<S> {
    pub fn len(&self) -> u64 {
        self.tiles.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    fn get(&self, addr: u64) -> crate::Result<&Tile<S>> {
        self.tiles
            .get(addr as usize)
            .ok_or(crate::Error::AddrOutOfRange { addr, len: self.len() })
    }

    fn put(&mut self, addr: u64, tile: Tile<S>) -> crate::Result<()> {
        let len = self.len();
        match self.tiles.get_mut(addr as usize) {
            Some(slot) => {
                *slot = tile;
                Ok(())
            }
            None => Err(crate::Error::AddrOutOfRange { addr, len }),
        }
    }
}

/// A contiguous run of tile addresses holding one tiled operand.
#[derive(Clone, Copy, Debug)]
pub struct Region {
    pub base: u64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub t: usize,
    pub src_rows: usize,
    pub src_cols: usize,
}

impl Region {
    /// Tile address layout within the operand: block_row * grid_cols + block_col.
    pub fn addr(&self, block_row: usize, block_col: usize) -> u64 {
        debug_assert!(block_row < self.grid_rows && block_col < self.grid_cols);
        self.base + (block_row * self.grid_cols + block_col) as u64
    }

    pub fn tile_count(&self) -> usize {
        self.grid_rows * self.grid_cols
    }
}

/// Which cache serves an access.
#[derive(Clone, Copy, Debug)]
pub enum CacheSide {
    Lhs,
    Rhs(usize),
}

/// Shared LHS cache, S private RHS caches, the mode signal and the backing
/// store behind them.
#[derive(Clone, Debug)]
pub struct CacheHierarchy<S> {
    lhs: TileCache<S>,
    rhs: Vec<TileCache<S>>,
    mode: EngineMode,
    backing: BackingStore<S>,
}

impl<S: Scalar> CacheHierarchy<S> {
    pub fn new(lhs_cfg: CacheConfig, rhs_cfg: CacheConfig, s: usize) -> Self {
        let mode = EngineMode::Covariance;
        Self {
            lhs: TileCache::new(lhs_cfg, mode.write_miss_policy()),
            rhs: (0..s).map(|_| TileCache::new(rhs_cfg, mode.write_miss_policy())).collect(),
            mode,
            backing: BackingStore { tiles: Vec::new() },
        }
    }

    pub fn mode(&self) -> EngineMode {
        self.mode
    }

    pub fn rhs_count(&self) -> usize {
        self.rhs.len()
    }

    /// Flip the mode signal: all S+1 controllers switch write-miss policy
    /// atomically with respect to subsequent accesses; contents persist.
    pub fn set_mode(&mut self, mode: EngineMode) {
        self.mode = mode;
        let policy = mode.write_miss_policy();
        self.lhs.policy = policy;
        for c in &mut self.rhs {
            c.policy = policy;
        }
    }

    fn cache(&mut self, side: CacheSide) -> &mut TileCache<S> {
        match side {
            CacheSide::Lhs => &mut self.lhs,
            CacheSide::Rhs(s) => &mut self.rhs[s],
        }
    }

    pub fn cache_stats(&self, side: CacheSide) -> CacheStats {
        match side {
            CacheSide::Lhs => self.lhs.stats,
            CacheSide::Rhs(s) => self.rhs[s].stats,
        }
    }

    pub fn reset_stats(&mut self) {
        self.lhs.stats = CacheStats::default();
        for c in &mut self.rhs {
            c.stats = CacheStats::default();
        }
    }

    /// Fetch a tile. Hits cost the hit time; misses fetch from backing at
    /// the DRAM penalty and always allocate the line.
    pub fn read_tile(&mut self, side: CacheSide, addr: u64) -> crate::Result<(Tile<S>, u64)> {
        if addr >= self.backing.len() {
            return Err(crate::Error::AddrOutOfRange { addr, len: self.backing.len() });
        }
        match side {
            CacheSide::Lhs => self.lhs.read_through(addr, &self.backing),
            CacheSide::Rhs(s) => self.rhs[s].read_through(addr, &self.backing),
        }
    }

    /// Split borrows for one pass: the shared cache, the private caches and
    /// a read view of the backing store, so array workers can run disjoint.
    pub fn pass_views(&mut self) -> PassViews<'_, S> {
        PassViews { lhs: &mut self.lhs, rhs: &mut self.rhs, backing: &self.backing }
    }

    /// Commit a tile. Writes are posted write-through: the backing store is
    /// always updated, the addressed cache follows its write-miss policy on
    /// a miss and updates in place on a hit, and every other cache drops any
    /// stale copy.
    pub fn write_tile(&mut self, side: CacheSide, addr: u64, tile: Tile<S>) -> crate::Result<u64> {
        if addr >= self.backing.len() {
            return Err(crate::Error::AddrOutOfRange { addr, len: self.backing.len() });
        }
        self.backing.put(addr, tile.clone())?;
        self.invalidate_except(side, addr);
        let cache = self.cache(side);
        cache.stats.writebacks += 1;
        let hit = cache.lookup(addr).is_some();
        if hit {
            cache.install(addr, tile);
        } else {
            match cache.policy {
                WriteMissPolicy::WriteAround => {}
                WriteMissPolicy::WriteAllocateNoFetch => {
                    cache.stats.allocations += 1;
                    cache.install(addr, tile);
                }
            }
        }
        Ok(cache.config.cache_hit_time)
    }

    fn invalidate_except(&mut self, side: CacheSide, addr: u64) {
        let keep_lhs = matches!(side, CacheSide::Lhs);
        if !keep_lhs {
            self.lhs.invalidate(addr);
        }
        for (i, c) in self.rhs.iter_mut().enumerate() {
            if !matches!(side, CacheSide::Rhs(s) if s == i) {
                c.invalidate(addr);
            }
        }
    }

    /// Reserve a zero-filled region for a `rows x cols` operand tiled at `t`.
    pub fn alloc_region(
        &mut self,
        rows: usize,
        cols: usize,
        t: usize,
        exemplar: S,
    ) -> Region {
        let grid_rows = rows.div_ceil(t);
        let grid_cols = cols.div_ceil(t);
        let base = self.backing.len();
        for br in 0..grid_rows {
            for bc in 0..grid_cols {
                let mut tile = Tile::zero(t, br, bc, exemplar);
                tile.set_valid(t.min(rows - br * t), t.min(cols - bc * t));
                self.backing.tiles.push(tile);
            }
        }
        Region { base, grid_rows, grid_cols, t, src_rows: rows, src_cols: cols }
    }

    /// Host-side (reset-time) bulk load of an operand into its region. Not
    /// charged in the cycle model; drops any cached copies of the range.
    pub fn load_region(&mut self, region: &Region, tm: &TiledMatrix<S>) -> crate::Result<()> {
        if tm.grid_rows() != region.grid_rows
            || tm.grid_cols() != region.grid_cols
            || tm.t() != region.t
        {
            return Err(crate::Error::DimMismatch(format!(
                "region holds a {}x{} grid of {}-tiles, operand is {}x{} at {}",
                region.grid_rows,
                region.grid_cols,
                region.t,
                tm.grid_rows(),
                tm.grid_cols(),
                tm.t()
            )));
        }
        for tile in tm.tiles() {
            let (br, bc) = tile.origin();
            let addr = region.addr(br, bc);
            self.backing.put(addr, tile.clone())?;
            self.lhs.invalidate(addr);
            for c in &mut self.rhs {
                c.invalidate(addr);
            }
        }
        Ok(())
    }

    /// Host-side readback of a region into a dense matrix.
    pub fn region_matrix(&self, region: &Region) -> crate::Result<Matrix<S>> {
        let mut tm = TiledMatrix::zeros(
            region.src_rows,
            region.src_cols,
            region.t,
            self.backing.get(region.base)?.get(0, 0),
        );
        for br in 0..region.grid_rows {
            for bc in 0..region.grid_cols {
                let mut tile = self.backing.get(region.addr(br, bc))?.clone();
                tile.set_origin(br, bc);
                tm.set_tile(tile);
            }
        }
        Ok(tm.reassemble())
    }

    /// Write-through invariant: every valid line mirrors the backing store.
    pub fn check_coherence(&self) -> bool {
        let ok = |cache: &TileCache<S>| {
            cache.lines.iter().flatten().all(|line| {
                self.backing
                    .tiles
                    .get(line.tag as usize)
                    .is_some_and(|t| *t == line.payload)
            })
        };
        ok(&self.lhs) && self.rhs.iter().all(ok)
    }

    /// Per-cache stat rows for reporting.
    pub fn stats_rows(&self) -> Vec<CacheStatsRow> {
        let row = |id: String, c: &TileCache<S>| CacheStatsRow {
            cache_id: id,
            mode: self.mode,
            stats: c.stats,
            eat: c.stats.measured_hit_rate().map(|p| eat(p, &c.config)),
        };
        let mut rows = vec![row("lhs".into(), &self.lhs)];
        rows.extend(self.rhs.iter().enumerate().map(|(i, c)| row(format!("rhs{i}"), c)));
        rows
    }
}

/// Borrowed split of the hierarchy for one pass.
pub struct PassViews<'a, S> {
    pub lhs: &'a mut TileCache<S>,
    pub rhs: &'a mut [TileCache<S>],
    pub backing: &'a BackingStore<S>,
}

/// One exported stats record.
#[derive(Clone, Debug)]
pub struct CacheStatsRow {
    pub cache_id: String,
    pub mode: EngineMode,
    pub stats: CacheStats,
    pub eat: Option<f64>,
}

/// Effective access time for hit rate `p`: `p*t_hit + (1-p)*penalty*t_hit`.
pub fn eat(p: f64, cfg: &CacheConfig) -> f64 {
    let t_hit = cfg.cache_hit_time as f64;
    p * t_hit + (1.0 - p) * cfg.dram_penalty as f64 * t_hit
}

/// Effective access time from measured stats; undefined without accesses.
pub fn effective_access_time(stats: &CacheStats, cfg: &CacheConfig) -> crate::Result<f64> {
    let p = stats
        .measured_hit_rate()
        .ok_or_else(|| crate::Error::InvalidConfig("EAT undefined with zero accesses".into()))?;
    Ok(eat(p, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::tile;

    fn hierarchy(lhs_rows: usize, rhs_rows: usize, s: usize) -> CacheHierarchy<f64> {
        CacheHierarchy::new(
            CacheConfig::new(lhs_rows, 2, 8).unwrap(),
            CacheConfig::new(rhs_rows, 2, 8).unwrap(),
            s,
        )
    }

    fn numbered_region(h: &mut CacheHierarchy<f64>, n_tiles: usize) -> Region {
        // One row of 2x2 tiles, tile (0, k) filled with k+1.
        let region = h.alloc_region(2, 2 * n_tiles, 2, 0.0);
        let mut m = Matrix::filled(2, 2 * n_tiles, 0.0);
        for k in 0..n_tiles {
            for r in 0..2 {
                for c in 0..2 {
                    m.set(r, 2 * k + c, (k + 1) as f64);
                }
            }
        }
        h.load_region(&region, &tile(&m, 2).unwrap()).unwrap();
        region
    }

    #[test]
    fn rows_must_be_power_of_two() {
        assert!(CacheConfig::new(0, 4, 8).is_err());
        assert!(CacheConfig::new(3, 4, 8).is_err());
        assert!(CacheConfig::new(64, 4, 8).is_ok());
        assert!(CacheConfig::new(1, 4, 8).is_ok());
    }

    #[test]
    fn cold_miss_then_hit_latencies() {
        let mut h = hierarchy(8, 8, 1);
        let region = numbered_region(&mut h, 4);
        let (_, lat) = h.read_tile(CacheSide::Lhs, region.addr(0, 0)).unwrap();
        assert_eq!(lat, 10);
        let (_, lat) = h.read_tile(CacheSide::Lhs, region.addr(0, 0)).unwrap();
        assert_eq!(lat, 1);
        let s = h.cache_stats(CacheSide::Lhs);
        assert_eq!((s.hits, s.misses), (1, 1));
    }

    #[test]
    fn direct_mapped_conflict_thrash() {
        // Two addresses 8 apart share a line in an 8-row cache; alternating
        // reads, 4 each, miss every time.
        let mut h = hierarchy(8, 8, 1);
        let region = numbered_region(&mut h, 9);
        let a1 = region.addr(0, 0);
        let a2 = region.addr(0, 8);
        for _ in 0..4 {
            h.read_tile(CacheSide::Lhs, a1).unwrap();
            h.read_tile(CacheSide::Lhs, a2).unwrap();
        }
        let s = h.cache_stats(CacheSide::Lhs);
        assert_eq!((s.hits, s.misses), (0, 8));
    }

    #[test]
    fn out_of_range_rejected() {
        let mut h = hierarchy(8, 8, 1);
        let region = numbered_region(&mut h, 2);
        let bad = region.base + region.tile_count() as u64;
        assert!(matches!(
            h.read_tile(CacheSide::Lhs, bad),
            Err(crate::Error::AddrOutOfRange { .. })
        ));
    }

    #[test]
    fn write_around_does_not_pollute() {
        let mut h = hierarchy(8, 8, 1);
        let region = numbered_region(&mut h, 4);
        h.set_mode(EngineMode::Covariance);
        let (tile0, _) = h.read_tile(CacheSide::Rhs(0), region.addr(0, 1)).unwrap();
        h.write_tile(CacheSide::Rhs(0), region.addr(0, 0), tile0).unwrap();
        // The written address was a miss and must not have been allocated.
        let (_, lat) = h.read_tile(CacheSide::Rhs(0), region.addr(0, 0)).unwrap();
        assert_eq!(lat, 10);
        assert_eq!(h.cache_stats(CacheSide::Rhs(0)).allocations, 0);
    }

    #[test]
    fn write_allocate_no_fetch_makes_next_read_hit() {
        let mut h = hierarchy(8, 8, 1);
        let region = numbered_region(&mut h, 4);
        h.set_mode(EngineMode::Rotation);
        let (tile0, _) = h.read_tile(CacheSide::Rhs(0), region.addr(0, 1)).unwrap();
        h.write_tile(CacheSide::Rhs(0), region.addr(0, 0), tile0.clone()).unwrap();
        let (got, lat) = h.read_tile(CacheSide::Rhs(0), region.addr(0, 0)).unwrap();
        assert_eq!(lat, 1);
        assert_eq!(got, tile0);
        assert_eq!(h.cache_stats(CacheSide::Rhs(0)).allocations, 1);
    }

    #[test]
    fn saxpy_second_sweep_hits_everywhere() {
        // A[j] += B[j] over 64 tiles with 64-row caches: the second sweep
        // reads A entirely from cache.
        let mut h = hierarchy(64, 64, 1);
        let a = numbered_region(&mut h, 64);
        let b = numbered_region(&mut h, 64);
        h.set_mode(EngineMode::Rotation);
        let sats = crate::fixed::SatTracker::new();
        for sweep in 0..2 {
            let before = h.cache_stats(CacheSide::Lhs);
            for j in 0..64 {
                let (ta, _) = h.read_tile(CacheSide::Lhs, a.addr(0, j)).unwrap();
                let (tb, _) = h.read_tile(CacheSide::Rhs(0), b.addr(0, j)).unwrap();
                let mut sum = ta.clone();
                for r in 0..2 {
                    for c in 0..2 {
                        sum.set(r, c, ta.get(r, c).add_sat(tb.get(r, c), &sats));
                    }
                }
                h.write_tile(CacheSide::Lhs, a.addr(0, j), sum).unwrap();
            }
            let after = h.cache_stats(CacheSide::Lhs);
            if sweep == 1 {
                assert_eq!(after.hits - before.hits, 64);
                assert_eq!(after.misses, before.misses);
            }
            assert!(h.check_coherence());
        }
    }

    #[test]
    fn policy_discrimination_on_write_once_stream() {
        // Covariance-shaped stream: every output tile written exactly once,
        // never re-read. Write-around allocates nothing; allocate-no-fetch
        // allocates every tile; backing contents agree.
        let mut tiles = Vec::new();
        let mut backings = Vec::new();
        let mut allocs = Vec::new();
        for mode in [EngineMode::Covariance, EngineMode::Rotation] {
            let mut h = hierarchy(64, 64, 1);
            let src = numbered_region(&mut h, 32);
            let dst = h.alloc_region(2, 64, 2, 0.0);
            h.set_mode(mode);
            for j in 0..32 {
                let (t, _) = h.read_tile(CacheSide::Rhs(0), src.addr(0, j)).unwrap();
                h.write_tile(CacheSide::Rhs(0), dst.addr(0, j), t).unwrap();
            }
            assert!(h.check_coherence());
            allocs.push(h.cache_stats(CacheSide::Rhs(0)).allocations);
            backings.push(h.region_matrix(&dst).unwrap());
            tiles.push(h.cache_stats(CacheSide::Rhs(0)));
        }
        assert_eq!(allocs[0], 0);
        assert_eq!(allocs[1], 32);
        assert!(allocs[0] < allocs[1]);
        assert_eq!(backings[0], backings[1]);
        // Reads behaved identically under both policies.
        assert_eq!(tiles[0].reads(), tiles[1].reads());
    }

    #[test]
    fn mode_switch_is_idempotent_and_preserves_contents() {
        let mut h = hierarchy(8, 8, 2);
        let region = numbered_region(&mut h, 4);
        h.read_tile(CacheSide::Rhs(1), region.addr(0, 2)).unwrap();
        let before = h.cache_stats(CacheSide::Rhs(1));
        h.set_mode(EngineMode::Covariance);
        h.set_mode(EngineMode::Covariance);
        assert_eq!(h.cache_stats(CacheSide::Rhs(1)), before);
        // Contents persist across a real switch: the next read still hits.
        h.set_mode(EngineMode::Rotation);
        let (_, lat) = h.read_tile(CacheSide::Rhs(1), region.addr(0, 2)).unwrap();
        assert_eq!(lat, 1);
    }

    #[test]
    fn mixed_policy_trace_matches_piecewise_reference() {
        // Switching modes mid-trace behaves exactly like running the two
        // halves under their own policies on the same starting state.
        let run = |switch: bool| {
            let mut h = hierarchy(8, 8, 1);
            let region = numbered_region(&mut h, 6);
            h.set_mode(EngineMode::Covariance);
            let (t0, _) = h.read_tile(CacheSide::Rhs(0), region.addr(0, 5)).unwrap();
            h.write_tile(CacheSide::Rhs(0), region.addr(0, 0), t0.clone()).unwrap();
            if switch {
                h.set_mode(EngineMode::Rotation);
            }
            h.write_tile(CacheSide::Rhs(0), region.addr(0, 1), t0).unwrap();
            let (_, lat0) = h.read_tile(CacheSide::Rhs(0), region.addr(0, 0)).unwrap();
            let (_, lat1) = h.read_tile(CacheSide::Rhs(0), region.addr(0, 1)).unwrap();
            (lat0, lat1, h.cache_stats(CacheSide::Rhs(0)))
        };
        let (lat0, lat1, _) = run(true);
        assert_eq!(lat0, 10); // write-around half: still a miss
        assert_eq!(lat1, 1); // allocate-no-fetch half: now a hit
        let (lat0, lat1, _) = run(false);
        assert_eq!((lat0, lat1), (10, 10));
    }

    #[test]
    fn stats_are_deterministic_and_reads_balance() {
        let trace = |h: &mut CacheHierarchy<f64>, region: &Region| {
            for j in [0usize, 3, 0, 1, 3, 2, 0] {
                h.read_tile(CacheSide::Lhs, region.addr(0, j)).unwrap();
            }
            h.cache_stats(CacheSide::Lhs)
        };
        let mut h1 = hierarchy(4, 4, 1);
        let r1 = numbered_region(&mut h1, 4);
        let mut h2 = hierarchy(4, 4, 1);
        let r2 = numbered_region(&mut h2, 4);
        let s1 = trace(&mut h1, &r1);
        let s2 = trace(&mut h2, &r2);
        assert_eq!(s1, s2);
        assert_eq!(s1.reads(), 7);
    }

    #[test]
    fn eat_formula_reference_points() {
        let cfg = CacheConfig::new(64, 4, 8).unwrap();
        assert!((eat(0.9, &cfg) - 1.9).abs() < 1e-12);
        assert_eq!(eat(1.0, &cfg), 1.0);
        assert_eq!(eat(0.0, &cfg), 10.0);
        let empty = CacheStats::default();
        assert!(effective_access_time(&empty, &cfg).is_err());
        let some = CacheStats { hits: 9, misses: 1, ..Default::default() };
        assert!((effective_access_time(&some, &cfg).unwrap() - 1.9).abs() < 1e-12);
    }

    #[test]
    fn cross_cache_write_invalidates_stale_copies() {
        let mut h = hierarchy(8, 8, 2);
        let region = numbered_region(&mut h, 4);
        let addr = region.addr(0, 0);
        let (orig, _) = h.read_tile(CacheSide::Lhs, addr).unwrap();
        // Another cache writes a different tile to the same address.
        let mut updated = orig.clone();
        updated.set(0, 0, 99.0);
        h.set_mode(EngineMode::Rotation);
        h.write_tile(CacheSide::Rhs(0), addr, updated.clone()).unwrap();
        assert!(h.check_coherence());
        let (seen, _) = h.read_tile(CacheSide::Lhs, addr).unwrap();
        assert_eq!(seen, updated);
    }
}
