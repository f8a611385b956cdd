//! Analytical latency/energy model and the design-space-exploration
//! harness.
//!
//! The model mirrors the simulator's cost structure exactly: per inner tile
//! one broadcast load plus one lockstep private load at the effective
//! access time, one `3T-2` tile of compute, and one posted drain write per
//! pass. With the assumed hit rate it predicts; with the measured hit rate
//! substituted it reproduces simulated totals to the cycle.

use crate::datasets;
use crate::matrix::Matrix;
use crate::memory::{CacheConfig, CacheHierarchy, EngineMode};
use crate::scheduler::{run_matmul, EngineConfig, EngineRun};
use crate::systolic::tile_cycles;

/// Model constants. Power is always an external input: the model never
/// predicts wattage, it only multiplies it with time.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct PerfModelConfig {
    pub hit_rate_assumed: f64,
    pub dram_penalty: u64,
    pub cache_hit_time: u64,
    pub clock_hz: f64,
    pub peak_power_w: Option<f64>,
}

impl Default for PerfModelConfig {
    fn default() -> Self {
        Self {
            hit_rate_assumed: 0.9,
            dram_penalty: 10,
            cache_hit_time: 1,
            clock_hz: 200e6,
            peak_power_w: None,
        }
    }
}

impl PerfModelConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(0.0..=1.0).contains(&self.hit_rate_assumed) {
            return Err(crate::Error::InvalidConfig(format!(
                "assumed hit rate must be in [0, 1], got {}",
                self.hit_rate_assumed
            )));
        }
        if self.dram_penalty < 1 {
            return Err(crate::Error::InvalidConfig("DRAM penalty must be >= 1".into()));
        }
        if self.clock_hz <= 0.0 {
            return Err(crate::Error::InvalidConfig("clock must be positive".into()));
        }
        Ok(())
    }

    /// Effective access time under an assumed hit rate.
    pub fn eat(&self, p: f64) -> f64 {
        let t_hit = self.cache_hit_time as f64;
        p * t_hit + (1.0 - p) * self.dram_penalty as f64 * t_hit
    }

    /// Power preset for the two reference builds: 1.271 W at (T, S) = (4, 8)
    /// and 16.957 W at (16, 32). Anything else needs `peak_power_w`.
    pub fn preset_power(t: usize, s: usize) -> Option<f64> {
        match (t, s) {
            (4, 8) => Some(1.271),
            (16, 32) => Some(16.957),
            _ => None,
        }
    }
}

/// Per-phase measured cycle totals (drain writes folded into the load
/// bucket: both are memory traffic).
#[derive(Clone, Debug, serde::Serialize)]
pub struct PhaseCycles {
    pub phase: String,
    pub load: u64,
    pub compute: u64,
}

impl PhaseCycles {
    pub fn total(&self) -> u64 {
        self.load + self.compute
    }
}

/// Aggregated performance report for a run.
#[derive(Clone, Debug, serde::Serialize)]
pub struct PerfReport {
    pub phases: Vec<PhaseCycles>,
    pub clock_hz: f64,
    pub peak_power_w: Option<f64>,
    /// Input-tile batch count MN/(S*T^2). The scheduler separately reports
    /// output-block passes (grid_rows * ceil(grid_cols / S)); the two count
    /// different things and both are emitted.
    pub batches: f64,
    /// Output-block passes of the covariance product.
    pub covariance_passes: u64,
    t: usize,
    s: usize,
}

impl PerfReport {
    pub fn new(
        phases: Vec<PhaseCycles>,
        model: &PerfModelConfig,
        covariance_passes: u64,
        t: usize,
        s: usize,
    ) -> Self {
        Self {
            phases,
            clock_hz: model.clock_hz,
            peak_power_w: model.peak_power_w,
            batches: 0.0,
            covariance_passes,
            t,
            s,
        }
    }

    pub fn set_batches(&mut self, m: usize, n: usize) {
        self.batches = (m as f64 * n as f64) / (self.s as f64 * (self.t * self.t) as f64);
    }

    pub fn total_cycles(&self) -> u64 {
        self.phases.iter().map(|p| p.total()).sum()
    }

    pub fn wall_time_s(&self) -> f64 {
        self.total_cycles() as f64 / self.clock_hz
    }

    pub fn energy_j(&self) -> Option<f64> {
        self.peak_power_w.map(|p| p * self.wall_time_s())
    }
}

/// Batch count of the scaling law: MN/(S*T^2) input tiles of work.
pub fn batches(m: usize, n: usize, cfg: &EngineConfig) -> f64 {
    (m as f64 * n as f64) / (cfg.s as f64 * (cfg.t * cfg.t) as f64)
}

/// Energy as peak power times wall time; power must be supplied.
pub fn energy_joules(wall_time_s: f64, model: &PerfModelConfig) -> crate::Result<f64> {
    match model.peak_power_w {
        Some(p) => Ok(p * wall_time_s),
        None => Err(crate::Error::InvalidConfig(
            "power must be supplied externally to compute energy".into(),
        )),
    }
}

/// Analytical cycle estimate for one engine product, as fractional cycles.
#[derive(Clone, Copy, Debug)]
pub struct MatmulEstimate {
    pub load: f64,
    pub compute: f64,
    pub passes: u64,
    pub steps: u64,
}

impl MatmulEstimate {
    pub fn total(&self) -> f64 {
        self.load + self.compute
    }
}

/// Estimate `lhs_dims x rhs_dims` through the engine: per lockstep step two
/// loads at EAT(p) plus one tile of compute, plus one drain write per pass.
pub fn estimate_matmul_cycles(
    lhs_dims: (usize, usize),
    rhs_dims: (usize, usize),
    cfg: &EngineConfig,
    model: &PerfModelConfig,
) -> crate::Result<MatmulEstimate> {
    if lhs_dims.1 != rhs_dims.0 {
        return Err(crate::Error::DimMismatch(format!(
            "cannot estimate {}x{} by {}x{}",
            lhs_dims.0, lhs_dims.1, rhs_dims.0, rhs_dims.1
        )));
    }
    model.validate()?;
    let grid_rows = lhs_dims.0.div_ceil(cfg.t) as u64;
    let inner = lhs_dims.1.div_ceil(cfg.t) as u64;
    let grid_cols = rhs_dims.1.div_ceil(cfg.t) as u64;
    let passes = grid_rows * grid_cols.div_ceil(cfg.s as u64);
    let steps = passes * inner;
    let eat = model.eat(model.hit_rate_assumed);
    let load = 2.0 * steps as f64 * eat + passes as f64 * model.cache_hit_time as f64;
    let compute = (steps * tile_cycles(cfg.t)) as f64;
    Ok(MatmulEstimate { load, compute, passes, steps })
}

/// Exact reconstruction of a simulated run's load cycles from its lockstep
/// hit/miss counts: `hits*t_hit + misses*penalty*t_hit`. Algebraically this
/// is `n * EAT(p_measured)` with `p = hits/n`, evaluated without rounding.
pub fn reconstruct_load_cycles(step_hits: u64, step_misses: u64, model: &PerfModelConfig) -> u64 {
    step_hits * model.cache_hit_time + step_misses * model.dram_penalty * model.cache_hit_time
}

/// Reconstructed total for a run (loads from measured hit counts, compute
/// and drains as charged). Equals the simulated total exactly when the
/// model's timing constants match the cache configuration.
pub fn reconstructed_total(run: &EngineRun, model: &PerfModelConfig) -> u64 {
    reconstruct_load_cycles(run.step_hits, run.step_misses, model)
        + run.cycles.compute
        + run.cycles.drain
}

/// One design point of a sweep.
#[derive(Clone, Debug)]
pub struct DsePoint {
    pub t: usize,
    pub s: usize,
    pub phase: String,
    pub cycles_load: f64,
    pub cycles_compute: f64,
    pub cycles_total: f64,
    pub wall_time_s: f64,
    pub energy_j: Option<f64>,
    pub simulated: bool,
}

/// Sweep outcome plus the scaling-law verdicts.
#[derive(Clone, Debug)]
pub struct DseOutcome {
    pub points: Vec<DsePoint>,
    /// Total time nonincreasing in S at every fixed T.
    pub monotone_in_s: bool,
    /// Total time nonincreasing in T at every fixed S.
    pub monotone_in_t: bool,
}

/// Sweep the (T, S) cross product for the covariance product of an
/// `m x n` dataset. Small problems are simulated end to end (the dataset
/// is synthesized deterministically when none is given); large ones use
/// the analytical estimate.
pub fn dse_sweep(
    data: Option<&Matrix<f64>>,
    dims: (usize, usize),
    t_values: &[usize],
    s_values: &[usize],
    model: &PerfModelConfig,
    cache_rows: (usize, usize),
    simulate: bool,
) -> crate::Result<DseOutcome> {
    if t_values.is_empty() || s_values.is_empty() {
        return Err(crate::Error::InvalidConfig("sweep grids must be nonempty".into()));
    }
    model.validate()?;
    let (m, n) = dims;
    let owned;
    let x: Option<&Matrix<f64>> = if simulate {
        match data {
            Some(x) => Some(x),
            None => {
                owned = datasets::gaussian(m, n, 0x5EED);
                Some(&owned)
            }
        }
    } else {
        None
    };

    let mut points = Vec::new();
    for &t in t_values {
        for &s in s_values {
            let cfg = EngineConfig::new(t, s)?;
            let point = match x {
                Some(x) => {
                    let mut h = CacheHierarchy::new(
                        CacheConfig::new(cache_rows.0, t, 8)?,
                        CacheConfig::new(cache_rows.1, t, 8)?,
                        s,
                    );
                    let r =
                        run_matmul(&x.transpose(), x, &cfg, &mut h, EngineMode::Covariance, None)?;
                    let load = (r.run.cycles.load + r.run.cycles.drain) as f64;
                    let compute = r.run.cycles.compute as f64;
                    DsePoint {
                        t,
                        s,
                        phase: "covariance".into(),
                        cycles_load: load,
                        cycles_compute: compute,
                        cycles_total: load + compute,
                        wall_time_s: (load + compute) / model.clock_hz,
                        energy_j: model.peak_power_w.map(|p| p * (load + compute) / model.clock_hz),
                        simulated: true,
                    }
                }
                None => {
                    let est = estimate_matmul_cycles((n, m), (m, n), &cfg, model)?;
                    DsePoint {
                        t,
                        s,
                        phase: "covariance".into(),
                        cycles_load: est.load,
                        cycles_compute: est.compute,
                        cycles_total: est.total(),
                        wall_time_s: est.total() / model.clock_hz,
                        energy_j: model.peak_power_w.map(|p| p * est.total() / model.clock_hz),
                        simulated: false,
                    }
                }
            };
            points.push(point);
        }
    }

    let find = |t: usize, s: usize| {
        points.iter().find(|p| p.t == t && p.s == s).map(|p| p.cycles_total).unwrap()
    };
    let mut monotone_in_s = true;
    for &t in t_values {
        let mut sorted: Vec<usize> = s_values.to_vec();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if find(t, w[1]) > find(t, w[0]) {
                monotone_in_s = false;
            }
        }
    }
    let mut monotone_in_t = true;
    for &s in s_values {
        let mut sorted: Vec<usize> = t_values.to_vec();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if find(w[1], s) > find(w[0], s) {
                monotone_in_t = false;
            }
        }
    }
    Ok(DseOutcome { points, monotone_in_s, monotone_in_t })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eat_reference_values() {
        let m = PerfModelConfig::default();
        assert!((m.eat(0.9) - 1.9).abs() < 1e-12);
        assert_eq!(m.eat(1.0), 1.0);
        assert_eq!(m.eat(0.0), 10.0);
    }

    #[test]
    fn batch_law_reference_points() {
        // Single tile: one batch.
        let cfg = EngineConfig::new(4, 1).unwrap();
        assert_eq!(batches(4, 4, &cfg), 1.0);
        // 1000x1024 at (4, 8): 1000*1024/(8*16) = 8000.
        let cfg = EngineConfig::new(4, 8).unwrap();
        assert_eq!(batches(1000, 1024, &cfg), 8000.0);
        // Doubling S halves the count exactly on divisible dims.
        let c1 = EngineConfig::new(4, 2).unwrap();
        let c2 = EngineConfig::new(4, 4).unwrap();
        assert_eq!(batches(64, 64, &c1), 2.0 * batches(64, 64, &c2));
    }

    #[test]
    fn energy_reference_points() {
        let mut m = PerfModelConfig { peak_power_w: Some(1.271), ..Default::default() };
        assert!((energy_joules(1.0, &m).unwrap() - 1.271).abs() < 1e-12);
        assert_eq!(energy_joules(0.0, &m).unwrap(), 0.0);
        m.peak_power_w = Some(16.957);
        assert!((energy_joules(2.0, &m).unwrap() - 33.914).abs() < 1e-12);
        m.peak_power_w = None;
        assert!(energy_joules(1.0, &m).is_err());
    }

    #[test]
    fn energy_scales_linearly_with_power() {
        for w in [0.5, 1.0, 2.0, 8.0] {
            let m = PerfModelConfig { peak_power_w: Some(w), ..Default::default() };
            let e = energy_joules(3.0, &m).unwrap();
            assert!((e - 3.0 * w).abs() < 1e-12);
        }
    }

    #[test]
    fn preset_powers() {
        assert_eq!(PerfModelConfig::preset_power(4, 8), Some(1.271));
        assert_eq!(PerfModelConfig::preset_power(16, 32), Some(16.957));
        assert_eq!(PerfModelConfig::preset_power(8, 8), None);
    }

    #[test]
    fn estimate_scales_inversely_with_s() {
        let model = PerfModelConfig::default();
        let t = 4;
        let base = estimate_matmul_cycles((64, 64), (64, 64), &EngineConfig::new(t, 1).unwrap(), &model)
            .unwrap();
        let half = estimate_matmul_cycles((64, 64), (64, 64), &EngineConfig::new(t, 2).unwrap(), &model)
            .unwrap();
        let quarter =
            estimate_matmul_cycles((64, 64), (64, 64), &EngineConfig::new(t, 4).unwrap(), &model)
                .unwrap();
        let r1 = base.total() / half.total();
        let r2 = half.total() / quarter.total();
        assert!((r1 - 2.0).abs() < 1e-9, "ratio {r1}");
        assert!((r2 - 2.0).abs() < 1e-9, "ratio {r2}");
    }

    #[test]
    fn estimate_compute_scales_inversely_with_t_squared() {
        let model = PerfModelConfig::default();
        let a = estimate_matmul_cycles((64, 64), (64, 64), &EngineConfig::new(4, 2).unwrap(), &model)
            .unwrap();
        let b = estimate_matmul_cycles((64, 64), (64, 64), &EngineConfig::new(8, 2).unwrap(), &model)
            .unwrap();
        // Steps scale by 8x (T^3 per-tile work against T^2 tile count); the
        // per-tile compute grows by ~2x, so compute cycles drop ~4x.
        let ratio = a.compute / b.compute;
        assert!((ratio - 40.0 / 11.0).abs() < 1e-9, "ratio {ratio}");
        assert!(ratio > 3.0 && ratio < 4.1);
    }

    #[test]
    fn reconstruction_identity_is_exact() {
        let model = PerfModelConfig::default();
        // 123 hits, 77 misses: hits + 10*misses.
        assert_eq!(reconstruct_load_cycles(123, 77, &model), 123 + 770);
        // And via the EAT formula with measured p, up to float rounding.
        let n = 200.0;
        let p = 123.0 / n;
        assert!((n * model.eat(p) - 893.0).abs() < 1e-9);
    }

    #[test]
    fn simulated_sweep_is_monotone_on_divisible_dims() {
        let model = PerfModelConfig::default();
        let out = dse_sweep(
            None,
            (32, 32),
            &[2, 4],
            &[1, 2, 4],
            &model,
            (1024, 1024),
            true,
        )
        .unwrap();
        assert_eq!(out.points.len(), 6);
        assert!(out.monotone_in_s);
        assert!(out.monotone_in_t);
        assert!(out.points.iter().all(|p| p.simulated));
    }

    #[test]
    fn estimated_sweep_covers_grid() {
        let model = PerfModelConfig::default();
        let out = dse_sweep(
            None,
            (4096, 2048),
            &[4, 8],
            &[4, 8],
            &model,
            (256, 64),
            false,
        )
        .unwrap();
        assert_eq!(out.points.len(), 4);
        assert!(out.points.iter().all(|p| !p.simulated));
        assert!(out.monotone_in_s && out.monotone_in_t);
    }
}
