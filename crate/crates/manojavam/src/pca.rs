//! End-to-end PCA pipeline: host-side standardization, covariance through
//! the engine, eigendecomposition through the rotation datapath, variance
//! based component selection, and projection.

use crate::cordic::CordicConfig;
use crate::fixed::QFormat;
use crate::jacobi::{
    jacobi_eigendecomposition, CordicKernel, DleState, FloatKernel, JacobiConfig, JacobiResult,
    RotationKernel,
};
use crate::matrix::Matrix;
use crate::memory::{CacheConfig, CacheHierarchy, CacheStatsRow, EngineMode};
use crate::perf::{PerfModelConfig, PerfReport, PhaseCycles};
use crate::scalar::{quantize_matrix, to_f64_matrix, Scalar};
use crate::scheduler::{run_matmul, EngineConfig, EngineRun, MatMulResult};

/// Per-feature standardization constants.
#[derive(Clone, Debug, serde::Serialize)]
pub struct StandardizationParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Features whose variance was zero; they pass through as zero columns.
    pub zero_variance: Vec<usize>,
}

/// Standardize columns to zero mean and unit sample standard deviation.
/// Zero-variance columns are emitted as zeros and flagged.
pub fn standardize(x: &Matrix<f64>) -> crate::Result<(Matrix<f64>, StandardizationParams)> {
    if x.rows() < 2 {
        return Err(crate::Error::InvalidConfig(format!(
            "standardization needs at least 2 rows, got {}",
            x.rows()
        )));
    }
    let (m, n) = (x.rows(), x.cols());
    let mut mu = vec![0.0; n];
    for i in 0..m {
        for j in 0..n {
            mu[j] += x.get(i, j);
        }
    }
    for v in &mut mu {
        *v /= m as f64;
    }
    let mut var = vec![0.0; n];
    for i in 0..m {
        for j in 0..n {
            let d = x.get(i, j) - mu[j];
            var[j] += d * d;
        }
    }
    let mut sigma = vec![0.0; n];
    let mut zero_variance = Vec::new();
    for j in 0..n {
        let s = (var[j] / (m as f64 - 1.0)).sqrt();
        if s == 0.0 {
            zero_variance.push(j);
        }
        sigma[j] = s;
    }
    let mut y = Matrix::filled(m, n, 0.0);
    for i in 0..m {
        for j in 0..n {
            if sigma[j] == 0.0 {
                y.set(i, j, 0.0);
            } else {
                y.set(i, j, (x.get(i, j) - mu[j]) / sigma[j]);
            }
        }
    }
    Ok((y, StandardizationParams { mu, sigma, zero_variance }))
}

/// How many components to keep.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub enum SelectionCriterion {
    /// Keep components whose individual variance ratio is at least tau.
    EvcrFloor(f64),
    /// Keep the smallest k whose cumulative variance ratio reaches tau.
    CvcrTarget(f64),
    FixedK(usize),
}

/// Variance bookkeeping and the retained component count.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ComponentSelection {
    pub evcr: Vec<f64>,
    pub cvcr: Vec<f64>,
    pub k: usize,
    pub criterion: SelectionCriterion,
}

/// Per-component and cumulative variance contribution ratios from the
/// descending eigenvalue list, plus the retained count per the criterion.
pub fn select_components(
    eigenvalues: &[f64],
    criterion: SelectionCriterion,
) -> crate::Result<ComponentSelection> {
    if eigenvalues.is_empty() {
        return Err(crate::Error::InvalidConfig("no eigenvalues to select from".into()));
    }
    // Small negative values are numerical noise around zero; clamp them.
    let clamped: Vec<f64> = eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return Err(crate::Error::Numerical(
            "total variance is not positive; cannot form variance ratios".into(),
        ));
    }
    let evcr: Vec<f64> = clamped.iter().map(|l| l / total).collect();
    let mut cvcr = Vec::with_capacity(evcr.len());
    let mut acc = 0.0;
    for r in &evcr {
        acc += r;
        cvcr.push(acc);
    }
    let n = evcr.len();
    let k = match criterion {
        SelectionCriterion::EvcrFloor(tau) => evcr.iter().take_while(|&&r| r >= tau).count().max(1),
        SelectionCriterion::CvcrTarget(tau) => {
            cvcr.iter().position(|&c| c >= tau).map(|i| i + 1).unwrap_or(n)
        }
        SelectionCriterion::FixedK(k) => {
            if k < 1 || k > n {
                return Err(crate::Error::InvalidConfig(format!(
                    "fixed component count {k} outside 1..={n}"
                )));
            }
            k
        }
    };
    Ok(ComponentSelection { evcr, cvcr, k, criterion })
}

/// Project onto the leading k components through the engine datapath.
pub fn project<S: Scalar>(
    x: &Matrix<S>,
    v: &Matrix<S>,
    k: usize,
    cfg: &EngineConfig,
    h: &mut CacheHierarchy<S>,
) -> crate::Result<MatMulResult<S>> {
    if k < 1 || k > v.cols() {
        return Err(crate::Error::InvalidConfig(format!(
            "projection width {k} outside 1..={}",
            v.cols()
        )));
    }
    if v.rows() != x.cols() {
        return Err(crate::Error::DimMismatch(format!(
            "projection basis has {} rows but data has {} features",
            v.rows(),
            x.cols()
        )));
    }
    let mut vk = Matrix::filled(v.rows(), k, v.exemplar().zero_like());
    for r in 0..v.rows() {
        for c in 0..k {
            vk.set(r, c, v.get(r, c));
        }
    }
    run_matmul(x, &vk, cfg, h, EngineMode::Covariance, None)
}

/// Datapath scalar selection.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub enum NumericPath {
    Float,
    Fixed { format: QFormat, cordic_iterations: u32 },
}

/// Full pipeline configuration.
#[derive(Clone, Debug, serde::Serialize)]
pub struct PcaConfig {
    pub engine: EngineConfig,
    pub jacobi: JacobiConfig,
    pub criterion: SelectionCriterion,
    pub standardize: bool,
    pub path: NumericPath,
    pub lhs_cache_rows: usize,
    pub rhs_cache_rows: usize,
}

/// Pipeline output with everything the reports need, on the f64 view.
#[derive(Clone, Debug)]
pub struct PcaOutput {
    pub projected: Matrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix<f64>,
    pub selection: ComponentSelection,
    pub e_off_trace: Vec<f64>,
    pub max_pivot_trace: Vec<f64>,
    pub rotations_trace: Vec<u64>,
    pub sweeps_executed: usize,
    pub rotations_executed: u64,
    pub perf: PerfReport,
    pub cache_stats: Vec<CacheStatsRow>,
    pub standardization: Option<StandardizationParams>,
    pub saturations: u64,
    /// Entries clamped while quantizing onto the fixed path.
    pub quantization_clamps: u64,
}

/// Covariance observer plumbing: the lookup engine watches the covariance
/// drains so the first pivot needs no extra scan.
struct TypedRun<S: Scalar> {
    covariance: MatMulResult<S>,
    jacobi: JacobiResult<S>,
    projection: MatMulResult<S>,
    selection: ComponentSelection,
    cache_stats: Vec<CacheStatsRow>,
}

fn run_pca_typed<S: Scalar, K: RotationKernel<S>>(
    y: &Matrix<S>,
    kernel: &K,
    cfg: &PcaConfig,
) -> crate::Result<TypedRun<S>> {
    let scalar_bytes = 8;
    let mut h: CacheHierarchy<S> = CacheHierarchy::new(
        CacheConfig::new(cfg.lhs_cache_rows, cfg.engine.t, scalar_bytes)?,
        CacheConfig::new(cfg.rhs_cache_rows, cfg.engine.t, scalar_bytes)?,
        cfg.engine.s,
    );
    let mut dle = DleState::new(y.cols());
    let covariance = run_matmul(
        &y.transpose(),
        y,
        &cfg.engine,
        &mut h,
        EngineMode::Covariance,
        Some(&mut dle),
    )?;
    let jacobi = jacobi_eigendecomposition(
        &covariance.product,
        &cfg.jacobi,
        kernel,
        &cfg.engine,
        &mut h,
        Some(dle),
    )?;
    let selection = select_components(&jacobi.eigenvalues, cfg.criterion)?;
    h.set_mode(EngineMode::Covariance);
    let projection = project(y, &jacobi.eigenvectors, selection.k, &cfg.engine, &mut h)?;
    let cache_stats = h.stats_rows();
    Ok(TypedRun { covariance, jacobi, projection, selection, cache_stats })
}

fn build_report<S: Scalar>(run: &TypedRun<S>, cfg: &PcaConfig, model: &PerfModelConfig) -> PerfReport {
    let phase = |name: &str, r: &EngineRun| PhaseCycles {
        phase: name.to_string(),
        load: r.cycles.load + r.cycles.drain,
        compute: r.cycles.compute,
    };
    let phases = vec![
        phase("covariance", &run.covariance.run),
        PhaseCycles {
            phase: "jacobi".into(),
            load: run.jacobi.cycles.load + run.jacobi.cycles.drain,
            compute: run.jacobi.cycles.compute,
        },
        phase("projection", &run.projection.run),
    ];
    PerfReport::new(phases, model, run.covariance.passes as u64, cfg.engine.t, cfg.engine.s)
}

/// Run the whole pipeline on a real-valued dataset: standardize (optional),
/// covariance, eigendecomposition, selection, projection, perf bookkeeping.
pub fn run_pca(
    x: &Matrix<f64>,
    cfg: &PcaConfig,
    model: &PerfModelConfig,
) -> crate::Result<PcaOutput> {
    let (y, params) = if cfg.standardize {
        let (y, p) = standardize(x)?;
        (y, Some(p))
    } else {
        (x.clone(), None)
    };
    let mn = (y.rows(), y.cols());

    match cfg.path {
        NumericPath::Float => {
            let run = run_pca_typed(&y, &FloatKernel, cfg)?;
            let mut perf = build_report(&run, cfg, model);
            perf.set_batches(mn.0, mn.1);
            Ok(PcaOutput {
                projected: run.projection.product.clone(),
                eigenvalues: run.jacobi.eigenvalues.clone(),
                eigenvectors: run.jacobi.eigenvectors.clone(),
                selection: run.selection,
                e_off_trace: run.jacobi.e_off_trace,
                max_pivot_trace: run.jacobi.max_pivot_trace,
                rotations_trace: run.jacobi.rotations_trace,
                sweeps_executed: run.jacobi.sweeps_executed,
                rotations_executed: run.jacobi.rotations_executed,
                perf,
                cache_stats: run.cache_stats,
                standardization: params,
                saturations: 0,
                quantization_clamps: 0,
            })
        }
        NumericPath::Fixed { format, cordic_iterations } => {
            let (yq, clamps) = quantize_matrix(&y, format);
            let kernel = CordicKernel::new(CordicConfig::new(cordic_iterations, format)?);
            let run = run_pca_typed(&yq, &kernel, cfg)?;
            let mut perf = build_report(&run, cfg, model);
            perf.set_batches(mn.0, mn.1);
            Ok(PcaOutput {
                projected: to_f64_matrix(&run.projection.product),
                eigenvalues: run.jacobi.eigenvalues.clone(),
                eigenvectors: to_f64_matrix(&run.jacobi.eigenvectors),
                selection: run.selection,
                e_off_trace: run.jacobi.e_off_trace,
                max_pivot_trace: run.jacobi.max_pivot_trace,
                rotations_trace: run.jacobi.rotations_trace,
                sweeps_executed: run.jacobi.sweeps_executed,
                rotations_executed: run.jacobi.rotations_executed,
                perf,
                cache_stats: run.cache_stats,
                standardization: params,
                saturations: run.jacobi.saturations + run.covariance.run.saturations,
                quantization_clamps: clamps,
            })
        }
    }
}
