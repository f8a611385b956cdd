//! Command-line surface: dataset ingestion, end-to-end PCA runs, raw engine
//! products, convergence studies, design-space sweeps and synthetic data.
//!
//! Every run writes a `manifest.json` carrying the complete effective
//! configuration; identical configurations and seeds produce byte-identical
//! output files.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::datasets;
use crate::fixed::QFormat;
use crate::io;
use crate::jacobi::{JacobiConfig, PivotStrategy};
use crate::memory::{CacheConfig, CacheHierarchy, EngineMode};
use crate::pca::{run_pca, NumericPath, PcaConfig, SelectionCriterion};
use crate::perf::{dse_sweep, PerfModelConfig};
use crate::scalar::{quantize_matrix, to_f64_matrix};
use crate::scheduler::{run_matmul, EngineConfig};

#[derive(Parser, Debug)]
#[command(
    name = "manojavam",
    version,
    about = "Cycle-approximate simulator of a tiled systolic PCA accelerator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Full PCA pipeline on a CSV dataset.
    Pca(PcaArgs),
    /// One engine matrix product with trace export.
    Matmul(MatmulArgs),
    /// Per-sweep off-diagonal convergence study over one or more datasets.
    Convergence(ConvergenceArgs),
    /// Design-space sweep over tile sizes and parallelism indices.
    Dse(DseArgs),
    /// Generate a synthetic dataset CSV.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
pub enum PivotArg {
    Max,
    Cyclic,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
pub enum PathArg {
    Float,
    Fixed,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
pub enum OnOff {
    On,
    Off,
}

/// Knobs shared by the compute commands.
#[derive(Args, Clone, Debug, serde::Serialize)]
pub struct CommonArgs {
    /// Systolic tile dimension T.
    #[arg(long = "tile-size", default_value_t = 4)]
    pub tile_size: usize,
    /// Parallelism index S (number of arrays and private caches).
    #[arg(long = "parallelism", default_value_t = 8)]
    pub parallelism: usize,
    /// Fixed-point format as I.F (integer bits incl. sign, fraction bits).
    #[arg(long = "q-format", default_value = "16.16")]
    pub q_format: String,
    #[arg(long = "cordic-iters", default_value_t = 16)]
    pub cordic_iters: u32,
    /// Sweep budget of the eigensolver.
    #[arg(long = "sweeps", default_value_t = 50)]
    pub sweeps: usize,
    #[arg(long = "pivot", value_enum, default_value_t = PivotArg::Max)]
    pub pivot: PivotArg,
    /// Early-exit threshold on the off-diagonal norm (0 disables).
    #[arg(long = "epsilon", default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long = "path", value_enum, default_value_t = PathArg::Float)]
    pub path: PathArg,
    #[arg(long = "lhs-cache-rows", default_value_t = 256)]
    pub lhs_cache_rows: usize,
    #[arg(long = "rhs-cache-rows", default_value_t = 64)]
    pub rhs_cache_rows: usize,
    #[arg(long = "clock-mhz", default_value_t = 200.0)]
    pub clock_mhz: f64,
    /// Peak power in watts; defaults to the (4,8) or (16,32) presets when
    /// the configuration matches one, otherwise energy is not reported.
    #[arg(long = "power-w")]
    pub power_w: Option<f64>,
    /// Component selection: evcr:TAU, cvcr:TAU or k:N.
    #[arg(long = "select", default_value = "cvcr:0.95")]
    pub select: String,
    #[arg(long = "standardize", value_enum, default_value_t = OnOff::On)]
    pub standardize: OnOff,
    #[arg(long = "seed", default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long = "out", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PcaArgs {
    /// Input dataset CSV (rows = samples, columns = features).
    #[arg(long = "input")]
    pub input: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct MatmulArgs {
    #[arg(long = "lhs")]
    pub lhs: PathBuf,
    #[arg(long = "rhs")]
    pub rhs: PathBuf,
    /// Check the product against the reference triple-loop result.
    #[arg(long = "verify", default_value_t = false)]
    pub verify: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct ConvergenceArgs {
    /// Input dataset CSV; repeatable.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct DseArgs {
    /// Optional dataset; when absent, --rows/--cols describe the shape.
    #[arg(long = "input")]
    pub input: Option<PathBuf>,
    #[arg(long = "rows", default_value_t = 64)]
    pub rows: usize,
    #[arg(long = "cols", default_value_t = 64)]
    pub cols: usize,
    /// Comma-separated tile sizes, e.g. 2,4,8.
    #[arg(long = "tile-sizes", default_value = "2,4,8")]
    pub tile_sizes: String,
    /// Comma-separated parallelism indices, e.g. 1,2,4,8.
    #[arg(long = "parallelism-list", default_value = "1,2,4,8")]
    pub parallelism_list: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
pub enum SynthKind {
    PlantedSpike,
    RandomSymmetric,
    Uncorrelated,
    Gaussian,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long = "kind", value_enum)]
    pub kind: SynthKind,
    #[arg(long = "rows", default_value_t = 128)]
    pub rows: usize,
    #[arg(long = "cols", default_value_t = 16)]
    pub cols: usize,
    /// Planted directions for the planted-spike generator.
    #[arg(long = "spikes", default_value_t = 2)]
    pub spikes: usize,
    /// Isotropic noise level for the planted-spike generator.
    #[arg(long = "noise", default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long = "seed", default_value_t = 0)]
    pub seed: u64,
    /// Output CSV file.
    #[arg(long = "out")]
    pub out: PathBuf,
}

pub fn parse_q_format(text: &str) -> crate::Result<QFormat> {
    let (i, f) = text.split_once('.').ok_or_else(|| {
        crate::Error::InvalidConfig(format!("q-format must look like 16.16, got {text:?}"))
    })?;
    let int_bits = i.parse::<u8>().map_err(|_| {
        crate::Error::InvalidConfig(format!("bad integer-bit count in q-format {text:?}"))
    })?;
    let frac_bits = f.parse::<u8>().map_err(|_| {
        crate::Error::InvalidConfig(format!("bad fraction-bit count in q-format {text:?}"))
    })?;
    QFormat::new(int_bits, frac_bits)
}

pub fn parse_selection(text: &str) -> crate::Result<SelectionCriterion> {
    let (kind, value) = text.split_once(':').ok_or_else(|| {
        crate::Error::InvalidConfig(format!(
            "selection must be evcr:TAU, cvcr:TAU or k:N, got {text:?}"
        ))
    })?;
    match kind {
        "evcr" => Ok(SelectionCriterion::EvcrFloor(value.parse().map_err(|_| {
            crate::Error::InvalidConfig(format!("bad evcr threshold {value:?}"))
        })?)),
        "cvcr" => Ok(SelectionCriterion::CvcrTarget(value.parse().map_err(|_| {
            crate::Error::InvalidConfig(format!("bad cvcr threshold {value:?}"))
        })?)),
        "k" => Ok(SelectionCriterion::FixedK(value.parse().map_err(|_| {
            crate::Error::InvalidConfig(format!("bad component count {value:?}"))
        })?)),
        other => Err(crate::Error::InvalidConfig(format!("unknown selection kind {other:?}"))),
    }
}

fn parse_list(text: &str, what: &str) -> crate::Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<usize>().map_err(|_| {
                crate::Error::InvalidConfig(format!("bad {what} entry {:?}", s.trim()))
            })
        })
        .collect()
}

impl CommonArgs {
    pub fn engine(&self) -> crate::Result<EngineConfig> {
        EngineConfig::new(self.tile_size, self.parallelism)
    }

    pub fn jacobi(&self) -> crate::Result<JacobiConfig> {
        let cfg = JacobiConfig {
            sweep_budget: self.sweeps,
            epsilon: self.epsilon,
            pivot_strategy: match self.pivot {
                PivotArg::Max => PivotStrategy::MaxPivot,
                PivotArg::Cyclic => PivotStrategy::CyclicRowwise,
            },
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn numeric_path(&self) -> crate::Result<NumericPath> {
        Ok(match self.path {
            PathArg::Float => NumericPath::Float,
            PathArg::Fixed => NumericPath::Fixed {
                format: parse_q_format(&self.q_format)?,
                cordic_iterations: self.cordic_iters,
            },
        })
    }

    pub fn perf_model(&self) -> crate::Result<PerfModelConfig> {
        let model = PerfModelConfig {
            clock_hz: self.clock_mhz * 1e6,
            peak_power_w: self
                .power_w
                .or_else(|| PerfModelConfig::preset_power(self.tile_size, self.parallelism)),
            ..Default::default()
        };
        model.validate()?;
        Ok(model)
    }

    pub fn pca_config(&self) -> crate::Result<PcaConfig> {
        Ok(PcaConfig {
            engine: self.engine()?,
            jacobi: self.jacobi()?,
            criterion: parse_selection(&self.select)?,
            standardize: matches!(self.standardize, OnOff::On),
            path: self.numeric_path()?,
            lhs_cache_rows: self.lhs_cache_rows,
            rhs_cache_rows: self.rhs_cache_rows,
        })
    }
}

#[derive(serde::Serialize)]
struct Manifest<'a, C: serde::Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    inputs: Vec<String>,
    config: C,
}

fn manifest<'a, C: serde::Serialize>(
    command: &'a str,
    inputs: &[&Path],
    config: C,
) -> Manifest<'a, C> {
    Manifest {
        tool: "manojavam",
        version: env!("CARGO_PKG_VERSION"),
        command,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        config,
    }
}

#[derive(serde::Serialize)]
struct PcaManifestConfig {
    pca: PcaConfig,
    model: PerfModelConfig,
    seed: u64,
    args: CommonArgs,
}

fn cmd_pca(args: &PcaArgs) -> crate::Result<()> {
    let x = io::read_matrix_csv(&args.input)?;
    let cfg = args.common.pca_config()?;
    let model = args.common.perf_model()?;
    let out = run_pca(&x, &cfg, &model)?;

    let dir = &args.common.out;
    io::write_eigenvalues_csv(&dir.join("eigenvalues.csv"), &out.eigenvalues)?;
    io::write_selection_csv(&dir.join("evcr_cvcr.csv"), &out.selection)?;
    io::write_matrix_csv(&dir.join("projection.csv"), &out.projected)?;
    io::write_convergence_csv(
        &dir.join("convergence.csv"),
        &out.e_off_trace,
        &out.max_pivot_trace,
        &out.rotations_trace,
    )?;
    io::write_cache_stats_csv(&dir.join("cache_stats.csv"), &out.cache_stats)?;
    io::write_perf_csv(&dir.join("perf.csv"), &out.perf)?;
    io::write_manifest(
        &dir.join("manifest.json"),
        &manifest(
            "pca",
            &[args.input.as_path()],
            PcaManifestConfig {
                pca: cfg,
                model,
                seed: args.common.seed,
                args: args.common.clone(),
            },
        ),
    )?;

    println!(
        "pca: {}x{} input, k={} of {} components, {} sweeps, {} rotations, {} cycles",
        x.rows(),
        x.cols(),
        out.selection.k,
        out.eigenvalues.len(),
        out.sweeps_executed,
        out.rotations_executed,
        out.perf.total_cycles()
    );
    if out.saturations > 0 || out.quantization_clamps > 0 {
        println!(
            "fixed path: {} saturation events, {} quantization clamps",
            out.saturations, out.quantization_clamps
        );
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct MatmulManifestConfig {
    engine: EngineConfig,
    model: PerfModelConfig,
    path: NumericPath,
    verify: bool,
    args: CommonArgs,
}

fn cmd_matmul(args: &MatmulArgs) -> crate::Result<()> {
    let a = io::read_matrix_csv(&args.lhs)?;
    let b = io::read_matrix_csv(&args.rhs)?;
    let engine = args.common.engine()?;
    let path = args.common.numeric_path()?;
    let model = args.common.perf_model()?;
    let t = args.common.tile_size;
    let dir = &args.common.out;

    let (product, passes, cycles, trace, stats, verified) = match path {
        NumericPath::Float => {
            let mut h = CacheHierarchy::new(
                CacheConfig::new(args.common.lhs_cache_rows, t, 8)?,
                CacheConfig::new(args.common.rhs_cache_rows, t, 8)?,
                engine.s,
            );
            let r = run_matmul(&a, &b, &engine, &mut h, EngineMode::Covariance, None)?;
            let verified = if args.verify {
                let want = crate::oracle::oracle_matmul(&a, &b);
                if r.product != want {
                    return Err(crate::Error::Numerical(
                        "engine product deviates from the reference".into(),
                    ));
                }
                Some(true)
            } else {
                None
            };
            (r.product, r.passes, r.cycles, r.run.trace, r.cache_stats, verified)
        }
        NumericPath::Fixed { format, .. } => {
            let (aq, _) = quantize_matrix(&a, format);
            let (bq, _) = quantize_matrix(&b, format);
            let mut h = CacheHierarchy::new(
                CacheConfig::new(args.common.lhs_cache_rows, t, 8)?,
                CacheConfig::new(args.common.rhs_cache_rows, t, 8)?,
                engine.s,
            );
            let r = run_matmul(&aq, &bq, &engine, &mut h, EngineMode::Covariance, None)?;
            let product = to_f64_matrix(&r.product);
            let verified = if args.verify {
                let want = crate::oracle::oracle_matmul(
                    &to_f64_matrix(&aq),
                    &to_f64_matrix(&bq),
                );
                let bound = a.cols() as f64 * format.ulp();
                let diff = product.max_abs_diff(&want);
                if diff > bound {
                    return Err(crate::Error::Numerical(format!(
                        "fixed-path product deviates by {diff}, bound {bound}"
                    )));
                }
                Some(true)
            } else {
                None
            };
            (product, r.passes, r.cycles, r.run.trace, r.cache_stats, verified)
        }
    };

    io::write_matrix_csv(&dir.join("product.csv"), &product)?;
    io::write_pass_trace_csv(&dir.join("trace.csv"), &trace)?;
    io::write_cache_stats_csv(&dir.join("cache_stats.csv"), &stats)?;
    io::write_manifest(
        &dir.join("manifest.json"),
        &manifest(
            "matmul",
            &[args.lhs.as_path(), args.rhs.as_path()],
            MatmulManifestConfig {
                engine,
                model,
                path,
                verify: args.verify,
                args: args.common.clone(),
            },
        ),
    )?;
    println!(
        "matmul: {}x{} by {}x{}, {} passes, {} cycles{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols(),
        passes,
        cycles,
        match verified {
            Some(_) => ", verified against reference",
            None => "",
        }
    );
    Ok(())
}

fn cmd_convergence(args: &ConvergenceArgs) -> crate::Result<()> {
    let mut cfg = args.common.pca_config()?;
    // The study needs only the covariance and the eigensolver trace.
    cfg.criterion = SelectionCriterion::FixedK(1);
    let model = args.common.perf_model()?;
    let dir = &args.common.out;
    for input in &args.inputs {
        let x = io::read_matrix_csv(input)?;
        let out = run_pca(&x, &cfg, &model)?;
        let stem = input
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "dataset".into());
        io::write_convergence_csv(
            &dir.join(format!("convergence_{stem}.csv")),
            &out.e_off_trace,
            &out.max_pivot_trace,
            &out.rotations_trace,
        )?;
        let final_rel = out
            .e_off_trace
            .last()
            .map(|e| {
                if out.e_off_trace[0] > 0.0 {
                    e / out.e_off_trace[0]
                } else {
                    0.0
                }
            })
            .unwrap_or(0.0);
        println!(
            "convergence: {} ({}x{}): {} sweeps, final relative E_off {:e}",
            stem,
            x.rows(),
            x.cols(),
            out.sweeps_executed,
            final_rel
        );
    }
    io::write_manifest(
        &dir.join("manifest.json"),
        &manifest(
            "convergence",
            &args.inputs.iter().map(|p| p.as_path()).collect::<Vec<_>>(),
            args.common.clone(),
        ),
    )?;
    Ok(())
}

#[derive(serde::Serialize)]
struct DseManifestConfig {
    tile_sizes: Vec<usize>,
    parallelism_list: Vec<usize>,
    rows: usize,
    cols: usize,
    simulated: bool,
    model: PerfModelConfig,
    args: CommonArgs,
}

fn cmd_dse(args: &DseArgs) -> crate::Result<()> {
    let t_values = parse_list(&args.tile_sizes, "tile size")?;
    let s_values = parse_list(&args.parallelism_list, "parallelism")?;
    let model = args.common.perf_model()?;
    let data = args.input.as_ref().map(|p| io::read_matrix_csv(p)).transpose()?;
    let dims = match &data {
        Some(x) => (x.rows(), x.cols()),
        None => (args.rows, args.cols),
    };
    // Desk-scale problems are simulated end to end; larger ones take the
    // analytical estimate.
    let simulate = dims.1 <= 128 && dims.0 <= 4096;
    let outcome = dse_sweep(
        data.as_ref(),
        dims,
        &t_values,
        &s_values,
        &model,
        (args.common.lhs_cache_rows, args.common.rhs_cache_rows),
        simulate,
    )?;
    let dir = &args.common.out;
    io::write_dse_csv(&dir.join("dse.csv"), &outcome)?;
    io::write_manifest(
        &dir.join("manifest.json"),
        &manifest(
            "dse",
            &args.input.as_deref().map(|p| vec![p]).unwrap_or_default(),
            DseManifestConfig {
                tile_sizes: t_values,
                parallelism_list: s_values,
                rows: dims.0,
                cols: dims.1,
                simulated: simulate,
                model,
                args: args.common.clone(),
            },
        ),
    )?;
    println!(
        "dse: {} points ({}), time nonincreasing in S: {}, in T: {}",
        outcome.points.len(),
        if simulate { "simulated" } else { "estimated" },
        outcome.monotone_in_s,
        outcome.monotone_in_t
    );
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> crate::Result<()> {
    let x = match args.kind {
        SynthKind::PlantedSpike => {
            datasets::planted_spike(args.rows, args.cols, args.spikes, args.noise, args.seed)
        }
        SynthKind::RandomSymmetric => datasets::random_symmetric(args.cols, 1.0, args.seed),
        SynthKind::Uncorrelated => datasets::uncorrelated(args.rows, args.cols, args.seed),
        SynthKind::Gaussian => datasets::gaussian(args.rows, args.cols, args.seed),
    };
    io::write_matrix_csv(&args.out, &x)?;
    println!("synth: wrote {}x{} dataset to {}", x.rows(), x.cols(), args.out.display());
    Ok(())
}

/// Dispatch a parsed command line.
pub fn run(cli: Cli) -> crate::Result<()> {
    match &cli.command {
        Command::Pca(args) => cmd_pca(args),
        Command::Matmul(args) => cmd_matmul(args),
        Command::Convergence(args) => cmd_convergence(args),
        Command::Dse(args) => cmd_dse(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

/// Process exit code policy: 1 for input/configuration problems, 2 for
/// numerical failures.
pub fn exit_code(e: &crate::Error) -> i32 {
    match e {
        crate::Error::Numerical(_) | crate::Error::IncompleteAccumulation { .. } => 2,
        _ => 1,
    }
}
