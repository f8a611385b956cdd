//! CSV ingestion and report emission.
//!
//! Dialect: comma separated, `.` decimal point, LF line endings, one
//! optional header row. All writers format floats with Rust's shortest
//! round-trip notation, so identical runs emit byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::matrix::Matrix;
use crate::memory::CacheStatsRow;
use crate::pca::ComponentSelection;
use crate::perf::{DseOutcome, PerfReport};
use crate::scheduler::PassRecord;

/// Parse a numeric CSV file into a dense matrix. A first row with any
/// non-numeric cell is treated as the (single, optional) header.
pub fn read_matrix_csv(path: &Path) -> crate::Result<Matrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let mut parsed = Vec::with_capacity(cells.len());
        let mut failed_at = None;
        for (col, cell) in cells.iter().enumerate() {
            match cell.trim().parse::<f64>() {
                Ok(v) => parsed.push(v),
                Err(_) => {
                    failed_at = Some(col + 1);
                    break;
                }
            }
        }
        if let Some(col) = failed_at {
            if idx == 0 {
                // Optional single header row.
                continue;
            }
            return Err(crate::Error::Csv {
                line: line_no,
                msg: format!("non-numeric cell at column {col}: {:?}", cells[col - 1].trim()),
            });
        }
        if let Some(w) = width {
            if parsed.len() != w {
                return Err(crate::Error::Csv {
                    line: line_no,
                    msg: format!("expected {w} columns, found {}", parsed.len()),
                });
            }
        } else {
            width = Some(parsed.len());
        }
        rows.push(parsed);
    }
    let width = width.ok_or(crate::Error::Csv { line: 1, msg: "no numeric rows".into() })?;
    let data: Vec<f64> = rows.concat();
    Matrix::from_vec(rows.len(), width, data)
}

fn write(path: &Path, content: &str) -> crate::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

pub fn write_matrix_csv(path: &Path, m: &Matrix<f64>) -> crate::Result<()> {
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write(path, &out)
}

pub fn write_eigenvalues_csv(path: &Path, eigenvalues: &[f64]) -> crate::Result<()> {
    let mut out = String::from("component,eigenvalue\n");
    for (i, l) in eigenvalues.iter().enumerate() {
        let _ = writeln!(out, "{i},{l}");
    }
    write(path, &out)
}

pub fn write_selection_csv(path: &Path, sel: &ComponentSelection) -> crate::Result<()> {
    let mut out = String::from("component,evcr,cvcr,retained\n");
    for i in 0..sel.evcr.len() {
        let _ = writeln!(
            out,
            "{i},{},{},{}",
            sel.evcr[i],
            sel.cvcr[i],
            if i < sel.k { 1 } else { 0 }
        );
    }
    write(path, &out)
}

/// Per-sweep convergence trace, relative values normalized to sweep 0.
pub fn write_convergence_csv(
    path: &Path,
    e_off: &[f64],
    max_pivot: &[f64],
    rotations: &[u64],
) -> crate::Result<()> {
    let mut out = String::from("sweep,e_off,e_off_relative,max_pivot_magnitude,rotations_so_far\n");
    let base = e_off.first().copied().unwrap_or(0.0);
    for (i, &e) in e_off.iter().enumerate() {
        let rel = if base > 0.0 { e / base } else { 0.0 };
        let pivot = max_pivot.get(i).copied().unwrap_or(0.0);
        let rot = rotations.get(i).copied().unwrap_or(0);
        let _ = writeln!(out, "{i},{e},{rel},{pivot},{rot}");
    }
    write(path, &out)
}

pub fn write_cache_stats_csv(path: &Path, rows: &[CacheStatsRow]) -> crate::Result<()> {
    let mut out =
        String::from("cache_id,mode,hits,misses,allocations,writebacks,measured_p,eat\n");
    for r in rows {
        let p = r.stats.measured_hit_rate().map(|p| p.to_string()).unwrap_or_default();
        let eat = r.eat.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:?},{},{},{},{},{},{}",
            r.cache_id, r.mode, r.stats.hits, r.stats.misses, r.stats.allocations,
            r.stats.writebacks, p, eat
        );
    }
    write(path, &out)
}

pub fn write_pass_trace_csv(path: &Path, trace: &[PassRecord]) -> crate::Result<()> {
    let mut out = String::from(
        "pass_id,row_block,column_blocks,cycles,lhs_hits,lhs_misses,rhs_hits,rhs_misses\n",
    );
    for p in trace {
        let cbs: Vec<String> = p.column_blocks.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.pass_id,
            p.row_block,
            cbs.join(";"),
            p.cycles,
            p.lhs_hits,
            p.lhs_misses,
            p.rhs_hits,
            p.rhs_misses
        );
    }
    write(path, &out)
}

pub fn write_perf_csv(path: &Path, report: &PerfReport) -> crate::Result<()> {
    let mut out = String::from(
        "phase,cycles_load,cycles_compute,cycles_total,wall_time_s,energy_j,batches,passes\n",
    );
    for p in &report.phases {
        let wall = p.total() as f64 / report.clock_hz;
        let energy = report.peak_power_w.map(|w| (w * wall).to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},,",
            p.phase,
            p.load,
            p.compute,
            p.total(),
            wall,
            energy
        );
    }
    let energy = report.energy_j().map(|e| e.to_string()).unwrap_or_default();
    let _ = writeln!(
        out,
        "total,{},{},{},{},{},{},{}",
        report.phases.iter().map(|p| p.load).sum::<u64>(),
        report.phases.iter().map(|p| p.compute).sum::<u64>(),
        report.total_cycles(),
        report.wall_time_s(),
        energy,
        report.batches,
        report.covariance_passes
    );
    write(path, &out)
}

pub fn write_dse_csv(path: &Path, outcome: &DseOutcome) -> crate::Result<()> {
    let mut out = String::from(
        "t,s,phase,cycles_load,cycles_compute,cycles_total,wall_time_s,energy_j,simulated\n",
    );
    for p in &outcome.points {
        let energy = p.energy_j.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p.t, p.s, p.phase, p.cycles_load, p.cycles_compute, p.cycles_total, p.wall_time_s,
            energy, p.simulated as u8
        );
    }
    write(path, &out)
}

/// Reproducibility manifest: every knob that affects outputs, plus the tool
/// version. Serialized as pretty JSON with stable field order.
pub fn write_manifest<T: serde::Serialize>(path: &Path, manifest: &T) -> crate::Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| crate::Error::InvalidConfig(format!("manifest serialization: {e}")))?;
    write(path, &format!("{json}\n"))
}
