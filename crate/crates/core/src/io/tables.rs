//! CSV writers for the evaluation protocols (one row per table/grid cell)
//! plus a generic JSON summary writer.

use crate::error::Result;
use crate::eval::{ReconstructionRow, RuntimeReport, SweepCell, Table1Row};
use serde::Serialize;
use std::fs;
use std::path::Path;

/// Columns: sample_size, solver, e_r_deg, e_t_mm, e_xy_mm, e_z_mm, trials,
/// excluded.
pub fn write_table1_csv(path: &Path, rows: &[Table1Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "sample_size",
        "solver",
        "e_r_deg",
        "e_t_mm",
        "e_xy_mm",
        "e_z_mm",
        "trials",
        "excluded",
    ])
    .map_err(csv_err)?;
    for row in rows {
        for (solver, stats, excluded) in [
            ("closed_form", &row.closed_form, row.excluded_closed_form),
            ("iterative", &row.iterative, row.excluded_iterative),
        ] {
            w.write_record([
                row.sample_size.to_string(),
                solver.to_string(),
                stats.e_r_deg.to_string(),
                stats.e_t_mm.to_string(),
                stats.e_xy_mm.to_string(),
                stats.e_z_mm.to_string(),
                stats.trials.to_string(),
                excluded.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "rotation_sigma_rad",
        "translation_sigma_m",
        "e_r_deg",
        "e_t_mm",
        "e_xy_mm",
        "e_z_mm",
        "trials",
        "excluded",
    ])
    .map_err(csv_err)?;
    for cell in cells {
        w.write_record([
            cell.rotation_sigma_rad.to_string(),
            cell.translation_sigma_m.to_string(),
            cell.stats.e_r_deg.to_string(),
            cell.stats.e_t_mm.to_string(),
            cell.stats.e_xy_mm.to_string(),
            cell.stats.e_z_mm.to_string(),
            cell.stats.trials.to_string(),
            cell.excluded.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reconstruction_csv(path: &Path, rows: &[ReconstructionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "fit_size",
        "rotation_error_deg",
        "distance_error_mm",
        "trials",
        "excluded",
    ])
    .map_err(csv_err)?;
    for row in rows {
        w.write_record([
            row.fit_size.to_string(),
            row.rotation_error_deg.to_string(),
            row.distance_error_mm.to_string(),
            row.trials.to_string(),
            row.excluded.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_runtime_csv(path: &Path, report: &RuntimeReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "mean_solve_seconds",
        "mean_iterations",
        "iteration_std",
        "repetitions",
    ])
    .map_err(csv_err)?;
    w.write_record([
        report.mean_solve_seconds.to_string(),
        report.mean_iterations.to_string(),
        report.iteration_std.to_string(),
        report.repetitions.to_string(),
    ])
    .map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON of any serializable evaluation result.
pub fn write_json_summary<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value).unwrap())?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Parse(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::TrialStats;

    #[test]
    fn table1_csv_has_two_rows_per_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t1.csv");
        let stats = TrialStats {
            e_r_deg: 0.1,
            e_t_mm: 2.0,
            e_xy_mm: 1.0,
            e_z_mm: 1.7,
            trials: 50,
            sample_size: 10,
        };
        let rows = vec![Table1Row {
            sample_size: 10,
            closed_form: stats,
            iterative: stats,
            excluded_closed_form: 0,
            excluded_iterative: 1,
        }];
        write_table1_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("10,closed_form,"));
        assert!(lines[2].starts_with("10,iterative,"));
    }
}
