//! CSV and gnuplot-compatible emission.
//!
//! Numbers are written with 13 significant digits (`{:.12e}`) so a parse
//! round trip reproduces the table to better than 1e-12 relative.

use std::fs;
use std::io::Write;
use std::path::Path;

use bisar_core::error::Result;
use bisar_core::pencil::EstimateSet;

use crate::plan::{ResultRow, ResultTable};

pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.12e}")
    }
}

/// Write `sweep,metric,value,stderr,trials` rows under a config-hash header.
pub fn write_result_csv(table: &ResultTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# config_hash={}\n", table.config_hash));
    out.push_str("sweep,metric,value,stderr,trials\n");
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            format_value(r.sweep),
            r.metric,
            format_value(r.value),
            format_value(r.stderr),
            r.trials
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_result_csv(path: &Path) -> Result<ResultTable> {
    let text = fs::read_to_string(path)?;
    let mut config_hash = String::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# config_hash=") {
            config_hash = rest.to_string();
            continue;
        }
        if line.starts_with('#') || line.starts_with("sweep,") || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(bisar_core::CoreError::BadFormat(format!(
                "bad result row: {line}"
            )));
        }
        rows.push(ResultRow {
            sweep: parts[0].parse().map_err(bad)?,
            metric: parts[1].to_string(),
            value: parts[2].parse().map_err(bad)?,
            stderr: parts[3].parse().map_err(bad)?,
            trials: parts[4].parse().map_err(bad)?,
        });
    }
    Ok(ResultTable { rows, config_hash })
}

fn bad<E: std::fmt::Display>(e: E) -> bisar_core::CoreError {
    bisar_core::CoreError::BadFormat(e.to_string())
}

/// Companion `.dat` for gnuplot: one block per metric, log-scale hints in the
/// header comments. No rendering happens here.
pub fn write_plot_dat(table: &ResultTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# config_hash={}\n", table.config_hash));
    out.push_str(
        "# gnuplot: set logscale y; plot '...' index <block> using 1:2 with yerrorlines\n",
    );
    let mut metrics: Vec<&str> = Vec::new();
    for r in &table.rows {
        if !metrics.contains(&r.metric.as_str()) {
            metrics.push(&r.metric);
        }
    }
    for (i, metric) in metrics.iter().enumerate() {
        out.push_str(&format!("\n\n# block {i}: {metric}\n"));
        out.push_str("# sweep value stderr\n");
        for r in table.rows.iter().filter(|r| r.metric == *metric) {
            out.push_str(&format!(
                "{} {} {}\n",
                format_value(r.sweep),
                format_value(r.value),
                format_value(r.stderr)
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Emit both the CSV and the gnuplot companion.
pub fn emit_plot_data(table: &ResultTable, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_result_csv(table, &dir.join(format!("{stem}.csv")))?;
    write_plot_dat(table, &dir.join(format!("{stem}.dat")))?;
    Ok(())
}

/// Estimate CSV: `trial,peak_bin,target_idx,aoa_deg,aod_deg,gain_mag,delta_rad`.
pub fn write_estimates_csv<W: Write>(
    w: &mut W,
    rows: &[(usize, usize, EstimateSet)],
) -> Result<()> {
    writeln!(
        w,
        "trial,peak_bin,target_idx,aoa_deg,aod_deg,gain_mag,delta_rad"
    )?;
    for (trial, peak_bin, set) in rows {
        for (i, t) in set.targets.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                trial,
                peak_bin,
                i,
                format_value(t.aoa_rad.to_degrees()),
                format_value(t.aod_rad.to_degrees()),
                format_value(t.gain_mag),
                format_value(t.phase_intercept)
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_table() -> ResultTable {
        ResultTable {
            config_hash: "00ff00ff00ff00ff".into(),
            rows: vec![
                ResultRow {
                    sweep: 0.0,
                    metric: "aoa_mse".into(),
                    value: 1.234567890123456e-4,
                    stderr: 7.5e-6,
                    trials: 500,
                },
                ResultRow {
                    sweep: 10.0,
                    metric: "aoa_mse".into(),
                    value: 9.87654321e-6,
                    stderr: 1.2e-7,
                    trials: 500,
                },
                ResultRow {
                    sweep: 0.0,
                    metric: "crb_aoa".into(),
                    value: 3.3e-6,
                    stderr: 0.0,
                    trials: 500,
                },
            ],
        }
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let table = sample_table();
        write_result_csv(&table, &path).unwrap();
        let back = read_result_csv(&path).unwrap();
        assert_eq!(back.config_hash, table.config_hash);
        assert_eq!(back.rows.len(), table.rows.len());
        for (a, b) in back.rows.iter().zip(&table.rows) {
            assert_eq!(a.metric, b.metric);
            assert_eq!(a.trials, b.trials);
            let rel = (a.value - b.value).abs() / b.value.abs().max(1e-300);
            assert!(rel < 1e-12, "value drift {rel:.3e}");
        }
    }

    #[test]
    fn emitted_files_exist_and_dat_has_blocks() {
        let dir = tempfile::tempdir().unwrap();
        emit_plot_data(&sample_table(), dir.path(), "run").unwrap();
        let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
        assert!(csv.starts_with("# config_hash=00ff00ff00ff00ff"));
        let dat = std::fs::read_to_string(dir.path().join("run.dat")).unwrap();
        assert!(dat.contains("# block 0: aoa_mse"));
        assert!(dat.contains("# block 1: crb_aoa"));
        assert!(dat.contains("logscale"));
    }

    #[test]
    fn estimate_csv_has_documented_columns() {
        use bisar_core::pencil::TargetEstimate;
        let set = EstimateSet {
            targets: vec![TargetEstimate {
                aoa_rad: 0.1,
                aod_rad: -0.2,
                gain_mag: 1.5,
                phase_intercept: 0.7,
                clamped: false,
            }],
        };
        let mut buf = Vec::new();
        write_estimates_csv(&mut buf, &[(3, 9, set)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "trial,peak_bin,target_idx,aoa_deg,aod_deg,gain_mag,delta_rad"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("3,9,0,"));
    }
}
