//! Deterministic text serialization: fixed-precision float formatting plus
//! the trajectory CSV schema and a numeric CSV reader with positional
//! error reporting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gait::{GaitParams, Phase};
use crate::sim::{LogMeta, SampleRecord, TrajectoryLog, Vec2};

/// Render a float with nine significant digits. Every numeric field in an
/// emitted artifact goes through this so reruns are byte-identical.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

/// One CSV line from numeric values, no trailing newline.
pub fn csv_line(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}", fmt_float(*v));
    }
    out
}

/// Parse a header line plus all-numeric data rows. `label` names the source
/// in errors; rows and columns are reported 1-based (the header is row 1).
pub fn parse_numeric_csv(text: &str, label: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::CsvParse {
            path: label.to_string(),
            row: 1,
            col: 1,
            msg: "empty file".to_string(),
        })?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();

    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(header.len());
        for (j, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::CsvParse {
                path: label.to_string(),
                row: row_no,
                col: j + 1,
                msg: format!("not a number: {:?}", cell.trim()),
            })?;
            row.push(v);
        }
        if row.len() != header.len() {
            return Err(Error::CsvParse {
                path: label.to_string(),
                row: row_no,
                col: row.len(),
                msg: format!("expected {} columns, got {}", header.len(), row.len()),
            });
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub const TRAJECTORY_HEADER: &str = "t,phase,com_x,com_z,vx,vz,lfoot_x,lfoot_z,rfoot_x,rfoot_z,\
grf_l,grf_r,act_force_l,act_force_r,legrate_l,legrate_r,cmd_speed,freq,ratio";

impl TrajectoryLog {
    /// Serialize the samples to CSV. `grf_l`/`grf_r` are the vertical
    /// ground reaction components.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 + self.samples.len() * 220);
        out.push_str(TRAJECTORY_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&csv_line(&[
                s.time,
                s.phase.value(),
                s.com_pos.x,
                s.com_pos.z,
                s.com_vel.x,
                s.com_vel.z,
                s.foot_pos[0].x,
                s.foot_pos[0].z,
                s.foot_pos[1].x,
                s.foot_pos[1].z,
                s.grf[0].z,
                s.grf[1].z,
                s.actuator_force[0],
                s.actuator_force[1],
                s.leg_rate[0],
                s.leg_rate[1],
                s.cmd_speed,
                s.gait.freq,
                s.gait.ratio,
            ]));
            out.push('\n');
        }
        out
    }

    /// Write the CSV and its JSON metadata sidecar next to each other.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        fs::write(csv_path, self.to_csv())?;
        let meta_path = csv_path.with_extension("meta.json");
        let json = serde_json::to_string_pretty(&self.meta)?;
        fs::write(meta_path, json)?;
        Ok(())
    }

    /// Rebuild samples from trajectory CSV text. Horizontal GRF components
    /// and swing rates are not stored in the CSV and come back as zero.
    pub fn samples_from_csv(text: &str, label: &str) -> Result<Vec<SampleRecord>> {
        let (header, rows) = parse_numeric_csv(text, label)?;
        let expect: Vec<&str> = TRAJECTORY_HEADER.split(',').collect();
        if header != expect {
            return Err(Error::CsvParse {
                path: label.to_string(),
                row: 1,
                col: 1,
                msg: format!("unexpected trajectory header: {}", header.join(",")),
            });
        }
        let mut samples = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            let gait = GaitParams::new(r[17], r[18]).map_err(|e| Error::CsvParse {
                path: label.to_string(),
                row: i + 2,
                col: 18,
                msg: e.to_string(),
            })?;
            let phase = Phase::new(r[1]).map_err(|e| Error::CsvParse {
                path: label.to_string(),
                row: i + 2,
                col: 2,
                msg: e.to_string(),
            })?;
            samples.push(SampleRecord {
                time: r[0],
                phase,
                com_pos: Vec2::new(r[2], r[3]),
                com_vel: Vec2::new(r[4], r[5]),
                foot_pos: [Vec2::new(r[6], r[7]), Vec2::new(r[8], r[9])],
                grf: [Vec2::new(0.0, r[10]), Vec2::new(0.0, r[11])],
                actuator_force: [r[12], r[13]],
                leg_rate: [r[14], r[15]],
                swing_rate: [0.0, 0.0],
                cmd_speed: r[16],
                gait,
            });
        }
        Ok(samples)
    }

    /// Read a log back from a CSV file and its metadata sidecar.
    pub fn read(csv_path: &Path) -> Result<TrajectoryLog> {
        let text = fs::read_to_string(csv_path)?;
        let samples = Self::samples_from_csv(&text, &csv_path.display().to_string())?;
        let meta_path = csv_path.with_extension("meta.json");
        let meta: LogMeta = serde_json::from_str(&fs::read_to_string(meta_path)?)?;
        Ok(TrajectoryLog { samples, meta })
    }
}
