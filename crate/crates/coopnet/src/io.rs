//! Output formatting: CSV writers and JSON with fixed-precision floats.
//! All floats are written with 17 significant digits so outputs
//! round-trip bit-exactly; CSV uses `,` separators and LF line endings.

use crate::dynamics::TrajectoryRecord;
use crate::error::Result;
use crate::experiments::SweepRow;
use serde::Serialize;
use std::path::Path;

/// 17-significant-digit float rendering used in every CSV and JSON float.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

struct SigDigitFormatter;

impl serde_json::ser::Formatter for SigDigitFormatter {
    fn write_f64<W: ?Sized + std::io::Write>(
        &mut self,
        writer: &mut W,
        value: f64,
    ) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes to JSON with 17-significant-digit floats.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigitFormatter);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json produces UTF-8"))
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_json_string(value)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub const TRAJECTORY_HEADER: &str =
    "t,coop_mean_degree,coop_assortativity,total_payoff,potential,clamp_events";

pub fn trajectory_to_csv(rec: &TrajectoryRecord) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for k in 0..rec.times.len() {
        out.push_str(&fmt_float(rec.times[k]));
        out.push(',');
        out.push_str(&fmt_float(rec.coop_mean_degree[k]));
        out.push(',');
        out.push_str(&rec.coop_assortativity[k].csv_token());
        out.push(',');
        out.push_str(&fmt_float(rec.total_payoff[k]));
        out.push(',');
        out.push_str(&fmt_float(rec.potential[k]));
        out.push(',');
        out.push_str(&rec.clamp_events[k].to_string());
        out.push('\n');
    }
    out
}

pub const SWEEP_HEADER: &str =
    "axis1,axis2,replicate,seed,mean_degree,assortativity,total_payoff,steps,converged";

pub fn sweep_rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&fmt_float(row.axis1));
        out.push(',');
        if let Some(v) = row.axis2 {
            out.push_str(&fmt_float(v));
        }
        out.push(',');
        out.push_str(&row.replicate.to_string());
        out.push(',');
        out.push_str(&row.seed.to_string());
        out.push(',');
        out.push_str(&opt_float(row.mean_degree));
        out.push(',');
        out.push_str(
            &row.assortativity
                .map_or_else(|| "NA".to_string(), |a| a.csv_token()),
        );
        out.push(',');
        out.push_str(&opt_float(row.total_payoff));
        out.push(',');
        out.push_str(&row.steps.to_string());
        out.push(',');
        out.push_str(if row.converged { "true" } else { "false" });
        out.push('\n');
    }
    out
}

fn opt_float(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_float)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{Assortativity, UndefinedReason};

    #[test]
    fn float_format_has_17_significant_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(35.0), "3.5000000000000000e1");
        let x = 0.123456789012345678;
        let rendered = fmt_float(x);
        assert_eq!(rendered.parse::<f64>().unwrap(), x);
    }

    #[test]
    fn json_floats_roundtrip() {
        #[derive(Serialize)]
        struct Probe {
            a: f64,
            b: Vec<f64>,
        }
        let p = Probe {
            a: 1.0 / 3.0,
            b: vec![0.1, 2e-9],
        };
        let text = to_json_string(&p).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["a"].as_f64().unwrap(), 1.0 / 3.0);
        assert_eq!(v["b"][1].as_f64().unwrap(), 2e-9);
    }

    #[test]
    fn trajectory_csv_layout() {
        let rec = TrajectoryRecord {
            times: vec![0.0, 0.01],
            coop_mean_degree: vec![35.0, 11.0],
            coop_assortativity: vec![
                Assortativity::Undefined(UndefinedReason::ZeroDegreeVariance),
                Assortativity::Defined(0.25),
            ],
            total_payoff: vec![1.0, 2.0],
            potential: vec![-3.0, -1.0],
            clamp_events: vec![0, 7],
            converged: true,
            steps_taken: 100,
        };
        let csv = trajectory_to_csv(&rec);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert!(lines[1].contains(",NA,"));
        assert!(lines[1].ends_with(",0"));
        assert!(lines[2].ends_with(",7"));
        assert!(!csv.contains('\r'));
    }
}
