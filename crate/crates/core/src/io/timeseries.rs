//! CSV log of a run: one row per tick, 9 significant digits, fixed header.
//!
//! Columns, with `N` the number of compartments (separator last):
//! `t_s`, `hto_1_frac … hto_N_frac`, `hto_meas_frac`, `hto_hat_frac`,
//! `n_h2_hat_mol_per_s`, `n_o2_hat_mol_per_s`, `p_1_bar … p_N_bar`,
//! `level_m`, `p_sp_bar`, `n_out_gas_mol_per_s`, `m_lye_kg_per_s`,
//! `current_density_a_per_m2`, `dp_bar`, `alarm_1 … alarm_N` (0/1),
//! `y_p_bar`, `y_level_m`, `y_x_h2_frac`, `y_x_o2_frac`, `closure_error`,
//! `holdup_mol`, `cum_in_mol`, `cum_out_mol`.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::{EstimatorInputs, Measurement, ReplaySample};
use crate::scenario::TimeSeriesRecord;

/// Fixed 9-significant-digit rendering.
pub fn fmt9(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string()
    }
}

pub fn header(n_compartments: usize) -> Vec<String> {
    let per = |prefix: &'static str, suffix: &'static str| (1..=n_compartments).map(move |i| format!("{prefix}{i}{suffix}"));
    let mut h = vec!["t_s".to_string()];
    h.extend(per("hto_", "_frac"));
    h.extend(
        ["hto_meas_frac", "hto_hat_frac", "n_h2_hat_mol_per_s", "n_o2_hat_mol_per_s"]
            .iter()
            .map(|s| s.to_string()),
    );
    h.extend(per("p_", "_bar"));
    h.extend(
        [
            "level_m",
            "p_sp_bar",
            "n_out_gas_mol_per_s",
            "m_lye_kg_per_s",
            "current_density_a_per_m2",
            "dp_bar",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h.extend(per("alarm_", ""));
    h.extend(
        [
            "y_p_bar",
            "y_level_m",
            "y_x_h2_frac",
            "y_x_o2_frac",
            "closure_error",
            "holdup_mol",
            "cum_in_mol",
            "cum_out_mol",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

fn row(r: &TimeSeriesRecord) -> Vec<String> {
    let mut v = vec![fmt9(r.t)];
    v.extend(r.hto.iter().map(|x| fmt9(*x)));
    v.extend([r.hto_meas, r.hto_hat, r.n_h2_hat, r.n_o2_hat].map(fmt9));
    v.extend(r.pressure.iter().map(|x| fmt9(*x)));
    v.extend([r.level, r.p_sp, r.n_out_gas, r.m_lye, r.current_density, r.dp].map(fmt9));
    v.extend(r.alarm.iter().map(|a| if *a { "1" } else { "0" }.to_string()));
    v.extend(r.y.as_array().map(fmt9));
    v.extend([r.closure_error, r.holdup, r.cum_in, r.cum_out].map(fmt9));
    v
}

/// Writes the log to any sink.
pub fn write_records<W: Write>(records: &[TimeSeriesRecord], sink: W) -> Result<()> {
    let first = records
        .first()
        .ok_or_else(|| Error::domain("no records to write"))?;
    let n = first.hto.len();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    let to_err = |e: csv::Error| Error::Csv {
        path: "<stream>".into(),
        message: e.to_string(),
    };
    w.write_record(header(n)).map_err(to_err)?;
    for r in records {
        if r.hto.len() != n || r.pressure.len() != n || r.alarm.len() != n {
            return Err(Error::domain(format!("record at t = {} has a different column count", r.t)));
        }
        w.write_record(row(r)).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Csv {
        path: "<stream>".into(),
        message: e.to_string(),
    })
}

/// Writes the log atomically: a temporary file in the target directory is
/// renamed over `path` only after every row was written.
pub fn write_csv(records: &[TimeSeriesRecord], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_records(records, &mut buf).map_err(|e| with_path(e, path))?;
    super::write_atomic(path, &buf)
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Csv { message, .. } => Error::Csv {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    }
}

/// Reads a log produced by [`write_records`].
pub fn read_records<R: Read>(source: R) -> Result<Vec<TimeSeriesRecord>> {
    let csv_err = |message: String| Error::Csv {
        path: "<stream>".into(),
        message,
    };
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let head = rd.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    // Fixed columns besides the 3 per-compartment groups.
    let fixed = 1 + 4 + 6 + 8;
    if head.len() < fixed + 3 || (head.len() - fixed) % 3 != 0 {
        return Err(csv_err(format!("unexpected column count {}", head.len())));
    }
    let n = (head.len() - fixed) / 3;
    let expected = header(n);
    if head.iter().ne(expected.iter().map(String::as_str)) {
        return Err(csv_err("header does not match the log schema".into()));
    }
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(e.to_string()))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| csv_err(format!("row {}: {e}", line + 2)))?;
        let mut it = v.into_iter();
        let mut take = |k: usize| -> Vec<f64> { it.by_ref().take(k).collect() };
        let t = take(1)[0];
        let hto = take(n);
        let est = take(4);
        let pressure = take(n);
        let act = take(6);
        let alarm = take(n).into_iter().map(|a| a != 0.0).collect();
        let y = take(4);
        let bal = take(4);
        out.push(TimeSeriesRecord {
            t,
            hto,
            hto_meas: est[0],
            hto_hat: est[1],
            n_h2_hat: est[2],
            n_o2_hat: est[3],
            pressure,
            level: act[0],
            p_sp: act[1],
            n_out_gas: act[2],
            m_lye: act[3],
            current_density: act[4],
            dp: act[5],
            alarm,
            y: Measurement::from_array([y[0], y[1], y[2], y[3]]),
            closure_error: bal[0],
            holdup: bal[1],
            cum_in: bal[2],
            cum_out: bal[3],
        });
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<TimeSeriesRecord>> {
    let f = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_records(BufReader::new(f)).map_err(|e| with_path(e, path))
}

/// Measurement/input stream for an estimator replay.
pub fn replay_samples(records: &[TimeSeriesRecord]) -> Vec<ReplaySample> {
    records
        .iter()
        .map(|r| ReplaySample {
            t: r.t,
            y: r.y,
            u: EstimatorInputs {
                n_out_gas: r.n_out_gas,
                m_lye: r.m_lye,
            },
        })
        .collect()
}

/// Writes `t_s,hto_hat_frac` rows.
pub fn write_estimates(rows: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut buf = String::from("t_s,hto_hat_frac\n");
    for (t, h) in rows {
        buf.push_str(&format!("{},{}\n", fmt9(*t), fmt9(*h)));
    }
    super::write_atomic(path, buf.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64, n: usize) -> TimeSeriesRecord {
        TimeSeriesRecord {
            t,
            hto: (0..n).map(|i| 0.005 + 1e-4 * i as f64 + t * 1e-7).collect(),
            hto_meas: 0.0051234567891,
            hto_hat: 0.0049,
            n_h2_hat: 0.0123,
            n_o2_hat: 3.1,
            pressure: vec![20.0 + 1e-3 / 3.0; n],
            level: 0.5,
            p_sp: 20.0,
            n_out_gas: 3.12,
            m_lye: 10.75,
            current_density: 2000.0,
            dp: 0.1,
            alarm: (0..n).map(|i| i == 0).collect(),
            y: Measurement::from_array([20.0, 0.5, 0.005, 0.995]),
            closure_error: 1e-16,
            holdup: 12.5,
            cum_in: 100.0,
            cum_out: 99.0,
        }
    }

    #[test]
    fn header_starts_with_time() {
        let h = header(6);
        assert_eq!(h[0], "t_s");
        assert_eq!(h.len(), 1 + 4 + 6 + 8 + 18);
    }

    #[test]
    fn write_read_round_trip_at_print_precision() {
        let records: Vec<_> = (0..5).map(|k| rec(k as f64 * 0.1, 6)).collect();
        let mut buf = Vec::new();
        write_records(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 6);
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a.alarm, b.alarm);
            for (x, y) in a.hto.iter().zip(&b.hto) {
                assert!((x - y).abs() <= 5e-9 * x.abs());
            }
            assert!((a.hto_meas - b.hto_meas).abs() <= 5e-9 * a.hto_meas);
            assert_eq!(b.y, a.y);
        }
    }

    #[test]
    fn empty_record_list_is_rejected() {
        assert!(write_records(&[], Vec::new()).is_err());
    }

    #[test]
    fn foreign_header_is_rejected() {
        let err = read_records("a,b,c\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Csv { .. }));
    }
}
