//! Plain-text trajectory format.
//!
//! ```text
//! # format=nhb-trajectory version=1
//! t,q0,...,q{n-1},p0,...,p{n-1},xi
//! 0,0.5,...
//! ```
//! Numbers use Rust's shortest round-trip formatting, so writing and reading
//! back reproduces every f64 bit for bit.

use std::io::{BufRead, Write};

use super::trajectory::Trajectory;
use crate::error::{NhbError, Result};
use crate::model::State;

pub const CSV_HEADER_TAG: &str = "# format=nhb-trajectory version=1";
/// Ensemble snapshots: one row per (time, chain), columns t,chain,q*,p*,xi.
pub const ENSEMBLE_HEADER_TAG: &str = "# format=nhb-ensemble version=1";

fn push_state(line: &mut String, s: &State) {
    use std::fmt::Write as _;
    for v in s.q.iter().chain(&s.p) {
        let _ = write!(line, ",{v}");
    }
    let _ = write!(line, ",{}", s.xi);
}

fn state_columns(n: usize) -> Vec<String> {
    let mut cols: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
    cols.extend((0..n).map(|i| format!("p{i}")));
    cols.push("xi".into());
    cols
}

pub fn write_csv<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    let n = traj.states.first().map_or(0, |s| s.q.len());
    writeln!(w, "{CSV_HEADER_TAG}")?;
    let mut cols = vec!["t".to_string()];
    cols.extend(state_columns(n));
    writeln!(w, "{}", cols.join(","))?;
    let mut line = String::new();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        line.clear();
        line.push_str(&t.to_string());
        push_state(&mut line, s);
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Write snapshots indexed [snapshot][chain] taken at `times`.
pub fn write_ensemble_csv<W: Write>(times: &[f64], table: &[Vec<State>], mut w: W) -> Result<()> {
    let n = table.first().and_then(|r| r.first()).map_or(0, |s| s.q.len());
    writeln!(w, "{ENSEMBLE_HEADER_TAG}")?;
    let mut cols = vec!["t".to_string(), "chain".to_string()];
    cols.extend(state_columns(n));
    writeln!(w, "{}", cols.join(","))?;
    let mut line = String::new();
    for (t, row) in times.iter().zip(table) {
        for (c, s) in row.iter().enumerate() {
            line.clear();
            line.push_str(&format!("{t},{c}"));
            push_state(&mut line, s);
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

/// Read an ensemble file back into (times, [snapshot][chain]). Rows must be
/// grouped by time with chains in order.
pub fn read_ensemble_csv<R: BufRead>(r: R) -> Result<(Vec<f64>, Vec<Vec<State>>)> {
    let bad = |msg: String| NhbError::Config(format!("ensemble file: {msg}"));
    let mut lines = r.lines();
    let tag = lines.next().transpose()?.unwrap_or_default();
    if tag.trim() != ENSEMBLE_HEADER_TAG {
        return Err(bad(format!("expected header '{ENSEMBLE_HEADER_TAG}', found '{tag}'")));
    }
    let header = lines.next().transpose()?.ok_or_else(|| bad("missing column header".into()))?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 5 || cols.len().is_multiple_of(2) || cols[0] != "t" || cols[1] != "chain" {
        return Err(bad(format!("bad column header '{header}'")));
    }
    let n = (cols.len() - 3) / 2;
    let mut times: Vec<f64> = Vec::new();
    let mut table: Vec<Vec<State>> = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| bad(format!("row {}: {e}", k + 1)))?;
        if vals.len() != cols.len() {
            return Err(bad(format!("row {} has {} fields, expected {}", k + 1, vals.len(), cols.len())));
        }
        let (t, chain) = (vals[0], vals[1] as usize);
        if times.last() != Some(&t) {
            times.push(t);
            table.push(Vec::new());
        }
        let row = table.last_mut().expect("row exists");
        if chain != row.len() {
            return Err(bad(format!("row {}: chain {chain} out of order", k + 1)));
        }
        row.push(State::new(vals[2..2 + n].to_vec(), vals[2 + n..2 + 2 * n].to_vec(), vals[2 + 2 * n]));
    }
    Ok((times, table))
}

pub fn read_csv<R: BufRead>(r: R) -> Result<Trajectory> {
    let bad = |msg: String| NhbError::Config(format!("trajectory file: {msg}"));
    let mut lines = r.lines();
    let tag = lines.next().transpose()?.unwrap_or_default();
    if tag.trim() != CSV_HEADER_TAG {
        return Err(bad(format!("expected header '{CSV_HEADER_TAG}', found '{tag}'")));
    }
    let header = lines.next().transpose()?.ok_or_else(|| bad("missing column header".into()))?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 4 || !cols.len().is_multiple_of(2) || cols[0] != "t" || cols[cols.len() - 1] != "xi" {
        return Err(bad(format!("bad column header '{header}'")));
    }
    let n = (cols.len() - 2) / 2;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| bad(format!("row {}: {e}", k + 1)))?;
        if vals.len() != cols.len() {
            return Err(bad(format!("row {} has {} fields, expected {}", k + 1, vals.len(), cols.len())));
        }
        times.push(vals[0]);
        states.push(State::new(vals[1..1 + n].to_vec(), vals[1 + n..1 + 2 * n].to_vec(), vals[1 + 2 * n]));
    }
    Ok(Trajectory {
        chain_id: 0,
        times,
        states,
        brownian_increments_consumed: 0,
        halvings: 0,
        audit: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory {
        Trajectory {
            chain_id: 0,
            times: vec![0.0, 0.1],
            states: vec![
                State::new(vec![0.5], vec![-1.0 / 3.0], 1e-300),
                State::new(vec![f64::MIN_POSITIVE], vec![2.5e10], -0.7),
            ],
            brownian_increments_consumed: 0,
            halvings: 0,
            audit: None,
        }
    }

    #[test]
    fn header_and_round_trip() {
        let t = sample();
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER_TAG));
        assert_eq!(lines.next(), Some("t,q0,p0,xi"));
        let back = read_csv(&buf[..]).unwrap();
        assert_eq!(back.states, t.states);
        assert_eq!(back.times, t.times);
    }

    #[test]
    fn ensemble_round_trip() {
        let t = sample();
        let table = vec![t.states.clone(), t.states.clone()];
        let mut buf = Vec::new();
        write_ensemble_csv(&[0.0, 0.5], &table, &mut buf).unwrap();
        let (times, back) = read_ensemble_csv(&buf[..]).unwrap();
        assert_eq!(times, vec![0.0, 0.5]);
        assert_eq!(back, table);
        assert!(read_csv(&buf[..]).is_err());
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(read_csv(&b"t,q0,p0,xi\n0,1,2,3\n"[..]).is_err());
        assert!(read_csv(&b"# format=nhb-trajectory version=1\nt,q0,p0,xi\n0,1,2\n"[..]).is_err());
    }
}
