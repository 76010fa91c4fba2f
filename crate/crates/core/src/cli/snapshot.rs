//! Final-state snapshots and their comparison.
//!
//! ```text
//! # ltsflow snapshot v1
//! # cells=4 fingerprint=0x5d2c1e0f9a3b7c41 iteration=1
//! cell,extensive,intensive
//! 0,0.2496,0.9984
//! ```
//!
//! Values are printed in shortest round-trip form, so reading a snapshot
//! recovers the exact bits.

use std::io::{BufRead, Write};

use super::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub fingerprint: u64,
    pub iteration: u64,
    pub extensive: Vec<f64>,
    pub intensive: Vec<f64>,
}

const MAGIC: &str = "# ltsflow snapshot v1";
const HEADER: &str = "cell,extensive,intensive";

impl Snapshot {
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "# cells={} fingerprint={:#018x} iteration={}", self.extensive.len(), self.fingerprint, self.iteration)?;
        writeln!(out, "{HEADER}")?;
        for (i, (e, w)) in self.extensive.iter().zip(&self.intensive).enumerate() {
            writeln!(out, "{i},{e},{w}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, CliError> {
        let bad = |m: String| CliError::Format(format!("snapshot: {m}"));
        let mut lines = input.lines();
        let mut next = || -> Result<String, CliError> { lines.next().ok_or_else(|| bad("truncated".into()))?.map_err(|e| CliError::Io(e.to_string())) };
        if next()? != MAGIC {
            return Err(bad("missing header".into()));
        }
        let meta = next()?;
        let mut cells = None;
        let mut fingerprint = None;
        let mut iteration = None;
        for kv in meta.trim_start_matches('#').split_whitespace() {
            match kv.split_once('=') {
                Some(("cells", v)) => cells = v.parse::<usize>().ok(),
                Some(("fingerprint", v)) => fingerprint = u64::from_str_radix(v.trim_start_matches("0x"), 16).ok(),
                Some(("iteration", v)) => iteration = v.parse::<u64>().ok(),
                _ => {}
            }
        }
        let (cells, fingerprint, iteration) = match (cells, fingerprint, iteration) {
            (Some(c), Some(f), Some(i)) => (c, f, i),
            _ => return Err(bad(format!("bad metadata line {meta:?}"))),
        };
        if next()? != HEADER {
            return Err(bad("missing column header".into()));
        }
        let mut extensive = Vec::with_capacity(cells);
        let mut intensive = Vec::with_capacity(cells);
        for i in 0..cells {
            let line = next()?;
            let f: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("row {i}: bad number {s:?}")));
            if f.len() != 3 || f[0].parse::<usize>().ok() != Some(i) {
                return Err(bad(format!("row {i}: {line:?}")));
            }
            extensive.push(parse(f[1])?);
            intensive.push(parse(f[2])?);
        }
        Ok(Self { fingerprint, iteration, extensive, intensive })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    pub max_rel_diff: f64,
    /// Cell where the maximum occurs.
    pub cell: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// |a − b| / max(|a|, |b|), zero when both vanish.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Largest per-cell relative difference of the extensive values.
pub fn compare(a: &Snapshot, b: &Snapshot, tolerance: f64) -> Result<Comparison, CliError> {
    if a.extensive.len() != b.extensive.len() || a.fingerprint != b.fingerprint {
        return Err(CliError::Format(format!(
            "snapshots are of different meshes ({} cells, {:#x} vs {} cells, {:#x})",
            a.extensive.len(),
            a.fingerprint,
            b.extensive.len(),
            b.fingerprint
        )));
    }
    let mut worst = (0.0, 0);
    for (i, (x, y)) in a.extensive.iter().zip(&b.extensive).enumerate() {
        let d = rel_diff(*x, *y);
        if d > worst.0 || d.is_nan() {
            worst = (if d.is_nan() { f64::INFINITY } else { d }, i);
        }
    }
    Ok(Comparison { max_rel_diff: worst.0, cell: worst.1, tolerance, pass: worst.0 <= tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(v: Vec<f64>) -> Snapshot {
        Snapshot { fingerprint: 0xabc, iteration: 3, intensive: v.iter().map(|x| x * 2.0).collect(), extensive: v }
    }

    #[test]
    fn round_trip_is_exact() {
        let s = snap(vec![0.1, 1.0 / 3.0, -2.5e-300, 0.0]);
        let mut buf = Vec::new();
        s.write(&mut buf).unwrap();
        assert_eq!(Snapshot::read(&buf[..]).unwrap(), s);
        assert!(Snapshot::read(&buf[..buf.len() - 10]).is_err());
    }

    #[test]
    fn identical_snapshots_differ_by_zero() {
        let s = snap(vec![1.0, 2.0, 0.0]);
        let c = compare(&s, &s, 0.0).unwrap();
        assert_eq!(c.max_rel_diff, 0.0);
        assert!(c.pass);
    }

    #[test]
    fn one_perturbed_cell() {
        let a = snap(vec![1.0, 2.0, 3.0]);
        let mut b = a.clone();
        b.extensive[1] *= 1.0 + 1e-6;
        let c = compare(&a, &b, 1e-12).unwrap();
        assert_eq!(c.cell, 1);
        assert!((c.max_rel_diff - 1e-6).abs() < 1e-8);
        assert!(!c.pass);
    }

    #[test]
    fn different_meshes_are_rejected() {
        let a = snap(vec![1.0, 2.0]);
        assert!(compare(&a, &snap(vec![1.0]), 1.0).is_err());
        let mut b = a.clone();
        b.fingerprint = 1;
        assert!(compare(&a, &b, 1.0).is_err());
    }
}
