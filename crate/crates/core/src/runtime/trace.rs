//! Worker-state trace, one JSON object per line.
//!
//! ```text
//! {"type":"state","worker":0,"state":"executing","t_start":0.0012,"t_end":0.0015,"kind":"inner","ce":3,"subiteration":2}
//! {"type":"state","worker":1,"state":"sleeping","t_start":0.0,"t_end":0.0009,"kind":null,"ce":null,"subiteration":null}
//! {"type":"ready","t":0.001,"ready":17}
//! ```
//!
//! Times are seconds since runtime start. Fields always appear in the order
//! shown.

use std::io::{self, BufRead, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerState {
    Executing,
    Sleeping,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    State {
        worker: usize,
        state: WorkerState,
        t_start: f64,
        t_end: f64,
        kind: Option<String>,
        ce: Option<u32>,
        subiteration: Option<u32>,
    },
    Ready {
        t: f64,
        ready: usize,
    },
}

pub fn write_trace<W: Write>(out: &mut W, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> io::Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("trace line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Accumulated worker times over a measurement window.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WorkerProfile {
    pub worker: usize,
    pub lanes: usize,
    pub interval: Duration,
    pub executing: Duration,
    pub sleeping: Duration,
    pub overhead: Duration,
    pub tasks: u64,
}

impl WorkerProfile {
    /// |executing + sleeping + overhead − interval| / interval.
    pub fn identity_error(&self) -> f64 {
        let sum = (self.executing + self.sleeping + self.overhead).as_secs_f64();
        let iv = self.interval.as_secs_f64();
        if iv == 0.0 {
            0.0
        } else {
            (sum - iv).abs() / iv
        }
    }
}
