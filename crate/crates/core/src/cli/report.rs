//! Summary tables from worker-state traces.
//!
//! Records are sorted before any summation, so totals do not depend on the
//! order of records in the input files.

use std::collections::BTreeMap;
use std::io::Write;

use crate::runtime::{TraceRecord, WorkerState};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WorkerTotals {
    pub worker: usize,
    pub executing: f64,
    pub sleeping: f64,
    /// Wall interval minus executing and sleeping time.
    pub overhead: f64,
    pub interval: f64,
    pub tasks: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceSummary {
    pub name: String,
    pub workers: Vec<WorkerTotals>,
    /// Sorted state records: (worker, state, t_start, t_end, kind, ce, subiteration).
    pub gantt: Vec<GanttRow>,
    pub ready: Vec<(f64, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanttRow {
    pub worker: usize,
    pub state: WorkerState,
    pub t_start: f64,
    pub t_end: f64,
    pub kind: Option<String>,
    pub ce: Option<u32>,
    pub subiteration: Option<u32>,
}

impl TraceSummary {
    pub fn total(&self, f: impl Fn(&WorkerTotals) -> f64) -> f64 {
        self.workers.iter().map(f).sum()
    }
}

pub fn summarize(name: &str, records: &[TraceRecord]) -> TraceSummary {
    let mut gantt = Vec::new();
    let mut ready = Vec::new();
    for r in records {
        match r {
            TraceRecord::State { worker, state, t_start, t_end, kind, ce, subiteration } => gantt.push(GanttRow {
                worker: *worker,
                state: *state,
                t_start: *t_start,
                t_end: *t_end,
                kind: kind.clone(),
                ce: *ce,
                subiteration: *subiteration,
            }),
            TraceRecord::Ready { t, ready: n } => ready.push((*t, *n)),
        }
    }
    gantt.sort_by(|a, b| {
        (a.worker, a.t_start, a.t_end, a.state)
            .partial_cmp(&(b.worker, b.t_start, b.t_end, b.state))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (&a.kind, a.ce, a.subiteration).cmp(&(&b.kind, b.ce, b.subiteration)))
    });
    ready.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut per: BTreeMap<usize, (WorkerTotals, f64, f64)> = BTreeMap::new();
    for g in &gantt {
        let e = per.entry(g.worker).or_insert((WorkerTotals { worker: g.worker, ..Default::default() }, f64::INFINITY, f64::NEG_INFINITY));
        let d = g.t_end - g.t_start;
        match g.state {
            WorkerState::Executing => {
                e.0.executing += d;
                e.0.tasks += 1;
            }
            WorkerState::Sleeping => e.0.sleeping += d,
        }
        e.1 = e.1.min(g.t_start);
        e.2 = e.2.max(g.t_end);
    }
    let workers = per
        .into_values()
        .map(|(mut w, lo, hi)| {
            w.interval = hi - lo;
            w.overhead = (w.interval - w.executing - w.sleeping).max(0.0);
            w
        })
        .collect();
    TraceSummary { name: name.to_string(), workers, gantt, ready }
}

pub const WORKERS_CSV_HEADER: &str = "trace,worker,executing_s,sleeping_s,overhead_s,interval_s,tasks";
pub const GANTT_CSV_HEADER: &str = "trace,worker,state,t_start,t_end,kind,ce,subiteration";
pub const READY_CSV_HEADER: &str = "trace,t,ready";
pub const COMPARISON_CSV_HEADER: &str = "trace,executing_s,sleeping_s,overhead_s,sleeping_delta_s,sleeping_delta_pct";

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_workers<W: Write>(out: &mut W, sums: &[TraceSummary]) -> std::io::Result<()> {
    writeln!(out, "{WORKERS_CSV_HEADER}")?;
    for s in sums {
        for w in &s.workers {
            writeln!(out, "{},{},{:.9},{:.9},{:.9},{:.9},{}", s.name, w.worker, w.executing, w.sleeping, w.overhead, w.interval, w.tasks)?;
        }
    }
    Ok(())
}

pub fn write_gantt<W: Write>(out: &mut W, sums: &[TraceSummary]) -> std::io::Result<()> {
    writeln!(out, "{GANTT_CSV_HEADER}")?;
    for s in sums {
        for g in &s.gantt {
            let state = match g.state {
                WorkerState::Executing => "executing",
                WorkerState::Sleeping => "sleeping",
            };
            writeln!(out, "{},{},{state},{:.9},{:.9},{},{},{}", s.name, g.worker, g.t_start, g.t_end, opt(&g.kind), opt(&g.ce), opt(&g.subiteration))?;
        }
    }
    Ok(())
}

pub fn write_ready<W: Write>(out: &mut W, sums: &[TraceSummary]) -> std::io::Result<()> {
    writeln!(out, "{READY_CSV_HEADER}")?;
    for s in sums {
        for (t, n) in &s.ready {
            writeln!(out, "{},{t:.9},{n}", s.name)?;
        }
    }
    Ok(())
}

/// One row per trace; the deltas are relative to the first trace.
pub fn write_comparison<W: Write>(out: &mut W, sums: &[TraceSummary]) -> std::io::Result<()> {
    writeln!(out, "{COMPARISON_CSV_HEADER}")?;
    let base = sums.first().map(|s| s.total(|w| w.sleeping));
    for s in sums {
        let sleeping = s.total(|w| w.sleeping);
        let b = base.unwrap_or(0.0);
        let pct = if b > 0.0 { 100.0 * (sleeping - b) / b } else { 0.0 };
        writeln!(
            out,
            "{},{:.9},{sleeping:.9},{:.9},{:.9},{pct:.3}",
            s.name,
            s.total(|w| w.executing),
            s.total(|w| w.overhead),
            sleeping - b
        )?;
    }
    Ok(())
}
