//! Communication tasks in the dependency graph and the trace of a
//! two-rank run.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use ltsflow::dist::{run_in_process, RankReport, SessionConfig, TransportKind};
use ltsflow::mesh::{generate_mesh, BoundaryKind, MeshSpec};
use ltsflow::numerics::{FluxModel, Physics};
use ltsflow::runtime::{RuntimeConfig, SchedulerKind, TaskTags, TraceRecord, WorkerState};
use ltsflow::taskgen::TaskGenConfig;

fn two_ranks(packing: bool, trace: bool) -> Vec<RankReport> {
    let spec = MeshSpec::square(8, BoundaryKind::Periodic).refine([0.0, 0.0], [0.5, 0.5], 2);
    let mesh = Arc::new(generate_mesh(&spec).unwrap());
    let initial: Vec<f64> = mesh.cells.iter().map(|c| 1.0 + c.centroid[0] * c.centroid[1]).collect();
    let mut runtime = RuntimeConfig::new(vec![1, 1], SchedulerKind::Prio);
    runtime.record_edges = true;
    runtime.trace = trace;
    runtime.available_lanes = 4;
    let cfg = SessionConfig {
        physics: Physics::new(FluxModel::Advection { velocity: [1.0, 0.5] }, 1.0),
        taskgen: TaskGenConfig { packing, ..TaskGenConfig::default() },
        runtime,
        ces_per_rank: 4,
        iterations: 1,
        repartition_every: None,
        comm_timeout: Duration::from_secs(60),
    };
    run_in_process(mesh, &initial, &cfg, 2, TransportKind::Loopback).unwrap()
}

fn is_comm(t: &TaskTags) -> bool {
    t.kind.starts_with("comm_")
}

/// Every unpack feeds a compute task of its CE directly, or through the
/// next unpack of the same ghost component (exchanges refresh only the
/// slots of active levels), or nothing at all when no later step reads
/// its slots. Every subiteration that exchanges has ghost readers.
#[test]
fn ghost_reads_depend_on_unpack() {
    for packing in [false, true] {
        for r in two_ranks(packing, false) {
            let tags: HashMap<u64, TaskTags> = r.task_tags.iter().copied().collect();
            let unpacks: Vec<u64> = r.task_tags.iter().filter(|t| t.1.kind == "comm_unpack").map(|t| t.0).collect();
            assert!(!unpacks.is_empty(), "rank {} has no unpack tasks", r.rank);
            let mut read_in: HashMap<Option<u32>, bool> = HashMap::new();
            for u in unpacks {
                let tu = tags[&u];
                assert!(r.edges.iter().any(|e| e.1 == u && tags[&e.0].kind == "comm_recv"), "unpack {tu:?} without receive");
                let succ: Vec<TaskTags> = r.edges.iter().filter(|e| e.0 == u).map(|e| tags[&e.1]).collect();
                let read = succ.iter().any(|t| !is_comm(t) && t.ce == tu.ce);
                let superseded = succ.iter().any(|t| t.kind == "comm_unpack" && t.ce == tu.ce && t.subiteration >= tu.subiteration);
                assert!(read || superseded || succ.is_empty(), "rank {} unpack {tu:?} feeds nothing: {succ:?}", r.rank);
                *read_in.entry(tu.subiteration).or_default() |= read;
            }
            assert!(read_in.values().all(|&b| b), "rank {} subiteration without ghost readers: {read_in:?}", r.rank);
        }
    }
}

#[test]
fn sends_wait_only_on_communication_tasks() {
    for r in two_ranks(true, false) {
        let tags: HashMap<u64, TaskTags> = r.task_tags.iter().copied().collect();
        for &(id, t) in r.task_tags.iter().filter(|t| t.1.kind == "comm_send") {
            let preds: Vec<TaskTags> = r.edges.iter().filter(|e| e.1 == id).map(|e| tags[&e.0]).collect();
            assert!(preds.iter().any(|p| p.kind == "comm_pack" && p.ce == t.ce), "send {t:?} has no pack predecessor");
            assert!(preds.iter().all(is_comm), "send {t:?} waits on compute: {preds:?}");
        }
    }
}

#[test]
fn sends_start_after_their_pack_in_the_trace() {
    for r in two_ranks(true, true) {
        let mut packs: HashMap<(Option<u32>, Option<u32>), Vec<f64>> = HashMap::new();
        let mut sends = Vec::new();
        for rec in &r.trace {
            if let TraceRecord::State { state: WorkerState::Executing, kind: Some(k), ce, subiteration, t_start, t_end, .. } = rec {
                match k.as_str() {
                    "comm_pack" => packs.entry((*ce, *subiteration)).or_default().push(*t_end),
                    "comm_send" => sends.push(((*ce, *subiteration), *t_start)),
                    _ => {}
                }
            }
        }
        assert!(!sends.is_empty());
        for (key, start) in sends {
            let ends = &packs[&key];
            assert!(ends.iter().any(|&e| e <= start), "send {key:?} at {start} precedes every pack");
        }
    }
}
