//! Sequential-task-flow runtime.
//!
//! Tasks are inserted in program order together with the data handles they
//! access. Dependencies follow from the access log of each handle: a read
//! waits for the last writer, a write waits for the last writer and every
//! reader since. Ready tasks go to a scheduler and are run by worker
//! threads; a worker may drive several lanes, in which case a task can split
//! its index range across them with [`ExecCtx::for_chunks`].

mod sched;
mod trace;

pub use sched::{Scheduler, SchedulerKind};
pub use trace::{read_trace, write_trace, TraceRecord, WorkerProfile, WorkerState};

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex, MutexGuard};
use rayon::prelude::*;
use thiserror::Error;

pub type TaskId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HandleId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Access {
    Read,
    Write,
    ReadWrite,
}

impl Access {
    pub fn writes(self) -> bool {
        !matches!(self, Access::Read)
    }

    pub fn merge(self, other: Access) -> Access {
        match (self, other) {
            (Access::Read, Access::Read) => Access::Read,
            (Access::Write, Access::Write) => Access::Write,
            _ => Access::ReadWrite,
        }
    }
}

/// Labels carried into the trace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TaskTags {
    pub kind: &'static str,
    pub ce: Option<u32>,
    pub subiteration: Option<u32>,
}

pub type TaskFailure = Box<dyn std::error::Error + Send + Sync>;
pub type TaskResult = Result<(), TaskFailure>;

type InlineFn = Box<dyn FnOnce(&ExecCtx<'_>) -> TaskResult + Send>;
type DetachedFn = Box<dyn FnOnce(Completion) + Send>;

pub enum TaskBody {
    /// Runs to completion on the worker.
    Inline(InlineFn),
    /// Starts an operation and returns; the task completes when the
    /// [`Completion`] is signalled, possibly from another thread.
    Detached(DetachedFn),
}

pub struct TaskDesc {
    pub accesses: Vec<(HandleId, Access)>,
    pub priority: u32,
    pub tags: TaskTags,
    pub body: TaskBody,
}

impl TaskDesc {
    pub fn inline(
        tags: TaskTags,
        priority: u32,
        accesses: Vec<(HandleId, Access)>,
        f: impl FnOnce(&ExecCtx<'_>) -> TaskResult + Send + 'static,
    ) -> Self {
        Self { accesses, priority, tags, body: TaskBody::Inline(Box::new(f)) }
    }

    pub fn detached(
        tags: TaskTags,
        priority: u32,
        accesses: Vec<(HandleId, Access)>,
        f: impl FnOnce(Completion) + Send + 'static,
    ) -> Self {
        Self { accesses, priority, tags, body: TaskBody::Detached(Box::new(f)) }
    }
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("handle {0:?} is not registered")]
    UnknownHandle(HandleId),
    #[error("runtime is shut down")]
    ShutDown,
    #[error("worker {0} has zero lanes")]
    ZeroLanes(usize),
    #[error("no workers configured")]
    NoWorkers,
    #[error("{requested} lanes requested but only {available} available")]
    TooManyLanes { requested: usize, available: usize },
    #[error("wait_all while paused with {0} pending tasks")]
    PausedWithPending(usize),
    #[error("task {task} ({kind}, ce {ce:?}) failed: {message}")]
    Task { task: TaskId, kind: &'static str, ce: Option<u32>, message: String },
    #[error("could not start worker lanes: {0}")]
    Pool(String),
}

#[derive(Clone, Debug)]
pub struct RuntimeConfig {
    /// Lane count of each worker.
    pub workers: Vec<usize>,
    pub scheduler: SchedulerKind,
    /// Upper bound on the total lane count.
    pub available_lanes: usize,
    /// Ready-count sampling period; `None` disables the probe.
    pub probe_period: Option<Duration>,
    pub trace: bool,
    /// Keep every dependency edge for inspection.
    pub record_edges: bool,
}

impl RuntimeConfig {
    pub fn new(workers: Vec<usize>, scheduler: SchedulerKind) -> Self {
        Self {
            workers,
            scheduler,
            available_lanes: default_available_lanes(),
            probe_period: None,
            trace: false,
            record_edges: false,
        }
    }
}

/// Lanes are threads, so oversubscribing a small machine is allowed up to
/// a fixed floor.
pub fn default_available_lanes() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).max(64)
}

/// Per-execution view a task body gets of its worker.
pub struct ExecCtx<'a> {
    pub worker: usize,
    pub lanes: usize,
    pool: Option<&'a rayon::ThreadPool>,
}

impl ExecCtx<'_> {
    /// A context with one lane, for running task bodies outside a runtime.
    pub fn sequential() -> ExecCtx<'static> {
        ExecCtx { worker: 0, lanes: 1, pool: None }
    }

    /// Calls `f` on contiguous chunks of `0..n`, one per lane, and joins.
    pub fn for_chunks<F>(&self, n: usize, f: F) -> TaskResult
    where
        F: Fn(Range<usize>) -> TaskResult + Sync,
    {
        let k = self.lanes.min(n);
        match self.pool {
            Some(pool) if k > 1 => {
                let ranges = chunk_ranges(n, k);
                pool.install(|| ranges.into_par_iter().try_for_each(&f))
            }
            _ => f(0..n),
        }
    }
}

/// `k` contiguous ranges covering `0..n`, sizes differing by at most one.
pub fn chunk_ranges(n: usize, k: usize) -> Vec<Range<usize>> {
    let k = k.max(1);
    let (q, r) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = q + usize::from(i < r);
            let rg = start..start + len;
            start += len;
            rg
        })
        .collect()
}

#[derive(Default)]
struct HandleState {
    last_writer: Option<TaskId>,
    readers_since_write: Vec<TaskId>,
}

struct Node {
    succs: Vec<TaskId>,
    unsatisfied: usize,
    body: Option<TaskBody>,
    priority: u32,
    tags: TaskTags,
}

#[derive(Default)]
struct WorkerStats {
    executing: Duration,
    sleeping: Duration,
    exec_since: Option<Instant>,
    sleep_since: Option<Instant>,
    tasks: u64,
}

struct Core {
    next_task: TaskId,
    nodes: HashMap<TaskId, Node>,
    handles: Vec<HandleState>,
    sched: Scheduler,
    pending: usize,
    paused: bool,
    shutdown: bool,
    error: Option<RuntimeError>,
    edges: Option<Vec<(TaskId, TaskId)>>,
    tags: Option<Vec<(TaskId, TaskTags)>>,
    stats: Vec<WorkerStats>,
    trace: Option<Vec<TraceRecord>>,
    ready_samples: Vec<(f64, usize)>,
    window_start: Instant,
    inserted: u64,
}

struct Shared {
    core: Mutex<Core>,
    work: Condvar,
    done: Condvar,
    epoch: Instant,
}

impl Shared {
    fn secs(&self, t: Instant) -> f64 {
        t.duration_since(self.epoch).as_secs_f64()
    }

    fn complete(&self, core: &mut Core, id: TaskId, result: TaskResult) {
        let Some(node) = core.nodes.remove(&id) else { return };
        if let Err(e) = result {
            if core.error.is_none() {
                core.error = Some(RuntimeError::Task {
                    task: id,
                    kind: node.tags.kind,
                    ce: node.tags.ce,
                    message: e.to_string(),
                });
            }
        }
        for s in node.succs {
            let n = core.nodes.get_mut(&s).expect("successor is pending");
            n.unsatisfied -= 1;
            if n.unsatisfied == 0 {
                core.sched.push(s, n.priority);
                self.work.notify_one();
            }
        }
        core.pending -= 1;
        if core.pending == 0 {
            self.done.notify_all();
        }
    }
}

/// Signals the end of a detached task. Dropping it unsignalled completes
/// the task with an error.
pub struct Completion {
    shared: Arc<Shared>,
    task: TaskId,
    done: bool,
}

impl Completion {
    pub fn task(&self) -> TaskId {
        self.task
    }

    pub fn complete(mut self, result: TaskResult) {
        self.done = true;
        let mut core = self.shared.core.lock();
        self.shared.complete(&mut core, self.task, result);
    }
}

impl Drop for Completion {
    fn drop(&mut self) {
        if !self.done {
            let mut core = self.shared.core.lock();
            self.shared.complete(&mut core, self.task, Err("detached task dropped without completing".into()));
        }
    }
}

pub struct Runtime {
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
    lanes: Vec<usize>,
}

impl Runtime {
    pub fn new(config: RuntimeConfig) -> Result<Self, RuntimeError> {
        if config.workers.is_empty() {
            return Err(RuntimeError::NoWorkers);
        }
        if let Some(w) = config.workers.iter().position(|&k| k == 0) {
            return Err(RuntimeError::ZeroLanes(w));
        }
        let requested: usize = config.workers.iter().sum();
        if requested > config.available_lanes {
            return Err(RuntimeError::TooManyLanes { requested, available: config.available_lanes });
        }
        let epoch = Instant::now();
        let shared = Arc::new(Shared {
            core: Mutex::new(Core {
                next_task: 0,
                nodes: HashMap::new(),
                handles: Vec::new(),
                sched: Scheduler::new(config.scheduler),
                pending: 0,
                paused: false,
                shutdown: false,
                error: None,
                edges: config.record_edges.then(Vec::new),
                tags: config.record_edges.then(Vec::new),
                stats: config.workers.iter().map(|_| WorkerStats::default()).collect(),
                trace: config.trace.then(Vec::new),
                ready_samples: Vec::new(),
                window_start: epoch,
                inserted: 0,
            }),
            work: Condvar::new(),
            done: Condvar::new(),
            epoch,
        });
        let mut threads = Vec::new();
        for (w, &k) in config.workers.iter().enumerate() {
            let pool = if k > 1 {
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(k)
                        .thread_name(move |i| format!("worker{w}-lane{i}"))
                        .build()
                        .map_err(|e| RuntimeError::Pool(e.to_string()))?,
                )
            } else {
                None
            };
            let sh = Arc::clone(&shared);
            threads.push(
                std::thread::Builder::new()
                    .name(format!("worker{w}"))
                    .spawn(move || worker_loop(sh, w, k, pool))
                    .map_err(|e| RuntimeError::Pool(e.to_string()))?,
            );
        }
        if let Some(period) = config.probe_period {
            let sh = Arc::clone(&shared);
            threads.push(
                std::thread::Builder::new()
                    .name("ready-probe".into())
                    .spawn(move || probe_loop(sh, period))
                    .map_err(|e| RuntimeError::Pool(e.to_string()))?,
            );
        }
        Ok(Self { shared, threads, lanes: config.workers })
    }

    pub fn n_workers(&self) -> usize {
        self.lanes.len()
    }

    pub fn lanes(&self) -> &[usize] {
        &self.lanes
    }

    pub fn scheduler(&self) -> SchedulerKind {
        self.shared.core.lock().sched.kind()
    }

    pub fn register_handle(&self) -> HandleId {
        let mut core = self.shared.core.lock();
        core.handles.push(HandleState::default());
        HandleId(core.handles.len() as u32 - 1)
    }

    pub fn register_handles(&self, n: usize) -> Vec<HandleId> {
        let mut core = self.shared.core.lock();
        let base = core.handles.len();
        core.handles.extend((0..n).map(|_| HandleState::default()));
        (base..base + n).map(|h| HandleId(h as u32)).collect()
    }

    pub fn insert(&self, task: TaskDesc) -> Result<TaskId, RuntimeError> {
        let mut accesses: Vec<(HandleId, Access)> = Vec::with_capacity(task.accesses.len());
        for (h, a) in task.accesses {
            match accesses.iter_mut().find(|(x, _)| *x == h) {
                Some(e) => e.1 = e.1.merge(a),
                None => accesses.push((h, a)),
            }
        }
        let mut guard = self.shared.core.lock();
        let core = &mut *guard;
        if core.shutdown {
            return Err(RuntimeError::ShutDown);
        }
        if let Some(&(h, _)) = accesses.iter().find(|(h, _)| h.0 as usize >= core.handles.len()) {
            return Err(RuntimeError::UnknownHandle(h));
        }
        let id = core.next_task;
        core.next_task += 1;
        let mut preds: Vec<TaskId> = Vec::new();
        for &(h, a) in &accesses {
            let hs = &mut core.handles[h.0 as usize];
            if a.writes() {
                preds.append(&mut hs.readers_since_write);
                preds.extend(hs.last_writer);
                hs.last_writer = Some(id);
            } else {
                preds.extend(hs.last_writer);
                hs.readers_since_write.push(id);
            }
        }
        preds.sort_unstable();
        preds.dedup();
        if let Some(edges) = core.edges.as_mut() {
            edges.extend(preds.iter().map(|&p| (p, id)));
        }
        if let Some(tags) = core.tags.as_mut() {
            tags.push((id, task.tags));
        }
        let mut unsatisfied = 0;
        for p in preds {
            if let Some(n) = core.nodes.get_mut(&p) {
                n.succs.push(id);
                unsatisfied += 1;
            }
        }
        core.nodes.insert(
            id,
            Node { succs: Vec::new(), unsatisfied, body: Some(task.body), priority: task.priority, tags: task.tags },
        );
        core.pending += 1;
        core.inserted += 1;
        if unsatisfied == 0 {
            core.sched.push(id, task.priority);
            self.shared.work.notify_one();
        }
        Ok(id)
    }

    /// Blocks until every inserted task has completed. Returns the first
    /// task failure since the previous call.
    pub fn wait_all(&self) -> Result<(), RuntimeError> {
        let mut core = self.shared.core.lock();
        if core.paused && core.pending > 0 {
            return Err(RuntimeError::PausedWithPending(core.pending));
        }
        while core.pending > 0 {
            self.shared.done.wait(&mut core);
        }
        for h in core.handles.iter_mut() {
            *h = HandleState::default();
        }
        let t = self.shared.secs(Instant::now());
        let ready = core.sched.len();
        core.ready_samples.push((t, ready));
        if let Some(tr) = core.trace.as_mut() {
            tr.push(TraceRecord::Ready { t, ready });
        }
        match core.error.take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    pub fn pause(&self) {
        self.shared.core.lock().paused = true;
    }

    pub fn resume(&self) {
        self.shared.core.lock().paused = false;
        self.shared.work.notify_all();
    }

    pub fn ready_count(&self) -> usize {
        self.shared.core.lock().sched.len()
    }

    pub fn inserted_tasks(&self) -> u64 {
        self.shared.core.lock().inserted
    }

    /// Starts a new profiling window.
    pub fn reset_profiles(&self) {
        let mut core = self.shared.core.lock();
        let now = Instant::now();
        core.window_start = now;
        for s in core.stats.iter_mut() {
            s.executing = Duration::ZERO;
            s.sleeping = Duration::ZERO;
            s.tasks = 0;
            if s.exec_since.is_some() {
                s.exec_since = Some(now);
            }
            if s.sleep_since.is_some() {
                s.sleep_since = Some(now);
            }
        }
    }

    /// Profiles of every worker over the current window, up to now.
    pub fn profiles(&self) -> Vec<WorkerProfile> {
        let core = self.shared.core.lock();
        let now = Instant::now();
        let interval = now.duration_since(core.window_start);
        core.stats
            .iter()
            .enumerate()
            .map(|(w, s)| {
                let executing = s.executing + s.exec_since.map_or(Duration::ZERO, |t| now.duration_since(t));
                let sleeping = s.sleeping + s.sleep_since.map_or(Duration::ZERO, |t| now.duration_since(t));
                WorkerProfile {
                    worker: w,
                    lanes: self.lanes[w],
                    interval,
                    executing,
                    sleeping,
                    overhead: interval.saturating_sub(executing + sleeping),
                    tasks: s.tasks,
                }
            })
            .collect()
    }

    pub fn profile(&self, worker: usize) -> Option<WorkerProfile> {
        self.profiles().into_iter().nth(worker)
    }

    pub fn take_ready_samples(&self) -> Vec<(f64, usize)> {
        std::mem::take(&mut self.shared.core.lock().ready_samples)
    }

    /// Trace records collected so far (empty unless tracing is enabled).
    pub fn take_trace(&self) -> Vec<TraceRecord> {
        self.shared.core.lock().trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn take_edges(&self) -> Vec<(TaskId, TaskId)> {
        self.shared.core.lock().edges.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Tags of every inserted task, recorded along with the edges.
    pub fn take_task_tags(&self) -> Vec<(TaskId, TaskTags)> {
        self.shared.core.lock().tags.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Seconds since the runtime started, on the trace clock.
    pub fn now(&self) -> f64 {
        self.shared.secs(Instant::now())
    }
}

impl Drop for Runtime {
    fn drop(&mut self) {
        self.shared.core.lock().shutdown = true;
        self.shared.work.notify_all();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

fn worker_loop(shared: Arc<Shared>, w: usize, lanes: usize, pool: Option<rayon::ThreadPool>) {
    let mut core = shared.core.lock();
    loop {
        if core.shutdown {
            break;
        }
        if !core.paused {
            if let Some(id) = core.sched.pop() {
                run_task(&shared, &mut core, w, lanes, pool.as_ref(), id);
                continue;
            }
        }
        let t0 = Instant::now();
        core.stats[w].sleep_since = Some(t0);
        shared.work.wait(&mut core);
        let t1 = Instant::now();
        let since = core.stats[w].sleep_since.take().unwrap_or(t0);
        core.stats[w].sleeping += t1.duration_since(since);
        if let Some(tr) = core.trace.as_mut() {
            tr.push(TraceRecord::State {
                worker: w,
                state: WorkerState::Sleeping,
                t_start: shared.secs(t0),
                t_end: shared.secs(t1),
                kind: None,
                ce: None,
                subiteration: None,
            });
        }
    }
}

fn run_task(
    shared: &Arc<Shared>,
    core: &mut MutexGuard<'_, Core>,
    w: usize,
    lanes: usize,
    pool: Option<&rayon::ThreadPool>,
    id: TaskId,
) {
    let node = core.nodes.get_mut(&id).expect("ready task is pending");
    let body = node.body.take().expect("task runs once");
    let tags = node.tags;
    let poisoned = core.error.is_some();
    let t0 = Instant::now();
    core.stats[w].exec_since = Some(t0);
    let inline_result = MutexGuard::unlocked(core, || match body {
        TaskBody::Inline(f) => {
            if poisoned {
                Some(Ok(()))
            } else {
                let ctx = ExecCtx { worker: w, lanes, pool };
                Some(std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f(&ctx))).unwrap_or_else(|p| {
                    let msg = p
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "panic".into());
                    Err(format!("panicked: {msg}").into())
                }))
            }
        }
        TaskBody::Detached(f) => {
            let c = Completion { shared: Arc::clone(shared), task: id, done: false };
            if poisoned {
                c.complete(Ok(()));
            } else {
                f(c);
            }
            None
        }
    });
    let t1 = Instant::now();
    let since = core.stats[w].exec_since.take().unwrap_or(t0);
    core.stats[w].executing += t1.duration_since(since);
    core.stats[w].tasks += 1;
    if let Some(tr) = core.trace.as_mut() {
        tr.push(TraceRecord::State {
            worker: w,
            state: WorkerState::Executing,
            t_start: shared.secs(t0),
            t_end: shared.secs(t1),
            kind: Some(tags.kind.to_string()),
            ce: tags.ce,
            subiteration: tags.subiteration,
        });
    }
    if let Some(result) = inline_result {
        shared.complete(core, id, result);
    }
}

fn probe_loop(shared: Arc<Shared>, period: Duration) {
    loop {
        std::thread::sleep(period);
        let mut core = shared.core.lock();
        if core.shutdown {
            break;
        }
        if core.pending == 0 {
            continue;
        }
        let t = shared.secs(Instant::now());
        let ready = core.sched.len();
        core.ready_samples.push((t, ready));
        if let Some(tr) = core.trace.as_mut() {
            tr.push(TraceRecord::Ready { t, ready });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn rt(workers: Vec<usize>, kind: SchedulerKind) -> Runtime {
        let mut cfg = RuntimeConfig::new(workers, kind);
        cfg.record_edges = true;
        Runtime::new(cfg).unwrap()
    }

    fn noop(accesses: Vec<(HandleId, Access)>) -> TaskDesc {
        TaskDesc::inline(TaskTags::default(), 0, accesses, |_| Ok(()))
    }

    #[test]
    fn dependency_edges() {
        let r = rt(vec![1], SchedulerKind::Prio);
        r.pause();
        let h = r.register_handle();
        let t1 = r.insert(noop(vec![(h, Access::Write)])).unwrap();
        let t2 = r.insert(noop(vec![(h, Access::Read)])).unwrap();
        let t3 = r.insert(noop(vec![(h, Access::Read)])).unwrap();
        let t4 = r.insert(noop(vec![(h, Access::Write)])).unwrap();
        let t5 = r.insert(noop(vec![(h, Access::Write)])).unwrap();
        r.resume();
        r.wait_all().unwrap();
        let e = r.take_edges();
        assert!(e.contains(&(t1, t2)) && e.contains(&(t1, t3)));
        assert!(e.contains(&(t2, t4)) && e.contains(&(t3, t4)));
        assert!(e.contains(&(t4, t5)));
        assert!(!e.contains(&(t1, t5)));
        assert_eq!(r.take_task_tags().iter().map(|t| t.0).collect::<Vec<_>>(), vec![t1, t2, t3, t4, t5]);

        let g = r.register_handle();
        let a = r.insert(noop(vec![(g, Access::Write)])).unwrap();
        let b = r.insert(noop(vec![(g, Access::Write)])).unwrap();
        r.wait_all().unwrap();
        assert_eq!(r.take_edges(), vec![(a, b)]);
    }

    #[test]
    fn unknown_handle_and_bad_configs() {
        let r = rt(vec![1], SchedulerKind::Fifo);
        assert!(matches!(r.insert(noop(vec![(HandleId(7), Access::Read)])), Err(RuntimeError::UnknownHandle(_))));
        assert!(matches!(Runtime::new(RuntimeConfig::new(vec![2, 0], SchedulerKind::Fifo)), Err(RuntimeError::ZeroLanes(1))));
        assert!(matches!(Runtime::new(RuntimeConfig::new(vec![], SchedulerKind::Fifo)), Err(RuntimeError::NoWorkers)));
        let mut cfg = RuntimeConfig::new(vec![4, 4], SchedulerKind::Fifo);
        cfg.available_lanes = 6;
        assert!(matches!(Runtime::new(cfg), Err(RuntimeError::TooManyLanes { .. })));
    }

    #[test]
    fn priority_order_on_one_worker() {
        let r = rt(vec![1], SchedulerKind::Prio);
        let order = Arc::new(Mutex::new(Vec::new()));
        r.pause();
        for (name, p) in [("b", 0), ("c", 0), ("a", 2)] {
            let o = Arc::clone(&order);
            r.insert(TaskDesc::inline(TaskTags::default(), p, vec![], move |_| {
                o.lock().push(name);
                Ok(())
            }))
            .unwrap();
        }
        r.resume();
        r.wait_all().unwrap();
        assert_eq!(*order.lock(), vec!["a", "b", "c"]);
    }

    #[test]
    fn paused_runtime_runs_nothing() {
        let r = rt(vec![1, 1], SchedulerKind::Fifo);
        let n = Arc::new(AtomicUsize::new(0));
        r.pause();
        for _ in 0..4 {
            let n = Arc::clone(&n);
            r.insert(TaskDesc::inline(TaskTags::default(), 0, vec![], move |_| {
                n.fetch_add(1, Ordering::SeqCst);
                Ok(())
            }))
            .unwrap();
        }
        std::thread::sleep(Duration::from_millis(20));
        assert_eq!(n.load(Ordering::SeqCst), 0);
        assert!(matches!(r.wait_all(), Err(RuntimeError::PausedWithPending(4))));
        r.resume();
        r.wait_all().unwrap();
        assert_eq!(n.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn racing_workers_run_a_task_once() {
        for _ in 0..20 {
            let r = rt(vec![1, 1, 1], SchedulerKind::Prio);
            let n = Arc::new(AtomicUsize::new(0));
            let m = Arc::clone(&n);
            r.insert(TaskDesc::inline(TaskTags::default(), 0, vec![], move |_| {
                m.fetch_add(1, Ordering::SeqCst);
                Ok(())
            }))
            .unwrap();
            r.wait_all().unwrap();
            assert_eq!(n.load(Ordering::SeqCst), 1);
        }
    }

    #[test]
    fn failure_poisons_later_tasks_and_is_reported_once() {
        let r = rt(vec![1], SchedulerKind::Fifo);
        let h = r.register_handle();
        let ran = Arc::new(AtomicUsize::new(0));
        r.insert(TaskDesc::inline(TaskTags { kind: "bad", ce: Some(3), subiteration: None }, 0, vec![(h, Access::Write)], |_| {
            Err("boom".into())
        }))
        .unwrap();
        let ran2 = Arc::clone(&ran);
        r.insert(TaskDesc::inline(TaskTags::default(), 0, vec![(h, Access::Read)], move |_| {
            ran2.fetch_add(1, Ordering::SeqCst);
            Ok(())
        }))
        .unwrap();
        let err = r.wait_all().unwrap_err();
        assert!(matches!(err, RuntimeError::Task { kind: "bad", ce: Some(3), .. }));
        assert_eq!(ran.load(Ordering::SeqCst), 0);
        r.wait_all().unwrap();
    }

    #[test]
    fn panicking_task_becomes_an_error() {
        let r = rt(vec![1], SchedulerKind::Fifo);
        r.insert(TaskDesc::inline(TaskTags::default(), 0, vec![], |_| panic!("kaput"))).unwrap();
        let err = r.wait_all().unwrap_err().to_string();
        assert!(err.contains("kaput"), "{err}");
    }

    #[test]
    fn detached_task_releases_successors_on_completion() {
        let r = rt(vec![1], SchedulerKind::Fifo);
        let h = r.register_handle();
        let (tx, rx) = crossbeam_channel::unbounded::<Completion>();
        r.insert(TaskDesc::detached(TaskTags::default(), 0, vec![(h, Access::Write)], move |c| tx.send(c).unwrap()))
            .unwrap();
        let after = Arc::new(AtomicUsize::new(0));
        let a2 = Arc::clone(&after);
        r.insert(TaskDesc::inline(TaskTags::default(), 0, vec![(h, Access::Read)], move |_| {
            a2.fetch_add(1, Ordering::SeqCst);
            Ok(())
        }))
        .unwrap();
        let c = rx.recv().unwrap();
        std::thread::sleep(Duration::from_millis(10));
        assert_eq!(after.load(Ordering::SeqCst), 0);
        let completer = std::thread::spawn(move || c.complete(Ok(())));
        r.wait_all().unwrap();
        completer.join().unwrap();
        assert_eq!(after.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn parallel_worker_splits_contiguously() {
        assert_eq!(chunk_ranges(10, 4), vec![0..3, 3..6, 6..8, 8..10]);
        assert_eq!(chunk_ranges(2, 4), vec![0..1, 1..2, 2..2, 2..2]);
        let r = rt(vec![4], SchedulerKind::Fifo);
        let seen = Arc::new(Mutex::new(Vec::new()));
        let s2 = Arc::clone(&seen);
        r.insert(TaskDesc::inline(TaskTags::default(), 0, vec![], move |ctx| {
            assert_eq!(ctx.lanes, 4);
            ctx.for_chunks(10, |rg| {
                s2.lock().push(rg);
                Ok(())
            })
        }))
        .unwrap();
        r.wait_all().unwrap();
        let mut v = seen.lock().clone();
        v.sort_by_key(|r| r.start);
        assert_eq!(v, chunk_ranges(10, 4));
    }

    #[test]
    fn profiles_account_for_the_whole_interval() {
        let r = rt(vec![1, 1], SchedulerKind::Prio);
        r.reset_profiles();
        std::thread::sleep(Duration::from_millis(30));
        let idle = r.profiles();
        for p in &idle {
            assert!(p.sleeping.as_secs_f64() > 0.9 * p.interval.as_secs_f64(), "{p:?}");
            assert!(p.identity_error() < 0.01);
        }
        r.reset_profiles();
        r.insert(TaskDesc::inline(TaskTags::default(), 0, vec![], |_| {
            std::thread::sleep(Duration::from_millis(40));
            Ok(())
        }))
        .unwrap();
        r.wait_all().unwrap();
        let ps = r.profiles();
        let busy: Duration = ps.iter().map(|p| p.executing).sum();
        assert!(busy >= Duration::from_millis(40) && busy < Duration::from_millis(80), "{busy:?}");
        for p in &ps {
            assert!(p.identity_error() < 0.01);
        }
    }

    #[test]
    fn ready_probe_drains_to_zero() {
        let mut cfg = RuntimeConfig::new(vec![1], SchedulerKind::Prio);
        cfg.probe_period = Some(Duration::from_millis(1));
        cfg.trace = true;
        let r = Runtime::new(cfg).unwrap();
        for _ in 0..30 {
            r.insert(TaskDesc::inline(TaskTags { kind: "spin", ce: Some(0), subiteration: Some(1) }, 0, vec![], |_| {
                std::thread::sleep(Duration::from_micros(500));
                Ok(())
            }))
            .unwrap();
        }
        r.wait_all().unwrap();
        let samples = r.take_ready_samples();
        assert!(samples.len() >= 2);
        assert_eq!(samples.last().unwrap().1, 0);
        assert!(samples.iter().any(|s| s.1 > 0));
        let trace = r.take_trace();
        let executed =
            trace.iter().filter(|t| matches!(t, TraceRecord::State { state: WorkerState::Executing, .. })).count();
        assert_eq!(executed, 30);
    }

    /// Random access logs: every task folds the handles it reads into the
    /// handles it writes. Any schedule must reproduce in-order execution.
    fn run_log(log: &[(Vec<usize>, Vec<usize>)], n_handles: usize, workers: Vec<usize>, kind: SchedulerKind) -> Vec<u64> {
        let r = rt(workers, kind);
        let hs = r.register_handles(n_handles);
        let data: Arc<Vec<Mutex<u64>>> = Arc::new((0..n_handles).map(|i| Mutex::new(i as u64)).collect());
        for (t, (reads, writes)) in log.iter().enumerate() {
            let mut acc: Vec<(HandleId, Access)> = reads.iter().map(|&h| (hs[h], Access::Read)).collect();
            acc.extend(writes.iter().map(|&h| (hs[h], Access::ReadWrite)));
            let (reads, writes, d) = (reads.clone(), writes.clone(), Arc::clone(&data));
            r.insert(TaskDesc::inline(TaskTags::default(), (t % 3) as u32, acc, move |_| {
                let mut s = t as u64;
                for &h in &reads {
                    s = s.wrapping_mul(31).wrapping_add(*d[h].lock());
                }
                for &h in &writes {
                    let mut v = d[h].lock();
                    *v = v.wrapping_mul(17).wrapping_add(s);
                }
                Ok(())
            }))
            .unwrap();
        }
        r.wait_all().unwrap();
        data.iter().map(|m| *m.lock()).collect()
    }

    fn sequential(log: &[(Vec<usize>, Vec<usize>)], n_handles: usize) -> Vec<u64> {
        let mut d: Vec<u64> = (0..n_handles as u64).collect();
        for (t, (reads, writes)) in log.iter().enumerate() {
            let mut s = t as u64;
            for &h in reads {
                s = s.wrapping_mul(31).wrapping_add(d[h]);
            }
            for &h in writes {
                d[h] = d[h].wrapping_mul(17).wrapping_add(s);
            }
        }
        d
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn any_schedule_is_sequentially_consistent(
            log in proptest::collection::vec(
                (proptest::collection::vec(0usize..6, 0..3), proptest::collection::vec(0usize..6, 1..3)), 1..40),
            prio in any::<bool>(),
        ) {
            let log: Vec<(Vec<usize>, Vec<usize>)> = log
                .into_iter()
                .map(|(r, mut w)| {
                    w.sort_unstable();
                    w.dedup();
                    (r.into_iter().filter(|h| !w.contains(h)).collect(), w)
                })
                .collect();
            let kind = if prio { SchedulerKind::Prio } else { SchedulerKind::Fifo };
            prop_assert_eq!(run_log(&log, 6, vec![1, 1, 2], kind), sequential(&log, 6));
        }
    }
}
