//! Turns solver iterations into runtime tasks.
//!
//! Each CE owns handles for its border and inner values and gradients and
//! for its faces. An elementary task applies one kernel to one component of
//! one CE restricted to the levels of the current step; components with no
//! cell (or face) of those levels produce no task.

mod pack;

pub use pack::{conflicts, Elementary, PackKind, Packer, TaskFn};

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::adaptive::{iteration_program, AdaptiveError, LevelLists, LevelMap, Op, Step};
use crate::mesh::{CellId, FaceId, Mesh, Occupancy, Topology};
use crate::numerics::kernels::KernelCtx;
use crate::numerics::{CellKernel, FaceKernel, Physics, SolverState};
use crate::runtime::{Access, HandleId, Runtime, RuntimeError, TaskFailure};

#[derive(Debug, Error)]
pub enum TaskGenError {
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Adaptive(#[from] AdaptiveError),
    #[error("rank {rank}: communication failed: {message}")]
    Comm { rank: u32, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskGenConfig {
    pub packing: bool,
    pub large_packs: bool,
    /// Highest task priority.
    pub p_max: u32,
    pub theta_max: u8,
}

impl Default for TaskGenConfig {
    fn default() -> Self {
        Self { packing: true, large_packs: true, p_max: 4, theta_max: 3 }
    }
}

/// Priority of every CE: `p_max` for CEs holding level 0 or 1 cells,
/// decreasing by one per hop away from the nearest such CE.
pub fn compute_priorities(graph: &[Vec<u32>], prioritized: &[bool], p_max: u32) -> Vec<u32> {
    if !prioritized.iter().any(|&p| p) {
        return vec![p_max; graph.len()];
    }
    let mut dist = vec![u32::MAX; graph.len()];
    let mut queue = VecDeque::new();
    for (c, &p) in prioritized.iter().enumerate() {
        if p {
            dist[c] = 0;
            queue.push_back(c);
        }
    }
    while let Some(c) = queue.pop_front() {
        for &d in &graph[c] {
            if dist[d as usize] == u32::MAX {
                dist[d as usize] = dist[c] + 1;
                queue.push_back(d as usize);
            }
        }
    }
    dist.iter().map(|&d| p_max.saturating_sub(d)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Max,
    Sum,
}

/// Collective operations and ghost exchange of one rank. A single process
/// uses [`SingleRank`].
pub trait RankComm {
    fn rank(&self) -> u32;
    fn n_ranks(&self) -> u32;
    fn allreduce_min(&mut self, iteration: u64, v: f64) -> Result<f64, TaskGenError>;
    fn allreduce_u64(&mut self, iteration: u64, v: Vec<u64>, op: ReduceOp) -> Result<Vec<u64>, TaskGenError>;
    /// Copies the levels of foreign cells adjacent to this rank into
    /// `state.levels`.
    fn exchange_levels(&mut self, iteration: u64, driver: &Driver) -> Result<(), TaskGenError>;
    /// Inserts tasks refreshing every ghost component for cells whose level
    /// is in `level_mask`.
    fn insert_exchange(
        &mut self,
        rt: &Runtime,
        packer: &mut Packer,
        driver: &Driver,
        iteration: u64,
        subiteration: u32,
        level_mask: u32,
    ) -> Result<(), TaskGenError>;
}

pub struct SingleRank;

impl RankComm for SingleRank {
    fn rank(&self) -> u32 {
        0
    }
    fn n_ranks(&self) -> u32 {
        1
    }
    fn allreduce_min(&mut self, _: u64, v: f64) -> Result<f64, TaskGenError> {
        Ok(v)
    }
    fn allreduce_u64(&mut self, _: u64, v: Vec<u64>, _: ReduceOp) -> Result<Vec<u64>, TaskGenError> {
        Ok(v)
    }
    fn exchange_levels(&mut self, _: u64, _: &Driver) -> Result<(), TaskGenError> {
        Ok(())
    }
    fn insert_exchange(&mut self, _: &Runtime, _: &mut Packer, _: &Driver, _: u64, _: u32, _: u32) -> Result<(), TaskGenError> {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceGroupKind {
    /// Faces inside the CE, boundary faces included.
    Intra,
    /// Faces shared with a CE of the same rank; owned by the lower id.
    Interface(u32),
    /// Faces shared with a CE of another rank; computed on both sides.
    Remote(u32),
}

pub struct FaceGroup {
    pub ce: u32,
    pub kind: FaceGroupKind,
    pub faces: Vec<FaceId>,
    pub handle: HandleId,
    /// Handles read when reconstructing face states.
    pub reads: Vec<HandleId>,
    /// The value handles among `reads`, read by the neighbour gather.
    pub value_reads: Vec<HandleId>,
}

/// Data handles of the CEs of one rank. Component index 0 is the border,
/// 1 the inner cells.
pub struct HandleMap {
    pub vals: BTreeMap<u32, [HandleId; 2]>,
    pub grads: BTreeMap<u32, [HandleId; 2]>,
    pub faces: BTreeMap<u32, HandleId>,
    pub interface: BTreeMap<(u32, u32), HandleId>,
    pub remote: BTreeMap<(u32, u32), HandleId>,
    /// Ghost component (local CE, foreign CE).
    pub ghost: BTreeMap<(u32, u32), HandleId>,
    pub face_groups: Vec<FaceGroup>,
}

pub const BORDER: usize = 0;
pub const INNER: usize = 1;

impl HandleMap {
    pub fn build(rt: &Runtime, topo: &Topology, rank: u32) -> Self {
        let mut m = HandleMap {
            vals: BTreeMap::new(),
            grads: BTreeMap::new(),
            faces: BTreeMap::new(),
            interface: BTreeMap::new(),
            remote: BTreeMap::new(),
            ghost: BTreeMap::new(),
            face_groups: Vec::new(),
        };
        let local: Vec<&crate::mesh::ComputationElement> = topo.ces_of_rank(rank).collect();
        for ce in &local {
            let h = rt.register_handles(5);
            m.vals.insert(ce.id, [h[0], h[1]]);
            m.grads.insert(ce.id, [h[2], h[3]]);
            m.faces.insert(ce.id, h[4]);
            for g in &ce.ghost_components {
                m.ghost.insert((g.local_ce, g.foreign_ce), rt.register_handle());
            }
        }
        for ce in &local {
            let c = ce.id;
            let (vb, vi, gb, gi) = (m.vals[&c][BORDER], m.vals[&c][INNER], m.grads[&c][BORDER], m.grads[&c][INNER]);
            m.face_groups.push(FaceGroup {
                ce: c,
                kind: FaceGroupKind::Intra,
                faces: ce.intra_faces.clone(),
                handle: m.faces[&c],
                reads: vec![vb, vi, gb, gi],
                value_reads: vec![vb, vi],
            });
            for (&d, faces) in &ce.inter_ce_faces {
                if topo.rank_of_ce[d as usize] == rank {
                    let key = (c.min(d), c.max(d));
                    let h = *m.interface.entry(key).or_insert_with(|| rt.register_handle());
                    if c < d {
                        m.face_groups.push(FaceGroup {
                            ce: c,
                            kind: FaceGroupKind::Interface(d),
                            faces: faces.clone(),
                            handle: h,
                            reads: vec![vb, gb, m.vals[&d][BORDER], m.grads[&d][BORDER]],
                            value_reads: vec![vb, m.vals[&d][BORDER]],
                        });
                    }
                } else {
                    let h = rt.register_handle();
                    m.remote.insert((c, d), h);
                    m.face_groups.push(FaceGroup {
                        ce: c,
                        kind: FaceGroupKind::Remote(d),
                        faces: faces.clone(),
                        handle: h,
                        reads: vec![vb, gb, m.ghost[&(c, d)]],
                        value_reads: vec![vb, m.ghost[&(c, d)]],
                    });
                }
            }
        }
        m
    }

    /// Face handles a cell of component `comp` of `c` collects fluxes from.
    fn adjacent_faces(&self, topo: &Topology, c: u32, comp: usize) -> Vec<HandleId> {
        let mut out = vec![self.faces[&c]];
        if comp == BORDER {
            for d in topo.ces[c as usize].neighbor_ces() {
                match self.interface.get(&(c.min(d), c.max(d))) {
                    Some(&h) => out.push(h),
                    None => out.push(self.remote[&(c, d)]),
                }
            }
        }
        out
    }
}

/// Level lists and priorities of one iteration.
struct Hints {
    cells: BTreeMap<u32, [LevelLists; 2]>,
    faces: Vec<LevelLists>,
    occupancy: BTreeMap<u32, Occupancy>,
    priority: BTreeMap<u32, u32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationStats {
    pub iteration: u64,
    /// Global level map restricted to this rank's cells (other entries 0).
    pub level_counts: Vec<u64>,
    pub theta: u8,
    pub dt_min: f64,
    pub elementary_tasks: u64,
    pub inserted_tasks: u64,
    pub submission: Duration,
    pub elapsed: Duration,
    /// Start of the iteration on the runtime trace clock, in seconds.
    pub started: f64,
    pub priorities: Vec<u32>,
}

impl IterationStats {
    pub fn level_map_summary(&self) -> LevelMap {
        let mut levels = Vec::new();
        for (t, &c) in self.level_counts.iter().enumerate() {
            levels.extend(std::iter::repeat_n(t as u8, c as usize));
        }
        LevelMap::from_levels(levels, self.dt_min)
    }
}

pub const DAG_CSV_HEADER: &str = "iteration,ces,elementary_tasks,inserted_tasks,submission_s,elapsed_s";

pub fn write_dag_row<W: Write>(out: &mut W, n_ces: usize, s: &IterationStats) -> std::io::Result<()> {
    writeln!(
        out,
        "{},{},{},{},{:.6},{:.6}",
        s.iteration,
        n_ces,
        s.elementary_tasks,
        s.inserted_tasks,
        s.submission.as_secs_f64(),
        s.elapsed.as_secs_f64()
    )
}

/// Generates and submits the tasks of successive iterations for the CEs of
/// one rank.
pub struct Driver {
    pub mesh: Arc<Mesh>,
    pub topo: Arc<Topology>,
    pub state: Arc<SolverState>,
    pub physics: Physics,
    pub config: TaskGenConfig,
    pub rank: u32,
    pub handles: HandleMap,
    pub local_ces: Vec<u32>,
    components: BTreeMap<u32, [Vec<CellId>; 2]>,
}

impl Driver {
    pub fn new(
        rt: &Runtime,
        mesh: Arc<Mesh>,
        topo: Arc<Topology>,
        state: Arc<SolverState>,
        physics: Physics,
        config: TaskGenConfig,
        rank: u32,
    ) -> Self {
        let handles = HandleMap::build(rt, &topo, rank);
        let local_ces: Vec<u32> = topo.ces_of_rank(rank).map(|c| c.id).collect();
        let components = topo
            .ces_of_rank(rank)
            .map(|c| (c.id, [c.border_cells.clone(), c.inner_cells.clone()]))
            .collect();
        Self { mesh, topo, state, physics, config, rank, handles, local_ces, components }
    }

    pub fn owned_cells(&self) -> impl Iterator<Item = CellId> + '_ {
        self.local_ces.iter().flat_map(move |c| self.components[c].iter().flatten().copied())
    }

    pub fn owned_cells_sorted(&self) -> Vec<CellId> {
        let mut v: Vec<CellId> = self.owned_cells().collect();
        v.sort_unstable();
        v
    }

    fn cell_task(&self, kernel: CellKernel, cells: Vec<CellId>) -> TaskFn {
        let (mesh, state, physics) = (Arc::clone(&self.mesh), Arc::clone(&self.state), self.physics);
        Box::new(move |ctx| {
            let k = KernelCtx { mesh: &mesh, state: &state, physics: &physics };
            ctx.for_chunks(cells.len(), |rg| k.run_cells(&kernel, &cells[rg]).map_err(|e| Box::new(e) as TaskFailure))
        })
    }

    fn face_task(&self, kernel: FaceKernel, c: u32, faces: Vec<FaceId>) -> TaskFn {
        let (mesh, state, physics) = (Arc::clone(&self.mesh), Arc::clone(&self.state), self.physics);
        Box::new(move |ctx| {
            let k = KernelCtx { mesh: &mesh, state: &state, physics: &physics };
            ctx.for_chunks(faces.len(), |rg| k.run_faces(&kernel, c, &faces[rg]).map_err(|e| Box::new(e) as TaskFailure))
        })
    }

    fn cell_accesses(&self, kernel: &CellKernel, c: u32, comp: usize) -> Vec<(HandleId, Access)> {
        let h = &self.handles;
        let (vals, grads) = (h.vals[&c][comp], h.grads[&c][comp]);
        let topo = &self.topo;
        match kernel {
            CellKernel::Correct { .. } | CellKernel::FluxSum { .. } => {
                let mut a: Vec<_> = h.adjacent_faces(topo, c, comp).into_iter().map(|f| (f, Access::Read)).collect();
                a.push((vals, Access::ReadWrite));
                a
            }
            CellKernel::Reposition { .. } => vec![(vals, Access::Read), (grads, Access::ReadWrite)],
            CellKernel::Gradient { .. } | CellKernel::Limit { .. } => {
                let mut a: Vec<_> = h.adjacent_faces(topo, c, comp).into_iter().map(|f| (f, Access::Read)).collect();
                a.push((vals, Access::Read));
                a.push((grads, Access::ReadWrite));
                a
            }
            CellKernel::TimeStep
            | CellKernel::Classify { .. }
            | CellKernel::IntCorrect { .. }
            | CellKernel::Interpolate { .. }
            | CellKernel::ExtPredict { .. }
            | CellKernel::IntPredict { .. }
            | CellKernel::FinalUpdate { .. } => vec![(vals, Access::ReadWrite)],
        }
    }

    /// Emits one cell kernel over all owned cells, ignoring levels.
    fn emit_all_cells(&self, rt: &Runtime, packer: &mut Packer, kernel: CellKernel, priority: u32) -> Result<(), TaskGenError> {
        for &c in &self.local_ces {
            for comp in [BORDER, INNER] {
                let cells = &self.components[&c][comp];
                if cells.is_empty() {
                    continue;
                }
                packer.push(
                    rt,
                    Elementary {
                        ce: c,
                        kind: if comp == BORDER { PackKind::Border } else { PackKind::Inner },
                        subiteration: 0,
                        priority,
                        accesses: self.cell_accesses(&kernel, c, comp),
                        run: self.cell_task(kernel, cells.clone()),
                    },
                )?;
            }
        }
        Ok(())
    }

    fn hints(&self, comm: &mut dyn RankComm, iteration: u64) -> Result<Hints, TaskGenError> {
        let levels = self.state.levels.to_vec();
        let mut cells = BTreeMap::new();
        let mut occupancy = BTreeMap::new();
        let mut flags = vec![0u64; self.topo.n_ces()];
        for &c in &self.local_ces {
            let comps = &self.components[&c];
            cells.insert(c, [LevelLists::cells(&comps[BORDER], &levels), LevelLists::cells(&comps[INNER], &levels)]);
            let occ = self.topo.ces[c as usize].occupancy(&levels);
            flags[c as usize] = u64::from(occ.any() & 0b11 != 0);
            occupancy.insert(c, occ);
        }
        let faces = self.handles.face_groups.iter().map(|g| LevelLists::faces(&g.faces, &self.mesh, &levels)).collect();
        let flags = comm.allreduce_u64(iteration, flags, ReduceOp::Max)?;
        let prioritized: Vec<bool> = flags.iter().map(|&f| f != 0).collect();
        let prio = compute_priorities(&self.topo.ce_graph(), &prioritized, self.config.p_max);
        let priority = self.local_ces.iter().map(|&c| (c, prio[c as usize])).collect();
        Ok(Hints { cells, faces, occupancy, priority })
    }

    fn large_kind(&self, hints: &Hints, c: u32, eff: u32) -> Option<PackKind> {
        if !self.config.large_packs || eff.count_ones() != 1 {
            return None;
        }
        (eff & hints.occupancy[&c].inner_only() != 0).then(|| PackKind::Large(eff.trailing_zeros() as u8))
    }

    fn emit_step(&self, rt: &Runtime, packer: &mut Packer, hints: &Hints, step: &Step) -> Result<(), TaskGenError> {
        match step.op {
            Op::Cells(kernel) => {
                for &c in &self.local_ces {
                    for comp in [BORDER, INNER] {
                        let lists = &hints.cells[&c][comp];
                        let eff = step.levels & lists.mask();
                        if eff == 0 {
                            continue;
                        }
                        let cells: Vec<CellId> = lists.select(eff).flatten().copied().collect();
                        let base = if comp == BORDER { PackKind::Border } else { PackKind::Inner };
                        let kind = if comp == INNER { self.large_kind(hints, c, eff).unwrap_or(base) } else { base };
                        packer.push(
                            rt,
                            Elementary {
                                ce: c,
                                kind,
                                subiteration: step.subiteration,
                                priority: hints.priority[&c],
                                accesses: self.cell_accesses(&kernel, c, comp),
                                run: self.cell_task(kernel, cells),
                            },
                        )?;
                    }
                }
            }
            Op::Faces(kernel) => {
                for (g, lists) in self.handles.face_groups.iter().zip(&hints.faces) {
                    let eff = step.levels & lists.mask();
                    if eff == 0 {
                        continue;
                    }
                    let faces: Vec<FaceId> = lists.select(eff).flatten().copied().collect();
                    let mut accesses = vec![(g.handle, Access::ReadWrite)];
                    match kernel {
                        FaceKernel::Reconstruct { .. } => accesses.extend(g.reads.iter().map(|&h| (h, Access::Read))),
                        FaceKernel::Gather { .. } => accesses.extend(g.value_reads.iter().map(|&h| (h, Access::Read))),
                        FaceKernel::Riemann { .. } => {}
                    }
                    let kind = match g.kind {
                        FaceGroupKind::Intra => self.large_kind(hints, g.ce, eff).unwrap_or(PackKind::Faces),
                        _ => PackKind::Faces,
                    };
                    packer.push(
                        rt,
                        Elementary {
                            ce: g.ce,
                            kind,
                            subiteration: step.subiteration,
                            priority: hints.priority[&g.ce],
                            accesses,
                            run: self.face_task(kernel, g.ce, faces),
                        },
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Lowers owned levels until the neighbour constraint holds across all
    /// ranks.
    fn smooth(&self, comm: &mut dyn RankComm, iteration: u64) -> Result<(), TaskGenError> {
        let owned = &self.state.ownership.local;
        loop {
            comm.exchange_levels(iteration, self)?;
            let mut levels = self.state.levels.to_vec();
            let changed = smooth_owned(&self.mesh, owned, &mut levels);
            self.state.levels.assign(&levels);
            let any = comm.allreduce_u64(iteration, vec![changed as u64], ReduceOp::Sum)?;
            if any[0] == 0 {
                return Ok(());
            }
        }
    }

    pub fn run_iteration(&self, rt: &Runtime, comm: &mut dyn RankComm, iteration: u64) -> Result<IterationStats, TaskGenError> {
        let t0 = Instant::now();
        let started = rt.now();
        let mut submission = Duration::ZERO;
        let mut packer = Packer::new(self.config.packing);
        let p_max = self.config.p_max;

        let ts = Instant::now();
        self.emit_all_cells(rt, &mut packer, CellKernel::TimeStep, p_max)?;
        packer.flush_all(rt)?;
        submission += ts.elapsed();
        rt.wait_all()?;
        let local_min = self.owned_cells().map(|c| self.state.cells.dt_max.get(c as usize)).fold(f64::INFINITY, f64::min);
        let dt_min = comm.allreduce_min(iteration, local_min)?;
        if !(dt_min > 0.0) {
            return Err(AdaptiveError::NonPositiveDt(dt_min).into());
        }
        self.state.set_dt_base(dt_min);

        let ts = Instant::now();
        self.emit_all_cells(rt, &mut packer, CellKernel::Classify { theta_max: self.config.theta_max }, p_max)?;
        packer.flush_all(rt)?;
        submission += ts.elapsed();
        rt.wait_all()?;
        self.smooth(comm, iteration)?;

        let local_max = self.owned_cells().map(|c| self.state.levels.get(c as usize)).max().unwrap_or(0);
        let theta = comm.allreduce_u64(iteration, vec![local_max as u64], ReduceOp::Max)?[0] as u8;
        let ts = Instant::now();
        let hints = self.hints(comm, iteration)?;
        submission += ts.elapsed();

        let multi = comm.n_ranks() > 1;
        let mut dirty: u32 = u32::MAX;
        let mut current = 0;
        for step in iteration_program(iteration, theta) {
            let ts = Instant::now();
            if step.subiteration != current {
                packer.flush_all(rt)?;
                current = step.subiteration;
            }
            if let Op::Cells(CellKernel::FinalUpdate { .. }) = step.op {
                packer.flush_all(rt)?;
                submission += ts.elapsed();
                rt.wait_all()?;
            }
            let ts = Instant::now();
            if multi && step.op.reads_neighbors() && dirty != 0 {
                packer.flush_all(rt)?;
                comm.insert_exchange(rt, &mut packer, self, iteration, step.subiteration, dirty)?;
                dirty = 0;
            }
            self.emit_step(rt, &mut packer, &hints, &step)?;
            if step.op.publishes() {
                dirty |= step.levels;
            }
            submission += ts.elapsed();
        }
        packer.flush_all(rt)?;
        rt.wait_all()?;

        let mut counts = vec![0u64; theta as usize + 1];
        for c in self.owned_cells() {
            counts[self.state.levels.get(c as usize) as usize] += 1;
        }
        let counts = comm.allreduce_u64(iteration, counts, ReduceOp::Sum)?;
        let priorities = {
            let mut p = vec![0u64; self.topo.n_ces()];
            for (&c, &v) in &hints.priority {
                p[c as usize] = v as u64;
            }
            comm.allreduce_u64(iteration, p, ReduceOp::Max)?.into_iter().map(|v| v as u32).collect()
        };
        Ok(IterationStats {
            iteration,
            level_counts: counts,
            theta,
            dt_min,
            elementary_tasks: packer.elementary,
            inserted_tasks: packer.inserted,
            submission,
            elapsed: t0.elapsed(),
            started,
            priorities,
        })
    }
}

/// Smoothing restricted to owned cells: foreign levels are fixed inputs.
/// Returns the number of lowered cells.
pub fn smooth_owned(mesh: &Mesh, owned: &[bool], levels: &mut [u8]) -> usize {
    let n = levels.len();
    let mut queue: VecDeque<usize> = (0..n).collect();
    let mut queued = vec![true; n];
    let mut lowered = 0;
    while let Some(i) = queue.pop_front() {
        queued[i] = false;
        for j in mesh.neighbors(i as CellId) {
            let j = j as usize;
            if owned[j] && levels[j] > levels[i] + 1 {
                levels[j] = levels[i] + 1;
                lowered += 1;
                if !queued[j] {
                    queued[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    lowered
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn priorities_on_a_line() {
        let g = vec![vec![1], vec![0, 2], vec![1, 3], vec![2]];
        assert_eq!(compute_priorities(&g, &[true, false, false, false], 3), vec![3, 2, 1, 0]);
        assert_eq!(compute_priorities(&g, &[true; 4], 3), vec![3; 4]);
        assert_eq!(compute_priorities(&g, &[false; 4], 3), vec![3; 4]);
        let split = vec![vec![1], vec![0], vec![]];
        assert_eq!(compute_priorities(&split, &[true, false, false], 4), vec![4, 3, 0]);
    }

    /// Brute-force hop distance by repeated relaxation.
    fn relax_oracle(g: &[Vec<u32>], src: &[bool], p_max: u32) -> Vec<u32> {
        let n = g.len();
        let mut d: Vec<u64> = src.iter().map(|&s| if s { 0 } else { u64::MAX / 2 }).collect();
        for _ in 0..n {
            for a in 0..n {
                for &b in &g[a] {
                    d[b as usize] = d[b as usize].min(d[a] + 1);
                }
            }
        }
        d.iter().map(|&x| (p_max as u64).saturating_sub(x) as u32).collect()
    }

    proptest::proptest! {
        #[test]
        fn priorities_match_relaxation(
            edges in proptest::collection::vec((0u32..12, 0u32..12), 0..30),
            src in proptest::collection::vec(proptest::bool::weighted(0.2), 12),
        ) {
            let mut g = vec![Vec::new(); 12];
            for (a, b) in edges {
                if a != b {
                    g[a as usize].push(b);
                    g[b as usize].push(a);
                }
            }
            let p = compute_priorities(&g, &src, 4);
            if src.iter().any(|&s| s) {
                proptest::prop_assert_eq!(&p, &relax_oracle(&g, &src, 4));
                for a in 0..12 {
                    for &b in &g[a] {
                        proptest::prop_assert!(p[a].abs_diff(p[b as usize]) <= 1);
                    }
                }
            } else {
                proptest::prop_assert!(p.iter().all(|&x| x == 4));
            }
        }
    }
}

#[cfg(test)]
mod equivalence {
    use super::*;
    use crate::adaptive::{classify_values, reference_integrate};
    use crate::mesh::{generate_mesh, partition_mesh, BoundaryKind, MeshSpec};
    use crate::numerics::FluxModel;
    use crate::runtime::{RuntimeConfig, SchedulerKind};

    #[test]
    fn skewed_tasks_match_reference() {
        let mesh = Arc::new(generate_mesh(&MeshSpec::square(16, BoundaryKind::Periodic).refine([0.0, 0.0], [0.5, 0.5], 4)).unwrap());
        let physics = Physics::new(FluxModel::Advection { velocity: [1.0, 0.5] }, 1.0);
        let w0: Vec<f64> = mesh.cells.iter().map(|c| 1.0 + (6.0 * c.centroid[0]).sin() * (4.0 * c.centroid[1]).cos()).collect();
        let lm = classify_values(&mesh, &physics, &w0, 3).unwrap();
        let reference = reference_integrate(&mesh, &physics, &w0, 3, 3).unwrap();
        for (ces, packing) in [(1, true), (8, false), (32, true)] {
            let part = partition_mesh(&mesh, ces, &lm.weights()).unwrap();
            let topo = Arc::new(Topology::build(&mesh, &part).unwrap());
            let state = Arc::new(SolverState::new(&mesh, &w0));
            let rt = Runtime::new(RuntimeConfig::new(vec![2, 1, 1], SchedulerKind::Prio)).unwrap();
            let cfg = TaskGenConfig { packing, ..TaskGenConfig::default() };
            let d = Driver::new(&rt, Arc::clone(&mesh), topo, Arc::clone(&state), physics, cfg, 0);
            for it in 0..3 {
                let s = d.run_iteration(&rt, &mut SingleRank, it).unwrap();
                assert_eq!(s.theta, 2);
                if !packing {
                    assert_eq!(s.elementary_tasks, s.inserted_tasks);
                }
            }
            for i in 0..mesh.n_cells() {
                assert_eq!(state.cells.big_w.get(i).to_bits(), reference.state.cells.big_w.get(i).to_bits(), "cell {i}");
            }
        }
    }
}
