//! Shared per-cell and per-face storage.
//!
//! Values live in relaxed atomics so that tasks running on different
//! workers can write disjoint entries through a shared reference. Ordering
//! between writers and readers of the same entry is provided by the task
//! graph (every completion goes through the runtime's lock).

use std::collections::HashMap;
use std::sync::atomic::{AtomicI64, AtomicU64, AtomicU8, Ordering};

use crate::mesh::{CellId, Mesh, Topology};

pub struct F64s(Box<[AtomicU64]>);

impl F64s {
    pub fn new(n: usize, v: f64) -> Self {
        Self((0..n).map(|_| AtomicU64::new(v.to_bits())).collect())
    }
    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        f64::from_bits(self.0[i].load(Ordering::Relaxed))
    }
    #[inline]
    pub fn set(&self, i: usize, v: f64) {
        self.0[i].store(v.to_bits(), Ordering::Relaxed)
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

pub struct I64s(Box<[AtomicI64]>);

impl I64s {
    pub fn new(n: usize, v: i64) -> Self {
        Self((0..n).map(|_| AtomicI64::new(v)).collect())
    }
    #[inline]
    pub fn get(&self, i: usize) -> i64 {
        self.0[i].load(Ordering::Relaxed)
    }
    #[inline]
    pub fn set(&self, i: usize, v: i64) {
        self.0[i].store(v, Ordering::Relaxed)
    }
}

pub struct Levels(Box<[AtomicU8]>);

impl Levels {
    pub fn new(n: usize) -> Self {
        Self((0..n).map(|_| AtomicU8::new(0)).collect())
    }
    #[inline]
    pub fn get(&self, i: usize) -> u8 {
        self.0[i].load(Ordering::Relaxed)
    }
    #[inline]
    pub fn set(&self, i: usize, v: u8) {
        self.0[i].store(v, Ordering::Relaxed)
    }
    pub fn to_vec(&self) -> Vec<u8> {
        (0..self.0.len()).map(|i| self.get(i)).collect()
    }
    pub fn assign(&self, v: &[u8]) {
        for (i, &x) in v.iter().enumerate() {
            self.set(i, x);
        }
    }
}

/// Position inside an iteration, in units of the smallest step, tagged
/// with the iteration number so ticks never repeat across iterations.
pub fn tick(iteration: u64, k: u32) -> i64 {
    ((iteration as i64) << 32) | k as i64
}

/// Stamp of a neighbour gather: the tick and whether it was for the
/// corrector.
pub fn gather_stamp(tick: i64, corrector: bool) -> i64 {
    tick * 2 + i64::from(corrector)
}

pub struct CellFields {
    /// Extensive value W = w·V at the start of the cell's current step.
    pub big_w: F64s,
    /// Intensive value at the start of the current step.
    pub w: F64s,
    pub big_w_star: F64s,
    pub w_star: F64s,
    /// Tick at which the predicted value `w_star` is valid.
    pub star_tick: I64s,
    /// Value at the cell's current evaluation time, read by neighbours.
    pub w_cur: F64s,
    pub w_cur_tick: I64s,
    /// Instantaneous residual at the start of the step.
    pub r0: F64s,
    pub dt_max: F64s,
    pub graw: [F64s; 2],
    pub g_n: [F64s; 2],
    pub g_star: [F64s; 2],
    pub g_cur: [F64s; 2],
    pub g_cur_tick: I64s,
}

impl CellFields {
    pub fn new(n: usize) -> Self {
        let z = || F64s::new(n, 0.0);
        Self {
            big_w: z(),
            w: z(),
            big_w_star: z(),
            w_star: z(),
            star_tick: I64s::new(n, -1),
            w_cur: z(),
            w_cur_tick: I64s::new(n, -1),
            r0: z(),
            dt_max: z(),
            graw: [z(), z()],
            g_n: [z(), z()],
            g_star: [z(), z()],
            g_cur: [z(), z()],
            g_cur_tick: I64s::new(n, -1),
        }
    }
}

/// Face storage. Fluxes have two slots so a coarse cell can collect both
/// substeps of a finer face before it corrects.
pub struct FaceFields {
    /// Neighbour value as seen by side `k` (0 left, 1 right) at index
    /// `2f + k`, stamped with [`gather_stamp`].
    pub nb: F64s,
    pub nb_stamp: I64s,
    pub wl: F64s,
    pub wr: F64s,
    pub state_tick: I64s,
    pub phi0: F64s,
    pub phi1: F64s,
    pub phi0_tick: I64s,
    pub phi1_tick: I64s,
}

impl FaceFields {
    pub fn new(n: usize) -> Self {
        Self {
            nb: F64s::new(2 * n, 0.0),
            nb_stamp: I64s::new(2 * n, -1),
            wl: F64s::new(n, 0.0),
            wr: F64s::new(n, 0.0),
            state_tick: I64s::new(n, -1),
            phi0: F64s::new(2 * n, 0.0),
            phi1: F64s::new(2 * n, 0.0),
            phi0_tick: I64s::new(2 * n, -1),
            phi1_tick: I64s::new(2 * n, -1),
        }
    }
}

/// Fields of one ghost slot, in exchange order.
pub const GHOST_FIELDS: usize = 8;
pub const G_W: usize = 0;
pub const G_W_STAR: usize = 1;
pub const G_STAR_TICK: usize = 2;
pub const G_W_CUR: usize = 3;
pub const G_W_CUR_TICK: usize = 4;
pub const G_GX: usize = 5;
pub const G_GY: usize = 6;
pub const G_G_TICK: usize = 7;

pub struct GhostBlock {
    pub local_ce: u32,
    pub foreign_ce: u32,
    pub foreign_rank: u32,
    pub cells: Vec<CellId>,
    pub data: F64s,
}

impl GhostBlock {
    #[inline]
    pub fn field(&self, slot: usize, f: usize) -> f64 {
        self.data.get(slot * GHOST_FIELDS + f)
    }
}

/// Ghost components of one rank, looked up by (reading CE, foreign cell).
#[derive(Default)]
pub struct GhostStore {
    pub blocks: Vec<GhostBlock>,
    index: HashMap<(u32, CellId), (u32, u32)>,
    by_pair: HashMap<(u32, u32), usize>,
}

impl GhostStore {
    pub fn for_rank(topo: &Topology, rank: u32) -> Self {
        let mut store = GhostStore::default();
        for ce in topo.ces_of_rank(rank) {
            for g in &ce.ghost_components {
                let b = store.blocks.len();
                for (slot, &c) in g.cells.iter().enumerate() {
                    store.index.insert((g.local_ce, c), (b as u32, slot as u32));
                }
                store.by_pair.insert((g.local_ce, g.foreign_ce), b);
                store.blocks.push(GhostBlock {
                    local_ce: g.local_ce,
                    foreign_ce: g.foreign_ce,
                    foreign_rank: g.foreign_rank,
                    cells: g.cells.clone(),
                    data: F64s::new(g.cells.len() * GHOST_FIELDS, 0.0),
                });
            }
        }
        store
    }

    #[inline]
    pub fn lookup(&self, reader_ce: u32, cell: CellId) -> Option<(&GhostBlock, usize)> {
        self.index.get(&(reader_ce, cell)).map(|&(b, s)| (&self.blocks[b as usize], s as usize))
    }

    pub fn block(&self, local_ce: u32, foreign_ce: u32) -> Option<&GhostBlock> {
        self.by_pair.get(&(local_ce, foreign_ce)).map(|&b| &self.blocks[b])
    }
}

/// Which cells this process computes; foreign cells are only reachable
/// through ghost blocks.
pub struct Ownership {
    pub local: Vec<bool>,
}

impl Ownership {
    pub fn all(n: usize) -> Self {
        Self { local: vec![true; n] }
    }

    pub fn of_rank(topo: &Topology, rank: u32) -> Self {
        Self {
            local: topo.ce_of_cell.iter().map(|&ce| topo.rank_of_ce[ce as usize] == rank).collect(),
        }
    }
}

/// Everything the kernels read and write.
pub struct SolverState {
    pub cells: CellFields,
    pub faces: FaceFields,
    pub levels: Levels,
    pub ghosts: GhostStore,
    pub ownership: Ownership,
    dt_base: AtomicU64,
}

impl SolverState {
    pub fn new(mesh: &Mesh, initial: &[f64]) -> Self {
        Self::with_ghosts(mesh, initial, GhostStore::default(), Ownership::all(mesh.n_cells()))
    }

    pub fn with_ghosts(mesh: &Mesh, initial: &[f64], ghosts: GhostStore, ownership: Ownership) -> Self {
        assert_eq!(initial.len(), mesh.n_cells());
        let st = Self {
            cells: CellFields::new(mesh.n_cells()),
            faces: FaceFields::new(mesh.n_faces()),
            levels: Levels::new(mesh.n_cells()),
            ghosts,
            ownership,
            dt_base: AtomicU64::new(0f64.to_bits()),
        };
        for (i, (&w0, cell)) in initial.iter().zip(&mesh.cells).enumerate() {
            let big = w0 * cell.volume;
            st.cells.big_w.set(i, big);
            let w = big / cell.volume;
            st.cells.w.set(i, w);
            st.cells.w_cur.set(i, w);
            st.cells.w_cur_tick.set(i, tick(0, 0));
        }
        st
    }

    /// State at the start of iteration `iteration` holding the extensive
    /// values `big_w` exactly.
    pub fn from_extensive(mesh: &Mesh, big_w: &[f64], iteration: u64, ghosts: GhostStore, ownership: Ownership) -> Self {
        assert_eq!(big_w.len(), mesh.n_cells());
        let st = Self::with_ghosts(mesh, &vec![0.0; mesh.n_cells()], ghosts, ownership);
        for (i, (&big, cell)) in big_w.iter().zip(&mesh.cells).enumerate() {
            st.cells.big_w.set(i, big);
            let w = big / cell.volume;
            st.cells.w.set(i, w);
            st.cells.w_cur.set(i, w);
            st.cells.w_cur_tick.set(i, tick(iteration, 0));
        }
        st
    }

    pub fn dt_base(&self) -> f64 {
        f64::from_bits(self.dt_base.load(Ordering::Relaxed))
    }

    pub fn set_dt_base(&self, dt: f64) {
        self.dt_base.store(dt.to_bits(), Ordering::Relaxed)
    }

    /// Step length of `cell` in the current iteration.
    pub fn step_of(&self, cell: usize) -> f64 {
        self.dt_base() * (1u64 << self.levels.get(cell)) as f64
    }

    pub fn extensive(&self) -> Vec<f64> {
        self.cells.big_w.to_vec()
    }

    pub fn intensive(&self) -> Vec<f64> {
        self.cells.w.to_vec()
    }
}
