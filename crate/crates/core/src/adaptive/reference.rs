//! Sequential execution of the adaptive iteration, used as the oracle for
//! every parallel mode.

use crate::mesh::{CellId, FaceId, Mesh};
use crate::numerics::kernels::KernelCtx;
use crate::numerics::{
    correct, max_time_step, minmod, predict, riemann_flux, CellKernel, KernelError, Physics, SolverState,
};

use super::{iteration_program, smooth_levels, AdaptiveError, LevelMap, Op, Step};

/// Items of a component split by temporal level, ascending within a level.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LevelLists {
    pub by_level: Vec<Vec<u32>>,
}

impl LevelLists {
    pub fn cells(cells: &[CellId], levels: &[u8]) -> Self {
        let mut out = LevelLists::default();
        for &c in cells {
            out.push(levels[c as usize], c);
        }
        out
    }

    pub fn faces(faces: &[FaceId], mesh: &Mesh, levels: &[u8]) -> Self {
        let mut out = LevelLists::default();
        for &f in faces {
            out.push(face_level(mesh, levels, f), f);
        }
        out
    }

    fn push(&mut self, level: u8, id: u32) {
        let l = level as usize;
        if self.by_level.len() <= l {
            self.by_level.resize(l + 1, Vec::new());
        }
        self.by_level[l].push(id);
    }

    /// Bitmask of levels with at least one item.
    pub fn mask(&self) -> u32 {
        self.by_level.iter().enumerate().filter(|(_, v)| !v.is_empty()).fold(0, |m, (l, _)| m | 1 << l)
    }

    /// Non-empty lists whose level is in `mask`, ascending by level.
    pub fn select(&self, mask: u32) -> impl Iterator<Item = &[u32]> + '_ {
        self.by_level
            .iter()
            .enumerate()
            .filter(move |(l, v)| mask & (1 << l) != 0 && !v.is_empty())
            .map(|(_, v)| v.as_slice())
    }

    pub fn count(&self, mask: u32) -> usize {
        self.select(mask).map(|v| v.len()).sum()
    }
}

pub fn face_level(mesh: &Mesh, levels: &[u8], f: FaceId) -> u8 {
    let face = &mesh.faces[f as usize];
    match face.right {
        Some(r) => levels[face.left as usize].min(levels[r as usize]),
        None => levels[face.left as usize],
    }
}

pub struct ReferenceRun {
    pub state: SolverState,
    pub level_maps: Vec<LevelMap>,
}

/// Time step computation and classification (raw level kernel followed by
/// neighbour smoothing). Leaves the levels and base step in `state`.
pub fn classify_in_place(
    ctx: &KernelCtx<'_>,
    theta_max: u8,
    iteration: u64,
) -> Result<LevelMap, AdaptiveError> {
    let mesh = ctx.mesh;
    let all: Vec<CellId> = (0..mesh.n_cells() as CellId).collect();
    let wrap = |source| AdaptiveError::Kernel { iteration, source };
    ctx.run_cells(&CellKernel::TimeStep, &all).map_err(wrap)?;
    let dt_min = (0..mesh.n_cells()).map(|i| ctx.state.cells.dt_max.get(i)).fold(f64::INFINITY, f64::min);
    if !(dt_min > 0.0) {
        return Err(AdaptiveError::NonPositiveDt(dt_min));
    }
    ctx.state.set_dt_base(dt_min);
    ctx.run_cells(&CellKernel::Classify { theta_max }, &all).map_err(wrap)?;
    let mut levels = ctx.state.levels.to_vec();
    smooth_levels(&mut levels, |i| mesh.neighbors(i as CellId).map(|n| n as usize).collect());
    ctx.state.levels.assign(&levels);
    Ok(LevelMap::from_levels(levels, dt_min))
}

fn run_step(ctx: &KernelCtx<'_>, step: &Step, cells: &LevelLists, faces: &LevelLists) -> Result<(), KernelError> {
    match step.op {
        Op::Cells(k) => cells.select(step.levels).try_for_each(|list| ctx.run_cells(&k, list)),
        Op::Faces(k) => faces.select(step.levels).try_for_each(|list| ctx.run_faces(&k, 0, list)),
    }
}

pub fn reference_integrate(
    mesh: &Mesh,
    physics: &Physics,
    initial: &[f64],
    theta_max: u8,
    n_iterations: u64,
) -> Result<ReferenceRun, AdaptiveError> {
    let state = SolverState::new(mesh, initial);
    let mut level_maps = Vec::new();
    let all_cells: Vec<CellId> = (0..mesh.n_cells() as CellId).collect();
    let all_faces: Vec<FaceId> = (0..mesh.n_faces() as FaceId).collect();
    {
        let ctx = KernelCtx { mesh, state: &state, physics };
        for it in 0..n_iterations {
            let map = classify_in_place(&ctx, theta_max, it)?;
            let cells = LevelLists::cells(&all_cells, &map.tau_of_cell);
            let faces = LevelLists::faces(&all_faces, mesh, &map.tau_of_cell);
            for step in iteration_program(it, map.theta) {
                run_step(&ctx, &step, &cells, &faces).map_err(|source| AdaptiveError::Kernel { iteration: it, source })?;
            }
            level_maps.push(map);
        }
    }
    Ok(ReferenceRun { state, level_maps })
}

/// Residual `−Σ s·F·n·A` of every cell for intensive values `w`, with the
/// same reconstruction as the adaptive kernels.
fn heun_residual(mesh: &Mesh, physics: &Physics, w: &[f64]) -> Vec<f64> {
    let n = mesh.n_cells();
    let mut grad = vec![[0.0; 2]; n];
    for c in 0..n {
        let own = w[c];
        let nb: Vec<Option<f64>> = mesh.cell_faces[c]
            .iter()
            .map(|&f| mesh.faces[f as usize].other(c as CellId).map(|o| w[o as usize]))
            .collect();
        let mut g = [0.0; 2];
        for (&f, v) in mesh.cell_faces[c].iter().zip(&nb) {
            let face = &mesh.faces[f as usize];
            let s = face.sign_for(c as CellId);
            let wf = 0.5 * (own + v.unwrap_or(own));
            g[0] += s * face.area * face.normal[0] * wf;
            g[1] += s * face.area * face.normal[1] * wf;
        }
        let vol = mesh.cells[c].volume;
        let g = [g[0] / vol, g[1] / vol];
        if physics.first_order {
            continue;
        }
        let (mut lo, mut hi) = (own, own);
        for v in nb.iter().flatten() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        let mut alpha: f64 = 1.0;
        for &f in &mesh.cell_faces[c] {
            let d = mesh.faces[f as usize].offset_for(c as CellId);
            let delta = g[0] * d[0] + g[1] * d[1];
            let phi = if delta > 0.0 {
                minmod(1.0, (hi - own) / delta)
            } else if delta < 0.0 {
                minmod(1.0, (lo - own) / delta)
            } else {
                1.0
            };
            alpha = alpha.min(phi);
        }
        grad[c] = [alpha * g[0], alpha * g[1]];
    }
    let phi: Vec<f64> = mesh
        .faces
        .iter()
        .map(|face| {
            let side = |c: CellId, o: [f64; 2]| {
                let g = grad[c as usize];
                w[c as usize] + (g[0] * o[0] + g[1] * o[1])
            };
            let wl = side(face.left, face.left_offset);
            let wr = face.right.map_or(wl, |r| side(r, face.right_offset));
            riemann_flux(wl, wr, face.normal, &physics.model) * face.area
        })
        .collect();
    (0..n)
        .map(|c| {
            let mut r = 0.0;
            for &f in &mesh.cell_faces[c] {
                r += -mesh.faces[f as usize].sign_for(c as CellId) * phi[f as usize];
            }
            r
        })
        .collect()
}

/// Plain Heun integration with one global step per iteration (the smallest
/// stable step). Returns the extensive values.
pub fn global_step_heun(mesh: &Mesh, physics: &Physics, initial: &[f64], n_steps: u64) -> Result<Vec<f64>, KernelError> {
    let n = mesh.n_cells();
    let vol: Vec<f64> = mesh.cells.iter().map(|c| c.volume).collect();
    let mut big: Vec<f64> = initial.iter().zip(&vol).map(|(w, v)| w * v).collect();
    for _ in 0..n_steps {
        let w: Vec<f64> = (0..n).map(|i| big[i] / vol[i]).collect();
        let dt = (0..n)
            .map(|i| max_time_step(mesh.cells[i].char_length, w[i], &physics.model, physics.dt_cap))
            .fold(f64::INFINITY, f64::min);
        let r0 = heun_residual(mesh, physics, &w);
        let star: Vec<f64> = (0..n).map(|i| predict(big[i], dt, r0[i])).collect();
        let w_star: Vec<f64> = (0..n).map(|i| star[i] / vol[i]).collect();
        let r1 = heun_residual(mesh, physics, &w_star);
        for i in 0..n {
            big[i] = correct(big[i], dt, r0[i], r1[i]);
            if !big[i].is_finite() {
                return Err(KernelError::NonFinite { cell: i as CellId, kernel: "global_step_heun" });
            }
        }
    }
    Ok(big)
}
