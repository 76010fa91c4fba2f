//! Cell and face kernels. Each kernel touches the listed cells (or faces)
//! independently, so any split of the list gives identical results.
//!
//! Every read of a neighbour value checks the tick it was produced at, so a
//! scheduling mistake surfaces as [`KernelError::TimeInconsistency`]
//! instead of a silently wrong flux.

use thiserror::Error;

use super::fields::*;
use super::{correct, max_time_step, minmod, predict, riemann_flux, time_interpolate, Physics};
use crate::mesh::{CellId, FaceId, Mesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Predictor,
    Corrector,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CellKernel {
    /// Maximum stable step of each cell into `dt_max`.
    TimeStep,
    /// Raw level from `dt_max` and the stored base step.
    Classify { theta_max: u8 },
    /// Extensive correction of cells whose step ends at `tick`.
    Correct { tick: i64 },
    /// `w = W/V` after a correction.
    IntCorrect { tick: i64 },
    /// Value at `tick`, `halves`/2 of the way through the current step.
    Interpolate { tick: i64, halves: u8 },
    /// Gradient at `tick`, `halves`/2 of the way through the current step.
    Reposition { tick: i64, halves: u8 },
    Gradient { stage: Stage, tick: i64 },
    Limit { stage: Stage, tick: i64 },
    /// Instantaneous residual at the start of the step.
    FluxSum { tick: i64 },
    ExtPredict { tick: i64 },
    IntPredict { tick: i64 },
    /// End-of-iteration intensive update.
    FinalUpdate { next_tick: i64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FaceKernel {
    /// Stores, for each side whose cell level is in `cells`, the value of
    /// the opposite cell that side needs at `tick`.
    Gather { stage: Stage, tick: i64, cells: u32 },
    Reconstruct { tick: i64 },
    Riemann { stage: Stage, tick: i64 },
}

impl CellKernel {
    pub fn name(&self) -> &'static str {
        match self {
            CellKernel::TimeStep => "time_step",
            CellKernel::Classify { .. } => "classify",
            CellKernel::Correct { .. } => "ext_correct",
            CellKernel::IntCorrect { .. } => "int_correct",
            CellKernel::Interpolate { .. } => "interpolate",
            CellKernel::Reposition { .. } => "reposition",
            CellKernel::Gradient { .. } => "gradient",
            CellKernel::Limit { .. } => "limit",
            CellKernel::FluxSum { .. } => "flux_sum",
            CellKernel::ExtPredict { .. } => "ext_predict",
            CellKernel::IntPredict { .. } => "int_predict",
            CellKernel::FinalUpdate { .. } => "final_update",
        }
    }
}

impl FaceKernel {
    pub fn name(&self) -> &'static str {
        match self {
            FaceKernel::Gather { .. } => "gather",
            FaceKernel::Reconstruct { .. } => "reconstruct",
            FaceKernel::Riemann { .. } => "riemann",
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("time inconsistency: {what} of cell {cell} is at tick {found:#x}, expected {expected:#x}")]
    TimeInconsistency { what: &'static str, cell: CellId, expected: i64, found: i64 },
    #[error("face {face}: {what} missing for tick {expected:#x} (slot holds {found:#x})")]
    MissingFlux { face: FaceId, what: &'static str, expected: i64, found: i64 },
    #[error("non-finite value in cell {cell} after {kernel}; CFL violated or state blew up")]
    NonFinite { cell: CellId, kernel: &'static str },
}

/// What a neighbour looks like from a given CE, whether it is local or a
/// ghost.
#[derive(Clone, Copy, Debug)]
struct Record {
    w: f64,
    w_star: f64,
    star_tick: i64,
    w_cur: f64,
    w_cur_tick: i64,
    g_cur: [f64; 2],
    g_cur_tick: i64,
}

pub struct KernelCtx<'a> {
    pub mesh: &'a Mesh,
    pub state: &'a SolverState,
    pub physics: &'a Physics,
}

fn check(what: &'static str, cell: CellId, expected: i64, found: i64) -> Result<(), KernelError> {
    if expected == found {
        Ok(())
    } else {
        Err(KernelError::TimeInconsistency { what, cell, expected, found })
    }
}

fn finite(v: f64, cell: CellId, kernel: &'static str) -> Result<f64, KernelError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(KernelError::NonFinite { cell, kernel })
    }
}

impl KernelCtx<'_> {
    fn record(&self, reader_ce: u32, c: CellId) -> Record {
        let st = self.state;
        let i = c as usize;
        if !st.ownership.local[i] {
            if let Some((b, s)) = st.ghosts.lookup(reader_ce, c) {
                return Record {
                    w: b.field(s, G_W),
                    w_star: b.field(s, G_W_STAR),
                    star_tick: b.field(s, G_STAR_TICK) as i64,
                    w_cur: b.field(s, G_W_CUR),
                    w_cur_tick: b.field(s, G_W_CUR_TICK) as i64,
                    g_cur: [b.field(s, G_GX), b.field(s, G_GY)],
                    g_cur_tick: b.field(s, G_G_TICK) as i64,
                };
            }
        }
        let f = &st.cells;
        Record {
            w: f.w.get(i),
            w_star: f.w_star.get(i),
            star_tick: f.star_tick.get(i),
            w_cur: f.w_cur.get(i),
            w_cur_tick: f.w_cur_tick.get(i),
            g_cur: [f.g_cur[0].get(i), f.g_cur[1].get(i)],
            g_cur_tick: f.g_cur_tick.get(i),
        }
    }

    #[inline]
    fn level(&self, c: CellId) -> u8 {
        self.state.levels.get(c as usize)
    }

    pub fn face_level(&self, f: FaceId) -> u8 {
        let face = &self.mesh.faces[f as usize];
        match face.right {
            Some(r) => self.level(face.left).min(self.level(r)),
            None => self.level(face.left),
        }
    }

    /// Value of neighbour `n` of `c` at `tick`. In the corrector a finer
    /// neighbour has only predicted half of the coarse step, so its value
    /// is extrapolated along its predictor slope.
    fn neighbor_value(&self, reader_ce: u32, c: CellId, n: CellId, stage: Stage, tick: i64) -> Result<f64, KernelError> {
        let r = self.record(reader_ce, n);
        let (lc, ln) = (self.level(c), self.level(n));
        if stage == Stage::Corrector && ln < lc {
            check("prediction", n, tick - (1i64 << ln), r.star_tick)?;
            Ok(time_interpolate(r.w, r.w_star, 2.0))
        } else {
            check("value", n, tick, r.w_cur_tick)?;
            Ok(r.w_cur)
        }
    }

    /// Own value and the gathered face-neighbour values (`None` for
    /// boundary faces) at `tick`, in face order.
    fn stencil(&self, c: CellId, stage: Stage, tick: i64, out: &mut Vec<Option<f64>>) -> Result<f64, KernelError> {
        let i = c as usize;
        let own_tick = self.state.cells.w_cur_tick.get(i);
        check("value", c, tick, own_tick)?;
        let own = self.state.cells.w_cur.get(i);
        let stamp = gather_stamp(tick, stage == Stage::Corrector);
        let ff = &self.state.faces;
        out.clear();
        for &f in &self.mesh.cell_faces[i] {
            let face = &self.mesh.faces[f as usize];
            out.push(match face.right {
                None => None,
                Some(_) => {
                    let k = 2 * f as usize + usize::from(face.left != c);
                    let found = ff.nb_stamp.get(k);
                    if found != stamp {
                        return Err(KernelError::MissingFlux { face: f, what: "neighbour value", expected: stamp, found });
                    }
                    Some(ff.nb.get(k))
                }
            });
        }
        Ok(own)
    }

    /// Green-Gauss gradient from face averages.
    fn gradient(&self, c: CellId, own: f64, nbs: &[Option<f64>]) -> [f64; 2] {
        let i = c as usize;
        let mut g = [0.0; 2];
        for (&f, nb) in self.mesh.cell_faces[i].iter().zip(nbs) {
            let face = &self.mesh.faces[f as usize];
            let s = face.sign_for(c);
            let wf = 0.5 * (own + nb.unwrap_or(own));
            g[0] += s * face.area * face.normal[0] * wf;
            g[1] += s * face.area * face.normal[1] * wf;
        }
        let v = self.mesh.cells[i].volume;
        [g[0] / v, g[1] / v]
    }

    /// Scales `g` so that the reconstruction at every face of `c` stays
    /// within the range of `c` and its neighbours.
    fn limit(&self, c: CellId, own: f64, nbs: &[Option<f64>], g: [f64; 2]) -> [f64; 2] {
        if self.physics.first_order {
            return [0.0, 0.0];
        }
        let (mut lo, mut hi) = (own, own);
        for v in nbs.iter().flatten() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        let mut alpha: f64 = 1.0;
        for &f in &self.mesh.cell_faces[c as usize] {
            let d = self.mesh.faces[f as usize].offset_for(c);
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
        [alpha * g[0], alpha * g[1]]
    }

    fn slot(tick: i64, level: u8) -> usize {
        ((tick >> level) & 1) as usize
    }

    pub fn run_cells(&self, kernel: &CellKernel, cells: &[CellId]) -> Result<(), KernelError> {
        let st = self.state;
        let cf = &st.cells;
        let mesh = self.mesh;
        let mut nbs = Vec::with_capacity(8);
        for &c in cells {
            let i = c as usize;
            let lc = self.level(c);
            let h_ticks = 1i64 << lc;
            match *kernel {
                CellKernel::TimeStep => {
                    let cell = &mesh.cells[i];
                    cf.dt_max.set(i, max_time_step(cell.char_length, cf.w.get(i), &self.physics.model, self.physics.dt_cap));
                }
                CellKernel::Classify { theta_max } => {
                    let dt_min = st.dt_base();
                    let dt = cf.dt_max.get(i);
                    let mut tau = 0u8;
                    while tau < theta_max && dt_min * (1u64 << (tau + 1)) as f64 <= dt {
                        tau += 1;
                    }
                    st.levels.set(i, tau);
                }
                CellKernel::Correct { tick } => {
                    let start = tick - h_ticks;
                    let (mut a0, mut a1) = (0.0, 0.0);
                    for &f in &mesh.cell_faces[i] {
                        let face = &mesh.faces[f as usize];
                        let s = face.sign_for(c);
                        let lf = self.face_level(f);
                        let fi = 2 * f as usize;
                        if lf == lc {
                            let k = Self::slot(start, lf);
                            self.flux_tick(f, "predictor flux", start, st.faces.phi0_tick.get(fi + k))?;
                            self.flux_tick(f, "corrector flux", start, st.faces.phi1_tick.get(fi + k))?;
                            a0 += -s * st.faces.phi0.get(fi + k);
                            a1 += -s * st.faces.phi1.get(fi + k);
                        } else {
                            let mid = start + (1i64 << lf);
                            self.flux_tick(f, "predictor flux", start, st.faces.phi0_tick.get(fi))?;
                            self.flux_tick(f, "predictor flux", mid, st.faces.phi0_tick.get(fi + 1))?;
                            self.flux_tick(f, "corrector flux", start, st.faces.phi1_tick.get(fi))?;
                            self.flux_tick(f, "corrector flux", mid, st.faces.phi1_tick.get(fi + 1))?;
                            a0 += -s * (0.5 * (st.faces.phi0.get(fi) + st.faces.phi0.get(fi + 1)));
                            a1 += -s * (0.5 * (st.faces.phi1.get(fi) + st.faces.phi1.get(fi + 1)));
                        }
                    }
                    let w = correct(cf.big_w.get(i), st.step_of(i), a0, a1);
                    cf.big_w.set(i, finite(w, c, kernel.name())?);
                }
                CellKernel::IntCorrect { tick } | CellKernel::FinalUpdate { next_tick: tick } => {
                    let w = cf.big_w.get(i) / mesh.cells[i].volume;
                    cf.w.set(i, w);
                    cf.w_cur.set(i, w);
                    cf.w_cur_tick.set(i, tick);
                }
                CellKernel::Interpolate { tick, halves } => {
                    check("prediction", c, tick + h_ticks - (halves as i64 * h_ticks) / 2, cf.star_tick.get(i))?;
                    let frac = halves as f64 * 0.5;
                    cf.w_cur.set(i, time_interpolate(cf.w.get(i), cf.w_star.get(i), frac));
                    cf.w_cur_tick.set(i, tick);
                }
                CellKernel::Reposition { tick, halves } => {
                    check("prediction", c, tick + h_ticks - (halves as i64 * h_ticks) / 2, cf.star_tick.get(i))?;
                    let frac = halves as f64 * 0.5;
                    for d in 0..2 {
                        cf.g_cur[d].set(i, time_interpolate(cf.g_n[d].get(i), cf.g_star[d].get(i), frac));
                    }
                    cf.g_cur_tick.set(i, tick);
                }
                CellKernel::Gradient { stage, tick } => {
                    let own = self.stencil(c, stage, tick, &mut nbs)?;
                    let g = self.gradient(c, own, &nbs);
                    cf.graw[0].set(i, g[0]);
                    cf.graw[1].set(i, g[1]);
                }
                CellKernel::Limit { stage, tick } => {
                    let own = self.stencil(c, stage, tick, &mut nbs)?;
                    let g = self.limit(c, own, &nbs, [cf.graw[0].get(i), cf.graw[1].get(i)]);
                    let dst = if stage == Stage::Predictor { &cf.g_n } else { &cf.g_star };
                    for d in 0..2 {
                        dst[d].set(i, g[d]);
                        cf.g_cur[d].set(i, g[d]);
                    }
                    cf.g_cur_tick.set(i, tick);
                }
                CellKernel::FluxSum { tick } => {
                    let mut r = 0.0;
                    for &f in &mesh.cell_faces[i] {
                        let face = &mesh.faces[f as usize];
                        let k = 2 * f as usize + Self::slot(tick, self.face_level(f));
                        self.flux_tick(f, "predictor flux", tick, st.faces.phi0_tick.get(k))?;
                        r += -face.sign_for(c) * st.faces.phi0.get(k);
                    }
                    cf.r0.set(i, r);
                }
                CellKernel::ExtPredict { .. } => {
                    let w = predict(cf.big_w.get(i), st.step_of(i), cf.r0.get(i));
                    cf.big_w_star.set(i, finite(w, c, kernel.name())?);
                }
                CellKernel::IntPredict { tick } => {
                    let w = cf.big_w_star.get(i) / mesh.cells[i].volume;
                    cf.w_star.set(i, w);
                    cf.star_tick.set(i, tick + h_ticks);
                    cf.w_cur.set(i, w);
                    cf.w_cur_tick.set(i, tick + h_ticks);
                }
            }
        }
        Ok(())
    }

    fn flux_tick(&self, face: FaceId, what: &'static str, expected: i64, found: i64) -> Result<(), KernelError> {
        if expected == found {
            Ok(())
        } else {
            Err(KernelError::MissingFlux { face, what, expected, found })
        }
    }

    pub fn run_faces(&self, kernel: &FaceKernel, reader_ce: u32, faces: &[FaceId]) -> Result<(), KernelError> {
        let st = self.state;
        let ff = &st.faces;
        for &f in faces {
            let fi = f as usize;
            let face = &self.mesh.faces[fi];
            match *kernel {
                FaceKernel::Gather { stage, tick, cells } => {
                    let Some(right) = face.right else { continue };
                    let stamp = gather_stamp(tick, stage == Stage::Corrector);
                    for (k, me, other) in [(0, face.left, right), (1, right, face.left)] {
                        if st.ownership.local[me as usize] && cells & (1 << self.level(me)) != 0 {
                            let v = self.neighbor_value(reader_ce, me, other, stage, tick)?;
                            ff.nb.set(2 * fi + k, v);
                            ff.nb_stamp.set(2 * fi + k, stamp);
                        }
                    }
                }
                FaceKernel::Reconstruct { tick } => {
                    let side = |c: CellId, off: [f64; 2]| -> Result<f64, KernelError> {
                        let r = self.record(reader_ce, c);
                        check("value", c, tick, r.w_cur_tick)?;
                        check("gradient", c, tick, r.g_cur_tick)?;
                        Ok(r.w_cur + (r.g_cur[0] * off[0] + r.g_cur[1] * off[1]))
                    };
                    let wl = side(face.left, face.left_offset)?;
                    let wr = match face.right {
                        Some(r) => side(r, face.right_offset)?,
                        None => wl,
                    };
                    ff.wl.set(fi, wl);
                    ff.wr.set(fi, wr);
                    ff.state_tick.set(fi, tick);
                }
                FaceKernel::Riemann { stage, tick } => {
                    let found = ff.state_tick.get(fi);
                    if found != tick {
                        return Err(KernelError::MissingFlux { face: f, what: "face states", expected: tick, found });
                    }
                    let lf = self.face_level(f);
                    let start = match stage {
                        Stage::Predictor => tick,
                        Stage::Corrector => tick - (1i64 << lf),
                    };
                    let k = 2 * fi + Self::slot(start, lf);
                    let phi = riemann_flux(ff.wl.get(fi), ff.wr.get(fi), face.normal, &self.physics.model) * face.area;
                    let (dst, dst_tick) = match stage {
                        Stage::Predictor => (&ff.phi0, &ff.phi0_tick),
                        Stage::Corrector => (&ff.phi1, &ff.phi1_tick),
                    };
                    dst.set(k, phi);
                    dst_tick.set(k, start);
                }
            }
        }
        Ok(())
    }
}
