//! The kernel sequence of one iteration. The reference integrator, the task
//! generator and the distributed driver all walk this same list, so they
//! cannot disagree on ordering.

use crate::numerics::{CellKernel, FaceKernel, Stage};
use crate::numerics::tick;

use super::subiteration_level;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Cells(CellKernel),
    Faces(FaceKernel),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Cells(k) => k.name(),
            Op::Faces(k) => k.name(),
        }
    }

    /// Reads the values of neighbouring cells (possibly ghosts).
    pub fn reads_neighbors(&self) -> bool {
        matches!(
            self,
            Op::Faces(FaceKernel::Gather { .. }) | Op::Faces(FaceKernel::Reconstruct { .. })
        )
    }

    /// Changes a cell field that neighbours read.
    pub fn publishes(&self) -> bool {
        matches!(
            self,
            Op::Cells(
                CellKernel::IntCorrect { .. }
                    | CellKernel::FinalUpdate { .. }
                    | CellKernel::Interpolate { .. }
                    | CellKernel::Reposition { .. }
                    | CellKernel::Limit { .. }
                    | CellKernel::IntPredict { .. }
            )
        )
    }

    /// Reads face data (the cells-from-faces pattern).
    pub fn reads_faces(&self) -> bool {
        matches!(
            self,
            Op::Cells(
                CellKernel::FluxSum { .. } | CellKernel::Correct { .. } | CellKernel::Gradient { .. } | CellKernel::Limit { .. }
            )
        )
    }
}

/// One kernel applied to every cell (or face) whose level is in `levels`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub op: Op,
    /// Bitmask of cell levels, or of face levels for face kernels.
    pub levels: u32,
    /// 1-based subiteration, `2^θ + 1` for the trailing correction and
    /// `2^θ + 2` for the final update.
    pub subiteration: u32,
}

fn up_to(tau: u8) -> u32 {
    (1u32 << (tau + 1)) - 1
}

fn only(tau: u8) -> u32 {
    1u32 << tau
}

/// Steps of subiteration `s` (1-based) of iteration `iteration`.
pub fn subiteration_program(iteration: u64, s: u32, theta: u8) -> Vec<Step> {
    let tau = subiteration_level(s, theta).expect("subiteration in range");
    let k = s - 1;
    let t = tick(iteration, k);
    let mut out = Vec::with_capacity(24);
    let mut push = |op: Op, levels: u32| out.push(Step { op, levels, subiteration: s });
    use CellKernel as C;
    use FaceKernel as F;

    if s > 1 {
        push(Op::Cells(C::Correct { tick: t }), up_to(tau));
        push(Op::Cells(C::IntCorrect { tick: t }), up_to(tau));
    }
    if tau < theta {
        push(Op::Cells(C::Interpolate { tick: t, halves: 1 }), only(tau + 1));
        push(Op::Cells(C::Reposition { tick: t, halves: 1 }), only(tau + 1));
    }
    push(Op::Faces(F::Gather { stage: Stage::Predictor, tick: t, cells: up_to(tau) }), up_to(tau));
    push(Op::Cells(C::Gradient { stage: Stage::Predictor, tick: t }), up_to(tau));
    push(Op::Cells(C::Limit { stage: Stage::Predictor, tick: t }), up_to(tau));
    push(Op::Faces(F::Reconstruct { tick: t }), up_to(tau));
    push(Op::Faces(F::Riemann { stage: Stage::Predictor, tick: t }), up_to(tau));
    push(Op::Cells(C::FluxSum { tick: t }), up_to(tau));
    push(Op::Cells(C::ExtPredict { tick: t }), up_to(tau));
    push(Op::Cells(C::IntPredict { tick: t }), up_to(tau));
    if tau < theta {
        let te = t + (1i64 << tau);
        push(Op::Cells(C::Interpolate { tick: te, halves: 2 }), only(tau + 1));
        push(Op::Cells(C::Reposition { tick: te, halves: 2 }), only(tau + 1));
    }
    for tp in (0..=tau).rev() {
        let tc = t + (1i64 << tp);
        push(Op::Faces(F::Gather { stage: Stage::Corrector, tick: tc, cells: only(tp) }), only(tp) | only(tp) >> 1);
        push(Op::Cells(C::Gradient { stage: Stage::Corrector, tick: tc }), only(tp));
        push(Op::Cells(C::Limit { stage: Stage::Corrector, tick: tc }), only(tp));
        push(Op::Faces(F::Reconstruct { tick: tc }), only(tp));
        push(Op::Faces(F::Riemann { stage: Stage::Corrector, tick: tc }), only(tp));
        if tp > 0 {
            let tm = t + (1i64 << (tp - 1));
            push(Op::Cells(C::Interpolate { tick: tm, halves: 1 }), only(tp));
            push(Op::Cells(C::Reposition { tick: tm, halves: 1 }), only(tp));
        }
    }
    out
}

/// Correction closing the last step of every level (subiteration 2^θ+1).
pub fn trailing_program(iteration: u64, theta: u8) -> Vec<Step> {
    let s = (1u32 << theta) + 1;
    let t = tick(iteration, 1u32 << theta);
    vec![
        Step { op: Op::Cells(CellKernel::Correct { tick: t }), levels: up_to(theta), subiteration: s },
        Step { op: Op::Cells(CellKernel::IntCorrect { tick: t }), levels: up_to(theta), subiteration: s },
    ]
}

/// Subiterations 1..=2^θ, the trailing correction and the final intensive
/// update, in order.
pub fn iteration_program(iteration: u64, theta: u8) -> Vec<Step> {
    let mut out = Vec::new();
    for s in 1..=1u32 << theta {
        out.extend(subiteration_program(iteration, s, theta));
    }
    out.extend(trailing_program(iteration, theta));
    out.push(Step {
        op: Op::Cells(CellKernel::FinalUpdate { next_tick: tick(iteration + 1, 0) }),
        levels: up_to(theta),
        subiteration: (1u32 << theta) + 2,
    });
    out
}
