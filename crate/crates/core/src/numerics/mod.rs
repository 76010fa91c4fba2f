//! Finite-volume building blocks for a scalar conservation law
//! `dw/dt + div f(w) = 0`: time step estimation, Rusanov fluxes, minmod
//! limiting and the Heun predictor/corrector formulas.

mod fields;
pub mod kernels;

pub use fields::*;
pub use kernels::{CellKernel, FaceKernel, KernelError, Stage};

/// Target Courant number.
pub const CFL_TARGET: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FluxModel {
    /// `f(w) = a w`.
    Advection { velocity: [f64; 2] },
    /// `f(w) = d w²/2`.
    Burgers { direction: [f64; 2] },
}

impl FluxModel {
    #[inline]
    pub fn normal_flux(&self, w: f64, n: [f64; 2]) -> f64 {
        match *self {
            FluxModel::Advection { velocity: a } => (a[0] * n[0] + a[1] * n[1]) * w,
            FluxModel::Burgers { direction: d } => (d[0] * n[0] + d[1] * n[1]) * 0.5 * w * w,
        }
    }

    /// |f'(w)·n|
    #[inline]
    pub fn normal_speed(&self, w: f64, n: [f64; 2]) -> f64 {
        match *self {
            FluxModel::Advection { velocity: a } => (a[0] * n[0] + a[1] * n[1]).abs(),
            FluxModel::Burgers { direction: d } => ((d[0] * n[0] + d[1] * n[1]) * w).abs(),
        }
    }

    /// Bound on the wave speed over all directions (L1 norm of f'(w)).
    pub fn max_speed(&self, w: f64) -> f64 {
        match *self {
            FluxModel::Advection { velocity: a } => a[0].abs() + a[1].abs(),
            FluxModel::Burgers { direction: d } => (d[0].abs() + d[1].abs()) * w.abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Physics {
    pub model: FluxModel,
    /// Step used where the wave speed vanishes.
    pub dt_cap: f64,
    /// Zero the limited gradient everywhere (first-order scheme).
    pub first_order: bool,
}

impl Physics {
    pub fn new(model: FluxModel, dt_cap: f64) -> Self {
        Self { model, dt_cap, first_order: false }
    }
}

pub fn max_time_step(char_length: f64, w: f64, model: &FluxModel, dt_cap: f64) -> f64 {
    let s = model.max_speed(w);
    if s > 0.0 {
        (CFL_TARGET * char_length / s).min(dt_cap)
    } else {
        dt_cap
    }
}

pub fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Rusanov flux through a unit face with normal `n`.
#[inline]
pub fn riemann_flux(wl: f64, wr: f64, n: [f64; 2], model: &FluxModel) -> f64 {
    let s = model.normal_speed(wl, n).max(model.normal_speed(wr, n));
    0.5 * (model.normal_flux(wl, n) + model.normal_flux(wr, n)) - 0.5 * s * (wr - wl)
}

/// Predictor: `W* = W + dt·R`.
#[inline]
pub fn predict(big_w: f64, dt: f64, r: f64) -> f64 {
    big_w + dt * r
}

/// Corrector: `W^{n+1} = W + dt/2·(R0 + R1)`.
#[inline]
pub fn correct(big_w: f64, dt: f64, r0: f64, r1: f64) -> f64 {
    big_w + dt * 0.5 * (r0 + r1)
}

/// Linear-in-time value between the step start `w` and the prediction
/// `w_star`, at fraction `frac` of the step.
#[inline]
pub fn time_interpolate(w: f64, w_star: f64, frac: f64) -> f64 {
    w + frac * (w_star - w)
}

/// Flux integral a coarse cell receives from a face whose finer side took
/// several substeps.
pub fn accumulate_interface_flux(fine_integrals: &[f64]) -> f64 {
    fine_integrals.iter().sum()
}
