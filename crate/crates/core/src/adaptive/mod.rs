//! Temporal levels, the subiteration schedule, the cost model and the
//! sequential reference integrator.

mod program;
mod reference;

pub use program::{iteration_program, subiteration_program, trailing_program, Op, Step};
pub use reference::{classify_in_place, face_level, global_step_heun, reference_integrate, LevelLists, ReferenceRun};

use std::io::Write;

use thiserror::Error;

use crate::numerics::KernelError;

#[derive(Debug, Error)]
pub enum AdaptiveError {
    #[error("minimum time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("subiteration {s} outside [1, {max}]")]
    SubiterationRange { s: u32, max: u32 },
    #[error("levels must be at most 31, got {0}")]
    ThetaTooLarge(u8),
    #[error("iteration {iteration}: {source}")]
    Kernel {
        iteration: u64,
        #[source]
        source: KernelError,
    },
}

/// Per-cell temporal levels of one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelMap {
    pub tau_of_cell: Vec<u8>,
    pub theta: u8,
    pub dt_min: f64,
}

impl LevelMap {
    pub fn uniform(n: usize, dt_min: f64) -> Self {
        Self { tau_of_cell: vec![0; n], theta: 0, dt_min }
    }

    pub fn from_levels(tau_of_cell: Vec<u8>, dt_min: f64) -> Self {
        let theta = tau_of_cell.iter().copied().max().unwrap_or(0);
        Self { tau_of_cell, theta, dt_min }
    }

    /// |Ω(τ)| for τ = 0..=θ.
    pub fn counts(&self) -> Vec<u64> {
        let mut c = vec![0u64; self.theta as usize + 1];
        for &t in &self.tau_of_cell {
            c[t as usize] += 1;
        }
        c
    }

    pub fn cells_at(&self, tau: u8) -> impl Iterator<Item = u32> + '_ {
        self.tau_of_cell.iter().enumerate().filter(move |(_, &t)| t == tau).map(|(i, _)| i as u32)
    }

    pub fn level_cost(&self, tau: u8) -> u64 {
        if tau > self.theta {
            return 0;
        }
        (1u64 << (self.theta - tau)) * self.counts()[tau as usize]
    }

    pub fn cost_ratio(&self) -> f64 {
        let counts: Vec<f64> = self.counts().iter().map(|&c| c as f64).collect();
        cost_ratio_from_shares(&counts, self.theta)
    }

    /// Cell weights for partitioning: 2^(θ−τ).
    pub fn weights(&self) -> Vec<u64> {
        self.tau_of_cell.iter().map(|&t| 1u64 << (self.theta - t)).collect()
    }
}

/// Level of the largest step that divides `dt_max` into powers of two of
/// `dt_min`, capped at `theta_max`.
pub fn raw_level(dt_max: f64, dt_min: f64, theta_max: u8) -> u8 {
    let mut tau = 0u8;
    while tau < theta_max && dt_min * (1u64 << (tau + 1)) as f64 <= dt_max {
        tau += 1;
    }
    tau
}

/// Lowers levels until neighbouring cells differ by at most one. The
/// result is the largest level assignment below `levels` with that
/// property, independent of visiting order.
pub fn smooth_levels(levels: &mut [u8], neighbors: impl Fn(usize) -> Vec<usize>) -> usize {
    let n = levels.len();
    let mut queue: std::collections::VecDeque<usize> = (0..n).collect();
    let mut queued = vec![true; n];
    let mut lowered = 0;
    while let Some(i) = queue.pop_front() {
        queued[i] = false;
        let nbs = neighbors(i);
        for &j in &nbs {
            if levels[j] > levels[i] + 1 {
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

pub fn classify_levels(
    dt_max: &[f64],
    dt_min: f64,
    theta_max: u8,
    neighbors: impl Fn(usize) -> Vec<usize>,
) -> Result<LevelMap, AdaptiveError> {
    if !(dt_min > 0.0) {
        return Err(AdaptiveError::NonPositiveDt(dt_min));
    }
    if theta_max > 31 {
        return Err(AdaptiveError::ThetaTooLarge(theta_max));
    }
    let mut levels: Vec<u8> = dt_max.iter().map(|&d| raw_level(d, dt_min, theta_max)).collect();
    smooth_levels(&mut levels, neighbors);
    Ok(LevelMap::from_levels(levels, dt_min))
}

/// Levels of intensive values `w` (before any step is taken), used to
/// weight cells for partitioning.
pub fn classify_values(
    mesh: &crate::mesh::Mesh,
    physics: &crate::numerics::Physics,
    w: &[f64],
    theta_max: u8,
) -> Result<LevelMap, AdaptiveError> {
    let dt_max: Vec<f64> = mesh
        .cells
        .iter()
        .zip(w)
        .map(|(c, &w)| crate::numerics::max_time_step(c.char_length, w, &physics.model, physics.dt_cap))
        .collect();
    let dt_min = dt_max.iter().copied().fold(f64::INFINITY, f64::min);
    classify_levels(&dt_max, dt_min, theta_max, |i| mesh.neighbors(i as u32).map(|n| n as usize).collect())
}

/// Level advanced by subiteration `s` (1-based) of an iteration with
/// highest level `theta`.
pub fn subiteration_level(s: u32, theta: u8) -> Result<u8, AdaptiveError> {
    let max = 1u32 << theta;
    if s < 1 || s > max {
        return Err(AdaptiveError::SubiterationRange { s, max });
    }
    let mut tau = 0u8;
    for tmp in 1..=theta {
        if (s - 1).is_multiple_of(1u32 << tmp) {
            tau = tmp;
        }
    }
    Ok(tau)
}

/// Cost shares (same unit as the input) for per-level cell shares.
pub fn cost_shares(cell_shares: &[f64], theta: u8) -> Vec<f64> {
    let costs: Vec<f64> =
        cell_shares.iter().enumerate().map(|(tau, &s)| (1u64 << (theta as usize - tau)) as f64 * s).collect();
    let total: f64 = costs.iter().sum();
    let scale: f64 = cell_shares.iter().sum();
    costs.iter().map(|c| c / total * scale).collect()
}

pub fn cost_ratio_from_shares(cell_shares: &[f64], theta: u8) -> f64 {
    let all: f64 = cell_shares.iter().sum();
    let cost: f64 = cell_shares.iter().enumerate().map(|(tau, &s)| (1u64 << (theta as usize - tau)) as f64 * s).sum();
    (1u64 << theta) as f64 * all / cost
}

pub const LEVEL_CSV_HEADER: &str = "iteration,theta,dt_min,tau,cells,cell_share_pct,cost,cost_share_pct,cost_ratio";

/// One CSV row per level.
pub fn write_level_rows<W: Write>(out: &mut W, iteration: u64, map: &LevelMap) -> std::io::Result<()> {
    let counts = map.counts();
    let n: u64 = counts.iter().sum();
    let total_cost: u64 = (0..=map.theta).map(|t| map.level_cost(t)).sum();
    let ratio = map.cost_ratio();
    for (tau, &c) in counts.iter().enumerate() {
        let cost = map.level_cost(tau as u8);
        writeln!(
            out,
            "{iteration},{},{:e},{tau},{c},{:.5},{cost},{:.5},{ratio:.6}",
            map.theta,
            map.dt_min,
            100.0 * c as f64 / n as f64,
            100.0 * cost as f64 / total_cost as f64
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line_nbs(n: usize) -> impl Fn(usize) -> Vec<usize> {
        move |i| {
            let mut v = Vec::new();
            if i > 0 {
                v.push(i - 1);
            }
            if i + 1 < n {
                v.push(i + 1);
            }
            v
        }
    }

    /// Greatest fixed point written as min_j(raw_j + dist(i, j)) on a line.
    fn distance_oracle(raw: &[u8]) -> Vec<u8> {
        (0..raw.len())
            .map(|i| (0..raw.len()).map(|j| raw[j] as usize + i.abs_diff(j)).min().unwrap() as u8)
            .collect()
    }

    #[test]
    fn raw_level_example() {
        assert_eq!(raw_level(5.0, 1.0, 3), 2);
        assert_eq!(raw_level(100.0, 1.0, 3), 3);
        assert_eq!(raw_level(1.0, 1.0, 3), 0);
    }

    #[test]
    fn uniform_is_level_zero() {
        let m = classify_levels(&[0.3; 6], 0.3, 4, line_nbs(6)).unwrap();
        assert_eq!(m.theta, 0);
        assert!(m.tau_of_cell.iter().all(|&t| t == 0));
        assert!(classify_levels(&[0.3; 2], 0.0, 4, line_nbs(2)).is_err());
    }

    #[test]
    fn smoothing_three_cell_line() {
        let mut lv = vec![0, 3, 3];
        smooth_levels(&mut lv, line_nbs(3));
        assert_eq!(lv, vec![0, 1, 2]);
        assert_eq!(lv, distance_oracle(&[0, 3, 3]));
    }

    #[test]
    fn schedule_examples() {
        let seq = |theta: u8| (1..=1u32 << theta).map(|s| subiteration_level(s, theta).unwrap()).collect::<Vec<_>>();
        assert_eq!(seq(3), vec![3, 0, 1, 0, 2, 0, 1, 0]);
        assert_eq!(seq(0), vec![0]);
        // brute force: τ = number of trailing zero bits of s−1, capped at θ
        let oracle: Vec<u8> =
            (0..16u32).map(|k| if k == 0 { 4 } else { k.trailing_zeros().min(4) as u8 }).collect();
        assert_eq!(seq(4), oracle);
        assert!(subiteration_level(0, 2).is_err());
        assert!(subiteration_level(5, 2).is_err());
    }

    #[test]
    fn visits_per_level() {
        for theta in 0..=5u8 {
            let mut visits = vec![0u32; theta as usize + 1];
            for s in 1..=1u32 << theta {
                let tau = subiteration_level(s, theta).unwrap();
                for t in 0..=tau {
                    visits[t as usize] += 1;
                }
            }
            for tau in 0..=theta {
                assert_eq!(visits[tau as usize], 1 << (theta - tau));
            }
        }
    }

    #[test]
    fn integer_costs() {
        let m = LevelMap::from_levels(vec![0, 1, 1, 2, 2, 2, 2], 1.0);
        assert_eq!((m.level_cost(0), m.level_cost(1), m.level_cost(2)), (4, 4, 4));
        assert!((m.cost_ratio() - 28.0 / 12.0).abs() < 1e-15);
        assert_eq!(LevelMap::uniform(5, 1.0).cost_ratio(), 1.0);
    }

    #[test]
    fn csv_rows() {
        let m = LevelMap::from_levels(vec![0, 1, 1, 1], 0.5);
        let mut out = Vec::new();
        write_level_rows(&mut out, 3, &m).unwrap();
        let text = String::from_utf8(out).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].starts_with("3,1,5e-1,0,1,25.00000,2,40.00000,"));
    }

    proptest! {
        #[test]
        fn smoothing_matches_distance_oracle(raw in proptest::collection::vec(0u8..6, 1..40)) {
            let mut lv = raw.clone();
            smooth_levels(&mut lv, line_nbs(raw.len()));
            prop_assert_eq!(&lv, &distance_oracle(&raw));
            for w in lv.windows(2) {
                prop_assert!(w[0].abs_diff(w[1]) <= 1);
            }
        }

        #[test]
        fn cost_ratio_at_least_one(counts in proptest::collection::vec(0u32..1000, 1..6)) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let mut levels = Vec::new();
            for (t, &c) in counts.iter().enumerate() {
                levels.extend(std::iter::repeat_n(t as u8, c as usize));
            }
            let m = LevelMap::from_levels(levels, 1.0);
            let r = m.cost_ratio();
            prop_assert!(r >= 1.0);
            prop_assert_eq!(r == 1.0, m.tau_of_cell.iter().all(|&t| t == 0));
        }
    }
}
