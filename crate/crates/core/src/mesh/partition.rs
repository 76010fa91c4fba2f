//! Weighted greedy region growing over the cell adjacency graph.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};

use super::{CellId, Mesh, MeshError};

/// Assignment of every cell to one rank and one CE. CE ids are global and
/// numbered contiguously rank by rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub domain_of_cell: Vec<u32>,
    pub ce_of_cell: Vec<u32>,
    pub cell_weight: Vec<u64>,
    pub n_ranks: u32,
    pub ce_rank: Vec<u32>,
}

impl Partition {
    pub fn n_ces(&self) -> usize {
        self.ce_rank.len()
    }

    pub fn ces_of_rank(&self, rank: u32) -> impl Iterator<Item = u32> + '_ {
        self.ce_rank
            .iter()
            .enumerate()
            .filter(move |(_, &r)| r == rank)
            .map(|(c, _)| c as u32)
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<(), MeshError> {
        let n = mesh.n_cells();
        if self.domain_of_cell.len() != n || self.ce_of_cell.len() != n || self.cell_weight.len() != n {
            return Err(MeshError::InvalidPartition("length mismatch".into()));
        }
        for c in 0..n {
            let ce = self.ce_of_cell[c] as usize;
            if ce >= self.ce_rank.len() {
                return Err(MeshError::InvalidPartition(format!("cell {c} in unknown CE {ce}")));
            }
            if self.ce_rank[ce] != self.domain_of_cell[c] {
                return Err(MeshError::InvalidPartition(format!("CE {ce} spans several ranks")));
            }
            if self.domain_of_cell[c] >= self.n_ranks {
                return Err(MeshError::InvalidPartition(format!("cell {c} on unknown rank")));
            }
        }
        Ok(())
    }

    /// Total weight per part for the given labelling (`ce_of_cell` or
    /// `domain_of_cell`).
    pub fn part_weights(labels: &[u32], weights: &[u64], n_parts: usize) -> Vec<u64> {
        let mut w = vec![0u64; n_parts];
        for (l, wt) in labels.iter().zip(weights) {
            w[*l as usize] += wt;
        }
        w
    }
}

/// Splits `mesh` into `n_parts` CEs on a single rank.
pub fn partition_mesh(mesh: &Mesh, n_parts: usize, weights: &[u64]) -> Result<Partition, MeshError> {
    partition_distributed(mesh, 1, n_parts, weights)
}

/// Splits `mesh` into `n_ranks` domains, then each domain into
/// `ces_per_rank` CEs.
pub fn partition_distributed(
    mesh: &Mesh,
    n_ranks: usize,
    ces_per_rank: usize,
    weights: &[u64],
) -> Result<Partition, MeshError> {
    let n = mesh.n_cells();
    if weights.len() != n {
        return Err(MeshError::InvalidPartition("one weight per cell required".into()));
    }
    if weights.contains(&0) {
        return Err(MeshError::InvalidPartition("weights must be positive".into()));
    }
    if n_ranks == 0 || ces_per_rank == 0 {
        return Err(MeshError::InvalidPartition("part counts must be >= 1".into()));
    }
    if n_ranks * ces_per_rank > n {
        return Err(MeshError::TooManyParts { cells: n, parts: n_ranks * ces_per_rank });
    }
    let all: Vec<CellId> = (0..n as CellId).collect();
    let domain_of_cell = grow_parts(mesh, &all, weights, n_ranks);
    let mut ce_of_cell = vec![0u32; n];
    let mut ce_rank = Vec::with_capacity(n_ranks * ces_per_rank);
    for rank in 0..n_ranks as u32 {
        let cells: Vec<CellId> = all.iter().copied().filter(|&c| domain_of_cell[c as usize] == rank).collect();
        if cells.len() < ces_per_rank {
            return Err(MeshError::TooManyParts { cells: cells.len(), parts: ces_per_rank });
        }
        let local = grow_parts(mesh, &cells, weights, ces_per_rank);
        let first = ce_rank.len() as u32;
        for &c in &cells {
            ce_of_cell[c as usize] = first + local[c as usize];
        }
        ce_rank.extend(std::iter::repeat_n(rank, ces_per_rank));
    }
    Ok(Partition {
        domain_of_cell,
        ce_of_cell,
        cell_weight: weights.to_vec(),
        n_ranks: n_ranks as u32,
        ce_rank,
    })
}

/// Greedy growth restricted to `subset`. Returns a label per mesh cell
/// (entries outside `subset` are left at 0). Each part starts from the
/// lowest unassigned id and repeatedly absorbs the frontier cell with the
/// most faces into the part, lowest id first.
fn grow_parts(mesh: &Mesh, subset: &[CellId], weights: &[u64], n_parts: usize) -> Vec<u32> {
    let n = mesh.n_cells();
    let mut in_subset = vec![false; n];
    for &c in subset {
        in_subset[c as usize] = true;
    }
    let mut label = vec![0u32; n];
    let mut assigned = vec![false; n];
    let mut remaining_weight: u64 = subset.iter().map(|&c| weights[c as usize]).sum();
    let mut remaining_cells = subset.len();
    let mut next_seed = 0usize; // cursor into subset (sorted ascending)

    for part in 0..n_parts {
        let parts_left = n_parts - part;
        if parts_left == 1 {
            for &c in subset {
                if !assigned[c as usize] {
                    assigned[c as usize] = true;
                    label[c as usize] = part as u32;
                }
            }
            break;
        }
        let target = remaining_weight as f64 / parts_left as f64;
        let max_cells = remaining_cells - (parts_left - 1);
        let mut weight: u64 = 0;
        let mut taken = 0usize;
        let mut frontier: BTreeSet<(Reverse<u32>, CellId)> = BTreeSet::new();
        let mut links: HashMap<CellId, u32> = HashMap::new();

        loop {
            if taken >= max_cells {
                break;
            }
            let pick = match frontier.iter().next().copied() {
                Some(entry) => {
                    frontier.remove(&entry);
                    links.remove(&entry.1);
                    entry.1
                }
                None => {
                    while next_seed < subset.len() && assigned[subset[next_seed] as usize] {
                        next_seed += 1;
                    }
                    match subset.get(next_seed) {
                        Some(&c) => c,
                        None => break,
                    }
                }
            };
            let w = weights[pick as usize];
            if taken > 0 {
                let under = (target - weight as f64).abs();
                let over = (weight as f64 + w as f64 - target).abs();
                if weight as f64 >= target || over > under {
                    break;
                }
            }
            assigned[pick as usize] = true;
            label[pick as usize] = part as u32;
            weight += w;
            taken += 1;
            for nb in mesh.neighbors(pick) {
                if !in_subset[nb as usize] || assigned[nb as usize] {
                    continue;
                }
                let count = links.entry(nb).or_insert(0);
                if *count > 0 {
                    frontier.remove(&(Reverse(*count), nb));
                }
                *count += 1;
                frontier.insert((Reverse(*count), nb));
            }
        }
        remaining_weight -= weight;
        remaining_cells -= taken;
    }
    label
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_mesh, BoundaryKind, MeshSpec};

    fn line(n: usize) -> Mesh {
        generate_mesh(&MeshSpec::line(n, BoundaryKind::Transmissive)).unwrap()
    }

    /// Best contiguous two-way split of a line by exhaustive search.
    fn best_contiguous_split(weights: &[u64]) -> usize {
        let total: u64 = weights.iter().sum();
        (1..weights.len())
            .min_by_key(|&k| {
                let left: u64 = weights[..k].iter().sum();
                (2 * left as i64 - total as i64).unsigned_abs()
            })
            .unwrap()
    }

    #[test]
    fn four_cell_line_two_parts() {
        let m = line(4);
        let p = partition_mesh(&m, 2, &[1, 1, 1, 1]).unwrap();
        let k = best_contiguous_split(&[1, 1, 1, 1]);
        let expect: Vec<u32> = (0..4).map(|c| if c < k { 0 } else { 1 }).collect();
        assert_eq!(p.ce_of_cell, expect);
        assert_eq!(expect, vec![0, 0, 1, 1]);
    }

    #[test]
    fn single_part_is_identity() {
        let m = generate_mesh(&MeshSpec::square(5, BoundaryKind::Periodic)).unwrap();
        let p = partition_mesh(&m, 1, &vec![1; m.n_cells()]).unwrap();
        assert!(p.ce_of_cell.iter().all(|&c| c == 0));
        p.validate(&m).unwrap();
    }

    #[test]
    fn level_weights_balance() {
        let m = line(5);
        let p = partition_mesh(&m, 2, &[4, 1, 1, 1, 1]).unwrap();
        assert_eq!(Partition::part_weights(&p.ce_of_cell, &p.cell_weight, 2), vec![4, 4]);
    }

    #[test]
    fn too_many_parts() {
        let m = line(3);
        assert!(matches!(partition_mesh(&m, 4, &[1, 1, 1]), Err(MeshError::TooManyParts { .. })));
        assert!(partition_mesh(&m, 2, &[1, 0, 1]).is_err());
    }

    #[test]
    fn balanced_on_square_and_deterministic() {
        let spec = MeshSpec::square(16, BoundaryKind::Periodic).refine([0.5, 0.5], [0.75, 0.75], 4);
        let m = generate_mesh(&spec).unwrap();
        let weights: Vec<u64> = m.cells.iter().map(|c| if c.volume < 1e-3 { 4 } else { 1 }).collect();
        for parts in [2, 4, 8, 16] {
            let p = partition_mesh(&m, parts, &weights).unwrap();
            let w = Partition::part_weights(&p.ce_of_cell, &weights, parts);
            let mean = w.iter().sum::<u64>() as f64 / parts as f64;
            for &x in &w {
                assert!((x as f64 - mean).abs() <= 0.25 * mean, "parts={parts} weights={w:?}");
            }
            assert_eq!(p, partition_mesh(&m, parts, &weights).unwrap());
        }
    }

    #[test]
    fn distributed_keeps_ces_on_one_rank() {
        let m = generate_mesh(&MeshSpec::square(8, BoundaryKind::Periodic)).unwrap();
        let p = partition_distributed(&m, 2, 3, &vec![1; m.n_cells()]).unwrap();
        p.validate(&m).unwrap();
        assert_eq!(p.n_ces(), 6);
        assert_eq!(p.ces_of_rank(1).collect::<Vec<_>>(), vec![3, 4, 5]);
    }
}
