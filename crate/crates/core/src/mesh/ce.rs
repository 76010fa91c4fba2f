//! Computation elements: per-subdomain cell and face components.

use std::collections::{BTreeMap, BTreeSet};

use super::{CellId, FaceId, Mesh, MeshError, Partition};

/// Local mirror of the cells of `foreign_ce` (on another rank) that touch
/// `local_ce`. Slot `i` holds `cells[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GhostComponent {
    pub local_ce: u32,
    pub foreign_ce: u32,
    pub foreign_rank: u32,
    pub cells: Vec<CellId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComputationElement {
    pub id: u32,
    pub rank: u32,
    pub inner_cells: Vec<CellId>,
    pub border_cells: Vec<CellId>,
    /// Border cells adjacent to a cell owned by another rank.
    pub mpi_border_cells: Vec<CellId>,
    /// Faces whose cells all belong to this CE, boundary faces included.
    pub intra_faces: Vec<FaceId>,
    /// Faces shared with each neighbouring CE (same or other rank).
    pub inter_ce_faces: BTreeMap<u32, Vec<FaceId>>,
    /// For every foreign-rank neighbour CE, the cells this CE must send
    /// to it, ascending. The receiving side's ghost component lists the
    /// same cells.
    pub mpi_send: BTreeMap<u32, Vec<CellId>>,
    pub ghost_components: Vec<GhostComponent>,
}

/// Bitmask of temporal levels occurring in each component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Occupancy {
    pub inner: u32,
    pub border: u32,
}

impl Occupancy {
    /// Levels that occur only in the inner component.
    pub fn inner_only(&self) -> u32 {
        self.inner & !self.border
    }

    pub fn any(&self) -> u32 {
        self.inner | self.border
    }
}

impl ComputationElement {
    pub fn n_cells(&self) -> usize {
        self.inner_cells.len() + self.border_cells.len()
    }

    pub fn occupancy(&self, levels: &[u8]) -> Occupancy {
        let mask = |cells: &[CellId]| cells.iter().fold(0u32, |m, &c| m | 1 << levels[c as usize]);
        Occupancy { inner: mask(&self.inner_cells), border: mask(&self.border_cells) }
    }

    pub fn neighbor_ces(&self) -> impl Iterator<Item = u32> + '_ {
        self.inter_ce_faces.keys().copied()
    }
}

#[derive(Clone, Debug)]
pub struct Topology {
    pub ces: Vec<ComputationElement>,
    pub ce_of_cell: Vec<u32>,
    pub rank_of_ce: Vec<u32>,
    pub n_ranks: u32,
}

impl Topology {
    pub fn build(mesh: &Mesh, partition: &Partition) -> Result<Self, MeshError> {
        partition.validate(mesh)?;
        let n_ces = partition.n_ces();
        let ce_of = &partition.ce_of_cell;
        let rank_of_ce = partition.ce_rank.clone();

        let mut cells_of: Vec<Vec<CellId>> = vec![Vec::new(); n_ces];
        for c in 0..mesh.n_cells() as CellId {
            cells_of[ce_of[c as usize] as usize].push(c);
        }
        let mut ces = Vec::with_capacity(n_ces);
        let mut send_sets: Vec<BTreeMap<u32, BTreeSet<CellId>>> = vec![BTreeMap::new(); n_ces];
        for (id, cells) in cells_of.iter().enumerate() {
            if cells.is_empty() {
                return Err(MeshError::InvalidPartition(format!("CE {id} is empty")));
            }
            let rank = rank_of_ce[id];
            let mut inner = Vec::new();
            let mut border = Vec::new();
            let mut mpi_border = Vec::new();
            for &c in cells {
                let mut foreign_ce = false;
                let mut foreign_rank = false;
                for nb in mesh.neighbors(c) {
                    let nce = ce_of[nb as usize];
                    if nce as usize != id {
                        foreign_ce = true;
                        if rank_of_ce[nce as usize] != rank {
                            foreign_rank = true;
                            send_sets[id].entry(nce).or_default().insert(c);
                        }
                    }
                }
                if foreign_ce {
                    border.push(c);
                } else {
                    inner.push(c);
                }
                if foreign_rank {
                    mpi_border.push(c);
                }
            }
            ces.push(ComputationElement {
                id: id as u32,
                rank,
                inner_cells: inner,
                border_cells: border,
                mpi_border_cells: mpi_border,
                intra_faces: Vec::new(),
                inter_ce_faces: BTreeMap::new(),
                mpi_send: BTreeMap::new(),
                ghost_components: Vec::new(),
            });
        }

        for (fid, f) in mesh.faces.iter().enumerate() {
            let a = ce_of[f.left as usize];
            match f.right.map(|r| ce_of[r as usize]) {
                Some(b) if b != a => {
                    ces[a as usize].inter_ce_faces.entry(b).or_default().push(fid as FaceId);
                    ces[b as usize].inter_ce_faces.entry(a).or_default().push(fid as FaceId);
                }
                _ => ces[a as usize].intra_faces.push(fid as FaceId),
            }
        }

        for (id, sets) in send_sets.into_iter().enumerate() {
            for (dest, cells) in sets {
                let cells: Vec<CellId> = cells.into_iter().collect();
                ces[dest as usize].ghost_components.push(GhostComponent {
                    local_ce: dest,
                    foreign_ce: id as u32,
                    foreign_rank: rank_of_ce[id],
                    cells: cells.clone(),
                });
                ces[id].mpi_send.insert(dest, cells);
            }
        }
        for ce in &mut ces {
            ce.ghost_components.sort_by_key(|g| g.foreign_ce);
        }

        let topo = Topology { ces, ce_of_cell: ce_of.clone(), rank_of_ce, n_ranks: partition.n_ranks };
        topo.validate(mesh)?;
        Ok(topo)
    }

    pub fn n_ces(&self) -> usize {
        self.ces.len()
    }

    pub fn ces_of_rank(&self, rank: u32) -> impl Iterator<Item = &ComputationElement> + '_ {
        self.ces.iter().filter(move |c| c.rank == rank)
    }

    /// CE adjacency lists (through shared faces), ascending.
    pub fn ce_graph(&self) -> Vec<Vec<u32>> {
        self.ces.iter().map(|c| c.neighbor_ces().collect()).collect()
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<(), MeshError> {
        let bad = |m: String| Err(MeshError::Invariant(m));
        let mut seen = vec![0u8; mesh.n_cells()];
        for ce in &self.ces {
            for &c in ce.inner_cells.iter().chain(&ce.border_cells) {
                seen[c as usize] += 1;
                if self.ce_of_cell[c as usize] != ce.id {
                    return bad(format!("cell {c} listed in CE {} but owned by another", ce.id));
                }
            }
            for &c in &ce.inner_cells {
                if mesh.neighbors(c).any(|n| self.ce_of_cell[n as usize] != ce.id) {
                    return bad(format!("inner cell {c} of CE {} touches another CE", ce.id));
                }
            }
            if !ce.mpi_border_cells.iter().all(|c| ce.border_cells.binary_search(c).is_ok()) {
                return bad(format!("CE {} has MPI-border cells outside its border", ce.id));
            }
            for (&nb, faces) in &ce.inter_ce_faces {
                let mirror = self.ces[nb as usize].inter_ce_faces.get(&ce.id);
                if mirror != Some(faces) {
                    return bad(format!("inter-CE faces of {} and {nb} are not symmetric", ce.id));
                }
                for &f in faces {
                    let face = &mesh.faces[f as usize];
                    let mine = if self.ce_of_cell[face.left as usize] == ce.id { face.left } else { face.right.unwrap() };
                    if ce.border_cells.binary_search(&mine).is_err() {
                        return bad(format!("inter-CE face {f} does not start at a border cell"));
                    }
                }
            }
            for g in &ce.ghost_components {
                let owner = &self.ces[g.foreign_ce as usize];
                if owner.mpi_send.get(&ce.id) != Some(&g.cells) {
                    return bad(format!("ghost component ({}, {}) does not mirror its owner", ce.id, g.foreign_ce));
                }
                if !g.cells.iter().all(|c| owner.mpi_border_cells.binary_search(c).is_ok()) {
                    return bad(format!("ghost component ({}, {}) holds non-MPI-border cells", ce.id, g.foreign_ce));
                }
            }
        }
        if let Some(c) = seen.iter().position(|&s| s != 1) {
            return bad(format!("cell {c} is covered {} times", seen[c]));
        }
        let mut face_refs = vec![0u8; mesh.n_faces()];
        for ce in &self.ces {
            for &f in &ce.intra_faces {
                face_refs[f as usize] += 2;
            }
            for faces in ce.inter_ce_faces.values() {
                for &f in faces {
                    face_refs[f as usize] += 1;
                }
            }
        }
        if let Some(f) = face_refs.iter().position(|&r| r != 2) {
            return bad(format!("face {f} is not covered exactly once (or duplicated once across CEs)"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_mesh, partition_distributed, partition_mesh, BoundaryKind, MeshSpec};

    #[test]
    fn single_ce_has_no_border() {
        let m = generate_mesh(&MeshSpec::square(4, BoundaryKind::Periodic)).unwrap();
        let p = partition_mesh(&m, 1, &vec![1; m.n_cells()]).unwrap();
        let t = Topology::build(&m, &p).unwrap();
        assert!(t.ces[0].border_cells.is_empty());
        assert!(t.ces[0].ghost_components.is_empty());
        assert_eq!(t.ces[0].intra_faces.len(), m.n_faces());
    }

    #[test]
    fn four_cell_line_two_ces() {
        let m = generate_mesh(&MeshSpec::line(4, BoundaryKind::Transmissive)).unwrap();
        let p = partition_mesh(&m, 2, &[1; 4]).unwrap();
        let t = Topology::build(&m, &p).unwrap();
        assert_eq!(t.ces[0].border_cells, vec![1]);
        assert_eq!(t.ces[1].border_cells, vec![2]);
        assert_eq!(t.ces[0].inter_ce_faces[&1].len(), 1);
        assert_eq!(t.ces[1].inter_ce_faces[&0], t.ces[0].inter_ce_faces[&1]);
    }

    #[test]
    fn ghosts_only_across_rank_boundaries() {
        // 2 ranks x 2 CEs on a transmissive square, as in the two-process layout
        let m = generate_mesh(&MeshSpec::square(8, BoundaryKind::Transmissive)).unwrap();
        let p = partition_distributed(&m, 2, 2, &vec![1; m.n_cells()]).unwrap();
        let t = Topology::build(&m, &p).unwrap();
        for ce in &t.ces {
            let cross: BTreeSet<u32> =
                ce.neighbor_ces().filter(|&n| t.rank_of_ce[n as usize] != ce.rank).collect();
            let ghosts: BTreeSet<u32> = ce.ghost_components.iter().map(|g| g.foreign_ce).collect();
            assert_eq!(cross, ghosts, "CE {}", ce.id);
            for g in &ce.ghost_components {
                assert_ne!(g.foreign_rank, ce.rank);
                assert!(!g.cells.is_empty());
            }
        }
        assert!(t.ces.iter().any(|c| !c.ghost_components.is_empty()));
        // same-rank neighbours never get ghosts
        assert!(t.ces.iter().any(|c| c.neighbor_ces().any(|n| t.rank_of_ce[n as usize] == c.rank)));
    }

    #[test]
    fn occupancy_masks() {
        let m = generate_mesh(&MeshSpec::line(4, BoundaryKind::Transmissive)).unwrap();
        let p = partition_mesh(&m, 2, &[1; 4]).unwrap();
        let t = Topology::build(&m, &p).unwrap();
        let levels = [0u8, 1, 1, 2];
        let o = t.ces[0].occupancy(&levels);
        assert_eq!((o.inner, o.border, o.inner_only()), (0b1, 0b10, 0b1));
    }
}
