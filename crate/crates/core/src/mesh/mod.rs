//! Unstructured cell/face meshes, weighted partitioning and computation
//! element (CE) topology.
//!
//! The generator builds axis-aligned meshes with nonconforming refinement:
//! a refined block is connected to its coarse neighbours through split faces,
//! so the resulting cell/face graph is a genuinely unstructured one and
//! nothing downstream relies on the lattice it came from.

mod ce;
mod io;
mod partition;

pub use ce::{ComputationElement, GhostComponent, Occupancy, Topology};
pub use io::{read_mesh, write_mesh, MESH_MAGIC, MESH_VERSION};
pub use partition::{partition_distributed, partition_mesh, Partition};

use thiserror::Error;

pub type CellId = u32;
pub type FaceId = u32;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh spec: {0}")]
    InvalidSpec(String),
    #[error("refinement regions overlap with conflicting scales {0} and {1}")]
    ConflictingRefinement(u32, u32),
    #[error("cannot split {cells} cells into {parts} parts")]
    TooManyParts { cells: usize, parts: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("mesh invariant violated: {0}")]
    Invariant(String),
    #[error("mesh file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Periodic,
    Transmissive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub volume: f64,
    pub centroid: [f64; 2],
    pub char_length: f64,
}

/// A face between `left` and `right`. Boundary faces have `right == None`
/// and an outward normal; periodic faces join two cells across the domain
/// edge and carry `boundary == Some(Periodic)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub left: CellId,
    pub right: Option<CellId>,
    pub boundary: Option<BoundaryKind>,
    pub area: f64,
    /// Unit normal oriented from `left` to `right` (outward for boundary faces).
    pub normal: [f64; 2],
    /// Face centroid minus the left cell centroid.
    pub left_offset: [f64; 2],
    /// Face centroid minus the right cell centroid, in the right cell's
    /// periodic image. Equal to `left_offset` for boundary faces.
    pub right_offset: [f64; 2],
}

impl Face {
    /// The cell on the other side of `cell`, if any.
    pub fn other(&self, cell: CellId) -> Option<CellId> {
        if self.left == cell {
            self.right
        } else {
            Some(self.left)
        }
    }

    /// +1 when the normal points out of `cell`, -1 otherwise.
    pub fn sign_for(&self, cell: CellId) -> f64 {
        if self.left == cell {
            1.0
        } else {
            -1.0
        }
    }

    pub fn offset_for(&self, cell: CellId) -> [f64; 2] {
        if self.left == cell {
            self.left_offset
        } else {
            self.right_offset
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub dim: u8,
    pub cells: Vec<Cell>,
    pub faces: Vec<Face>,
    /// Per cell, its faces in ascending id order.
    pub cell_faces: Vec<Vec<FaceId>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineRegion {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub scale: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshSpec {
    pub dim: u8,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub base: [usize; 2],
    pub regions: Vec<RefineRegion>,
    pub boundary: BoundaryKind,
}

impl MeshSpec {
    pub fn line(n: usize, boundary: BoundaryKind) -> Self {
        Self {
            dim: 1,
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
            base: [n, 1],
            regions: Vec::new(),
            boundary,
        }
    }

    pub fn square(n: usize, boundary: BoundaryKind) -> Self {
        Self {
            dim: 2,
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
            base: [n, n],
            regions: Vec::new(),
            boundary,
        }
    }

    pub fn refine(mut self, lo: [f64; 2], hi: [f64; 2], scale: u32) -> Self {
        self.regions.push(RefineRegion { lo, hi, scale });
        self
    }
}

const GEOM_EPS: f64 = 1e-12;

impl Mesh {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// Face-neighbour cells of `cell` in face order (boundary faces skipped).
    pub fn neighbors(&self, cell: CellId) -> impl Iterator<Item = CellId> + '_ {
        self.cell_faces[cell as usize]
            .iter()
            .filter_map(move |&f| self.faces[f as usize].other(cell))
    }

    /// Sum of signed `area * normal` over the faces of `cell`.
    pub fn closure_residual(&self, cell: CellId) -> [f64; 2] {
        let mut acc = [0.0; 2];
        for &f in &self.cell_faces[cell as usize] {
            let face = &self.faces[f as usize];
            let s = face.sign_for(cell);
            acc[0] += s * face.area * face.normal[0];
            acc[1] += s * face.area * face.normal[1];
        }
        acc
    }

    /// Stable fingerprint of topology and geometry, used to reject comparing
    /// snapshots taken on different meshes.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the raw bits.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.dim as u64);
        eat(self.cells.len() as u64);
        for c in &self.cells {
            eat(c.volume.to_bits());
            eat(c.centroid[0].to_bits());
            eat(c.centroid[1].to_bits());
        }
        eat(self.faces.len() as u64);
        for f in &self.faces {
            eat(f.left as u64);
            eat(f.right.map_or(u64::MAX, |r| r as u64));
            eat(f.area.to_bits());
        }
        h
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.cells.len() as u32;
        if self.cell_faces.len() != self.cells.len() {
            return Err(MeshError::Invariant("cell_faces length mismatch".into()));
        }
        for (i, c) in self.cells.iter().enumerate() {
            if !(c.volume > 0.0) || !(c.char_length > 0.0) {
                return Err(MeshError::Invariant(format!("cell {i} has non-positive size")));
            }
        }
        let mut refs = vec![0u32; self.faces.len()];
        for (c, faces) in self.cell_faces.iter().enumerate() {
            if faces.windows(2).any(|w| w[0] >= w[1]) {
                return Err(MeshError::Invariant(format!("cell {c} faces not sorted")));
            }
            for &f in faces {
                let face = self
                    .faces
                    .get(f as usize)
                    .ok_or_else(|| MeshError::Invariant(format!("cell {c} references face {f}")))?;
                if face.left != c as u32 && face.right != Some(c as u32) {
                    return Err(MeshError::Invariant(format!("face {f} does not touch cell {c}")));
                }
                refs[f as usize] += 1;
            }
        }
        for (i, f) in self.faces.iter().enumerate() {
            if f.left >= n || f.right.is_some_and(|r| r >= n) {
                return Err(MeshError::Invariant(format!("face {i} references missing cell")));
            }
            if !(f.area > 0.0) {
                return Err(MeshError::Invariant(format!("face {i} has non-positive area")));
            }
            let norm = (f.normal[0] * f.normal[0] + f.normal[1] * f.normal[1]).sqrt();
            if (norm - 1.0).abs() > GEOM_EPS {
                return Err(MeshError::Invariant(format!("face {i} normal is not unit")));
            }
            let expected = if f.right.is_some() { 2 } else { 1 };
            if refs[i] != expected {
                return Err(MeshError::Invariant(format!(
                    "face {i} referenced by {} cells, expected {expected}",
                    refs[i]
                )));
            }
            match (f.right, f.boundary) {
                (None, Some(BoundaryKind::Transmissive)) => {}
                (Some(_), None) | (Some(_), Some(BoundaryKind::Periodic)) => {}
                _ => {
                    return Err(MeshError::Invariant(format!("face {i} has inconsistent boundary tag")))
                }
            }
        }
        for c in 0..n {
            let r = self.closure_residual(c);
            if r[0].abs() > GEOM_EPS || r[1].abs() > GEOM_EPS {
                return Err(MeshError::Invariant(format!("cell {c} is not closed: {r:?}")));
            }
        }
        Ok(())
    }
}

fn is_pow2(s: u32) -> bool {
    s >= 1 && s.is_power_of_two()
}

struct Lattice {
    dim: u8,
    nx: usize,
    dy: f64,
    lo: [f64; 2],
    scale: Vec<u32>,
    first_cell: Vec<u32>,
}

impl Lattice {
    fn sub_y(&self, s: u32) -> u32 {
        if self.dim == 2 {
            s
        } else {
            1
        }
    }

    fn base(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    fn cell(&self, base: usize, a: u32, b: u32) -> CellId {
        let s = self.scale[base];
        self.first_cell[base] + b * s + a
    }

    /// Extent of a sub-cell of `base` in y (the full face height in 1D).
    fn sub_dy(&self, base: usize) -> f64 {
        if self.dim == 2 {
            self.dy / self.scale[base] as f64
        } else {
            1.0
        }
    }
}

/// Builds the mesh described by `spec`.
pub fn generate_mesh(spec: &MeshSpec) -> Result<Mesh, MeshError> {
    if spec.dim != 1 && spec.dim != 2 {
        return Err(MeshError::InvalidSpec(format!("dimension {} not in {{1,2}}", spec.dim)));
    }
    let nx = spec.base[0];
    let ny = if spec.dim == 2 { spec.base[1] } else { 1 };
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidSpec("base resolution must be >= 1".into()));
    }
    let axes = spec.dim as usize;
    for a in 0..axes {
        if !(spec.hi[a] > spec.lo[a]) {
            return Err(MeshError::InvalidSpec("empty box".into()));
        }
    }
    for r in &spec.regions {
        if !is_pow2(r.scale) {
            return Err(MeshError::InvalidSpec(format!("refinement scale {} is not a power of 2", r.scale)));
        }
        for a in 0..axes {
            if r.lo[a] < spec.lo[a] - GEOM_EPS || r.hi[a] > spec.hi[a] + GEOM_EPS || r.lo[a] > r.hi[a] {
                return Err(MeshError::InvalidSpec("refinement region outside the box".into()));
            }
        }
    }

    let dx = (spec.hi[0] - spec.lo[0]) / nx as f64;
    let dy = if spec.dim == 2 { (spec.hi[1] - spec.lo[1]) / ny as f64 } else { 1.0 };
    let mut scale = vec![1u32; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let cx = spec.lo[0] + (i as f64 + 0.5) * dx;
            let cy = spec.lo[1] + (j as f64 + 0.5) * dy;
            let mut chosen: Option<u32> = None;
            for r in &spec.regions {
                let inside = cx >= r.lo[0] && cx <= r.hi[0] && (spec.dim == 1 || (cy >= r.lo[1] && cy <= r.hi[1]));
                if inside {
                    match chosen {
                        Some(s) if s != r.scale => return Err(MeshError::ConflictingRefinement(s, r.scale)),
                        _ => chosen = Some(r.scale),
                    }
                }
            }
            scale[j * nx + i] = chosen.unwrap_or(1);
        }
    }

    let mut lat = Lattice {
        dim: spec.dim,
        nx,
        dy,
        lo: spec.lo,
        scale,
        first_cell: vec![0; nx * ny],
    };

    let mut cells = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let base = lat.base(i, j);
            lat.first_cell[base] = cells.len() as u32;
            let s = lat.scale[base];
            let sy = lat.sub_y(s);
            let sdx = dx / s as f64;
            let sdy = lat.sub_dy(base);
            for b in 0..sy {
                for a in 0..s {
                    let cx = spec.lo[0] + i as f64 * dx + (a as f64 + 0.5) * sdx;
                    let cy = if spec.dim == 2 {
                        spec.lo[1] + j as f64 * dy + (b as f64 + 0.5) * sdy
                    } else {
                        0.0
                    };
                    let (volume, h) = if spec.dim == 2 { (sdx * sdy, sdx.min(sdy)) } else { (sdx, sdx) };
                    cells.push(Cell { volume, centroid: [cx, cy], char_length: h });
                }
            }
        }
    }

    let mut faces: Vec<Face> = Vec::new();
    let periodic = spec.boundary == BoundaryKind::Periodic;
    let lx = spec.hi[0] - spec.lo[0];
    let ly = spec.hi[1] - spec.lo[1];

    let push_pair = |faces: &mut Vec<Face>, left: CellId, right: CellId, area: f64, normal: [f64; 2], fc: [f64; 2], shift: [f64; 2], wrapped: bool| {
        let cl = cells[left as usize].centroid;
        let cr = cells[right as usize].centroid;
        faces.push(Face {
            left,
            right: Some(right),
            boundary: if wrapped { Some(BoundaryKind::Periodic) } else { None },
            area,
            normal,
            left_offset: [fc[0] - cl[0], fc[1] - cl[1]],
            right_offset: [fc[0] - shift[0] - cr[0], fc[1] - shift[1] - cr[1]],
        });
    };
    let push_boundary = |faces: &mut Vec<Face>, cell: CellId, area: f64, normal: [f64; 2], fc: [f64; 2]| {
        let c = cells[cell as usize].centroid;
        let off = [fc[0] - c[0], fc[1] - c[1]];
        faces.push(Face {
            left: cell,
            right: None,
            boundary: Some(BoundaryKind::Transmissive),
            area,
            normal,
            left_offset: off,
            right_offset: off,
        });
    };

    let yc = |lat: &Lattice, j: usize, base: usize, b: u32| -> f64 {
        if lat.dim == 2 {
            lat.lo[1] + j as f64 * lat.dy + (b as f64 + 0.5) * lat.sub_dy(base)
        } else {
            0.0
        }
    };

    for j in 0..ny {
        for i in 0..nx {
            let base = lat.base(i, j);
            let s = lat.scale[base];
            let sy = lat.sub_y(s);
            let sdx = dx / s as f64;
            let sdy = lat.sub_dy(base);
            // x-normal faces inside the base cell
            for b in 0..sy {
                for a in 0..s.saturating_sub(1) {
                    let fx = spec.lo[0] + i as f64 * dx + (a + 1) as f64 * sdx;
                    push_pair(&mut faces, lat.cell(base, a, b), lat.cell(base, a + 1, b), sdy, [1.0, 0.0], [fx, yc(&lat, j, base, b)], [0.0, 0.0], false);
                }
            }
            if spec.dim == 2 {
                for b in 0..s - 1 {
                    for a in 0..s {
                        let fy = spec.lo[1] + j as f64 * dy + (b + 1) as f64 * sdy;
                        let fx = spec.lo[0] + i as f64 * dx + (a as f64 + 0.5) * sdx;
                        push_pair(&mut faces, lat.cell(base, a, b), lat.cell(base, a, b + 1), sdx, [0.0, 1.0], [fx, fy], [0.0, 0.0], false);
                    }
                }
            }
        }
    }

    // x-direction edges between base cells (and the x boundaries)
    for j in 0..ny {
        for i in 0..=nx {
            let x_face = spec.lo[0] + i as f64 * dx;
            let (left_base, right_base, shift, wrapped) = if i == 0 {
                if periodic {
                    continue; // handled at i == nx
                }
                (None, Some(lat.base(0, j)), [0.0, 0.0], false)
            } else if i == nx {
                if periodic {
                    (Some(lat.base(nx - 1, j)), Some(lat.base(0, j)), [lx, 0.0], true)
                } else {
                    (Some(lat.base(nx - 1, j)), None, [0.0, 0.0], false)
                }
            } else {
                (Some(lat.base(i - 1, j)), Some(lat.base(i, j)), [0.0, 0.0], false)
            };
            match (left_base, right_base) {
                (Some(lb), Some(rb)) => {
                    let sl = lat.sub_y(lat.scale[lb]);
                    let sr = lat.sub_y(lat.scale[rb]);
                    let m = sl.max(sr);
                    let seg = if spec.dim == 2 { dy / m as f64 } else { 1.0 };
                    for q in 0..m {
                        let bl = q * sl / m;
                        let br = q * sr / m;
                        let fy = if spec.dim == 2 { spec.lo[1] + j as f64 * dy + (q as f64 + 0.5) * seg } else { 0.0 };
                        let left = lat.cell(lb, lat.scale[lb] - 1, bl);
                        let right = lat.cell(rb, 0, br);
                        push_pair(&mut faces, left, right, seg, [1.0, 0.0], [x_face, fy], shift, wrapped);
                    }
                }
                (None, Some(rb)) => {
                    let s = lat.sub_y(lat.scale[rb]);
                    for b in 0..s {
                        let area = lat.sub_dy(rb);
                        push_boundary(&mut faces, lat.cell(rb, 0, b), area, [-1.0, 0.0], [x_face, yc(&lat, j, rb, b)]);
                    }
                }
                (Some(lb), None) => {
                    let s = lat.sub_y(lat.scale[lb]);
                    for b in 0..s {
                        let area = lat.sub_dy(lb);
                        push_boundary(&mut faces, lat.cell(lb, lat.scale[lb] - 1, b), area, [1.0, 0.0], [x_face, yc(&lat, j, lb, b)]);
                    }
                }
                (None, None) => unreachable!(),
            }
        }
    }

    if spec.dim == 2 {
        for i in 0..nx {
            for j in 0..=ny {
                let y_face = spec.lo[1] + j as f64 * dy;
                let (low_base, high_base, shift, wrapped) = if j == 0 {
                    if periodic {
                        continue;
                    }
                    (None, Some(lat.base(i, 0)), [0.0, 0.0], false)
                } else if j == ny {
                    if periodic {
                        (Some(lat.base(i, ny - 1)), Some(lat.base(i, 0)), [0.0, ly], true)
                    } else {
                        (Some(lat.base(i, ny - 1)), None, [0.0, 0.0], false)
                    }
                } else {
                    (Some(lat.base(i, j - 1)), Some(lat.base(i, j)), [0.0, 0.0], false)
                };
                let xc = |base: usize, a: u32| spec.lo[0] + i as f64 * dx + (a as f64 + 0.5) * dx / lat.scale[base] as f64;
                match (low_base, high_base) {
                    (Some(lb), Some(hb)) => {
                        let sl = lat.scale[lb];
                        let sh = lat.scale[hb];
                        let m = sl.max(sh);
                        let seg = dx / m as f64;
                        for q in 0..m {
                            let al = q * sl / m;
                            let ah = q * sh / m;
                            let fx = spec.lo[0] + i as f64 * dx + (q as f64 + 0.5) * seg;
                            let low = lat.cell(lb, al, sl - 1);
                            let high = lat.cell(hb, ah, 0);
                            push_pair(&mut faces, low, high, seg, [0.0, 1.0], [fx, y_face], shift, wrapped);
                        }
                    }
                    (None, Some(hb)) => {
                        let s = lat.scale[hb];
                        for a in 0..s {
                            push_boundary(&mut faces, lat.cell(hb, a, 0), dx / s as f64, [0.0, -1.0], [xc(hb, a), y_face]);
                        }
                    }
                    (Some(lb), None) => {
                        let s = lat.scale[lb];
                        for a in 0..s {
                            push_boundary(&mut faces, lat.cell(lb, a, s - 1), dx / s as f64, [0.0, 1.0], [xc(lb, a), y_face]);
                        }
                    }
                    (None, None) => unreachable!(),
                }
            }
        }
    }

    let mut cell_faces = vec![Vec::new(); cells.len()];
    for (fid, f) in faces.iter().enumerate() {
        cell_faces[f.left as usize].push(fid as FaceId);
        if let Some(r) = f.right {
            cell_faces[r as usize].push(fid as FaceId);
        }
    }
    for cf in &mut cell_faces {
        cf.sort_unstable();
    }
    let mesh = Mesh { dim: spec.dim, cells, faces, cell_faces };
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_line_face_counts() {
        let m = generate_mesh(&MeshSpec::line(4, BoundaryKind::Transmissive)).unwrap();
        assert_eq!(m.n_cells(), 4);
        assert_eq!(m.n_faces(), 5);
        let p = generate_mesh(&MeshSpec::line(4, BoundaryKind::Periodic)).unwrap();
        assert_eq!(p.n_faces(), 4);
        let wrap = p.faces.iter().find(|f| f.boundary == Some(BoundaryKind::Periodic)).unwrap();
        assert_eq!((wrap.left, wrap.right), (3, Some(0)));
        // right cell centroid 0.125 seen through the wrap: face at x=0 → offset -0.125
        assert!((wrap.right_offset[0] + 0.125).abs() < 1e-15);
    }

    #[test]
    fn refined_line_counts() {
        let spec = MeshSpec::line(4, BoundaryKind::Periodic).refine([0.5, 0.0], [1.0, 1.0], 4);
        let m = generate_mesh(&spec).unwrap();
        let coarse = m.cells.iter().filter(|c| (c.volume - 0.25).abs() < 1e-14).count();
        let fine = m.cells.iter().filter(|c| (c.volume - 0.0625).abs() < 1e-14).count();
        assert_eq!((coarse, fine), (2, 8));
        assert_eq!(m.n_faces(), 10);
    }

    /// Counts cells by brute-force enumeration of the sub-cell lattice and
    /// compares with the generator.
    #[test]
    fn refined_square_quadrant_counts() {
        let spec = MeshSpec::square(8, BoundaryKind::Periodic).refine([0.0, 0.0], [0.5, 0.5], 2);
        let m = generate_mesh(&spec).unwrap();
        let mut expect_coarse = 0;
        let mut expect_fine = 0;
        for j in 0..8 {
            for i in 0..8 {
                let (cx, cy) = ((i as f64 + 0.5) / 8.0, (j as f64 + 0.5) / 8.0);
                if cx <= 0.5 && cy <= 0.5 {
                    expect_fine += 4;
                } else {
                    expect_coarse += 1;
                }
            }
        }
        assert_eq!((expect_coarse, expect_fine), (48, 64));
        let fine = m.cells.iter().filter(|c| (c.volume - 1.0 / 256.0).abs() < 1e-15).count();
        assert_eq!(m.n_cells(), 112);
        assert_eq!(fine, 64);
        // total volume is the box
        let v: f64 = m.cells.iter().map(|c| c.volume).sum();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_faces_connect_coarse_to_fine() {
        let spec = MeshSpec::square(4, BoundaryKind::Transmissive).refine([0.0, 0.0], [0.25, 0.25], 4);
        let m = generate_mesh(&spec).unwrap();
        // base cell (1,0) is coarse, it touches 4 fine cells along x and is
        // otherwise conforming
        let coarse = m
            .cells
            .iter()
            .position(|c| (c.centroid[0] - 0.375).abs() < 1e-12 && (c.centroid[1] - 0.125).abs() < 1e-12)
            .unwrap() as CellId;
        let nbrs: Vec<_> = m.neighbors(coarse).collect();
        let fine_nbrs = nbrs.iter().filter(|&&n| m.cells[n as usize].volume < 0.01).count();
        assert_eq!(fine_nbrs, 4);
        m.validate().unwrap();
    }

    #[test]
    fn rejects_conflicting_and_bad_regions() {
        let spec = MeshSpec::square(4, BoundaryKind::Periodic)
            .refine([0.0, 0.0], [0.5, 0.5], 2)
            .refine([0.25, 0.25], [0.75, 0.75], 4);
        assert!(matches!(generate_mesh(&spec), Err(MeshError::ConflictingRefinement(2, 4))));
        let same = MeshSpec::square(4, BoundaryKind::Periodic)
            .refine([0.0, 0.0], [0.5, 0.5], 2)
            .refine([0.25, 0.25], [0.75, 0.75], 2);
        assert!(generate_mesh(&same).is_ok());
        let bad_scale = MeshSpec::line(4, BoundaryKind::Periodic).refine([0.0, 0.0], [0.5, 1.0], 3);
        assert!(matches!(generate_mesh(&bad_scale), Err(MeshError::InvalidSpec(_))));
        let outside = MeshSpec::line(4, BoundaryKind::Periodic).refine([0.5, 0.0], [1.5, 1.0], 2);
        assert!(matches!(generate_mesh(&outside), Err(MeshError::InvalidSpec(_))));
        assert!(generate_mesh(&MeshSpec::line(0, BoundaryKind::Periodic)).is_err());
    }

    #[test]
    fn closure_holds_on_refined_meshes() {
        for boundary in [BoundaryKind::Periodic, BoundaryKind::Transmissive] {
            let spec = MeshSpec::square(6, boundary)
                .refine([0.0, 0.0], [0.34, 0.5], 4)
                .refine([0.5, 0.5], [1.0, 1.0], 2);
            let m = generate_mesh(&spec).unwrap();
            for c in 0..m.n_cells() as CellId {
                let r = m.closure_residual(c);
                assert!(r[0].abs() <= 1e-12 && r[1].abs() <= 1e-12);
            }
        }
    }
}
