//! Binary mesh files. Layout (all little-endian):
//!
//! ```text
//! magic   [u8; 4]  "LTSM"
//! version u32
//! dim     u32
//! n_cells u64
//! n_faces u64
//! cells   n_cells × { volume f64, cx f64, cy f64, char_length f64 }
//! faces   n_faces × { left u32, right u32 (0xFFFF_FFFF = none), tag u32, pad u32,
//!                     area f64, nx f64, ny f64, lox f64, loy f64, rox f64, roy f64 }
//! ```
//!
//! `tag` is 0 for interior faces, 1 for periodic, 2 for transmissive.

use std::io::{Read, Write};

use super::{BoundaryKind, Cell, Face, FaceId, Mesh, MeshError};

pub const MESH_MAGIC: [u8; 4] = *b"LTSM";
pub const MESH_VERSION: u32 = 1;

const NO_CELL: u32 = u32::MAX;

pub fn write_mesh<W: Write>(mesh: &Mesh, mut out: W) -> Result<(), MeshError> {
    let mut buf = Vec::with_capacity(28 + mesh.n_cells() * 32 + mesh.n_faces() * 72);
    buf.extend_from_slice(&MESH_MAGIC);
    buf.extend_from_slice(&MESH_VERSION.to_le_bytes());
    buf.extend_from_slice(&(mesh.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(mesh.n_cells() as u64).to_le_bytes());
    buf.extend_from_slice(&(mesh.n_faces() as u64).to_le_bytes());
    for c in &mesh.cells {
        for x in [c.volume, c.centroid[0], c.centroid[1], c.char_length] {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    for f in &mesh.faces {
        let tag = match f.boundary {
            None => 0u32,
            Some(BoundaryKind::Periodic) => 1,
            Some(BoundaryKind::Transmissive) => 2,
        };
        for x in [f.left, f.right.unwrap_or(NO_CELL), tag, 0] {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for x in [
            f.area,
            f.normal[0],
            f.normal[1],
            f.left_offset[0],
            f.left_offset[1],
            f.right_offset[0],
            f.right_offset[1],
        ] {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], MeshError> {
        let end = self.pos + N;
        let bytes = self
            .data
            .get(self.pos..end)
            .ok_or_else(|| MeshError::Format(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(bytes.try_into().unwrap())
    }
    fn u32(&mut self) -> Result<u32, MeshError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64, MeshError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64, MeshError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn read_mesh<R: Read>(mut input: R) -> Result<Mesh, MeshError> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut cur = Cursor { data: &data, pos: 0 };
    if cur.take::<4>()? != MESH_MAGIC {
        return Err(MeshError::Format("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != MESH_VERSION {
        return Err(MeshError::Format(format!("unsupported version {version}")));
    }
    let dim = cur.u32()?;
    if dim != 1 && dim != 2 {
        return Err(MeshError::Format(format!("bad dimension {dim}")));
    }
    let n_cells = cur.u64()? as usize;
    let n_faces = cur.u64()? as usize;
    if data.len() != 28 + n_cells * 32 + n_faces * 72 {
        return Err(MeshError::Format("size does not match header counts".into()));
    }
    let mut cells = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let volume = cur.f64()?;
        let centroid = [cur.f64()?, cur.f64()?];
        let char_length = cur.f64()?;
        cells.push(Cell { volume, centroid, char_length });
    }
    let mut faces = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let left = cur.u32()?;
        let right = cur.u32()?;
        let tag = cur.u32()?;
        let _pad = cur.u32()?;
        let boundary = match tag {
            0 => None,
            1 => Some(BoundaryKind::Periodic),
            2 => Some(BoundaryKind::Transmissive),
            t => return Err(MeshError::Format(format!("bad face tag {t}"))),
        };
        let area = cur.f64()?;
        let normal = [cur.f64()?, cur.f64()?];
        let left_offset = [cur.f64()?, cur.f64()?];
        let right_offset = [cur.f64()?, cur.f64()?];
        faces.push(Face {
            left,
            right: (right != NO_CELL).then_some(right),
            boundary,
            area,
            normal,
            left_offset,
            right_offset,
        });
    }
    let mut cell_faces = vec![Vec::new(); n_cells];
    for (fid, f) in faces.iter().enumerate() {
        let slot = |c: u32| {
            cell_faces_index(c, n_cells).ok_or_else(|| MeshError::Format(format!("face {fid} references cell {c}")))
        };
        let l = slot(f.left)?;
        cell_faces[l].push(fid as FaceId);
        if let Some(r) = f.right {
            let r = slot(r)?;
            cell_faces[r].push(fid as FaceId);
        }
    }
    let mesh = Mesh { dim: dim as u8, cells, faces, cell_faces };
    mesh.validate()?;
    Ok(mesh)
}

fn cell_faces_index(c: u32, n: usize) -> Option<usize> {
    ((c as usize) < n).then_some(c as usize)
}
