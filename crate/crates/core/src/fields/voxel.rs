//! Voxel grids, trilinear sampling and the `VOXGRID v1` file format.
//!
//! Grid values live at cell centres: node `(i, j, k)` sits at
//! `min + (i + 0.5, j + 0.5, k + 0.5) * cell`. Sampling between the outermost
//! centres and the box faces clamps to the edge value; outside the box the
//! occupancy is zero.

use std::path::Path;

use rayon::prelude::*;

use super::{FieldKind, OccupancyField};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Rgb, Vec3};

const MAGIC: &str = "VOXGRID v1";

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    bounds: Aabb,
    values: Vec<f32>,
}

impl VoxelGrid {
    /// Builds a grid from x-fastest values.
    pub fn new(dims: [usize; 3], bounds: Aabb, values: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::domain(format!("grid dims must be >= 2, got {dims:?}")));
        }
        if !bounds.is_valid() {
            return Err(Error::domain(format!("invalid grid bounds {bounds:?}")));
        }
        let n = dims[0] * dims[1] * dims[2];
        if values.len() != n {
            return Err(Error::domain(format!(
                "grid expects {n} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::domain(format!(
                "grid value {} at index {i} outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self {
            dims,
            bounds,
            values,
        })
    }

    pub fn filled(dims: [usize; 3], bounds: Aabb, value: f32) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, bounds, vec![value; n])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.values[self.index(i, j, k)]
    }

    /// Raises the value at `index` to at least `value`.
    pub fn raise(&mut self, index: usize, value: f32) {
        let v = &mut self.values[index];
        *v = v.max(value.clamp(0.0, 1.0));
    }

    pub fn cell_size(&self) -> [f64; 3] {
        let e = self.bounds.extent();
        [
            e[0] / self.dims[0] as f64,
            e[1] / self.dims[1] as f64,
            e[2] / self.dims[2] as f64,
        ]
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let c = self.cell_size();
        let m = self.bounds.min;
        Vec3::new(
            m[0] + (i as f64 + 0.5) * c[0],
            m[1] + (j as f64 + 0.5) * c[1],
            m[2] + (k as f64 + 0.5) * c[2],
        )
    }

    /// Flat index of the cell enclosing `p`, if `p` is inside the bounds.
    #[inline]
    pub fn cell_index(&self, p: &Vec3) -> Option<usize> {
        if !self.bounds.contains(p) {
            return None;
        }
        let c = self.cell_size();
        let m = self.bounds.min;
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let u = ((p[a] - m[a]) / c[a]).floor() as isize;
            idx[a] = u.clamp(0, self.dims[a] as isize - 1) as usize;
        }
        Some(self.index(idx[0], idx[1], idx[2]))
    }

    /// Trilinear interpolation of the node values; zero outside the bounds.
    #[inline]
    pub fn sample(&self, p: &Vec3) -> f64 {
        if !self.bounds.contains(p) {
            return 0.0;
        }
        let c = self.cell_size();
        let m = self.bounds.min;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let u = ((p[a] - m[a]) / c[a] - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = (u.floor() as usize).min(n - 2);
            base[a] = i0;
            frac[a] = u - i0 as f64;
        }
        let [i, j, k] = base;
        let [fx, fy, fz] = frac;
        let v = |di: usize, dj: usize, dk: usize| f64::from(self.get(i + di, j + dj, k + dk));
        let c00 = v(0, 0, 0) * (1.0 - fx) + v(1, 0, 0) * fx;
        let c10 = v(0, 1, 0) * (1.0 - fx) + v(1, 1, 0) * fx;
        let c01 = v(0, 0, 1) * (1.0 - fx) + v(1, 0, 1) * fx;
        let c11 = v(0, 1, 1) * (1.0 - fx) + v(1, 1, 1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }

    /// Encodes the grid in the `VOXGRID v1` format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let [nx, ny, nz] = self.dims;
        let b = self.bounds;
        let header = format!(
            "{MAGIC}\n{nx} {ny} {nz}\n{} {} {} {} {} {}\n",
            b.min[0], b.min[1], b.min[2], b.max[0], b.max[1], b.max[2]
        );
        let mut out = Vec::with_capacity(header.len() + 4 * self.values.len());
        out.extend_from_slice(header.as_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes a `VOXGRID v1` byte stream.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = 0usize;
        let magic = next_line(bytes, &mut cursor)?;
        if magic.1 != MAGIC {
            return Err(Error::format(magic.0, format!("expected `{MAGIC}` header")));
        }

        let (dims_at, dims_line) = next_line(bytes, &mut cursor)?;
        let dims: Vec<usize> = parse_fields(dims_line, dims_at, 3)?;
        let dims = [dims[0], dims[1], dims[2]];
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::format(dims_at, "grid dims must be >= 2"));
        }

        let (bounds_at, bounds_line) = next_line(bytes, &mut cursor)?;
        let b: Vec<f64> = parse_fields(bounds_line, bounds_at, 6)?;
        let bounds = Aabb::new([b[0], b[1], b[2]], [b[3], b[4], b[5]]);
        if !bounds.is_valid() {
            return Err(Error::format(bounds_at, "bounds must satisfy min < max"));
        }

        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4).map(|bytes| (n, bytes)))
            .ok_or_else(|| Error::format(dims_at, "grid dims overflow"))?;
        let (count, payload_len) = n;
        let payload = &bytes[cursor..];
        if payload.len() < payload_len {
            return Err(Error::format(
                bytes.len(),
                format!(
                    "payload has {} bytes, header implies {payload_len}",
                    payload.len()
                ),
            ));
        }
        if payload.len() > payload_len {
            return Err(Error::format(
                cursor + payload_len,
                format!("{} trailing bytes after payload", payload.len() - payload_len),
            ));
        }
        let mut values = Vec::with_capacity(count);
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::format(
                    cursor + 4 * i,
                    format!("value {v} outside [0, 1]"),
                ));
            }
            values.push(v);
        }
        Ok(Self {
            dims,
            bounds,
            values,
        })
    }
}

fn next_line<'a>(bytes: &'a [u8], cursor: &mut usize) -> Result<(usize, &'a str)> {
    let start = *cursor;
    let rest = &bytes[start..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(start, "unterminated header line"))?;
    let line = std::str::from_utf8(&rest[..end])
        .map_err(|e| Error::format(start + e.valid_up_to(), "header is not valid UTF-8"))?;
    *cursor = start + end + 1;
    Ok((start, line))
}

fn parse_fields<T: std::str::FromStr>(line: &str, offset: usize, expected: usize) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(expected);
    let mut pos = 0usize;
    for token in line.split(' ') {
        let at = offset + pos;
        pos += token.len() + 1;
        let v = token
            .parse::<T>()
            .map_err(|_| Error::format(at, format!("cannot parse `{token}`")))?;
        out.push(v);
    }
    if out.len() != expected {
        return Err(Error::format(
            offset,
            format!("expected {expected} fields, found {}", out.len()),
        ));
    }
    Ok(out)
}

pub fn save_voxel_grid(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, grid.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_voxel_grid(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    VoxelGrid::from_bytes(&bytes)
}

/// Samples `field` at the `res^3` cell centres of the canonical box.
pub fn voxelize(field: &dyn OccupancyField, res: usize) -> Result<VoxelGrid> {
    if res < 2 {
        return Err(Error::domain(format!("voxel resolution must be >= 2, got {res}")));
    }
    voxelize_in(field, [res; 3], Aabb::CANONICAL)
}

/// Samples `field` at the cell centres of an arbitrary grid layout.
pub fn voxelize_in(field: &dyn OccupancyField, dims: [usize; 3], bounds: Aabb) -> Result<VoxelGrid> {
    let layout = VoxelGrid::filled(dims, bounds, 0.0)?;
    let [nx, ny, nz] = dims;
    let values: Vec<f32> = (0..nz)
        .into_par_iter()
        .flat_map_iter(|k| {
            let layout = &layout;
            (0..ny).flat_map(move |j| {
                (0..nx).map(move |i| {
                    field.occupancy_at(&layout.node_position(i, j, k)).clamp(0.0, 1.0) as f32
                })
            })
        })
        .collect();
    VoxelGrid::new(dims, bounds, values)
}

/// A voxel grid viewed as an occupancy field with a uniform colour.
#[derive(Debug, Clone)]
pub struct GridField {
    grid: VoxelGrid,
    colour: Rgb,
}

impl GridField {
    pub fn new(grid: VoxelGrid, colour: Rgb) -> Self {
        Self {
            grid,
            colour: colour.map(|c| c.clamp(0.0, 1.0)),
        }
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }
}

impl OccupancyField for GridField {
    fn kind(&self) -> FieldKind {
        FieldKind::VoxelGrid
    }

    fn bounds(&self) -> Aabb {
        self.grid.bounds()
    }

    fn occupancy_at(&self, p: &Vec3) -> f64 {
        self.grid.sample(p)
    }

    fn colour_at(&self, p: &Vec3) -> Rgb {
        if self.grid.bounds().contains(p) {
            self.colour
        } else {
            [0.0; 3]
        }
    }
}
