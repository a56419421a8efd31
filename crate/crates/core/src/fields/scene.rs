//! Soft-boundary scenes composed from SDF primitives.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FieldKind, OccupancyField};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Rgb, Vec3};

/// Default logistic sharpness; the 0.05..0.95 transition is about 0.3 world units wide.
pub const DEFAULT_SHARPNESS: f64 = 20.0;

/// Maps a signed distance (negative inside) to an occupancy probability,
/// `1 / (1 + exp(k * sdf))`.
pub fn sdf_to_occupancy(sdf: f64, k: f64) -> Result<f64> {
    if !sdf.is_finite() {
        return Err(Error::domain(format!("sdf must be finite, got {sdf}")));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::domain(format!("sharpness must be positive, got {k}")));
    }
    Ok(logistic(sdf, k))
}

#[inline]
pub(crate) fn logistic(sdf: f64, k: f64) -> f64 {
    // Split by sign so exp never overflows into inf/inf.
    let x = k * sdf;
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// `size` is the radius.
    Sphere,
    /// Axis-aligned cube; `size` is the half edge length.
    Box,
    /// Z-aligned capsule; radius and segment half-length are both `size / 2`.
    Capsule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub center: [f64; 3],
    pub size: f64,
    pub colour: Rgb,
}

impl Primitive {
    pub fn sphere(center: [f64; 3], radius: f64, colour: Rgb) -> Self {
        Self {
            shape: Shape::Sphere,
            center,
            size: radius,
            colour,
        }
    }

    pub fn cube(center: [f64; 3], half: f64, colour: Rgb) -> Self {
        Self {
            shape: Shape::Box,
            center,
            size: half,
            colour,
        }
    }

    pub fn capsule(center: [f64; 3], size: f64, colour: Rgb) -> Self {
        Self {
            shape: Shape::Capsule,
            center,
            size,
            colour,
        }
    }

    #[inline]
    pub fn sdf(&self, p: &Vec3) -> f64 {
        let q = [
            p.x - self.center[0],
            p.y - self.center[1],
            p.z - self.center[2],
        ];
        match self.shape {
            Shape::Sphere => (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt() - self.size,
            Shape::Box => {
                let d = q.map(|c| c.abs() - self.size);
                let outside = d.map(|c| c.max(0.0));
                let out_len =
                    (outside[0] * outside[0] + outside[1] * outside[1] + outside[2] * outside[2])
                        .sqrt();
                out_len + d[0].max(d[1]).max(d[2]).min(0.0)
            }
            Shape::Capsule => {
                let half = 0.5 * self.size;
                let z = q[2] - q[2].clamp(-half, half);
                (q[0] * q[0] + q[1] * q[1] + z * z).sqrt() - half
            }
        }
    }

    pub fn bounding_box(&self) -> Aabb {
        let ext = match self.shape {
            Shape::Sphere | Shape::Box => [self.size; 3],
            Shape::Capsule => [0.5 * self.size, 0.5 * self.size, self.size],
        };
        let c = self.center;
        Aabb::new(
            [c[0] - ext[0], c[1] - ext[1], c[2] - ext[2]],
            [c[0] + ext[0], c[1] + ext[1], c[2] + ext[2]],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsgOp {
    Union,
    Subtract,
}

/// Combines the running shape with `primitives[index]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsgStep {
    pub op: CsgOp,
    pub index: usize,
}

/// Scene description as stored in scene JSON files.
///
/// Primitives not referenced by `csg` are unioned (in list order) into the
/// base shape; the `csg` steps are then applied in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub csg: Vec<CsgStep>,
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
}

fn default_sharpness() -> f64 {
    DEFAULT_SHARPNESS
}

impl SceneSpec {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        Self {
            primitives,
            csg: Vec::new(),
            sharpness: DEFAULT_SHARPNESS,
        }
    }

    pub fn with_csg(mut self, csg: Vec<CsgStep>) -> Self {
        self.csg = csg;
        self
    }

    pub fn with_sharpness(mut self, k: f64) -> Self {
        self.sharpness = k;
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("scene spec serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::Spec("scene has no primitives".into()));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::Spec(format!(
                "sharpness must be positive, got {}",
                self.sharpness
            )));
        }
        for (i, prim) in self.primitives.iter().enumerate() {
            if !(prim.size > 0.0 && prim.size.is_finite()) {
                return Err(Error::Spec(format!("primitive {i}: size must be positive")));
            }
            if prim.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::Spec(format!("primitive {i}: center must be finite")));
            }
            if prim.colour.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Spec(format!("primitive {i}: colour outside [0, 1]")));
            }
            if !prim.bounding_box().intersects(&Aabb::CANONICAL) {
                return Err(Error::Spec(format!(
                    "primitive {i} lies entirely outside the canonical bounds"
                )));
            }
        }
        let mut referenced = vec![false; self.primitives.len()];
        for step in &self.csg {
            match referenced.get_mut(step.index) {
                None => {
                    return Err(Error::Spec(format!(
                        "csg index {} out of range",
                        step.index
                    )))
                }
                Some(true) => {
                    return Err(Error::Spec(format!(
                        "primitive {} referenced twice by csg",
                        step.index
                    )))
                }
                Some(seen) => *seen = true,
            }
        }
        if referenced.iter().all(|r| *r) {
            return Err(Error::Spec("csg leaves no base primitive".into()));
        }
        Ok(())
    }
}

/// Ground-truth field built from a [`SceneSpec`].
#[derive(Debug, Clone)]
pub struct SceneField {
    primitives: Vec<Primitive>,
    base: Vec<usize>,
    steps: Vec<CsgStep>,
    sharpness: f64,
}

/// Validates `spec` and builds its occupancy field.
pub fn build_scene(spec: &SceneSpec) -> Result<SceneField> {
    spec.validate()?;
    let mut referenced = vec![false; spec.primitives.len()];
    for step in &spec.csg {
        referenced[step.index] = true;
    }
    let base = (0..spec.primitives.len())
        .filter(|i| !referenced[*i])
        .collect();
    Ok(SceneField {
        primitives: spec.primitives.clone(),
        base,
        steps: spec.csg.clone(),
        sharpness: spec.sharpness,
    })
}

impl SceneField {
    pub fn sharpness(&self) -> f64 {
        self.sharpness
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    /// Composite signed distance: `min` for union, `max(a, -b)` for subtraction.
    pub fn sdf(&self, p: &Vec3) -> f64 {
        let mut d = self
            .base
            .iter()
            .map(|&i| self.primitives[i].sdf(p))
            .fold(f64::INFINITY, f64::min);
        for step in &self.steps {
            let b = self.primitives[step.index].sdf(p);
            d = match step.op {
                CsgOp::Union => d.min(b),
                CsgOp::Subtract => d.max(-b),
            };
        }
        d
    }

    fn nearest_colour(&self, p: &Vec3) -> Rgb {
        let mut best = f64::INFINITY;
        let mut colour = self.primitives[0].colour;
        for prim in &self.primitives {
            let d = prim.sdf(p).abs();
            // Strict comparison keeps the earliest primitive on ties.
            if d < best {
                best = d;
                colour = prim.colour;
            }
        }
        colour
    }
}

impl OccupancyField for SceneField {
    fn kind(&self) -> FieldKind {
        FieldKind::PrimitiveComposite
    }

    fn bounds(&self) -> Aabb {
        Aabb::CANONICAL
    }

    #[inline]
    fn occupancy_at(&self, p: &Vec3) -> f64 {
        if !Aabb::CANONICAL.contains(p) {
            return 0.0;
        }
        logistic(self.sdf(p), self.sharpness)
    }

    fn colour_at(&self, p: &Vec3) -> Rgb {
        if !Aabb::CANONICAL.contains(p) {
            return [0.0; 3];
        }
        self.nearest_colour(p)
    }
}
