//! Occupancy fields: queryable occupancy probability and colour over space.

mod scene;
mod voxel;

pub use scene::{
    build_scene, sdf_to_occupancy, CsgOp, CsgStep, Primitive, SceneField, SceneSpec, Shape,
    DEFAULT_SHARPNESS,
};
pub use voxel::{load_voxel_grid, save_voxel_grid, voxelize, voxelize_in, GridField, VoxelGrid};

use crate::geometry::{Aabb, Rgb, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    PrimitiveComposite,
    VoxelGrid,
    SurrogatePrior,
    SurrogatePredicted,
    Analytic,
}

/// A scalar occupancy field `o(p)` in `[0, 1]` with an RGB colour field.
///
/// Implementations must be pure, must keep both outputs within `[0, 1]`,
/// and must report zero occupancy outside [`OccupancyField::bounds`].
pub trait OccupancyField: Send + Sync {
    fn kind(&self) -> FieldKind;

    fn bounds(&self) -> Aabb;

    fn occupancy_at(&self, p: &Vec3) -> f64;

    fn colour_at(&self, p: &Vec3) -> Rgb;

    /// Occupancy and colour together; override when both share work.
    fn sample(&self, p: &Vec3) -> (f64, Rgb) {
        (self.occupancy_at(p), self.colour_at(p))
    }
}

impl std::fmt::Debug for dyn OccupancyField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} field", self.kind())
    }
}

impl<T: OccupancyField + ?Sized> OccupancyField for &T {
    fn kind(&self) -> FieldKind {
        (**self).kind()
    }
    fn bounds(&self) -> Aabb {
        (**self).bounds()
    }
    fn occupancy_at(&self, p: &Vec3) -> f64 {
        (**self).occupancy_at(p)
    }
    fn colour_at(&self, p: &Vec3) -> Rgb {
        (**self).colour_at(p)
    }
    fn sample(&self, p: &Vec3) -> (f64, Rgb) {
        (**self).sample(p)
    }
}

impl<T: OccupancyField + ?Sized> OccupancyField for std::sync::Arc<T> {
    fn kind(&self) -> FieldKind {
        (**self).kind()
    }
    fn bounds(&self) -> Aabb {
        (**self).bounds()
    }
    fn occupancy_at(&self, p: &Vec3) -> f64 {
        (**self).occupancy_at(p)
    }
    fn colour_at(&self, p: &Vec3) -> Rgb {
        (**self).colour_at(p)
    }
    fn sample(&self, p: &Vec3) -> (f64, Rgb) {
        (**self).sample(p)
    }
}

/// Constant occupancy and colour inside a box, zero outside.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField {
    pub occupancy: f64,
    pub colour: Rgb,
    pub bounds: Aabb,
}

impl ConstantField {
    pub fn new(occupancy: f64, colour: Rgb, bounds: Aabb) -> Self {
        Self {
            occupancy: occupancy.clamp(0.0, 1.0),
            colour: colour.map(|c| c.clamp(0.0, 1.0)),
            bounds,
        }
    }

    /// Empty space.
    pub fn empty() -> Self {
        Self::new(0.0, [0.0; 3], Aabb::CANONICAL)
    }
}

impl OccupancyField for ConstantField {
    fn kind(&self) -> FieldKind {
        FieldKind::Analytic
    }
    fn bounds(&self) -> Aabb {
        self.bounds
    }
    fn occupancy_at(&self, p: &Vec3) -> f64 {
        if self.bounds.contains(p) {
            self.occupancy
        } else {
            0.0
        }
    }
    fn colour_at(&self, p: &Vec3) -> Rgb {
        if self.bounds.contains(p) {
            self.colour
        } else {
            [0.0; 3]
        }
    }
}
