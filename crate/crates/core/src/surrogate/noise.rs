use crate::geometry::Vec3;
use crate::seed::mix64;

/// Seeded trilinear value noise in `[0, 1]` with smoothstep blending.
#[derive(Debug, Clone, Copy)]
pub struct ValueNoise {
    seed: u64,
    scale: f64,
}

impl ValueNoise {
    /// `scale` is the lattice spacing in world units.
    pub fn new(seed: u64, scale: f64) -> Self {
        Self { seed, scale }
    }

    #[inline]
    fn lattice(&self, i: i64, j: i64, k: i64) -> f64 {
        let mut h = mix64(self.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        h = mix64(h ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
        h = mix64(h ^ (k as u64).wrapping_mul(0x1656_67B1_9E37_79F9));
        (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn at(&self, p: &Vec3) -> f64 {
        let q = p / self.scale;
        let (fx, fy, fz) = (q.x.floor(), q.y.floor(), q.z.floor());
        let (i, j, k) = (fx as i64, fy as i64, fz as i64);
        let s = |t: f64| t * t * (3.0 - 2.0 * t);
        let (u, v, w) = (s(q.x - fx), s(q.y - fy), s(q.z - fz));
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let x00 = lerp(self.lattice(i, j, k), self.lattice(i + 1, j, k), u);
        let x10 = lerp(self.lattice(i, j + 1, k), self.lattice(i + 1, j + 1, k), u);
        let x01 = lerp(self.lattice(i, j, k + 1), self.lattice(i + 1, j, k + 1), u);
        let x11 = lerp(self.lattice(i, j + 1, k + 1), self.lattice(i + 1, j + 1, k + 1), u);
        lerp(lerp(x00, x10, v), lerp(x01, x11, v), w).clamp(0.0, 1.0)
    }
}
