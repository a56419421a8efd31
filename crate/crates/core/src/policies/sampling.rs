use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Vec3;

pub const MAX_REJECTION_TRIES: usize = 10_000;

/// Area-uniform point on the sphere of `radius`.
pub fn uniform_sphere_point<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let rho = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(rho * phi.cos(), rho * phi.sin(), z) * radius
}

/// Distance from `p` to the nearest of `others`; infinite when empty.
pub fn min_distance(p: &Vec3, others: &[Vec3]) -> f64 {
    others.iter().map(|o| (p - o).norm()).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
pub(crate) fn pairwise_min(points: &[Vec3]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        best = best.min(min_distance(a, &points[i + 1..]));
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub position: Vec3,
    /// No try reached `delta`; `position` is the best of them.
    pub fallback: bool,
}

/// Rejection-samples a sphere point at least `delta` from every entry of
/// `occupied`, falling back to the try with the largest clearance.
pub fn draw_separated<R: Rng + ?Sized>(rng: &mut R, occupied: &[Vec3], delta: f64, radius: f64) -> Draw {
    let mut best = None;
    let mut best_clearance = f64::NEG_INFINITY;
    for _ in 0..MAX_REJECTION_TRIES {
        let p = uniform_sphere_point(rng, radius);
        let clearance = min_distance(&p, occupied);
        if clearance >= delta {
            return Draw {
                position: p,
                fallback: false,
            };
        }
        if clearance > best_clearance {
            best_clearance = clearance;
            best = Some(p);
        }
    }
    Draw {
        position: best.expect("at least one try"),
        fallback: true,
    }
}

/// A random view no closer than `delta` to any previous view.
pub fn random_next(history: &[Vec3], delta: f64, radius: f64, seed: u64) -> Draw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_separated(&mut rng, history, delta, radius)
}

/// `n` near-uniform points on the sphere (golden-angle spiral).
pub fn fibonacci_lattice(n: usize, radius: f64) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(rho * phi.cos(), rho * phi.sin(), z).normalize() * radius
        })
        .collect()
}

/// The lattice point farthest from the history (maximin); lowest index wins ties.
pub fn even_next(history: &[Vec3], lattice: &[Vec3]) -> Vec3 {
    let mut best = 0;
    let mut best_d = f64::NEG_INFINITY;
    for (i, p) in lattice.iter().enumerate() {
        let d = min_distance(p, history);
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    lattice[best]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_points_are_on_the_sphere_and_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec3> = (0..20_000).map(|_| uniform_sphere_point(&mut rng, 2.0)).collect();
        assert!(pts.iter().all(|p| (p.norm() - 2.0).abs() < 1e-12));
        // Area uniformity: each z-slab of equal height holds equal mass.
        let upper = pts.iter().filter(|p| p.z > 1.0).count() as f64 / pts.len() as f64;
        assert!((upper - 0.25).abs() < 0.01, "{upper}");
        let mean: Vec3 = pts.iter().sum::<Vec3>() / pts.len() as f64;
        assert!(mean.norm() < 0.05);
    }

    #[test]
    fn empty_history_accepts_the_first_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let expected = uniform_sphere_point(&mut rng, 2.0);
        let d = random_next(&[], 0.7, 2.0, 3);
        assert_eq!(d.position, expected);
        assert!(!d.fallback);
        assert_eq!(d, random_next(&[], 0.7, 2.0, 3));
    }

    #[test]
    fn random_views_respect_delta() {
        let mut fallbacks = 0;
        for trial in 0..1000u64 {
            let mut hist = vec![random_next(&[], 0.7, 2.0, trial * 31).position];
            for s in 0..4 {
                let d = random_next(&hist, 0.7, 2.0, trial * 31 + s + 1);
                fallbacks += d.fallback as usize;
                hist.push(d.position);
            }
            assert!(pairwise_min(&hist) >= 0.7);
        }
        assert_eq!(fallbacks, 0);
    }

    #[test]
    fn crowded_sphere_falls_back_to_best_clearance() {
        let lattice = fibonacci_lattice(400, 2.0);
        let d = random_next(&lattice, 1.5, 2.0, 4);
        assert!(d.fallback);
        assert!((d.position.norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn even_from_north_pole_picks_the_south_pole() {
        let lattice = fibonacci_lattice(512, 2.0);
        let spacing = (4.0 * std::f64::consts::PI * 4.0 / 512.0).sqrt();
        let p = even_next(&[Vec3::new(0.0, 0.0, 2.0)], &lattice);
        assert!((p - Vec3::new(0.0, 0.0, -2.0)).norm() < spacing);
    }

    #[test]
    fn even_sequence_matches_exhaustive_search() {
        let lattice = fibonacci_lattice(512, 2.0);
        let mut hist = vec![Vec3::new(1.0, 1.0, 1.0).normalize() * 2.0];
        for _ in 0..5 {
            let p = even_next(&hist, &lattice);
            // Exhaustive oracle: no lattice point has strictly larger clearance.
            let clearance = |q: &Vec3| hist.iter().map(|h| (q - h).norm()).fold(f64::INFINITY, f64::min);
            let best = lattice.iter().map(clearance).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(clearance(&p), best);
            let first = lattice.iter().position(|q| clearance(q) == best).unwrap();
            assert_eq!(lattice[first], p);
            hist.push(p);
        }
        assert_eq!(hist[1..], {
            let mut h = vec![hist[0]];
            for _ in 0..5 {
                let p = even_next(&h, &lattice);
                h.push(p);
            }
            h
        }[1..]);
    }
}
