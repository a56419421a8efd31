use std::sync::Arc;

use nbv_core::fields::{build_scene, FieldKind, OccupancyField, Primitive, SceneSpec};
use nbv_core::policies::{candidate_next, PolicyConfig, PolicyKind, SelectionContext};
use nbv_core::render::Intrinsics;
use nbv_core::surrogate::{PriorField, SurrogateReconstructor};
use nbv_core::uncertainty::{UncertaintyParams, ViewSampling};
use nbv_core::{Aabb, Rgb, Vec3};

/// Ground truth everywhere except the positive octant, where the noisy prior
/// shows through.
struct OctantPrior {
    gt: Arc<dyn OccupancyField>,
    prior: PriorField,
}

fn in_octant(p: &Vec3) -> bool {
    p.x > 0.0 && p.y > 0.0 && p.z > 0.0
}

impl OccupancyField for OctantPrior {
    fn kind(&self) -> FieldKind {
        FieldKind::Analytic
    }
    fn bounds(&self) -> Aabb {
        self.gt.bounds()
    }
    fn occupancy_at(&self, p: &Vec3) -> f64 {
        if in_octant(p) {
            self.prior.occupancy_at(p)
        } else {
            self.gt.occupancy_at(p)
        }
    }
    fn colour_at(&self, p: &Vec3) -> Rgb {
        self.gt.colour_at(p)
    }
}

#[test]
fn candidate_policy_finds_the_uncertain_octant() {
    let gt: Arc<dyn OccupancyField> = Arc::new(
        build_scene(&SceneSpec::new(vec![Primitive::sphere([0.0; 3], 0.6, [0.7; 3])]).with_sharpness(100.0)).unwrap(),
    );
    let params = UncertaintyParams::preset_3d();
    let config = PolicyConfig {
        sampling: ViewSampling {
            n_rays: 256,
            n_samples: 64,
        },
        ..PolicyConfig::new(PolicyKind::Candidate)
    };
    let mut hits = 0;
    for trial in 0..100u64 {
        let recon = SurrogateReconstructor::new(gt.clone(), &Default::default(), trial, Default::default()).unwrap();
        let field = OctantPrior {
            gt: gt.clone(),
            prior: recon.prior().clone(),
        };
        let ctx = SelectionContext {
            field: &field,
            history: &[],
            params: &params,
            radius: 2.0,
            intrinsics: Intrinsics::default(),
        };
        let chosen = candidate_next(&ctx, &config, 1000 + trial).unwrap();
        hits += usize::from(in_octant(&chosen.position));
    }
    assert!(hits >= 90, "selected the uncertain octant in {hits}/100 trials");
}
