//! Data-composition summaries and pairwise factor comparisons.

use crate::geometry::wrap_angle;
use crate::trajectory::{count_instances, CompositionManifest, Dataset};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;

/// Recomputes a manifest from trajectory contents. Factors that are not
/// recorded per trajectory (region, camera, textures, dynamics, bounds) come
/// from the stored manifest.
pub fn summarize(d: &Dataset) -> CompositionManifest {
    let object_instances = count_instances(&d.trajectories);
    let task_ids = d.trajectories.iter().map(|t| t.task_id.clone()).collect();
    let proprio_dim = d
        .trajectories
        .iter()
        .find_map(|t| t.steps.first())
        .map(|s| s.obs.proprio.len())
        .unwrap_or(d.manifest.proprio_dim);
    CompositionManifest {
        object_categories: object_instances.keys().cloned().collect(),
        object_instances,
        task_ids,
        proprio_dim,
        ..d.manifest.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlap {
    pub shared: usize,
    pub a_only: usize,
    pub b_only: usize,
}

impl Overlap {
    pub fn of<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Self {
        Self {
            shared: a.intersection(b).count(),
            a_only: a.difference(b).count(),
            b_only: b.difference(a).count(),
        }
    }

    pub fn swapped(self) -> Self {
        Self {
            a_only: self.b_only,
            b_only: self.a_only,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsDelta {
    pub action_noise_std: f64,
    pub geometry_scale: f64,
    pub grasp_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionDelta {
    pub category_overlap: Overlap,
    /// Euclidean distance between camera centers, meters.
    pub camera_translation_delta: f64,
    /// Absolute wrapped heading difference, degrees.
    pub camera_rotation_delta: f64,
    pub init_region_iou: f64,
    pub dynamics_delta: DynamicsDelta,
    pub task_overlap: Overlap,
    pub texture_overlap: Overlap,
}

pub fn diff(a: &CompositionManifest, b: &CompositionManifest) -> CompositionDelta {
    let (ca, cb) = (&a.camera.center, &b.camera.center);
    CompositionDelta {
        category_overlap: Overlap::of(&a.object_categories, &b.object_categories),
        camera_translation_delta: ca.distance(cb),
        camera_rotation_delta: wrap_angle(cb.theta - ca.theta).abs().to_degrees(),
        init_region_iou: a.init_region.iou(&b.init_region),
        dynamics_delta: DynamicsDelta {
            action_noise_std: (a.dynamics.action_noise_std - b.dynamics.action_noise_std).abs(),
            geometry_scale: (a.dynamics.geometry_scale - b.dynamics.geometry_scale).abs(),
            grasp_radius: (a.dynamics.grasp_radius - b.dynamics.grasp_radius).abs(),
        },
        task_overlap: Overlap::of(&a.task_ids, &b.task_ids),
        texture_overlap: Overlap::of(&a.texture_ids, &b.texture_ids),
    }
}

impl CompositionDelta {
    /// Plain-text table, one factor per line.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let ov = |o: &Overlap| format!("shared {} / a-only {} / b-only {}", o.shared, o.a_only, o.b_only);
        let rows = [
            ("categories", ov(&self.category_overlap)),
            ("tasks", ov(&self.task_overlap)),
            ("textures", ov(&self.texture_overlap)),
            ("camera translation (m)", format!("{:.4}", self.camera_translation_delta)),
            ("camera rotation (deg)", format!("{:.3}", self.camera_rotation_delta)),
            ("init region IoU", format!("{:.4}", self.init_region_iou)),
            ("action noise std", format!("{:.5}", self.dynamics_delta.action_noise_std)),
            ("geometry scale", format!("{:.4}", self.dynamics_delta.geometry_scale)),
            ("grasp radius (m)", format!("{:.4}", self.dynamics_delta.grasp_radius)),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<24} {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose2, Rect};
    use crate::trajectory::fixtures;
    use crate::trajectory::SourceTag;
    use crate::world::{collect_demos, WorldConfig};
    use proptest::prelude::*;

    fn manifest() -> CompositionManifest {
        fixtures::manifest(&["cup", "can"])
    }

    #[test]
    fn identical_manifests_have_zero_delta() {
        let d = diff(&manifest(), &manifest());
        assert_eq!(d.camera_translation_delta, 0.0);
        assert_eq!(d.camera_rotation_delta, 0.0);
        assert_eq!(d.init_region_iou, 1.0);
        assert_eq!(d.category_overlap, Overlap { shared: 2, a_only: 0, b_only: 0 });
        assert_eq!(d.dynamics_delta.geometry_scale, 0.0);
    }

    #[test]
    fn camera_delta_is_distance_and_wrapped_angle() {
        let a = manifest();
        let mut b = manifest();
        b.camera.center = Pose2::new(0.25 + 0.18, 0.25 + 0.24, 20f64.to_radians());
        let d = diff(&a, &b);
        assert!((d.camera_translation_delta - 0.3).abs() < 1e-12);
        assert!((d.camera_rotation_delta - 20.0).abs() < 1e-9);
        // 170 deg vs -170 deg is 20 deg apart across the wrap.
        let mut c = manifest();
        c.camera.center.theta = 170f64.to_radians();
        let mut e = manifest();
        e.camera.center.theta = (-170f64).to_radians();
        assert!((diff(&c, &e).camera_rotation_delta - 20.0).abs() < 1e-9);
    }

    #[test]
    fn region_iou_third() {
        let mut a = manifest();
        a.init_region = Rect::new(0.0, 0.0, 1.0, 1.0);
        let mut b = manifest();
        b.init_region = Rect::new(0.5, 0.0, 1.5, 1.0);
        assert!((diff(&a, &b).init_region_iou - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_category_dataset() {
        let d = fixtures::dataset(10, &["cup"]);
        let m = summarize(&d);
        assert_eq!(m.object_categories.iter().collect::<Vec<_>>(), vec!["cup"]);
        assert_eq!(m.object_instances["cup"], 1);
    }

    #[test]
    fn recount_matches_collected_manifest() {
        // Oracle: brute-force distinct (category, instance) pairs.
        let d = collect_demos(&WorldConfig::pick_place_real(), 12, 4, SourceTag::RealProxy).unwrap();
        let m = summarize(&d);
        assert_eq!(m, d.manifest);
        assert!(!m.object_categories.is_empty());
        let mut pairs = BTreeSet::new();
        for t in &d.trajectories {
            for o in &t.objects {
                pairs.insert((o.category.clone(), o.instance));
            }
        }
        for (cat, n) in &m.object_instances {
            assert_eq!(*n as usize, pairs.iter().filter(|(c, _)| c == cat).count());
        }
    }

    #[test]
    fn summary_never_reports_undeclared_factors() {
        let d = collect_demos(&WorldConfig::pick_place_cousin(), 5, 1, SourceTag::DigitalCousin).unwrap();
        let m = summarize(&d);
        assert!(m.object_categories.is_subset(&d.manifest.object_categories));
        assert!(m.task_ids.is_subset(&d.manifest.task_ids));
    }

    #[test]
    fn table_lists_every_factor() {
        let t = diff(&manifest(), &manifest()).to_table();
        assert_eq!(t.lines().count(), 9);
        assert!(t.contains("init region IoU"));
    }

    fn arb_manifest() -> impl Strategy<Value = CompositionManifest> {
        (
            -1.0f64..1.0,
            -1.0f64..1.0,
            -3.1f64..3.1,
            0.0f64..0.5,
            0.0f64..0.5,
            0.01f64..0.5,
            0.01f64..0.5,
            prop::collection::btree_set("[a-d]", 0..4),
            0.0f64..0.01,
        )
            .prop_map(|(x, y, th, rx, ry, w, h, cats, noise)| {
                let mut m = fixtures::manifest(&[]);
                m.camera.center = Pose2::new(x, y, th);
                m.init_region = Rect::new(rx, ry, rx + w, ry + h);
                m.object_instances = cats.iter().map(|c| (c.clone(), 1)).collect();
                m.object_categories = cats;
                m.dynamics.action_noise_std = noise;
                m
            })
    }

    proptest! {
        #[test]
        fn diff_is_symmetric(a in arb_manifest(), b in arb_manifest()) {
            let (ab, ba) = (diff(&a, &b), diff(&b, &a));
            prop_assert_eq!(ab.camera_translation_delta, ba.camera_translation_delta);
            prop_assert!((ab.camera_rotation_delta - ba.camera_rotation_delta).abs() < 1e-9);
            prop_assert!((ab.init_region_iou - ba.init_region_iou).abs() < 1e-12);
            prop_assert_eq!(ab.dynamics_delta, ba.dynamics_delta);
            prop_assert_eq!(ab.category_overlap, ba.category_overlap.swapped());
            prop_assert!((0.0..=1.0).contains(&ab.init_region_iou));
            prop_assert!(ab.camera_rotation_delta >= 0.0 && ab.camera_rotation_delta <= 180.0);
        }

        #[test]
        fn camera_translation_obeys_triangle_inequality(a in arb_manifest(), b in arb_manifest(), c in arb_manifest()) {
            let ab = diff(&a, &b).camera_translation_delta;
            let bc = diff(&b, &c).camera_translation_delta;
            let ac = diff(&a, &c).camera_translation_delta;
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn self_diff_is_identity(a in arb_manifest()) {
            let d = diff(&a, &a);
            prop_assert_eq!(d.camera_translation_delta, 0.0);
            prop_assert_eq!(d.init_region_iou, 1.0);
            prop_assert_eq!(d.category_overlap.a_only + d.category_overlap.b_only, 0);
        }
    }
}
