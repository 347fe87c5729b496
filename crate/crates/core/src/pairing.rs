//! Rigid poses, scan reprojection between sensor frames, and pose-based
//! matching of two traversals.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::range_image::{Point, PointCloud};

const ORTHO_TOL: f64 = 1e-6;

/// Sensor-to-world transform of one scan: `p_world = R p + T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub index: usize,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    /// Unchecked constructor; see [`Pose::validate`].
    pub fn new(index: usize, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            index,
            rotation,
            translation,
        }
    }

    pub fn identity(index: usize) -> Self {
        Self::new(index, Matrix3::identity(), Vector3::zeros())
    }

    /// Planar pose: heading `yaw` (radians) about +z at `(x, y, z)`.
    pub fn from_xy_yaw(index: usize, x: f64, y: f64, z: f64, yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        let r = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        Self::new(index, r, Vector3::new(x, y, z))
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        if !r.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::input(format!("pose {} is not finite", self.index)));
        }
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > ORTHO_TOL {
            return Err(Error::input(format!(
                "pose {} rotation is not orthonormal (|R^T R - I| = {err:.3e})",
                self.index
            )));
        }
        if r.determinant() <= 0.0 {
            return Err(Error::input(format!("pose {} rotation has det <= 0", self.index)));
        }
        Ok(())
    }

    pub fn homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Geodesic angle of `R_other^T R_self`, degrees.
    pub fn angle_to_deg(&self, other: &Pose) -> f64 {
        let rel = other.rotation.transpose() * self.rotation;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    }
}

/// Re-expresses points observed from `src` in the sensor frame of `dst`:
/// `p_dst = R_dst^T (R_src p + T_src - T_dst)`.
pub fn reproject_scan(scan: &PointCloud, src: &Pose, dst: &Pose) -> Result<PointCloud> {
    src.validate()?;
    dst.validate()?;
    let rinv = dst.rotation.transpose();
    let points = scan
        .points
        .iter()
        .map(|p| {
            let v = rinv * (src.rotation * Vector3::new(p.x, p.y, p.z) + src.translation - dst.translation);
            Point::new(v.x, v.y, v.z, p.intensity)
        })
        .collect();
    Ok(PointCloud::new(points))
}

/// For each pose in `seq_a`, the nearest pose in `seq_b` (by translation)
/// among those within both thresholds. Ties go to the lower `seq_b`
/// position. Returned pairs hold the `index` fields of the matched poses.
pub fn find_aligned_pairs(
    seq_a: &[Pose],
    seq_b: &[Pose],
    dist_thresh: f64,
    ang_thresh_deg: f64,
) -> Result<Vec<(usize, usize)>> {
    if !(dist_thresh > 0.0) || !(ang_thresh_deg > 0.0) {
        return Err(Error::config("pairing thresholds must be positive"));
    }
    let mut out = Vec::new();
    for a in seq_a {
        let mut best: Option<(f64, &Pose)> = None;
        for b in seq_b {
            let d = a.distance_to(b);
            if d >= dist_thresh || a.angle_to_deg(b) >= ang_thresh_deg {
                continue;
            }
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, b));
            }
        }
        if let Some((_, b)) = best {
            out.push((a.index, b.index));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairingConfig {
    /// Meters.
    pub dist_thresh: f64,
    /// Degrees.
    pub ang_thresh: f64,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self {
            dist_thresh: 0.01,
            ang_thresh: 0.1,
        }
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::{Rotation3, Vector4};
    use proptest::prelude::*;

    use super::*;

    fn pose_from(index: usize, axis_angle: [f64; 3], t: [f64; 3]) -> Pose {
        let r = Rotation3::new(Vector3::from(axis_angle)).into_inner();
        Pose::new(index, r, Vector3::from(t))
    }

    #[test]
    fn same_pose_is_identity() {
        let p = pose_from(0, [0.1, -0.3, 0.7], [3.0, -2.0, 1.0]);
        let cloud = PointCloud::new(vec![Point::new(1.0, 2.0, 3.0, 0.25)]);
        let out = reproject_scan(&cloud, &p, &p).unwrap();
        let q = out.points[0];
        assert!((q.x - 1.0).abs() < 1e-12 && (q.y - 2.0).abs() < 1e-12 && (q.z - 3.0).abs() < 1e-12);
        assert_eq!(q.intensity, 0.25);
    }

    #[test]
    fn pure_translation() {
        let src = Pose::new(0, Matrix3::identity(), Vector3::new(1.0, 0.0, 0.0));
        let dst = Pose::identity(1);
        let cloud = PointCloud::new(vec![Point::new(0.0, 0.0, 0.0, 0.5)]);
        let q = reproject_scan(&cloud, &src, &dst).unwrap().points[0];
        assert_eq!((q.x, q.y, q.z), (1.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let bad = Pose::new(0, Matrix3::identity() * 1.1, Vector3::zeros());
        let r = reproject_scan(&PointCloud::default(), &bad, &Pose::identity(1));
        assert!(matches!(r, Err(Error::Input(_))));
        let mirror = Pose::new(0, Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0)), Vector3::zeros());
        assert!(mirror.validate().is_err());
    }

    #[test]
    fn default_thresholds() {
        let c = PairingConfig::default();
        assert_eq!((c.dist_thresh, c.ang_thresh), (0.01, 0.1));
    }

    #[test]
    fn identical_sequences_pair_with_self() {
        let seq: Vec<Pose> = (0..5).map(|i| Pose::from_xy_yaw(i, i as f64, 0.0, 0.0, 0.0)).collect();
        let pairs = find_aligned_pairs(&seq, &seq, 0.01, 0.1).unwrap();
        assert_eq!(pairs, (0..5).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn distance_threshold_excludes() {
        let a = [Pose::identity(0)];
        let b = [Pose::from_xy_yaw(0, 0.02, 0.0, 0.0, 0.0)];
        assert!(find_aligned_pairs(&a, &b, 0.01, 0.1).unwrap().is_empty());
    }

    #[test]
    fn angle_threshold_excludes_and_ties_take_lower() {
        let a = [Pose::identity(0)];
        let b = [
            Pose::from_xy_yaw(7, 0.0, 0.0, 0.0, 0.2f64.to_radians()),
            Pose::from_xy_yaw(8, 0.005, 0.0, 0.0, 0.0),
            Pose::from_xy_yaw(9, -0.005, 0.0, 0.0, 0.0),
        ];
        assert_eq!(find_aligned_pairs(&a, &b, 0.01, 0.1).unwrap(), vec![(0, 8)]);
    }

    #[test]
    fn angle_matches_geodesic() {
        let a = pose_from(0, [0.0, 0.0, 0.3], [0.0; 3]);
        let b = Pose::identity(1);
        assert!((a.angle_to_deg(&b) - 0.3f64.to_degrees()).abs() < 1e-9);
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (prop::array::uniform3(-3.0f64..3.0), prop::array::uniform3(-50.0f64..50.0))
            .prop_map(|(aa, t)| pose_from(0, aa, t))
    }

    proptest! {
        #[test]
        fn matches_homogeneous_oracle(src in arb_pose(), dst in arb_pose(), p in prop::array::uniform3(-80.0f64..80.0)) {
            let cloud = PointCloud::new(vec![Point::new(p[0], p[1], p[2], 0.5)]);
            let got = reproject_scan(&cloud, &src, &dst).unwrap().points[0];
            let m = dst.homogeneous().try_inverse().unwrap() * src.homogeneous();
            let want = m * Vector4::new(p[0], p[1], p[2], 1.0);
            prop_assert!((got.x - want.x).abs() < 1e-9);
            prop_assert!((got.y - want.y).abs() < 1e-9);
            prop_assert!((got.z - want.z).abs() < 1e-9);
        }

        #[test]
        fn round_trip(a in arb_pose(), b in arb_pose(), p in prop::array::uniform3(-80.0f64..80.0)) {
            let cloud = PointCloud::new(vec![Point::new(p[0], p[1], p[2], 0.5)]);
            let there = reproject_scan(&cloud, &a, &b).unwrap();
            let back = reproject_scan(&there, &b, &a).unwrap().points[0];
            prop_assert!((back.x - p[0]).abs() < 1e-5);
            prop_assert!((back.y - p[1]).abs() < 1e-5);
            prop_assert!((back.z - p[2]).abs() < 1e-5);
        }

        #[test]
        fn pairing_symmetric_under_swap(offsets in prop::collection::vec(-0.02f64..0.02, 1..8)) {
            let a: Vec<Pose> = (0..offsets.len()).map(|i| Pose::from_xy_yaw(i, 10.0 * i as f64, 0.0, 0.0, 0.0)).collect();
            let b: Vec<Pose> = offsets.iter().enumerate().map(|(i, o)| Pose::from_xy_yaw(i, 10.0 * i as f64 + o, 0.0, 0.0, 0.0)).collect();
            let ab = find_aligned_pairs(&a, &b, 0.01, 0.1).unwrap();
            let mut ba: Vec<(usize, usize)> = find_aligned_pairs(&b, &a, 0.01, 0.1).unwrap().into_iter().map(|(x, y)| (y, x)).collect();
            ba.sort();
            prop_assert_eq!(ab, ba);
        }
    }
}
