//! Camera poses, per-entry normalization into the encoder's `[-1, 1]` box,
//! and interpolation/extrapolation classification of query views.
//!
//! Two parameterizations are supported. A [`CameraPose::Matrix`] carries a
//! row-major camera-to-world matrix whose top three rows (12 entries) are the
//! free parameters. A [`CameraPose::Spherical`] carries polar/azimuth angles
//! at a fixed radius, with the camera looking at the origin.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of free entries in a camera-to-world matrix (top three rows).
pub const MATRIX_PARAMS: usize = 12;
/// Number of free entries in a spherical pose (radius is fixed per dataset).
pub const SPHERICAL_PARAMS: usize = 2;

const BOTTOM_ROW_TOL: f64 = 1e-9;
const HULL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoseKind {
    ProjectionMatrix,
    Spherical,
}

impl PoseKind {
    pub fn vector_len(self) -> usize {
        match self {
            PoseKind::ProjectionMatrix => MATRIX_PARAMS,
            PoseKind::Spherical => SPHERICAL_PARAMS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPose {
    pub theta: f64,
    pub phi: f64,
    pub radius: f64,
}

impl SphericalPose {
    pub fn new(theta: f64, phi: f64, radius: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::InvalidPose(format!("theta {theta} outside [0, pi]")));
        }
        if !(0.0..TAU).contains(&phi) {
            return Err(Error::InvalidPose(format!("phi {phi} outside [0, 2pi)")));
        }
        if radius.is_nan() || radius <= 0.0 {
            return Err(Error::InvalidPose(format!("radius {radius} is not positive")));
        }
        Ok(Self { theta, phi, radius })
    }

    /// Builds a pose from degrees, wrapping the azimuth into `[0, 360)`.
    pub fn from_degrees(theta_deg: f64, phi_deg: f64, radius: f64) -> Result<Self> {
        Self::new(
            theta_deg.to_radians(),
            wrap_angle(phi_deg.to_radians()),
            radius,
        )
    }

    pub fn center(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [
            self.radius * st * cp,
            self.radius * st * sp,
            self.radius * ct,
        ]
    }

    /// Camera-to-world matrix for a camera at this position looking at the
    /// origin, OpenCV axes (x right, y down, z forward), world z up.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let c = self.center();
        let forward = normalize3(scale3(c, -1.0));
        let mut right = cross3(forward, [0.0, 0.0, 1.0]);
        if norm3(right) < 1e-9 {
            right = cross3(forward, [0.0, 1.0, 0.0]);
        }
        let right = normalize3(right);
        let down = cross3(forward, right);
        [
            [right[0], down[0], forward[0], c[0]],
            [right[1], down[1], forward[1], c[1]],
            [right[2], down[2], forward[2], c[2]],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CameraPose {
    ProjectionMatrix { matrix: [[f64; 4]; 4] },
    Spherical(SphericalPose),
}

impl CameraPose {
    pub fn from_matrix(matrix: [[f64; 4]; 4]) -> Result<Self> {
        let bottom = matrix[3];
        let expected = [0.0, 0.0, 0.0, 1.0];
        if bottom
            .iter()
            .zip(expected)
            .any(|(a, b)| (a - b).abs() > BOTTOM_ROW_TOL || !a.is_finite())
        {
            return Err(Error::NotCameraToWorld(bottom));
        }
        if matrix.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPose("non-finite matrix entry".into()));
        }
        Ok(CameraPose::ProjectionMatrix { matrix })
    }

    pub fn from_row_major(values: &[f64]) -> Result<Self> {
        if values.len() != 16 {
            return Err(Error::DimensionMismatch {
                expected: 16,
                got: values.len(),
            });
        }
        let mut m = [[0.0; 4]; 4];
        for (i, v) in values.iter().enumerate() {
            m[i / 4][i % 4] = *v;
        }
        Self::from_matrix(m)
    }

    pub fn spherical(theta: f64, phi: f64, radius: f64) -> Result<Self> {
        SphericalPose::new(theta, phi, radius).map(CameraPose::Spherical)
    }

    pub fn kind(&self) -> PoseKind {
        match self {
            CameraPose::ProjectionMatrix { .. } => PoseKind::ProjectionMatrix,
            CameraPose::Spherical(_) => PoseKind::Spherical,
        }
    }

    /// The 12 free matrix entries in row-major order. Spherical poses are
    /// converted through their look-at matrix.
    pub fn matrix_entries(&self) -> [f64; MATRIX_PARAMS] {
        let m = match self {
            CameraPose::ProjectionMatrix { matrix } => *matrix,
            CameraPose::Spherical(s) => s.to_matrix(),
        };
        let mut out = [0.0; MATRIX_PARAMS];
        for r in 0..3 {
            out[r * 4..r * 4 + 4].copy_from_slice(&m[r]);
        }
        out
    }

    /// `(theta, phi)` of the camera center, assuming the object sits at the
    /// world origin. `phi` is in `[0, 2pi)`.
    pub fn angles(&self) -> Result<(f64, f64)> {
        match self {
            CameraPose::Spherical(s) => Ok((s.theta, s.phi)),
            CameraPose::ProjectionMatrix { matrix } => {
                let c = [matrix[0][3], matrix[1][3], matrix[2][3]];
                let r = norm3(c);
                if r < 1e-12 {
                    return Err(Error::InvalidPose(
                        "camera center at the origin has no spherical angles".into(),
                    ));
                }
                let theta = (c[2] / r).clamp(-1.0, 1.0).acos();
                let phi = wrap_angle(c[1].atan2(c[0]));
                Ok((theta, phi))
            }
        }
    }

    /// Converts to the spherical parameterization at the pose's own radius.
    pub fn to_spherical(&self) -> Result<SphericalPose> {
        match self {
            CameraPose::Spherical(s) => Ok(*s),
            CameraPose::ProjectionMatrix { matrix } => {
                let (theta, phi) = self.angles()?;
                let radius = norm3([matrix[0][3], matrix[1][3], matrix[2][3]]);
                SphericalPose::new(theta, phi, radius)
            }
        }
    }
}

/// Per-entry min/max of the 12 free matrix entries over a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: [f64; MATRIX_PARAMS],
    pub max: [f64; MATRIX_PARAMS],
    pub source: String,
}

impl NormalizationStats {
    pub fn is_constant(&self, i: usize) -> bool {
        self.min[i] == self.max[i]
    }

    pub fn constant_entries(&self) -> Vec<usize> {
        (0..MATRIX_PARAMS).filter(|&i| self.is_constant(i)).collect()
    }

    /// Maps normalized components back to matrix entries. Constant entries
    /// return their fitted value.
    pub fn denormalize(&self, values: &[f64]) -> Result<[f64; MATRIX_PARAMS]> {
        if values.len() != MATRIX_PARAMS {
            return Err(Error::DimensionMismatch {
                expected: MATRIX_PARAMS,
                got: values.len(),
            });
        }
        let mut out = [0.0; MATRIX_PARAMS];
        for i in 0..MATRIX_PARAMS {
            out[i] = if self.is_constant(i) {
                self.min[i]
            } else {
                self.min[i] + (values[i] + 1.0) * 0.5 * (self.max[i] - self.min[i])
            };
        }
        Ok(out)
    }
}

/// Angle ranges mapped affinely onto `[-1, 1]` for spherical poses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleRanges {
    pub theta: (f64, f64),
    pub phi: (f64, f64),
}

impl Default for AngleRanges {
    fn default() -> Self {
        Self {
            theta: (0.0, PI),
            phi: (0.0, TAU),
        }
    }
}

/// How a pose becomes a [`PoseVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PoseNormalizer {
    ProjectionMatrix(NormalizationStats),
    Spherical(AngleRanges),
}

impl PoseNormalizer {
    pub fn kind(&self) -> PoseKind {
        match self {
            PoseNormalizer::ProjectionMatrix(_) => PoseKind::ProjectionMatrix,
            PoseNormalizer::Spherical(_) => PoseKind::Spherical,
        }
    }

    /// Fits a normalizer of the given kind on a training split.
    pub fn fit(kind: PoseKind, poses: &[CameraPose], source: &str) -> Result<Self> {
        match kind {
            PoseKind::ProjectionMatrix => {
                let matrices = poses
                    .iter()
                    .map(|p| match p {
                        CameraPose::ProjectionMatrix { .. } => Ok(*p),
                        CameraPose::Spherical(s) => CameraPose::from_matrix(s.to_matrix()),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut stats = fit_normalization(&matrices)?;
                stats.source = source.to_string();
                Ok(PoseNormalizer::ProjectionMatrix(stats))
            }
            PoseKind::Spherical => Ok(PoseNormalizer::Spherical(AngleRanges::default())),
        }
    }

    pub fn normalize(&self, pose: &CameraPose) -> Result<PoseVector> {
        to_pose_vector(pose, self)
    }
}

/// Normalized pose parameters, each in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseVector {
    pub values: Vec<f64>,
    /// Number of components that fell outside the fitted range and were clamped.
    pub clamped: usize,
}

impl PoseVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn was_clamped(&self) -> bool {
        self.clamped > 0
    }
}

pub fn fit_normalization(poses: &[CameraPose]) -> Result<NormalizationStats> {
    if poses.len() < 2 {
        return Err(Error::InsufficientPoses {
            needed: 2,
            got: poses.len(),
        });
    }
    if poses.iter().any(|p| p.kind() != PoseKind::ProjectionMatrix) {
        return Err(Error::MixedParameterizations);
    }
    let mut min = [f64::INFINITY; MATRIX_PARAMS];
    let mut max = [f64::NEG_INFINITY; MATRIX_PARAMS];
    for pose in poses {
        for (i, v) in pose.matrix_entries().into_iter().enumerate() {
            min[i] = min[i].min(v);
            max[i] = max[i].max(v);
        }
    }
    Ok(NormalizationStats {
        min,
        max,
        source: String::new(),
    })
}

fn affine_unit(x: f64, lo: f64, hi: f64) -> (f64, bool) {
    if lo == hi {
        return (0.0, false);
    }
    let v = 2.0 * (x - lo) / (hi - lo) - 1.0;
    if v > 1.0 {
        (1.0, true)
    } else if v < -1.0 {
        (-1.0, true)
    } else {
        (v, false)
    }
}

pub fn to_pose_vector(pose: &CameraPose, normalizer: &PoseNormalizer) -> Result<PoseVector> {
    let mut clamped = 0;
    let values = match normalizer {
        PoseNormalizer::ProjectionMatrix(stats) => {
            if pose.kind() != PoseKind::ProjectionMatrix {
                return Err(Error::MixedParameterizations);
            }
            pose.matrix_entries()
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let (v, c) = affine_unit(x, stats.min[i], stats.max[i]);
                    clamped += c as usize;
                    v
                })
                .collect()
        }
        PoseNormalizer::Spherical(ranges) => {
            let (theta, phi) = pose.angles()?;
            [(theta, ranges.theta), (phi, ranges.phi)]
                .into_iter()
                .map(|(x, (lo, hi))| {
                    let (v, c) = affine_unit(x, lo, hi);
                    clamped += c as usize;
                    v
                })
                .collect()
        }
    };
    if clamped > 0 {
        log::warn!("pose clamped in {clamped} component(s)");
    }
    Ok(PoseVector { values, clamped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewClass {
    Interpolation,
    Extrapolation,
}

/// Interpolation iff the query's `(theta, phi)` lies inside or on the
/// boundary of the convex hull of the training views' angles.
///
/// Azimuths are unwrapped around the circular mean of the training set so a
/// rig straddling `phi = 0` keeps a contiguous hull.
pub fn classify_view(query: &CameraPose, train: &[CameraPose]) -> Result<ViewClass> {
    if train.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let train_angles = train
        .iter()
        .map(|p| p.angles())
        .collect::<Result<Vec<_>>>()?;
    let (sx, sy) = train_angles
        .iter()
        .fold((0.0, 0.0), |(x, y), (_, phi)| (x + phi.cos(), y + phi.sin()));
    let center = if sx.hypot(sy) < 1e-12 { PI } else { sy.atan2(sx) };
    let unwrap = |(theta, phi): (f64, f64)| [theta, wrap_signed(phi - center)];
    let points: Vec<[f64; 2]> = train_angles.into_iter().map(unwrap).collect();
    let q = unwrap(query.angles()?);
    Ok(if hull_contains(&points, q) {
        ViewClass::Interpolation
    } else {
        ViewClass::Extrapolation
    })
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Convex hull in counter-clockwise order (Andrew's monotone chain).
/// Collinear boundary points are dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= HULL_EPS && (a[1] - b[1]).abs() <= HULL_EPS);
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= HULL_EPS
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn on_segment(a: [f64; 2], b: [f64; 2], q: [f64; 2]) -> bool {
    if orient(a, b, q).abs() > HULL_EPS {
        return false;
    }
    let within = |i: usize| q[i] >= a[i].min(b[i]) - HULL_EPS && q[i] <= a[i].max(b[i]) + HULL_EPS;
    within(0) && within(1)
}

fn hull_contains(points: &[[f64; 2]], q: [f64; 2]) -> bool {
    let hull = convex_hull(points);
    match hull.len() {
        0 => false,
        1 => (hull[0][0] - q[0]).abs() <= HULL_EPS && (hull[0][1] - q[1]).abs() <= HULL_EPS,
        2 => on_segment(hull[0], hull[1], q),
        n => (0..n).all(|i| orient(hull[i], hull[(i + 1) % n], q) >= -HULL_EPS),
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

fn wrap_signed(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn normalize3(a: [f64; 3]) -> [f64; 3] {
    scale3(a, 1.0 / norm3(a))
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn translated(x: f64, y: f64, z: f64) -> CameraPose {
        CameraPose::from_matrix([
            [1.0, 0.0, 0.0, x],
            [0.0, 1.0, 0.0, y],
            [0.0, 0.0, 1.0, z],
            [0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap()
    }

    fn sph(theta_deg: f64, phi_deg: f64) -> CameraPose {
        CameraPose::Spherical(SphericalPose::from_degrees(theta_deg, phi_deg, 1.0).unwrap())
    }

    #[test]
    fn fit_requires_two_poses() {
        let err = fit_normalization(&[translated(0.0, 0.0, 1.0)]).unwrap_err();
        assert!(err.to_string().contains("insufficient poses"));
    }

    #[test]
    fn fit_rejects_mixed_kinds() {
        let err = fit_normalization(&[translated(0.0, 0.0, 1.0), sph(60.0, 10.0)]).unwrap_err();
        assert!(matches!(err, Error::MixedParameterizations));
    }

    #[test]
    fn fit_min_max_and_constant_flags() {
        let stats = fit_normalization(&[translated(-1.0, 2.0, 3.0), translated(4.0, 2.0, 5.0)]).unwrap();
        assert_eq!((stats.min[3], stats.max[3]), (-1.0, 4.0));
        assert_eq!((stats.min[11], stats.max[11]), (3.0, 5.0));
        assert!(stats.is_constant(7));
        assert!(stats.is_constant(0));
        assert!(!stats.is_constant(3));
    }

    #[test]
    fn pose_vector_boundaries() {
        let stats = fit_normalization(&[translated(-1.0, 0.0, 0.0), translated(3.0, 0.0, 0.0)]).unwrap();
        let norm = PoseNormalizer::ProjectionMatrix(stats);
        let v = norm.normalize(&translated(3.0, 0.0, 0.0)).unwrap();
        assert_eq!(v.values[3], 1.0);
        let v = norm.normalize(&translated(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(v.values[3], 0.0);
        // constant entries map to 0
        assert_eq!(v.values[0], 0.0);
        assert_eq!(v.clamped, 0);
    }

    #[test]
    fn out_of_range_clamps_with_flag() {
        let stats = fit_normalization(&[translated(0.0, 0.0, 0.0), translated(1.0, 0.0, 0.0)]).unwrap();
        let v = to_pose_vector(&translated(5.0, 0.0, 0.0), &PoseNormalizer::ProjectionMatrix(stats)).unwrap();
        assert_eq!(v.values[3], 1.0);
        assert_eq!(v.clamped, 1);
    }

    #[test]
    fn bottom_row_is_validated() {
        let mut m = [[0.0; 4]; 4];
        m[3] = [0.0, 0.0, 1.0, 1.0];
        assert!(matches!(CameraPose::from_matrix(m), Err(Error::NotCameraToWorld(_))));
    }

    #[test]
    fn spherical_invariants() {
        assert!(CameraPose::spherical(-0.1, 0.0, 1.0).is_err());
        assert!(CameraPose::spherical(0.5, TAU, 1.0).is_err());
        assert!(CameraPose::spherical(0.5, 0.0, 0.0).is_err());
        assert!(CameraPose::spherical(PI, 0.0, 2.0).is_ok());
    }

    #[test]
    fn spherical_matrix_round_trip() {
        let s = SphericalPose::from_degrees(70.0, 120.0, 2.5).unwrap();
        let m = CameraPose::from_matrix(s.to_matrix()).unwrap();
        let back = m.to_spherical().unwrap();
        assert!((back.theta - s.theta).abs() < 1e-12);
        assert!((back.phi - s.phi).abs() < 1e-12);
        assert!((back.radius - 2.5).abs() < 1e-12);
        // rotation block is orthonormal and the camera looks at the origin
        let r = s.to_matrix();
        let fwd = [r[0][2], r[1][2], r[2][2]];
        let c = s.center();
        let dot = fwd[0] * c[0] + fwd[1] * c[1] + fwd[2] * c[2];
        assert!((dot + 2.5).abs() < 1e-12);
    }

    #[test]
    fn spherical_pose_vector_affine() {
        let v = to_pose_vector(&sph(90.0, 180.0), &PoseNormalizer::Spherical(AngleRanges::default())).unwrap();
        assert!(v.values[0].abs() < 1e-12);
        assert!(v.values[1].abs() < 1e-12);
    }

    #[test]
    fn query_equal_to_train_is_interpolation() {
        let train = [sph(60.0, 0.0), sph(90.0, 80.0), sph(60.0, 160.0)];
        assert_eq!(classify_view(&train[1], &train).unwrap(), ViewClass::Interpolation);
    }

    #[test]
    fn midpoint_is_interpolation() {
        let train = [sph(60.0, 20.0), sph(80.0, 100.0)];
        assert_eq!(classify_view(&sph(70.0, 60.0), &train).unwrap(), ViewClass::Interpolation);
        assert_eq!(classify_view(&sph(70.0, 61.0), &train).unwrap(), ViewClass::Extrapolation);
    }

    #[test]
    fn single_point_hull() {
        let train = [sph(60.0, 20.0)];
        assert_eq!(classify_view(&sph(60.0, 20.0), &train).unwrap(), ViewClass::Interpolation);
        assert_eq!(classify_view(&sph(60.0, 21.0), &train).unwrap(), ViewClass::Extrapolation);
    }

    #[test]
    fn polar_beyond_train_is_extrapolation() {
        let train = [sph(60.0, 0.0), sph(70.0, 50.0), sph(65.0, 100.0), sph(60.0, 150.0)];
        assert_eq!(classify_view(&sph(85.0, 75.0), &train).unwrap(), ViewClass::Extrapolation);
    }

    #[test]
    fn hull_wraps_around_the_azimuth_seam() {
        let train = [sph(60.0, 340.0), sph(80.0, 340.0), sph(60.0, 20.0), sph(80.0, 20.0)];
        assert_eq!(classify_view(&sph(70.0, 0.0), &train).unwrap(), ViewClass::Interpolation);
        assert_eq!(classify_view(&sph(70.0, 180.0), &train).unwrap(), ViewClass::Extrapolation);
    }

    #[test]
    fn empty_train_set_errors() {
        assert!(matches!(classify_view(&sph(60.0, 0.0), &[]), Err(Error::EmptyTrainSet)));
    }

    #[test]
    fn matrix_poses_classify_through_camera_center() {
        let train: Vec<CameraPose> = [(60.0, 10.0), (90.0, 10.0), (60.0, 150.0), (90.0, 150.0)]
            .iter()
            .map(|&(t, p)| CameraPose::from_matrix(SphericalPose::from_degrees(t, p, 3.0).unwrap().to_matrix()).unwrap())
            .collect();
        let q = CameraPose::from_matrix(SphericalPose::from_degrees(75.0, 80.0, 3.0).unwrap().to_matrix()).unwrap();
        assert_eq!(classify_view(&q, &train).unwrap(), ViewClass::Interpolation);
    }

    fn arb_angles() -> impl Strategy<Value = (f64, f64)> {
        (0.3f64..2.8, 0.0f64..3.0)
    }

    proptest! {
        #[test]
        fn normalization_round_trips(xs in proptest::collection::vec(-50.0f64..50.0, 12), ys in proptest::collection::vec(-50.0f64..50.0, 12), t in 0.0f64..1.0) {
            let mut a = [[0.0; 4]; 4];
            let mut b = [[0.0; 4]; 4];
            let mut q = [[0.0; 4]; 4];
            for i in 0..12 {
                a[i / 4][i % 4] = xs[i];
                b[i / 4][i % 4] = ys[i];
                q[i / 4][i % 4] = xs[i] + t * (ys[i] - xs[i]);
            }
            a[3][3] = 1.0; b[3][3] = 1.0; q[3][3] = 1.0;
            let pa = CameraPose::from_matrix(a).unwrap();
            let pb = CameraPose::from_matrix(b).unwrap();
            let pq = CameraPose::from_matrix(q).unwrap();
            let stats = fit_normalization(&[pa, pb]).unwrap();
            let v = to_pose_vector(&pq, &PoseNormalizer::ProjectionMatrix(stats.clone())).unwrap();
            prop_assert!(v.values.iter().all(|x| (-1.0..=1.0).contains(x)));
            let back = stats.denormalize(&v.values).unwrap();
            let entries = pq.matrix_entries();
            for i in 0..12 {
                if !stats.is_constant(i) {
                    prop_assert!((back[i] - entries[i]).abs() < 1e-12 * (1.0 + entries[i].abs()) * 10.0);
                }
            }
        }

        #[test]
        fn normalization_is_monotone(lo in -5.0f64..0.0, hi in 0.1f64..5.0, x in -6.0f64..6.0, dx in 0.0f64..1.0) {
            let stats = fit_normalization(&[translated(lo, 0.0, 0.0), translated(hi, 0.0, 0.0)]).unwrap();
            let n = PoseNormalizer::ProjectionMatrix(stats);
            let a = n.normalize(&translated(x, 0.0, 0.0)).unwrap().values[3];
            let b = n.normalize(&translated(x + dx, 0.0, 0.0)).unwrap().values[3];
            prop_assert!(b >= a);
        }

        #[test]
        fn classification_ignores_train_order(pts in proptest::collection::vec(arb_angles(), 1..7), q in arb_angles(), seed in any::<u64>()) {
            let train: Vec<CameraPose> = pts.iter().map(|&(t, p)| CameraPose::spherical(t, p, 1.0).unwrap()).collect();
            let mut shuffled = train.clone();
            let n = shuffled.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let query = CameraPose::spherical(q.0, q.1, 1.0).unwrap();
            prop_assert_eq!(classify_view(&query, &train).unwrap(), classify_view(&query, &shuffled).unwrap());
        }

        #[test]
        fn convex_combinations_are_interpolations(pts in proptest::collection::vec(arb_angles(), 1..7), weights in proptest::collection::vec(0.0f64..1.0, 7)) {
            let train: Vec<CameraPose> = pts.iter().map(|&(t, p)| CameraPose::spherical(t, p, 1.0).unwrap()).collect();
            let w = &weights[..pts.len()];
            let total: f64 = w.iter().sum::<f64>().max(1e-9);
            let theta = pts.iter().zip(w).map(|(p, w)| p.0 * w).sum::<f64>() / total;
            let phi = pts.iter().zip(w).map(|(p, w)| p.1 * w).sum::<f64>() / total;
            prop_assume!(total > 1e-6);
            let query = CameraPose::spherical(theta, phi, 1.0).unwrap();
            prop_assert_eq!(classify_view(&query, &train).unwrap(), ViewClass::Interpolation);
        }
    }
}
