//! Adapting a demonstration to new start and goal points.
//!
//! The demonstration is scaled by the ratio of chord lengths and rotated so
//! that its chord points along `goal - start`. Orientation, angular velocity
//! and wrench channels are carried over untouched.

use nalgebra::{Matrix3, Vector3, Vector6};

use crate::demo::Demonstration;
use crate::error::{Error, Result};
use crate::kdtree::{nearest_linear, KdTree};

/// Chords shorter than this cannot define an alignment.
pub const MIN_CHORD: f64 = 1e-6;

/// Start/goal displacement that triggers rebuilding a transformed demo.
pub const REBUILD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub start: Vector3<f64>,
    pub goal: Vector3<f64>,
    /// First point of the source demonstration.
    pub origin: Vector3<f64>,
}

impl Alignment {
    pub fn compute(demo: &Demonstration, start: Vector3<f64>, goal: Vector3<f64>) -> Result<Self> {
        let chord = demo.chord();
        let target = goal - start;
        for len in [chord.norm(), target.norm()] {
            if !(len > MIN_CHORD) {
                return Err(Error::DegenerateChord {
                    length: len,
                    min: MIN_CHORD,
                });
            }
        }
        Ok(Alignment {
            scale: target.norm() / chord.norm(),
            rotation: rotation_between(&chord.normalize(), &target.normalize()),
            start,
            goal,
            origin: demo.first_position(),
        })
    }

    /// Identity alignment onto the demo's own endpoints.
    pub fn identity(demo: &Demonstration) -> Result<Self> {
        Alignment::compute(demo, demo.first_position(), demo.last_position())
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * (p - self.origin)) + self.start
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * v)
    }

    /// True when `start`/`goal` moved far enough to need a rebuild.
    pub fn is_stale(&self, start: &Vector3<f64>, goal: &Vector3<f64>) -> bool {
        (self.start - start).norm() > REBUILD_TOLERANCE || (self.goal - goal).norm() > REBUILD_TOLERANCE
    }
}

/// Rotation taking unit vector `from` onto unit vector `to` (Rodrigues).
///
/// Antiparallel inputs rotate by π about the unit axis orthogonal to `from`
/// with the largest `+z` component. Near-antiparallel inputs first flip
/// `from` that way and then apply the well-conditioned remainder.
pub fn rotation_between(from: &Vector3<f64>, to: &Vector3<f64>) -> Matrix3<f64> {
    let c = from.dot(to);
    if c > -0.5 {
        return rodrigues(from, to);
    }
    let axis = flip_axis(from);
    let flip = 2.0 * axis * axis.transpose() - Matrix3::identity();
    let flipped = -from;
    rodrigues(&flipped, to) * flip
}

fn rodrigues(from: &Vector3<f64>, to: &Vector3<f64>) -> Matrix3<f64> {
    let v = from.cross(to);
    let c = from.dot(to);
    let k = v.cross_matrix();
    Matrix3::identity() + k + k * k * (1.0 / (1.0 + c))
}

fn flip_axis(chord: &Vector3<f64>) -> Vector3<f64> {
    let project = |e: Vector3<f64>| e - chord * chord.dot(&e);
    let a = project(Vector3::z());
    if a.norm() > 1e-6 {
        a.normalize()
    } else {
        // chord along z: every orthogonal axis has zero z component
        project(Vector3::x()).normalize()
    }
}

/// A demonstration mapped onto new endpoints, with a spatial index.
#[derive(Debug, Clone)]
pub struct TransformedDemo {
    alignment: Alignment,
    positions: Vec<Vector3<f64>>,
    lin_vels: Vec<Vector3<f64>>,
    eulers: Vec<Vector3<f64>>,
    ang_vels: Vec<Vector3<f64>>,
    wrenches: Vec<Vector6<f64>>,
    index: KdTree,
}

impl TransformedDemo {
    pub fn new(demo: &Demonstration, alignment: Alignment) -> Self {
        let positions: Vec<_> = demo
            .positions()
            .iter()
            .map(|p| alignment.apply_point(p))
            .collect();
        let lin_vels = demo
            .lin_vels()
            .iter()
            .map(|v| alignment.apply_vector(v))
            .collect();
        let index = KdTree::build(&positions);
        TransformedDemo {
            alignment,
            positions,
            lin_vels,
            eulers: demo.eulers().to_vec(),
            ang_vels: demo.ang_vels().to_vec(),
            wrenches: demo.wrenches().to_vec(),
            index,
        }
    }

    pub fn build(demo: &Demonstration, start: Vector3<f64>, goal: Vector3<f64>) -> Result<Self> {
        Ok(TransformedDemo::new(demo, Alignment::compute(demo, start, goal)?))
    }

    pub fn alignment(&self) -> &Alignment {
        &self.alignment
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn lin_vels(&self) -> &[Vector3<f64>] {
        &self.lin_vels
    }

    pub fn eulers(&self) -> &[Vector3<f64>] {
        &self.eulers
    }

    pub fn ang_vels(&self) -> &[Vector3<f64>] {
        &self.ang_vels
    }

    pub fn wrenches(&self) -> &[Vector6<f64>] {
        &self.wrenches
    }

    pub fn goal(&self) -> Vector3<f64> {
        self.alignment.goal
    }

    pub fn start(&self) -> Vector3<f64> {
        self.alignment.start
    }

    /// Nearest transformed sample (kd-tree), lowest index on ties.
    pub fn nearest_index(&self, x: &Vector3<f64>) -> usize {
        self.index.nearest(x).expect("transformed demo is never empty")
    }

    /// Linear-scan reference for [`Self::nearest_index`].
    pub fn nearest_index_linear(&self, x: &Vector3<f64>) -> usize {
        nearest_linear(&self.positions, x).expect("transformed demo is never empty")
    }

    /// Nearest sample restricted to `center ± window`.
    pub fn nearest_index_windowed(&self, x: &Vector3<f64>, center: usize, window: usize) -> usize {
        let lo = center.saturating_sub(window);
        let hi = (center + window + 1).min(self.len());
        lo + nearest_linear(&self.positions[lo..hi], x).expect("window is never empty")
    }

    /// Distance from `x` to the polyline through the transformed samples.
    pub fn distance_to_path(&self, x: &Vector3<f64>) -> f64 {
        self.positions
            .windows(2)
            .map(|w| point_segment_distance(x, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = self.positions[0];
        let mut hi = lo;
        for p in &self.positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (hi - lo).norm()
    }
}

pub fn point_segment_distance(x: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (x - a).norm();
    }
    let t = ((x - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (x - (a + ab * t)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn line_demo(chord: Vector3<f64>) -> Demonstration {
        let positions = (0..11).map(|i| chord * (i as f64 / 10.0)).collect();
        Demonstration::from_positions(positions, 0.1).unwrap()
    }

    #[test]
    fn identity_alignment() {
        let d = line_demo(Vector3::new(0.3, 0.1, -0.2));
        let a = Alignment::identity(&d).unwrap();
        assert!((a.scale - 1.0).abs() < 1e-15);
        assert!((a.rotation - Matrix3::identity()).norm() < 1e-15);
        let td = TransformedDemo::new(&d, a);
        for (p, q) in td.positions().iter().zip(d.positions()) {
            assert!((p - q).norm() < 1e-15);
        }
    }

    #[test]
    fn quarter_turn_about_z() {
        let d = line_demo(Vector3::new(1.0, 0.0, 0.0));
        let a = Alignment::compute(&d, Vector3::zeros(), Vector3::new(0.0, 2.0, 0.0)).unwrap();
        assert!((a.scale - 2.0).abs() < 1e-15);
        let expected = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        assert!((a.rotation - expected.matrix()).norm() < 1e-12);
    }

    #[test]
    fn antiparallel_uses_deterministic_axis() {
        let d = line_demo(Vector3::new(1.0, 0.0, 0.0));
        let a = Alignment::compute(&d, Vector3::zeros(), Vector3::new(-1.0, 0.0, 0.0)).unwrap();
        let r = a.rotation;
        assert!((r * Vector3::x() + Vector3::x()).norm() < 1e-12);
        // rotation by π about +z keeps z fixed
        assert!((r * Vector3::z() - Vector3::z()).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);

        // chord along z falls back to an axis in the xy plane
        let d = line_demo(Vector3::new(0.0, 0.0, 1.0));
        let a = Alignment::compute(&d, Vector3::zeros(), Vector3::new(0.0, 0.0, -3.0)).unwrap();
        assert!((a.rotation * Vector3::z() + Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn degenerate_chords() {
        let d = line_demo(Vector3::new(1.0, 0.0, 0.0));
        let p = Vector3::new(0.2, 0.2, 0.2);
        assert!(matches!(
            Alignment::compute(&d, p, p + Vector3::repeat(1e-7)),
            Err(Error::DegenerateChord { .. })
        ));
        let mut pts: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        pts.push(Vector3::zeros());
        let closed = Demonstration::from_positions(pts, 0.1).unwrap();
        assert!(Alignment::compute(&closed, Vector3::zeros(), Vector3::x()).is_err());
    }

    #[test]
    fn scaling_doubles_length_and_speed() {
        let d = line_demo(Vector3::new(1.0, 0.0, 0.0));
        let td = TransformedDemo::build(&d, Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0)).unwrap();
        let len: f64 = td.positions().windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        assert!((len - 2.0).abs() < 1e-12);
        for (v, w) in td.lin_vels().iter().zip(d.lin_vels()) {
            assert!((v.norm() - 2.0 * w.norm()).abs() < 1e-12);
        }
        assert_eq!(td.wrenches(), d.wrenches());
    }

    #[test]
    fn nearest_exact_hit_and_tie() {
        let pts: Vec<_> = (0..11).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let d = Demonstration::from_positions(pts, 0.1).unwrap();
        let td = TransformedDemo::new(&d, Alignment::identity(&d).unwrap());
        assert_eq!(td.nearest_index(&Vector3::new(6.0, 0.0, 0.0)), 6);
        // equidistant from 3 and 7 once 4..=6 are far away: use a bent query
        let q = Vector3::new(5.0, 1e3, 0.0);
        assert_eq!(td.nearest_index(&q), td.nearest_index_linear(&q));
        let q = Vector3::new(5.0, 0.0, 0.0);
        assert_eq!(td.nearest_index_windowed(&q, 1, 2), 3);
    }

    #[test]
    fn equidistant_samples_pick_lowest_index() {
        // samples 3 and 7 sit symmetric about the query, the rest are further away
        let mut pts: Vec<_> = (0..10).map(|i| Vector3::new(i as f64, 10.0, 0.0)).collect();
        pts[3] = Vector3::new(-1.0, 0.0, 0.0);
        pts[7] = Vector3::new(1.0, 0.0, 0.0);
        let d = Demonstration::from_positions(pts, 0.1).unwrap();
        let td = TransformedDemo::new(&d, Alignment::identity(&d).unwrap());
        assert_eq!(td.nearest_index(&Vector3::zeros()), 3);
        assert_eq!(td.nearest_index_linear(&Vector3::zeros()), 3);
    }

    #[test]
    fn stale_detection() {
        let d = line_demo(Vector3::new(1.0, 0.0, 0.0));
        let a = Alignment::identity(&d).unwrap();
        assert!(!a.is_stale(&Vector3::zeros(), &Vector3::new(1.0, 0.0, 0.00005)));
        assert!(a.is_stale(&Vector3::zeros(), &Vector3::new(1.0, 0.0, 0.0002)));
    }
}
