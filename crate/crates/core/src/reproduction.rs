//! Kinematic integration of the motion field for reproduction benchmarks.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitCircle, UnitSphere};

use crate::demo::Demonstration;
use crate::error::Result;
use crate::motion::{generate, MotionParams, ObstacleSphere};
use crate::transform::TransformedDemo;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSettings {
    pub dt: f64,
    pub max_steps: usize,
    /// Integration stops once this close to the goal, m.
    pub goal_tolerance: f64,
    /// Fraction of the bounding-box diagonal counted as reaching the path.
    pub contact_fraction: f64,
    pub record_path: bool,
}

impl Default for FieldSettings {
    fn default() -> Self {
        FieldSettings {
            dt: 1e-3,
            max_steps: 60_000,
            goal_tolerance: 5e-3,
            contact_fraction: 0.02,
            record_path: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldRun {
    pub start: Vector3<f64>,
    pub steps: usize,
    pub goal_reached: bool,
    pub final_error: f64,
    /// Step at which the state first came within the contact distance.
    pub contact_step: Option<usize>,
    /// Mean distance to the demo polyline from `contact_step` on, m.
    pub mean_deviation: Option<f64>,
    pub max_deviation: Option<f64>,
    pub path: Vec<Vector3<f64>>,
}

/// Integrates `ẋ = ẋ_ref(x)` at zero authority with explicit Euler steps.
pub fn integrate_field(
    td: &TransformedDemo,
    params: &MotionParams,
    obstacles: &[ObstacleSphere],
    start: Vector3<f64>,
    settings: &FieldSettings,
) -> Result<FieldRun> {
    let goal = td.goal();
    let contact_dist = settings.contact_fraction * td.bbox_diagonal();
    let theta = td.eulers()[0];
    let mut x = start;
    let mut path = Vec::new();
    let mut contact_step = None;
    let (mut dev_sum, mut dev_max, mut dev_n) = (0.0, 0.0f64, 0usize);
    let mut steps = 0;
    let mut prev = None;
    while steps < settings.max_steps && (x - goal).norm() >= settings.goal_tolerance {
        if settings.record_path {
            path.push(x);
        }
        let dev = td.distance_to_path(&x);
        if contact_step.is_none() && dev <= contact_dist {
            contact_step = Some(steps);
        }
        if contact_step.is_some() {
            dev_sum += dev;
            dev_max = dev_max.max(dev);
            dev_n += 1;
        }
        let out = generate(&x, &theta, td, obstacles, 0.0, params, prev)?;
        prev = Some(out.i_min);
        x += settings.dt * out.x_dot_ref;
        steps += 1;
    }
    if settings.record_path {
        path.push(x);
    }
    let final_error = (x - goal).norm();
    Ok(FieldRun {
        start,
        steps,
        goal_reached: final_error < settings.goal_tolerance,
        final_error,
        contact_step,
        mean_deviation: (dev_n > 0).then(|| dev_sum / dev_n as f64),
        max_deviation: (dev_n > 0).then_some(dev_max),
        path,
    })
}

/// A demo is planar when every position shares one z value.
pub fn is_planar(demo: &Demonstration) -> bool {
    let z0 = demo.positions()[0].z;
    demo.positions().iter().all(|p| p.z == z0)
}

/// Starts displaced from `origin` by up to `fraction` of `diagonal` in a
/// uniformly random direction (in the xy plane when `planar`).
pub fn perturbed_starts(
    origin: Vector3<f64>,
    diagonal: f64,
    fraction: f64,
    n: usize,
    planar: bool,
    seed: u64,
) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let dir = if planar {
                let [x, y]: [f64; 2] = UnitCircle.sample(&mut rng);
                Vector3::new(x, y, 0.0)
            } else {
                Vector3::from(UnitSphere.sample(&mut rng))
            };
            let r = rng.random_range(0.0..=fraction) * diagonal;
            origin + dir * r
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSample {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

/// Field samples on an `n × n` grid over the demo's xy bounding box,
/// enlarged by `margin` of the diagonal, at the demo's first z.
pub fn streamline_grid(td: &TransformedDemo, params: &MotionParams, n: usize, margin: f64) -> Result<Vec<GridSample>> {
    let mut lo = td.positions()[0];
    let mut hi = lo;
    for p in td.positions() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let pad = margin * td.bbox_diagonal();
    let z = td.positions()[0].z;
    let theta = td.eulers()[0];
    let mut out = Vec::with_capacity(n * n);
    let coord = |a: f64, b: f64, i: usize| {
        if n <= 1 {
            0.5 * (a + b)
        } else {
            a - pad + (b - a + 2.0 * pad) * i as f64 / (n - 1) as f64
        }
    };
    for j in 0..n {
        for i in 0..n {
            let position = Vector3::new(coord(lo.x, hi.x, i), coord(lo.y, hi.y, j), z);
            let velocity = generate(&position, &theta, td, &[], 0.0, params, None)?.x_dot_ref;
            out.push(GridSample { position, velocity });
        }
    }
    Ok(out)
}
