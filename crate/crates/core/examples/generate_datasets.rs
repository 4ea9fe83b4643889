//! Writes the demonstration files shipped under `data/`.
//!
//! `cargo run -p tandem-core --example generate_datasets -- [out_dir]`
//!
//! `data/leaf/` holds seven planar leaf-outline demonstrations in the 2-D
//! CSV layout; `data/button/button.json` is a 3-D approach-and-press
//! demonstration whose wrench channel ramps to 15 N into the surface.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Vector3, Vector6};
use tandem::demo::{DemoFormat, Demonstration};

const LEAF_SAMPLES: usize = 1000;
const LEAF_LENGTH: f64 = 0.3;
const LEAF_WIDTH: f64 = 0.12;
const STEM_LENGTH: f64 = 0.05;

/// Eased progress: starts moving, arrives at rest.
fn progress(tau: f64) -> f64 {
    0.8 * (3.0 * tau * tau - 2.0 * tau.powi(3)) + 0.2 * (2.0 * tau - tau * tau)
}

/// Resamples a dense polyline at arc-length fractions `progress(τ)`.
fn sample_along(dense: &[Vector3<f64>], n: usize) -> Vec<Vector3<f64>> {
    let mut cum = vec![0.0];
    for w in dense.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    let mut seg = 0;
    (0..n)
        .map(|i| {
            let s = total * progress(i as f64 / (n - 1) as f64);
            while seg + 2 < cum.len() && cum[seg + 1] < s {
                seg += 1;
            }
            let span = cum[seg + 1] - cum[seg];
            let f = if span > 0.0 { ((s - cum[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
            dense[seg] + (dense[seg + 1] - dense[seg]) * f
        })
        .collect()
}

fn leaf_outline(k: usize) -> Vec<Vector3<f64>> {
    let spread = (k as f64 - 3.0) / 3.0;
    let width = LEAF_WIDTH * (1.0 + 0.06 * spread);
    let start_offset = Vector3::new(0.012 * spread, -0.01 * (k as f64 * 1.3).sin(), 0.0);
    let dense_n = 4000;
    let mut pts: Vec<Vector3<f64>> = (0..=dense_n)
        .map(|j| {
            let s = j as f64 / dense_n as f64;
            let x = LEAF_LENGTH * (1.0 - s);
            let y = width * (std::f64::consts::PI * s).sin() * (1.0 - 0.35 * s)
                - 0.015 * (2.0 * std::f64::consts::PI * s).sin();
            Vector3::new(x, y, 0.0) + start_offset * (1.0 - s).powi(2)
        })
        .collect();
    // stem continues along the outline's final tangent
    let n = pts.len();
    let dir = (pts[n - 1] - pts[n - 2]).normalize();
    let base = pts[n - 1];
    for j in 1..=200 {
        pts.push(base + dir * (STEM_LENGTH * j as f64 / 200.0));
    }
    pts
}

fn finite_difference(p: &[Vector3<f64>], dt: f64) -> Vec<Vector3<f64>> {
    let n = p.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (p[1] - p[0]) / dt
            } else if i == n - 1 {
                (p[n - 1] - p[n - 2]) / dt
            } else {
                (p[i + 1] - p[i - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

fn write_planar_csv(path: &Path, positions: &[Vector3<f64>], dt: f64) -> std::io::Result<()> {
    let vels = finite_difference(positions, dt);
    let mut out = String::from("t,px,py,vx,vy\n");
    for (i, (p, v)) in positions.iter().zip(&vels).enumerate() {
        out.push_str(&format!("{},{},{},{},{}\n", i as f64 * dt, p.x, p.y, v.x, v.y));
    }
    fs::write(path, out)
}

fn button_demo() -> tandem::Result<Demonstration> {
    // approach from above, hover over the button, then press 1.5 mm in
    let waypoints = [
        Vector3::new(0.0, 0.0, 0.15),
        Vector3::new(0.2, 0.05, 0.12),
        Vector3::new(0.4, 0.0, 0.03),
        Vector3::new(0.4, 0.0, 0.005),
    ];
    let press_depth = 0.0015;
    let mut dense = Vec::new();
    for w in waypoints.windows(2) {
        for j in 0..400 {
            let s = j as f64 / 400.0;
            let s = 0.5 - 0.5 * (std::f64::consts::PI * s).cos();
            dense.push(w[0] + (w[1] - w[0]) * s);
        }
    }
    dense.push(*waypoints.last().unwrap());
    let n = 1000;
    let mut positions = sample_along(&dense, n);
    // final press segment: slow monotone descent below the surface
    let press = 150;
    let top = *waypoints.last().unwrap();
    for j in 0..press {
        let s = (j + 1) as f64 / press as f64;
        let z = top.z - (top.z + press_depth) * (1.0 - (1.0 - s).powi(2));
        positions.push(Vector3::new(top.x, top.y, z));
    }
    let dt = 0.005;
    let wrenches = positions
        .iter()
        .map(|p| {
            // force builds up once the tool touches the surface
            let depth = (-p.z).max(0.0);
            let fz = -15.0 * (depth / press_depth).min(1.0);
            Vector6::new(0.0, 0.0, fz, 0.0, 0.0, 0.0)
        })
        .collect();
    Demonstration::from_positions(positions, dt)?.with_wrenches(wrenches)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"));
    let leaf_dir = out.join("leaf");
    let button_dir = out.join("button");
    fs::create_dir_all(&leaf_dir)?;
    fs::create_dir_all(&button_dir)?;
    for k in 0..7 {
        let positions = sample_along(&leaf_outline(k), LEAF_SAMPLES);
        let duration = 4.0 * (1.0 + 0.05 * (k as f64 - 3.0) / 3.0);
        let dt = duration / (LEAF_SAMPLES - 1) as f64;
        write_planar_csv(&leaf_dir.join(format!("leaf_{}.csv", k + 1)), &positions, dt)?;
    }
    button_demo()?.save(button_dir.join("button.json"), DemoFormat::Json)?;
    println!("wrote datasets under {}", out.display());
    Ok(())
}
