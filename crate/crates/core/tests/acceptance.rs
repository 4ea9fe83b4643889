//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero if any fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{Matrix6, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tandem::authority::variable_impedance;
use tandem::controller::passivity_tolerance;
use tandem::demo::Demonstration;
use tandem::motion::MotionParams;
use tandem::reproduction::{integrate_field, is_planar, perturbed_starts, FieldSettings};
use tandem::sim::{run_scenario, RunOutput, ScenarioConfig};
use tandem::transform::{Alignment, TransformedDemo};

// criterion 1
const TRANSFORM_TRIPLES: usize = 1000;
const TRANSFORM_TOL: f64 = 1e-9;
// criterion 2
const KD_TRAJECTORIES: usize = 10;
const KD_QUERIES: usize = 10_000;
// criterion 3
const LEAF_STARTS: usize = 20;
const LEAF_START_FRACTION: f64 = 0.2;
const LEAF_GOAL_TOL: f64 = 5e-3;
const LEAF_CONTACT_FRACTION: f64 = 0.02;
const LEAF_DEVIATION_FRACTION: f64 = 0.05;
const ORACLE_POSITION_TOL: f64 = 1e-9;
// criterion 5
const PSI_LOWER_PAPER: f64 = 10.0;
// criterion 6
const TARGET_FORCE: f64 = 15.0;
const SETTLE_TIME: f64 = 3.0;
const FORCE_ERROR_TOL: f64 = 0.2;
const FORCE_PEAK_TOL: f64 = 2.0;
// criterion 7
const RISE_LIMIT: f64 = 0.5;
const RISE_LEVEL: f64 = 0.9;
const DECAY_LEVEL: f64 = 0.1;
const PUSH_FORCE: f64 = 20.0;
// criterion 8
const OBSTACLE_GOAL_TOL: f64 = 5e-3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(scenario_dir().join(format!("{name}.toml"))).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn shipped_scenarios() -> Vec<(String, ScenarioConfig)> {
    let mut paths: Vec<_> = std::fs::read_dir(scenario_dir())
        .expect("scenarios directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let cfg = ScenarioConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (name, cfg)
        })
        .collect()
}

fn run_all(scenarios: &[(String, ScenarioConfig)]) -> Vec<RunOutput> {
    scenarios
        .iter()
        .map(|(name, cfg)| run_scenario(cfg, None).unwrap_or_else(|e| panic!("{name}: {e}")))
        .collect()
}

fn random_walk(rng: &mut ChaCha8Rng, n: usize, planar: bool) -> Vec<Vector3<f64>> {
    let mut p = Vector3::zeros();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(p);
        let z = if planar { 0.0 } else { rng.random_range(-0.01..0.01) };
        p += Vector3::new(rng.random_range(-0.01..0.012), rng.random_range(-0.01..0.012), z);
    }
    out
}

fn random_point(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_end: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    let mut worst_det: f64 = 0.0;
    let mut done = 0;
    while done < TRANSFORM_TRIPLES {
        let n = rng.random_range(2..200);
        let planar = rng.random_bool(0.3);
        let demo = Demonstration::from_positions(random_walk(&mut rng, n, planar), 0.01).unwrap();
        // include near-antiparallel chords, the hard case for the rotation
        let start = random_point(&mut rng, 1.0);
        let goal = if rng.random_bool(0.1) {
            start - demo.chord() * rng.random_range(0.1..3.0) + random_point(&mut rng, 1e-7)
        } else {
            random_point(&mut rng, 1.0)
        };
        let Ok(alignment) = Alignment::compute(&demo, start, goal) else {
            continue;
        };
        let td = TransformedDemo::new(&demo, alignment);
        let p = td.positions();
        worst_end = worst_end.max((p[0] - start).norm()).max((p[p.len() - 1] - goal).norm());
        let r = td.alignment().rotation;
        worst_orth = worst_orth.max((r.transpose() * r - nalgebra::Matrix3::identity()).abs().max());
        worst_det = worst_det.max((r.determinant() - 1.0).abs());
        done += 1;
    }
    outcome(
        worst_end <= TRANSFORM_TOL && worst_orth <= TRANSFORM_TOL && worst_det <= TRANSFORM_TOL,
        format!("{done} triples, endpoint err {worst_end:.2e} m, |RᵀR−I| {worst_orth:.2e}, |det−1| {worst_det:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut mismatches = 0;
    let per = KD_QUERIES / KD_TRAJECTORIES;
    for t in 0..KD_TRAJECTORIES {
        let n = rng.random_range(200..3000);
        let mut pts = random_walk(&mut rng, n, t % 3 == 0);
        // duplicate samples exercise the lowest-index tie rule
        for _ in 0..20 {
            let i = rng.random_range(0..pts.len());
            let j = rng.random_range(0..pts.len());
            pts[j] = pts[i];
        }
        let demo = Demonstration::from_positions(pts, 0.01).unwrap();
        let td = TransformedDemo::new(&demo, Alignment::identity(&demo).unwrap());
        for q in 0..per {
            let x = if q % 5 == 0 {
                td.positions()[rng.random_range(0..td.len())]
            } else {
                td.positions()[rng.random_range(0..td.len())] + random_point(&mut rng, 0.05)
            };
            if td.nearest_index(&x) != td.nearest_index_linear(&x) {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("{} queries over {KD_TRAJECTORIES} trajectories, {mismatches} mismatches", per * KD_TRAJECTORIES),
    )
}

/// Brute-force field: linear-scan nearest sample, `Λ_L (x̃ − x) + v_ff`,
/// rescaled onto the `v_th` ball. Returns the visited states.
fn oracle_field_path(td: &TransformedDemo, p: &MotionParams, start: Vector3<f64>, steps: usize, dt: f64) -> Vec<Vector3<f64>> {
    let mut x = start;
    let mut path = vec![x];
    for _ in 0..steps {
        let mut best = (f64::INFINITY, 0);
        for (i, q) in td.positions().iter().enumerate() {
            let d = (q - x).norm_squared();
            if d < best.0 {
                best = (d, i);
            }
        }
        let i = best.1;
        let mut v = p.lambda_l * (td.positions()[i] - x) + td.lin_vels()[i];
        if v.norm() > p.v_th {
            v *= p.v_th / v.norm();
        }
        x += dt * v;
        path.push(x);
    }
    path
}

fn criterion_3() -> Outcome {
    let cfg = scenario("leaf");
    let td = TransformedDemo::build(&cfg.demo, cfg.start, cfg.goal).unwrap();
    let params = MotionParams::default();
    let diag = td.bbox_diagonal();
    let settings = FieldSettings {
        goal_tolerance: LEAF_GOAL_TOL,
        contact_fraction: LEAF_CONTACT_FRACTION,
        record_path: true,
        ..Default::default()
    };
    let starts = perturbed_starts(td.start(), diag, LEAF_START_FRACTION, LEAF_STARTS, is_planar(&cfg.demo), 303);
    let mut failures = Vec::new();
    let mut worst_dev: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    for (k, s) in starts.iter().enumerate() {
        let run = integrate_field(&td, &params, &[], *s, &settings).unwrap();
        let dev = run.mean_deviation.unwrap_or(f64::INFINITY);
        worst_dev = worst_dev.max(dev / diag);
        if !run.goal_reached || dev >= LEAF_DEVIATION_FRACTION * diag {
            failures.push(k);
        }
        if k % 5 == 0 {
            let oracle = oracle_field_path(&td, &params, *s, run.steps, settings.dt);
            for (a, b) in run.path.iter().zip(&oracle) {
                worst_oracle = worst_oracle.max((a - b).norm());
            }
            if oracle.len() != run.path.len() {
                worst_oracle = f64::INFINITY;
            }
        }
    }
    outcome(
        failures.is_empty() && worst_oracle <= ORACLE_POSITION_TOL,
        format!(
            "{LEAF_STARTS} starts, failures {failures:?}, worst mean deviation {:.2}% of diagonal, brute-force field gap {worst_oracle:.1e} m",
            100.0 * worst_dev
        ),
    )
}

fn criterion_4(scenarios: &[(String, ScenarioConfig)], runs: &[RunOutput]) -> Outcome {
    let mut violations = Vec::new();
    let mut worst: f64 = 0.0;
    for ((name, cfg), out) in scenarios.iter().zip(runs) {
        for r in &out.trace.rows {
            let v = r.x_dot_ref.norm();
            worst = worst.max(v / cfg.motion.v_th);
            if v > cfg.motion.v_th {
                violations.push(format!("{name}@{}", r.time));
            }
        }
    }
    outcome(
        violations.is_empty(),
        format!("{} scenarios, max ‖ẋ_ref‖/v_th {worst:.6}, violations {}", scenarios.len(), violations.len()),
    )
}

fn criterion_5(scenarios: &[(String, ScenarioConfig)], runs: &[RunOutput]) -> Outcome {
    let mut problems = Vec::new();
    let mut worst_residual = f64::MIN;
    for ((name, cfg), out) in scenarios.iter().zip(runs) {
        let tol = passivity_tolerance(cfg.dt);
        let floor = cfg.tank.psi_floor();
        // a fill is only admitted from at or below the upper threshold, so the
        // overshoot is bounded by the largest single-step increase
        let step_tol = out
            .trace
            .rows
            .iter()
            .zip(&out.diagnostics)
            .map(|(r, d)| (d.psi_after - r.psi).max(0.0))
            .fold(0.0, f64::max);
        for (r, d) in out.trace.rows.iter().zip(&out.diagnostics) {
            worst_residual = worst_residual.max(r.residual);
            if r.residual > tol {
                problems.push(format!("{name}: residual {:.3e} at t={}", r.residual, r.time));
                break;
            }
            for psi in [r.psi, d.psi_after] {
                if psi < floor || psi > cfg.tank.psi_upper + step_tol {
                    problems.push(format!("{name}: ψ {psi} outside bounds at t={}", r.time));
                }
            }
            if r.psi > cfg.tank.psi_upper && d.psi_after > r.psi {
                problems.push(format!("{name}: tank filled above upper threshold at t={}", r.time));
            }
        }
    }

    let idx = scenarios.iter().position(|(n, _)| n == "tank_depletion").expect("tank_depletion scenario");
    let (cfg, out) = (&scenarios[idx].1, &runs[idx]);
    if cfg.tank.psi_lower != PSI_LOWER_PAPER {
        problems.push(format!("tank_depletion psi_lower is {}", cfg.tank.psi_lower));
    }
    let rows = &out.trace.rows;
    let first_off = rows.iter().position(|r| !r.zeta);
    let min_psi = rows.iter().map(|r| r.psi).fold(f64::INFINITY, f64::min);
    match first_off {
        None => problems.push(format!("tank_depletion: ζ never switched off, min ψ {min_psi:.3} J")),
        Some(k) => {
            if rows[k].psi >= cfg.tank.psi_lower {
                problems.push("tank_depletion: ζ off above the lower threshold".into());
            }
            // with ζ = 0 only the dissipative feed-forward wrench remains
            for (r, d) in rows.iter().zip(&out.diagnostics).filter(|(r, _)| !r.zeta) {
                let expected = if r.phi { r.w_ref } else { nalgebra::Vector6::zeros() };
                if d.u != expected {
                    problems.push(format!("tank_depletion: tracking terms active with ζ = 0 at t={}", r.time));
                    break;
                }
            }
        }
    }
    let depleted_at = first_off.map(|k| rows[k].time);
    outcome(
        problems.is_empty(),
        format!(
            "max residual {worst_residual:.2e} W (tol {:.0e}), depletion: ψ min {min_psi:.3} J, ζ→0 at {depleted_at:?} s{}",
            passivity_tolerance(1e-3),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

fn criterion_6(run: &RunOutput, cfg: &ScenarioConfig) -> Outcome {
    let normal = cfg.environment.walls[0].normal;
    let force: Vec<(f64, f64)> = run
        .trace
        .rows
        .iter()
        .zip(&run.diagnostics)
        .map(|(r, d)| (r.time, d.w_contact.fixed_rows::<3>(0).dot(&normal)))
        .collect();
    let Some(contact) = force.iter().find(|(_, f)| *f > 0.0).map(|(t, _)| *t) else {
        return outcome(false, "no contact");
    };
    let steady: Vec<f64> = force
        .iter()
        .filter(|(t, _)| *t >= contact + SETTLE_TIME)
        .map(|(_, f)| (f - TARGET_FORCE).abs())
        .collect();
    let steady_err = steady.iter().copied().fold(0.0, f64::max);
    let peak = force.iter().map(|(_, f)| f - TARGET_FORCE).fold(f64::MIN, f64::max);
    let pass = !steady.is_empty() && steady_err < FORCE_ERROR_TOL && peak < FORCE_PEAK_TOL;
    outcome(
        pass,
        format!(
            "contact at {contact:.3} s, max |F−15| after +{SETTLE_TIME} s {steady_err:.3} N over {} steps, overshoot {peak:.3} N",
            steady.len()
        ),
    )
}

fn criterion_7(run: &RunOutput, cfg: &ScenarioConfig) -> Outcome {
    let push = cfg
        .human
        .segments
        .iter()
        .find(|s| s.wrench.iter().map(|w| w * w).sum::<f64>().sqrt() == PUSH_FORCE && s.damping == 0.0)
        .expect("takeover scenario has a 20 N push");
    let rows = &run.trace.rows;
    let in_range = rows.iter().all(|r| (0.0..=1.0).contains(&r.alpha_h));
    let at_start = rows.iter().find(|r| r.time >= push.start).map(|r| r.alpha_h).unwrap_or(1.0);
    let rise = rows
        .iter()
        .find(|r| r.time >= push.start && r.alpha_h > RISE_LEVEL)
        .map(|r| r.time - push.start);
    let decay = rows
        .iter()
        .find(|r| r.time >= push.end && r.alpha_h < DECAY_LEVEL)
        .map(|r| r.time - push.end);
    let k_max = Matrix6::from_diagonal(&cfg.gains.k_max);
    let (k0, _) = variable_impedance(0.0, &k_max).unwrap();
    let (k1, _) = variable_impedance(1.0, &k_max).unwrap();
    let stiffness_ok = k0 == k_max && k1 == Matrix6::zeros();
    let pass = match (rise, decay) {
        (Some(r), Some(d)) => in_range && at_start < DECAY_LEVEL && r <= RISE_LIMIT && d >= 2.0 * r && stiffness_ok,
        _ => false,
    };
    outcome(
        pass,
        format!(
            "α_h at push {at_start:.4}, rise to {RISE_LEVEL} in {rise:?} s, decay to {DECAY_LEVEL} in {decay:?} s, in [0,1]: {in_range}, K(0)=K_max and K(1)=0: {stiffness_ok}"
        ),
    )
}

fn criterion_8(run: &RunOutput, cfg: &ScenarioConfig) -> Outcome {
    let td = TransformedDemo::build(&cfg.demo, cfg.start, cfg.goal).unwrap();
    let obs = &cfg.obstacles;
    let mut min_margin = f64::INFINITY;
    let mut flag_mismatch = 0;
    let mut guided = 0;
    for (r, d) in run.trace.rows.iter().zip(&run.diagnostics) {
        let x = r.position();
        for o in obs {
            min_margin = min_margin.min((x - o.center).norm() - o.radius);
        }
        // recompute the guidance condition from the transformed demo
        let v_ff = td.lin_vels()[r.i_min];
        let expect = obs.iter().any(|o| v_ff.dot(&(x - o.center).normalize()) <= 0.0);
        if expect != d.guidance_active {
            flag_mismatch += 1;
        }
        if d.guidance_active {
            guided += 1;
        }
    }
    let final_err = (run.trace.rows.last().unwrap().position() - cfg.goal).norm();
    let pass = !obs.is_empty() && min_margin >= 0.0 && final_err < OBSTACLE_GOAL_TOL && guided >= 1 && flag_mismatch == 0;
    outcome(
        pass,
        format!(
            "min ‖x−x_obs‖−r {min_margin:.4} m, final error {:.2} mm, guidance steps {guided}, flag mismatches {flag_mismatch}",
            final_err * 1e3
        ),
    )
}

fn criterion_9(scenarios: &[(String, ScenarioConfig)], runs: &[RunOutput]) -> Outcome {
    let mut differing = Vec::new();
    for ((name, cfg), first) in scenarios.iter().zip(runs) {
        let again = run_scenario(cfg, None).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        first.trace.write_binary(&mut a).unwrap();
        again.trace.write_binary(&mut b).unwrap();
        if a != b {
            differing.push(name.clone());
        }
    }
    outcome(
        differing.is_empty(),
        format!("{} scenarios re-run, differing traces: {differing:?}", scenarios.len()),
    )
}

fn main() {
    // cargo passes libtest flags; this target has no filters of its own
    let mut results: Vec<(u32, &str, Outcome, Duration, Duration)> = Vec::new();
    let mut timed = |n: u32, name: &'static str, budget: Duration, f: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let out = f();
        results.push((n, name, out, t0.elapsed(), budget));
    };

    timed(1, "transform exactness", Duration::from_secs(5), &mut criterion_1);
    timed(2, "nearest-point oracle", Duration::from_secs(5), &mut criterion_2);
    timed(3, "leaf reproduction", Duration::from_secs(60), &mut criterion_3);

    let t0 = Instant::now();
    let scenarios = shipped_scenarios();
    let runs = run_all(&scenarios);
    let sim_time = t0.elapsed();
    let find = |name: &str| scenarios.iter().position(|(n, _)| n == name).unwrap_or_else(|| panic!("missing scenario {name}"));

    timed(4, "velocity bound", Duration::from_secs(60), &mut || criterion_4(&scenarios, &runs));
    timed(5, "passivity and tank", Duration::from_secs(60), &mut || criterion_5(&scenarios, &runs));
    let b = find("button");
    timed(6, "force tracking", Duration::from_secs(30), &mut || criterion_6(&runs[b], &scenarios[b].1));
    let t = find("takeover");
    timed(7, "authority dynamics", Duration::from_secs(30), &mut || criterion_7(&runs[t], &scenarios[t].1));
    let o = find("leaf_obstacle");
    timed(8, "obstacle avoidance", Duration::from_secs(60), &mut || criterion_8(&runs[o], &scenarios[o].1));
    timed(9, "determinism", Duration::from_secs(60), &mut || criterion_9(&scenarios, &runs));

    println!("shipped scenarios simulated in {:.2} s", sim_time.as_secs_f64());
    let mut failed = 0;
    for (n, name, out, took, budget) in &results {
        let in_budget = *took + if (4..=8).contains(n) { sim_time } else { Duration::ZERO } <= *budget;
        let pass = out.pass && in_budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {n} [{name}]: {} ({:.2} s, budget {} s) {}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
