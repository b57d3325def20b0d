//! Acceptance runner: one PASS/FAIL line per criterion, exit status 1 on any
//! failure. Run with `cargo test -p ooalign-core --test acceptance`; an
//! optional substring argument selects criteria by name.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ooalign::geometry::{box_mesh, compute_stats, compute_vertex_normals, icosphere, remesh_subdivide, TriMesh};
use ooalign::guidance::{GuidanceTarget, NullProvider, SilhouetteProvider};
use ooalign::harness::fixtures::{fixture_cases, merge, write_fixture_set, FixtureCase, DENSE_VERTICES};
use ooalign::harness::{load_manifest, reference_error, run_cases, BenchmarkOptions};
use ooalign::hparams::{build_prompts, evaluate_hparam_accuracy, parse_and_clamp, random_decision, HparamDecision, HparamLabel, SIZE_RATIO_RANGE};
use ooalign::linalg::{Quat, Vec3};
use ooalign::losses::{fractional_soft_icp, fractional_soft_icp_with, max_signed_depth, penetration_loss, select_attached, IcpConfig, PenetrationConfig, SoftmaxSupport};
use ooalign::metrics::{contact_fraction, intersection_ratio, EvalRig};
use ooalign::optimizer::*;
use ooalign::pose::{apply_pose, backprop_pose, compose_scene, PoseParams};
use ooalign::render::{backprop_render, render_soft, Camera, Image, RigSchedule, Shading};
use ooalign::geometry::spatial::PointGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GEOMETRIC_GRAD_TOL: f64 = 1e-4;
const RENDER_GRAD_TOL: f64 = 5e-3;
const END_TO_END_GRAD_TOL: f64 = 1e-2;
const GRADIENT_INSTANCES: usize = 100;
const EQUIVALENCE_INSTANCES: usize = 20;
const RIGID_TRIALS: usize = 20;
const RIGID_REQUIRED: usize = 18;
const RIGID_MAX_ROTATION_DEG: f64 = 15.0;
const RIGID_MAX_OFFSET: f64 = 0.2;
const RIGID_ROTATION_TOL_DEG: f64 = 1.0;
const RIGID_TRANSLATION_TOL: f64 = 1e-3;
const PENETRATION_TRIALS: usize = 10;
const PENETRATION_STEPS: usize = 500;
const PENETRATION_SLACK: f64 = 1e-3;
const CONTACT_RUNS: usize = 10;
const CONTACT_REQUIRED: usize = 8;
const CONTACT_RATIOS: [f64; 3] = [1.0, 0.6, 0.3];
const CONTACT_EPSILON_OF_HEIGHT: f64 = 0.01;
const SILHOUETTE_CASES: [&str; 5] = ["block_on_plate", "cube_on_cube", "ball_on_plate", "can_on_plate", "lid_on_box"];
const SILHOUETTE_RESTARTS: usize = 5;
const SILHOUETTE_REQUIRED: usize = 4;
const SILHOUETTE_TRANSLATION_TOL: f64 = 0.02;
const OVERLAP_PAIRS: usize = 50;
const OVERLAP_TOL: f64 = 0.02;
const CONVERGENCE_TOL: f64 = 0.01;
const BASELINE_DRAWS: usize = 100_000;

type GradientCheck = fn() -> (f64, usize);
type Criterion = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn point(rng: &mut ChaCha8Rng, half: f64) -> Vec3<f64> {
    Vec3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half))
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3<f64> {
    loop {
        let v = point(rng, 1.0);
        let n = v.norm();
        if n > 0.1 && n < 1.0 {
            return v * (1.0 / n);
        }
    }
}

fn flatten(v: &[Vec3<f64>]) -> Vec<f64> {
    v.iter().flat_map(|p| p.to_array()).collect()
}

/// `|a - b| / |b|` over whole vectors.
fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

/// Central differences of `f` with respect to every coordinate of `x`.
fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|k| {
            work[k] = x[k] + h;
            let plus = f(&work);
            work[k] = x[k] - h;
            let minus = f(&work);
            work[k] = x[k];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

fn points_of(x: &[f64]) -> Vec<Vec3<f64>> {
    x.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

fn brute_nearest_sq(p: Vec3<f64>, set: &[Vec3<f64>]) -> Vec<f64> {
    let mut d: Vec<f64> = set.iter().map(|t| (p - *t).norm_squared()).collect();
    d.sort_by(f64::total_cmp);
    d
}

fn icp_gradients() -> (f64, usize) {
    let mut r = rng(101);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < GRADIENT_INSTANCES {
        let source: Vec<Vec3<f64>> = (0..30).map(|_| point(&mut r, 1.0)).collect();
        let target: Vec<Vec3<f64>> = (0..40).map(|_| point(&mut r, 1.0)).collect();
        let cfg = IcpConfig { ratio: r.random_range(0.3..=1.0), sigma: r.random_range(0.1..0.5) };
        // The selected set is frozen in the gradient; keep a clear gap at its boundary.
        let k = cfg.selected_count(source.len());
        let mut nearest: Vec<f64> = source.iter().map(|s| brute_nearest_sq(*s, &target)[0].sqrt()).collect();
        nearest.sort_by(f64::total_cmp);
        if k < source.len() && nearest[k] - nearest[k - 1] < 1e-4 {
            continue;
        }
        let analytic = flatten(&fractional_soft_icp(&source, &target, &cfg).unwrap().d_source);
        let fd = numeric_gradient(&flatten(&source), 1e-6, |x| fractional_soft_icp(&points_of(x), &target, &cfg).unwrap().value);
        worst = worst.max(relative_error(&analytic, &fd));
        done += 1;
    }
    (worst, done)
}

fn penetration_gradients() -> (f64, usize) {
    let mut r = rng(102);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < GRADIENT_INSTANCES {
        let source: Vec<Vec3<f64>> = (0..30).map(|_| point(&mut r, 1.0)).collect();
        let target: Vec<Vec3<f64>> = (0..40).map(|_| Vec3::new(r.random_range(-1.0..1.0), r.random_range(-0.2..0.2), r.random_range(-1.0..1.0))).collect();
        let normals: Vec<Vec3<f64>> = (0..40).map(|_| (Vec3::new(0.0, 1.5, 0.0) + unit(&mut r)).normalized()).collect();
        let cfg = PenetrationConfig { margin: r.random_range(0.0..0.05) };
        // Stay away from hinge breakpoints and nearest-vertex ties.
        let mut active = 0;
        let clear = target.iter().zip(&normals).all(|(t, n)| {
            let d = brute_nearest_sq(*t, &source);
            let i = source.iter().position(|s| (*t - *s).norm_squared() == d[0]).unwrap();
            let depth = (*t - source[i]).dot(*n) - cfg.margin;
            active += usize::from(depth > 0.0);
            depth.abs() > 1e3 * h && d[1].sqrt() - d[0].sqrt() > 1e3 * h
        });
        if !clear || active == 0 {
            continue;
        }
        let analytic = flatten(&penetration_loss(&source, &target, &normals, &cfg).unwrap().d_source);
        let fd = numeric_gradient(&flatten(&source), h, |x| penetration_loss(&points_of(x), &target, &normals, &cfg).unwrap().value);
        worst = worst.max(relative_error(&analytic, &fd));
        done += 1;
    }
    (worst, done)
}

fn random_pose(r: &mut ChaCha8Rng) -> PoseParams<f64> {
    let q = Quat::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
    let q = if q.norm() < 0.3 { Quat::identity() } else { q };
    PoseParams { tau: point(r, 1.0), quat: q, log_scale: r.random_range(-1.0..1.0) }
}

fn pose_gradients() -> (f64, usize) {
    let mut r = rng(103);
    let mut worst = 0.0f64;
    for _ in 0..GRADIENT_INSTANCES {
        let rest: Vec<Vec3<f64>> = (0..20).map(|_| point(&mut r, 1.0)).collect();
        let g: Vec<Vec3<f64>> = (0..20).map(|_| point(&mut r, 1.0)).collect();
        let pose = random_pose(&mut r);
        // Linear probe sum_i g_i . (s R(q / |q|) v_i + tau).
        let probe = |p: &[f64]| {
            let pose = PoseParams::from_vector(p.try_into().unwrap());
            let q = pose.quat.normalized();
            let s = pose.log_scale.exp();
            rest.iter().zip(&g).map(|(v, gi)| gi.dot(q.to_rotation_matrix().mul_vec(*v) * s + pose.tau)).sum::<f64>()
        };
        let analytic = backprop_pose(&rest, &pose, &g).unwrap().to_vector();
        let fd = numeric_gradient(&pose.to_vector(), 1e-6, probe);
        worst = worst.max(relative_error(&analytic, &fd));
    }
    (worst, GRADIENT_INSTANCES)
}

fn render_gradients() -> (f64, usize) {
    let mut r = rng(104);
    let shading = Shading::default();
    let size = 32;
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < GRADIENT_INSTANCES {
        let source = if done % 2 == 0 { box_mesh("s", Vec3::splat(-0.3), Vec3::splat(0.3)) } else { icosphere("s", Vec3::zero(), 0.3, 1) };
        let target = box_mesh("t", Vec3::new(-0.6, -0.8, -0.6), Vec3::new(0.6, -0.4, 0.6));
        let pose = PoseParams { tau: point(&mut r, 0.2), quat: Quat::from_euler_xyz(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)), log_scale: r.random_range(-0.2..0.2) };
        let eye = unit(&mut r) * 2.5;
        let Ok(camera) = Camera::new(eye, Vec3::zero(), Vec3::new(0.0, 1.0, 0.0), 45.0, size, size) else { continue };
        let softness = r.random_range(1.0..2.0);
        let mean_alpha = |p: &[f64]| {
            let posed = apply_pose(&source, &PoseParams::from_vector(p.try_into().unwrap())).unwrap();
            render_soft(&compose_scene(&target, &posed), &camera, softness, &shading).unwrap().channel(3).mean()
        };
        let posed = apply_pose(&source, &pose).unwrap();
        let scene = compose_scene(&target, &posed);
        let mut d_rgba = Image::new(size, size, 4);
        d_rgba.data.chunks_mut(4).for_each(|px| px[3] = 1.0 / (size * size) as f64);
        let dv = backprop_render(&scene, &camera, softness, &shading, &d_rgba).unwrap();
        let analytic = backprop_pose(&source.vertices, &pose, &dv[target.vertex_count()..]).unwrap().to_vector();
        if analytic.iter().all(|a| a.abs() < 1e-9) {
            continue;
        }
        let fd = numeric_gradient(&pose.to_vector(), 1e-6, mean_alpha);
        worst = worst.max(relative_error(&analytic, &fd));
        done += 1;
    }
    (worst, done)
}

fn end_to_end_gradients() -> (f64, usize) {
    let mut r = rng(105);
    let source = icosphere("s", Vec3::zero(), 0.3, 1);
    let target = remesh_subdivide(&box_mesh("t", Vec3::new(-0.6, -0.4, -0.6), Vec3::new(0.6, 0.0, 0.6)), 100);
    let reference = compose_scene(&target, &apply_pose(&source, &PoseParams::translation(Vec3::new(0.0, 0.3, 0.0))).unwrap());
    let provider = SilhouetteProvider::from_scene(reference, Shading::default());
    let guidance = GuidanceTarget::text("");
    let mut config = AlignConfig::default();
    config.schedule.rig = RigSchedule { num_views: 2, width: 24, height: 24, ..RigSchedule::default() };
    config.schedule.softness_px = 2.0;
    let problem = AlignmentProblem::new(&source, &target, &provider, &guidance, &config).unwrap();
    let mut worst = 0.0f64;
    for i in 0..GRADIENT_INSTANCES {
        let pose = PoseParams {
            tau: Vec3::new(r.random_range(-0.3..0.3), r.random_range(0.1..0.5), r.random_range(-0.3..0.3)),
            quat: Quat::from_euler_xyz(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)),
            log_scale: r.random_range(-0.3..0.3),
        };
        let phase = 1 + i % config.schedule.num_phases;
        let ctx = problem.phase_context(&pose, phase).unwrap();
        let weights = problem.weights_for_phase(phase);
        let eval = problem.evaluate(&pose, &ctx, &weights, true).unwrap();
        let analytic = eval.gradient.unwrap().to_vector();
        let fd = numeric_gradient(&pose.to_vector(), 1e-6, |p| {
            problem.evaluate(&PoseParams::from_vector(p.try_into().unwrap()), &ctx, &weights, false).unwrap().breakdown.total
        });
        worst = worst.max(relative_error(&analytic, &fd));
    }
    (worst, GRADIENT_INSTANCES)
}

fn gradient_suite() -> Outcome {
    let checks: [(&str, GradientCheck, f64); 5] = [
        ("icp", icp_gradients, GEOMETRIC_GRAD_TOL),
        ("penetration", penetration_gradients, GEOMETRIC_GRAD_TOL),
        ("pose", pose_gradients, GEOMETRIC_GRAD_TOL),
        ("render", render_gradients, RENDER_GRAD_TOL),
        ("end_to_end", end_to_end_gradients, END_TO_END_GRAD_TOL),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, check, tol) in checks {
        let (worst, n) = check();
        pass &= worst <= tol && n >= GRADIENT_INSTANCES;
        parts.push(format!("{name} {worst:.2e}/{tol:.0e} n={n}"));
    }
    outcome(pass, parts.join(", "))
}

/// Plain soft-ICP over every source vertex with the max-shifted softmax.
fn all_vertices_soft_icp(source: &[Vec3<f64>], target: &[Vec3<f64>], sigma: f64) -> (f64, Vec<Vec3<f64>>) {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let scale = 1.0 / source.len() as f64;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(source.len());
    for &v in source {
        let e_min = target.iter().map(|t| (v - *t).norm_squared()).fold(f64::INFINITY, f64::min);
        let (mut z, mut weighted) = (0.0, 0.0);
        for t in target {
            let e = (v - *t).norm_squared();
            let w = (-(e - e_min) * inv).exp();
            z += w;
            weighted += w * e;
        }
        let loss = weighted / z;
        let mut g = Vec3::zero();
        for t in target {
            let d = v - *t;
            let e = d.norm_squared();
            let alpha = (-(e - e_min) * inv).exp() / z;
            g += d * (alpha * (1.0 - (e - loss) * inv) * 2.0);
        }
        value += loss;
        grads.push(g * scale);
    }
    (value * scale, grads)
}

/// Textbook form without the shift, for a tolerance cross-check.
fn naive_soft_icp(source: &[Vec3<f64>], target: &[Vec3<f64>], sigma: f64) -> f64 {
    source
        .iter()
        .map(|v| {
            let e: Vec<f64> = target.iter().map(|t| (*v - *t).norm_squared()).collect();
            let w: Vec<f64> = e.iter().map(|e| (-e / (2.0 * sigma * sigma)).exp()).collect();
            w.iter().zip(&e).map(|(w, e)| w * e).sum::<f64>() / w.iter().sum::<f64>()
        })
        .sum::<f64>()
        / source.len() as f64
}

fn full_ratio_equivalence() -> Outcome {
    let mut r = rng(201);
    let mut identical = 0;
    let mut worst_naive = 0.0f64;
    for _ in 0..EQUIVALENCE_INSTANCES {
        let source: Vec<Vec3<f64>> = (0..r.random_range(10..60)).map(|_| point(&mut r, 1.0)).collect();
        let target: Vec<Vec3<f64>> = (0..r.random_range(10..80)).map(|_| point(&mut r, 1.0)).collect();
        let sigma = r.random_range(0.05..0.5);
        let cfg = IcpConfig { ratio: 1.0, sigma };
        let (value, grads) = all_vertices_soft_icp(&source, &target, sigma);
        let dense = fractional_soft_icp_with(&source, &target, &cfg, SoftmaxSupport::Dense).unwrap();
        let auto = fractional_soft_icp(&source, &target, &cfg).unwrap();
        let everyone = select_attached(&source, &PointGrid::new(&target), source.len()) == (0..source.len()).collect::<Vec<_>>();
        let same = |l: &ooalign::losses::LossTerm<f64>| l.value.to_bits() == value.to_bits() && l.d_source.iter().zip(&grads).all(|(a, b)| a.to_array().map(f64::to_bits) == b.to_array().map(f64::to_bits));
        identical += usize::from(same(&dense) && same(&auto) && everyone);
        worst_naive = worst_naive.max((naive_soft_icp(&source, &target, sigma) - value).abs() / value);
    }
    outcome(
        identical == EQUIVALENCE_INSTANCES && worst_naive < 1e-12,
        format!("{identical}/{EQUIVALENCE_INSTANCES} bit-identical, unshifted form rel {worst_naive:.1e}"),
    )
}

fn rigid_recovery() -> Outcome {
    let body = box_mesh::<f64>("body", Vec3::new(-0.5, -0.3, -0.4), Vec3::new(0.5, 0.3, 0.4));
    let knob = icosphere::<f64>("knob", Vec3::new(0.3, 0.5, 0.1), 0.25, 2);
    let mesh = remesh_subdivide(&merge("asymmetric", &[body, knob]), 400);
    let stats = compute_stats(&mesh);
    let diag = stats.diagonal();
    let mut cfg = AlignConfig {
        mode: AlignMode::Rigid,
        jitter: JitterConfig::none(),
        restarts: 1,
        init: InitStrategy::Base,
        icp_ratio: 1.0,
        icp_sigma: Some(0.01 * diag),
        ..AlignConfig::default()
    };
    cfg.schedule.total_steps = 240;
    cfg.schedule.lambda_clip = 0.0;
    cfg.schedule.lambda_pen = vec![0.0; 3];
    cfg.schedule.lambda_icp = vec![1.0; 3];
    let mut r = rng(301);
    let mut ok = 0;
    let (mut worst_rot, mut worst_t) = (0.0f64, 0.0f64);
    for _ in 0..RIGID_TRIALS {
        let angle = r.random_range(0.0..=RIGID_MAX_ROTATION_DEG).to_radians();
        let offset = unit(&mut r) * (r.random_range(0.0..=RIGID_MAX_OFFSET) * diag);
        let pert = PoseParams { tau: offset, quat: Quat::from_axis_angle(unit(&mut r), angle), log_scale: 0.0 };
        let start = perturbation_about(stats.centroid, &pert).unwrap();
        let run = run_alignment(&mesh, &mesh, &GuidanceTarget::text(""), &NullProvider, &cfg, &start).unwrap();
        let err = reference_error(&mesh, &mesh, &run.best_pose, &PoseParams::identity()).unwrap();
        worst_rot = worst_rot.max(err.rotation_deg);
        worst_t = worst_t.max(err.translation);
        ok += usize::from(err.rotation_deg < RIGID_ROTATION_TOL_DEG && err.translation < RIGID_TRANSLATION_TOL);
    }
    outcome(ok >= RIGID_REQUIRED, format!("{ok}/{RIGID_TRIALS} recovered, worst {worst_rot:.2e} deg / {worst_t:.2e} diag"))
}

/// Open sheet in the plane `y = 0` with upward normals.
fn plate_sheet(half: f64, cells: usize) -> TriMesh<f64> {
    let step = 2.0 * half / cells as f64;
    let idx = |i: usize, j: usize| i * (cells + 1) + j;
    let mut vertices = Vec::new();
    for i in 0..=cells {
        for j in 0..=cells {
            vertices.push(Vec3::new(-half + i as f64 * step, 0.0, -half + j as f64 * step));
        }
    }
    let mut faces = Vec::new();
    for i in 0..cells {
        for j in 0..cells {
            faces.push([idx(i, j), idx(i, j + 1), idx(i + 1, j)]);
            faces.push([idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1)]);
        }
    }
    TriMesh::new("plate", vertices, faces).unwrap()
}

fn penetration_resolution() -> Outcome {
    let plate = plate_sheet(1.0, 40);
    let normals = compute_vertex_normals(&plate).normals;
    let diag = compute_stats(&plate).diagonal();
    let radius = 0.3;
    let sphere = icosphere("sphere", Vec3::zero(), radius, 3);
    let mut cfg = AlignConfig { mode: AlignMode::Rigid, jitter: JitterConfig::none(), restarts: 1, init: InitStrategy::Base, ..AlignConfig::default() };
    cfg.schedule.total_steps = PENETRATION_STEPS;
    cfg.schedule.lambda_clip = 0.0;
    cfg.schedule.lambda_icp = vec![0.0; 3];
    let margin = 0.01 * diag;
    let bound = margin + PENETRATION_SLACK * diag;
    let mut r = rng(401);
    let (mut ok, mut worst, mut start_depth) = (0, f64::NEG_INFINITY, 0.0f64);
    for _ in 0..PENETRATION_TRIALS {
        // 30% of the diameter below the plate surface.
        let centre = Vec3::new(r.random_range(-0.5..0.5), radius - 0.3 * 2.0 * radius, r.random_range(-0.5..0.5));
        let start = PoseParams { tau: centre, quat: Quat::from_axis_angle(unit(&mut r), r.random_range(0.0..3.0)), log_scale: 0.0 };
        let posed = apply_pose(&sphere, &start).unwrap();
        start_depth = start_depth.max(max_signed_depth(&posed.vertices, &plate.vertices, &normals));
        let run = run_alignment(&sphere, &plate, &GuidanceTarget::text(""), &NullProvider, &cfg, &start).unwrap();
        let depth = max_signed_depth(&apply_pose(&sphere, &run.best_pose).unwrap().vertices, &plate.vertices, &normals);
        worst = worst.max(depth);
        ok += usize::from(depth <= bound);
    }
    outcome(
        ok == PENETRATION_TRIALS,
        format!("{ok}/{PENETRATION_TRIALS} resolved, start depth {start_depth:.3}, worst {worst:.4} <= {bound:.4}"),
    )
}

/// Faces of `mesh` facing up, as an open sheet.
fn upward_cap(mesh: &TriMesh<f64>) -> TriMesh<f64> {
    let mut remap = BTreeMap::new();
    let mut vertices = Vec::new();
    let faces: Vec<[usize; 3]> = mesh
        .faces
        .iter()
        .filter(|f| {
            let [a, b, c] = f.map(|i| mesh.vertices[i]);
            (b - a).cross(c - a).normalized().y > 0.9
        })
        .map(|f| {
            f.map(|i| {
                *remap.entry(i).or_insert_with(|| {
                    vertices.push(mesh.vertices[i]);
                    vertices.len() - 1
                })
            })
        })
        .collect();
    TriMesh::new("cap", vertices, faces).unwrap()
}

fn contact_trend() -> Outcome {
    let case = fixture_cases(DENSE_VERTICES).into_iter().find(|c| c.id == "plates_stacked").unwrap();
    let placed = apply_pose(&case.source, &case.reference_pose).unwrap();
    let (lo, hi) = compute_stats(&case.target).union_aabb(&compute_stats(&placed));
    let epsilon = CONTACT_EPSILON_OF_HEIGHT * (hi.y - lo.y);
    // Signed depth against the underside of a thin closed plate is positive
    // for any source above it, so the lower plate enters as its upper surface.
    let target = upward_cap(&case.target);
    let mut cfg = AlignConfig {
        mode: AlignMode::Rigid,
        jitter: JitterConfig::none(),
        restarts: 1,
        init: InitStrategy::Base,
        penetration_margin: Some(0.0),
        ..AlignConfig::default()
    };
    cfg.schedule.lambda_clip = 0.0;
    let mut r = rng(501);
    let mut monotone = 0;
    let mut rows = Vec::new();
    for _ in 0..CONTACT_RUNS {
        let lift = Vec3::new(r.random_range(-0.2..0.2), r.random_range(0.05..0.2), r.random_range(-0.2..0.2));
        let tilt = Quat::from_axis_angle(unit(&mut r), r.random_range(0.0..10f64.to_radians()));
        let start = PoseParams { tau: case.reference_pose.tau + lift, quat: tilt, log_scale: 0.0 };
        let fractions: Vec<f64> = CONTACT_RATIOS
            .iter()
            .map(|&ratio| {
                let cfg = AlignConfig { icp_ratio: ratio, ..cfg.clone() };
                let run = run_alignment(&case.source, &target, &GuidanceTarget::text(""), &NullProvider, &cfg, &start).unwrap();
                contact_fraction(&apply_pose(&case.source, &run.best_pose).unwrap(), &target, epsilon).unwrap()
            })
            .collect();
        monotone += usize::from(fractions.windows(2).all(|w| w[1] <= w[0]));
        rows.push(fractions.iter().map(|f| format!("{f:.2}")).collect::<Vec<_>>().join(">="));
    }
    outcome(monotone >= CONTACT_REQUIRED, format!("{monotone}/{CONTACT_RUNS} non-increasing [{}]", rows.join(" ")))
}

fn silhouette_config() -> AlignConfig {
    let mut cfg = AlignConfig {
        mode: AlignMode::Rigid,
        jitter: JitterConfig::none(),
        restarts: SILHOUETTE_RESTARTS,
        init: InitStrategy::TranslationOffset { max_fraction: 0.5 },
        ..AlignConfig::default()
    };
    cfg.schedule.total_steps = 150;
    cfg.schedule.lambda_icp = vec![0.0; 3];
    cfg.schedule.lambda_pen = vec![0.0; 3];
    cfg.schedule.softness_px = 3.0;
    cfg.schedule.rig = RigSchedule { num_views: 8, width: 32, height: 32, ..RigSchedule::default() };
    cfg.adam.lr = 0.01;
    cfg.adam.group_lr_scale = [1.0, 0.2, 1.0];
    cfg
}

fn silhouette_end_to_end() -> Outcome {
    let cases: Vec<FixtureCase> = fixture_cases(0).into_iter().filter(|c| SILHOUETTE_CASES.contains(&c.id.as_str())).collect();
    let mut cfg = silhouette_config();
    let mut passed = 0;
    let mut parts = Vec::new();
    for (k, c) in cases.iter().enumerate() {
        cfg.master_seed = 600 + k as u64;
        let reference = compose_scene(&c.target, &apply_pose(&c.source, &c.reference_pose).unwrap());
        let provider = SilhouetteProvider::from_scene(reference, cfg.shading.clone());
        let run = run_alignment(&c.source, &c.target, &GuidanceTarget::text(&c.prompt), &provider, &cfg, &c.reference_pose).unwrap();
        let good = run
            .restarts
            .iter()
            .filter(|rs| reference_error(&c.source, &c.target, &rs.best_pose, &c.reference_pose).unwrap().translation < SILHOUETTE_TRANSLATION_TOL)
            .count();
        passed += usize::from(good >= SILHOUETTE_REQUIRED);
        parts.push(format!("{} {good}/{}", c.id, run.restarts.len()));
    }
    outcome(passed == SILHOUETTE_CASES.len(), parts.join(", "))
}

fn protocol_constants() -> Outcome {
    let d = AlignConfig::default();
    let ramps = |v: &[f64]| v.windows(2).all(|w| (w[1] / w[0] - 10.0).abs() < 1e-12);
    let mut checks = vec![
        ("steps", d.schedule.total_steps == 2000),
        ("views", d.schedule.rig.num_views == 8),
        ("phases", d.schedule.num_phases == 3 && d.schedule.rig.phases() == 3),
        ("ramp", ramps(&d.schedule.lambda_icp) && ramps(&d.schedule.lambda_pen)),
        ("restarts", d.restarts == 5),
        ("size_clamp", SIZE_RATIO_RANGE == (0.1, 10.0)),
        ("ranges", PERTURB_TRANSLATION_SIDES == 10.0 && PERTURB_EULER_DEG == 180.0 && PERTURB_SCALE_RANGE == (0.01, 100.0)),
    ];
    let answers = |s: &str| [format!("{{\"size_ratio\": {s}}}"), "{\"penetration\": false}".to_string(), "{\"contact_ratio\": 0.5}".to_string()];
    checks.push(("clamped", parse_and_clamp(&answers("1000")).size_ratio == 10.0 && parse_and_clamp(&answers("0.001")).size_ratio == 0.1));

    // Empirical draws from the perturbation sampler on a 1 x 2 x 4 box.
    let stats = compute_stats(&box_mesh::<f64>("b", Vec3::zero(), Vec3::new(1.0, 2.0, 4.0)));
    let sides = [1.0, 2.0, 4.0];
    let mut r = rng(701);
    let (mut t_max, mut t_ok) = ([0.0f64; 3], true);
    let (mut s_lo, mut s_hi, mut a_max) = (f64::INFINITY, 0.0f64, 0.0f64);
    for _ in 0..20_000 {
        let p = random_initial_pose(&mut r, &stats, AlignMode::Scaled);
        let t = p.tau.to_array();
        for k in 0..3 {
            t_ok &= t[k].abs() <= 10.0 * sides[k] * (1.0 + 1e-12);
            t_max[k] = t_max[k].max(t[k].abs() / (10.0 * sides[k]));
        }
        let s = p.scale();
        s_lo = s_lo.min(s);
        s_hi = s_hi.max(s);
        a_max = a_max.max(p.quat.angle_to(Quat::identity()).to_degrees());
    }
    checks.push(("translation_draws", t_ok && t_max.iter().all(|m| *m > 0.99)));
    checks.push(("scale_draws", s_lo >= 0.01 * (1.0 - 1e-12) && s_hi <= 100.0 * (1.0 + 1e-12) && s_hi > 99.0 && s_lo < 0.1));
    checks.push(("rotation_draws", a_max > 170.0));
    let rigid = random_initial_pose(&mut r, &stats, AlignMode::Rigid);
    checks.push(("rigid_scale", rigid.log_scale == 0.0));
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(failed.is_empty(), if failed.is_empty() { format!("{} checks", checks.len()) } else { format!("failed: {}", failed.join(",")) })
}

type Aabb = ([f64; 3], [f64; 3]);

fn analytic_iou(a: Aabb, b: Aabb) -> f64 {
    let vol = |lo: [f64; 3], hi: [f64; 3]| (0..3).map(|k| (hi[k] - lo[k]).max(0.0)).product::<f64>();
    let inter = vol(std::array::from_fn(|k| a.0[k].max(b.0[k])), std::array::from_fn(|k| a.1[k].min(b.1[k])));
    inter / (vol(a.0, a.1) + vol(b.0, b.1) - inter)
}

fn intersection_oracle() -> Outcome {
    let mut r = rng(801);
    let mut draw = || -> Aabb {
        let lo: [f64; 3] = std::array::from_fn(|_| r.random_range(-1.0..0.5));
        (lo, std::array::from_fn(|k| lo[k] + r.random_range(0.3..1.5)))
    };
    let mesh = |b: Aabb| box_mesh::<f64>("b", Vec3::from_f64(b.0), Vec3::from_f64(b.1));
    let (mut worst_a, mut worst_c) = (0.0f64, 0.0f64);
    for _ in 0..OVERLAP_PAIRS {
        let (a, b) = (draw(), draw());
        let r128 = intersection_ratio(&mesh(a), &mesh(b), 128).unwrap().ratio;
        let r256 = intersection_ratio(&mesh(a), &mesh(b), 256).unwrap().ratio;
        worst_a = worst_a.max((r128 - analytic_iou(a, b)).abs());
        worst_c = worst_c.max((r128 - r256).abs());
    }
    outcome(
        worst_a <= OVERLAP_TOL && worst_c <= CONVERGENCE_TOL,
        format!("{OVERLAP_PAIRS} pairs, analytic gap {worst_a:.4} <= {OVERLAP_TOL}, res 256 gap {worst_c:.4} <= {CONVERGENCE_TOL}"),
    )
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let data = tempfile::tempdir().unwrap();
    let cases: Vec<FixtureCase> = fixture_cases(0).into_iter().filter(|c| c.id == "block_on_plate" || c.id == "ball_on_plate").collect();
    let manifest = load_manifest(&write_fixture_set(data.path(), &cases).unwrap()).unwrap();
    let run = |workers: usize| {
        let out = tempfile::tempdir().unwrap();
        let mut config = silhouette_config();
        config.schedule.total_steps = 18;
        config.schedule.rig = RigSchedule { num_views: 4, width: 16, height: 16, ..RigSchedule::default() };
        config.restarts = 2;
        let opts = BenchmarkOptions {
            config,
            workers,
            voxel_resolution: 32,
            eval_views: 4,
            eval_rig: EvalRig { width: 16, height: 16, ..EvalRig::default() },
            ..BenchmarkOptions::new(out.path())
        };
        let report = run_cases(&manifest, &opts).unwrap();
        let mut files = read_tree(&report.run_dir);
        // Wall-clock timings are the only intentionally nondeterministic output.
        files.retain(|name, _| !name.contains("timings"));
        files
    };
    let (a, b) = (run(1), run(2));
    let logs = a.keys().filter(|k| k.ends_with(".json") || k.ends_with(".jsonl")).count();
    let same = a == b && a.contains_key("summary.csv") && logs > 0;
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    outcome(same, format!("{} files ({logs} JSON logs, summary.csv) compared across 1 and 2 workers, {} differ", a.len(), differing.len()))
}

fn hparam_parsing() -> Outcome {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let prompts = build_prompts("candle", "candle holder", "candle sits inside a candle holder").unwrap();
    let templates_ok = [("size_ratio", prompts.size_ratio.as_str()), ("penetration", &prompts.penetration), ("contact_ratio", &prompts.contact_ratio)]
        .iter()
        .all(|(name, text)| std::fs::read(golden.join(format!("{name}.txt"))).unwrap() == text.as_bytes());
    let clamp = |s: f64, c: f64| {
        let d = parse_and_clamp(&[format!("{{\"size_ratio\": {s}}}"), "{\"penetration\": true}".into(), format!("{{\"contact_ratio\": {c}}}")]);
        (d.size_ratio, d.contact_ratio)
    };
    let clamps_ok = clamp(50.0, 2.0) == (10.0, 1.0) && clamp(0.01, -1.0) == (0.1, 0.0) && clamp(3.0, 0.25) == (3.0, 0.25);
    let garbage = parse_and_clamp(&["no json".into(), "{}".into(), "{\"contact_ratio\": \"x\"}".into()]);
    let fallback_ok = garbage.size_ratio == 1.0 && !garbage.penetration_allowed && garbage.contact_ratio == 0.3;
    let mut allowed = AlignConfig::default();
    parse_and_clamp(&["{\"size_ratio\": 2}".into(), "{\"penetration\": true}".into(), "{\"contact_ratio\": 0.4}".into()]).apply_to(&mut allowed);
    let policy_ok = allowed.allow_penetration && allowed.icp_ratio == 0.4 && allowed.size_ratio == Some(2.0);

    let mut r = rng(901);
    let labels: Vec<HparamLabel> = (0..BASELINE_DRAWS)
        .map(|i| HparamLabel { id: i.to_string(), size_ratio: r.random_range(0.1..=10.0), penetration: r.random_bool(0.5), contact_ratio: r.random_range(0.0..=1.0) })
        .collect();
    let decisions: Vec<(String, HparamDecision)> = (0..BASELINE_DRAWS).map(|i| (i.to_string(), random_decision(&mut r))).collect();
    let report = evaluate_hparam_accuracy(&labels, &decisions).unwrap();
    let baseline_ok = (report.penetration_accuracy - 50.0).abs() <= 2.0 && (report.contact_ratio_mae - 1.0 / 3.0).abs() <= 0.01;
    outcome(
        templates_ok && clamps_ok && fallback_ok && policy_ok && baseline_ok,
        format!(
            "templates {templates_ok}, clamps {clamps_ok}, fallback {fallback_ok}, policy {policy_ok}, random accuracy {:.2}% mae {:.4}",
            report.penetration_accuracy, report.contact_ratio_mae
        ),
    )
}

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("gradient_suite", gradient_suite),
        ("full_ratio_equivalence", full_ratio_equivalence),
        ("rigid_recovery", rigid_recovery),
        ("penetration_resolution", penetration_resolution),
        ("contact_trend", contact_trend),
        ("silhouette_end_to_end", silhouette_end_to_end),
        ("protocol_constants", protocol_constants),
        ("intersection_oracle", intersection_oracle),
        ("determinism", determinism),
        ("hparam_parsing", hparam_parsing),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failures = 0;
    for (name, check) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {name} ({}, {:.1}s)", o.detail, start.elapsed().as_secs_f64());
        failures += usize::from(!o.pass);
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
