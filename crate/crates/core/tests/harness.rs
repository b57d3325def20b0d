use std::path::Path;

use ooalign::geometry::{box_mesh, compute_stats, icosphere, is_watertight, load_obj, remesh_subdivide, Role, TriMesh};
use ooalign::geometry::distance::closest_point_on_triangle;
use ooalign::guidance::{GuidanceProvider, GuidanceTarget, NullProvider, SilhouetteProvider};
use ooalign::harness::fixtures::{burger_parts, fixture_cases, write_fixture_set, FixtureCase, DENSE_VERTICES};
use ooalign::harness::*;
use ooalign::linalg::{Quat, Vec3};
use ooalign::metrics::{intersection_ratio, semantic_eval, EvalRig};
use ooalign::optimizer::{run_alignment, AlignConfig, AlignMode, InitStrategy, JitterConfig, PhaseSchedule};
use ooalign::pose::{apply_pose, compose_scene, PoseParams};
use ooalign::render::{RigSchedule, Shading};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_cube() -> TriMesh<f64> {
    box_mesh("cube", Vec3::splat(-0.5), Vec3::splat(0.5))
}

fn case_for(id: &str, source: &Path, target: &Path, mode: AlignMode) -> BenchmarkCase {
    BenchmarkCase {
        id: id.into(),
        source_path: source.to_path_buf(),
        target_path: target.to_path_buf(),
        prompt: "x".into(),
        reference_pose: PoseParams::identity(),
        mode,
    }
}

#[test]
fn rigid_perturbation_keeps_unit_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let p = perturb_pose(&unit_cube(), &PoseParams::identity(), AlignMode::Rigid, &mut rng).unwrap();
        assert_eq!(p.scale(), 1.0);
    }
}

#[test]
fn perturbation_is_reproducible_from_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cube.obj");
    ooalign::geometry::save_obj(&unit_cube(), &path).unwrap();
    let case = case_for("c", &path, &path, AlignMode::Scaled);
    let a = perturb_case(&case, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = perturb_case(&case, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let c = perturb_case(&case, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn unit_box_translations_stay_within_ten_sides() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut max_abs: f64 = 0.0;
    for _ in 0..1000 {
        let p = perturb_pose(&unit_cube(), &PoseParams::identity(), AlignMode::Scaled, &mut rng).unwrap();
        for t in p.tau.to_array() {
            assert!(t.abs() <= 10.0 + 1e-12, "{t}");
            max_abs = max_abs.max(t.abs());
        }
        assert!((0.01 - 1e-12..=100.0 + 1e-9).contains(&p.scale()));
    }
    assert!(max_abs > 9.0, "range is used: {max_abs}");
}

#[test]
fn perturbation_is_relative_to_the_placed_source() {
    // A source placed far away and doubled in size: translations scale with
    // its placed sides and rotation happens about its placed centroid.
    let reference = PoseParams::new(Vec3::new(5.0, 0.0, 0.0), Quat::identity(), 2.0);
    let mut a = ChaCha8Rng::seed_from_u64(3);
    let p = perturb_pose(&unit_cube(), &reference, AlignMode::Rigid, &mut a).unwrap();
    let mut b = ChaCha8Rng::seed_from_u64(3);
    let sides = [2.0; 3];
    let d: [f64; 3] = std::array::from_fn(|k| b.random_range(-10.0 * sides[k]..=10.0 * sides[k]));
    let centroid_after = p.transform_point(Vec3::zero()).unwrap();
    let expected = Vec3::new(5.0, 0.0, 0.0) + Vec3::from_f64(d);
    assert!((centroid_after - expected).norm() < 1e-9);
}

fn plate() -> TriMesh<f64> {
    box_mesh("plate", Vec3::new(-2.0, -0.1, -2.0), Vec3::new(2.0, 0.0, 2.0))
}

#[test]
fn floating_cube_drops_onto_the_plate() {
    let cube = box_mesh("cube", Vec3::new(-0.5, 1.0, -0.5), Vec3::new(0.5, 2.0, 0.5));
    let p = snap_baseline(&cube, &plate());
    assert!((p.tau - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-3, "{:?}", p.tau);
    assert_eq!(p.quat, Quat::identity());
    assert_eq!(p.log_scale, 0.0);
}

#[test]
fn touching_meshes_do_not_move() {
    let cube = box_mesh("cube", Vec3::new(-0.5, 0.0, -0.5), Vec3::new(0.5, 1.0, 0.5));
    let p = snap_baseline(&cube, &plate());
    assert!(p.tau.norm() < 1e-9, "{:?}", p.tau);
}

#[test]
fn sunken_cube_is_pushed_out_along_the_shortest_way() {
    let cube = remesh_subdivide(&box_mesh("cube", Vec3::new(-0.25, -0.05, -0.25), Vec3::new(0.25, 0.45, 0.25)), 200);
    let p = snap_baseline(&cube, &remesh_subdivide(&plate(), 400));
    assert!((p.tau - Vec3::new(0.0, 0.05, 0.0)).norm() < 1e-6, "{:?}", p.tau);
}

/// Brute-force minimum over source vertices of the distance to the target surface.
fn min_vertex_surface_distance(source: &TriMesh<f64>, target: &TriMesh<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for &p in &source.vertices {
        for f in &target.faces {
            let q = closest_point_on_triangle(p, target.vertices[f[0]], target.vertices[f[1]], target.vertices[f[2]]);
            best = best.min((q - p).norm());
        }
    }
    best
}

#[test]
fn random_spheres_snap_into_contact_with_the_plate() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let target = plate();
    for _ in 0..5 {
        let c = Vec3::new(rng.random_range(-1.5..1.5), rng.random_range(0.5..3.0), rng.random_range(-1.5..1.5));
        let sphere = icosphere("s", c, rng.random_range(0.2..0.6), 3);
        let p = snap_baseline(&sphere, &target);
        let moved = apply_pose(&sphere, &p).unwrap();
        let (lo, hi) = compute_stats(&moved).union_aabb(&compute_stats(&target));
        let diag = (hi - lo).norm();
        let d = min_vertex_surface_distance(&moved, &target);
        assert!(d < 1e-3 * diag, "{d}");
        assert_eq!(p.quat, Quat::identity());
    }
}

#[test]
fn snap_reaches_contact_for_rotated_boxes() {
    // Edge and corner contacts: the closest-pair distance after snapping is zero.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let q = Quat::from_euler_xyz(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let pose = PoseParams::new(Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(1.5..3.0), 0.3), q, 1.0);
        let cube = apply_pose(&unit_cube(), &pose).unwrap();
        let p = snap_baseline(&cube, &plate());
        let moved = apply_pose(&cube, &p).unwrap();
        assert!(closest_pair_vector(&moved, &plate()).norm() < 1e-9);
        let lowest = moved.vertices.iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
        assert!(lowest.abs() < 1e-9, "{lowest}");
    }
}

#[test]
fn parity_inside_test_on_a_cube() {
    let cube = unit_cube();
    assert!(point_inside(&cube, Vec3::new(0.1, 0.2, -0.3)));
    assert!(!point_inside(&cube, Vec3::new(0.1, 0.7, -0.3)));
}

fn write_case_files(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let s = dir.join("s.obj");
    let t = dir.join("t.obj");
    ooalign::geometry::save_obj(&unit_cube(), &s).unwrap();
    ooalign::geometry::save_obj(&plate(), &t).unwrap();
    (s, t)
}

#[test]
fn manifest_accepts_array_and_versioned_forms() {
    let dir = tempfile::tempdir().unwrap();
    let case = r#"{"id":"a","source_path":"s.obj","target_path":"t.obj","prompt":"p","reference_pose":{"tau":[0,1,0],"quat":[1,0,0,0],"scale":1},"mode":"rigid"}"#;
    let arr = parse_manifest(&format!("[{case}]"), dir.path()).unwrap();
    let obj = parse_manifest(&format!(r#"{{"schema_version":1,"cases":[{case}]}}"#), dir.path()).unwrap();
    assert_eq!(arr, obj);
    assert_eq!(arr[0].source_path, dir.path().join("s.obj"));
    assert_eq!(arr[0].reference_pose.tau, Vec3::new(0.0, 1.0, 0.0));
    assert_eq!(arr[0].mode, AlignMode::Rigid);
}

#[test]
fn manifest_schema_violations_are_rejected() {
    let d = Path::new(".");
    let case = |id: &str, extra: &str| {
        format!(r#"{{"id":"{id}","source_path":"s.obj","target_path":"t.obj","prompt":"p","reference_pose":{{"tau":[0,0,0],"quat":[1,0,0,0],"scale":1}},"mode":"rigid"{extra}}}"#)
    };
    for bad in [
        format!("[{}]", case("a", r#","color":"red""#)),
        format!("[{},{}]", case("a", ""), case("a", "")),
        format!(r#"{{"schema_version":2,"cases":[{}]}}"#, case("a", "")),
        r#"{"schema_version":1,"cases":[],"extra":1}"#.to_string(),
        format!("[{}]", case("../a", "")),
        "[{\"id\":\"a\"}]".to_string(),
        "not json".to_string(),
    ] {
        assert!(matches!(parse_manifest(&bad, d), Err(HarnessError::Manifest(_))), "{bad}");
    }
}

#[test]
fn case_seeds_depend_on_id_and_master_only() {
    assert_eq!(case_seed(3, "a"), case_seed(3, "a"));
    assert_ne!(case_seed(3, "a"), case_seed(3, "b"));
    assert_ne!(case_seed(3, "a"), case_seed(4, "a"));
}

#[test]
fn summary_rows_are_column_means() {
    let mk = |m: Method, ok: bool, inter: f64, sem: Option<f64>, tr: f64| {
        let mut r: RunRecord = serde_json::from_value(serde_json::json!({
            "schema_version": 1, "case_id": "c", "method": m, "status": if ok { "ok" } else { "failed" }, "seed": 0,
            "config": AlignConfig::default(), "initial_pose": null, "final_pose": null, "run_result": null,
            "intersection": null, "semantic": null, "reference_error": null, "artifacts": { "record": "r" }
        }))
        .unwrap();
        if ok {
            r.intersection = Some(ooalign::metrics::IntersectionReport {
                intersection_volume: 0.0,
                union_volume: 1.0,
                ratio: inter,
                voxel_resolution: 8,
                watertight_flags: (true, true),
            });
            r.semantic = Some(ooalign::metrics::SemanticReport {
                per_view_scores: vec![],
                mean_score: sem,
                num_views: 1,
                provider_id: "p".into(),
                available: sem.is_some(),
                error: None,
            });
            r.reference_error = Some(ReferenceError { translation: tr, rotation_deg: 2.0 * tr, log_scale: 0.0 });
        }
        r
    };
    let records = vec![
        mk(Method::Method, true, 0.1, Some(0.5), 1.0),
        mk(Method::Method, true, 0.3, None, 3.0),
        mk(Method::Method, false, 9.0, Some(9.0), 9.0),
        mk(Method::Snap, true, 0.2, Some(-1.0), 0.5),
    ];
    let rows = summarize(&records, &[Method::Method, Method::Snap, Method::MultistartSnap]);
    assert_eq!(rows[0].cases, 3);
    assert_eq!(rows[0].failed, 1);
    assert!((rows[0].intersection_mean.unwrap() - 0.2).abs() < 1e-15);
    assert_eq!(rows[0].semantic_mean, Some(0.5));
    assert_eq!(rows[0].translation_error_mean, Some(2.0));
    assert_eq!(rows[0].rotation_error_deg_mean, Some(4.0));
    assert_eq!(rows[2].cases, 0);
    let csv = summary_csv(&rows);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], SUMMARY_HEADER);
    assert_eq!(lines[1], "method,3,1,0.500000,0.200000,2.000000,4.000000");
    assert_eq!(lines[2], "snap,1,0,-1.000000,0.200000,0.500000,1.000000");
    assert_eq!(lines[3], "multistart_snap,0,0,,,,");
}

fn small_config() -> AlignConfig {
    let rig = RigSchedule { num_views: 4, width: 16, height: 16, ..RigSchedule::default() };
    AlignConfig {
        mode: AlignMode::Rigid,
        schedule: PhaseSchedule { total_steps: 18, rig, softness_px: 2.0, ..PhaseSchedule::default() },
        restarts: 2,
        jitter: JitterConfig::none(),
        init: InitStrategy::TranslationOffset { max_fraction: 0.1 },
        ..AlignConfig::default()
    }
}

fn small_options(out: &Path) -> BenchmarkOptions {
    BenchmarkOptions {
        config: small_config(),
        voxel_resolution: 32,
        eval_views: 4,
        eval_rig: EvalRig { width: 16, height: 16, ..EvalRig::default() },
        ..BenchmarkOptions::new(out)
    }
}

fn two_case_manifest(dir: &Path) -> std::path::PathBuf {
    let cases: Vec<FixtureCase> = fixture_cases(0).into_iter().filter(|c| c.id == "block_on_plate" || c.id == "ball_on_plate").collect();
    write_fixture_set(dir, &cases).unwrap()
}

#[test]
fn two_case_benchmark_produces_records_summary_and_artifacts() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let manifest = two_case_manifest(data.path());
    let opts = small_options(out.path());
    let report = run_benchmark(&manifest, &opts).unwrap();
    assert_eq!(report.records.len(), 6);
    assert!(report.records.iter().all(|r| r.status == RecordStatus::Ok), "{:?}", report.records.iter().map(|r| &r.error).collect::<Vec<_>>());
    assert_eq!(report.summary.len(), 3);

    for m in Method::ALL {
        let rs: Vec<&RunRecord> = report.records.iter().filter(|r| r.method == m).collect();
        assert_eq!(rs.len(), 2);
        let row = report.summary.iter().find(|s| s.method == m).unwrap();
        let inter = rs.iter().map(|r| r.intersection.as_ref().unwrap().ratio).sum::<f64>() / 2.0;
        let sem = rs.iter().map(|r| r.semantic.as_ref().unwrap().mean_score.unwrap()).sum::<f64>() / 2.0;
        assert!((row.intersection_mean.unwrap() - inter).abs() < 1e-15);
        assert!((row.semantic_mean.unwrap() - sem).abs() < 1e-15);
    }
    let csv = std::fs::read_to_string(report.run_dir.join("summary.csv")).unwrap();
    assert_eq!(csv, report.summary_csv);
    assert_eq!(csv.lines().count(), 4);
    assert!(report.run_dir.ends_with("run-seed0"));
    assert!(report.run_dir.join("timings.json").exists());

    // Every referenced artifact exists; steps only for the optimizer.
    for r in &report.records {
        let a = &r.artifacts;
        for p in [Some(&a.record), a.posed_source.as_ref(), a.scene.as_ref(), a.pose.as_ref(), a.steps.as_ref()].into_iter().flatten() {
            assert!(report.run_dir.join(p).exists(), "{}", p.display());
        }
        assert_eq!(a.steps.is_some(), r.method == Method::Method);
        assert_eq!(r.run_result.is_some(), r.method == Method::Method);
    }
}

#[test]
fn methods_share_the_initial_perturbation() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let manifest = two_case_manifest(data.path());
    let report = run_benchmark(&manifest, &small_options(out.path())).unwrap();
    for id in ["block_on_plate", "ball_on_plate"] {
        let rs: Vec<&RunRecord> = report.records.iter().filter(|r| r.case_id == id).collect();
        assert!(rs.windows(2).all(|w| w[0].initial_pose == w[1].initial_pose));
        // The multi-start baseline snaps from the optimizer's restart starts.
        let method = rs.iter().find(|r| r.method == Method::Method).unwrap();
        let multi = rs.iter().find(|r| r.method == Method::MultistartSnap).unwrap();
        let starts: Vec<PoseParams<f64>> = method.run_result.as_ref().unwrap().restarts.iter().map(|r| r.initial_pose).collect();
        let case = load_manifest(&manifest).unwrap().into_iter().find(|c| c.id == id).unwrap();
        let source = load_obj::<f64>(&case.source_path).unwrap();
        let target = load_obj::<f64>(&case.target_path).unwrap();
        let drawn = restart_starts(&source, &target, &method.config, method.initial_pose.as_ref().unwrap()).unwrap();
        assert_eq!(starts, drawn);
        assert!(multi.selected_start.unwrap() < drawn.len());
    }
}

#[test]
fn records_are_self_contained() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let manifest = two_case_manifest(data.path());
    let opts = small_options(out.path());
    let report = run_benchmark(&manifest, &opts).unwrap();
    let cases = load_manifest(&manifest).unwrap();
    for r in &report.records {
        let case = cases.iter().find(|c| c.id == r.case_id).unwrap();
        let target = load_obj::<f64>(&case.target_path).unwrap();
        let posed = load_obj::<f64>(report.run_dir.join(r.artifacts.posed_source.as_ref().unwrap())).unwrap();
        let inter = intersection_ratio(&posed, &target, opts.voxel_resolution).unwrap();
        assert!((inter.ratio - r.intersection.as_ref().unwrap().ratio).abs() <= 1e-9);

        let scene = load_obj::<f64>(report.run_dir.join(r.artifacts.scene.as_ref().unwrap())).unwrap();
        assert_eq!(scene.role_mask(Role::Source).iter().filter(|m| **m).count(), posed.vertex_count());
        let source = load_obj::<f64>(&case.source_path).unwrap();
        let reference = compose_scene(&target, &apply_pose(&source, &case.reference_pose).unwrap());
        let provider = SilhouetteProvider::from_scene(reference, Shading::default());
        let sem = semantic_eval(&scene, &GuidanceTarget::text(&case.prompt), &provider, opts.eval_views, &opts.eval_rig, &Shading::default()).unwrap();
        let logged = r.semantic.as_ref().unwrap().mean_score.unwrap();
        assert!((sem.mean_score.unwrap() - logged).abs() <= 1e-9, "{} vs {logged}", sem.mean_score.unwrap());

        let pose_text = std::fs::read_to_string(report.run_dir.join(r.artifacts.pose.as_ref().unwrap())).unwrap();
        let pose: PoseParams<f64> = serde_json::from_str(&pose_text).unwrap();
        let reposed = apply_pose(&source, &pose).unwrap();
        let drift = reposed.vertices.iter().zip(&posed.vertices).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
        assert!(drift < 1e-9);
    }
}

#[test]
fn reruns_with_the_same_seed_are_byte_identical() {
    let data = tempfile::tempdir().unwrap();
    let manifest = two_case_manifest(data.path());
    let read = |dir: &Path, rel: &str| std::fs::read(dir.join("run-seed0").join(rel)).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_benchmark(&manifest, &small_options(a.path())).unwrap();
    let mut opts = small_options(b.path());
    opts.workers = 2;
    run_benchmark(&manifest, &opts).unwrap();
    for rel in ["summary.csv", "records.json", "block_on_plate/method/steps.jsonl", "ball_on_plate/method/record.json", "ball_on_plate/snap/scene.obj"] {
        assert_eq!(read(a.path(), rel), read(b.path(), rel), "{rel}");
    }
}

#[test]
fn missing_mesh_fails_only_its_case() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let (s, t) = write_case_files(data.path());
    let mut cases = vec![case_for("good", &s, &t, AlignMode::Rigid), case_for("bad", &data.path().join("missing.obj"), &t, AlignMode::Rigid)];
    cases[0].reference_pose = PoseParams::translation(Vec3::new(0.0, 0.5, 0.0));
    let mut opts = small_options(out.path());
    opts.methods = vec![Method::Snap, Method::Method];
    let report = run_cases(&cases, &opts).unwrap();
    assert_eq!(report.records.len(), 4);
    for r in &report.records {
        assert_eq!(r.status == RecordStatus::Ok, r.case_id == "good", "{:?}", r.error);
    }
    let bad = report.records.iter().find(|r| r.case_id == "bad").unwrap();
    assert!(bad.error.as_ref().unwrap().contains("missing.obj"));
    assert!(report.run_dir.join(&bad.artifacts.record).exists());
    assert_eq!(report.summary[0].failed, 1);
}

#[test]
fn unreachable_scorer_fails_the_method_but_not_the_baseline() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let (s, t) = write_case_files(data.path());
    let mut opts = small_options(out.path());
    opts.guidance = GuidanceChoice::External { addr: "127.0.0.1:1".into() };
    opts.methods = vec![Method::Method, Method::Snap];
    let mut case = case_for("c", &s, &t, AlignMode::Rigid);
    case.reference_pose = PoseParams::translation(Vec3::new(0.0, 0.5, 0.0));
    let report = run_cases(&[case], &opts).unwrap();
    assert_eq!(report.records[0].status, RecordStatus::Failed);
    assert!(report.records[0].error.as_ref().unwrap().contains("OOALIGN_SCORER_ADDR"));
    assert_eq!(report.records[1].status, RecordStatus::Ok);
    assert!(!report.records[1].semantic.as_ref().unwrap().available);
}

#[test]
fn fixture_set_is_watertight_and_touching_in_reference() {
    let cases = fixture_cases(DENSE_VERTICES);
    assert_eq!(cases.len(), 10);
    let ids: std::collections::BTreeSet<&str> = cases.iter().map(|c| c.id.as_str()).collect();
    assert_eq!(ids.len(), 10);
    assert!(cases.iter().any(|c| c.mode == AlignMode::Scaled));
    for c in &cases {
        assert!(is_watertight(&c.source.faces) && is_watertight(&c.target.faces), "{}", c.id);
        let centre = compute_stats(&c.source).aabb_center();
        assert!(centre.norm() < 1e-12, "{}", c.id);
        let placed = apply_pose(&c.source, &c.reference_pose).unwrap();
        let gap = closest_pair_vector(&placed, &c.target).norm();
        assert!(gap < 1e-9, "{} gap {gap}", c.id);
        let inter = intersection_ratio(&placed, &c.target, 64).unwrap().ratio;
        assert!(inter < 0.01, "{} overlap {inter}", c.id);
    }
}

#[test]
fn fixture_set_round_trips_through_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cases = fixture_cases(0);
    let manifest = write_fixture_set(dir.path(), &cases).unwrap();
    let loaded = load_manifest(&manifest).unwrap();
    assert_eq!(loaded.len(), 10);
    for (c, l) in cases.iter().zip(&loaded) {
        assert_eq!(c.id, l.id);
        assert_eq!(c.reference_pose, l.reference_pose);
        assert_eq!(load_obj::<f64>(&l.source_path).unwrap().vertices, c.source.vertices);
        assert_eq!(load_obj::<f64>(&l.target_path).unwrap().faces, c.target.faces);
    }
}

/// Silhouette-only stages: point-to-point attachment against the low-poly
/// disks would pull layers into each other.
fn stage_config() -> AlignConfig {
    let rig = RigSchedule { num_views: 4, width: 24, height: 24, ..RigSchedule::default() };
    let mut c = AlignConfig {
        mode: AlignMode::Rigid,
        schedule: PhaseSchedule {
            total_steps: 150,
            rig,
            softness_px: 3.0,
            lambda_icp: vec![0.0; 3],
            lambda_pen: vec![0.0; 3],
            ..PhaseSchedule::default()
        },
        restarts: 1,
        jitter: JitterConfig::none(),
        init: InitStrategy::Base,
        ..AlignConfig::default()
    };
    c.adam.lr = 0.01;
    c.adam.group_lr_scale = [1.0, 0.2, 1.0];
    c
}

fn offset(p: &PoseParams<f64>, d: [f64; 3]) -> PoseParams<f64> {
    PoseParams { tau: p.tau + Vec3::from_f64(d), ..*p }
}

#[test]
fn single_alignment_stage_matches_run_alignment() {
    let base = plate();
    let cube = unit_cube();
    let start = PoseParams::translation(Vec3::new(0.2, 0.9, 0.0));
    let mut cfg = small_config();
    cfg.restarts = 1;
    let stages = vec![
        Stage { mesh: base.clone(), prompt: "plate".into(), initial_pose: PoseParams::identity() },
        Stage { mesh: cube.clone(), prompt: "cube".into(), initial_pose: start },
    ];
    let composed = compose_iterative(&stages, &cfg, &mut |_, _| Ok(Box::new(NullProvider) as Box<dyn GuidanceProvider<f64>>)).unwrap();
    let direct = run_alignment(&cube, &base.clone().with_role(Role::Target), &GuidanceTarget::text("cube"), &NullProvider, &cfg, &start).unwrap();
    assert_eq!(composed.stages[1].pose, direct.best_pose);
    assert_eq!(composed.stages[1].result.as_ref().unwrap(), &direct);
}

#[test]
fn stacked_boxes_compose_with_labels_and_bookkeeping() {
    let sizes = [(1.6, 0.3), (1.0, 0.4), (0.6, 0.5)];
    let mut y = 0.0;
    let mut stages = Vec::new();
    for (i, (w, h)) in sizes.iter().enumerate() {
        let mesh = box_mesh(&format!("box{i}"), Vec3::new(-w / 2.0, -h / 2.0, -w / 2.0), Vec3::new(w / 2.0, h / 2.0, w / 2.0));
        let reference = PoseParams::translation(Vec3::new(0.0, y + h / 2.0, 0.0));
        y += h;
        stages.push((mesh, reference));
    }
    let counts: Vec<usize> = stages.iter().map(|(m, _)| m.vertex_count()).collect();
    let refs: Vec<PoseParams<f64>> = stages.iter().map(|s| s.1).collect();
    let meshes: Vec<TriMesh<f64>> = stages.iter().map(|s| s.0.clone()).collect();
    let input: Vec<Stage> = stages
        .into_iter()
        .enumerate()
        .map(|(i, (mesh, r))| Stage { mesh, prompt: format!("box {i}"), initial_pose: if i == 0 { r } else { offset(&r, [0.08, 0.1, -0.05]) } })
        .collect();
    let mut factory = |k: usize, scene: &TriMesh<f64>| -> Result<Box<dyn GuidanceProvider<f64>>, HarnessError> {
        let reference = compose_scene(scene, &apply_pose(&meshes[k], &refs[k]).unwrap());
        Ok(Box::new(SilhouetteProvider::from_scene(reference, Shading::default())))
    };
    let mut cfg = stage_config();
    cfg.schedule.total_steps = 60;
    let out = compose_iterative(&input, &cfg, &mut factory).unwrap();
    assert_eq!(out.scene.parts.len(), 3);
    assert_eq!(out.scene.parts.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(), ["box0", "box1", "box2"]);
    assert!(out.scene.parts.iter().all(|p| p.role == Role::Target));
    assert_eq!(out.stages[1].target_vertex_count, counts[0]);
    assert_eq!(out.stages[2].target_vertex_count, counts[0] + counts[1]);
    assert_eq!(out.scene.vertex_count(), counts.iter().sum::<usize>());
}

#[test]
fn burger_assembly_keeps_every_layer_separate() {
    let parts = burger_parts(0);
    assert_eq!(parts.len(), 4);
    let stages: Vec<Stage> = parts
        .iter()
        .enumerate()
        .map(|(i, p)| Stage {
            mesh: p.mesh.clone(),
            prompt: p.prompt.clone(),
            initial_pose: if i == 0 { p.reference_pose } else { offset(&p.reference_pose, [0.1, 0.12, -0.08]) },
        })
        .collect();
    let mut factory = |k: usize, scene: &TriMesh<f64>| -> Result<Box<dyn GuidanceProvider<f64>>, HarnessError> {
        let reference = compose_scene(scene, &apply_pose(&parts[k].mesh, &parts[k].reference_pose).unwrap());
        Ok(Box::new(SilhouetteProvider::from_scene(reference, Shading::default())))
    };
    let out = compose_iterative(&stages, &stage_config(), &mut factory).unwrap();
    assert_eq!(out.scene.parts.len(), 4);
    for k in 1..4 {
        let placed = out.scene.part_mesh(k);
        let below = ooalign::harness::fixtures::merge("below", &(0..k).map(|j| out.scene.part_mesh(j)).collect::<Vec<_>>());
        let ratio = intersection_ratio(&placed, &below, 128).unwrap().ratio;
        assert!(ratio < 0.05, "stage {k}: {ratio}");
    }
}

#[test]
fn failing_stage_preserves_partial_results() {
    let stages: Vec<Stage> = (0..3)
        .map(|i| Stage { mesh: unit_cube(), prompt: "c".into(), initial_pose: PoseParams::translation(Vec3::new(0.0, i as f64 * 1.5, 0.0)) })
        .collect();
    let mut cfg = small_config();
    cfg.restarts = 1;
    let mut factory = |k: usize, _: &TriMesh<f64>| -> Result<Box<dyn GuidanceProvider<f64>>, HarnessError> {
        if k == 2 {
            Err(HarnessError::Invalid("no scorer for stage 2".into()))
        } else {
            Ok(Box::new(NullProvider))
        }
    };
    let err = compose_iterative(&stages, &cfg, &mut factory).unwrap_err();
    assert_eq!(err.stage, 2);
    assert_eq!(err.partial.stages.len(), 2);
    assert_eq!(err.partial.scene.parts.len(), 2);
    assert!(err.error.to_string().contains("stage 2"));

    let one = compose_iterative(&stages[..1], &cfg, &mut factory).unwrap_err();
    assert_eq!(one.stage, 0);
}
