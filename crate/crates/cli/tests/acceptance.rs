//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Oracles here are written independently of
//! the library code they check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::panic;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};
use vrscene::bridge::{decode_frame, encode_frame, serve, BridgeClient, Frame, InterpBuffer, VehicleStateMsg};
use vrscene::citygen::{generate_city_with_ledger, GenConfig};
use vrscene::framesim::{
    check_budgets, estimate_frame_time, fit_cost_model, reference_samples, Budget, BudgetViolation, CostModel,
    CostSample, FrameMetrics,
};
use vrscene::geometry::{frustum_from_camera, CameraIntrinsics, CameraPose};
use vrscene::optimize::{emit_report, optimize_scene, OptimizeConfig, ReferenceCamera, ReportFormat};
use vrscene::reduction::{batch_drawset, BatchConfig, DrawItem, DEFAULT_MAX_VERTICES_PER_BATCH};
use vrscene::scene::{scene_stats, MeshAsset, Scene, SceneNode};
use vrscene::visibility::{bake_occlusion, frustum_cull, is_fully_occluded, BakeConfig};
use vrscene::{Aabb, Quat, Transform, Vec3};

const BIN: &str = env!("CARGO_BIN_EXE_vrscene");

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("frustum-cull soundness", frustum_soundness),
        ("occlusion conservativeness", occlusion_conservativeness),
        ("batching oracle", batching_oracle),
        ("staged reduction on the seeded city", staged_reduction),
        ("cost-model calibration", cost_calibration),
        ("budget verdicts on the reference rows", budget_verdicts),
        ("bridge correctness", bridge_correctness),
        ("dead-reckoning exactness", dead_reckoning),
        ("determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.1} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---- shared oracle helpers ----

fn rotate(q: Quat, v: Vec3) -> Vec3 {
    // v + 2w(u x v) + 2 u x (u x v)
    let u = Vec3::new(q.x, q.y, q.z);
    let t = u.cross(v) * 2.0;
    v + t * q.w + u.cross(t)
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Quat {
    loop {
        let q = Quat::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 0.1 && n <= 1.0 {
            return Quat::new(q.w / n, q.x / n, q.y / n, q.z / n);
        }
    }
}

fn random_vec(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec3 {
    Vec3::new(rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi))
}

fn random_box(rng: &mut ChaCha8Rng, center: Vec3, half_lo: Vec3, half_hi: Vec3) -> Aabb {
    let h = Vec3::new(
        rng.random_range(half_lo.x..half_hi.x),
        rng.random_range(half_lo.y..half_hi.y),
        rng.random_range(half_lo.z..half_hi.z),
    );
    Aabb::new(center - h, center + h)
}

/// Closed segment against closed box, by parametric clipping.
fn segment_hits_box(a: Vec3, b: Vec3, bx: &Aabb) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for axis in 0..3 {
        let (p, d) = (a[axis], b[axis] - a[axis]);
        let (lo, hi) = (bx.min[axis], bx.max[axis]);
        if d == 0.0 {
            if p < lo || p > hi {
                return false;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo - p) / d, (hi - p) / d);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// 32 points of a box: its 8 corners and 24 random points, half of them
/// pushed onto a face.
fn box_samples(rng: &mut ChaCha8Rng, b: &Aabb) -> Vec<Vec3> {
    let mut pts: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 != 0 { b.max.x } else { b.min.x },
                if i & 2 != 0 { b.max.y } else { b.min.y },
                if i & 4 != 0 { b.max.z } else { b.min.z },
            )
        })
        .collect();
    for k in 0..24 {
        let mut c = [0.0; 3];
        for (axis, v) in c.iter_mut().enumerate() {
            *v = b.min[axis] + rng.random::<f64>() * (b.max[axis] - b.min[axis]);
        }
        if k % 2 == 0 {
            let axis = rng.random_range(0..3);
            c[axis] = if rng.random::<bool>() { b.max[axis] } else { b.min[axis] };
        }
        pts.push(Vec3::new(c[0], c[1], c[2]));
    }
    pts
}

/// Number of cell-to-object sample segments that miss every blocker.
fn unblocked_rays(rng: &mut ChaCha8Rng, cell: &Aabb, object: &Aabb, blockers: &[Aabb]) -> usize {
    let hull = cell.union(object);
    let relevant: Vec<&Aabb> = blockers.iter().filter(|b| b.intersects(&hull)).collect();
    let from = box_samples(rng, cell);
    let to = box_samples(rng, object);
    let mut open = 0;
    for &a in &from {
        for &b in &to {
            if !relevant.iter().any(|bx| segment_hits_box(a, b, bx)) {
                open += 1;
            }
        }
    }
    open
}

// ---- 1 ----

fn frustum_soundness() -> Check {
    const CASES: usize = 1000;
    const N: usize = 16;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let (mut culled, mut kept, mut with_inside, mut unsound) = (0usize, 0usize, 0usize, 0usize);
    for _ in 0..CASES {
        let pose = CameraPose { position: random_vec(&mut rng, -20.0, 20.0), orientation: random_rotation(&mut rng) };
        let intr = CameraIntrinsics {
            vertical_fov: rng.random_range(0.3..2.2),
            aspect: rng.random_range(0.5..2.5),
            near: rng.random_range(0.05..1.0),
            far: rng.random_range(20.0..150.0),
            viewport_height: 1080,
        };
        let mut scene = Scene::new("map");
        for k in 0..8 {
            let id = format!("m{k}");
            scene.add_mesh(MeshAsset::cuboid(id.clone(), random_vec(&mut rng, 0.2, 6.0)));
            let t = Transform {
                translation: pose.position + random_vec(&mut rng, -90.0, 90.0),
                rotation: random_rotation(&mut rng),
                scale: random_vec(&mut rng, 0.5, 2.0),
            };
            scene.nodes.push(SceneNode::with_mesh(format!("n{k}"), id, t));
        }
        let visible = frustum_cull(&scene, &frustum_from_camera(&pose, &intr), &pose);

        let tan_y = (intr.vertical_fov * 0.5).tan();
        let tan_x = tan_y * intr.aspect;
        let inv = Quat::new(pose.orientation.w, -pose.orientation.x, -pose.orientation.y, -pose.orientation.z);
        for node in &scene.nodes {
            let mesh = &scene.meshes[node.mesh_id.as_deref().unwrap()];
            let (lo, hi) = (mesh.local_bounds.min, mesh.local_bounds.max);
            let t = &node.transform;
            let mut inside = false;
            'search: for i in 0..N {
                for j in 0..N {
                    for k in 0..N {
                        let f = |a: f64, b: f64, s: usize| a + (b - a) * s as f64 / (N - 1) as f64;
                        let local = Vec3::new(f(lo.x, hi.x, i), f(lo.y, hi.y, j), f(lo.z, hi.z, k));
                        let world = rotate(t.rotation, local.mul_elem(t.scale)) + t.translation;
                        let c = rotate(inv, world - pose.position);
                        let depth = -c.z;
                        if depth >= intr.near
                            && depth <= intr.far
                            && c.y.abs() <= depth * tan_y
                            && c.x.abs() <= depth * tan_x
                        {
                            inside = true;
                            break 'search;
                        }
                    }
                }
            }
            with_inside += usize::from(inside);
            if visible.contains(&node.id) {
                kept += 1;
            } else {
                culled += 1;
                unsound += usize::from(inside);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(unsound == 0, "{unsound} culled nodes had sampled points inside the frustum");
    ensure!(culled > 0 && with_inside > 0, "vacuous run: culled {culled}, with inside samples {with_inside}");
    ensure!(secs < 30.0, "took {secs:.1} s, limit 30 s");
    Ok(format!("{CASES} cases, {} nodes, {culled} culled, {kept} kept, 0 unsound", culled + kept))
}

// ---- 2 ----

fn occlusion_conservativeness() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);

    // random triples, mirrored and axis-permuted so every direction is covered
    const TRIPLES: usize = 1000;
    let mut culled = 0;
    for _ in 0..TRIPLES {
        let cell_center = random_vec(&mut rng, -2.0, 2.0);
        let cell = random_box(&mut rng, cell_center, Vec3::splat(0.5), Vec3::splat(5.0));
        let occ_center = Vec3::new(rng.random_range(8.0..20.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let occluder = random_box(&mut rng, occ_center, Vec3::new(0.2, 2.0, 2.0), Vec3::new(2.0, 25.0, 25.0));
        let obj_center = Vec3::new(rng.random_range(25.0..60.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let object = random_box(&mut rng, obj_center, Vec3::splat(0.2), Vec3::splat(4.0));
        let perm = match rng.random_range(0..3) {
            0 => [0, 1, 2],
            1 => [1, 2, 0],
            _ => [2, 0, 1],
        };
        let sign = if rng.random::<bool>() { -1.0 } else { 1.0 };
        let map = |b: &Aabb| {
            let p = |v: Vec3| {
                let a = [v.x, v.y, v.z];
                Vec3::new(a[perm[0]], a[perm[1]], a[perm[2]]) * sign
            };
            Aabb::from_points([p(b.min), p(b.max)]).unwrap()
        };
        let (cell, occluder, object) = (map(&cell), map(&occluder), map(&object));
        if is_fully_occluded(&cell, &object, &occluder) {
            culled += 1;
            let open = unblocked_rays(&mut rng, &cell, &object, std::slice::from_ref(&occluder));
            ensure!(open == 0, "culled triple has {open} unblocked rays: {cell:?} {object:?} {occluder:?}");
        }
    }
    ensure!(culled >= 50, "only {culled} random triples were culled");

    // baked city cells
    let cfg = GenConfig { blocks_x: 4, blocks_y: 4, triangles_per_building: (100, 300), ..GenConfig::default() };
    let (city, ledger) = generate_city_with_ledger(&cfg).map_err(|e| e.to_string())?;
    let region = Aabb::new(Vec3::ZERO, Vec3::new(ledger.street_x(4), ledger.street_y(4), 10.0));
    let bake = bake_occlusion(&city, &BakeConfig { region, cell_size: 20.0, min_occluder_volume: 0.0 })
        .map_err(|e| e.to_string())?;
    let boxes: HashMap<&str, Aabb> =
        city.nodes.iter().map(|n| (n.id.as_str(), city.node_world_bounds(n).unwrap())).collect();
    let step = bake.cell_count() / 50;
    let mut city_pairs = 0;
    for c in 0..50 {
        let index = c * step;
        let cell = bake.cell_bounds(index);
        let pvs = bake.pvs(index);
        for node in &city.nodes {
            if pvs.binary_search(&node.id).is_ok() {
                continue;
            }
            city_pairs += 1;
            let blockers: Vec<Aabb> = city
                .nodes
                .iter()
                .filter(|o| o.id != node.id && o.is_occluder && o.is_static)
                .map(|o| boxes[o.id.as_str()])
                .collect();
            let open = unblocked_rays(&mut rng, &cell, &boxes[node.id.as_str()], &blockers);
            ensure!(open == 0, "cell {index} culls {} with {open} unblocked rays", node.id);
        }
    }
    ensure!(city_pairs > 0, "no city pair was culled");

    // hand-built wall: must cull what hides behind it
    let mut wall = Scene::new("map");
    wall.add_mesh(MeshAsset::unit_box("box"));
    let place = |id: &str, center: Vec3, half: Vec3, occluder: bool| {
        let mut n = SceneNode::with_mesh(
            id,
            "box",
            Transform { translation: center, rotation: Quat::IDENTITY, scale: half * 2.0 },
        );
        n.is_occluder = occluder;
        n
    };
    wall.nodes.push(place("wall", Vec3::new(10.0, 0.0, 5.0), Vec3::new(0.5, 30.0, 5.0), true));
    wall.nodes.push(place("hidden", Vec3::new(20.0, 0.0, 1.5), Vec3::splat(1.5), false));
    wall.nodes.push(place("beside", Vec3::new(20.0, 45.0, 1.5), Vec3::splat(1.5), false));
    let fixture = bake_occlusion(
        &wall,
        &BakeConfig {
            region: Aabb::new(Vec3::new(-5.0, -5.0, 0.0), Vec3::new(5.0, 5.0, 4.0)),
            cell_size: 10.0,
            min_occluder_volume: 0.0,
        },
    )
    .map_err(|e| e.to_string())?;
    let pvs = fixture.pvs(0);
    ensure!(!pvs.iter().any(|id| id == "hidden"), "wall fixture kept the hidden box: {pvs:?}");
    ensure!(pvs.iter().any(|id| id == "beside") && pvs.iter().any(|id| id == "wall"), "wall fixture lost a visible node: {pvs:?}");

    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s, limit 60 s");
    Ok(format!(
        "{culled} of {TRIPLES} random triples culled, {city_pairs} culled pairs over 50 city cells, all with 0 of 1024 rays open; wall fixture culls as expected"
    ))
}

// ---- 3 ----

fn oracle_drawcalls(items: &[DrawItem], cap: usize) -> usize {
    let mut per_material: HashMap<Option<&str>, usize> = HashMap::new();
    let mut calls = 0;
    for it in items {
        if it.is_static {
            *per_material.entry(it.material_id.as_deref()).or_insert(0) += it.vertices;
        } else {
            calls += 1;
        }
    }
    calls + per_material.values().map(|&v| v.div_ceil(cap).max(1)).sum::<usize>()
}

fn batching_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let materials = [None, Some("brick"), Some("glass"), Some("roof"), Some("steel")];
    for case in 0..500 {
        let n = rng.random_range(0..60);
        let items: Vec<DrawItem> = (0..n)
            .map(|k| {
                let vertices = rng.random_range(1..40_000);
                DrawItem {
                    node_id: format!("n{k}"),
                    mesh_id: format!("m{k}"),
                    material_id: materials[rng.random_range(0..materials.len())].map(str::to_string),
                    is_static: rng.random_bool(0.7),
                    triangles: vertices / 2 + 1,
                    vertices,
                }
            })
            .collect();
        let cap = if case % 2 == 0 { DEFAULT_MAX_VERTICES_PER_BATCH } else { rng.random_range(100..100_000) };
        let stats = batch_drawset(&items, &BatchConfig { max_vertices_per_batch: cap, batch_dynamic: false });
        let expect = oracle_drawcalls(&items, cap);
        ensure!(stats.drawcalls == expect, "case {case}: {} drawcalls, oracle {expect}", stats.drawcalls);
        let tris: usize = items.iter().map(|i| i.triangles).sum();
        ensure!(stats.triangles == tris, "case {case}: triangle total {} != {tris}", stats.triangles);
    }

    let cap = DEFAULT_MAX_VERTICES_PER_BATCH;
    let mut totals = vec![1, 3, cap - 1, cap, cap + 1, 2 * cap, 2 * cap + 1, 5 * cap];
    totals.extend((0..40).map(|_| rng.random_range(1..400_000)));
    for total in totals {
        let mut left = total;
        let mut items = Vec::new();
        while left > 0 {
            let v = rng.random_range(1..=left.min(20_000));
            left -= v;
            items.push(DrawItem {
                node_id: String::new(),
                mesh_id: String::new(),
                material_id: Some("brick".into()),
                is_static: true,
                triangles: v,
                vertices: v,
            });
        }
        let calls = batch_drawset(&items, &BatchConfig::default()).drawcalls;
        ensure!(calls == total.div_ceil(cap), "single material, {total} vertices: {calls} drawcalls");
    }
    Ok("500 random draw sets match the group/ceil oracle; single-material static sets use ceil(vertices / 65535) drawcalls".into())
}

// ---- 4 ----

fn report_row(md: &str, label: &str) -> Result<Vec<f64>, String> {
    let line = md
        .lines()
        .find(|l| l.starts_with(&format!("| {label} |")))
        .ok_or(format!("report has no {label} row"))?;
    line.trim_matches('|')
        .split('|')
        .skip(1)
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("{label}: {c:?}: {e}")))
        .collect()
}

fn staged_reduction() -> Check {
    let start = Instant::now();
    let (scene, ledger) = generate_city_with_ledger(&GenConfig::default()).map_err(|e| e.to_string())?;
    let stats = scene_stats(&scene);
    ensure!(
        (1_000_000..=5_000_000).contains(&stats.triangle_count),
        "city has {} triangles, expected 1-5 M",
        stats.triangle_count
    );
    let eye = Vec3::new(ledger.street_x(5), ledger.street_y(3) + 5.0, 1.7);
    let mut cfg = OptimizeConfig::new(ReferenceCamera {
        pose: CameraPose::look_at(eye, eye + Vec3::Y),
        intrinsics: CameraIntrinsics::default(),
    });
    cfg.section = Some(ledger.block_region(3, 7, 3, 7));
    let cm = fit_cost_model(&reference_samples()).map_err(|e| e.to_string())?.model;
    let (_, report) = optimize_scene(&scene, &cfg, Some(&cm)).map_err(|e| e.to_string())?;

    let md = String::from_utf8(emit_report(&report, ReportFormat::Markdown)).map_err(|e| e.to_string())?;
    let polys = report_row(&md, "Polygons [million]")?;
    let calls = report_row(&md, "Drawcalls")?;
    ensure!(polys.len() == 3 && calls.len() == 3, "report does not have three stage columns:\n{md}");
    ensure!(polys.windows(2).all(|w| w[1] < w[0]), "polygons not strictly decreasing: {polys:?}");
    ensure!(calls.windows(2).all(|w| w[1] < w[0]), "drawcalls not strictly decreasing: {calls:?}");

    let csv = String::from_utf8(emit_report(&report, ReportFormat::Csv)).map_err(|e| e.to_string())?;
    let exact: Vec<f64> = csv
        .lines()
        .find(|l| l.starts_with("polygons,"))
        .ok_or("csv report has no polygons row")?
        .split(',')
        .skip(1)
        .map(|c| c.parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let factor = exact[0] / exact[1];
    ensure!((5.0..=8.0).contains(&factor), "crop reduced polygons by {factor:.2}x, expected 5-8x");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.1} s, limit 120 s");
    Ok(format!(
        "polygons {} > {} > {}, drawcalls {} > {} > {}, crop factor {factor:.2}",
        exact[0], exact[1], exact[2], calls[0], calls[1], calls[2]
    ))
}

// ---- 5 ----

/// Projected coordinate descent on unit-scaled columns; converges to the
/// non-negative least-squares optimum of this small convex problem.
fn nnls_oracle(samples: &[CostSample]) -> ([f64; 3], f64) {
    let cols: [Vec<f64>; 3] = [
        samples.iter().map(|_| 1.0).collect(),
        samples.iter().map(|s| s.drawcalls).collect(),
        samples.iter().map(|s| s.triangles).collect(),
    ];
    let b: Vec<f64> = samples.iter().map(|s| s.frame_time_secs).collect();
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut y = [0.0f64; 3];
    let mut r = b.clone();
    for _ in 0..2_000_000 {
        let mut moved = 0.0f64;
        for j in 0..3 {
            if norms[j] == 0.0 {
                continue;
            }
            let g: f64 = cols[j].iter().zip(&r).map(|(c, ri)| c / norms[j] * ri).sum();
            let next = (y[j] + g).max(0.0);
            let d = next - y[j];
            if d != 0.0 {
                for (ri, c) in r.iter_mut().zip(&cols[j]) {
                    *ri -= d * c / norms[j];
                }
                y[j] = next;
                moved = moved.max(d.abs());
            }
        }
        if moved < 1e-18 {
            break;
        }
    }
    let x = [0, 1, 2].map(|j| if norms[j] == 0.0 { 0.0 } else { y[j] / norms[j] });
    let rss = samples
        .iter()
        .map(|s| {
            let e = s.frame_time_secs - (x[0] + x[1] * s.drawcalls + x[2] * s.triangles);
            e * e
        })
        .sum();
    (x, rss)
}

fn cost_calibration() -> Check {
    let samples = reference_samples();
    let fit = fit_cost_model(&samples).map_err(|e| e.to_string())?;
    let m = fit.model;
    let coeffs = [m.fixed_secs, m.secs_per_drawcall, m.secs_per_triangle];
    ensure!(coeffs.iter().all(|c| *c >= 0.0 && c.is_finite()), "negative or non-finite coefficient: {coeffs:?}");
    let t: Vec<f64> =
        samples.iter().map(|s| estimate_frame_time(&m, s.drawcalls as usize, s.triangles as usize)).collect();
    ensure!(t[0] > t[1] && t[1] > t[2], "predicted frame times lose the order: {t:?}");

    let (oracle, oracle_rss) = nnls_oracle(&samples);
    let rss = fit.residual_sum_squares;
    ensure!(rss <= oracle_rss * (1.0 + 1e-9) + 1e-30, "fit residual {rss:e} exceeds oracle optimum {oracle_rss:e}");
    ensure!(oracle_rss <= rss * (1.0 + 1e-6) + 1e-30, "oracle {oracle_rss:e} did not reach fit residual {rss:e}");

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let mut worst = 0.0f64;
    for trial in 0..200 {
        let truth = CostModel {
            fixed_secs: rng.random_range(1e-3..2e-2),
            secs_per_drawcall: rng.random_range(1e-7..1e-5),
            secs_per_triangle: rng.random_range(1e-10..1e-8),
        };
        let synthetic: Vec<CostSample> = (0..rng.random_range(6..12))
            .map(|_| {
                let (d, tri) = (rng.random_range(0..400_000), rng.random_range(0..60_000_000));
                CostSample {
                    drawcalls: d as f64,
                    triangles: tri as f64,
                    frame_time_secs: estimate_frame_time(&truth, d, tri),
                }
            })
            .collect();
        let got = fit_cost_model(&synthetic).map_err(|e| e.to_string())?.model;
        for (g, w) in [
            (got.fixed_secs, truth.fixed_secs),
            (got.secs_per_drawcall, truth.secs_per_drawcall),
            (got.secs_per_triangle, truth.secs_per_triangle),
        ] {
            let rel = ((g - w) / w).abs();
            worst = worst.max(rel);
            ensure!(rel <= 1e-9, "trial {trial}: coefficient {g:e} vs {w:e} (relative error {rel:e})");
        }
    }
    Ok(format!(
        "reference fit [{:.4e}, {:.4e}, {:.4e}] predicts {:.1} / {:.1} / {:.1} fps, matches oracle [{:.4e}, {:.4e}, {:.4e}]; synthetic recovery worst relative error {worst:.1e}",
        coeffs[0], coeffs[1], coeffs[2], 1.0 / t[0], 1.0 / t[1], 1.0 / t[2], oracle[0], oracle[1], oracle[2]
    ))
}

// ---- 6 ----

fn budget_verdicts() -> Check {
    let b = Budget::default();
    let frame = |i: usize, fps: f64, drawcalls: usize, triangles: usize| FrameMetrics {
        frame_index: i,
        time_secs: i as f64,
        pose: CameraPose { position: Vec3::ZERO, orientation: Quat::IDENTITY },
        visible_nodes: 0,
        triangles,
        drawcalls,
        frame_time_secs: 1.0 / fps,
        fps,
        budget_violations: Vec::new(),
    };
    let original = frame(0, 1.8, 342_324, 53_100_000);
    let optimized = frame(1, 116.5, 4_335, 1_300_000);
    let report = check_budgets(&[original, optimized], &b);
    let (v_orig, v_opt) = (&report.verdicts[0], &report.verdicts[1]);
    ensure!(v_orig.contains(&BudgetViolation::LowFps), "original row not flagged for fps: {v_orig:?}");
    ensure!(!v_opt.contains(&BudgetViolation::LowFps), "optimized row wrongly flagged for fps: {v_opt:?}");
    ensure!(v_opt.contains(&BudgetViolation::TooManyDrawcalls), "optimized row passes the drawcall target: {v_opt:?}");
    ensure!(!report.pass && report.worst_frame == Some(0), "summary should fail with the original row as worst");
    let names = |v: &[BudgetViolation]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join("+");
    Ok(format!("original violates {}, optimized violates {}", names(v_orig), names(v_opt)))
}

// ---- 7 ----

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const POOL: [&str; 12] = ["a", "Z", "/", "_", " ", "\"", "\\", "\n", "\t", "é", "漢", "🚗"];
    (0..rng.random_range(0..16)).map(|_| POOL[rng.random_range(0..POOL.len())]).collect()
}

fn random_f64(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..8) {
        0 => 0.0,
        1 => -0.0,
        2 => f64::MAX * if rng.random::<bool>() { 1.0 } else { -1.0 },
        3 => 5e-324,
        4 => rng.random_range(-1e300..1e300),
        5 => rng.random_range(-1e-300..1e-300),
        6 => rng.random_range(-1e6f64..1e6).round(),
        _ => f64::from_bits(rng.random::<u64>() & !(0x7ff << 52)) * if rng.random::<bool>() { 1.0 } else { -1.0 },
    }
}

fn random_frame(rng: &mut ChaCha8Rng) -> Frame {
    match rng.random_range(0..7) {
        0 => Frame::Advertise { topic: random_text(rng), msg_type: random_text(rng) },
        1 => Frame::Subscribe { topic: random_text(rng) },
        2 => Frame::Unsubscribe { topic: random_text(rng) },
        3 => Frame::Ping { t: random_f64(rng) },
        4 => Frame::Pong { t: random_f64(rng), server_t: random_f64(rng) },
        5 => Frame::Error { reason: random_text(rng) },
        _ => {
            let mut v = || Vec3::new(random_f64(rng), random_f64(rng), random_f64(rng));
            let (position, linear_vel, angular_vel) = (v(), v(), v());
            Frame::Publish {
                topic: random_text(rng),
                msg: VehicleStateMsg {
                    seq: rng.random(),
                    stamp: random_f64(rng),
                    frame_id: random_text(rng),
                    position,
                    rotation: random_rotation(rng),
                    linear_vel,
                    angular_vel,
                },
            }
        }
    }
}

fn bridge_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    const MESSAGES: usize = 10_000;
    for i in 0..MESSAGES {
        let f = random_frame(&mut rng);
        let bytes = encode_frame(&f).map_err(|e| e.to_string())?;
        ensure!(
            bytes.last() == Some(&b'\n') && bytes.iter().filter(|&&b| b == b'\n').count() == 1,
            "message {i} is not a single line"
        );
        let back = decode_frame(&bytes).map_err(|e| format!("message {i}: {e}"))?;
        ensure!(back == f, "message {i} changed in transit: {f:?} -> {back:?}");
    }

    // FIFO: 2 publishers x 2 subscribers x 1000 messages
    const N: u64 = 1000;
    let relay = serve("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = relay.local_addr();
    let mut subs = Vec::new();
    for _ in 0..2 {
        let mut c = BridgeClient::connect(addr).map_err(|e| e.to_string())?;
        c.subscribe("/ego").map_err(|e| e.to_string())?;
        c.set_read_timeout(Some(Duration::from_secs(20))).map_err(|e| e.to_string())?;
        subs.push(c);
    }
    let publishers: Vec<_> = (0..2)
        .map(|k| {
            thread::spawn(move || -> Result<(), String> {
                let mut c = BridgeClient::connect(addr).map_err(|e| e.to_string())?;
                for seq in 0..N {
                    let msg = VehicleStateMsg {
                        seq,
                        stamp: seq as f64,
                        frame_id: format!("pub{k}"),
                        position: Vec3::ZERO,
                        rotation: Quat::IDENTITY,
                        linear_vel: Vec3::ZERO,
                        angular_vel: Vec3::ZERO,
                    };
                    c.publish("/ego", &msg).map_err(|e| e.to_string())?;
                }
                c.sync().map(|_| ()).map_err(|e| e.to_string())
            })
        })
        .collect();
    let readers: Vec<_> = subs
        .into_iter()
        .map(|mut c| {
            thread::spawn(move || -> Result<(), String> {
                let mut next: HashMap<String, u64> = HashMap::new();
                for _ in 0..2 * N {
                    let (_, msg) = c.recv_state().map_err(|e| e.to_string())?.ok_or("relay closed early")?;
                    let expect = next.entry(msg.frame_id.clone()).or_insert(0);
                    if msg.seq != *expect {
                        return Err(format!("{} delivered seq {} where {} was due", msg.frame_id, msg.seq, expect));
                    }
                    *expect += 1;
                }
                Ok(())
            })
        })
        .collect();
    for p in publishers {
        p.join().map_err(|_| "publisher panicked")??;
    }
    for r in readers {
        r.join().map_err(|_| "subscriber panicked")??;
    }
    relay.shutdown();

    // loopback through the command-line tools
    let mut server = Command::new(BIN)
        .args(["bridge", "serve", "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut line = String::new();
    BufReader::new(server.stdout.take().ok_or("no stdout")?).read_line(&mut line).map_err(|e| e.to_string())?;
    let relay_addr = line.trim().strip_prefix("listening on ").map(str::to_string);
    let out = relay_addr.as_ref().map(|a| {
        Command::new(BIN).args(["bridge", "measure", "--addr", a, "-n", "1000", "--budget-ms", "100"]).output()
    });
    let _ = server.kill();
    let _ = server.wait();
    let out = out.ok_or(format!("unexpected serve banner {line:?}"))?.map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    let latency = |key: &str| {
        stdout.lines().find(|l| l.starts_with(key)).map(|l| l.split_whitespace().nth(1).unwrap_or("?").to_string())
    };
    ensure!(out.status.code() == Some(0) && stdout.contains("cycle time: pass"), "measure failed: {stdout}");
    Ok(format!(
        "{MESSAGES} random frames round-trip exactly; 2x2x{N} relay kept per-publisher order; loopback p50 {} ms, p95 {} ms, max {} ms, pass",
        latency("p50").unwrap_or_default(),
        latency("p95").unwrap_or_default(),
        latency("max").unwrap_or_default()
    ))
}

// ---- 8 ----

fn dead_reckoning() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0008);
    let (mut worst_interp, mut worst_extrap) = (0.0f64, 0.0f64);
    for stream in 0..500 {
        let p0 = random_vec(&mut rng, -1000.0, 1000.0);
        let v = random_vec(&mut rng, -40.0, 40.0);
        let t0 = rng.random_range(0.0..1000.0);
        let truth = |t: f64| p0 + v * (t - t0);
        let mut buf = InterpBuffer::new(16);
        let mut t = t0;
        for seq in 0..10 {
            buf.push(VehicleStateMsg {
                seq,
                stamp: t,
                frame_id: "map".into(),
                position: truth(t),
                rotation: Quat::IDENTITY,
                linear_vel: v,
                angular_vel: Vec3::ZERO,
            });
            t += rng.random_range(0.01..0.2);
        }
        let last = buf.samples().last().unwrap().stamp;
        for _ in 0..20 {
            let q = rng.random_range(t0..last);
            let err = buf.pose_at(q).map_err(|e| e.to_string())?.position.distance(truth(q));
            worst_interp = worst_interp.max(err);
        }
        for k in 0..=10 {
            let q = last + 0.2 * k as f64 / 10.0;
            let err = buf.pose_at(q).map_err(|e| e.to_string())?.position.distance(truth(q));
            worst_extrap = worst_extrap.max(err);
        }
        let held = buf.pose_at(last + 5.0).map_err(|e| e.to_string())?.position;
        ensure!(held.distance(truth(last + 0.2)) <= 1e-9, "stream {stream}: pose past the cap is not held at the cap");
    }
    ensure!(worst_interp <= 1e-9, "interpolation error {worst_interp:e} m");
    ensure!(worst_extrap <= 1e-9, "extrapolation error {worst_extrap:e} m");
    Ok(format!("500 streams: interpolation error {worst_interp:.1e} m, extrapolation error {worst_extrap:.1e} m"))
}

// ---- 9 ----

const PATH_JSON: &str = r#"{"frame_hz": 20, "intrinsics": {"vertical_fov": 1.0471975511965976, "aspect": 1.7777777777777777, "near": 0.1, "far": 1000.0, "viewport_height": 1080},
 "waypoints": [{"t": 0.0, "position": [160, 5, 1.7], "rotation": [0.7071067811865476, 0.7071067811865476, 0, 0]},
               {"t": 2.0, "position": [160, 300, 1.7], "rotation": [0.7071067811865476, 0.7071067811865476, 0, 0]},
               {"t": 3.0, "position": [240, 300, 1.7], "rotation": [0.5, 0.5, 0.5, 0.5]}]}"#;

fn pipeline_run(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    fs::write(dir.join("street.path.json"), PATH_JSON).map_err(|e| e.to_string())?;
    let steps: [&[&str]; 6] = [
        &["scenegen", "--seed", "7", "--blocks", "4x4", "--triangles", "200..800", "--out", "city.scene.json"],
        &["bake", "--scene", "city.scene.json", "--region", "0,0,0,320,320,10", "--cell-size", "20", "--out", "city.bake.json"],
        &["optimize", "--scene", "city.scene.json", "--section", "80,80,0,240,240,60", "--decimate-grid", "2", "--report", "report.md", "--out-scene", "reduced.scene.json"],
        &["optimize", "--scene", "city.scene.json", "--section", "80,80,0,240,240,60", "--report", "report.csv"],
        &["simulate", "--scene", "city.scene.json", "--bake", "city.bake.json", "--path", "street.path.json", "--out", "metrics.csv"],
        &["simulate", "--scene", "city.scene.json", "--path", "street.path.json", "--out", "metrics_nobake.csv"],
    ];
    for args in steps {
        let o = Command::new(BIN).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
        ensure!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    }
    let files = [
        "city.scene.json",
        "city.bake.json",
        "report.md",
        "reduced.scene.json",
        "report.csv",
        "metrics.csv",
        "metrics_nobake.csv",
    ];
    files
        .iter()
        .map(|f| fs::read(dir.join(f)).map(|b| (f.to_string(), b)).map_err(|e| format!("{f}: {e}")))
        .collect()
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline_run(a.path())?;
    let second = pipeline_run(b.path())?;
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        ensure!(x == y, "{name} differs between runs");
    }
    let bytes: usize = first.iter().map(|(_, x)| x.len()).sum();
    Ok(format!("{} output files ({bytes} bytes) byte-identical across two runs", first.len()))
}
