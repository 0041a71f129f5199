use crate::args::{BakeArgs, OptimizeArgs, ScenegenArgs, SimulateArgs};
use crate::{Failure, Outcome};
use serde::Deserialize;
use std::fs;
use std::path::Path;
use std::time::Instant;
use vrscene::citygen::{generate_city_with_ledger, GenConfig};
use vrscene::framesim::{
    apply_verdicts, check_budgets, fit_cost_model, metrics_csv, reference_samples, simulate_path, Budget,
    CameraPath, CostFit, CostModel, CostSample,
};
use vrscene::geometry::{CameraIntrinsics, CameraPose};
use vrscene::optimize::{emit_report, optimize_scene, OptimizeConfig, ReferenceCamera, ReportFormat};
use vrscene::scene::{load_scene, save_scene, scene_stats, world_bounds, Scene};
use vrscene::visibility::{bake_occlusion, BakeConfig, OcclusionBake};
use vrscene::Vec3;

const DEFAULT_FRAME_HZ: f64 = 30.0;
const EYE_HEIGHT: f64 = 1.7;

pub fn data_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

pub fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| data_err(path, e))
}

fn same_file(a: &Path, b: &Path) -> bool {
    a == b || matches!((a.canonicalize(), b.canonicalize()), (Ok(x), Ok(y)) if x == y)
}

/// Writes `bytes` to `path`, refusing to clobber any of `inputs`.
pub fn write_output(path: &Path, bytes: &[u8], inputs: &[&Path]) -> Outcome {
    if inputs.iter().any(|i| same_file(path, i)) {
        return Err(Failure::Usage(format!("{} is also an input; refusing to overwrite it", path.display())));
    }
    fs::write(path, bytes).map_err(|e| data_err(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    serde_json::from_slice(&read_input(path)?).map_err(|e| data_err(path, e))
}

fn read_scene(path: &Path) -> Result<Scene, Failure> {
    load_scene(&read_input(path)?).map_err(|e| data_err(path, e))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CostFile {
    Fit(CostFit),
    Model(CostModel),
}

fn read_cost_model(path: &Path) -> Result<CostModel, Failure> {
    let cm = match read_json::<CostFile>(path)? {
        CostFile::Fit(f) => f.model,
        CostFile::Model(m) => m,
    };
    if !cm.is_valid() {
        return Err(data_err(path, "cost coefficients must be finite and non-negative"));
    }
    Ok(cm)
}

pub fn scenegen(a: ScenegenArgs) -> Outcome {
    let cfg = GenConfig {
        blocks_x: a.blocks.0,
        blocks_y: a.blocks.1,
        buildings_per_block: a.buildings_per_block,
        triangles_per_building: a.triangles,
        material_palette_size: a.palette,
        lod_levels: a.lod_levels,
        street_width: a.street_width,
        block_size: a.block_size,
        seed: a.seed,
    };
    let (scene, ledger) = generate_city_with_ledger(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    write_output(&a.out, &save_scene(&scene), &[])?;
    if let Some(path) = &a.ledger {
        let mut bytes = serde_json::to_vec_pretty(&ledger).expect("ledger serializes");
        bytes.push(b'\n');
        write_output(path, &bytes, &[&a.out])?;
    }
    println!(
        "wrote {}: {} buildings, {} meshes, {} full-detail triangles",
        a.out.display(),
        ledger.buildings,
        ledger.meshes,
        ledger.level0_triangles
    );
    let (lo, hi) = (ledger.city_bounds.min, ledger.city_bounds.max);
    println!("city bounds [{}, {}, {}] .. [{}, {}, {}]", lo.x, lo.y, lo.z, hi.x, hi.y, hi.z);
    println!("fingerprint {}", scene.fingerprint());
    Ok(())
}

pub fn stats(path: &Path) -> Outcome {
    let scene = read_scene(path)?;
    let s = scene_stats(&scene);
    println!("frame       {}", scene.frame_id);
    println!("nodes       {}", s.node_count);
    println!("meshes      {}", s.mesh_count);
    println!("materials   {}", s.material_count);
    println!("triangles   {} (full detail)", s.triangle_count);
    println!("drawcalls   {} (one per geometry node)", s.naive_drawcalls);
    match world_bounds(&scene) {
        Ok(b) => println!(
            "bounds      [{:.3}, {:.3}, {:.3}] .. [{:.3}, {:.3}, {:.3}]",
            b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z
        ),
        Err(e) => println!("bounds      none ({e})"),
    }
    println!("fingerprint {}", scene.fingerprint());
    Ok(())
}

pub fn bake(a: BakeArgs) -> Outcome {
    let scene = read_scene(&a.scene)?;
    let cfg = BakeConfig { region: a.region, cell_size: a.cell_size, min_occluder_volume: a.min_occluder_volume };
    let start = Instant::now();
    let bake = bake_occlusion(&scene, &cfg).map_err(|e| Failure::Data(e.to_string()))?;
    write_output(&a.out, &bake.to_json(), &[&a.scene])?;
    let pvs_total: usize = bake.cells.iter().map(Vec::len).sum();
    println!(
        "baked {} cells ({}x{}x{}) with {} occluders in {:.2} s",
        bake.cell_count(),
        bake.grid_dims[0],
        bake.grid_dims[1],
        bake.grid_dims[2],
        bake.occluders.len(),
        start.elapsed().as_secs_f64()
    );
    println!(
        "mean potentially visible set: {:.1} of {} geometry nodes",
        pvs_total as f64 / bake.cell_count().max(1) as f64,
        scene.geometry_nodes().count()
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn default_camera(scene: &Scene, section: Option<&vrscene::Aabb>) -> Result<ReferenceCamera, Failure> {
    let area = match section {
        Some(s) => *s,
        None => world_bounds(scene).map_err(|e| Failure::Data(e.to_string()))?,
    };
    let c = area.center();
    let eye = Vec3::new(c.x, c.y, area.min.z + EYE_HEIGHT);
    Ok(ReferenceCamera { pose: CameraPose::look_at(eye, eye + Vec3::Y), intrinsics: CameraIntrinsics::default() })
}

pub fn optimize(a: OptimizeArgs) -> Outcome {
    let scene = read_scene(&a.scene)?;
    let camera = match &a.camera {
        Some(p) => read_json::<ReferenceCamera>(p)?,
        None => default_camera(&scene, a.section.as_ref())?,
    };
    let cm = a.cost_model.as_deref().map(read_cost_model).transpose()?;
    let format = match &a.format {
        Some(f) => f.parse::<ReportFormat>().map_err(|e| Failure::Usage(e.to_string()))?,
        None if a.report.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => ReportFormat::Csv,
        None => ReportFormat::Markdown,
    };
    if !(a.occlusion_cell >= 0.0 && a.occlusion_cell.is_finite()) {
        return Err(Failure::Usage("--occlusion-cell must be a non-negative number".into()));
    }

    let mut cfg = OptimizeConfig::new(camera);
    cfg.section = a.section;
    cfg.decimate_grid_size = a.decimate_grid;
    cfg.occlusion_cell_size = (a.occlusion_cell > 0.0).then_some(a.occlusion_cell);
    let (reduced, report) = optimize_scene(&scene, &cfg, cm.as_ref()).map_err(|e| Failure::Data(e.to_string()))?;

    let mut inputs: Vec<&Path> = vec![&a.scene];
    inputs.extend(a.camera.as_deref());
    inputs.extend(a.cost_model.as_deref());
    let rendered = emit_report(&report, format);
    write_output(&a.report, &rendered, &inputs)?;
    if let Some(out) = &a.out_scene {
        write_output(out, &save_scene(&reduced), &inputs)?;
    }
    print!("{}", report.stage_log());
    println!();
    print!("{}", String::from_utf8_lossy(&emit_report(&report, ReportFormat::Markdown)));
    println!("wrote {}", a.report.display());
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Outcome {
    let scene = read_scene(&a.scene)?;
    let bake = match &a.bake {
        Some(p) => Some(OcclusionBake::from_json(&read_input(p)?).map_err(|e| data_err(p, e))?),
        None => None,
    };
    let (path, file_hz) = CameraPath::from_json(&read_input(&a.path)?).map_err(|e| data_err(&a.path, e))?;
    let cm = match &a.cost_model {
        Some(p) => read_cost_model(p)?,
        None => fit_cost_model(&reference_samples()).expect("reference samples fit").model,
    };
    let hz = a.frame_hz.or(file_hz).unwrap_or(DEFAULT_FRAME_HZ);

    let mut frames =
        simulate_path(&scene, bake.as_ref(), &path, &cm, hz).map_err(|e| Failure::Data(e.to_string()))?;

    let checking = a.budget || a.budget_fps.is_some() || a.budget_drawcalls.is_some() || a.budget_polys.is_some();
    let mut verdict = None;
    if checking {
        let mut budget = Budget::default();
        if let Some(f) = a.budget_fps {
            budget.min_fps = f;
        }
        if let Some(d) = a.budget_drawcalls {
            budget.drawcall_range = (budget.drawcall_range.0.min(d), d);
        }
        if let Some(p) = a.budget_polys {
            budget.polygon_range = (budget.polygon_range.0.min(p), p);
        }
        budget.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        let report = check_budgets(&frames, &budget);
        apply_verdicts(&mut frames, &report);
        verdict = Some((budget, report));
    }

    let mut inputs: Vec<&Path> = vec![&a.scene, &a.path];
    inputs.extend(a.bake.as_deref());
    inputs.extend(a.cost_model.as_deref());
    write_output(&a.out, &metrics_csv(&frames), &inputs)?;

    let n = frames.len();
    let mean_ms = frames.iter().map(|f| f.frame_time_secs).sum::<f64>() * 1e3 / n.max(1) as f64;
    let min_fps = frames.iter().map(|f| f.fps).fold(f64::INFINITY, f64::min);
    let max_dc = frames.iter().map(|f| f.drawcalls).max().unwrap_or(0);
    let max_tri = frames.iter().map(|f| f.triangles).max().unwrap_or(0);
    println!("{n} frames at {hz} Hz over {:.3} s", path.duration());
    println!("estimated frame time: mean {mean_ms:.4} ms, lowest fps {min_fps:.1}");
    println!("peak drawcalls {max_dc}, peak triangles {max_tri}");
    println!("wrote {}", a.out.display());

    if let Some((budget, report)) = verdict {
        for w in &report.warnings {
            println!("warning: {w}");
        }
        let failing = report.verdicts.iter().filter(|v| !v.is_empty()).count();
        if let Some(w) = report.worst_frame {
            let f = &frames[w];
            println!("worst frame {} at t={:.3} s: {:.1} fps, {} drawcalls, {} triangles", w, f.time_secs, f.fps, f.drawcalls, f.triangles);
        }
        if !report.pass {
            return Err(Failure::Budget(format!(
                "{failing} of {n} frames violate the budget (min {} fps, max {} drawcalls, max {} polygons)",
                budget.min_fps, budget.drawcall_range.1, budget.polygon_range.1
            )));
        }
        println!("budget: pass");
    }
    Ok(())
}

fn read_samples(path: &Path) -> Result<Vec<CostSample>, Failure> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let bytes = read_input(path)?;
        csv::Reader::from_reader(bytes.as_slice())
            .deserialize()
            .collect::<Result<Vec<CostSample>, _>>()
            .map_err(|e| data_err(path, e))
    } else {
        read_json(path)
    }
}

pub fn fit_cost(samples: &Path, out: &Path) -> Outcome {
    let data = read_samples(samples)?;
    let fit = fit_cost_model(&data).map_err(|e| data_err(samples, e))?;
    let mut bytes = serde_json::to_vec_pretty(&fit).expect("fit serializes");
    bytes.push(b'\n');
    write_output(out, &bytes, &[samples])?;
    let m = &fit.model;
    println!("fixed          {:.6e} s", m.fixed_secs);
    println!("per drawcall   {:.6e} s", m.secs_per_drawcall);
    println!("per triangle   {:.6e} s", m.secs_per_triangle);
    println!("residual sum of squares {:.6e}", fit.residual_sum_squares);
    for w in &fit.warnings {
        println!("warning: {w}");
    }
    println!("wrote {}", out.display());
    Ok(())
}
