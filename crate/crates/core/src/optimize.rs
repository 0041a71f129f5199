//! Offline scene reduction (section crop, vertex-clustering decimation) and
//! the staged optimization report: original, reduced and optimized rows.

use crate::framesim::{estimate_frame_time, CostModel};
use crate::geometry::{frustum_from_camera, CameraIntrinsics, CameraPose};
use crate::math::{Aabb, Vec3};
use crate::reduction::{batch_drawset, build_drawset, BatchConfig};
use crate::scene::{scene_stats, MeshAsset, Scene};
use crate::visibility::{bake_occlusion, frustum_cull, BakeConfig, VisibilityError, DEFAULT_CELL_SIZE};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("invalid optimize config: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Visibility(#[from] VisibilityError),
    #[error("report rows must have non-increasing polygon counts ({0})")]
    NotMonotone(String),
    #[error("report needs at least two rows, got {0}")]
    TooFewRows(usize),
    #[error("unknown report format \"{0}\" (expected markdown or csv)")]
    UnknownFormat(String),
}

/// Nodes whose world box touches `region`, with unreferenced meshes and
/// materials dropped. Nodes are kept whole.
pub fn crop_to_section(scene: &Scene, region: &Aabb) -> Scene {
    let mut out = Scene::new(scene.frame_id.clone());
    out.nodes = scene
        .nodes
        .iter()
        .filter(|n| scene.node_world_bounds(n).is_some_and(|b| b.intersects(region)))
        .cloned()
        .collect();
    let meshes: BTreeSet<&str> = out.nodes.iter().flat_map(|n| n.mesh_ids()).collect();
    let materials: BTreeSet<&str> = out.nodes.iter().filter_map(|n| n.material_id.as_deref()).collect();
    out.meshes = scene
        .meshes
        .iter()
        .filter(|(id, _)| meshes.contains(id.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    out.materials = scene
        .materials
        .iter()
        .filter(|(id, _)| materials.contains(id.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecimationStats {
    pub input_triangles: usize,
    pub output_triangles: usize,
    pub degenerate_dropped: usize,
    pub duplicates_dropped: usize,
    pub input_vertices: usize,
    pub output_vertices: usize,
}

impl DecimationStats {
    fn add(&mut self, o: &DecimationStats) {
        self.input_triangles += o.input_triangles;
        self.output_triangles += o.output_triangles;
        self.degenerate_dropped += o.degenerate_dropped;
        self.duplicates_dropped += o.duplicates_dropped;
        self.input_vertices += o.input_vertices;
        self.output_vertices += o.output_vertices;
    }
}

pub fn decimate_mesh(mesh: &MeshAsset, grid_size: f64) -> MeshAsset {
    decimate_mesh_with_stats(mesh, grid_size).0
}

/// Uniform-grid vertex clustering, with the grid anchored at the mesh's
/// local bounds minimum. Vertices in the same grid cell merge into
/// their centroid; triangles that lose a corner or repeat an existing
/// triangle are dropped, as are vertices no longer referenced.
pub fn decimate_mesh_with_stats(mesh: &MeshAsset, grid_size: f64) -> (MeshAsset, DecimationStats) {
    assert!(grid_size > 0.0, "grid size must be positive");
    let origin = mesh.local_bounds.min;
    let cell_of = |p: Vec3| {
        let r = p - origin;
        [
            (r.x / grid_size).floor() as i64,
            (r.y / grid_size).floor() as i64,
            (r.z / grid_size).floor() as i64,
        ]
    };

    // cluster id per referenced vertex, in order of first reference
    let mut cluster_of_cell: HashMap<[i64; 3], usize> = HashMap::new();
    let mut sums: Vec<(Vec3, usize)> = Vec::new();
    let mut vertex_cluster = vec![usize::MAX; mesh.positions.len()];
    for tri in &mesh.triangles {
        for &i in tri {
            let i = i as usize;
            if vertex_cluster[i] != usize::MAX {
                continue;
            }
            let p = mesh.positions[i];
            let c = *cluster_of_cell.entry(cell_of(p)).or_insert_with(|| {
                sums.push((Vec3::ZERO, 0));
                sums.len() - 1
            });
            sums[c].0 += p;
            sums[c].1 += 1;
            vertex_cluster[i] = c;
        }
    }

    let mut stats = DecimationStats {
        input_triangles: mesh.triangles.len(),
        input_vertices: mesh.positions.len(),
        ..Default::default()
    };
    let mut seen: HashSet<[usize; 3]> = HashSet::new();
    let mut kept: Vec<[usize; 3]> = Vec::new();
    for tri in &mesh.triangles {
        let t = tri.map(|i| vertex_cluster[i as usize]);
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            stats.degenerate_dropped += 1;
            continue;
        }
        let mut key = t;
        key.sort_unstable();
        if !seen.insert(key) {
            stats.duplicates_dropped += 1;
            continue;
        }
        kept.push(t);
    }

    // compact to the clusters still referenced
    let mut remap = vec![usize::MAX; sums.len()];
    let mut positions = Vec::new();
    let mut triangles = Vec::with_capacity(kept.len());
    for t in &kept {
        let out = t.map(|c| {
            if remap[c] == usize::MAX {
                remap[c] = positions.len();
                let (sum, count) = sums[c];
                positions.push(sum / count as f64);
            }
            remap[c] as u32
        });
        triangles.push(out);
    }
    stats.output_triangles = triangles.len();
    stats.output_vertices = positions.len();
    (MeshAsset::new(mesh.id.clone(), positions, triangles), stats)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCamera {
    pub pose: CameraPose,
    pub intrinsics: CameraIntrinsics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeConfig {
    pub section: Option<Aabb>,
    pub decimate_grid_size: Option<f64>,
    pub batch: BatchConfig,
    pub reference_camera: ReferenceCamera,
    /// Edge of the occlusion cell baked around the reference camera;
    /// `None` skips occlusion culling.
    pub occlusion_cell_size: Option<f64>,
}

impl OptimizeConfig {
    pub fn new(reference_camera: ReferenceCamera) -> Self {
        Self {
            section: None,
            decimate_grid_size: None,
            batch: BatchConfig::default(),
            reference_camera,
            occlusion_cell_size: Some(DEFAULT_CELL_SIZE),
        }
    }

    fn validate(&self) -> Result<(), OptimizeError> {
        if let Some(g) = self.decimate_grid_size {
            if !(g > 0.0 && g.is_finite()) {
                return Err(OptimizeError::Config("decimate grid size must be positive"));
            }
        }
        if self.section.is_some_and(|s| !s.is_valid()) {
            return Err(OptimizeError::Config("section box is invalid"));
        }
        if !self.reference_camera.intrinsics.is_valid() {
            return Err(OptimizeError::Config("reference camera intrinsics are invalid"));
        }
        if !self.reference_camera.pose.orientation.is_unit() {
            return Err(OptimizeError::Config("reference camera rotation is not unit"));
        }
        if self.batch.max_vertices_per_batch < 3 {
            return Err(OptimizeError::Config("max vertices per batch must be at least 3"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage_name: String,
    pub polygons: usize,
    pub drawcalls: usize,
    pub estimated_fps: Option<f64>,
    pub scene_fingerprint: Option<String>,
}

impl StageReport {
    pub fn new(stage_name: impl Into<String>, polygons: usize, drawcalls: usize) -> Self {
        Self {
            stage_name: stage_name.into(),
            polygons,
            drawcalls,
            estimated_fps: None,
            scene_fingerprint: None,
        }
    }

    fn with_cost(mut self, cm: Option<&CostModel>) -> Self {
        self.estimated_fps = cm.map(|cm| 1.0 / estimate_frame_time(cm, self.drawcalls, self.polygons));
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationReport {
    rows: Vec<StageReport>,
    /// One line per notable event, in stage order.
    pub log: Vec<String>,
}

impl OptimizationReport {
    pub fn new(rows: Vec<StageReport>) -> Result<Self, OptimizeError> {
        if rows.len() < 2 {
            return Err(OptimizeError::TooFewRows(rows.len()));
        }
        for w in rows.windows(2) {
            if w[1].polygons > w[0].polygons {
                return Err(OptimizeError::NotMonotone(format!(
                    "{} {} -> {} {}",
                    w[0].stage_name, w[0].polygons, w[1].stage_name, w[1].polygons
                )));
            }
        }
        Ok(Self { rows, log: Vec::new() })
    }

    pub fn rows(&self) -> &[StageReport] {
        &self.rows
    }

    pub fn stage_log(&self) -> String {
        let mut out = String::new();
        for line in &self.log {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

pub const STAGE_ORIGINAL: &str = "Original";
pub const STAGE_REDUCED: &str = "Reduced";
pub const STAGE_OPTIMIZED: &str = "Optimized";

/// Triangles and drawcalls for one view after frustum, occlusion, LOD and
/// batching.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ViewStats {
    pub frustum_visible: usize,
    pub occlusion_visible: usize,
    pub drawn_items: usize,
    pub triangles: usize,
    pub drawcalls: usize,
    pub batched_groups: usize,
}

pub fn evaluate_view(
    scene: &Scene,
    camera: &ReferenceCamera,
    occlusion_cell_size: Option<f64>,
    batch: &BatchConfig,
) -> Result<ViewStats, VisibilityError> {
    let pose = camera.pose;
    let frustum = frustum_from_camera(&pose, &camera.intrinsics);
    let visible = frustum_cull(scene, &frustum, &pose);
    let frustum_visible = visible.len();
    let visible = match occlusion_cell_size {
        Some(edge) => {
            let cfg = BakeConfig {
                region: Aabb::from_center_half_extents(pose.position, Vec3::splat(edge * 0.5)),
                cell_size: edge,
                min_occluder_volume: 0.0,
            };
            bake_occlusion(scene, &cfg)?.cull(&visible)
        }
        None => visible,
    };
    let items = build_drawset(&visible, scene, &pose, &camera.intrinsics);
    let stats = batch_drawset(&items, batch);
    Ok(ViewStats {
        frustum_visible,
        occlusion_visible: visible.len(),
        drawn_items: items.len(),
        triangles: stats.triangles,
        drawcalls: stats.drawcalls,
        batched_groups: stats.batched_groups,
    })
}

/// Decimates every mesh drawn only by static nodes.
pub fn decimate_static_meshes(scene: &Scene, grid_size: f64) -> (Scene, DecimationStats) {
    let dynamic: HashSet<&str> =
        scene.nodes.iter().filter(|n| !n.is_static).flat_map(|n| n.mesh_ids()).collect();
    let results: Vec<(String, MeshAsset, DecimationStats)> = scene
        .meshes
        .par_iter()
        .filter(|(id, _)| !dynamic.contains(id.as_str()))
        .map(|(id, m)| {
            let (out, stats) = decimate_mesh_with_stats(m, grid_size);
            (id.clone(), out, stats)
        })
        .collect();
    let mut out = scene.clone();
    let mut total = DecimationStats::default();
    for (id, mesh, stats) in results {
        total.add(&stats);
        out.meshes.insert(id, mesh);
    }
    (out, total)
}

/// Runs the staged reduction and reports polygons/drawcalls per stage.
///
/// The original and reduced rows are whole-scene tallies at full detail with
/// one drawcall per geometry node. The optimized row is evaluated at the
/// reference camera through the full view pipeline.
pub fn optimize_scene(
    scene: &Scene,
    cfg: &OptimizeConfig,
    cm: Option<&CostModel>,
) -> Result<(Scene, OptimizationReport), OptimizeError> {
    cfg.validate()?;
    let mut log = Vec::new();
    let mut rows = Vec::new();

    let original = scene_stats(scene);
    let mut row = StageReport::new(STAGE_ORIGINAL, original.triangle_count, original.naive_drawcalls)
        .with_cost(cm);
    row.scene_fingerprint = Some(scene.fingerprint());
    rows.push(row);
    log.push(format!(
        "original: {} nodes, {} triangles, {} naive drawcalls",
        original.node_count, original.triangle_count, original.naive_drawcalls
    ));

    let mut current = scene.clone();
    if let Some(section) = &cfg.section {
        current = crop_to_section(&current, section);
        let stats = scene_stats(&current);
        let mut row =
            StageReport::new(STAGE_REDUCED, stats.triangle_count, stats.naive_drawcalls).with_cost(cm);
        row.scene_fingerprint = Some(current.fingerprint());
        rows.push(row);
        log.push(format!(
            "crop: kept {} of {} nodes, {} triangles",
            stats.node_count, original.node_count, stats.triangle_count
        ));
    }

    if let Some(grid) = cfg.decimate_grid_size {
        let (decimated, d) = decimate_static_meshes(&current, grid);
        current = decimated;
        log.push(format!(
            "decimate: grid {grid} m, triangles {} -> {}, degenerate dropped {}, duplicates dropped {}",
            d.input_triangles, d.output_triangles, d.degenerate_dropped, d.duplicates_dropped
        ));
    }

    let view = evaluate_view(&current, &cfg.reference_camera, cfg.occlusion_cell_size, &cfg.batch)?;
    log.push(format!(
        "view: frustum kept {}, occlusion kept {}, lod kept {}, {} batch groups, {} drawcalls, {} triangles",
        view.frustum_visible,
        view.occlusion_visible,
        view.drawn_items,
        view.batched_groups,
        view.drawcalls,
        view.triangles
    ));
    let mut row = StageReport::new(STAGE_OPTIMIZED, view.triangles, view.drawcalls).with_cost(cm);
    row.scene_fingerprint = Some(current.fingerprint());
    rows.push(row);

    let mut report = OptimizationReport::new(rows)?;
    report.log = log;
    Ok((current, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = OptimizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(OptimizeError::UnknownFormat(other.to_string())),
        }
    }
}

const MISSING: &str = "-";

fn fmt_millions(polygons: usize) -> String {
    format!("{:.3}", polygons as f64 / 1e6)
}

fn fmt_fps(fps: Option<f64>) -> String {
    fps.map_or_else(|| MISSING.to_string(), |f| format!("{f:.1}"))
}

/// Renders the three-metric table with one column per stage.
pub fn emit_report(r: &OptimizationReport, format: ReportFormat) -> Vec<u8> {
    let rows = r.rows();
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            let names: Vec<&str> = rows.iter().map(|s| s.stage_name.as_str()).collect();
            let _ = writeln!(out, "| Metric | {} |", names.join(" | "));
            let _ = writeln!(out, "| --- |{}", " ---: |".repeat(rows.len()));
            let line = |label: &str, cells: Vec<String>| format!("| {label} | {} |\n", cells.join(" | "));
            out += &line("Polygons [million]", rows.iter().map(|s| fmt_millions(s.polygons)).collect());
            out += &line("Drawcalls", rows.iter().map(|s| s.drawcalls.to_string()).collect());
            out += &line("Frames per second (estimated)", rows.iter().map(|s| fmt_fps(s.estimated_fps)).collect());
            out += "\nFrame rates are cost-model estimates, not measurements.\n";
        }
        ReportFormat::Csv => {
            let names: Vec<&str> = rows.iter().map(|s| s.stage_name.as_str()).collect();
            let _ = writeln!(out, "metric,{}", names.join(","));
            let line = |label: &str, cells: Vec<String>| format!("{label},{}\n", cells.join(","));
            out += &line("polygons", rows.iter().map(|s| s.polygons.to_string()).collect());
            out += &line("drawcalls", rows.iter().map(|s| s.drawcalls.to_string()).collect());
            let fps = |s: &StageReport| s.estimated_fps.map_or_else(String::new, |f| format!("{f:.3}"));
            out += &line("fps_estimated", rows.iter().map(fps).collect());
        }
    }
    out.into_bytes()
}
