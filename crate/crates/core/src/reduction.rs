//! LOD selection and static batching. Batching here only counts: items that
//! would be merged into one vertex buffer are tallied as one drawcall per
//! buffer.

use crate::geometry::{screen_coverage, CameraIntrinsics, CameraPose};
use crate::math::Aabb;
use crate::scene::{LodGroup, Scene};
use crate::visibility::VisibleSet;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Largest vertex count addressable with 16-bit indices.
pub const DEFAULT_MAX_VERTICES_PER_BATCH: usize = 65_535;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LodChoice {
    Level(usize),
    Culled,
}

/// Picks the most detailed level whose threshold the projected coverage
/// reaches. Ties go to the finer level.
pub fn select_lod(
    group: &LodGroup,
    node_bounds_world: &Aabb,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> LodChoice {
    let dist = pose.position.distance(node_bounds_world.center());
    let coverage = screen_coverage(node_bounds_world.bounding_radius(), dist, intr);
    lod_for_coverage(group, coverage)
}

pub fn lod_for_coverage(group: &LodGroup, coverage: f64) -> LodChoice {
    if let Some(i) = group.levels.iter().position(|l| coverage >= l.threshold) {
        return LodChoice::Level(i);
    }
    if coverage >= group.cull_below && !group.levels.is_empty() {
        LodChoice::Level(group.levels.len() - 1)
    } else {
        LodChoice::Culled
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawItem {
    pub node_id: String,
    pub mesh_id: String,
    pub material_id: Option<String>,
    pub is_static: bool,
    pub triangles: usize,
    pub vertices: usize,
}

/// One item per visible node after LOD resolution, in node-id order.
pub fn build_drawset(
    vs: &VisibleSet,
    scene: &Scene,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> Vec<DrawItem> {
    let index: BTreeMap<&str, usize> =
        scene.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    vs.node_ids
        .iter()
        .filter_map(|id| {
            let node = &scene.nodes[*index.get(id.as_str())?];
            let mesh_id = match (&node.mesh_id, &node.lod_group) {
                (Some(m), _) => m.as_str(),
                (None, Some(group)) => {
                    let bounds = scene.node_world_bounds(node)?;
                    match select_lod(group, &bounds, pose, intr) {
                        LodChoice::Level(i) => group.levels[i].mesh.as_str(),
                        LodChoice::Culled => return None,
                    }
                }
                (None, None) => return None,
            };
            let mesh = scene.meshes.get(mesh_id)?;
            Some(DrawItem {
                node_id: node.id.clone(),
                mesh_id: mesh.id.clone(),
                material_id: node.material_id.clone(),
                is_static: node.is_static,
                triangles: mesh.triangle_count(),
                vertices: mesh.vertex_count(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub max_vertices_per_batch: usize,
    pub batch_dynamic: bool,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self { max_vertices_per_batch: DEFAULT_MAX_VERTICES_PER_BATCH, batch_dynamic: false }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawStats {
    pub drawcalls: usize,
    pub triangles: usize,
    pub batched_groups: usize,
}

/// Groups batchable items by material and splits each group into
/// `ceil(vertices / cap)` drawcalls (at least one per group). Unbatched items
/// cost one drawcall each. Dynamic items batch among themselves only.
pub fn batch_drawset(items: &[DrawItem], cfg: &BatchConfig) -> DrawStats {
    let cap = cfg.max_vertices_per_batch.max(3);
    let mut groups: BTreeMap<(bool, Option<&str>), usize> = BTreeMap::new();
    let mut stats = DrawStats::default();
    for item in items {
        stats.triangles += item.triangles;
        if item.is_static || cfg.batch_dynamic {
            *groups.entry((item.is_static, item.material_id.as_deref())).or_default() += item.vertices;
        } else {
            stats.drawcalls += 1;
        }
    }
    stats.batched_groups = groups.len();
    stats.drawcalls += groups.values().map(|&v| v.div_ceil(cap).max(1)).sum::<usize>();
    stats
}
