//! Runtime frustum culling, offline occlusion baking into a grid of viewer
//! cells, and runtime occlusion culling against the baked PVS.
//!
//! A node is dropped from a cell's PVS only when a single occluder box hides
//! it from every point of the cell. The test joins each of the 8 cell corners
//! to each of the 8 object corners; the set of blocked segments is convex in
//! both endpoints for a convex occluder, so 64 blocked corner segments imply
//! every segment between the two boxes is blocked.

use crate::geometry::{classify_aabb_frustum, segment_intersects_aabb, CameraPose, Containment, Frustum};
use crate::math::{Aabb, Vec3};
use crate::scene::Scene;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub const DEFAULT_CELL_SIZE: f64 = 10.0;

#[derive(Debug, Error)]
pub enum VisibilityError {
    #[error("bake region is empty or not finite")]
    EmptyRegion,
    #[error("cell size must be positive, got {0}")]
    BadCellSize(f64),
    #[error("minimum occluder volume must be non-negative, got {0}")]
    BadOccluderVolume(f64),
    #[error("stale bake: baked for scene {baked}, current scene is {current}")]
    StaleBake { baked: String, current: String },
    #[error("malformed bake file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BakeConfig {
    /// Volume the camera may occupy.
    pub region: Aabb,
    pub cell_size: f64,
    pub min_occluder_volume: f64,
}

impl BakeConfig {
    pub fn new(region: Aabb) -> Self {
        Self { region, cell_size: DEFAULT_CELL_SIZE, min_occluder_volume: 0.0 }
    }

    pub fn validate(&self) -> Result<(), VisibilityError> {
        let e = self.region.extents();
        if !self.region.is_valid() || !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0) {
            return Err(VisibilityError::EmptyRegion);
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(VisibilityError::BadCellSize(self.cell_size));
        }
        if !(self.min_occluder_volume >= 0.0) {
            return Err(VisibilityError::BadOccluderVolume(self.min_occluder_volume));
        }
        Ok(())
    }

    fn grid_dims(&self) -> [usize; 3] {
        let e = self.region.extents();
        [e.x, e.y, e.z].map(|len| {
            let cells = len / self.cell_size;
            // absorb rounding such as 1.1 / 0.1 = 11.000000000000002
            ((cells - 1e-9 * cells.max(1.0)).ceil() as usize).max(1)
        })
    }
}

/// Baked per-cell potentially visible sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcclusionBake {
    pub config: BakeConfig,
    pub grid_dims: [usize; 3],
    pub scene_fingerprint: String,
    /// Sorted node ids per cell, x fastest then y then z.
    pub cells: Vec<Vec<String>>,
    /// Sorted ids of the nodes that acted as occluders.
    pub occluders: Vec<String>,
}

impl OcclusionBake {
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn linear_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        let [nx, ny, _] = self.grid_dims;
        ix + nx * (iy + ny * iz)
    }

    pub fn cell_coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.grid_dims;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn cell_bounds(&self, index: usize) -> Aabb {
        cell_bounds(&self.config, self.grid_dims, self.cell_coords(index))
    }

    /// Cell containing `p`, or `None` outside the region. Points on a shared
    /// face resolve to the lower-index cell.
    pub fn cell_for_point(&self, p: Vec3) -> Option<usize> {
        let region = &self.config.region;
        if !region.contains_point(p) {
            return None;
        }
        let mut idx = [0usize; 3];
        for axis in 0..3 {
            let x = (p[axis] - region.min[axis]) / self.config.cell_size;
            let i = x.ceil() as i64 - 1;
            idx[axis] = i.clamp(0, self.grid_dims[axis] as i64 - 1) as usize;
        }
        Some(self.linear_index(idx[0], idx[1], idx[2]))
    }

    pub fn pvs(&self, index: usize) -> &[String] {
        &self.cells[index]
    }

    pub fn check_scene(&self, scene: &Scene) -> Result<(), VisibilityError> {
        let current = scene.fingerprint();
        if current != self.scene_fingerprint {
            return Err(VisibilityError::StaleBake { baked: self.scene_fingerprint.clone(), current });
        }
        Ok(())
    }

    /// Intersects `vs` with the PVS of the camera's cell, without checking the
    /// fingerprint. A camera outside the region keeps `vs` unchanged.
    pub fn cull(&self, vs: &VisibleSet) -> VisibleSet {
        match self.cell_for_point(vs.camera_pose.position) {
            None => vs.clone(),
            Some(cell) => {
                let pvs = &self.cells[cell];
                VisibleSet {
                    node_ids: vs
                        .node_ids
                        .iter()
                        .filter(|id| pvs.binary_search(id).is_ok())
                        .cloned()
                        .collect(),
                    camera_pose: vs.camera_pose,
                }
            }
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("bake serialization is infallible");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, VisibilityError> {
        let bake: OcclusionBake = serde_json::from_slice(bytes)?;
        bake.config.validate()?;
        let [nx, ny, nz] = bake.grid_dims;
        if nx * ny * nz != bake.cells.len() || bake.grid_dims != bake.config.grid_dims() {
            return Err(VisibilityError::Parse(serde::de::Error::custom(
                "grid_dims do not match cells or config",
            )));
        }
        Ok(bake)
    }
}

fn cell_bounds(cfg: &BakeConfig, dims: [usize; 3], coords: [usize; 3]) -> Aabb {
    let r = &cfg.region;
    let edge = |axis: usize| {
        let lo = r.min[axis] + coords[axis] as f64 * cfg.cell_size;
        let hi = if coords[axis] + 1 == dims[axis] {
            r.max[axis]
        } else {
            (r.min[axis] + (coords[axis] + 1) as f64 * cfg.cell_size).min(r.max[axis])
        };
        (lo, hi)
    };
    let (x0, x1) = edge(0);
    let (y0, y1) = edge(1);
    let (z0, z1) = edge(2);
    Aabb::new(Vec3::new(x0, y0, z0), Vec3::new(x1, y1, z1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisibleSet {
    pub node_ids: BTreeSet<String>,
    pub camera_pose: CameraPose,
}

impl VisibleSet {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.node_ids.contains(id)
    }
}

/// Geometry-bearing nodes whose world box is not outside the frustum.
pub fn frustum_cull(scene: &Scene, f: &Frustum, pose: &CameraPose) -> VisibleSet {
    let node_ids = scene
        .geometry_nodes()
        .filter(|n| {
            scene
                .node_world_bounds(n)
                .is_some_and(|b| classify_aabb_frustum(&b, f) != Containment::Outside)
        })
        .map(|n| n.id.clone())
        .collect();
    VisibleSet { node_ids, camera_pose: *pose }
}

/// True when `occluder` blocks every sight line from `cell` to `object`.
/// Returns false whenever the occluder touches either box.
pub fn is_fully_occluded(cell: &Aabb, object: &Aabb, occluder: &Aabb) -> bool {
    if occluder.intersects(cell) || occluder.intersects(object) {
        return false;
    }
    // every segment lies inside the hull of the two boxes
    if !cell.union(object).intersects(occluder) {
        return false;
    }
    if !segment_intersects_aabb(cell.center(), object.center(), occluder) {
        return false;
    }
    let cell_corners = cell.corners();
    let object_corners = object.corners();
    cell_corners
        .iter()
        .all(|&p| object_corners.iter().all(|&q| segment_intersects_aabb(p, q, occluder)))
}

struct BakeObject<'a> {
    id: &'a str,
    bounds: Aabb,
    is_static: bool,
}

/// Bakes a conservative PVS for every cell of `cfg.region`.
pub fn bake_occlusion(scene: &Scene, cfg: &BakeConfig) -> Result<OcclusionBake, VisibilityError> {
    cfg.validate()?;
    let dims = cfg.grid_dims();

    let mut objects: Vec<BakeObject> = scene
        .geometry_nodes()
        .filter_map(|n| {
            Some(BakeObject {
                id: &n.id,
                bounds: scene.node_world_bounds_all_levels(n)?,
                is_static: n.is_static,
            })
        })
        .collect();
    objects.sort_by(|a, b| a.id.cmp(b.id));

    let mut occluders: Vec<(&str, Aabb)> = scene
        .geometry_nodes()
        .filter(|n| n.is_occluder && n.is_static)
        .filter_map(|n| Some((n.id.as_str(), scene.node_world_bounds(n)?)))
        .filter(|(_, b)| b.volume() >= cfg.min_occluder_volume)
        .collect();
    occluders.sort_by(|a, b| a.0.cmp(b.0));

    let cell_total = dims[0] * dims[1] * dims[2];
    let cells: Vec<Vec<String>> = (0..cell_total)
        .into_par_iter()
        .map(|index| {
            let coords = [index % dims[0], (index / dims[0]) % dims[1], index / (dims[0] * dims[1])];
            let cell = cell_bounds(cfg, dims, coords);
            let candidates: Vec<&(&str, Aabb)> =
                occluders.iter().filter(|(_, b)| !b.intersects(&cell)).collect();
            objects
                .iter()
                .filter(|obj| {
                    !obj.is_static
                        || !candidates.iter().any(|(occ_id, occ)| {
                            *occ_id != obj.id && is_fully_occluded(&cell, &obj.bounds, occ)
                        })
                })
                .map(|obj| obj.id.to_string())
                .collect()
        })
        .collect();

    Ok(OcclusionBake {
        config: *cfg,
        grid_dims: dims,
        scene_fingerprint: scene.fingerprint(),
        cells,
        occluders: occluders.iter().map(|(id, _)| id.to_string()).collect(),
    })
}

/// Removes nodes outside the PVS of the camera's cell. Fails if the bake
/// was made for a different scene.
pub fn occlusion_cull(
    vs: &VisibleSet,
    bake: &OcclusionBake,
    scene: &Scene,
) -> Result<VisibleSet, VisibilityError> {
    bake.check_scene(scene)?;
    Ok(bake.cull(vs))
}
