//! Deterministic synthetic city: a grid of blocks separated by empty street
//! corridors, each block holding axis-aligned box buildings whose surfaces
//! are subdivided to hit a sampled triangle count exactly.

use crate::math::{Aabb, Transform, Vec3};
use crate::optimize::decimate_mesh;
use crate::scene::{LodGroup, LodLevel, MaterialRef, MeshAsset, Scene, SceneNode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest building: one quad per wall plus a four-triangle roof fan.
pub const MIN_TRIANGLES_PER_BUILDING: usize = 12;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    Invalid(&'static str),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub buildings_per_block: usize,
    /// Inclusive range each building's triangle count is drawn from.
    pub triangles_per_building: (usize, usize),
    pub material_palette_size: usize,
    pub lod_levels: usize,
    pub street_width: f64,
    pub block_size: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            blocks_x: 10,
            blocks_y: 10,
            buildings_per_block: 4,
            triangles_per_building: (2_000, 6_000),
            material_palette_size: 8,
            lod_levels: 3,
            street_width: 20.0,
            block_size: 60.0,
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.blocks_x < 1 || self.blocks_y < 1 {
            return Err(GenError::Invalid("need at least one block per axis"));
        }
        if self.buildings_per_block < 1 {
            return Err(GenError::Invalid("need at least one building per block"));
        }
        let (lo, hi) = self.triangles_per_building;
        if lo > hi {
            return Err(GenError::Invalid("triangle range min exceeds max"));
        }
        if lo < MIN_TRIANGLES_PER_BUILDING {
            return Err(GenError::Invalid("buildings need at least 12 triangles"));
        }
        if self.material_palette_size < 1 {
            return Err(GenError::Invalid("palette needs at least one material"));
        }
        if !(1..=3).contains(&self.lod_levels) {
            return Err(GenError::Invalid("lod levels must be 1, 2 or 3"));
        }
        if !(self.street_width > 0.0 && self.street_width.is_finite()) {
            return Err(GenError::Invalid("street width must be positive"));
        }
        if !(self.block_size > 0.0 && self.block_size.is_finite()) {
            return Err(GenError::Invalid("block size must be positive"));
        }
        Ok(())
    }

    /// Block edge plus one street width.
    pub fn pitch(&self) -> f64 {
        self.block_size + self.street_width
    }
}

/// Bookkeeping the generator declares about its output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CityLedger {
    pub buildings: usize,
    pub geometry_nodes: usize,
    pub materials: usize,
    pub meshes: usize,
    /// Sum of full-detail triangle counts over all buildings.
    pub level0_triangles: usize,
    pub city_bounds: Aabb,
    pub pitch: f64,
    pub street_width: f64,
}

impl CityLedger {
    /// Center line of the `i`-th street running along y (0 = west edge).
    pub fn street_x(&self, i: usize) -> f64 {
        i as f64 * self.pitch
    }

    /// Center line of the `j`-th street running along x (0 = south edge).
    pub fn street_y(&self, j: usize) -> f64 {
        j as f64 * self.pitch
    }

    /// Ground-to-roof box over blocks `x0..x1` × `y0..y1`, bounded by the
    /// surrounding street center lines.
    pub fn block_region(&self, x0: usize, x1: usize, y0: usize, y1: usize) -> Aabb {
        Aabb::new(
            Vec3::new(self.street_x(x0), self.street_y(y0), self.city_bounds.min.z),
            Vec3::new(self.street_x(x1), self.street_y(y1), self.city_bounds.max.z),
        )
    }
}

pub fn generate_city(cfg: &GenConfig) -> Result<Scene, GenError> {
    Ok(generate_city_with_ledger(cfg)?.0)
}

pub fn generate_city_with_ledger(cfg: &GenConfig) -> Result<(Scene, CityLedger), GenError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scene = Scene::new("map");

    for i in 0..cfg.material_palette_size {
        scene.add_material(MaterialRef {
            id: format!("mat_{i:02}"),
            name: format!("Facade {i}"),
            opaque: true,
        });
    }

    let n = cfg.buildings_per_block;
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let slot = Vec3::new(cfg.block_size / cols as f64, cfg.block_size / rows as f64, 0.0);
    let pitch = cfg.pitch();

    let mut level0_triangles = 0;
    let mut max_height: f64 = 0.0;
    let mut index = 0usize;
    for bx in 0..cfg.blocks_x {
        for by in 0..cfg.blocks_y {
            let block_min = Vec3::new(
                cfg.street_width * 0.5 + bx as f64 * pitch,
                cfg.street_width * 0.5 + by as f64 * pitch,
                0.0,
            );
            for k in 0..n {
                let (col, row) = (k % cols, k / cols);
                let width = slot.x * rng.random_range(0.5..0.85);
                let depth = slot.y * rng.random_range(0.5..0.85);
                let height = rng.random_range(8.0..40.0);
                let gap_x = slot.x - width;
                let gap_y = slot.y - depth;
                // keep at least 5% of the slot free on each side
                let off_x = gap_x * rng.random_range(0.1..0.9);
                let off_y = gap_y * rng.random_range(0.1..0.9);
                let (tri_lo, tri_hi) = cfg.triangles_per_building;
                let triangles = rng.random_range(tri_lo..=tri_hi);

                let center = Vec3::new(
                    block_min.x + col as f64 * slot.x + off_x + width * 0.5,
                    block_min.y + row as f64 * slot.y + off_y + depth * 0.5,
                    0.0,
                );
                let id = format!("b{bx:02}_{by:02}_{k:02}");
                let mesh = building_mesh(&id, width, depth, height, triangles);
                debug_assert_eq!(mesh.triangle_count(), triangles);
                level0_triangles += triangles;
                max_height = max_height.max(height);

                let mut node = SceneNode::with_mesh(id.clone(), id.clone(), Transform::from_translation(center));
                node.material_id = Some(format!("mat_{:02}", index % cfg.material_palette_size));
                node.is_occluder = true;
                if cfg.lod_levels > 1 {
                    node.mesh_id = None;
                    node.lod_group = Some(lod_chain(&mut scene, mesh, cfg.lod_levels));
                } else {
                    scene.add_mesh(mesh);
                }
                scene.nodes.push(node);
                index += 1;
            }
        }
    }

    let ledger = CityLedger {
        buildings: index,
        geometry_nodes: index,
        materials: scene.materials.len(),
        meshes: scene.meshes.len(),
        level0_triangles,
        city_bounds: Aabb::new(
            Vec3::ZERO,
            Vec3::new(cfg.blocks_x as f64 * pitch, cfg.blocks_y as f64 * pitch, max_height),
        ),
        pitch,
        street_width: cfg.street_width,
    };
    Ok((scene, ledger))
}

/// Adds decimated copies of `base` as coarser levels and returns the group.
fn lod_chain(scene: &mut Scene, base: MeshAsset, levels: usize) -> LodGroup {
    const THRESHOLDS: [f64; 3] = [0.3, 0.12, 0.05];
    const CULL_BELOW: f64 = 0.01;
    let id = base.id.clone();
    let extent = base.local_bounds.extents();
    let largest = extent.x.max(extent.y).max(extent.z);

    let mut group = LodGroup { levels: Vec::new(), cull_below: CULL_BELOW };
    let mut current = base;
    for (level, &threshold) in THRESHOLDS.iter().enumerate().take(levels) {
        if level > 0 {
            // each level clusters on a grid twice as coarse as the last
            let grid = largest / (6.0 / (1 << (level - 1)) as f64);
            current = decimate_mesh(&current, grid);
        }
        let mesh_id = format!("{id}_lod{level}");
        current.id = mesh_id.clone();
        scene.add_mesh(current.clone());
        group.levels.push(LodLevel { mesh: mesh_id, threshold });
    }
    // keep the coarsest threshold above the cull cutoff
    if let Some(last) = group.levels.last_mut() {
        last.threshold = last.threshold.max(CULL_BELOW);
    }
    group
}

/// Box building with its base on z = 0, centered on the local origin.
/// Four subdivided walls carry `8a²` triangles; the roof is a fan around its
/// center carrying the remainder, so the total equals `triangles` exactly.
pub fn building_mesh(id: &str, width: f64, depth: f64, height: f64, triangles: usize) -> MeshAsset {
    assert!(triangles >= MIN_TRIANGLES_PER_BUILDING);
    // largest a with 8a² + 4 <= triangles; the roof needs at least 4
    let mut a = 1;
    while 8 * (a + 1) * (a + 1) + 4 <= triangles {
        a += 1;
    }
    let roof = triangles - 8 * a * a;

    let (hw, hd) = (width * 0.5, depth * 0.5);
    let corners = [
        Vec3::new(-hw, -hd, 0.0),
        Vec3::new(hw, -hd, 0.0),
        Vec3::new(hw, hd, 0.0),
        Vec3::new(-hw, hd, 0.0),
    ];

    let mut positions = Vec::new();
    let mut tris: Vec<[u32; 3]> = Vec::new();
    for w in 0..4 {
        let (p0, p1) = (corners[w], corners[(w + 1) % 4]);
        let base = positions.len() as u32;
        for j in 0..=a {
            for i in 0..=a {
                let along = p0.lerp(p1, i as f64 / a as f64);
                positions.push(Vec3::new(along.x, along.y, height * j as f64 / a as f64));
            }
        }
        let stride = (a + 1) as u32;
        for j in 0..a as u32 {
            for i in 0..a as u32 {
                let v = base + j * stride + i;
                tris.push([v, v + 1, v + stride + 1]);
                tris.push([v, v + stride + 1, v + stride]);
            }
        }
    }

    let top = |p: Vec3| Vec3::new(p.x, p.y, height);
    let center = positions.len() as u32;
    positions.push(Vec3::new(0.0, 0.0, height));
    let ring_start = positions.len() as u32;
    let extra = roof - 4;
    for e in 0..4 {
        let (p0, p1) = (corners[e], corners[(e + 1) % 4]);
        positions.push(top(p0));
        let count = extra / 4 + usize::from(e < extra % 4);
        for s in 1..=count {
            positions.push(top(p0.lerp(p1, s as f64 / (count + 1) as f64)));
        }
    }
    let ring = roof as u32;
    for i in 0..ring {
        tris.push([center, ring_start + i, ring_start + (i + 1) % ring]);
    }
    MeshAsset::new(id, positions, tris)
}
