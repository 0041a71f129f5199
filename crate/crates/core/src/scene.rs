//! Scene data model, the `.scene.json` file format, validation and whole-scene
//! statistics.
//!
//! A scene is a flat list of nodes with world transforms. Every node bearing
//! geometry references either one mesh directly or an LOD group whose levels
//! reference meshes. Meshes and materials are keyed by id.

use crate::geometry::transform_aabb;
use crate::math::{Aabb, Quat, Transform, Vec3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct MeshAsset {
    pub id: String,
    pub positions: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub local_bounds: Aabb,
}

impl MeshAsset {
    /// Builds a mesh and computes its local bounds. An empty mesh gets a
    /// degenerate box at the origin.
    pub fn new(id: impl Into<String>, positions: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Self {
        let local_bounds = Aabb::from_points(positions.iter().copied())
            .unwrap_or(Aabb::new(Vec3::ZERO, Vec3::ZERO));
        Self { id: id.into(), positions, triangles, local_bounds }
    }

    /// Axis-aligned box centered on the origin with 12 triangles.
    pub fn unit_box(id: impl Into<String>) -> Self {
        Self::cuboid(id, Vec3::splat(0.5))
    }

    pub fn cuboid(id: impl Into<String>, half: Vec3) -> Self {
        let positions = Aabb::from_center_half_extents(Vec3::ZERO, half).corners().to_vec();
        // corner bits: 1 = +x, 2 = +y, 4 = +z
        let triangles = vec![
            [0, 2, 3], [0, 3, 1], // -z
            [4, 5, 7], [4, 7, 6], // +z
            [0, 1, 5], [0, 5, 4], // -y
            [2, 6, 7], [2, 7, 3], // +y
            [0, 4, 6], [0, 6, 2], // -x
            [1, 3, 7], [1, 7, 5], // +x
        ];
        Self::new(id, positions, triangles)
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterialRef {
    pub id: String,
    pub name: String,
    pub opaque: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LodLevel {
    pub mesh: String,
    /// Minimum screen coverage (fraction of half viewport height) for this level.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LodGroup {
    pub levels: Vec<LodLevel>,
    pub cull_below: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneNode {
    pub id: String,
    pub name: String,
    pub transform: Transform,
    pub mesh_id: Option<String>,
    pub material_id: Option<String>,
    pub lod_group: Option<LodGroup>,
    pub is_static: bool,
    pub is_occluder: bool,
}

impl SceneNode {
    /// A static, non-occluding node drawing `mesh` at `transform`.
    pub fn with_mesh(id: impl Into<String>, mesh: impl Into<String>, transform: Transform) -> Self {
        let id = id.into();
        Self {
            name: id.clone(),
            id,
            transform,
            mesh_id: Some(mesh.into()),
            material_id: None,
            lod_group: None,
            is_static: true,
            is_occluder: false,
        }
    }

    /// Mesh drawn at full detail: the direct mesh, or LOD level 0.
    pub fn primary_mesh_id(&self) -> Option<&str> {
        match (&self.mesh_id, &self.lod_group) {
            (Some(m), _) => Some(m),
            (None, Some(g)) => g.levels.first().map(|l| l.mesh.as_str()),
            (None, None) => None,
        }
    }

    /// Every mesh this node may draw.
    pub fn mesh_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.mesh_id.iter().map(String::as_str).collect();
        if let Some(g) = &self.lod_group {
            ids.extend(g.levels.iter().map(|l| l.mesh.as_str()));
        }
        ids
    }

    pub fn has_geometry(&self) -> bool {
        self.primary_mesh_id().is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub frame_id: String,
    pub meshes: BTreeMap<String, MeshAsset>,
    pub materials: BTreeMap<String, MaterialRef>,
    pub nodes: Vec<SceneNode>,
}

impl Scene {
    pub fn new(frame_id: impl Into<String>) -> Self {
        Self {
            frame_id: frame_id.into(),
            meshes: BTreeMap::new(),
            materials: BTreeMap::new(),
            nodes: Vec::new(),
        }
    }

    pub fn add_mesh(&mut self, mesh: MeshAsset) {
        self.meshes.insert(mesh.id.clone(), mesh);
    }

    pub fn add_material(&mut self, material: MaterialRef) {
        self.materials.insert(material.id.clone(), material);
    }

    pub fn node(&self, id: &str) -> Option<&SceneNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn geometry_nodes(&self) -> impl Iterator<Item = &SceneNode> {
        self.nodes.iter().filter(|n| n.has_geometry())
    }

    /// World bounds of the node's full-detail mesh.
    pub fn node_world_bounds(&self, node: &SceneNode) -> Option<Aabb> {
        let mesh = self.meshes.get(node.primary_mesh_id()?)?;
        Some(transform_aabb(&mesh.local_bounds, &node.transform))
    }

    /// World bounds enclosing every mesh the node may draw (all LOD levels).
    pub fn node_world_bounds_all_levels(&self, node: &SceneNode) -> Option<Aabb> {
        node.mesh_ids()
            .into_iter()
            .filter_map(|id| self.meshes.get(id))
            .map(|m| transform_aabb(&m.local_bounds, &node.transform))
            .reduce(|a, b| a.union(&b))
    }

    /// Content hash (hex SHA-256) over every field that affects rendering.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let put_str = |h: &mut Sha256, s: &str| {
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.as_bytes());
        };
        let put_f = |h: &mut Sha256, v: f64| h.update(v.to_bits().to_le_bytes());
        put_str(&mut h, &self.frame_id);
        for m in self.materials.values() {
            put_str(&mut h, &m.id);
            put_str(&mut h, &m.name);
            h.update([m.opaque as u8]);
        }
        for m in self.meshes.values() {
            put_str(&mut h, &m.id);
            h.update((m.positions.len() as u64).to_le_bytes());
            for p in &m.positions {
                put_f(&mut h, p.x);
                put_f(&mut h, p.y);
                put_f(&mut h, p.z);
            }
            h.update((m.triangles.len() as u64).to_le_bytes());
            for t in &m.triangles {
                for i in t {
                    h.update(i.to_le_bytes());
                }
            }
        }
        h.update((self.nodes.len() as u64).to_le_bytes());
        for n in &self.nodes {
            put_str(&mut h, &n.id);
            put_str(&mut h, &n.name);
            let t = &n.transform;
            for v in [t.translation.x, t.translation.y, t.translation.z] {
                put_f(&mut h, v);
            }
            for v in [t.rotation.w, t.rotation.x, t.rotation.y, t.rotation.z] {
                put_f(&mut h, v);
            }
            for v in [t.scale.x, t.scale.y, t.scale.z] {
                put_f(&mut h, v);
            }
            put_str(&mut h, n.mesh_id.as_deref().unwrap_or("\0"));
            put_str(&mut h, n.material_id.as_deref().unwrap_or("\0"));
            match &n.lod_group {
                Some(g) => {
                    h.update((g.levels.len() as u64).to_le_bytes());
                    for l in &g.levels {
                        put_str(&mut h, &l.mesh);
                        put_f(&mut h, l.threshold);
                    }
                    put_f(&mut h, g.cull_below);
                }
                None => h.update(u64::MAX.to_le_bytes()),
            }
            h.update([n.is_static as u8, n.is_occluder as u8]);
        }
        hex::encode(h.finalize())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneStats {
    pub node_count: usize,
    pub mesh_count: usize,
    pub material_count: usize,
    pub triangle_count: usize,
    pub naive_drawcalls: usize,
}

/// One broken invariant, naming the offending node or asset.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub subject: String,
    pub rule: Rule,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rule {
    EmptyFrameId,
    DuplicateId,
    KeyMismatch,
    NonFinite(&'static str),
    ScaleNotPositive,
    RotationNotUnit,
    IndexOutOfRange { triangle: usize },
    BoundsDoNotContainPositions,
    FlatArrayLength(&'static str),
    MissingMesh(String),
    MissingMaterial(String),
    LodWithDirectMesh,
    LodEmpty,
    LodThresholdRange { level: usize },
    LodThresholdsNotDecreasing { level: usize },
    LodCullBelow,
    OccluderNotStatic,
}

impl Rule {
    /// The id this rule says is missing, for referential-integrity failures.
    pub fn dangling_id(&self) -> Option<&str> {
        match self {
            Rule::MissingMesh(id) | Rule::MissingMaterial(id) => Some(id),
            _ => None,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::EmptyFrameId => write!(f, "frame_id nonempty"),
            Rule::DuplicateId => write!(f, "ids unique"),
            Rule::KeyMismatch => write!(f, "map key equals id"),
            Rule::NonFinite(field) => write!(f, "{field} finite"),
            Rule::ScaleNotPositive => write!(f, "scale > 0"),
            Rule::RotationNotUnit => write!(f, "rotation is a unit quaternion"),
            Rule::IndexOutOfRange { triangle } => {
                write!(f, "triangle {triangle} indices < vertex count")
            }
            Rule::BoundsDoNotContainPositions => write!(f, "local bounds contain all positions"),
            Rule::FlatArrayLength(field) => write!(f, "{field} length is a multiple of 3"),
            Rule::MissingMesh(id) => write!(f, "mesh \"{id}\" exists"),
            Rule::MissingMaterial(id) => write!(f, "material \"{id}\" exists"),
            Rule::LodWithDirectMesh => write!(f, "lod node has no direct mesh"),
            Rule::LodEmpty => write!(f, "lod group has at least one level"),
            Rule::LodThresholdRange { level } => write!(f, "lod level {level} threshold in [0,1)"),
            Rule::LodThresholdsNotDecreasing { level } => {
                write!(f, "lod level {level} threshold below previous level")
            }
            Rule::LodCullBelow => write!(f, "last threshold >= cull_below >= 0"),
            Rule::OccluderNotStatic => write!(f, "occluder implies static"),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{owner} references missing id \"{id}\"")]
    DanglingReference { owner: String, id: String },
    #[error("invalid scene: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("scene has no geometry-bearing nodes")]
    Empty,
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Checks every type invariant. Returns one entry per broken rule.
pub fn validate_scene(scene: &Scene) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |subject: &str, rule: Rule| {
        out.push(Violation { subject: subject.to_string(), rule });
    };

    if scene.frame_id.is_empty() {
        flag("scene", Rule::EmptyFrameId);
    }

    for (key, mesh) in &scene.meshes {
        if *key != mesh.id {
            flag(key, Rule::KeyMismatch);
        }
        if !mesh.positions.iter().all(|p| p.is_finite()) {
            flag(&mesh.id, Rule::NonFinite("positions"));
        }
        let n = mesh.positions.len();
        if let Some(i) = mesh.triangles.iter().position(|t| t.iter().any(|&i| i as usize >= n)) {
            flag(&mesh.id, Rule::IndexOutOfRange { triangle: i });
        }
        if !mesh.local_bounds.is_valid()
            || !mesh.positions.iter().all(|p| mesh.local_bounds.contains_point(*p))
        {
            flag(&mesh.id, Rule::BoundsDoNotContainPositions);
        }
    }
    for (key, mat) in &scene.materials {
        if *key != mat.id {
            flag(key, Rule::KeyMismatch);
        }
    }

    let mut seen = BTreeSet::new();
    for node in &scene.nodes {
        let id = node.id.as_str();
        if !seen.insert(id) {
            flag(id, Rule::DuplicateId);
        }
        let t = &node.transform;
        if !t.translation.is_finite() {
            flag(id, Rule::NonFinite("translation"));
        }
        if !t.scale.is_finite() {
            flag(id, Rule::NonFinite("scale"));
        } else if !(t.scale.x > 0.0 && t.scale.y > 0.0 && t.scale.z > 0.0) {
            flag(id, Rule::ScaleNotPositive);
        }
        if !t.rotation.is_unit() {
            flag(id, Rule::RotationNotUnit);
        }
        if let Some(m) = &node.mesh_id {
            if !scene.meshes.contains_key(m) {
                flag(id, Rule::MissingMesh(m.clone()));
            }
        }
        if let Some(m) = &node.material_id {
            if !scene.materials.contains_key(m) {
                flag(id, Rule::MissingMaterial(m.clone()));
            }
        }
        if let Some(g) = &node.lod_group {
            if node.mesh_id.is_some() {
                flag(id, Rule::LodWithDirectMesh);
            }
            if g.levels.is_empty() {
                flag(id, Rule::LodEmpty);
            }
            for (i, level) in g.levels.iter().enumerate() {
                if !scene.meshes.contains_key(&level.mesh) {
                    flag(id, Rule::MissingMesh(level.mesh.clone()));
                }
                if !(level.threshold >= 0.0 && level.threshold < 1.0) {
                    flag(id, Rule::LodThresholdRange { level: i });
                }
                if i > 0 && !(level.threshold < g.levels[i - 1].threshold) {
                    flag(id, Rule::LodThresholdsNotDecreasing { level: i });
                }
            }
            let last = g.levels.last().map_or(1.0, |l| l.threshold);
            if !(g.cull_below >= 0.0 && g.cull_below <= last) {
                flag(id, Rule::LodCullBelow);
            }
        }
        if node.is_occluder && !node.is_static {
            flag(id, Rule::OccluderNotStatic);
        }
    }
    out
}

pub fn scene_stats(scene: &Scene) -> SceneStats {
    let mut stats = SceneStats {
        node_count: scene.nodes.len(),
        mesh_count: scene.meshes.len(),
        material_count: scene.materials.len(),
        ..SceneStats::default()
    };
    for node in scene.geometry_nodes() {
        stats.naive_drawcalls += 1;
        if let Some(mesh) = node.primary_mesh_id().and_then(|m| scene.meshes.get(m)) {
            stats.triangle_count += mesh.triangle_count();
        }
    }
    stats
}

/// Union of every geometry-bearing node's world box.
pub fn world_bounds(scene: &Scene) -> Result<Aabb, SceneError> {
    scene
        .geometry_nodes()
        .filter_map(|n| scene.node_world_bounds(n))
        .reduce(|a, b| a.union(&b))
        .ok_or(SceneError::Empty)
}

// --- file format -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SceneFile {
    frame_id: String,
    materials: Vec<MaterialRef>,
    meshes: Vec<MeshRecord>,
    nodes: Vec<NodeRecord>,
}

#[derive(Serialize, Deserialize)]
struct MeshRecord {
    id: String,
    positions: Vec<f64>,
    triangles: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: String,
    name: String,
    translation: Vec3,
    rotation: Quat,
    scale: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mesh: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    material: Option<String>,
    #[serde(rename = "static")]
    is_static: bool,
    occluder: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lod: Option<LodGroup>,
}

/// Parses and validates a `.scene.json` document.
pub fn load_scene(bytes: &[u8]) -> Result<Scene, SceneError> {
    let file: SceneFile = serde_json::from_slice(bytes).map_err(|e| SceneError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut pre = Vec::new();
    let mut scene = Scene::new(file.frame_id);
    for m in file.materials {
        if scene.materials.contains_key(&m.id) {
            pre.push(Violation { subject: m.id.clone(), rule: Rule::DuplicateId });
        }
        scene.add_material(m);
    }
    for m in file.meshes {
        if m.positions.len() % 3 != 0 {
            pre.push(Violation { subject: m.id.clone(), rule: Rule::FlatArrayLength("positions") });
        }
        if m.triangles.len() % 3 != 0 {
            pre.push(Violation { subject: m.id.clone(), rule: Rule::FlatArrayLength("triangles") });
        }
        if scene.meshes.contains_key(&m.id) {
            pre.push(Violation { subject: m.id.clone(), rule: Rule::DuplicateId });
        }
        let positions = m.positions.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        let triangles = m.triangles.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        scene.add_mesh(MeshAsset::new(m.id, positions, triangles));
    }
    scene.nodes = file
        .nodes
        .into_iter()
        .map(|n| SceneNode {
            id: n.id,
            name: n.name,
            transform: Transform { translation: n.translation, rotation: n.rotation, scale: n.scale },
            mesh_id: n.mesh,
            material_id: n.material,
            lod_group: n.lod,
            is_static: n.is_static,
            is_occluder: n.occluder,
        })
        .collect();

    pre.extend(validate_scene(&scene));
    if let Some(v) = pre.iter().find(|v| v.rule.dangling_id().is_some()) {
        return Err(SceneError::DanglingReference {
            owner: v.subject.clone(),
            id: v.rule.dangling_id().unwrap_or_default().to_string(),
        });
    }
    if !pre.is_empty() {
        return Err(SceneError::Invalid(pre));
    }
    Ok(scene)
}

/// Serializes a scene. Meshes and materials are written sorted by id and
/// nodes in list order, so two calls on the same scene are byte-identical.
pub fn save_scene(scene: &Scene) -> Vec<u8> {
    let file = SceneFile {
        frame_id: scene.frame_id.clone(),
        materials: scene.materials.values().cloned().collect(),
        meshes: scene
            .meshes
            .values()
            .map(|m| MeshRecord {
                id: m.id.clone(),
                positions: m.positions.iter().flat_map(|p| p.to_array()).collect(),
                triangles: m.triangles.iter().flatten().copied().collect(),
            })
            .collect(),
        nodes: scene
            .nodes
            .iter()
            .map(|n| NodeRecord {
                id: n.id.clone(),
                name: n.name.clone(),
                translation: n.transform.translation,
                rotation: n.transform.rotation,
                scale: n.transform.scale,
                mesh: n.mesh_id.clone(),
                material: n.material_id.clone(),
                is_static: n.is_static,
                occluder: n.is_occluder,
                lod: n.lod_group.clone(),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec(&file).expect("scene serialization is infallible");
    out.push(b'\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_scene(n: usize) -> Scene {
        let mut s = Scene::new("map");
        s.add_mesh(MeshAsset::unit_box("box"));
        s.add_material(MaterialRef { id: "mat".into(), name: "Concrete".into(), opaque: true });
        for i in 0..n {
            let mut node = SceneNode::with_mesh(
                format!("n{i:02}"),
                "box",
                Transform::from_translation(Vec3::new(3.0 * i as f64, 0.0, 0.0)),
            );
            node.material_id = Some("mat".into());
            s.nodes.push(node);
        }
        s
    }

    #[test]
    fn minimal_file_has_no_nodes() {
        let s = load_scene(br#"{"frame_id":"map","materials":[],"meshes":[],"nodes":[]}"#).unwrap();
        assert!(s.nodes.is_empty());
        assert_eq!(scene_stats(&s), SceneStats::default());
    }

    #[test]
    fn dangling_mesh_is_named() {
        let text = br#"{"frame_id":"map","materials":[],"meshes":[],"nodes":[
            {"id":"a","name":"a","translation":[0,0,0],"rotation":[1,0,0,0],"scale":[1,1,1],
             "mesh":"m9","static":true,"occluder":false}]}"#;
        match load_scene(text) {
            Err(SceneError::DanglingReference { owner, id }) => {
                assert_eq!(owner, "a");
                assert_eq!(id, "m9");
            }
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = load_scene(b"{\n  \"frame_id\": \"map\",\n  oops\n}").unwrap_err();
        match err {
            SceneError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_required_field_rejected_unknown_ignored() {
        let missing = br#"{"frame_id":"map","materials":[],"meshes":[]}"#;
        assert!(matches!(load_scene(missing), Err(SceneError::Parse { .. })));
        let extra = br#"{"frame_id":"map","materials":[],"meshes":[],"nodes":[],"author":"x"}"#;
        assert!(load_scene(extra).is_ok());
    }

    #[test]
    fn ten_boxes_stats() {
        let stats = scene_stats(&box_scene(10));
        assert_eq!(stats.triangle_count, 120);
        assert_eq!(stats.naive_drawcalls, 10);
        assert_eq!(stats.node_count, 10);
    }

    #[test]
    fn valid_scene_has_no_violations() {
        assert!(validate_scene(&box_scene(3)).is_empty());
    }

    #[test]
    fn zero_scale_is_one_violation() {
        let mut s = box_scene(1);
        s.nodes[0].transform.scale = Vec3::new(0.0, 1.0, 1.0);
        let v = validate_scene(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule.to_string(), "scale > 0");
        assert_eq!(v[0].subject, "n00");
    }

    #[test]
    fn dynamic_occluder_is_one_violation() {
        let mut s = box_scene(1);
        s.nodes[0].is_occluder = true;
        s.nodes[0].is_static = false;
        assert_eq!(validate_scene(&s), vec![Violation {
            subject: "n00".into(),
            rule: Rule::OccluderNotStatic
        }]);
    }

    // Each invariant is reachable from a valid scene by one mutation.
    #[test]
    fn every_rule_individually_triggerable() {
        let mut base = box_scene(1);
        base.add_mesh(MeshAsset::unit_box("lo"));
        base.nodes.push(SceneNode {
            lod_group: Some(LodGroup {
                levels: vec![
                    LodLevel { mesh: "box".into(), threshold: 0.5 },
                    LodLevel { mesh: "lo".into(), threshold: 0.1 },
                ],
                cull_below: 0.02,
            }),
            mesh_id: None,
            ..SceneNode::with_mesh("lodnode", "box", Transform::IDENTITY)
        });
        assert!(validate_scene(&base).is_empty());

        type Mutation = Box<dyn Fn(&mut Scene)>;
        let cases: Vec<(Mutation, Rule)> = vec![
            (Box::new(|s| s.frame_id.clear()), Rule::EmptyFrameId),
            (Box::new(|s| { let n = s.nodes[0].clone(); s.nodes.push(n); }), Rule::DuplicateId),
            (Box::new(|s| s.meshes.get_mut("box").unwrap().id = "other".into()), Rule::KeyMismatch),
            (Box::new(|s| s.nodes[0].transform.translation.x = f64::NAN), Rule::NonFinite("translation")),
            (Box::new(|s| s.nodes[0].transform.scale.z = -1.0), Rule::ScaleNotPositive),
            (Box::new(|s| s.nodes[0].transform.rotation = Quat::new(1.1, 0.0, 0.0, 0.0)), Rule::RotationNotUnit),
            (Box::new(|s| s.meshes.get_mut("box").unwrap().triangles[3] = [0, 1, 8]), Rule::IndexOutOfRange { triangle: 3 }),
            (Box::new(|s| s.meshes.get_mut("box").unwrap().local_bounds.max.x = 0.0), Rule::BoundsDoNotContainPositions),
            (Box::new(|s| s.nodes[0].mesh_id = Some("nope".into())), Rule::MissingMesh("nope".into())),
            (Box::new(|s| s.nodes[0].material_id = Some("nope".into())), Rule::MissingMaterial("nope".into())),
            (Box::new(|s| s.nodes[1].mesh_id = Some("box".into())), Rule::LodWithDirectMesh),
            (Box::new(|s| s.nodes[1].lod_group.as_mut().unwrap().levels[0].threshold = 1.0), Rule::LodThresholdRange { level: 0 }),
            (Box::new(|s| s.nodes[1].lod_group.as_mut().unwrap().levels[1].threshold = 0.5), Rule::LodThresholdsNotDecreasing { level: 1 }),
            (Box::new(|s| s.nodes[1].lod_group.as_mut().unwrap().cull_below = 0.2), Rule::LodCullBelow),
            (Box::new(|s| { s.nodes[0].is_occluder = true; s.nodes[0].is_static = false; }), Rule::OccluderNotStatic),
        ];
        for (mutate, rule) in cases {
            let mut s = base.clone();
            mutate(&mut s);
            let v = validate_scene(&s);
            assert!(v.iter().any(|v| v.rule == rule), "expected {rule:?}, got {v:?}");
        }
        let mut s = base.clone();
        s.nodes[1].lod_group.as_mut().unwrap().levels.clear();
        assert!(validate_scene(&s).iter().any(|v| v.rule == Rule::LodEmpty));
    }

    #[test]
    fn save_is_deterministic_and_round_trips() {
        let s = box_scene(4);
        let a = save_scene(&s);
        assert_eq!(a, save_scene(&s));
        assert_eq!(load_scene(&a).unwrap(), s);
        let empty = Scene::new("map");
        let text = String::from_utf8(save_scene(&empty)).unwrap();
        assert!(text.contains(r#""materials":[]"#) && text.contains(r#""nodes":[]"#));
    }

    #[test]
    fn world_bounds_unit_box_and_translation() {
        let mut s = box_scene(1);
        let b = world_bounds(&s).unwrap();
        assert_eq!(b, Aabb::new(Vec3::splat(-0.5), Vec3::splat(0.5)));
        s.nodes[0].transform.translation = Vec3::new(10.0, 0.0, 0.0);
        let b = world_bounds(&s).unwrap();
        assert_eq!(b, Aabb::new(Vec3::new(9.5, -0.5, -0.5), Vec3::new(10.5, 0.5, 0.5)));
        assert!(matches!(world_bounds(&Scene::new("map")), Err(SceneError::Empty)));
    }

    #[test]
    fn rotated_box_bounds_contain_corners() {
        let mut s = box_scene(1);
        let t = Transform {
            translation: Vec3::new(1.0, 2.0, 3.0),
            rotation: Quat::from_axis_angle(Vec3::new(1.0, 2.0, 0.5), 0.9),
            scale: Vec3::new(2.0, 1.0, 0.5),
        };
        s.nodes[0].transform = t;
        let b = world_bounds(&s).unwrap();
        for c in s.meshes["box"].local_bounds.corners() {
            assert!(b.inflated(1e-12).contains_point(t.apply_point(c)));
        }
    }

    #[test]
    fn fingerprint_tracks_content() {
        let s = box_scene(2);
        let mut t = s.clone();
        assert_eq!(s.fingerprint(), t.fingerprint());
        t.nodes[1].transform.translation.z += 1e-9;
        assert_ne!(s.fingerprint(), t.fingerprint());
    }
}
