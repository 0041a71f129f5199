//! Geometry kernel: box transforms, view frustums, box/frustum
//! classification, segment/box intersection and projected screen coverage.
//!
//! All tests treat boxes and frustums as closed sets, so boundary contact
//! always counts as overlap.

use crate::math::{Aabb, Quat, Transform, Vec3};
use serde::{Deserialize, Serialize};

/// `{p : normal·p + d = 0}`; the normal points into the kept half-space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub d: f64,
}

impl Plane {
    fn from_coefficients(a: f64, b: f64, c: f64, d: f64) -> Plane {
        let len = Vec3::new(a, b, c).length();
        Plane { normal: Vec3::new(a / len, b / len, c / len), d: d / len }
    }

    pub fn signed_distance(&self, p: Vec3) -> f64 {
        self.normal.dot(p) + self.d
    }
}

/// Six inward-facing planes: left, right, bottom, top, near, far.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frustum {
    pub planes: [Plane; 6],
}

impl Frustum {
    pub const LEFT: usize = 0;
    pub const RIGHT: usize = 1;
    pub const BOTTOM: usize = 2;
    pub const TOP: usize = 3;
    pub const NEAR: usize = 4;
    pub const FAR: usize = 5;

    pub fn contains_point(&self, p: Vec3) -> bool {
        self.planes.iter().all(|pl| pl.signed_distance(p) >= 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Full vertical field of view, radians in (0, π).
    pub vertical_fov: f64,
    pub aspect: f64,
    pub near: f64,
    pub far: f64,
    pub viewport_height: u32,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            vertical_fov: 60f64.to_radians(),
            aspect: 16.0 / 9.0,
            near: 0.1,
            far: 1000.0,
            viewport_height: 1080,
        }
    }
}

impl CameraIntrinsics {
    pub fn is_valid(&self) -> bool {
        self.vertical_fov > 0.0
            && self.vertical_fov < std::f64::consts::PI
            && self.aspect > 0.0
            && self.aspect.is_finite()
            && self.near > 0.0
            && self.far > self.near
            && self.far.is_finite()
            && self.viewport_height > 0
    }
}

/// Camera placement. The camera looks along its local −Z with local +Y up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    #[serde(rename = "rotation")]
    pub orientation: Quat,
}

impl CameraPose {
    /// Pose at `position` facing `target`, keeping world +Z up.
    pub fn look_at(position: Vec3, target: Vec3) -> CameraPose {
        let forward = (target - position).normalized();
        let mut right = forward.cross(Vec3::Z);
        if right.length() < 1e-9 {
            right = Vec3::X;
        }
        let right = right.normalized();
        let up = right.cross(forward);
        let back = -forward;
        // columns are the images of local X, Y, Z
        let m = [
            [right.x, up.x, back.x],
            [right.y, up.y, back.y],
            [right.z, up.z, back.z],
        ];
        CameraPose { position, orientation: Quat::from_rotation_matrix(m) }
    }

    /// Street-level pose facing heading `yaw` (radians from +X, CCW).
    pub fn heading(position: Vec3, yaw: f64) -> CameraPose {
        CameraPose::look_at(position, position + Vec3::new(yaw.cos(), yaw.sin(), 0.0))
    }

    pub fn forward(&self) -> Vec3 {
        self.orientation.rotate(-Vec3::Z)
    }
}

/// Exact bounds of the 8 transformed corners of `b`.
pub fn transform_aabb(b: &Aabb, t: &Transform) -> Aabb {
    let corners = b.corners().map(|c| t.apply_point(c));
    Aabb::from_points(corners).expect("eight corners")
}

type Mat4 = [[f64; 4]; 4];

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..4).map(|k| a[i][k] * b[k][j]).sum()))
}

fn view_projection(pose: &CameraPose, intr: &CameraIntrinsics) -> Mat4 {
    let r = pose.orientation.to_matrix();
    let p = pose.position;
    // world -> camera: R^T (x - p)
    let mut view = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            view[i][j] = r[j][i];
        }
        view[i][3] = -(r[0][i] * p.x + r[1][i] * p.y + r[2][i] * p.z);
    }
    view[3][3] = 1.0;

    let f = 1.0 / (intr.vertical_fov * 0.5).tan();
    let (n, fa) = (intr.near, intr.far);
    let proj = [
        [f / intr.aspect, 0.0, 0.0, 0.0],
        [0.0, f, 0.0, 0.0],
        [0.0, 0.0, (fa + n) / (n - fa), 2.0 * fa * n / (n - fa)],
        [0.0, 0.0, -1.0, 0.0],
    ];
    mat_mul(&proj, &view)
}

/// Frustum planes extracted from the rows of the view-projection matrix.
pub fn frustum_from_camera(pose: &CameraPose, intr: &CameraIntrinsics) -> Frustum {
    let m = view_projection(pose, intr);
    let combine = |row: usize, sign: f64| {
        Plane::from_coefficients(
            m[3][0] + sign * m[row][0],
            m[3][1] + sign * m[row][1],
            m[3][2] + sign * m[row][2],
            m[3][3] + sign * m[row][3],
        )
    };
    Frustum {
        planes: [
            combine(0, 1.0),
            combine(0, -1.0),
            combine(1, 1.0),
            combine(1, -1.0),
            combine(2, 1.0),
            combine(2, -1.0),
        ],
    }
}

/// Analytic corners of the view volume: near plane first, then far; within
/// each, bit 0 selects right and bit 1 selects top.
pub fn frustum_corners(pose: &CameraPose, intr: &CameraIntrinsics) -> [Vec3; 8] {
    let tan = (intr.vertical_fov * 0.5).tan();
    std::array::from_fn(|i| {
        let depth = if i < 4 { intr.near } else { intr.far };
        let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
        let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
        let local = Vec3::new(sx * depth * tan * intr.aspect, sy * depth * tan, -depth);
        pose.orientation.rotate(local) + pose.position
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Containment {
    Outside,
    Intersect,
    Inside,
}

/// Positive/negative-vertex test against each plane. Conservative: a box
/// overlapping the frustum is never `Outside`, though some boxes that miss
/// it near a corner come back as `Intersect`.
pub fn classify_aabb_frustum(b: &Aabb, f: &Frustum) -> Containment {
    let mut result = Containment::Inside;
    for plane in &f.planes {
        let n = plane.normal;
        let positive = Vec3::new(
            if n.x >= 0.0 { b.max.x } else { b.min.x },
            if n.y >= 0.0 { b.max.y } else { b.min.y },
            if n.z >= 0.0 { b.max.z } else { b.min.z },
        );
        if plane.signed_distance(positive) < 0.0 {
            return Containment::Outside;
        }
        let negative = Vec3::new(
            if n.x >= 0.0 { b.min.x } else { b.max.x },
            if n.y >= 0.0 { b.min.y } else { b.max.y },
            if n.z >= 0.0 { b.min.z } else { b.max.z },
        );
        if plane.signed_distance(negative) < 0.0 {
            result = Containment::Intersect;
        }
    }
    result
}

/// Slab test of the closed segment `[p, q]` against the closed box.
pub fn segment_intersects_aabb(p: Vec3, q: Vec3, b: &Aabb) -> bool {
    let d = q - p;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for axis in 0..3 {
        let (origin, dir, lo, hi) = (p[axis], d[axis], b.min[axis], b.max[axis]);
        if dir == 0.0 {
            if origin < lo || origin > hi {
                return false;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo - origin) / dir, (hi - origin) / dir);
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

/// Projected bounding-sphere radius as a fraction of half the viewport
/// height, clamped to 1.
pub fn screen_coverage(world_radius: f64, dist: f64, intr: &CameraIntrinsics) -> f64 {
    if world_radius <= 0.0 {
        return 0.0;
    }
    let denom = dist.max(intr.near) * (intr.vertical_fov * 0.5).tan();
    (world_radius / denom).min(1.0)
}
