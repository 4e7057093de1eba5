//! Pinhole camera model used for silhouette rendering.

use crate::vec::Vec3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub vertical_fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraSpec {
    fn default() -> Self {
        // outside the -z cage wall, looking at the cage center
        CameraSpec {
            position: Vec3::new(0.0, 0.0, -16.0),
            look_at: Vec3::ZERO,
            up: Vec3::new(0.0, 1.0, 0.0),
            vertical_fov_deg: 70.0,
            width: 64,
            height: 64,
        }
    }
}

/// Orthonormal camera basis: forward into the scene, right, true up.
#[derive(Debug, Clone, Copy)]
pub struct CameraBasis {
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraSpec {
    pub fn validate(&self) {
        assert!(
            self.vertical_fov_deg > 0.0 && self.vertical_fov_deg < 180.0,
            "fov must be in (0, 180)"
        );
        assert!(self.width >= 16 && self.height >= 16, "resolution must be at least 16x16");
    }

    pub fn basis(&self) -> CameraBasis {
        self.validate();
        let forward = (self.look_at - self.position)
            .normalized()
            .expect("camera position must differ from look_at");
        let right = self
            .up
            .cross(forward)
            .normalized()
            .expect("up must not be parallel to the view direction");
        let up = forward.cross(right);
        let fy = (self.height as f64 * 0.5) / (self.vertical_fov_deg.to_radians() * 0.5).tan();
        CameraBasis {
            forward,
            right,
            up,
            fx: fy, // square pixels
            fy,
            cx: self.width as f64 * 0.5,
            cy: self.height as f64 * 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelProjection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Project a world point; `None` marks points at or behind the camera plane.
pub fn project(camera: &CameraSpec, point: Vec3) -> Option<PixelProjection> {
    let b = camera.basis();
    project_with_basis(camera, &b, point)
}

pub fn project_with_basis(
    camera: &CameraSpec,
    b: &CameraBasis,
    point: Vec3,
) -> Option<PixelProjection> {
    let d = point - camera.position;
    let depth = d.dot(b.forward);
    if depth <= 1e-9 {
        return None;
    }
    let u = b.cx + b.fx * (d.dot(b.right) / depth);
    let v = b.cy - b.fy * (d.dot(b.up) / depth);
    Some(PixelProjection { u, v, depth })
}
