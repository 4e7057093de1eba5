//! Binary silhouette rendering of the school.
//!
//! Each alive agent is drawn as a filled screen-space ellipse: the major axis
//! follows the projected forward direction, the minor axis the projected body
//! width. Frames are binary unions with no depth buffer.

use crate::camera::{CameraSpec, project_with_basis};
use crate::sim::EnvState;
use serde::{Deserialize, Serialize};

/// Body proxy dimensions, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyProxy {
    pub length: f64,
    pub width: f64,
}

impl Default for BodyProxy {
    fn default() -> Self {
        BodyProxy { length: 0.4, width: 0.12 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SilhouetteFrame {
    pub width: usize,
    pub height: usize,
    /// Row-major occupancy, one byte per pixel, values 0 or 1.
    pub bits: Vec<u8>,
}

impl SilhouetteFrame {
    pub fn zeros(width: usize, height: usize) -> Self {
        SilhouetteFrame { width, height, bits: vec![0; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.bits[y * self.width + x]
    }

    fn set(&mut self, x: i64, y: i64) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.bits[y as usize * self.width + x as usize] = 1;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

fn fill_ellipse(frame: &mut SilhouetteFrame, cu: f64, cv: f64, axis_u: f64, axis_v: f64, a: f64, b: f64) {
    let reach = a.max(b) + 1.0;
    let x0 = (cu - reach).floor() as i64;
    let x1 = (cu + reach).ceil() as i64;
    let y0 = (cv - reach).floor() as i64;
    let y1 = (cv + reach).ceil() as i64;
    for y in y0..=y1 {
        for x in x0..=x1 {
            // sample at the pixel center
            let du = (x as f64 + 0.5) - cu;
            let dv = (y as f64 + 0.5) - cv;
            let major = du * axis_u + dv * axis_v;
            let minor = -du * axis_v + dv * axis_u;
            if (major / a).powi(2) + (minor / b).powi(2) <= 1.0 {
                frame.set(x, y);
            }
        }
    }
    // tiny bodies must still register at least their center pixel
    frame.set(cu.floor() as i64, cv.floor() as i64);
}

pub fn rasterize_silhouettes(env: &EnvState, camera: &CameraSpec, body: &BodyProxy) -> SilhouetteFrame {
    let basis = camera.basis();
    let mut frame = SilhouetteFrame::zeros(camera.width, camera.height);
    for agent in env.agents.iter().filter(|a| a.alive) {
        let Some(center) = project_with_basis(camera, &basis, agent.position) else {
            continue;
        };
        if center.u < -2.0
            || center.v < -2.0
            || center.u > camera.width as f64 + 2.0
            || center.v > camera.height as f64 + 2.0
        {
            continue;
        }
        let head = project_with_basis(camera, &basis, agent.position + agent.forward * (body.length * 0.5));
        let tail = project_with_basis(camera, &basis, agent.position - agent.forward * (body.length * 0.5));

        let half_width_px = (basis.fx * (body.width * 0.5) / center.depth).max(0.5);
        let (axis_u, axis_v, half_len_px) = match (head, tail) {
            (Some(h), Some(t)) => {
                let du = (h.u - t.u) * 0.5;
                let dv = (h.v - t.v) * 0.5;
                let len = (du * du + dv * dv).sqrt();
                if len > 1e-9 {
                    (du / len, dv / len, len.max(half_width_px))
                } else {
                    (1.0, 0.0, half_width_px)
                }
            }
            // body straddles the camera plane; draw the circular fallback
            _ => (1.0, 0.0, half_width_px),
        };
        fill_ellipse(&mut frame, center.u, center.v, axis_u, axis_v, half_len_px, half_width_px);
    }
    frame
}
