//! Minimal 3D vector and unit quaternion math.
//!
//! Conventions used throughout the workspace:
//! - world up is +y, the cage is an axis-aligned box centered at the origin
//! - the canonical body frame is forward = +x, up = +y, lateral = +z
//! - positive yaw turns +x toward +z, positive pitch tilts the nose up

use serde::{Deserialize, Serialize};

pub const UP: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
pub const FORWARD: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
pub const LATERAL: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * o.z - self.z * o.y,
            y: self.z * o.x - self.x * o.z,
            z: self.x * o.y - self.y * o.x,
        }
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// Unit vector, or `None` when the norm is (numerically) zero.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n < 1e-12 {
            None
        } else {
            Some(self / n)
        }
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

impl std::ops::Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        self.scale(1.0 / s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        self.scale(-1.0)
    }
}

/// Hamilton unit quaternion, renormalized after every composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let axis = axis.normalized().unwrap_or(UP);
        let (s, c) = (angle * 0.5).sin_cos();
        UnitQuat { w: c, x: axis.x * s, y: axis.y * s, z: axis.z * s }.renormalized()
    }

    /// Yaw rotation about the world vertical; positive angle turns +x toward +z.
    pub fn yaw(angle: f64) -> Self {
        UnitQuat::from_axis_angle(UP, -angle)
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn renormalized(self) -> Self {
        let n = self.norm();
        UnitQuat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn conjugate(self) -> Self {
        UnitQuat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product `self * o` (apply `o` first, then `self`).
    pub fn mul(self, o: UnitQuat) -> UnitQuat {
        UnitQuat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
        .renormalized()
    }

    /// Rotate a vector: q v q*.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let uv = u.cross(v);
        let uuv = u.cross(uv);
        v + (uv * self.w + uuv) * 2.0
    }

    /// Rotate by the inverse: q* v q (world frame into body frame).
    pub fn rotate_inv(self, v: Vec3) -> Vec3 {
        self.conjugate().rotate(v)
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn yaw_quarter_turn_sends_x_to_z() {
        let q = UnitQuat::yaw(std::f64::consts::FRAC_PI_2);
        assert!(close(q.rotate(FORWARD), LATERAL, 1e-12));
    }

    #[test]
    fn yaw_then_pitch_matches_hand_oracle() {
        // Hand oracle: yaw pi/2 takes +x to +z; a following nose-up pitch of
        // pi/4 about the (yawed) lateral axis lifts the forward vector to
        // (0, sin(pi/4), cos(pi/4)).
        let q0 = UnitQuat::IDENTITY;
        let q1 = UnitQuat::yaw(std::f64::consts::FRAC_PI_2).mul(q0);
        let lateral = q1.rotate(LATERAL);
        let q2 = UnitQuat::from_axis_angle(lateral, std::f64::consts::FRAC_PI_4).mul(q1);
        let f = q2.rotate(FORWARD);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(f, Vec3::new(0.0, s, s), 1e-12), "got {f:?}");
    }

    #[test]
    fn rotate_inv_is_inverse() {
        let q = UnitQuat::from_axis_angle(Vec3::new(0.3, 1.0, -0.2), 0.7);
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert!(close(q.rotate_inv(q.rotate(v)), v, 1e-12));
    }

    #[test]
    fn composition_stays_normalized() {
        let mut q = UnitQuat::IDENTITY;
        for i in 0..10_000 {
            q = UnitQuat::yaw(0.1 + (i as f64) * 1e-4).mul(q);
        }
        assert!((q.norm() - 1.0).abs() < 1e-9);
    }
}
