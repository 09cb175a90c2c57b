//! Euler-angle conventions shared by the simulator and the task logic.
//!
//! Orientations are `(roll, pitch, yaw)` applied as `Rz(yaw) * Ry(pitch) * Rx(roll)`
//! and always reported wrapped to `(-pi, pi]`.

use std::f64::consts::{PI, TAU};

use glam::{DMat3, DVec3, EulerRot};

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

pub fn wrap_euler(e: DVec3) -> DVec3 {
    DVec3::new(wrap_angle(e.x), wrap_angle(e.y), wrap_angle(e.z))
}

/// Component-wise shortest-arc difference `a - b`, each in `(-pi, pi]`.
pub fn angular_difference(a: DVec3, b: DVec3) -> DVec3 {
    DVec3::new(
        wrap_angle(a.x - b.x),
        wrap_angle(a.y - b.y),
        wrap_angle(a.z - b.z),
    )
}

pub fn rotation(euler: DVec3) -> DMat3 {
    DMat3::from_euler(EulerRot::ZYX, euler.z, euler.y, euler.x)
}

/// Unit axis the gripper holds the object along: the rotated `+z`.
pub fn grasp_axis(euler: DVec3) -> DVec3 {
    rotation(euler) * DVec3::Z
}

/// Axis-aligned box `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Aabb {
    pub min: DVec3,
    pub max: DVec3,
}

impl Aabb {
    pub fn contains(&self, p: DVec3) -> bool {
        p.cmpge(self.min).all() && p.cmple(self.max).all()
    }

    pub fn clamp(&self, p: DVec3) -> DVec3 {
        p.clamp(self.min, self.max)
    }

    pub fn center(&self) -> DVec3 {
        (self.min + self.max) * 0.5
    }

    pub fn grow(&self, margin: f64) -> Aabb {
        Aabb {
            min: self.min - DVec3::splat(margin),
            max: self.max + DVec3::splat(margin),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.1 + TAU) - 0.1).abs() < 1e-12);
        for i in -100..100 {
            let w = wrap_angle(i as f64 * 0.37);
            assert!(w > -PI && w <= PI);
        }
    }

    #[test]
    fn shortest_arc() {
        let d = angular_difference(DVec3::new(PI - 0.01, 0.0, 0.0), DVec3::new(-PI + 0.01, 0.0, 0.0));
        assert!((d.x + 0.02).abs() < 1e-12);
    }

    #[test]
    fn rotation_convention() {
        // Pure roll tilts +z toward -y.
        let axis = grasp_axis(DVec3::new(0.3, 0.0, 0.0));
        assert!((axis - DVec3::new(0.0, -(0.3f64).sin(), (0.3f64).cos())).length() < 1e-12);
        // Yaw alone leaves +z unchanged.
        assert!((grasp_axis(DVec3::new(0.0, 0.0, 1.2)) - DVec3::Z).length() < 1e-12);
        // Pitch then yaw: (sin p cos y, sin p sin y, cos p) for zero roll.
        let (p, y) = (0.4f64, 0.9f64);
        let expect = DVec3::new(p.sin() * y.cos(), p.sin() * y.sin(), p.cos());
        assert!((grasp_axis(DVec3::new(0.0, p, y)) - expect).length() < 1e-12);
    }

    #[test]
    fn box_clamp() {
        let b = Aabb {
            min: DVec3::ZERO,
            max: DVec3::ONE,
        };
        assert_eq!(b.clamp(DVec3::new(2.0, -1.0, 0.5)), DVec3::new(1.0, 0.0, 0.5));
        assert!(b.contains(DVec3::splat(0.5)));
        assert!(!b.contains(DVec3::splat(1.5)));
    }
}
