use super::{BridgeError, VehicleStateMsg};
use crate::math::{Quat, Vec3};
use serde::{Deserialize, Serialize};

/// Rigid map from `from_frame` coordinates into `to_frame`: `p' = R p + t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTransform {
    pub from_frame: String,
    pub to_frame: String,
    pub translation: Vec3,
    pub rotation: Quat,
}

impl FrameTransform {
    pub fn inverse(&self) -> FrameTransform {
        let inv = self.rotation.conjugate();
        FrameTransform {
            from_frame: self.to_frame.clone(),
            to_frame: self.from_frame.clone(),
            translation: -inv.rotate(self.translation),
            rotation: inv,
        }
    }
}

pub fn apply_frame_transform(msg: &VehicleStateMsg, tf: &FrameTransform) -> Result<VehicleStateMsg, BridgeError> {
    if msg.frame_id != tf.from_frame {
        return Err(BridgeError::FrameMismatch { expected: tf.from_frame.clone(), found: msg.frame_id.clone() });
    }
    if !tf.rotation.is_unit() {
        return Err(BridgeError::RotationNotUnit);
    }
    let r = tf.rotation;
    Ok(VehicleStateMsg {
        frame_id: tf.to_frame.clone(),
        position: r.rotate(msg.position) + tf.translation,
        rotation: (r * msg.rotation).normalized(),
        linear_vel: r.rotate(msg.linear_vel),
        angular_vel: r.rotate(msg.angular_vel),
        ..msg.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn msg() -> VehicleStateMsg {
        VehicleStateMsg {
            seq: 3,
            stamp: 0.5,
            frame_id: "sim".into(),
            position: Vec3::new(4.0, 5.0, 0.5),
            rotation: Quat::from_yaw(0.7),
            linear_vel: Vec3::X,
            angular_vel: Vec3::new(0.0, 0.1, 0.3),
        }
    }

    fn tf(translation: Vec3, rotation: Quat) -> FrameTransform {
        FrameTransform { from_frame: "sim".into(), to_frame: "map".into(), translation, rotation }
    }

    fn close(a: Vec3, b: Vec3) -> bool {
        a.distance(b) <= 1e-9
    }

    #[test]
    fn identity_only_renames() {
        let out = apply_frame_transform(&msg(), &tf(Vec3::ZERO, Quat::IDENTITY)).unwrap();
        assert_eq!(out, VehicleStateMsg { frame_id: "map".into(), ..msg() });
    }

    #[test]
    fn translation_leaves_velocities() {
        let out = apply_frame_transform(&msg(), &tf(Vec3::new(10.0, 0.0, 0.0), Quat::IDENTITY)).unwrap();
        assert_eq!(out.position, Vec3::new(14.0, 5.0, 0.5));
        assert_eq!(out.linear_vel, msg().linear_vel);
        assert_eq!(out.angular_vel, msg().angular_vel);
    }

    #[test]
    fn yaw_rotates_velocity() {
        let out = apply_frame_transform(&msg(), &tf(Vec3::ZERO, Quat::from_yaw(FRAC_PI_2))).unwrap();
        assert!(close(out.linear_vel, Vec3::Y));
        assert!(close(out.position, Vec3::new(-5.0, 4.0, 0.5)));
    }

    #[test]
    fn inverse_restores_message() {
        let t = tf(Vec3::new(-3.0, 2.0, 7.0), Quat::from_axis_angle(Vec3::new(1.0, 2.0, 3.0).normalized(), 1.1));
        let there = apply_frame_transform(&msg(), &t).unwrap();
        let back = apply_frame_transform(&there, &t.inverse()).unwrap();
        assert_eq!(back.frame_id, "sim");
        assert!(close(back.position, msg().position));
        assert!(close(back.linear_vel, msg().linear_vel));
        assert!(close(back.angular_vel, msg().angular_vel));
        assert!((back.rotation.dot(msg().rotation).abs() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn wrong_frame_rejected() {
        let mut m = msg();
        m.frame_id = "other".into();
        assert!(matches!(
            apply_frame_transform(&m, &tf(Vec3::ZERO, Quat::IDENTITY)),
            Err(BridgeError::FrameMismatch { .. })
        ));
    }
}
