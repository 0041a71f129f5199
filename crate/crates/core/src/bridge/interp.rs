use super::{BridgeError, VehicleStateMsg};
use crate::math::Quat;
use std::collections::VecDeque;

pub const DEFAULT_MAX_EXTRAPOLATION_SECS: f64 = 0.2;

/// Bounded, stamp-ordered history of one vehicle's states.
#[derive(Clone, Debug)]
pub struct InterpBuffer {
    capacity: usize,
    max_extrapolation_secs: f64,
    samples: VecDeque<VehicleStateMsg>,
}

impl InterpBuffer {
    /// `capacity` is raised to 2 if smaller.
    pub fn new(capacity: usize) -> Self {
        Self::with_extrapolation(capacity, DEFAULT_MAX_EXTRAPOLATION_SECS)
    }

    pub fn with_extrapolation(capacity: usize, max_extrapolation_secs: f64) -> Self {
        let capacity = capacity.max(2);
        Self {
            capacity,
            max_extrapolation_secs: max_extrapolation_secs.max(0.0),
            samples: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &VehicleStateMsg> {
        self.samples.iter()
    }

    /// Inserts in stamp order; an equal stamp replaces the stored sample.
    /// When full, the oldest sample is evicted.
    pub fn push(&mut self, msg: VehicleStateMsg) {
        let at = self.samples.partition_point(|s| s.stamp < msg.stamp);
        if self.samples.get(at).is_some_and(|s| s.stamp == msg.stamp) {
            self.samples[at] = msg;
            return;
        }
        if self.samples.len() == self.capacity {
            if at == 0 {
                return;
            }
            self.samples.pop_front();
            self.samples.insert(at - 1, msg);
        } else {
            self.samples.insert(at, msg);
        }
    }

    /// Interpolates between bracketing samples, dead-reckons past the newest
    /// one for at most the extrapolation cap, and clamps before the oldest.
    pub fn pose_at(&self, t: f64) -> Result<VehicleStateMsg, BridgeError> {
        let (first, last) = match (self.samples.front(), self.samples.back()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(BridgeError::EmptyBuffer),
        };
        if t <= first.stamp {
            return Ok(first.clone());
        }
        if t >= last.stamp {
            let dt = (t - last.stamp).min(self.max_extrapolation_secs);
            if dt == 0.0 {
                return Ok(last.clone());
            }
            let turn = Quat::from_scaled_axis(last.angular_vel * dt);
            return Ok(VehicleStateMsg {
                stamp: last.stamp + dt,
                position: last.position + last.linear_vel * dt,
                rotation: (turn * last.rotation).normalized(),
                ..last.clone()
            });
        }
        let hi = self.samples.partition_point(|s| s.stamp <= t);
        let (a, b) = (&self.samples[hi - 1], &self.samples[hi]);
        if a.stamp == t {
            return Ok(a.clone());
        }
        let u = (t - a.stamp) / (b.stamp - a.stamp);
        Ok(VehicleStateMsg {
            stamp: t,
            position: a.position.lerp(b.position, u),
            rotation: a.rotation.slerp(b.rotation, u),
            linear_vel: a.linear_vel.lerp(b.linear_vel, u),
            angular_vel: a.angular_vel.lerp(b.angular_vel, u),
            ..a.clone()
        })
    }
}
