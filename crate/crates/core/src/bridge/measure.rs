use super::protocol::{wall_clock_secs, VehicleStateMsg, VEHICLE_STATE_TYPE};
use super::{BridgeClient, BridgeError};
use crate::math::{Quat, Vec3};
use serde::{Deserialize, Serialize};
use std::net::ToSocketAddrs;
use std::thread;
use std::time::Duration;

pub const DEFAULT_BUDGET_MS: f64 = 100.0;

/// Gap between probe messages, so the probe measures latency, not queueing.
const PROBE_INTERVAL: Duration = Duration::from_micros(500);
const RECEIVE_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub count: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub budget_ms: f64,
    pub pass: bool,
}

impl CycleStats {
    /// Nearest-rank percentiles over `latencies_ms`; `None` when empty.
    pub fn from_latencies(latencies_ms: &[f64], budget_ms: f64) -> Option<CycleStats> {
        if latencies_ms.is_empty() {
            return None;
        }
        let mut sorted = latencies_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = |p: f64| sorted[((p / 100.0 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
        let p95 = rank(95.0);
        Some(CycleStats {
            count: sorted.len(),
            p50_ms: rank(50.0),
            p95_ms: p95,
            max_ms: sorted[sorted.len() - 1],
            budget_ms,
            pass: p95 < budget_ms,
        })
    }
}

/// Publishes `n` wall-clock-stamped states through the relay at
/// `publisher_addr` and times their arrival at a subscriber connected to
/// `subscriber_addr`. Both ends read the same host clock.
pub fn measure_cycle<A: ToSocketAddrs, B: ToSocketAddrs>(
    publisher_addr: A,
    subscriber_addr: B,
    n: usize,
    budget_ms: f64,
) -> Result<CycleStats, BridgeError> {
    if n < 1 {
        return Err(BridgeError::BadCount);
    }
    let topic = format!("/probe/{}/{}", std::process::id(), wall_clock_secs().to_bits());
    let mut sub = BridgeClient::connect(subscriber_addr)?;
    sub.subscribe(&topic)?;
    sub.set_read_timeout(Some(RECEIVE_TIMEOUT))?;
    let mut publisher = BridgeClient::connect(publisher_addr)?;
    publisher.advertise(&topic, VEHICLE_STATE_TYPE)?;

    let sender = {
        let topic = topic.clone();
        thread::spawn(move || -> Result<(), BridgeError> {
            for seq in 0..n as u64 {
                let msg = VehicleStateMsg {
                    seq,
                    stamp: wall_clock_secs(),
                    frame_id: "probe".into(),
                    position: Vec3::ZERO,
                    rotation: Quat::IDENTITY,
                    linear_vel: Vec3::ZERO,
                    angular_vel: Vec3::ZERO,
                };
                publisher.publish(&topic, &msg)?;
                thread::sleep(PROBE_INTERVAL);
            }
            publisher.sync().map(|_| ())
        })
    };

    let mut latencies = Vec::with_capacity(n);
    let received = (|| {
        while latencies.len() < n {
            match sub.recv_state()? {
                Some((t, msg)) if t == topic => latencies.push((wall_clock_secs() - msg.stamp) * 1000.0),
                Some(_) => {}
                None => return Err(BridgeError::Closed),
            }
        }
        Ok(())
    })();
    let sent = sender.join().unwrap_or(Err(BridgeError::Closed));
    received?;
    sent?;
    log::info!("cycle probe: {n} messages over {topic}");
    Ok(CycleStats::from_latencies(&latencies, budget_ms).expect("n >= 1"))
}
