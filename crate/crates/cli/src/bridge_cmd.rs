use crate::args::BridgeCommand;
use crate::commands::{data_err, read_input, read_json};
use crate::{Failure, Outcome};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};
use vrscene::bridge::{
    apply_frame_transform, measure_cycle, serve, wall_clock_secs, BridgeClient, BridgeError, FrameTransform,
    VehicleStateMsg, VEHICLE_STATE_TYPE,
};
use vrscene::framesim::CameraPath;

/// Half-width of the central difference used for path velocities.
const DIFF_STEP: f64 = 1e-3;

fn bridge_failure(e: BridgeError) -> Failure {
    if e.is_transport() {
        Failure::Transport(e.to_string())
    } else if matches!(e, BridgeError::BadCount) {
        Failure::Usage(e.to_string())
    } else {
        Failure::Data(e.to_string())
    }
}

pub fn run(cmd: BridgeCommand) -> Outcome {
    match cmd {
        BridgeCommand::Serve { listen } => {
            let relay = serve(listen.as_str()).map_err(|e| Failure::Transport(format!("{listen}: {e}")))?;
            println!("listening on {}", relay.local_addr());
            let _ = std::io::stdout().flush();
            relay.wait();
            Ok(())
        }
        BridgeCommand::Pub { addr, topic, path, rate, frame_id } => publish(&addr, &topic, &path, rate, &frame_id),
        BridgeCommand::Sub { addr, topic, transform, count, out } => {
            subscribe(&addr, &topic, transform.as_deref(), count, out.as_deref())
        }
        BridgeCommand::Measure { addr, n, budget_ms } => {
            let stats = measure_cycle(addr.as_str(), addr.as_str(), n, budget_ms).map_err(bridge_failure)?;
            println!("messages {}", stats.count);
            println!("p50      {:.3} ms", stats.p50_ms);
            println!("p95      {:.3} ms", stats.p95_ms);
            println!("max      {:.3} ms", stats.max_ms);
            println!("budget   {:.3} ms (p95)", stats.budget_ms);
            if stats.pass {
                println!("cycle time: pass");
                Ok(())
            } else {
                Err(Failure::Budget(format!("p95 {:.3} ms is not below {:.3} ms", stats.p95_ms, stats.budget_ms)))
            }
        }
    }
}

/// Vehicle state at path time `t`; velocities by central differences, the
/// angular one expressed in the path frame.
fn state_at(path: &CameraPath, t: f64, seq: u64, frame_id: &str) -> VehicleStateMsg {
    let pose = path.pose_at(t);
    let (t0, t1) = (t - DIFF_STEP, t + DIFF_STEP);
    let (a, b) = (path.pose_at(t0), path.pose_at(t1));
    let dt = 2.0 * DIFF_STEP;
    VehicleStateMsg {
        seq,
        stamp: wall_clock_secs(),
        frame_id: frame_id.to_string(),
        position: pose.position,
        rotation: pose.orientation,
        linear_vel: (b.position - a.position) / dt,
        angular_vel: (b.orientation * a.orientation.conjugate()).to_scaled_axis() / dt,
    }
}

fn publish(addr: &str, topic: &str, path_file: &Path, rate: f64, frame_id: &str) -> Outcome {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Failure::Usage("--rate must be positive".into()));
    }
    let (path, _) = CameraPath::from_json(&read_input(path_file)?).map_err(|e| data_err(path_file, e))?;
    path.validate().map_err(|e| data_err(path_file, e))?;
    let mut client = BridgeClient::connect(addr).map_err(bridge_failure)?;
    client.advertise(topic, VEHICLE_STATE_TYPE).map_err(bridge_failure)?;

    let count = path.frame_count(rate);
    let end = path.start() + path.duration();
    let wall_start = Instant::now();
    for k in 0..count {
        let due = Duration::from_secs_f64(k as f64 / rate);
        if let Some(wait) = due.checked_sub(wall_start.elapsed()) {
            thread::sleep(wait);
        }
        let t = (path.start() + k as f64 / rate).min(end);
        client.publish(topic, &state_at(&path, t, k as u64, frame_id)).map_err(bridge_failure)?;
    }
    client.sync().map_err(bridge_failure)?;
    println!("published {count} states on {topic} over {:.3} s", wall_start.elapsed().as_secs_f64());
    Ok(())
}

fn subscribe(addr: &str, topic: &str, transform: Option<&Path>, count: Option<usize>, out: Option<&Path>) -> Outcome {
    let tf: Option<FrameTransform> = transform.map(read_json).transpose()?;
    let mut sink = match out {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| data_err(p, e))?)),
        None => None,
    };
    let mut client = BridgeClient::connect(addr).map_err(bridge_failure)?;
    client.subscribe(topic).map_err(bridge_failure)?;
    println!("subscribed to {topic}");
    let _ = std::io::stdout().flush();

    let mut received = 0usize;
    while count.is_none_or(|c| received < c) {
        let Some((_, msg)) = client.recv_state().map_err(bridge_failure)? else { break };
        let msg = match &tf {
            Some(tf) => apply_frame_transform(&msg, tf).map_err(bridge_failure)?,
            None => msg,
        };
        let p = msg.position;
        println!("#{} {} [{:.3}, {:.3}, {:.3}] stamp {:.6}", msg.seq, msg.frame_id, p.x, p.y, p.z, msg.stamp);
        if let (Some(w), Some(path)) = (sink.as_mut(), out) {
            serde_json::to_writer(&mut *w, &msg).map_err(|e| data_err(path, e))?;
            w.write_all(b"\n").map_err(|e| data_err(path, e))?;
        }
        received += 1;
    }
    if let (Some(mut w), Some(path)) = (sink, out) {
        w.flush().map_err(|e| data_err(path, e))?;
    }
    println!("received {received} states");
    Ok(())
}
