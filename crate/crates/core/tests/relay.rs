use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::thread;
use std::time::{Duration, Instant};
use vrscene::bridge::{
    encode_frame, measure_cycle, serve, BridgeClient, BridgeError, Frame, VehicleStateMsg,
};
use vrscene::{Quat, Vec3};

fn state(seq: u64, frame_id: &str) -> VehicleStateMsg {
    VehicleStateMsg {
        seq,
        stamp: seq as f64 * 0.01,
        frame_id: frame_id.into(),
        position: Vec3::new(seq as f64, 0.5, 0.0),
        rotation: Quat::from_yaw(0.01 * seq as f64),
        linear_vel: Vec3::new(1.0, 0.0, 0.0),
        angular_vel: Vec3::ZERO,
    }
}

fn wait_until(mut cond: impl FnMut() -> bool) {
    let start = Instant::now();
    while !cond() {
        assert!(start.elapsed() < Duration::from_secs(5), "condition not reached");
        thread::sleep(Duration::from_millis(5));
    }
}

#[test]
fn subscriber_receives_published_bytes() {
    let relay = serve("127.0.0.1:0").unwrap();
    let mut sub = BridgeClient::connect(relay.local_addr()).unwrap();
    sub.subscribe("/ego").unwrap();

    // raw socket so the exact bytes on the wire are known
    let mut raw = TcpStream::connect(relay.local_addr()).unwrap();
    let line = encode_frame(&Frame::Publish { topic: "/ego".into(), msg: state(1, "map") }).unwrap();
    raw.write_all(&line).unwrap();

    let (bytes, frame) = sub.recv_raw().unwrap().unwrap();
    assert_eq!(bytes, line);
    assert_eq!(frame, Frame::Publish { topic: "/ego".into(), msg: state(1, "map") });
}

#[test]
fn fan_out_excludes_sender_and_drops_unsubscribed_topics() {
    let relay = serve("127.0.0.1:0").unwrap();
    let mut a = BridgeClient::connect(relay.local_addr()).unwrap();
    let mut b = BridgeClient::connect(relay.local_addr()).unwrap();
    let mut p = BridgeClient::connect(relay.local_addr()).unwrap();
    a.subscribe("/ego").unwrap();
    b.subscribe("/ego").unwrap();
    p.subscribe("/ego").unwrap();

    p.publish("/nobody", &state(1, "map")).unwrap();
    p.publish("/ego", &state(2, "map")).unwrap();
    p.sync().unwrap();
    a.sync().unwrap();
    b.sync().unwrap();

    for c in [&mut a, &mut b] {
        let (topic, msg) = c.recv_state().unwrap().unwrap();
        assert_eq!((topic.as_str(), msg.seq), ("/ego", 2));
        c.set_read_timeout(Some(Duration::from_millis(100))).unwrap();
        assert!(c.recv().is_err(), "exactly one delivery");
    }
    p.set_read_timeout(Some(Duration::from_millis(100))).unwrap();
    assert!(p.recv().is_err(), "sender must not receive its own publish");
}

#[test]
fn ping_answers_with_both_timestamps() {
    let relay = serve("127.0.0.1:0").unwrap();
    let mut c = BridgeClient::connect(relay.local_addr()).unwrap();
    c.send(&Frame::Ping { t: 1.5 }).unwrap();
    match c.recv().unwrap().unwrap() {
        Frame::Pong { t, server_t } => {
            assert_eq!(t, 1.5);
            assert!(server_t > 1.0e9);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn disconnect_and_unsubscribe_clean_registry() {
    let relay = serve("127.0.0.1:0").unwrap();
    let mut a = BridgeClient::connect(relay.local_addr()).unwrap();
    let mut b = BridgeClient::connect(relay.local_addr()).unwrap();
    a.subscribe("/ego").unwrap();
    b.subscribe("/ego").unwrap();
    assert_eq!(relay.subscriber_count("/ego"), 2);
    b.unsubscribe("/ego").unwrap();
    assert_eq!(relay.subscriber_count("/ego"), 1);
    drop(a);
    wait_until(|| relay.subscriber_count("/ego") == 0);
    drop(b);
    wait_until(|| relay.connection_count() == 0);
}

#[test]
fn protocol_error_closes_only_that_connection() {
    let relay = serve("127.0.0.1:0").unwrap();
    let mut good = BridgeClient::connect(relay.local_addr()).unwrap();
    good.subscribe("/ego").unwrap();

    let mut bad = TcpStream::connect(relay.local_addr()).unwrap();
    bad.write_all(b"{\"topic\":\"/ego\"}\n").unwrap();
    let mut reply = String::new();
    BufReader::new(&bad).read_line(&mut reply).unwrap();
    assert!(reply.contains("\"op\":\"error\"") && reply.contains("op"), "{reply}");

    // repeated seq is rejected too
    let mut dup = BridgeClient::connect(relay.local_addr()).unwrap();
    dup.publish("/ego", &state(5, "map")).unwrap();
    dup.publish("/ego", &state(5, "map")).unwrap();
    assert!(matches!(dup.recv(), Err(BridgeError::Server(_))));

    let mut p = BridgeClient::connect(relay.local_addr()).unwrap();
    p.publish("/ego", &state(9, "map")).unwrap();
    let (_, first) = good.recv_state().unwrap().unwrap();
    assert_eq!(first.seq, 5);
    let (_, second) = good.recv_state().unwrap().unwrap();
    assert_eq!(second.seq, 9);
    good.sync().unwrap();
}

#[test]
fn per_publisher_order_is_preserved() {
    const N: u64 = 1000;
    let relay = serve("127.0.0.1:0").unwrap();
    let subs: Vec<_> = (0..2)
        .map(|_| {
            let mut c = BridgeClient::connect(relay.local_addr()).unwrap();
            c.subscribe("/ego").unwrap();
            c.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
            c
        })
        .collect();
    let pubs: Vec<_> = (0..2)
        .map(|k| {
            let addr = relay.local_addr();
            thread::spawn(move || {
                let mut c = BridgeClient::connect(addr).unwrap();
                for seq in 0..N {
                    c.publish("/ego", &state(seq, &format!("pub{k}"))).unwrap();
                }
                c.sync().unwrap();
            })
        })
        .collect();
    let readers: Vec<_> = subs
        .into_iter()
        .map(|mut c| {
            thread::spawn(move || {
                let mut last: HashMap<String, u64> = HashMap::new();
                let mut seen = 0;
                while seen < 2 * N {
                    let (_, msg) = c.recv_state().unwrap().unwrap();
                    if let Some(prev) = last.insert(msg.frame_id.clone(), msg.seq) {
                        assert!(msg.seq > prev, "{} after {prev}", msg.seq);
                    }
                    seen += 1;
                }
                last
            })
        })
        .collect();
    for p in pubs {
        p.join().unwrap();
    }
    for r in readers {
        let last = r.join().unwrap();
        assert_eq!(last["pub0"], N - 1);
        assert_eq!(last["pub1"], N - 1);
    }
}

#[test]
fn loopback_cycle_within_budget() {
    let relay = serve("127.0.0.1:0").unwrap();
    let stats = measure_cycle(relay.local_addr(), relay.local_addr(), 200, 100.0).unwrap();
    assert_eq!(stats.count, 200);
    assert!(stats.p50_ms <= stats.p95_ms && stats.p95_ms <= stats.max_ms);
    assert!(stats.pass, "{stats:?}");
    let zero = measure_cycle(relay.local_addr(), relay.local_addr(), 5, 0.0).unwrap();
    assert!(!zero.pass);
    assert!(matches!(measure_cycle(relay.local_addr(), relay.local_addr(), 0, 100.0), Err(BridgeError::BadCount)));
}

#[test]
fn shutdown_closes_clients() {
    let relay = serve("127.0.0.1:0").unwrap();
    let mut c = BridgeClient::connect(relay.local_addr()).unwrap();
    c.sync().unwrap();
    relay.shutdown();
    c.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    assert!(matches!(c.recv(), Ok(None) | Err(BridgeError::Io(_))));
}
