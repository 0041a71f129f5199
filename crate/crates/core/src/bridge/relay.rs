use super::protocol::{decode_frame, encode_frame, wall_clock_secs, Frame, LineReader};
use super::BridgeError;
use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

type Line = Arc<[u8]>;

struct Client {
    tx: Sender<Line>,
    stream: TcpStream,
}

#[derive(Default)]
struct Registry {
    next_id: u64,
    clients: HashMap<u64, Client>,
    topics: HashMap<String, BTreeSet<u64>>,
}

impl Registry {
    fn remove(&mut self, id: u64) {
        self.clients.remove(&id);
        self.topics.retain(|_, subs| {
            subs.remove(&id);
            !subs.is_empty()
        });
    }
}

/// A running relay. Dropping it stops the relay and closes every connection.
pub struct RelayHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    registry: Arc<Mutex<Registry>>,
    acceptor: Option<JoinHandle<()>>,
}

impl RelayHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn connection_count(&self) -> usize {
        self.registry.lock().unwrap().clients.len()
    }

    pub fn subscriber_count(&self, topic: &str) -> usize {
        self.registry.lock().unwrap().topics.get(topic).map_or(0, BTreeSet::len)
    }

    /// Blocks for the lifetime of the relay.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        let Some(acceptor) = self.acceptor.take() else { return };
        self.stop.store(true, Ordering::SeqCst);
        let mut wake = self.addr;
        if wake.ip().is_unspecified() {
            wake.set_ip(IpAddr::V4(Ipv4Addr::LOCALHOST));
        }
        // unblock accept(); failure means the listener is already gone
        let _ = TcpStream::connect(wake);
        let _ = acceptor.join();
        let streams: Vec<TcpStream> = {
            let reg = self.registry.lock().unwrap();
            reg.clients.values().filter_map(|c| c.stream.try_clone().ok()).collect()
        };
        for s in streams {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for RelayHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Binds `addr` and starts accepting clients on a background thread.
pub fn serve<A: ToSocketAddrs>(addr: A) -> Result<RelayHandle, BridgeError> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let registry = Arc::new(Mutex::new(Registry::default()));
    let acceptor = {
        let (stop, registry) = (stop.clone(), registry.clone());
        thread::Builder::new()
            .name("relay-accept".into())
            .spawn(move || accept_loop(listener, stop, registry))?
    };
    log::info!("relay listening on {addr}");
    Ok(RelayHandle { addr, stop, registry, acceptor: Some(acceptor) })
}

fn accept_loop(listener: TcpListener, stop: Arc<AtomicBool>, registry: Arc<Mutex<Registry>>) {
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match conn {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let _ = stream.set_nodelay(true);
        if let Err(e) = start_connection(stream, &registry) {
            log::warn!("could not start connection: {e}");
        }
    }
}

fn start_connection(stream: TcpStream, registry: &Arc<Mutex<Registry>>) -> std::io::Result<()> {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_else(|_| "?".into());
    let (tx, rx) = channel::<Line>();
    let id = {
        let mut reg = registry.lock().unwrap();
        let id = reg.next_id;
        reg.next_id += 1;
        reg.clients.insert(id, Client { tx: tx.clone(), stream: stream.try_clone()? });
        id
    };
    log::debug!("client {id} connected from {peer}");

    let mut out = stream.try_clone()?;
    thread::Builder::new().name(format!("relay-w{id}")).spawn(move || {
        for line in rx {
            if out.write_all(&line).is_err() {
                break;
            }
        }
        let _ = out.shutdown(Shutdown::Write);
    })?;

    let registry = registry.clone();
    thread::Builder::new().name(format!("relay-r{id}")).spawn(move || {
        if let Err(e) = read_loop(id, &stream, &tx, &registry) {
            log::info!("client {id} ({peer}) dropped: {e}");
            if let Ok(bytes) = encode_frame(&Frame::Error { reason: e.to_string() }) {
                let _ = tx.send(bytes.into());
            }
        }
        registry.lock().unwrap().remove(id);
        drop(tx);
        let _ = stream.shutdown(Shutdown::Read);
        log::debug!("client {id} disconnected");
    })?;
    Ok(())
}

fn read_loop(
    id: u64,
    stream: &TcpStream,
    tx: &Sender<Line>,
    registry: &Mutex<Registry>,
) -> Result<(), BridgeError> {
    let mut reader = LineReader::new(stream);
    let mut line = Vec::new();
    let mut last_seq: HashMap<String, u64> = HashMap::new();
    while reader.read_line(&mut line)? {
        match decode_frame(&line)? {
            Frame::Publish { topic, msg } => {
                if let Some(&prev) = last_seq.get(&topic) {
                    if msg.seq <= prev {
                        return Err(BridgeError::Malformed(format!(
                            "seq {} on {topic} does not follow {prev}",
                            msg.seq
                        )));
                    }
                }
                last_seq.insert(topic.clone(), msg.seq);
                let targets: Vec<Sender<Line>> = {
                    let reg = registry.lock().unwrap();
                    reg.topics
                        .get(&topic)
                        .into_iter()
                        .flatten()
                        .filter(|&&sub| sub != id)
                        .filter_map(|sub| reg.clients.get(sub).map(|c| c.tx.clone()))
                        .collect()
                };
                if !targets.is_empty() {
                    let shared: Line = line.as_slice().into();
                    for t in targets {
                        let _ = t.send(shared.clone());
                    }
                }
            }
            Frame::Subscribe { topic } => {
                registry.lock().unwrap().topics.entry(topic).or_default().insert(id);
            }
            Frame::Unsubscribe { topic } => {
                let mut reg = registry.lock().unwrap();
                if let Some(subs) = reg.topics.get_mut(&topic) {
                    subs.remove(&id);
                    if subs.is_empty() {
                        reg.topics.remove(&topic);
                    }
                }
            }
            Frame::Ping { t } => {
                let pong = encode_frame(&Frame::Pong { t, server_t: wall_clock_secs() })?;
                if tx.send(pong.into()).is_err() {
                    return Err(BridgeError::Closed);
                }
            }
            Frame::Advertise { topic, msg_type } => log::debug!("client {id} advertises {topic} ({msg_type})"),
            Frame::Pong { .. } => {}
            Frame::Error { reason } => log::warn!("client {id} reported: {reason}"),
        }
    }
    Ok(())
}
