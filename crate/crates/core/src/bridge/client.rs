use super::protocol::{decode_frame, encode_frame, wall_clock_secs, Frame, LineReader, VehicleStateMsg};
use super::BridgeError;
use std::collections::VecDeque;
use std::io::Write;
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

/// Receiving half of a connection.
pub struct FrameReader {
    lines: LineReader<TcpStream>,
    buf: Vec<u8>,
    pending: VecDeque<(Vec<u8>, Frame)>,
}

impl FrameReader {
    /// Next frame together with its raw line. `Ok(None)` on orderly close;
    /// an error frame from the relay becomes `BridgeError::Server`.
    pub fn recv_raw(&mut self) -> Result<Option<(Vec<u8>, Frame)>, BridgeError> {
        let item = match self.pending.pop_front() {
            Some(item) => item,
            None => {
                if !self.lines.read_line(&mut self.buf)? {
                    return Ok(None);
                }
                let frame = decode_frame(&self.buf)?;
                (self.buf.clone(), frame)
            }
        };
        if let Frame::Error { reason } = &item.1 {
            return Err(BridgeError::Server(reason.clone()));
        }
        Ok(Some(item))
    }

    pub fn recv(&mut self) -> Result<Option<Frame>, BridgeError> {
        Ok(self.recv_raw()?.map(|(_, f)| f))
    }

    /// Next published state, skipping control frames.
    pub fn recv_state(&mut self) -> Result<Option<(String, VehicleStateMsg)>, BridgeError> {
        while let Some(frame) = self.recv()? {
            if let Frame::Publish { topic, msg } = frame {
                return Ok(Some((topic, msg)));
            }
        }
        Ok(None)
    }

    pub fn set_read_timeout(&self, timeout: Option<Duration>) -> Result<(), BridgeError> {
        Ok(self.lines.get_ref().set_read_timeout(timeout)?)
    }
}

/// Sending half of a connection.
pub struct FrameWriter {
    stream: TcpStream,
}

impl FrameWriter {
    pub fn send(&mut self, frame: &Frame) -> Result<(), BridgeError> {
        self.stream.write_all(&encode_frame(frame)?)?;
        Ok(())
    }

    pub fn publish(&mut self, topic: &str, msg: &VehicleStateMsg) -> Result<(), BridgeError> {
        self.send(&Frame::Publish { topic: topic.to_string(), msg: msg.clone() })
    }
}

/// Blocking relay client. Use `into_split` to read and write from separate
/// threads.
pub struct BridgeClient {
    reader: FrameReader,
    writer: FrameWriter,
}

impl BridgeClient {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, BridgeError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = FrameReader { lines: LineReader::new(stream.try_clone()?), buf: Vec::new(), pending: VecDeque::new() };
        Ok(Self { reader, writer: FrameWriter { stream } })
    }

    pub fn send(&mut self, frame: &Frame) -> Result<(), BridgeError> {
        self.writer.send(frame)
    }

    pub fn advertise(&mut self, topic: &str, msg_type: &str) -> Result<(), BridgeError> {
        self.send(&Frame::Advertise { topic: topic.into(), msg_type: msg_type.into() })
    }

    /// Returns once the relay has registered the subscription.
    pub fn subscribe(&mut self, topic: &str) -> Result<(), BridgeError> {
        self.send(&Frame::Subscribe { topic: topic.into() })?;
        self.sync().map(|_| ())
    }

    pub fn unsubscribe(&mut self, topic: &str) -> Result<(), BridgeError> {
        self.send(&Frame::Unsubscribe { topic: topic.into() })?;
        self.sync().map(|_| ())
    }

    pub fn publish(&mut self, topic: &str, msg: &VehicleStateMsg) -> Result<(), BridgeError> {
        self.writer.publish(topic, msg)
    }

    /// Ping round trip in seconds. The relay handles a connection's frames in
    /// order, so everything sent earlier has been processed on return.
    /// Frames arriving meanwhile are kept for later `recv` calls.
    pub fn sync(&mut self) -> Result<f64, BridgeError> {
        let t = wall_clock_secs();
        self.send(&Frame::Ping { t })?;
        let mut held = Vec::new();
        let result = loop {
            if !self.reader.lines.read_line(&mut self.reader.buf)? {
                break Err(BridgeError::Closed);
            }
            match decode_frame(&self.reader.buf)? {
                Frame::Pong { t: echoed, .. } if echoed == t => break Ok(wall_clock_secs() - t),
                Frame::Error { reason } => break Err(BridgeError::Server(reason)),
                other => held.push((self.reader.buf.clone(), other)),
            }
        };
        self.reader.pending.extend(held);
        result
    }

    pub fn recv(&mut self) -> Result<Option<Frame>, BridgeError> {
        self.reader.recv()
    }

    pub fn recv_raw(&mut self) -> Result<Option<(Vec<u8>, Frame)>, BridgeError> {
        self.reader.recv_raw()
    }

    pub fn recv_state(&mut self) -> Result<Option<(String, VehicleStateMsg)>, BridgeError> {
        self.reader.recv_state()
    }

    pub fn set_read_timeout(&self, timeout: Option<Duration>) -> Result<(), BridgeError> {
        self.reader.set_read_timeout(timeout)
    }

    pub fn into_split(self) -> (FrameReader, FrameWriter) {
        (self.reader, self.writer)
    }
}
