use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use super::frame::{crc8, decode_frame, FrameSummary, FRAME_LEN};

pub const ACK_BYTE: u8 = 0x5A;
/// First byte of the reply to a frame the device could not decode.
pub const NAK_BYTE: u8 = 0x15;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("device unavailable at {addr}: {reason}")]
    Unavailable { addr: String, reason: String },
    #[error("device i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("device rejected frame (code {0})")]
    Nak(u8),
    #[error("bad acknowledgement {0:02x?}")]
    BadAck([u8; 2]),
}

/// Single serialized writer to a stimulator.
pub trait DeviceLink: Send {
    fn send(&mut self, frame: &[u8; FRAME_LEN]) -> Result<(), DeviceError>;
}

fn check_ack(frame: &[u8; FRAME_LEN], ack: [u8; 2]) -> Result<(), DeviceError> {
    match ack {
        [ACK_BYTE, c] if c == crc8(frame) => Ok(()),
        [NAK_BYTE, code] => Err(DeviceError::Nak(code)),
        other => Err(DeviceError::BadAck(other)),
    }
}

/// Byte-stream link over a local TCP socket.
pub struct TcpDeviceLink {
    stream: TcpStream,
}

impl TcpDeviceLink {
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, DeviceError> {
        let unavailable = |reason: String| DeviceError::Unavailable { addr: addr.to_string(), reason };
        let sock: SocketAddr = addr
            .to_socket_addrs()
            .map_err(|e| unavailable(e.to_string()))?
            .next()
            .ok_or_else(|| unavailable("no address".into()))?;
        let stream = TcpStream::connect_timeout(&sock, timeout).map_err(|e| unavailable(e.to_string()))?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        Ok(TcpDeviceLink { stream })
    }
}

impl DeviceLink for TcpDeviceLink {
    fn send(&mut self, frame: &[u8; FRAME_LEN]) -> Result<(), DeviceError> {
        self.stream.write_all(frame)?;
        let mut ack = [0u8; 2];
        self.stream.read_exact(&mut ack)?;
        check_ack(frame, ack)
    }
}

/// Reply code for a frame that failed to decode.
fn nak_code(err: &super::FrameError) -> u8 {
    use super::FrameError::*;
    match err {
        TruncatedFrame(_) => 1,
        BadSync(_) => 2,
        BadChecksum { .. } => 3,
        InvalidField(_) | Ems(_) => 4,
    }
}

/// Stand-in for the stimulator: decodes frames and acknowledges them.
#[derive(Debug, Clone, Default)]
pub struct SimulatedDevice {
    received: Arc<Mutex<Vec<FrameSummary>>>,
}

impl SimulatedDevice {
    pub fn new() -> Self {
        Self::default()
    }

    /// Frames decoded so far, shared across clones.
    pub fn received(&self) -> Vec<FrameSummary> {
        self.received.lock().expect("device log poisoned").clone()
    }

    pub fn handle(&self, frame: &[u8; FRAME_LEN]) -> [u8; 2] {
        match decode_frame(frame) {
            Ok(summary) => {
                self.received.lock().expect("device log poisoned").push(summary);
                [ACK_BYTE, crc8(frame)]
            }
            Err(e) => [NAK_BYTE, nak_code(&e)],
        }
    }

    /// Serves one connection at a time until the listener fails.
    pub fn serve(&self, listener: TcpListener) -> std::io::Result<()> {
        for conn in listener.incoming() {
            let mut stream = conn?;
            let mut frame = [0u8; FRAME_LEN];
            while stream.read_exact(&mut frame).is_ok() {
                tracing::debug!(?frame, "device frame");
                if stream.write_all(&self.handle(&frame)).is_err() {
                    break;
                }
            }
        }
        Ok(())
    }

    /// Binds `addr` and serves on a background thread. Returns the bound
    /// address, useful with port 0.
    pub fn spawn(&self, addr: &str) -> std::io::Result<SocketAddr> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let dev = self.clone();
        std::thread::spawn(move || {
            if let Err(e) = dev.serve(listener) {
                tracing::warn!("simulated device stopped: {e}");
            }
        });
        Ok(local)
    }
}

/// In-process link straight into a [`SimulatedDevice`].
#[derive(Debug, Clone, Default)]
pub struct LoopbackDevice {
    pub device: SimulatedDevice,
}

impl DeviceLink for LoopbackDevice {
    fn send(&mut self, frame: &[u8; FRAME_LEN]) -> Result<(), DeviceError> {
        check_ack(frame, self.device.handle(frame))
    }
}
