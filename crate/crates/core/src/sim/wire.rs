//! Newline-delimited JSON frames and the two transports that carry them.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControlInput, NUM_SENSORS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum WireMessage {
    Sensor { t: u64, strain: Vec<f64> },
    Control { t: u64, load_factor: ControlInput },
    Shutdown,
}

impl WireMessage {
    pub fn validate(&self) -> Result<()> {
        if let WireMessage::Sensor { strain, .. } = self {
            if strain.len() != NUM_SENSORS {
                return Err(Error::Frame(format!("sensor frame carries {} strains, expected {NUM_SENSORS}", strain.len())));
            }
            if strain.iter().any(|s| !s.is_finite()) {
                return Err(Error::Frame("sensor frame carries non-finite strain".into()));
            }
        }
        Ok(())
    }

    /// One JSON object terminated by `\n`.
    pub fn encode(&self) -> Result<String> {
        self.validate()?;
        let mut line = serde_json::to_string(self)?;
        line.push('\n');
        Ok(line)
    }

    /// Parses exactly one frame. A frame without its terminating newline is
    /// truncated and rejected.
    pub fn decode(frame: &str) -> Result<Self> {
        let body = frame.strip_suffix('\n').ok_or_else(|| Error::Frame("truncated frame".into()))?;
        if body.contains('\n') {
            return Err(Error::Frame("more than one frame".into()));
        }
        let msg: WireMessage = serde_json::from_str(body).map_err(|e| Error::Frame(format!("malformed frame: {e}")))?;
        msg.validate()?;
        Ok(msg)
    }
}

/// Encode then decode.
pub fn transport_roundtrip(msg: &WireMessage) -> Result<WireMessage> {
    WireMessage::decode(&msg.encode()?)
}

/// A bidirectional FIFO connection between the two endpoints.
pub trait Connection: Send {
    fn send_frame(&mut self, frame: &str) -> Result<()>;
    /// Next complete frame including its newline; `None` once the peer has gone.
    fn recv_frame(&mut self) -> Result<Option<String>>;

    fn send(&mut self, msg: &WireMessage) -> Result<()> {
        self.send_frame(&msg.encode()?)
    }

    /// Receives and decodes; a closed peer or a bad frame is an error.
    fn recv(&mut self) -> Result<WireMessage> {
        match self.recv_frame()? {
            Some(frame) => WireMessage::decode(&frame),
            None => Err(Error::Transport("peer closed the connection".into())),
        }
    }
}

/// In-process queue pair.
pub struct ChannelConnection {
    tx: mpsc::Sender<String>,
    rx: mpsc::Receiver<String>,
}

pub fn channel_pair() -> (ChannelConnection, ChannelConnection) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (ChannelConnection { tx: a_tx, rx: a_rx }, ChannelConnection { tx: b_tx, rx: b_rx })
}

impl Connection for ChannelConnection {
    fn send_frame(&mut self, frame: &str) -> Result<()> {
        self.tx.send(frame.to_owned()).map_err(|_| Error::Transport("peer closed the queue".into()))
    }

    fn recv_frame(&mut self) -> Result<Option<String>> {
        Ok(self.rx.recv().ok())
    }
}

/// Local stream socket.
pub struct StreamConnection {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl StreamConnection {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(StreamConnection { reader, writer: BufWriter::new(stream) })
    }
}

impl Connection for StreamConnection {
    fn send_frame(&mut self, frame: &str) -> Result<()> {
        self.writer.write_all(frame.as_bytes()).map_err(|e| Error::Transport(e.to_string()))?;
        self.writer.flush().map_err(|e| Error::Transport(e.to_string()))
    }

    fn recv_frame(&mut self) -> Result<Option<String>> {
        let mut line = String::new();
        let n = self.reader.read_line(&mut line).map_err(|e| Error::Transport(e.to_string()))?;
        Ok((n > 0).then_some(line))
    }
}

/// Loopback socket pair: `(listener side, connecting side)`.
pub fn socket_pair() -> Result<(StreamConnection, StreamConnection)> {
    let listener = TcpListener::bind(("127.0.0.1", 0)).map_err(|e| Error::Transport(format!("bind failed: {e}")))?;
    let addr = listener.local_addr()?;
    let client = TcpStream::connect(addr).map_err(|e| Error::Transport(format!("connect failed: {e}")))?;
    let (server, _) = listener.accept().map_err(|e| Error::Transport(format!("accept failed: {e}")))?;
    Ok((StreamConnection::new(server)?, StreamConnection::new(client)?))
}
