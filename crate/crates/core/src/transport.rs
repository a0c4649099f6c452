//! Full-duplex frame transport between the dApp and the xApp.
//!
//! Both implementations present the same [`Connection`]: whole frames, in
//! order, with a bounded outbox. When the outbox is full, a telemetry frame
//! evicts the oldest queued telemetry frame; control frames are never
//! evicted and get [`TransportError::Backpressure`] instead.
//!
//! TCP frames are prefixed with a 4-byte big-endian length. A reader and a
//! writer thread per connection move frames between the socket and the
//! in-memory queues.

use std::collections::{HashMap, VecDeque};
use std::io::{ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::str::FromStr;
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex, MutexGuard, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_OUTBOX_FRAMES: usize = 1024;

/// Largest frame accepted off the wire.
pub const MAX_FRAME_LEN: usize = 16 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("peer disconnected")]
    Disconnected,
    #[error("outbox full")]
    Backpressure,
    #[error("timed out")]
    Timeout,
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),
    #[error("frame of {0} bytes exceeds limit")]
    FrameTooLarge(usize),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    InProcess,
    Tcp,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub kind: EndpointKind,
    /// Channel name for in-process, `host:port` for TCP.
    pub address: String,
}

impl Endpoint {
    pub fn in_process(name: impl Into<String>) -> Self {
        Self {
            kind: EndpointKind::InProcess,
            address: name.into(),
        }
    }

    pub fn tcp(address: impl Into<String>) -> Result<Self, TransportError> {
        let address = address.into();
        let port = address
            .rsplit_once(':')
            .and_then(|(_, p)| p.parse::<u32>().ok())
            .ok_or_else(|| TransportError::InvalidEndpoint(format!("{address}: missing port")))?;
        if !(1..=65535).contains(&port) {
            return Err(TransportError::InvalidEndpoint(format!(
                "{address}: port outside [1, 65535]"
            )));
        }
        Ok(Self {
            kind: EndpointKind::Tcp,
            address,
        })
    }
}

impl FromStr for Endpoint {
    type Err = TransportError;

    /// `inproc://name` or `tcp://host:port`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(name) = s.strip_prefix("inproc://") {
            if name.is_empty() {
                return Err(TransportError::InvalidEndpoint(s.to_string()));
            }
            Ok(Self::in_process(name))
        } else if let Some(addr) = s.strip_prefix("tcp://") {
            Self::tcp(addr)
        } else {
            Err(TransportError::InvalidEndpoint(s.to_string()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameClass {
    /// May be evicted under backpressure.
    Telemetry,
    /// Never evicted.
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Receipt {
    /// An older telemetry frame was evicted to make room.
    pub evicted_telemetry: bool,
}

#[derive(Debug)]
struct QueueState {
    frames: VecDeque<(FrameClass, Vec<u8>)>,
    closed: bool,
    evicted: u64,
    capacity: usize,
}

#[derive(Debug)]
struct FrameQueue {
    state: Mutex<QueueState>,
    changed: Condvar,
}

impl FrameQueue {
    fn new(capacity: usize) -> Arc<Self> {
        Arc::new(Self {
            state: Mutex::new(QueueState {
                frames: VecDeque::new(),
                closed: false,
                evicted: 0,
                capacity: capacity.max(1),
            }),
            changed: Condvar::new(),
        })
    }

    fn lock(&self) -> MutexGuard<'_, QueueState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn push(&self, class: FrameClass, frame: Vec<u8>) -> Result<Receipt, TransportError> {
        let mut q = self.lock();
        if q.closed {
            return Err(TransportError::Disconnected);
        }
        let mut receipt = Receipt::default();
        if q.frames.len() >= q.capacity {
            if class == FrameClass::Control {
                return Err(TransportError::Backpressure);
            }
            let oldest = q
                .frames
                .iter()
                .position(|(c, _)| *c == FrameClass::Telemetry)
                .ok_or(TransportError::Backpressure)?;
            q.frames.remove(oldest);
            q.evicted += 1;
            receipt.evicted_telemetry = true;
        }
        q.frames.push_back((class, frame));
        drop(q);
        self.changed.notify_all();
        Ok(receipt)
    }

    fn push_until(
        &self,
        class: FrameClass,
        frame: Vec<u8>,
        deadline: Instant,
    ) -> Result<Receipt, TransportError> {
        let mut q = self.lock();
        loop {
            if q.closed {
                return Err(TransportError::Disconnected);
            }
            if q.frames.len() < q.capacity || class == FrameClass::Telemetry {
                drop(q);
                return self.push(class, frame);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(TransportError::Timeout);
            }
            q = self
                .changed
                .wait_timeout(q, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    /// Pops the next frame, draining queued frames even after close.
    fn pop_until(&self, deadline: Option<Instant>) -> Result<Vec<u8>, TransportError> {
        let mut q = self.lock();
        loop {
            if let Some((_, frame)) = q.frames.pop_front() {
                drop(q);
                self.changed.notify_all();
                return Ok(frame);
            }
            if q.closed {
                return Err(TransportError::Disconnected);
            }
            match deadline {
                None => {
                    q = self.changed.wait(q).unwrap_or_else(|e| e.into_inner());
                }
                Some(deadline) => {
                    let now = Instant::now();
                    if now >= deadline {
                        return Err(TransportError::Timeout);
                    }
                    q = self
                        .changed
                        .wait_timeout(q, deadline - now)
                        .unwrap_or_else(|e| e.into_inner())
                        .0;
                }
            }
        }
    }

    /// Pops everything queued, blocking until at least one frame or close.
    fn drain_blocking(&self) -> Option<Vec<Vec<u8>>> {
        let mut q = self.lock();
        loop {
            if !q.frames.is_empty() {
                let out = q.frames.drain(..).map(|(_, f)| f).collect();
                drop(q);
                self.changed.notify_all();
                return Some(out);
            }
            if q.closed {
                return None;
            }
            q = self.changed.wait(q).unwrap_or_else(|e| e.into_inner());
        }
    }

    fn close(&self) {
        self.lock().closed = true;
        self.changed.notify_all();
    }

    fn is_closed(&self) -> bool {
        self.lock().closed
    }

    fn evicted(&self) -> u64 {
        self.lock().evicted
    }
}

/// One side of a full-duplex connection. Transferable between threads, but
/// owned by one sender and one receiver at a time.
#[derive(Debug)]
pub struct Connection {
    outbox: Arc<FrameQueue>,
    inbox: Arc<FrameQueue>,
    kind: EndpointKind,
    /// TCP only: lets drop close the socket if the writer is stuck.
    stream: Option<TcpStream>,
}

impl Connection {
    /// Connected in-process pair with the default outbox bound.
    pub fn pair() -> (Connection, Connection) {
        Self::pair_with_capacity(DEFAULT_OUTBOX_FRAMES)
    }

    pub fn pair_with_capacity(capacity: usize) -> (Connection, Connection) {
        let a_in = FrameQueue::new(capacity);
        let b_in = FrameQueue::new(capacity);
        (
            Connection {
                outbox: b_in.clone(),
                inbox: a_in.clone(),
                kind: EndpointKind::InProcess,
                stream: None,
            },
            Connection {
                outbox: a_in,
                inbox: b_in,
                kind: EndpointKind::InProcess,
                stream: None,
            },
        )
    }

    pub fn connect(endpoint: &Endpoint, timeout: Duration) -> Result<Connection, TransportError> {
        Self::connect_with_capacity(endpoint, timeout, DEFAULT_OUTBOX_FRAMES)
    }

    pub fn connect_with_capacity(
        endpoint: &Endpoint,
        timeout: Duration,
        capacity: usize,
    ) -> Result<Connection, TransportError> {
        match endpoint.kind {
            EndpointKind::InProcess => {
                let registry = inproc_registry().lock().unwrap_or_else(|e| e.into_inner());
                let acceptor = registry
                    .get(&endpoint.address)
                    .ok_or(TransportError::Disconnected)?;
                let (local, remote) = Self::pair_with_capacity(capacity);
                acceptor
                    .send(remote)
                    .map_err(|_| TransportError::Disconnected)?;
                Ok(local)
            }
            EndpointKind::Tcp => {
                let addr = resolve(&endpoint.address)?;
                let stream = TcpStream::connect_timeout(&addr, timeout).map_err(|e| {
                    if e.kind() == ErrorKind::TimedOut {
                        TransportError::Timeout
                    } else {
                        TransportError::Io(e.to_string())
                    }
                })?;
                Self::from_tcp(stream, capacity)
            }
        }
    }

    fn from_tcp(stream: TcpStream, capacity: usize) -> Result<Connection, TransportError> {
        stream
            .set_nodelay(true)
            .map_err(|e| TransportError::Io(e.to_string()))?;
        let io = |e: std::io::Error| TransportError::Io(e.to_string());
        let reader_stream = stream.try_clone().map_err(io)?;
        let writer_stream = stream.try_clone().map_err(io)?;
        let outbox = FrameQueue::new(capacity);
        let inbox = FrameQueue::new(usize::MAX);

        {
            let inbox = inbox.clone();
            let outbox = outbox.clone();
            thread::Builder::new()
                .name("tcp-reader".into())
                .spawn(move || tcp_reader(reader_stream, inbox, outbox))
                .map_err(io)?;
        }
        {
            let inbox = inbox.clone();
            let outbox = outbox.clone();
            thread::Builder::new()
                .name("tcp-writer".into())
                .spawn(move || tcp_writer(writer_stream, outbox, inbox))
                .map_err(io)?;
        }
        Ok(Connection {
            outbox,
            inbox,
            kind: EndpointKind::Tcp,
            stream: Some(stream),
        })
    }

    pub fn kind(&self) -> EndpointKind {
        self.kind
    }

    /// Enqueues one frame without blocking.
    pub fn send(&self, frame: Vec<u8>, class: FrameClass) -> Result<Receipt, TransportError> {
        if frame.len() > MAX_FRAME_LEN {
            return Err(TransportError::FrameTooLarge(frame.len()));
        }
        self.outbox.push(class, frame)
    }

    /// Like [`send`](Self::send) but waits for room until `deadline`.
    pub fn send_until(
        &self,
        frame: Vec<u8>,
        class: FrameClass,
        deadline: Instant,
    ) -> Result<Receipt, TransportError> {
        if frame.len() > MAX_FRAME_LEN {
            return Err(TransportError::FrameTooLarge(frame.len()));
        }
        self.outbox.push_until(class, frame, deadline)
    }

    pub fn recv_until(&self, deadline: Instant) -> Result<Vec<u8>, TransportError> {
        self.inbox.pop_until(Some(deadline))
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Result<Vec<u8>, TransportError> {
        self.recv_until(Instant::now() + timeout)
    }

    pub fn recv(&self) -> Result<Vec<u8>, TransportError> {
        self.inbox.pop_until(None)
    }

    pub fn try_recv(&self) -> Result<Vec<u8>, TransportError> {
        self.recv_until(Instant::now())
    }

    pub fn is_connected(&self) -> bool {
        !self.outbox.is_closed() && !self.inbox.is_closed()
    }

    /// Telemetry frames evicted from this side's outbox so far.
    pub fn evicted_telemetry(&self) -> u64 {
        self.outbox.evicted()
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        // The peer may still drain what was already queued.
        self.outbox.close();
        self.inbox.close();
        if self.stream.is_some() {
            // The writer shuts the socket down once the outbox is flushed.
            let stream = self.stream.take();
            let outbox = self.outbox.clone();
            thread::spawn(move || {
                let deadline = Instant::now() + Duration::from_secs(1);
                while Instant::now() < deadline && !outbox.lock().frames.is_empty() {
                    thread::sleep(Duration::from_millis(1));
                }
                if let Some(s) = stream {
                    let _ = s.shutdown(Shutdown::Both);
                }
            });
        }
    }
}

fn tcp_reader(mut stream: TcpStream, inbox: Arc<FrameQueue>, outbox: Arc<FrameQueue>) {
    let mut len_buf = [0u8; 4];
    loop {
        if stream.read_exact(&mut len_buf).is_err() {
            break;
        }
        let len = u32::from_be_bytes(len_buf) as usize;
        if len > MAX_FRAME_LEN {
            log::warn!("dropping connection: frame length {len} exceeds limit");
            break;
        }
        let mut frame = vec![0u8; len];
        if stream.read_exact(&mut frame).is_err() {
            break;
        }
        if inbox.push(FrameClass::Control, frame).is_err() {
            break;
        }
    }
    inbox.close();
    outbox.close();
    let _ = stream.shutdown(Shutdown::Both);
}

fn tcp_writer(mut stream: TcpStream, outbox: Arc<FrameQueue>, inbox: Arc<FrameQueue>) {
    let mut buf = Vec::new();
    while let Some(frames) = outbox.drain_blocking() {
        buf.clear();
        for f in &frames {
            buf.extend_from_slice(&(f.len() as u32).to_be_bytes());
            buf.extend_from_slice(f);
        }
        if stream.write_all(&buf).and_then(|_| stream.flush()).is_err() {
            inbox.close();
            outbox.close();
            break;
        }
    }
    let _ = stream.shutdown(Shutdown::Write);
}

fn resolve(address: &str) -> Result<SocketAddr, TransportError> {
    address
        .to_socket_addrs()
        .map_err(|e| TransportError::InvalidEndpoint(format!("{address}: {e}")))?
        .next()
        .ok_or_else(|| TransportError::InvalidEndpoint(address.to_string()))
}

type Registry = Mutex<HashMap<String, mpsc::Sender<Connection>>>;

fn inproc_registry() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(Default::default)
}

/// Accepts connections on an endpoint.
#[derive(Debug)]
pub enum Listener {
    InProcess {
        name: String,
        incoming: mpsc::Receiver<Connection>,
    },
    Tcp {
        listener: TcpListener,
        capacity: usize,
    },
}

impl Listener {
    pub fn bind(endpoint: &Endpoint) -> Result<Listener, TransportError> {
        Self::bind_with_capacity(endpoint, DEFAULT_OUTBOX_FRAMES)
    }

    pub fn bind_with_capacity(
        endpoint: &Endpoint,
        capacity: usize,
    ) -> Result<Listener, TransportError> {
        match endpoint.kind {
            EndpointKind::InProcess => {
                let mut registry = inproc_registry().lock().unwrap_or_else(|e| e.into_inner());
                if registry.contains_key(&endpoint.address) {
                    return Err(TransportError::InvalidEndpoint(format!(
                        "inproc://{} already bound",
                        endpoint.address
                    )));
                }
                let (tx, rx) = mpsc::channel();
                registry.insert(endpoint.address.clone(), tx);
                Ok(Listener::InProcess {
                    name: endpoint.address.clone(),
                    incoming: rx,
                })
            }
            EndpointKind::Tcp => {
                let listener = TcpListener::bind(resolve(&endpoint.address)?)
                    .map_err(|e| TransportError::Io(e.to_string()))?;
                Ok(Listener::Tcp { listener, capacity })
            }
        }
    }

    /// Loopback TCP listener on a port picked by the OS.
    pub fn bind_tcp_ephemeral() -> Result<Listener, TransportError> {
        let listener =
            TcpListener::bind(("127.0.0.1", 0)).map_err(|e| TransportError::Io(e.to_string()))?;
        Ok(Listener::Tcp {
            listener,
            capacity: DEFAULT_OUTBOX_FRAMES,
        })
    }

    /// Bound address; for an ephemeral TCP listener this reports the assigned port.
    pub fn endpoint(&self) -> Result<Endpoint, TransportError> {
        match self {
            Listener::InProcess { name, .. } => Ok(Endpoint::in_process(name.clone())),
            Listener::Tcp { listener, .. } => {
                let addr = listener
                    .local_addr()
                    .map_err(|e| TransportError::Io(e.to_string()))?;
                Endpoint::tcp(addr.to_string())
            }
        }
    }

    pub fn accept(&self, timeout: Duration) -> Result<Connection, TransportError> {
        let deadline = Instant::now() + timeout;
        match self {
            Listener::InProcess { incoming, .. } => incoming
                .recv_timeout(timeout)
                .map_err(|_| TransportError::Timeout),
            Listener::Tcp { listener, capacity } => {
                listener
                    .set_nonblocking(true)
                    .map_err(|e| TransportError::Io(e.to_string()))?;
                loop {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            stream
                                .set_nonblocking(false)
                                .map_err(|e| TransportError::Io(e.to_string()))?;
                            return Connection::from_tcp(stream, *capacity);
                        }
                        Err(e) if e.kind() == ErrorKind::WouldBlock => {
                            if Instant::now() >= deadline {
                                return Err(TransportError::Timeout);
                            }
                            thread::sleep(Duration::from_millis(1));
                        }
                        Err(e) => return Err(TransportError::Io(e.to_string())),
                    }
                }
            }
        }
    }
}

impl Drop for Listener {
    fn drop(&mut self) {
        if let Listener::InProcess { name, .. } = self {
            inproc_registry()
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .remove(name);
        }
    }
}
