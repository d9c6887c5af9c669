//! Server side of the worker protocol, over TCP or in-process.

use std::collections::HashSet;
use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::protocol::{decode, encode, read_frame, write_frame, Message, PROTOCOL_VERSION};
use super::queue::TaskQueue;

/// State shared by every connection of one server.
pub struct Hub {
    pub queue: Arc<TaskQueue>,
    connected: Mutex<HashSet<String>>,
}

impl Hub {
    pub fn new(queue: Arc<TaskQueue>) -> Arc<Self> {
        Arc::new(Self {
            queue,
            connected: Mutex::new(HashSet::new()),
        })
    }

    pub fn connected_workers(&self) -> usize {
        self.connected.lock().unwrap().len()
    }
}

/// One worker connection's protocol state: `hello` first, then any number
/// of `pull` / `result` exchanges.
pub struct Session {
    hub: Arc<Hub>,
    worker_id: Option<String>,
}

impl Session {
    pub fn new(hub: Arc<Hub>) -> Self {
        Self { hub, worker_id: None }
    }

    pub fn worker_id(&self) -> Option<&str> {
        self.worker_id.as_deref()
    }

    pub fn handle(&mut self, msg: Message) -> Message {
        match (msg, self.worker_id.as_deref()) {
            (Message::Hello { proto, worker_id }, None) => {
                if proto != PROTOCOL_VERSION {
                    return Message::error(format!("unsupported protocol version {proto}, expected {PROTOCOL_VERSION}"));
                }
                if worker_id.is_empty() {
                    return Message::error("empty worker_id");
                }
                if !self.hub.connected.lock().unwrap().insert(worker_id.clone()) {
                    return Message::error(format!("worker_id `{worker_id}` is already connected"));
                }
                log::info!("worker {worker_id} connected");
                self.worker_id = Some(worker_id);
                Message::Ack
            }
            (Message::Hello { .. }, Some(_)) => Message::error("duplicate hello"),
            (m, None) => Message::error(format!("expected hello, got {}", m.kind())),
            (Message::Pull, Some(id)) => match self.hub.queue.worker_pull(id) {
                Some(task) => Message::task(&task),
                None => Message::Empty,
            },
            (m @ Message::Result { .. }, Some(_)) => {
                let result = m.into_result().expect("result message");
                self.hub.queue.worker_return(result);
                Message::Ack
            }
            (m, Some(_)) => Message::error(format!("unexpected {} from worker", m.kind())),
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        if let Some(id) = self.worker_id.take() {
            log::info!("worker {id} disconnected");
            self.hub.connected.lock().unwrap().remove(&id);
        }
    }
}

/// Client end of the protocol: send one message, receive the reply.
pub trait Transport {
    fn exchange(&mut self, msg: &Message) -> io::Result<Message>;
}

pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> io::Result<Self> {
        let mut last = io::Error::new(io::ErrorKind::AddrNotAvailable, "no address");
        for a in addr.to_socket_addrs()? {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(stream) => {
                    stream.set_nodelay(true)?;
                    return Ok(Self { stream });
                }
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}

impl Transport for TcpTransport {
    fn exchange(&mut self, msg: &Message) -> io::Result<Message> {
        write_frame(&mut self.stream, msg)?;
        read_frame(&mut self.stream)?.ok_or_else(|| io::ErrorKind::UnexpectedEof.into())
    }
}

/// Same message contract without sockets: every message still goes
/// through the frame encoding in both directions.
pub struct InProcessTransport {
    session: Session,
}

impl InProcessTransport {
    pub fn new(hub: Arc<Hub>) -> Self {
        Self {
            session: Session::new(hub),
        }
    }
}

impl Transport for InProcessTransport {
    fn exchange(&mut self, msg: &Message) -> io::Result<Message> {
        let request = decode(&encode(msg)?)?;
        let reply = self.session.handle(request);
        decode(&encode(&reply)?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ServerOptions {
    /// Connections silent for this long are closed.
    pub idle_timeout: Duration,
    /// How often expired tasks are reaped.
    pub reap_interval: Duration,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            idle_timeout: Duration::from_secs(300),
            reap_interval: Duration::from_secs(1),
        }
    }
}

/// TCP front end: one thread per connection plus one reaper thread.
/// Stops on [`Server::shutdown`] or drop.
pub struct Server {
    addr: SocketAddr,
    hub: Arc<Hub>,
    stop: Arc<AtomicBool>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
    threads: Vec<JoinHandle<()>>,
}

const ACCEPT_POLL: Duration = Duration::from_millis(10);

impl Server {
    pub fn start(addr: impl ToSocketAddrs, queue: Arc<TaskQueue>, options: ServerOptions) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let hub = Hub::new(queue);
        let stop = Arc::new(AtomicBool::new(false));
        let streams = Arc::new(Mutex::new(Vec::new()));

        let accept = {
            let (hub, stop, streams) = (hub.clone(), stop.clone(), streams.clone());
            std::thread::Builder::new().name("coevo-accept".into()).spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    match listener.accept() {
                        Ok((stream, peer)) => {
                            if let Err(e) = Self::spawn_connection(stream, peer, &hub, &streams, options) {
                                log::warn!("dropping connection from {peer}: {e}");
                            }
                        }
                        Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(ACCEPT_POLL),
                        Err(e) => {
                            log::warn!("accept failed: {e}");
                            std::thread::sleep(ACCEPT_POLL);
                        }
                    }
                }
            })?
        };

        let reaper = {
            let (queue, stop) = (hub.queue.clone(), stop.clone());
            std::thread::Builder::new().name("coevo-reaper".into()).spawn(move || {
                let tick = options.reap_interval.min(ACCEPT_POLL * 10).max(Duration::from_millis(1));
                let mut waited = Duration::ZERO;
                while !stop.load(Ordering::Relaxed) {
                    std::thread::sleep(tick);
                    waited += tick;
                    if waited >= options.reap_interval {
                        waited = Duration::ZERO;
                        queue.reap_timeouts(queue.now());
                    }
                }
            })?
        };

        log::info!("listening on {addr}");
        Ok(Self {
            addr,
            hub,
            stop,
            streams,
            threads: vec![accept, reaper],
        })
    }

    fn spawn_connection(
        stream: TcpStream,
        peer: SocketAddr,
        hub: &Arc<Hub>,
        streams: &Arc<Mutex<Vec<TcpStream>>>,
        options: ServerOptions,
    ) -> io::Result<()> {
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(options.idle_timeout))?;
        streams.lock().unwrap().push(stream.try_clone()?);
        let hub = hub.clone();
        std::thread::Builder::new().name(format!("coevo-conn-{peer}")).spawn(move || {
            let mut stream = stream;
            let mut session = Session::new(hub);
            loop {
                let msg = match read_frame(&mut stream) {
                    Ok(Some(m)) => m,
                    Ok(None) => break,
                    Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                        log::info!("closing idle connection {peer}");
                        break;
                    }
                    Err(e) => {
                        log::debug!("connection {peer}: {e}");
                        let _ = write_frame(&mut stream, &Message::error(e.to_string()));
                        break;
                    }
                };
                let reply = session.handle(msg);
                let fatal = matches!(reply, Message::Error { .. }) && session.worker_id().is_none();
                if write_frame(&mut stream, &reply).is_err() || fatal {
                    break;
                }
            }
            let _ = stream.shutdown(Shutdown::Both);
        })?;
        Ok(())
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn hub(&self) -> &Arc<Hub> {
        &self.hub
    }

    pub fn queue(&self) -> &Arc<TaskQueue> {
        &self.hub.queue
    }

    pub fn in_process(&self) -> InProcessTransport {
        InProcessTransport::new(self.hub.clone())
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for s in self.streams.lock().unwrap().drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.shutdown();
    }
}
