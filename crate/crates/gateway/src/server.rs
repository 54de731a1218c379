//! TCP transport: one thread per connection, frames in, frames out.

use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use crate::protocol::{read_frame, write_frame, Reply, Request};
use crate::service::Gateway;
use crate::GatewayError;

const POLL: Duration = Duration::from_millis(20);
const REAP_EVERY: Duration = Duration::from_secs(1);

/// A running server; dropping it does not stop it, call [`ServerHandle::shutdown`].
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: JoinHandle<()>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.thread.join();
    }

    /// Blocks until the accept loop ends.
    pub fn wait(self) {
        let _ = self.thread.join();
    }
}

fn connection(gateway: Arc<Gateway>, stream: TcpStream) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(body) = read_frame(&mut reader)? {
        let reply = gateway.handle_bytes(&body);
        write_frame(&mut writer, &reply)?;
    }
    Ok(())
}

/// Binds `bind` and serves `gateway` on a background thread.
pub fn spawn(gateway: Arc<Gateway>, bind: &str) -> Result<ServerHandle, GatewayError> {
    let listener = TcpListener::bind(bind).map_err(|e| GatewayError::Bind(bind.to_string(), e))?;
    listener.set_nonblocking(true).map_err(|e| GatewayError::Bind(bind.to_string(), e))?;
    let addr = listener.local_addr().map_err(|e| GatewayError::Bind(bind.to_string(), e))?;
    info!("listening on {addr}");
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let thread = thread::spawn(move || {
        let mut last_reap = Instant::now();
        while !flag.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    debug!("connection from {peer}");
                    let g = gateway.clone();
                    thread::spawn(move || {
                        if let Err(e) = connection(g, stream) {
                            debug!("connection {peer} ended: {e}");
                        }
                    });
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(e) => warn!("accept failed: {e}"),
            }
            if last_reap.elapsed() >= REAP_EVERY {
                gateway.expire_idle();
                last_reap = Instant::now();
            }
        }
    });
    Ok(ServerHandle { addr, stop, thread })
}

/// Blocking client for the framed protocol.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Client {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { reader: BufReader::new(stream.try_clone()?), writer: BufWriter::new(stream) })
    }

    pub fn set_timeout(&self, timeout: Option<Duration>) -> io::Result<()> {
        self.reader.get_ref().set_read_timeout(timeout)
    }

    /// Sends raw bytes and returns the raw reply.
    pub fn call_raw(&mut self, body: &[u8]) -> io::Result<Vec<u8>> {
        write_frame(&mut self.writer, body)?;
        read_frame(&mut self.reader)?.ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "server closed"))
    }

    pub fn call(&mut self, request: &Request) -> Result<Reply, GatewayError> {
        let body = serde_json::to_vec(request).map_err(GatewayError::Json)?;
        let reply = self.call_raw(&body)?;
        serde_json::from_slice(&reply).map_err(GatewayError::Json)
    }
}
