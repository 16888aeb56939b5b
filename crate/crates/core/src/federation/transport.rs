//! Reliable, ordered delivery of frames between the aggregator and parties.

use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::wire::{self, Hello, Message};
use super::FederationError;

/// Aggregator side of a transport. Parties are addressed by 1-based index.
pub trait Transport: Send {
    fn n_parties(&self) -> usize;
    fn send(&mut self, party: usize, frame: Vec<u8>) -> Result<(), FederationError>;
    fn recv(&mut self, party: usize, timeout: Duration) -> Result<Vec<u8>, FederationError>;
    /// Releases connections and joins any worker threads.
    fn close(&mut self) {}
}

/// Party side of a transport.
pub trait PartyEndpoint {
    /// Next frame, or `None` once the aggregator has gone away.
    fn recv(&mut self) -> Option<Vec<u8>>;
    fn send(&mut self, frame: Vec<u8>) -> Result<(), FederationError>;
}

pub struct ChannelEndpoint {
    inbox: Receiver<Vec<u8>>,
    outbox: Sender<Vec<u8>>,
}

impl PartyEndpoint for ChannelEndpoint {
    fn recv(&mut self) -> Option<Vec<u8>> {
        self.inbox.recv().ok()
    }

    fn send(&mut self, frame: Vec<u8>) -> Result<(), FederationError> {
        self.outbox
            .send(frame)
            .map_err(|_| FederationError::ConnectionLost(0))
    }
}

struct Link {
    to_party: Option<Sender<Vec<u8>>>,
    from_party: Receiver<Vec<u8>>,
    worker: Option<JoinHandle<()>>,
}

/// One thread per party connected by channels. Delivery order is fixed by
/// the aggregator, so runs are reproducible regardless of thread scheduling.
pub struct InProcTransport {
    links: Vec<Link>,
}

impl InProcTransport {
    /// Spawns `n` party threads; `body(index, endpoint)` runs each one.
    pub fn spawn<F>(n: usize, body: F) -> Self
    where
        F: Fn(usize, ChannelEndpoint) + Send + Sync + Clone + 'static,
    {
        let links = (1..=n)
            .map(|index| {
                let (to_party, inbox) = mpsc::channel();
                let (outbox, from_party) = mpsc::channel();
                let body = body.clone();
                let worker = std::thread::Builder::new()
                    .name(format!("party-{index}"))
                    .spawn(move || body(index, ChannelEndpoint { inbox, outbox }))
                    .expect("spawn party thread");
                Link {
                    to_party: Some(to_party),
                    from_party,
                    worker: Some(worker),
                }
            })
            .collect();
        InProcTransport { links }
    }

    fn link(&mut self, party: usize) -> Result<&mut Link, FederationError> {
        self.links
            .get_mut(party.wrapping_sub(1))
            .ok_or(FederationError::ConnectionLost(party))
    }
}

impl Transport for InProcTransport {
    fn n_parties(&self) -> usize {
        self.links.len()
    }

    fn send(&mut self, party: usize, frame: Vec<u8>) -> Result<(), FederationError> {
        let link = self.link(party)?;
        link.to_party
            .as_ref()
            .and_then(|tx| tx.send(frame).ok())
            .ok_or(FederationError::ConnectionLost(party))
    }

    fn recv(&mut self, party: usize, timeout: Duration) -> Result<Vec<u8>, FederationError> {
        match self.link(party)?.from_party.recv_timeout(timeout) {
            Ok(frame) => Ok(frame),
            Err(RecvTimeoutError::Timeout) => Err(FederationError::RoundTimeout { party }),
            Err(RecvTimeoutError::Disconnected) => Err(FederationError::ConnectionLost(party)),
        }
    }

    fn close(&mut self) {
        for link in &mut self.links {
            link.to_party = None;
        }
        for link in &mut self.links {
            if let Some(worker) = link.worker.take() {
                let _ = worker.join();
            }
        }
    }
}

impl Drop for InProcTransport {
    fn drop(&mut self) {
        self.close();
    }
}

/// TCP transport: the aggregator listens and each party connects, presenting
/// a pre-shared token in its hello.
pub struct SocketTransport {
    // indexed by party - 1
    streams: Vec<TcpStream>,
    session: String,
}

impl SocketTransport {
    /// Accepts connections until all `n_parties` have completed the
    /// handshake or `timeout` elapses.
    pub fn accept(
        listener: &TcpListener,
        n_parties: usize,
        session: &str,
        token: &str,
        timeout: Duration,
    ) -> Result<Self, FederationError> {
        let deadline = Instant::now() + timeout;
        let mut slots: Vec<Option<TcpStream>> = (0..n_parties).map(|_| None).collect();
        listener
            .set_nonblocking(true)
            .map_err(FederationError::io)?;
        while slots.iter().any(Option::is_none) {
            match listener.accept() {
                Ok((mut stream, peer)) => {
                    stream.set_nonblocking(false).map_err(FederationError::io)?;
                    stream
                        .set_read_timeout(Some(Duration::from_secs(10)))
                        .map_err(FederationError::io)?;
                    let hello = match wire::read_frame(&mut stream).map(|f| wire::decode(&f)) {
                        Ok(Ok((_, Message::Hello(h)))) => h,
                        _ => {
                            log::warn!("dropping connection from {peer}: no valid hello");
                            continue;
                        }
                    };
                    let slot = hello
                        .party_index
                        .checked_sub(1)
                        .and_then(|i| slots.get_mut(i));
                    match slot {
                        Some(slot) if hello.token == token && slot.is_none() => {
                            wire::write_frame(
                                &mut stream,
                                &wire::encode(session, &Message::Welcome),
                            )
                            .map_err(FederationError::io)?;
                            stream.set_read_timeout(None).map_err(FederationError::io)?;
                            let _ = stream.set_nodelay(true);
                            *slot = Some(stream);
                        }
                        _ => log::warn!(
                            "rejecting hello from {peer} for party {}",
                            hello.party_index
                        ),
                    }
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        let missing = slots.iter().position(Option::is_none).map_or(0, |i| i + 1);
                        return Err(FederationError::RoundTimeout { party: missing });
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(e) => return Err(FederationError::io(e)),
            }
        }
        Ok(SocketTransport {
            streams: slots
                .into_iter()
                .map(|s| s.expect("all slots filled"))
                .collect(),
            session: session.to_string(),
        })
    }

    fn stream(&mut self, party: usize) -> Result<&mut TcpStream, FederationError> {
        self.streams
            .get_mut(party.wrapping_sub(1))
            .ok_or(FederationError::ConnectionLost(party))
    }
}

impl Transport for SocketTransport {
    fn n_parties(&self) -> usize {
        self.streams.len()
    }

    fn send(&mut self, party: usize, frame: Vec<u8>) -> Result<(), FederationError> {
        let stream = self.stream(party)?;
        wire::write_frame(stream, &frame).map_err(|_| FederationError::ConnectionLost(party))
    }

    fn recv(&mut self, party: usize, timeout: Duration) -> Result<Vec<u8>, FederationError> {
        let stream = self.stream(party)?;
        stream
            .set_read_timeout(Some(timeout.max(Duration::from_millis(1))))
            .map_err(FederationError::io)?;
        wire::read_frame(stream).map_err(|e| match e.kind() {
            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => {
                FederationError::RoundTimeout { party }
            }
            _ => FederationError::ConnectionLost(party),
        })
    }

    fn close(&mut self) {
        let frame = wire::encode(&self.session, &Message::Shutdown);
        for stream in &mut self.streams {
            let _ = wire::write_frame(stream, &frame);
            let _ = stream.shutdown(std::net::Shutdown::Both);
        }
        self.streams.clear();
    }
}

impl Drop for SocketTransport {
    fn drop(&mut self) {
        self.close();
    }
}

/// Party side of [`SocketTransport`].
pub struct SocketEndpoint {
    stream: TcpStream,
}

impl SocketEndpoint {
    pub fn connect<A: ToSocketAddrs>(
        address: A,
        party_index: usize,
        token: &str,
    ) -> Result<Self, FederationError> {
        let mut stream = TcpStream::connect(address).map_err(FederationError::io)?;
        let _ = stream.set_nodelay(true);
        let hello = Message::Hello(Hello {
            party_index,
            token: token.to_string(),
        });
        wire::write_frame(&mut stream, &wire::encode("", &hello)).map_err(FederationError::io)?;
        let reply = wire::read_frame(&mut stream)
            .map_err(|_| FederationError::ConnectionLost(party_index))?;
        match wire::decode(&reply)? {
            (_, Message::Welcome) => Ok(SocketEndpoint { stream }),
            (_, other) => Err(FederationError::Deserialize(format!(
                "expected welcome, got {other:?}"
            ))),
        }
    }

    /// Connects, retrying until the aggregator is listening or `patience`
    /// runs out.
    pub fn connect_with_retry<A: ToSocketAddrs + Clone>(
        address: A,
        party_index: usize,
        token: &str,
        patience: Duration,
    ) -> Result<Self, FederationError> {
        let deadline = Instant::now() + patience;
        loop {
            match Self::connect(address.clone(), party_index, token) {
                Ok(endpoint) => return Ok(endpoint),
                Err(e) if Instant::now() >= deadline => return Err(e),
                Err(_) => std::thread::sleep(Duration::from_millis(50)),
            }
        }
    }
}

impl PartyEndpoint for SocketEndpoint {
    fn recv(&mut self) -> Option<Vec<u8>> {
        wire::read_frame(&mut self.stream).ok()
    }

    fn send(&mut self, frame: Vec<u8>) -> Result<(), FederationError> {
        wire::write_frame(&mut self.stream, &frame).map_err(|_| FederationError::ConnectionLost(0))
    }
}
