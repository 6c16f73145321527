use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};

/// Message kind tags, the first byte after the length prefix of every frame.
pub mod kind {
    pub const SEED: u8 = 1;
    pub const COUNTS: u8 = 2;
    pub const PRIVATIZED: u8 = 3;
    pub const LABELS: u8 = 4;
    pub const ABORT: u8 = 5;
}

/// Bytes added to every payload: 4-byte big-endian length plus the kind byte.
pub const FRAME_OVERHEAD: u64 = 5;

const KINDS: usize = 6;

/// Cumulative traffic counters of one party. Byte counts include framing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Meter {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub frames_sent: u64,
    pub frames_received: u64,
    pub sent_by_kind: [u64; KINDS],
    pub frames_by_kind: [u64; KINDS],
}

impl Meter {
    fn on_send(&mut self, kind: u8, payload: usize) {
        let bytes = FRAME_OVERHEAD + payload as u64;
        self.bytes_sent += bytes;
        self.frames_sent += 1;
        if let Some(slot) = self.sent_by_kind.get_mut(kind as usize) {
            *slot += bytes;
            self.frames_by_kind[kind as usize] += 1;
        }
    }

    fn on_recv(&mut self, payload: usize) {
        self.bytes_received += FRAME_OVERHEAD + payload as u64;
        self.frames_received += 1;
    }

    pub fn add(&mut self, other: &Meter) {
        self.bytes_sent += other.bytes_sent;
        self.bytes_received += other.bytes_received;
        self.frames_sent += other.frames_sent;
        self.frames_received += other.frames_received;
        for k in 0..KINDS {
            self.sent_by_kind[k] += other.sent_by_kind[k];
            self.frames_by_kind[k] += other.frames_by_kind[k];
        }
    }
}

/// Point-to-point, per-pair FIFO message passing between `parties` ranks.
pub trait Transport: Send {
    fn rank(&self) -> usize;
    fn parties(&self) -> usize;
    fn send(&mut self, to: usize, kind: u8, payload: &[u8]) -> Result<()>;
    /// Blocks until a message from `from` arrives; gives up after `timeout`
    /// with [`Error::Straggler`].
    fn recv(&mut self, from: usize, timeout: Duration) -> Result<(u8, Vec<u8>)>;
    fn meter(&self) -> &Meter;
}

fn check_peer(rank: usize, parties: usize, peer: usize) -> Result<()> {
    if peer >= parties || peer == rank {
        return Err(Error::Transport(format!("party {rank} has no peer {peer}")));
    }
    Ok(())
}

/// A message kind and its payload.
type Frame = (u8, Vec<u8>);

/// Channel-backed transport for parties running as threads of one process.
pub struct InProcessTransport {
    rank: usize,
    outgoing: Vec<Option<Sender<Frame>>>,
    incoming: Vec<Option<Receiver<Frame>>>,
    meter: Meter,
}

impl InProcessTransport {
    /// A fully connected group of `parties` endpoints, indexed by rank.
    pub fn mesh(parties: usize) -> Vec<InProcessTransport> {
        let mut ends: Vec<InProcessTransport> = (0..parties)
            .map(|rank| InProcessTransport {
                rank,
                outgoing: (0..parties).map(|_| None).collect(),
                incoming: (0..parties).map(|_| None).collect(),
                meter: Meter::default(),
            })
            .collect();
        for a in 0..parties {
            for b in 0..parties {
                if a != b {
                    let (tx, rx) = mpsc::channel();
                    ends[a].outgoing[b] = Some(tx);
                    ends[b].incoming[a] = Some(rx);
                }
            }
        }
        ends
    }
}

impl Transport for InProcessTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn parties(&self) -> usize {
        self.outgoing.len()
    }

    fn send(&mut self, to: usize, kind: u8, payload: &[u8]) -> Result<()> {
        check_peer(self.rank, self.parties(), to)?;
        self.outgoing[to]
            .as_ref()
            .expect("mesh is complete")
            .send((kind, payload.to_vec()))
            .map_err(|_| Error::Transport(format!("party {to} has left")))?;
        self.meter.on_send(kind, payload.len());
        Ok(())
    }

    fn recv(&mut self, from: usize, timeout: Duration) -> Result<(u8, Vec<u8>)> {
        check_peer(self.rank, self.parties(), from)?;
        let rx = self.incoming[from].as_ref().expect("mesh is complete");
        match rx.recv_timeout(timeout) {
            Ok((kind, payload)) => {
                self.meter.on_recv(payload.len());
                Ok((kind, payload))
            }
            Err(RecvTimeoutError::Timeout) => Err(Error::Straggler {
                party: self.rank,
                peer: from,
            }),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Transport(format!("party {from} has left"))),
        }
    }

    fn meter(&self) -> &Meter {
        &self.meter
    }
}

/// Full TCP mesh. Each rank dials every lower rank and accepts every higher
/// rank; the dialing side opens with its rank as a 4-byte big-endian integer.
pub struct TcpTransport {
    rank: usize,
    streams: Vec<Option<TcpStream>>,
    meter: Meter,
}

fn io_err(e: std::io::Error) -> Error {
    Error::Transport(e.to_string())
}

impl TcpTransport {
    /// Joins a mesh whose rank-`r` member listens on `peers[r]`. `listener`
    /// must already be bound to `peers[rank]`.
    pub fn establish(rank: usize, listener: TcpListener, peers: &[SocketAddr], timeout: Duration) -> Result<Self> {
        let parties = peers.len();
        if rank >= parties {
            return Err(Error::Transport(format!("rank {rank} outside a mesh of {parties}")));
        }
        let deadline = Instant::now() + timeout;
        let mut streams: Vec<Option<TcpStream>> = (0..parties).map(|_| None).collect();

        for (peer, addr) in peers.iter().enumerate().take(rank) {
            let mut stream = loop {
                match TcpStream::connect_timeout(addr, timeout) {
                    Ok(s) => break s,
                    Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(20)),
                    Err(e) => return Err(Error::Transport(format!("connect to party {peer} at {addr}: {e}"))),
                }
            };
            stream.set_nodelay(true).map_err(io_err)?;
            stream.write_all(&(rank as u32).to_be_bytes()).map_err(io_err)?;
            streams[peer] = Some(stream);
        }

        listener.set_nonblocking(true).map_err(io_err)?;
        let mut pending = parties - rank - 1;
        while pending > 0 {
            match listener.accept() {
                Ok((mut stream, _)) => {
                    stream.set_nonblocking(false).map_err(io_err)?;
                    stream.set_nodelay(true).map_err(io_err)?;
                    stream
                        .set_read_timeout(Some(
                            deadline
                                .saturating_duration_since(Instant::now())
                                .max(Duration::from_millis(1)),
                        ))
                        .map_err(io_err)?;
                    let mut hello = [0u8; 4];
                    stream.read_exact(&mut hello).map_err(io_err)?;
                    let peer = u32::from_be_bytes(hello) as usize;
                    if peer <= rank || peer >= parties || streams[peer].is_some() {
                        return Err(Error::Transport(format!(
                            "party {rank} got an unexpected hello from {peer}"
                        )));
                    }
                    streams[peer] = Some(stream);
                    pending -= 1;
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        let missing = (rank + 1..parties).find(|&p| streams[p].is_none()).unwrap_or(rank);
                        return Err(Error::Straggler {
                            party: rank,
                            peer: missing,
                        });
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(io_err(e)),
            }
        }
        Ok(Self {
            rank,
            streams,
            meter: Meter::default(),
        })
    }

    fn stream(&mut self, peer: usize) -> Result<&mut TcpStream> {
        check_peer(self.rank, self.streams.len(), peer)?;
        Ok(self.streams[peer].as_mut().expect("mesh is complete"))
    }
}

impl Transport for TcpTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn parties(&self) -> usize {
        self.streams.len()
    }

    fn send(&mut self, to: usize, kind: u8, payload: &[u8]) -> Result<()> {
        let len = u32::try_from(payload.len() + 1).map_err(|_| Error::Transport("frame exceeds 4 GiB".into()))?;
        let mut frame = Vec::with_capacity(payload.len() + 5);
        frame.extend_from_slice(&len.to_be_bytes());
        frame.push(kind);
        frame.extend_from_slice(payload);
        self.stream(to)?.write_all(&frame).map_err(io_err)?;
        self.meter.on_send(kind, payload.len());
        Ok(())
    }

    fn recv(&mut self, from: usize, timeout: Duration) -> Result<(u8, Vec<u8>)> {
        let rank = self.rank;
        let stream = self.stream(from)?;
        stream
            .set_read_timeout(Some(timeout.max(Duration::from_millis(1))))
            .map_err(io_err)?;
        let classify = |e: std::io::Error| match e.kind() {
            ErrorKind::WouldBlock | ErrorKind::TimedOut => Error::Straggler {
                party: rank,
                peer: from,
            },
            ErrorKind::UnexpectedEof => Error::Transport(format!("party {from} closed the connection")),
            _ => io_err(e),
        };
        let mut head = [0u8; 4];
        stream.read_exact(&mut head).map_err(classify)?;
        let len = u32::from_be_bytes(head) as usize;
        if len == 0 {
            return Err(Error::Transport(format!("empty frame from party {from}")));
        }
        let mut body = vec![0u8; len];
        stream.read_exact(&mut body).map_err(classify)?;
        let kind = body.remove(0);
        self.meter.on_recv(body.len());
        Ok((kind, body))
    }

    fn meter(&self) -> &Meter {
        &self.meter
    }
}

/// Builds a TCP mesh of `parties` ranks on the loopback interface.
pub fn local_tcp_mesh(parties: usize, timeout: Duration) -> Result<Vec<TcpTransport>> {
    let listeners = (0..parties)
        .map(|_| TcpListener::bind("127.0.0.1:0"))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io_err)?;
    let addrs = listeners
        .iter()
        .map(|l| l.local_addr())
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io_err)?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = listeners
            .into_iter()
            .enumerate()
            .map(|(rank, l)| {
                let addrs = &addrs;
                scope.spawn(move || TcpTransport::establish(rank, l, addrs, timeout))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .map_err(|_| Error::Transport("mesh setup thread panicked".into()))?
            })
            .collect()
    })
}
