//! TCP backend: one connection per ordered pair of parties.
//!
//! Each party listens on its own address and dials both peers. The dialled
//! connection carries that party's outgoing frames; accepted connections are
//! drained by a reader thread per peer into an in-memory queue, so a large
//! send can never deadlock against a peer that is itself sending.
//!
//! Handshake (dialler → acceptor, echoed back on success):
//! `"MPC3" | version u8 | party id u8 | session id [16]`.

use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender};
use log::{debug, warn};

use crate::error::{Error, Result};
use crate::sharing::prf::SessionId;
use crate::sharing::PartyId;
use crate::transport::{decode_payload, encode_frame, Transport, MAX_FRAME_BYTES};

pub const MAGIC: &[u8; 4] = b"MPC3";
pub const PROTOCOL_VERSION: u8 = 1;
const HELLO_LEN: usize = 4 + 1 + 1 + 16;

#[derive(Clone, Debug)]
pub struct TcpConfig {
    pub party: PartyId,
    pub listen: String,
    /// Address of every party; the entry for `party` itself is ignored.
    pub peers: [String; 3],
    pub session: SessionId,
    pub timeout: Duration,
}

type Incoming = Receiver<std::result::Result<Vec<u64>, String>>;

pub struct TcpTransport {
    me: PartyId,
    out: [Option<TcpStream>; 3],
    incoming: [Option<Incoming>; 3],
}

fn hello(party: PartyId, session: &SessionId) -> [u8; HELLO_LEN] {
    let mut buf = [0u8; HELLO_LEN];
    buf[..4].copy_from_slice(MAGIC);
    buf[4] = PROTOCOL_VERSION;
    buf[5] = party.get();
    buf[6..].copy_from_slice(session);
    buf
}

/// Validate a hello and return the sender's party id.
fn parse_hello(buf: &[u8; HELLO_LEN], session: &SessionId) -> Result<PartyId> {
    if &buf[..4] != MAGIC {
        return Err(Error::Handshake("bad magic".into()));
    }
    if buf[4] != PROTOCOL_VERSION {
        return Err(Error::Handshake(format!("unsupported protocol version {}", buf[4])));
    }
    if &buf[6..] != session {
        return Err(Error::Handshake("session id mismatch".into()));
    }
    PartyId::new(buf[5]).map_err(|_| Error::Handshake(format!("invalid party id {}", buf[5])))
}

fn read_hello(stream: &mut TcpStream) -> Result<[u8; HELLO_LEN]> {
    let mut buf = [0u8; HELLO_LEN];
    stream
        .read_exact(&mut buf)
        .map_err(|e| Error::Handshake(format!("connection closed during handshake: {e}")))?;
    Ok(buf)
}

fn resolve(addr: &str) -> Result<SocketAddr> {
    addr.to_socket_addrs()
        .map_err(|e| Error::transport(format!("cannot resolve {addr}: {e}")))?
        .next()
        .ok_or_else(|| Error::transport(format!("{addr} resolved to nothing")))
}

fn reader_loop(mut stream: TcpStream, tx: Sender<std::result::Result<Vec<u64>, String>>) {
    loop {
        let mut header = [0u8; 8];
        if let Err(e) = stream.read_exact(&mut header) {
            let _ = tx.send(Err(format!("connection closed: {e}")));
            return;
        }
        let len = u64::from_le_bytes(header);
        if len > MAX_FRAME_BYTES || len % 8 != 0 {
            let _ = tx.send(Err(format!("invalid frame length {len}")));
            return;
        }
        let mut payload = vec![0u8; len as usize];
        if let Err(e) = stream.read_exact(&mut payload) {
            let _ = tx.send(Err(format!("truncated frame: {e}")));
            return;
        }
        let words = decode_payload(&payload).map_err(|e| e.to_string());
        if tx.send(words).is_err() {
            return;
        }
    }
}

/// Accept and validate one connection from each peer.
fn accept_peers(listener: TcpListener, cfg: TcpConfig) -> Result<Vec<(PartyId, TcpStream)>> {
    let deadline = Instant::now() + cfg.timeout;
    listener.set_nonblocking(true)?;
    let mut accepted: Vec<(PartyId, TcpStream)> = Vec::new();
    while accepted.len() < 2 {
        match listener.accept() {
            Ok((mut stream, addr)) => {
                stream.set_nonblocking(false)?;
                stream.set_read_timeout(Some(cfg.timeout))?;
                let buf = read_hello(&mut stream)?;
                let peer = parse_hello(&buf, &cfg.session)?;
                if peer == cfg.party {
                    let _ = stream.shutdown(Shutdown::Both);
                    return Err(Error::Handshake(format!("{addr} claims this party's own id {peer}")));
                }
                if accepted.iter().any(|(p, _)| *p == peer) {
                    let _ = stream.shutdown(Shutdown::Both);
                    return Err(Error::Handshake(format!("two connections claim to be {peer}")));
                }
                stream.write_all(&hello(cfg.party, &cfg.session))?;
                stream.set_read_timeout(None)?;
                debug!("{} accepted {peer} from {addr}", cfg.party);
                accepted.push((peer, stream));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if Instant::now() > deadline {
                    return Err(Error::transport("timed out waiting for peers to connect"));
                }
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(accepted)
}

fn dial(cfg: &TcpConfig, peer: PartyId) -> Result<TcpStream> {
    let addr = resolve(&cfg.peers[peer.index()])?;
    let deadline = Instant::now() + cfg.timeout;
    let mut stream = loop {
        match TcpStream::connect_timeout(&addr, Duration::from_millis(500)) {
            Ok(s) => break s,
            Err(e) => {
                if Instant::now() > deadline {
                    return Err(Error::transport(format!("cannot reach {peer} at {addr}: {e}")));
                }
                thread::sleep(Duration::from_millis(20));
            }
        }
    };
    stream.set_nodelay(true)?;
    stream.write_all(&hello(cfg.party, &cfg.session))?;
    stream.set_read_timeout(Some(cfg.timeout))?;
    let reply = read_hello(&mut stream)?;
    let who = parse_hello(&reply, &cfg.session)?;
    if who != peer {
        return Err(Error::Handshake(format!("expected {peer} at {addr}, found {who}")));
    }
    stream.set_read_timeout(None)?;
    Ok(stream)
}

impl TcpTransport {
    /// Listen, dial both peers and complete both handshakes.
    pub fn establish(cfg: TcpConfig) -> Result<Self> {
        let listener = TcpListener::bind(resolve(&cfg.listen)?)
            .map_err(|e| Error::transport(format!("cannot listen on {}: {e}", cfg.listen)))?;
        let acceptor = {
            let cfg = cfg.clone();
            thread::spawn(move || accept_peers(listener, cfg))
        };

        let mut out: [Option<TcpStream>; 3] = [None, None, None];
        let mut dial_err = None;
        for peer in [cfg.party.next(), cfg.party.prev()] {
            match dial(&cfg, peer) {
                Ok(s) => out[peer.index()] = Some(s),
                Err(e) => {
                    dial_err = Some(e);
                    break;
                }
            }
        }
        let accepted = acceptor.join().map_err(|_| Error::transport("acceptor thread panicked"))?;
        // Report the acceptor's view first: it names the offending peer.
        let accepted = accepted?;
        if let Some(e) = dial_err {
            return Err(e);
        }

        let mut incoming: [Option<Incoming>; 3] = [None, None, None];
        for (peer, stream) in accepted {
            let (tx, rx) = unbounded();
            thread::Builder::new()
                .name(format!("{}-from-{peer}", cfg.party))
                .spawn(move || reader_loop(stream, tx))?;
            incoming[peer.index()] = Some(rx);
        }
        Ok(TcpTransport { me: cfg.party, out, incoming })
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, to: PartyId, words: Vec<u64>) -> Result<()> {
        let frame = encode_frame(&words)?;
        let stream = self.out[to.index()].as_mut().ok_or(Error::Topology { me: self.me, peer: to })?;
        stream.write_all(&frame).map_err(|e| Error::transport(format!("send to {to} failed: {e}")))
    }

    fn recv(&mut self, from: PartyId) -> Result<Vec<u64>> {
        let rx = self.incoming[from.index()].as_ref().ok_or(Error::Topology { me: self.me, peer: from })?;
        match rx.recv() {
            Ok(Ok(words)) => Ok(words),
            Ok(Err(e)) => Err(Error::transport(format!("from {from}: {e}"))),
            Err(_) => Err(Error::transport(format!("reader for {from} stopped"))),
        }
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        for s in self.out.iter().flatten() {
            if let Err(e) = s.shutdown(Shutdown::Write) {
                warn!("{}: shutting down connection: {e}", self.me);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_roundtrip() {
        let s = [4u8; 16];
        let h = hello(PartyId::P2, &s);
        assert_eq!(parse_hello(&h, &s).unwrap(), PartyId::P2);
        assert!(parse_hello(&h, &[5u8; 16]).is_err());
        let mut bad = h;
        bad[0] = b'X';
        assert!(parse_hello(&bad, &s).is_err());
        let mut bad = h;
        bad[5] = 7;
        assert!(parse_hello(&bad, &s).is_err());
    }
}
