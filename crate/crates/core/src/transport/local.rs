//! In-process backend: one unbounded FIFO per ordered pair of parties.
//!
//! The three parties run as ordinary threads. Each party's protocol logic is
//! sequential and every receive names its sender, so the transcript does not
//! depend on thread scheduling.

use crossbeam_channel::{unbounded, Receiver, Sender};

use crate::error::{Error, Result};
use crate::sharing::PartyId;
use crate::transport::{check_frame, Transport};

pub struct LocalTransport {
    me: PartyId,
    to: [Option<Sender<Vec<u64>>>; 3],
    from: [Option<Receiver<Vec<u64>>>; 3],
}

/// Build the fully connected three-party mesh.
pub fn local_mesh() -> [LocalTransport; 3] {
    let mut mesh = PartyId::ALL.map(|me| LocalTransport { me, to: [None, None, None], from: [None, None, None] });
    for a in PartyId::ALL {
        for b in PartyId::ALL {
            if a != b {
                let (tx, rx) = unbounded();
                mesh[a.index()].to[b.index()] = Some(tx);
                mesh[b.index()].from[a.index()] = Some(rx);
            }
        }
    }
    mesh
}

impl Transport for LocalTransport {
    fn send(&mut self, to: PartyId, words: Vec<u64>) -> Result<()> {
        check_frame(words.len())?;
        let tx = self.to[to.index()].as_ref().ok_or(Error::Topology { me: self.me, peer: to })?;
        tx.send(words).map_err(|_| Error::transport(format!("{to} has hung up")))
    }

    fn recv(&mut self, from: PartyId) -> Result<Vec<u64>> {
        let rx = self.from[from.index()].as_ref().ok_or(Error::Topology { me: self.me, peer: from })?;
        rx.recv().map_err(|_| Error::transport(format!("channel from {from} closed")))
    }
}
