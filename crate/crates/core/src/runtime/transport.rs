use std::io::{BufReader, BufWriter};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, Sender};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::wire::{self, WireMessage};
use super::worker::Worker;
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Makes one simulated worker vanish after it has received `after_frames`
/// frames, without answering the last one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fault {
    pub server: u32,
    pub after_frames: usize,
}

/// How the master reaches its workers.
#[derive(Debug, Clone, PartialEq)]
pub enum Transport {
    /// `n` workers on threads of this process. Messages still go through the
    /// wire encoding.
    InProcess {
        n: usize,
        exec: Execution,
        fault: Option<Fault>,
    },
    /// One TCP worker per address; `addrs[i - 1]` is server `i`.
    Socket { addrs: Vec<String> },
}

impl Transport {
    pub fn simulate(n: usize) -> Self {
        Transport::InProcess {
            n,
            exec: Execution::default(),
            fault: None,
        }
    }

    pub fn workers(&self) -> usize {
        match self {
            Transport::InProcess { n, .. } => *n,
            Transport::Socket { addrs } => addrs.len(),
        }
    }

    pub(crate) fn connect(&self, timeout: Duration) -> Result<Connection> {
        let (tx, rx) = mpsc::channel();
        let mut links: Vec<Box<dyn Link>> = Vec::new();
        let mut threads = Vec::new();
        match self {
            Transport::InProcess { n, exec, fault } => {
                for i in 1..=*n as u32 {
                    let (wtx, wrx) = mpsc::channel::<Vec<u8>>();
                    let fault = fault.filter(|f| f.server == i);
                    let (out, exec) = (tx.clone(), *exec);
                    threads.push(thread::spawn(move || simulated_worker(i, exec, wrx, out, fault)));
                    links.push(Box::new(ChannelLink(Some(wtx))));
                }
            }
            Transport::Socket { addrs } => {
                for (k, a) in addrs.iter().enumerate() {
                    let i = k as u32 + 1;
                    let addr = a
                        .to_socket_addrs()
                        .map_err(|e| Error::Transport(format!("cannot resolve worker {i} address {a}: {e}")))?
                        .next()
                        .ok_or_else(|| Error::Transport(format!("worker {i} address {a} resolves to nothing")))?;
                    let stream = TcpStream::connect_timeout(&addr, timeout)
                        .map_err(|e| Error::Transport(format!("cannot reach worker {i} at {a}: {e}")))?;
                    stream.set_nodelay(true)?;
                    let mut reader = BufReader::new(stream.try_clone()?);
                    let out = tx.clone();
                    threads.push(thread::spawn(move || {
                        loop {
                            match wire::read_frame(&mut reader) {
                                Ok(Some(frame)) => {
                                    if out.send(Inbound::Frame(i, frame)).is_err() {
                                        return;
                                    }
                                }
                                Ok(None) => {
                                    let _ = out.send(Inbound::Closed(i, "connection closed".into()));
                                    return;
                                }
                                Err(e) => {
                                    let _ = out.send(Inbound::Closed(i, e.to_string()));
                                    return;
                                }
                            }
                        }
                    }));
                    links.push(Box::new(TcpLink {
                        writer: BufWriter::new(stream.try_clone()?),
                        stream,
                    }));
                }
            }
        }
        Ok(Connection {
            links,
            inbound: rx,
            threads,
        })
    }
}

pub(crate) enum Inbound {
    Frame(u32, Vec<u8>),
    Closed(u32, String),
}

pub(crate) trait Link: Send {
    fn send(&mut self, frame: Vec<u8>) -> Result<()>;
    fn close(&mut self);
}

struct ChannelLink(Option<Sender<Vec<u8>>>);

impl Link for ChannelLink {
    fn send(&mut self, frame: Vec<u8>) -> Result<()> {
        self.0
            .as_ref()
            .ok_or_else(|| Error::Transport("link already closed".into()))?
            .send(frame)
            .map_err(|_| Error::Transport("simulated worker is gone".into()))
    }

    fn close(&mut self) {
        self.0 = None;
    }
}

struct TcpLink {
    stream: TcpStream,
    writer: BufWriter<TcpStream>,
}

impl Link for TcpLink {
    fn send(&mut self, frame: Vec<u8>) -> Result<()> {
        wire::write_frame(&mut self.writer, &frame).map_err(|e| Error::Transport(format!("send failed: {e}")))
    }

    fn close(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

pub(crate) struct Connection {
    pub(crate) links: Vec<Box<dyn Link>>,
    pub(crate) inbound: Receiver<Inbound>,
    threads: Vec<JoinHandle<()>>,
}

impl Connection {
    pub(crate) fn close(&mut self) {
        for l in &mut self.links {
            l.close();
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.close();
    }
}

fn simulated_worker(i: u32, exec: Execution, rx: Receiver<Vec<u8>>, out: Sender<Inbound>, fault: Option<Fault>) {
    let mut worker = Worker::new(i, exec);
    let mut received = 0usize;
    let reason = loop {
        let Ok(frame) = rx.recv() else {
            break "master closed the link".to_string();
        };
        received += 1;
        if fault.is_some_and(|f| received >= f.after_frames) {
            break "worker killed by fault injection".to_string();
        }
        let reply = match WireMessage::decode(&frame) {
            Ok(msg) => worker.handle(msg),
            Err(e) => Some(WireMessage::error(0, i, &e.to_string())),
        };
        if let Some(reply) = reply {
            match reply.encode() {
                Ok(bytes) => {
                    if out.send(Inbound::Frame(i, bytes)).is_err() {
                        return;
                    }
                }
                Err(e) => break e.to_string(),
            }
        }
        if worker.is_stopped() {
            return;
        }
    };
    let _ = out.send(Inbound::Closed(i, reason));
}
