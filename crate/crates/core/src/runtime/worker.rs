use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};

use num_complex::Complex64;

use super::wire::{self, MessageKind, Slot, TaskKind, TaskSpec, WireMessage};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::sharing::{Shape, ShareSet};

/// Rows per partial sum in the training product. Fixed so that the result is
/// bit-identical however many threads run it.
const ROW_CHUNK: usize = 256;

/// Computes a worker's result share for `task`.
///
/// `operand` and `matrix` are single-server share sets. The result carries the
/// task's params digest.
pub fn worker_eval(operand: &ShareSet, matrix: Option<&ShareSet>, task: &TaskSpec, exec: Execution) -> Result<ShareSet> {
    if operand.n() != 1 {
        return Err(Error::arg(format!("expected this worker's share only, got {} shares", operand.n())));
    }
    if operand.params_digest != task.params_digest {
        return Err(Error::arg("operand share was produced under different protocol parameters"));
    }
    let values = match &task.kind {
        TaskKind::EvalPolynomial(f) => {
            if operand.shape != task.result_shape {
                return Err(Error::arg(format!(
                    "operand shape {:?} does not match task shape {:?}",
                    operand.shape, task.result_shape
                )));
            }
            let y = operand.server(1);
            let mut out = vec![Complex64::new(0.0, 0.0); y.len()];
            exec::for_each_chunk_mut(exec, &mut out, 4096, |c, o| {
                for (k, z) in o.iter_mut().enumerate() {
                    *z = f.eval(y[c * 4096 + k]);
                }
            });
            out
        }
        TaskKind::LRIterationProduct => {
            let x = matrix.ok_or_else(|| Error::arg("training product requested before the data share arrived"))?;
            if x.params_digest != task.params_digest {
                return Err(Error::arg("data share was produced under different protocol parameters"));
            }
            let Shape::Matrix { rows, cols } = x.shape else {
                return Err(Error::arg(format!("data share has shape {:?}, expected a matrix", x.shape)));
            };
            if operand.shape != (Shape::Vector { len: cols }) || task.result_shape != operand.shape {
                return Err(Error::arg(format!(
                    "model share {:?} / result {:?} incompatible with a {rows}x{cols} data share",
                    operand.shape, task.result_shape
                )));
            }
            gram_product(x.server(1), rows, cols, operand.server(1), exec)
        }
    };
    ShareSet::single(task.result_shape, values, task.params_digest)
}

/// `X^T (X w)` for row-major `X`, without forming `X^T X`.
pub fn gram_product(x: &[Complex64], rows: usize, cols: usize, w: &[Complex64], exec: Execution) -> Vec<Complex64> {
    let chunks = rows.div_ceil(ROW_CHUNK);
    let partials = exec::map_indexed(exec, chunks, |c| {
        let mut acc = vec![Complex64::new(0.0, 0.0); cols];
        for r in c * ROW_CHUNK..((c + 1) * ROW_CHUNK).min(rows) {
            let row = &x[r * cols..(r + 1) * cols];
            let xw: Complex64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
            for (o, a) in acc.iter_mut().zip(row) {
                *o += a * xw;
            }
        }
        acc
    });
    let mut out = vec![Complex64::new(0.0, 0.0); cols];
    for p in partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum State {
    Idle,
    AwaitingShares { task_id: u64, spec: TaskSpec },
    Stopped,
}

/// One honest-but-curious server. Holds nothing but its own shares.
///
/// Protocol per task: `Task` (no reply), then `Shares` answered by `Result` or
/// `Error`. `Shutdown` stops the worker.
#[derive(Debug)]
pub struct Worker {
    index: u32,
    exec: Execution,
    state: State,
    last_task: Option<u64>,
    matrix: Option<ShareSet>,
}

impl Worker {
    pub fn new(index: u32, exec: Execution) -> Self {
        Worker {
            index,
            exec,
            state: State::Idle,
            last_task: None,
            matrix: None,
        }
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn is_stopped(&self) -> bool {
        self.state == State::Stopped
    }

    fn fail(&mut self, task_id: u64, text: String) -> Option<WireMessage> {
        self.state = State::Idle;
        Some(WireMessage::error(task_id, self.index, &text))
    }

    /// Advances the state machine; returns the reply, if any.
    pub fn handle(&mut self, msg: WireMessage) -> Option<WireMessage> {
        if self.is_stopped() {
            return None;
        }
        if msg.server_index != self.index {
            let text = format!("message for server {} delivered to server {}", msg.server_index, self.index);
            return self.fail(msg.task_id, text);
        }
        match (msg.kind, std::mem::replace(&mut self.state, State::Idle)) {
            (MessageKind::Shutdown, _) => {
                self.state = State::Stopped;
                self.matrix = None;
                None
            }
            (MessageKind::Task, State::Idle) => {
                if self.last_task.is_some_and(|last| msg.task_id <= last) {
                    let text = format!("task id {} is not above the previous {}", msg.task_id, self.last_task.unwrap());
                    return self.fail(msg.task_id, text);
                }
                match TaskSpec::from_bytes(&msg.payload) {
                    Ok(spec) => {
                        self.last_task = Some(msg.task_id);
                        self.state = State::AwaitingShares {
                            task_id: msg.task_id,
                            spec,
                        };
                        None
                    }
                    Err(e) => self.fail(msg.task_id, format!("bad task: {e}")),
                }
            }
            (MessageKind::Shares, State::AwaitingShares { task_id, spec }) if task_id == msg.task_id => {
                match self.run(&spec, &msg.payload) {
                    Ok(result) => Some(WireMessage::new(MessageKind::Result, task_id, self.index, result.to_bytes())),
                    Err(e) => self.fail(task_id, e.to_string()),
                }
            }
            (kind, state) => {
                let text = format!("unexpected {kind:?} for task {} in state {state:?}", msg.task_id);
                self.fail(msg.task_id, text)
            }
        }
    }

    fn run(&mut self, spec: &TaskSpec, payload: &[u8]) -> Result<ShareSet> {
        let mut operand = None;
        for (slot, set) in wire::decode_bundle(payload)? {
            match slot {
                Slot::Operand => operand = Some(set),
                Slot::Matrix => self.matrix = Some(set),
            }
        }
        let operand = operand.ok_or_else(|| Error::arg("no operand share in the message"))?;
        worker_eval(&operand, self.matrix.as_ref(), spec, self.exec)
    }
}

/// Serves one connection until the peer closes it or sends `Shutdown`.
pub fn serve_stream(worker: &mut Worker, stream: TcpStream) -> Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while !worker.is_stopped() {
        let Some(frame) = wire::read_frame(&mut reader)? else {
            break;
        };
        let reply = match WireMessage::decode(&frame) {
            Ok(msg) => worker.handle(msg),
            Err(e) => Some(WireMessage::error(0, worker.index(), &e.to_string())),
        };
        if let Some(reply) = reply {
            wire::write_frame(&mut writer, &reply.encode()?)?;
        }
    }
    Ok(())
}

/// A worker listening for a master on a TCP socket.
pub struct WorkerServer {
    listener: TcpListener,
    worker: Worker,
}

impl WorkerServer {
    pub fn bind<A: ToSocketAddrs>(addr: A, index: u32, exec: Execution) -> Result<Self> {
        if index == 0 {
            return Err(Error::param("server index is 1-based"));
        }
        Ok(WorkerServer {
            listener: TcpListener::bind(addr)?,
            worker: Worker::new(index, exec),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts masters one at a time until one sends `Shutdown`.
    pub fn run(mut self) -> Result<()> {
        while !self.worker.is_stopped() {
            let (stream, peer) = self.listener.accept()?;
            log::info!("worker {} serving {peer}", self.worker.index());
            if let Err(e) = serve_stream(&mut self.worker, stream) {
                log::warn!("worker {}: connection to {peer} failed: {e}", self.worker.index());
            }
        }
        Ok(())
    }
}
