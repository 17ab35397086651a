//! Master/worker orchestration.
//!
//! The master encodes secrets, sends each worker its own share, waits for all
//! `N` results and decodes them. Workers only ever talk to the master. Every
//! message crosses the `AMSG` wire encoding, also for in-process workers.

mod transcript;
mod transport;
pub mod wire;
mod worker;

use std::time::{Duration, Instant};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use transcript::{contains_bytes, Endpoint, TrafficCounts, Transcript, TranscriptEntry, TranscriptMode};
pub use transport::{Fault, Transport};
pub use wire::{MessageKind, Slot, TaskKind, TaskSpec, WireMessage};
pub use worker::{gram_product, serve_stream, worker_eval, Worker, WorkerServer};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::sharing::{self, DecoderWeights, Encoder, NoiseBlock, Polynomial, ProtocolParams, Shape, ShareSet};
use transport::{Connection, Inbound};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterConfig {
    /// How long to wait for all `N` results of one task.
    pub timeout: Duration,
    pub transcript: TranscriptMode,
    pub exec: Execution,
}

impl Default for MasterConfig {
    fn default() -> Self {
        MasterConfig {
            timeout: DEFAULT_TIMEOUT,
            transcript: TranscriptMode::Headers,
            exec: Execution::default(),
        }
    }
}

/// Arithmetic done on each side, in complex multiply-adds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkCounts {
    pub tasks: u64,
    pub master_encode_macs: u64,
    pub master_decode_macs: u64,
    /// Summed over all workers.
    pub worker_macs: u64,
}

struct PendingMatrix {
    values: Vec<Complex64>,
    rows: usize,
    cols: usize,
    noise: NoiseBlock,
}

/// The master of one session.
pub struct Master {
    params: ProtocolParams,
    weights: DecoderWeights,
    conn: Connection,
    transcript: Transcript,
    next_task_id: u64,
    cfg: MasterConfig,
    pending_matrix: Option<PendingMatrix>,
    matrix_shape: Option<(usize, usize)>,
    work: WorkCounts,
    closed: bool,
}

impl Master {
    pub fn connect(params: ProtocolParams, transport: &Transport, cfg: MasterConfig) -> Result<Self> {
        if transport.workers() != params.n() {
            return Err(Error::InsufficientServers {
                needed: params.n(),
                available: transport.workers(),
            });
        }
        let weights = sharing::decoder_weights(&params)?;
        let conn = transport.connect(cfg.timeout)?;
        Ok(Master {
            params,
            weights,
            conn,
            transcript: Transcript::new(cfg.transcript),
            next_task_id: 1,
            cfg,
            pending_matrix: None,
            matrix_shape: None,
            work: WorkCounts::default(),
            closed: false,
        })
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn work(&self) -> WorkCounts {
        self.work
    }

    fn check_encoder(&self, encoder: &Encoder) -> Result<()> {
        if encoder.params().digest() != self.params.digest() {
            return Err(Error::arg("encoder and master use different protocol parameters"));
        }
        Ok(())
    }

    fn send(&mut self, msg: WireMessage) -> Result<()> {
        let i = msg.server_index;
        let frame = msg.encode()?;
        self.transcript.record(&msg, Endpoint::Master, Endpoint::Worker(i));
        self.conn.links[i as usize - 1]
            .send(frame)
            .map_err(|e| Error::Protocol(format!("worker {i} unreachable: {e}")))
    }

    /// Sends `spec` and each worker's share bundle (built lazily, one server
    /// at a time), then waits for all `N` results.
    fn dispatch(
        &mut self,
        spec: &TaskSpec,
        mut bundle: impl FnMut(usize) -> Result<Vec<u8>>,
    ) -> Result<Vec<ShareSet>> {
        let task_id = self.next_task_id;
        self.next_task_id += 1;
        self.work.tasks += 1;
        let task_bytes = spec.to_bytes();
        for i in 1..=self.params.n() {
            self.send(WireMessage::new(MessageKind::Task, task_id, i as u32, task_bytes.clone()))?;
            let payload = bundle(i)?;
            self.send(WireMessage::new(MessageKind::Shares, task_id, i as u32, payload))?;
        }
        self.collect(task_id, spec)
    }

    /// Barrier: all `N` results or a protocol failure. Results are recorded
    /// and returned in server-index order whatever order they arrived in.
    fn collect(&mut self, task_id: u64, spec: &TaskSpec) -> Result<Vec<ShareSet>> {
        let n = self.params.n();
        let deadline = Instant::now() + self.cfg.timeout;
        let mut got: Vec<Option<WireMessage>> = vec![None; n];
        let mut failure = None;
        while got.iter().any(Option::is_none) {
            let left = deadline.saturating_duration_since(Instant::now());
            let inbound = match self.conn.inbound.recv_timeout(left) {
                Ok(m) => m,
                Err(_) => {
                    let missing: Vec<usize> = (1..=n).filter(|&i| got[i - 1].is_none()).collect();
                    failure = Some(Error::Protocol(format!(
                        "task {task_id}: no result from worker(s) {missing:?} within {:?}",
                        self.cfg.timeout
                    )));
                    break;
                }
            };
            match inbound {
                Inbound::Closed(i, why) => {
                    if got[i as usize - 1].is_none() {
                        failure = Some(Error::Protocol(format!(
                            "task {task_id}: worker {i} disconnected before returning a result ({why})"
                        )));
                        break;
                    }
                }
                Inbound::Frame(i, bytes) => {
                    let msg = WireMessage::decode(&bytes)?;
                    if msg.server_index != i {
                        failure = Some(Error::Protocol(format!(
                            "link {i} delivered a message claiming server {}",
                            msg.server_index
                        )));
                        self.transcript.record(&msg, Endpoint::Worker(i), Endpoint::Master);
                        break;
                    }
                    if msg.kind == MessageKind::Error {
                        self.transcript.record(&msg, Endpoint::Worker(i), Endpoint::Master);
                        failure = Some(Error::Protocol(format!(
                            "worker {i} rejected task {}: {}",
                            msg.task_id,
                            String::from_utf8_lossy(&msg.payload)
                        )));
                        break;
                    }
                    if msg.kind != MessageKind::Result || msg.task_id != task_id {
                        self.transcript.record(&msg, Endpoint::Worker(i), Endpoint::Master);
                        failure = Some(Error::Protocol(format!(
                            "worker {i} sent {:?} for task {} while task {task_id} was pending",
                            msg.kind, msg.task_id
                        )));
                        break;
                    }
                    got[i as usize - 1] = Some(msg);
                }
            }
        }
        for (k, m) in got.iter().enumerate() {
            if let Some(m) = m {
                self.transcript.record(m, Endpoint::Worker(k as u32 + 1), Endpoint::Master);
            }
        }
        if let Some(e) = failure {
            return Err(e);
        }
        got.into_iter()
            .enumerate()
            .map(|(k, m)| {
                let set = ShareSet::from_bytes(&m.expect("barrier complete").payload)?;
                if set.n() != 1 || set.shape != spec.result_shape || set.params_digest != spec.params_digest {
                    return Err(Error::Protocol(format!(
                        "worker {} returned a {:?} result for {} server(s), expected {:?}",
                        k + 1,
                        set.shape,
                        set.n(),
                        spec.result_shape
                    )));
                }
                Ok(set)
            })
            .collect()
    }

    fn decode(&mut self, results: Vec<ShareSet>) -> Result<Vec<Complex64>> {
        let z: Vec<Vec<Complex64>> = results.into_iter().map(|mut s| s.shares.pop().unwrap()).collect();
        self.work.master_decode_macs += (self.params.n() * z.first().map_or(0, Vec::len)) as u64;
        sharing::decode_arrays(&z, &self.weights)
    }

    /// Evaluates `f` element-wise on a secret array. Returns the complex
    /// decoded values; for real inputs the real part is the answer.
    pub fn eval_polynomial(
        &mut self,
        encoder: &mut Encoder,
        values: &[Complex64],
        shape: Shape,
        f: &Polynomial,
    ) -> Result<Vec<Complex64>> {
        self.check_encoder(encoder)?;
        if values.len() != shape.len() {
            return Err(Error::arg(format!(
                "secret has {} elements but shape needs {}",
                values.len(),
                shape.len()
            )));
        }
        let spec = TaskSpec::eval_polynomial(f.clone(), &self.params, shape)?;
        let noise = encoder.noise(values.len())?;
        warn_out_of_range(values, self.params.r());
        let (n, t, len) = (self.params.n(), self.params.t(), values.len());
        self.work.master_encode_macs += (n * t * len) as u64;
        self.work.worker_macs += (n * f.degree().max(1) * len) as u64;
        let params = self.params.clone();
        let results = self.dispatch(&spec, |i| {
            let share = ShareSet::single(shape, sharing::share_for_server(values, &params, &noise, i), params.digest())?;
            wire::encode_bundle(&[(Slot::Operand, &share)])
        })?;
        self.decode(results)
    }

    /// Registers the secret data matrix. Its shares go out with the next
    /// training product and stay on the workers for the rest of the session.
    pub fn share_matrix(&mut self, encoder: &mut Encoder, values: Vec<Complex64>, rows: usize, cols: usize) -> Result<()> {
        self.check_encoder(encoder)?;
        if values.len() != rows * cols {
            return Err(Error::arg(format!("{} values for a {rows}x{cols} matrix", values.len())));
        }
        warn_out_of_range(&values, self.params.r());
        let noise = encoder.noise(values.len())?;
        self.work.master_encode_macs += (self.params.n() * self.params.t() * values.len()) as u64;
        self.pending_matrix = Some(PendingMatrix {
            values,
            rows,
            cols,
            noise,
        });
        self.matrix_shape = Some((rows, cols));
        Ok(())
    }

    /// One training product: shares `w`, has every worker compute
    /// `X_i^T (X_i w_i)` and decodes `X^T X w`.
    pub fn lr_product(&mut self, encoder: &mut Encoder, w: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_encoder(encoder)?;
        let (rows, cols) = self
            .matrix_shape
            .ok_or_else(|| Error::arg("share_matrix must be called before lr_product"))?;
        if w.len() != cols {
            return Err(Error::arg(format!("model has {} entries, data has {cols} columns", w.len())));
        }
        let spec = TaskSpec::lr_product(&self.params, cols)?;
        let noise = encoder.noise(cols)?;
        warn_out_of_range(w, self.params.r());
        let n = self.params.n();
        self.work.master_encode_macs += (n * self.params.t() * cols) as u64;
        self.work.worker_macs += (n * 2 * rows * cols) as u64;
        let params = self.params.clone();
        let pending = self.pending_matrix.take();
        let shape = Shape::Vector { len: cols };
        let results = self.dispatch(&spec, |i| {
            let share = ShareSet::single(shape, sharing::share_for_server(w, &params, &noise, i), params.digest())?;
            match &pending {
                Some(p) => {
                    let x = ShareSet::single(
                        Shape::Matrix { rows: p.rows, cols: p.cols },
                        sharing::share_for_server(&p.values, &params, &p.noise, i),
                        params.digest(),
                    )?;
                    wire::encode_bundle(&[(Slot::Matrix, &x), (Slot::Operand, &share)])
                }
                None => wire::encode_bundle(&[(Slot::Operand, &share)]),
            }
        })?;
        self.decode(results)
    }

    /// Tells every worker to stop and returns the session transcript.
    pub fn shutdown(mut self) -> Transcript {
        self.close();
        std::mem::take(&mut self.transcript)
    }

    fn close(&mut self) {
        if self.closed {
            return;
        }
        self.closed = true;
        let id = self.next_task_id;
        for i in 1..=self.params.n() as u32 {
            let _ = self.send(WireMessage::new(MessageKind::Shutdown, id, i, Vec::new()));
        }
        self.conn.close();
    }
}

impl Drop for Master {
    fn drop(&mut self) {
        self.close();
    }
}

fn warn_out_of_range(values: &[Complex64], r: f64) {
    let outside = sharing::count_out_of_range(values, r);
    if outside > 0 {
        log::warn!("{outside} secret element(s) exceed r = {r}; accuracy and privacy bounds do not cover them");
    }
}

/// Outcome of [`run_protocol`]. The transcript is kept even when the run failed.
#[derive(Debug)]
pub struct ProtocolRun {
    pub output: Result<Vec<Complex64>>,
    pub transcript: Transcript,
    pub traffic: TrafficCounts,
    pub work: WorkCounts,
}

/// One complete evaluation of `f` on a secret array: connect, encode,
/// dispatch, barrier, decode, shut down.
pub fn run_protocol(
    encoder: &mut Encoder,
    values: &[Complex64],
    shape: Shape,
    f: &Polynomial,
    transport: &Transport,
    cfg: MasterConfig,
) -> ProtocolRun {
    let mut master = match Master::connect(encoder.params().clone(), transport, cfg) {
        Ok(m) => m,
        Err(e) => {
            return ProtocolRun {
                output: Err(e),
                transcript: Transcript::new(cfg.transcript),
                traffic: TrafficCounts::default(),
                work: WorkCounts::default(),
            }
        }
    };
    let output = master.eval_polynomial(encoder, values, shape, f);
    let work = master.work();
    let transcript = master.shutdown();
    ProtocolRun {
        output,
        traffic: transcript.counts(),
        transcript,
        work,
    }
}
