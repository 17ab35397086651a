use std::thread;

use analog_shards::runtime::{
    contains_bytes, run_protocol, Endpoint, Master, MasterConfig, TranscriptMode, Transport, WorkerServer,
};
use analog_shards::sharing::{Encoder, Masking, Polynomial, ProtocolParams, Shape};
use analog_shards::Execution;
use num_complex::Complex64;

fn real(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// Starts `n` TCP workers on ephemeral ports. Each serves one master and
/// exits on its shutdown message.
fn spawn_workers(n: usize) -> (Transport, Vec<thread::JoinHandle<()>>) {
    let mut addrs = Vec::new();
    let mut handles = Vec::new();
    for i in 1..=n as u32 {
        let server = WorkerServer::bind("127.0.0.1:0", i, Execution::Sequential).unwrap();
        addrs.push(server.local_addr().unwrap().to_string());
        handles.push(thread::spawn(move || server.run().unwrap()));
    }
    (Transport::Socket { addrs }, handles)
}

#[test]
fn socket_and_in_process_runs_agree_bit_for_bit() {
    let p = ProtocolParams::new(5, 2, 2, 1e4, 10.0, 255.0, 41).unwrap();
    let secret = real(&[3.0, -200.5, 17.25, 0.0, 254.0, -1e-3]);
    let f = Polynomial::new(vec![1.0, -2.0, 0.5]).unwrap();
    let shape = Shape::Vector { len: secret.len() };

    let local = run_protocol(&mut Encoder::new(p.clone()), &secret, shape, &f, &Transport::simulate(5), MasterConfig::default());
    let (socket, handles) = spawn_workers(5);
    let remote = run_protocol(&mut Encoder::new(p), &secret, shape, &f, &socket, MasterConfig::default());
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(local.output.unwrap(), remote.output.unwrap());
    assert_eq!(local.traffic, remote.traffic);
    let sums = |t: &analog_shards::runtime::Transcript| t.entries.iter().map(|e| e.checksum).collect::<Vec<_>>();
    assert_eq!(sums(&local.transcript), sums(&remote.transcript));
}

#[test]
fn training_products_agree_over_sockets() {
    let p = ProtocolParams::new(4, 1, 3, 1e3, 10.0, 10.0, 9).unwrap();
    let (rows, cols) = (12, 3);
    let x = real(&(0..rows * cols).map(|k| ((k * 7) % 11) as f64 - 5.0).collect::<Vec<_>>());
    let ws = [real(&[0.0, 0.0, 0.0]), real(&[0.5, -1.0, 2.0])];

    let run = |transport: &Transport| {
        let mut enc = Encoder::new(p.clone());
        let mut m = Master::connect(p.clone(), transport, MasterConfig::default()).unwrap();
        m.share_matrix(&mut enc, x.clone(), rows, cols).unwrap();
        let out: Vec<_> = ws.iter().map(|w| m.lr_product(&mut enc, w).unwrap()).collect();
        m.shutdown();
        out
    };
    let local = run(&Transport::simulate(4));
    let (socket, handles) = spawn_workers(4);
    let remote = run(&socket);
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(local, remote);
}

#[test]
fn workers_never_see_the_plain_secret() {
    let marker = 123.456_789_012_5;
    let secret = real(&[marker, -marker, 42.0]);
    let shape = Shape::Vector { len: 3 };
    let cfg = MasterConfig {
        transcript: TranscriptMode::Full,
        ..MasterConfig::default()
    };
    let f = Polynomial::monomial(1);
    let scan = |masking: Masking| {
        let p = ProtocolParams::new(4, 2, 1, 1e3, 10.0, 255.0, 5).unwrap();
        let run = run_protocol(&mut Encoder::new(p).with_masking(masking), &secret, shape, &f, &Transport::simulate(4), cfg);
        run.output.unwrap();
        let mut hits = 0;
        for e in &run.transcript.entries {
            assert!(matches!(
                (e.from, e.to),
                (Endpoint::Master, Endpoint::Worker(_)) | (Endpoint::Worker(_), Endpoint::Master)
            ));
            if matches!(e.to, Endpoint::Worker(_)) {
                let payload = e.payload.as_ref().expect("full transcript keeps payloads");
                if [marker, -marker].iter().any(|v| contains_bytes(payload, &v.to_le_bytes())) {
                    hits += 1;
                }
            }
        }
        hits
    };
    // Without masking every share is the secret, so the scan must find it.
    assert_eq!(scan(Masking::Disabled), 4);
    assert_eq!(scan(Masking::TruncatedGaussian), 0);
}
