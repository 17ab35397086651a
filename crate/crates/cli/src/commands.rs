use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use analog_shards::accuracy::{accuracy_bound, coefficient_mass, tradeoff_csv, tradeoff_table, FloatModel};
use analog_shards::learning::{
    self, compare, filter_binary, history_csv, train_analog, train_centralized, train_fixed_point, AnalogConfig,
    CompareConfig, Dataset, FeatureScale, FixedPointConfig, RunReport, SigmoidMode, TrainingConfig,
};
use analog_shards::privacy::PrivacyReport;
use analog_shards::runtime::{run_protocol, MasterConfig, Transport};
use analog_shards::sharing::{decode_arrays, decoder_weights, Encoder, Masking, Polynomial, ProtocolParams, Shape, ShareSet};
use analog_shards::{Error, Execution};
use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::{
    BoundsArgs, Command, CompareArgs, DataArgs, EvalPolyArgs, FixedArgs, ProtocolArgs, ReconstructArgs, ShareArgs,
    TradeoffArgs, TrainArgs, TrainerKind, TransportArgs,
};

pub fn run(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Share(a) => share(a, out),
        Command::Reconstruct(a) => reconstruct(a, out),
        Command::EvalPoly(a) => eval_poly(a, out),
        Command::Bounds(a) => bounds(a, out),
        Command::Tradeoff(a) => tradeoff(a, out),
        Command::Train(a) => train(a, out),
        Command::Compare(a) => run_compare(a, out),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

pub fn share_file(prefix: &Path, i: usize) -> PathBuf {
    with_suffix(prefix, &format!(".server{i}.shares"))
}

fn params(p: &ProtocolArgs, degree: usize) -> Result<ProtocolParams> {
    Ok(ProtocolParams::new(p.n, p.t, degree, p.sigma, p.alpha, p.r, p.seed)?)
}

fn write_json(out: &mut dyn Write, v: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, v)?;
    writeln!(out)?;
    Ok(())
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn transport(t: &TransportArgs, n: usize) -> Transport {
    if t.workers.is_empty() {
        Transport::InProcess {
            n: t.simulate.unwrap_or(n),
            exec: exec(t.sequential),
            fault: None,
        }
    } else {
        Transport::Socket {
            addrs: t.workers.clone(),
        }
    }
}

fn master_config(t: &TransportArgs) -> Result<MasterConfig> {
    if !(t.timeout > 0.0 && t.timeout.is_finite()) {
        return Err(Error::InvalidArgument(format!("timeout {} must be positive", t.timeout)).into());
    }
    Ok(MasterConfig {
        timeout: Duration::from_secs_f64(t.timeout),
        exec: exec(t.sequential),
        ..MasterConfig::default()
    })
}

fn read_matrix(path: &Path) -> Result<(Vec<f64>, Shape)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut values = Vec::new();
    let (mut rows, mut cols) = (0, None);
    for rec in rdr.records() {
        let rec = rec?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::InvalidArgument(format!("{}: row {} has {} columns", path.display(), rows + 1, rec.len())).into());
        }
        for f in rec.iter() {
            values.push(
                f.parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("{}: `{f}` is not a number: {e}", path.display())))?,
            );
        }
        rows += 1;
    }
    match cols {
        Some(cols) if rows > 0 && cols > 0 => Ok((values, Shape::Matrix { rows, cols })),
        _ => Err(Error::InvalidArgument(format!("{} holds no values", path.display())).into()),
    }
}

fn share(a: ShareArgs, out: &mut dyn Write) -> Result<()> {
    let params = params(&a.protocol, a.degree)?;
    let (values, shape) = match &a.input {
        Some(p) => read_matrix(p)?,
        None => {
            let len = a.secret.len();
            (a.secret.clone(), Shape::Vector { len })
        }
    };
    eprintln!("seed = {}", params.seed());
    let set = Encoder::new(params.clone()).share_real(&values, shape)?;
    let mut files = Vec::new();
    for i in 1..=params.n() {
        let path = share_file(&a.out_prefix, i);
        let single = ShareSet::single(shape, set.server(i).to_vec(), params.digest())?;
        std::fs::write(&path, single.to_bytes()).with_context(|| format!("cannot write {}", path.display()))?;
        files.push(path.display().to_string());
    }
    write_json(
        out,
        &json!({ "seed": params.seed(), "shape": shape, "files": files, "elements": values.len() }),
    )
}

fn reconstruct(a: ReconstructArgs, out: &mut dyn Write) -> Result<()> {
    let params = params(&a.protocol, a.degree)?;
    let files: Vec<PathBuf> = match &a.prefix {
        Some(p) => (1..=params.n()).map(|i| share_file(p, i)).collect(),
        None => a.files.clone(),
    };
    if files.len() != params.n() {
        return Err(Error::InsufficientServers {
            needed: params.n(),
            available: files.len(),
        }
        .into());
    }
    let mut shares = Vec::new();
    let mut shape = None;
    for (k, f) in files.iter().enumerate() {
        let bytes = std::fs::read(f).map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", f.display())))?;
        let set = ShareSet::from_bytes(&bytes)?;
        if set.params_digest != params.digest() {
            return Err(Error::Format {
                field: "params digest",
                detail: format!("{} was made with different parameters", f.display()),
            }
            .into());
        }
        if set.n() != 1 || *shape.get_or_insert(set.shape) != set.shape {
            bail!(Error::Format {
                field: "shape",
                detail: format!("{} (server {}) does not match the other files", f.display(), k + 1),
            });
        }
        shares.push(set.shares.into_iter().next().unwrap());
    }
    let decoded = decode_arrays(&shares, &decoder_weights(&params)?)?;
    let residue = decoded.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    write_json(
        out,
        &json!({
            "shape": shape,
            "values": decoded.iter().map(|z| z.re).collect::<Vec<_>>(),
            "residue_max": residue,
        }),
    )
}

fn eval_poly(a: EvalPolyArgs, out: &mut dyn Write) -> Result<()> {
    let f = Polynomial::new(a.coeffs.clone())?;
    let params = params(&a.protocol, f.degree().max(1))?;
    let bound = accuracy_bound(coefficient_mass(&f), &params, FloatModel::default(), None)?;
    eprintln!("seed = {}", params.seed());
    let values: Vec<Complex64> = a.secret.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    let mut enc = Encoder::new(params.clone());
    let run = run_protocol(
        &mut enc,
        &values,
        Shape::Vector { len: values.len() },
        &f,
        &transport(&a.transport, params.n()),
        master_config(&a.transport)?,
    );
    let decoded = run.output?;
    let results: Vec<Value> = a
        .secret
        .iter()
        .zip(&decoded)
        .map(|(&s, z)| {
            let expected = f.eval_real(s);
            json!({
                "secret": s,
                "decoded": z.re,
                "imag": z.im,
                "expected": expected,
                "abs_error": (z - Complex64::new(expected, 0.0)).norm(),
            })
        })
        .collect();
    let within = results.iter().all(|r| r["abs_error"].as_f64().unwrap() <= bound.delta_f);
    write_json(
        out,
        &json!({
            "seed": params.seed(),
            "n": params.n(),
            "t": params.t(),
            "degree": params.degree(),
            "results": results,
            "delta_f": bound.delta_f,
            "log10_delta_f": bound.log10_delta_f,
            "within_bound": within,
            "traffic": run.traffic,
            "work": run.work,
        }),
    )
}

fn bounds(a: BoundsArgs, out: &mut dyn Write) -> Result<()> {
    let report = PrivacyReport::compute(a.r, a.sigma, a.t, a.alpha)?;
    let mut v = serde_json::to_value(&report)?;
    let obj = v.as_object_mut().unwrap();
    obj.insert("log10_eta_s".into(), json!(report.eta_s.log10()));
    if let Some(d) = report.eta_s_direct {
        obj.insert("log10_eta_s_direct".into(), json!(d.log10()));
    }
    let n = a.n.unwrap_or(a.degree * a.t + 1);
    let accuracy = ProtocolParams::new(n, a.t, a.degree, a.sigma, a.alpha, a.r, 0)
        .and_then(|p| accuracy_bound(a.a_d, &p, FloatModel::default(), None));
    match accuracy {
        Ok(b) => obj.insert("accuracy".into(), serde_json::to_value(b)?),
        Err(e) => obj.insert("accuracy_error".into(), json!(e.to_string())),
    };
    write_json(out, &v)
}

fn tradeoff(a: TradeoffArgs, out: &mut dyn Write) -> Result<()> {
    let n = a.n.unwrap_or(a.degree * a.t + 1);
    let template = ProtocolParams::new(n, a.t, a.degree, 1.0, a.alpha, a.r, 0)?;
    let rows = tradeoff_table(&a.sigma_grid, &template, a.a_d, FloatModel::new(a.v, 11)?)?;
    let csv = tradeoff_csv(&rows);
    if let Some(p) = &a.out {
        std::fs::write(p, &csv).with_context(|| format!("cannot write {}", p.display()))?;
    }
    out.write_all(csv.as_bytes())?;
    Ok(())
}

fn idx_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(name);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(Error::InvalidArgument(format!("{} has no {stem}[.gz]", dir.display())).into())
}

/// Training and test split of the two configured digits.
pub fn load_mnist_pair(d: &DataArgs) -> Result<(Dataset, Dataset)> {
    let [pos, neg] = d.classes[..] else {
        return Err(Error::InvalidArgument(format!("--classes needs two digits, got {:?}", d.classes)).into());
    };
    let scale: FeatureScale = d.scale.into();
    let load = |prefix: &str| -> Result<Dataset> {
        let raw = learning::load_mnist_idx(
            &idx_file(&d.mnist_dir, &format!("{prefix}-images-idx3-ubyte"))?,
            &idx_file(&d.mnist_dir, &format!("{prefix}-labels-idx1-ubyte"))?,
        )?;
        Ok(filter_binary(&raw, pos, neg)?.with_scale(scale)?)
    };
    Ok((load("train")?, load("t10k")?))
}

fn default_beta(beta: Option<f64>, scale: FeatureScale) -> f64 {
    beta.unwrap_or(match scale {
        FeatureScale::Raw => 1e-6,
        FeatureScale::Unit => 0.05,
    })
}

fn fixed_config(f: &FixedArgs, p: &ProtocolArgs) -> FixedPointConfig {
    FixedPointConfig {
        prime: f.prime,
        frac_bits: f.frac_bits,
        n: p.n,
        t: p.t,
        seed: p.seed,
        audit: true,
    }
}

fn l2(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let (mut data, test) = load_mnist_pair(&a.data)?;
    if let Some(size) = a.train_size {
        if size == 0 || size % 2 == 1 {
            return Err(Error::InvalidArgument(format!("--train-size {size} must be positive and even")).into());
        }
        data = data.balanced_subsample(size / 2, a.protocol.seed)?;
    }
    let sigmoid = match a.trainer {
        TrainerKind::Centralized => a.sigmoid.into(),
        _ => SigmoidMode::Degree1,
    };
    let cfg = TrainingConfig {
        beta: default_beta(a.beta, data.scale),
        k: a.k,
        sigmoid,
    };
    eprintln!("seed = {}; {} training / {} test samples", a.protocol.seed, data.m, test.m);
    let mut report = RunReport {
        trainer: format!("{:?}", a.trainer).to_lowercase(),
        train_size: data.m,
        test_size: Some(test.m),
        features: data.d,
        class_map: data.class_map,
        scale: data.scale,
        training: cfg,
        seed: a.protocol.seed,
        final_train_loss: None,
        final_test_accuracy: None,
        final_weights_l2: 0.0,
        privacy: None,
        leakage: None,
        traffic: None,
        work: None,
        u_error_bound: None,
        max_drift: None,
        overflow_iterations: None,
        warnings: Vec::new(),
        history: Vec::new(),
    };
    let model = match a.trainer {
        TrainerKind::Centralized => train_centralized(&data, &cfg, Some(&test))?,
        TrainerKind::Analog => {
            let mut ac = AnalogConfig::new(params(&a.protocol, 3)?);
            ac.master = master_config(&a.transport)?;
            ac.track_drift = a.track_drift;
            if a.zero_noise {
                ac.masking = Masking::Disabled;
            }
            let run = train_analog(&data, &cfg, &ac, &transport(&a.transport, a.protocol.n), Some(&test))?;
            report.privacy = Some(run.privacy);
            report.leakage = Some(run.leakage);
            report.traffic = Some(run.traffic);
            report.work = Some(run.work);
            report.u_error_bound = run.u_error_bound;
            report.max_drift = run.max_drift;
            report.warnings = run.warnings;
            run.model
        }
        TrainerKind::FixedPoint => {
            let run = train_fixed_point(&data, &cfg, &fixed_config(&a.fixed, &a.protocol), Some(&test), exec(a.transport.sequential))?;
            report.traffic = Some(run.traffic);
            report.overflow_iterations = Some(run.overflow_iterations);
            run.model
        }
    };
    report.final_train_loss = model.history.last().map(|r| r.train_loss);
    report.final_test_accuracy = model.history.last().and_then(|r| r.test_accuracy);
    report.final_weights_l2 = l2(&model.w);
    report.history = model.history;
    if let Some(prefix) = &a.out_prefix {
        let rp = with_suffix(prefix, ".report.json");
        std::fs::write(&rp, serde_json::to_string_pretty(&report)?).with_context(|| format!("cannot write {}", rp.display()))?;
        let cp = with_suffix(prefix, ".curve.csv");
        std::fs::write(&cp, history_csv(&report.history)).with_context(|| format!("cannot write {}", cp.display()))?;
    }
    write_json(out, &report)
}

fn run_compare(a: CompareArgs, out: &mut dyn Write) -> Result<()> {
    let (pool, test) = load_mnist_pair(&a.data)?;
    let mut analog = AnalogConfig::new(params(&a.protocol, 3)?);
    analog.master.exec = exec(a.sequential);
    let cfg = CompareConfig {
        sizes: a.sizes.clone(),
        repeats: a.repeats,
        training: TrainingConfig {
            beta: default_beta(a.beta, pool.scale),
            k: a.k,
            sigmoid: a.sigmoid.into(),
        },
        analog,
        fixed: fixed_config(&a.fixed, &a.protocol),
        seed: a.protocol.seed,
        exec: exec(a.sequential),
    };
    eprintln!("seed = {}; pool {} / test {}", a.protocol.seed, pool.m, test.m);
    let report = compare(&pool, &test, &cfg)?;
    let csv = report.curve_csv();
    if let Some(prefix) = &a.out_prefix {
        let cp = with_suffix(prefix, ".curve.csv");
        std::fs::write(&cp, &csv).with_context(|| format!("cannot write {}", cp.display()))?;
        let rp = with_suffix(prefix, ".report.json");
        let full = json!({ "seed": a.protocol.seed, "training": cfg.training, "fixed_point": cfg.fixed, "compare": report });
        std::fs::write(&rp, serde_json::to_string_pretty(&full)?).with_context(|| format!("cannot write {}", rp.display()))?;
    }
    out.write_all(csv.as_bytes())?;
    Ok(())
}
