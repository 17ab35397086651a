//! Finite-field baseline: fixed-point quantization plus Shamir sharing over
//! `Z_p`. Nothing here detects wrap-around; the optional audit recomputes the
//! gradient in exact integers only to report when it happened.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate, logistic_loss, Dataset, IterationRecord, ModelState, TrainingConfig};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::runtime::TrafficCounts;

pub const MERSENNE_61: u64 = (1 << 61) - 1;

fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1 % p;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, p);
        }
        b = mul_mod(b, b, p);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin; exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &b in &BASES {
        if n.is_multiple_of(b) {
            return n == b;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'bases: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

/// Arithmetic in `Z_p`, elements stored in `[0, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Field {
    p: u64,
}

impl Field {
    /// `p` must be a prime below `2^62`.
    pub fn new(p: u64) -> Result<Self> {
        if p >= 1 << 62 {
            return Err(Error::param(format!("modulus {p} must be below 2^62")));
        }
        if !is_prime(p) {
            return Err(Error::param(format!("modulus {p} is not prime")));
        }
        Ok(Field { p })
    }

    pub fn p(self) -> u64 {
        self.p
    }

    /// `(p - 1) / 2`, the largest magnitude a centered element represents.
    pub fn half(self) -> u64 {
        (self.p - 1) / 2
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        if self.p == MERSENNE_61 {
            let x = a as u128 * b as u128;
            let s = (x as u64 & MERSENNE_61) + (x >> 61) as u64;
            if s >= MERSENNE_61 {
                s - MERSENNE_61
            } else {
                s
            }
        } else {
            mul_mod(a, b, self.p)
        }
    }

    pub fn pow(self, b: u64, e: u64) -> u64 {
        pow_mod(b, e, self.p)
    }

    pub fn inv(self, a: u64) -> Result<u64> {
        if a.is_multiple_of(self.p) {
            return Err(Error::Singular("zero has no inverse".into()));
        }
        Ok(self.pow(a, self.p - 2))
    }

    pub fn from_i128(self, v: i128) -> u64 {
        v.rem_euclid(self.p as i128) as u64
    }

    /// Representative in `[-(p-1)/2, (p-1)/2]`.
    pub fn centered(self, a: u64) -> i128 {
        if a > self.half() {
            a as i128 - self.p as i128
        } else {
            a as i128
        }
    }

    /// `sum_j a_j b_j`.
    pub fn dot(self, a: &[u64], b: &[u64]) -> u64 {
        a.iter().zip(b).fold(0, |acc, (&x, &y)| self.add(acc, self.mul(x, y)))
    }
}

/// Shamir shares of every element at points `1..=n`, random degree `t`.
pub fn shamir_share<R: Rng + ?Sized>(field: Field, secret: &[u64], n: usize, t: usize, rng: &mut R) -> Vec<Vec<u64>> {
    let coeffs: Vec<Vec<u64>> = (0..t)
        .map(|_| secret.iter().map(|_| rng.gen_range(0..field.p())).collect())
        .collect();
    (1..=n as u64)
        .map(|x| {
            let powers: Vec<u64> = (1..=t as u64).map(|j| field.pow(x, j)).collect();
            secret
                .iter()
                .enumerate()
                .map(|(e, &s)| {
                    coeffs
                        .iter()
                        .zip(&powers)
                        .fold(s, |acc, (c, &xp)| field.add(acc, field.mul(c[e], xp)))
                })
                .collect()
        })
        .collect()
}

/// Lagrange weights for interpolating at 0 from the points `1..=count`.
pub fn lagrange_at_zero(field: Field, count: usize) -> Result<Vec<u64>> {
    (1..=count as u64)
        .map(|i| {
            let (mut num, mut den) = (1u64, 1u64);
            for j in (1..=count as u64).filter(|&j| j != i) {
                num = field.mul(num, j);
                den = field.mul(den, field.sub(j % field.p(), i % field.p()));
            }
            Ok(field.mul(num, field.inv(den)?))
        })
        .collect()
}

/// `sum_i lambda_i z_i` element-wise.
pub fn shamir_decode(field: Field, shares: &[Vec<u64>], lambdas: &[u64]) -> Vec<u64> {
    let len = shares[0].len();
    (0..len)
        .map(|e| {
            shares
                .iter()
                .zip(lambdas)
                .fold(0, |acc, (z, &l)| field.add(acc, field.mul(z[e], l)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub prime: u64,
    /// Fractional bits `l`: values are stored as `round(v * 2^l)`.
    pub frac_bits: u32,
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    /// Recompute the gradient in exact integers to report wrap-around.
    pub audit: bool,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            prime: MERSENNE_61,
            frac_bits: 16,
            n: 4,
            t: 1,
            seed: 0,
            audit: true,
        }
    }
}

impl FixedPointConfig {
    /// The workers evaluate a degree-3 product of degree-`t` shares.
    pub fn validate(&self) -> Result<Field> {
        let field = Field::new(self.prime)?;
        if self.t < 1 {
            return Err(Error::param("collusion bound t must be at least 1"));
        }
        let needed = 3 * self.t + 1;
        if self.n < needed {
            return Err(Error::InsufficientServers {
                needed,
                available: self.n,
            });
        }
        if self.n as u64 >= self.prime {
            return Err(Error::param("more servers than nonzero field elements"));
        }
        if self.frac_bits == 0 || self.frac_bits > 40 {
            return Err(Error::param(format!("fractional bits {} out of range", self.frac_bits)));
        }
        Ok(field)
    }

    fn scale(&self, extra: u32) -> f64 {
        2f64.powi((self.frac_bits * extra) as i32)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointRun {
    pub model: ModelState,
    /// Iterations (1-based) whose exact gradient left `[-(p-1)/2, (p-1)/2]`.
    /// Empty when the audit is off.
    pub overflow_iterations: Vec<usize>,
    pub traffic: TrafficCounts,
    pub master_field_mults: u64,
    pub worker_field_mults: u64,
}

fn quantize(v: f64, scale: f64) -> i128 {
    (v * scale).round() as i128
}

/// Mean over features of `|(1/m) sum_i x_ik (2 - 4 l_i)|`, the per-sample size
/// of the first gradient in quantized units divided by `2^(3l)`.
pub fn label_statistic(data: &Dataset) -> f64 {
    let mut s = vec![0.0; data.d];
    for i in 0..data.m {
        let c = 2.0 - 4.0 * data.labels[i];
        for (a, x) in s.iter_mut().zip(data.row(i)) {
            *a += x * c;
        }
    }
    s.iter().map(|v| (v / data.m as f64).abs()).sum::<f64>() / data.d as f64
}

/// Sample size above which the first gradient cannot fit the field.
///
/// At `w = 0` the exact gradient is `2^(3l) X^T (2 - 4l)`, whose L1 mass grows
/// like `m * d * 2^(3l) * stat` with `stat` from [`label_statistic`]. A field
/// element reduces to at most `(p-1)/2` in magnitude, so once that mass
/// exceeds `d (p-1)/2` the decoded gradient has necessarily wrapped. The
/// statistic of `population` stands in for the per-sample one.
pub fn certified_overflow_threshold(population: &Dataset, cfg: &FixedPointConfig) -> Result<f64> {
    let field = cfg.validate()?;
    let stat = label_statistic(population);
    Ok(field.half() as f64 / (cfg.scale(3) * stat))
}

fn worker_product(field: Field, x: &[u64], c: &[u64], w: &[u64], m: usize, d: usize) -> Vec<u64> {
    let mut z = vec![0u64; d];
    for i in 0..m {
        let row = &x[i * d..(i + 1) * d];
        let v = field.add(field.dot(row, w), c[i]);
        for (o, &a) in z.iter_mut().zip(row) {
            *o = field.add(*o, field.mul(a, v));
        }
    }
    z
}

/// `None` if some intermediate does not fit in `i128`, which is itself a wrap.
fn exact_gradient(x: &[i128], c: &[i128], w: &[i128], m: usize, d: usize) -> Option<Vec<i128>> {
    let mut g = vec![0i128; d];
    for i in 0..m {
        let row = &x[i * d..(i + 1) * d];
        let mut v = c[i];
        for (a, b) in row.iter().zip(w) {
            v = v.checked_add(a.checked_mul(*b)?)?;
        }
        for (o, a) in g.iter_mut().zip(row) {
            *o = o.checked_add(a.checked_mul(v)?)?;
        }
    }
    Some(g)
}

/// Degree-1 logistic regression with every product computed on Shamir shares
/// over `Z_p`: `w <- w - beta/(4m) * G / 2^(3l)` where `G` is the centered
/// decoding of `X^T (X w + (2 - 4l) 2^(2l))`.
pub fn train_fixed_point(
    data: &Dataset,
    cfg: &TrainingConfig,
    fx: &FixedPointConfig,
    test: Option<&Dataset>,
    exec: Execution,
) -> Result<FixedPointRun> {
    cfg.validate()?;
    let field = fx.validate()?;
    let (m, d, n, t) = (data.m, data.d, fx.n, fx.t);
    let mut rng = ChaCha20Rng::seed_from_u64(fx.seed);
    let (s1, s2, s3) = (fx.scale(1), fx.scale(2), fx.scale(3));

    let xq: Vec<i128> = data.x.iter().map(|&v| quantize(v, s1)).collect();
    let cq: Vec<i128> = data.labels.iter().map(|&l| quantize(2.0 - 4.0 * l, s2)).collect();
    let xf: Vec<u64> = xq.iter().map(|&v| field.from_i128(v)).collect();
    let cf: Vec<u64> = cq.iter().map(|&v| field.from_i128(v)).collect();
    let x_shares = shamir_share(field, &xf, n, t, &mut rng);
    let c_shares = shamir_share(field, &cf, n, t, &mut rng);
    let used = 3 * t + 1;
    let lambdas = lagrange_at_zero(field, used)?;

    let mut master_mults = ((m * d + m) * n * t) as u64;
    let mut worker_mults = 0u64;
    let mut overflow_iterations = Vec::new();
    let mut state = ModelState::zeros(d);
    let step = cfg.beta / (4.0 * m as f64);
    for j in 1..=cfg.k {
        let wq: Vec<i128> = state.w.iter().map(|&v| quantize(v, s1)).collect();
        let wf: Vec<u64> = wq.iter().map(|&v| field.from_i128(v)).collect();
        let w_shares = shamir_share(field, &wf, n, t, &mut rng);
        let z = exec::map_indexed(exec, n, |i| worker_product(field, &x_shares[i], &c_shares[i], &w_shares[i], m, d));
        let g = shamir_decode(field, &z[..used], &lambdas);
        master_mults += (d * n * t + d * used) as u64;
        worker_mults += (n * 2 * m * d) as u64;
        if fx.audit {
            let wrapped = match exact_gradient(&xq, &cq, &wq, m, d) {
                Some(g) => g.iter().any(|v| v.unsigned_abs() > field.half() as u128),
                None => true,
            };
            if wrapped {
                overflow_iterations.push(j);
            }
        }
        for (w, &gk) in state.w.iter_mut().zip(&g) {
            *w -= step * (field.centered(gk) as f64 / s3);
        }
        let rec = IterationRecord {
            iteration: j,
            train_loss: logistic_loss(data, &state.w),
            test_accuracy: test.map(|ts| evaluate(&state.w, ts)).transpose()?,
            residue_max: 0.0,
            u_error_bound: None,
            u_drift: None,
            degraded: overflow_iterations.last() == Some(&j),
        };
        state.push(rec);
    }
    let k = cfg.k as u64;
    let n64 = n as u64;
    let traffic = TrafficCounts {
        master_to_worker: n64 * (k + 1),
        worker_to_master: n64 * k,
        worker_to_worker: 0,
        bytes_master_to_worker: 8 * n64 * ((m * d + m) as u64 + k * d as u64),
        bytes_worker_to_master: 8 * n64 * k * d as u64,
    };
    Ok(FixedPointRun {
        model: state,
        overflow_iterations,
        traffic,
        master_field_mults: master_mults,
        worker_field_mults: worker_mults,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::{toy, train_centralized, ClassMap, SigmoidMode};
    use proptest::prelude::*;

    #[test]
    fn primality() {
        assert!(is_prime(MERSENNE_61));
        assert!(is_prime(2) && is_prime(97) && is_prime(18_446_744_073_709_551_557));
        assert!(!is_prime(1) && !is_prime(561) && !is_prime(3_215_031_751));
        assert!(!is_prime((1 << 61) + 1));
        let naive = |n: u64| n >= 2 && (2..).take_while(|k| k * k <= n).all(|k| !n.is_multiple_of(k));
        for n in 0..2000 {
            assert_eq!(is_prime(n), naive(n), "{n}");
        }
        assert!(Field::new(15).is_err());
        assert!(Field::new((1 << 62) + 135).is_err());
    }

    proptest! {
        #[test]
        fn mersenne_mul_matches_generic(a in 0..MERSENNE_61, b in 0..MERSENNE_61) {
            let f = Field::new(MERSENNE_61).unwrap();
            prop_assert_eq!(f.mul(a, b), mul_mod(a, b, MERSENNE_61));
        }

        #[test]
        fn shamir_round_trip(secret in proptest::collection::vec(-1_000_000i128..1_000_000, 1..8), seed in any::<u64>(), t in 1usize..4) {
            for p in [MERSENNE_61, 1_000_000_007] {
                let f = Field::new(p).unwrap();
                let s: Vec<u64> = secret.iter().map(|&v| f.from_i128(v)).collect();
                let shares = shamir_share(f, &s, 2 * t + 1, t, &mut ChaCha20Rng::seed_from_u64(seed));
                let back = shamir_decode(f, &shares[..t + 1], &lagrange_at_zero(f, t + 1).unwrap());
                let centered: Vec<i128> = back.iter().map(|&v| f.centered(v)).collect();
                prop_assert_eq!(&centered, &secret);
            }
        }
    }

    #[test]
    fn inverse_and_centering() {
        let f = Field::new(101).unwrap();
        assert_eq!(f.mul(f.inv(7).unwrap(), 7), 1);
        assert!(f.inv(0).is_err());
        assert_eq!(f.centered(100), -1);
        assert_eq!(f.centered(50), 50);
        assert_eq!(f.centered(51), -50);
    }

    fn small_cfg() -> TrainingConfig {
        TrainingConfig {
            beta: 0.05,
            k: 5,
            sigmoid: SigmoidMode::Degree1,
        }
    }

    #[test]
    fn small_problem_follows_plaintext() {
        let data = toy(12, 3, 2);
        let fx = FixedPointConfig::default();
        let run = train_fixed_point(&data, &small_cfg(), &fx, None, Execution::Sequential).unwrap();
        let plain = train_centralized(&data, &small_cfg(), None).unwrap();
        assert!(run.overflow_iterations.is_empty());
        for (a, b) in run.model.w.iter().zip(&plain.w) {
            assert!((a - b).abs() < 1e-3 * (1.0 + b.abs()), "{a} vs {b}");
        }
        assert_eq!(run.traffic.worker_to_worker, 0);
        assert_eq!(run.traffic.master_to_worker, 4 * 6);
        let par = train_fixed_point(&data, &small_cfg(), &fx, None, Execution::Parallel).unwrap();
        assert_eq!(par.model.w, run.model.w);
    }

    #[test]
    fn more_servers_decode_the_same() {
        let data = toy(8, 2, 4);
        let a = train_fixed_point(&data, &small_cfg(), &FixedPointConfig::default(), None, Execution::Sequential).unwrap();
        let fx = FixedPointConfig { n: 6, ..FixedPointConfig::default() };
        let b = train_fixed_point(&data, &small_cfg(), &fx, None, Execution::Sequential).unwrap();
        assert_eq!(a.model.w, b.model.w);
    }

    #[test]
    fn rejects_too_few_servers() {
        let fx = FixedPointConfig { n: 3, ..FixedPointConfig::default() };
        assert!(matches!(fx.validate(), Err(Error::InsufficientServers { needed: 4, available: 3 })));
    }

    #[test]
    fn overflow_beyond_certified_size() {
        // Constant features: statistic is exactly 255 * 2 for an all-zero-label set.
        let m = 40;
        let data = Dataset::new(vec![255.0; m * 2], vec![0.0; m], 2, ClassMap { positive: 1, negative: 0 }).unwrap();
        let fx = FixedPointConfig { frac_bits: 16, ..FixedPointConfig::default() };
        let thr = certified_overflow_threshold(&data, &fx).unwrap();
        let expected = ((MERSENNE_61 - 1) / 2) as f64 / (2f64.powi(48) * 510.0);
        assert!((thr - expected).abs() < 1e-9 * expected);
        assert!((m as f64) > thr);
        let cfg = TrainingConfig { k: 1, ..small_cfg() };
        let run = train_fixed_point(&data, &cfg, &fx, None, Execution::Sequential).unwrap();
        assert_eq!(run.overflow_iterations, vec![1]);
        // the decoded first step lost magnitude compared with the true one
        let plain = train_centralized(&data, &cfg, None).unwrap();
        assert!(run.model.w[0].abs() < plain.w[0].abs());
    }
}

