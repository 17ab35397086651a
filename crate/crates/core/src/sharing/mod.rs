//! Analog secret sharing: noise-masked polynomial encoding over complex
//! evaluation points, and constant-term recovery from the servers' results.

mod format;
mod noise;
mod params;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::linalg;

pub(crate) use format::{write_shape, Reader};
pub use format::{ShareSetJson, SHARE_MAGIC, SHARE_VERSION};
pub use noise::{
    sample_noise_block, sample_truncated_noise, truncated_complex_gaussian, NoiseBlock, NoiseDraw, MAX_REJECTIONS,
};
pub use params::{roots_of_unity, unit_root, ProtocolParams};

/// Shape of a shared secret. Data is stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Scalar,
    Vector { len: usize },
    Matrix { rows: usize, cols: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector { len } => len,
            Shape::Matrix { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-server shares of one secret. `shares[i - 1]` belongs to server `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareSet {
    pub shape: Shape,
    pub shares: Vec<Vec<Complex64>>,
    pub params_digest: [u8; 32],
}

impl ShareSet {
    pub fn new(shape: Shape, shares: Vec<Vec<Complex64>>, params_digest: [u8; 32]) -> Result<Self> {
        if let Some(bad) = shares.iter().position(|s| s.len() != shape.len()) {
            return Err(Error::arg(format!(
                "share {} has {} elements, shape needs {}",
                bad + 1,
                shares[bad].len(),
                shape.len()
            )));
        }
        Ok(ShareSet {
            shape,
            shares,
            params_digest,
        })
    }

    pub fn n(&self) -> usize {
        self.shares.len()
    }

    /// A one-server set, as sent to (or returned by) a single worker.
    pub fn single(shape: Shape, share: Vec<Complex64>, params_digest: [u8; 32]) -> Result<Self> {
        ShareSet::new(shape, vec![share], params_digest)
    }

    /// The share of server `i` (1-based).
    pub fn server(&self, i: usize) -> &[Complex64] {
        &self.shares[i - 1]
    }
}

/// Number of secret elements whose modulus exceeds `r`.
pub fn count_out_of_range(values: &[Complex64], r: f64) -> usize {
    values.iter().filter(|s| s.norm() > r).count()
}

/// Server `i`'s share of every element: `s + sum_j omega_i^j n_j`.
pub fn share_for_server(values: &[Complex64], params: &ProtocolParams, noise: &NoiseBlock, i: usize) -> Vec<Complex64> {
    let mut out = values.to_vec();
    for j in 1..=noise.t() {
        let w = params.power(i, j);
        for (o, n) in out.iter_mut().zip(noise.coefficient(j)) {
            *o += w * n;
        }
    }
    out
}

/// Encodes every element of `values` with its own masking coefficients.
///
/// Elements with `|s| > r` are accepted; the accuracy and privacy bounds do
/// not apply to them and a warning is logged.
pub fn encode_secret(
    values: &[Complex64],
    shape: Shape,
    params: &ProtocolParams,
    noise: &NoiseBlock,
) -> Result<ShareSet> {
    encode_secret_with(values, shape, params, noise, Execution::default())
}

pub fn encode_secret_with(
    values: &[Complex64],
    shape: Shape,
    params: &ProtocolParams,
    noise: &NoiseBlock,
    exec: Execution,
) -> Result<ShareSet> {
    if values.len() != shape.len() {
        return Err(Error::arg(format!(
            "secret has {} elements but shape needs {}",
            values.len(),
            shape.len()
        )));
    }
    if noise.len() != values.len() || noise.t() != params.t() {
        return Err(Error::arg(format!(
            "noise block is {}x{}, secret needs {}x{}",
            noise.t(),
            noise.len(),
            params.t(),
            values.len()
        )));
    }
    let outside = count_out_of_range(values, params.r());
    if outside > 0 {
        log::warn!(
            "{outside} secret element(s) exceed r = {}; accuracy and privacy bounds do not cover them",
            params.r()
        );
    }
    let shares = exec::map_indexed(exec, params.n(), |k| share_for_server(values, params, noise, k + 1));
    ShareSet::new(shape, shares, params.digest())
}

/// Whether the encoder adds masking noise. `Disabled` is a test hook that
/// makes every share equal to the secret.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Masking {
    #[default]
    TruncatedGaussian,
    Disabled,
}

/// Stateful encoder owning the noise RNG (ChaCha20 seeded from the params).
#[derive(Debug, Clone)]
pub struct Encoder {
    params: ProtocolParams,
    rng: ChaCha20Rng,
    masking: Masking,
}

impl Encoder {
    pub fn new(params: ProtocolParams) -> Self {
        let rng = ChaCha20Rng::seed_from_u64(params.seed());
        Encoder {
            params,
            rng,
            masking: Masking::TruncatedGaussian,
        }
    }

    pub fn with_masking(mut self, masking: Masking) -> Self {
        self.masking = masking;
        self
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn masking(&self) -> Masking {
        self.masking
    }

    /// Fresh masking coefficients for `len` elements.
    pub fn noise(&mut self, len: usize) -> Result<NoiseBlock> {
        match self.masking {
            Masking::TruncatedGaussian => sample_noise_block(&self.params, len, &mut self.rng),
            Masking::Disabled => Ok(NoiseBlock::zeros(self.params.t(), len)),
        }
    }

    pub fn share(&mut self, values: &[Complex64], shape: Shape) -> Result<ShareSet> {
        if values.len() != shape.len() {
            return Err(Error::arg(format!(
                "secret has {} elements but shape needs {}",
                values.len(),
                shape.len()
            )));
        }
        let noise = self.noise(values.len())?;
        encode_secret(values, shape, &self.params, &noise)
    }

    pub fn share_real(&mut self, values: &[f64], shape: Shape) -> Result<ShareSet> {
        let v: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.share(&v, shape)
    }

    pub fn share_scalar(&mut self, s: f64) -> Result<ShareSet> {
        self.share_real(&[s], Shape::Scalar)
    }
}

/// First row of the left pseudo-inverse of the `N x (d+1)` Vandermonde matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderWeights {
    pub b_tilde: Vec<Complex64>,
    /// All weights are exactly `1/N`; decoding then sums pairwise and scales once.
    pub uniform: bool,
}

impl DecoderWeights {
    pub fn n(&self) -> usize {
        self.b_tilde.len()
    }
}

/// Decoder weights for `params`. For the default roots of unity the columns of
/// the Vandermonde matrix are orthogonal with equal norm, so the first row of
/// its pseudo-inverse is exactly `1/N` and is written down directly.
pub fn decoder_weights(params: &ProtocolParams) -> Result<DecoderWeights> {
    if params.custom_points() {
        return decoder_weights_for(params.omegas(), params.share_degree());
    }
    let n = params.n();
    if n < params.share_degree() + 1 {
        return Err(Error::InsufficientServers {
            needed: params.share_degree() + 1,
            available: n,
        });
    }
    Ok(DecoderWeights {
        b_tilde: vec![Complex64::new(1.0 / n as f64, 0.0); n],
        uniform: true,
    })
}

/// Decoder weights for arbitrary distinct points and composed degree `d`.
pub fn decoder_weights_for(omegas: &[Complex64], d: usize) -> Result<DecoderWeights> {
    let n = omegas.len();
    if n < d + 1 {
        return Err(Error::InsufficientServers {
            needed: d + 1,
            available: n,
        });
    }
    for a in 0..n {
        for b in a + 1..n {
            if (omegas[a] - omegas[b]).norm() < 1e-12 {
                return Err(Error::Singular(format!(
                    "evaluation points {} and {} coincide",
                    a + 1,
                    b + 1
                )));
            }
        }
    }
    let b = linalg::vandermonde(omegas, d + 1);
    let pinv = linalg::left_pseudo_inverse(&b)?;
    Ok(DecoderWeights {
        b_tilde: pinv.row(0).iter().copied().collect(),
        uniform: false,
    })
}

/// `b_tilde . z` for one scalar per server, in server-index order.
pub fn decode_constant(results: &[Complex64], weights: &DecoderWeights) -> Result<Complex64> {
    if results.len() != weights.n() {
        return Err(Error::arg(format!(
            "expected {} results, got {}",
            weights.n(),
            results.len()
        )));
    }
    if weights.uniform {
        return Ok(pairwise_sum(results) * weights.b_tilde[0]);
    }
    Ok(results
        .iter()
        .zip(&weights.b_tilde)
        .map(|(z, b)| z * b)
        .sum())
}

fn pairwise_sum(z: &[Complex64]) -> Complex64 {
    match z.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => z[0],
        n => pairwise_sum(&z[..n / 2]) + pairwise_sum(&z[n / 2..]),
    }
}

/// Element-wise [`decode_constant`] over per-server result arrays.
pub fn decode_arrays(results: &[Vec<Complex64>], weights: &DecoderWeights) -> Result<Vec<Complex64>> {
    if results.len() != weights.n() {
        return Err(Error::arg(format!(
            "expected {} result arrays, got {}",
            weights.n(),
            results.len()
        )));
    }
    let len = results.first().map_or(0, Vec::len);
    if let Some(bad) = results.iter().position(|r| r.len() != len) {
        return Err(Error::arg(format!(
            "result array {} has {} elements, expected {len}",
            bad + 1,
            results[bad].len()
        )));
    }
    if weights.uniform {
        let scale = weights.b_tilde[0];
        let mut column = Vec::with_capacity(results.len());
        return Ok((0..len)
            .map(|e| {
                column.clear();
                column.extend(results.iter().map(|r| r[e]));
                pairwise_sum(&column) * scale
            })
            .collect());
    }
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (r, b) in results.iter().zip(&weights.b_tilde) {
        for (o, z) in out.iter_mut().zip(r) {
            *o += b * z;
        }
    }
    Ok(out)
}

/// A decoded real-valued output with the magnitude of the discarded imaginary part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealDecoded {
    pub value: f64,
    pub residue: f64,
}

impl From<Complex64> for RealDecoded {
    fn from(z: Complex64) -> Self {
        RealDecoded {
            value: z.re,
            residue: z.im.abs(),
        }
    }
}

pub fn decode_real(results: &[Complex64], weights: &DecoderWeights) -> Result<RealDecoded> {
    decode_constant(results, weights).map(RealDecoded::from)
}

/// Real-valued polynomial `f(x) = sum_k coeffs[k] x^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Trailing zero coefficients are dropped; at least one coefficient is required.
    pub fn new(mut coeffs: Vec<f64>) -> Result<Self> {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            return Err(Error::arg("polynomial needs at least one coefficient"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::arg("polynomial coefficients must be finite"));
        }
        Ok(Polynomial { coeffs })
    }

    pub fn monomial(degree: usize) -> Self {
        let mut coeffs = vec![0.0; degree + 1];
        coeffs[degree] = 1.0;
        Polynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Leading coefficient `a_D`.
    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_noise_shares_equal_secret() {
        let p = ProtocolParams::new(5, 2, 2, 1.0, 10.0, 2.0, 0).unwrap();
        let mut enc = Encoder::new(p).with_masking(Masking::Disabled);
        let s = enc.share_scalar(1.0).unwrap();
        assert!(s.shares.iter().all(|v| v == &vec![c(1.0, 0.0)]));
    }

    #[test]
    fn direct_substitution() {
        let p = ProtocolParams::new(2, 1, 1, 1.0, 10.0, 1.0, 0).unwrap();
        let noise = NoiseBlock::from_draws(&[NoiseDraw { coeffs: vec![c(1.0, 0.0)] }]).unwrap();
        let s = encode_secret(&[c(0.0, 0.0)], Shape::Scalar, &p, &noise).unwrap();
        assert_eq!(s.server(1), &[c(-1.0, 0.0)]);
        assert_eq!(s.server(2), &[c(1.0, 0.0)]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = ProtocolParams::new(2, 1, 1, 1.0, 10.0, 1.0, 0).unwrap();
        let noise = NoiseBlock::zeros(1, 3);
        let r = encode_secret(&[c(0.0, 0.0); 2], Shape::Vector { len: 2 }, &p, &noise);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
        let r = encode_secret(&[c(0.0, 0.0); 2], Shape::Vector { len: 3 }, &p, &NoiseBlock::zeros(1, 3));
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn out_of_range_secret_still_encodes() {
        let p = ProtocolParams::new(2, 1, 1, 1.0, 10.0, 1.0, 0).unwrap();
        let mut enc = Encoder::new(p.clone());
        let s = enc.share_scalar(5.0).unwrap();
        let w = decoder_weights(&p).unwrap();
        let z: Vec<_> = s.shares.iter().map(|v| v[0]).collect();
        assert!((decode_constant(&z, &w).unwrap() - c(5.0, 0.0)).norm() < 1e-12);
        assert_eq!(count_out_of_range(&[c(5.0, 0.0), c(0.5, 0.5)], 1.0), 1);
    }

    #[test]
    fn weights_for_four_roots() {
        let w = decoder_weights_for(&roots_of_unity(4).unwrap(), 3).unwrap();
        for b in &w.b_tilde {
            assert!((b - c(0.25, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn weights_for_two_points() {
        // B = [[1, -1], [1, 1]], B^-1 first row = (1/2, 1/2)
        let w = decoder_weights_for(&[c(-1.0, 0.0), c(1.0, 0.0)], 1).unwrap();
        for b in &w.b_tilde {
            assert!((b - c(0.5, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn overdetermined_weights_are_uniform() {
        let w = decoder_weights_for(&roots_of_unity(5).unwrap(), 3).unwrap();
        for b in &w.b_tilde {
            assert!((b - c(0.2, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn weight_identity_for_custom_points() {
        let pts = [c(0.5, 0.1), c(-0.3, 0.9), c(1.2, -0.4), c(0.0, -1.0)];
        let w = decoder_weights_for(&pts, 3).unwrap();
        let b = linalg::vandermonde(&pts, 4);
        for k in 0..4 {
            let v: Complex64 = (0..4).map(|i| w.b_tilde[i] * b[(i, k)]).sum();
            let want = if k == 0 { 1.0 } else { 0.0 };
            assert!((v - c(want, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn weight_errors() {
        assert!(matches!(
            decoder_weights_for(&roots_of_unity(3).unwrap(), 3),
            Err(Error::InsufficientServers { needed: 4, available: 3 })
        ));
        assert!(matches!(
            decoder_weights_for(&[c(1.0, 0.0), c(1.0, 0.0)], 1),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn closed_form_weights_match_pseudo_inverse() {
        for (n, t, d) in [(4, 1, 3), (7, 2, 3), (9, 4, 2), (64, 21, 3)] {
            let p = ProtocolParams::new(n, t, d, 1.0, 10.0, 1.0, 0).unwrap();
            let fast = decoder_weights(&p).unwrap();
            let slow = decoder_weights_for(p.omegas(), p.share_degree()).unwrap();
            assert!(fast.uniform && !slow.uniform);
            for (a, b) in fast.b_tilde.iter().zip(&slow.b_tilde) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_decoding_of_equal_results_is_exact() {
        let p = ProtocolParams::new(4, 1, 3, 1.0, 10.0, 1.0, 0).unwrap();
        let w = decoder_weights(&p).unwrap();
        for x in [0.1, 1.0 / 3.0, 123456.789, f64::MAX / 8.0] {
            let z = vec![c(x, 0.0); 4];
            assert_eq!(decode_constant(&z, &w).unwrap(), c(x, 0.0));
            assert_eq!(decode_arrays(&vec![vec![c(x, 0.0)]; 4], &w).unwrap(), vec![c(x, 0.0)]);
        }
    }

    #[test]
    fn decode_averages_constants() {
        let w = decoder_weights_for(&roots_of_unity(6).unwrap(), 5).unwrap();
        let z = vec![c(2.5, -1.0); 6];
        assert!((decode_constant(&z, &w).unwrap() - c(2.5, -1.0)).norm() < 1e-14);
        assert!(decode_constant(&z[..5], &w).is_err());
    }

    #[test]
    fn polynomial_eval() {
        let f = Polynomial::new(vec![1.0, 0.0, 1.0]).unwrap();
        assert_eq!(f.eval(c(0.0, 2.0)), c(-3.0, 0.0));
        assert_eq!(f.leading(), 1.0);
        assert_eq!(Polynomial::new(vec![1.0, 2.0, 0.0]).unwrap().degree(), 1);
    }
}
