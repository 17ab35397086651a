use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::params::ProtocolParams;
use crate::error::{Error, Result};

/// Rejection attempts per coefficient before the sampler reports a misconfiguration.
pub const MAX_REJECTIONS: u64 = 1_000_000;

/// The `t` masking coefficients `n_1..n_t` of one scalar secret.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub coeffs: Vec<Complex64>,
}

impl NoiseDraw {
    pub fn zeros(t: usize) -> Self {
        NoiseDraw {
            coeffs: vec![Complex64::new(0.0, 0.0); t],
        }
    }
}

/// Masking coefficients for every element of an array secret, stored
/// coefficient-major: `coeffs[j * len + e]` is `n_{j+1}` for element `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBlock {
    t: usize,
    len: usize,
    coeffs: Vec<Complex64>,
}

impl NoiseBlock {
    pub fn zeros(t: usize, len: usize) -> Self {
        NoiseBlock {
            t,
            len,
            coeffs: vec![Complex64::new(0.0, 0.0); t * len],
        }
    }

    pub fn from_draws(draws: &[NoiseDraw]) -> Result<Self> {
        let t = draws.first().map_or(0, |d| d.coeffs.len());
        let len = draws.len();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); t * len];
        for (e, d) in draws.iter().enumerate() {
            if d.coeffs.len() != t {
                return Err(Error::arg("noise draws have inconsistent coefficient counts"));
            }
            for (j, c) in d.coeffs.iter().enumerate() {
                coeffs[j * len + e] = *c;
            }
        }
        Ok(NoiseBlock { t, len, coeffs })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Coefficient `n_j` (1-based `j`) for every element.
    pub fn coefficient(&self, j: usize) -> &[Complex64] {
        &self.coeffs[(j - 1) * self.len..j * self.len]
    }

    pub fn draw(&self, e: usize) -> NoiseDraw {
        NoiseDraw {
            coeffs: (1..=self.t).map(|j| self.coefficient(j)[e]).collect(),
        }
    }

    pub fn max_modulus(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// One circular complex Gaussian with total variance `std^2`, resampled until
/// its modulus is at most `bound`.
pub fn truncated_complex_gaussian<R: Rng + ?Sized>(rng: &mut R, std: f64, bound: f64) -> Result<Complex64> {
    let component = std / std::f64::consts::SQRT_2;
    for _ in 0..MAX_REJECTIONS {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let z = Complex64::new(re * component, im * component);
        if z.norm() <= bound {
            return Ok(z);
        }
    }
    Err(Error::SamplingExhausted {
        attempts: MAX_REJECTIONS,
    })
}

/// Draws `count` independent sets of masking coefficients.
pub fn sample_truncated_noise<R: Rng + ?Sized>(
    params: &ProtocolParams,
    count: usize,
    rng: &mut R,
) -> Result<Vec<NoiseDraw>> {
    let (std, bound) = (params.noise_std(), params.trunc_bound());
    (0..count)
        .map(|_| {
            let coeffs = (0..params.t())
                .map(|_| truncated_complex_gaussian(rng, std, bound))
                .collect::<Result<Vec<_>>>()?;
            Ok(NoiseDraw { coeffs })
        })
        .collect()
}

/// Fresh masking coefficients for an array of `len` elements.
pub fn sample_noise_block<R: Rng + ?Sized>(params: &ProtocolParams, len: usize, rng: &mut R) -> Result<NoiseBlock> {
    let (std, bound) = (params.noise_std(), params.trunc_bound());
    let t = params.t();
    let mut coeffs = Vec::with_capacity(t * len);
    for _ in 0..t * len {
        coeffs.push(truncated_complex_gaussian(rng, std, bound)?);
    }
    Ok(NoiseBlock { t, len, coeffs })
}
