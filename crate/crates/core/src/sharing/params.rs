use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// `exp(2*pi*sqrt(-1) * k / n)`, exact on the axes.
pub fn unit_root(k: usize, n: usize) -> Complex64 {
    let k = k % n;
    if (4 * k).is_multiple_of(n) {
        return match 4 * k / n {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    Complex64::from_polar(1.0, TAU * k as f64 / n as f64)
}

/// The `n` evaluation points `exp(2*pi*sqrt(-1) * i / n)` for `i = 1..=n`.
pub fn roots_of_unity(n: usize) -> Result<Vec<Complex64>> {
    if n == 0 {
        return Err(Error::param("roots_of_unity needs n >= 1"));
    }
    Ok((1..=n).map(|i| unit_root(i, n)).collect())
}

/// Public parameters of one sharing scheme instance.
///
/// Server `i` (1-based) receives `s + sum_j omega_i^j n_j`, where the `t`
/// masking coefficients are circular complex Gaussians with variance
/// `sigma_n^2 / t`, truncated at `m = alpha * sigma_n / sqrt(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    n: usize,
    t: usize,
    degree: usize,
    sigma_n: f64,
    alpha: f64,
    r: f64,
    omegas: Vec<Complex64>,
    custom_points: bool,
    seed: u64,
}

impl ProtocolParams {
    /// Parameters with the default root-of-unity evaluation points.
    pub fn new(
        n: usize,
        t: usize,
        degree: usize,
        sigma_n: f64,
        alpha: f64,
        r: f64,
        seed: u64,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::param(format!("server count N = {n} must be at least 2")));
        }
        if t < 1 {
            return Err(Error::param("collusion bound t must be at least 1"));
        }
        if degree < 1 {
            return Err(Error::param("polynomial degree D must be at least 1"));
        }
        if !(sigma_n > 0.0 && sigma_n.is_finite()) {
            return Err(Error::param(format!("sigma_n = {sigma_n} must be positive and finite")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param(format!("alpha = {alpha} must be positive and finite")));
        }
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::param(format!("r = {r} must be non-negative and finite")));
        }
        let needed = degree * t + 1;
        if n < needed {
            return Err(Error::InsufficientServers {
                needed,
                available: n,
            });
        }
        Ok(ProtocolParams {
            n,
            t,
            degree,
            sigma_n,
            alpha,
            r,
            omegas: roots_of_unity(n)?,
            custom_points: false,
            seed,
        })
    }

    /// Replaces the evaluation points. They must be pairwise distinct.
    pub fn with_omegas(mut self, omegas: Vec<Complex64>) -> Result<Self> {
        if omegas.len() != self.n {
            return Err(Error::arg(format!(
                "expected {} evaluation points, got {}",
                self.n,
                omegas.len()
            )));
        }
        for a in 0..omegas.len() {
            if !(omegas[a].re.is_finite() && omegas[a].im.is_finite()) {
                return Err(Error::arg(format!("evaluation point {} is not finite", a + 1)));
            }
            for b in a + 1..omegas.len() {
                if (omegas[a] - omegas[b]).norm() < 1e-12 {
                    return Err(Error::Singular(format!(
                        "evaluation points {} and {} coincide",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }
        self.omegas = omegas;
        self.custom_points = true;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Degree `D` of the evaluated polynomial.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn sigma_n(&self) -> f64 {
        self.sigma_n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn omegas(&self) -> &[Complex64] {
        &self.omegas
    }

    /// Whether the evaluation points were overridden.
    pub fn custom_points(&self) -> bool {
        self.custom_points
    }

    /// Truncation bound `m = alpha * sigma_n / sqrt(t)` on each masking coefficient.
    pub fn trunc_bound(&self) -> f64 {
        self.alpha * self.sigma_n / (self.t as f64).sqrt()
    }

    /// Standard deviation `sigma_n / sqrt(t)` of each masking coefficient.
    pub fn noise_std(&self) -> f64 {
        self.sigma_n / (self.t as f64).sqrt()
    }

    /// Degree `d = D * t` of the composed polynomial `f(p(x))`.
    pub fn share_degree(&self) -> usize {
        self.degree * self.t
    }

    /// `omega_i^j` for server `i` in `1..=n`.
    pub fn power(&self, i: usize, j: usize) -> Complex64 {
        if self.custom_points {
            self.omegas[i - 1].powu(j as u32)
        } else {
            unit_root(i * j, self.n)
        }
    }

    /// Table of `omega_i^j` for `j = 1..=t`, indexed `[i - 1][j - 1]`.
    pub fn mask_powers(&self) -> Vec<Vec<Complex64>> {
        (1..=self.n)
            .map(|i| (1..=self.t).map(|j| self.power(i, j)).collect())
            .collect()
    }

    /// SHA-256 over the public parameters (everything except the seed).
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"analog-shards/params/v1");
        for v in [self.n as u64, self.t as u64, self.degree as u64] {
            h.update(v.to_be_bytes());
        }
        for v in [self.sigma_n, self.alpha, self.r] {
            h.update(v.to_bits().to_be_bytes());
        }
        for w in &self.omegas {
            h.update(w.re.to_bits().to_be_bytes());
            h.update(w.im.to_bits().to_be_bytes());
        }
        h.finalize().into()
    }

    /// Same parameters with a different noise level.
    pub fn with_sigma_n(&self, sigma_n: f64) -> Result<Self> {
        let base = ProtocolParams::new(self.n, self.t, self.degree, sigma_n, self.alpha, self.r, self.seed)?;
        if self.custom_points {
            base.with_omegas(self.omegas.clone())
        } else {
            Ok(base)
        }
    }

    /// Same parameters with a different polynomial degree (e.g. the degree-3
    /// product of the training loop).
    pub fn with_degree(&self, degree: usize) -> Result<Self> {
        let base = ProtocolParams::new(self.n, self.t, degree, self.sigma_n, self.alpha, self.r, self.seed)?;
        if self.custom_points {
            base.with_omegas(self.omegas.clone())
        } else {
            Ok(base)
        }
    }
}
