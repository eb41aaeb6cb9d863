//! Named instance generators.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::distributions::Seed;
use crate::error::{Error, Result};
use crate::numerics::{thin_qr, ParamMatrix};

/// Largest condition number produced by [`random_invertible`].
pub const COND_CAP: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// `A` and `M` with i.i.d. standard normal entries.
    Gaussian,
    /// `A = 0` and `M = e₁e₁ᵀ`: the perturbation lives in a single row that
    /// carries mass `1/n` under every query.
    LowMass,
    /// `A = [I_d; e₁ᵀ; …; e₁ᵀ]` and `M = e₁e₁ᵀ`: the perturbed row has
    /// leverage `O(1/n)` for every admissible scaling.
    PaddedIdentity,
}

impl Generator {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(Self::Gaussian),
            "low_mass" => Ok(Self::LowMass),
            "padded_identity" => Ok(Self::PaddedIdentity),
            other => Err(Error::Spec(format!(
                "unknown generator {other:?} (expected gaussian, low_mass or padded_identity)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::LowMass => "low_mass",
            Self::PaddedIdentity => "padded_identity",
        }
    }

    /// `(A, M)` for an `n × d` instance.
    pub fn instance(self, n: usize, d: usize, seed: Seed) -> Result<(ParamMatrix, ParamMatrix)> {
        if n == 0 || d == 0 {
            return Err(Error::Domain(format!("instance needs n, d ≥ 1, got {n}x{d}")));
        }
        match self {
            Self::Gaussian => {
                let mut rng = seed.rng();
                let a = gaussian_matrix(&mut rng, n, d);
                let m = gaussian_matrix(&mut rng, n, d);
                Ok((a, m))
            }
            Self::LowMass => Ok((ParamMatrix::zeros(n, d), unit_corner(n, d))),
            Self::PaddedIdentity => {
                if n < d {
                    return Err(Error::Domain(format!(
                        "padded identity needs n ≥ d, got {n}x{d}"
                    )));
                }
                let a = ParamMatrix::from_fn(n, d, |i, j| {
                    if i < d {
                        f64::from(u8::from(i == j))
                    } else {
                        f64::from(u8::from(j == 0))
                    }
                });
                Ok((a, unit_corner(n, d)))
            }
        }
    }
}

fn unit_corner(n: usize, d: usize) -> ParamMatrix {
    let mut m = ParamMatrix::zeros(n, d);
    m.set(0, 0, 1.0);
    m
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ParamMatrix {
    ParamMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ParamMatrix {
    loop {
        // a Gaussian square matrix is singular with probability zero
        if let Ok(qr) = thin_qr(&gaussian_matrix(rng, d, d)) {
            return qr.q;
        }
    }
}

/// `R = U Σ Vᵀ` with Haar-random orthogonal `U`, `V` and singular values
/// log-uniform in `[1, cond_cap]`, so `κ(R) ≤ cond_cap`.
pub fn random_invertible(d: usize, seed: Seed, cond_cap: f64) -> Result<ParamMatrix> {
    if d == 0 || !(cond_cap >= 1.0) {
        return Err(Error::Domain(format!(
            "random_invertible needs d ≥ 1 and cond_cap ≥ 1, got d = {d}, cap = {cond_cap}"
        )));
    }
    let mut rng = seed.rng();
    let u = random_orthogonal(&mut rng, d);
    let v = random_orthogonal(&mut rng, d);
    let log_cap = cond_cap.ln();
    let sigma: Vec<f64> = (0..d).map(|_| (rng.random::<f64>() * log_cap).exp()).collect();
    let us = ParamMatrix::from_fn(d, d, |i, j| u.get(i, j) * sigma[j]);
    us.matmul(&v.transpose())
}
