//! Matrix-free Arnoldi for the dominant Floquet multipliers at a fixed point.

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::timestepper::{EpsilonPolicy, Parameters, StateVector, Timestepper};

/// Above this residual `|u - Phi(u)|` the linearization point is rejected.
pub const FIXED_POINT_LIMIT: f64 = 1e-2;
/// Above this residual a warning is logged.
pub const FIXED_POINT_WARNING: f64 = 1e-4;
/// Relative size of the new Krylov vector treated as breakdown.
pub const BREAKDOWN_TOL: f64 = 1e-12;
/// Ritz values closer than this (relative to their modulus) share a cluster tag.
const CLUSTER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArnoldiOptions {
    /// Requested Krylov dimension.
    pub k: usize,
    pub k_max: usize,
    /// Start vector; `None` means the normalized vector of ones.
    #[serde(skip)]
    pub start: Option<StateVector>,
    pub eps: EpsilonPolicy,
    /// Stable iff every returned `|mu| < 1 - margin`.
    pub margin: f64,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        Self {
            k: 10,
            k_max: 30,
            start: None,
            eps: EpsilonPolicy::default(),
            margin: 1e-8,
        }
    }
}

/// `A V_k = V_{k+1} Hbar` with `A` the forward-difference Jacobian action.
#[derive(Debug, Clone, PartialEq)]
pub struct ArnoldiFactorization {
    /// N x (k+1) orthonormal basis; N x k after breakdown.
    pub v: DMatrix<f64>,
    /// (k+1) x k upper Hessenberg; last row zero after breakdown.
    pub hbar: DMatrix<f64>,
    pub k: usize,
    pub breakdown: bool,
    pub map_calls: u64,
}

impl ArnoldiFactorization {
    /// Leading k x k block.
    pub fn h(&self) -> DMatrix<f64> {
        self.hbar.view((0, 0), (self.k, self.k)).into_owned()
    }

    /// `h_{k+1,k}`.
    pub fn tail(&self) -> f64 {
        self.hbar[(self.k, self.k - 1)]
    }

    /// `V_{k+1}` padded with a zero column after breakdown.
    pub fn v_extended(&self) -> DMatrix<f64> {
        if self.v.ncols() == self.k + 1 {
            self.v.clone()
        } else {
            self.v.clone().insert_column(self.k, 0.0)
        }
    }

    /// Ritz values of `H_k` with residual estimates `|h_{k+1,k} y_k|`,
    /// sorted by descending modulus.
    pub fn ritz_pairs(&self) -> Result<Vec<RitzPair>> {
        let h = self.h();
        let values = linalg::hessenberg_eigenvalues(&h)?;
        let tail = self.tail().abs();
        let mut pairs: Vec<RitzPair> = values
            .iter()
            .map(|&mu| {
                let residual = if tail == 0.0 {
                    0.0
                } else {
                    let y = linalg::eigenvector(&h, mu);
                    tail * y[self.k - 1].norm()
                };
                RitzPair {
                    value: mu,
                    residual,
                    cluster: 0,
                }
            })
            .collect();
        tag_clusters(&mut pairs);
        Ok(pairs)
    }
}

impl ArnoldiFactorization {
    /// Ritz values with their unit Ritz vectors `V_k y`, sorted by
    /// descending modulus.
    pub fn ritz_vectors(&self) -> Result<Vec<(Complex64, DVector<Complex64>)>> {
        let h = self.h();
        let vk = self.v.columns(0, self.k).map(|x| Complex64::new(x, 0.0));
        let values = linalg::hessenberg_eigenvalues(&h)?;
        Ok(values
            .into_iter()
            .map(|mu| {
                let x = &vk * linalg::eigenvector(&h, mu);
                let norm = x.norm();
                (mu, x / Complex64::new(norm.max(f64::MIN_POSITIVE), 0.0))
            })
            .collect())
    }
}

/// Ritz approximation of one multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RitzPair {
    pub value: Complex64,
    pub residual: f64,
    /// Ritz values within a relative `1e-6` of each other share a tag.
    pub cluster: usize,
}

fn tag_clusters(pairs: &mut [RitzPair]) {
    let mut next = 0;
    for i in 0..pairs.len() {
        let found = (0..i).find(|&j| {
            let (a, b) = (pairs[i].value, pairs[j].value);
            (a - b).norm() <= CLUSTER_TOL * a.norm().max(b.norm()).max(1e-300)
        });
        pairs[i].cluster = match found {
            Some(j) => pairs[j].cluster,
            None => {
                next += 1;
                next - 1
            }
        };
    }
}

/// Multipliers at a fixed point together with the stability verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct FloquetSpectrum {
    pub pairs: Vec<RitzPair>,
    pub stable: bool,
    pub breakdown: bool,
    pub map_calls: u64,
}

impl FloquetSpectrum {
    pub fn values(&self) -> Vec<Complex64> {
        self.pairs.iter().map(|p| p.value).collect()
    }
}

/// Runs `k` Arnoldi steps on the Jacobian of the map at `u_star`:
/// modified Gram-Schmidt followed by one full reorthogonalization pass.
/// Costs one map call for `Phi(u_star)` plus one per step.
pub fn arnoldi_factorize(
    stepper: &Timestepper,
    u_star: &StateVector,
    p: &Parameters,
    k: usize,
    start: Option<&StateVector>,
    eps: &EpsilonPolicy,
    k_max: usize,
) -> Result<ArnoldiFactorization> {
    let n = stepper.dim();
    if u_star.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u_star.len(),
        });
    }
    let limit = n.min(k_max);
    if k == 0 || k > limit {
        return Err(Error::InvalidArgument(format!(
            "Krylov dimension {k} outside 1..={limit}"
        )));
    }
    let v0 = match start {
        Some(s) if s.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: s.len(),
            })
        }
        Some(s) => s.clone(),
        None => StateVector::from_element(n, 1.0),
    };
    let v0_norm = v0.norm();
    if v0_norm == 0.0 || !v0_norm.is_finite() {
        return Err(Error::ZeroDirection);
    }

    let before = stepper.calls();
    let phi = stepper.evaluate(u_star, p)?;
    let residual = (&phi - u_star).norm();
    if residual > FIXED_POINT_LIMIT {
        return Err(Error::NotAFixedPoint {
            residual,
            limit: FIXED_POINT_LIMIT,
        });
    }
    if residual > FIXED_POINT_WARNING {
        warn!("arnoldi: linearizing at a point with residual {residual:.3e}");
    }

    let mut basis: Vec<StateVector> = vec![v0 / v0_norm];
    let mut hbar = DMatrix::<f64>::zeros(k + 1, k);
    let mut breakdown = false;
    let mut steps = k;
    for j in 0..k {
        let mut w = stepper.jacobian_vector_product(u_star, &phi, &basis[j], eps, p)?;
        for _pass in 0..2 {
            for (i, vi) in basis.iter().enumerate() {
                let c = vi.dot(&w);
                hbar[(i, j)] += c;
                w.axpy(-c, vi, 1.0);
            }
        }
        let norm = w.norm();
        let scale = hbar.view((0, 0), (j + 2, j + 1)).norm();
        if norm <= BREAKDOWN_TOL * scale || j + 1 == n {
            breakdown = true;
            steps = j + 1;
            break;
        }
        hbar[(j + 1, j)] = norm;
        basis.push(w / norm);
    }

    let hbar = hbar.view((0, 0), (steps + 1, steps)).into_owned();
    let v = linalg::columns_to_matrix(n, &basis[..if breakdown { steps } else { steps + 1 }]);
    Ok(ArnoldiFactorization {
        v,
        hbar,
        k: steps,
        breakdown,
        map_calls: stepper.calls() - before,
    })
}

/// Leading Floquet multipliers at `u_star`, sorted by descending modulus.
pub fn floquet_multipliers(
    stepper: &Timestepper,
    u_star: &StateVector,
    p: &Parameters,
    opts: &ArnoldiOptions,
) -> Result<FloquetSpectrum> {
    let fact = arnoldi_factorize(
        stepper,
        u_star,
        p,
        opts.k.min(stepper.dim()),
        opts.start.as_ref(),
        &opts.eps,
        opts.k_max,
    )?;
    let pairs = fact.ritz_pairs()?;
    let stable = pairs.iter().all(|r| r.value.norm() < 1.0 - opts.margin);
    Ok(FloquetSpectrum {
        pairs,
        stable,
        breakdown: fact.breakdown,
        map_calls: fact.map_calls,
    })
}
