use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timestepper::{CycleMap, Parameters, StateVector};

/// One diagonal block of the prescribed spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumEntry {
    /// Real eigenvalue.
    Real(f64),
    /// Complex pair `r e^{+-i theta}` realized as the block `r R(theta)`.
    Pair { modulus: f64, angle: f64 },
    /// Real eigenvalue equal to the continuation parameter.
    Continuation,
}

impl SpectrumEntry {
    fn width(&self) -> usize {
        match self {
            SpectrumEntry::Pair { .. } => 2,
            _ => 1,
        }
    }
}

/// Affine map `u -> A u + b` with a prescribed spectrum.
///
/// `A = Q D Q^T` where `D` is block diagonal and `Q` is either the identity
/// or a fixed orthogonal matrix generated from a seed.
#[derive(Debug, Clone)]
pub struct LinearMapModel {
    spectrum: Vec<SpectrumEntry>,
    offset: StateVector,
    rotation: Option<DMatrix<f64>>,
    default_lambda: f64,
}

impl LinearMapModel {
    pub fn new(spectrum: Vec<SpectrumEntry>, offset: &[f64], conjugation_seed: Option<u64>) -> Result<Self> {
        let dim: usize = spectrum.iter().map(SpectrumEntry::width).sum();
        if dim == 0 {
            return Err(Error::InvalidArgument("empty spectrum".into()));
        }
        if offset.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: offset.len(),
            });
        }
        let rotation = conjugation_seed.map(|seed| random_orthogonal(dim, seed));
        Ok(Self {
            spectrum,
            offset: StateVector::from_column_slice(offset),
            rotation,
            default_lambda: 0.0,
        })
    }

    /// `A = diag(values)`, no conjugation.
    pub fn diagonal(values: &[f64], offset: &[f64]) -> Result<Self> {
        Self::new(
            values.iter().copied().map(SpectrumEntry::Real).collect(),
            offset,
            None,
        )
    }

    pub fn with_default_lambda(mut self, lambda: f64) -> Self {
        self.default_lambda = lambda;
        self
    }

    pub fn spectrum(&self) -> &[SpectrumEntry] {
        &self.spectrum
    }

    pub fn offset(&self) -> &StateVector {
        &self.offset
    }

    /// Eigenvalues of `A` at continuation value `lambda` (unsorted).
    pub fn eigenvalues(&self, lambda: f64) -> Vec<num_complex::Complex64> {
        use num_complex::Complex64;
        let mut out = Vec::new();
        for e in &self.spectrum {
            match *e {
                SpectrumEntry::Real(x) => out.push(Complex64::new(x, 0.0)),
                SpectrumEntry::Continuation => out.push(Complex64::new(lambda, 0.0)),
                SpectrumEntry::Pair { modulus, angle } => {
                    out.push(Complex64::from_polar(modulus, angle));
                    out.push(Complex64::from_polar(modulus, -angle));
                }
            }
        }
        out
    }

    fn block_diagonal(&self, lambda: f64) -> DMatrix<f64> {
        let n = self.offset.len();
        let mut d = DMatrix::zeros(n, n);
        let mut i = 0;
        for e in &self.spectrum {
            match *e {
                SpectrumEntry::Real(x) => d[(i, i)] = x,
                SpectrumEntry::Continuation => d[(i, i)] = lambda,
                SpectrumEntry::Pair { modulus, angle } => {
                    let (s, c) = angle.sin_cos();
                    d[(i, i)] = modulus * c;
                    d[(i, i + 1)] = -modulus * s;
                    d[(i + 1, i)] = modulus * s;
                    d[(i + 1, i + 1)] = modulus * c;
                }
            }
            i += e.width();
        }
        d
    }

    /// Assembled dense `A` at continuation value `lambda`.
    pub fn matrix(&self, lambda: f64) -> DMatrix<f64> {
        let d = self.block_diagonal(lambda);
        match &self.rotation {
            Some(q) => q * d * q.transpose(),
            None => d,
        }
    }

    /// `(I - A)^{-1} b`, or `None` when 1 is an eigenvalue.
    pub fn fixed_point(&self, lambda: f64) -> Option<StateVector> {
        let n = self.offset.len();
        let m = DMatrix::<f64>::identity(n, n) - self.matrix(lambda);
        m.lu().solve(&self.offset)
    }

    fn apply_blocks(&self, x: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let mut y = DVector::zeros(x.len());
        let mut i = 0;
        for e in &self.spectrum {
            match *e {
                SpectrumEntry::Real(a) => y[i] = a * x[i],
                SpectrumEntry::Continuation => y[i] = lambda * x[i],
                SpectrumEntry::Pair { modulus, angle } => {
                    let (s, c) = angle.sin_cos();
                    y[i] = modulus * (c * x[i] - s * x[i + 1]);
                    y[i + 1] = modulus * (s * x[i] + c * x[i + 1]);
                }
            }
            i += e.width();
        }
        y
    }
}

fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    m.qr().q()
}

impl CycleMap for LinearMapModel {
    fn name(&self) -> &str {
        "linear"
    }

    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn default_parameters(&self) -> Parameters {
        Parameters::new("lambda", self.default_lambda)
    }

    fn apply(&self, u: &StateVector, p: &Parameters) -> Result<StateVector> {
        let lambda = if self.spectrum.contains(&SpectrumEntry::Continuation) {
            p.lambda()
        } else {
            0.0
        };
        let out = match &self.rotation {
            Some(q) => {
                let x = q.tr_mul(u);
                q * self.apply_blocks(&x, lambda) + &self.offset
            }
            None => self.apply_blocks(u, lambda) + &self.offset,
        };
        Ok(out)
    }
}
