use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{spmv, SparseMatrix};

use super::libsvm::normalize_rows;

/// Parameters of a random least-squares instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub noise_sd: f64,
    /// Probability that an entry of `A` is nonzero.
    pub sparsity: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 20,
            noise_sd: 0.1,
            sparsity: 1.0,
            seed: 0,
        }
    }
}

/// Parses `n=1000,d=20,noise=0.1,sparsity=1,seed=3`; omitted keys keep
/// their defaults.
impl FromStr for SyntheticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = SyntheticSpec::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, found '{part}'")))?;
            let bad = || Error::InvalidArgument(format!("bad value for {key}: '{value}'"));
            match key {
                "n" => spec.n = value.parse().map_err(|_| bad())?,
                "d" => spec.d = value.parse().map_err(|_| bad())?,
                "noise" => spec.noise_sd = value.parse().map_err(|_| bad())?,
                "sparsity" => spec.sparsity = value.parse().map_err(|_| bad())?,
                "seed" => spec.seed = value.parse().map_err(|_| bad())?,
                _ => return Err(Error::InvalidArgument(format!("unknown key '{key}'"))),
            }
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub x_true: Vec<f64>,
}

/// Random instance with standard-normal entries at the requested density,
/// unit-norm rows, `x_true ~ N(0, I)` and `b = A·x_true + noise`.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::InvalidArgument("n and d must be positive".into()));
    }
    if !(spec.sparsity > 0.0 && spec.sparsity <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sparsity {} must lie in (0, 1]",
            spec.sparsity
        )));
    }
    if !(spec.noise_sd >= 0.0 && spec.noise_sd.is_finite()) {
        return Err(Error::InvalidArgument("noise must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rows: Vec<Vec<(usize, f64)>> = (0..spec.n)
        .map(|_| {
            let mut row = Vec::new();
            for j in 0..spec.d {
                if spec.sparsity >= 1.0 || rng.random::<f64>() < spec.sparsity {
                    row.push((j, rng.sample::<f64, _>(StandardNormal)));
                }
            }
            row
        })
        .collect();
    let a = normalize_rows(&SparseMatrix::from_rows(spec.d, rows)?);
    let x_true: Vec<f64> = (0..spec.d).map(|_| rng.sample(StandardNormal)).collect();
    let mut b = spmv(&a, &x_true)?;
    if spec.noise_sd > 0.0 {
        for v in &mut b {
            *v += spec.noise_sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(Synthetic { a, b, x_true })
}
