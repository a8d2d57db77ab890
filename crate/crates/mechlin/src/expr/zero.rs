//! Probabilistic-with-proof zero testing.
//!
//! The structural stage is `simplify`: if the normal form (or its
//! rationalized numerator) cancels, the expression is zero everywhere it is
//! defined — `ProvenZero`.  Otherwise the expression is evaluated at K
//! seeded random points; tiny everywhere ⇒ `NumericallyZero` (flagged as
//! non-certified by callers), any visible value ⇒ `NonZero` with the first
//! witness point.
//!
//! Sampling is seeded per expression (hash of the printed form mixed into
//! the seed), so verdicts don't depend on call order.

use super::eval::{eval, Point};
use super::nf::simplify;
use super::Expr;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_ZERO_SEED: u64 = 0x6d65_6368_6c69_6e00;
const SAMPLES: usize = 32;
const RETRIES_PER_POINT: usize = 10;
const TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum ZeroVerdict {
    /// Simplification reached the zero constant: exact.
    ProvenZero,
    /// All samples were below tolerance but no structural proof exists.
    NumericallyZero { max_abs: f64, samples: usize },
    /// A sample point where the value is visibly nonzero.
    NonZero { witness: Point },
}

impl ZeroVerdict {
    /// Zero for practical purposes (proven or numerically).
    pub fn is_zero(&self) -> bool {
        !matches!(self, ZeroVerdict::NonZero { .. })
    }

    /// Exact verdict (certification-grade).
    pub fn is_proven(&self) -> bool {
        matches!(self, ZeroVerdict::ProvenZero)
    }
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum ZeroTestError {
    #[error(
        "zero test undecidable at sampled points: evaluation kept failing \
         at sample {sample_index} ({last_error})"
    )]
    Undecidable {
        sample_index: usize,
        last_error: String,
    },
}

pub fn is_zero(e: &Expr) -> Result<ZeroVerdict, ZeroTestError> {
    is_zero_seeded(e, DEFAULT_ZERO_SEED)
}

pub fn is_zero_seeded(e: &Expr, seed: u64) -> Result<ZeroVerdict, ZeroTestError> {
    let s = simplify(e);
    if s.is_const_zero() {
        return Ok(ZeroVerdict::ProvenZero);
    }
    let n = s.max_var_index().max(e.max_var_index());
    let params: Vec<String> = e.params_used().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(e.to_string().as_bytes()));
    let mut max_abs: f64 = 0.0;
    for sample_index in 0..SAMPLES {
        let mut value = None;
        let mut last_error = String::new();
        for _ in 0..=RETRIES_PER_POINT {
            let p = sample_point(&mut rng, n, &params);
            match eval(&s, &p) {
                Ok(v) => {
                    if v.abs() >= TOLERANCE {
                        return Ok(ZeroVerdict::NonZero { witness: p });
                    }
                    value = Some(v.abs());
                    break;
                }
                Err(err) => last_error = err.to_string(),
            }
        }
        match value {
            Some(v) => max_abs = max_abs.max(v),
            None => {
                return Err(ZeroTestError::Undecidable {
                    sample_index,
                    last_error,
                })
            }
        }
    }
    Ok(ZeroVerdict::NumericallyZero {
        max_abs,
        samples: SAMPLES,
    })
}

/// Rational coordinates in [−2, 2] (thousandths), parameters in (0.1, 10).
fn sample_point(rng: &mut ChaCha8Rng, n: usize, params: &[String]) -> Point {
    let x: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(-2000i32..=2000) as f64 / 1000.0)
        .collect();
    let mut p = Point::new(x);
    for name in params {
        p.params.insert(name.clone(), rng.gen_range(0.1..10.0));
    }
    p
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
