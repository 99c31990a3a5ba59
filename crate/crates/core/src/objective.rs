//! Exact objective arithmetic.
//!
//! With `lambda = p / q` and `N` samples, `R = errors / N + lambda * leaves`
//! is compared through the integer `N * q * R = q * errors + p * N * leaves`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LambdaError {
    #[error("lambda must be a nonnegative decimal such as 0.001 or a ratio p/q, got {0:?}")]
    Syntax(String),
    #[error("lambda {0:?} has too many digits to represent exactly")]
    Overflow(String),
}

/// A nonnegative rational `p / q` in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lambda {
    pub numer: u64,
    pub denom: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Lambda {
    pub fn new(numer: u64, denom: u64) -> Lambda {
        assert!(denom > 0, "lambda denominator must be positive");
        let g = gcd(numer, denom).max(1);
        Lambda {
            numer: numer / g,
            denom: denom / g,
        }
    }

    pub fn zero() -> Lambda {
        Lambda { numer: 0, denom: 1 }
    }

    pub fn to_f64(self) -> f64 {
        self.numer as f64 / self.denom as f64
    }
}

impl FromStr for Lambda {
    type Err = LambdaError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let t = text.trim();
        let syntax = || LambdaError::Syntax(text.to_owned());
        let overflow = || LambdaError::Overflow(text.to_owned());
        if let Some((p, q)) = t.split_once('/') {
            let p: u64 = p.trim().parse().map_err(|_| syntax())?;
            let q: u64 = q.trim().parse().map_err(|_| syntax())?;
            if q == 0 {
                return Err(syntax());
            }
            return Ok(Lambda::new(p, q));
        }
        let (int, frac) = t.split_once('.').unwrap_or((t, ""));
        if (int.is_empty() && frac.is_empty())
            || !int.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(syntax());
        }
        let frac = frac.trim_end_matches('0');
        let mut denom: u64 = 1;
        let mut numer: u64 = 0;
        for b in int.bytes().chain(frac.bytes()) {
            numer = numer
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as u64))
                .ok_or_else(overflow)?;
        }
        for _ in 0..frac.len() {
            denom = denom.checked_mul(10).ok_or_else(overflow)?;
        }
        Ok(Lambda::new(numer, denom))
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom == 1 {
            write!(f, "{}", self.numer)
        } else {
            write!(f, "{}/{}", self.numer, self.denom)
        }
    }
}

/// `lambda` bound to a sample count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Regularizer {
    pub lambda: Lambda,
    pub n_samples: u64,
}

impl Regularizer {
    pub fn new(lambda: Lambda, n_samples: usize) -> Regularizer {
        Regularizer {
            lambda,
            n_samples: n_samples as u64,
        }
    }

    pub fn parse(lambda: &str, n_samples: usize) -> Result<Regularizer, LambdaError> {
        Ok(Regularizer::new(lambda.parse()?, n_samples))
    }

    /// `q`: weight of one misclassified sample.
    pub fn error_weight(&self) -> u128 {
        self.lambda.denom as u128
    }

    /// `p * N`: weight of one leaf.
    pub fn leaf_weight(&self) -> u128 {
        self.lambda.numer as u128 * self.n_samples as u128
    }

    /// `N * q * R` for a tree with the given error and leaf counts.
    pub fn scaled(&self, errors: u64, leaves: u64) -> u128 {
        self.error_weight() * errors as u128 + self.leaf_weight() * leaves as u128
    }

    /// `N * q`, the scale of [`Regularizer::scaled`].
    pub fn scale(&self) -> u128 {
        self.lambda.denom as u128 * self.n_samples as u128
    }

    pub fn value(&self, errors: u64, leaves: u64) -> f64 {
        errors as f64 / self.n_samples as f64 + self.lambda.to_f64() * leaves as f64
    }
}

/// Loss count and leaf count of one tree on one dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Objective {
    pub errors: u64,
    pub leaves: u64,
}

impl Objective {
    pub fn scaled(&self, reg: &Regularizer) -> u128 {
        reg.scaled(self.errors, self.leaves)
    }

    pub fn value(&self, reg: &Regularizer) -> f64 {
        reg.value(self.errors, self.leaves)
    }

    pub fn loss(&self, reg: &Regularizer) -> f64 {
        self.errors as f64 / reg.n_samples as f64
    }
}
