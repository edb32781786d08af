//! Gold spreading sequences from preferred pairs of maximal-length LFSRs.
//!
//! Preferred pairs (polynomial exponents, constant term implied):
//!
//! | degree | N   | first polynomial | second polynomial        |
//! |--------|-----|------------------|--------------------------|
//! | 5      | 31  | x^5+x^2+1        | x^5+x^4+x^3+x^2+1        |
//! | 6      | 63  | x^6+x+1          | x^6+x^5+x^2+x+1          |
//! | 7      | 127 | x^7+x^3+1        | x^7+x^3+x^2+x+1          |
//!
//! The set is ordered `[u, v, u ^ v, u ^ T v, ..., u ^ T^(N-1) v]`, where `T`
//! is a cyclic left shift, so user `k` always receives the same code.

use crate::{Error, Result};

/// A unit-norm bipolar spreading code of length N.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    chips: Vec<f64>,
}

impl Signature {
    /// Builds a signature from a bipolar (+1/-1) chip pattern, scaling to unit norm.
    pub fn from_bipolar(bipolar: &[i8]) -> Result<Self> {
        if bipolar.is_empty() {
            return Err(Error::domain("signature must have at least one chip"));
        }
        if bipolar.iter().any(|&c| c != 1 && c != -1) {
            return Err(Error::domain("signature chips must be +1 or -1"));
        }
        let scale = 1.0 / (bipolar.len() as f64).sqrt();
        Ok(Self {
            chips: bipolar.iter().map(|&c| f64::from(c) * scale).collect(),
        })
    }

    pub fn chips(&self) -> &[f64] {
        &self.chips
    }

    /// Processing gain N.
    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    /// Chip signs as +1/-1.
    pub fn bipolar(&self) -> Vec<i8> {
        self.chips.iter().map(|&c| if c > 0.0 { 1 } else { -1 }).collect()
    }
}

fn preferred_pair(degree: u32) -> Option<(&'static [u32], &'static [u32])> {
    match degree {
        5 => Some((&[5, 2, 0], &[5, 4, 3, 2, 0])),
        6 => Some((&[6, 1, 0], &[6, 5, 2, 1, 0])),
        7 => Some((&[7, 3, 0], &[7, 3, 2, 1, 0])),
        _ => None,
    }
}

/// One period of the m-sequence for the polynomial with the given exponents.
///
/// Recurrence `a[i+n] = sum_j c_j a[i+j] (mod 2)` over the lower-order terms,
/// started from the all-ones state.
fn m_sequence(exponents: &[u32]) -> Vec<u8> {
    let degree = exponents[0] as usize;
    let period = (1usize << degree) - 1;
    let taps: Vec<usize> = exponents[1..].iter().map(|&e| e as usize).collect();
    let mut seq = vec![1u8; degree];
    seq.reserve(period);
    while seq.len() < period {
        let i = seq.len() - degree;
        let bit = taps.iter().fold(0u8, |acc, &j| acc ^ seq[i + j]);
        seq.push(bit);
    }
    seq.truncate(period);
    seq
}

/// Generates the 2^degree + 1 Gold sequences of length 2^degree - 1.
pub fn gen_gold_set(degree: u32) -> Result<Vec<Signature>> {
    let (pa, pb) = preferred_pair(degree).ok_or_else(|| {
        Error::config(
            "system.gold_degree",
            format!("unsupported Gold degree {degree}, expected 5, 6 or 7"),
        )
    })?;
    let u = m_sequence(pa);
    let v = m_sequence(pb);
    let n = u.len();

    let to_bipolar = |bits: &[u8]| -> Vec<i8> {
        bits.iter().map(|&b| if b == 0 { 1 } else { -1 }).collect()
    };

    let mut out = Vec::with_capacity(n + 2);
    out.push(Signature::from_bipolar(&to_bipolar(&u))?);
    out.push(Signature::from_bipolar(&to_bipolar(&v))?);
    for shift in 0..n {
        let bits: Vec<u8> = (0..n).map(|i| u[i] ^ v[(i + shift) % n]).collect();
        out.push(Signature::from_bipolar(&to_bipolar(&bits))?);
    }
    Ok(out)
}
