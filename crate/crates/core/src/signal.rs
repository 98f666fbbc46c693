//! Complex signals, sparse ground truth and seeded randomness.

use std::fmt::Write as _;
use std::ops::{Deref, Index};

use num_complex::Complex64;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed plus substream id. Identical pairs reproduce identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// One draw from the standard complex Gaussian: independent N(0,1) real and
/// imaginary parts.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn complex_gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| complex_gaussian(rng)).collect()
}

/// A nonempty vector of finite complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal(Vec<Complex64>);

impl ComplexSignal {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("signal must have length >= 1"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite entry at index {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "signal must have length >= 1");
        Self(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn l0_norm(&self) -> usize {
        l0_norm(&self.0)
    }

    pub fn scale(&self, c: Complex64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * c).collect())
    }

    /// `y_i = x_{(i - shift) mod n}`.
    pub fn circular_shift(&self, shift: usize) -> Self {
        let n = self.0.len();
        Self((0..n).map(|i| self.0[(i + n - shift % n) % n]).collect())
    }

    /// `y_i = conj(x_{(-i) mod n})`.
    pub fn conj_flip(&self) -> Self {
        let n = self.0.len();
        Self((0..n).map(|i| self.0[(n - i) % n].conj()).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,re,im\n");
        for (i, v) in self.0.iter().enumerate() {
            writeln!(out, "{i},{:?},{:?}", v.re, v.im).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "index,re,im" => {}
            other => {
                return Err(Error::Parse(format!(
                    "expected header `index,re,im`, found {other:?}"
                )))
            }
        }
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("row {row}: expected 3 fields")));
            }
            let index: usize = parse_field(fields[0], row)?;
            if index != row {
                return Err(Error::Parse(format!(
                    "row {row}: index {index} out of order"
                )));
            }
            values.push(Complex64::new(
                parse_field(fields[1], row)?,
                parse_field(fields[2], row)?,
            ));
        }
        Self::new(values)
    }

    pub fn to_json(&self) -> String {
        let pairs: Vec<[f64; 2]> = self.0.iter().map(|v| [v.re, v.im]).collect();
        serde_json::to_string(&pairs).expect("finite floats serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let pairs: Vec<[f64; 2]> =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, row: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("row {row}: cannot parse `{s}`")))
}

impl Deref for ComplexSignal {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl Index<usize> for ComplexSignal {
    type Output = Complex64;

    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<Complex64>> for ComplexSignal {
    type Error = Error;

    fn try_from(v: Vec<Complex64>) -> Result<Self> {
        Self::new(v)
    }
}

/// Real measurement vector as CSV with header `index,b`.
pub fn measurements_to_csv(b: &[f64]) -> String {
    let mut out = String::from("index,b\n");
    for (i, v) in b.iter().enumerate() {
        writeln!(out, "{i},{v:?}").unwrap();
    }
    out
}

pub fn measurements_from_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "index,b" => {}
        other => return Err(Error::Parse(format!("expected header `index,b`, found {other:?}"))),
    }
    let mut out = Vec::new();
    for (row, line) in lines.enumerate() {
        let (i, v) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("row {row}: expected 2 fields")))?;
        if parse_field::<usize>(i.trim(), row)? != row {
            return Err(Error::Parse(format!("row {row}: index out of order")));
        }
        let v: f64 = parse_field(v.trim(), row)?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("row {row}: non-finite measurement")));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Parse("no measurements".into()));
    }
    Ok(out)
}

/// Number of entries with `|re| + |im| != 0`. Exact test, no tolerance.
pub fn l0_norm(x: &[Complex64]) -> usize {
    x.iter().filter(|v| v.re.abs() + v.im.abs() != 0.0).count()
}

pub fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseGroundTruth {
    pub signal: ComplexSignal,
    /// Sorted, 0-based.
    pub support: Vec<usize>,
}

impl SparseGroundTruth {
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }
}

/// Draw an `s`-sparse signal of length `n`: support uniform without
/// replacement, on-support values standard (complex) Gaussian, never exactly 0.
pub fn generate_sparse_signal(
    n: usize,
    s: usize,
    rng: RngSpec,
    complex_valued: bool,
) -> Result<SparseGroundTruth> {
    if n == 0 || s == 0 || s > n {
        return Err(Error::invalid(format!(
            "sparsity must satisfy 1 <= s <= n (got n={n}, s={s})"
        )));
    }
    let mut rng = rng.rng();
    let mut support = index::sample(&mut rng, n, s).into_vec();
    support.sort_unstable();

    let mut values = vec![Complex64::new(0.0, 0.0); n];
    for &i in &support {
        values[i] = loop {
            let v = if complex_valued {
                complex_gaussian(&mut rng)
            } else {
                Complex64::new(rng.sample(StandardNormal), 0.0)
            };
            if v.re.abs() + v.im.abs() != 0.0 {
                break v;
            }
        };
    }
    Ok(SparseGroundTruth {
        signal: ComplexSignal(values),
        support,
    })
}
