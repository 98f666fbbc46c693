//! Measurement operators: unitary DFT and coded diffraction patterns (CDP).
//!
//! Both kinds satisfy `Im(A*A) = 0` with `A*A` diagonal, which is what makes
//! the x-subproblem a componentwise division. For the DFT `A*A = I`; for a
//! CDP with masks `M_1..M_K`, `A*A = diag(sum_j |M_j|^2)`.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{ComplexSignal, RngSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    UnitaryDft,
    Cdp,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorKind::UnitaryDft => f.write_str("dft"),
            OperatorKind::Cdp => f.write_str("cdp"),
        }
    }
}

/// `diag(A*A)`, real and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct GramDiagonal(Vec<f64>);

impl GramDiagonal {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Summary reported by [`MeasurementOperator::describe`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorDescription {
    pub kind: OperatorKind,
    pub n: usize,
    pub k: usize,
    pub output_len: usize,
}

/// Scratch buffers for allocation-free forward/adjoint calls. One per worker.
pub struct Workspace {
    fft_scratch: Vec<Complex64>,
    block: Vec<Complex64>,
}

#[derive(Clone)]
pub struct MeasurementOperator {
    kind: OperatorKind,
    n: usize,
    masks: Vec<Vec<Complex64>>,
    gram: GramDiagonal,
    scale: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for MeasurementOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeasurementOperator")
            .field("kind", &self.kind)
            .field("n", &self.n)
            .field("k", &self.num_masks())
            .finish()
    }
}

impl MeasurementOperator {
    pub fn unitary_dft(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("operator length must be >= 1"));
        }
        Ok(Self::build(OperatorKind::UnitaryDft, n, Vec::new(), vec![1.0; n]))
    }

    /// CDP operator from `K >= 1` masks of equal length.
    pub fn cdp(masks: Vec<ComplexSignal>) -> Result<Self> {
        let n = match masks.first() {
            Some(m) => m.len(),
            None => return Err(Error::invalid("CDP needs at least one mask")),
        };
        if let Some(j) = masks.iter().position(|m| m.len() != n) {
            return Err(Error::invalid(format!(
                "mask {j} has length {}, expected {n}",
                masks[j].len()
            )));
        }
        let masks: Vec<Vec<Complex64>> = masks.into_iter().map(ComplexSignal::into_inner).collect();
        let mut gram = vec![0.0; n];
        for m in &masks {
            for (g, v) in gram.iter_mut().zip(m) {
                *g += v.norm_sqr();
            }
        }
        Ok(Self::build(OperatorKind::Cdp, n, masks, gram))
    }

    fn build(kind: OperatorKind, n: usize, masks: Vec<Vec<Complex64>>, gram: Vec<f64>) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            kind,
            n,
            masks,
            gram: GramDiagonal(gram),
            scale: 1.0 / (n as f64).sqrt(),
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
        }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    /// Signal length `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of masks; 1 for the plain DFT.
    pub fn num_masks(&self) -> usize {
        self.masks.len().max(1)
    }

    /// Measurement length: `n` for the DFT, `K n` for CDP.
    pub fn output_len(&self) -> usize {
        self.n * self.num_masks()
    }

    pub fn masks(&self) -> &[Vec<Complex64>] {
        &self.masks
    }

    pub fn gram_diagonal(&self) -> &GramDiagonal {
        &self.gram
    }

    pub fn describe(&self) -> OperatorDescription {
        OperatorDescription {
            kind: self.kind,
            n: self.n,
            k: self.num_masks(),
            output_len: self.output_len(),
        }
    }

    pub fn workspace(&self) -> Workspace {
        let len = self
            .fft
            .get_inplace_scratch_len()
            .max(self.ifft.get_inplace_scratch_len());
        Workspace {
            fft_scratch: vec![Complex64::new(0.0, 0.0); len],
            block: vec![Complex64::new(0.0, 0.0); self.n],
        }
    }

    pub fn forward(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.n {
            return Err(Error::invalid(format!(
                "forward: input length {} != n = {}",
                x.len(),
                self.n
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.output_len()];
        self.forward_into(x, &mut out, &mut self.workspace());
        Ok(out)
    }

    pub fn adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        if y.len() != self.output_len() {
            return Err(Error::invalid(format!(
                "adjoint: input length {} != output length {}",
                y.len(),
                self.output_len()
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        self.adjoint_into(y, &mut out, &mut self.workspace());
        Ok(out)
    }

    /// `out = A x`. Panics on length mismatch.
    pub fn forward_into(&self, x: &[Complex64], out: &mut [Complex64], ws: &mut Workspace) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.output_len());
        let s = self.scale;
        match self.kind {
            OperatorKind::UnitaryDft => {
                out.copy_from_slice(x);
                self.fft.process_with_scratch(out, &mut ws.fft_scratch);
                out.iter_mut().for_each(|v| *v *= s);
            }
            OperatorKind::Cdp => {
                for (mask, block) in self.masks.iter().zip(out.chunks_exact_mut(self.n)) {
                    for ((o, m), v) in block.iter_mut().zip(mask).zip(x) {
                        *o = m * v;
                    }
                    self.fft.process_with_scratch(block, &mut ws.fft_scratch);
                    block.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
    }

    /// `out = A* y`. Panics on length mismatch.
    pub fn adjoint_into(&self, y: &[Complex64], out: &mut [Complex64], ws: &mut Workspace) {
        assert_eq!(y.len(), self.output_len());
        assert_eq!(out.len(), self.n);
        let s = self.scale;
        match self.kind {
            OperatorKind::UnitaryDft => {
                out.copy_from_slice(y);
                self.ifft.process_with_scratch(out, &mut ws.fft_scratch);
                out.iter_mut().for_each(|v| *v *= s);
            }
            OperatorKind::Cdp => {
                out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                for (mask, block) in self.masks.iter().zip(y.chunks_exact(self.n)) {
                    ws.block.copy_from_slice(block);
                    self.ifft.process_with_scratch(&mut ws.block, &mut ws.fft_scratch);
                    for ((o, m), v) in out.iter_mut().zip(mask).zip(&ws.block) {
                        *o += m.conj() * v * s;
                    }
                }
            }
        }
    }

    /// Componentwise magnitudes `|A x|`.
    pub fn magnitudes(&self, x: &[Complex64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.iter().map(|v| v.norm()).collect())
    }
}

const HALF_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const SQRT3: f64 = 1.732_050_807_568_877_2;

/// The eight octanary mask values.
pub const OCTANARY_CANDIDATES: [Complex64; 8] = [
    Complex64::new(HALF_SQRT2, 0.0),
    Complex64::new(-HALF_SQRT2, 0.0),
    Complex64::new(0.0, HALF_SQRT2),
    Complex64::new(0.0, -HALF_SQRT2),
    Complex64::new(SQRT3, 0.0),
    Complex64::new(-SQRT3, 0.0),
    Complex64::new(0.0, SQRT3),
    Complex64::new(0.0, -SQRT3),
];

/// `k` masks of length `n`, entries i.i.d. uniform over the octanary set.
pub fn make_octanary_masks(k: usize, n: usize, rng: RngSpec) -> Result<Vec<ComplexSignal>> {
    if k == 0 || n == 0 {
        return Err(Error::invalid("need k >= 1 masks of length n >= 1"));
    }
    let mut rng = rng.rng();
    (0..k)
        .map(|_| {
            let values = (0..n)
                .map(|_| OCTANARY_CANDIDATES[rng.random_range(0..8)])
                .collect();
            ComplexSignal::new(values)
        })
        .collect()
}

pub fn masks_to_csv(masks: &[ComplexSignal]) -> String {
    let mut out = String::from("mask_index,index,re,im\n");
    for (j, m) in masks.iter().enumerate() {
        for (i, v) in m.iter().enumerate() {
            writeln!(out, "{j},{i},{:?},{:?}", v.re, v.im).unwrap();
        }
    }
    out
}

pub fn masks_from_csv(text: &str) -> Result<Vec<ComplexSignal>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("mask_index,index,re,im") {
        return Err(Error::Parse("expected header `mask_index,index,re,im`".into()));
    }
    let mut masks: Vec<Vec<Complex64>> = Vec::new();
    for (row, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(Error::Parse(format!("row {row}: expected 4 fields")));
        }
        let bad = |s: &str| Error::Parse(format!("row {row}: cannot parse `{s}`"));
        let j: usize = f[0].parse().map_err(|_| bad(f[0]))?;
        let i: usize = f[1].parse().map_err(|_| bad(f[1]))?;
        let re: f64 = f[2].parse().map_err(|_| bad(f[2]))?;
        let im: f64 = f[3].parse().map_err(|_| bad(f[3]))?;
        if j == masks.len() {
            masks.push(Vec::new());
        }
        if j + 1 != masks.len() || i != masks[j].len() {
            return Err(Error::Parse(format!("row {row}: entries out of order")));
        }
        masks[j].push(Complex64::new(re, im));
    }
    masks.into_iter().map(ComplexSignal::new).collect()
}

pub fn masks_to_json(masks: &[ComplexSignal]) -> String {
    let all: Vec<Vec<[f64; 2]>> = masks
        .iter()
        .map(|m| m.iter().map(|v| [v.re, v.im]).collect())
        .collect();
    serde_json::to_string(&all).expect("finite floats serialize")
}

pub fn masks_from_json(text: &str) -> Result<Vec<ComplexSignal>> {
    let all: Vec<Vec<[f64; 2]>> =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    all.into_iter()
        .map(|m| ComplexSignal::new(m.into_iter().map(|[re, im]| Complex64::new(re, im)).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn impulse_transforms_to_constant() {
        let op = MeasurementOperator::unitary_dft(8).unwrap();
        let mut x = vec![c(0.0, 0.0); 8];
        x[0] = c(1.0, 0.0);
        let y = op.forward(&x).unwrap();
        for v in y {
            assert!((v - c(1.0 / 8f64.sqrt(), 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn ones_concentrate_at_dc() {
        let op = MeasurementOperator::unitary_dft(4).unwrap();
        let y = op.forward(&[c(1.0, 0.0); 4]).unwrap();
        let want = [c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        for (a, b) in y.iter().zip(want) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn single_ones_mask_is_plain_dft() {
        let n = 16;
        let ones = ComplexSignal::new(vec![c(1.0, 0.0); n]).unwrap();
        let cdp = MeasurementOperator::cdp(vec![ones]).unwrap();
        let dft = MeasurementOperator::unitary_dft(n).unwrap();
        let mut rng = RngSpec::new(5).rng();
        let y = crate::signal::complex_gaussian_vec(&mut rng, n);
        let a = cdp.adjoint(&y).unwrap();
        let b = dft.adjoint(&y).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).norm() < 1e-14);
        }
    }

    #[test]
    fn gram_of_constant_sqrt3_mask() {
        let m = ComplexSignal::new(vec![c(SQRT3, 0.0); 8]).unwrap();
        let op = MeasurementOperator::cdp(vec![m]).unwrap();
        for g in op.gram_diagonal().as_slice() {
            assert!((g - 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dft_gram_is_ones() {
        let op = MeasurementOperator::unitary_dft(8).unwrap();
        assert_eq!(op.gram_diagonal().as_slice(), &[1.0; 8]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let op = MeasurementOperator::unitary_dft(8).unwrap();
        assert!(matches!(op.forward(&[c(0.0, 0.0); 7]), Err(Error::InvalidArgument(_))));
        let masks = make_octanary_masks(2, 8, RngSpec::new(0)).unwrap();
        let cdp = MeasurementOperator::cdp(masks).unwrap();
        assert!(cdp.adjoint(&[c(0.0, 0.0); 8]).is_err());
        assert_eq!(cdp.describe().output_len, 16);
    }

    #[test]
    fn mask_entries_are_octanary() {
        let masks = make_octanary_masks(3, 100, RngSpec::new(11)).unwrap();
        for m in &masks {
            for v in m.iter() {
                let p = v.norm_sqr();
                assert!((p - 0.5).abs() < 1e-15 || (p - 3.0).abs() < 1e-15, "{p}");
            }
        }
    }

    #[test]
    fn mask_candidates_uniform() {
        let masks = make_octanary_masks(1, 100_000, RngSpec::new(2)).unwrap();
        let mut counts = [0usize; 8];
        for v in masks[0].iter() {
            let j = OCTANARY_CANDIDATES.iter().position(|c| c == v).unwrap();
            counts[j] += 1;
        }
        let total = 100_000.0;
        let expected = total / 8.0;
        let chi2: f64 = counts
            .iter()
            .map(|&k| (k as f64 - expected).powi(2) / expected)
            .sum();
        // 7 dof, 99.9% quantile ~ 24.3
        assert!(chi2 < 24.3, "chi2 = {chi2}");
        for &k in &counts {
            assert!((k as f64 / total - 0.125).abs() < 0.02);
        }
    }

    #[test]
    fn masks_deterministic() {
        let a = make_octanary_masks(2, 32, RngSpec::new(4)).unwrap();
        let b = make_octanary_masks(2, 32, RngSpec::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mask_serialization_round_trips() {
        let masks = make_octanary_masks(3, 5, RngSpec::new(8)).unwrap();
        assert_eq!(masks_from_csv(&masks_to_csv(&masks)).unwrap(), masks);
        assert_eq!(masks_from_json(&masks_to_json(&masks)).unwrap(), masks);
    }
}
