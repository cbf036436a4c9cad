//! Uniform-grid fields on the 2-torus.
//!
//! A `Field2D` stores real samples of a scalar, vector or symmetric 2-tensor
//! at the points `(j/N, l/N) * period`, `0 <= j,l < N`, row-major with `j`
//! indexing the first coordinate. Spectral calculus lives in [`crate::spectral`].

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::FieldError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rank {
    Scalar,
    Vector,
    SymTensor,
}

impl Rank {
    pub fn ncomp(self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => 2,
            Rank::SymTensor => 3,
        }
    }

    fn code(self) -> u8 {
        match self {
            Rank::Scalar => 0,
            Rank::Vector => 1,
            Rank::SymTensor => 2,
        }
    }

    fn from_code(c: u8) -> Option<Rank> {
        match c {
            0 => Some(Rank::Scalar),
            1 => Some(Rank::Vector),
            2 => Some(Rank::SymTensor),
            _ => None,
        }
    }
}

/// Sampled field on T^2. Tensor components are stored in index order
/// (11, 12, 22) for rank two and (1, 2) for vectors; M12 == M21 by storage.
#[derive(Clone, Debug)]
pub struct Field2D {
    rank: Rank,
    n: usize,
    period: f64,
    comps: Vec<Vec<f64>>,
}

impl Field2D {
    pub fn zeros(rank: Rank, n: usize, period: f64) -> Result<Self, FieldError> {
        if !n.is_power_of_two() || n < 16 {
            return Err(FieldError::BadResolution(n));
        }
        if !(period > 0.0) {
            return Err(FieldError::BadPeriod(period));
        }
        Ok(Field2D {
            rank,
            n,
            period,
            comps: vec![vec![0.0; n * n]; rank.ncomp()],
        })
    }

    /// Sample a scalar function at the grid points.
    pub fn scalar_from_fn(n: usize, period: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self, FieldError> {
        let mut out = Field2D::zeros(Rank::Scalar, n, period)?;
        out.fill(0, &f);
        Ok(out)
    }

    pub fn vector_from_fn(
        n: usize,
        period: f64,
        f: impl Fn(f64, f64) -> [f64; 2],
    ) -> Result<Self, FieldError> {
        let mut out = Field2D::zeros(Rank::Vector, n, period)?;
        let h = period / n as f64;
        for j in 0..n {
            for l in 0..n {
                let v = f(j as f64 * h, l as f64 * h);
                out.comps[0][j * n + l] = v[0];
                out.comps[1][j * n + l] = v[1];
            }
        }
        Ok(out)
    }

    /// Components in order (11, 12, 22).
    pub fn sym_from_fn(
        n: usize,
        period: f64,
        f: impl Fn(f64, f64) -> [f64; 3],
    ) -> Result<Self, FieldError> {
        let mut out = Field2D::zeros(Rank::SymTensor, n, period)?;
        let h = period / n as f64;
        for j in 0..n {
            for l in 0..n {
                let v = f(j as f64 * h, l as f64 * h);
                for c in 0..3 {
                    out.comps[c][j * n + l] = v[c];
                }
            }
        }
        Ok(out)
    }

    fn fill(&mut self, comp: usize, f: &impl Fn(f64, f64) -> f64) {
        let n = self.n;
        let h = self.period / n as f64;
        for j in 0..n {
            for l in 0..n {
                self.comps[comp][j * n + l] = f(j as f64 * h, l as f64 * h);
            }
        }
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut Vec<f64> {
        &mut self.comps[c]
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    /// Build a field of the same shape from per-component planes.
    pub fn from_comps(rank: Rank, n: usize, period: f64, comps: Vec<Vec<f64>>) -> Result<Self, FieldError> {
        let f = Field2D::zeros(rank, n, period)?;
        assert_eq!(comps.len(), rank.ncomp());
        for c in &comps {
            assert_eq!(c.len(), n * n);
        }
        Ok(Field2D { comps, ..f })
    }

    /// Mean of each component (torus average).
    pub fn mean(&self) -> Vec<f64> {
        let m = (self.n * self.n) as f64;
        self.comps
            .iter()
            .map(|c| pairwise_sum(c) / m)
            .collect()
    }

    /// sup over samples of the pointwise Euclidean magnitude.
    pub fn sup_norm(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.n * self.n {
            let mut s = 0.0;
            for c in &self.comps {
                s += c[i] * c[i];
            }
            // the 12 component counts twice in a symmetric tensor
            if self.rank == Rank::SymTensor {
                s += self.comps[1][i] * self.comps[1][i];
            }
            best = best.max(s.sqrt());
        }
        best
    }

    /// L^1 norm of the pointwise magnitude by the trapezoid-exact grid rule.
    pub fn l1_norm(&self) -> f64 {
        let n2 = (self.n * self.n) as f64;
        let area = self.period * self.period;
        let vals: Vec<f64> = (0..self.n * self.n)
            .map(|i| {
                let mut s = 0.0;
                for c in &self.comps {
                    s += c[i] * c[i];
                }
                if self.rank == Rank::SymTensor {
                    s += self.comps[1][i] * self.comps[1][i];
                }
                s.sqrt()
            })
            .collect();
        pairwise_sum(&vals) / n2 * area
    }

    pub fn l2_norm(&self) -> f64 {
        let n2 = (self.n * self.n) as f64;
        let area = self.period * self.period;
        let vals: Vec<f64> = (0..self.n * self.n)
            .map(|i| {
                let mut s = 0.0;
                for c in &self.comps {
                    s += c[i] * c[i];
                }
                if self.rank == Rank::SymTensor {
                    s += self.comps[1][i] * self.comps[1][i];
                }
                s
            })
            .collect();
        (pairwise_sum(&vals) / n2 * area).sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for comp in &mut self.comps {
            for v in comp.iter_mut() {
                *v *= c;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Field2D) {
        assert_eq!(self.rank, other.rank);
        assert_eq!(self.n, other.n);
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn sub(&self, other: &Field2D) -> Field2D {
        let mut out = self.clone();
        assert_eq!(self.rank, other.rank);
        for (a, b) in out.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x -= *y;
            }
        }
        out
    }

    /// Binary snapshot: magic "EFLD", version u32, rank u8, N u32, period f64,
    /// then one row-major little-endian f64 block per component.
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(b"EFLD")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&[self.rank.code()])?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&self.period.to_le_bytes())?;
        for c in &self.comps {
            for v in c {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Self, FieldError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(FieldError::Io)?;
        if &magic != b"EFLD" {
            return Err(FieldError::BadMagic);
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(FieldError::Io)?;
        let version = u32::from_le_bytes(b4);
        if version != 1 {
            return Err(FieldError::BadVersion(version));
        }
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1).map_err(FieldError::Io)?;
        let rank = Rank::from_code(b1[0]).ok_or(FieldError::BadRankCode(b1[0]))?;
        r.read_exact(&mut b4).map_err(FieldError::Io)?;
        let n = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(FieldError::Io)?;
        let period = f64::from_le_bytes(b8);
        let mut out = Field2D::zeros(rank, n, period)?;
        for c in 0..rank.ncomp() {
            for i in 0..n * n {
                r.read_exact(&mut b8).map_err(FieldError::Io)?;
                out.comps[c][i] = f64::from_le_bytes(b8);
            }
        }
        Ok(out)
    }
}

/// Pairwise summation for bit-stable, accurate reductions.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        let mut s = 0.0;
        for x in v {
            s += x;
        }
        return s;
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = plans.lock().unwrap();
    guard
        .entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

/// Forward 2D transform of one real component plane (row-major, n x n).
/// Normalization: coefficients are Fourier coefficients (divided by n^2),
/// so `coeff[0]` is the mean.
pub fn fft2_forward(n: usize, samples: &[f64]) -> Vec<Complex<f64>> {
    let mut data: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    let fft = plan(n, false);
    // rows (contiguous, axis 2)
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    // columns (axis 1)
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for l in 0..n {
        for j in 0..n {
            col[j] = data[j * n + l];
        }
        fft.process(&mut col);
        for j in 0..n {
            data[j * n + l] = col[j];
        }
    }
    let scale = 1.0 / (n * n) as f64;
    for c in data.iter_mut() {
        *c *= scale;
    }
    data
}

/// Inverse of [`fft2_forward`]; returns the real part of the reconstruction.
pub fn fft2_inverse(n: usize, coeffs: &[Complex<f64>]) -> Vec<f64> {
    let mut data = coeffs.to_vec();
    let fft = plan(n, true);
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for l in 0..n {
        for j in 0..n {
            col[j] = data[j * n + l];
        }
        fft.process(&mut col);
        for j in 0..n {
            data[j * n + l] = col[j];
        }
    }
    data.into_iter().map(|c| c.re).collect()
}

/// Signed wavenumber for grid index `j` at resolution `n`.
pub fn wavenumber(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_transform() {
        let n = 32;
        let f = Field2D::scalar_from_fn(n, 1.0, |x1, x2| {
            (2.0 * std::f64::consts::PI * x1).sin() * (4.0 * std::f64::consts::PI * x2).cos() + 0.3
        })
        .unwrap();
        let coeffs = fft2_forward(n, f.comp(0));
        let back = fft2_inverse(n, &coeffs);
        let sup: f64 = f
            .comp(0)
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(sup <= 1e-12 * f.sup_norm().max(1.0), "roundtrip error {sup}");
    }

    #[test]
    fn rejects_bad_resolution() {
        assert!(Field2D::zeros(Rank::Scalar, 24, 1.0).is_err());
        assert!(Field2D::zeros(Rank::Scalar, 8, 1.0).is_err());
    }

    #[test]
    fn snapshot_roundtrip() {
        let f = Field2D::vector_from_fn(16, 2.0, |x1, x2| [x1 - x2, x1 * x2]).unwrap();
        let mut buf = Vec::new();
        f.write_snapshot(&mut buf).unwrap();
        let g = Field2D::read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(g.rank(), Rank::Vector);
        assert_eq!(g.n(), 16);
        assert_eq!(g.period(), 2.0);
        assert_eq!(g.comp(0), f.comp(0));
        assert_eq!(g.comp(1), f.comp(1));
    }

    #[test]
    fn mean_is_exact_for_constants() {
        let f = Field2D::scalar_from_fn(16, 1.0, |_, _| 2.5).unwrap();
        assert_eq!(f.mean()[0], 2.5);
    }
}
