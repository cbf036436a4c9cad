//! Spectral calculus on torus fields: derivatives, inverse Laplacian, Leray
//! projection, curl, and the anti-divergence operators.
//!
//! Conventions: T^2 = [0, period)^2 with Fourier modes exp(2 pi i k.x / period),
//! k in Z^2. All operators here are linear and act mode by mode; products with
//! slow coefficients are handled by the bilinear anti-divergence routines.

use rustfft::num_complex::Complex;

use crate::error::SpectralError;
use crate::field::{fft2_forward, fft2_inverse, wavenumber, Field2D, Rank};

#[derive(Clone, Copy, Debug)]
pub struct SpectralOpConfig {
    /// Componentwise tolerance on |mean| for operators requiring mean-zero input.
    pub mean_zero_tol: f64,
    /// 2/3-rule truncation for product post-processing.
    pub dealias: bool,
}

impl Default for SpectralOpConfig {
    fn default() -> Self {
        SpectralOpConfig {
            mean_zero_tol: 1e-10,
            dealias: false,
        }
    }
}

/// Complex spectral planes, one per component.
pub struct Spectrum {
    pub n: usize,
    pub period: f64,
    pub planes: Vec<Vec<Complex<f64>>>,
}

pub fn analyze(f: &Field2D) -> Spectrum {
    Spectrum {
        n: f.n(),
        period: f.period(),
        planes: (0..f.ncomp()).map(|c| fft2_forward(f.n(), f.comp(c))).collect(),
    }
}

pub fn synthesize(rank: Rank, s: &Spectrum) -> Field2D {
    let comps = s.planes.iter().map(|p| fft2_inverse(s.n, p)).collect();
    Field2D::from_comps(rank, s.n, s.period, comps).expect("shape preserved")
}

/// Multiply one spectral plane by (2 pi i k_axis / period)^order.
/// Odd orders zero the Nyquist mode so the result stays real.
fn apply_derivative(plane: &mut [Complex<f64>], n: usize, period: f64, axis: u32, order: u32) {
    let tau = 2.0 * std::f64::consts::PI / period;
    for j in 0..n {
        for l in 0..n {
            let k = if axis == 1 {
                wavenumber(j, n)
            } else {
                wavenumber(l, n)
            };
            let idx = j * n + l;
            if order % 2 == 1 && (k == -(n as i64) / 2) {
                plane[idx] = Complex::new(0.0, 0.0);
                continue;
            }
            let ik = Complex::new(0.0, tau * k as f64);
            plane[idx] *= ik.powu(order);
        }
    }
}

fn apply_inv_laplacian(plane: &mut [Complex<f64>], n: usize, period: f64) {
    let tau = 2.0 * std::f64::consts::PI / period;
    for j in 0..n {
        for l in 0..n {
            let k1 = wavenumber(j, n) as f64;
            let k2 = wavenumber(l, n) as f64;
            let idx = j * n + l;
            if k1 == 0.0 && k2 == 0.0 {
                plane[idx] = Complex::new(0.0, 0.0);
            } else {
                plane[idx] /= -(tau * tau) * (k1 * k1 + k2 * k2);
            }
        }
    }
}

/// Spectral partial derivative of the given order along axis 1 or 2.
pub fn derivative(f: &Field2D, axis: u32, order: u32) -> Result<Field2D, SpectralError> {
    if order == 0 {
        return Err(SpectralError::ZeroOrder);
    }
    if order > 8 {
        return Err(SpectralError::OrderTooHigh(order));
    }
    if axis != 1 && axis != 2 {
        return Err(SpectralError::BadAxis(axis));
    }
    let mut s = analyze(f);
    for p in &mut s.planes {
        apply_derivative(p, s.n, s.period, axis, order);
    }
    Ok(synthesize(f.rank(), &s))
}

/// Solve Laplace(u) = f - mean(f) with mean-zero u. Rejects inputs whose mean
/// exceeds the configured tolerance.
pub fn inv_laplacian(f: &Field2D, cfg: &SpectralOpConfig) -> Result<Field2D, SpectralError> {
    let means = f.mean();
    let scale = f.sup_norm().max(1.0);
    for (c, m) in means.iter().enumerate() {
        if m.abs() > cfg.mean_zero_tol * scale {
            return Err(SpectralError::NotMeanZero {
                mean: *m,
                tol: cfg.mean_zero_tol * scale,
                comp: c,
            });
        }
    }
    Ok(inv_laplacian_unchecked(f))
}

/// Same as [`inv_laplacian`] but silently projects away the mean.
pub fn inv_laplacian_unchecked(f: &Field2D) -> Field2D {
    let mut s = analyze(f);
    for p in &mut s.planes {
        apply_inv_laplacian(p, s.n, s.period);
    }
    synthesize(f.rank(), &s)
}

/// Divergence of a vector or symmetric-tensor field.
pub fn divergence(f: &Field2D) -> Result<Field2D, SpectralError> {
    match f.rank() {
        Rank::Vector => {
            let d1 = derivative_comp(f, 0, 1, 1);
            let d2 = derivative_comp(f, 1, 2, 1);
            let sum: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| a + b).collect();
            Ok(Field2D::from_comps(Rank::Scalar, f.n(), f.period(), vec![sum]).unwrap())
        }
        Rank::SymTensor => {
            // (div M)_i = d_j M_ij with components (11, 12, 22)
            let d11 = derivative_comp(f, 0, 1, 1);
            let d12_2 = derivative_comp(f, 1, 2, 1);
            let d12_1 = derivative_comp(f, 1, 1, 1);
            let d22 = derivative_comp(f, 2, 2, 1);
            let c1: Vec<f64> = d11.iter().zip(&d12_2).map(|(a, b)| a + b).collect();
            let c2: Vec<f64> = d12_1.iter().zip(&d22).map(|(a, b)| a + b).collect();
            Ok(Field2D::from_comps(Rank::Vector, f.n(), f.period(), vec![c1, c2]).unwrap())
        }
        Rank::Scalar => Err(SpectralError::RankMismatch {
            expected: Rank::Vector,
            got: Rank::Scalar,
        }),
    }
}

fn derivative_comp(f: &Field2D, comp: usize, axis: u32, order: u32) -> Vec<f64> {
    let mut plane = fft2_forward(f.n(), f.comp(comp));
    apply_derivative(&mut plane, f.n(), f.period(), axis, order);
    fft2_inverse(f.n(), &plane)
}

/// Gradient of a scalar field.
pub fn gradient(f: &Field2D) -> Result<Field2D, SpectralError> {
    if f.rank() != Rank::Scalar {
        return Err(SpectralError::RankMismatch {
            expected: Rank::Scalar,
            got: f.rank(),
        });
    }
    let g1 = derivative_comp(f, 0, 1, 1);
    let g2 = derivative_comp(f, 0, 2, 1);
    Ok(Field2D::from_comps(Rank::Vector, f.n(), f.period(), vec![g1, g2]).unwrap())
}

/// Leray projection: v - grad inv_laplacian div(v) - mean(v).
/// The output is divergence-free and mean-zero.
pub fn leray_project(v: &Field2D) -> Result<Field2D, SpectralError> {
    if v.rank() != Rank::Vector {
        return Err(SpectralError::RankMismatch {
            expected: Rank::Vector,
            got: v.rank(),
        });
    }
    let mut s = analyze(v);
    let n = s.n;
    let tau = 2.0 * std::f64::consts::PI / s.period;
    for j in 0..n {
        for l in 0..n {
            let k1 = wavenumber(j, n) as f64 * tau;
            let k2 = wavenumber(l, n) as f64 * tau;
            let idx = j * n + l;
            let k2norm = k1 * k1 + k2 * k2;
            if k2norm == 0.0 {
                s.planes[0][idx] = Complex::new(0.0, 0.0);
                s.planes[1][idx] = Complex::new(0.0, 0.0);
                continue;
            }
            let v1 = s.planes[0][idx];
            let v2 = s.planes[1][idx];
            let kd = (v1 * k1 + v2 * k2) / k2norm;
            s.planes[0][idx] = v1 - kd * k1;
            s.planes[1][idx] = v2 - kd * k2;
        }
    }
    Ok(synthesize(Rank::Vector, &s))
}

/// Scalar curl of a plane vector field: d1 u2 - d2 u1.
pub fn curl2d(u: &Field2D) -> Result<Field2D, SpectralError> {
    if u.rank() != Rank::Vector {
        return Err(SpectralError::RankMismatch {
            expected: Rank::Vector,
            got: u.rank(),
        });
    }
    let a = derivative_comp(u, 1, 1, 1);
    let b = derivative_comp(u, 0, 2, 1);
    let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    Ok(Field2D::from_comps(Rank::Scalar, u.n(), u.period(), vec![c]).unwrap())
}

/// Anti-divergence R0: v -> (D Lap^-1 + (D Lap^-1)^T - I div Lap^-1)(v - mean v).
/// Satisfies div(R0 v) = v - mean(v) and R0 v symmetric.
pub fn antidiv_r0(v: &Field2D) -> Result<Field2D, SpectralError> {
    if v.rank() != Rank::Vector {
        return Err(SpectralError::RankMismatch {
            expected: Rank::Vector,
            got: v.rank(),
        });
    }
    let g = inv_laplacian_unchecked(v); // vector potential, mean removed
    // (DG)_{ij} = d_j G_i
    let d1g1 = derivative_comp(&g, 0, 1, 1);
    let d2g1 = derivative_comp(&g, 0, 2, 1);
    let d1g2 = derivative_comp(&g, 1, 1, 1);
    let d2g2 = derivative_comp(&g, 1, 2, 1);
    let len = d1g1.len();
    let mut m11 = vec![0.0; len];
    let mut m12 = vec![0.0; len];
    let mut m22 = vec![0.0; len];
    for i in 0..len {
        let div_g = d1g1[i] + d2g2[i];
        m11[i] = 2.0 * d1g1[i] - div_g;
        m12[i] = d2g1[i] + d1g2[i];
        m22[i] = 2.0 * d2g2[i] - div_g;
    }
    Ok(Field2D::from_comps(Rank::SymTensor, v.n(), v.period(), vec![m11, m12, m22]).unwrap())
}

/// grad Lap^-1 of a scalar (the vector anti-divergence of a scalar density):
/// div(result) = f - mean(f).
pub fn antidiv_vector(f: &Field2D) -> Result<Field2D, SpectralError> {
    if f.rank() != Rank::Scalar {
        return Err(SpectralError::RankMismatch {
            expected: Rank::Scalar,
            got: f.rank(),
        });
    }
    gradient(&inv_laplacian_unchecked(f))
}

fn check_mean_zero(v: &Field2D, cfg: &SpectralOpConfig) -> Result<(), SpectralError> {
    let scale = v.sup_norm().max(1.0);
    for (c, m) in v.mean().iter().enumerate() {
        if m.abs() > cfg.mean_zero_tol * scale {
            return Err(SpectralError::NotMeanZero {
                mean: *m,
                tol: cfg.mean_zero_tol * scale,
                comp: c,
            });
        }
    }
    Ok(())
}

/// Bilinear anti-divergence for a slow scalar times a fast mean-zero vector:
/// R(f v) = f R0(v) - R0(grad f . R0(v) + int f v).
/// div(result) = f v - int(f v) exactly on the grid.
pub fn antidiv_bilinear(
    f: &Field2D,
    v: &Field2D,
    cfg: &SpectralOpConfig,
) -> Result<Field2D, SpectralError> {
    if f.rank() != Rank::Scalar {
        return Err(SpectralError::RankMismatch {
            expected: Rank::Scalar,
            got: f.rank(),
        });
    }
    check_mean_zero(v, cfg)?;
    let r0v = antidiv_r0(v)?;
    let grad_f = gradient(f)?;
    let n2 = f.n() * f.n();
    // int f v (componentwise torus average times area)
    let area = f.period() * f.period();
    let mut int_fv = [0.0f64; 2];
    for c in 0..2 {
        let vals: Vec<f64> = (0..n2).map(|i| f.comp(0)[i] * v.comp(c)[i]).collect();
        int_fv[c] = crate::field::pairwise_sum(&vals) / n2 as f64 * area;
    }
    // h = grad f . R0 v + int f v  (vector)
    let mut h1 = vec![0.0; n2];
    let mut h2 = vec![0.0; n2];
    for i in 0..n2 {
        let g1 = grad_f.comp(0)[i];
        let g2 = grad_f.comp(1)[i];
        h1[i] = g1 * r0v.comp(0)[i] + g2 * r0v.comp(1)[i] + int_fv[0] / area;
        h2[i] = g1 * r0v.comp(1)[i] + g2 * r0v.comp(2)[i] + int_fv[1] / area;
    }
    let h = Field2D::from_comps(Rank::Vector, f.n(), f.period(), vec![h1, h2]).unwrap();
    let r0h = antidiv_r0(&h)?;
    // f R0(v) - R0(h)
    let mut out = r0v.clone();
    for c in 0..3 {
        let plane = out.comp_mut(c);
        for i in 0..n2 {
            plane[i] = f.comp(0)[i] * plane[i] - r0h.comp(c)[i];
        }
    }
    Ok(out)
}

/// Scalar variant (Remark on scalar densities): slow scalar f, fast mean-zero
/// scalar v, with grad Lap^-1 in place of R0. Returns a vector field with
/// div(result) = f v - int(f v).
pub fn antidiv_scalar(
    f: &Field2D,
    v: &Field2D,
    cfg: &SpectralOpConfig,
) -> Result<Field2D, SpectralError> {
    if f.rank() != Rank::Scalar || v.rank() != Rank::Scalar {
        return Err(SpectralError::RankMismatch {
            expected: Rank::Scalar,
            got: if f.rank() != Rank::Scalar { f.rank() } else { v.rank() },
        });
    }
    check_mean_zero(v, cfg)?;
    let gv = antidiv_vector(v)?; // grad Lap^-1 v
    let grad_f = gradient(f)?;
    let n2 = f.n() * f.n();
    let area = f.period() * f.period();
    let vals: Vec<f64> = (0..n2).map(|i| f.comp(0)[i] * v.comp(0)[i]).collect();
    let int_fv = crate::field::pairwise_sum(&vals) / n2 as f64 * area;
    let mut h = vec![0.0; n2];
    for i in 0..n2 {
        h[i] = grad_f.comp(0)[i] * gv.comp(0)[i] + grad_f.comp(1)[i] * gv.comp(1)[i] + int_fv / area;
    }
    let mut hf = Field2D::from_comps(Rank::Scalar, f.n(), f.period(), vec![h]).unwrap();
    // remove the mean before inverting
    let m = hf.mean()[0];
    for x in hf.comp_mut(0).iter_mut() {
        *x -= m;
    }
    let corr = antidiv_vector(&hf)?;
    let mut out = gv.clone();
    for c in 0..2 {
        let plane = out.comp_mut(c);
        for i in 0..n2 {
            plane[i] = f.comp(0)[i] * plane[i] - corr.comp(c)[i];
        }
    }
    Ok(out)
}

/// Report from the commutator probe ||R0 R(grad a . div A)||_L1 / ||A||_L1.
#[derive(Clone, Debug)]
pub struct CommutatorReport {
    pub ratio: f64,
    pub a_c3_norm: f64,
    pub numerator_l1: f64,
    pub denominator_l1: f64,
}

/// Probe for the Calderon-Zygmund commutator bound: given a slow scalar a and
/// a mean-zero symmetric tensor A, compute ||R0 R(grad a . div A)||_L1 / ||A||_L1.
pub fn commutator_bound_probe(
    a: &Field2D,
    big_a: &Field2D,
    cfg: &SpectralOpConfig,
) -> Result<CommutatorReport, SpectralError> {
    if big_a.rank() != Rank::SymTensor {
        return Err(SpectralError::RankMismatch {
            expected: Rank::SymTensor,
            got: big_a.rank(),
        });
    }
    check_mean_zero(big_a, cfg)?;
    let denom = big_a.l1_norm();
    let a_c3 = c_norm(a, 3)?;
    if denom == 0.0 {
        return Ok(CommutatorReport {
            ratio: 0.0,
            a_c3_norm: a_c3,
            numerator_l1: 0.0,
            denominator_l1: 0.0,
        });
    }
    let div_a = divergence(big_a)?;
    let grad_a = gradient(a)?;
    // R(grad a . div A) assembled componentwise from the scalar bilinear
    // anti-divergence with slow factors d_j a and fast factors (div A)_j.
    let n2 = a.n() * a.n();
    let mut acc = Field2D::zeros(Rank::Vector, a.n(), a.period()).unwrap();
    for j in 0..2 {
        let slow =
            Field2D::from_comps(Rank::Scalar, a.n(), a.period(), vec![grad_a.comp(j).to_vec()])
                .unwrap();
        let mut fast =
            Field2D::from_comps(Rank::Scalar, a.n(), a.period(), vec![div_a.comp(j).to_vec()])
                .unwrap();
        let m = fast.mean()[0];
        for x in fast.comp_mut(0).iter_mut() {
            *x -= m;
        }
        let piece = antidiv_scalar(&slow, &fast, cfg)?;
        acc.add_assign(&piece);
    }
    let _ = n2;
    let num = antidiv_r0(&acc)?.l1_norm();
    Ok(CommutatorReport {
        ratio: num / denom,
        a_c3_norm: a_c3,
        numerator_l1: num,
        denominator_l1: denom,
    })
}

/// Grid C^m norm: max over derivative multi-orders up to total order m of the
/// sup norm of the spectral derivative.
pub fn c_norm(f: &Field2D, m: u32) -> Result<f64, SpectralError> {
    let mut best = f.sup_norm();
    for o1 in 0..=m {
        for o2 in 0..=(m - o1) {
            if o1 == 0 && o2 == 0 {
                continue;
            }
            let mut g = f.clone();
            if o1 > 0 {
                g = derivative(&g, 1, o1)?;
            }
            if o2 > 0 {
                g = derivative(&g, 2, o2)?;
            }
            best = best.max(g.sup_norm());
        }
    }
    Ok(best)
}

/// 2/3-rule truncation, in place.
pub fn dealias(f: &mut Field2D) {
    let n = f.n();
    let cut = n as i64 / 3;
    for c in 0..f.ncomp() {
        let mut plane = fft2_forward(n, f.comp(c));
        for j in 0..n {
            for l in 0..n {
                let k1 = wavenumber(j, n).abs();
                let k2 = wavenumber(l, n).abs();
                if k1 > cut || k2 > cut {
                    plane[j * n + l] = Complex::new(0.0, 0.0);
                }
            }
        }
        *f.comp_mut(c) = fft2_inverse(n, &plane);
    }
}
