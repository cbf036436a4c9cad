//! Compactly supported 1D profiles with analytic derivatives.
//!
//! The default kind is the polynomial bump (1-x^2)^m, which is C^{m-1} at the
//! support boundary and gives exact rational derivative coefficients. An
//! exponential bump exp(-1/(1-x^2)) is available behind a flag; it is C-infinity
//! but underflow-prone near the boundary.
//!
//! Normalizations: psi is scaled so int psi^2 = 1; Phi is scaled so
//! int (Phi''')^2 = 1, making phi := -Phi''' unit-normalized in L^2.

use crate::dyadic::Dyadic;
use crate::error::ProfileError;
use crate::quad;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const MAX_DERIVATIVE: u32 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProfileKind {
    Poly { m: u32 },
    Exp,
}

/// A compactly supported profile on (-1, 1) with analytic derivatives.
#[derive(Clone, Debug)]
pub struct Profile1D {
    kind: ProfileKind,
    /// Polynomial coefficients of derivative order d (poly kind only).
    poly_derivs: Option<Vec<Vec<f64>>>,
    normalization: f64,
}

impl Profile1D {
    /// Unnormalized polynomial bump (1-x^2)^m as coefficient vectors.
    fn poly_bump_coeffs(m: u32) -> Vec<f64> {
        // (1 - x^2)^m = sum_j C(m,j) (-1)^j x^{2j}
        let mut c = vec![0.0; 2 * m as usize + 1];
        let mut binom = 1.0f64;
        for j in 0..=m {
            c[2 * j as usize] = if j % 2 == 0 { binom } else { -binom };
            binom = binom * (m - j) as f64 / (j + 1) as f64;
        }
        c
    }

    fn differentiate(c: &[f64]) -> Vec<f64> {
        if c.len() <= 1 {
            return vec![0.0];
        }
        (1..c.len()).map(|j| c[j] * j as f64).collect()
    }

    fn from_poly(coeffs: Vec<f64>, normalization: f64, kind: ProfileKind) -> Self {
        let mut derivs = vec![coeffs];
        for _ in 0..MAX_DERIVATIVE {
            let next = Self::differentiate(derivs.last().unwrap());
            derivs.push(next);
        }
        Profile1D {
            kind,
            poly_derivs: Some(derivs),
            normalization,
        }
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Value of the d-th derivative at x; identically zero outside (-1, 1).
    pub fn eval(&self, d: u32, x: f64) -> f64 {
        assert!(d <= MAX_DERIVATIVE, "derivative order {d} unavailable");
        if x <= -1.0 || x >= 1.0 {
            return 0.0;
        }
        match &self.poly_derivs {
            Some(derivs) => {
                let c = &derivs[d as usize];
                let mut acc = 0.0;
                for &coef in c.iter().rev() {
                    acc = acc * x + coef;
                }
                self.normalization * acc
            }
            None => self.normalization * exp_bump_deriv(d, x),
        }
    }

    /// A profile whose order-0 value is this profile's order-`off` derivative.
    pub fn derivative_profile(&self, off: u32) -> Profile1D {
        assert!(off <= MAX_DERIVATIVE);
        match &self.poly_derivs {
            Some(derivs) => {
                let mut shifted: Vec<Vec<f64>> = derivs[off as usize..].to_vec();
                while shifted.len() < (MAX_DERIVATIVE + 1) as usize {
                    let next = Self::differentiate(shifted.last().unwrap());
                    shifted.push(next);
                }
                Profile1D {
                    kind: self.kind,
                    poly_derivs: Some(shifted),
                    normalization: self.normalization,
                }
            }
            None => panic!("derivative_profile unsupported for the exponential kind"),
        }
    }

    /// Exact integral over (-1,1) of (d-th derivative)^2, by quadrature with
    /// enough nodes to be exact for the polynomial kind.
    pub fn l2sq(&self, d: u32) -> f64 {
        quad::integrate(|x| self.eval(d, x).powi(2), -1.0, 1.0, 200)
    }
}

/// Derivatives of exp(-1/(1-x^2)) by Taylor-mode differentiation.
fn exp_bump_deriv(d: u32, x: f64) -> f64 {
    const ORD: usize = (MAX_DERIVATIVE + 1) as usize;
    // Taylor coefficients of t -> x + t composed through the bump.
    let mut u = [0.0f64; ORD]; // 1 - (x+t)^2
    u[0] = 1.0 - x * x;
    if ORD > 1 {
        u[1] = -2.0 * x;
    }
    if ORD > 2 {
        u[2] = -1.0;
    }
    // g = -1/u  via series division
    let mut g = [0.0f64; ORD];
    g[0] = -1.0 / u[0];
    for k in 1..ORD {
        let mut s = 0.0;
        for j in 1..=k {
            s += u[j] * g[k - j];
        }
        g[k] = -s / u[0];
    }
    // f = exp(g): f' = g' f  => k f_k = sum_{j=1..k} j g_j f_{k-j}
    let mut f = [0.0f64; ORD];
    f[0] = g[0].exp();
    for k in 1..ORD {
        let mut s = 0.0;
        for j in 1..=k {
            s += j as f64 * g[j] * f[k - j];
        }
        f[k] = s / k as f64;
    }
    // d-th derivative = d! * f_d
    let mut fact = 1.0;
    for i in 1..=d as u64 {
        fact *= i as f64;
    }
    fact * f[d as usize]
}

/// Build the pair (Phi, psi) with the normalizations required by the jets.
pub fn make_profiles(kind: ProfileKind) -> Result<(Profile1D, Profile1D), ProfileError> {
    match kind {
        ProfileKind::Poly { m } => {
            if m < 9 {
                return Err(ProfileError::ExponentTooSmall(m));
            }
            let coeffs = Profile1D::poly_bump_coeffs(m);
            let raw = Profile1D::from_poly(coeffs.clone(), 1.0, kind);
            let phi_l2sq = raw.l2sq(3);
            let big_phi = Profile1D::from_poly(coeffs.clone(), phi_l2sq.powf(-0.5), kind);
            let psi_l2sq = raw.l2sq(0);
            let psi = Profile1D::from_poly(coeffs, psi_l2sq.powf(-0.5), kind);
            Ok((big_phi, psi))
        }
        ProfileKind::Exp => {
            let raw = Profile1D {
                kind,
                poly_derivs: None,
                normalization: 1.0,
            };
            let phi_l2sq = quad::integrate_panels(|x| raw.eval(3, x).powi(2), -1.0, 1.0, 16, 60);
            let psi_l2sq = quad::integrate_panels(|x| raw.eval(0, x).powi(2), -1.0, 1.0, 16, 60);
            let big_phi = Profile1D {
                normalization: phi_l2sq.powf(-0.5),
                ..raw.clone()
            };
            let psi = Profile1D {
                normalization: psi_l2sq.powf(-0.5),
                ..raw
            };
            Ok((big_phi, psi))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Perp,
    Parallel,
}

/// A dyadically rescaled, shifted, 1-periodized profile:
///   perp:     rho^k_r(x) = (2^-k r)^{-1/2} rho((x - 2^{2-k} r) / (2^-k r))
///   parallel: rho^k_r(x) = (2^-k r)^{-1/2} rho(x / (2^-k r))
#[derive(Clone, Debug)]
pub struct ScaledProfile {
    pub base: Arc<Profile1D>,
    pub k: u32,
    pub r: Dyadic,
    pub variant: Variant,
}

impl ScaledProfile {
    pub fn new(base: Arc<Profile1D>, k: u32, r: Dyadic, variant: Variant) -> Self {
        ScaledProfile { base, k, r, variant }
    }

    /// Width scale 2^-k r as f64.
    pub fn width(&self) -> f64 {
        self.r.to_f64() * (-(self.k as f64)).exp2()
    }

    pub fn center_shift(&self) -> f64 {
        match self.variant {
            Variant::Perp => 4.0 * self.width(),
            Variant::Parallel => 0.0,
        }
    }

    /// Support as exact dyadic endpoints (perp: (3*2^-k r, 5*2^-k r);
    /// parallel: (-2^-k r, 2^-k r)), before periodization.
    pub fn support(&self) -> (Dyadic, Dyadic) {
        let w = &self.r * &Dyadic::pow2(-(self.k as i64));
        match self.variant {
            Variant::Perp => (&Dyadic::from_int(3) * &w, &Dyadic::from_int(5) * &w),
            Variant::Parallel => (-w.clone(), w),
        }
    }

    /// d-th derivative of the 1-periodized scaled profile at x. Widths < 1
    /// guarantee at most one active translate; we test the two candidates
    /// around the fractional part.
    pub fn eval(&self, d: u32, x: f64) -> Result<f64, ProfileError> {
        if d > MAX_DERIVATIVE {
            return Err(ProfileError::DerivativeUnavailable(d, MAX_DERIVATIVE));
        }
        let w = self.width();
        let shift = self.center_shift();
        let amp = w.powf(-0.5) * w.powi(-(d as i32));
        let y = x - x.floor();
        let mut out = 0.0;
        for cand in [y - 1.0, y, y + 1.0] {
            let t = (cand - shift) / w;
            if t > -1.0 && t < 1.0 {
                out += amp * self.base.eval(d, t);
            }
        }
        Ok(out)
    }
}
