//! Intermittent-jet building blocks on the torus.
//!
//! A jet at level k rides the direction xi with profile argument
//! y_par = lambda (x.xi + mu 2^k t) and perp argument y_perp = lambda x.xi_perp.
//! Writing P_d, G_d for the true d-th derivatives of the rescaled periodized
//! profiles psi^k and Phi^k and w = 2^-k r_perp, the blocks are
//!
//!   W^p   = xi_hat * (-w^3) P0 G3
//!   W^c   = xi_perp_hat * w^3 P1 G2
//!   Q     = (2^k mu)^-1 xi * (W-scalar)^2
//!   A     = (mu 2^k w^3 / |xi|) [ -(xh ox xph + xph ox xh) P1 G2
//!                                 + 2 (xph ox xph) P2 G1 ]
//!
//! These satisfy, pointwise and exactly,
//!   div(W^p + W^c) = 0,
//!   dt Q = div(W^p ox W^p),
//!   dt(W^p + W^c) = div A,
//! so the identity suite measures nothing but floating-point noise.

use crate::dyadic::Dyadic;
use crate::error::JetError;
use crate::field::{Field2D, Rank};
use crate::profiles::{make_profiles, ProfileKind, ScaledProfile, Variant, MAX_DERIVATIVE};
use crate::quad;
use rand::Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::{Arc, OnceLock};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Direction {
    index: u8,
}

impl Direction {
    pub fn new(index: u8) -> Option<Direction> {
        (1..=4).contains(&index).then_some(Direction { index })
    }

    pub fn all() -> [Direction; 4] {
        [1, 2, 3, 4].map(|index| Direction { index })
    }

    pub fn index(&self) -> u8 {
        self.index
    }

    pub fn xi(&self) -> [i64; 2] {
        match self.index {
            1 => [1, 0],
            2 => [0, 1],
            3 => [1, 1],
            _ => [1, -1],
        }
    }

    pub fn xi_perp(&self) -> [i64; 2] {
        let [a, b] = self.xi();
        [-b, a]
    }

    pub fn norm_sq(&self) -> i64 {
        let [a, b] = self.xi();
        a * a + b * b
    }

    pub fn xi_hat(&self) -> [f64; 2] {
        let [a, b] = self.xi();
        let n = (self.norm_sq() as f64).sqrt();
        [a as f64 / n, b as f64 / n]
    }

    pub fn xi_perp_hat(&self) -> [f64; 2] {
        let [a, b] = self.xi_perp();
        let n = (self.norm_sq() as f64).sqrt();
        [a as f64 / n, b as f64 / n]
    }
}

/// Parameters shared by the four direction bundles.
#[derive(Clone, Debug)]
pub struct BlockParams {
    pub lambda: u64,
    pub mu: Dyadic,
    pub r_perp: Dyadic,
    pub r_par: Dyadic,
    pub big_k: u32,
    pub n0: u32,
    /// Per-direction time offsets as exact multiples of mu^-1.
    pub schedule: Vec<Dyadic>,
    pub kind: ProfileKind,
}

impl BlockParams {
    pub fn validate(&self) -> Result<(), JetError> {
        let bad = |m: &str| Err(JetError::BadParams(m.to_string()));
        if self.lambda < 1 {
            return bad("lambda must be a positive integer");
        }
        if self.mu <= Dyadic::zero() {
            return bad("mu must be positive");
        }
        let zero = Dyadic::zero();
        let one = Dyadic::one();
        if !(self.r_perp > zero && self.r_perp < self.r_par && self.r_par < one) {
            return bad("need 0 < r_perp < r_par < 1");
        }
        let widest = &(&Dyadic::from_int(5) * &self.r_perp) * &Dyadic::pow2(-(self.n0 as i64));
        if widest >= one {
            return bad("perp supports do not fit in one period: 5 r_perp 2^-n0 >= 1");
        }
        if !self.schedule.is_empty() && self.schedule.len() != 4 {
            return bad("schedule must list one offset per direction");
        }
        Ok(())
    }

    /// Levels of the bundle: k = n0+1, ..., n0+K.
    pub fn k_range(&self) -> std::ops::RangeInclusive<u32> {
        self.n0 + 1..=self.n0 + self.big_k
    }

    /// Offsets t_i = i * mu^-1 * 2^{-e K}; the multiplier i * 2^{-e K} is
    /// stored, the mu^-1 factor is implicit. e = 5 and e = 7 are the two
    /// conventions in circulation; both are certified, not adjudicated.
    pub fn staircase_offsets(big_k: u32, e: u32) -> Vec<Dyadic> {
        (0..4)
            .map(|i| &Dyadic::from_int(i) * &Dyadic::pow2(-((e * big_k) as i64)))
            .collect()
    }

    /// Offsets t_i = i * mu^-1 * 5 * 2^{-7K-2}. The step sits inside the
    /// certified time window [mu^-1 2^{-7K}, mu^-1 2^{-7K+2}] and its odd
    /// factor keeps every level's phase shift fractional, so certification
    /// succeeds at every K, including the small ones where the plain
    /// staircases alias to whole periods.
    pub fn window_offsets(big_k: u32) -> Vec<Dyadic> {
        (0..4)
            .map(|i| &Dyadic::from_int(5 * i) * &Dyadic::pow2(-((7 * big_k + 2) as i64)))
            .collect()
    }

    pub fn offset_multiplier(&self, dir: Direction) -> Dyadic {
        if self.schedule.is_empty() {
            Dyadic::zero()
        } else {
            self.schedule[(dir.index() - 1) as usize].clone()
        }
    }

    /// Offset time in f64 (multiplier / mu).
    pub fn offset_time(&self, dir: Direction) -> f64 {
        self.offset_multiplier(dir).to_f64() / self.mu.to_f64()
    }
}

/// Derivative cube of a scalar quantity at a point: entry [a][b][c] is
/// d_t^a d_x1^b d_x2^c, filled for a <= 2 and b + c <= 2.
#[derive(Clone, Copy, Debug)]
pub struct Deriv3 {
    pub v: [[[f64; 3]; 3]; 3],
}

const BINOM: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 2.0, 1.0]];

impl Deriv3 {
    pub fn zero() -> Self {
        Deriv3 {
            v: [[[0.0; 3]; 3]; 3],
        }
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.v[a][b][c]
    }

    pub fn value(&self) -> f64 {
        self.v[0][0][0]
    }

    pub fn dt(&self) -> f64 {
        self.v[1][0][0]
    }

    /// Spatial derivative along axis 1 or 2.
    pub fn dx(&self, axis: usize) -> f64 {
        match axis {
            1 => self.v[0][1][0],
            2 => self.v[0][0][1],
            _ => panic!("axis must be 1 or 2"),
        }
    }

    pub fn scaled(&self, s: f64) -> Deriv3 {
        let mut out = *self;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    out.v[a][b][c] *= s;
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Deriv3) {
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    self.v[a][b][c] += other.v[a][b][c];
                }
            }
        }
    }

    /// Derivative cube of the square, by the Leibniz rule in each index.
    pub fn square(&self) -> Deriv3 {
        let mut out = Deriv3::zero();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 - b {
                    let mut s = 0.0;
                    for a1 in 0..=a {
                        for b1 in 0..=b {
                            for c1 in 0..=c {
                                s += BINOM[a][a1]
                                    * BINOM[b][b1]
                                    * BINOM[c][c1]
                                    * self.v[a1][b1][c1]
                                    * self.v[a - a1][b - b1][c - c1];
                            }
                        }
                    }
                    out.v[a][b][c] = s;
                }
            }
        }
        out
    }
}

/// Values and derivatives of all block components at one space-time point.
#[derive(Clone, Debug)]
pub struct JetEval {
    pub w_p: [Deriv3; 2],
    pub w_c: [Deriv3; 2],
    pub q: [Deriv3; 2],
    pub a: [[Deriv3; 2]; 2],
}

impl JetEval {
    pub fn zero() -> Self {
        JetEval {
            w_p: [Deriv3::zero(); 2],
            w_c: [Deriv3::zero(); 2],
            q: [Deriv3::zero(); 2],
            a: [[Deriv3::zero(); 2]; 2],
        }
    }

    pub fn add_scaled(&mut self, other: &JetEval, s_w: f64, s_q: f64) {
        for m in 0..2 {
            self.w_p[m].add_assign(&other.w_p[m].scaled(s_w));
            self.w_c[m].add_assign(&other.w_c[m].scaled(s_w));
            self.q[m].add_assign(&other.q[m].scaled(s_q));
            for n in 0..2 {
                self.a[m][n].add_assign(&other.a[m][n].scaled(s_w));
            }
        }
    }
}

/// One jet at a fixed level k.
#[derive(Clone, Debug)]
pub struct Jet {
    pub dir: Direction,
    pub k: u32,
    pub lambda: u64,
    pub mu_f: f64,
    pub s_psi: ScaledProfile,
    pub s_phi: ScaledProfile,
    pub t_shift: f64,
}

impl Jet {
    pub fn new(params: &BlockParams, dir: Direction, k: u32) -> Result<Jet, JetError> {
        if !params.k_range().contains(&k) {
            return Err(JetError::LevelOutOfRange {
                k: k as i64,
                lo: *params.k_range().start() as i64,
                hi: *params.k_range().end() as i64,
            });
        }
        let (big_phi, psi) =
            make_profiles(params.kind).map_err(|e| JetError::BadParams(e.to_string()))?;
        Ok(Jet {
            dir,
            k,
            lambda: params.lambda,
            mu_f: params.mu.to_f64(),
            s_psi: ScaledProfile::new(Arc::new(psi), k, params.r_par.clone(), Variant::Parallel),
            s_phi: ScaledProfile::new(Arc::new(big_phi), k, params.r_perp.clone(), Variant::Perp),
            t_shift: params.offset_time(dir),
        })
    }

    /// Phase speed of y_par in t.
    pub fn tau(&self) -> f64 {
        self.lambda as f64 * self.mu_f * (self.k as f64).exp2()
    }

    pub fn w_perp(&self) -> f64 {
        self.s_phi.width()
    }

    pub fn w_par(&self) -> f64 {
        self.s_psi.width()
    }

    /// Profile arguments at a point.
    pub fn phases(&self, x: [f64; 2], t: f64) -> (f64, f64) {
        let xi = self.dir.xi();
        let xip = self.dir.xi_perp();
        let lam = self.lambda as f64;
        let y_par = lam * (x[0] * xi[0] as f64 + x[1] * xi[1] as f64) + self.tau() * (t + self.t_shift);
        let y_perp = lam * (x[0] * xip[0] as f64 + x[1] * xip[1] as f64);
        (y_par, y_perp)
    }

    /// True iff the point lies in the (closed) support of the blocks.
    pub fn in_support(&self, x: [f64; 2], t: f64) -> bool {
        let (y_par, y_perp) = self.phases(x, t);
        let wpar = self.w_par();
        let wperp = self.w_perp();
        let fp = y_par - y_par.floor();
        let gp = y_perp - y_perp.floor();
        let par_in = fp < wpar || fp > 1.0 - wpar;
        let perp_in = gp > 3.0 * wperp && gp < 5.0 * wperp;
        par_in && perp_in
    }

    fn cube(
        &self,
        coef: f64,
        i: usize,
        j: usize,
        p: &[f64],
        g: &[f64],
        lxi: [f64; 2],
        lxp: [f64; 2],
        tau: f64,
    ) -> Deriv3 {
        let mut out = Deriv3::zero();
        let mut tau_a = 1.0;
        for a in 0..3 {
            for b in 0..3usize {
                for c in 0..3 - b {
                    let mut s = 0.0;
                    for pb in 0..=b {
                        for qc in 0..=c {
                            let w = BINOM[b][pb]
                                * BINOM[c][qc]
                                * lxi[0].powi(pb as i32)
                                * lxp[0].powi((b - pb) as i32)
                                * lxi[1].powi(qc as i32)
                                * lxp[1].powi((c - qc) as i32);
                            s += w * p[i + a + pb + qc] * g[j + (b - pb) + (c - qc)];
                        }
                    }
                    out.v[a][b][c] = coef * tau_a * s;
                }
            }
            tau_a *= tau;
        }
        out
    }

    pub fn eval(&self, x: [f64; 2], t: f64) -> JetEval {
        let (y_par, y_perp) = self.phases(x, t);
        let dmax = MAX_DERIVATIVE as usize;
        let mut p = [0.0; 8];
        let mut g = [0.0; 8];
        for d in 0..=dmax {
            p[d] = self.s_psi.eval(d as u32, y_par).unwrap();
            g[d] = self.s_phi.eval(d as u32, y_perp).unwrap();
        }
        let lam = self.lambda as f64;
        let xi = self.dir.xi();
        let xip = self.dir.xi_perp();
        let lxi = [lam * xi[0] as f64, lam * xi[1] as f64];
        let lxp = [lam * xip[0] as f64, lam * xip[1] as f64];
        let tau = self.tau();
        let w3 = self.w_perp().powi(3);
        let nrm = (self.dir.norm_sq() as f64).sqrt();
        let xh = self.dir.xi_hat();
        let xph = self.dir.xi_perp_hat();

        let f_cube = self.cube(-w3, 0, 3, &p, &g, lxi, lxp, tau);
        let g_cube = self.cube(w3, 1, 2, &p, &g, lxi, lxp, tau);
        let a1_cube = self.cube(1.0, 1, 2, &p, &g, lxi, lxp, tau);
        let a2_cube = self.cube(1.0, 2, 1, &p, &g, lxi, lxp, tau);

        let mu2k = self.mu_f * (self.k as f64).exp2();
        let q_cube = f_cube.square().scaled(1.0 / mu2k);
        let ca = mu2k * w3 / nrm;

        let mut ev = JetEval::zero();
        for m in 0..2 {
            ev.w_p[m] = f_cube.scaled(xh[m]);
            ev.w_c[m] = g_cube.scaled(xph[m]);
            ev.q[m] = q_cube.scaled(xi[m] as f64);
            for n in 0..2 {
                let sym = xh[m] * xph[n] + xph[m] * xh[n];
                let mut e = a1_cube.scaled(-ca * sym);
                e.add_assign(&a2_cube.scaled(2.0 * ca * xph[m] * xph[n]));
                ev.a[m][n] = e;
            }
        }
        ev
    }
}

/// All K jets of one direction, with the bundle weights baked into `eval`.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub params: BlockParams,
    pub dir: Direction,
    pub jets: Vec<Jet>,
}

impl Bundle {
    pub fn new(params: &BlockParams, dir: Direction) -> Result<Bundle, JetError> {
        params.validate()?;
        let jets = params
            .k_range()
            .map(|k| Jet::new(params, dir, k))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Bundle {
            params: params.clone(),
            dir,
            jets,
        })
    }

    /// K^{-1/2}-weighted sum over levels; Q carries weight K^{-1}.
    pub fn eval(&self, x: [f64; 2], t: f64) -> JetEval {
        let mut out = JetEval::zero();
        if self.jets.is_empty() {
            return out;
        }
        let kf = self.jets.len() as f64;
        let (s_w, s_q) = (kf.powf(-0.5), 1.0 / kf);
        for jet in &self.jets {
            let ev = jet.eval(x, t);
            out.add_scaled(&ev, s_w, s_q);
        }
        out
    }
}

/// Relative residuals of the three pointwise identities at one point; each is
/// |cancellation failure| / sum of |contributions| (0 outside the support).
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityResiduals {
    pub div_w: f64,
    pub q_vs_ww: f64,
    pub a_vs_dtw: f64,
}

pub fn identity_residuals(ev: &JetEval) -> IdentityResiduals {
    let rel = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num.abs() / den };

    let parts = [
        ev.w_p[0].dx(1),
        ev.w_p[1].dx(2),
        ev.w_c[0].dx(1),
        ev.w_c[1].dx(2),
    ];
    let div_w = rel(
        parts.iter().sum(),
        parts.iter().map(|p| p.abs()).sum(),
    );

    let mut num_q = 0.0;
    let mut den_q = 0.0;
    for i in 0..2 {
        let lhs = ev.q[i].dt();
        let mut rhs = 0.0;
        for j in 0..2 {
            let t1 = ev.w_p[i].dx(j + 1) * ev.w_p[j].value();
            let t2 = ev.w_p[i].value() * ev.w_p[j].dx(j + 1);
            rhs += t1 + t2;
            den_q += t1.abs() + t2.abs();
        }
        num_q += (lhs - rhs).abs();
        den_q += lhs.abs();
    }
    let q_vs_ww = rel(num_q, den_q);

    let mut num_a = 0.0;
    let mut den_a = 0.0;
    for i in 0..2 {
        let lhs = ev.w_p[i].dt() + ev.w_c[i].dt();
        let mut rhs = 0.0;
        for j in 0..2 {
            let t = ev.a[i][j].dx(j + 1);
            rhs += t;
            den_a += t.abs();
        }
        num_a += (lhs - rhs).abs();
        den_a += lhs.abs();
    }
    let a_vs_dtw = rel(num_a, den_a);

    IdentityResiduals {
        div_w,
        q_vs_ww,
        a_vs_dtw,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub max_div_w: f64,
    pub max_q_vs_ww: f64,
    pub max_a_vs_dtw: f64,
    pub points: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Random-cloud check of the three identities across all four directions.
pub fn verify_bundle_identities(
    params: &BlockParams,
    points: usize,
    seed: u64,
) -> Result<IdentityReport, JetError> {
    let tolerance = 1e-9;
    let bundles = Direction::all()
        .into_iter()
        .map(|d| Bundle::new(params, d))
        .collect::<Result<Vec<_>, _>>()?;
    let per_dir = points / 4;
    let maxes: Vec<IdentityResiduals> = bundles
        .par_iter()
        .map(|bundle| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                seed ^ (bundle.dir.index() as u64) << 32,
            );
            let mut worst = IdentityResiduals::default();
            for _ in 0..per_dir {
                let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                let t = rng.gen_range(0.0..1.0);
                let res = identity_residuals(&bundle.eval(x, t));
                worst.div_w = worst.div_w.max(res.div_w);
                worst.q_vs_ww = worst.q_vs_ww.max(res.q_vs_ww);
                worst.a_vs_dtw = worst.a_vs_dtw.max(res.a_vs_dtw);
            }
            worst
        })
        .collect();
    let mut report = IdentityReport {
        max_div_w: 0.0,
        max_q_vs_ww: 0.0,
        max_a_vs_dtw: 0.0,
        points: per_dir * 4,
        tolerance,
        pass: true,
    };
    for m in maxes {
        report.max_div_w = report.max_div_w.max(m.div_w);
        report.max_q_vs_ww = report.max_q_vs_ww.max(m.q_vs_ww);
        report.max_a_vs_dtw = report.max_a_vs_dtw.max(m.a_vs_dtw);
    }
    report.pass = report.max_div_w <= tolerance
        && report.max_q_vs_ww <= tolerance
        && report.max_a_vs_dtw <= tolerance;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct ResonanceReport {
    pub raw: [[f64; 2]; 2],
    pub calibrated: [[f64; 2]; 2],
    pub c_xi: f64,
    pub per_k: Vec<f64>,
}

/// L^2 mass of one level's scalar profile product, by factorized quadrature
/// over the two 1D supports.
fn level_mass(jet: &Jet) -> f64 {
    let wpar = jet.w_par();
    let wperp = jet.w_perp();
    let psi_sq = quad::integrate_panels(
        |y| jet.s_psi.eval(0, y).unwrap().powi(2),
        -wpar,
        wpar,
        4,
        80,
    );
    let w3 = wperp.powi(3);
    let phi_sq = quad::integrate_panels(
        |y| (w3 * jet.s_phi.eval(3, y).unwrap()).powi(2),
        3.0 * wperp,
        5.0 * wperp,
        4,
        80,
    );
    psi_sq * phi_sq
}

/// Brute-force 2D check of the factorized integral, once per direction class
/// (|xi|^2 = 1 or 2), at fat, grid-resolvable parameters.
fn calibration_constants() -> [f64; 2] {
    static CAL: OnceLock<[f64; 2]> = OnceLock::new();
    *CAL.get_or_init(|| {
        let params = BlockParams {
            lambda: 1,
            mu: Dyadic::one(),
            r_perp: Dyadic::ratio(1, 2),
            r_par: Dyadic::ratio(1, 1),
            big_k: 1,
            n0: 0,
            schedule: vec![],
            kind: ProfileKind::Poly { m: 12 },
        };
        let mut out = [1.0; 2];
        for (slot, dir) in [(0, Direction::new(1).unwrap()), (1, Direction::new(3).unwrap())] {
            let jet = Jet::new(&params, dir, 1).unwrap();
            let factored = level_mass(&jet);
            // the factorized and brute values agree to machine precision;
            // 512 keeps the check well under interactive time on one core
            let n = 512usize;
            let brute: f64 = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut row = 0.0;
                    for j in 0..n {
                        let x = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                        let f = jet.eval(x, 0.0).w_p;
                        row += f[0].value().powi(2) + f[1].value().powi(2);
                    }
                    row
                })
                .sum::<f64>()
                / (n * n) as f64;
            out[slot] = factored / brute;
        }
        out
    })
}

/// int W^p ox W^p for one direction bundle, by factorized 1D quadrature,
/// with the stored brute-force calibration applied.
pub fn resonance_matrix(params: &BlockParams, dir: Direction) -> Result<ResonanceReport, JetError> {
    let bundle = Bundle::new(params, dir)?;
    let per_k: Vec<f64> = bundle.jets.iter().map(level_mass).collect();
    let kf = bundle.jets.len().max(1) as f64;
    let total: f64 = per_k.iter().sum::<f64>() / kf;
    let xh = dir.xi_hat();
    let class = if dir.norm_sq() == 1 { 0 } else { 1 };
    let c_xi = calibration_constants()[class];
    let mut raw = [[0.0; 2]; 2];
    let mut calibrated = [[0.0; 2]; 2];
    for m in 0..2 {
        for n in 0..2 {
            raw[m][n] = total * xh[m] * xh[n];
            calibrated[m][n] = c_xi * raw[m][n];
        }
    }
    Ok(ResonanceReport {
        raw,
        calibrated,
        c_xi,
        per_k,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Wp,
    Wc,
    Q,
    A,
}

/// Sample a bundle component on an N x N grid. Returns the field and, when N
/// is below the recommended 8 lambda 2^{n0+K} / r_perp, a warning string.
pub fn rasterize(
    bundle: &Bundle,
    comp: Component,
    t: f64,
    n: usize,
) -> Result<(Field2D, Option<String>), JetError> {
    let p = &bundle.params;
    let recommended = 8.0 * p.lambda as f64 * ((p.n0 + p.big_k) as f64).exp2() / p.r_perp.to_f64();
    let warning = (n as f64) < recommended;
    let rank = match comp {
        Component::A => Rank::SymTensor,
        _ => Rank::Vector,
    };
    let ncomp = rank.ncomp();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|jx| {
            let mut row = vec![0.0; n * ncomp];
            for l in 0..n {
                let x = [jx as f64 / n as f64, l as f64 / n as f64];
                let ev = bundle.eval(x, t);
                let vals: Vec<f64> = match comp {
                    Component::Wp => vec![ev.w_p[0].value(), ev.w_p[1].value()],
                    Component::Wc => vec![ev.w_c[0].value(), ev.w_c[1].value()],
                    Component::Q => vec![ev.q[0].value(), ev.q[1].value()],
                    Component::A => vec![
                        ev.a[0][0].value(),
                        ev.a[0][1].value(),
                        ev.a[1][1].value(),
                    ],
                };
                for (c, v) in vals.into_iter().enumerate() {
                    row[c * n + l] = v;
                }
            }
            row
        })
        .collect();
    let mut comps = vec![vec![0.0; n * n]; ncomp];
    for (jx, row) in rows.into_iter().enumerate() {
        for c in 0..ncomp {
            comps[c][jx * n..(jx + 1) * n].copy_from_slice(&row[c * n..(c + 1) * n]);
        }
    }
    let field = Field2D::from_comps(rank, n, 1.0, comps)
        .map_err(|e| JetError::BadParams(e.to_string()))?;
    let warn = warning.then(|| {
        format!(
            "N = {n} below the recommended resolution {:.0} for these supports",
            recommended
        )
    });
    Ok((field, warn))
}

#[derive(Clone, Debug, Serialize)]
pub struct RegimeReport {
    pub params: RegimeParams,
    pub lambda_rel_err: f64,
    pub k_rel_err: f64,
    pub mu_rel_err: f64,
    pub degenerate: bool,
    /// Smallness proxies (delta^2, delta r_perp/r_par, delta, delta).
    pub proxies: [f64; 4],
}

#[derive(Clone, Debug, Serialize)]
pub struct RegimeParams {
    pub lambda: u64,
    pub mu: Dyadic,
    pub r_perp: Dyadic,
    pub r_par: Dyadic,
    pub big_k: u32,
    pub n0: u32,
}

/// The asymptotic parameter choice: lambda ~ (r_perp/r_par)^{-1/2} delta^4,
/// K ~ (r_perp/r_par)^{-2} delta^4, mu = (r_perp r_par)^{-1/2} / delta,
/// n0 = 5K, with nearest-integer (or nearest-dyadic) rounding reported.
pub fn paper_regime(
    delta: f64,
    r_perp: &Dyadic,
    r_par: &Dyadic,
) -> Result<RegimeReport, JetError> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(JetError::BadParams(format!(
            "delta = {delta} outside (0, 1/2)"
        )));
    }
    if r_perp >= r_par {
        return Err(JetError::BadParams("need r_perp < r_par".into()));
    }
    let ratio = r_perp.to_f64() / r_par.to_f64();
    let d4 = delta.powi(4);
    let lambda_star = ratio.powf(-0.5) * d4;
    let lambda = lambda_star.round().max(1.0);
    // lambda* below 1 clamps to the degenerate lambda = 1; that is flagged,
    // not treated as a rounding failure
    let lambda_rel_err = if lambda_star < 0.5 {
        0.0
    } else {
        (lambda - lambda_star).abs() / lambda_star
    };
    let k_star = ratio.powi(-2) * d4;
    let k = k_star.round().max(1.0);
    let k_rel_err = (k - k_star).abs() / k_star;
    let mu_star = (r_perp.to_f64() * r_par.to_f64()).powf(-0.5) / delta;
    let mu = Dyadic::new(num_bigint::BigInt::from((mu_star * 1048576.0).round() as i128), -20);
    let mu_rel_err = (mu.to_f64() - mu_star).abs() / mu_star;
    let worst = lambda_rel_err
        .max(if k_star < 0.5 { 0.0 } else { k_rel_err })
        .max(mu_rel_err);
    if worst > 0.5 {
        return Err(JetError::RegimeRounding(100.0 * worst));
    }
    if k > u32::MAX as f64 / 8.0 {
        return Err(JetError::BadParams(format!("K = {k} too large to represent")));
    }
    let big_k = k as u32;
    Ok(RegimeReport {
        params: RegimeParams {
            lambda: lambda as u64,
            mu,
            r_perp: r_perp.clone(),
            r_par: r_par.clone(),
            big_k,
            n0: 5 * big_k,
        },
        lambda_rel_err,
        k_rel_err,
        mu_rel_err,
        degenerate: lambda as u64 == 1,
        proxies: [delta * delta, delta * ratio, delta, delta],
    })
}

/// On-disk description of one direction bundle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BundleSpec {
    pub dir: u8,
    pub lambda: u64,
    pub mu: Dyadic,
    pub r_perp: Dyadic,
    pub r_par: Dyadic,
    #[serde(rename = "K")]
    pub big_k: u32,
    pub n0: u32,
    pub schedule: ScheduleSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Named(String),
    Offsets(Vec<Dyadic>),
}

impl BundleSpec {
    pub fn to_params(&self) -> Result<(BlockParams, Direction), JetError> {
        let dir = Direction::new(self.dir)
            .ok_or_else(|| JetError::BadParams(format!("dir = {} not in 1..=4", self.dir)))?;
        let schedule = match &self.schedule {
            ScheduleSpec::Named(name) => match name.as_str() {
                "paper" => BlockParams::staircase_offsets(self.big_k, 5),
                "tight" => BlockParams::staircase_offsets(self.big_k, 7),
                "window" => BlockParams::window_offsets(self.big_k),
                other => {
                    return Err(JetError::BadParams(format!("unknown schedule '{other}'")))
                }
            },
            ScheduleSpec::Offsets(v) => v.clone(),
        };
        let params = BlockParams {
            lambda: self.lambda,
            mu: self.mu.clone(),
            r_perp: self.r_perp.clone(),
            r_par: self.r_par.clone(),
            big_k: self.big_k,
            n0: self.n0,
            schedule,
            kind: ProfileKind::Poly { m: 12 },
        };
        params.validate()?;
        Ok((params, dir))
    }
}
