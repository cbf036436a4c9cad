//! Lorentz quasi-norms L^{r,q} and the probes built on them.
//!
//! Everything here works on step functions given as (value, cell measure)
//! pairs; the distribution function of a step function is itself a step
//! function, so the quasi-norm integrals are evaluated exactly, never by
//! histogram binning.

use crate::error::LorentzError;
use crate::jets::{BlockParams, Bundle, Direction};
use crate::regression::{self, LinearFit};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Grid,
    SupportAware,
    ClosedForm,
}

#[derive(Clone, Debug, Serialize)]
pub struct LorentzReport {
    pub r: f64,
    pub q: f64,
    pub value: f64,
    pub method: Method,
    pub samples: usize,
}

/// Distribution function of a step function: levels ascending, d(s_j) the
/// measure of {|f| >= s_j}.
#[derive(Clone, Debug)]
pub struct DistFunction {
    pub levels: Vec<f64>,
    pub measures: Vec<f64>,
}

impl DistFunction {
    /// Exact construction by a sorted-value sweep over the cells.
    pub fn from_cells(cells: &[(f64, f64)]) -> DistFunction {
        let mut vals: Vec<(f64, f64)> = cells
            .iter()
            .filter(|(v, m)| v.abs() > 0.0 && *m > 0.0)
            .map(|(v, m)| (v.abs(), *m))
            .collect();
        vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut levels = Vec::new();
        let mut masses = Vec::new();
        for (v, m) in vals {
            if levels.last().map_or(true, |&l| v > l) {
                levels.push(v);
                masses.push(m);
            } else {
                *masses.last_mut().unwrap() += m;
            }
        }
        // d(s_j) = measure at or above level j: suffix sums
        let mut measures = vec![0.0; masses.len()];
        let mut acc = 0.0;
        for j in (0..masses.len()).rev() {
            acc += masses[j];
            measures[j] = acc;
        }
        DistFunction { levels, measures }
    }
}

/// L^{r,q} quasi-norm of a step function, exactly from its distribution
/// function. q = infinity gives sup_s s d(s)^{1/r}; otherwise
/// r^{1/q} (int_0^inf (s d(s)^{1/r})^q ds/s)^{1/q} piecewise.
pub fn quasinorm_value(cells: &[(f64, f64)], r: f64, q: f64) -> Result<f64, LorentzError> {
    if !(r >= 1.0) {
        return Err(LorentzError::BadPrimary(r));
    }
    if !(q >= 1.0) {
        return Err(LorentzError::BadSecondary(q));
    }
    let dist = DistFunction::from_cells(cells);
    if dist.levels.is_empty() {
        return Ok(0.0);
    }
    if q.is_infinite() {
        let mut best = 0.0f64;
        for (s, d) in dist.levels.iter().zip(&dist.measures) {
            best = best.max(s * d.powf(1.0 / r));
        }
        return Ok(best);
    }
    // d(s) = measures[j] for s in (levels[j-1], levels[j]]
    let mut acc = 0.0;
    let mut prev_pow = 0.0;
    for (s, d) in dist.levels.iter().zip(&dist.measures) {
        let sp = s.powf(q);
        acc += d.powf(q / r) * (sp - prev_pow) / q;
        prev_pow = sp;
    }
    Ok(r.powf(1.0 / q) * acc.powf(1.0 / q))
}

pub fn lorentz_quasinorm(
    cells: &[(f64, f64)],
    r: f64,
    q: f64,
    method: Method,
) -> Result<LorentzReport, LorentzError> {
    let value = quasinorm_value(cells, r, q)?;
    Ok(LorentzReport {
        r,
        q,
        value,
        method,
        samples: cells.len(),
    })
}

/// Frobenius magnitudes of the jet gradients DW (principal plus corrector)
/// and DQ, sampled per level on the rotated-frame support rectangle with the
/// exact pushforward cell measure, plus the bundle weights.
pub fn gradient_cells_support_aware(
    bundle: &Bundle,
    t: f64,
    n: usize,
) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let kf = bundle.jets.len().max(1) as f64;
    let (s_w, s_q) = (kf.powf(-0.5), 1.0 / kf);
    let per_jet: Vec<(Vec<(f64, f64)>, Vec<(f64, f64)>)> = bundle
        .jets
        .par_iter()
        .map(|jet| {
            let wpar = jet.w_par();
            let wperp = jet.w_perp();
            let lam = jet.lambda as f64;
            let xi = jet.dir.xi();
            let xip = jet.dir.xi_perp();
            let nsq = jet.dir.norm_sq() as f64;
            let tau = jet.tau();
            let cell = (2.0 * wpar) * (2.0 * wperp) / (n * n) as f64;
            let mut dw = Vec::with_capacity(n * n);
            let mut dq = Vec::with_capacity(n * n);
            for i in 0..n {
                let y_par = -wpar + (i as f64 + 0.5) / n as f64 * 2.0 * wpar;
                // undo the moving phase so the sample lands on the support
                let c_par = (y_par - tau * (t + jet.t_shift)) / (lam * nsq);
                for j in 0..n {
                    let y_perp = 3.0 * wperp + (j as f64 + 0.5) / n as f64 * 2.0 * wperp;
                    let c_perp = y_perp / (lam * nsq);
                    let x = [
                        c_par * xi[0] as f64 + c_perp * xip[0] as f64,
                        c_par * xi[1] as f64 + c_perp * xip[1] as f64,
                    ];
                    let ev = jet.eval(x, t);
                    let mut gw = 0.0;
                    let mut gq = 0.0;
                    for m in 0..2 {
                        for ax in 1..=2 {
                            gw += (ev.w_p[m].dx(ax) + ev.w_c[m].dx(ax)).powi(2);
                            gq += ev.q[m].dx(ax).powi(2);
                        }
                    }
                    dw.push((s_w * gw.sqrt(), cell));
                    dq.push((s_q * gq.sqrt(), cell));
                }
            }
            (dw, dq)
        })
        .collect();
    let mut dw = Vec::new();
    let mut dq = Vec::new();
    for (a, b) in per_jet {
        dw.extend(a);
        dq.extend(b);
    }
    (dw, dq)
}

/// Uniform-grid gradient magnitudes: the oracle for the support-aware path
/// when the grid resolves every level.
pub fn gradient_cells_grid(
    bundle: &Bundle,
    t: f64,
    n: usize,
) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let cell = 1.0 / (n * n) as f64;
    let rows: Vec<(Vec<(f64, f64)>, Vec<(f64, f64)>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut dw = Vec::with_capacity(n);
            let mut dq = Vec::with_capacity(n);
            for j in 0..n {
                let x = [i as f64 / n as f64, j as f64 / n as f64];
                let ev = bundle.eval(x, t);
                let mut gw = 0.0;
                let mut gq = 0.0;
                for m in 0..2 {
                    for ax in 1..=2 {
                        gw += (ev.w_p[m].dx(ax) + ev.w_c[m].dx(ax)).powi(2);
                        gq += ev.q[m].dx(ax).powi(2);
                    }
                }
                dw.push((gw.sqrt(), cell));
                dq.push((gq.sqrt(), cell));
            }
            (dw, dq)
        })
        .collect();
    let mut dw = Vec::new();
    let mut dq = Vec::new();
    for (a, b) in rows {
        dw.extend(a);
        dq.extend(b);
    }
    (dw, dq)
}

#[derive(Clone, Debug, Serialize)]
pub struct GradientNorms {
    pub dw: LorentzReport,
    pub dq: LorentzReport,
}

/// L^{r,q} of the jet gradients by support-aware sampling, starting at 64^2
/// per rectangle and doubling until the value moves by less than 1%.
pub fn jet_gradient_lorentz(
    params: &BlockParams,
    dir: Direction,
    t: f64,
    r: f64,
    q: f64,
) -> Result<GradientNorms, LorentzError> {
    let bundle = Bundle::new(params, dir)?;
    let mut n = 64usize;
    let (mut dw_cells, mut dq_cells) = gradient_cells_support_aware(&bundle, t, n);
    let mut dw_val = quasinorm_value(&dw_cells, r, q)?;
    let mut dq_val = quasinorm_value(&dq_cells, r, q)?;
    while n < 512 {
        let n2 = n * 2;
        let (dw2, dq2) = gradient_cells_support_aware(&bundle, t, n2);
        let dw_v2 = quasinorm_value(&dw2, r, q)?;
        let dq_v2 = quasinorm_value(&dq2, r, q)?;
        let settled = (dw_v2 - dw_val).abs() <= 0.01 * dw_v2.abs()
            && (dq_v2 - dq_val).abs() <= 0.01 * dq_v2.abs();
        n = n2;
        dw_cells = dw2;
        dq_cells = dq2;
        dw_val = dw_v2;
        dq_val = dq_v2;
        if settled {
            break;
        }
    }
    Ok(GradientNorms {
        dw: LorentzReport {
            r,
            q,
            value: dw_val,
            method: Method::SupportAware,
            samples: dw_cells.len(),
        },
        dq: LorentzReport {
            r,
            q,
            value: dq_val,
            method: Method::SupportAware,
            samples: dq_cells.len(),
        },
    })
}

/// Weak-L1 of DW and DQ (r = 1, q = infinity).
pub fn weak_l1_jet_gradient(
    params: &BlockParams,
    dir: Direction,
    t: f64,
) -> Result<GradientNorms, LorentzError> {
    jet_gradient_lorentz(params, dir, t, 1.0, f64::INFINITY)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub big_k: u32,
    pub dw: f64,
    pub dq: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub q: f64,
    pub rows: Vec<SweepRow>,
    pub dw_slope: f64,
    pub dq_slope: f64,
}

/// K-sweep of the L^{1,q} jet-gradient norms at fixed geometry; the fitted
/// slopes should track -(1/2 - 1/q) for DW and -(1 - 1/q) for DQ
/// (q = infinity: -1/2 and -1).
pub fn lorentz_l1q_sweep(
    base: &BlockParams,
    dir: Direction,
    t: f64,
    qs: &[f64],
    ks: &[u32],
) -> Result<Vec<SweepReport>, LorentzError> {
    let mut out = Vec::new();
    for &q in qs {
        let mut rows = Vec::new();
        for &k in ks {
            let mut params = base.clone();
            params.big_k = k;
            params.schedule = vec![];
            let norms = jet_gradient_lorentz(&params, dir, t, 1.0, q)?;
            rows.push(SweepRow {
                big_k: k,
                dw: norms.dw.value,
                dq: norms.dq.value,
            });
        }
        let (dw_slope, dq_slope) = if rows.len() >= 2 {
            let xs: Vec<f64> = rows.iter().map(|r| r.big_k as f64).collect();
            let dw: Vec<f64> = rows.iter().map(|r| r.dw).collect();
            let dq: Vec<f64> = rows.iter().map(|r| r.dq).collect();
            (
                regression::log2_fit(&xs, &dw).slope,
                regression::log2_fit(&xs, &dq).slope,
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        out.push(SweepReport {
            q,
            rows,
            dw_slope,
            dq_slope,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderRow {
    pub lambda: u64,
    /// ||f g(lambda .)||_p - ||f||_p ||g||_p
    pub norm_residual: f64,
    /// |int f g(lambda .)|
    pub integral: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderReport {
    pub p: f64,
    pub rows: Vec<HolderRow>,
    pub residual_slope: f64,
    pub integral_slope: f64,
}

fn grid_lp<F: Fn([f64; 2]) -> f64 + Sync>(f: &F, p: f64, n: usize) -> f64 {
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = 0.0;
            for j in 0..n {
                let x = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                row += f(x).abs().powf(p);
            }
            row
        })
        .sum();
    (total / (n * n) as f64).powf(1.0 / p)
}

fn grid_mean<F: Fn([f64; 2]) -> f64 + Sync>(f: &F, n: usize) -> f64 {
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = 0.0;
            for j in 0..n {
                let x = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                row += f(x);
            }
            row
        })
        .sum();
    total / (n * n) as f64
}

/// Measures both sides of the improved Hoelder inequality and the mean-zero
/// oscillation integral across a lambda sweep, with fitted log-log slopes.
/// Rows whose residual sits at rounding-noise level are dropped from the fit.
pub fn improved_holder_probe<F, G>(
    f: &F,
    g: &G,
    lambdas: &[u64],
    p: f64,
    n: usize,
) -> Result<HolderReport, LorentzError>
where
    F: Fn([f64; 2]) -> f64 + Sync,
    G: Fn([f64; 2]) -> f64 + Sync,
{
    if lambdas.iter().any(|&l| l == 0) {
        return Err(LorentzError::BadFrequency);
    }
    if !(p >= 1.0) {
        return Err(LorentzError::BadPrimary(p));
    }
    let f_norm = grid_lp(f, p, n);
    let g_norm = grid_lp(g, p, n);
    let mut rows = Vec::new();
    for &lam in lambdas {
        let lf = lam as f64;
        let scaled = |x: [f64; 2]| {
            let y = [lf * x[0] - (lf * x[0]).floor(), lf * x[1] - (lf * x[1]).floor()];
            f(x) * g(y)
        };
        let prod_norm = grid_lp(&scaled, p, n);
        let integral = grid_mean(&scaled, n).abs();
        rows.push(HolderRow {
            lambda: lam,
            norm_residual: prod_norm - f_norm * g_norm,
            integral,
        });
    }
    let floor = 1e-12 * f_norm * g_norm.max(1.0);
    let fit = |take: &dyn Fn(&HolderRow) -> f64| -> f64 {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r.lambda as f64, take(r).abs()))
            .filter(|&(_, v)| v > floor)
            .collect();
        if pts.len() < 2 {
            return f64::NAN;
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let LinearFit { slope, .. } = regression::log2_fit(&xs, &ys);
        slope
    };
    let residual_slope = fit(&|r| r.norm_residual);
    let integral_slope = fit(&|r| r.integral);
    Ok(HolderReport {
        p,
        rows,
        residual_slope,
        integral_slope,
    })
}
