//! C ABI over the core construction toolkit. Handles are opaque pointers;
//! every entry point returns an error code and writes results through out
//! pointers. The header is generated at build time by cbindgen.

use euler_forge::dyadic::Dyadic;
use euler_forge::euler_reynolds::{budget, gamma_coeffs};
use euler_forge::jets::{
    resonance_matrix, verify_bundle_identities, BlockParams, Direction,
};
use euler_forge::profiles::ProfileKind;
use euler_forge::scheduler::{certify_disjoint, randomized_collision_search, schedule_strips};
use std::os::raw::c_char;

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EfStatus {
    EfOk = 0,
    /// a pointer argument was null
    EfNullArgument = 1,
    /// parameters violate a documented constraint
    EfBadParams = 2,
    /// an internal computation failed
    EfInternal = 3,
}

/// Opaque block-parameter handle; create with `ef_params_new`, release with
/// `ef_params_free`.
pub struct EfParams {
    inner: BlockParams,
}

/// Residual maxima from the pointwise identity suite.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct EfIdentityReport {
    pub max_div_w: f64,
    pub max_q_vs_ww: f64,
    pub max_a_vs_dtw: f64,
    pub points: u64,
    /// 1 when every residual is at or below the suite tolerance
    pub pass: i32,
}

/// Offset schedule preset for the block levels.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EfSchedule {
    /// staircase offsets with a coarse step; aliases whole periods
    EfScheduleCoarse = 0,
    /// staircase offsets with a tighter step
    EfScheduleTight = 1,
    /// odd-multiple window offsets; certified disjoint for small level counts
    EfScheduleWindow = 2,
}

fn dyadic_from(num: i64, log2_den: u32) -> Dyadic {
    Dyadic::ratio(num, log2_den)
}

/// Build a block-parameter handle. Dyadic arguments are given as
/// num / 2^log2_den. Returns null when the parameters are rejected.
#[no_mangle]
pub extern "C" fn ef_params_new(
    lambda: u64,
    mu_num: i64,
    mu_log2_den: u32,
    r_perp_num: i64,
    r_perp_log2_den: u32,
    r_par_num: i64,
    r_par_log2_den: u32,
    levels: u32,
    n0: u32,
    schedule: EfSchedule,
) -> *mut EfParams {
    let sched = match schedule {
        EfSchedule::EfScheduleCoarse => BlockParams::staircase_offsets(levels, 5),
        EfSchedule::EfScheduleTight => BlockParams::staircase_offsets(levels, 7),
        EfSchedule::EfScheduleWindow => BlockParams::window_offsets(levels),
    };
    let params = BlockParams {
        lambda,
        mu: dyadic_from(mu_num, mu_log2_den),
        r_perp: dyadic_from(r_perp_num, r_perp_log2_den),
        r_par: dyadic_from(r_par_num, r_par_log2_den),
        big_k: levels,
        n0,
        schedule: sched,
        kind: ProfileKind::Poly { m: 12 },
    };
    if params.validate().is_err() {
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(EfParams { inner: params }))
}

/// Release a handle created by `ef_params_new`. Null is a no-op.
#[no_mangle]
pub extern "C" fn ef_params_free(params: *mut EfParams) {
    if !params.is_null() {
        drop(unsafe { Box::from_raw(params) });
    }
}

/// Run the pointwise identity suite over random sample points.
#[no_mangle]
pub extern "C" fn ef_verify_identities(
    params: *const EfParams,
    points: u64,
    seed: u64,
    out: *mut EfIdentityReport,
) -> EfStatus {
    if params.is_null() || out.is_null() {
        return EfStatus::EfNullArgument;
    }
    let p = unsafe { &(*params).inner };
    match verify_bundle_identities(p, points as usize, seed) {
        Ok(rep) => {
            unsafe {
                *out = EfIdentityReport {
                    max_div_w: rep.max_div_w,
                    max_q_vs_ww: rep.max_q_vs_ww,
                    max_a_vs_dtw: rep.max_a_vs_dtw,
                    points: rep.points as u64,
                    pass: rep.pass as i32,
                };
            }
            EfStatus::EfOk
        }
        Err(_) => EfStatus::EfInternal,
    }
}

/// Calibrated second-moment matrix of the principal wave for one direction
/// (1..=4). Writes row-major [m11, m12, m21, m22].
#[no_mangle]
pub extern "C" fn ef_resonance(
    params: *const EfParams,
    direction: u8,
    out: *mut f64,
) -> EfStatus {
    if params.is_null() || out.is_null() {
        return EfStatus::EfNullArgument;
    }
    let Some(dir) = Direction::new(direction) else {
        return EfStatus::EfBadParams;
    };
    let p = unsafe { &(*params).inner };
    match resonance_matrix(p, dir) {
        Ok(rep) => {
            let o = unsafe { std::slice::from_raw_parts_mut(out, 4) };
            o[0] = rep.calibrated[0][0];
            o[1] = rep.calibrated[0][1];
            o[2] = rep.calibrated[1][0];
            o[3] = rep.calibrated[1][1];
            EfStatus::EfOk
        }
        Err(_) => EfStatus::EfInternal,
    }
}

/// Certify the level schedule exactly and confirm with a randomized search.
/// Writes 1 to `out_disjoint` when no two moving supports ever overlap and
/// the collision count to `out_hits`.
#[no_mangle]
pub extern "C" fn ef_schedule_check(
    params: *const EfParams,
    trials: u64,
    seed: u64,
    out_disjoint: *mut i32,
    out_hits: *mut u64,
) -> EfStatus {
    if params.is_null() || out_disjoint.is_null() || out_hits.is_null() {
        return EfStatus::EfNullArgument;
    }
    let p = unsafe { &(*params).inner };
    let strips = schedule_strips(p);
    match certify_disjoint(&strips) {
        Ok(cert) => {
            let hits = randomized_collision_search(&strips, trials, seed);
            unsafe {
                *out_disjoint = cert.is_disjoint() as i32;
                *out_hits = hits;
            }
            EfStatus::EfOk
        }
        Err(_) => EfStatus::EfInternal,
    }
}

/// Square-root coefficients of the four-direction rank-one decomposition of
/// a symmetric matrix (r11, r12, r22) near the identity; writes four values.
#[no_mangle]
pub extern "C" fn ef_decomposition_coeffs(
    r11: f64,
    r12: f64,
    r22: f64,
    out: *mut f64,
) -> EfStatus {
    if out.is_null() {
        return EfStatus::EfNullArgument;
    }
    match gamma_coeffs([r11, r12, r22]) {
        Ok(g) => {
            let o = unsafe { std::slice::from_raw_parts_mut(out, 4) };
            o.copy_from_slice(&g);
            EfStatus::EfOk
        }
        Err(_) => EfStatus::EfBadParams,
    }
}

/// Exact limit of the geometric error-budget series.
#[no_mangle]
pub extern "C" fn ef_budget_limit(lambda: u64, m: u64, c: u64, out: *mut f64) -> EfStatus {
    if out.is_null() {
        return EfStatus::EfNullArgument;
    }
    if lambda == 0 {
        return EfStatus::EfBadParams;
    }
    let table = budget(lambda, m, c, 0);
    unsafe {
        *out = table.limit_value;
    }
    EfStatus::EfOk
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ef_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window_params() -> *mut EfParams {
        ef_params_new(8, 16, 0, 1, 6, 1, 3, 2, 2, EfSchedule::EfScheduleWindow)
    }

    #[test]
    fn params_lifecycle_and_validation() {
        let p = window_params();
        assert!(!p.is_null());
        ef_params_free(p);
        // r_perp >= r_par rejected
        let bad = ef_params_new(8, 16, 0, 1, 1, 1, 3, 2, 2, EfSchedule::EfScheduleWindow);
        assert!(bad.is_null());
        ef_params_free(std::ptr::null_mut());
    }

    #[test]
    fn identities_through_the_c_surface() {
        let p = window_params();
        let mut rep = EfIdentityReport {
            max_div_w: f64::NAN,
            max_q_vs_ww: f64::NAN,
            max_a_vs_dtw: f64::NAN,
            points: 0,
            pass: 0,
        };
        let st = ef_verify_identities(p, 2000, 3, &mut rep);
        assert_eq!(st, EfStatus::EfOk);
        assert_eq!(rep.pass, 1);
        assert!(rep.max_div_w <= 1e-9);
        assert_eq!(
            ef_verify_identities(std::ptr::null(), 10, 0, &mut rep),
            EfStatus::EfNullArgument
        );
        ef_params_free(p);
    }

    #[test]
    fn resonance_matches_direction_matrix() {
        let p = window_params();
        let mut m = [0.0f64; 4];
        assert_eq!(ef_resonance(p, 3, m.as_mut_ptr()), EfStatus::EfOk);
        // direction 3 is the normalized diagonal: every entry 1/2
        for v in m {
            assert!((v - 0.5).abs() <= 1e-8, "{m:?}");
        }
        assert_eq!(ef_resonance(p, 0, m.as_mut_ptr()), EfStatus::EfBadParams);
        assert_eq!(ef_resonance(p, 5, m.as_mut_ptr()), EfStatus::EfBadParams);
        ef_params_free(p);
    }

    #[test]
    fn schedule_check_verdicts() {
        let good = ef_params_new(1, 16, 0, 1, 6, 1, 3, 3, 15, EfSchedule::EfScheduleWindow);
        let mut disjoint = -1;
        let mut hits = u64::MAX;
        assert_eq!(
            ef_schedule_check(good, 100_000, 9, &mut disjoint, &mut hits),
            EfStatus::EfOk
        );
        assert_eq!(disjoint, 1);
        assert_eq!(hits, 0);
        ef_params_free(good);
        let aliased = ef_params_new(1, 16, 0, 1, 6, 1, 3, 3, 15, EfSchedule::EfScheduleCoarse);
        assert_eq!(
            ef_schedule_check(aliased, 10_000, 9, &mut disjoint, &mut hits),
            EfStatus::EfOk
        );
        assert_eq!(disjoint, 0);
        ef_params_free(aliased);
    }

    #[test]
    fn decomposition_and_budget_scalars() {
        let mut g = [0.0f64; 4];
        assert_eq!(ef_decomposition_coeffs(1.0, 0.0, 1.0, g.as_mut_ptr()), EfStatus::EfOk);
        for v in g {
            assert!((v * v - 0.5).abs() < 1e-15);
        }
        assert_eq!(
            ef_decomposition_coeffs(2.0, 0.0, 1.0, g.as_mut_ptr()),
            EfStatus::EfBadParams
        );
        let mut limit = 0.0;
        assert_eq!(ef_budget_limit(8, 2, 1, &mut limit), EfStatus::EfOk);
        assert_eq!(limit, 18.0);
        assert_eq!(ef_budget_limit(0, 2, 1, &mut limit), EfStatus::EfBadParams);
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = ef_version();
        assert!(!v.is_null());
        let s = unsafe { std::ffi::CStr::from_ptr(v) };
        assert!(!s.to_str().unwrap().is_empty());
    }
}
