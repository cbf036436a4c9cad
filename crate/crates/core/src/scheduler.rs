//! Exact certification that the four direction bundles never touch in
//! space-time.
//!
//! Each level-k block lives on a thin strip that translates at speed mu 2^k
//! along its direction. All endpoints, speeds and offsets are dyadic, so a
//! pair of strips can be checked exhaustively: the joint parallel phases
//! move on a line in a phase torus, the spatial crossing cells become convex
//! polygons there, and line-misses-polygon is decided with big-integer
//! arithmetic. The certificate is exact, not sampled.

use crate::dyadic::Dyadic;
use crate::error::ScheduleError;
use crate::jets::{BlockParams, Direction};
use rand::Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Ordering;

/// One level of one direction bundle: a fixed band in the x.xi_perp
/// coordinate crossed with a moving band in the x.xi coordinate.
///
/// Geometry is stored in the unit-frequency phase coordinates
/// (frac(x.xi_perp), frac(x.xi)); the lambda-fold spatial replication of the
/// actual blocks is a rescaling that preserves disjointness verdicts.
#[derive(Clone, Debug)]
pub struct MovingStrip {
    pub dir: Direction,
    pub k: u32,
    /// Fixed interval in frac(x.xi_perp): (3 w_perp, 5 w_perp) for bundles.
    pub perp_lo: Dyadic,
    pub perp_hi: Dyadic,
    /// Half-width w_par of the moving interval in frac(x.xi).
    pub par_half: Dyadic,
    /// Translation speed mu 2^k of the parallel phase.
    pub speed: Dyadic,
    /// Phase at t = 0: the parallel interval is (-w_par, w_par) - phase.
    pub phase_offset: Dyadic,
}

/// Support at a fixed time, reduced mod 1: the product of the perp pieces
/// and the parallel pieces (at most two wrapped pieces per axis).
#[derive(Clone, Debug, Serialize)]
pub struct StripSupport {
    pub perp: Vec<(Dyadic, Dyadic)>,
    pub par: Vec<(Dyadic, Dyadic)>,
}

fn wrap_interval(lo: &Dyadic, len: &Dyadic) -> Vec<(Dyadic, Dyadic)> {
    let one = Dyadic::one();
    if *len >= one {
        return vec![(Dyadic::zero(), one)];
    }
    let lo = lo.fract();
    let hi = &lo + len;
    if hi <= one {
        vec![(lo, hi)]
    } else {
        vec![(lo, one.clone()), (Dyadic::zero(), hi - one)]
    }
}

impl MovingStrip {
    /// The strip of level k in the given direction bundle, with the phase
    /// offset taken from the schedule (offsets are multiples of mu^-1, so
    /// speed * offset = 2^k * multiplier stays dyadic).
    pub fn from_params(params: &BlockParams, dir: Direction, k: u32) -> MovingStrip {
        let w_perp = &params.r_perp * &Dyadic::pow2(-(k as i64));
        let w_par = &params.r_par * &Dyadic::pow2(-(k as i64));
        MovingStrip {
            dir,
            k,
            perp_lo: &Dyadic::from_int(3) * &w_perp,
            perp_hi: &Dyadic::from_int(5) * &w_perp,
            par_half: w_par,
            speed: &params.mu * &Dyadic::pow2(k as i64),
            phase_offset: &Dyadic::pow2(k as i64) * &params.offset_multiplier(dir),
        }
    }

    pub fn support_at(&self, t: &Dyadic) -> StripSupport {
        let phase = &(&self.speed * t) + &self.phase_offset;
        let lo = &(-self.par_half.clone()) - &phase;
        let len = &self.par_half + &self.par_half;
        let perp_len = &self.perp_hi - &self.perp_lo;
        StripSupport {
            perp: wrap_interval(&self.perp_lo, &perp_len),
            par: wrap_interval(&lo, &len),
        }
    }

    /// Membership test in floating point, parametrized by the rescaled time
    /// theta in [0,1) and the integer speed ratio v = speed / gcd(speeds).
    fn contains_theta(&self, x: [f64; 2], theta: f64, v: f64) -> bool {
        let xip = self.dir.xi_perp();
        let a = x[0] * xip[0] as f64 + x[1] * xip[1] as f64;
        let a = a - a.floor();
        if !(a > self.perp_lo.to_f64() && a < self.perp_hi.to_f64()) {
            return false;
        }
        let xi = self.dir.xi();
        let y = x[0] * xi[0] as f64 + x[1] * xi[1] as f64 + v * theta
            + self.phase_offset.to_f64();
        (y - y.round()).abs() < self.par_half.to_f64()
    }
}

/// All strips of the four-direction family for the given parameters.
pub fn schedule_strips(params: &BlockParams) -> Vec<MovingStrip> {
    let mut out = Vec::new();
    for dir in Direction::all() {
        for k in params.k_range() {
            out.push(MovingStrip::from_params(params, dir, k));
        }
    }
    out
}

/// Exact rational with dyadic numerator and positive dyadic denominator;
/// comparisons go through cross-multiplication, so they are exact.
#[derive(Clone, Debug)]
struct Rat {
    num: Dyadic,
    den: Dyadic,
}

impl Rat {
    fn new(num: Dyadic, den: Dyadic) -> Rat {
        if den < Dyadic::zero() {
            Rat { num: -num, den: -den }
        } else {
            Rat { num, den }
        }
    }

    fn from_dyadic(d: Dyadic) -> Rat {
        Rat { num: d, den: Dyadic::one() }
    }

    fn cmp(&self, other: &Rat) -> Ordering {
        (&self.num * &other.den).cmp(&(&other.num * &self.den))
    }

    fn min(a: Rat, b: Rat) -> Rat {
        if a.cmp(&b) == Ordering::Greater { b } else { a }
    }

    fn max(a: Rat, b: Rat) -> Rat {
        if a.cmp(&b) == Ordering::Less { b } else { a }
    }

    fn to_f64(&self) -> f64 {
        self.num.to_f64() / self.den.to_f64()
    }

    /// Dyadic lower bound with 60 fractional bits, for reporting.
    fn floor_dyadic(&self) -> Dyadic {
        Dyadic::div_floor(&self.num, &self.den, 60)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Collision {
    pub i: usize,
    pub j: usize,
    /// Rescaled time theta = gcd(speeds) * t of the overlap.
    pub theta: f64,
    /// Integer cell indices (perp_i, perp_j, par_i, par_j) of the overlap.
    pub cell: [i64; 4],
}

#[derive(Clone, Debug, Serialize)]
pub struct PairMargin {
    pub i: usize,
    pub j: usize,
    /// Certified dyadic lower bound on the phase-space clearance, "m/2^e".
    pub margin: String,
    /// Number of exact linear systems checked for this pair.
    pub systems: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub verdict: String,
    pub strips: usize,
    /// gcd of the strip speeds; one phase period is t = 1 / phase_unit.
    pub phase_unit: String,
    pub systems_total: usize,
    pub pairs: Vec<PairMargin>,
    pub collision: Option<Collision>,
}

impl Certificate {
    pub fn is_disjoint(&self) -> bool {
        self.collision.is_none()
    }
}

struct PairOutcome {
    margin: Rat,
    systems: usize,
    collision: Option<(f64, [i64; 4])>,
}

/// Margin cap: phase distances on the torus never exceed 1/2, so a pair
/// with no nearby system at all reports 1/2.
fn margin_cap() -> Rat {
    Rat::from_dyadic(Dyadic::ratio(1, 1))
}

fn circle_distance(d: &Dyadic) -> Dyadic {
    let f = d.fract();
    let alt = &Dyadic::one() - &f;
    Dyadic::min(&f, &alt)
}

/// Integer division by a determinant in {+-1, +-2}, kept exact.
fn over_det(num: i64, det: i64) -> Dyadic {
    match det {
        1 => Dyadic::from_int(num),
        -1 => Dyadic::from_int(-num),
        2 => Dyadic::ratio(num, 1),
        -2 => Dyadic::ratio(-num, 1),
        _ => unreachable!("determinants of the four directions are +-1, +-2"),
    }
}

fn same_direction_pair(a: &MovingStrip, b: &MovingStrip) -> PairOutcome {
    // perp bands are fixed; disjoint bands settle the pair outright
    let gap1 = &b.perp_lo - &a.perp_hi;
    let gap2 = &a.perp_lo - &b.perp_hi;
    let gap = Dyadic::max(&gap1, &gap2);
    if gap >= Dyadic::zero() {
        return PairOutcome {
            margin: Rat::min(margin_cap(), Rat::from_dyadic(gap)),
            systems: 1,
            collision: None,
        };
    }
    let widths = &a.par_half + &b.par_half;
    if a.speed == b.speed {
        // constant relative phase: overlap iff the centers come closer than
        // the summed half-widths on the circle
        let dist = circle_distance(&(&a.phase_offset - &b.phase_offset));
        if dist < widths {
            PairOutcome {
                margin: Rat::from_dyadic(Dyadic::zero()),
                systems: 1,
                collision: Some((0.0, [0, 0, 0, 0])),
            }
        } else {
            PairOutcome {
                margin: Rat::min(margin_cap(), Rat::from_dyadic(&dist - &widths)),
                systems: 1,
                collision: None,
            }
        }
    } else {
        // different speeds sweep every relative phase, so overlapping perp
        // bands guarantee a meeting; solve for the first one
        let rel_speed = a.speed.to_f64() - b.speed.to_f64();
        let rel_phase = (&b.phase_offset - &a.phase_offset).to_f64();
        let t = (rel_phase - rel_phase.floor()) / rel_speed.abs();
        PairOutcome {
            margin: Rat::from_dyadic(Dyadic::zero()),
            systems: 1,
            collision: Some((t.abs(), [0, 0, 0, 0])),
        }
    }
}

/// Exact check of one cross-direction pair.
///
/// With a = x.xi_perp, b = x.eta_perp the spatial conditions select
/// rectangles (a, b) in (3w,5w)+m x (3w,5w)+n; inverting gives the parallel
/// coordinates u = x.xi, w = x.eta as a linear dyadic image. Overlap at
/// rescaled time theta means the phase point lies in the Minkowski sum of
/// that parallelogram and the parallel-width rectangle, shifted by integers
/// (p, q). Each candidate system is four affine band constraints in theta,
/// intersected exactly.
fn cross_direction_pair(a: &MovingStrip, b: &MovingStrip, va: &Dyadic, vb: &Dyadic) -> PairOutcome {
    let xi = a.dir.xi();
    let xip = a.dir.xi_perp();
    let eta = b.dir.xi();
    let etap = b.dir.xi_perp();
    let det = xip[0] * etap[1] - xip[1] * etap[0];
    // u = p1 a + p2 b, w = q1 a + q2 b
    let p1 = over_det(xi[0] * etap[1] - xi[1] * etap[0], det);
    let p2 = over_det(xi[1] * xip[0] - xi[0] * xip[1], det);
    let q1 = over_det(eta[0] * etap[1] - eta[1] * etap[0], det);
    let q2 = over_det(eta[1] * xip[0] - eta[0] * xip[1], det);

    // distinct crossing cells: one lattice class, or two when |det| = 2
    let mut cells: Vec<(i64, i64)> = vec![(0, 0)];
    if det.abs() == 2 {
        // (1,0) is outside M Z^2 iff M^-1 (1,0) is non-integral
        let z1 = etap[1] % det;
        let z2 = etap[0] % det;
        if z1 != 0 || z2 != 0 {
            cells.push((1, 0));
        } else {
            cells.push((0, 1));
        }
    }

    let axes: [(Dyadic, Dyadic); 4] = [
        (Dyadic::one(), Dyadic::zero()),
        (Dyadic::zero(), Dyadic::one()),
        (-q1.clone(), p1.clone()),
        (-q2.clone(), p2.clone()),
    ];

    let mut margin = margin_cap();
    let mut systems = 0usize;
    let mut first: Option<(Rat, [i64; 4])> = None;

    for &(m, n) in &cells {
        let ma = Dyadic::from_int(m);
        let nb = Dyadic::from_int(n);
        let a_lo = &a.perp_lo + &ma;
        let a_hi = &a.perp_hi + &ma;
        let b_lo = &b.perp_lo + &nb;
        let b_hi = &b.perp_hi + &nb;
        let corners = [
            (a_lo.clone(), b_lo.clone()),
            (a_lo.clone(), b_hi.clone()),
            (a_hi.clone(), b_lo.clone()),
            (a_hi.clone(), b_hi.clone()),
        ];
        let verts: Vec<(Dyadic, Dyadic)> = corners
            .iter()
            .map(|(av, bv)| (&(&p1 * av) + &(&p2 * bv), &(&q1 * av) + &(&q2 * bv)))
            .collect();

        // per-axis band [lo, hi] of the Minkowski sum polygon
        let mut bands = Vec::with_capacity(4);
        for (n1, n2) in &axes {
            let mut pmin: Option<Dyadic> = None;
            let mut pmax: Option<Dyadic> = None;
            for (u, w) in &verts {
                let v = &(n1 * u) + &(n2 * w);
                pmin = Some(pmin.map_or(v.clone(), |c| Dyadic::min(&c, &v)));
                pmax = Some(pmax.map_or(v.clone(), |c| Dyadic::max(&c, &v)));
            }
            let spread = &(&n1.abs() * &a.par_half) + &(&n2.abs() * &b.par_half);
            bands.push((
                &pmin.unwrap() - &spread,
                &pmax.unwrap() + &spread,
                n1.clone(),
                n2.clone(),
            ));
        }

        // integer phase shifts p, q that can meet the u / w bands over one
        // phase period (phases advance by va, vb across theta in [0,1])
        let (u_lo, u_hi, _, _) = &bands[0];
        let (w_lo, w_hi, _, _) = &bands[1];
        let p_from = (u_lo + &a.phase_offset).floor_int();
        let p_to = (&(u_hi + &a.phase_offset) + va).floor_int() + 1;
        let q_from = (w_lo + &b.phase_offset).floor_int();
        let q_to = (&(w_hi + &b.phase_offset) + vb).floor_int() + 1;

        let mut p = p_from.clone();
        while p <= p_to {
            let mut q = q_from.clone();
            while q <= q_to {
                systems += 1;
                let pd = Dyadic::new(p.clone(), 0);
                let qd = Dyadic::new(q.clone(), 0);
                // theta-feasible window of each band, or its best violation
                let mut t_lo = Rat::from_dyadic(Dyadic::zero());
                let mut t_hi = Rat::from_dyadic(Dyadic::one());
                let mut feasible = true;
                let mut best_axis_viol = Rat::from_dyadic(Dyadic::zero());
                for (lo, hi, n1, n2) in &bands {
                    // n . z(theta) = off - slope * theta
                    let off = &(&(n1 * &pd) + &(n2 * &qd))
                        - &(&(n1 * &a.phase_offset) + &(n2 * &b.phase_offset));
                    let slope = &(n1 * va) + &(n2 * vb);
                    let norm1 = &n1.abs() + &n2.abs();
                    if slope.is_zero() {
                        if &off < lo || &off > hi {
                            feasible = false;
                            let viol = Dyadic::max(&(lo - &off), &(&off - hi));
                            best_axis_viol =
                                Rat::max(best_axis_viol, Rat::new(viol, norm1));
                        }
                        continue;
                    }
                    // lo <= off - slope*theta <= hi
                    let (blo, bhi) = if slope > Dyadic::zero() {
                        (
                            Rat::new(&off - hi, slope.clone()),
                            Rat::new(&off - lo, slope.clone()),
                        )
                    } else {
                        (
                            Rat::new(&off - lo, slope.clone()),
                            Rat::new(&off - hi, slope.clone()),
                        )
                    };
                    // violation at the window ends if the band misses [0,1]
                    let zero = Rat::from_dyadic(Dyadic::zero());
                    let one = Rat::from_dyadic(Dyadic::one());
                    if blo.cmp(&one) == Ordering::Greater || bhi.cmp(&zero) == Ordering::Less {
                        feasible = false;
                        let v0 = Dyadic::max(&(lo - &off), &(&off - hi));
                        let off1 = &off - &slope;
                        let v1 = Dyadic::max(&(lo - &off1), &(&off1 - hi));
                        best_axis_viol = Rat::max(
                            best_axis_viol,
                            Rat::new(Dyadic::min(&v0, &v1), norm1),
                        );
                    } else {
                        t_lo = Rat::max(t_lo, blo);
                        t_hi = Rat::min(t_hi, bhi);
                    }
                }
                if feasible && t_lo.cmp(&t_hi) == Ordering::Less {
                    // positive-length overlap window: genuine collision
                    let mid = Rat::new(
                        &(&t_lo.num * &t_hi.den) + &(&t_hi.num * &t_lo.den),
                        &(&t_lo.den * &t_hi.den) * &Dyadic::from_int(2),
                    );
                    let pid = p.to_string().parse::<i64>().unwrap_or(i64::MAX);
                    let qid = q.to_string().parse::<i64>().unwrap_or(i64::MAX);
                    let cell = [m, n, pid, qid];
                    match &first {
                        Some((t, _)) if mid.cmp(t) != Ordering::Less => {}
                        _ => first = Some((mid, cell)),
                    }
                    margin = Rat::from_dyadic(Dyadic::zero());
                } else {
                    margin = Rat::min(margin, best_axis_viol);
                }
                q += 1;
            }
            p += 1;
        }
    }
    PairOutcome {
        margin,
        systems,
        collision: first.map(|(t, c)| (t.to_f64(), c)),
    }
}

/// Exhaustive exact disjointness check of a strip family over one phase
/// period. Returns per-pair clearance margins or the earliest collision.
pub fn certify_disjoint(strips: &[MovingStrip]) -> Result<Certificate, ScheduleError> {
    for s in strips {
        if s.speed <= Dyadic::zero() {
            return Err(ScheduleError::NonDyadicSpeed);
        }
    }
    let mut g = Dyadic::zero();
    for s in strips {
        g = Dyadic::gcd(&g, &s.speed);
    }
    // integer phase multipliers: phases advance by v_i over theta in [0,1)
    let vs: Vec<Dyadic> = strips
        .iter()
        .map(|s| Dyadic::div_floor(&s.speed, &g, 0))
        .collect();

    let mut pairs_idx = Vec::new();
    for i in 0..strips.len() {
        for j in (i + 1)..strips.len() {
            pairs_idx.push((i, j));
        }
    }
    let outcomes: Vec<(usize, usize, PairOutcome)> = pairs_idx
        .par_iter()
        .map(|&(i, j)| {
            let out = if strips[i].dir == strips[j].dir {
                same_direction_pair(&strips[i], &strips[j])
            } else {
                cross_direction_pair(&strips[i], &strips[j], &vs[i], &vs[j])
            };
            (i, j, out)
        })
        .collect();

    let mut pairs = Vec::new();
    let mut systems_total = 0;
    let mut collision: Option<Collision> = None;
    for (i, j, out) in outcomes {
        systems_total += out.systems;
        if let Some((theta, cell)) = out.collision {
            if collision.is_none() {
                collision = Some(Collision { i, j, theta, cell });
            }
        }
        pairs.push(PairMargin {
            i,
            j,
            margin: out.margin.floor_dyadic().to_ratio_string(),
            systems: out.systems,
        });
    }
    Ok(Certificate {
        verdict: if collision.is_none() {
            "disjoint".into()
        } else {
            "collision".into()
        },
        strips: strips.len(),
        phase_unit: g.to_ratio_string(),
        systems_total,
        pairs,
        collision,
    })
}

/// Independent confirmation: uniform random (x, theta) samples, counting
/// points inside two or more strips. Zero when a disjointness certificate
/// exists; positive for genuinely overlapping families.
pub fn randomized_collision_search(strips: &[MovingStrip], trials: u64, seed: u64) -> u64 {
    if strips.len() < 2 {
        return 0;
    }
    let mut g = Dyadic::zero();
    for s in strips {
        g = Dyadic::gcd(&g, &s.speed);
    }
    let vs: Vec<f64> = strips
        .iter()
        .map(|s| Dyadic::div_floor(&s.speed, &g, 0).to_f64())
        .collect();
    let chunks: u64 = 64;
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (c << 32));
            let lo = trials * c / chunks;
            let hi = trials * (c + 1) / chunks;
            let mut hits = 0u64;
            for _ in lo..hi {
                let x = [rng.gen::<f64>(), rng.gen::<f64>()];
                let theta = rng.gen::<f64>();
                let mut inside = 0;
                for (s, v) in strips.iter().zip(&vs) {
                    if s.contains_theta(x, theta, *v) {
                        inside += 1;
                        if inside >= 2 {
                            hits += 1;
                            break;
                        }
                    }
                }
            }
            hits
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::ProfileKind;

    fn paper_params(big_k: u32, e: u32) -> BlockParams {
        BlockParams {
            lambda: 1,
            mu: Dyadic::from_int(4),
            r_perp: Dyadic::ratio(1, 6),
            r_par: Dyadic::ratio(1, 3),
            big_k,
            n0: 5 * big_k,
            schedule: BlockParams::staircase_offsets(big_k, e),
            kind: ProfileKind::Poly { m: 12 },
        }
    }

    #[test]
    fn support_wraps_into_two_pieces_of_full_length() {
        let params = paper_params(1, 5);
        let strip = MovingStrip::from_params(&params, Direction::new(1).unwrap(), 6);
        let sup = strip.support_at(&Dyadic::zero());
        assert_eq!(sup.perp.len(), 1);
        assert_eq!(sup.par.len(), 2, "interval through 0 splits in two");
        let total: f64 = sup
            .par
            .iter()
            .map(|(lo, hi)| hi.to_f64() - lo.to_f64())
            .sum();
        assert!((total - 2.0 * strip.par_half.to_f64()).abs() < 1e-15);
    }

    #[test]
    fn support_translates_by_one_period() {
        let params = paper_params(1, 5);
        let strip = MovingStrip::from_params(&params, Direction::new(3).unwrap(), 6);
        // speed = mu 2^k = 2^8; after t = 2^-8 the phase advances by exactly 1
        let t = Dyadic::pow2(-8);
        let s0 = strip.support_at(&Dyadic::zero());
        let s1 = strip.support_at(&t);
        assert_eq!(format!("{s0:?}"), format!("{s1:?}"));
    }

    #[test]
    fn window_offsets_certify_k1() {
        let mut params = paper_params(1, 7);
        params.schedule = BlockParams::window_offsets(1);
        let strips = schedule_strips(&params);
        assert_eq!(strips.len(), 4);
        let cert = certify_disjoint(&strips).unwrap();
        assert!(cert.is_disjoint(), "{:?}", cert.collision);
        let hits = randomized_collision_search(&strips, 1_000_000, 5);
        assert_eq!(hits, 0);
    }

    #[test]
    fn tight_staircase_aliases_at_k1_but_certifies_at_k2() {
        // at K = 1 the direction-3 offset shifts level 6 by exactly one
        // period (2^6 * 2 * 2^-7 = 1), so the family overlaps; at K = 2 all
        // relative shifts are fractional and the schedule certifies
        let k1 = certify_disjoint(&schedule_strips(&paper_params(1, 7))).unwrap();
        assert!(!k1.is_disjoint());
        let k2 = certify_disjoint(&schedule_strips(&paper_params(2, 7))).unwrap();
        assert!(k2.is_disjoint(), "{:?}", k2.collision);
    }

    #[test]
    fn coarse_staircase_offsets_are_whole_periods() {
        // with n0 = 5K, offsets i mu^-1 2^{-5K} shift each level's phase by
        // the integer i 2^{k-5K}: the translation is invisible mod 1 and the
        // family overlaps exactly like the unshifted one
        let params = paper_params(1, 5);
        for s in schedule_strips(&params) {
            assert!(s.phase_offset.fract().is_zero(), "{:?}", s.phase_offset);
        }
        let cert = certify_disjoint(&schedule_strips(&params)).unwrap();
        assert!(!cert.is_disjoint());
    }

    #[test]
    fn identical_strips_collide_at_time_zero() {
        let params = paper_params(1, 5);
        let s = MovingStrip::from_params(&params, Direction::new(2).unwrap(), 6);
        let cert = certify_disjoint(&[s.clone(), s]).unwrap();
        assert!(!cert.is_disjoint());
        let c = cert.collision.unwrap();
        assert_eq!(c.theta, 0.0);
    }

    #[test]
    fn zero_offsets_collide_across_directions() {
        let mut params = paper_params(1, 5);
        params.schedule = vec![];
        let strips = schedule_strips(&params);
        let cert = certify_disjoint(&strips).unwrap();
        assert!(!cert.is_disjoint(), "all strips cross the origin at t = 0");
        // fat geometry so the uniform search has detection power
        let fat = BlockParams {
            lambda: 1,
            mu: Dyadic::from_int(2),
            r_perp: Dyadic::ratio(1, 3),
            r_par: Dyadic::ratio(1, 1),
            big_k: 1,
            n0: 0,
            schedule: vec![],
            kind: ProfileKind::Poly { m: 12 },
        };
        let fat_strips = schedule_strips(&fat);
        assert!(!certify_disjoint(&fat_strips).unwrap().is_disjoint());
        let hits = randomized_collision_search(&fat_strips, 2_000_000, 9);
        assert!(hits > 0, "search should confirm the overlap");
    }

    #[test]
    fn verdict_is_translation_invariant() {
        for zero_offsets in [false, true] {
            let mut params = paper_params(1, 5);
            if zero_offsets {
                params.schedule = vec![];
            }
            let mut strips = schedule_strips(&params);
            let before = certify_disjoint(&strips).unwrap().is_disjoint();
            let shift = Dyadic::ratio(5, 4);
            for s in &mut strips {
                // a common time shift moves each phase by speed-proportional
                // amounts; a common phase shift per speed class is t * speed
                s.phase_offset = &s.phase_offset + &(&s.speed * &shift);
            }
            let after = certify_disjoint(&strips).unwrap().is_disjoint();
            assert_eq!(before, after);
        }
    }

    #[test]
    fn certificate_serializes_with_dyadic_margins() {
        let mut params = paper_params(1, 5);
        params.schedule = BlockParams::window_offsets(1);
        let cert = certify_disjoint(&schedule_strips(&params)).unwrap();
        let js = serde_json::to_string(&cert).unwrap();
        assert!(js.contains("\"verdict\":\"disjoint\""));
        assert!(cert.pairs.iter().all(|p| !p.margin.is_empty()));
    }

    #[test]
    fn same_direction_levels_report_perp_gap() {
        let params = paper_params(2, 5);
        let d = Direction::new(1).unwrap();
        let a = MovingStrip::from_params(&params, d, 11);
        let b = MovingStrip::from_params(&params, d, 12);
        let cert = certify_disjoint(&[a.clone(), b]).unwrap();
        assert!(cert.is_disjoint());
        // gap = 3 w_k - 5 w_{k+1} = w_k / 2 = perp_lo / 6 exactly
        let expect = a.perp_lo.to_f64() / 6.0;
        let got: Dyadic = cert.pairs[0].margin.parse().unwrap();
        assert!((got.to_f64() - expect).abs() < 1e-15, "{got}");
    }

    #[test]
    fn nonpositive_speed_rejected() {
        let params = paper_params(1, 5);
        let mut s = MovingStrip::from_params(&params, Direction::new(1).unwrap(), 6);
        s.speed = Dyadic::zero();
        assert!(certify_disjoint(&[s.clone(), s]).is_err());
    }

    #[test]
    fn multi_level_tight_schedule_certifies() {
        let params = paper_params(2, 7);
        let strips = schedule_strips(&params);
        assert_eq!(strips.len(), 8);
        let cert = certify_disjoint(&strips).unwrap();
        assert!(cert.is_disjoint(), "{:?}", cert.collision);
    }
}
