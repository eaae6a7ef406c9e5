//! Weighted volumes and integrals over the regions the toolkit reasons
//! about: tents, Carleson squares, Bergman balls, sectors, halfplanes, and
//! finite intersections of these.
//!
//! Everything factors through the slice decomposition
//! V_ω(E) = 2n ∫₀¹ r^{2n−1} ω(r) · frac(E, r) dr,
//! where frac(E, r) is the normalized circle (n = 1) or sphere (n = 2)
//! measure of the slice {ξ : rξ ∈ E}. Slices are exact wherever the
//! geometry allows:
//!   n = 1: every supported region slices to circular arcs, and
//!     intersections are interval arithmetic mod 2π;
//!   n = 2: for ξ uniform on the sphere and any unit vector η the pairing
//!     ⟨ξ, η⟩ is uniform on the unit disc, so cap and ball slices are
//!     two-disc lens areas and halfplane slices are circular segments.
//! Radial factors ride on `RadialWeight::radial_mass`, whose hats are closed
//! forms: piecewise constant slices (tents, squares, sectors) need no
//! quadrature at all, and regions reaching the boundary complete the layer
//! [1 − 2⁻⁵², 1) through the hats instead of truncating it, which is what
//! keeps slowly decaying weights honest. The remaining Monte Carlo lives in
//! the sphere fractions of ball-tree direction cells and in caller-supplied
//! membership oracles; those results carry their standard error and admit
//! it in `converged`.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell as EvalCell;
use core::f64::consts::{PI, TAU};
use core::fmt;

use crate::dyadic::{BergmanTree, CellRef};
use crate::geometry::{pseudohyperbolic, BergmanBall, CarlesonSquare, GeometryError, Point};
use crate::numerics::{adaptive_gl, gl16, gl8, Neumaier};
use crate::rng::Sampler;
use crate::weights::RadialWeight;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

/// Boundary completion cut: 1 − 2⁻⁵² is exactly representable and 1 − r is
/// computed without cancellation down to it, so the remaining layer is
/// handed to the closed-form hat moments.
const V_CUT: f64 = 2.220446049250313e-16;
/// Deepest scale membership probes resolve; below it a region is assumed
/// radially monotone (true for every tent, square, and halfplane).
const V_PROBE: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub enum QuadratureError {
    BadRegion { why: &'static str },
    DimensionMismatch { left: usize, right: usize },
    BadCell { band: u32, index: u32 },
    /// Averages over regions whose measure is zero (or infinite) are
    /// undefined; callers treat this as an empty testing cell.
    ZeroMeasure { measure: f64 },
    Geometry(GeometryError),
}

impl fmt::Display for QuadratureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadratureError::BadRegion { why } => write!(f, "bad region: {why}"),
            QuadratureError::DimensionMismatch { left, right } => {
                write!(f, "dimension mismatch: {left} vs {right}")
            }
            QuadratureError::BadCell { band, index } => {
                write!(f, "cell ({band}, {index}) is not part of the tree")
            }
            QuadratureError::ZeroMeasure { measure } => {
                write!(f, "region has measure {measure}, average undefined")
            }
            QuadratureError::Geometry(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for QuadratureError {}

impl From<GeometryError> for QuadratureError {
    fn from(e: GeometryError) -> Self {
        QuadratureError::Geometry(e)
    }
}

/// Tolerances and sampling budgets. `rtol`/`atol` form the convergence
/// acceptance bar; the adaptive panels internally aim a factor `INNER`
/// tighter so that honest defect estimates still clear it. `mc_rtol` is the
/// separate relative bar a Monte Carlo standard error must meet before a
/// sampled result claims convergence: sampled errors shrink like m^{-1/2}
/// and would never reach `rtol`.
#[derive(Clone, Debug)]
pub struct QuadOpts {
    pub rtol: f64,
    pub atol: f64,
    pub mc_rtol: f64,
    pub max_depth: u32,
    pub sphere_samples: usize,
    pub radial_grid: usize,
    pub seed: u64,
}

/// Internal tightening of `rtol` for the adaptive panels.
const INNER: f64 = 0.05;

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts {
            rtol: 1e-6,
            atol: 1e-12,
            mc_rtol: 0.02,
            max_depth: 26,
            sphere_samples: 4096,
            radial_grid: 96,
            seed: 0x51AD,
        }
    }
}

/// One computed integral. `abs_err` is a conservative defect estimate (panel
/// differences, hat round-off, or a Monte Carlo standard error), and
/// `converged` certifies abs_err <= rtol * |value| + atol, with `mc_rtol` in
/// place of `rtol` on sampled paths. An infinite `value` with finite
/// `abs_err` is a definite divergence, not a failure.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_err: f64,
    pub converged: bool,
    pub evals: u64,
}

impl QuadratureResult {
    fn exact(value: f64) -> Self {
        QuadratureResult {
            value,
            abs_err: value.abs() * 1e-13,
            converged: true,
            evals: 0,
        }
    }

    fn infinite() -> Self {
        QuadratureResult {
            value: f64::INFINITY,
            abs_err: 0.0,
            converged: true,
            evals: 0,
        }
    }
}

fn finish(value: f64, err: f64, evals: u64, mc: bool, opts: &QuadOpts) -> QuadratureResult {
    let converged = if value.is_nan() {
        false
    } else if value.is_infinite() {
        err.is_finite()
    } else {
        let rel = if mc { opts.mc_rtol } else { opts.rtol };
        err <= rel * value.abs() + opts.atol
    };
    QuadratureResult {
        value,
        abs_err: err,
        converged,
        evals,
    }
}

/// A subset of the disc or ball with computable radial slices. Regions are
/// plain data; build them through the checked constructors and they stay
/// valid for any radial weight.
#[derive(Clone, Debug)]
pub enum Region {
    WholeBall { n: usize },
    Annulus { n: usize, r_lo: f64, r_hi: f64 },
    /// n = 1 only: r ∈ [r_lo, r_hi), angle ∈ [a_lo, a_hi).
    Sector { r_lo: f64, r_hi: f64, a_lo: f64, a_hi: f64 },
    /// Carleson square S(apex); apex at the origin means the whole ball.
    Square { apex: Point },
    /// Bergman-metric ball; radius is the Bergman radius.
    Ball { center: Point, radius: f64 },
    /// {z : Re z₁ > real_min}.
    Halfplane { n: usize, real_min: f64 },
    Intersection { parts: Vec<Region> },
}

impl Region {
    pub fn whole(n: usize) -> Result<Region, QuadratureError> {
        let r = Region::WholeBall { n };
        r.check()?;
        Ok(r)
    }

    pub fn annulus(n: usize, r_lo: f64, r_hi: f64) -> Result<Region, QuadratureError> {
        let r = Region::Annulus { n, r_lo, r_hi };
        r.check()?;
        Ok(r)
    }

    pub fn sector(r_lo: f64, r_hi: f64, a_lo: f64, a_hi: f64) -> Result<Region, QuadratureError> {
        let r = Region::Sector {
            r_lo,
            r_hi,
            a_lo,
            a_hi,
        };
        r.check()?;
        Ok(r)
    }

    pub fn square(apex: Point) -> Result<Region, QuadratureError> {
        let r = Region::Square { apex };
        r.check()?;
        Ok(r)
    }

    pub fn ball(center: Point, radius: f64) -> Result<Region, QuadratureError> {
        let r = Region::Ball { center, radius };
        r.check()?;
        Ok(r)
    }

    pub fn halfplane(n: usize, real_min: f64) -> Result<Region, QuadratureError> {
        let r = Region::Halfplane { n, real_min };
        r.check()?;
        Ok(r)
    }

    pub fn intersection(parts: Vec<Region>) -> Result<Region, QuadratureError> {
        let r = Region::Intersection { parts };
        r.check()?;
        Ok(r)
    }

    fn check(&self) -> Result<(), QuadratureError> {
        let dim_ok = |n: usize| {
            if n == 1 || n == 2 {
                Ok(())
            } else {
                Err(QuadratureError::BadRegion {
                    why: "dimension must be 1 or 2",
                })
            }
        };
        let radial_ok = |lo: f64, hi: f64| {
            if lo.is_finite() && hi.is_finite() && (0.0..1.0).contains(&lo) && lo < hi && hi <= 1.0
            {
                Ok(())
            } else {
                Err(QuadratureError::BadRegion {
                    why: "need 0 <= r_lo < r_hi <= 1",
                })
            }
        };
        match self {
            Region::WholeBall { n } => dim_ok(*n),
            Region::Annulus { n, r_lo, r_hi } => {
                dim_ok(*n)?;
                radial_ok(*r_lo, *r_hi)
            }
            Region::Sector {
                r_lo,
                r_hi,
                a_lo,
                a_hi,
            } => {
                radial_ok(*r_lo, *r_hi)?;
                let w = a_hi - a_lo;
                if a_lo.is_finite() && a_hi.is_finite() && w > 0.0 && w <= TAU + 1e-12 {
                    Ok(())
                } else {
                    Err(QuadratureError::BadRegion {
                        why: "sector needs 0 < a_hi - a_lo <= 2*pi",
                    })
                }
            }
            Region::Square { apex } => {
                dim_ok(apex.dim())?;
                apex.ensure_interior()?;
                Ok(())
            }
            Region::Ball { center, radius } => {
                dim_ok(center.dim())?;
                center.ensure_interior()?;
                if radius.is_finite() && *radius > 0.0 {
                    Ok(())
                } else {
                    Err(QuadratureError::BadRegion {
                        why: "ball radius must be positive and finite",
                    })
                }
            }
            Region::Halfplane { n, real_min } => {
                dim_ok(*n)?;
                if real_min.is_finite() {
                    Ok(())
                } else {
                    Err(QuadratureError::BadRegion {
                        why: "halfplane cut must be finite",
                    })
                }
            }
            Region::Intersection { parts } => {
                if parts.is_empty() {
                    return Err(QuadratureError::BadRegion {
                        why: "empty intersection",
                    });
                }
                let d0 = parts[0].dim();
                for p in parts {
                    p.check()?;
                    if p.dim() != d0 {
                        return Err(QuadratureError::DimensionMismatch {
                            left: d0,
                            right: p.dim(),
                        });
                    }
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::WholeBall { n } | Region::Annulus { n, .. } | Region::Halfplane { n, .. } => {
                *n
            }
            Region::Sector { .. } => 1,
            Region::Square { apex } => apex.dim(),
            Region::Ball { center, .. } => center.dim(),
            Region::Intersection { parts } => parts[0].dim(),
        }
    }

    /// Exact membership, consistent with the slice fractions.
    pub fn contains(&self, w: &Point) -> bool {
        if w.dim() != self.dim() {
            return false;
        }
        match self {
            Region::WholeBall { .. } => w.norm() < 1.0,
            Region::Annulus { r_lo, r_hi, .. } => {
                let r = w.norm();
                *r_lo <= r && r < *r_hi
            }
            Region::Sector {
                r_lo,
                r_hi,
                a_lo,
                a_hi,
            } => {
                let r = w.norm();
                *r_lo <= r && r < *r_hi && wrap_angle(w.z().arg() - a_lo) < a_hi - a_lo
            }
            Region::Square { apex } => CarlesonSquare { apex: apex.clone() }.contains(w),
            Region::Ball { center, radius } => {
                w.norm() < 1.0
                    && matches!(pseudohyperbolic(center, w), Ok(m) if m < radius.tanh())
            }
            Region::Halfplane { real_min, .. } => {
                w.norm() < 1.0 && w.coords()[0].re > *real_min
            }
            Region::Intersection { parts } => parts.iter().all(|p| p.contains(w)),
        }
    }

    /// Radii outside [lo, hi) have empty slices. For Bergman balls these are
    /// the exact pseudohyperbolic extremes |t ∓ a|/(1 ∓ ta).
    pub fn radial_support(&self) -> (f64, f64) {
        match self {
            Region::WholeBall { .. } => (0.0, 1.0),
            Region::Annulus { r_lo, r_hi, .. } => (*r_lo, *r_hi),
            Region::Sector { r_lo, r_hi, .. } => (*r_lo, *r_hi),
            Region::Square { apex } => (apex.norm(), 1.0),
            Region::Ball { center, radius } => {
                let a = center.norm();
                let t = radius.tanh();
                (((a - t) / (1.0 - t * a)).max(0.0), (a + t) / (1.0 + t * a))
            }
            Region::Halfplane { real_min, .. } => (real_min.max(0.0), 1.0),
            Region::Intersection { parts } => {
                let mut lo = 0.0f64;
                let mut hi = 1.0f64;
                for p in parts {
                    let (a, b) = p.radial_support();
                    lo = lo.max(a);
                    hi = hi.min(b);
                }
                (lo, hi)
            }
        }
    }

    /// Radii where the slice changes character, beyond the support edges.
    fn kinks(&self, out: &mut Vec<f64>) {
        match self {
            Region::Ball { center, radius } => {
                let a = center.norm();
                let t = radius.tanh();
                // the sphere through the near pseudohyperbolic extreme:
                // below it the slice is full (a < t) or empty (a > t)
                out.push((a - t).abs() / (1.0 - t * a));
            }
            Region::Halfplane { real_min, .. } => {
                if *real_min < 0.0 && *real_min > -1.0 {
                    out.push(-real_min);
                }
            }
            Region::Intersection { parts } => {
                for p in parts {
                    p.kinks(out);
                    let (a, b) = p.radial_support();
                    out.push(a);
                    out.push(b);
                }
            }
            _ => {}
        }
    }

    /// True when frac(·, r) is constant between kinks, which routes the
    /// volume through exact hat masses with no quadrature.
    fn const_slice(&self) -> bool {
        match self {
            Region::WholeBall { .. }
            | Region::Annulus { .. }
            | Region::Sector { .. }
            | Region::Square { .. } => true,
            Region::Ball { .. } => false,
            Region::Halfplane { real_min, .. } => *real_min == 0.0,
            Region::Intersection { parts } => parts.iter().all(|p| p.const_slice()),
        }
    }

    /// Number of genuinely directional constraints; in the ball, products of
    /// slice fractions are only exact with at most one of them.
    fn directional_count(&self) -> usize {
        match self {
            Region::Square { .. } | Region::Ball { .. } | Region::Halfplane { .. } => 1,
            Region::Intersection { parts } => parts.iter().map(|p| p.directional_count()).sum(),
            _ => 0,
        }
    }

    fn n2_exact(&self) -> bool {
        self.directional_count() <= 1
    }

    /// Normalized slice measure at radius r; n = 2 callers must have checked
    /// `n2_exact` first.
    fn slice_frac(&self, r: f64) -> f64 {
        if self.dim() == 1 {
            let mut arcs = Vec::new();
            self.arcs_into(r, &mut arcs);
            let total: f64 = arcs.iter().map(|a| a.1).sum();
            total / TAU
        } else {
            self.n2_frac(r)
        }
    }

    fn n2_frac(&self, r: f64) -> f64 {
        match self {
            Region::WholeBall { .. } => {
                if r < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Region::Annulus { r_lo, r_hi, .. } => {
                if *r_lo <= r && r < *r_hi {
                    1.0
                } else {
                    0.0
                }
            }
            Region::Sector { .. } => unreachable!("sectors are n = 1"),
            Region::Square { apex } => {
                let an = apex.norm();
                if an == 0.0 {
                    return 1.0;
                }
                if r <= an {
                    return 0.0;
                }
                lens_area_unit(1.0, 1.0 - an) / PI
            }
            Region::Ball { center, radius } => {
                let a = center.norm() * r;
                let t = radius.tanh();
                let d2 = (1.0 - center.norm_sq()) * (1.0 - r * r) / (1.0 - t * t);
                if d2 <= 0.0 {
                    return 0.0;
                }
                let delta = d2.sqrt();
                if a < 1e-12 {
                    return if delta > 1.0 { 1.0 } else { 0.0 };
                }
                lens_area_unit(1.0 / a, delta / a) / PI
            }
            Region::Halfplane { real_min, .. } => {
                if r < 1e-300 {
                    return if *real_min < 0.0 { 1.0 } else { 0.0 };
                }
                segment_frac(*real_min / r)
            }
            Region::Intersection { parts } => {
                let mut f = 1.0;
                for p in parts {
                    f *= p.n2_frac(r);
                    if f == 0.0 {
                        break;
                    }
                }
                f
            }
        }
    }

    /// n = 1 slice as arcs (lo, len) with lo ∈ [0, 2π), 0 < len ≤ 2π.
    fn arcs_into(&self, r: f64, out: &mut Vec<(f64, f64)>) {
        match self {
            Region::WholeBall { .. } => {
                if r < 1.0 {
                    out.push((0.0, TAU));
                }
            }
            Region::Annulus { r_lo, r_hi, .. } => {
                if *r_lo <= r && r < *r_hi {
                    out.push((0.0, TAU));
                }
            }
            Region::Sector {
                r_lo,
                r_hi,
                a_lo,
                a_hi,
            } => {
                if *r_lo <= r && r < *r_hi {
                    out.push((wrap_angle(*a_lo), (a_hi - a_lo).min(TAU)));
                }
            }
            Region::Square { apex } => {
                let an = apex.norm();
                if an == 0.0 {
                    if r < 1.0 {
                        out.push((0.0, TAU));
                    }
                    return;
                }
                if an < r && r < 1.0 {
                    let h = 2.0 * ((1.0 - an) / 2.0).asin();
                    out.push((wrap_angle(apex.z().arg() - h), 2.0 * h));
                }
            }
            Region::Ball { center, radius } => {
                let e = BergmanBall {
                    center: center.clone(),
                    radius: *radius,
                }
                .euclidean();
                let d = e.center.norm();
                let rr = e.r_line;
                if d < 1e-12 {
                    if r < rr {
                        out.push((0.0, TAU));
                    }
                    return;
                }
                if r <= (d - rr).abs() {
                    if d < rr && r < 1.0 {
                        out.push((0.0, TAU));
                    }
                    return;
                }
                if r >= d + rr {
                    return;
                }
                let cosd = ((r * r + d * d - rr * rr) / (2.0 * r * d)).clamp(-1.0, 1.0);
                let half = cosd.acos();
                out.push((wrap_angle(e.center.z().arg() - half), 2.0 * half));
            }
            Region::Halfplane { real_min, .. } => {
                if r >= 1.0 {
                    return;
                }
                if r < 1e-300 {
                    if *real_min < 0.0 {
                        out.push((0.0, TAU));
                    }
                    return;
                }
                let x = real_min / r;
                if x <= -1.0 {
                    out.push((0.0, TAU));
                } else if x < 1.0 {
                    let half = x.acos();
                    out.push((wrap_angle(-half), 2.0 * half));
                }
            }
            Region::Intersection { parts } => {
                let mut acc = vec![(0.0, TAU)];
                let mut part = Vec::new();
                let mut next = Vec::new();
                for p in parts {
                    part.clear();
                    p.arcs_into(r, &mut part);
                    next.clear();
                    for &a in &acc {
                        for &b in &part {
                            arc_intersect(a, b, &mut next);
                        }
                    }
                    core::mem::swap(&mut acc, &mut next);
                    if acc.is_empty() {
                        return;
                    }
                }
                out.extend_from_slice(&acc);
            }
        }
    }
}

fn wrap_angle(x: f64) -> f64 {
    let y = x % TAU;
    if y < 0.0 {
        y + TAU
    } else {
        y
    }
}

/// Intersect arcs (lo, len), lo ∈ [0, 2π); pushes the overlaps rewrapped.
fn arc_intersect(a: (f64, f64), b: (f64, f64), out: &mut Vec<(f64, f64)>) {
    for shift in [-TAU, 0.0, TAU] {
        let lo = a.0.max(b.0 + shift);
        let hi = (a.0 + a.1).min(b.0 + b.1 + shift);
        if hi > lo {
            out.push((wrap_angle(lo), hi - lo));
        }
    }
}

/// Area of D(0, 1) ∩ D(d, s) for centers a distance d ≥ 0 apart.
fn lens_area_unit(d: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if d + 1.0 <= s {
        return PI;
    }
    if d + s <= 1.0 {
        return PI * s * s;
    }
    if d >= 1.0 + s {
        return 0.0;
    }
    let x1 = ((d * d + 1.0 - s * s) / (2.0 * d)).clamp(-1.0, 1.0);
    let x2 = ((d * d + s * s - 1.0) / (2.0 * d * s)).clamp(-1.0, 1.0);
    let sq = (s + 1.0 - d) * (d + 1.0 - s) * (d - 1.0 + s) * (d + 1.0 + s);
    x1.acos() + s * s * x2.acos() - 0.5 * sq.max(0.0).sqrt()
}

/// Normalized area of {u ∈ D(0,1) : Re u > x}.
fn segment_frac(x: f64) -> f64 {
    if x <= -1.0 {
        return 1.0;
    }
    if x >= 1.0 {
        return 0.0;
    }
    (x.acos() - x * (1.0 - x * x).sqrt()) / PI
}

fn rpow(r: f64, n: usize) -> f64 {
    if n == 1 {
        r
    } else {
        r * r * r
    }
}

/// ∫_a^b r^{2n−1} ω(r) h(r) dr on an interior chunk, adaptive in r.
fn chunk_adaptive<H: FnMut(f64) -> f64>(
    w: &RadialWeight,
    n: usize,
    a: f64,
    b: f64,
    mut h: H,
    opts: &QuadOpts,
    evals: &EvalCell<u64>,
) -> (f64, f64) {
    adaptive_gl(
        &mut |r| {
            evals.set(evals.get() + 1);
            rpow(r, n) * w.density(r) * h(r)
        },
        a,
        b,
        opts.rtol * INNER,
        0.0,
        opts.max_depth,
    )
}

/// ∫_a^b r^{2n−1} ω(r) dr without hat machinery, for weights with infinite
/// mass near the boundary; requires b < 1.
fn bounded_mass(
    w: &RadialWeight,
    n: usize,
    a: f64,
    b: f64,
    opts: &QuadOpts,
    evals: &EvalCell<u64>,
) -> (f64, f64) {
    debug_assert!(b < 1.0);
    if b <= a {
        return (0.0, 0.0);
    }
    adaptive_gl(
        &mut |v| {
            evals.set(evals.get() + 1);
            rpow(1.0 - v, n) * w.density_at_distance(v)
        },
        1.0 - b,
        1.0 - a,
        opts.rtol * INNER,
        0.0,
        opts.max_depth,
    )
}

/// ∫_{r0}^{1} r^{2n−1} ω(r) h(r) dr for h with a continuous limit at the
/// boundary: adaptive through the bulk, geometric panels through the layer,
/// and the final [1 − V_CUT, 1) completed exactly through the hats. The
/// error turns infinite when ω is not integrable and h has not vanished by
/// the cut, because the remaining mass is then unknown.
fn boundary_layer<H: FnMut(f64) -> f64>(
    w: &RadialWeight,
    n: usize,
    r0: f64,
    mut h: H,
    opts: &QuadOpts,
    evals: &EvalCell<u64>,
) -> (f64, f64) {
    let mut val = Neumaier::new();
    let mut err = Neumaier::new();
    let u0 = (1.0 - r0).max(V_CUT);
    let mut g = |v: f64| {
        evals.set(evals.get() + 1);
        rpow(1.0 - v, n) * w.density_at_distance(v) * h(1.0 - v)
    };
    let u_mid = u0.min(0.015625);
    if u0 > u_mid * (1.0 + 1e-12) {
        let (a, e) = adaptive_gl(&mut g, u_mid, u0, opts.rtol * INNER, 0.0, opts.max_depth);
        val.add(a);
        err.add(e);
    }
    let mut hi = u_mid;
    while hi > V_CUT {
        let lo = (0.5 * hi).max(V_CUT);
        let coarse = gl8(&mut g, lo, hi);
        let fine = gl16(&mut g, lo, hi);
        val.add(fine);
        err.add((fine - coarse).abs());
        hi = lo;
    }
    let hc = h(1.0 - V_CUT);
    if hc != 0.0 || w.is_integrable() {
        let tail = hc * w.radial_mass(1.0 - V_CUT, 1.0, n);
        val.add(tail);
        err.add(1e-13 * tail.abs());
    } else {
        err.add(f64::INFINITY);
    }
    (val.value(), err.value())
}

/// Chunk boundaries: support edges plus interior kinks, sorted and deduped.
fn chunk_bounds(region: &Region, lo: f64, hi: f64) -> Vec<f64> {
    let mut cuts = Vec::new();
    region.kinks(&mut cuts);
    cuts.retain(|c| c.is_finite() && *c > lo + 1e-15 && *c < hi - 1e-15);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let mut bounds = Vec::with_capacity(cuts.len() + 2);
    bounds.push(lo);
    bounds.extend_from_slice(&cuts);
    bounds.push(hi);
    bounds
}

/// Weighted volume V_ω(E) = ∫_E ω dV with V the normalized Lebesgue measure.
/// Exact slices plus hat masses wherever possible; n = 2 intersections with
/// more than one directional constraint fall back to the membership oracle.
pub fn volume(
    w: &RadialWeight,
    region: &Region,
    opts: &QuadOpts,
) -> Result<QuadratureResult, QuadratureError> {
    region.check()?;
    let n = region.dim();
    if n == 2 && !region.n2_exact() {
        let support = region.radial_support();
        return oracle_volume(w, 2, support, |p| region.contains(p), opts);
    }
    let scale = (2 * n) as f64;
    let (lo, hi) = region.radial_support();
    if !(lo < hi) {
        return Ok(QuadratureResult::exact(0.0));
    }
    let boundary = hi >= 1.0 - 1e-12;
    let frac_tail = if boundary {
        region.slice_frac(1.0 - V_PROBE)
    } else {
        0.0
    };
    if !w.is_integrable() && boundary && frac_tail > 0.0 {
        return Ok(QuadratureResult::infinite());
    }
    let evals = EvalCell::new(0u64);
    let bounds = chunk_bounds(region, lo, hi);
    let mut val = Neumaier::new();
    let mut err = Neumaier::new();
    if region.const_slice() {
        for pair in bounds.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let fm = region.slice_frac(0.5 * (a + b));
            if fm == 0.0 {
                continue;
            }
            let (mass, merr) = if w.is_integrable() {
                let m = w.radial_mass(a, b, n);
                (m, 1e-13 * m.abs())
            } else {
                bounded_mass(w, n, a, b, opts, &evals)
            };
            val.add(fm * mass);
            err.add(fm * merr);
        }
    } else {
        let last = bounds.len() - 2;
        for (i, pair) in bounds.windows(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            if boundary && i == last {
                let (v, e) = boundary_layer(w, n, a, |r| region.slice_frac(r), opts, &evals);
                val.add(v);
                err.add(e);
            } else {
                let (v, e) = chunk_adaptive(w, n, a, b, |r| region.slice_frac(r), opts, &evals);
                val.add(v);
                err.add(e);
            }
        }
    }
    Ok(finish(
        scale * val.value(),
        scale * err.value(),
        evals.get(),
        false,
        opts,
    ))
}

/// Membership probes of one direction: the radial set {r : rξ ∈ E} as
/// intervals, resolved on a geometric grid in 1 − r plus bisection. A
/// section still alive at the deepest probe is extended to the boundary.
fn sections<F: Fn(&Point) -> bool>(
    contains: &F,
    dir: &Point,
    lo: f64,
    hi: f64,
    grid: usize,
    evals: &EvalCell<u64>,
) -> Vec<(f64, f64)> {
    let v0 = (1.0 - lo).max(V_PROBE);
    let v1 = (1.0 - hi).max(V_PROBE);
    let g = grid.max(8);
    let ratio = (v1 / v0).powf(1.0 / (g as f64 - 1.0));
    let mut probe = |r: f64| {
        evals.set(evals.get() + 1);
        contains(&dir.scale(r))
    };
    let mut rs = Vec::with_capacity(g);
    let mut ms = Vec::with_capacity(g);
    let mut v = v0;
    for j in 0..g {
        let r = (1.0 - v).max(lo);
        rs.push(r);
        ms.push(probe(r));
        v *= ratio;
        let _ = j;
    }
    // bisect a membership flip between consecutive probes, in v
    let edge = |i: usize, probe: &mut dyn FnMut(f64) -> bool| -> f64 {
        let mut va = 1.0 - rs[i - 1];
        let mut vb = 1.0 - rs[i];
        let state_a = ms[i - 1];
        for _ in 0..55 {
            let vm = (va * vb).max(0.0).sqrt().max(V_PROBE * 0.5);
            if probe(1.0 - vm) == state_a {
                va = vm;
            } else {
                vb = vm;
            }
            if va / vb < 1.0 + 1e-14 {
                break;
            }
        }
        1.0 - (va * vb).sqrt()
    };
    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    for i in 0..g {
        match (ms[i], open) {
            (true, None) => {
                let start = if i == 0 { lo } else { edge(i, &mut probe) };
                open = Some(start);
            }
            (false, Some(start)) => {
                out.push((start, edge(i, &mut probe)));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        let end = if hi >= 1.0 - 1e-12 { 1.0 } else { hi };
        out.push((start, end));
    }
    out
}

/// Volume from a membership oracle alone: seeded directions on the sphere,
/// exact hat masses along each radial section. The error is the Monte Carlo
/// standard error over directions; the radial part is exact.
pub fn oracle_volume<F: Fn(&Point) -> bool>(
    w: &RadialWeight,
    n: usize,
    support: (f64, f64),
    contains: F,
    opts: &QuadOpts,
) -> Result<QuadratureResult, QuadratureError> {
    if n != 1 && n != 2 {
        return Err(QuadratureError::BadRegion {
            why: "dimension must be 1 or 2",
        });
    }
    let lo = support.0.max(0.0);
    let hi = support.1.min(1.0);
    if !(lo < hi) {
        return Ok(QuadratureResult::exact(0.0));
    }
    let scale = (2 * n) as f64;
    let m = opts.sphere_samples.max(16);
    let mut smp = Sampler::substream(opts.seed, 881);
    let evals = EvalCell::new(0u64);
    let mut masses = Vec::with_capacity(m);
    let mut infinite = 0usize;
    for _ in 0..m {
        let dir = smp.sphere_point(n);
        let secs = sections(&contains, &dir, lo, hi, opts.radial_grid, &evals);
        let mut acc = Neumaier::new();
        let mut inf = false;
        for (a, b) in secs {
            if w.is_integrable() {
                acc.add(w.radial_mass(a, b, n));
            } else if b >= 1.0 {
                inf = true;
            } else {
                acc.add(bounded_mass(w, n, a, b, opts, &evals).0);
            }
        }
        if inf {
            infinite += 1;
            masses.push(f64::INFINITY);
        } else {
            masses.push(acc.value());
        }
    }
    if infinite > 0 {
        // a positive fraction of directions carries infinite mass
        let solid = infinite >= 4.max(m / 256);
        return Ok(QuadratureResult {
            value: f64::INFINITY,
            abs_err: if solid { 0.0 } else { f64::INFINITY },
            converged: solid,
            evals: evals.get(),
        });
    }
    let mean = masses.iter().sum::<f64>() / m as f64;
    let var = masses.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m as f64 - 1.0);
    let stderr = (var / m as f64).sqrt();
    Ok(finish(
        scale * mean,
        scale * stderr,
        evals.get(),
        true,
        opts,
    ))
}

/// ∫_E f dV_ω for a bounded pointwise f (not necessarily radial). n = 1
/// pairs exact arc slices with adaptive angular panels; n = 2 averages
/// per-direction radial integrals over seeded sphere directions, so its
/// error is a standard error. f must extend continuously to the closed
/// ball on regions that touch the boundary.
pub fn weighted_integral<F: Fn(&Point) -> f64>(
    w: &RadialWeight,
    region: &Region,
    f: F,
    opts: &QuadOpts,
) -> Result<QuadratureResult, QuadratureError> {
    region.check()?;
    let n = region.dim();
    let scale = (2 * n) as f64;
    let (lo, hi) = region.radial_support();
    if !(lo < hi) {
        return Ok(QuadratureResult::exact(0.0));
    }
    let evals = EvalCell::new(0u64);
    if n == 1 {
        let boundary = hi >= 1.0 - 1e-12;
        // worst relative defect of the angular means, folded into the error
        let ang_rel = EvalCell::new(0.0f64);
        let mean = |r: f64| -> f64 {
            let mut arcs = Vec::new();
            region.arcs_into(r, &mut arcs);
            let mut total = 0.0;
            let mut defect = 0.0;
            for (alo, len) in arcs {
                let (v, e) = adaptive_gl(
                    &mut |th| {
                        evals.set(evals.get() + 1);
                        f(&Point::from_polar(r, th))
                    },
                    alo,
                    alo + len,
                    opts.rtol * INNER * 0.5,
                    0.0,
                    18,
                );
                total += v;
                defect += e;
            }
            if total.abs() > 1e-300 {
                let rel = defect / total.abs();
                if rel > ang_rel.get() {
                    ang_rel.set(rel);
                }
            }
            total / TAU
        };
        let bounds = chunk_bounds(region, lo, hi);
        let mut val = Neumaier::new();
        let mut err = Neumaier::new();
        let last = bounds.len() - 2;
        for (i, pair) in bounds.windows(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            if boundary && i == last {
                let (v, e) = boundary_layer(w, 1, a, &mean, opts, &evals);
                val.add(v);
                err.add(e);
            } else {
                let (v, e) = chunk_adaptive(w, 1, a, b, &mean, opts, &evals);
                val.add(v);
                err.add(e);
            }
        }
        let value = scale * val.value();
        let total_err = scale * err.value() + ang_rel.get() * value.abs();
        Ok(finish(value, total_err, evals.get(), false, opts))
    } else {
        let m = opts.sphere_samples.max(16);
        let mut smp = Sampler::substream(opts.seed, 882);
        let contains = |p: &Point| region.contains(p);
        let mut vals = Vec::with_capacity(m);
        let mut quad_err = Neumaier::new();
        let mut any_inf = false;
        for _ in 0..m {
            let dir = smp.sphere_point(2);
            let secs = sections(&contains, &dir, lo, hi, opts.radial_grid, &evals);
            let mut acc = Neumaier::new();
            for (a, b) in secs {
                if b >= 1.0 {
                    let (v, e) = boundary_layer(w, 2, a, |r| f(&dir.scale(r)), opts, &evals);
                    acc.add(v);
                    quad_err.add(e);
                } else {
                    let (v, e) = adaptive_gl(
                        &mut |v| {
                            evals.set(evals.get() + 1);
                            let r = 1.0 - v;
                            rpow(r, 2) * w.density_at_distance(v) * f(&dir.scale(r))
                        },
                        1.0 - b,
                        1.0 - a,
                        opts.rtol * INNER,
                        0.0,
                        opts.max_depth,
                    );
                    acc.add(v);
                    quad_err.add(e);
                }
            }
            let s = acc.value();
            if !s.is_finite() {
                any_inf = true;
            }
            vals.push(s);
        }
        if any_inf {
            return Ok(QuadratureResult {
                value: f64::INFINITY,
                abs_err: f64::INFINITY,
                converged: false,
                evals: evals.get(),
            });
        }
        let mean = vals.iter().sum::<f64>() / m as f64;
        let var = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m as f64 - 1.0);
        let stderr = (var / m as f64).sqrt();
        let err = scale * (stderr + quad_err.value() / m as f64);
        Ok(finish(scale * mean, err, evals.get(), true, opts))
    }
}

/// ‖f‖_{L^p(region, ω)} = (∫_region |f|^p dV_ω)^{1/p} for p > 0.
pub fn lp_norm<F: Fn(&Point) -> f64>(
    w: &RadialWeight,
    region: &Region,
    f: F,
    p: f64,
    opts: &QuadOpts,
) -> Result<QuadratureResult, QuadratureError> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(QuadratureError::BadRegion {
            why: "p must be positive and finite",
        });
    }
    let inner = weighted_integral(w, region, |z| f(z).abs().powf(p), opts)?;
    if !inner.value.is_finite() {
        return Ok(inner);
    }
    let value = inner.value.max(0.0).powf(1.0 / p);
    // d(v^{1/p}) = v^{1/p} dv / (p v), guarded when the value drowns in error
    let abs_err = if inner.value > inner.abs_err && inner.value > 0.0 {
        inner.abs_err * value / (p * inner.value)
    } else {
        inner.abs_err.powf(1.0 / p)
    };
    let mut out = finish(value, abs_err, inner.evals, region.dim() == 2, opts);
    out.converged = out.converged && inner.converged;
    Ok(out)
}

/// ⟨g⟩_{ω, region}: the V_ω-average of g. Zero-measure regions are an
/// error, matching how empty testing cells are skipped upstream.
pub fn region_average<F: Fn(&Point) -> f64>(
    w: &RadialWeight,
    region: &Region,
    g: F,
    opts: &QuadOpts,
) -> Result<QuadratureResult, QuadratureError> {
    let mass = volume(w, region, opts)?;
    if !(mass.value > 0.0) || !mass.value.is_finite() {
        return Err(QuadratureError::ZeroMeasure { measure: mass.value });
    }
    let num = weighted_integral(w, region, g, opts)?;
    let value = num.value / mass.value;
    let abs_err = (num.abs_err + value.abs() * mass.abs_err) / mass.value;
    let mut out = finish(value, abs_err, num.evals + mass.evals, region.dim() == 2, opts);
    out.converged = out.converged && num.converged && mass.converged;
    Ok(out)
}

fn validate_cell(tree: &BergmanTree, cell: CellRef) -> Result<(), QuadratureError> {
    if cell.grid != tree.grid()
        || cell.band > tree.depth()
        || cell.index as usize >= tree.cells(cell.band).len()
    {
        return Err(QuadratureError::BadCell {
            band: cell.band,
            index: cell.index,
        });
    }
    Ok(())
}

/// Normalized sphere fractions of all direction cells at one band, from a
/// shared seeded pool so the fractions sum to exactly 1. n = 1 fractions
/// are exact (the arcs are uniform).
pub fn band_fractions(tree: &BergmanTree, band: u32, samples: usize, seed: u64) -> Vec<f64> {
    let m = tree.cells(band).len();
    if band == 0 || m == 1 {
        return vec![1.0];
    }
    if tree.dim() == 1 {
        return vec![1.0 / m as f64; m];
    }
    let k = tree.dir_level_of_band(band);
    let total = samples.max(16);
    let mut smp = Sampler::substream(seed, 7_000 + band as u64);
    let mut counts = vec![0u64; m];
    for _ in 0..total {
        let xi = smp.sphere_point(2);
        counts[tree.dir_index_at(&xi, k) as usize] += 1;
    }
    counts
        .into_iter()
        .map(|c| c as f64 / total as f64)
        .collect()
}

fn dir_fraction(
    tree: &BergmanTree,
    cell: CellRef,
    opts: &QuadOpts,
) -> (f64, f64) {
    if cell.band == 0 {
        return (1.0, 0.0);
    }
    if tree.dim() == 1 {
        return (1.0 / tree.cells(cell.band).len() as f64, 0.0);
    }
    let fr = band_fractions(tree, cell.band, opts.sphere_samples, opts.seed);
    let f = fr[cell.index as usize];
    let m = opts.sphere_samples.max(16) as f64;
    (f, (f * (1.0 - f) / m).sqrt().max(1.0 / m))
}

/// V_ω(T(K)) for a tree cell: tents are exact radial-by-directional
/// products, so the radial factor is a closed hat mass and only the n = 2
/// direction fraction is sampled. Batch callers touching a whole band
/// should use `band_fractions` once instead.
pub fn tent_volume(
    w: &RadialWeight,
    tree: &BergmanTree,
    cell: CellRef,
    opts: &QuadOpts,
) -> Result<QuadratureResult, QuadratureError> {
    validate_cell(tree, cell)?;
    let n = tree.dim();
    if !w.is_integrable() {
        return Ok(QuadratureResult::infinite());
    }
    let r0 = if cell.band == 0 {
        0.0
    } else {
        (cell.band as f64 * tree.theta()).tanh()
    };
    let (frac, ferr) = dir_fraction(tree, cell, opts);
    let scale = (2 * n) as f64;
    let mass = w.radial_mass(r0, 1.0, n);
    let value = scale * frac * mass;
    let err = scale * (ferr * mass + 1e-13 * frac * mass);
    Ok(finish(value, err, 0, n == 2, opts))
}

/// V_ω of the cell itself: the band slab times the direction fraction.
pub fn cell_volume(
    w: &RadialWeight,
    tree: &BergmanTree,
    cell: CellRef,
    opts: &QuadOpts,
) -> Result<QuadratureResult, QuadratureError> {
    validate_cell(tree, cell)?;
    let n = tree.dim();
    let theta = tree.theta();
    let r0 = if cell.band == 0 {
        0.0
    } else {
        (cell.band as f64 * theta).tanh()
    };
    let r1 = ((cell.band + 1) as f64 * theta).tanh();
    let (frac, ferr) = dir_fraction(tree, cell, opts);
    let scale = (2 * n) as f64;
    let evals = EvalCell::new(0u64);
    let (mass, merr) = if w.is_integrable() {
        let m = w.radial_mass(r0, r1, n);
        (m, 1e-13 * m.abs())
    } else {
        bounded_mass(w, n, r0, r1, opts, &evals)
    };
    let value = scale * frac * mass;
    let err = scale * (ferr * mass + frac * merr);
    Ok(finish(value, err, evals.get(), n == 2, opts))
}

/// The n = 1 tent as an exact region, compatible with `volume` and
/// region intersections.
pub fn disc_tent_region(
    tree: &BergmanTree,
    cell: CellRef,
) -> Result<Region, QuadratureError> {
    if tree.dim() != 1 {
        return Err(QuadratureError::BadRegion {
            why: "exact tent regions exist on the disc only",
        });
    }
    validate_cell(tree, cell)?;
    let (r0, a_lo, a_hi) = tree.tent_sector(cell);
    Region::sector(r0, 1.0, a_lo, a_hi)
}

/// ⟨g⟩_{ω, T(K) ∩ restrict}: the V_ω-average of g over a tent, optionally
/// intersected with a region. Disc tents reduce to the exact sector region.
/// Ball tents exploit the product structure {rξ : r ≥ r0, ξ ∈ patch}:
/// directions are drawn uniformly from the cell's direction patch (cap
/// proposals filtered by membership) and numerator and denominator ride the
/// same radial quadrature along each accepted ray, so constants average
/// exactly and the standard error of the ratio comes from the shared
/// direction sample. Tents of infinite mass (and empty intersections) are
/// `ZeroMeasure` errors, matching `region_average`.
pub fn tent_average<G: Fn(&Point) -> f64>(
    w: &RadialWeight,
    tree: &BergmanTree,
    cell: CellRef,
    restrict: Option<&Region>,
    g: G,
    opts: &QuadOpts,
) -> Result<QuadratureResult, QuadratureError> {
    validate_cell(tree, cell)?;
    let n = tree.dim();
    if let Some(reg) = restrict {
        reg.check()?;
        if reg.dim() != n {
            return Err(QuadratureError::DimensionMismatch {
                left: n,
                right: reg.dim(),
            });
        }
    }
    if n == 1 || cell.band == 0 {
        let base = if n == 1 {
            disc_tent_region(tree, cell)?
        } else {
            Region::whole(2)?
        };
        let region = match restrict {
            Some(reg) => Region::intersection(vec![base, reg.clone()])?,
            None => base,
        };
        return region_average(w, &region, g, opts);
    }
    let r0 = (cell.band as f64 * tree.theta()).tanh();
    let (lo, hi) = match restrict {
        Some(reg) => {
            let (a, b) = reg.radial_support();
            (r0.max(a), b.min(1.0))
        }
        None => (r0, 1.0),
    };
    if !(lo < hi) {
        return Err(QuadratureError::ZeroMeasure { measure: 0.0 });
    }
    if hi >= 1.0 - 1e-12 && !w.is_integrable() && restrict.is_none() {
        return Err(QuadratureError::ZeroMeasure {
            measure: f64::INFINITY,
        });
    }
    let k = tree.dir_level_of_band(cell.band);
    let center = &tree.cell(cell).center;
    let cdir = center.scale(center.norm().recip());
    // polar cap around the patch center; on S³ the area element is sin²φ dφ dν
    let phi_cap = 2.0 * (0.5 * tree.dir_cap_chordal(cell.band)).min(1.0).asin();
    let m = opts.sphere_samples.max(16);
    let mut smp = Sampler::substream(
        opts.seed,
        884 + 131 * cell.band as u64 + cell.index as u64,
    );
    let evals = EvalCell::new(0u64);
    // the unrestricted denominator is direction-free: one quadrature serves all
    let shared_den = if restrict.is_none() {
        Some(boundary_layer(w, 2, r0, |_| 1.0, opts, &evals))
    } else {
        None
    };
    let mut nums = Vec::with_capacity(m);
    let mut dens = Vec::with_capacity(m);
    let mut num_qerr = Neumaier::new();
    let mut den_qerr = Neumaier::new();
    for _ in 0..m {
        let mut xi = None;
        for _ in 0..200_000 {
            // φ ∝ sin²φ on [0, φ_cap]: propose ∝ φ², accept with (sin φ/φ)²
            let phi = loop {
                let cand = phi_cap * smp.uniform().cbrt();
                if cand < 1e-8 {
                    break cand;
                }
                let ratio = cand.sin() / cand;
                if smp.uniform() < ratio * ratio {
                    break cand;
                }
            };
            // uniform tangent direction: project a sphere point off cdir
            let nu = loop {
                let x = smp.sphere_point(2);
                let v = x.sub(&cdir.scale(x.inner(&cdir).re));
                let vn = v.norm();
                if vn > 1e-6 {
                    break v.scale(vn.recip());
                }
            };
            let cand = cdir.scale(phi.cos()).add(&nu.scale(phi.sin()));
            if tree.dir_index_at(&cand, k) == cell.index {
                xi = Some(cand);
                break;
            }
        }
        let Some(xi) = xi else {
            return Err(QuadratureError::BadRegion {
                why: "direction patch starved the cap sampler",
            });
        };
        match restrict {
            None => {
                let (nv, ne) = boundary_layer(w, 2, r0, |r| g(&xi.scale(r)), opts, &evals);
                let (dv, de) = shared_den.unwrap();
                nums.push(nv);
                dens.push(dv);
                num_qerr.add(ne);
                den_qerr.add(de);
            }
            Some(reg) => {
                let mut nv = Neumaier::new();
                let mut dv = Neumaier::new();
                let contains = |p: &Point| reg.contains(p);
                for (a, b) in sections(&contains, &xi, lo, hi, opts.radial_grid, &evals) {
                    if b >= 1.0 {
                        if !w.is_integrable() {
                            return Err(QuadratureError::ZeroMeasure {
                                measure: f64::INFINITY,
                            });
                        }
                        let (v, e) = boundary_layer(w, 2, a, |r| g(&xi.scale(r)), opts, &evals);
                        nv.add(v);
                        num_qerr.add(e);
                        let (v, e) = boundary_layer(w, 2, a, |_| 1.0, opts, &evals);
                        dv.add(v);
                        den_qerr.add(e);
                    } else {
                        let (v, e) = adaptive_gl(
                            &mut |u| {
                                evals.set(evals.get() + 1);
                                let r = 1.0 - u;
                                rpow(r, 2) * w.density_at_distance(u) * g(&xi.scale(r))
                            },
                            1.0 - b,
                            1.0 - a,
                            opts.rtol * INNER,
                            0.0,
                            opts.max_depth,
                        );
                        nv.add(v);
                        num_qerr.add(e);
                        let (v, e) = adaptive_gl(
                            &mut |u| {
                                evals.set(evals.get() + 1);
                                rpow(1.0 - u, 2) * w.density_at_distance(u)
                            },
                            1.0 - b,
                            1.0 - a,
                            opts.rtol * INNER,
                            0.0,
                            opts.max_depth,
                        );
                        dv.add(v);
                        den_qerr.add(e);
                    }
                }
                nums.push(nv.value());
                dens.push(dv.value());
            }
        }
    }
    let sn: f64 = nums.iter().sum();
    let sd: f64 = dens.iter().sum();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(QuadratureError::ZeroMeasure {
            measure: 4.0 * sd / m as f64,
        });
    }
    let value = sn / sd;
    // delta-method standard error of the ratio over the shared sample
    let mut res2 = Neumaier::new();
    for i in 0..m {
        let r = nums[i] - value * dens[i];
        res2.add(r * r);
    }
    let dbar = sd / m as f64;
    let stderr = (res2.value() / (m as f64 * (m as f64 - 1.0))).sqrt() / dbar;
    let err = stderr + (num_qerr.value() + value.abs() * den_qerr.value()) / sd;
    Ok(finish(value, err, evals.get(), true, opts))
}
