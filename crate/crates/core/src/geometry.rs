//! Geometry of the unit ball 𝔹 ⊂ ℂⁿ: Möbius involutions, the Bergman metric,
//! radial projections, Carleson squares, and nonisotropic boundary discs.
//!
//! Conventions. The Hermitian pairing is ⟨z,w⟩ = Σᵢ zᵢ w̄ᵢ, the boundary
//! pseudo-metric is ρ(z,w) = |1 − ⟨z,w⟩|, and the Bergman metric is
//! β(z,w) = ½ log((1+|φ_z(w)|)/(1−|φ_z(w)|)) = atanh |φ_z(w)|. A Bergman
//! radius r corresponds to the pseudohyperbolic radius t = tanh r, so B(0,r)
//! is the Euclidean ball of radius tanh r and B(z,r) is the Möbius image
//! φ_z(B(0,r)), a Euclidean ellipsoid described by [`EuclideanBall`].
//! Lebesgue volume is normalized so that V(𝔹) = 1.

use core::fmt;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use smallvec::SmallVec;

use crate::rng::Sampler;

/// Interior points must satisfy |z| ≤ 1 − BOUNDARY_GUARD.
pub const BOUNDARY_GUARD: f64 = 1e-15;

type Coords = SmallVec<[Complex64; 2]>;

#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    coords: Coords,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GeometryError {
    /// |z| ≥ 1 − BOUNDARY_GUARD where an interior point was required.
    TooCloseToBoundary { norm: f64 },
    /// A direction was required but the point is the origin.
    ZeroDirection,
    /// Radius arguments must be positive and finite.
    BadRadius { radius: f64 },
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::TooCloseToBoundary { norm } => {
                write!(f, "point with |z| = {norm} is too close to the unit sphere")
            }
            GeometryError::ZeroDirection => write!(f, "the origin has no radial direction"),
            GeometryError::BadRadius { radius } => write!(f, "radius {radius} is not positive"),
        }
    }
}

impl core::error::Error for GeometryError {}

impl Point {
    pub fn new(coords: &[Complex64]) -> Self {
        assert!(
            !coords.is_empty() && coords.len() <= 8,
            "dimension must be in 1..=8"
        );
        Point {
            coords: SmallVec::from_slice(coords),
        }
    }

    pub fn one(z: Complex64) -> Self {
        Point::new(&[z])
    }

    pub fn from_re(x: f64) -> Self {
        Point::one(Complex64::new(x, 0.0))
    }

    pub fn from_polar(r: f64, theta: f64) -> Self {
        Point::one(Complex64::from_polar(r, theta))
    }

    pub fn two(z0: Complex64, z1: Complex64) -> Self {
        Point::new(&[z0, z1])
    }

    pub fn origin(n: usize) -> Self {
        assert!(n >= 1 && n <= 8);
        let mut coords = Coords::new();
        for _ in 0..n {
            coords.push(Complex64::new(0.0, 0.0));
        }
        Point { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords
    }

    /// First coordinate; the point for n = 1.
    pub fn z(&self) -> Complex64 {
        self.coords[0]
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// ⟨z,w⟩ = Σ zᵢ w̄ᵢ. Panics on dimension mismatch.
    pub fn inner(&self, w: &Point) -> Complex64 {
        assert_eq!(self.dim(), w.dim(), "dimension mismatch in ⟨z,w⟩");
        self.coords
            .iter()
            .zip(w.coords.iter())
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    pub fn scale(&self, t: f64) -> Point {
        Point {
            coords: self.coords.iter().map(|c| c * t).collect(),
        }
    }

    pub fn add(&self, w: &Point) -> Point {
        assert_eq!(self.dim(), w.dim());
        Point {
            coords: self
                .coords
                .iter()
                .zip(w.coords.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, w: &Point) -> Point {
        assert_eq!(self.dim(), w.dim());
        Point {
            coords: self
                .coords
                .iter()
                .zip(w.coords.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn is_interior(&self) -> bool {
        self.norm() <= 1.0 - BOUNDARY_GUARD
    }

    pub fn ensure_interior(&self) -> Result<(), GeometryError> {
        if self.is_interior() {
            Ok(())
        } else {
            Err(GeometryError::TooCloseToBoundary { norm: self.norm() })
        }
    }

    /// Euclidean distance.
    pub fn dist(&self, w: &Point) -> f64 {
        self.sub(w).norm()
    }
}

/// ρ(z,w) = |1 − ⟨z,w⟩| on the closed ball; symmetric since ⟨w,z⟩ = conj ⟨z,w⟩.
pub fn pseudo_metric(z: &Point, w: &Point) -> f64 {
    (Complex64::new(1.0, 0.0) - z.inner(w)).norm()
}

/// The Möbius involution φ_z exchanging z and 0:
/// φ_z(w) = (z − P_z w − s_z Q_z w) / (1 − ⟨w,z⟩) with s_z = √(1−|z|²).
///
/// Requires z interior; w may lie on the closed ball. φ_0 = −id.
pub fn mobius(z: &Point, w: &Point) -> Result<Point, GeometryError> {
    z.ensure_interior()?;
    assert_eq!(z.dim(), w.dim());
    let zz = z.norm_sq();
    if zz == 0.0 {
        return Ok(w.scale(-1.0));
    }
    let wz = w.inner(z);
    let denom = Complex64::new(1.0, 0.0) - wz;
    let s = (1.0 - zz).sqrt();
    // P_z w = (⟨w,z⟩/⟨z,z⟩) z, Q_z w = w − P_z w.
    let proj = wz / zz;
    let coords: Coords = z
        .coords
        .iter()
        .zip(w.coords.iter())
        .map(|(zi, wi)| {
            let p = proj * zi;
            let q = wi - p;
            (zi - p - s * q) / denom
        })
        .collect();
    Ok(Point { coords })
}

/// |φ_z(w)|, the pseudohyperbolic distance.
pub fn pseudohyperbolic(z: &Point, w: &Point) -> Result<f64, GeometryError> {
    Ok(mobius(z, w)?.norm())
}

/// β(z,w) = atanh |φ_z(w)|. Requires both points interior.
pub fn bergman_distance(z: &Point, w: &Point) -> Result<f64, GeometryError> {
    z.ensure_interior()?;
    w.ensure_interior()?;
    let m = pseudohyperbolic(z, w)?;
    if m >= 1.0 {
        return Err(GeometryError::TooCloseToBoundary { norm: m });
    }
    Ok(m.atanh())
}

/// P z = z/|z| onto the unit sphere.
pub fn radial_projection_sphere(z: &Point) -> Result<Point, GeometryError> {
    let norm = z.norm();
    if norm < 1e-300 {
        return Err(GeometryError::ZeroDirection);
    }
    Ok(z.scale(norm.recip()))
}

/// P_r z = tanh(r)·z/|z| onto the Bergman sphere {β(0,·) = r}, so |P_r z| = tanh r.
pub fn radial_projection_bergman_sphere(z: &Point, r: f64) -> Result<Point, GeometryError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(GeometryError::BadRadius { radius: r });
    }
    Ok(radial_projection_sphere(z)?.scale(r.tanh()))
}

/// Euclidean description of a Bergman ball B(z,r): an ellipsoid with center
/// `center`, radius `r_line` along the complex line ℂz and radius
/// `r_transverse` in the 2(n−1) orthogonal real directions.
#[derive(Clone, Debug)]
pub struct EuclideanBall {
    pub center: Point,
    pub r_line: f64,
    pub r_transverse: f64,
}

impl EuclideanBall {
    /// Normalized Lebesgue volume r_line² · r_transverse^{2(n−1)}.
    pub fn volume(&self, n: usize) -> f64 {
        self.r_line * self.r_line * self.r_transverse.powi(2 * (n as i32 - 1))
    }
}

#[derive(Clone, Debug)]
pub struct BergmanBall {
    pub center: Point,
    /// Bergman-metric radius.
    pub radius: f64,
}

impl BergmanBall {
    pub fn new(center: Point, radius: f64) -> Result<Self, GeometryError> {
        center.ensure_interior()?;
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::BadRadius { radius });
        }
        Ok(BergmanBall { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// Membership via |φ_center(w)| < tanh(radius); avoids atanh at the rim.
    pub fn contains(&self, w: &Point) -> bool {
        if w.norm() >= 1.0 {
            return false;
        }
        match pseudohyperbolic(&self.center, w) {
            Ok(m) => m < self.radius.tanh(),
            Err(_) => false,
        }
    }

    /// The ellipsoid φ_z(B_E(0, tanh r)): center (1−t²)/(1−t²|z|²)·z,
    /// line radius t(1−|z|²)/(1−t²|z|²), transverse radius t√((1−|z|²)/(1−t²|z|²)).
    pub fn euclidean(&self) -> EuclideanBall {
        let t = self.radius.tanh();
        let zz = self.center.norm_sq();
        let denom = 1.0 - t * t * zz;
        EuclideanBall {
            center: self.center.scale((1.0 - t * t) / denom),
            r_line: t * (1.0 - zz) / denom,
            r_transverse: t * ((1.0 - zz) / denom).sqrt(),
        }
    }

    /// Closed-form normalized Lebesgue volume; V(B(0,r)) = tanh(r)^{2n}.
    pub fn volume_lebesgue(&self) -> f64 {
        self.euclidean().volume(self.dim())
    }

    /// Uniform sample w.r.t. the pullback of the Euclidean measure on B(0,tanh r):
    /// exact membership, not volume-uniform in B(z,r) itself.
    pub fn sample(&self, sampler: &mut Sampler) -> Point {
        let u = sampler.euclidean_ball_point(self.dim(), self.radius.tanh());
        mobius(&self.center, &u).expect("center is interior")
    }
}

/// Carleson square S(z) = {ζ ∈ 𝔹 : Pζ ∈ Q_z, |z| < |ζ| < 1} with
/// Q_z = D(Pz, 1−|z|); S(0) = 𝔹.
#[derive(Clone, Debug)]
pub struct CarlesonSquare {
    pub apex: Point,
}

impl CarlesonSquare {
    pub fn new(apex: Point) -> Result<Self, GeometryError> {
        apex.ensure_interior()?;
        Ok(CarlesonSquare { apex })
    }

    pub fn dim(&self) -> usize {
        self.apex.dim()
    }

    pub fn is_whole_ball(&self) -> bool {
        self.apex.norm_sq() == 0.0
    }

    pub fn contains(&self, w: &Point) -> bool {
        let wn = w.norm();
        if wn >= 1.0 {
            return false;
        }
        if self.is_whole_ball() {
            return true;
        }
        let an = self.apex.norm();
        if wn <= an {
            return false;
        }
        let pa = self.apex.scale(an.recip());
        let pw = w.scale(wn.recip());
        pseudo_metric(&pw, &pa) < 1.0 - an
    }

    /// n = 1 only: the half-angle of the boundary cap, 2·asin((1−|z|)/2).
    pub fn angular_halfwidth(&self) -> Option<f64> {
        if self.dim() != 1 || self.is_whole_ball() {
            return None;
        }
        Some(2.0 * ((1.0 - self.apex.norm()) / 2.0).asin())
    }
}

/// Nonisotropic boundary disc D(ξ, r) = {η ∈ 𝕊 : ρ(ξ,η) < r}.
#[derive(Clone, Debug)]
pub struct NonisotropicDisc {
    /// Unit vector.
    pub center: Point,
    pub radius: f64,
}

impl NonisotropicDisc {
    pub fn new(center: &Point, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::BadRadius { radius });
        }
        Ok(NonisotropicDisc {
            center: radial_projection_sphere(center)?,
            radius,
        })
    }

    pub fn contains(&self, xi: &Point) -> bool {
        pseudo_metric(&self.center, xi) < self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn empty() -> Self {
        MinMax {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn push(&mut self, v: f64) {
        if v < self.min {
            self.min = v;
        }
        if v > self.max {
            self.max = v;
        }
    }

    pub fn spread(&self) -> f64 {
        self.max / self.min
    }
}

#[derive(Clone, Debug)]
pub struct ComparabilityProbe {
    /// V(B(z,r)) / (1−|z|²)^{n+1} along the boundary sweep.
    pub volume_ratio: MinMax,
    /// |1 − ⟨z,ζ⟩| / (1−|z|²) over sampled ζ ∈ B(z,r) along the sweep.
    pub pairing_ratio: MinMax,
    pub centers_probed: usize,
}

/// Sweeps centers z_j with 1−|z_j| = (1−|z|)·2^{−j} along the direction of `z`
/// (j = 0..shells) and records the two comparability ratios; both must stay in
/// a fixed window depending only on r for the estimates to hold.
pub fn comparability_probe(
    z: &Point,
    r: f64,
    shells: u32,
    samples: u32,
    seed: u64,
) -> Result<ComparabilityProbe, GeometryError> {
    z.ensure_interior()?;
    if !(r > 0.0) || !r.is_finite() {
        return Err(GeometryError::BadRadius { radius: r });
    }
    let dir = radial_projection_sphere(z)?;
    let n = z.dim();
    let gap0 = 1.0 - z.norm();
    let mut sampler = Sampler::new(seed);
    let mut probe = ComparabilityProbe {
        volume_ratio: MinMax::empty(),
        pairing_ratio: MinMax::empty(),
        centers_probed: 0,
    };
    for j in 0..=shells {
        let gap = gap0 * 0.5f64.powi(j as i32);
        let center = dir.scale(1.0 - gap);
        if !center.is_interior() {
            break;
        }
        let ball = BergmanBall::new(center.clone(), r)?;
        let one_minus_sq = 1.0 - center.norm_sq();
        probe
            .volume_ratio
            .push(ball.volume_lebesgue() / one_minus_sq.powi(n as i32 + 1));
        for _ in 0..samples {
            let zeta = ball.sample(&mut sampler);
            let rho = pseudo_metric(&center, &zeta);
            probe.pairing_ratio.push(rho / one_minus_sq);
        }
        probe.centers_probed += 1;
    }
    Ok(probe)
}
