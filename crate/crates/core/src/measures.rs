//! Positive Borel measures on the disc and ball: weighted densities
//! dμ = h ω dV, indicator restrictions dμ = 1_G ω dV, and finite atomic
//! sums. These are the μ that testing conditions get evaluated against, so
//! the two density representations deliberately run through different
//! machinery: indicator sets ride the exact slice algebra (intersection
//! regions), while a density carrying an indicator factor is integrated by
//! the membership-oracle sampler. Their agreement is a standing
//! cross-check, not a tautology.
//!
//! Total mass is checked at construction; a measure that cannot certify a
//! finite μ(𝔹) is rejected rather than carried along silently.

use alloc::vec::Vec;
use core::fmt;

use crate::dyadic::{BergmanTree, CellRef};
use crate::geometry::Point;
use crate::quadrature::{
    disc_tent_region, oracle_volume, tent_average as quad_tent_average, tent_volume, volume,
    weighted_integral, QuadOpts, QuadratureError, QuadratureResult, Region,
};
use crate::weights::RadialWeight;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureError {
    /// μ(𝔹) is not finite (or could not be certified finite).
    InfiniteMass { mass: f64 },
    EmptyAtoms,
    BadAtom { index: usize, why: &'static str },
    DimensionMismatch { left: usize, right: usize },
    /// μ(region) = 0: the caller is averaging over an empty testing cell.
    ZeroMass { mass: f64 },
    Quadrature(QuadratureError),
}

impl fmt::Display for MeasureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureError::InfiniteMass { mass } => {
                write!(f, "measure has non-finite total mass {mass}")
            }
            MeasureError::EmptyAtoms => write!(f, "atomic measure needs at least one atom"),
            MeasureError::BadAtom { index, why } => write!(f, "atom {index}: {why}"),
            MeasureError::DimensionMismatch { left, right } => {
                write!(f, "dimension mismatch: {left} vs {right}")
            }
            MeasureError::ZeroMass { mass } => {
                write!(f, "region carries measure {mass}, average undefined")
            }
            MeasureError::Quadrature(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for MeasureError {}

impl From<QuadratureError> for MeasureError {
    fn from(e: QuadratureError) -> Self {
        MeasureError::Quadrature(e)
    }
}

/// One point mass.
#[derive(Clone, Debug)]
pub struct Atom {
    pub point: Point,
    pub mass: f64,
}

/// The density factor h in dμ = h ω dV.
#[derive(Clone, Debug)]
pub enum Density {
    One,
    Indicator(Region),
}

impl Density {
    fn eval(&self, p: &Point) -> f64 {
        match self {
            Density::One => 1.0,
            Density::Indicator(g) => {
                if g.contains(p) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Kind {
    WeightedDensity { h: Density, base: RadialWeight },
    IndicatorSet { region: Region, base: RadialWeight },
    Atomic { atoms: Vec<Atom> },
}

/// A positive finite Borel measure, immutable after construction.
#[derive(Clone, Debug)]
pub struct Measure {
    n: usize,
    kind: Kind,
    total: QuadratureResult,
}

impl Measure {
    /// dμ = ω dV.
    pub fn weighted(
        n: usize,
        base: RadialWeight,
        opts: &QuadOpts,
    ) -> Result<Measure, MeasureError> {
        Measure::with_density(n, Density::One, base, opts)
    }

    /// dμ = h ω dV with h ∈ {1, 1_G}; the indicator variant is evaluated by
    /// the membership-oracle route.
    pub fn with_density(
        n: usize,
        h: Density,
        base: RadialWeight,
        opts: &QuadOpts,
    ) -> Result<Measure, MeasureError> {
        if let Density::Indicator(g) = &h {
            if g.dim() != n {
                return Err(MeasureError::DimensionMismatch {
                    left: n,
                    right: g.dim(),
                });
            }
        }
        let kind = Kind::WeightedDensity { h, base };
        let total = eval_on_region(n, &kind, &Region::whole(n)?, opts)?;
        if !total.value.is_finite() {
            return Err(MeasureError::InfiniteMass { mass: total.value });
        }
        Ok(Measure { n, kind, total })
    }

    /// dμ = 1_G ω dV, evaluated by exact slice intersections.
    pub fn indicator(
        region: Region,
        base: RadialWeight,
        opts: &QuadOpts,
    ) -> Result<Measure, MeasureError> {
        let n = region.dim();
        let kind = Kind::IndicatorSet { region, base };
        let total = eval_on_region(n, &kind, &Region::whole(n)?, opts)?;
        if !total.value.is_finite() {
            return Err(MeasureError::InfiniteMass { mass: total.value });
        }
        Ok(Measure { n, kind, total })
    }

    /// A finite sum of point masses at interior points.
    pub fn atomic(atoms: Vec<Atom>) -> Result<Measure, MeasureError> {
        if atoms.is_empty() {
            return Err(MeasureError::EmptyAtoms);
        }
        let n = atoms[0].point.dim();
        let mut total = 0.0;
        for (index, a) in atoms.iter().enumerate() {
            if a.point.dim() != n {
                return Err(MeasureError::BadAtom {
                    index,
                    why: "mixed dimensions",
                });
            }
            if a.point.ensure_interior().is_err() {
                return Err(MeasureError::BadAtom {
                    index,
                    why: "atom not in the open ball",
                });
            }
            if !(a.mass > 0.0) || !a.mass.is_finite() {
                return Err(MeasureError::BadAtom {
                    index,
                    why: "mass must be positive and finite",
                });
            }
            total += a.mass;
        }
        let count = atoms.len() as u64;
        Ok(Measure {
            n,
            kind: Kind::Atomic { atoms },
            total: QuadratureResult {
                value: total,
                abs_err: total * 1e-14,
                converged: true,
                evals: count,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// μ(𝔹), fixed at construction.
    pub fn total_mass(&self) -> QuadratureResult {
        self.total
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.kind, Kind::Atomic { .. })
    }

    pub fn atoms(&self) -> Option<&[Atom]> {
        match &self.kind {
            Kind::Atomic { atoms } => Some(atoms),
            _ => None,
        }
    }

    /// μ(region).
    pub fn measure_of(
        &self,
        region: &Region,
        opts: &QuadOpts,
    ) -> Result<QuadratureResult, MeasureError> {
        if region.dim() != self.n {
            return Err(MeasureError::DimensionMismatch {
                left: self.n,
                right: region.dim(),
            });
        }
        eval_on_region(self.n, &self.kind, region, opts)
    }

    /// μ(T(K)) for a tree cell's tent. Disc tents are exact regions; ball
    /// tents use the exact radial-by-directional product for plain weighted
    /// measures and the membership oracle otherwise.
    pub fn measure_of_tent(
        &self,
        tree: &BergmanTree,
        cell: CellRef,
        opts: &QuadOpts,
    ) -> Result<QuadratureResult, MeasureError> {
        if tree.dim() != self.n {
            return Err(MeasureError::DimensionMismatch {
                left: self.n,
                right: tree.dim(),
            });
        }
        match &self.kind {
            Kind::Atomic { atoms } => {
                let mut sum = 0.0;
                let mut hits = 0u64;
                for a in atoms {
                    if tree.tent_contains(cell, &a.point) {
                        sum += a.mass;
                        hits += 1;
                    }
                }
                Ok(atomic_result(sum, hits))
            }
            _ if self.n == 1 => {
                let reg = disc_tent_region(tree, cell)?;
                eval_on_region(self.n, &self.kind, &reg, opts)
            }
            Kind::WeightedDensity {
                h: Density::One,
                base,
            } => Ok(tent_volume(base, tree, cell, opts)?),
            _ => {
                let r0 = if cell.band == 0 {
                    0.0
                } else {
                    (cell.band as f64 * tree.theta()).tanh()
                };
                let base = self.base_weight();
                let kind = &self.kind;
                oracle_volume(
                    base,
                    self.n,
                    (r0, 1.0),
                    |p| tree.tent_contains(cell, p) && kind_contains(kind, p),
                    opts,
                )
                .map_err(MeasureError::from)
            }
        }
    }

    /// μ(K) for the cell itself (its band slab), the building block of the
    /// level-additivity check.
    pub fn measure_of_cell(
        &self,
        tree: &BergmanTree,
        cell: CellRef,
        opts: &QuadOpts,
    ) -> Result<QuadratureResult, MeasureError> {
        if tree.dim() != self.n {
            return Err(MeasureError::DimensionMismatch {
                left: self.n,
                right: tree.dim(),
            });
        }
        match &self.kind {
            Kind::Atomic { atoms } => {
                let mut sum = 0.0;
                let mut hits = 0u64;
                for a in atoms {
                    if tree.cell_contains(cell, &a.point) {
                        sum += a.mass;
                        hits += 1;
                    }
                }
                Ok(atomic_result(sum, hits))
            }
            _ => {
                let theta = tree.theta();
                let r0 = if cell.band == 0 {
                    0.0
                } else {
                    (cell.band as f64 * theta).tanh()
                };
                let r1 = ((cell.band + 1) as f64 * theta).tanh();
                if self.n == 1 {
                    let tent = disc_tent_region(tree, cell)?;
                    let slab = match tent {
                        Region::Sector { a_lo, a_hi, .. } => {
                            Region::sector(r0.max(1e-300), r1, a_lo, a_hi)?
                        }
                        other => other,
                    };
                    let slab = if cell.band == 0 {
                        Region::annulus(1, 0.0, r1)?
                    } else {
                        slab
                    };
                    eval_on_region(self.n, &self.kind, &slab, opts)
                } else {
                    let base = self.base_weight();
                    let kind = &self.kind;
                    oracle_volume(
                        base,
                        self.n,
                        (r0, r1),
                        |p| tree.cell_contains(cell, p) && kind_contains(kind, p),
                        opts,
                    )
                    .map_err(MeasureError::from)
                }
            }
        }
    }

    /// ∫_region g dμ.
    pub fn integral<F: Fn(&Point) -> f64>(
        &self,
        region: &Region,
        g: F,
        opts: &QuadOpts,
    ) -> Result<QuadratureResult, MeasureError> {
        if region.dim() != self.n {
            return Err(MeasureError::DimensionMismatch {
                left: self.n,
                right: region.dim(),
            });
        }
        match &self.kind {
            Kind::Atomic { atoms } => {
                let mut sum = 0.0;
                let mut hits = 0u64;
                for a in atoms {
                    if region.contains(&a.point) {
                        sum += a.mass * g(&a.point);
                        hits += 1;
                    }
                }
                let mut out = atomic_result(sum, hits);
                out.abs_err = sum.abs() * 1e-14;
                Ok(out)
            }
            Kind::WeightedDensity { h, base } => {
                let ha = h.clone();
                Ok(weighted_integral(
                    base,
                    region,
                    |p| ha.eval(p) * g(p),
                    opts,
                )?)
            }
            Kind::IndicatorSet { region: g_set, base } => {
                let both =
                    Region::intersection(alloc::vec![g_set.clone(), region.clone()])?;
                Ok(weighted_integral(base, &both, g, opts)?)
            }
        }
    }

    /// ⟨g⟩_{μ, region} = μ(region)^{-1} ∫_region g dμ. Zero measure is an
    /// error: the caller skips that testing cell.
    pub fn average<F: Fn(&Point) -> f64>(
        &self,
        region: &Region,
        g: F,
        opts: &QuadOpts,
    ) -> Result<QuadratureResult, MeasureError> {
        let mass = self.measure_of(region, opts)?;
        if !(mass.value > 0.0) || !mass.value.is_finite() {
            return Err(MeasureError::ZeroMass { mass: mass.value });
        }
        let num = self.integral(region, g, opts)?;
        let value = num.value / mass.value;
        let abs_err = (num.abs_err + value.abs() * mass.abs_err) / mass.value;
        Ok(QuadratureResult {
            value,
            abs_err,
            converged: num.converged && mass.converged,
            evals: num.evals + mass.evals,
        })
    }

    /// ⟨g⟩_{μ, T(K)} for a tree cell's tent. Atomic measures average exactly
    /// over their atoms in the tent; disc tents go through the exact sector
    /// region; ball tents ride the radial-by-directional product with the
    /// density folded in as a restriction. Empty tents are `ZeroMass` errors.
    pub fn tent_average<F: Fn(&Point) -> f64>(
        &self,
        tree: &BergmanTree,
        cell: CellRef,
        g: F,
        opts: &QuadOpts,
    ) -> Result<QuadratureResult, MeasureError> {
        if tree.dim() != self.n {
            return Err(MeasureError::DimensionMismatch {
                left: self.n,
                right: tree.dim(),
            });
        }
        let quad = match &self.kind {
            Kind::Atomic { atoms } => {
                let mut mass = 0.0;
                let mut sum = 0.0;
                let mut hits = 0u64;
                for a in atoms {
                    if tree.tent_contains(cell, &a.point) {
                        mass += a.mass;
                        sum += a.mass * g(&a.point);
                        hits += 1;
                    }
                }
                if !(mass > 0.0) {
                    return Err(MeasureError::ZeroMass { mass });
                }
                return Ok(atomic_result(sum / mass, hits));
            }
            _ if self.n == 1 => {
                let reg = disc_tent_region(tree, cell)?;
                return self.average(&reg, g, opts);
            }
            Kind::WeightedDensity { h, base } => {
                let restrict = match h {
                    Density::One => None,
                    Density::Indicator(set) => Some(set),
                };
                quad_tent_average(base, tree, cell, restrict, g, opts)
            }
            Kind::IndicatorSet { region, base } => {
                quad_tent_average(base, tree, cell, Some(region), g, opts)
            }
        };
        match quad {
            Ok(r) => Ok(r),
            Err(QuadratureError::ZeroMeasure { measure }) => {
                Err(MeasureError::ZeroMass { mass: measure })
            }
            Err(e) => Err(e.into()),
        }
    }

    fn base_weight(&self) -> &RadialWeight {
        match &self.kind {
            Kind::WeightedDensity { base, .. } | Kind::IndicatorSet { base, .. } => base,
            Kind::Atomic { .. } => unreachable!("atomic measures have no base weight"),
        }
    }
}

fn atomic_result(sum: f64, evals: u64) -> QuadratureResult {
    QuadratureResult {
        value: sum,
        abs_err: sum.abs() * 1e-14,
        converged: true,
        evals,
    }
}

fn kind_contains(kind: &Kind, p: &Point) -> bool {
    match kind {
        Kind::WeightedDensity { h, .. } => h.eval(p) > 0.0,
        Kind::IndicatorSet { region, .. } => region.contains(p),
        Kind::Atomic { .. } => false,
    }
}

fn eval_on_region(
    n: usize,
    kind: &Kind,
    region: &Region,
    opts: &QuadOpts,
) -> Result<QuadratureResult, MeasureError> {
    match kind {
        Kind::Atomic { atoms } => {
            let mut sum = 0.0;
            let mut hits = 0u64;
            for a in atoms {
                if region.contains(&a.point) {
                    sum += a.mass;
                    hits += 1;
                }
            }
            Ok(atomic_result(sum, hits))
        }
        Kind::WeightedDensity { h, base } => match h {
            Density::One => Ok(volume(base, region, opts)?),
            Density::Indicator(g) => {
                let (a1, b1) = region.radial_support();
                let (a2, b2) = g.radial_support();
                let support = (a1.max(a2), b1.min(b2));
                oracle_volume(
                    base,
                    n,
                    support,
                    |p| region.contains(p) && g.contains(p),
                    opts,
                )
                .map_err(MeasureError::from)
            }
        },
        Kind::IndicatorSet { region: g, base } => {
            let both = Region::intersection(alloc::vec![g.clone(), region.clone()])?;
            Ok(volume(base, &both, opts)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{DyadicFamily, TreeParams};
    use crate::numerics::Neumaier;
    use crate::rng::Sampler;
    use num_complex::Complex64;

    fn opts() -> QuadOpts {
        QuadOpts::default()
    }

    fn w_alpha(a: f64) -> RadialWeight {
        RadialWeight::pow_alpha(a).unwrap()
    }

    fn atom(re: f64, im: f64, mass: f64) -> Atom {
        Atom {
            point: Point::one(Complex64::new(re, im)),
            mass,
        }
    }

    #[test]
    fn atomic_measures_count_exactly() {
        let mu = Measure::atomic(alloc::vec![
            atom(0.0, 0.0, 1.0),
            atom(0.5, 0.2, 2.0),
            atom(-0.3, 0.6, 0.5),
        ])
        .unwrap();
        assert_eq!(mu.total_mass().value, 3.5);
        // the origin atom alone sits inside a small central ball
        let center = Region::ball(Point::one(Complex64::new(0.0, 0.0)), 0.2).unwrap();
        let m = mu.measure_of(&center, &opts()).unwrap();
        assert_eq!(m.value, 1.0);
        // B(0, 1) in the Bergman metric contains the origin and 0.5+0.2i
        // (|z| = 0.539 > tanh 1... it does not); check against membership
        let big = Region::ball(Point::one(Complex64::new(0.0, 0.0)), 1.0).unwrap();
        let expect: f64 = [
            (0.0f64, 0.0f64, 1.0f64),
            (0.5, 0.2, 2.0),
            (-0.3, 0.6, 0.5),
        ]
        .iter()
        .filter(|(re, im, _)| (re * re + im * im).sqrt() < 1.0f64.tanh())
        .map(|(_, _, m)| m)
        .sum();
        let m = mu.measure_of(&big, &opts()).unwrap();
        assert_eq!(m.value, expect);
        // averages evaluate g at the atoms
        let avg = mu
            .average(&center, |p| 3.0 * p.coords()[0].re + 1.0, &opts())
            .unwrap();
        assert!((avg.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn indicator_annulus_matches_normalized_area() {
        let mu = Measure::indicator(
            Region::annulus(1, 0.5, 1.0).unwrap(),
            w_alpha(0.0),
            &opts(),
        )
        .unwrap();
        let whole = Region::whole(1).unwrap();
        let m = mu.measure_of(&whole, &opts()).unwrap();
        assert!((m.value - 0.75).abs() < 1e-12, "annulus mass {}", m.value);
        assert!((mu.total_mass().value - 0.75).abs() < 1e-12);
    }

    #[test]
    fn density_and_indicator_representations_agree() {
        let base = w_alpha(0.5);
        let g = Region::annulus(1, 0.3, 0.8).unwrap();
        let o = opts();
        let ind = Measure::indicator(g.clone(), base.clone(), &o).unwrap();
        let den =
            Measure::with_density(1, Density::Indicator(g), base, &o).unwrap();
        let probes = [
            Region::whole(1).unwrap(),
            Region::sector(0.1, 0.9, 0.5, 2.5).unwrap(),
            Region::square(Point::one(Complex64::new(0.2, 0.25))).unwrap(),
            Region::ball(Point::one(Complex64::new(0.4, -0.1)), 1.0).unwrap(),
            Region::halfplane(1, 0.1).unwrap(),
        ];
        for reg in &probes {
            let a = ind.measure_of(reg, &o).unwrap();
            let b = den.measure_of(reg, &o).unwrap();
            let tol = 4.0 * (a.abs_err + b.abs_err) + 3e-2 * a.value.max(1e-6);
            assert!(
                (a.value - b.value).abs() < tol,
                "representations differ: {} vs {} (err {} / {})",
                a.value,
                b.value,
                a.abs_err,
                b.abs_err
            );
        }
        // same story in the ball
        let base2 = w_alpha(1.0);
        let g2 = Region::annulus(2, 0.2, 0.7).unwrap();
        let mut o2 = opts();
        o2.sphere_samples = 1024;
        let ind2 = Measure::indicator(g2.clone(), base2.clone(), &o2).unwrap();
        let den2 = Measure::with_density(2, Density::Indicator(g2), base2, &o2).unwrap();
        let reg2 = Region::square(Point::two(
            Complex64::new(0.3, 0.1),
            Complex64::new(0.0, 0.2),
        ))
        .unwrap();
        let a = ind2.measure_of(&reg2, &o2).unwrap();
        let b = den2.measure_of(&reg2, &o2).unwrap();
        assert!(
            (a.value - b.value).abs() < 4.0 * (a.abs_err + b.abs_err) + 3e-2 * a.value,
            "ball representations differ: {} vs {}",
            a.value,
            b.value
        );
    }

    #[test]
    fn level_sums_add_up_for_atoms_and_densities() {
        let family = DyadicFamily::build(TreeParams::disc(0.5, 7)).unwrap();
        let tree = family.tree(0);
        let o = opts();
        // atoms, some placed exactly on cell boundaries in angle and radius
        let mut atoms = Vec::new();
        let mut s = Sampler::new(42);
        for _ in 0..40 {
            let p = s.interior_point(1, 0.999);
            atoms.push(Atom {
                point: p,
                mass: 0.1 + s.uniform(),
            });
        }
        let band = 3u32;
        let m = tree.cells(band).len() as u32;
        let r0 = (band as f64 * tree.theta()).tanh();
        let r1 = ((band + 1) as f64 * tree.theta()).tanh();
        atoms.push(atom(r0, 0.0, 1.0)); // radially on the slab's lower edge
        let boundary_angle = core::f64::consts::TAU * 3.0 / m as f64;
        atoms.push(Atom {
            point: Point::from_polar(0.5 * (r0 + r1), boundary_angle),
            mass: 2.0,
        });
        let mu = Measure::atomic(atoms.clone()).unwrap();
        let mut level = Neumaier::new();
        for index in 0..m {
            let cell = CellRef { grid: 0, band, index };
            level.add(mu.measure_of_cell(tree, cell, &o).unwrap().value);
        }
        // the locator's half-open convention decides edge atoms, so the
        // direct count must ask it rather than compare radii
        let direct: f64 = atoms
            .iter()
            .filter(|a| tree.locate(&a.point).last().unwrap().band == band)
            .map(|a| a.mass)
            .sum();
        assert!(
            (level.value() - direct).abs() < 1e-12 * direct.max(1.0),
            "atomic level sum {} vs direct {direct}",
            level.value()
        );

        // plain weighted measure: level sum equals the slab mass exactly
        let w = w_alpha(0.7);
        let muw = Measure::weighted(1, w.clone(), &o).unwrap();
        let mut level = Neumaier::new();
        for index in 0..m {
            let cell = CellRef { grid: 0, band, index };
            level.add(muw.measure_of_cell(tree, cell, &o).unwrap().value);
        }
        let slab = 2.0 * w.radial_mass(r0, r1, 1);
        assert!(
            (level.value() - slab).abs() < 1e-12 * slab,
            "weighted level sum {} vs slab {slab}",
            level.value()
        );
    }

    #[test]
    fn tent_measures_agree_across_routes() {
        let family = DyadicFamily::build(TreeParams::disc(0.5, 6)).unwrap();
        let tree = family.tree(0);
        let o = opts();
        let w = w_alpha(0.5);
        let mu = Measure::weighted(1, w.clone(), &o).unwrap();
        for (band, index) in [(1u32, 1u32), (4, 9), (6, 50)] {
            let cell = CellRef { grid: 0, band, index };
            let via_measure = mu.measure_of_tent(tree, cell, &o).unwrap();
            let via_quad = tent_volume(&w, tree, cell, &o).unwrap();
            assert!(
                (via_measure.value - via_quad.value).abs() < 1e-12 * via_quad.value,
                "tent routes differ: {} vs {}",
                via_measure.value,
                via_quad.value
            );
        }
        // atoms inside/outside a tent
        let cell = CellRef { grid: 0, band: 2, index: 1 };
        let (r0, a_lo, a_hi) = tree.tent_sector(cell);
        let mid = 0.5 * (a_lo + a_hi);
        let inside = Point::from_polar(0.5 * (r0 + 1.0), mid);
        let outside = Point::from_polar(0.5 * r0, mid);
        let mua = Measure::atomic(alloc::vec![
            Atom { point: inside, mass: 3.0 },
            Atom { point: outside, mass: 5.0 },
        ])
        .unwrap();
        let m = mua.measure_of_tent(tree, cell, &o).unwrap();
        assert_eq!(m.value, 3.0);
    }

    #[test]
    fn ball_tent_measures_cross_check() {
        let mut params = TreeParams::ball(0.5, 3);
        params.grids = 1;
        params.pool = 30_000;
        let family = DyadicFamily::build(params).unwrap();
        let tree = family.tree(0);
        let mut o = opts();
        o.sphere_samples = 2048;
        let w = w_alpha(1.0);
        let mu = Measure::weighted(2, w.clone(), &o).unwrap();
        let muw = Measure::indicator(Region::whole(2).unwrap(), w.clone(), &o).unwrap();
        let cell = CellRef { grid: 0, band: 2, index: 0 };
        let direct = mu.measure_of_tent(tree, cell, &o).unwrap();
        let via_oracle = muw.measure_of_tent(tree, cell, &o).unwrap();
        assert!(
            (direct.value - via_oracle.value).abs()
                < 4.0 * (direct.abs_err + via_oracle.abs_err) + 3e-2 * direct.value,
            "ball tent: product {} vs oracle {}",
            direct.value,
            via_oracle.value
        );
    }

    #[test]
    fn tent_averages_run_every_representation() {
        let family = DyadicFamily::build(TreeParams::disc(0.5, 6)).unwrap();
        let tree = family.tree(0);
        let o = opts();
        let cell = CellRef { grid: 0, band: 2, index: 1 };
        let (r0, a_lo, a_hi) = tree.tent_sector(cell);
        let mid = 0.5 * (a_lo + a_hi);

        // atoms: mass-weighted evaluation over the atoms inside the tent
        let inside1 = Point::from_polar(0.5 * (r0 + 1.0), mid);
        let inside2 = Point::from_polar(0.25 * r0 + 0.75, mid);
        let outside = Point::from_polar(0.5 * r0, mid);
        let mua = Measure::atomic(alloc::vec![
            Atom { point: inside1.clone(), mass: 1.0 },
            Atom { point: inside2.clone(), mass: 3.0 },
            Atom { point: outside, mass: 7.0 },
        ])
        .unwrap();
        let avg = mua.tent_average(tree, cell, |p| p.norm(), &o).unwrap();
        let expect = (inside1.norm() + 3.0 * inside2.norm()) / 4.0;
        assert!((avg.value - expect).abs() < 1e-14);
        let empty = CellRef { grid: 0, band: 6, index: 0 };
        let miss = mua.tent_average(tree, empty, |p| p.norm(), &o);
        assert!(matches!(miss, Err(MeasureError::ZeroMass { .. })));

        // disc: indicator and density representations agree on tent averages
        let base = w_alpha(0.5);
        let gset = Region::annulus(1, 0.3, 0.95).unwrap();
        let ind = Measure::indicator(gset.clone(), base.clone(), &o).unwrap();
        let den = Measure::with_density(1, Density::Indicator(gset), base, &o).unwrap();
        let g = |p: &Point| 1.0 + p.coords()[0].re;
        let a = ind.tent_average(tree, cell, g, &o).unwrap();
        let b = den.tent_average(tree, cell, g, &o).unwrap();
        assert!(
            (a.value - b.value).abs() < 4.0 * (a.abs_err + b.abs_err) + 3e-2 * a.value.abs(),
            "tent average routes differ: {} vs {}",
            a.value,
            b.value
        );
    }

    #[test]
    fn ball_tent_averages_respect_indicator_restrictions() {
        let mut params = TreeParams::ball(0.5, 3);
        params.grids = 1;
        params.pool = 30_000;
        let family = DyadicFamily::build(params).unwrap();
        let tree = family.tree(0);
        let mut o = opts();
        o.sphere_samples = 128;
        let cell = CellRef { grid: 0, band: 2, index: 0 };
        let r0 = (2.0 * tree.theta()).tanh();

        let mu = Measure::indicator(
            Region::annulus(2, 0.5, 0.95).unwrap(),
            w_alpha(0.0),
            &o,
        )
        .unwrap();
        let lo = r0.max(0.5);
        let expect = ((0.95f64.powi(6) - lo.powi(6)) / 6.0)
            / ((0.95f64.powi(4) - lo.powi(4)) / 4.0);
        let a = mu.tent_average(tree, cell, |p| p.norm_sq(), &o).unwrap();
        assert!(
            (a.value - expect).abs() < 2e-6 * expect,
            "indicator tent moment {} vs {expect}",
            a.value
        );

        // an indicator living strictly below the tent leaves nothing to average
        let low = Measure::indicator(
            Region::annulus(2, 0.0, 0.2).unwrap(),
            w_alpha(0.0),
            &o,
        )
        .unwrap();
        assert!(matches!(
            low.tent_average(tree, cell, |_| 1.0, &o),
            Err(MeasureError::ZeroMass { .. })
        ));
    }

    #[test]
    fn infinite_mass_is_rejected_but_interior_restrictions_pass() {
        let heavy = RadialWeight::log_i().associated().unwrap();
        let o = opts();
        assert!(matches!(
            Measure::weighted(1, heavy.clone(), &o),
            Err(MeasureError::InfiniteMass { .. })
        ));
        // restricted away from the boundary the same weight is fine
        let mu = Measure::indicator(Region::annulus(1, 0.0, 0.9).unwrap(), heavy, &o).unwrap();
        assert!(mu.total_mass().value.is_finite());
        let m = mu
            .measure_of(&Region::halfplane(1, 0.0).unwrap(), &o)
            .unwrap();
        assert!(m.value.is_finite() && m.value > 0.0);
        assert!(
            (2.0 * m.value - mu.total_mass().value).abs() < 1e-9 * mu.total_mass().value,
            "halfplane cuts the restricted mass in half"
        );
    }

    #[test]
    fn degenerate_constructions_error() {
        let o = opts();
        assert!(matches!(
            Measure::atomic(Vec::new()),
            Err(MeasureError::EmptyAtoms)
        ));
        assert!(matches!(
            Measure::atomic(alloc::vec![atom(0.2, 0.0, -1.0)]),
            Err(MeasureError::BadAtom { .. })
        ));
        assert!(matches!(
            Measure::atomic(alloc::vec![atom(1.2, 0.0, 1.0)]),
            Err(MeasureError::BadAtom { .. })
        ));
        let mu = Measure::atomic(alloc::vec![atom(0.8, 0.0, 1.0)]).unwrap();
        let far = Region::ball(Point::one(Complex64::new(-0.8, 0.0)), 0.3).unwrap();
        assert!(matches!(
            mu.average(&far, |_| 1.0, &o),
            Err(MeasureError::ZeroMass { .. })
        ));
        // dimension mismatches surface
        let mu2 = Measure::weighted(2, w_alpha(0.0), &o).unwrap();
        assert!(matches!(
            mu2.measure_of(&Region::whole(1).unwrap(), &o),
            Err(MeasureError::DimensionMismatch { .. })
        ));
    }
}
