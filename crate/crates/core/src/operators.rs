//! Sparse and maximal operators over the dyadic tent structure, the
//! pointwise sparse-domination bound for radial derivatives, and the
//! weak-type covering check for fractional maximal functions.
//!
//! Everything here consumes the immutable trees, weights, and measures of
//! the sibling modules and reduces to cached tent or ball averages. Suprema
//! truncate at the built depth because the mathematical suprema run over
//! infinitely many cells; results record the cell that attained a supremum
//! and whether the truncation was visible at the queried point. Observed
//! constants (sparseness ratios, domination and covering constants) are
//! reported, never asserted against theoretical values: existence is the
//! theorem, the number is the measurement.
//!
//! Caches live inside the operator values and are exclusive. Every
//! quadrature path is deterministically seeded, so a cloned operator
//! recomputes identical numbers; concurrent sweeps clone per thread and the
//! duplicated work is idempotent.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::dyadic::{BergmanTree, CellRef, DyadicFamily};
use crate::geometry::{bergman_distance, GeometryError, Point};
use crate::measures::{Measure, MeasureError};
use crate::quadrature::{
    band_fractions, region_average, tent_average, tent_volume, QuadOpts, QuadratureError,
    QuadratureResult, Region,
};
use crate::rng::Sampler;
use crate::testfns::{HoloFn, TestFnError};
use crate::weights::RadialWeight;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Clone, Debug)]
pub enum OperatorError {
    /// The point (or requested truncation) lies beyond the built depth.
    OutOfDepth { band: u32, depth: u32 },
    BadParameter { why: &'static str },
    /// A family violated its declared sparseness constant at some node.
    NotSparse { gamma: f64, observed: f64 },
    Measure(MeasureError),
    Quadrature(QuadratureError),
    TestFn(TestFnError),
    Geometry(GeometryError),
}

impl fmt::Display for OperatorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorError::OutOfDepth { band, depth } => {
                write!(f, "band {band} exceeds the built depth {depth}")
            }
            OperatorError::BadParameter { why } => write!(f, "bad parameter: {why}"),
            OperatorError::NotSparse { gamma, observed } => {
                write!(f, "family is not {gamma}-sparse: observed ratio {observed}")
            }
            OperatorError::Measure(e) => write!(f, "{e}"),
            OperatorError::Quadrature(e) => write!(f, "{e}"),
            OperatorError::TestFn(e) => write!(f, "{e}"),
            OperatorError::Geometry(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for OperatorError {}

impl From<MeasureError> for OperatorError {
    fn from(e: MeasureError) -> Self {
        OperatorError::Measure(e)
    }
}

impl From<QuadratureError> for OperatorError {
    fn from(e: QuadratureError) -> Self {
        OperatorError::Quadrature(e)
    }
}

impl From<TestFnError> for OperatorError {
    fn from(e: TestFnError) -> Self {
        OperatorError::TestFn(e)
    }
}

impl From<GeometryError> for OperatorError {
    fn from(e: GeometryError) -> Self {
        OperatorError::Geometry(e)
    }
}

/// T(desc) ⊆ T(anc) within one tree: bands ordered and the direction cell
/// of desc refines the direction cell of anc.
fn tent_descends(tree: &BergmanTree, desc: CellRef, anc: CellRef) -> bool {
    if desc.band < anc.band {
        return false;
    }
    if anc.band == 0 {
        return true;
    }
    let k_desc = tree.dir_level_of_band(desc.band);
    let k_anc = tree.dir_level_of_band(anc.band);
    tree.dir_ancestor(desc.index, k_desc, k_anc) == anc.index
}

// ---------------------------------------------------------------------------
// Sparse families and the sparse operator

/// A family of cells from one grid whose tents satisfy the sparseness
/// condition: at every member, the family-children tents carry at most a
/// γ fraction of the member's tent volume. The condition is checked at
/// construction against the supplied weight; `observed` keeps the worst
/// ratio actually measured.
#[derive(Clone, Debug)]
pub struct SparseFamily {
    grid: usize,
    gamma: f64,
    cells: Vec<CellRef>,
    observed: f64,
}

impl SparseFamily {
    /// Validates sparseness: for every member S, Σ over family-children S′
    /// of V_ω(T(S′)) ≤ γ·V_ω(T(S)), with three standard errors of slack for
    /// sampled volumes. Family-children are members whose nearest proper
    /// family ancestor is S. Duplicates are dropped; the empty family is
    /// legal and acts as zero.
    pub fn new(
        family: &DyadicFamily,
        w: &RadialWeight,
        cells: Vec<CellRef>,
        gamma: f64,
        opts: &QuadOpts,
    ) -> Result<SparseFamily, OperatorError> {
        if !(gamma > 0.0) || !(gamma < 1.0) {
            return Err(OperatorError::BadParameter {
                why: "sparseness constant must lie in (0, 1)",
            });
        }
        let mut cells = cells;
        cells.sort_unstable();
        cells.dedup();
        let grid = cells.first().map_or(0, |c| c.grid);
        if cells.iter().any(|c| c.grid != grid) {
            return Err(OperatorError::BadParameter {
                why: "sparse family cells must come from one grid",
            });
        }
        if grid >= family.grids() {
            return Err(OperatorError::BadParameter {
                why: "cell grid is not part of the family",
            });
        }
        let tree = family.tree(grid);
        let set: BTreeSet<CellRef> = cells.iter().copied().collect();
        let mut kids: BTreeMap<CellRef, Vec<CellRef>> = BTreeMap::new();
        for &c in &cells {
            let mut cur = c;
            while let Some(p) = tree.parent(cur) {
                if set.contains(&p) {
                    kids.entry(p).or_default().push(c);
                    break;
                }
                cur = p;
            }
        }
        let mut volumes: BTreeMap<CellRef, QuadratureResult> = BTreeMap::new();
        let mut vol = |cell: CellRef| -> Result<QuadratureResult, OperatorError> {
            if let Some(v) = volumes.get(&cell) {
                return Ok(*v);
            }
            let v = tent_volume(w, tree, cell, opts)?;
            volumes.insert(cell, v);
            Ok(v)
        };
        let mut observed = 0.0f64;
        for (parent, children) in &kids {
            let pv = vol(*parent)?;
            let mut sum = 0.0;
            let mut err = 0.0;
            for &c in children {
                let cv = vol(c)?;
                sum += cv.value;
                err += cv.abs_err;
            }
            if !(pv.value > 0.0) || !pv.value.is_finite() {
                return Err(OperatorError::BadParameter {
                    why: "member tent has zero or infinite volume",
                });
            }
            let ratio = sum / pv.value;
            if ratio > observed {
                observed = ratio;
            }
            let slack = 3.0 * (err + gamma * pv.abs_err) + 1e-12 * pv.value;
            if sum > gamma * pv.value + slack {
                return Err(OperatorError::NotSparse {
                    gamma,
                    observed: ratio,
                });
            }
        }
        Ok(SparseFamily {
            grid,
            gamma,
            cells,
            observed,
        })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Worst child-volume ratio measured at construction (0 for families
    /// without nested members).
    pub fn observed(&self) -> f64 {
        self.observed
    }

    pub fn cells(&self) -> &[CellRef] {
        &self.cells
    }
}

/// A_𝒮 f(z) = Σ over family members whose tent contains z of ⟨f⟩_{T(S)},
/// the averages taken against the normalized Lebesgue volume. The members
/// containing z form a chain, so the sum has at most depth + 1 terms.
pub fn sparse_apply<F: Fn(&Point) -> f64>(
    sparse: &SparseFamily,
    family: &DyadicFamily,
    f: F,
    z: &Point,
    opts: &QuadOpts,
) -> Result<f64, OperatorError> {
    if sparse.grid >= family.grids() {
        return Err(OperatorError::BadParameter {
            why: "sparse family grid is not part of this family",
        });
    }
    let band = family.band_of(z);
    if band > family.depth() {
        return Err(OperatorError::OutOfDepth {
            band,
            depth: family.depth(),
        });
    }
    let tree = family.tree(sparse.grid);
    let lebesgue = RadialWeight::pow_alpha(0.0).expect("alpha 0 is valid");
    let mut total = 0.0;
    let mut prev: Option<CellRef> = None;
    for &cell in &sparse.cells {
        if !tree.tent_contains(cell, z) {
            continue;
        }
        if let Some(p) = prev {
            // cells are band-sorted, so membership must refine the chain
            debug_assert!(tent_descends(tree, cell, p), "containing tents must nest");
        }
        prev = Some(cell);
        let avg = tent_average(&lebesgue, tree, cell, None, &f, opts)?;
        total += avg.value;
    }
    debug_assert!(total.is_finite());
    Ok(total)
}

/// Worst one-level tent-volume ratio over the whole tree: the sup over
/// nodes K of Σ over tree children K′ of V_ω(T(K′)) / V_ω(T(K)). This is
/// the build-time sparseness measurement for the full cell family.
#[derive(Clone, Debug)]
pub struct SparsenessReport {
    pub observed: f64,
    /// Node attaining the sup.
    pub worst: Option<CellRef>,
}

pub fn tree_sparseness(
    tree: &BergmanTree,
    w: &RadialWeight,
    opts: &QuadOpts,
) -> Result<SparsenessReport, OperatorError> {
    if !w.is_integrable() {
        return Err(OperatorError::BadParameter {
            why: "tent sparseness needs an integrable weight",
        });
    }
    let n = tree.dim();
    let depth = tree.depth();
    let mut masses = Vec::with_capacity(depth as usize + 1);
    for band in 0..=depth {
        let r = if band == 0 {
            0.0
        } else {
            (band as f64 * tree.theta()).tanh()
        };
        masses.push(w.radial_mass(r, 1.0, n));
    }
    // Direction fractions per band from one shared pool: the patches refine
    // hierarchically, so a node's child counts sum to exactly its own count,
    // the directional noise cancels, and each ratio reduces to the radial
    // mass ratio. n = 1 fractions are exact to begin with.
    let fracs: Vec<Vec<f64>> = if n == 1 {
        (0..=depth)
            .map(|b| band_fractions(tree, b, opts.sphere_samples, opts.seed))
            .collect()
    } else {
        let total = opts.sphere_samples.max(16);
        let mut smp = Sampler::substream(opts.seed, 7_777);
        let mut counts: Vec<Vec<u64>> = (0..=depth)
            .map(|b| vec![0u64; tree.cells(b).len()])
            .collect();
        for _ in 0..total {
            let xi = smp.sphere_point(2);
            for band in 1..=depth {
                let k = tree.dir_level_of_band(band);
                counts[band as usize][tree.dir_index_at(&xi, k) as usize] += 1;
            }
        }
        counts[0][0] = total as u64;
        counts
            .into_iter()
            .map(|c| c.into_iter().map(|x| x as f64 / total as f64).collect())
            .collect()
    };
    let mut observed = 0.0f64;
    let mut worst = None;
    for band in 0..depth {
        let mut child_sum = vec![0.0f64; tree.cells(band).len()];
        for (i, cell) in tree.cells(band + 1).iter().enumerate() {
            child_sum[cell.parent as usize] += fracs[band as usize + 1][i];
        }
        for (idx, sum) in child_sum.iter().enumerate() {
            let denom = fracs[band as usize][idx] * masses[band as usize];
            if !(denom > 0.0) {
                continue;
            }
            let ratio = sum * masses[band as usize + 1] / denom;
            if ratio > observed {
                observed = ratio;
                worst = Some(CellRef {
                    grid: tree.grid(),
                    band,
                    index: idx as u32,
                });
            }
        }
    }
    Ok(SparsenessReport { observed, worst })
}

// ---------------------------------------------------------------------------
// Maximal operators

/// One maximal-function query: the target point, the tilt exponent used by
/// the tilted and fractional variants, and an optional truncation band
/// below the built depth.
#[derive(Clone, Debug)]
pub struct MaximalQuery {
    pub z: Point,
    pub t: f64,
    pub depth: Option<u32>,
}

impl MaximalQuery {
    pub fn at(z: Point) -> MaximalQuery {
        MaximalQuery {
            z,
            t: 0.0,
            depth: None,
        }
    }

    pub fn with_t(mut self, t: f64) -> MaximalQuery {
        self.t = t;
        self
    }

    pub fn truncated(mut self, depth: u32) -> MaximalQuery {
        self.depth = Some(depth);
        self
    }
}

/// A supremum over the built tents containing the query point. `argmax`
/// names the attaining cell (None when every candidate was skipped), and
/// `truncated` records that the point lives deeper than the inspected
/// bands, so the untruncated supremum could be larger.
#[derive(Clone, Copy, Debug)]
pub struct MaximalResult {
    pub value: f64,
    /// Quadrature error of the attaining average.
    pub abs_err: f64,
    pub argmax: Option<CellRef>,
    pub truncated: bool,
}

/// M_{ω,𝔇_δ}: the dyadic maximal operator over every grid of a family,
/// with tent averages of |φ| cached per cell. One value owns one (ω, φ)
/// pair; build a fresh operator for a different integrand.
pub struct DyadicMaximal<'a> {
    family: &'a DyadicFamily,
    w: &'a RadialWeight,
    phi: Box<dyn Fn(&Point) -> f64 + 'a>,
    cache: BTreeMap<CellRef, QuadratureResult>,
}

impl<'a> DyadicMaximal<'a> {
    pub fn new(
        family: &'a DyadicFamily,
        w: &'a RadialWeight,
        phi: impl Fn(&Point) -> f64 + 'a,
    ) -> DyadicMaximal<'a> {
        DyadicMaximal {
            family,
            w,
            phi: Box::new(phi),
            cache: BTreeMap::new(),
        }
    }

    fn average(
        &mut self,
        tree: &BergmanTree,
        cell: CellRef,
        opts: &QuadOpts,
    ) -> Result<QuadratureResult, OperatorError> {
        if let Some(r) = self.cache.get(&cell) {
            return Ok(*r);
        }
        let phi = &self.phi;
        let r = tent_average(self.w, tree, cell, None, |p| phi(p).abs(), opts)?;
        self.cache.insert(cell, r);
        Ok(r)
    }

    /// sup over tents containing z (all grids, bands ≤ truncation) of
    /// ⟨|φ|⟩_{ω,T}.
    pub fn eval(
        &mut self,
        query: &MaximalQuery,
        opts: &QuadOpts,
    ) -> Result<MaximalResult, OperatorError> {
        let qdepth = match query.depth {
            Some(d) => {
                if d > self.family.depth() {
                    return Err(OperatorError::OutOfDepth {
                        band: d,
                        depth: self.family.depth(),
                    });
                }
                d
            }
            None => self.family.depth(),
        };
        let truncated = self.family.band_of(&query.z) > qdepth;
        let mut best: Option<(QuadratureResult, CellRef)> = None;
        for g in 0..self.family.grids() {
            let tree = self.family.tree(g);
            for cell in tree.locate(&query.z) {
                if cell.band > qdepth {
                    break;
                }
                debug_assert!(
                    tree.tent_contains(cell, &query.z),
                    "locate must produce containing tents"
                );
                let avg = self.average(tree, cell, opts)?;
                if best.map_or(true, |(b, _)| avg.value > b.value) {
                    best = Some((avg, cell));
                }
            }
        }
        let (r, cell) = best.expect("the root tent always contains the point");
        Ok(MaximalResult {
            value: r.value,
            abs_err: r.abs_err,
            argmax: Some(cell),
            truncated,
        })
    }

    /// M_{t,ω,𝔇_δ}(φ)(z) = (1−|z|²)^t · M_{ω,𝔇_δ}(φ)(z), t from the query.
    pub fn tilted(
        &mut self,
        query: &MaximalQuery,
        opts: &QuadOpts,
    ) -> Result<MaximalResult, OperatorError> {
        let base = self.eval(query, opts)?;
        let factor = (1.0 - query.z.norm_sq()).powf(query.t);
        Ok(MaximalResult {
            value: factor * base.value,
            abs_err: factor * base.abs_err,
            ..base
        })
    }
}

/// One-shot M_{ω,𝔇_δ}(φ)(z); sweeps should hold a `DyadicMaximal` instead
/// to reuse its cell cache.
pub fn dyadic_maximal<F: Fn(&Point) -> f64>(
    family: &DyadicFamily,
    w: &RadialWeight,
    phi: F,
    query: &MaximalQuery,
    opts: &QuadOpts,
) -> Result<MaximalResult, OperatorError> {
    DyadicMaximal::new(family, w, phi).eval(query, opts)
}

/// One-shot M_{t,ω,𝔇_δ}(φ)(z) with t taken from the query.
pub fn tilted_maximal<F: Fn(&Point) -> f64>(
    family: &DyadicFamily,
    w: &RadialWeight,
    phi: F,
    query: &MaximalQuery,
    opts: &QuadOpts,
) -> Result<MaximalResult, OperatorError> {
    DyadicMaximal::new(family, w, phi).tilted(query, opts)
}

/// M_{t,μ,𝔇}: the fractional maximal operator μ(T)^t·⟨|φ|⟩_{μ,T} over one
/// tree, tents of zero μ-mass skipped. Masses and averages are cached per
/// cell; the tilt t stays free in the query.
pub struct FractionalMaximal<'a> {
    tree: &'a BergmanTree,
    mu: &'a Measure,
    phi: Box<dyn Fn(&Point) -> f64 + 'a>,
    masses: BTreeMap<CellRef, QuadratureResult>,
    // None marks a zero-mass tent, skipped by every query
    avgs: BTreeMap<CellRef, Option<QuadratureResult>>,
}

impl<'a> FractionalMaximal<'a> {
    pub fn new(
        tree: &'a BergmanTree,
        mu: &'a Measure,
        phi: impl Fn(&Point) -> f64 + 'a,
    ) -> FractionalMaximal<'a> {
        FractionalMaximal {
            tree,
            mu,
            phi: Box::new(phi),
            masses: BTreeMap::new(),
            avgs: BTreeMap::new(),
        }
    }

    fn mass(&mut self, cell: CellRef, opts: &QuadOpts) -> Result<QuadratureResult, OperatorError> {
        if let Some(m) = self.masses.get(&cell) {
            return Ok(*m);
        }
        let m = self.mu.measure_of_tent(self.tree, cell, opts)?;
        self.masses.insert(cell, m);
        Ok(m)
    }

    fn avg(
        &mut self,
        cell: CellRef,
        opts: &QuadOpts,
    ) -> Result<Option<QuadratureResult>, OperatorError> {
        if let Some(a) = self.avgs.get(&cell) {
            return Ok(*a);
        }
        let phi = &self.phi;
        let a = match self.mu.tent_average(self.tree, cell, |p| phi(p).abs(), opts) {
            Ok(r) => Some(r),
            Err(MeasureError::ZeroMass { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        self.avgs.insert(cell, a);
        Ok(a)
    }

    /// sup over tents containing z (bands ≤ truncation, positive μ-mass) of
    /// μ(T)^t·⟨|φ|⟩_{μ,T}. The sup over an empty candidate set is 0 with no
    /// argmax.
    pub fn eval(
        &mut self,
        query: &MaximalQuery,
        opts: &QuadOpts,
    ) -> Result<MaximalResult, OperatorError> {
        let qdepth = match query.depth {
            Some(d) => {
                if d > self.tree.depth() {
                    return Err(OperatorError::OutOfDepth {
                        band: d,
                        depth: self.tree.depth(),
                    });
                }
                d
            }
            None => self.tree.depth(),
        };
        let t = query.t;
        let mut best: Option<(f64, f64, CellRef)> = None;
        for cell in self.tree.locate(&query.z) {
            if cell.band > qdepth {
                break;
            }
            let mass = self.mass(cell, opts)?;
            if !(mass.value > 0.0) {
                continue;
            }
            let Some(avg) = self.avg(cell, opts)? else {
                continue;
            };
            let factor = mass.value.powf(t);
            let value = factor * avg.value;
            // first order in both the mass and the average defects
            let err = factor * avg.abs_err
                + t.abs() * mass.value.powf(t - 1.0) * mass.abs_err * avg.value.abs();
            if best.as_ref().map_or(true, |(b, _, _)| value > *b) {
                best = Some((value, err, cell));
            }
        }
        let truncated = self.tree.band_of(&query.z) > qdepth;
        Ok(match best {
            Some((value, abs_err, cell)) => MaximalResult {
                value,
                abs_err,
                argmax: Some(cell),
                truncated,
            },
            None => MaximalResult {
                value: 0.0,
                abs_err: 0.0,
                argmax: None,
                truncated,
            },
        })
    }
}

/// One-shot M_{t,μ,𝔇}(φ)(z) with t from the query.
pub fn fractional_maximal<F: Fn(&Point) -> f64>(
    tree: &BergmanTree,
    mu: &Measure,
    phi: F,
    query: &MaximalQuery,
    opts: &QuadOpts,
) -> Result<MaximalResult, OperatorError> {
    FractionalMaximal::new(tree, mu, phi).eval(query, opts)
}

// ---------------------------------------------------------------------------
// Sparse domination of radial derivatives

/// The right-hand side of the sparse domination bound for |R^(k)f(z)|^p:
/// one term per grid, the cell of z contributing
/// (1−|c(Q)|)^{−kp}·⟨|f|^p⟩_{B(c(Q), 2^{k+1} r_δ)} with a Bergman-metric
/// ball and the normalized Lebesgue average. The leading constants of the
/// bound are existence-only; callers divide to observe them.
#[derive(Clone, Debug)]
pub struct DominationRhs {
    /// Full sum across grids.
    pub total: f64,
    /// The single term of each grid, in grid order.
    pub per_grid: Vec<f64>,
    pub abs_err: f64,
}

/// Evaluator for the domination right-hand side with ball averages of
/// |f|^p cached by cell, as a sweep touches the same shallow cells through
/// many points.
pub struct SparseDomination<'a> {
    family: &'a DyadicFamily,
    f: &'a HoloFn,
    p: f64,
    k: u32,
    r_delta: f64,
    lebesgue: RadialWeight,
    cache: BTreeMap<CellRef, QuadratureResult>,
}

impl<'a> SparseDomination<'a> {
    pub fn new(
        family: &'a DyadicFamily,
        f: &'a HoloFn,
        p: f64,
        k: u32,
        r_delta: f64,
    ) -> Result<SparseDomination<'a>, OperatorError> {
        if f.dim() != family.dim() {
            return Err(OperatorError::BadParameter {
                why: "test function dimension differs from the family",
            });
        }
        if !(p > 0.0) || !p.is_finite() {
            return Err(OperatorError::BadParameter {
                why: "exponent p must be positive and finite",
            });
        }
        if !(r_delta > 0.0) || !r_delta.is_finite() {
            return Err(OperatorError::BadParameter {
                why: "calibre radius must be positive and finite",
            });
        }
        Ok(SparseDomination {
            family,
            f,
            p,
            k,
            r_delta,
            lebesgue: RadialWeight::pow_alpha(0.0).expect("alpha 0 is valid"),
            cache: BTreeMap::new(),
        })
    }

    fn ball_average(
        &mut self,
        tree: &BergmanTree,
        cell: CellRef,
        opts: &QuadOpts,
    ) -> Result<QuadratureResult, OperatorError> {
        if let Some(r) = self.cache.get(&cell) {
            return Ok(*r);
        }
        let center = tree.cell(cell).center.clone();
        let radius = 2f64.powi(self.k as i32 + 1) * self.r_delta;
        let ball = Region::ball(center, radius)?;
        let (f, p) = (self.f, self.p);
        let r = region_average(
            &self.lebesgue,
            &ball,
            |z| f.eval_value(z).norm().powf(p),
            opts,
        )?;
        self.cache.insert(cell, r);
        Ok(r)
    }

    /// The per-grid terms at z and their sum.
    pub fn rhs(&mut self, z: &Point, opts: &QuadOpts) -> Result<DominationRhs, OperatorError> {
        let band = self.family.band_of(z);
        if band > self.family.depth() {
            return Err(OperatorError::OutOfDepth {
                band,
                depth: self.family.depth(),
            });
        }
        let kp = self.k as f64 * self.p;
        let mut per_grid = Vec::with_capacity(self.family.grids());
        let mut err = 0.0;
        for g in 0..self.family.grids() {
            let tree = self.family.tree(g);
            let cell = tree.cell_at(z, band);
            let avg = self.ball_average(tree, cell, opts)?;
            let weight = (1.0 - tree.cell(cell).center.norm()).powf(-kp);
            per_grid.push(weight * avg.value);
            err += weight * avg.abs_err;
        }
        let total = per_grid.iter().sum();
        Ok(DominationRhs {
            total,
            per_grid,
            abs_err: err,
        })
    }
}

/// One-shot domination right-hand side; sweeps should hold a
/// `SparseDomination` to reuse its ball-average cache.
pub fn sparse_domination_rhs(
    family: &DyadicFamily,
    f: &HoloFn,
    p: f64,
    k: u32,
    r_delta: f64,
    z: &Point,
    opts: &QuadOpts,
) -> Result<DominationRhs, OperatorError> {
    SparseDomination::new(family, f, p, k, r_delta)?.rhs(z, opts)
}

/// Observed envelope ratio at z: per grid, the domination ball average
/// divided by the dyadic maximal function of |f|^p over that grid alone,
/// both truncated at the built depth. The theorem asserts the sup of these
/// ratios is a finite constant of the construction.
#[derive(Clone, Debug)]
pub struct EnvelopeBound {
    /// max over grids of ball average / single-grid maximal.
    pub ratio: f64,
    pub per_grid: Vec<f64>,
}

/// Evaluator for the envelope ratio, sharing the domination ball cache and
/// a tent-average cache of |f|^p against ω.
pub struct SparseEnvelope<'a> {
    dom: SparseDomination<'a>,
    w: &'a RadialWeight,
    tents: BTreeMap<CellRef, QuadratureResult>,
}

impl<'a> SparseEnvelope<'a> {
    pub fn new(
        family: &'a DyadicFamily,
        f: &'a HoloFn,
        p: f64,
        k: u32,
        r_delta: f64,
        w: &'a RadialWeight,
    ) -> Result<SparseEnvelope<'a>, OperatorError> {
        Ok(SparseEnvelope {
            dom: SparseDomination::new(family, f, p, k, r_delta)?,
            w,
            tents: BTreeMap::new(),
        })
    }

    fn tent_avg(
        &mut self,
        tree: &BergmanTree,
        cell: CellRef,
        opts: &QuadOpts,
    ) -> Result<QuadratureResult, OperatorError> {
        if let Some(r) = self.tents.get(&cell) {
            return Ok(*r);
        }
        let (f, p) = (self.dom.f, self.dom.p);
        let r = tent_average(
            self.w,
            tree,
            cell,
            None,
            |z| f.eval_value(z).norm().powf(p),
            opts,
        )?;
        self.tents.insert(cell, r);
        Ok(r)
    }

    /// Ratios at z; deep points use the deepest built cell.
    pub fn eval(&mut self, z: &Point, opts: &QuadOpts) -> Result<EnvelopeBound, OperatorError> {
        let family = self.dom.family;
        let band = family.band_of(z).min(family.depth());
        let mut per_grid = Vec::with_capacity(family.grids());
        let mut ratio = 0.0f64;
        for g in 0..family.grids() {
            let tree = family.tree(g);
            let cell = tree.cell_at(z, band);
            let ball = self.dom.ball_average(tree, cell, opts)?;
            let mut maximal = 0.0f64;
            for chain_cell in tree.locate(z) {
                let avg = self.tent_avg(tree, chain_cell, opts)?;
                if avg.value > maximal {
                    maximal = avg.value;
                }
            }
            let r = if maximal > 0.0 {
                ball.value / maximal
            } else if ball.value > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            per_grid.push(r);
            if r > ratio {
                ratio = r;
            }
        }
        Ok(EnvelopeBound { ratio, per_grid })
    }
}

/// One-shot envelope ratio at z.
pub fn sparse_envelope_bound(
    family: &DyadicFamily,
    f: &HoloFn,
    p: f64,
    k: u32,
    r_delta: f64,
    w: &RadialWeight,
    z: &Point,
    opts: &QuadOpts,
) -> Result<EnvelopeBound, OperatorError> {
    SparseEnvelope::new(family, f, p, k, r_delta, w)?.eval(z, opts)
}

/// Observed circumscribing Bergman radius of the cells: the sup over bands
/// of the distance from a cell's center to its far reaches. Exact corner
/// probes on the disc (cells are congruent within a band); sampled points
/// on the ball. Any fixed positive calibre is admissible for the
/// domination bound; this helper just reports the natural one.
pub fn calibre_radius(
    family: &DyadicFamily,
    samples: usize,
    seed: u64,
) -> Result<f64, OperatorError> {
    let tree = family.tree(0);
    let mut sup = 0.0f64;
    for band in 0..=family.depth() {
        let count = tree.cells(band).len() as u32;
        let picks: Vec<u32> = if family.dim() == 1 {
            // disc cells within a band are congruent, one representative suffices
            vec![0]
        } else {
            let m = count.min(6);
            (0..m).map(|j| j * count / m).collect()
        };
        for index in picks {
            let cell = CellRef {
                grid: tree.grid(),
                band,
                index,
            };
            let center = &tree.cell(cell).center;
            let mut probe = |pt: &Point| -> Result<(), OperatorError> {
                let d = bergman_distance(center, pt)?;
                if d > sup {
                    sup = d;
                }
                Ok(())
            };
            if family.dim() == 1 {
                let (r0, a_lo, a_hi) = tree.tent_sector(cell);
                let (_, r1) = family.band_radii(band);
                let lo = r0.max(1e-12);
                for &r in &[lo, r1] {
                    for &a in &[a_lo, 0.5 * (a_lo + a_hi), a_hi] {
                        probe(&Point::from_polar(r, a))?;
                    }
                }
            }
            for pt in tree.sample_cell(cell, samples.max(16), seed) {
                probe(&pt)?;
            }
        }
    }
    Ok(sup)
}

// ---------------------------------------------------------------------------
// Weak-type covering check

/// One threshold of the weak-type verification: the level set
/// O_s = {M_{t,μ,𝒯}(|φ|) > s} decomposed through the maximal tents of
/// Γ_s = {Q : μ(T)^t⟨|φ|⟩_{μ,T} > s}. Within one tree the maximal tents
/// are pairwise disjoint, so o_mass is an exact sum, and the chain
/// lhs ≤ covering ≤ holder ≤ 2^{q/p}·‖φ‖^q certifies the weak bound.
#[derive(Clone, Debug)]
pub struct WeakTypeThreshold {
    pub s: f64,
    pub gamma_len: usize,
    pub gamma_max_len: usize,
    /// μ(O_s), summed over the disjoint maximal tents.
    pub o_mass: f64,
    /// s^q · μ(O_s).
    pub lhs: f64,
    /// Σ over maximal tents of μ(T)·(μ(T)^t⟨|φ|⟩)^q.
    pub covering: f64,
    /// (Σ over maximal tents of ∫_T |φ|^p dμ)^{q/p}, the Hölder step that
    /// consumes t = 1/p − 1/q.
    pub holder: f64,
    /// lhs / ‖φ‖_{p,μ}^q, the observed weak-type constant.
    pub c_obs: f64,
    /// Largest number of maximal tents covering one probe point; the
    /// covering argument allows 2, disjointness here gives 1.
    pub multiplicity: usize,
    /// The full chain held within tolerance.
    pub ok: bool,
}

#[derive(Clone, Debug)]
pub struct WeakTypeReport {
    pub p: f64,
    pub q: f64,
    pub t: f64,
    /// ‖φ‖_{p,μ}.
    pub phi_norm: f64,
    pub thresholds: Vec<WeakTypeThreshold>,
    /// max/min of c_obs over thresholds with nonempty level sets; 1 when
    /// fewer than two are nonempty.
    pub stability: f64,
}

/// The covering verification of the weak-type bound for M_{t,μ,𝒯} on one
/// tree: for each threshold s, build Γ_s over every built cell, extract
/// the maximal tents, and check s^q·μ(O_s) against the Hölder chain ending
/// in ‖φ‖_{p,μ}^q. Requires 1 < p ≤ q and t = 1/p − 1/q (with 0 ≤ t < 1).
pub fn weak_type_check<F: Fn(&Point) -> f64>(
    tree: &BergmanTree,
    mu: &Measure,
    phi: F,
    t: f64,
    p: f64,
    q: f64,
    s_list: &[f64],
    opts: &QuadOpts,
) -> Result<WeakTypeReport, OperatorError> {
    if !(p > 1.0) || !(p <= q) || !q.is_finite() {
        return Err(OperatorError::BadParameter {
            why: "need 1 < p <= q < infinity",
        });
    }
    if !(0.0..1.0).contains(&t) || (1.0 / p - 1.0 / q - t).abs() > 1e-9 {
        return Err(OperatorError::BadParameter {
            why: "need t = 1/p - 1/q in [0, 1)",
        });
    }
    if s_list.iter().any(|s| !(*s > 0.0)) {
        return Err(OperatorError::BadParameter {
            why: "thresholds must be positive",
        });
    }
    let whole = Region::whole(tree.dim())?;
    let norm_p = mu.integral(&whole, |z| phi(z).abs().powf(p), opts)?;
    let phi_norm = norm_p.value.max(0.0).powf(1.0 / p);

    // per-cell masses and maximal values, once for every threshold
    let mut cells = Vec::new();
    for band in 0..=tree.depth() {
        for index in 0..tree.cells(band).len() as u32 {
            let cell = CellRef {
                grid: tree.grid(),
                band,
                index,
            };
            let mass = mu.measure_of_tent(tree, cell, opts)?;
            if !(mass.value > 0.0) {
                continue;
            }
            let avg = match mu.tent_average(tree, cell, |z| phi(z).abs(), opts) {
                Ok(a) => a,
                Err(MeasureError::ZeroMass { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            cells.push((cell, mass.value, mass.value.powf(t) * avg.value));
        }
    }
    let values: BTreeMap<CellRef, (f64, f64)> = cells
        .iter()
        .map(|(c, m, v)| (*c, (*m, *v)))
        .collect();

    // lazy per-cell integrals for the Hölder step
    let mut int_p: BTreeMap<CellRef, f64> = BTreeMap::new();
    let mut thresholds = Vec::with_capacity(s_list.len());
    for (si, &s) in s_list.iter().enumerate() {
        let gamma: BTreeSet<CellRef> = values
            .iter()
            .filter(|(_, (_, v))| *v > s)
            .map(|(c, _)| *c)
            .collect();
        let mut gamma_max = Vec::new();
        'outer: for &c in &gamma {
            let mut cur = c;
            while let Some(par) = tree.parent(cur) {
                if gamma.contains(&par) {
                    continue 'outer;
                }
                cur = par;
            }
            gamma_max.push(c);
        }
        let mut o_mass = 0.0;
        let mut covering = 0.0;
        let mut holder_sum = 0.0;
        for &c in &gamma_max {
            let (m, v) = values[&c];
            o_mass += m;
            covering += m * v.powf(q);
            let ip = match int_p.get(&c) {
                Some(ip) => *ip,
                None => {
                    let avg_p = mu.tent_average(tree, c, |z| phi(z).abs().powf(p), opts)?;
                    let ip = avg_p.value * m;
                    int_p.insert(c, ip);
                    ip
                }
            };
            holder_sum += ip;
        }
        let holder = holder_sum.max(0.0).powf(q / p);
        let lhs = s.powf(q) * o_mass;
        let bound = 2f64.powf(q / p) * phi_norm.powf(q);
        let tol = |x: f64| 1e-6 * x.abs() + 1e-12;
        let ok = lhs <= covering + tol(covering)
            && covering <= holder + tol(holder)
            && holder <= bound + tol(bound);
        // probe the covering multiplicity on points of the maximal tents
        let mut multiplicity = 0usize;
        for (j, &c) in gamma_max.iter().enumerate().take(64) {
            for pt in tree.sample_cell(c, 1, opts.seed ^ (0xC0FE + 131 * (si + j) as u64)) {
                let hits = gamma_max
                    .iter()
                    .filter(|&&m| tree.tent_contains(m, &pt))
                    .count();
                if hits > multiplicity {
                    multiplicity = hits;
                }
            }
        }
        let c_obs = if phi_norm > 0.0 {
            lhs / phi_norm.powf(q)
        } else {
            0.0
        };
        thresholds.push(WeakTypeThreshold {
            s,
            gamma_len: gamma.len(),
            gamma_max_len: gamma_max.len(),
            o_mass,
            lhs,
            covering,
            holder,
            c_obs,
            multiplicity,
            ok,
        });
    }
    let live: Vec<f64> = thresholds
        .iter()
        .filter(|th| th.o_mass > 0.0 && th.c_obs > 0.0)
        .map(|th| th.c_obs)
        .collect();
    let stability = if live.len() < 2 {
        1.0
    } else {
        let hi = live.iter().cloned().fold(f64::MIN, f64::max);
        let lo = live.iter().cloned().fold(f64::MAX, f64::min);
        hi / lo
    };
    Ok(WeakTypeReport {
        p,
        q,
        t,
        phi_norm,
        thresholds,
        stability,
    })
}
