//! Holomorphic test functions with exact evaluation and exact radial
//! derivatives: monomials, reproducing-kernel powers, their normalized
//! versions, and finite linear combinations. These drive every embedding
//! experiment, so everything here is closed form; quadrature enters only
//! through norm computations.
//!
//! The radial derivative R f(z) = Σ z_i ∂f/∂z_i acts symbolically. With
//! u = ⟨z, a⟩ one has R u = u, so the kernel atoms u^j (1 − u)^{−γ} are
//! closed under R:
//!   R [u^j (1−u)^{−γ}] = j u^j (1−u)^{−γ} + γ u^{j+1} (1−u)^{−γ−1},
//! and monomials are eigenfunctions, R z^m = |m| z^m. Derivatives therefore
//! stay inside the catalog and evaluate exactly.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use crate::geometry::{GeometryError, Point};
use crate::quadrature::{lp_norm, QuadOpts, QuadratureError, QuadratureResult, Region};
use crate::rng::Sampler;
use crate::weights::RadialWeight;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Clone, Debug, PartialEq)]
pub enum TestFnError {
    /// |1 − ⟨ζ, a⟩| under the overflow guard; unreachable for interior
    /// points under the geometry's boundary guard, kept defensively.
    PoleTooClose { dist: f64 },
    BadExponent { value: f64 },
    BadPowers,
    EmptyCombo,
    DimensionMismatch { left: usize, right: usize },
    RadiusTooLarge { r: f64 },
    /// The normalization integral did not produce a usable norm.
    BadNorm { norm: f64 },
    Geometry(GeometryError),
    Quadrature(QuadratureError),
}

impl fmt::Display for TestFnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFnError::PoleTooClose { dist } => {
                write!(f, "evaluation within {dist} of a kernel pole")
            }
            TestFnError::BadExponent { value } => {
                write!(f, "exponent {value} must be positive and finite")
            }
            TestFnError::BadPowers => write!(f, "monomial needs 1 or 2 exponents"),
            TestFnError::EmptyCombo => write!(f, "empty linear combination"),
            TestFnError::DimensionMismatch { left, right } => {
                write!(f, "dimension mismatch: {left} vs {right}")
            }
            TestFnError::RadiusTooLarge { r } => {
                write!(f, "radius {r} leaves the guarded interior")
            }
            TestFnError::BadNorm { norm } => write!(f, "normalization produced norm {norm}"),
            TestFnError::Geometry(e) => write!(f, "{e}"),
            TestFnError::Quadrature(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for TestFnError {}

impl From<GeometryError> for TestFnError {
    fn from(e: GeometryError) -> Self {
        TestFnError::Geometry(e)
    }
}

impl From<QuadratureError> for TestFnError {
    fn from(e: QuadratureError) -> Self {
        TestFnError::Quadrature(e)
    }
}

/// A holomorphic test function in closed form.
#[derive(Clone, Debug)]
pub enum HoloFn {
    /// z^m = z_1^{m_1} ··· z_n^{m_n}; the dimension is powers.len().
    Monomial { powers: Vec<u32> },
    /// ⟨z, pole⟩^power (1 − ⟨z, pole⟩)^{−gamma}. power = 0 is the plain
    /// kernel; higher powers appear through radial derivatives.
    Kernel {
        pole: Point,
        gamma: f64,
        power: u32,
    },
    /// scale · (1 − ⟨z, pole⟩)^{−t} with scale fixed at construction so the
    /// chosen L^p(ω) norm is 1.
    NormalizedKernel { pole: Point, t: f64, scale: f64 },
    /// Finite linear combination; empty combos represent the zero function
    /// and arise only as derivatives of constants.
    Combo { terms: Vec<(Complex64, HoloFn)> },
}

const POLE_GUARD: f64 = 1e-15;

impl HoloFn {
    pub fn monomial(powers: Vec<u32>) -> Result<HoloFn, TestFnError> {
        if powers.is_empty() || powers.len() > 2 {
            return Err(TestFnError::BadPowers);
        }
        Ok(HoloFn::Monomial { powers })
    }

    pub fn kernel(pole: Point, gamma: f64) -> Result<HoloFn, TestFnError> {
        pole.ensure_interior()?;
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(TestFnError::BadExponent { value: gamma });
        }
        Ok(HoloFn::Kernel {
            pole,
            gamma,
            power: 0,
        })
    }

    /// g_{z,ω} = f_{z,ω} / ‖f_{z,ω}‖_{p,ω} with f_{z,ω} = (1 − ⟨ζ, z⟩)^{−t}.
    /// The norm is computed over the whole ball by quadrature and cached as
    /// a scale factor, so the construction is exact thereafter.
    pub fn normalized_kernel(
        pole: Point,
        t: f64,
        p: f64,
        w: &RadialWeight,
        opts: &QuadOpts,
    ) -> Result<HoloFn, TestFnError> {
        pole.ensure_interior()?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(TestFnError::BadExponent { value: t });
        }
        if !(p > 0.0) || !p.is_finite() {
            return Err(TestFnError::BadExponent { value: p });
        }
        let plain = HoloFn::Kernel {
            pole: pole.clone(),
            gamma: t,
            power: 0,
        };
        let whole = Region::whole(pole.dim())?;
        let norm = lp_norm(w, &whole, |z| plain.eval_value(z).norm(), p, opts)?;
        if !(norm.value > 0.0) || !norm.value.is_finite() {
            return Err(TestFnError::BadNorm { norm: norm.value });
        }
        Ok(HoloFn::NormalizedKernel {
            pole,
            t,
            scale: 1.0 / norm.value,
        })
    }

    pub fn combo(terms: Vec<(Complex64, HoloFn)>) -> Result<HoloFn, TestFnError> {
        if terms.is_empty() {
            return Err(TestFnError::EmptyCombo);
        }
        let d = terms[0].1.dim();
        for (_, f) in &terms {
            if f.dim() != d {
                return Err(TestFnError::DimensionMismatch {
                    left: d,
                    right: f.dim(),
                });
            }
        }
        Ok(HoloFn::Combo { terms })
    }

    pub fn dim(&self) -> usize {
        match self {
            HoloFn::Monomial { powers } => powers.len(),
            HoloFn::Kernel { pole, .. } | HoloFn::NormalizedKernel { pole, .. } => pole.dim(),
            HoloFn::Combo { terms } => terms.first().map_or(1, |(_, f)| f.dim()),
        }
    }

    /// Exact closed-form value. The pole guard is unreachable for interior
    /// arguments but kept as the documented error path.
    pub fn eval(&self, zeta: &Point) -> Result<Complex64, TestFnError> {
        zeta.ensure_interior()?;
        if zeta.dim() != self.dim() {
            return Err(TestFnError::DimensionMismatch {
                left: self.dim(),
                right: zeta.dim(),
            });
        }
        self.eval_guarded(zeta)
    }

    fn eval_guarded(&self, zeta: &Point) -> Result<Complex64, TestFnError> {
        match self {
            HoloFn::Kernel { pole, .. } | HoloFn::NormalizedKernel { pole, .. } => {
                let one_minus = Complex64::new(1.0, 0.0) - zeta.inner(pole);
                if one_minus.norm() < POLE_GUARD {
                    return Err(TestFnError::PoleTooClose {
                        dist: one_minus.norm(),
                    });
                }
            }
            HoloFn::Combo { terms } => {
                for (_, f) in terms {
                    f.eval_guarded(zeta)?;
                }
            }
            HoloFn::Monomial { .. } => {}
        }
        Ok(self.eval_value(zeta))
    }

    /// Unchecked fast path for quadrature closures, whose probes stay in the
    /// guarded interior by construction.
    pub fn eval_value(&self, zeta: &Point) -> Complex64 {
        match self {
            HoloFn::Monomial { powers } => {
                let mut v = Complex64::new(1.0, 0.0);
                for (i, &m) in powers.iter().enumerate() {
                    if m > 0 {
                        v *= zeta.coords()[i].powi(m as i32);
                    }
                }
                v
            }
            HoloFn::Kernel { pole, gamma, power } => {
                let u = zeta.inner(pole);
                let base = (Complex64::new(1.0, 0.0) - u).powf(-*gamma);
                if *power == 0 {
                    base
                } else {
                    u.powi(*power as i32) * base
                }
            }
            HoloFn::NormalizedKernel { pole, t, scale } => {
                let u = zeta.inner(pole);
                *scale * (Complex64::new(1.0, 0.0) - u).powf(-*t)
            }
            HoloFn::Combo { terms } => {
                let mut v = Complex64::new(0.0, 0.0);
                for (c, f) in terms {
                    v += c * f.eval_value(zeta);
                }
                v
            }
        }
    }

    /// Complex gradient (∂f/∂z_1, ..., ∂f/∂z_n), closed form.
    pub fn gradient(&self, zeta: &Point) -> Vec<Complex64> {
        let n = self.dim();
        match self {
            HoloFn::Monomial { powers } => {
                let mut g = Vec::with_capacity(n);
                for i in 0..n {
                    let mi = powers[i];
                    if mi == 0 {
                        g.push(Complex64::new(0.0, 0.0));
                        continue;
                    }
                    let mut v = Complex64::new(mi as f64, 0.0);
                    for (j, &m) in powers.iter().enumerate() {
                        let pw = if j == i { m - 1 } else { m };
                        if pw > 0 {
                            v *= zeta.coords()[j].powi(pw as i32);
                        }
                    }
                    g.push(v);
                }
                g
            }
            HoloFn::Kernel { pole, gamma, power } => {
                // d/du [u^j (1-u)^{-g}] = j u^{j-1} (1-u)^{-g} + g u^j (1-u)^{-g-1}
                let u = zeta.inner(pole);
                let om = Complex64::new(1.0, 0.0) - u;
                let j = *power;
                let mut du = *gamma * powc(u, j) * om.powf(-gamma - 1.0);
                if j > 0 {
                    du += (j as f64) * powc(u, j - 1) * om.powf(-*gamma);
                }
                pole.coords().iter().map(|a| du * a.conj()).collect()
            }
            HoloFn::NormalizedKernel { pole, t, scale } => {
                let u = zeta.inner(pole);
                let om = Complex64::new(1.0, 0.0) - u;
                let du = *scale * *t * om.powf(-t - 1.0);
                pole.coords().iter().map(|a| du * a.conj()).collect()
            }
            HoloFn::Combo { terms } => {
                let mut g = vec![Complex64::new(0.0, 0.0); n];
                for (c, f) in terms {
                    for (gi, di) in g.iter_mut().zip(f.gradient(zeta)) {
                        *gi += c * di;
                    }
                }
                g
            }
        }
    }

    pub fn gradient_norm(&self, zeta: &Point) -> f64 {
        self.gradient(zeta)
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// k-th radial derivative R^k f as a catalog function; exact by the
    /// atom recurrences, with like atoms merged.
    pub fn radial_derivative(&self, k: u32) -> HoloFn {
        let mut terms = flatten(Complex64::new(1.0, 0.0), self);
        for _ in 0..k {
            let mut next: Vec<(Complex64, HoloFn)> = Vec::new();
            for (c, atom) in &terms {
                for (dc, datom) in r_once(atom) {
                    push_merged(&mut next, c * dc, datom);
                }
            }
            terms = next;
        }
        terms.retain(|(c, _)| c.norm_sqr() > 0.0);
        if terms.len() == 1 && terms[0].0 == Complex64::new(1.0, 0.0) {
            return terms.remove(0).1;
        }
        HoloFn::Combo { terms }
    }

    /// ‖f‖_{p,ω} over the whole disc or ball.
    pub fn norm(
        &self,
        w: &RadialWeight,
        p: f64,
        opts: &QuadOpts,
    ) -> Result<QuadratureResult, TestFnError> {
        let whole = Region::whole(self.dim())?;
        Ok(lp_norm(w, &whole, |z| self.eval_value(z).norm(), p, opts)?)
    }
}

fn powc(u: Complex64, j: u32) -> Complex64 {
    if j == 0 {
        Complex64::new(1.0, 0.0)
    } else {
        u.powi(j as i32)
    }
}

/// Distribute a scalar through combos, producing (coefficient, atom) pairs.
fn flatten(c: Complex64, f: &HoloFn) -> Vec<(Complex64, HoloFn)> {
    match f {
        HoloFn::Combo { terms } => {
            let mut out = Vec::new();
            for (ci, fi) in terms {
                for (cj, atom) in flatten(c * ci, fi) {
                    push_merged(&mut out, cj, atom);
                }
            }
            out
        }
        other => vec![(c, other.clone())],
    }
}

/// R applied to one atom, as coefficient-atom pairs.
fn r_once(atom: &HoloFn) -> Vec<(Complex64, HoloFn)> {
    match atom {
        HoloFn::Monomial { powers } => {
            let total: u32 = powers.iter().sum();
            if total == 0 {
                Vec::new()
            } else {
                vec![(Complex64::new(total as f64, 0.0), atom.clone())]
            }
        }
        HoloFn::Kernel { pole, gamma, power } => {
            let mut out = Vec::new();
            if *power > 0 {
                out.push((Complex64::new(*power as f64, 0.0), atom.clone()));
            }
            out.push((
                Complex64::new(*gamma, 0.0),
                HoloFn::Kernel {
                    pole: pole.clone(),
                    gamma: gamma + 1.0,
                    power: power + 1,
                },
            ));
            out
        }
        HoloFn::NormalizedKernel { pole, t, scale } => {
            vec![(
                Complex64::new(*scale * *t, 0.0),
                HoloFn::Kernel {
                    pole: pole.clone(),
                    gamma: t + 1.0,
                    power: 1,
                },
            )]
        }
        HoloFn::Combo { .. } => unreachable!("atoms are flattened"),
    }
}

fn same_atom(a: &HoloFn, b: &HoloFn) -> bool {
    match (a, b) {
        (HoloFn::Monomial { powers: p }, HoloFn::Monomial { powers: q }) => p == q,
        (
            HoloFn::Kernel {
                pole: pa,
                gamma: ga,
                power: ja,
            },
            HoloFn::Kernel {
                pole: pb,
                gamma: gb,
                power: jb,
            },
        ) => ja == jb && ga == gb && same_point(pa, pb),
        (
            HoloFn::NormalizedKernel {
                pole: pa,
                t: ta,
                scale: sa,
            },
            HoloFn::NormalizedKernel {
                pole: pb,
                t: tb,
                scale: sb,
            },
        ) => ta == tb && sa == sb && same_point(pa, pb),
        _ => false,
    }
}

fn same_point(a: &Point, b: &Point) -> bool {
    a.dim() == b.dim()
        && a.coords()
            .iter()
            .zip(b.coords())
            .all(|(x, y)| x.re == y.re && x.im == y.im)
}

fn push_merged(terms: &mut Vec<(Complex64, HoloFn)>, c: Complex64, atom: HoloFn) {
    for (ci, fi) in terms.iter_mut() {
        if same_atom(fi, &atom) {
            *ci += c;
            return;
        }
    }
    terms.push((c, atom));
}

/// Default forward-testing kernel exponent for a given (n, p).
pub fn default_gamma(n: usize, p: f64) -> f64 {
    (n as f64 + 2.0) / p + 1.0
}

/// Kernels with poles on 8 rays at shell radii 1 − 2^{−j}, j = 1..=depth.
/// Ray directions are fixed and deterministic: equispaced angles on the
/// disc, a seeded-but-constant direction set on the sphere.
pub fn kernel_family(n: usize, gamma: f64, depth: u32) -> Result<Vec<HoloFn>, TestFnError> {
    if n != 1 && n != 2 {
        return Err(TestFnError::DimensionMismatch { left: n, right: 1 });
    }
    let mut dirs = Vec::with_capacity(8);
    if n == 1 {
        for k in 0..8 {
            dirs.push(Point::from_polar(1.0, core::f64::consts::TAU * k as f64 / 8.0));
        }
    } else {
        let mut s = Sampler::substream(0xFA41, 17);
        for _ in 0..8 {
            dirs.push(s.sphere_point(2));
        }
    }
    let mut out = Vec::new();
    for j in 1..=depth {
        let r = 1.0 - 0.5f64.powi(j as i32);
        for d in &dirs {
            out.push(HoloFn::kernel(d.scale(r), gamma)?);
        }
    }
    Ok(out)
}

/// All monomials of total degree ≤ maxdeg.
pub fn monomial_family(n: usize, maxdeg: u32) -> Result<Vec<HoloFn>, TestFnError> {
    let mut out = Vec::new();
    match n {
        1 => {
            for d in 0..=maxdeg {
                out.push(HoloFn::monomial(vec![d])?);
            }
        }
        2 => {
            for d in 0..=maxdeg {
                for m1 in 0..=d {
                    out.push(HoloFn::monomial(vec![m1, d - m1])?);
                }
            }
        }
        _ => return Err(TestFnError::DimensionMismatch { left: n, right: 1 }),
    }
    Ok(out)
}

/// Lemma-style gradient growth ratio:
/// sup_{z ∈ B(0,r)} |∇f(z)|^p / ∫_{B(0,3r)} |f|^p dV, Bergman radii.
/// Finiteness of the ratio is the assertion; the sup is taken over a
/// deterministic polar probe grid in the closed smaller ball.
pub fn gradient_growth_check(
    f: &HoloFn,
    r: f64,
    p: f64,
    opts: &QuadOpts,
) -> Result<f64, TestFnError> {
    if !(r > 0.0) || !(p > 0.0) {
        return Err(TestFnError::BadExponent { value: p.min(r) });
    }
    let n = f.dim();
    let t3 = (3.0 * r).tanh();
    if t3 >= 1.0 - 1e-9 {
        return Err(TestFnError::RadiusTooLarge { r });
    }
    // sup |grad f|^p over B(0, r): probe an even polar grid plus the rim
    let tr = r.tanh();
    let mut sup = 0.0f64;
    let mut s = Sampler::substream(0xD1CE, 29);
    let mut consider = |z: &Point| {
        let g = f.gradient_norm(z);
        if g > sup {
            sup = g;
        }
    };
    for i in 0..24 {
        let rho = tr * (i as f64 + 0.5) / 24.0;
        if n == 1 {
            for k in 0..32 {
                consider(&Point::from_polar(
                    rho,
                    core::f64::consts::TAU * k as f64 / 32.0,
                ));
            }
        } else {
            for _ in 0..32 {
                consider(&s.sphere_point(2).scale(rho));
            }
        }
    }
    let lhs = sup.powf(p);
    let ball = Region::ball(Point::origin(n), 3.0 * r)?;
    let lebesgue = RadialWeight::pow_alpha(0.0).expect("alpha 0 is valid");
    let rhs = crate::quadrature::weighted_integral(
        &lebesgue,
        &ball,
        |z| f.eval_value(z).norm().powf(p),
        opts,
    )?;
    if !(rhs.value > 0.0) {
        return Ok(if lhs == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(lhs / rhs.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::region_average;

    fn opts() -> QuadOpts {
        QuadOpts::default()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn closed_form_evaluations() {
        let one = HoloFn::monomial(vec![0]).unwrap();
        let z = Point::one(c(0.3, -0.2));
        assert_eq!(one.eval(&z).unwrap(), c(1.0, 0.0));

        let k0 = HoloFn::kernel(Point::one(c(0.0, 0.0)), 2.5).unwrap();
        assert_eq!(k0.eval(&z).unwrap(), c(1.0, 0.0));

        let k = HoloFn::kernel(Point::one(c(0.5, 0.0)), 1.0).unwrap();
        let v = k.eval(&Point::one(c(0.5, 0.0))).unwrap();
        assert!((v - c(4.0 / 3.0, 0.0)).norm() < 1e-15);

        // ball: inner product conjugates the pole coordinates
        let pole = Point::two(c(0.3, 0.1), c(0.0, -0.2));
        let k2 = HoloFn::kernel(pole.clone(), 2.0).unwrap();
        let at = Point::two(c(0.1, 0.2), c(0.4, 0.0));
        let u = at.inner(&pole);
        let expect = (c(1.0, 0.0) - u).powf(-2.0);
        assert!((k2.eval(&at).unwrap() - expect).norm() < 1e-15);

        let m = HoloFn::monomial(vec![2, 1]).unwrap();
        let v = m.eval(&at).unwrap();
        let expect = at.coords()[0].powi(2) * at.coords()[1];
        assert!((v - expect).norm() < 1e-16);
    }

    #[test]
    fn radial_derivatives_are_exact() {
        // constants die
        let one = HoloFn::monomial(vec![0]).unwrap();
        let d = one.radial_derivative(1);
        assert_eq!(d.eval(&Point::one(c(0.4, 0.1))).unwrap(), c(0.0, 0.0));

        // monomials are eigenfunctions with exact integer powers
        let z3 = HoloFn::monomial(vec![3]).unwrap();
        let d4 = z3.radial_derivative(4);
        let at = Point::one(c(0.21, -0.68));
        let expect = 81.0 * z3.eval(&at).unwrap();
        assert_eq!(d4.eval(&at).unwrap(), expect);

        let m = HoloFn::monomial(vec![2, 3]).unwrap();
        let at2 = Point::two(c(0.2, 0.1), c(-0.3, 0.25));
        let d2 = m.radial_derivative(2);
        assert_eq!(d2.eval(&at2).unwrap(), 25.0 * m.eval(&at2).unwrap());

        // kernel first derivative: gamma u (1-u)^{-gamma-1}
        let k = HoloFn::kernel(Point::one(c(0.5, 0.0)), 1.0).unwrap();
        let dk = k.radial_derivative(1);
        let v = dk.eval(&Point::one(c(0.5, 0.0))).unwrap();
        assert!((v - c(0.25 / (0.75 * 0.75), 0.0)).norm() < 1e-15);

        // linearity: R distributes over combos symbolically
        let combo = HoloFn::combo(vec![(c(2.0, 1.0), z3.clone()), (c(-0.5, 0.0), k.clone())])
            .unwrap();
        let dc = combo.radial_derivative(1);
        let direct = HoloFn::combo(vec![
            (c(2.0, 1.0), z3.radial_derivative(1)),
            (c(-0.5, 0.0), k.radial_derivative(1)),
        ])
        .unwrap();
        for seed in 0..10u64 {
            let mut s = Sampler::new(seed);
            let z = s.interior_point(1, 0.1);
            let a = dc.eval(&z).unwrap();
            let b = direct.eval(&z).unwrap();
            assert!((a - b).norm() <= 1e-14 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn radial_derivative_matches_finite_differences() {
        // fd - Rf = sum_{j>=2} h^{j-1} C(R,j) f with C(R,2) = R(R-1)/2 and
        // C(R,3) = R(R-1)(R-2)/6, so triangle-inequality budgets from the
        // computed higher derivatives certify the match rigorously
        let h = 1e-5;
        let mut s = Sampler::new(1234);
        let mut checked = 0u32;
        while checked < 1000 {
            let n = if checked % 2 == 0 { 1 } else { 2 };
            let z = s.interior_point(n, 0.15);
            let pick = checked % 3;
            let f = match pick {
                0 => HoloFn::monomial(match n {
                    1 => vec![(checked % 5) as u32],
                    _ => vec![(checked % 3) as u32, (checked % 4) as u32],
                })
                .unwrap(),
                1 => HoloFn::kernel(s.interior_point(n, 0.1), 1.0 + (checked % 4) as f64 * 0.75)
                    .unwrap(),
                _ => HoloFn::combo(vec![
                    (
                        c(1.5, -0.25),
                        HoloFn::kernel(s.interior_point(n, 0.2), 2.0).unwrap(),
                    ),
                    (
                        c(0.5, 0.5),
                        HoloFn::monomial(match n {
                            1 => vec![2],
                            _ => vec![1, 1],
                        })
                        .unwrap(),
                    ),
                ])
                .unwrap(),
            };
            let n1 = f.radial_derivative(1).eval_value(&z).norm();
            let n2 = f.radial_derivative(2).eval_value(&z).norm();
            let n3 = f.radial_derivative(3).eval_value(&z).norm();
            let fd = (f.eval_value(&z.scale(1.0 + h)) - f.eval_value(&z)) / h;
            let exact = f.radial_derivative(1).eval_value(&z);
            let budget = 0.55 * h * (n2 + n1)
                + 0.3 * h * h * (n3 + 3.0 * n2 + 2.0 * n1)
                + 1e-12 * (1.0 + n1);
            assert!(
                (fd - exact).norm() <= budget,
                "fd mismatch at {checked}: {} vs budget {budget}",
                (fd - exact).norm()
            );
            checked += 1;
        }
    }

    #[test]
    fn normalized_kernels_have_unit_norm() {
        let o = opts();
        for (alpha, t, p) in [(0.0, 2.0, 2.0), (1.0, 3.0, 2.0), (0.5, 2.5, 4.0)] {
            let w = RadialWeight::pow_alpha(alpha).unwrap();
            let pole = Point::one(c(0.75, -0.3));
            let g = HoloFn::normalized_kernel(pole, t, p, &w, &o).unwrap();
            let n = g.norm(&w, p, &o).unwrap();
            assert!(
                (n.value - 1.0).abs() < 1e-4,
                "norm {} for t={t} p={p} alpha={alpha}",
                n.value
            );
        }
        // ball case: same machinery, same seed, so the recomputed norm is 1
        let w = RadialWeight::pow_alpha(1.0).unwrap();
        let mut o2 = opts();
        o2.sphere_samples = 1024;
        let pole = Point::two(c(0.5, 0.2), c(0.1, -0.4));
        let g = HoloFn::normalized_kernel(pole, 3.0, 2.0, &w, &o2).unwrap();
        let n = g.norm(&w, 2.0, &o2).unwrap();
        assert!((n.value - 1.0).abs() < 1e-4, "ball norm {}", n.value);
    }

    #[test]
    fn normalized_kernels_decay_on_compacts() {
        let o = opts();
        let w = RadialWeight::pow_alpha(0.0).unwrap();
        let mut sups = Vec::new();
        for az in [0.9, 0.99, 0.999] {
            let g =
                HoloFn::normalized_kernel(Point::one(c(az, 0.0)), 2.0, 2.0, &w, &o).unwrap();
            // max modulus on |zeta| <= 0.5 sits on the rim circle
            let mut sup = 0.0f64;
            for k in 0..256 {
                let zeta = Point::from_polar(0.5, core::f64::consts::TAU * k as f64 / 256.0);
                sup = sup.max(g.eval(&zeta).unwrap().norm());
            }
            sups.push(sup);
        }
        assert!(
            sups[1] < sups[0] * 1.1 && sups[2] < sups[1] * 1.1,
            "sup sequence not decaying: {sups:?}"
        );
        assert!(sups[2] < 0.5 * sups[0], "no end-to-end decay: {sups:?}");
    }

    #[test]
    fn gradient_growth_ratios() {
        let o = opts();
        // constants have zero gradient
        let one = HoloFn::monomial(vec![0]).unwrap();
        assert_eq!(gradient_growth_check(&one, 0.5, 2.0, &o).unwrap(), 0.0);

        // f(z) = z, r = 0.5, p = 2: sup |grad| = 1 and the integral is
        // R^4/2 for the Euclidean radius R = tanh(1.5)
        let id = HoloFn::monomial(vec![1]).unwrap();
        let ratio = gradient_growth_check(&id, 0.5, 2.0, &o).unwrap();
        let rr = 1.5f64.tanh();
        let expect = 2.0 / rr.powi(4);
        assert!(
            (ratio - expect).abs() < 1e-4 * expect,
            "ratio {ratio} vs {expect}"
        );

        // kernel family with poles through |a| = 0.9 stays uniformly finite
        let mut worst = 0.0f64;
        for f in kernel_family(1, 2.0, 3).unwrap() {
            let r = gradient_growth_check(&f, 0.3, 2.0, &o).unwrap();
            assert!(r.is_finite());
            worst = worst.max(r);
        }
        assert!(worst < 1e6, "kernel gradient ratio {worst}");
    }

    #[test]
    fn families_enumerate_their_grids() {
        let ks = kernel_family(1, 2.0, 4).unwrap();
        assert_eq!(ks.len(), 32);
        let radii: Vec<f64> = ks
            .iter()
            .map(|f| match f {
                HoloFn::Kernel { pole, .. } => pole.norm(),
                _ => unreachable!(),
            })
            .collect();
        assert!(radii.iter().any(|r| (r - 0.9375).abs() < 1e-12));

        let ms = monomial_family(2, 3).unwrap();
        assert_eq!(ms.len(), 10);
        let ms1 = monomial_family(1, 5).unwrap();
        assert_eq!(ms1.len(), 6);

        let k2 = kernel_family(2, 3.0, 2).unwrap();
        assert_eq!(k2.len(), 16);
        for f in &k2 {
            assert_eq!(f.dim(), 2);
        }
    }

    #[test]
    fn average_against_measure_machinery() {
        // kernels integrate against V_omega coherently: the mean of
        // |k|^2 over the disc equals the square of its A^2 norm factor
        let o = opts();
        let w = RadialWeight::pow_alpha(0.0).unwrap();
        let k = HoloFn::kernel(Point::one(c(0.6, 0.0)), 1.0).unwrap();
        let whole = Region::whole(1).unwrap();
        let avg = region_average(&w, &whole, |z| k.eval_value(z).norm_sqr(), &o).unwrap();
        // series: sum b^m / (m+1) = -ln(1-b)/b at b = 0.36
        let b = 0.36f64;
        let expect = -(1.0 - b).ln() / b;
        assert!(
            (avg.value - expect).abs() < 1e-5 * expect,
            "{} vs {expect}",
            avg.value
        );
    }

    #[test]
    fn invalid_constructions_are_rejected() {
        assert!(matches!(
            HoloFn::monomial(vec![]),
            Err(TestFnError::BadPowers)
        ));
        assert!(matches!(
            HoloFn::kernel(Point::one(c(0.5, 0.0)), 0.0),
            Err(TestFnError::BadExponent { .. })
        ));
        assert!(HoloFn::kernel(Point::one(c(1.1, 0.0)), 1.0).is_err());
        assert!(matches!(
            HoloFn::combo(vec![]),
            Err(TestFnError::EmptyCombo)
        ));
        let mixed = HoloFn::combo(vec![
            (c(1.0, 0.0), HoloFn::monomial(vec![1]).unwrap()),
            (c(1.0, 0.0), HoloFn::monomial(vec![1, 0]).unwrap()),
        ]);
        assert!(matches!(
            mixed,
            Err(TestFnError::DimensionMismatch { .. })
        ));
        let f = HoloFn::monomial(vec![1]).unwrap();
        assert!(f.eval(&Point::one(c(1.5, 0.0))).is_err());
        assert!(matches!(
            gradient_growth_check(&f, 12.0, 2.0, &opts()),
            Err(TestFnError::RadiusTooLarge { .. })
        ));
    }
}
