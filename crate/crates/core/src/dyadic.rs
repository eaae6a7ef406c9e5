//! Bergman trees: dyadic-style decompositions of the ball adapted to the
//! Bergman metric, their direction grids, and the tents they generate.
//!
//! Radial structure: band N is the shell tanh(Nθ) ≤ |z| < tanh((N+1)θ), so
//! bands are slabs of Bergman-metric thickness θ and 1−|z| ≍ e^{−2Nθ} on
//! band N. Direction structure at band N lives at grid level k(N) =
//! round(2Nθ/ln b), which matches the angular scale b^{−k} to the shell
//! depth; with the canonical θ = ½·ln b this is k(N) = N exactly.
//!
//! * n = 1: formulaic b-adic arc grids, b = round(1/δ). Level k has 4·b^k
//!   half-open arcs. The shifted grids carry offsets c/q with q the smallest
//!   of 3, 4, 5 coprime to b (the classical ⅓-shift needs 3 ∤ b; q adapts).
//!   Offsets evolve as c_{k+1} = (b·c_k) mod q, which makes every parent
//!   boundary a child boundary (exact nesting, all integer arithmetic) while
//!   keeping the three offsets distinct at every level. Distinct offsets on
//!   a 1/q lattice guarantee: every angular interval of length ≤ ⅓·arc is
//!   contained in some grid's arc of that level.
//!
//! * n = 2: hierarchical greedy nets on S³ under the nonisotropic quasi
//!   metric ρ(ξ,η) = |1−⟨ξ,η⟩|, with level-k separation ρ_k = ρ₀·b^{−k} and
//!   nested center sets. Cells are nearest-child descent classes, nested by
//!   construction since descent follows the parent links. ρ is invariant
//!   under U(2), so the net is built once and each extra grid is the same
//!   net pushed through a seed-fixed unitary rotation.
//!
//! The root cell of every tree is band 0 with the whole sphere of
//! directions; its tent is the whole ball. Every deeper cell K =
//! (band N) × (direction cell at level k(N)) has tent
//! T(K) = {z : band(z) ≥ N, direction of z lies in K's direction cell},
//! decidable for points of any depth because arc membership is formulaic
//! (n = 1) and tents only ask for net levels the tree carries (n = 2).

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::geometry::{
    bergman_distance, pseudo_metric, radial_projection_sphere, BergmanBall, CarlesonSquare,
    GeometryError, Point,
};
use crate::rng::Sampler;

#[derive(Clone, Debug, PartialEq)]
pub enum TreeError {
    /// δ outside (0.05, 0.7): the arc base b = round(1/δ) degenerates.
    BadDelta { delta: f64 },
    BadTheta { theta: f64 },
    BadDimension { n: usize },
    BadDepth { depth: u32, max: u32 },
    BadGrids { grids: usize, max: usize },
    /// The requested depth would materialize more cells than the cap.
    TooManyCells { estimate: u64, cap: u64 },
    /// n = 2 nets need the candidate pool to resolve the deepest scale.
    PoolTooSmall { pool: usize, need: usize },
    Geometry(GeometryError),
}

impl fmt::Display for TreeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeError::BadDelta { delta } => write!(f, "delta {delta} outside (0.05, 0.7)"),
            TreeError::BadTheta { theta } => write!(f, "theta {theta} must be positive"),
            TreeError::BadDimension { n } => write!(f, "dimension {n} is not 1 or 2"),
            TreeError::BadDepth { depth, max } => {
                write!(f, "depth {depth} outside 1..={max} for this dimension")
            }
            TreeError::BadGrids { grids, max } => {
                write!(f, "grid count {grids} outside 1..={max}")
            }
            TreeError::TooManyCells { estimate, cap } => {
                write!(f, "≈{estimate} cells at the deepest band exceeds cap {cap}")
            }
            TreeError::PoolTooSmall { pool, need } => {
                write!(f, "sphere pool {pool} below required {need}")
            }
            TreeError::Geometry(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for TreeError {}

impl From<GeometryError> for TreeError {
    fn from(e: GeometryError) -> Self {
        TreeError::Geometry(e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeParams {
    pub n: usize,
    pub delta: f64,
    /// Radial band thickness in the Bergman metric; default ½·ln b couples
    /// shells to the direction grids exactly.
    pub theta: Option<f64>,
    pub depth: u32,
    /// Number of shifted (n = 1, at most 3) or rotated (n = 2) grids.
    pub grids: usize,
    pub seed: u64,
    /// Candidate pool size for n = 2 sphere nets; ignored for n = 1.
    pub pool: usize,
}

impl TreeParams {
    pub fn disc(delta: f64, depth: u32) -> Self {
        TreeParams {
            n: 1,
            delta,
            theta: None,
            depth,
            grids: 3,
            seed: 7,
            pool: 0,
        }
    }

    pub fn ball(delta: f64, depth: u32) -> Self {
        TreeParams {
            n: 2,
            delta,
            theta: None,
            depth,
            grids: 8,
            seed: 7,
            pool: 150_000,
        }
    }
}

/// Cell address: grid index, radial band, index within the band's cell list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellRef {
    pub grid: usize,
    pub band: u32,
    pub index: u32,
}

impl CellRef {
    pub fn root(grid: usize) -> Self {
        CellRef {
            grid,
            band: 0,
            index: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    /// Cell center: the direction pushed to Bergman radius (N+½)θ.
    pub center: Point,
    /// Index of the parent cell within band N−1 (0 for band ≤ 1).
    pub parent: u32,
}

/// One net level for n = 2: ρ_k-separated directions on S³, nested across
/// levels (a level's centers are a prefix of the next level's).
#[derive(Clone, Debug)]
struct Net {
    centers: Vec<Point>,
    /// For each center, the index of the center it descended from.
    parent: Vec<u32>,
    /// Inverse of the next level's `parent`; filled when that level is built.
    children: Vec<Vec<u32>>,
}

#[derive(Clone, Debug)]
pub struct BergmanTree {
    n: usize,
    grid: usize,
    theta: f64,
    /// Arc base.
    b: u32,
    /// Shift denominator q (n = 1 only).
    q: u8,
    depth: u32,
    /// k(N) per band, indices 0..=depth.
    k_of: Vec<u32>,
    /// n = 1: offset numerators c_k ∈ 0..q per direction level.
    shift: Vec<u8>,
    /// n = 2: net per direction level (already rotated into this grid).
    nets: Vec<Net>,
    /// Cells per band, index 0 = root band.
    levels: Vec<Vec<Cell>>,
}

/// A family of shifted (n = 1) or rotated (n = 2) Bergman trees sharing the
/// radial band structure. Operators take the whole family: the shifted-grid
/// union is what makes maximal functions and sparse domination work.
#[derive(Clone, Debug)]
pub struct DyadicFamily {
    params: TreeParams,
    theta: f64,
    b: u32,
    trees: Vec<BergmanTree>,
}

const MAX_DEPTH_DISC: u32 = 24;
const MAX_DEPTH_BALL: u32 = 6;
/// Cap on materialized cells at the deepest band.
const CELL_CAP: u64 = 1 << 21;
/// Base separation of the level-0 sphere net.
const RHO0: f64 = 0.8;

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Smallest q ∈ {3,4,5} coprime to b; exists for every b ≤ 59.
fn shift_denominator(b: u32) -> u8 {
    for q in [3u8, 4, 5] {
        if gcd(b, q as u32) == 1 {
            return q;
        }
    }
    unreachable!("no shift denominator for base {b}");
}

impl DyadicFamily {
    pub fn build(params: TreeParams) -> Result<Self, TreeError> {
        if !(params.delta > 0.05 && params.delta < 0.7) {
            return Err(TreeError::BadDelta {
                delta: params.delta,
            });
        }
        let b = (1.0 / params.delta).round().max(2.0) as u32;
        let theta = match params.theta {
            Some(t) if !(t > 0.0 && t.is_finite()) => return Err(TreeError::BadTheta { theta: t }),
            Some(t) => t,
            None => 0.5 * (b as f64).ln(),
        };
        let max_depth = match params.n {
            1 => MAX_DEPTH_DISC,
            2 => MAX_DEPTH_BALL,
            n => return Err(TreeError::BadDimension { n }),
        };
        if params.depth == 0 || params.depth > max_depth {
            return Err(TreeError::BadDepth {
                depth: params.depth,
                max: max_depth,
            });
        }
        let grid_cap = if params.n == 1 { 3 } else { 16 };
        if params.grids == 0 || params.grids > grid_cap {
            return Err(TreeError::BadGrids {
                grids: params.grids,
                max: grid_cap,
            });
        }

        let k_of: Vec<u32> = (0..=params.depth)
            .map(|nn| ((2.0 * nn as f64 * theta) / (b as f64).ln()).round() as u32)
            .collect();
        let k_max = k_of[params.depth as usize];

        // cell-count guard before anything is materialized
        let est = if params.n == 1 {
            4.0 * (b as f64).powi(k_max as i32)
        } else {
            4.0 * (b as f64).powi(2 * k_max as i32)
        };
        if est > CELL_CAP as f64 {
            return Err(TreeError::TooManyCells {
                estimate: est as u64,
                cap: CELL_CAP,
            });
        }

        let trees = if params.n == 1 {
            (0..params.grids)
                .map(|g| build_disc_tree(g, b, theta, params.depth, &k_of))
                .collect()
        } else {
            let need = (20.0 * (b as f64).powi(2 * k_max as i32)).min(1e7) as usize;
            if params.pool < need {
                return Err(TreeError::PoolTooSmall {
                    pool: params.pool,
                    need,
                });
            }
            build_ball_trees(b, theta, &params, &k_of)
        };
        Ok(DyadicFamily {
            params,
            theta,
            b,
            trees,
        })
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.n
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn arc_base(&self) -> u32 {
        self.b
    }

    pub fn grids(&self) -> usize {
        self.trees.len()
    }

    pub fn depth(&self) -> u32 {
        self.params.depth
    }

    pub fn tree(&self, grid: usize) -> &BergmanTree {
        &self.trees[grid]
    }

    pub fn trees(&self) -> &[BergmanTree] {
        &self.trees
    }

    /// Radial band of a point: floor(β(0,|z|)/θ). Band boundaries are
    /// half-open; points within a ulp of a boundary may land on either side.
    pub fn band_of(&self, z: &Point) -> u32 {
        band_of_norm(z.norm(), self.theta)
    }

    /// (inner, outer) Euclidean radii of a band.
    pub fn band_radii(&self, band: u32) -> (f64, f64) {
        (
            (band as f64 * self.theta).tanh(),
            ((band + 1) as f64 * self.theta).tanh(),
        )
    }
}

fn band_of_norm(r: f64, theta: f64) -> u32 {
    if r <= 0.0 {
        return 0;
    }
    (r.atanh() / theta).floor() as u32
}

fn frac_part(x: f64) -> f64 {
    let r = x % 1.0;
    if r < 0.0 {
        r + 1.0
    } else {
        r
    }
}

// ---------------------------------------------------------------------------
// n = 1: formulaic arc grids

const M0: u64 = 4;

fn arcs_at(b: u32, k: u32) -> u64 {
    M0 * (b as u64).pow(k)
}

/// Arc index of angle fraction x ∈ [0,1) at a level with m arcs and offset
/// c/q: arcs are [(qj+c)/(qm), (qj+q+c)/(qm)), j = 0..m−1, cyclically.
fn arc_index(x: f64, m: u64, c: u8, q: u8) -> u32 {
    let y = x * m as f64 - c as f64 / q as f64;
    let j = y.floor() as i64;
    (j.rem_euclid(m as i64)) as u32
}

/// Parent arc (count m_par = m/b, offset c_par) of arc i at the finer level
/// with offset c = (b·c_par) mod q. Exact integer arithmetic on 1/(qm) units.
fn arc_parent(i: u32, b: u32, m_par: u64, c: u8, c_par: u8, q: u8) -> u32 {
    let lhs = q as i64 * i as i64 + c as i64 - b as i64 * c_par as i64;
    let j = lhs.div_euclid(q as i64 * b as i64);
    j.rem_euclid(m_par as i64) as u32
}

/// Midpoint angle fraction of arc j (count m, offset c/q).
fn arc_mid(j: u32, m: u64, c: u8, q: u8) -> f64 {
    (j as f64 + c as f64 / q as f64 + 0.5) / m as f64
}

/// Offset numerators per level: starts spread over 0..q, evolving by ·b
/// mod q. gcd(b,q) = 1 keeps distinct starts distinct at every level.
fn disc_shift_sequence(g: usize, b: u32, q: u8, levels: u32) -> Vec<u8> {
    let mut shifts = Vec::with_capacity(levels as usize + 1);
    let mut c = (((g as u32) * (q as u32) + 1) / 3 % q as u32) as u8;
    for _ in 0..=levels {
        shifts.push(c);
        c = ((b as u64 * c as u64) % q as u64) as u8;
    }
    shifts
}

fn build_disc_tree(g: usize, b: u32, theta: f64, depth: u32, k_of: &[u32]) -> BergmanTree {
    let q = shift_denominator(b);
    let k_max = k_of[depth as usize];
    let shift = disc_shift_sequence(g, b, q, k_max);
    let mut levels: Vec<Vec<Cell>> = Vec::with_capacity(depth as usize + 1);
    levels.push(vec![Cell {
        center: Point::origin(1),
        parent: 0,
    }]);
    for band in 1..=depth {
        let k = k_of[band as usize];
        let m = arcs_at(b, k);
        let t = ((band as f64 + 0.5) * theta).tanh();
        let k_par = k_of[band as usize - 1];
        let mut cells = Vec::with_capacity(m as usize);
        for j in 0..m as u32 {
            let parent = if band == 1 {
                0
            } else {
                // walk the arc hierarchy up (k − k_par) levels
                let mut idx = j;
                let mut kk = k;
                while kk > k_par {
                    let m_par = arcs_at(b, kk - 1);
                    idx = arc_parent(
                        idx,
                        b,
                        m_par,
                        shift[kk as usize],
                        shift[kk as usize - 1],
                        q,
                    );
                    kk -= 1;
                }
                idx
            };
            let phi = core::f64::consts::TAU * arc_mid(j, m, shift[k as usize], q);
            cells.push(Cell {
                center: Point::from_polar(t, phi),
                parent,
            });
        }
        levels.push(cells);
    }
    BergmanTree {
        n: 1,
        grid: g,
        theta,
        b,
        q,
        depth,
        k_of: k_of.to_vec(),
        shift,
        nets: Vec::new(),
        levels,
    }
}

// ---------------------------------------------------------------------------
// n = 2: greedy sphere nets under ρ(ξ,η) = |1−⟨ξ,η⟩|

/// Nearest-center index by linear scan (used only for the small root net).
fn nearest_index(centers: &[Point], p: &Point) -> u32 {
    let mut best = 0u32;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = pseudo_metric(p, c);
        if d < best_d {
            best_d = d;
            best = i as u32;
        }
    }
    best
}

/// Nearest-child descent through net levels 0..=k; the chain of choices is
/// exactly the parent chain, so descent cells are nested by construction.
fn descend(nets: &[Net], k: u32, p: &Point) -> u32 {
    let mut idx = nearest_index(&nets[0].centers, p);
    for kk in 0..k {
        let kids = &nets[kk as usize].children[idx as usize];
        let next = &nets[kk as usize + 1];
        debug_assert!(!kids.is_empty());
        let mut best = kids[0];
        let mut best_d = f64::INFINITY;
        for &cand in kids {
            let d = pseudo_metric(p, &next.centers[cand as usize]);
            if d < best_d {
                best_d = d;
                best = cand;
            }
        }
        idx = best;
    }
    idx
}

/// Build the net hierarchy once in the base frame. ρ is U(2)-invariant, so
/// rotated grids reuse the same combinatorics with rotated centers.
fn build_base_nets(b: u32, k_max: u32, pool: &[Point]) -> Vec<Net> {
    let mut nets: Vec<Net> = Vec::new();
    {
        let mut centers: Vec<Point> = Vec::new();
        for p in pool {
            if centers.iter().all(|c| pseudo_metric(p, c) >= RHO0) {
                centers.push(p.clone());
            }
        }
        let len = centers.len();
        nets.push(Net {
            centers,
            parent: vec![0; len],
            children: Vec::new(),
        });
    }
    for k in 1..=k_max {
        let rho_k = RHO0 * (b as f64).powi(-(k as i32));
        let prev_n = nets[k as usize - 1].centers.len();
        let mut centers = nets[k as usize - 1].centers.clone();
        let mut owner: Vec<u32> = (0..prev_n as u32).collect();

        // neighbor lists at the parent level; the reach covers the descent
        // slack under the quasi-triangle inequality (√ρ is a true metric)
        let reach = 12.0 * rho_k * b as f64;
        let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); prev_n];
        {
            let prev_centers = &nets[k as usize - 1].centers;
            for i in 0..prev_n {
                for j in 0..prev_n {
                    if pseudo_metric(&prev_centers[i], &prev_centers[j]) <= reach {
                        neighbors[i].push(j as u32);
                    }
                }
            }
        }
        let mut bucket: Vec<Vec<u32>> = vec![Vec::new(); prev_n];
        for (idx, &own) in owner.iter().enumerate() {
            bucket[own as usize].push(idx as u32);
        }
        for p in pool {
            let own = descend(&nets, k - 1, p);
            let mut ok = true;
            'check: for &nb in &neighbors[own as usize] {
                for &ci in &bucket[nb as usize] {
                    if pseudo_metric(p, &centers[ci as usize]) < rho_k {
                        ok = false;
                        break 'check;
                    }
                }
            }
            if ok {
                bucket[own as usize].push(centers.len() as u32);
                centers.push(p.clone());
                owner.push(own);
            }
        }

        let mut children: Vec<Vec<u32>> = vec![Vec::new(); prev_n];
        for (idx, &own) in owner.iter().enumerate() {
            children[own as usize].push(idx as u32);
        }
        nets[k as usize - 1].children = children;
        nets.push(Net {
            centers,
            parent: owner,
            children: Vec::new(),
        });
    }
    nets
}

/// Seed-fixed U(2) for grid g (identity for grid 0): Gram-Schmidt on a
/// deterministic complex Gaussian matrix.
fn unitary_for_grid(g: usize, seed: u64) -> Option<[[Complex64; 2]; 2]> {
    if g == 0 {
        return None;
    }
    let mut s = Sampler::substream(seed, 9000 + g as u64);
    let a = s.gaussian_complex();
    let b = s.gaussian_complex();
    let c = s.gaussian_complex();
    let d = s.gaussian_complex();
    let n1 = (a.norm_sqr() + c.norm_sqr()).sqrt();
    let u1 = [a / n1, c / n1];
    let proj = b * u1[0].conj() + d * u1[1].conj();
    let w = [b - proj * u1[0], d - proj * u1[1]];
    let n2 = (w[0].norm_sqr() + w[1].norm_sqr()).sqrt();
    Some([[u1[0], w[0] / n2], [u1[1], w[1] / n2]])
}

fn apply_unitary(u: &[[Complex64; 2]; 2], p: &Point) -> Point {
    let z = p.coords();
    Point::two(
        u[0][0] * z[0] + u[0][1] * z[1],
        u[1][0] * z[0] + u[1][1] * z[1],
    )
}

fn build_ball_trees(b: u32, theta: f64, params: &TreeParams, k_of: &[u32]) -> Vec<BergmanTree> {
    let depth = params.depth;
    let k_max = k_of[depth as usize];

    let mut sampler = Sampler::substream(params.seed, 101);
    let mut pool: Vec<Point> = Vec::with_capacity(params.pool);
    for _ in 0..params.pool {
        pool.push(sampler.sphere_point(2));
    }
    let base = build_base_nets(b, k_max, &pool);

    (0..params.grids)
        .map(|g| {
            let rotation = unitary_for_grid(g, params.seed);
            let nets: Vec<Net> = base
                .iter()
                .map(|net| Net {
                    centers: net
                        .centers
                        .iter()
                        .map(|c| match &rotation {
                            Some(u) => apply_unitary(u, c),
                            None => c.clone(),
                        })
                        .collect(),
                    parent: net.parent.clone(),
                    children: net.children.clone(),
                })
                .collect();

            let mut levels: Vec<Vec<Cell>> = Vec::with_capacity(depth as usize + 1);
            levels.push(vec![Cell {
                center: Point::origin(2),
                parent: 0,
            }]);
            for band in 1..=depth {
                let k = k_of[band as usize];
                let k_par = k_of[band as usize - 1];
                let t = ((band as f64 + 0.5) * theta).tanh();
                let net = &nets[k as usize];
                let mut cells = Vec::with_capacity(net.centers.len());
                for (j, dir) in net.centers.iter().enumerate() {
                    let parent = if band == 1 {
                        0
                    } else {
                        let mut idx = j as u32;
                        let mut kk = k;
                        while kk > k_par {
                            idx = nets[kk as usize].parent[idx as usize];
                            kk -= 1;
                        }
                        idx
                    };
                    cells.push(Cell {
                        center: dir.scale(t),
                        parent,
                    });
                }
                levels.push(cells);
            }

            BergmanTree {
                n: 2,
                grid: g,
                theta,
                b,
                q: 0,
                depth,
                k_of: k_of.to_vec(),
                shift: Vec::new(),
                nets,
                levels,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// tree queries

impl BergmanTree {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dir_level_of_band(&self, band: u32) -> u32 {
        self.k_of[band as usize]
    }

    /// Radial band of a point, not clamped to the built depth.
    pub fn band_of(&self, z: &Point) -> u32 {
        band_of_norm(z.norm(), self.theta)
    }

    pub fn cells(&self, band: u32) -> &[Cell] {
        &self.levels[band as usize]
    }

    pub fn cell(&self, r: CellRef) -> &Cell {
        &self.levels[r.band as usize][r.index as usize]
    }

    pub fn parent(&self, r: CellRef) -> Option<CellRef> {
        if r.band == 0 {
            return None;
        }
        Some(CellRef {
            grid: r.grid,
            band: r.band - 1,
            index: self.cell(r).parent,
        })
    }

    /// Direction-cell index of z at direction level k. The point may be far
    /// deeper than any band the tree stores; only k must be a level the tree
    /// carries (always true for k(band ≤ depth)).
    pub fn dir_index_at(&self, z: &Point, k: u32) -> u32 {
        if self.n == 1 {
            let x = frac_part(z.z().arg() / core::f64::consts::TAU);
            arc_index(x, arcs_at(self.b, k), self.shift[k as usize], self.q)
        } else {
            let norm = z.norm();
            if norm < 1e-300 {
                return 0;
            }
            descend(&self.nets, k, &z.scale(norm.recip()))
        }
    }

    /// Direction-cell ancestor at a coarser level.
    pub fn dir_ancestor(&self, mut dir: u32, mut k: u32, k_to: u32) -> u32 {
        debug_assert!(k_to <= k);
        if self.n == 1 {
            while k > k_to {
                let m_par = arcs_at(self.b, k - 1);
                dir = arc_parent(
                    dir,
                    self.b,
                    m_par,
                    self.shift[k as usize],
                    self.shift[k as usize - 1],
                    self.q,
                );
                k -= 1;
            }
        } else {
            while k > k_to {
                dir = self.nets[k as usize].parent[dir as usize];
                k -= 1;
            }
        }
        dir
    }

    /// The cell of z at a given band (clamped to the tree depth). Cost is
    /// O(band) for the n = 2 descent, O(1) for n = 1.
    pub fn cell_at(&self, z: &Point, band: u32) -> CellRef {
        let band = band.min(self.depth);
        if band == 0 {
            return CellRef::root(self.grid);
        }
        let k = self.k_of[band as usize];
        CellRef {
            grid: self.grid,
            band,
            index: self.dir_index_at(z, k),
        }
    }

    /// Root-to-leaf path of cells containing z, ending at min(band(z), depth).
    pub fn locate(&self, z: &Point) -> Vec<CellRef> {
        let band = band_of_norm(z.norm(), self.theta).min(self.depth);
        let leaf = self.cell_at(z, band);
        let mut path = Vec::with_capacity(band as usize + 1);
        let mut cur = leaf;
        path.push(cur);
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Tent membership: z ∈ T(K) iff band(z) ≥ K.band and the direction of z
    /// lands in K's direction cell. Works for points of any depth.
    pub fn tent_contains(&self, cell: CellRef, z: &Point) -> bool {
        if cell.band == 0 {
            return z.norm() < 1.0;
        }
        let zband = band_of_norm(z.norm(), self.theta);
        if zband < cell.band {
            return false;
        }
        let k = self.k_of[cell.band as usize];
        self.dir_index_at(z, k) == cell.index
    }

    /// Cell membership: band equality plus direction match.
    pub fn cell_contains(&self, cell: CellRef, z: &Point) -> bool {
        if band_of_norm(z.norm(), self.theta) != cell.band {
            return false;
        }
        if cell.band == 0 {
            return true;
        }
        let k = self.k_of[cell.band as usize];
        self.dir_index_at(z, k) == cell.index
    }

    /// Chordal radius of a cap around the cell center that covers the cell's
    /// direction patch at this band (2 covers the whole sphere). The patch
    /// sits in a quasi-metric ball of radius about 2ρ_k around its center,
    /// and ρ(ξ,η) ≥ ‖ξ−η‖²/2 turns that into the chordal bound.
    pub fn dir_cap_chordal(&self, band: u32) -> f64 {
        if band == 0 || self.n == 1 {
            return 2.0;
        }
        let k = self.k_of[band as usize];
        let rho_k = RHO0 * (self.b as f64).powi(-(k as i32));
        (3.0 * (2.0 * rho_k).sqrt()).min(2.0)
    }

    /// Exact tent geometry for n = 1: (r_inner, angle_lo, angle_hi) with
    /// T(K) = {r_inner ≤ |z| < 1} × [angle_lo, angle_hi). The root tent is
    /// the whole disc, returned as (0, 0, τ). angle_hi may exceed τ for the
    /// wrap-around arc.
    pub fn tent_sector(&self, cell: CellRef) -> (f64, f64, f64) {
        assert_eq!(self.n, 1, "tent_sector is the n = 1 exact form");
        if cell.band == 0 {
            return (0.0, 0.0, core::f64::consts::TAU);
        }
        let k = self.k_of[cell.band as usize];
        let m = arcs_at(self.b, k);
        let c = self.shift[k as usize] as u64;
        let q = self.q as u64;
        let j = cell.index as u64;
        let lo = (q * j + c) as f64 / (q * m) as f64;
        let hi = (q * j + q + c) as f64 / (q * m) as f64;
        let r0 = (cell.band as f64 * self.theta).tanh();
        (
            r0,
            core::f64::consts::TAU * lo,
            core::f64::consts::TAU * hi,
        )
    }

    /// Deterministic points inside a cell, for empirical probes. n = 1 draws
    /// exactly (sector form); n = 2 proposes from a cap around the center
    /// and filters by membership.
    pub fn sample_cell(&self, cell: CellRef, count: usize, seed: u64) -> Vec<Point> {
        let mut s = Sampler::substream(seed, 31 * cell.band as u64 + cell.index as u64);
        let (r0, r1) = (
            (cell.band as f64 * self.theta).tanh(),
            ((cell.band + 1) as f64 * self.theta).tanh(),
        );
        let mut out = Vec::with_capacity(count);
        if self.n == 1 {
            let (_, lo, hi) = self.tent_sector(cell);
            for _ in 0..count {
                let r = r0 + (r1 - r0) * s.uniform();
                let phi = lo + (hi - lo) * s.uniform();
                out.push(Point::from_polar(r, phi));
            }
            return out;
        }
        if cell.band == 0 {
            for _ in 0..count {
                out.push(s.euclidean_ball_point(2, r1 * 0.9999));
            }
            return out;
        }
        let center_dir = radial_projection_sphere(&self.cell(cell).center).expect("cell center");
        let k = self.k_of[cell.band as usize];
        let rho_k = RHO0 * (self.b as f64).powi(-(k as i32));
        let cap = 3.0 * (2.0 * rho_k).sqrt();
        let mut guard = 0usize;
        while out.len() < count && guard < count * 20_000 {
            guard += 1;
            let v = s.euclidean_ball_point(2, cap);
            let dir = match radial_projection_sphere(&center_dir.add(&v)) {
                Ok(d) => d,
                Err(_) => continue,
            };
            let r = r0 + (r1 - r0) * s.uniform();
            let p = dir.scale(r);
            if self.cell_contains(cell, &p) {
                out.push(p);
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// square → tent and structural verification

/// Result of mapping a Carleson square into a containing tent.
#[derive(Clone, Debug)]
pub struct SquareToTent {
    pub cell: CellRef,
    /// Bands the apex band was coarsened by to reach containment.
    pub lift: u32,
}

/// The smallest-lift tree cell, over all grids, whose tent contains the
/// Carleson square S(apex): locate the apex, then coarsen until the tent
/// engulfs the square. For n = 1 both sets are annular sectors and the
/// containment check is exact. For n = 2 containment is certified on
/// `samples` points proposed inside the square. The shifted/rotated grids
/// are what keep the lift bounded for apexes near a fixed grid's boundary.
pub fn square_to_tent(
    family: &DyadicFamily,
    apex: &Point,
    samples: usize,
    seed: u64,
) -> Result<SquareToTent, TreeError> {
    apex.ensure_interior()?;
    let apex_band = family.band_of(apex).min(family.depth());
    if apex.norm() < 0.05 {
        // S(apex) is essentially the whole ball: only the root tent works
        return Ok(SquareToTent {
            cell: CellRef::root(0),
            lift: apex_band,
        });
    }
    let r0 = apex.norm();
    let n = family.dim();

    // sampled square points for the n = 2 certification
    let mut pts = Vec::new();
    if n == 2 {
        let square = CarlesonSquare::new(apex.clone())?;
        let dir0 = radial_projection_sphere(apex)?;
        let mut s = Sampler::substream(seed, 555);
        let mut guard = 0usize;
        while pts.len() < samples && guard < samples * 8000 {
            guard += 1;
            // over-covering cap proposal: ρ < 1−r0 implies chordal < √(2(1−r0))
            let cap = 2.0 * (2.0 * (1.0 - r0)).sqrt();
            let v = s.euclidean_ball_point(2, cap);
            let dir = match radial_projection_sphere(&dir0.add(&v)) {
                Ok(d) => d,
                Err(_) => continue,
            };
            let r = r0 + (1.0 - 1e-12 - r0) * s.uniform();
            let p = dir.scale(r);
            if square.contains(&p) {
                pts.push(p);
            }
        }
    }
    let half = 2.0 * ((1.0 - r0) / 2.0).asin();
    let phi_a = if n == 1 { apex.z().arg() } else { 0.0 };

    let contains_square = |tree: &BergmanTree, cell: CellRef| -> bool {
        if cell.band == 0 {
            return true;
        }
        if n == 1 {
            // exact: the square is the sector (r0, 1) × (φ_a − h, φ_a + h)
            let (_, lo, hi) = tree.tent_sector(cell);
            let w = hi - lo;
            let pos = frac_part((phi_a - lo) / core::f64::consts::TAU) * core::f64::consts::TAU;
            pos >= half && pos + half <= w
        } else {
            pts.iter().all(|p| tree.tent_contains(cell, p))
        }
    };

    let mut best: Option<SquareToTent> = None;
    for tree in family.trees() {
        let mut band = apex_band;
        loop {
            let cell = tree.cell_at(apex, band);
            if contains_square(tree, cell) {
                let cand = SquareToTent {
                    cell,
                    lift: apex_band - band,
                };
                if best.as_ref().map_or(true, |b| cand.lift < b.lift) {
                    best = Some(cand);
                }
                break;
            }
            if band == 0 {
                break;
            }
            band -= 1;
        }
    }
    Ok(best.expect("the root tent contains every square"))
}

/// Structural report for a built family: empirical Bergman-ball sandwich
/// radii over probed cells, per-band cell-count growth, and locate and
/// nesting consistency counts (which must be zero).
#[derive(Clone, Debug)]
pub struct TreeReport {
    /// Largest probed r with B(center, r) ⊂ K, worst case over cells.
    pub r_inner: f64,
    /// Largest Bergman distance from a sampled cell point to its center.
    pub r_outer: f64,
    /// Min/max of cells(N+1)/cells(N) over bands N ≥ 1.
    pub growth_min: f64,
    pub growth_max: f64,
    /// Sampled points whose located cell failed to contain them.
    pub locate_mismatches: usize,
    /// Sampled points whose band-(N−1) pullback escaped the parent cell.
    pub nesting_violations: usize,
}

pub fn verify_tree_properties(family: &DyadicFamily, seed: u64) -> TreeReport {
    let mut r_inner = f64::INFINITY;
    let mut r_outer = 0.0f64;
    let mut growth_min = f64::INFINITY;
    let mut growth_max = 0.0f64;
    let mut locate_mismatches = 0usize;
    let mut nesting_violations = 0usize;
    let mut s = Sampler::substream(seed, 77);

    for tree in family.trees() {
        for band in 1..=tree.depth() {
            let cells = tree.cells(band);
            if band >= 2 {
                let g = cells.len() as f64 / tree.cells(band - 1).len() as f64;
                growth_min = growth_min.min(g);
                growth_max = growth_max.max(g);
            }
            let probe = cells.len().min(6);
            for pi in 0..probe {
                let idx = (pi * cells.len()) / probe;
                let cref = CellRef {
                    grid: tree.grid(),
                    band,
                    index: idx as u32,
                };
                let center = &tree.cell(cref).center;
                let pts = tree.sample_cell(cref, 40, seed ^ (band as u64));
                for p in &pts {
                    let beta = bergman_distance(center, p).expect("cell points are interior");
                    r_outer = r_outer.max(beta);
                    let parent = tree.parent(cref).unwrap();
                    if !tree.cell_contains(parent, &radial_pullback(tree, p, band - 1)) {
                        nesting_violations += 1;
                    }
                }
                // largest Bergman ball at the center that stays inside
                let mut r = tree.theta() * 0.5;
                loop {
                    let ball = BergmanBall::new(center.clone(), r).unwrap();
                    let mut inside = true;
                    for _ in 0..30 {
                        if !tree.cell_contains(cref, &ball.sample(&mut s)) {
                            inside = false;
                            break;
                        }
                    }
                    if inside || r < 1e-4 {
                        r_inner = r_inner.min(r);
                        break;
                    }
                    r *= 0.7;
                }
            }
        }
        for _ in 0..60 {
            let z = s.interior_point(tree.dim(), 1e-9);
            let band = band_of_norm(z.norm(), tree.theta()).min(tree.depth());
            let leaf = tree.cell_at(&z, band);
            if !tree.cell_contains(leaf, &radial_pullback(tree, &z, band)) {
                locate_mismatches += 1;
            }
            // independently recomputed coarser cells must match parent links
            let mut cur = leaf;
            while let Some(par) = tree.parent(cur) {
                if tree.cell_at(&z, par.band) != par {
                    locate_mismatches += 1;
                }
                cur = par;
            }
        }
    }
    TreeReport {
        r_inner,
        r_outer,
        growth_min,
        growth_max,
        locate_mismatches,
        nesting_violations,
    }
}

/// Same direction, radius moved to the middle of band `target`.
fn radial_pullback(tree: &BergmanTree, p: &Point, target: u32) -> Point {
    let t = ((target as f64 + 0.5) * tree.theta()).tanh();
    p.scale(t / p.norm())
}
