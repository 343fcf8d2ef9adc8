//! Finite-depth limit objects: consistent tables of masses on dyadic squares.
//!
//! Level `i` of a table is a `2^i x 2^i` symmetric array whose entry `(x, y)`
//! is the mass of `I_x × I_y`, with `I_x = [x 2^{-i}, (x+1) 2^{-i})`. Each
//! entry equals the sum of its four children on the next level.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matcore::{l1_dist, Matrix, NonNegSymMatrix};
use crate::math;
use crate::par;
use crate::sampler::{Mixture, PolytopeSampler};
use crate::shapes::{directed_l1, shape_sample, shape_sample_with, ShapeCloud};

/// Deepest table the builders accept.
pub const MAX_DEPTH: u32 = 14;

/// Tolerance of [`DyadicTable::validate`], relative to the mass.
pub const CONSISTENCY_TOL: f64 = 1e-9;

/// A node of the infinite binary tree; equivalently the dyadic interval
/// `[index 2^{-depth}, (index+1) 2^{-depth})`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DyadicNode {
    depth: u32,
    index: u64,
}

impl DyadicNode {
    pub const ROOT: DyadicNode = DyadicNode { depth: 0, index: 0 };

    pub fn new(depth: u32, index: u64) -> Result<Self> {
        if depth > 62 || index >= 1u64 << depth {
            return Err(Error::InvalidArgument(alloc::format!("no node {index} at depth {depth}")));
        }
        Ok(DyadicNode { depth, index })
    }

    pub fn depth(self) -> u32 {
        self.depth
    }

    pub fn index(self) -> u64 {
        self.index
    }

    pub fn children(self) -> [DyadicNode; 2] {
        let d = self.depth + 1;
        [DyadicNode { depth: d, index: 2 * self.index }, DyadicNode { depth: d, index: 2 * self.index + 1 }]
    }

    pub fn parent(self) -> Option<DyadicNode> {
        (self.depth > 0).then(|| DyadicNode { depth: self.depth - 1, index: self.index / 2 })
    }
}

/// The interval of `[0, 1)` matching a node under the binary-digit map.
pub fn cantor_map(node: DyadicNode) -> (f64, f64) {
    let w = math::powf(2.0, -(node.depth as f64));
    (node.index as f64 * w, (node.index + 1) as f64 * w)
}

/// First failure found by [`DyadicTable::validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub level: usize,
    pub row: usize,
    pub col: usize,
    pub what: String,
}

/// Outcome of a consistency check.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub ok: bool,
    /// Largest `|T_i(x,y) − Σ children|` over all levels.
    pub max_residual: f64,
    pub first_violation: Option<Violation>,
}

/// A consistent sequence of tables `T_0, …, T_depth`.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicTable {
    levels: Vec<Matrix>,
}

/// One level up: exact 2×2 block sums, added so that the result is exactly
/// symmetric whenever the input is.
pub fn coarsen(level: &Matrix) -> Result<Matrix> {
    let size = level.rows();
    if size < 2 || size % 2 != 0 || level.cols() != size {
        return Err(Error::InvalidArgument(alloc::format!("cannot coarsen a {size}x{} level", level.cols())));
    }
    let half = size / 2;
    let mut out = Matrix::zeros(half, half);
    for x in 0..half {
        for y in 0..half {
            let (a, b) = (2 * x, 2 * y);
            let v = (level.get(a, b) + level.get(a + 1, b + 1)) + (level.get(a, b + 1) + level.get(a + 1, b));
            out.set(x, y, v);
        }
    }
    Ok(out)
}

impl DyadicTable {
    /// Builds all coarser levels from the deepest one.
    pub fn from_leaves(leaves: Matrix) -> Result<Self> {
        let size = leaves.rows();
        if size == 0 || !size.is_power_of_two() || leaves.cols() != size {
            return Err(Error::InvalidArgument(alloc::format!("leaf level must be 2^d x 2^d, got {size}x{}", leaves.cols())));
        }
        NonNegSymMatrix::new(leaves.clone())?;
        let mut levels = vec![leaves];
        while levels.last().map(|l| l.rows()).unwrap_or(1) > 1 {
            let next = coarsen(levels.last().expect("nonempty"))?;
            levels.push(next);
        }
        levels.reverse();
        Ok(DyadicTable { levels })
    }

    /// A table from explicitly given levels; the caller validates it.
    pub fn from_levels(levels: Vec<Matrix>) -> Result<Self> {
        for (i, l) in levels.iter().enumerate() {
            if l.rows() != 1 << i || l.cols() != 1 << i {
                return Err(Error::DimensionMismatch { expected: 1 << i, found: l.rows() });
            }
        }
        if levels.is_empty() {
            return Err(Error::InvalidArgument("a table needs at least the root level".into()));
        }
        Ok(DyadicTable { levels })
    }

    pub fn depth(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }

    pub fn mass(&self) -> f64 {
        self.levels[0].get(0, 0)
    }

    pub fn level(&self, i: usize) -> &Matrix {
        &self.levels[i]
    }

    pub fn levels(&self) -> &[Matrix] {
        &self.levels
    }

    pub fn leaves(&self) -> &Matrix {
        self.levels.last().expect("nonempty")
    }

    /// Deepest level as a matrix source for shapes.
    pub fn leaf_matrix(&self) -> NonNegSymMatrix {
        NonNegSymMatrix::from_trusted(self.leaves().clone())
    }

    /// Row sums of level `i`.
    pub fn marginal(&self, i: usize) -> Vec<f64> {
        self.levels[i].row_sums()
    }

    /// Checks nonnegativity, exact symmetry and consistency within
    /// [`CONSISTENCY_TOL`] times the mass.
    pub fn validate(&self) -> ValidationReport {
        self.validate_with(CONSISTENCY_TOL)
    }

    pub fn validate_with(&self, rel_tol: f64) -> ValidationReport {
        let scale = math::abs(self.mass()).max(f64::MIN_POSITIVE);
        let per_level = par::map_indexed(self.levels.len(), |i| self.check_level(i, rel_tol * scale));
        let mut report = ValidationReport { ok: true, max_residual: 0.0, first_violation: None };
        for (residual, violation) in per_level {
            report.max_residual = report.max_residual.max(residual);
            if report.first_violation.is_none() {
                if let Some(v) = violation {
                    report.ok = false;
                    report.first_violation = Some(v);
                }
            }
        }
        report
    }

    fn check_level(&self, i: usize, tol: f64) -> (f64, Option<Violation>) {
        let level = &self.levels[i];
        let size = level.rows();
        let mut first = None;
        let mut note = |row, col, what: &str| {
            if first.is_none() {
                first = Some(Violation { level: i, row, col, what: what.into() });
            }
        };
        for x in 0..size {
            for y in 0..size {
                let v = level.get(x, y);
                if !(v >= 0.0) {
                    note(x, y, "negative or non-finite entry");
                }
                if v != level.get(y, x) {
                    note(x, y, "asymmetric entry");
                }
            }
        }
        let mut residual: f64 = 0.0;
        if i + 1 < self.levels.len() {
            let fine = &self.levels[i + 1];
            for x in 0..size {
                for y in 0..size {
                    let (a, b) = (2 * x, 2 * y);
                    let s = (fine.get(a, b) + fine.get(a + 1, b + 1)) + (fine.get(a, b + 1) + fine.get(a + 1, b));
                    let r = math::abs(level.get(x, y) - s);
                    residual = residual.max(r);
                    if r > tol {
                        note(x, y, "entry differs from the sum of its children");
                    }
                }
            }
        }
        (residual, first)
    }

    /// Mass of `S_x × S_y`. Nodes of different depth are compared at the
    /// finer one by summing the descendants of the coarser node.
    pub fn measure_rect(&self, x: DyadicNode, y: DyadicNode) -> Result<f64> {
        let depth = self.depth();
        if x.depth > depth || y.depth > depth {
            return Err(Error::InvalidArgument(alloc::format!(
                "node depth {} exceeds table depth {depth}",
                x.depth.max(y.depth)
            )));
        }
        let d = x.depth.max(y.depth);
        let level = &self.levels[d as usize];
        let span = |n: DyadicNode| {
            let shift = d - n.depth;
            let lo = (n.index << shift) as usize;
            lo..lo + (1usize << shift)
        };
        let mut total = 0.0;
        for u in span(x) {
            for v in span(y) {
                total += level.get(u, v);
            }
        }
        Ok(total)
    }

    /// The same table truncated to depth `d`.
    pub fn truncated(&self, d: u32) -> DyadicTable {
        DyadicTable { levels: self.levels[..=(d.min(self.depth()) as usize)].to_vec() }
    }
}

fn check_depth(depth: u32) -> Result<()> {
    if depth > MAX_DEPTH {
        return Err(Error::ResourceCap { what: "table depth", requested: depth as f64, cap: MAX_DEPTH as f64 });
    }
    Ok(())
}

/// The step measure of `S` on `[0,1)²`: `[0,1)` is cut into `n` equal parts
/// and `S_ij` is spread uniformly over part `i` × part `j`. The mass is `γ(S)`.
pub fn table_from_matrix(s: &NonNegSymMatrix, depth: u32) -> Result<DyadicTable> {
    check_depth(depth)?;
    let n = s.n();
    let size = 1usize << depth;
    // Part i overlaps cell u by o / (n 2^d) with o integer (units of 1/(n 2^d)),
    // so O[u][i] = n |I_u ∩ P_i| = o / 2^d is exact.
    let pow = size as u64;
    let spread: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let (p0, p1) = (i as u64 * pow, (i as u64 + 1) * pow);
            let first = (p0 / n as u64) as usize;
            let last = ((p1 - 1) / n as u64) as usize;
            (first..=last.min(size - 1))
                .filter_map(|u| {
                    let (c0, c1) = (u as u64 * n as u64, (u as u64 + 1) * n as u64);
                    let o = p1.min(c1).saturating_sub(p0.max(c0));
                    (o > 0).then(|| (u, o as f64 / pow as f64))
                })
                .collect()
        })
        .collect();
    let csr_rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| s.matrix().row(i).iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect())
        .collect();
    let mut leaves = Matrix::zeros(size, size);
    for i in 0..n {
        for &(j, sv) in &csr_rows[i] {
            for &(u, ou) in &spread[i] {
                let f = ou * sv;
                for &(v, ov) in &spread[j] {
                    leaves.add_at(u, v, f * ov);
                }
            }
        }
    }
    for u in 0..size {
        for v in (u + 1)..size {
            let m = 0.5 * (leaves.get(u, v) + leaves.get(v, u));
            leaves.set(u, v, m);
            leaves.set(v, u, m);
        }
    }
    DyadicTable::from_leaves(leaves)
}

/// The built-in example measures.
#[derive(Clone, Debug, PartialEq)]
pub enum Builtin {
    /// Lebesgue measure on the square.
    Uniform,
    /// `x` uniform, then `(x ± α mod 1, x)` with probability 1/2 each.
    NuAlpha { alpha: f64 },
    /// `NuAlpha` at `α = √2 − 1`.
    MaxRegular,
    /// Limit of subdivided complete graphs: `(a, b)` uniform on the square,
    /// paired with `(a, a)` or `(b, b)` in either order, 1/4 each. The square
    /// is identified with `[0,1)` by interleaving binary digits.
    MuSubdiv,
    /// Independent bit flips with probability `α` on binary expansions.
    FatCube { alpha: f64 },
    /// Uniform measure on the edges of `G^∞` for the graph with this
    /// adjacency matrix, on base-`|V|` expansions.
    Product { adjacency: NonNegSymMatrix },
}

impl Builtin {
    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Uniform => "uniform",
            Builtin::NuAlpha { .. } => "nu_alpha",
            Builtin::MaxRegular => "max_regular",
            Builtin::MuSubdiv => "mu_subdiv",
            Builtin::FatCube { .. } => "fat_cube",
            Builtin::Product { .. } => "product",
        }
    }
}

/// `√2 − 1`.
pub const MAX_REGULAR_ALPHA: f64 = core::f64::consts::SQRT_2 - 1.0;

/// Largest base-`|V|` grid used for product measures.
pub const PRODUCT_GRID_CAP: usize = 8192;

/// Exact cell masses of a builtin measure at the given depth.
pub fn builtin_table(which: &Builtin, depth: u32) -> Result<DyadicTable> {
    check_depth(depth)?;
    let size = 1usize << depth;
    match which {
        Builtin::Uniform => {
            let v = math::powf(4.0, -(depth as f64));
            DyadicTable::from_leaves(Matrix::filled(size, size, v))
        }
        Builtin::NuAlpha { alpha } => nu_alpha(*alpha, depth),
        Builtin::MaxRegular => nu_alpha(MAX_REGULAR_ALPHA, depth),
        Builtin::MuSubdiv => DyadicTable::from_leaves(upper_then_mirror(size, |u, v| mu_subdiv_cell(depth, u, v))),
        Builtin::FatCube { alpha } => {
            if !(*alpha >= 0.0 && *alpha <= 1.0) {
                return Err(Error::InvalidArgument(alloc::format!("fat cube alpha {alpha} outside [0, 1]")));
            }
            let same = (1.0 - alpha) / 2.0;
            let flip = alpha / 2.0;
            let powers_same: Vec<f64> = (0..=depth).map(|e| math::powf(same, e as f64)).collect();
            let powers_flip: Vec<f64> = (0..=depth).map(|e| math::powf(flip, e as f64)).collect();
            DyadicTable::from_leaves(upper_then_mirror(size, |u, v| {
                let h = (u ^ v).count_ones();
                powers_same[(depth - h) as usize] * powers_flip[h as usize]
            }))
        }
        Builtin::Product { adjacency } => product_table(adjacency, depth),
    }
}

/// Fills the upper triangle in parallel over rows and mirrors it.
fn upper_then_mirror(size: usize, cell: impl Fn(usize, usize) -> f64 + Sync + Send) -> Matrix {
    let rows = par::map_indexed(size, |u| (u..size).map(|v| cell(u, v)).collect::<Vec<f64>>());
    let mut m = Matrix::zeros(size, size);
    for (u, row) in rows.into_iter().enumerate() {
        for (off, val) in row.into_iter().enumerate() {
            m.set(u, u + off, val);
            m.set(u + off, u, val);
        }
    }
    m
}

fn nu_alpha(alpha: f64, depth: u32) -> Result<DyadicTable> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!("nu_alpha needs alpha in (0, 1), got {alpha}")));
    }
    let size = 1usize << depth;
    let w = 1.0 / size as f64;
    // λ(I_v ∩ (I_u + s mod 1))
    let shifted = |u: usize, v: usize, s: f64| {
        let (a, b) = (u as f64 * w + s, (u + 1) as f64 * w + s);
        let (c, d) = (v as f64 * w, (v + 1) as f64 * w);
        math::overlap(a, b, c - 1.0, d - 1.0) + math::overlap(a, b, c, d) + math::overlap(a, b, c + 1.0, d + 1.0)
    };
    // Only cells near the two lines y = x ± α carry mass.
    let band = |u: usize, s: f64| -> Vec<usize> {
        let centre = math::floor(math::frac(u as f64 * w + s) * size as f64) as i64;
        (-1..=2).map(|o| (centre + o).rem_euclid(size as i64) as usize).collect()
    };
    let rows = par::map_indexed(size, |u| {
        let mut cells: Vec<(usize, f64)> = Vec::with_capacity(8);
        for s in [alpha, -alpha] {
            for v in band(u, s) {
                if !cells.iter().any(|c| c.0 == v) {
                    cells.push((v, 0.0));
                }
            }
        }
        for c in cells.iter_mut() {
            c.1 = 0.5 * shifted(u, c.0, -alpha) + 0.5 * shifted(u, c.0, alpha);
        }
        cells
    });
    let mut leaves = Matrix::zeros(size, size);
    for (u, cells) in rows.into_iter().enumerate() {
        for (v, val) in cells {
            if v >= u {
                leaves.set(u, v, val);
                leaves.set(v, u, val);
            }
        }
    }
    DyadicTable::from_leaves(leaves)
}

/// Splits the `depth`-bit index of a cell into the digits of the two square
/// coordinates: odd positions (first, third, …) go to `a`, even ones to `b`.
/// Returns the intervals of `a` and of `b`.
fn deinterleave(depth: u32, u: usize) -> ((f64, f64), (f64, f64)) {
    let (mut a, mut b, mut na, mut nb) = (0u64, 0u64, 0u32, 0u32);
    for pos in 0..depth {
        let bit = ((u >> (depth - 1 - pos)) & 1) as u64;
        if pos % 2 == 0 {
            a = 2 * a + bit;
            na += 1;
        } else {
            b = 2 * b + bit;
            nb += 1;
        }
    }
    let wa = math::powf(2.0, -(na as f64));
    let wb = math::powf(2.0, -(nb as f64));
    ((a as f64 * wa, (a + 1) as f64 * wa), (b as f64 * wb, (b + 1) as f64 * wb))
}

fn len(i: (f64, f64)) -> f64 {
    i.1 - i.0
}

fn meet(xs: &[(f64, f64)]) -> f64 {
    let lo = xs.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
    let hi = xs.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    if hi > lo {
        hi - lo
    } else {
        0.0
    }
}

fn mu_subdiv_cell(depth: u32, u: usize, v: usize) -> f64 {
    let (a1, b1) = deinterleave(depth, u);
    let (a2, b2) = deinterleave(depth, v);
    0.25 * (meet(&[a1, a2, b2]) * len(b1)
        + len(a1) * meet(&[b1, a2, b2])
        + meet(&[a1, b1, a2]) * len(b2)
        + len(a2) * meet(&[a1, b1, b2]))
}

fn product_table(adjacency: &NonNegSymMatrix, depth: u32) -> Result<DyadicTable> {
    let v = adjacency.n();
    let gamma = adjacency.gamma();
    if gamma <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    if v < 2 {
        return Err(Error::InvalidArgument("product measures need at least two vertices".into()));
    }
    let size = 1usize << depth;
    let mut digits = 0u32;
    let mut grid = 1usize;
    while grid < size {
        grid = grid.checked_mul(v).filter(|&g| g <= PRODUCT_GRID_CAP).ok_or(Error::ResourceCap {
            what: "product grid",
            requested: math::powf(v as f64, (digits + 1) as f64),
            cap: PRODUCT_GRID_CAP as f64,
        })?;
        digits += 1;
    }
    let p = adjacency.scaled(1.0 / gamma);
    let rows = par::map_indexed(grid, |x| {
        (0..grid)
            .map(|y| {
                let (mut a, mut b, mut w) = (x, y, 1.0);
                for _ in 0..digits {
                    w *= p.get(a % v, b % v);
                    if w == 0.0 {
                        break;
                    }
                    a /= v;
                    b /= v;
                }
                w
            })
            .collect::<Vec<f64>>()
    });
    // Digits are read least significant first above, which relabels grid
    // cells but keeps cell x at the same position in [0,1) as its reversed
    // digit string; undo the reversal.
    let rev: Vec<usize> = (0..grid).map(|x| reverse_digits(x, v, digits)).collect();
    let mut kron = Matrix::zeros(grid, grid);
    for (x, row) in rows.into_iter().enumerate() {
        for (y, w) in row.into_iter().enumerate() {
            kron.set(rev[x], rev[y], w);
        }
    }
    table_from_matrix(&NonNegSymMatrix::from_trusted(kron), depth)
}

fn reverse_digits(mut x: usize, base: usize, digits: u32) -> usize {
    let mut r = 0;
    for _ in 0..digits {
        r = r * base + x % base;
        x /= base;
    }
    r
}

/// Settings for shape clouds of tables and the limit pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableShapeParams {
    pub samples: usize,
    pub seed: u64,
}

impl Default for TableShapeParams {
    fn default() -> Self {
        TableShapeParams { samples: 5000, seed: 0 }
    }
}

/// Shape cloud of a table, sampled from its deepest level.
pub fn shape_of_table(table: &DyadicTable, k: usize, params: TableShapeParams) -> Result<ShapeCloud> {
    shape_sample(&table.leaf_matrix(), k, params.samples, params.seed)
}

/// Settings for [`limit_pipeline`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineParams {
    pub shape: TableShapeParams,
    /// Candidate quotients tried when the last matrix is larger than the
    /// table resolution.
    pub candidates: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams { shape: TableShapeParams { samples: 2000, seed: 0 }, candidates: 64 }
    }
}

/// Output of [`limit_pipeline`].
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineResult {
    pub table: DyadicTable,
    /// Whether the last matrix was embedded directly (no quotient needed).
    pub embedded: bool,
    /// `(k, table → source, source → table)` directed distances between
    /// sampled k-shapes, for `k = 1..=k_max`.
    pub per_k: Vec<(usize, f64, f64)>,
}

/// Finite-depth stand-in for the limit of a convergent sequence: the last
/// matrix is embedded as a step measure, after first being reduced to
/// `2^depth` classes when it is larger. The reduction keeps the candidate
/// quotient whose shapes best cover those of the matrix.
pub fn limit_pipeline(seq: &[NonNegSymMatrix], depth: u32, k_max: usize, params: PipelineParams) -> Result<PipelineResult> {
    check_depth(depth)?;
    let last = seq.last().ok_or(Error::InvalidArgument("empty sequence".into()))?;
    let g = last.gamma();
    if let Some(bad) = seq.iter().find(|s| math::abs(s.gamma() - g) > 1e-6) {
        return Err(Error::InvalidArgument(alloc::format!("masses differ: {} vs {g}", bad.gamma())));
    }
    let size = 1usize << depth;
    let sp = params.shape;
    let source_clouds: Vec<ShapeCloud> =
        (1..=k_max).map(|k| shape_sample(last, k, sp.samples, sp.seed)).collect::<Result<_>>()?;
    let (reduced, embedded) = if last.n() <= size {
        (last.clone(), true)
    } else {
        let sampler =
            PolytopeSampler::with_row_targets(last, vec![last.n() as f64 / size as f64; size], sp.seed, Mixture::default())?;
        let cands = params.candidates.max(1);
        let scores = par::map_indexed(cands, |c| {
            let x = NonNegSymMatrix::from_trusted(sampler.sample(c as u64));
            let mut score = 0.0;
            for (k, src) in (1..=k_max).zip(&source_clouds) {
                if k > size {
                    break;
                }
                let cloud = shape_sample(&x, k, (sp.samples / 4).max(1), sp.seed).expect("valid k");
                score += directed_l1(&src.points, &cloud.points).map(|d| d.0).unwrap_or(f64::INFINITY);
            }
            score
        });
        let best = (0..cands).fold(0, |b, c| if scores[c] < scores[b] { c } else { b });
        (NonNegSymMatrix::from_trusted(sampler.sample(best as u64)), false)
    };
    let table = table_from_matrix(&reduced, depth)?;
    let leaf = table.leaf_matrix();
    let mut per_k = Vec::with_capacity(k_max);
    for (k, src) in (1..=k_max).zip(&source_clouds) {
        let sampler = PolytopeSampler::new(&leaf, k, sp.seed)?;
        let cloud = shape_sample_with(&sampler, sp.samples)?;
        let (to_src, _) = directed_l1(&cloud.points, &src.points)?;
        let (from_src, _) = directed_l1(&src.points, &cloud.points)?;
        per_k.push((k, to_src, from_src));
    }
    Ok(PipelineResult { table, embedded, per_k })
}

/// `ℓ₁` distance between two tables of equal depth, level by level.
pub fn table_l1(a: &DyadicTable, b: &DyadicTable) -> Result<f64> {
    if a.depth() != b.depth() {
        return Err(Error::DimensionMismatch { expected: a.depth() as usize, found: b.depth() as usize });
    }
    l1_dist(a.leaves(), b.leaves())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_builtins() -> Vec<Builtin> {
        let c4 = {
            let mut m = Matrix::zeros(4, 4);
            for i in 0..4 {
                m.set(i, (i + 1) % 4, 1.0);
                m.set((i + 1) % 4, i, 1.0);
            }
            NonNegSymMatrix::new(m).unwrap()
        };
        let k3 = NonNegSymMatrix::from_rows(&[[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]).unwrap();
        vec![
            Builtin::Uniform,
            Builtin::NuAlpha { alpha: 0.25 },
            Builtin::MaxRegular,
            Builtin::MuSubdiv,
            Builtin::FatCube { alpha: 0.3 },
            Builtin::Product { adjacency: c4 },
            Builtin::Product { adjacency: k3 },
        ]
    }

    #[test]
    fn nodes_and_intervals() {
        assert_eq!(cantor_map(DyadicNode::ROOT), (0.0, 1.0));
        assert_eq!(cantor_map(DyadicNode::new(1, 1).unwrap()), (0.5, 1.0));
        assert_eq!(cantor_map(DyadicNode::new(2, 1).unwrap()), (0.25, 0.5));
        assert!(DyadicNode::new(2, 4).is_err());
        let n = DyadicNode::new(3, 5).unwrap();
        assert_eq!(n.children()[1].parent(), Some(n));
        assert_eq!(DyadicNode::ROOT.parent(), None);
    }

    #[test]
    fn coarsen_examples() {
        let flat = Matrix::filled(4, 4, 0.5);
        assert_eq!(coarsen(&flat).unwrap(), Matrix::filled(2, 2, 2.0));
        let mut diag = Matrix::zeros(4, 4);
        for (i, v) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
            diag.set(i, i, *v);
        }
        assert_eq!(coarsen(&diag).unwrap(), Matrix::from_rows(&[[3.0, 0.0], [0.0, 7.0]]).unwrap());
        assert!(coarsen(&Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn builtins_are_consistent_and_reproduce_coarsenings() {
        for b in all_builtins() {
            let t = builtin_table(&b, 8).unwrap();
            let report = t.validate();
            assert!(report.ok, "{}: {:?}", b.name(), report.first_violation);
            assert!(report.max_residual < 1e-12 * t.mass(), "{} residual {}", b.name(), report.max_residual);
            for i in 1..=8 {
                assert_eq!(&coarsen(t.level(i)).unwrap(), t.level(i - 1));
            }
            assert!((t.mass() - 1.0).abs() < 1e-12, "{} mass {}", b.name(), t.mass());
        }
    }

    #[test]
    fn perturbed_leaf_is_located() {
        let t = builtin_table(&Builtin::Uniform, 3).unwrap();
        let mut levels = t.levels().to_vec();
        levels[3].add_at(2, 5, 0.1);
        levels[3].add_at(5, 2, 0.1);
        let bad = DyadicTable::from_levels(levels).unwrap().validate();
        assert!(!bad.ok);
        let v = bad.first_violation.unwrap();
        assert_eq!((v.level, v.row, v.col), (2, 1, 2));
    }

    #[test]
    fn uniform_cells() {
        let t = builtin_table(&Builtin::Uniform, 3).unwrap();
        assert!(t.leaves().data().iter().all(|&v| v == 1.0 / 64.0));
    }

    #[test]
    fn nu_alpha_quarter() {
        // α = 1/4 at depth 2: cells are quarters, mass sits where the
        // intervals differ by ±1/4 mod 1
        let t = builtin_table(&Builtin::NuAlpha { alpha: 0.25 }, 2).unwrap();
        for u in 0..4 {
            for v in 0..4 {
                let diff = (u as i64 - v as i64).rem_euclid(4);
                let expected = if diff == 1 || diff == 3 { 0.125 } else { 0.0 };
                assert!((t.level(2).get(u, v) - expected).abs() < 1e-15);
            }
        }
        assert!(t.marginal(2).iter().all(|r| (r - 0.25).abs() < 1e-15));
    }

    #[test]
    fn nu_alpha_matches_direct_integration() {
        // oracle: integrate the indicator over a fine grid of x
        let alpha = MAX_REGULAR_ALPHA;
        let t = builtin_table(&Builtin::NuAlpha { alpha }, 4).unwrap();
        let steps = 1 << 16;
        let mut oracle = Matrix::zeros(16, 16);
        for i in 0..steps {
            let x = (i as f64 + 0.5) / steps as f64;
            let v = (x * 16.0) as usize;
            for s in [alpha, -alpha] {
                let y = (x + s).rem_euclid(1.0);
                oracle.add_at((y * 16.0) as usize, v, 0.5 / steps as f64);
            }
        }
        assert!(l1_dist(&oracle, t.leaves()).unwrap() < 1e-3);
    }

    #[test]
    fn mu_subdiv_matches_monte_carlo_structure() {
        // marginal: half uniform on the square, half on its diagonal
        let t = builtin_table(&Builtin::MuSubdiv, 4).unwrap();
        let m = t.marginal(4);
        for (u, r) in m.iter().enumerate() {
            let (a, b) = deinterleave(4, u);
            let expected = 0.5 * len(a) * len(b) + 0.5 * meet(&[a, b]);
            assert!((r - expected).abs() < 1e-15);
        }
        let ratio = m.iter().cloned().fold(0.0, f64::max) / m.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(ratio > 1.1);
    }

    #[test]
    fn fat_cube_zero_is_diagonal() {
        let t = builtin_table(&Builtin::FatCube { alpha: 0.0 }, 5).unwrap();
        for u in 0..32 {
            for v in 0..32 {
                let e = if u == v { 1.0 / 32.0 } else { 0.0 };
                assert_eq!(t.leaves().get(u, v), e);
            }
        }
        let half = builtin_table(&Builtin::FatCube { alpha: 0.5 }, 3).unwrap();
        assert!(half.leaves().data().iter().all(|&v| (v - 1.0 / 64.0).abs() < 1e-15));
    }

    #[test]
    fn product_of_power_of_two_graph_is_exact() {
        // K2 has |V| = 2: the product measure is the bit-flip-everything coupling
        let k2 = NonNegSymMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let t = builtin_table(&Builtin::Product { adjacency: k2 }, 4).unwrap();
        for u in 0..16 {
            for v in 0..16 {
                let e = if u ^ v == 15 { 1.0 / 16.0 } else { 0.0 };
                assert_eq!(t.leaves().get(u, v), e);
            }
        }
    }

    #[test]
    fn product_digit_order() {
        // asymmetric-looking graph on 4 vertices: a path 0-1-2-3. Cell of the
        // first digit pair (1, 2) at depth 2 must carry A[1][2]/γ.
        let mut a = Matrix::zeros(4, 4);
        for i in 0..3 {
            a.set(i, i + 1, 1.0);
            a.set(i + 1, i, 1.0);
        }
        let path = NonNegSymMatrix::new(a).unwrap();
        let t = builtin_table(&Builtin::Product { adjacency: path }, 4).unwrap();
        assert!((t.level(2).get(1, 2) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(t.level(2).get(0, 2), 0.0);
        // depth 4 cell ((1,0),(2,1)) in digits: (1/6)(1/6)
        assert!((t.level(4).get(4, 9) - 1.0 / 36.0).abs() < 1e-15);
    }

    #[test]
    fn table_from_matrix_examples() {
        let one = NonNegSymMatrix::from_rows(&[[2.5]]).unwrap();
        let t = table_from_matrix(&one, 3).unwrap();
        assert!(t.leaves().data().iter().all(|&v| v == 2.5 / 64.0));
        let swap = NonNegSymMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(table_from_matrix(&swap, 1).unwrap().level(1), swap.matrix());
        let flat = NonNegSymMatrix::flat(3, 1.0);
        let t = table_from_matrix(&flat, 2).unwrap();
        assert!(t.leaves().data().iter().all(|&v| (v - 1.0 / 16.0).abs() < 1e-16));
    }

    #[test]
    fn measure_rect_examples() {
        let t = builtin_table(&Builtin::Uniform, 3).unwrap();
        assert_eq!(t.measure_rect(DyadicNode::ROOT, DyadicNode::ROOT).unwrap(), 1.0);
        let left = DyadicNode::new(1, 0).unwrap();
        assert_eq!(t.measure_rect(left, DyadicNode::ROOT).unwrap(), 0.5);
        assert!(t.measure_rect(DyadicNode::new(4, 0).unwrap(), DyadicNode::ROOT).is_err());
        let mu = builtin_table(&Builtin::MuSubdiv, 4).unwrap();
        let (x, y) = (DyadicNode::new(2, 1).unwrap(), DyadicNode::new(2, 3).unwrap());
        let mut sum = 0.0;
        for cx in x.children() {
            for cy in y.children() {
                sum += mu.measure_rect(cx, cy).unwrap();
            }
        }
        assert_eq!(mu.measure_rect(x, y).unwrap(), sum);
    }

    #[test]
    fn shapes_of_uniform_table_are_flat() {
        let t = builtin_table(&Builtin::Uniform, 4).unwrap();
        for k in 1..4 {
            let c = shape_of_table(&t, k, TableShapeParams { samples: 50, seed: 1 }).unwrap();
            let flat = 1.0 / (k * k) as f64;
            assert!(c.points.iter().all(|p| p.data().iter().all(|v| (v - flat).abs() < 1e-9)));
        }
    }

    #[test]
    fn pipeline_on_flat_and_aligned_inputs() {
        let flat = NonNegSymMatrix::flat(8, 1.0);
        let r = limit_pipeline(&[flat.clone(), flat], 3, 2, PipelineParams::default()).unwrap();
        assert!(r.embedded);
        assert!(r.table.leaves().data().iter().all(|&v| (v - 1.0 / 64.0).abs() < 1e-15));
        assert!(r.per_k.iter().all(|&(_, a, b)| a < 1e-9 && b < 1e-9));
        let a = NonNegSymMatrix::from_rows(&[[0.0, 0.5], [0.5, 0.0]]).unwrap();
        let r = limit_pipeline(core::slice::from_ref(&a), 1, 2, PipelineParams::default()).unwrap();
        assert_eq!(r.table, table_from_matrix(&a, 1).unwrap());
        let other = NonNegSymMatrix::flat(2, 3.0);
        assert!(limit_pipeline(&[a, other], 1, 2, PipelineParams::default()).is_err());
    }

    proptest! {
        #[test]
        fn tables_from_random_matrices_validate(n in 1usize..9, depth in 0u32..6, seed in any::<u64>()) {
            use rand::Rng;
            let mut r = crate::rng::stream(seed, 77, 0);
            let mut m = Matrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v: f64 = r.random();
                    m.set(i, j, v);
                    m.set(j, i, v);
                }
            }
            let s = NonNegSymMatrix::new(m).unwrap();
            let t = table_from_matrix(&s, depth).unwrap();
            prop_assert!(t.validate().ok);
            prop_assert!((t.mass() - s.gamma()).abs() < 1e-9 * (1.0 + s.gamma()));
        }

        #[test]
        fn nu_alpha_is_regular(alpha in 0.01f64..0.99, depth in 1u32..8) {
            let t = builtin_table(&Builtin::NuAlpha { alpha }, depth).unwrap();
            prop_assert!(t.validate().ok);
            let w = 1.0 / (1u64 << depth) as f64;
            for r in t.marginal(depth as usize) {
                prop_assert!((r - w).abs() < 1e-12);
            }
        }
    }
}
