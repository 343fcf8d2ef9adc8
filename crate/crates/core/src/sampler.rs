//! Random points of the transportation polytope K(k,n) and their quotients.
//!
//! Sample `i` is generated from its own stream `(seed, i)`. Each sample is one
//! of seven kinds:
//!
//! * a uniformly random ordering of the vertices cut into consecutive
//!   segments of the class sizes (a balanced partition, fractional on the
//!   boundary vertices when `k` does not divide `n`);
//! * a random positive matrix scaled into the polytope by alternating
//!   row/column normalization;
//! * the natural vertex order cut into `t` blocks, each block split among the
//!   classes (cyclic or shuffled class order);
//! * vertices sorted by a random combination of extreme eigenvectors of `S`,
//!   cut into class segments;
//! * a random partition improved by pairwise mass transfers toward a local
//!   maximum of `<W, M S M^T>` for a random symmetric direction `W`;
//! * the same search moving the quotient toward a random target matrix,
//!   which spreads points over the faces of the shape;
//! * a convex combination of two vertex-type samples.
//!
//! The polytope is convex, so every kind lands in K(k,n).

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matcore::{FractionalPartitionMatrix, Matrix, NonNegSymMatrix};
use crate::math;
use crate::rng::{self, domain};

/// Identifies the sampling scheme in output files.
pub const SAMPLER_VERSION: &str = "kmix-2";

const SINKHORN_MAX_ITER: usize = 200;
const SINKHORN_TOL: f64 = 1e-10;
const SPECTRAL_ITERS: usize = 40;
const MAX_BLOCKS: usize = 64;
/// Up to this many vertices the swap search scans all pairs.
const FULL_SCAN_N: usize = 64;
const MAX_SWAP_PASSES: usize = 8;
/// Random pairs tried per vertex when the graph is larger, up to a cap.
const SWAP_TRIES_PER_VERTEX: usize = 16;
const MAX_RANDOM_TRIES: usize = 4096;

/// Mirror-descent settings of the target projection.
const PROJECT_BLEND: f64 = 0.1;
const PROJECT_ITERS: usize = 40;
const PROJECT_MIN_ITERS: usize = 20;
const PROJECT_SINKHORN_ITER: usize = 50;
const PROJECT_SINKHORN_TOL: f64 = 1e-7;

/// `a^T M b` for a row-major `k x k` matrix.
fn bilinear(m: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let k = a.len();
    (0..k).map(|i| a[i] * (0..k).map(|j| m[i * k + j] * b[j]).sum::<f64>()).sum()
}

/// Minimum over `[0, 1]` of `c1 t + c2 t^2`, as `(t, value)`.
fn minimize_quadratic(c: [f64; 2]) -> (f64, f64) {
    let f = |t: f64| t * (c[0] + t * c[1]);
    let mut best = (0.0, 0.0);
    let mut consider = |t: f64| {
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    };
    consider(1.0);
    if c[1] > 0.0 {
        consider((-c[0] / (2.0 * c[1])).clamp(0.0, 1.0));
    }
    best
}

/// Relative frequency of each sample kind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mixture {
    pub random_partition: f64,
    pub sinkhorn: f64,
    pub interval: f64,
    pub spectral: f64,
    pub directional: f64,
    pub target: f64,
    pub convex: f64,
}

impl Default for Mixture {
    fn default() -> Self {
        Mixture {
            random_partition: 0.15,
            sinkhorn: 0.1,
            interval: 0.15,
            spectral: 0.1,
            directional: 0.15,
            target: 0.15,
            convex: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    RandomPartition,
    Sinkhorn,
    Interval,
    Spectral,
    Directional,
    Target,
    Convex,
}

/// Compressed rows of a symmetric matrix.
#[derive(Clone, Debug)]
pub(crate) struct Csr {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Csr {
    pub(crate) fn new(s: &NonNegSymMatrix) -> Self {
        let n = s.n();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for x in 0..n {
            for (y, &v) in s.matrix().row(x).iter().enumerate() {
                if v != 0.0 {
                    cols.push(y as u32);
                    vals.push(v);
                }
            }
            offsets.push(cols.len());
        }
        Csr { offsets, cols, vals }
    }

    #[inline]
    pub(crate) fn row(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.offsets[x], self.offsets[x + 1]);
        self.cols[a..b].iter().zip(&self.vals[a..b]).map(|(&c, &v)| (c as usize, v))
    }

    pub(crate) fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `S_xy`; column indices within a row are ascending.
    fn entry(&self, x: usize, y: usize) -> f64 {
        let (a, b) = (self.offsets[x], self.offsets[x + 1]);
        match self.cols[a..b].binary_search(&(y as u32)) {
            Ok(i) => self.vals[a + i],
            Err(_) => 0.0,
        }
    }

    /// `out = S v`.
    pub(crate) fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (x, o) in out.iter_mut().enumerate() {
            *o = self.row(x).map(|(y, s)| s * v[y]).sum();
        }
    }
}

/// A point of the polytope stored vertex-major: `weights[x * k + i] = M[i][x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    k: usize,
    n: usize,
    weights: Vec<f64>,
}

impl Witness {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn weight(&self, class: usize, vertex: usize) -> f64 {
        self.weights[vertex * self.k + class]
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.weights
    }


    pub(crate) fn from_weights(k: usize, n: usize, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), k * n);
        Witness { k, n, weights }
    }

    /// The `k x n` matrix.
    pub fn to_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.k, self.n);
        for x in 0..self.n {
            for i in 0..self.k {
                m.set(i, x, self.weight(i, x));
            }
        }
        m
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        let (k, n) = (m.rows(), m.cols());
        let mut weights = vec![0.0; k * n];
        for i in 0..k {
            for x in 0..n {
                weights[x * k + i] = m.get(i, x);
            }
        }
        Witness { k, n, weights }
    }

    pub fn to_partition(&self) -> Result<FractionalPartitionMatrix> {
        FractionalPartitionMatrix::new(self.to_matrix())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for x in 0..self.n {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.weight(i, x);
            }
        }
        out
    }

    fn blend(a: &Witness, b: &Witness, lambda: f64) -> Witness {
        let weights = a.weights.iter().zip(&b.weights).map(|(p, q)| lambda * p + (1.0 - lambda) * q).collect();
        Witness { k: a.k, n: a.n, weights }
    }
}

/// Assigns vertices, taken in `order`, to consecutive segments of the mass
/// line `[0, n)`; vertex at position `p` covers `[p, p + 1)`.
fn interval_fill(order: &[usize], segments: &[(usize, f64)], k: usize) -> Witness {
    let n = order.len();
    let mut weights = vec![0.0; n * k];
    let mut seg = 0;
    let mut seg_start = 0.0;
    for (p, &x) in order.iter().enumerate() {
        let (lo, hi) = (p as f64, (p + 1) as f64);
        let mut filled = 0.0;
        while seg < segments.len() {
            let (class, len) = segments[seg];
            let seg_end = if seg + 1 == segments.len() { n as f64 } else { seg_start + len };
            let ov = math::overlap(lo, hi, seg_start, seg_end);
            if ov > 0.0 {
                weights[x * k + class] += ov;
                filled += ov;
            }
            if seg_end <= hi {
                seg += 1;
                seg_start = seg_end;
            } else {
                break;
            }
        }
        // rounding at segment ends must not leave a column short of 1
        if filled != 1.0 && filled > 0.0 {
            for w in &mut weights[x * k..(x + 1) * k] {
                *w /= filled;
            }
        }
    }
    Witness { k, n, weights }
}

/// Scales a positive vertex-major weight array so every column sums to 1 and
/// class `i` sums to `targets[i]`. Returns whether the row tolerance was met.
pub(crate) fn sinkhorn(weights: &mut [f64], k: usize, targets: &[f64], max_iter: usize, tol: f64) -> bool {
    let n = weights.len() / k;
    let mut sums = vec![0.0; k];
    let mut converged = false;
    for _ in 0..max_iter {
        normalize_columns(weights, k);
        sums.iter_mut().for_each(|s| *s = 0.0);
        for x in 0..n {
            for i in 0..k {
                sums[i] += weights[x * k + i];
            }
        }
        let violation = sums
            .iter()
            .zip(targets)
            .map(|(s, t)| if *t > 0.0 { math::abs(s - t) / t } else { *s })
            .fold(0.0, f64::max);
        if violation <= tol {
            converged = true;
            break;
        }
        let scale: Vec<f64> = sums.iter().zip(targets).map(|(s, t)| if *s > 0.0 { t / s } else { 0.0 }).collect();
        for x in 0..n {
            for i in 0..k {
                weights[x * k + i] *= scale[i];
            }
        }
    }
    normalize_columns(weights, k);
    converged
}

fn normalize_columns(weights: &mut [f64], k: usize) {
    for col in weights.chunks_mut(k) {
        let s: f64 = col.iter().sum();
        if s > 0.0 {
            col.iter_mut().for_each(|w| *w /= s);
        } else {
            col.iter_mut().for_each(|w| *w = 1.0 / k as f64);
        }
    }
}

/// `W^T S W` for a vertex-major witness, exactly symmetric.
pub(crate) fn quotient_csr(csr: &Csr, w: &Witness) -> Matrix {
    let (k, n) = (w.k, w.n);
    let nz = w.weights.iter().filter(|&&v| v != 0.0).count();
    let avg = nz as f64 / n.max(1) as f64;
    let mut q = Matrix::zeros(k, k);
    if avg * avg <= 2.0 * k as f64 {
        let mut start = Vec::with_capacity(n + 1);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(nz);
        start.push(0);
        for x in 0..n {
            for i in 0..k {
                let v = w.weights[x * k + i];
                if v != 0.0 {
                    entries.push((i, v));
                }
            }
            start.push(entries.len());
        }
        for x in 0..n {
            let ex = &entries[start[x]..start[x + 1]];
            if ex.is_empty() {
                continue;
            }
            for (y, s) in csr.row(x) {
                for &(a, wa) in ex {
                    let f = s * wa;
                    for &(b, wb) in &entries[start[y]..start[y + 1]] {
                        q.add_at(a, b, f * wb);
                    }
                }
            }
        }
    } else {
        let mut p = vec![0.0; n * k];
        for x in 0..n {
            let px = &mut p[x * k..(x + 1) * k];
            for (y, s) in csr.row(x) {
                let wy = &w.weights[y * k..(y + 1) * k];
                for (a, b) in px.iter_mut().zip(wy) {
                    *a += s * b;
                }
            }
        }
        for x in 0..n {
            let wx = &w.weights[x * k..(x + 1) * k];
            let px = &p[x * k..(x + 1) * k];
            for i in 0..k {
                if wx[i] == 0.0 {
                    continue;
                }
                for j in 0..k {
                    q.add_at(i, j, wx[i] * px[j]);
                }
            }
        }
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let v = 0.5 * (q.get(i, j) + q.get(j, i));
            q.set(i, j, v);
            q.set(j, i, v);
        }
    }
    q
}

/// The matrix a sampler takes quotients of: either stored sparsely, or as
/// `X = T S T^T` where row `u` of `T` is `types[row_type[u]]`.
#[derive(Clone, Debug)]
enum Operator {
    Plain(Csr),
    /// `type_quotient = types S types^T`, so `X_uv = type_quotient[t_u][t_v]`.
    Factored { s: Csr, row_type: Vec<usize>, types: Matrix, type_quotient: Matrix },
}

impl Operator {
    fn is_zero(&self) -> bool {
        match self {
            Operator::Plain(c) | Operator::Factored { s: c, .. } => c.nnz() == 0,
        }
    }

    fn max_row_sum(&self, n: usize) -> f64 {
        let ones = vec![1.0; n];
        let mut out = vec![0.0; n];
        self.apply(&ones, &mut out);
        out.into_iter().fold(0.0, f64::max)
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Operator::Plain(c) => c.apply(v, out),
            Operator::Factored { s, row_type, types, .. } => {
                let mut agg = vec![0.0; types.rows()];
                for (u, &t) in row_type.iter().enumerate() {
                    agg[t] += v[u];
                }
                let n = types.cols();
                let mut y = vec![0.0; n];
                for (t, &a) in agg.iter().enumerate() {
                    if a != 0.0 {
                        for (yy, tv) in y.iter_mut().zip(types.row(t)) {
                            *yy += a * tv;
                        }
                    }
                }
                let mut z = vec![0.0; n];
                s.apply(&y, &mut z);
                let per_type: Vec<f64> =
                    (0..types.rows()).map(|t| types.row(t).iter().zip(&z).map(|(a, b)| a * b).sum()).collect();
                for (o, &t) in out.iter_mut().zip(row_type) {
                    *o = per_type[t];
                }
            }
        }
    }

    /// `S W` for a vertex-major witness, vertex-major `n x k`.
    fn apply_block(&self, w: &Witness) -> Vec<f64> {
        let k = w.k;
        let n = w.n;
        let mut out = vec![0.0; n * k];
        match self {
            Operator::Plain(c) => {
                for x in 0..n {
                    let ox = &mut out[x * k..(x + 1) * k];
                    for (y, s) in c.row(x) {
                        for (o, v) in ox.iter_mut().zip(&w.weights[y * k..(y + 1) * k]) {
                            *o += s * v;
                        }
                    }
                }
            }
            Operator::Factored { .. } => {
                let mut col = vec![0.0; n];
                let mut res = vec![0.0; n];
                for i in 0..k {
                    for (x, c) in col.iter_mut().enumerate() {
                        *c = w.weights[x * k + i];
                    }
                    self.apply(&col, &mut res);
                    for (x, r) in res.iter().enumerate() {
                        out[x * k + i] = *r;
                    }
                }
            }
        }
        out
    }

    fn entry(&self, x: usize, y: usize) -> f64 {
        match self {
            Operator::Plain(c) => c.entry(x, y),
            Operator::Factored { row_type, type_quotient, .. } => type_quotient.get(row_type[x], row_type[y]),
        }
    }

    /// Calls `f(x, X_xu)` for the nonzero entries of column `u`.
    fn for_each_in_column(&self, u: usize, mut f: impl FnMut(usize, f64)) {
        match self {
            Operator::Plain(c) => c.row(u).for_each(|(x, v)| f(x, v)),
            Operator::Factored { row_type, type_quotient, .. } => {
                let tu = row_type[u];
                for (x, &t) in row_type.iter().enumerate() {
                    let v = type_quotient.get(t, tu);
                    if v != 0.0 {
                        f(x, v);
                    }
                }
            }
        }
    }

    fn quotient(&self, w: &Witness) -> Matrix {
        match self {
            Operator::Plain(c) => quotient_csr(c, w),
            Operator::Factored { s, row_type, types, .. } => {
                let k = w.k;
                let mut agg = vec![0.0; types.rows() * k];
                for (u, &t) in row_type.iter().enumerate() {
                    for i in 0..k {
                        agg[t * k + i] += w.weights[u * k + i];
                    }
                }
                let n = types.cols();
                let mut pulled = vec![0.0; n * k];
                for t in 0..types.rows() {
                    for (y, &tv) in types.row(t).iter().enumerate() {
                        if tv != 0.0 {
                            for i in 0..k {
                                pulled[y * k + i] += agg[t * k + i] * tv;
                            }
                        }
                    }
                }
                quotient_csr(s, &Witness { k, n, weights: pulled })
            }
        }
    }
}

/// Orthonormal bases of the top (excluding the leading vector) and bottom
/// eigenspaces of `S`, approximated by subspace iteration.
#[derive(Clone, Debug, Default)]
struct Spectral {
    top: Vec<Vec<f64>>,
    bottom: Vec<Vec<f64>>,
}

impl Spectral {
    fn compute(op: &Operator, n: usize, seed: u64) -> Self {
        if n < 3 || op.is_zero() {
            return Spectral::default();
        }
        let sigma = op.max_row_sum(n);
        let mut rng = rng::stream(seed, domain::SPECTRAL, 0);
        let top = subspace_iteration(op, n, sigma, (n - 1).min(4), &mut rng);
        let bottom = subspace_iteration(op, n, -sigma, (n - 1).min(3), &mut rng);
        Spectral { top: top.into_iter().skip(1).collect(), bottom }
    }
}

/// Iterates `v -> S v + shift v` (or `|shift| v - S v` for negative shift) on
/// a block of `r` vectors with Gram-Schmidt after every step.
fn subspace_iteration(op: &Operator, n: usize, shift: f64, r: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut block: Vec<Vec<f64>> = (0..r).map(|_| (0..n).map(|_| rng::normal(rng)).collect()).collect();
    orthonormalize(&mut block);
    let mut tmp = vec![0.0; n];
    for _ in 0..SPECTRAL_ITERS {
        for v in block.iter_mut() {
            op.apply(v, &mut tmp);
            for (a, s) in v.iter_mut().zip(&tmp) {
                *a = if shift >= 0.0 { s + shift * *a } else { -shift * *a - s };
            }
        }
        orthonormalize(&mut block);
    }
    block
}

fn orthonormalize(block: &mut [Vec<f64>]) {
    for i in 0..block.len() {
        for j in 0..i {
            let (done, rest) = block.split_at_mut(i);
            let d: f64 = done[j].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
            for (a, b) in rest[0].iter_mut().zip(&done[j]) {
                *a -= d * b;
            }
        }
        let norm = math::sqrt(block[i].iter().map(|a| a * a).sum());
        if norm > 1e-300 {
            block[i].iter_mut().for_each(|a| *a /= norm);
        }
    }
}

/// Classes of identical rows whose sizes are all multiples of `g > 1`: the
/// source is then the `g`-fold blow-up of its restriction to `reps`.
/// `map[x]` is the position in `reps` standing in for vertex `x`.
#[derive(Clone, Debug)]
struct Reduction {
    g: usize,
    reps: Vec<usize>,
    map: Vec<usize>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn twin_reduction(csr: &Csr, n: usize) -> Option<Reduction> {
    let row = |x: usize| {
        let (a, b) = (csr.offsets[x], csr.offsets[x + 1]);
        (&csr.cols[a..b], &csr.vals[a..b])
    };
    let same = |x: usize, y: usize| row(x) == row(y);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        let ((cx, vx), (cy, vy)) = (row(x), row(y));
        cx.cmp(cy)
            .then_with(|| vx.iter().zip(vy).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal))
            .then(x.cmp(&y))
    });
    let mut classes: Vec<&[usize]> = Vec::new();
    let mut start = 0;
    for i in 1..=n {
        if i == n || !same(order[start], order[i]) {
            classes.push(&order[start..i]);
            start = i;
        }
    }
    let g = classes.iter().fold(0, |g, c| gcd(g, c.len()));
    if g <= 1 {
        return None;
    }
    // every g-th member, so a blow-up by t of a graph with twin factor h
    // picks copy 0 of the vertices the graph itself would keep at factor h
    let mut reps: Vec<usize> = classes.iter().flat_map(|c| c.iter().copied().step_by(g)).collect();
    reps.sort_unstable();
    let mut pos = vec![0; n];
    for (p, &r) in reps.iter().enumerate() {
        pos[r] = p;
    }
    let mut map = vec![0; n];
    for c in &classes {
        for (j, &x) in c.iter().enumerate() {
            map[x] = pos[c[j - j % g]];
        }
    }
    Some(Reduction { g, reps, map })
}

/// The source as given. The engine sees it scaled to unit mass, and reduced
/// when `map` is set.
#[derive(Clone, Debug)]
struct Lift {
    n: usize,
    map: Option<Vec<usize>>,
    op: Operator,
    mass: f64,
    targets: Vec<f64>,
}

/// Draws points of K(k,n) (or of the polytope with general row sums) and
/// evaluates their quotients against a fixed matrix.
///
/// If the vertices fall into classes of identical rows whose sizes are all
/// multiples of some `g > 1`, the source is a `g`-fold blow-up of a smaller
/// matrix and its shape is that of the smaller one scaled by `g^2`. Points are
/// then drawn for the smaller matrix and lifted by giving each vertex the
/// column of its representative, so every blow-up of a matrix reuses the same
/// witness stream. Internally the source is scaled to unit mass, which makes
/// the stream independent of scale as well.
#[derive(Clone, Debug)]
pub struct PolytopeSampler {
    engine: Engine,
    lift: Option<Lift>,
}

impl PolytopeSampler {
    /// Sampler for K(k,n): row sums `n/k`.
    pub fn new(source: &NonNegSymMatrix, k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        let n = source.n() as f64;
        Self::with_row_targets(source, vec![n / k as f64; k], seed, Mixture::default())
    }

    /// Sampler for the polytope with column sums 1 and row sums `targets`
    /// (which must sum to `n`).
    pub fn with_row_targets(source: &NonNegSymMatrix, targets: Vec<f64>, seed: u64, mix: Mixture) -> Result<Self> {
        let n = source.n();
        let csr = Csr::new(source);
        // Dividing by the largest entry first makes the unit-mass copy
        // independent of the input's scale, bit for bit when all nonzero
        // entries are equal.
        let unit = |m: NonNegSymMatrix| {
            let top = m.matrix().data().iter().fold(0.0f64, |a, &b| a.max(b));
            if !(top > 0.0) {
                return m;
            }
            let n = m.n();
            let ratios = Matrix::from_vec(n, n, m.matrix().data().iter().map(|x| x / top).collect()).expect("same shape");
            let m = NonNegSymMatrix::from_trusted(ratios);
            m.scaled(1.0 / m.gamma())
        };
        let (engine, map) = match twin_reduction(&csr, n) {
            None => {
                let norm = unit(source.clone());
                (Engine::build(Operator::Plain(Csr::new(&norm)), n, norm.gamma(), targets.clone(), seed, mix)?, None)
            }
            Some(red) => {
                let m = red.reps.len();
                let mut sub = Matrix::zeros(m, m);
                for (a, &x) in red.reps.iter().enumerate() {
                    for (b, &y) in red.reps.iter().enumerate() {
                        sub.set(a, b, source.matrix().get(x, y));
                    }
                }
                let sub = unit(NonNegSymMatrix::from_trusted(sub));
                let scaled: Vec<f64> = targets.iter().map(|t| t / red.g as f64).collect();
                (Engine::build(Operator::Plain(Csr::new(&sub)), m, sub.gamma(), scaled, seed, mix)?, Some(red.map))
            }
        };
        let lift = Lift { n, map, op: Operator::Plain(csr), mass: source.gamma(), targets };
        Ok(PolytopeSampler { engine, lift: Some(lift) })
    }

    /// Sampler for K(k,m) against `X = T S T^T`, where row `u` of the `m x n`
    /// matrix `T` is row `row_type[u]` of `types`. `X` is never formed.
    pub fn factored(s: &NonNegSymMatrix, row_type: Vec<usize>, types: Matrix, k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        if types.cols() != s.n() {
            return Err(Error::DimensionMismatch { expected: s.n(), found: types.cols() });
        }
        if row_type.iter().any(|&t| t >= types.rows()) {
            return Err(Error::InvalidArgument("row type out of range".into()));
        }
        let m = row_type.len();
        let csr = Csr::new(s);
        let d = types.rows();
        let mut type_quotient = Matrix::zeros(d, d);
        let mut z = vec![0.0; s.n()];
        for t in 0..d {
            csr.apply(types.row(t), &mut z);
            for u in 0..d {
                type_quotient.set(u, t, types.row(u).iter().zip(&z).map(|(a, b)| a * b).sum());
            }
        }
        type_quotient.mirror_upper();
        let op = Operator::Factored { s: csr, row_type, types, type_quotient };
        let ones = vec![1.0; m];
        let mut out = vec![0.0; m];
        op.apply(&ones, &mut out);
        let mass = out.iter().sum();
        let engine = Engine::build(op, m, mass, vec![m as f64 / k as f64; k], seed, Mixture::default())?;
        Ok(PolytopeSampler { engine, lift: None })
    }

    /// The same witness stream evaluated against another source of equal
    /// size. The spectral orderings stay those of the original source, so
    /// sample `i` of both samplers uses the same polytope point.
    pub fn rebind(&self, other: &NonNegSymMatrix) -> Result<PolytopeSampler> {
        if other.n() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: other.n() });
        }
        let op = Operator::Plain(Csr::new(other));
        let mut out = self.clone();
        match &mut out.lift {
            Some(l) => {
                l.op = op;
                l.mass = other.gamma();
            }
            None => {
                out.engine.op = op;
                out.engine.mass = other.gamma();
            }
        }
        Ok(out)
    }

    pub fn k(&self) -> usize {
        self.engine.k
    }

    pub fn n(&self) -> usize {
        self.lift.as_ref().map_or(self.engine.n, |l| l.n)
    }

    pub fn seed(&self) -> u64 {
        self.engine.seed
    }

    /// Total mass of the matrix being sampled.
    pub fn source_mass(&self) -> f64 {
        self.lift.as_ref().map_or(self.engine.mass, |l| l.mass)
    }

    pub fn targets(&self) -> &[f64] {
        self.lift.as_ref().map_or(&self.engine.targets, |l| &l.targets)
    }

    /// Whether points are drawn on a smaller matrix this one is a blow-up of.
    pub fn is_reduced(&self) -> bool {
        self.lift.as_ref().is_some_and(|l| l.map.is_some())
    }

    /// The polytope point used for sample `index`.
    pub fn witness(&self, index: u64) -> Witness {
        let w = self.engine.witness(index);
        match self.lift.as_ref().and_then(|l| l.map.as_ref()) {
            None => w,
            Some(map) => {
                let k = w.k;
                let mut weights = Vec::with_capacity(map.len() * k);
                for &r in map {
                    weights.extend_from_slice(&w.weights[r * k..(r + 1) * k]);
                }
                Witness { k, n: map.len(), weights }
            }
        }
    }

    /// `M S M^T` for sample `index`.
    pub fn sample(&self, index: u64) -> Matrix {
        self.quotient(&self.witness(index))
    }

    pub fn quotient(&self, w: &Witness) -> Matrix {
        self.op().quotient(w)
    }

    /// `S W` (vertex-major), the factor shared by quotient gradients.
    pub(crate) fn apply_block(&self, w: &Witness) -> Vec<f64> {
        self.op().apply_block(w)
    }

    fn op(&self) -> &Operator {
        self.lift.as_ref().map_or(&self.engine.op, |l| &l.op)
    }
}

/// The sampler proper, on the (possibly twin-reduced) source.
#[derive(Clone, Debug)]
struct Engine {
    op: Operator,
    n: usize,
    mass: f64,
    k: usize,
    targets: Vec<f64>,
    seed: u64,
    mix: Mixture,
    spectral: Spectral,
}

impl Engine {
    fn build(op: Operator, n: usize, mass: f64, targets: Vec<f64>, seed: u64, mix: Mixture) -> Result<Self> {
        let total: f64 = targets.iter().sum();
        if targets.is_empty() || targets.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::InvalidArgument("row targets must be nonnegative".into()));
        }
        if math::abs(total - n as f64) > 1e-9 * n as f64 {
            return Err(Error::InvalidArgument("row targets must sum to n".into()));
        }
        let spectral =
            if mix.spectral > 0.0 || mix.convex > 0.0 { Spectral::compute(&op, n, seed) } else { Spectral::default() };
        Ok(Engine { op, n, mass, k: targets.len(), targets, seed, mix, spectral })
    }

    fn witness(&self, index: u64) -> Witness {
        let mut rng = rng::stream(self.seed, domain::SAMPLER, index);
        if self.k == 1 {
            return Witness { k: 1, n: self.n, weights: vec![1.0; self.n] };
        }
        match self.pick_kind(&mut rng, false) {
            Kind::Sinkhorn => self.sinkhorn_point(&mut rng),
            Kind::Convex => {
                let a = self.vertex(&mut rng);
                let b = self.vertex(&mut rng);
                let lambda: f64 = rng.random();
                Witness::blend(&a, &b, lambda)
            }
            kind => self.vertex_of_kind(kind, &mut rng),
        }
    }

    fn pick_kind(&self, rng: &mut ChaCha8Rng, vertices_only: bool) -> Kind {
        let table = [
            (Kind::RandomPartition, self.mix.random_partition),
            (Kind::Interval, self.mix.interval),
            (Kind::Spectral, if self.spectral.top.is_empty() { 0.0 } else { self.mix.spectral }),
            (Kind::Directional, self.mix.directional),
            (Kind::Target, self.mix.target),
            (Kind::Sinkhorn, if vertices_only { 0.0 } else { self.mix.sinkhorn }),
            (Kind::Convex, if vertices_only { 0.0 } else { self.mix.convex }),
        ];
        let total: f64 = table.iter().map(|t| t.1.max(0.0)).sum();
        if total <= 0.0 {
            return Kind::RandomPartition;
        }
        let mut u = rng.random::<f64>() * total;
        for (kind, w) in table {
            let w = w.max(0.0);
            if u < w {
                return kind;
            }
            u -= w;
        }
        Kind::RandomPartition
    }

    fn vertex(&self, rng: &mut ChaCha8Rng) -> Witness {
        let kind = self.pick_kind(rng, true);
        self.vertex_of_kind(kind, rng)
    }

    fn vertex_of_kind(&self, kind: Kind, rng: &mut ChaCha8Rng) -> Witness {
        match kind {
            Kind::Interval => self.interval_point(rng),
            Kind::Spectral => self.spectral_point(rng),
            Kind::Directional => self.directional_point(rng),
            Kind::Target => self.target_point(rng),
            _ => self.random_partition(rng),
        }
    }

    fn segments_in_order(&self, classes: &[usize], scale: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
        classes.iter().map(move |&c| (c, self.targets[c] * scale)).collect::<Vec<_>>().into_iter()
    }

    fn random_partition(&self, rng: &mut ChaCha8Rng) -> Witness {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(rng);
        let classes: Vec<usize> = (0..self.k).collect();
        let segs: Vec<_> = self.segments_in_order(&classes, 1.0).collect();
        interval_fill(&order, &segs, self.k)
    }

    fn interval_point(&self, rng: &mut ChaCha8Rng) -> Witness {
        let n = self.n;
        let t_max = (n / self.k).clamp(1, MAX_BLOCKS);
        let t = rng.random_range(1..=t_max);
        let offset = if rng.random::<bool>() { 0 } else { rng.random_range(0..n) };
        let order: Vec<usize> = (0..n).map(|p| (p + offset) % n).collect();
        let cyclic = rng.random::<bool>();
        let mut classes: Vec<usize> = (0..self.k).collect();
        let mut segs = Vec::with_capacity(t * self.k);
        for _ in 0..t {
            if !cyclic {
                classes.shuffle(rng);
            }
            segs.extend(self.segments_in_order(&classes, 1.0 / t as f64));
        }
        interval_fill(&order, &segs, self.k)
    }

    fn spectral_point(&self, rng: &mut ChaCha8Rng) -> Witness {
        let basis = if rng.random::<bool>() || self.spectral.bottom.is_empty() {
            &self.spectral.top
        } else {
            &self.spectral.bottom
        };
        let n = self.n;
        let mut score = vec![0.0; n];
        for v in basis {
            let c = rng::normal(rng);
            for (s, x) in score.iter_mut().zip(v) {
                *s += c * x;
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
        let mut classes: Vec<usize> = (0..self.k).collect();
        classes.shuffle(rng);
        let segs: Vec<_> = self.segments_in_order(&classes, 1.0).collect();
        interval_fill(&order, &segs, self.k)
    }

    /// A random partition improved toward a local maximum of `<W, M S M^T>`
    /// for a random symmetric direction `W`.
    fn directional_point(&self, rng: &mut ChaCha8Rng) -> Witness {
        let k = self.k;
        let mut dir = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let g = rng::normal(rng);
                dir[i * k + j] = g;
                dir[j * k + i] = g;
            }
        }
        let start = self.random_partition(rng);
        self.local_search(start, &dir, rng)
    }

    /// A random partition moved toward the quotient nearest (in Frobenius
    /// norm) to a random symmetric target of the right mass. Targets outside
    /// the shape land on its boundary, faces included.
    fn target_point(&self, rng: &mut ChaCha8Rng) -> Witness {
        let k = self.k;
        let mut target = vec![0.0; k * k];
        let mut total = 0.0;
        // Sparse targets push toward faces where some block is empty.
        let sparse = rng.random::<bool>();
        for i in 0..k {
            for j in i..k {
                let drop = sparse && rng.random_range(0..3) == 0;
                let e = if drop { 0.0 } else { rng::exponential(rng) };
                target[i * k + j] = e;
                target[j * k + i] = e;
                total += if i == j { e } else { 2.0 * e };
            }
        }
        if total == 0.0 {
            return self.random_partition(rng);
        }
        target.iter_mut().for_each(|t| *t *= self.mass / total);
        let start = self.random_partition(rng);
        self.project(start, &target)
    }

    /// Entropic mirror descent on `|M S M^T - T|_F^2` over the polytope,
    /// with step halving. The gradient is `4 (Q - T) M S`.
    fn project(&self, start: Witness, target: &[f64]) -> Witness {
        let (k, n) = (self.k, self.n);
        let mut w = start;
        for col in w.weights.chunks_mut(k) {
            for (x, t) in col.iter_mut().zip(&self.targets) {
                *x = (1.0 - PROJECT_BLEND) * *x + PROJECT_BLEND * t / n as f64;
            }
        }
        let feasible = w.clone();
        let loss = |q: &[f64]| -> f64 { q.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum() };
        let mut q = self.op.quotient(&w).into_data();
        let mut cur = loss(&q);
        let iters = (PROJECT_ITERS * FULL_SCAN_N / n.max(FULL_SCAN_N)).max(PROJECT_MIN_ITERS);
        let mut eta = 1.0;
        let mut grad = vec![0.0; n * k];
        for _ in 0..iters {
            let p = self.op.apply_block(&w);
            let c: Vec<f64> = q.iter().zip(target).map(|(a, b)| a - b).collect();
            for x in 0..n {
                for i in 0..k {
                    grad[x * k + i] = 4.0 * (0..k).map(|j| c[i * k + j] * p[x * k + j]).sum::<f64>();
                }
            }
            let gmax = grad.iter().fold(0.0f64, |m, g| m.max(math::abs(*g)));
            if gmax == 0.0 {
                break;
            }
            let mut accepted = false;
            while eta > 1e-6 {
                let mut cand: Vec<f64> =
                    w.weights.iter().zip(&grad).map(|(a, g)| a * math::exp(-eta * g / gmax)).collect();
                if sinkhorn(&mut cand, k, &self.targets, PROJECT_SINKHORN_ITER, PROJECT_SINKHORN_TOL) {
                    let cw = Witness { k, n, weights: cand };
                    let cq = self.op.quotient(&cw).into_data();
                    let v = loss(&cq);
                    if v < cur {
                        w = cw;
                        q = cq;
                        cur = v;
                        eta = (eta * 1.5).min(20.0);
                        accepted = true;
                        break;
                    }
                }
                eta *= 0.5;
            }
            if !accepted || cur <= 1e-14 * (1.0 + self.mass * self.mass) {
                break;
            }
        }
        // the loop only keeps rows loosely on target
        let mut exact = w.weights.clone();
        if sinkhorn(&mut exact, k, &self.targets, SINKHORN_MAX_ITER, SINKHORN_TOL) {
            w.weights = exact;
            w
        } else {
            feasible
        }
    }

    /// Pairwise mass transfers `c_u += t d, c_v -= t d` with `d = c_v - c_u`
    /// and `t` in `[0, 1]` keep every row and column sum, so the search stays
    /// in the polytope; `t = 1` swaps the two columns. With `P = S M^T`,
    /// `r = P_u - P_v` and `s = S_uu + S_vv - 2 S_uv`, the quotient moves by
    /// `t (d r^T + r d^T) + t^2 s d d^T`, so each candidate costs `O(k^2)`.
    fn local_search(&self, mut w: Witness, dir: &[f64], rng: &mut ChaCha8Rng) -> Witness {
        let (k, n) = (self.k, self.n);
        if n < 2 {
            return w;
        }
        let mut p = self.op.apply_block(&w);
        let threshold = 1e-12 * dir.iter().fold(0.0f64, |m, x| m.max(math::abs(*x))) * (1.0 + self.mass);
        let mut delta = vec![0.0; k];
        let mut r = vec![0.0; k];
        let mut try_pair = |w: &mut Witness, p: &mut [f64], u: usize, v: usize| -> bool {
            let mut norm_d = 0.0;
            for i in 0..k {
                delta[i] = w.weights[v * k + i] - w.weights[u * k + i];
                r[i] = p[u * k + i] - p[v * k + i];
                norm_d += delta[i] * delta[i];
            }
            if norm_d == 0.0 {
                return false;
            }
            let curv = self.op.entry(u, u) + self.op.entry(v, v) - 2.0 * self.op.entry(u, v);
            // minus the gain, as a polynomial in t
            let poly = [-2.0 * bilinear(dir, &delta, &r), -curv * bilinear(dir, &delta, &delta)];
            let (t, change) = minimize_quadratic(poly);
            if change >= -threshold {
                return false;
            }
            let td: Vec<f64> = delta.iter().map(|d| t * d).collect();
            self.op.for_each_in_column(u, |x, s| {
                for i in 0..k {
                    p[x * k + i] += s * td[i];
                }
            });
            self.op.for_each_in_column(v, |x, s| {
                for i in 0..k {
                    p[x * k + i] -= s * td[i];
                }
            });
            for i in 0..k {
                w.weights[u * k + i] += td[i];
                w.weights[v * k + i] -= td[i];
            }
            true
        };
        if n <= FULL_SCAN_N {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            for _ in 0..MAX_SWAP_PASSES {
                let mut improved = false;
                for a in 0..n {
                    for b in a + 1..n {
                        improved |= try_pair(&mut w, &mut p, order[a], order[b]);
                    }
                }
                if !improved {
                    break;
                }
            }
        } else {
            for _ in 0..(SWAP_TRIES_PER_VERTEX * n).min(MAX_RANDOM_TRIES) {
                let u = rng.random_range(0..n);
                let v = rng.random_range(0..n);
                if u != v {
                    try_pair(&mut w, &mut p, u, v);
                }
            }
        }
        // transfers can leave rounding dust below zero
        for x in w.weights.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        normalize_columns(&mut w.weights, k);
        w
    }

    fn sinkhorn_point(&self, rng: &mut ChaCha8Rng) -> Witness {
        let (k, n) = (self.k, self.n);
        let power = [1.0, 2.0, 4.0, 8.0][rng.random_range(0..4)];
        let mut weights: Vec<f64> = (0..n * k).map(|_| math::powf(rng::open_unit(rng), power) + 1e-12).collect();
        // Badly conditioned draws are pulled halfway to the uniform interior
        // point until the scaling converges.
        while !sinkhorn(&mut weights, k, &self.targets, SINKHORN_MAX_ITER, SINKHORN_TOL) {
            for col in weights.chunks_mut(k) {
                for (w, t) in col.iter_mut().zip(&self.targets) {
                    *w = 0.5 * (*w + t / n as f64);
                }
            }
        }
        Witness { k, n, weights }
    }
}
