//! Finite approximations of k-shapes and distances between them.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matcore::{block_sums, Matrix, NonNegSymMatrix};
use crate::math;
use crate::par;
use crate::rng::{self, domain};
use crate::sampler::{Mixture, PolytopeSampler};

/// ℓ₁ tolerance under which two cloud points are the same point.
pub const DEDUP_TOL: f64 = 1e-12;

/// How a cloud was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeMethod {
    /// Every balanced 0/1 partition.
    EnumBalanced,
    /// Random points of the polytope K(k,n).
    Sample,
    /// A thinned cloud: every input point lies within `net_eps` of the net.
    Net,
}

impl ShapeMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapeMethod::EnumBalanced => "enum_balanced",
            ShapeMethod::Sample => "sample",
            ShapeMethod::Net => "net",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "enum_balanced" => Some(ShapeMethod::EnumBalanced),
            "sample" => Some(ShapeMethod::Sample),
            "net" => Some(ShapeMethod::Net),
            _ => None,
        }
    }
}

/// A finite set of `k x k` quotient matrices of one source.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeCloud {
    pub k: usize,
    pub points: Vec<Matrix>,
    pub method: ShapeMethod,
    pub sample_count: usize,
    pub net_eps: Option<f64>,
    pub source_mass: f64,
    pub seed: u64,
    /// Sampler indices of the polytope points behind each point, when known.
    /// `PolytopeSampler::new(source, k, seed).witness(i)` regenerates them.
    pub witnesses: Option<Vec<u64>>,
}

impl ShapeCloud {
    /// A cloud built from explicit points.
    pub fn from_points(k: usize, points: Vec<Matrix>, method: ShapeMethod, source_mass: f64, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        for p in &points {
            if p.rows() != k || p.cols() != k {
                return Err(Error::DimensionMismatch { expected: k, found: p.rows() });
            }
        }
        let sample_count = points.len();
        Ok(ShapeCloud { k, points, method, sample_count, net_eps: None, source_mass, seed, witnesses: None })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same cloud with every point multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> ShapeCloud {
        ShapeCloud {
            points: self.points.iter().map(|p| p.scaled(factor)).collect(),
            source_mass: self.source_mass * factor,
            net_eps: self.net_eps.map(|e| e * factor),
            ..self.clone()
        }
    }

    /// Checks symmetry, nonnegativity and constant mass of every point.
    pub fn check(&self, mass_tol: f64) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        for (idx, p) in self.points.iter().enumerate() {
            let (asym, i, j) = p.max_asymmetry();
            if asym > 1e-9 * (1.0 + self.source_mass) {
                return Err(Error::Asymmetric { row: i, col: j, diff: asym });
            }
            if let Some(pos) = p.data().iter().position(|&v| v < 0.0) {
                return Err(Error::NegativeEntry { row: pos / self.k, col: pos % self.k, value: p.data()[pos] });
            }
            let s = p.sum();
            if math::abs(s - self.source_mass) > mass_tol {
                return Err(Error::InvariantViolation(alloc::format!(
                    "point {idx} has mass {s}, expected {}",
                    self.source_mass
                )));
            }
        }
        Ok(())
    }
}

/// Result of comparing two clouds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HausdorffResult {
    pub directed_ab: f64,
    pub directed_ba: f64,
    pub symmetric: f64,
    /// Index in `A` of the point realizing `directed_ab`.
    pub witness_a: usize,
    /// Index in `B` of the point realizing `directed_ba`.
    pub witness_b: usize,
}

/// Number of unordered balanced partitions of `n` items into `k` classes.
pub fn balanced_partition_count(n: usize, k: usize) -> f64 {
    if k == 0 || k > n {
        return 0.0;
    }
    let (q, r) = (n / k, n % k);
    let lf = |m: usize| (1..=m).map(|i| math::ln(i as f64)).sum::<f64>();
    let log = lf(n) - r as f64 * lf(q + 1) - (k - r) as f64 * lf(q) - lf(r) - lf(k - r);
    math::exp(log)
}

/// All quotients of `S` under balanced 0/1 partitions, closed under
/// relabeling of the classes and deduplicated at [`DEDUP_TOL`].
pub fn shape_enumerate_balanced(s: &NonNegSymMatrix, k: usize, limit: usize) -> Result<ShapeCloud> {
    let n = s.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(alloc::format!("k = {k} must lie in 1..={n}")));
    }
    let count = balanced_partition_count(n, k);
    if count > limit as f64 {
        return Err(Error::CombinatorialLimit { count, limit });
    }
    let perms = permutations(k);
    let mut seen = BTreeMap::new();
    let mut points = Vec::new();
    let mut labels = vec![0usize; n];
    let mut sizes = vec![0usize; k];
    let (lo, hi, big) = (n / k, n.div_ceil(k), n % k);
    enumerate_rgs(0, 0, n, k, lo, hi, big, &mut labels, &mut sizes, &mut |labels| {
        let q = block_sums(s, labels, k).into_matrix();
        for perm in &perms {
            let p = q.permuted(perm);
            if seen.insert(quantize(&p, DEDUP_TOL), ()).is_none() {
                points.push(p);
            }
        }
    });
    let mut cloud = ShapeCloud::from_points(k, points, ShapeMethod::EnumBalanced, s.gamma(), 0)?;
    cloud.sample_count = count as usize;
    Ok(cloud)
}

/// Restricted-growth enumeration: item `i` joins an open class or opens the
/// next one, so each unordered partition is visited once.
#[allow(clippy::too_many_arguments)]
fn enumerate_rgs(
    i: usize,
    opened: usize,
    n: usize,
    k: usize,
    lo: usize,
    hi: usize,
    big: usize,
    labels: &mut [usize],
    sizes: &mut [usize],
    visit: &mut dyn FnMut(&[usize]),
) {
    if i == n {
        if opened == k && sizes.iter().all(|&c| c >= lo) {
            visit(labels);
        }
        return;
    }
    let at_hi = sizes.iter().filter(|&&c| c == hi).count();
    let deficit: usize = sizes.iter().map(|&c| lo.saturating_sub(c)).sum();
    if deficit > n - i {
        return;
    }
    let options = if opened < k { opened + 1 } else { k };
    for c in 0..options {
        if sizes[c] == hi || (hi > lo && sizes[c] == lo && at_hi == big) {
            continue;
        }
        if hi == lo && sizes[c] == lo {
            continue;
        }
        labels[i] = c;
        sizes[c] += 1;
        enumerate_rgs(i + 1, opened.max(c + 1), n, k, lo, hi, big, labels, sizes, visit);
        sizes[c] -= 1;
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    heap_permute(k, &mut cur, &mut out);
    out
}

fn heap_permute(m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if m <= 1 {
        out.push(cur.clone());
        return;
    }
    for i in 0..m {
        heap_permute(m - 1, cur, out);
        let j = if m % 2 == 0 { i } else { 0 };
        cur.swap(j, m - 1);
    }
}

fn quantize(m: &Matrix, step: f64) -> Vec<i64> {
    m.data().iter().map(|&v| math::floor(v / step + 0.5) as i64).collect()
}

/// `count` quotients of `S` by sampled points of K(k,n).
pub fn shape_sample(s: &NonNegSymMatrix, k: usize, count: usize, seed: u64) -> Result<ShapeCloud> {
    let sampler = PolytopeSampler::new(s, k, seed)?;
    shape_sample_with(&sampler, count)
}

/// Like [`shape_sample`] with a preconfigured sampler.
pub fn shape_sample_with(sampler: &PolytopeSampler, count: usize) -> Result<ShapeCloud> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let points = par::map_indexed(count, |i| sampler.sample(i as u64));
    Ok(ShapeCloud {
        k: sampler.k(),
        points,
        method: ShapeMethod::Sample,
        sample_count: count,
        net_eps: None,
        source_mass: sampler.source_mass(),
        seed: sampler.seed(),
        witnesses: Some((0..count as u64).collect()),
    })
}

/// Thins a cloud to an `eps`-net.
///
/// Points are snapped to a grid of side `eps / (2k²)`; the first point of each
/// occupied cell (in cloud order) represents it, within `eps / 2` of every
/// point in the cell. Representatives closer than `eps / 2` to an already
/// kept one are then dropped, so every input point is within `eps` of the
/// net and kept points are at least `eps / 2` apart.
pub fn shape_net(cloud: &ShapeCloud, eps: f64) -> Result<ShapeCloud> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("net eps must be positive".into()));
    }
    if cloud.points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let k = cloud.k;
    let side = eps / (2.0 * (k * k) as f64);
    let mut cells = BTreeMap::new();
    let mut reps = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        if cells.insert(quantize_floor(p, side), ()).is_none() {
            reps.push(i);
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    for &i in &reps {
        let p = cloud.points[i].data();
        let close = kept.iter().any(|&j| l1_bounded(p, cloud.points[j].data(), 0.5 * eps) < 0.5 * eps);
        if !close {
            kept.push(i);
        }
    }
    Ok(ShapeCloud {
        k,
        points: kept.iter().map(|&i| cloud.points[i].clone()).collect(),
        method: ShapeMethod::Net,
        sample_count: cloud.sample_count,
        net_eps: Some(eps),
        source_mass: cloud.source_mass,
        seed: cloud.seed,
        witnesses: cloud.witnesses.as_ref().map(|w| kept.iter().map(|&i| w[i]).collect()),
    })
}

/// Sampled cloud of `S` thinned to an `eps`-net.
pub fn shape_net_of(s: &NonNegSymMatrix, k: usize, eps: f64, samples: usize, seed: u64) -> Result<ShapeCloud> {
    shape_net(&shape_sample(s, k, samples, seed)?, eps)
}

fn quantize_floor(m: &Matrix, side: f64) -> Vec<i64> {
    m.data().iter().map(|&v| math::floor(v / side) as i64).collect()
}

/// ℓ₁ distance, abandoning the sum once it exceeds `bound` (the partial sum
/// is returned then, which is already larger than `bound`).
#[inline]
fn l1_bounded(a: &[f64], b: &[f64], bound: f64) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += math::abs(x - y);
        if s > bound {
            return s;
        }
    }
    s
}

/// Nearest point of a fixed set, found by scanning outward in the order of
/// the first coordinate (`|a₀ − b₀|` bounds the ℓ₁ distance from below).
pub struct NearestIndex<'a> {
    points: &'a [Matrix],
    order: Vec<usize>,
    keys: Vec<f64>,
}

impl<'a> NearestIndex<'a> {
    pub fn new(points: &'a [Matrix]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].data()[0].total_cmp(&points[b].data()[0]).then(a.cmp(&b)));
        let keys = order.iter().map(|&i| points[i].data()[0]).collect();
        NearestIndex { points, order, keys }
    }

    /// `(distance, index)` of the nearest point; ties go to the lowest index.
    pub fn nearest(&self, q: &[f64]) -> (f64, usize) {
        let key = q[0];
        let start = self.keys.partition_point(|&v| v < key);
        let mut best = f64::INFINITY;
        let mut best_idx = usize::MAX;
        let consider = |pos: usize, best: &mut f64, best_idx: &mut usize| {
            let idx = self.order[pos];
            let d = l1_bounded(q, self.points[idx].data(), *best);
            if d < *best || (d == *best && idx < *best_idx) {
                *best = d;
                *best_idx = idx;
            }
        };
        let (mut up, mut down) = (start, start);
        loop {
            let up_ok = up < self.keys.len() && math::abs(self.keys[up] - key) <= best;
            let down_ok = down > 0 && math::abs(key - self.keys[down - 1]) <= best;
            if !up_ok && !down_ok {
                break;
            }
            if up_ok {
                consider(up, &mut best, &mut best_idx);
                up += 1;
            }
            if down_ok {
                consider(down - 1, &mut best, &mut best_idx);
                down -= 1;
            }
        }
        (best, best_idx)
    }
}

/// Directed Hausdorff distance `max_{a∈A} min_{b∈B} ‖a − b‖₁` and the index
/// of the first point of `A` attaining it.
pub fn directed_l1(a: &[Matrix], b: &[Matrix]) -> Result<(f64, usize)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = NearestIndex::new(b);
    let dists = par::map_indexed(a.len(), |i| index.nearest(a[i].data()).0);
    let mut best = (0.0, 0);
    for (i, &d) in dists.iter().enumerate() {
        if d > best.0 {
            best = (d, i);
        }
    }
    Ok(best)
}

/// Exact Hausdorff distance between two finite clouds under entrywise ℓ₁.
pub fn hausdorff_l1(a: &ShapeCloud, b: &ShapeCloud) -> Result<HausdorffResult> {
    if a.k != b.k {
        return Err(Error::KMismatch { left: a.k, right: b.k });
    }
    let (ab, wa) = directed_l1(&a.points, &b.points)?;
    let (ba, wb) = directed_l1(&b.points, &a.points)?;
    Ok(HausdorffResult { directed_ab: ab, directed_ba: ba, symmetric: ab.max(ba), witness_a: wa, witness_b: wb })
}

/// How to approximate a shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShapeParams {
    Balanced { limit: usize },
    Sample { count: usize, seed: u64 },
    Net { count: usize, seed: u64, eps: f64 },
}

/// Shape of `S` by the chosen method.
pub fn shape_of(s: &NonNegSymMatrix, k: usize, params: ShapeParams) -> Result<ShapeCloud> {
    match params {
        ShapeParams::Balanced { limit } => shape_enumerate_balanced(s, k, limit),
        ShapeParams::Sample { count, seed } => shape_sample(s, k, count, seed),
        ShapeParams::Net { count, seed, eps } => shape_net_of(s, k, eps, count, seed),
    }
}

/// Shape of the adjacency matrix `A` scaled to total mass 1.
pub fn normalized_graph_shape(adjacency: &NonNegSymMatrix, k: usize, params: ShapeParams) -> Result<ShapeCloud> {
    if adjacency.gamma() <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    shape_of(&adjacency.normalized(), k, params)
}

/// Settings for [`shape_iterate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterateParams {
    /// Points drawn from C(S,t).
    pub outer: usize,
    /// Points drawn from each C(X,k).
    pub inner: usize,
    pub seed: u64,
}

/// Samples `X ∈ C(S,t)` and then `C(X,k)`; returns the union of the second
/// stage clouds and the bound `2 γ(S) k / t` on its distance to C(S,k).
pub fn shape_iterate(s: &NonNegSymMatrix, t: usize, k: usize, params: IterateParams) -> Result<(ShapeCloud, f64)> {
    if t <= k {
        return Err(Error::InvalidArgument(alloc::format!("t = {t} must exceed k = {k}")));
    }
    if params.outer == 0 || params.inner == 0 {
        return Err(Error::InvalidArgument("sample counts must be at least 1".into()));
    }
    let outer = PolytopeSampler::new(s, t, params.seed)?;
    let stages = par::map_indexed(params.outer, |i| {
        let x = NonNegSymMatrix::from_trusted(outer.sample(i as u64));
        let inner_seed = rng::stream(params.seed, domain::ITERATE, i as u64);
        let inner_seed = rand::RngCore::next_u64(&mut { inner_seed });
        let sampler = PolytopeSampler::with_row_targets(&x, vec![t as f64 / k as f64; k], inner_seed, Mixture::default())
            .expect("targets sum to t");
        (0..params.inner as u64).map(|j| sampler.sample(j)).collect::<Vec<_>>()
    });
    let points: Vec<Matrix> = stages.into_iter().flatten().collect();
    let mut cloud = ShapeCloud::from_points(k, points, ShapeMethod::Sample, s.gamma(), params.seed)?;
    cloud.sample_count = params.outer * params.inner;
    Ok((cloud, 2.0 * s.gamma() * k as f64 / t as f64))
}

/// Truncated shape distance `Σ_{k ≤ k_max} 2^{-k} D_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DsEstimate {
    pub value: f64,
    /// Bound on the omitted tail `Σ_{k > k_max} 2^{-k} D_k ≤ 2c 2^{-k_max}`.
    pub truncation_bound: f64,
    pub per_k: Vec<(usize, f64)>,
}

fn find_k(set: &[ShapeCloud], k: usize) -> Result<&ShapeCloud> {
    set.iter().find(|c| c.k == k).ok_or(Error::MissingK(k))
}

/// Shape distance from per-k clouds of two sources.
pub fn ds_metric(a: &[ShapeCloud], b: &[ShapeCloud], k_max: usize) -> Result<DsEstimate> {
    let mut value = 0.0;
    let mut per_k = Vec::with_capacity(k_max);
    let mut c: f64 = 0.0;
    for k in 1..=k_max {
        let (ca, cb) = (find_k(a, k)?, find_k(b, k)?);
        c = c.max(ca.source_mass).max(cb.source_mass);
        let d = hausdorff_l1(ca, cb)?.symmetric;
        value += math::powf(2.0, -(k as f64)) * d;
        per_k.push((k, d));
    }
    Ok(DsEstimate { value, truncation_bound: 2.0 * c * math::powf(2.0, -(k_max as f64)), per_k })
}
