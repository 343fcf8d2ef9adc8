//! Isomorphism-invariant diagnostics of shapes and tables.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::dyadic::DyadicTable;
use crate::error::{Error, Result};
use crate::matcore::{AlphaVector, Matrix, NonNegSymMatrix};
use crate::math;
use crate::par;
use crate::rng::{self, domain};
use crate::sampler::{sinkhorn, Mixture, PolytopeSampler, Witness};
use crate::shapes::{directed_l1, shape_sample_with, NearestIndex, ShapeCloud};

/// `Σ −M_ij ln M_ij` of `M / ΣM`, with `0 ln 0 = 0`.
///
/// Terms are summed in sorted order, so the value does not depend on how
/// rows and columns are labeled.
pub fn entropy(m: &Matrix) -> Result<f64> {
    if let Some(pos) = m.data().iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::NegativeEntry { row: pos / m.cols(), col: pos % m.cols(), value: m.data()[pos] });
    }
    let mut vals: Vec<f64> = m.data().to_vec();
    vals.sort_by(f64::total_cmp);
    let total: f64 = vals.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("entropy of a zero matrix".into()));
    }
    let scale = if math::abs(total - 1.0) > 1e-6 { total } else { 1.0 };
    let mut terms: Vec<f64> = vals.iter().map(|&v| math::xlnx_neg(v / scale)).collect();
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum())
}

/// Entropy of a mass-1 point without validation, for inner loops.
fn entropy_raw(q: &[f64], mass: f64) -> f64 {
    q.iter().map(|&v| math::xlnx_neg(v / mass)).sum()
}

/// Settings for [`min_entropy`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyParams {
    /// Run mirror descent from the best cloud points.
    pub refine: bool,
    /// Number of descent starts.
    pub starts: usize,
    pub max_iter: usize,
    /// Stop when an accepted step gains less than this.
    pub tol: f64,
    /// Weight of the uniform point blended into each start, so that zero
    /// entries can move under multiplicative updates.
    pub blend: f64,
}

impl Default for EntropyParams {
    fn default() -> Self {
        EntropyParams { refine: true, starts: 4, max_iter: 500, tol: 1e-8, blend: 0.01 }
    }
}

/// Smallest entropy found; an upper bound on the minimum over the shape.
#[derive(Clone, Debug, PartialEq)]
pub struct MinEntropy {
    pub value: f64,
    /// Minimum over the cloud before refinement.
    pub cloud_min: f64,
    /// The minimizing quotient, scaled to mass 1.
    pub point: Matrix,
    pub refined: bool,
}

/// Minimum entropy over a cloud, optionally improved by entropic mirror
/// descent over the polytope from the best sampled witnesses. Refinement
/// needs the sampler that produced the cloud.
pub fn min_entropy(cloud: &ShapeCloud, sampler: Option<&PolytopeSampler>, params: EntropyParams) -> Result<MinEntropy> {
    if cloud.points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mass = cloud.source_mass;
    if !(mass > 0.0) {
        return Err(Error::InvalidArgument("entropy needs a positive source mass".into()));
    }
    let values: Vec<f64> = cloud.points.iter().map(|p| entropy_raw(p.data(), mass)).collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let best = order[0];
    let mut result =
        MinEntropy { value: values[best], cloud_min: values[best], point: cloud.points[best].scaled(1.0 / mass), refined: false };
    let (Some(sampler), Some(witnesses), true) = (sampler, cloud.witnesses.as_ref(), params.refine) else {
        return Ok(result);
    };
    if sampler.k() != cloud.k {
        return Err(Error::KMismatch { left: cloud.k, right: sampler.k() });
    }
    let starts: Vec<usize> = order.iter().take(params.starts.max(1)).copied().collect();
    let runs = par::map_indexed(starts.len(), |s| descend(sampler, sampler.witness(witnesses[starts[s]]), mass, params));
    result.refined = true;
    for (h, q) in runs {
        if h < result.value {
            result.value = h;
            result.point = q.scaled(1.0 / mass);
        }
    }
    Ok(result)
}

/// Entropic mirror descent on the polytope: `M ← M exp(−η ∇)` followed by
/// Sinkhorn scaling back onto the polytope, with step halving.
fn descend(sampler: &PolytopeSampler, start: Witness, mass: f64, params: EntropyParams) -> (f64, Matrix) {
    let (k, n) = (start.k(), start.n());
    let targets = sampler.targets().to_vec();
    let mut weights = start.weights().to_vec();
    for col in weights.chunks_mut(k) {
        for (w, t) in col.iter_mut().zip(&targets) {
            *w = (1.0 - params.blend) * *w + params.blend * t / n as f64;
        }
    }
    let mut current = Witness::from_weights(k, n, weights);
    let mut q = sampler.quotient(&current);
    let mut h = entropy_raw(q.data(), mass);
    let mut eta = 1.0;
    for _ in 0..params.max_iter {
        let p = sampler.apply_block(&current);
        let wgrad: Vec<f64> = q.data().iter().map(|&v| -(math::ln((v / mass).max(1e-300)) + 1.0) / mass).collect();
        let mut grad = vec![0.0; n * k];
        for x in 0..n {
            let px = &p[x * k..(x + 1) * k];
            for i in 0..k {
                let row = &wgrad[i * k..(i + 1) * k];
                grad[x * k + i] = 2.0 * row.iter().zip(px).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(math::abs(*g)));
        if gmax == 0.0 {
            break;
        }
        let mut accepted = None;
        while eta > 1e-12 {
            let step = eta / gmax;
            let mut cand: Vec<f64> = Vec::with_capacity(n * k);
            for x in 0..n {
                let g = &grad[x * k..(x + 1) * k];
                let gmin = g.iter().cloned().fold(f64::INFINITY, f64::min);
                for i in 0..k {
                    cand.push(current.weights()[x * k + i] * math::exp(-step * (g[i] - gmin)));
                }
            }
            if sinkhorn(&mut cand, k, &targets, 500, 1e-10) {
                let w = Witness::from_weights(k, n, cand);
                let qc = sampler.quotient(&w);
                let hc = entropy_raw(qc.data(), mass);
                if hc < h {
                    accepted = Some((w, qc, hc));
                    break;
                }
            }
            eta *= 0.5;
        }
        let Some((w, qc, hc)) = accepted else { break };
        let gain = h - hc;
        current = w;
        q = qc;
        h = hc;
        if gain < params.tol {
            break;
        }
        eta = (eta * 1.5).min(16.0);
    }
    (h, q)
}

/// Per-k minimum entropies and the finite-k dimension estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct DimensionProfile {
    pub ks: Vec<usize>,
    pub h_k: Vec<f64>,
    /// `h_k / ln k`.
    pub ratios: Vec<f64>,
    /// Minimum ratio over the larger half of `ks`.
    pub dim_estimate: f64,
}

/// Settings for [`dimension_profile`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DimensionParams {
    pub samples: usize,
    pub seed: u64,
    pub entropy: EntropyParams,
}

impl Default for DimensionParams {
    fn default() -> Self {
        DimensionParams { samples: 4000, seed: 0, entropy: EntropyParams::default() }
    }
}

/// Minimum entropy of the k-shapes of the source scaled to mass 1, for each
/// `k` in `ks` (all at least 2).
pub fn dimension_profile(source: &NonNegSymMatrix, ks: &[usize], params: DimensionParams) -> Result<DimensionProfile> {
    if ks.is_empty() || ks.iter().any(|&k| k < 2) {
        return Err(Error::InvalidArgument("ks must be nonempty with every k at least 2".into()));
    }
    if !(source.gamma() > 0.0) {
        return Err(Error::EmptyGraph);
    }
    let norm = source.normalized();
    let mut h_k = Vec::with_capacity(ks.len());
    for &k in ks {
        let sampler = PolytopeSampler::new(&norm, k, params.seed)?;
        let cloud = shape_sample_with(&sampler, params.samples)?;
        h_k.push(min_entropy(&cloud, Some(&sampler), params.entropy)?.value);
    }
    let ratios: Vec<f64> = ks.iter().zip(&h_k).map(|(&k, h)| h / math::ln(k as f64)).collect();
    let mut by_k: Vec<(usize, f64)> = ks.iter().copied().zip(ratios.iter().copied()).collect();
    by_k.sort_by_key(|p| p.0);
    let tail = &by_k[by_k.len() / 2..];
    let dim_estimate = tail.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(DimensionProfile { ks: ks.to_vec(), h_k, ratios, dim_estimate })
}

/// Whether every level's marginal is uniform within `tol` (after scaling
/// the table to mass 1).
pub fn is_regular_table(table: &DyadicTable, tol: f64) -> bool {
    let mass = table.mass();
    if !(mass > 0.0) {
        return false;
    }
    (0..=table.depth() as usize).all(|i| {
        let w = 1.0 / (1u64 << i) as f64;
        table.marginal(i).iter().all(|r| math::abs(r / mass - w) <= tol)
    })
}

/// Whether all row sums of the matrix are equal.
pub fn is_regular_graph(adjacency: &NonNegSymMatrix) -> bool {
    let sums = adjacency.row_sums();
    sums.iter().all(|&d| d == sums[0])
}

/// Histogram of marginal densities.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// `bins + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub min: f64,
    pub max: f64,
}

impl Histogram {
    pub fn support_width(&self) -> f64 {
        self.max - self.min
    }
}

/// Histogram of `2^depth × (row sum / mass)` over the cells of a level.
pub fn degree_distribution(table: &DyadicTable, depth: u32, bins: usize) -> Result<Histogram> {
    if depth > table.depth() {
        return Err(Error::InvalidArgument(alloc::format!("depth {depth} exceeds table depth {}", table.depth())));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let mass = table.mass();
    let scale = (1u64 << depth) as f64 / mass;
    let dens: Vec<f64> = table.marginal(depth as usize).iter().map(|r| r * scale).collect();
    let min = dens.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = dens.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { max } else { min + i as f64 * width }).collect();
    let mut counts = vec![0usize; bins];
    for d in dens {
        let b = if width > 0.0 { (((d - min) / width) as usize).min(bins - 1) } else { 0 };
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts, min, max })
}

/// Directed distances `A_k → B_k` for `k = 1..=k_max`.
pub fn preorder_distances(a: &[ShapeCloud], b: &[ShapeCloud], k_max: usize) -> Result<Vec<(usize, f64)>> {
    let find = |set: &[ShapeCloud], k: usize| -> Result<usize> {
        set.iter().position(|c| c.k == k).ok_or(Error::MissingK(k))
    };
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let (ia, ib) = (find(a, k)?, find(b, k)?);
        out.push((k, directed_l1(&a[ia].points, &b[ib].points)?.0));
    }
    Ok(out)
}

/// Finite-k surrogate of shape containment: every cloud of `A` lies within
/// `tol` of the matching cloud of `B`.
pub fn preorder_leq(a: &[ShapeCloud], b: &[ShapeCloud], k_max: usize, tol: f64) -> Result<bool> {
    Ok(preorder_distances(a, b, k_max)?.iter().all(|&(_, d)| d <= tol))
}

/// `(Σ (M_ij / (α_i α_j))^p α_i α_j)^{1/p}`.
pub fn alpha_p_norm(m: &Matrix, alpha: &AlphaVector, p: f64) -> Result<f64> {
    let k = alpha.k();
    if m.rows() != k || m.cols() != k {
        return Err(Error::DimensionMismatch { expected: k, found: m.rows() });
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(alloc::format!("p = {p} must be at least 1")));
    }
    let a = alpha.as_slice();
    if let Some(i) = a.iter().position(|&x| x <= 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("alpha coordinate {i} is zero")));
    }
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = a[i] * a[j];
            total += math::powf(math::abs(m.get(i, j)) / w, p) * w;
        }
    }
    Ok(math::powf(total, 1.0 / p))
}

/// Outcome of [`upper_regularity_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct UpperRegularity {
    /// `false` when a violating partition was found.
    pub holds: bool,
    /// Largest norm seen.
    pub worst: f64,
    /// `(α, quotient)` of the first violation.
    pub witness: Option<(AlphaVector, Matrix)>,
    pub trials: usize,
}

/// Randomized search for `α`-partitions with all `α_i ≥ η` whose quotient of
/// the mass-1 source has `‖M‖_{α,p} > C`. A `true` verdict only means no
/// counterexample was found.
pub fn upper_regularity_check(
    source: &NonNegSymMatrix,
    c: f64,
    eta: f64,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<UpperRegularity> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidArgument(alloc::format!("eta = {eta} must lie in (0, 1]")));
    }
    if !(source.gamma() > 0.0) {
        return Err(Error::EmptyGraph);
    }
    let norm = source.normalized();
    let n = norm.n() as f64;
    let k_max = (math::floor(1.0 / eta) as usize).max(1);
    let found = par::map_indexed(trials, |t| -> Result<(f64, AlphaVector, Matrix)> {
        let mut r = rng::stream(seed, domain::UPPER_REGULARITY, t as u64);
        let k = r.random_range(1..=k_max);
        let free = 1.0 - k as f64 * eta;
        let e: Vec<f64> = (0..k).map(|_| rng::exponential(&mut r)).collect();
        let es: f64 = e.iter().sum();
        let mut a: Vec<f64> = e.iter().map(|x| eta + free.max(0.0) * x / es).collect();
        let sum: f64 = a.iter().sum();
        a.iter_mut().for_each(|x| *x /= sum);
        let alpha = AlphaVector::new(a.clone())?;
        let targets: Vec<f64> = a.iter().map(|x| x * n).collect();
        let sampler = PolytopeSampler::with_row_targets(&norm, targets, r.random(), Mixture::default())?;
        let q = sampler.sample(t as u64);
        Ok((alpha_p_norm(&q, &alpha, p)?, alpha, q))
    });
    let mut out = UpperRegularity { holds: true, worst: 0.0, witness: None, trials };
    for f in found {
        let (v, alpha, q) = f?;
        if v > out.worst {
            out.worst = v;
        }
        if v > c && out.witness.is_none() {
            out.holds = false;
            out.witness = Some((alpha, q));
        }
    }
    Ok(out)
}

/// Mean ℓ₁ distance from midpoints of random pairs of cloud points to the
/// nearest cloud point; zero for a cloud closed under midpoints.
pub fn convexity_score(cloud: &ShapeCloud, pairs: usize, seed: u64) -> Result<f64> {
    let m = cloud.points.len();
    if m == 0 {
        return Err(Error::EmptyCloud);
    }
    if m == 1 || pairs == 0 {
        return Ok(0.0);
    }
    let index = NearestIndex::new(&cloud.points);
    let dists = par::map_indexed(pairs, |t| {
        let mut r = rng::stream(seed, domain::CONVEXITY, t as u64);
        let i = r.random_range(0..m);
        let mut j = r.random_range(0..m - 1);
        if j >= i {
            j += 1;
        }
        let mid: Vec<f64> =
            cloud.points[i].data().iter().zip(cloud.points[j].data()).map(|(a, b)| 0.5 * (a + b)).collect();
        index.nearest(&mid).0
    });
    Ok(dists.iter().sum::<f64>() / pairs as f64)
}
