//! The balancing construction and the regularity lemma built on it.
//!
//! Given witnesses `M_i ∈ K(k_i, n)` with quotients `X_i = M_i S M_i^T`, the
//! balancing construction produces one matrix `T_{p,q} ∈ K(q, n)` and, for
//! each `i`, a balanced 0/1 partition `𝓜_i` of its `q` rows such that
//! `𝓜_i Z 𝓜_i^T` is within `4 γ(S) d / q` of `X_i`, where
//! `Z = T_{p,q} S T_{p,q}^T` and `d = ∏ k_i`.
//!
//! `T_{p,q}` has at most `d + 1` distinct rows, so it is stored as a table of
//! row types plus one type index per row.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matcore::{l1_dist, quotient, quotient_raw, FractionalPartitionMatrix, Matrix, NonNegSymMatrix};
use crate::math;
use crate::sampler::PolytopeSampler;
use crate::shapes::{directed_l1, shape_net, shape_sample, shape_sample_with};

/// Largest `m` the construction accepts.
pub const M_CAP: usize = 10_000_000;

/// Largest net accepted by [`regularize`].
pub const NET_CAP: usize = 10_000;

/// Picks `m = q` and `p = q − d` for tolerance `eps`, mass bound `c` and
/// class counts `ks`: `q` is the larger of `d` and the largest power of `d`
/// not exceeding `4 c d² / eps`.
pub fn choose_m(c: f64, eps: f64, ks: &[usize]) -> Result<(usize, usize, usize)> {
    if !(c > 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidArgument("c and eps must be positive".into()));
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument("ks must be nonempty positive integers".into()));
    }
    let mut d: usize = 1;
    for &k in ks {
        d = d
            .checked_mul(k)
            .filter(|&v| v <= M_CAP)
            .ok_or(Error::ResourceCap { what: "product of class counts", requested: ks_product(ks), cap: M_CAP as f64 })?;
    }
    let target = 4.0 * c * (d as f64) * (d as f64) / eps;
    let mut q1 = 1usize;
    if d > 1 {
        while (q1 as f64) * (d as f64) <= target {
            q1 *= d;
            if q1 > M_CAP {
                return Err(Error::ResourceCap { what: "m", requested: target, cap: M_CAP as f64 });
            }
        }
    }
    let q = q1.max(d);
    Ok((q, q - d, q))
}

fn ks_product(ks: &[usize]) -> f64 {
    ks.iter().map(|&k| k as f64).product()
}

/// Output of [`balance_blowup`].
#[derive(Clone, Debug, PartialEq)]
pub struct BalancingResult {
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub ks: Vec<usize>,
    /// Distinct rows of `T_{p,q}`: one per index tuple, then the padding row.
    pub types: Matrix,
    /// Type of every row of `T_{p,q}`.
    pub row_type: Vec<usize>,
    /// `types S types^T`; `Z[u][v] = type_quotient[row_type[u]][row_type[v]]`.
    pub type_quotient: Matrix,
    /// Class label of every row of `T_{p,q}` under `𝓜_i`.
    pub big_partitions: Vec<Vec<usize>>,
    /// `X_i = M_i S M_i^T`.
    pub targets: Vec<Matrix>,
    /// `𝓜_i Z 𝓜_i^T` for every `i`.
    pub reconstructions: Vec<Matrix>,
    pub errors_l1: Vec<f64>,
    /// `4 γ(S) d / m`.
    pub bound: f64,
    /// Number of duplicated (non-padding) rows.
    pub duplicated_rows: usize,
}

impl BalancingResult {
    /// `T_{p,q}` as a dense `q x n` matrix.
    pub fn t_pq(&self) -> Matrix {
        let n = self.types.cols();
        let mut t = Matrix::zeros(self.q, n);
        for (u, &ty) in self.row_type.iter().enumerate() {
            for (j, &v) in self.types.row(ty).iter().enumerate() {
                t.set(u, j, v);
            }
        }
        t
    }

    /// `Z = T_{p,q} S T_{p,q}^T` as a dense `m x m` matrix.
    pub fn z(&self) -> Matrix {
        let mut z = Matrix::zeros(self.m, self.m);
        for (u, &a) in self.row_type.iter().enumerate() {
            for (v, &b) in self.row_type.iter().enumerate() {
                z.set(u, v, self.type_quotient.get(a, b));
            }
        }
        z
    }

    /// Largest entry of `(p²/q²) X_i − 𝓜_i Z 𝓜_i^T`; nonpositive when the
    /// reconstruction dominates the scaled target.
    pub fn domination_gap(&self, i: usize) -> f64 {
        let r = (self.p as f64 / self.q as f64) * (self.p as f64 / self.q as f64);
        self.targets[i]
            .data()
            .iter()
            .zip(self.reconstructions[i].data())
            .map(|(x, y)| r * x - y)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Runs the balancing construction for witnesses of `S` with `m` from
/// [`choose_m`] at `c = γ(S)`.
pub fn balance_blowup(s: &NonNegSymMatrix, witnesses: &[FractionalPartitionMatrix], eps: f64) -> Result<BalancingResult> {
    if witnesses.is_empty() {
        return Err(Error::InvalidArgument("at least one witness is required".into()));
    }
    let ks: Vec<usize> = witnesses.iter().map(|w| w.k()).collect();
    let c = s.gamma();
    let (m, p, q) = if c > 0.0 { choose_m(c, eps, &ks)? } else { choose_m(1.0, eps, &ks)? };
    let result = balance_with(s, witnesses, p, q)?;
    for (i, e) in result.errors_l1.iter().enumerate() {
        if !(*e < eps) && c > 0.0 {
            return Err(Error::InvariantViolation(alloc::format!("witness {i}: error {e} is not below eps {eps}")));
        }
    }
    debug_assert_eq!(result.m, m);
    Ok(result)
}

/// The construction for explicit `p` and `q` with `p + ∏ k_i ≤ q` and every
/// `k_i` dividing `q`.
pub fn balance_with(s: &NonNegSymMatrix, witnesses: &[FractionalPartitionMatrix], p: usize, q: usize) -> Result<BalancingResult> {
    let n = s.n();
    for w in witnesses {
        if w.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: w.n() });
        }
        if !w.in_polytope() {
            return Err(Error::InvalidPartition(alloc::format!(
                "witness with k = {} is not in K(k, n): row sums differ from n/k",
                w.k()
            )));
        }
    }
    let ks: Vec<usize> = witnesses.iter().map(|w| w.k()).collect();
    let d = ks.iter().try_fold(1usize, |acc, &k| acc.checked_mul(k).filter(|&v| v <= M_CAP)).ok_or(
        Error::ResourceCap { what: "product of class counts", requested: ks_product(&ks), cap: M_CAP as f64 },
    )?;
    if p + d > q || ks.iter().any(|&k| q % k != 0) {
        return Err(Error::InvalidArgument(alloc::format!("p = {p}, q = {q} do not fit class counts {ks:?}")));
    }
    let mut strides = vec![1usize; ks.len()];
    for i in (0..ks.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * ks[i + 1];
    }
    let digit = |a: usize, i: usize| (a / strides[i]) % ks[i];

    let (pf, qf, nf) = (p as f64, q as f64, n as f64);
    let mut types = Matrix::zeros(d + 1, n);
    let mut copies = vec![0usize; d];
    for a in 0..d {
        let mut w = vec![1.0; n];
        for (i, m) in witnesses.iter().enumerate() {
            let row = m.matrix().row(digit(a, i));
            for (x, v) in w.iter_mut().zip(row) {
                *x *= v;
            }
        }
        let g: f64 = w.iter().sum();
        let c = ceil_tol(g * pf / nf);
        copies[a] = c;
        if c == 0 {
            for j in 0..n {
                types.set(a, j, 1.0 / qf);
            }
            continue;
        }
        let cf = c as f64;
        let scale = pf / (qf * cf);
        let shift = (1.0 / qf - pf * g / (qf * nf * cf)).max(0.0);
        for (j, x) in w.iter().enumerate() {
            types.set(a, j, scale * x + shift);
        }
    }
    for j in 0..n {
        types.set(d, j, 1.0 / qf);
    }
    let duplicated: usize = copies.iter().sum();
    if duplicated > q {
        return Err(Error::InvariantViolation(alloc::format!("{duplicated} duplicated rows exceed q = {q}")));
    }
    let mut row_type = Vec::with_capacity(q);
    for (a, &c) in copies.iter().enumerate() {
        row_type.extend(core::iter::repeat(a).take(c));
    }
    row_type.resize(q, d);

    let type_quotient = quotient_raw(s, &types)?.into_matrix();
    let mut big_partitions = Vec::with_capacity(ks.len());
    let mut targets = Vec::with_capacity(ks.len());
    let mut reconstructions = Vec::with_capacity(ks.len());
    let mut errors = Vec::with_capacity(ks.len());
    for (i, (&k, m)) in ks.iter().zip(witnesses).enumerate() {
        let labels = grow_to_balanced(&row_type, d, q, k, |a| digit(a, i))?;
        let mut counts = Matrix::zeros(k, d + 1);
        for (&lab, &ty) in labels.iter().zip(&row_type) {
            counts.add_at(lab, ty, 1.0);
        }
        let recon = counts.matmul(&type_quotient)?.matmul(&counts.transpose())?;
        let target = quotient(s, m)?.into_matrix();
        errors.push(l1_dist(&recon, &target)?);
        big_partitions.push(labels);
        targets.push(target);
        reconstructions.push(recon);
    }
    Ok(BalancingResult {
        m: q,
        p,
        q,
        ks,
        types,
        row_type,
        type_quotient,
        big_partitions,
        targets,
        reconstructions,
        errors_l1: errors,
        bound: 4.0 * s.gamma() * d as f64 / q as f64,
        duplicated_rows: duplicated,
    })
}

/// `ceil(x)`, except that values within rounding noise of an integer round
/// to it.
fn ceil_tol(x: f64) -> usize {
    let r = math::floor(x + 0.5);
    if math::abs(x - r) <= 1e-9 * x.max(1.0) {
        r as usize
    } else {
        math::ceil(x) as usize
    }
}

/// Labels every duplicated row by the class `t` of its tuple, then hands the
/// padding rows, in index order, to the classes still short of `q / k`,
/// lowest class first.
fn grow_to_balanced(
    row_type: &[usize],
    pad: usize,
    q: usize,
    k: usize,
    class_of: impl Fn(usize) -> usize,
) -> Result<Vec<usize>> {
    let size = q / k;
    let mut labels = vec![usize::MAX; q];
    let mut filled = vec![0usize; k];
    for (u, &ty) in row_type.iter().enumerate() {
        if ty != pad {
            let t = class_of(ty);
            labels[u] = t;
            filled[t] += 1;
        }
    }
    if let Some(t) = filled.iter().position(|&f| f > size) {
        return Err(Error::InvariantViolation(alloc::format!("class {t} has {} rows, more than q/k = {size}", filled[t])));
    }
    let mut t = 0;
    for l in labels.iter_mut().filter(|l| **l == usize::MAX) {
        while filled[t] == size {
            t += 1;
        }
        *l = t;
        filled[t] += 1;
    }
    Ok(labels)
}

/// Settings for [`regularize`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizeParams {
    /// Samples of C(S,k) thinned into the net.
    pub net_samples: usize,
    /// Samples per cloud when measuring the result.
    pub probe: usize,
    pub seed: u64,
    /// Largest `m` for which `X` is formed; fewer net points are used when
    /// the full net would need more.
    pub max_m: usize,
}

impl Default for RegularizeParams {
    fn default() -> Self {
        RegularizeParams { net_samples: 20_000, probe: 5_000, seed: 0, max_m: 2048 }
    }
}

/// Output of [`regularize`].
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizeResult {
    pub m: usize,
    pub x: Matrix,
    /// Directed distance from sampled C(S,k) into sampled C(X,k).
    pub measured: f64,
    /// Directed distance from sampled C(X,k) into sampled C(S,k).
    pub measured_reverse: f64,
    /// Whether the whole net went into the construction, so the guarantee
    /// `dist(C(X,k), C(S,k)) ≤ eps` applies up to sampling.
    pub certified: bool,
    pub net_size: usize,
    pub witnesses_used: usize,
    pub balancing_errors: Vec<f64>,
}

/// Finds `X ∈ C(S,m)` whose k-shape approximates that of `S`: an `eps/2` net
/// of C(S,k) is fed to the balancing construction at `eps/2`.
pub fn regularize(s: &NonNegSymMatrix, k: usize, eps: f64, params: RegularizeParams) -> Result<RegularizeResult> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let gamma = s.gamma();
    let c = if gamma > 0.0 { gamma } else { 1.0 };
    let sampler = PolytopeSampler::new(s, k, params.seed)?;
    let cloud = shape_sample_with(&sampler, params.net_samples)?;
    let net = shape_net(&cloud, eps / 2.0)?;
    if net.len() > NET_CAP {
        return Err(Error::ResourceCap { what: "net size", requested: net.len() as f64, cap: NET_CAP as f64 });
    }
    let order = farthest_first(&net.points);
    let mut r = 0;
    while r < order.len() {
        match choose_m(c, eps / 2.0, &vec![k; r + 1]) {
            Ok((m, _, _)) if m <= params.max_m => r += 1,
            _ => break,
        }
    }
    if r == 0 {
        let (m, _, _) = choose_m(c, eps / 2.0, &[k])?;
        return Err(Error::ResourceCap { what: "m", requested: m as f64, cap: params.max_m as f64 });
    }
    let indices = net.witnesses.as_ref().expect("sampled nets carry witnesses");
    let witnesses: Vec<FractionalPartitionMatrix> =
        order[..r].iter().map(|&i| sampler.witness(indices[i]).to_partition()).collect::<Result<_>>()?;
    let bal = if gamma > 0.0 { balance_blowup(s, &witnesses, eps / 2.0)? } else { balance_with(s, &witnesses, 0, k)? };

    let x = bal.z();
    let probe_s = shape_sample(s, k, params.probe, params.seed)?;
    let x_sampler = PolytopeSampler::factored(s, bal.row_type.clone(), bal.types.clone(), k, params.seed)?;
    let probe_x = shape_sample_with(&x_sampler, params.probe)?;
    let (measured, _) = directed_l1(&probe_s.points, &probe_x.points)?;
    let (measured_reverse, _) = directed_l1(&probe_x.points, &probe_s.points)?;
    Ok(RegularizeResult {
        m: bal.m,
        x,
        measured,
        measured_reverse,
        certified: r == net.len(),
        net_size: net.len(),
        witnesses_used: r,
        balancing_errors: bal.errors_l1,
    })
}

/// Farthest-first traversal order starting at point 0; ties go to the lowest
/// index.
fn farthest_first(points: &[Matrix]) -> Vec<usize> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order = vec![0];
    let mut dist: Vec<f64> = points.iter().map(|p| crate::matcore::l1_slices(p.data(), points[0].data())).collect();
    let mut used = vec![false; n];
    used[0] = true;
    while order.len() < n {
        let mut best = usize::MAX;
        for i in 0..n {
            if !used[i] && (best == usize::MAX || dist[i] > dist[best]) {
                best = i;
            }
        }
        used[best] = true;
        order.push(best);
        for i in 0..n {
            let d = crate::matcore::l1_slices(points[i].data(), points[best].data());
            if d < dist[i] {
                dist[i] = d;
            }
        }
    }
    order
}
