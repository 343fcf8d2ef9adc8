//! Example graph families and graph operations.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matcore::{check_balanced, Matrix, NonNegSymMatrix};
use crate::math;
use crate::rng::{self, domain};

/// Largest hypercube dimension accepted.
pub const HYPERCUBE_MAX_DIM: u32 = 14;
/// Largest vertex count of a tensor power.
pub const TENSOR_MAX_VERTICES: usize = 4096;
/// Largest vertex count of any generated graph.
pub const MAX_VERTICES: usize = 1 << 14;

/// A graph family with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum GraphSpec {
    Cycle { n: usize },
    /// `{0,1}^n`, edges at Hamming distance 1.
    Hypercube { n: u32 },
    /// `{0,1}^n`, edges at Hamming distance in `⌈αn⌉..=⌊αn+3⌋` (never 0).
    FatHypercube { n: u32, alpha: f64 },
    Complete { n: usize },
    /// `K_n` with every edge replaced by a path through `splits` new vertices.
    SubdivComplete { n: usize, splits: usize },
    TensorPower { base: Box<GraphSpec>, power: u32 },
    /// Every vertex replaced by `k` copies, every edge by `K_{k,k}`.
    Blowup { base: Box<GraphSpec>, k: usize },
}

impl GraphSpec {
    pub fn family(&self) -> &'static str {
        match self {
            GraphSpec::Cycle { .. } => "cycle",
            GraphSpec::Hypercube { .. } => "hypercube",
            GraphSpec::FatHypercube { .. } => "fat_hypercube",
            GraphSpec::Complete { .. } => "complete",
            GraphSpec::SubdivComplete { .. } => "subdiv_complete",
            GraphSpec::TensorPower { .. } => "tensor_power",
            GraphSpec::Blowup { .. } => "blowup",
        }
    }

    pub fn generate(&self) -> Result<NonNegSymMatrix> {
        match self {
            GraphSpec::Cycle { n } => cycle(*n),
            GraphSpec::Hypercube { n } => hypercube(*n),
            GraphSpec::FatHypercube { n, alpha } => fat_hypercube(*n, *alpha),
            GraphSpec::Complete { n } => complete(*n),
            GraphSpec::SubdivComplete { n, splits } => subdiv_complete(*n, *splits),
            GraphSpec::TensorPower { base, power } => tensor_power(&base.generate()?, *power),
            GraphSpec::Blowup { base, k } => blowup(&base.generate()?, *k),
        }
    }
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("graph needs at least one vertex".into()));
    }
    if n > MAX_VERTICES {
        return Err(Error::ResourceCap { what: "vertex count", requested: n as f64, cap: MAX_VERTICES as f64 });
    }
    Ok(())
}

fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> NonNegSymMatrix {
    let mut a = Matrix::zeros(n, n);
    for (u, v) in edges {
        a.set(u, v, 1.0);
        a.set(v, u, 1.0);
    }
    NonNegSymMatrix::from_trusted(a)
}

/// The cycle `C_n`; `n ≥ 3`.
pub fn cycle(n: usize) -> Result<NonNegSymMatrix> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("cycle needs n >= 3, got {n}")));
    }
    check_size(n)?;
    Ok(from_edges(n, (0..n).map(|i| (i, (i + 1) % n))))
}

pub fn complete(n: usize) -> Result<NonNegSymMatrix> {
    check_size(n)?;
    Ok(from_edges(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)))))
}

fn hamming_graph(n: u32, lo: u32, hi: u32) -> Result<NonNegSymMatrix> {
    if n > HYPERCUBE_MAX_DIM {
        return Err(Error::ResourceCap { what: "hypercube dimension", requested: n as f64, cap: HYPERCUBE_MAX_DIM as f64 });
    }
    let size = 1usize << n;
    let mut a = Matrix::zeros(size, size);
    for u in 0..size {
        for v in 0..size {
            let d = (u ^ v).count_ones();
            if d >= lo.max(1) && d <= hi {
                a.set(u, v, 1.0);
            }
        }
    }
    Ok(NonNegSymMatrix::from_trusted(a))
}

pub fn hypercube(n: u32) -> Result<NonNegSymMatrix> {
    hamming_graph(n, 1, 1)
}

pub fn fat_hypercube(n: u32, alpha: f64) -> Result<NonNegSymMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in [0, 1]")));
    }
    let an = alpha * n as f64;
    hamming_graph(n, math::ceil(an) as u32, math::floor(an + 3.0) as u32)
}

/// Vertices `0..n` are the originals; the new vertices of edge `{i, j}`
/// (`i < j`, lexicographic) follow in path order from `i` to `j`.
pub fn subdiv_complete(n: usize, splits: usize) -> Result<NonNegSymMatrix> {
    if n < 2 || splits == 0 {
        return Err(Error::InvalidArgument("subdivided complete graph needs n >= 2 and splits >= 1".into()));
    }
    let pairs = n * (n - 1) / 2;
    let total = n + splits * pairs;
    check_size(total)?;
    let mut edges = Vec::with_capacity((splits + 1) * pairs);
    let mut next = n;
    for i in 0..n {
        for j in i + 1..n {
            let mut prev = i;
            for _ in 0..splits {
                edges.push((prev, next));
                prev = next;
                next += 1;
            }
            edges.push((prev, j));
        }
    }
    Ok(from_edges(total, edges))
}

/// `G^{×p}`: vertex tuples, adjacent when adjacent in every coordinate.
/// Tuple `(v_1, …, v_p)` has index `v_1 |V|^{p-1} + … + v_p`.
pub fn tensor_power(g: &NonNegSymMatrix, power: u32) -> Result<NonNegSymMatrix> {
    if power == 0 {
        return Err(Error::InvalidArgument("tensor power must be at least 1".into()));
    }
    let n = g.n();
    let total = math::powf(n as f64, power as f64);
    if total > TENSOR_MAX_VERTICES as f64 {
        return Err(Error::ResourceCap { what: "tensor power vertex count", requested: total, cap: TENSOR_MAX_VERTICES as f64 });
    }
    let mut cur = g.matrix().clone();
    for _ in 1..power {
        cur = kron(&cur, g.matrix());
    }
    Ok(NonNegSymMatrix::from_trusted(cur))
}

fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca, rb, cb) = (a.rows(), a.cols(), b.rows(), b.cols());
    let mut out = Matrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let x = a.get(i, j);
            if x == 0.0 {
                continue;
            }
            for p in 0..rb {
                for q in 0..cb {
                    out.set(i * rb + p, j * cb + q, x * b.get(p, q));
                }
            }
        }
    }
    out
}

/// `A ⊗ J_k`: copy `c` of vertex `v` has index `v k + c`.
pub fn blowup(g: &NonNegSymMatrix, k: usize) -> Result<NonNegSymMatrix> {
    if k == 0 {
        return Err(Error::InvalidArgument("blow-up factor must be at least 1".into()));
    }
    check_size(g.n() * k)?;
    Ok(NonNegSymMatrix::from_trusted(kron(g.matrix(), &Matrix::filled(k, k, 1.0))))
}

/// Number of edges, counting a loop once: `(‖A‖₁ + tr A) / 2`.
pub fn edge_count(a: &NonNegSymMatrix) -> f64 {
    let trace: f64 = (0..a.n()).map(|i| a.get(i, i)).sum();
    0.5 * (a.gamma() + trace)
}

/// Balanced coloring of a cycle from a Markov chain run.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovPartition {
    pub labels: Vec<usize>,
    /// Vertices recolored by the balancing repair.
    pub moved: usize,
    /// ℓ₁ change of the normalized quotient caused by the repair.
    pub repair_shift: f64,
    /// The normalized quotient of `C_n` under `labels`.
    pub quotient: Matrix,
}

/// Colors `C_n` by a stationary run of the chain `kM`, then recolors a few
/// vertices to make the classes balanced. Each move goes from an over-full
/// class to an under-full one and picks the vertex whose move brings the
/// edge-count matrix closest to its expected value `2nM`.
pub fn markov_witness_partition(m: &Matrix, n: usize, seed: u64) -> Result<MarkovPartition> {
    let k = m.rows();
    if k == 0 || m.cols() != k {
        return Err(Error::InvalidArgument("target must be a nonempty square matrix".into()));
    }
    if n < 3 || n < k {
        return Err(Error::InvalidArgument(format!("need n >= max(3, k), got n = {n}, k = {k}")));
    }
    let kf = k as f64;
    for i in 0..k {
        for j in 0..k {
            let v = m.get(i, j);
            if !(v >= -1e-12) || math::abs(v - m.get(j, i)) > 1e-9 {
                return Err(Error::InvalidArgument("target must be symmetric and nonnegative".into()));
            }
        }
        let row: f64 = m.row(i).iter().sum();
        if math::abs(kf * row - 1.0) > 1e-9 {
            return Err(Error::InvalidArgument(format!("k M is not stochastic: row {i} sums to {}", kf * row)));
        }
    }

    let mut r = rng::stream(seed, domain::MARKOV, 0);
    let mut labels = Vec::with_capacity(n);
    let mut state = r.random_range(0..k);
    labels.push(state);
    for _ in 1..n {
        let u: f64 = r.random::<f64>() / kf;
        let mut acc = 0.0;
        let mut next = k - 1;
        for j in 0..k {
            acc += m.get(state, j).max(0.0);
            if u < acc {
                next = j;
                break;
            }
        }
        state = next;
        labels.push(state);
    }

    let adj = |v: usize| [(v + n - 1) % n, (v + 1) % n];
    let mut counts = vec![0.0; k * k];
    for v in 0..n {
        for u in adj(v) {
            counts[labels[v] * k + labels[u]] += 1.0;
        }
    }
    let before = counts.clone();
    let target: Vec<f64> = m.data().iter().map(|x| 2.0 * n as f64 * x).collect();
    let moved = repair_balance(&mut labels, k, &mut counts, &target, adj);
    let total = 2.0 * n as f64;
    let repair_shift = counts.iter().zip(&before).map(|(a, b)| math::abs(a - b)).sum::<f64>() / total;
    check_balanced(&labels, k).map_err(|e| Error::InvariantViolation(format!("repair left {e}")))?;
    // ordered edge counts are the quotient of the unnormalized cycle
    let quotient = Matrix::from_vec(k, k, counts.iter().map(|c| c / total).collect())?;
    Ok(MarkovPartition { labels, moved, repair_shift, quotient })
}

/// Greedy recoloring until class sizes are balanced. Larger classes keep the
/// `⌈n/k⌉` slots. `counts[a k + b]` counts ordered edges between classes;
/// the graph must be loopless and 2-regular.
///
/// The gain of a move depends only on the labels of the vertex and its two
/// neighbors, so gains are evaluated once per such type; ties go to the
/// smallest vertex, as in a scan over all vertices.
fn repair_balance<F>(labels: &mut [usize], k: usize, counts: &mut [f64], target: &[f64], neighbors: F) -> usize
where
    F: Fn(usize) -> [usize; 2],
{
    let n = labels.len();
    let mut size = vec![0usize; k];
    for &l in labels.iter() {
        size[l] += 1;
    }
    let mut by_size: Vec<usize> = (0..k).collect();
    by_size.sort_by(|&a, &b| size[b].cmp(&size[a]).then(a.cmp(&b)));
    let mut cap = vec![n / k; k];
    for &c in by_size.iter().take(n % k) {
        cap[c] += 1;
    }
    let type_of = |labels: &[usize], v: usize| {
        let [l, r] = neighbors(v);
        (labels[v] * k + labels[l]) * k + labels[r]
    };
    let mut members: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k * k * k];
    for v in 0..n {
        members[type_of(labels, v)].insert(v);
    }
    let mut moved = 0;
    loop {
        let under: Vec<usize> = (0..k).filter(|&c| size[c] < cap[c]).collect();
        if (0..k).all(|c| size[c] <= cap[c]) {
            break;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for (t, set) in members.iter().enumerate() {
            let Some(&v) = set.first() else { continue };
            let a = t / (k * k);
            if size[a] <= cap[a] {
                continue;
            }
            let nbr = [(t / k) % k, t % k];
            for &b in &under {
                // change of Σ|counts - target| over the touched entries
                let mut delta = [(0usize, 0.0f64); 8];
                let mut len = 0;
                for &c in &nbr {
                    for d in [(a * k + c, -1.0), (c * k + a, -1.0), (b * k + c, 1.0), (c * k + b, 1.0)] {
                        delta[len] = d;
                        len += 1;
                    }
                }
                let delta = &mut delta[..len];
                delta.sort_unstable_by_key(|d| d.0);
                let mut gain = 0.0;
                let mut i = 0;
                while i < delta.len() {
                    let idx = delta[i].0;
                    let mut d = 0.0;
                    while i < delta.len() && delta[i].0 == idx {
                        d += delta[i].1;
                        i += 1;
                    }
                    if d != 0.0 {
                        gain += math::abs(counts[idx] + d - target[idx]) - math::abs(counts[idx] - target[idx]);
                    }
                }
                if best.map_or(true, |(g, bv, _)| gain < g || (gain == g && v < bv)) {
                    best = Some((gain, v, b));
                }
            }
        }
        let (_, v, b) = best.expect("an over-full class has a vertex");
        let a = labels[v];
        let nb = neighbors(v);
        for &u in nb.iter().chain(core::iter::once(&v)) {
            members[type_of(labels, u)].remove(&u);
        }
        for u in nb {
            let c = labels[u];
            counts[a * k + c] -= 1.0;
            counts[c * k + a] -= 1.0;
            counts[b * k + c] += 1.0;
            counts[c * k + b] += 1.0;
        }
        labels[v] = b;
        for &u in nb.iter().chain(core::iter::once(&v)) {
            members[type_of(labels, u)].insert(u);
        }
        size[a] -= 1;
        size[b] += 1;
        moved += 1;
    }
    moved
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::l1_dist;
    use proptest::prelude::*;

    fn degrees(a: &NonNegSymMatrix) -> Vec<f64> {
        a.row_sums()
    }

    #[test]
    fn cycle_four() {
        let c = cycle(4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let d = (i as i32 - j as i32).rem_euclid(4);
                assert_eq!(c.get(i, j), if d == 1 || d == 3 { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(edge_count(&c), 4.0);
        assert!(cycle(2).is_err());
    }

    #[test]
    fn cube() {
        let h = hypercube(3).unwrap();
        assert_eq!(h.n(), 8);
        assert_eq!(edge_count(&h), 12.0);
        assert!(degrees(&h).iter().all(|&d| d == 3.0));
        assert!(hypercube(15).is_err());
    }

    #[test]
    fn fat_hypercube_is_regular() {
        // n = 6, alpha = 0.5: distances 3..=6
        let h = fat_hypercube(6, 0.5).unwrap();
        let expected = 20.0 + 15.0 + 6.0 + 1.0;
        assert!(degrees(&h).iter().all(|&d| d == expected));
        // alpha = 0 would include distance 0; loops are never added
        let z = fat_hypercube(4, 0.0).unwrap();
        assert!((0..16).all(|i| z.get(i, i) == 0.0));
        assert!(degrees(&z).iter().all(|&d| d == 4.0 + 6.0 + 4.0));
    }

    #[test]
    fn blowup_of_triangle() {
        let b = blowup(&cycle(3).unwrap(), 2).unwrap();
        assert_eq!(b.n(), 6);
        assert_eq!(edge_count(&b), 12.0);
        assert!(degrees(&b).iter().all(|&d| d == 4.0));
    }

    #[test]
    fn subdivided_complete_graph() {
        for (n, splits) in [(5, 1), (5, 2), (7, 1)] {
            let g = subdiv_complete(n, splits).unwrap();
            let pairs = n * (n - 1) / 2;
            assert_eq!(g.n(), n + splits * pairs);
            assert_eq!(edge_count(&g), ((splits + 1) * pairs) as f64);
            let d = degrees(&g);
            assert!(d[..n].iter().all(|&x| x == (n - 1) as f64));
            assert!(d[n..].iter().all(|&x| x == 2.0));
        }
    }

    #[test]
    fn tensor_square_of_path() {
        let p = NonNegSymMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let t = tensor_power(&p, 2).unwrap();
        // K_2 × K_2 is a perfect matching on four vertices
        assert_eq!(edge_count(&t), 2.0);
        assert_eq!(t.get(0, 3), 1.0);
        assert_eq!(t.get(1, 2), 1.0);
        assert!(tensor_power(&cycle(17).unwrap(), 3).is_err());
        let spec = GraphSpec::TensorPower { base: Box::new(GraphSpec::Cycle { n: 5 }), power: 2 };
        let g = spec.generate().unwrap();
        assert_eq!(g.n(), 25);
        assert!(degrees(&g).iter().all(|&d| d == 4.0));
    }

    #[test]
    fn markov_flat_and_trivial() {
        let one = markov_witness_partition(&Matrix::filled(1, 1, 1.0), 50, 0).unwrap();
        assert!(one.labels.iter().all(|&l| l == 0));
        assert_eq!(one.quotient.get(0, 0), 1.0);
        let flat = markov_witness_partition(&Matrix::filled(3, 3, 1.0 / 9.0), 3000, 4).unwrap();
        assert!(l1_dist(&flat.quotient, &Matrix::filled(3, 3, 1.0 / 9.0)).unwrap() < 0.1);
        assert!(markov_witness_partition(&Matrix::filled(2, 2, 0.3), 100, 0).is_err());
    }

    #[test]
    fn markov_cyclic_bands() {
        // k M is the cyclic shift on three classes
        let mut m = Matrix::zeros(3, 3);
        for i in 0..3 {
            m.set(i, (i + 1) % 3, 1.0 / 6.0);
            m.set((i + 1) % 3, i, 1.0 / 6.0);
        }
        let p = markov_witness_partition(&m, 2001, 1).unwrap();
        assert!(l1_dist(&p.quotient, &m).unwrap() < 0.05);
    }

    #[test]
    fn markov_reducible_chain_is_repaired_into_arcs() {
        let m = Matrix::from_rows(&[[0.5, 0.0], [0.0, 0.5]]).unwrap();
        let p = markov_witness_partition(&m, 2000, 9).unwrap();
        assert!(p.moved >= 1000);
        assert!(l1_dist(&p.quotient, &m).unwrap() < 0.01);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn markov_partitions_are_balanced_and_close(seed in any::<u64>(), k in 1usize..4, n in 2000usize..2400) {
            let m = Matrix::filled(k, k, 1.0 / (k * k) as f64);
            let p = markov_witness_partition(&m, n, seed).unwrap();
            prop_assert!(check_balanced(&p.labels, k).is_ok());
            prop_assert!(l1_dist(&p.quotient, &m).unwrap() <= 0.1);
            let direct = crate::matcore::quotient_balanced(&cycle(n).unwrap().normalized(), &p.labels, k).unwrap();
            prop_assert!(l1_dist(direct.matrix(), &p.quotient).unwrap() <= 1e-12);
        }

        #[test]
        fn mass_is_twice_the_edges(n in 3usize..30, k in 1usize..4) {
            let c = cycle(n).unwrap();
            prop_assert_eq!(c.gamma(), 2.0 * edge_count(&c));
            let b = blowup(&c, k).unwrap();
            prop_assert_eq!(b.gamma(), 2.0 * edge_count(&b));
            prop_assert_eq!(b.gamma(), (k * k) as f64 * c.gamma());
        }
    }
}
