//! Finite-state Markov chains: validation, structural checks, stationary
//! distribution, time reversal, path probabilities and seeded sampling.
//!
//! State indices are 0-based throughout.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{real, stochastic_tol, Real};
use crate::rng::stream_rng;

/// Row-stochastic transition matrix of a finite Markov chain.
///
/// Immutable after validation; rows sum to 1 within 1e-12 and every entry
/// lies in [0, 1]. Inputs are never rescaled.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix<T: Real> {
    p: DMatrix<T>,
}

/// Probability distribution over the states of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<T: Real> {
    w: DVector<T>,
}

/// A finite realization of the mode chain, with the seed that produced it
/// (`None` for user-supplied paths).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModePath {
    pub indices: Vec<usize>,
    pub seed: Option<u64>,
}

/// Result of [`structural_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralCheck {
    pub irreducible: bool,
    pub aperiodic: bool,
}

/// Plain-document form of a chain for serialization: probabilities as
/// decimal floats, optional state labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDoc {
    pub p: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl<T: Real> TransitionMatrix<T> {
    /// Validates a raw square matrix as row-stochastic.
    pub fn validate(p: DMatrix<T>) -> Result<Self> {
        if p.nrows() != p.ncols() || p.nrows() == 0 {
            return Err(Error::NonSquare {
                rows: p.nrows(),
                cols: p.ncols(),
            });
        }
        let tol = stochastic_tol::<T>();
        for i in 0..p.nrows() {
            let mut sum = T::zero();
            for j in 0..p.ncols() {
                let v = p[(i, j)];
                if v < T::zero() {
                    return Err(Error::NegativeEntry {
                        row: i,
                        col: j,
                        value: v.to_f64().unwrap_or(f64::NAN),
                    });
                }
                sum += v;
            }
            if (sum - T::one()).abs() > tol {
                return Err(Error::RowSumViolation {
                    row: i,
                    sum: sum.to_f64().unwrap_or(f64::NAN),
                    tol: 1e-12,
                });
            }
        }
        Ok(Self { p })
    }

    /// Builds from row-major nested slices.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::NonSquare { rows: n, cols: r.len() });
            }
        }
        let p = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::validate(p)
    }

    pub fn n_states(&self) -> usize {
        self.p.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.p
    }

    pub fn prob(&self, from: usize, to: usize) -> T {
        self.p[(from, to)]
    }

    /// Strong-connectivity and periodicity of the positivity graph.
    ///
    /// Irreducible iff the directed graph of positive entries is strongly
    /// connected; aperiodic iff every state lying on a cycle has period 1
    /// (gcd of cycle lengths through it).
    pub fn structural_check(&self) -> StructuralCheck {
        let n = self.n_states();
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| self.p[(i, j)] > T::zero()).collect())
            .collect();
        let sccs = tarjan_scc(&adj);
        let irreducible = sccs.len() == 1;
        let aperiodic = sccs.iter().all(|scc| {
            match scc_period(&adj, scc) {
                Some(d) => d == 1,
                // No cycle through this component: nothing to constrain.
                None => true,
            }
        });
        StructuralCheck { irreducible, aperiodic }
    }

    /// Unique stationary distribution m with mᵀP = mᵀ.
    ///
    /// Solves the linear system (Pᵀ − I)m = 0 with one equation replaced by
    /// the normalization Σm_i = 1. Requires irreducibility.
    pub fn stationary(&self) -> Result<Distribution<T>> {
        if !self.structural_check().irreducible {
            return Err(Error::NotIrreducible);
        }
        let n = self.n_states();
        // Rows 0..n-1: (Pᵀ − I) m = 0, last row replaced by Σ m_i = 1.
        let mut a = self.p.transpose() - DMatrix::<T>::identity(n, n);
        let mut b = DVector::<T>::zeros(n);
        for j in 0..n {
            a[(n - 1, j)] = T::one();
        }
        b[n - 1] = T::one();
        let m = a
            .lu()
            .solve(&b)
            .ok_or(Error::NotIrreducible)?;
        Distribution::validate(m)
    }

    /// Time-reversed chain Q with q_ij = (m_j / m_i) p_ji.
    ///
    /// `m` must be stationary for `self` with every m_i > 0; then Q is
    /// row-stochastic and m is stationary for Q.
    pub fn reverse(&self, m: &Distribution<T>) -> Result<Self> {
        let n = self.n_states();
        if m.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.len() });
        }
        for i in 0..n {
            if m.weight(i) <= T::zero() {
                return Err(Error::ZeroMass { index: i });
            }
        }
        let q = DMatrix::from_fn(n, n, |i, j| m.weight(j) / m.weight(i) * self.p[(j, i)]);
        Self::validate(q)
    }

    /// Probability of observing `path` when the chain starts from `init`:
    /// init[i₀] · ∏ p_{i_t, i_{t+1}}.
    pub fn path_probability(&self, init: &Distribution<T>, path: &ModePath) -> Result<T> {
        let n = self.n_states();
        let first = *path.indices.first().ok_or(Error::EmptyPath)?;
        for &i in &path.indices {
            if i >= n {
                return Err(Error::InvalidPathIndex { index: i, n_states: n });
            }
        }
        let mut prob = init.weight(first);
        for w in path.indices.windows(2) {
            prob *= self.p[(w[0], w[1])];
        }
        Ok(prob)
    }

    /// Marginal distribution after `k` steps: initᵀPᵏ.
    pub fn distribution_at(&self, init: &Distribution<T>, k: usize) -> Result<Distribution<T>> {
        let n = self.n_states();
        if init.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: init.len() });
        }
        let mut eta = init.weights().transpose();
        for _ in 0..k {
            eta *= &self.p;
        }
        Distribution::validate(eta.transpose())
    }

    /// Samples a path of length `horizon + 1` starting from `init`.
    ///
    /// Reproducible: the generator is ChaCha8 keyed by `seed` on stream 0,
    /// so identical seeds give identical paths on every platform.
    pub fn sample_path(
        &self,
        init: &Distribution<T>,
        horizon: usize,
        seed: u64,
    ) -> Result<ModePath> {
        self.sample_path_stream(init, horizon, seed, 0)
    }

    /// As [`sample_path`](Self::sample_path) with an explicit RNG stream id,
    /// for mutually independent concurrent samplers.
    pub fn sample_path_stream(
        &self,
        init: &Distribution<T>,
        horizon: usize,
        seed: u64,
        stream: u64,
    ) -> Result<ModePath> {
        let mut rng = stream_rng(seed, stream);
        let mut path = self.sample_path_rng(init, horizon, &mut rng)?;
        path.seed = Some(seed);
        Ok(path)
    }

    /// Samples a path of length `horizon + 1` advancing a caller-owned RNG.
    pub fn sample_path_rng<R: Rng>(
        &self,
        init: &Distribution<T>,
        horizon: usize,
        rng: &mut R,
    ) -> Result<ModePath> {
        let n = self.n_states();
        if init.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: init.len() });
        }
        let mut indices = Vec::with_capacity(horizon + 1);
        let mut state = sample_index(init.weights().as_slice(), rng);
        indices.push(state);
        for _ in 0..horizon {
            let row: Vec<T> = (0..n).map(|j| self.p[(state, j)]).collect();
            state = sample_index(&row, rng);
            indices.push(state);
        }
        Ok(ModePath { indices, seed: None })
    }

    pub fn to_doc(&self) -> ChainDoc {
        ChainDoc {
            p: (0..self.n_states())
                .map(|i| {
                    (0..self.n_states())
                        .map(|j| self.p[(i, j)].to_f64().unwrap())
                        .collect()
                })
                .collect(),
            labels: None,
        }
    }

    pub fn from_doc(doc: &ChainDoc) -> Result<Self> {
        let rows: Vec<Vec<T>> = doc
            .p
            .iter()
            .map(|r| r.iter().map(|&x| real(x)).collect())
            .collect();
        Self::from_rows(&rows)
    }
}

impl<T: Real> Distribution<T> {
    /// Validates nonnegative weights summing to 1 within 1e-12.
    pub fn validate(w: DVector<T>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidDistribution { reason: "empty".into() });
        }
        let mut sum = T::zero();
        for (i, &v) in w.iter().enumerate() {
            if v < T::zero() {
                return Err(Error::InvalidDistribution {
                    reason: format!("negative weight at index {i}"),
                });
            }
            sum += v;
        }
        if (sum - T::one()).abs() > stochastic_tol::<T>() {
            return Err(Error::InvalidDistribution {
                reason: format!("weights sum to {}", sum.to_f64().unwrap_or(f64::NAN)),
            });
        }
        Ok(Self { w })
    }

    pub fn from_weights(w: &[T]) -> Result<Self> {
        Self::validate(DVector::from_row_slice(w))
    }

    /// Uniform distribution over `n` states.
    pub fn uniform(n: usize) -> Self {
        let w = DVector::from_element(n, T::one() / real::<T>(n as f64));
        Self { w }
    }

    /// Point mass on `index`.
    pub fn point_mass(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::InvalidPathIndex { index, n_states: n });
        }
        let mut w = DVector::zeros(n);
        w[index] = T::one();
        Ok(Self { w })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn weight(&self, i: usize) -> T {
        self.w[i]
    }

    pub fn weights(&self) -> &DVector<T> {
        &self.w
    }

    pub fn to_vec_f64(&self) -> Vec<f64> {
        self.w.iter().map(|x| x.to_f64().unwrap()).collect()
    }
}

impl ModePath {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices, seed: None }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Inverse-CDF sampling of an index from unnormalized-but-valid weights.
fn sample_index<T: Real, R: Rng>(weights: &[T], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w.to_f64().unwrap_or(0.0);
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Tarjan's strongly connected components on an adjacency-list graph.
fn tarjan_scc(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct State<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        lowlink: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next_index: usize,
        sccs: Vec<Vec<usize>>,
    }

    // Iterative DFS to avoid recursion limits on large chains.
    fn visit(st: &mut State, root: usize) {
        let mut call_stack: Vec<(usize, usize)> = vec![(root, 0)];
        st.index[root] = Some(st.next_index);
        st.lowlink[root] = st.next_index;
        st.next_index += 1;
        st.stack.push(root);
        st.on_stack[root] = true;
        while let Some(&mut (v, ref mut child)) = call_stack.last_mut() {
            if *child < st.adj[v].len() {
                let w = st.adj[v][*child];
                *child += 1;
                if st.index[w].is_none() {
                    st.index[w] = Some(st.next_index);
                    st.lowlink[w] = st.next_index;
                    st.next_index += 1;
                    st.stack.push(w);
                    st.on_stack[w] = true;
                    call_stack.push((w, 0));
                } else if st.on_stack[w] {
                    st.lowlink[v] = st.lowlink[v].min(st.index[w].unwrap());
                }
            } else {
                call_stack.pop();
                if let Some(&(parent, _)) = call_stack.last() {
                    st.lowlink[parent] = st.lowlink[parent].min(st.lowlink[v]);
                }
                if st.lowlink[v] == st.index[v].unwrap() {
                    let mut scc = Vec::new();
                    loop {
                        let w = st.stack.pop().unwrap();
                        st.on_stack[w] = false;
                        scc.push(w);
                        if w == v {
                            break;
                        }
                    }
                    st.sccs.push(scc);
                }
            }
        }
    }

    let n = adj.len();
    let mut st = State {
        adj,
        index: vec![None; n],
        lowlink: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next_index: 0,
        sccs: Vec::new(),
    };
    for v in 0..n {
        if st.index[v].is_none() {
            visit(&mut st, v);
        }
    }
    st.sccs
}

/// Period of a strongly connected component: gcd over internal edges (u, v)
/// of level[u] + 1 − level[v] from a BFS rooted inside the component.
/// Returns `None` when the component contains no cycle (a single vertex
/// without a self-loop).
fn scc_period(adj: &[Vec<usize>], scc: &[usize]) -> Option<u64> {
    let in_scc: std::collections::HashSet<usize> = scc.iter().copied().collect();
    if scc.len() == 1 {
        let v = scc[0];
        return if adj[v].contains(&v) { Some(1) } else { None };
    }
    let root = scc[0];
    let mut level: std::collections::HashMap<usize, i64> = std::collections::HashMap::new();
    level.insert(root, 0);
    let mut queue = std::collections::VecDeque::from([root]);
    let mut g: u64 = 0;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !in_scc.contains(&v) {
                continue;
            }
            match level.get(&v) {
                None => {
                    level.insert(v, level[&u] + 1);
                    queue.push_back(v);
                }
                Some(&lv) => {
                    let diff = (level[&u] + 1 - lv).unsigned_abs();
                    g = gcd(g, diff);
                }
            }
        }
    }
    if g == 0 {
        None
    } else {
        Some(g)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
