//! The mode system: per-mode interaction matrices, the shared diagonal
//! learning matrix, effective affine maps, and constructors for the named
//! special cases (classical conditioning, per-agent conditioning,
//! Friedkin-Johnsen, attraction/neglect/repulsion).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::{ChainDoc, Distribution, TransitionMatrix};
use crate::error::{Error, Result};
use crate::num::{real, stochastic_tol, Real};

/// Diagonal learning matrix A with 0 ≤ A ≤ I, stored as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningMatrix<T: Real> {
    alpha: DVector<T>,
}

/// One mode: interaction matrices (B, W) and the stimulus vector active
/// while the chain sits in this mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode<T: Real> {
    pub b: DMatrix<T>,
    pub w: DMatrix<T>,
    pub r: DVector<T>,
}

/// The full switched system: N modes over n agents, a shared learning
/// matrix, the mode chain and its initial distribution.
///
/// Immutable after construction; safe to share across parallel simulators.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSystem<T: Real> {
    n_agents: usize,
    a: LearningMatrix<T>,
    modes: Vec<Mode<T>>,
    chain: TransitionMatrix<T>,
    init_dist: Distribution<T>,
}

/// The affine update x ↦ f·x + c applied while in one mode:
/// f = B − A·W and c = A·r.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap<T: Real> {
    pub f: DMatrix<T>,
    pub c: DVector<T>,
}

impl<T: Real> LearningMatrix<T> {
    pub fn new(alpha: &[T]) -> Result<Self> {
        for (i, &a) in alpha.iter().enumerate() {
            if a < T::zero() || a > T::one() {
                return Err(Error::AlphaOutOfRange {
                    index: i,
                    value: a.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self { alpha: DVector::from_row_slice(alpha) })
    }

    pub fn uniform(n: usize, alpha: T) -> Result<Self> {
        Self::new(&vec![alpha; n])
    }

    pub fn zeros(n: usize) -> Self {
        Self { alpha: DVector::zeros(n) }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn diagonal(&self) -> &DVector<T> {
        &self.alpha
    }

    /// A·v, i.e. entrywise alpha_i v_i.
    pub fn apply(&self, v: &DVector<T>) -> DVector<T> {
        self.alpha.component_mul(v)
    }

    /// A·M: row i of M scaled by alpha_i.
    pub fn scale_rows(&self, m: &DMatrix<T>) -> DMatrix<T> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| self.alpha[i] * m[(i, j)])
    }
}

/// Effective matrix F = B − A·W of one mode.
pub fn effective_matrix<T: Real>(
    b: &DMatrix<T>,
    a: &LearningMatrix<T>,
    w: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let n = b.nrows();
    if b.ncols() != n || w.nrows() != n || w.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: w.nrows() });
    }
    if a.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.dim() });
    }
    Ok(b - a.scale_rows(w))
}

fn check_row_stochastic<T: Real>(m: &DMatrix<T>, what: &str) -> Result<()> {
    let tol = stochastic_tol::<T>();
    for i in 0..m.nrows() {
        let mut sum = T::zero();
        for j in 0..m.ncols() {
            let v = m[(i, j)];
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
    let _ = what;
    Ok(())
}

impl<T: Real> Mode<T> {
    pub fn new(b: DMatrix<T>, w: DMatrix<T>, r: DVector<T>) -> Result<Self> {
        let n = b.nrows();
        if b.ncols() != n || w.nrows() != n || w.ncols() != n || r.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: w.nrows() });
        }
        check_row_stochastic(&b, "b")?;
        check_row_stochastic(&w, "w")?;
        Ok(Self { b, w, r })
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }
}

impl<T: Real> ModeSystem<T> {
    pub fn new(
        a: LearningMatrix<T>,
        modes: Vec<Mode<T>>,
        chain: TransitionMatrix<T>,
        init_dist: Distribution<T>,
    ) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidDistribution { reason: "no modes".into() });
        }
        let n = modes[0].dim();
        for m in &modes {
            if m.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: m.dim() });
            }
        }
        if a.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.dim() });
        }
        if chain.n_states() != modes.len() {
            return Err(Error::DimensionMismatch {
                expected: modes.len(),
                got: chain.n_states(),
            });
        }
        if init_dist.len() != modes.len() {
            return Err(Error::DimensionMismatch {
                expected: modes.len(),
                got: init_dist.len(),
            });
        }
        Ok(Self { n_agents: n, a, modes, chain, init_dist })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn learning(&self) -> &LearningMatrix<T> {
        &self.a
    }

    pub fn mode(&self, index: usize) -> Result<&Mode<T>> {
        self.modes
            .get(index)
            .ok_or(Error::IndexOutOfRange { index, n_modes: self.modes.len() })
    }

    pub fn modes(&self) -> &[Mode<T>] {
        &self.modes
    }

    pub fn chain(&self) -> &TransitionMatrix<T> {
        &self.chain
    }

    pub fn init_dist(&self) -> &Distribution<T> {
        &self.init_dist
    }

    /// Replaces the mode chain and initial distribution.
    pub fn with_chain(
        mut self,
        chain: TransitionMatrix<T>,
        init_dist: Distribution<T>,
    ) -> Result<Self> {
        if chain.n_states() != self.modes.len() || init_dist.len() != self.modes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.modes.len(),
                got: chain.n_states(),
            });
        }
        self.chain = chain;
        self.init_dist = init_dist;
        Ok(self)
    }

    /// Effective matrix F_i = B_i − A·W_i of mode `index`.
    pub fn effective(&self, index: usize) -> Result<DMatrix<T>> {
        let m = self.mode(index)?;
        effective_matrix(&m.b, &self.a, &m.w)
    }

    /// The affine update of mode `index`: f = F_i, c = A·r_i.
    pub fn affine_map(&self, index: usize) -> Result<AffineMap<T>> {
        let m = self.mode(index)?;
        Ok(AffineMap {
            f: effective_matrix(&m.b, &self.a, &m.w)?,
            c: self.a.apply(&m.r),
        })
    }

    /// All affine maps, indexed by mode.
    pub fn affine_maps(&self) -> Result<Vec<AffineMap<T>>> {
        (0..self.n_modes()).map(|i| self.affine_map(i)).collect()
    }

    pub fn to_doc(&self) -> ModeSystemDoc {
        ModeSystemDoc {
            n: self.n_agents,
            alpha: self.a.alpha.iter().map(|x| x.to_f64().unwrap()).collect(),
            modes: self
                .modes
                .iter()
                .map(|m| ModeDoc {
                    b: mat_to_rows(&m.b),
                    w: mat_to_rows(&m.w),
                    r: m.r.iter().map(|x| x.to_f64().unwrap()).collect(),
                })
                .collect(),
            chain: self.chain.to_doc(),
            init_dist: self.init_dist.to_vec_f64(),
        }
    }

    pub fn from_doc(doc: &ModeSystemDoc) -> Result<Self> {
        let a = LearningMatrix::new(
            &doc.alpha.iter().map(|&x| real(x)).collect::<Vec<T>>(),
        )?;
        let modes = doc
            .modes
            .iter()
            .map(|m| {
                Mode::new(
                    rows_to_mat(&m.b, doc.n)?,
                    rows_to_mat(&m.w, doc.n)?,
                    DVector::from_iterator(m.r.len(), m.r.iter().map(|&x| real(x))),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let chain = TransitionMatrix::from_doc(&doc.chain)?;
        let init = Distribution::from_weights(
            &doc.init_dist.iter().map(|&x| real(x)).collect::<Vec<T>>(),
        )?;
        Self::new(a, modes, chain, init)
    }
}

fn mat_to_rows<T: Real>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].to_f64().unwrap()).collect())
        .collect()
}

fn rows_to_mat<T: Real>(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<T>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::NonSquare {
            rows: rows.len(),
            cols: rows.first().map_or(0, |r| r.len()),
        });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| real(rows[i][j])))
}

/// Plain-document form of a [`ModeSystem`] for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSystemDoc {
    pub n: usize,
    pub alpha: Vec<f64>,
    pub modes: Vec<ModeDoc>,
    pub chain: ChainDoc,
    pub init_dist: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeDoc {
    pub b: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub r: Vec<f64>,
}

/// A switched affine system in reduced form: one affine map per mode plus
/// the mode chain. This is what the dynamics and analysis modules operate
/// on; [`ModeSystem::to_affine`] lowers the structured model into it, and
/// raw construction covers effective matrices that the row-stochastic
/// (B, W, shared A) parametrization cannot reach.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSystem<T: Real> {
    maps: Vec<AffineMap<T>>,
    chain: TransitionMatrix<T>,
    init_dist: Distribution<T>,
}

impl<T: Real> AffineSystem<T> {
    pub fn new(
        maps: Vec<AffineMap<T>>,
        chain: TransitionMatrix<T>,
        init_dist: Distribution<T>,
    ) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidDistribution { reason: "no maps".into() });
        }
        let n = maps[0].f.nrows();
        for m in &maps {
            if m.f.nrows() != n || m.f.ncols() != n || m.c.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: m.f.nrows() });
            }
        }
        if chain.n_states() != maps.len() || init_dist.len() != maps.len() {
            return Err(Error::DimensionMismatch {
                expected: maps.len(),
                got: chain.n_states(),
            });
        }
        Ok(Self { maps, chain, init_dist })
    }

    /// Scalar modes given as (f, c) pairs.
    pub fn scalar(
        modes: &[(T, T)],
        chain: TransitionMatrix<T>,
        init_dist: Distribution<T>,
    ) -> Result<Self> {
        let maps = modes
            .iter()
            .map(|&(f, c)| AffineMap {
                f: DMatrix::from_element(1, 1, f),
                c: DVector::from_element(1, c),
            })
            .collect();
        Self::new(maps, chain, init_dist)
    }

    pub fn n_agents(&self) -> usize {
        self.maps[0].f.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.maps.len()
    }

    pub fn chain(&self) -> &TransitionMatrix<T> {
        &self.chain
    }

    pub fn init_dist(&self) -> &Distribution<T> {
        &self.init_dist
    }

    pub fn map(&self, index: usize) -> Result<&AffineMap<T>> {
        self.maps
            .get(index)
            .ok_or(Error::IndexOutOfRange { index, n_modes: self.maps.len() })
    }

    pub fn maps(&self) -> &[AffineMap<T>] {
        &self.maps
    }

    /// Linear part F of mode `index`.
    pub fn effective(&self, index: usize) -> Result<&DMatrix<T>> {
        self.map(index).map(|m| &m.f)
    }

    pub fn with_chain(
        mut self,
        chain: TransitionMatrix<T>,
        init_dist: Distribution<T>,
    ) -> Result<Self> {
        if chain.n_states() != self.maps.len() || init_dist.len() != self.maps.len() {
            return Err(Error::DimensionMismatch {
                expected: self.maps.len(),
                got: chain.n_states(),
            });
        }
        self.chain = chain;
        self.init_dist = init_dist;
        Ok(self)
    }

    pub fn to_doc(&self) -> AffineSystemDoc {
        AffineSystemDoc {
            maps: self
                .maps
                .iter()
                .map(|m| AffineMapDoc {
                    f: mat_to_rows(&m.f),
                    c: m.c.iter().map(|x| x.to_f64().unwrap()).collect(),
                })
                .collect(),
            chain: self.chain.to_doc(),
            init_dist: self.init_dist.to_vec_f64(),
        }
    }

    pub fn from_doc(doc: &AffineSystemDoc) -> Result<Self> {
        let maps = doc
            .maps
            .iter()
            .map(|m| {
                let n = m.c.len();
                if m.f.len() != n || m.f.iter().any(|r| r.len() != n) {
                    return Err(Error::NonSquare {
                        rows: m.f.len(),
                        cols: m.f.first().map_or(0, |r| r.len()),
                    });
                }
                Ok(AffineMap {
                    f: DMatrix::from_fn(n, n, |i, j| real(m.f[i][j])),
                    c: DVector::from_iterator(n, m.c.iter().map(|&x| real(x))),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let chain = TransitionMatrix::from_doc(&doc.chain)?;
        let init = Distribution::from_weights(
            &doc.init_dist.iter().map(|&x| real(x)).collect::<Vec<T>>(),
        )?;
        Self::new(maps, chain, init)
    }
}

impl<T: Real> ModeSystem<T> {
    /// Lowers the structured model to its switched affine form
    /// (f = B_i − A·W_i, c = A·r_i).
    pub fn to_affine(&self) -> Result<AffineSystem<T>> {
        AffineSystem::new(
            self.affine_maps()?,
            self.chain.clone(),
            self.init_dist.clone(),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSystemDoc {
    pub maps: Vec<AffineMapDoc>,
    pub chain: ChainDoc,
    pub init_dist: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineMapDoc {
    pub f: Vec<Vec<f64>>,
    pub c: Vec<f64>,
}

/// Chain whose rows all equal `row`: mode draws are i.i.d. from `row`.
fn iid_chain<T: Real>(row: &[T]) -> Result<TransitionMatrix<T>> {
    let n = row.len();
    TransitionMatrix::validate(DMatrix::from_fn(n, n, |_, j| row[j]))
}

/// Classical conditioning update over `n` coupled stimuli: B = I and
/// W = (1/n)·𝟙𝟙ᵀ for every mode; modes differ only in the stimulus level,
/// broadcast to all agents. The mode chain defaults to i.i.d. uniform over
/// the levels; override with [`ModeSystem::with_chain`].
pub fn classical_rw<T: Real>(
    n: usize,
    alpha: T,
    stimulus_levels: &[T],
) -> Result<ModeSystem<T>> {
    if stimulus_levels.is_empty() {
        return Err(Error::InvalidDistribution { reason: "no stimulus levels".into() });
    }
    let a = LearningMatrix::uniform(n, alpha)?;
    let b = DMatrix::identity(n, n);
    let w = DMatrix::from_element(n, n, T::one() / real::<T>(n as f64));
    let modes = stimulus_levels
        .iter()
        .map(|&lvl| Mode::new(b.clone(), w.clone(), DVector::from_element(n, lvl)))
        .collect::<Result<Vec<_>>>()?;
    let nm = modes.len();
    let chain = iid_chain(&vec![T::one() / real::<T>(nm as f64); nm])?;
    ModeSystem::new(a, modes, chain, Distribution::uniform(nm))
}

/// Decoupled per-agent conditioning: B = I and W = I for every mode, with
/// per-agent learning rates; each stimulus level is broadcast to all agents
/// (1 for acquisition, 0 for extinction in the binary case). Chain defaults
/// to i.i.d. uniform over levels.
pub fn epstein<T: Real>(alpha: &[T], stimulus_levels: &[T]) -> Result<ModeSystem<T>> {
    if stimulus_levels.is_empty() {
        return Err(Error::InvalidDistribution { reason: "no stimulus levels".into() });
    }
    let n = alpha.len();
    let a = LearningMatrix::new(alpha)?;
    let id = DMatrix::<T>::identity(n, n);
    let modes = stimulus_levels
        .iter()
        .map(|&lvl| Mode::new(id.clone(), id.clone(), DVector::from_element(n, lvl)))
        .collect::<Result<Vec<_>>>()?;
    let nm = modes.len();
    let chain = iid_chain(&vec![T::one() / real::<T>(nm as f64); nm])?;
    ModeSystem::new(a, modes, chain, Distribution::uniform(nm))
}

/// Friedkin-Johnsen opinion dynamics x⁺ = ΛWx + (I−Λ)u as a single-mode
/// system: A = I − Λ, B = W, stimulus r = u, so F = ΛW.
pub fn friedkin_johnsen<T: Real>(
    w: DMatrix<T>,
    lambda: &[T],
    u: DVector<T>,
) -> Result<ModeSystem<T>> {
    let n = w.nrows();
    check_row_stochastic(&w, "w")?;
    if lambda.len() != n || u.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: lambda.len() });
    }
    let a_diag: Vec<T> = lambda.iter().map(|&l| T::one() - l).collect();
    let a = LearningMatrix::new(&a_diag)?;
    let mode = Mode::new(w.clone(), w, u)?;
    let chain = TransitionMatrix::from_rows(&[vec![T::one()]])?;
    ModeSystem::new(a, vec![mode], chain, Distribution::uniform(1))
}

/// Agreement/disagreement dynamics with three i.i.d.-selected events over a
/// shared averaging matrix `w_avg`:
/// attraction x⁺ = W·x, neglect x⁺ = x, repulsion x⁺ = ((1+β)I − βW)·x.
///
/// The learning matrix is zero, so the stimulus never enters. The repulsion
/// matrix is illustrative: β is clipped so its rows stay nonnegative.
pub fn attract_neglect_repulse<T: Real>(
    w_avg: DMatrix<T>,
    beta: T,
    event_probs: [T; 3],
) -> Result<ModeSystem<T>> {
    let n = w_avg.nrows();
    check_row_stochastic(&w_avg, "w_avg")?;
    let sum = event_probs[0] + event_probs[1] + event_probs[2];
    if (sum - T::one()).abs() > stochastic_tol::<T>()
        || event_probs.iter().any(|&p| p < T::zero())
    {
        return Err(Error::ProbabilitySumViolation {
            sum: sum.to_f64().unwrap_or(f64::NAN),
        });
    }
    let id = DMatrix::<T>::identity(n, n);
    // (1+β)I − βW has off-diagonal entries −βW_ij, so any positive
    // off-diagonal averaging weight forces the clip β → 0 to keep the
    // repulsion matrix row-stochastic. Rows always sum to 1 by construction.
    let off_diag_positive = (0..n)
        .any(|i| (0..n).any(|j| i != j && w_avg[(i, j)] > T::zero()));
    let beta = if off_diag_positive || beta < T::zero() {
        T::zero()
    } else {
        beta
    };
    let repulse = &id * (T::one() + beta) - &w_avg * beta;
    let zero_r = DVector::<T>::zeros(n);
    let modes = vec![
        Mode::new(w_avg.clone(), id.clone(), zero_r.clone())?, // attraction
        Mode::new(id.clone(), id.clone(), zero_r.clone())?,    // neglect
        Mode::new(repulse, id, zero_r)?,                       // repulsion
    ];
    let chain = iid_chain(&event_probs)?;
    let init = Distribution::from_weights(&event_probs)?;
    ModeSystem::new(LearningMatrix::zeros(n), modes, chain, init)
}

/// Joint chain for independent topology and stimulus chains:
/// p_{(i,r),(i',r')} = p_topo(i,i') · p_stim(r,r'). Joint state (i, r) maps
/// to index i·N_stim + r; the joint mode carries topology i's matrices and
/// stimulus value r.
pub fn product_system<T: Real>(
    topologies: &[(DMatrix<T>, DMatrix<T>)],
    topo_chain: &TransitionMatrix<T>,
    topo_init: &Distribution<T>,
    stimuli: &[DVector<T>],
    stim_chain: &TransitionMatrix<T>,
    stim_init: &Distribution<T>,
    a: LearningMatrix<T>,
) -> Result<ModeSystem<T>> {
    let nt = topologies.len();
    let ns = stimuli.len();
    if topo_chain.n_states() != nt || stim_chain.n_states() != ns {
        return Err(Error::DimensionMismatch {
            expected: nt,
            got: topo_chain.n_states(),
        });
    }
    let mut modes = Vec::with_capacity(nt * ns);
    for (b, w) in topologies {
        for r in stimuli {
            modes.push(Mode::new(b.clone(), w.clone(), r.clone())?);
        }
    }
    let joint = DMatrix::from_fn(nt * ns, nt * ns, |row, col| {
        let (i, r) = (row / ns, row % ns);
        let (ip, rp) = (col / ns, col % ns);
        topo_chain.prob(i, ip) * stim_chain.prob(r, rp)
    });
    let chain = TransitionMatrix::validate(joint)?;
    let init_w: Vec<T> = (0..nt * ns)
        .map(|k| topo_init.weight(k / ns) * stim_init.weight(k % ns))
        .collect();
    let init = Distribution::from_weights(&init_w)?;
    ModeSystem::new(a, modes, chain, init)
}
