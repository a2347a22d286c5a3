//! Stability certification of the switched system, Lyapunov exponent
//! estimation, spectral checks, the first-moment stationary-mean oracle,
//! single-trajectory ergodic averaging, and distributional diagnostics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::Distribution;
use crate::dynamics::InitialLaw;
use crate::error::{Error, Result};
use crate::model::AffineSystem;
use crate::num::{real, Real};
use crate::rng::stream_rng;

/// Induced operator norm used by the stability functional. The sign of the
/// expected log-norm at fixed k can differ across norms; the Lyapunov limit
/// does not depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    One,
    #[default]
    Two,
    Inf,
}

impl Norm {
    pub fn of<T: Real>(&self, m: &DMatrix<T>) -> T {
        match self {
            // Max absolute column sum.
            Norm::One => (0..m.ncols())
                .map(|j| (0..m.nrows()).fold(T::zero(), |s, i| s + m[(i, j)].abs()))
                .fold(T::zero(), |a, b| a.max(b)),
            // Largest singular value.
            Norm::Two => m
                .clone_owned()
                .svd(false, false)
                .singular_values
                .iter()
                .fold(T::zero(), |a, &b| a.max(b)),
            // Max absolute row sum.
            Norm::Inf => (0..m.nrows())
                .map(|i| (0..m.ncols()).fold(T::zero(), |s, j| s + m[(i, j)].abs()))
                .fold(T::zero(), |a, b| a.max(b)),
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Norm::One => write!(f, "one"),
            Norm::Two => write!(f, "two"),
            Norm::Inf => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "one" | "1" => Ok(Norm::One),
            "two" | "2" => Ok(Norm::Two),
            "inf" => Ok(Norm::Inf),
            other => Err(format!("unknown norm {other:?} (expected one|two|inf)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMethod {
    Exact,
    MonteCarlo,
}

impl std::fmt::Display for StabilityMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StabilityMethod::Exact => write!(f, "exact"),
            StabilityMethod::MonteCarlo => write!(f, "monte_carlo"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    CertifiedStable,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::CertifiedStable => write!(f, "certified_stable"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// Expected log-norm of the k-step matrix product under the stationary
/// path measure, with the certification verdict.
///
/// Exact reports have `std_error = 0` and certify on value < 0;
/// Monte-Carlo certification requires value + 3·std_error < 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub k: usize,
    /// Expected log-norm, nats.
    pub value: f64,
    pub method: StabilityMethod,
    pub std_error: f64,
    pub n_samples: usize,
    pub norm: Norm,
    pub verdict: Verdict,
}

/// Running time-average of a single trajectory against the closed-form
/// stationary mean, plus the Lyapunov estimate from the same path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub n_steps: usize,
    pub running_average: Vec<f64>,
    pub oracle_mean: Vec<f64>,
    /// ‖running_average − oracle_mean‖∞.
    pub deviation: f64,
    /// Estimate of lim (1/n) log‖F_{i_n}⋯F_{i_1}‖, nats per step.
    pub lyapunov_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchurCheck {
    pub rho: f64,
    pub schur: bool,
}

/// Default cap on the number of enumerated mode sequences.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Renormalization stride for running matrix products: rescale to unit norm
/// every 32 multiplications and accumulate the log factor, which prevents
/// underflow for per-step log-norms down to about −700/32 nats in double
/// precision.
const RENORM_STRIDE: usize = 32;

fn certified(value: f64, std_error: f64) -> Verdict {
    if value + 3.0 * std_error < 0.0 {
        Verdict::CertifiedStable
    } else {
        Verdict::Inconclusive
    }
}

/// Exact expected log-norm of the k-step product: the weighted sum over all
/// length-k mode sequences with weights m_{i₁}·p_{i₁i₂}⋯p_{i_{k−1}i_k}.
pub fn log_norm_expectation_exact<T: Real>(
    sys: &AffineSystem<T>,
    k: usize,
    norm: Norm,
    cap: u128,
) -> Result<StabilityReport> {
    if k == 0 {
        return Err(Error::InvalidDistribution { reason: "k must be ≥ 1".into() });
    }
    let n_modes = sys.n_modes() as u128;
    let count = n_modes.checked_pow(k as u32).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    let m = sys.chain().stationary()?;

    // DFS over sequences, extending the product on the left:
    // F_{i_{t+1}}·(F_{i_t}⋯F_{i₁}).
    struct Walk<'a, T: Real> {
        sys: &'a AffineSystem<T>,
        norm: Norm,
        acc: T,
    }
    impl<T: Real> Walk<'_, T> {
        fn go(&mut self, last: usize, weight: T, product: &DMatrix<T>, depth_left: usize) {
            if depth_left == 0 {
                self.acc += weight * self.norm.of(product).ln();
                return;
            }
            for j in 0..self.sys.n_modes() {
                let w = weight * self.sys.chain().prob(last, j);
                if w == T::zero() {
                    continue;
                }
                let p = &self.sys.maps()[j].f * product;
                self.go(j, w, &p, depth_left - 1);
            }
        }
    }

    let mut walk = Walk { sys, norm, acc: T::zero() };
    for i1 in 0..sys.n_modes() {
        let w = m.weight(i1);
        if w == T::zero() {
            continue;
        }
        let product = sys.maps()[i1].f.clone();
        walk.go(i1, w, &product, k - 1);
    }
    let value = walk.acc.to_f64().unwrap();
    Ok(StabilityReport {
        k,
        value,
        method: StabilityMethod::Exact,
        std_error: 0.0,
        n_samples: 0,
        norm,
        verdict: certified(value, 0.0),
    })
}

/// Monte-Carlo estimate of the same functional: sample mean of the log-norm
/// over paths with i₁ ~ m. Sample j draws from RNG stream (seed, j), so the
/// report is seed-deterministic and scheduling-independent.
pub fn log_norm_expectation_mc<T: Real>(
    sys: &AffineSystem<T>,
    k: usize,
    n_samples: usize,
    seed: u64,
    norm: Norm,
) -> Result<StabilityReport>
where
    T: Send + Sync,
{
    if k == 0 {
        return Err(Error::InvalidDistribution { reason: "k must be ≥ 1".into() });
    }
    if n_samples < 2 {
        return Err(Error::InvalidDistribution {
            reason: "monte carlo needs at least 2 samples".into(),
        });
    }
    let m = sys.chain().stationary()?;

    let values: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(seed, j as u64);
            let path = sys
                .chain()
                .sample_path_rng(&m, k - 1, &mut rng)
                .expect("dimensions validated");
            let mut product = sys.maps()[path.indices[0]].f.clone();
            for &idx in &path.indices[1..] {
                product = &sys.maps()[idx].f * product;
            }
            norm.of(&product).ln().to_f64().unwrap()
        })
        .collect();

    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    Ok(StabilityReport {
        k,
        value: mean,
        method: StabilityMethod::MonteCarlo,
        std_error,
        n_samples,
        norm,
        verdict: certified(mean, std_error),
    })
}

/// Smallest k ≤ k_max whose expected log-norm certifies stability, if any.
/// Uses exact enumeration under `cap`, Monte Carlo with the 3σ criterion
/// above it. Absence of a certificate means inconclusive, never unstable.
pub fn first_negative_k<T: Real>(
    sys: &AffineSystem<T>,
    k_max: usize,
    norm: Norm,
    cap: u128,
    n_samples: usize,
    seed: u64,
) -> Result<Option<StabilityReport>>
where
    T: Send + Sync,
{
    for k in 1..=k_max {
        let count = (sys.n_modes() as u128)
            .checked_pow(k as u32)
            .unwrap_or(u128::MAX);
        let report = if count <= cap {
            log_norm_expectation_exact(sys, k, norm, cap)?
        } else {
            log_norm_expectation_mc(sys, k, n_samples, seed.wrapping_add(k as u64), norm)?
        };
        if report.verdict == Verdict::CertifiedStable {
            return Ok(Some(report));
        }
    }
    Ok(None)
}

/// Spectral radius and Schur stability (ρ < 1 − 1e-12) of a square matrix.
pub fn schur_check<T: Real>(f: &DMatrix<T>) -> SchurCheck {
    let rho = f
        .clone_owned()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re.to_f64().unwrap().hypot(z.im.to_f64().unwrap()))
        .fold(0.0_f64, f64::max);
    SchurCheck { rho, schur: rho < 1.0 - 1e-12 }
}

/// Estimates lim (1/n) log‖F_{i_n}⋯F_{i_1}‖ along one path sampled with the
/// chain started at stationary. Returns the limit value itself, negative in
/// the contracting regime; α is its negation.
pub fn lyapunov_exponent<T: Real>(
    sys: &AffineSystem<T>,
    n_steps: usize,
    seed: u64,
    norm: Norm,
) -> Result<f64> {
    if n_steps == 0 {
        return Err(Error::InvalidDistribution { reason: "n_steps must be ≥ 1".into() });
    }
    let m = sys.chain().stationary()?;
    let path = sys.chain().sample_path(&m, n_steps - 1, seed)?;

    let n = sys.n_agents();
    let mut product = DMatrix::<T>::identity(n, n);
    let mut log_acc = 0.0_f64;
    for (step, &idx) in path.indices.iter().enumerate() {
        product = &sys.maps()[idx].f * product;
        if (step + 1) % RENORM_STRIDE == 0 {
            let scale = norm.of(&product);
            if scale == T::zero() {
                return Err(Error::ProductUnderflowUnrecoverable);
            }
            log_acc += scale.ln().to_f64().unwrap();
            product /= scale;
        }
    }
    let tail = norm.of(&product);
    if tail == T::zero() {
        return Err(Error::ProductUnderflowUnrecoverable);
    }
    log_acc += tail.ln().to_f64().unwrap();
    Ok(log_acc / n_steps as f64)
}

/// Closed-form stationary mean via the first-moment closure: solves
/// y_j = Σ_i p_ij (F_i y_i + m_i c_i) for the mode-partitioned means y_j
/// as one nN×nN linear system and returns Σ_j y_j.
///
/// A singular (or numerically near-singular) system signals marginal
/// stability: the stationary mean is not determined by this closure and may
/// not exist. No regularization is applied.
pub fn stationary_mean<T: Real>(sys: &AffineSystem<T>) -> Result<DVector<T>> {
    let n = sys.n_agents();
    let nm = sys.n_modes();
    let m = sys.chain().stationary()?;
    let dim = n * nm;

    // (I − M) y = b with block M[j][i] = p_ij F_i, b_j = Σ_i p_ij m_i c_i.
    let mut a = DMatrix::<T>::identity(dim, dim);
    let mut b = DVector::<T>::zeros(dim);
    for j in 0..nm {
        for i in 0..nm {
            let p_ij = sys.chain().prob(i, j);
            if p_ij == T::zero() {
                continue;
            }
            let f_i = &sys.maps()[i].f;
            for r in 0..n {
                for c in 0..n {
                    a[(j * n + r, i * n + c)] -= p_ij * f_i[(r, c)];
                }
            }
            let scale = p_ij * m.weight(i);
            for r in 0..n {
                b[j * n + r] += sys.maps()[i].c[r] * scale;
            }
        }
    }
    let y = a.clone().lu().solve(&b).ok_or(Error::SingularMomentSystem)?;
    // LU "solves" nearly singular systems with garbage; check the residual.
    let residual = (&a * &y - &b).abs().max();
    let scale = T::one() + y.abs().max();
    if residual > real::<T>(1e-8) * scale {
        return Err(Error::SingularMomentSystem);
    }
    let mut total = DVector::<T>::zeros(n);
    for j in 0..nm {
        for r in 0..n {
            total[r] += y[j * n + r];
        }
    }
    Ok(total)
}

/// Single-trajectory ergodic average against the stationary-mean oracle.
///
/// The mode chain is started at its stationary distribution, as the ergodic
/// hypothesis requires; the state starts from `init` (arbitrary). The
/// average runs from index 0 inclusive. The Lyapunov estimate comes from
/// the same path.
pub fn ergodic_average<T: Real>(
    sys: &AffineSystem<T>,
    init: &InitialLaw<T>,
    n_steps: usize,
    seed: u64,
    norm: Norm,
) -> Result<ErgodicReport> {
    let n = sys.n_agents();
    if init.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: init.dim() });
    }
    let m = sys.chain().stationary()?;
    let oracle = stationary_mean(sys)?;

    let mut rng = stream_rng(seed, 0);
    let mut x = init.draw(0, &mut rng);
    let mut sum = x.clone();
    // Modes sampled on the fly so the 10⁶-step default never stores a path.
    let mut sampler = ModeSampler::new(sys, &m, &mut rng);

    let mut product = DMatrix::<T>::identity(n, n);
    let mut log_acc = 0.0_f64;
    for step in 1..=n_steps {
        let mode = sampler.next_mode(&mut rng);
        let map = &sys.maps()[mode];
        x = &map.f * &x + &map.c;
        sum += &x;

        product = &map.f * product;
        if step % RENORM_STRIDE == 0 {
            let scale = norm.of(&product);
            if scale == T::zero() {
                return Err(Error::ProductUnderflowUnrecoverable);
            }
            log_acc += scale.ln().to_f64().unwrap();
            product /= scale;
        }
    }
    let tail = norm.of(&product);
    if tail == T::zero() {
        return Err(Error::ProductUnderflowUnrecoverable);
    }
    log_acc += tail.ln().to_f64().unwrap();

    let avg = sum / real::<T>((n_steps + 1) as f64);
    let deviation = (&avg - &oracle).abs().max().to_f64().unwrap();
    Ok(ErgodicReport {
        n_steps,
        running_average: avg.iter().map(|v| v.to_f64().unwrap()).collect(),
        oracle_mean: oracle.iter().map(|v| v.to_f64().unwrap()).collect(),
        deviation,
        lyapunov_estimate: log_acc / n_steps as f64,
    })
}

/// Streaming mode sampler: current mode drawn from the system's initial
/// distribution, successors from the chain rows.
struct ModeSampler<T: Real> {
    rows: Vec<Vec<f64>>,
    current: usize,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Real> ModeSampler<T> {
    fn new<R: rand::Rng>(sys: &AffineSystem<T>, start: &Distribution<T>, rng: &mut R) -> Self {
        let nm = sys.n_modes();
        let rows: Vec<Vec<f64>> = (0..nm)
            .map(|i| (0..nm).map(|j| sys.chain().prob(i, j).to_f64().unwrap()).collect())
            .collect();
        let init: Vec<f64> = (0..nm)
            .map(|i| start.weight(i).to_f64().unwrap())
            .collect();
        let current = draw_index(&init, rng);
        Self { rows, current, _marker: std::marker::PhantomData }
    }

    fn next_mode<R: rand::Rng>(&mut self, rng: &mut R) -> usize {
        self.current = draw_index(&self.rows[self.current], rng);
        self.current
    }
}

fn draw_index<R: rand::Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Max over coordinates of the two-sample Kolmogorov-Smirnov statistic.
pub fn empirical_distribution_distance<T: Real>(
    samples_a: &[DVector<T>],
    samples_b: &[DVector<T>],
) -> Result<f64> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::EmptySample);
    }
    let dim = samples_a[0].len();
    if samples_b[0].len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: samples_b[0].len() });
    }
    let mut worst = 0.0_f64;
    for coord in 0..dim {
        let mut xs: Vec<f64> =
            samples_a.iter().map(|v| v[coord].to_f64().unwrap()).collect();
        let mut ys: Vec<f64> =
            samples_b.iter().map(|v| v[coord].to_f64().unwrap()).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        worst = worst.max(ks_statistic(&xs, &ys));
    }
    Ok(worst)
}

/// KS statistic of two sorted samples: sup |ECDF_a − ECDF_b|.
fn ks_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0_f64;
    while i < xs.len() && j < ys.len() {
        // Consume every sample tied at the current value from both sides;
        // the ECDFs only separate strictly between distinct values.
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] == t {
            i += 1;
        }
        while j < ys.len() && ys[j] == t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at significance `alpha`:
/// c(α)·√((n+m)/(nm)) with c(α) = √(−ln(α/2)/2).
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n * m) as f64).sqrt()
}

/// One row of the convergence-in-distribution table: KS distance between
/// the empirical laws of two initial mode distributions at each snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairDistances {
    pub dist_a: usize,
    pub dist_b: usize,
    pub by_snapshot: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prop1Report {
    pub snapshots: Vec<usize>,
    pub pairs: Vec<PairDistances>,
    /// Hypothesis violations (zero stationary mass, some p_ij = 1) are
    /// reported, not rejected.
    pub warnings: Vec<String>,
}

/// Compares the empirical state laws induced by several initial mode
/// distributions at the given snapshot times; distances between any two
/// should decay toward the KS noise floor as k grows.
///
/// Batches for initial distribution d use RNG streams d·n_traj .. so that
/// identically distributed batches are still independent draws.
pub fn proposition1_experiment<T: Real>(
    sys: &AffineSystem<T>,
    init: &InitialLaw<T>,
    init_dists: &[Distribution<T>],
    k_snapshots: &[usize],
    n_traj: usize,
    seed: u64,
) -> Result<Prop1Report>
where
    T: Send + Sync,
{
    let m = sys.chain().stationary()?;
    let mut warnings = Vec::new();
    for i in 0..m.len() {
        if m.weight(i) <= T::zero() {
            warnings.push(format!("stationary mass m_{i} is zero"));
        }
    }
    for i in 0..sys.n_modes() {
        for j in 0..sys.n_modes() {
            if sys.chain().prob(i, j) >= T::one() {
                warnings.push(format!(
                    "p_{i}{j} = 1 violates the convergence hypothesis"
                ));
            }
        }
    }

    let max_k = k_snapshots.iter().copied().max().unwrap_or(0);

    // samples[d][s][t]: state of trajectory t of init-dist d at snapshot s.
    let mut samples: Vec<Vec<Vec<DVector<T>>>> = Vec::with_capacity(init_dists.len());
    for (d, dist) in init_dists.iter().enumerate() {
        if dist.len() != sys.n_modes() {
            return Err(Error::DimensionMismatch {
                expected: sys.n_modes(),
                got: dist.len(),
            });
        }
        let per_traj: Vec<Vec<DVector<T>>> = (0..n_traj)
            .into_par_iter()
            .map(|t| {
                let stream = (d * n_traj + t) as u64;
                let mut rng = stream_rng(seed, stream);
                let mut x = init.draw(t, &mut rng);
                let path = sys
                    .chain()
                    .sample_path_rng(dist, max_k, &mut rng)
                    .expect("dimensions validated");
                let mut snaps = Vec::with_capacity(k_snapshots.len());
                for (k, &idx) in path.indices.iter().enumerate() {
                    if k > 0 {
                        let map = &sys.maps()[idx];
                        x = &map.f * &x + &map.c;
                    }
                    if k_snapshots.contains(&k) {
                        snaps.push(x.clone());
                    }
                }
                snaps
            })
            .collect();
        let mut per_snapshot = vec![Vec::with_capacity(n_traj); k_snapshots.len()];
        for traj in per_traj {
            for (s, state) in traj.into_iter().enumerate() {
                per_snapshot[s].push(state);
            }
        }
        samples.push(per_snapshot);
    }

    let mut pairs = Vec::new();
    for a in 0..init_dists.len() {
        for b in (a + 1)..init_dists.len() {
            let by_snapshot = (0..k_snapshots.len())
                .map(|s| empirical_distribution_distance(&samples[a][s], &samples[b][s]))
                .collect::<Result<Vec<_>>>()?;
            pairs.push(PairDistances { dist_a: a, dist_b: b, by_snapshot });
        }
    }
    Ok(Prop1Report { snapshots: k_snapshots.to_vec(), pairs, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::TransitionMatrix;
    use crate::model::friedkin_johnsen;
    use approx::assert_abs_diff_eq;

    fn iid_uniform2() -> TransitionMatrix<f64> {
        TransitionMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    fn scalar_pair(f1: f64, f2: f64, c1: f64, c2: f64) -> AffineSystem<f64> {
        AffineSystem::scalar(
            &[(f1, c1), (f2, c2)],
            iid_uniform2(),
            Distribution::uniform(2),
        )
        .unwrap()
    }

    fn fj_affine() -> AffineSystem<f64> {
        friedkin_johnsen(
            DMatrix::from_element(2, 2, 0.5),
            &[0.5, 0.5],
            DVector::from_row_slice(&[0.0, 1.0]),
        )
        .unwrap()
        .to_affine()
        .unwrap()
    }

    #[test]
    fn exact_single_mode_k3() {
        let sys = AffineSystem::scalar(
            &[(0.5, 0.0)],
            TransitionMatrix::from_rows(&[vec![1.0]]).unwrap(),
            Distribution::uniform(1),
        )
        .unwrap();
        let r = log_norm_expectation_exact(&sys, 3, Norm::Two, DEFAULT_ENUMERATION_CAP)
            .unwrap();
        assert_abs_diff_eq!(r.value, 3.0 * 0.5_f64.ln(), epsilon = 1e-12);
        assert_eq!(r.verdict, Verdict::CertifiedStable);
        assert_eq!(r.std_error, 0.0);
    }

    #[test]
    fn exact_two_mode_k1() {
        let sys = scalar_pair(2.0, 0.25, 0.0, 0.0);
        let r = log_norm_expectation_exact(&sys, 1, Norm::Two, DEFAULT_ENUMERATION_CAP)
            .unwrap();
        assert_abs_diff_eq!(r.value, -0.5 * 2.0_f64.ln(), epsilon = 1e-12);
        assert_eq!(r.verdict, Verdict::CertifiedStable);
    }

    #[test]
    fn exact_norm_one_is_inconclusive() {
        // Rotation-free orthogonal case: |F| = 1 for both modes, value 0.
        let sys = scalar_pair(1.0, 1.0, 0.0, 0.0);
        let r = log_norm_expectation_exact(&sys, 2, Norm::Two, DEFAULT_ENUMERATION_CAP)
            .unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-12);
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn exact_respects_cap() {
        let sys = scalar_pair(0.5, 0.5, 0.0, 0.0);
        assert!(matches!(
            log_norm_expectation_exact(&sys, 30, Norm::Two, 100).unwrap_err(),
            Error::EnumerationTooLarge { .. }
        ));
    }

    #[test]
    fn mc_single_mode_zero_variance() {
        let sys = AffineSystem::scalar(
            &[(0.5, 0.0)],
            TransitionMatrix::from_rows(&[vec![1.0]]).unwrap(),
            Distribution::uniform(1),
        )
        .unwrap();
        let r = log_norm_expectation_mc(&sys, 2, 100, 1, Norm::Two).unwrap();
        assert_abs_diff_eq!(r.value, 2.0 * 0.5_f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.std_error, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mc_within_three_sigma_of_exact() {
        let sys = scalar_pair(2.0, 0.25, 0.0, 0.0);
        let r = log_norm_expectation_mc(&sys, 1, 100_000, 5, Norm::Two).unwrap();
        let exact = -0.5 * 2.0_f64.ln();
        assert!((r.value - exact).abs() <= 3.0 * r.std_error);
    }

    #[test]
    fn mc_seed_repeatable() {
        let sys = scalar_pair(2.0, 0.25, 0.0, 0.0);
        let a = log_norm_expectation_mc(&sys, 3, 1000, 9, Norm::Two).unwrap();
        let b = log_norm_expectation_mc(&sys, 3, 1000, 9, Norm::Two).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn first_negative_k_single_contraction() {
        let sys = AffineSystem::scalar(
            &[(0.5, 0.0)],
            TransitionMatrix::from_rows(&[vec![1.0]]).unwrap(),
            Distribution::uniform(1),
        )
        .unwrap();
        let r = first_negative_k(&sys, 5, Norm::Two, DEFAULT_ENUMERATION_CAP, 1000, 1)
            .unwrap()
            .unwrap();
        assert_eq!(r.k, 1);
    }

    #[test]
    fn first_negative_k_absent_at_norm_one() {
        let sys = scalar_pair(1.0, 1.0, 0.0, 0.0);
        let r = first_negative_k(&sys, 6, Norm::Two, DEFAULT_ENUMERATION_CAP, 1000, 1)
            .unwrap();
        assert!(r.is_none());
    }

    #[test]
    fn first_negative_k_mixed_modes() {
        let sys = scalar_pair(2.0, 0.25, 0.0, 0.0);
        let r = first_negative_k(&sys, 5, Norm::Two, DEFAULT_ENUMERATION_CAP, 1000, 1)
            .unwrap()
            .unwrap();
        assert_eq!(r.k, 1);
    }

    #[test]
    fn schur_scalar_and_rotation() {
        let half = DMatrix::from_row_slice(1, 1, &[0.5]);
        let c = schur_check(&half);
        assert_abs_diff_eq!(c.rho, 0.5, epsilon = 1e-12);
        assert!(c.schur);

        let theta = 0.7_f64;
        let rot = DMatrix::from_row_slice(
            2,
            2,
            &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
        );
        let c = schur_check(&rot);
        assert_abs_diff_eq!(c.rho, 1.0, epsilon = 1e-12);
        assert!(!c.schur);
    }

    #[test]
    fn schur_symmetric_example() {
        let f = DMatrix::from_row_slice(2, 2, &[0.75, -0.25, -0.25, 0.75]);
        let c = schur_check(&f);
        assert_abs_diff_eq!(c.rho, 1.0, epsilon = 1e-12);
        assert!(!c.schur);
    }

    #[test]
    fn lyapunov_single_mode_exact() {
        let sys = AffineSystem::scalar(
            &[(0.3, 0.0)],
            TransitionMatrix::from_rows(&[vec![1.0]]).unwrap(),
            Distribution::uniform(1),
        )
        .unwrap();
        let l = lyapunov_exponent(&sys, 1000, 1, Norm::Two).unwrap();
        assert_abs_diff_eq!(l, 0.3_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_commuting_diagonal() {
        let sys = scalar_pair(0.5, 0.25, 0.0, 0.0);
        let l = lyapunov_exponent(&sys, 100_000, 2, Norm::Two).unwrap();
        let expected = 0.5 * 0.5_f64.ln() + 0.5 * 0.25_f64.ln();
        assert!((l - expected).abs() < 0.05, "l = {l}, expected {expected}");
    }

    #[test]
    fn lyapunov_two_seeds_agree() {
        let sys = scalar_pair(0.5, 0.25, 0.0, 0.0);
        let a = lyapunov_exponent(&sys, 100_000, 3, Norm::Two).unwrap();
        let b = lyapunov_exponent(&sys, 100_000, 4, Norm::Two).unwrap();
        assert!((a - b).abs() < 0.05);
    }

    #[test]
    fn lyapunov_survives_deep_contraction() {
        // 0.5^1e4 underflows f64 without renormalization.
        let sys = AffineSystem::scalar(
            &[(0.5, 0.0)],
            TransitionMatrix::from_rows(&[vec![1.0]]).unwrap(),
            Distribution::uniform(1),
        )
        .unwrap();
        let l = lyapunov_exponent(&sys, 10_000, 1, Norm::Two).unwrap();
        assert_abs_diff_eq!(l, 0.5_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn stationary_mean_single_mode_fj() {
        let sys = fj_affine();
        // Deterministic single mode: mean is the fixed point
        // (I−ΛW)⁻¹(I−Λ)u = [0.25, 0.75].
        let mean = stationary_mean(&sys).unwrap();
        assert_abs_diff_eq!(mean[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(mean[1], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn stationary_mean_classical_bernoulli() {
        // x⁺ = (1−α)x + αr with r i.i.d. over {0, 1}: E[x] = E[r] = 0.5.
        let sys = crate::model::classical_rw(1, 0.3, &[0.0, 1.0])
            .unwrap()
            .to_affine()
            .unwrap();
        let mean = stationary_mean(&sys).unwrap();
        assert_abs_diff_eq!(mean[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn stationary_mean_zero_drive() {
        let sys = scalar_pair(0.5, 0.25, 0.0, 0.0);
        let mean = stationary_mean(&sys).unwrap();
        assert_abs_diff_eq!(mean[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn stationary_mean_signals_marginal() {
        // F = 1 (random walk without drive): I − F singular.
        let sys = AffineSystem::scalar(
            &[(1.0, 0.5)],
            TransitionMatrix::from_rows(&[vec![1.0]]).unwrap(),
            Distribution::uniform(1),
        )
        .unwrap();
        assert!(matches!(
            stationary_mean(&sys).unwrap_err(),
            Error::SingularMomentSystem
        ));
    }

    #[test]
    fn ergodic_average_fj() {
        let sys = fj_affine();
        let init = InitialLaw::point(&[0.0, 1.0]);
        let r = ergodic_average(&sys, &init, 100_000, 1, Norm::Two).unwrap();
        assert!(r.deviation < 1e-3, "deviation = {}", r.deviation);
        // Single mode: Lyapunov is log ρ(ΛW) = log 0.5.
        assert!((r.lyapunov_estimate - 0.5_f64.ln()).abs() < 0.02);
    }

    #[test]
    fn ergodic_average_classical_bernoulli() {
        let sys = crate::model::classical_rw(1, 0.5, &[0.0, 1.0])
            .unwrap()
            .to_affine()
            .unwrap();
        let init = InitialLaw::point(&[0.0]);
        let r = ergodic_average(&sys, &init, 1_000_000, 2, Norm::Two).unwrap();
        assert!(r.deviation < 5e-3, "deviation = {}", r.deviation);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let zeros = vec![DVector::from_row_slice(&[0.0]); 100];
        let ones = vec![DVector::from_row_slice(&[1.0]); 100];
        assert_abs_diff_eq!(
            empirical_distribution_distance(&zeros, &zeros).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            empirical_distribution_distance(&zeros, &ones).unwrap(),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn ks_empty_errors() {
        let zeros = vec![DVector::from_row_slice(&[0.0]); 10];
        assert!(matches!(
            empirical_distribution_distance(&zeros, &[]).unwrap_err(),
            Error::EmptySample
        ));
    }

    #[test]
    fn ks_same_law_below_critical() {
        // Two independent batches from the same stable system.
        let sys = scalar_pair(0.5, 0.25, 0.5, -0.25);
        let init = InitialLaw::point(&[0.0]);
        let a = crate::dynamics::batch_final_states(&sys, &init, 300, 10_000, 1).unwrap();
        let b = crate::dynamics::batch_final_states(&sys, &init, 300, 10_000, 2).unwrap();
        let d = empirical_distribution_distance(&a, &b).unwrap();
        let crit = ks_critical_value(0.01, 10_000, 10_000);
        assert!(d < crit, "d = {d}, critical = {crit}");
    }

    #[test]
    fn ks_critical_value_matches_desk_formula() {
        // 1.63·√(2/10⁴) ≈ 0.023
        let c = ks_critical_value(0.01, 10_000, 10_000);
        assert!((c - 1.63 * (2.0_f64 / 10_000.0).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn prop1_stationary_vs_point_mass() {
        // A sticky chain: the initial mode distribution must survive a few
        // steps for the early-snapshot laws to differ.
        let chain =
            TransitionMatrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let sys = AffineSystem::scalar(
            &[(0.5, 0.5), (0.25, -0.25)],
            chain,
            Distribution::uniform(2),
        )
        .unwrap();
        let m = sys.chain().stationary().unwrap();
        let dists = vec![m, Distribution::point_mass(2, 0).unwrap()];
        let r = proposition1_experiment(
            &sys,
            &InitialLaw::point(&[0.0]),
            &dists,
            &[1, 10, 100],
            2000,
            7,
        )
        .unwrap();
        assert_eq!(r.pairs.len(), 1);
        let d = &r.pairs[0].by_snapshot;
        // At k=1 the point-mass chain has applied only mode 0, so the laws
        // differ grossly; by k=100 they agree inside the noise band.
        assert!(d[2] < d[0]);
        assert!(d[2] < ks_critical_value(0.01, 2000, 2000) * 1.5);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn prop1_single_mode_all_noise() {
        let sys = AffineSystem::scalar(
            &[(0.5, 0.5)],
            TransitionMatrix::from_rows(&[vec![1.0]]).unwrap(),
            Distribution::uniform(1),
        )
        .unwrap();
        let dists = vec![Distribution::uniform(1), Distribution::uniform(1)];
        let r = proposition1_experiment(
            &sys,
            &InitialLaw::UniformCube { n: 1, low: 0.0, high: 1.0 },
            &dists,
            &[0, 50],
            2000,
            3,
        )
        .unwrap();
        // p_00 = 1 warning expected for the degenerate one-mode chain.
        assert!(!r.warnings.is_empty());
        for pair in &r.pairs {
            for &d in &pair.by_snapshot {
                assert!(d < ks_critical_value(0.01, 2000, 2000) * 1.5);
            }
        }
    }
}
