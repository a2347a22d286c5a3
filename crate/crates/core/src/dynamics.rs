//! Forward and backward realizations of the switched affine recursion,
//! the matrix-product closed form, and batch generation.
//!
//! Path convention, matching [`Trajectory`]'s invariant: `mode_path[0]` is
//! the time-0 mode and drives no transition; `mode_path[k]` for k ≥ 1 is
//! the mode producing state k from state k − 1.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use crate::chain::ModePath;
use crate::error::{Error, Result};
use crate::model::{AffineMap, AffineSystem};
use crate::num::{real, Real};
use crate::rng::stream_rng;

/// Default cap on stored state scalars per trajectory; past it only the
/// running mean is tracked.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// A realized state path. `states[0]` is the initial state; for forward
/// runs `states[k]` is exactly the mode-`mode_path[k]` affine update of
/// `states[k − 1]`; for backward runs `states[k]` is the composition with
/// the newest map applied innermost.
///
/// `running_mean` averages every simulated state (index 0 through
/// `n_steps`), including any states dropped by the storage cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub states: Vec<DVector<T>>,
    pub mode_path: ModePath,
    pub seed: Option<u64>,
    pub direction: Direction,
    pub n_steps: usize,
    pub running_mean: DVector<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn final_state(&self) -> &DVector<T> {
        self.states.last().expect("trajectory has at least the initial state")
    }

    /// CSV export: header `k,mode,x_1,…,x_n`, floats with 17 significant
    /// digits so values round-trip.
    pub fn to_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        write!(out, "k,mode")?;
        for i in 1..=n {
            write!(out, ",x_{i}")?;
        }
        writeln!(out)?;
        for (k, state) in self.states.iter().enumerate() {
            write!(out, "{k},{}", self.mode_path.indices[k])?;
            for x in state.iter() {
                write!(out, ",{:.16e}", x.to_f64().unwrap())?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Initial law for the continuous state.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw<T: Real> {
    /// Deterministic start at x₀.
    PointMass(DVector<T>),
    /// Entrywise uniform on [low, high], drawn from the trajectory stream.
    UniformCube { n: usize, low: T, high: T },
    /// Empirical law: trajectory j starts at sample j mod len.
    Samples(Vec<DVector<T>>),
}

impl<T: Real> InitialLaw<T> {
    pub fn point(coords: &[T]) -> Self {
        InitialLaw::PointMass(DVector::from_row_slice(coords))
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::PointMass(x) => x.len(),
            InitialLaw::UniformCube { n, .. } => *n,
            InitialLaw::Samples(v) => v.first().map_or(0, |x| x.len()),
        }
    }

    pub(crate) fn draw<R: Rng>(&self, traj_index: usize, rng: &mut R) -> DVector<T> {
        match self {
            InitialLaw::PointMass(x) => x.clone(),
            InitialLaw::UniformCube { n, low, high } => DVector::from_fn(*n, |_, _| {
                let u: f64 = rng.random();
                *low + (*high - *low) * real::<T>(u)
            }),
            InitialLaw::Samples(v) => v[traj_index % v.len()].clone(),
        }
    }
}

/// One step of the recursion: B·x + A·(r − W·x), algebraically F·x + A·r.
pub fn forward_step<T: Real>(
    x: &DVector<T>,
    mode: &crate::model::Mode<T>,
    a: &crate::model::LearningMatrix<T>,
) -> Result<DVector<T>> {
    let n = mode.dim();
    if x.len() != n || a.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let drive = &mode.r - &mode.w * x;
    Ok(&mode.b * x + a.apply(&drive))
}

/// Simulates the forward walk: mode path sampled from the system chain
/// starting at its initial mode distribution, states iterated through the
/// affine maps. Reproducible from (seed, stream 0).
pub fn forward_trajectory<T: Real>(
    sys: &AffineSystem<T>,
    init: &InitialLaw<T>,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory<T>> {
    let mut t = forward_trajectory_stream(sys, init, horizon, seed, 0, DEFAULT_STATE_CAP)?;
    t.seed = Some(seed);
    Ok(t)
}

/// As [`forward_trajectory`] with an explicit RNG stream and storage cap
/// (in scalars); used by batch generation.
pub fn forward_trajectory_stream<T: Real>(
    sys: &AffineSystem<T>,
    init: &InitialLaw<T>,
    horizon: usize,
    seed: u64,
    stream: u64,
    state_cap: usize,
) -> Result<Trajectory<T>> {
    let n = sys.n_agents();
    if init.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: init.dim() });
    }
    let mut rng = stream_rng(seed, stream);
    let x0 = init.draw(stream as usize, &mut rng);
    let mode_path = sys.chain().sample_path_rng(sys.init_dist(), horizon, &mut rng)?;

    let max_states = (state_cap / n.max(1)).max(1);
    let mut states = Vec::with_capacity((horizon + 1).min(max_states));
    let mut sum = x0.clone();
    let mut x = x0;
    states.push(x.clone());
    for k in 1..=horizon {
        let m = &sys.maps()[mode_path.indices[k]];
        x = &m.f * &x + &m.c;
        sum += &x;
        if states.len() < max_states {
            states.push(x.clone());
        }
    }
    let count = real::<T>((horizon + 1) as f64);
    Ok(Trajectory {
        states,
        mode_path,
        seed: None,
        direction: Direction::Forward,
        n_steps: horizon,
        running_mean: sum / count,
    })
}

/// Evaluates the backward compositions along a given mode path:
/// `states[k] = w_{i₁} ∘ ⋯ ∘ w_{i_k}(x₀)`, the newest map applied first
/// (innermost). `mode_path[0]` is ignored per the path convention.
///
/// Each extension is O(1) matrix multiplications: with M_k = F_{i₁}⋯F_{i_k}
/// and offset c_k, the next state is M_{k+1} x₀ + c_k + M_k A r_{i_{k+1}}.
/// Products are never re-orthogonalized; norms may underflow to 0 in the
/// contracting regime, which is accepted.
pub fn backward_trajectory<T: Real>(
    sys: &AffineSystem<T>,
    x0: &DVector<T>,
    mode_path: &ModePath,
) -> Result<Trajectory<T>> {
    let n = sys.n_agents();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    if mode_path.is_empty() {
        return Err(Error::EmptyPath);
    }
    for &i in &mode_path.indices {
        if i >= sys.n_modes() {
            return Err(Error::IndexOutOfRange { index: i, n_modes: sys.n_modes() });
        }
    }
    let mut product = nalgebra::DMatrix::<T>::identity(n, n);
    let mut offset = DVector::<T>::zeros(n);
    let mut states = Vec::with_capacity(mode_path.len());
    let mut sum = DVector::<T>::zeros(n);
    states.push(x0.clone());
    sum += x0;
    for &idx in &mode_path.indices[1..] {
        let m: &AffineMap<T> = &sys.maps()[idx];
        offset += &product * &m.c;
        product *= &m.f;
        let state = &product * x0 + &offset;
        sum += &state;
        states.push(state);
    }
    let count = real::<T>(states.len() as f64);
    Ok(Trajectory {
        states,
        mode_path: mode_path.clone(),
        seed: mode_path.seed,
        direction: Direction::Backward,
        n_steps: mode_path.len() - 1,
        running_mean: sum / count,
    })
}

/// Convenience: samples the mode path from the time-reversed chain started
/// at stationary, then evaluates the backward compositions.
pub fn backward_trajectory_sampled<T: Real>(
    sys: &AffineSystem<T>,
    x0: &DVector<T>,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory<T>> {
    backward_trajectory_sampled_stream(sys, x0, horizon, seed, 0)
}

pub fn backward_trajectory_sampled_stream<T: Real>(
    sys: &AffineSystem<T>,
    x0: &DVector<T>,
    horizon: usize,
    seed: u64,
    stream: u64,
) -> Result<Trajectory<T>> {
    let m = sys.chain().stationary()?;
    let q = sys.chain().reverse(&m)?;
    let mut rng = stream_rng(seed, stream);
    let path = q.sample_path_rng(&m, horizon, &mut rng)?;
    backward_trajectory(sys, x0, &path)
}

/// Closed-form evaluation of the forward walk at the end of `mode_path`:
/// the full matrix product applied to x₀ plus the suffix-product sum of
/// stimulus contributions. An independent route that must agree with
/// iterative evaluation to 1e-12.
///
/// Here every index of `mode_path` is an applied map (no unused leading
/// mode): the result is w_{i_k} ∘ ⋯ ∘ w_{i₁}(x₀) for path (i₁, …, i_k).
pub fn unrolled_forward<T: Real>(
    sys: &AffineSystem<T>,
    x0: &DVector<T>,
    mode_path: &ModePath,
) -> Result<DVector<T>> {
    let n = sys.n_agents();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    if mode_path.is_empty() {
        return Err(Error::EmptyPath);
    }
    let k = mode_path.len();
    // Suffix products G_ℓ = F_{i_k}⋯F_{i_{ℓ+1}}, built right to left;
    // result = G_0 x₀ + Σ_ℓ G_ℓ A r_{i_ℓ}.
    let mut suffix = nalgebra::DMatrix::<T>::identity(n, n);
    let mut acc = DVector::<T>::zeros(n);
    for pos in (0..k).rev() {
        let idx = mode_path.indices[pos];
        let m = sys.map(idx)?;
        acc += &suffix * &m.c;
        suffix *= &m.f;
    }
    Ok(&suffix * x0 + acc)
}

/// Generates `n_traj` mutually independent trajectories; trajectory j uses
/// RNG stream (base_seed, j). Output order is deterministic and results do
/// not depend on scheduling.
pub fn batch_trajectories<T: Real>(
    sys: &AffineSystem<T>,
    init: &InitialLaw<T>,
    horizon: usize,
    n_traj: usize,
    base_seed: u64,
) -> Result<Vec<Trajectory<T>>>
where
    T: Send + Sync,
{
    (0..n_traj)
        .into_par_iter()
        .map(|j| {
            forward_trajectory_stream(sys, init, horizon, base_seed, j as u64, DEFAULT_STATE_CAP)
        })
        .collect()
}

/// Final states of `n_traj` independent trajectories, without storing the
/// paths. Used by distributional diagnostics.
pub fn batch_final_states<T: Real>(
    sys: &AffineSystem<T>,
    init: &InitialLaw<T>,
    horizon: usize,
    n_traj: usize,
    base_seed: u64,
) -> Result<Vec<DVector<T>>>
where
    T: Send + Sync,
{
    (0..n_traj)
        .into_par_iter()
        .map(|j| {
            let n = sys.n_agents();
            if init.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: init.dim() });
            }
            let mut rng = stream_rng(base_seed, j as u64);
            let mut x = init.draw(j, &mut rng);
            let path = sys.chain().sample_path_rng(sys.init_dist(), horizon, &mut rng)?;
            for &idx in &path.indices[1..] {
                let m = &sys.maps()[idx];
                x = &m.f * &x + &m.c;
            }
            Ok(x)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Distribution, TransitionMatrix};
    use crate::model::{classical_rw, friedkin_johnsen, LearningMatrix, Mode, ModeSystem};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn fj_system() -> AffineSystem<f64> {
        friedkin_johnsen(
            DMatrix::from_element(2, 2, 0.5),
            &[0.5, 0.5],
            DVector::from_row_slice(&[0.0, 1.0]),
        )
        .unwrap()
        .to_affine()
        .unwrap()
    }

    /// Two scalar modes (f, c) = (0.5, 0.5) and (0.25, −0.25): distinct
    /// fixed points 1 and −1/3, i.i.d. uniform selection.
    fn two_mode_scalar() -> AffineSystem<f64> {
        AffineSystem::scalar(
            &[(0.5, 0.5), (0.25, -0.25)],
            TransitionMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap(),
            Distribution::uniform(2),
        )
        .unwrap()
    }

    #[test]
    fn forward_step_first_acquisition() {
        let sys = classical_rw(1, 0.5, &[1.0]).unwrap();
        let x = DVector::from_row_slice(&[0.0]);
        let next = forward_step(&x, sys.mode(0).unwrap(), sys.learning()).unwrap();
        assert_abs_diff_eq!(next[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn forward_step_zero_alpha_is_topology_only() {
        let b = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4]);
        let mode = Mode::new(b.clone(), DMatrix::from_element(2, 2, 0.5), DVector::zeros(2))
            .unwrap();
        let a = LearningMatrix::zeros(2);
        let x = DVector::from_row_slice(&[1.0, 2.0]);
        let next = forward_step(&x, &mode, &a).unwrap();
        assert!((next - b * x).abs().max() < 1e-15);
    }

    #[test]
    fn forward_step_matches_fj_update() {
        let sys: ModeSystem<f64> = friedkin_johnsen(
            DMatrix::from_element(2, 2, 0.5),
            &[0.5, 0.5],
            DVector::from_row_slice(&[0.0, 1.0]),
        )
        .unwrap();
        // ΛWx + (I−Λ)u with x = 0: the prejudice term alone.
        let x = DVector::from_row_slice(&[0.0, 0.0]);
        let next = forward_step(&x, sys.mode(0).unwrap(), sys.learning()).unwrap();
        assert_abs_diff_eq!(next[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(next[1], 0.5, epsilon = 1e-15);
        // One more step: ΛW[0,0.5] + [0,0.5] = [0.125, 0.625].
        let next2 = forward_step(&next, sys.mode(0).unwrap(), sys.learning()).unwrap();
        assert_abs_diff_eq!(next2[0], 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(next2[1], 0.625, epsilon = 1e-15);
    }

    #[test]
    fn forward_step_agrees_with_affine_map() {
        let sys = classical_rw(3, 0.4, &[0.0, 1.0]).unwrap();
        let x = DVector::from_row_slice(&[0.1, -0.2, 0.7]);
        for i in 0..2 {
            let direct = forward_step(&x, sys.mode(i).unwrap(), sys.learning()).unwrap();
            let m = sys.affine_map(i).unwrap();
            let via_map = &m.f * &x + &m.c;
            assert!((direct - via_map).abs().max() < 1e-14);
        }
    }

    #[test]
    fn forward_trajectory_horizon_zero() {
        let sys = classical_rw(1, 0.5, &[1.0]).unwrap().to_affine().unwrap();
        let init = InitialLaw::point(&[0.25]);
        let t = forward_trajectory(&sys, &init, 0, 1).unwrap();
        assert_eq!(t.states.len(), 1);
        assert_abs_diff_eq!(t.states[0][0], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn forward_trajectory_fj_converges() {
        let sys = fj_system();
        let init = InitialLaw::point(&[0.0, 1.0]);
        let t = forward_trajectory(&sys, &init, 100, 1).unwrap();
        let last = t.final_state();
        // Fixed point (I−ΛW)⁻¹(I−Λ)u for W all-half, Λ = 0.5I, u = [0,1].
        assert_abs_diff_eq!(last[0], 0.25, epsilon = 1e-8);
        assert_abs_diff_eq!(last[1], 0.75, epsilon = 1e-8);
    }

    #[test]
    fn forward_trajectory_classical_closed_form() {
        let sys = classical_rw(1, 0.5, &[1.0]).unwrap().to_affine().unwrap();
        let init = InitialLaw::point(&[0.0]);
        let t = forward_trajectory(&sys, &init, 4, 1).unwrap();
        for (k, &expected) in [0.0, 0.5, 0.75, 0.875, 0.9375].iter().enumerate() {
            assert_abs_diff_eq!(t.states[k][0], expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn forward_trajectory_deterministic() {
        let sys = classical_rw(2, 0.3, &[0.0, 1.0]).unwrap().to_affine().unwrap();
        let init = InitialLaw::UniformCube { n: 2, low: -1.0, high: 1.0 };
        let a = forward_trajectory(&sys, &init, 50, 7).unwrap();
        let b = forward_trajectory(&sys, &init, 50, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn backward_single_mode_equals_forward() {
        let sys = fj_system();
        let x0 = DVector::from_row_slice(&[0.9, 0.1]);
        let path = ModePath::new(vec![0; 21]);
        let fwd = {
            let mut x = x0.clone();
            let mut states = vec![x.clone()];
            for _ in 0..20 {
                x = &sys.maps()[0].f * &x + &sys.maps()[0].c;
                states.push(x.clone());
            }
            states
        };
        let bwd = backward_trajectory(&sys, &x0, &path).unwrap();
        for k in 0..=20 {
            assert!((&bwd.states[k] - &fwd[k]).abs().max() < 1e-12);
        }
    }

    #[test]
    fn backward_contraction_converges_to_fixed_point() {
        // w(x) = 0.5x + 0.5, fixed point 1.
        let sys = classical_rw(1, 0.5, &[1.0]).unwrap().to_affine().unwrap();
        let x0 = DVector::from_row_slice(&[0.0]);
        let t = backward_trajectory(&sys, &x0, &ModePath::new(vec![0; 41])).unwrap();
        let mut prev = t.states[0][0];
        for s in &t.states[1..] {
            assert!(s[0] >= prev);
            prev = s[0];
        }
        assert_abs_diff_eq!(t.final_state()[0], 1.0, epsilon = 1e-11);
    }

    #[test]
    fn backward_increments_contract_geometrically() {
        // |F| ≤ 0.5 for both modes, so increments shrink at least like 0.5^k.
        let sys = two_mode_scalar();
        let x0 = DVector::from_row_slice(&[0.0]);
        let t = backward_trajectory_sampled(&sys, &x0, 60, 11).unwrap();
        for k in 1..t.states.len() - 1 {
            let inc = (&t.states[k + 1] - &t.states[k]).abs().max();
            let bound = 0.5_f64.powi(k as i32) * 2.0;
            assert!(inc <= bound + 1e-12, "k={k} inc={inc} bound={bound}");
        }
    }

    #[test]
    fn unrolled_length_one() {
        let sys = two_mode_scalar();
        let x0 = DVector::from_row_slice(&[0.4]);
        let z = unrolled_forward(&sys, &x0, &ModePath::new(vec![0])).unwrap();
        // F₁ x₀ + c₁ = 0.5·0.4 + 0.5
        assert_abs_diff_eq!(z[0], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn unrolled_zero_offset_pure_product() {
        let sys = classical_rw(2, 0.0, &[1.0]).unwrap().to_affine().unwrap();
        let x0 = DVector::from_row_slice(&[0.2, 0.8]);
        let z = unrolled_forward(&sys, &x0, &ModePath::new(vec![0; 5])).unwrap();
        // B = I and A = 0 ⇒ state unchanged.
        assert!((z - x0).abs().max() < 1e-15);
    }

    #[test]
    fn unrolled_matches_iterative() {
        let sys = two_mode_scalar();
        let init = InitialLaw::point(&[0.3]);
        let t = forward_trajectory(&sys, &init, 10, 5).unwrap();
        let applied = ModePath::new(t.mode_path.indices[1..].to_vec());
        let z = unrolled_forward(&sys, &t.states[0], &applied).unwrap();
        assert!((z - t.final_state()).abs().max() < 1e-12);
    }

    #[test]
    fn batch_reduces_to_single_and_is_repeatable() {
        let sys = two_mode_scalar();
        let init = InitialLaw::point(&[0.0]);
        let batch = batch_trajectories(&sys, &init, 20, 1, 9).unwrap();
        let single =
            forward_trajectory_stream(&sys, &init, 20, 9, 0, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(batch[0], single);

        let again = batch_trajectories(&sys, &init, 20, 8, 9).unwrap();
        let batch8 = batch_trajectories(&sys, &init, 20, 8, 9).unwrap();
        assert_eq!(again, batch8);
    }

    #[test]
    fn batch_final_states_match_trajectories() {
        let sys = two_mode_scalar();
        let init = InitialLaw::point(&[0.7]);
        let finals = batch_final_states(&sys, &init, 30, 16, 4).unwrap();
        let trajs = batch_trajectories(&sys, &init, 30, 16, 4).unwrap();
        for (f, t) in finals.iter().zip(&trajs) {
            assert!((f - t.final_state()).abs().max() < 1e-15);
        }
    }

    #[test]
    fn batch_stationary_mean_classical() {
        // Classical conditioning with i.i.d. Bernoulli(0.5) stimulus:
        // stationary mean E[x] = E[r] = 0.5.
        let sys = classical_rw(1, 0.5, &[0.0, 1.0]).unwrap().to_affine().unwrap();
        let init = InitialLaw::point(&[0.0]);
        let finals = batch_final_states(&sys, &init, 50, 10_000, 3).unwrap();
        let mean: f64 = finals.iter().map(|x| x[0]).sum::<f64>() / finals.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean = {mean}");
    }

    #[test]
    fn state_cap_keeps_running_mean() {
        let sys = two_mode_scalar();
        let init = InitialLaw::point(&[0.0]);
        let full = forward_trajectory_stream(&sys, &init, 200, 5, 0, usize::MAX).unwrap();
        let capped = forward_trajectory_stream(&sys, &init, 200, 5, 0, 10).unwrap();
        assert_eq!(capped.states.len(), 10);
        assert_abs_diff_eq!(
            capped.running_mean[0],
            full.running_mean[0],
            epsilon = 1e-15
        );
    }

    #[test]
    fn csv_round_trips_17_digits() {
        let sys = two_mode_scalar();
        let init = InitialLaw::point(&[1.0 / 3.0]);
        let t = forward_trajectory(&sys, &init, 5, 2).unwrap();
        let mut buf = Vec::new();
        t.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "k,mode,x_1");
        for (k, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[0].parse::<usize>().unwrap(), k);
            let x: f64 = fields[2].parse().unwrap();
            assert_eq!(x, t.states[k][0]);
        }
    }
}
