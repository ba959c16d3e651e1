//! Grid value iteration on the belief simplex.
//!
//! Finite-horizon backward induction runs on the joint belief `pi` over
//! `X x S`. For i.i.d. demand the infinite-horizon problem runs on the
//! difference belief `xi` over `W = S - X` by relative value iteration.
//! Value functions are stored on a regular simplex grid and interpolated
//! piecewise-linearly.

pub mod grid;
pub mod kernel;
pub mod optimize;

pub use grid::{grid_size, SimplexGrid};
pub use kernel::BeliefKernel;
pub use optimize::{Continuation, InnerOptions, InnerSolution};

use crate::belief::{Belief, XiBelief};
use crate::error::{Error, Result};
use crate::iidopt::{self, random_interior, MinimizeOptions};
use crate::info::entropy;
use crate::model::{Geometry, Pmf, SystemSpec};
use crate::policy::{ActionA, ActionB, Policy};
use crate::rng::stream_rng;
use optimize::Stage;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Default cap on stored floats (values plus argmin tables) per value function.
pub const DEFAULT_FLOAT_BUDGET: usize = 50_000_000;

/// Which belief a value function is defined on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefSpace {
    /// Joint law of `(X_t, S_t)`, index `x * ns + s`.
    Joint,
    /// Law of `W_t = S_t - X_t`, index `w + mx`.
    Difference,
}

impl BeliefSpace {
    fn n_states(self, g: Geometry) -> usize {
        match self {
            BeliefSpace::Joint => g.nx() * g.ns(),
            BeliefSpace::Difference => g.nw(),
        }
    }
}

/// Grid values and the minimizing action at each grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueFunction {
    pub space: BeliefSpace,
    pub geometry: Geometry,
    pub grid: SimplexGrid,
    pub values: Vec<f64>,
    /// `values.len()` blocks of `n_states * ny` action probabilities.
    pub actions: Vec<f64>,
}

impl ValueFunction {
    /// Checks sizes and finiteness and rebuilds the grid tables (after deserialization).
    pub fn validated(mut self) -> Result<Self> {
        let g = self.geometry;
        Geometry::new(g.mx, g.my, g.ms)?;
        let n = self.space.n_states(self.geometry);
        if self.grid.dimension() != n {
            return Err(Error::Incompatible(format!(
                "grid dimension {} does not match {} belief states",
                self.grid.dimension(),
                n
            )));
        }
        let points = grid_size(n, self.grid.resolution());
        if self.values.len() as u128 != points {
            return Err(Error::Incompatible(format!("{} values for {} grid points", self.values.len(), points)));
        }
        let floats = points.saturating_mul((1 + n * g.ny()) as u128);
        if floats > DEFAULT_FLOAT_BUDGET as u128 {
            return Err(Error::Budget {
                what: "value function storage (floats)",
                required: floats,
                limit: DEFAULT_FLOAT_BUDGET as u128,
            });
        }
        self.grid = self.grid.rebuild()?;
        let pts = self.grid.len();
        if self.values.len() != pts {
            return Err(Error::Incompatible(format!("{} values for {} grid points", self.values.len(), pts)));
        }
        if !self.actions.is_empty() && self.actions.len() != pts * n * self.geometry.ny() {
            return Err(Error::Incompatible("action table size does not match the grid".into()));
        }
        if self.values.iter().chain(&self.actions).any(|v| !v.is_finite()) {
            return Err(Error::Incompatible("non-finite entries in value function".into()));
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Interpolated value at a belief vector.
    pub fn evaluate(&self, z: &[f64]) -> f64 {
        self.grid.interpolate(&self.values, z)
    }

    pub fn continuation(&self) -> Continuation<'_> {
        Continuation {
            grid: &self.grid,
            values: &self.values,
        }
    }

    /// Stored argmin table at grid point `i`.
    pub fn action_at(&self, i: usize) -> &[f64] {
        let block = self.space.n_states(self.geometry) * self.geometry.ny();
        &self.actions[i * block..(i + 1) * block]
    }

    /// Largest concave-direction second difference along lattice edges; a
    /// scale for the interpolation error of a concave function on this grid.
    pub fn interpolation_tolerance(&self) -> f64 {
        let g = &self.grid;
        let d = g.dimension();
        let mut eps: f64 = 0.0;
        let mut comp = vec![0u16; d];
        for p in 0..g.len() {
            comp.copy_from_slice(g.composition(p));
            for i in 0..d {
                for j in (i + 1)..d {
                    if comp[i] == 0 || comp[j] == 0 {
                        continue;
                    }
                    let mut up = comp.clone();
                    up[i] += 1;
                    up[j] -= 1;
                    let mut down = comp.clone();
                    down[i] -= 1;
                    down[j] += 1;
                    let second = self.values[g.rank(&up)] - 2.0 * self.values[p] + self.values[g.rank(&down)];
                    eps = eps.max(-second);
                }
            }
        }
        eps
    }
}

/// Options for the grid solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpOptions {
    /// Grid resolution `k`; `None` picks 40 for `|W| <= 3`, 12 for `|W| <= 6`
    /// and 6 beyond.
    pub resolution: Option<usize>,
    pub inner: InnerOptions,
    /// Span tolerance for relative value iteration.
    pub tol: f64,
    pub max_iters: usize,
    /// Cap on stored floats per value function.
    pub float_budget: usize,
}

impl Default for DpOptions {
    fn default() -> Self {
        Self {
            resolution: None,
            inner: InnerOptions::default(),
            tol: 1e-6,
            max_iters: 2000,
            float_budget: DEFAULT_FLOAT_BUDGET,
        }
    }
}

impl DpOptions {
    pub fn resolution_for(&self, g: Geometry) -> usize {
        self.resolution.unwrap_or(match g.nw() {
            0..=3 => 40,
            4..=6 => 12,
            _ => 6,
        })
    }
}

fn build_grid(space: BeliefSpace, g: Geometry, resolution: usize, budget: usize) -> Result<SimplexGrid> {
    if resolution < 2 {
        return Err(Error::Incompatible(format!("grid resolution must be at least 2, got {resolution}")));
    }
    let n = space.n_states(g);
    let per_point = 1 + n * g.ny();
    let points = grid_size(n, resolution);
    let floats = points.saturating_mul(per_point as u128);
    if floats > budget as u128 {
        return Err(Error::Budget {
            what: "value function storage (floats)",
            required: floats,
            limit: budget as u128,
        });
    }
    SimplexGrid::new(n, resolution, usize::MAX)
}

fn check_space(v: Option<&ValueFunction>, space: BeliefSpace, g: Geometry) -> Result<()> {
    match v {
        Some(v) if v.space != space || v.geometry != g => Err(Error::Incompatible(
            "value function was computed for a different belief space or geometry".into(),
        )),
        _ => Ok(()),
    }
}

/// Outcome of one Bellman minimization.
#[derive(Debug, Clone)]
pub struct Backup<A> {
    pub value: f64,
    pub action: A,
    pub stationarity: f64,
    pub converged: bool,
}

/// `min_a [B_a V_next](pi)` on the joint belief. `None` stands for `V = 0`.
pub fn bellman_backup(
    spec: &SystemSpec,
    pi: &Belief,
    v_next: Option<&ValueFunction>,
    inner: &InnerOptions,
) -> Result<Backup<ActionA>> {
    let g = spec.geometry();
    if pi.geometry() != g {
        return Err(Error::Incompatible("belief geometry does not match the system".into()));
    }
    check_space(v_next, BeliefSpace::Joint, g)?;
    let kernel = BeliefKernel::joint(spec);
    let stage = Stage {
        kernel: &kernel,
        cont: v_next.map(|v| v.continuation()),
    };
    let sol = stage.solve(pi.joint(), None, inner, 0);
    Ok(Backup {
        value: sol.value,
        action: ActionA::from_raw(g, sol.action),
        stationarity: sol.stationarity,
        converged: sol.converged,
    })
}

/// `min_b [B~_b h](xi)` on the difference belief for i.i.d. demand.
pub fn xi_backup(
    spec: &SystemSpec,
    xi: &XiBelief,
    h: Option<&ValueFunction>,
    inner: &InnerOptions,
) -> Result<Backup<ActionB>> {
    let g = spec.geometry();
    let px = iid_demand(spec)?;
    let xi = xi.clone().with_geometry(g)?;
    check_space(h, BeliefSpace::Difference, g)?;
    let kernel = BeliefKernel::difference(spec, px);
    let stage = Stage {
        kernel: &kernel,
        cont: h.map(|v| v.continuation()),
    };
    let sol = stage.solve(xi.probs(), None, inner, 0);
    Ok(Backup {
        value: sol.value,
        action: difference_action(g, xi.probs(), sol.action),
        stationarity: sol.stationarity,
        converged: sol.converged,
    })
}

fn difference_action(g: Geometry, xi: &[f64], table: Vec<f64>) -> ActionB {
    let unreachable = xi.iter().map(|&p| p == 0.0).collect();
    ActionB::from_raw(g, table, unreachable)
}

fn iid_demand(spec: &SystemSpec) -> Result<&Pmf> {
    spec.iid_demand()
        .ok_or_else(|| Error::Incompatible("the difference-belief recursion requires i.i.d. demand".into()))
}

fn sweep(
    kernel: &BeliefKernel,
    grid: &SimplexGrid,
    cont: Option<Continuation<'_>>,
    warm: Option<&[f64]>,
    inner: &InnerOptions,
    stage_id: u64,
) -> Vec<InnerSolution> {
    let stage = Stage { kernel, cont };
    let block = kernel.n_states() * kernel.ny();
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.point(i);
            let w = warm.map(|w| &w[i * block..(i + 1) * block]);
            stage.solve(&p, w, inner, (stage_id << 32) | i as u64)
        })
        .collect()
}

fn collect(space: BeliefSpace, g: Geometry, grid: &SimplexGrid, sols: Vec<InnerSolution>) -> (ValueFunction, usize) {
    let unconverged = sols.iter().filter(|s| !s.converged).count();
    let mut values = Vec::with_capacity(sols.len());
    let mut actions = Vec::new();
    for s in sols {
        values.push(s.value);
        actions.extend(s.action);
    }
    (
        ValueFunction {
            space,
            geometry: g,
            grid: grid.clone(),
            values,
            actions,
        },
        unconverged,
    )
}

/// Backward-induction result on the joint belief.
#[derive(Debug, Clone)]
pub struct FiniteSolution {
    spec: SystemSpec,
    /// `V_1, ..., V_T`.
    pub stages: Arc<Vec<ValueFunction>>,
    /// `V_1(pi_1)` in bits, from a direct backup at the initial belief.
    pub initial_value: f64,
    /// `V_1(pi_1) / T` in bits.
    pub rate: f64,
    pub resolution: usize,
    /// Grid points whose inner solve did not reach the stationarity target.
    pub unconverged_points: usize,
    pub inner: InnerOptions,
}

impl FiniteSolution {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// The greedy belief policy: at step `t` it minimizes `[B_a V_{t+1}](pi_t)`.
    pub fn policy(&self) -> Policy {
        Policy::belief(GreedyBelief {
            spec: self.spec.clone(),
            kernel: BeliefKernel::joint(&self.spec),
            stages: self.stages.clone(),
            inner: self.inner,
            cache: Mutex::new(HashMap::new()),
        })
    }
}

/// Finite-horizon value iteration over the joint belief simplex.
pub fn solve_finite_horizon(spec: &SystemSpec, horizon: usize, opts: &DpOptions) -> Result<FiniteSolution> {
    if horizon == 0 {
        return Err(Error::Incompatible("horizon must be at least 1".into()));
    }
    let g = spec.geometry();
    let resolution = opts.resolution_for(g);
    let grid = build_grid(BeliefSpace::Joint, g, resolution, opts.float_budget)?;
    let kernel = BeliefKernel::joint(spec);
    let mut stages: Vec<ValueFunction> = Vec::with_capacity(horizon);
    let mut unconverged = 0;
    for t in (0..horizon).rev() {
        let cont = stages.last().map(|v| v.continuation());
        let sols = sweep(&kernel, &grid, cont, None, &opts.inner, t as u64);
        let (v, u) = collect(BeliefSpace::Joint, g, &grid, sols);
        unconverged += u;
        stages.push(v);
    }
    stages.reverse();
    let pi1 = Belief::product_in(g, spec.initial_demand(), spec.initial_battery())?;
    let first = bellman_backup(spec, &pi1, stages.get(1), &opts.inner)?;
    Ok(FiniteSolution {
        spec: spec.clone(),
        stages: Arc::new(stages),
        initial_value: first.value,
        rate: first.value / horizon as f64,
        resolution,
        unconverged_points: unconverged,
        inner: opts.inner,
    })
}

fn belief_key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|v| v.to_bits()).collect()
}

struct GreedyBelief {
    spec: SystemSpec,
    kernel: BeliefKernel,
    stages: Arc<Vec<ValueFunction>>,
    inner: InnerOptions,
    cache: Mutex<HashMap<(usize, Vec<u64>), ActionA>>,
}

impl crate::policy::BeliefRule for GreedyBelief {
    fn action(&self, t: usize, pi: &Belief) -> Result<ActionA> {
        let g = self.spec.geometry();
        if pi.geometry() != g {
            return Err(Error::Incompatible("belief geometry does not match the policy".into()));
        }
        let stage_t = t.min(self.stages.len().saturating_sub(1));
        let key = (stage_t, belief_key(pi.joint()));
        if let Some(a) = self.cache.lock().unwrap().get(&key) {
            return Ok(a.clone());
        }
        let stage = Stage {
            kernel: &self.kernel,
            cont: self.stages.get(stage_t + 1).map(|v| v.continuation()),
        };
        let sol = stage.solve(pi.joint(), None, &self.inner, 0);
        let a = ActionA::from_raw(g, sol.action);
        self.cache.lock().unwrap().insert(key, a.clone());
        Ok(a)
    }
}

/// Relative value iteration result on the difference belief.
#[derive(Debug, Clone)]
pub struct InfiniteSolution {
    spec: SystemSpec,
    /// Relative value `h`, pinned to zero at the anchor point.
    pub value: Arc<ValueFunction>,
    /// Span midpoint of `T h - h` in bits.
    pub j: f64,
    /// Final span of `T h - h`.
    pub span: f64,
    pub iterations: usize,
    pub converged: bool,
    pub resolution: usize,
    /// Grid point nearest `xi*`.
    pub anchor: usize,
    pub unconverged_points: usize,
    pub inner: InnerOptions,
}

impl InfiniteSolution {
    /// The greedy difference policy: `b_t` minimizes `[B~_b h](xi_t)`.
    pub fn policy(&self) -> Result<Policy> {
        let px = iid_demand(&self.spec)?.clone();
        Ok(Policy::difference(GreedyDifference {
            geometry: self.spec.geometry(),
            kernel: BeliefKernel::difference(&self.spec, &px),
            value: self.value.clone(),
            inner: self.inner,
            cache: Mutex::new(HashMap::new()),
        }))
    }
}

struct GreedyDifference {
    geometry: Geometry,
    kernel: BeliefKernel,
    value: Arc<ValueFunction>,
    inner: InnerOptions,
    cache: Mutex<HashMap<Vec<u64>, ActionB>>,
}

impl crate::policy::DifferenceRule for GreedyDifference {
    fn action(&self, _t: usize, xi: &XiBelief) -> Result<ActionB> {
        let xi = xi.clone().with_geometry(self.geometry)?;
        let key = belief_key(xi.probs());
        if let Some(b) = self.cache.lock().unwrap().get(&key) {
            return Ok(b.clone());
        }
        let stage = Stage {
            kernel: &self.kernel,
            cont: Some(self.value.continuation()),
        };
        let sol = stage.solve(xi.probs(), None, &self.inner, 0);
        let b = difference_action(self.geometry, xi.probs(), sol.action);
        self.cache.lock().unwrap().insert(key, b.clone());
        Ok(b)
    }
}

/// Infinite-horizon average-cost solution over the `xi` simplex by relative
/// value iteration. Non-convergence is reported in the result, not as an error.
pub fn solve_iid_infinite(spec: &SystemSpec, opts: &DpOptions) -> Result<InfiniteSolution> {
    let g = spec.geometry();
    let px = iid_demand(spec)?;
    let resolution = opts.resolution_for(g);
    let grid = build_grid(BeliefSpace::Difference, g, resolution, opts.float_budget)?;
    let kernel = BeliefKernel::difference(spec, px);

    let star = iidopt::minimize(px, spec.battery_alphabet(), MinimizeOptions::default())?;
    let anchor = grid.nearest(star.xi_star.probs());

    let mut h = ValueFunction {
        space: BeliefSpace::Difference,
        geometry: g,
        grid: grid.clone(),
        values: vec![0.0; grid.len()],
        actions: Vec::new(),
    };
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut iterations = 0;
    let mut unconverged = 0;
    // random restarts on the first sweep only; later sweeps warm-start from
    // the previous argmin
    let later = InnerOptions {
        restarts: 0,
        ..opts.inner
    };
    while iterations < opts.max_iters {
        let inner = if iterations == 0 { &opts.inner } else { &later };
        let warm = if h.actions.is_empty() { None } else { Some(h.actions.as_slice()) };
        let cont = if iterations == 0 { None } else { Some(h.continuation()) };
        let sols = sweep(&kernel, &grid, cont, warm, inner, iterations as u64);
        let (th, u) = collect(BeliefSpace::Difference, g, &grid, sols);
        unconverged = u;
        let diffs: Vec<f64> = th.values.iter().zip(&h.values).map(|(a, b)| a - b).collect();
        lo = diffs.iter().cloned().fold(f64::INFINITY, f64::min);
        hi = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let offset = th.values[anchor];
        h = ValueFunction {
            values: th.values.iter().map(|v| v - offset).collect(),
            ..th
        };
        iterations += 1;
        if hi - lo < opts.tol {
            break;
        }
    }
    let span = hi - lo;
    Ok(InfiniteSolution {
        spec: spec.clone(),
        value: Arc::new(h),
        j: 0.5 * (lo + hi),
        span,
        iterations,
        converged: span < opts.tol,
        resolution,
        anchor,
        unconverged_points: unconverged,
        inner: opts.inner,
    })
}

/// Concavity check over random chords.
#[derive(Debug, Clone, Serialize)]
pub struct ConcavityReport {
    pub trials: usize,
    pub violations: usize,
    /// Tolerance applied to each chord.
    pub epsilon_grid: f64,
    /// Largest `lambda V(p1) + (1 - lambda) V(p2) - V(mix)` observed.
    pub worst_gap: f64,
}

/// `V(l p1 + (1 - l) p2) >= l V(p1) + (1 - l) V(p2) - eps` over random chords,
/// with `eps` the grid's interpolation tolerance.
pub fn verify_concavity(v: &ValueFunction, trials: usize, seed: u64) -> ConcavityReport {
    verify_concavity_with(v, trials, seed, v.interpolation_tolerance() + 1e-9)
}

pub fn verify_concavity_with(v: &ValueFunction, trials: usize, seed: u64, eps: f64) -> ConcavityReport {
    let d = v.grid.dimension();
    let mut rng = stream_rng(seed, 0xc0c0);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..trials {
        let p1 = sample_belief(&mut rng, d, trial);
        let p2 = sample_belief(&mut rng, d, trial / 3);
        let lambda: f64 = rng.random_range(0.01..0.99);
        let mix: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        let gap = lambda * v.evaluate(&p1) + (1.0 - lambda) * v.evaluate(&p2) - v.evaluate(&mix);
        worst = worst.max(gap);
        if gap > eps {
            violations += 1;
        }
    }
    ConcavityReport {
        trials,
        violations,
        epsilon_grid: eps,
        worst_gap: worst,
    }
}

/// Interior points most of the time, with faces and vertices mixed in.
fn sample_belief<R: Rng>(rng: &mut R, d: usize, trial: usize) -> Vec<f64> {
    match trial % 5 {
        3 => {
            let mut p = random_interior(rng, d);
            let drop = rng.random_range(0..d);
            if d > 1 {
                p[drop] = 0.0;
                let s: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= s);
            }
            p
        }
        4 => {
            let mut p = vec![0.0; d];
            p[rng.random_range(0..d)] = 1.0;
            p
        }
        _ => random_interior(rng, d),
    }
}

/// `[B~_b H](xi) - H(xi) - J*`, i.e. `I(b; xi) + H(W_2 | Y_1) - H(xi) - J*`.
pub fn converse_slack(kernel: &BeliefKernel, xi: &[f64], b: &[f64], j_star: f64) -> f64 {
    let (q, n) = kernel.propagate(xi, b);
    let info = kernel.mutual_information(xi, b, &q);
    let cond: f64 = q
        .iter()
        .zip(&n)
        .filter(|(qy, _)| **qy > 0.0)
        .map(|(qy, ny)| {
            let z: Vec<f64> = ny.iter().map(|v| v / qy).collect();
            qy * entropy(&z)
        })
        .sum();
    info + cond - entropy(xi) - j_star
}

/// Converse inequality check over random `(xi, b)`.
#[derive(Debug, Clone, Serialize)]
pub struct ConverseReport {
    pub trials: usize,
    pub min_slack: f64,
    /// Slack at `(xi*, b*)`, which should vanish.
    pub equality_slack: f64,
}

impl ConverseReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.min_slack >= -tol && self.equality_slack.abs() <= tol
    }
}

/// Samples `(xi, b)` and reports the smallest converse slack; also evaluates
/// the slack at the single-letter optimum.
pub fn verify_dp_converse(spec: &SystemSpec, j_star: f64, samples: usize, seed: u64) -> Result<ConverseReport> {
    let g = spec.geometry();
    let px = iid_demand(spec)?;
    let kernel = BeliefKernel::difference(spec, px);
    let nw = g.nw();
    let ny = g.ny();
    let mut rng = stream_rng(seed, 0xc0de);
    let mut min_slack = f64::INFINITY;
    for trial in 0..samples {
        let xi = sample_belief(&mut rng, nw, trial);
        let mut b = vec![0.0; nw * ny];
        for wi in 0..nw {
            let r = kernel.feasible(wi);
            if trial % 4 == 1 {
                b[wi * ny + rng.random_range(r.clone())] = 1.0;
            } else {
                let row = random_interior(&mut rng, r.len());
                for (y, p) in r.zip(row) {
                    b[wi * ny + y] = p;
                }
            }
        }
        min_slack = min_slack.min(converse_slack(&kernel, &xi, &b, j_star));
    }
    let star = iidopt::minimize(px, spec.battery_alphabet(), MinimizeOptions::default())?;
    let b_star = star.structured_for(g, px)?;
    let xi_star = star.xi_star.with_geometry(g)?;
    let equality_slack = converse_slack(&kernel, xi_star.probs(), b_star.table(), j_star);
    Ok(ConverseReport {
        trials: samples,
        min_slack,
        equality_slack,
    })
}
