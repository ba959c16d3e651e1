//! Leakage evaluation.
//!
//! For policies in `Q_B` the leakage rate decomposes as
//! `L_T = (1/T) sum_t E[I(a_t; pi_t)]`, where `pi_t` is the joint belief after
//! `y^{t-1}` and `a_t` the action the policy applies at that belief. Exact
//! evaluation walks the tree of output histories; Monte Carlo samples paths
//! and averages the same analytic per-step costs. History-dependent policies
//! go through [`history::brute_force_leakage`] instead.

pub mod history;

use crate::belief::{filter_joint, theta_to_xi, xi_update, Belief, XiBelief};
use crate::error::{Error, Result};
use crate::info::{channel_mutual_information, Units};
use crate::model::SystemSpec;
use crate::policy::{ActionA, ActionB, Policy};
use crate::rng::{sample_index, stream_rng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

/// Default node budget for exact evaluation.
pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

/// Branches with probability below this are dropped from exact evaluation.
pub const PRUNE_THRESHOLD: f64 = 1e-15;

/// `I(a; pi)` in bits: the mutual information between `(X, S) ~ pi` and the
/// output drawn from `a(. | X, S)`.
pub fn mi_of_action(a: &ActionA, pi: &Belief) -> f64 {
    channel_mutual_information(pi.joint(), a.table(), a.geometry().ny())
}

/// `I(b; xi)` in bits: `I(W; Y)` with `W ~ xi` and `Y ~ b(. | W)`.
pub fn iid_single_letter_rate(b: &ActionB, xi: &XiBelief) -> f64 {
    channel_mutual_information(xi.probs(), b.table(), b.geometry().ny())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
    BruteForce,
}

/// Per-step conditional mutual informations and their average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub horizon: usize,
    pub units: Units,
    /// `I(X_t, S_t; Y_t | Y^{t-1})` for each step.
    pub per_step: Vec<f64>,
    /// `L_T`, the mean of `per_step`.
    pub total_rate: f64,
    pub method: Method,
    /// 95% half-width (Monte Carlo only).
    pub ci_halfwidth: f64,
    pub sample_count: usize,
    /// Probability mass dropped by pruning (exact only).
    pub pruned_mass: f64,
}

#[derive(Serialize)]
struct StepRow {
    t: usize,
    leakage: f64,
}

impl LeakageReport {
    fn new(per_step: Vec<f64>, method: Method) -> Self {
        let horizon = per_step.len();
        let total_rate = if horizon == 0 {
            0.0
        } else {
            per_step.iter().sum::<f64>() / horizon as f64
        };
        Self {
            horizon,
            units: Units::Bits,
            per_step,
            total_rate,
            method,
            ci_halfwidth: 0.0,
            sample_count: 0,
            pruned_mass: 0.0,
        }
    }

    /// Re-expresses a bits report in `units`.
    pub fn in_units(mut self, units: Units) -> Self {
        if self.units == units {
            return self;
        }
        let to_bits = |v: f64| match self.units {
            Units::Bits => v,
            Units::Nats => v / std::f64::consts::LN_2,
        };
        let conv = |v: f64| units.from_bits(to_bits(v));
        self.per_step = self.per_step.iter().map(|&v| conv(v)).collect();
        self.total_rate = conv(self.total_rate);
        self.ci_halfwidth = conv(self.ci_halfwidth);
        self.units = units;
        self
    }

    /// Upper bound on the error introduced by pruning, in bits.
    pub fn pruning_error_bound(&self, ny: usize) -> f64 {
        self.pruned_mass * (ny as f64).log2()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per step: `t,leakage`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (t, &leakage) in self.per_step.iter().enumerate() {
            w.serialize(StepRow { t, leakage })?;
        }
        w.flush()?;
        Ok(())
    }
}

fn initial_belief(spec: &SystemSpec) -> Belief {
    Belief::product_in(spec.geometry(), spec.initial_demand(), spec.initial_battery())
        .expect("spec marginals match its geometry")
}

#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    pub node_budget: u64,
    pub prune_below: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            node_budget: DEFAULT_NODE_BUDGET,
            prune_below: PRUNE_THRESHOLD,
        }
    }
}

struct Walk<'a> {
    spec: &'a SystemSpec,
    policy: &'a Policy,
    horizon: usize,
    opts: ExactOptions,
    nodes: &'a AtomicU64,
}

struct Acc {
    per_step: Vec<f64>,
    pruned: f64,
}

impl Walk<'_> {
    fn visit(&self, t: usize, ys: &mut Vec<usize>, pi: &Belief, prob: f64, acc: &mut Acc) -> Result<()> {
        let n = self.nodes.fetch_add(1, Ordering::Relaxed) + 1;
        if n > self.opts.node_budget {
            return Err(Error::Budget {
                what: "exact evaluation (use Monte Carlo instead)",
                required: n as u128,
                limit: self.opts.node_budget as u128,
            });
        }
        let a = self.policy.action_at(t, ys, pi)?;
        acc.per_step[t] += prob * mi_of_action(&a, pi);
        if t + 1 == self.horizon {
            return Ok(());
        }
        for (y, py) in output_law(&a, pi).into_iter().enumerate() {
            let p = prob * py;
            if p == 0.0 {
                continue;
            }
            if p < self.opts.prune_below {
                acc.pruned += p;
                continue;
            }
            let next = filter_joint(pi, y, &a, self.spec.transition())?;
            ys.push(y);
            self.visit(t + 1, ys, &next, p, acc)?;
            ys.pop();
        }
        Ok(())
    }
}

/// Predicted law of the next output under belief `pi` and action `a`.
pub fn output_law(a: &ActionA, pi: &Belief) -> Vec<f64> {
    let ny = a.geometry().ny();
    let mut out = vec![0.0; ny];
    for (i, &p) in pi.joint().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (o, &av) in out.iter_mut().zip(&a.table()[i * ny..(i + 1) * ny]) {
            *o += p * av;
        }
    }
    out
}

/// Exact `L_T` for a `Q_B` policy by enumerating output histories.
pub fn exact_leakage(spec: &SystemSpec, policy: &Policy, horizon: usize) -> Result<LeakageReport> {
    exact_leakage_with(spec, policy, horizon, ExactOptions::default())
}

pub fn exact_leakage_with(
    spec: &SystemSpec,
    policy: &Policy,
    horizon: usize,
    opts: ExactOptions,
) -> Result<LeakageReport> {
    policy.check_compatible(spec.geometry())?;
    if matches!(policy, Policy::History(_)) {
        return Err(Error::Incompatible(
            "exact evaluation needs a Q_B policy; use history::brute_force_leakage".into(),
        ));
    }
    if horizon == 0 {
        return Ok(LeakageReport::new(Vec::new(), Method::Exact));
    }
    let nodes = AtomicU64::new(0);
    let walk = Walk {
        spec,
        policy,
        horizon,
        opts,
        nodes: &nodes,
    };
    let pi = initial_belief(spec);
    let a = policy.action_at(0, &[], &pi)?;
    nodes.fetch_add(1, Ordering::Relaxed);
    let mut per_step = vec![0.0; horizon];
    per_step[0] = mi_of_action(&a, &pi);
    let mut pruned = 0.0;
    if horizon > 1 {
        // first-level subtrees in parallel, merged in output order
        let branches: Vec<(usize, f64)> = output_law(&a, &pi).into_iter().enumerate().filter(|(_, p)| *p > 0.0).collect();
        let results: Vec<Result<Acc>> = branches
            .par_iter()
            .map(|&(y, py)| {
                let mut acc = Acc {
                    per_step: vec![0.0; horizon],
                    pruned: 0.0,
                };
                if py < opts.prune_below {
                    acc.pruned = py;
                    return Ok(acc);
                }
                let next = filter_joint(&pi, y, &a, spec.transition())?;
                walk.visit(1, &mut vec![y], &next, py, &mut acc)?;
                Ok(acc)
            })
            .collect();
        for r in results {
            let acc = r?;
            for (p, v) in per_step.iter_mut().zip(&acc.per_step) {
                *p += v;
            }
            pruned += acc.pruned;
        }
    }
    let mut report = LeakageReport::new(per_step, Method::Exact);
    report.pruned_mass = pruned;
    Ok(report)
}

/// Per-path state for Monte Carlo evaluation.
enum Tracker {
    Joint(Belief),
    Difference(XiBelief),
}

fn sample_path(spec: &SystemSpec, policy: &Policy, horizon: usize, seed: u64, path: u64) -> Result<Vec<f64>> {
    let g = spec.geometry();
    let mut rng = stream_rng(seed, path);
    let q = spec.transition();
    let mut x = sample_index(&mut rng, spec.initial_demand().probs());
    let mut s = sample_index(&mut rng, spec.initial_battery().probs());
    let difference_form = spec.is_iid() && matches!(policy, Policy::ConstantB(_) | Policy::Difference(_));
    let mut tracker = if difference_form {
        let xi = theta_to_xi(spec.initial_battery(), spec.initial_demand())?.with_geometry(g)?;
        Tracker::Difference(xi)
    } else {
        Tracker::Joint(initial_belief(spec))
    };
    let mut ys = Vec::with_capacity(horizon);
    let mut costs = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let y = match &mut tracker {
            Tracker::Difference(xi) => {
                let b = match policy {
                    Policy::ConstantB(b) => std::borrow::Cow::Borrowed(b),
                    Policy::Difference(rule) => std::borrow::Cow::Owned(rule.action(t, xi)?),
                    _ => unreachable!(),
                };
                costs.push(iid_single_letter_rate(&b, xi));
                let y = sample_index(&mut rng, b.row(s as i64 - x as i64));
                *xi = xi_update(xi, y, &b, spec.initial_demand())?;
                y
            }
            Tracker::Joint(pi) => {
                let a = policy.action_at(t, &ys, pi)?;
                costs.push(mi_of_action(&a, pi));
                let y = sample_index(&mut rng, a.row(x, s));
                *pi = filter_joint(pi, y, &a, q)?;
                y
            }
        };
        s = spec.step(s, x, y)?;
        ys.push(y);
        x = sample_index(&mut rng, q.row(x));
    }
    Ok(costs)
}

const PATH_CHUNK: usize = 64;

struct ChunkStats {
    per_step: Vec<f64>,
    n: f64,
    mean: f64,
    m2: f64,
}

/// Rao-Blackwellized Monte Carlo estimate of `L_T`: sampled output paths,
/// analytic per-step costs. Deterministic in `seed` regardless of thread count.
pub fn monte_carlo_leakage(
    spec: &SystemSpec,
    policy: &Policy,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Result<LeakageReport> {
    policy.check_compatible(spec.geometry())?;
    if matches!(policy, Policy::History(_)) {
        return Err(Error::Incompatible(
            "Monte Carlo evaluation needs a Q_B policy; use history::brute_force_leakage".into(),
        ));
    }
    if samples == 0 {
        return Err(Error::Incompatible("Monte Carlo needs at least one sample".into()));
    }
    if horizon == 0 {
        let mut r = LeakageReport::new(Vec::new(), Method::MonteCarlo);
        r.sample_count = samples;
        return Ok(r);
    }
    let chunks: Vec<Result<ChunkStats>> = (0..samples.div_ceil(PATH_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut st = ChunkStats {
                per_step: vec![0.0; horizon],
                n: 0.0,
                mean: 0.0,
                m2: 0.0,
            };
            for path in c * PATH_CHUNK..((c + 1) * PATH_CHUNK).min(samples) {
                let costs = sample_path(spec, policy, horizon, seed, path as u64)?;
                let rate = costs.iter().sum::<f64>() / horizon as f64;
                for (p, v) in st.per_step.iter_mut().zip(&costs) {
                    *p += v;
                }
                st.n += 1.0;
                let d = rate - st.mean;
                st.mean += d / st.n;
                st.m2 += d * (rate - st.mean);
            }
            Ok(st)
        })
        .collect();
    let mut per_step = vec![0.0; horizon];
    let (mut n, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
    for c in chunks {
        let c = c?;
        for (p, v) in per_step.iter_mut().zip(&c.per_step) {
            *p += v;
        }
        let tot = n + c.n;
        let d = c.mean - mean;
        mean += d * c.n / tot;
        m2 += c.m2 + d * d * n * c.n / tot;
        n = tot;
    }
    per_step.iter_mut().for_each(|p| *p /= n);
    let mut report = LeakageReport::new(per_step, Method::MonteCarlo);
    let var = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
    report.ci_halfwidth = 1.96 * (var / n).sqrt();
    report.sample_count = samples;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Alphabet, Geometry, Pmf};
    use crate::policy::{equiprobable_policy, lift_to_action_a, structured_policy};

    #[test]
    fn independent_action_leaks_nothing() {
        // with no demand, y = 0 is feasible from every battery level
        let g = Geometry::new(0, 1, 1).unwrap();
        let a = ActionA::from_fn(g, |_, _, y| if y == 0 { 1.0 } else { 0.0 }).unwrap();
        let pi = Belief::uniform(g);
        assert_eq!(mi_of_action(&a, &pi), 0.0);
    }

    #[test]
    fn injective_action_reveals_belief() {
        // X = {0}, S = {0, 1, 2}, Y = {0}: trivially one output, so use a
        // richer geometry where y = s is feasible with x = 0.
        let g = Geometry::new(0, 2, 2).unwrap();
        let a = ActionA::from_fn(g, |_, s, y| if y == 2 - s { 1.0 } else { 0.0 }).unwrap();
        let pi = Belief::new(g, vec![0.2, 0.3, 0.5]).unwrap();
        assert!((mi_of_action(&a, &pi) - pi.entropy()).abs() < 1e-12);
    }

    #[test]
    fn equiprobable_binary_matches_joint_entropies() {
        let spec = SystemSpec::binary_uniform();
        let g = spec.geometry();
        let a = lift_to_action_a(&equiprobable_policy(g));
        let pi = Belief::uniform(g);
        // H(Y) - H(Y | X, S) over the 8-point joint
        let mut hy = [0.0; 2];
        let mut h_cond = 0.0;
        for x in 0..2 {
            for s in 0..2 {
                for (y, hy_y) in hy.iter_mut().enumerate() {
                    let p = 0.25 * a.prob(y, x, s);
                    *hy_y += p;
                    if p > 0.0 {
                        h_cond -= p * a.prob(y, x, s).log2();
                    }
                }
            }
        }
        let expect = crate::info::entropy(&hy) - h_cond;
        assert!((mi_of_action(&a, &pi) - expect).abs() < 1e-14);
    }

    #[test]
    fn single_letter_rate_binary() {
        let half = Pmf::uniform(Alphabet::upto(1).unwrap());
        let g = Geometry::new(1, 1, 1).unwrap();
        let b = structured_policy(g, &half, &half).unwrap();
        let xi = theta_to_xi(&half, &half).unwrap();
        assert!((iid_single_letter_rate(&b, &xi) - 0.5).abs() < 1e-15);
        let g2 = Geometry::new(0, 1, 1).unwrap();
        let flat = ActionB::from_fn(g2, |_, y| if y == 0 { 1.0 } else { 0.0 }).unwrap();
        let xi2 = XiBelief::new(g2, vec![0.5, 0.5]).unwrap();
        assert_eq!(iid_single_letter_rate(&flat, &xi2), 0.0);
    }

    #[test]
    fn passthrough_leaks_demand_entropy() {
        let spec = SystemSpec::binary_uniform();
        let p = Policy::ConstantA(ActionA::passthrough(spec.geometry()));
        let r = exact_leakage(&spec, &p, 4).unwrap();
        for v in &r.per_step {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!((r.total_rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let spec = SystemSpec::binary_uniform();
        let p = Policy::ConstantB(equiprobable_policy(spec.geometry()));
        let opts = ExactOptions {
            node_budget: 10,
            ..ExactOptions::default()
        };
        let err = exact_leakage_with(&spec, &p, 8, opts).unwrap_err();
        assert!(matches!(err, Error::Budget { .. }));
    }

    #[test]
    fn invariant_policy_has_zero_variance_estimate() {
        let spec = SystemSpec::binary_uniform();
        let half = Pmf::uniform(Alphabet::upto(1).unwrap());
        let b = structured_policy(spec.geometry(), &half, &half).unwrap();
        let r = monte_carlo_leakage(&spec, &Policy::ConstantB(b), 20, 200, 5).unwrap();
        assert!((r.total_rate - 0.5).abs() < 1e-12);
        assert!(r.ci_halfwidth < 1e-12);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let spec = SystemSpec::binomial(3, 0.4, 3).unwrap();
        let p = Policy::ConstantB(equiprobable_policy(spec.geometry()));
        let a = monte_carlo_leakage(&spec, &p, 15, 300, 11).unwrap();
        let b = monte_carlo_leakage(&spec, &p, 15, 300, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn units_conversion() {
        let spec = SystemSpec::binary_uniform();
        let p = Policy::ConstantA(ActionA::passthrough(spec.geometry()));
        let r = exact_leakage(&spec, &p, 2).unwrap().in_units(Units::Nats);
        assert!((r.total_rate - std::f64::consts::LN_2).abs() < 1e-12);
        let back = r.in_units(Units::Bits);
        assert!((back.total_rate - 1.0).abs() < 1e-12);
    }
}
