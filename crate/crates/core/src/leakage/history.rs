//! Full-joint enumeration for tiny instances.
//!
//! These routines enumerate every `(s_1, x^t, y^t)` and therefore work for
//! any policy, including history-dependent ones. They cost
//! `|S| (|X| |Y|)^T` and are meant for short horizons on small alphabets.

use super::{LeakageReport, Method};
use crate::belief::{filter_joint, Belief};
use crate::error::{Error, Result};
use crate::model::{Geometry, SystemSpec};
use crate::policy::{ActionA, MemoryRule, Policy};
use std::collections::HashMap;

/// Default cap on enumerated nodes.
pub const DEFAULT_PATH_BUDGET: u64 = 5_000_000;

/// One enumerated prefix `(s_1, x^{t+1}, y^{t+1})` (0-based `t`).
pub struct PathNode<'a> {
    pub t: usize,
    pub xs: &'a [usize],
    pub ss: &'a [usize],
    pub ys: &'a [usize],
    /// Joint probability of the prefix.
    pub prob: f64,
    /// Product of the policy probabilities `q_1 ... q_{t+1}` along the prefix.
    pub channel: f64,
}

struct Enumerator<'a> {
    spec: &'a SystemSpec,
    policy: &'a Policy,
    horizon: usize,
    budget: u64,
    nodes: u64,
    // belief and action after each output history, for belief-driven policies
    cache: HashMap<Vec<usize>, (Belief, ActionA)>,
}

impl Enumerator<'_> {
    fn belief_action(&mut self, t: usize, ys: &[usize]) -> Result<ActionA> {
        if let Some((_, a)) = self.cache.get(ys) {
            return Ok(a.clone());
        }
        let pi = if t == 0 {
            Belief::product_in(self.spec.geometry(), self.spec.initial_demand(), self.spec.initial_battery())?
        } else {
            self.belief_action(t - 1, &ys[..t - 1])?;
            let (prev, a) = self.cache.get(&ys[..t - 1]).unwrap();
            filter_joint(prev, ys[t - 1], a, self.spec.transition())?
        };
        let a = self.policy.action_at(t, ys, &pi)?;
        self.cache.insert(ys.to_vec(), (pi, a.clone()));
        Ok(a)
    }

    fn row(&mut self, t: usize, xs: &[usize], ss: &[usize], ys: &[usize]) -> Result<Vec<f64>> {
        let (x, s) = (xs[t], ss[t]);
        let row = match self.policy {
            Policy::History(rule) => rule.distribution(t, xs, ss, ys),
            Policy::MemoryCompressed(rule) => rule.distribution(t, x, s, ys),
            Policy::ConstantA(a) => a.row(x, s).to_vec(),
            Policy::ConstantB(b) => b.row(s as i64 - x as i64).to_vec(),
            Policy::Belief(_) | Policy::Difference(_) => self.belief_action(t, ys)?.row(x, s).to_vec(),
        };
        if row.len() != self.spec.geometry().ny() {
            return Err(Error::Policy(format!("rule returned {} probabilities at step {t}", row.len())));
        }
        Ok(row)
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        &mut self,
        t: usize,
        xs: &mut Vec<usize>,
        ss: &mut Vec<usize>,
        ys: &mut Vec<usize>,
        prob: f64,
        channel: f64,
        visit: &mut dyn FnMut(&PathNode),
    ) -> Result<()> {
        let row = self.row(t, xs, ss, ys)?;
        let (x, s) = (xs[t], ss[t]);
        for (y, &qy) in row.iter().enumerate() {
            if qy <= 0.0 {
                continue;
            }
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(Error::Budget {
                    what: "brute-force enumeration",
                    required: self.nodes as u128,
                    limit: self.budget as u128,
                });
            }
            let s_next = self.spec.step(s, x, y).map_err(|e| Error::Policy(format!("step {t}: {e}")))?;
            ys.push(y);
            let (p, c) = (prob * qy, channel * qy);
            visit(&PathNode {
                t,
                xs,
                ss,
                ys,
                prob: p,
                channel: c,
            });
            if t + 1 < self.horizon {
                let qrow = self.spec.transition().row(x).to_vec();
                for (xn, &px) in qrow.iter().enumerate() {
                    if px == 0.0 {
                        continue;
                    }
                    xs.push(xn);
                    ss.push(s_next);
                    self.walk(t + 1, xs, ss, ys, p * px, c, visit)?;
                    xs.pop();
                    ss.pop();
                }
            }
            ys.pop();
        }
        Ok(())
    }
}

/// Visits every positive-probability prefix of length `1..=horizon`.
pub fn enumerate_paths(
    spec: &SystemSpec,
    policy: &Policy,
    horizon: usize,
    budget: u64,
    visit: &mut dyn FnMut(&PathNode),
) -> Result<()> {
    policy.check_compatible(spec.geometry())?;
    let mut e = Enumerator {
        spec,
        policy,
        horizon,
        budget,
        nodes: 0,
        cache: HashMap::new(),
    };
    if horizon == 0 {
        return Ok(());
    }
    let theta = spec.initial_battery().probs().to_vec();
    let px = spec.initial_demand().probs().to_vec();
    for (s, &ps) in theta.iter().enumerate() {
        for (x, &pxv) in px.iter().enumerate() {
            if ps * pxv == 0.0 {
                continue;
            }
            e.walk(0, &mut vec![x], &mut vec![s], &mut Vec::new(), ps * pxv, 1.0, visit)?;
        }
    }
    Ok(())
}

fn y_index(ys: &[usize], ny: usize) -> usize {
    ys.iter().fold(0, |acc, &y| acc * ny + y)
}

/// `(1/T) I(X^T, S_1; Y^T)` computed from the enumerated joint law.
///
/// `per_step[t]` is the chain-rule increment `I(X^T, S_1; Y_t | Y^{t-1})`.
pub fn brute_force_leakage(spec: &SystemSpec, policy: &Policy, horizon: usize) -> Result<LeakageReport> {
    let ny = spec.geometry().ny();
    let leaves = (ny as u128).checked_pow(horizon as u32).unwrap_or(u128::MAX);
    if leaves > DEFAULT_PATH_BUDGET as u128 {
        return Err(Error::Budget {
            what: "brute-force output histories",
            required: leaves,
            limit: DEFAULT_PATH_BUDGET as u128,
        });
    }
    // per level: output-history marginals and (index, prob, channel) triples
    let mut py: Vec<Vec<f64>> = (0..horizon).map(|t| vec![0.0; ny.pow(t as u32 + 1)]).collect();
    let mut nodes: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); horizon];
    enumerate_paths(spec, policy, horizon, DEFAULT_PATH_BUDGET, &mut |n| {
        let idx = y_index(n.ys, ny);
        py[n.t][idx] += n.prob;
        nodes[n.t].push((idx, n.prob, n.channel));
    })?;
    let cumulative: Vec<f64> = (0..horizon)
        .map(|t| {
            nodes[t]
                .iter()
                .map(|&(idx, p, c)| p * (c / py[t][idx]).log2())
                .sum::<f64>()
        })
        .collect();
    let per_step = (0..horizon)
        .map(|t| cumulative[t] - if t == 0 { 0.0 } else { cumulative[t - 1] })
        .collect();
    Ok(LeakageReport::new(per_step, Method::BruteForce))
}

/// Key `(x_t, s_t, y^t)` of a one-step marginal.
pub type MarginalKey = (usize, usize, Vec<usize>);

/// `P(X_t, S_t, Y^t)` for each step `t` (0-based; `y^t` includes `y_t`).
pub fn joint_marginals(spec: &SystemSpec, policy: &Policy, horizon: usize) -> Result<Vec<HashMap<MarginalKey, f64>>> {
    let mut out = vec![HashMap::new(); horizon];
    enumerate_paths(spec, policy, horizon, DEFAULT_PATH_BUDGET, &mut |n| {
        *out[n.t].entry((n.xs[n.t], n.ss[n.t], n.ys.to_vec())).or_insert(0.0) += n.prob;
    })?;
    Ok(out)
}

/// A `Q_B` policy stored as an explicit table over `(t, x, s, y^{t-1})`.
#[derive(Debug, Clone)]
pub struct MemoryTable {
    geometry: Geometry,
    rows: HashMap<(usize, usize, usize, Vec<usize>), Vec<f64>>,
}

impl MemoryTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl MemoryRule for MemoryTable {
    fn distribution(&self, t: usize, x: usize, s: usize, ys: &[usize]) -> Vec<f64> {
        if let Some(r) = self.rows.get(&(t, x, s, ys.to_vec())) {
            return r.clone();
        }
        // zero-probability conditioning event: any feasible row will do
        let r = self.geometry.feasible_range(s as i64 - x as i64);
        let p = 1.0 / r.len() as f64;
        (0..self.geometry.ny()).map(|y| if r.contains(&y) { p } else { 0.0 }).collect()
    }
}

/// Builds `q_b(y_t | x_t, s_t, y^{t-1}) = P^{q_a}(y_t | x_t, s_t, y^{t-1})`
/// from any policy `q_a`. The result induces the same `P(X_t, S_t, Y^t)` for
/// every `t` and leaks no more than `q_a`.
pub fn compress_history(spec: &SystemSpec, qa: &Policy, horizon: usize) -> Result<MemoryTable> {
    let g = spec.geometry();
    let ny = g.ny();
    let mut num: HashMap<(usize, usize, usize, Vec<usize>), Vec<f64>> = HashMap::new();
    enumerate_paths(spec, qa, horizon, DEFAULT_PATH_BUDGET, &mut |n| {
        let key = (n.t, n.xs[n.t], n.ss[n.t], n.ys[..n.t].to_vec());
        num.entry(key).or_insert_with(|| vec![0.0; ny])[n.ys[n.t]] += n.prob;
    })?;
    let rows = num
        .into_iter()
        .map(|(k, mut v)| {
            let sum: f64 = v.iter().sum();
            v.iter_mut().for_each(|p| *p /= sum);
            (k, v)
        })
        .collect();
    Ok(MemoryTable { geometry: g, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leakage::exact_leakage;
    use crate::policy::equiprobable_policy;

    #[test]
    fn brute_force_matches_exact_for_equiprobable() {
        let spec = SystemSpec::binary_uniform();
        let p = Policy::ConstantB(equiprobable_policy(spec.geometry()));
        for t in 1..=4 {
            let a = brute_force_leakage(&spec, &p, t).unwrap();
            let b = exact_leakage(&spec, &p, t).unwrap();
            assert!((a.total_rate - b.total_rate).abs() < 1e-12, "T={t}");
        }
    }

    #[test]
    fn compressing_a_qb_policy_is_identity() {
        let spec = SystemSpec::binary_uniform();
        let p = Policy::ConstantB(equiprobable_policy(spec.geometry()));
        let table = compress_history(&spec, &p, 3).unwrap();
        let q = Policy::memory(table);
        let m1 = joint_marginals(&spec, &p, 3).unwrap();
        let m2 = joint_marginals(&spec, &q, 3).unwrap();
        for t in 0..3 {
            for (k, v) in &m1[t] {
                assert!((m2[t][k] - v).abs() < 1e-15);
            }
        }
    }
}
