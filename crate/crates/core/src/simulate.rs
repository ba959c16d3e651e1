//! Sampling trajectories `(x^T, s^T, y^T)` from the law induced by a policy.

use crate::belief::{filter_joint, Belief};
use crate::error::{Error, Result};
use crate::model::SystemSpec;
use crate::policy::Policy;
use crate::rng::{sample_index, stream_rng};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// A sampled trajectory; entry `t` of each vector is the value at step `t`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub x: Vec<usize>,
    pub s: Vec<usize>,
    pub y: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TraceRow {
    t: usize,
    x: usize,
    s: usize,
    y: usize,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// CSV with header `t,x,s,y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for t in 0..self.len() {
            w.serialize(TraceRow {
                t,
                x: self.x[t],
                s: self.s[t],
                y: self.y[t],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut trace = Trace::default();
        for (i, row) in r.deserialize::<TraceRow>().enumerate() {
            let row = row?;
            if row.t != i {
                return Err(Error::Parse(format!("row {i} has t={}", row.t)));
            }
            trace.x.push(row.x);
            trace.s.push(row.s);
            trace.y.push(row.y);
        }
        Ok(trace)
    }

    /// Empirical law of the outputs over `{0..=my}`.
    pub fn output_histogram(&self, my: usize) -> Vec<usize> {
        let mut h = vec![0; my + 1];
        for &y in &self.y {
            h[y] += 1;
        }
        h
    }
}

fn checked_distribution(row: Vec<f64>, ny: usize, step: usize) -> Result<Vec<f64>> {
    if row.len() != ny {
        return Err(Error::Simulation {
            step,
            reason: format!("policy returned {} probabilities, expected {ny}", row.len()),
        });
    }
    let sum: f64 = row.iter().sum();
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Simulation {
            step,
            reason: "policy returned an invalid distribution".into(),
        });
    }
    Ok(row)
}

/// Samples a trajectory of length `horizon`. Deterministic given `seed`.
pub fn simulate(spec: &SystemSpec, policy: &Policy, horizon: usize, seed: u64) -> Result<Trace> {
    let g = spec.geometry();
    policy.check_compatible(g)?;
    let mut rng = stream_rng(seed, 0);
    let mut trace = Trace::default();
    if horizon == 0 {
        return Ok(trace);
    }
    let q = spec.transition();
    let tracks_belief = matches!(policy, Policy::Belief(_) | Policy::Difference(_));
    let mut pi = tracks_belief.then(|| {
        Belief::product_in(g, spec.initial_demand(), spec.initial_battery()).expect("spec marginals match geometry")
    });
    let mut x = sample_index(&mut rng, spec.initial_demand().probs());
    let mut s = sample_index(&mut rng, spec.initial_battery().probs());
    for t in 0..horizon {
        trace.x.push(x);
        trace.s.push(s);
        let (row, action) = match policy {
            Policy::History(rule) => (rule.distribution(t, &trace.x, &trace.s, &trace.y), None),
            Policy::MemoryCompressed(rule) => (rule.distribution(t, x, s, &trace.y), None),
            Policy::ConstantA(a) => (a.row(x, s).to_vec(), None),
            Policy::ConstantB(b) => (b.row(s as i64 - x as i64).to_vec(), None),
            Policy::Belief(_) | Policy::Difference(_) => {
                let a = policy
                    .action_at(t, &trace.y, pi.as_ref().unwrap())
                    .map_err(|e| Error::Simulation {
                        step: t,
                        reason: e.to_string(),
                    })?;
                (a.row(x, s).to_vec(), Some(a))
            }
        };
        let row = checked_distribution(row, g.ny(), t)?;
        let y = sample_index(&mut rng, &row);
        let next = spec.step(s, x, y).map_err(|e| Error::Simulation {
            step: t,
            reason: e.to_string(),
        })?;
        trace.y.push(y);
        if let (Some(p), Some(a)) = (pi.as_mut(), action.as_ref()) {
            *p = filter_joint(p, y, a, q)?;
        }
        s = next;
        x = sample_index(&mut rng, q.row(x));
    }
    Ok(trace)
}
