//! Independent oracles shared by the integration tests. Nothing here calls
//! the filters or leakage routines under test.
#![allow(dead_code)]

use battery_privacy::policy::{HistoryRule, MemoryRule};
use battery_privacy::rng::{derive_seed, stream_rng};
use battery_privacy::Geometry;
use rand::Rng;
use std::collections::HashMap;

pub fn entropy_bits(p: impl IntoIterator<Item = f64>) -> f64 {
    p.into_iter().filter(|&v| v > 0.0).map(|v| -v * v.log2()).sum()
}

/// `H(S - X) - H(S)` by direct convolution.
pub fn difference_information(theta: &[f64], px: &[f64]) -> f64 {
    let mx = px.len() - 1;
    let mut w = vec![0.0; theta.len() + mx];
    for (s, &a) in theta.iter().enumerate() {
        for (x, &b) in px.iter().enumerate() {
            w[s + mx - x] += a * b;
        }
    }
    entropy_bits(w) - entropy_bits(theta.iter().copied())
}

/// `row(t, xs, ss, ys)`.
pub type RowFn<'a> = dyn Fn(usize, &[usize], &[usize], &[usize]) -> Vec<f64> + 'a;

/// `(1/T) I(X^T, S_1; Y^T)` for i.i.d. demand, from the full joint law of
/// `(S_1, X^T, Y^T)`. `row(t, xs, ss, ys)` gives `P(y_t | ...)` where `xs`
/// and `ss` include step `t` and `ys` holds the past outputs.
pub fn enumerated_rate(
    g: Geometry,
    px: &[f64],
    theta: &[f64],
    horizon: usize,
    row: &RowFn<'_>,
) -> f64 {
    let mut joint: HashMap<(Vec<usize>, Vec<usize>), f64> = HashMap::new();
    #[allow(clippy::too_many_arguments)]
    fn walk(
        g: Geometry,
        px: &[f64],
        horizon: usize,
        row: &RowFn<'_>,
        xs: &mut Vec<usize>,
        ss: &mut Vec<usize>,
        ys: &mut Vec<usize>,
        p: f64,
        out: &mut HashMap<(Vec<usize>, Vec<usize>), f64>,
    ) {
        let t = ys.len();
        if t == horizon {
            let mut key = vec![ss[0]];
            key.extend(xs.iter());
            *out.entry((key, ys.clone())).or_insert(0.0) += p;
            return;
        }
        let s = ss[t];
        for (x, &pxv) in px.iter().enumerate() {
            if pxv == 0.0 {
                continue;
            }
            xs.push(x);
            let r = row(t, xs, ss, ys);
            for (y, &q) in r.iter().enumerate() {
                if q == 0.0 {
                    continue;
                }
                let next = s as i64 + y as i64 - x as i64;
                assert!(next >= 0 && next <= g.ms as i64, "oracle: infeasible output");
                ss.push(next as usize);
                ys.push(y);
                walk(g, px, horizon, row, xs, ss, ys, p * pxv * q, out);
                ys.pop();
                ss.pop();
            }
            xs.pop();
        }
    }
    for (s, &p) in theta.iter().enumerate() {
        if p > 0.0 {
            walk(g, px, horizon, row, &mut Vec::new(), &mut vec![s], &mut Vec::new(), p, &mut joint);
        }
    }
    let mut py: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut pa: HashMap<Vec<usize>, f64> = HashMap::new();
    for ((a, y), &p) in &joint {
        *py.entry(y.clone()).or_insert(0.0) += p;
        *pa.entry(a.clone()).or_insert(0.0) += p;
    }
    let mi = entropy_bits(py.values().copied()) + entropy_bits(pa.values().copied()) - entropy_bits(joint.values().copied());
    mi / horizon as f64
}

/// Random row supported on the feasible outputs for `w = s - x`.
pub fn random_row<R: Rng>(g: Geometry, w: i64, rng: &mut R) -> Vec<f64> {
    let range = g.feasible_range(w);
    let mut row = vec![0.0; g.ny()];
    for y in range.clone() {
        row[y] = rng.random::<f64>() + 0.05;
    }
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= sum);
    row
}

fn history_seed(seed: u64, t: usize, parts: &[&[usize]]) -> u64 {
    let mut labels = vec![t as u64];
    for p in parts {
        labels.push(u64::MAX);
        labels.extend(p.iter().map(|&v| v as u64));
    }
    derive_seed(seed, &labels)
}

/// A random `Q_B` rule: each `(t, x, s, y^{t-1})` gets its own seeded row.
#[derive(Debug, Clone, Copy)]
pub struct RandomMemoryRule {
    pub geometry: Geometry,
    pub seed: u64,
}

impl RandomMemoryRule {
    pub fn row(&self, t: usize, x: usize, s: usize, ys: &[usize]) -> Vec<f64> {
        let mut rng = stream_rng(history_seed(self.seed, t, &[&[x, s], ys]), 1);
        random_row(self.geometry, s as i64 - x as i64, &mut rng)
    }
}

impl MemoryRule for RandomMemoryRule {
    fn distribution(&self, t: usize, x: usize, s: usize, ys: &[usize]) -> Vec<f64> {
        self.row(t, x, s, ys)
    }
}

/// A random `Q_A` rule that depends on the whole history.
#[derive(Debug, Clone, Copy)]
pub struct RandomHistoryRule {
    pub geometry: Geometry,
    pub seed: u64,
}

impl RandomHistoryRule {
    pub fn row(&self, t: usize, xs: &[usize], ss: &[usize], ys: &[usize]) -> Vec<f64> {
        let mut rng = stream_rng(history_seed(self.seed, t, &[&xs[..=t], &ss[..=t], &ys[..t]]), 2);
        random_row(self.geometry, ss[t] as i64 - xs[t] as i64, &mut rng)
    }
}

impl HistoryRule for RandomHistoryRule {
    fn distribution(&self, t: usize, xs: &[usize], ss: &[usize], ys: &[usize]) -> Vec<f64> {
        self.row(t, xs, ss, ys)
    }
}

/// `log2 |W|`, the slack in `L_T >= J* - log2|W| / T`.
pub fn transient_slack(g: Geometry) -> f64 {
    (g.nw() as f64).log2()
}
