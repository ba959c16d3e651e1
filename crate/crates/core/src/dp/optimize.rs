//! Minimization of the one-step objective
//! `I(state; Y) + sum_y P(y) V(phi(p, y, a))` over the action `a`.
//!
//! The mutual-information term is convex in `a` for fixed `p`, while the
//! continuation term is concave (a perspective of a concave `V`), so the
//! problem is non-convex in general. We run projected gradient descent from
//! several starting points and keep the best stationary point.

use super::grid::SimplexGrid;
use super::kernel::BeliefKernel;
use crate::iidopt::random_interior;
use crate::rng::stream_rng;
use rand::Rng;

/// Interpolated continuation value on a simplex grid.
#[derive(Debug, Clone, Copy)]
pub struct Continuation<'a> {
    pub grid: &'a SimplexGrid,
    pub values: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptions {
    /// Target for the gradient-mapping norm (per row, sup norm).
    pub tol: f64,
    pub max_iters: usize,
    /// Random starts in addition to the equiprobable one.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 400,
            restarts: 3,
            seed: 0x5eed,
        }
    }
}

/// Best action found for one belief point.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub value: f64,
    /// Row-major `n_states x ny` table; rows of zero-probability states are
    /// equiprobable over their feasible outputs.
    pub action: Vec<f64>,
    pub stationarity: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub(crate) struct Stage<'a> {
    pub kernel: &'a BeliefKernel,
    pub cont: Option<Continuation<'a>>,
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            tau = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - tau).max(0.0));
}

impl Stage<'_> {
    /// Objective value and, if requested, its gradient in `a`.
    pub fn evaluate(&self, p: &[f64], a: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
        let k = self.kernel;
        let ny = k.ny();
        let (q, n) = k.propagate(p, a);
        let mut value = k.mutual_information(p, a, &q);
        let mut slopes: Vec<Option<Vec<f64>>> = vec![None; ny];
        if let Some(c) = self.cont {
            for y in 0..ny {
                if q[y] <= 0.0 {
                    continue;
                }
                let z: Vec<f64> = n[y].iter().map(|v| v / q[y]).collect();
                if want_grad {
                    let (v, g) = c.grid.interpolate_with_gradient(c.values, &z);
                    value += q[y] * v;
                    slopes[y] = Some(g);
                } else {
                    value += q[y] * c.grid.interpolate(c.values, &z);
                }
            }
        }
        if !want_grad {
            return (value, None);
        }
        let mut grad = vec![0.0; a.len()];
        for y in 0..ny {
            // slope at an output no state currently emits: use the belief
            // reached if every active state emitted it
            if q[y] <= 0.0 {
                if let Some(c) = self.cont {
                    let mut z = vec![0.0; k.n_states()];
                    let mut tot = 0.0;
                    for (i, &pi) in p.iter().enumerate() {
                        if pi > 0.0 && k.feasible(i).contains(&y) {
                            for &(j, kk) in k.successors(i, y) {
                                z[j] += pi * kk;
                                tot += pi * kk;
                            }
                        }
                    }
                    if tot > 0.0 {
                        z.iter_mut().for_each(|v| *v /= tot);
                        slopes[y] = Some(c.grid.interpolate_with_gradient(c.values, &z).1);
                    }
                }
            }
        }
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for y in k.feasible(i) {
                let ai = a[i * ny + y];
                let info = if q[y] > 0.0 && ai > 0.0 {
                    pi * (ai / q[y]).log2()
                } else if q[y] > 0.0 {
                    pi * (f64::MIN_POSITIVE / q[y]).log2()
                } else {
                    -pi * pi.log2()
                };
                let cont = match &slopes[y] {
                    Some(g) => pi * k.successors(i, y).iter().map(|&(j, kk)| kk * g[j]).sum::<f64>(),
                    None => 0.0,
                };
                grad[i * ny + y] = info + cont;
            }
        }
        (value, Some(grad))
    }

    fn equiprobable(&self) -> Vec<f64> {
        let k = self.kernel;
        let ny = k.ny();
        let mut a = vec![0.0; k.n_states() * ny];
        for i in 0..k.n_states() {
            let r = k.feasible(i);
            let w = 1.0 / r.len() as f64;
            for y in r {
                a[i * ny + y] = w;
            }
        }
        a
    }

    fn random_start<R: Rng>(&self, rng: &mut R, p: &[f64]) -> Vec<f64> {
        let mut a = self.equiprobable();
        let ny = self.kernel.ny();
        for (i, &pi) in p.iter().enumerate() {
            let r = self.kernel.feasible(i);
            if pi == 0.0 || r.len() < 2 {
                continue;
            }
            let row = random_interior(rng, r.len());
            for (y, v) in r.zip(row) {
                a[i * ny + y] = v;
            }
        }
        a
    }

    /// Projected step `P(a - t d)` on every active row with a choice.
    fn step(&self, p: &[f64], a: &[f64], d: &[f64], t: f64) -> Vec<f64> {
        let ny = self.kernel.ny();
        let mut out = a.to_vec();
        for (i, &pi) in p.iter().enumerate() {
            let r = self.kernel.feasible(i);
            if pi == 0.0 || r.len() < 2 {
                continue;
            }
            let (lo, hi) = (i * ny + r.start, i * ny + r.end);
            for j in lo..hi {
                out[j] = a[j] - t * d[j];
            }
            project_simplex(&mut out[lo..hi]);
        }
        out
    }

    fn descend(&self, p: &[f64], mut a: Vec<f64>, opts: &InnerOptions) -> InnerSolution {
        let ny = self.kernel.ny();
        let (mut f, g) = self.evaluate(p, &a, true);
        let mut g = g.unwrap();
        let mut t: f64 = 1.0;
        let mut stationarity = f64::INFINITY;
        let mut iterations = 0;
        for it in 0..opts.max_iters {
            iterations = it + 1;
            // row-scaled direction: a diagonal preconditioner that keeps the
            // projection separable
            let d: Vec<f64> = g
                .iter()
                .enumerate()
                .map(|(j, gj)| {
                    let pi = p[j / ny];
                    if pi > 0.0 {
                        gj / pi
                    } else {
                        0.0
                    }
                })
                .collect();
            let unit = self.step(p, &a, &d, 1.0);
            stationarity = unit.iter().zip(&a).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            if stationarity < opts.tol {
                return InnerSolution {
                    value: f,
                    action: a,
                    stationarity,
                    converged: true,
                    iterations,
                };
            }
            let mut accepted = false;
            t = (t * 2.0).min(1e3);
            while t > 1e-14 {
                let cand = self.step(p, &a, &d, t);
                let dec: f64 = g.iter().zip(cand.iter().zip(&a)).map(|(gj, (c, o))| gj * (c - o)).sum();
                let (fc, _) = self.evaluate(p, &cand, false);
                if fc <= f + 1e-4 * dec && dec <= 0.0 {
                    a = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            g = self.evaluate(p, &a, true).1.unwrap();
        }
        InnerSolution {
            value: f,
            action: a,
            stationarity,
            converged: stationarity < opts.tol,
            iterations,
        }
    }

    /// Best of the equiprobable start, an optional warm start and
    /// `opts.restarts` random starts.
    pub fn solve(&self, p: &[f64], warm: Option<&[f64]>, opts: &InnerOptions, stream: u64) -> InnerSolution {
        let mut starts = vec![self.equiprobable()];
        if let Some(w) = warm {
            starts.push(w.to_vec());
        }
        let mut rng = stream_rng(opts.seed, stream);
        for _ in 0..opts.restarts {
            starts.push(self.random_start(&mut rng, p));
        }
        let mut best: Option<InnerSolution> = None;
        for s in starts {
            let sol = self.descend(p, s, opts);
            let better = match &best {
                None => true,
                Some(b) => sol.value < b.value - 1e-12 || (sol.value <= b.value + 1e-12 && sol.converged && !b.converged),
            };
            if better {
                best = Some(sol);
            }
        }
        let mut best = best.unwrap();
        // tidy rows that carry no probability
        let ny = self.kernel.ny();
        let eq = self.equiprobable();
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                best.action[i * ny..(i + 1) * ny].copy_from_slice(&eq[i * ny..(i + 1) * ny]);
            }
        }
        best
    }
}
