//! One-step belief dynamics shared by the joint and difference filters.
//!
//! Both filters have the form `n_y(j) = sum_i p(i) a(y | i) K_y(i, j)`,
//! where `i` ranges over hidden states and `n_y / P(y)` is the next belief.

use crate::info::neg_plogp;
use crate::model::{Pmf, SystemSpec};
use std::ops::Range;

/// Hidden-state dynamics: feasible outputs per state and the sparse kernel
/// `K_y(i, .)` per `(state, output)` pair.
#[derive(Debug, Clone)]
pub struct BeliefKernel {
    n_states: usize,
    ny: usize,
    feasible: Vec<Range<usize>>,
    next: Vec<Vec<(usize, f64)>>,
}

impl BeliefKernel {
    /// States `(x, s)` with index `x * ns + s`.
    pub fn joint(spec: &SystemSpec) -> Self {
        let g = spec.geometry();
        let (nx, ns, ny) = (g.nx(), g.ns(), g.ny());
        let q = spec.transition();
        let mut feasible = Vec::with_capacity(nx * ns);
        let mut next = Vec::with_capacity(nx * ns * ny);
        for x in 0..nx {
            for s in 0..ns {
                let w = s as i64 - x as i64;
                let r = g.feasible_range(w);
                for y in 0..ny {
                    let mut row = Vec::new();
                    if r.contains(&y) {
                        let s2 = (w + y as i64) as usize;
                        for (x2, &p) in q.row(x).iter().enumerate() {
                            if p > 0.0 {
                                row.push((x2 * ns + s2, p));
                            }
                        }
                    }
                    next.push(row);
                }
                feasible.push(r);
            }
        }
        Self {
            n_states: nx * ns,
            ny,
            feasible,
            next,
        }
    }

    /// States `w = s - x` with index `w + mx`, for i.i.d. demand `px`.
    pub fn difference(spec: &SystemSpec, px: &Pmf) -> Self {
        let g = spec.geometry();
        let (nw, ny) = (g.nw(), g.ny());
        let mut feasible = Vec::with_capacity(nw);
        let mut next = Vec::with_capacity(nw * ny);
        for wi in 0..nw {
            let w = g.w_value(wi);
            let r = g.feasible_range(w);
            for y in 0..ny {
                let mut row = Vec::new();
                if r.contains(&y) {
                    let s2 = w + y as i64;
                    for (x, &p) in px.probs().iter().enumerate() {
                        if p > 0.0 {
                            row.push((g.w_index(s2 - x as i64), p));
                        }
                    }
                }
                next.push(row);
            }
            feasible.push(r);
        }
        Self {
            n_states: nw,
            ny,
            feasible,
            next,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn feasible(&self, i: usize) -> Range<usize> {
        self.feasible[i].clone()
    }

    pub fn successors(&self, i: usize, y: usize) -> &[(usize, f64)] {
        &self.next[i * self.ny + y]
    }

    /// Output law `q_y = sum_i p(i) a(y | i)` and unnormalized next beliefs.
    pub fn propagate(&self, p: &[f64], action: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let ny = self.ny;
        let mut q = vec![0.0; ny];
        let mut n = vec![vec![0.0; self.n_states]; ny];
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for y in self.feasible[i].clone() {
                let m = pi * action[i * ny + y];
                if m == 0.0 {
                    continue;
                }
                q[y] += m;
                for &(j, k) in self.successors(i, y) {
                    n[y][j] += m * k;
                }
            }
        }
        (q, n)
    }

    /// `I(state; Y)` in bits under belief `p` and action `a`.
    pub fn mutual_information(&self, p: &[f64], action: &[f64], q: &[f64]) -> f64 {
        let ny = self.ny;
        let hy: f64 = q.iter().map(|&v| neg_plogp(v)).sum();
        let mut hyx = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for y in self.feasible[i].clone() {
                hyx += pi * neg_plogp(action[i * ny + y]);
            }
        }
        hy - hyx
    }
}
