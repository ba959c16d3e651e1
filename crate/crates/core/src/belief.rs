//! Belief states and their Bayes updates.
//!
//! The joint belief `pi_t(x, s) = P(X_t = x, S_t = s | y^{t-1})` drives the
//! general (Markov demand) problem. For i.i.d. demand the law of
//! `W_t = S_t - X_t` given the past outputs is enough.

use crate::error::{Error, Result};
use crate::model::{Alphabet, Geometry, Pmf, TransitionMatrix};
use crate::policy::{ActionA, ActionB};

/// Tolerance on the total mass of a belief.
pub const BELIEF_TOL: f64 = 1e-10;

/// Joint belief over `X x S`, stored row-major by `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    geometry: Geometry,
    joint: Vec<f64>,
}

impl Belief {
    pub fn new(geometry: Geometry, joint: Vec<f64>) -> Result<Self> {
        if joint.len() != geometry.nx() * geometry.ns() {
            return Err(Error::Distribution(format!(
                "belief has {} entries, expected {}",
                joint.len(),
                geometry.nx() * geometry.ns()
            )));
        }
        if joint.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Distribution("belief entries must be non-negative".into()));
        }
        let sum: f64 = joint.iter().sum();
        if (sum - 1.0).abs() > BELIEF_TOL {
            return Err(Error::Distribution(format!("belief sums to {sum}")));
        }
        Ok(Self { geometry, joint })
    }

    pub(crate) fn from_raw(geometry: Geometry, joint: Vec<f64>) -> Self {
        Self { geometry, joint }
    }

    /// `pi(x, s) = P_X(x) theta(s)`.
    pub fn product(demand: &Pmf, theta: &Pmf) -> Result<Self> {
        let mx = demand.len() - 1;
        let ms = theta.len() - 1;
        Self::product_in(Geometry::new(mx, mx, ms)?, demand, theta)
    }

    /// Product belief for an explicit geometry (so `my` can exceed `mx`).
    pub fn product_in(geometry: Geometry, demand: &Pmf, theta: &Pmf) -> Result<Self> {
        if demand.len() != geometry.nx() || theta.len() != geometry.ns() {
            return Err(Error::Incompatible("marginals do not match the geometry".into()));
        }
        let joint = demand
            .probs()
            .iter()
            .flat_map(|&px| theta.probs().iter().map(move |&ps| px * ps))
            .collect();
        Ok(Self { geometry, joint })
    }

    pub fn uniform(geometry: Geometry) -> Self {
        let n = geometry.nx() * geometry.ns();
        Self {
            geometry,
            joint: vec![1.0 / n as f64; n],
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    #[inline]
    pub fn prob(&self, x: usize, s: usize) -> f64 {
        self.joint[x * self.geometry.ns() + s]
    }

    pub fn demand_marginal(&self) -> Vec<f64> {
        let ns = self.geometry.ns();
        self.joint.chunks(ns).map(|r| r.iter().sum()).collect()
    }

    pub fn battery_marginal(&self) -> Vec<f64> {
        let ns = self.geometry.ns();
        let mut out = vec![0.0; ns];
        for row in self.joint.chunks(ns) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }

    /// Law of `W = S - X` under this belief.
    pub fn difference(&self) -> XiBelief {
        let g = self.geometry;
        let mut xi = vec![0.0; g.nw()];
        for x in 0..g.nx() {
            for s in 0..g.ns() {
                xi[g.w_index(s as i64 - x as i64)] += self.prob(x, s);
            }
        }
        XiBelief::from_raw(g, xi)
    }

    pub fn entropy(&self) -> f64 {
        crate::info::entropy(&self.joint)
    }
}

/// Belief over `W = S - X`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiBelief {
    geometry: Geometry,
    xi: Vec<f64>,
}

impl XiBelief {
    pub fn new(geometry: Geometry, xi: Vec<f64>) -> Result<Self> {
        let pmf = Pmf::new(geometry.w_alphabet(), xi)?;
        Ok(Self {
            geometry,
            xi: pmf.into_probs(),
        })
    }

    pub(crate) fn from_raw(geometry: Geometry, xi: Vec<f64>) -> Self {
        Self { geometry, xi }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn probs(&self) -> &[f64] {
        &self.xi
    }

    pub fn prob(&self, w: i64) -> f64 {
        self.geometry.w_alphabet().index_of(w).map_or(0.0, |i| self.xi[i])
    }

    pub fn to_pmf(&self) -> Pmf {
        Pmf::from_weights(self.geometry.w_alphabet(), self.xi.clone()).expect("belief mass is positive")
    }

    pub fn entropy(&self) -> f64 {
        crate::info::entropy(&self.xi)
    }

    pub fn with_geometry(mut self, geometry: Geometry) -> Result<Self> {
        if geometry.w_alphabet() != self.geometry.w_alphabet() {
            return Err(Error::Incompatible("difference alphabets differ".into()));
        }
        self.geometry = geometry;
        Ok(self)
    }
}

fn normalize(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p /= sum);
}

/// Joint filter: `pi'(x', s') ∝ sum_x Q(x'|x) a(y | x, s' - x + y) pi(x, s' - x + y)`.
pub fn filter_joint(pi: &Belief, y: usize, a: &ActionA, q: &TransitionMatrix) -> Result<Belief> {
    let g = pi.geometry();
    if a.geometry() != g || q.alphabet() != Alphabet::upto(g.mx)? {
        return Err(Error::Incompatible("belief, action and transition matrix disagree on alphabets".into()));
    }
    if y > g.my {
        return Err(Error::Domain {
            name: "Y",
            value: y as i64,
            lo: 0,
            hi: g.my as i64,
        });
    }
    let (nx, ns) = (g.nx(), g.ns());
    let denom: f64 = (0..nx)
        .flat_map(|x| (0..ns).map(move |s| (x, s)))
        .map(|(x, s)| a.prob(y, x, s) * pi.prob(x, s))
        .sum();
    if denom <= 0.0 {
        return Err(Error::NullObservation { y });
    }
    let mut next = vec![0.0; nx * ns];
    for x in 0..nx {
        let qrow = q.row(x);
        for s in 0..ns {
            let m = a.prob(y, x, s) * pi.prob(x, s);
            if m == 0.0 {
                continue;
            }
            let sn = s + y - x;
            for (xn, &qv) in qrow.iter().enumerate() {
                next[xn * ns + sn] += qv * m;
            }
        }
    }
    normalize(&mut next);
    Ok(Belief::from_raw(g, next))
}

/// Difference filter: `xi'(w') ∝ sum_{w,x} P_X(x) 1{w' = y + w - x} b(y|w) xi(w)`.
pub fn xi_update(xi: &XiBelief, y: usize, b: &ActionB, demand: &Pmf) -> Result<XiBelief> {
    let g = xi.geometry();
    if b.geometry().w_alphabet() != g.w_alphabet() || demand.len() != g.nx() {
        return Err(Error::Incompatible("belief, action and demand law disagree on alphabets".into()));
    }
    let bg = b.geometry();
    if y > bg.my {
        return Err(Error::Domain {
            name: "Y",
            value: y as i64,
            lo: 0,
            hi: bg.my as i64,
        });
    }
    let nw = g.nw();
    let ny = bg.ny();
    let bt = b.table();
    let denom: f64 = (0..nw).map(|wi| bt[wi * ny + y] * xi.xi[wi]).sum();
    if denom <= 0.0 {
        return Err(Error::NullObservation { y });
    }
    let mut next = vec![0.0; nw];
    for wi in 0..nw {
        let m = bt[wi * ny + y] * xi.xi[wi];
        if m == 0.0 {
            continue;
        }
        // battery level after the output: s' = w + y
        let s_next = g.w_value(wi) + y as i64;
        for (x, &px) in demand.probs().iter().enumerate() {
            next[g.w_index(s_next - x as i64)] += px * m;
        }
    }
    normalize(&mut next);
    Ok(XiBelief::from_raw(g, next))
}

/// Law of `S - X` for independent `S ~ theta`, `X ~ P_X`.
pub fn theta_to_xi(theta: &Pmf, demand: &Pmf) -> Result<XiBelief> {
    let mx = demand.len() - 1;
    let ms = theta.len() - 1;
    let g = Geometry::new(mx, mx, ms)?;
    let mut xi = vec![0.0; g.nw()];
    for (s, &ps) in theta.probs().iter().enumerate() {
        for (x, &px) in demand.probs().iter().enumerate() {
            xi[g.w_index(s as i64 - x as i64)] += ps * px;
        }
    }
    normalize(&mut xi);
    Ok(XiBelief::from_raw(g, xi))
}
