//! Charging policies.
//!
//! Two dense action tables carry most of the work:
//!
//! * [`ActionA`]: `a(y | x, s)`, a kernel from the current demand and battery
//!   level to the grid consumption.
//! * [`ActionB`]: `b(y | w)` with `w = s - x`, a kernel that only looks at the
//!   difference between battery level and demand.
//!
//! [`Policy`] wraps the full taxonomy, from history-dependent callbacks down
//! to a single time-homogeneous `b`.

use crate::belief::{theta_to_xi, Belief, XiBelief};
use crate::error::{Error, Result};
use crate::model::{Geometry, Pmf};
use std::fmt;
use std::sync::Arc;

/// Row-sum tolerance for action tables.
pub const ACTION_TOL: f64 = 1e-9;

fn check_row(row: &[f64], feasible: std::ops::Range<usize>, what: impl Fn() -> String) -> Result<()> {
    let mut sum = 0.0;
    for (y, &p) in row.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::Policy(format!("{}: entry {p} for y={y} is not a probability", what())));
        }
        if p > 0.0 && !feasible.contains(&y) {
            return Err(Error::Policy(format!("{}: mass {p} on infeasible y={y}", what())));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ACTION_TOL {
        return Err(Error::Policy(format!("{}: row sums to {sum}", what())));
    }
    Ok(())
}

/// Kernel `a(y | x, s)`, stored row-major by `(x, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionA {
    geometry: Geometry,
    table: Vec<f64>,
}

impl ActionA {
    pub fn new(geometry: Geometry, table: Vec<f64>) -> Result<Self> {
        let (nx, ns, ny) = (geometry.nx(), geometry.ns(), geometry.ny());
        if table.len() != nx * ns * ny {
            return Err(Error::Policy(format!(
                "action table has {} entries, expected {}",
                table.len(),
                nx * ns * ny
            )));
        }
        for x in 0..nx {
            for s in 0..ns {
                let row = &table[(x * ns + s) * ny..(x * ns + s + 1) * ny];
                let w = s as i64 - x as i64;
                check_row(row, geometry.feasible_range(w), || format!("a(.|x={x},s={s})"))?;
            }
        }
        Ok(Self { geometry, table })
    }

    /// Builds a table from a function of `(x, s, y)`, then validates it.
    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut table = Vec::with_capacity(geometry.nx() * geometry.ns() * geometry.ny());
        for x in 0..geometry.nx() {
            for s in 0..geometry.ns() {
                for y in 0..geometry.ny() {
                    table.push(f(x, s, y));
                }
            }
        }
        Self::new(geometry, table)
    }

    /// `y = x`: the battery is never used.
    pub fn passthrough(geometry: Geometry) -> Self {
        Self::from_fn(geometry, |x, _, y| if x == y { 1.0 } else { 0.0 }).expect("y = x is always feasible")
    }

    pub(crate) fn from_raw(geometry: Geometry, table: Vec<f64>) -> Self {
        debug_assert_eq!(table.len(), geometry.nx() * geometry.ns() * geometry.ny());
        Self { geometry, table }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    #[inline]
    pub fn prob(&self, y: usize, x: usize, s: usize) -> f64 {
        self.table[(x * self.geometry.ns() + s) * self.geometry.ny() + y]
    }

    pub fn row(&self, x: usize, s: usize) -> &[f64] {
        let ny = self.geometry.ny();
        let i = x * self.geometry.ns() + s;
        &self.table[i * ny..(i + 1) * ny]
    }
}

/// Kernel `b(y | w)`, stored row-major by `w` (index `w + mx`).
#[derive(Debug, Clone, PartialEq)]
pub struct ActionB {
    geometry: Geometry,
    table: Vec<f64>,
    unreachable: Vec<bool>,
}

impl ActionB {
    pub fn new(geometry: Geometry, table: Vec<f64>) -> Result<Self> {
        let (nw, ny) = (geometry.nw(), geometry.ny());
        if table.len() != nw * ny {
            return Err(Error::Policy(format!(
                "action table has {} entries, expected {}",
                table.len(),
                nw * ny
            )));
        }
        for wi in 0..nw {
            let w = geometry.w_value(wi);
            check_row(&table[wi * ny..(wi + 1) * ny], geometry.feasible_range(w), || format!("b(.|w={w})"))?;
        }
        Ok(Self {
            geometry,
            table,
            unreachable: vec![false; nw],
        })
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(i64, usize) -> f64) -> Result<Self> {
        let mut table = Vec::with_capacity(geometry.nw() * geometry.ny());
        for wi in 0..geometry.nw() {
            for y in 0..geometry.ny() {
                table.push(f(geometry.w_value(wi), y));
            }
        }
        Self::new(geometry, table)
    }

    pub(crate) fn from_raw(geometry: Geometry, table: Vec<f64>, unreachable: Vec<bool>) -> Self {
        debug_assert_eq!(table.len(), geometry.nw() * geometry.ny());
        Self {
            geometry,
            table,
            unreachable,
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    #[inline]
    pub fn prob(&self, y: usize, w: i64) -> f64 {
        self.table[self.geometry.w_index(w) * self.geometry.ny() + y]
    }

    pub fn row(&self, w: i64) -> &[f64] {
        let ny = self.geometry.ny();
        let i = self.geometry.w_index(w);
        &self.table[i * ny..(i + 1) * ny]
    }

    /// Rows whose conditioning event had zero probability when the table was
    /// built; they hold the deterministic smallest feasible output.
    pub fn unreachable(&self) -> &[bool] {
        &self.unreachable
    }

    pub fn is_deterministic(&self) -> bool {
        self.table.iter().all(|&p| p == 0.0 || p == 1.0)
    }
}

fn smallest_feasible_row(geometry: Geometry, w: i64) -> Vec<f64> {
    let mut row = vec![0.0; geometry.ny()];
    row[geometry.feasible_range(w).start] = 1.0;
    row
}

/// The structured policy `b(y | w) = P_X(y) theta(y + w) / xi(w)`.
///
/// Support is `X` intersected with the feasible outputs of `w`. Rows with
/// `xi(w) = 0` are marked unreachable and filled with the smallest feasible
/// output.
pub fn structured_policy(geometry: Geometry, theta: &Pmf, demand: &Pmf) -> Result<ActionB> {
    if theta.len() != geometry.ns() || demand.len() != geometry.nx() {
        return Err(Error::Incompatible(format!(
            "theta has {} entries and demand {} entries; geometry wants {} and {}",
            theta.len(),
            demand.len(),
            geometry.ns(),
            geometry.nx()
        )));
    }
    let xi = theta_to_xi(theta, demand)?;
    let (nw, ny) = (geometry.nw(), geometry.ny());
    let mut table = vec![0.0; nw * ny];
    let mut unreachable = vec![false; nw];
    let th = theta.probs();
    let px = demand.probs();
    for wi in 0..nw {
        let w = geometry.w_value(wi);
        let row = &mut table[wi * ny..(wi + 1) * ny];
        let mut total = 0.0;
        for y in geometry.feasible_range(w).filter(|&y| y <= geometry.mx) {
            let v = px[y] * th[(y as i64 + w) as usize];
            row[y] = v;
            total += v;
        }
        // total equals xi(w) up to rounding; normalizing by it keeps rows exact.
        if xi.probs()[wi] > 0.0 && total > 0.0 {
            row.iter_mut().for_each(|p| *p /= total);
        } else {
            unreachable[wi] = true;
            row.copy_from_slice(&smallest_feasible_row(geometry, w));
        }
    }
    Ok(ActionB::from_raw(geometry, table, unreachable))
}

/// Uniform over the feasible outputs of each `w`.
pub fn equiprobable_policy(geometry: Geometry) -> ActionB {
    let (nw, ny) = (geometry.nw(), geometry.ny());
    let mut table = vec![0.0; nw * ny];
    for wi in 0..nw {
        let r = geometry.feasible_range(geometry.w_value(wi));
        let p = 1.0 / r.len() as f64;
        for y in r {
            table[wi * ny + y] = p;
        }
    }
    ActionB::from_raw(geometry, table, vec![false; nw])
}

/// `a(y | x, s) = b(y | s - x)`.
pub fn lift_to_action_a(b: &ActionB) -> ActionA {
    let g = b.geometry();
    let (nx, ns, ny) = (g.nx(), g.ns(), g.ny());
    let mut table = Vec::with_capacity(nx * ns * ny);
    for x in 0..nx {
        for s in 0..ns {
            table.extend_from_slice(b.row(s as i64 - x as i64));
        }
    }
    ActionA::from_raw(g, table)
}

/// `b(y | w) = sum_{s - x = w} a(y | x, s) pi(x, s) / xi(w)` where `xi` is the
/// law of `S - X` under `pi`.
pub fn project_to_b(a: &ActionA, pi: &Belief) -> Result<ActionB> {
    let g = a.geometry();
    if pi.geometry() != g {
        return Err(Error::Incompatible("belief and action have different alphabets".into()));
    }
    let (nw, ny) = (g.nw(), g.ny());
    let mut table = vec![0.0; nw * ny];
    let mut mass = vec![0.0; nw];
    for x in 0..g.nx() {
        for s in 0..g.ns() {
            let p = pi.prob(x, s);
            if p == 0.0 {
                continue;
            }
            let wi = g.w_index(s as i64 - x as i64);
            mass[wi] += p;
            for (t, &av) in table[wi * ny..(wi + 1) * ny].iter_mut().zip(a.row(x, s)) {
                *t += p * av;
            }
        }
    }
    let mut unreachable = vec![false; nw];
    for wi in 0..nw {
        let row = &mut table[wi * ny..(wi + 1) * ny];
        if mass[wi] > 0.0 {
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
        } else {
            unreachable[wi] = true;
            row.copy_from_slice(&smallest_feasible_row(g, g.w_value(wi)));
        }
    }
    Ok(ActionB::from_raw(g, table, unreachable))
}

/// A full-history rule `q_t(y | x^t, s^t, y^{t-1})`. Histories are 0-based:
/// at step `t` the slices `xs`, `ss` hold `t + 1` entries and `ys` holds `t`.
pub trait HistoryRule: Send + Sync {
    fn distribution(&self, t: usize, xs: &[usize], ss: &[usize], ys: &[usize]) -> Vec<f64>;
}

/// A rule `q_t(y | x_t, s_t, y^{t-1})`.
pub trait MemoryRule: Send + Sync {
    fn distribution(&self, t: usize, x: usize, s: usize, ys: &[usize]) -> Vec<f64>;
}

/// A rule `a_t = f_t(pi_t)` acting on the joint belief.
pub trait BeliefRule: Send + Sync {
    fn action(&self, t: usize, pi: &Belief) -> Result<ActionA>;
}

/// A rule `b_t = g_t(xi_t)` acting on the difference belief.
pub trait DifferenceRule: Send + Sync {
    fn action(&self, t: usize, xi: &XiBelief) -> Result<ActionB>;
}

impl<F> HistoryRule for F
where
    F: Fn(usize, &[usize], &[usize], &[usize]) -> Vec<f64> + Send + Sync,
{
    fn distribution(&self, t: usize, xs: &[usize], ss: &[usize], ys: &[usize]) -> Vec<f64> {
        self(t, xs, ss, ys)
    }
}

impl<F> MemoryRule for F
where
    F: Fn(usize, usize, usize, &[usize]) -> Vec<f64> + Send + Sync,
{
    fn distribution(&self, t: usize, x: usize, s: usize, ys: &[usize]) -> Vec<f64> {
        self(t, x, s, ys)
    }
}

impl<F> BeliefRule for F
where
    F: Fn(usize, &Belief) -> Result<ActionA> + Send + Sync,
{
    fn action(&self, t: usize, pi: &Belief) -> Result<ActionA> {
        self(t, pi)
    }
}

impl<F> DifferenceRule for F
where
    F: Fn(usize, &XiBelief) -> Result<ActionB> + Send + Sync,
{
    fn action(&self, t: usize, xi: &XiBelief) -> Result<ActionB> {
        self(t, xi)
    }
}

/// Policy classes: full history (`Q_A`) or current state plus past outputs (`Q_B`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyClass {
    QA,
    QB,
}

#[derive(Clone)]
pub enum Policy {
    History(Arc<dyn HistoryRule>),
    MemoryCompressed(Arc<dyn MemoryRule>),
    Belief(Arc<dyn BeliefRule>),
    Difference(Arc<dyn DifferenceRule>),
    /// Time-homogeneous memoryless `a(y | x, s)`.
    ConstantA(ActionA),
    /// Time-homogeneous memoryless `b(y | w)`.
    ConstantB(ActionB),
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::History(_) => f.write_str("Policy::History(..)"),
            Policy::MemoryCompressed(_) => f.write_str("Policy::MemoryCompressed(..)"),
            Policy::Belief(_) => f.write_str("Policy::Belief(..)"),
            Policy::Difference(_) => f.write_str("Policy::Difference(..)"),
            Policy::ConstantA(a) => f.debug_tuple("Policy::ConstantA").field(a).finish(),
            Policy::ConstantB(b) => f.debug_tuple("Policy::ConstantB").field(b).finish(),
        }
    }
}

impl Policy {
    pub fn history(rule: impl HistoryRule + 'static) -> Self {
        Policy::History(Arc::new(rule))
    }

    pub fn memory(rule: impl MemoryRule + 'static) -> Self {
        Policy::MemoryCompressed(Arc::new(rule))
    }

    pub fn belief(rule: impl BeliefRule + 'static) -> Self {
        Policy::Belief(Arc::new(rule))
    }

    pub fn difference(rule: impl DifferenceRule + 'static) -> Self {
        Policy::Difference(Arc::new(rule))
    }

    pub fn class(&self) -> PolicyClass {
        match self {
            Policy::History(_) => PolicyClass::QA,
            _ => PolicyClass::QB,
        }
    }

    /// Alphabets the policy was built for, when it carries a table.
    pub fn geometry(&self) -> Option<Geometry> {
        match self {
            Policy::ConstantA(a) => Some(a.geometry()),
            Policy::ConstantB(b) => Some(b.geometry()),
            _ => None,
        }
    }

    pub fn check_compatible(&self, g: Geometry) -> Result<()> {
        match self.geometry() {
            Some(pg) if pg != g => Err(Error::Incompatible(format!(
                "policy built for (mx, my, ms) = ({}, {}, {}), system is ({}, {}, {})",
                pg.mx, pg.my, pg.ms, g.mx, g.my, g.ms
            ))),
            _ => Ok(()),
        }
    }

    /// The action `a_t` of a `Q_B` policy at step `t`, given the observed
    /// outputs `ys` and the current joint belief.
    pub fn action_at(&self, t: usize, ys: &[usize], pi: &Belief) -> Result<ActionA> {
        let g = pi.geometry();
        match self {
            Policy::History(_) => Err(Error::Incompatible(
                "history-dependent policies have no belief-state action; use brute-force evaluation".into(),
            )),
            Policy::MemoryCompressed(rule) => {
                let mut table = Vec::with_capacity(g.nx() * g.ns() * g.ny());
                for x in 0..g.nx() {
                    for s in 0..g.ns() {
                        let row = rule.distribution(t, x, s, ys);
                        if row.len() != g.ny() {
                            return Err(Error::Policy(format!(
                                "rule returned {} probabilities, expected {}",
                                row.len(),
                                g.ny()
                            )));
                        }
                        table.extend(row);
                    }
                }
                ActionA::new(g, table)
            }
            Policy::Belief(rule) => rule.action(t, pi),
            Policy::Difference(rule) => Ok(lift_to_action_a(&rule.action(t, &pi.difference())?)),
            Policy::ConstantA(a) => Ok(a.clone()),
            Policy::ConstantB(b) => Ok(lift_to_action_a(b)),
        }
    }
}
