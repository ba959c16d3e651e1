//! Core domain types: alphabets, distributions, the battery conservation law
//! and system specifications.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Sum-to-one tolerance for stored distributions.
pub const PMF_TOL: f64 = 1e-12;

/// Largest alphabet accepted from external input.
pub const MAX_ALPHABET: usize = 512;

/// Contiguous integer range `{lo, ..., hi}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    lo: i64,
    hi: i64,
}

impl Alphabet {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::Alphabet(format!("empty range {lo}..={hi}")));
        }
        let size = (hi as i128) - (lo as i128) + 1;
        if size > MAX_ALPHABET as i128 {
            return Err(Error::Alphabet(format!(
                "range {lo}..={hi} has {size} symbols, limit is {MAX_ALPHABET}"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// `{0, ..., m}`.
    pub fn upto(m: usize) -> Result<Self> {
        Self::new(0, m as i64)
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn size(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn index_of(&self, v: i64) -> Option<usize> {
        self.contains(v).then(|| (v - self.lo) as usize)
    }

    pub fn value_at(&self, i: usize) -> i64 {
        self.lo + i as i64
    }

    pub fn values(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }

    pub fn is_subset_of(&self, other: &Alphabet) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }
}

/// Probability mass function over an [`Alphabet`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pmf {
    support: Alphabet,
    probs: Vec<f64>,
}

impl Pmf {
    /// Validates non-negativity and the sum-to-one tolerance.
    pub fn new(support: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != support.size() {
            return Err(Error::Distribution(format!(
                "{} probabilities for an alphabet of size {}",
                probs.len(),
                support.size()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::Distribution(format!("entry {p} is not a probability")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PMF_TOL {
            return Err(Error::Distribution(format!("entries sum to {sum}, not 1")));
        }
        Ok(Self { support, probs })
    }

    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(support: Alphabet, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != support.size() {
            return Err(Error::Distribution(format!(
                "{} weights for an alphabet of size {}",
                weights.len(),
                support.size()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Distribution("weights must be finite and non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Distribution("weights sum to zero".into()));
        }
        Ok(Self {
            support,
            probs: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn uniform(support: Alphabet) -> Self {
        let n = support.size();
        Self {
            support,
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point(support: Alphabet, v: i64) -> Result<Self> {
        let i = support.index_of(v).ok_or(Error::Domain {
            name: "support",
            value: v,
            lo: support.lo,
            hi: support.hi,
        })?;
        let mut probs = vec![0.0; support.size()];
        probs[i] = 1.0;
        Ok(Self { support, probs })
    }

    /// Binomial(n, p) on `{0, ..., n}`.
    pub fn binomial(n: usize, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Distribution(format!("binomial parameter {p} outside [0, 1]")));
        }
        let support = Alphabet::upto(n)?;
        let mut coef = 1.0f64;
        let mut probs = Vec::with_capacity(n + 1);
        for k in 0..=n {
            if k > 0 {
                coef *= (n - k + 1) as f64 / k as f64;
            }
            probs.push(coef * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32));
        }
        Self::from_weights(support, probs)
    }

    pub fn support(&self) -> Alphabet {
        self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability of the symbol `v`; zero outside the support.
    pub fn prob(&self, v: i64) -> f64 {
        self.support.index_of(v).map_or(0.0, |i| self.probs[i])
    }

    /// Rescales accumulated drift back to a unit sum.
    pub fn renormalize(&mut self) {
        let sum: f64 = self.probs.iter().sum();
        if sum > 0.0 {
            self.probs.iter_mut().for_each(|p| *p /= sum);
        }
    }

    pub fn entropy(&self) -> f64 {
        crate::info::entropy(&self.probs)
    }

    /// `P(v) = P(hi + lo - v)`, within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.probs.len();
        (0..n).all(|i| (self.probs[i] - self.probs[n - 1 - i]).abs() <= tol)
    }

    /// Non-decreasing then non-increasing, within `tol`.
    pub fn is_unimodal(&self, tol: f64) -> bool {
        let p = &self.probs;
        let mut i = 0;
        while i + 1 < p.len() && p[i + 1] >= p[i] - tol {
            i += 1;
        }
        while i + 1 < p.len() && p[i + 1] <= p[i] + tol {
            i += 1;
        }
        i + 1 >= p.len()
    }

    pub fn total_variation(&self, other: &Pmf) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Row-stochastic matrix `Q(x' | x)` for Markov demand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    alphabet: Alphabet,
    rows: Vec<Vec<f64>>,
}

/// Structure of a transition graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChainDiagnostics {
    pub irreducible: bool,
    /// Period of the class containing state 0.
    pub period: usize,
}

impl ChainDiagnostics {
    pub fn is_ergodic(&self) -> bool {
        self.irreducible && self.period == 1
    }
}

impl TransitionMatrix {
    pub fn new(alphabet: Alphabet, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = alphabet.size();
        if rows.len() != n {
            return Err(Error::Distribution(format!("{} rows for {n} states", rows.len())));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Distribution(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            Pmf::new(alphabet, row.clone())
                .map_err(|e| Error::Distribution(format!("row {i}: {e}")))?;
        }
        Ok(Self { alphabet, rows })
    }

    /// Every row equal to `pmf`.
    pub fn iid(pmf: &Pmf) -> Self {
        Self {
            alphabet: pmf.support(),
            rows: vec![pmf.probs().to_vec(); pmf.len()],
        }
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Strong connectivity plus the gcd of cycle lengths through state 0.
    pub fn diagnostics(&self) -> ChainDiagnostics {
        let n = self.rows.len();
        let reach = |forward: bool| -> Vec<Option<usize>> {
            let mut level = vec![None; n];
            level[0] = Some(0);
            let mut queue = std::collections::VecDeque::from([0usize]);
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    let p = if forward { self.rows[u][v] } else { self.rows[v][u] };
                    if p > 0.0 && level[v].is_none() {
                        level[v] = Some(level[u].unwrap() + 1);
                        queue.push_back(v);
                    }
                }
            }
            level
        };
        let fwd = reach(true);
        let bwd = reach(false);
        let irreducible = fwd.iter().all(Option::is_some) && bwd.iter().all(Option::is_some);
        let mut g = 0usize;
        for u in 0..n {
            for v in 0..n {
                if self.rows[u][v] > 0.0 {
                    if let (Some(lu), Some(lv)) = (fwd[u], fwd[v]) {
                        g = gcd(g, (lu as i64 + 1 - lv as i64).unsigned_abs() as usize);
                    }
                }
            }
        }
        ChainDiagnostics {
            irreducible,
            period: g.max(1),
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Alphabet sizes of a system: `X = {0..mx}`, `Y = {0..my}`, `S = {0..ms}`
/// and the difference alphabet `W = {-mx..ms}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub mx: usize,
    pub my: usize,
    pub ms: usize,
}

impl Geometry {
    pub fn new(mx: usize, my: usize, ms: usize) -> Result<Self> {
        for (name, m) in [("mx", mx), ("my", my), ("ms", ms)] {
            if m + 1 > MAX_ALPHABET {
                return Err(Error::Alphabet(format!("{name}={m} exceeds limit {}", MAX_ALPHABET - 1)));
            }
        }
        if mx > my {
            return Err(Error::Alphabet(format!(
                "demand alphabet 0..={mx} is not contained in consumption alphabet 0..={my}"
            )));
        }
        Ok(Self { mx, my, ms })
    }

    pub fn nx(&self) -> usize {
        self.mx + 1
    }

    pub fn ny(&self) -> usize {
        self.my + 1
    }

    pub fn ns(&self) -> usize {
        self.ms + 1
    }

    pub fn nw(&self) -> usize {
        self.mx + self.ms + 1
    }

    pub fn w_alphabet(&self) -> Alphabet {
        Alphabet {
            lo: -(self.mx as i64),
            hi: self.ms as i64,
        }
    }

    /// Index of `w` in `W`.
    #[inline]
    pub fn w_index(&self, w: i64) -> usize {
        (w + self.mx as i64) as usize
    }

    #[inline]
    pub fn w_value(&self, i: usize) -> i64 {
        i as i64 - self.mx as i64
    }

    /// Range of `y` keeping `w + y` inside `S`, as a half-open `lo..hi`.
    /// Empty when `w` is outside `W` in a way no output can repair.
    #[inline]
    pub fn feasible_range(&self, w: i64) -> std::ops::Range<usize> {
        let lo = (-w).max(0);
        let hi = (self.ms as i64 - w).min(self.my as i64);
        if hi < lo {
            0..0
        } else {
            lo as usize..hi as usize + 1
        }
    }

    #[inline]
    pub fn is_feasible(&self, w: i64, y: usize) -> bool {
        self.feasible_range(w).contains(&y)
    }

    /// The feasible output set for difference `w`.
    pub fn feasible_outputs(&self, w: i64) -> Result<Vec<usize>> {
        let wa = self.w_alphabet();
        if !wa.contains(w) {
            return Err(Error::Domain {
                name: "W",
                value: w,
                lo: wa.lo,
                hi: wa.hi,
            });
        }
        Ok(self.feasible_range(w).collect())
    }

    /// Conservation law `s + y - x`.
    pub fn step(&self, s: usize, x: usize, y: usize) -> Result<usize> {
        let next = s as i64 + y as i64 - x as i64;
        if s > self.ms || x > self.mx || y > self.my || next < 0 || next > self.ms as i64 {
            return Err(Error::Conservation {
                s,
                x,
                y,
                next,
                ms: self.ms,
            });
        }
        Ok(next as usize)
    }
}

/// How demand evolves.
#[derive(Debug, Clone, PartialEq)]
pub enum DemandLaw {
    Iid(Pmf),
    Markov { q: TransitionMatrix, init: Pmf },
}

/// A complete system: alphabets, demand law and initial battery law.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    geometry: Geometry,
    demand: DemandLaw,
    initial_battery: Pmf,
    transition: TransitionMatrix,
}

impl SystemSpec {
    pub fn new(geometry: Geometry, demand: DemandLaw, initial_battery: Pmf) -> Result<Self> {
        let xa = Alphabet::upto(geometry.mx)?;
        let sa = Alphabet::upto(geometry.ms)?;
        if initial_battery.support() != sa {
            return Err(Error::Incompatible(format!(
                "initial battery law has {} entries, battery alphabet has {}",
                initial_battery.len(),
                sa.size()
            )));
        }
        let transition = match &demand {
            DemandLaw::Iid(p) => {
                if p.support() != xa {
                    return Err(Error::Incompatible(format!(
                        "demand law has {} entries, demand alphabet has {}",
                        p.len(),
                        xa.size()
                    )));
                }
                TransitionMatrix::iid(p)
            }
            DemandLaw::Markov { q, init } => {
                if q.alphabet() != xa || init.support() != xa {
                    return Err(Error::Incompatible(
                        "Markov demand law does not match the demand alphabet".into(),
                    ));
                }
                q.clone()
            }
        };
        Ok(Self {
            geometry,
            demand,
            initial_battery,
            transition,
        })
    }

    /// i.i.d. demand with `Y = X`.
    pub fn iid(demand: Pmf, ms: usize, initial_battery: Pmf) -> Result<Self> {
        let mx = demand.len() - 1;
        Self::new(Geometry::new(mx, mx, ms)?, DemandLaw::Iid(demand), initial_battery)
    }

    /// The binary example: `mx = my = ms = 1`, uniform demand, uniform battery.
    pub fn binary_uniform() -> Self {
        let a = Alphabet::upto(1).unwrap();
        Self::iid(Pmf::uniform(a), 1, Pmf::uniform(a)).unwrap()
    }

    /// Binomial(n, p) demand, `Y = X`, battery `0..=ms` started uniform.
    pub fn binomial(n: usize, p: f64, ms: usize) -> Result<Self> {
        Self::iid(Pmf::binomial(n, p)?, ms, Pmf::uniform(Alphabet::upto(ms)?))
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn demand(&self) -> &DemandLaw {
        &self.demand
    }

    pub fn is_iid(&self) -> bool {
        matches!(self.demand, DemandLaw::Iid(_))
    }

    /// The i.i.d. demand law, if demand is i.i.d.
    pub fn iid_demand(&self) -> Option<&Pmf> {
        match &self.demand {
            DemandLaw::Iid(p) => Some(p),
            DemandLaw::Markov { .. } => None,
        }
    }

    /// Law of `X_1`.
    pub fn initial_demand(&self) -> &Pmf {
        match &self.demand {
            DemandLaw::Iid(p) => p,
            DemandLaw::Markov { init, .. } => init,
        }
    }

    pub fn initial_battery(&self) -> &Pmf {
        &self.initial_battery
    }

    /// Demand transition matrix; for i.i.d. demand every row is the demand law.
    pub fn transition(&self) -> &TransitionMatrix {
        &self.transition
    }

    pub fn with_initial_battery(&self, theta: Pmf) -> Result<Self> {
        Self::new(self.geometry, self.demand.clone(), theta)
    }

    pub fn demand_alphabet(&self) -> Alphabet {
        Alphabet::upto(self.geometry.mx).unwrap()
    }

    pub fn consumption_alphabet(&self) -> Alphabet {
        Alphabet::upto(self.geometry.my).unwrap()
    }

    pub fn battery_alphabet(&self) -> Alphabet {
        Alphabet::upto(self.geometry.ms).unwrap()
    }

    pub fn w_alphabet(&self) -> Alphabet {
        self.geometry.w_alphabet()
    }

    pub fn feasible_outputs(&self, w: i64) -> Result<Vec<usize>> {
        self.geometry.feasible_outputs(w)
    }

    pub fn step(&self, s: usize, x: usize, y: usize) -> Result<usize> {
        self.geometry.step(s, x, y)
    }

    /// Warnings about the demand chain (reducible or periodic).
    pub fn demand_warnings(&self) -> Vec<String> {
        match &self.demand {
            DemandLaw::Iid(_) => Vec::new(),
            DemandLaw::Markov { q, .. } => {
                let d = q.diagnostics();
                let mut w = Vec::new();
                if !d.irreducible {
                    w.push("demand chain is not irreducible".to_string());
                }
                if d.period != 1 {
                    w.push(format!("demand chain is periodic with period {}", d.period));
                }
                w
            }
        }
    }
}
