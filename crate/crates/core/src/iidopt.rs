//! The single-letter problem for i.i.d. demand:
//!
//! ```text
//! J* = min_theta I(S - X; X) = min_theta H(S - X) - H(S),   S ~ theta independent of X.
//! ```
//!
//! The objective is strictly convex in `theta`, so the minimizer is unique and
//! interior. We minimize it by exponentiated gradient (entropic mirror
//! descent), which keeps iterates strictly positive. With unit step in nats
//! the update `theta(s) <- theta(s) exp(-g(s))` is the Blahut-Arimoto style
//! multiplicative rule; a backtracking step guards monotone descent.

use crate::belief::{theta_to_xi, XiBelief};
use crate::error::{Error, Result};
use crate::info::entropy;
use crate::model::{Alphabet, Geometry, Pmf};
use crate::policy::{structured_policy, ActionB};
use crate::rng::stream_rng;
use rand::Rng;
use serde::Serialize;
use std::f64::consts::LN_2;

/// `H(conv) - H(theta)` in bits for a possibly unnormalized `theta`, where
/// `conv(w) = sum_x P_X(x) theta(w + x)`.
pub fn objective_raw(theta: &[f64], px: &[f64]) -> f64 {
    entropy(&difference_law(theta, px)) - entropy(theta)
}

/// Unnormalized law of `S - X`, indexed by `w + mx`.
fn difference_law(theta: &[f64], px: &[f64]) -> Vec<f64> {
    let mx = px.len() - 1;
    let mut xi = vec![0.0; theta.len() + mx];
    for (s, &ps) in theta.iter().enumerate() {
        for (x, &pxv) in px.iter().enumerate() {
            xi[s + mx - x] += ps * pxv;
        }
    }
    xi
}

/// `I(S - X; X)` in bits.
pub fn objective(theta: &Pmf, demand: &Pmf) -> f64 {
    objective_raw(theta.probs(), demand.probs()).max(0.0)
}

/// Gradient of [`objective_raw`] in bits:
/// `d/d theta(s) = log theta(s) - sum_x P_X(x) log xi(s - x)`.
pub fn gradient_raw(theta: &[f64], px: &[f64]) -> Result<Vec<f64>> {
    if let Some(s) = theta.iter().position(|&p| p <= 0.0) {
        return Err(Error::Distribution(format!(
            "gradient undefined on the boundary: theta({s}) = {}",
            theta[s]
        )));
    }
    let mx = px.len() - 1;
    let xi = difference_law(theta, px);
    Ok(theta
        .iter()
        .enumerate()
        .map(|(s, &ps)| {
            let cross: f64 = px
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(x, &p)| p * xi[s + mx - x].log2())
                .sum();
            ps.log2() - cross
        })
        .collect())
}

pub fn gradient(theta: &Pmf, demand: &Pmf) -> Result<Vec<f64>> {
    gradient_raw(theta.probs(), demand.probs())
}

/// Euclidean norm of the gradient projected onto the simplex tangent space.
pub fn projected_gradient_norm(grad: &[f64]) -> f64 {
    let mean = grad.iter().sum::<f64>() / grad.len() as f64;
    grad.iter().map(|g| (g - mean).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 100_000,
        }
    }
}

/// Optimal battery law, the induced difference law and the structured policy.
#[derive(Debug, Clone)]
pub struct SingleLetterSolution {
    pub theta_star: Pmf,
    pub xi_star: XiBelief,
    /// `J*` in bits.
    pub j_star: f64,
    pub b_star: ActionB,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

impl SingleLetterSolution {
    /// The structured policy `b*` for a system whose consumption alphabet may
    /// be larger than the demand alphabet.
    pub fn structured_for(&self, geometry: Geometry, demand: &Pmf) -> Result<ActionB> {
        structured_policy(geometry, &self.theta_star, demand)
    }
}

/// Minimizes `I(S - X; X)` over battery laws on `battery` starting from uniform.
pub fn minimize(demand: &Pmf, battery: Alphabet, opts: MinimizeOptions) -> Result<SingleLetterSolution> {
    minimize_from(demand, &Pmf::uniform(battery), opts)
}

/// As [`minimize`] from an explicit interior starting point.
pub fn minimize_from(demand: &Pmf, start: &Pmf, opts: MinimizeOptions) -> Result<SingleLetterSolution> {
    if demand.support().lo() != 0 || start.support().lo() != 0 {
        return Err(Error::Alphabet("demand and battery alphabets must start at 0".into()));
    }
    let px = demand.probs();
    let mut theta = start.probs().to_vec();
    let mut value = objective_raw(&theta, px);
    let mut grad = gradient_raw(&theta, px)?;
    let mut norm = projected_gradient_norm(&grad);
    let mut step = 1.0;
    let mut iterations = 0;
    while norm >= opts.tol && iterations < opts.max_iters {
        iterations += 1;
        let mut accepted = false;
        for _ in 0..60 {
            // multiplicative update in nats, shifted by max for stability
            let gmin = grad.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut cand: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .map(|(&t, &g)| t * (-step * (g - gmin) * LN_2).exp())
                .collect();
            let sum: f64 = cand.iter().sum();
            cand.iter_mut().for_each(|t| *t /= sum);
            if cand.iter().any(|&t| t <= 0.0) {
                step *= 0.5;
                continue;
            }
            let v = objective_raw(&cand, px);
            if v <= value + 1e-15 {
                theta = cand;
                value = v;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        grad = gradient_raw(&theta, px)?;
        norm = projected_gradient_norm(&grad);
        step = (step * 2.0).min(1.0);
    }
    let theta_star = Pmf::from_weights(start.support(), theta)?;
    let xi_star = theta_to_xi(&theta_star, demand)?;
    let geometry = Geometry::new(demand.len() - 1, demand.len() - 1, theta_star.len() - 1)?;
    let b_star = structured_policy(geometry, &theta_star, demand)?;
    Ok(SingleLetterSolution {
        j_star: objective(&theta_star, demand),
        theta_star,
        xi_star,
        b_star,
        iterations,
        gradient_norm: norm,
        converged: norm < opts.tol,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyCheck {
    /// Whether the demand law meets the property's precondition.
    pub applicable: bool,
    pub passed: bool,
    /// Largest violation found (0 when everything holds).
    pub worst_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    /// Every entry of `theta*` strictly positive.
    pub interior: bool,
    /// `theta*(s) = theta*(ms - s)` for symmetric demand.
    pub symmetry: PropertyCheck,
    /// Interleaved ordering around `floor(ms/2)` for symmetric unimodal demand.
    pub unimodal_chain: PropertyCheck,
    pub symmetry_tol: f64,
    pub chain_slack: f64,
}

impl CertificateReport {
    pub fn all_passed(&self) -> bool {
        self.interior
            && (!self.symmetry.applicable || self.symmetry.passed)
            && (!self.unimodal_chain.applicable || self.unimodal_chain.passed)
    }
}

/// Ordering relation between consecutive entries of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Link {
    Eq,
    Ge,
}

/// Index order and relations of the almost-symmetric unimodal chain:
/// even `ms`: `t[m] >= t[m+1] = t[m-1] >= t[m+2] = t[m-2] >= ...`,
/// odd `ms`: `t[m] = t[m+1] >= t[m-1] = t[m+2] >= t[m-2] = ...`, `m = floor(ms/2)`.
fn unimodal_chain(ms: usize) -> (Vec<usize>, Vec<Link>) {
    let m = ms / 2;
    let mut order = vec![m];
    for k in 1..=ms {
        if m + k <= ms {
            order.push(m + k);
        }
        if k <= m {
            order.push(m - k);
        }
    }
    let first = if ms % 2 == 0 { Link::Ge } else { Link::Eq };
    let links = (0..order.len().saturating_sub(1))
        .map(|i| match (first, i % 2) {
            (Link::Ge, 0) | (Link::Eq, 1) => Link::Ge,
            _ => Link::Eq,
        })
        .collect();
    (order, links)
}

/// Checks interiority, symmetry and the almost-symmetric unimodal ordering.
pub fn certify_properties(solution: &SingleLetterSolution, demand: &Pmf) -> CertificateReport {
    const SYM_TOL: f64 = 1e-6;
    const CHAIN_SLACK: f64 = 1e-8;
    let th = solution.theta_star.probs();
    let n = th.len();
    let symmetric_demand = demand.is_symmetric(1e-12);
    let sym_dev = (0..n).map(|i| (th[i] - th[n - 1 - i]).abs()).fold(0.0, f64::max);
    let symmetry = PropertyCheck {
        applicable: symmetric_demand,
        passed: symmetric_demand && sym_dev <= SYM_TOL,
        worst_violation: if symmetric_demand { sym_dev } else { 0.0 },
    };
    let chain_applicable = symmetric_demand && demand.is_unimodal(1e-12);
    let (order, links) = unimodal_chain(n - 1);
    let worst = links
        .iter()
        .enumerate()
        .map(|(i, link)| {
            let (a, b) = (th[order[i]], th[order[i + 1]]);
            match link {
                Link::Eq => (a - b).abs(),
                Link::Ge => (b - a).max(0.0),
            }
        })
        .fold(0.0, f64::max);
    let unimodal_chain = PropertyCheck {
        applicable: chain_applicable,
        passed: chain_applicable && worst <= CHAIN_SLACK,
        worst_violation: if chain_applicable { worst } else { 0.0 },
    };
    CertificateReport {
        interior: th.iter().all(|&p| p > 0.0),
        symmetry,
        unimodal_chain,
        symmetry_tol: SYM_TOL,
        chain_slack: CHAIN_SLACK,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub trials: usize,
    /// Trials where the strict inequality held with slack above `1e-12`.
    pub strict: usize,
    /// Trials with `|theta1 - theta2| <= 1e-3`, where only `slack >= -1e-12` is required.
    pub near_pairs: usize,
    pub failures: usize,
    pub min_slack: f64,
}

impl ConvexityReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Random interior point of the simplex (normalized exponentials).
pub(crate) fn random_interior<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-6).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p /= s);
    v
}

/// Samples chords `(theta1, theta2, lambda)` and checks strict convexity of
/// the objective along each one.
pub fn convexity_probe(demand: &Pmf, battery: Alphabet, trials: usize, seed: u64) -> ConvexityReport {
    let px = demand.probs();
    let n = battery.size();
    let mut rng = stream_rng(seed, 0);
    let mut report = ConvexityReport {
        trials,
        strict: 0,
        near_pairs: 0,
        failures: 0,
        min_slack: f64::INFINITY,
    };
    for _ in 0..trials {
        let t1 = random_interior(&mut rng, n);
        let t2 = random_interior(&mut rng, n);
        let lambda: f64 = rng.random_range(1e-3..1.0 - 1e-3);
        let mix: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        let slack = lambda * objective_raw(&t1, px) + (1.0 - lambda) * objective_raw(&t2, px) - objective_raw(&mix, px);
        report.min_slack = report.min_slack.min(slack);
        let dist = t1.iter().zip(&t2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist > 1e-3 {
            if slack > 1e-12 {
                report.strict += 1;
            } else {
                report.failures += 1;
            }
        } else {
            report.near_pairs += 1;
            if slack < -1e-12 {
                report.failures += 1;
            }
        }
    }
    report
}

/// `(f(theta) + f(reversed theta)) / 2 - f(midpoint)`; positive for
/// asymmetric `theta` when the demand law is symmetric.
pub fn reflection_gain(theta: &Pmf, demand: &Pmf) -> f64 {
    let t = theta.probs();
    let rev: Vec<f64> = t.iter().rev().cloned().collect();
    let mid: Vec<f64> = t.iter().zip(&rev).map(|(a, b)| 0.5 * (a + b)).collect();
    let px = demand.probs();
    0.5 * (objective_raw(t, px) + objective_raw(&rev, px)) - objective_raw(&mid, px)
}
