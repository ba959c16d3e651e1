//! Convergence checks for time-invariant difference policies under i.i.d.
//! demand started from an arbitrary battery law.
//!
//! The pair `U_t = (S_t, Y_{t-1})` is a finite Markov chain whose second
//! coordinate is observed. Splitting its kernel by the observed symbol gives
//! matrices `M(z)`; if some product of them along an observation word is
//! subrectangular, the filter forgets its initial condition.

use crate::error::{Error, Result};
use crate::leakage::monte_carlo_leakage;
use crate::model::{Alphabet, Pmf, SystemSpec, TransitionMatrix};
use crate::policy::{ActionB, Policy};
use rayon::prelude::*;
use serde::Serialize;

/// Dense row-major square matrix.
pub type Matrix = Vec<Vec<f64>>;

fn iid(spec: &SystemSpec) -> Result<&Pmf> {
    spec.iid_demand()
        .ok_or_else(|| Error::Incompatible("convergence checks require i.i.d. demand".into()))
}

fn check_policy(spec: &SystemSpec, b: &ActionB) -> Result<()> {
    Policy::ConstantB(b.clone()).check_compatible(spec.geometry())
}

/// Kernel of `(S_t, Y_{t-1}) -> (S_{t+1}, Y_t)` with state index `s * ny + y`.
pub fn lifted_matrix(spec: &SystemSpec, b: &ActionB) -> Result<Matrix> {
    check_policy(spec, b)?;
    let px = iid(spec)?;
    let g = spec.geometry();
    let (ns, ny) = (g.ns(), g.ny());
    let n = ns * ny;
    let mut p = vec![vec![0.0; n]; n];
    for s in 0..ns {
        let mut row = vec![0.0; n];
        for (x, &pxv) in px.probs().iter().enumerate() {
            let w = s as i64 - x as i64;
            for y in g.feasible_range(w) {
                let s2 = (w + y as i64) as usize;
                row[s2 * ny + y] += pxv * b.prob(y, w);
            }
        }
        // the previous output does not enter the transition
        for yp in 0..ny {
            p[s * ny + yp] = row.clone();
        }
    }
    Ok(p)
}

/// [`lifted_matrix`] as a validated transition matrix.
pub fn lifted_chain(spec: &SystemSpec, b: &ActionB) -> Result<TransitionMatrix> {
    let p = lifted_matrix(spec, b)?;
    TransitionMatrix::new(Alphabet::upto(p.len() - 1)?, p)
}

/// `M(z)`: the lifted kernel restricted to target states observing `z`.
pub fn observation_matrices(spec: &SystemSpec, b: &ActionB) -> Result<Vec<Matrix>> {
    let p = lifted_matrix(spec, b)?;
    let ny = spec.geometry().ny();
    Ok((0..ny)
        .map(|z| {
            p.iter()
                .map(|row| row.iter().enumerate().map(|(j, &v)| if j % ny == z { v } else { 0.0 }).collect())
                .collect()
        })
        .collect())
}

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for (k, &aik) in a[i].iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// True when the non-zero pattern is a product `rows x cols`.
pub fn is_subrectangular(m: &Matrix) -> bool {
    let rows: Vec<usize> = (0..m.len()).filter(|&i| m[i].iter().any(|&v| v > 0.0)).collect();
    let cols: Vec<usize> = (0..m.len()).filter(|&j| m.iter().any(|r| r[j] > 0.0)).collect();
    rows.iter().all(|&i| cols.iter().all(|&j| m[i][j] > 0.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct SubrectangularCertificate {
    pub word: Vec<usize>,
    pub product: Matrix,
    pub ok: bool,
    /// Whether `b` puts positive mass on every feasible output of every
    /// reachable row; without it a negative answer says little.
    pub interior: bool,
}

/// Multiplies `M(z)` along the word `1^ms 0^ms` (charge fully, then drain)
/// and tests the product for subrectangularity.
pub fn subrectangular_certificate(spec: &SystemSpec, b: &ActionB) -> Result<SubrectangularCertificate> {
    let g = spec.geometry();
    let mats = observation_matrices(spec, b)?;
    let word: Vec<usize> = if g.ny() > 1 {
        std::iter::repeat_n(1, g.ms).chain(std::iter::repeat_n(0, g.ms)).collect()
    } else {
        Vec::new()
    };
    Ok(certificate_for_word(&mats, word, b))
}

/// Certificate for an arbitrary observation word.
pub fn certificate_for_word(mats: &[Matrix], word: Vec<usize>, b: &ActionB) -> SubrectangularCertificate {
    let n = mats.first().map_or(0, |m| m.len());
    let mut prod: Matrix = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for &z in &word {
        prod = matmul(&prod, &mats[z]);
    }
    let g = b.geometry();
    let interior = (0..g.nw()).all(|wi| {
        let w = g.w_value(wi);
        b.unreachable()[wi] || g.feasible_range(w).all(|y| b.prob(y, w) > 0.0)
    });
    SubrectangularCertificate {
        ok: is_subrectangular(&prod),
        word,
        product: prod,
        interior,
    }
}

/// One initial battery law.
#[derive(Debug, Clone, Serialize)]
pub struct InitReport {
    pub theta_init: Vec<f64>,
    /// `TV(P_{S_t}, theta_target)` for `t = 1..=T`.
    pub tv: Vec<f64>,
    pub final_tv: f64,
    /// First step with distance below the tolerance.
    pub reached_at: Option<usize>,
    /// `(1/T) sum_t E[I(b; xi_t)]` in bits.
    pub cesaro_leakage: f64,
    pub cesaro_ci: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub horizon: usize,
    pub tol: f64,
    pub theta_target: Vec<f64>,
    /// `I(b; xi_target)` in bits.
    pub target_leakage: f64,
    pub inits: Vec<InitReport>,
}

impl ConvergenceReport {
    /// All inits reached the TV tolerance and their Cesàro leakage is within
    /// `leak_tol` of the target.
    pub fn passed(&self, leak_tol: f64) -> bool {
        self.inits
            .iter()
            .all(|r| r.final_tv < self.tol && (r.cesaro_leakage - self.target_leakage).abs() < leak_tol)
    }
}

/// Options for [`empirical_convergence`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceOptions {
    pub horizon: usize,
    pub tol: f64,
    /// Monte Carlo output paths for the Cesàro leakage.
    pub paths: usize,
    pub seed: u64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            horizon: 300,
            tol: 1e-3,
            paths: 2000,
            seed: 0,
        }
    }
}

/// Runs `b` from each initial battery law. The battery marginal is propagated
/// exactly; the expected per-step leakage `E[I(b; xi_t)]` depends on the
/// random posterior `xi_t` and is averaged over sampled output paths.
pub fn empirical_convergence(
    spec: &SystemSpec,
    b: &ActionB,
    theta_target: &Pmf,
    theta_inits: &[Pmf],
    opts: &ConvergenceOptions,
) -> Result<ConvergenceReport> {
    check_policy(spec, b)?;
    let px = iid(spec)?.clone();
    let g = spec.geometry();
    if theta_target.len() != g.ns() {
        return Err(Error::Incompatible("target battery law has the wrong alphabet".into()));
    }
    let xi_target = crate::belief::theta_to_xi(theta_target, &px)?.with_geometry(g)?;
    let target_leakage = crate::leakage::iid_single_letter_rate(b, &xi_target);

    let inits: Vec<Result<InitReport>> = theta_inits
        .par_iter()
        .enumerate()
        .map(|(k, theta0)| {
            let sub = spec.with_initial_battery(theta0.clone())?;
            let mut law = theta0.probs().to_vec();
            let mut tv = Vec::with_capacity(opts.horizon);
            for _ in 0..opts.horizon {
                tv.push(0.5 * law.iter().zip(theta_target.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>());
                let mut next = vec![0.0; g.ns()];
                for (s, &ps) in law.iter().enumerate() {
                    if ps == 0.0 {
                        continue;
                    }
                    for (x, &pxv) in px.probs().iter().enumerate() {
                        let w = s as i64 - x as i64;
                        for y in g.feasible_range(w) {
                            next[(w + y as i64) as usize] += ps * pxv * b.prob(y, w);
                        }
                    }
                }
                law = next;
            }
            let final_tv = tv.last().copied().unwrap_or(f64::NAN);
            let reached_at = tv.iter().position(|&d| d < opts.tol).map(|t| t + 1);
            let mc = monte_carlo_leakage(
                &sub,
                &Policy::ConstantB(b.clone()),
                opts.horizon,
                opts.paths,
                crate::rng::derive_seed(opts.seed, &[k as u64]),
            )?;
            Ok(InitReport {
                theta_init: theta0.probs().to_vec(),
                tv,
                final_tv,
                reached_at,
                cesaro_leakage: mc.total_rate,
                cesaro_ci: mc.ci_halfwidth,
            })
        })
        .collect();
    Ok(ConvergenceReport {
        horizon: opts.horizon,
        tol: opts.tol,
        theta_target: theta_target.probs().to_vec(),
        target_leakage,
        inits: inits.into_iter().collect::<Result<_>>()?,
    })
}
