//! Continuous-alphabet bounds for demand uniform on `[0, 1]` and a battery
//! of capacity `B >= 2`.
//!
//! With `S ~ Unif[0, B]` independent of `X`, the difference `W = S - X` has
//! a trapezoidal density on `[-1, B]` and `I(W; X) = h(W) - log2 B`, which
//! works out to `1 / (2 B ln 2)`. The entropy power inequality gives the
//! lower bound `(1/2) log2(1 + 1/B^2)` for every battery law.

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use rand::Rng;
use serde::Serialize;
use std::f64::consts::LN_2;

fn check_capacity(b: f64) -> Result<()> {
    if b.is_finite() && b >= 2.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "B",
            value: b,
            expected: "finite and at least 2",
        })
    }
}

/// `(1/2) log2(1 + 1/B^2)` bits.
pub fn epi_lower_bound(b: f64) -> Result<f64> {
    check_capacity(b)?;
    Ok(0.5 * (1.0 / (b * b)).ln_1p() / LN_2)
}

/// `1 / (2 B ln 2)` bits, attained by a uniform battery law.
pub fn uniform_achievable_rate(b: f64) -> Result<f64> {
    check_capacity(b)?;
    Ok(1.0 / (2.0 * b * LN_2))
}

/// Density of `S - X` for `S ~ Unif[0, B]`, `X ~ Unif[0, 1]`.
pub fn difference_density(b: f64, w: f64) -> f64 {
    if w <= -1.0 || w >= b {
        0.0
    } else if w < 0.0 {
        (w + 1.0) / b
    } else if w <= b - 1.0 {
        1.0 / b
    } else {
        (b - w) / b
    }
}

fn neg_plog2p(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadratureEstimate {
    /// `h(W) - log2 B` in bits (NaN when insufficient).
    pub value: f64,
    /// Nodes per linear piece of the density.
    pub nodes: usize,
    /// Composite Simpson needs at least three nodes per piece.
    pub sufficient: bool,
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// `h(W) - log2 B` by composite Simpson on each linear piece of the density.
pub fn quadrature_rate(b: f64, nodes: usize) -> Result<QuadratureEstimate> {
    check_capacity(b)?;
    if nodes < 3 {
        return Ok(QuadratureEstimate {
            value: f64::NAN,
            nodes,
            sufficient: false,
        });
    }
    // Simpson needs an even number of intervals
    let intervals = if (nodes - 1) % 2 == 0 { nodes - 1 } else { nodes - 2 };
    let f = |w: f64| neg_plog2p(difference_density(b, w));
    let h = simpson(f, -1.0, 0.0, intervals) + simpson(f, 0.0, b - 1.0, intervals) + simpson(f, b - 1.0, b, intervals);
    Ok(QuadratureEstimate {
        value: h - b.log2(),
        nodes,
        sufficient: true,
    })
}

/// Default Simpson nodes per piece.
pub const DEFAULT_QUADRATURE_NODES: usize = 200_001;

#[derive(Debug, Clone, Serialize)]
pub struct ContinuousCheck {
    #[serde(rename = "B")]
    pub b: f64,
    pub closed_form: f64,
    pub quadrature: QuadratureEstimate,
    /// `|quadrature - closed_form|`.
    pub quadrature_error: f64,
    /// Sample mean of `-log2 xi(W) - log2 B` over draws of `W`.
    pub mc_estimate: f64,
    pub mc_stderr: f64,
    pub samples: usize,
}

/// Compares the closed form with quadrature of the trapezoidal density and
/// with a Monte Carlo estimate built from sampled `W`.
pub fn monte_carlo_continuous_check(b: f64, samples: usize, seed: u64) -> Result<ContinuousCheck> {
    let closed_form = uniform_achievable_rate(b)?;
    let quadrature = quadrature_rate(b, DEFAULT_QUADRATURE_NODES)?;
    let mut rng = stream_rng(seed, 0xb0);
    let (mut mean, mut m2) = (0.0, 0.0);
    for n in 1..=samples {
        let s: f64 = rng.random::<f64>() * b;
        let x: f64 = rng.random::<f64>();
        let v = -difference_density(b, s - x).log2() - b.log2();
        let d = v - mean;
        mean += d / n as f64;
        m2 += d * (v - mean);
    }
    let mc_stderr = if samples > 1 {
        (m2 / (samples - 1) as f64 / samples as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(ContinuousCheck {
        b,
        closed_form,
        quadrature_error: (quadrature.value - closed_form).abs(),
        quadrature,
        mc_estimate: if samples > 0 { mean } else { f64::NAN },
        mc_stderr,
        samples,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContinuousBoundReport {
    #[serde(rename = "B")]
    pub b: f64,
    pub lower: f64,
    pub achievable: f64,
    pub gap: f64,
}

pub fn bound_report(b: f64) -> Result<ContinuousBoundReport> {
    let lower = epi_lower_bound(b)?;
    let achievable = uniform_achievable_rate(b)?;
    Ok(ContinuousBoundReport {
        b,
        lower,
        achievable,
        gap: achievable - lower,
    })
}

/// Reports for `B = from, from + step, ...` up to `to` inclusive.
pub fn bound_sweep(from: f64, to: f64, step: f64) -> Result<Vec<ContinuousBoundReport>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::OutOfRange {
            name: "step",
            value: step,
            expected: "positive",
        });
    }
    if !(to.is_finite() && to >= from) {
        return Err(Error::OutOfRange {
            name: "to",
            value: to,
            expected: "finite and not below the start of the range",
        });
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| bound_report(from + i as f64 * step)).collect()
}
