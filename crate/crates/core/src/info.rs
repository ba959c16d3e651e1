//! Entropy and mutual-information helpers. Everything is in bits unless a
//! caller converts through [`Units`]. The convention `0 log 0 = 0` holds
//! throughout.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Bits,
    Nats,
}

impl Units {
    /// Converts a quantity measured in bits into these units.
    pub fn from_bits(self, bits: f64) -> f64 {
        match self {
            Units::Bits => bits,
            Units::Nats => bits * LN_2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Units::Bits => "bits",
            Units::Nats => "nats",
        }
    }
}

impl std::str::FromStr for Units {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bits" => Ok(Units::Bits),
            "nats" => Ok(Units::Nats),
            other => Err(format!("unknown units '{other}' (expected bits or nats)")),
        }
    }
}

/// `-p log2 p` with the `0 log 0 = 0` convention.
#[inline]
pub fn neg_plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Shannon entropy in bits of a (not necessarily normalized) weight vector.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().map(|&v| neg_plogp(v)).sum()
}

/// Binary entropy `h(p)` in bits.
pub fn binary_entropy(p: f64) -> f64 {
    neg_plogp(p) + neg_plogp(1.0 - p)
}

/// Mutual information `I(U; V)` in bits for an input law `input(u)` and a
/// channel `channel[u * n_out + v] = P(v | u)`.
pub fn channel_mutual_information(input: &[f64], channel: &[f64], n_out: usize) -> f64 {
    let mut out = vec![0.0; n_out];
    for (u, &pu) in input.iter().enumerate() {
        if pu == 0.0 {
            continue;
        }
        for (v, o) in out.iter_mut().enumerate() {
            *o += pu * channel[u * n_out + v];
        }
    }
    let mut mi = 0.0;
    for (u, &pu) in input.iter().enumerate() {
        if pu == 0.0 {
            continue;
        }
        for v in 0..n_out {
            let c = channel[u * n_out + v];
            if c > 0.0 && out[v] > 0.0 {
                mi += pu * c * (c / out[v]).log2();
            }
        }
    }
    mi.max(0.0)
}
