//! JSON documents for specs, policies, single-letter solutions and value
//! functions. Every parser validates fully and reports errors; none panics
//! on malformed input.

use crate::belief::theta_to_xi;
use crate::dp::ValueFunction;
use crate::error::{Error, Result};
use crate::iidopt::{self, SingleLetterSolution};
use crate::info::Units;
use crate::model::{Alphabet, DemandLaw, Geometry, Pmf, SystemSpec, TransitionMatrix};
use crate::policy::{equiprobable_policy, structured_policy, ActionA, ActionB, Policy};
use serde::{Deserialize, Serialize};

/// Tolerance when checking a stored solution against a recomputation.
pub const SOLUTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandDoc {
    Iid(Vec<f64>),
    Markov {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        init: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDoc {
    pub mx: usize,
    pub my: usize,
    pub ms: usize,
    pub demand: DemandDoc,
    pub initial_battery: Vec<f64>,
}

fn pmf(alphabet: Alphabet, probs: Vec<f64>, field: &str) -> Result<Pmf> {
    if probs.len() != alphabet.size() {
        return Err(Error::Parse(format!(
            "{field}: expected {} probabilities, got {}",
            alphabet.size(),
            probs.len()
        )));
    }
    Pmf::new(alphabet, probs).map_err(|e| Error::Parse(format!("{field}: {e}")))
}

impl SpecDoc {
    pub fn into_spec(self) -> Result<SystemSpec> {
        let g = Geometry::new(self.mx, self.my, self.ms)?;
        let x = Alphabet::upto(g.mx)?;
        let demand = match self.demand {
            DemandDoc::Iid(p) => DemandLaw::Iid(pmf(x, p, "demand.iid")?),
            DemandDoc::Markov { q, init } => {
                if q.len() != x.size() {
                    return Err(Error::Parse(format!("demand.markov.Q: expected {} rows, got {}", x.size(), q.len())));
                }
                let q = TransitionMatrix::new(x, q).map_err(|e| Error::Parse(format!("demand.markov.Q: {e}")))?;
                DemandLaw::Markov {
                    q,
                    init: pmf(x, init, "demand.markov.init")?,
                }
            }
        };
        let theta = pmf(Alphabet::upto(g.ms)?, self.initial_battery, "initial_battery")?;
        SystemSpec::new(g, demand, theta)
    }

    pub fn from_spec(spec: &SystemSpec) -> Self {
        let g = spec.geometry();
        let demand = match spec.demand() {
            DemandLaw::Iid(p) => DemandDoc::Iid(p.probs().to_vec()),
            DemandLaw::Markov { q, init } => DemandDoc::Markov {
                q: q.rows().to_vec(),
                init: init.probs().to_vec(),
            },
        };
        Self {
            mx: g.mx,
            my: g.my,
            ms: g.ms,
            demand,
            initial_battery: spec.initial_battery().probs().to_vec(),
        }
    }
}

pub fn parse_spec(text: &str) -> Result<SystemSpec> {
    serde_json::from_str::<SpecDoc>(text)?.into_spec()
}

pub fn spec_to_json(spec: &SystemSpec) -> Result<String> {
    Ok(serde_json::to_string_pretty(&SpecDoc::from_spec(spec))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyDoc {
    /// `b*(y | w) = P_X(y) theta(y + w) / xi(w)` for the spec's i.i.d. demand.
    Structured { theta: Vec<f64> },
    Equiprobable,
    /// `y = x`: the battery is never used.
    Passthrough,
    /// Rows for `w = -mx..=ms`, each over `y = 0..=my`.
    TableB { table: Vec<Vec<f64>> },
    /// `table[x][s][y]`.
    TableA { table: Vec<Vec<Vec<f64>>> },
}

impl PolicyDoc {
    pub fn into_policy(self, spec: &SystemSpec) -> Result<Policy> {
        let g = spec.geometry();
        match self {
            PolicyDoc::Structured { theta } => {
                let demand = spec
                    .iid_demand()
                    .ok_or_else(|| Error::Parse("structured policies need i.i.d. demand in the spec".into()))?;
                let theta = pmf(Alphabet::upto(g.ms)?, theta, "theta")?;
                Ok(Policy::ConstantB(structured_policy(g, &theta, demand)?))
            }
            PolicyDoc::Equiprobable => Ok(Policy::ConstantB(equiprobable_policy(g))),
            PolicyDoc::Passthrough => Ok(Policy::ConstantA(ActionA::passthrough(g))),
            PolicyDoc::TableB { table } => {
                if table.len() != g.nw() {
                    return Err(Error::Parse(format!("table: expected {} rows (w = -mx..=ms), got {}", g.nw(), table.len())));
                }
                let flat = flatten(table, g.ny(), "table")?;
                Ok(Policy::ConstantB(ActionB::new(g, flat)?))
            }
            PolicyDoc::TableA { table } => {
                if table.len() != g.nx() {
                    return Err(Error::Parse(format!("table: expected {} x-blocks, got {}", g.nx(), table.len())));
                }
                let mut flat = Vec::with_capacity(g.nx() * g.ns() * g.ny());
                for (x, block) in table.into_iter().enumerate() {
                    if block.len() != g.ns() {
                        return Err(Error::Parse(format!("table[{x}]: expected {} rows, got {}", g.ns(), block.len())));
                    }
                    flat.extend(flatten(block, g.ny(), &format!("table[{x}]"))?);
                }
                Ok(Policy::ConstantA(ActionA::new(g, flat)?))
            }
        }
    }

    pub fn from_b(b: &ActionB) -> Self {
        PolicyDoc::TableB {
            table: b.table().chunks(b.geometry().ny()).map(|r| r.to_vec()).collect(),
        }
    }

    pub fn from_a(a: &ActionA) -> Self {
        let g = a.geometry();
        PolicyDoc::TableA {
            table: (0..g.nx())
                .map(|x| (0..g.ns()).map(|s| a.row(x, s).to_vec()).collect())
                .collect(),
        }
    }
}

fn flatten(rows: Vec<Vec<f64>>, width: usize, field: &str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len() * width);
    for (i, r) in rows.into_iter().enumerate() {
        if r.len() != width {
            return Err(Error::Parse(format!("{field}[{i}]: expected {width} entries, got {}", r.len())));
        }
        out.extend(r);
    }
    Ok(out)
}

pub fn parse_policy(text: &str, spec: &SystemSpec) -> Result<Policy> {
    serde_json::from_str::<PolicyDoc>(text)?.into_policy(spec)
}

/// A single-letter solution as written by `solve-iid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionDoc {
    pub mx: usize,
    pub ms: usize,
    pub theta_star: Vec<f64>,
    /// Law of `W = S - X` on `-mx..=ms`.
    pub xi_star: Vec<f64>,
    /// Rows for `w = -mx..=ms` over `y = 0..=mx`.
    pub b_star: Vec<Vec<f64>>,
    #[serde(rename = "J_star_bits")]
    pub j_star_bits: f64,
    #[serde(rename = "J_star_nats")]
    pub j_star_nats: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

impl SolutionDoc {
    pub fn from_solution(sol: &SingleLetterSolution) -> Self {
        let g = sol.b_star.geometry();
        Self {
            mx: g.mx,
            ms: g.ms,
            theta_star: sol.theta_star.probs().to_vec(),
            xi_star: sol.xi_star.probs().to_vec(),
            b_star: sol.b_star.table().chunks(g.ny()).map(|r| r.to_vec()).collect(),
            j_star_bits: sol.j_star,
            j_star_nats: Units::Nats.from_bits(sol.j_star),
            iterations: sol.iterations,
            gradient_norm: sol.gradient_norm,
            converged: sol.converged,
        }
    }

    /// Rebuilds the solution for `demand`, checking every stored field
    /// against a recomputation from `theta_star`.
    pub fn into_solution(self, demand: &Pmf) -> Result<SingleLetterSolution> {
        if demand.len() != self.mx + 1 {
            return Err(Error::Incompatible(format!(
                "solution is for mx = {}, demand has {} symbols",
                self.mx,
                demand.len()
            )));
        }
        let theta = pmf(Alphabet::upto(self.ms)?, self.theta_star, "theta_star")?;
        let xi = theta_to_xi(&theta, demand)?;
        let g = xi.geometry();
        let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(u, v)| (u - v).abs() <= SOLUTION_TOL);
        if !close(&self.xi_star, xi.probs()) {
            return Err(Error::Parse("xi_star does not match theta_star and the demand".into()));
        }
        let b = structured_policy(g, &theta, demand)?;
        if self.b_star.len() != g.nw() || !close(&flatten(self.b_star, g.ny(), "b_star")?, b.table()) {
            return Err(Error::Parse("b_star does not match theta_star and the demand".into()));
        }
        let j = iidopt::objective(&theta, demand);
        if !within(self.j_star_bits, j) {
            return Err(Error::Parse(format!("J_star_bits = {} but theta_star gives {j}", self.j_star_bits)));
        }
        if !within(self.j_star_nats, Units::Nats.from_bits(j)) {
            return Err(Error::Parse("J_star_nats disagrees with J_star_bits".into()));
        }
        Ok(SingleLetterSolution {
            theta_star: theta,
            xi_star: xi,
            j_star: j,
            b_star: b,
            iterations: self.iterations,
            gradient_norm: self.gradient_norm,
            converged: self.converged,
        })
    }
}

/// False for NaN as well as for distant values.
fn within(a: f64, b: f64) -> bool {
    (a - b).abs() <= SOLUTION_TOL
}

pub fn solution_to_json(sol: &SingleLetterSolution) -> Result<String> {
    Ok(serde_json::to_string_pretty(&SolutionDoc::from_solution(sol))?)
}

pub fn parse_solution(text: &str, demand: &Pmf) -> Result<SingleLetterSolution> {
    serde_json::from_str::<SolutionDoc>(text)?.into_solution(demand)
}

/// Output of `solve-dp`: the rate and the value functions behind it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpReport {
    /// `"finite"` or `"infinite"`.
    pub mode: String,
    /// Horizon of a finite-horizon solve.
    pub horizon: Option<usize>,
    /// `V_1(pi_1) / T` (finite) or the average-cost estimate `J` (infinite), in bits.
    pub rate_bits: f64,
    pub resolution: usize,
    pub converged: bool,
    /// Final span of relative value iteration.
    pub span: Option<f64>,
    pub iterations: Option<usize>,
    /// Grid points where the inner minimization missed its stationarity target.
    pub unconverged_points: usize,
    /// `V_1..V_T` for finite horizons, the relative value `h` otherwise.
    pub value_functions: Vec<ValueFunction>,
}

pub fn parse_dp_report(text: &str) -> Result<DpReport> {
    let mut r: DpReport = serde_json::from_str(text)?;
    match (r.mode.as_str(), r.horizon) {
        ("finite", Some(t)) if t == r.value_functions.len() => {}
        ("infinite", None) if r.value_functions.len() == 1 => {}
        _ => return Err(Error::Parse("mode, horizon and value_functions are inconsistent".into())),
    }
    if !r.rate_bits.is_finite() {
        return Err(Error::Parse("rate_bits must be finite".into()));
    }
    r.value_functions = r
        .value_functions
        .into_iter()
        .map(ValueFunction::validated)
        .collect::<Result<_>>()?;
    Ok(r)
}

pub fn value_to_json(v: &ValueFunction) -> Result<String> {
    Ok(serde_json::to_string(v)?)
}

pub fn parse_value(text: &str) -> Result<ValueFunction> {
    serde_json::from_str::<ValueFunction>(text)?.validated()
}
