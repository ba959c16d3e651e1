mod common;

use battery_privacy::belief::{filter_joint, xi_update, Belief, XiBelief};
use battery_privacy::iidopt::{self, MinimizeOptions};
use battery_privacy::leakage::{self, history};
use battery_privacy::policy::{equiprobable_policy, lift_to_action_a, structured_policy, ActionA, Policy};
use battery_privacy::rng::stream_rng;
use battery_privacy::{Alphabet, DemandLaw, Geometry, Pmf, SystemSpec, TransitionMatrix};
use common::*;
use rand::Rng;

fn random_pmf<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|p| p / s).collect()
}

fn random_action<R: Rng>(g: Geometry, rng: &mut R) -> ActionA {
    let mut table = Vec::new();
    for x in 0..g.nx() {
        for s in 0..g.ns() {
            table.extend(random_row(g, s as i64 - x as i64, rng));
        }
    }
    ActionA::new(g, table).unwrap()
}

#[test]
fn exact_leakage_matches_enumeration_on_wider_alphabets() {
    let mut rng = stream_rng(41, 0);
    for (mx, my, ms) in [(1, 1, 2), (1, 2, 2), (2, 2, 1), (2, 3, 2)] {
        let g = Geometry::new(mx, my, ms).unwrap();
        for k in 0..4u64 {
            let px = random_pmf(&mut rng, g.nx());
            let theta = random_pmf(&mut rng, g.ns());
            let spec = SystemSpec::new(
                g,
                DemandLaw::Iid(Pmf::new(Alphabet::upto(mx).unwrap(), px.clone()).unwrap()),
                Pmf::new(Alphabet::upto(ms).unwrap(), theta.clone()).unwrap(),
            )
            .unwrap();
            let rule = RandomMemoryRule { geometry: g, seed: k };
            for horizon in 1..=3 {
                let exact = leakage::exact_leakage(&spec, &Policy::memory(rule), horizon).unwrap();
                let oracle = enumerated_rate(g, &px, &theta, horizon, &|t, xs, ss, ys| rule.row(t, xs[t], ss[t], ys));
                assert!(
                    (exact.total_rate - oracle).abs() < 1e-10,
                    "({mx},{my},{ms}) T={horizon}: {} vs {oracle}",
                    exact.total_rate
                );
            }
        }
    }
}

#[test]
fn history_policies_match_enumeration() {
    let g = Geometry::new(1, 1, 1).unwrap();
    let spec = SystemSpec::binary_uniform();
    for seed in 0..5 {
        let rule = RandomHistoryRule { geometry: g, seed };
        let bf = history::brute_force_leakage(&spec, &Policy::history(rule), 3).unwrap();
        let oracle = enumerated_rate(g, &[0.5, 0.5], &[0.5, 0.5], 3, &|t, xs, ss, ys| rule.row(t, xs, ss, ys));
        assert!((bf.total_rate - oracle).abs() < 1e-12);
    }
}

/// `P(X_{t+1}, S_{t+1} | y^t)` by summing the full joint over paths.
fn bayes_posterior(
    g: Geometry,
    q: &TransitionMatrix,
    init: &[f64],
    theta: &[f64],
    actions: &[ActionA],
    ys: &[usize],
) -> Vec<f64> {
    let (nx, ns) = (g.nx(), g.ns());
    // state after each step: the current (x, s) pair with its path weight
    let mut paths: Vec<(usize, usize, f64)> = Vec::new();
    for (x, &px) in init.iter().enumerate() {
        for (s, &ps) in theta.iter().enumerate() {
            paths.push((x, s, px * ps));
        }
    }
    for (t, &y) in ys.iter().enumerate() {
        let mut next = Vec::new();
        for &(x, s, p) in &paths {
            let w = p * actions[t].prob(y, x, s);
            if w == 0.0 {
                continue;
            }
            let sn = (s as i64 + y as i64 - x as i64) as usize;
            for xn in 0..nx {
                next.push((xn, sn, w * q.row(x)[xn]));
            }
        }
        paths = next;
    }
    let mut post = vec![0.0; nx * ns];
    for (x, s, p) in paths {
        post[x * ns + s] += p;
    }
    let z: f64 = post.iter().sum();
    post.iter().map(|p| p / z).collect()
}

#[test]
fn joint_filter_matches_bayes_enumeration() {
    let mut rng = stream_rng(7, 1);
    let g = Geometry::new(2, 2, 2).unwrap();
    let x = Alphabet::upto(2).unwrap();
    for _ in 0..20 {
        let q = TransitionMatrix::new(x, (0..3).map(|_| random_pmf(&mut rng, 3)).collect()).unwrap();
        let init = random_pmf(&mut rng, 3);
        let theta = random_pmf(&mut rng, 3);
        let actions: Vec<ActionA> = (0..4).map(|_| random_action(g, &mut rng)).collect();
        let mut pi = Belief::product_in(g, &Pmf::new(x, init.clone()).unwrap(), &Pmf::new(x, theta.clone()).unwrap()).unwrap();
        let mut ys = Vec::new();
        for a in actions.iter() {
            let y = rng.random_range(0..3);
            match filter_joint(&pi, y, a, &q) {
                Ok(next) => {
                    ys.push(y);
                    pi = next;
                    let oracle = bayes_posterior(g, &q, &init, &theta, &actions, &ys);
                    for (a, b) in pi.joint().iter().zip(&oracle) {
                        assert!((a - b).abs() < 1e-12);
                    }
                }
                Err(_) => break,
            }
        }
    }
}

#[test]
fn difference_filter_is_the_joint_filter_marginal() {
    let mut rng = stream_rng(8, 2);
    let demand = Pmf::binomial(3, 0.4).unwrap();
    let g = Geometry::new(3, 3, 3).unwrap();
    let q = TransitionMatrix::iid(&demand);
    let theta = Pmf::new(Alphabet::upto(3).unwrap(), random_pmf(&mut rng, 4)).unwrap();
    let b = equiprobable_policy(g);
    let a = lift_to_action_a(&b);
    let mut pi = Belief::product_in(g, &demand, &theta).unwrap();
    let mut xi: XiBelief = pi.difference();
    for _ in 0..15 {
        let y = rng.random_range(0..=3);
        let (Ok(p2), Ok(x2)) = (filter_joint(&pi, y, &a, &q), xi_update(&xi, y, &b, &demand)) else {
            continue;
        };
        pi = p2;
        xi = x2;
        let marginal = pi.difference();
        for (u, v) in marginal.probs().iter().zip(xi.probs()) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn single_letter_optimum_beats_random_battery_laws() {
    let mut rng = stream_rng(3, 3);
    for (n, p, ms) in [(1, 0.5, 1), (3, 0.3, 2), (6, 0.5, 5), (4, 0.7, 4)] {
        let demand = Pmf::binomial(n, p).unwrap();
        let sol = iidopt::minimize(&demand, Alphabet::upto(ms).unwrap(), MinimizeOptions::default()).unwrap();
        let oracle = difference_information(sol.theta_star.probs(), demand.probs());
        assert!((sol.j_star - oracle).abs() < 1e-12);
        for _ in 0..200 {
            let theta = random_pmf(&mut rng, ms + 1);
            assert!(difference_information(&theta, demand.probs()) >= sol.j_star - 1e-12);
        }
    }
}

#[test]
fn stationary_structured_policy_leaks_the_single_letter_rate() {
    let demand = Pmf::binomial(3, 0.5).unwrap();
    let sol = iidopt::minimize(&demand, Alphabet::upto(2).unwrap(), MinimizeOptions::default()).unwrap();
    let spec = SystemSpec::iid(demand.clone(), 2, sol.theta_star.clone()).unwrap();
    let b = structured_policy(spec.geometry(), &sol.theta_star, &demand).unwrap();
    let r = leakage::exact_leakage(&spec, &Policy::ConstantB(b), 5).unwrap();
    for v in &r.per_step {
        assert!((v - sol.j_star).abs() < 1e-10);
    }
}
