//! Poisson sums checked against exact rational arithmetic in 10^-200 fixed point.

use iontrap_core::state_detection::{optimal_threshold, poisson_cdf_below, poisson_tail_from, CountModel};
use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

const DIGITS: u32 = 200;

/// Terms μ^k / k! for μ = p/q, scaled by 10^DIGITS, until they vanish.
fn scaled_terms(p: u64, q: u64) -> Vec<BigUint> {
    let scale = BigUint::from(10u32).pow(DIGITS);
    let mut terms = vec![scale];
    let mut k = 1u64;
    loop {
        let next = terms.last().unwrap() * p / (BigUint::from(q) * k);
        if next.is_zero() {
            break;
        }
        terms.push(next);
        k += 1;
    }
    terms
}

fn ratio(num: &BigUint, den: &BigUint) -> f64 {
    let scale = BigUint::from(10u32).pow(DIGITS);
    (num * &scale / den).to_f64().unwrap() / 1e200
}

/// Exact P(N < n) and P(N ≥ n) for n in 0..len.
fn oracle(p: u64, q: u64, len: usize) -> (Vec<f64>, Vec<f64>) {
    let terms = scaled_terms(p, q);
    let total: BigUint = terms.iter().sum();
    let mut below = Vec::new();
    let mut tail = Vec::new();
    let mut acc = BigUint::zero();
    for n in 0..len {
        below.push(ratio(&acc, &total));
        tail.push(ratio(&(&total - &acc), &total));
        if n < terms.len() {
            acc += &terms[n];
        }
    }
    (below, tail)
}

#[test]
fn cdf_and_tail_match_exact_sums() {
    for (p, q) in [(1, 1), (10, 1), (75, 2), (100, 1), (3, 10)] {
        let mean = p as f64 / q as f64;
        let len = (mean + 10.0 * mean.sqrt()).ceil() as usize + 5;
        let (below, tail) = oracle(p, q, len);
        let ours_below = poisson_cdf_below(mean, len);
        let ours_tail = poisson_tail_from(mean, len);
        for n in 0..len {
            assert!((ours_below[n] - below[n]).abs() < 1e-12, "mean {mean} n {n}: {} vs {}", ours_below[n], below[n]);
            assert!((ours_tail[n] - tail[n]).abs() < 1e-12, "mean {mean} n {n}: {} vs {}", ours_tail[n], tail[n]);
            if tail[n] > 1e-250 {
                // far tails keep relative precision too
                assert!((ours_tail[n] / tail[n] - 1.0).abs() < 1e-9, "mean {mean} n {n}");
            }
        }
    }
}

#[test]
fn optimal_threshold_matches_exact_scan() {
    let (p_b, q_b, p_d, q_d) = (10, 1, 1, 1);
    let len = 60;
    let (miss, _) = oracle(p_b, q_b, len);
    let (_, false_pos) = oracle(p_d, q_d, len);
    let (mut best_n, mut best_err) = (0, f64::INFINITY);
    for n in 0..len {
        let err = 0.5 * (miss[n] + false_pos[n]);
        if err < best_err {
            best_n = n;
            best_err = err;
        }
    }
    let r = optimal_threshold(&CountModel { bright_rate: 10.0, dark_rate: 1.0, integration_time: 1.0 }).unwrap();
    assert_eq!(r.threshold as usize, best_n);
    assert!((r.fidelity - (1.0 - best_err)).abs() < 1e-12);
}
