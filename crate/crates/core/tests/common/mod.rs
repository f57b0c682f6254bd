//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use hhepi::{FinalSizeDistribution, HouseholdSizeDistribution, LocalRates};

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Joint law of (mild, severe) ever infected in one MT household with `k`
/// mild-type and `n - k` severe-type members, unit removal rates and escape
/// probabilities `pi`, by enumerating the embedded jump chain.
///
/// Members who fail to escape global infection are taken as initially
/// infective; the final size does not depend on when they were infected.
pub fn mt_household_ctmc(n: usize, k: usize, local: &LocalRates, pi: (f64, f64)) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; n - k + 1]; k + 1];
    for a in 0..=k {
        for b in 0..=(n - k) {
            let w = binom(k, a)
                * (1.0 - pi.0).powi(a as i32)
                * pi.0.powi((k - a) as i32)
                * binom(n - k, b)
                * (1.0 - pi.1).powi(b as i32)
                * pi.1.powi((n - k - b) as i32);
            if w == 0.0 {
                continue;
            }
            for ((sm, ss), p) in absorb(k - a, n - k - b, a, b, local) {
                out[k - sm][n - k - ss] += w * p;
            }
        }
    }
    out
}

/// Absorption law over remaining susceptibles `(s_M, s_S)`.
fn absorb(sm: usize, ss: usize, im: usize, is: usize, l: &LocalRates) -> BTreeMap<(usize, usize), f64> {
    // Every jump lowers 2 s + i by one, so sweeping levels downward visits
    // each state after all of its predecessors.
    let mut mass: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
    let mut done = BTreeMap::new();
    mass.insert((sm, ss, im, is), 1.0);
    let top = 2 * (sm + ss) + im + is;
    for level in (0..=top).rev() {
        let here: Vec<_> = mass.iter().filter(|(s, _)| 2 * (s.0 + s.1) + s.2 + s.3 == level).map(|(s, p)| (*s, *p)).collect();
        for (s, p) in here {
            mass.remove(&s);
            let (sm, ss, im, is) = s;
            if im + is == 0 {
                *done.entry((sm, ss)).or_insert(0.0) += p;
                continue;
            }
            let to_m = sm as f64 * (im as f64 * l.mm + is as f64 * l.sm);
            let to_s = ss as f64 * (im as f64 * l.ms + is as f64 * l.ss);
            let rem_m = im as f64;
            let rem_s = is as f64;
            let total = to_m + to_s + rem_m + rem_s;
            let mut push = |t: (usize, usize, usize, usize), r: f64| {
                if r > 0.0 {
                    *mass.entry(t).or_insert(0.0) += p * r / total;
                }
            };
            if sm > 0 {
                push((sm - 1, ss, im + 1, is), to_m);
            }
            if ss > 0 {
                push((sm, ss - 1, im, is + 1), to_s);
            }
            if im > 0 {
                push((sm, ss, im - 1, is), rem_m);
            }
            if is > 0 {
                push((sm, ss, im, is - 1), rem_s);
            }
        }
    }
    done
}

/// Generalized divergence `sum q ln(q/p) - q + p`, each term written with
/// `ln_1p` so small perturbations keep their digits; accumulated in
/// compensated arithmetic. Equals the plain divergence for normalized inputs.
pub fn kl_reference(q: &FinalSizeDistribution, p: &FinalSizeDistribution, dist: &HouseholdSizeDistribution) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (n, rho) in dist.support() {
        for (a, b, qv) in q.cells(n) {
            let pv = p.get(n, a, b);
            let term = if qv > 0.0 {
                let r = (qv - pv) / pv;
                // q ln(1 + r) - q + p with r = q/p - 1.
                pv * ((1.0 + r) * r.ln_1p() - r)
            } else {
                pv
            };
            let x = rho * term;
            let t = sum + x;
            if sum.abs() >= x.abs() {
                comp += (sum - t) + x;
            } else {
                comp += (x - t) + sum;
            }
            sum = t;
        }
    }
    sum + comp
}

pub fn perturbed(p: &FinalSizeDistribution, n: usize, a: usize, b: usize, eps: f64) -> FinalSizeDistribution {
    let mut q = p.clone();
    q.add(n, a, b, eps);
    q.normalize();
    q
}
