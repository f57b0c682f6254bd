//! Multitype household model: severity is a fixed individual type.
//!
//! A size-`n` household with `k` mild-type members is solved as a closed
//! two-type epidemic in which each member independently escapes infection
//! from outside with probability `pi_M` or `pi_S`. The population-level
//! escape probabilities come from the balance equations linking them to the
//! overall attack fractions `(z_M, z_S)`.

use serde::{Deserialize, Serialize};

use crate::final_size::FinalSizeDistribution;
use crate::math::{binomial_pmf, choose};
use crate::population::HouseholdSizeDistribution;
use crate::{Error, Result};

/// Tolerance on solver probabilities before clamping to `[0, 1]`.
pub const ILL_CONDITIONED_SLACK: f64 = 1e-8;

/// Within-household contact rates per infectious period. `ms` is the rate at
/// which a mild infective contacts a given severe-type housemate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalRates {
    pub mm: f64,
    pub ms: f64,
    pub sm: f64,
    pub ss: f64,
}

impl LocalRates {
    pub const ZERO: LocalRates = LocalRates { mm: 0.0, ms: 0.0, sm: 0.0, ss: 0.0 };

    pub fn new(mm: f64, ms: f64, sm: f64, ss: f64) -> Self {
        Self { mm, ms, sm, ss }
    }

    fn validate(&self, field: &str) -> Result<()> {
        for (name, v) in [("mm", self.mm), ("ms", self.ms), ("sm", self.sm), ("ss", self.ss)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{field}.{name}"), format!("rate must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Global rates have the same layout as local ones but act per `1/N`.
pub type MtGlobalRates = LocalRates;

/// Probabilities that a mild / severe type avoids global infection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeProbs {
    pub mild: f64,
    pub severe: f64,
}

impl EscapeProbs {
    pub fn new(mild: f64, severe: f64) -> Self {
        Self { mild, severe }
    }

    fn check(&self) -> Result<()> {
        for (which, v) in [("pi_M", self.mild), ("pi_S", self.severe)] {
            if !(v.is_finite() && v <= 1.0) || v < 0.0 {
                return Err(Error::invalid(which, format!("escape probability must lie in (0, 1], got {v}")));
            }
            if v == 0.0 {
                return Err(Error::ZeroEscape { which, value: v });
            }
        }
        Ok(())
    }
}

/// The seven identifiable MT parameters, with removal rates fixed at one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtParams {
    pub pi_m: f64,
    pub pi_s: f64,
    pub local: LocalRates,
    pub beta_m: f64,
}

impl MtParams {
    pub const NAMES: [&'static str; 7] =
        ["pi_M", "pi_S", "lambda_L_MM", "lambda_L_MS", "lambda_L_SM", "lambda_L_SS", "beta_M"];

    pub fn escape(&self) -> EscapeProbs {
        EscapeProbs::new(self.pi_m, self.pi_s)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let l = &self.local;
        vec![self.pi_m, self.pi_s, l.mm, l.ms, l.sm, l.ss, self.beta_m]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        assert_eq!(x.len(), 7);
        Self { pi_m: x[0], pi_s: x[1], local: LocalRates::new(x[2], x[3], x[4], x[5]), beta_m: x[6] }
    }

    pub fn validate(&self) -> Result<()> {
        self.escape().check()?;
        self.local.validate("mt.local")?;
        check_probability("mt.beta_m", self.beta_m)
    }
}

/// Full generating parameters: global rates instead of escape probabilities.
/// Removal rates default to one; other values are used only by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtGeneration {
    pub global: MtGlobalRates,
    pub local: LocalRates,
    pub beta_m: f64,
    #[serde(default = "one")]
    pub gamma_m: f64,
    #[serde(default = "one")]
    pub gamma_s: f64,
}

fn one() -> f64 {
    1.0
}

impl MtGeneration {
    /// The illustrative parameter set: `beta_M = 0.4`, global rates
    /// `(0.25, 0.8, 0.8, 1.5)` and local rates `(0.2, 0.4, 0.4, 0.8)`.
    pub fn reference() -> Self {
        Self {
            global: LocalRates::new(0.25, 0.8, 0.8, 1.5),
            local: LocalRates::new(0.2, 0.4, 0.4, 0.8),
            beta_m: 0.4,
            gamma_m: 1.0,
            gamma_s: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.global.validate("mt.global")?;
        self.local.validate("mt.local")?;
        check_probability("mt.beta_m", self.beta_m)?;
        for (f, g) in [("mt.gamma_m", self.gamma_m), ("mt.gamma_s", self.gamma_s)] {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::invalid(f, format!("removal rate must be positive, got {g}")));
            }
        }
        Ok(())
    }

    /// Rescales infection rates from each infective type by its mean
    /// infectious period, giving an equivalent unit-removal-rate model.
    pub fn normalized(&self) -> Self {
        let (gm, gs) = (self.gamma_m, self.gamma_s);
        let scale = |r: &LocalRates| LocalRates::new(r.mm / gm, r.ms / gm, r.sm / gs, r.ss / gs);
        Self { global: scale(&self.global), local: scale(&self.local), beta_m: self.beta_m, gamma_m: 1.0, gamma_s: 1.0 }
    }
}

pub(crate) fn check_probability(field: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(field, format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Joint law of `(Z_M, Z_S)` for one household, `0 <= i <= k`,
/// `0 <= j <= n - k`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    pub n: usize,
    pub k: usize,
    probs: Vec<f64>,
}

impl JointTable {
    fn width(&self) -> usize {
        self.n - self.k + 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i > self.k || j > self.n - self.k {
            return 0.0;
        }
        self.probs[i * self.width() + j]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.width();
        self.probs.iter().enumerate().map(move |(idx, &p)| (idx / w, idx % w, p))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `(E[Z_M], E[Z_S])`.
    pub fn means(&self) -> (f64, f64) {
        self.iter().fold((0.0, 0.0), |(a, b), (i, j, p)| (a + i as f64 * p, b + j as f64 * p))
    }

    /// Largest absolute residual of the triangular system at these values.
    pub fn residual(&self, local: &LocalRates, pi: EscapeProbs) -> f64 {
        let (n, k) = (self.n, self.k);
        let mut worst: f64 = 0.0;
        for i1 in 0..=k {
            for j1 in 0..=n - k {
                let (hm, hs) = h_factors(n, k, i1, j1, local);
                let scale = pi.mild.powi((k - i1) as i32) * pi.severe.powi((n - k - j1) as i32);
                let mut lhs = 0.0;
                for i in 0..=i1 {
                    for j in 0..=j1 {
                        lhs += choose(k - i, i1 - i) * choose(n - k - j, j1 - j) * self.get(i, j)
                            / (scale * hm.powi(i as i32) * hs.powi(j as i32));
                    }
                }
                let rhs = choose(k, i1) * choose(n - k, j1);
                worst = worst.max(((lhs - rhs) / rhs).abs());
            }
        }
        worst
    }
}

fn h_factors(n: usize, k: usize, i1: usize, j1: usize, l: &LocalRates) -> (f64, f64) {
    let sus_m = (k - i1) as f64;
    let sus_s = (n - k - j1) as f64;
    (1.0 / (1.0 + sus_m * l.mm + sus_s * l.ms), 1.0 / (1.0 + sus_m * l.sm + sus_s * l.ss))
}

/// Final-size law of a size-`n` household with `k` mild-type members, local
/// rates `local` and global escape probabilities `pi`.
///
/// Forward substitution of the triangular system in order of increasing
/// `i1 + j1`: each equation introduces one new unknown `P(i1, j1)`.
pub fn household_final_size(n: usize, k: usize, local: &LocalRates, pi: EscapeProbs) -> Result<JointTable> {
    if k > n {
        return Err(Error::invalid("k", format!("mild count {k} exceeds household size {n}")));
    }
    pi.check()?;
    let severe = n - k;
    let width = severe + 1;
    let mut probs = vec![0.0; (k + 1) * width];
    let mut hm_pow = vec![0.0; k + 1];
    let mut hs_pow = vec![0.0; severe + 1];
    for total in 0..=n {
        for i1 in total.saturating_sub(severe)..=total.min(k) {
            let j1 = total - i1;
            let (hm, hs) = h_factors(n, k, i1, j1, local);
            hm_pow[0] = 1.0;
            for e in 1..=i1 {
                hm_pow[e] = hm_pow[e - 1] * hm;
            }
            hs_pow[0] = 1.0;
            for e in 1..=j1 {
                hs_pow[e] = hs_pow[e - 1] * hs;
            }
            // P(i1,j1) = C(k,i1) C(n-k,j1) pi_M^(k-i1) pi_S^(n-k-j1) hM^i1 hS^j1
            //          - sum_{(i,j) < (i1,j1)} C(k-i,i1-i) C(n-k-j,j1-j) P(i,j) hM^(i1-i) hS^(j1-j)
            let mut value = choose(k, i1)
                * choose(severe, j1)
                * pi.mild.powi((k - i1) as i32)
                * pi.severe.powi((severe - j1) as i32)
                * hm_pow[i1]
                * hs_pow[j1];
            for i in 0..=i1 {
                for j in 0..=j1 {
                    if i == i1 && j == j1 {
                        continue;
                    }
                    value -= choose(k - i, i1 - i)
                        * choose(severe - j, j1 - j)
                        * probs[i * width + j]
                        * hm_pow[i1 - i]
                        * hs_pow[j1 - j];
                }
            }
            probs[i1 * width + j1] = value;
        }
    }
    for i in 0..=k {
        for j in 0..=severe {
            let p = probs[i * width + j];
            if !p.is_finite() || p < -ILL_CONDITIONED_SLACK || p > 1.0 + ILL_CONDITIONED_SLACK {
                return Err(Error::IllConditioned { n, k, i, j, value: p });
            }
        }
    }
    probs.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
    Ok(JointTable { n, k, probs })
}

/// `(mu_M^(n,k), mu_S^(n,k))`.
pub fn household_final_size_means(n: usize, k: usize, local: &LocalRates, pi: EscapeProbs) -> Result<(f64, f64)> {
    Ok(household_final_size(n, k, local, pi)?.means())
}

/// Escape probabilities implied by attack fractions `(z_M, z_S)`.
pub fn escape_from_attack(global: &MtGlobalRates, z_m: f64, z_s: f64) -> EscapeProbs {
    EscapeProbs::new((-(z_m * global.mm + z_s * global.sm)).exp(), (-(z_m * global.ms + z_s * global.ss)).exp())
}

/// Right-hand side of the balance equations: the attack fractions produced by
/// escape probabilities `pi`.
pub fn attack_from_escape(
    local: &LocalRates,
    beta_m: f64,
    dist: &HouseholdSizeDistribution,
    pi: EscapeProbs,
) -> Result<(f64, f64)> {
    let (mut z_m, mut z_s) = (0.0, 0.0);
    for (n, rho) in dist.support() {
        for k in 0..=n {
            let w = binomial_pmf(n, k, beta_m);
            if w == 0.0 {
                continue;
            }
            let (mm, ms) = household_final_size_means(n, k, local, pi)?;
            z_m += rho * w * mm;
            z_s += rho * w * ms;
        }
    }
    let mu = dist.mean_size();
    Ok((z_m / mu, z_s / mu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceSolution {
    pub z_m: f64,
    pub z_s: f64,
    pub pi_m: f64,
    pub pi_s: f64,
    pub iterations: usize,
    /// Iteration collapsed to the trivial solution: no established epidemic.
    pub subcritical: bool,
}

impl BalanceSolution {
    pub fn escape(&self) -> EscapeProbs {
        EscapeProbs::new(self.pi_m, self.pi_s)
    }
}

/// Options for [`solve_balance`].
#[derive(Debug, Clone, Copy)]
pub struct BalanceOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Attack fractions below this count as the trivial solution.
    pub trivial_threshold: f64,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        Self { tolerance: 1e-12, max_iterations: 100_000, trivial_threshold: 1e-8 }
    }
}

/// Largest solution of the balance equations.
///
/// Fixed-point iteration from the all-infected corner `(beta_M, 1 - beta_M)`.
/// The map is monotone, so iterates decrease towards the largest fixed
/// point; a half step is taken whenever successive increments change sign.
pub fn solve_balance(
    gen: &MtGeneration,
    dist: &HouseholdSizeDistribution,
    opts: BalanceOptions,
) -> Result<BalanceSolution> {
    gen.validate()?;
    let gen = gen.normalized();
    let mut z = (gen.beta_m, 1.0 - gen.beta_m);
    let mut last_step = (0.0, 0.0);
    let mut damped = false;
    for iteration in 1..=opts.max_iterations {
        let pi = escape_from_attack(&gen.global, z.0, z.1);
        let f = attack_from_escape(&gen.local, gen.beta_m, dist, pi)?;
        let mut step = (f.0 - z.0, f.1 - z.1);
        if step.0 * last_step.0 < 0.0 || step.1 * last_step.1 < 0.0 {
            damped = true;
        }
        if damped {
            step = (0.5 * step.0, 0.5 * step.1);
        }
        let next = (z.0 + step.0, z.1 + step.1);
        let change = (next.0 - z.0).abs().max((next.1 - z.1).abs());
        last_step = step;
        z = next;
        if change < opts.tolerance {
            if z.0.max(z.1) < opts.trivial_threshold {
                return Ok(BalanceSolution { z_m: 0.0, z_s: 0.0, pi_m: 1.0, pi_s: 1.0, iterations: iteration, subcritical: true });
            }
            let pi = escape_from_attack(&gen.global, z.0, z.1);
            return Ok(BalanceSolution {
                z_m: z.0,
                z_s: z.1,
                pi_m: pi.mild,
                pi_s: pi.severe,
                iterations: iteration,
                subcritical: false,
            });
        }
    }
    Err(Error::BalanceNotConverged { iterations: opts.max_iterations, z_m: z.0, z_s: z.1 })
}

/// Largest change in `(z_M, z_S)` when the solution is pushed once more
/// through the escape map and the balance equations.
pub fn balance_residual(gen: &MtGeneration, dist: &HouseholdSizeDistribution, sol: &BalanceSolution) -> Result<f64> {
    let gen = gen.normalized();
    let pi = escape_from_attack(&gen.global, sol.z_m, sol.z_s);
    let pi_gap = (pi.mild - sol.pi_m).abs().max((pi.severe - sol.pi_s).abs());
    let f = attack_from_escape(&gen.local, gen.beta_m, dist, pi)?;
    Ok(pi_gap.max((f.0 - sol.z_m).abs()).max((f.1 - sol.z_s).abs()))
}

/// Household final-size distribution for fitted parameters: a binomial
/// mixture over the number of mild-type members.
pub fn mt_final_size_distribution(params: &MtParams, n_max: usize) -> Result<FinalSizeDistribution> {
    params.validate()?;
    let mut out = FinalSizeDistribution::zeros(n_max);
    for n in 1..=n_max {
        for k in 0..=n {
            let w = binomial_pmf(n, k, params.beta_m);
            if w == 0.0 {
                continue;
            }
            let table = household_final_size(n, k, &params.local, params.escape())?;
            for (i, j, p) in table.iter() {
                out.add(n, i, j, w * p);
            }
        }
    }
    Ok(out)
}

/// Asymptotic data from generating parameters: balance solve, then mixture.
/// Subcritical parameters give the all-escape distribution and a flag.
pub fn mt_generate(
    gen: &MtGeneration,
    dist: &HouseholdSizeDistribution,
) -> Result<(FinalSizeDistribution, BalanceSolution)> {
    let sol = solve_balance(gen, dist, BalanceOptions::default())?;
    let norm = gen.normalized();
    let params = MtParams { pi_m: sol.pi_m, pi_s: sol.pi_s, local: norm.local, beta_m: norm.beta_m };
    Ok((mt_final_size_distribution(&params, dist.n_max())?, sol))
}
