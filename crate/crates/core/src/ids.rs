//! Infector-dependent-severity household model.
//!
//! Each household of size `n` is in a state `(n: i, j, k, l)`: mild and
//! severe infectives, mild and severe removed. As the number of households
//! grows, the fractions `x_{n:i,j,k,l}(t)` of size-`n` households in each
//! state follow a deterministic ODE. Starting from a tiny severe seed and
//! integrating until the infective fraction is negligible gives the final
//! size distribution of an established epidemic.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::final_size::FinalSizeDistribution;
use crate::math::{binomial_pmf, choose};
use crate::mt::check_probability;
use crate::ode::{integrate_until, IntegratorOptions, OdeSystem};
use crate::population::{HouseholdSizeDistribution, MAX_HOUSEHOLD_SIZE};
use crate::{Error, Result};

/// The nine identifiable IDS parameters (`gamma_M = 1`).
///
/// `p_*_mm` is the probability that a susceptible contacted by a mild
/// infective becomes mild; `p_*_sm` the same for a severe infector. The
/// complementary severe-outcome probabilities are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdsParams {
    pub lambda_g_m: f64,
    pub lambda_g_s: f64,
    pub lambda_l_m: f64,
    pub lambda_l_s: f64,
    pub p_g_mm: f64,
    pub p_g_sm: f64,
    pub p_l_mm: f64,
    pub p_l_sm: f64,
    pub gamma_s: f64,
}

impl IdsParams {
    pub const NAMES: [&'static str; 9] = [
        "lambda_G_M", "lambda_G_S", "lambda_L_M", "lambda_L_S", "p_G_MM", "p_G_SM", "p_L_MM", "p_L_SM", "gamma_S",
    ];

    pub const GAMMA_M: f64 = 1.0;

    /// The illustrative parameter set with `gamma_S = 2`.
    pub fn reference() -> Self {
        Self {
            lambda_g_m: 1.0,
            lambda_g_s: 2.0,
            lambda_l_m: 0.5,
            lambda_l_s: 1.0,
            p_g_mm: 0.8,
            p_g_sm: 0.2,
            p_l_mm: 0.5,
            p_l_sm: 0.1,
            gamma_s: 2.0,
        }
    }

    pub fn p_g_ms(&self) -> f64 {
        1.0 - self.p_g_mm
    }

    pub fn p_g_ss(&self) -> f64 {
        1.0 - self.p_g_sm
    }

    pub fn p_l_ms(&self) -> f64 {
        1.0 - self.p_l_mm
    }

    pub fn p_l_ss(&self) -> f64 {
        1.0 - self.p_l_sm
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.lambda_g_m,
            self.lambda_g_s,
            self.lambda_l_m,
            self.lambda_l_s,
            self.p_g_mm,
            self.p_g_sm,
            self.p_l_mm,
            self.p_l_sm,
            self.gamma_s,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        assert_eq!(x.len(), 9);
        Self {
            lambda_g_m: x[0],
            lambda_g_s: x[1],
            lambda_l_m: x[2],
            lambda_l_s: x[3],
            p_g_mm: x[4],
            p_g_sm: x[5],
            p_l_mm: x[6],
            p_l_sm: x[7],
            gamma_s: x[8],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("lambda_g_m", self.lambda_g_m), ("lambda_g_s", self.lambda_g_s), ("lambda_l_m", self.lambda_l_m), ("lambda_l_s", self.lambda_l_s)]
        {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("ids.{name}"), format!("rate must be finite and >= 0, got {v}")));
            }
        }
        for (name, p) in [("p_g_mm", self.p_g_mm), ("p_g_sm", self.p_g_sm), ("p_l_mm", self.p_l_mm), ("p_l_sm", self.p_l_sm)] {
            check_probability(&format!("ids.{name}"), p)?;
        }
        if !(self.gamma_s.is_finite() && self.gamma_s > 0.0) {
            return Err(Error::invalid("ids.gamma_s", format!("removal rate must be positive, got {}", self.gamma_s)));
        }
        Ok(())
    }
}

/// `(n: i, j, k, l)`: mild and severe infectives, mild and severe removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HouseholdState {
    pub n: usize,
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub l: usize,
}

impl HouseholdState {
    pub fn new(n: usize, i: usize, j: usize, k: usize, l: usize) -> Option<Self> {
        (i + j + k + l <= n).then_some(Self { n, i, j, k, l })
    }

    pub fn susceptibles(&self) -> usize {
        self.n - self.i - self.j - self.k - self.l
    }

    pub fn infectives(&self) -> usize {
        self.i + self.j
    }
}

/// Dense index over all household states for sizes `1..=n_max`: ascending
/// `n`, then lexicographic `(i, j, k, l)`.
#[derive(Debug, Clone)]
pub struct StateIndex {
    n_max: usize,
    states: Vec<HouseholdState>,
    lookup: HashMap<HouseholdState, usize>,
}

impl StateIndex {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Dimension after dropping one state per size via normalization.
    pub fn reduced_len(&self) -> usize {
        self.len() - self.n_max
    }

    pub fn states(&self) -> &[HouseholdState] {
        &self.states
    }

    pub fn index_of(&self, s: &HouseholdState) -> Option<usize> {
        self.lookup.get(s).copied()
    }

    pub fn state(&self, idx: usize) -> HouseholdState {
        self.states[idx]
    }
}

pub fn enumerate_states(n_max: usize) -> Result<StateIndex> {
    if n_max == 0 || n_max > MAX_HOUSEHOLD_SIZE {
        return Err(Error::invalid("household.props", format!("n_max must lie in 1..={MAX_HOUSEHOLD_SIZE}, got {n_max}")));
    }
    let mut states = Vec::new();
    for n in 1..=n_max {
        for i in 0..=n {
            for j in 0..=n - i {
                for k in 0..=n - i - j {
                    for l in 0..=n - i - j - k {
                        states.push(HouseholdState { n, i, j, k, l });
                    }
                }
            }
        }
    }
    let lookup = states.iter().enumerate().map(|(idx, s)| (*s, idx)).collect();
    Ok(StateIndex { n_max, states, lookup })
}

/// `C(n_max + 5, 5) - n_max - 1`.
pub fn reduced_dimension_formula(n_max: usize) -> usize {
    choose(n_max + 5, 5) as usize - n_max - 1
}

#[derive(Debug, Clone, Copy)]
struct StateInfo {
    i: f64,
    j: f64,
    sus: f64,
    /// `rho_n i / mu_H` and `rho_n j / mu_H`.
    w_mild: f64,
    w_severe: f64,
    to_mild: usize,
    to_severe: usize,
    mild_removal: usize,
    severe_removal: usize,
}

/// The household-state ODE for fixed parameters and household distribution.
///
/// Written for the per-size fractions `x_{n:.}`, i.e. the `rho_n`-scaled
/// system divided through by `rho_n`. Each state's outflows are computed once
/// and credited to their targets, so each size block conserves mass exactly.
pub struct IdsSystem {
    params: IdsParams,
    index: StateIndex,
    info: Vec<StateInfo>,
}

const NONE: usize = usize::MAX;

impl IdsSystem {
    pub fn new(params: IdsParams, dist: &HouseholdSizeDistribution) -> Result<Self> {
        params.validate()?;
        let index = enumerate_states(dist.n_max())?;
        let mu = dist.mean_size();
        let find = |s: Option<HouseholdState>| s.and_then(|s| index.index_of(&s)).unwrap_or(NONE);
        let info = index
            .states()
            .iter()
            .map(|s| {
                let rho = dist.rho(s.n);
                let sus = s.susceptibles();
                StateInfo {
                    i: s.i as f64,
                    j: s.j as f64,
                    sus: sus as f64,
                    w_mild: rho * s.i as f64 / mu,
                    w_severe: rho * s.j as f64 / mu,
                    to_mild: if sus > 0 { find(HouseholdState::new(s.n, s.i + 1, s.j, s.k, s.l)) } else { NONE },
                    to_severe: if sus > 0 { find(HouseholdState::new(s.n, s.i, s.j + 1, s.k, s.l)) } else { NONE },
                    mild_removal: if s.i > 0 { find(HouseholdState::new(s.n, s.i - 1, s.j, s.k + 1, s.l)) } else { NONE },
                    severe_removal: if s.j > 0 { find(HouseholdState::new(s.n, s.i, s.j - 1, s.k, s.l + 1)) } else { NONE },
                }
            })
            .collect();
        Ok(Self { params, index, info })
    }

    pub fn index(&self) -> &StateIndex {
        &self.index
    }

    /// Population fractions `(i_M, i_S)` currently infective.
    pub fn infective_fractions(&self, x: &[f64]) -> (f64, f64) {
        self.info.iter().zip(x).fold((0.0, 0.0), |(a, b), (s, &v)| (a + s.w_mild * v, b + s.w_severe * v))
    }

    /// Initial condition: severe infectives seeded independently in each
    /// individual with probability `f_s`.
    pub fn initial_state(&self, f_s: f64) -> Vec<f64> {
        self.index
            .states()
            .iter()
            .map(|s| if s.i == 0 && s.k == 0 && s.l == 0 { binomial_pmf(s.n, s.j, f_s) } else { 0.0 })
            .collect()
    }
}

impl OdeSystem for IdsSystem {
    fn dim(&self) -> usize {
        self.info.len()
    }

    fn rhs(&self, x: &[f64], dx: &mut [f64]) {
        let p = &self.params;
        let (i_m, i_s) = self.infective_fractions(x);
        let g_mild = p.lambda_g_m * p.p_g_mm * i_m + p.lambda_g_s * p.p_g_sm * i_s;
        let g_severe = p.lambda_g_m * p.p_g_ms() * i_m + p.lambda_g_s * p.p_g_ss() * i_s;
        let (lm_mild, lm_severe) = (p.lambda_l_m * p.p_l_mm, p.lambda_l_m * p.p_l_ms());
        let (ls_mild, ls_severe) = (p.lambda_l_s * p.p_l_sm, p.lambda_l_s * p.p_l_ss());
        dx.iter_mut().for_each(|d| *d = 0.0);
        for (idx, s) in self.info.iter().enumerate() {
            let v = x[idx];
            if v == 0.0 {
                continue;
            }
            let mut out = 0.0;
            if s.sus > 0.0 {
                let to_mild = (g_mild + lm_mild * s.i + ls_mild * s.j) * s.sus * v;
                let to_severe = (g_severe + lm_severe * s.i + ls_severe * s.j) * s.sus * v;
                dx[s.to_mild] += to_mild;
                dx[s.to_severe] += to_severe;
                out += to_mild + to_severe;
            }
            if s.i > 0.0 {
                let r = IdsParams::GAMMA_M * s.i * v;
                dx[s.mild_removal] += r;
                out += r;
            }
            if s.j > 0.0 {
                let r = p.gamma_s * s.j * v;
                dx[s.severe_removal] += r;
                out += r;
            }
            dx[idx] -= out;
        }
    }
}

/// Time derivatives of the household-state fractions `xtilde`.
pub fn ids_rhs(xtilde: &[f64], params: &IdsParams, dist: &HouseholdSizeDistribution) -> Result<Vec<f64>> {
    let sys = IdsSystem::new(*params, dist)?;
    if xtilde.len() != sys.dim() {
        return Err(Error::invalid("xtilde", format!("expected {} states, got {}", sys.dim(), xtilde.len())));
    }
    let mut dx = vec![0.0; sys.dim()];
    sys.rhs(xtilde, &mut dx);
    Ok(dx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdsSolveOptions {
    /// Initial severe fraction.
    pub f_s: f64,
    /// Stop once the infective fraction drops below this.
    pub delta: f64,
    pub max_horizon: f64,
    pub integrator: IntegratorOptions,
}

impl Default for IdsSolveOptions {
    fn default() -> Self {
        Self { f_s: 1e-5, delta: 1e-7, max_horizon: 1e6, integrator: IntegratorOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdsDiagnostics {
    pub stop_time: f64,
    pub final_infective: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
    /// Largest `|sum - 1|` over size blocks at the stopping time.
    pub normalization_error: f64,
    /// Mass of final cells that came out more negative than the clamp floor.
    pub flagged_negative: f64,
    /// Overall attack fraction at the stopping time.
    pub attack_fraction: f64,
}

const NEGATIVE_CLAMP_FLOOR: f64 = -1e-10;

/// Final-size distribution of the IDS model.
pub fn ids_final_size(
    params: &IdsParams,
    dist: &HouseholdSizeDistribution,
    opts: &IdsSolveOptions,
) -> Result<(FinalSizeDistribution, IdsDiagnostics)> {
    if !(opts.delta > 0.0 && opts.delta < opts.f_s && opts.f_s < 1.0) {
        return Err(Error::invalid("ids.solve", format!("need 0 < delta < f_s < 1, got delta={} f_s={}", opts.delta, opts.f_s)));
    }
    let sys = IdsSystem::new(*params, dist)?;
    let x0 = sys.initial_state(opts.f_s);
    let delta = opts.delta;
    let hit = integrate_until(
        &sys,
        &x0,
        opts.max_horizon,
        |x| {
            let (m, s) = sys.infective_fractions(x);
            m + s - delta
        },
        &opts.integrator,
    )?;
    let (i_m, i_s) = sys.infective_fractions(&hit.y);

    let n_max = dist.n_max();
    let mut block_sums = vec![0.0; n_max];
    for (s, v) in sys.index.states().iter().zip(&hit.y) {
        block_sums[s.n - 1] += v;
    }
    let normalization_error = block_sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);

    let mut out = FinalSizeDistribution::zeros(n_max);
    let mut flagged_negative = 0.0;
    for (s, &v) in sys.index.states().iter().zip(&hit.y) {
        if s.i == 0 && s.j == 0 {
            let v = if v < 0.0 {
                if v < NEGATIVE_CLAMP_FLOOR {
                    flagged_negative -= v;
                }
                0.0
            } else {
                v
            };
            out.set(s.n, s.k, s.l, v);
        }
    }
    out.normalize();
    let (z_m, z_s) = out.attack_fractions(dist);
    let diag = IdsDiagnostics {
        stop_time: hit.t,
        final_infective: i_m + i_s,
        steps: hit.stats.accepted,
        rejected_steps: hit.stats.rejected,
        rhs_evals: hit.stats.rhs_evals,
        normalization_error,
        flagged_negative,
        attack_fraction: z_m + z_s,
    };
    Ok((out, diag))
}
