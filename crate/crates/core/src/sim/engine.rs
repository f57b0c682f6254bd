//! One exact realization of either household epidemic.
//!
//! Final sizes do not depend on event times, so the engine only samples the
//! embedded jump chain: pick the next event category with probability
//! proportional to its total rate, then resolve it. Global contacts pick
//! their target uniformly from the whole contacted pool and have no effect
//! on non-susceptibles.

use rand::Rng as _;

use super::sumtree::SumTree;
use super::{InitialSeverity, SimConfig, SimModel, SimOutcome};
use crate::final_size::FinalSizeDistribution;
use crate::seed::{self, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Susceptible,
    Infective,
    Removed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Severity {
    Mild,
    Severe,
}

impl Severity {
    fn idx(self) -> usize {
        match self {
            Severity::Mild => 0,
            Severity::Severe => 1,
        }
    }
}

#[derive(Debug, Clone)]
struct Person {
    household: u32,
    /// MT: the pre-drawn type. IDS: severity once infected.
    severity: Severity,
    status: Status,
}

#[derive(Debug, Clone, Default)]
struct House {
    start: u32,
    size: u8,
    /// Susceptibles by type; IDS keeps everyone under index 0.
    sus: [u32; 2],
    inf: [u32; 2],
    removed: [u32; 2],
    initially_susceptible: bool,
}

/// Members of one severity currently infective, with O(1) removal.
#[derive(Debug, Default)]
struct InfectiveSet {
    members: Vec<u32>,
}

impl InfectiveSet {
    fn push(&mut self, person: u32, slot: &mut [u32]) {
        slot[person as usize] = self.members.len() as u32;
        self.members.push(person);
    }

    fn remove_at(&mut self, pos: usize, slot: &mut [u32]) -> u32 {
        let person = self.members.swap_remove(pos);
        if let Some(&moved) = self.members.get(pos) {
            slot[moved as usize] = pos as u32;
        }
        person
    }

    fn len(&self) -> usize {
        self.members.len()
    }
}

struct World<'a> {
    cfg: &'a SimConfig,
    people: Vec<Person>,
    houses: Vec<House>,
    local: SumTree,
    infectives: [InfectiveSet; 2],
    slot: Vec<u32>,
    /// MT: people of each type, for global-contact targets.
    by_type: [Vec<u32>; 2],
    population: f64,
    initial_mild: u64,
}

impl<'a> World<'a> {
    fn build(cfg: &'a SimConfig, rng: &mut Rng) -> Result<Self> {
        let counts = cfg.population.counts();
        let mut people = Vec::new();
        let mut houses = Vec::new();
        for (size_idx, &count) in counts.iter().enumerate() {
            let size = size_idx + 1;
            for _ in 0..count {
                let h = houses.len() as u32;
                let start = people.len() as u32;
                let mut sus = [0u32; 2];
                for _ in 0..size {
                    let severity = match &cfg.model {
                        SimModel::Mt(g) if rng.gen::<f64>() >= g.beta_m => Severity::Severe,
                        _ => Severity::Mild,
                    };
                    sus[severity.idx()] += 1;
                    people.push(Person { household: h, severity, status: Status::Susceptible });
                }
                houses.push(House { start, size: size as u8, sus, initially_susceptible: true, ..Default::default() });
            }
        }
        let mut by_type = [Vec::new(), Vec::new()];
        if matches!(cfg.model, SimModel::Mt(_)) {
            for (idx, p) in people.iter().enumerate() {
                by_type[p.severity.idx()].push(idx as u32);
            }
        }
        let n_people = people.len();
        Ok(Self {
            cfg,
            local: SumTree::new(houses.len()),
            houses,
            infectives: [InfectiveSet::default(), InfectiveSet::default()],
            slot: vec![0; n_people],
            by_type,
            population: n_people as f64,
            initial_mild: 0,
            people,
        })
    }

    fn local_rate(&self, h: &House) -> f64 {
        let (im, is) = (h.inf[0] as f64, h.inf[1] as f64);
        match &self.cfg.model {
            SimModel::Mt(g) => {
                let l = &g.local;
                (im * l.mm + is * l.sm) * h.sus[0] as f64 + (im * l.ms + is * l.ss) * h.sus[1] as f64
            }
            SimModel::Ids(p) => (im * p.lambda_l_m + is * p.lambda_l_s) * h.sus[0] as f64,
        }
    }

    fn refresh(&mut self, h: u32) {
        let rate = self.local_rate(&self.houses[h as usize]);
        self.local.set(h as usize, rate);
    }

    /// Susceptible slot of `person` is consumed by the caller's choice of
    /// counter: MT counts by type, IDS keeps all susceptibles under index 0.
    fn infect(&mut self, person: u32, severity: Severity) {
        let p = &mut self.people[person as usize];
        debug_assert_eq!(p.status, Status::Susceptible);
        let sus_idx = match self.cfg.model {
            SimModel::Mt(_) => p.severity.idx(),
            SimModel::Ids(_) => 0,
        };
        p.status = Status::Infective;
        p.severity = severity;
        let h = p.household;
        let house = &mut self.houses[h as usize];
        house.sus[sus_idx] -= 1;
        house.inf[severity.idx()] += 1;
        self.infectives[severity.idx()].push(person, &mut self.slot);
        self.refresh(h);
    }

    fn remove(&mut self, severity: Severity, pos: usize) {
        let person = self.infectives[severity.idx()].remove_at(pos, &mut self.slot);
        let p = &mut self.people[person as usize];
        p.status = Status::Removed;
        let h = p.household;
        let house = &mut self.houses[h as usize];
        house.inf[severity.idx()] -= 1;
        house.removed[severity.idx()] += 1;
        self.refresh(h);
    }

    /// Gives an MT individual the requested type before infection.
    fn retype(&mut self, person: u32, to: Severity) -> Severity {
        let from = self.people[person as usize].severity;
        if from != to {
            self.people[person as usize].severity = to;
            let house = &mut self.houses[self.people[person as usize].household as usize];
            house.sus[from.idx()] -= 1;
            house.sus[to.idx()] += 1;
            let list = &mut self.by_type[from.idx()];
            let at = list.iter().position(|&x| x == person).expect("typed individual is listed");
            list.swap_remove(at);
            self.by_type[to.idx()].push(person);
        }
        to
    }

    fn seed_initial(&mut self, rng: &mut Rng) -> Result<()> {
        let init = &self.cfg.initial;
        let size = init.household_size.unwrap_or(self.cfg.population.dist.n_max());
        let mut candidates: Vec<u32> =
            (0..self.houses.len() as u32).filter(|&h| self.houses[h as usize].size as usize == size).collect();
        if init.count > candidates.len() {
            return Err(Error::invalid(
                "simulation.initial_infectives",
                format!("{} initial infectives but only {} households of size {size}", init.count, candidates.len()),
            ));
        }
        for c in 0..init.count {
            let pick = rng.gen_range(c..candidates.len());
            candidates.swap(c, pick);
            let h = candidates[c];
            let house = &self.houses[h as usize];
            let person = house.start + rng.gen_range(0..house.size as u32);
            self.houses[h as usize].initially_susceptible = false;
            let severity = match (&self.cfg.model, init.severity) {
                (SimModel::Mt(_), InitialSeverity::ByType) => self.people[person as usize].severity,
                (SimModel::Mt(_), InitialSeverity::Severe) => self.retype(person, Severity::Severe),
                (SimModel::Mt(_), InitialSeverity::Mild) => self.retype(person, Severity::Mild),
                (SimModel::Ids(_), InitialSeverity::Mild) => Severity::Mild,
                (SimModel::Ids(_), _) => Severity::Severe,
            };
            if severity == Severity::Mild {
                self.initial_mild += 1;
            }
            self.infect(person, severity);
        }
        Ok(())
    }

    fn try_global(&mut self, rng: &mut Rng, from_severe: bool) {
        match &self.cfg.model {
            SimModel::Mt(g) => {
                let (to_mild, to_severe) = if from_severe { (g.global.sm, g.global.ss) } else { (g.global.mm, g.global.ms) };
                let to_mild = to_mild * self.by_type[0].len() as f64;
                let to_severe = to_severe * self.by_type[1].len() as f64;
                let pool = if rng.gen::<f64>() * (to_mild + to_severe) < to_mild { 0 } else { 1 };
                let list = &self.by_type[pool];
                let target = list[rng.gen_range(0..list.len())];
                if self.people[target as usize].status == Status::Susceptible {
                    let sev = self.people[target as usize].severity;
                    self.infect(target, sev);
                }
            }
            SimModel::Ids(p) => {
                let target = rng.gen_range(0..self.people.len()) as u32;
                if self.people[target as usize].status == Status::Susceptible {
                    let mild_prob = if from_severe { p.p_g_sm } else { p.p_g_mm };
                    let sev = if rng.gen::<f64>() < mild_prob { Severity::Mild } else { Severity::Severe };
                    self.infect(target, sev);
                }
            }
        }
    }

    fn local_event(&mut self, rng: &mut Rng) {
        let h = self.local.sample(rng.gen::<f64>());
        let house = self.houses[h].clone();
        let (im, is) = (house.inf[0] as f64, house.inf[1] as f64);
        let (want_type, severity) = match &self.cfg.model {
            SimModel::Mt(g) => {
                let l = &g.local;
                let to_mild = (im * l.mm + is * l.sm) * house.sus[0] as f64;
                let to_severe = (im * l.ms + is * l.ss) * house.sus[1] as f64;
                if rng.gen::<f64>() * (to_mild + to_severe) < to_mild {
                    (Some(Severity::Mild), Severity::Mild)
                } else {
                    (Some(Severity::Severe), Severity::Severe)
                }
            }
            SimModel::Ids(p) => {
                let from_mild = im * p.lambda_l_m;
                let from_severe = is * p.lambda_l_s;
                let mild_prob = if rng.gen::<f64>() * (from_mild + from_severe) < from_mild { p.p_l_mm } else { p.p_l_sm };
                (None, if rng.gen::<f64>() < mild_prob { Severity::Mild } else { Severity::Severe })
            }
        };
        let members = house.start..house.start + house.size as u32;
        let candidates: Vec<u32> = members
            .filter(|&m| {
                let p = &self.people[m as usize];
                p.status == Status::Susceptible && want_type.map_or(true, |t| p.severity == t)
            })
            .collect();
        let target = candidates[rng.gen_range(0..candidates.len())];
        self.infect(target, severity);
    }

    fn run(&mut self, rng: &mut Rng) -> Result<u64> {
        let (gamma_m, gamma_s) = match &self.cfg.model {
            SimModel::Mt(g) => (g.gamma_m, g.gamma_s),
            SimModel::Ids(p) => (crate::ids::IdsParams::GAMMA_M, p.gamma_s),
        };
        let mut events: u64 = 0;
        loop {
            let (im, is) = (self.infectives[0].len() as f64, self.infectives[1].len() as f64);
            if im + is == 0.0 {
                return Ok(events);
            }
            events += 1;
            if events > self.cfg.event_budget {
                return Err(Error::EventBudget(self.cfg.event_budget));
            }
            // Totals for each category. MT global totals are per pool; the
            // per-target rate is lambda / N.
            let (global_mild, global_severe) = match &self.cfg.model {
                SimModel::Mt(g) => {
                    let n_m = self.by_type[0].len() as f64 / self.population;
                    let n_s = self.by_type[1].len() as f64 / self.population;
                    (im * (g.global.mm * n_m + g.global.ms * n_s), is * (g.global.sm * n_m + g.global.ss * n_s))
                }
                SimModel::Ids(p) => (im * p.lambda_g_m, is * p.lambda_g_s),
            };
            let local = self.local.total();
            let rem_m = im * gamma_m;
            let rem_s = is * gamma_s;
            let total = global_mild + global_severe + local + rem_m + rem_s;
            let mut u = rng.gen::<f64>() * total;
            if u < global_mild + global_severe {
                self.try_global(rng, u >= global_mild);
                continue;
            }
            u -= global_mild + global_severe;
            if u < local && local > 0.0 {
                self.local_event(rng);
                continue;
            }
            u -= local;
            let (sev, count) =
                if (u < rem_m && im > 0.0) || is == 0.0 { (Severity::Mild, im) } else { (Severity::Severe, is) };
            let pos = rng.gen_range(0..count as usize);
            self.remove(sev, pos);
        }
    }

    fn outcome(&self, events: u64, seed: u64) -> SimOutcome {
        let n_max = self.cfg.population.dist.n_max();
        let mut counts = FinalSizeDistribution::zeros(n_max);
        let (mut mild, mut severe) = (0u64, 0u64);
        let mut infected = 0u64;
        for house in &self.houses {
            infected += (house.removed[0] + house.removed[1]) as u64;
            if house.initially_susceptible {
                counts.add(house.size as usize, house.removed[0] as usize, house.removed[1] as usize, 1.0);
            }
        }
        for p in &self.people {
            if p.status == Status::Removed {
                match p.severity {
                    Severity::Mild => mild += 1,
                    Severity::Severe => severe += 1,
                }
            }
        }
        let initial = self.cfg.initial.count as u64;
        let initial_mild = self.initial_mild;
        let infected_fraction = infected as f64 / self.population;
        SimOutcome {
            seed,
            mild_total: mild - initial_mild,
            severe_total: severe - (initial - initial_mild),
            household_counts: counts,
            infected_fraction,
            major: infected_fraction > self.cfg.cutoff,
            events,
        }
    }
}

/// Samples one realization. Deterministic in `cfg.seed`.
pub fn simulate_once(cfg: &SimConfig) -> Result<SimOutcome> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed);
    let mut world = World::build(cfg, &mut rng)?;
    world.seed_initial(&mut rng)?;
    let events = world.run(&mut rng)?;
    Ok(world.outcome(events, cfg.seed))
}
