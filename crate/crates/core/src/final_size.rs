//! Within-household joint final-size distributions `p_n(r_M, r_S)`.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::math::CompensatedSum;
use crate::population::HouseholdSizeDistribution;
use crate::{Error, Result};

pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Number of `(r_M, r_S)` cells with `r_M + r_S <= n`.
pub fn cell_count(n: usize) -> usize {
    (n + 1) * (n + 2) / 2
}

fn cell_index(n: usize, r_m: usize, r_s: usize) -> usize {
    debug_assert!(r_m + r_s <= n);
    // Rows of constant r_M have lengths n+1, n, ..., 1.
    r_m * (n + 1) - r_m * (r_m.saturating_sub(1)) / 2 + r_s
}

/// Triangular tables `p_n(r_M, r_S)` for `n = 1..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalSizeDistribution {
    tables: Vec<Vec<f64>>,
}

impl FinalSizeDistribution {
    /// All-zero tables for sizes `1..=n_max`.
    pub fn zeros(n_max: usize) -> Self {
        Self { tables: (1..=n_max).map(|n| vec![0.0; cell_count(n)]).collect() }
    }

    pub fn n_max(&self) -> usize {
        self.tables.len()
    }

    pub fn get(&self, n: usize, r_m: usize, r_s: usize) -> f64 {
        if n == 0 || n > self.n_max() || r_m + r_s > n {
            return 0.0;
        }
        self.tables[n - 1][cell_index(n, r_m, r_s)]
    }

    pub fn set(&mut self, n: usize, r_m: usize, r_s: usize, p: f64) {
        assert!(n >= 1 && n <= self.n_max() && r_m + r_s <= n, "cell ({n}: {r_m}, {r_s}) out of range");
        self.tables[n - 1][cell_index(n, r_m, r_s)] = p;
    }

    pub fn add(&mut self, n: usize, r_m: usize, r_s: usize, p: f64) {
        let v = self.get(n, r_m, r_s);
        self.set(n, r_m, r_s, v + p);
    }

    /// `(r_M, r_S, p)` over the cells of size `n`.
    pub fn cells(&self, n: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..=n).flat_map(move |r_m| (0..=n - r_m).map(move |r_s| (r_m, r_s, self.get(n, r_m, r_s))))
    }

    /// `(n, r_M, r_S, p)` over every cell.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        (1..=self.n_max()).flat_map(move |n| self.cells(n).map(move |(a, b, p)| (n, a, b, p)))
    }

    pub fn size_total(&self, n: usize) -> f64 {
        self.cells(n).map(|(_, _, p)| p).collect::<CompensatedSum>().value()
    }

    /// Rescales each size with positive mass to sum to one.
    pub fn normalize(&mut self) {
        for table in &mut self.tables {
            let s: f64 = table.iter().sum();
            if s > 0.0 {
                table.iter_mut().for_each(|p| *p /= s);
            }
        }
    }

    /// Checks entries lie in `[0, 1]` and each size with positive `rho_n`
    /// sums to one within `tol`.
    pub fn validate(&self, dist: &HouseholdSizeDistribution, tol: f64) -> Result<()> {
        if self.n_max() < dist.n_max() {
            return Err(Error::invalid(
                "final_size",
                format!("table covers sizes up to {}, population needs {}", self.n_max(), dist.n_max()),
            ));
        }
        for (n, r_m, r_s, p) in self.iter() {
            if !p.is_finite() || !(0.0..=1.0 + tol).contains(&p) {
                return Err(Error::invalid(format!("final_size[{n}:{r_m},{r_s}]"), format!("probability {p} outside [0, 1]")));
            }
        }
        for (n, _) in dist.support() {
            let s = self.size_total(n);
            if (s - 1.0).abs() > tol {
                return Err(Error::invalid(format!("final_size[{n}]"), format!("size-{n} probabilities sum to {s}")));
            }
        }
        Ok(())
    }

    /// Per-individual attack summaries for size `n`.
    pub fn aggregates(&self, n: usize) -> SizeAggregates {
        let (mut mild, mut severe) = (0.0, 0.0);
        for (r_m, r_s, p) in self.cells(n) {
            mild += r_m as f64 * p;
            severe += r_s as f64 * p;
        }
        SizeAggregates::from_means(n, mild, severe)
    }

    /// Overall mild and severe attack fractions `(z_M, z_S)` of the population.
    pub fn attack_fractions(&self, dist: &HouseholdSizeDistribution) -> (f64, f64) {
        let (mut z_m, mut z_s) = (0.0, 0.0);
        for (n, rho) in dist.support() {
            let a = self.aggregates(n);
            z_m += rho * n as f64 * a.p_mild;
            z_s += rho * n as f64 * a.p_severe;
        }
        let mu = dist.mean_size();
        (z_m / mu, z_s / mu)
    }

    /// Total-variation distance between the size-`n` tables.
    pub fn total_variation(&self, other: &Self, n: usize) -> f64 {
        0.5 * self.cells(n).map(|(a, b, p)| (p - other.get(n, a, b)).abs()).sum::<f64>()
    }

    /// `rho`-weighted total-variation distance.
    pub fn weighted_total_variation(&self, other: &Self, dist: &HouseholdSizeDistribution) -> f64 {
        dist.support().map(|(n, rho)| rho * self.total_variation(other, n)).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.iter().map(|(n, a, b, p)| (p - other.get(n, a, b)).abs()).fold(0.0, f64::max)
    }

    /// Writes `n,r_M,r_S,probability` rows with 15 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "r_M", "r_S", "probability"])?;
        for (n, r_m, r_s, p) in self.iter() {
            w.write_record([n.to_string(), r_m.to_string(), r_s.to_string(), format_sig15(p)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file).map_err(|source| Error::Csv { path: path.to_path_buf(), source })
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv). Cells not
    /// listed are zero.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for (line, rec) in rdr.deserialize::<(usize, usize, usize, f64)>().enumerate() {
            let (n, r_m, r_s, p) = rec.map_err(|e| Error::invalid(format!("row {}", line + 2), e.to_string()))?;
            if n == 0 || r_m + r_s > n {
                return Err(Error::invalid(format!("row {}", line + 2), format!("cell ({n}: {r_m}, {r_s}) is not feasible")));
            }
            rows.push((n, r_m, r_s, p));
        }
        let n_max = rows.iter().map(|r| r.0).max().ok_or_else(|| Error::invalid("final_size", "no rows"))?;
        let mut out = Self::zeros(n_max);
        for (n, r_m, r_s, p) in rows {
            out.set(n, r_m, r_s, p);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }
}

/// `{:.14e}` gives 15 significant digits.
pub fn format_sig15(x: f64) -> String {
    format!("{x:.14e}")
}

/// `(p_M, p_S, p_INF, p_S / p_INF)` for one household size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizeAggregates {
    pub n: usize,
    pub p_mild: f64,
    pub p_severe: f64,
    pub p_infected: f64,
    /// `None` when nobody in households of this size was infected.
    pub severe_share: Option<f64>,
}

impl SizeAggregates {
    /// From the expected mild and severe totals of one size-`n` household.
    pub fn from_means(n: usize, mild: f64, severe: f64) -> Self {
        let p_mild = mild / n as f64;
        let p_severe = severe / n as f64;
        let p_infected = p_mild + p_severe;
        let severe_share = (p_infected > 0.0).then(|| p_severe / p_infected);
        Self { n, p_mild, p_severe, p_infected, severe_share }
    }
}

/// One row per household size: mild, severe and total attack probabilities
/// and the severe share of infections (empty when nobody is infected).
pub fn write_aggregates_csv<W: Write>(rows: &[SizeAggregates], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "p_mild", "p_severe", "p_infected", "severe_share"])?;
    for a in rows {
        w.write_record([
            a.n.to_string(),
            format_sig15(a.p_mild),
            format_sig15(a.p_severe),
            format_sig15(a.p_infected),
            a.severe_share.map_or(String::new(), format_sig15),
        ])?;
    }
    w.flush()?;
    Ok(())
}
