//! Monte Carlo experiments comparing truthful VCG on everyone, VCG on the
//! non-colluders alone, VCG under collusive bid shading, and H-VCG.
//!
//! Each repetition draws one valuation vector and feeds it to all four
//! mechanisms, so the comparisons are paired. Valuations come from the
//! substream `(seed, "valuations", [N, repetition])` and H-VCG's random pick
//! from `(seed, "hvcg-pick", [N, repetition])`; neither depends on which
//! mechanisms are reported or on how many workers run.

mod output;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::mechanisms::{check_k, hvcg, vcg, vcg_with_collusion};
use crate::model::{MechanismOutcome, Partition, ValuationProfile};
use crate::objectives::{choose_k, MarketShape, ObjectiveKind, ObjectiveSpec, DEFAULT_OBJECTIVE_BINS};
use crate::rng::substream;

pub use output::{csv_string, emit_csv, emit_plot, Metric, CSV_HEADER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MechanismKind {
    VcgAllTruthful,
    VcgNoncollidersOnly,
    VcgWithCollusion,
    Hvcg,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 4] = [
        MechanismKind::VcgAllTruthful,
        MechanismKind::VcgNoncollidersOnly,
        MechanismKind::VcgWithCollusion,
        MechanismKind::Hvcg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::VcgAllTruthful => "vcg_all_truthful",
            MechanismKind::VcgNoncollidersOnly => "vcg_noncolluders_only",
            MechanismKind::VcgWithCollusion => "vcg_with_collusion",
            MechanismKind::Hvcg => "hvcg",
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        MechanismKind::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown mechanism '{s}'")))
    }
}

/// How H-VCG picks its split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KPolicy {
    Fixed(usize),
    /// `argmax_k M(k)` for the given objective.
    Auto(ObjectiveSpec),
}

impl KPolicy {
    pub fn resolve(&self, shape: &MarketShape) -> Result<usize> {
        match self {
            KPolicy::Fixed(k) => {
                check_k(shape.n, shape.r, *k)?;
                Ok(*k)
            }
            KPolicy::Auto(objective) => choose_k(objective, shape),
        }
    }
}

/// Per-repetition figures of one mechanism.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub welfare: f64,
    pub nominal_welfare: f64,
    pub revenue: f64,
    pub items_sold: usize,
    pub sold_all: bool,
}

impl Sample {
    fn from_outcome(outcome: &MechanismOutcome) -> Self {
        Self {
            welfare: outcome.welfare,
            nominal_welfare: outcome.nominal_welfare,
            revenue: outcome.revenue,
            items_sold: outcome.items_sold(),
            sold_all: outcome.items_unsold == 0,
        }
    }
}

/// All mechanisms on one shared valuation draw.
#[derive(Clone, Debug, PartialEq)]
pub struct RepetitionRecord {
    pub vcg_all_truthful: Sample,
    pub vcg_noncolluders_only: Sample,
    pub vcg_with_collusion: Sample,
    pub hvcg: Option<Sample>,
}

impl RepetitionRecord {
    pub fn get(&self, kind: MechanismKind) -> Option<&Sample> {
        match kind {
            MechanismKind::VcgAllTruthful => Some(&self.vcg_all_truthful),
            MechanismKind::VcgNoncollidersOnly => Some(&self.vcg_noncolluders_only),
            MechanismKind::VcgWithCollusion => Some(&self.vcg_with_collusion),
            MechanismKind::Hvcg => self.hvcg.as_ref(),
        }
    }
}

/// Valuations of one repetition: ids `0..N` are non-colluders, `N..N+C` the
/// coalition.
pub fn draw_market(
    dist: &DistributionSpec,
    shape: &MarketShape,
    master_seed: u64,
    repetition: u64,
) -> Result<(ValuationProfile, Partition)> {
    let mut rng = substream(master_seed, "valuations", &[shape.n as u64, repetition]);
    let values = ValuationProfile::new(dist.sample(&mut rng, shape.n + shape.c))?;
    Ok((values, Partition::contiguous(shape.n, shape.c)?))
}

/// Runs every mechanism on one draw. `hvcg_k` of `None` skips H-VCG.
pub fn simulate_repetition(
    dist: &DistributionSpec,
    shape: &MarketShape,
    hvcg_k: Option<usize>,
    master_seed: u64,
    repetition: u64,
) -> Result<RepetitionRecord> {
    let (values, partition) = draw_market(dist, shape, master_seed, repetition)?;
    let noncolluders = ValuationProfile::new(values.values()[..shape.n].to_vec())?;

    let all = vcg(&values, shape.r)?;
    let only_n = vcg(&noncolluders, shape.r)?;
    let collusion = vcg_with_collusion(&values, &partition, shape.r)?;
    let hvcg_outcome = match hvcg_k {
        Some(k) => {
            let mut rng = substream(master_seed, "hvcg-pick", &[shape.n as u64, repetition]);
            Some(hvcg(&values, &partition, shape.r, k, &mut rng)?)
        }
        None => None,
    };

    let tol = 1e-9 * (1.0 + all.welfare);
    if all.welfare + tol < collusion.welfare || collusion.welfare + tol < only_n.welfare {
        return Err(Error::InvariantViolation(format!(
            "paired welfare ordering broken at N={}, repetition {repetition}: all={} collusion={} N-only={}",
            shape.n, all.welfare, collusion.welfare, only_n.welfare
        )));
    }

    Ok(RepetitionRecord {
        vcg_all_truthful: Sample::from_outcome(&all),
        vcg_noncolluders_only: Sample::from_outcome(&only_n),
        vcg_with_collusion: Sample::from_outcome(&collusion),
        hvcg: hvcg_outcome.as_ref().map(Sample::from_outcome),
    })
}

/// Run `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::invalid("worker count must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Repetitions `0..reps` in repetition order.
pub fn run_repetitions(
    dist: &DistributionSpec,
    shape: &MarketShape,
    hvcg_k: Option<usize>,
    reps: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<Vec<RepetitionRecord>> {
    if reps == 0 {
        return Err(Error::invalid("at least one repetition is required"));
    }
    with_workers(workers, || {
        (0..reps as u64)
            .into_par_iter()
            .map(|rep| simulate_repetition(dist, shape, hvcg_k, master_seed, rep))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Pairwise summation, fixed by the input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (left, right) = values.split_at(values.len() / 2);
    pairwise_sum(left) + pairwise_sum(right)
}

/// Sample mean and standard error of the mean; the error is absent for a
/// single observation.
pub fn mean_and_stderr(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let squares: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&squares) / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean_welfare: f64,
    pub stderr_welfare: Option<f64>,
    pub mean_nominal_welfare: f64,
    pub stderr_nominal_welfare: Option<f64>,
    pub mean_revenue: f64,
    pub stderr_revenue: Option<f64>,
    pub mean_items_sold: f64,
    pub sold_all_frequency: f64,
}

pub fn summarize(records: &[RepetitionRecord], kind: MechanismKind) -> Result<Summary> {
    let samples: Vec<Sample> = records.iter().filter_map(|r| r.get(kind).copied()).collect();
    if samples.is_empty() || samples.len() != records.len() {
        return Err(Error::invalid(format!("no complete samples for {kind}")));
    }
    let column = |f: fn(&Sample) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
    let (mean_welfare, stderr_welfare) = mean_and_stderr(&column(|s| s.welfare));
    let (mean_nominal_welfare, stderr_nominal_welfare) = mean_and_stderr(&column(|s| s.nominal_welfare));
    let (mean_revenue, stderr_revenue) = mean_and_stderr(&column(|s| s.revenue));
    let (mean_items_sold, _) = mean_and_stderr(&column(|s| s.items_sold as f64));
    let (sold_all_frequency, _) = mean_and_stderr(&column(|s| if s.sold_all { 1.0 } else { 0.0 }));
    Ok(Summary {
        mean_welfare,
        stderr_welfare,
        mean_nominal_welfare,
        stderr_nominal_welfare,
        mean_revenue,
        stderr_revenue,
        mean_items_sold,
        sold_all_frequency,
    })
}

/// One CSV line: a mechanism's averages at one market size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub distribution: String,
    pub mechanism: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "C")]
    pub c: usize,
    pub r: usize,
    pub reps: usize,
    pub seed: u64,
    pub k_star: Option<usize>,
    pub mean_welfare: f64,
    pub stderr_welfare: Option<f64>,
    pub mean_revenue: f64,
    pub stderr_revenue: Option<f64>,
    pub mean_items_sold: f64,
    pub sold_all_frequency: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub distribution: DistributionSpec,
    pub r: usize,
    pub c: usize,
    pub n_from: usize,
    pub n_to: usize,
    pub n_step: usize,
    pub reps: usize,
    pub master_seed: u64,
    pub k_policy: KPolicy,
    pub mechanisms: Vec<MechanismKind>,
    /// `None` uses rayon's global pool.
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    /// Defaults of the published experiment: `r = 10`, `C = 10`, `N = 1..=50`,
    /// 1000 repetitions, H-VCG split by the welfare minorant.
    pub fn new(distribution: DistributionSpec) -> Self {
        Self {
            distribution,
            r: 10,
            c: 10,
            n_from: 1,
            n_to: 50,
            n_step: 1,
            reps: 1000,
            master_seed: 0,
            k_policy: KPolicy::Auto(ObjectiveSpec {
                kind: ObjectiveKind::WelfareMinorant,
                quadrature_bins: DEFAULT_OBJECTIVE_BINS,
                distribution,
            }),
            mechanisms: MechanismKind::ALL.to_vec(),
            workers: None,
        }
    }

    pub fn n_values(&self) -> impl Iterator<Item = usize> {
        (self.n_from..=self.n_to).step_by(self.n_step.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        if self.n_from == 0 || self.n_to < self.n_from {
            return Err(Error::invalid(format!(
                "N range {}..={} must be non-empty and start at 1 or more",
                self.n_from, self.n_to
            )));
        }
        if self.n_step == 0 {
            return Err(Error::invalid("N step must be at least 1"));
        }
        if self.r == 0 {
            return Err(Error::invalid("the number of items must be at least 1"));
        }
        if self.mechanisms.is_empty() {
            return Err(Error::invalid("no mechanism selected"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("worker count must be at least 1"));
        }
        Ok(())
    }
}

/// Rows for every `N` in the configured range and every selected mechanism,
/// ordered by `N`, then mechanism.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let mut mechanisms = config.mechanisms.clone();
    mechanisms.sort();
    mechanisms.dedup();
    let wants_hvcg = mechanisms.contains(&MechanismKind::Hvcg);

    let mut rows = Vec::new();
    for n in config.n_values() {
        let shape = MarketShape::new(n, config.c, config.r)?;
        let k_star = if wants_hvcg {
            Some(config.k_policy.resolve(&shape)?)
        } else {
            None
        };
        let records = run_repetitions(
            &config.distribution,
            &shape,
            k_star,
            config.reps,
            config.master_seed,
            config.workers,
        )?;
        for &kind in &mechanisms {
            let s = summarize(&records, kind)?;
            rows.push(ResultRow {
                distribution: config.distribution.name().to_string(),
                mechanism: kind.name().to_string(),
                n,
                c: config.c,
                r: config.r,
                reps: config.reps,
                seed: config.master_seed,
                k_star: if kind == MechanismKind::Hvcg { k_star } else { None },
                mean_welfare: s.mean_welfare,
                stderr_welfare: s.stderr_welfare,
                mean_revenue: s.mean_revenue,
                stderr_revenue: s.stderr_revenue,
                mean_items_sold: s.mean_items_sold,
                sold_all_frequency: s.sold_all_frequency,
            });
        }
    }
    Ok(rows)
}
