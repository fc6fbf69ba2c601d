//! Brute-force verifiers: grid searches over deviations, exhaustive
//! best-response search and Monte Carlo estimates. Used by the test suites and
//! the `verify` command.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::distributions::{validate_bounds, DistributionSpec, Family};
use crate::error::{Error, Result};
use crate::harness::{run_repetitions, summarize, KPolicy, MechanismKind, Summary};
use crate::mechanisms::{colluder_best_response, hvcg_phases, max_feasible_k, vcg, vcg_with_collusion, vcg_with_values};
use crate::model::{check_items, MechanismOutcome, Partition, ValuationProfile};
use crate::objectives::{exact_expected_welfare, prob_all_items_sold, MarketShape, DEFAULT_OBJECTIVE_BINS};
use crate::rng::substream;

pub const DEFAULT_DELTA: f64 = 1e-6;
/// Largest number of bid vectors a grid search may visit.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;
pub const DSIC_TOLERANCE: f64 = 1e-9;
/// Random stages with at most this many candidates are averaged over every
/// possible winner set.
const SUBSET_LIMIT: usize = 20;

/// Sorted, duplicate-free bid levels tried by the grid searches.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationGrid {
    points: Vec<f64>,
}

impl DeviationGrid {
    /// Zero, every true value, and every non-colluder value shifted by
    /// `±delta`, so each possible price is bracketed from both sides.
    pub fn new(values: &ValuationProfile, partition: &Partition, delta: f64) -> Result<Self> {
        partition.check_profile(values)?;
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("grid offset must be positive, got {delta}")));
        }
        let mut points = vec![0.0];
        points.extend_from_slice(values.values());
        for &i in partition.noncolluders() {
            let v = values.get(i);
            points.push(v + delta);
            points.push((v - delta).max(0.0));
        }
        Self::from_points(points)
    }

    pub fn from_points(mut points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("deviation grid is empty"));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid(format!("grid point {p} is not a valid bid")));
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The bid vector with mixed-radix index `flat`, one digit per colluder.
    fn decode(&self, mut flat: u64, dims: usize) -> Vec<f64> {
        let base = self.points.len() as u64;
        (0..dims)
            .map(|_| {
                let digit = (flat % base) as usize;
                flat /= base;
                self.points[digit]
            })
            .collect()
    }
}

fn joint_enumeration_size(grid: &DeviationGrid, dims: usize) -> Result<u64> {
    let mut total: u128 = 1;
    for _ in 0..dims {
        total = total.saturating_mul(grid.len() as u128);
    }
    if total > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            combinations: total,
            budget: ENUMERATION_BUDGET,
        });
    }
    Ok(total as u64)
}

fn with_colluder_bids(values: &ValuationProfile, partition: &Partition, bids: &[f64]) -> Result<ValuationProfile> {
    let mut all = values.values().to_vec();
    for (&id, &b) in partition.colluders().iter().zip(bids) {
        all[id] = b;
    }
    ValuationProfile::new(all)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BruteForceResponse {
    pub joint_utility: f64,
    /// One bid per colluder, in the order of [`Partition::colluders`].
    pub bids: Vec<f64>,
    pub items_taken: usize,
}

/// Best coalition bid vector on `grid` against truthful non-colluders under
/// VCG. Ties go to the vector taking the fewest items.
pub fn brute_force_best_response(
    values: &ValuationProfile,
    partition: &Partition,
    r: usize,
    grid: &DeviationGrid,
) -> Result<BruteForceResponse> {
    partition.check_profile(values)?;
    check_items(r)?;
    let dims = partition.c();
    let total = joint_enumeration_size(grid, dims)?;

    let evaluate = |flat: u64| -> Result<(f64, usize, u64)> {
        let bids = with_colluder_bids(values, partition, &grid.decode(flat, dims))?;
        let out = vcg_with_values(&bids, values, partition, r)?;
        Ok((out.colluder_joint_utility, out.items_to_colluders, flat))
    };
    let better = |a: (f64, usize, u64), b: (f64, usize, u64)| {
        let key = |x: (f64, usize, u64)| (x.0, std::cmp::Reverse(x.1), std::cmp::Reverse(x.2));
        if key(b).partial_cmp(&key(a)) == Some(std::cmp::Ordering::Greater) {
            b
        } else {
            a
        }
    };
    let (joint_utility, items_taken, flat) = (0..total)
        .into_par_iter()
        .map(evaluate)
        .try_reduce(|| (f64::NEG_INFINITY, usize::MAX, u64::MAX), |a, b| Ok(better(a, b)))?;
    Ok(BruteForceResponse {
        joint_utility,
        bids: grid.decode(flat, dims),
        items_taken,
    })
}

/// How the items left after the price is fixed are handed out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AllocationRule {
    /// H-VCG: `k` items to the top non-colluders, the rest at random among
    /// colluders bidding above the price.
    Hvcg,
    /// All `r` items at random among every bidder above the price.
    Pooled,
}

/// Expected per-bidder utilities and expected coalition utility, averaged
/// over the random stage.
pub fn expected_utilities(
    bids: &ValuationProfile,
    values: &ValuationProfile,
    partition: &Partition,
    r: usize,
    k: usize,
    rule: AllocationRule,
) -> Result<(Vec<f64>, f64)> {
    let phases = hvcg_phases(bids, partition, r, k)?;
    let price = phases.price;
    let (fixed, pool, slots) = match rule {
        AllocationRule::Hvcg => (phases.noncolluder_winners, phases.qualifiers, phases.colluder_slots),
        AllocationRule::Pooled => {
            let pool: Vec<usize> = (0..bids.len()).filter(|&i| bids.get(i) > price).collect();
            (Vec::new(), pool, r)
        }
    };

    let settle = |winners: &[usize]| -> Result<MechanismOutcome> {
        let mut allocation = vec![false; bids.len()];
        for &i in fixed.iter().chain(winners) {
            allocation[i] = true;
        }
        MechanismOutcome::settle(values, partition, allocation, price, r)
    };

    if pool.len() <= slots {
        let out = settle(&pool)?;
        return Ok((out.utilities, out.colluder_joint_utility));
    }
    if pool.len() > SUBSET_LIMIT {
        return match rule {
            // the coalition's utility only depends on how many items it gets,
            // and non-colluder utilities do not depend on the pick at all
            AllocationRule::Hvcg => {
                let out = settle(&pool[..slots])?;
                Ok((out.utilities, out.colluder_joint_utility))
            }
            AllocationRule::Pooled => Err(Error::BudgetExceeded {
                combinations: binomial(pool.len(), slots),
                budget: binomial(SUBSET_LIMIT, SUBSET_LIMIT / 2),
            }),
        };
    }

    let mut sums = vec![0.0; bids.len()];
    let mut joint = 0.0;
    let mut count = 0usize;
    let mut failure = None;
    for_each_subset(&pool, slots, &mut |winners| {
        if failure.is_some() {
            return;
        }
        match settle(winners) {
            Ok(out) => {
                for (s, u) in sums.iter_mut().zip(&out.utilities) {
                    *s += u;
                }
                joint += out.colluder_joint_utility;
                count += 1;
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let n = count as f64;
    Ok((sums.into_iter().map(|s| s / n).collect(), joint / n))
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k as u128).fold(1, |acc, i| acc * (n as u128 - i) / (i + 1))
}

fn for_each_subset(items: &[usize], size: usize, f: &mut dyn FnMut(&[usize])) {
    fn go(items: &[usize], start: usize, size: usize, current: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if current.len() == size {
            f(current);
            return;
        }
        let needed = size - current.len();
        for i in start..=items.len() - needed {
            current.push(items[i]);
            go(items, i + 1, size, current, f);
            current.pop();
        }
    }
    go(items, 0, size, &mut Vec::with_capacity(size), f);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Deviator {
    Noncolluder(usize),
    Coalition,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Deviation {
    pub deviator: Deviator,
    /// The deviating bid, or one bid per colluder.
    pub bids: Vec<f64>,
    pub truthful_utility: f64,
    pub deviation_utility: f64,
}

impl Deviation {
    pub fn gain(&self) -> f64 {
        self.deviation_utility - self.truthful_utility
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DsicReport {
    pub passed: bool,
    pub deviations_checked: u64,
    /// The most profitable deviation found.
    pub worst: Option<Deviation>,
}

/// Checks that no non-colluder gains from a unilateral grid deviation and the
/// coalition gains from no joint grid deviation, in expectation over the
/// random stage, by more than [`DSIC_TOLERANCE`].
pub fn check_hvcg_dsic(
    values: &ValuationProfile,
    partition: &Partition,
    r: usize,
    k: usize,
    grid: &DeviationGrid,
    rule: AllocationRule,
) -> Result<DsicReport> {
    let dims = partition.c();
    let joint_total = if dims == 0 { 0 } else { joint_enumeration_size(grid, dims)? };
    let (truthful, truthful_joint) = expected_utilities(values, values, partition, r, k, rule)?;

    let mut candidates: Vec<Deviation> = Vec::new();
    for &i in partition.noncolluders() {
        for &b in grid.points() {
            let mut bids = values.values().to_vec();
            bids[i] = b;
            let (u, _) = expected_utilities(&ValuationProfile::new(bids)?, values, partition, r, k, rule)?;
            candidates.push(Deviation {
                deviator: Deviator::Noncolluder(i),
                bids: vec![b],
                truthful_utility: truthful[i],
                deviation_utility: u[i],
            });
        }
    }

    let coalition = (0..joint_total)
        .into_par_iter()
        .map(|flat| {
            let bids = grid.decode(flat, dims);
            let profile = with_colluder_bids(values, partition, &bids)?;
            let (_, joint) = expected_utilities(&profile, values, partition, r, k, rule)?;
            Ok::<_, Error>((joint, flat))
        })
        .try_reduce(
            || (f64::NEG_INFINITY, u64::MAX),
            |a, b| Ok(if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a }),
        )?;
    if joint_total > 0 {
        candidates.push(Deviation {
            deviator: Deviator::Coalition,
            bids: grid.decode(coalition.1, dims),
            truthful_utility: truthful_joint,
            deviation_utility: coalition.0,
        });
    }

    let checked = (partition.n() * grid.len()) as u64 + joint_total;
    let worst = candidates
        .into_iter()
        .reduce(|a, b| if b.gain() > a.gain() { b } else { a });
    let passed = worst.as_ref().is_none_or(|d| d.gain() <= DSIC_TOLERANCE);
    Ok(DsicReport {
        passed,
        deviations_checked: checked,
        worst,
    })
}

/// Monte Carlo statistics of one mechanism over `reps` independent markets.
pub fn mc_estimate(
    mechanism: MechanismKind,
    dist: &DistributionSpec,
    shape: &MarketShape,
    k_policy: &KPolicy,
    reps: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<Summary> {
    let k = match mechanism {
        MechanismKind::Hvcg => Some(k_policy.resolve(shape)?),
        _ => None,
    };
    let records = run_repetitions(dist, shape, k, reps, master_seed, workers)?;
    summarize(&records, mechanism)
}

/// A random market with i.i.d. uniform values.
#[derive(Clone, Debug, PartialEq)]
pub struct SmallInstance {
    pub values: ValuationProfile,
    pub partition: Partition,
    pub r: usize,
}

/// Between 1 and `max_bidders` bidders, a random coalition that leaves at
/// least one non-colluder, and 1 to `max_items` items.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, max_bidders: usize, max_items: usize) -> Result<SmallInstance> {
    if max_bidders == 0 || max_items == 0 {
        return Err(Error::invalid("instances need at least one bidder and one item"));
    }
    let m = rng.random_range(1..=max_bidders);
    let c = rng.random_range(0..m);
    let values = ValuationProfile::new((0..m).map(|_| rng.random::<f64>()).collect())?;
    let mut ids: Vec<usize> = (0..m).collect();
    ids.shuffle(rng);
    let mut colluders = ids[..c].to_vec();
    colluders.sort_unstable();
    Ok(SmallInstance {
        values,
        partition: Partition::new(m, &colluders)?,
        r: rng.random_range(1..=max_items),
    })
}

/// Two non-colluders valued 1 and 2, three colluders valued 1, 2 and 3,
/// two items, one reserved for non-colluders. If the leftover items were
/// shared among every bidder above the price, the colluder valued 1 would
/// profit the coalition by overbidding.
pub fn pooled_counterexample() -> Result<(ValuationProfile, Partition, usize, usize)> {
    Ok((
        ValuationProfile::new(vec![1.0, 2.0, 1.0, 2.0, 3.0])?,
        Partition::contiguous(2, 3)?,
        2,
        1,
    ))
}

/// One line of the `verify` report.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

const VERIFY_SEED: u64 = 0x05ee_d0f0_ac1e;

/// Runs the oracle suite. `quick` shrinks instance counts and Monte Carlo
/// sizes.
pub fn verify_suite(quick: bool) -> Result<Vec<CheckOutcome>> {
    let (instances, dsic_instances, reps) = if quick { (40, 20, 20_000) } else { (200, 100, 100_000) };
    Ok(vec![
        check_vcg_example()?,
        check_best_response_oracle(instances)?,
        check_dsic_suite(dsic_instances)?,
        check_pooled_counterexample()?,
        check_sold_all_probability(reps)?,
        check_expected_welfare(reps)?,
        check_distribution_bounds()?,
    ])
}

fn check_vcg_example() -> Result<CheckOutcome> {
    let values = ValuationProfile::new(vec![1.0, 70.0, 101.0, 102.0, 103.0])?;
    let partition = Partition::new(5, &[2, 4])?;
    let truthful = vcg(&values, 3)?;
    let colluding = vcg_with_collusion(&values, &partition, 3)?;
    let honest_joint = vcg_with_values(&values, &values, &partition, 3)?.colluder_joint_utility;
    let got = (
        truthful.welfare,
        truthful.price,
        truthful.revenue,
        colluding.welfare,
        colluding.price,
        colluding.colluder_joint_utility,
        honest_joint,
    );
    Ok(CheckOutcome {
        name: "vcg-example",
        passed: got == (306.0, 70.0, 210.0, 275.0, 1.0, 102.0, 64.0),
        detail: format!("(welfare, price, revenue, collusive welfare, price, joint utility, honest joint) = {got:?}"),
    })
}

fn check_best_response_oracle(instances: u64) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    let mut extra_items = 0;
    for i in 0..instances {
        let mut rng = substream(VERIFY_SEED, "best-response", &[i]);
        let inst = random_instance(&mut rng, 6, 3)?;
        let grid = DeviationGrid::new(&inst.values, &inst.partition, DEFAULT_DELTA)?;
        let brute = brute_force_best_response(&inst.values, &inst.partition, inst.r, &grid)?;
        let closed = colluder_best_response(&inst.values, &inst.partition, inst.r)?;
        worst = worst.max((brute.joint_utility - closed.joint_utility).abs());
        let truthful = vcg_with_values(&inst.values, &inst.values, &inst.partition, inst.r)?;
        if brute.items_taken > truthful.items_to_colluders {
            extra_items += 1;
        }
    }
    Ok(CheckOutcome {
        name: "best-response-oracle",
        passed: worst <= 1e-5 && extra_items == 0,
        detail: format!("{instances} instances, max |grid - closed form| = {worst:.2e}, {extra_items} with extra items"),
    })
}

fn check_dsic_suite(instances: u64) -> Result<CheckOutcome> {
    let mut failures = 0;
    let mut checks = 0;
    for i in 0..instances {
        let mut rng = substream(VERIFY_SEED, "dsic", &[i]);
        let inst = random_instance(&mut rng, 6, 3)?;
        let grid = DeviationGrid::new(&inst.values, &inst.partition, DEFAULT_DELTA)?;
        let kmax = max_feasible_k(inst.partition.n(), inst.r).unwrap_or(0);
        for k in 0..=kmax {
            checks += 1;
            let report = check_hvcg_dsic(&inst.values, &inst.partition, inst.r, k, &grid, AllocationRule::Hvcg)?;
            if !report.passed {
                failures += 1;
            }
        }
    }
    Ok(CheckOutcome {
        name: "hvcg-dsic",
        passed: failures == 0,
        detail: format!("{instances} instances, {checks} (instance, k) pairs, {failures} failures"),
    })
}

fn check_pooled_counterexample() -> Result<CheckOutcome> {
    let (values, partition, r, k) = pooled_counterexample()?;
    let grid = DeviationGrid::new(&values, &partition, DEFAULT_DELTA)?;
    let pooled = check_hvcg_dsic(&values, &partition, r, k, &grid, AllocationRule::Pooled)?;
    let hvcg = check_hvcg_dsic(&values, &partition, r, k, &grid, AllocationRule::Hvcg)?;
    let gain = pooled.worst.as_ref().map_or(0.0, Deviation::gain);
    Ok(CheckOutcome {
        name: "pooled-counterexample",
        passed: !pooled.passed && hvcg.passed,
        detail: format!("pooled rule best deviation gain {gain:.4}; H-VCG rule passes: {}", hvcg.passed),
    })
}

fn check_sold_all_probability(reps: usize) -> Result<CheckOutcome> {
    let shape = MarketShape::new(2, 1, 1)?;
    let analytic = prob_all_items_sold(0, &shape)?;
    let uniform = DistributionSpec::from_family(Family::Uniform);
    let mc = mc_estimate(MechanismKind::Hvcg, &uniform, &shape, &KPolicy::Fixed(0), reps, VERIFY_SEED, None)?;
    let se = (analytic * (1.0 - analytic) / reps as f64).sqrt();
    let diff = (mc.sold_all_frequency - analytic).abs();
    Ok(CheckOutcome {
        name: "sold-all-probability",
        passed: diff <= 3.0 * se,
        detail: format!("analytic {analytic:.6}, simulated {:.6} ({reps} reps)", mc.sold_all_frequency),
    })
}

fn check_expected_welfare(reps: usize) -> Result<CheckOutcome> {
    let shape = MarketShape::new(2, 1, 2)?;
    let uniform = DistributionSpec::from_family(Family::Uniform);
    let exact = exact_expected_welfare(1, &shape, &uniform, DEFAULT_OBJECTIVE_BINS)?;
    let mc = mc_estimate(MechanismKind::Hvcg, &uniform, &shape, &KPolicy::Fixed(1), reps, VERIFY_SEED, None)?;
    let se = mc.stderr_nominal_welfare.unwrap_or(f64::INFINITY);
    let diff = (mc.mean_nominal_welfare - exact).abs();
    Ok(CheckOutcome {
        name: "expected-welfare",
        passed: diff <= 3.0 * se && (exact - 13.0 / 12.0).abs() <= 1e-3,
        detail: format!("formula {exact:.6}, simulated {:.6} +- {se:.6}", mc.mean_nominal_welfare),
    })
}

fn check_distribution_bounds() -> Result<CheckOutcome> {
    let mut failing = Vec::new();
    for family in Family::ALL {
        let report = validate_bounds(&DistributionSpec::from_family(family), 10_000)?;
        if !report.passed {
            failing.push(family.name());
        }
    }
    Ok(CheckOutcome {
        name: "distribution-bounds",
        passed: failing.is_empty(),
        detail: if failing.is_empty() {
            "all builtin families satisfy L x <= Q(x) <= U x".to_string()
        } else {
            format!("violated by {}", failing.join(", "))
        },
    })
}
