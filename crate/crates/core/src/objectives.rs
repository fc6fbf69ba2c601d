//! Item-split objectives `M(k)` for H-VCG and the probability that every item
//! sells.
//!
//! All outer expectations run over `u ~ Beta(N - k, k + 1)`, the law of the
//! `(k+1)`-th largest of `N` standard uniforms. They are evaluated by averaging
//! the integrand at the Beta quantiles of `(j - 0.5) / bins`, `j = 1..=bins`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::distributions::{conditional_tail_mean, DistributionSpec};
use crate::error::{Error, Result};
use crate::mechanisms::{check_k, max_feasible_k};
use crate::special::{beta_quantile, binomial_pmf, ln_beta, ln_binomial};

pub const DEFAULT_OBJECTIVE_BINS: usize = 1000;
pub const MIN_OBJECTIVE_BINS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObjectiveKind {
    /// Expected welfare under the known distribution.
    ExactWelfare,
    /// Lower bound on expected welfare that only uses `(L, U)`.
    WelfareMinorant,
    /// Lower bound on expected revenue that only uses `(L, U)`.
    RevenueMinorant,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::ExactWelfare => "exact",
            ObjectiveKind::WelfareMinorant => "welfare-minorant",
            ObjectiveKind::RevenueMinorant => "revenue-minorant",
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "exact" | "exact-welfare" => Ok(ObjectiveKind::ExactWelfare),
            "welfare-minorant" => Ok(ObjectiveKind::WelfareMinorant),
            "revenue-minorant" => Ok(ObjectiveKind::RevenueMinorant),
            other => Err(Error::invalid(format!(
                "unknown objective '{other}' (expected exact, welfare-minorant or revenue-minorant)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub quadrature_bins: usize,
    /// Full distribution for the exact objective; the minorants only read its
    /// slopes.
    pub distribution: DistributionSpec,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind, distribution: DistributionSpec) -> Self {
        Self {
            kind,
            quadrature_bins: DEFAULT_OBJECTIVE_BINS,
            distribution,
        }
    }

    pub fn with_bins(self, quadrature_bins: usize) -> Result<Self> {
        if quadrature_bins < MIN_OBJECTIVE_BINS {
            return Err(Error::invalid(format!(
                "quadrature needs at least {MIN_OBJECTIVE_BINS} bins, got {quadrature_bins}"
            )));
        }
        Ok(Self {
            quadrature_bins,
            ..self
        })
    }

    /// `M(k)` for this objective.
    pub fn evaluate(&self, k: usize, shape: &MarketShape) -> Result<f64> {
        let d = &self.distribution;
        match self.kind {
            ObjectiveKind::ExactWelfare => exact_expected_welfare(k, shape, d, self.quadrature_bins),
            ObjectiveKind::WelfareMinorant => {
                welfare_minorant(k, shape, d.lower_slope(), d.upper_slope(), self.quadrature_bins)
            }
            ObjectiveKind::RevenueMinorant => {
                revenue_minorant(k, shape, d.lower_slope(), d.upper_slope(), self.quadrature_bins)
            }
        }
    }
}

/// Non-colluder count `n`, coalition size `c` and item count `r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MarketShape {
    pub n: usize,
    pub c: usize,
    pub r: usize,
}

impl MarketShape {
    pub fn new(n: usize, c: usize, r: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("at least one non-colluding bidder is required"));
        }
        if r == 0 {
            return Err(Error::invalid("the number of items must be at least 1"));
        }
        Ok(Self { n, c, r })
    }

    /// Feasible splits `0..=min(r, N - 1)`.
    pub fn feasible_k(&self) -> std::ops::RangeInclusive<usize> {
        0..=max_feasible_k(self.n, self.r).unwrap_or(0)
    }
}

/// `E[f(u)]` for `u ~ Beta(alpha, beta)` by the quantile-midpoint rule.
pub fn beta_expectation(alpha: f64, beta: f64, bins: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let total: f64 = (1..=bins)
        .map(|j| f(beta_quantile(alpha, beta, (j as f64 - 0.5) / bins as f64)))
        .sum();
    total / bins as f64
}

/// `k + E[min(r - k, W)]` with `W ~ Binomial(C, p)`.
fn expected_sold(k: usize, shape: &MarketShape, p: f64) -> f64 {
    let slots = shape.r - k;
    let colluder_items: f64 = (1..=shape.c)
        .map(|q| slots.min(q) as f64 * binomial_pmf(shape.c as u64, q as u64, p))
        .sum();
    k as f64 + colluder_items
}

/// Expected items sold when the posted price sits at uniform order statistic
/// `u`, with the per-colluder qualification probability lower-bounded by
/// `max(0, 1 - U u / L)`.
pub fn expected_items_sold(k: usize, u: f64, shape: &MarketShape, lower_slope: f64, upper_slope: f64) -> f64 {
    debug_assert!(k <= shape.r);
    let p = (1.0 - upper_slope * u / lower_slope).max(0.0);
    expected_sold(k, shape, p)
}

fn check_bins(bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(Error::invalid("quadrature needs at least one bin"));
    }
    Ok(())
}

fn order_stat_params(k: usize, shape: &MarketShape) -> (f64, f64) {
    ((shape.n - k) as f64, (k + 1) as f64)
}

/// Expected H-VCG welfare with split `k` under a known distribution: the tail
/// mean above the posted quantile times the expected number of items sold.
pub fn exact_expected_welfare(k: usize, shape: &MarketShape, dist: &DistributionSpec, bins: usize) -> Result<f64> {
    check_k(shape.n, shape.r, k)?;
    check_bins(bins)?;
    let (a, b) = order_stat_params(k, shape);
    let mut failure = None;
    let value = beta_expectation(a, b, bins, |t| match conditional_tail_mean(dist, t) {
        Ok(tail) => tail * expected_sold(k, shape, 1.0 - t),
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// Expected H-VCG revenue with split `k`: the posted price `Q(u)` times the
/// expected number of items sold.
pub fn exact_expected_revenue(k: usize, shape: &MarketShape, dist: &DistributionSpec, bins: usize) -> Result<f64> {
    check_k(shape.n, shape.r, k)?;
    check_bins(bins)?;
    let (a, b) = order_stat_params(k, shape);
    Ok(beta_expectation(a, b, bins, |u| {
        dist.quantile(u) * expected_sold(k, shape, 1.0 - u)
    }))
}

/// Welfare lower bound `E[L (1 + L u / U) / 2 * r(k, u)]`.
pub fn welfare_minorant(k: usize, shape: &MarketShape, lower_slope: f64, upper_slope: f64, bins: usize) -> Result<f64> {
    check_k(shape.n, shape.r, k)?;
    check_bins(bins)?;
    check_slopes(lower_slope, upper_slope)?;
    let (a, b) = order_stat_params(k, shape);
    Ok(beta_expectation(a, b, bins, |u| {
        0.5 * lower_slope * (1.0 + lower_slope * u / upper_slope)
            * expected_items_sold(k, u, shape, lower_slope, upper_slope)
    }))
}

/// Revenue lower bound `E[L u * r(k, u)]`.
pub fn revenue_minorant(k: usize, shape: &MarketShape, lower_slope: f64, upper_slope: f64, bins: usize) -> Result<f64> {
    check_k(shape.n, shape.r, k)?;
    check_bins(bins)?;
    check_slopes(lower_slope, upper_slope)?;
    let (a, b) = order_stat_params(k, shape);
    Ok(beta_expectation(a, b, bins, |u| {
        lower_slope * u * expected_items_sold(k, u, shape, lower_slope, upper_slope)
    }))
}

fn check_slopes(lower_slope: f64, upper_slope: f64) -> Result<()> {
    if !(lower_slope > 0.0 && upper_slope >= lower_slope) {
        return Err(Error::invalid(format!(
            "slopes must satisfy 0 < L <= U, got L={lower_slope}, U={upper_slope}"
        )));
    }
    Ok(())
}

/// Probability that at least `r - k` colluders clear the posted price, i.e.
/// that H-VCG sells every item:
/// `sum_{q >= r-k} C(C, q) B(C + N - k - q, q + k + 1) / B(N - k, k + 1)`.
pub fn prob_all_items_sold(k: usize, shape: &MarketShape) -> Result<f64> {
    check_k(shape.n, shape.r, k)?;
    let (n, c) = (shape.n as f64, shape.c as f64);
    let kf = k as f64;
    let slots = shape.r - k;
    if slots == 0 {
        return Ok(1.0);
    }
    if slots > shape.c {
        return Ok(0.0);
    }
    let ln_norm = ln_beta(n - kf, kf + 1.0);
    let total: f64 = (slots..=shape.c)
        .map(|q| {
            let qf = q as f64;
            (ln_binomial(shape.c as u64, q as u64) + ln_beta(c + n - kf - qf, qf + kf + 1.0) - ln_norm).exp()
        })
        .sum();
    Ok(total.clamp(0.0, 1.0))
}

/// One line of the objective table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveRow {
    pub k: usize,
    pub value: f64,
    pub prob_all_sold: f64,
}

/// `M(k)` and `P(k)` for every feasible `k`.
pub fn objective_table(objective: &ObjectiveSpec, shape: &MarketShape) -> Result<Vec<ObjectiveRow>> {
    shape
        .feasible_k()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| {
            Ok(ObjectiveRow {
                k,
                value: objective.evaluate(k, shape)?,
                prob_all_sold: prob_all_items_sold(k, shape)?,
            })
        })
        .collect()
}

/// `argmax_k M(k)` over the feasible splits, ties to the largest `k`.
pub fn choose_k(objective: &ObjectiveSpec, shape: &MarketShape) -> Result<usize> {
    let values: Vec<(usize, f64)> = shape
        .feasible_k()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| objective.evaluate(k, shape).map(|v| (k, v)))
        .collect::<Result<_>>()?;
    let mut best = values[0];
    for &(k, v) in &values[1..] {
        if v >= best.1 {
            best = (k, v);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform() -> DistributionSpec {
        DistributionSpec::builtin("uniform").unwrap()
    }

    fn shape(n: usize, c: usize, r: usize) -> MarketShape {
        MarketShape::new(n, c, r).unwrap()
    }

    /// `E[max(U1, U2)] + E[U3 * 1{U3 > min(U1, U2)}]` by a product midpoint
    /// rule over the unit square for `(t, v)`, with `t` the smaller of two
    /// uniforms (density `2(1 - t)`). The top non-colluder value given `t` is
    /// uniform on `[t, 1]`.
    fn two_plus_one_welfare_brute_force() -> f64 {
        let m = 1000;
        let h = 1.0 / m as f64;
        let mut total = 0.0;
        for i in 0..m {
            let t = (i as f64 + 0.5) * h;
            let density = 2.0 * (1.0 - t);
            let top = 0.5 * (1.0 + t);
            let mut colluder = 0.0;
            for j in 0..m {
                let v = (j as f64 + 0.5) * h;
                if v > t {
                    colluder += v * h;
                }
            }
            total += density * (top + colluder) * h;
        }
        total
    }

    #[test]
    fn brute_force_oracle_gives_thirteen_twelfths() {
        // the indicator cuts through one cell per row, so the rule is only O(h)
        assert_abs_diff_eq!(two_plus_one_welfare_brute_force(), 13.0 / 12.0, epsilon = 1e-3);
    }

    #[test]
    fn items_sold_examples() {
        assert_eq!(expected_items_sold(2, 0.3, &shape(5, 0, 4), 1.0, 1.0), 2.0);
        assert_abs_diff_eq!(expected_items_sold(0, 0.25, &shape(2, 1, 1), 1.0, 1.0), 0.75, epsilon = 1e-15);
        // u >= L/U: no colluder qualifies in the bound
        assert_eq!(expected_items_sold(1, 0.9, &shape(3, 5, 3), 0.75, 1.0), 1.0);
        assert_eq!(expected_items_sold(1, 0.75, &shape(3, 5, 3), 0.75, 1.0), 1.0);
    }

    #[test]
    fn exact_welfare_examples() {
        let u = uniform();
        assert_abs_diff_eq!(exact_expected_welfare(1, &shape(2, 0, 1), &u, 1000).unwrap(), 2.0 / 3.0, epsilon = 1e-3);
        assert_abs_diff_eq!(
            exact_expected_welfare(1, &shape(2, 1, 2), &u, 1000).unwrap(),
            two_plus_one_welfare_brute_force(),
            epsilon = 1e-3
        );
        assert!(exact_expected_welfare(2, &shape(2, 1, 2), &u, 1000).unwrap_err().is_invalid_argument());
    }

    #[test]
    fn minorant_examples() {
        assert_abs_diff_eq!(welfare_minorant(1, &shape(2, 1, 2), 1.0, 1.0, 1000).unwrap(), 13.0 / 12.0, epsilon = 1e-3);
        assert_abs_diff_eq!(welfare_minorant(1, &shape(2, 0, 1), 1.0, 1.0, 1000).unwrap(), 2.0 / 3.0, epsilon = 1e-3);
        assert_abs_diff_eq!(revenue_minorant(1, &shape(2, 1, 2), 1.0, 1.0, 1000).unwrap(), 0.5, epsilon = 1e-3);
        assert_abs_diff_eq!(revenue_minorant(1, &shape(2, 0, 1), 1.0, 1.0, 1000).unwrap(), 1.0 / 3.0, epsilon = 1e-3);
        assert!(welfare_minorant(0, &shape(2, 1, 2), 1.0, 0.5, 1000).is_err());
    }

    #[test]
    fn minorants_sit_below_exact_welfare() {
        for dist in crate::distributions::Family::ALL.map(DistributionSpec::from_family) {
            for &(n, c, r) in &[(2, 1, 2), (5, 5, 3), (10, 1, 5), (4, 0, 2)] {
                let s = shape(n, c, r);
                for k in s.feasible_k() {
                    let exact = exact_expected_welfare(k, &s, &dist, 400).unwrap();
                    let (l, u) = (dist.lower_slope(), dist.upper_slope());
                    let wm = welfare_minorant(k, &s, l, u, 400).unwrap();
                    let rm = revenue_minorant(k, &s, l, u, 400).unwrap();
                    assert!(wm <= exact + 1e-9, "{dist} {s:?} k={k}: {wm} > {exact}");
                    assert!(rm <= exact + 1e-9, "{dist} {s:?} k={k}: {rm} > {exact}");
                }
            }
        }
    }

    #[test]
    fn prob_all_sold_examples() {
        assert_abs_diff_eq!(prob_all_items_sold(0, &shape(2, 1, 1)).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(prob_all_items_sold(3, &shape(5, 2, 3)).unwrap(), 1.0);
        assert_eq!(prob_all_items_sold(1, &shape(5, 0, 3)).unwrap(), 0.0);
        assert!(prob_all_items_sold(3, &shape(3, 2, 3)).is_err());
    }

    #[test]
    fn prob_all_sold_matches_binomial_expectation() {
        // E[P(Binomial(C, 1 - u) >= r - k)] by quadrature over u
        for &(n, c, r, k) in &[(5, 3, 4, 1), (10, 20, 6, 2), (3, 8, 5, 2)] {
            let s = shape(n, c, r);
            let quad = beta_expectation((n - k) as f64, (k + 1) as f64, 4000, |u| {
                ((r - k)..=c).map(|q| binomial_pmf(c as u64, q as u64, 1.0 - u)).sum()
            });
            assert_abs_diff_eq!(prob_all_items_sold(k, &s).unwrap(), quad, epsilon = 1e-4);
        }
    }

    #[test]
    fn beta_moment_identity() {
        use crate::special::ln_beta;
        // E[X^a (1-X)^b] = B(alpha + a, beta + b) / B(alpha, beta), density-based
        // midpoint quadrature as the independent route
        let cases = [(1.0, 1.0, 0, 2), (3.0, 2.0, 1, 1), (5.0, 1.0, 2, 0), (2.0, 7.0, 3, 4)];
        for &(alpha, beta, a, b) in &cases {
            let m = 20_000;
            let h = 1.0 / m as f64;
            let norm = ln_beta(alpha, beta).exp();
            let quad: f64 = (0..m)
                .map(|j| {
                    let x: f64 = (j as f64 + 0.5) * h;
                    x.powf(alpha - 1.0 + a as f64) * (1.0 - x).powf(beta - 1.0 + b as f64) * h
                })
                .sum::<f64>()
                / norm;
            let closed = (ln_beta(alpha + a as f64, beta + b as f64) - ln_beta(alpha, beta)).exp();
            assert_abs_diff_eq!(quad, closed, epsilon = 1e-6);
        }
    }

    #[test]
    fn choose_k_without_coalition_gives_everything_to_noncolluders() {
        let objective = ObjectiveSpec::new(ObjectiveKind::ExactWelfare, uniform());
        let s = shape(10, 0, 5);
        let table = objective_table(&objective, &s).unwrap();
        for pair in table.windows(2) {
            assert!(pair[1].value > pair[0].value);
        }
        assert_eq!(choose_k(&objective, &s).unwrap(), 5);
        assert_eq!(choose_k(&objective, &shape(1, 4, 3)).unwrap(), 0);
    }

    #[test]
    fn choose_k_reserves_items_for_large_coalition() {
        let objective = ObjectiveSpec::new(ObjectiveKind::WelfareMinorant, uniform());
        let k = choose_k(&objective, &shape(20, 100, 10)).unwrap();
        assert!(k < 10);
        assert_eq!(k, REGRESSION_K_N20_C100_R10);
    }

    const REGRESSION_K_N20_C100_R10: usize = 3;

    #[test]
    fn objective_parsing_and_bins() {
        assert_eq!("welfare_minorant".parse::<ObjectiveKind>().unwrap(), ObjectiveKind::WelfareMinorant);
        assert_eq!("Exact".parse::<ObjectiveKind>().unwrap(), ObjectiveKind::ExactWelfare);
        assert!("median".parse::<ObjectiveKind>().is_err());
        let o = ObjectiveSpec::new(ObjectiveKind::ExactWelfare, uniform());
        assert!(o.with_bins(15).is_err());
        assert_eq!(o.with_bins(16).unwrap().quadrature_bins, 16);
        assert!(MarketShape::new(0, 1, 1).is_err());
        assert!(MarketShape::new(1, 1, 0).is_err());
    }
}
