//! Valuation distributions given by their quantile function, inverse-transform
//! sampling and uniform order statistics.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};

/// Bin count of the midpoint rule used by [`conditional_tail_mean`].
pub const DEFAULT_TAIL_BINS: usize = 2048;

/// Largest `n` for which order statistics are sampled by sorting `n` uniforms.
const DIRECT_ORDER_STAT_MAX_N: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Uniform,
    Trapezoidal,
    Quadratic,
    Sinusoid,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Uniform, Family::Trapezoidal, Family::Quadratic, Family::Sinusoid];

    pub fn name(self) -> &'static str {
        match self {
            Family::Uniform => "uniform",
            Family::Trapezoidal => "trapezoidal",
            Family::Quadratic => "quadratic",
            Family::Sinusoid => "sinusoid",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Family::Uniform),
            "trapezoidal" => Ok(Family::Trapezoidal),
            "quadratic" => Ok(Family::Quadratic),
            "sinusoid" => Ok(Family::Sinusoid),
            other => Err(Error::invalid(format!(
                "unknown distribution '{other}' (expected uniform, trapezoidal, quadratic or sinusoid)"
            ))),
        }
    }
}

/// A valuation distribution on `[0, 1]` together with the slopes `L <= U`
/// bracketing its quantile function: `L x <= Q(x) <= U x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistributionSpec {
    family: Family,
    lower_slope: f64,
    upper_slope: f64,
}

impl DistributionSpec {
    pub fn builtin(name: &str) -> Result<Self> {
        Ok(Self::from_family(name.parse()?))
    }

    pub fn from_family(family: Family) -> Self {
        let (lower_slope, upper_slope) = match family {
            Family::Uniform => (1.0, 1.0),
            Family::Trapezoidal => (0.75, 1.0),
            Family::Quadratic => (1.0 / 3.0, 1.0),
            Family::Sinusoid => (1.0, FRAC_PI_2),
        };
        Self {
            family,
            lower_slope,
            upper_slope,
        }
    }

    /// Same quantile function with caller-chosen slopes. The slopes are not
    /// checked against `Q`; see [`validate_bounds`].
    pub fn with_slopes(self, lower_slope: f64, upper_slope: f64) -> Result<Self> {
        if !(lower_slope > 0.0 && upper_slope >= lower_slope && upper_slope.is_finite()) {
            return Err(Error::invalid(format!(
                "slopes must satisfy 0 < L <= U, got L={lower_slope}, U={upper_slope}"
            )));
        }
        Ok(Self {
            lower_slope,
            upper_slope,
            ..self
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn name(&self) -> &'static str {
        self.family.name()
    }

    pub fn lower_slope(&self) -> f64 {
        self.lower_slope
    }

    pub fn upper_slope(&self) -> f64 {
        self.upper_slope
    }

    /// Quantile function `Q(p)` for `p` in `[0, 1]`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self.family {
            Family::Uniform => p,
            Family::Trapezoidal => 2.0 - (4.0 - 3.0 * p).sqrt(),
            Family::Quadratic => 1.0 - (1.0 - p).cbrt(),
            Family::Sinusoid => (FRAC_PI_2 * p).sin(),
        }
    }

    /// CDF `F(v)`, the analytic inverse of [`quantile`](Self::quantile).
    pub fn cdf(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        match self.family {
            Family::Uniform => v,
            Family::Trapezoidal => (4.0 * v - v * v) / 3.0,
            Family::Quadratic => 1.0 - (1.0 - v).powi(3),
            Family::Sinusoid => 2.0 / PI * v.asin(),
        }
    }

    /// One inverse-transform draw `Q(u)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.draw(rng)).collect()
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (L={}, U={})", self.family, self.lower_slope, self.upper_slope)
    }
}

/// `count` i.i.d. valuations drawn by inverse transform.
pub fn sample<R: Rng + ?Sized>(dist: &DistributionSpec, rng: &mut R, count: usize) -> Vec<f64> {
    dist.sample(rng, count)
}

/// One draw of the `(k+1)`-th largest of `n` standard uniforms, which is
/// `Beta(n - k, k + 1)` distributed.
pub fn sample_order_statistic_u<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<f64> {
    if k >= n {
        return Err(Error::invalid(format!(
            "order statistic {} of {n} uniforms does not exist",
            k + 1
        )));
    }
    if n <= DIRECT_ORDER_STAT_MAX_N {
        let mut draws = [0.0f64; DIRECT_ORDER_STAT_MAX_N];
        let draws = &mut draws[..n];
        for d in draws.iter_mut() {
            *d = rng.random::<f64>();
        }
        // k-th index in descending order
        let (_, kth, _) = draws.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
        return Ok(*kth);
    }
    let beta = Beta::new((n - k) as f64, (k + 1) as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(beta.sample(rng))
}

/// `E[Q(u) | u >= t]` for `u ~ Uniform[0, 1]`, by the midpoint rule.
pub fn conditional_tail_mean(dist: &DistributionSpec, t: f64) -> Result<f64> {
    conditional_tail_mean_with_bins(dist, t, DEFAULT_TAIL_BINS)
}

pub fn conditional_tail_mean_with_bins(dist: &DistributionSpec, t: f64, bins: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::invalid(format!("tail threshold must lie in [0, 1), got {t}")));
    }
    if bins == 0 {
        return Err(Error::invalid("quadrature needs at least one bin"));
    }
    let width = (1.0 - t) / bins as f64;
    let sum: f64 = (0..bins).map(|j| dist.quantile(t + (j as f64 + 0.5) * width)).sum();
    Ok(sum / bins as f64)
}

/// Result of checking `L x <= Q(x) <= U x` and monotonicity on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    pub passed: bool,
    /// Smallest slack `min(Q(x) - Lx, Ux - Q(x))` over the grid; negative on
    /// violation.
    pub margin: f64,
    /// Grid point where `margin` is attained.
    pub worst_x: f64,
    pub monotone: bool,
}

pub fn validate_bounds(dist: &DistributionSpec, grid_points: usize) -> Result<BoundsReport> {
    const SLACK: f64 = 1e-12;
    if grid_points < 2 {
        return Err(Error::invalid("bound validation needs at least two grid points"));
    }
    let mut margin = f64::INFINITY;
    let mut worst_x = 0.0;
    let mut monotone = true;
    let mut prev = f64::NEG_INFINITY;
    for j in 0..grid_points {
        let x = j as f64 / (grid_points - 1) as f64;
        let q = dist.quantile(x);
        let slack = (q - dist.lower_slope * x).min(dist.upper_slope * x - q);
        if slack < margin {
            margin = slack;
            worst_x = x;
        }
        if q < prev {
            monotone = false;
        }
        prev = q;
    }
    Ok(BoundsReport {
        passed: monotone && margin >= -SLACK,
        margin,
        worst_x,
        monotone,
    })
}
