//! Bidders, coalitions and auction outcomes.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Non-negative per-bidder amounts, indexed by bidder id. Used both for true
/// valuations and for submitted bids.
#[derive(Clone, Debug, PartialEq)]
pub struct ValuationProfile {
    values: Vec<f64>,
}

impl ValuationProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("a profile needs at least one bidder"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!("bidder {i} has value {v}; values must be finite and >= 0")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, bidder: usize) -> f64 {
        self.values[bidder]
    }

    /// Values of the listed bidders, in the listed order.
    pub fn select(&self, bidders: &[usize]) -> Vec<f64> {
        bidders.iter().map(|&i| self.values[i]).collect()
    }
}

/// Split of the bidders `0..M` into non-colluders and a single coalition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    noncolluders: Vec<usize>,
    colluders: Vec<usize>,
    is_colluder: Vec<bool>,
}

impl Partition {
    /// Partition of `bidders` ids where `colluders` form the coalition and
    /// everyone else bids independently. At least one non-colluder is required.
    pub fn new(bidders: usize, colluders: &[usize]) -> Result<Self> {
        let mut is_colluder = vec![false; bidders];
        for &c in colluders {
            if c >= bidders {
                return Err(Error::invalid(format!("colluder id {c} out of range 0..{bidders}")));
            }
            if is_colluder[c] {
                return Err(Error::invalid(format!("colluder id {c} listed twice")));
            }
            is_colluder[c] = true;
        }
        let noncolluders: Vec<usize> = (0..bidders).filter(|&i| !is_colluder[i]).collect();
        if noncolluders.is_empty() {
            return Err(Error::invalid("at least one non-colluding bidder is required"));
        }
        let colluders = (0..bidders).filter(|&i| is_colluder[i]).collect();
        Ok(Self {
            noncolluders,
            colluders,
            is_colluder,
        })
    }

    /// Ids `0..n` are non-colluders and `n..n+c` colluders.
    pub fn contiguous(n: usize, c: usize) -> Result<Self> {
        Self::new(n + c, &(n..n + c).collect::<Vec<_>>())
    }

    /// Everyone bids independently.
    pub fn no_collusion(bidders: usize) -> Result<Self> {
        Self::new(bidders, &[])
    }

    pub fn noncolluders(&self) -> &[usize] {
        &self.noncolluders
    }

    pub fn colluders(&self) -> &[usize] {
        &self.colluders
    }

    pub fn is_colluder(&self, bidder: usize) -> bool {
        self.is_colluder[bidder]
    }

    pub fn bidders(&self) -> usize {
        self.is_colluder.len()
    }

    pub fn n(&self) -> usize {
        self.noncolluders.len()
    }

    pub fn c(&self) -> usize {
        self.colluders.len()
    }

    pub(crate) fn check_profile(&self, profile: &ValuationProfile) -> Result<()> {
        if profile.len() != self.bidders() {
            return Err(Error::invalid(format!(
                "profile has {} bidders but the partition covers {}",
                profile.len(),
                self.bidders()
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_items(r: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::invalid("the number of items must be at least 1"));
    }
    Ok(())
}

/// Descending order on `(value, then lower id first)`.
pub(crate) fn by_value_desc(values: &[f64], a: usize, b: usize) -> Ordering {
    values[b].total_cmp(&values[a]).then(a.cmp(&b))
}

/// Indices of `values` sorted by descending value, ties to the lower index.
pub fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| by_value_desc(values, a, b));
    order
}

/// Copy of `values` sorted descending.
pub fn sorted_descending(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted
}

/// `k`-th largest element (1-based). Positions past the end read as zero bids.
pub fn kth_largest(values: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("order statistics are 1-based; k must be >= 1"));
    }
    Ok(kth_of_sorted(&sorted_descending(values), k))
}

/// Zero-extended `k`-th entry (1-based) of an already descending slice.
pub(crate) fn kth_of_sorted(sorted_desc: &[f64], k: usize) -> f64 {
    debug_assert!(k >= 1);
    sorted_desc.get(k - 1).copied().unwrap_or(0.0)
}

/// Value the coalition extracts from `m` items: members trade items among
/// themselves, so the items end up with the `m` highest true values.
pub fn group_welfare(colluder_values: &[f64], m: usize) -> Result<f64> {
    if m > colluder_values.len() {
        return Err(Error::invalid(format!(
            "coalition of {} cannot hold {m} items",
            colluder_values.len()
        )));
    }
    Ok(sorted_descending(colluder_values).iter().take(m).sum())
}

/// Allocation, uniform price and the resulting accounting of one auction run.
///
/// `allocation` is the nominal allocation chosen by the mechanism. `utilities`
/// are post-transfer: items won by the coalition are credited to its members
/// with the highest true values, so `colluder_joint_utility` is the sum of the
/// colluders' entries.
#[derive(Clone, Debug, PartialEq)]
pub struct MechanismOutcome {
    pub allocation: Vec<bool>,
    pub price: f64,
    pub welfare: f64,
    /// Welfare of the nominal allocation, before the coalition reshuffles
    /// items among its members.
    pub nominal_welfare: f64,
    pub revenue: f64,
    pub utilities: Vec<f64>,
    pub colluder_joint_utility: f64,
    pub items_to_noncolluders: usize,
    pub items_to_colluders: usize,
    pub items_unsold: usize,
}

impl MechanismOutcome {
    /// Account an allocation at a uniform `price` against the true `values`.
    pub fn settle(
        values: &ValuationProfile,
        partition: &Partition,
        allocation: Vec<bool>,
        price: f64,
        items: usize,
    ) -> Result<Self> {
        partition.check_profile(values)?;
        if allocation.len() != values.len() {
            return Err(Error::invalid("allocation length does not match the profile"));
        }
        let items_to_noncolluders = partition.noncolluders().iter().filter(|&&i| allocation[i]).count();
        let items_to_colluders = partition.colluders().iter().filter(|&&i| allocation[i]).count();
        let sold = items_to_noncolluders + items_to_colluders;
        if sold > items {
            return Err(Error::InvariantViolation(format!("{sold} winners for {items} items")));
        }

        let mut utilities = vec![0.0; values.len()];
        let mut welfare = 0.0;
        for &i in partition.noncolluders() {
            if allocation[i] {
                utilities[i] = values.get(i) - price;
                welfare += values.get(i);
            }
        }
        let colluder_values = values.select(partition.colluders());
        let holders = rank_descending(&colluder_values);
        for &pos in holders.iter().take(items_to_colluders) {
            let id = partition.colluders()[pos];
            utilities[id] = values.get(id) - price;
            welfare += values.get(id);
        }
        let colluder_joint_utility = partition.colluders().iter().map(|&i| utilities[i]).sum();
        let nominal_welfare = (0..values.len()).filter(|&i| allocation[i]).map(|i| values.get(i)).sum();

        let outcome = Self {
            allocation,
            price,
            welfare,
            nominal_welfare,
            revenue: price * sold as f64,
            utilities,
            colluder_joint_utility,
            items_to_noncolluders,
            items_to_colluders,
            items_unsold: items - sold,
        };
        outcome.check_consistency()?;
        Ok(outcome)
    }

    pub fn items_sold(&self) -> usize {
        self.items_to_noncolluders + self.items_to_colluders
    }

    /// Revenue is price times items sold, and welfare is revenue plus every
    /// bidder's utility.
    pub fn check_consistency(&self) -> Result<()> {
        let won = self.allocation.iter().filter(|&&w| w).count();
        if won != self.items_sold() {
            return Err(Error::InvariantViolation(format!(
                "allocation has {won} winners but {} items are accounted",
                self.items_sold()
            )));
        }
        let scale = 1.0 + self.welfare.abs() + self.revenue.abs();
        let revenue = self.price * self.items_sold() as f64;
        if (revenue - self.revenue).abs() > 1e-12 * scale {
            return Err(Error::InvariantViolation(format!(
                "revenue {} != price x items sold {revenue}",
                self.revenue
            )));
        }
        let total = self.revenue + self.utilities.iter().sum::<f64>();
        if (total - self.welfare).abs() > 1e-9 * scale {
            return Err(Error::InvariantViolation(format!(
                "welfare {} != revenue + utilities {total}",
                self.welfare
            )));
        }
        Ok(())
    }
}
