//! Truthful VCG, VCG under the coalition's best response, and H-VCG.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{
    check_items, kth_of_sorted, rank_descending, sorted_descending, MechanismOutcome, Partition, ValuationProfile,
};

/// Multi-unit VCG with everyone acting independently: the `r` highest bids win
/// and pay the `(r+1)`-th highest bid (zero when there is none). Welfare is
/// measured against the bids.
pub fn vcg(bids: &ValuationProfile, r: usize) -> Result<MechanismOutcome> {
    vcg_with_values(bids, bids, &Partition::no_collusion(bids.len())?, r)
}

/// VCG on `bids`, accounted against the true `values` with the coalition of
/// `partition` pooling its items.
pub fn vcg_with_values(
    bids: &ValuationProfile,
    values: &ValuationProfile,
    partition: &Partition,
    r: usize,
) -> Result<MechanismOutcome> {
    check_items(r)?;
    if bids.len() != values.len() {
        return Err(Error::invalid("bids and values cover different bidders"));
    }
    let mut allocation = vec![false; bids.len()];
    for &winner in rank_descending(bids.values()).iter().take(r) {
        allocation[winner] = true;
    }
    let price = kth_of_sorted(&sorted_descending(bids.values()), r + 1);
    MechanismOutcome::settle(values, partition, allocation, price, r)
}

/// Coalition utility when it takes exactly `r_c` items and the remaining
/// `r - r_c` go to non-colluders: the top `r_c` colluder values minus `r_c`
/// times the highest losing non-colluder bid.
///
/// Both slices must be sorted in descending order.
pub fn colluder_utility_given_count(
    colluder_values: &[f64],
    noncolluder_bids: &[f64],
    r: usize,
    r_c: usize,
) -> Result<f64> {
    check_items(r)?;
    if r_c > colluder_values.len().min(r) {
        return Err(Error::invalid(format!(
            "coalition of {} cannot take {r_c} of {r} items",
            colluder_values.len()
        )));
    }
    let r_n = r - r_c;
    let price = kth_of_sorted(noncolluder_bids, r_n + 1);
    Ok(colluder_values[..r_c].iter().sum::<f64>() - r_c as f64 * price)
}

/// The coalition's utility-maximizing bids under VCG.
#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    pub items_taken: usize,
    /// One bid per colluder, in the order of [`Partition::colluders`].
    pub bids: Vec<f64>,
    pub joint_utility: f64,
}

impl BestResponse {
    /// Full bid vector: non-colluders truthful, colluders as in `self.bids`.
    pub fn bid_profile(&self, values: &ValuationProfile, partition: &Partition) -> Result<ValuationProfile> {
        let mut bids = values.values().to_vec();
        for (&id, &bid) in partition.colluders().iter().zip(&self.bids) {
            bids[id] = bid;
        }
        ValuationProfile::new(bids)
    }
}

/// Best response of the coalition to truthful non-colluders: pick the item
/// count with the highest utility (smallest count on ties), then the top
/// colluders bid their true values and the rest bid zero.
pub fn colluder_best_response(values: &ValuationProfile, partition: &Partition, r: usize) -> Result<BestResponse> {
    partition.check_profile(values)?;
    check_items(r)?;
    let colluder_values = values.select(partition.colluders());
    let colluder_desc = sorted_descending(&colluder_values);
    let noncolluder_desc = sorted_descending(&values.select(partition.noncolluders()));

    let mut items_taken = 0;
    let mut joint_utility = 0.0;
    for r_c in 1..=partition.c().min(r) {
        let u = colluder_utility_given_count(&colluder_desc, &noncolluder_desc, r, r_c)?;
        if u > joint_utility {
            items_taken = r_c;
            joint_utility = u;
        }
    }

    let mut bids = vec![0.0; partition.c()];
    for &pos in rank_descending(&colluder_values).iter().take(items_taken) {
        bids[pos] = colluder_values[pos];
    }
    Ok(BestResponse {
        items_taken,
        bids,
        joint_utility,
    })
}

/// VCG where non-colluders bid truthfully and the coalition plays
/// [`colluder_best_response`].
pub fn vcg_with_collusion(values: &ValuationProfile, partition: &Partition, r: usize) -> Result<MechanismOutcome> {
    let response = colluder_best_response(values, partition, r)?;
    let bids = response.bid_profile(values, partition)?;
    vcg_with_values(&bids, values, partition, r)
}

/// Largest item count H-VCG may hand to non-colluders, `min(r, N - 1)`, so that
/// the posted price is always a submitted bid.
pub fn max_feasible_k(n: usize, r: usize) -> Option<usize> {
    n.checked_sub(1).map(|m| m.min(r))
}

pub(crate) fn check_k(n: usize, r: usize, k: usize) -> Result<()> {
    check_items(r)?;
    match max_feasible_k(n, r) {
        Some(max) if k <= max => Ok(()),
        _ => Err(Error::invalid(format!(
            "k={k} infeasible for N={n}, r={r}; k must lie in 0..=min(r, N-1)"
        ))),
    }
}

/// Deterministic part of H-VCG: everything except the random pick among
/// qualifying colluders.
#[derive(Clone, Debug, PartialEq)]
pub struct HvcgPhases {
    /// Posted price `b^N_{k+1}`.
    pub price: f64,
    pub noncolluder_winners: Vec<usize>,
    /// Colluders bidding strictly above the price, ascending ids.
    pub qualifiers: Vec<usize>,
    /// Items left for the coalition, `r - k`.
    pub colluder_slots: usize,
}

pub fn hvcg_phases(bids: &ValuationProfile, partition: &Partition, r: usize, k: usize) -> Result<HvcgPhases> {
    partition.check_profile(bids)?;
    check_k(partition.n(), r, k)?;
    let noncolluder_bids = bids.select(partition.noncolluders());
    let order = rank_descending(&noncolluder_bids);
    let noncolluder_winners = order[..k].iter().map(|&pos| partition.noncolluders()[pos]).collect();
    let price = noncolluder_bids[order[k]];
    let qualifiers = partition.colluders().iter().copied().filter(|&i| bids.get(i) > price).collect();
    Ok(HvcgPhases {
        price,
        noncolluder_winners,
        qualifiers,
        colluder_slots: r - k,
    })
}

/// H-VCG with split `k`, welfare measured against the bids.
pub fn hvcg<R: Rng + ?Sized>(
    bids: &ValuationProfile,
    partition: &Partition,
    r: usize,
    k: usize,
    rng: &mut R,
) -> Result<MechanismOutcome> {
    hvcg_with_values(bids, bids, partition, r, k, rng)
}

/// H-VCG with split `k`: VCG among non-colluders for `k` items at price
/// `b^N_{k+1}`, then the same price posted to the coalition for the remaining
/// `r - k` items. When more colluders qualify than there are items, a uniform
/// random subset wins.
pub fn hvcg_with_values<R: Rng + ?Sized>(
    bids: &ValuationProfile,
    values: &ValuationProfile,
    partition: &Partition,
    r: usize,
    k: usize,
    rng: &mut R,
) -> Result<MechanismOutcome> {
    let phases = hvcg_phases(bids, partition, r, k)?;
    let mut allocation = vec![false; bids.len()];
    for &i in &phases.noncolluder_winners {
        allocation[i] = true;
    }
    let mut qualifiers = phases.qualifiers;
    if qualifiers.len() > phases.colluder_slots {
        qualifiers.shuffle(rng);
        qualifiers.truncate(phases.colluder_slots);
    }
    for i in qualifiers {
        allocation[i] = true;
    }
    MechanismOutcome::settle(values, partition, allocation, phases.price, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn profile(v: &[f64]) -> ValuationProfile {
        ValuationProfile::new(v.to_vec()).unwrap()
    }

    fn example_one() -> (ValuationProfile, Partition) {
        // bidders 3 and 5 of the five-bidder example, 0-based
        (profile(&[1.0, 70.0, 101.0, 102.0, 103.0]), Partition::new(5, &[2, 4]).unwrap())
    }

    /// Non-colluders listed first, then colluders.
    fn split(noncolluders: &[f64], colluders: &[f64]) -> (ValuationProfile, Partition) {
        let values: Vec<f64> = noncolluders.iter().chain(colluders).copied().collect();
        (profile(&values), Partition::contiguous(noncolluders.len(), colluders.len()).unwrap())
    }

    #[test]
    fn vcg_examples() {
        let out = vcg(&example_one().0, 3).unwrap();
        assert_eq!(out.allocation, vec![false, false, true, true, true]);
        assert_eq!((out.price, out.welfare, out.revenue), (70.0, 306.0, 210.0));

        let out = vcg(&profile(&[5.0, 4.0]), 3).unwrap();
        assert_eq!(out.allocation, vec![true, true]);
        assert_eq!((out.price, out.revenue, out.items_unsold), (0.0, 0.0, 1));

        let out = vcg(&profile(&[5.0, 4.0, 3.0]), 2).unwrap();
        assert_eq!((out.price, out.revenue, out.welfare), (3.0, 6.0, 9.0));
        assert!(vcg(&profile(&[1.0]), 0).is_err());
    }

    #[test]
    fn utility_given_count_examples() {
        let vc = [103.0, 101.0];
        let bn = [102.0, 70.0, 1.0];
        assert_eq!(colluder_utility_given_count(&vc, &bn, 3, 1).unwrap(), 102.0);
        assert_eq!(colluder_utility_given_count(&vc, &bn, 3, 2).unwrap(), 64.0);
        assert_eq!(colluder_utility_given_count(&vc, &bn, 3, 0).unwrap(), 0.0);
        assert!(colluder_utility_given_count(&vc, &bn, 3, 3).is_err());
        assert!(colluder_utility_given_count(&vc, &bn, 1, 2).is_err());
    }

    #[test]
    fn best_response_example_one() {
        let (values, partition) = example_one();
        let br = colluder_best_response(&values, &partition, 3).unwrap();
        assert_eq!(br.items_taken, 1);
        assert_eq!(br.bids, vec![0.0, 103.0]);
        assert_eq!(br.joint_utility, 102.0);

        let out = vcg_with_collusion(&values, &partition, 3).unwrap();
        assert_eq!(out.allocation, vec![false, true, false, true, true]);
        assert_eq!((out.price, out.welfare, out.revenue), (1.0, 275.0, 3.0));
        assert_eq!(out.colluder_joint_utility, 102.0);

        let truthful = vcg_with_values(&values, &values, &partition, 3).unwrap();
        assert_eq!(truthful.colluder_joint_utility, 64.0);
    }

    #[test]
    fn best_response_without_coalition() {
        let values = profile(&[0.3, 0.9]);
        let partition = Partition::no_collusion(2).unwrap();
        let br = colluder_best_response(&values, &partition, 1).unwrap();
        assert_eq!((br.items_taken, br.joint_utility), (0, 0.0));
        assert!(br.bids.is_empty());
        assert_eq!(vcg_with_collusion(&values, &partition, 1).unwrap(), vcg(&values, 1).unwrap());
    }

    #[test]
    fn best_response_takes_both_items() {
        let (values, partition) = split(&[0.5, 0.4, 0.3], &[0.9, 0.8]);
        let br = colluder_best_response(&values, &partition, 2).unwrap();
        assert_eq!(br.items_taken, 2);
        assert_eq!(br.bids, vec![0.9, 0.8]);
        assert_abs_diff_eq!(br.joint_utility, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn hvcg_trace() {
        let mut rng = substream(0, "hvcg-test", &[]);
        let (values, partition) = split(&[3.0, 2.0, 1.0], &[5.0]);
        let out = hvcg(&values, &partition, 2, 1, &mut rng).unwrap();
        assert_eq!(out.allocation, vec![true, false, false, true]);
        assert_eq!((out.price, out.welfare, out.revenue, out.items_unsold), (2.0, 8.0, 4.0, 0));
    }

    #[test]
    fn hvcg_transfer_accounting_ignores_pick() {
        let (values, partition) = split(&[3.0, 2.0], &[5.0, 4.0, 3.0]);
        for seed in 0..20 {
            let mut rng = substream(seed, "hvcg-pick", &[]);
            let out = hvcg(&values, &partition, 2, 1, &mut rng).unwrap();
            assert_eq!(out.price, 2.0);
            assert_eq!(out.items_to_colluders, 1);
            assert_eq!(out.welfare, 8.0);
        }
    }

    #[test]
    fn hvcg_strict_qualification() {
        let mut rng = substream(0, "hvcg-test", &[]);
        let (values, partition) = split(&[3.0, 2.0, 1.0], &[1.0]);
        let out = hvcg(&values, &partition, 2, 1, &mut rng).unwrap();
        assert_eq!((out.price, out.items_unsold, out.revenue), (2.0, 1, 2.0));

        // a colluder bidding exactly the price does not qualify
        let (values, partition) = split(&[3.0, 2.0, 1.0], &[2.0]);
        let out = hvcg(&values, &partition, 2, 1, &mut rng).unwrap();
        assert_eq!(out.items_to_colluders, 0);
    }

    #[test]
    fn hvcg_rejects_infeasible_k() {
        let mut rng = substream(0, "hvcg-test", &[]);
        let (values, partition) = split(&[3.0, 2.0], &[5.0]);
        assert!(hvcg(&values, &partition, 2, 2, &mut rng).unwrap_err().is_invalid_argument());
        assert!(hvcg(&values, &partition, 2, 1, &mut rng).is_ok());
        assert_eq!(max_feasible_k(1, 5), Some(0));
        assert_eq!(max_feasible_k(10, 3), Some(3));
        assert_eq!(max_feasible_k(0, 3), None);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, usize)> {
        (1usize..10).prop_flat_map(|m| {
            (
                prop::collection::vec(0.0f64..1.0, m),
                prop::collection::vec(any::<bool>(), m),
                1usize..6,
            )
        })
    }

    fn build(values: Vec<f64>, mut colluder: Vec<bool>) -> (ValuationProfile, Partition) {
        colluder[0] = false;
        let ids: Vec<usize> = (0..values.len()).filter(|&i| colluder[i]).collect();
        let partition = Partition::new(values.len(), &ids).unwrap();
        (profile(&values), partition)
    }

    proptest! {
        #[test]
        fn best_response_shades_and_matches_vcg((values, colluder, r) in instance()) {
            let (values, partition) = build(values, colluder);
            let br = colluder_best_response(&values, &partition, r).unwrap();
            for (&id, &bid) in partition.colluders().iter().zip(&br.bids) {
                prop_assert!(bid == 0.0 || bid == values.get(id));
                prop_assert!(bid <= values.get(id));
            }
            prop_assert_eq!(br.bids.iter().filter(|&&b| b > 0.0).count(), br.items_taken);
            let out = vcg_with_collusion(&values, &partition, r).unwrap();
            prop_assert!((out.colluder_joint_utility - br.joint_utility).abs() < 1e-12);
        }

        #[test]
        fn hvcg_reduces_to_vcg_without_coalition(values in prop::collection::vec(0.0f64..1.0, 1..10), r in 1usize..6, seed in any::<u64>()) {
            let n = values.len();
            let values = profile(&values);
            let partition = Partition::no_collusion(n).unwrap();
            let k = max_feasible_k(n, r).unwrap();
            let mut rng = substream(seed, "hvcg", &[]);
            let h = hvcg(&values, &partition, r, k, &mut rng).unwrap();
            let v = vcg(&values, k.max(1)).unwrap();
            if k >= 1 {
                prop_assert_eq!(h.items_to_noncolluders, v.items_sold());
                prop_assert!((h.welfare - v.welfare).abs() < 1e-12);
                prop_assert!((h.revenue - v.revenue).abs() < 1e-12);
            } else {
                prop_assert_eq!(h.items_sold(), 0);
            }
        }

        #[test]
        fn hvcg_price_ignores_colluder_bids((values, colluder, r) in instance(), noise in prop::collection::vec(0.0f64..2.0, 10)) {
            let (values, partition) = build(values, colluder);
            let Some(kmax) = max_feasible_k(partition.n(), r) else { return Ok(()); };
            let mut shifted = values.values().to_vec();
            for (j, &id) in partition.colluders().iter().enumerate() {
                shifted[id] = noise[j];
            }
            let shifted = profile(&shifted);
            for k in 0..=kmax {
                let a = hvcg_phases(&values, &partition, r, k).unwrap();
                let b = hvcg_phases(&shifted, &partition, r, k).unwrap();
                prop_assert_eq!(a.price, b.price);
                prop_assert_eq!(a.noncolluder_winners, b.noncolluder_winners);
            }
        }
    }
}
