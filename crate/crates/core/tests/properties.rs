use proptest::prelude::*;

use prizecorr::cli_io::{parse_descriptor_str, serialize_descriptor};
use prizecorr::normal_core::{normal_cdf, normal_pdf, normal_quantile, normal_sf, rank_to_z};
use prizecorr::simulation::{overlap_count, roc_and_phi, roc_curve};
use prizecorr::tail_model::tail_exceedance;
use prizecorr::{DatasetFields, PrizeDataset, RankEntry, TailCondition};

#[test]
fn quantile_round_trip_on_grid() {
    for i in -600..=600 {
        let z = f64::from(i) * 0.01;
        let back = normal_quantile(normal_cdf(z).unwrap()).unwrap();
        assert!((back - z).abs() < 1e-7, "z = {z}: {back}");
    }
}

#[test]
fn exceedance_strictly_increases_with_r() {
    for (x_c, y_c) in [(2.38, 2.38), (3.51, 2.35), (1.0, 0.0), (0.0, 1.5)] {
        let mut prev = f64::NEG_INFINITY;
        for i in -99..=99 {
            let r = f64::from(i) * 0.01;
            let p = tail_exceedance(y_c, &TailCondition::new(r, x_c).unwrap()).unwrap();
            assert!(p > prev, "not increasing at r = {r} for ({x_c}, {y_c})");
            prev = p;
        }
    }
}

fn dataset_fields() -> impl Strategy<Value = DatasetFields> {
    (50u64..200_000, any::<bool>(), "[ -~]{0,24}", "[ -~\\n]{0,40}").prop_flat_map(|(pool, cut, label, notes)| {
        let cutoff = if cut { Some(pool / 10 + 1) } else { None };
        let limit = cutoff.unwrap_or(pool - 1);
        let max_listed = limit.min(30) as usize;
        (
            proptest::collection::btree_set(1..=limit, 0..=max_listed),
            0u64..=max_listed as u64,
            0u64..20,
            Just((pool, cutoff, label.clone(), notes.clone())),
        )
            .prop_map(move |(ranks, placeholders, censored, (pool, cutoff, label, notes))| {
                let placeholders = if cutoff.is_some() {
                    placeholders.min(max_listed as u64 - ranks.len() as u64)
                } else {
                    0
                };
                let censored = if cutoff.is_some() { censored } else { 0 };
                let mut observed: Vec<RankEntry> = ranks.iter().map(|&k| RankEntry::Known(k)).collect();
                observed.extend((0..placeholders).map(|_| RankEntry::Unrecorded));
                if observed.is_empty() && cutoff.is_none() {
                    // without a top list every winner needs a rank
                    observed.push(RankEntry::Known(1));
                }
                let winner_count = (observed.len() as u64 + censored).max(1);
                let censored = winner_count - observed.len() as u64;
                DatasetFields {
                    label,
                    pool_size: pool,
                    winner_count,
                    observed_ranks: observed,
                    censored_count: censored,
                    list_cutoff_rank: cutoff,
                    notes,
                }
            })
    })
}

fn indicator_sample(values: &[(u16, u16)]) -> Vec<(f64, f64)> {
    values.iter().map(|&(x, y)| (f64::from(x), f64::from(y))).collect()
}

proptest! {
    #[test]
    fn cdf_and_sf_are_complementary(z in -10.0f64..10.0) {
        let total = normal_cdf(z).unwrap() + normal_sf(z).unwrap();
        prop_assert!((total - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn pdf_is_derivative_of_cdf(z in -8.0f64..8.0) {
        let h = 1e-5;
        let slope = (normal_cdf(z + h).unwrap() - normal_cdf(z - h).unwrap()) / (2.0 * h);
        prop_assert!((slope - normal_pdf(z).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn cdf_inverts_quantile(p in 1e-12f64..(1.0 - 1e-12)) {
        let back = normal_cdf(normal_quantile(p).unwrap()).unwrap();
        prop_assert!((back - p).abs() <= 1e-12 * p.max(1e-3));
    }

    #[test]
    fn rank_to_z_decreases(pool in 3u64..1_000_000, a in 1u64..1_000_000) {
        let a = a % (pool - 2) + 1;
        prop_assert!(rank_to_z(a, pool).unwrap() > rank_to_z(a + 1, pool).unwrap());
    }

    #[test]
    fn descriptor_round_trip(fields in dataset_fields()) {
        let ds = PrizeDataset::try_from(fields).unwrap();
        let text = serialize_descriptor(&ds);
        let parsed = parse_descriptor_str(&text).unwrap().dataset;
        prop_assert_eq!(&parsed, &ds);
        prop_assert_eq!(serialize_descriptor(&parsed), text);
    }

    #[test]
    fn phi_equals_gap_at_winner_count(
        values in proptest::collection::vec((any::<u16>(), any::<u16>()), 3..60),
        w in 1usize..60,
    ) {
        let sample = indicator_sample(&values);
        let w = 1 + w % (sample.len() - 1);
        let res = roc_and_phi(&sample, w, w).unwrap();
        prop_assert_eq!(res.phi, Some(res.tpr_minus_fpr));
        prop_assert_eq!(res.true_positives, overlap_count(&sample, w));
    }

    #[test]
    fn roc_is_monotone_and_anchored(
        values in proptest::collection::vec((any::<u16>(), any::<u16>()), 3..60),
        w in 1usize..60,
    ) {
        let sample = indicator_sample(&values);
        let w = 1 + w % (sample.len() - 1);
        let roc = roc_curve(&sample, w).unwrap();
        let first = roc.points.first().unwrap();
        let last = roc.points.last().unwrap();
        prop_assert_eq!((first.tpr, first.fpr), (0.0, 0.0));
        prop_assert_eq!((last.tpr, last.fpr), (1.0, 1.0));
        for pair in roc.points.windows(2) {
            prop_assert!(pair[1].tpr >= pair[0].tpr && pair[1].fpr >= pair[0].fpr);
        }
    }

    #[test]
    fn overlap_is_symmetric_in_roles(
        values in proptest::collection::vec((any::<u16>(), any::<u16>()), 1..60),
        m in 0usize..60,
    ) {
        let sample = indicator_sample(&values);
        let m = m % (sample.len() + 1);
        let swapped: Vec<_> = sample.iter().map(|&(x, y)| (y, x)).collect();
        prop_assert_eq!(overlap_count(&sample, m), overlap_count(&swapped, m));
    }
}
