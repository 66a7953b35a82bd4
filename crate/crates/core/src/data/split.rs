use rand::seq::SliceRandom;

use crate::data::LabeledInstance;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::rng::rng_for;

const ROUNDING_SLACK: f64 = 1e-9;

/// Per-class quotas summing to `round(n * fraction)`, distributed by largest
/// remainder. Remainder ties go to NOT first.
fn class_quotas(counts: [usize; 2], fraction: f64) -> [usize; 2] {
    let total = counts[0] + counts[1];
    let target = (total as f64 * fraction + 0.5 + ROUNDING_SLACK).floor() as usize;
    let exact = counts.map(|c| c as f64 * fraction);
    let mut quotas = exact.map(|x| (x + ROUNDING_SLACK).floor() as usize);
    let mut remaining = target.saturating_sub(quotas[0] + quotas[1]);
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - quotas[a] as f64;
        let rb = exact[b] - quotas[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(4) {
        if remaining == 0 {
            break;
        }
        if quotas[c] < counts[c] {
            quotas[c] += 1;
            remaining -= 1;
        }
    }
    quotas
}

/// Splits `instances` into `(part_a, part_b)` with `part_a` holding
/// `fraction` of every class. Membership within a class is a seeded
/// shuffle; both parts keep the input order.
pub fn stratified_split(
    instances: &[LabeledInstance],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledInstance>, Vec<LabeledInstance>)> {
    if instances.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, inst) in instances.iter().enumerate() {
        by_class[inst.label.index()].push(i);
    }
    let quotas = class_quotas([by_class[0].len(), by_class[1].len()], fraction);

    let mut in_a = vec![false; instances.len()];
    for label in Label::ALL {
        let mut members = by_class[label.index()].clone();
        let mut rng = rng_for(seed, &format!("stratified-split/{label}"));
        members.shuffle(&mut rng);
        for &i in &members[..quotas[label.index()]] {
            in_a[i] = true;
        }
    }
    let (a, b): (Vec<_>, Vec<_>) = instances
        .iter()
        .zip(in_a)
        .partition(|(_, in_a)| *in_a);
    Ok((
        a.into_iter().map(|(x, _)| x.clone()).collect(),
        b.into_iter().map(|(x, _)| x.clone()).collect(),
    ))
}

/// Stratified sample of `fraction` of `instances`; `fraction >= 1` keeps all.
pub fn stratified_subsample(
    instances: &[LabeledInstance],
    fraction: f64,
    seed: u64,
) -> Result<Vec<LabeledInstance>> {
    if instances.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if fraction >= 1.0 {
        return Ok(instances.to_vec());
    }
    Ok(stratified_split(instances, fraction, seed)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::label_counts;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn corpus(not: usize, off: usize) -> Vec<LabeledInstance> {
        (0..not + off)
            .map(|i| {
                let label = if i < not { Label::Not } else { Label::Off };
                LabeledInstance::new(format!("r{i}"), &format!("text {i}"), label, "t").unwrap()
            })
            .collect()
    }

    #[test]
    fn ten_rows_fifth() {
        let (a, b) = stratified_split(&corpus(5, 5), 0.2, 1).unwrap();
        assert_eq!(label_counts(&a), [1, 1]);
        assert_eq!(label_counts(&b), [4, 4]);
    }

    #[test]
    fn half_of_symmetric_corpus() {
        let (a, b) = stratified_split(&corpus(6, 6), 0.5, 3).unwrap();
        assert_eq!(label_counts(&a), label_counts(&b));
    }

    #[test]
    fn subsample_80_20() {
        let sub = stratified_subsample(&corpus(800, 200), 0.2, 5).unwrap();
        assert_eq!(sub.len(), 200);
        assert_eq!(label_counts(&sub), [160, 40]);
    }

    #[test]
    fn full_fraction_keeps_everything() {
        let c = corpus(3, 4);
        assert_eq!(stratified_subsample(&c, 1.0, 0).unwrap(), c);
    }

    #[test]
    fn largest_remainder() {
        // 7 * 0.3 = 2.1 NOT, 3 * 0.3 = 0.9 OFF, target 3 -> OFF gets the extra
        assert_eq!(class_quotas([7, 3], 0.3), [2, 1]);
        // equal remainders favour NOT
        assert_eq!(class_quotas([5, 5], 0.1), [1, 0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(stratified_split(&[], 0.5, 0), Err(Error::EmptyInput)));
        assert!(stratified_split(&corpus(1, 1), 0.0, 0).is_err());
        assert!(stratified_split(&corpus(1, 1), 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn partitions_by_id(not in 0usize..40, off in 0usize..40, frac in 0.01f64..0.99, seed: u64) {
            prop_assume!(not + off > 0);
            let c = corpus(not, off);
            let (a, b) = stratified_split(&c, frac, seed).unwrap();
            let ids_a: BTreeSet<_> = a.iter().map(|i| i.id.clone()).collect();
            let ids_b: BTreeSet<_> = b.iter().map(|i| i.id.clone()).collect();
            prop_assert!(ids_a.is_disjoint(&ids_b));
            let all: BTreeSet<_> = c.iter().map(|i| i.id.clone()).collect();
            prop_assert_eq!(ids_a.union(&ids_b).cloned().collect::<BTreeSet<_>>(), all);
            let again = stratified_split(&c, frac, seed).unwrap();
            prop_assert_eq!(again.0, a);
        }
    }
}
