use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numkit::Rng;

/// Class-stratified sample of `count` row indices, without replacement.
///
/// Per-class quotas follow largest-remainder apportionment of `count` over
/// the class frequencies (ties to the lower class index). The returned
/// indices are in a seeded random order.
pub fn stratified_indices(labels: &[usize], classes: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    let n = labels.len();
    if count > n {
        return Err(Error::Parameter(format!("cannot draw {count} of {n} rows")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let present = by_class.iter().filter(|c| !c.is_empty()).count();
    if count < present {
        return Err(Error::Parameter(format!(
            "{count} samples cannot cover {present} classes"
        )));
    }

    let mut quotas: Vec<usize> = Vec::with_capacity(classes);
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(classes);
    for (c, members) in by_class.iter().enumerate() {
        let exact = count as f64 * members.len() as f64 / n as f64;
        quotas.push(exact.floor() as usize);
        remainders.push((exact - exact.floor(), c));
    }
    let mut left = count - quotas.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, c) in remainders.iter().cycle() {
        if left == 0 {
            break;
        }
        if quotas[c] < by_class[c].len() {
            quotas[c] += 1;
            left -= 1;
        }
    }

    let root = Rng::new(seed);
    let mut picked = Vec::with_capacity(count);
    for (c, members) in by_class.iter().enumerate() {
        let mut rng = root.derive(&[c as u64]);
        let choose = rng.choose_sorted(members.len(), quotas[c]);
        picked.extend(choose.into_iter().map(|k| members[k]));
    }
    root.derive(&[u64::MAX]).shuffle(&mut picked);
    Ok(picked)
}

/// Uniform stratified subset of `ceil(fraction * n)` rows.
pub fn take_fraction(dataset: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Parameter(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let count = (fraction * dataset.len() as f64).ceil() as usize;
    take_count(dataset, count.min(dataset.len()), seed)
}

pub fn take_count(dataset: &Dataset, count: usize, seed: u64) -> Result<Dataset> {
    if count < dataset.classes() {
        return Err(Error::Parameter(format!(
            "{count} samples are fewer than {} classes; cannot stratify",
            dataset.classes()
        )));
    }
    let idx = stratified_indices(dataset.y(), dataset.classes(), count, seed)?;
    Ok(dataset.select_rows(&idx))
}

/// Stratified holdout: returns `(rest, holdout)` with `holdout_count` rows
/// in the holdout. Both keep their original relative row order.
pub fn split_holdout(dataset: &Dataset, holdout_count: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut hold = stratified_indices(dataset.y(), dataset.classes(), holdout_count, seed)?;
    hold.sort_unstable();
    let mut mask = vec![false; dataset.len()];
    for &i in &hold {
        mask[i] = true;
    }
    let rest: Vec<usize> = (0..dataset.len()).filter(|&i| !mask[i]).collect();
    Ok((dataset.select_rows(&rest), dataset.select_rows(&hold)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureKind, Split};
    use crate::numkit::Matrix;
    use std::collections::HashSet;

    fn balanced(n: usize, classes: usize) -> Dataset {
        let x = Matrix::from_fn(n, 1, |r, _| r as f64);
        let z = x.clone();
        let y = (0..n).map(|i| i % classes).collect();
        Dataset::new(x, z, y, classes, FeatureKind::Synthetic, Split::Train).unwrap()
    }

    fn ids(d: &Dataset) -> Vec<usize> {
        d.x().as_slice().iter().map(|&v| v as usize).collect()
    }

    #[test]
    fn full_fraction_is_a_permutation() {
        let d = balanced(100, 10);
        let t = take_fraction(&d, 1.0, 4).unwrap();
        let mut got = ids(&t);
        assert_ne!(got, ids(&d));
        got.sort_unstable();
        assert_eq!(got, ids(&d));
        assert_eq!(ids(&t), ids(&take_fraction(&d, 1.0, 4).unwrap()));
    }

    #[test]
    fn tenth_is_exact_and_balanced() {
        let d = balanced(10_000, 10);
        let t = take_fraction(&d, 0.1, 1).unwrap();
        assert_eq!(t.len(), 1000);
        for c in t.class_counts() {
            assert!((99..=101).contains(&c));
        }
    }

    #[test]
    fn too_few_samples_to_stratify() {
        let d = balanced(100, 10);
        assert!(matches!(take_fraction(&d, 0.05, 1), Err(Error::Parameter(_))));
        assert!(matches!(take_fraction(&d, 0.0, 1), Err(Error::Parameter(_))));
    }

    #[test]
    fn independent_draws_overlap_at_the_sampling_rate() {
        let d = balanced(10_000, 10);
        let mut total = 0.0;
        for k in 0..20u64 {
            let a: HashSet<usize> = ids(&take_fraction(&d, 0.1, 2 * k).unwrap()).into_iter().collect();
            let b = ids(&take_fraction(&d, 0.1, 2 * k + 1).unwrap());
            total += b.iter().filter(|i| a.contains(i)).count() as f64 / b.len() as f64;
        }
        let mean = total / 20.0;
        assert!((mean - 0.1).abs() < 0.01, "{mean}");
    }

    #[test]
    fn holdout_partitions_rows() {
        let d = balanced(50, 5);
        let (rest, hold) = split_holdout(&d, 10, 9).unwrap();
        assert_eq!((rest.len(), hold.len()), (40, 10));
        let mut all: Vec<usize> = ids(&rest).into_iter().chain(ids(&hold)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert!(hold.class_counts().iter().all(|&c| c == 2));
    }
}
