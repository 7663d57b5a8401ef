use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_SPLIT};

/// Indices into the item list for each partition.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Part {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Part::Train),
            "val" => Ok(Part::Val),
            "test" => Ok(Part::Test),
            other => Err(Error::InvalidConfig(format!("unknown split `{other}`"))),
        }
    }
}

impl std::fmt::Display for Part {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Part::Train => "train",
            Part::Val => "val",
            Part::Test => "test",
        })
    }
}

impl Split {
    pub fn part(&self, p: Part) -> &[usize] {
        match p {
            Part::Train => &self.train,
            Part::Val => &self.val,
            Part::Test => &self.test,
        }
    }
}

/// Largest-remainder apportionment of `n` items by `ratios`; ties go to the
/// earlier part.
fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let quota: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quota) {
        *c = q.floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quota[a] - quota[a].floor();
        let fb = quota[b] - quota[b].floor();
        fb.partial_cmp(&fa).expect("finite quotas").then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>();
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Deterministic train/val/test partition, a function of the seed and the
/// sorted ids only.
///
/// Partition sizes follow `ratios` over the whole list. With every label
/// holding at least three items the assignment is stratified, so each label
/// lands in every partition; otherwise a warning is logged and the items are
/// split without regard to label.
pub fn split_dataset(ids: &[String], labels: &[String], ratios: [f64; 3], seed: u64) -> Result<Split> {
    if ids.len() != labels.len() {
        return Err(Error::ShapeMismatch("ids and labels differ in length".into()));
    }
    if ids.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig("split ratios must be non-negative and sum to 1".into()));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    let mut rng = stream_rng(seed, STREAM_SPLIT);
    let totals = apportion(ids.len(), &ratios);

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in &order {
        groups.entry(labels[i].as_str()).or_default().push(i);
    }
    let mut split = Split::default();
    if groups.values().any(|g| g.len() < 3) {
        log::warn!("a label has fewer than 3 items; splitting without stratification");
        order.shuffle(&mut rng);
        split.train = order[..totals[0]].to_vec();
        split.val = order[totals[0]..totals[0] + totals[1]].to_vec();
        split.test = order[totals[0] + totals[1]..].to_vec();
    } else {
        let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
        let alloc = allocate(&sizes, &ratios, totals);
        for (group, counts) in groups.values_mut().zip(alloc) {
            group.shuffle(&mut rng);
            split.train.extend_from_slice(&group[..counts[0]]);
            split.val.extend_from_slice(&group[counts[0]..counts[0] + counts[1]]);
            split.test.extend_from_slice(&group[counts[0] + counts[1]..]);
        }
    }
    for part in [&mut split.train, &mut split.val, &mut split.test] {
        part.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    }
    Ok(split)
}

/// Per-group counts whose row sums are the group sizes and whose column
/// sums are `totals`. Floors of each quota first, then the remaining units
/// by largest fractional part, with at least one item per part wherever a
/// group can afford it.
fn allocate(sizes: &[usize], ratios: &[f64; 3], totals: [usize; 3]) -> Vec<[usize; 3]> {
    let mut alloc: Vec<[usize; 3]> = sizes
        .iter()
        .map(|&n| {
            let mut c = [0usize; 3];
            for k in 0..3 {
                c[k] = (ratios[k] * n as f64).floor() as usize;
            }
            c
        })
        .collect();
    let mut col_left: Vec<isize> = (0..3)
        .map(|k| totals[k] as isize - alloc.iter().map(|c| c[k] as isize).sum::<isize>())
        .collect();
    let mut row_left: Vec<usize> = sizes.iter().zip(&alloc).map(|(n, c)| n - c.iter().sum::<usize>()).collect();
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    for (g, &n) in sizes.iter().enumerate() {
        for k in 0..3 {
            let q = ratios[k] * n as f64;
            // Empty parts first, then larger fractional parts.
            let priority = if alloc[g][k] == 0 && ratios[k] > 0.0 { 2.0 } else { q - q.floor() };
            cells.push((g, k, priority));
        }
    }
    cells.sort_by(|a, b| b.2.partial_cmp(&a.2).expect("finite").then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    for &(g, k, _) in &cells {
        if row_left[g] > 0 && col_left[k] > 0 {
            alloc[g][k] += 1;
            row_left[g] -= 1;
            col_left[k] -= 1;
        }
    }
    for g in 0..sizes.len() {
        while row_left[g] > 0 {
            let k = (0..3).find(|&k| col_left[k] > 0).expect("remaining units balance");
            alloc[g][k] += 1;
            row_left[g] -= 1;
            col_left[k] -= 1;
        }
    }
    alloc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(per_class: &[usize]) -> (Vec<String>, Vec<String>) {
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in per_class.iter().enumerate() {
            for i in 0..n {
                ids.push(format!("c{c}_{i:03}"));
                labels.push(format!("class{c}"));
            }
        }
        (ids, labels)
    }

    #[test]
    fn hundred_items_split_70_10_20() {
        let (ids, labels) = corpus(&[25; 4]);
        let s = split_dataset(&ids, &labels, [0.7, 0.1, 0.2], 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 10, 20));
        for part in [&s.train, &s.val, &s.test] {
            for c in 0..4 {
                let name = format!("class{c}");
                assert!(part.iter().any(|&i| labels[i] == name), "class {c} missing");
            }
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let (ids, labels) = corpus(&[25; 4]);
        let a = split_dataset(&ids, &labels, [0.7, 0.1, 0.2], 3).unwrap();
        assert_eq!(a, split_dataset(&ids, &labels, [0.7, 0.1, 0.2], 3).unwrap());
        assert_ne!(a, split_dataset(&ids, &labels, [0.7, 0.1, 0.2], 4).unwrap());
        let mut rev_ids = ids.clone();
        let mut rev_labels = labels.clone();
        rev_ids.reverse();
        rev_labels.reverse();
        let b = split_dataset(&rev_ids, &rev_labels, [0.7, 0.1, 0.2], 3).unwrap();
        let names = |v: &[usize], ids: &[String]| v.iter().map(|&i| ids[i].clone()).collect::<Vec<_>>();
        assert_eq!(names(&a.test, &ids), names(&b.test, &rev_ids));
    }

    #[test]
    fn tiny_classes_fall_back() {
        let (ids, labels) = corpus(&[2, 8]);
        let s = split_dataset(&ids, &labels, [0.7, 0.1, 0.2], 1).unwrap();
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 10);
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_and_complete(
            per_class in prop::collection::vec(1usize..40, 1..6),
            seed in 0u64..1000,
        ) {
            let (ids, labels) = corpus(&per_class);
            let s = split_dataset(&ids, &labels, [0.7, 0.1, 0.2], seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..ids.len()).collect::<Vec<_>>());
            let want = apportion(ids.len(), &[0.7, 0.1, 0.2]);
            prop_assert_eq!([s.train.len(), s.val.len(), s.test.len()], want);
        }
    }
}
