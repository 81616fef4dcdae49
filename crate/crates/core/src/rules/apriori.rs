//! Level-wise frequent itemset mining.

use std::collections::{BTreeMap, HashSet};

use super::{Item, RuleError, Transaction};

/// An itemset whose support met the mining threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequentItemset {
    /// Sorted, distinct items.
    pub items: Vec<Item>,
    /// Number of transactions containing every item.
    pub count: usize,
    /// Number of transactions mined.
    pub total: usize,
}

impl FrequentItemset {
    pub fn support(&self) -> f64 {
        self.count as f64 / self.total as f64
    }
}

/// Whether `count` of `total` transactions meets `min_support`.
pub(crate) fn is_frequent(count: usize, total: usize, min_support: f64) -> bool {
    total > 0 && count as f64 / total as f64 >= min_support
}

/// Mines every itemset with support at least `min_support`, up to
/// `max_len` items (unbounded when `None`). Output is ordered by itemset
/// length, then lexicographically by item.
pub fn mine_frequent(
    transactions: &[Transaction],
    min_support: f64,
    max_len: Option<usize>,
) -> Result<Vec<FrequentItemset>, RuleError> {
    if !(min_support > 0.0 && min_support <= 1.0) {
        return Err(RuleError::InvalidSupport(min_support));
    }
    let mut ids: BTreeMap<&Item, u32> = BTreeMap::new();
    for t in transactions {
        for item in &t.items {
            ids.entry(item).or_insert(0);
        }
    }
    let table: Vec<&Item> = ids.keys().copied().collect();
    for (i, item) in table.iter().enumerate() {
        ids.insert(item, i as u32);
    }
    let encoded: Vec<Vec<u32>> = transactions
        .iter()
        .map(|t| {
            let mut v: Vec<u32> = t.items.iter().map(|i| ids[i]).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();

    let total = transactions.len();
    Ok(apriori(&encoded, min_support, max_len)
        .into_iter()
        .map(|(set, count)| FrequentItemset {
            items: set.iter().map(|&i| *table[i as usize]).collect(),
            count,
            total,
        })
        .collect())
}

/// Apriori over sorted id transactions.
fn apriori(
    transactions: &[Vec<u32>],
    min_support: f64,
    max_len: Option<usize>,
) -> Vec<(Vec<u32>, usize)> {
    let total = transactions.len();
    let max_len = max_len.unwrap_or(usize::MAX);
    if total == 0 || max_len == 0 {
        return Vec::new();
    }

    let mut singles: BTreeMap<u32, usize> = BTreeMap::new();
    for t in transactions {
        for &i in t {
            *singles.entry(i).or_default() += 1;
        }
    }
    let mut level: Vec<(Vec<u32>, usize)> = singles
        .into_iter()
        .filter(|&(_, c)| is_frequent(c, total, min_support))
        .map(|(i, c)| (vec![i], c))
        .collect();

    let mut out = Vec::new();
    let mut k = 1;
    while !level.is_empty() {
        out.extend(level.iter().cloned());
        if k == max_len {
            break;
        }
        let known: HashSet<&[u32]> = level.iter().map(|(s, _)| s.as_slice()).collect();
        let mut candidates: Vec<Vec<u32>> = Vec::new();
        for (a_idx, (a, _)) in level.iter().enumerate() {
            for (b, _) in &level[a_idx + 1..] {
                if a[..k - 1] != b[..k - 1] {
                    break;
                }
                let mut cand = a.clone();
                cand.push(b[k - 1]);
                // every k-subset must itself be frequent
                let closed = (0..k - 1).all(|skip| {
                    let sub: Vec<u32> = cand
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != skip)
                        .map(|(_, &v)| v)
                        .collect();
                    known.contains(sub.as_slice())
                });
                if closed {
                    candidates.push(cand);
                }
            }
        }
        let mut counts = vec![0usize; candidates.len()];
        for t in transactions {
            if t.len() <= k {
                continue;
            }
            for (c, n) in candidates.iter().zip(counts.iter_mut()) {
                if is_subset(c, t) {
                    *n += 1;
                }
            }
        }
        level = candidates
            .into_iter()
            .zip(counts)
            .filter(|&(_, c)| is_frequent(c, total, min_support))
            .collect();
        k += 1;
    }
    out
}

/// Both slices sorted ascending.
fn is_subset(small: &[u32], big: &[u32]) -> bool {
    let mut it = big.iter();
    small.iter().all(|s| it.any(|b| b == s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::ItemKind;
    use crate::telemetry::Feature;

    fn cat(f: Feature, v: f64) -> Item {
        Item {
            feature: f,
            kind: ItemKind::Categorical { value: v },
        }
    }

    #[test]
    fn small_corpus() {
        let a = cat(Feature::Mode, 1.0);
        let b = cat(Feature::BaroStatus, 1.0);
        let c = cat(Feature::BaroStatus, 0.0);
        let t = |items: Vec<Item>| Transaction { items };
        let txs = vec![
            t(vec![a, b]),
            t(vec![a, b]),
            t(vec![a, c]),
        ];
        let got = mine_frequent(&txs, 2.0 / 3.0, None).unwrap();
        let summary: Vec<(Vec<Item>, usize)> =
            got.iter().map(|f| (f.items.clone(), f.count)).collect();
        let mut want = vec![
            (vec![a], 3),
            (vec![b], 2),
            (vec![a, b], 2),
        ];
        want.sort_by(|x, y| x.0.len().cmp(&y.0.len()).then(x.0.cmp(&y.0)));
        assert_eq!(summary, want);
        assert_eq!(got[0].support(), 1.0);
    }

    #[test]
    fn edge_cases() {
        assert!(mine_frequent(&[], 0.5, None).unwrap().is_empty());
        assert!(matches!(
            mine_frequent(&[], 0.0, None),
            Err(RuleError::InvalidSupport(_))
        ));
        assert!(mine_frequent(&[], 1.5, None).is_err());
        let a = cat(Feature::Mode, 1.0);
        let b = cat(Feature::GpsFix, 3.0);
        let txs = vec![
            Transaction {
                items: vec![a, b],
            },
            Transaction {
                items: vec![a],
            },
        ];
        let got = mine_frequent(&txs, 1.0, None).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].items, vec![a]);
    }

    #[test]
    fn subset_merge() {
        assert!(is_subset(&[1, 3], &[0, 1, 2, 3]));
        assert!(!is_subset(&[1, 4], &[0, 1, 2, 3]));
        assert!(is_subset(&[], &[1]));
    }
}
