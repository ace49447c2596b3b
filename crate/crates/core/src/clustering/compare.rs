use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ClusterAssignment;
use crate::error::{Error, Result};

/// Agreement between two assignments over the same advertisers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentComparison {
    pub ari: f64,
    /// `contingency[i][j]` counts advertisers in cluster `i` of the first and
    /// cluster `j` of the second assignment.
    pub contingency: Vec<Vec<usize>>,
}

fn choose2(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

pub fn contingency(a: &[usize], b: &[usize]) -> Vec<Vec<usize>> {
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&i, &j) in a.iter().zip(b) {
        table[i][j] += 1;
    }
    table
}

/// Adjusted Rand index of two label vectors.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "label vectors differ in length");
    let table = contingency(a, b);
    let index: f64 = table.iter().flatten().map(|&n| choose2(n)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..table.first().map_or(0, Vec::len))
        .map(|j| choose2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let total = choose2(a.len());
    if total == 0.0 {
        return 1.0;
    }
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if (max - expected).abs() < 1e-12 {
        // Both partitions trivial (one cluster or all singletons).
        return if (index - expected).abs() < 1e-12 && rows == cols { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

pub fn compare_assignments(a: &ClusterAssignment, b: &ClusterAssignment) -> Result<AssignmentComparison> {
    if a.labels.len() != b.labels.len() || a.labels.keys().any(|id| !b.labels.contains_key(id)) {
        return Err(Error::invalid("assignments cover different advertiser sets"));
    }
    let la: Vec<usize> = a.labels.values().copied().collect();
    let lb: Vec<usize> = a.labels.keys().map(|id| b.labels[id]).collect();
    let mut table = contingency(&la, &lb);
    table.resize(a.k, vec![0; b.k]);
    for row in &mut table {
        row.resize(b.k, 0);
    }
    Ok(AssignmentComparison {
        ari: adjusted_rand_index(&la, &lb),
        contingency: table,
    })
}

/// Cluster sizes keyed by cluster id.
pub fn cluster_sizes(labels: &BTreeMap<String, usize>, k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &l in labels.values() {
        sizes[l] += 1;
    }
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_and_relabelled() {
        let a = [0, 0, 1, 1, 2];
        assert_eq!(adjusted_rand_index(&a, &a), 1.0);
        assert_eq!(adjusted_rand_index(&a, &[2, 2, 0, 0, 1]), 1.0);
    }

    #[test]
    fn hand_computed_value() {
        // Contingency [[2,1],[0,2]]: index 2, rows 3+1, cols 1+3, total 10.
        // expected 1.6, max 4, ARI = 0.4 / 2.4.
        let ari = adjusted_rand_index(&[0, 0, 0, 1, 1], &[0, 0, 1, 1, 1]);
        assert!((ari - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn random_labels_near_zero() {
        let mut aris = Vec::new();
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<usize> = (0..400).map(|_| rng.random_range(0..4)).collect();
            let mut b = a.clone();
            b.shuffle(&mut rng);
            aris.push(adjusted_rand_index(&a, &b));
        }
        let mean = aris.iter().sum::<f64>() / aris.len() as f64;
        assert!(mean.abs() <= 0.1 && aris.iter().all(|a| a.abs() <= 0.1), "{aris:?}");
    }

    #[test]
    fn contingency_sums() {
        let a = [0, 1, 1, 2, 2, 2];
        let b = [1, 1, 0, 0, 0, 1];
        let t = contingency(&a, &b);
        for (i, row) in t.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), a.iter().filter(|&&x| x == i).count());
        }
        for j in 0..2 {
            assert_eq!(t.iter().map(|r| r[j]).sum::<usize>(), b.iter().filter(|&&x| x == j).count());
        }
    }
}
