//! Agglomerative clustering of fold features and the repeated-sampling
//! accuracy protocol.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::metric::{pairwise_distances, DistanceMetric};
use super::template::TemplateDb;
use super::AnalyzeError;

fn check_square(matrix: &[Vec<f64>]) -> Result<(), AnalyzeError> {
    let rows = matrix.len();
    for (row, r) in matrix.iter().enumerate() {
        if r.len() != rows {
            return Err(AnalyzeError::NonSquareMatrix {
                rows,
                row,
                cols: r.len(),
            });
        }
    }
    Ok(())
}

/// Average-linkage agglomerative clustering down to `num_clusters` groups.
///
/// Returns one cluster id per point, ids `0..num_clusters` in order of each
/// cluster's smallest member. Merging is deterministic: among equally close
/// pairs, the one whose clusters have the smallest member indices merges
/// first.
pub fn hierarchical_cluster(
    matrix: &[Vec<f64>],
    num_clusters: usize,
) -> Result<Vec<usize>, AnalyzeError> {
    check_square(matrix)?;
    let n = matrix.len();
    if num_clusters == 0 || num_clusters > n {
        return Err(AnalyzeError::BadClusterCount {
            clusters: num_clusters,
            points: n,
        });
    }

    // Cluster slot i starts as point i and always holds the cluster whose
    // smallest member is i; merging keeps the lower slot. `dist` holds
    // average-linkage distances between active slots.
    let mut dist: Vec<Vec<f64>> = matrix.to_vec();
    let mut size = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut member_of: Vec<usize> = (0..n).collect();

    while active.len() > num_clusters {
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for (a, &i) in active.iter().enumerate() {
            for &j in &active[a + 1..] {
                if dist[i][j] < best.0 {
                    best = (dist[i][j], i, j);
                }
            }
        }
        let (_, i, j) = best;
        // Average linkage: the distance from the merged cluster to any
        // other is the size-weighted mean of the two parts' distances.
        for &k in &active {
            if k != i && k != j {
                let merged = (size[i] as f64 * dist[i][k] + size[j] as f64 * dist[j][k])
                    / (size[i] + size[j]) as f64;
                dist[i][k] = merged;
                dist[k][i] = merged;
            }
        }
        size[i] += size[j];
        active.retain(|&k| k != j);
        for m in member_of.iter_mut() {
            if *m == j {
                *m = i;
            }
        }
    }

    // Slots are already sorted ascending; densify to 0..num_clusters.
    let assignment = member_of
        .iter()
        .map(|m| active.binary_search(m).expect("member maps to an active slot"))
        .collect();
    Ok(assignment)
}

/// Builds the cluster × label contingency table, padded square so a
/// one-to-one matching always exists.
fn contingency(assignment: &[usize], labels: &[usize]) -> Result<Vec<Vec<f64>>, AnalyzeError> {
    if assignment.len() != labels.len() {
        return Err(AnalyzeError::LengthMismatch {
            left: assignment.len(),
            right: labels.len(),
        });
    }
    if assignment.is_empty() {
        return Err(AnalyzeError::EmptyFeatureSet);
    }
    let mut clusters: Vec<usize> = assignment.to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    let mut folds: Vec<usize> = labels.to_vec();
    folds.sort_unstable();
    folds.dedup();
    let side = clusters.len().max(folds.len());
    let mut table = vec![vec![0.0; side]; side];
    for (a, l) in assignment.iter().zip(labels) {
        let row = clusters.binary_search(a).expect("cluster id present");
        let col = folds.binary_search(l).expect("fold id present");
        table[row][col] += 1.0;
    }
    Ok(table)
}

/// Minimum-cost perfect matching on a square cost matrix; returns the
/// column assigned to each row.
fn assignment_min_cost(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // Shortest-augmenting-path method with row/column potentials
    // (1-based internally; column 0 is the virtual start).
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < min_slack[j] {
                        min_slack[j] = cur;
                        way[j] = j0;
                    }
                    if min_slack[j] < delta {
                        delta = min_slack[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if matched_row[j] != 0 {
            row_to_col[matched_row[j] - 1] = j - 1;
        }
    }
    row_to_col
}

fn matched_count(table: &[Vec<f64>], row_to_col: &[usize]) -> f64 {
    row_to_col
        .iter()
        .enumerate()
        .map(|(r, &c)| table[r][c])
        .sum()
}

/// Fraction of points placed correctly under the best one-to-one pairing
/// of clusters with true classes. Cluster and class labels are arbitrary:
/// any relabeling gives the same accuracy. Unequal cluster/class counts are
/// handled by padding the pairing with empty groups.
pub fn clustering_accuracy(assignment: &[usize], labels: &[usize]) -> Result<f64, AnalyzeError> {
    let table = contingency(assignment, labels)?;
    // Maximize matches = minimize (max_entry − entry).
    let max_entry = table
        .iter()
        .flatten()
        .fold(0.0f64, |a, &b| a.max(b));
    let cost: Vec<Vec<f64>> = table
        .iter()
        .map(|row| row.iter().map(|&v| max_entry - v).collect())
        .collect();
    let matching = assignment_min_cost(&cost);
    Ok(matched_count(&table, &matching) / assignment.len() as f64)
}

/// Largest class count [`clustering_accuracy_exhaustive`] accepts before
/// the factorial search becomes unreasonable.
pub const EXHAUSTIVE_MATCHING_LIMIT: usize = 8;

/// Same quantity as [`clustering_accuracy`], computed by trying every
/// cluster↔class pairing. Exponential — a cross-check for small cases, not
/// a production path.
pub fn clustering_accuracy_exhaustive(
    assignment: &[usize],
    labels: &[usize],
) -> Result<f64, AnalyzeError> {
    let table = contingency(assignment, labels)?;
    let side = table.len();
    if side > EXHAUSTIVE_MATCHING_LIMIT {
        return Err(AnalyzeError::TooManyClasses {
            classes: side,
            limit: EXHAUSTIVE_MATCHING_LIMIT,
        });
    }
    let mut perm: Vec<usize> = (0..side).collect();
    let mut best = 0.0f64;
    permute(&mut perm, 0, &mut |p| {
        best = best.max(matched_count(&table, p));
    });
    Ok(best / assignment.len() as f64)
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Result of [`clustering_protocol`].
#[derive(Debug, Clone, Serialize)]
pub struct ClusteringOutcome {
    pub metric: DistanceMetric,
    pub trials: usize,
    pub mean_accuracy: f64,
    pub trial_accuracies: Vec<f64>,
}

/// Repeated-sampling clustering accuracy: each trial samples
/// `folds_per_trial` folds (only folds with ≥ 2 templates are eligible),
/// caps the pooled proteins at `max_proteins`, clusters their features into
/// `folds_per_trial` groups under `metric`, and scores the assignment
/// against the true folds. Each trial draws from its own stream of `seed`,
/// so results do not depend on evaluation order.
pub fn clustering_protocol(
    db: &TemplateDb,
    metric: DistanceMetric,
    trials: usize,
    folds_per_trial: usize,
    max_proteins: usize,
    seed: u64,
) -> Result<ClusteringOutcome, AnalyzeError> {
    let mut eligible = db.folds_with_at_least(2);
    eligible.sort_unstable();
    if eligible.len() < folds_per_trial {
        return Err(AnalyzeError::InsufficientFolds {
            eligible: eligible.len(),
            needed: folds_per_trial,
        });
    }

    let mut trial_accuracies = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64 + 1);

        let sampled: Vec<usize> = eligible
            .choose_multiple(&mut rng, folds_per_trial)
            .copied()
            .collect();
        let mut pool: Vec<usize> = db
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| sampled.contains(&r.fold))
            .map(|(i, _)| i)
            .collect();
        if pool.len() > max_proteins {
            pool.shuffle(&mut rng);
            pool.truncate(max_proteins);
            pool.sort_unstable();
        }

        let features: Vec<Vec<f64>> = pool
            .iter()
            .map(|&i| db.records()[i].feature.values.clone())
            .collect();
        let labels: Vec<usize> = pool.iter().map(|&i| db.records()[i].fold).collect();
        let matrix = pairwise_distances(metric, &features)?;
        let assignment = hierarchical_cluster(&matrix, folds_per_trial)?;
        trial_accuracies.push(clustering_accuracy(&assignment, &labels)?);
    }

    let mean_accuracy = trial_accuracies.iter().sum::<f64>() / trials.max(1) as f64;
    Ok(ClusteringOutcome {
        metric,
        trials,
        mean_accuracy,
        trial_accuracies,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::super::template::TemplateRecord;
    use super::*;
    use crate::model::SFFeature;

    fn line_matrix(points: &[f64]) -> Vec<Vec<f64>> {
        points
            .iter()
            .map(|a| points.iter().map(|b| (a - b).abs()).collect())
            .collect()
    }

    #[test]
    fn two_separated_pairs_split_cleanly() {
        let matrix = line_matrix(&[0.0, 1.0, 10.0, 11.0]);
        let assignment = hierarchical_cluster(&matrix, 2).unwrap();
        assert_eq!(assignment, vec![0, 0, 1, 1]);
    }

    #[test]
    fn degenerate_cluster_counts() {
        let matrix = line_matrix(&[0.0, 5.0, 9.0]);
        assert_eq!(hierarchical_cluster(&matrix, 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(hierarchical_cluster(&matrix, 1).unwrap(), vec![0, 0, 0]);
        assert!(matches!(
            hierarchical_cluster(&matrix, 0),
            Err(AnalyzeError::BadClusterCount { .. })
        ));
        assert!(matches!(
            hierarchical_cluster(&matrix, 4),
            Err(AnalyzeError::BadClusterCount { .. })
        ));
        assert!(matches!(
            hierarchical_cluster(&[vec![0.0], vec![0.0]], 1),
            Err(AnalyzeError::NonSquareMatrix { .. })
        ));
    }

    #[test]
    fn equal_distances_merge_smallest_indices_first() {
        // Three equidistant points: {0,1} must merge before {0,2} or {1,2}.
        let matrix = vec![
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ];
        assert_eq!(hierarchical_cluster(&matrix, 2).unwrap(), vec![0, 0, 1]);
    }

    /// Recomputing every cluster distance from the raw matrix must agree
    /// with the incremental size-weighted update.
    fn naive_average_linkage(matrix: &[Vec<f64>], num_clusters: usize) -> Vec<usize> {
        let n = matrix.len();
        let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        while clusters.len() > num_clusters {
            let mut best = (f64::INFINITY, 0, 0);
            for i in 0..clusters.len() {
                for j in (i + 1)..clusters.len() {
                    let mut sum = 0.0;
                    for &a in &clusters[i] {
                        for &b in &clusters[j] {
                            sum += matrix[a][b];
                        }
                    }
                    let avg = sum / (clusters[i].len() * clusters[j].len()) as f64;
                    // Same tie-break: smallest member indices. Clusters
                    // stay sorted by smallest member, so (i, j) order works.
                    if avg < best.0 {
                        best = (avg, i, j);
                    }
                }
            }
            let merged = clusters.remove(best.2);
            clusters[best.1].extend(merged);
            clusters[best.1].sort_unstable();
            clusters.sort_by_key(|c| c[0]);
        }
        let mut assignment = vec![0; n];
        for (id, members) in clusters.iter().enumerate() {
            for &m in members {
                assignment[m] = id;
            }
        }
        assignment
    }

    #[test]
    fn incremental_linkage_matches_from_scratch_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for round in 0..30 {
            let n = rng.random_range(2..12);
            let mut matrix = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = rng.random_range(0.1..10.0);
                    matrix[i][j] = d;
                    matrix[j][i] = d;
                }
            }
            let k = rng.random_range(1..=n);
            assert_eq!(
                hierarchical_cluster(&matrix, k).unwrap(),
                naive_average_linkage(&matrix, k),
                "round {round}, n={n}, k={k}"
            );
        }
    }

    #[test]
    fn accuracy_counts_optimal_matching() {
        assert_eq!(
            clustering_accuracy(&[0, 0, 1, 1], &[7, 7, 3, 3]).unwrap(),
            1.0
        );
        // One of five misplaced.
        assert_eq!(
            clustering_accuracy(&[0, 0, 1, 1, 0], &[0, 0, 1, 1, 1]).unwrap(),
            0.8
        );
    }

    #[test]
    fn accuracy_is_invariant_under_relabeling() {
        let labels = [2, 2, 0, 1, 1, 0];
        let a = clustering_accuracy(&[0, 0, 1, 2, 2, 1], &labels).unwrap();
        let b = clustering_accuracy(&[5, 5, 9, 4, 4, 9], &labels).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, 1.0);
    }

    #[test]
    fn unequal_cluster_and_class_counts_are_padded() {
        // Two clusters over three true classes: best pairing rescues 4 of 5.
        let acc = clustering_accuracy(&[0, 0, 1, 1, 1], &[0, 0, 1, 1, 2]).unwrap();
        assert_eq!(acc, 0.8);
        // One cluster over two classes.
        let acc = clustering_accuracy(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap();
        assert_eq!(acc, 0.5);
        assert!(matches!(
            clustering_accuracy(&[0, 1], &[0]),
            Err(AnalyzeError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn fast_matching_agrees_with_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..60 {
            let n = rng.random_range(4..30);
            let clusters = rng.random_range(1..=5usize);
            let classes = rng.random_range(1..=5usize);
            let assignment: Vec<usize> = (0..n).map(|_| rng.random_range(0..clusters)).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
            let fast = clustering_accuracy(&assignment, &labels).unwrap();
            let slow = clustering_accuracy_exhaustive(&assignment, &labels).unwrap();
            assert!(
                (fast - slow).abs() < 1e-12,
                "fast {fast} vs exhaustive {slow}"
            );
        }
    }

    #[test]
    fn exhaustive_matching_rejects_large_inputs() {
        let assignment: Vec<usize> = (0..9).collect();
        let labels = assignment.clone();
        assert!(matches!(
            clustering_accuracy_exhaustive(&assignment, &labels),
            Err(AnalyzeError::TooManyClasses { classes: 9, .. })
        ));
    }

    fn toy_db(folds: usize, per_fold: usize) -> TemplateDb {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let records = (0..folds)
            .flat_map(|f| {
                let center: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..9.0)).collect();
                (0..per_fold)
                    .map(|i| TemplateRecord {
                        id: format!("f{f}p{i}"),
                        fold: f,
                        feature: SFFeature {
                            values: center
                                .iter()
                                .map(|c| (c + rng.random_range(-0.05..0.05)).max(0.0))
                                .collect(),
                        },
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        TemplateDb::new(records).unwrap()
    }

    #[test]
    fn protocol_is_deterministic_and_scores_separated_folds_perfectly() {
        let db = toy_db(8, 4);
        let a = clustering_protocol(&db, DistanceMetric::Euclidean, 10, 5, 100, 77).unwrap();
        let b = clustering_protocol(&db, DistanceMetric::Euclidean, 10, 5, 100, 77).unwrap();
        assert_eq!(a.trial_accuracies, b.trial_accuracies);
        assert_eq!(a.trial_accuracies.len(), 10);
        assert!(
            a.mean_accuracy > 0.99,
            "well-separated folds should cluster perfectly, got {}",
            a.mean_accuracy
        );
    }

    #[test]
    fn protocol_requires_enough_populated_folds() {
        let db = toy_db(3, 4);
        assert!(matches!(
            clustering_protocol(&db, DistanceMetric::Euclidean, 5, 5, 100, 0),
            Err(AnalyzeError::InsufficientFolds { eligible: 3, needed: 5 })
        ));
        // Folds with a single protein are not eligible.
        let db = toy_db(5, 1);
        assert!(matches!(
            clustering_protocol(&db, DistanceMetric::Euclidean, 5, 5, 100, 0),
            Err(AnalyzeError::InsufficientFolds { eligible: 0, .. })
        ));
    }

    #[test]
    fn protocol_caps_the_pool_size() {
        let db = toy_db(6, 30); // 5 folds × 30 = 150 > 100 cap
        let out = clustering_protocol(&db, DistanceMetric::Manhattan, 3, 5, 100, 5).unwrap();
        assert_eq!(out.trials, 3);
        // Accuracy still computable and high on separated folds.
        assert!(out.mean_accuracy > 0.9);
    }
}
