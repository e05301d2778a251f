//! Lloyd's K-means with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every Lloyd iteration.
    pub inertia_history: Vec<f64>,
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = dist_sq(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plusplus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist_sq(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave target at the very end of the range.
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist_sq(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Clusters `points` into `k` groups.
///
/// Stops when an iteration changes no label or after [`MAX_ITERATIONS`].
/// A cluster left empty by the assignment step takes over the point that
/// lies farthest from its own centroid (among clusters with more than one
/// member), and is re-centred there.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    let n = points.len();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the number of points ({n})"
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension("feature vectors differ in length".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature value".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plusplus_init(points, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();

        let mut counts = vec![0usize; k];
        next.iter().for_each(|&l| counts[l] += 1);
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in points.iter().enumerate() {
                if counts[next[i]] < 2 {
                    continue;
                }
                let d = dist_sq(p, &centroids[next[i]]);
                if best.is_none_or(|(_, bd)| d > bd) {
                    best = Some((i, d));
                }
            }
            let (i, _) = best.expect("k <= n leaves a cluster with two or more members");
            counts[next[i]] -= 1;
            counts[empty] = 1;
            next[i] = empty;
            centroids[empty] = points[i].clone();
        }

        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &l) in points.iter().zip(&next) {
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for (c, sum) in sums.into_iter().enumerate() {
            centroids[c] = sum.into_iter().map(|s| s / counts[c] as f64).collect();
        }
        let inertia = points
            .iter()
            .zip(&next)
            .map(|(p, &l)| dist_sq(p, &centroids[l]))
            .sum();
        history.push(inertia);

        let converged = next == labels;
        labels = next;
        if converged {
            break;
        }
    }

    Ok(KMeans {
        labels,
        centroids,
        inertia: *history.last().unwrap(),
        iterations,
        inertia_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn wcss(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
        let dim = points[0].len();
        (0..k)
            .map(|c| {
                let members: Vec<&Vec<f64>> =
                    points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
                if members.is_empty() {
                    return 0.0;
                }
                let mean: Vec<f64> = (0..dim)
                    .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
                    .collect();
                members.iter().map(|p| dist_sq(p, &mean)).sum::<f64>()
            })
            .sum()
    }

    fn two_clouds() -> (Vec<Vec<f64>>, Vec<usize>) {
        let offsets = [(0.3, 0.1), (-0.2, 0.4), (0.1, -0.45), (-0.35, -0.2), (0.0, 0.0), (0.45, 0.05)];
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (i, &(dx, dy)) in offsets.iter().enumerate() {
            pts.push(vec![dx, dy]);
            truth.push(0);
            pts.push(vec![10.0 + dy, 10.0 - dx * (i as f64 / 6.0)]);
            truth.push(1);
        }
        (pts, truth)
    }

    #[test]
    fn two_clouds_match_exhaustive_optimum() {
        let (pts, truth) = two_clouds();
        let n = pts.len();
        // Oracle: every 2-partition of 12 points.
        let mut best = (f64::INFINITY, 0u32);
        for mask in 1u32..(1 << n) - 1 {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let w = wcss(&pts, &labels, 2);
            if w < best.0 {
                best = (w, mask);
            }
        }
        let oracle: Vec<usize> = (0..n).map(|i| ((best.1 >> i) & 1) as usize).collect();
        let same_partition = |a: &[usize], b: &[usize]| {
            a.iter().zip(b).all(|(x, y)| x == y) || a.iter().zip(b).all(|(x, y)| x != y)
        };
        assert!(same_partition(&oracle, &truth));

        for seed in 0..20 {
            let km = kmeans(&pts, 2, seed).unwrap();
            assert!(same_partition(&km.labels, &truth), "seed {seed}");
            assert!((km.inertia - best.0).abs() < 1e-12);
        }
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let pts: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let km = kmeans(&pts, 7, 5).unwrap();
        assert_eq!(km.inertia, 0.0);
        let mut l = km.labels.clone();
        l.sort();
        assert_eq!(l, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn identical_points_repair_empty_cluster() {
        let pts = vec![vec![1.0, 2.0]; 5];
        let km = kmeans(&pts, 2, 9).unwrap();
        assert_eq!(km.inertia, 0.0);
        let ones = km.labels.iter().filter(|&&l| l == 1).count();
        assert!((1..5).contains(&ones));
        assert!(km.iterations < MAX_ITERATIONS);
    }

    #[test]
    fn argument_errors() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(kmeans(&pts, 3, 0).is_err());
        assert!(kmeans(&pts, 0, 0).is_err());
        assert!(kmeans(&[vec![f64::NAN]], 1, 0).is_err());
    }

    #[test]
    fn k_one_is_all_zero() {
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        assert!(kmeans(&pts, 1, 1).unwrap().labels.iter().all(|&l| l == 0));
    }

    proptest! {
        #[test]
        fn inertia_never_increases(seed in 0u64..500, k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..60)
                .map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let km = kmeans(&pts, k, seed).unwrap();
            for w in km.inertia_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
            }
            prop_assert_eq!(km.clone(), kmeans(&pts, k, seed).unwrap());
        }
    }
}
