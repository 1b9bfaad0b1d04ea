//! Lloyd's k-means with uniform random initial centers.

use log::warn;
use rand::seq::index;
use rand::Rng;

use crate::error::{DivaError, Result};
use crate::num::{squared_distance, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<F> {
    pub centers: Vec<Vec<F>>,
    pub assignments: Vec<usize>,
    /// Inertia after the initial assignment and after every round.
    pub inertia_history: Vec<F>,
}

impl<F: Real> KMeansResult<F> {
    pub fn inertia(&self) -> F {
        *self.inertia_history.last().expect("at least one inertia value")
    }
}

fn inertia<F: Real, P: AsRef<[F]>>(points: &[P], centers: &[Vec<F>], assignments: &[usize]) -> F {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| squared_distance(p.as_ref(), &centers[a]))
        .sum()
}

/// Moves each point to a strictly closer center if one exists (lowest
/// index wins among equals). Returns whether anything moved.
fn reassign<F: Real, P: AsRef<[F]>>(points: &[P], centers: &[Vec<F>], assignments: &mut [usize]) -> bool {
    let mut changed = false;
    for (p, a) in points.iter().zip(assignments.iter_mut()) {
        let mut best = *a;
        let mut best_d = squared_distance(p.as_ref(), &centers[best]);
        for (j, c) in centers.iter().enumerate() {
            let d = squared_distance(p.as_ref(), c);
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        if best != *a {
            *a = best;
            changed = true;
        }
    }
    changed
}

/// Recomputes centers as cluster means. Empty clusters are re-seeded from
/// the points farthest from their current centers. Returns whether any
/// cluster was re-seeded.
fn update_centers<F: Real, P: AsRef<[F]>>(points: &[P], centers: &mut [Vec<F>], assignments: &[usize]) -> bool {
    let k = centers.len();
    let dim = centers[0].len();
    let mut sums = vec![vec![F::zero(); dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, &x) in sums[a].iter_mut().zip(p.as_ref()) {
            *s = *s + x;
        }
    }
    let previous: Vec<Vec<F>> = centers.to_vec();
    for j in 0..k {
        if counts[j] > 0 {
            let n = F::from_count(counts[j]);
            centers[j] = sums[j].iter().map(|&s| s / n).collect();
        }
    }
    let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
    if empty.is_empty() {
        return false;
    }
    let mut by_distance: Vec<(usize, F)> = points
        .iter()
        .zip(assignments)
        .enumerate()
        .map(|(i, (p, &a))| (i, squared_distance(p.as_ref(), &previous[a])))
        .collect();
    by_distance.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite distances").then(a.0.cmp(&b.0)));
    for (j, (i, _)) in empty.into_iter().zip(by_distance) {
        centers[j] = points[i].as_ref().to_vec();
    }
    true
}

/// Lloyd iteration: at most `iters` rounds, stopping once assignments are
/// stable. `k` larger than the number of points is reduced to it.
pub fn kmeans<F: Real, P: AsRef<[F]>, R: Rng>(points: &[P], k: usize, iters: usize, rng: &mut R) -> Result<KMeansResult<F>> {
    if points.is_empty() {
        return Err(DivaError::validation("k-means needs at least one point"));
    }
    if k == 0 {
        return Err(DivaError::validation("k-means needs k >= 1"));
    }
    let dim = points[0].as_ref().len();
    if let Some(p) = points.iter().find(|p| p.as_ref().len() != dim) {
        return Err(DivaError::Shape {
            expected: dim,
            actual: p.as_ref().len(),
        });
    }
    let k = if k > points.len() {
        warn!("k-means: k={k} exceeds {} points; reduced", points.len());
        points.len()
    } else {
        k
    };
    let mut centers: Vec<Vec<F>> = index::sample(rng, points.len(), k)
        .into_iter()
        .map(|i| points[i].as_ref().to_vec())
        .collect();
    let mut assignments = vec![0usize; points.len()];
    reassign(points, &centers, &mut assignments);
    let mut history = vec![inertia(points, &centers, &assignments)];
    for _ in 0..iters {
        let reseeded = update_centers(points, &mut centers, &assignments);
        let moved = reassign(points, &centers, &mut assignments);
        history.push(inertia(points, &centers, &assignments));
        if !moved && !reseeded {
            break;
        }
    }
    Ok(KMeansResult {
        centers,
        assignments,
        inertia_history: history,
    })
}

/// Best (lowest final inertia) of `restarts` independent runs.
pub fn kmeans_best_of<F: Real, P: AsRef<[F]>, R: Rng>(
    points: &[P],
    k: usize,
    iters: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<KMeansResult<F>> {
    let mut best: Option<KMeansResult<F>> = None;
    for _ in 0..restarts.max(1) {
        let r = kmeans(points, k, iters, rng)?;
        if best.as_ref().map_or(true, |b| r.inertia() < b.inertia()) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn two_points_two_clusters() {
        let pts = vec![vec![0.0, 0.0], vec![3.0, 4.0]];
        let r = kmeans(&pts, 2, 10, &mut stream(1, "k")).unwrap();
        assert_eq!(r.inertia(), 0.0);
        assert_ne!(r.assignments[0], r.assignments[1]);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]];
        let r = kmeans(&pts, 1, 10, &mut stream(1, "k")).unwrap();
        assert_eq!(r.centers, vec![vec![3.0, 3.0]]);
    }

    #[test]
    fn k_reduced_to_point_count() {
        let pts = vec![vec![1.0f32], vec![2.0]];
        let r = kmeans(&pts, 5, 10, &mut stream(1, "k")).unwrap();
        assert_eq!(r.centers.len(), 2);
        assert_eq!(r.inertia(), 0.0);
    }

    #[test]
    fn errors() {
        let none: Vec<Vec<f64>> = vec![];
        assert!(kmeans(&none, 1, 1, &mut stream(1, "k")).is_err());
        assert!(kmeans(&[vec![1.0]], 0, 1, &mut stream(1, "k")).is_err());
        assert!(kmeans(&[vec![1.0], vec![1.0, 2.0]], 1, 1, &mut stream(1, "k")).is_err());
    }

    #[test]
    fn empty_clusters_are_reseeded() {
        // Duplicate points force an empty cluster after the first update.
        let pts = vec![vec![0.0], vec![0.0], vec![0.0], vec![10.0]];
        for seed in 0..20 {
            let r = kmeans(&pts, 3, 20, &mut stream(seed, "k")).unwrap();
            assert_eq!(r.inertia(), 0.0, "seed {seed}");
        }
    }

    #[test]
    fn inertia_never_increases() {
        let mut rng = stream(11, "pts");
        for trial in 0..30 {
            let pts: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
            let r = kmeans(&pts, 1 + trial % 6, 100, &mut rng).unwrap();
            for w in r.inertia_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", r.inertia_history);
            }
        }
    }
}
