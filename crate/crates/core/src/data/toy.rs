use crate::diffcore::{Rng, Tensor};
use crate::error::{Error, Result};

pub const TOY_TEST_POINTS: usize = 100;
pub const TOY_TEST_RANGE: f64 = 10.0;

/// Narrow training clusters on the real line.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSpec {
    pub centers: Vec<f64>,
    pub half_width: f64,
}

impl Default for ClusterSpec {
    /// No two centers are 2π apart, so the data says nothing about periodicity.
    fn default() -> Self {
        Self {
            centers: vec![-2.2, -0.6, 1.1, 2.5],
            half_width: 0.15,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ToyDataset {
    /// `[n_train, 1]`
    pub train: Tensor,
    /// `[100, 1]`, uniform on `[-10, 10]`
    pub test: Tensor,
    pub seed: u64,
    pub clusters: ClusterSpec,
}

pub fn make_toy_dataset(seed: u64, n_train: usize) -> Result<ToyDataset> {
    make_toy_dataset_with(seed, n_train, ClusterSpec::default())
}

/// Training points are dealt round-robin to the clusters and drawn uniformly
/// inside each one.
pub fn make_toy_dataset_with(seed: u64, n_train: usize, clusters: ClusterSpec) -> Result<ToyDataset> {
    if n_train < 10 {
        return Err(Error::invalid("make_toy_dataset", format!("n_train = {n_train} < 10")));
    }
    if clusters.centers.is_empty() || !(clusters.half_width >= 0.0) {
        return Err(Error::invalid("make_toy_dataset", format!("{clusters:?}")));
    }
    let mut rng = Rng::seed(seed);
    let k = clusters.centers.len();
    let train = (0..n_train)
        .map(|i| {
            let c = clusters.centers[i % k];
            rng.uniform(c - clusters.half_width, c + clusters.half_width)
        })
        .collect();
    let test = (0..TOY_TEST_POINTS)
        .map(|_| rng.uniform(-TOY_TEST_RANGE, TOY_TEST_RANGE))
        .collect();
    Ok(ToyDataset {
        train: Tensor::new([n_train, 1], train)?,
        test: Tensor::new([TOY_TEST_POINTS, 1], test)?,
        seed,
        clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_points_stay_in_clusters() {
        let d = make_toy_dataset(1, 64).unwrap();
        let spec = ClusterSpec::default();
        for &x in d.train.data() {
            assert!(spec.centers.iter().any(|c| (x - c).abs() <= 0.15));
        }
        assert!(d.test.data().iter().all(|x| x.abs() <= 10.0));
        assert_eq!(d.test.shape(), &[100, 1]);
    }

    #[test]
    fn deterministic() {
        let (a, b) = (make_toy_dataset(7, 40).unwrap(), make_toy_dataset(7, 40).unwrap());
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_ne!(make_toy_dataset(8, 40).unwrap().test, a.test);
    }

    #[test]
    fn test_points_cover_range_evenly() {
        for seed in 0..20 {
            let d = make_toy_dataset(seed, 10).unwrap();
            let mut bins = [0usize; 10];
            for &x in d.test.data() {
                bins[(((x + 10.0) / 2.0) as usize).min(9)] += 1;
            }
            assert!(bins.iter().all(|&c| (1..=19).contains(&c)), "{bins:?}");
        }
    }

    #[test]
    fn rejects_tiny_training_sets() {
        assert!(make_toy_dataset(0, 9).is_err());
    }
}
