//! Gaussian blob data with one blob per class in every view.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobSpec {
    pub n_instances: usize,
    pub class_count: usize,
    /// Feature count of each view.
    pub dims: Vec<usize>,
    /// Distance of each class mean from the origin, along its own axis.
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            n_instances: 200,
            class_count: 3,
            dims: vec![4, 4],
            separation: 3.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

/// Complete, fully labeled blob data; instance `i` belongs to class `i % C`.
///
/// In view `v` the mean of class `c` sits on axis `(c + v) mod d_v`, so the
/// views share the class structure without being copies of each other.
pub fn gaussian_blobs(spec: &BlobSpec) -> Result<MultiViewDataset> {
    if spec.class_count < 2 || spec.n_instances < spec.class_count {
        return Err(Error::InvalidParameter(
            "need at least 2 classes and one instance per class".into(),
        ));
    }
    if spec.dims.is_empty() || spec.dims.contains(&0) {
        return Err(Error::InvalidParameter("every view needs a feature".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels: Vec<usize> = (0..spec.n_instances)
        .map(|i| i % spec.class_count)
        .collect();
    let views = spec
        .dims
        .iter()
        .enumerate()
        .map(|(v, &d)| {
            Array2::from_shape_fn((spec.n_instances, d), |(i, j)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let on_axis = (labels[i] + v) % d == j;
                spec.noise * z + if on_axis { spec.separation } else { 0.0 }
            })
        })
        .collect();
    MultiViewDataset::complete(views, labels, spec.class_count)
}
