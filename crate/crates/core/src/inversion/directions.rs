use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::cli::archive::{read_archive, write_archive};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::synthgen::Generator;
use crate::tensor::{ParamStore, Tensor};

const UNIT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectionSource {
    Pca,
    File,
}

/// A unit-norm direction in w space.
#[derive(Clone, Debug, PartialEq)]
pub struct Direction {
    pub d: Tensor,
    pub label: String,
    pub source: DirectionSource,
}

impl Direction {
    pub fn new(d: Tensor, label: impl Into<String>, source: DirectionSource) -> Result<Self> {
        let norm = d.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        if d.shape().len() != 1 || (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidArgument(format!(
                "direction must be a unit vector, got shape {:?} and norm {norm}",
                d.shape()
            )));
        }
        Ok(Direction {
            d,
            label: label.into(),
            source,
        })
    }
}

/// Top-`k` principal axes of the rows of `samples: [n, d]`, with their
/// eigenvalues in descending order. Each axis is signed so its first
/// non-zero component is positive.
pub fn principal_components(samples: &Tensor, k: usize) -> Result<(Vec<Direction>, Vec<f64>)> {
    let &[n, d] = samples.shape() else {
        return Err(Error::shape("principal_components", samples.shape(), &[0, 0]));
    };
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={d}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let x = DMatrix::from_row_slice(n, d, samples.data());
    let mean = x.row_mean();
    let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = (centred.transpose() * &centred) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut dirs = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for (rank, &col) in order.iter().take(k).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let sign = match v.iter().find(|a| **a != 0.0) {
            Some(a) if *a < 0.0 => -1.0,
            _ => 1.0,
        };
        for a in v.iter_mut() {
            *a *= sign / norm;
        }
        dirs.push(Direction::new(
            Tensor::new(vec![d], v)?,
            format!("pc{rank}"),
            DirectionSource::Pca,
        )?);
        values.push(eig.eigenvalues[col]);
    }
    Ok((dirs, values))
}

/// PCA of `n` codes sampled through the mapping network.
pub fn find_directions(generator: &Generator, k: usize, n: usize, seed: u64) -> Result<(Vec<Direction>, Vec<f64>)> {
    if k > generator.dims.w_dim {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the latent dimension {}",
            generator.dims.w_dim
        )));
    }
    let mut rng = Rng::derive(seed, 0xd1ec);
    let w = generator.sample_w(n, &mut rng)?;
    principal_components(&w, k)
}

/// Directions are stored one record per direction, keyed by label.
pub fn save_directions(path: &Path, dirs: &[Direction]) -> Result<()> {
    let mut store = ParamStore::new();
    for d in dirs {
        store.insert(d.label.clone(), d.d.clone())?;
    }
    write_archive(path, &store)
}

/// Loads directions from an archive, rescaling each record to unit norm.
pub fn load_directions(path: &Path) -> Result<Vec<Direction>> {
    let store = read_archive(path)?;
    store
        .iter()
        .map(|(name, t)| {
            let norm = t.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::InvalidArgument(format!("direction `{name}` has no usable norm")));
            }
            let flat = t.reshape(&[t.len()])?.scale(1.0 / norm);
            Direction::new(flat, name, DirectionSource::File)
        })
        .collect()
}
