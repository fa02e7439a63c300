//! Two-dimensional principal-component projection for map display.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingModel;
use crate::{Error, MonthId, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutPoint {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub month: MonthId,
    /// Variance captured by each axis.
    pub variance: [f64; 2],
    pub points: Vec<LayoutPoint>,
}

/// Relative eigenvalue below which an axis is treated as empty.
const RANK_TOLERANCE: f64 = 1e-10;

/// Projects the model's rows onto their top two principal components.
/// Each axis is oriented so its largest-magnitude loading is positive.
pub fn layout2d(model: &EmbeddingModel) -> Result<Layout> {
    if !model.is_normalized() {
        return Err(Error::NotNormalized);
    }
    let n = model.len();
    if n < 2 {
        return Err(Error::invalid("layout needs at least two subreddits"));
    }
    let d = model.dim();
    let v = model.vectors();
    let mut x = DMatrix::<f64>::from_fn(n, d, |i, j| v[[i, j]] as f64);
    for j in 0..d {
        let mean = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let cov = x.transpose() * &x / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]];
    if !(top > 0.0) {
        return Err(Error::Degenerate("all vectors coincide".into()));
    }
    let mut axes = Vec::with_capacity(2);
    let mut variance = [0.0; 2];
    for (slot, &c) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[c];
        if lambda <= RANK_TOLERANCE * top {
            axes.push(None);
            continue;
        }
        let mut axis = eig.eigenvectors.column(c).into_owned();
        let lead = axis.iter().copied().fold(0.0f64, |m, a| if a.abs() > m.abs() { a } else { m });
        if lead < 0.0 {
            axis.neg_mut();
        }
        variance[slot] = lambda;
        axes.push(Some(axis));
    }
    let project = |i: usize, axis: &Option<nalgebra::DVector<f64>>| {
        axis.as_ref().map_or(0.0, |a| x.row(i).transpose().dot(a))
    };
    let points = model
        .vocab()
        .iter()
        .enumerate()
        .map(|(i, name)| LayoutPoint {
            name: name.clone(),
            x: project(i, &axes[0]),
            y: axes.get(1).map_or(0.0, |a| project(i, a)),
        })
        .collect();
    Ok(Layout {
        month: model.month(),
        variance,
        points,
    })
}

impl Layout {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path).map_err(|e| Error::io(path, e))?)?)
    }
}
