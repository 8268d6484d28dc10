//! Labeled point batches produced by world samplers and samplers.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Generation metadata carried alongside a batch. Fields that only apply to
/// model-generated batches (solver, guidance) stay `None` for raw world draws.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchMeta {
    pub world: String,
    pub seed: u64,
    pub schedule: Option<String>,
    pub solver: Option<String>,
    pub n_steps: Option<usize>,
    pub omega: Option<f64>,
}

/// A set of points with per-row class labels (`None` = unconditional).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub points: Tensor,
    pub labels: Vec<Option<u32>>,
    pub meta: BatchMeta,
}

impl SampleBatch {
    pub fn new(points: Tensor, labels: Vec<Option<u32>>, meta: BatchMeta) -> Result<Self> {
        if points.rank() != 2 {
            return Err(CoreError::shape(alloc::format!(
                "batch points must be rank 2, got {:?}",
                points.shape()
            )));
        }
        if labels.len() != points.n_rows() {
            return Err(CoreError::shape(alloc::format!(
                "{} labels for {} points",
                labels.len(),
                points.n_rows()
            )));
        }
        Ok(SampleBatch {
            points,
            labels,
            meta,
        })
    }

    pub fn n(&self) -> usize {
        self.points.n_rows()
    }

    pub fn dim(&self) -> usize {
        self.points.n_cols()
    }

    /// Rows whose label equals `class`.
    pub fn filter_class(&self, class: u32) -> Result<SampleBatch> {
        let rows: Vec<Vec<f64>> = self
            .labels
            .iter()
            .zip(0..self.n())
            .filter(|(l, _)| **l == Some(class))
            .map(|(_, i)| self.points.row(i).to_vec())
            .collect();
        let n = rows.len();
        let points = Tensor::from_rows(&rows)?;
        SampleBatch::new(points, alloc::vec![Some(class); n], self.meta.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_count_must_match_rows() {
        let pts = Tensor::zeros(alloc::vec![3, 2]);
        assert!(SampleBatch::new(pts, alloc::vec![Some(0); 2], BatchMeta::default()).is_err());
    }

    #[test]
    fn filter_class_keeps_matching_rows() {
        let pts = Tensor::from_rows(&[
            alloc::vec![0.0, 0.0],
            alloc::vec![1.0, 1.0],
            alloc::vec![2.0, 2.0],
        ])
        .unwrap();
        let batch =
            SampleBatch::new(pts, alloc::vec![Some(0), Some(1), Some(0)], BatchMeta::default())
                .unwrap();
        let only0 = batch.filter_class(0).unwrap();
        assert_eq!(only0.n(), 2);
        assert_eq!(only0.points.row(1), &[2.0, 2.0]);
    }
}
