use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::types::{Label, MechanismMatrix};

/// Inverse-CDF sampler over one matrix row, in output-label order.
#[derive(Clone, Debug)]
pub struct RowSampler {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl RowSampler {
    pub fn new(row: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = row
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let last_positive = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Self {
            cumulative,
            last_positive,
        }
    }

    /// Column index for a uniform draw `u ∈ [0, 1)`.
    pub fn index_for(&self, u: f64) -> usize {
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.last_positive)
    }
}

/// Pre-built samplers for every row of a matrix.
#[derive(Clone, Debug)]
pub struct MatrixSampler<'m> {
    matrix: &'m MechanismMatrix,
    rows: Vec<RowSampler>,
}

impl<'m> MatrixSampler<'m> {
    pub fn new(matrix: &'m MechanismMatrix) -> Self {
        Self {
            matrix,
            rows: matrix.rows().iter().map(|r| RowSampler::new(r)).collect(),
        }
    }

    pub fn matrix(&self) -> &MechanismMatrix {
        self.matrix
    }

    pub fn row_sampler(&self, row: usize) -> &RowSampler {
        &self.rows[row]
    }

    pub fn sample(&self, y: Label, stream: &mut RandomStream) -> Result<Label> {
        let i = self.matrix.input_index(y).ok_or(Error::LabelOutOfRange {
            label: y,
            k: self.matrix.n_inputs(),
        })?;
        let j = self.rows[i].index_for(stream.next_uniform());
        Ok(self.matrix.output_labels()[j])
    }
}

/// Draws `ỹ` from row `y` with one uniform from `stream`.
pub fn sample_label(y: Label, matrix: &MechanismMatrix, stream: &mut RandomStream) -> Result<Label> {
    let row = matrix.row(y).ok_or(Error::LabelOutOfRange {
        label: y,
        k: matrix.n_inputs(),
    })?;
    let j = RowSampler::new(row).index_for(stream.next_uniform());
    Ok(matrix.output_labels()[j])
}
