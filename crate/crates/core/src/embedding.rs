use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{raw, CurvatureSpace};

/// Half-width of the uniform initialisation box around the origin.
pub const INIT_RANGE: f64 = 1e-3;

/// Vocabulary-indexed word embeddings stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dim: usize,
    rows: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            dim,
            rows,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let mut data = Vec::with_capacity(n * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend(row);
        }
        Ok(Self { dim, rows: n, data })
    }

    /// Every coordinate uniform in `(-INIT_RANGE, INIT_RANGE)`, then projected.
    pub fn random_init<R: Rng>(rows: usize, space: &CurvatureSpace, rng: &mut R) -> Self {
        let dim = space.dim();
        let mut table = Self::zeros(rows, dim);
        for r in 0..rows {
            let row: Vec<f64> = (0..dim).map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE)).collect();
            table.row_mut(r).copy_from_slice(&raw::project(space.c(), &row));
        }
        table
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn get(&self, id: usize) -> Result<&[f64]> {
        if id >= self.rows {
            return Err(Error::MissingWord(id));
        }
        Ok(self.row(id))
    }

    pub(crate) fn row(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn row_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of rows violating `c |x|^2 < 1`.
    pub fn count_outside(&self, space: &CurvatureSpace) -> usize {
        self.iter().filter(|r| !space.contains(r)).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_is_small_and_inside() {
        let space = CurvatureSpace::unit_ball(7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = EmbeddingTable::random_init(20, &space, &mut rng);
        assert_eq!(t.len(), 20);
        assert!(t.as_slice().iter().all(|x| x.abs() < INIT_RANGE));
        assert_eq!(t.count_outside(&space), 0);
    }

    #[test]
    fn missing_row_is_an_error() {
        let t = EmbeddingTable::zeros(2, 3);
        assert!(matches!(t.get(2), Err(Error::MissingWord(2))));
        assert_eq!(t.get(1).unwrap(), &[0.0; 3]);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(EmbeddingTable::from_rows(vec![vec![0.0, 1.0], vec![0.0]]).is_err());
    }
}
