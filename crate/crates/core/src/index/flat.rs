use crate::matrix::{dot, EmbeddingMatrix};

use super::{check_mask, check_query, CandidateMask, Hit, IndexError, TopK};

/// Inner product of `query` with every row.
pub fn score_all(matrix: &EmbeddingMatrix, query: &[f32]) -> Result<Vec<f32>, IndexError> {
    check_query(query, matrix.dim(), 1)?;
    Ok(matrix.rows().map(|row| dot(query, row)).collect())
}

/// Exact top-`top` rows by inner product. Returns fewer hits when fewer
/// candidates exist; an empty candidate set gives an empty result.
pub fn search_flat(
    matrix: &EmbeddingMatrix,
    query: &[f32],
    top: usize,
    mask: Option<&CandidateMask>,
) -> Result<Vec<Hit>, IndexError> {
    check_query(query, matrix.dim(), top)?;
    check_mask(mask, matrix.len())?;
    let mut topk = TopK::new(top);
    match mask {
        None => {
            for (i, row) in matrix.rows().enumerate() {
                topk.push(i as u32, dot(query, row));
            }
        }
        Some(mask) => {
            for i in mask.ones() {
                topk.push(i as u32, dot(query, matrix.row(i)));
            }
        }
    }
    Ok(topk.into_sorted())
}
