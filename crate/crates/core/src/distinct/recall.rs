use std::collections::BTreeMap;

use crate::corpus::ImageId;
use crate::error::{Error, Result};

/// Fraction of queries whose own image ranks within the top `k` gallery
/// images by cosine. Ties rank the lower image id first.
///
/// Vectors are expected to be unit length.
pub fn recall_at_k(
    queries: &BTreeMap<ImageId, Vec<f64>>,
    gallery: &BTreeMap<ImageId, Vec<f64>>,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > gallery.len() {
        return Err(Error::invalid(format!(
            "k={k} exceeds gallery size {}",
            gallery.len()
        )));
    }
    if queries.is_empty() {
        return Err(Error::invalid("no queries"));
    }
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let mut hits = 0usize;
    for (&id, q) in queries {
        let own = gallery
            .get(&id)
            .ok_or_else(|| Error::validation(format!("query image {id} is not in the gallery")))?;
        let own_score = dot(q, own);
        let mut ahead = 0;
        for (&gid, g) in gallery {
            if gid == id {
                continue;
            }
            let s = dot(q, g);
            if s > own_score || (s == own_score && gid < id) {
                ahead += 1;
                if ahead >= k {
                    break;
                }
            }
        }
        if ahead < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / queries.len() as f64)
}
