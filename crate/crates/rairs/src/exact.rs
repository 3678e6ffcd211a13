//! Exhaustive k-nearest-neighbor search and the ground-truth container.

use rayon::prelude::*;

use crate::dataset::VectorSet;
use crate::error::{Error, Result};
use crate::metric::{Metric, Neighbor, TopK};

/// Exact top-`k` neighbors per query: IDs ordered best-first, with the
/// metric's natural values alongside when they are known. Ground truth loaded
/// from a bare ivecs file has no distances.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub k: usize,
    pub metric: Metric,
    /// `ids[q]` holds query `q`'s neighbors, best first.
    pub ids: Vec<Vec<u64>>,
    /// Natural metric values aligned with `ids`, when available.
    pub dists: Option<Vec<Vec<f32>>>,
}

impl GroundTruth {
    /// Wraps rows loaded from an ivecs file. Negative entries are rejected.
    pub fn from_ivecs(rows: Vec<Vec<i32>>, metric: Metric) -> Result<GroundTruth> {
        let k = rows.first().map_or(0, |r| r.len());
        let mut ids = Vec::with_capacity(rows.len());
        for row in rows {
            let mut out = Vec::with_capacity(row.len());
            for x in row {
                if x < 0 {
                    return Err(Error::InvalidConfig(format!(
                        "negative id {x} in ground-truth file"
                    )));
                }
                out.push(x as u64);
            }
            ids.push(out);
        }
        Ok(GroundTruth {
            k,
            metric,
            ids,
            dists: None,
        })
    }

    /// Converts to ivecs rows. Fails if an ID does not fit in an `i32`.
    pub fn to_ivecs(&self) -> Result<Vec<Vec<i32>>> {
        self.ids
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&id| {
                        i32::try_from(id).map_err(|_| {
                            Error::InvalidConfig(format!(
                                "id {id} does not fit the ivecs ground-truth format"
                            ))
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

/// Exhaustive top-`k` search of `queries` against `base`.
///
/// Scans every base vector per query; ranking is by the metric with ties
/// broken toward the smaller ID, so the result is fully deterministic.
/// Queries are processed in parallel.
pub fn exact_knn(
    base: &VectorSet,
    queries: &VectorSet,
    k: usize,
    metric: Metric,
) -> Result<GroundTruth> {
    if base.dim() != queries.dim() {
        return Err(Error::DimMismatch {
            expected: base.dim(),
            got: queries.dim(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be > 0".into()));
    }
    let per_query: Vec<Vec<Neighbor>> = (0..queries.len())
        .into_par_iter()
        .map(|qi| {
            let q = queries.get(qi);
            let mut top = TopK::new(k);
            for (id, v) in base.iter() {
                top.push(Neighbor {
                    score: metric.score(q, v),
                    id,
                });
            }
            top.into_sorted()
        })
        .collect();
    let ids = per_query
        .iter()
        .map(|row| row.iter().map(|n| n.id).collect())
        .collect();
    let dists = per_query
        .iter()
        .map(|row| row.iter().map(|n| metric.score_to_value(n.score)).collect())
        .collect();
    Ok(GroundTruth {
        k,
        metric,
        ids,
        dists: Some(dists),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;

    /// Independent oracle: score every pair, stable-sort whole rows.
    /// Deliberately shares no ranking code with `exact_knn`.
    fn brute_force_sorted(
        base: &VectorSet,
        queries: &VectorSet,
        k: usize,
        metric: Metric,
    ) -> Vec<Vec<(u64, f32)>> {
        (0..queries.len())
            .map(|qi| {
                let q = queries.get(qi);
                let mut scored: Vec<(u64, f32)> = base
                    .iter()
                    .map(|(id, v)| {
                        let s = match metric {
                            Metric::L2 => {
                                let mut acc = 0.0f32;
                                for d in 0..q.len() {
                                    let diff = q[d] - v[d];
                                    acc += diff * diff;
                                }
                                acc
                            }
                            Metric::Ip => {
                                let mut acc = 0.0f32;
                                for d in 0..q.len() {
                                    acc += q[d] * v[d];
                                }
                                -acc
                            }
                        };
                        (id, s)
                    })
                    .collect();
                scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                scored.truncate(k);
                scored
                    .into_iter()
                    .map(|(id, s)| (id, metric.score_to_value(s)))
                    .collect()
            })
            .collect()
    }

    fn check_against_oracle(dim: usize, k: usize, metric: Metric) {
        let base = generate_synthetic(200, dim, 5, 11, 0.2).unwrap();
        let queries = crate::dataset::generate_synthetic_part(20, dim, 5, 11, 0.2, 1000).unwrap();
        let gt = exact_knn(&base, &queries, k, metric).unwrap();
        let oracle = brute_force_sorted(&base, &queries, k, metric);
        let dists = gt.dists.as_ref().unwrap();
        for qi in 0..queries.len() {
            let got: Vec<(u64, f32)> = gt.ids[qi]
                .iter()
                .copied()
                .zip(dists[qi].iter().copied())
                .collect();
            assert_eq!(got, oracle[qi], "query {qi}");
        }
    }

    #[test]
    fn matches_independent_brute_force_l2() {
        check_against_oracle(8, 10, Metric::L2);
    }

    #[test]
    fn matches_independent_brute_force_ip() {
        check_against_oracle(6, 5, Metric::Ip);
    }

    #[test]
    fn ties_break_toward_smaller_id() {
        // Two identical base vectors: both are equidistant from any query.
        let base = VectorSet::from_rows(2, vec![1.0, 1.0, 1.0, 1.0], vec![9, 4]).unwrap();
        let queries = VectorSet::with_sequential_ids(2, vec![0.0, 0.0]).unwrap();
        let gt = exact_knn(&base, &queries, 2, Metric::L2).unwrap();
        assert_eq!(gt.ids[0], vec![4, 9]);
    }

    #[test]
    fn ivecs_round_trip_preserves_ids() {
        let base = generate_synthetic(100, 4, 3, 5, 0.1).unwrap();
        let gt = exact_knn(&base, &base, 3, Metric::L2).unwrap();
        let rows = gt.to_ivecs().unwrap();
        let back = GroundTruth::from_ivecs(rows, Metric::L2).unwrap();
        assert_eq!(back.ids, gt.ids);
        assert!(back.dists.is_none());
    }
}
