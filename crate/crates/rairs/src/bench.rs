//! Recall, DCO, QPS, and latency measurement over parameter sweeps.
//!
//! A sweep runs the grouped batch search once per `nprobe` value, measures
//! wall time for throughput, and derives recall per query against exact
//! ground truth. Latency percentiles come from an optional second pass
//! running one query at a time; without it the latency columns repeat the
//! batch-derived mean. DCO columns are deterministic for a fixed index and
//! query set; the timing columns of course are not.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use crate::dataset::VectorSet;
use crate::error::{Error, Result};
use crate::exact::GroundTruth;
use crate::index::{default_k_factor, RairsIndex, SearchOutput, SearchParams};
use crate::metric::Metric;

/// One sweep point plus its per-query measurements (for CDF dumps).
#[derive(Debug, Clone)]
pub struct BenchPoint {
    pub strategy: String,
    pub nprobe: usize,
    pub k: usize,
    pub recall: f64,
    /// Mean per query.
    pub scan_dco: f64,
    pub refine_dco: f64,
    pub qps: f64,
    pub lat_mean_us: f64,
    pub lat_p95_us: f64,
    pub lat_p99_us: f64,
    pub query_recall: Vec<f64>,
    pub query_scan_dco: Vec<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
}

/// Sweep knobs beyond the `nprobe` list itself.
#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// `None` picks [`default_k_factor`] for the sweep's `k`.
    pub k_factor: Option<usize>,
    /// Run a second, one-query-at-a-time pass for latency percentiles.
    pub one_at_a_time: bool,
    /// CSV strategy column; `None` uses the index's strategy name.
    pub label: Option<String>,
}

/// Recall of one query's results under the tie rule: a returned ID counts
/// if it is in the ground-truth top `k_gt`, or if its exact distance is at
/// least as good as the `k_gt`-th ground-truth distance (equally near
/// neighbors are interchangeable). Membership only when the ground truth
/// carries no distances.
fn one_query_recall(
    ids: &[u64],
    dists: &[f32],
    truth: &[u64],
    threshold: Option<f32>,
    metric: Metric,
    k: usize,
    k_gt: usize,
) -> f64 {
    let k = k.min(ids.len());
    let truth_set: HashSet<u64> = truth.iter().take(k_gt).copied().collect();
    let mut hits = 0usize;
    for (j, id) in ids.iter().take(k).enumerate() {
        let hit = truth_set.contains(id)
            || threshold.is_some_and(|t| match metric {
                Metric::L2 => dists[j] <= t,
                Metric::Ip => dists[j] >= t,
            });
        if hit {
            hits += 1;
        }
    }
    hits as f64 / k_gt as f64
}

/// Per-query recall `k@k_gt` of `results` against `gt`.
pub fn per_query_recall(
    results: &SearchOutput,
    gt: &GroundTruth,
    k: usize,
    k_gt: usize,
) -> Result<Vec<f64>> {
    if results.ids.len() != gt.ids.len() {
        return Err(Error::InvalidConfig(format!(
            "results cover {} queries but ground truth {}",
            results.ids.len(),
            gt.ids.len()
        )));
    }
    if k_gt == 0 {
        return Err(Error::InvalidConfig("recall depth must be > 0".into()));
    }
    Ok((0..results.ids.len())
        .map(|qi| {
            let k_gt = k_gt.min(gt.ids[qi].len());
            let threshold = gt.dists.as_ref().map(|d| d[qi][k_gt - 1]);
            one_query_recall(
                &results.ids[qi],
                &results.dists[qi],
                &gt.ids[qi],
                threshold,
                gt.metric,
                k,
                k_gt,
            )
        })
        .collect())
}

/// Mean recall `k@k_gt` over all queries (`k = k_gt` is the usual
/// benchmark convention; `1@1` is the top-1 hit rate).
pub fn recall_at(results: &SearchOutput, gt: &GroundTruth, k: usize, k_gt: usize) -> Result<f64> {
    let per = per_query_recall(results, gt, k, k_gt)?;
    if per.is_empty() {
        return Err(Error::InvalidConfig("no queries to score".into()));
    }
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Runs the recall/DCO/throughput sweep over `nprobes`.
pub fn sweep(
    index: &RairsIndex,
    queries: &VectorSet,
    gt: &GroundTruth,
    k: usize,
    nprobes: &[usize],
    opts: &SweepOptions,
) -> Result<BenchReport> {
    if queries.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one query".into()));
    }
    let k_factor = opts.k_factor.unwrap_or_else(|| default_k_factor(k));
    let label = opts
        .label
        .clone()
        .unwrap_or_else(|| index.strategy().name());
    let mut report = BenchReport::default();
    for &nprobe in nprobes {
        let params = SearchParams {
            k,
            nprobe,
            k_factor,
        };
        let start = Instant::now();
        let (out, _trace) = index.batch_search_grouped(queries, &params)?;
        let wall = start.elapsed().as_secs_f64();
        let n = queries.len() as f64;

        let query_recall = per_query_recall(&out, gt, k, k)?;
        let recall = query_recall.iter().sum::<f64>() / n;
        let query_scan_dco: Vec<u64> = out.stats.iter().map(|s| s.scan_dco).collect();
        let scan_dco = query_scan_dco.iter().sum::<u64>() as f64 / n;
        let refine_dco = out.stats.iter().map(|s| s.refine_dco).sum::<u64>() as f64 / n;

        let (lat_mean_us, lat_p95_us, lat_p99_us) = if opts.one_at_a_time {
            let mut lats = Vec::with_capacity(queries.len());
            for qi in 0..queries.len() {
                let one = queries.select(&[qi]);
                let t = Instant::now();
                index.search(&one, &params)?;
                lats.push(t.elapsed().as_secs_f64() * 1e6);
            }
            let mean = lats.iter().sum::<f64>() / n;
            lats.sort_by(f64::total_cmp);
            (mean, percentile(&lats, 0.95), percentile(&lats, 0.99))
        } else {
            let mean = wall * 1e6 / n;
            (mean, mean, mean)
        };

        report.points.push(BenchPoint {
            strategy: label.clone(),
            nprobe,
            k,
            recall,
            scan_dco,
            refine_dco,
            qps: n / wall,
            lat_mean_us,
            lat_p95_us,
            lat_p99_us,
            query_recall,
            query_scan_dco,
        });
    }
    Ok(report)
}

/// Writes the sweep table: one row per point under the fixed header.
pub fn write_report_csv(path: &Path, report: &BenchReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "strategy,nprobe,K,recall,scan_dco,refine_dco,qps,lat_mean_us,lat_p95_us,lat_p99_us"
    )?;
    for p in &report.points {
        writeln!(
            w,
            "{},{},{},{:.6},{:.3},{:.3},{:.1},{:.1},{:.1},{:.1}",
            p.strategy,
            p.nprobe,
            p.k,
            p.recall,
            p.scan_dco,
            p.refine_dco,
            p.qps,
            p.lat_mean_us,
            p.lat_p95_us,
            p.lat_p99_us
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one point's per-query distribution for CDF plotting.
pub fn write_cdf_csv(path: &Path, point: &BenchPoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "query_id,recall,scan_dco")?;
    for (qi, (r, d)) in point
        .query_recall
        .iter()
        .zip(&point.query_scan_dco)
        .enumerate()
    {
        writeln!(w, "{qi},{r:.6},{d}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::StrategyConfig;
    use crate::dataset::generate_synthetic;
    use crate::exact::exact_knn;
    use crate::index::{BuildParams, QueryStats};

    fn output_of(rows: Vec<(Vec<u64>, Vec<f32>)>) -> SearchOutput {
        let stats = vec![QueryStats::default(); rows.len()];
        let (ids, dists) = rows.into_iter().unzip();
        SearchOutput { ids, dists, stats }
    }

    fn gt_of(metric: Metric, rows: Vec<(Vec<u64>, Vec<f32>)>) -> GroundTruth {
        let k = rows.first().map_or(0, |r| r.0.len());
        let (ids, dists) = rows.into_iter().unzip();
        GroundTruth {
            k,
            metric,
            ids,
            dists: Some(dists),
        }
    }

    #[test]
    fn recall_extremes_and_half_overlap() {
        let gt = gt_of(
            Metric::L2,
            vec![(vec![1, 2, 3, 4], vec![1.0, 2.0, 3.0, 4.0]); 3],
        );
        let perfect = output_of(vec![(vec![1, 2, 3, 4], vec![1.0, 2.0, 3.0, 4.0]); 3]);
        assert_eq!(recall_at(&perfect, &gt, 4, 4).unwrap(), 1.0);

        let disjoint = output_of(vec![(vec![9, 10, 11, 12], vec![9.0, 10.0, 11.0, 12.0]); 3]);
        assert_eq!(recall_at(&disjoint, &gt, 4, 4).unwrap(), 0.0);

        let half = output_of(vec![(vec![1, 2, 11, 12], vec![1.0, 2.0, 11.0, 12.0]); 3]);
        assert_eq!(recall_at(&half, &gt, 4, 4).unwrap(), 0.5);
    }

    #[test]
    fn recall_accepts_equidistant_substitutes() {
        // id 7 is not in the ground-truth top-2, but sits at exactly the
        // 2nd-best distance; the tie rule counts it.
        let gt = gt_of(Metric::L2, vec![(vec![1, 2], vec![1.0, 2.0])]);
        let out = output_of(vec![(vec![1, 7], vec![1.0, 2.0])]);
        assert_eq!(recall_at(&out, &gt, 2, 2).unwrap(), 1.0);

        // Without distances only membership counts.
        let mut bare = gt_of(Metric::L2, vec![(vec![1, 2], vec![1.0, 2.0])]);
        bare.dists = None;
        assert_eq!(recall_at(&out, &bare, 2, 2).unwrap(), 0.5);

        // For inner product the tie threshold points the other way.
        let gt = gt_of(Metric::Ip, vec![(vec![1, 2], vec![9.0, 8.0])]);
        let out = output_of(vec![(vec![1, 7], vec![9.0, 8.0])]);
        assert_eq!(recall_at(&out, &gt, 2, 2).unwrap(), 1.0);
    }

    #[test]
    fn recall_is_invariant_under_query_permutation() {
        let gt = gt_of(
            Metric::L2,
            vec![
                (vec![1, 2], vec![1.0, 2.0]),
                (vec![3, 4], vec![1.0, 2.0]),
                (vec![5, 6], vec![1.0, 2.0]),
            ],
        );
        let out = output_of(vec![
            (vec![1, 9], vec![1.0, 9.0]),
            (vec![3, 4], vec![1.0, 2.0]),
            (vec![9, 9], vec![8.0, 9.0]),
        ]);
        let a = recall_at(&out, &gt, 2, 2).unwrap();

        let perm = [2usize, 0, 1];
        let gt2 = gt_of(
            Metric::L2,
            perm.iter()
                .map(|&i| (gt.ids[i].clone(), gt.dists.as_ref().unwrap()[i].clone()))
                .collect(),
        );
        let out2 = output_of(
            perm.iter()
                .map(|&i| (out.ids[i].clone(), out.dists[i].clone()))
                .collect(),
        );
        let b = recall_at(&out2, &gt2, 2, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_query_counts_are_rejected() {
        let gt = gt_of(Metric::L2, vec![(vec![1], vec![1.0]); 2]);
        let out = output_of(vec![(vec![1], vec![1.0]); 3]);
        assert!(recall_at(&out, &gt, 1, 1).is_err());
    }

    fn bench_fixture() -> (RairsIndex, VectorSet, GroundTruth) {
        let base = generate_synthetic(1500, 8, 12, 5, 0.15).unwrap();
        let queries = generate_synthetic(30, 8, 12, 77, 0.15).unwrap();
        let params = BuildParams {
            strategy: StrategyConfig::air(0.5, true),
            nlist: Some(8),
            m_pq: Some(4),
            blk_sz: 16,
            kmeans_iters: 8,
            seed: 3,
            ..BuildParams::default()
        };
        let index = RairsIndex::build(&base, &params).unwrap();
        let gt = exact_knn(&base, &queries, 10, Metric::L2).unwrap();
        (index, queries, gt)
    }

    #[test]
    fn exhaustive_sweep_point_scores_full_recall() {
        let (index, queries, gt) = bench_fixture();
        let opts = SweepOptions {
            k_factor: Some(1500),
            ..SweepOptions::default()
        };
        let report = sweep(&index, &queries, &gt, 10, &[index.nlist()], &opts).unwrap();
        assert_eq!(report.points.len(), 1);
        assert_eq!(report.points[0].recall, 1.0);
        assert!(report.points[0].query_recall.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn repeated_nprobe_rows_are_identical_and_deterministic() {
        let (index, queries, gt) = bench_fixture();
        let opts = SweepOptions::default();
        let report = sweep(&index, &queries, &gt, 10, &[2, 2, 4], &opts).unwrap();
        let a = &report.points[0];
        let b = &report.points[1];
        assert_eq!(a.recall, b.recall);
        assert_eq!(a.scan_dco, b.scan_dco);
        assert_eq!(a.refine_dco, b.refine_dco);
        assert_eq!(a.query_scan_dco, b.query_scan_dco);

        let again = sweep(&index, &queries, &gt, 10, &[2, 2, 4], &opts).unwrap();
        for (p, q) in report.points.iter().zip(&again.points) {
            assert_eq!(p.recall, q.recall);
            assert_eq!(p.query_scan_dco, q.query_scan_dco);
        }
    }

    #[test]
    fn csv_files_carry_the_documented_headers() {
        let (index, queries, gt) = bench_fixture();
        let opts = SweepOptions {
            one_at_a_time: true,
            ..SweepOptions::default()
        };
        let report = sweep(&index, &queries, &gt, 10, &[1, 4], &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let table = dir.path().join("sweep.csv");
        write_report_csv(&table, &report).unwrap();
        let text = std::fs::read_to_string(&table).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "strategy,nprobe,K,recall,scan_dco,refine_dco,qps,lat_mean_us,lat_p95_us,lat_p99_us"
        );
        assert_eq!(lines.count(), 2);
        assert!(text.contains("srair,1,10,"));

        let cdf = dir.path().join("cdf.csv");
        write_cdf_csv(&cdf, &report.points[1]).unwrap();
        let text = std::fs::read_to_string(&cdf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "query_id,recall,scan_dco");
        assert_eq!(lines.count(), queries.len());

        // One-at-a-time mode produced a real latency distribution.
        for p in &report.points {
            assert!(p.lat_p99_us >= p.lat_p95_us);
            assert!(p.lat_p95_us > 0.0);
        }
    }
}
