//! Python bindings: the `Index` class plus the module-level helpers
//! (`exact_knn`, `generate_synthetic`, `sin_power_integral`,
//! `verify_air`). Vectors cross the boundary as plain lists of floats;
//! IDs as ints.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rairs::{BuildParams, Metric, RairsIndex, SearchParams, StrategyConfig, VectorSet};

fn pyerr(e: rairs::Error) -> PyErr {
    match e {
        rairs::Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_metric(name: &str) -> PyResult<Metric> {
    match name {
        "l2" => Ok(Metric::L2),
        "ip" => Ok(Metric::Ip),
        other => Err(PyValueError::new_err(format!(
            "unknown metric {other:?}; expected \"l2\" or \"ip\""
        ))),
    }
}

fn parse_strategy(
    name: &str,
    lam: Option<f32>,
    n_cands: Option<usize>,
    m: Option<usize>,
    aggr: &str,
    metric: Metric,
) -> PyResult<StrategyConfig> {
    let lambda = lam.unwrap_or(rairs::assign::DEFAULT_LAMBDA);
    let aggr = match aggr {
        "max" => rairs::assign::Aggregator::Max,
        "min" => rairs::assign::Aggregator::Min,
        "avg" => rairs::assign::Aggregator::Avg,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown aggregator {other:?}; expected max, min, or avg"
            )))
        }
    };
    let mut cfg = match name {
        "single" => StrategyConfig::single(),
        "naive" | "naive-ra" => StrategyConfig::naive_ra(),
        "soar" | "soarl2" | "soar-ip" => {
            let want = match name {
                "soarl2" => Some(Metric::L2),
                "soar-ip" => Some(Metric::Ip),
                _ => None,
            };
            if want.is_some_and(|w| w != metric) {
                return Err(PyValueError::new_err(format!(
                    "strategy {name:?} does not match the index metric"
                )));
            }
            StrategyConfig::soar(lambda)
        }
        "air" | "rair" => StrategyConfig::air(lambda, false),
        "air-strict" | "srair" => StrategyConfig::air(lambda, true),
        other => {
            let m = if other == "air-m" {
                m.ok_or_else(|| PyValueError::new_err("strategy \"air-m\" needs m="))?
            } else if let Some(suffix) = other.strip_prefix("air-m") {
                suffix.parse().map_err(|_| {
                    PyValueError::new_err(format!("unknown strategy {other:?}"))
                })?
            } else {
                return Err(PyValueError::new_err(format!(
                    "unknown strategy {other:?}"
                )));
            };
            StrategyConfig::air_multi(lambda, m, aggr)
        }
    };
    if let Some(nc) = n_cands {
        cfg.n_cands = nc;
    }
    if let Some(m) = m {
        if cfg.m >= 2 {
            cfg.m = m;
        }
    }
    Ok(cfg)
}

fn to_set(data: Vec<Vec<f32>>, ids: Option<Vec<u64>>) -> PyResult<VectorSet> {
    let Some(first) = data.first() else {
        return Err(PyValueError::new_err("need at least one vector"));
    };
    let dim = first.len();
    let mut flat = Vec::with_capacity(data.len() * dim);
    for (i, row) in data.iter().enumerate() {
        if row.len() != dim {
            return Err(PyValueError::new_err(format!(
                "vector {i} has {} components, expected {dim}",
                row.len()
            )));
        }
        flat.extend_from_slice(row);
    }
    match ids {
        Some(ids) => VectorSet::from_rows(dim, flat, ids),
        None => VectorSet::with_sequential_ids(dim, flat),
    }
    .map_err(pyerr)
}

fn rows(set: &VectorSet) -> Vec<Vec<f32>> {
    (0..set.len()).map(|i| set.get(i).to_vec()).collect()
}

type SearchReturn = (Vec<Vec<u64>>, Vec<Vec<f32>>, Vec<(u64, u64)>);

fn unpack(out: rairs::SearchOutput) -> SearchReturn {
    let stats = out
        .stats
        .iter()
        .map(|s| (s.scan_dco, s.refine_dco))
        .collect();
    (out.ids, out.dists, stats)
}

/// An IVF-PQ index with redundant list assignment and shared-cell lists.
#[pyclass(name = "Index")]
struct PyIndex {
    inner: RairsIndex,
}

#[pymethods]
impl PyIndex {
    /// Trains and populates an index. `lam` is the λ weight of the
    /// SOAR/AIR correlation term (named to dodge the Python keyword).
    #[staticmethod]
    #[pyo3(signature = (data, ids=None, *, metric="l2", strategy="air-strict",
                        lam=None, n_cands=None, m=None, aggr="max", nlist=None,
                        m_pq=None, nbits=4, blk_sz=32, kmeans_iters=25, seed=42))]
    #[allow(clippy::too_many_arguments)]
    fn build(
        data: Vec<Vec<f32>>,
        ids: Option<Vec<u64>>,
        metric: &str,
        strategy: &str,
        lam: Option<f32>,
        n_cands: Option<usize>,
        m: Option<usize>,
        aggr: &str,
        nlist: Option<usize>,
        m_pq: Option<usize>,
        nbits: u32,
        blk_sz: usize,
        kmeans_iters: usize,
        seed: u64,
    ) -> PyResult<PyIndex> {
        let metric = parse_metric(metric)?;
        let params = BuildParams {
            metric,
            strategy: parse_strategy(strategy, lam, n_cands, m, aggr, metric)?,
            nlist,
            m_pq,
            nbits,
            blk_sz,
            kmeans_iters,
            seed,
        };
        let set = to_set(data, ids)?;
        Ok(PyIndex {
            inner: RairsIndex::build(&set, &params).map_err(pyerr)?,
        })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<PyIndex> {
        Ok(PyIndex {
            inner: RairsIndex::load(&path).map_err(pyerr)?,
        })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(pyerr)
    }

    /// Returns `(ids, dists, stats)` where `stats[q]` is the query's
    /// `(scan_dco, refine_dco)` pair.
    #[pyo3(signature = (queries, k=10, nprobe=16, k_factor=None))]
    fn search(
        &self,
        queries: Vec<Vec<f32>>,
        k: usize,
        nprobe: usize,
        k_factor: Option<usize>,
    ) -> PyResult<SearchReturn> {
        let queries = to_set(queries, None)?;
        let params = match k_factor {
            Some(kf) => SearchParams {
                k,
                nprobe,
                k_factor: kf,
            },
            None => SearchParams::new(k, nprobe),
        };
        Ok(unpack(self.inner.search(&queries, &params).map_err(pyerr)?))
    }

    /// Grouped batch execution; identical results to `search`, plus the
    /// number of list switches the shared pass performed.
    #[pyo3(signature = (queries, k=10, nprobe=16, k_factor=None))]
    fn batch_search_grouped(
        &self,
        queries: Vec<Vec<f32>>,
        k: usize,
        nprobe: usize,
        k_factor: Option<usize>,
    ) -> PyResult<(Vec<Vec<u64>>, Vec<Vec<f32>>, Vec<(u64, u64)>, u64)> {
        let queries = to_set(queries, None)?;
        let params = match k_factor {
            Some(kf) => SearchParams {
                k,
                nprobe,
                k_factor: kf,
            },
            None => SearchParams::new(k, nprobe),
        };
        let (out, trace) = self
            .inner
            .batch_search_grouped(&queries, &params)
            .map_err(pyerr)?;
        let (ids, dists, stats) = unpack(out);
        Ok((ids, dists, stats, trace.list_switches))
    }

    fn add(&mut self, data: Vec<Vec<f32>>, ids: Vec<u64>) -> PyResult<()> {
        let set = to_set(data, Some(ids))?;
        self.inner.add_vectors(&set).map_err(pyerr)
    }

    /// Removes IDs; returns `(deleted, missing)` ID lists.
    fn delete(&mut self, ids: Vec<u64>) -> (Vec<u64>, Vec<u64>) {
        let report = self.inner.delete_vectors(&ids);
        (report.deleted, report.missing)
    }

    fn contains(&self, id: u64) -> bool {
        self.inner.contains(id)
    }

    fn cell_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let stats = self.inner.cell_stats().map_err(pyerr)?;
        let d = PyDict::new(py);
        d.set_item("ncells", stats.ncells())?;
        d.set_item("stored_copies", stats.stored_copies())?;
        d.set_item("shared_block_vectors", stats.shared_block_vectors)?;
        d.set_item("misc_vector_copies", stats.misc_vector_copies)?;
        d.set_item("pair_cell_vector_fraction", stats.pair_cell_vector_fraction)?;
        d.set_item("large_cell_vector_fraction", stats.large_cell_vector_fraction)?;
        let hist = PyDict::new(py);
        for (size, count) in &stats.size_histogram {
            hist.set_item(size, count)?;
        }
        d.set_item("size_histogram", hist)?;
        Ok(d)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn ntotal(&self) -> usize {
        self.inner.ntotal()
    }

    #[getter]
    fn nlist(&self) -> usize {
        self.inner.nlist()
    }

    #[getter]
    fn metric(&self) -> &'static str {
        match self.inner.metric() {
            Metric::L2 => "l2",
            Metric::Ip => "ip",
        }
    }

    #[getter]
    fn strategy(&self) -> String {
        self.inner.strategy().name()
    }

    #[getter]
    fn blk_sz(&self) -> usize {
        self.inner.blk_sz()
    }

    fn __len__(&self) -> usize {
        self.inner.ntotal()
    }

    fn __repr__(&self) -> String {
        format!(
            "Index(ntotal={}, dim={}, nlist={}, metric={:?}, strategy={:?})",
            self.inner.ntotal(),
            self.inner.dim(),
            self.inner.nlist(),
            self.metric(),
            self.strategy()
        )
    }
}

/// Exhaustive top-`k`; returns `(ids, dists)` in natural distance values.
#[pyfunction]
#[pyo3(signature = (base, queries, k, metric="l2", ids=None))]
fn exact_knn(
    base: Vec<Vec<f32>>,
    queries: Vec<Vec<f32>>,
    k: usize,
    metric: &str,
    ids: Option<Vec<u64>>,
) -> PyResult<(Vec<Vec<u64>>, Vec<Vec<f32>>)> {
    let base = to_set(base, ids)?;
    let queries = to_set(queries, None)?;
    let gt = rairs::exact_knn(&base, &queries, k, parse_metric(metric)?).map_err(pyerr)?;
    let dists = gt.dists.unwrap_or_default();
    Ok((gt.ids, dists))
}

/// Deterministic Gaussian-mixture data; returns `(rows, ids)`. `skip`
/// slices deeper into the same stream, sharing cluster centers — that is
/// how query sets are drawn from a base set's distribution.
#[pyfunction]
#[pyo3(signature = (n, dim, clusters=16, seed=42, spread=0.1, skip=0))]
fn generate_synthetic(
    n: usize,
    dim: usize,
    clusters: usize,
    seed: u64,
    spread: f32,
    skip: usize,
) -> PyResult<(Vec<Vec<f32>>, Vec<u64>)> {
    let set = rairs::dataset::generate_synthetic_part(n, dim, clusters, seed, spread, skip)
        .map_err(pyerr)?;
    Ok((rows(&set), set.ids().to_vec()))
}

/// `∫₀^π sinᴰθ dθ` by the recurrence the AIR λ derivation uses.
#[pyfunction]
fn sin_power_integral(d: u32) -> f64 {
    rairs::sin_power_integral(d)
}

/// Monte-Carlo check of the AIR loss closed form on a random instance;
/// returns the full verification report as a dict.
#[pyfunction]
#[pyo3(signature = (d=8, l_m=0.5, candidates=50, samples=100_000, seed=42))]
fn verify_air<'py>(
    py: Python<'py>,
    d: usize,
    l_m: f64,
    candidates: usize,
    samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    use rand::{Rng, SeedableRng};
    if d < 2 {
        return Err(PyValueError::new_err("d must be at least 2"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut r: Vec<f64> = (0..d)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target = rng.random_range(0.1..1.0);
    for v in &mut r {
        *v *= target / norm;
    }
    let c: Vec<f64> = x.iter().zip(&r).map(|(xi, ri)| xi - ri).collect();
    let cands = rairs::make_candidates(&x, &c, candidates, l_m, seed ^ 0x5EED).map_err(pyerr)?;
    let res = rairs::verify_air(&x, &c, &cands, l_m, samples, seed).map_err(pyerr)?;
    let out = PyDict::new(py);
    out.set_item("d", res.d)?;
    out.set_item("l_m", res.l_m)?;
    out.set_item("lambda_theory", res.lambda_theory)?;
    out.set_item("samples", res.samples)?;
    out.set_item("candidates", res.pairs)?;
    out.set_item("correlation", res.correlation)?;
    out.set_item("ratio", res.ratio)?;
    out.set_item("ratio_theory", res.ratio_theory)?;
    out.set_item("ratio_spread", res.ratio_spread)?;
    Ok(out)
}

#[pymodule]
mod rairs_py {
    #[pymodule_export]
    use super::{exact_knn, generate_synthetic, sin_power_integral, verify_air, PyIndex};
}
