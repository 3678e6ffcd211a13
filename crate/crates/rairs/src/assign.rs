//! Redundant list assignment: choosing the second (and further) inverted
//! lists a vector joins.
//!
//! All strategies share one shape. Rank the `n_cands` nearest lists, take
//! the nearest as the primary assignment, compute a loss for every
//! candidate from the residuals `r = c - v` (primary) and `r' = c' - v`
//! (candidate), and pick the loss minimizer as the secondary assignment:
//!
//! * naive:  `|r'|^2` — the second-nearest list wins.
//! * SOAR:   `|r'|^2 + lambda * (r.r' / |r|)^2` — penalizes candidates
//!   whose residual is parallel to the primary residual.
//! * AIR:    `|r'|^2 + lambda * r.r'` — same idea, but the penalty term is
//!   signed, so candidates on the far side of the vector (negative
//!   correlation) are *rewarded*. This is the derivative-free form of the
//!   expected regret of routing a miss-side query to the candidate list;
//!   `lambda = 0` degenerates to naive.
//!
//! In strict mode the primary is excluded from the minimization and the
//! vector always lands in two distinct lists. In non-strict mode the
//! primary competes with loss `(1 + lambda) * |r|^2`; if nothing beats it,
//! the vector stays singly assigned.

use crate::coarse::CoarseQuantizer;
use crate::error::{Error, Result};
use crate::metric::{dot, norm_sqr};

/// A vector's chosen pair of lists, kept ordered (`list1 <= list2`). A
/// singly assigned vector carries `list1 == list2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub list1: u32,
    pub list2: u32,
    pub vec_id: u64,
}

impl Assignment {
    pub fn new(a: u32, b: u32, vec_id: u64) -> Self {
        Assignment {
            list1: a.min(b),
            list2: a.max(b),
            vec_id,
        }
    }

    pub fn is_single(&self) -> bool {
        self.list1 == self.list2
    }
}

/// Which loss drives the secondary assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    /// Primary list only.
    Single,
    /// Second-nearest list, unconditionally.
    NaiveRa,
    Soar,
    Air,
}

/// How multi-assignment aggregates correlation against already-chosen lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    Max,
    Min,
    Avg,
}

/// Full assignment-strategy configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Weight of the correlation term in SOAR and AIR.
    pub lambda: f32,
    /// Candidate lists considered for the secondary assignment.
    pub n_cands: usize,
    /// Force two distinct lists (ignored by `Single`; `NaiveRa` is always
    /// strict).
    pub is_strict: bool,
    /// Number of lists for [`multi_assign`]; 2 reproduces [`rair_assign`].
    pub m: usize,
    pub aggr: Aggregator,
}

pub const DEFAULT_LAMBDA: f32 = 0.5;
pub const DEFAULT_N_CANDS: usize = 10;

impl StrategyConfig {
    pub fn single() -> Self {
        StrategyConfig {
            kind: StrategyKind::Single,
            lambda: 0.0,
            n_cands: 1,
            is_strict: false,
            m: 1,
            aggr: Aggregator::Max,
        }
    }

    pub fn naive_ra() -> Self {
        StrategyConfig {
            kind: StrategyKind::NaiveRa,
            lambda: 0.0,
            n_cands: DEFAULT_N_CANDS,
            is_strict: true,
            m: 2,
            aggr: Aggregator::Max,
        }
    }

    pub fn soar(lambda: f32) -> Self {
        StrategyConfig {
            kind: StrategyKind::Soar,
            lambda,
            n_cands: DEFAULT_N_CANDS,
            is_strict: true,
            m: 2,
            aggr: Aggregator::Max,
        }
    }

    pub fn air(lambda: f32, is_strict: bool) -> Self {
        StrategyConfig {
            kind: StrategyKind::Air,
            lambda,
            n_cands: DEFAULT_N_CANDS,
            is_strict,
            m: 2,
            aggr: Aggregator::Max,
        }
    }

    pub fn air_multi(lambda: f32, m: usize, aggr: Aggregator) -> Self {
        StrategyConfig {
            kind: StrategyKind::Air,
            lambda,
            n_cands: DEFAULT_N_CANDS.max(m),
            is_strict: true,
            m,
            aggr,
        }
    }

    /// Canonical name used in reports: `single`, `naive-ra`, `soar`,
    /// `rair` (non-strict AIR), `srair` (strict), or `air-m{m}`.
    pub fn name(&self) -> String {
        match self.kind {
            StrategyKind::Single => "single".into(),
            StrategyKind::NaiveRa => "naive-ra".into(),
            StrategyKind::Soar => "soar".into(),
            StrategyKind::Air => {
                if self.m > 2 {
                    format!("air-m{}", self.m)
                } else if self.is_strict {
                    "srair".into()
                } else {
                    "rair".into()
                }
            }
        }
    }

    pub fn validate(&self, nlist: usize) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda {} must be finite and non-negative",
                self.lambda
            )));
        }
        if self.kind != StrategyKind::Single {
            if self.n_cands < 2 {
                return Err(Error::InvalidConfig(format!(
                    "n_cands {} must be at least 2 for redundant assignment",
                    self.n_cands
                )));
            }
            if nlist < 2 {
                return Err(Error::InvalidConfig(
                    "redundant assignment needs at least 2 lists".into(),
                ));
            }
        }
        if self.m < 1 || (self.kind != StrategyKind::Single && self.m > self.n_cands.min(nlist)) {
            return Err(Error::InvalidConfig(format!(
                "m {} must be in 1..=min(n_cands, nlist)",
                self.m
            )));
        }
        Ok(())
    }
}

/// Naive redundant-assignment loss: the candidate's squared residual norm.
#[inline]
pub fn loss_naive(r_prime: &[f32]) -> f32 {
    norm_sqr(r_prime)
}

/// SOAR loss `|r'|^2 + lambda * (r.r' / |r|)^2`. A zero primary residual
/// leaves the direction of `r` undefined; the loss then falls back to the
/// naive term.
#[inline]
pub fn loss_soar(r: &[f32], r_prime: &[f32], lambda: f32) -> f32 {
    let r_norm_sqr = norm_sqr(r);
    if r_norm_sqr == 0.0 {
        return loss_naive(r_prime);
    }
    let corr = dot(r, r_prime);
    norm_sqr(r_prime) + lambda * (corr * corr / r_norm_sqr)
}

/// AIR loss `|r'|^2 + lambda * r.r'`.
#[inline]
pub fn loss_air(r: &[f32], r_prime: &[f32], lambda: f32) -> f32 {
    norm_sqr(r_prime) + lambda * dot(r, r_prime)
}

/// Assigns `v` to an ordered pair of lists `(a, b)` with `a <= b`; a singly
/// assigned vector reports `a == b`.
///
/// The primary list is always the nearest centroid. The secondary minimizes
/// the strategy's loss over the `n_cands` nearest lists — over all of them
/// in non-strict mode (the primary may win, keeping the vector single), or
/// excluding the primary in strict mode. Ties go to the nearer candidate.
pub fn rair_assign(cq: &CoarseQuantizer, v: &[f32], cfg: &StrategyConfig) -> (u32, u32) {
    let primary_only = cfg.kind == StrategyKind::Single;
    let n_cands = if primary_only { 1 } else { cfg.n_cands };
    let cands = cq.find_nearest_lists(v, n_cands);
    let primary = cands[0];
    if primary_only || cands.len() < 2 {
        return (primary, primary);
    }
    let residuals = candidate_residuals(cq, v, &cands);
    let losses = candidate_losses(cfg, &residuals);
    let start = if cfg.kind == StrategyKind::NaiveRa || cfg.is_strict {
        1
    } else {
        0
    };
    let mut best = start;
    for i in start + 1..losses.len() {
        if losses[i] < losses[best] {
            best = i;
        }
    }
    let secondary = cands[best];
    (primary.min(secondary), primary.max(secondary))
}

/// Greedily assigns `v` to `cfg.m` distinct lists (strict; the generalized
/// form of [`rair_assign`]). Starting from the primary, each round adds the
/// candidate minimizing
/// `|r'|^2 + lambda * aggr_{i in chosen}(r_i . r')`,
/// where the aggregation runs over the residuals of the lists chosen so
/// far. Returns the chosen list IDs in ascending order; `m = 2` reproduces
/// strict [`rair_assign`] exactly.
pub fn multi_assign(cq: &CoarseQuantizer, v: &[f32], cfg: &StrategyConfig) -> Vec<u32> {
    let cands = cq.find_nearest_lists(v, cfg.n_cands.max(cfg.m));
    let m = cfg.m.min(cands.len());
    let residuals = candidate_residuals(cq, v, &cands);
    let mut chosen_idx = vec![0usize];
    while chosen_idx.len() < m {
        let mut best: Option<(usize, f32)> = None;
        for i in 0..cands.len() {
            if chosen_idx.contains(&i) {
                continue;
            }
            let mut agg: Option<f32> = None;
            for &j in &chosen_idx {
                let corr = dot(&residuals[j], &residuals[i]);
                agg = Some(match (agg, cfg.aggr) {
                    (None, _) => corr,
                    (Some(a), Aggregator::Max) => a.max(corr),
                    (Some(a), Aggregator::Min) => a.min(corr),
                    (Some(a), Aggregator::Avg) => a + corr,
                });
            }
            let mut agg = agg.expect("at least one chosen list");
            if cfg.aggr == Aggregator::Avg {
                agg /= chosen_idx.len() as f32;
            }
            let loss = norm_sqr(&residuals[i]) + cfg.lambda * agg;
            if best.is_none_or(|(_, b)| loss < b) {
                best = Some((i, loss));
            }
        }
        chosen_idx.push(best.expect("m <= candidate count").0);
    }
    let mut lists: Vec<u32> = chosen_idx.into_iter().map(|i| cands[i]).collect();
    lists.sort_unstable();
    lists
}

fn candidate_residuals(cq: &CoarseQuantizer, v: &[f32], cands: &[u32]) -> Vec<Vec<f32>> {
    cands
        .iter()
        .map(|&list| {
            cq.centroid(list)
                .iter()
                .zip(v)
                .map(|(c, x)| c - x)
                .collect()
        })
        .collect()
}

fn candidate_losses(cfg: &StrategyConfig, residuals: &[Vec<f32>]) -> Vec<f32> {
    let r = &residuals[0];
    residuals
        .iter()
        .map(|r_prime| match cfg.kind {
            StrategyKind::Single => unreachable!("single assignment computes no losses"),
            StrategyKind::NaiveRa => loss_naive(r_prime),
            StrategyKind::Soar => loss_soar(r, r_prime, cfg.lambda),
            StrategyKind::Air => loss_air(r, r_prime, cfg.lambda),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::{train_kmeans, CoarseQuantizer};
    use crate::dataset::generate_synthetic;
    use crate::metric::Metric;

    #[test]
    fn loss_formulas_match_hand_computed_values() {
        let r = [2.0f32, 0.0];
        let rp = [1.0f32, 1.0];
        assert_eq!(loss_naive(&rp), 2.0);
        // (r.r' / |r|)^2 = (2 / 2)^2 = 1
        assert_eq!(loss_soar(&r, &rp, 0.5), 2.5);
        // r.r' = 2
        assert_eq!(loss_air(&r, &rp, 0.5), 3.0);
        // Anti-correlated candidate: AIR subtracts, SOAR still penalizes.
        let rn = [-1.0f32, 1.0];
        assert_eq!(loss_air(&r, &rn, 0.5), 1.0);
        assert_eq!(loss_soar(&r, &rn, 0.5), 2.5);
    }

    #[test]
    fn soar_with_zero_primary_residual_is_naive() {
        let zero = [0.0f32, 0.0];
        let rp = [3.0f32, 4.0];
        assert_eq!(loss_soar(&zero, &rp, 0.7), loss_naive(&rp));
    }

    fn test_quantizer() -> CoarseQuantizer {
        let data = generate_synthetic(3000, 8, 40, 21, 0.15).unwrap();
        train_kmeans(&data, 32, Metric::L2, 20, 13).unwrap()
    }

    /// Exhaustive oracle: rank every list by a full sort, then minimize the
    /// written-out loss formulas with explicit tie handling.
    fn oracle_assign(cq: &CoarseQuantizer, v: &[f32], cfg: &StrategyConfig) -> (u32, u32) {
        let mut ranked: Vec<(f32, u32)> = (0..cq.nlist() as u32)
            .map(|l| (crate::metric::l2_sqr(v, cq.centroid(l)), l))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        ranked.truncate(cfg.n_cands);
        let primary = ranked[0].1;
        if cfg.kind == StrategyKind::Single {
            return (primary, primary);
        }
        let res: Vec<Vec<f32>> = ranked
            .iter()
            .map(|&(_, l)| cq.centroid(l).iter().zip(v).map(|(c, x)| c - x).collect())
            .collect();
        let r0 = &res[0];
        let loss_of = |i: usize| -> f32 {
            let rp = &res[i];
            let sq: f32 = rp.iter().map(|x| x * x).sum();
            let corr: f32 = r0.iter().zip(rp).map(|(a, b)| a * b).sum();
            match cfg.kind {
                StrategyKind::NaiveRa => sq,
                StrategyKind::Air => sq + cfg.lambda * corr,
                StrategyKind::Soar => {
                    let rsq: f32 = r0.iter().map(|x| x * x).sum();
                    if rsq == 0.0 {
                        sq
                    } else {
                        sq + cfg.lambda * corr * corr / rsq
                    }
                }
                StrategyKind::Single => unreachable!(),
            }
        };
        let start = if cfg.kind == StrategyKind::NaiveRa || cfg.is_strict {
            1
        } else {
            0
        };
        let mut best = start;
        let mut best_loss = loss_of(start);
        for i in start..ranked.len() {
            let l = loss_of(i);
            if l < best_loss {
                best = i;
                best_loss = l;
            }
        }
        let second = ranked[best].1;
        (primary.min(second), primary.max(second))
    }

    #[test]
    fn rair_assign_matches_exhaustive_oracle() {
        let cq = test_quantizer();
        let vs = generate_synthetic(400, 8, 40, 21, 0.15).unwrap();
        let configs = [
            StrategyConfig::single(),
            StrategyConfig::naive_ra(),
            StrategyConfig::soar(1.0),
            StrategyConfig::air(0.5, false),
            StrategyConfig::air(0.5, true),
            StrategyConfig::air(2.0, false),
        ];
        for cfg in &configs {
            for (_, v) in vs.iter() {
                assert_eq!(rair_assign(&cq, v, cfg), oracle_assign(&cq, v, cfg), "{cfg:?}");
            }
        }
    }

    #[test]
    fn naive_picks_the_second_nearest_list() {
        let cq = test_quantizer();
        let vs = generate_synthetic(100, 8, 40, 21, 0.15).unwrap();
        for (_, v) in vs.iter() {
            let two = cq.find_nearest_lists(v, 2);
            let (a, b) = rair_assign(&cq, v, &StrategyConfig::naive_ra());
            assert_eq!((a, b), (two[0].min(two[1]), two[0].max(two[1])));
            // AIR with lambda = 0 (strict) degenerates to the same choice.
            let (c, d) = rair_assign(&cq, v, &StrategyConfig::air(0.0, true));
            assert_eq!((c, d), (a, b));
        }
    }

    #[test]
    fn non_strict_air_single_assigns_iff_primary_wins() {
        let cq = test_quantizer();
        let vs = generate_synthetic(300, 8, 40, 21, 0.15).unwrap();
        let cfg = StrategyConfig::air(0.5, false);
        let mut singles = 0;
        for (_, v) in vs.iter() {
            let cands = cq.find_nearest_lists(v, cfg.n_cands);
            let r0: Vec<f32> = cq.centroid(cands[0]).iter().zip(v).map(|(c, x)| c - x).collect();
            let primary_loss = (1.0 + cfg.lambda) * norm_sqr(&r0);
            let beaten = cands[1..].iter().any(|&l| {
                let rp: Vec<f32> = cq.centroid(l).iter().zip(v).map(|(c, x)| c - x).collect();
                loss_air(&r0, &rp, cfg.lambda) < primary_loss
            });
            let (a, b) = rair_assign(&cq, v, &cfg);
            assert_eq!(a == b, !beaten);
            if a == b {
                singles += 1;
            }
        }
        // The threshold must actually separate: some vectors stay single,
        // some spill.
        assert!(singles > 0 && singles < vs.len(), "singles = {singles}");
    }

    #[test]
    fn vector_on_centroid_stays_single_in_non_strict_mode() {
        let cq = test_quantizer();
        let v = cq.centroid(7).to_vec();
        assert_eq!(rair_assign(&cq, &v, &StrategyConfig::air(0.5, false)), (7, 7));
        // Strict SOAR on the same vector: falls back to the naive loss and
        // still produces two distinct lists.
        let (a, b) = rair_assign(&cq, &v, &StrategyConfig::soar(1.0));
        assert_ne!(a, b);
        let two = cq.find_nearest_lists(&v, 2);
        assert_eq!((a, b), (two[0].min(two[1]), two[0].max(two[1])));
    }

    #[test]
    fn multi_assign_two_equals_strict_rair() {
        let cq = test_quantizer();
        let vs = generate_synthetic(300, 8, 40, 21, 0.15).unwrap();
        for lambda in [0.0f32, 0.5, 1.5] {
            let mut cfg = StrategyConfig::air(lambda, true);
            cfg.m = 2;
            for (_, v) in vs.iter() {
                let multi = multi_assign(&cq, v, &cfg);
                let (a, b) = rair_assign(&cq, v, &cfg);
                assert_eq!(multi, vec![a, b]);
            }
        }
    }

    #[test]
    fn multi_assign_returns_distinct_sorted_lists() {
        let cq = test_quantizer();
        let vs = generate_synthetic(100, 8, 40, 21, 0.15).unwrap();
        for aggr in [Aggregator::Max, Aggregator::Min, Aggregator::Avg] {
            let cfg = StrategyConfig::air_multi(0.5, 4, aggr);
            for (_, v) in vs.iter() {
                let lists = multi_assign(&cq, v, &cfg);
                assert_eq!(lists.len(), 4);
                assert!(lists.windows(2).all(|w| w[0] < w[1]), "{lists:?}");
            }
        }
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        assert!(StrategyConfig::air(-1.0, false).validate(16).is_err());
        let mut cfg = StrategyConfig::air(0.5, true);
        cfg.n_cands = 1;
        assert!(cfg.validate(16).is_err());
        let mut cfg = StrategyConfig::air_multi(0.5, 8, Aggregator::Max);
        cfg.n_cands = 4;
        assert!(cfg.validate(16).is_err());
        assert!(StrategyConfig::air(0.5, true).validate(1).is_err());
        assert!(StrategyConfig::single().validate(1).is_ok());
    }
}
