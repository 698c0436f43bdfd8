//! Leave-one-out retrieval experiments and their evaluation metrics.
//!
//! Every image queries all the others. Candidates are ranked by descending
//! similarity (ascending distance); ties go to the lower dataset index.
//! A candidate is relevant when it shares the query's class.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgprep::DatasetLayout;
use crate::similarity::{ScoreKind, SimilarityScore};

/// Symmetric matrix of pairwise scores. The diagonal is not used.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    kind: ScoreKind,
    values: Vec<f64>,
}

impl ScoreMatrix {
    /// Evaluates `measure` once per unordered pair, in parallel.
    pub fn compute<T, F>(items: &[T], measure: F) -> Result<Self>
    where
        T: Sync,
        F: Fn(&T, &T) -> Result<SimilarityScore> + Sync,
    {
        let n = items.len();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let scores = pairs
            .par_iter()
            .map(|&(i, j)| measure(&items[i], &items[j]))
            .collect::<Result<Vec<_>>>()?;
        let kind = scores.first().map_or(ScoreKind::Similarity, |s| s.kind);
        if scores.iter().any(|s| s.kind != kind) {
            return Err(Error::Incompatible("measure mixes similarity and distance scores".into()));
        }
        let mut values = vec![0.0; n * n];
        for (&(i, j), s) in pairs.iter().zip(&scores) {
            if !s.value.is_finite() {
                return Err(Error::Numeric(format!("non-finite score between {i} and {j}")));
            }
            values[i * n + j] = s.value;
            values[j * n + i] = s.value;
        }
        Ok(Self { n, kind, values })
    }

    /// Builds a matrix from `f(i, j)` evaluated for `i < j`.
    pub fn from_fn(n: usize, kind: ScoreKind, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self { n, kind, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Score oriented so that larger means more similar.
    pub fn affinity(&self, i: usize, j: usize) -> f64 {
        SimilarityScore {
            value: self.get(i, j),
            kind: self.kind,
        }
        .affinity()
    }

    /// Applies `f` to every off-diagonal score.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            kind: self.kind,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Ranked candidates for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedRetrieval {
    pub query: usize,
    /// Dataset indices of all other images, best first.
    pub ranked: Vec<usize>,
    /// Whether `ranked[i]` is in the query's class.
    pub relevant: Vec<bool>,
}

impl RankedRetrieval {
    /// 1-based ranks of the relevant candidates, ascending.
    pub fn relevant_ranks(&self) -> Vec<usize> {
        self.relevant
            .iter()
            .enumerate()
            .filter_map(|(i, &r)| r.then_some(i + 1))
            .collect()
    }

    pub fn first_relevant_rank(&self) -> Option<usize> {
        self.relevant.iter().position(|&r| r).map(|i| i + 1)
    }
}

/// Ranks all candidates for every query.
pub fn rank_all(scores: &ScoreMatrix, labels: &[usize]) -> Result<Vec<RankedRetrieval>> {
    if labels.len() != scores.len() {
        return Err(Error::Config(format!(
            "{} labels for {} scored items",
            labels.len(),
            scores.len()
        )));
    }
    let n = scores.len();
    Ok((0..n)
        .map(|query| {
            let mut ranked: Vec<usize> = (0..n).filter(|&j| j != query).collect();
            ranked.sort_by(|&a, &b| {
                scores
                    .affinity(query, b)
                    .total_cmp(&scores.affinity(query, a))
                    .then(a.cmp(&b))
            });
            let relevant = ranked.iter().map(|&j| labels[j] == labels[query]).collect();
            RankedRetrieval {
                query,
                ranked,
                relevant,
            }
        })
        .collect())
}

/// Score matrix and rankings of a leave-one-out experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scores: ScoreMatrix,
    pub retrievals: Vec<RankedRetrieval>,
}

/// Compares every item with every other one and ranks the results.
pub fn run_experiment<T, F>(items: &[T], layout: &DatasetLayout, measure: F) -> Result<Experiment>
where
    T: Sync,
    F: Fn(&T, &T) -> Result<SimilarityScore> + Sync,
{
    layout.validate()?;
    if items.len() != layout.len() {
        return Err(Error::Config(format!(
            "{} items for a dataset of {} entries",
            items.len(),
            layout.len()
        )));
    }
    let scores = ScoreMatrix::compute(items, measure)?;
    let retrievals = rank_all(&scores, &layout.labels())?;
    Ok(Experiment { scores, retrievals })
}

/// Fraction of queries whose top-ranked candidate is relevant.
pub fn precision_at_1(retrievals: &[RankedRetrieval]) -> f64 {
    if retrievals.is_empty() {
        return 0.0;
    }
    let hits = retrievals
        .iter()
        .filter(|r| r.relevant.first().copied().unwrap_or(false))
        .count();
    hits as f64 / retrievals.len() as f64
}

/// Mean of `1 / rank` of the first relevant candidate.
pub fn mean_reciprocal_rank(retrievals: &[RankedRetrieval]) -> Result<f64> {
    if retrievals.is_empty() {
        return Err(Error::Config("no queries".into()));
    }
    let mut total = 0.0;
    for r in retrievals {
        let rank = r.first_relevant_rank().ok_or_else(|| {
            Error::Config(format!("query {} has no relevant candidate", r.query))
        })?;
        total += 1.0 / rank as f64;
    }
    Ok(total / retrievals.len() as f64)
}

/// `AP = (1 / (S - 1)) * sum_m m / rank(m)` over the `S - 1` relevant candidates.
pub fn average_precision(retrieval: &RankedRetrieval, samples_per_class: usize) -> Result<f64> {
    let ranks = retrieval.relevant_ranks();
    if samples_per_class < 2 || ranks.len() != samples_per_class - 1 {
        return Err(Error::Config(format!(
            "query {} has {} relevant candidates, expected S-1 = {}",
            retrieval.query,
            ranks.len(),
            samples_per_class.saturating_sub(1)
        )));
    }
    let sum: f64 = ranks
        .iter()
        .enumerate()
        .map(|(m, &rank)| (m + 1) as f64 / rank as f64)
        .sum();
    Ok(sum / ranks.len() as f64)
}

pub fn mean_average_precision(retrievals: &[RankedRetrieval], samples_per_class: usize) -> Result<f64> {
    if retrievals.is_empty() {
        return Err(Error::Config("no queries".into()));
    }
    let aps = retrievals
        .iter()
        .map(|r| average_precision(r, samples_per_class))
        .collect::<Result<Vec<_>>>()?;
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// ROC curve over all unordered pairs, positive when both share a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// Writes the curve as CSV with an `fpr,tpr` header.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "fpr,tpr")?;
        for (fpr, tpr) in &self.points {
            writeln!(out, "{fpr},{tpr}")?;
        }
        Ok(())
    }
}

/// Sweeps a threshold over every distinct score; AUC by the trapezoidal rule.
pub fn roc_curve(scores: &ScoreMatrix, labels: &[usize]) -> Result<RocCurve> {
    if labels.len() != scores.len() {
        return Err(Error::Config(format!(
            "{} labels for {} scored items",
            labels.len(),
            scores.len()
        )));
    }
    let n = scores.len();
    let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((scores.affinity(i, j), labels[i] == labels[j]));
        }
    }
    let positives = pairs.iter().filter(|p| p.1).count();
    let negatives = pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels(format!(
            "{positives} positive and {negatives} negative pairs"
        )));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for group in pairs.chunk_by(|a, b| a.0 == b.0) {
        let pos = group.iter().filter(|p| p.1).count();
        tp += pos;
        fp += group.len() - pos;
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// All metrics of one retrieval experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub p_at_1: f64,
    pub mrr: f64,
    pub map: f64,
    pub auc: f64,
    pub per_query_ap: Vec<f64>,
    #[serde(skip)]
    pub roc_points: Vec<(f64, f64)>,
}

impl RetrievalReport {
    pub fn evaluate(scores: &ScoreMatrix, layout: &DatasetLayout) -> Result<Self> {
        layout.validate()?;
        if layout.class_count < 2 || layout.samples_per_class < 2 {
            return Err(Error::Config(format!(
                "retrieval needs at least 2 classes and 2 samples per class, got C={} S={}",
                layout.class_count, layout.samples_per_class
            )));
        }
        let labels = layout.labels();
        let retrievals = rank_all(scores, &labels)?;
        Self::from_retrievals(&retrievals, scores, layout)
    }

    pub fn from_retrievals(
        retrievals: &[RankedRetrieval],
        scores: &ScoreMatrix,
        layout: &DatasetLayout,
    ) -> Result<Self> {
        let per_query_ap = retrievals
            .iter()
            .map(|r| average_precision(r, layout.samples_per_class))
            .collect::<Result<Vec<_>>>()?;
        let roc = roc_curve(scores, &layout.labels())?;
        Ok(Self {
            p_at_1: precision_at_1(retrievals),
            mrr: mean_reciprocal_rank(retrievals)?,
            map: per_query_ap.iter().sum::<f64>() / per_query_ap.len() as f64,
            auc: roc.auc,
            per_query_ap,
            roc_points: roc.points,
        })
    }

    pub fn roc(&self) -> RocCurve {
        RocCurve {
            points: self.roc_points.clone(),
            auc: self.auc,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgprep::DatasetEntry;
    use proptest::prelude::*;

    fn layout(classes: usize, samples: usize) -> DatasetLayout {
        let entries = (0..classes * samples)
            .map(|i| DatasetEntry {
                class: i / samples,
                sample: i % samples,
                filename: format!("{i}.png"),
            })
            .collect();
        DatasetLayout::new(classes, samples, entries).unwrap()
    }

    fn retrieval_with_ranks(ranks: &[usize], len: usize) -> RankedRetrieval {
        RankedRetrieval {
            query: 0,
            ranked: (1..=len).collect(),
            relevant: (1..=len).map(|r| ranks.contains(&r)).collect(),
        }
    }

    // Fraction of positive/negative pairs ordered correctly, ties count half.
    fn brute_force_auc(scores: &ScoreMatrix, labels: &[usize]) -> f64 {
        let n = scores.len();
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for i in 0..n {
            for j in i + 1..n {
                let s = scores.affinity(i, j);
                if labels[i] == labels[j] {
                    pos.push(s)
                } else {
                    neg.push(s)
                }
            }
        }
        let mut wins = 0.0;
        for p in &pos {
            for q in &neg {
                wins += if p > q {
                    1.0
                } else if p == q {
                    0.5
                } else {
                    0.0
                };
            }
        }
        wins / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn perfect_separation() {
        let l = layout(2, 2);
        let labels = l.labels();
        let scores = ScoreMatrix::from_fn(4, ScoreKind::Similarity, |i, j| {
            if labels[i] == labels[j] {
                0.9
            } else {
                0.1
            }
        });
        let rs = rank_all(&scores, &labels).unwrap();
        assert!(rs.iter().all(|r| r.relevant[0]));
        let report = RetrievalReport::evaluate(&scores, &l).unwrap();
        assert_eq!((report.p_at_1, report.mrr, report.map, report.auc), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(report.roc_points.first(), Some(&(0.0, 0.0)));
        assert_eq!(report.roc_points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn list_length_and_tie_break() {
        let scores = ScoreMatrix::from_fn(6, ScoreKind::Similarity, |_, _| 0.5);
        let rs = rank_all(&scores, &[0, 0, 1, 1, 2, 2]).unwrap();
        assert!(rs.iter().all(|r| r.ranked.len() == 5));
        assert_eq!(rs[3].ranked, [0, 1, 2, 4, 5]);
    }

    #[test]
    fn ranking_matches_sort_oracle() {
        let raw = [[0.0, 0.2, 0.7], [0.2, 0.0, 0.4], [0.7, 0.4, 0.0]];
        let scores = ScoreMatrix::from_fn(3, ScoreKind::Similarity, |i, j| raw[i][j]);
        let rs = rank_all(&scores, &[0, 1, 0]).unwrap();
        assert_eq!(rs[0].ranked, [2, 1]);
        assert_eq!(rs[1].ranked, [2, 0]);
        assert_eq!(rs[2].ranked, [0, 1]);
        let dist = scores.map(|v| 1.0 - v);
        let dist = ScoreMatrix {
            kind: ScoreKind::Distance,
            ..dist
        };
        assert_eq!(rank_all(&dist, &[0, 1, 0]).unwrap(), rs);
    }

    #[test]
    fn metric_examples() {
        let rs: Vec<_> = [1, 2, 4].iter().map(|&r| retrieval_with_ranks(&[r], 5)).collect();
        assert!((mean_reciprocal_rank(&rs).unwrap() - 7.0 / 12.0).abs() < 1e-15);
        assert_eq!(precision_at_1(&rs), 1.0 / 3.0);
        let ap = average_precision(&retrieval_with_ranks(&[1, 3, 5], 11), 4).unwrap();
        assert!((ap - 34.0 / 45.0).abs() < 1e-15);
        assert_eq!(average_precision(&retrieval_with_ranks(&[1, 2, 3], 11), 4).unwrap(), 1.0);
        assert!(average_precision(&retrieval_with_ranks(&[1, 2], 11), 4).is_err());
        assert!(mean_reciprocal_rank(&[retrieval_with_ranks(&[], 3)]).is_err());
        assert_eq!(precision_at_1(&[retrieval_with_ranks(&[2], 3)]), 0.0);
    }

    #[test]
    fn chance_roc() {
        let scores = ScoreMatrix::from_fn(6, ScoreKind::Similarity, |_, _| 0.3);
        let roc = roc_curve(&scores, &[0, 0, 1, 1, 2, 2]).unwrap();
        assert_eq!(roc.auc, 0.5);
        assert_eq!(roc.points, [(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn degenerate_labels() {
        let scores = ScoreMatrix::from_fn(3, ScoreKind::Similarity, |i, j| (i + j) as f64);
        assert!(matches!(roc_curve(&scores, &[0, 0, 0]), Err(Error::DegenerateLabels(_))));
        assert!(matches!(roc_curve(&scores, &[0, 1, 2]), Err(Error::DegenerateLabels(_))));
    }

    #[test]
    fn evaluate_requires_two_classes_and_samples() {
        let scores = ScoreMatrix::from_fn(3, ScoreKind::Similarity, |_, _| 0.0);
        assert!(matches!(RetrievalReport::evaluate(&scores, &layout(1, 3)), Err(Error::Config(_))));
        assert!(matches!(RetrievalReport::evaluate(&scores, &layout(3, 1)), Err(Error::Config(_))));
    }

    #[test]
    fn csv_output() {
        let roc = RocCurve {
            points: vec![(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)],
            auc: 0.75,
        };
        let mut buf = Vec::new();
        roc.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "fpr,tpr\n0,0\n0.5,1\n1,1\n");
    }

    proptest! {
        #[test]
        fn trapezoid_auc_matches_pair_counting(
            classes in 2usize..4,
            samples in 2usize..4,
            raw in prop::collection::vec(0u8..8, 66),
        ) {
            let l = layout(classes, samples);
            let mut it = raw.iter().cycle();
            let scores = ScoreMatrix::from_fn(l.len(), ScoreKind::Similarity, |_, _| *it.next().unwrap() as f64);
            let roc = roc_curve(&scores, &l.labels()).unwrap();
            prop_assert!((roc.auc - brute_force_auc(&scores, &l.labels())).abs() < 1e-9);
            for w in roc.points.windows(2) {
                prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
            }
        }
    }
}
