//! Single-location retrieval metrics: top-k% recall, precision/recall over
//! distance thresholds, and matched/unmatched distance histograms.

use std::io::Write;

use serde::Serialize;

use crate::embed::{Descriptor, DescriptorStore};
use crate::error::{Error, Result};
use crate::scalar::{euclidean, Real};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallPoint {
    pub k_percent: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallCurve {
    pub points: Vec<RecallPoint>,
}

impl RecallCurve {
    pub fn at(&self, k_percent: f64) -> Option<f64> {
        self.points.iter().find(|p| p.k_percent == k_percent).map(|p| p.recall)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k_percent", "recall"])?;
        for p in &self.points {
            wr.write_record([p.k_percent.to_string(), format!("{:.6}", p.recall)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Number of references inside the top `k_percent` of `n`.
pub fn cutoff(k_percent: f64, n: usize) -> usize {
    // k% of n computed as k * n / 100 so that e.g. 1% of 5000 is exactly 50.
    let c = (k_percent * n as f64 / 100.0).ceil() as usize;
    c.clamp(1, n)
}

/// 1-based rank of the reference `truth` for `query`: one plus the number of
/// references strictly closer, or equally close with a smaller id.
pub fn truth_rank<T: Real>(query: &[T], truth: u32, refs: &DescriptorStore<T>) -> Result<usize> {
    let truth_row = refs.get(truth).ok_or_else(|| Error::invalid(format!("truth id {truth} not in reference store")))?;
    let d_truth = euclidean(query, truth_row);
    let mut rank = 1;
    for (id, row) in refs.iter() {
        if id == truth {
            continue;
        }
        let d = euclidean(query, row);
        if d < d_truth || (d == d_truth && id < truth) {
            rank += 1;
        }
    }
    Ok(rank)
}

pub fn topk_percent_recall<T: Real>(
    queries: &[(u32, Descriptor<T>)],
    refs: &DescriptorStore<T>,
    ks: &[f64],
) -> Result<RecallCurve> {
    if refs.is_empty() {
        return Err(Error::invalid("reference store is empty"));
    }
    if queries.is_empty() {
        return Err(Error::invalid("no queries"));
    }
    if let Some(&k) = ks.iter().find(|&&k| !(k > 0.0 && k <= 100.0)) {
        return Err(Error::invalid(format!("k percent {k} outside (0, 100]")));
    }
    let ranks = queries
        .iter()
        .map(|(truth, q)| {
            if q.dim() != refs.dim() {
                return Err(Error::DimensionMismatch { expected: refs.dim(), got: q.dim() });
            }
            truth_rank(q.values(), *truth, refs)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = refs.len();
    let points = ks
        .iter()
        .map(|&k| {
            let c = cutoff(k, n);
            let hits = ranks.iter().filter(|&&r| r <= c).count();
            RecallPoint { k_percent: k, recall: hits as f64 / ranks.len() as f64 }
        })
        .collect();
    Ok(RecallCurve { points })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["threshold", "precision", "recall"])?;
        for p in &self.points {
            wr.write_record([format!("{:.6}", p.threshold), format!("{:.6}", p.precision), format!("{:.6}", p.recall)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Precision and recall when every pair at distance `<= t` is retrieved.
/// Precision of an empty retrieval is 1.
pub fn precision_recall_curve(matched: &[f64], unmatched: &[f64], thresholds: &[f64]) -> PrCurve {
    let mut m = matched.to_vec();
    let mut u = unmatched.to_vec();
    m.sort_by(f64::total_cmp);
    u.sort_by(f64::total_cmp);
    let count_le = |v: &[f64], t: f64| v.partition_point(|&x| x <= t);
    let points = thresholds
        .iter()
        .map(|&t| {
            let tp = count_le(&m, t);
            let fp = count_le(&u, t);
            let fn_ = m.len() - tp;
            let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
            let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            PrPoint { threshold: t, precision, recall }
        })
        .collect();
    PrCurve { points }
}

/// `count` thresholds evenly spaced over `[0, max distance]`.
pub fn even_thresholds(matched: &[f64], unmatched: &[f64], count: usize) -> Vec<f64> {
    let hi = matched.iter().chain(unmatched).fold(0.0f64, |a, &b| a.max(b));
    if count <= 1 {
        return vec![hi];
    }
    (0..count).map(|i| hi * i as f64 / (count - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistHistogram {
    /// `bin_count + 1` shared edges.
    pub edges: Vec<f64>,
    pub matched: Vec<usize>,
    pub unmatched: Vec<usize>,
}

impl DistHistogram {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["bin_lo", "bin_hi", "matched", "unmatched"])?;
        for i in 0..self.matched.len() {
            wr.write_record([
                format!("{:.6}", self.edges[i]),
                format!("{:.6}", self.edges[i + 1]),
                self.matched[i].to_string(),
                self.unmatched[i].to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Histograms over shared bins spanning `[0, max]`; the maximum lands in the
/// last bin.
pub fn distance_histograms(matched: &[f64], unmatched: &[f64], bin_count: usize) -> Result<DistHistogram> {
    if bin_count == 0 {
        return Err(Error::invalid("bin_count must be >= 1"));
    }
    if matched.is_empty() && unmatched.is_empty() {
        return Err(Error::invalid("no distances to histogram"));
    }
    if let Some(bad) = matched.iter().chain(unmatched).find(|d| !(**d >= 0.0 && d.is_finite())) {
        return Err(Error::invalid(format!("invalid distance {bad}")));
    }
    let hi = matched.iter().chain(unmatched).fold(0.0f64, |a, &b| a.max(b));
    let edges: Vec<f64> = (0..=bin_count).map(|i| hi * i as f64 / bin_count as f64).collect();
    let bin = |d: f64| {
        if hi == 0.0 {
            0
        } else {
            ((d / hi * bin_count as f64) as usize).min(bin_count - 1)
        }
    };
    let count = |v: &[f64]| {
        let mut c = vec![0; bin_count];
        for &d in v {
            c[bin(d)] += 1;
        }
        c
    };
    Ok(DistHistogram { edges, matched: count(matched), unmatched: count(unmatched) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn store(rows: &[(u32, [f64; 2])]) -> DescriptorStore<f64> {
        let mut s = DescriptorStore::new(2);
        for (id, r) in rows {
            s.insert(*id, r).unwrap();
        }
        s
    }

    fn q(v: [f64; 2]) -> Descriptor<f64> {
        Descriptor::from_raw(v.to_vec())
    }

    #[test]
    fn identical_queries_recall_one() {
        let refs = store(&[(0, [0.0, 0.0]), (1, [5.0, 0.0]), (2, [0.0, 5.0])]);
        let queries: Vec<_> = refs.iter().map(|(id, r)| (id, q([r[0], r[1]]))).collect();
        let c = topk_percent_recall(&queries, &refs, &[1.0, 50.0, 100.0]).unwrap();
        assert!(c.points.iter().all(|p| p.recall == 1.0));
    }

    #[test]
    fn farthest_truth_only_at_hundred() {
        let refs = store(&[(0, [0.0, 0.0]), (1, [1.0, 0.0]), (2, [2.0, 0.0]), (3, [9.0, 0.0])]);
        let queries = vec![(3, q([0.0, 0.0])), (3, q([0.5, 0.0]))];
        let c = topk_percent_recall(&queries, &refs, &[25.0, 50.0, 75.0, 100.0]).unwrap();
        assert_eq!(c.points.iter().map(|p| p.recall).collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn ties_resolve_to_smaller_id() {
        let refs = store(&[(4, [1.0, 0.0]), (7, [-1.0, 0.0])]);
        assert_eq!(truth_rank(&[0.0, 0.0], 4, &refs).unwrap(), 1);
        assert_eq!(truth_rank(&[0.0, 0.0], 7, &refs).unwrap(), 2);
    }

    #[test]
    fn missing_truth_rejected() {
        let refs = store(&[(0, [0.0, 0.0])]);
        assert!(topk_percent_recall(&[(9, q([0.0, 0.0]))], &refs, &[100.0]).is_err());
        assert!(topk_percent_recall(&[(0, q([0.0, 0.0]))], &refs, &[0.0]).is_err());
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(cutoff(1.0, 5000), 50);
        assert_eq!(cutoff(100.0, 5000), 5000);
        assert_eq!(cutoff(0.01, 100), 1);
        assert_eq!(cutoff(7.0, 100), 7);
        assert_eq!(cutoff(1.5, 1000), 15);
    }

    #[test]
    fn perfect_separation_pr() {
        let c = precision_recall_curve(&[0.0; 4], &[10.0; 4], &[5.0]);
        assert_eq!(c.points[0], PrPoint { threshold: 5.0, precision: 1.0, recall: 1.0 });
    }

    #[test]
    fn below_everything_pr() {
        let c = precision_recall_curve(&[1.0, 2.0], &[3.0], &[0.5]);
        assert_eq!(c.points[0].recall, 0.0);
        assert_eq!(c.points[0].precision, 1.0);
    }

    #[test]
    fn pr_matches_counting_oracle() {
        use rand::{Rng, SeedableRng};
        use rand_distr::Normal;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m: Vec<f64> = (0..300).map(|_| rng.sample::<f64, _>(Normal::new(10.0, 3.0).unwrap()).abs()).collect();
        let u: Vec<f64> = (0..300).map(|_| rng.sample::<f64, _>(Normal::new(16.0, 3.0).unwrap()).abs()).collect();
        let ts = even_thresholds(&m, &u, 40);
        let c = precision_recall_curve(&m, &u, &ts);
        for p in &c.points {
            let tp = m.iter().filter(|&&d| d <= p.threshold).count() as f64;
            let fp = u.iter().filter(|&&d| d <= p.threshold).count() as f64;
            let prec = if tp + fp == 0.0 { 1.0 } else { tp / (tp + fp) };
            assert_eq!(p.precision, prec);
            assert_eq!(p.recall, tp / m.len() as f64);
        }
    }

    #[test]
    fn histogram_basics() {
        let h = distance_histograms(&[1.0], &[], 1).unwrap();
        assert_eq!((h.matched[0], h.unmatched[0]), (1, 0));
        let a = distance_histograms(&[1.0, 2.0, 3.0], &[2.5, 7.0], 4).unwrap();
        let b = distance_histograms(&[1.0, 2.0, 3.0], &[2.5, 7.0], 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.edges, vec![0.0, 1.75, 3.5, 5.25, 7.0]);
        assert_eq!(a.matched, vec![1, 2, 0, 0]);
        assert_eq!(a.unmatched, vec![0, 1, 0, 1]);
        assert!(distance_histograms(&[], &[], 3).is_err());
        assert!(distance_histograms(&[1.0], &[], 0).is_err());
    }

    proptest! {
        #[test]
        fn pr_recall_monotone(
            m in prop::collection::vec(0.0f64..50.0, 1..60),
            u in prop::collection::vec(0.0f64..50.0, 1..60),
        ) {
            let ts = even_thresholds(&m, &u, 25);
            let c = precision_recall_curve(&m, &u, &ts);
            for w in c.points.windows(2) {
                prop_assert!(w[1].recall >= w[0].recall);
            }
        }

        #[test]
        fn histogram_conserves_counts(
            m in prop::collection::vec(0.0f64..50.0, 0..60),
            u in prop::collection::vec(0.0f64..50.0, 1..60),
            bins in 1usize..30,
        ) {
            let h = distance_histograms(&m, &u, bins).unwrap();
            prop_assert_eq!(h.matched.iter().sum::<usize>(), m.len());
            prop_assert_eq!(h.unmatched.iter().sum::<usize>(), u.len());
        }
    }
}
