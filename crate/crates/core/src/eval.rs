//! Retrieval metrics, precision-recall curves and the LSH baseline.

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};

use crate::data::{seeded_rng, sq_dist, streams, Dataset, NeighborMode, QueryNeighborhood};
use crate::error::{shape, Error, Result};
use crate::hashcore::{rank_codes, HashFunction, HashModel};
use crate::rankloss::{score_auc, score_ndcg, Ranking};
use crate::scalar::{cmp_scalar, Scalar};

fn check_k(ranking: &[usize], k: usize) -> Result<()> {
    if k == 0 || k > ranking.len() {
        return Err(shape(format!(
            "K={k} for a ranking of length {}",
            ranking.len()
        )));
    }
    Ok(())
}

/// Fraction of the top `k` that is relevant.
pub fn precision_at_k(ranking: &[usize], gt: &QueryNeighborhood, k: usize) -> Result<f64> {
    check_k(ranking, k)?;
    let hits = ranking[..k].iter().filter(|&&i| gt.is_relevant(i)).count();
    Ok(hits as f64 / k as f64)
}

/// Mean of the precision at each relevant position, over all relevant rows.
pub fn average_precision(ranking: &[usize], gt: &QueryNeighborhood) -> Result<f64> {
    if gt.relevant.is_empty() {
        return Err(shape("no relevant rows"));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (p, &i) in ranking.iter().enumerate() {
        if gt.is_relevant(i) {
            hits += 1;
            sum += hits as f64 / (p + 1) as f64;
        }
    }
    Ok(sum / gt.relevant.len() as f64)
}

/// `(recall, precision)` after every prefix of the ranking.
pub fn precision_recall_curve(
    ranking: &[usize],
    gt: &QueryNeighborhood,
) -> Result<Vec<(f64, f64)>> {
    if gt.relevant.is_empty() {
        return Err(shape("no relevant rows"));
    }
    let total = gt.relevant.len() as f64;
    let mut hits = 0usize;
    Ok(ranking
        .iter()
        .enumerate()
        .map(|(p, &i)| {
            hits += gt.is_relevant(i) as usize;
            (hits as f64 / total, hits as f64 / (p + 1) as f64)
        })
        .collect())
}

/// Random-projection hashing: Gaussian hyperplanes through the origin.
pub fn lsh_baseline<F: Scalar>(dim: usize, bits: usize, seed: u64) -> Result<HashModel<F>> {
    if dim == 0 {
        return Err(Error::Config("LSH needs a positive dimension".into()));
    }
    let mut rng = seeded_rng(seed, streams::LSH);
    let functions = (0..bits)
        .map(|_| {
            let v = (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    F::c(z)
                })
                .collect();
            HashFunction::new(v, F::zero())
        })
        .collect::<Result<_>>()?;
    HashModel::new(functions, vec![F::one(); bits], "lsh", "none")
}

/// Ground truth of each query row against every database row: same label,
/// or within the closest `percentile` fraction by Euclidean distance.
/// Candidate indices refer to database rows.
pub fn cross_ground_truth<F: Scalar>(
    queries: &Dataset<F>,
    db: &Dataset<F>,
    mode: NeighborMode,
    percentile: f64,
) -> Result<Vec<QueryNeighborhood>> {
    if queries.dim() != db.dim() {
        return Err(shape(format!(
            "query dimension {} vs database {}",
            queries.dim(),
            db.dim()
        )));
    }
    let labels = match mode {
        NeighborMode::Label => {
            let missing =
                || Error::Config("label ground truth needs labelled queries and database".into());
            Some((
                queries.labels().ok_or_else(missing)?,
                db.labels().ok_or_else(missing)?,
            ))
        }
        NeighborMode::L2Percentile => {
            if !(percentile > 0.0 && percentile < 1.0) {
                return Err(Error::Config(format!(
                    "percentile must lie in (0, 1), got {percentile}"
                )));
            }
            None
        }
    };
    (0..queries.len())
        .map(|q| {
            let (relevant, irrelevant): (Vec<usize>, Vec<usize>) = match labels {
                Some((ql, dl)) => (0..db.len()).partition(|&j| dl[j] == ql[q]),
                None => {
                    let x = queries.row(q);
                    let mut by_dist: Vec<(F, usize)> =
                        (0..db.len()).map(|j| (sq_dist(x, db.row(j)), j)).collect();
                    by_dist.sort_by(|a, b| cmp_scalar(a.0, b.0).then(a.1.cmp(&b.1)));
                    let count = crate::data::percentile_count(percentile, db.len());
                    let mut rel: Vec<usize> = by_dist[..count].iter().map(|p| p.1).collect();
                    let mut irr: Vec<usize> = by_dist[count..].iter().map(|p| p.1).collect();
                    rel.sort_unstable();
                    irr.sort_unstable();
                    (rel, irr)
                }
            };
            if relevant.is_empty() || irrelevant.is_empty() {
                return Err(Error::Config(format!(
                    "query {q} has no relevant or no irrelevant database row"
                )));
            }
            Ok(QueryNeighborhood {
                query: q,
                relevant,
                irrelevant,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub bits: usize,
    pub metric: String,
    pub k: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
    /// Mean `(recall, precision)` across queries at each prefix length.
    pub pr_curve: Vec<(f64, f64)>,
}

impl MetricsReport {
    pub fn get(&self, metric: &str, k: Option<usize>) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.k == k)
            .map(|r| r.value)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "method,bits,metric,K,value")?;
        for r in &self.rows {
            let k = r.k.map(|k| k.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                r.method, r.bits, r.metric, k, r.value
            )?;
        }
        Ok(())
    }

    pub fn write_pr_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "prefix,recall,precision")?;
        for (i, (r, p)) in self.pr_curve.iter().enumerate() {
            writeln!(out, "{},{r},{p}", i + 1)?;
        }
        Ok(())
    }
}

/// Encodes both sets, ranks each query's candidates (relevant and
/// irrelevant database rows) by weighted Hamming distance and averages
/// NDCG@K, Prec@K, AP and AUC over queries.
pub fn evaluate<F: Scalar>(
    model: &HashModel<F>,
    queries: &Dataset<F>,
    db: &Dataset<F>,
    gt: &[QueryNeighborhood],
    ks: &[usize],
) -> Result<MetricsReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config(
            "K values must be positive and non-empty".into(),
        ));
    }
    let mut covered = vec![false; queries.len()];
    for g in gt {
        let slot = covered
            .get_mut(g.query)
            .ok_or_else(|| Error::Config(format!("ground truth for unknown query {}", g.query)))?;
        *slot = true;
        if g.relevant
            .iter()
            .chain(&g.irrelevant)
            .any(|&j| j >= db.len())
        {
            return Err(shape(format!(
                "query {}: candidate outside the database",
                g.query
            )));
        }
    }
    if let Some(q) = covered.iter().position(|c| !c) {
        return Err(Error::Config(format!("no ground truth for query {q}")));
    }
    let db_codes = model.encode_dataset(db)?;
    let q_codes = model.encode_dataset(queries)?;

    let n = gt.len() as f64;
    let mut ndcg = vec![0.0; ks.len()];
    let mut prec = vec![0.0; ks.len()];
    let (mut ap, mut auc) = (0.0, 0.0);
    let mut pr_sum: Vec<(f64, f64)> = Vec::new();
    let mut pr_count: Vec<usize> = Vec::new();
    for g in gt {
        let order = rank_codes(&model.weights, &q_codes[g.query], &db_codes)?;
        let ranking: Vec<usize> = order
            .into_iter()
            .filter(|&j| g.is_relevant(j) || g.irrelevant.binary_search(&j).is_ok())
            .collect();
        for (i, &k) in ks.iter().enumerate() {
            let k = k.min(ranking.len());
            prec[i] += precision_at_k(&ranking, g, k)?;
            ndcg[i] += score_ndcg::<f64>(&Ranking::new(ranking.clone()), g, k)?;
        }
        ap += average_precision(&ranking, g)?;
        auc += score_auc::<f64>(&Ranking::new(ranking.clone()), g)?;
        let curve = precision_recall_curve(&ranking, g)?;
        if curve.len() > pr_sum.len() {
            pr_sum.resize(curve.len(), (0.0, 0.0));
            pr_count.resize(curve.len(), 0);
        }
        for ((s, c), (r, p)) in pr_sum.iter_mut().zip(pr_count.iter_mut()).zip(curve) {
            s.0 += r;
            s.1 += p;
            *c += 1;
        }
    }

    let row = |metric: &str, k: Option<usize>, value: f64| MetricRow {
        method: model.method.clone(),
        bits: model.bits(),
        metric: metric.to_string(),
        k,
        value,
    };
    let mut rows = Vec::with_capacity(2 * ks.len() + 2);
    for (i, &k) in ks.iter().enumerate() {
        rows.push(row("ndcg", Some(k), ndcg[i] / n));
    }
    for (i, &k) in ks.iter().enumerate() {
        rows.push(row("precision", Some(k), prec[i] / n));
    }
    rows.push(row("map", None, ap / n));
    rows.push(row("auc", None, auc / n));
    let pr_curve = pr_sum
        .into_iter()
        .zip(pr_count)
        .map(|((r, p), c)| (r / c as f64, p / c as f64))
        .collect();
    Ok(MetricsReport { rows, pr_curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_clusters, synth_uniform};

    fn gt(rel: &[usize], irr: &[usize]) -> QueryNeighborhood {
        QueryNeighborhood {
            query: 0,
            relevant: rel.to_vec(),
            irrelevant: irr.to_vec(),
        }
    }

    #[test]
    fn precision_examples() {
        let g = gt(&[1, 2, 3], &[4, 5]);
        assert_eq!(precision_at_k(&[1, 2, 3, 4, 5], &g, 3).unwrap(), 1.0);
        assert_eq!(precision_at_k(&[4, 5, 1, 2, 3], &g, 2).unwrap(), 0.0);
        assert_eq!(precision_at_k(&[1, 4, 2, 3, 5], &g, 4).unwrap(), 0.75);
        assert_eq!(precision_at_k(&[4, 1, 5, 2, 3], &g, 5).unwrap(), 3.0 / 5.0);
        assert!(precision_at_k(&[1, 2], &g, 3).is_err());
    }

    #[test]
    fn ap_examples() {
        assert_eq!(
            average_precision(&[1, 2, 4], &gt(&[1, 2], &[4])).unwrap(),
            1.0
        );
        assert_eq!(
            average_precision(&[4, 1, 5], &gt(&[1], &[4, 5])).unwrap(),
            0.5
        );
        let v = average_precision(&[1, 4, 2], &gt(&[1, 2], &[4])).unwrap();
        assert!((v - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn pr_curve_examples() {
        let c = precision_recall_curve(&[1, 2, 4], &gt(&[1, 2], &[4])).unwrap();
        assert_eq!(c[1], (1.0, 1.0));
        let c = precision_recall_curve(&[4, 1, 5, 2], &gt(&[1, 2], &[4, 5])).unwrap();
        assert_eq!(c[0], (0.0, 0.0));
        assert_eq!(c.len(), 4);
        assert!(c.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn lsh_shape_and_determinism() {
        let m: HashModel<f64> = lsh_baseline(5, 16, 3).unwrap();
        assert_eq!(m.bits(), 16);
        assert!(m.weights.iter().all(|&w| w == 1.0));
        assert!(m.functions.iter().all(|h| h.b == 0.0));
        assert_eq!(m, lsh_baseline(5, 16, 3).unwrap());
        assert_ne!(m, lsh_baseline(5, 16, 4).unwrap());
    }

    #[test]
    fn perfect_model_scores_one() {
        // two labels separated on the first coordinate
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![if i % 2 == 0 { -1.0 } else { 1.0 }, i as f64 * 0.01])
            .collect();
        let labels: Vec<i64> = (0..12).map(|i| i % 2).collect();
        let ds = Dataset::from_rows(rows, Some(labels)).unwrap();
        let h = HashFunction::new(vec![1.0, 0.0], 0.0).unwrap();
        let model = HashModel::new(vec![h], vec![1.0], "oracle", "none").unwrap();
        let g = cross_ground_truth(&ds, &ds, NeighborMode::Label, 0.02).unwrap();
        let ks = [1, 3, 6];
        let r = evaluate(&model, &ds, &ds, &g, &ks).unwrap();
        assert_eq!(r.rows.len(), 2 * ks.len() + 2);
        for row in &r.rows {
            assert!((row.value - 1.0).abs() < 1e-12, "{row:?}");
        }
        let full = evaluate(&model, &ds, &ds, &g, &[12]).unwrap();
        assert!((full.get("precision", Some(12)).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn metrics_stay_in_unit_interval() {
        let ds: Dataset<f64> = synth_clusters(1, 4, 3, 20, 1.0).unwrap();
        let model = lsh_baseline(4, 8, 2).unwrap();
        let g = cross_ground_truth(&ds, &ds, NeighborMode::L2Percentile, 0.1).unwrap();
        let r = evaluate(&model, &ds, &ds, &g, &[1, 5, 100]).unwrap();
        assert!(r.rows.iter().all(|row| (0.0..=1.0).contains(&row.value)));
        assert_eq!(r, evaluate(&model, &ds, &ds, &g, &[1, 5, 100]).unwrap());
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("method,bits,metric,K,value\n"));
        assert!(text.contains("lsh,8,map,,"));
    }

    #[test]
    fn missing_ground_truth_is_config_error() {
        let ds: Dataset<f64> = synth_uniform(1, 3, 10, 2).unwrap();
        let model = lsh_baseline(3, 4, 1).unwrap();
        let mut g = cross_ground_truth(&ds, &ds, NeighborMode::L2Percentile, 0.2).unwrap();
        g.pop();
        assert!(matches!(
            evaluate(&model, &ds, &ds, &g, &[1]),
            Err(Error::Config(_))
        ));
    }
}
