//! Ranking scores (AUC, NDCG, SNDCG), their label losses and exact
//! loss-augmented inference.
//!
//! Candidate scores are passed as one slice laid out as the query's relevant
//! rows (in `gt.relevant` order) followed by its irrelevant rows. A score is
//! `s_j = wᵀφ(x_i, x_j)`, larger meaning closer.
//!
//! Inference maximizes `Δ(y) − (2/(PN))·Σ_{(j,k) flipped in y} (s_j − s_k)`,
//! where a flipped pair has irrelevant `k` ranked above relevant `j`.

use std::cmp::Ordering;

use crate::data::QueryNeighborhood;
use crate::error::{shape, Error, Result};
use crate::scalar::{cmp_scalar, Scalar};

/// A full ranking of one query's candidates, by row index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    pub order: Vec<usize>,
}

impl Ranking {
    pub fn new(order: Vec<usize>) -> Self {
        Self { order }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Checks that `order` is a permutation of the candidates of `gt`.
    pub fn validate(&self, gt: &QueryNeighborhood) -> Result<()> {
        if self.order.len() != gt.n_candidates() {
            return Err(shape(format!(
                "ranking of length {} for {} candidates",
                self.order.len(),
                gt.n_candidates()
            )));
        }
        let mut seen = self.order.clone();
        seen.sort_unstable();
        let mut want: Vec<usize> = gt.relevant.iter().chain(&gt.irrelevant).copied().collect();
        want.sort_unstable();
        if seen != want {
            return Err(shape(
                "ranking does not cover the query's candidates exactly once",
            ));
        }
        Ok(())
    }

    /// Relevant first, then irrelevant.
    pub fn truth(gt: &QueryNeighborhood) -> Self {
        Self::new(gt.relevant.iter().chain(&gt.irrelevant).copied().collect())
    }
}

/// One relevant row interleaved with all irrelevant rows: `above` lists the
/// irrelevant rows ranked ahead of it, the rest follow it in ascending row
/// order. Only the set above matters to scores and features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleRanking {
    pub relevant: usize,
    pub above: Vec<usize>,
}

impl SimpleRanking {
    /// Builds from an explicit order of the relevant row and all irrelevant rows.
    pub fn from_order(relevant: usize, order: &[usize]) -> Result<Self> {
        let p = order
            .iter()
            .position(|&x| x == relevant)
            .ok_or_else(|| shape(format!("order does not contain row {relevant}")))?;
        Ok(Self {
            relevant,
            above: order[..p].to_vec(),
        })
    }

    /// 1-based position of the relevant row.
    pub fn position(&self) -> usize {
        self.above.len() + 1
    }

    pub fn order(&self, gt: &QueryNeighborhood) -> Vec<usize> {
        let mut out = self.above.clone();
        out.push(self.relevant);
        let mut above = self.above.clone();
        above.sort_unstable();
        out.extend(
            gt.irrelevant
                .iter()
                .filter(|k| above.binary_search(k).is_err()),
        );
        out
    }

    fn validate(&self, gt: &QueryNeighborhood) -> Result<()> {
        if !gt.is_relevant(self.relevant) {
            return Err(shape(format!(
                "row {} is not relevant to the query",
                self.relevant
            )));
        }
        let mut seen = self.above.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1])
            || seen
                .iter()
                .any(|&k| gt.irrelevant.binary_search(&k).is_err())
        {
            return Err(shape(
                "simple ranking must place distinct irrelevant rows above its relevant row",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankScoreKind {
    Auc,
    /// Cutoffs above the ranking length act as the full length.
    Ndcg {
        k: usize,
    },
    Sndcg,
}

impl RankScoreKind {
    pub fn tag(&self) -> String {
        match self {
            RankScoreKind::Auc => "auc".into(),
            RankScoreKind::Ndcg { k } => format!("ndcg@{k}"),
            RankScoreKind::Sndcg => "sndcg".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RankScoreKind::Ndcg { k: 0 } => {
                Err(Error::Config("NDCG cutoff must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Output of loss-augmented inference: a full ranking for AUC/NDCG, one
/// simple ranking per relevant row (in `gt.relevant` order) for SNDCG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prediction {
    Full(Ranking),
    Simple(Vec<SimpleRanking>),
}

/// Per-candidate flip counts of a prediction: for each relevant row the
/// number of irrelevant rows ranked above it, for each irrelevant row the
/// number of relevant rows ranked below it. Aligned with `gt.relevant` and
/// `gt.irrelevant`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlipCounts {
    pub relevant: Vec<u32>,
    pub irrelevant: Vec<u32>,
}

impl FlipCounts {
    pub fn total(&self) -> u64 {
        self.relevant.iter().map(|&c| c as u64).sum()
    }
}

fn slot(sorted: &[usize], idx: usize) -> Option<usize> {
    sorted.binary_search(&idx).ok()
}

impl Prediction {
    /// The ground-truth ordering for `kind`.
    pub fn truth(kind: RankScoreKind, gt: &QueryNeighborhood) -> Self {
        match kind {
            RankScoreKind::Sndcg => Prediction::Simple(
                gt.relevant
                    .iter()
                    .map(|&r| SimpleRanking {
                        relevant: r,
                        above: Vec::new(),
                    })
                    .collect(),
            ),
            _ => Prediction::Full(Ranking::truth(gt)),
        }
    }

    /// Every irrelevant row ahead of every relevant row.
    pub fn reversed(kind: RankScoreKind, gt: &QueryNeighborhood) -> Self {
        match kind {
            RankScoreKind::Sndcg => Prediction::Simple(
                gt.relevant
                    .iter()
                    .map(|&r| SimpleRanking {
                        relevant: r,
                        above: gt.irrelevant.clone(),
                    })
                    .collect(),
            ),
            _ => Prediction::Full(Ranking::new(
                gt.irrelevant.iter().chain(&gt.relevant).copied().collect(),
            )),
        }
    }

    pub fn flip_counts(&self, gt: &QueryNeighborhood) -> Result<FlipCounts> {
        let mut counts = FlipCounts {
            relevant: vec![0; gt.relevant.len()],
            irrelevant: vec![0; gt.irrelevant.len()],
        };
        match self {
            Prediction::Full(y) => {
                y.validate(gt)?;
                let p = gt.relevant.len() as u32;
                let (mut rel_seen, mut irr_seen) = (0u32, 0u32);
                for &idx in &y.order {
                    if let Some(s) = slot(&gt.relevant, idx) {
                        counts.relevant[s] = irr_seen;
                        rel_seen += 1;
                    } else if let Some(s) = slot(&gt.irrelevant, idx) {
                        counts.irrelevant[s] = p - rel_seen;
                        irr_seen += 1;
                    }
                }
            }
            Prediction::Simple(list) => {
                if list.len() != gt.relevant.len() {
                    return Err(shape(format!(
                        "{} simple rankings for {} relevant rows",
                        list.len(),
                        gt.relevant.len()
                    )));
                }
                for (s, (sr, &r)) in list.iter().zip(&gt.relevant).enumerate() {
                    if sr.relevant != r {
                        return Err(shape("simple rankings must follow the relevant-row order"));
                    }
                    sr.validate(gt)?;
                    for &idx in &sr.above {
                        counts.relevant[s] += 1;
                        counts.irrelevant[slot(&gt.irrelevant, idx).expect("validated")] += 1;
                    }
                }
            }
        }
        Ok(counts)
    }
}

/// Fraction of relevant/irrelevant pairs ordered correctly.
pub fn score_auc<F: Scalar>(y: &Ranking, gt: &QueryNeighborhood) -> Result<F> {
    let counts = Prediction::Full(y.clone()).flip_counts(gt)?;
    let pairs = gt.relevant.len() * gt.irrelevant.len();
    Ok(F::one() - F::from_count(counts.total() as usize) / F::from_count(pairs))
}

/// NDCG position discount: `S(1) = 1`, `S(i) = 1/log₂ i` up to `k`, 0 beyond.
pub fn ndcg_discount<F: Scalar>(i: usize, k: usize) -> F {
    if i == 0 || i > k {
        F::zero()
    } else if i == 1 {
        F::one()
    } else {
        F::one() / F::from_count(i).log2()
    }
}

/// SNDCG position discount `1/log₂(1 + j)`.
pub fn sndcg_discount<F: Scalar>(j: usize) -> F {
    F::one() / F::from_count(j + 1).log2()
}

fn ndcg_norm<F: Scalar>(k: usize) -> F {
    (1..=k).map(|i| ndcg_discount::<F>(i, k)).sum()
}

/// `Σ_{i≤K} S(i)·[y(i) relevant] / Σ_{i≤K} S(i)`; `k` is clamped to the
/// ranking length.
pub fn score_ndcg<F: Scalar>(y: &Ranking, gt: &QueryNeighborhood, k: usize) -> Result<F> {
    if k == 0 {
        return Err(Error::Config("NDCG cutoff must be at least 1".into()));
    }
    y.validate(gt)?;
    let k = k.min(y.len());
    let gain: F = y
        .order
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &idx)| gt.is_relevant(idx))
        .map(|(p, _)| ndcg_discount::<F>(p + 1, k))
        .sum();
    Ok(gain / ndcg_norm(k))
}

/// Mean over relevant rows of `1/log₂(1 + position)` in their simple ranking.
pub fn score_sndcg<F: Scalar>(rankings: &[SimpleRanking], gt: &QueryNeighborhood) -> Result<F> {
    if rankings.len() != gt.relevant.len() {
        return Err(shape(format!(
            "{} simple rankings for {} relevant rows",
            rankings.len(),
            gt.relevant.len()
        )));
    }
    let mut covered = vec![false; gt.relevant.len()];
    let mut total = F::zero();
    for sr in rankings {
        sr.validate(gt)?;
        let s = slot(&gt.relevant, sr.relevant).expect("validated");
        if std::mem::replace(&mut covered[s], true) {
            return Err(shape(format!(
                "relevant row {} has two simple rankings",
                sr.relevant
            )));
        }
        total += sndcg_discount(sr.position());
    }
    Ok(total / F::from_count(rankings.len()))
}

/// `1 − score` for the prediction under `kind`.
pub fn label_loss<F: Scalar>(
    kind: RankScoreKind,
    y: &Prediction,
    gt: &QueryNeighborhood,
) -> Result<F> {
    kind.validate()?;
    let score: F = match (kind, y) {
        (RankScoreKind::Auc, Prediction::Full(r)) => score_auc(r, gt)?,
        (RankScoreKind::Ndcg { k }, Prediction::Full(r)) => score_ndcg(r, gt, k)?,
        (RankScoreKind::Sndcg, Prediction::Simple(s)) => score_sndcg(s, gt)?,
        _ => {
            return Err(shape(format!(
                "prediction shape does not match {}",
                kind.tag()
            )))
        }
    };
    Ok(F::one() - score)
}

fn check_scores<F: Scalar>(scores: &[F], gt: &QueryNeighborhood) -> Result<()> {
    if scores.len() != gt.n_candidates() {
        return Err(shape(format!(
            "{} scores for {} candidates",
            scores.len(),
            gt.n_candidates()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite candidate score".into()));
    }
    Ok(())
}

/// `(2/(PN))·Σ_{flipped (j,k)} (s_j − s_k)` from flip counts.
pub fn margin_term<F: Scalar>(counts: &FlipCounts, scores: &[F], p: usize) -> F {
    let n = counts.irrelevant.len();
    let rel: F = counts
        .relevant
        .iter()
        .zip(&scores[..p])
        .map(|(&c, &s)| F::from_count(c as usize) * s)
        .sum();
    let irr: F = counts
        .irrelevant
        .iter()
        .zip(&scores[p..])
        .map(|(&c, &s)| F::from_count(c as usize) * s)
        .sum();
    F::c(2.0) * (rel - irr) / F::from_count(p * n)
}

/// Loss-augmented objective `Δ(y) − wᵀδΨ(y)` of a prediction.
pub fn augmented_objective<F: Scalar>(
    kind: RankScoreKind,
    y: &Prediction,
    scores: &[F],
    gt: &QueryNeighborhood,
) -> Result<F> {
    check_scores(scores, gt)?;
    let delta = label_loss::<F>(kind, y, gt)?;
    let counts = y.flip_counts(gt)?;
    Ok(delta - margin_term(&counts, scores, gt.relevant.len()))
}

/// Candidate slots of one group sorted by descending score, ties by row index.
fn sorted_group<F: Scalar>(rows: &[usize], scores: &[F]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&a, &b| cmp_scalar(scores[b], scores[a]).then(rows[a].cmp(&rows[b])));
    idx
}

/// Sort by score with every relevant score lowered by 1/2; ties put relevant
/// rows first, then ascending row index.
pub fn most_violated_auc<F: Scalar>(scores: &[F], gt: &QueryNeighborhood) -> Result<Ranking> {
    check_scores(scores, gt)?;
    let p = gt.relevant.len();
    let half = F::c(0.5);
    let mut items: Vec<(F, bool, usize)> = gt
        .relevant
        .iter()
        .zip(&scores[..p])
        .map(|(&r, &s)| (s - half, true, r))
        .chain(
            gt.irrelevant
                .iter()
                .zip(&scores[p..])
                .map(|(&r, &s)| (s, false, r)),
        )
        .collect();
    items.sort_by(|a, b| {
        cmp_scalar(b.0, a.0)
            .then_with(|| b.1.cmp(&a.1))
            .then(a.2.cmp(&b.2))
    });
    Ok(Ranking::new(items.into_iter().map(|t| t.2).collect()))
}

/// Merges the descending-score relevant and irrelevant lists by dynamic
/// programming over `(relevant placed, irrelevant placed)`.
pub fn most_violated_ndcg<F: Scalar>(
    scores: &[F],
    gt: &QueryNeighborhood,
    k: usize,
) -> Result<Ranking> {
    if k == 0 {
        return Err(Error::Config("NDCG cutoff must be at least 1".into()));
    }
    check_scores(scores, gt)?;
    let p = gt.relevant.len();
    let n = gt.irrelevant.len();
    let k = k.min(p + n);
    let rel = sorted_group(&gt.relevant, &scores[..p]);
    let irr = sorted_group(&gt.irrelevant, &scores[p..]);
    let pn = F::from_count(p * n);
    let z: F = ndcg_norm(k);

    // best[a][b]: best value of placing the remaining candidates after a
    // relevant and b irrelevant rows are placed
    let w = n + 1;
    let mut best = vec![F::zero(); (p + 1) * w];
    let mut take_rel = vec![false; (p + 1) * w];
    for a in (0..=p).rev() {
        for b in (0..=n).rev() {
            if a == p && b == n {
                continue;
            }
            let pos = a + b + 1;
            let rel_val = (a < p).then(|| {
                let s = scores[rel[a]];
                let margin = s * F::from_count(n) - s * F::c(2.0) * F::from_count(b);
                -ndcg_discount::<F>(pos, k) / z + margin / pn + best[(a + 1) * w + b]
            });
            let irr_val = (b < n).then(|| {
                let s = scores[p + irr[b]];
                let margin = s * F::from_count(p) - s * F::c(2.0) * F::from_count(a);
                margin / pn + best[a * w + b + 1]
            });
            let (val, pick_rel) = match (rel_val, irr_val) {
                (Some(r), Some(i)) => {
                    if r >= i {
                        (r, true)
                    } else {
                        (i, false)
                    }
                }
                (Some(r), None) => (r, true),
                (None, Some(i)) => (i, false),
                (None, None) => unreachable!(),
            };
            best[a * w + b] = val;
            take_rel[a * w + b] = pick_rel;
        }
    }
    let mut order = Vec::with_capacity(p + n);
    let (mut a, mut b) = (0, 0);
    while a < p || b < n {
        if take_rel[a * w + b] {
            order.push(gt.relevant[rel[a]]);
            a += 1;
        } else {
            order.push(gt.irrelevant[irr[b]]);
            b += 1;
        }
    }
    Ok(Ranking::new(order))
}

/// Objective contribution of placing relevant score `s_rel` below the top
/// `t` irrelevant rows (`prefix` holds their score sum).
fn sndcg_contribution<F: Scalar>(t: usize, s_rel: F, prefix: F, p: usize, n: usize) -> F {
    let gain = (F::one() - sndcg_discount::<F>(t + 1)) / F::from_count(p);
    gain - F::c(2.0) * (F::from_count(t) * s_rel - prefix) / F::from_count(p * n)
}

/// Each relevant row independently goes below the `t` highest-scoring
/// irrelevant rows, `t` chosen to maximize its term. The term is concave in
/// `t`, so the scan stops at the first non-improving step.
pub fn most_violated_sndcg<F: Scalar>(
    scores: &[F],
    gt: &QueryNeighborhood,
) -> Result<Vec<SimpleRanking>> {
    check_scores(scores, gt)?;
    let p = gt.relevant.len();
    let n = gt.irrelevant.len();
    let irr = sorted_group(&gt.irrelevant, &scores[p..]);
    let sorted_irr: Vec<usize> = irr.iter().map(|&s| gt.irrelevant[s]).collect();
    let mut out = Vec::with_capacity(p);
    for (a, &r) in gt.relevant.iter().enumerate() {
        let s = scores[a];
        let mut t = 0;
        let mut prefix = F::zero();
        let mut value = F::zero();
        while t < n {
            let next_prefix = prefix + scores[p + irr[t]];
            let next = sndcg_contribution(t + 1, s, next_prefix, p, n);
            if next <= value {
                break;
            }
            value = next;
            prefix = next_prefix;
            t += 1;
        }
        out.push(SimpleRanking {
            relevant: r,
            above: sorted_irr[..t].to_vec(),
        });
    }
    Ok(out)
}

/// Dispatches to the inference routine for `kind`.
pub fn most_violated<F: Scalar>(
    kind: RankScoreKind,
    scores: &[F],
    gt: &QueryNeighborhood,
) -> Result<Prediction> {
    Ok(match kind {
        RankScoreKind::Auc => Prediction::Full(most_violated_auc(scores, gt)?),
        RankScoreKind::Ndcg { k } => Prediction::Full(most_violated_ndcg(scores, gt, k)?),
        RankScoreKind::Sndcg => Prediction::Simple(most_violated_sndcg(scores, gt)?),
    })
}

/// Largest candidate count accepted by [`brute_force_most_violated`].
pub const BRUTE_FORCE_LIMIT: usize = 12;

/// Exhaustive inference: every interleaving of the descending-score sorted
/// relevant and irrelevant lists (AUC, NDCG), or every insertion position of
/// each relevant row (SNDCG). Returns the best prediction and its objective;
/// ties keep the first found, which enumerates relevant-first orders first.
pub fn brute_force_most_violated<F: Scalar>(
    scores: &[F],
    gt: &QueryNeighborhood,
    kind: RankScoreKind,
) -> Result<(Prediction, F)> {
    kind.validate()?;
    check_scores(scores, gt)?;
    if gt.n_candidates() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!(
            "{} candidates exceed the brute-force limit of {BRUTE_FORCE_LIMIT}",
            gt.n_candidates()
        )));
    }
    let p = gt.relevant.len();
    let n = gt.irrelevant.len();
    let rel: Vec<usize> = sorted_group(&gt.relevant, &scores[..p])
        .into_iter()
        .map(|s| gt.relevant[s])
        .collect();
    let irr: Vec<usize> = sorted_group(&gt.irrelevant, &scores[p..])
        .into_iter()
        .map(|s| gt.irrelevant[s])
        .collect();

    match kind {
        RankScoreKind::Sndcg => {
            let mut list = Vec::with_capacity(p);
            for &r in &gt.relevant {
                let mut best: Option<(SimpleRanking, F)> = None;
                for t in 0..=n {
                    let sr = SimpleRanking {
                        relevant: r,
                        above: irr[..t].to_vec(),
                    };
                    let v = simple_term(&sr, scores, gt);
                    if best.as_ref().is_none_or(|b| v > b.1) {
                        best = Some((sr, v));
                    }
                }
                list.push(best.expect("n + 1 >= 1 candidates").0);
            }
            let y = Prediction::Simple(list);
            let v = augmented_objective(kind, &y, scores, gt)?;
            Ok((y, v))
        }
        _ => {
            let mut best: Option<(Prediction, F)> = None;
            // bit a of `mask` set: relevant at position a (n+p choose p masks)
            let total = p + n;
            let mut masks: Vec<u32> = (0u32..(1 << total))
                .filter(|m| m.count_ones() as usize == p)
                .collect();
            masks.sort_by_key(|m| std::cmp::Reverse(m.reverse_bits()));
            for m in masks {
                let (mut a, mut b) = (0, 0);
                let order = (0..total)
                    .map(|pos| {
                        if m >> pos & 1 == 1 {
                            a += 1;
                            rel[a - 1]
                        } else {
                            b += 1;
                            irr[b - 1]
                        }
                    })
                    .collect();
                let y = Prediction::Full(Ranking::new(order));
                let v = augmented_objective(kind, &y, scores, gt)?;
                if best
                    .as_ref()
                    .is_none_or(|bst| cmp_scalar(v, bst.1) == Ordering::Greater)
                {
                    best = Some((y, v));
                }
            }
            Ok(best.expect("at least one interleaving"))
        }
    }
}

/// One relevant row's share of the SNDCG objective.
fn simple_term<F: Scalar>(sr: &SimpleRanking, scores: &[F], gt: &QueryNeighborhood) -> F {
    let p = gt.relevant.len();
    let n = gt.irrelevant.len();
    let s_rel = scores[slot(&gt.relevant, sr.relevant).expect("relevant row")];
    let above: F = sr
        .above
        .iter()
        .map(|&x| scores[p + slot(&gt.irrelevant, x).expect("irrelevant row")])
        .sum();
    sndcg_contribution(sr.position() - 1, s_rel, above, p, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(p: usize, n: usize) -> QueryNeighborhood {
        QueryNeighborhood::new(100, (0..p).collect(), (p..p + n).collect()).unwrap()
    }

    #[test]
    fn auc_examples() {
        let g = gt(2, 2);
        assert_eq!(score_auc::<f64>(&Ranking::truth(&g), &g).unwrap(), 1.0);
        assert_eq!(
            score_auc::<f64>(&Ranking::new(vec![0, 2, 1, 3]), &g).unwrap(),
            0.75
        );
        assert_eq!(
            score_auc::<f64>(&Ranking::new(vec![2, 3, 0, 1]), &g).unwrap(),
            0.0
        );
        assert!(score_auc::<f64>(&Ranking::new(vec![0, 1, 2]), &g).is_err());
        assert!(score_auc::<f64>(&Ranking::new(vec![0, 1, 2, 2]), &g).is_err());
    }

    #[test]
    fn ndcg_examples() {
        let g = gt(2, 3);
        let y = Ranking::new(vec![0, 2, 1, 3, 4]);
        let v: f64 = score_ndcg(&y, &g, 3).unwrap();
        let expect = (1.0 + 1.0 / 3f64.log2()) / (1.0 + 1.0 + 1.0 / 3f64.log2());
        assert!((v - expect).abs() < 1e-12);
        let l: f64 = label_loss(RankScoreKind::Ndcg { k: 3 }, &Prediction::Full(y), &g).unwrap();
        assert!((l - (1.0 - expect)).abs() < 1e-12);

        let g = gt(3, 2);
        assert_eq!(score_ndcg::<f64>(&Ranking::truth(&g), &g, 3).unwrap(), 1.0);
        assert_eq!(
            score_ndcg::<f64>(&Ranking::new(vec![3, 4, 0, 1, 2]), &g, 2).unwrap(),
            0.0
        );
    }

    #[test]
    fn sndcg_examples() {
        let g = gt(1, 2);
        let sr = SimpleRanking::from_order(0, &[1, 0, 2]).unwrap();
        assert_eq!(sr.order(&g), vec![1, 0, 2]);
        let v: f64 = score_sndcg(&[sr], &g).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);

        let g = gt(2, 4);
        let Prediction::Simple(first) = Prediction::truth(RankScoreKind::Sndcg, &g) else {
            unreachable!()
        };
        assert_eq!(score_sndcg::<f64>(&first, &g).unwrap(), 1.0);
        let Prediction::Simple(last) = Prediction::reversed(RankScoreKind::Sndcg, &g) else {
            unreachable!()
        };
        let v: f64 = score_sndcg(&last, &g).unwrap();
        assert!((v - 1.0 / 6f64.log2()).abs() < 1e-12);
        assert!(score_sndcg::<f64>(&last[..1], &g).is_err());
    }

    #[test]
    fn label_losses_at_extremes() {
        let g = gt(3, 3);
        for kind in [
            RankScoreKind::Auc,
            RankScoreKind::Ndcg { k: 3 },
            RankScoreKind::Sndcg,
        ] {
            assert_eq!(
                label_loss::<f64>(kind, &Prediction::truth(kind, &g), &g).unwrap(),
                0.0
            );
        }
        let rev = Prediction::reversed(RankScoreKind::Auc, &g);
        assert_eq!(
            label_loss::<f64>(RankScoreKind::Auc, &rev, &g).unwrap(),
            1.0
        );
    }

    #[test]
    fn auc_loss_counts_violated_triplets() {
        let g = gt(3, 4);
        let y = Ranking::new(vec![3, 0, 4, 5, 1, 6, 2]);
        let mut violated = 0;
        for &j in &g.relevant {
            for &k in &g.irrelevant {
                let pj = y.order.iter().position(|&x| x == j).unwrap();
                let pk = y.order.iter().position(|&x| x == k).unwrap();
                violated += (pk < pj) as usize;
            }
        }
        let l: f64 = label_loss(RankScoreKind::Auc, &Prediction::Full(y), &g).unwrap();
        assert!((l - violated as f64 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn zero_scores_put_irrelevant_first() {
        let g = gt(2, 3);
        let zeros = vec![0.0f64; 5];
        assert_eq!(
            most_violated_auc(&zeros, &g).unwrap(),
            Ranking::new(vec![2, 3, 4, 0, 1])
        );
        assert_eq!(
            most_violated_ndcg(&zeros, &g, 5).unwrap(),
            Ranking::new(vec![2, 3, 4, 0, 1])
        );
        for sr in most_violated_sndcg(&zeros, &g).unwrap() {
            assert_eq!(sr.position(), 4);
        }
    }

    #[test]
    fn separated_scores_keep_truth() {
        let g = gt(2, 3);
        let s = vec![10.0f64, 9.0, -5.0, -6.0, -7.0];
        for kind in [
            RankScoreKind::Auc,
            RankScoreKind::Ndcg { k: 2 },
            RankScoreKind::Sndcg,
        ] {
            let y = most_violated(kind, &s, &g).unwrap();
            assert_eq!(y, Prediction::truth(kind, &g), "{kind:?}");
            assert_eq!(augmented_objective(kind, &y, &s, &g).unwrap(), 0.0);
        }
    }

    #[test]
    fn ndcg_cutoff_beyond_relevant_count_keeps_constant_loss() {
        // with K > P the true ranking cannot reach score 1
        let g = gt(2, 3);
        let s = vec![10.0f64, 9.0, -5.0, -6.0, -7.0];
        let kind = RankScoreKind::Ndcg { k: 3 };
        let y = most_violated(kind, &s, &g).unwrap();
        assert_eq!(y, Prediction::truth(kind, &g));
        let v: f64 = augmented_objective(kind, &y, &s, &g).unwrap();
        assert!((v - (1.0 - 2.0 / (2.0 + 1.0 / 3f64.log2()))).abs() < 1e-12);
    }

    #[test]
    fn brute_force_limits() {
        let g = gt(1, 1);
        let (_, v) = brute_force_most_violated(&[0.3f64, 0.1], &g, RankScoreKind::Auc).unwrap();
        // relevant first: 0; flipped: 1 − 2·0.2 = 0.6
        assert!((v - 0.6).abs() < 1e-12);
        let g = gt(6, 7);
        assert!(matches!(
            brute_force_most_violated(&[0.0f64; 13], &g, RankScoreKind::Auc),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn objective_invariant_to_score_shift() {
        let g = gt(3, 4);
        let s = vec![0.3f64, -0.2, 0.9, 0.1, 0.5, -0.7, 0.25];
        let shifted: Vec<f64> = s.iter().map(|x| x + 3.0).collect();
        for kind in [
            RankScoreKind::Auc,
            RankScoreKind::Ndcg { k: 4 },
            RankScoreKind::Sndcg,
        ] {
            let a = most_violated(kind, &s, &g).unwrap();
            let b = most_violated(kind, &shifted, &g).unwrap();
            let va = augmented_objective(kind, &a, &s, &g).unwrap();
            let vb = augmented_objective(kind, &b, &shifted, &g).unwrap();
            assert!((va - vb).abs() < 1e-12);
        }
    }

    #[test]
    fn flip_counts_of_simple_rankings() {
        let g = gt(2, 3);
        let y = Prediction::Simple(vec![
            SimpleRanking::from_order(0, &[3, 0, 2, 4]).unwrap(),
            SimpleRanking::from_order(1, &[3, 4, 1, 2]).unwrap(),
        ]);
        let c = y.flip_counts(&g).unwrap();
        assert_eq!(c.relevant, vec![1, 2]);
        assert_eq!(c.irrelevant, vec![0, 2, 1]);
    }
}
