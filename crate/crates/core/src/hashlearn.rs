//! Column-generation subproblem: find the hyperplane hash function that
//! maximizes a weighted sum of triplet scores.
//!
//! The triplet objective `Σ μ_t (|h_i − h_k| − |h_i − h_j|)` only depends on
//! how the weights accumulate on unordered row pairs, so the solvers work on
//! [`PairWeights`]: triplet `(i, j, k)` adds `+μ` to pair `{i, k}` and `−μ`
//! to pair `{i, j}`. That keeps the cost of one objective evaluation at
//! `O(n·d + #pairs)` instead of `O(#triplets·d)`.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, Triplet};
use crate::error::{shape, Error, Result};
use crate::hashcore::HashFunction;
use crate::linalg::symmetric_eigen;
use crate::scalar::{cmp_scalar, Scalar};

/// Non-negative multipliers keyed by triplet.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DualWeights<F> {
    entries: BTreeMap<Triplet, F>,
}

impl<F: Scalar> DualWeights<F> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Adds `mu` to the weight of `t`.
    pub fn add(&mut self, t: Triplet, mu: F) -> Result<()> {
        if !(mu >= F::zero()) || !mu.is_finite() {
            return Err(Error::Numeric(format!("dual weight {mu} for {t:?}")));
        }
        if t.i == t.j || t.i == t.k || t.j == t.k {
            return Err(shape(format!("degenerate triplet {t:?}")));
        }
        *self.entries.entry(t).or_insert_with(F::zero) += mu;
        Ok(())
    }

    pub fn from_pairs<I: IntoIterator<Item = (Triplet, F)>>(iter: I) -> Result<Self> {
        let mut d = Self::new();
        for (t, mu) in iter {
            d.add(t, mu)?;
        }
        Ok(d)
    }

    pub fn get(&self, t: &Triplet) -> F {
        self.entries.get(t).copied().unwrap_or_else(F::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Triplet, &F)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> F {
        self.entries.values().copied().sum()
    }

    /// Largest row index referenced.
    pub fn max_index(&self) -> Option<usize> {
        self.entries.keys().map(|t| t.i.max(t.j).max(t.k)).max()
    }
}

/// Signed weights on unordered row pairs `{a, b}` with `a < b`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairWeights<F> {
    pub pairs: Vec<(usize, usize)>,
    pub weights: Vec<F>,
}

/// Incremental builder for [`PairWeights`].
#[derive(Debug, Default)]
pub struct PairAccumulator<F> {
    index: HashMap<(usize, usize), usize>,
    pairs: Vec<(usize, usize)>,
    weights: Vec<F>,
}

impl<F: Scalar> PairAccumulator<F> {
    pub fn new() -> Self {
        Self {
            index: HashMap::new(),
            pairs: Vec::new(),
            weights: Vec::new(),
        }
    }

    #[inline]
    pub fn add(&mut self, a: usize, b: usize, w: F) {
        let key = if a < b { (a, b) } else { (b, a) };
        let next = self.pairs.len();
        let slot = *self.index.entry(key).or_insert(next);
        if slot == next {
            self.pairs.push(key);
            self.weights.push(F::zero());
        }
        self.weights[slot] += w;
    }

    /// Adds a triplet's contribution: `+mu` on `{i,k}`, `−mu` on `{i,j}`.
    #[inline]
    pub fn add_triplet(&mut self, t: &Triplet, mu: F) {
        self.add(t.i, t.k, mu);
        self.add(t.i, t.j, -mu);
    }

    /// Sorted by pair, with exact zeros dropped.
    pub fn finish(self) -> PairWeights<F> {
        let mut items: Vec<((usize, usize), F)> = self
            .pairs
            .into_iter()
            .zip(self.weights)
            .filter(|(_, w)| !w.is_zero())
            .collect();
        items.sort_by_key(|(p, _)| *p);
        let (pairs, weights) = items.into_iter().unzip();
        PairWeights { pairs, weights }
    }
}

impl<F: Scalar> From<&DualWeights<F>> for PairWeights<F> {
    fn from(d: &DualWeights<F>) -> Self {
        let mut acc = PairAccumulator::new();
        for (t, &mu) in d.iter() {
            acc.add_triplet(t, mu);
        }
        acc.finish()
    }
}

impl<F: Scalar> PairWeights<F> {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.pairs.iter().map(|&(_, b)| b).max()
    }

    fn check(&self, n: usize) -> Result<()> {
        match self.max_index() {
            Some(m) if m >= n => Err(shape(format!("pair index {m} out of range for {n} rows"))),
            _ => Ok(()),
        }
    }

    /// `Σ_p a_p·[bit_a ≠ bit_b]`.
    pub fn binarized_objective(&self, bits: &[bool]) -> F {
        self.pairs
            .iter()
            .zip(&self.weights)
            .filter(|(&(a, b), _)| bits[a] != bits[b])
            .map(|(_, &w)| w)
            .sum()
    }
}

/// Knobs for the local solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemConfig {
    /// Sigmoid sharpness in `σ(temperature·(vᵀx + b))`.
    pub temperature: f64,
    /// Random-plane initializations tried in addition to the spectral one.
    pub restarts: usize,
    pub max_inner_iters: usize,
    pub grad_tol: f64,
}

impl Default for SubproblemConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            restarts: 4,
            max_inner_iters: 100,
            grad_tol: 1e-6,
        }
    }
}

impl SubproblemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config("grad_tol must be positive".into()));
        }
        Ok(())
    }
}

/// `Σ_t μ_t·[|h(x_i) − h(x_k)| − |h(x_i) − h(x_j)|]` evaluated triplet by
/// triplet.
pub fn triplet_objective<F: Scalar>(
    h: &HashFunction<F>,
    mu: &DualWeights<F>,
    ds: &Dataset<F>,
) -> Result<F> {
    if let Some(m) = mu.max_index() {
        if m >= ds.len() {
            return Err(shape(format!(
                "triplet index {m} out of range for {} rows",
                ds.len()
            )));
        }
    }
    let bits = h.bits_on(ds)?;
    Ok(mu
        .iter()
        .map(|(t, &w)| {
            let d = (bits[t.i] != bits[t.k]) as i8 - (bits[t.i] != bits[t.j]) as i8;
            w * F::c(d as f64)
        })
        .sum())
}

/// Same objective from pair weights.
pub fn pair_objective<F: Scalar>(
    h: &HashFunction<F>,
    pw: &PairWeights<F>,
    ds: &Dataset<F>,
) -> Result<F> {
    pw.check(ds.len())?;
    Ok(pw.binarized_objective(&h.bits_on(ds)?))
}

#[inline]
fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// Smoothed objective `Σ_p a_p (h̃_a − h̃_b)²` with
/// `h̃(x) = σ(temperature·(vᵀx + b))`, and its gradient with respect to
/// `(v, b)` (bias last).
pub fn smoothed_objective_and_gradient<F: Scalar>(
    v: &[F],
    b: F,
    pw: &PairWeights<F>,
    ds: &Dataset<F>,
    temperature: F,
) -> Result<(F, Vec<F>)> {
    if v.len() != ds.dim() {
        return Err(shape(format!(
            "direction of length {} for dimension {}",
            v.len(),
            ds.dim()
        )));
    }
    if !(temperature > F::zero()) {
        return Err(Error::Config("temperature must be positive".into()));
    }
    if !b.is_finite() || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite hyperplane".into()));
    }
    pw.check(ds.len())?;
    let d = ds.dim();
    let mut grad = vec![F::zero(); d + 1];
    if pw.is_empty() {
        return Ok((F::zero(), grad));
    }

    let soft: Vec<F> = ds
        .rows()
        .map(|x| {
            let z = v.iter().zip(x).fold(b, |acc, (&a, &c)| acc + a * c);
            sigmoid(temperature * z)
        })
        .collect();
    let mut value = F::zero();
    let mut dsoft = vec![F::zero(); ds.len()];
    for (&(a, c), &w) in pw.pairs.iter().zip(&pw.weights) {
        let diff = soft[a] - soft[c];
        value += w * diff * diff;
        let g = F::c(2.0) * w * diff;
        dsoft[a] += g;
        dsoft[c] -= g;
    }
    for (p, x) in ds.rows().enumerate() {
        if dsoft[p].is_zero() {
            continue;
        }
        let dz = dsoft[p] * temperature * soft[p] * (F::one() - soft[p]);
        for (g, &xi) in grad.iter_mut().zip(x) {
            *g += dz * xi;
        }
        grad[d] += dz;
    }
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite smoothed objective".into()));
    }
    Ok((value, grad))
}

fn median<F: Scalar>(mut xs: Vec<F>) -> F {
    if xs.is_empty() {
        return F::zero();
    }
    xs.sort_by(|a, b| cmp_scalar(*a, *b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / F::c(2.0)
    }
}

/// Bias that splits the rows evenly: minus the median of `vᵀx`.
fn median_bias<F: Scalar>(v: &[F], ds: &Dataset<F>) -> F {
    let proj = ds
        .rows()
        .map(|x| v.iter().zip(x).fold(F::zero(), |acc, (&a, &c)| acc + a * c))
        .collect();
    -median(proj)
}

/// Spectral relaxation: the leading unit eigenvector of
/// `M = Σ_p a_p (x_a − x_b)(x_a − x_b)ᵀ`, with the median-response bias.
/// A zero `M` yields the first basis vector. Eigenvector sign is fixed so the
/// largest-magnitude component is positive.
pub fn spectral_init<F: Scalar>(pw: &PairWeights<F>, ds: &Dataset<F>) -> Result<(Vec<F>, F)> {
    pw.check(ds.len())?;
    let d = ds.dim();
    let mut m = vec![F::zero(); d * d];
    let mut diff = vec![F::zero(); d];
    for (&(a, c), &w) in pw.pairs.iter().zip(&pw.weights) {
        for ((t, &xa), &xc) in diff.iter_mut().zip(ds.row(a)).zip(ds.row(c)) {
            *t = xa - xc;
        }
        for r in 0..d {
            let s = w * diff[r];
            if s.is_zero() {
                continue;
            }
            for q in r..d {
                m[r * d + q] += s * diff[q];
            }
        }
    }
    for r in 0..d {
        for q in 0..r {
            m[r * d + q] = m[q * d + r];
        }
    }

    let v = if m.iter().all(|x| x.is_zero()) {
        let mut e = vec![F::zero(); d];
        e[0] = F::one();
        e
    } else {
        let (_, vecs) = symmetric_eigen(&m, d)?;
        let mut v = vecs.into_iter().next().expect("d >= 1");
        let pivot = v.iter().copied().fold(
            F::zero(),
            |best, x| if x.abs() > best.abs() { x } else { best },
        );
        if pivot < F::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let norm = v.iter().map(|x| *x * *x).sum::<F>().sqrt();
        if !(norm > F::zero()) {
            return Err(Error::Numeric("degenerate eigenvector".into()));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        v
    };
    let b = median_bias(&v, ds);
    Ok((v, b))
}

/// Per-column affine map to zero mean and unit variance (constant columns
/// keep unit scale).
#[derive(Debug, Clone)]
pub struct Standardizer<F> {
    pub mean: Vec<F>,
    pub scale: Vec<F>,
}

impl<F: Scalar> Standardizer<F> {
    pub fn fit(ds: &Dataset<F>) -> Self {
        let d = ds.dim();
        let n = F::from_count(ds.len().max(1));
        let mut mean = vec![F::zero(); d];
        for x in ds.rows() {
            for (m, &v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![F::zero(); d];
        for x in ds.rows() {
            for ((s, &v), &m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > F::epsilon() {
                    sd
                } else {
                    F::one()
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, ds: &Dataset<F>) -> Dataset<F> {
        let mut values = Vec::with_capacity(ds.len() * ds.dim());
        for x in ds.rows() {
            for ((&v, &m), &s) in x.iter().zip(&self.mean).zip(&self.scale) {
                values.push((v - m) / s);
            }
        }
        Dataset::from_flat(ds.dim(), values, ds.labels().map(<[i64]>::to_vec))
            .expect("same shape as input")
    }

    /// Maps a hyperplane on standardized inputs back to raw inputs.
    pub fn unscale(&self, v: &[F], b: F) -> (Vec<F>, F) {
        let raw: Vec<F> = v.iter().zip(&self.scale).map(|(&a, &s)| a / s).collect();
        let shift = raw
            .iter()
            .zip(&self.mean)
            .fold(F::zero(), |acc, (&a, &m)| acc + a * m);
        (raw, b - shift)
    }
}

struct Candidate<F> {
    v: Vec<F>,
    b: F,
    score: F,
}

fn bits_of<F: Scalar>(v: &[F], b: F, ds: &Dataset<F>) -> Vec<bool> {
    ds.rows()
        .map(|x| v.iter().zip(x).fold(b, |acc, (&a, &c)| acc + a * c) > F::zero())
        .collect()
}

/// Gradient ascent with backtracking on the smoothed objective, keeping the
/// iterate with the best binarized objective (the start included).
fn local_ascent<F: Scalar>(
    v0: Vec<F>,
    b0: F,
    pw: &PairWeights<F>,
    ds: &Dataset<F>,
    cfg: &SubproblemConfig,
) -> Result<Candidate<F>> {
    let temp = F::c(cfg.temperature);
    let d = ds.dim();
    let mut x: Vec<F> = v0.iter().copied().chain(std::iter::once(b0)).collect();
    let mut best = Candidate {
        score: pw.binarized_objective(&bits_of(&v0, b0, ds)),
        v: v0,
        b: b0,
    };
    let (mut f, mut g) = smoothed_objective_and_gradient(&x[..d], x[d], pw, ds, temp)?;
    let mut step: Option<F> = None;
    let armijo = F::c(1e-4);
    let tol = F::c(cfg.grad_tol);

    for _ in 0..cfg.max_inner_iters {
        let gg: F = g.iter().map(|v| *v * *v).sum();
        let gnorm = gg.sqrt();
        if gnorm <= tol {
            break;
        }
        let mut alpha = step.map_or(F::one() / gnorm, |s| s * F::c(2.0));
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<F> = x.iter().zip(&g).map(|(&xi, &gi)| xi + alpha * gi).collect();
            match smoothed_objective_and_gradient(&trial[..d], trial[d], pw, ds, temp) {
                Ok((ft, gt)) if ft >= f + armijo * alpha * gg => {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                _ => alpha /= F::c(2.0),
            }
        }
        let Some((trial, ft, gt)) = accepted else {
            break;
        };
        step = Some(alpha);
        x = trial;
        f = ft;
        g = gt;
        if x[..d].iter().any(|a| !a.is_zero()) {
            let score = pw.binarized_objective(&bits_of(&x[..d], x[d], ds));
            if score > best.score {
                best = Candidate {
                    v: x[..d].to_vec(),
                    b: x[d],
                    score,
                };
            }
        }
    }
    Ok(best)
}

fn random_plane<F: Scalar, R: Rng>(rng: &mut R, ds: &Dataset<F>) -> (Vec<F>, F) {
    loop {
        let v: Vec<f64> = (0..ds.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            let v: Vec<F> = v.iter().map(|x| F::c(x / norm)).collect();
            let b = median_bias(&v, ds);
            return (v, b);
        }
    }
}

/// Learns one hash function for the given pair weights; `rng` drives the
/// random restarts.
///
/// Features are standardized internally and the result is mapped back to the
/// raw input space. Local ascent runs from the spectral initialization and
/// from `cfg.restarts` seeded random planes; the candidate with the largest
/// binarized objective wins, ties going to the earliest.
pub fn learn_hash_function<F: Scalar, R: Rng>(
    pw: &PairWeights<F>,
    ds: &Dataset<F>,
    cfg: &SubproblemConfig,
    rng: &mut R,
) -> Result<HashFunction<F>> {
    cfg.validate()?;
    pw.check(ds.len())?;
    if pw.weights.iter().all(|w| w.is_zero()) {
        return Err(Error::Config("dual weights are all zero".into()));
    }
    let std = Standardizer::fit(ds);
    let z = std.transform(ds);

    let mut starts = Vec::with_capacity(cfg.restarts + 1);
    match spectral_init(pw, &z) {
        Ok(s) => starts.push(s),
        Err(e) => log::warn!("spectral initialization failed ({e}); using a random plane"),
    }
    let randoms = if starts.is_empty() {
        cfg.restarts.max(1)
    } else {
        cfg.restarts
    };
    for _ in 0..randoms {
        starts.push(random_plane(rng, &z));
    }

    let mut best: Option<Candidate<F>> = None;
    for (v, b) in starts {
        let Ok(cand) = local_ascent(v, b, pw, &z, cfg) else {
            continue;
        };
        if !cand.score.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|bst| cand.score > bst.score) {
            best = Some(cand);
        }
    }
    let best =
        best.ok_or_else(|| Error::Numeric("every candidate hash function was non-finite".into()))?;
    let (v, b) = std.unscale(&best.v, best.b);
    HashFunction::new(v, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_clusters;
    use rand::SeedableRng;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        crate::data::seeded_rng(seed, crate::data::streams::HASH_LEARN)
    }

    fn t(i: usize, j: usize, k: usize) -> Triplet {
        Triplet::new(i, j, k)
    }

    fn line(xs: &[f64]) -> Dataset<f64> {
        Dataset::from_rows(xs.iter().map(|&x| vec![x]).collect(), None).unwrap()
    }

    #[test]
    fn triplet_objective_examples() {
        // h(x) = [x > 0.5]; rows 0,1 -> bit 1, row 2 -> bit 0
        let ds = line(&[1.0, 1.0, 0.0, 1.0]);
        let h = HashFunction::new(vec![1.0], -0.5).unwrap();
        let mu = DualWeights::from_pairs([(t(0, 1, 2), 0.5), (t(0, 2, 3), 1.0)]).unwrap();
        assert_eq!(triplet_objective(&h, &mu, &ds).unwrap(), -0.5);
        assert_eq!(
            pair_objective(&h, &PairWeights::from(&mu), &ds).unwrap(),
            -0.5
        );

        let constant = HashFunction::new(vec![1.0], 10.0).unwrap();
        assert_eq!(triplet_objective(&constant, &mu, &ds).unwrap(), 0.0);

        let single = DualWeights::from_pairs([(t(0, 1, 2), 2.0)]).unwrap();
        assert_eq!(triplet_objective(&h, &single, &ds).unwrap(), 2.0);

        let bad = DualWeights::from_pairs([(t(0, 1, 9), 2.0)]).unwrap();
        assert!(triplet_objective(&h, &bad, &ds).is_err());
    }

    #[test]
    fn dual_weights_reject_negative() {
        let mut d = DualWeights::<f64>::new();
        assert!(d.add(t(0, 1, 2), -1.0).is_err());
        assert!(d.add(t(0, 0, 2), 1.0).is_err());
    }

    #[test]
    fn empty_weights_give_zero_smoothed() {
        let ds = line(&[0.0, 1.0]);
        let (f, g) =
            smoothed_objective_and_gradient(&[1.0], 0.0, &PairWeights::default(), &ds, 1.0)
                .unwrap();
        assert_eq!(f, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    fn random_instance(
        seed: u64,
        d: usize,
        n: usize,
        nt: usize,
    ) -> (Dataset<f64>, DualWeights<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let ds = Dataset::from_rows(rows, None).unwrap();
        let mut mu = DualWeights::new();
        while mu.len() < nt {
            let (i, j, k) = (
                rng.random_range(0..n),
                rng.random_range(0..n),
                rng.random_range(0..n),
            );
            if i != j && i != k && j != k {
                mu.add(t(i, j, k), rng.random_range(0.0..1.0)).unwrap();
            }
        }
        (ds, mu)
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000 + seed);
            let d = rng.random_range(1..=10);
            let (ds, mu) = random_instance(seed, d, 20, rng.random_range(1..=50));
            let pw = PairWeights::from(&mu);
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = rng.random_range(-0.5..0.5);
            let temp = rng.random_range(0.5..2.0);
            let (_, g) = smoothed_objective_and_gradient(&v, b, &pw, &ds, temp).unwrap();
            let h = 1e-5;
            let mut fd = Vec::with_capacity(d + 1);
            for p in 0..=d {
                let mut xp: Vec<f64> = v.iter().copied().chain([b]).collect();
                let mut xm = xp.clone();
                xp[p] += h;
                xm[p] -= h;
                let fp = smoothed_objective_and_gradient(&xp[..d], xp[d], &pw, &ds, temp)
                    .unwrap()
                    .0;
                let fm = smoothed_objective_and_gradient(&xm[..d], xm[d], &pw, &ds, temp)
                    .unwrap()
                    .0;
                fd.push((fp - fm) / (2.0 * h));
            }
            let err = g
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(
                err <= 1e-4 * norm.max(1e-6),
                "seed {seed}: err {err} norm {norm}"
            );
        }
    }

    #[test]
    fn sharp_sigmoid_recovers_binarized_objective() {
        let (ds, mu) = random_instance(42, 3, 30, 40);
        let pw = PairWeights::from(&mu);
        let h = HashFunction::new(vec![0.7, -0.2, 0.4], 0.05).unwrap();
        let exact = triplet_objective(&h, &mu, &ds).unwrap();
        let (smooth, _) = smoothed_objective_and_gradient(&h.v, h.b, &pw, &ds, 1e3).unwrap();
        // smallest |response| on this instance keeps the sigmoid within 1e-6 of a step
        let margin = ds
            .rows()
            .map(|x| h.response(x).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(
            margin > 0.015,
            "instance too close to the boundary: {margin}"
        );
        let (sharper, _) = smoothed_objective_and_gradient(&h.v, h.b, &pw, &ds, 1e4).unwrap();
        assert!((sharper - exact).abs() < 1e-9, "{sharper} vs {exact}");
        assert!(
            (smooth - exact).abs() <= (sharper - exact).abs().max(1e-3),
            "{smooth} vs {exact}"
        );
    }

    #[test]
    fn spectral_init_one_dimensional() {
        let ds = line(&[0.0, 0.1, 1.0]);
        let mu = DualWeights::from_pairs([(t(0, 1, 2), 1.0)]).unwrap();
        let pw = PairWeights::from(&mu);
        let (v, _) = spectral_init(&pw, &ds).unwrap();
        assert_eq!(v, vec![1.0]);
        // relaxation objective vᵀMv = 1·1² − 1·0.1² = 0.99
        let rel: f64 = pw
            .pairs
            .iter()
            .zip(&pw.weights)
            .map(|(&(a, b), w)| w * (ds.row(a)[0] - ds.row(b)[0]).powi(2))
            .sum();
        assert!((rel - 0.99).abs() < 1e-12);
    }

    #[test]
    fn spectral_init_degenerate_and_unit_norm() {
        let ds =
            Dataset::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]], None).unwrap();
        let zero = PairWeights::default();
        let (v, _) = spectral_init(&zero, &ds).unwrap();
        assert_eq!(v, vec![1.0, 0.0]);

        let (ds, mu) = random_instance(3, 5, 25, 30);
        let (v, _) = spectral_init(&PairWeights::from(&mu), &ds).unwrap();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    /// Exhaustive sweep over thresholds of a 1-D dataset in both directions.
    fn best_threshold(ds: &Dataset<f64>, mu: &DualWeights<f64>) -> f64 {
        let mut xs: Vec<f64> = ds.rows().map(|r| r[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut cuts = vec![xs[0] - 1.0];
        cuts.extend(xs.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        let mut best = f64::NEG_INFINITY;
        for c in cuts {
            for dir in [1.0, -1.0] {
                let h = HashFunction::new(vec![dir], -dir * c).unwrap();
                best = best.max(triplet_objective(&h, mu, ds).unwrap());
            }
        }
        best
    }

    #[test]
    fn separates_two_clusters() {
        let mut xs = Vec::new();
        for p in 0..8 {
            xs.push(-3.0 + 0.1 * p as f64);
        }
        for p in 0..8 {
            xs.push(3.0 + 0.1 * p as f64);
        }
        let ds = line(&xs);
        let mut mu = DualWeights::new();
        for i in 0..16 {
            for j in 0..16 {
                for k in 0..16 {
                    let same = |a: usize, b: usize| (a < 8) == (b < 8);
                    if i != j && i != k && j != k && same(i, j) && !same(i, k) {
                        mu.add(t(i, j, k), 0.01).unwrap();
                    }
                }
            }
        }
        let pw = PairWeights::from(&mu);
        let h = learn_hash_function(&pw, &ds, &SubproblemConfig::default(), &mut rng(1)).unwrap();
        let got = triplet_objective(&h, &mu, &ds).unwrap();
        let oracle = best_threshold(&ds, &mu);
        assert!((oracle - mu.total()).abs() < 1e-9);
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
    }

    #[test]
    fn zero_restarts_is_spectral_ascent() {
        let (ds, mu) = random_instance(8, 4, 30, 60);
        let pw = PairWeights::from(&mu);
        let cfg = SubproblemConfig {
            restarts: 0,
            ..Default::default()
        };
        let learned = learn_hash_function(&pw, &ds, &cfg, &mut rng(123)).unwrap();
        let other_seed = learn_hash_function(&pw, &ds, &cfg, &mut rng(999)).unwrap();
        assert_eq!(learned, other_seed);

        let std = Standardizer::fit(&ds);
        let z = std.transform(&ds);
        let (v, b) = spectral_init(&pw, &z).unwrap();
        let cand = local_ascent(v, b, &pw, &z, &cfg).unwrap();
        let (rv, rb) = std.unscale(&cand.v, cand.b);
        assert_eq!(learned, HashFunction::new(rv, rb).unwrap());
    }

    #[test]
    fn learning_is_deterministic_and_beats_spectral_start() {
        let ds: Dataset<f64> = synth_clusters(5, 4, 3, 12, 0.6).unwrap();
        let nb = crate::data::build_neighborhoods(
            &ds,
            &crate::data::NeighborhoodConfig {
                k_rel: 5,
                k_irr: 5,
                ..Default::default()
            },
            2,
        )
        .unwrap();
        let ts = crate::data::generate_triplets(&nb);
        let mu = DualWeights::from_pairs(ts.iter().map(|&t| (t, 1.0 / ts.len() as f64))).unwrap();
        let pw = PairWeights::from(&mu);
        let cfg = SubproblemConfig::default();
        let a = learn_hash_function(&pw, &ds, &cfg, &mut rng(77)).unwrap();
        let b = learn_hash_function(&pw, &ds, &cfg, &mut rng(77)).unwrap();
        assert_eq!(a, b);

        let std = Standardizer::fit(&ds);
        let (v, bias) = spectral_init(&pw, &std.transform(&ds)).unwrap();
        let (rv, rb) = std.unscale(&v, bias);
        let start = triplet_objective(&HashFunction::new(rv, rb).unwrap(), &mu, &ds).unwrap();
        assert!(triplet_objective(&a, &mu, &ds).unwrap() >= start - 1e-12);
    }

    #[test]
    fn objective_invariant_to_positive_scaling() {
        let (ds, mu) = random_instance(9, 3, 20, 30);
        let h = HashFunction::new(vec![0.3, -0.8, 0.1], 0.2).unwrap();
        let g = HashFunction::new(h.v.iter().map(|x| x * 7.5).collect(), h.b * 7.5).unwrap();
        assert_eq!(
            triplet_objective(&h, &mu, &ds).unwrap(),
            triplet_objective(&g, &mu, &ds).unwrap()
        );
    }

    #[test]
    fn standardizer_round_trip() {
        let ds: Dataset<f64> = synth_clusters(1, 3, 2, 10, 2.0).unwrap();
        let std = Standardizer::fit(&ds);
        let z = std.transform(&ds);
        let (v, b) = (vec![0.5, -1.0, 0.25], 0.3);
        let (rv, rb) = std.unscale(&v, b);
        for (x, zx) in ds.rows().zip(z.rows()) {
            let a: f64 = rv.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() + rb;
            let c: f64 = v.iter().zip(zx).map(|(p, q)| p * q).sum::<f64>() + b;
            assert!((a - c).abs() < 1e-12);
        }
    }
}
