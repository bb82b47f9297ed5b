//! Hyperplane hash functions, bit-packed binary codes, weighted Hamming
//! distance and distance-ranked retrieval.

use crate::data::Dataset;
use crate::error::{shape, Result};
use crate::scalar::{cmp_scalar, Scalar};

const WORD: usize = 64;

/// Fixed-length bit string packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    words: Vec<u64>,
    len: usize,
}

impl BinaryCode {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(WORD)],
            len,
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut code = Self::zeros(0);
        for b in bits {
            code.push(b);
        }
        code
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(WORD) {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, bit);
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, r: usize) -> bool {
        debug_assert!(r < self.len);
        (self.words[r / WORD] >> (r % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, bit: bool) {
        let mask = 1u64 << (r % WORD);
        if bit {
            self.words[r / WORD] |= mask;
        } else {
            self.words[r / WORD] &= !mask;
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|r| self.get(r))
    }

    /// Indices of the set bits in ascending order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                (w != 0).then(|| {
                    let t = w.trailing_zeros() as usize;
                    w &= w - 1;
                    wi * WORD + t
                })
            })
        })
    }

    /// `Σ_r weights[r]` over the set bits.
    pub fn weighted_count<F: Scalar>(&self, weights: &[F]) -> F {
        self.ones().fold(F::zero(), |acc, r| acc + weights[r])
    }

    /// Plain Hamming distance (population count of the XOR).
    #[inline]
    pub fn hamming(&self, other: &Self) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    /// XOR of two codes of equal length.
    pub fn xor(&self, other: &Self) -> Self {
        Self {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a ^ b)
                .collect(),
            len: self.len,
        }
    }

    /// Space-separated `0`/`1` characters.
    pub fn to_bit_string(&self) -> String {
        let mut s = String::with_capacity(self.len * 2);
        for (r, b) in self.bits().enumerate() {
            if r > 0 {
                s.push(' ');
            }
            s.push(if b { '1' } else { '0' });
        }
        s
    }
}

/// `Σ_r weights[r]` over the set bits of `a XOR b`, visiting bits in
/// ascending order so identical patterns give identical sums.
#[inline]
pub(crate) fn xor_masked_sum<F: Scalar>(weights: &[F], a: &[u64], b: &[u64]) -> F {
    let mut acc = F::zero();
    for (wi, (x, y)) in a.iter().zip(b).enumerate() {
        let mut w = x ^ y;
        while w != 0 {
            let t = w.trailing_zeros() as usize;
            acc += weights[wi * WORD + t];
            w &= w - 1;
        }
    }
    acc
}

/// Perceptron hash `h(x) = [vᵀx + b > 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HashFunction<F> {
    pub v: Vec<F>,
    pub b: F,
}

impl<F: Scalar> HashFunction<F> {
    pub fn new(v: Vec<F>, b: F) -> Result<Self> {
        if v.is_empty() || v.iter().all(|x| x.is_zero()) {
            return Err(shape("hash function needs a nonzero direction"));
        }
        if !b.is_finite() || v.iter().any(|x| !x.is_finite()) {
            return Err(crate::Error::Numeric("non-finite hyperplane".into()));
        }
        Ok(Self { v, b })
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    #[inline]
    pub fn response(&self, x: &[F]) -> F {
        self.v
            .iter()
            .zip(x)
            .fold(self.b, |acc, (&a, &b)| acc + a * b)
    }

    /// Bit value; a zero response maps to 0.
    #[inline]
    pub fn bit(&self, x: &[F]) -> bool {
        self.response(x) > F::zero()
    }

    pub fn checked_bit(&self, x: &[F]) -> Result<bool> {
        if x.len() != self.dim() {
            return Err(shape(format!(
                "input of dimension {} for hash of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self.bit(x))
    }

    /// Bits for every dataset row.
    pub fn bits_on(&self, ds: &Dataset<F>) -> Result<Vec<bool>> {
        if ds.dim() != self.dim() {
            return Err(shape(format!(
                "dataset dimension {} vs hash dimension {}",
                ds.dim(),
                self.dim()
            )));
        }
        Ok(ds.rows().map(|x| self.bit(x)).collect())
    }
}

/// Ordered hash functions with non-negative per-bit weights.
#[derive(Debug, Clone, PartialEq)]
pub struct HashModel<F> {
    pub functions: Vec<HashFunction<F>>,
    pub weights: Vec<F>,
    /// Training method, e.g. `cghash`.
    pub method: String,
    /// Loss / configuration provenance.
    pub loss_tag: String,
}

impl<F: Scalar> HashModel<F> {
    pub fn new(
        functions: Vec<HashFunction<F>>,
        weights: Vec<F>,
        method: impl Into<String>,
        loss_tag: impl Into<String>,
    ) -> Result<Self> {
        if functions.len() != weights.len() {
            return Err(shape(format!(
                "{} functions but {} weights",
                functions.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= F::zero()) || !w.is_finite()) {
            return Err(shape("weights must be finite and non-negative"));
        }
        if let Some(f) = functions.first() {
            if functions.iter().any(|g| g.dim() != f.dim()) {
                return Err(shape("hash functions disagree on input dimension"));
            }
        }
        Ok(Self {
            functions,
            weights,
            method: method.into(),
            loss_tag: loss_tag.into(),
        })
    }

    pub fn bits(&self) -> usize {
        self.functions.len()
    }

    pub fn dim(&self) -> usize {
        self.functions.first().map_or(0, HashFunction::dim)
    }

    pub fn encode(&self, x: &[F]) -> Result<BinaryCode> {
        if x.len() != self.dim() {
            return Err(shape(format!(
                "input of dimension {} for model of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(BinaryCode::from_bits(
            self.functions.iter().map(|h| h.bit(x)),
        ))
    }

    pub fn encode_dataset(&self, ds: &Dataset<F>) -> Result<Vec<BinaryCode>> {
        ds.rows().map(|x| self.encode(x)).collect()
    }

    /// True when every weight is identical, so distances reduce to a scaled
    /// population count.
    pub fn has_uniform_weights(&self) -> bool {
        self.weights.windows(2).all(|w| w[0] == w[1])
    }

    pub fn distance(&self, a: &BinaryCode, b: &BinaryCode) -> Result<F> {
        weighted_hamming(&self.weights, a, b)
    }
}

/// `Σ_r w_r·|a_r − b_r|`.
pub fn weighted_hamming<F: Scalar>(w: &[F], a: &BinaryCode, b: &BinaryCode) -> Result<F> {
    if a.len() != b.len() || w.len() != a.len() {
        return Err(shape(format!(
            "weights {} / codes {} and {}",
            w.len(),
            a.len(),
            b.len()
        )));
    }
    Ok(xor_masked_sum(w, a.words(), b.words()))
}

/// `|h(x_i) − h(x_k)| − |h(x_i) − h(x_j)|` on the function's bits.
pub fn delta_h<F: Scalar>(h: &HashFunction<F>, xi: &[F], xj: &[F], xk: &[F]) -> Result<i8> {
    let (bi, bj, bk) = (h.checked_bit(xi)?, h.checked_bit(xj)?, h.checked_bit(xk)?);
    Ok((bi != bk) as i8 - (bi != bj) as i8)
}

/// Distances from `query` to every code, with a popcount fast path for
/// uniform weights.
pub fn distances_to<F: Scalar>(weights: &[F], query: &BinaryCode, codes: &[BinaryCode]) -> Vec<F> {
    let uniform = weights.windows(2).all(|w| w[0] == w[1]);
    codes
        .iter()
        .map(|c| {
            if uniform {
                let scale = weights.first().copied().unwrap_or_else(F::zero);
                scale * F::from_count(query.hamming(c) as usize)
            } else {
                xor_masked_sum(weights, query.words(), c.words())
            }
        })
        .collect()
}

/// Indices ordered by ascending distance, ties by index.
pub fn order_by_distance<F: Scalar>(dist: &[F]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| cmp_scalar(dist[a], dist[b]).then(a.cmp(&b)));
    order
}

/// Ranks pre-encoded database codes against a query code.
pub fn rank_codes<F: Scalar>(
    weights: &[F],
    query: &BinaryCode,
    codes: &[BinaryCode],
) -> Result<Vec<usize>> {
    if let Some(c) = codes.iter().find(|c| c.len() != query.len()) {
        return Err(shape(format!(
            "code lengths {} vs {}",
            c.len(),
            query.len()
        )));
    }
    if weights.len() != query.len() {
        return Err(shape(format!(
            "{} weights for {} bits",
            weights.len(),
            query.len()
        )));
    }
    Ok(order_by_distance(&distances_to(weights, query, codes)))
}

/// Database rows sorted by ascending weighted Hamming distance to the query.
pub fn rank_database<F: Scalar>(
    model: &HashModel<F>,
    query: &[F],
    db: &Dataset<F>,
) -> Result<Vec<usize>> {
    if db.dim() != model.dim() {
        return Err(shape(format!(
            "database dimension {} vs model dimension {}",
            db.dim(),
            model.dim()
        )));
    }
    let q = model.encode(query)?;
    let codes = model.encode_dataset(db)?;
    rank_codes(&model.weights, &q, &codes)
}
