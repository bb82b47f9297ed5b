//! CGHash: hash functions as columns of a large-margin weight-learning
//! problem, grown one at a time by column generation.

use std::time::Instant;

use log::{info, warn};

use crate::data::{seeded_rng, streams, Dataset, Triplet, TripletSet};
use crate::error::{shape, Error, Result};
use crate::hashcore::{HashFunction, HashModel};
use crate::hashlearn::{learn_hash_function, DualWeights, PairWeights, SubproblemConfig};
use crate::optim::{minimize_box, BoxSolverConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    SquaredHinge,
    Logistic,
}

impl Loss {
    pub fn tag(self) -> &'static str {
        match self {
            Loss::SquaredHinge => "squared-hinge",
            Loss::Logistic => "logistic",
        }
    }

    /// `f(ρ)`
    pub fn value<F: Scalar>(self, rho: F) -> F {
        match self {
            Loss::SquaredHinge => {
                let m = (F::one() - rho).max(F::zero());
                m * m
            }
            Loss::Logistic => {
                if rho > F::zero() {
                    (-rho).exp().ln_1p()
                } else {
                    -rho + rho.exp().ln_1p()
                }
            }
        }
    }

    /// `f′(ρ)`
    pub fn derivative<F: Scalar>(self, rho: F) -> F {
        match self {
            Loss::SquaredHinge => -F::c(2.0) * (F::one() - rho).max(F::zero()),
            Loss::Logistic => {
                if rho > F::zero() {
                    let e = (-rho).exp();
                    -e / (F::one() + e)
                } else {
                    -F::one() / (F::one() + rho.exp())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    L1,
    Linf,
}

impl Regularizer {
    pub fn tag(self) -> &'static str {
        match self {
            Regularizer::L1 => "l1",
            Regularizer::Linf => "linf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CGConfig {
    pub loss: Loss,
    pub regularizer: Regularizer,
    pub c: f64,
    /// Box bound on every weight under `Linf`.
    pub c_prime: f64,
    pub bits: usize,
    pub master_tol: f64,
    pub master_max_iters: usize,
    pub subproblem: SubproblemConfig,
}

impl Default for CGConfig {
    fn default() -> Self {
        Self {
            loss: Loss::SquaredHinge,
            regularizer: Regularizer::L1,
            c: 1.0,
            c_prime: 1.0,
            bits: 32,
            master_tol: 1e-6,
            master_max_iters: 2000,
            subproblem: SubproblemConfig::default(),
        }
    }
}

impl CGConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if self.regularizer == Regularizer::Linf
            && !(self.c_prime > 0.0 && self.c_prime.is_finite())
        {
            return Err(Error::Config(format!(
                "C' must be positive, got {}",
                self.c_prime
            )));
        }
        if self.bits == 0 {
            return Err(Error::Config("bits must be at least 1".into()));
        }
        if !(self.master_tol > 0.0) {
            return Err(Error::Config("master_tol must be positive".into()));
        }
        self.subproblem.validate()
    }

    /// Multiplier linking the loss derivative to the duals: `C` under `L1`,
    /// 1 under `Linf` where the loss term is unscaled.
    pub fn dual_scale(&self) -> f64 {
        match self.regularizer {
            Regularizer::L1 => self.c,
            Regularizer::Linf => 1.0,
        }
    }

    pub fn tag(&self) -> String {
        format!("{}+{}", self.loss.tag(), self.regularizer.tag())
    }
}

/// Triplets rewritten over the distinct row pairs they mention: triplet `t`
/// compares pair `near[t] = {i, j}` with pair `far[t] = {i, k}`.
#[derive(Debug, Clone)]
pub struct TripletPairs {
    pub pairs: Vec<(usize, usize)>,
    pub near: Vec<u32>,
    pub far: Vec<u32>,
}

impl TripletPairs {
    pub fn new(ts: &TripletSet) -> Self {
        let mut index = std::collections::HashMap::new();
        let mut pairs = Vec::new();
        let mut slot = |a: usize, b: usize| -> u32 {
            let key = (a.min(b), a.max(b));
            *index.entry(key).or_insert_with(|| {
                pairs.push(key);
                (pairs.len() - 1) as u32
            })
        };
        let (mut near, mut far) = (Vec::with_capacity(ts.len()), Vec::with_capacity(ts.len()));
        for t in ts.iter() {
            near.push(slot(t.i, t.j));
            far.push(slot(t.i, t.k));
        }
        Self { pairs, near, far }
    }

    pub fn len(&self) -> usize {
        self.near.len()
    }

    pub fn is_empty(&self) -> bool {
        self.near.is_empty()
    }

    /// Collapses per-triplet weights onto pairs.
    pub fn pair_weights<F: Scalar>(&self, mu: &[F]) -> PairWeights<F> {
        let mut acc = vec![F::zero(); self.pairs.len()];
        for ((&n, &f), &m) in self.near.iter().zip(&self.far).zip(mu) {
            acc[f as usize] += m;
            acc[n as usize] -= m;
        }
        let (pairs, weights) = self
            .pairs
            .iter()
            .zip(acc)
            .filter(|(_, w)| !w.is_zero())
            .map(|(&p, w)| (p, w))
            .unzip();
        PairWeights { pairs, weights }
    }

    /// `[h(a) ≠ h(b)]` for every pair.
    fn column<F: Scalar>(&self, h: &HashFunction<F>, ds: &Dataset<F>) -> Result<Vec<bool>> {
        let bits = h.bits_on(ds)?;
        Ok(self
            .pairs
            .iter()
            .map(|&(a, b)| bits[a] != bits[b])
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct MasterSolution<F> {
    pub w: Vec<F>,
    /// Margins `ρ_t = wᵀδh_t` in triplet order.
    pub rho: Vec<F>,
    pub objective: F,
    /// Recovered duals in triplet order.
    pub duals: Vec<F>,
    pub iterations: usize,
}

impl<F: Scalar> MasterSolution<F> {
    pub fn dual_weights(&self, ts: &TripletSet) -> Result<DualWeights<F>> {
        DualWeights::from_pairs(
            ts.iter()
                .copied()
                .zip(self.duals.iter().copied())
                .filter(|(_, m)| !m.is_zero()),
        )
    }
}

/// Per-triplet KKT duals `μ = −C·f′(ρ)`.
pub fn recover_duals<F: Scalar>(rho: &[F], loss: Loss, c: F) -> Vec<F> {
    rho.iter()
        .map(|&r| (-c * loss.derivative(r)).max(F::zero()))
        .collect()
}

/// Squared-hinge dual objective `Σ μ − μ²/(4C)`.
pub fn squared_hinge_dual_objective<F: Scalar>(mu: &[F], c: F) -> F {
    mu.iter().map(|&m| m - m * m / (F::c(4.0) * c)).sum()
}

/// Restricted master problem over a growing set of columns.
struct Master<'a> {
    tp: &'a TripletPairs,
    columns: Vec<Vec<bool>>,
}

impl Master<'_> {
    fn margins<F: Scalar>(&self, w: &[F]) -> (Vec<F>, Vec<F>) {
        let mut dist = vec![F::zero(); self.tp.pairs.len()];
        for (col, &wr) in self.columns.iter().zip(w) {
            if wr.is_zero() {
                continue;
            }
            for (d, &x) in dist.iter_mut().zip(col) {
                if x {
                    *d += wr;
                }
            }
        }
        let rho = self
            .tp
            .near
            .iter()
            .zip(&self.tp.far)
            .map(|(&n, &f)| dist[f as usize] - dist[n as usize])
            .collect();
        (rho, dist)
    }

    fn evaluate<F: Scalar>(&self, w: &[F], cfg: &CGConfig) -> (F, Vec<F>, Vec<F>) {
        let (rho, _) = self.margins(w);
        let c = F::c(cfg.c);
        let (reg, scale) = match cfg.regularizer {
            Regularizer::L1 => (w.iter().copied().sum::<F>(), c),
            Regularizer::Linf => (F::zero(), F::one()),
        };
        let mut loss = F::zero();
        let mut g_pair = vec![F::zero(); self.tp.pairs.len()];
        for ((&r, &n), &f) in rho.iter().zip(&self.tp.near).zip(&self.tp.far) {
            loss += cfg.loss.value(r);
            let d = scale * cfg.loss.derivative(r);
            if !d.is_zero() {
                g_pair[f as usize] += d;
                g_pair[n as usize] -= d;
            }
        }
        let reg_grad = match cfg.regularizer {
            Regularizer::L1 => F::one(),
            Regularizer::Linf => F::zero(),
        };
        let grad = self
            .columns
            .iter()
            .map(|col| {
                col.iter()
                    .zip(&g_pair)
                    .filter(|(&x, _)| x)
                    .fold(reg_grad, |acc, (_, &g)| acc + g)
            })
            .collect();
        (reg + scale * loss, grad, rho)
    }

    fn solve<F: Scalar>(&self, warm: &[F], cfg: &CGConfig) -> Result<MasterSolution<F>> {
        let m = self.columns.len();
        let lower = vec![F::zero(); m];
        let upper = match cfg.regularizer {
            Regularizer::L1 => vec![F::infinity(); m],
            Regularizer::Linf => vec![F::c(cfg.c_prime); m],
        };
        let solver = BoxSolverConfig {
            tol: cfg.master_tol,
            max_iters: cfg.master_max_iters,
            ..Default::default()
        };
        let (w, iterations) = match minimize_box(
            |w: &[F]| {
                let (v, g, _) = self.evaluate(w, cfg);
                Ok((v, g))
            },
            warm,
            &lower,
            &upper,
            &solver,
        ) {
            Ok(sol) => (sol.x, sol.iterations),
            Err(Error::NotConverged {
                iterations,
                residual,
                best,
            }) => {
                warn!("master stopped after {iterations} iterations with residual {residual:e}; keeping the best iterate");
                (best.into_iter().map(F::c).collect(), iterations)
            }
            Err(e) => return Err(e),
        };
        let (objective, _, rho) = self.evaluate(&w, cfg);
        let duals = recover_duals(&rho, cfg.loss, F::c(cfg.dual_scale()));
        Ok(MasterSolution {
            w,
            rho,
            objective,
            duals,
            iterations,
        })
    }
}

/// Solves the weight-learning problem over a fixed set of hash functions.
pub fn solve_master<F: Scalar>(
    hashes: &[HashFunction<F>],
    ts: &TripletSet,
    ds: &Dataset<F>,
    cfg: &CGConfig,
) -> Result<MasterSolution<F>> {
    cfg.validate()?;
    if hashes.is_empty() {
        return Err(Error::Config(
            "master problem needs at least one hash function".into(),
        ));
    }
    ts.validate(ds.len())?;
    let tp = TripletPairs::new(ts);
    let columns = hashes
        .iter()
        .map(|h| tp.column(h, ds))
        .collect::<Result<_>>()?;
    let master = Master { tp: &tp, columns };
    master.solve(&vec![F::zero(); hashes.len()], cfg)
}

/// One column-generation step.
#[derive(Debug, Clone, PartialEq)]
pub struct CGBitStats {
    pub bit: usize,
    /// `Σ μ·δh` of the selected column under the duals it was learned from.
    pub column_value: f64,
    pub objective: f64,
    /// Only for the squared-hinge, `L1` problem.
    pub dual_objective: Option<f64>,
    pub master_iterations: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CGTrace {
    pub bits: Vec<CGBitStats>,
    pub stopped_early: bool,
}

/// Algorithm 1 with the default subproblem solver.
pub fn train_cghash<F: Scalar>(
    ds: &Dataset<F>,
    ts: &TripletSet,
    cfg: &CGConfig,
    seed: u64,
) -> Result<(HashModel<F>, CGTrace)> {
    let sub = cfg.subproblem;
    train_cghash_with(ds, ts, cfg, |pw, ds, bit| {
        let mut rng = seeded_rng(seed, streams::HASH_LEARN + bit as u64);
        learn_hash_function(pw, ds, &sub, &mut rng)
    })
}

/// Column generation with a caller-supplied subproblem solver, called as
/// `learner(pair_weights, ds, bit_index)`.
pub fn train_cghash_with<F, L>(
    ds: &Dataset<F>,
    ts: &TripletSet,
    cfg: &CGConfig,
    mut learner: L,
) -> Result<(HashModel<F>, CGTrace)>
where
    F: Scalar,
    L: FnMut(&PairWeights<F>, &Dataset<F>, usize) -> Result<HashFunction<F>>,
{
    cfg.validate()?;
    if ts.is_empty() {
        return Err(Error::Config("training needs at least one triplet".into()));
    }
    ts.validate(ds.len())?;
    let tp = TripletPairs::new(ts);
    let mut master = Master {
        tp: &tp,
        columns: Vec::new(),
    };
    let mut functions: Vec<HashFunction<F>> = Vec::new();
    let mut mu = vec![F::one() / F::from_count(ts.len()); ts.len()];
    let mut w: Vec<F> = Vec::new();
    let mut trace = CGTrace::default();
    let threshold = match cfg.regularizer {
        Regularizer::L1 => F::one(),
        Regularizer::Linf => F::zero(),
    };

    for bit in 0..cfg.bits {
        let start = Instant::now();
        let pw = tp.pair_weights(&mu);
        if pw.weights.iter().all(|x| x.is_zero()) {
            info!("all dual weights vanished after {bit} bits; stopping");
            trace.stopped_early = true;
            break;
        }
        let h = learner(&pw, ds, bit)?;
        if h.dim() != ds.dim() {
            return Err(shape("learned hash function has the wrong dimension"));
        }
        let column = tp.column(&h, ds)?;
        let value = column_value(&tp, &column, &mu);
        let marginal = value - threshold;
        let duplicate = master.columns.contains(&column);
        let tol = F::c(1e-6);
        if bit > 0 && marginal <= tol && (cfg.regularizer == Regularizer::L1 || duplicate) {
            info!("no column with positive marginal value after {bit} bits; stopping");
            trace.stopped_early = true;
            break;
        }
        master.columns.push(column);
        functions.push(h);
        let mut warm = w.clone();
        warm.push(F::zero());
        let sol = master.solve(&warm, cfg)?;
        let dual_objective = (cfg.loss == Loss::SquaredHinge && cfg.regularizer == Regularizer::L1)
            .then(|| squared_hinge_dual_objective(&sol.duals, F::c(cfg.c)).to_f64_lossy());
        trace.bits.push(CGBitStats {
            bit,
            column_value: value.to_f64_lossy(),
            objective: sol.objective.to_f64_lossy(),
            dual_objective,
            master_iterations: sol.iterations,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        info!(
            "bit {}: column value {:.6}, master objective {:.6}",
            bit + 1,
            value.to_f64_lossy(),
            sol.objective.to_f64_lossy()
        );
        w = sol.w;
        mu = sol.duals;
    }

    let mut tag = cfg.tag();
    if trace.stopped_early {
        tag.push_str("+early-stop");
    }
    let model = HashModel::new(functions, w, "cghash", tag)?;
    Ok((model, trace))
}

/// `Σ_t μ_t δh_t` of a column given as pair flips.
fn column_value<F: Scalar>(tp: &TripletPairs, column: &[bool], mu: &[F]) -> F {
    tp.near
        .iter()
        .zip(&tp.far)
        .zip(mu)
        .map(|((&n, &f), &m)| {
            m * F::c((column[f as usize] as i8 - column[n as usize] as i8) as f64)
        })
        .sum()
}

/// `δh` of one triplet under every function in order.
pub fn delta_h_vector<F: Scalar>(
    hashes: &[HashFunction<F>],
    ds: &Dataset<F>,
    t: &Triplet,
) -> Result<Vec<i8>> {
    hashes
        .iter()
        .map(|h| crate::hashcore::delta_h(h, ds.row(t.i), ds.row(t.j), ds.row(t.k)))
        .collect()
}
