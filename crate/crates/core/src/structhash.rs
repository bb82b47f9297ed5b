//! StructHash: hash functions learned by column generation against a
//! 1-slack structured SVM over per-query rankings, in full or stage-wise
//! mode.

use std::time::Instant;

use log::{info, warn};

use crate::data::{seeded_rng, streams, Dataset, QueryNeighborhood, Triplet};
use crate::error::{shape, Error, Result};
use crate::hashcore::{BinaryCode, HashFunction, HashModel};
use crate::hashlearn::{
    learn_hash_function, DualWeights, PairAccumulator, PairWeights, SubproblemConfig,
};
use crate::rankloss::{
    label_loss, margin_term, most_violated, FlipCounts, Prediction, RankScoreKind,
};
use crate::scalar::Scalar;
use crate::simplex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Every cutting-plane run re-learns the weights of all bits.
    Full,
    /// Each bit learns two weights: its own and one shared by earlier bits.
    Stagewise,
}

impl TrainMode {
    pub fn tag(self) -> &'static str {
        match self {
            TrainMode::Full => "full",
            TrainMode::Stagewise => "stagewise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructConfig {
    pub loss: RankScoreKind,
    pub c: f64,
    pub bits: usize,
    pub eps_cp: f64,
    pub mode: TrainMode,
    pub max_cp_iters: usize,
    pub subproblem: SubproblemConfig,
}

impl Default for StructConfig {
    fn default() -> Self {
        Self {
            loss: RankScoreKind::Ndcg { k: 10 },
            c: 10.0,
            bits: 32,
            eps_cp: 0.01,
            mode: TrainMode::Full,
            max_cp_iters: 100,
            subproblem: SubproblemConfig::default(),
        }
    }
}

impl StructConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if !(self.eps_cp > 0.0) {
            return Err(Error::Config("eps_cp must be positive".into()));
        }
        if self.bits == 0 || self.max_cp_iters == 0 {
            return Err(Error::Config(
                "bits and max_cp_iters must be at least 1".into(),
            ));
        }
        self.subproblem.validate()
    }

    pub fn tag(&self) -> String {
        format!("{}+{}", self.loss.tag(), self.mode.tag())
    }
}

/// XOR codes of one query against its candidates, relevant rows first.
#[derive(Debug, Clone)]
struct QueryCodes {
    xors: Vec<BinaryCode>,
}

impl QueryCodes {
    fn new(gt: &QueryNeighborhood, codes: &[BinaryCode]) -> Result<Self> {
        let q = codes
            .get(gt.query)
            .ok_or_else(|| shape(format!("query row {} has no code", gt.query)))?;
        let xors = gt
            .relevant
            .iter()
            .chain(&gt.irrelevant)
            .map(|&j| {
                codes
                    .get(j)
                    .map(|c| q.xor(c))
                    .ok_or_else(|| shape(format!("candidate row {j} has no code")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { xors })
    }

    /// `s_j = −Σ_r w_r·[x̃_i ≠ x̃_j]_r`
    fn scores<F: Scalar>(&self, w: &[F]) -> Vec<F> {
        self.xors.iter().map(|x| -x.weighted_count(w)).collect()
    }

    /// `(2/(PN))·(Σ_k cnt_k·xor_k − Σ_j cnt_j·xor_j)`
    fn delta_psi<F: Scalar>(&self, counts: &FlipCounts, bits: usize) -> Vec<F> {
        let p = counts.relevant.len();
        let n = counts.irrelevant.len();
        let mut acc = vec![0i64; bits];
        for (x, &c) in self.xors[..p].iter().zip(&counts.relevant) {
            if c > 0 {
                x.ones().for_each(|r| acc[r] -= c as i64);
            }
        }
        for (x, &c) in self.xors[p..].iter().zip(&counts.irrelevant) {
            if c > 0 {
                x.ones().for_each(|r| acc[r] += c as i64);
            }
        }
        let scale = F::c(2.0) / F::from_count(p * n);
        acc.into_iter().map(|a| F::c(a as f64) * scale).collect()
    }
}

fn check_codes(codes: &[BinaryCode]) -> Result<usize> {
    let m = codes.first().map_or(0, BinaryCode::len);
    if m == 0 || codes.iter().any(|c| c.len() != m) {
        return Err(shape("codes must be non-empty and of equal length"));
    }
    Ok(m)
}

/// `Ψ(x_i, y) = Σ_{j∈X⁺}Σ_{k∈X⁻} y_jk·(φ_j − φ_k)/(|X⁺||X⁻|)` with
/// `φ_j = −|x̃_i − x̃_j|`. SNDCG predictions use the pair orders of their
/// simple rankings.
pub fn joint_feature<F: Scalar>(
    gt: &QueryNeighborhood,
    y: &Prediction,
    codes: &[BinaryCode],
) -> Result<Vec<F>> {
    let m = check_codes(codes)?;
    let qc = QueryCodes::new(gt, codes)?;
    let counts = y.flip_counts(gt)?;
    let p = gt.relevant.len();
    let n = gt.irrelevant.len();
    // relevant j after b irrelevant rows weighs φ_j by N − 2b; irrelevant k
    // with c relevant rows below weighs φ_k by 2c − P
    let mut acc = vec![0i64; m];
    for (x, &c) in qc.xors[..p].iter().zip(&counts.relevant) {
        let coef = n as i64 - 2 * c as i64;
        x.ones().for_each(|r| acc[r] -= coef);
    }
    for (x, &c) in qc.xors[p..].iter().zip(&counts.irrelevant) {
        let coef = 2 * c as i64 - p as i64;
        x.ones().for_each(|r| acc[r] -= coef);
    }
    let scale = F::one() / F::from_count(p * n);
    Ok(acc.into_iter().map(|a| F::c(a as f64) * scale).collect())
}

/// `Ψ(x_i, y_i) − Ψ(x_i, y) = (2/(|X⁺||X⁻|))·Σ_{(j,k) flipped}(|x̃_i − x̃_k| − |x̃_i − x̃_j|)`.
pub fn delta_psi<F: Scalar>(
    gt: &QueryNeighborhood,
    y: &Prediction,
    codes: &[BinaryCode],
) -> Result<Vec<F>> {
    let m = check_codes(codes)?;
    let qc = QueryCodes::new(gt, codes)?;
    Ok(qc.delta_psi(&y.flip_counts(gt)?, m))
}

/// One aggregated 1-slack constraint `wᵀfeat_delta ≥ loss − ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingSetEntry<F> {
    pub c: Vec<bool>,
    /// Prediction for every query with `c_i` set.
    pub y: Vec<Option<Prediction>>,
    /// `(1/n)·Σ c_i·Δ(y_i, y)`
    pub loss: F,
    /// `(1/n)·Σ c_i·δΨ_i(y)`, in the coordinates of the master problem.
    pub feat_delta: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterLp<F> {
    pub w: Vec<F>,
    pub xi: F,
    pub lambdas: Vec<F>,
    /// `1ᵀw + C·ξ`
    pub objective: F,
    /// `Σ λ_e·loss_e`
    pub dual_objective: F,
}

/// Solves `min 1ᵀw + C·ξ s.t. wᵀf_e ≥ l_e − ξ, w ≥ 0, ξ ≥ 0` through its dual
/// `max Σλ_e l_e s.t. Σ_e λ_e f_e ≤ 1, Σλ ≤ C, λ ≥ 0`.
pub fn solve_1slack_master<F: Scalar>(ws: &[WorkingSetEntry<F>], c: F) -> Result<MasterLp<F>> {
    let first = ws
        .first()
        .ok_or_else(|| Error::Config("empty working set".into()))?;
    let d = first.feat_delta.len();
    if ws.iter().any(|e| e.feat_delta.len() != d) {
        return Err(shape("working-set entries disagree on feature length"));
    }
    if !(c > F::zero()) {
        return Err(Error::Config("C must be positive".into()));
    }
    let obj: Vec<F> = ws.iter().map(|e| e.loss).collect();
    let mut rows: Vec<Vec<F>> = (0..d)
        .map(|r| ws.iter().map(|e| e.feat_delta[r]).collect())
        .collect();
    rows.push(vec![F::one(); ws.len()]);
    let mut rhs = vec![F::one(); d];
    rhs.push(c);
    let sol = simplex::maximize(&obj, &rows, &rhs)?;
    let w: Vec<F> = sol.duals[..d].to_vec();
    let xi = ws
        .iter()
        .map(|e| e.loss - e.feat_delta.iter().zip(&w).map(|(&f, &x)| f * x).sum::<F>())
        .fold(F::zero(), F::max);
    let objective = w.iter().copied().sum::<F>() + c * xi;
    Ok(MasterLp {
        w,
        xi,
        lambdas: sol.x,
        objective,
        dual_objective: sol.value,
    })
}

/// How bit-level features map to master variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// One variable per bit.
    Full,
    /// Variable 0 on the last bit, variable 1 shared by all earlier bits.
    Stagewise,
}

impl Projection {
    fn collapse<F: Scalar>(self, f: &[F]) -> Vec<F> {
        match self {
            Projection::Full => f.to_vec(),
            Projection::Stagewise => {
                let (last, prev) = f.split_last().expect("at least one bit");
                if prev.is_empty() {
                    vec![*last]
                } else {
                    vec![*last, prev.iter().copied().sum()]
                }
            }
        }
    }

    fn expand<F: Scalar>(self, w: &[F], bits: usize) -> Vec<F> {
        match self {
            Projection::Full => w.to_vec(),
            Projection::Stagewise => {
                let shared = w.get(1).copied().unwrap_or_else(F::zero);
                let mut out = vec![shared; bits];
                out[bits - 1] = w[0];
                out
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CuttingPlaneOutcome<F> {
    /// Master variables.
    pub w: Vec<F>,
    /// Per-bit weights implied by `w`.
    pub bit_weights: Vec<F>,
    pub xi: F,
    pub lambdas: Vec<F>,
    pub working_set: Vec<WorkingSetEntry<F>>,
    pub objective: F,
    pub dual_objective: F,
    /// Inference rounds run.
    pub iterations: usize,
    pub converged: bool,
    /// Final aggregate violation `(1/n)·Σ c_i·H_i`.
    pub violation: F,
    /// Time spent inside the argmax routine.
    pub inference_ms: f64,
}

/// Algorithm 2: alternate master solves with per-query loss-augmented
/// inference until `(1/n)·Σ c_i·(Δ_i − wᵀδΨ_i) ≤ ξ + eps_cp`.
#[allow(clippy::too_many_arguments)]
pub fn cutting_plane<F: Scalar>(
    codes: &[BinaryCode],
    nbhds: &[QueryNeighborhood],
    kind: RankScoreKind,
    c: F,
    eps_cp: F,
    max_iters: usize,
    projection: Projection,
) -> Result<CuttingPlaneOutcome<F>> {
    kind.validate()?;
    if nbhds.is_empty() {
        return Err(Error::Config(
            "cutting plane needs at least one query".into(),
        ));
    }
    if max_iters == 0 {
        return Err(Error::Config("max_iters must be at least 1".into()));
    }
    let m = check_codes(codes)?;
    let caches: Vec<QueryCodes> = nbhds
        .iter()
        .map(|g| QueryCodes::new(g, codes))
        .collect::<Result<_>>()?;
    let n = F::from_count(nbhds.len());

    let mut preds: Vec<Option<Prediction>> = nbhds
        .iter()
        .map(|g| Some(Prediction::reversed(kind, g)))
        .collect();
    let mut c_vec = vec![true; nbhds.len()];
    let mut working_set = Vec::new();
    let mut iterations = 0;
    let mut inference_ms = 0.0;

    loop {
        working_set.push(entry(
            &c_vec, preds, nbhds, &caches, kind, n, m, projection,
        )?);
        let lp = solve_1slack_master(&working_set, c)?;
        let bit_weights = projection.expand(&lp.w, m);

        let mut violation = F::zero();
        let mut next = Vec::with_capacity(nbhds.len());
        for (i, (gt, qc)) in nbhds.iter().zip(&caches).enumerate() {
            let scores = qc.scores(&bit_weights);
            let start = Instant::now();
            let y = most_violated(kind, &scores, gt)?;
            inference_ms += start.elapsed().as_secs_f64() * 1e3;
            let counts = y.flip_counts(gt)?;
            let h =
                label_loss::<F>(kind, &y, gt)? - margin_term(&counts, &scores, gt.relevant.len());
            c_vec[i] = h > F::zero();
            if c_vec[i] {
                violation += h;
            }
            next.push(c_vec[i].then_some(y));
        }
        iterations += 1;
        violation /= n;

        let converged = violation <= lp.xi + eps_cp;
        if converged || iterations >= max_iters {
            if !converged {
                warn!(
                    "cutting plane hit {max_iters} iterations with violation {:.3e} above slack {:.3e}",
                    violation.to_f64_lossy(),
                    lp.xi.to_f64_lossy()
                );
            }
            return Ok(CuttingPlaneOutcome {
                w: lp.w,
                bit_weights,
                xi: lp.xi,
                lambdas: lp.lambdas,
                working_set,
                objective: lp.objective,
                dual_objective: lp.dual_objective,
                iterations,
                converged,
                violation,
                inference_ms,
            });
        }
        preds = next;
    }
}

#[allow(clippy::too_many_arguments)]
fn entry<F: Scalar>(
    c: &[bool],
    y: Vec<Option<Prediction>>,
    nbhds: &[QueryNeighborhood],
    caches: &[QueryCodes],
    kind: RankScoreKind,
    n: F,
    bits: usize,
    projection: Projection,
) -> Result<WorkingSetEntry<F>> {
    let mut loss = F::zero();
    let mut feat = vec![F::zero(); bits];
    for ((gt, qc), (&ci, yi)) in nbhds.iter().zip(caches).zip(c.iter().zip(&y)) {
        if !ci {
            continue;
        }
        let yi = yi
            .as_ref()
            .ok_or_else(|| shape("selected query without a prediction"))?;
        loss += label_loss::<F>(kind, yi, gt)?;
        for (f, d) in feat
            .iter_mut()
            .zip(qc.delta_psi::<F>(&yi.flip_counts(gt)?, bits))
        {
            *f += d;
        }
    }
    feat.iter_mut().for_each(|f| *f /= n);
    Ok(WorkingSetEntry {
        c: c.to_vec(),
        y,
        loss: loss / n,
        feat_delta: projection.collapse(&feat),
    })
}

/// Triplet weights `μ_(i,y) = (2/(|X⁺_i||X⁻_i|))·Σ_e λ_e·c_i`, added to every
/// flipped pair of the prediction for query `i`.
pub fn aggregate_mu<F: Scalar>(
    lambdas: &[F],
    ws: &[WorkingSetEntry<F>],
    nbhds: &[QueryNeighborhood],
) -> Result<DualWeights<F>> {
    if lambdas.len() != ws.len() {
        return Err(shape(format!(
            "{} multipliers for {} entries",
            lambdas.len(),
            ws.len()
        )));
    }
    let mut out = DualWeights::new();
    for (&lam, e) in lambdas.iter().zip(ws) {
        if !(lam > F::zero()) {
            continue;
        }
        for (gt, (ci, yi)) in nbhds.iter().zip(e.c.iter().zip(&e.y)) {
            let (true, Some(y)) = (*ci, yi) else { continue };
            let coeff = F::c(2.0) * lam / F::from_count(gt.relevant.len() * gt.irrelevant.len());
            for (j, k) in flipped_pairs(y, gt) {
                out.add(Triplet::new(gt.query, j, k), coeff)?;
            }
        }
    }
    Ok(out)
}

fn flipped_pairs(y: &Prediction, gt: &QueryNeighborhood) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    match y {
        Prediction::Full(r) => {
            let mut seen = Vec::new();
            for &idx in &r.order {
                if gt.is_relevant(idx) {
                    out.extend(seen.iter().map(|&k| (idx, k)));
                } else {
                    seen.push(idx);
                }
            }
        }
        Prediction::Simple(list) => {
            for sr in list {
                out.extend(sr.above.iter().map(|&k| (sr.relevant, k)));
            }
        }
    }
    out
}

/// The same weights as [`aggregate_mu`] collapsed straight onto row pairs.
pub fn aggregate_pair_weights<F: Scalar>(
    lambdas: &[F],
    ws: &[WorkingSetEntry<F>],
    nbhds: &[QueryNeighborhood],
) -> Result<PairWeights<F>> {
    if lambdas.len() != ws.len() {
        return Err(shape(format!(
            "{} multipliers for {} entries",
            lambdas.len(),
            ws.len()
        )));
    }
    // per-query coefficient on each candidate slot, relevant first
    let mut dense: Vec<Vec<F>> = nbhds
        .iter()
        .map(|g| vec![F::zero(); g.n_candidates()])
        .collect();
    for (&lam, e) in lambdas.iter().zip(ws) {
        if !(lam > F::zero()) {
            continue;
        }
        for ((gt, acc), (ci, yi)) in nbhds.iter().zip(dense.iter_mut()).zip(e.c.iter().zip(&e.y)) {
            let (true, Some(y)) = (*ci, yi) else { continue };
            let coeff = F::c(2.0) * lam / F::from_count(gt.relevant.len() * gt.irrelevant.len());
            add_counts(acc, &y.flip_counts(gt)?, coeff);
        }
    }
    Ok(dense_to_pairs(nbhds, &dense))
}

fn add_counts<F: Scalar>(acc: &mut [F], counts: &FlipCounts, coeff: F) {
    let p = counts.relevant.len();
    for (a, &c) in acc[..p].iter_mut().zip(&counts.relevant) {
        *a -= coeff * F::from_count(c as usize);
    }
    for (a, &c) in acc[p..].iter_mut().zip(&counts.irrelevant) {
        *a += coeff * F::from_count(c as usize);
    }
}

fn dense_to_pairs<F: Scalar>(nbhds: &[QueryNeighborhood], dense: &[Vec<F>]) -> PairWeights<F> {
    let mut acc = PairAccumulator::new();
    for (gt, row) in nbhds.iter().zip(dense) {
        for (&cand, &w) in gt.relevant.iter().chain(&gt.irrelevant).zip(row) {
            if !w.is_zero() {
                acc.add(gt.query, cand, w);
            }
        }
    }
    acc.finish()
}

/// Starting weights: `μ = C/n` on the all-irrelevant-first prediction of
/// every query, i.e. `C/n` on each of its triplets.
pub fn initial_pair_weights<F: Scalar>(nbhds: &[QueryNeighborhood], c: F) -> PairWeights<F> {
    let coeff = c / F::from_count(nbhds.len().max(1));
    let dense: Vec<Vec<F>> = nbhds
        .iter()
        .map(|g| {
            let mut row = vec![F::zero(); g.n_candidates()];
            let counts = FlipCounts {
                relevant: vec![g.irrelevant.len() as u32; g.relevant.len()],
                irrelevant: vec![g.relevant.len() as u32; g.irrelevant.len()],
            };
            add_counts(&mut row, &counts, coeff);
            row
        })
        .collect();
    dense_to_pairs(nbhds, &dense)
}

/// Cutting plane over two variables: `w_t` on the last bit of `codes` and
/// `w_shared` on every earlier bit (only `w_t` when there is one bit).
/// Returns `(w_t, w_shared)` and the run.
pub fn solve_stagewise_master<F: Scalar>(
    codes: &[BinaryCode],
    nbhds: &[QueryNeighborhood],
    kind: RankScoreKind,
    c: F,
    eps_cp: F,
    max_iters: usize,
) -> Result<((F, F), CuttingPlaneOutcome<F>)> {
    let out = cutting_plane(
        codes,
        nbhds,
        kind,
        c,
        eps_cp,
        max_iters,
        Projection::Stagewise,
    )?;
    let wt = out.w[0];
    let shared = out.w.get(1).copied().unwrap_or_else(F::zero);
    Ok(((wt, shared), out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructBitStats {
    pub bit: usize,
    pub objective: f64,
    pub dual_objective: f64,
    pub cp_iterations: usize,
    pub converged: bool,
    pub inference_ms: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StructTrace {
    pub bits: Vec<StructBitStats>,
    pub stopped_early: bool,
}

impl StructTrace {
    pub fn total_cp_iterations(&self) -> usize {
        self.bits.iter().map(|b| b.cp_iterations).sum()
    }

    pub fn total_wall_ms(&self) -> f64 {
        self.bits.iter().map(|b| b.wall_ms).sum()
    }

    /// Inference time per cutting-plane iteration, averaged over all bits.
    pub fn mean_inference_ms(&self) -> f64 {
        let iters = self.total_cp_iterations();
        if iters == 0 {
            return 0.0;
        }
        self.bits.iter().map(|b| b.inference_ms).sum::<f64>() / iters as f64
    }
}

/// Algorithm 3. Neighborhoods index rows of `ds`.
pub fn train_structhash<F: Scalar>(
    ds: &Dataset<F>,
    nbhds: &[QueryNeighborhood],
    cfg: &StructConfig,
    seed: u64,
) -> Result<(HashModel<F>, StructTrace)> {
    cfg.validate()?;
    if nbhds.is_empty() {
        return Err(Error::Config(
            "training needs at least one query neighborhood".into(),
        ));
    }
    let limit = ds.len();
    if nbhds
        .iter()
        .any(|g| g.query >= limit || g.relevant.iter().chain(&g.irrelevant).any(|&j| j >= limit))
    {
        return Err(shape(format!(
            "neighborhood index out of range for {limit} rows"
        )));
    }
    let c = F::c(cfg.c);
    let eps = F::c(cfg.eps_cp);
    let projection = match cfg.mode {
        TrainMode::Full => Projection::Full,
        TrainMode::Stagewise => Projection::Stagewise,
    };

    let mut pw = initial_pair_weights(nbhds, c);
    let mut functions: Vec<HashFunction<F>> = Vec::new();
    let mut codes: Vec<BinaryCode> = vec![BinaryCode::zeros(0); ds.len()];
    let mut weights: Vec<F> = Vec::new();
    let mut trace = StructTrace::default();

    for bit in 0..cfg.bits {
        let start = Instant::now();
        if pw.weights.iter().all(|w| w.is_zero()) {
            info!("triplet weights vanished after {bit} bits; stopping");
            trace.stopped_early = true;
            break;
        }
        let mut rng = seeded_rng(seed, streams::HASH_LEARN + bit as u64);
        let h = learn_hash_function(&pw, ds, &cfg.subproblem, &mut rng)?;
        for (code, x) in codes.iter_mut().zip(ds.rows()) {
            code.push(h.bit(x));
        }
        functions.push(h);

        let out = cutting_plane(
            &codes,
            nbhds,
            cfg.loss,
            c,
            eps,
            cfg.max_cp_iters,
            projection,
        )?;
        pw = aggregate_pair_weights(&out.lambdas, &out.working_set, nbhds)?;
        weights = out.bit_weights.clone();
        trace.bits.push(StructBitStats {
            bit,
            objective: out.objective.to_f64_lossy(),
            dual_objective: out.dual_objective.to_f64_lossy(),
            cp_iterations: out.iterations,
            converged: out.converged,
            inference_ms: out.inference_ms,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        info!(
            "bit {}: master objective {:.6}, {} cutting-plane iterations",
            bit + 1,
            out.objective.to_f64_lossy(),
            out.iterations
        );
    }

    if cfg.mode == TrainMode::Stagewise {
        weights = vec![F::one(); functions.len()];
    }
    let mut tag = cfg.tag();
    if trace.stopped_early {
        tag.push_str("+early-stop");
    }
    let model = HashModel::new(functions, weights, "structhash", tag)?;
    Ok((model, trace))
}
