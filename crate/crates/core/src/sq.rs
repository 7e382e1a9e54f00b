//! Statistical-query simulation over uniform distributions on sign vectors.
//!
//! Boolean functions are bit-packed truth tables (a set bit means -1, bit
//! `j` of an input index means `x_j = -1`). Queries are tabulated over the
//! distribution's support, so range checks and expectations are exact.

use crate::dist::{signs_from_index, InputDistribution, ENUMERATION_CAP};
use crate::error::{LabError, Result};
use crate::seed;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BooleanFn {
    arity: usize,
    words: Vec<u64>,
}

impl BooleanFn {
    fn empty(arity: usize) -> Result<Self> {
        if arity == 0 || arity > ENUMERATION_CAP {
            return Err(LabError::Resource(format!("truth table of arity {arity}")));
        }
        Ok(BooleanFn { arity, words: vec![0; (1usize << arity).div_ceil(64)] })
    }

    pub fn from_index_fn(arity: usize, mut f: impl FnMut(usize) -> bool) -> Result<Self> {
        let mut b = Self::empty(arity)?;
        for i in 0..b.len() {
            if f(i) {
                b.words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(b)
    }

    /// Tabulates `f` on every sign vector; values must be ±1.
    pub fn from_fn(arity: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut x = vec![0.0; arity];
        let mut bad = None;
        let b = Self::from_index_fn(arity, |i| {
            signs_from_index(i, &mut x);
            let v = f(&x);
            if v != 1.0 && v != -1.0 {
                bad = Some(v);
            }
            v < 0.0
        })?;
        match bad {
            Some(v) => Err(LabError::Domain(format!("boolean function returned {v}"))),
            None => Ok(b),
        }
    }

    pub fn from_table(table: &[i8]) -> Result<Self> {
        let arity = table.len().trailing_zeros() as usize;
        if !table.len().is_power_of_two() || table.iter().any(|&v| v != 1 && v != -1) {
            return Err(LabError::Domain("table must have 2^n entries in {-1, +1}".into()));
        }
        Self::from_index_fn(arity, |i| table[i] < 0)
    }

    /// `f_I(x) = Π_{i∈I} x_i`.
    pub fn parity(n: usize, subset: &[usize]) -> Result<Self> {
        if subset.iter().any(|&i| i >= n) {
            return Err(LabError::Precondition(format!("subset {subset:?} not within {n} coordinates")));
        }
        let mask = subset.iter().fold(0usize, |m, &i| m | 1 << i);
        Self::parity_mask(n, mask)
    }

    pub fn parity_mask(n: usize, mask: usize) -> Result<Self> {
        Self::from_index_fn(n, |i| (i & mask).count_ones() % 2 == 1)
    }

    /// `F_{z'}(x, z) = Π_{i: z'_i = +1} (x_i ∨ z_i)` on arity `2n`, with the OR
    /// false only when both inputs are -1.
    pub fn or_parity(zprime: &[i8]) -> Result<Self> {
        let n = zprime.len();
        let mask = zprime.iter().enumerate().filter(|(_, &v)| v == 1).fold(0usize, |m, (i, _)| m | 1 << i);
        let low = (1usize << n) - 1;
        Self::from_index_fn(2 * n, |i| (i & (i >> n) & low & mask).count_ones() % 2 == 1)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }
    pub fn len(&self) -> usize {
        1 << self.arity
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.bit(i) {
            -1.0
        } else {
            1.0
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.arity {
            return Err(LabError::Dimension { expected: self.arity, got: x.len() });
        }
        Ok(self.value(index_of(x)))
    }

    pub fn negate(&self) -> Self {
        let mut b = self.clone();
        let n = b.len();
        for (k, w) in b.words.iter_mut().enumerate() {
            *w = !*w;
            if (k + 1) * 64 > n {
                *w &= (1u64 << (n - k * 64)) - 1;
            }
        }
        b
    }

    pub fn table(&self) -> Vec<i8> {
        (0..self.len()).map(|i| if self.bit(i) { -1 } else { 1 }).collect()
    }
}

/// Index of a sign vector (bit `j` set iff `x_j < 0`).
pub fn index_of(x: &[f64]) -> usize {
    x.iter().enumerate().fold(0, |m, (j, &v)| if v < 0.0 { m | 1 << j } else { m })
}

/// Truth-table indices of the distribution's support points, in visiting order.
pub fn support_indices(dist: &InputDistribution) -> Result<Vec<usize>> {
    match dist {
        InputDistribution::UniformCube { .. } => {
            Err(LabError::Domain("boolean functions need an enumerable sign distribution".into()))
        }
        InputDistribution::UniformSigns { n } => {
            dist.validate()?;
            Ok((0..1usize << n).collect())
        }
        InputDistribution::InducedPair { n, zset } => {
            dist.validate()?;
            let mut v = Vec::with_capacity(dist.len());
            for z in zset {
                let zi = z.iter().enumerate().fold(0usize, |m, (j, &s)| if s < 0 { m | 1 << j } else { m });
                v.extend((0..1usize << n).map(|x| x | zi << n));
            }
            Ok(v)
        }
    }
}

fn check_arity(f: &BooleanFn, dist: &InputDistribution) -> Result<()> {
    if f.arity != dist.dim() {
        return Err(LabError::Dimension { expected: dist.dim(), got: f.arity });
    }
    Ok(())
}

fn xor_popcount_portable(a: &[u64], b: &[u64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as u64).sum()
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn xor_popcount_hw(a: &[u64], b: &[u64]) -> u64 {
    xor_popcount_portable(a, b)
}

/// Number of differing bits; uses the hardware popcount when available.
fn xor_popcount(a: &[u64], b: &[u64]) -> u64 {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("popcnt") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { xor_popcount_hw(a, b) };
    }
    xor_popcount_portable(a, b)
}

/// Signed `E_{x∼D}[f(x) g(x)]`, exact by enumeration.
pub fn inner_product(f: &BooleanFn, g: &BooleanFn, dist: &InputDistribution) -> Result<f64> {
    check_arity(f, dist)?;
    check_arity(g, dist)?;
    if let InputDistribution::UniformSigns { .. } = dist {
        let differ = xor_popcount(&f.words, &g.words);
        let n = f.len() as f64;
        return Ok((n - 2.0 * differ as f64) / n);
    }
    let idx = support_indices(dist)?;
    let differ = idx.iter().filter(|&&i| f.bit(i) != g.bit(i)).count();
    Ok((idx.len() as f64 - 2.0 * differ as f64) / idx.len() as f64)
}

/// `E_{x∼D}[f(x) h(x)]` for a real-valued `h` tabulated over the support.
pub fn inner_product_real(f: &BooleanFn, h: &[f64], dist: &InputDistribution) -> Result<f64> {
    check_arity(f, dist)?;
    let idx = support_indices(dist)?;
    if h.len() != idx.len() {
        return Err(LabError::Dimension { expected: idx.len(), got: h.len() });
    }
    Ok(correlate(f, &idx, h))
}

fn correlate(f: &BooleanFn, idx: &[usize], h: &[f64]) -> f64 {
    let s: f64 = idx.iter().zip(h).map(|(&i, &v)| if f.bit(i) { -v } else { v }).sum();
    s / idx.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqDimCertificate {
    pub members: Vec<usize>,
    pub d: usize,
    pub max_abs_inner: f64,
    pub pass: bool,
}

impl SqDimCertificate {
    fn new(d: usize, max_abs_inner: f64) -> Self {
        SqDimCertificate {
            members: (0..d).collect(),
            d,
            max_abs_inner,
            pass: max_abs_inner < 1.0 / d as f64,
        }
    }
}

/// All pairwise `|⟨f_i, f_j⟩|`; passes iff every one is below `1/|family|`.
pub fn certify_sqdim(family: &[BooleanFn], dist: &InputDistribution) -> Result<SqDimCertificate> {
    if family.is_empty() {
        return Err(LabError::Precondition("empty family".into()));
    }
    let mut max = 0.0f64;
    for i in 0..family.len() {
        for j in i + 1..family.len() {
            max = max.max(inner_product(&family[i], &family[j], dist)?.abs());
        }
    }
    Ok(SqDimCertificate::new(family.len(), max))
}

pub fn hamming(a: &[i8], b: &[i8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// `⟨F_{z'}, F_{z''}⟩ = (1/2)^{|I(z') △ I(z'')|}` under uniform pairs.
pub fn or_family_inner_product(a: &[i8], b: &[i8]) -> f64 {
    0.5f64.powi(hamming(a, b) as i32)
}

/// Certificate for the OR-parity family from the closed-form inner product.
pub fn certify_or_family(zset: &[Vec<i8>]) -> Result<SqDimCertificate> {
    if zset.is_empty() {
        return Err(LabError::Precondition("empty family".into()));
    }
    let mut max = 0.0f64;
    for i in 0..zset.len() {
        for j in i + 1..zset.len() {
            max = max.max(or_family_inner_product(&zset[i], &zset[j]));
        }
    }
    Ok(SqDimCertificate::new(zset.len(), max))
}

pub const ZSET_RETRY_CAP: usize = 64;

/// `d` uniform sign vectors with pairwise Hamming distance at least `n/4`;
/// whole batches are redrawn until one qualifies.
pub fn hoeffding_zset(n: usize, d: usize, seed: u64) -> Result<Vec<Vec<i8>>> {
    let max_d = 2f64.powf(n as f64 / 12.0).floor() as usize;
    if n == 0 || d == 0 || d > max_d {
        return Err(LabError::Precondition(format!("need 1 <= d <= floor(2^(n/12)) = {max_d} (d={d})")));
    }
    let mut rng = seed::rng(seed);
    let need = n as f64 / 4.0;
    for _ in 0..ZSET_RETRY_CAP {
        let batch: Vec<Vec<i8>> =
            (0..d).map(|_| (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()).collect();
        let ok = (0..d).all(|i| (i + 1..d).all(|j| hamming(&batch[i], &batch[j]) as f64 >= need));
        if ok {
            return Ok(batch);
        }
    }
    Err(LabError::RetryCap(ZSET_RETRY_CAP))
}

/// A statistical query tabulated over the support: `plus[k] = q(x_k, +1)`,
/// `minus[k] = q(x_k, -1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    plus: Vec<f64>,
    minus: Vec<f64>,
}

impl Query {
    pub fn new(plus: Vec<f64>, minus: Vec<f64>) -> Result<Self> {
        if plus.len() != minus.len() {
            return Err(LabError::Dimension { expected: plus.len(), got: minus.len() });
        }
        if let Some(v) = plus.iter().chain(&minus).find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(LabError::Domain(format!("query value {v} outside [-1, 1]")));
        }
        Ok(Query { plus, minus })
    }

    pub fn from_fn(dist: &InputDistribution, q: impl Fn(&[f64], f64) -> f64) -> Result<Self> {
        let mut plus = Vec::with_capacity(dist.len());
        let mut minus = Vec::with_capacity(dist.len());
        dist.for_each_point(|x| {
            plus.push(q(x, 1.0));
            minus.push(q(x, -1.0));
        })?;
        Query::new(plus, minus)
    }

    /// `q(x, y) = y h(x)`.
    pub fn correlation(h: &BooleanFn, dist: &InputDistribution) -> Result<Self> {
        check_arity(h, dist)?;
        let idx = support_indices(dist)?;
        let plus: Vec<f64> = idx.iter().map(|&i| h.value(i)).collect();
        let minus = plus.iter().map(|v| -v).collect();
        Ok(Query { plus, minus })
    }

    pub fn len(&self) -> usize {
        self.plus.len()
    }
    pub fn is_empty(&self) -> bool {
        self.plus.is_empty()
    }

    /// `E[q(x, f(x))]`.
    pub fn expectation(&self, f: &BooleanFn, idx: &[usize]) -> f64 {
        let s: f64 = idx
            .iter()
            .enumerate()
            .map(|(k, &i)| if f.bit(i) { self.minus[k] } else { self.plus[k] })
            .sum();
        s / idx.len() as f64
    }

    /// `C_q = E_{x, y∼±1}[q(x, y)]`.
    pub fn label_free_mean(&self) -> f64 {
        self.plus.iter().zip(&self.minus).map(|(a, b)| 0.5 * (a + b)).sum::<f64>() / self.len() as f64
    }

    /// `(q(x,+1) - q(x,-1)) / 2`; `E[q(x, f(x))] = C_q + ⟨f, this⟩`.
    pub fn label_part(&self) -> Vec<f64> {
        self.plus.iter().zip(&self.minus).map(|(a, b)| 0.5 * (a - b)).collect()
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in self.plus.iter().chain(&self.minus) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub digest: String,
    pub answer: f64,
    /// Adversarial policy only: family members ruled out by this query.
    pub inconsistent: Option<usize>,
}

#[derive(Clone, Debug)]
pub enum OraclePolicy {
    HonestNoisy { seed: u64 },
    Adversarial { family: Vec<BooleanFn> },
}

pub struct SqOracle {
    dist: InputDistribution,
    idx: Vec<usize>,
    tau: f64,
    budget: Option<usize>,
    target: Option<BooleanFn>,
    family: Vec<BooleanFn>,
    consistent: Vec<bool>,
    rng: rand_chacha::ChaCha8Rng,
    log: Vec<QueryRecord>,
}

impl SqOracle {
    fn build(dist: &InputDistribution, tau: f64, budget: Option<usize>) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(LabError::Precondition(format!("tolerance {tau} not in (0, 1)")));
        }
        Ok(SqOracle {
            dist: dist.clone(),
            idx: support_indices(dist)?,
            tau,
            budget,
            target: None,
            family: Vec::new(),
            consistent: Vec::new(),
            rng: seed::rng(0),
            log: Vec::new(),
        })
    }

    /// Answers `E[q(x, f(x))] + U[-τ, τ]`.
    pub fn honest(target: BooleanFn, dist: &InputDistribution, tau: f64, seed: u64) -> Result<Self> {
        check_arity(&target, dist)?;
        let mut o = Self::build(dist, tau, None)?;
        o.target = Some(target);
        o.rng = seed::rng(seed);
        Ok(o)
    }

    /// Answers `C_q` for every query and tracks which family members stay
    /// within `d^{-1/3}` of all answers.
    pub fn adversarial(family: Vec<BooleanFn>, dist: &InputDistribution, tau: f64) -> Result<Self> {
        if family.is_empty() {
            return Err(LabError::Precondition("empty family".into()));
        }
        for f in &family {
            check_arity(f, dist)?;
        }
        let mut o = Self::build(dist, tau, None)?;
        o.consistent = vec![true; family.len()];
        o.family = family;
        Ok(o)
    }

    pub fn new(target: Option<BooleanFn>, dist: &InputDistribution, tau: f64, policy: OraclePolicy) -> Result<Self> {
        match policy {
            OraclePolicy::HonestNoisy { seed } => {
                let t = target.ok_or_else(|| LabError::Precondition("honest oracle needs a target".into()))?;
                Self::honest(t, dist, tau, seed)
            }
            OraclePolicy::Adversarial { family } => Self::adversarial(family, dist, tau),
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn dist(&self) -> &InputDistribution {
        &self.dist
    }
    pub fn support(&self) -> &[usize] {
        &self.idx
    }
    pub fn queries_made(&self) -> usize {
        self.log.len()
    }
    pub fn remaining(&self) -> Option<usize> {
        self.budget.map(|b| b - self.log.len())
    }
    pub fn log(&self) -> &[QueryRecord] {
        &self.log
    }
    pub fn is_adversarial(&self) -> bool {
        self.target.is_none()
    }

    /// Consistency radius `d^{-1/3}` of the adversary.
    pub fn consistency_radius(&self) -> f64 {
        (self.family.len() as f64).powf(-1.0 / 3.0)
    }

    pub fn consistent_members(&self) -> Vec<usize> {
        (0..self.consistent.len()).filter(|&i| self.consistent[i]).collect()
    }

    /// True expectation under the honest target (for tests and audits).
    pub fn true_expectation(&self, q: &Query) -> Option<f64> {
        self.target.as_ref().map(|t| q.expectation(t, &self.idx))
    }

    pub fn query(&mut self, q: &Query) -> Result<f64> {
        if q.len() != self.idx.len() {
            return Err(LabError::Dimension { expected: self.idx.len(), got: q.len() });
        }
        if let Some(b) = self.budget {
            if self.log.len() >= b {
                return Err(LabError::BudgetExhausted(b));
            }
        }
        let (answer, inconsistent) = match &self.target {
            Some(t) => {
                let noise = self.rng.random_range(-self.tau..=self.tau);
                (q.expectation(t, &self.idx) + noise, None)
            }
            None => {
                let c = q.label_free_mean();
                let part = q.label_part();
                let radius = self.consistency_radius();
                let mut count = 0;
                for (i, f) in self.family.iter().enumerate() {
                    if correlate(f, &self.idx, &part).abs() > radius {
                        count += 1;
                        self.consistent[i] = false;
                    }
                }
                (c, Some(count))
            }
        };
        self.log.push(QueryRecord { digest: q.digest(), answer, inconsistent });
        Ok(answer)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakLearnerOutput {
    pub index: usize,
    /// ±1; the hypothesis is `sign · f_index`.
    pub sign: f64,
    pub answer: f64,
    pub hypothesis: BooleanFn,
}

/// Queries `y f_j(x)` for every member and returns `±f_j` with the largest
/// `|answer|` (lowest index on ties), signed by the answer.
pub fn correlation_weak_learner(oracle: &mut SqOracle, family: &[BooleanFn]) -> Result<WeakLearnerOutput> {
    if family.is_empty() {
        return Err(LabError::Precondition("empty family".into()));
    }
    let mut best = (0usize, f64::NEG_INFINITY, 0.0);
    for (j, f) in family.iter().enumerate() {
        let a = oracle.query(&Query::correlation(f, oracle.dist())?)?;
        if a.abs() > best.1 {
            best = (j, a.abs(), a);
        }
    }
    let (index, _, answer) = best;
    let sign = if answer < 0.0 { -1.0 } else { 1.0 };
    let hypothesis = if sign < 0.0 { family[index].negate() } else { family[index].clone() };
    Ok(WeakLearnerOutput { index, sign, answer, hypothesis })
}

/// A statistical-query learner: issues queries through the oracle and
/// returns a real-valued hypothesis tabulated over the oracle's support.
pub trait SqLearner {
    fn name(&self) -> String;
    fn learn(&mut self, oracle: &mut SqOracle) -> Result<Vec<f64>>;
}

/// Correlation queries on the first `budget` family members.
pub struct CorrelationLearner {
    pub family: Vec<BooleanFn>,
}

impl SqLearner for CorrelationLearner {
    fn name(&self) -> String {
        "correlation".into()
    }
    fn learn(&mut self, oracle: &mut SqOracle) -> Result<Vec<f64>> {
        let k = oracle.remaining().unwrap_or(self.family.len()).min(self.family.len());
        if k == 0 {
            return Ok(vec![0.0; oracle.support().len()]);
        }
        let out = correlation_weak_learner(oracle, &self.family[..k])?;
        Ok(oracle.support().iter().map(|&i| out.hypothesis.value(i)).collect())
    }
}

/// Random ±1 correlation queries; hypothesis is the answer-weighted sum of
/// the probed functions.
pub struct RandomQueryLearner {
    pub seed: u64,
}

impl SqLearner for RandomQueryLearner {
    fn name(&self) -> String {
        "random-query".into()
    }
    fn learn(&mut self, oracle: &mut SqOracle) -> Result<Vec<f64>> {
        let mut rng = seed::rng(self.seed);
        let m = oracle.support().len();
        let mut h = vec![0.0; m];
        let k = oracle.remaining().unwrap_or(1);
        for _ in 0..k {
            let r: Vec<f64> = (0..m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let minus = r.iter().map(|v| -v).collect();
            let a = oracle.query(&Query::new(r.clone(), minus)?)?;
            for (hv, rv) in h.iter_mut().zip(&r) {
                *hv += a * rv;
            }
        }
        Ok(h)
    }
}

/// One query `q(x, y) = y`; predicts the sign of the answer everywhere.
pub struct MajorityLearner;

impl SqLearner for MajorityLearner {
    fn name(&self) -> String {
        "majority".into()
    }
    fn learn(&mut self, oracle: &mut SqOracle) -> Result<Vec<f64>> {
        let m = oracle.support().len();
        if oracle.remaining() == Some(0) {
            return Ok(vec![1.0; m]);
        }
        let a = oracle.query(&Query::new(vec![1.0; m], vec![-1.0; m])?)?;
        Ok(vec![if a < 0.0 { -1.0 } else { 1.0 }; m])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameResult {
    pub learner: String,
    pub chosen: usize,
    pub correlation: f64,
    pub loss: f64,
    pub loss_floor: f64,
    pub transcript: Vec<QueryRecord>,
    pub consistent_remaining: usize,
    pub max_inconsistent: usize,
    pub inconsistent_cap: f64,
}

/// Plays the `C_q` adversary against `learner`, then picks the consistent
/// member least correlated with the clipped hypothesis and reports the exact
/// hinge loss of the hypothesis on it.
pub fn adversarial_game(
    family: &[BooleanFn],
    dist: &InputDistribution,
    learner: &mut dyn SqLearner,
    budget: usize,
    tau: f64,
) -> Result<GameResult> {
    let d = family.len() as f64;
    let cube = d.powf(1.0 / 3.0);
    if tau < (1.0 - 1e-12) / cube {
        return Err(LabError::Precondition(format!("tolerance {tau} below d^(-1/3) = {}", 1.0 / cube)));
    }
    if budget as f64 > cube / 8.0 * (1.0 + 1e-12) {
        return Err(LabError::Precondition(format!("budget {budget} above d^(1/3)/8 = {}", cube / 8.0)));
    }
    let mut oracle = SqOracle::adversarial(family.to_vec(), dist, tau)?.with_budget(budget);
    let h = learner.learn(&mut oracle)?;
    if h.len() != oracle.support().len() {
        return Err(LabError::Dimension { expected: oracle.support().len(), got: h.len() });
    }
    let clipped: Vec<f64> = h.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    let limit = 2.0 / d.sqrt();
    let mut best: Option<(usize, f64)> = None;
    for i in oracle.consistent_members() {
        let c = correlate(&family[i], oracle.support(), &clipped);
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((i, c));
        }
    }
    let (chosen, correlation) = match best {
        Some((i, c)) if c < limit => (i, c),
        _ => {
            return Err(LabError::Assertion(format!(
                "no consistent member with correlation below {limit} (best {best:?})"
            )))
        }
    };
    let idx = oracle.support();
    let loss = idx
        .iter()
        .zip(&h)
        .map(|(&i, &v)| crate::net::hinge(family[chosen].value(i), v))
        .sum::<f64>()
        / idx.len() as f64;
    let max_inconsistent = oracle.log().iter().filter_map(|r| r.inconsistent).max().unwrap_or(0);
    Ok(GameResult {
        learner: learner.name(),
        chosen,
        correlation,
        loss,
        loss_floor: 1.0 - limit,
        transcript: oracle.log().to_vec(),
        consistent_remaining: oracle.consistent_members().len(),
        max_inconsistent,
        inconsistent_cap: 4.0 * d.powf(2.0 / 3.0),
    })
}

/// `2 / (τ² - 1/d)`
pub fn correlation_count_bound(tau: f64, d: usize) -> f64 {
    2.0 / (tau * tau - 1.0 / d as f64)
}

/// Counts members with `|⟨f_j, h⟩| >= τ` and checks it against
/// `2 / (τ² - 1/d)`. `h` is tabulated over the support with values in `[-1, 1]`.
pub fn correlation_count_check(
    family: &[BooleanFn],
    dist: &InputDistribution,
    h: &[f64],
    tau: f64,
) -> Result<usize> {
    let d = family.len();
    if d == 0 || tau * tau <= 1.0 / d as f64 {
        return Err(LabError::Domain(format!("need tau^2 > 1/d (tau={tau}, d={d})")));
    }
    if h.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(LabError::Domain("h must take values in [-1, 1]".into()));
    }
    let cert = certify_sqdim(family, dist)?;
    if !cert.pass {
        return Err(LabError::Domain(format!("family is not almost orthogonal (max {})", cert.max_abs_inner)));
    }
    let idx = support_indices(dist)?;
    if h.len() != idx.len() {
        return Err(LabError::Dimension { expected: idx.len(), got: h.len() });
    }
    let mut count = 0;
    for f in family {
        if correlate(f, &idx, h).abs() >= tau {
            count += 1;
        }
    }
    let bound = correlation_count_bound(tau, d);
    if count as f64 > bound {
        return Err(LabError::Assertion(format!("{count} members correlate above {tau}, bound {bound}")));
    }
    Ok(count)
}

/// All `2^n` parities, indexed by their coordinate mask.
pub fn parity_family(n: usize) -> Result<Vec<BooleanFn>> {
    (0..1usize << n).map(|m| BooleanFn::parity_mask(n, m)).collect()
}

/// A uniformly random subset of size `k` (0-based), sorted.
pub fn random_subset(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(&mut seed::rng(seed));
    let mut s = v[..k.min(n)].to_vec();
    s.sort_unstable();
    s
}
