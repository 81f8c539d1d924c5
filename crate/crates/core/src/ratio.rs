//! Class-ratio estimation.
//!
//! Each spot becomes a sparse feature vector holding the mention priors of
//! its candidates (renormalized over the candidate set). With a linear
//! kernel the mean embedding of a class is the plain average of those
//! vectors, and the ratio estimate is
//!
//! ```text
//! argmin_theta || sum_y theta_y * mean_y - mean_u ||^2   s.t. theta in simplex
//! ```
//!
//! solved by projected gradient descent. Label-and-collect (tag every spot,
//! count the labels) is the baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::collective::{build_problem, hill_climb, lp_round};
use crate::corpus::{Corpus, Spot};
use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase};
use crate::local::{disambiguate_local, FeatureExtractor, WeightVector};
use crate::seed;

pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A probability vector indexed by entity classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector {
    classes: Vec<EntityId>,
    probs: Vec<f64>,
}

impl SimplexVector {
    /// `classes` must be strictly increasing; `probs` nonnegative and summing
    /// to 1 within [`SIMPLEX_TOLERANCE`].
    pub fn new(classes: Vec<EntityId>, probs: Vec<f64>) -> Result<Self> {
        if classes.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: classes.len(),
                actual: probs.len(),
            });
        }
        if classes.is_empty() {
            return Err(Error::invalid("simplex vector needs at least one class"));
        }
        if classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("simplex classes must be sorted and distinct"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("simplex entries must be finite and nonnegative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::invalid(format!("simplex entries sum to {sum}, not 1")));
        }
        Ok(SimplexVector { classes, probs })
    }

    /// Normalize nonnegative counts.
    pub fn from_counts(classes: Vec<EntityId>, counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::invalid("cannot normalize all-zero counts"));
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        SimplexVector::new(classes, probs)
    }

    pub fn uniform(classes: Vec<EntityId>) -> Result<Self> {
        let k = classes.len().max(1) as f64;
        let probs = vec![1.0 / k; classes.len()];
        SimplexVector::new(classes, probs)
    }

    pub fn classes(&self) -> &[EntityId] {
        &self.classes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, e: EntityId) -> Option<f64> {
        self.classes.binary_search(&e).ok().map(|i| self.probs[i])
    }

    /// `entity_id<TAB>probability` lines sorted by id, 12 significant digits.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (e, p) in self.classes.iter().zip(&self.probs) {
            let _ = writeln!(out, "{e}\t{}", format_sig12(*p));
        }
        out
    }

    /// Parse `id=prob` pairs separated by commas, e.g. `1=0.7,2=0.3`.
    pub fn parse_pairs(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (id, p) = part
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected id=prob, got {part:?}")))?;
            let id: EntityId = id
                .parse()
                .map_err(|_| Error::invalid(format!("bad entity id {id:?}")))?;
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad probability {p:?}")))?;
            if map.insert(id, p).is_some() {
                return Err(Error::invalid(format!("class {id} listed twice")));
            }
        }
        let (classes, probs) = map.into_iter().unzip();
        SimplexVector::new(classes, probs)
    }
}

/// `%.12g`-style formatting: 12 significant digits, trailing zeros removed.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

/// Closed-world class set: every entity that is a candidate of some surface.
pub fn class_set(kb: &KnowledgeBase) -> Vec<EntityId> {
    kb.mentions().candidate_entities()
}

/// Sparse per-spot feature, entries summing to 1 over the candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionFeature {
    pub entries: Vec<(EntityId, f64)>,
}

impl MentionFeature {
    /// Scatter into a dense vector over `dims` (sorted). Errors when an
    /// entry falls outside the dimension set.
    pub fn to_dense(&self, dims: &[EntityId]) -> Result<Vec<f64>> {
        let mut v = vec![0.0; dims.len()];
        for &(e, x) in &self.entries {
            let i = dims
                .binary_search(&e)
                .map_err(|_| Error::invalid(format!("candidate {e} is outside the class set")))?;
            v[i] += x;
        }
        Ok(v)
    }
}

/// Candidate mention priors renormalized over the spot's candidate set;
/// uniform when they are all zero or the surface is unknown.
pub fn mention_feature(kb: &KnowledgeBase, spot: &Spot) -> Result<MentionFeature> {
    if spot.candidates.is_empty() {
        return Err(Error::invalid(format!("spot {:?} has no candidates", spot.surface)));
    }
    let mut priors = Vec::with_capacity(spot.candidates.len());
    for &c in &spot.candidates {
        priors.push(match kb.mention_prior(&spot.surface, c) {
            Ok(p) => p,
            Err(Error::UnknownSurface(_)) => 0.0,
            Err(e) => return Err(e),
        });
    }
    let total: f64 = priors.iter().sum();
    let k = spot.candidates.len() as f64;
    let entries = spot
        .candidates
        .iter()
        .zip(priors)
        .map(|(&c, p)| (c, if total > 0.0 { p / total } else { 1.0 / k }))
        .collect();
    Ok(MentionFeature { entries })
}

/// Per-class means of mention features over a fixed dimension set.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanEmbedding {
    pub classes: Vec<EntityId>,
    pub dims: Vec<EntityId>,
    pub means: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
}

fn sorted_unique(v: &[EntityId]) -> Result<()> {
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("class and dimension lists must be sorted and distinct"));
    }
    Ok(())
}

/// Class means grouped by gold label. Every class in `classes` must have
/// at least one labeled spot; spots labeled outside `classes` are ignored.
pub fn class_means<'a, I>(
    labeled: I,
    kb: &KnowledgeBase,
    classes: &[EntityId],
    dims: &[EntityId],
) -> Result<MeanEmbedding>
where
    I: IntoIterator<Item = &'a Spot>,
{
    sorted_unique(classes)?;
    sorted_unique(dims)?;
    let mut sums = vec![vec![0.0; dims.len()]; classes.len()];
    let mut counts = vec![0usize; classes.len()];
    for spot in labeled {
        let gold = spot
            .gold
            .ok_or_else(|| Error::invalid(format!("labeled spot {:?} has no gold label", spot.surface)))?;
        let Ok(y) = classes.binary_search(&gold) else {
            continue;
        };
        let x = mention_feature(kb, spot)?.to_dense(dims)?;
        for (s, v) in sums[y].iter_mut().zip(x) {
            *s += v;
        }
        counts[y] += 1;
    }
    for (y, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::MissingClass(classes[y]));
        }
    }
    let means = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
        .collect();
    Ok(MeanEmbedding {
        classes: classes.to_vec(),
        dims: dims.to_vec(),
        means,
        counts,
    })
}

/// Mean mention feature over unlabeled spots.
pub fn unlabeled_mean<'a, I>(unlabeled: I, kb: &KnowledgeBase, dims: &[EntityId]) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a Spot>,
{
    sorted_unique(dims)?;
    let mut sum = vec![0.0; dims.len()];
    let mut n = 0usize;
    for spot in unlabeled {
        let x = mention_feature(kb, spot)?.to_dense(dims)?;
        for (s, v) in sum.iter_mut().zip(x) {
            *s += v;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("no unlabeled spots"));
    }
    Ok(sum.into_iter().map(|v| v / n as f64).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub max_iterations: usize,
    /// Stop once an iteration lowers the objective by less than this.
    pub tolerance: f64,
    /// Seeds the power-iteration start vector.
    pub seed: u64,
    /// Keep the per-iteration objective values in [`MmdFit::history`].
    pub record_history: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            max_iterations: 100_000,
            tolerance: 1e-15,
            seed: 0,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MmdFit {
    pub theta: SimplexVector,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Lipschitz constant used for the step size.
    pub lipschitz: f64,
    pub history: Vec<f64>,
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, &x) in u.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - tau).max(0.0)).collect();
    // Absorb rounding so the entries sum to 1 to machine precision.
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        for x in &mut out {
            *x /= s;
        }
    }
    out
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration(g: &[Vec<f64>], seed: u64) -> f64 {
    let k = g.len();
    if k == 0 {
        return 0.0;
    }
    let mut rng = seed::rng(seed::derive(seed, "ratio/power_iteration"));
    let mut v: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..1.5)).collect();
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w: Vec<f64> = g
            .iter()
            .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
            / v.iter().map(|x| x * x).sum::<f64>();
        v = w.into_iter().map(|x| x / norm).collect();
        if (next - lambda).abs() <= 1e-12 * next.abs().max(1.0) {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// `0.5 * ||M theta - u||^2` expressed through the Gram matrix.
fn half_objective(gram: &[Vec<f64>], lin: &[f64], uu: f64, theta: &[f64]) -> f64 {
    let mut quad = 0.0;
    for (i, row) in gram.iter().enumerate() {
        let gi: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
        quad += theta[i] * gi;
    }
    let lin: f64 = lin.iter().zip(theta).map(|(a, b)| a * b).sum();
    (0.5 * quad - lin + 0.5 * uu).max(0.0)
}

/// `||sum_y theta_y mean_y - u||^2`, evaluated directly.
pub fn mmd_objective(means: &[Vec<f64>], phi_u: &[f64], theta: &[f64]) -> f64 {
    let mut r: Vec<f64> = phi_u.iter().map(|x| -x).collect();
    for (m, &t) in means.iter().zip(theta) {
        for (ri, mi) in r.iter_mut().zip(m) {
            *ri += t * mi;
        }
    }
    r.iter().map(|x| x * x).sum()
}

/// Projected gradient descent on the simplex with step `1/L`, `L` the top
/// eigenvalue of the Gram matrix of the class means.
pub fn estimate_mmd(means: &MeanEmbedding, phi_u: &[f64], config: &EstimatorConfig) -> Result<MmdFit> {
    let k = means.classes.len();
    let d = means.dims.len();
    if k == 0 {
        return Err(Error::invalid("need at least one class"));
    }
    if phi_u.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: phi_u.len(),
        });
    }
    for m in &means.means {
        if m.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: m.len(),
            });
        }
    }
    if phi_u.iter().chain(means.means.iter().flatten()).any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite mean embedding"));
    }
    if config.tolerance.is_nan() || config.tolerance <= 0.0 {
        return Err(Error::invalid("tolerance must be positive"));
    }

    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let gram: Vec<Vec<f64>> = means
        .means
        .iter()
        .map(|a| means.means.iter().map(|b| dot(a, b)).collect())
        .collect();
    let lin: Vec<f64> = means.means.iter().map(|m| dot(m, phi_u)).collect();
    let uu = dot(phi_u, phi_u);

    let mut lipschitz = power_iteration(&gram, config.seed);
    let mut theta = vec![1.0 / k as f64; k];
    let mut value = half_objective(&gram, &lin, uu, &theta);
    let mut history = Vec::new();
    if config.record_history {
        history.push(2.0 * value);
    }
    let mut iterations = 0;
    let mut converged = lipschitz <= 0.0;
    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let grad: Vec<f64> = gram
            .iter()
            .zip(&lin)
            .map(|(row, l)| dot(row, &theta) - l)
            .collect();
        let (next, next_value) = loop {
            let step: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .map(|(t, g)| t - g / lipschitz)
                .collect();
            let cand = project_simplex(&step);
            let v = half_objective(&gram, &lin, uu, &cand);
            // A power-iteration underestimate of L shows up as an increase.
            if v <= value || lipschitz > 1e300 {
                break (cand, v);
            }
            lipschitz *= 2.0;
        };
        let decrease = 2.0 * (value - next_value);
        if next_value <= value {
            theta = next;
            value = next_value;
        }
        if config.record_history {
            history.push(2.0 * value);
        }
        if decrease < config.tolerance {
            converged = true;
        }
    }

    let theta = SimplexVector::new(means.classes.clone(), theta)?;
    let objective = mmd_objective(&means.means, phi_u, theta.probs());
    Ok(MmdFit {
        theta,
        objective,
        iterations,
        converged,
        lipschitz,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tagger {
    Local,
    HillClimb { restarts: usize, seed: u64 },
    Lp,
}

/// Tag every spot with the chosen disambiguator, then normalize the label
/// counts over `classes`. Predictions outside `classes` are dropped.
pub fn label_and_collect(
    tagger: Tagger,
    extractor: &FeatureExtractor<'_>,
    weights: &WeightVector,
    corpus: &Corpus,
    classes: &[EntityId],
) -> Result<SimplexVector> {
    sorted_unique(classes)?;
    if corpus.spot_count() == 0 {
        return Err(Error::invalid("corpus has no spots"));
    }
    let mut counts = vec![0u64; classes.len()];
    for (doc, spots) in corpus.iter() {
        if spots.is_empty() {
            continue;
        }
        let labels: Vec<EntityId> = match tagger {
            Tagger::Local => disambiguate_local(extractor, weights, doc, spots)?
                .into_iter()
                .map(|s| s.predicted.expect("predicted is set"))
                .collect(),
            Tagger::HillClimb { restarts, seed } => {
                let p = build_problem(extractor, weights, doc, spots)?;
                hill_climb(&p, restarts, seed).entity_ids(&p)
            }
            Tagger::Lp => {
                let p = build_problem(extractor, weights, doc, spots)?;
                lp_round(&p)?.assignment.entity_ids(&p)
            }
        };
        for e in labels {
            if let Ok(i) = classes.binary_search(&e) {
                counts[i] += 1;
            }
        }
    }
    SimplexVector::from_counts(classes.to_vec(), &counts)
}

/// Empirical gold-label ratio over `classes`.
pub fn gold_ratio(corpus: &Corpus, classes: &[EntityId]) -> Result<SimplexVector> {
    sorted_unique(classes)?;
    let mut counts = vec![0u64; classes.len()];
    for spot in corpus.spots() {
        if let Some(Ok(i)) = spot.gold.map(|g| classes.binary_search(&g)) {
            counts[i] += 1;
        }
    }
    SimplexVector::from_counts(classes.to_vec(), &counts)
}

pub fn l1_error(theta: &SimplexVector, truth: &SimplexVector) -> Result<f64> {
    if theta.classes != truth.classes {
        return Err(Error::invalid("class index sets differ"));
    }
    Ok(theta
        .probs
        .iter()
        .zip(&truth.probs)
        .map(|(a, b)| (a - b).abs())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Span;
    use crate::kb::{Entity, MentionTable};

    fn e(n: u32) -> EntityId {
        EntityId(n)
    }

    fn sv(p: &[f64]) -> SimplexVector {
        SimplexVector::new((1..=p.len() as u32).map(EntityId).collect(), p.to_vec()).unwrap()
    }

    fn embedding(means: Vec<Vec<f64>>) -> MeanEmbedding {
        let k = means.len();
        let d = means[0].len();
        MeanEmbedding {
            classes: (1..=k as u32).map(EntityId).collect(),
            dims: (1..=d as u32).map(EntityId).collect(),
            means,
            counts: vec![1; k],
        }
    }

    #[test]
    fn simplex_vector_validation() {
        assert!(SimplexVector::new(vec![e(1), e(2)], vec![0.5, 0.6]).is_err());
        assert!(SimplexVector::new(vec![e(2), e(1)], vec![0.5, 0.5]).is_err());
        assert!(SimplexVector::new(vec![e(1), e(2)], vec![1.5, -0.5]).is_err());
        let t = SimplexVector::parse_pairs("2=0.3, 1=0.7").unwrap();
        assert_eq!(t.classes(), &[e(1), e(2)]);
        assert_eq!(t.get(e(1)), Some(0.7));
    }

    #[test]
    fn l1_examples() {
        assert_eq!(l1_error(&sv(&[0.7, 0.3]), &sv(&[0.7, 0.3])).unwrap(), 0.0);
        assert_eq!(l1_error(&sv(&[1.0, 0.0]), &sv(&[0.0, 1.0])).unwrap(), 2.0);
        assert!((l1_error(&sv(&[0.7, 0.3]), &sv(&[0.5, 0.5])).unwrap() - 0.4).abs() < 1e-15);
        assert!(l1_error(&sv(&[1.0]), &sv(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn sig12_format() {
        assert_eq!(format_sig12(0.6), "0.6");
        assert_eq!(format_sig12(1.0), "1");
        assert_eq!(format_sig12(0.0), "0");
        assert_eq!(format_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig12(2.0 / 3.0), "0.666666666667");
        assert_eq!(format_sig12(1.5e-7), "1.5e-07");
        assert_eq!(format_sig12(0.000123456789012345), "0.000123456789012");
    }

    #[test]
    fn projection_basics() {
        assert_eq!(project_simplex(&[0.2, 0.8]), vec![0.2, 0.8]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = project_simplex(&[-1.0, 0.3]);
        assert_eq!(p, vec![0.0, 1.0]);
    }

    #[test]
    fn power_iteration_diagonal() {
        let g = vec![vec![3.0, 0.0], vec![0.0, 1.0]];
        assert!((power_iteration(&g, 1) - 3.0).abs() < 1e-9);
        let g = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        assert!((power_iteration(&g, 5) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn exact_vertex_recovery() {
        let m = embedding(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let fit = estimate_mmd(&m, &[1.0, 0.0], &EstimatorConfig::default()).unwrap();
        assert!((fit.theta.probs()[0] - 1.0).abs() < 1e-9);
        assert!(fit.objective < 1e-15);
    }

    #[test]
    fn one_dimensional_closed_forms() {
        let m = embedding(vec![vec![0.0], vec![1.0]]);
        let cfg = EstimatorConfig::default();
        let fit = estimate_mmd(&m, &[0.3], &cfg).unwrap();
        // Stopping on objective decrease leaves theta within ~sqrt(tolerance).
        assert!((fit.theta.probs()[0] - 0.7).abs() < 1e-7, "{:?}", fit.theta);
        assert!((fit.theta.probs()[1] - 0.3).abs() < 1e-7);

        let fit = estimate_mmd(&m, &[-0.5], &cfg).unwrap();
        assert!((fit.theta.probs()[0] - 1.0).abs() < 1e-12);
        assert!((fit.objective - 0.25).abs() < 1e-12);
    }

    #[test]
    fn three_class_convex_combination() {
        let means = vec![
            vec![0.9, 0.1, 0.0, 0.2],
            vec![0.1, 0.7, 0.2, 0.0],
            vec![0.0, 0.2, 0.6, 0.5],
        ];
        let c = [0.2, 0.5, 0.3];
        let u: Vec<f64> = (0..4).map(|j| (0..3).map(|y| c[y] * means[y][j]).sum()).collect();
        let fit = estimate_mmd(&embedding(means), &u, &EstimatorConfig::default()).unwrap();
        for (a, b) in fit.theta.probs().iter().zip(c) {
            assert!((a - b).abs() < 1e-6, "{:?}", fit.theta);
        }
    }

    #[test]
    fn objective_history_is_monotone() {
        let m = embedding(vec![vec![0.3, 0.9], vec![0.8, 0.1], vec![0.5, 0.5]]);
        let cfg = EstimatorConfig {
            record_history: true,
            ..Default::default()
        };
        let fit = estimate_mmd(&m, &[0.9, 0.9], &cfg).unwrap();
        assert!(fit.history.len() >= 2);
        for w in fit.history.windows(2) {
            assert!(w[1] <= w[0], "{w:?}");
        }
    }

    #[test]
    fn estimator_errors() {
        let m = embedding(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let cfg = EstimatorConfig::default();
        assert!(matches!(
            estimate_mmd(&m, &[0.5], &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(estimate_mmd(&m, &[f64::NAN, 0.0], &cfg).is_err());
    }

    fn amazon_kb() -> KnowledgeBase {
        let entities = (1..=3)
            .map(|i| Entity::from_texts(e(i), "", "", "", "", ""))
            .collect();
        let m = MentionTable::from_rows([
            ("amazon", e(1), 6),
            ("amazon", e(2), 4),
            ("amazon", e(3), 0),
            ("nile", e(3), 2),
        ])
        .unwrap();
        KnowledgeBase::new(entities, vec![], m, None).unwrap()
    }

    fn spot(surface: &str, cands: &[u32], gold: Option<u32>) -> Spot {
        Spot {
            doc_id: "d".into(),
            span: Span::new(0, 1),
            surface: surface.into(),
            candidates: cands.iter().map(|&c| e(c)).collect(),
            gold: gold.map(e),
            predicted: None,
        }
    }

    #[test]
    fn mention_feature_examples() {
        let kb = amazon_kb();
        let f = mention_feature(&kb, &spot("nile", &[3], None)).unwrap();
        assert_eq!(f.entries, vec![(e(3), 1.0)]);

        let f = mention_feature(&kb, &spot("amazon", &[1, 2], None)).unwrap();
        assert!((f.entries[0].1 - 0.6).abs() < 1e-15);
        assert!((f.entries[1].1 - 0.4).abs() < 1e-15);

        // candidate 3 has a zero count under "amazon"
        let f = mention_feature(&kb, &spot("amazon", &[3], None)).unwrap();
        assert_eq!(f.entries, vec![(e(3), 1.0)]);
        let f = mention_feature(&kb, &spot("unseen", &[1, 2], None)).unwrap();
        assert_eq!(f.entries, vec![(e(1), 0.5), (e(2), 0.5)]);

        assert!(mention_feature(&kb, &spot("amazon", &[], None)).is_err());
    }

    #[test]
    fn class_means_examples() {
        let kb = amazon_kb();
        let dims = vec![e(1), e(2), e(3)];
        let classes = vec![e(1), e(3)];
        let spots = vec![
            spot("amazon", &[1, 2], Some(1)),
            spot("nile", &[3], Some(1)),
            spot("nile", &[3], Some(3)),
        ];
        let m = class_means(&spots, &kb, &classes, &dims).unwrap();
        // class 1: mean of (0.6, 0.4, 0) and (0, 0, 1)
        assert_eq!(m.counts, vec![2, 1]);
        assert!((m.means[0][0] - 0.3).abs() < 1e-15);
        assert!((m.means[0][1] - 0.2).abs() < 1e-15);
        assert!((m.means[0][2] - 0.5).abs() < 1e-15);
        assert_eq!(m.means[1], vec![0.0, 0.0, 1.0]);

        let doubled: Vec<Spot> = spots.iter().chain(&spots).cloned().collect();
        assert_eq!(class_means(&doubled, &kb, &classes, &dims).unwrap().means, m.means);

        match class_means(&spots, &kb, &[e(1), e(2)], &dims) {
            Err(Error::MissingClass(c)) => assert_eq!(c, e(2)),
            other => panic!("{other:?}"),
        }

        let u = unlabeled_mean(&spots[..1], &kb, &dims).unwrap();
        assert_eq!(u, vec![0.6, 0.4, 0.0]);
    }
}
