//! Collective disambiguation of all spots in a document.
//!
//! The objective for an assignment of one candidate per spot is
//!
//! ```text
//! 1/C(n,2) * sum_{s<s'} coherence(a_s, a_s') + 1/n * sum_s w.f_s(a_s)
//! ```
//!
//! with the coherence term defined as 0 when `n = 1`. Three solvers are
//! provided: hill climbing from the local argmax, an LP relaxation rounded at
//! 0.5, and exhaustive enumeration as the exact reference.

pub mod simplex;

use std::fmt::Write as _;

use rand::Rng;

use crate::corpus::{Document, Spot};
use crate::error::{Error, Result};
use crate::kb::EntityId;
use crate::local::{argmax, FeatureExtractor, WeightVector};
use crate::seed;
use simplex::{LinearProgram, Relation};

pub const MAX_SPOTS: usize = 12;
pub const MAX_CANDIDATES: usize = 8;
pub const MAX_LP_VARS: usize = 600;
pub const MAX_ENUMERATION: usize = 100_000;
pub const LP_ITERATION_CAP: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentProblem {
    cands: Vec<Vec<EntityId>>,
    node: Vec<Vec<f64>>,
    /// Start of each spot's block in the flattened candidate index.
    offsets: Vec<usize>,
    /// Dense `slots x slots` coherence matrix; same-spot entries are unused.
    edge: Vec<f64>,
    slots: usize,
}

/// One chosen candidate index per spot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn entity_ids(&self, p: &AssignmentProblem) -> Vec<EntityId> {
        self.0
            .iter()
            .enumerate()
            .map(|(s, &c)| p.cands[s][c])
            .collect()
    }
}

impl AssignmentProblem {
    /// Build from candidate lists, node potentials and an edge function
    /// `edge((s, i), (t, j))` evaluated for `s < t`.
    pub fn from_fn<F>(cands: Vec<Vec<EntityId>>, node: Vec<Vec<f64>>, mut edge: F) -> Result<Self>
    where
        F: FnMut((usize, usize), (usize, usize)) -> Result<f64>,
    {
        if cands.is_empty() {
            return Err(Error::invalid("assignment problem needs at least one spot"));
        }
        if node.len() != cands.len() {
            return Err(Error::DimensionMismatch {
                expected: cands.len(),
                actual: node.len(),
            });
        }
        let mut offsets = Vec::with_capacity(cands.len());
        let mut slots = 0;
        for (s, (c, n)) in cands.iter().zip(&node).enumerate() {
            if c.is_empty() {
                return Err(Error::invalid(format!("spot {s} has no candidates")));
            }
            if n.len() != c.len() {
                return Err(Error::DimensionMismatch {
                    expected: c.len(),
                    actual: n.len(),
                });
            }
            if n.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("spot {s} has a non-finite node potential")));
            }
            offsets.push(slots);
            slots += c.len();
        }
        let mut e = vec![0.0; slots * slots];
        for s in 0..cands.len() {
            for t in s + 1..cands.len() {
                for i in 0..cands[s].len() {
                    for j in 0..cands[t].len() {
                        let v = edge((s, i), (t, j))?;
                        if !(0.0..=1.0).contains(&v) {
                            return Err(Error::invalid(format!(
                                "edge ({s},{i})-({t},{j}) = {v} outside [0, 1]"
                            )));
                        }
                        let (a, b) = (offsets[s] + i, offsets[t] + j);
                        e[a * slots + b] = v;
                        e[b * slots + a] = v;
                    }
                }
            }
        }
        Ok(AssignmentProblem {
            cands,
            node,
            offsets,
            edge: e,
            slots,
        })
    }

    pub fn n_spots(&self) -> usize {
        self.cands.len()
    }

    pub fn candidates(&self, s: usize) -> &[EntityId] {
        &self.cands[s]
    }

    pub fn node(&self, s: usize, i: usize) -> f64 {
        self.node[s][i]
    }

    pub fn edge(&self, s: usize, i: usize, t: usize, j: usize) -> f64 {
        self.edge[(self.offsets[s] + i) * self.slots + self.offsets[t] + j]
    }

    /// Number of nonzero-capable edge entries (cross-spot candidate pairs).
    pub fn edge_pairs(&self) -> usize {
        let n = self.n_spots();
        let mut k = 0;
        for s in 0..n {
            for t in s + 1..n {
                k += self.cands[s].len() * self.cands[t].len();
            }
        }
        k
    }

    pub fn search_space(&self) -> usize {
        self.cands
            .iter()
            .try_fold(1usize, |acc, c| acc.checked_mul(c.len()))
            .unwrap_or(usize::MAX)
    }

    pub fn check(&self, a: &Assignment) -> Result<()> {
        if a.0.len() != self.n_spots() {
            return Err(Error::DimensionMismatch {
                expected: self.n_spots(),
                actual: a.0.len(),
            });
        }
        for (s, &c) in a.0.iter().enumerate() {
            if c >= self.cands[s].len() {
                return Err(Error::invalid(format!(
                    "spot {s} has no candidate index {c}"
                )));
            }
        }
        Ok(())
    }

    /// Per-spot argmax of the node potential; ties to the smallest id.
    pub fn local_argmax(&self) -> Assignment {
        Assignment(self.node.iter().map(|n| argmax(n)).collect())
    }

    /// Node potentials and edge weights as TSV, for offline inspection.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (s, cands) in self.cands.iter().enumerate() {
            for (i, e) in cands.iter().enumerate() {
                let _ = writeln!(out, "node\t{s}\t{e}\t{:?}", self.node[s][i]);
            }
        }
        for s in 0..self.n_spots() {
            for t in s + 1..self.n_spots() {
                for (i, a) in self.cands[s].iter().enumerate() {
                    for (j, b) in self.cands[t].iter().enumerate() {
                        let _ = writeln!(out, "edge\t{s}\t{a}\t{t}\t{b}\t{:?}", self.edge(s, i, t, j));
                    }
                }
            }
        }
        out
    }
}

/// Node potentials from the local scorer and edges from KB coherence.
pub fn build_problem(
    extractor: &FeatureExtractor<'_>,
    weights: &WeightVector,
    doc: &Document,
    spots: &[Spot],
) -> Result<AssignmentProblem> {
    if spots.is_empty() {
        return Err(Error::invalid("no spots to disambiguate"));
    }
    if spots.len() > MAX_SPOTS {
        return Err(Error::TooLarge {
            what: "spots per document",
            limit: MAX_SPOTS,
            actual: spots.len(),
        });
    }
    let mut node = Vec::with_capacity(spots.len());
    for spot in spots {
        if spot.candidates.len() > MAX_CANDIDATES {
            return Err(Error::TooLarge {
                what: "candidates per spot",
                limit: MAX_CANDIDATES,
                actual: spot.candidates.len(),
            });
        }
        let f = extractor.extract_all(doc, spot)?;
        node.push(f.iter().map(|f| weights.score(f)).collect());
    }
    let cands: Vec<Vec<EntityId>> = spots.iter().map(|s| s.candidates.clone()).collect();
    let kb = extractor.kb();
    AssignmentProblem::from_fn(cands.clone(), node, |(s, i), (t, j)| {
        kb.coherence(cands[s][i], cands[t][j])
    })
}

fn pair_count(n: usize) -> f64 {
    (n * (n - 1) / 2) as f64
}

fn objective_unchecked(p: &AssignmentProblem, a: &[usize]) -> f64 {
    let n = p.n_spots();
    let node: f64 = a.iter().enumerate().map(|(s, &c)| p.node[s][c]).sum();
    let mut total = node / n as f64;
    if n >= 2 {
        let mut coh = 0.0;
        for s in 0..n {
            for t in s + 1..n {
                coh += p.edge(s, a[s], t, a[t]);
            }
        }
        total += coh / pair_count(n);
    }
    total
}

pub fn objective(p: &AssignmentProblem, a: &Assignment) -> Result<f64> {
    p.check(a)?;
    Ok(objective_unchecked(p, &a.0))
}

/// The first single-spot change that strictly raises the objective, if any.
/// Within a spot the best replacement candidate is reported.
pub fn improving_move(p: &AssignmentProblem, a: &Assignment) -> Option<(usize, usize)> {
    let mut cur = a.0.clone();
    let base = objective_unchecked(p, &cur);
    for s in 0..p.n_spots() {
        let keep = cur[s];
        let mut best = (keep, base);
        for c in 0..p.cands[s].len() {
            if c == keep {
                continue;
            }
            cur[s] = c;
            let v = objective_unchecked(p, &cur);
            if v > best.1 {
                best = (c, v);
            }
        }
        cur[s] = keep;
        if best.0 != keep {
            return Some((s, best.0));
        }
    }
    None
}

fn climb(p: &AssignmentProblem, start: Vec<usize>) -> (Vec<usize>, f64) {
    let mut cur = start;
    let mut value = objective_unchecked(p, &cur);
    loop {
        let mut changed = false;
        for s in 0..p.n_spots() {
            let keep = cur[s];
            let mut best = (keep, value);
            for c in 0..p.cands[s].len() {
                if c == keep {
                    continue;
                }
                cur[s] = c;
                let v = objective_unchecked(p, &cur);
                if v > best.1 {
                    best = (c, v);
                }
            }
            cur[s] = best.0;
            if best.0 != keep {
                value = best.1;
                changed = true;
            }
        }
        if !changed {
            return (cur, value);
        }
    }
}

/// Hill climbing. The first climb starts from the local-potential argmax;
/// each of `restarts` further climbs starts from a seeded random assignment.
/// Sweeps visit spots in order and take the best strictly improving
/// candidate, stopping after a sweep with no change.
pub fn hill_climb(p: &AssignmentProblem, restarts: usize, seed: u64) -> Assignment {
    let (mut best, mut best_value) = climb(p, p.local_argmax().0);
    let mut rng = seed::rng(seed::derive(seed, "collective/hill_climb"));
    for _ in 0..restarts {
        let start = p.cands.iter().map(|c| rng.gen_range(0..c.len())).collect();
        let (a, v) = climb(p, start);
        if v > best_value {
            best = a;
            best_value = v;
        }
    }
    Assignment(best)
}

/// Exact optimum by enumeration in lexicographic order; the first maximum
/// wins, so ties resolve to the lexicographically smallest choice vector.
pub fn exhaustive_opt(p: &AssignmentProblem) -> Result<Assignment> {
    let space = p.search_space();
    if space > MAX_ENUMERATION {
        return Err(Error::TooLarge {
            what: "enumeration search space",
            limit: MAX_ENUMERATION,
            actual: space,
        });
    }
    let n = p.n_spots();
    let mut cur = vec![0usize; n];
    let mut best = cur.clone();
    let mut best_value = objective_unchecked(p, &cur);
    loop {
        // Odometer increment, last spot fastest.
        let mut s = n;
        loop {
            if s == 0 {
                return Ok(Assignment(best));
            }
            s -= 1;
            cur[s] += 1;
            if cur[s] < p.cands[s].len() {
                break;
            }
            cur[s] = 0;
        }
        let v = objective_unchecked(p, &cur);
        if v > best_value {
            best_value = v;
            best.clone_from(&cur);
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpRounding {
    pub assignment: Assignment,
    /// Optimal value of the relaxation (an upper bound on any assignment).
    pub lp_value: f64,
    /// Relaxed per-spot candidate indicators.
    pub z: Vec<Vec<f64>>,
    /// Spots where no indicator reached 0.5 and the argmax fallback applied.
    pub fallback_spots: Vec<usize>,
    pub iterations: usize,
}

const ROUNDING_THRESHOLD: f64 = 0.5;
const ROUNDING_SLACK: f64 = 1e-9;

/// LP relaxation with pair variables `u <= z_s, u <= z_t`, rounded at 0.5.
pub fn lp_round(p: &AssignmentProblem) -> Result<LpRounding> {
    let n = p.n_spots();
    let n_vars = p.slots + p.edge_pairs();
    if n_vars > MAX_LP_VARS {
        return Err(Error::TooLarge {
            what: "LP variables",
            limit: MAX_LP_VARS,
            actual: n_vars,
        });
    }
    let node_scale = 1.0 / n as f64;
    let edge_scale = if n >= 2 { 1.0 / pair_count(n) } else { 0.0 };

    let mut c = vec![0.0; n_vars];
    for s in 0..n {
        for i in 0..p.cands[s].len() {
            c[p.offsets[s] + i] = node_scale * p.node[s][i];
        }
    }
    let mut pairs = Vec::new();
    let mut col = p.slots;
    for s in 0..n {
        for t in s + 1..n {
            for i in 0..p.cands[s].len() {
                for j in 0..p.cands[t].len() {
                    c[col] = edge_scale * p.edge(s, i, t, j);
                    pairs.push((col, p.offsets[s] + i, p.offsets[t] + j));
                    col += 1;
                }
            }
        }
    }

    let mut lp = LinearProgram::maximize(c);
    for s in 0..n {
        let terms: Vec<(usize, f64)> = (0..p.cands[s].len())
            .map(|i| (p.offsets[s] + i, 1.0))
            .collect();
        lp.constrain(&terms, Relation::Eq, 1.0);
    }
    for &(u, zs, zt) in &pairs {
        lp.constrain(&[(u, 1.0), (zs, -1.0)], Relation::Le, 0.0);
        lp.constrain(&[(u, 1.0), (zt, -1.0)], Relation::Le, 0.0);
    }
    let sol = lp.solve(LP_ITERATION_CAP)?;

    let z: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            (0..p.cands[s].len())
                .map(|i| sol.x[p.offsets[s] + i])
                .collect()
        })
        .collect();
    let mut choice = Vec::with_capacity(n);
    let mut fallback_spots = Vec::new();
    for (s, zs) in z.iter().enumerate() {
        // Values within solver noise of the maximum count as ties.
        let top = zs[argmax(zs)];
        let best = zs
            .iter()
            .position(|&v| v >= top - ROUNDING_SLACK)
            .expect("non-empty candidates");
        if zs[best] < ROUNDING_THRESHOLD - ROUNDING_SLACK {
            fallback_spots.push(s);
        }
        choice.push(best);
    }
    Ok(LpRounding {
        assignment: Assignment(choice),
        lp_value: sol.value,
        z,
        fallback_spots,
        iterations: sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<EntityId> {
        (0..n as u32).map(|i| EntityId(i + 1)).collect()
    }

    fn dense(node: Vec<Vec<f64>>, edge: impl Fn((usize, usize), (usize, usize)) -> f64) -> AssignmentProblem {
        let cands = node.iter().map(|n| ids(n.len())).collect();
        AssignmentProblem::from_fn(cands, node, |a, b| Ok(edge(a, b))).unwrap()
    }

    #[test]
    fn single_spot() {
        let p = dense(vec![vec![0.2, 0.9, 0.1]], |_, _| 0.0);
        assert_eq!(p.edge_pairs(), 0);
        let a = exhaustive_opt(&p).unwrap();
        assert_eq!(a, Assignment(vec![1]));
        assert_eq!(objective(&p, &a).unwrap(), 0.9);
        assert_eq!(hill_climb(&p, 3, 1), a);
        assert_eq!(lp_round(&p).unwrap().assignment, a);
    }

    #[test]
    fn two_spot_objective() {
        let p = dense(vec![vec![0.0, 0.0], vec![0.0, 0.0]], |(_, i), (_, j)| {
            if i == 1 && j == 0 { 0.75 } else { 0.0 }
        });
        assert_eq!(p.edge_pairs(), 4);
        assert_eq!(p.edge(0, 1, 1, 0), p.edge(1, 0, 0, 1));
        assert_eq!(objective(&p, &Assignment(vec![1, 0])).unwrap(), 0.75);
        assert_eq!(objective(&p, &Assignment(vec![0, 0])).unwrap(), 0.0);
        assert!(objective(&p, &Assignment(vec![2, 0])).is_err());
        assert!(objective(&p, &Assignment(vec![0])).is_err());
    }

    #[test]
    fn dominating_edge_beats_node_preference() {
        // spot 0 prefers candidate 0 locally, but (1, 1) is strongly coherent.
        let p = dense(vec![vec![0.3, 0.1], vec![0.0, 0.2]], |(_, i), (_, j)| {
            if i == 1 && j == 1 { 1.0 } else { 0.0 }
        });
        // (0,0): 0.15; (0,1): 0.25; (1,0): 0.05; (1,1): 1 + 0.15 = 1.15
        let a = exhaustive_opt(&p).unwrap();
        assert_eq!(a, Assignment(vec![1, 1]));
        assert!((objective(&p, &a).unwrap() - 1.15).abs() < 1e-12);
        assert_eq!(hill_climb(&p, 0, 0), a);
        let lp = lp_round(&p).unwrap();
        assert_eq!(lp.assignment, a);
        assert!((lp.lp_value - 1.15).abs() < 1e-9);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let p = dense(vec![vec![0.0, 0.0], vec![0.0, 0.0]], |_, _| 0.0);
        assert_eq!(exhaustive_opt(&p).unwrap(), Assignment(vec![0, 0]));
        assert_eq!(hill_climb(&p, 5, 2), Assignment(vec![0, 0]));
    }

    #[test]
    fn fractional_relaxation_uses_fallback() {
        // 2 spots x 3 candidates, coherence 1 off the diagonal. The unique LP
        // optimum spreads z = 1/3 everywhere with value 2, above the best
        // integral value 1.
        let p = dense(vec![vec![0.0; 3], vec![0.0; 3]], |(_, i), (_, j)| {
            if i != j { 1.0 } else { 0.0 }
        });
        let lp = lp_round(&p).unwrap();
        assert!((lp.lp_value - 2.0).abs() < 1e-9, "{}", lp.lp_value);
        for zs in &lp.z {
            for &v in zs {
                assert!((v - 1.0 / 3.0).abs() < 1e-9);
            }
        }
        assert_eq!(lp.fallback_spots, vec![0, 1]);
        assert_eq!(lp.assignment, Assignment(vec![0, 0]));
    }

    #[test]
    fn size_limits() {
        let p = dense(vec![vec![0.0; 8]; 7], |_, _| 0.5);
        assert!(matches!(lp_round(&p), Err(Error::TooLarge { .. })));
        assert!(matches!(exhaustive_opt(&p), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn dump_lists_nodes_and_edges() {
        let p = dense(vec![vec![0.5], vec![0.25, 1.0]], |_, _| 0.5);
        let tsv = p.to_tsv();
        assert_eq!(tsv.lines().filter(|l| l.starts_with("node")).count(), 3);
        assert_eq!(tsv.lines().filter(|l| l.starts_with("edge")).count(), 2);
    }
}
