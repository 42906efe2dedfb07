//! Composite clustering objective and solver.
//!
//! The objective is `L_c + lambda * L_b + gamma * L_s` where `L_c` is the
//! k-means inertia, `L_b` sums the within-cluster accuracy gaps between the
//! two groups, and `L_s` sums the squared within-cluster gaps of the group
//! severity totals. With `lambda = gamma = 0` the solver reduces to batch
//! Lloyd k-means; with `gamma = 0` only the bias term is active.
//!
//! The solver is sequential coordinate descent on assignments with batch
//! centroid updates: exact per-move deltas of all three terms are cheap to
//! maintain incrementally, and every accepted step is non-increasing in the
//! objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cohort::{Cohort, Group, Instance};
use crate::error::{Error, Result};

/// Objective comparisons use this absolute tolerance for accept/reject so
/// rounding noise cannot cause oscillation.
pub const ACCEPT_TOL: f64 = 1e-9;

/// Cluster count and term weights plus solver controls.
///
/// `lambda <= 0` weights the bias term (more negative prefers clusters with
/// large accuracy gaps); `gamma >= 0` weights the severity-similarity term.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Hyperparams {
    pub k: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            k: 5,
            lambda: 0.0,
            gamma: 0.0,
            max_iter: 300,
            seed: 0,
            restarts: 10,
        }
    }
}

impl Hyperparams {
    /// Check sign constraints and bounds against a cohort of `n` instances.
    pub fn validate(&self, n: usize) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda > 0.0 {
            return Err(Error::InvalidHyperparams(format!(
                "lambda must be finite and <= 0, got {}",
                self.lambda
            )));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::InvalidHyperparams(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        if self.k < 2 {
            return Err(Error::InvalidHyperparams(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        if self.k > n {
            return Err(Error::InvalidHyperparams(format!(
                "k = {} exceeds the {} instances available",
                self.k, n
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidHyperparams("max_iter must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidHyperparams("restarts must be positive".into()));
        }
        Ok(())
    }
}

/// A fitted clustering with its objective decomposition.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClusteringResult {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub objective: f64,
    pub l_c: f64,
    pub l_b: f64,
    pub l_s: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective recorded after initialization and after each iteration.
    pub trace: Vec<f64>,
    pub hyperparams: Hyperparams,
}

impl ClusteringResult {
    /// Build a result from a fixed assignment, with centroids set to the
    /// member means. Every cluster in `[0, h.k)` must be non-empty.
    pub fn from_assignment(cohort: &Cohort, assignment: Vec<usize>, h: Hyperparams) -> Result<ClusteringResult> {
        let n = cohort.len();
        if assignment.len() != n {
            return Err(Error::Invalid(format!(
                "assignment has {} entries for {} instances",
                assignment.len(),
                n
            )));
        }
        let k = h.k;
        let mut counts = vec![0usize; k];
        for &a in &assignment {
            if a >= k {
                return Err(Error::Invalid(format!("cluster index {a} out of range for k = {k}")));
            }
            counts[a] += 1;
        }
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Invalid(format!("cluster {j} is empty")));
        }
        let centroids = member_means(cohort, &assignment, k);
        let l_c = clustering_cost(cohort, &assignment, &centroids)?;
        let l_b = bias_term(cohort, &assignment);
        let l_s = severity_term(cohort, &assignment);
        let objective = l_c + h.lambda * l_b + h.gamma * l_s;
        Ok(ClusteringResult {
            assignment,
            centroids,
            objective,
            l_c,
            l_b,
            l_s,
            iterations: 0,
            converged: true,
            trace: vec![objective],
            hyperparams: h,
        })
    }

    /// Number of clusters.
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn member_means(cohort: &Cohort, assignment: &[usize], k: usize) -> Vec<Vec<f64>> {
    let d = cohort.dim();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (inst, &a) in cohort.instances().iter().zip(assignment) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(&inst.embedding) {
            *s += x;
        }
    }
    for (sum, &count) in sums.iter_mut().zip(&counts) {
        if count > 0 {
            for s in sum.iter_mut() {
                *s /= count as f64;
            }
        }
    }
    sums
}

/// Sum of squared Euclidean distances from each instance to its assigned
/// centroid (the k-means inertia `L_c`).
pub fn clustering_cost(cohort: &Cohort, assignment: &[usize], centroids: &[Vec<f64>]) -> Result<f64> {
    if assignment.len() != cohort.len() {
        return Err(Error::Invalid(format!(
            "assignment has {} entries for {} instances",
            assignment.len(),
            cohort.len()
        )));
    }
    for c in centroids {
        if c.len() != cohort.dim() {
            return Err(Error::Invalid(format!(
                "centroid dimension {} does not match cohort dimension {}",
                c.len(),
                cohort.dim()
            )));
        }
    }
    let mut total = 0.0;
    for (inst, &a) in cohort.instances().iter().zip(assignment) {
        let c = centroids.get(a).ok_or_else(|| {
            Error::Invalid(format!("cluster index {a} out of range for {} centroids", centroids.len()))
        })?;
        total += dist_sq(&inst.embedding, c);
    }
    Ok(total)
}

/// `L_b`: sum over clusters of the absolute accuracy gap between groups.
/// Clusters missing either group contribute zero.
pub fn bias_term(cohort: &Cohort, assignment: &[usize]) -> f64 {
    let k = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let mut stats = vec![ClusterStats::default(); k];
    for (inst, &a) in cohort.instances().iter().zip(assignment) {
        stats[a].add(inst);
    }
    stats.iter().map(ClusterStats::bias).sum()
}

/// `L_s`: sum over clusters of the squared gap between the group severity
/// totals. An absent group contributes a zero total.
pub fn severity_term(cohort: &Cohort, assignment: &[usize]) -> f64 {
    let k = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let mut stats = vec![ClusterStats::default(); k];
    for (inst, &a) in cohort.instances().iter().zip(assignment) {
        stats[a].add(inst);
    }
    stats.iter().map(ClusterStats::severity_gap_sq).sum()
}

/// Full composite objective for a given assignment and centroid set.
pub fn total_objective(
    cohort: &Cohort,
    assignment: &[usize],
    centroids: &[Vec<f64>],
    h: &Hyperparams,
) -> Result<f64> {
    let l_c = clustering_cost(cohort, assignment, centroids)?;
    Ok(l_c + h.lambda * bias_term(cohort, assignment) + h.gamma * severity_term(cohort, assignment))
}

/// Distance-weighted farthest-point seeding (k-means++ style), deterministic
/// in `h.seed`. Returns `k` centroids drawn from distinct instances.
pub fn init_centroids(cohort: &Cohort, h: &Hyperparams) -> Result<Vec<Vec<f64>>> {
    h.validate(cohort.len())?;
    Ok(seed_centroids(cohort, h.k, h.seed))
}

fn seed_centroids(cohort: &Cohort, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = cohort.len();
    let instances = cohort.instances();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen_idx = Vec::with_capacity(k);
    let mut is_chosen = vec![false; n];

    let first = rng.gen_range(0..n);
    chosen_idx.push(first);
    is_chosen[first] = true;

    // min squared distance to any chosen centroid
    let mut weights: Vec<f64> = instances
        .iter()
        .map(|inst| dist_sq(&inst.embedding, &instances[first].embedding))
        .collect();

    while chosen_idx.len() < k {
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in weights.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if u < w {
                    pick = Some(i);
                    break;
                }
                u -= w;
            }
            // rounding can walk past the end; fall back to the last weighted point
            pick.unwrap_or_else(|| {
                weights
                    .iter()
                    .rposition(|&w| w > 0.0)
                    .expect("positive total implies a positive weight")
            })
        } else {
            // all remaining points coincide with a centroid
            is_chosen.iter().position(|&c| !c).expect("k <= n leaves an unchosen point")
        };
        chosen_idx.push(next);
        is_chosen[next] = true;
        for (w, inst) in weights.iter_mut().zip(instances) {
            let d = dist_sq(&inst.embedding, &instances[next].embedding);
            if d < *w {
                *w = d;
            }
        }
    }

    chosen_idx
        .into_iter()
        .map(|i| instances[i].embedding.clone())
        .collect()
}

/// Per-cluster aggregates sufficient to evaluate exact move deltas of the
/// bias and severity terms.
#[derive(Debug, Default, Clone, Copy)]
struct ClusterStats {
    count: usize,
    n_a: usize,
    n_b: usize,
    correct_a: usize,
    correct_b: usize,
    sev_a: f64,
    sev_b: f64,
}

impl ClusterStats {
    fn add(&mut self, inst: &Instance) {
        self.count += 1;
        match inst.group {
            Group::A => {
                self.n_a += 1;
                self.correct_a += inst.correct as usize;
                self.sev_a += inst.severity;
            }
            Group::B => {
                self.n_b += 1;
                self.correct_b += inst.correct as usize;
                self.sev_b += inst.severity;
            }
        }
    }

    fn remove(&mut self, inst: &Instance) {
        self.count -= 1;
        match inst.group {
            Group::A => {
                self.n_a -= 1;
                self.correct_a -= inst.correct as usize;
                self.sev_a -= inst.severity;
            }
            Group::B => {
                self.n_b -= 1;
                self.correct_b -= inst.correct as usize;
                self.sev_b -= inst.severity;
            }
        }
    }

    fn plus(mut self, inst: &Instance) -> ClusterStats {
        self.add(inst);
        self
    }

    fn minus(mut self, inst: &Instance) -> ClusterStats {
        self.remove(inst);
        self
    }

    /// Absolute accuracy gap; zero when either group is absent.
    fn bias(&self) -> f64 {
        if self.n_a > 0 && self.n_b > 0 {
            (self.correct_a as f64 / self.n_a as f64 - self.correct_b as f64 / self.n_b as f64).abs()
        } else {
            0.0
        }
    }

    /// Squared gap of the group severity totals.
    fn severity_gap_sq(&self) -> f64 {
        let gap = self.sev_a - self.sev_b;
        gap * gap
    }
}

struct SolverState<'a> {
    cohort: &'a Cohort,
    h: Hyperparams,
    assignment: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    stats: Vec<ClusterStats>,
}

impl<'a> SolverState<'a> {
    fn new(cohort: &'a Cohort, h: Hyperparams, centroids: Vec<Vec<f64>>) -> SolverState<'a> {
        let n = cohort.len();
        SolverState {
            cohort,
            h,
            assignment: vec![0; n],
            centroids,
            stats: vec![ClusterStats::default(); h.k],
        }
    }

    /// Nearest-centroid assignment; ties go to the lowest cluster index.
    fn assign_nearest(&mut self) {
        for (i, inst) in self.cohort.instances().iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in self.centroids.iter().enumerate() {
                let d = dist_sq(&inst.embedding, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            self.assignment[i] = best;
        }
        self.rebuild_stats();
    }

    fn rebuild_stats(&mut self) {
        self.stats = vec![ClusterStats::default(); self.h.k];
        for (inst, &a) in self.cohort.instances().iter().zip(&self.assignment) {
            self.stats[a].add(inst);
        }
    }

    /// Set each centroid to the mean of its members. Never increases the
    /// objective: the mean minimizes `L_c` and the other terms depend only
    /// on assignments.
    fn update_centroids(&mut self) {
        let means = member_means(self.cohort, &self.assignment, self.h.k);
        for (c, (m, s)) in self.centroids.iter_mut().zip(means.into_iter().zip(&self.stats)) {
            // keep the old centroid for clusters that are empty here; repair
            // has already run, so this only happens transiently
            if s.count > 0 {
                *c = m;
            }
        }
    }

    /// Reseat the farthest instance into each empty cluster (ties on the
    /// lowest instance index). Empty clusters only arise from the initial
    /// nearest-centroid assignment when seed centroids coincide on
    /// duplicate points. The repaired cluster's centroid snaps to the moved
    /// instance, so `L_c` cannot increase. Instances that are the sole
    /// member of their cluster stay put (moving them only relocates the
    /// hole). Identity when no cluster is empty.
    fn repair_empty_clusters(&mut self) {
        loop {
            let Some(empty) = self.stats.iter().position(|s| s.count == 0) else {
                return;
            };
            let mut far_idx = None;
            let mut far_d = f64::NEG_INFINITY;
            for (i, inst) in self.cohort.instances().iter().enumerate() {
                let a = self.assignment[i];
                if self.stats[a].count <= 1 {
                    continue;
                }
                let d = dist_sq(&inst.embedding, &self.centroids[a]);
                if d > far_d {
                    far_d = d;
                    far_idx = Some(i);
                }
            }
            let i = far_idx.expect("k <= n guarantees a donor cluster with > 1 member");
            let inst = &self.cohort.instances()[i];
            let from = self.assignment[i];
            self.stats[from].remove(inst);
            self.stats[empty].add(inst);
            self.assignment[i] = empty;
            self.centroids[empty] = inst.embedding.clone();
        }
    }

    /// One coordinate-descent sweep over instances in index order. Each
    /// instance moves to the cluster with the lowest exact objective delta
    /// under the current centroids; ties keep the current cluster, then the
    /// lowest cluster index. A move that would empty its source cluster is
    /// not available: emptying sacrifices monotone descent (the refill is
    /// not delta-checked) and k non-empty clusters are part of the result
    /// contract. Returns the number of moves made.
    fn descent_pass(&mut self) -> usize {
        let k = self.h.k;
        let lambda = self.h.lambda;
        let gamma = self.h.gamma;
        let mut moves = 0;
        for i in 0..self.cohort.len() {
            let inst = &self.cohort.instances()[i];
            let cur = self.assignment[i];
            if self.stats[cur].count == 1 {
                continue;
            }
            let cur_stats = self.stats[cur];
            let cur_minus = cur_stats.minus(inst);
            let d_cur = dist_sq(&inst.embedding, &self.centroids[cur]);
            let bias_release = cur_minus.bias() - cur_stats.bias();
            let sev_release = cur_minus.severity_gap_sq() - cur_stats.severity_gap_sq();

            let mut best = cur;
            let mut best_delta = 0.0;
            for cand in 0..k {
                if cand == cur {
                    continue;
                }
                let cand_stats = self.stats[cand];
                let cand_plus = cand_stats.plus(inst);
                let delta = dist_sq(&inst.embedding, &self.centroids[cand]) - d_cur
                    + lambda * (bias_release + cand_plus.bias() - cand_stats.bias())
                    + gamma * (sev_release + cand_plus.severity_gap_sq() - cand_stats.severity_gap_sq());
                if delta < best_delta - ACCEPT_TOL {
                    best_delta = delta;
                    best = cand;
                }
            }
            if best != cur {
                self.stats[cur].remove(inst);
                self.stats[best].add(inst);
                self.assignment[i] = best;
                moves += 1;
            }
        }
        moves
    }

    /// Objective recomputed from scratch at the current state.
    fn objective(&self) -> f64 {
        let l_c: f64 = self
            .cohort
            .instances()
            .iter()
            .zip(&self.assignment)
            .map(|(inst, &a)| dist_sq(&inst.embedding, &self.centroids[a]))
            .sum();
        l_c + self.h.lambda * bias_term(self.cohort, &self.assignment)
            + self.h.gamma * severity_term(self.cohort, &self.assignment)
    }
}

fn solve_once(cohort: &Cohort, h: Hyperparams, seed: u64) -> Result<ClusteringResult> {
    let centroids = seed_centroids(cohort, h.k, seed);
    let mut state = SolverState::new(cohort, h, centroids);
    state.assign_nearest();
    state.repair_empty_clusters();

    let mut trace = vec![state.objective()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < h.max_iter {
        iterations += 1;
        state.update_centroids();
        let moves = state.descent_pass();
        trace.push(state.objective());
        if moves == 0 {
            converged = true;
            break;
        }
    }
    state.update_centroids();

    let l_c = clustering_cost(cohort, &state.assignment, &state.centroids)?;
    let l_b = bias_term(cohort, &state.assignment);
    let l_s = severity_term(cohort, &state.assignment);
    let objective = l_c + h.lambda * l_b + h.gamma * l_s;
    if !objective.is_finite() {
        return Err(Error::Invalid("non-finite objective".into()));
    }
    trace.push(objective);
    Ok(ClusteringResult {
        assignment: state.assignment,
        centroids: state.centroids,
        objective,
        l_c,
        l_b,
        l_s,
        iterations,
        converged,
        trace,
        hyperparams: h,
    })
}

/// Fit cluster assignments by monotone coordinate descent. Runs
/// `h.restarts` independent initializations (seeds `h.seed + r`) and keeps
/// the lowest objective, preferring the earliest restart on exact ties.
/// Deterministic: identical inputs give an identical result.
pub fn fit(cohort: &Cohort, h: &Hyperparams) -> Result<ClusteringResult> {
    h.validate(cohort.len())?;
    let mut best: Option<ClusteringResult> = None;
    for r in 0..h.restarts {
        let result = solve_once(cohort, *h, h.seed.wrapping_add(r as u64))?;
        match &best {
            Some(b) if result.objective >= b.objective => {}
            _ => best = Some(result),
        }
    }
    Ok(best.expect("restarts >= 1"))
}
