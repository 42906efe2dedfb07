//! Per-cluster bias flagging and audit metrics.
//!
//! A cluster is flagged when both groups are present, the accuracy gap is at
//! least `acc_gap_min`, and the gap between the group mean severities is at
//! most `severity_gap_max`. The report aggregates the flagged clusters into
//! SCR (share of clusters flagged), SIR (share of instances in flagged
//! clusters), and the average/maximum absolute bias score.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Group};
use crate::engine::{ClusteringResult, Hyperparams};
use crate::error::{Error, Result};

/// Flagging thresholds. The defaults (10% accuracy gap, 0.8 severity gap)
/// can be replaced by [`bootstrap_thresholds`] estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasThresholds {
    /// Minimum within-cluster accuracy gap for a cluster to be flagged.
    pub acc_gap_min: f64,
    /// Maximum within-cluster gap between group mean severities.
    pub severity_gap_max: f64,
}

impl Default for BiasThresholds {
    fn default() -> Self {
        BiasThresholds {
            acc_gap_min: 0.10,
            severity_gap_max: 0.8,
        }
    }
}

impl BiasThresholds {
    pub fn new(acc_gap_min: f64, severity_gap_max: f64) -> Result<BiasThresholds> {
        if !(0.0..=1.0).contains(&acc_gap_min) {
            return Err(Error::Invalid(format!(
                "acc_gap_min must be in [0, 1], got {acc_gap_min}"
            )));
        }
        if !severity_gap_max.is_finite() || severity_gap_max < 0.0 {
            return Err(Error::Invalid(format!(
                "severity_gap_max must be finite and >= 0, got {severity_gap_max}"
            )));
        }
        Ok(BiasThresholds {
            acc_gap_min,
            severity_gap_max,
        })
    }
}

/// Which special case of the objective produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kmeans,
    Logan,
    Slogan,
}

impl Method {
    /// Classify hyperparameters: `gamma > 0` means the severity term is
    /// active, otherwise `lambda < 0` means bias-only.
    pub fn from_hyperparams(h: &Hyperparams) -> Method {
        if h.gamma > 0.0 {
            Method::Slogan
        } else if h.lambda < 0.0 {
            Method::Logan
        } else {
            Method::Kmeans
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Kmeans => write!(f, "kmeans"),
            Method::Logan => write!(f, "logan"),
            Method::Slogan => write!(f, "slogan"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" => Ok(Method::Kmeans),
            "logan" => Ok(Method::Logan),
            "slogan" => Ok(Method::Slogan),
            other => Err(Error::Invalid(format!(
                "unknown method `{other}` (expected kmeans, logan, or slogan)"
            ))),
        }
    }
}

/// Audit facts for one cluster. Accuracy fields are absent when the cluster
/// lacks members of that group; a missing group never fabricates a gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAudit {
    pub cluster_id: usize,
    pub size: usize,
    pub acc_a: Option<f64>,
    pub acc_b: Option<f64>,
    pub bias_score: Option<f64>,
    pub severity_gap: Option<f64>,
    pub flagged: bool,
}

/// Relative prevalence difference of one attribute value between the most-
/// and least-biased cluster. `delta_percent` is `None` when the least-biased
/// cluster has zero prevalence (division by zero, reported as N/A).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationEntry {
    pub attribute: String,
    pub value: String,
    pub delta_percent: Option<f64>,
}

/// Full audit of one fitted clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub method: Method,
    pub clusters: Vec<ClusterAudit>,
    pub scr: f64,
    pub sir: f64,
    pub avg_abs_bias: f64,
    pub max_abs_bias: f64,
    /// Filled by comparing against a same-k k-means baseline; absent until then.
    pub normalized_inertia: Option<f64>,
    pub global_bias: f64,
    pub global_acc_a: f64,
    pub global_acc_b: f64,
    pub hyperparams: Hyperparams,
    pub thresholds: BiasThresholds,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub characterization: Option<Vec<CharacterizationEntry>>,
}

impl AuditReport {
    /// Number of flagged clusters.
    pub fn flagged_count(&self) -> usize {
        self.clusters.iter().filter(|c| c.flagged).count()
    }

    /// Indices of flagged clusters.
    pub fn flagged_clusters(&self) -> Vec<usize> {
        self.clusters
            .iter()
            .filter(|c| c.flagged)
            .map(|c| c.cluster_id)
            .collect()
    }

    /// Largest bias score over all clusters with a defined score, flagged or
    /// not. Used as the fallback ranking when nothing is flagged.
    pub fn max_cluster_gap(&self) -> f64 {
        self.clusters
            .iter()
            .filter_map(|c| c.bias_score)
            .fold(0.0, f64::max)
    }
}

#[derive(Default, Clone, Copy)]
struct GroupTally {
    n_a: usize,
    n_b: usize,
    correct_a: usize,
    correct_b: usize,
    sev_a: f64,
    sev_b: f64,
}

impl GroupTally {
    fn add(&mut self, group: Group, correct: bool, severity: f64) {
        match group {
            Group::A => {
                self.n_a += 1;
                self.correct_a += correct as usize;
                self.sev_a += severity;
            }
            Group::B => {
                self.n_b += 1;
                self.correct_b += correct as usize;
                self.sev_b += severity;
            }
        }
    }

    fn acc_a(&self) -> Option<f64> {
        (self.n_a > 0).then(|| self.correct_a as f64 / self.n_a as f64)
    }

    fn acc_b(&self) -> Option<f64> {
        (self.n_b > 0).then(|| self.correct_b as f64 / self.n_b as f64)
    }

    fn mean_sev_gap(&self) -> Option<f64> {
        if self.n_a > 0 && self.n_b > 0 {
            Some((self.sev_a / self.n_a as f64 - self.sev_b / self.n_b as f64).abs())
        } else {
            None
        }
    }
}

/// Estimate flagging thresholds from the cohort itself: for each rep,
/// resample `n` instances with replacement, split them into random
/// pseudo-groups of the original group sizes (true labels ignored), and
/// record the accuracy gap and mean-severity gap. Each threshold is the mean
/// of its gap distribution plus three standard deviations.
pub fn bootstrap_thresholds(cohort: &Cohort, reps: usize, seed: u64) -> Result<BiasThresholds> {
    let n = cohort.len();
    if n < 4 {
        return Err(Error::Degenerate(format!(
            "bootstrap needs at least 4 instances, got {n}"
        )));
    }
    if reps < 2 {
        return Err(Error::Invalid(format!("reps must be at least 2, got {reps}")));
    }
    let n_a = cohort.n_a();
    let instances = cohort.instances();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut acc_gaps = Vec::with_capacity(reps);
    let mut sev_gaps = Vec::with_capacity(reps);
    let mut sample: Vec<usize> = vec![0; n];
    for _ in 0..reps {
        for slot in sample.iter_mut() {
            *slot = rng.gen_range(0..n);
        }
        sample.shuffle(&mut rng);
        let mut tally = GroupTally::default();
        for (pos, &idx) in sample.iter().enumerate() {
            let pseudo = if pos < n_a { Group::A } else { Group::B };
            let inst = &instances[idx];
            tally.add(pseudo, inst.correct, inst.severity);
        }
        acc_gaps.push((tally.acc_a().unwrap() - tally.acc_b().unwrap()).abs());
        sev_gaps.push(tally.mean_sev_gap().unwrap());
    }

    let acc_gap_min = (mean(&acc_gaps) + 3.0 * std_dev(&acc_gaps)).min(1.0);
    let severity_gap_max = mean(&sev_gaps) + 3.0 * std_dev(&sev_gaps);
    BiasThresholds::new(acc_gap_min, severity_gap_max)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}

/// Audit a fitted clustering against thresholds. `normalized_inertia` is
/// left unset; fill it with [`normalized_inertia`] against a k-means
/// baseline.
pub fn audit_clusters(
    result: &ClusteringResult,
    cohort: &Cohort,
    thresholds: &BiasThresholds,
) -> Result<AuditReport> {
    let n = cohort.len();
    if result.assignment.len() != n {
        return Err(Error::Invalid(format!(
            "result was fitted on {} instances, cohort has {n}",
            result.assignment.len()
        )));
    }
    let k = result.k();
    let mut tallies = vec![GroupTally::default(); k];
    let mut sizes = vec![0usize; k];
    let mut overall = GroupTally::default();
    for (inst, &a) in cohort.instances().iter().zip(&result.assignment) {
        if a >= k {
            return Err(Error::Invalid(format!(
                "cluster index {a} out of range for k = {k}"
            )));
        }
        sizes[a] += 1;
        tallies[a].add(inst.group, inst.correct, inst.severity);
        overall.add(inst.group, inst.correct, inst.severity);
    }

    let mut clusters = Vec::with_capacity(k);
    for (j, (tally, &size)) in tallies.iter().zip(&sizes).enumerate() {
        let acc_a = tally.acc_a();
        let acc_b = tally.acc_b();
        let bias_score = match (acc_a, acc_b) {
            (Some(a), Some(b)) => Some((a - b).abs()),
            _ => None,
        };
        let severity_gap = tally.mean_sev_gap();
        let flagged = match (bias_score, severity_gap) {
            (Some(bias), Some(gap)) => {
                bias >= thresholds.acc_gap_min && gap <= thresholds.severity_gap_max
            }
            _ => false,
        };
        clusters.push(ClusterAudit {
            cluster_id: j,
            size,
            acc_a,
            acc_b,
            bias_score,
            severity_gap,
            flagged,
        });
    }

    let flagged: Vec<&ClusterAudit> = clusters.iter().filter(|c| c.flagged).collect();
    let scr = flagged.len() as f64 / k as f64;
    let sir = flagged.iter().map(|c| c.size).sum::<usize>() as f64 / n as f64;
    let avg_abs_bias = if flagged.is_empty() {
        0.0
    } else {
        flagged.iter().map(|c| c.bias_score.unwrap()).sum::<f64>() / flagged.len() as f64
    };
    let max_abs_bias = flagged
        .iter()
        .map(|c| c.bias_score.unwrap())
        .fold(0.0, f64::max);

    let global_acc_a = overall.acc_a().expect("cohort guarantees group A");
    let global_acc_b = overall.acc_b().expect("cohort guarantees group B");

    Ok(AuditReport {
        method: Method::from_hyperparams(&result.hyperparams),
        clusters,
        scr,
        sir,
        avg_abs_bias,
        max_abs_bias,
        normalized_inertia: None,
        global_bias: (global_acc_a - global_acc_b).abs(),
        global_acc_a,
        global_acc_b,
        hyperparams: result.hyperparams,
        thresholds: *thresholds,
    characterization: None,
    })
}

/// Clustering quality relative to a baseline fitted on the same cohort with
/// the same k: `result.l_c / baseline.l_c`. The baseline against itself is
/// exactly 1.0.
pub fn normalized_inertia(result: &ClusteringResult, baseline: &ClusteringResult) -> Result<f64> {
    if result.k() != baseline.k() {
        return Err(Error::Invalid(format!(
            "k mismatch: result has {}, baseline has {}",
            result.k(),
            baseline.k()
        )));
    }
    if result.assignment.len() != baseline.assignment.len() {
        return Err(Error::Invalid(
            "result and baseline were fitted on different cohorts".into(),
        ));
    }
    if baseline.l_c == 0.0 {
        return Err(Error::Degenerate(
            "baseline inertia is zero; normalized inertia is undefined".into(),
        ));
    }
    Ok(result.l_c / baseline.l_c)
}

/// Compare attribute-value prevalences between the most- and least-biased
/// clusters. Deltas are relative percent differences; a zero prevalence in
/// the least-biased cluster yields N/A, and values absent from both clusters
/// are omitted. Ties on bias score prefer the larger cluster, then the lower
/// index.
pub fn characterize(
    result: &ClusteringResult,
    cohort: &Cohort,
    report: &AuditReport,
) -> Result<Vec<CharacterizationEntry>> {
    let scored: Vec<&ClusterAudit> = report
        .clusters
        .iter()
        .filter(|c| c.bias_score.is_some())
        .collect();
    if scored.len() < 2 {
        return Err(Error::Degenerate(format!(
            "characterization needs at least 2 clusters with a defined bias score, got {}",
            scored.len()
        )));
    }

    let better = |a: &&ClusterAudit, b: &&ClusterAudit, prefer_high: bool| -> bool {
        let (sa, sb) = (a.bias_score.unwrap(), b.bias_score.unwrap());
        if sa != sb {
            return if prefer_high { sa > sb } else { sa < sb };
        }
        if a.size != b.size {
            return a.size > b.size;
        }
        a.cluster_id < b.cluster_id
    };
    let most = scored
        .iter()
        .copied()
        .reduce(|acc, c| if better(&c, &acc, true) { c } else { acc })
        .unwrap();
    let least = scored
        .iter()
        .copied()
        .reduce(|acc, c| if better(&c, &acc, false) { c } else { acc })
        .unwrap();

    let prevalence = |cluster_id: usize| {
        let mut counts: std::collections::BTreeMap<(&str, &str), usize> = Default::default();
        let mut size = 0usize;
        for (inst, &a) in cohort.instances().iter().zip(&result.assignment) {
            if a != cluster_id {
                continue;
            }
            size += 1;
            for (name, value) in &inst.attributes {
                *counts.entry((name.as_str(), value.as_str())).or_default() += 1;
            }
        }
        (counts, size)
    };
    let (most_counts, most_size) = prevalence(most.cluster_id);
    let (least_counts, least_size) = prevalence(least.cluster_id);

    let keys: std::collections::BTreeSet<(&str, &str)> = most_counts
        .keys()
        .chain(least_counts.keys())
        .copied()
        .collect();

    let mut entries = Vec::new();
    for (name, value) in keys {
        let p_most = *most_counts.get(&(name, value)).unwrap_or(&0) as f64 / most_size as f64;
        let p_least = *least_counts.get(&(name, value)).unwrap_or(&0) as f64 / least_size as f64;
        if p_most == 0.0 && p_least == 0.0 {
            continue;
        }
        let delta_percent = if p_least > 0.0 {
            Some(100.0 * (p_most - p_least) / p_least)
        } else {
            None // division by zero: N/A
        };
        entries.push(CharacterizationEntry {
            attribute: name.to_string(),
            value: value.to_string(),
            delta_percent,
        });
    }
    Ok(entries)
}
