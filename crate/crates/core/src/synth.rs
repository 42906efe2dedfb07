//! Synthetic cohorts with planted biased subpopulations.
//!
//! Components are isotropic Gaussians; each carries its own per-group
//! accuracy and severity parameters, so a known bias can be planted in one
//! component and detection scored against the ground-truth labels.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Group, Instance};
use crate::error::{Error, Result};

/// One Gaussian component of the mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    /// Mixture weight; weights are normalized over the component list.
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Isotropic standard deviation of the embedding noise.
    pub spread: f64,
    pub acc_a: f64,
    pub acc_b: f64,
    pub sev_mean_a: f64,
    pub sev_mean_b: f64,
    pub sev_std: f64,
    /// Probability that an instance from this component is in group A.
    pub frac_a: f64,
}

/// Mixture description for [`generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub components: Vec<ComponentSpec>,
    pub n: usize,
    pub dim: usize,
    /// Optional categorical attributes: name -> per-component distribution
    /// over values.
    #[serde(default)]
    pub attribute_decor: BTreeMap<String, Vec<BTreeMap<String, f64>>>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSpec("n must be positive".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidSpec("dim must be positive".into()));
        }
        if self.components.is_empty() {
            return Err(Error::InvalidSpec("at least one component is required".into()));
        }
        for (i, c) in self.components.iter().enumerate() {
            let ctx = format!("component {i}");
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::InvalidSpec(format!("{ctx}: weight must be > 0")));
            }
            if c.mean.len() != self.dim {
                return Err(Error::InvalidSpec(format!(
                    "{ctx}: mean has {} entries, expected {}",
                    c.mean.len(),
                    self.dim
                )));
            }
            if !(c.spread.is_finite() && c.spread > 0.0) {
                return Err(Error::InvalidSpec(format!("{ctx}: spread must be > 0")));
            }
            for (name, acc) in [("acc_a", c.acc_a), ("acc_b", c.acc_b)] {
                if !(0.0..=1.0).contains(&acc) {
                    return Err(Error::InvalidSpec(format!("{ctx}: {name} must be in [0, 1]")));
                }
            }
            for (name, sev) in [("sev_mean_a", c.sev_mean_a), ("sev_mean_b", c.sev_mean_b)] {
                if !(sev.is_finite() && sev >= 0.0) {
                    return Err(Error::InvalidSpec(format!("{ctx}: {name} must be >= 0")));
                }
            }
            if !(c.sev_std.is_finite() && c.sev_std > 0.0) {
                return Err(Error::InvalidSpec(format!("{ctx}: sev_std must be > 0")));
            }
            if !(c.frac_a > 0.0 && c.frac_a < 1.0) {
                return Err(Error::InvalidSpec(format!("{ctx}: frac_a must be in (0, 1)")));
            }
        }
        for (name, dists) in &self.attribute_decor {
            if dists.len() != self.components.len() {
                return Err(Error::InvalidSpec(format!(
                    "attribute `{name}` has {} distributions for {} components",
                    dists.len(),
                    self.components.len()
                )));
            }
            for (i, dist) in dists.iter().enumerate() {
                let total: f64 = dist.values().sum();
                if dist.is_empty() || !total.is_finite() || total <= 0.0 {
                    return Err(Error::InvalidSpec(format!(
                        "attribute `{name}`, component {i}: probabilities must sum to > 0"
                    )));
                }
                if dist.values().any(|&p| !(p.is_finite() && p >= 0.0)) {
                    return Err(Error::InvalidSpec(format!(
                        "attribute `{name}`, component {i}: probabilities must be >= 0"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Attribute name under which the true component id is stored on generated
/// instances (column `attr_truth_component` in cohort files).
pub const TRUTH_ATTRIBUTE: &str = "truth_component";

fn pick_weighted<R: Rng>(rng: &mut R, cumulative: &[f64]) -> usize {
    let total = *cumulative.last().expect("non-empty weights");
    let u = rng.gen::<f64>() * total;
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

/// Draw a cohort from the mixture. Returns the cohort and the ground-truth
/// component label per instance (also stored as [`TRUTH_ATTRIBUTE`]).
/// Deterministic given the seed.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<(Cohort, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut cum = Vec::with_capacity(spec.components.len());
    let mut acc = 0.0;
    for c in &spec.components {
        acc += c.weight;
        cum.push(acc);
    }

    let decor: Vec<(&String, Vec<(Vec<&String>, Vec<f64>)>)> = spec
        .attribute_decor
        .iter()
        .map(|(name, dists)| {
            let per_comp = dists
                .iter()
                .map(|d| {
                    let values: Vec<&String> = d.keys().collect();
                    let mut cum = Vec::with_capacity(d.len());
                    let mut acc = 0.0;
                    for p in d.values() {
                        acc += p;
                        cum.push(acc);
                    }
                    (values, cum)
                })
                .collect();
            (name, per_comp)
        })
        .collect();

    let mut instances = Vec::with_capacity(spec.n);
    let mut truth = Vec::with_capacity(spec.n);
    let width = spec.n.to_string().len().max(4);
    for i in 0..spec.n {
        let comp_idx = pick_weighted(&mut rng, &cum);
        let comp = &spec.components[comp_idx];

        let embedding = comp
            .mean
            .iter()
            .map(|&m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + comp.spread * z
            })
            .collect();
        let group = if rng.gen::<f64>() < comp.frac_a {
            Group::A
        } else {
            Group::B
        };
        let (acc, sev_mean) = match group {
            Group::A => (comp.acc_a, comp.sev_mean_a),
            Group::B => (comp.acc_b, comp.sev_mean_b),
        };
        let correct = rng.gen::<f64>() < acc;
        let z: f64 = StandardNormal.sample(&mut rng);
        let severity = (sev_mean + comp.sev_std * z).max(0.0); // truncate at zero

        let mut attributes = BTreeMap::new();
        attributes.insert(TRUTH_ATTRIBUTE.to_string(), comp_idx.to_string());
        for (name, per_comp) in &decor {
            let (values, cum) = &per_comp[comp_idx];
            let v = values[pick_weighted(&mut rng, cum)];
            attributes.insert((*name).clone(), v.to_lowercase());
        }

        instances.push(Instance {
            id: format!("s{i:0width$}"),
            group,
            correct,
            severity,
            embedding,
            attributes,
        });
        truth.push(comp_idx);
    }

    let cohort = Cohort::new(instances)?;
    Ok((cohort, truth))
}

/// Detection quality of a flagged-cluster set against the planted component:
/// recall over planted instances and precision over flagged instances
/// (precision is 0 by convention when nothing is flagged).
pub fn recall_score(
    flagged_clusters: &[usize],
    assignment: &[usize],
    truth: &[usize],
    planted: usize,
) -> Result<(f64, f64)> {
    if assignment.len() != truth.len() {
        return Err(Error::Invalid(format!(
            "assignment has {} entries, truth has {}",
            assignment.len(),
            truth.len()
        )));
    }
    let planted_total = truth.iter().filter(|&&t| t == planted).count();
    if planted_total == 0 {
        return Err(Error::Degenerate(format!(
            "no instances belong to planted component {planted}"
        )));
    }
    let flagged: std::collections::HashSet<usize> = flagged_clusters.iter().copied().collect();
    let mut captured = 0usize;
    let mut in_flagged = 0usize;
    for (&a, &t) in assignment.iter().zip(truth) {
        if flagged.contains(&a) {
            in_flagged += 1;
            if t == planted {
                captured += 1;
            }
        }
    }
    let recall = captured as f64 / planted_total as f64;
    let precision = if in_flagged == 0 {
        0.0
    } else {
        captured as f64 / in_flagged as f64
    };
    Ok((recall, precision))
}
