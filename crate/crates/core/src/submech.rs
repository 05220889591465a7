use std::collections::BTreeMap;

use crate::alphabet::Radix;
use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::occasion::OccasionId;

/// A probability distribution over the joint outputs of a list of occasions.
#[derive(Debug, Clone)]
pub struct Repertoire {
    pub occasions: Vec<(OccasionId, usize)>,
    pub probs: Vec<f64>,
}

impl Repertoire {
    pub fn new(occasions: Vec<(OccasionId, usize)>, probs: Vec<f64>) -> Self {
        debug_assert_eq!(
            occasions.iter().map(|(_, n)| n).product::<usize>(),
            probs.len()
        );
        Repertoire { occasions, probs }
    }

    pub fn radix(&self) -> Radix {
        Radix::new(self.occasions.iter().map(|(_, n)| *n).collect())
    }

    pub fn prob(&self, outcome: &[usize]) -> f64 {
        self.probs[self.radix().encode(outcome)]
    }
}

/// One conditional factor of a subsystem mechanism: the mechanism of a
/// single target, wired to a subset of the shared source list.
#[derive(Debug, Clone)]
pub struct Factor {
    /// The target occasion and its output alphabet size.
    pub target: (OccasionId, usize),
    /// For each mechanism input, the index into the shared source list.
    pub slots: Vec<usize>,
    /// p(target | slot values); `mech.inputs` keeps the original ids.
    pub mech: Mechanism,
}

impl Factor {
    pub fn prob(&self, digits: &[usize], out: usize) -> f64 {
        self.mech.prob(self.mech.input_radix.encode(digits), out)
    }
}

/// The joint mechanism of a set of target occasions conditioned on
/// interventions on a shared list of source occasions: a product of
/// per-target factors.
#[derive(Debug, Clone)]
pub struct SubMechanism {
    pub sources: Vec<(OccasionId, usize)>,
    pub factors: Vec<Factor>,
}

impl SubMechanism {
    pub fn new(sources: Vec<(OccasionId, usize)>, factors: Vec<Factor>) -> Self {
        for f in &factors {
            debug_assert_eq!(f.slots.len(), f.mech.inputs.len());
            for (&slot, size) in f.slots.iter().zip(f.mech.input_radix.sizes()) {
                debug_assert_eq!(sources[slot].1, *size);
            }
        }
        SubMechanism { sources, factors }
    }

    pub fn source_radix(&self) -> Radix {
        Radix::new(self.sources.iter().map(|(_, n)| *n).collect())
    }

    pub fn target_radix(&self) -> Radix {
        Radix::new(self.factors.iter().map(|f| f.target.1).collect())
    }

    pub fn targets(&self) -> Vec<(OccasionId, usize)> {
        self.factors.iter().map(|f| f.target).collect()
    }

    /// Joint probability of `outcome` (one symbol per factor, in factor
    /// order) given the source joint state `input`.
    pub fn prob(&self, input: usize, outcome: &[usize]) -> f64 {
        let radix = self.source_radix();
        let digits = radix.decode(input);
        self.prob_digits(&digits, outcome)
    }

    pub fn prob_digits(&self, digits: &[usize], outcome: &[usize]) -> f64 {
        let mut p = 1.0;
        for (f, &out) in self.factors.iter().zip(outcome) {
            let local: Vec<usize> = f.slots.iter().map(|&s| digits[s]).collect();
            p *= f.prob(&local, out);
            if p == 0.0 {
                break;
            }
        }
        p
    }

    /// Outcome vector (factor order) from an assignment of target outputs.
    pub fn outcome_from(&self, outputs: &BTreeMap<OccasionId, usize>) -> Result<Vec<usize>> {
        self.factors
            .iter()
            .map(|f| {
                outputs.get(&f.target.0).copied().ok_or_else(|| {
                    Error::InvalidGraph(format!("no output bound for target {}", f.target.0))
                })
            })
            .collect()
    }

    /// Restriction to the sources where `keep` is true: every dropped source
    /// is averaged out of each factor under the uniform distribution,
    /// factor by factor.
    pub fn restrict(&self, keep: &[bool]) -> Result<SubMechanism> {
        assert_eq!(keep.len(), self.sources.len());
        let kept: Vec<usize> = (0..self.sources.len()).filter(|&i| keep[i]).collect();
        let remap: BTreeMap<usize, usize> =
            kept.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let mut factors = Vec::with_capacity(self.factors.len());
        for f in &self.factors {
            let drop_local: Vec<usize> = f
                .slots
                .iter()
                .enumerate()
                .filter(|(_, &s)| !keep[s])
                .map(|(i, _)| i)
                .collect();
            let mech = f.mech.marginalize_uniform(&drop_local)?;
            let slots: Vec<usize> = f
                .slots
                .iter()
                .filter(|&&s| keep[s])
                .map(|s| remap[s])
                .collect();
            factors.push(Factor {
                target: f.target,
                slots,
                mech,
            });
        }
        Ok(SubMechanism::new(
            kept.iter().map(|&i| self.sources[i]).collect(),
            factors,
        ))
    }

    /// Connected components of the factor/source bipartite graph. Each
    /// component is `(factor indices, source indices)`; factors with no
    /// sources form singleton components with no sources.
    pub fn components(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        let n_src = self.sources.len();
        let n_fac = self.factors.len();
        // union-find over sources and factors (factors offset by n_src)
        let mut parent: Vec<usize> = (0..n_src + n_fac).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let r = find(parent, parent[i]);
                parent[i] = r;
            }
            parent[i]
        }
        for (fi, f) in self.factors.iter().enumerate() {
            for &s in &f.slots {
                let a = find(&mut parent, n_src + fi);
                let b = find(&mut parent, s);
                parent[a] = b;
            }
        }
        let mut groups: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for fi in 0..n_fac {
            let root = find(&mut parent, n_src + fi);
            groups.entry(root).or_default().0.push(fi);
        }
        for s in 0..n_src {
            let root = find(&mut parent, s);
            if let Some(g) = groups.get_mut(&root) {
                g.1.push(s);
            }
            // sources touched by no factor belong to no component
        }
        groups.into_values().collect()
    }

    /// The sub-mechanism induced by a subset of factors, with sources
    /// shrunk to those the kept factors actually read.
    pub fn select_factors(&self, factor_idxs: &[usize]) -> SubMechanism {
        let mut used: Vec<usize> = factor_idxs
            .iter()
            .flat_map(|&fi| self.factors[fi].slots.iter().copied())
            .collect();
        used.sort_unstable();
        used.dedup();
        let remap: BTreeMap<usize, usize> =
            used.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let factors = factor_idxs
            .iter()
            .map(|&fi| {
                let f = &self.factors[fi];
                Factor {
                    target: f.target,
                    slots: f.slots.iter().map(|s| remap[s]).collect(),
                    mech: f.mech.clone(),
                }
            })
            .collect();
        SubMechanism::new(used.iter().map(|&i| self.sources[i]).collect(), factors)
    }

    pub fn is_deterministic(&self) -> bool {
        self.factors.iter().all(|f| f.mech.is_deterministic())
    }
}
