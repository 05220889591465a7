//! Information measures over subsystem mechanisms: actual repertoires,
//! effective information, excess information over partitions, and the
//! minimum-information partition.
//!
//! All measures treat mechanism inputs as interventions distributed
//! uniformly; nothing is ever sampled.

use crate::error::{Error, Result};
use crate::submech::{Repertoire, SubMechanism};

/// Cap on enumerated joint source spaces.
pub const SOURCE_CAP: usize = 1 << 22;

/// Bipartition enumeration refuses mechanisms with more sources than this.
pub const MAX_MIP_SOURCES: usize = 20;

/// A partition of a mechanism's sources into disjoint blocks (indices into
/// `SubMechanism::sources`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Self {
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort();
        Partition { blocks }
    }

    pub fn bipartition(n_sources: usize, mask: u32) -> Self {
        let a: Vec<usize> = (0..n_sources).filter(|&i| mask >> i & 1 == 1).collect();
        let b: Vec<usize> = (0..n_sources).filter(|&i| mask >> i & 1 == 0).collect();
        Partition::new(vec![a, b])
    }

    pub fn validate(&self, n_sources: usize) -> Result<()> {
        let mut seen = vec![false; n_sources];
        for b in &self.blocks {
            if b.is_empty() {
                return Err(Error::InvalidGraining("empty partition block".into()));
            }
            for &i in b {
                if i >= n_sources || seen[i] {
                    return Err(Error::InvalidGraining(format!(
                        "partition block index {i} out of range or repeated"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::InvalidGraining(
                "partition does not cover all sources".into(),
            ));
        }
        Ok(())
    }
}

/// p(x_out) under uniformly distributed interventions.
pub fn output_marginal(m: &SubMechanism) -> Result<Repertoire> {
    let n_in = m.source_radix().size_capped(SOURCE_CAP, "source space")?;
    let n_out = m.target_radix().size_capped(SOURCE_CAP, "target space")?;
    let out_radix = m.target_radix();
    let mut probs = vec![0.0; n_out];
    let mut outcome = vec![0usize; m.factors.len()];
    for input in 0..n_in {
        let digits = m.source_radix().decode(input);
        for (out, p) in probs.iter_mut().enumerate() {
            out_radix.decode_into(out, &mut outcome);
            *p += m.prob_digits(&digits, &outcome);
        }
    }
    for p in &mut probs {
        *p /= n_in as f64;
    }
    Ok(Repertoire::new(m.targets(), probs))
}

/// Actual repertoire: the source distribution that causes `outcome`, by
/// Bayes over the uniform intervention prior (one probability per joint
/// source state).
pub fn actual_repertoire(m: &SubMechanism, outcome: &[usize]) -> Result<Repertoire> {
    let n_in = m.source_radix().size_capped(SOURCE_CAP, "source space")?;
    let mut liks = Vec::with_capacity(n_in);
    let mut total = 0.0;
    for input in 0..n_in {
        let p = m.prob(input, outcome);
        total += p;
        liks.push(p);
    }
    if total <= 0.0 {
        return Err(Error::ZeroMarginal);
    }
    for p in &mut liks {
        *p /= total;
    }
    Ok(Repertoire::new(m.sources.clone(), liks))
}

/// ei computed literally from the actual repertoire: KL from uniform over
/// the full joint source space. The component-decomposed
/// [`effective_information`] must agree with this.
pub fn ei_via_repertoire(m: &SubMechanism, outcome: &[usize]) -> Result<f64> {
    let rep = actual_repertoire(m, outcome)?;
    let n = rep.probs.len() as f64;
    Ok(rep
        .probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (p * n).log2())
        .sum())
}

/// ei of one connected component of the factor/source graph.
fn component_ei(m: &SubMechanism, outcome: &[usize]) -> Result<f64> {
    let n_in = m.source_radix().size_capped(SOURCE_CAP, "source space")?;
    let mut liks = Vec::with_capacity(n_in);
    let mut total = 0.0;
    for input in 0..n_in {
        let p = m.prob(input, outcome);
        total += p;
        liks.push(p);
    }
    if total <= 0.0 {
        return Err(Error::ZeroMarginal);
    }
    let n = n_in as f64;
    Ok(liks
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| (p / total) * ((p / total) * n).log2())
        .sum())
}

/// Per-component ei terms. The actual repertoire factorizes over the
/// connected components of the factor/source bipartite graph, so ei is the
/// sum of these terms; keeping them separate lets callers cancel identical
/// terms exactly.
pub fn ei_terms(m: &SubMechanism, outcome: &[usize]) -> Result<Vec<f64>> {
    m.components()
        .into_iter()
        .map(|(factor_idxs, _)| {
            let sel = m.select_factors(&factor_idxs);
            let sub_outcome: Vec<usize> = factor_idxs.iter().map(|&f| outcome[f]).collect();
            component_ei(&sel, &sub_outcome)
        })
        .collect()
}

/// Effective information: KL of the actual repertoire from the uniform
/// intervention distribution, in bits.
pub fn effective_information(m: &SubMechanism, outcome: &[usize]) -> Result<f64> {
    Ok(ei_terms(m, outcome)?.into_iter().sum())
}

/// Remove pairs of bitwise-identical values from the two lists; identical
/// computations on both sides then cancel exactly instead of leaving float
/// residue.
pub(crate) fn cancel_pairs(plus: &mut Vec<f64>, minus: &mut Vec<f64>) {
    let mut i = 0;
    while i < plus.len() {
        if let Some(j) = minus.iter().position(|v| v.to_bits() == plus[i].to_bits()) {
            minus.swap_remove(j);
            plus.swap_remove(i);
        } else {
            i += 1;
        }
    }
}

/// Excess information over a partition: ei of the whole minus the sum of
/// ei of the parts, where part j keeps only the sources in block j (the
/// rest are uniformly marginalized out of each factor).
pub fn excess_information_over(
    m: &SubMechanism,
    partition: &Partition,
    outcome: &[usize],
) -> Result<f64> {
    partition.validate(m.sources.len())?;
    xi_over_blocks(m, &partition.blocks, outcome)
}

/// The body of `excess_information_over` without the coverage check, so
/// the MIP search can partition only the sources the mechanism reads.
fn xi_over_blocks(m: &SubMechanism, blocks: &[Vec<usize>], outcome: &[usize]) -> Result<f64> {
    let mut plus = ei_terms(m, outcome)?;
    let mut minus = Vec::new();
    for block in blocks {
        let keep: Vec<bool> = (0..m.sources.len()).map(|i| block.contains(&i)).collect();
        let part = m.restrict(&keep)?;
        minus.extend(ei_terms(&part, outcome)?);
    }
    cancel_pairs(&mut plus, &mut minus);
    Ok(plus.into_iter().sum::<f64>() - minus.into_iter().sum::<f64>())
}

#[derive(Debug, Clone)]
pub struct MipResult {
    pub partition: Partition,
    pub xi: f64,
    /// N_P = (#blocks - 1) * min over blocks of log2 |joint block alphabet|.
    pub normalizer: f64,
    pub score: f64,
}

fn normalizer(m: &SubMechanism, partition: &Partition) -> f64 {
    let min_bits = partition
        .blocks
        .iter()
        .map(|b| {
            b.iter()
                .map(|&i| (m.sources[i].1 as f64).log2())
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    (partition.blocks.len() - 1) as f64 * min_bits
}

/// Minimum-information partition: the bipartition of the sources minimizing
/// normalized excess information. Ties (within 1e-12) go to the
/// lexicographically smallest partition.
pub fn mip(m: &SubMechanism, outcome: &[usize]) -> Result<MipResult> {
    let groups: Vec<Vec<usize>> = (0..m.sources.len()).map(|i| vec![i]).collect();
    mip_grouped(m, &groups, outcome)
}

/// MIP restricted to bipartitions that respect a grouping of the sources
/// (e.g. sources grouped by coarse-graining unit): each group lands whole
/// in one side of the bipartition. Only sources the mechanism actually
/// reads are partitioned; unread input copies carry no information and
/// would otherwise admit a degenerate zero-scoring split.
pub fn mip_grouped(
    m: &SubMechanism,
    groups: &[Vec<usize>],
    outcome: &[usize],
) -> Result<MipResult> {
    let mut read = vec![false; m.sources.len()];
    for f in &m.factors {
        for &s in &f.slots {
            read[s] = true;
        }
    }
    let groups: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| g.iter().copied().filter(|&s| read[s]).collect::<Vec<_>>())
        .filter(|g| !g.is_empty())
        .collect();
    let n = groups.len();
    if n < 2 {
        return Err(Error::InvalidGraining(
            "MIP needs at least two read source groups".into(),
        ));
    }
    if n > MAX_MIP_SOURCES {
        return Err(Error::TooManySources { n });
    }
    const SCORE_TOL: f64 = 1e-12;
    let mut best: Option<MipResult> = None;
    // Every bipartition once: enumerate masks with group 0 on the inside.
    for half in 0..(1u32 << (n - 1)) {
        let mask = half << 1 | 1;
        if mask == (1u32 << n) - 1 {
            continue;
        }
        let side = |on: bool| -> Vec<usize> {
            (0..n)
                .filter(|&g| (mask >> g & 1 == 1) == on)
                .flat_map(|g| groups[g].iter().copied())
                .collect()
        };
        let partition = Partition::new(vec![side(true), side(false)]);
        let xi = xi_over_blocks(m, &partition.blocks, outcome)?;
        let norm = normalizer(m, &partition);
        let score = xi / norm;
        let better = match &best {
            None => true,
            Some(b) => {
                score < b.score - SCORE_TOL
                    || ((score - b.score).abs() <= SCORE_TOL && partition.blocks < b.partition.blocks)
            }
        };
        if better {
            best = Some(MipResult {
                partition,
                xi,
                normalizer: norm,
                score,
            });
        }
    }
    Ok(best.expect("at least one bipartition"))
}

/// Excess information: xi over the minimum-information partition.
pub fn excess_information(m: &SubMechanism, outcome: &[usize]) -> Result<f64> {
    Ok(mip(m, outcome)?.xi)
}

/// Max xi over subsets of sources of size >= `min_size`; every subset keeps
/// all factors, marginalizes the dropped sources, and is scored by its own
/// MIP. Returns (max xi, argmax source subset).
pub fn max_xi_over_source_subsets(
    m: &SubMechanism,
    outcome: &[usize],
    min_size: usize,
) -> Result<(f64, Vec<usize>)> {
    let n = m.sources.len();
    if n > 12 {
        return Err(Error::TooManySources { n });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 1u32..(1 << n) {
        if (mask.count_ones() as usize) < min_size.max(2) {
            continue;
        }
        let keep: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let sub = m.restrict(&keep)?;
        let xi = excess_information(&sub, outcome)?;
        let subset: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
        let better = match &best {
            None => true,
            Some((b, bs)) => xi > *b + 1e-12 || ((xi - b).abs() <= 1e-12 && subset < *bs),
        };
        if better {
            best = Some((xi, subset));
        }
    }
    best.ok_or_else(|| Error::InvalidGraining("no source subset of that size".into()))
}

/// log2(|X_in| / |preimage(outcome)|) for fully deterministic mechanisms;
/// the closed form the KL definition must reproduce.
pub fn ei_deterministic(m: &SubMechanism, outcome: &[usize]) -> Result<f64> {
    if !m.is_deterministic() {
        return Err(Error::InvalidGraph("mechanism is not deterministic".into()));
    }
    let n_in = m.source_radix().size_capped(SOURCE_CAP, "source space")?;
    let mut preimage = 0usize;
    for input in 0..n_in {
        if m.prob(input, outcome) == 1.0 {
            preimage += 1;
        }
    }
    if preimage == 0 {
        return Err(Error::ZeroMarginal);
    }
    Ok((n_in as f64 / preimage as f64).log2())
}

/// Convenience for callers treating unreachable outputs as "no information
/// generated" (distance-sweep heat maps).
pub fn ei_or_zero(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::ZeroMarginal) => Ok(0.0),
        other => other,
    }
}
