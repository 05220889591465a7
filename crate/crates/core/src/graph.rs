use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::compile::Compiled;
use crate::error::{Error, Result};
use crate::mechanism::{Mechanism, MechanismRepr};
use crate::occasion::OccasionId;
use crate::submech::{Factor, Repertoire, SubMechanism};

/// Bindings of occasions to output symbols; used both for interventions
/// (do-semantics) and for realized outputs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(pub BTreeMap<OccasionId, usize>);

impl Assignment {
    pub fn new() -> Self {
        Assignment(BTreeMap::new())
    }

    pub fn bind(mut self, id: OccasionId, symbol: usize) -> Self {
        self.0.insert(id, symbol);
        self
    }

    pub fn get(&self, id: &OccasionId) -> Option<usize> {
        self.0.get(id).copied()
    }

    pub fn contains(&self, id: &OccasionId) -> bool {
        self.0.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(OccasionId, usize)> for Assignment {
    fn from_iter<T: IntoIterator<Item = (OccasionId, usize)>>(iter: T) -> Self {
        Assignment(iter.into_iter().collect())
    }
}

/// One vertex: output alphabet plus the Markov mechanism over its
/// incoming-edge sources (the mechanism's input list *is* the edge list,
/// in declared order).
#[derive(Debug, Clone)]
pub struct Occasion {
    pub alphabet: usize,
    pub mechanism: Mechanism,
}

/// A finite directed graph of occasions.
#[derive(Debug, Clone, Default)]
pub struct OccasionGraph {
    pub occasions: BTreeMap<OccasionId, Occasion>,
}

impl OccasionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: OccasionId, occ: Occasion) {
        self.occasions.insert(id, occ);
    }

    pub fn ids(&self) -> impl Iterator<Item = &OccasionId> {
        self.occasions.keys()
    }

    pub fn get(&self, id: &OccasionId) -> Option<&Occasion> {
        self.occasions.get(id)
    }

    pub fn edges(&self) -> impl Iterator<Item = (OccasionId, OccasionId)> + '_ {
        self.occasions
            .iter()
            .flat_map(|(tgt, occ)| occ.mechanism.inputs.iter().map(move |src| (*src, *tgt)))
    }

    /// Report-style validation: empty iff the graph is well-formed.
    pub fn validate(&self) -> Vec<String> {
        let mut report = Vec::new();
        for (id, occ) in &self.occasions {
            if occ.alphabet < 1 {
                report.push(format!("{id}: empty alphabet"));
            }
            if occ.mechanism.output_size != occ.alphabet {
                report.push(format!(
                    "{id}: edge/mechanism mismatch: mechanism outputs {} symbols, alphabet has {}",
                    occ.mechanism.output_size, occ.alphabet
                ));
            }
            for (slot, src) in occ.mechanism.inputs.iter().enumerate() {
                match self.occasions.get(src) {
                    None => report.push(format!(
                        "{id}: edge/mechanism mismatch: input {src} is not in the graph"
                    )),
                    Some(s) => {
                        if s.alphabet != occ.mechanism.input_radix.sizes()[slot] {
                            report.push(format!(
                                "{id}: edge/mechanism mismatch: input {src} alphabet disagrees"
                            ));
                        }
                    }
                }
            }
            for issue in occ.mechanism.validate() {
                report.push(format!("{id}: {issue}"));
            }
        }
        report
    }

    /// JSON document per the external interface.
    pub fn to_json(&self) -> serde_json::Value {
        let occasions: Vec<serde_json::Value> = self
            .occasions
            .iter()
            .map(|(id, occ)| {
                serde_json::json!({
                    "id": id.to_string(),
                    "alphabet": occ.alphabet,
                    "inputs": occ.mechanism.inputs.iter().map(|i| i.to_string()).collect::<Vec<_>>(),
                    "mechanism": serde_json::to_value(occ.mechanism.to_repr()).unwrap(),
                })
            })
            .collect();
        serde_json::json!({ "occasions": occasions })
    }

    pub fn from_json(doc: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct OccRepr {
            id: String,
            alphabet: usize,
            inputs: Vec<String>,
            mechanism: MechanismRepr,
        }
        #[derive(Deserialize)]
        struct GraphRepr {
            occasions: Vec<OccRepr>,
        }
        let repr: GraphRepr = serde_json::from_value(doc.clone())
            .map_err(|e| Error::Parse(format!("occasion graph: {e}")))?;
        // Two passes: alphabets first, so input radices can be resolved.
        let mut alphabets: BTreeMap<OccasionId, usize> = BTreeMap::new();
        for occ in &repr.occasions {
            let id: OccasionId = occ.id.parse()?;
            if alphabets.insert(id, occ.alphabet).is_some() {
                return Err(Error::Parse(format!("duplicate occasion id `{id}`")));
            }
        }
        let mut graph = OccasionGraph::new();
        for occ in repr.occasions {
            let id: OccasionId = occ.id.parse()?;
            let inputs: Vec<OccasionId> = occ
                .inputs
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_>>()?;
            let sizes: Vec<usize> = inputs
                .iter()
                .map(|i| {
                    alphabets
                        .get(i)
                        .copied()
                        .ok_or_else(|| Error::Parse(format!("{id}: unknown input `{i}`")))
                })
                .collect::<Result<_>>()?;
            let mechanism = Mechanism::from_repr(occ.mechanism, inputs, sizes, occ.alphabet)?;
            graph.insert(
                id,
                Occasion {
                    alphabet: occ.alphabet,
                    mechanism,
                },
            );
        }
        Ok(graph)
    }
}

/// One occasion inside a subsystem: its mechanism restricted to kept edges
/// once extrinsic inputs are marginalized, plus the record of dropped-edge
/// sources.
#[derive(Debug, Clone)]
pub struct SubOccasion {
    pub alphabet: usize,
    pub mechanism: Mechanism,
    /// Dropped-edge sources (extrinsic inputs).
    pub extrinsic: Vec<OccasionId>,
}

/// A subgraph: a vertex subset plus a subset of the edges targeting those
/// vertices. Dropped-edge sources become extrinsic noise.
#[derive(Debug, Clone)]
pub struct Subsystem {
    pub occasions: BTreeMap<OccasionId, SubOccasion>,
}

impl Subsystem {
    /// Whole graph as a subsystem (no dropped edges).
    pub fn full(graph: &OccasionGraph) -> Self {
        let vertices: BTreeSet<OccasionId> = graph.occasions.keys().copied().collect();
        Self::with_kept_edges(graph, &vertices, |_, _| true)
    }

    /// Induced subsystem: keeps every edge whose source and target are both
    /// in `vertices`.
    pub fn induced(graph: &OccasionGraph, vertices: &BTreeSet<OccasionId>) -> Self {
        Self::with_kept_edges(graph, vertices, |src, _| vertices.contains(src))
    }

    /// Subsystem keeping only edges accepted by `keep(src, tgt)` (edges from
    /// outside `vertices` may be kept; they stay as not-yet-marginalized
    /// inputs).
    pub fn with_kept_edges(
        graph: &OccasionGraph,
        vertices: &BTreeSet<OccasionId>,
        keep: impl Fn(&OccasionId, &OccasionId) -> bool,
    ) -> Self {
        let mut occasions = BTreeMap::new();
        for id in vertices {
            let occ = graph
                .occasions
                .get(id)
                .unwrap_or_else(|| panic!("subsystem vertex {id} not in graph"));
            let extrinsic: Vec<OccasionId> = occ
                .mechanism
                .inputs
                .iter()
                .filter(|src| !keep(src, id))
                .copied()
                .collect();
            occasions.insert(
                *id,
                SubOccasion {
                    alphabet: occ.alphabet,
                    mechanism: occ.mechanism.clone(),
                    extrinsic,
                },
            );
        }
        Subsystem { occasions }
    }

    pub fn vertices(&self) -> BTreeSet<OccasionId> {
        self.occasions.keys().copied().collect()
    }

    pub fn contains(&self, id: &OccasionId) -> bool {
        self.occasions.contains_key(id)
    }

    /// Average every dropped-edge source out of every mechanism under the
    /// uniform distribution, making all mechanisms self-contained.
    pub fn marginalize_extrinsic(&self) -> Result<Subsystem> {
        let mut occasions = BTreeMap::new();
        for (id, occ) in &self.occasions {
            let drop: Vec<usize> = occ
                .mechanism
                .inputs
                .iter()
                .enumerate()
                .filter(|(_, src)| occ.extrinsic.contains(src))
                .map(|(slot, _)| slot)
                .collect();
            let mechanism = occ.mechanism.marginalize_uniform(&drop)?;
            occasions.insert(
                *id,
                SubOccasion {
                    alphabet: occ.alphabet,
                    mechanism,
                    extrinsic: occ.extrinsic.clone(),
                },
            );
        }
        Ok(Subsystem { occasions })
    }

    /// True once every mechanism only references subsystem vertices.
    pub fn is_self_contained(&self) -> bool {
        self.occasions.values().all(|occ| {
            occ.mechanism
                .inputs
                .iter()
                .all(|src| self.occasions.contains_key(src))
        })
    }

    /// Topological order of the given occasions (edges within the set);
    /// errors on a cycle.
    pub fn topo_order(&self, among: &BTreeSet<OccasionId>) -> Result<Vec<OccasionId>> {
        let mut indeg: BTreeMap<OccasionId, usize> = BTreeMap::new();
        let mut out_edges: BTreeMap<OccasionId, Vec<OccasionId>> = BTreeMap::new();
        for id in among {
            let occ = &self.occasions[id];
            let mut d = 0;
            for src in &occ.mechanism.inputs {
                if among.contains(src) {
                    d += 1;
                    out_edges.entry(*src).or_default().push(*id);
                }
            }
            indeg.insert(*id, d);
        }
        // Kahn's algorithm with a BTreeSet queue for a deterministic order.
        let mut ready: BTreeSet<OccasionId> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut order = Vec::with_capacity(among.len());
        while let Some(id) = ready.pop_first() {
            order.push(id);
            if let Some(outs) = out_edges.get(&id) {
                for tgt in outs.clone() {
                    let d = indeg.get_mut(&tgt).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(tgt);
                    }
                }
            }
        }
        if order.len() != among.len() {
            return Err(Error::CyclicMicroGraph);
        }
        Ok(order)
    }

    /// Occasions upstream of `query`, stopping at intervened occasions.
    fn relevant_ancestors(
        &self,
        intervention: &Assignment,
        query: &[OccasionId],
    ) -> Result<BTreeSet<OccasionId>> {
        let mut seen: BTreeSet<OccasionId> = BTreeSet::new();
        let mut stack: Vec<OccasionId> = query.to_vec();
        while let Some(id) = stack.pop() {
            if intervention.contains(&id) || !seen.insert(id) {
                continue;
            }
            let occ = self
                .occasions
                .get(&id)
                .ok_or_else(|| Error::InvalidGraph(format!("occasion {id} not in subsystem")))?;
            for src in &occ.mechanism.inputs {
                if !intervention.contains(src) && !self.occasions.contains_key(src) {
                    return Err(Error::InvalidGraph(format!(
                        "{id} references {src} outside the subsystem; marginalize extrinsic inputs first"
                    )));
                }
                stack.push(*src);
            }
        }
        Ok(seen)
    }

    /// Exact distribution over the joint outputs of `query` under the given
    /// intervention, summing intermediate occasions in topological order.
    /// Fully deterministic subsystems skip summation and simulate.
    pub fn forward_distribution(
        &self,
        intervention: &Assignment,
        query: &[OccasionId],
    ) -> Result<Repertoire> {
        let relevant = self.relevant_ancestors(intervention, query)?;
        let order = self.topo_order(&relevant)?;

        let query_sizes: Vec<usize> = query
            .iter()
            .map(|id| {
                self.occasions
                    .get(id)
                    .map(|o| o.alphabet)
                    .ok_or_else(|| Error::InvalidGraph(format!("query occasion {id} unknown")))
            })
            .collect::<Result<_>>()?;

        let all_det = order
            .iter()
            .all(|id| self.occasions[id].mechanism.is_deterministic());

        if all_det {
            // Simulation fast path.
            let compiled = Compiled::build(self, intervention, query)?;
            let values = compiled.eval_fixed()?;
            let radix = crate::alphabet::Radix::new(query_sizes.clone());
            radix.size_capped(crate::alphabet::MATERIALIZE_CAP, "query repertoire")?;
            let mut probs = vec![0.0; radix.size()];
            probs[radix.encode(&values)] = 1.0;
            return Ok(Repertoire::new(
                query.iter().copied().zip(query_sizes).collect(),
                probs,
            ));
        }

        self.eliminate(intervention, query, &order, &query_sizes)
    }

    /// Point evaluation of a fully deterministic subsystem: the unique
    /// query outputs under the intervention. Works for arbitrarily many
    /// query occasions (no joint repertoire is materialized).
    pub fn simulate(&self, intervention: &Assignment, query: &[OccasionId]) -> Result<Vec<usize>> {
        Compiled::build(self, intervention, query)?.eval_fixed()
    }

    /// Exact variable elimination over the topological order.
    fn eliminate(
        &self,
        intervention: &Assignment,
        query: &[OccasionId],
        order: &[OccasionId],
        query_sizes: &[usize],
    ) -> Result<Repertoire> {
        const STATE_CAP: usize = 1 << 22;

        // After which step is each computed occasion last needed?
        let mut last_use: HashMap<OccasionId, usize> = HashMap::new();
        for (step, id) in order.iter().enumerate() {
            for src in &self.occasions[id].mechanism.inputs {
                last_use.insert(*src, step);
            }
        }
        for id in query {
            last_use.insert(*id, usize::MAX);
        }

        // Frontier: map from (live occasion -> value) to probability.
        let mut frontier: HashMap<Vec<(OccasionId, usize)>, f64> = HashMap::new();
        frontier.insert(Vec::new(), 1.0);

        for (step, id) in order.iter().enumerate() {
            let occ = &self.occasions[id];
            let mech = &occ.mechanism;
            let mut next: HashMap<Vec<(OccasionId, usize)>, f64> = HashMap::new();
            for (state, w) in &frontier {
                let lookup = |src: &OccasionId| -> usize {
                    intervention.get(src).unwrap_or_else(|| {
                        state
                            .iter()
                            .find(|(s, _)| s == src)
                            .map(|(_, v)| *v)
                            .expect("input value available")
                    })
                };
                let digits: Vec<usize> = mech.inputs.iter().map(lookup).collect();
                let input = mech.input_radix.encode(&digits);
                for out in 0..mech.output_size {
                    let p = mech.prob(input, out);
                    if p == 0.0 {
                        continue;
                    }
                    let mut new_state: Vec<(OccasionId, usize)> = state
                        .iter()
                        .filter(|(s, _)| last_use.get(s).map(|&l| l > step).unwrap_or(false))
                        .copied()
                        .collect();
                    if last_use.get(id).map(|&l| l > step).unwrap_or(false) {
                        new_state.push((*id, out));
                        new_state.sort_by_key(|(s, _)| *s);
                    }
                    *next.entry(new_state).or_insert(0.0) += w * p;
                }
                if next.len() > STATE_CAP {
                    return Err(Error::Tractability {
                        what: "forward-distribution frontier states",
                        needed: next.len() as u128,
                        cap: STATE_CAP as u128,
                    });
                }
            }
            frontier = next;
        }

        let radix = crate::alphabet::Radix::new(query_sizes.to_vec());
        let n = radix.size_capped(crate::alphabet::MATERIALIZE_CAP, "query repertoire")?;
        let mut probs = vec![0.0; n];
        for (state, w) in &frontier {
            let digits: Vec<usize> = query
                .iter()
                .map(|q| {
                    intervention.get(q).unwrap_or_else(|| {
                        state
                            .iter()
                            .find(|(s, _)| s == q)
                            .map(|(_, v)| *v)
                            .expect("query value available")
                    })
                })
                .collect();
            probs[radix.encode(&digits)] += w;
        }
        Ok(Repertoire::new(
            query.iter().copied().zip(query_sizes.iter().copied()).collect(),
            probs,
        ))
    }

    /// Joint mechanism of `targets`: the product of their per-occasion
    /// mechanisms, conditioned on interventions on every source occasion
    /// feeding them.
    pub fn product_mechanism(&self, targets: &[OccasionId]) -> Result<SubMechanism> {
        let mut sources: Vec<OccasionId> = Vec::new();
        for tgt in targets {
            let occ = self
                .occasions
                .get(tgt)
                .ok_or_else(|| Error::InvalidGraph(format!("target {tgt} not in subsystem")))?;
            for src in &occ.mechanism.inputs {
                if !self.occasions.contains_key(src) {
                    return Err(Error::InvalidGraph(format!(
                        "{tgt} references {src} outside the subsystem; marginalize extrinsic inputs first"
                    )));
                }
                if !sources.contains(src) {
                    sources.push(*src);
                }
            }
        }
        sources.sort();
        let source_pairs: Vec<(OccasionId, usize)> = sources
            .iter()
            .map(|s| (*s, self.occasions[s].alphabet))
            .collect();

        let mut factors = Vec::new();
        for tgt in targets {
            let occ = &self.occasions[tgt];
            let slots: Vec<usize> = occ
                .mechanism
                .inputs
                .iter()
                .map(|src| sources.iter().position(|s| s == src).unwrap())
                .collect();
            factors.push(Factor {
                target: (*tgt, occ.alphabet),
                slots,
                mech: occ.mechanism.clone(),
            });
        }
        Ok(SubMechanism::new(source_pairs, factors))
    }
}
