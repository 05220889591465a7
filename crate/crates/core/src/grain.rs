//! Coarse-graining: transform a subsystem plus graining data (ground,
//! channel, units, ground output) into a coarse automaton whose occasions
//! are units.
//!
//! The pipeline has five steps: (1) marginalize extrinsic inputs, (2) fix
//! the ground outputs and drop the ground, (3) marginalize the channel to
//! get the joint unit mechanism, (4) prune to effective edges, (5) quotient
//! each unit's joint alphabet into a macro-alphabet.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use crate::alphabet::Radix;
use crate::compile::Compiled;
use crate::error::{Error, Result};
use crate::graph::{Assignment, Occasion, OccasionGraph, Subsystem};
use crate::mechanism::{DetFn, Mechanism};
use crate::occasion::{OccasionId, Site};
use crate::submech::{Factor, SubMechanism};

/// Probability tolerance below which two conditional distributions count as
/// equal (class formation and effective-edge detection).
pub const EQUIV_TOL: f64 = 1e-9;

/// Cap on context evaluations in channel sweeps, equivalence fingerprints
/// and effective-edge checks.
pub const CONTEXT_CAP: usize = 1 << 22;

/// Ground/channel/units partition of a subsystem, with the fixed ground
/// outputs.
#[derive(Debug, Clone, Default)]
pub struct GrainingSpec {
    pub ground: BTreeSet<OccasionId>,
    pub channel: BTreeSet<OccasionId>,
    pub units: Vec<BTreeSet<OccasionId>>,
    pub ground_output: Assignment,
}

impl GrainingSpec {
    /// The identity graining: every occasion its own unit, nothing else.
    pub fn trivial(sub: &Subsystem) -> Self {
        GrainingSpec {
            ground: BTreeSet::new(),
            channel: BTreeSet::new(),
            units: sub
                .occasions
                .keys()
                .map(|id| std::iter::once(*id).collect())
                .collect(),
            ground_output: Assignment::new(),
        }
    }

    /// Check the partition against the subsystem's vertex set.
    pub fn validate(&self, sub: &Subsystem) -> Result<()> {
        let mut seen: BTreeSet<OccasionId> = BTreeSet::new();
        let mut claim = |id: &OccasionId| -> Result<()> {
            if !sub.contains(id) {
                return Err(Error::InvalidGraining(format!(
                    "{id} is not in the subsystem"
                )));
            }
            if !seen.insert(*id) {
                return Err(Error::InvalidGraining(format!(
                    "{id} appears in more than one part"
                )));
            }
            Ok(())
        };
        for id in self.ground.iter().chain(&self.channel) {
            claim(id)?;
        }
        for (i, unit) in self.units.iter().enumerate() {
            if unit.is_empty() {
                return Err(Error::InvalidGraining(format!("unit {i} is empty")));
            }
            for id in unit {
                claim(id)?;
            }
        }
        if seen.len() != sub.occasions.len() {
            let missing = sub
                .occasions
                .keys()
                .find(|id| !seen.contains(id))
                .expect("some vertex uncovered");
            return Err(Error::InvalidGraining(format!(
                "{missing} is in no part of the graining"
            )));
        }
        for id in &self.ground {
            if !self.ground_output.contains(id) {
                return Err(Error::MissingGroundOutput(id.to_string()));
            }
        }
        for id in self.ground_output.0.keys() {
            if !self.ground.contains(id) {
                return Err(Error::InvalidGraining(format!(
                    "ground output binds {id}, which is not ground"
                )));
            }
        }
        Ok(())
    }

    /// Unit index owning `id`, if any.
    pub fn unit_of(&self, id: &OccasionId) -> Option<usize> {
        self.units.iter().position(|u| u.contains(id))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "ground": self.ground.iter().map(|i| i.to_string()).collect::<Vec<_>>(),
            "channel": self.channel.iter().map(|i| i.to_string()).collect::<Vec<_>>(),
            "units": self.units.iter()
                .map(|u| u.iter().map(|i| i.to_string()).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "ground_output": self.ground_output.0.iter()
                .map(|(i, v)| (i.to_string(), *v))
                .collect::<BTreeMap<String, usize>>(),
        })
    }

    pub fn from_json(doc: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Repr {
            #[serde(default)]
            ground: Vec<String>,
            #[serde(default)]
            channel: Vec<String>,
            units: Vec<Vec<String>>,
            #[serde(default)]
            ground_output: BTreeMap<String, usize>,
        }
        let repr: Repr = serde_json::from_value(doc.clone())
            .map_err(|e| Error::Parse(format!("graining spec: {e}")))?;
        let parse_set = |v: &[String]| -> Result<BTreeSet<OccasionId>> {
            v.iter().map(|s| s.parse()).collect()
        };
        Ok(GrainingSpec {
            ground: parse_set(&repr.ground)?,
            channel: parse_set(&repr.channel)?,
            units: repr
                .units
                .iter()
                .map(|u| parse_set(u))
                .collect::<Result<_>>()?,
            ground_output: repr
                .ground_output
                .iter()
                .map(|(k, &v)| k.parse().map(|id| (id, v)))
                .collect::<Result<_>>()?,
        })
    }
}

/// Step 2: bind every mechanism's ground-input slots to the fixed ground
/// outputs and remove the ground occasions from the vertex set.
pub fn fix_ground(sub: &Subsystem, spec: &GrainingSpec) -> Result<Subsystem> {
    let mut occasions = BTreeMap::new();
    for (id, occ) in &sub.occasions {
        if spec.ground.contains(id) {
            continue;
        }
        let binds: Vec<(usize, usize)> = occ
            .mechanism
            .inputs
            .iter()
            .enumerate()
            .filter(|(_, src)| spec.ground.contains(src))
            .map(|(slot, src)| {
                spec.ground_output
                    .get(src)
                    .map(|v| (slot, v))
                    .ok_or_else(|| Error::MissingGroundOutput(src.to_string()))
            })
            .collect::<Result<_>>()?;
        let mut new_occ = occ.clone();
        if !binds.is_empty() {
            new_occ.mechanism = occ.mechanism.bind(&binds);
        }
        for src in &new_occ.mechanism.inputs {
            if !sub.contains(src) {
                return Err(Error::InvalidGraph(format!(
                    "{id} references {src} outside the subsystem; marginalize extrinsic inputs first"
                )));
            }
        }
        occasions.insert(*id, new_occ);
    }
    Ok(Subsystem { occasions })
}

/// Step 3: the joint mechanism over unit occasions, with the channel summed
/// (or, when everything relevant is deterministic, simulated) away. Sources
/// are all unit occasions in unit order; one factor per unit occasion.
///
/// Expects the ground already fixed (the subsystem holds channel and unit
/// occasions only).
pub fn marginalize_channel(sub: &Subsystem, spec: &GrainingSpec) -> Result<SubMechanism> {
    let unit_occs: Vec<OccasionId> = spec
        .units
        .iter()
        .flat_map(|u| u.iter().copied())
        .collect();
    let unit_set: BTreeSet<OccasionId> = unit_occs.iter().copied().collect();
    let slot_of: BTreeMap<OccasionId, usize> = unit_occs
        .iter()
        .enumerate()
        .map(|(i, id)| (*id, i))
        .collect();
    let sources: Vec<(OccasionId, usize)> = unit_occs
        .iter()
        .map(|id| (*id, sub.occasions[id].alphabet))
        .collect();

    let mut factors = Vec::with_capacity(unit_occs.len());
    for &x in &unit_occs {
        let occ = &sub.occasions[&x];
        // Fast path: no channel between this occasion and the unit sources.
        if occ.mechanism.inputs.iter().all(|s| unit_set.contains(s)) {
            factors.push(Factor {
                target: (x, occ.alphabet),
                slots: occ
                    .mechanism
                    .inputs
                    .iter()
                    .map(|s| slot_of[s])
                    .collect(),
                mech: occ.mechanism.clone(),
            });
            continue;
        }
        factors.push(channel_factor(sub, spec, &slot_of, x)?);
    }
    Ok(SubMechanism::new(sources, factors))
}

/// Channel-marginalized factor for one unit occasion: p(x | do(unit
/// sources)), everything in between summed or simulated.
fn channel_factor(
    sub: &Subsystem,
    spec: &GrainingSpec,
    slot_of: &BTreeMap<OccasionId, usize>,
    x: OccasionId,
) -> Result<Factor> {
    // Ancestors of x through the channel; unit occasions are cut points
    // (they enter as intervened sources, never expanded).
    let mut channel: BTreeSet<OccasionId> = BTreeSet::new();
    let mut srcs: BTreeSet<OccasionId> = BTreeSet::new();
    let mut stack: Vec<OccasionId> = sub.occasions[&x].mechanism.inputs.clone();
    while let Some(id) = stack.pop() {
        if slot_of.contains_key(&id) {
            srcs.insert(id);
            continue;
        }
        if !spec.channel.contains(&id) {
            return Err(Error::InvalidGraph(format!(
                "{x} depends on {id}, which is neither channel nor unit"
            )));
        }
        if channel.insert(id) {
            stack.extend(sub.occasions[&id].mechanism.inputs.iter().copied());
        }
    }
    // Cycle check on the channel part.
    sub.topo_order(&channel).map_err(|e| match e {
        Error::CyclicMicroGraph => Error::CyclicChannel,
        other => other,
    })?;

    let slot_ids: Vec<OccasionId> = srcs.into_iter().collect();
    let sizes: Vec<usize> = slot_ids.iter().map(|s| sub.occasions[s].alphabet).collect();
    let in_radix = Radix::new(sizes.clone());
    let out_size = sub.occasions[&x].alphabet;

    let all_det = channel
        .iter()
        .chain(std::iter::once(&x))
        .all(|id| sub.occasions[id].mechanism.is_deterministic());

    let mech = if all_det {
        let compiled = Compiled::build_fn(sub, &Assignment::new(), &slot_ids, &[x])?;
        let radix = in_radix.clone();
        let f = DetFn::new("channel", move |input| {
            compiled.eval(&radix.decode(input))[0]
        });
        Mechanism::det(slot_ids.clone(), sizes, out_size, f)
    } else {
        let n = in_radix.size_capped(CONTEXT_CAP, "channel input contexts")?;
        let mut probs = Vec::with_capacity(n * out_size);
        for input in 0..n {
            let digits = in_radix.decode(input);
            let intervention: Assignment = slot_ids
                .iter()
                .copied()
                .zip(digits.iter().copied())
                .collect();
            let rep = sub
                .forward_distribution(&intervention, &[x])
                .map_err(|e| match e {
                    Error::CyclicMicroGraph => Error::CyclicChannel,
                    other => other,
                })?;
            probs.extend(rep.probs);
        }
        Mechanism::table(slot_ids.clone(), sizes, out_size, probs)
    };
    Ok(Factor {
        target: (x, out_size),
        slots: slot_ids.iter().map(|s| slot_of[s]).collect(),
        mech,
    })
}

/// Which of a factor's input slots it actually depends on (behavioral, not
/// structural): slot s matters iff two inputs differing only at s give
/// conditional distributions differing beyond tolerance.
pub fn dependent_slots(mech: &Mechanism) -> Result<Vec<bool>> {
    let n_slots = mech.inputs.len();
    let in_size = mech
        .input_radix
        .size_capped(CONTEXT_CAP, "effective-edge contexts")?;
    let mut depends = vec![false; n_slots];
    let mut digits = vec![0usize; n_slots];
    for input in 0..in_size {
        mech.input_radix.decode_into(input, &mut digits);
        for slot in 0..n_slots {
            if depends[slot] || digits[slot] != 0 {
                continue;
            }
            // Compare against the same context with slot raised.
            let base: Vec<f64> = mech.row(input);
            let mut other = digits.clone();
            for v in 1..mech.input_radix.sizes()[slot] {
                other[slot] = v;
                let alt = mech.row(mech.input_radix.encode(&other));
                if base
                    .iter()
                    .zip(&alt)
                    .any(|(a, b)| (a - b).abs() > EQUIV_TOL)
                {
                    depends[slot] = true;
                    break;
                }
            }
        }
    }
    Ok(depends)
}

/// Step 4: directed unit pairs (k, l) where some output of unit k makes a
/// difference to the behavior of unit l.
pub fn effective_graph(pk: &SubMechanism, spec: &GrainingSpec) -> Result<Vec<(usize, usize)>> {
    let unit_of_source: Vec<usize> = pk
        .sources
        .iter()
        .map(|(id, _)| spec.unit_of(id).expect("source is a unit occasion"))
        .collect();
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for f in &pk.factors {
        let l = spec.unit_of(&f.target.0).expect("target is a unit occasion");
        let depends = dependent_slots(&f.mech)?;
        for (local, &slot) in f.slots.iter().enumerate() {
            if depends[local] {
                edges.insert((unit_of_source[slot], l));
            }
        }
    }
    Ok(edges.into_iter().collect())
}

/// Macro-alphabet of one unit: equivalence classes over its joint
/// micro-outputs, in class-representative order.
#[derive(Debug, Clone)]
pub struct MacroAlphabet {
    /// class index -> sorted micro symbols.
    pub classes: Vec<Vec<usize>>,
    /// micro symbol -> class index.
    pub class_of: Vec<usize>,
    /// class index -> lowest micro symbol.
    pub representatives: Vec<usize>,
}

/// Sort keys by fingerprint and split where adjacent fingerprints differ
/// beyond tolerance; returns class index per key.
fn group_by_fingerprint(fps: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fps.len()).collect();
    order.sort_by(|&a, &b| {
        fps[a]
            .iter()
            .zip(&fps[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut class_of = vec![0usize; fps.len()];
    let mut next = 0usize;
    for (i, &u) in order.iter().enumerate() {
        if i > 0 {
            let prev = order[i - 1];
            let differs = fps[u]
                .iter()
                .zip(&fps[prev])
                .any(|(a, b)| (a - b).abs() > EQUIV_TOL);
            if differs {
                next += 1;
            }
        }
        class_of[u] = next;
    }
    class_of
}

struct UnitLayout {
    /// Per unit: sorted occasion list, its joint radix, and for each source
    /// slot of pk, the owning unit and position within it.
    occs: Vec<Vec<OccasionId>>,
    radix: Vec<Radix>,
    unit_of_slot: Vec<usize>,
    pos_in_unit: Vec<usize>,
}

fn unit_layout(pk: &SubMechanism, spec: &GrainingSpec) -> UnitLayout {
    let occs: Vec<Vec<OccasionId>> = spec
        .units
        .iter()
        .map(|u| u.iter().copied().collect())
        .collect();
    let radix: Vec<Radix> = occs
        .iter()
        .map(|ids| {
            Radix::new(
                ids.iter()
                    .map(|id| {
                        pk.sources
                            .iter()
                            .find(|(s, _)| s == id)
                            .map(|(_, n)| *n)
                            .expect("unit occasion among sources")
                    })
                    .collect(),
            )
        })
        .collect();
    let mut unit_of_slot = Vec::with_capacity(pk.sources.len());
    let mut pos_in_unit = Vec::with_capacity(pk.sources.len());
    for (id, _) in &pk.sources {
        let k = spec.unit_of(id).expect("source is a unit occasion");
        unit_of_slot.push(k);
        pos_in_unit.push(occs[k].iter().position(|o| o == id).unwrap());
    }
    UnitLayout {
        occs,
        radix,
        unit_of_slot,
        pos_in_unit,
    }
}

/// Step 5: quotient unit `l`'s joint micro-alphabet by the conjunction of
/// effect-equivalence (same influence on every downstream factor in every
/// context) and reaction-equivalence (same probability of being produced
/// under every input).
///
/// Micro-outputs that can never occur (reaction identically zero) carry no
/// behavioral distinction of their own; within each effect class they are
/// absorbed into the reachable reaction class when that class is unique,
/// instead of forming a phantom macro-symbol.
pub fn macro_alphabet(pk: &SubMechanism, spec: &GrainingSpec, l: usize) -> Result<MacroAlphabet> {
    let layout = unit_layout(pk, spec);
    let n_micro = layout.radix[l].size_capped(CONTEXT_CAP, "unit micro-alphabet")?;

    // --- effect fingerprints ---------------------------------------------
    // One entry per downstream factor context; the fingerprint of output u
    // is the factor's conditional distribution with unit l's slots set from
    // u and the other slots swept over all contexts.
    let mut effect_fps: Vec<Vec<f64>> = vec![Vec::new(); n_micro];
    let mut budget = CONTEXT_CAP;
    for f in &pk.factors {
        let own: Vec<usize> = (0..f.slots.len())
            .filter(|&i| layout.unit_of_slot[f.slots[i]] == l)
            .collect();
        if own.is_empty() {
            continue;
        }
        let other: Vec<usize> = (0..f.slots.len()).filter(|i| !own.contains(i)).collect();
        let other_radix = Radix::new(
            other
                .iter()
                .map(|&i| f.mech.input_radix.sizes()[i])
                .collect(),
        );
        let n_ctx = other_radix.size_capped(CONTEXT_CAP, "effect contexts")?;
        let cost = n_ctx
            .checked_mul(n_micro)
            .filter(|&c| c <= budget)
            .ok_or(Error::Tractability {
                what: "effect-equivalence contexts",
                needed: n_ctx as u128 * n_micro as u128,
                cap: CONTEXT_CAP as u128,
            })?;
        budget -= cost;

        let mut digits = vec![0usize; f.slots.len()];
        let mut unit_digits = vec![0usize; layout.occs[l].len()];
        for u in 0..n_micro {
            layout.radix[l].decode_into(u, &mut unit_digits);
            for ctx in 0..n_ctx {
                for (j, &i) in other.iter().enumerate() {
                    digits[i] = other_radix.digit(ctx, j);
                }
                for &i in &own {
                    digits[i] = unit_digits[layout.pos_in_unit[f.slots[i]]];
                }
                let input = f.mech.input_radix.encode(&digits);
                if let Some(v) = f.mech.det_eval(input) {
                    effect_fps[u].push(v as f64);
                } else {
                    effect_fps[u].extend(f.mech.row(input));
                }
            }
        }
    }
    let effect_class = group_by_fingerprint(&effect_fps);

    // --- reaction fingerprints -------------------------------------------
    // p_{U_l}(u | x_in) over the joint inputs of unit l's own factors.
    let own_factors: Vec<&Factor> = pk
        .factors
        .iter()
        .filter(|f| spec.unit_of(&f.target.0) == Some(l))
        .collect();
    debug_assert_eq!(own_factors.len(), layout.occs[l].len());
    // factor order must match the unit's occasion order for joint decoding
    let own_factors: Vec<&Factor> = layout.occs[l]
        .iter()
        .map(|id| {
            *own_factors
                .iter()
                .find(|f| f.target.0 == *id)
                .expect("factor per unit occasion")
        })
        .collect();

    let all_det = own_factors.iter().all(|f| f.mech.is_deterministic());
    let mut in_slots: Vec<usize> = own_factors
        .iter()
        .flat_map(|f| f.slots.iter().copied())
        .collect();
    in_slots.sort_unstable();
    in_slots.dedup();
    let in_radix = Radix::new(in_slots.iter().map(|&s| pk.sources[s].1).collect());

    // reaction class per micro output, and whether any input produces it
    let (reaction_class, reachable) = if all_det {
        // Deterministic: outputs are produced by disjoint input sets, so two
        // distinct reachable outputs never share a reaction profile, and all
        // unreachable outputs share the all-zero profile.
        let n_in = in_radix.size_capped(CONTEXT_CAP, "reaction contexts")?;
        let mut reach = vec![false; n_micro];
        let mut in_digits = vec![0usize; in_slots.len()];
        for input in 0..n_in {
            in_radix.decode_into(input, &mut in_digits);
            let mut out_digits = Vec::with_capacity(own_factors.len());
            for f in &own_factors {
                let local: Vec<usize> = f
                    .slots
                    .iter()
                    .map(|s| in_digits[in_slots.binary_search(s).unwrap()])
                    .collect();
                out_digits.push(
                    f.mech
                        .det_eval(f.mech.input_radix.encode(&local))
                        .expect("deterministic factor"),
                );
            }
            reach[layout.radix[l].encode(&out_digits)] = true;
        }
        let mut class = vec![0usize; n_micro];
        let mut next = 1usize; // class 0 = unreachable
        for u in 0..n_micro {
            if reach[u] {
                class[u] = next;
                next += 1;
            }
        }
        (class, reach)
    } else {
        let n_in = in_radix.size_capped(CONTEXT_CAP, "reaction contexts")?;
        if n_in.saturating_mul(n_micro) > CONTEXT_CAP {
            return Err(Error::Tractability {
                what: "reaction-equivalence contexts",
                needed: n_in as u128 * n_micro as u128,
                cap: CONTEXT_CAP as u128,
            });
        }
        let mut fps: Vec<Vec<f64>> = vec![Vec::with_capacity(n_in); n_micro];
        let mut in_digits = vec![0usize; in_slots.len()];
        let mut unit_digits = vec![0usize; layout.occs[l].len()];
        for input in 0..n_in {
            in_radix.decode_into(input, &mut in_digits);
            for u in 0..n_micro {
                layout.radix[l].decode_into(u, &mut unit_digits);
                let mut p = 1.0;
                for (j, f) in own_factors.iter().enumerate() {
                    let local: Vec<usize> = f
                        .slots
                        .iter()
                        .map(|s| in_digits[in_slots.binary_search(s).unwrap()])
                        .collect();
                    p *= f
                        .mech
                        .prob(f.mech.input_radix.encode(&local), unit_digits[j]);
                }
                fps[u].push(p);
            }
        }
        let reachable: Vec<bool> = fps
            .iter()
            .map(|fp| fp.iter().any(|&p| p > EQUIV_TOL))
            .collect();
        (group_by_fingerprint(&fps), reachable)
    };

    // --- conjunction and unreachable absorption ---------------------------
    // key: (effect class, reaction class)
    let mut class_map: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut class_of = vec![usize::MAX; n_micro];
    // First pass: reachable outputs get their conjunction classes.
    for u in 0..n_micro {
        if reachable[u] {
            let next = class_map.len();
            let c = *class_map
                .entry((effect_class[u], reaction_class[u]))
                .or_insert(next);
            class_of[u] = c;
        }
    }
    // Unreachable outputs: absorb into the effect class's unique reachable
    // class when there is exactly one; otherwise they form their own class.
    let mut reachable_by_effect: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for u in 0..n_micro {
        if reachable[u] {
            reachable_by_effect
                .entry(effect_class[u])
                .or_default()
                .insert(class_of[u]);
        }
    }
    for u in 0..n_micro {
        if reachable[u] {
            continue;
        }
        let reachable_classes = reachable_by_effect
            .get(&effect_class[u])
            .cloned()
            .unwrap_or_default();
        class_of[u] = if reachable_classes.len() == 1 {
            *reachable_classes.iter().next().unwrap()
        } else {
            let next = class_map.len();
            *class_map
                .entry((effect_class[u], reaction_class[u]))
                .or_insert(next)
        };
    }

    // Renumber classes by lowest member so representatives are ordered.
    let n_classes = class_of.iter().copied().max().unwrap_or(0) + 1;
    let mut first_member = vec![usize::MAX; n_classes];
    for u in 0..n_micro {
        let c = class_of[u];
        if first_member[c] == usize::MAX {
            first_member[c] = u;
        }
    }
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by_key(|&c| first_member[c]);
    let renumber: BTreeMap<usize, usize> =
        order.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let class_of: Vec<usize> = class_of.into_iter().map(|c| renumber[&c]).collect();
    let mut classes = vec![Vec::new(); n_classes];
    for (u, &c) in class_of.iter().enumerate() {
        classes[c].push(u);
    }
    let representatives: Vec<usize> = classes.iter().map(|members| members[0]).collect();
    Ok(MacroAlphabet {
        classes,
        class_of,
        representatives,
    })
}

/// The result of the full pipeline: a new occasion graph whose occasions
/// are units over their macro-alphabets, plus the sidecar data mapping
/// units back to their constituents.
#[derive(Debug, Clone)]
pub struct CoarseAutomaton {
    /// A valid occasion graph; occasion `k` is unit `k` of the graining.
    pub graph: OccasionGraph,
    /// Unit occasion ids, indexed by unit.
    pub unit_ids: Vec<OccasionId>,
    /// Constituent micro-occasions per unit, sorted.
    pub constituents: Vec<Vec<OccasionId>>,
    /// Macro-alphabet per unit.
    pub alphabets: Vec<MacroAlphabet>,
    /// Effective unit-to-unit edges.
    pub effective_edges: Vec<(usize, usize)>,
    /// The joint micro-level mechanism (sources and factors over unit
    /// occasions) the automaton was derived from.
    pub micro: SubMechanism,
}

impl CoarseAutomaton {
    /// Map a joint micro assignment of a unit's occasions to its macro
    /// symbol.
    pub fn macro_symbol(&self, unit: usize, micro_digits: &[usize]) -> usize {
        let radix = Radix::new(
            self.constituents[unit]
                .iter()
                .map(|id| {
                    self.micro
                        .sources
                        .iter()
                        .find(|(s, _)| s == id)
                        .map(|(_, n)| *n)
                        .unwrap()
                })
                .collect(),
        );
        self.alphabets[unit].class_of[radix.encode(micro_digits)]
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "graph": self.graph.to_json(),
            "units": (0..self.unit_ids.len()).map(|k| serde_json::json!({
                "id": self.unit_ids[k].to_string(),
                "constituents": self.constituents[k].iter()
                    .map(|i| i.to_string()).collect::<Vec<_>>(),
                "classes": self.alphabets[k].classes,
                "representatives": self.alphabets[k].representatives,
            })).collect::<Vec<_>>(),
            "effective_edges": self.effective_edges,
        })
    }
}

/// Steps 1-5 composed.
pub fn coarse_grain(sub: &Subsystem, spec: &GrainingSpec) -> Result<CoarseAutomaton> {
    spec.validate(sub)?;
    let sub = sub.marginalize_extrinsic()?;
    let sub = fix_ground(&sub, spec)?;
    let pk = marginalize_channel(&sub, spec)?;
    let edges = effective_graph(&pk, spec)?;
    let layout = unit_layout(&pk, spec);
    let alphabets: Vec<MacroAlphabet> = (0..spec.units.len())
        .map(|l| macro_alphabet(&pk, spec, l))
        .collect::<Result<_>>()?;

    // Unit occasion ids: unit index as site, latest constituent tic as time.
    let unit_ids: Vec<OccasionId> = (0..spec.units.len())
        .map(|k| {
            let t = layout.occs[k].iter().map(|id| id.time).max().unwrap();
            OccasionId::new(Site::Unit(k as u32), t)
        })
        .collect();

    // Macro mechanism per unit: inputs are the effective in-edges; rows are
    // computed at class representatives and aggregated over output classes.
    let mut graph = OccasionGraph::new();
    for l in 0..spec.units.len() {
        let in_units: Vec<usize> = edges
            .iter()
            .filter(|(_, tgt)| *tgt == l)
            .map(|(src, _)| *src)
            .collect();
        let in_sizes: Vec<usize> = in_units
            .iter()
            .map(|&k| alphabets[k].classes.len())
            .collect();
        let out_size = alphabets[l].classes.len();
        let in_radix = Radix::new(in_sizes.clone());
        let n_in = in_radix.size_capped(CONTEXT_CAP, "macro mechanism rows")?;

        // factors of unit l in occasion order
        let own_factors: Vec<&Factor> = layout.occs[l]
            .iter()
            .map(|id| {
                pk.factors
                    .iter()
                    .find(|f| f.target.0 == *id)
                    .expect("factor per unit occasion")
            })
            .collect();

        let mut probs = Vec::with_capacity(n_in * out_size);
        let mut macro_digits = vec![0usize; in_units.len()];
        for input in 0..n_in {
            in_radix.decode_into(input, &mut macro_digits);
            // micro value per source slot of pk: representatives for
            // effective in-units, 0 for everything else (no effective edge
            // means the value cannot matter beyond tolerance)
            let slot_value: Vec<usize> = (0..pk.sources.len())
                .map(|s| {
                    let k = layout.unit_of_slot[s];
                    match in_units.iter().position(|&ku| ku == k) {
                        Some(j) => {
                            let rep = alphabets[k].representatives[macro_digits[j]];
                            layout.radix[k].digit(rep, layout.pos_in_unit[s])
                        }
                        None => 0,
                    }
                })
                .collect();
            let mut row = vec![0.0; out_size];
            let n_micro = layout.radix[l].size();
            let mut unit_digits = vec![0usize; layout.occs[l].len()];
            for u in 0..n_micro {
                layout.radix[l].decode_into(u, &mut unit_digits);
                let mut p = 1.0;
                for (j, f) in own_factors.iter().enumerate() {
                    let local: Vec<usize> =
                        f.slots.iter().map(|&s| slot_value[s]).collect();
                    p *= f
                        .mech
                        .prob(f.mech.input_radix.encode(&local), unit_digits[j]);
                    if p == 0.0 {
                        break;
                    }
                }
                row[alphabets[l].class_of[u]] += p;
            }
            probs.extend(row);
        }
        let mechanism = Mechanism::table(
            in_units.iter().map(|&k| unit_ids[k]).collect(),
            in_sizes,
            out_size,
            probs,
        );
        graph.insert(
            unit_ids[l],
            Occasion {
                alphabet: out_size,
                mechanism,
            },
        );
    }

    Ok(CoarseAutomaton {
        graph,
        unit_ids,
        constituents: layout.occs,
        alphabets,
        effective_edges: edges,
        micro: pk,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::resolve_det_fn;

    fn cell(n: u32, t: i32) -> OccasionId {
        OccasionId::cell(n, t)
    }

    fn and_graph() -> OccasionGraph {
        // t = AND(g, s): one ground candidate g, one free source s
        let g = cell(0, 0);
        let s = cell(1, 0);
        let t = cell(0, 1);
        let mut graph = OccasionGraph::new();
        for src in [g, s] {
            graph.insert(
                src,
                Occasion {
                    alphabet: 2,
                    mechanism: Mechanism::prior(vec![0.5, 0.5]),
                },
            );
        }
        graph.insert(
            t,
            Occasion {
                alphabet: 2,
                mechanism: Mechanism::det(
                    vec![g, s],
                    vec![2, 2],
                    2,
                    resolve_det_fn("and:2", 2).unwrap(),
                ),
            },
        );
        graph
    }

    #[test]
    fn validate_rejects_overlap_and_omission() {
        let graph = and_graph();
        let sub = Subsystem::full(&graph);
        let mut spec = GrainingSpec::trivial(&sub);
        // overlap: first occasion also in ground
        let first = *sub.occasions.keys().next().unwrap();
        spec.ground.insert(first);
        spec.ground_output = Assignment::new().bind(first, 0);
        assert!(matches!(
            spec.validate(&sub),
            Err(Error::InvalidGraining(_))
        ));
        // omission
        let mut spec2 = GrainingSpec::trivial(&sub);
        spec2.units.pop();
        assert!(matches!(
            spec2.validate(&sub),
            Err(Error::InvalidGraining(_))
        ));
    }

    #[test]
    fn fix_ground_binds_and_removes() {
        let graph = and_graph();
        let sub = Subsystem::full(&graph);
        let g = cell(0, 0);
        let s = cell(1, 0);
        let t = cell(0, 1);
        for (val, expect) in [(1usize, vec![0, 1]), (0usize, vec![0, 0])] {
            let spec = GrainingSpec {
                ground: [g].into_iter().collect(),
                channel: BTreeSet::new(),
                units: vec![[s].into_iter().collect(), [t].into_iter().collect()],
                ground_output: Assignment::new().bind(g, val),
            };
            let fixed = fix_ground(&sub, &spec).unwrap();
            assert!(!fixed.contains(&g));
            let m = &fixed.occasions[&t].mechanism;
            // AND(1, x) = x; AND(0, x) = 0
            for x in 0..2 {
                assert_eq!(m.det_eval(x), Some(expect[x]));
            }
        }
    }

    #[test]
    fn fix_ground_missing_output_errors() {
        let graph = and_graph();
        let sub = Subsystem::full(&graph);
        let spec = GrainingSpec {
            ground: [cell(0, 0)].into_iter().collect(),
            channel: BTreeSet::new(),
            units: vec![
                [cell(1, 0)].into_iter().collect(),
                [cell(0, 1)].into_iter().collect(),
            ],
            ground_output: Assignment::new(),
        };
        assert!(matches!(
            fix_ground(&sub, &spec),
            Err(Error::MissingGroundOutput(_))
        ));
    }

    #[test]
    fn channel_chain_is_matrix_product() {
        // a -> b -> c, b channel, stochastic
        let a = cell(0, 0);
        let b = cell(0, 1);
        let c = cell(0, 2);
        let mut graph = OccasionGraph::new();
        graph.insert(
            a,
            Occasion {
                alphabet: 2,
                mechanism: Mechanism::prior(vec![0.5, 0.5]),
            },
        );
        let p_ba = vec![0.9, 0.1, 0.2, 0.8];
        let p_cb = vec![0.7, 0.3, 0.4, 0.6];
        graph.insert(
            b,
            Occasion {
                alphabet: 2,
                mechanism: Mechanism::table(vec![a], vec![2], 2, p_ba.clone()),
            },
        );
        graph.insert(
            c,
            Occasion {
                alphabet: 2,
                mechanism: Mechanism::table(vec![b], vec![2], 2, p_cb.clone()),
            },
        );
        let sub = Subsystem::full(&graph);
        let spec = GrainingSpec {
            ground: BTreeSet::new(),
            channel: [b].into_iter().collect(),
            units: vec![[a].into_iter().collect(), [c].into_iter().collect()],
            ground_output: Assignment::new(),
        };
        let pk = marginalize_channel(&sub, &spec).unwrap();
        // factor for c: p(c|a) = sum_b p(c|b) p(b|a)
        let f = pk.factors.iter().find(|f| f.target.0 == c).unwrap();
        for ai in 0..2 {
            for ci in 0..2 {
                let expect: f64 = (0..2)
                    .map(|bi| p_cb[bi * 2 + ci] * p_ba[ai * 2 + bi])
                    .sum();
                assert!((f.mech.prob(ai, ci) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_channel_equals_product_mechanism() {
        let graph = and_graph();
        let sub = Subsystem::full(&graph);
        let g = cell(0, 0);
        let s = cell(1, 0);
        let t = cell(0, 1);
        let spec = GrainingSpec {
            ground: BTreeSet::new(),
            channel: BTreeSet::new(),
            units: vec![
                [g, s].into_iter().collect(),
                [t].into_iter().collect(),
            ],
            ground_output: Assignment::new(),
        };
        let pk = marginalize_channel(&sub, &spec).unwrap();
        let direct = sub.product_mechanism(&[t]).unwrap();
        let f = pk.factors.iter().find(|f| f.target.0 == t).unwrap();
        for input in 0..4 {
            for out in 0..2 {
                // slots for t's factor are exactly (g, s) in both
                assert_eq!(f.mech.prob(input, out), direct.prob(input, &[out]));
            }
        }
    }

    #[test]
    fn cyclic_channel_rejected() {
        let a = cell(0, 0);
        let b = cell(1, 0);
        let t = cell(0, 1);
        let s = cell(1, 1);
        let ident = |from| Mechanism::det(vec![from], vec![2], 2, DetFn::new("identity", |i| i));
        let mut graph = OccasionGraph::new();
        graph.insert(a, Occasion { alphabet: 2, mechanism: ident(b) });
        graph.insert(b, Occasion { alphabet: 2, mechanism: ident(a) });
        graph.insert(t, Occasion { alphabet: 2, mechanism: ident(a) });
        graph.insert(s, Occasion { alphabet: 2, mechanism: Mechanism::prior(vec![0.5, 0.5]) });
        let sub = Subsystem::full(&graph);
        let spec = GrainingSpec {
            ground: BTreeSet::new(),
            channel: [a, b].into_iter().collect(),
            units: vec![[s].into_iter().collect(), [t].into_iter().collect()],
            ground_output: Assignment::new(),
        };
        assert!(matches!(
            marginalize_channel(&sub, &spec),
            Err(Error::CyclicChannel)
        ));
    }

    #[test]
    fn effective_graph_drops_independent_units() {
        // two parallel wires: s1 -> t1, s2 -> t2, grained as {s1,s2} units?
        // no: units {s1}, {s2}, {t1}, {t2}: edges only along the wires
        let s1 = cell(0, 0);
        let s2 = cell(1, 0);
        let t1 = cell(0, 1);
        let t2 = cell(1, 1);
        let ident = |from| Mechanism::det(vec![from], vec![2], 2, DetFn::new("identity", |i| i));
        let mut graph = OccasionGraph::new();
        graph.insert(s1, Occasion { alphabet: 2, mechanism: Mechanism::prior(vec![0.5, 0.5]) });
        graph.insert(s2, Occasion { alphabet: 2, mechanism: Mechanism::prior(vec![0.5, 0.5]) });
        graph.insert(t1, Occasion { alphabet: 2, mechanism: ident(s1) });
        graph.insert(t2, Occasion { alphabet: 2, mechanism: ident(s2) });
        let sub = Subsystem::full(&graph);
        let spec = GrainingSpec {
            ground: BTreeSet::new(),
            channel: BTreeSet::new(),
            units: vec![
                [s1].into_iter().collect(),
                [s2].into_iter().collect(),
                [t1].into_iter().collect(),
                [t2].into_iter().collect(),
            ],
            ground_output: Assignment::new(),
        };
        let pk = marginalize_channel(&sub, &spec).unwrap();
        let edges = effective_graph(&pk, &spec).unwrap();
        assert_eq!(edges, vec![(0, 2), (1, 3)]);
    }

    #[test]
    fn uniform_reaction_no_effect_single_class() {
        // one unit {t} fed by unit {s} through XOR with a coin: t = s XOR coin
        // (coin extrinsic). p(t|s) uniform; t has no downstream factors.
        let s = cell(0, 0);
        let coin = cell(1, 0);
        let t = cell(0, 1);
        let mut graph = OccasionGraph::new();
        graph.insert(s, Occasion { alphabet: 2, mechanism: Mechanism::prior(vec![0.5, 0.5]) });
        graph.insert(coin, Occasion { alphabet: 2, mechanism: Mechanism::prior(vec![0.5, 0.5]) });
        graph.insert(
            t,
            Occasion {
                alphabet: 2,
                mechanism: Mechanism::det(
                    vec![s, coin],
                    vec![2, 2],
                    2,
                    resolve_det_fn("xor:2", 2).unwrap(),
                ),
            },
        );
        let vertices: BTreeSet<_> = [s, t].into_iter().collect();
        let sub = Subsystem::induced(&graph, &vertices).marginalize_extrinsic().unwrap();
        let spec = GrainingSpec {
            ground: BTreeSet::new(),
            channel: BTreeSet::new(),
            units: vec![[s].into_iter().collect(), [t].into_iter().collect()],
            ground_output: Assignment::new(),
        };
        let pk = marginalize_channel(&sub, &spec).unwrap();
        let classes = macro_alphabet(&pk, &spec, 1).unwrap();
        assert_eq!(classes.classes.len(), 1);
    }

    #[test]
    fn trivial_graining_preserves_mechanisms() {
        let graph = and_graph();
        let sub = Subsystem::full(&graph);
        let coarse = coarse_grain(&sub, &GrainingSpec::trivial(&sub)).unwrap();
        assert!(coarse.graph.validate().is_empty());
        // the AND unit keeps a 2-symbol alphabet with both micro outputs
        // distinguished, and has exactly its two source units as in-edges
        let t = cell(0, 1);
        let k = coarse
            .constituents
            .iter()
            .position(|c| c == &vec![t])
            .unwrap();
        assert_eq!(coarse.alphabets[k].classes.len(), 2);
        let in_edges: Vec<usize> = coarse
            .effective_edges
            .iter()
            .filter(|(_, tgt)| *tgt == k)
            .map(|(src, _)| *src)
            .collect();
        assert_eq!(in_edges.len(), 2);
        // macro mechanism reproduces AND over macro symbols
        let occ = &coarse.graph.occasions[&coarse.unit_ids[k]];
        for input in 0..4 {
            let expect = usize::from(input == 3);
            assert_eq!(occ.mechanism.prob(input, expect), 1.0);
        }
    }

    #[test]
    fn glider_channel_factor_matches_simulation() {
        use crate::models::gol::{glider_se, unroll_gol, Boundary, GolSpec};
        // source 3x3 at t=0, target 3x3 at t=4, offset one diagonal; rest of
        // t=0 is blank ground, everything in between is channel
        let spec_g = GolSpec {
            width: 12,
            height: 12,
            boundary: Boundary::FixedBlank,
            interval: (0, 4),
        };
        let graph = unroll_gol(&spec_g, None).unwrap();
        let src_box: BTreeSet<OccasionId> = (2..5)
            .flat_map(|r| (2..5).map(move |c| OccasionId::grid(r, c, 0)))
            .collect();
        let tgt_box: BTreeSet<OccasionId> = (3..6)
            .flat_map(|r| (3..6).map(move |c| OccasionId::grid(r, c, 4)))
            .collect();
        let mut ground: BTreeSet<OccasionId> = BTreeSet::new();
        let mut channel: BTreeSet<OccasionId> = BTreeSet::new();
        for id in graph.occasions.keys() {
            if src_box.contains(id) || tgt_box.contains(id) {
                continue;
            }
            if id.time == 0 {
                ground.insert(*id);
            } else {
                channel.insert(*id);
            }
        }
        let ground_output: Assignment = ground.iter().map(|id| (*id, 0)).collect();
        let spec = GrainingSpec {
            ground,
            channel,
            units: vec![src_box.clone(), tgt_box.clone()],
            ground_output,
        };
        let sub = Subsystem::full(&graph);
        spec.validate(&sub).unwrap();
        let fixed = fix_ground(&sub, &spec).unwrap();
        let pk = marginalize_channel(&fixed, &spec).unwrap();

        // oracle: direct grid simulation with the glider in the source box
        let live = glider_se(0, 2, 2);
        let g2 = unroll_gol(&spec_g, Some(&live)).unwrap();
        let sim = Subsystem::full(&g2);
        let tgt_ids: Vec<OccasionId> = tgt_box.iter().copied().collect();
        let oracle = sim.simulate(&Assignment::new(), &tgt_ids).unwrap();

        // the coarse factors, evaluated at the glider source content
        let src_ids: Vec<OccasionId> = src_box.iter().copied().collect();
        let src_val: BTreeMap<OccasionId, usize> = src_ids
            .iter()
            .map(|id| {
                let (r, c) = match id.site {
                    Site::Grid { row, col } => (row, col),
                    _ => unreachable!(),
                };
                (*id, usize::from(live.contains(&(r, c))))
            })
            .collect();
        for (id, expect) in tgt_ids.iter().zip(&oracle) {
            let f = pk.factors.iter().find(|f| f.target.0 == *id).unwrap();
            let digits: Vec<usize> = f
                .slots
                .iter()
                .map(|&s| src_val[&pk.sources[s].0])
                .collect();
            let got = f
                .mech
                .det_eval(f.mech.input_radix.encode(&digits))
                .unwrap();
            assert_eq!(got, *expect, "cell {id}");
        }
    }

    #[test]
    fn graining_spec_json_roundtrip() {
        let graph = and_graph();
        let sub = Subsystem::full(&graph);
        let g = cell(0, 0);
        let spec = GrainingSpec {
            ground: [g].into_iter().collect(),
            channel: BTreeSet::new(),
            units: vec![
                [cell(1, 0)].into_iter().collect(),
                [cell(0, 1)].into_iter().collect(),
            ],
            ground_output: Assignment::new().bind(g, 1),
        };
        let doc = spec.to_json();
        let spec2 = GrainingSpec::from_json(&doc).unwrap();
        spec2.validate(&sub).unwrap();
        assert_eq!(spec2.to_json(), doc);
    }
}
