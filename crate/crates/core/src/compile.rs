//! Compilation of fully deterministic (sub)graphs into flat evaluation
//! plans, so that repeated queries — channel marginalization, effective-edge
//! sweeps, alphabet extraction — run as table lookups instead of repeated
//! graph traversals.

use std::collections::{BTreeSet, HashMap};

use crate::alphabet::Radix;
use crate::error::{Error, Result};
use crate::graph::{Assignment, Subsystem};
use crate::occasion::OccasionId;

/// Where a node input comes from at evaluation time.
#[derive(Debug, Clone, Copy)]
enum Ref {
    /// Index into the free-input vector passed to `eval`.
    Free(u32),
    /// Index into the node value buffer.
    Node(u32),
}

#[derive(Debug, Clone, Copy)]
enum Out {
    Const(usize),
    Slot(Ref),
}

/// Cap on per-node lookup tables; larger input spaces fall back to calling
/// the mechanism closure.
const LUT_CAP: usize = 1 << 12;

#[derive(Debug)]
enum NodeEval {
    Lut(Vec<u16>),
    Fn(crate::mechanism::Mechanism),
}

#[derive(Debug)]
struct Node {
    srcs: Vec<Ref>,
    radix: Radix,
    eval: NodeEval,
}

/// A compiled deterministic net: evaluates the query occasions as a function
/// of the free inputs, with everything else either intervention-fixed or
/// constant-folded away.
#[derive(Debug)]
pub struct Compiled {
    free_sizes: Vec<usize>,
    nodes: Vec<Node>,
    query: Vec<Out>,
}

impl Compiled {
    /// Compile the ancestors of `query` inside `sub`. `fixed` occasions take
    /// intervention values; `free` occasions become runtime arguments (and
    /// are not expanded past). Everything reachable must be deterministic.
    pub fn build_fn(
        sub: &Subsystem,
        fixed: &Assignment,
        free: &[OccasionId],
        query: &[OccasionId],
    ) -> Result<Compiled> {
        let free_index: HashMap<OccasionId, u32> = free
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, i as u32))
            .collect();

        // Ancestors of the query, stopping at fixed and free occasions.
        let mut relevant: BTreeSet<OccasionId> = BTreeSet::new();
        let mut stack: Vec<OccasionId> = query.to_vec();
        while let Some(id) = stack.pop() {
            if fixed.contains(&id) || free_index.contains_key(&id) || !relevant.insert(id) {
                continue;
            }
            let occ = sub
                .occasions
                .get(&id)
                .ok_or_else(|| Error::InvalidGraph(format!("occasion {id} not in subsystem")))?;
            stack.extend(occ.mechanism.inputs.iter().copied());
        }
        let order = sub.topo_order(&relevant)?;

        let mut consts: HashMap<OccasionId, usize> = HashMap::new();
        for (id, v) in &fixed.0 {
            consts.insert(*id, *v);
        }
        let mut node_of: HashMap<OccasionId, u32> = HashMap::new();
        let mut nodes: Vec<Node> = Vec::new();

        for id in &order {
            let occ = &sub.occasions[id];
            let mech = &occ.mechanism;
            if !mech.is_deterministic() {
                return Err(Error::InvalidGraph(format!(
                    "occasion {id} is stochastic; deterministic compilation is impossible"
                )));
            }
            // Bind constant inputs into the mechanism.
            let binds: Vec<(usize, usize)> = mech
                .inputs
                .iter()
                .enumerate()
                .filter_map(|(slot, src)| consts.get(src).map(|&v| (slot, v)))
                .collect();
            let bound = if binds.is_empty() {
                mech.clone()
            } else {
                mech.bind(&binds)
            };
            let srcs: Vec<Ref> = bound
                .inputs
                .iter()
                .map(|src| {
                    if let Some(&fi) = free_index.get(src) {
                        Ref::Free(fi)
                    } else {
                        Ref::Node(node_of[src])
                    }
                })
                .collect();
            if srcs.is_empty() {
                consts.insert(*id, bound.det_eval(0).expect("checked deterministic"));
                continue;
            }
            let radix = bound.input_radix.clone();
            let eval = if radix.size() <= LUT_CAP {
                let lut: Vec<u16> = (0..radix.size())
                    .map(|i| bound.det_eval(i).expect("checked deterministic") as u16)
                    .collect();
                NodeEval::Lut(lut)
            } else {
                NodeEval::Fn(bound)
            };
            node_of.insert(*id, nodes.len() as u32);
            nodes.push(Node { srcs, radix, eval });
        }

        let query_out: Vec<Out> = query
            .iter()
            .map(|id| {
                if let Some(&v) = consts.get(id) {
                    Ok(Out::Const(v))
                } else if let Some(&fi) = free_index.get(id) {
                    Ok(Out::Slot(Ref::Free(fi)))
                } else if let Some(&ni) = node_of.get(id) {
                    Ok(Out::Slot(Ref::Node(ni)))
                } else {
                    Err(Error::InvalidGraph(format!("query occasion {id} unknown")))
                }
            })
            .collect::<Result<_>>()?;

        let free_sizes = free
            .iter()
            .map(|id| {
                sub.occasions
                    .get(id)
                    .map(|o| o.alphabet)
                    .ok_or_else(|| Error::InvalidGraph(format!("free occasion {id} unknown")))
            })
            .collect::<Result<_>>()?;

        Ok(Compiled {
            free_sizes,
            nodes,
            query: query_out,
        })
    }

    /// Compile with no free inputs.
    pub fn build(sub: &Subsystem, fixed: &Assignment, query: &[OccasionId]) -> Result<Compiled> {
        Self::build_fn(sub, fixed, &[], query)
    }

    pub fn free_sizes(&self) -> &[usize] {
        &self.free_sizes
    }

    /// Evaluate the query outputs for the given free-input values.
    pub fn eval(&self, free: &[usize]) -> Vec<usize> {
        debug_assert_eq!(free.len(), self.free_sizes.len());
        let mut vals: Vec<usize> = Vec::with_capacity(self.nodes.len());
        let mut digits: Vec<usize> = Vec::new();
        for node in &self.nodes {
            digits.clear();
            digits.extend(node.srcs.iter().map(|r| match r {
                Ref::Free(i) => free[*i as usize],
                Ref::Node(i) => vals[*i as usize],
            }));
            let idx = node.radix.encode(&digits);
            let out = match &node.eval {
                NodeEval::Lut(lut) => lut[idx] as usize,
                NodeEval::Fn(mech) => mech.det_eval(idx).expect("checked deterministic"),
            };
            vals.push(out);
        }
        self.query
            .iter()
            .map(|q| match q {
                Out::Const(v) => *v,
                Out::Slot(Ref::Free(i)) => free[*i as usize],
                Out::Slot(Ref::Node(i)) => vals[*i as usize],
            })
            .collect()
    }

    /// Evaluate with no free inputs (everything fixed or folded).
    pub fn eval_fixed(&self) -> Result<Vec<usize>> {
        if !self.free_sizes.is_empty() {
            return Err(Error::InvalidGraph(
                "compiled net still has free inputs".into(),
            ));
        }
        Ok(self.eval(&[]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Occasion, OccasionGraph};
    use crate::mechanism::{resolve_det_fn, Mechanism};

    /// 1-D XOR automaton: cell(n, t+1) = cell(n,t) XOR cell(n+1 mod 3, t).
    fn xor_ring(depth: i32) -> OccasionGraph {
        let mut g = OccasionGraph::new();
        for n in 0..3u32 {
            g.insert(
                OccasionId::cell(n, 0),
                Occasion {
                    alphabet: 2,
                    mechanism: Mechanism::prior(vec![0.5, 0.5]),
                },
            );
        }
        for t in 1..=depth {
            for n in 0..3u32 {
                let inputs = vec![
                    OccasionId::cell(n, t - 1),
                    OccasionId::cell((n + 1) % 3, t - 1),
                ];
                g.insert(
                    OccasionId::cell(n, t),
                    Occasion {
                        alphabet: 2,
                        mechanism: Mechanism::det(
                            inputs,
                            vec![2, 2],
                            2,
                            resolve_det_fn("xor:2", 2).unwrap(),
                        ),
                    },
                );
            }
        }
        g
    }

    #[test]
    fn fixed_eval_matches_hand_simulation() {
        let g = xor_ring(2);
        let sub = Subsystem::full(&g);
        // t0 = (1,0,1): t1 = (1^0, 0^1, 1^1) = (1,1,0); t2 = (0,1,1)
        let fixed = Assignment::new()
            .bind(OccasionId::cell(0, 0), 1)
            .bind(OccasionId::cell(1, 0), 0)
            .bind(OccasionId::cell(2, 0), 1);
        let q: Vec<OccasionId> = (0..3).map(|n| OccasionId::cell(n, 2)).collect();
        let c = Compiled::build(&sub, &fixed, &q).unwrap();
        assert_eq!(c.eval_fixed().unwrap(), vec![0, 1, 1]);
    }

    #[test]
    fn free_inputs_sweep_truth_table() {
        let g = xor_ring(1);
        let sub = Subsystem::full(&g);
        let free: Vec<OccasionId> = (0..3).map(|n| OccasionId::cell(n, 0)).collect();
        let q = [OccasionId::cell(0, 1)];
        let c = Compiled::build_fn(&sub, &Assignment::new(), &free, &q).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for z in 0..2 {
                    assert_eq!(c.eval(&[a, b, z]), vec![a ^ b]);
                }
            }
        }
    }

    #[test]
    fn constant_folding_prunes_everything_fixed() {
        let g = xor_ring(3);
        let sub = Subsystem::full(&g);
        let mut fixed = Assignment::new();
        for n in 0..3 {
            fixed = fixed.bind(OccasionId::cell(n, 0), 0);
        }
        let q = [OccasionId::cell(1, 3)];
        let c = Compiled::build(&sub, &fixed, &q).unwrap();
        assert!(c.nodes.is_empty());
        assert_eq!(c.eval_fixed().unwrap(), vec![0]);
    }

    #[test]
    fn stochastic_node_rejected() {
        let g = xor_ring(1);
        let sub = Subsystem::full(&g);
        // priors at t=0 are stochastic and unfixed
        let q = [OccasionId::cell(0, 1)];
        let err = Compiled::build(&sub, &Assignment::new(), &q).unwrap_err();
        assert!(matches!(err, Error::InvalidGraph(_)));
    }
}
