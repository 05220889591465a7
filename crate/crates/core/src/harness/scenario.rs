//! Scenario files: a versioned JSON description of a model, an unrolling
//! interval, a subsystem, a graining, and a realized output, plus the list
//! of measures to compute on them.

use crate::error::{Error, Result};
use crate::grain::{
    coarse_grain, fix_ground, macro_alphabet, marginalize_channel, GrainingSpec,
};
use crate::graph::{Assignment, OccasionGraph, Subsystem};
use crate::info;
use crate::models::gol::{parse_cells, unroll_gol, GolSpec, GLIDER_SE};
use crate::models::hopfield::{
    parse_state, unroll_coupled_hopfield, unroll_hopfield, CoupledHopfieldSpec, HopfieldSpec,
};
use crate::occasion::{OccasionId, Site};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelSpec {
    Gol(GolSpec),
    Hopfield(HopfieldSpec),
    CoupledHopfield(CoupledHopfieldSpec),
}

/// Initial conditions; which arms apply depends on the model.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InitialSpec {
    /// Live grid cells at the interval start, as "row,col" strings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<String>>,
    /// A named pattern placed at the interval start: "glider-se",
    /// "glider-sw", "glider-ne" or "glider-nw".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default)]
    pub phase: usize,
    #[serde(default)]
    pub row: i32,
    #[serde(default)]
    pub col: i32,
    /// Hopfield initial state as a 0/1 string.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    /// Coupled-pair initial states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_b: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: String,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    /// Occasion ids forming the subsystem; everything else is extrinsic
    /// noise. Defaults to the whole unrolled graph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsystem: Option<Vec<String>>,
    /// A graining document (ground/channel/units/ground_output); defaults
    /// to the identity graining.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graining: Option<serde_json::Value>,
    /// Candidate family for the emergence measure; defaults to the
    /// graining plus its translation neighbors and singleton refinements.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Vec<serde_json::Value>>,
    /// Realized output: occasion id -> symbol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_out: Option<BTreeMap<String, usize>>,
    #[serde(default)]
    pub measures: Vec<String>,
}

#[derive(Debug)]
pub struct Resolved {
    pub graph: OccasionGraph,
    pub sub: Subsystem,
    pub graining: GrainingSpec,
    pub x_out: BTreeMap<OccasionId, usize>,
    pub family: Option<Vec<GrainingSpec>>,
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    serde_json::from_str(text).map_err(|e| Error::Scenario(format!("scenario JSON: {e}")))
}

fn oriented_glider(pattern: &str, phase: usize, row: i32, col: i32) -> Result<BTreeSet<(i32, i32)>> {
    let base = parse_cells(GLIDER_SE[phase % 4]);
    let orient = pattern
        .strip_prefix("glider-")
        .ok_or_else(|| Error::Scenario(format!("unknown pattern '{pattern}'")))?;
    let cells: Vec<(i32, i32)> = match orient {
        // Reflections commute with the update rule, so these are gliders
        // headed the other three ways.
        "se" => base,
        "sw" => base.into_iter().map(|(r, c)| (r, 2 - c)).collect(),
        "ne" => base.into_iter().map(|(r, c)| (2 - r, c)).collect(),
        "nw" => base.into_iter().map(|(r, c)| (2 - r, 2 - c)).collect(),
        _ => return Err(Error::Scenario(format!("unknown pattern '{pattern}'"))),
    };
    Ok(cells.into_iter().map(|(r, c)| (r + row, c + col)).collect())
}

fn parse_id(s: &str) -> Result<OccasionId> {
    s.parse::<OccasionId>()
        .map_err(|_| Error::Scenario(format!("bad occasion id '{s}'")))
}

pub fn resolve(sc: &Scenario) -> Result<Resolved> {
    if sc.schema != "1" {
        return Err(Error::Scenario(format!(
            "unsupported schema '{}'; this build reads schema \"1\"",
            sc.schema
        )));
    }
    let init = sc.initial.clone().unwrap_or_default();
    let graph = match &sc.model {
        ModelSpec::Gol(spec) => {
            let cells: Option<BTreeSet<(i32, i32)>> = match (&init.cells, &init.pattern) {
                (Some(list), None) => {
                    let mut set = BTreeSet::new();
                    for s in list {
                        let (r, c) = s
                            .split_once(',')
                            .and_then(|(a, b)| {
                                Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
                            })
                            .ok_or_else(|| {
                                Error::Scenario(format!("bad cell '{s}' (want \"row,col\")"))
                            })?;
                        set.insert((r, c));
                    }
                    Some(set)
                }
                (None, Some(p)) => Some(oriented_glider(p, init.phase, init.row, init.col)?),
                (None, None) => None,
                (Some(_), Some(_)) => {
                    return Err(Error::Scenario(
                        "give either initial.cells or initial.pattern, not both".into(),
                    ))
                }
            };
            unroll_gol(spec, cells.as_ref())?
        }
        ModelSpec::Hopfield(spec) => {
            let state = init
                .state
                .as_deref()
                .ok_or_else(|| Error::Scenario("hopfield models need initial.state".into()))?;
            unroll_hopfield(spec, &parse_state(state)?)?
        }
        ModelSpec::CoupledHopfield(spec) => {
            let a = init.state_a.as_deref().ok_or_else(|| {
                Error::Scenario("coupled-hopfield models need initial.state_a".into())
            })?;
            let b = init.state_b.as_deref().ok_or_else(|| {
                Error::Scenario("coupled-hopfield models need initial.state_b".into())
            })?;
            unroll_coupled_hopfield(spec, &parse_state(a)?, &parse_state(b)?)?
        }
    };

    let sub = match &sc.subsystem {
        None => Subsystem::full(&graph),
        Some(ids) => {
            let mut verts = BTreeSet::new();
            for s in ids {
                let id = parse_id(s)?;
                if graph.get(&id).is_none() {
                    return Err(Error::Scenario(format!(
                        "subsystem occasion {id} is not in the unrolled interval"
                    )));
                }
                verts.insert(id);
            }
            Subsystem::induced(&graph, &verts)
        }
    };

    let graining = match &sc.graining {
        None => GrainingSpec::trivial(&sub),
        Some(doc) => GrainingSpec::from_json(doc)?,
    };

    let mut x_out = BTreeMap::new();
    if let Some(map) = &sc.x_out {
        for (k, &v) in map {
            let id = parse_id(k)?;
            if !sub.contains(&id) {
                return Err(Error::Scenario(format!(
                    "x_out occasion {id} is not in the subsystem"
                )));
            }
            x_out.insert(id, v);
        }
    }

    let family = match &sc.family {
        None => None,
        Some(docs) => Some(
            docs.iter()
                .map(GrainingSpec::from_json)
                .collect::<Result<Vec<_>>>()?,
        ),
    };

    Ok(Resolved {
        graph,
        sub,
        graining,
        x_out,
        family,
    })
}

/// Shift a grid occasion by (rows, cols, tics); non-grid sites get `None`.
fn shift(id: &OccasionId, d: (i32, i32, i32)) -> Option<OccasionId> {
    match id.site {
        Site::Grid { row, col } => Some(OccasionId::grid(row + d.0, col + d.1, id.time + d.2)),
        _ => None,
    }
}

/// The default neighbor universe for grid grainings: the base graining,
/// every one-unit translation by one cell or one tic that stays inside the
/// subsystem, and the singleton refinement of each multi-occasion variant.
pub fn translation_family(sub: &Subsystem, base: &GrainingSpec) -> Vec<GrainingSpec> {
    let verts = sub.vertices();
    let mut out: Vec<GrainingSpec> = Vec::new();
    let mut variants: Vec<GrainingSpec> = vec![base.clone()];
    let deltas = [
        (1, 0, 0),
        (-1, 0, 0),
        (0, 1, 0),
        (0, -1, 0),
        (0, 0, 1),
        (0, 0, -1),
    ];
    for (l, unit) in base.units.iter().enumerate() {
        for d in deltas {
            let moved: Option<BTreeSet<OccasionId>> =
                unit.iter().map(|id| shift(id, d).filter(|m| verts.contains(m))).collect();
            let Some(moved) = moved else { continue };
            let clashes = base
                .units
                .iter()
                .enumerate()
                .any(|(k, u)| k != l && !u.is_disjoint(&moved))
                || !base.ground.is_disjoint(&moved);
            if clashes {
                continue;
            }
            let mut units = base.units.clone();
            units[l] = moved;
            let occupied: BTreeSet<OccasionId> = units
                .iter()
                .flatten()
                .copied()
                .chain(base.ground.iter().copied())
                .collect();
            let channel = verts.difference(&occupied).copied().collect();
            variants.push(GrainingSpec {
                ground: base.ground.clone(),
                channel,
                units,
                ground_output: base.ground_output.clone(),
            });
        }
    }
    for v in variants {
        if v.units.iter().any(|u| u.len() > 1) {
            let singles: Vec<BTreeSet<OccasionId>> = v
                .units
                .iter()
                .flatten()
                .map(|&id| BTreeSet::from([id]))
                .collect();
            out.push(GrainingSpec {
                ground: v.ground.clone(),
                channel: v.channel.clone(),
                units: singles,
                ground_output: v.ground_output.clone(),
            });
        }
        out.push(v);
    }
    out.dedup_by(|a, b| a.units == b.units && a.ground == b.ground);
    out
}

/// Execute the scenario's measure list over its graining; returns one JSON
/// object keyed by measure name.
pub fn run_measures(res: &Resolved, measures: &[String]) -> Result<serde_json::Value> {
    let mut out = serde_json::Map::new();
    let needs_pk = measures
        .iter()
        .any(|m| matches!(m.as_str(), "ei" | "xi" | "mip" | "macro-alphabet"));
    if needs_pk {
        let marg = res.sub.marginalize_extrinsic()?;
        res.graining.validate(&marg)?;
        let fixed = fix_ground(&marg, &res.graining)?;
        let pk = marginalize_channel(&fixed, &res.graining)?;
        let outcome = if measures
            .iter()
            .any(|m| matches!(m.as_str(), "ei" | "xi" | "mip"))
        {
            if res.x_out.is_empty() {
                return Err(Error::Scenario(
                    "measures ei/xi/mip need x_out in the scenario".into(),
                ));
            }
            Some(pk.outcome_from(&res.x_out)?)
        } else {
            None
        };
        for m in measures {
            match m.as_str() {
                "ei" => {
                    let v = info::effective_information(&pk, outcome.as_ref().unwrap())?;
                    out.insert("ei".into(), v.into());
                }
                "xi" => {
                    let v = info::excess_information(&pk, outcome.as_ref().unwrap())?;
                    out.insert("xi".into(), v.into());
                }
                "mip" => {
                    let r = info::mip(&pk, outcome.as_ref().unwrap())?;
                    let blocks: Vec<Vec<String>> = r
                        .partition
                        .blocks
                        .iter()
                        .map(|b| b.iter().map(|&s| pk.sources[s].0.to_string()).collect())
                        .collect();
                    out.insert(
                        "mip".into(),
                        serde_json::json!({
                            "xi": r.xi,
                            "normalizer": r.normalizer,
                            "score": r.score,
                            "blocks": blocks,
                        }),
                    );
                }
                "macro-alphabet" => {
                    let counts: Vec<usize> = (0..res.graining.units.len())
                        .map(|l| Ok(macro_alphabet(&pk, &res.graining, l)?.classes.len()))
                        .collect::<Result<_>>()?;
                    out.insert("macro-alphabet".into(), serde_json::json!(counts));
                }
                _ => {}
            }
        }
    }
    for m in measures {
        match m.as_str() {
            "emergence" => {
                let family = match &res.family {
                    Some(f) => f.clone(),
                    None => translation_family(&res.sub, &res.graining),
                };
                let mut x = Assignment::new();
                for (&id, &v) in &res.x_out {
                    x = x.bind(id, v);
                }
                let eval = crate::emergence::FamilyEval::new(
                    &res.sub,
                    &x,
                    crate::emergence::GrainingFamily::new(family),
                )?;
                let report = eval.evaluate();
                out.insert(
                    "emergence".into(),
                    serde_json::to_value(&report)
                        .map_err(|e| Error::Scenario(e.to_string()))?,
                );
            }
            "coarse-grain" => {
                let marg = res.sub.marginalize_extrinsic()?;
                let coarse = coarse_grain(&marg, &res.graining)?;
                out.insert("coarse-grain".into(), coarse.to_json());
            }
            "ei" | "xi" | "mip" | "macro-alphabet" => {}
            other => {
                return Err(Error::Scenario(format!(
                    "unknown measure '{other}' (want ei|xi|mip|macro-alphabet|emergence|coarse-grain)"
                )))
            }
        }
    }
    Ok(serde_json::Value::Object(out))
}
