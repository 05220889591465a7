//! Coupled-Hopfield transition analysis: for each step of a realized run
//! of the one-way coupled pair A -> B, two grainings measure B's effect on
//! itself (INT: B cells at both times as units, A extrinsic noise) and A's
//! effect on B (EXT: A at t and B at t+1 as units, B at t fixed as ground).

use crate::error::Result;
use crate::grain::{fix_ground, marginalize_channel, GrainingSpec};
use crate::graph::{Assignment, Subsystem};
use crate::info::{effective_information, max_xi_over_source_subsets};
use crate::mechanism::Transfer;
use crate::models::hopfield::{
    parse_state, unroll_coupled_hopfield, CoupledHopfieldSpec, HopfieldSpec,
};
use crate::occasion::OccasionId;
use crate::submech::SubMechanism;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

/// The realized sample run analyzed in the paper: states of A and B at
/// t = 0..6.
pub const RUN_A: [&str; 7] = [
    "00000000", "10100011", "10101010", "10101010", "10101010", "10101010", "10101010",
];
pub const RUN_B: [&str; 7] = [
    "01010101", "01010101", "00010101", "00101011", "00101010", "10101010", "10101010",
];

/// Published measures per transition into t = 1..6:
/// (ei_int, max_xi_int, ei_ext, max_xi_ext).
pub const TABLE_TARGETS: [(f64, f64, f64, f64); 6] = [
    (2.42, 0.10, 0.31, 0.04),
    (1.85, 0.08, 2.44, 0.16),
    (1.96, 0.12, 6.89, 0.27),
    (1.85, 0.08, 1.60, 0.10),
    (2.42, 0.10, 0.90, 0.06),
    (2.42, 0.10, 0.31, 0.04),
];

pub const PATTERNS: [&str; 3] = ["00001111", "00110011", "01010101"];
pub const TEMPERATURE: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct HopfieldRow {
    /// Output time of the transition t-1 -> t.
    pub t: i32,
    pub ei_int: f64,
    pub max_xi_int: f64,
    pub ei_ext: f64,
    pub max_xi_ext: f64,
}

/// One modelling variant of the coupled pair: the transfer-function input
/// coding, whether the recurrent weights keep their Hebbian diagonal, and
/// the scale on the A-to-B coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfieldVariant {
    pub transfer: Transfer,
    pub zero_diagonal: bool,
    pub coupling_scale: f64,
    pub coupling_zero_diagonal: bool,
    /// Divide the Hebbian weights by the cell count (a common convention
    /// the published table does not pin down). Implemented as an effective
    /// temperature of n * T, which is the same thing.
    pub normalize_weights: bool,
}

impl HopfieldVariant {
    pub fn name(&self) -> String {
        format!(
            "{}/{}/c{}{}",
            variant_name(self.transfer),
            if self.zero_diagonal { "zero-diag" } else { "self-diag" },
            self.coupling_scale,
            if self.coupling_zero_diagonal { "/xdiag0" } else { "" },
        ) + if self.normalize_weights { "/norm" } else { "" }
    }
}

/// The calibrated default for each transfer coding (see the calibration
/// report emitted by `run_hopfield_calibration`).
pub fn default_variant(transfer: Transfer) -> HopfieldVariant {
    HopfieldVariant {
        transfer,
        zero_diagonal: false,
        coupling_scale: 1.0,
        coupling_zero_diagonal: false,
        normalize_weights: true,
    }
}

#[derive(Debug, Clone)]
pub struct HopfieldTable {
    pub variant: HopfieldVariant,
    pub rows: Vec<HopfieldRow>,
    /// Largest absolute deviation from the published values across all
    /// twenty-four measures.
    pub max_deviation: f64,
}

fn network(variant: HopfieldVariant, interval: (i32, i32)) -> HopfieldSpec {
    HopfieldSpec {
        n_cells: 8,
        patterns: PATTERNS.iter().map(|p| parse_state(p).unwrap()).collect(),
        temperature: if variant.normalize_weights {
            TEMPERATURE * 8.0
        } else {
            TEMPERATURE
        },
        interval,
        transfer_variant: variant.transfer,
        zero_diagonal: variant.zero_diagonal,
    }
}

/// Drop the sources no factor reads (the unit occasions that only appear
/// as targets), so the subset search stays within its enumeration cap.
fn prune_unread(pk: &SubMechanism) -> Result<SubMechanism> {
    let mut read = vec![false; pk.sources.len()];
    for f in &pk.factors {
        for &s in &f.slots {
            read[s] = true;
        }
    }
    pk.restrict(&read)
}

fn singleton_units(verts: &BTreeSet<OccasionId>) -> Vec<BTreeSet<OccasionId>> {
    verts.iter().map(|&id| BTreeSet::from([id])).collect()
}

fn measures(
    sub: &Subsystem,
    gspec: &GrainingSpec,
    x_out: &BTreeMap<OccasionId, usize>,
) -> Result<(f64, f64)> {
    let fixed = fix_ground(sub, gspec)?;
    let pk = marginalize_channel(&fixed, gspec)?;
    let outcome = pk.outcome_from(x_out)?;
    let ei = effective_information(&pk, &outcome)?;

    let pruned = prune_unread(&pk)?;
    let outcome_pruned = pruned.outcome_from(x_out)?;
    let (max_xi, _) = max_xi_over_source_subsets(&pruned, &outcome_pruned, 2)?;
    Ok((ei, max_xi))
}

/// One transition t-1 -> t of the realized run under the given transfer
/// variant; time labels follow the run.
fn transition(variant: HopfieldVariant, t: i32) -> Result<HopfieldRow> {
    let spec = CoupledHopfieldSpec {
        network_a: network(variant, (t - 1, t)),
        network_b: network(variant, (t - 1, t)),
        coupling_scale: variant.coupling_scale,
        coupling_zero_diagonal: variant.coupling_zero_diagonal,
    };
    let a_prev = parse_state(RUN_A[(t - 1) as usize])?;
    let b_prev = parse_state(RUN_B[(t - 1) as usize])?;
    let b_next = parse_state(RUN_B[t as usize])?;
    let g = unroll_coupled_hopfield(&spec, &a_prev, &b_prev)?;

    let a_at = |time: i32| -> BTreeSet<OccasionId> {
        (0..8).map(|k| OccasionId::cell(spec.a_cell(k), time)).collect()
    };
    let b_at = |time: i32| -> BTreeSet<OccasionId> {
        (0..8).map(|k| OccasionId::cell(spec.b_cell(k), time)).collect()
    };
    let bind = |out: &mut BTreeMap<OccasionId, usize>, ids: &BTreeSet<OccasionId>, vals: &[u8]| {
        for (id, &v) in ids.iter().zip(vals) {
            out.insert(*id, v as usize);
        }
    };

    // INT: B at both times as units, A extrinsic noise.
    let verts_int: BTreeSet<OccasionId> = b_at(t - 1).union(&b_at(t)).copied().collect();
    let sub_int = Subsystem::induced(&g, &verts_int).marginalize_extrinsic()?;
    let gspec_int = GrainingSpec {
        ground: BTreeSet::new(),
        channel: BTreeSet::new(),
        units: singleton_units(&verts_int),
        ground_output: Assignment::new(),
    };
    let mut x_int = BTreeMap::new();
    bind(&mut x_int, &b_at(t - 1), &b_prev);
    bind(&mut x_int, &b_at(t), &b_next);
    let (ei_int, max_xi_int) = measures(&sub_int, &gspec_int, &x_int)?;

    // EXT: A at t-1 and B at t as units, B at t-1 fixed as ground.
    let verts_ext: BTreeSet<OccasionId> = a_at(t - 1)
        .union(&b_at(t - 1))
        .copied()
        .chain(b_at(t))
        .collect();
    let sub_ext = Subsystem::induced(&g, &verts_ext).marginalize_extrinsic()?;
    let mut ground_output = Assignment::new();
    for (id, &v) in b_at(t - 1).iter().zip(&b_prev) {
        ground_output = ground_output.bind(*id, v as usize);
    }
    let unit_occs: BTreeSet<OccasionId> = a_at(t - 1).union(&b_at(t)).copied().collect();
    let gspec_ext = GrainingSpec {
        ground: b_at(t - 1),
        channel: BTreeSet::new(),
        units: singleton_units(&unit_occs),
        ground_output,
    };
    let mut x_ext = BTreeMap::new();
    bind(&mut x_ext, &a_at(t - 1), &a_prev);
    bind(&mut x_ext, &b_at(t), &b_next);
    let (ei_ext, max_xi_ext) = measures(&sub_ext, &gspec_ext, &x_ext)?;

    Ok(HopfieldRow {
        t,
        ei_int,
        max_xi_int,
        ei_ext,
        max_xi_ext,
    })
}

pub fn run_hopfield_table(variant: HopfieldVariant) -> Result<HopfieldTable> {
    let rows: Vec<HopfieldRow> = (1..=6)
        .into_par_iter()
        .map(|t| transition(variant, t))
        .collect::<Result<_>>()?;
    let max_deviation = rows
        .iter()
        .zip(&TABLE_TARGETS)
        .flat_map(|(r, t)| {
            [
                (r.ei_int - t.0).abs(),
                (r.max_xi_int - t.1).abs(),
                (r.ei_ext - t.2).abs(),
                (r.max_xi_ext - t.3).abs(),
            ]
        })
        .fold(0.0, f64::max);
    Ok(HopfieldTable {
        variant,
        rows,
        max_deviation,
    })
}

/// One calibration sweep entry: either the measured table or the reason
/// the variant could not produce the realized run (e.g. the run has zero
/// probability under the variant, so the output has no marginal).
#[derive(Debug, Clone)]
pub struct CalibrationEntry {
    pub variant: HopfieldVariant,
    pub table: std::result::Result<HopfieldTable, String>,
}

/// Run every transfer variant and report which reproduces the published
/// table most closely. Variants that cannot realize the run are kept in
/// the report with their error instead of aborting the sweep.
pub fn run_hopfield_calibration() -> Result<Vec<CalibrationEntry>> {
    let mut variants = Vec::new();
    for transfer in [Transfer::Glauber, Transfer::ExpRaw] {
        for zero_diagonal in [false, true] {
            for coupling_scale in [0.25, 0.5, 1.0] {
                for coupling_zero_diagonal in [false, true] {
                    for normalize_weights in [false, true] {
                        variants.push(HopfieldVariant {
                            transfer,
                            zero_diagonal,
                            coupling_scale,
                            coupling_zero_diagonal,
                            normalize_weights,
                        });
                    }
                }
            }
        }
    }
    let mut entries: Vec<CalibrationEntry> = variants
        .into_par_iter()
        .map(|variant| CalibrationEntry {
            variant,
            table: run_hopfield_table(variant).map_err(|e| e.to_string()),
        })
        .collect();
    // Best fit first; unrealizable variants last.
    entries.sort_by(|a, b| {
        let dev = |e: &CalibrationEntry| {
            e.table.as_ref().map(|t| t.max_deviation).unwrap_or(f64::INFINITY)
        };
        dev(a).partial_cmp(&dev(b)).unwrap()
    });
    Ok(entries)
}

pub fn variant_name(v: Transfer) -> &'static str {
    match v {
        Transfer::Glauber => "glauber",
        Transfer::ExpRaw => "exp-raw",
    }
}

pub fn hopfield_csv(table: &HopfieldTable) -> String {
    let mut s = String::from("variant,t,ei_int,max_xi_int,ei_ext,max_xi_ext\n");
    for r in &table.rows {
        writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            table.variant.name(),
            r.t,
            // `+ 0.0` collapses IEEE negative zero for byte-stable CSV.
            r.ei_int + 0.0,
            r.max_xi_int + 0.0,
            r.ei_ext + 0.0,
            r.max_xi_ext + 0.0
        )
        .unwrap();
    }
    s
}

pub fn calibration_csv(entries: &[CalibrationEntry]) -> String {
    let mut s = String::from("variant,max_deviation,within_0.05,error\n");
    for e in entries {
        match &e.table {
            Ok(t) => writeln!(
                s,
                "{},{:.6},{},",
                e.variant.name(),
                t.max_deviation,
                t.max_deviation <= 0.05
            )
            .unwrap(),
            Err(msg) => {
                writeln!(s, "{},,,\"{}\"", e.variant.name(), msg).unwrap()
            }
        }
    }
    s
}
