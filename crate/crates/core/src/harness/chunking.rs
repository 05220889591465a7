//! Spatial-organization presets: excess information for one-tic grainings
//! whose units are a red square of cells at t = 0 and a gray square at
//! t = 1, with every other occasion extrinsic noise. Disjoint composites
//! score zero, blank patches negative, gliders positive — and sweeping the
//! red square's placement recovers the glider's direction of motion: the
//! maximizing placement is the glider's box translated one diagonal step
//! along its direction of travel (xi is strongly positive there and
//! negative one step behind), and the right- and down-stepping cases
//! differ by exactly the right/down asymmetry relative to the gray
//! square. Note the naive placement, red covering the glider's current
//! box, is a local minimum of the swept landscape: its minimum
//! information partition splits off the glider's dead center cell almost
//! losslessly.

use crate::error::{Error, Result};
use crate::grain::{marginalize_channel, GrainingSpec};
use crate::graph::{Assignment, Subsystem};
use crate::info::{excess_information_over, mip, MipResult, Partition};
use crate::models::gol::{glider_se, unroll_gol, Boundary, GolSpec, GLIDER_SE_STEP};
use crate::occasion::OccasionId;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

const WIDTH: i32 = 16;
const HEIGHT: i32 = 16;

#[derive(Debug, Clone)]
pub struct ChunkingRow {
    pub case: &'static str,
    /// Excess information over the reported partition.
    pub xi: f64,
    /// Human-readable partition: MIP blocks, or the separating partition
    /// for the disjoint case (whose source space is too large for the MIP).
    pub partition: String,
}

#[derive(Debug, Clone)]
pub struct PlacementRow {
    pub case: &'static str,
    /// Red-square offset relative to the gray square's box.
    pub dr: i32,
    pub dc: i32,
    /// None when the panel's output is unreachable from this placement.
    pub xi: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ChunkingReport {
    pub rows: Vec<ChunkingRow>,
    pub placements: Vec<PlacementRow>,
    /// Per glider case, the placement offset maximizing xi.
    pub argmax: BTreeMap<&'static str, (i32, i32)>,
    /// Per glider case, the offset of the glider's box translated one
    /// diagonal step along its direction of travel (its box one period
    /// later). The sweep maximum lands here.
    pub trajectory_argmax: BTreeMap<&'static str, (i32, i32)>,
}

fn square(top: (i32, i32), side: i32) -> Vec<(i32, i32)> {
    (0..side)
        .flat_map(|dr| (0..side).map(move |dc| (top.0 + dr, top.1 + dc)))
        .collect()
}

fn occ_set(cells: &[(i32, i32)], t: i32) -> BTreeSet<OccasionId> {
    cells.iter().map(|&(r, c)| OccasionId::grid(r, c, t)).collect()
}

/// Build the two-unit mechanism for red cells at t = 0 and gray cells at
/// t = 1 on a 16x16 one-tic grid, everything else extrinsic noise, and the
/// outcome for the given realized t = 0 content.
fn panel_mechanism(
    red: &[(i32, i32)],
    gray: &[(i32, i32)],
    live_t0: &BTreeSet<(i32, i32)>,
) -> Result<(crate::submech::SubMechanism, Vec<usize>)> {
    let spec = GolSpec {
        width: WIDTH,
        height: HEIGHT,
        boundary: Boundary::FixedBlank,
        interval: (0, 1),
    };
    let g = unroll_gol(&spec, None)?;
    let red_occ = occ_set(red, 0);
    let gray_occ = occ_set(gray, 1);
    let verts: BTreeSet<OccasionId> = red_occ.union(&gray_occ).copied().collect();
    let sub = Subsystem::induced(&g, &verts).marginalize_extrinsic()?;
    let gspec = GrainingSpec {
        ground: BTreeSet::new(),
        channel: BTreeSet::new(),
        units: vec![red_occ.clone(), gray_occ.clone()],
        ground_output: Assignment::new(),
    };
    gspec.validate(&sub)?;
    let pk = marginalize_channel(&sub, &gspec)?;

    let mut out: BTreeMap<OccasionId, usize> = BTreeMap::new();
    for id in &red_occ {
        let (r, c) = match id.site {
            crate::occasion::Site::Grid { row, col } => (row, col),
            _ => unreachable!(),
        };
        out.insert(*id, live_t0.contains(&(r, c)) as usize);
    }
    let live_t1 = step_set(live_t0);
    for id in &gray_occ {
        let (r, c) = match id.site {
            crate::occasion::Site::Grid { row, col } => (row, col),
            _ => unreachable!(),
        };
        out.insert(*id, live_t1.contains(&(r, c)) as usize);
    }
    let outcome = pk.outcome_from(&out)?;
    Ok((pk, outcome))
}

/// One tic of the realized (deterministic, fixed-blank) run.
fn step_set(live: &BTreeSet<(i32, i32)>) -> BTreeSet<(i32, i32)> {
    let mut b = super::bitboard::Bitboard::blank(WIDTH, HEIGHT).unwrap();
    for &(r, c) in live {
        b.set(r, c, true);
    }
    let b = b.step();
    (0..HEIGHT)
        .flat_map(|r| (0..WIDTH).map(move |c| (r, c)))
        .filter(|&(r, c)| b.get(r, c))
        .collect()
}

fn fmt_partition(pk: &crate::submech::SubMechanism, blocks: &[Vec<usize>]) -> String {
    blocks
        .iter()
        .map(|b| {
            let ids: Vec<String> = b.iter().map(|&s| pk.sources[s].0.to_string()).collect();
            format!("{{{}}}", ids.join(" "))
        })
        .collect::<Vec<_>>()
        .join(" | ")
}

/// The four panel configurations plus the placement sweeps for the two
/// glider panels.
pub fn run_chunking() -> Result<ChunkingReport> {
    let mut rows = Vec::new();

    // Disjoint: two far-apart gray 2x2 squares at t = 1 pooled into one
    // unit, their red 4x4 neighborhoods at t = 0 pooled into the other.
    {
        let red: Vec<(i32, i32)> = [square((2, 2), 4), square((9, 9), 4)].concat();
        let gray: Vec<(i32, i32)> = [square((3, 3), 2), square((10, 10), 2)].concat();
        let (pk, outcome) = panel_mechanism(&red, &gray, &BTreeSet::new())?;
        // Separating partition: everything around the first pair vs
        // everything around the second.
        let first = |id: &OccasionId| match id.site {
            crate::occasion::Site::Grid { row, .. } => row < 8,
            _ => false,
        };
        let blocks: Vec<Vec<usize>> = vec![
            (0..pk.sources.len()).filter(|&s| first(&pk.sources[s].0)).collect(),
            (0..pk.sources.len()).filter(|&s| !first(&pk.sources[s].0)).collect(),
        ];
        let xi = excess_information_over(&pk, &Partition::new(blocks.clone()), &outcome)?;
        rows.push(ChunkingRow {
            case: "disjoint",
            xi,
            partition: fmt_partition(&pk, &blocks),
        });
    }

    // Blank: aligned red and gray 3x3 squares on a blank grid.
    {
        let red = square((6, 6), 3);
        let gray = square((6, 6), 3);
        let (pk, outcome) = panel_mechanism(&red, &gray, &BTreeSet::new())?;
        let m = mip(&pk, &outcome)?;
        rows.push(ChunkingRow {
            case: "blank",
            xi: m.xi,
            partition: fmt_partition(&pk, &m.partition.blocks),
        });
    }

    // Glider panels: gray square on the glider's t = 1 box, red square
    // swept around it; the base placement covers the glider's t = 0 box.
    let mut placements = Vec::new();
    let mut argmax = BTreeMap::new();
    let mut trajectory_argmax = BTreeMap::new();
    for (case, phase) in [("glider-right", 2usize), ("glider-down", 0usize)] {
        let t0_box = (6, 6);
        let live = glider_se(phase, t0_box.0, t0_box.1);
        let step = GLIDER_SE_STEP[phase];
        let t1_box = (t0_box.0 + step.0, t0_box.1 + step.1);
        let gray = square(t1_box, 3);

        let offsets: Vec<(i32, i32)> = (-2..=2)
            .flat_map(|dr| (-2..=2).map(move |dc| (dr, dc)))
            .collect();
        let swept: Vec<PlacementRow> = offsets
            .par_iter()
            .map(|&(dr, dc)| -> Result<PlacementRow> {
                let red = square((t1_box.0 + dr, t1_box.1 + dc), 3);
                let xi = match panel_mechanism(&red, &gray, &live) {
                    Ok((pk, outcome)) => match mip(&pk, &outcome) {
                        Ok(m) => Some(m.xi),
                        Err(Error::ZeroMarginal) => None,
                        Err(e) => return Err(e),
                    },
                    Err(Error::ZeroMarginal) => None,
                    Err(e) => return Err(e),
                };
                Ok(PlacementRow { case, dr, dc, xi })
            })
            .collect::<Result<_>>()?;

        let base = (t0_box.0 - t1_box.0, t0_box.1 - t1_box.1);
        let base_row = swept
            .iter()
            .find(|p| (p.dr, p.dc) == base)
            .and_then(|p| p.xi)
            .ok_or_else(|| Error::Scenario("glider panel output unreachable".into()))?;
        let best = swept
            .iter()
            .filter_map(|p| p.xi.map(|x| ((p.dr, p.dc), x)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        argmax.insert(case, best.0);
        // The glider's box one full period ahead (one diagonal step along
        // its direction of travel), in gray-relative offsets.
        trajectory_argmax
            .insert(case, (t0_box.0 + 1 - t1_box.0, t0_box.1 + 1 - t1_box.1));

        // Report the base placement as the panel row.
        let red = square((t0_box.0, t0_box.1), 3);
        let (pk, outcome) = panel_mechanism(&red, &gray, &live)?;
        let m: MipResult = mip(&pk, &outcome)?;
        debug_assert!((m.xi - base_row).abs() < 1e-9);
        rows.push(ChunkingRow {
            case,
            xi: m.xi,
            partition: fmt_partition(&pk, &m.partition.blocks),
        });
        placements.extend(swept);
    }

    Ok(ChunkingReport {
        rows,
        placements,
        argmax,
        trajectory_argmax,
    })
}

pub fn chunking_csv(rep: &ChunkingReport) -> String {
    let mut s = String::from("case,xi,partition\n");
    for r in &rep.rows {
        // `+ 0.0` collapses IEEE negative zero so the CSV is byte-stable.
        writeln!(s, "{},{:.6},\"{}\"", r.case, r.xi + 0.0, r.partition).unwrap();
    }
    s
}

pub fn placements_csv(rep: &ChunkingReport) -> String {
    let mut s = String::from("case,dr,dc,xi\n");
    for p in &rep.placements {
        match p.xi {
            Some(x) => writeln!(s, "{},{},{},{:.6}", p.case, p.dr, p.dc, x + 0.0).unwrap(),
            None => writeln!(s, "{},{},{},", p.case, p.dr, p.dc).unwrap(),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_panel_is_redundant() {
        let red = square((6, 6), 3);
        let (pk, outcome) = panel_mechanism(&red, &red, &BTreeSet::new()).unwrap();
        let m = mip(&pk, &outcome).unwrap();
        assert!(m.xi < 0.0, "blank xi = {}", m.xi);
    }

    #[test]
    fn disjoint_panel_scores_exactly_zero() {
        let red: Vec<(i32, i32)> = [square((2, 2), 4), square((9, 9), 4)].concat();
        let gray: Vec<(i32, i32)> = [square((3, 3), 2), square((10, 10), 2)].concat();
        let (pk, outcome) = panel_mechanism(&red, &gray, &BTreeSet::new()).unwrap();
        let first = |id: &OccasionId| match id.site {
            crate::occasion::Site::Grid { row, .. } => row < 8,
            _ => false,
        };
        let blocks: Vec<Vec<usize>> = vec![
            (0..pk.sources.len()).filter(|&s| first(&pk.sources[s].0)).collect(),
            (0..pk.sources.len()).filter(|&s| !first(&pk.sources[s].0)).collect(),
        ];
        let xi = excess_information_over(&pk, &Partition::new(blocks), &outcome).unwrap();
        assert_eq!(xi, 0.0);
    }
}
