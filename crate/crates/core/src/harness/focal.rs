//! Focal-point sweep: a glider-shaped output window at t = 0, a movable
//! intervention square 20 tics earlier, effective information per square
//! position. The heat map has a focal point on the glider's past position.

use super::bitboard::unit_pair_mechanism;
use crate::error::Result;
use crate::info::{effective_information, ei_or_zero};
use crate::models::gol::{glider_se, glider_se_box_at};
use crate::occasion::OccasionId;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct FocalPointConfig {
    pub width: i32,
    pub height: i32,
    /// Glider phase shown in the output window at t = 0.
    pub phase: usize,
    /// The ground sits at t = -t_span; the movable square at t = -t_span + 1.
    pub t_span: i32,
    /// Side of both the movable square and the output window.
    pub square: i32,
}

impl Default for FocalPointConfig {
    fn default() -> Self {
        // Phase 1 gives the cleanest map on this grid: the trajectory
        // square's preimage is a single pattern, so the sweep has a unique
        // maximum. (Phases 0 and 2 have accidental preimage collisions: a
        // second pattern that reproduces the window content from the
        // trajectory square, plus off-trajectory squares with exactly one
        // debris pattern that happens to match the window.)
        FocalPointConfig {
            width: 32,
            height: 32,
            phase: 1,
            t_span: 21,
            square: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FocalRow {
    /// Center of the movable square at t = -t_span + 1.
    pub row: i32,
    pub col: i32,
    pub ei: f64,
}

#[derive(Debug, Clone)]
pub struct FocalPointResult {
    pub rows: Vec<FocalRow>,
    /// Top-left corner of the output window at t = 0.
    pub window: (i32, i32),
    /// Center of the square position lying on the glider's trajectory.
    pub on_trajectory: (i32, i32),
    pub t_src: i32,
}

/// Sweep the intervention square over the grid. Each position induces one
/// graining: units = the square at `t_src` and the output window at t = 0,
/// ground = blank grid at `t_src - 1`, everything else channel. The output
/// is the glider in the window and blank in the square (its value on the
/// realized all-blank run).
pub fn run_focal_point(cfg: &FocalPointConfig) -> Result<FocalPointResult> {
    let steps = cfg.t_span - 1;
    let t_src = -steps;
    // Output window: glider box at t = 0, placed so the backtracked
    // trajectory stays on-grid.
    let win = (cfg.height - 9, cfg.width - 9);
    let (tr, tc) = glider_se_box_at(t_src, win.0, win.1);
    let half = cfg.square / 2;

    let tgt: Vec<(i32, i32)> = (0..cfg.square)
        .flat_map(|dr| (0..cfg.square).map(move |dc| (win.0 + dr, win.1 + dc)))
        .collect();
    let glider = glider_se(cfg.phase, win.0, win.1);
    let mut x_out: BTreeMap<OccasionId, usize> = BTreeMap::new();
    for &(r, c) in &tgt {
        x_out.insert(OccasionId::grid(r, c, 0), glider.contains(&(r, c)) as usize);
    }

    let centers: Vec<(i32, i32)> = (half..cfg.height - half)
        .flat_map(|r| (half..cfg.width - half).map(move |c| (r, c)))
        .collect();

    let rows: Vec<FocalRow> = centers
        .par_iter()
        .map(|&(r, c)| -> Result<FocalRow> {
            // Outside the light cone (square-to-window Chebyshev gap beyond
            // one cell per tic) interventions cannot reach the window.
            let win_center = (win.0 + half, win.1 + half);
            let d = (r - win_center.0).abs().max((c - win_center.1).abs());
            if d > steps + 2 * half {
                return Ok(FocalRow { row: r, col: c, ei: 0.0 });
            }
            let src: Vec<(i32, i32)> = (-half..=half)
                .flat_map(|dr| (-half..=half).map(move |dc| (r + dr, c + dc)))
                .collect();
            let pk = unit_pair_mechanism(cfg.width, cfg.height, &src, t_src, &tgt, 0)?;
            let mut out = x_out.clone();
            for &(sr, sc) in &src {
                out.insert(OccasionId::grid(sr, sc, t_src), 0);
            }
            let outcome = pk.outcome_from(&out)?;
            let ei = ei_or_zero(effective_information(&pk, &outcome))?;
            Ok(FocalRow { row: r, col: c, ei })
        })
        .collect::<Result<_>>()?;

    Ok(FocalPointResult {
        rows,
        window: win,
        on_trajectory: (tr + half, tc + half),
        t_src,
    })
}

pub fn focal_csv(res: &FocalPointResult) -> String {
    let mut s = String::from("row,col,ei\n");
    for r in &res.rows {
        writeln!(s, "{},{},{:.6}", r.row, r.col, r.ei).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_peaks_on_the_trajectory() {
        // An 18x18 grid with a shorter span keeps the unit test fast; the
        // full-size sweep is exercised by the acceptance suite.
        let cfg = FocalPointConfig {
            width: 18,
            height: 18,
            phase: 0,
            t_span: 9,
            square: 3,
        };
        let res = run_focal_point(&cfg).unwrap();
        let best = res
            .rows
            .iter()
            .max_by(|a, b| a.ei.partial_cmp(&b.ei).unwrap())
            .unwrap();
        assert_eq!((best.row, best.col), res.on_trajectory);
        assert!(best.ei > 0.0);
        assert!(res.rows.iter().all(|r| r.ei >= 0.0));
        // Far corner: outside the light cone.
        let far = res
            .rows
            .iter()
            .find(|r| (r.row, r.col) == (1, 1))
            .unwrap();
        assert_eq!(far.ei, 0.0);
    }
}
