//! Conway's Game of Life unrolled over a time interval into an occasion
//! graph: one binary occasion per (cell, tic), edges from the 9-cell Moore
//! neighborhood at t-1, and the standard birth/survival rule as a
//! deterministic mechanism.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Assignment, Occasion, OccasionGraph};
use crate::mechanism::{resolve_det_fn, Mechanism};
use crate::occasion::OccasionId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// The grid is padded with permanently dead cells.
    FixedBlank,
    /// Rows and columns wrap around.
    Toroidal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GolSpec {
    pub width: i32,
    pub height: i32,
    pub boundary: Boundary,
    /// Inclusive time interval `[t_start, t_end]`.
    pub interval: (i32, i32),
}

impl GolSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 3 || self.height < 3 {
            return Err(Error::Scenario(format!(
                "grid must be at least 3x3, got {}x{}",
                self.width, self.height
            )));
        }
        if self.interval.0 >= self.interval.1 {
            return Err(Error::Scenario(format!(
                "empty time interval [{}, {}]",
                self.interval.0, self.interval.1
            )));
        }
        Ok(())
    }

    /// Moore neighbors of (row, col) that exist under the boundary rule,
    /// self excluded.
    pub fn neighbors(&self, row: i32, col: i32) -> Vec<(i32, i32)> {
        let mut out = Vec::with_capacity(8);
        for dr in -1..=1 {
            for dc in -1..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (r, c) = (row + dr, col + dc);
                match self.boundary {
                    Boundary::FixedBlank => {
                        if r >= 0 && r < self.height && c >= 0 && c < self.width {
                            out.push((r, c));
                        }
                    }
                    Boundary::Toroidal => {
                        out.push((r.rem_euclid(self.height), c.rem_euclid(self.width)));
                    }
                }
            }
        }
        out
    }

    pub fn cells(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        (0..self.height).flat_map(move |r| (0..self.width).map(move |c| (r, c)))
    }
}

/// Unroll the automaton. `initial`, if given, fixes the `t_start` occasions
/// as constants (live-cell set); otherwise they are uniform noise sources.
pub fn unroll_gol(spec: &GolSpec, initial: Option<&BTreeSet<(i32, i32)>>) -> Result<OccasionGraph> {
    spec.validate()?;
    if let Some(live) = initial {
        for &(r, c) in live {
            if r < 0 || r >= spec.height || c < 0 || c >= spec.width {
                return Err(Error::Scenario(format!(
                    "initial live cell ({r},{c}) is outside the {}x{} grid",
                    spec.height, spec.width
                )));
            }
        }
    }
    let (t0, t1) = spec.interval;
    let mut g = OccasionGraph::new();
    for (r, c) in spec.cells() {
        let mechanism = match initial {
            Some(live) => Mechanism::constant(live.contains(&(r, c)) as usize, 2),
            None => Mechanism::prior(vec![0.5, 0.5]),
        };
        g.insert(OccasionId::grid(r, c, t0), Occasion { alphabet: 2, mechanism });
    }
    for t in t0 + 1..=t1 {
        for (r, c) in spec.cells() {
            // Self first, then the surviving neighbors; the rule function
            // treats slot 0 as the cell's own previous output.
            let mut inputs = vec![OccasionId::grid(r, c, t - 1)];
            inputs.extend(
                spec.neighbors(r, c)
                    .into_iter()
                    .map(|(nr, nc)| OccasionId::grid(nr, nc, t - 1)),
            );
            let k = inputs.len() - 1;
            let sizes = vec![2; inputs.len()];
            let f = resolve_det_fn(&format!("gol:{k}"), inputs.len())?;
            g.insert(
                OccasionId::grid(r, c, t),
                Occasion {
                    alphabet: 2,
                    mechanism: Mechanism::det(inputs, sizes, 2, f),
                },
            );
        }
    }
    Ok(g)
}

/// Assignment fixing the whole grid at time `t` to the given live-cell set.
pub fn grid_assignment(spec: &GolSpec, t: i32, live: &BTreeSet<(i32, i32)>) -> Assignment {
    spec.cells()
        .map(|(r, c)| (OccasionId::grid(r, c, t), live.contains(&(r, c)) as usize))
        .collect()
}

/// Parse a compact cell picture: rows separated by `/`, `O` alive, `.` dead.
/// Returns (row, col) offsets of live cells.
pub fn parse_cells(s: &str) -> Vec<(i32, i32)> {
    let mut out = Vec::new();
    for (r, row) in s.split('/').enumerate() {
        for (c, ch) in row.chars().enumerate() {
            if ch == 'O' {
                out.push((r as i32, c as i32));
            }
        }
    }
    out
}

/// The four phases of a south-east-moving glider, all in a 3x3 bounding box.
/// Phase `p+1` is one tic after phase `p`; after four tics the box content
/// repeats one square down-right.
pub const GLIDER_SE: [&str; 4] = [".O./..O/OOO", "O.O/.OO/.O.", "..O/O.O/.OO", "O../.OO/OO."];

/// Box displacement of the glider's 3x3 bounding box going from phase `p`
/// to phase `p+1` (row delta, col delta).
pub const GLIDER_SE_STEP: [(i32, i32); 4] = [(1, 0), (0, 0), (0, 1), (0, 0)];

/// Live cells of glider phase `p` with its bounding box's top-left corner
/// at (row, col).
pub fn glider_se(phase: usize, row: i32, col: i32) -> BTreeSet<(i32, i32)> {
    parse_cells(GLIDER_SE[phase % 4])
        .into_iter()
        .map(|(r, c)| (r + row, c + col))
        .collect()
}

/// Top-left corner of the bounding box of phase `t mod 4` at time `t`,
/// given the box of phase 0 at t = 0. The glider moves one square
/// down-right every four tics.
pub fn glider_se_box_at(t: i32, row0: i32, col0: i32) -> (i32, i32) {
    let (mut r, mut c) = (row0, col0);
    if t >= 0 {
        for s in 0..t {
            let (dr, dc) = GLIDER_SE_STEP[(s.rem_euclid(4)) as usize];
            r += dr;
            c += dc;
        }
    } else {
        for s in (t..0).rev() {
            let (dr, dc) = GLIDER_SE_STEP[(s.rem_euclid(4)) as usize];
            r -= dr;
            c -= dc;
        }
    }
    (r, c)
}
