//! Bit-parallel Game of Life stepping on a fixed-blank grid, used by the
//! experiment presets to build unit-pair mechanisms by exhaustive sweeps
//! over source patterns. One `u64` per row, so grids up to 64 columns.

use crate::alphabet::Radix;
use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::occasion::OccasionId;
use crate::submech::{Factor, SubMechanism};

/// A finite grid state; cell (r, c) is bit c of row r. Everything outside
/// the grid is permanently blank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitboard {
    pub width: i32,
    pub height: i32,
    rows: Vec<u64>,
    mask: u64,
}

impl Bitboard {
    pub fn blank(width: i32, height: i32) -> Result<Bitboard> {
        if !(1..=64).contains(&width) || height < 1 {
            return Err(Error::Scenario(format!(
                "bitboard grids need 1..=64 columns and >=1 rows, got {width}x{height}"
            )));
        }
        let mask = if width == 64 { !0 } else { (1u64 << width) - 1 };
        Ok(Bitboard {
            width,
            height,
            rows: vec![0; height as usize],
            mask,
        })
    }

    pub fn get(&self, row: i32, col: i32) -> bool {
        if row < 0 || row >= self.height || col < 0 || col >= self.width {
            return false;
        }
        self.rows[row as usize] >> col & 1 == 1
    }

    pub fn set(&mut self, row: i32, col: i32, live: bool) {
        debug_assert!(row >= 0 && row < self.height && col >= 0 && col < self.width);
        if live {
            self.rows[row as usize] |= 1 << col;
        } else {
            self.rows[row as usize] &= !(1 << col);
        }
    }

    /// One tic of B3/S23 with a fixed blank boundary.
    pub fn step(&self) -> Bitboard {
        let mut out = self.clone();
        for r in 0..self.height as usize {
            let above = if r > 0 { self.rows[r - 1] } else { 0 };
            let below = if r + 1 < self.rows.len() {
                self.rows[r + 1]
            } else {
                0
            };
            let here = self.rows[r];
            // Carry-save sum of the eight neighbor masks: `ones`, `twos`,
            // `fours` hold the bits of the per-cell neighbor count.
            let (mut ones, mut twos, mut fours) = (0u64, 0u64, 0u64);
            for m in [
                above << 1,
                above,
                above >> 1,
                here << 1,
                here >> 1,
                below << 1,
                below,
                below >> 1,
            ] {
                let m = m & self.mask;
                let c1 = ones & m;
                ones ^= m;
                let c2 = twos & c1;
                twos ^= c1;
                fours |= c2;
            }
            let three = !fours & twos & ones;
            let two = !fours & twos & !ones;
            out.rows[r] = (three | (here & two)) & self.mask;
        }
        out
    }

    pub fn step_n(&self, n: u32) -> Bitboard {
        let mut b = self.clone();
        for _ in 0..n {
            b = b.step();
        }
        b
    }

    pub fn is_blank(&self) -> bool {
        self.rows.iter().all(|&r| r == 0)
    }
}

/// The joint mechanism of a source unit at `t_src` and a target unit at
/// `t_tgt` on an otherwise blank fixed-boundary grid, built by sweeping
/// every source pattern through the deterministic dynamics.
///
/// Matches `marginalize_channel` on the corresponding unrolled graph with
/// ground = blank grid at `t_src - 1` and everything else channel: sources
/// are the source-unit occasions (sorted) followed by the target-unit
/// occasions (sorted); factors are blank constants for the source occasions
/// (their output on the realized blank run) and the swept conditional
/// tables for the target occasions.
pub fn unit_pair_mechanism(
    width: i32,
    height: i32,
    src_cells: &[(i32, i32)],
    t_src: i32,
    tgt_cells: &[(i32, i32)],
    t_tgt: i32,
) -> Result<SubMechanism> {
    if t_tgt <= t_src {
        return Err(Error::Scenario(
            "target time must come after source time".into(),
        ));
    }
    let in_bounds =
        |&(r, c): &(i32, i32)| r >= 0 && r < height && c >= 0 && c < width;
    if !src_cells.iter().all(in_bounds) || !tgt_cells.iter().all(in_bounds) {
        return Err(Error::Scenario("unit cells fall outside the grid".into()));
    }
    let mut src: Vec<(i32, i32)> = src_cells.to_vec();
    let mut tgt: Vec<(i32, i32)> = tgt_cells.to_vec();
    src.sort_unstable();
    src.dedup();
    tgt.sort_unstable();
    tgt.dedup();

    let src_ids: Vec<OccasionId> = src
        .iter()
        .map(|&(r, c)| OccasionId::grid(r, c, t_src))
        .collect();
    let tgt_ids: Vec<OccasionId> = tgt
        .iter()
        .map(|&(r, c)| OccasionId::grid(r, c, t_tgt))
        .collect();

    let n_src = src.len();
    let radix = Radix::new(vec![2; n_src]);
    let n_in = radix.size_capped(1 << 22, "source patterns")?;
    let steps = (t_tgt - t_src) as u32;

    // One deterministic run per source pattern fills every target table.
    let mut tables = vec![vec![0.0f64; n_in * 2]; tgt.len()];
    let mut digits = vec![0usize; n_src];
    for input in 0..n_in {
        radix.decode_into(input, &mut digits);
        let mut b = Bitboard::blank(width, height)?;
        for (&(r, c), &d) in src.iter().zip(&digits) {
            b.set(r, c, d == 1);
        }
        let b = b.step_n(steps);
        for (j, &(r, c)) in tgt.iter().enumerate() {
            let out = b.get(r, c) as usize;
            tables[j][input * 2 + out] = 1.0;
        }
    }

    let mut sources: Vec<(OccasionId, usize)> =
        src_ids.iter().map(|&id| (id, 2)).collect();
    sources.extend(tgt_ids.iter().map(|&id| (id, 2)));

    let mut factors: Vec<Factor> = src_ids
        .iter()
        .map(|&id| Factor {
            target: (id, 2),
            slots: vec![],
            mech: Mechanism::constant(0, 2),
        })
        .collect();
    for (j, &id) in tgt_ids.iter().enumerate() {
        factors.push(Factor {
            target: (id, 2),
            slots: (0..n_src).collect(),
            mech: Mechanism::table(
                src_ids.clone(),
                vec![2; n_src],
                2,
                std::mem::take(&mut tables[j]),
            ),
        });
    }
    Ok(SubMechanism::new(sources, factors))
}
