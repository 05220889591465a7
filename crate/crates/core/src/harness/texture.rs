//! Macro-alphabet sweep: two filled squares at diagonal distance n and
//! time separation 4n on a blank-ground grid; the source square's
//! macro-alphabet shrinks as n grows, stabilizing at the symbols that
//! survive the trip (blank plus the four glider phases).

use super::bitboard::unit_pair_mechanism;
use crate::alphabet::Radix;
use crate::error::Result;
use crate::grain::{macro_alphabet, GrainingSpec};
use crate::graph::Assignment;
use crate::models::gol::{parse_cells, GLIDER_SE};
use crate::occasion::OccasionId;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct MacroAlphabetConfig {
    pub width: i32,
    pub height: i32,
    pub sizes: Vec<i32>,
    pub distances: Vec<i32>,
}

impl Default for MacroAlphabetConfig {
    fn default() -> Self {
        MacroAlphabetConfig {
            width: 48,
            height: 48,
            sizes: vec![3, 4],
            distances: (1..=8).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MacroAlphabetRow {
    pub size: i32,
    pub n: i32,
    /// Number of macro-classes of the source square.
    pub count: usize,
    /// Macro-class of the all-blank source pattern.
    pub blank_class: usize,
    /// Macro-class of each glider phase placed in the source square.
    pub phase_classes: [usize; 4],
}

/// For each square size and distance n, build the source square at
/// t = -4n and the target square at t = 0, displaced (n, n), and compute
/// the source's macro-alphabet.
pub fn run_macro_alphabet(cfg: &MacroAlphabetConfig) -> Result<Vec<MacroAlphabetRow>> {
    let mut jobs: Vec<(i32, i32)> = Vec::new();
    for &s in &cfg.sizes {
        for &n in &cfg.distances {
            jobs.push((s, n));
        }
    }
    let mut rows: Vec<MacroAlphabetRow> = jobs
        .par_iter()
        .map(|&(s, n)| macro_alphabet_at(cfg, s, n))
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| (r.size, r.n));
    Ok(rows)
}

fn macro_alphabet_at(cfg: &MacroAlphabetConfig, s: i32, n: i32) -> Result<MacroAlphabetRow> {
    // The glider trajectory runs through box (29, 29) at t = 0; bigger
    // squares extend up-left so the glider box stays inside.
    let g0 = (cfg.height / 2 + 5, cfg.width / 2 + 5);
    let tgt0 = (g0.0 - (s - 3), g0.1 - (s - 3));
    let src0 = (tgt0.0 - n, tgt0.1 - n);
    let t_src = -4 * n;

    let cells = |top: (i32, i32)| -> Vec<(i32, i32)> {
        (0..s)
            .flat_map(|dr| (0..s).map(move |dc| (top.0 + dr, top.1 + dc)))
            .collect()
    };
    let src = cells(src0);
    let tgt = cells(tgt0);
    let pk = unit_pair_mechanism(cfg.width, cfg.height, &src, t_src, &tgt, 0)?;

    let unit = |cs: &[(i32, i32)], t: i32| -> BTreeSet<OccasionId> {
        cs.iter().map(|&(r, c)| OccasionId::grid(r, c, t)).collect()
    };
    let spec = GrainingSpec {
        ground: BTreeSet::new(),
        channel: BTreeSet::new(),
        units: vec![unit(&src, t_src), unit(&tgt, 0)],
        ground_output: Assignment::new(),
    };
    let alpha = macro_alphabet(&pk, &spec, 0)?;

    // Micro-symbols of interest: blank, and each glider phase placed with
    // its box at the square's down-right 3x3 corner (on the trajectory).
    let radix = Radix::new(vec![2; (s * s) as usize]);
    let symbol = |live: &BTreeSet<(i32, i32)>| -> usize {
        let digits: Vec<usize> = src
            .iter()
            .map(|cell| live.contains(cell) as usize)
            .collect();
        radix.encode(&digits)
    };
    let blank_class = alpha.class_of[symbol(&BTreeSet::new())];
    let gsrc = (src0.0 + (s - 3), src0.1 + (s - 3));
    let mut phase_classes = [0usize; 4];
    for (p, pat) in GLIDER_SE.iter().enumerate() {
        let live: BTreeSet<(i32, i32)> = parse_cells(pat)
            .into_iter()
            .map(|(r, c)| (r + gsrc.0, c + gsrc.1))
            .collect();
        phase_classes[p] = alpha.class_of[symbol(&live)];
    }
    Ok(MacroAlphabetRow {
        size: s,
        n,
        count: alpha.classes.len(),
        blank_class,
        phase_classes,
    })
}

pub fn macro_alphabet_csv(rows: &[MacroAlphabetRow]) -> String {
    let mut s = String::from("size,n,classes,blank_class,phase0,phase1,phase2,phase3\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.size,
            r.n,
            r.count,
            r.blank_class,
            r.phase_classes[0],
            r.phase_classes[1],
            r.phase_classes[2],
            r.phase_classes[3]
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn far_3x3_square_keeps_blank_and_the_four_phases() {
        // A reduced grid with one long distance; the full Fig.-5 sweep runs
        // in the acceptance suite.
        let cfg = MacroAlphabetConfig {
            width: 48,
            height: 48,
            sizes: vec![3],
            distances: vec![7],
        };
        let rows = run_macro_alphabet(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!(r.count, 5);
        let mut distinct: BTreeSet<usize> = r.phase_classes.iter().copied().collect();
        assert_eq!(distinct.len(), 4);
        assert!(!distinct.contains(&r.blank_class));
        distinct.insert(r.blank_class);
        assert_eq!(distinct.len(), 5);
    }
}
