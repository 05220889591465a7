//! Hopfield networks with Hebbian connectivity, unrolled over a time
//! interval, plus the unidirectionally coupled two-network variant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Occasion, OccasionGraph};
use crate::mechanism::{Logistic, Mechanism, Transfer};
use crate::occasion::OccasionId;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HopfieldSpec {
    pub n_cells: usize,
    /// Embedded attractors xi^mu as 0/1 vectors of length `n_cells`.
    pub patterns: Vec<Vec<u8>>,
    pub temperature: f64,
    /// Inclusive time interval `[t_start, t_end]`.
    pub interval: (i32, i32),
    #[serde(default = "default_transfer")]
    pub transfer_variant: Transfer,
    #[serde(default)]
    pub zero_diagonal: bool,
}

fn default_transfer() -> Transfer {
    Transfer::Glauber
}

impl HopfieldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_cells == 0 {
            return Err(Error::Scenario("network has no cells".into()));
        }
        if self.patterns.is_empty() {
            return Err(Error::Scenario("no patterns to embed".into()));
        }
        if self.patterns.iter().any(|p| p.len() != self.n_cells) {
            return Err(Error::Scenario(format!(
                "every pattern must have length {}",
                self.n_cells
            )));
        }
        if self.temperature <= 0.0 || self.temperature.is_nan() {
            return Err(Error::Scenario("temperature must be positive".into()));
        }
        if self.interval.0 >= self.interval.1 {
            return Err(Error::Scenario(format!(
                "empty time interval [{}, {}]",
                self.interval.0, self.interval.1
            )));
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<Vec<f64>> {
        hebbian_weights(&self.patterns, self.zero_diagonal)
    }
}

/// Two networks with a one-way coupling: cells in B at time t receive edges
/// from B *and* A at t-1; A only sees itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoupledHopfieldSpec {
    pub network_a: HopfieldSpec,
    pub network_b: HopfieldSpec,
    /// Scale on the A-to-B Hebbian coupling weights.
    #[serde(default = "default_coupling_scale")]
    pub coupling_scale: f64,
    /// Drop the cell-to-same-cell coupling term.
    #[serde(default)]
    pub coupling_zero_diagonal: bool,
}

fn default_coupling_scale() -> f64 {
    1.0
}

impl CoupledHopfieldSpec {
    pub fn validate(&self) -> Result<()> {
        self.network_a.validate()?;
        self.network_b.validate()?;
        if self.network_a.n_cells != self.network_b.n_cells
            || self.network_a.patterns != self.network_b.patterns
        {
            return Err(Error::Scenario(
                "coupled networks must share size and pattern list".into(),
            ));
        }
        Ok(())
    }

    /// Cell index of A-cell `i` in the combined graph.
    pub fn a_cell(&self, i: usize) -> u32 {
        i as u32
    }

    /// Cell index of B-cell `i` in the combined graph.
    pub fn b_cell(&self, i: usize) -> u32 {
        (self.network_a.n_cells + i) as u32
    }
}

/// Hebbian connectivity: alpha_{jk} = sum_mu (2 xi_j^mu - 1)(2 xi_k^mu - 1).
/// `alpha[k][j]` weights the edge from cell j into cell k.
pub fn hebbian_weights(patterns: &[Vec<u8>], zero_diagonal: bool) -> Vec<Vec<f64>> {
    let n = patterns.first().map(|p| p.len()).unwrap_or(0);
    let mut alpha = vec![vec![0.0; n]; n];
    for pat in patterns {
        for k in 0..n {
            for j in 0..n {
                alpha[k][j] += (2.0 * pat[k] as f64 - 1.0) * (2.0 * pat[j] as f64 - 1.0);
            }
        }
    }
    if zero_diagonal {
        for (k, row) in alpha.iter_mut().enumerate() {
            row[k] = 0.0;
        }
    }
    alpha
}

fn cell_mechanism(
    spec: &HopfieldSpec,
    weights: &[Vec<f64>],
    k: usize,
    inputs: Vec<OccasionId>,
    extra_weights: &[f64],
) -> Mechanism {
    let mut w: Vec<f64> = weights[k]
        .iter()
        .copied()
        .filter(|&wj| wj != 0.0)
        .collect();
    w.extend_from_slice(extra_weights);
    Mechanism::logistic(
        inputs,
        Logistic {
            weights: w,
            bias: 0.0,
            temp: spec.temperature,
            variant: spec.transfer_variant,
        },
    )
}

/// Input edges for cell k of a network whose cells live at `offset..offset+n`,
/// skipping zero-weight connections.
fn in_edges(weights: &[Vec<f64>], k: usize, offset: usize, t: i32) -> Vec<OccasionId> {
    weights[k]
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != 0.0)
        .map(|(j, _)| OccasionId::cell((offset + j) as u32, t))
        .collect()
}

/// Unroll a single network. `initial` fixes every cell at `t_start`.
pub fn unroll_hopfield(spec: &HopfieldSpec, initial: &[u8]) -> Result<OccasionGraph> {
    spec.validate()?;
    if initial.len() != spec.n_cells {
        return Err(Error::Scenario(format!(
            "initial state must bind all {} cells",
            spec.n_cells
        )));
    }
    let weights = spec.weights();
    let (t0, t1) = spec.interval;
    let mut g = OccasionGraph::new();
    for (k, &v) in initial.iter().enumerate() {
        g.insert(
            OccasionId::cell(k as u32, t0),
            Occasion {
                alphabet: 2,
                mechanism: Mechanism::constant(v as usize, 2),
            },
        );
    }
    for t in t0 + 1..=t1 {
        for k in 0..spec.n_cells {
            let inputs = in_edges(&weights, k, 0, t - 1);
            g.insert(
                OccasionId::cell(k as u32, t),
                Occasion {
                    alphabet: 2,
                    mechanism: cell_mechanism(spec, &weights, k, inputs, &[]),
                },
            );
        }
    }
    Ok(g)
}

/// Unroll the coupled pair A -> B. `initial_a`/`initial_b` fix both networks
/// at `t_start`; A-cells come first in the combined index space.
pub fn unroll_coupled_hopfield(
    spec: &CoupledHopfieldSpec,
    initial_a: &[u8],
    initial_b: &[u8],
) -> Result<OccasionGraph> {
    spec.validate()?;
    let n = spec.network_a.n_cells;
    if initial_a.len() != n || initial_b.len() != n {
        return Err(Error::Scenario(format!(
            "initial states must bind all {n} cells of each network"
        )));
    }
    let weights_a = spec.network_a.weights();
    let weights_b = spec.network_b.weights();
    // Coupling from A to B: same Hebbian formula over the shared patterns,
    // diagonal-zeroed only on request (it connects distinct networks), scaled.
    let coupling: Vec<Vec<f64>> =
        hebbian_weights(&spec.network_a.patterns, spec.coupling_zero_diagonal)
        .into_iter()
        .map(|row| row.into_iter().map(|w| w * spec.coupling_scale).collect())
        .collect();

    let (t0, t1) = spec.network_a.interval;
    if spec.network_b.interval != (t0, t1) {
        return Err(Error::Scenario(
            "coupled networks must share the time interval".into(),
        ));
    }
    let mut g = OccasionGraph::new();
    for (k, &v) in initial_a.iter().enumerate() {
        g.insert(
            OccasionId::cell(spec.a_cell(k), t0),
            Occasion {
                alphabet: 2,
                mechanism: Mechanism::constant(v as usize, 2),
            },
        );
    }
    for (k, &v) in initial_b.iter().enumerate() {
        g.insert(
            OccasionId::cell(spec.b_cell(k), t0),
            Occasion {
                alphabet: 2,
                mechanism: Mechanism::constant(v as usize, 2),
            },
        );
    }
    for t in t0 + 1..=t1 {
        for k in 0..n {
            // A sees only A.
            let inputs_a = in_edges(&weights_a, k, 0, t - 1);
            g.insert(
                OccasionId::cell(spec.a_cell(k), t),
                Occasion {
                    alphabet: 2,
                    mechanism: cell_mechanism(&spec.network_a, &weights_a, k, inputs_a, &[]),
                },
            );
            // B sees B (recurrent) plus A (coupling).
            let mut inputs_b = in_edges(&weights_b, k, n, t - 1);
            let coupling_inputs: Vec<OccasionId> = coupling[k]
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(j, _)| OccasionId::cell(spec.a_cell(j), t - 1))
                .collect();
            let coupling_w: Vec<f64> =
                coupling[k].iter().copied().filter(|&w| w != 0.0).collect();
            inputs_b.extend(coupling_inputs);
            g.insert(
                OccasionId::cell(spec.b_cell(k), t),
                Occasion {
                    alphabet: 2,
                    mechanism: cell_mechanism(&spec.network_b, &weights_b, k, inputs_b, &coupling_w),
                },
            );
        }
    }
    Ok(g)
}

/// Parse a binary state string like "01010101".
pub fn parse_state(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(Error::Parse(format!("bad state character `{c}`"))),
        })
        .collect()
}
