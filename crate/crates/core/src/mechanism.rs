use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::alphabet::{Radix, MATERIALIZE_CAP};
use crate::error::{Error, Result};
use crate::occasion::OccasionId;

pub const ROW_SUM_TOL: f64 = 1e-12;

/// A named deterministic map from joint input index to output symbol.
#[derive(Clone)]
pub struct DetFn {
    pub name: String,
    f: Arc<dyn Fn(usize) -> usize + Send + Sync>,
}

impl DetFn {
    pub fn new(name: impl Into<String>, f: impl Fn(usize) -> usize + Send + Sync + 'static) -> Self {
        DetFn {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    #[inline]
    pub fn call(&self, input: usize) -> usize {
        (self.f)(input)
    }
}

impl fmt::Debug for DetFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DetFn({})", self.name)
    }
}

/// Hopfield transfer variants. Eq-style "proportional to" leaves the binary
/// normalizer open; both documented readings are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transfer {
    /// p(1|s) = 1 / (1 + exp(-2u/T)) with u = sum_j w_j * (2 n_j - 1).
    Glauber,
    /// p(1|s) = e^{u/T} / (e^{u/T} + e^{-u/T}) with u = sum_j w_j * n_j.
    ExpRaw,
}

/// Parametric stochastic map for binary-input, binary-output weighted units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Logistic {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub temp: f64,
    pub variant: Transfer,
}

impl Logistic {
    pub fn prob_one(&self, radix: &Radix, input: usize) -> f64 {
        let mut u = self.bias;
        let mut idx = input;
        for slot in (0..self.weights.len()).rev() {
            let s = radix.sizes()[slot];
            let n = (idx % s) as f64;
            idx /= s;
            u += self.weights[slot]
                * match self.variant {
                    Transfer::Glauber => 2.0 * n - 1.0,
                    Transfer::ExpRaw => n,
                };
        }
        // Both variants reduce to 1/(1+exp(-2u/T)) in their own input coding.
        1.0 / (1.0 + (-2.0 * u / self.temp).exp())
    }
}

#[derive(Debug, Clone)]
pub enum MechanismKind {
    /// Dense row-stochastic matrix, rows indexed by joint input,
    /// flattened row-major.
    Table(Vec<f64>),
    /// Deterministic map; behaves identically to its induced 0/1 table.
    Det(DetFn),
    /// Weighted binary unit (Hopfield cells).
    Logistic(Logistic),
}

/// A stochastic map from a joint input alphabet to a finite output alphabet.
#[derive(Debug, Clone)]
pub struct Mechanism {
    /// Ordered input occasions; first-listed is the most significant
    /// mixed-radix digit.
    pub inputs: Vec<OccasionId>,
    pub input_radix: Radix,
    pub output_size: usize,
    pub kind: MechanismKind,
}

impl Mechanism {
    pub fn table(inputs: Vec<OccasionId>, sizes: Vec<usize>, output_size: usize, probs: Vec<f64>) -> Self {
        let radix = Radix::new(sizes);
        debug_assert_eq!(probs.len(), radix.size() * output_size);
        Mechanism {
            inputs,
            input_radix: radix,
            output_size,
            kind: MechanismKind::Table(probs),
        }
    }

    pub fn det(inputs: Vec<OccasionId>, sizes: Vec<usize>, output_size: usize, f: DetFn) -> Self {
        Mechanism {
            inputs,
            input_radix: Radix::new(sizes),
            output_size,
            kind: MechanismKind::Det(f),
        }
    }

    /// A prior: no inputs, fixed distribution over outputs.
    pub fn prior(probs: Vec<f64>) -> Self {
        let n = probs.len();
        Mechanism::table(vec![], vec![], n, probs)
    }

    /// A constant occasion (e.g. a fixed initial condition).
    pub fn constant(value: usize, output_size: usize) -> Self {
        Mechanism::det(
            vec![],
            vec![],
            output_size,
            DetFn::new(format!("const:{value}"), move |_| value),
        )
    }

    /// Weighted binary unit over binary inputs (Hopfield cells).
    pub fn logistic(inputs: Vec<OccasionId>, logistic: Logistic) -> Self {
        assert_eq!(inputs.len(), logistic.weights.len());
        let sizes = vec![2; inputs.len()];
        Mechanism {
            inputs,
            input_radix: Radix::new(sizes),
            output_size: 2,
            kind: MechanismKind::Logistic(logistic),
        }
    }

    pub fn input_size(&self) -> usize {
        self.input_radix.size()
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.kind, MechanismKind::Det(_))
    }

    /// Output symbol if deterministic.
    #[inline]
    pub fn det_eval(&self, input: usize) -> Option<usize> {
        match &self.kind {
            MechanismKind::Det(f) => Some(f.call(input)),
            _ => None,
        }
    }

    pub fn prob(&self, input: usize, output: usize) -> f64 {
        match &self.kind {
            MechanismKind::Table(t) => t[input * self.output_size + output],
            MechanismKind::Det(f) => {
                if f.call(input) == output {
                    1.0
                } else {
                    0.0
                }
            }
            MechanismKind::Logistic(l) => {
                let p1 = l.prob_one(&self.input_radix, input);
                if output == 1 {
                    p1
                } else {
                    1.0 - p1
                }
            }
        }
    }

    pub fn row(&self, input: usize) -> Vec<f64> {
        (0..self.output_size).map(|o| self.prob(input, o)).collect()
    }

    /// Check row-stochasticity and entry ranges.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if let MechanismKind::Table(t) = &self.kind {
            let rows = self.input_size();
            if t.len() != rows * self.output_size {
                issues.push(format!(
                    "table has {} entries, expected {}",
                    t.len(),
                    rows * self.output_size
                ));
                return issues;
            }
            for r in 0..rows {
                let row = &t[r * self.output_size..(r + 1) * self.output_size];
                if row.iter().any(|&p| !(0.0..=1.0 + ROW_SUM_TOL).contains(&p)) {
                    issues.push(format!("row {r} has entries outside [0,1]"));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    issues.push(format!("non-stochastic row {r}: sums to {sum}"));
                }
            }
        }
        issues
    }

    /// Fix the given input slots to the given symbols.
    pub fn bind(&self, bound: &[(usize, usize)]) -> Mechanism {
        if bound.is_empty() {
            return self.clone();
        }
        let bound_slots: Vec<usize> = bound.iter().map(|&(s, _)| s).collect();
        let kept_slots: Vec<usize> = (0..self.inputs.len())
            .filter(|s| !bound_slots.contains(s))
            .collect();
        let kept_inputs: Vec<OccasionId> = kept_slots.iter().map(|&s| self.inputs[s]).collect();
        let kept_radix = self.input_radix.project(&kept_slots);
        let full = self.input_radix.clone();

        // Joint index with bound digits pre-filled, as a function of the
        // kept joint index.
        let mut base_digits = vec![0usize; full.len()];
        for &(slot, val) in bound {
            base_digits[slot] = val;
        }
        let kept_for_remap = kept_slots.clone();
        let remap = move |kept: usize| {
            let mut digits = base_digits.clone();
            full.scatter(&kept_for_remap, kept, &mut digits);
            full.encode(&digits)
        };

        let kind = match &self.kind {
            MechanismKind::Table(t) => {
                let out = self.output_size;
                let mut probs = Vec::with_capacity(kept_radix.size() * out);
                for kept in 0..kept_radix.size() {
                    let r = remap(kept);
                    probs.extend_from_slice(&t[r * out..(r + 1) * out]);
                }
                MechanismKind::Table(probs)
            }
            MechanismKind::Det(f) => {
                let f = f.clone();
                MechanismKind::Det(DetFn::new(format!("{}[bound]", f.name), move |kept| {
                    f.call(remap(kept))
                }))
            }
            MechanismKind::Logistic(l) => {
                let mut l = l.clone();
                for &(slot, val) in bound {
                    let n = val as f64;
                    l.bias += l.weights[slot]
                        * match l.variant {
                            Transfer::Glauber => 2.0 * n - 1.0,
                            Transfer::ExpRaw => n,
                        };
                }
                let mut weights = Vec::with_capacity(kept_slots.len());
                for &s in &kept_slots {
                    weights.push(l.weights[s]);
                }
                l.weights = weights;
                MechanismKind::Logistic(l)
            }
        };
        Mechanism {
            inputs: kept_inputs,
            input_radix: kept_radix,
            output_size: self.output_size,
            kind,
        }
    }

    /// Average the given input slots out under the uniform distribution,
    /// materializing a dense table over the kept slots.
    pub fn marginalize_uniform(&self, drop_slots: &[usize]) -> Result<Mechanism> {
        if drop_slots.is_empty() {
            return Ok(self.clone());
        }
        let kept_slots: Vec<usize> = (0..self.inputs.len())
            .filter(|s| !drop_slots.contains(s))
            .collect();
        let kept_inputs: Vec<OccasionId> = kept_slots.iter().map(|&s| self.inputs[s]).collect();
        let kept_radix = self.input_radix.project(&kept_slots);
        let drop_radix = self.input_radix.project(drop_slots);

        let kept_n = kept_radix.size_capped(MATERIALIZE_CAP, "marginalized mechanism rows")?;
        let drop_n = drop_radix.size_capped(MATERIALIZE_CAP, "marginalization sweep")?;
        let out = self.output_size;

        let mut probs = vec![0.0; kept_n * out];
        let w = 1.0 / drop_n as f64;
        let mut digits = vec![0usize; self.input_radix.len()];
        for kept in 0..kept_n {
            self.input_radix.scatter(&kept_slots, kept, &mut digits);
            for dropped in 0..drop_n {
                self.input_radix.scatter(drop_slots, dropped, &mut digits);
                let full = self.input_radix.encode(&digits);
                match self.det_eval(full) {
                    Some(o) => probs[kept * out + o] += w,
                    None => {
                        for o in 0..out {
                            probs[kept * out + o] += w * self.prob(full, o);
                        }
                    }
                }
            }
        }
        Ok(Mechanism::table(
            kept_inputs,
            kept_radix.sizes().to_vec(),
            out,
            probs,
        ))
    }

    /// Materialize any kind as a dense table (subject to the global cap).
    pub fn materialize(&self) -> Result<Mechanism> {
        if let MechanismKind::Table(_) = self.kind {
            return Ok(self.clone());
        }
        let rows = self
            .input_radix
            .size_capped(MATERIALIZE_CAP, "mechanism table rows")?;
        let out = self.output_size;
        let mut probs = vec![0.0; rows * out];
        for r in 0..rows {
            match self.det_eval(r) {
                Some(o) => probs[r * out + o] = 1.0,
                None => {
                    for o in 0..out {
                        probs[r * out + o] = self.prob(r, o);
                    }
                }
            }
        }
        Ok(Mechanism::table(
            self.inputs.clone(),
            self.input_radix.sizes().to_vec(),
            out,
            probs,
        ))
    }
}

// ---------------------------------------------------------------------------
// Registered deterministic functions (for serialization by name).
// ---------------------------------------------------------------------------

/// Resolve a registered deterministic function name.
///
/// Known names:
/// * `const:<v>` — constant output `v`;
/// * `identity` — single input copied to output;
/// * `gol:<k>` — Game-of-Life rule over binary inputs `[self, n1..nk]`
///   (slot 0 is the cell's own previous output, the rest its neighbors);
/// * `xor:<k>` / `and:<k>` / `or:<k>` — parity / conjunction / disjunction
///   of `k` binary inputs.
pub fn resolve_det_fn(name: &str, n_inputs: usize) -> Result<DetFn> {
    if let Some(v) = name.strip_prefix("const:") {
        let v: usize = v
            .parse()
            .map_err(|_| Error::UnknownFunction(name.to_string()))?;
        return Ok(DetFn::new(name.to_string(), move |_| v));
    }
    if name == "identity" {
        return Ok(DetFn::new("identity", |i| i));
    }
    let parse_k = |tag: &str| -> Result<usize> {
        name.strip_prefix(tag)
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| Error::UnknownFunction(name.to_string()))
    };
    if name.starts_with("gol:") {
        let k = parse_k("gol:")?;
        if k + 1 != n_inputs {
            return Err(Error::UnknownFunction(format!(
                "{name} expects {} inputs, got {n_inputs}",
                k + 1
            )));
        }
        return Ok(DetFn::new(name.to_string(), move |idx| gol_rule(idx, k)));
    }
    if name.starts_with("xor:") {
        parse_k("xor:")?;
        return Ok(DetFn::new(name.to_string(), move |idx| {
            (idx.count_ones() as usize) % 2
        }));
    }
    if name.starts_with("and:") {
        let k = parse_k("and:")?;
        let full = (1usize << k) - 1;
        return Ok(DetFn::new(name.to_string(), move |idx| {
            usize::from(idx & full == full)
        }));
    }
    if name.starts_with("or:") {
        parse_k("or:")?;
        return Ok(DetFn::new(name.to_string(), move |idx| usize::from(idx != 0)));
    }
    Err(Error::UnknownFunction(name.to_string()))
}

/// The Game-of-Life update applied to a binary joint index whose most
/// significant bit (slot 0) is the cell itself and whose remaining `k` bits
/// are neighbors: output 1 iff 3 neighbors fired, or the cell and exactly 2
/// neighbors fired.
#[inline]
pub fn gol_rule(idx: usize, k: usize) -> usize {
    let self_bit = (idx >> k) & 1;
    let live = (idx & ((1 << k) - 1)).count_ones();
    usize::from(live == 3 || (self_bit == 1 && live == 2))
}

// ---------------------------------------------------------------------------
// Serde: mechanisms serialize as `{"kind": "...", ...}`. Deterministic model
// mechanisms serialize by registered function name, not by table.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub(crate) struct MechanismRepr {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    logistic: Option<Logistic>,
}

impl Mechanism {
    pub(crate) fn to_repr(&self) -> MechanismRepr {
        match &self.kind {
            MechanismKind::Table(t) => MechanismRepr {
                kind: "table".into(),
                rows: Some(
                    t.chunks(self.output_size)
                        .map(|row| row.to_vec())
                        .collect(),
                ),
                logistic: None,
            },
            MechanismKind::Det(f) => MechanismRepr {
                kind: format!("fn:{}", f.name),
                rows: None,
                logistic: None,
            },
            MechanismKind::Logistic(l) => MechanismRepr {
                kind: "logistic".into(),
                rows: None,
                logistic: Some(l.clone()),
            },
        }
    }

    pub(crate) fn from_repr(
        repr: MechanismRepr,
        inputs: Vec<OccasionId>,
        sizes: Vec<usize>,
        output_size: usize,
    ) -> Result<Mechanism> {
        let kind = if repr.kind == "table" {
            let rows = repr
                .rows
                .ok_or_else(|| Error::Parse("table mechanism missing rows".into()))?;
            MechanismKind::Table(rows.into_iter().flatten().collect())
        } else if repr.kind == "logistic" {
            MechanismKind::Logistic(
                repr.logistic
                    .ok_or_else(|| Error::Parse("logistic mechanism missing parameters".into()))?,
            )
        } else if let Some(name) = repr.kind.strip_prefix("fn:") {
            MechanismKind::Det(resolve_det_fn(name, inputs.len())?)
        } else {
            return Err(Error::Parse(format!("unknown mechanism kind `{}`", repr.kind)));
        };
        let m = Mechanism {
            inputs,
            input_radix: Radix::new(sizes),
            output_size,
            kind,
        };
        let issues = m.validate();
        if !issues.is_empty() {
            return Err(Error::Parse(format!("invalid mechanism: {}", issues.join("; "))));
        }
        Ok(m)
    }
}
