//! Ising-encoded problem instances.
//!
//! An instance stores the problem Hamiltonian
//!
//! ```text
//! H_Z = offset - sum_i [ h_i + sum_{j>i} J_ij Z_j ] Z_i
//! ```
//!
//! in units where the transverse field is one. Spin `i` of an [`Assignment`]
//! is the eigenvalue of `Z_i`; in state-vector layouts bit `i` of a basis
//! index is `0` for `+1` and `1` for `-1`.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest instance [`brute_force_optimum`] accepts by default.
pub const BRUTE_FORCE_GUARD: usize = 24;

/// Energies closer than this (relative to `max(1, |E|)`) count as degenerate.
pub const ENERGY_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "InstanceFile", try_from = "InstanceFile")]
pub struct IsingInstance {
    n: usize,
    /// Dense row-major `n x n`, symmetric, zero diagonal.
    couplings: Vec<f64>,
    fields: Vec<f64>,
    pub offset: f64,
    pub label: Option<String>,
    pub seed: Option<u64>,
}

impl IsingInstance {
    /// Builds an instance from fields and a dense coupling matrix.
    ///
    /// The matrix must already be symmetric with a zero diagonal.
    pub fn new(fields: Vec<f64>, couplings: Vec<f64>, offset: f64) -> Result<Self> {
        let n = fields.len();
        if n == 0 {
            return Err(invalid("an instance needs at least one spin"));
        }
        if couplings.len() != n * n {
            return Err(invalid(format!(
                "coupling matrix has {} entries, expected {}",
                couplings.len(),
                n * n
            )));
        }
        if !offset.is_finite() || fields.iter().any(|v| !v.is_finite()) {
            return Err(invalid("fields and offset must be finite"));
        }
        for i in 0..n {
            if couplings[i * n + i] != 0.0 {
                return Err(invalid(format!("J[{i}][{i}] must be zero")));
            }
            for j in (i + 1)..n {
                let (a, b) = (couplings[i * n + j], couplings[j * n + i]);
                if !a.is_finite() || a != b {
                    return Err(invalid(format!("J[{i}][{j}] is not finite and symmetric")));
                }
            }
        }
        Ok(Self {
            n,
            couplings,
            fields,
            offset,
            label: None,
            seed: None,
        })
    }

    /// Builds an instance from a sparse upper-triangle coupling list.
    /// Repeated pairs accumulate.
    pub fn from_pairs(
        fields: Vec<f64>,
        pairs: &[(usize, usize, f64)],
        offset: f64,
    ) -> Result<Self> {
        let n = fields.len();
        let mut couplings = vec![0.0; n * n];
        for &(i, j, v) in pairs {
            if i >= n || j >= n || i == j {
                return Err(invalid(format!(
                    "coupling ({i}, {j}) is out of range or diagonal"
                )));
            }
            couplings[i * n + j] += v;
            couplings[j * n + i] += v;
        }
        Self::new(fields, couplings, offset)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn field(&self, i: usize) -> f64 {
        self.fields[i]
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings[i * self.n + j]
    }

    /// Row `i` of the coupling matrix.
    pub fn coupling_row(&self, i: usize) -> &[f64] {
        &self.couplings[i * self.n..(i + 1) * self.n]
    }

    /// Largest absolute coupling or field; zero for the empty problem.
    pub fn scale(&self) -> f64 {
        self.couplings
            .iter()
            .chain(self.fields.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk JSON layout: `J` lists `[i, j, value]` with `i < j`, 0-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceFile {
    n: usize,
    h: Vec<f64>,
    #[serde(rename = "J")]
    j: Vec<(usize, usize, f64)>,
    #[serde(default)]
    offset: f64,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
}

impl From<IsingInstance> for InstanceFile {
    fn from(inst: IsingInstance) -> Self {
        Self::from(&inst)
    }
}

impl From<&IsingInstance> for InstanceFile {
    fn from(inst: &IsingInstance) -> Self {
        let n = inst.n;
        let mut j = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                let v = inst.coupling(a, b);
                if v != 0.0 {
                    j.push((a, b, v));
                }
            }
        }
        Self {
            n,
            h: inst.fields.clone(),
            j,
            offset: inst.offset,
            label: inst.label.clone(),
            seed: inst.seed,
        }
    }
}

impl TryFrom<InstanceFile> for IsingInstance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Self> {
        if file.h.len() != file.n {
            return Err(invalid(format!(
                "instance declares n = {} but lists {} fields",
                file.n,
                file.h.len()
            )));
        }
        if let Some(&(i, j, _)) = file.j.iter().find(|(i, j, _)| i >= j) {
            return Err(invalid(format!(
                "coupling entry [{i}, {j}] must have i < j"
            )));
        }
        let mut inst = IsingInstance::from_pairs(file.h, &file.j, file.offset)?;
        inst.label = file.label;
        inst.seed = file.seed;
        Ok(inst)
    }
}

/// A classical spin configuration with entries in `{+1, -1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(Vec<i8>);

impl Assignment {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(invalid(format!("spin value {bad} is not +1 or -1")));
        }
        Ok(Self(spins))
    }

    /// Decodes a basis index: bit `i` set means spin `i` is `-1`.
    pub fn from_index(n: usize, index: usize) -> Self {
        Self(
            (0..n)
                .map(|i| if index >> i & 1 == 1 { -1 } else { 1 })
                .collect(),
        )
    }

    pub fn to_index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == -1)
            .fold(0, |acc, (i, _)| acc | 1 << i)
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Samples a Sherrington-Kirkpatrick instance: fields `h_i` and couplings
/// `J_ij` (`i < j`) are i.i.d. standard normal. Fields are drawn first, then
/// the upper triangle in row-major order.
pub fn generate_sk(n: usize, seed: u64) -> Result<IsingInstance> {
    if n < 2 {
        return Err(invalid(format!("SK instances need n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut couplings = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = StandardNormal.sample(&mut rng);
            couplings[i * n + j] = v;
            couplings[j * n + i] = v;
        }
    }
    let mut inst = IsingInstance::new(fields, couplings, 0.0)?;
    inst.label = Some(format!("sk-n{n}-seed{seed}"));
    inst.seed = Some(seed);
    Ok(inst)
}

/// `offset - sum_i [h_i + sum_{j>i} J_ij a_j] a_i`.
pub fn energy(inst: &IsingInstance, a: &Assignment) -> Result<f64> {
    if a.len() != inst.n {
        return Err(invalid(format!(
            "assignment has {} spins, instance has {}",
            a.len(),
            inst.n
        )));
    }
    let s = a.spins();
    let mut e = inst.offset;
    for i in 0..inst.n {
        let row = inst.coupling_row(i);
        let mut local = inst.fields[i];
        for j in (i + 1)..inst.n {
            local += row[j] * f64::from(s[j]);
        }
        e -= local * f64::from(s[i]);
    }
    Ok(e)
}

/// Visits every basis index in Gray-code order together with its energy.
///
/// Energies are updated incrementally in `O(n)` per configuration; the
/// accumulated rounding stays far below [`ENERGY_TIE_TOL`] for the sizes the
/// guards allow.
fn gray_walk(inst: &IsingInstance, mut visit: impl FnMut(usize, f64)) {
    let n = inst.n;
    let mut spins = vec![1.0_f64; n];
    // local[k] = h_k + sum_{j != k} J_kj s_j
    let mut local: Vec<f64> = (0..n)
        .map(|k| inst.fields[k] + inst.coupling_row(k).iter().sum::<f64>())
        .collect();
    let all_up = energy(inst, &Assignment(vec![1; n])).expect("length matches");
    let mut e = all_up;
    let mut index = 0usize;
    visit(index, e);
    for g in 1..(1usize << n) {
        let k = g.trailing_zeros() as usize;
        // Flipping s_k changes E by 2 s_k local_k.
        e += 2.0 * spins[k] * local[k];
        spins[k] = -spins[k];
        let row = inst.coupling_row(k);
        for (j, l) in local.iter_mut().enumerate() {
            *l += 2.0 * row[j] * spins[k];
        }
        index ^= 1 << k;
        visit(index, e);
    }
}

/// Classical energy of every basis state, indexed by bit pattern.
pub fn diagonal_energies(inst: &IsingInstance) -> Vec<f64> {
    let mut out = vec![0.0; 1usize << inst.n];
    gray_walk(inst, |idx, e| out[idx] = e);
    out
}

pub(crate) fn is_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= ENERGY_TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Lexicographic sort key on spin vectors with `+1 < -1`, spin 0 first.
fn lex_key(n: usize, index: usize) -> usize {
    index.reverse_bits() >> (usize::BITS as usize - n)
}

/// Exhaustive ground-state search with the default size guard.
pub fn brute_force_optimum(inst: &IsingInstance) -> Result<(Assignment, f64)> {
    brute_force_optimum_with_guard(inst, BRUTE_FORCE_GUARD)
}

/// Exhaustive ground-state search. Among degenerate optima the
/// lexicographically smallest spin vector (with `+1 < -1`) wins.
pub fn brute_force_optimum_with_guard(
    inst: &IsingInstance,
    guard: usize,
) -> Result<(Assignment, f64)> {
    let n = inst.n;
    if n > guard || n >= usize::BITS as usize {
        return Err(Error::SizeGuard {
            what: "brute-force optimum",
            n,
            max: guard,
        });
    }
    let mut best = (0usize, energy(inst, &Assignment::from_index(n, 0))?);
    gray_walk(inst, |idx, e| {
        if is_tie(e, best.1) {
            if lex_key(n, idx) < lex_key(n, best.0) {
                best = (idx, e.min(best.1));
            }
        } else if e < best.1 {
            best = (idx, e);
        }
    });
    let a = Assignment::from_index(n, best.0);
    let e = energy(inst, &a)?;
    Ok((a, e))
}

/// Basis indices whose energy ties the minimum.
pub fn optimal_indices(energies: &[f64]) -> Vec<usize> {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    energies
        .iter()
        .enumerate()
        .filter(|(_, &e)| is_tie(e, min))
        .map(|(i, _)| i)
        .collect()
}

/// A literal of a 2-SAT clause; `var` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub var: usize,
    pub negated: bool,
}

impl Literal {
    pub fn pos(var: usize) -> Self {
        Self {
            var,
            negated: false,
        }
    }

    pub fn neg(var: usize) -> Self {
        Self { var, negated: true }
    }

    /// Truth value under a boolean assignment (`values[var - 1]`).
    pub fn eval(&self, values: &[bool]) -> bool {
        values[self.var - 1] != self.negated
    }

    fn to_dimacs(self) -> i64 {
        let v = self.var as i64;
        if self.negated {
            -v
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseSet {
    pub n_vars: usize,
    pub clauses: Vec<[Literal; 2]>,
}

impl ClauseSet {
    pub fn new(n_vars: usize, clauses: Vec<[Literal; 2]>) -> Result<Self> {
        if n_vars == 0 {
            return Err(invalid("a clause set needs at least one variable"));
        }
        for lit in clauses.iter().flatten() {
            if lit.var == 0 || lit.var > n_vars {
                return Err(invalid(format!(
                    "literal on variable {} outside 1..={n_vars}",
                    lit.var
                )));
            }
        }
        Ok(Self { n_vars, clauses })
    }

    /// Number of clauses violated by a boolean assignment.
    pub fn violations(&self, values: &[bool]) -> usize {
        self.clauses
            .iter()
            .filter(|[a, b]| !a.eval(values) && !b.eval(values))
            .count()
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p max2sat {} {}\n", self.n_vars, self.clauses.len());
        for [a, b] in &self.clauses {
            let _ = writeln!(out, "{} {} 0", a.to_dimacs(), b.to_dimacs());
        }
        out
    }
}

/// Parses the `p max2sat <n_vars> <n_clauses>` text format. Lines starting
/// with `c` and blank lines are ignored; each clause line holds two nonzero
/// literals followed by `0`.
pub fn parse_max2sat(text: &str) -> Result<ClauseSet> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        if line.starts_with('p') {
            if header.is_some() {
                return Err(err("duplicate header".into()));
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "p" || parts[1] != "max2sat" {
                return Err(err(format!(
                    "expected `p max2sat <n_vars> <n_clauses>`, got `{line}`"
                )));
            }
            let n_vars = parts[2]
                .parse::<usize>()
                .map_err(|e| err(format!("bad variable count: {e}")))?;
            let n_clauses = parts[3]
                .parse::<usize>()
                .map_err(|e| err(format!("bad clause count: {e}")))?;
            if n_vars == 0 {
                return Err(err("variable count must be positive".into()));
            }
            header = Some((n_vars, n_clauses));
            continue;
        }
        let Some((n_vars, _)) = header else {
            return Err(err("clause before the `p max2sat` header".into()));
        };
        let nums = line
            .split_whitespace()
            .map(|t| {
                t.parse::<i64>()
                    .map_err(|e| err(format!("bad literal `{t}`: {e}")))
            })
            .collect::<Result<Vec<i64>>>()?;
        if nums.last() != Some(&0) {
            return Err(err("clause line must end with 0".into()));
        }
        let lits = &nums[..nums.len() - 1];
        if lits.len() != 2 {
            return Err(err(format!(
                "clause has {} literals, expected 2",
                lits.len()
            )));
        }
        let mut pair = [Literal::pos(1); 2];
        for (slot, &v) in pair.iter_mut().zip(lits) {
            if v == 0 {
                return Err(err("literal 0 inside a clause".into()));
            }
            let var = v.unsigned_abs() as usize;
            if var > n_vars {
                return Err(err(format!("variable {var} exceeds n_vars = {n_vars}")));
            }
            *slot = Literal {
                var,
                negated: v < 0,
            };
        }
        clauses.push(pair);
    }
    let Some((n_vars, n_clauses)) = header else {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: "missing `p max2sat` header".into(),
        });
    };
    if clauses.len() != n_clauses {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: format!(
                "header declares {n_clauses} clauses, found {}",
                clauses.len()
            ),
        });
    }
    ClauseSet::new(n_vars, clauses)
}

/// Maps a 2-SAT formula onto an Ising instance whose energy counts violated
/// clauses, with "variable true" encoded as spin `-1`.
///
/// A literal is false when `(1 + e Z) / 2 = 1`, with `e = +1` for a plain and
/// `e = -1` for a negated literal, so a clause contributes
/// `(1 + e_a Z_a + e_b Z_b + e_a e_b Z_a Z_b) / 4`.
pub fn map_clauses_to_ising(cs: &ClauseSet) -> Result<IsingInstance> {
    let n = cs.n_vars;
    let mut fields = vec![0.0; n];
    let mut couplings = vec![0.0; n * n];
    let mut offset = 0.0;
    for [a, b] in &cs.clauses {
        let ea = if a.negated { -1.0 } else { 1.0 };
        let eb = if b.negated { -1.0 } else { 1.0 };
        let (i, j) = (a.var - 1, b.var - 1);
        offset += 0.25;
        // Linear terms enter H with a minus sign in front of h_i.
        fields[i] -= 0.25 * ea;
        fields[j] -= 0.25 * eb;
        if i == j {
            // Z_i^2 = 1
            offset += 0.25 * ea * eb;
        } else {
            couplings[i * n + j] -= 0.25 * ea * eb;
            couplings[j * n + i] -= 0.25 * ea * eb;
        }
    }
    let mut inst = IsingInstance::new(fields, couplings, offset)?;
    inst.label = Some(format!("max2sat-n{}-m{}", n, cs.clauses.len()));
    Ok(inst)
}

/// Spin encoding of a boolean assignment (true is `-1`).
pub fn assignment_from_bools(values: &[bool]) -> Assignment {
    Assignment(values.iter().map(|&v| if v { -1 } else { 1 }).collect())
}
