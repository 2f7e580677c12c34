// Copyright 2026 cqed-chem Contributors
// SPDX-License-Identifier: Apache-2.0

//! Composite basis states and finite Hilbert-space enumeration.
//!
//! A basis state is a tuple of small integers: one occupation per bosonic
//! mode followed by one value per discrete register. Spaces are enumerated
//! depth-first in ascending value order, so the stored order is lexicographic
//! over (modes in declaration order, then registers in declaration order).

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Default upper bound on the number of enumerated states.
pub const DEFAULT_MAX_DIM: usize = 1 << 20;

/// Largest boson cutoff a layout accepts.
pub const MAX_CUTOFF: u32 = u16::MAX as u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("space has no modes and no registers")]
    NoFields,
    #[error("invalid field `{label}`: {reason}")]
    InvalidField { label: String, reason: String },
    #[error("duplicate field label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown field label `{0}`")]
    UnknownLabel(String),
    #[error("empty space: the constraint excludes every basis state")]
    EmptySpace,
    #[error("space too large: more than {cap} admissible states (raise the cap with SIM_MAX_DIM)")]
    TooLarge { cap: usize },
    #[error("basis state {0} is not in this space")]
    NotFound(BasisState),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeKind {
    Photon,
    Phonon,
}

/// A truncated bosonic mode holding occupations `0..=cutoff`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeSpec {
    pub kind: ModeKind,
    pub cutoff: u32,
    pub label: String,
}

impl ModeSpec {
    pub fn photon(label: impl Into<String>, cutoff: u32) -> Self {
        Self { kind: ModeKind::Photon, cutoff, label: label.into() }
    }

    pub fn phonon(label: impl Into<String>, cutoff: u32) -> Self {
        Self { kind: ModeKind::Phonon, cutoff, label: label.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegisterKind {
    Orbital,
    Spin,
    Position,
    Bond,
}

/// A discrete degree of freedom taking values `0..arity`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterSpec {
    pub kind: RegisterKind,
    pub arity: u32,
    pub label: String,
}

impl RegisterSpec {
    pub fn new(kind: RegisterKind, label: impl Into<String>, arity: u32) -> Self {
        Self { kind, arity, label: label.into() }
    }

    pub fn orbital(label: impl Into<String>) -> Self {
        Self::new(RegisterKind::Orbital, label, 2)
    }

    pub fn spin(label: impl Into<String>) -> Self {
        Self::new(RegisterKind::Spin, label, 2)
    }

    pub fn position(label: impl Into<String>, cells: u32) -> Self {
        Self::new(RegisterKind::Position, label, cells)
    }

    pub fn bond(label: impl Into<String>, arity: u32) -> Self {
        Self::new(RegisterKind::Bond, label, arity)
    }
}

/// Occupation label: mode occupations followed by register values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisState(Vec<u32>);

impl BasisState {
    pub fn new(values: Vec<u32>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, field: usize) -> u32 {
        self.0[field]
    }

    /// Copy of `self` with one field replaced.
    pub fn with(&self, field: usize, value: u32) -> Self {
        let mut v = self.0.clone();
        v[field] = value;
        Self(v)
    }

    pub fn into_values(self) -> Vec<u32> {
        self.0
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "⟩")
    }
}

/// Field declarations of a space in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    modes: Vec<ModeSpec>,
    registers: Vec<RegisterSpec>,
}

impl Layout {
    pub fn new(modes: Vec<ModeSpec>, registers: Vec<RegisterSpec>) -> Result<Self, HilbertError> {
        if modes.is_empty() && registers.is_empty() {
            return Err(HilbertError::NoFields);
        }
        let mut seen = std::collections::HashSet::new();
        for m in &modes {
            if m.cutoff < 1 || m.cutoff > MAX_CUTOFF {
                return Err(HilbertError::InvalidField {
                    label: m.label.clone(),
                    reason: format!("cutoff must be between 1 and {MAX_CUTOFF}"),
                });
            }
            if !seen.insert(m.label.as_str()) {
                return Err(HilbertError::DuplicateLabel(m.label.clone()));
            }
        }
        for r in &registers {
            let min = if r.kind == RegisterKind::Position { 1 } else { 2 };
            if r.arity < min {
                return Err(HilbertError::InvalidField {
                    label: r.label.clone(),
                    reason: format!("arity must be at least {min}"),
                });
            }
            if !seen.insert(r.label.as_str()) {
                return Err(HilbertError::DuplicateLabel(r.label.clone()));
            }
        }
        Ok(Self { modes, registers })
    }

    pub fn modes(&self) -> &[ModeSpec] {
        &self.modes
    }

    pub fn registers(&self) -> &[RegisterSpec] {
        &self.registers
    }

    pub fn field_count(&self) -> usize {
        self.modes.len() + self.registers.len()
    }

    /// Number of values field `i` can take.
    pub fn radix(&self, field: usize) -> u32 {
        if field < self.modes.len() {
            self.modes[field].cutoff + 1
        } else {
            self.registers[field - self.modes.len()].arity
        }
    }

    pub fn field_label(&self, field: usize) -> &str {
        if field < self.modes.len() {
            &self.modes[field].label
        } else {
            &self.registers[field - self.modes.len()].label
        }
    }

    /// Absolute field index of a mode.
    pub fn mode_field(&self, label: &str) -> Result<usize, HilbertError> {
        self.modes
            .iter()
            .position(|m| m.label == label)
            .ok_or_else(|| HilbertError::UnknownLabel(label.to_string()))
    }

    /// Absolute field index of a register.
    pub fn register_field(&self, label: &str) -> Result<usize, HilbertError> {
        self.registers
            .iter()
            .position(|r| r.label == label)
            .map(|i| i + self.modes.len())
            .ok_or_else(|| HilbertError::UnknownLabel(label.to_string()))
    }

    pub fn mode(&self, label: &str) -> Result<&ModeSpec, HilbertError> {
        self.mode_field(label).map(|i| &self.modes[i])
    }

    pub fn register(&self, label: &str) -> Result<&RegisterSpec, HilbertError> {
        self.register_field(label).map(|i| &self.registers[i - self.modes.len()])
    }

    /// Product of all radices, saturating.
    pub fn product_size(&self) -> usize {
        (0..self.field_count()).fold(1usize, |acc, f| acc.saturating_mul(self.radix(f) as usize))
    }
}

/// Admissibility predicate over raw field values.
///
/// `admits_prefix` receives the first `prefix.len()` fields of a candidate and
/// may return `false` when no completion can be admissible; enumeration then
/// skips the whole subtree.
pub trait Constraint: Send + Sync {
    fn admits(&self, values: &[u32]) -> bool;

    fn admits_prefix(&self, prefix: &[u32]) -> bool {
        let _ = prefix;
        true
    }

    fn describe(&self) -> String;
}

/// Pairwise-distinct values across a set of fields (hard-core exclusion).
#[derive(Debug, Clone)]
pub struct Distinct {
    pub fields: Vec<usize>,
}

impl Constraint for Distinct {
    fn admits(&self, values: &[u32]) -> bool {
        self.admits_prefix(values)
    }

    fn admits_prefix(&self, prefix: &[u32]) -> bool {
        let present: Vec<u32> =
            self.fields.iter().filter(|&&f| f < prefix.len()).map(|&f| prefix[f]).collect();
        for (i, a) in present.iter().enumerate() {
            if present[i + 1..].contains(a) {
                return false;
            }
        }
        true
    }

    fn describe(&self) -> String {
        format!("distinct values over fields {:?}", self.fields)
    }
}

/// A field pinned to one value.
#[derive(Debug, Clone)]
pub struct Fixed {
    pub field: usize,
    pub value: u32,
}

impl Constraint for Fixed {
    fn admits(&self, values: &[u32]) -> bool {
        values[self.field] == self.value
    }

    fn admits_prefix(&self, prefix: &[u32]) -> bool {
        prefix.len() <= self.field || prefix[self.field] == self.value
    }

    fn describe(&self) -> String {
        format!("field {} fixed to {}", self.field, self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Exactly,
    AtMost,
}

/// Weighted quantum count `Σ weight[field][value]` equal to (or bounded by)
/// a total. Weights are non-negative, so partial sums above the total prune.
#[derive(Debug, Clone)]
pub struct QuantumCount {
    pub terms: Vec<(usize, Vec<u32>)>,
    pub total: u32,
    pub bound: Bound,
}

impl QuantumCount {
    /// Every value of each listed field counts as that many quanta.
    pub fn occupations(fields: &[usize], total: u32, bound: Bound, radix: impl Fn(usize) -> u32) -> Self {
        let terms = fields.iter().map(|&f| (f, (0..radix(f)).collect())).collect();
        Self { terms, total, bound }
    }

    fn partial(&self, prefix: &[u32]) -> (u32, bool) {
        let mut sum = 0;
        let mut complete = true;
        for (field, weights) in &self.terms {
            if *field < prefix.len() {
                sum += weights[prefix[*field] as usize];
            } else {
                complete = false;
            }
        }
        (sum, complete)
    }
}

impl Constraint for QuantumCount {
    fn admits(&self, values: &[u32]) -> bool {
        let (sum, _) = self.partial(values);
        match self.bound {
            Bound::Exactly => sum == self.total,
            Bound::AtMost => sum <= self.total,
        }
    }

    fn admits_prefix(&self, prefix: &[u32]) -> bool {
        let (sum, complete) = self.partial(prefix);
        if complete {
            self.admits(prefix)
        } else {
            sum <= self.total
        }
    }

    fn describe(&self) -> String {
        let op = match self.bound {
            Bound::Exactly => "==",
            Bound::AtMost => "<=",
        };
        let fields: Vec<usize> = self.terms.iter().map(|t| t.0).collect();
        format!("quantum count over fields {fields:?} {op} {}", self.total)
    }
}

/// Arbitrary predicate on complete states.
pub struct Predicate<F> {
    pub name: String,
    pub test: F,
}

impl<F: Fn(&[u32]) -> bool + Send + Sync> Constraint for Predicate<F> {
    fn admits(&self, values: &[u32]) -> bool {
        (self.test)(values)
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}

/// Conjunction of constraints.
#[derive(Clone, Default)]
pub struct AllOf(pub Vec<Arc<dyn Constraint>>);

impl AllOf {
    pub fn with(mut self, c: impl Constraint + 'static) -> Self {
        self.0.push(Arc::new(c));
        self
    }
}

impl Constraint for AllOf {
    fn admits(&self, values: &[u32]) -> bool {
        self.0.iter().all(|c| c.admits(values))
    }

    fn admits_prefix(&self, prefix: &[u32]) -> bool {
        self.0.iter().all(|c| c.admits_prefix(prefix))
    }

    fn describe(&self) -> String {
        if self.0.is_empty() {
            return "unconstrained".into();
        }
        self.0.iter().map(|c| c.describe()).collect::<Vec<_>>().join(" and ")
    }
}

/// Ordered, indexed set of admissible basis states. Immutable once built.
#[derive(Clone)]
pub struct HilbertSpace {
    layout: Layout,
    states: Vec<BasisState>,
    index: HashMap<BasisState, usize>,
    constraint: Option<Arc<dyn Constraint>>,
}

impl fmt::Debug for HilbertSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HilbertSpace")
            .field("layout", &self.layout)
            .field("dim", &self.states.len())
            .field("constraint", &self.constraint.as_ref().map(|c| c.describe()))
            .finish()
    }
}

/// Enumerate every admissible combination of mode occupations and register
/// values, lexicographically ordered.
pub fn enumerate_space(
    modes: Vec<ModeSpec>,
    registers: Vec<RegisterSpec>,
    constraint: Option<Arc<dyn Constraint>>,
    cap: usize,
) -> Result<HilbertSpace, HilbertError> {
    let layout = Layout::new(modes, registers)?;
    HilbertSpace::enumerate(layout, constraint, cap)
}

impl HilbertSpace {
    pub fn enumerate(
        layout: Layout,
        constraint: Option<Arc<dyn Constraint>>,
        cap: usize,
    ) -> Result<Self, HilbertError> {
        let n = layout.field_count();
        let radices: Vec<u32> = (0..n).map(|f| layout.radix(f)).collect();
        let mut states = Vec::new();
        let mut prefix: Vec<u32> = Vec::with_capacity(n);
        // Explicit-stack DFS: `next[d]` is the next value to try at depth d.
        let mut next: Vec<u32> = vec![0; n];
        let mut depth = 0usize;
        loop {
            if next[depth] >= radices[depth] {
                if depth == 0 {
                    break;
                }
                next[depth] = 0;
                depth -= 1;
                prefix.pop();
                continue;
            }
            let v = next[depth];
            next[depth] += 1;
            prefix.push(v);
            let ok = constraint.as_ref().map_or(true, |c| c.admits_prefix(&prefix));
            if !ok {
                prefix.pop();
                continue;
            }
            if depth + 1 == n {
                if constraint.as_ref().map_or(true, |c| c.admits(&prefix)) {
                    if states.len() >= cap {
                        return Err(HilbertError::TooLarge { cap });
                    }
                    states.push(BasisState(prefix.clone()));
                }
                prefix.pop();
            } else {
                depth += 1;
            }
        }
        if states.is_empty() {
            return Err(HilbertError::EmptySpace);
        }
        let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(Self { layout, states, index, constraint })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn state_at(&self, i: usize) -> &BasisState {
        &self.states[i]
    }

    pub fn index_of(&self, s: &BasisState) -> Result<usize, HilbertError> {
        self.index.get(s).copied().ok_or_else(|| HilbertError::NotFound(s.clone()))
    }

    /// Index lookup that treats absence as a normal outcome.
    pub fn find(&self, s: &BasisState) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// The states at `indices`, in the given order, as a space of their own.
    ///
    /// Panics if an index is out of range.
    pub fn subspace(&self, indices: &[usize]) -> Result<Self, HilbertError> {
        if indices.is_empty() {
            return Err(HilbertError::EmptySpace);
        }
        let states: Vec<BasisState> = indices.iter().map(|&i| self.states[i].clone()).collect();
        let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(Self { layout: self.layout.clone(), states, index, constraint: self.constraint.clone() })
    }

    pub fn constraint(&self) -> Option<&Arc<dyn Constraint>> {
        self.constraint.as_ref()
    }

    /// Human-readable label such as `|a=1,orb=0⟩`.
    pub fn describe_state(&self, i: usize) -> String {
        let s = &self.states[i];
        let parts: Vec<String> = (0..self.layout.field_count())
            .map(|f| format!("{}={}", self.layout.field_label(f), s.get(f)))
            .collect();
        format!("|{}⟩", parts.join(","))
    }
}
