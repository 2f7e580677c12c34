// Copyright 2026 cqed-chem Contributors
// SPDX-License-Identifier: Apache-2.0

//! Sparse operators over a [`HilbertSpace`] and the scenario Hamiltonians.
//!
//! Every operator is built from its action on basis states: the column of
//! basis state `j` lists the states `i` it maps to. Targets outside the space
//! (beyond a boson cutoff, or outside a constrained sector) are dropped, which
//! realizes the compressed operator `P A P` without building products through
//! states the space does not hold.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{BasisState, HilbertError, HilbertSpace, ModeKind, RegisterKind};

pub type C64 = Complex64;

/// Entrywise tolerance for `A = A†`.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Largest coupling-to-frequency ratio for which the rotating-wave form holds.
pub const RWA_RATIO_LIMIT: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("entry ({row}, {col}) outside a {dim}-dimensional operator")]
    IndexOutOfRange { row: usize, col: usize, dim: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("register `{label}` has arity {arity}, expected a two-level register")]
    NotTwoLevel { label: String, arity: u32 },
    #[error("wrong space shape: {0}")]
    WrongShape(String),
    #[error("invalid coupling `{field}`: {reason}")]
    InvalidCoupling { field: String, reason: String },
}

/// Complex sparse matrix in compressed-row form with merged duplicates.
#[derive(Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    hermitian: bool,
}

impl fmt::Debug for SparseOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SparseOperator")
            .field("dim", &self.dim)
            .field("nnz", &self.nnz())
            .field("hermitian", &self.hermitian)
            .finish()
    }
}

impl SparseOperator {
    /// Build from `(row, col, value)` triplets. Duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(
        dim: usize,
        triplets: impl IntoIterator<Item = (usize, usize, C64)>,
    ) -> Result<Self, OperatorError> {
        let mut t: Vec<(usize, usize, C64)> = triplets.into_iter().collect();
        for &(row, col, _) in &t {
            if row >= dim || col >= dim {
                return Err(OperatorError::IndexOutOfRange { row, col, dim });
            }
        }
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<C64> = Vec::with_capacity(t.len());
        let mut rows = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            if let (Some(&lr), Some(&lc)) = (rows.last(), cols.last()) {
                if lr == r && lc == c {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            cols.push(c);
            vals.push(v);
        }
        let mut keep_rows = Vec::with_capacity(rows.len());
        let mut keep_cols = Vec::with_capacity(rows.len());
        let mut keep_vals = Vec::with_capacity(rows.len());
        for ((r, c), v) in rows.into_iter().zip(cols).zip(vals) {
            if v != C64::new(0.0, 0.0) {
                keep_rows.push(r);
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for &r in &keep_rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut op = Self { dim, row_ptr, cols: keep_cols, vals: keep_vals, hermitian: false };
        op.hermitian = op.hermitian_defect() <= HERMITIAN_TOL;
        Ok(op)
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, row_ptr: vec![0; dim + 1], cols: vec![], vals: vec![], hermitian: true }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let t = diag.iter().enumerate().map(|(i, &d)| (i, i, C64::new(d, 0.0)));
        Self::from_triplets(diag.len(), t).expect("diagonal indices are in range")
    }

    /// Operator whose column `j` is `f(state_j)`; targets absent from the
    /// space are dropped.
    pub fn from_action<F>(space: &HilbertSpace, f: F) -> Self
    where
        F: Fn(&BasisState) -> Vec<(BasisState, C64)>,
    {
        let mut t = Vec::new();
        for (j, s) in space.states().iter().enumerate() {
            for (target, v) in f(s) {
                if let Some(i) = space.find(&target) {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(space.dim(), t).expect("indices come from the space")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Set at construction when `A = A†` holds entrywise within [`HERMITIAN_TOL`].
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        match self.cols[a..b].binary_search(&c) {
            Ok(k) => self.vals[a + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn adjoint(&self) -> Self {
        let t = self.entries().map(|(r, c, v)| (c, r, v.conj()));
        Self::from_triplets(self.dim, t).expect("same dimension")
    }

    pub fn scaled(&self, s: C64) -> Self {
        let t = self.entries().map(|(r, c, v)| (r, c, v * s));
        Self::from_triplets(self.dim, t).expect("same dimension")
    }

    pub fn plus(&self, other: &Self) -> Result<Self, OperatorError> {
        self.check_dim(other)?;
        Self::from_triplets(self.dim, self.entries().chain(other.entries()))
    }

    pub fn minus(&self, other: &Self) -> Result<Self, OperatorError> {
        self.check_dim(other)?;
        let neg = other.entries().map(|(r, c, v)| (r, c, -v));
        Self::from_triplets(self.dim, self.entries().chain(neg))
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self, OperatorError> {
        self.check_dim(other)?;
        let mut acc = vec![C64::new(0.0, 0.0); self.dim];
        let mut touched = vec![false; self.dim];
        let mut list = Vec::new();
        let mut t = Vec::new();
        for r in 0..self.dim {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !touched[c] {
                        touched[c] = true;
                        list.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &list {
                t.push((r, c, acc[c]));
                acc[c] = C64::new(0.0, 0.0);
                touched[c] = false;
            }
            list.clear();
        }
        Self::from_triplets(self.dim, t)
    }

    /// `[self, other] = self·other − other·self`.
    pub fn commutator(&self, other: &Self) -> Result<Self, OperatorError> {
        self.matmul(other)?.minus(&other.matmul(self)?)
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim, "vector length must match operator dimension");
        (0..self.dim).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `max |A − A†|` over all entries.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (r, c, v) in self.entries() {
            worst = worst.max((v - self.get(c, r).conj()).norm());
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }

    /// Principal submatrix on `indices` (in the given order).
    pub fn restrict(&self, indices: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.dim];
        for (k, &i) in indices.iter().enumerate() {
            pos[i] = k;
        }
        let mut t = Vec::new();
        for (k, &i) in indices.iter().enumerate() {
            for (c, v) in self.row(i) {
                if pos[c] != usize::MAX {
                    t.push((k, pos[c], v));
                }
            }
        }
        Self::from_triplets(indices.len(), t).expect("restricted indices are in range")
    }

    fn check_dim(&self, other: &Self) -> Result<(), OperatorError> {
        if self.dim != other.dim {
            return Err(OperatorError::DimensionMismatch(self.dim, other.dim));
        }
        Ok(())
    }
}

/// Coupling constants and frequencies shared by the scenario Hamiltonians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingSpec {
    pub hbar: f64,
    /// Common angular frequency of every mode and two-level transition.
    pub omega: f64,
    /// Per-mode overrides of `omega`, keyed by mode label.
    pub mode_omega: BTreeMap<String, f64>,
    pub g_mol: f64,
    pub g_spin: f64,
    pub g_tun: f64,
    pub g_cov: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for CouplingSpec {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            omega: 1.0,
            mode_omega: BTreeMap::new(),
            g_mol: 0.01,
            g_spin: 0.01,
            g_tun: 0.01,
            g_cov: 0.01,
            alpha: 0.8,
            beta: 0.6,
        }
    }
}

impl CouplingSpec {
    pub fn validate(&self) -> Result<(), OperatorError> {
        let bad = |field: &str, reason: String| {
            Err(OperatorError::InvalidCoupling { field: field.to_string(), reason })
        };
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return bad("hbar", format!("must be positive, got {}", self.hbar));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return bad("omega", format!("must be positive, got {}", self.omega));
        }
        for (label, w) in &self.mode_omega {
            if !(*w > 0.0 && w.is_finite()) {
                return bad(&format!("mode_omega.{label}"), format!("must be positive, got {w}"));
            }
        }
        for (name, g) in self.couplings() {
            if !g.is_finite() {
                return bad(name, "must be finite".into());
            }
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return bad("alpha", "hybridization weights must be finite".into());
        }
        let norm = self.alpha * self.alpha + self.beta * self.beta;
        if (norm - 1.0).abs() > 1e-9 {
            return bad("beta", format!("alpha^2 + beta^2 must equal 1, got {norm}"));
        }
        Ok(())
    }

    pub fn omega_for(&self, mode: &str) -> f64 {
        self.mode_omega.get(mode).copied().unwrap_or(self.omega)
    }

    fn couplings(&self) -> [(&'static str, f64); 4] {
        [("g_mol", self.g_mol), ("g_spin", self.g_spin), ("g_tun", self.g_tun), ("g_cov", self.g_cov)]
    }

    /// Largest `|g| / ω` over the couplings and frequencies in use.
    pub fn rwa_ratio(&self) -> f64 {
        let w_min = self.mode_omega.values().copied().fold(self.omega, f64::min);
        let g_max = self.couplings().iter().map(|(_, g)| g.abs()).fold(0.0, f64::max);
        g_max / w_min
    }

    pub fn rwa_warning(&self) -> Option<String> {
        let ratio = self.rwa_ratio();
        (ratio > RWA_RATIO_LIMIT).then(|| {
            format!(
                "RWA validity: coupling/frequency ratio {ratio:.3e} exceeds {RWA_RATIO_LIMIT:.0e}; \
                 counter-rotating terms are not negligible"
            )
        })
    }
}

/// Site-to-energy rotation `[[α, β], [−β, α]]`: row `e` holds the site
/// coordinates (⟨O|, ⟨H|) of hybrid level `Ψ_e`.
pub fn hybrid_basis_change(c: &CouplingSpec) -> Result<[[f64; 2]; 2], OperatorError> {
    let norm = c.alpha * c.alpha + c.beta * c.beta;
    if !c.alpha.is_finite() || !c.beta.is_finite() || (norm - 1.0).abs() > 1e-9 {
        return Err(OperatorError::InvalidCoupling {
            field: "beta".into(),
            reason: format!("alpha^2 + beta^2 must equal 1, got {norm}"),
        });
    }
    Ok([[c.alpha, c.beta], [-c.beta, c.alpha]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Create,
    Annihilate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flip {
    Raise,
    Lower,
}

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Truncated boson ladder operator; `Create` annihilates the cutoff state.
pub fn ladder(space: &HilbertSpace, mode: &str, dir: Ladder) -> Result<SparseOperator, OperatorError> {
    let field = space.layout().mode_field(mode)?;
    let cutoff = space.layout().modes()[field].cutoff;
    Ok(SparseOperator::from_action(space, |s| {
        let n = s.get(field);
        match dir {
            Ladder::Annihilate if n > 0 => vec![(s.with(field, n - 1), re((n as f64).sqrt()))],
            Ladder::Create if n < cutoff => vec![(s.with(field, n + 1), re((n as f64 + 1.0).sqrt()))],
            _ => vec![],
        }
    }))
}

/// Two-level raising (value 0 → 1) or lowering (1 → 0) operator.
pub fn two_level(space: &HilbertSpace, register: &str, dir: Flip) -> Result<SparseOperator, OperatorError> {
    let field = two_level_field(space, register)?;
    Ok(SparseOperator::from_action(space, |s| match (dir, s.get(field)) {
        (Flip::Raise, 0) => vec![(s.with(field, 1), re(1.0))],
        (Flip::Lower, 1) => vec![(s.with(field, 0), re(1.0))],
        _ => vec![],
    }))
}

/// Boson number operator `a†a`.
pub fn number(space: &HilbertSpace, mode: &str) -> Result<SparseOperator, OperatorError> {
    let field = space.layout().mode_field(mode)?;
    Ok(diagonal_from(space, |s| s.get(field) as f64))
}

/// Projector onto one value of a register.
pub fn register_projector(space: &HilbertSpace, register: &str, value: u32) -> Result<SparseOperator, OperatorError> {
    let field = space.layout().register_field(register)?;
    Ok(diagonal_from(space, |s| if s.get(field) == value { 1.0 } else { 0.0 }))
}

pub fn diagonal_from(space: &HilbertSpace, f: impl Fn(&BasisState) -> f64) -> SparseOperator {
    let d: Vec<f64> = space.states().iter().map(f).collect();
    SparseOperator::from_diagonal(&d)
}

fn two_level_field(space: &HilbertSpace, register: &str) -> Result<usize, OperatorError> {
    let layout = space.layout();
    let field = layout.register_field(register)?;
    let arity = layout.radix(field);
    if arity != 2 {
        return Err(OperatorError::NotTwoLevel { label: register.to_string(), arity });
    }
    Ok(field)
}

/// `g (b† L + b L†)` where `lower`/`raise` map a register configuration to
/// its lowered/raised partner (or `None` when the transition is forbidden).
/// The two maps must be mutual inverses for the result to be Hermitian.
fn exchange_action(
    s: &BasisState,
    boson: usize,
    cutoff: u32,
    g: f64,
    lower: impl Fn(&BasisState) -> Option<BasisState>,
    raise: impl Fn(&BasisState) -> Option<BasisState>,
    out: &mut Vec<(BasisState, C64)>,
) {
    if g == 0.0 {
        return;
    }
    let n = s.get(boson);
    if n < cutoff {
        if let Some(t) = lower(s) {
            out.push((t.with(boson, n + 1), re(g * (n as f64 + 1.0).sqrt())));
        }
    }
    if n > 0 {
        if let Some(t) = raise(s) {
            out.push((t.with(boson, n - 1), re(g * (n as f64).sqrt())));
        }
    }
}

fn flip_lower(field: usize) -> impl Fn(&BasisState) -> Option<BasisState> {
    move |s| (s.get(field) == 1).then(|| s.with(field, 0))
}

fn flip_raise(field: usize) -> impl Fn(&BasisState) -> Option<BasisState> {
    move |s| (s.get(field) == 0).then(|| s.with(field, 1))
}

/// Field labels of the single-electron Jaynes–Cummings scenario.
pub mod jc {
    pub const MODE: &str = "a";
    pub const ORBITAL: &str = "orb";
}

/// `H = ħω a†a + ħω σ†σ + g(σ†a + σa†)` on one photon mode and one
/// two-level register (value 0 = lower hybrid level).
pub fn build_jc_rwa(space: &HilbertSpace, c: &CouplingSpec) -> Result<SparseOperator, OperatorError> {
    let layout = space.layout();
    if layout.modes().len() != 1 || layout.modes()[0].kind != ModeKind::Photon {
        return Err(OperatorError::WrongShape("JC Hamiltonian needs exactly one photon mode".into()));
    }
    if layout.registers().len() != 1 || layout.registers()[0].arity != 2 {
        return Err(OperatorError::WrongShape("JC Hamiltonian needs exactly one two-level register".into()));
    }
    let mode = &layout.modes()[0];
    let (boson, cutoff, reg) = (0, mode.cutoff, 1);
    let w_mode = c.hbar * c.omega_for(&mode.label);
    let w_atom = c.hbar * c.omega;
    Ok(SparseOperator::from_action(space, |s| {
        let diag = w_mode * s.get(boson) as f64 + w_atom * s.get(reg) as f64;
        let mut out = vec![(s.clone(), re(diag))];
        exchange_action(s, boson, cutoff, c.g_mol, flip_lower(reg), flip_raise(reg), &mut out);
        out
    }))
}

/// Field labels of the two-electron, spin-resolved scenario.
pub mod two_electron {
    pub const MODES: [&str; 2] = ["ph_up", "ph_dn"];
    pub const ORBITALS: [&str; 2] = ["orb_1", "orb_2"];
    pub const SPINS: [&str; 2] = ["spin_1", "spin_2"];
    pub const UP: u32 = 0;
    pub const DOWN: u32 = 1;
}

/// `H = Σ_s ħω a_s†a_s + Σ_{i,s} ħω σ_{is}†σ_{is} + g Σ_s [a_s†(σ_{1s}+σ_{2s}) + h.c.]`
/// where `σ_{is}` lowers electron `i`'s hybrid level when its spin is `s`.
pub fn build_two_electron_h(space: &HilbertSpace, c: &CouplingSpec) -> Result<SparseOperator, OperatorError> {
    use two_electron::*;
    let layout = space.layout();
    if layout.modes().len() != 2 || layout.registers().len() != 4 {
        return Err(OperatorError::WrongShape(
            "two-electron Hamiltonian needs two spin photon modes and four two-level registers".into(),
        ));
    }
    let mut modes = Vec::new();
    for (s, label) in MODES.iter().enumerate() {
        let f = layout.mode_field(label)?;
        modes.push((f, layout.modes()[f].cutoff, c.hbar * c.omega_for(label), s as u32));
    }
    let mut electrons = Vec::new();
    for i in 0..2 {
        let orb = two_level_field(space, ORBITALS[i])?;
        let spin = two_level_field(space, SPINS[i])?;
        electrons.push((orb, spin));
    }
    let w_atom = c.hbar * c.omega;
    Ok(SparseOperator::from_action(space, |s| {
        let mut diag = 0.0;
        for &(f, _, w, _) in &modes {
            diag += w * s.get(f) as f64;
        }
        for &(orb, _) in &electrons {
            diag += w_atom * s.get(orb) as f64;
        }
        let mut out = vec![(s.clone(), re(diag))];
        for &(boson, cutoff, _, sector) in &modes {
            for &(orb, spin) in &electrons {
                let in_sector = move |x: &BasisState| x.get(spin) == sector;
                exchange_action(
                    s,
                    boson,
                    cutoff,
                    c.g_mol,
                    |x| in_sector(x).then(|| flip_lower(orb)(x)).flatten(),
                    |x| in_sector(x).then(|| flip_raise(orb)(x)).flatten(),
                    &mut out,
                );
            }
        }
        out
    }))
}

/// Square grid of `k × k` cells holding distinguishable atoms, with one bond
/// register per unordered atom pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridGeometry {
    pub k: usize,
    pub atoms: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl GridGeometry {
    pub const PHONON: &'static str = "b";

    pub fn new(k: usize, atoms: usize) -> Result<Self, OperatorError> {
        if k < 1 {
            return Err(OperatorError::WrongShape("grid side must be at least 1".into()));
        }
        if atoms == 0 || atoms > k * k {
            return Err(OperatorError::WrongShape(format!(
                "atom count {atoms} must be between 1 and the {} grid cells",
                k * k
            )));
        }
        let pairs = (0..atoms).flat_map(|p| (p + 1..atoms).map(move |q| (p, q))).collect();
        Ok(Self { k, atoms, pairs })
    }

    pub fn cells(&self) -> usize {
        self.k * self.k
    }

    pub fn position_label(atom: usize) -> String {
        format!("pos_{}", atom + 1)
    }

    pub fn bond_label(p: usize, q: usize) -> String {
        format!("cov_{}_{}", p + 1, q + 1)
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        let (ra, ca) = (a / self.k, a % self.k);
        let (rb, cb) = (b / self.k, b % self.k);
        ra.abs_diff(rb) + ca.abs_diff(cb) == 1
    }

    /// Orthogonal neighbours (up, down, left, right) inside the grid.
    pub fn neighbors(&self, cell: usize) -> Vec<usize> {
        let (r, c) = (cell / self.k, cell % self.k);
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push(cell - self.k);
        }
        if r + 1 < self.k {
            out.push(cell + self.k);
        }
        if c > 0 {
            out.push(cell - 1);
        }
        if c + 1 < self.k {
            out.push(cell + 1);
        }
        out
    }
}

/// Resolved field indices of a grid space.
pub(crate) struct GridFields {
    pub phonon: usize,
    pub cutoff: u32,
    pub positions: Vec<usize>,
    pub bonds: Vec<usize>,
}

pub(crate) fn grid_fields(space: &HilbertSpace, geom: &GridGeometry) -> Result<GridFields, OperatorError> {
    let layout = space.layout();
    let phonon = layout.mode_field(GridGeometry::PHONON)?;
    let cutoff = layout.modes()[phonon].cutoff;
    let mut positions = Vec::new();
    for a in 0..geom.atoms {
        let label = GridGeometry::position_label(a);
        let f = layout.register_field(&label)?;
        if layout.radix(f) as usize != geom.cells() {
            return Err(OperatorError::WrongShape(format!("register `{label}` must span {} cells", geom.cells())));
        }
        positions.push(f);
    }
    let mut bonds = Vec::new();
    for &(p, q) in &geom.pairs {
        bonds.push(two_level_field(space, &GridGeometry::bond_label(p, q))?);
    }
    Ok(GridFields { phonon, cutoff, positions, bonds })
}

/// Whether bond `idx` may form or break in `s`: its atoms are adjacent and
/// neither takes part in another formed bond.
fn grid_bond_allowed(geom: &GridGeometry, f: &GridFields, s: &BasisState, idx: usize) -> bool {
    let (p, q) = geom.pairs[idx];
    if !geom.adjacent(s.get(f.positions[p]) as usize, s.get(f.positions[q]) as usize) {
        return false;
    }
    geom.pairs.iter().enumerate().all(|(j, &(a, b))| {
        j == idx || s.get(f.bonds[j]) == 0 || (a != p && a != q && b != p && b != q)
    })
}

/// Phonon grid Hamiltonian `H_tun + H_cov + ħω b†b + ħω Σ σ_cov†σ_cov`.
///
/// Tunneling moves an unbonded atom to a free orthogonal neighbour with
/// amplitude `g_tun`; bonded atoms are frozen. `H_cov` trades one phonon for
/// one bond between adjacent atoms that are not already bonded elsewhere.
pub fn build_grid_h(space: &HilbertSpace, geom: &GridGeometry, c: &CouplingSpec) -> Result<SparseOperator, OperatorError> {
    let f = grid_fields(space, geom)?;
    let w_b = c.hbar * c.omega_for(GridGeometry::PHONON);
    let w_bond = c.hbar * c.omega;
    Ok(SparseOperator::from_action(space, |s| {
        let formed: f64 = f.bonds.iter().map(|&b| s.get(b) as f64).sum();
        let mut out = vec![(s.clone(), re(w_b * s.get(f.phonon) as f64 + w_bond * formed))];
        if c.g_tun != 0.0 {
            let occupied: Vec<u32> = f.positions.iter().map(|&p| s.get(p)).collect();
            for atom in 0..geom.atoms {
                let bonded = geom
                    .pairs
                    .iter()
                    .enumerate()
                    .any(|(j, &(p, q))| (p == atom || q == atom) && s.get(f.bonds[j]) == 1);
                if bonded {
                    continue;
                }
                let here = occupied[atom] as usize;
                for to in geom.neighbors(here) {
                    if !occupied.contains(&(to as u32)) {
                        out.push((s.with(f.positions[atom], to as u32), re(c.g_tun)));
                    }
                }
            }
        }
        for (idx, &bf) in f.bonds.iter().enumerate() {
            let allowed = |x: &BasisState| grid_bond_allowed(geom, &f, x, idx);
            exchange_action(
                s,
                f.phonon,
                f.cutoff,
                c.g_cov,
                |x| allowed(x).then(|| flip_lower(bf)(x)).flatten(),
                |x| allowed(x).then(|| flip_raise(bf)(x)).flatten(),
                &mut out,
            );
        }
        out
    }))
}

/// `b†b + Σ σ_cov†σ_cov`, conserved by the grid Hamiltonian.
pub fn grid_excitation_number(space: &HilbertSpace, geom: &GridGeometry) -> Result<SparseOperator, OperatorError> {
    let f = grid_fields(space, geom)?;
    Ok(diagonal_from(space, |s| {
        s.get(f.phonon) as f64 + f.bonds.iter().map(|&b| s.get(b) as f64).sum::<f64>()
    }))
}

/// Field labels and value encodings of the hydrogen-bond scenario.
pub mod hbond {
    pub const A_MOL: &str = "a_mol";
    pub const A_SPIN: &str = "a_spin";
    pub const PHONON: &str = "b";
    /// Electron registers in hybrid-level (energy) basis: O₁, shared H, O₂.
    pub const ELECTRONS: [&str; 3] = ["o1", "h", "o2"];
    /// Spin of the hydrogen electron: 0 = ↑, 1 = ↓ (↓ counts as one quantum).
    pub const SPIN_H: &str = "spin_h";
    /// Bond between H and O₁ / O₂. Bit 0: formed; bit 1: far apart.
    pub const BONDS: [&str; 2] = ["bond_1", "bond_2"];
    pub const FORMED: u32 = 1;
    pub const FAR: u32 = 2;
    pub const UP: u32 = 0;
    pub const DOWN: u32 = 1;
    /// Frozen spins of the oxygen electrons (O₁ ↑, O₂ ↓). A bond to O_i
    /// needs the hydrogen spin opposite to O_i's.
    pub const OXYGEN_SPINS: [u32; 2] = [UP, DOWN];
}

pub(crate) struct HbondFields {
    pub a_mol: (usize, u32),
    pub a_spin: (usize, u32),
    pub phonon: (usize, u32),
    pub electrons: [usize; 3],
    pub spin: usize,
    pub bonds: [usize; 2],
}

pub(crate) fn hbond_fields(space: &HilbertSpace) -> Result<HbondFields, OperatorError> {
    let layout = space.layout();
    let mode = |label: &str| -> Result<(usize, u32), OperatorError> {
        let f = layout.mode_field(label)?;
        Ok((f, layout.modes()[f].cutoff))
    };
    let mut electrons = [0; 3];
    for (i, label) in hbond::ELECTRONS.iter().enumerate() {
        electrons[i] = two_level_field(space, label)?;
    }
    let mut bonds = [0; 2];
    for (i, label) in hbond::BONDS.iter().enumerate() {
        let f = layout.register_field(label)?;
        let reg = layout.register(label)?;
        if reg.arity != 4 || reg.kind != RegisterKind::Bond {
            return Err(OperatorError::WrongShape(format!("`{label}` must be a 4-valued bond register")));
        }
        bonds[i] = f;
    }
    Ok(HbondFields {
        a_mol: mode(hbond::A_MOL)?,
        a_spin: mode(hbond::A_SPIN)?,
        phonon: mode(hbond::PHONON)?,
        electrons,
        spin: two_level_field(space, hbond::SPIN_H)?,
        bonds,
    })
}

fn hbond_formed(s: &BasisState, f: &HbondFields, i: usize) -> bool {
    s.get(f.bonds[i]) & hbond::FORMED != 0
}

/// Whether bond `i` may form or break: atoms close, the hydrogen not bonded
/// to the other oxygen, and spins paired.
fn hbond_bond_allowed(s: &BasisState, f: &HbondFields, i: usize) -> bool {
    s.get(f.bonds[i]) & hbond::FAR == 0
        && !hbond_formed(s, f, 1 - i)
        && s.get(f.spin) != hbond::OXYGEN_SPINS[i]
}

/// Hydrogen-bond Hamiltonian
/// `H_tun + H_cov + H_spin + H_mol + ħω(b†b + a_mol†a_mol + a_spin†a_spin) + ħω Σ σ_cov†σ_cov`.
///
/// `H_mol` trades `a_mol` photons with hybrid-level flips of each electron;
/// `H_spin` trades `a_spin` quanta with flips of the hydrogen spin while the
/// hydrogen is unbonded; `H_tun` toggles the close/far flag of an unformed
/// bond; `H_cov` trades phonons with bond formation.
pub fn build_hbond_h(space: &HilbertSpace, c: &CouplingSpec) -> Result<SparseOperator, OperatorError> {
    let f = hbond_fields(space)?;
    let w = |label: &str| c.hbar * c.omega_for(label);
    let (w_mol, w_spin, w_b, w_reg) = (w(hbond::A_MOL), w(hbond::A_SPIN), w(hbond::PHONON), c.hbar * c.omega);
    Ok(SparseOperator::from_action(space, |s| {
        let levels: u32 = f.electrons.iter().map(|&e| s.get(e)).sum();
        let formed = (0..2).filter(|&i| hbond_formed(s, &f, i)).count() as f64;
        let diag = w_mol * s.get(f.a_mol.0) as f64
            + w_spin * s.get(f.a_spin.0) as f64
            + w_b * s.get(f.phonon.0) as f64
            + w_reg * (levels as f64 + s.get(f.spin) as f64 + formed);
        let mut out = vec![(s.clone(), re(diag))];
        for &e in &f.electrons {
            exchange_action(s, f.a_mol.0, f.a_mol.1, c.g_mol, flip_lower(e), flip_raise(e), &mut out);
        }
        let unbonded = |x: &BasisState| !hbond_formed(x, &f, 0) && !hbond_formed(x, &f, 1);
        exchange_action(
            s,
            f.a_spin.0,
            f.a_spin.1,
            c.g_spin,
            |x| unbonded(x).then(|| flip_lower(f.spin)(x)).flatten(),
            |x| unbonded(x).then(|| flip_raise(f.spin)(x)).flatten(),
            &mut out,
        );
        if c.g_tun != 0.0 {
            for i in 0..2 {
                if !hbond_formed(s, &f, i) {
                    let v = s.get(f.bonds[i]) ^ hbond::FAR;
                    out.push((s.with(f.bonds[i], v), re(c.g_tun)));
                }
            }
        }
        for i in 0..2 {
            let bf = f.bonds[i];
            let allowed = |x: &BasisState| hbond_bond_allowed(x, &f, i);
            exchange_action(
                s,
                f.phonon.0,
                f.phonon.1,
                c.g_cov,
                |x| (allowed(x) && hbond_formed(x, &f, i)).then(|| x.with(bf, x.get(bf) & !hbond::FORMED)),
                |x| (allowed(x) && !hbond_formed(x, &f, i)).then(|| x.with(bf, x.get(bf) | hbond::FORMED)),
                &mut out,
            );
        }
        out
    }))
}

/// Conserved quantum counts of the hydrogen-bond model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HbondFamily {
    /// `a_mol†a_mol + Σ` electron level excitations.
    Molecular,
    /// `a_spin†a_spin +` hydrogen spin-down indicator.
    Spin,
    /// `b†b + Σ` formed bonds.
    Bond,
}

pub fn hbond_family_number(space: &HilbertSpace, family: HbondFamily) -> Result<SparseOperator, OperatorError> {
    let f = hbond_fields(space)?;
    Ok(diagonal_from(space, |s| match family {
        HbondFamily::Molecular => {
            (s.get(f.a_mol.0) + f.electrons.iter().map(|&e| s.get(e)).sum::<u32>()) as f64
        }
        HbondFamily::Spin => (s.get(f.a_spin.0) + s.get(f.spin)) as f64,
        HbondFamily::Bond => {
            s.get(f.phonon.0) as f64 + (0..2).filter(|&i| hbond_formed(s, &f, i)).count() as f64
        }
    }))
}
