// Copyright 2026 cqed-chem Contributors
// SPDX-License-Identifier: Apache-2.0

//! The four named scenarios: configuration schema, defaults and builders.
//!
//! | id            | system                                              |
//! |---------------|-----------------------------------------------------|
//! | `oh_1e`       | one electron in an O–H double well, one cavity mode |
//! | `oh_2e`       | two electrons with frozen spins, one mode per spin  |
//! | `phonon_grid` | atoms hopping on a k×k grid, phonon-driven bonding  |
//! | `hbond`       | hydrogen shared between two oxygens                 |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    observe_closed, observe_lindblad, DensityMatrix, DynamicsError, LindbladChannel, Observable, StateVector,
    TimeSeries,
};
use crate::hilbert::{
    AllOf, BasisState, Bound, Distinct, Fixed, HilbertError, HilbertSpace, Layout, ModeKind, ModeSpec,
    Predicate, QuantumCount, RegisterSpec,
};
use crate::operators::{
    build_grid_h, build_hbond_h, build_jc_rwa, build_two_electron_h, diagonal_from, hbond, hybrid_basis_change, jc,
    ladder, number, two_electron, CouplingSpec, GridGeometry, Ladder, OperatorError, SparseOperator, C64,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Largest grid side; keeps the cell count well inside `u32`.
pub const MAX_GRID_SIDE: usize = 4096;
/// Largest atom count. Placements alone outgrow any usable dimension cap
/// long before this.
pub const MAX_GRID_ATOMS: usize = 64;

fn invalid(field: &str, reason: impl Into<String>) -> ModelError {
    ModelError::Config { field: field.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioId {
    #[serde(rename = "oh_1e")]
    Oh1e,
    #[serde(rename = "oh_2e")]
    Oh2e,
    #[serde(rename = "phonon_grid")]
    PhononGrid,
    #[serde(rename = "hbond")]
    Hbond,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [Self::Oh1e, Self::Oh2e, Self::PhononGrid, Self::Hbond];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Oh1e => "oh_1e",
            Self::Oh2e => "oh_2e",
            Self::PhononGrid => "phonon_grid",
            Self::Hbond => "hbond",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Self::Oh1e => "single electron in an O-H double well coupled to one cavity mode",
            Self::Oh2e => "two spin-frozen electrons, one cavity mode per spin",
            Self::PhononGrid => "atoms tunneling on a k x k grid, phonon-assisted covalent bonding",
            Self::Hbond => "hydrogen bond: three electrons, molecular/spin photons and a phonon",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|id| id.as_str() == s).ok_or_else(|| {
            let known: Vec<_> = Self::ALL.iter().map(|id| id.as_str()).collect();
            format!("unknown scenario `{s}` (expected one of {})", known.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Closed,
    Lindblad,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Closed => "closed",
            Self::Lindblad => "lindblad",
        }
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "closed" => Ok(Self::Closed),
            "lindblad" => Ok(Self::Lindblad),
            _ => Err(format!("unknown solver `{s}` (expected closed or lindblad)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelKind {
    /// `A = a` on every photon mode.
    #[serde(rename = "photon-escape")]
    PhotonEscape,
    /// `A = b` on every phonon mode.
    #[serde(rename = "phonon-loss")]
    PhononLoss,
}

impl ChannelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PhotonEscape => "photon-escape",
            Self::PhononLoss => "phonon-loss",
        }
    }

    fn mode_kind(self) -> ModeKind {
        match self {
            Self::PhotonEscape => ModeKind::Photon,
            Self::PhononLoss => ModeKind::Phonon,
        }
    }

    /// 0.1·g_mol for photon escape, 0.1·g_cov for phonon loss.
    pub fn default_rate(self, c: &CouplingSpec) -> f64 {
        match self {
            Self::PhotonEscape => 0.1 * c.g_mol.abs(),
            Self::PhononLoss => 0.1 * c.g_cov.abs(),
        }
    }
}

impl FromStr for ChannelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "photon-escape" => Ok(Self::PhotonEscape),
            "phonon-loss" => Ok(Self::PhononLoss),
            _ => Err(format!("unknown channel `{s}` (expected photon-escape or phonon-loss)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    /// Rate in inverse time units; defaults per [`ChannelKind::default_rate`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl ChannelSpec {
    pub fn rate(&self, c: &CouplingSpec) -> f64 {
        self.gamma.unwrap_or_else(|| self.kind.default_rate(c))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    /// Final sample time; scenario default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Lindblad step; `0.01/ω` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// `lindblad` when channels are configured, `closed` otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverKind>,
}

/// Photon truncation for the O–H scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OhSpec {
    pub photon_cutoff: u32,
}

impl Default for OhSpec {
    fn default() -> Self {
        Self { photon_cutoff: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub k: usize,
    pub atoms: usize,
    pub phonons: u32,
    pub phonon_cutoff: u32,
    /// Initial cell (row-major) of each atom; the first `atoms` cells when empty.
    pub positions: Vec<u32>,
    /// Initially formed bonds as 1-based atom pairs.
    pub bonds: Vec<[usize; 2]>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { k: 3, atoms: 3, phonons: 2, phonon_cutoff: 3, positions: Vec::new(), bonds: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HbondSpec {
    pub mol_cutoff: u32,
    pub spin_cutoff: u32,
    pub phonon_cutoff: u32,
    pub a_mol: u32,
    pub a_spin: u32,
    pub phonons: u32,
    /// Hybrid level (0 lower, 1 upper) of the o1, h, o2 electrons.
    pub levels: [u32; 3],
    /// Hydrogen spin, 0 up or 1 down.
    pub spin_h: u32,
    /// Bond registers: bit 0 formed, bit 1 far.
    pub bonds: [u32; 2],
}

impl Default for HbondSpec {
    fn default() -> Self {
        Self {
            mol_cutoff: 2,
            spin_cutoff: 2,
            phonon_cutoff: 3,
            a_mol: 2,
            a_spin: 1,
            phonons: 1,
            levels: [0, 1, 0],
            spin_h: hbond::UP,
            bonds: [0, hbond::FORMED],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PilotKind {
    Closed,
    Lindblad,
}

/// State-space reduction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReductionSpec {
    /// Fraction of basis states to keep; reduction is off when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keep_fraction: Option<f64>,
    pub pilot: PilotKind,
    pub pilot_samples: usize,
    /// Also run the full space and emit both curves.
    pub compare_full: bool,
}

impl Default for ReductionSpec {
    fn default() -> Self {
        Self { keep_fraction: None, pilot: PilotKind::Closed, pilot_samples: 200, compare_full: false }
    }
}

/// Everything needed to build and run one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioId,
    #[serde(default)]
    pub coupling: CouplingSpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelSpec>,
    #[serde(default)]
    pub oh: OhSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub hbond: HbondSpec,
    #[serde(default)]
    pub reduction: ReductionSpec,
}

impl ScenarioConfig {
    /// Defaults for `id`, including its coupling constants.
    pub fn new(id: ScenarioId) -> Self {
        let mut coupling = CouplingSpec::default();
        match id {
            ScenarioId::Oh1e | ScenarioId::Oh2e => {}
            ScenarioId::PhononGrid => {
                coupling.g_cov = 0.01;
                coupling.g_tun = 0.001;
            }
            ScenarioId::Hbond => {
                coupling.g_mol = 0.001;
                coupling.g_spin = 0.01;
                coupling.g_tun = 0.01;
                coupling.g_cov = 0.01;
            }
        }
        Self {
            scenario: id,
            coupling,
            run: RunSpec::default(),
            channels: Vec::new(),
            oh: OhSpec::default(),
            grid: GridSpec::default(),
            hbond: HbondSpec::default(),
            reduction: ReductionSpec::default(),
        }
    }

    pub fn solver(&self) -> SolverKind {
        self.run.solver.unwrap_or(if self.channels.is_empty() { SolverKind::Closed } else { SolverKind::Lindblad })
    }

    /// Dissipative runs default to `20/γ_min`, long enough to settle.
    pub fn horizon(&self) -> f64 {
        if let Some(h) = self.run.horizon {
            return h;
        }
        let base: f64 = match self.scenario {
            ScenarioId::Oh1e | ScenarioId::Oh2e => 1000.0,
            ScenarioId::PhononGrid => 10_000.0,
            ScenarioId::Hbond => 700.0,
        };
        let slowest = self
            .channels
            .iter()
            .map(|ch| ch.rate(&self.coupling))
            .filter(|&g| g > 0.0)
            .fold(f64::INFINITY, f64::min);
        if self.solver() == SolverKind::Lindblad && slowest.is_finite() {
            base.max(20.0 / slowest)
        } else {
            base
        }
    }

    pub fn samples(&self) -> usize {
        self.run.samples.unwrap_or(match self.scenario {
            ScenarioId::PhononGrid => 4000,
            _ => 1001,
        })
    }

    pub fn dt(&self) -> f64 {
        self.run.dt.unwrap_or(0.01 / self.coupling.omega)
    }

    pub fn times(&self) -> Vec<f64> {
        linspace(self.horizon(), self.samples())
    }

    /// Field-level checks that do not need the Hilbert space.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.coupling.validate().map_err(|e| match e {
            OperatorError::InvalidCoupling { field, reason } => invalid(&format!("coupling.{field}"), reason),
            other => other.into(),
        })?;
        let h = self.horizon();
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid("run.horizon", format!("must be positive, got {h}")));
        }
        if self.samples() < 2 {
            return Err(invalid("run.samples", "need at least 2 samples"));
        }
        let dt = self.dt();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("run.dt", format!("must be positive, got {dt}")));
        }
        if self.solver() == SolverKind::Closed && !self.channels.is_empty() {
            return Err(invalid("channels", "dissipative channels need the lindblad solver"));
        }
        for (i, ch) in self.channels.iter().enumerate() {
            let g = ch.rate(&self.coupling);
            if !(g >= 0.0 && g.is_finite()) {
                return Err(invalid(&format!("channels[{i}].gamma"), format!("must be non-negative, got {g}")));
            }
            let available = match ch.kind {
                ChannelKind::PhotonEscape => !matches!(self.scenario, ScenarioId::PhononGrid),
                ChannelKind::PhononLoss => matches!(self.scenario, ScenarioId::PhononGrid | ScenarioId::Hbond),
            };
            if !available {
                return Err(invalid(
                    &format!("channels[{i}].kind"),
                    format!("scenario {} has no mode for channel {}", self.scenario, ch.kind.as_str()),
                ));
            }
        }
        if let Some(f) = self.reduction.keep_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(invalid("reduction.keep_fraction", format!("must lie in (0, 1], got {f}")));
            }
        }
        if self.reduction.pilot_samples < 1 {
            return Err(invalid("reduction.pilot_samples", "need at least 1 sample"));
        }
        match self.scenario {
            ScenarioId::Oh1e | ScenarioId::Oh2e => {
                if self.oh.photon_cutoff < 1 {
                    return Err(invalid("oh.photon_cutoff", "must be at least 1"));
                }
            }
            ScenarioId::PhononGrid => self.validate_grid()?,
            ScenarioId::Hbond => self.validate_hbond()?,
        }
        Ok(())
    }

    fn validate_grid(&self) -> Result<(), ModelError> {
        let g = &self.grid;
        if g.k < 2 || g.k > MAX_GRID_SIDE {
            return Err(invalid("grid.k", format!("grid side must be between 2 and {MAX_GRID_SIDE}, got {}", g.k)));
        }
        let most = (g.k * g.k).min(MAX_GRID_ATOMS);
        if g.atoms == 0 || g.atoms > most {
            return Err(invalid("grid.atoms", format!("must be between 1 and {most}, got {}", g.atoms)));
        }
        if g.phonons > g.phonon_cutoff {
            return Err(invalid("grid.phonons", format!("exceeds phonon_cutoff {}", g.phonon_cutoff)));
        }
        let pos = self.grid_positions();
        if pos.len() != g.atoms {
            return Err(invalid("grid.positions", format!("need {} entries, got {}", g.atoms, pos.len())));
        }
        let cells = (g.k * g.k) as u32;
        let mut occupied = std::collections::BTreeSet::new();
        for &p in &pos {
            if p >= cells {
                return Err(invalid("grid.positions", format!("cell {p} outside the {cells}-cell grid")));
            }
            if !occupied.insert(p) {
                return Err(invalid("grid.positions", format!("cell {p} occupied twice")));
            }
        }
        let geom = GridGeometry::new(g.k, g.atoms)?;
        let mut bonded = vec![false; g.atoms];
        for &[p, q] in &g.bonds {
            if p == 0 || q == 0 || p > g.atoms || q > g.atoms || p == q {
                return Err(invalid("grid.bonds", format!("bad atom pair [{p}, {q}]")));
            }
            let (p, q) = (p - 1, q - 1);
            if !geom.adjacent(pos[p] as usize, pos[q] as usize) {
                return Err(invalid("grid.bonds", format!("atoms {} and {} are not adjacent", p + 1, q + 1)));
            }
            if bonded[p] || bonded[q] {
                return Err(invalid("grid.bonds", "an atom may take part in at most one bond"));
            }
            bonded[p] = true;
            bonded[q] = true;
        }
        Ok(())
    }

    fn validate_hbond(&self) -> Result<(), ModelError> {
        let h = &self.hbond;
        for (name, v, cut) in [
            ("hbond.a_mol", h.a_mol, h.mol_cutoff),
            ("hbond.a_spin", h.a_spin, h.spin_cutoff),
            ("hbond.phonons", h.phonons, h.phonon_cutoff),
        ] {
            if v > cut {
                return Err(invalid(name, format!("occupation {v} exceeds cutoff {cut}")));
            }
        }
        if h.mol_cutoff < 2 {
            return Err(invalid("hbond.mol_cutoff", "a_mol needs cutoff at least 2"));
        }
        if h.levels.iter().any(|&l| l > 1) {
            return Err(invalid("hbond.levels", "levels are 0 or 1"));
        }
        if h.spin_h > 1 {
            return Err(invalid("hbond.spin_h", "spin is 0 (up) or 1 (down)"));
        }
        if h.bonds.iter().any(|&b| b > 3) {
            return Err(invalid("hbond.bonds", "bond values are 0..=3 (bit 0 formed, bit 1 far)"));
        }
        let state = hbond_initial_values(h);
        if !hbond_admissible(&state) {
            return Err(invalid(
                "hbond.bonds",
                "initial bonds must be close when formed, not both formed, and spin-paired",
            ));
        }
        Ok(())
    }

    fn grid_positions(&self) -> Vec<u32> {
        if self.grid.positions.is_empty() {
            (0..self.grid.atoms as u32).collect()
        } else {
            self.grid.positions.clone()
        }
    }

    /// Build the scenario, refusing spaces above `cap` states.
    pub fn build(&self, cap: usize) -> Result<ScenarioBundle, ModelError> {
        self.validate()?;
        match self.scenario {
            ScenarioId::Oh1e => build_oh_1e(self, cap),
            ScenarioId::Oh2e => build_oh_2e(self, cap),
            ScenarioId::PhononGrid => build_phonon_grid(self, cap),
            ScenarioId::Hbond => build_hbond(self, cap),
        }
    }
}

/// `n` equally spaced points on `[0, horizon]`.
pub fn linspace(horizon: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n).map(|k| horizon * k as f64 / (n - 1) as f64).collect()
}

/// A built scenario, ready to simulate.
#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub id: ScenarioId,
    pub space: Arc<HilbertSpace>,
    pub hamiltonian: SparseOperator,
    pub channels: Vec<LindbladChannel>,
    pub initial: StateVector,
    pub observables: Vec<Observable>,
    /// Groups of observables (indices) that sum to one.
    pub partitions: Vec<Vec<usize>>,
    pub hbar: f64,
    pub solver: SolverKind,
    pub times: Vec<f64>,
    pub dt: f64,
    pub metadata: BTreeMap<String, String>,
}

impl ScenarioBundle {
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn initial_density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(&self.initial)
    }

    pub fn observable(&self, label: &str) -> Option<&Observable> {
        self.observables.iter().find(|o| o.label == label)
    }

    /// Observable curves with the configured solver.
    pub fn simulate(&self) -> Result<TimeSeries, DynamicsError> {
        match self.solver {
            SolverKind::Closed => observe_closed(&self.hamiltonian, &self.initial, &self.observables, &self.times, self.hbar),
            SolverKind::Lindblad => observe_lindblad(
                &self.hamiltonian,
                &self.channels,
                &self.initial_density(),
                &self.observables,
                &self.times,
                self.dt,
                self.hbar,
            ),
        }
    }
}

fn channels_for(
    cfg: &ScenarioConfig,
    space: &HilbertSpace,
    solver: SolverKind,
) -> Result<Vec<LindbladChannel>, ModelError> {
    if solver == SolverKind::Closed {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for ch in &cfg.channels {
        let gamma = ch.rate(&cfg.coupling);
        for mode in space.layout().modes().iter().filter(|m| m.kind == ch.kind.mode_kind()) {
            out.push(LindbladChannel {
                label: format!("{}:{}", ch.kind.as_str(), mode.label),
                op: ladder(space, &mode.label, Ladder::Annihilate)?,
                gamma,
            });
        }
    }
    Ok(out)
}

/// State vector from a superposition of basis states.
fn superposition(space: &HilbertSpace, terms: &[(BasisState, f64)]) -> Result<StateVector, ModelError> {
    let mut amps = vec![C64::new(0.0, 0.0); space.dim()];
    for (s, a) in terms {
        amps[space.index_of(s)?] += C64::new(*a, 0.0);
    }
    Ok(StateVector::normalized(amps)?.0)
}

/// Site projectors `P(O)`, `P(H)` of one hybridized electron register, whose
/// value 0/1 labels the lower/upper hybrid level.
pub fn site_projectors(
    c: &CouplingSpec,
    space: &HilbertSpace,
    register: &str,
) -> Result<[SparseOperator; 2], ModelError> {
    let r = hybrid_basis_change(c)?;
    let field = space.layout().register_field(register)?;
    if space.layout().radix(field) != 2 {
        return Err(OperatorError::NotTwoLevel { label: register.into(), arity: space.layout().radix(field) }.into());
    }
    let make = |site: usize| {
        SparseOperator::from_action(space, |s| {
            let e_in = s.get(field) as usize;
            (0..2u32)
                .map(|e| (s.with(field, e), C64::new(r[e as usize][site] * r[e_in][site], 0.0)))
                .collect()
        })
    };
    Ok([make(0), make(1)])
}

fn build_oh_1e(cfg: &ScenarioConfig, cap: usize) -> Result<ScenarioBundle, ModelError> {
    let c = &cfg.coupling;
    let layout = Layout::new(
        vec![ModeSpec::photon(jc::MODE, cfg.oh.photon_cutoff)],
        vec![RegisterSpec::orbital(jc::ORBITAL)],
    )?;
    let space = HilbertSpace::enumerate(layout, None, cap)?;
    let h = build_jc_rwa(&space, c)?;
    let r = hybrid_basis_change(c)?;
    // |0⟩|O⟩ = Σ_e ⟨Ψ_e|O⟩ |0, Ψ_e⟩.
    let psi0 = superposition(&space, &[(BasisState::new(vec![0, 0]), r[0][0]), (BasisState::new(vec![0, 1]), r[1][0])])?;
    let [p_o, p_h] = site_projectors(c, &space, jc::ORBITAL)?;
    let observables = vec![
        Observable::projector("P(O)", p_o)?,
        Observable::projector("P(H)", p_h)?,
        Observable::hermitian("n_photon", number(&space, jc::MODE)?)?,
    ];
    finish(cfg, space, h, psi0, observables, vec![vec![0, 1]])
}

fn build_oh_2e(cfg: &ScenarioConfig, cap: usize) -> Result<ScenarioBundle, ModelError> {
    use two_electron::*;
    let c = &cfg.coupling;
    let cut = cfg.oh.photon_cutoff;
    let layout = Layout::new(
        vec![ModeSpec::photon(MODES[0], cut), ModeSpec::photon(MODES[1], cut)],
        vec![
            RegisterSpec::orbital(ORBITALS[0]),
            RegisterSpec::spin(SPINS[0]),
            RegisterSpec::orbital(ORBITALS[1]),
            RegisterSpec::spin(SPINS[1]),
        ],
    )?;
    let spin1 = layout.register_field(SPINS[0])?;
    let spin2 = layout.register_field(SPINS[1])?;
    let frozen = AllOf::default().with(Fixed { field: spin1, value: UP }).with(Fixed { field: spin2, value: DOWN });
    let space = HilbertSpace::enumerate(layout, Some(Arc::new(frozen)), cap)?;
    let h = build_two_electron_h(&space, c)?;
    let r = hybrid_basis_change(c)?;
    // |O↑⟩ ⊗ |H↓⟩ expanded over hybrid levels (e1, e2).
    let mut terms = Vec::new();
    for e1 in 0..2u32 {
        for e2 in 0..2u32 {
            let s = BasisState::new(vec![0, 0, e1, UP, e2, DOWN]);
            terms.push((s, r[e1 as usize][0] * r[e2 as usize][1]));
        }
    }
    let psi0 = superposition(&space, &terms)?;
    let [o1, h1] = site_projectors(c, &space, ORBITALS[0])?;
    let [o2, h2] = site_projectors(c, &space, ORBITALS[1])?;
    let prod = |a: &SparseOperator, b: &SparseOperator| a.matmul(b).map(|m| hermitian_cleanup(&m));
    let both_o = prod(&o1, &o2)?;
    let split = prod(&o1, &h2)?.plus(&prod(&h1, &o2)?)?;
    let both_h = prod(&h1, &h2)?;
    let observables = vec![
        Observable::projector("P(O-H+)", both_o)?,
        Observable::projector("P(OH)", split)?,
        Observable::projector("P(O+H-)", both_h)?,
    ];
    finish(cfg, space, h, psi0, observables, vec![vec![0, 1, 2]])
}

/// Products of commuting Hermitian factors are Hermitian up to roundoff;
/// average with the adjoint so the flag is set reliably.
fn hermitian_cleanup(m: &SparseOperator) -> SparseOperator {
    m.plus(&m.adjoint()).expect("same dimension").scaled(C64::new(0.5, 0.0))
}

fn grid_space(cfg: &ScenarioConfig, geom: &GridGeometry, cap: usize) -> Result<HilbertSpace, ModelError> {
    let g = &cfg.grid;
    let mut registers: Vec<RegisterSpec> =
        (0..g.atoms).map(|a| RegisterSpec::position(GridGeometry::position_label(a), geom.cells() as u32)).collect();
    for &(p, q) in &geom.pairs {
        registers.push(RegisterSpec::bond(GridGeometry::bond_label(p, q), 2));
    }
    let layout = Layout::new(vec![ModeSpec::phonon(GridGeometry::PHONON, g.phonon_cutoff)], registers)?;
    let phonon = layout.mode_field(GridGeometry::PHONON)?;
    let positions: Vec<usize> = (0..g.atoms).map(|a| 1 + a).collect();
    let bonds: Vec<usize> = (0..geom.pairs.len()).map(|j| 1 + g.atoms + j).collect();
    let total = g.phonons + g.bonds.len() as u32;
    let bound = if cfg.solver() == SolverKind::Lindblad && !cfg.channels.is_empty() { Bound::AtMost } else { Bound::Exactly };
    let mut fields = vec![phonon];
    fields.extend(&bonds);
    let count = QuantumCount::occupations(&fields, total, bound, |f| layout.radix(f));
    let (geom_a, bonds_a, pos_a) = (geom.clone(), bonds.clone(), positions.clone());
    let adjacent_bonds = Predicate {
        name: "formed bonds join adjacent atoms".into(),
        test: move |v: &[u32]| {
            geom_a.pairs.iter().enumerate().all(|(j, &(p, q))| {
                v[bonds_a[j]] == 0 || geom_a.adjacent(v[pos_a[p]] as usize, v[pos_a[q]] as usize)
            })
        },
    };
    let (geom_m, bonds_m) = (geom.clone(), bonds.clone());
    let monovalent = Predicate {
        name: "each atom in at most one bond".into(),
        test: move |v: &[u32]| {
            let mut used = vec![false; geom_m.atoms];
            for (j, &(p, q)) in geom_m.pairs.iter().enumerate() {
                if v[bonds_m[j]] == 1 {
                    if used[p] || used[q] {
                        return false;
                    }
                    used[p] = true;
                    used[q] = true;
                }
            }
            true
        },
    };
    let constraint = AllOf::default()
        .with(Distinct { fields: positions })
        .with(count)
        .with(adjacent_bonds)
        .with(monovalent);
    Ok(HilbertSpace::enumerate(layout, Some(Arc::new(constraint)), cap)?)
}

fn build_phonon_grid(cfg: &ScenarioConfig, cap: usize) -> Result<ScenarioBundle, ModelError> {
    let g = &cfg.grid;
    // Every placement of the atoms on distinct cells is admissible, so
    // cells!/(cells − atoms)! bounds the dimension from below.
    let cells = g.k * g.k;
    let mut placements = 1usize;
    for i in 0..g.atoms {
        placements = placements.saturating_mul(cells - i);
        if placements > cap {
            return Err(HilbertError::TooLarge { cap }.into());
        }
    }
    let geom = GridGeometry::new(g.k, g.atoms)?;
    let space = grid_space(cfg, &geom, cap)?;
    let h = build_grid_h(&space, &geom, &cfg.coupling)?;
    let mut values = vec![g.phonons];
    values.extend(cfg.grid_positions());
    let formed: Vec<(usize, usize)> = g.bonds.iter().map(|&[p, q]| (p.min(q) - 1, p.max(q) - 1)).collect();
    values.extend(geom.pairs.iter().map(|pair| formed.contains(pair) as u32));
    let psi0 = superposition(&space, &[(BasisState::new(values), 1.0)])?;
    let first_bond = 1 + g.atoms;
    let bond_count = diagonal_from(&space, |s| s.values()[first_bond..].iter().sum::<u32>() as f64);
    let observables = vec![
        Observable::hermitian("bonds", bond_count)?,
        Observable::hermitian("n_phonon", number(&space, GridGeometry::PHONON)?)?,
    ];
    let mut b = finish(cfg, space, h, psi0, observables, Vec::new())?;
    b.metadata.insert("grid".into(), format!("{}x{}", g.k, g.k));
    b.metadata.insert("atoms".into(), g.atoms.to_string());
    Ok(b)
}

/// Initial values in field order a_mol, a_spin, b, o1, h, o2, spin_h, bond_1, bond_2.
fn hbond_initial_values(h: &HbondSpec) -> Vec<u32> {
    let mut v = vec![h.a_mol, h.a_spin, h.phonons];
    v.extend(h.levels);
    v.push(h.spin_h);
    v.extend(h.bonds);
    v
}

/// Structural admissibility of an hbond configuration (field order as in
/// [`hbond_initial_values`]).
fn hbond_admissible(v: &[u32]) -> bool {
    let (spin, bonds) = (v[6], [v[7], v[8]]);
    let formed = |i: usize| bonds[i] & hbond::FORMED != 0;
    if formed(0) && formed(1) {
        return false;
    }
    (0..2).all(|i| !formed(i) || (bonds[i] & hbond::FAR == 0 && spin != hbond::OXYGEN_SPINS[i]))
}

fn build_hbond(cfg: &ScenarioConfig, cap: usize) -> Result<ScenarioBundle, ModelError> {
    let hs = &cfg.hbond;
    let mut registers: Vec<RegisterSpec> = hbond::ELECTRONS.iter().map(|&l| RegisterSpec::orbital(l)).collect();
    registers.push(RegisterSpec::spin(hbond::SPIN_H));
    registers.extend(hbond::BONDS.iter().map(|&l| RegisterSpec::bond(l, 4)));
    let layout = Layout::new(
        vec![
            ModeSpec::photon(hbond::A_MOL, hs.mol_cutoff),
            ModeSpec::photon(hbond::A_SPIN, hs.spin_cutoff),
            ModeSpec::phonon(hbond::PHONON, hs.phonon_cutoff),
        ],
        registers,
    )?;
    let init = hbond_initial_values(hs);
    let dissipative = cfg.solver() == SolverKind::Lindblad && !cfg.channels.is_empty();
    let bound = if dissipative { Bound::AtMost } else { Bound::Exactly };
    let radix = |f: usize| layout.radix(f);
    let formed_weights = vec![0, 1, 0, 1];
    let n_mol = init[0] + init[3] + init[4] + init[5];
    let mol = QuantumCount::occupations(&[0, 3, 4, 5], n_mol, bound, radix);
    let spin = QuantumCount::occupations(&[1, 6], init[1] + init[6], bound, radix);
    let n_b = init[2] + (init[7] & 1) + (init[8] & 1);
    let bond = QuantumCount {
        terms: vec![(2, (0..radix(2)).collect()), (7, formed_weights.clone()), (8, formed_weights)],
        total: n_b,
        bound,
    };
    let structure = Predicate { name: "bond structure".into(), test: |v: &[u32]| hbond_admissible(v) };
    let constraint = AllOf::default().with(mol).with(spin).with(bond).with(structure);
    let space = HilbertSpace::enumerate(layout, Some(Arc::new(constraint)), cap)?;
    let h = build_hbond_h(&space, &cfg.coupling)?;
    let psi0 = superposition(&space, &[(BasisState::new(init), 1.0)])?;
    let formed_proj = |field: usize| diagonal_from(&space, move |s| (s.get(field) & hbond::FORMED) as f64);
    let p1 = formed_proj(7);
    let p2 = formed_proj(8);
    let total = p1.plus(&p2)?;
    let observables = vec![
        Observable::projector("P(bond_1)", p1)?,
        Observable::projector("P(bond_2)", p2)?,
        Observable::hermitian("bonds", total)?,
    ];
    finish(cfg, space, h, psi0, observables, Vec::new())
}

fn finish(
    cfg: &ScenarioConfig,
    space: HilbertSpace,
    h: SparseOperator,
    psi0: StateVector,
    observables: Vec<Observable>,
    partitions: Vec<Vec<usize>>,
) -> Result<ScenarioBundle, ModelError> {
    let solver = cfg.solver();
    let channels = channels_for(cfg, &space, solver)?;
    let mut metadata = BTreeMap::new();
    metadata.insert("scenario".into(), cfg.scenario.to_string());
    metadata.insert("dim".into(), space.dim().to_string());
    if let Some(c) = space.constraint() {
        metadata.insert("constraint".into(), c.describe());
    }
    Ok(ScenarioBundle {
        id: cfg.scenario,
        space: Arc::new(space),
        hamiltonian: h,
        channels,
        initial: psi0,
        observables,
        partitions,
        hbar: cfg.coupling.hbar,
        solver,
        times: cfg.times(),
        dt: cfg.dt(),
        metadata,
    })
}
