// Copyright 2026 cqed-chem Contributors
// SPDX-License-Identifier: Apache-2.0

//! Amplitude-ranked basis selection with transition-graph connectivity repair.
//!
//! 1. Run a pilot over the full space and record, per basis state, the
//!    largest amplitude it ever reaches.
//! 2. Keep the top `ceil(f·dim)` states (plus the initial state).
//! 3. While the transition graph induced on the kept set is disconnected,
//!    add every neighbour of the kept set (every state one Hamiltonian
//!    application away).
//! 4. Simulate on the principal submatrix of the kept set.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::analysis;
use crate::dynamics::{
    DynamicsError, LindbladChannel, LindbladSolver, Observable, Propagator, StateVector, TimeSeries,
};
use crate::hilbert::HilbertError;
use crate::models::{linspace, PilotKind, ReductionSpec, ScenarioBundle};
use crate::operators::{SparseOperator, C64};

/// Matrix entries at or below this magnitude are not graph edges.
pub const EDGE_TOL: f64 = 1e-14;
/// Initial-state weight lost to projection above which a warning is logged.
pub const DISCARD_WARN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReductionError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("keep fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("index {index} outside space of dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("initial state has zero weight on the kept states")]
    ZeroWeight,
    #[error("operator dimension {got} does not match the full space ({expected})")]
    DimensionMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// Basis states as nodes, nonzero off-diagonal Hamiltonian entries as
/// weighted undirected edges. Node labels are full-space indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionGraph {
    pub nodes: Vec<usize>,
    /// `(a, b, |H_ab|)` with `a < b`.
    pub edges: Vec<(usize, usize, f64)>,
}

impl TransitionGraph {
    fn adjacency(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut adj: BTreeMap<usize, Vec<usize>> = self.nodes.iter().map(|&n| (n, Vec::new())).collect();
        for &(a, b, _) in &self.edges {
            adj.get_mut(&a).expect("edge endpoint is a node").push(b);
            adj.get_mut(&b).expect("edge endpoint is a node").push(a);
        }
        adj
    }
}

/// Undirected neighbour lists of the nonzero pattern of `h` (both triangles).
fn pattern(h: &SparseOperator) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); h.dim()];
    for (r, c, v) in h.entries() {
        if r != c && v.norm() > EDGE_TOL {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Transition graph induced on `subset` (full-space indices).
pub fn build_graph(h: &SparseOperator, subset: &[usize]) -> TransitionGraph {
    let mut nodes = subset.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    let keep: BTreeSet<usize> = nodes.iter().copied().collect();
    let mut edges = BTreeMap::new();
    for &r in &nodes {
        for (c, v) in h.row(r) {
            if r != c && keep.contains(&c) && v.norm() > EDGE_TOL {
                let (a, b) = (r.min(c), r.max(c));
                let w: &mut f64 = edges.entry((a, b)).or_insert(0.0);
                *w = w.max(v.norm());
            }
        }
    }
    let edges = edges.into_iter().map(|((a, b), w)| (a, b, w)).collect();
    TransitionGraph { nodes, edges }
}

/// Breadth-first reachability from the lowest node covers every node.
pub fn is_connected(g: &TransitionGraph) -> Result<bool, ReductionError> {
    let start = *g.nodes.first().ok_or(ReductionError::EmptyGraph)?;
    Ok(component(&g.adjacency(), start).len() == g.nodes.len())
}

fn component(adj: &BTreeMap<usize, Vec<usize>>, start: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[&u] {
            if seen.insert(v) {
                queue.push_back(v);
            }
        }
    }
    seen
}

/// Every index outside `subset` one Hamiltonian application away from it.
pub fn neighbors_of(h: &SparseOperator, subset: &[usize]) -> BTreeSet<usize> {
    neighbors_in(&pattern(h), subset)
}

fn neighbors_in(adj: &[Vec<usize>], subset: &[usize]) -> BTreeSet<usize> {
    let inside: BTreeSet<usize> = subset.iter().copied().collect();
    subset.iter().flat_map(|&s| adj[s].iter().copied()).filter(|j| !inside.contains(j)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    SeedAmplitude,
    NeighborRepair,
}

/// Kept basis subset with index maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSpace {
    full_dim: usize,
    kept: Vec<usize>,
    full_to_reduced: Vec<Option<usize>>,
    provenance: Vec<Provenance>,
    iterations: usize,
    /// The full transition graph was disconnected; `kept` holds only the
    /// components reached by the initial state.
    component_only: bool,
}

impl ReducedSpace {
    fn new(full_dim: usize, tagged: BTreeMap<usize, Provenance>, iterations: usize, component_only: bool) -> Self {
        let kept: Vec<usize> = tagged.keys().copied().collect();
        let provenance = tagged.values().copied().collect();
        let mut full_to_reduced = vec![None; full_dim];
        for (k, &i) in kept.iter().enumerate() {
            full_to_reduced[i] = Some(k);
        }
        Self { full_dim, kept, full_to_reduced, provenance, iterations, component_only }
    }

    /// Identity reduction over `dim` states.
    pub fn full(dim: usize) -> Self {
        Self::new(dim, (0..dim).map(|i| (i, Provenance::SeedAmplitude)).collect(), 0, false)
    }

    pub fn full_dim(&self) -> usize {
        self.full_dim
    }

    pub fn dim(&self) -> usize {
        self.kept.len()
    }

    /// Kept full-space indices, ascending.
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn reduced_index(&self, full: usize) -> Option<usize> {
        self.full_to_reduced.get(full).copied().flatten()
    }

    pub fn full_index(&self, reduced: usize) -> usize {
        self.kept[reduced]
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn count(&self, tag: Provenance) -> usize {
        self.provenance.iter().filter(|&&p| p == tag).count()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn component_only(&self) -> bool {
        self.component_only
    }

    pub fn is_identity(&self) -> bool {
        self.kept.len() == self.full_dim
    }

    fn check(&self, dim: usize) -> Result<(), ReductionError> {
        if dim != self.full_dim {
            return Err(ReductionError::DimensionMismatch { got: dim, expected: self.full_dim });
        }
        Ok(())
    }

    /// Principal submatrix on the kept states.
    pub fn project_operator(&self, op: &SparseOperator) -> Result<SparseOperator, ReductionError> {
        self.check(op.dim())?;
        if self.is_identity() {
            return Ok(op.clone());
        }
        Ok(op.restrict(&self.kept))
    }

    pub fn project_channel(&self, ch: &LindbladChannel) -> Result<LindbladChannel, ReductionError> {
        Ok(LindbladChannel { label: ch.label.clone(), op: self.project_operator(&ch.op)?, gamma: ch.gamma })
    }

    /// Restricted observables keep their label and kind; a restricted
    /// non-diagonal projector is a compression, not a projector.
    pub fn project_observable(&self, obs: &Observable) -> Result<Observable, ReductionError> {
        Ok(Observable { label: obs.label.clone(), op: self.project_operator(&obs.op)?, kind: obs.kind })
    }

    /// Restricted, renormalized state and the weight it lost.
    pub fn project_state(&self, psi: &StateVector) -> Result<(StateVector, f64), ReductionError> {
        self.check(psi.dim())?;
        if self.is_identity() {
            return Ok((psi.clone(), 0.0));
        }
        let amps: Vec<C64> = self.kept.iter().map(|&i| psi.amplitudes()[i]).collect();
        let weight: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if weight == 0.0 {
            return Err(ReductionError::ZeroWeight);
        }
        let discarded = (1.0 - weight).max(0.0);
        if discarded > DISCARD_WARN {
            log::warn!("projection discards {discarded:.3e} of the initial state's weight");
        }
        let (state, _) = StateVector::normalized(amps)?;
        Ok((state, discarded))
    }

    /// Embed a reduced vector back into the full space (zeros elsewhere).
    pub fn lift(&self, reduced: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.full_dim];
        for (k, &i) in self.kept.iter().enumerate() {
            out[i] = reduced[k];
        }
        out
    }
}

/// Per-state maximum of `|⟨i|ψ(t)⟩|` over `times` (closed pilot).
pub fn amplitude_profile(
    h: &SparseOperator,
    psi0: &StateVector,
    times: &[f64],
    hbar: f64,
) -> Result<Vec<f64>, ReductionError> {
    let p = Propagator::new(h, psi0, hbar)?;
    let mut profile = vec![0.0f64; psi0.dim()];
    for psi in p.states_at(times) {
        for (m, a) in profile.iter_mut().zip(psi.amplitudes()) {
            *m = m.max(a.norm());
        }
    }
    Ok(profile)
}

/// Per-state maximum of `√⟨i|ρ(t)|i⟩` over `times` (open pilot).
pub fn amplitude_profile_open(
    h: &SparseOperator,
    channels: &[LindbladChannel],
    psi0: &StateVector,
    times: &[f64],
    dt: f64,
    hbar: f64,
) -> Result<Vec<f64>, ReductionError> {
    let solver = LindbladSolver::new(h, channels, hbar)?;
    let mut profile = vec![0.0f64; psi0.dim()];
    let rho0 = crate::dynamics::DensityMatrix::from_pure(psi0);
    solver.run(&rho0, times, dt, |_, _, rho| {
        for (m, p) in profile.iter_mut().zip(rho.populations()) {
            *m = m.max(p.max(0.0).sqrt());
        }
    })?;
    Ok(profile)
}

/// `ceil(f·dim)`, guarding against `0.2·85 = 17.000000000000004`.
pub fn keep_count(keep_fraction: f64, dim: usize) -> usize {
    ((keep_fraction * dim as f64 - 1e-9).ceil().max(1.0) as usize).min(dim)
}

/// Indices of the `ceil(f·dim)` largest profile values (ties by ascending
/// index), ascending. `initial` displaces the lowest-ranked pick if needed.
pub fn select_top(profile: &[f64], keep_fraction: f64, initial: usize) -> Result<Vec<usize>, ReductionError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(ReductionError::BadFraction(keep_fraction));
    }
    let dim = profile.len();
    if initial >= dim {
        return Err(ReductionError::IndexOutOfRange { index: initial, dim });
    }
    let m = keep_count(keep_fraction, dim);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| profile[b].total_cmp(&profile[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = order[..m].to_vec();
    if !picked.contains(&initial) {
        picked[m - 1] = initial;
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Grow `subset` by whole neighbour shells until its transition graph is
/// connected. If the full graph is disconnected, returns the component of
/// `initial` and flags it.
pub fn repair_connectivity(
    h: &SparseOperator,
    subset: &[usize],
    initial: usize,
) -> Result<ReducedSpace, ReductionError> {
    repair_connectivity_rooted(h, subset, &[initial])
}

/// [`repair_connectivity`] for an initial state supported on several basis
/// states. When the roots sit in different components of the full graph the
/// result is the union of their components, flagged. A selection that already
/// covers the whole space is returned unchanged: it is closed under `h`.
pub fn repair_connectivity_rooted(
    h: &SparseOperator,
    subset: &[usize],
    roots: &[usize],
) -> Result<ReducedSpace, ReductionError> {
    let dim = h.dim();
    if let Some(&bad) = subset.iter().chain(roots).find(|&&i| i >= dim) {
        return Err(ReductionError::IndexOutOfRange { index: bad, dim });
    }
    let &first = roots.first().ok_or(ReductionError::EmptyGraph)?;
    let adj = pattern(h);
    let mut tagged: BTreeMap<usize, Provenance> = subset.iter().map(|&i| (i, Provenance::SeedAmplitude)).collect();
    for &r in roots {
        tagged.entry(r).or_insert(Provenance::SeedAmplitude);
    }
    if tagged.len() == dim {
        return Ok(ReducedSpace::new(dim, tagged, 0, false));
    }
    let mut iterations = 0;
    loop {
        let nodes: Vec<usize> = tagged.keys().copied().collect();
        let reach = induced_component(&adj, &tagged, first);
        if reach.len() == nodes.len() {
            return Ok(ReducedSpace::new(dim, tagged, iterations, false));
        }
        let frontier = neighbors_in(&adj, &nodes);
        if frontier.is_empty() {
            // Closed under H yet disconnected: the full graph splits.
            let mut reach = reach;
            for &r in &roots[1..] {
                reach.extend(induced_component(&adj, &tagged, r));
            }
            let tagged = tagged.into_iter().filter(|(i, _)| reach.contains(i)).collect();
            return Ok(ReducedSpace::new(dim, tagged, iterations, true));
        }
        for j in frontier {
            tagged.insert(j, Provenance::NeighborRepair);
        }
        iterations += 1;
    }
}

fn induced_component(adj: &[Vec<usize>], nodes: &BTreeMap<usize, Provenance>, start: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if nodes.contains_key(&v) && seen.insert(v) {
                queue.push_back(v);
            }
        }
    }
    seen
}

/// Comparison of one observable between full and reduced runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveComparison {
    pub label: String,
    pub pearson: f64,
    /// Mean over the last 10% of samples.
    pub stable_full: f64,
    pub stable_reduced: f64,
    pub stable_offset: f64,
}

/// Fraction of the horizon treated as the stable tail.
pub const TAIL_FRACTION: f64 = 0.1;

pub fn compare_curves(full: &TimeSeries, reduced: &TimeSeries) -> Vec<CurveComparison> {
    full.labels
        .iter()
        .zip(&full.values)
        .filter_map(|(label, f)| {
            let r = reduced.column(label)?;
            let (sf, sr) = (analysis::tail_mean(f, TAIL_FRACTION), analysis::tail_mean(r, TAIL_FRACTION));
            Some(CurveComparison {
                label: label.clone(),
                pearson: analysis::pearson(f, r),
                stable_full: sf,
                stable_reduced: sr,
                stable_offset: sr - sf,
            })
        })
        .collect()
}

/// Summary of one reduction, serialized as `reduction.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionReport {
    pub keep_fraction: f64,
    pub pilot: PilotKind,
    pub pilot_samples: usize,
    pub dim_full: usize,
    /// `ceil(keep_fraction · dim_full)`, before connectivity repair.
    pub dim_selected: usize,
    pub dim_kept: usize,
    pub repair_iterations: usize,
    pub provenance_counts: BTreeMap<String, usize>,
    pub initial_index: usize,
    pub discarded_weight: f64,
    pub component_only: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub comparison: Vec<CurveComparison>,
}

/// Index of the largest initial amplitude (lowest index on ties).
pub fn initial_index(psi: &StateVector) -> usize {
    let a = psi.amplitudes();
    (0..a.len()).fold(0, |best, i| if a[i].norm() > a[best].norm() { i } else { best })
}

/// Select, repair and project a bundle. The returned bundle simulates on the
/// kept states with the same solver, times and observables.
pub fn reduce_bundle(
    bundle: &ScenarioBundle,
    spec: &ReductionSpec,
) -> Result<(ScenarioBundle, ReducedSpace, ReductionReport), ReductionError> {
    let f = spec.keep_fraction.unwrap_or(1.0);
    if !(f > 0.0 && f <= 1.0) {
        return Err(ReductionError::BadFraction(f));
    }
    let horizon = bundle.times.last().copied().unwrap_or(0.0);
    let pilot_times = linspace(horizon, spec.pilot_samples.max(2));
    let profile = match spec.pilot {
        PilotKind::Closed => amplitude_profile(&bundle.hamiltonian, &bundle.initial, &pilot_times, bundle.hbar)?,
        PilotKind::Lindblad => amplitude_profile_open(
            &bundle.hamiltonian,
            &bundle.channels,
            &bundle.initial,
            &pilot_times,
            bundle.dt,
            bundle.hbar,
        )?,
    };
    let start = initial_index(&bundle.initial);
    let selected = select_top(&profile, f, start)?;
    let mut roots = vec![start];
    roots.extend((0..bundle.dim()).filter(|&i| i != start && bundle.initial.amplitudes()[i].norm() > 0.0));
    let space = repair_connectivity_rooted(&bundle.hamiltonian, &selected, &roots)?;
    let (initial, discarded) = space.project_state(&bundle.initial)?;
    let reduced = ScenarioBundle {
        id: bundle.id,
        space: if space.is_identity() {
            bundle.space.clone()
        } else {
            std::sync::Arc::new(bundle.space.subspace(space.kept())?)
        },
        hamiltonian: space.project_operator(&bundle.hamiltonian)?,
        channels: bundle.channels.iter().map(|c| space.project_channel(c)).collect::<Result<_, _>>()?,
        initial,
        observables: bundle.observables.iter().map(|o| space.project_observable(o)).collect::<Result<_, _>>()?,
        partitions: bundle.partitions.clone(),
        hbar: bundle.hbar,
        solver: bundle.solver,
        times: bundle.times.clone(),
        dt: bundle.dt,
        metadata: {
            let mut m = bundle.metadata.clone();
            m.insert("dim".into(), space.dim().to_string());
            m.insert("reduced_from".into(), bundle.dim().to_string());
            m
        },
    };
    let provenance_counts = [Provenance::SeedAmplitude, Provenance::NeighborRepair]
        .into_iter()
        .map(|p| {
            let key = match p {
                Provenance::SeedAmplitude => "seed-amplitude",
                Provenance::NeighborRepair => "neighbor-repair",
            };
            (key.to_string(), space.count(p))
        })
        .collect();
    let report = ReductionReport {
        keep_fraction: f,
        pilot: spec.pilot,
        pilot_samples: pilot_times.len(),
        dim_full: bundle.dim(),
        dim_selected: selected.len(),
        dim_kept: space.dim(),
        repair_iterations: space.iterations(),
        provenance_counts,
        initial_index: start,
        discarded_weight: discarded,
        component_only: space.component_only(),
        comparison: Vec::new(),
    };
    Ok((reduced, space, report))
}
