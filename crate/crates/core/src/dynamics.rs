// Copyright 2026 cqed-chem Contributors
// SPDX-License-Identifier: Apache-2.0

//! Closed-system spectral propagation, Lindblad integration and observables.
//!
//! Closed evolution expands the initial state in the eigenbasis of `H`:
//! `ψ(t) = Σ_j e^{−iE_j t/ħ} λ_j |ψ_j⟩` with `λ_j = ⟨ψ_j|ψ₀⟩`.
//!
//! Open evolution integrates
//! `ρ̇ = −(i/ħ)[H, ρ] + Σ_k γ_k (A_k ρ A_k† − ½{A_k†A_k, ρ})`
//! with fixed-step RK4 and re-symmetrizes `ρ ← (ρ + ρ†)/2` after every step.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::operators::{SparseOperator, C64};

pub const NORM_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-9;
pub const IMAG_RESIDUE_TOL: f64 = 1e-9;
pub const PROJECTOR_TOL: f64 = 1e-10;
/// Trace drift beyond which a Lindblad step is declared unstable.
pub const INSTABILITY_DRIFT: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("operator is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("state is not normalized: norm {0}")]
    NotNormalized(f64),
    #[error("density matrix trace {0} differs from 1")]
    BadTrace(f64),
    #[error("observable `{0}` is not Hermitian")]
    NonHermitianObservable(String),
    #[error("observable `{0}` is not idempotent")]
    NotProjector(String),
    #[error("expectation has imaginary residue {0:.3e}; the observable is not Hermitian")]
    ImaginaryExpectation(f64),
    #[error("invalid time grid: {0}")]
    BadTimes(String),
    #[error("channel `{0}` has negative or non-finite rate")]
    BadRate(String),
    #[error("integration unstable at t = {time}: trace drift {drift:.3e}; use a smaller dt (current {dt})")]
    Unstable { time: f64, drift: f64, dt: f64 },
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Result<Self, DynamicsError> {
        let norm = norm2(&amps);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(DynamicsError::NotNormalized(norm));
        }
        Ok(Self { amps })
    }

    /// Rescales `amps` to unit norm. Returns the original norm alongside.
    pub fn normalized(mut amps: Vec<C64>) -> Result<(Self, f64), DynamicsError> {
        let norm = norm2(&amps);
        if norm == 0.0 || !norm.is_finite() {
            return Err(DynamicsError::NotNormalized(norm));
        }
        for a in &mut amps {
            *a /= norm;
        }
        Ok((Self { amps }, norm))
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut amps = vec![zero(); dim];
        amps[i] = C64::new(1.0, 0.0);
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.amps)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Dense Hermitian, unit-trace density matrix (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl DensityMatrix {
    /// Checks Hermiticity and unit trace.
    pub fn from_row_major(dim: usize, data: Vec<C64>) -> Result<Self, DynamicsError> {
        if data.len() != dim * dim {
            return Err(DynamicsError::DimensionMismatch(data.len(), dim * dim));
        }
        let rho = Self { dim, data };
        let defect = rho.hermitian_defect();
        if defect > 1e-12 {
            return Err(DynamicsError::NotHermitian(defect));
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(DynamicsError::BadTrace(tr));
        }
        Ok(rho)
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let n = psi.dim();
        let a = psi.amplitudes();
        let mut data = vec![zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = a[i] * a[j].conj();
            }
        }
        Self { dim: n, data }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let mut data = vec![zero(); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = C64::new(1.0 / dim as f64, 0.0);
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).collect()
    }

    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        worst
    }

    pub fn purity(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let eig = SymmetricEigen::new(self.to_dense());
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn symmetrize(&mut self) {
        let n = self.dim;
        for i in 0..n {
            let d = &mut self.data[i * n + i];
            *d = C64::new(d.re, 0.0);
            for j in i + 1..n {
                let avg = (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5;
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg.conj();
            }
        }
    }
}

/// Eigenpairs of a Hermitian operator, energies ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub energies: Vec<f64>,
    /// Column `j` is the eigenvector of `energies[j]`.
    pub vectors: DMatrix<C64>,
}

pub fn eigendecompose(h: &SparseOperator) -> Result<Spectrum, DynamicsError> {
    if !h.is_hermitian() {
        return Err(DynamicsError::NotHermitian(h.hermitian_defect()));
    }
    let n = h.dim();
    // Real symmetric matrices (every shipped model) take the cheaper real path.
    let (values, vectors) = if h.entries().all(|(_, _, v)| v.im == 0.0) {
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (r, c, v) in h.entries() {
            m[(r, c)] = v.re;
        }
        let eig = SymmetricEigen::new(m);
        (eig.eigenvalues, eig.eigenvectors.map(|x| C64::new(x, 0.0)))
    } else {
        let eig = SymmetricEigen::new(h.to_dense());
        (eig.eigenvalues, eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let energies = order.iter().map(|&k| values[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    Ok(Spectrum { energies, vectors })
}

/// Spectral propagator for one initial state.
#[derive(Debug, Clone)]
pub struct Propagator {
    spectrum: Spectrum,
    coeffs: Vec<C64>,
    hbar: f64,
    /// Eigenvectors as a real matrix when they have no imaginary part.
    real_vectors: Option<DMatrix<f64>>,
}

/// Sample times propagated per batched matrix product.
const BATCH: usize = 128;

impl Propagator {
    pub fn new(h: &SparseOperator, psi0: &StateVector, hbar: f64) -> Result<Self, DynamicsError> {
        if h.dim() != psi0.dim() {
            return Err(DynamicsError::DimensionMismatch(h.dim(), psi0.dim()));
        }
        let spectrum = eigendecompose(h)?;
        Ok(Self::from_spectrum(spectrum, psi0, hbar))
    }

    pub fn from_spectrum(spectrum: Spectrum, psi0: &StateVector, hbar: f64) -> Self {
        let v = &spectrum.vectors;
        let n = psi0.dim();
        let a = psi0.amplitudes();
        let coeffs = (0..n).map(|j| (0..n).map(|i| v[(i, j)].conj() * a[i]).sum()).collect();
        let real_vectors = v.iter().all(|z| z.im == 0.0).then(|| v.map(|z| z.re));
        Self { spectrum, coeffs, hbar, real_vectors }
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// Eigenbasis expansion coefficients `λ_j = ⟨ψ_j|ψ₀⟩`.
    pub fn coefficients(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn state_at(&self, t: f64) -> StateVector {
        let n = self.coeffs.len();
        let phased: Vec<C64> = self
            .coeffs
            .iter()
            .zip(&self.spectrum.energies)
            .map(|(c, e)| c * C64::from_polar(1.0, -e * t / self.hbar))
            .collect();
        let v = &self.spectrum.vectors;
        let mut amps = vec![zero(); n];
        for j in 0..n {
            let p = phased[j];
            if p.norm_sqr() == 0.0 {
                continue;
            }
            for (i, a) in amps.iter_mut().enumerate() {
                *a += v[(i, j)] * p;
            }
        }
        StateVector { amps }
    }

    /// `ψ(t)` for many times, batched into dense matrix products.
    pub fn states_at(&self, times: &[f64]) -> Vec<StateVector> {
        let n = self.coeffs.len();
        let mut out = Vec::with_capacity(times.len());
        for chunk in times.chunks(BATCH) {
            let m = chunk.len();
            let phase = |j: usize, k: usize| {
                self.coeffs[j] * C64::from_polar(1.0, -self.spectrum.energies[j] * chunk[k] / self.hbar)
            };
            match &self.real_vectors {
                Some(v) => {
                    let mut re = DMatrix::<f64>::zeros(n, m);
                    let mut im = DMatrix::<f64>::zeros(n, m);
                    for k in 0..m {
                        for j in 0..n {
                            let p = phase(j, k);
                            re[(j, k)] = p.re;
                            im[(j, k)] = p.im;
                        }
                    }
                    let (re, im) = (v * re, v * im);
                    for k in 0..m {
                        let amps = (0..n).map(|i| C64::new(re[(i, k)], im[(i, k)])).collect();
                        out.push(StateVector { amps });
                    }
                }
                None => {
                    let p = DMatrix::from_fn(n, m, phase);
                    let psi = &self.spectrum.vectors * p;
                    for k in 0..m {
                        out.push(StateVector { amps: psi.column(k).iter().copied().collect() });
                    }
                }
            }
        }
        out
    }
}

fn check_times(times: &[f64]) -> Result<(), DynamicsError> {
    if times.is_empty() {
        return Err(DynamicsError::BadTimes("no sample times".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(DynamicsError::BadTimes("non-finite sample time".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(DynamicsError::BadTimes("sample times must be non-decreasing".into()));
    }
    Ok(())
}

/// `ψ(t)` at every sample time.
pub fn evolve_closed(
    h: &SparseOperator,
    psi0: &StateVector,
    times: &[f64],
    hbar: f64,
) -> Result<Vec<StateVector>, DynamicsError> {
    check_times(times)?;
    let p = Propagator::new(h, psi0, hbar)?;
    Ok(p.states_at(times))
}

/// Collapse operator `A` with rate `γ`.
#[derive(Debug, Clone)]
pub struct LindbladChannel {
    pub label: String,
    pub op: SparseOperator,
    pub gamma: f64,
}

/// Fixed-step RK4 integrator for the Lindblad equation.
pub struct LindbladSolver {
    dim: usize,
    hbar: f64,
    /// `H − (iħ/2) Σ γ A†A`.
    h_eff: SparseOperator,
    jumps: Vec<(SparseOperator, f64)>,
}

impl LindbladSolver {
    pub fn new(h: &SparseOperator, channels: &[LindbladChannel], hbar: f64) -> Result<Self, DynamicsError> {
        if !h.is_hermitian() {
            return Err(DynamicsError::NotHermitian(h.hermitian_defect()));
        }
        let dim = h.dim();
        let mut h_eff = h.clone();
        let mut jumps = Vec::new();
        for ch in channels {
            if ch.op.dim() != dim {
                return Err(DynamicsError::DimensionMismatch(ch.op.dim(), dim));
            }
            if !(ch.gamma >= 0.0 && ch.gamma.is_finite()) {
                return Err(DynamicsError::BadRate(ch.label.clone()));
            }
            if ch.gamma == 0.0 || ch.op.nnz() == 0 {
                continue;
            }
            let ada = ch.op.adjoint().matmul(&ch.op).expect("same dimension");
            let shift = ada.scaled(C64::new(0.0, -0.5 * hbar * ch.gamma));
            h_eff = h_eff.plus(&shift).expect("same dimension");
            jumps.push((ch.op.clone(), ch.gamma));
        }
        Ok(Self { dim, hbar, h_eff, jumps })
    }

    /// `L(ρ)` for Hermitian `ρ`, written into `out`.
    fn rhs(&self, rho: &[C64], out: &mut [C64], x: &mut [C64], y: &mut [C64]) {
        let n = self.dim;
        sparse_dense(&self.h_eff, rho, x, n);
        let k = C64::new(0.0, -1.0 / self.hbar);
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = k * (x[i * n + j] - x[j * n + i].conj());
            }
        }
        for (a, gamma) in &self.jumps {
            // y = A ρ, then x = (A ρ)† = ρ A†, then A x = A ρ A†.
            sparse_dense(a, rho, y, n);
            for i in 0..n {
                for j in 0..n {
                    x[i * n + j] = y[j * n + i].conj();
                }
            }
            for r in 0..n {
                let row = &mut out[r * n..(r + 1) * n];
                for (c, v) in a.row(r) {
                    let s = v * *gamma;
                    let src = &x[c * n..(c + 1) * n];
                    for (o, &z) in row.iter_mut().zip(src) {
                        *o += s * z;
                    }
                }
            }
        }
    }

    /// Integrate from `rho0` at `times[0]`, calling `observe(k, t_k, ρ(t_k))`
    /// at every sample. Sample intervals are split into equal steps no longer
    /// than `dt`.
    pub fn run<F>(&self, rho0: &DensityMatrix, times: &[f64], dt: f64, mut observe: F) -> Result<(), DynamicsError>
    where
        F: FnMut(usize, f64, &DensityMatrix),
    {
        check_times(times)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(DynamicsError::BadTimes(format!("step must be positive, got {dt}")));
        }
        if rho0.dim() != self.dim {
            return Err(DynamicsError::DimensionMismatch(rho0.dim(), self.dim));
        }
        let n = self.dim;
        let len = n * n;
        let mut rho = rho0.clone();
        let tr0 = rho.trace();
        let mut k = [vec![zero(); len], vec![zero(); len], vec![zero(); len], vec![zero(); len]];
        let mut stage = vec![zero(); len];
        let mut x = vec![zero(); len];
        let mut y = vec![zero(); len];
        observe(0, times[0], &rho);
        for s in 1..times.len() {
            let span = times[s] - times[s - 1];
            let steps = if span > 0.0 { ((span / dt) - 1e-9).ceil().max(1.0) as usize } else { 0 };
            let h = if steps > 0 { span / steps as f64 } else { 0.0 };
            for step in 0..steps {
                let [k1, k2, k3, k4] = &mut k;
                self.rhs(&rho.data, k1, &mut x, &mut y);
                for i in 0..len {
                    stage[i] = rho.data[i] + k1[i] * (0.5 * h);
                }
                self.rhs(&stage, k2, &mut x, &mut y);
                for i in 0..len {
                    stage[i] = rho.data[i] + k2[i] * (0.5 * h);
                }
                self.rhs(&stage, k3, &mut x, &mut y);
                for i in 0..len {
                    stage[i] = rho.data[i] + k3[i] * h;
                }
                self.rhs(&stage, k4, &mut x, &mut y);
                for i in 0..len {
                    rho.data[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
                }
                rho.symmetrize();
                let drift = (rho.trace() - tr0).abs();
                let purity = rho.purity();
                if !(drift <= INSTABILITY_DRIFT) || !(purity <= 1.0 + INSTABILITY_DRIFT) {
                    let time = times[s - 1] + h * (step + 1) as f64;
                    return Err(DynamicsError::Unstable { time, drift: drift.max(purity - 1.0), dt });
                }
            }
            observe(s, times[s], &rho);
        }
        Ok(())
    }
}

/// `out = A · m` for sparse `A` and dense row-major `m`.
fn sparse_dense(a: &SparseOperator, m: &[C64], out: &mut [C64], n: usize) {
    for r in 0..n {
        let row = &mut out[r * n..(r + 1) * n];
        row.fill(zero());
        for (c, v) in a.row(r) {
            let src = &m[c * n..(c + 1) * n];
            for (o, &z) in row.iter_mut().zip(src) {
                *o += v * z;
            }
        }
    }
}

/// `ρ(t)` at every sample time.
pub fn evolve_lindblad(
    h: &SparseOperator,
    channels: &[LindbladChannel],
    rho0: &DensityMatrix,
    times: &[f64],
    dt: f64,
    hbar: f64,
) -> Result<Vec<DensityMatrix>, DynamicsError> {
    let solver = LindbladSolver::new(h, channels, hbar)?;
    let mut out = Vec::with_capacity(times.len());
    solver.run(rho0, times, dt, |_, _, rho| out.push(rho.clone()))?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableKind {
    Projector,
    Hermitian,
}

/// Labelled Hermitian operator (optionally a projector).
#[derive(Debug, Clone)]
pub struct Observable {
    pub label: String,
    pub op: SparseOperator,
    pub kind: ObservableKind,
}

impl Observable {
    pub fn hermitian(label: impl Into<String>, op: SparseOperator) -> Result<Self, DynamicsError> {
        let label = label.into();
        if !op.is_hermitian() {
            return Err(DynamicsError::NonHermitianObservable(label));
        }
        Ok(Self { label, op, kind: ObservableKind::Hermitian })
    }

    pub fn projector(label: impl Into<String>, op: SparseOperator) -> Result<Self, DynamicsError> {
        let label = label.into();
        if !op.is_hermitian() {
            return Err(DynamicsError::NonHermitianObservable(label));
        }
        let sq = op.matmul(&op).expect("square operator");
        if sq.minus(&op).expect("same dimension").max_abs() > PROJECTOR_TOL {
            return Err(DynamicsError::NotProjector(label));
        }
        Ok(Self { label, op, kind: ObservableKind::Projector })
    }

    pub fn on_state(&self, psi: &StateVector) -> Result<f64, DynamicsError> {
        if psi.dim() != self.op.dim() {
            return Err(DynamicsError::DimensionMismatch(psi.dim(), self.op.dim()));
        }
        let a = psi.amplitudes();
        let z: C64 = self.op.entries().map(|(r, c, v)| a[r].conj() * v * a[c]).sum();
        real_part(z)
    }

    pub fn on_density(&self, rho: &DensityMatrix) -> Result<f64, DynamicsError> {
        if rho.dim() != self.op.dim() {
            return Err(DynamicsError::DimensionMismatch(rho.dim(), self.op.dim()));
        }
        let z: C64 = self.op.entries().map(|(r, c, v)| v * rho.get(c, r)).sum();
        real_part(z)
    }
}

fn real_part(z: C64) -> Result<f64, DynamicsError> {
    if z.im.abs() > IMAG_RESIDUE_TOL {
        return Err(DynamicsError::ImaginaryExpectation(z.im.abs()));
    }
    Ok(z.re)
}

/// Either kind of state, for code that handles both solvers.
#[derive(Debug, Clone, Copy)]
pub enum StateRef<'a> {
    Pure(&'a StateVector),
    Mixed(&'a DensityMatrix),
}

pub fn expectation(obs: &Observable, state: StateRef<'_>) -> Result<f64, DynamicsError> {
    match state {
        StateRef::Pure(psi) => obs.on_state(psi),
        StateRef::Mixed(rho) => obs.on_density(rho),
    }
}

/// Sampled observable curves on a shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// `values[k][s]`: observable `k` at sample `s`.
    pub values: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(labels: Vec<String>) -> Self {
        let values = vec![Vec::new(); labels.len()];
        Self { times: Vec::new(), labels, values }
    }

    pub fn push(&mut self, t: f64, sample: &[f64]) {
        assert_eq!(sample.len(), self.labels.len());
        self.times.push(t);
        for (col, &v) in self.values.iter_mut().zip(sample) {
            col.push(v);
        }
    }

    pub fn column(&self, label: &str) -> Option<&[f64]> {
        self.labels.iter().position(|l| l == label).map(|k| self.values[k].as_slice())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Append the columns of `other` (same grid) with a label suffix.
    pub fn merge(&mut self, other: &TimeSeries, suffix: &str) {
        assert_eq!(self.times.len(), other.times.len());
        for (l, v) in other.labels.iter().zip(&other.values) {
            self.labels.push(format!("{l}{suffix}"));
            self.values.push(v.clone());
        }
    }
}

/// Closed-system curves of `observables` along `times`.
pub fn observe_closed(
    h: &SparseOperator,
    psi0: &StateVector,
    observables: &[Observable],
    times: &[f64],
    hbar: f64,
) -> Result<TimeSeries, DynamicsError> {
    check_times(times)?;
    let p = Propagator::new(h, psi0, hbar)?;
    let mut ts = TimeSeries::new(observables.iter().map(|o| o.label.clone()).collect());
    for (&t, psi) in times.iter().zip(p.states_at(times)) {
        let row = observables.iter().map(|o| o.on_state(&psi)).collect::<Result<Vec<_>, _>>()?;
        ts.push(t, &row);
    }
    Ok(ts)
}

/// Lindblad curves of `observables` along `times`.
pub fn observe_lindblad(
    h: &SparseOperator,
    channels: &[LindbladChannel],
    rho0: &DensityMatrix,
    observables: &[Observable],
    times: &[f64],
    dt: f64,
    hbar: f64,
) -> Result<TimeSeries, DynamicsError> {
    let solver = LindbladSolver::new(h, channels, hbar)?;
    let mut ts = TimeSeries::new(observables.iter().map(|o| o.label.clone()).collect());
    let mut err = None;
    solver.run(rho0, times, dt, |_, t, rho| {
        match observables.iter().map(|o| o.on_density(rho)).collect::<Result<Vec<_>, _>>() {
            Ok(row) => ts.push(t, &row),
            Err(e) => {
                err.get_or_insert(e);
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(ts),
    }
}

/// First sample time after which every curve varies by less than `tol` over
/// any window of length `period`, or `None` if the series never settles.
pub fn steady_state_time(series: &TimeSeries, period: f64, tol: f64) -> Option<f64> {
    let t = &series.times;
    let n = t.len();
    if n < 2 || t[n - 1] - t[0] < period {
        return None;
    }
    // Scan backwards for the last window that still moves more than `tol`.
    let mut settled_from: Option<usize> = None;
    let mut start = n;
    while start > 0 {
        let s = start - 1;
        let mut end = s;
        while end + 1 < n && t[end + 1] - t[s] <= period {
            end += 1;
        }
        let moving = series.values.iter().any(|col| {
            let w = &col[s..=end];
            let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo >= tol
        });
        if moving {
            break;
        }
        settled_from = Some(s);
        start = s;
    }
    settled_from.filter(|&s| t[n - 1] - t[s] >= period).map(|s| t[s])
}
