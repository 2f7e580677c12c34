// Copyright 2026 cqed-chem Contributors
// SPDX-License-Identifier: Apache-2.0

//! Randomized invariants of the solvers, enumeration and reduction.

use std::sync::Arc;

use cqed_chem::dynamics::{
    evolve_closed, evolve_lindblad, DensityMatrix, LindbladChannel, StateVector,
};
use cqed_chem::hilbert::{
    AllOf, BasisState, Bound, Constraint, Distinct, Fixed, HilbertSpace, Layout, ModeSpec, QuantumCount,
    RegisterSpec,
};
use cqed_chem::models::{linspace, ScenarioConfig, ScenarioId};
use cqed_chem::operators::{
    build_hbond_h, grid_excitation_number, hbond_family_number, GridGeometry, HbondFamily, SparseOperator,
};
use cqed_chem::reduction::{build_graph, is_connected, neighbors_of, repair_connectivity, ReducedSpace};
use num_complex::Complex64 as C;
use proptest::prelude::*;

/// Random Hermitian matrix: `(i, j, re, im)` entries mirrored across the diagonal.
fn hermitian(dim: usize) -> impl Strategy<Value = SparseOperator> {
    let entry = (0..dim, 0..dim, -1.0f64..1.0, -1.0f64..1.0);
    prop::collection::vec(entry, 1..3 * dim).prop_map(move |raw| {
        let mut t = Vec::new();
        for (i, j, re, im) in raw {
            if i == j {
                t.push((i, i, C::new(re, 0.0)));
            } else {
                t.push((i, j, C::new(re, im)));
                t.push((j, i, C::new(re, -im)));
            }
        }
        SparseOperator::from_triplets(dim, t).unwrap()
    })
}

fn random_state(dim: usize) -> impl Strategy<Value = StateVector> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim)
        .prop_filter("nonzero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
        .prop_map(|v| StateVector::normalized(v.into_iter().map(|(a, b)| C::new(a, b)).collect()).unwrap().0)
}

fn system(max_dim: usize) -> impl Strategy<Value = (SparseOperator, StateVector)> {
    (2..=max_dim).prop_flat_map(|d| (hermitian(d), random_state(d)))
}

fn lowering(dim: usize, from: usize, to: usize) -> SparseOperator {
    SparseOperator::from_triplets(dim, [(to, from, C::new(1.0, 0.0))]).unwrap()
}

fn energy(h: &SparseOperator, psi: &StateVector) -> f64 {
    let hpsi = h.apply(psi.amplitudes());
    psi.amplitudes().iter().zip(&hpsi).map(|(a, b)| (a.conj() * b).re).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_evolution_preserves_norm_and_energy((h, psi) in system(12)) {
        let times = linspace(50.0, 26);
        let e0 = energy(&h, &psi);
        for s in evolve_closed(&h, &psi, &times, 1.0).unwrap() {
            prop_assert!((s.norm() - 1.0).abs() < 1e-9);
            prop_assert!((energy(&h, &s) - e0).abs() < 1e-8);
        }
    }

    #[test]
    fn lindblad_keeps_a_valid_density_matrix(
        (h, psi) in system(6),
        gamma in 0.01f64..0.5,
        pick in (0usize..6, 0usize..6),
    ) {
        let d = h.dim();
        let (from, to) = (pick.0 % d, pick.1 % d);
        let ch = LindbladChannel { label: "l".into(), op: lowering(d, from, to), gamma };
        let times = linspace(10.0, 11);
        for rho in evolve_lindblad(&h, &[ch], &DensityMatrix::from_pure(&psi), &times, 0.01, 1.0).unwrap() {
            prop_assert!((rho.trace() - 1.0).abs() < 1e-9);
            prop_assert!(rho.hermitian_defect() < 1e-12);
            // RK4 does not preserve positivity exactly; rank-deficient states dip by O(dt⁴).
            prop_assert!(rho.min_eigenvalue() > -1e-6, "min eig {}", rho.min_eigenvalue());
            prop_assert!(rho.purity() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn lindblad_without_channels_agrees_with_spectral((h, psi) in system(8)) {
        let times = linspace(5.0, 6);
        let closed = evolve_closed(&h, &psi, &times, 1.0).unwrap();
        let open = evolve_lindblad(&h, &[], &DensityMatrix::from_pure(&psi), &times, 0.005, 1.0).unwrap();
        for (s, rho) in closed.iter().zip(&open) {
            let pure = DensityMatrix::from_pure(s);
            let diff = pure.as_slice().iter().zip(rho.as_slice()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            prop_assert!(diff < 1e-7, "diff {}", diff);
        }
    }

    #[test]
    fn halving_the_step_changes_little((h, psi) in system(5), gamma in 0.05f64..0.5) {
        let d = h.dim();
        let ch = LindbladChannel { label: "l".into(), op: lowering(d, d - 1, 0), gamma };
        let times = linspace(4.0, 5);
        let rho0 = DensityMatrix::from_pure(&psi);
        let run = |dt: f64| evolve_lindblad(&h, &[ch.clone()], &rho0, &times, dt, 1.0).unwrap();
        let (coarse, fine, finer) = (run(0.02), run(0.01), run(0.005));
        let gap = |a: &[DensityMatrix], b: &[DensityMatrix]| {
            a.iter()
                .zip(b)
                .flat_map(|(x, y)| x.as_slice().iter().zip(y.as_slice()).map(|(u, v)| (u - v).norm()))
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (gap(&coarse, &fine), gap(&fine, &finer));
        prop_assert!(e2 < 1e-6, "gap {}", e2);
        // Fourth order: halving dt shrinks the gap about sixteenfold.
        if e2 > 1e-11 {
            prop_assert!(e1 / e2 > 10.0, "ratio {}", e1 / e2);
        }
    }
}

/// Every product state in lexicographic order, filtered by `c`.
fn brute_force(layout: &Layout, c: Option<&dyn Constraint>) -> Vec<BasisState> {
    let radix: Vec<u32> = (0..layout.field_count()).map(|f| layout.radix(f)).collect();
    let total: usize = radix.iter().map(|&r| r as usize).product();
    let mut out = Vec::new();
    for mut code in 0..total {
        let mut v = vec![0u32; radix.len()];
        for f in (0..radix.len()).rev() {
            v[f] = (code % radix[f] as usize) as u32;
            code /= radix[f] as usize;
        }
        if c.is_none_or(|c| c.admits(&v)) {
            out.push(BasisState::new(v));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_matches_brute_force(
        cutoffs in prop::collection::vec(1u32..3, 1..3),
        cells in prop::collection::vec(2u32..5, 0..3),
        total in 0u32..4,
        at_most in any::<bool>(),
        fixed in prop::option::of(0u32..2),
    ) {
        let modes: Vec<ModeSpec> = cutoffs.iter().enumerate().map(|(i, &c)| ModeSpec::photon(format!("m{i}"), c)).collect();
        let mut registers: Vec<RegisterSpec> = cells.iter().enumerate().map(|(i, &n)| RegisterSpec::position(format!("p{i}"), n)).collect();
        registers.push(RegisterSpec::orbital("e"));
        let layout = Layout::new(modes, registers).unwrap();
        let nm = cutoffs.len();
        let bound = if at_most { Bound::AtMost } else { Bound::Exactly };
        let mut count_fields: Vec<usize> = (0..nm).collect();
        count_fields.push(layout.field_count() - 1);
        let radix = |f: usize| layout.radix(f);
        let mut c = AllOf::default()
            .with(QuantumCount::occupations(&count_fields, total, bound, radix))
            .with(Distinct { fields: (nm..nm + cells.len()).collect() });
        if let Some(v) = fixed {
            c = c.with(Fixed { field: layout.field_count() - 1, value: v });
        }
        let want = brute_force(&layout, Some(&c));
        match HilbertSpace::enumerate(layout.clone(), Some(Arc::new(c)), 1 << 16) {
            Ok(space) => {
                prop_assert_eq!(space.states(), &want[..]);
                for (i, s) in want.iter().enumerate() {
                    prop_assert_eq!(space.index_of(s).unwrap(), i);
                }
            }
            Err(_) => prop_assert!(want.is_empty()),
        }
    }
}

/// Random sparse symmetric pattern as a real Hermitian operator.
fn sparse_graph(max_dim: usize) -> impl Strategy<Value = SparseOperator> {
    (2..=max_dim).prop_flat_map(|d| {
        prop::collection::vec((0..d, 0..d), 0..2 * d).prop_map(move |edges| {
            let mut t: Vec<(usize, usize, C)> = (0..d).map(|i| (i, i, C::new(i as f64, 0.0))).collect();
            for (a, b) in edges {
                if a != b {
                    t.push((a, b, C::new(0.1, 0.0)));
                    t.push((b, a, C::new(0.1, 0.0)));
                }
            }
            SparseOperator::from_triplets(d, t).unwrap()
        })
    })
}

/// Connectivity of `subset` by transitive closure (Warshall).
fn closure_connected(h: &SparseOperator, subset: &[usize]) -> bool {
    let n = subset.len();
    let mut r = vec![vec![false; n]; n];
    for i in 0..n {
        r[i][i] = true;
        for j in 0..n {
            if h.get(subset[i], subset[j]).norm() > 0.0 {
                r[i][j] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                r[i][j] = r[i][j] || (r[i][k] && r[k][j]);
            }
        }
    }
    r[0].iter().all(|&x| x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn repair_is_monotone_idempotent_and_connected(
        h in sparse_graph(64),
        seeds in prop::collection::btree_set(0usize..64, 1..8),
        start in 0usize..64,
    ) {
        let d = h.dim();
        let initial = start % d;
        let subset: Vec<usize> = seeds.into_iter().map(|s| s % d).collect();
        let r = repair_connectivity(&h, &subset, initial).unwrap();
        let kept = r.kept().to_vec();
        prop_assert!(kept.contains(&initial));
        // The whole space is closed under H and kept as is, split or not.
        if !r.is_identity() {
            prop_assert!(closure_connected(&h, &kept));
            prop_assert_eq!(is_connected(&build_graph(&h, &kept)).unwrap(), true);
        }
        if !r.component_only() {
            prop_assert!(subset.iter().all(|s| kept.contains(s)));
        }
        let again = repair_connectivity(&h, &kept, initial).unwrap();
        prop_assert_eq!(again.kept(), &kept[..]);
        prop_assert_eq!(again.iterations(), 0);
    }

    #[test]
    fn neighbors_are_exactly_the_outside_nonzeros(
        h in sparse_graph(32),
        seeds in prop::collection::btree_set(0usize..32, 1..6),
    ) {
        let d = h.dim();
        let subset: Vec<usize> = seeds.into_iter().map(|s| s % d).collect();
        let want: std::collections::BTreeSet<usize> = (0..d)
            .filter(|j| !subset.contains(j) && subset.iter().any(|&s| h.get(*j, s).norm() > 0.0))
            .collect();
        prop_assert_eq!(neighbors_of(&h, &subset), want);
    }

    #[test]
    fn projection_is_entrywise_restriction(
        h in sparse_graph(64),
        seeds in prop::collection::btree_set(0usize..64, 1..12),
    ) {
        let d = h.dim();
        let subset: Vec<usize> = seeds.into_iter().map(|s| s % d).collect();
        let r = repair_connectivity(&h, &subset, subset[0]).unwrap();
        let p = r.project_operator(&h).unwrap();
        prop_assert_eq!(p.dim(), r.dim());
        prop_assert!(p.is_hermitian());
        for (a, &i) in r.kept().iter().enumerate() {
            for (b, &j) in r.kept().iter().enumerate() {
                prop_assert_eq!(p.get(a, b), h.get(i, j));
            }
        }
    }

    #[test]
    fn full_reduction_is_identity((h, psi) in system(10)) {
        let r = ReducedSpace::full(h.dim());
        prop_assert!(r.is_identity());
        let p = r.project_operator(&h).unwrap();
        prop_assert_eq!(p.to_dense(), h.to_dense());
        let (s, discarded) = r.project_state(&psi).unwrap();
        prop_assert_eq!(discarded, 0.0);
        prop_assert_eq!(s.amplitudes(), psi.amplitudes());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn grid_excitation_commutes_with_h(k in 2usize..4, atoms in 1usize..4, phonons in 0u32..3, g in 0.001f64..0.05) {
        prop_assume!(atoms <= k * k);
        let mut cfg = ScenarioConfig::new(ScenarioId::PhononGrid);
        cfg.grid.k = k;
        cfg.grid.atoms = atoms;
        cfg.grid.phonons = phonons;
        cfg.coupling.g_cov = g;
        let b = cfg.build(1 << 14).unwrap();
        let geom = GridGeometry::new(k, atoms).unwrap();
        let n = grid_excitation_number(&b.space, &geom).unwrap();
        let comm = b.hamiltonian.matmul(&n).unwrap().minus(&n.matmul(&b.hamiltonian).unwrap()).unwrap();
        prop_assert!(comm.max_abs() < 1e-12);
        prop_assert!(b.hamiltonian.is_hermitian());
    }

    #[test]
    fn hbond_families_are_conserved(
        g in prop::array::uniform4(0.0f64..0.05),
        alpha in 0.5f64..0.99,
    ) {
        let mut cfg = ScenarioConfig::new(ScenarioId::Hbond);
        [cfg.coupling.g_mol, cfg.coupling.g_spin, cfg.coupling.g_tun, cfg.coupling.g_cov] = g;
        cfg.coupling.alpha = alpha;
        cfg.coupling.beta = (1.0 - alpha * alpha).sqrt();
        let b = cfg.build(1 << 14).unwrap();
        let h = build_hbond_h(&b.space, &cfg.coupling).unwrap();
        prop_assert!(h.is_hermitian());
        for fam in [HbondFamily::Molecular, HbondFamily::Spin, HbondFamily::Bond] {
            let n = hbond_family_number(&b.space, fam).unwrap();
            let comm = h.matmul(&n).unwrap().minus(&n.matmul(&h).unwrap()).unwrap();
            prop_assert!(comm.max_abs() < 1e-12, "{:?}", fam);
        }
    }

    #[test]
    fn two_electron_weight_swap_mirrors_ionic_curves(alpha in 0.3f64..0.95) {
        let beta = (1.0 - alpha * alpha).sqrt();
        let mut cfg = ScenarioConfig::new(ScenarioId::Oh2e);
        cfg.run.samples = Some(101);
        cfg.coupling.alpha = alpha;
        cfg.coupling.beta = beta;
        let a = cfg.build(64).unwrap().simulate().unwrap();
        cfg.coupling.alpha = beta;
        cfg.coupling.beta = alpha;
        let b = cfg.build(64).unwrap().simulate().unwrap();
        for (u, v) in a.column("P(O-H+)").unwrap().iter().zip(b.column("P(O+H-)").unwrap()) {
            prop_assert!((u - v).abs() < 1e-10);
        }
    }
}
