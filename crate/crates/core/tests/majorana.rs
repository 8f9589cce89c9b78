use dsyk::majorana::{
    build_hamiltonian, coupling_variance, expm_apply, ground_state, majorana_matrices, propagators,
    Coupling, CouplingTensor, Propagators, SparseHamiltonian, Spectrum,
};
use dsyk::ModelParams;
use faer::{Mat, Side};
use num_complex::Complex64 as C;
use proptest::prelude::*;

fn params(n: usize) -> ModelParams {
    ModelParams::new(n, 4, 1.0, 0.0, 0.0).unwrap()
}

fn dense_eigs(m: &Mat<C>) -> Vec<f64> {
    let e = m.self_adjoint_eigen(Side::Lower).unwrap();
    (0..m.nrows()).map(|k| e.S()[k].re).collect()
}

#[test]
fn single_term_hamiltonian_spectrum() {
    let p = params(4);
    let j = 0.73;
    let ct = CouplingTensor { params: p, seed: 0, entries: vec![Coupling { indices: vec![0, 1, 2, 3], value: j }] };
    let h = build_hamiltonian(&ct).unwrap();
    // H = -J chi1 chi2 chi3 chi4
    let chi = majorana_matrices(4).unwrap();
    let prod = &(&chi[0].values * &chi[1].values) * &(&chi[2].values * &chi[3].values);
    assert!((&h.values + &prod * j).norm_max() < 1e-15);
    let mut e = dense_eigs(&h.values);
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let want = [-j / 4.0, -j / 4.0, j / 4.0, j / 4.0];
    for (x, y) in e.iter().zip(want) {
        assert!((x - y).abs() < 1e-14);
    }
}

#[test]
fn hamiltonians_are_hermitian() {
    let p = params(8);
    for seed in 0..10 {
        let h = build_hamiltonian(&CouplingTensor::sample(&p, seed).unwrap()).unwrap();
        assert!(h.hermiticity_error() < 1e-12);
    }
}

#[test]
fn second_moment_of_the_spectrum() {
    // Distinct q-strings are trace-orthogonal and square to 2^-q.
    let p = params(8);
    let mut mean = 0.0;
    let seeds = 400;
    for seed in 0..seeds {
        let ct = CouplingTensor::sample(&p, seed).unwrap();
        let h = build_hamiltonian(&ct).unwrap();
        let h2 = &h.values * &h.values;
        let tr: f64 = (0..h.dim).map(|i| h2[(i, i)].re).sum::<f64>() / h.dim as f64;
        let want: f64 = ct.entries.iter().map(|c| c.value * c.value).sum::<f64>() / 16.0;
        assert!((tr - want).abs() < 1e-12 * want.max(1.0));
        mean += tr / seeds as f64;
    }
    let analytic = 70.0 * coupling_variance(&p) / 16.0;
    // chi-square with 70 dof per seed: relative sd sqrt(2/70/400)
    assert!((mean / analytic - 1.0).abs() < 4.0 * (2.0f64 / 70.0 / 400.0).sqrt());
}

#[test]
fn coupling_variance_over_seeds() {
    let p = params(6);
    let var = coupling_variance(&p);
    assert!((var - 6.0 / 216.0).abs() < 1e-15);
    let mut s2 = 0.0;
    let mut n = 0.0;
    for seed in 0..300 {
        for c in CouplingTensor::sample(&p, seed).unwrap().entries {
            s2 += c.value * c.value;
            n += 1.0;
        }
    }
    assert!((s2 / n / var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
}

#[test]
fn coupling_json_round_trip() {
    let ct = CouplingTensor::sample(&params(6), 11).unwrap();
    let s = serde_json::to_string(&ct).unwrap();
    let back: CouplingTensor = serde_json::from_str(&s).unwrap();
    assert_eq!(back, ct);
    let mut bad = ct.clone();
    bad.entries[3].value += 1e-3;
    assert!(bad.verify().is_err());
}

#[test]
fn parity_blocked_spectrum_matches_dense() {
    let ct = CouplingTensor::sample(&params(10), 3).unwrap();
    let sh = SparseHamiltonian::from_couplings(&ct).unwrap();
    let spec = Spectrum::new(&sh).unwrap();
    let mut blocked: Vec<f64> = spec.energies.iter().flatten().cloned().collect();
    blocked.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dense = dense_eigs(&sh.to_dense().unwrap().values);
    for (a, b) in blocked.iter().zip(&dense) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn propagators_are_consistent() {
    let ct = CouplingTensor::sample(&params(8), 5).unwrap();
    let sh = SparseHamiltonian::from_couplings(&ct).unwrap();
    let dt = 0.05;
    let Propagators::Dense { u_plus, u_minus, k_beta, .. } = propagators(&sh, dt, 0.0).unwrap() else {
        panic!("expected dense propagators");
    };
    let id = Mat::<C>::identity(16, 16);
    assert!((&(&u_plus.values * &u_minus.values) - &id).norm_max() < 1e-12);
    assert!((&k_beta.values - &id).norm_max() < 1e-14);

    // 200 steps against one spectral evaluation at t = 10
    let Propagators::Dense { u_plus: big, .. } = propagators(&sh, 200.0 * dt, 0.0).unwrap() else {
        panic!()
    };
    let mut acc = id.clone();
    for _ in 0..200 {
        acc = &acc * &u_plus.values;
    }
    assert!((&acc - &big.values).norm_max() < 200.0 * 1e-12);
}

#[test]
fn ground_state_by_lanczos() {
    let ct = CouplingTensor::sample(&params(10), 9).unwrap();
    let sh = SparseHamiltonian::from_couplings(&ct).unwrap();
    let dense = dense_eigs(&sh.to_dense().unwrap().values);
    let gs = ground_state(&sh, 1e-10).unwrap();
    assert!((gs.energy - dense[0]).abs() < 1e-9);
    // N = 10 sits in the twofold parity-degenerate class
    assert_eq!(gs.degeneracy, 2);
    for v in &gs.vectors {
        let hv = sh.apply(v);
        let e: C = v.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum();
        assert!((e.re - dense[0]).abs() < 1e-9);
    }
    let Propagators::Dense { degeneracy, k_beta, .. } = propagators(&sh, 0.1, f64::INFINITY).unwrap() else {
        panic!()
    };
    assert_eq!(degeneracy, Some(2));
    let tr: f64 = (0..k_beta.dim).map(|i| k_beta.values[(i, i)].re).sum();
    assert!((tr - 2.0).abs() < 1e-10);
}

#[test]
fn krylov_exponential_matches_spectral() {
    let ct = CouplingTensor::sample(&params(10), 2).unwrap();
    let sh = SparseHamiltonian::from_couplings(&ct).unwrap();
    let v: Vec<C> = (0..sh.dim).map(|i| C::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
    let nv: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    for tau in [0.3, 4.0, -7.5] {
        let Propagators::Dense { u_plus, .. } = propagators(&sh, tau, 0.0).unwrap() else { panic!() };
        let want: Vec<C> = (0..sh.dim).map(|i| (0..sh.dim).map(|j| u_plus.values[(i, j)] * v[j]).sum()).collect();
        let got = expm_apply(&sh, &v, tau, 1e-10).unwrap();
        let err: f64 = got.iter().zip(&want).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-9 * nv, "tau {tau}: error {err}");
    }
}

#[test]
fn sparse_and_dense_application_agree() {
    let ct = CouplingTensor::sample(&params(8), 1).unwrap();
    let sh = SparseHamiltonian::from_couplings(&ct).unwrap();
    let d = sh.to_dense().unwrap();
    let v: Vec<C> = (0..16).map(|i| C::new(i as f64, 1.0 - i as f64)).collect();
    let got = sh.apply(&v);
    for i in 0..16 {
        let want: C = (0..16).map(|j| d.values[(i, j)] * v[j]).sum();
        assert!((got[i] - want).norm() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn clifford_algebra_for_every_size(half in 1usize..6) {
        let n = 2 * half;
        let m = majorana_matrices(n).unwrap();
        let dim = 1 << half;
        for i in 0..n {
            for j in i..n {
                let ac = &(&m[i].values * &m[j].values) + &(&m[j].values * &m[i].values);
                for a in 0..dim {
                    for b in 0..dim {
                        let want = if i == j && a == b { 1.0 } else { 0.0 };
                        prop_assert!((ac[(a, b)] - C::new(want, 0.0)).norm() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn sampler_is_reproducible(seed in any::<u64>()) {
        let p = params(8);
        let a = CouplingTensor::sample(&p, seed).unwrap();
        let b = CouplingTensor::sample(&p, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
