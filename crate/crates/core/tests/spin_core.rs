use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use zefoz::linalg::hermitian_deviation;
use zefoz::presets;
use zefoz::spin::{
    build_hamiltonian, diagonalize, euler_zyz, hyperfine_from_ladder, transition_table,
    zero_field_levels, CMatrix4, ElectronicLevel, FieldVector, HamiltonianMatrix,
    InteractionTensor, LevelPair, LevelTensors, SpinSystem,
};

const GAMMA_Y: f64 = 2.095e6;

fn system(a: InteractionTensor, g: InteractionTensor) -> SpinSystem {
    SpinSystem::new(LevelTensors::new(a, g), None, GAMMA_Y).unwrap()
}

fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let alpha = rng.random_range(0.0..std::f64::consts::TAU);
    let beta = rng.random_range(-1.0f64..1.0).acos();
    let gamma = rng.random_range(0.0..std::f64::consts::TAU);
    euler_zyz(alpha, beta, gamma)
}

fn random_hermitian(rng: &mut impl Rng) -> CMatrix4 {
    let mut m = CMatrix4::zeros();
    for i in 0..4 {
        m[(i, i)] = Complex64::new(rng.sample(StandardNormal), 0.0);
        for j in (i + 1)..4 {
            let z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// Coefficients c[0..=4] of det(λ − M) = Σ c_i λ^i (Faddeev–LeVerrier).
fn characteristic_polynomial(m: &CMatrix4) -> [Complex64; 5] {
    let n = 4;
    let mut c = [Complex64::new(0.0, 0.0); 5];
    c[n] = Complex64::new(1.0, 0.0);
    let mut mk = CMatrix4::zeros();
    for k in 1..=n {
        mk = m * mk + CMatrix4::identity() * c[n - k + 1];
        c[n - k] = -(m * mk).trace() / k as f64;
    }
    c
}

fn eval(c: &[Complex64; 5], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &ci| acc * z + ci)
}

/// Durand–Kerner iteration for the roots of a monic quartic.
fn polynomial_roots(c: &[Complex64; 5]) -> Vec<Complex64> {
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..4).map(|i| seed.powu(i as u32)).collect();
    for _ in 0..500 {
        let mut delta = 0.0f64;
        for i in 0..4 {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..4 {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(c, roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    roots
}

#[test]
fn diagonal_matrix_is_its_own_decomposition() {
    let mut m = CMatrix4::zeros();
    for i in 0..4 {
        m[(i, i)] = Complex64::from(i as f64 + 1.0);
    }
    let eig = diagonalize(&HamiltonianMatrix(m)).unwrap();
    assert_eq!(eig.energies, [1.0, 2.0, 3.0, 4.0]);
    assert!((eig.vectors - CMatrix4::identity()).norm() < 1e-15);
}

#[test]
fn random_hermitian_matches_characteristic_polynomial_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let m = random_hermitian(&mut rng);
        let scale = m.norm();
        let eig = diagonalize(&HamiltonianMatrix(m)).unwrap();
        let mut roots: Vec<f64> = polynomial_roots(&characteristic_polynomial(&m))
            .iter()
            .map(|z| {
                assert!(z.im.abs() < 1e-7 * scale, "complex root {z}");
                z.re
            })
            .collect();
        roots.sort_by(f64::total_cmp);
        for (e, r) in eig.energies.iter().zip(&roots) {
            assert!((e - r).abs() <= 1e-9 * scale, "{:?} vs {roots:?}", eig.energies);
        }
    }
}

#[test]
fn closed_form_zero_field_levels_match_diagonalisation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let principal = [
            rng.random_range(-4e9..4e9),
            rng.random_range(-4e9..4e9),
            rng.random_range(-4e9..4e9),
        ];
        let rotation = random_rotation(&mut rng);
        let a = InteractionTensor::new(principal, rotation).unwrap();
        let g = InteractionTensor::new([1.0, 2.0, 3.0], rotation).unwrap();
        let sys = system(a.clone(), g);
        let h = build_hamiltonian(&sys, ElectronicLevel::Ground, &FieldVector::zero()).unwrap();
        let numeric = diagonalize(&h).unwrap().energies;
        let exact = zero_field_levels(&a);
        let scale = principal.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (n, e) in numeric.iter().zip(exact) {
            assert!((n - e).abs() <= 1e-9 * scale, "{numeric:?} vs {exact:?}");
        }
    }
}

#[test]
fn zero_field_levels_are_frame_covariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let principal = [-1.3e9, -2.4e9, -3.7e9];
    let base = InteractionTensor::diagonal(principal).unwrap();
    let g = InteractionTensor::diagonal([0.2, 1.6, 6.0]).unwrap();
    let h0 = build_hamiltonian(&system(base, g.clone()), ElectronicLevel::Ground, &FieldVector::zero())
        .unwrap();
    let reference = diagonalize(&h0).unwrap().energies;
    for _ in 0..50 {
        let r = random_rotation(&mut rng);
        let a = InteractionTensor::new(principal, r).unwrap();
        let g = InteractionTensor::new([0.2, 1.6, 6.0], r).unwrap();
        let h = build_hamiltonian(&system(a, g), ElectronicLevel::Ground, &FieldVector::zero()).unwrap();
        let e = diagonalize(&h).unwrap().energies;
        for (x, y) in e.iter().zip(reference) {
            assert!((x - y).abs() <= 1e-9 * 3.7e9);
        }
    }
}

#[test]
fn generic_anisotropic_hyperfine_lifts_all_degeneracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let principal = [
            rng.random_range(0.5e9..1.5e9),
            rng.random_range(1.6e9..2.5e9),
            rng.random_range(2.6e9..3.5e9),
        ];
        let e = zero_field_levels(&InteractionTensor::diagonal(principal).unwrap());
        for w in e.windows(2) {
            assert!(w[1] - w[0] > 1e3, "{e:?}");
        }
    }
}

#[test]
fn isotropic_hyperfine_examples() {
    let a = 1.0e9;
    let sys = system(
        InteractionTensor::isotropic(a).unwrap(),
        InteractionTensor::isotropic(2.0).unwrap(),
    );
    let h = build_hamiltonian(&sys, ElectronicLevel::Ground, &FieldVector::zero()).unwrap();
    let eig = diagonalize(&h).unwrap();
    let expected = [-0.75e9, 0.25e9, 0.25e9, 0.25e9];
    for (e, x) in eig.energies.iter().zip(expected) {
        assert!((e - x).abs() < 1e-3);
    }
    let table = transition_table(&eig, &sys, ElectronicLevel::Ground).unwrap();
    let distinct = table.distinct_frequencies(1e3);
    assert_eq!(distinct.len(), 1);
    assert!((distinct[0] - a).abs() < 1e-3);
}

#[test]
fn uniaxial_hyperfine_is_doubly_degenerate() {
    let az = 2.0e9;
    let e = zero_field_levels(&InteractionTensor::diagonal([0.0, 0.0, az]).unwrap());
    let expected = [-az / 4.0, -az / 4.0, az / 4.0, az / 4.0];
    for (x, y) in e.iter().zip(expected) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn pure_electronic_zeeman_splits_into_two_doublets() {
    let g = 2.0;
    let sys = system(
        InteractionTensor::diagonal([0.0; 3]).unwrap(),
        InteractionTensor::isotropic(g).unwrap(),
    );
    let b = 0.1;
    let h = build_hamiltonian(&sys, ElectronicLevel::Ground, &FieldVector::new(0.0, 0.0, b).unwrap())
        .unwrap();
    let e = diagonalize(&h).unwrap().energies;
    let half = sys.bohr_magneton * g * b / 2.0;
    let expected = [-half, -half, half, half];
    for (x, y) in e.iter().zip(expected) {
        assert!((x - y).abs() <= 1e-12 * half);
    }
}

#[test]
fn default_ladder_and_telescoping() {
    let sys = presets::default_system().unwrap();
    let h = build_hamiltonian(&sys, ElectronicLevel::Ground, &FieldVector::zero()).unwrap();
    assert!(h.trace().abs() <= 1e-12 * h.norm());
    let eig = diagonalize(&h).unwrap();
    let table = transition_table(&eig, &sys, ElectronicLevel::Ground).unwrap();
    assert_eq!(table.entries.len(), 6);
    let f = |l, u| table.frequency(LevelPair::from_labels(l, u).unwrap()).unwrap();
    for (l, u, target) in [
        (1, 2, 528e6),
        (2, 3, 655e6),
        (3, 4, 1841e6),
        (2, 4, 2496.55e6),
        (1, 4, 3024.55e6),
    ] {
        assert!((f(l, u) - target).abs() < 1e6, "f({l},{u}) = {}", f(l, u));
    }
    for t in &table.entries {
        assert!(t.frequency >= 0.0);
    }
    for (a, b, c) in [(1, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 4)] {
        let sum = f(a, b) + f(b, c);
        assert!((f(a, c) - sum).abs() <= 1e-9 * f(a, c));
    }
    let clock = table.get(presets::clock_pair()).unwrap();
    assert!(clock.moments.iter().any(|&m| m > 1e6), "{:?}", clock.moments);
}

/// Brute force over which Bell state sits at which ladder rung.
#[test]
fn ladder_inversion_matches_brute_force_assignment() {
    let gaps = presets::GROUND_LADDER_HZ;
    let e1 = -(3.0 * gaps[0] + 2.0 * gaps[1] + gaps[2]) / 4.0;
    let ladder = [e1, e1 + gaps[0], e1 + gaps[0] + gaps[1], e1 + gaps[0] + gaps[1] + gaps[2]];
    // energies (T_x, T_y, T_z, S) as linear forms of (A_x, A_y, A_z)
    let rows = [
        Vector3::new(-1.0, 1.0, 1.0),
        Vector3::new(1.0, -1.0, 1.0),
        Vector3::new(1.0, 1.0, -1.0),
        Vector3::new(-1.0, -1.0, -1.0),
    ] as [Vector3<f64>; 4];
    let mut solutions = Vec::new();
    let perms = permutations4();
    for p in &perms {
        let m = Matrix3::from_rows(&[
            rows[p[0]].transpose() / 4.0,
            rows[p[1]].transpose() / 4.0,
            rows[p[2]].transpose() / 4.0,
        ]);
        let Some(inv) = m.try_inverse() else { continue };
        let a = inv * Vector3::new(ladder[0], ladder[1], ladder[2]);
        if (rows[p[3]].dot(&a) / 4.0 - ladder[3]).abs() > 1.0 {
            continue;
        }
        let levels = zero_field_levels(&InteractionTensor::diagonal([a[0], a[1], a[2]]).unwrap());
        if levels.iter().zip(ladder).all(|(x, y)| (x - y).abs() < 1.0) {
            solutions.push([a[0], a[1], a[2]]);
        }
    }
    let ours = hyperfine_from_ladder(gaps);
    assert!(!solutions.is_empty());
    assert!(solutions
        .iter()
        .any(|s| s.iter().zip(ours).all(|(x, y)| (x - y).abs() < 1.0)));
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    p.iter().for_each(|&i| seen[i] = true);
                    if seen.iter().all(|&s| s) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

#[test]
fn misaligned_frames_are_reported() {
    let a = InteractionTensor::diagonal([-1.3e9, -2.4e9, -3.7e9]).unwrap();
    let g = InteractionTensor::new([0.2, 1.6, 6.0], euler_zyz(0.3, 0.2, 0.1)).unwrap();
    assert!(!LevelTensors::new(a.clone(), g).frames_aligned());
    let g = InteractionTensor::diagonal([0.2, 1.6, 6.0]).unwrap();
    assert!(LevelTensors::new(a, g).frames_aligned());
}

#[test]
fn excited_level_is_optional() {
    let sys = presets::default_system().unwrap();
    let err = build_hamiltonian(&sys, ElectronicLevel::Excited, &FieldVector::zero()).unwrap_err();
    assert!(matches!(err, zefoz::Error::MissingLevel { .. }));
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(FieldVector::new(f64::NAN, 0.0, 0.0).is_err());
    assert!(InteractionTensor::new([1.0; 3], Matrix3::from_diagonal_element(2.0)).is_err());
    assert!(LevelPair::new(2, 1).is_err());
    assert!(LevelPair::from_labels(0, 2).is_err());
    let mut m = CMatrix4::zeros();
    m[(0, 1)] = Complex64::new(1.0, 0.0);
    assert!(diagonalize(&HamiltonianMatrix(m)).is_err());
}

proptest! {
    #[test]
    fn hamiltonian_is_hermitian_and_traceless(
        d1 in -1e-3f64..1e-3, d2 in -1e-3f64..1e-3, b in -1e-3f64..1e-3,
    ) {
        let sys = presets::default_system().unwrap();
        let field = FieldVector::new(d1, d2, b).unwrap();
        let h = build_hamiltonian(&sys, ElectronicLevel::Ground, &field).unwrap();
        prop_assert!(hermitian_deviation(h.matrix()) <= 1e-12);
        let eig = diagonalize(&h).unwrap();
        let sum: f64 = eig.energies.iter().sum();
        prop_assert!((sum - h.trace()).abs() <= 1e-9 * h.norm());
        let unitarity = (eig.vectors.adjoint() * eig.vectors - CMatrix4::identity()).norm();
        prop_assert!(unitarity <= 1e-12);
        for k in 0..4 {
            prop_assert!(eig.residual(&h, k) <= 1e-9 * h.norm());
        }
    }
}
