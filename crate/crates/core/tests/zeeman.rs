use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zefoz::presets;
use zefoz::spin::{
    ElectronicLevel, FieldVector, InteractionTensor, LevelPair, LevelTensors, SpinOperators,
    SpinSystem,
};
use zefoz::zeeman::{GridAxis, Plane, ZeemanAnalyzer, ZefozOptions};
use zefoz::Error;

fn analyzer() -> ZeemanAnalyzer {
    ZeemanAnalyzer::new(&presets::default_system().unwrap(), ElectronicLevel::Ground).unwrap()
}

fn random_field(rng: &mut impl Rng, max: f64) -> FieldVector {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm() <= 1.0 && v.norm() > 1e-3 {
            return FieldVector::from_vector(v * max).unwrap();
        }
    }
}

#[test]
fn each_level_has_one_partner_per_principal_axis() {
    let za = analyzer();
    let ops = SpinOperators::get();
    let orientation = presets::ground_tensors().unwrap().g.orientation().to_owned();
    let zero = za.zero_field();
    for m in 0..3 {
        let axis = orientation.column(m).into_owned();
        let sm = ops.electron_along(&axis);
        for k in 0..4 {
            let partners: Vec<usize> = (0..4)
                .filter(|&l| l != k && zero.matrix_element(&sm, l, k).norm() > 1e-6)
                .collect();
            assert_eq!(partners.len(), 1, "level {k} axis {m}: {partners:?}");
            assert_eq!(za.partner(k, m).unwrap(), partners[0]);
        }
    }
}

#[test]
fn zero_field_is_a_gradient_zero() {
    let za = analyzer();
    let zero = FieldVector::zero();
    for k in 0..4 {
        let s = za.exact_spin_expectation(k, &zero).unwrap();
        assert!(s.norm() < 1e-9, "{s:?}");
        let cf = za.closed_form_spin_expectation(k, &zero).unwrap();
        assert_eq!(cf, Vector3::zeros());
        let g = za.level_gradient(k, &zero).unwrap();
        assert!(g.gradient.norm() < 1e-9 * za.system().bohr_magneton * 6.0);
    }
    for pair in LevelPair::all() {
        assert!(za.s1(pair, &zero).unwrap().norm < 1e-9 * za.system().bohr_magneton);
    }
}

#[test]
fn closed_form_error_shrinks_faster_than_linear() {
    let za = analyzer();
    for axis in 0..3 {
        let mut errors = Vec::new();
        for b in [8e-6, 4e-6, 2e-6] {
            let mut v = [0.0; 3];
            v[axis] = b;
            let field = FieldVector::new(v[0], v[1], v[2]).unwrap();
            for k in 0..4 {
                let e = za.effective_spin_expectation(k, &field).unwrap();
                assert!(e.is_perturbative());
                if k == 1 {
                    errors.push((e.closed_form - e.exact).norm() / e.exact.norm());
                }
            }
        }
        for w in errors.windows(2) {
            assert!(w[0] / w[1] > 3.0, "axis {axis}: {errors:?}");
        }
    }
}

#[test]
fn spin_expectation_is_linear_at_low_field() {
    let za = analyzer();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let field = random_field(&mut rng, 5e-6);
        for k in 0..4 {
            let s1 = za.exact_spin_expectation(k, &field).unwrap();
            let s2 = za.exact_spin_expectation(k, &field.scaled(2.0)).unwrap();
            assert!((s2 - s1 * 2.0).norm() <= 0.01 * s2.norm(), "{s1:?} {s2:?}");
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let za = analyzer();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..25 {
        let field = random_field(&mut rng, 1e-3);
        for k in 0..4 {
            let g = za.level_gradient(k, &field).unwrap();
            let rel = (g.gradient - g.finite_difference).norm() / g.gradient.norm();
            assert!(rel < 1e-6, "level {k} at {:?}: {rel:e}", field.components());
        }
    }
}

#[test]
fn s1_norm_is_invariant_under_field_reversal() {
    let za = analyzer();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let field = random_field(&mut rng, 500e-6);
        let plus = za.s1(presets::clock_pair(), &field).unwrap();
        let minus = za.s1(presets::clock_pair(), &field.scaled(-1.0)).unwrap();
        assert!((plus.norm - minus.norm).abs() <= 1e-9 * plus.norm);
        assert!((plus.gradient + minus.gradient).norm() <= 1e-9 * plus.norm);
    }
}

#[test]
fn norm_bounds_every_directional_gradient() {
    let za = analyzer();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..20 {
        let field = random_field(&mut rng, 300e-6);
        let s = za.s1(presets::clock_pair(), &field).unwrap();
        for _ in 0..10 {
            let d = random_field(&mut rng, 1.0);
            assert!(s.directional(d.vector()).abs() <= s.norm * (1.0 + 1e-12));
        }
        assert_eq!(s.directional(&Vector3::zeros()), 0.0);
    }
}

#[test]
fn minimum_angle_is_unique_at_principal_axis() {
    let za = analyzer();
    let scan = za.s1_angle_scan(presets::clock_pair(), Plane::D1D2, 200e-6, 720).unwrap();
    let (angle, value) = scan.minimum().unwrap();
    assert!((angle - 55.9).abs() < 0.5, "{angle}");
    assert_eq!(scan.local_minima(), 1);
    assert!(value < scan.maximum().unwrap().1);
}

#[test]
fn map_cells_equal_pointwise_gradients() {
    let za = analyzer();
    let ax = GridAxis::new(-300e-6, 300e-6, 7).unwrap();
    let ay = GridAxis::new(-200e-6, 200e-6, 5).unwrap();
    let map = za.s1_map(presets::clock_pair(), Plane::D1D2, &ax, &ay, 20e-6).unwrap();
    assert_eq!(map.shape(), (7, 5));
    for i in 0..7 {
        for j in 0..5 {
            let f = map.field(i, j).unwrap();
            assert_eq!(f.components()[2], 20e-6);
            let direct = za.s1(presets::clock_pair(), &f).unwrap().norm;
            assert_eq!(map.get(i, j), direct);
            assert!(map.get(i, j) >= 0.0);
        }
    }
    let again = za.s1_map(presets::clock_pair(), Plane::D1D2, &ax, &ay, 20e-6).unwrap();
    assert_eq!(map, again);
}

#[test]
fn zero_extent_map_is_all_zero() {
    let za = analyzer();
    assert!(GridAxis::new(0.0, 0.0, 3).is_err());
    let zero = GridAxis { start: 0.0, stop: 0.0, steps: 3 };
    let map = za.s1_map(presets::clock_pair(), Plane::D1B, &zero, &zero, 0.0).unwrap();
    let scale = za.system().bohr_magneton;
    assert!(map.values.iter().all(|&v| v < 1e-12 * scale), "{:?}", map.values);
}

#[test]
fn map_rejects_degenerate_grid() {
    let za = analyzer();
    let one = GridAxis { start: 0.0, stop: 1e-4, steps: 1 };
    let ok = GridAxis::new(0.0, 1e-4, 3).unwrap();
    assert!(za.s1_map(presets::clock_pair(), Plane::D1D2, &one, &ok, 0.0).is_err());
}

#[test]
fn zefoz_search_finds_zero_field_from_documented_start() {
    let za = analyzer();
    let start = FieldVector::microtesla(50.0, -100.0, 20.0).unwrap();
    let r = za
        .zefoz_search(presets::clock_pair(), &start, &ZefozOptions::default())
        .unwrap();
    assert!(r.applied.magnitude() < 0.1e-6, "{:?}", r.applied.components());
}

#[test]
fn zefoz_search_converges_from_random_starts() {
    let za = analyzer();
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let options = ZefozOptions::symmetric_bounds(500e-6);
    for pair in [presets::clock_pair(), LevelPair::from_labels(1, 2).unwrap()] {
        for _ in 0..10 {
            let start = FieldVector::new(
                rng.random_range(-500e-6..500e-6),
                rng.random_range(-500e-6..500e-6),
                rng.random_range(-500e-6..500e-6),
            )
            .unwrap();
            let r = za.zefoz_search(pair, &start, &options).unwrap();
            assert!(r.total.magnitude() < 0.1e-6, "{pair} {:?}", r.total.components());
        }
    }
}

#[test]
fn zefoz_search_compensates_lab_bias() {
    let za = analyzer();
    let options = ZefozOptions {
        lab_bias: FieldVector::new(0.0, presets::LAB_BIAS_D2, 0.0).unwrap(),
        ..ZefozOptions::default()
    };
    let r = za
        .zefoz_search(presets::clock_pair(), &FieldVector::zero(), &options)
        .unwrap();
    let [d1, d2, b] = r.applied.components();
    assert!(d1.abs() < 0.1e-6 && b.abs() < 0.1e-6);
    assert!((d2 + 155e-6).abs() < 0.1e-6, "{d2}");
}

#[test]
fn zefoz_search_reports_unreachable_zero() {
    let za = analyzer();
    let options = ZefozOptions {
        bounds: [(100e-6, 200e-6), (100e-6, 200e-6), (100e-6, 200e-6)],
        ..ZefozOptions::default()
    };
    let start = FieldVector::microtesla(150.0, 150.0, 150.0).unwrap();
    let err = za
        .zefoz_search(presets::clock_pair(), &start, &options)
        .unwrap_err();
    assert!(matches!(err, Error::NoConvergence { .. }), "{err:?}");
}

#[test]
fn degenerate_levels_disable_closed_form_only() {
    let a = InteractionTensor::isotropic(1e9).unwrap();
    let g = InteractionTensor::isotropic(2.0).unwrap();
    let sys = SpinSystem::new(LevelTensors::new(a, g), None, 2.095e6).unwrap();
    let za = ZeemanAnalyzer::new(&sys, ElectronicLevel::Ground).unwrap();
    assert!(matches!(za.closed_form_status(), Err(Error::DegenerateLevels { .. })));
    let field = FieldVector::microtesla(10.0, 0.0, 0.0).unwrap();
    assert!(za.effective_spin_expectation(0, &field).is_err());
    let g = za.level_gradient(0, &field).unwrap();
    assert!(g.closed_form.is_none());
    assert!(g.gradient.iter().all(|x| x.is_finite()));
}

proptest! {
    #[test]
    fn s1_is_odd_in_field(d1 in -5e-4f64..5e-4, d2 in -5e-4f64..5e-4, b in -5e-4f64..5e-4) {
        let za = analyzer();
        let f = FieldVector::new(d1, d2, b).unwrap();
        let plus = za.s1(presets::clock_pair(), &f).unwrap();
        let minus = za.s1(presets::clock_pair(), &f.scaled(-1.0)).unwrap();
        prop_assert!((plus.gradient + minus.gradient).norm() <= 1e-9 * plus.norm.max(1.0));
    }
}
