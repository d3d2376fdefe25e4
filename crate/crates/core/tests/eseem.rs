use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zefoz::constants::{BOHR_MAGNETON_J_PER_T, GAMMA_Y89_HZ_PER_T, MU0_OVER_4PI};
use zefoz::eseem::{
    dipolar_couplings, larmor_period, moment_vs_field_scan, two_pulse_envelope, Couplings,
    HostNucleus, LarmorPeriod, NuclearFrequencies,
};
use zefoz::presets;
use zefoz::spin::{ElectronicLevel, FieldVector};
use zefoz::zeeman::ZeemanAnalyzer;

fn analyzer() -> ZeemanAnalyzer {
    ZeemanAnalyzer::new(&presets::default_system().unwrap(), ElectronicLevel::Ground).unwrap()
}

fn taus(max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| max * i as f64 / n as f64).collect()
}

fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi = rng.random_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).sqrt();
    Vector3::new(s * phi.cos(), s * phi.sin(), z)
}

fn random_shell(rng: &mut impl Rng) -> Vec<HostNucleus> {
    [0.365, 0.38, 0.41, 0.43, 0.48, 0.53]
        .iter()
        .map(|d| HostNucleus::at(random_unit(rng) * (d * 1e-9), GAMMA_Y89_HZ_PER_T).unwrap())
        .collect()
}

#[test]
fn larmor_period_examples() {
    let t = larmor_period(248e-6, GAMMA_Y89_HZ_PER_T).unwrap().seconds().unwrap();
    assert!((t - 1.925e-3).abs() < 0.5e-6, "{t}");
    let t = larmor_period(65e-6, GAMMA_Y89_HZ_PER_T).unwrap().seconds().unwrap();
    assert!((t - 7.34e-3).abs() < 5e-6, "{t}");
    let single = larmor_period(100e-6, 2e6).unwrap().seconds().unwrap();
    let double = larmor_period(100e-6, 4e6).unwrap().seconds().unwrap();
    assert!((single / double - 2.0).abs() < 1e-12);
    assert_eq!(larmor_period(0.0, 2e6).unwrap(), LarmorPeriod::Unbounded);
    assert!(larmor_period(1e-4, -1.0).is_err());
}

#[test]
fn couplings_match_dipole_tensor_contraction() {
    let r = 0.4e-9;
    let position = Vector3::new(0.0, 0.0, r);
    let nucleus = HostNucleus::at(position, GAMMA_Y89_HZ_PER_T).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cases = std::iter::once((Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.1, 0.0, 0.0)))
        .chain((0..50).map(|_| (random_unit(&mut rng), random_unit(&mut rng) * 0.1)));
    for (field_dir, moment) in cases {
        let mut tensor = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                tensor[(i, j)] = MU0_OVER_4PI * (3.0 * position[i] * position[j] / (r * r) - delta)
                    / r.powi(3);
            }
        }
        let h = tensor * (moment * BOHR_MAGNETON_J_PER_T) * GAMMA_Y89_HZ_PER_T;
        let a = h.dot(&field_dir);
        let b = (h - field_dir * a).norm();
        let c = dipolar_couplings(&moment, &nucleus, &field_dir).unwrap();
        assert!((c.secular - a).abs() <= 1e-12 * h.norm());
        assert!((c.pseudo_secular - b).abs() <= 1e-12 * h.norm());
    }
}

#[test]
fn couplings_scale_linearly_with_moment() {
    let nucleus = HostNucleus::at(Vector3::new(0.1e-9, 0.2e-9, 0.3e-9), 2.095e6).unwrap();
    let dir = Vector3::new(1.0, 0.0, 0.0);
    let m = Vector3::new(0.02, -0.05, 0.3);
    let one = dipolar_couplings(&m, &nucleus, &dir).unwrap();
    let three = dipolar_couplings(&(m * 3.0), &nucleus, &dir).unwrap();
    assert!((three.secular - 3.0 * one.secular).abs() <= 1e-12 * three.secular.abs());
    assert!((three.pseudo_secular - 3.0 * one.pseudo_secular).abs() <= 1e-12 * three.pseudo_secular);
    let zero = dipolar_couplings(&Vector3::zeros(), &nucleus, &dir).unwrap();
    assert_eq!(zero, Couplings { secular: 0.0, pseudo_secular: 0.0 });
}

#[test]
fn nuclei_too_close_are_rejected() {
    assert!(HostNucleus::at(Vector3::new(0.1e-9, 0.0, 0.0), 2.095e6).is_err());
    assert!(HostNucleus::at(Vector3::new(0.2e-9, 0.0, 0.0), 2.095e6).is_ok());
}

#[test]
fn zero_moment_gives_flat_envelope() {
    let nuclei = presets::default_nuclei().unwrap();
    let field = FieldVector::microtesla(-248.0, -65.0, 0.0).unwrap();
    let env = two_pulse_envelope(&nuclei, &field, &Vector3::zeros(), &taus(10e-3, 500)).unwrap();
    assert!(env.values.iter().all(|&v| v == 1.0));
    assert_eq!(env.modulation_depth(), 0.0);
}

#[test]
fn envelope_starts_at_one_and_depths_are_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..20 {
        let nuclei = random_shell(&mut rng);
        let field = FieldVector::from_vector(random_unit(&mut rng) * 300e-6).unwrap();
        let moment = random_unit(&mut rng) * rng.random_range(0.0..3.0);
        let env = two_pulse_envelope(&nuclei, &field, &moment, &taus(8e-3, 400)).unwrap();
        assert_eq!(env.values[0], 1.0);
        assert!(env.depths.iter().all(|&k| (0.0..=1.0).contains(&k)));
        assert!(env.magnitude().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn single_nucleus_extremes() {
    let omega_i = 2.0 * PI * 500.0;
    // k = (b ω_I / (ω_α ω_β))² with a = 0 gives b = 2ω_I for k = 1
    let full = NuclearFrequencies::new(
        &Couplings { secular: 0.0, pseudo_secular: 2.0 * 500.0 },
        omega_i,
    );
    assert!((full.depth - 1.0).abs() < 1e-12);
    let t = PI / full.omega_alpha;
    assert!((full.factor(t) - (1.0 - 2.0 * full.depth)).abs() < 1e-12);

    // k = 1/2 dips to zero
    let x = 2.0 * 2f64.sqrt() - 2.0;
    let half = NuclearFrequencies::new(
        &Couplings { secular: 0.0, pseudo_secular: x * 500.0 },
        omega_i,
    );
    assert!((half.depth - 0.5).abs() < 1e-12, "{}", half.depth);
    assert!(half.factor(PI / half.omega_alpha).abs() < 1e-12);
}

#[test]
fn envelope_is_product_of_single_nucleus_envelopes() {
    let nuclei: Vec<HostNucleus> = presets::default_nuclei().unwrap().into_iter().take(3).collect();
    let field = FieldVector::microtesla(-248.0, -65.0, 10.0).unwrap();
    let moment = Vector3::new(0.5, -1.2, 0.3);
    let grid = taus(6e-3, 300);
    let all = two_pulse_envelope(&nuclei, &field, &moment, &grid).unwrap();
    let singles: Vec<_> = nuclei
        .iter()
        .map(|n| two_pulse_envelope(std::slice::from_ref(n), &field, &moment, &grid).unwrap())
        .collect();
    for i in 0..grid.len() {
        let product: f64 = singles.iter().map(|e| e.values[i]).product();
        assert!((all.values[i] - product).abs() < 1e-14);
    }
}

#[test]
fn modulation_depth_vanishes_quadratically_with_moment() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let field = FieldVector::microtesla(-248.0, -65.0, 0.0).unwrap();
    let grid = taus(8e-3, 4000);
    for _ in 0..5 {
        let nuclei = random_shell(&mut rng);
        let moment = random_unit(&mut rng) * 1e-4;
        let d1 = two_pulse_envelope(&nuclei, &field, &moment, &grid).unwrap().modulation_depth();
        let d2 = two_pulse_envelope(&nuclei, &field, &(moment * 0.5), &grid)
            .unwrap()
            .modulation_depth();
        assert!(d1 > 0.0);
        assert!((d1 / d2 - 4.0).abs() < 0.2, "{d1} / {d2}");
    }
}

#[test]
fn default_nuclei_revive_at_larmor_multiples() {
    let za = analyzer();
    let field = FieldVector::microtesla(-248.0, -65.0, 0.0).unwrap();
    let moment = za.moment_difference(presets::clock_pair(), &field).unwrap();
    let t_y = larmor_period(field.magnitude(), GAMMA_Y89_HZ_PER_T).unwrap().seconds().unwrap();
    let env = two_pulse_envelope(&presets::default_nuclei().unwrap(), &field, &moment, &taus(3.5 * t_y, 14000))
        .unwrap();
    assert!(env.modulation_depth() > 0.2);
    for n in 1..=3 {
        let target = n as f64 * t_y;
        let peak = env.peak_between(target - 0.3 * t_y, target + 0.3 * t_y).unwrap();
        assert!((peak / target - 1.0).abs() < 0.01, "n = {n}: {peak} vs {target}");
    }
}

#[test]
fn revival_time_tracks_inverse_field() {
    let za = analyzer();
    let nuclei = presets::default_nuclei().unwrap();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for d1 in [-150.0, -200.0, -250.0, -300.0, -350.0, -400.0] {
        let field = FieldVector::microtesla(d1, -65.0, 0.0).unwrap();
        let moment = za.moment_difference(presets::clock_pair(), &field).unwrap();
        let t_y = 1.0 / (GAMMA_Y89_HZ_PER_T * field.magnitude());
        let env = two_pulse_envelope(&nuclei, &field, &moment, &taus(1.6 * t_y, 8000)).unwrap();
        xs.push(t_y);
        ys.push(env.peak_between(0.5 * t_y, 1.5 * t_y).unwrap());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope - 1.0).abs() < 0.01, "{slope}");
}

#[test]
fn modulation_is_quenched_on_minimum_gradient_line() {
    let za = analyzer();
    let phi = (presets::PRINCIPAL_ANGLE_DEG + 180.0).to_radians();
    let d1 = -65e-6 * phi.cos() / phi.sin();
    let on_line = FieldVector::new(d1, -65e-6, 0.0).unwrap();
    let off_line = FieldVector::microtesla(-248.0, -65.0, 0.0).unwrap();
    let grid = taus(20e-3, 8000);
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let shells = std::iter::once(presets::default_nuclei().unwrap())
        .chain((0..10).map(|_| random_shell(&mut rng)));
    for nuclei in shells {
        let m_on = za.moment_difference(presets::clock_pair(), &on_line).unwrap();
        let on = two_pulse_envelope(&nuclei, &on_line, &m_on, &grid).unwrap();
        assert!(on.modulation_depth() < 0.01, "{}", on.modulation_depth());
        let m_off = za.moment_difference(presets::clock_pair(), &off_line).unwrap();
        let off = two_pulse_envelope(&nuclei, &off_line, &m_off, &grid).unwrap();
        assert!(off.modulation_depth() > on.modulation_depth());
    }
}

#[test]
fn scan_across_line_has_depth_minimum_on_line() {
    let za = analyzer();
    let phi = (presets::PRINCIPAL_ANGLE_DEG + 180.0).to_radians();
    let line_d1 = -65e-6 * phi.cos() / phi.sin();
    let path: Vec<FieldVector> = (0..=40)
        .map(|i| FieldVector::new(-150e-6 + 5e-6 * i as f64, -65e-6, 0.0).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let nuclei = random_shell(&mut rng);
    let scan =
        moment_vs_field_scan(&za, presets::clock_pair(), &path, &nuclei, &taus(20e-3, 4000)).unwrap();
    let moments: Vec<f64> = scan.iter().map(|p| p.moment_magnitude()).collect();
    let i_min = (0..moments.len())
        .min_by(|&a, &b| moments[a].total_cmp(&moments[b]))
        .unwrap();
    let d1_min = path[i_min].components()[0];
    assert!((d1_min - line_d1).abs() <= 5e-6, "{d1_min} vs {line_d1}");
    let depths: Vec<f64> = scan.iter().map(|p| p.modulation_depth()).collect();
    let j_min = (0..depths.len())
        .min_by(|&a, &b| depths[a].total_cmp(&depths[b]))
        .unwrap();
    assert!((path[j_min].components()[0] - line_d1).abs() <= 5e-6);
}

#[test]
fn approaching_zero_field_lengthens_period_and_removes_depth() {
    let za = analyzer();
    let nuclei = presets::default_nuclei().unwrap();
    let path: Vec<FieldVector> = [200.0, 100.0, 50.0, 20.0, 5.0, 0.0]
        .iter()
        .map(|&d1| FieldVector::microtesla(d1, 0.0, 0.0).unwrap())
        .collect();
    let scan = moment_vs_field_scan(&za, presets::clock_pair(), &path, &nuclei, &taus(5e-3, 1000))
        .unwrap();
    let last = scan.last().unwrap();
    assert_eq!(last.larmor, LarmorPeriod::Unbounded);
    assert_eq!(last.modulation_depth(), 0.0);
    for w in scan.windows(2) {
        assert!(w[1].moment_magnitude() < w[0].moment_magnitude());
        match (w[0].larmor.seconds(), w[1].larmor.seconds()) {
            (Some(a), Some(b)) => assert!(b > a),
            (Some(_), None) => {}
            other => panic!("{other:?}"),
        }
    }
}
