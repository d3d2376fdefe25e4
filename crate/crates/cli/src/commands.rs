use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use zefoz::dynamics::{echo_map, rabi_trace, sigma_from_fwhm, EchoModel, DEFAULT_RABI_NODES};
use zefoz::eseem::{larmor_period, two_pulse_envelope};
use zefoz::fitting::{
    fit_stretched_exponential, fit_t2_vs_field, DecayCurve, Estimate, FieldPoint, FitDiagnostics,
    StretchedExpOptions, T2FieldOptions,
};
use zefoz::zeeman::{ZeemanAnalyzer, ZefozOptions};
use zefoz::{build_hamiltonian, diagonalize, transition_table, FieldVector};

use crate::config::{self, LoadedConfig};
use crate::error::{CliError, CliResult, Origin};
use crate::import::{column_factor, read_columns};
use crate::output::{Output, Table};
use crate::units::Dim;

pub struct Context {
    pub config: LoadedConfig,
    pub out: Output,
    pub seed: u64,
}

fn cfg_err(e: zefoz::Error) -> CliError {
    CliError::core(e, Origin::Config)
}

fn input_err(e: zefoz::Error) -> CliError {
    CliError::core(e, Origin::Input)
}

fn vec3(v: [f64; 3]) -> Value {
    json!(v)
}

impl Context {
    fn meta(&self, command: &str) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("command".into(), json!(command));
        m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        m.insert("config_sha256".into(), json!(self.config.sha256));
        m.insert("seed".into(), json!(self.seed));
        m
    }

    fn analyzer(&self, command: &str) -> CliResult<ZeemanAnalyzer> {
        let (system, level) = self.config.config.spin_system(command)?;
        ZeemanAnalyzer::new(&system, level).map_err(cfg_err)
    }

    fn report(&self, written: &[PathBuf]) {
        for p in written {
            log::info!("wrote {}", p.display());
        }
    }
}

pub fn levels(ctx: &Context) -> CliResult<()> {
    let c = &ctx.config.config;
    let (system, level) = c.spin_system("levels")?;
    let block = c.levels.as_ref();
    let field = match block.and_then(|b| b.field.as_ref()) {
        Some(f) => config::field(f, "levels.field")?,
        None => FieldVector::zero(),
    };
    let tolerance = match block {
        Some(b) => config::optional_si(&b.merge_tolerance, Dim::FREQUENCY, "levels.merge_tolerance")?,
        None => None,
    }
    .unwrap_or(1e3);
    let h = build_hamiltonian(&system, level, &field).map_err(cfg_err)?;
    let eigs = diagonalize(&h).map_err(cfg_err)?;
    let table = transition_table(&eigs, &system, level).map_err(cfg_err)?;

    let mut csv = Table::new([
        "lower",
        "upper",
        "frequency_Hz",
        "moment_D1_Hz_per_T",
        "moment_D2_Hz_per_T",
        "moment_b_Hz_per_T",
    ]);
    println!("pair     frequency (MHz)");
    for t in &table.entries {
        let (l, u) = t.pair.labels();
        csv.push(vec![l as f64, u as f64, t.frequency, t.moments[0], t.moments[1], t.moments[2]]);
        println!("{:<8} {:>14.4}", t.pair.to_string(), t.frequency / 1e6);
    }
    let distinct = table.distinct_frequencies(tolerance);
    let zero_pairs: Vec<String> = table
        .entries
        .iter()
        .filter(|t| t.frequency <= tolerance)
        .map(|t| t.pair.to_string())
        .collect();
    let nonzero = table.entries.len() - zero_pairs.len();
    let degenerate = !zero_pairs.is_empty() || distinct.len() < nonzero;
    if degenerate {
        println!(
            "degenerate: {} distinct nonzero frequencies among {} transitions",
            distinct.len(),
            table.entries.len()
        );
    }

    let mut meta = ctx.meta("levels");
    meta.insert("field_T".into(), vec3(field.components()));
    meta.insert("electronic_level".into(), json!(level.name()));
    meta.insert(
        "summary".into(),
        json!({
            "energies_Hz": eigs.energies,
            "distinct_frequencies_Hz": distinct,
            "merge_tolerance_Hz": tolerance,
            "degenerate": degenerate,
            "zero_frequency_pairs": zero_pairs,
        }),
    );
    let written = ctx.out.write("levels", &[("", &csv)], meta)?;
    ctx.report(&written);
    Ok(())
}

pub fn map_s1(ctx: &Context) -> CliResult<()> {
    let c = &ctx.config.config;
    let block = config::require(&c.map_s1, "map_s1", "map-s1")?;
    let za = ctx.analyzer("map-s1")?;
    let pair = c.level_pair()?;
    let plane = config::plane(&block.plane)?;
    let a1 = block.axis1.axis(Dim::FIELD, "map_s1.axis1")?;
    let a2 = block.axis2.axis(Dim::FIELD, "map_s1.axis2")?;
    let offset = block.offset.si(Dim::FIELD, "map_s1.offset").map_err(CliError::Config)?;
    let magnitude = block
        .angle_magnitude
        .si(Dim::FIELD, "map_s1.angle_magnitude")
        .map_err(CliError::Config)?;
    if block.angle_steps == 0 {
        return Err(CliError::Usage("map_s1.angle_steps: empty angle sweep".into()));
    }

    let map = za.s1_map(pair, plane, &a1, &a2, offset).map_err(cfg_err)?;
    let scan = za
        .s1_angle_scan(pair, plane, magnitude, block.angle_steps)
        .map_err(cfg_err)?;

    let (n1, n2, _) = plane.axis_names();
    let mut grid = Table::new([format!("{n1}_T"), format!("{n2}_T"), "s1_Hz_per_T".into()]);
    let (rows, cols) = map.shape();
    for i in 0..rows {
        for j in 0..cols {
            grid.push(vec![map.axis1[i], map.axis2[j], map.get(i, j)]);
        }
    }
    let mut angles = Table::new(["angle_rad", "s1_Hz_per_T"]);
    for (a, v) in scan.angles_deg.iter().zip(&scan.norms) {
        angles.push(vec![a.to_radians(), *v]);
    }

    let minimum = scan.minimum();
    let argmin = map.argmin().map(|((i, j), v)| {
        json!({ "field_T": map.field(i, j).map(|f| f.components()).unwrap_or([f64::NAN; 3]), "s1_Hz_per_T": v })
    });
    let mut meta = ctx.meta("map-s1");
    meta.insert("pair".into(), json!(pair.to_string()));
    meta.insert(
        "grid".into(),
        json!({
            "plane": plane.name(),
            "axis1": { "name": n1, "start_T": a1.start, "stop_T": a1.stop, "steps": a1.steps },
            "axis2": { "name": n2, "start_T": a2.start, "stop_T": a2.stop, "steps": a2.steps },
            "offset_T": offset,
            "layout": "row-major, axis1 outer",
            "angle_scan": { "magnitude_T": magnitude, "steps": block.angle_steps },
        }),
    );
    meta.insert(
        "summary".into(),
        json!({
            "min_angle_deg": minimum.map(|m| m.0),
            "min_angle_s1_Hz_per_T": minimum.map(|m| m.1),
            "max_angle_s1_Hz_per_T": scan.maximum().map(|m| m.1),
            "angle_local_minima": scan.local_minima(),
            "grid_minimum": argmin,
        }),
    );
    if let Some((deg, v)) = minimum {
        println!(
            "minimum |S1| on the {} circle of {:.1} uT: {:.2} deg ({:.4} Hz/uT)",
            plane.name(),
            magnitude * 1e6,
            deg,
            v * 1e-6
        );
    }
    let written = ctx
        .out
        .write("map_s1", &[("", &grid), ("_angles", &angles)], meta)?;
    ctx.report(&written);
    Ok(())
}

fn echo_model(ctx: &Context, command: &str) -> CliResult<EchoModel> {
    let c = &ctx.config.config;
    let analyzer = ctx.analyzer(command)?;
    let nuclei = c.nuclei(analyzer.system(), command)?;
    let (law, e0, mims_m) = c.t2_law(command)?;
    let model = EchoModel {
        analyzer,
        pair: c.level_pair()?,
        nuclei,
        e0,
        mims_m,
        law,
    };
    model.validate().map_err(cfg_err)?;
    Ok(model)
}

pub fn map_echo(ctx: &Context) -> CliResult<()> {
    let c = &ctx.config.config;
    let block = config::require(&c.map_echo, "map_echo", "map-echo")?;
    let model = echo_model(ctx, "map-echo")?;
    let axis = config::axis_index(&block.axis)?;
    let sweep = block.sweep.values(Dim::FIELD, "map_echo.sweep")?;
    let taus = block.tau.values(Dim::TIME, "map_echo.tau")?;
    let applied = config::field(&block.fixed, "map_echo.fixed")?;
    let bias = match &block.lab_bias {
        Some(b) => config::field(b, "map_echo.lab_bias")?,
        None => FieldVector::zero(),
    };
    let fixed = applied + bias;
    let map = echo_map(&model, axis, &sweep, &fixed, &taus).map_err(cfg_err)?;

    let axis_name = ["D1", "D2", "b"][axis];
    let mut csv = Table::new([format!("{axis_name}_T"), "tau_s".into(), "amplitude".into(), "modulation".into()]);
    for (i, b) in map.sweep.iter().enumerate() {
        let amp = map.row(i);
        let md = map.modulation_row(i);
        for (j, t) in map.taus.iter().enumerate() {
            csv.push(vec![*b, *t, amp[j], md[j]]);
        }
    }
    let mut columns = Table::new([
        format!("{axis_name}_T"),
        "field_magnitude_T".into(),
        "t2_s".into(),
        "first_revival_s".into(),
    ]);
    for (i, b) in map.sweep.iter().enumerate() {
        columns.push(vec![
            *b,
            map.fields[i].magnitude(),
            map.t2[i],
            map.first_revival(i).unwrap_or(f64::NAN),
        ]);
    }

    let min_depth = block.ridge_min_depth.unwrap_or(0.05);
    let ridge = map.ridge_regression(min_depth);
    let dominant = map.dominant_column().map(|i| map.sweep[i]);
    let mut meta = ctx.meta("map-echo");
    meta.insert("pair".into(), json!(model.pair.to_string()));
    meta.insert(
        "grid".into(),
        json!({
            "sweep_axis": axis_name,
            "sweep_T": { "start": sweep.first(), "stop": sweep.last(), "steps": sweep.len() },
            "tau_s": { "start": taus.first(), "stop": taus.last(), "steps": taus.len() },
            "fixed_T": vec3(applied.components()),
            "lab_bias_T": vec3(bias.components()),
            "layout": "row-major, sweep outer",
        }),
    );
    meta.insert(
        "summary".into(),
        json!({
            "dominant_sweep_T": dominant,
            "ridge": ridge.map(|r| json!({
                "slope": r.slope,
                "intercept_s": r.intercept,
                "r_squared": r.r_squared,
                "points": r.points,
                "min_depth": min_depth,
            })),
        }),
    );
    if let Some(d) = dominant {
        println!("longest-lived echo at {axis_name} = {:.1} uT", d * 1e6);
    }
    if let Some(r) = ridge {
        println!("first revival vs Larmor period: slope {:.4} (r2 {:.5}, {} points)", r.slope, r.r_squared, r.points);
    }
    let written = ctx
        .out
        .write("map_echo", &[("", &csv), ("_columns", &columns)], meta)?;
    ctx.report(&written);
    Ok(())
}

pub fn zefoz(ctx: &Context) -> CliResult<()> {
    let c = &ctx.config.config;
    let block = config::require(&c.zefoz, "zefoz", "zefoz")?;
    let za = ctx.analyzer("zefoz")?;
    let pair = c.level_pair()?;
    let half = block.half_width.si(Dim::FIELD, "zefoz.half_width").map_err(CliError::Config)?;
    if half <= 0.0 {
        return Err(CliError::Usage("zefoz.half_width: empty search box".into()));
    }
    let mut options = ZefozOptions::symmetric_bounds(half);
    if let Some(b) = &block.lab_bias {
        options.lab_bias = config::field(b, "zefoz.lab_bias")?;
    }
    if let Some(r) = block.restarts {
        options.restarts = r;
    }
    let mut starts = vec![config::field(&block.start, "zefoz.start")?];
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    for _ in 0..block.random_starts {
        starts.push(
            FieldVector::new(
                rng.random_range(-half..half),
                rng.random_range(-half..half),
                rng.random_range(-half..half),
            )
            .map_err(cfg_err)?,
        );
    }

    let mut csv = Table::new([
        "start_D1_T",
        "start_D2_T",
        "start_b_T",
        "applied_D1_T",
        "applied_D2_T",
        "applied_b_T",
        "total_D1_T",
        "total_D2_T",
        "total_b_T",
        "s1_Hz_per_T",
        "evaluations",
    ]);
    let mut best: Option<zefoz::zeeman::ZefozResult> = None;
    let mut last_error = None;
    for s in &starts {
        match za.zefoz_search(pair, s, &options) {
            Ok(r) => {
                let mut row = s.components().to_vec();
                row.extend(r.applied.components());
                row.extend(r.total.components());
                row.push(r.s1_norm);
                row.push(r.evaluations as f64);
                csv.push(row);
                if best.as_ref().is_none_or(|b| r.s1_norm < b.s1_norm) {
                    best = Some(r);
                }
            }
            Err(e @ zefoz::Error::NoConvergence { .. }) => {
                log::warn!("search from {:?} T failed: {e}", s.components());
                last_error = Some(e);
            }
            Err(e) => return Err(cfg_err(e)),
        }
    }
    let best = match (best, last_error) {
        (Some(b), _) => b,
        (None, Some(e)) => return Err(cfg_err(e)),
        (None, None) => return Err(CliError::Usage("no search starts".into())),
    };
    let inferred_bias = best.applied.scaled(-1.0);
    let mut meta = ctx.meta("zefoz");
    meta.insert("pair".into(), json!(pair.to_string()));
    meta.insert(
        "grid".into(),
        json!({
            "bounds_T": options.bounds.iter().map(|(a, b)| [*a, *b]).collect::<Vec<_>>(),
            "starts": starts.len(),
            "restarts": options.restarts,
            "lab_bias_T": vec3(options.lab_bias.components()),
        }),
    );
    meta.insert(
        "summary".into(),
        json!({
            "applied_T": vec3(best.applied.components()),
            "total_T": vec3(best.total.components()),
            "inferred_bias_T": vec3(inferred_bias.components()),
            "s1_Hz_per_T": best.s1_norm,
            "converged_starts": csv.rows.len(),
        }),
    );
    let [d1, d2, b] = best.applied.components();
    println!(
        "gradient zero of {pair} at applied ({:.3}, {:.3}, {:.3}) uT, |S1| = {:.3e} Hz/T",
        d1 * 1e6,
        d2 * 1e6,
        b * 1e6,
        best.s1_norm
    );
    let written = ctx.out.write("zefoz", &[("", &csv)], meta)?;
    ctx.report(&written);
    Ok(())
}

pub fn rabi(ctx: &Context) -> CliResult<()> {
    let c = &ctx.config.config;
    let block = config::require(&c.rabi, "rabi", "rabi")?;
    let f = block
        .rabi_frequency
        .si(Dim::FREQUENCY, "rabi.rabi_frequency")
        .map_err(CliError::Config)?;
    let fwhm = block
        .inhomogeneous_fwhm
        .si(Dim::FREQUENCY, "rabi.inhomogeneous_fwhm")
        .map_err(CliError::Config)?;
    let times = block.time.values(Dim::TIME, "rabi.time")?;
    let nodes = block.nodes.unwrap_or(DEFAULT_RABI_NODES);
    let omega = 2.0 * PI * f;
    let sigma = sigma_from_fwhm(fwhm);
    let trace = rabi_trace(omega, sigma, &times, nodes).map_err(cfg_err)?;

    let mut csv = Table::new(["time_s", "population", "population_difference"]);
    for ((t, p), d) in trace.times.iter().zip(&trace.population).zip(trace.population_difference()) {
        csv.push(vec![*t, *p, d]);
    }
    let periods = (times.last().copied().unwrap_or(0.0) / trace.period()).floor() as usize;
    let contrasts: Vec<Option<f64>> = (1..=periods).map(|n| trace.period_contrast(n)).collect();
    let mut meta = ctx.meta("rabi");
    meta.insert(
        "grid".into(),
        json!({
            "time_s": { "start": times.first(), "stop": times.last(), "steps": times.len() },
            "quadrature_nodes": nodes,
        }),
    );
    meta.insert(
        "summary".into(),
        json!({
            "omega_rad_per_s": omega,
            "sigma_Hz": sigma,
            "period_s": trace.period(),
            "first_maximum_s": trace.first_maximum(),
            "contrast_per_period": contrasts,
        }),
    );
    if let Some(t) = trace.first_maximum() {
        println!("first maximum at {:.4} us", t * 1e6);
    }
    let written = ctx.out.write("rabi", &[("", &csv)], meta)?;
    ctx.report(&written);
    Ok(())
}

pub fn eseem(ctx: &Context) -> CliResult<()> {
    let c = &ctx.config.config;
    let block = config::require(&c.eseem, "eseem", "eseem")?;
    let za = ctx.analyzer("eseem")?;
    let pair = c.level_pair()?;
    let nuclei = c.nuclei(za.system(), "eseem")?;
    let field = config::field(&block.field, "eseem.field")?;
    let taus = block.tau.values(Dim::TIME, "eseem.tau")?;
    let moment = za.moment_difference(pair, &field).map_err(cfg_err)?;
    let env = two_pulse_envelope(&nuclei, &field, &moment, &taus).map_err(cfg_err)?;
    let gamma = nuclei.first().map(|n| n.gamma).unwrap_or(za.system().gamma_host);
    let period = larmor_period(field.magnitude(), gamma).map_err(cfg_err)?.seconds();

    let mut csv = Table::new(["tau_s", "envelope", "magnitude"]);
    for (t, v) in env.taus.iter().zip(&env.values) {
        csv.push(vec![*t, *v, v.abs()]);
    }
    let revivals: Vec<Value> = match period {
        Some(p) => (1..=block.revivals)
            .map(|n| {
                let target = n as f64 * p;
                json!({
                    "n": n,
                    "expected_s": target,
                    "peak_s": env.peak_between(target - 0.5 * p, target + 0.5 * p),
                })
            })
            .collect(),
        None => Vec::new(),
    };
    let mut meta = ctx.meta("eseem");
    meta.insert("pair".into(), json!(pair.to_string()));
    meta.insert(
        "grid".into(),
        json!({
            "field_T": vec3(field.components()),
            "tau_s": { "start": taus.first(), "stop": taus.last(), "steps": taus.len() },
            "nuclei": nuclei.len(),
        }),
    );
    meta.insert(
        "summary".into(),
        json!({
            "moment_difference_bohr": [moment.x, moment.y, moment.z],
            "moment_magnitude_bohr": moment.norm(),
            "larmor_period_s": period,
            "modulation_depth": env.modulation_depth(),
            "nucleus_depths": env.depths,
            "revivals": revivals,
        }),
    );
    match period {
        Some(p) => println!(
            "Larmor period {:.4} ms, modulation depth {:.4}",
            p * 1e3,
            env.modulation_depth()
        ),
        None => println!("zero field: no Larmor precession, modulation depth {:.4}", env.modulation_depth()),
    }
    let written = ctx.out.write("eseem", &[("", &csv)], meta)?;
    ctx.report(&written);
    Ok(())
}

fn estimate(e: Estimate, unit: &str) -> Value {
    json!({ "value": e.value, "sigma": e.sigma, "unit": unit })
}

fn diagnostics(d: &FitDiagnostics) -> Value {
    json!({
        "iterations": d.iterations,
        "status": format!("{:?}", d.status),
        "residual_norm": d.residual_norm,
        "reduced_chi_square": d.reduced_chi_square,
        "degrees_of_freedom": d.degrees_of_freedom,
    })
}

pub struct DecayColumns<'a> {
    pub tau: &'a str,
    pub amplitude: &'a str,
    pub sigma: Option<&'a str>,
    pub time_unit: &'a str,
}

pub fn fit_decay(ctx: &Context, file: &Path, cols: &DecayColumns) -> CliResult<()> {
    let time = column_factor(cols.time_unit, Dim::TIME, "--time-unit")?;
    let data = read_columns(file, &[Some(cols.tau), Some(cols.amplitude), cols.sigma])?;
    let taus: Vec<f64> = data.columns[0].iter().map(|t| t * time).collect();
    let amps = data.columns[1].clone();
    let sigmas = cols.sigma.map(|_| data.columns[2].clone());
    let curve = DecayCurve::new(taus, amps, sigmas).map_err(input_err)?;

    let mut options = StretchedExpOptions::default();
    if let Some(f) = &ctx.config.config.fit {
        if let Some([lo, hi]) = f.m_bounds {
            options.m_bounds = (lo, hi);
        }
        if let Some(n) = f.max_iterations {
            options.max_iterations = n;
        }
    }
    let fit = fit_stretched_exponential(&curve, &options).map_err(input_err)?;
    let model = fit.model();

    let mut csv = Table::new(["tau_s", "amplitude", "model", "residual"]);
    for (t, a) in curve.taus().iter().zip(curve.amplitudes()) {
        let m = model.value(*t);
        csv.push(vec![*t, *a, m, a - m]);
    }
    let mut meta = ctx.meta("fit-decay");
    meta.insert("model".into(), json!("E0 exp(-(2 tau / T2)^m)"));
    meta.insert("input_sha256".into(), json!(data.sha256));
    meta.insert("points".into(), json!(curve.len()));
    meta.insert("weighted".into(), json!(curve.sigmas().is_some()));
    meta.insert(
        "parameters".into(),
        json!({
            "e0": estimate(fit.e0, ""),
            "t2": estimate(fit.t2, "s"),
            "m": estimate(fit.m, ""),
        }),
    );
    meta.insert("diagnostics".into(), diagnostics(&fit.diagnostics));
    println!(
        "T2 = {:.4} +- {:.4} ms, m = {:.4} +- {:.4}, E0 = {:.4} +- {:.4}",
        fit.t2.value * 1e3,
        fit.t2.sigma * 1e3,
        fit.m.value,
        fit.m.sigma,
        fit.e0.value,
        fit.e0.sigma
    );
    let written = ctx.out.write("fit_decay", &[("_residuals", &csv)], meta)?;
    ctx.report(&written);
    Ok(())
}

pub struct FieldColumns<'a> {
    pub field: &'a str,
    pub t2: &'a str,
    pub sigma: Option<&'a str>,
    pub field_unit: &'a str,
    pub time_unit: &'a str,
}

pub fn fit_t2(ctx: &Context, file: &Path, cols: &FieldColumns) -> CliResult<()> {
    let bscale = column_factor(cols.field_unit, Dim::FIELD, "--field-unit")?;
    let tscale = column_factor(cols.time_unit, Dim::TIME, "--time-unit")?;
    let data = read_columns(file, &[Some(cols.field), Some(cols.t2), cols.sigma])?;
    let points: Vec<FieldPoint> = (0..data.columns[0].len())
        .map(|i| FieldPoint {
            field: data.columns[0][i] * bscale,
            t2: data.columns[1][i] * tscale,
            sigma: cols.sigma.map(|_| data.columns[2][i] * tscale),
        })
        .collect();

    let mut options = T2FieldOptions::default();
    if let Some(f) = &ctx.config.config.fit {
        options.fixed_b0 = config::optional_si(&f.fixed_b0, Dim::FIELD, "fit.fixed_b0")?;
        if let Some(n) = f.max_iterations {
            options.max_iterations = n;
        }
    }
    let fit = fit_t2_vs_field(&points, &options).map_err(input_err)?;
    let law = fit.model();

    let mut csv = Table::new(["B_T", "T2_s", "model_T2_s", "residual_s"]);
    for p in &points {
        let m = law.value(p.field);
        csv.push(vec![p.field, p.t2, m, p.t2 - m]);
    }
    let mut meta = ctx.meta("fit-t2");
    meta.insert("model".into(), json!("T2(B) = T2(0) / (1 + pi kappa T2(0) |B - B0|)"));
    meta.insert("input_sha256".into(), json!(data.sha256));
    meta.insert("points".into(), json!(points.len()));
    meta.insert("weighted".into(), json!(cols.sigma.is_some()));
    meta.insert("b0_fixed".into(), json!(fit.b0_fixed));
    meta.insert(
        "parameters".into(),
        json!({
            "t2_zero": estimate(fit.t2_zero, "s"),
            "kappa": estimate(fit.kappa, "Hz/T"),
            "b0": estimate(fit.b0, "T"),
        }),
    );
    meta.insert("diagnostics".into(), diagnostics(&fit.diagnostics));
    println!(
        "T2(0) = {:.4} +- {:.4} ms, kappa = {:.4} +- {:.4} MHz/T, B0 = {:.3} +- {:.3} uT{}",
        fit.t2_zero.value * 1e3,
        fit.t2_zero.sigma * 1e3,
        fit.kappa.value / 1e6,
        fit.kappa.sigma / 1e6,
        fit.b0.value * 1e6,
        fit.b0.sigma * 1e6,
        if fit.b0_fixed { " (held)" } else { "" }
    );
    let written = ctx.out.write("fit_t2", &[("_residuals", &csv)], meta)?;
    ctx.report(&written);
    Ok(())
}
