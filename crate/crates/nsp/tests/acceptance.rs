//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use nsp::diagnostics::{fit_expansion, DiagnosticsRecord};
use nsp::io::{parse_config, prepare, PreparedRun};
use nsp::mass_bounds::{critical_mass, f_at_s_star, f_of_s, f_prime, m_bar, s_star, splitting};
use nsp::model::GasModel;
use nsp::solver::{run, step, TimeSeries};
use nsp::stationary::{hydrostatic_initial_data, perturbed_initial_data, solve_lane_emden, solve_lane_emden_with, LaneEmdenOptions, VelocityShape};

/// First zero of the n = 3 Lane–Emden function from a 40-digit integration.
const XI1_N3: f64 = 6.89684861937696037545;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn simulate_text(text: &str) -> (PreparedRun, TimeSeries) {
    let cfg = parse_config(text).expect("config parses");
    let prepared = prepare(&cfg).expect("run prepares");
    let series = run(&prepared.data, &prepared.model, &prepared.solver, prepared.monitor).expect("run completes");
    (prepared, series)
}

fn with_keys(base: &str, extra: &[(&str, String)]) -> String {
    let mut lines: Vec<String> = base
        .lines()
        .filter(|l| !extra.iter().any(|(k, _)| l.split('=').next().map(str::trim) == Some(*k)))
        .map(str::to_string)
        .collect();
    lines.extend(extra.iter().map(|(k, v)| format!("{k} = {v}")));
    lines.join("\n") + "\n"
}

/// `max_t |E_total + dissipation - E_total(0)| / E0`.
fn budget_defect(records: &[DiagnosticsRecord], e0: f64) -> f64 {
    let start = records[0].e_total;
    records.iter().map(|r| (r.e_total + r.dissipation_cum - start).abs() / e0).fold(0.0, f64::max)
}

const STAR: &str = "\
gamma = 1.3333333333333333
mu = 0.1
lambda = 0
N = 400
t_end = 5
output_interval = 0.1
initial = lane-emden
rho_c = 1
mass_ratio_mc = 0.5
perturbation_amplitude = 0.05
";

const EXPANSION: &str = "\
gamma = 1.3333333333333333
mu = 0.1
lambda = 0
N = 400
t_end = 100
output_interval = 0.5
initial = lane-emden
rho_c = 100
mass_ratio_mbar = 0.5
perturbation_amplitude = 0.05
";

const HYDROSTATIC: &str = "\
gamma = 1.3333333333333333
mu = 0.1
lambda = 0
N = 100
t_end = 1
output_interval = 0.1
initial = lane-emden
rho_c = 100
";

const DECAY: &str = "\
gamma = 1.3333333333333333
kappa = 1e-3
mu = 1
lambda = 0
gravity = false
N = 400
t_end = 5
output_interval = 0.1
dt_max = 1e-3
initial = uniform
rho_c = 1
radius = 1
perturbation_amplitude = 0.05
";

fn closed_form_algebra() -> Outcome {
    let mut rng = StdRng::seed_from_u64(20_240_601);
    let mut worst = [0.0f64; 4];
    let mut failures = 0;
    for _ in 0..100 {
        let g = rng.gen_range(1.21..1.32);
        let mass = rng.gen_range(0.5..2.0);
        let b = rng.gen_range(1.0..5.0);
        let e0 = rng.gen_range(0.1..10.0);
        let s = s_star(g, mass, b).unwrap();
        let zero = f_of_s(0.0, g, mass, b).unwrap();
        let slope = f_prime(s, g, mass, b).unwrap().abs() * (g - 1.0);
        let closed = f_at_s_star(g, mass, b).unwrap();
        let peak = ((f_of_s(s, g, mass, b).unwrap() - closed) / closed).abs();
        let mc = critical_mass(g, e0, b).unwrap();
        let at_mc = (f_at_s_star(g, mc, b).unwrap() - e0).abs() / e0;
        let l = splitting(g, None, None).unwrap().l;
        let mbar = m_bar(g, e0, b, l).unwrap();
        worst = [worst[0].max(zero.abs()), worst[1].max(slope), worst[2].max(peak), worst[3].max(at_mc)];
        if zero != 0.0 || slope > 1e-8 || peak > 1e-10 || at_mc > 1e-10 || !(mbar < mc) {
            failures += 1;
        }
    }
    let s = s_star(1.25, 1.0, 1.0).unwrap();
    let f = f_of_s(s, 1.25, 1.0, 1.0).unwrap();
    let worked = (s - 27.0).abs() < 1e-10 && (f - 27.0).abs() < 1e-10;
    outcome(
        failures == 0 && worked,
        format!(
            "100 draws, {failures} failing; max |f(0)| {:.1e}, (γ-1)|f'(s*)| {:.1e}, f(s*) rel {:.1e}, f(s*(M_c)) rel {:.1e}; γ=5/4 case s*={s}, f={f}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn lane_emden_oracles() -> Outcome {
    let opts = LaneEmdenOptions { xi_max: 21.0, ..Default::default() };
    let n5 = solve_lane_emden_with(1.2, &opts).unwrap();
    let closed = (0..=2000)
        .map(|k| {
            let xi = 0.01 * k as f64;
            (n5.theta_at(xi) - (1.0 + xi * xi / 3.0).powf(-0.5)).abs()
        })
        .fold(0.0, f64::max);
    let n1 = solve_lane_emden(2.0, 1e-10).unwrap().xi1().unwrap();
    let n3 = solve_lane_emden(4.0 / 3.0, 1e-10).unwrap().xi1().unwrap();
    let e1 = (n1 - std::f64::consts::PI).abs();
    let e3 = ((n3 - XI1_N3) / XI1_N3).abs();
    outcome(
        closed <= 1e-8 && e1 <= 1e-8 && e3 <= 1e-6,
        format!("n=5 max error {closed:.1e} on [0,20]; n=1 |ξ₁-π| {e1:.1e}; n=3 relative {e3:.1e}"),
    )
}

fn conservation_and_geometry() -> Outcome {
    let model = GasModel::new(4.0 / 3.0, 0.1, 0.0).unwrap();
    let profile = solve_lane_emden(4.0 / 3.0, 1e-10).unwrap();
    let base = hydrostatic_initial_data(&profile, 1.0, 0.0, &model, None).unwrap();
    let data = perturbed_initial_data(&base, 0.05, VelocityShape::Cubic, &model).unwrap();
    let cfg = parse_config(&with_keys(STAR, &[("N", "200".into())])).unwrap();
    let mut state = nsp::solver::eulerian_to_lagrangian(&data, 200).unwrap();
    let x0 = state.x().to_vec();
    let m0 = 4.0 * std::f64::consts::PI * state.total_mass_coordinate();
    let (mut mass_err, mut geom, mut moved) = (0.0f64, 0.0f64, true);
    for _ in 0..1000 {
        state = step(&state, &model, &cfg.solver).unwrap().0;
        moved &= state.x() == &x0[..];
        mass_err = mass_err.max(((state.eulerian_mass() - m0) / m0).abs());
        geom = geom.max(state.geometry_defect());
    }
    outcome(
        moved && mass_err <= 1e-10 && geom <= 1e-12,
        format!("1000 steps at N=200 to t={:.3}: cell masses unchanged {moved}, mass {mass_err:.1e}, volume identity {geom:.1e}", state.time()),
    )
}

fn energy_inequality() -> (Outcome, Option<(PreparedRun, TimeSeries)>) {
    let (prepared, series) = simulate_text(STAR);
    let c = prepared.report.c_gamma.unwrap_or(f64::NAN);
    let e0 = prepared.e0;
    let worst = series
        .records
        .iter()
        .map(|r| (r.e_kin + c * r.pressure_integral + r.dissipation_cum) / e0)
        .fold(f64::NEG_INFINITY, f64::max);
    let defect = budget_defect(&series.records, e0);
    let (fine_prepared, fine) = simulate_text(&with_keys(STAR, &[("N", "800".into())]));
    let fine_defect = budget_defect(&fine.records, fine_prepared.e0);
    let ratio = defect / fine_defect;
    let pass = c > 0.0 && worst <= 1.01 && ratio >= 2.0;
    (
        outcome(
            pass,
            format!(
                "M/M_c={:.3}, C_γ={c:.4}; max (E_kin + C_γ S + D)/E₀ {worst:.4}; budget defect N=400 {defect:.2e}, N=800 {fine_defect:.2e}, ratio {ratio:.2}",
                prepared.data.mass() / prepared.report.m_c
            ),
        ),
        Some((prepared, series)),
    )
}

fn hydrostatic_fidelity() -> Outcome {
    let umax: Vec<f64> = [100, 200, 400]
        .iter()
        .map(|n| {
            let (_, series) = simulate_text(&with_keys(HYDROSTATIC, &[("N", n.to_string())]));
            series.final_state.u().iter().fold(0.0f64, |m, u| m.max(u.abs()))
        })
        .collect();
    let orders: Vec<f64> = umax.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    outcome(
        orders.iter().all(|&p| p >= 1.0),
        format!("max|u(1)| at N=100,200,400: {:.3e}, {:.3e}, {:.3e}; observed orders {:.2}, {:.2}", umax[0], umax[1], umax[2], orders[0], orders[1]),
    )
}

fn transport_envelope(run4: &Option<(PreparedRun, TimeSeries)>) -> Outcome {
    let Some((prepared, series)) = run4 else {
        return outcome(false, "run #4 unavailable".into());
    };
    let Some(monitor) = prepared.monitor else {
        return outcome(false, "no envelope monitor (C_γ ≤ 0 or gravity off)".into());
    };
    let x_min = monitor.x_min_fraction * prepared.state0.total_mass_coordinate();
    let tracked = (0..prepared.state0.cells()).filter(|&j| prepared.state0.cell_center_x(j) >= x_min).count();
    let env: usize = series.records.iter().map(|r| r.envelope_violations).sum();
    let path: usize = series.records.iter().map(|r| r.path_violations).sum();
    outcome(
        tracked > 0 && env == 0 && path == 0,
        format!("{tracked} tracked cells over {} output times; envelope violations {env}, path violations {path}", series.records.len()),
    )
}

fn y_positivity(run8: &(PreparedRun, TimeSeries)) -> Outcome {
    let (prepared, series) = run8;
    let strict = prepared.data.mass() < prepared.report.m_bar;
    let positive = series.records.iter().all(|r| r.y > 0.0);
    let ratio = series
        .records
        .iter()
        .map(|r| r.y / ((1.0 + r.t).powi(2) * r.e_int))
        .fold(f64::INFINITY, f64::min);
    outcome(
        strict && positive && ratio >= 0.95 && prepared.report.l == 2.0,
        format!("M/M̄={:.3} (l={}); Y>0 at all {} times {positive}; min Y/((1+t)² E_int) {ratio:.4}", prepared.data.mass() / prepared.report.m_bar, prepared.report.l, series.records.len()),
    )
}

fn expansion_rate(run8: &(PreparedRun, TimeSeries), seconds: f64) -> Outcome {
    let (prepared, series) = run8;
    let t_end = prepared.solver.t_end;
    let fit = fit_expansion(&series.times(), &series.running_max(), 20.0, 100.0, Some(4.0 / 3.0)).unwrap();
    let (sup, at) = series
        .records
        .iter()
        .map(|r| ((1.0 + r.t) * r.mean_pressure, r.t))
        .fold((f64::NEG_INFINITY, 0.0), |best, c| if c.0 > best.0 { c } else { best });
    outcome(
        fit.beta_hat >= 0.20 && sup.is_finite() && at <= 0.5 * t_end && seconds < 600.0,
        format!(
            "β̂ over [20,100] {:.4} (target {}), residual {:.1e}; sup (1+t)·mean pressure {sup:.4e} at t={at}; run {seconds:.1} s",
            fit.beta_hat,
            fit.beta_bound.unwrap(),
            fit.residual
        ),
    )
}

fn viscous_decay() -> Outcome {
    let (prepared, series) = simulate_text(DECAY);
    let monotone = series.records.windows(2).all(|w| w[1].e_kin <= w[0].e_kin);
    let defect = budget_defect(&series.records, prepared.e0);
    let first = series.records[0].e_kin;
    let last = series.records.last().unwrap().e_kin;
    outcome(
        !prepared.model.gravity_enabled() && monotone && defect <= 1e-3,
        format!("N=400: E_kin monotone {monotone} ({first:.3e} → {last:.3e}); budget residual {defect:.2e} E₀"),
    )
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, with_keys(STAR, &[("N", "200".into())])).unwrap();
    let outputs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let dir = tmp.path().join(name);
            let status = Command::new(env!("CARGO_BIN_EXE_nsp"))
                .args(["simulate", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()])
                .output()
                .unwrap();
            assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
            fs::read(dir.join("timeseries.csv")).unwrap()
        })
        .collect();
    outcome(
        !outputs[0].is_empty() && outputs[0] == outputs[1],
        format!("two invocations, timeseries.csv {} bytes, identical {}", outputs[0].len(), outputs[0] == outputs[1]),
    )
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome, f64, Option<f64>)> = Vec::new();
    let (o, s) = timed(closed_form_algebra);
    results.push((1, "closed-form algebra", o, s, Some(1.0)));
    let (o, s) = timed(lane_emden_oracles);
    results.push((2, "Lane–Emden oracles", o, s, Some(1.0)));
    let (o, s) = timed(conservation_and_geometry);
    results.push((3, "conservation and geometry", o, s, Some(10.0)));
    let ((o, run4), s) = timed(energy_inequality);
    results.push((4, "discrete energy inequality", o, s, Some(120.0)));
    let (o, s) = timed(hydrostatic_fidelity);
    results.push((5, "hydrostatic fidelity", o, s, Some(120.0)));
    let (o, s) = timed(|| transport_envelope(&run4));
    results.push((6, "transport envelope", o, s, None));
    let (run8, s8) = timed(|| simulate_text(EXPANSION));
    let (o, s) = timed(|| y_positivity(&run8));
    results.push((7, "Y positivity", o, s + s8, None));
    let (o, s) = timed(|| expansion_rate(&run8, s8));
    results.push((8, "expansion rate", o, s + s8, Some(600.0)));
    let (o, s) = timed(viscous_decay);
    results.push((9, "gravity-off viscous decay", o, s, None));
    let (o, s) = timed(determinism);
    results.push((10, "determinism", o, s, None));

    let mut all = true;
    for (k, name, o, seconds, budget) in &results {
        let in_time = budget.is_none_or(|b| *seconds < b);
        let pass = o.pass && in_time;
        all &= pass;
        let limit = budget.map_or(String::new(), |b| format!(" < {b} s"));
        println!("{} criterion {k:>2} {name}: {} [{seconds:.2} s{limit}]", if pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
