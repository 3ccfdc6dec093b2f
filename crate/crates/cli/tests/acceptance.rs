//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use monoride::bangride::{simulate_bang_ride, BangRidePolicy};
use monoride::constraints::{upper_bound_input, upper_bound_state, voltage_limit, ConstraintSet};
use monoride::dynamics::{
    build_ecm, build_fd_spm, build_pade_spm, build_thermal_coupled_ecm, ecm_voltage, ControlSystem,
    EcmParams, ElectrodeSign, FdSpmParams, PadeSpmParams, ThermalParams, FARADAY,
};
use monoride::optimality::{
    brute_force_best, necessity_check, oracle_gap, NecessityOptions, NecessityStatus,
    OracleOptions, OracleProblem,
};
use monoride::ordering::{
    check_kamke_muller, is_metzler, is_nonneg, trajectory_order_test, KamkeMullerOptions, Verdict,
};
use monoride::sampling::SampleBox;
use monoride::simulate::{cost, integrate, max_violation, PiecewiseConstant, RunningCost};
use monoride_cli::config::{load_config, Experiment};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn shipped_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/thermal_fast_charge.json")
}

fn shipped() -> Experiment {
    let path = shipped_path();
    load_config(&path)
        .expect("shipped config loads")
        .build(path.parent().unwrap())
        .expect("shipped config builds")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))?;
    Ok(took)
}

/// Random piecewise-constant pair `lo <= hi` with values in `[a, b]` (plus a nonnegative lift).
fn ordered_inputs(
    rng: &mut ChaCha8Rng,
    t_f: f64,
    a: f64,
    b: f64,
) -> (PiecewiseConstant, PiecewiseConstant) {
    let k = rng.random_range(1..=5);
    let mut breaks = vec![0.0];
    for _ in 1..k {
        breaks.push(rng.random_range(0.0..t_f));
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let lo: Vec<Vec<f64>> = breaks
        .iter()
        .map(|_| vec![rng.random_range(a..b)])
        .collect();
    let hi: Vec<Vec<f64>> = lo
        .iter()
        .map(|v| vec![v[0] + rng.random_range(0.0..(b - a) * 0.5)])
        .collect();
    (
        PiecewiseConstant::new(breaks.clone(), lo).unwrap(),
        PiecewiseConstant::new(breaks, hi).unwrap(),
    )
}

fn ordered_states(rng: &mut ChaCha8Rng, bounds: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let a: Vec<f64> = bounds
        .iter()
        .map(|(lo, hi)| rng.random_range(*lo..*hi))
        .collect();
    let b = a
        .iter()
        .zip(bounds)
        .map(|(v, (lo, hi))| v + rng.random_range(0.0..(hi - lo) * 0.5))
        .collect();
    (a, b)
}

fn fd_params() -> FdSpmParams {
    FdSpmParams {
        diffusivity: 1e-14,
        particle_radius: 5e-6,
        n_interior: 8,
        faraday: FARADAY,
        surface_area: 3e5,
        collector_area: 0.1,
        thickness: 7e-5,
        electrode_sign: ElectrodeSign::Cathode,
    }
}

/// (name, system, state box, input range, t_f, dt)
type OrderCase = (
    &'static str,
    ControlSystem,
    Vec<(f64, f64)>,
    (f64, f64),
    f64,
    f64,
);

fn c1_monotone_trajectories() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ecm = EcmParams::default();
    let pade = PadeSpmParams {
        a: [-0.02, -0.1],
        b: [1e-4, 3e-4, 5e-5],
        c: [1.0, 0.5, 1.0],
    };
    let fd = fd_params();
    let fd_sys = build_fd_spm(&fd).unwrap().0;
    let max_diag = (0..8)
        .map(|i| fd_sys.linear_part().unwrap().a[(i, i)].abs())
        .fold(0.0, f64::max);
    let cases: Vec<OrderCase> = vec![
        (
            "ecm",
            build_ecm(&ecm).unwrap(),
            vec![(0.0, 0.5), (-0.1, 0.1)],
            (-5.0, 10.0),
            600.0,
            1.0,
        ),
        (
            "pade_spm",
            build_pade_spm(&pade).unwrap().0,
            vec![(0.0, 1.0); 3],
            (-5.0, 10.0),
            600.0,
            1.0,
        ),
        (
            "fd_spm",
            fd_sys,
            vec![(0.0, 1000.0); 8],
            (0.0, 10.0),
            3000.0,
            1.0 / max_diag,
        ),
        (
            "thermal_ecm",
            build_thermal_coupled_ecm(&ecm, &ThermalParams::default()).unwrap(),
            vec![(0.0, 0.5), (0.0, 0.1), (0.0, 5.0)],
            (0.0, 10.0),
            600.0,
            0.5,
        ),
    ];
    let mut worst = f64::INFINITY;
    for (name, sys, bounds, (ua, ub), t_f, dt) in &cases {
        for pair in 0..50 {
            let (xa, xb) = ordered_states(&mut rng, bounds);
            let (lo, hi) = ordered_inputs(&mut rng, *t_f, *ua, *ub);
            let r = trajectory_order_test(sys, &xa, &xb, &lo, &hi, *t_f, *dt, 1e-8)
                .map_err(|e| e.to_string())?;
            worst = worst.min(r.min_margin);
            ensure(r.ordered && r.min_margin >= -1e-8, || {
                format!(
                    "{name} pair {pair}: margin {} at {:?}",
                    r.min_margin, r.first_violation
                )
            })?;
        }
    }
    let took = within(start, Duration::from_secs(30))?;
    Ok(format!(
        "4 models x 50 pairs ordered, worst margin {worst:.3e}, {took:.2?}"
    ))
}

fn c2_cost_monotonicity() -> Outcome {
    let exp = shipped();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let l = RunningCost::soc_integral();
    let (t_f, dt) = (300.0, 0.3);
    let mut smallest = f64::INFINITY;
    for pair in 0..20 {
        let (lo, hi) = ordered_inputs(&mut rng, t_f, 0.0, 6.0);
        let ja = cost(
            &integrate(&exp.sys, &exp.x0, |t| lo.at(t), t_f, dt).map_err(|e| e.to_string())?,
            &l,
        );
        let jb = cost(
            &integrate(&exp.sys, &exp.x0, |t| hi.at(t), t_f, dt).map_err(|e| e.to_string())?,
            &l,
        );
        smallest = smallest.min(jb - ja);
        ensure(ja <= jb + 1e-8, || {
            format!("pair {pair}: J(lo) = {ja} > J(hi) = {jb}")
        })?;
    }
    // Strict part: L = u/Q is linear in u, so a bump raises J by its area over Q.
    let q = exp.ecm.as_ref().unwrap().capacity;
    let l_rate = RunningCost::soc_rate(q);
    let (height, a, w, base) = (1.5, 60.0, 90.0, 2.0);
    let bump = |t: f64| {
        if (a..a + w).contains(&t) {
            height * (std::f64::consts::PI * (t - a) / w).sin().powi(2)
        } else {
            0.0
        }
    };
    let j0 = cost(
        &integrate(&exp.sys, &exp.x0, |_| vec![base], t_f, dt).unwrap(),
        &l_rate,
    );
    let j1 = cost(
        &integrate(&exp.sys, &exp.x0, |t| vec![base + bump(t)], t_f, dt).unwrap(),
        &l_rate,
    );
    let predicted = height * w / 2.0 / q;
    let measured = j1 - j0;
    ensure(measured >= 0.9 * predicted, || {
        format!("bump gave {measured}, predicted {predicted}")
    })?;
    Ok(format!(
        "20 ordered pairs, min J gap {smallest:.3e}; bump dJ {measured:.6e} vs predicted {predicted:.6e}"
    ))
}

fn c3_necessity_soundness() -> Outcome {
    let start = Instant::now();
    let exp = shipped();
    let set = &exp.policy.set;
    let opts = NecessityOptions::default();
    let q = exp.ecm.as_ref().unwrap().capacity;
    let mut min_dj = f64::INFINITY;
    for k in 0..10 {
        let u = 0.4 * k as f64;
        let x0 = vec![0.05 * k as f64, 0.0, 0.0];
        let traj = integrate(&exp.sys, &x0, |_| vec![u], 120.0, 0.3).map_err(|e| e.to_string())?;
        let l = if k % 2 == 0 {
            RunningCost::soc_integral()
        } else {
            RunningCost::soc_rate(q)
        };
        let v = necessity_check(&exp.sys, &traj, set, &l, &opts)
            .map_err(|e| format!("interior {k}: {e}"))?;
        let imp = v.improvement.as_ref();
        ensure(
            v.status == NecessityStatus::NotOptimal && imp.is_some_and(|i| i.delta_j > 0.0),
            || format!("interior {k}: {:?}", v.status),
        )?;
        // the improvement must hold up when replayed independently
        let imp = imp.unwrap();
        let replayed = monoride::simulate::replay(&exp.sys, &x0, &traj.times, &imp.inputs)
            .map_err(|e| e.to_string())?;
        ensure(
            max_violation(&replayed, set).unwrap().value >= -opts.admissibility_tol,
            || format!("interior {k}: improvement is not admissible"),
        )?;
        let dj = cost(&replayed, &l) - cost(&traj, &l);
        ensure(dj > 0.0, || format!("interior {k}: replayed dJ = {dj}"))?;
        min_dj = min_dj.min(dj);
    }
    for k in 0..10 {
        let t_f = 100.0 + 80.0 * k as f64;
        let traj = simulate_bang_ride(&exp.sys, &exp.x0, &exp.policy, t_f, 0.3)
            .map_err(|e| e.to_string())?;
        let v = necessity_check(&exp.sys, &traj, set, &exp.cost, &opts)
            .map_err(|e| format!("bang-ride {k}: {e}"))?;
        ensure(v.status == NecessityStatus::PassesNecessity, || {
            format!(
                "bang-ride t_f = {t_f}: {:?} tail {:?}",
                v.status, v.interior_tail
            )
        })?;
    }
    let took = within(start, Duration::from_secs(20))?;
    Ok(format!(
        "10/10 interior not_optimal (min dJ {min_dj:.3e}), 10/10 bang-ride pass, {took:.2?}"
    ))
}

fn c4_shipped_run_shape() -> Outcome {
    let start = Instant::now();
    let exp = shipped();
    let ecm = exp.ecm.clone().unwrap();
    let traj = simulate_bang_ride(&exp.sys, &exp.x0, &exp.policy, exp.t_f, exp.dt)
        .map_err(|e| e.to_string())?;
    let u = traj.input_series(0);
    let u_bar = exp.policy.u_max;
    let v: Vec<f64> = traj
        .states
        .iter()
        .zip(&u)
        .map(|(x, u)| ecm_voltage(&ecm, x, *u).unwrap())
        .collect();
    // (a) initial bang phase
    let cc_end = u
        .iter()
        .position(|&ui| (ui - u_bar).abs() > 1e-9 * u_bar)
        .unwrap_or(u.len());
    ensure(cc_end > 1, || "no initial phase at the input bound".into())?;
    let t_cc = traj.times[cc_end - 1];
    // (b) voltage-riding phase right after it
    let cv: Vec<usize> = (cc_end..u.len())
        .take_while(|&k| (v[k] - 4.5).abs() <= 1e-3)
        .collect();
    ensure(cv.len() >= 2, || {
        format!("no voltage phase after t = {t_cc}")
    })?;
    ensure(cv.windows(2).all(|w| u[w[1]] < u[w[0]]), || {
        "current not strictly decreasing while riding the voltage limit".into()
    })?;
    let (cv_start, cv_end) = (traj.times[cv[0]], traj.times[*cv.last().unwrap()]);
    // (c) SOC
    let soc = traj.state_series(0);
    ensure(soc.windows(2).all(|w| w[1] >= w[0] - 1e-12), || {
        "SOC decreased".into()
    })?;
    let final_soc = *soc.last().unwrap();
    ensure(final_soc >= 0.999, || format!("final SOC {final_soc}"))?;
    // (d) admissibility
    let worst = max_violation(&traj, &exp.policy.set).map_err(|e| e.to_string())?;
    ensure(worst.value >= -1e-3, || {
        format!(
            "violation {} on constraint {}",
            worst.value, worst.constraint
        )
    })?;
    let took = within(start, Duration::from_secs(10))?;
    Ok(format!(
        "CC to {t_cc:.1} s, CV {cv_start:.1}..{cv_end:.1} s, final SOC {final_soc:.6}, min residual {:.2e}, {took:.2?}",
        worst.value
    ))
}

fn c5_oracle_gap() -> Outcome {
    let start = Instant::now();
    let ecm = EcmParams::default();
    let sys = build_ecm(&ecm).unwrap();
    let u_bar = 10.0 * ecm.capacity / 3600.0;
    let set = ConstraintSet::new(vec![
        upper_bound_state(0, 1.0),
        voltage_limit(&ecm, 4.5).unwrap(),
        upper_bound_input(u_bar),
    ])
    .unwrap();
    let t_f = 300.0;
    let problem = OracleProblem {
        t_f,
        dt: 1.0,
        n_steps: 5,
        levels: (0..11).map(|k| u_bar * k as f64 / 10.0).collect(),
    };
    let policy = BangRidePolicy::new(set, 0.0, u_bar, problem.dt).unwrap();
    let l = RunningCost::soc_rate(ecm.capacity);
    let x0 = [0.6, 0.0];
    let opts = OracleOptions {
        parallel: false,
        ..OracleOptions::default()
    };
    let gap = oracle_gap(&sys, &x0, &l, &problem, &policy, &opts).map_err(|e| e.to_string())?;
    ensure(gap.oracle.n_evaluated == 161_051, || {
        format!("evaluated {}", gap.oracle.n_evaluated)
    })?;
    let bound = gap.grid_slack_bound.unwrap();
    ensure(gap.j_oracle - gap.j_bangride <= bound, || {
        format!(
            "gap {} exceeds bound {bound}",
            gap.j_oracle - gap.j_bangride
        )
    })?;
    ensure(gap.projected_cost <= gap.j_oracle + 1e-12, || {
        format!(
            "projected {} beats oracle {}",
            gap.projected_cost, gap.j_oracle
        )
    })?;
    // the serial result is reproduced by the parallel search
    let par = brute_force_best(
        &sys,
        &x0,
        &policy.set,
        &l,
        &problem,
        &OracleOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure(par.best_sequence == gap.oracle.best_sequence, || {
        "parallel and serial optima differ".into()
    })?;
    let took = within(start, Duration::from_secs(300))?;
    Ok(format!(
        "J_oracle {:.6}, J_bangride {:.6}, gap {:.3e} <= {bound:.3e}, J_projected {:.6}, {took:.2?}",
        gap.j_oracle, gap.j_bangride, gap.gap, gap.projected_cost
    ))
}

fn c6_structural_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let opts = KamkeMullerOptions {
        structural_shortcut: false,
        ..KamkeMullerOptions::default()
    };
    for case in 0..25 {
        let n = rng.random_range(2..=5);
        let mut a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                rng.random_range(-2.0..0.0)
            } else {
                rng.random_range(0.05..1.0)
            }
        });
        let mut b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(0.05..1.0));
        if case % 2 == 1 {
            // break one sign condition, either in A or in B
            if rng.random_bool(0.5) {
                let i = rng.random_range(0..n);
                let j = (i + rng.random_range(1..n)) % n;
                a[(i, j)] = -rng.random_range(0.05..1.0);
            } else {
                b[(rng.random_range(0..n), 0)] = -rng.random_range(0.05..1.0);
            }
        }
        let structural = is_metzler(&a, 0.0).unwrap().holds && is_nonneg(&b, 0.0).holds;
        ensure(structural == (case % 2 == 0), || {
            format!("case {case}: fixture construction")
        })?;
        let sys = ControlSystem::linear(a, b, vec![]).unwrap();
        let domain = SampleBox::new(vec![(-1.0, 1.0); n], vec![(-1.0, 1.0)]).unwrap();
        let rep = check_kamke_muller(&sys, &domain, &opts).map_err(|e| e.to_string())?;
        let sampled = match rep.verdict {
            Verdict::Monotone => true,
            Verdict::NonMonotone => false,
            Verdict::Inconclusive => return Err(format!("case {case}: inconclusive")),
        };
        ensure(sampled == structural, || {
            format!("case {case}: sampled {sampled}, structural {structural}")
        })?;
    }
    let thermal =
        build_thermal_coupled_ecm(&EcmParams::default(), &ThermalParams::default()).unwrap();
    let states = vec![(0.0, 1.0), (0.0, 0.25), (0.0, 8.0)];
    let wide = SampleBox::new(states.clone(), vec![(-10.0, 10.0)]).unwrap();
    let charging = SampleBox::new(states, vec![(0.0, 10.0)]).unwrap();
    let km = KamkeMullerOptions::default();
    let v_wide = check_kamke_muller(&thermal, &wide, &km)
        .map_err(|e| e.to_string())?
        .verdict;
    let v_charge = check_kamke_muller(&thermal, &charging, &km)
        .map_err(|e| e.to_string())?
        .verdict;
    ensure(
        v_wide == Verdict::NonMonotone && v_charge == Verdict::Monotone,
        || format!("thermal: [-10,10] -> {v_wide:?}, [0,10] -> {v_charge:?}"),
    )?;
    Ok(
        "25/25 linear verdicts agree; thermal ECM non-monotone on [-10,10], monotone on [0,10]"
            .into(),
    )
}

fn c7_rk4_order() -> Outcome {
    let sys = ControlSystem::linear(
        DMatrix::from_element(1, 1, -1.0),
        DMatrix::from_element(1, 1, 0.0),
        vec![],
    )
    .unwrap();
    let exact = (-1.0f64).exp();
    let errs: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
        .iter()
        .map(|&dt| {
            (integrate(&sys, &[1.0], |_| vec![0.0], 1.0, dt)
                .unwrap()
                .final_state()[0]
                - exact)
                .abs()
        })
        .collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    ensure(ratios.iter().all(|r| (8.0..=32.0).contains(r)), || {
        format!("ratios {ratios:?}")
    })?;
    Ok(format!(
        "error ratios {:.3}, {:.3}, {:.3}",
        ratios[0], ratios[1], ratios[2]
    ))
}

fn c8_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_monoride");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        let status = Command::new(bin)
            .arg("bangride")
            .arg(shipped_path())
            .arg("--out")
            .arg(d)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            format!(
                "exit {:?}: {}",
                status.status.code(),
                String::from_utf8_lossy(&status.stderr)
            )
        })?;
    }
    for name in ["trajectory.csv", "engaged.csv", "chart.svg"] {
        let a = std::fs::read(dirs[0].join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].join(name)).map_err(|e| e.to_string())?;
        ensure(!a.is_empty() && a == b, || {
            format!("{name} differs between runs")
        })?;
    }
    Ok("trajectory.csv, engaged.csv and chart.svg byte-identical across two runs".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "monotone trajectories on four models",
            c1_monotone_trajectories,
        ),
        (
            "cost monotonicity and strict bump increase",
            c2_cost_monotonicity,
        ),
        ("necessity check soundness", c3_necessity_soundness),
        (
            "shipped charging example: CC, CV, full SOC, admissible",
            c4_shipped_run_shape,
        ),
        ("oracle gap within grid slack", c5_oracle_gap),
        (
            "sampled vs structural monotonicity verdicts",
            c6_structural_agreement,
        ),
        ("RK4 fourth-order convergence", c7_rk4_order),
        ("byte-identical CLI artifacts", c8_determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        match std::panic::catch_unwind(f) {
            Ok(Ok(detail)) => println!("PASS [{}] {name}: {detail}", k + 1),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", k + 1);
            }
            Err(_) => {
                failed += 1;
                println!("FAIL [{}] {name}: panicked", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
