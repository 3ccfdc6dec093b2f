//! Subcommands. Each writes its human-readable report to `out` and its
//! artifacts into the output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use monoride::bangride::{engaged_profile, segment_phases, simulate_bang_ride};
use monoride::constraints::{verify_nonincreasing_in_u, ConstraintKind, ConstraintSet};
use monoride::optimality::{
    necessity_check, oracle_gap, NecessityOptions, NecessityStatus, OracleOptions,
};
use monoride::ordering::{
    check_excitability, check_kamke_muller, Coordinate, KamkeMullerOptions, Verdict,
};
use monoride::sampling::SampleBox;
use monoride::simulate::{
    cost, integrate, max_violation, verify_cost_monotone, PiecewiseConstant, Trajectory,
};

use crate::chart::{four_panels, render_svg, ChartError, PanelSpec};
use crate::config::{load_config, to_json, ConfigError, Experiment, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] monoride::Error),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 config, 3 infeasible, 4 numerical blow-up, 5 certificate failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        let core = match self {
            CliError::Config(_) | CliError::Usage(_) => return 2,
            CliError::Core(e) => e,
            CliError::Chart(ChartError::Trajectory(e)) => e,
            _ => return 1,
        };
        match core {
            monoride::Error::RideInfeasible { .. } | monoride::Error::AllInadmissible => 3,
            monoride::Error::IntegrationBlowup { .. } | monoride::Error::NonFinite { .. } => 4,
            monoride::Error::CertificationFailed(_) => 5,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "monoride",
    version,
    about = "Bang-and-ride charging for monotone battery models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the config with all defaults filled in.
    Config { config: PathBuf },
    /// Open-loop simulation under a constant current or a piecewise-constant profile.
    Simulate {
        config: PathBuf,
        /// Constant input in A.
        #[arg(long, conflicts_with = "profile")]
        current: Option<f64>,
        /// CSV `t,u1` of breakpoints; each value is held until the next break.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Closed-loop bang-and-ride run: trajectory, engaged constraints, chart.
    Bangride {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Monotonicity, excitability and constraint/cost sign checks on a box.
    CheckMonotone {
        config: PathBuf,
        /// Override the lower end of the input box.
        #[arg(long, allow_negative_numbers = true)]
        u_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        u_max: Option<f64>,
    },
    /// Necessity test on a trajectory CSV.
    Necessity {
        config: PathBuf,
        trajectory: PathBuf,
        #[arg(long, default_value_t = NecessityOptions::default().tol_engaged)]
        tol_engaged: f64,
    },
    /// Exhaustive search on the level grid, compared with bang-and-ride.
    Oracle {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write every enumerated sequence, not just the best.
        #[arg(long)]
        audit: bool,
        #[arg(long)]
        serial: bool,
    },
    /// Render a trajectory CSV as a four-panel SVG.
    Plot {
        trajectory: PathBuf,
        /// Supplies the cell parameters for the voltage panel.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "chart.svg")]
        out: PathBuf,
    },
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let w = |out: &mut dyn Write, s: String| -> Result<(), CliError> {
        out.write_all(s.as_bytes())
            .map_err(io_err(Path::new("<stdout>")))
    };
    match &cli.command {
        Command::Config { config } => {
            let cfg = load_config(config)?;
            w(out, to_json(&cfg))
        }
        Command::Simulate {
            config,
            current,
            profile,
            out: dir,
        } => {
            let (cfg, exp) = load(config)?;
            let input = match (current, profile) {
                (Some(i), None) => PiecewiseConstant::constant(vec![*i]),
                (None, Some(p)) => read_profile(p)?,
                _ => {
                    return Err(CliError::Usage(
                        "simulate needs exactly one of --current or --profile".into(),
                    ))
                }
            };
            let traj = integrate(&exp.sys, &exp.x0, |t| input.at(t), exp.t_f, exp.dt)?;
            let path = dir.join("trajectory.csv");
            write_artifact(dir, "trajectory.csv", traj.to_csv_string())?;
            w(out, summary(&cfg, &exp, &traj, &exp.set)?)?;
            w(out, format!("wrote {}\n", path.display()))
        }
        Command::Bangride { config, out: dir } => {
            let (cfg, exp) = load(config)?;
            let traj = simulate_bang_ride(&exp.sys, &exp.x0, &exp.policy, exp.t_f, exp.dt)?;
            let set = &exp.policy.set;
            let profile = engaged_profile(&traj, set, set.tol_active())?;
            write_artifact(dir, "trajectory.csv", traj.to_csv_string())?;
            write_artifact(dir, "engaged.csv", engaged_csv(&traj, set, &profile))?;
            let chart = four_panels(&traj, &panel_spec(&cfg, &exp))?;
            write_artifact(dir, "chart.svg", render_svg(&chart))?;
            write_artifact(dir, "resolved_config.json", to_json(&cfg))?;
            for p in segment_phases(&traj, set, &profile) {
                w(
                    out,
                    format!(
                        "phase {:<24} {:>10.3} .. {:>10.3} s\n",
                        p.label, p.start, p.end
                    ),
                )?;
            }
            w(out, summary(&cfg, &exp, &traj, set)?)?;
            w(
                out,
                format!(
                    "wrote trajectory.csv, engaged.csv, chart.svg, resolved_config.json to {}\n",
                    dir.display()
                ),
            )
        }
        Command::CheckMonotone {
            config,
            u_min,
            u_max,
        } => {
            let (cfg, exp) = load(config)?;
            let mut domain = exp.check_box.clone();
            if let Some(v) = u_min {
                domain.inputs[0].0 = *v;
            }
            if let Some(v) = u_max {
                domain.inputs[0].1 = *v;
            }
            let domain = SampleBox::new(domain.states, domain.inputs)?;
            w(out, check_report(&cfg, &exp, &domain)?)
        }
        Command::Necessity {
            config,
            trajectory,
            tol_engaged,
        } => {
            let (_, exp) = load(config)?;
            let file = fs::File::open(trajectory).map_err(io_err(trajectory))?;
            let traj = Trajectory::from_csv_reader(file)?;
            let opts = NecessityOptions {
                tol_engaged: *tol_engaged,
                ..NecessityOptions::default()
            };
            let v = necessity_check(&exp.sys, &traj, &exp.policy.set, &exp.cost, &opts)?;
            match (v.status, v.interior_tail, v.improvement) {
                (NecessityStatus::NotOptimal, Some(tail), Some(imp)) => {
                    w(out, "verdict: not_optimal\n".into())?;
                    w(
                        out,
                        format!(
                            "interior tail: t0 = {:.6} s, smallest residual {:.6e}\n",
                            tail.t0, tail.min_residual
                        ),
                    )?;
                    w(
                        out,
                        format!(
                            "improvement: bump {:.6e} A on [{:.6}, {:.6}) s, delta_J = {:.6e}\n",
                            imp.height, traj.times[imp.start], traj.times[imp.end], imp.delta_j
                        ),
                    )
                }
                _ => w(out, "verdict: passes_necessity\n".into()),
            }
        }
        Command::Oracle {
            config,
            out: dir,
            audit,
            serial,
        } => {
            let (_, exp) = load(config)?;
            let problem = exp
                .oracle
                .clone()
                .ok_or_else(|| CliError::Usage("config has no `oracle` block".into()))?;
            let cfg_oracle = load_config(config)?.oracle.expect("checked above");
            let opts = OracleOptions {
                cap: cfg_oracle.cap,
                tol: cfg_oracle.tol,
                parallel: !serial,
                record_all: *audit,
            };
            let gap = oracle_gap(&exp.sys, &exp.x0, &exp.cost, &problem, &exp.policy, &opts)?;
            let mut csv = Vec::new();
            gap.oracle
                .write_csv(&mut csv)
                .map_err(io_err(Path::new("oracle.csv")))?;
            write_artifact(dir, "oracle.csv", String::from_utf8(csv).expect("ascii"))?;
            let mut s = String::new();
            s += &format!("sequences evaluated: {}\n", gap.oracle.n_evaluated);
            s += &format!("admissible:          {}\n", gap.oracle.n_admissible);
            s += &format!("J_oracle:            {:.10e}\n", gap.j_oracle);
            s += &format!("J_bangride:          {:.10e}\n", gap.j_bangride);
            s += &format!("gap:                 {:.10e}\n", gap.gap);
            match gap.grid_slack_bound {
                Some(b) => s += &format!("grid slack bound:    {b:.10e}\n"),
                None => s += "grid slack bound:    n/a for this cost\n",
            }
            s += &format!("J_projected:         {:.10e}\n", gap.projected_cost);
            s += &format!("best sequence:       {:?}\n", gap.oracle.best_sequence);
            s += &format!("projected sequence:  {:?}\n", gap.projected_sequence);
            s += &format!("cost monotone:       {}\n", gap.cost_monotone);
            s += &format!("wrote {}\n", dir.join("oracle.csv").display());
            w(out, s)
        }
        Command::Plot {
            trajectory,
            config,
            out: path,
        } => {
            let file = fs::File::open(trajectory).map_err(io_err(trajectory))?;
            let traj = Trajectory::from_csv_reader(file)?;
            let spec = match config {
                Some(c) => {
                    let (cfg, exp) = load(c)?;
                    panel_spec(&cfg, &exp)
                }
                None => PanelSpec::default(),
            };
            let svg = render_svg(&four_panels(&traj, &spec)?);
            fs::write(path, svg).map_err(io_err(path))?;
            w(out, format!("wrote {}\n", path.display()))
        }
    }
}

fn load(path: &Path) -> Result<(ExperimentConfig, Experiment), CliError> {
    let cfg = load_config(path)?;
    log::info!("resolved config:\n{}", to_json(&cfg));
    let base = path.parent().unwrap_or(Path::new("."));
    let exp = cfg.build(base)?;
    Ok((cfg, exp))
}

fn write_artifact(dir: &Path, name: &str, contents: String) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))
}

fn read_profile(path: &Path) -> Result<PiecewiseConstant, CliError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.get(0) != Some("t") || headers.len() < 2 {
        return Err(bad("profile header must be `t,u1`".into()));
    }
    let (mut breaks, mut values) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        breaks.push(vals[0]);
        values.push(vals[1..].to_vec());
    }
    Ok(PiecewiseConstant::new(breaks, values)?)
}

fn panel_spec(cfg: &ExperimentConfig, exp: &Experiment) -> PanelSpec {
    let limit = |pred: &dyn Fn(ConstraintKind) -> bool| -> Option<f64> {
        let set = &exp.policy.set;
        let k = set.position_of_kind(pred)?;
        // Every limit is `bound - quantity`; at zero state and input the residual is the bound.
        let c = &set.constraints()[k];
        match c.kind() {
            ConstraintKind::InputUpperBound { .. } | ConstraintKind::StateUpperBound { .. } => {
                Some(c.residual(&vec![0.0; exp.sys.n_states()], &[0.0]))
            }
            _ => None,
        }
    };
    let voltage_limit = cfg.constraints.iter().find_map(|c| match c.spec {
        crate::config::ConstraintSpec::Voltage { limit } => Some(limit),
        _ => None,
    });
    PanelSpec {
        ecm: exp.ecm.clone(),
        current_limit: limit(&|k| matches!(k, ConstraintKind::InputUpperBound { input: 0 })),
        soc_limit: limit(&|k| matches!(k, ConstraintKind::StateUpperBound { state: 0 })),
        voltage_limit,
    }
}

fn engaged_csv(traj: &Trajectory, set: &ConstraintSet, profile: &[Vec<usize>]) -> String {
    let mut s = String::from("t");
    for name in set.names() {
        s.push(',');
        s.push_str(&csv_field(name));
    }
    s.push_str(",phase\n");
    for (k, eng) in profile.iter().enumerate() {
        s += &format!("{:.16e}", traj.times[k]);
        for j in 0..set.len() {
            s.push_str(if eng.contains(&j) { ",1" } else { ",0" });
        }
        s.push(',');
        s.push_str(&monoride::bangride::phase_label(set, eng));
        s.push('\n');
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn summary(
    cfg: &ExperimentConfig,
    exp: &Experiment,
    traj: &Trajectory,
    set: &ConstraintSet,
) -> Result<String, CliError> {
    let j = cost(traj, &exp.cost);
    let worst = max_violation(traj, set)?;
    let mut s = format!("model: {}\n", cfg.model.kind_name());
    s += &format!("J = {j:.10e}\n");
    s += &format!("final state: {:?}\n", traj.final_state());
    s += &format!(
        "smallest residual: {:.6e} ({} at t = {:.3} s)\n",
        worst.value,
        set.constraints()[worst.constraint].name(),
        worst.time
    );
    Ok(s)
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Monotone => "monotone",
        Verdict::NonMonotone => "non-monotone",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn check_report(
    cfg: &ExperimentConfig,
    exp: &Experiment,
    domain: &SampleBox,
) -> Result<String, CliError> {
    let labels = exp.sys.labels();
    let mut s = format!(
        "model: {} ({} states, {} input)\n",
        cfg.model.kind_name(),
        exp.sys.n_states(),
        exp.sys.n_inputs()
    );
    s += "box:\n";
    for (i, b) in domain.states.iter().enumerate() {
        s += &format!("  x{} ({}) in [{}, {}]\n", i + 1, labels[i], b.0, b.1);
    }
    for (j, b) in domain.inputs.iter().enumerate() {
        s += &format!("  u{} in [{}, {}]\n", j + 1, b.0, b.1);
    }
    let km = KamkeMullerOptions {
        sampling: exp.sampling,
        ..KamkeMullerOptions::default()
    };
    let rep = check_kamke_muller(&exp.sys, domain, &km)?;
    s += &format!(
        "kamke-muller: {} ({:?}, {} samples, smallest partial {:.3e})\n",
        verdict_name(rep.verdict),
        rep.method,
        rep.samples_used,
        rep.min_estimate
    );
    for wit in &rep.witnesses {
        let src = match wit.source {
            Coordinate::State(i) => format!("x{}", i + 1),
            Coordinate::Input(j) => format!("u{}", j + 1),
        };
        s += &format!(
            "  witness: d f{} / d {} = {:.6e} at x = {:?}, u = {:?}\n",
            wit.target + 1,
            src,
            wit.estimate,
            wit.x,
            wit.u
        );
    }
    let ex = check_excitability(&exp.sys, domain, &exp.sampling)?;
    s += &format!(
        "excitability: {}\n",
        if ex.excitable {
            "excitable"
        } else {
            "not excitable"
        }
    );
    for (j, i) in &ex.unreachable {
        s += &format!("  u{} does not reach x{}\n", j + 1, i + 1);
    }
    s += "constraints non-increasing in u:\n";
    for r in verify_nonincreasing_in_u(&exp.policy.set, domain, &exp.sampling)? {
        s += &format!(
            "  {}: {} (largest dh/du {:.3e})\n",
            r.name,
            if r.passed { "ok" } else { "FAILS" },
            r.max_derivative
        );
    }
    let cm = verify_cost_monotone(&exp.cost, domain, &exp.sampling)?;
    s += &format!(
        "cost non-decreasing: {}\n",
        if cm.passed { "ok" } else { "FAILS" }
    );
    if let Some((x, u, coord, d)) = cm.witness {
        s += &format!("  witness: dL/d{coord} = {d:.6e} at x = {x:?}, u = {u:?}\n");
    }
    Ok(s)
}
