//! `nopo`: figure recipes and individual pipelines for the modulated NOPO.
//!
//! Every CSV is deterministic for a given configuration and seed. Wall-clock information goes
//! to `run_info.txt` next to the data so that the data files stay byte-identical across runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use nopo::ensemble::DEFAULT_SEED;
use nopo::fluctuations::{
    linearization_validity, locate_minimum, semiclassical_reference, sweep_vmin, variance_trajectory,
    FluctuationOptions, VarianceQuadrature, VALIDITY_FACTOR,
};
use nopo::positivep::{check_moment_equations, simulate_ensemble_with, uniform_grid, PositivePOptions};
use nopo::qsd::{simulate_qsd_ensemble_with, QsdEnsemble, QsdOptions};
use nopo::report::{self, RunMetadata};
use nopo::semiclassical::{converge_orbit, SemiclassicalOptions};
use nopo::{ModelConfig, ModelParams, Regime};

#[derive(Parser, Debug)]
#[command(name = "nopo", version, about = "Modulated nondegenerate parametric oscillator simulations")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON model configuration (dimensionless ratios).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Existing output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Number of stochastic trajectories.
    #[arg(long, global = true)]
    traj: Option<usize>,
    /// Stochastic time step in units of 1/gamma.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Mean pump amplitude over threshold, fbar / f_th.
    #[arg(long, global = true)]
    fbar: Option<f64>,
    /// Modulation depth f1 / fbar.
    #[arg(long, global = true)]
    f1: Option<f64>,
    /// Modulation frequency delta / gamma.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Effective nonlinearity lambda / gamma (overrides k via k = sqrt(lambda gamma3)).
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Worker threads for stochastic ensembles.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Semiclassical photon number for f1/fbar in {0, 0.4, 1.2}.
    Fig1,
    /// Linearized variance for f1/fbar in {0, 0.4, 1.2}.
    Fig2,
    /// Minimum variance versus fbar/f_th in [0.1, 4] for f1/fbar in {0, 0.75, 2}.
    Fig3,
    /// QSD ensemble against the linearized variance at threshold.
    Fig4 {
        /// Paper-scale coupling lambda/gamma = 0.01 (long run).
        #[arg(long)]
        full: bool,
    },
    /// One period of the periodic photon number.
    Semiclassical,
    /// One period of the linearized variance.
    Variance,
    /// Minimum-variance sweep.
    Sweep {
        #[arg(long, default_value_t = 0.1)]
        fbar_min: f64,
        #[arg(long, default_value_t = 4.0)]
        fbar_max: f64,
        #[arg(long, default_value_t = 0.05)]
        fbar_step: f64,
        /// Comma-separated f1/fbar levels.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.75, 2.0])]
        levels: Vec<f64>,
    },
    /// Positive-P ensemble moments.
    Positivep {
        #[command(flatten)]
        window: Window,
    },
    /// QSD ensemble.
    Qsd {
        #[command(flatten)]
        window: Window,
        /// Fixed Fock cutoff per mode (automatic if omitted).
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Linearized vs positive-P vs QSD on a common grid.
    Compare {
        #[command(flatten)]
        window: Window,
        /// Skip the QSD leg.
        #[arg(long)]
        no_qsd: bool,
    },
}

#[derive(Args, Debug, Clone, Copy)]
struct Window {
    /// Length of the recorded window (default: one modulation period).
    #[arg(long)]
    t_end: Option<f64>,
    /// Spacing of recorded times.
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Discarded relaxation time before the window.
    #[arg(long, default_value_t = 5.0)]
    relaxation: f64,
}

type AnyResult<T> = std::result::Result<T, Box<dyn std::error::Error>>;

struct Run {
    common: Common,
    config: ModelConfig,
    files: Vec<PathBuf>,
}

impl Run {
    fn new(common: Common) -> AnyResult<Self> {
        if !common.out.is_dir() {
            return Err(format!("output directory {} does not exist", common.out.display()).into());
        }
        let mut config = match &common.config {
            Some(path) => ModelConfig::from_json(&std::fs::read_to_string(path)?)?,
            None => ModelConfig::default(),
        };
        if let Some(v) = common.fbar {
            config.fbar_over_fth = v;
        }
        if let Some(v) = common.f1 {
            config.f1_over_fbar = v;
        }
        if let Some(v) = common.delta {
            config.delta_over_gamma = v;
        }
        if let Some(l) = common.lambda {
            set_lambda(&mut config, l)?;
        }
        if let Some(dt) = common.dt {
            if !(dt > 0.0 && dt <= 0.1) {
                return Err(format!("--dt must lie in (0, 0.1], got {dt}").into());
            }
        }
        if let Some(n) = common.traj {
            if n < 2 {
                return Err("--traj must be at least 2".into());
            }
        }
        Ok(Self { common, config, files: Vec::new() })
    }

    fn params(&self) -> AnyResult<ModelParams> {
        Ok(self.config.to_params()?)
    }

    fn meta(&self, config: &ModelConfig) -> RunMetadata {
        RunMetadata::new(config.to_json())
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> AnyResult<()> {
        let path = self.common.out.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn positivep_options(&self, window: &Window) -> PositivePOptions {
        PositivePOptions {
            dt: self.common.dt.unwrap_or(1e-3),
            relaxation: window.relaxation,
            workers: self.common.workers,
            ..PositivePOptions::default()
        }
    }

    fn qsd_options(&self, window: &Window, n_max: Option<usize>) -> QsdOptions {
        QsdOptions {
            dt: self.common.dt.unwrap_or(1e-3),
            relaxation: window.relaxation,
            n_max,
            workers: self.common.workers,
            ..QsdOptions::default()
        }
    }
}

fn set_lambda(config: &mut ModelConfig, lambda: f64) -> AnyResult<()> {
    if !(lambda > 0.0) {
        return Err(format!("--lambda must be positive, got {lambda}").into());
    }
    config.k_over_gamma = (lambda * config.gamma3_over_gamma).sqrt();
    Ok(())
}

fn window_grid(p: &ModelParams, window: &Window) -> AnyResult<Vec<f64>> {
    let t_end = window.t_end.unwrap_or(p.period());
    if !(window.step > 0.0 && t_end > 0.0) {
        return Err("--step and --t-end must be positive".into());
    }
    let n = (t_end / window.step).round().max(1.0) as usize;
    Ok(uniform_grid(0.0, window.step, n))
}

fn warn_validity(p: &ModelParams) -> f64 {
    let ratio = linearization_validity(p);
    if ratio < VALIDITY_FACTOR {
        eprintln!("warning: linearization validity ratio {ratio:.3e} is below {VALIDITY_FACTOR}");
    }
    ratio
}

fn gnuplot(run: &mut Run, name: &str, script: String) -> AnyResult<()> {
    run.write(name, |w| w.write_all(script.as_bytes()))
}

fn gnuplot_header(output: &str, xlabel: &str, ylabel: &str) -> String {
    format!(
        "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n\
         set terminal pngcairo size 800,560\nset output '{output}'\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\n"
    )
}

const FIGURE_LEVELS: [f64; 3] = [0.0, 0.4, 1.2];

fn fig1(run: &mut Run) -> AnyResult<()> {
    let base = run.params()?;
    let period = base.period();
    let t: Vec<f64> = (0..=1024).map(|i| 2.0 * period * i as f64 / 1024.0).collect();
    let mut columns = vec![t.clone()];
    for &f1 in &FIGURE_LEVELS {
        let p = base.with_pump(run.config.fbar_over_fth, f1)?;
        let column = if nopo::model::regime_classify(&p) == Regime::AboveThreshold {
            let orbit = converge_orbit(&p, &SemiclassicalOptions::default())?;
            t.iter().map(|&x| orbit.n0(x)).collect()
        } else {
            vec![0.0; t.len()]
        };
        columns.push(column);
    }
    let meta = run.meta(&run.config).with("curves", "f1_over_fbar=0,0.4,1.2");
    run.write("fig1.csv", |w| report::write_columns(w, &meta, &["t", "n0_f1_0", "n0_f1_0.4", "n0_f1_1.2"], &columns))?;
    let mut s = gnuplot_header("fig1.png", "gamma t", "n0");
    s.push_str("plot for [c=2:4] 'fig1.csv' using 1:c with lines\n");
    gnuplot(run, "fig1.gp", s)
}

fn fig2(run: &mut Run) -> AnyResult<()> {
    let base = run.params()?;
    let opts = FluctuationOptions::default();
    let period = base.period();
    let t: Vec<f64> = (0..=1024).map(|i| 2.0 * period * i as f64 / 1024.0).collect();
    let mut columns = vec![t.clone()];
    let mut meta = run.meta(&run.config).with("curves", "f1_over_fbar=0,0.4,1.2");
    for &f1 in &FIGURE_LEVELS {
        let p = base.with_pump(run.config.fbar_over_fth, f1)?;
        let traj = variance_trajectory(&p, &opts)?;
        let min = locate_minimum(&p, &traj, &opts);
        println!("f1/fbar = {f1}: V_min = {:.4} at t0 = {:.4}, n0(t0) = {:.4e}", min.v_min, min.t0, min.n0_at_t0);
        meta = meta.with(&format!("v_min_f1_{f1}"), report::num(min.v_min)).with(&format!("t0_f1_{f1}"), report::num(min.t0));
        columns.push(t.iter().map(|&x| traj.v_at(x)).collect());
    }
    run.write("fig2.csv", |w| report::write_columns(w, &meta, &["t", "V_f1_0", "V_f1_0.4", "V_f1_1.2"], &columns))?;
    let mut s = gnuplot_header("fig2.png", "gamma t", "V");
    s.push_str("plot for [c=2:4] 'fig2.csv' using 1:c with lines\n");
    gnuplot(run, "fig2.gp", s)
}

fn sweep(run: &mut Run, fbar_min: f64, fbar_max: f64, step: f64, levels: &[f64], name: &str) -> AnyResult<()> {
    if !(step > 0.0 && fbar_max >= fbar_min && fbar_min >= 0.0) {
        return Err("sweep range must satisfy 0 <= fbar_min <= fbar_max and step > 0".into());
    }
    let n = ((fbar_max - fbar_min) / step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| fbar_min + step * i as f64).collect();
    let table = sweep_vmin(&run.params()?, &grid, levels, &FluctuationOptions::default());
    let failed: Vec<String> = table
        .rows
        .iter()
        .filter_map(|r| r.result.as_ref().err().map(|e| format!("({}, {}): {e}", r.fbar_over_fth, r.f1_over_fbar)))
        .collect();
    for f in &failed {
        eprintln!("warning: sweep cell {f}");
    }
    let meta = run.meta(&run.config).with("failed_cells", failed.len());
    run.write(&format!("{name}.csv"), |w| report::write_sweep(w, &meta, &table))?;
    let mut s = gnuplot_header(&format!("{name}.png"), "fbar / f_th", "V_min");
    let curves: Vec<String> =
        levels.iter().map(|l| format!("'{name}.csv' using 1:($2=={l} ? $3 : 1/0) with lines title 'f1/fbar={l}'")).collect();
    s.push_str(&format!("plot {}\n", curves.join(", ")));
    gnuplot(run, &format!("{name}.gp"), s)
}

fn fig4(run: &mut Run, full: bool) -> AnyResult<()> {
    let mut config = run.config.clone();
    if run.common.fbar.is_none() {
        config.fbar_over_fth = 1.0;
    }
    if run.common.f1.is_none() {
        config.f1_over_fbar = 0.5;
    }
    if run.common.lambda.is_none() {
        set_lambda(&mut config, if full { 0.01 } else { 0.1 })?;
    }
    let p = config.to_params()?;
    let ratio = warn_validity(&p);
    let window = Window { t_end: None, step: 0.05, relaxation: 5.0 };
    let grid = window_grid(&p, &window)?;
    let opts = run.qsd_options(&window, None);
    let n_traj = run.common.traj.unwrap_or(if full { 2000 } else { 500 });
    let e = simulate_qsd_ensemble_with(&p, n_traj, &grid, run.common.seed, &opts)?;
    let quad = VarianceQuadrature::new(&p, FluctuationOptions::default().quad_nodes)?;
    let analytic = grid.iter().map(|&t| quad.variance(t)).collect::<nopo::Result<Vec<_>>>()?;
    let meta = run
        .meta(&config)
        .with_seed(run.common.seed)
        .with_dt(opts.dt)
        .with("n_max", e.n_max)
        .with("validity_ratio", report::num(ratio))
        .with("validity_warning", u8::from(ratio < VALIDITY_FACTOR));
    run.write("fig4.csv", |w| report::write_comparison(w, &meta, &analytic, &e))?;
    let mut s = gnuplot_header("fig4.png", "gamma t", "V");
    s.push_str("plot 'fig4.csv' using 1:2 with lines, '' using 1:3:4 with yerrorbars\n");
    gnuplot(run, "fig4.gp", s)
}

fn semiclassical(run: &mut Run) -> AnyResult<()> {
    let p = run.params()?;
    let opts = FluctuationOptions::default();
    let traj = semiclassical_reference(&p, &opts)?;
    let meta = run.meta(&run.config).with("periods_to_converge", traj.periods_to_converge);
    run.write("semiclassical.csv", |w| report::write_semiclassical(w, &meta, &traj))
}

fn variance(run: &mut Run) -> AnyResult<()> {
    let p = run.params()?;
    let ratio = warn_validity(&p);
    let opts = FluctuationOptions::default();
    let traj = variance_trajectory(&p, &opts)?;
    let min = locate_minimum(&p, &traj, &opts);
    println!("V_min = {:.6} at t0 = {:.6}; inseparable = {}, EPR = {}", min.v_min, min.t0, min.criteria.inseparable, min.criteria.epr);
    let meta = run
        .meta(&run.config)
        .with("v_min", report::num(min.v_min))
        .with("t0", report::num(min.t0))
        .with("validity_ratio", report::num(ratio))
        .with("validity_warning", u8::from(min.validity_warning));
    run.write("variance.csv", |w| report::write_variance(w, &meta, &traj))
}

fn positivep(run: &mut Run, window: &Window) -> AnyResult<()> {
    let p = run.params()?;
    let grid = window_grid(&p, window)?;
    let opts = run.positivep_options(window);
    let m = simulate_ensemble_with(&p, run.common.traj.unwrap_or(1000), &grid, run.common.seed, &opts)?;
    let residuals = check_moment_equations(&m, &p);
    println!("moment-equation residuals: max {:.2} sigma", residuals.max_sigma());
    let meta = run
        .meta(&run.config)
        .with_seed(run.common.seed)
        .with_dt(opts.dt)
        .with("relaxation", report::num(opts.relaxation))
        .with("residual_max_sigma", report::num(residuals.max_sigma()));
    run.write("positivep.csv", |w| report::write_positivep(w, &meta, &m))
}

fn qsd(run: &mut Run, window: &Window, n_max: Option<usize>) -> AnyResult<()> {
    let p = run.params()?;
    let grid = window_grid(&p, window)?;
    let opts = run.qsd_options(window, n_max);
    let e = simulate_qsd_ensemble_with(&p, run.common.traj.unwrap_or(200), &grid, run.common.seed, &opts)?;
    let meta = qsd_meta(run, &e, &opts);
    run.write("qsd.csv", |w| report::write_qsd(w, &meta, &e))
}

fn qsd_meta(run: &Run, e: &QsdEnsemble, opts: &QsdOptions) -> RunMetadata {
    run.meta(&run.config)
        .with_seed(run.common.seed)
        .with_dt(opts.dt)
        .with("n_max", e.n_max)
        .with("relaxation", report::num(opts.relaxation))
}

/// Pointwise tolerance `max(3 stderr, 2 lambda/gamma)`.
fn within(dev: f64, stderr: f64, lambda: f64) -> bool {
    dev <= (3.0 * stderr).max(2.0 * lambda)
}

fn compare(run: &mut Run, window: &Window, no_qsd: bool) -> AnyResult<()> {
    let mut config = run.config.clone();
    if run.common.lambda.is_none() {
        set_lambda(&mut config, 0.1)?;
    }
    if run.common.fbar.is_none() {
        config.fbar_over_fth = 2.0;
    }
    let p = config.to_params()?;
    let lambda = p.lambda();
    let ratio = warn_validity(&p);
    let grid = window_grid(&p, window)?;
    let lin = variance_trajectory(&p, &FluctuationOptions::default())?;
    let v_lin: Vec<f64> = grid.iter().map(|&t| lin.v_at(t)).collect();
    let n_traj = run.common.traj.unwrap_or(1000);
    let pp = simulate_ensemble_with(&p, n_traj, &grid, run.common.seed, &run.positivep_options(window))?;
    let qsd = if no_qsd {
        None
    } else {
        Some(simulate_qsd_ensemble_with(&p, n_traj, &grid, run.common.seed, &run.qsd_options(window, None))?)
    };

    let mut names = vec!["t", "V_linear", "V_pp", "V_pp_stderr", "pp_pass"];
    let mut columns = vec![grid.clone(), v_lin.clone(), pp.v.iter().map(|e| e.mean).collect(), pp.v.iter().map(|e| e.stderr).collect()];
    let pp_pass: Vec<bool> = (0..grid.len()).map(|k| within((pp.v[k].mean - v_lin[k]).abs(), pp.v[k].stderr, lambda)).collect();
    columns.push(pp_pass.iter().map(|&b| f64::from(u8::from(b))).collect());
    let mut all_pass = pp_pass.iter().all(|&b| b);
    if let Some(q) = &qsd {
        names.extend(["V_qsd", "V_qsd_stderr", "qsd_pass"]);
        let pass: Vec<bool> = (0..grid.len()).map(|k| within((q.v[k].mean - v_lin[k]).abs(), q.v[k].stderr, lambda)).collect();
        all_pass &= pass.iter().all(|&b| b);
        columns.push(q.v.iter().map(|e| e.mean).collect());
        columns.push(q.v.iter().map(|e| e.stderr).collect());
        columns.push(pass.iter().map(|&b| f64::from(u8::from(b))).collect());
    }
    println!(
        "comparison {}: positive-P {}{}",
        if all_pass { "PASS" } else { "FAIL" },
        if pp_pass.iter().all(|&b| b) { "agrees" } else { "deviates" },
        qsd.as_ref().map_or(String::new(), |q| format!(", QSD n_max = {}", q.n_max))
    );
    let mut meta = run
        .meta(&config)
        .with_seed(run.common.seed)
        .with_dt(run.common.dt.unwrap_or(1e-3))
        .with("validity_ratio", report::num(ratio))
        .with("validity_warning", u8::from(ratio < VALIDITY_FACTOR))
        .with("pass", u8::from(all_pass));
    if let Some(q) = &qsd {
        meta = meta.with("n_max", q.n_max);
    }
    run.write("compare.csv", |w| report::write_columns(w, &meta, &names, &columns))
}

fn write_run_info(out: &Path, args: &[String], started: SystemTime, elapsed: f64, files: &[PathBuf]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(out.join("run_info.txt"))?);
    let since_epoch = started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    writeln!(w, "version {}", nopo::VERSION)?;
    writeln!(w, "command {}", args.join(" "))?;
    writeln!(w, "started_unix {since_epoch:.3}")?;
    writeln!(w, "elapsed_seconds {elapsed:.3}")?;
    for f in files {
        writeln!(w, "output {}", f.display())?;
    }
    w.flush()
}

fn execute(cli: Cli) -> AnyResult<()> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut run = Run::new(cli.common)?;
    match cli.command {
        Command::Fig1 => fig1(&mut run)?,
        Command::Fig2 => fig2(&mut run)?,
        Command::Fig3 => sweep(&mut run, 0.1, 4.0, 0.05, &[0.0, 0.75, 2.0], "fig3")?,
        Command::Fig4 { full } => fig4(&mut run, full)?,
        Command::Semiclassical => semiclassical(&mut run)?,
        Command::Variance => variance(&mut run)?,
        Command::Sweep { fbar_min, fbar_max, fbar_step, levels } => sweep(&mut run, fbar_min, fbar_max, fbar_step, &levels, "sweep")?,
        Command::Positivep { window } => positivep(&mut run, &window)?,
        Command::Qsd { window, n_max } => qsd(&mut run, &window, n_max)?,
        Command::Compare { window, no_qsd } => compare(&mut run, &window, no_qsd)?,
    }
    let args: Vec<String> = std::env::args().collect();
    write_run_info(&run.common.out, &args, started, clock.elapsed().as_secs_f64(), &run.files)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
