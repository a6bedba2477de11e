use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use recsim::dynamics::{InitMode, TRACE_HEADER};
use recsim::metrics::{ProbeMode, CSV_HEADER};
use recsim::movielens::parse_ratings;
use recsim::plot::{render_plots, FigureKind};
use recsim::recommender::{dump_scores, BiasScope};
use recsim::sweep::{linear_grid, run_replay_sweep, run_sweep, SweepResult, SweepSpec};
use recsim::{Error, Mode, Simulation, SimilarityKind, WorldConfig};

#[derive(Parser)]
#[command(name = "recsim", version, about = "Users co-evolving with an item-based collaborative-filtering recommender")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one instance and print its report row.
    Simulate(SimulateArgs),
    /// Run a parameter grid and write a CSV table.
    Sweep(SweepArgs),
    /// Replay sweep over a MovieLens ratings file.
    Movielens(MovielensArgs),
    /// Check incremental structures and metrics against brute force.
    Verify(VerifyArgs),
    /// Render SVG plots from a sweep table.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Uniform,
    TasteMatched,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    ScoreOnly,
    Everywhere,
}

/// Settings shared by every run-producing subcommand.
#[derive(Args)]
struct WorldArgs {
    /// Starting point before the config file and flags are applied.
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// JSON file merged over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    items: Option<usize>,
    /// Events per user (T).
    #[arg(long)]
    updates_per_user: Option<u64>,
    /// Fraction of events discarded before measuring ω.
    #[arg(long)]
    burn_in: Option<f64>,
    /// Users carry two tastes; selections pick taste 1 with probability f1.
    #[arg(long)]
    two_taste: bool,
    #[arg(long, value_enum)]
    init: Option<Init>,
    #[arg(long, value_enum)]
    bias_scope: Option<Scope>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    auc_repetitions: Option<usize>,
    /// Estimated AUC keeps the live similarities instead of rebuilding them.
    #[arg(long)]
    probe_reuse_similarity: bool,
    /// Item count from which co-occurrence is stored sparsely.
    #[arg(long)]
    sparse_threshold: Option<usize>,
    /// Replay: leave ineligible users' collections out of the similarities.
    #[arg(long)]
    exclude_ineligible_edges: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    world: WorldArgs,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    genres: Option<usize>,
    #[arg(short, long)]
    k: Option<usize>,
    #[arg(long)]
    f1: Option<f64>,
    #[arg(long)]
    bias: Option<f64>,
    #[arg(long)]
    similarity: Option<SimilarityKind>,
    #[arg(long)]
    instance: Option<u64>,
    /// Replay this ratings file instead of a synthetic world.
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// Print the report as JSON instead of a CSV row.
    #[arg(long)]
    json: bool,
    /// Write every event as `step,user,channel,item,genre,match`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the final `user_id,item_id,provenance` edge list.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Write the final candidate scores of `--user`.
    #[arg(long)]
    dump_scores: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    user: usize,
    /// Report destination; stdout if absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Grid flags take comma-separated lists.
#[derive(Args)]
struct GridArgs {
    #[arg(long, value_delimiter = ',')]
    phi: Vec<f64>,
    /// Use the grid 0, step, ..., 1 for phi.
    #[arg(long, conflicts_with = "phi")]
    phi_step: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    bias: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    similarity: Vec<SimilarityKind>,
    /// Instances per grid point (preset default: 10 desk, 50 paper).
    #[arg(long)]
    instances: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(short, long)]
    jobs: Option<usize>,
    /// Table destination; defaults inside the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, env = "RECSIM_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    world: WorldArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_delimiter = ',')]
    genres: Vec<usize>,
    #[arg(short, long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    f1: Vec<f64>,
}

#[derive(Args)]
struct MovielensArgs {
    /// Ratings file in `user<TAB>item<TAB>rating<TAB>timestamp` layout.
    #[arg(long)]
    ratings: PathBuf,
    #[command(flatten)]
    world: WorldArgs,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct PlotArgs {
    /// Sweep table to read.
    input: PathBuf,
    /// omega-phi, auc-phi, omega1-f1, or all.
    #[arg(long, default_value = "all")]
    kind: String,
    #[arg(long, env = "RECSIM_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

fn merge(dst: &mut Value, src: Value) {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                merge(d.entry(k).or_insert(Value::Null), v);
            }
        }
        (d, s) => *d = s,
    }
}

fn read_json(path: &Path) -> recsim::Result<Value> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn preset_config(p: Preset) -> WorldConfig {
    match p {
        Preset::Desk => WorldConfig::desk(),
        Preset::Paper => WorldConfig::paper(),
    }
}

impl WorldArgs {
    fn apply(&self, c: &mut WorldConfig) {
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(c.n_users, self.users);
        set!(c.n_items, self.items);
        set!(c.updates_per_user, self.updates_per_user);
        set!(c.burn_in_fraction, self.burn_in);
        set!(c.master_seed, self.seed);
        set!(c.auc_repetitions, self.auc_repetitions);
        set!(c.sparse_threshold, self.sparse_threshold);
        if self.two_taste {
            c.mode = Mode::TwoTaste;
        }
        if let Some(i) = self.init {
            c.init = match i {
                Init::Uniform => InitMode::Uniform,
                Init::TasteMatched => InitMode::TasteMatched,
            };
        }
        if let Some(s) = self.bias_scope {
            c.recommender.bias_scope = match s {
                Scope::ScoreOnly => BiasScope::ScoreOnly,
                Scope::Everywhere => BiasScope::Everywhere,
            };
        }
        if self.probe_reuse_similarity {
            c.probe_mode = ProbeMode::ReuseLive;
        }
        if self.exclude_ineligible_edges {
            c.exclude_ineligible_edges = true;
        }
    }

    /// Preset, then config file, then flags.
    fn world_config(&self) -> recsim::Result<WorldConfig> {
        let mut value = serde_json::to_value(preset_config(self.preset))?;
        if let Some(path) = &self.config {
            merge(&mut value, read_json(path)?);
        }
        let mut c: WorldConfig = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("config: {e}")))?;
        self.apply(&mut c);
        Ok(c)
    }

    /// Preset, then a sweep-spec config file, then flags on the base.
    fn sweep_spec(&self) -> recsim::Result<SweepSpec> {
        let mut spec = SweepSpec::from_base(preset_config(self.preset));
        if self.preset == Preset::Paper {
            spec.instances = 50;
        }
        let mut value = serde_json::to_value(&spec)?;
        if let Some(path) = &self.config {
            merge(&mut value, read_json(path)?);
        }
        let mut spec: SweepSpec = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("config: {e}")))?;
        self.apply(&mut spec.base);
        Ok(spec)
    }
}

impl GridArgs {
    fn apply(&self, spec: &mut SweepSpec) -> recsim::Result<()> {
        if let Some(step) = self.phi_step {
            if !(step > 0.0 && step <= 1.0) {
                return Err(Error::Config(format!("phi step must lie in (0, 1], got {step}")));
            }
            spec.phi = linear_grid(1.0, step);
        } else if !self.phi.is_empty() {
            spec.phi = self.phi.clone();
        }
        if !self.bias.is_empty() {
            spec.bias_b = self.bias.clone();
        }
        if !self.similarity.is_empty() {
            spec.similarity = self.similarity.clone();
        }
        if let Some(n) = self.instances {
            spec.instances = n;
        }
        if let Some(j) = self.jobs {
            spec.parallelism = j;
        }
        Ok(())
    }

    fn output(&self, spec: &SweepSpec, default_name: &str) -> PathBuf {
        self.output
            .clone()
            .or_else(|| spec.output.clone())
            .unwrap_or_else(|| self.out_dir.join(default_name))
    }
}

fn create(path: &Path) -> recsim::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn simulate(a: SimulateArgs) -> recsim::Result<ExitCode> {
    let mut c = a.world.world_config()?;
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value {
                $field = v;
            }
        };
    }
    set!(c.phi, a.phi);
    set!(c.n_genres, a.genres);
    set!(c.k, a.k);
    set!(c.f1, a.f1);
    set!(c.recommender.bias_b, a.bias);
    set!(c.recommender.similarity, a.similarity);
    set!(c.instance_index, a.instance);

    let mut sim = match &a.ratings {
        Some(path) => {
            let table = parse_ratings(path)?;
            Simulation::replay(c, &table)?
        }
        None => Simulation::synthetic(c)?,
    };
    match &a.trace {
        Some(path) => {
            let mut out = create(path)?;
            writeln!(out, "{TRACE_HEADER}")?;
            sim.advance_to(u64::MAX, Some(&mut out))?;
            out.flush()?;
        }
        None => sim.advance_to(u64::MAX, None)?,
    }
    if let Some(path) = &a.snapshot {
        let mut out = create(path)?;
        sim.state().export_edges(&mut out)?;
        out.flush()?;
    }
    if let Some(path) = &a.dump_scores {
        if a.user >= sim.state().n_users() {
            return Err(Error::Config(format!(
                "--user {} out of range ({} users)",
                a.user,
                sim.state().n_users()
            )));
        }
        let mut out = create(path)?;
        dump_scores(sim.state(), a.user, &sim.config().recommender, &mut out)?;
        out.flush()?;
    }
    let report = sim.finish();

    let mut out: Box<dyn Write> = match &a.output {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    if a.json {
        serde_json::to_writer_pretty(&mut out, &report)?;
        writeln!(out)?;
    } else {
        writeln!(out, "# config: {}", serde_json::to_string(&report.config)?)?;
        writeln!(out, "{CSV_HEADER}")?;
        writeln!(out, "{}", report.csv_row())?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn finish_sweep(result: &SweepResult, path: &Path) -> recsim::Result<ExitCode> {
    result.write_to(path)?;
    for p in &result.points {
        let om = p.omega();
        log::info!(
            "{}: omega {} +- {}",
            p.config.key_fields(),
            om.mean.map_or("-".into(), |v| format!("{v:.4}")),
            om.stderr.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    println!("{}", path.display());
    let failed = result.failures();
    if failed > 0 {
        eprintln!("{failed} run(s) failed; see the error column");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(a: SweepArgs) -> recsim::Result<ExitCode> {
    let mut spec = a.world.sweep_spec()?;
    a.grid.apply(&mut spec)?;
    if !a.genres.is_empty() {
        spec.n_genres = a.genres.clone();
    }
    if !a.k.is_empty() {
        spec.k = a.k.clone();
    }
    if !a.f1.is_empty() {
        spec.f1 = a.f1.clone();
    }
    let path = a.grid.output(&spec, "sweep.csv");
    spec.output = None;
    let result = run_sweep(&spec)?;
    finish_sweep(&result, &path)
}

fn movielens(a: MovielensArgs) -> recsim::Result<ExitCode> {
    let mut spec = a.world.sweep_spec()?;
    if spec.base.updates_per_user == preset_config(a.world.preset).updates_per_user
        && a.world.updates_per_user.is_none()
    {
        spec.base.updates_per_user = 5000;
    }
    if spec.phi.is_empty() {
        spec.phi = linear_grid(1.0, 0.1);
    }
    a.grid.apply(&mut spec)?;
    let table = parse_ratings(&a.ratings)?;
    log::info!(
        "{}: {} ratings, {} users, {} items",
        a.ratings.display(),
        table.triples().len(),
        table.n_users(),
        table.n_items()
    );
    for (line, reason) in &table.rejected {
        log::warn!("{}:{line}: skipped ({reason})", a.ratings.display());
    }
    if table.duplicates > 0 {
        log::warn!("{} duplicate ratings; the last one was kept", table.duplicates);
    }
    let path = a.grid.output(&spec, "movielens.csv");
    spec.output = None;
    let result = run_replay_sweep(&spec, &table)?;
    finish_sweep(&result, &path)
}

fn verify(a: VerifyArgs) -> recsim::Result<ExitCode> {
    let mut ok = true;
    for r in recsim::verify::run_all(a.seed) {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        ok &= r.passed;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn plot(a: PlotArgs) -> recsim::Result<ExitCode> {
    if a.kind != "all" {
        let out = render_plots(&a.input, a.kind.parse()?, &a.out_dir)?;
        println!("{}", out.display());
        return Ok(ExitCode::SUCCESS);
    }
    // every kind the table has data for
    let mut last = None;
    let mut drawn = 0;
    for kind in FigureKind::ALL {
        match render_plots(&a.input, kind, &a.out_dir) {
            Ok(out) => {
                println!("{}", out.display());
                drawn += 1;
            }
            Err(e @ Error::Csv(_)) => {
                log::info!("{}: {e}", kind.as_str());
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    match (drawn, last) {
        (0, Some(e)) => Err(e),
        _ => Ok(ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Movielens(a) => movielens(a),
        Command::Verify(a) => verify(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
