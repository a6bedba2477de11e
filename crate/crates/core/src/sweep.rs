//! Parameter sweeps: every grid point times every instance, run on a
//! bounded worker pool, written as one deterministic CSV table.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run, run_replay, Mode, WorldConfig};
use crate::error::{config_err, Error, Result};
use crate::metrics::{fmt_opt, MetricsReport, CSV_HEADER};
use crate::movielens::RatingsTable;
use crate::recommender::SimilarityKind;

/// Column header of sweep tables: the report columns plus `error`.
pub fn sweep_header() -> String {
    format!("{CSV_HEADER},error")
}

/// A grid of configurations. An empty grid inherits the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub base: WorldConfig,
    pub phi: Vec<f64>,
    pub n_genres: Vec<usize>,
    pub k: Vec<usize>,
    pub f1: Vec<f64>,
    pub bias_b: Vec<f64>,
    pub similarity: Vec<SimilarityKind>,
    pub instances: u64,
    /// Execution settings are not echoed into the table, so the output
    /// does not depend on where or how wide a sweep ran.
    #[serde(skip_serializing)]
    pub output: Option<PathBuf>,
    /// Worker threads; 0 uses every available core.
    #[serde(skip_serializing)]
    pub parallelism: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec::from_base(WorldConfig::desk())
    }
}

/// `0, step, 2 step, ...` up to and including `max` (rounded to the step).
pub fn linear_grid(max: f64, step: f64) -> Vec<f64> {
    let n = (max / step).round() as usize;
    (0..=n)
        .map(|i| {
            let v = i as f64 * step;
            // strip accumulated binary noise so grid values print cleanly
            (v * 1e9).round() / 1e9
        })
        .collect()
}

impl SweepSpec {
    /// Single point at `base`, 10 instances.
    pub fn from_base(base: WorldConfig) -> Self {
        SweepSpec {
            base,
            phi: Vec::new(),
            n_genres: Vec::new(),
            k: Vec::new(),
            f1: Vec::new(),
            bias_b: Vec::new(),
            similarity: Vec::new(),
            instances: 10,
            output: None,
            parallelism: 0,
        }
    }

    /// Every grid point, in output order: similarity, b, G, k, f1, phi
    /// (phi varies fastest). Replay sweeps ignore the G, k and f1 grids.
    pub fn points(&self) -> Result<Vec<WorldConfig>> {
        if self.instances == 0 {
            return config_err("instances must be at least 1");
        }
        fn or_base<T: Copy>(grid: &[T], base: T) -> Vec<T> {
            if grid.is_empty() {
                vec![base]
            } else {
                grid.to_vec()
            }
        }
        let b = &self.base;
        let replay = b.mode == Mode::Replay;
        let sims = or_base(&self.similarity, b.recommender.similarity);
        let biases = or_base(&self.bias_b, b.recommender.bias_b);
        let (gs, ks, f1s) = if replay {
            (vec![b.n_genres], vec![b.k], vec![b.f1])
        } else {
            (
                or_base(&self.n_genres, b.n_genres),
                or_base(&self.k, b.k),
                or_base(&self.f1, b.f1),
            )
        };
        let phis = or_base(&self.phi, b.phi);

        let mut out = Vec::new();
        for &similarity in &sims {
            for &bias_b in &biases {
                for &n_genres in &gs {
                    for &k in &ks {
                        for &f1 in &f1s {
                            for &phi in &phis {
                                let mut c = b.clone();
                                c.recommender.similarity = similarity;
                                c.recommender.bias_b = bias_b;
                                c.n_genres = n_genres;
                                c.k = k;
                                c.f1 = f1;
                                c.phi = phi;
                                c.validate()?;
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Mean and standard error of one metric over the successful runs that
/// define it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Stat {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len();
        if n == 0 {
            return Stat::default();
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let stderr = (n > 1).then(|| {
            let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        });
        Stat {
            mean: Some(mean),
            stderr,
            n,
        }
    }
}

/// All runs of one grid point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub config: WorldConfig,
    /// Indexed by instance; failed runs keep their error message.
    pub runs: Vec<std::result::Result<MetricsReport, String>>,
}

impl PointResult {
    fn stat(&self, f: impl Fn(&MetricsReport) -> Option<f64>) -> Stat {
        Stat::of(self.runs.iter().filter_map(|r| r.as_ref().ok()).filter_map(f))
    }

    pub fn omega(&self) -> Stat {
        self.stat(|r| r.omega)
    }

    pub fn omega1(&self) -> Stat {
        self.stat(|r| r.omega1)
    }

    pub fn auc_real(&self) -> Stat {
        self.stat(|r| r.auc_real)
    }

    pub fn auc_est(&self) -> Stat {
        self.stat(|r| r.auc_est)
    }

    pub fn fallbacks(&self) -> Stat {
        self.stat(|r| Some(r.fallbacks() as f64))
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.is_err()).count()
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub points: Vec<PointResult>,
}

fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], " ")
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.points.iter().map(PointResult::failures).sum()
    }

    /// The full table: `#` comment lines echoing the spec and each resolved
    /// point config, the header, then per point its instance rows followed
    /// by a `mean` and a `stderr` row.
    pub fn to_csv(&self) -> Result<String> {
        let mut s = String::new();
        writeln!(s, "# recsim sweep").unwrap();
        writeln!(s, "# spec: {}", serde_json::to_string(&self.spec)?).unwrap();
        for (i, p) in self.points.iter().enumerate() {
            writeln!(s, "# point {i}: {}", serde_json::to_string(&p.config)?).unwrap();
        }
        writeln!(s, "{}", sweep_header()).unwrap();
        for p in &self.points {
            let key = p.config.key_fields();
            for (i, run) in p.runs.iter().enumerate() {
                match run {
                    Ok(r) => writeln!(s, "{},", r.csv_row()).unwrap(),
                    Err(e) => writeln!(s, "{key},{i},,,,,,{}", sanitize(e)).unwrap(),
                }
            }
            let stats = [p.omega(), p.omega1(), p.auc_real(), p.auc_est(), p.fallbacks()];
            let failed = p.failures();
            let note = if failed > 0 {
                format!("{failed} of {} runs failed", p.runs.len())
            } else {
                String::new()
            };
            let line = |label: &str, pick: fn(&Stat) -> Option<f64>| {
                let cols: Vec<String> = stats.iter().map(|st| fmt_opt(pick(st))).collect();
                format!("{key},{label},{},{note}", cols.join(","))
            };
            writeln!(s, "{}", line("mean", |st| st.mean)).unwrap();
            writeln!(s, "{}", line("stderr", |st| st.stderr)).unwrap();
        }
        Ok(s)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let csv = self.to_csv()?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        let mut f = fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        f.write_all(csv.as_bytes()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Runs a synthetic sweep and writes it to `spec.output` if set.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    if spec.base.mode == Mode::Replay {
        return config_err("replay sweeps need a ratings table");
    }
    execute(spec, None)
}

/// Runs a replay sweep over `table`; only the phi, b and similarity grids apply.
pub fn run_replay_sweep(spec: &SweepSpec, table: &RatingsTable) -> Result<SweepResult> {
    let mut spec = spec.clone();
    spec.base.mode = Mode::Replay;
    execute(&spec, Some(table))
}

fn execute(spec: &SweepSpec, table: Option<&RatingsTable>) -> Result<SweepResult> {
    let points = spec.points()?;
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| (0..spec.instances).map(move |i| (p, i)))
        .collect();
    log::info!(
        "sweep: {} points x {} instances = {} runs",
        points.len(),
        spec.instances,
        jobs.len()
    );

    let one = |&(p, i): &(usize, u64)| {
        let mut cfg = points[p].clone();
        cfg.instance_index = i;
        let out = match table {
            Some(t) => run_replay(&cfg, t),
            None => run(&cfg),
        };
        log::debug!("point {p} instance {i} done");
        out.map_err(|e| e.to_string())
    };
    let results: Vec<_> = if spec.parallelism == 1 {
        jobs.iter().map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.parallelism)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(one).collect())
    };

    let mut results = results.into_iter();
    let points = points
        .into_iter()
        .map(|config| PointResult {
            config,
            runs: results.by_ref().take(spec.instances as usize).collect(),
        })
        .collect();
    let result = SweepResult {
        spec: spec.clone(),
        points,
    };
    if let Some(path) = &spec.output {
        result.write_to(path)?;
    }
    Ok(result)
}
