//! `sparseg`: train dictionaries, segment CT volumes, evaluate results and
//! export overlay slices.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 liver localization
//! failed, 3 the level set diverged (the trace is still written).

mod export;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sparseg::config::PipelineConfig;
use sparseg::levelset::Outcome;
use sparseg::localization::IntensityMode;
use sparseg::metrics::{evaluate, MetricsReport};
use sparseg::pipeline::{load_model, segment, train, TrainingCase};
use sparseg::volume::{load_metaimage, save_metaimage, Mask3D, Volume3D};
use sparseg::Error;

use export::{export_slices, Plane};

#[derive(Parser, Debug)]
#[command(name = "sparseg", version, about = "Liver segmentation with sparse priors and level sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON configuration; flags below take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Weight of the surface-area and shape-sparsity terms.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Seed for dictionary initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Input intensities are Hounsfield units (default).
    #[arg(long, global = true, conflicts_with = "gray_mode")]
    hu_mode: bool,
    /// Input intensities are 8-bit windowed gray levels.
    #[arg(long, global = true)]
    gray_mode: bool,
    /// Patient-right is the high-x half of the volume.
    #[arg(long, global = true)]
    flip_lr: bool,
    /// Cap on re-weighting passes
    #[arg(long, global = true)]
    max_outer: Option<usize>,
    /// Level-set steps per pass; 0 returns the seed box
    #[arg(long, global = true)]
    inner_steps: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn the liver, non-liver and shape dictionaries from labelled volumes.
    Train {
        /// A CT volume and its liver mask; repeat for more cases.
        #[arg(long = "case", num_args = 2, value_names = ["VOLUME", "MASK"])]
        cases: Vec<PathBuf>,
        /// Output directory for the dictionaries and the training log.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Localize and segment the liver in a CT volume.
    Segment {
        volume: PathBuf,
        /// Directory written by `train`.
        #[arg(long)]
        dictionaries: Option<PathBuf>,
        /// Output mask (MetaImage); the trace goes next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Energy trace CSV, default `<out stem>_trace.csv`.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score a segmentation against a reference mask.
    Evaluate {
        result: Option<PathBuf>,
        truth: Option<PathBuf>,
        /// Score a metric vector `VOE,VD,AVGD,RMSD,MAXD` instead of masks.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["result", "batch"])]
        metrics: Option<Vec<f64>>,
        /// CSV with rows `case,result,truth` or `case,voe,vd,avgd,rmsd,maxd`;
        /// prints one CSV row per case and a final `mean` row.
        #[arg(long, conflicts_with = "result")]
        batch: Option<PathBuf>,
        /// Print JSON instead of the table.
        #[arg(long)]
        json: bool,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write grayscale PNG slices with the mask contour in red.
    ExportSlices {
        volume: PathBuf,
        mask: PathBuf,
        #[arg(long, default_value = "axial")]
        plane: Plane,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        window_center: f64,
        #[arg(long, default_value_t = 350.0)]
        window_width: f64,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Input(Error),
    Localization(Error),
    Diverged,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Localization(_) => Failure::Localization(e),
            other => Failure::Input(other),
        }
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Input(_) => 1,
            Failure::Localization(_) => 2,
            Failure::Diverged => 3,
        }
    }
}

fn load_config(o: &Overrides) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &o.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(l) = o.lambda {
        cfg.levelset.lambda = l;
    }
    if let Some(s) = o.seed {
        cfg.dictionaries.seed = s;
    }
    if o.gray_mode {
        cfg.localization.mode = IntensityMode::Gray;
    } else if o.hu_mode {
        cfg.localization.mode = IntensityMode::Hu;
    }
    if o.flip_lr {
        cfg.localization.flip_lr = true;
    }
    if let Some(n) = o.max_outer {
        cfg.levelset.max_outer = n;
    }
    if let Some(n) = o.inner_steps {
        cfg.levelset.inner_steps = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_mask(path: &Path) -> Result<Mask3D, Failure> {
    Ok(Mask3D::from_volume(&load_metaimage(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| {
        Failure::Input(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn cmd_train(cases: &[PathBuf], out: Option<PathBuf>, o: &Overrides) -> Result<(), Failure> {
    if cases.is_empty() {
        return Err(Failure::Usage("train needs at least one `--case VOLUME MASK`".into()));
    }
    let cfg = load_config(o)?;
    let mut pairs = Vec::with_capacity(cases.len() / 2);
    for pair in cases.chunks(2) {
        let volume = load_metaimage(&pair[0])?;
        let liver = load_mask(&pair[1])?;
        pairs.push(TrainingCase { volume, liver });
    }
    let dir = out
        .or_else(|| cfg.paths.dictionaries.clone())
        .unwrap_or_else(|| PathBuf::from("dictionaries"));
    let trained = train(&pairs, &cfg)?;
    trained.save(&dir)?;
    println!("trained {} case(s); dictionaries in {}", pairs.len(), dir.display());
    Ok(())
}

fn trace_paths(out: &Path, trace: Option<PathBuf>) -> (PathBuf, PathBuf) {
    let csv = trace.unwrap_or_else(|| {
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.with_file_name(format!("{stem}_trace.csv"))
    });
    let json = csv.with_extension("json");
    (csv, json)
}

fn cmd_segment(
    volume: &Path,
    dictionaries: Option<PathBuf>,
    out: Option<PathBuf>,
    trace: Option<PathBuf>,
    o: &Overrides,
) -> Result<(), Failure> {
    let cfg = load_config(o)?;
    let dir = dictionaries
        .or_else(|| cfg.paths.dictionaries.clone())
        .ok_or_else(|| Failure::Usage("segment needs `--dictionaries DIR`".into()))?;
    let out = out
        .or_else(|| cfg.paths.output.clone())
        .unwrap_or_else(|| PathBuf::from("segmentation.mhd"));
    let model = load_model(&dir)?;
    let vol: Volume3D = load_metaimage(volume)?;
    let seg = segment(&vol, &model, &cfg)?;
    let r = &seg.result;

    let (csv, summary) = trace_paths(&out, trace);
    write_text(&csv, &r.trace_csv())?;
    let doc = json!({
        "lambda": r.lambda,
        "dt": r.dt,
        "outcome": r.outcome,
        "seed": {
            "center": seg.seed.center,
            "lo": seg.seed.lo,
            "hi": seg.seed.hi,
            "fallback": seg.seed.fallback,
        },
        "outer": r.outer,
        "levelset": cfg.levelset,
    });
    write_text(&summary, &serde_json::to_string_pretty(&doc).expect("summary serializes"))?;

    if r.outcome == Outcome::Diverged {
        eprintln!("level set diverged; trace in {}", csv.display());
        return Err(Failure::Diverged);
    }
    save_metaimage(&r.mask.to_volume(), &out)?;
    println!(
        "seed {}; {:?} after {} outer iteration(s); {} voxels -> {}",
        seg.seed,
        r.outcome,
        r.outer.len(),
        r.mask.count(),
        out.display()
    );
    Ok(())
}

enum BatchRow {
    Masks(PathBuf, PathBuf),
    Values([f64; 5]),
}

fn parse_batch(path: &Path) -> Result<Vec<(String, BatchRow)>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Failure::Input(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Failure::Usage(format!("{}:{}: expected `case,result,truth` or `case,v1..v5`", path.display(), n + 1));
        let row = match f.len() {
            3 => BatchRow::Masks(base.join(f[1]), base.join(f[2])),
            6 => {
                let mut v = [0.0; 5];
                for (slot, s) in v.iter_mut().zip(&f[1..]) {
                    *slot = s.parse().map_err(|_| bad())?;
                }
                BatchRow::Values(v)
            }
            _ => return Err(bad()),
        };
        if f[0] == "case" {
            continue;
        }
        rows.push((f[0].to_string(), row));
    }
    if rows.is_empty() {
        return Err(Failure::Usage(format!("{} lists no cases", path.display())));
    }
    Ok(rows)
}

fn cmd_evaluate(
    result: Option<PathBuf>,
    truth: Option<PathBuf>,
    metrics: Option<Vec<f64>>,
    batch: Option<PathBuf>,
    json: bool,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    if let Some(path) = batch {
        let mut reports = Vec::new();
        let mut csv = format!("{}\n", MetricsReport::csv_header());
        for (case, row) in parse_batch(&path)? {
            let r = match row {
                BatchRow::Masks(h, t) => evaluate(&load_mask(&h)?, &load_mask(&t)?)?,
                BatchRow::Values(v) => MetricsReport::from_values(v),
            };
            csv.push_str(&r.csv_row(&case));
            csv.push('\n');
            reports.push(r);
        }
        let mean = MetricsReport::mean(&reports)?;
        csv.push_str(&mean.csv_row("mean"));
        csv.push('\n');
        print!("{csv}");
        if let Some(o) = out {
            write_text(&o, &csv)?;
        }
        return Ok(());
    }
    let report = match (metrics, result, truth) {
        (Some(v), _, _) => {
            let v: [f64; 5] = v
                .try_into()
                .map_err(|_| Failure::Usage("--metrics takes five values: VOE,VD,AVGD,RMSD,MAXD".into()))?;
            MetricsReport::from_values(v)
        }
        (None, Some(h), Some(t)) => evaluate(&load_mask(&h)?, &load_mask(&t)?)?,
        _ => return Err(Failure::Usage("evaluate needs RESULT TRUTH, --metrics or --batch".into())),
    };
    if json {
        println!("{}", report.to_json());
    } else {
        print!("{report}");
    }
    if let Some(o) = out {
        write_text(&o, &report.to_json())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { cases, out, overrides } => cmd_train(&cases, out, &overrides),
        Command::Segment {
            volume,
            dictionaries,
            out,
            trace,
            overrides,
        } => cmd_segment(&volume, dictionaries, out, trace, &overrides),
        Command::Evaluate {
            result,
            truth,
            metrics,
            batch,
            json,
            out,
        } => cmd_evaluate(result, truth, metrics, batch, json, out),
        Command::ExportSlices {
            volume,
            mask,
            plane,
            out,
            window_center,
            window_width,
        } => {
            let vol = load_metaimage(&volume)?;
            let m = load_mask(&mask)?;
            let paths = export_slices(&vol, &m, plane, (window_center, window_width), &out)?;
            println!("wrote {} {plane} slice(s) to {}", paths.len(), out.display());
            Ok(())
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("SPARSEG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("SPARSEG_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot size the worker pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Input(e) | Failure::Localization(e) => eprintln!("error: {e}"),
                Failure::Diverged => {}
            }
            ExitCode::from(f.code())
        }
    }
}
