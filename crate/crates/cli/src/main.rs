mod plot;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hnoma::analytic::analytic_curve;
use hnoma::config::ScenarioConfig;
use hnoma::imaging::{read_pgm, synthetic_image, transmit_image_pair, write_pgm, PsnrReport, Synthetic};
use hnoma::montecarlo::{compare_schemes, run_scenario, write_csv, write_json, RunOptions};
use serde::Serialize;

/// Link-level simulator for Hadamard-coded power-domain NOMA.
#[derive(Parser)]
#[command(name = "hnoma", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte Carlo BER curves for every scheme and user.
    Ber {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Closed-form BER curves (two users, square QAM).
    Analytic {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Sends one image to each user and reports PSNR.
    Image {
        #[command(flatten)]
        run: RunArgs,
        /// Image for the far user (user 1).
        #[arg(long)]
        far: PathBuf,
        /// Image for the near user (user 2).
        #[arg(long)]
        near: PathBuf,
    },
    /// Semilog SVG chart from a BER CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Writes a pair of synthetic test images, far.pgm and near.pgm.
    GenImages {
        #[arg(long, env = "HNOMA_OUT_DIR", default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replaces scenario.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores. Never changes results.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, env = "HNOMA_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Override one config key, e.g. --set stop.min_errors=500.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    /// Bad input; exit code 2.
    Invalid(String),
    /// Exit code 1.
    Runtime(String),
}

impl From<hnoma::Error> for Failure {
    fn from(e: hnoma::Error) -> Self {
        use hnoma::Error::*;
        match e {
            InvalidArgument(_) | InvalidConfig(_) | Parse { .. } => Failure::Invalid(e.to_string()),
            NotBracketed { .. } | Numerical(_) | Io(_) => Failure::Runtime(e.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_path: String,
    config: &'a ScenarioConfig,
    seed: u64,
    version: &'a str,
    outputs: Vec<String>,
    duration_s: f64,
}

#[derive(Serialize)]
struct AnalyticRow {
    scheme: &'static str,
    user: usize,
    snr_db: f64,
    ber: f64,
}

#[derive(Serialize)]
struct PsnrFile<'a> {
    snr_db: f64,
    reports: &'a [PsnrReport],
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Ber { run, format } => cmd_ber(&run, format),
        Cmd::Analytic { run, format } => cmd_analytic(&run, format),
        Cmd::Image { run, far, near } => cmd_image(&run, &far, &near),
        Cmd::Plot { input, output } => cmd_plot(&input, &output),
        Cmd::GenImages { out_dir, size, seed } => cmd_gen_images(&out_dir, size, seed),
    }
}

fn load(run: &RunArgs) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(&run.config)
        .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", run.config.display())))?;
    let mut overrides = run.set.clone();
    if let Some(s) = run.seed {
        overrides.push(format!("scenario.seed={s}"));
    }
    Ok(ScenarioConfig::load(&text, &overrides)?)
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(runtime)?;
        Ok(Outputs { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, Failure> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        self.written.push(path.display().to_string());
        Ok(BufWriter::new(f))
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let path = self.dir.join(name);
        self.written.push(path.display().to_string());
        path
    }

    fn finish(mut self, command: &str, run: &RunArgs, cfg: &ScenarioConfig, started: Instant) -> Result<(), Failure> {
        let path = self.dir.join("manifest.json");
        self.written.push(path.display().to_string());
        let m = Manifest {
            command,
            config_path: run.config.display().to_string(),
            config: cfg,
            seed: cfg.scenario.seed,
            version: env!("CARGO_PKG_VERSION"),
            outputs: self.written,
            duration_s: started.elapsed().as_secs_f64(),
        };
        let mut w = BufWriter::new(File::create(&path).map_err(runtime)?);
        serde_json::to_writer_pretty(&mut w, &m).map_err(runtime)?;
        writeln!(w).map_err(runtime)?;
        w.flush().map_err(runtime)
    }
}

fn cmd_ber(run: &RunArgs, format: Format) -> Result<(), Failure> {
    let started = Instant::now();
    let cfg = load(run)?;
    let opts = RunOptions { workers: run.workers };
    let schemes = cfg.scenario.schemes.clone();
    let (result, comparison) = if schemes.len() > 1 {
        let c = compare_schemes(&cfg, &schemes, opts)?;
        (c.run.clone(), Some(c))
    } else {
        (run_scenario(&cfg, opts)?, None)
    };
    let mut out = Outputs::new(&run.out_dir)?;
    match format {
        Format::Csv => {
            let mut w = out.create("ber.csv")?;
            write_csv(&result.curves, &mut w)?;
            w.flush().map_err(runtime)?;
            if let Some(c) = &comparison {
                write_rows(out.create("deltas.csv")?, &c.deltas)?;
                write_rows(out.create("gaps.csv")?, &c.gaps)?;
            }
        }
        Format::Json => {
            let mut w = out.create("ber.json")?;
            write_json(&result, &mut w)?;
            w.flush().map_err(runtime)?;
            if let Some(c) = &comparison {
                let body = serde_json::json!({ "baseline": c.baseline, "deltas": c.deltas, "gaps": c.gaps });
                let mut w = out.create("comparison.json")?;
                serde_json::to_writer_pretty(&mut w, &body).map_err(runtime)?;
                writeln!(w).map_err(runtime)?;
            }
        }
    }
    out.finish("ber", run, &cfg, started)
}

fn write_rows<T: Serialize>(w: impl Write, rows: &[T]) -> Result<(), Failure> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(runtime)?;
    }
    wr.flush().map_err(runtime)
}

fn cmd_analytic(run: &RunArgs, format: Format) -> Result<(), Failure> {
    let started = Instant::now();
    let cfg = load(run)?;
    let acfg = cfg.analytic_config()?;
    let curve = analytic_curve(&acfg)?;
    let mut out = Outputs::new(&run.out_dir)?;
    match format {
        Format::Csv => {
            let mut rows = Vec::new();
            for user in 1..=2 {
                for p in &curve {
                    let ber = if user == 1 { p.ber_user1 } else { p.ber_user2 };
                    rows.push(AnalyticRow { scheme: "analytic", user, snr_db: p.snr_db, ber });
                }
            }
            write_rows(out.create("analytic.csv")?, &rows)?;
        }
        Format::Json => {
            let body = serde_json::json!({ "config": acfg, "points": curve });
            let mut w = out.create("analytic.json")?;
            serde_json::to_writer_pretty(&mut w, &body).map_err(runtime)?;
            writeln!(w).map_err(runtime)?;
        }
    }
    out.finish("analytic", run, &cfg, started)
}

fn read_image(path: &Path) -> Result<hnoma::imaging::GrayImage, Failure> {
    read_pgm(path).map_err(|e| match e {
        hnoma::Error::Io(m) => Failure::Invalid(format!("cannot read {}: {m}", path.display())),
        other => Failure::Invalid(format!("{}: {other}", path.display())),
    })
}

fn cmd_image(run: &RunArgs, far: &Path, near: &Path) -> Result<(), Failure> {
    let started = Instant::now();
    let cfg = load(run)?;
    let far_img = read_image(far)?;
    let near_img = read_image(near)?;
    let opts = RunOptions { workers: run.workers };
    let mut reports = Vec::new();
    let mut images = Vec::new();
    for &scheme in &cfg.scenario.schemes {
        let r = transmit_image_pair(&far_img, &near_img, &cfg, scheme, opts)?;
        reports.extend(r.reports.iter().cloned());
        images.push(r);
    }
    let mut out = Outputs::new(&run.out_dir)?;
    for r in &images {
        let tag = r.scheme.as_str();
        write_pgm(&r.recon_far, out.path(&format!("{tag}_far.pgm")))?;
        write_pgm(&r.recon_near, out.path(&format!("{tag}_near.pgm")))?;
    }
    let mut w = out.create("psnr.json")?;
    serde_json::to_writer_pretty(&mut w, &PsnrFile { snr_db: cfg.image.snr_db, reports: &reports }).map_err(runtime)?;
    writeln!(w).map_err(runtime)?;
    w.flush().map_err(runtime)?;
    out.finish("image", run, &cfg, started)
}

fn cmd_plot(input: &Path, output: &Path) -> Result<(), Failure> {
    let f = File::open(input).map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", input.display())))?;
    let series = plot::read_series(f).map_err(|m| Failure::Invalid(format!("{}: {m}", input.display())))?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(runtime)?;
    }
    fs::write(output, plot::render(&series)).map_err(runtime)
}

fn cmd_gen_images(out_dir: &Path, size: usize, seed: u64) -> Result<(), Failure> {
    let far = synthetic_image(Synthetic::Noise { beta: 2.0 }, size, size, seed)?;
    let near = synthetic_image(Synthetic::Noise { beta: 3.0 }, size, size, seed + 1)?;
    fs::create_dir_all(out_dir).map_err(runtime)?;
    write_pgm(&far, out_dir.join("far.pgm"))?;
    write_pgm(&near, out_dir.join("near.pgm"))?;
    Ok(())
}
