use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ictrack_core::harness::{
    bench, design_sets_csv, design_summary, render_markdown, replot, run_experiment, validate_full, DesignCache,
    ExperimentConfig, OUT_DIR_ENV,
};
use ictrack_core::Error;

#[derive(Parser)]
#[command(name = "ictrack", version, about = "Interpolating control versus MPC on a planar UAV")]
struct Cli {
    /// Log verbosity; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build (or load) the invariant-set designs and print a summary.
    Synth(Common),
    /// Run the experiment described by a config file.
    Run(Common),
    /// Time repeated closed-loop runs without writing traces.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Runs per controller.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Regenerate the SVG plots from trace CSV files.
    Plot {
        /// Directory holding `trace_*.csv`.
        #[arg(long)]
        traces: PathBuf,
        /// Where to write the plots; defaults to the trace directory.
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Check a config file, including reference admissibility.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides the config file and the environment.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Design cache directory; overrides the config file.
    #[arg(long)]
    cache: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf, DesignCache), Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(c) = &self.cache {
            cfg.output.cache_dir = Some(c.clone());
        }
        let out = cfg.output_dir(self.out.as_deref());
        let cache = DesignCache::new(cfg.cache_dir(&out));
        Ok((cfg, out, cache))
    }
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn synth(c: &Common) -> Result<(), Error> {
    let (cfg, out, cache) = c.load()?;
    cfg.validate()?;
    let designs = ictrack_core::harness::synthesize(&cfg, Some(&cache))?;
    print!("{}", design_summary(&designs));
    std::fs::create_dir_all(&out).map_err(|e| io(&out, e))?;
    let sets = out.join("design_sets.csv");
    std::fs::write(&sets, design_sets_csv(&designs)).map_err(|e| io(&sets, e))?;
    print_files(&[sets]);
    Ok(())
}

fn run(c: &Common) -> Result<(), Error> {
    let (cfg, out, _) = c.load()?;
    let report = run_experiment(&cfg, &out)?;
    print!("{}", render_markdown(&report));
    print_files(&report.files);
    Ok(())
}

fn run_bench(c: &Common, repeats: usize) -> Result<(), Error> {
    let (cfg, _, cache) = c.load()?;
    let designs = validate_full(&cfg, Some(&cache))?;
    println!("controller,run,total_s,mean_ms,max_ms,first_ms,steady_mean_ms,wall_s");
    for row in bench(&cfg, &designs, repeats)? {
        for (i, (t, w)) in row.runs.iter().zip(&row.wall_s).enumerate() {
            println!(
                "{},{i},{},{},{},{},{},{w}",
                row.controller, t.total_s, t.mean_ms, t.max_ms, t.first_ms, t.steady_mean_ms
            );
        }
    }
    Ok(())
}

fn plot(traces: &Path, out: Option<&Path>) -> Result<(), Error> {
    let files = replot(traces, out.unwrap_or(traces))?;
    print_files(&files);
    Ok(())
}

fn validate(c: &Common) -> Result<(), Error> {
    let (cfg, _, cache) = c.load()?;
    cfg.validate()?;
    validate_full(&cfg, Some(&cache))?;
    println!("{}: ok", c.config.display());
    Ok(())
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source: e }
}

fn error_json(e: &Error) -> String {
    let mut v = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    if let Error::Config(list) = e {
        v["violations"] = serde_json::json!(list);
    }
    v.to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Synth(c) => synth(c),
        Command::Run(c) => run(c),
        Command::Bench { common, repeats } => run_bench(common, *repeats),
        Command::Plot { traces, out } => plot(traces, out.as_deref()),
        Command::Validate(c) => validate(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(1)
        }
    }
}
