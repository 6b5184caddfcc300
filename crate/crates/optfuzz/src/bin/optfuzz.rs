use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use optfuzz::campaign::{self, BackendMode, Campaign, RunOptions, CATALOG_FILE, CONFIG_FILE, META_FILE};
use optfuzz::config::{Config, Profile};
use optfuzz::gateway::records_path;
use optfuzz::report::{self, Timing};
use optfuzz::{collect, Error};

#[derive(Parser)]
#[command(name = "optfuzz", version, about = "Optimization-targeted compiler fuzzing")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config; built-in MiniLang defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set campaign.seed=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Find optimization functions and write the catalog.
    Collect {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Catalog file (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Produce the requirement for every optimization into a campaign
    /// directory, without fuzzing.
    Summarize {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        campaign: PathBuf,
    },
    /// Start (or continue with the same config) a campaign.
    Fuzz {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        campaign: PathBuf,
        /// Iteration budget preset; `--set campaign.iterations=N` wins.
        #[arg(long, value_enum)]
        profile: Option<Profile>,
        /// Stop after this many iterations; finish later with `resume`.
        #[arg(long)]
        stop_after: Option<u32>,
    },
    /// Continue an interrupted campaign from its own directory.
    Resume {
        #[arg(long)]
        campaign: PathBuf,
        #[arg(long)]
        stop_after: Option<u32>,
    },
    /// Re-run a finished campaign from its recorded completions only.
    Replay {
        #[arg(long)]
        campaign: PathBuf,
        /// Where the replayed campaign goes; `<campaign>-replay` by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the summary of a finished campaign.
    Report {
        #[arg(long)]
        campaign: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn load_config(cfg: &ConfigArgs, extra: &[String]) -> Result<(Config, PathBuf), Error> {
    let mut overrides = extra.to_vec();
    overrides.extend(cfg.overrides.iter().cloned());
    match &cfg.config {
        Some(p) => {
            let base = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
            Ok((Config::load(p, &overrides)?, base))
        }
        None => Ok((Config::from_toml_str("", &overrides)?, PathBuf::from("."))),
    }
}

/// Prints the table and returns the exit status a finished run implies.
fn finish(c: &Campaign, outcome: campaign::RunOutcome) -> Result<i32, Error> {
    match outcome.report {
        Some(r) => {
            print!("{}", report::render_table(&r, Timing::load(&c.dir).as_ref()));
            Ok(r.exit_code(c.config.campaign.fail_on_bugs))
        }
        None => {
            eprintln!(
                "stopped after iteration {} of {}; continue with `optfuzz resume --campaign {}`",
                outcome.completed_iterations,
                c.config.campaign.iterations,
                c.dir.display()
            );
            Ok(0)
        }
    }
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.cmd {
        Cmd::Collect { cfg, out } => {
            let (config, base) = load_config(&cfg, &[])?;
            let c = campaign::collect_catalog(&config, &base)?;
            for w in &c.warnings {
                eprintln!("warning: skipped {}: {}", w.path, w.reason);
            }
            collect::write_catalog(&out, &c.optimizations)?;
            for o in &c.optimizations {
                println!("{}\t{}:{}-{}", o.name, o.file_path, o.line_span.0, o.line_span.1);
            }
            eprintln!("{} optimizations written to {}", c.optimizations.len(), out.display());
            Ok(0)
        }
        Cmd::Summarize { cfg, campaign: dir } => {
            let (config, base) = load_config(&cfg, &[])?;
            let c = Campaign::open(&dir, config, &base, BackendMode::Live)?;
            let keys = campaign::loop_keys(c.catalog());
            let mut failed = 0;
            for (key, opt) in keys.iter().zip(c.catalog()) {
                match c.requirement(key, opt) {
                    Ok(r) => println!("== {}\n{}\n", opt.name, r.text.trim_end()),
                    Err(e) => {
                        failed += 1;
                        eprintln!("error: {}: {e}", opt.name);
                    }
                }
            }
            if failed == keys.len() {
                return Err(Error::Environment("no requirement could be produced".into()));
            }
            Ok(0)
        }
        Cmd::Fuzz {
            cfg,
            campaign: dir,
            profile,
            stop_after,
        } => {
            let preset: Vec<String> = profile
                .map(|p| vec![format!("campaign.iterations={}", p.iterations())])
                .unwrap_or_default();
            let (config, base) = load_config(&cfg, &preset)?;
            let c = Campaign::open(&dir, config, &base, BackendMode::Live)?;
            let outcome = c.run(RunOptions { stop_after })?;
            finish(&c, outcome)
        }
        Cmd::Resume { campaign: dir, stop_after } => {
            let c = Campaign::resume(&dir, BackendMode::Live)?;
            let outcome = c.run(RunOptions { stop_after })?;
            finish(&c, outcome)
        }
        Cmd::Replay { campaign: src, out } => {
            let original = report::load(&src)?;
            let dst = out.unwrap_or_else(|| {
                let mut s = src.as_os_str().to_owned();
                s.push("-replay");
                PathBuf::from(s)
            });
            if dst.join(CONFIG_FILE).exists() {
                return Err(Error::Usage(format!("{} already holds a campaign", dst.display())));
            }
            for f in [CONFIG_FILE, META_FILE, CATALOG_FILE] {
                let to = dst.join(f);
                fs::create_dir_all(to.parent().expect("has parent"))?;
                fs::copy(src.join(f), &to).map_err(|e| Error::Corrupt(format!("{}: {e}", src.join(f).display())))?;
            }
            let records = records_path(&dst);
            fs::create_dir_all(records.parent().expect("has parent"))?;
            fs::copy(records_path(&src), &records).map_err(|e| Error::Corrupt(format!("records: {e}")))?;
            let c = Campaign::resume(&dst, BackendMode::Replay(records))?;
            let outcome = c.run(RunOptions::default())?;
            let Some(r) = outcome.report else {
                return Err(Error::Corrupt("replay did not finish".into()));
            };
            if r != original {
                return Err(Error::Corrupt(format!(
                    "replayed report differs from {}",
                    src.join(report::REPORT_JSON).display()
                )));
            }
            print!("{}", report::render_table(&r, None));
            eprintln!("replay matches the original; written to {}", dst.display());
            Ok(r.exit_code(c.config.campaign.fail_on_bugs))
        }
        Cmd::Report { campaign: dir, json } => {
            let r = report::load(&dir)?;
            if json {
                print!("{}", r.to_json());
            } else {
                print!("{}", report::render_table(&r, Timing::load(&dir).as_ref()));
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
