use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hierfolio::backtest::Method;
use hierfolio::pipeline::{
    backtest_sector, fit_mvp, fit_sector, load_sector, prepare_sector, read_manifest, read_report,
    run_pipeline, sector_dendrogram, sector_slug, summarize_reports, write_atomic, write_summaries,
};
use hierfolio::{Error, ErrorKind, RunConfig, WeightVector, CONFIG_ENV};

const EXIT_VALIDATION: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "hierfolio",
    version,
    about = "Build and backtest MVP, HRP and HERC portfolios"
)]
struct Cli {
    /// Study configuration (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Override every random seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full study: fit, backtest and summarize every sector.
    Run,
    /// Validate and clean price data; writes one wide CSV per sector.
    Ingest {
        #[arg(long)]
        sector: Option<String>,
    },
    /// Fit allocators on the training period and write weight files.
    Optimize {
        /// Restrict to these methods (default: those enabled in the config).
        #[arg(long = "method")]
        methods: Vec<Method>,
        #[arg(long)]
        sector: Option<String>,
    },
    /// Evaluate a weights file on the training and test periods.
    Backtest {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        sector: Option<String>,
        /// Portfolio label for the reports (default: taken from the file name).
        #[arg(long)]
        label: Option<String>,
    },
    /// Monte-Carlo mean-variance samples as `return,volatility,sharpe` CSV.
    Frontier {
        #[arg(long)]
        sector: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Export the clustering tree as JSON.
    Dendrogram {
        #[arg(long)]
        sector: Option<String>,
    },
    /// Summarize report files (default: every report in the output manifest).
    Report { reports: Vec<PathBuf> },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Validation => EXIT_VALIDATION,
                ErrorKind::Data => EXIT_DATA,
            })
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let path = cli.config.as_deref().ok_or_else(|| Error::Config {
        field: "config".into(),
        message: format!("pass --config or set {CONFIG_ENV}"),
    })?;
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn selected_sectors(cfg: &RunConfig, sector: Option<&str>) -> Result<Vec<String>, Error> {
    match sector {
        Some(s) if cfg.sectors.contains_key(s) => Ok(vec![s.to_string()]),
        Some(s) => Err(Error::Config {
            field: "sector".into(),
            message: format!("unknown sector '{s}'"),
        }),
        None => Ok(cfg.sectors.keys().cloned().collect()),
    }
}

fn emit(out: &Path, name: &str, contents: &str) -> Result<(), Error> {
    let path = out.join(name);
    write_atomic(&path, contents)?;
    println!("{}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Error> {
    if let Command::Report { reports } = &cli.command {
        return report(&cli, reports);
    }
    let cfg = load_config(&cli)?;
    let out = cfg.output_dir.clone();
    match &cli.command {
        Command::Run => {
            let manifest = run_pipeline(&cfg)?;
            println!("{}", out.join("manifest.json").display());
            let failed = manifest.failed_sectors();
            for s in &manifest.sectors {
                if let Some(e) = &s.error {
                    eprintln!("sector '{}' failed: {e}", s.sector);
                }
            }
            return Ok(match failed.len() {
                0 => 0,
                n if n == manifest.sectors.len() => EXIT_DATA,
                _ => EXIT_PARTIAL,
            });
        }
        Command::Ingest { sector } => {
            for s in selected_sectors(&cfg, sector.as_deref())? {
                let table = load_sector(&cfg, &s)?;
                emit(
                    &out,
                    &format!("{}/prices.csv", sector_slug(&s)),
                    &table.to_wide_csv(),
                )?;
            }
        }
        Command::Optimize { methods, sector } => {
            let methods: Vec<Method> = if methods.is_empty() {
                cfg.methods.clone()
            } else {
                methods.clone()
            };
            for s in selected_sectors(&cfg, sector.as_deref())? {
                let data = prepare_sector(&cfg, &s)?;
                let fitted = fit_sector(&cfg, &data.train, &methods)?;
                for (m, w) in &fitted.weights {
                    emit(&out, &format!("{}/weights_{m}.csv", sector_slug(&s)), &w.to_csv())?;
                }
            }
        }
        Command::Backtest {
            weights,
            sector,
            label,
        } => {
            let w = WeightVector::from_csv_file(weights)?;
            let sector = match sector {
                Some(s) => selected_sectors(&cfg, Some(s))?.remove(0),
                None => sector_for(&cfg, &w)?,
            };
            let label = label.clone().unwrap_or_else(|| label_from_path(weights));
            let data = prepare_sector(&cfg, &sector)?;
            for r in backtest_sector(&cfg, &sector, &data, &label, &w)? {
                let name = format!("{}/report_{}_{}.json", sector_slug(&sector), label, r.period);
                emit(&out, &name, &r.to_json())?;
            }
        }
        Command::Frontier { sector, samples } => {
            let n = samples.unwrap_or(cfg.mvp_n_samples);
            for s in selected_sectors(&cfg, sector.as_deref())? {
                let data = prepare_sector(&cfg, &s)?;
                let res = fit_mvp(&cfg, &data.train, n)?;
                emit(
                    &out,
                    &format!("{}/frontier_mvp.csv", sector_slug(&s)),
                    &res.samples_csv(),
                )?;
            }
        }
        Command::Dendrogram { sector } => {
            for s in selected_sectors(&cfg, sector.as_deref())? {
                let data = prepare_sector(&cfg, &s)?;
                let dg = sector_dendrogram(&cfg, &data)?;
                emit(
                    &out,
                    &format!("{}/dendrogram.json", sector_slug(&s)),
                    &dg.to_json(),
                )?;
            }
        }
        Command::Report { .. } => unreachable!("handled above"),
    }
    Ok(0)
}

fn sector_for(cfg: &RunConfig, w: &WeightVector) -> Result<String, Error> {
    let mut wanted: Vec<&String> = w.tickers().iter().collect();
    wanted.sort();
    cfg.sectors
        .iter()
        .find(|(_, tickers)| {
            let mut have: Vec<&String> = tickers.iter().collect();
            have.sort();
            have == wanted
        })
        .map(|(name, _)| name.clone())
        .ok_or_else(|| Error::Config {
            field: "sector".into(),
            message: "no sector matches the weights' tickers; pass --sector".into(),
        })
}

fn label_from_path(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom");
    stem.strip_prefix("weights_").unwrap_or(stem).to_string()
}

fn report(cli: &Cli, paths: &[PathBuf]) -> Result<u8, Error> {
    let out = match (&cli.out, &cli.config) {
        (Some(out), _) => out.clone(),
        (None, Some(_)) => load_config(cli)?.output_dir,
        (None, None) => PathBuf::from("."),
    };
    let paths: Vec<PathBuf> = if paths.is_empty() {
        read_manifest(&out.join("manifest.json"))?
            .sectors
            .iter()
            .flat_map(|s| s.reports.iter().map(|r| out.join(r)))
            .collect()
    } else {
        paths.to_vec()
    };
    let reports = paths
        .iter()
        .map(|p| read_report(p))
        .collect::<Result<Vec<_>, _>>()?;
    let tables = summarize_reports(&reports)?;
    let (json, csvs) = write_summaries(&out, &tables)?;
    println!("{}", out.join(json).display());
    for c in csvs {
        println!("{}", out.join(c).display());
    }
    Ok(0)
}
