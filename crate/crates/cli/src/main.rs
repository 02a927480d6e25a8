use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use numlab_core::campaign::{
    all_format_pairs, compare_formats, run_campaign, sweep_configs, viable_format_pairs, CampaignConfig,
    CampaignInputs, Mode, RunReport, OUTPUT_BITS,
};
use numlab_core::io::{read_samples, write_atomic};
use numlab_core::metrics::IcRule;
use numlab_core::sigdigits::{bits_to_digits, SampleSet};
use numlab_core::synth::{generate, BenchmarkFiles, SynthConfig};
use numlab_core::{Error, FloatFormat, OverflowPolicy};

const EXIT_INPUT: u8 = 2;
const EXIT_ALL_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "numlab", version, about = "Numerical-stability campaigns for CNN inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the seeded synthetic benchmark.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthConfig::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = SynthConfig::default().proteins)]
        proteins: usize,
    },
    /// Run one campaign and write its report.
    Run {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        campaign: CampaignArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate percentage metric deltas of reports against a reference.
    Compare {
        /// IEEE reference report.json.
        #[arg(long)]
        reference: PathBuf,
        /// Reports to compare.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the IEEE reference and every (fmt64, fmt32) pair, then compare.
    Sweep {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        campaign: CampaignArgs,
        /// Include pairs with binary16 or bfloat8 in the fmt64 role.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Significant digits per output of a samples file (iteration 0 is the reference).
    Digits {
        samples: PathBuf,
        #[arg(long, default_value_t = OUTPUT_BITS)]
        ceiling: u32,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Directory holding model.json, sequences.fasta, ontology.tsv and truths.tsv.
    #[arg(long)]
    inputs: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    sequences: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    truths: Option<PathBuf>,
}

impl InputArgs {
    fn files(&self) -> anyhow::Result<BenchmarkFiles> {
        let dir = self.inputs.as_deref().map(BenchmarkFiles::in_dir);
        let pick = |given: &Option<PathBuf>, default: Option<&PathBuf>, flag: &str| {
            given
                .clone()
                .or_else(|| default.cloned())
                .ok_or_else(|| Error::Config(format!("--{flag} or --inputs is required")))
        };
        Ok(BenchmarkFiles {
            model: pick(&self.model, dir.as_ref().map(|d| &d.model), "model")?,
            sequences: pick(&self.sequences, dir.as_ref().map(|d| &d.sequences), "sequences")?,
            ontology: pick(&self.ontology, dir.as_ref().map(|d| &d.ontology), "ontology")?,
            truths: pick(&self.truths, dir.as_ref().map(|d| &d.truths), "truths")?,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OverflowArg {
    Signal,
    Saturate,
}

#[derive(Clone, Copy, ValueEnum)]
enum IcArg {
    Frequency,
    ParentConditional,
}

#[derive(Args)]
struct CampaignArgs {
    /// ieee, mca-rr, mca-pb, mca-full or vprec.
    #[arg(long, default_value = "ieee")]
    mode: Mode,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 24)]
    t32: u32,
    #[arg(long, default_value_t = 53)]
    t64: u32,
    /// A format name or a `precision,exponent` pair.
    #[arg(long, default_value = "binary64")]
    fmt64: FloatFormat,
    #[arg(long, default_value = "binary32")]
    fmt32: FloatFormat,
    #[arg(long, value_enum, default_value = "signal")]
    overflow_policy: OverflowArg,
    /// Also perturb exponentials under MCA.
    #[arg(long)]
    perturb_exp: bool,
    #[arg(long, default_value_t = 0.01)]
    thresholds_step: f64,
    #[arg(long, value_enum, default_value = "frequency")]
    ic_rule: IcArg,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl CampaignArgs {
    fn config(&self) -> CampaignConfig {
        CampaignConfig {
            mode: self.mode,
            iterations: self.iterations,
            seed: self.seed,
            t32: self.t32,
            t64: self.t64,
            fmt64: self.fmt64,
            fmt32: self.fmt32,
            overflow_policy: match self.overflow_policy {
                OverflowArg::Signal => OverflowPolicy::Signal,
                OverflowArg::Saturate => OverflowPolicy::SaturateToInfinity,
            },
            perturb_exp: self.perturb_exp,
            thresholds_step: self.thresholds_step,
            ic_rule: match self.ic_rule {
                IcArg::Frequency => IcRule::Frequency,
                IcArg::ParentConditional => IcRule::ParentConditional,
            },
            workers: self.workers,
        }
    }
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Ok,
    AllFailed,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::AllFailed) => {
            eprintln!("error: every perturbed iteration failed");
            ExitCode::from(EXIT_ALL_FAILED)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let input = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_input_error));
            ExitCode::from(if input { EXIT_INPUT } else { 1 })
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Synth { out, seed, proteins } => {
            let b = generate(&SynthConfig {
                seed,
                proteins,
                ..SynthConfig::default()
            })?;
            b.write_to(&out)?;
            info!("wrote benchmark with {} proteins to {}", b.sequences.len(), out.display());
            Ok(Outcome::Ok)
        }
        Command::Run { inputs, campaign, out } => {
            let inputs = CampaignInputs::load(&inputs.files()?)?;
            run_one(&campaign.config(), &inputs, &out)
        }
        Command::Compare { reference, reports, out } => {
            let reference = read_report(&reference)?;
            let runs = reports.iter().map(|p| read_report(p)).collect::<anyhow::Result<Vec<_>>>()?;
            write_deltas(&reference, &runs, &out)?;
            Ok(Outcome::Ok)
        }
        Command::Sweep {
            inputs,
            campaign,
            all,
            out,
        } => {
            let inputs = CampaignInputs::load(&inputs.files()?)?;
            let base = campaign.config();
            let reference = CampaignConfig {
                mode: Mode::Ieee,
                ..base.clone()
            };
            run_one(&reference, &inputs, &out.join("ieee"))?;
            let pairs = if all { all_format_pairs() } else { viable_format_pairs() };
            let mut runs = Vec::new();
            for cfg in sweep_configs(&base, &pairs) {
                let dir = out.join(format!("{}-{}", cfg.fmt64, cfg.fmt32).replace(['(', ')', ','], ""));
                // A crashing format is a result, not an error.
                run_one(&cfg, &inputs, &dir)?;
                runs.push(read_report(&dir.join("report.json"))?);
            }
            write_deltas(&read_report(&out.join("ieee").join("report.json"))?, &runs, &out)?;
            Ok(Outcome::Ok)
        }
        Command::Digits { samples, ceiling } => {
            let mut runs = read_samples(&samples)?;
            let reference = runs
                .remove(&0)
                .ok_or_else(|| Error::Samples("no iteration 0 reference".into()))?;
            let rows: Vec<Vec<f64>> = runs.into_values().map(|m| m.values).collect();
            let set = SampleSet::new(rows, reference.values.clone())?;
            let mut csv = String::from("protein,class,reference,mean,stddev,significant_bits,significant_digits\n");
            for (j, s) in set.column_stats(ceiling).iter().enumerate() {
                let (i, c) = (j / reference.cols(), j % reference.cols());
                let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    reference.proteins[i],
                    reference.class_ids[c],
                    reference.values[j],
                    s.mean,
                    opt(s.stddev),
                    opt(s.significant_bits.map(f64::from)),
                    opt(s.significant_bits.map(|b| bits_to_digits(b as f64))),
                ));
            }
            emit(&csv)?;
            Ok(Outcome::Ok)
        }
    }
}

fn run_one(cfg: &CampaignConfig, inputs: &CampaignInputs, out: &Path) -> anyhow::Result<Outcome> {
    info!("running {} with {} iterations", cfg.label(), cfg.iterations);
    let c = run_campaign(cfg, inputs)?;
    c.write_to(out)?;
    let s = &c.report.status;
    info!(
        "{}: {}/{} iterations completed, report in {}",
        cfg.label(),
        s.iterations_completed,
        s.iterations_requested,
        out.display()
    );
    Ok(if s.iterations_completed == 0 {
        Outcome::AllFailed
    } else {
        Outcome::Ok
    })
}

fn read_report(path: &Path) -> anyhow::Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?)
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_deltas(reference: &RunReport, runs: &[RunReport], out: &Path) -> anyhow::Result<()> {
    let table = compare_formats(reference, runs)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    write_atomic(&out.join("deltas.csv"), table.to_wide_csv().as_bytes())?;
    write_atomic(&out.join("deltas_long.csv"), table.to_long_csv().as_bytes())?;
    let mut summary = String::new();
    for label in table.labels() {
        match table.mean_abs_delta(label) {
            Some(d) => summary.push_str(&format!("{label}\t{d:.4}\n")),
            None => summary.push_str(&format!("{label}\tunavailable\n")),
        }
    }
    emit(&summary)
}
