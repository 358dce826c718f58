use std::path::PathBuf;
use std::process::ExitCode;

use apz_cli::{run_pipeline, run_stage, validate_corpus, CliError, Context, RunConfig, Stage};
use clap::{Parser, Subcommand};

/// Arrangement-puzzle corpora, synthetic or captured activations, and
/// correctness probes, one seeded stage at a time.
///
/// Exit codes: 0 success, 2 usage or schema error, 3 missing input,
/// 4 input digest differs from the manifest, 5 stage failure,
/// 6 validation found failures.
#[derive(Parser, Debug)]
#[command(name = "apz", version)]
struct Cli {
    /// Top-level seed; every stage derives its own from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML file with one table per stage; omitted keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory holding every artifact and the manifest.
    #[arg(long, global = true, default_value = "run")]
    out_dir: PathBuf,
    /// Worker threads for per-puzzle work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate oracle-verified puzzles.
    Gen,
    /// Solve every puzzle, writing reasoning traces.
    Solve,
    /// Synthesize activations over perturbed traces.
    Synth,
    /// Run the external activation extractor and validate what it wrote.
    Extract,
    /// Parse and label every statement in the sidecar texts.
    Label,
    /// Assign puzzles to isomorphism-class-disjoint splits.
    Split,
    /// Train one probe per configured layer set.
    Train,
    /// Evaluate the trained probes.
    Eval,
    /// Per-layer Identical vs Isomorphic correlation profile.
    Abstraction,
    /// Re-check every invariant of a run directory.
    Validate {
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// gen, solve, synth, label, split, train, eval and abstraction in order.
    Run,
    /// Print the effective configuration, defaults included, as TOML.
    Config,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("apz: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn real_main(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| CliError::Stage(e.to_string()))?;
    }
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Context::new(cli.out_dir, cli.seed, config);
    let stage = match cli.command {
        Cmd::Gen => Stage::Gen,
        Cmd::Solve => Stage::Solve,
        Cmd::Synth => Stage::Synth,
        Cmd::Extract => Stage::Extract,
        Cmd::Label => Stage::Label,
        Cmd::Split => Stage::Split,
        Cmd::Train => Stage::Train,
        Cmd::Eval => Stage::Eval,
        Cmd::Abstraction => Stage::Abstraction,
        Cmd::Run => {
            for entry in run_pipeline(&ctx, &Stage::SYNTHETIC)? {
                report(&entry);
            }
            return Ok(());
        }
        Cmd::Config => {
            print!("{}", toml::to_string(&ctx.config).map_err(|e| CliError::Stage(e.to_string()))?);
            return Ok(());
        }
        Cmd::Validate { json } => {
            let report = validate_corpus(&ctx.out_dir, &ctx.config.validate, ctx.seed);
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print!("{report}");
            }
            return match report.failed() {
                0 => Ok(()),
                failed => Err(CliError::Validation { failed }),
            };
        }
    };
    report(&run_stage(&ctx, stage)?);
    Ok(())
}

fn report(entry: &apz_cli::manifest::StageEntry) {
    println!("{:<12} {:>7} ms  {}", entry.stage, entry.elapsed_ms, entry.summary);
}
