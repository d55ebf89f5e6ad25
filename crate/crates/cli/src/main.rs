//! Command-line driver: synthetic-language generation, statistical
//! validation suites, borrowing-rate sweeps and tree comparison.
//!
//! Exit codes: 0 ok, 1 usage or I/O problem, 2 configuration error,
//! 3 validation failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rand::{Rng as _, SeedableRng};

use langsim_core::borrowing::{
    derive_sd_rates, evolve_tree_gtr_borrowing, evolve_tree_sd_borrowing,
    gtr_rate_for_switch_probability,
};
use langsim_core::config::parse_config;
use langsim_core::io::{
    alignment_to_xml, iso8601_now, parse_tree_file, trees_to_newick_file, write_suite_report,
};
use langsim_core::metrics::{height_difference, quartet_distance};
use langsim_core::run::{model_tag, run_config, GenerateOptions};
use langsim_core::seq::{TraitRegistry, TraitSequence};
use langsim_core::validation::{run_suite, SuiteOptions, SUITE_IDS};
use langsim_core::{AncestorBound, EmptyTraitGuard, Scalar, Tree};

#[derive(Parser)]
#[command(
    name = "langsim",
    about = "Binary-trait language evolution simulator with borrowing and missing data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured simulation and write alignment XML.
    Generate(GenerateArgs),
    /// Run statistical validation suites and write CSV reports.
    Validate(ValidateArgs),
    /// Generate trees and alignments over a grid of borrowing rates.
    Sweep(SweepArgs),
    /// Compare trees: quartet distance and normalized height difference.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Configuration XML file.
    config: PathBuf,
    /// Number of contiguous meaning classes over the root columns
    /// (0 = one class per column).
    meaning_classes: usize,
    /// Output path; standard output when omitted. With several replicates
    /// the replicate index lands before the extension.
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
}

#[derive(Args)]
struct ValidateArgs {
    /// Suite id (fig2, fig3, fig4, fig5, fig6, fig8) or "all".
    #[arg(long, default_value = "all")]
    suite: String,
    /// Replicates per suite.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for histogram and fit-report CSVs.
    #[arg(long, default_value = "validation-out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Substitution model: gtr or sd.
    #[arg(long)]
    model: String,
    /// Comma-separated borrowing rates.
    #[arg(long, value_delimiter = ',')]
    rates: Vec<f64>,
    /// Trees (and alignments) per rate.
    #[arg(long)]
    trees: usize,
    #[arg(long, default_value_t = 80)]
    leaves: usize,
    #[arg(long = "yule-rate", default_value_t = 0.00055)]
    yule_rate: f64,
    #[arg(long = "root-length", default_value_t = 2449)]
    root_length: usize,
    /// Per-1000-year state-change probability calibrating the model rates.
    #[arg(long, default_value_t = 0.1)]
    loss: f64,
    /// Local borrowing window; 0 means unbounded (global borrowing).
    #[arg(long = "borrow-z", default_value_t = 0.0)]
    borrow_z: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "sweep-out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Reference tree file (first tree of the file).
    #[arg(long = "true-tree")]
    true_tree: PathBuf,
    /// Tree files to compare against the reference, one Newick per line.
    #[arg(long, num_args = 1.., required = true)]
    others: Vec<PathBuf>,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            // Help and version requests are not usage errors.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Generate(args) => generate(args),
        Command::Validate(args) => validate(args),
        Command::Sweep(args) => sweep(args),
        Command::Compare(args) => compare(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn replicate_path(base: &Path, index: usize, total: usize) -> PathBuf {
    if total == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("xml");
    base.with_file_name(format!("{stem}.{index}.{ext}"))
}

fn generate(args: GenerateArgs) -> anyhow::Result<ExitCode> {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(text) => text,
        Err(err) => {
            eprintln!(
                "error: cannot read config '{}': {err}",
                args.config.display()
            );
            return Ok(ExitCode::from(1));
        }
    };
    let config = match parse_config::<Scalar>(&text) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("config error: {err}");
            return Ok(ExitCode::from(2));
        }
    };
    let opts = GenerateOptions {
        meaning_classes: args.meaning_classes,
        replicates: args.replicates,
        seed: args.seed,
    };
    let replicates = match run_config(&config, &opts) {
        Ok(replicates) => replicates,
        Err(err) => {
            eprintln!("config error: {err}");
            return Ok(ExitCode::from(2));
        }
    };
    let tag = model_tag(&config.model);
    let stamp = iso8601_now();
    for rep in &replicates {
        let leaves = rep.alignment.leaves_only();
        let xml = alignment_to_xml(&leaves, tag, &stamp);
        match &args.output {
            Some(base) => {
                let path = replicate_path(base, rep.index, replicates.len());
                std::fs::write(&path, xml)
                    .with_context(|| format!("writing '{}'", path.display()))?;
            }
            None => {
                std::io::stdout().write_all(xml.as_bytes())?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(args: ValidateArgs) -> anyhow::Result<ExitCode> {
    let ids: Vec<&str> = if args.suite == "all" {
        SUITE_IDS.to_vec()
    } else if SUITE_IDS.contains(&args.suite.as_str()) {
        vec![args.suite.as_str()]
    } else {
        eprintln!(
            "error: unknown suite '{}'; expected one of {} or all",
            args.suite,
            SUITE_IDS.join(", ")
        );
        return Ok(ExitCode::from(1));
    };
    let opts = SuiteOptions {
        samples: args.n,
        seed: args.seed,
        alpha: 0.01,
    };
    let mut all_pass = true;
    for id in ids {
        let report = run_suite::<Scalar>(id, &opts)?;
        write_suite_report(&report, &args.out)?;
        for fit in &report.fits {
            println!(
                "{id} {}: statistic {:.4} critical {:.4} -> {}",
                fit.name,
                fit.outcome.statistic,
                fit.outcome.critical,
                if fit.outcome.pass { "pass" } else { "FAIL" }
            );
        }
        all_pass &= report.passed();
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

enum SweepModel {
    Gtr { mutation: Scalar },
    Sd { birth: Scalar, death: Scalar },
}

fn sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    let model = match args.model.as_str() {
        "gtr" => SweepModel::Gtr {
            mutation: gtr_rate_for_switch_probability(args.loss)
                .map_err(|e| anyhow!("bad --loss: {e}"))?,
        },
        "sd" => {
            let (birth, death) = derive_sd_rates(args.loss, args.root_length)
                .map_err(|e| anyhow!("bad --loss or --root-length: {e}"))?;
            SweepModel::Sd { birth, death }
        }
        other => {
            eprintln!("error: unknown model '{other}', expected gtr or sd");
            return Ok(ExitCode::from(1));
        }
    };
    let reach = if args.borrow_z == 0.0 {
        AncestorBound::Unbounded
    } else {
        AncestorBound::Within(args.borrow_z)
    };
    let stamp = iso8601_now();
    let mut seeder = rand_chacha::ChaCha12Rng::seed_from_u64(args.seed);
    for &rate in &args.rates {
        let dir = args.out.join(format!("rate_{rate}"));
        std::fs::create_dir_all(&dir)?;
        for index in 0..args.trees {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seeder.random());
            let tree: Tree = Tree::yule(args.leaves, args.yule_rate, &mut rng)?;
            let root = TraitSequence::all_present(args.root_length);
            let mut registry = TraitRegistry::per_column(args.root_length);
            let (alignment, tag) = match &model {
                SweepModel::Gtr { mutation } => {
                    let params = langsim_core::GtrBorrowingParams {
                        mutation_rate: *mutation,
                        borrow_rate: rate,
                        reach,
                        guard: EmptyTraitGuard::Off,
                        audit_every: 0,
                    };
                    let align = evolve_tree_gtr_borrowing(
                        &tree,
                        &root,
                        &params,
                        &mut registry,
                        &mut rng,
                        None,
                    )?;
                    (align, "GTR")
                }
                SweepModel::Sd { birth, death } => {
                    let params = langsim_core::SdBorrowingParams {
                        birth_rate: *birth,
                        death_rate: *death,
                        borrow_rate: rate,
                        reach,
                        guard: EmptyTraitGuard::Off,
                        audit_every: 0,
                    };
                    let align = evolve_tree_sd_borrowing(
                        &tree,
                        &root,
                        &params,
                        &mut registry,
                        &mut rng,
                        None,
                    )?;
                    (align, "SD")
                }
            };
            std::fs::write(
                dir.join(format!("tree_{index:03}.nwk")),
                trees_to_newick_file(std::slice::from_ref(&tree)),
            )?;
            std::fs::write(
                dir.join(format!("alignment_{index:03}.xml")),
                alignment_to_xml(&alignment.leaves_only(), tag, &stamp),
            )?;
        }
        println!("rate {rate}: {} trees in {}", args.trees, dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn compare(args: CompareArgs) -> anyhow::Result<ExitCode> {
    let reference_text = std::fs::read_to_string(&args.true_tree)
        .with_context(|| format!("reading '{}'", args.true_tree.display()))?;
    let reference: Tree = parse_tree_file(&reference_text)?
        .into_iter()
        .next()
        .ok_or_else(|| anyhow!("'{}' holds no tree", args.true_tree.display()))?;
    let mut csv = String::from("file,index,quartet_distance,height_difference\n");
    for path in &args.others {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading '{}'", path.display()))?;
        let trees: Vec<Tree> = parse_tree_file(&text)?;
        if trees.is_empty() {
            return Err(anyhow!("'{}' holds no tree", path.display()));
        }
        for (index, tree) in trees.iter().enumerate() {
            let qd = quartet_distance(&reference, tree)?;
            let hd = height_difference(&reference, tree)?;
            csv.push_str(&format!("{},{index},{qd},{hd}\n", path.display()));
        }
    }
    match &args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}
