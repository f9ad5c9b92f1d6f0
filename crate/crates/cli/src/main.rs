use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hdc_core::harness::{
    compare, gen_synthetic, run_experiment, write_outputs, Dataset, ExperimentConfig, HarnessError, Method,
};
use hdc_core::label_tree::{GreedyProbe, TreeFormat};
use hdc_core::metrics::confusion_subtree;
use hdc_core::scoring::{Endpoint, RemoteScorer, ReplayScorer, SampleSet, Scorer, DEFAULT_TEMPLATE, DEFAULT_T_MAX};
use hdc_core::{EvalReport, InsertMode, LabelTree, TreeError};

/// Hierarchical diffusion classifier: label trees, experiment runs and reports.
#[derive(Parser)]
#[command(name = "hdc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect or edit a label tree.
    #[command(subcommand)]
    Tree(TreeCommand),
    /// Classify a dataset as described by an experiment config.
    Run(RunArgs),
    /// Compare a baseline report against another run on the same dataset.
    Compare {
        baseline: PathBuf,
        method: PathBuf,
        /// Directory for comparison.json and comparison.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset with a fixed number of images per class.
    GenSynthetic {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Confusion matrix restricted to the leaves under one synset.
    Confusion {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        synset: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TreeCommand {
    /// Check that a tree file is well formed.
    Validate { path: PathBuf },
    /// Print depth, sizes and the branching histogram.
    Stats { path: PathBuf },
    /// Hoist leaves deeper than --max so the tree has at most that depth.
    LimitDepth {
        #[arg(long)]
        max: usize,
        input: PathBuf,
        output: PathBuf,
    },
    /// Add a class, under the root or at the best-matching synset.
    Insert(InsertArgs),
    /// Remove a class and any synsets left without children.
    Remove {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        label: String,
    },
}

#[derive(Args)]
struct InsertArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long)]
    label: String,
    /// Descend by probe error instead of attaching under the root.
    #[arg(long)]
    greedy: bool,
    /// Dataset file with images of the new class.
    #[arg(long, requires = "greedy")]
    probe: Option<PathBuf>,
    /// Replay matrix answering the probe requests.
    #[arg(long, conflicts_with = "endpoint")]
    matrix: Option<PathBuf>,
    /// Remote scorer endpoint answering the probe requests.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 4)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = DEFAULT_TEMPLATE)]
    template: String,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    tree: Option<PathBuf>,
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_tree(tree: &LabelTree, path: &Path) -> anyhow::Result<()> {
    let text = match TreeFormat::from_path(path) {
        TreeFormat::JsonAdjacency => tree.to_json(),
        TreeFormat::IndentedText => tree.to_indented_text(),
    };
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn tree_command(cmd: TreeCommand) -> anyhow::Result<()> {
    match cmd {
        TreeCommand::Validate { path } => {
            let tree = LabelTree::load_path(&path)?;
            emit(&format!(
                "ok: {} depth={} leaves={} nodes={}\n",
                path.display(),
                tree.depth(),
                tree.leaf_count(),
                tree.len()
            ))?;
        }
        TreeCommand::Stats { path } => {
            emit(&format!("{}\n", LabelTree::load_path(&path)?.stats()))?;
        }
        TreeCommand::LimitDepth { max, input, output } => {
            let tree = LabelTree::load_path(&input)?.limit_depth(max)?;
            write_tree(&tree, &output)?;
            emit(&format!("depth={} leaves={}\n", tree.depth(), tree.leaf_count()))?;
        }
        TreeCommand::Remove { input, output, label } => {
            let tree = LabelTree::load_path(&input)?.remove_class(&label)?;
            write_tree(&tree, &output)?;
            emit(&format!("depth={} leaves={}\n", tree.depth(), tree.leaf_count()))?;
        }
        TreeCommand::Insert(args) => {
            let tree = LabelTree::load_path(&args.input)?;
            let updated = if args.greedy {
                let probe_path = args.probe.as_ref().context("--greedy needs --probe")?;
                let images = Dataset::load(probe_path)?.images;
                let scorer: Box<dyn Scorer> = match (&args.matrix, &args.endpoint) {
                    (Some(m), _) => Box::new(ReplayScorer::load(m)?),
                    (None, Some(e)) => Box::new(RemoteScorer::connect(&Endpoint::parse(e)?)?),
                    (None, None) => anyhow::bail!(HarnessError::Config(
                        "--greedy needs --matrix or --endpoint".into()
                    )),
                };
                let samples = SampleSet::build(args.seed, args.samples, DEFAULT_T_MAX)?;
                let probe = GreedyProbe {
                    scorer: &scorer,
                    images: &images,
                    samples: &samples,
                    template: &args.template,
                };
                tree.insert_class(&args.label, InsertMode::Greedy, Some(&probe))?
            } else {
                tree.insert_class(&args.label, InsertMode::UnderRoot, None)?
            };
            let leaf = updated.leaf_by_label(&args.label).expect("inserted");
            let parent = updated.node(leaf)?.parent.expect("leaf has a parent");
            write_tree(&updated, &args.output)?;
            emit(&format!("inserted {:?} under {:?}\n", args.label, updated.label(parent)))?;
        }
    }
    Ok(())
}

fn run_command(args: RunArgs) -> anyhow::Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(m) = args.method {
        config.method = m;
    }
    if let Some(dir) = args.output_dir {
        config.output_dir = Some(dir);
    }
    if let Some(w) = args.workers {
        config.workers = Some(w);
    }
    if let Some(t) = args.tree {
        config.tree_path = t;
    }
    config.validate()?;
    let output_dir = config
        .output_dir
        .clone()
        .ok_or_else(|| HarnessError::Config("no output_dir in config or on the command line".into()))?;
    let output = run_experiment(&config)?;
    write_outputs(&output_dir, &output)?;
    emit(&output.report.summary_csv())?;
    log::info!("wrote {} in {:.2?}", output_dir.display(), output.elapsed);
    Ok(())
}

fn load_report(path: &Path) -> anyhow::Result<EvalReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| {
        HarnessError::Json {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
        .into()
    })
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Tree(cmd) => tree_command(cmd),
        Command::Run(args) => run_command(args),
        Command::Compare { baseline, method, out } => {
            let comparison = compare(&load_report(&baseline)?, &load_report(&method)?)?;
            emit(&comparison.to_table())?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let json = serde_json::to_string_pretty(&comparison)?;
                std::fs::write(dir.join("comparison.json"), json + "\n")?;
                std::fs::write(dir.join("comparison.csv"), comparison.to_csv())?;
            }
            Ok(())
        }
        Command::GenSynthetic {
            tree,
            per_class,
            seed,
            out,
        } => {
            let tree = LabelTree::load_path(&tree)?;
            let dataset = gen_synthetic(&tree, per_class, seed)?;
            match out {
                Some(path) => {
                    dataset.save(&path)?;
                    eprintln!("{} images, hash {}", dataset.images.len(), dataset.content_hash());
                }
                None => emit(&dataset.to_json())?,
            }
            Ok(())
        }
        Command::Confusion {
            report,
            tree,
            synset,
            out,
        } => {
            let report = load_report(&report)?;
            let tree = Arc::new(LabelTree::load_path(&tree)?);
            let node = tree
                .nodes_with_label(&synset)
                .next()
                .ok_or_else(|| TreeError::UnknownLabel(synset.clone()))?;
            let matrix = confusion_subtree(&report.labelled_pairs(), &tree, node)?;
            match out {
                Some(path) => std::fs::write(&path, matrix.to_csv())?,
                None => emit(&matrix.to_csv())?,
            }
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(h) = err.downcast_ref::<HarnessError>() {
        return h.exit_code() as u8;
    }
    if let Some(hdc_core::scoring::ScoreError::Config(_)) = err.downcast_ref() {
        return 1;
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
