use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use semred_core::datagen::{self, corpus, LabelPolicy};
use semred_core::metrics::{self, render_csv, render_text};
use semred_core::oracle::{property, CommandSpec, CompositeOracle, ExternalOracle, Oracle};
use semred_core::reducer::{self, Engine, ReduceOptions, RemovalModel};
use semred_core::{parse, FeatureMode, Forest, ForestParams, Grammar, SemanticChecker, SyntaxTree, TrialRecord};

#[derive(Parser)]
#[command(
    name = "semred",
    version,
    about = "Syntax-guided test-case reduction with learned semantic-validity prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Report semantic issues of a program; exits 1 if there are any.
    Check {
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
    },
    /// Print the parse tree as JSON.
    Tree {
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
    },
    /// Reduce a program.
    Reduce {
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        /// Interestingness command; the candidate file is appended as its last argument.
        #[arg(long, conflicts_with = "keep", required_unless_present = "keep")]
        oracle: Option<String>,
        /// In-process oracle instead: semantically valid and this token still present.
        #[arg(long)]
        keep: Option<String>,
        /// External oracle timeout in seconds.
        #[arg(long, default_value_t = 10.0)]
        timeout: f64,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Defaults to the model's mode.
        #[arg(long, requires = "model")]
        mode: Option<FeatureMode>,
        /// Query model and oracle on every trial; the oracle decides.
        #[arg(long, requires = "model")]
        study: bool,
        #[arg(long, default_value_t = 1)]
        passes: usize,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Collect labeled removal trials from a corpus directory of `*.c` files.
    Collect {
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        mode: FeatureMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a random forest on a collected dataset.
    Train {
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "oracle")]
        label: LabelPolicy,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 16)]
        max_depth: usize,
        #[arg(long, default_value_t = 1)]
        min_samples_leaf: usize,
        #[arg(long)]
        features_per_split: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hold out this fraction of the data and report accuracy on it.
        #[arg(long)]
        holdout: Option<f64>,
    },
    /// Summarize one trace.
    Eval {
        #[arg(long)]
        trace: PathBuf,
        /// Require a study trace and report the confusion breakdown.
        #[arg(long)]
        study: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Compare every `*.jsonl` trace in a directory.
    Report {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Write a seeded corpus of mini-C programs.
    GenCorpus {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn grammar(path: Option<&Path>) -> Result<Arc<Grammar>> {
    Ok(Arc::new(match path {
        Some(p) => semred_core::load_grammar(p).with_context(|| format!("loading grammar {}", p.display()))?,
        None => Grammar::mini_c(),
    }))
}

fn read_tree(grammar: &Arc<Grammar>, input: &Path) -> Result<SyntaxTree> {
    let source = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    parse(grammar, &source).with_context(|| format!("parsing {}", input.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Check { grammar: g, input } => {
            let g = grammar(g.as_deref())?;
            let tree = read_tree(&g, &input)?;
            let issues = SemanticChecker::new(&g)?.check(&tree);
            for issue in &issues {
                println!("{issue}");
            }
            Ok(if issues.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Tree { grammar: g, input } => {
            let g = grammar(g.as_deref())?;
            let tree = read_tree(&g, &input)?;
            println!("{}", serde_json::to_string(&tree.to_json())?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Reduce {
            grammar: g,
            input,
            oracle,
            keep,
            timeout,
            model,
            mode,
            study,
            passes,
            trace,
            output,
        } => {
            let g = grammar(g.as_deref())?;
            let tree = read_tree(&g, &input)?;
            let checker = SemanticChecker::new(&g)?;
            let mut oracle: Box<dyn Oracle> = match (oracle, keep) {
                (Some(cmd), _) => {
                    let spec = CommandSpec::parse(&cmd).context("empty oracle command")?;
                    ensure!(timeout > 0.0, "timeout must be positive");
                    Box::new(
                        ExternalOracle::new(spec)
                            .timeout(Duration::from_secs_f64(timeout))
                            .classify_with(checker),
                    )
                }
                (None, Some(token)) => Box::new(CompositeOracle::new(checker, property::contains_token(&token))),
                (None, None) => bail!("either --oracle or --keep is required"),
            };
            let forest = model
                .map(|p| Forest::load(&p, Some(g.hash())).with_context(|| format!("loading model {}", p.display())))
                .transpose()?;
            let engine = match (&forest, study) {
                (None, _) => Engine::Baseline,
                (Some(_), false) => Engine::Guided,
                (Some(_), true) => Engine::Study,
            };
            let options = ReduceOptions {
                passes,
                mode: mode.or(forest.as_ref().map(|f| f.mode)),
            };
            let started = Instant::now();
            let result = reducer::reduce(
                &tree,
                oracle.as_mut(),
                forest.as_ref().map(|f| f as &dyn RemovalModel),
                engine,
                options,
            )?;
            info!(
                "{} -> {} tokens, {} trials, {} oracle queries, {} skipped, {:.2}s",
                tree.token_count(),
                result.tree.token_count(),
                result.trace.len(),
                result.oracle_queries(),
                result.skipped(),
                started.elapsed().as_secs_f64()
            );
            if let Some(path) = trace {
                datagen::write_jsonl(&result.trace, path)?;
            }
            match output {
                Some(path) => std::fs::write(path, result.tree.print())?,
                None => print!("{}", result.tree.print()),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Collect {
            grammar: g,
            corpus,
            mode,
            seed,
            out,
        } => {
            let g = grammar(g.as_deref())?;
            let files = datagen::load_corpus_dir(&corpus).with_context(|| format!("reading {}", corpus.display()))?;
            let data = datagen::collect(&files, &g, mode, seed)?;
            let kept = data.iter().filter(|d| d.label).count();
            eprintln!(
                "{} files, {} datapoints, {:.1}% labeled true",
                files.len(),
                data.len(),
                100.0 * kept as f64 / data.len().max(1) as f64
            );
            datagen::write_jsonl(&data, out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            grammar: g,
            data,
            out,
            label,
            trees,
            max_depth,
            min_samples_leaf,
            features_per_split,
            seed,
            holdout,
        } => {
            let g = grammar(g.as_deref())?;
            let points = datagen::read_dataset(&data, Some(&g))?;
            let (train, test) = match holdout {
                Some(f) => {
                    ensure!(f > 0.0 && f < 1.0, "holdout must lie strictly between 0 and 1");
                    datagen::split(&points, 1.0 - f, seed)
                }
                None => (points, Vec::new()),
            };
            let params = ForestParams {
                n_trees: trees,
                max_depth,
                min_samples_leaf,
                features_per_split,
                seed,
            };
            let forest = Forest::train(&datagen::training_pairs(&train, label), &params, g.hash())?;
            if !test.is_empty() {
                let pairs = datagen::training_pairs(&test, label);
                let mut correct = 0;
                for (x, y) in &pairs {
                    correct += usize::from(forest.predict(x)? == *y);
                }
                eprintln!(
                    "holdout accuracy {:.4} on {} points",
                    correct as f64 / pairs.len() as f64,
                    pairs.len()
                );
            }
            forest.save(&out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { trace, study, format } => {
            let records: Vec<TrialRecord> = datagen::read_jsonl(&trace)?;
            if study {
                metrics::confusion(&records)?;
            }
            let name = trace
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let report = metrics::summarize(&name, &records, None);
            print!("{}", render(&[report], format));
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { traces, format } => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&traces)
                .with_context(|| format!("reading {}", traces.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            paths.retain(|p| p.extension().is_some_and(|e| e == "jsonl"));
            paths.sort();
            let mut reports = Vec::new();
            for path in &paths {
                let records: Vec<TrialRecord> = datagen::read_jsonl(path)?;
                let name = path.file_stem().unwrap().to_string_lossy();
                reports.push(metrics::summarize(&name, &records, None));
            }
            print!("{}", render(&reports, format));
            Ok(ExitCode::SUCCESS)
        }
        Command::GenCorpus { count, seed, out } => {
            std::fs::create_dir_all(&out)?;
            for file in corpus::generate_corpus(count, seed) {
                std::fs::write(out.join(&file.name), file.source)?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn render(reports: &[metrics::Report], format: Format) -> String {
    match format {
        Format::Text => render_text(reports),
        Format::Csv => render_csv(reports),
    }
}
