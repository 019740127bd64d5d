//! Command-line front end. Every subcommand writes its outputs atomically
//! and a `*.manifest.json` next to them recording inputs, digests, the
//! resolved configuration and seeds.
//!
//! Exit status: 0 on success, 2 for bad input (files, records, flags,
//! configuration), 1 for internal failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotate::{
    build_contingency, chi_square, contingency_report, label_dataset, Annotator, ContingencyTable, PatternSet,
};
use crate::corpus::{
    extract_functions, ingest_dataset, prepare_input, to_jsonl, write_atomic, write_dataset, DatasetFormat,
    Demographics, FunctionRecord, InputMode, PreparedInput,
};
use crate::error::{Error, Result};
use crate::experiment::{
    benchmark_mt_vs_st, build_report, compute_metrics, Approach, CellRecord, Experiment, LossMode, ReportRow,
};
use crate::model::{load_checkpoint, save_checkpoint, ModelConfig, TaskMode, TrainConfig};
use crate::tokenizer::{build_model_input, train_bpe, TokenizerModel};

#[derive(Debug, Parser)]
#[command(
    name = "satd-vuln",
    version,
    about = "SATD and vulnerability corpus tooling and classifiers"
)]
pub struct Cli {
    /// TOML file with `[model]` and `[train]` tables; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a JSONL dataset, rewrite it normalised and print demographics.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Extract functions and their leading comments from C sources.
    Extract {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "")]
        project: String,
        #[arg(long, default_value = "")]
        dataset: String,
    },
    /// Label SATD from comments and report the SATD/vulnerability association.
    Annotate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Built-in annotator; only `mat` exists.
        #[arg(long, default_value = "mat", conflicts_with = "patterns")]
        annotator: String,
        /// Pattern file (`w:` word or `s:` substring per line).
        #[arg(long)]
        patterns: Option<PathBuf>,
        /// Also print the chi-square test (needs vulnerability labels).
        #[arg(long)]
        chi2: bool,
    },
    /// Train a BPE tokenizer and encode the dataset.
    Tokenize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        vocab_size: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, default_value = "out")]
        mode: InputMode,
    },
    /// Train approach cells and write checkpoints, histories and rows.
    Train(TrainArgs),
    /// Score a checkpoint on every labeled record of a dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render comparison tables with deltas from row files.
    Compare {
        #[arg(long, required = true, num_args = 1..)]
        rows: Vec<PathBuf>,
        #[arg(long, default_value = "dataset")]
        dataset: String,
        /// Machine-readable per-row records.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Time multi-task against the two single-task runs.
    Bench {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Pearson chi-square on a labeled dataset or on four counts.
    Chi2 {
        #[arg(long, conflicts_with = "counts")]
        input: Option<PathBuf>,
        /// n00,n01,n10,n11 (rows non-SATD/SATD, columns clean/vulnerable).
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<u64>>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// multi, st-satd, st-vuln or all.
    #[arg(long, default_value = "all")]
    pub task_mode: String,
    /// regular, weighted or both.
    #[arg(long, default_value = "regular")]
    pub loss: String,
    #[arg(long, default_value = "out")]
    pub mode: InputMode,
    #[arg(long, default_value = "dataset")]
    pub dataset: String,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args, Default, Clone)]
pub struct Overrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub stratified: bool,
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    fn apply(&mut self, o: &Overrides) {
        let m = &mut self.model;
        let t = &mut self.train;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(t.epochs, o.epochs);
        set!(t.learning_rate, o.learning_rate);
        set!(t.batch_size, o.batch_size);
        set!(m.hidden, o.hidden);
        set!(m.layers, o.layers);
        set!(m.heads, o.heads);
        set!(m.max_len, o.max_len);
        set!(m.vocab_size, o.vocab_size);
        set!(m.dropout, o.dropout);
        if let Some(s) = o.seed {
            t.seed = s;
            m.seed = s;
        }
        t.stratified |= o.stratified;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Reproducibility envelope written next to every artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub config: FileConfig,
    pub seeds: Seeds,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<PathBuf>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Seeds {
    pub model: u64,
    pub train: u64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

struct Run {
    command: &'static str,
    config_path: Option<PathBuf>,
    config: FileConfig,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: f64,
}

impl Run {
    fn new(command: &'static str, cli: &Cli, config: FileConfig) -> Self {
        Run {
            command,
            config_path: cli.config.clone(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: now(),
        }
    }

    fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    fn output(&mut self, p: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(p, bytes)?;
        self.outputs.push(p.to_path_buf());
        Ok(())
    }

    /// Writes `<anchor>.manifest.json` (or `manifest.json` inside a directory anchor).
    fn finish(self, anchor: &Path) -> Result<PathBuf> {
        let path = if anchor.is_dir() {
            anchor.join("manifest.json")
        } else {
            let mut s = anchor.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        };
        let inputs = self
            .inputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.clone(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.into(),
            config_path: self.config_path,
            seeds: Seeds {
                model: self.config.model.seed,
                train: self.config.train.seed,
            },
            config: self.config,
            inputs,
            outputs: self.outputs,
            started_unix: self.started,
            finished_unix: now(),
        };
        write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(path)
    }
}

fn parse_list<T: std::str::FromStr<Err = Error>>(s: &str, all: &[&str], expand: &[T]) -> Result<Vec<T>>
where
    T: Clone,
{
    if all.iter().any(|a| a.eq_ignore_ascii_case(s)) {
        return Ok(expand.to_vec());
    }
    Ok(vec![s.parse()?])
}

fn prepared(records: &[FunctionRecord], mode: InputMode) -> Result<Vec<PreparedInput>> {
    records.iter().map(|r| prepare_input(r, mode)).collect()
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let mut config = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Ingest { input, output } => {
            let mut run = Run::new("ingest", cli, config);
            run.input(input);
            let records = ingest_dataset(input, DatasetFormat::Jsonl)?;
            write_dataset(output, &records)?;
            run.outputs.push(output.clone());
            println!("{}", Demographics::of(&records));
            run.finish(output)?;
        }
        Command::Extract {
            input,
            output,
            project,
            dataset,
        } => {
            let mut run = Run::new("extract", cli, config);
            let mut records = Vec::new();
            for path in input {
                run.input(path);
                let source = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                for mut r in extract_functions(&source)? {
                    r.id = format!("{}:{}", path.display(), r.id);
                    r.project = project.clone();
                    r.dataset = dataset.clone();
                    records.push(r);
                }
            }
            run.output(output, to_jsonl(&records)?.as_bytes())?;
            println!("{} functions extracted", records.len());
            run.finish(output)?;
        }
        Command::Annotate {
            input,
            output,
            annotator,
            patterns,
            chi2,
        } => {
            let mut run = Run::new("annotate", cli, config);
            run.input(input);
            let annotator = match patterns {
                Some(p) => {
                    run.input(p);
                    Annotator::Patterns(PatternSet::load(p)?)
                }
                None if annotator.eq_ignore_ascii_case("mat") => Annotator::Mat,
                None => return Err(Error::Config(format!("unknown annotator {annotator:?}"))),
            };
            let labeled = label_dataset(&ingest_dataset(input, DatasetFormat::Jsonl)?, &annotator)?;
            run.output(output, to_jsonl(&labeled)?.as_bytes())?;
            println!("{}", Demographics::of(&labeled));
            if *chi2 {
                print_chi2(&build_contingency(&labeled)?)?;
            }
            run.finish(output)?;
        }
        Command::Tokenize {
            input,
            out_dir,
            vocab_size,
            budget,
            mode,
        } => {
            let vocab = vocab_size.unwrap_or(config.model.vocab_size);
            let budget = budget.unwrap_or(crate::model::default_budget());
            config.model.vocab_size = vocab;
            let mut run = Run::new("tokenize", cli, config);
            run.input(input);
            let records = ingest_dataset(input, DatasetFormat::Jsonl)?;
            let inputs = prepared(&records, *mode)?;
            let tok = train_bpe(&inputs, vocab)?;
            tok.save(out_dir)?;
            run.outputs.push(out_dir.join("vocab.txt"));
            run.outputs.push(out_dir.join("merges.txt"));
            let encoded: Vec<_> = inputs.iter().map(|p| build_model_input(&tok, p, budget)).collect();
            run.output(&out_dir.join("encoded.jsonl"), to_jsonl(&encoded)?.as_bytes())?;
            println!(
                "vocabulary {} tokens, {} records encoded (budget {budget}, comments {mode})",
                tok.vocab_size(),
                encoded.len()
            );
            run.finish(out_dir)?;
        }
        Command::Train(args) => {
            config.apply(&args.overrides);
            train_cmd(cli, config, args)?;
        }
        Command::Evaluate {
            checkpoint,
            input,
            output,
        } => {
            let mut run = Run::new("evaluate", cli, config);
            run.input(input);
            run.input(checkpoint);
            let (model, meta) = load_checkpoint(checkpoint)?;
            let tok_dir = checkpoint.parent().unwrap_or(Path::new("."));
            let tok = TokenizerModel::load(tok_dir)?;
            let mode: InputMode = meta["input"].as_str().unwrap_or("out").parse()?;
            let budget = meta["budget"]
                .as_u64()
                .map(|b| b as usize)
                .unwrap_or(crate::model::default_budget());
            let records: Vec<FunctionRecord> = ingest_dataset(input, DatasetFormat::Jsonl)?
                .into_iter()
                .filter(|r| r.is_fully_labeled())
                .collect();
            if records.is_empty() {
                return Err(Error::EmptySplit("evaluation"));
            }
            let pairs: Vec<_> = prepared(&records, mode)?
                .iter()
                .map(|p| build_model_input(&tok, p, budget))
                .collect();
            let predictions = model.predict(&pairs)?;
            let mut rows = Vec::new();
            for approach in Approach::of_mode(model.config.task_mode) {
                let task = approach.task();
                let p: Vec<bool> = predictions
                    .iter()
                    .map(|p| p.get(task).expect("active task").label)
                    .collect();
                let l: Vec<bool> = records
                    .iter()
                    .map(|r| match task {
                        crate::model::Task::Satd => r.satd_label,
                        crate::model::Task::Vuln => r.vuln_label,
                    })
                    .map(|l| l.expect("filtered to labeled records"))
                    .collect();
                let m = compute_metrics(&p, &l)?;
                println!("{approach}: P {:.3} R {:.3} F1 {:.3}", m.precision, m.recall, m.f1);
                rows.push((approach, m));
            }
            let json = serde_json::to_string(&rows)?;
            println!("{json}");
            if let Some(out) = output {
                run.output(out, json.as_bytes())?;
                run.finish(out)?;
            }
        }
        Command::Compare { rows, dataset, output } => {
            let mut run = Run::new("compare", cli, config);
            let mut all: Vec<ReportRow> = Vec::new();
            for path in rows {
                run.input(path);
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    all.push(serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                        line: i + 1,
                        message: e.to_string(),
                    })?);
                }
            }
            let report = build_report(dataset, &all)?;
            print!("{}", report.render());
            if let Some(out) = output {
                run.output(out, to_jsonl(&report.records())?.as_bytes())?;
                run.finish(out)?;
            }
        }
        Command::Bench {
            input,
            runs,
            overrides,
            output,
        } => {
            config.apply(overrides);
            let mut run = Run::new("bench", cli, config.clone());
            run.input(input);
            let records = ingest_dataset(input, DatasetFormat::Jsonl)?;
            let mut exp = Experiment::new("bench", &records, config.model, config.train)?;
            let report = benchmark_mt_vs_st(&mut exp, *runs)?;
            println!("{report}");
            let json = serde_json::to_string(&report)?;
            println!("{json}");
            if let Some(out) = output {
                run.output(out, json.as_bytes())?;
                run.finish(out)?;
            }
        }
        Command::Chi2 { input, counts } => {
            let table = match (input, counts) {
                (Some(p), None) => build_contingency(&ingest_dataset(p, DatasetFormat::Jsonl)?)?,
                (None, Some(c)) if c.len() == 4 => ContingencyTable::new(c[0], c[1], c[2], c[3]),
                (None, Some(c)) => return Err(Error::Config(format!("--counts takes 4 values, got {}", c.len()))),
                _ => return Err(Error::Config("give either --input or --counts".into())),
            };
            print_chi2(&table)?;
        }
    }
    Ok(())
}

fn print_chi2(table: &ContingencyTable) -> Result<()> {
    let test = chi_square(table)?;
    print!("{}", contingency_report(table, &test));
    println!("{}", serde_json::to_string(&test)?);
    Ok(())
}

fn train_cmd(cli: &Cli, config: FileConfig, args: &TrainArgs) -> Result<()> {
    let modes = parse_list(
        &args.task_mode,
        &["all"],
        &[TaskMode::Multi, TaskMode::StSatd, TaskMode::StVuln],
    )?;
    let losses = parse_list(&args.loss, &["both", "all"], &[LossMode::Regular, LossMode::Weighted])?;
    let mut run = Run::new("train", cli, config.clone());
    run.input(&args.input);
    let records = ingest_dataset(&args.input, DatasetFormat::Jsonl)?;
    let mut exp = Experiment::new(args.dataset.clone(), &records, config.model, config.train)?;
    if exp.excluded_unlabeled > 0 {
        eprintln!("{} records without both labels excluded", exp.excluded_unlabeled);
    }
    let tok = exp.encoded(args.mode)?.tokenizer.clone();
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    tok.save(&args.out_dir)?;
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for &loss in &losses {
        for &mode in &modes {
            let cell = exp.run_cell(mode, loss, args.mode)?;
            let stem = format!("{mode}-{loss}-{}", args.mode);
            let meta = serde_json::json!({
                "dataset": args.dataset,
                "loss": loss,
                "input": args.mode,
                "budget": exp.budget,
                "seed": cell.seed,
                "best_epoch": cell.history.best_epoch,
            });
            let ckpt = args.out_dir.join(format!("{stem}.ckpt"));
            save_checkpoint(&ckpt, &cell.model, meta)?;
            run.outputs.push(ckpt);
            run.output(
                &args.out_dir.join(format!("{stem}.history.csv")),
                cell.history.to_csv()?.as_bytes(),
            )?;
            for (a, m) in &cell.metrics {
                println!(
                    "{a} {loss}: P {:.3} R {:.3} F1 {:.3} (train {:.1}s, test {:.2}s)",
                    m.precision, m.recall, m.f1, cell.train_seconds, cell.test_seconds
                );
            }
            rows.extend(cell.rows());
            cells.push(CellRecord::from(&cell));
        }
    }
    run.output(&args.out_dir.join("rows.jsonl"), to_jsonl(&rows)?.as_bytes())?;
    run.output(&args.out_dir.join("cells.jsonl"), to_jsonl(&cells)?.as_bytes())?;
    if let Ok(report) = build_report(&args.dataset, &rows) {
        print!("{}", report.render());
    }
    run.finish(&args.out_dir)?;
    Ok(())
}

/// Parses `std::env::args`, runs, and maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
