use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fsdlab::error::exit;
use fsdlab::{io, pipeline, LabError, Result, RunConfig};
use fsdlab_core::corpus::generate;
use fsdlab_core::eval::{ablate_data_size, report_from_records, run_experiment, shift_study, Shift};
use fsdlab_core::fsd::Composition;
use fsdlab_core::scoring::{ScoreFunctionId, DEFAULT_K_PERCENT};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  other failure (e.g. training diverged)
  2  usage error
  3  missing or unreadable file
  4  invalid configuration
  5  degenerate data (single-class set, empty fine-tune set, empty text)
  6  malformed file (JSONL, CSV, checkpoint)

Errors are reported on stderr as one JSON object: {\"error\", \"message\", \"exit_code\"}.";

/// Pretraining-data detection with fine-tuned score deviation.
#[derive(Parser)]
#[command(name = "fsdlab", version, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Compose {
    Non,
    Mem,
    All,
}

impl From<Compose> for Composition {
    fn from(c: Compose) -> Self {
        match c {
            Compose::Non => Composition::NonMembers,
            Compose::Mem => Composition::MembersOnly,
            Compose::All => Composition::All,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ShiftArg {
    None,
    Deletion,
    Replacement,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus as JSONL.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the base model on the member texts of a corpus.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a copy of the base model on a sampled split (or an explicit
    /// fine-tune file) and write the held-out test split.
    Finetune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Labels of the sampled split used for fine-tuning.
        #[arg(long, value_enum)]
        compose: Option<Compose>,
        /// JSONL whose texts (labels ignored) form the fine-tune set; the
        /// whole dataset is then the test set.
        #[arg(long)]
        finetune_file: Option<PathBuf>,
        /// Where to write the test split [default: test.jsonl next to --out].
        #[arg(long)]
        test_out: Option<PathBuf>,
    },
    /// Score a dataset and write scores.csv.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        tuned: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Take the scoring functions and k from this config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Min-k% percentage.
        #[arg(long)]
        k: Option<f64>,
    },
    /// Compute metrics from scores.csv, or run an experiment end to end.
    Eval {
        #[arg(long, conflicts_with_all = ["config", "model", "dataset"])]
        scores: Option<PathBuf>,
        #[arg(long, requires_all = ["model", "dataset"])]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Comma-separated fine-tune set sizes, e.g. 0,25,50,100.
        #[arg(long, value_delimiter = ',', conflicts_with = "shift")]
        ablate_sizes: Option<Vec<usize>>,
        #[arg(long, value_enum)]
        shift: Option<ShiftArg>,
        #[arg(long, default_value_t = 2023)]
        target_year: u32,
        /// Skip fine-tuning and use the base model as the tuned model.
        #[arg(long)]
        tuned_equals_base: bool,
        #[arg(long)]
        k: Option<f64>,
    },
    /// Whole pipeline (gen, train, finetune, score, eval) into the config's
    /// output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string(value).expect("summary serializes"));
}

fn config_with_k(path: &Path, k: Option<f64>) -> Result<RunConfig> {
    let cfg = RunConfig::load(path)?;
    Ok(match k {
        Some(k) => cfg.with_k(k),
        None => cfg,
    })
}

fn default_functions(k: Option<f64>) -> Result<Vec<ScoreFunctionId>> {
    let k = k.unwrap_or(DEFAULT_K_PERCENT);
    ScoreFunctionId::min_k(k)?;
    Ok(ScoreFunctionId::all(k).to_vec())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Gen { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let ds = generate(&cfg.corpus)?;
            io::save_jsonl(&out, &ds)?;
            print_json(&serde_json::json!({"examples": ds.len(), "out": out}));
        }
        Command::Train { config, corpus, out } => {
            let cfg = RunConfig::load(&config)?;
            let ds = io::load_jsonl(&corpus)?;
            let (model, report) = pipeline::pretrain(&cfg, &ds)?;
            io::save_model(&out, &model)?;
            print_json(&report);
        }
        Command::Finetune { config, model, dataset, out, compose, finetune_file, test_out } => {
            let cfg = RunConfig::load(&config)?;
            let base = io::load_model(&model)?;
            let ds = io::load_jsonl(&dataset)?;
            let x = pipeline::experiment_with(&cfg, compose.map(Into::into));
            let (texts, test) = match finetune_file {
                Some(f) => {
                    let ft = io::load_jsonl(&f)?;
                    (ft.examples().iter().map(|e| e.text.clone()).collect::<Vec<_>>(), ds)
                }
                None => {
                    let s = pipeline::split(&ds, &x)?;
                    (s.finetune, s.test)
                }
            };
            let tuned = pipeline::finetune(&base, &texts, &x)?;
            io::save_model(&out, &tuned)?;
            let test_out = test_out.unwrap_or_else(|| out.with_file_name("test.jsonl"));
            io::save_jsonl(&test_out, &test)?;
            print_json(&serde_json::json!({"finetune": texts.len(), "test": test.len(), "out": out, "test_out": test_out}));
        }
        Command::Score { model, tuned, dataset, out, config, k } => {
            let functions = match &config {
                Some(c) => config_with_k(c, k)?.functions()?,
                None => default_functions(k)?,
            };
            let base = io::load_model(&model)?;
            let tuned = tuned.as_deref().map(io::load_model).transpose()?;
            let ds = io::load_jsonl(&dataset)?;
            let (records, _) = pipeline::score(&base, tuned.as_ref(), &ds, &functions)?;
            io::write_scores(&out, &records)?;
            print_json(&serde_json::json!({"records": records.len(), "out": out}));
        }
        Command::Eval { scores, config, model, dataset, report, csv, ablate_sizes, shift, target_year, tuned_equals_base, k } => {
            if let Some(scores) = scores {
                let (records, functions) = io::read_scores(&scores)?;
                let first: Vec<_> = records.iter().filter(|r| Some(&r.function) == functions.first()).collect();
                let meta = fsdlab_core::eval::ReportMetadata {
                    dataset: scores.display().to_string(),
                    n_test_members: first.iter().filter(|r| r.label.is_member()).count(),
                    n_test_nonmembers: first.iter().filter(|r| !r.label.is_member()).count(),
                    ..Default::default()
                };
                let r = report_from_records(&records, &functions, meta, None)?;
                io::write_json(&report, &r)?;
                if let Some(csv) = csv {
                    io::write_report_csv(&csv, &[], &[(Vec::new(), &r)])?;
                }
                return Ok(());
            }
            let (Some(config), Some(model), Some(dataset)) = (config, model, dataset) else {
                return Err(LabError::Config {
                    path: report,
                    message: "eval needs either --scores or --config, --model and --dataset".into(),
                });
            };
            let cfg = config_with_k(&config, k)?;
            let functions = cfg.functions()?;
            let base = io::load_model(&model)?;
            let ds = io::load_jsonl(&dataset)?;
            let x = &cfg.experiment;
            if let Some(sizes) = ablate_sizes {
                let points = ablate_data_size(&base, &ds, &sizes, &functions, x)?;
                io::write_json(&report, &points)?;
                if let Some(csv) = csv {
                    let rows: Vec<_> = points.iter().map(|p| (vec![p.size.to_string()], &p.report)).collect();
                    io::write_report_csv(&csv, &["size"], &rows)?;
                }
            } else if tuned_equals_base {
                let s = pipeline::split(&ds, x)?;
                let (records, shift) = pipeline::score(&base, Some(&base), &s.test, &functions)?;
                let r = report_from_records(&records, &functions, pipeline::metadata(&s.test, 0, Some(x)), shift)?;
                io::write_json(&report, &r)?;
                if let Some(csv) = csv {
                    io::write_report_csv(&csv, &[], &[(Vec::new(), &r)])?;
                }
            } else if let Some(shift) = shift.filter(|s| *s != ShiftArg::None) {
                let t = match shift {
                    ShiftArg::Deletion => Shift::Deletion,
                    _ => Shift::Replacement { target_year },
                };
                let study = shift_study(&base, &ds, &[Shift::None, t], &functions, x)?;
                let doc: Vec<_> = study.iter().map(|(t, r)| serde_json::json!({"transform": t, "report": r})).collect();
                io::write_json(&report, &doc)?;
                if let Some(csv) = csv {
                    let rows: Vec<_> = study.iter().map(|(t, r)| (vec![shift_name(t)], r)).collect();
                    io::write_report_csv(&csv, &["transform"], &rows)?;
                }
            } else {
                let r = run_experiment(&base, &ds, &functions, x)?;
                io::write_json(&report, &r)?;
                if let Some(csv) = csv {
                    io::write_report_csv(&csv, &[], &[(Vec::new(), &r)])?;
                }
            }
        }
        Command::Run { config, out_dir } => {
            let cfg = RunConfig::load(&config)?;
            let out = out_dir.unwrap_or_else(|| cfg.output_dir.clone());
            let report = pipeline::run(&cfg, &out)?;
            print_json(&serde_json::json!({"out_dir": out, "functions": report.results.len()}));
        }
    }
    Ok(())
}

fn shift_name(s: &Shift) -> String {
    match s {
        Shift::None => "none".into(),
        Shift::Deletion => "deletion".into(),
        Shift::Replacement { target_year } => format!("replacement:{target_year}"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let doc = fsdlab::error::ErrorDoc { error: "usage", message: e.to_string().trim().into(), exit_code: exit::USAGE };
            eprintln!("{}", serde_json::to_string(&doc).expect("error document serializes"));
            return ExitCode::from(exit::USAGE);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
