use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kgqa_core::checkpoint;
use kgqa_core::generator::{CandidateGenerator, OracleGenerator, SkeletonGenerator};
use kgqa_core::harness::{
    answer_question, gate_csv, gate_rows, load_dataset, load_graph_dir, recall_csv, recall_curve, run_pipeline,
    train_models, Example, HarnessError, Models, PipelineConfig,
};
use kgqa_core::kg::KnowledgeGraph;

#[derive(Parser)]
#[command(name = "kgqa", version, about = "Question answering over a triple store with gated multi-aspect retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// directory with triples.tsv, aliases.tsv, optional labels.tsv and questions.jsonl
    #[arg(long)]
    data: PathBuf,
    /// key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// single config override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// trained models written by `train`; without it models are trained in place
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// dataset JSONL replacing <data>/questions.jsonl
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorKind {
    Skeleton,
    Oracle,
}

#[derive(Subcommand)]
enum Command {
    /// Load the graph, build indexes and print the ingest report
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_words: usize,
    },
    /// Train the relation encoder, cross-scorer and adapter; write a checkpoint
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer one question and print its trace as JSON
    Ask {
        #[command(flatten)]
        common: Common,
        question: String,
    },
    /// Run the dataset; write metrics JSON and trace JSONL
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "skeleton")]
        generator: GeneratorKind,
        #[arg(long, default_value = "metrics.json")]
        metrics: PathBuf,
        #[arg(long, default_value = "traces.jsonl")]
        traces: PathBuf,
    },
    /// Mean recall@k per aspect as CSV
    RecallCurve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64,100")]
        ks: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gate scores of one question's retrieved items as CSV
    DumpGates {
        #[command(flatten)]
        common: Common,
        /// question text; alternatively --id picks one from the dataset
        question: Option<String>,
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn io_err(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), HarnessError> {
    match out {
        Some(p) => write(p, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| HarnessError::Io(e.to_string())),
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

struct Session {
    config: PipelineConfig,
    graph: KnowledgeGraph,
    dataset: Vec<Example>,
}

impl Session {
    fn open(c: &Common) -> Result<(Session, Option<Models>), HarnessError> {
        let (mut config, models) = match &c.checkpoint {
            Some(p) => {
                let (m, cfg) = checkpoint::load(&read(p)?)?;
                (cfg, Some(m))
            }
            None => (PipelineConfig::default(), None),
        };
        if let Some(p) = &c.config {
            config.apply_text(&read(p)?)?;
        }
        for kv in &c.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("`{kv}`: expected KEY=VALUE")))?;
            config.set(k.trim(), v)?;
        }
        config.validate()?;
        let (graph, _) = load_graph_dir(&c.data)?;
        let path = c.dataset.clone().unwrap_or_else(|| c.data.join("questions.jsonl"));
        let dataset = if path.exists() || c.dataset.is_some() {
            load_dataset(fs::File::open(&path).map_err(|e| io_err(&path, e))?)?
        } else {
            Vec::new()
        };
        Ok((Session { config, graph, dataset }, models))
    }

    fn models(c: &Common) -> Result<(Session, Models), HarnessError> {
        let (s, models) = Session::open(c)?;
        let models = match models {
            Some(m) => m,
            None => train_models(&s.config, &s.graph, &s.dataset)?.0,
        };
        Ok((s, models))
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Ingest { data, max_words } => {
            let (g, report) = load_graph_dir(&data)?;
            let docs = kgqa_core::kg::linearize_documents(&g, max_words);
            let mut report = serde_json::to_value(report).expect("serializable");
            report["documents"] = docs.len().into();
            emit(None, &format!("{}\n", serde_json::to_string_pretty(&report).expect("json")))
        }
        Command::Train { common, out } => {
            let (s, _) = Session::open(&common)?;
            let (models, report) = train_models(&s.config, &s.graph, &s.dataset)?;
            write(&out, &checkpoint::save(&models, &s.config))?;
            emit(None, &format!("{}\n", json(&report)))
        }
        Command::Ask { common, question } => {
            let (s, models) = Session::models(&common)?;
            let retriever = models.retriever(&s.graph, &s.config);
            let generator = SkeletonGenerator {
                skeletons: models.skeletons.clone(),
            };
            let t = answer_question(&question, &s.config, &retriever, &models.adapter, &generator);
            emit(None, &format!("{}\n", json(&t)))
        }
        Command::Eval {
            common,
            generator,
            metrics,
            traces,
        } => {
            let (s, models) = Session::models(&common)?;
            let generator: Box<dyn CandidateGenerator> = match generator {
                GeneratorKind::Skeleton => Box::new(SkeletonGenerator {
                    skeletons: models.skeletons.clone(),
                }),
                GeneratorKind::Oracle => Box::new(OracleGenerator {
                    gold: s
                        .dataset
                        .iter()
                        .map(|e| (e.question.clone(), e.gold_sexpr.clone()))
                        .collect(),
                }),
            };
            let run = run_pipeline(&s.config, &s.graph, &s.dataset, &models, generator.as_ref());
            let mut lines = String::new();
            for t in &run.traces {
                lines.push_str(&json(t));
                lines.push('\n');
            }
            write(&traces, &lines)?;
            let m = format!("{}\n", serde_json::to_string_pretty(&run.metrics).expect("json"));
            write(&metrics, &m)?;
            emit(None, &m)
        }
        Command::RecallCurve { common, ks, out } => {
            let (s, models) = Session::models(&common)?;
            let rows = recall_curve(&s.config, &s.graph, &s.dataset, &models, &ks)?;
            emit(out.as_deref(), &recall_csv(&rows)?)
        }
        Command::DumpGates {
            common,
            question,
            id,
            out,
        } => {
            let (s, models) = Session::models(&common)?;
            let question = match (question, id) {
                (Some(q), None) => q,
                (None, Some(id)) => s
                    .dataset
                    .iter()
                    .find(|e| e.id == id)
                    .map(|e| e.question.clone())
                    .ok_or_else(|| HarnessError::Config(format!("no question with id `{id}`")))?,
                _ => return Err(HarnessError::Config("give either a question or --id".into())),
            };
            let retriever = models.retriever(&s.graph, &s.config);
            let generator = SkeletonGenerator::default();
            let t = answer_question(&question, &s.config, &retriever, &models.adapter, &generator);
            emit(out.as_deref(), &gate_csv(&gate_rows(&t))?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
