use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use super::{score_answers, score_forms, AnswerScore, Example, HarnessError, Metrics, PipelineConfig};
use crate::execution::{execute_beam, ExecutionResult};
use crate::gating::{surrogate_targets, train_adapter, Adapter, AdapterExample, GateScores};
use crate::generator::{extract_skeletons, Candidate, CandidateGenerator, Skeleton};
use crate::kg::KnowledgeGraph;
use crate::retrieval::{
    link_entities, mask_question, mention_spans, train_cross_scorer, train_relation_encoder, CrossScorer,
    RelationEncoder, RelationExample, RetrievalBundle, Retriever, TrainReport,
};
use crate::sexpr::{parse, resolve_entity, SExpr};

/// Trained parameters of a pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub encoder: RelationEncoder<f64>,
    pub scorer: Option<CrossScorer<f64>>,
    pub adapter: Adapter<f64>,
    pub skeletons: Vec<Skeleton>,
}

impl Models {
    /// Untrained models for `config`.
    pub fn initial(config: &PipelineConfig) -> Models {
        Models {
            encoder: RelationEncoder::new(config.encoder()),
            scorer: None,
            adapter: Adapter::new(config.adapter()),
            skeletons: Vec::new(),
        }
    }

    pub fn retriever<'g>(&self, graph: &'g KnowledgeGraph, config: &PipelineConfig) -> Retriever<'g, f64> {
        Retriever::new(graph, self.encoder.clone(), self.scorer.clone(), config.retrieval())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainingReport {
    pub encoder: TrainReport,
    pub scorer: TrainReport,
    pub adapter: TrainReport,
    pub skipped: Vec<String>,
}

/// Parsed gold forms; ids of unparseable ones are returned separately.
fn gold_forms(dataset: &[Example]) -> (Vec<(&Example, SExpr)>, Vec<String>) {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for ex in dataset {
        match parse(&ex.gold_sexpr) {
            Ok(f) => ok.push((ex, f)),
            Err(_) => bad.push(ex.id.clone()),
        }
    }
    (ok, bad)
}

/// Relation-retrieval examples: masked question, gold relations, every graph relation as pool.
pub fn relation_examples(dataset: &[Example], graph: &KnowledgeGraph, config: &PipelineConfig) -> Vec<RelationExample> {
    let pool: Vec<String> = graph.relations().map(str::to_string).collect();
    gold_forms(dataset)
        .0
        .into_iter()
        .filter_map(|(ex, f)| {
            let mut gold: Vec<String> = Vec::new();
            for r in f.relations() {
                if graph.has_relation(r) && !gold.iter().any(|g| g == r) {
                    gold.push(r.to_string());
                }
            }
            if gold.is_empty() {
                return None;
            }
            let linked = link_entities(&ex.question, graph, config.entity_k);
            let question = mask_question(&ex.question, &mention_spans(&linked)).ok()?;
            Some(RelationExample {
                question,
                gold,
                pool: pool.clone(),
            })
        })
        .collect()
}

/// Adapter examples over the bundles `retriever` produces.
pub fn adapter_examples(dataset: &[Example], retriever: &Retriever<'_, f64>) -> Vec<AdapterExample> {
    gold_forms(dataset)
        .0
        .into_iter()
        .map(|(ex, f)| {
            let bundle = retriever.retrieve(&ex.question);
            let targets = surrogate_targets(&bundle, &f, retriever.graph);
            AdapterExample {
                question: ex.question.clone(),
                bundle,
                targets,
            }
        })
        .collect()
}

/// Trains the relation encoder, the cross-scorer (when reranking), the adapter, and
/// collects skeletons. Deterministic in `config.seed`.
pub fn train_models(
    config: &PipelineConfig,
    graph: &KnowledgeGraph,
    dataset: &[Example],
) -> Result<(Models, TrainingReport), HarnessError> {
    config.validate()?;
    let mut models = Models::initial(config);
    let (forms, skipped) = gold_forms(dataset);
    let mut report = TrainingReport {
        skipped,
        ..TrainingReport::default()
    };
    models.skeletons = extract_skeletons(forms.iter().map(|(_, f)| f));

    let rel_data = relation_examples(dataset, graph, config);
    if config.encoder_epochs > 0 {
        let (enc, r) = train_relation_encoder(models.encoder, &rel_data, config.encoder_epochs, config.negatives, config.seed)?;
        models.encoder = enc;
        report.encoder = r;
    }
    if config.rerank && config.scorer_epochs > 0 {
        let (sc, r) = train_cross_scorer(
            CrossScorer::zeros(config.d_r),
            &models.encoder,
            &rel_data,
            config.scorer_epochs,
            config.negatives,
            config.seed.wrapping_add(1),
            config.scorer_lr,
        )?;
        models.scorer = Some(sc);
        report.scorer = r;
    }
    if config.adapter_epochs > 0 {
        let retriever = models.retriever(graph, config);
        let data = adapter_examples(dataset, &retriever);
        let (ad, r) = train_adapter(models.adapter, &data, config.adapter_epochs, config.seed.wrapping_add(2))?;
        models.adapter = ad;
        report.adapter = r;
    }
    Ok((models, report))
}

/// Everything recorded about one question.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub id: String,
    pub question: String,
    pub bundle: RetrievalBundle,
    pub gates: GateScores,
    pub beam: Vec<Candidate>,
    pub execution: Option<ExecutionResult>,
    pub gold_sexpr: String,
    pub gold_answers: Vec<String>,
    pub scores: AnswerScore,
    pub em: f64,
    pub bm: f64,
    /// left out of the aggregate (empty gold)
    pub excluded: bool,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineRun {
    pub metrics: Metrics,
    pub traces: Vec<Trace>,
}

/// Answers one question; gold fields are left empty.
pub fn answer_question(
    question: &str,
    config: &PipelineConfig,
    retriever: &Retriever<'_, f64>,
    adapter: &Adapter<f64>,
    generator: &dyn CandidateGenerator,
) -> Trace {
    let mut errors = Vec::new();
    let bundle = retriever.retrieve(question);
    let gates = match adapter.gates(question, &bundle) {
        Ok(g) => g,
        Err(e) => {
            errors.push(format!("gating: {e}"));
            GateScores {
                entities: vec![0.5; bundle.entities.len()],
                relations: vec![0.5; bundle.relations.len()],
                subgraphs: vec![0.5; bundle.subgraphs.len()],
            }
        }
    };
    let beam = generator.candidates(question, &bundle, &gates, config.beam_n);
    let execution = if beam.is_empty() {
        errors.push("generator produced no candidates".into());
        None
    } else {
        Some(execute_beam(&beam, retriever.graph, &config.refinement()))
    };
    Trace {
        id: String::new(),
        question: question.to_string(),
        bundle,
        gates,
        beam,
        execution,
        gold_sexpr: String::new(),
        gold_answers: Vec::new(),
        scores: AnswerScore::default(),
        em: 0.0,
        bm: 0.0,
        excluded: false,
        errors,
    }
}

fn run_one(
    ex: &Example,
    config: &PipelineConfig,
    retriever: &Retriever<'_, f64>,
    adapter: &Adapter<f64>,
    generator: &dyn CandidateGenerator,
) -> Trace {
    let mut t = answer_question(&ex.question, config, retriever, adapter, generator);
    t.id = ex.id.clone();
    t.gold_sexpr = ex.gold_sexpr.clone();
    t.gold_answers = ex.gold_answers.clone();
    let gold: BTreeSet<String> = ex.gold_set();
    if gold.is_empty() {
        t.excluded = true;
        t.errors.push("empty gold answer set".into());
    }
    if let Some(exec) = &t.execution {
        t.scores = score_answers(&exec.answers, &gold);
    }
    match score_forms(&t.beam, &ex.gold_sexpr) {
        Ok((em, bm)) => {
            t.em = em;
            t.bm = bm;
        }
        Err(e) => t.errors.push(format!("gold form: {e}")),
    }
    t
}

/// Scores every question (concurrently; traces keep input order) and aggregates.
pub fn run_pipeline(
    config: &PipelineConfig,
    graph: &KnowledgeGraph,
    dataset: &[Example],
    models: &Models,
    generator: &dyn CandidateGenerator,
) -> PipelineRun {
    let retriever = models.retriever(graph, config);
    let traces: Vec<Trace> = dataset
        .par_iter()
        .map(|ex| run_one(ex, config, &retriever, &models.adapter, generator))
        .collect();
    let rows: Vec<(AnswerScore, f64, f64)> = traces
        .iter()
        .filter(|t| !t.excluded)
        .map(|t| (t.scores, t.em, t.bm))
        .collect();
    let excluded = traces.len() - rows.len();
    PipelineRun {
        metrics: Metrics::aggregate(&rows, excluded),
        traces,
    }
}

/// Gold ids per aspect: resolved entities, relations, and entities heading a document.
pub fn gold_aspects(form: &SExpr, retriever: &Retriever<'_, f64>) -> [BTreeSet<String>; 3] {
    let entities: BTreeSet<String> = form
        .entities()
        .into_iter()
        .filter_map(|e| resolve_entity(e, retriever.graph).ok())
        .map(|id| id.to_string())
        .collect();
    let relations = form.relations().into_iter().map(str::to_string).collect();
    let heads: BTreeSet<&str> = retriever.documents.iter().map(|d| d.head.as_str()).collect();
    let subgraphs = entities.iter().filter(|e| heads.contains(e.as_str())).cloned().collect();
    [entities, relations, subgraphs]
}
