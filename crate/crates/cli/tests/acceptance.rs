//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use common::checks::{bundle_of, case_study, full_stack_error, gate_violations, primitive_errors, shape_violations, STACK_QUESTION};
use common::oracle::brute_eval;
use common::random::random_graph;
use kgqa_core::execution::{execute_beam, refine, RefinementConfig};
use kgqa_core::gating::{Adapter, AdapterConfig};
use kgqa_core::generator::{oracle_generate, OracleGenerator};
use kgqa_core::harness::{adapter_examples, recall_curve, run_pipeline, train_models, Models, PipelineConfig, ASPECTS};
use kgqa_core::kg::{load_graph, KnowledgeGraph};
use kgqa_core::sexpr::{compile_sparql, evaluate, normalize_sparql, parse};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const T_KS: [usize; 7] = [1, 4, 8, 16, 32, 64, 100];

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok { Ok(()) } else { Err(msg.into()) }
}

fn evaluator_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut cases, mut mismatches, mut max_triples) = (0, 0, 0);
    while cases < 1000 {
        let (g, schema) = random_graph(&mut rng, 300);
        max_triples = max_triples.max(g.len());
        for _ in 0..25 {
            let e = schema.gen_root(&mut rng, 3);
            ensure(e.depth() <= 3, format!("generated depth {}", e.depth()))?;
            if evaluate(&e, &g).map_err(|_| ()) != brute_eval(&e, &g) {
                mismatches += 1;
            }
            cases += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(mismatches == 0, format!("{mismatches}/{cases} mismatches"))?;
    ensure(max_triples <= 300 && secs < 60.0, format!("{max_triples} triples, {secs:.2} s"))?;
    Ok(format!("{cases} forms agree, graphs up to {max_triples} triples, {secs:.2} s"))
}

fn sparql_golden() -> Outcome {
    let dir = common::fixtures_dir();
    let want = std::fs::read_to_string(dir.join("oceania.sparql")).map_err(|e| e.to_string())?;
    let f = std::fs::File::open(dir.join("oceania.tsv")).map_err(|e| e.to_string())?;
    let (g, _) = load_graph(f, &b""[..]).map_err(|e| e.to_string())?;
    let form = parse("(AND (JOIN base.biblioness.bibs_location.loc_type \"Country\") (JOIN (R location.location.contains) m.05nrg))")
        .map_err(|e| e.to_string())?;
    let got = normalize_sparql(&compile_sparql(&form, &g).map_err(|e| e.to_string())?);
    ensure(got == normalize_sparql(&want), format!("listing differs:\n{got}"))?;
    for needle in ["PREFIX ns:", "SELECT DISTINCT ?x", "FILTER (?x != ns:m.05nrg)", "str(?sk0) = \"Country\""] {
        ensure(got.contains(needle), format!("missing `{needle}`"))?;
    }
    common::sparql_grammar::check_sparql(&got)?;
    Ok("byte-equal to the reference listing after normalization".into())
}

fn gradients() -> Outcome {
    let stack = full_stack_error();
    let mut worst = ("", 0.0f64);
    for seed in 0..100 {
        for (name, err) in primitive_errors(seed) {
            if err > worst.1 {
                worst = (name, err);
            }
        }
    }
    ensure(stack < 1e-4, format!("full stack {stack:e}"))?;
    ensure(worst.1 < 1e-6, format!("primitive {} {:e}", worst.0, worst.1))?;
    Ok(format!("full stack {stack:.2e}, worst primitive {} {:.2e} over 100 seeds", worst.0, worst.1))
}

fn shape_laws() -> Outcome {
    let bad: Vec<String> = T_KS.iter().flat_map(|&t| shape_violations(t)).collect();
    ensure(bad.is_empty(), bad.join("; "))?;
    Ok(format!("t_k in {T_KS:?}"))
}

fn gate_invariants(trained: &Models, graph: &KnowledgeGraph, config: &PipelineConfig) -> Outcome {
    let fresh: Adapter<f64> = Adapter::new(AdapterConfig::default());
    let mut bad: Vec<String> = T_KS.iter().flat_map(|&t| gate_violations(&fresh, STACK_QUESTION, &bundle_of(t))).collect();
    let retriever = trained.retriever(graph, config);
    let (_, data) = common::toy();
    for ex in &data {
        bad.extend(gate_violations(&trained.adapter, &ex.question, &retriever.retrieve(&ex.question)));
    }
    ensure(bad.is_empty(), bad.join("; "))?;
    Ok(format!("{} fresh bundles and {} trained toy bundles", T_KS.len(), data.len()))
}

fn recall_monotone(models: &Models, graph: &KnowledgeGraph, config: &PipelineConfig) -> Outcome {
    let (_, data) = common::toy();
    let ks = [4, 8, 16, 32, 64, 100];
    let rows = recall_curve(config, graph, &data, models, &ks).map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for aspect in ASPECTS {
        let r: Vec<f64> = rows.iter().filter(|r| r.aspect == aspect).map(|r| r.recall).collect();
        ensure(r.windows(2).all(|w| w[0] <= w[1]), format!("{aspect} not monotone: {r:?}"))?;
        summary.push(format!("{aspect} {:.3}..{:.3}", r[0], r[r.len() - 1]));
    }
    let full = rows.iter().find(|r| r.aspect == "entity" && r.k == 100).map(|r| r.recall);
    ensure(full == Some(1.0), format!("entity recall@100 {full:?}"))?;
    Ok(summary.join(", "))
}

fn refinement_repair() -> Outcome {
    let (g, _) = common::toy();
    let f = parse("(JOIN (R people.person.place_of_birth) Rihana)").map_err(|e| e.to_string())?;
    let cfg = RefinementConfig::default();
    let top = refine(&f, &g, &cfg).into_iter().next().ok_or("no refinement")?;
    let id = top.entities()[0].text().to_string();
    ensure(g.entity(&id).map(|e| g.label(e)) == Some("Rihanna"), format!("repaired to {id}"))?;
    let beam = oracle_generate(&f.to_string()).map_err(|e| e.to_string())?;
    let out = execute_beam(&beam, &g, &cfg);
    ensure(out.executable && !out.answers.is_empty(), "repaired form has no answer")?;
    Ok(format!("Rihana -> {id}, answers {:?}", out.answers.canonical()))
}

fn oracle_sanity(models: &Models, graph: &KnowledgeGraph, config: &PipelineConfig) -> Outcome {
    let (_, data) = common::toy();
    let generator = OracleGenerator {
        gold: data.iter().map(|e| (e.question.clone(), e.gold_sexpr.clone())).collect(),
    };
    let start = Instant::now();
    let m = run_pipeline(config, graph, &data, models, &generator).metrics;
    let secs = start.elapsed().as_secs_f64();
    ensure(m.questions == 50, format!("{} questions", m.questions))?;
    ensure(m.f1 == 1.0 && m.hits1 == 1.0 && m.acc == 1.0, format!("{m:?}"))?;
    ensure(secs < 30.0, format!("{secs:.2} s"))?;
    Ok(format!("F1 = Hits@1 = Acc = 1.0 on {} questions, {secs:.2} s", m.questions))
}

fn case_study_gates(models: &Models, graph: &KnowledgeGraph, config: &PipelineConfig) -> Outcome {
    let (_, data) = common::toy();
    let retriever = models.retriever(graph, config);
    let cs = case_study(&models.adapter, &adapter_examples(&data, &retriever));
    ensure(cs.gold_relation_gate > cs.other_relation_gate, format!("{cs:?}"))?;
    ensure(cs.top_entity_hits * 5 >= cs.questions * 4, format!("{cs:?}"))?;
    Ok(format!(
        "gold relation gate {:.4} > other {:.4}; gold entity on top {}/{}",
        cs.gold_relation_gate, cs.other_relation_gate, cs.top_entity_hits, cs.questions
    ))
}

fn eval_determinism() -> Outcome {
    let data = common::toy_dir();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in 0..2 {
        let m = tmp.path().join(format!("metrics{run}.json"));
        let t = tmp.path().join(format!("traces{run}.jsonl"));
        let status = Command::new(env!("CARGO_BIN_EXE_kgqa"))
            .arg("eval")
            .arg("--data")
            .arg(&data)
            .arg("--metrics")
            .arg(&m)
            .arg("--traces")
            .arg(&t)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), String::from_utf8_lossy(&status.stderr).to_string())?;
        let read = |p: &std::path::Path| std::fs::read(p).map_err(|e| e.to_string());
        outputs.push((read(&m)?, read(&t)?));
    }
    ensure(outputs[0].0 == outputs[1].0, "metrics differ")?;
    ensure(outputs[0].1 == outputs[1].1, "traces differ")?;
    Ok(format!("metrics {} bytes, traces {} bytes identical", outputs[0].0.len(), outputs[0].1.len()))
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match &r {
        Ok(detail) => println!("PASS {n:>2} {name}: {detail} [{secs:.1}s]"),
        Err(why) => println!("FAIL {n:>2} {name}: {why} [{secs:.1}s]"),
    }
    r.is_ok()
}

fn main() {
    let config = PipelineConfig::default();
    let (graph, data) = common::toy();
    let models = match train_models(&config, &graph, &data) {
        Ok((m, _)) => Some(m),
        Err(e) => {
            println!("training failed: {e}");
            None
        }
    };
    let trained = |f: fn(&Models, &KnowledgeGraph, &PipelineConfig) -> Outcome| -> Outcome {
        match &models {
            Some(m) => f(m, &graph, &config),
            None => Err("no trained models".into()),
        }
    };
    let results = [
        run(1, "evaluator-oracle equivalence", evaluator_oracle),
        run(2, "SPARQL golden listing", sparql_golden),
        run(3, "gradient verification", gradients),
        run(4, "shape laws", shape_laws),
        run(5, "gate invariants", || trained(gate_invariants)),
        run(6, "recall monotonicity", || trained(recall_monotone)),
        run(7, "refinement repair", refinement_repair),
        run(8, "oracle end-to-end", || trained(oracle_sanity)),
        run(9, "case-study gates", || trained(case_study_gates)),
        run(10, "eval determinism", eval_determinism),
    ];
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
