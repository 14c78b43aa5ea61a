//! Numeric checks shared by the integration tests and the acceptance runner.

use kgqa_core::gating::{Adapter, AdapterConfig, SharedMlp};
use kgqa_core::retrieval::{RetrievalBundle, ScoredItem};
use kgqa_core::tensor::{attention, grad_check, Matrix, Tape, TensorError, Var, DEFAULT_EPS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Forward = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>>;

fn weights(rows: usize, cols: usize) -> Matrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|i| 0.3 + 0.17 * ((i * 7 + 3) % 11) as f64 - 0.9).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Weighted sum so that every output entry gets a distinct upstream gradient.
fn reduce(t: &mut Tape<f64>, out: Var) -> Result<Var, TensorError> {
    let (r, c) = t.shape(out);
    let w = t.leaf(weights(r, c));
    let m = t.mul(out, w)?;
    Ok(t.sum_all(m))
}

fn randm(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
    Matrix::random_normal(r, c, 1.0, rng)
}

/// Entries bounded away from 0 so relu kinks stay outside the difference stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
    let data = (0..r * c)
        .map(|_| {
            let x: f64 = rng.random_range(0.1..2.0);
            if rng.random_bool(0.5) { x } else { -x }
        })
        .collect();
    Matrix::new(r, c, data).unwrap()
}

fn case(name: &'static str, params: Vec<Matrix<f64>>, f: Forward) -> (&'static str, Vec<Matrix<f64>>, Forward) {
    (name, params, f)
}

/// Max relative gradient error of every differentiable primitive on random 3×4 inputs.
pub fn primitive_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = randm(&mut rng, 3, 4);
    let b = randm(&mut rng, 3, 4);
    let bt = randm(&mut rng, 4, 3);
    let row = randm(&mut rng, 1, 4);
    let col = randm(&mut rng, 3, 1);
    let kinked = away_from_zero(&mut rng, 3, 4);
    // std-1 weights saturate the softmax and leave gradients near 1e-10, below
    // what central differences resolve
    let sq: Vec<Matrix<f64>> = (0..3).map(|_| Matrix::random_normal(4, 4, 0.5, &mut rng)).collect();
    let targets: Vec<f64> = (0..12).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let bce_w: Vec<f64> = (0..12).map(|i| if i % 5 == 0 { 0.0 } else { 1.0 }).collect();
    let cases = vec![
        case("matmul", vec![a.clone(), bt.clone()], Box::new(|t, v| {
            let o = t.matmul(v[0], v[1])?;
            reduce(t, o)
        })),
        case("add", vec![a.clone(), b.clone()], Box::new(|t, v| {
            let o = t.add(v[0], v[1])?;
            reduce(t, o)
        })),
        case("sub", vec![a.clone(), b.clone()], Box::new(|t, v| {
            let o = t.sub(v[0], v[1])?;
            reduce(t, o)
        })),
        case("mul", vec![a.clone(), b.clone()], Box::new(|t, v| {
            let o = t.mul(v[0], v[1])?;
            reduce(t, o)
        })),
        case("add_row", vec![a.clone(), row.clone()], Box::new(|t, v| {
            let o = t.add_row(v[0], v[1])?;
            reduce(t, o)
        })),
        case("scale", vec![a.clone()], Box::new(|t, v| {
            let o = t.scale(v[0], 1.7);
            reduce(t, o)
        })),
        case("relu", vec![kinked], Box::new(|t, v| {
            let o = t.relu(v[0]);
            reduce(t, o)
        })),
        case("sigmoid", vec![a.clone()], Box::new(|t, v| {
            let o = t.sigmoid(v[0]);
            reduce(t, o)
        })),
        case("softmax_rows", vec![a.clone()], Box::new(|t, v| {
            let o = t.softmax_rows(v[0]);
            reduce(t, o)
        })),
        case("mean_rows", vec![a.clone()], Box::new(|t, v| {
            let o = t.mean_rows(v[0]);
            reduce(t, o)
        })),
        case("mean_cols", vec![a.clone()], Box::new(|t, v| {
            let o = t.mean_cols(v[0]);
            reduce(t, o)
        })),
        case("mean_row_blocks", vec![a.clone()], Box::new(|t, v| {
            let o = t.mean_row_blocks(v[0], 3)?;
            reduce(t, o)
        })),
        case("sum_all", vec![a.clone()], Box::new(|t, v| {
            let o = t.sum_all(v[0]);
            reduce(t, o)
        })),
        case("mean_all", vec![a.clone()], Box::new(|t, v| {
            let o = t.mean_all(v[0]);
            reduce(t, o)
        })),
        case("concat_rows", vec![a.clone(), b.clone()], Box::new(|t, v| {
            let o = t.concat_rows(&[v[0], v[1]])?;
            reduce(t, o)
        })),
        case("transpose", vec![a.clone()], Box::new(|t, v| {
            let o = t.transpose(v[0]);
            reduce(t, o)
        })),
        case("scale_rows", vec![col.clone(), a.clone()], Box::new(|t, v| {
            let o = t.scale_rows(v[0], v[1])?;
            reduce(t, o)
        })),
        case("l2_normalize_rows", vec![a.clone()], Box::new(|t, v| {
            let o = t.l2_normalize_rows(v[0]);
            reduce(t, o)
        })),
        case("bce_with_logits", vec![a.clone()], Box::new(move |t, v| {
            t.bce_with_logits(v[0], &targets, &bce_w)
        })),
        case("cross_entropy_rows", vec![a.clone()], Box::new(|t, v| {
            t.cross_entropy_rows(v[0], &[0, 2, 3])
        })),
        case("attention", vec![a.clone(), b.clone(), sq[0].clone(), sq[1].clone(), sq[2].clone()], Box::new(|t, v| {
            let o = attention(t, v[0], v[1], v[1], v[2], v[3], v[4])?;
            reduce(t, o)
        })),
    ];
    cases
        .into_iter()
        .map(|(name, params, f)| (name, grad_check(f, &params, DEFAULT_EPS).unwrap()))
        .collect()
}

pub fn bundle_of(t_k: usize) -> RetrievalBundle {
    let item = |kind: &str, i: usize| {
        let text = match kind {
            "e" => format!("entity {i} alpha{}", i % 3),
            "r" => format!("people person rel{} {}", i % 5, i),
            _ => format!("doc{i} located in region {} contains place{}", i % 4, i % 7),
        };
        ScoredItem::new(text, Some(format!("{kind}.{i}")), 1.0 / (1 + i) as f64)
    };
    RetrievalBundle {
        entities: (0..t_k).map(|i| item("e", i)).collect(),
        relations: (0..t_k).map(|i| item("r", i)).collect(),
        subgraphs: (0..t_k).map(|i| item("s", i)).collect(),
        masked_question: "where was [BLANK] born".into(),
    }
}

pub const STACK_QUESTION: &str = "where was the singer born and which region contains it";

/// Small dimensions keep every-entry central differences affordable.
pub fn small_adapter_config() -> AdapterConfig {
    AdapterConfig {
        dim: 8,
        hidden: 3,
        buckets: 97,
        entity_len: 3,
        relation_len: 4,
        subgraph_len: 6,
        question_len: 5,
        soft_tokens: 2,
        init_std: 0.3,
        attention_gamma: 1.0,
        lr: 0.002,
        seed: 42,
    }
}

/// Max relative error of the whole alignment+gating stack with loss = mean of all gates.
pub fn full_stack_error() -> f64 {
    let ad: Adapter<f64> = Adapter::new(small_adapter_config());
    let bundle = bundle_of(3);
    let params: Vec<Matrix<f64>> = ad.matrices().into_iter().cloned().collect();
    grad_check(
        |t, v| {
            let s = ad.stack(t, v, STACK_QUESTION, &bundle)?;
            let gs: Vec<Var> = s.gates().iter().map(|g| g.g).collect();
            let all = t.concat_rows(&gs)?;
            Ok(t.mean_all(all))
        },
        &params,
        DEFAULT_EPS,
    )
    .unwrap()
}

/// Shape-law violations for one t_k with default dimensions; empty when all hold.
pub fn shape_violations(t_k: usize) -> Vec<String> {
    let cfg = AdapterConfig::default();
    let ad: Adapter<f64> = Adapter::new(cfg);
    let out = ad.forward(STACK_QUESTION, &bundle_of(t_k)).unwrap();
    let (e, l) = (cfg.dim, cfg.question_len);
    let mut bad = Vec::new();
    let mut expect = |name: &str, got: (usize, usize), want: (usize, usize)| {
        if got != want {
            bad.push(format!("t_k={t_k}: {name} is {got:?}, want {want:?}"));
        }
    };
    for (i, x) in out.x_t.iter().enumerate() {
        expect(["E_t", "R_t", "S_t"][i], x.shape(), (t_k, e));
    }
    expect("e_c", out.tokens.e_c.shape(), (t_k, e));
    expect("r_c", out.tokens.r_c.shape(), (t_k, e));
    expect("s_c", out.tokens.s_c.shape(), (t_k, e));
    for (i, g) in out.g_sim.iter().enumerate() {
        expect(["G_sim(e)", "G_sim(r)", "G_sim(s)"][i], g.shape(), (t_k, l));
    }
    expect("prompt", out.prompt.shape(), (cfg.soft_tokens + 3 * t_k + l, e));
    bad
}

/// Gate-invariant violations on one bundle; empty when all hold.
pub fn gate_violations(ad: &Adapter<f64>, question: &str, bundle: &RetrievalBundle) -> Vec<String> {
    let mut bad = Vec::new();
    let out = ad.forward(question, bundle).unwrap();
    let all = out.gates.entities.iter().chain(&out.gates.relations).chain(&out.gates.subgraphs);
    if let Some(g) = all.clone().find(|&&g| !(g > 0.0 && g < 1.0)) {
        bad.push(format!("gate {g} outside (0,1)"));
    }
    let t = &out.tokens;
    for (k, ((s, se), sr)) in t.s_c.data().iter().zip(t.s_c_e.data()).zip(t.s_c_r.data()).enumerate() {
        if *s != se + sr {
            bad.push(format!("s_c entry {k}: {s} != {se} + {sr}"));
            break;
        }
    }
    let mut zero = ad.clone();
    zero.shared = SharedMlp::zeros(ad.config.dim);
    let z = zero.gates(question, bundle).unwrap();
    if let Some(g) = z.entities.iter().chain(&z.relations).chain(&z.subgraphs).find(|&&g| g != 0.5) {
        bad.push(format!("zero MLP gate {g} != 0.5"));
    }
    bad
}

/// Gate statistics of a trained adapter over its training examples.
#[derive(Debug, Clone, Copy)]
pub struct CaseStudy {
    pub gold_relation_gate: f64,
    pub other_relation_gate: f64,
    /// questions whose highest entity gate belongs to a gold entity
    pub top_entity_hits: usize,
    pub questions: usize,
}

pub fn case_study(ad: &Adapter<f64>, data: &[kgqa_core::gating::AdapterExample]) -> CaseStudy {
    let (mut gold, mut other) = (Vec::new(), Vec::new());
    let mut hits = 0;
    for ex in data {
        let g = ad.gates(&ex.question, &ex.bundle).unwrap();
        let [ent, rel, _] = &ex.targets;
        for ((&gate, &t), &w) in g.relations.iter().zip(&rel.targets).zip(&rel.weights) {
            if w > 0.0 {
                if t == 1.0 { gold.push(gate) } else { other.push(gate) }
            }
        }
        let best = (0..g.entities.len())
            .filter(|&i| ent.weights[i] > 0.0)
            .max_by(|&a, &b| g.entities[a].total_cmp(&g.entities[b]).then(b.cmp(&a)));
        if best.is_some_and(|i| ent.targets[i] == 1.0) {
            hits += 1;
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    CaseStudy {
        gold_relation_gate: mean(&gold),
        other_relation_gate: mean(&other),
        top_entity_hits: hits,
        questions: data.len(),
    }
}
