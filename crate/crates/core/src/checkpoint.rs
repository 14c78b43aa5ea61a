//! Plain-text checkpoints of trained [`Models`].
//!
//! ```text
//! kgqa-checkpoint 1
//! config <n>          followed by n `key = value` lines (dims and seed live here)
//! skeleton <freq> <entity slots> <relation slots> <template>
//! encoder <trained 0|1>
//! matrix <name> <rows> <cols>   followed by one line of values per row
//! ```

use std::fmt::Write as _;

use crate::generator::Skeleton;
use crate::harness::{HarnessError, Models, PipelineConfig};
use crate::retrieval::{CrossScorer, RelationEncoder};
use crate::sexpr::parse;
use crate::tensor::Matrix;

const MAGIC: &str = "kgqa-checkpoint 1";

fn err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Checkpoint(msg.into())
}

fn write_matrix(out: &mut String, name: &str, m: &Matrix<f64>) {
    let _ = writeln!(out, "matrix {name} {} {}", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|x| x.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

/// Serializes models with the config that shaped them. Floats round-trip exactly.
pub fn save(models: &Models, config: &PipelineConfig) -> String {
    let mut out = format!("{MAGIC}\n");
    let cfg = config.to_text();
    let _ = writeln!(out, "config {}", cfg.lines().count());
    out.push_str(&cfg);
    for s in &models.skeletons {
        let _ = writeln!(
            out,
            "skeleton {} {} {} {}",
            s.frequency, s.entity_slots, s.relation_slots, s.template
        );
    }
    let _ = writeln!(out, "encoder {}", models.encoder.is_trained() as u8);
    write_matrix(&mut out, "encoder.projection", models.encoder.projection());
    if let Some(sc) = &models.scorer {
        write_matrix(&mut out, "scorer.weights", &sc.weights);
        write_matrix(&mut out, "scorer.bias", &Matrix::filled(1, 1, sc.bias));
    }
    for (i, m) in models.adapter.matrices().into_iter().enumerate() {
        write_matrix(&mut out, &format!("adapter.{i}"), m);
    }
    out
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<(usize, &'a str)> {
        self.it.next().map(|(i, l)| (i + 1, l))
    }

    fn expect(&mut self) -> Result<(usize, &'a str), HarnessError> {
        self.next().ok_or_else(|| err("unexpected end of file"))
    }
}

fn read_matrix(lines: &mut Lines<'_>, rows: usize, cols: usize) -> Result<Matrix<f64>, HarnessError> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (n, l) = lines.expect()?;
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|x| x.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| err(format!("line {n}: {e}")))?;
        if row.len() != cols {
            return Err(err(format!("line {n}: expected {cols} values, found {}", row.len())));
        }
        data.extend(row);
    }
    Matrix::new(rows, cols, data).map_err(|e| err(e.to_string()))
}

/// Inverse of [`save`].
pub fn load(text: &str) -> Result<(Models, PipelineConfig), HarnessError> {
    let mut lines = Lines {
        it: text.lines().enumerate(),
    };
    if lines.next().map(|l| l.1) != Some(MAGIC) {
        return Err(err("not a checkpoint (bad header)"));
    }
    let mut config = None;
    let mut models = None::<Models>;
    let mut skeletons = Vec::new();
    let mut trained = false;
    let mut projection = None;
    let mut scorer_w = None;
    let mut scorer_b = None;
    let mut adapter: Vec<Matrix<f64>> = Vec::new();
    while let Some((n, line)) = lines.next() {
        let (head, rest) = line.split_once(' ').unwrap_or((line, ""));
        let bad = |m: &str| err(format!("line {n}: {m}"));
        match head {
            "config" => {
                let count: usize = rest.trim().parse().map_err(|_| bad("bad config length"))?;
                let mut body = String::new();
                for _ in 0..count {
                    body.push_str(lines.expect()?.1);
                    body.push('\n');
                }
                let c = PipelineConfig::from_text(&body)?;
                models = Some(Models::initial(&c));
                config = Some(c);
            }
            "skeleton" => {
                let mut parts = rest.splitn(4, ' ');
                let mut num = || -> Result<u64, HarnessError> {
                    parts
                        .next()
                        .and_then(|x| x.parse().ok())
                        .ok_or_else(|| bad("bad skeleton header"))
                };
                let (frequency, e, r) = (num()?, num()? as usize, num()? as usize);
                let template = parse(parts.next().ok_or_else(|| bad("missing template"))?)
                    .map_err(|e| bad(&e.to_string()))?;
                skeletons.push(Skeleton {
                    template,
                    frequency,
                    entity_slots: e,
                    relation_slots: r,
                });
            }
            "encoder" => trained = rest.trim() == "1",
            "matrix" => {
                let f: Vec<&str> = rest.split_whitespace().collect();
                let [name, r, c] = f[..] else { return Err(bad("bad matrix header")) };
                let (r, c) = (
                    r.parse().map_err(|_| bad("bad row count"))?,
                    c.parse().map_err(|_| bad("bad column count"))?,
                );
                let m = read_matrix(&mut lines, r, c)?;
                match name {
                    "encoder.projection" => projection = Some(m),
                    "scorer.weights" => scorer_w = Some(m),
                    "scorer.bias" => scorer_b = Some(m.get(0, 0)),
                    _ if name.starts_with("adapter.") => adapter.push(m),
                    _ => return Err(bad("unknown matrix")),
                }
            }
            "" => {}
            _ => return Err(bad("unknown record")),
        }
    }
    let config = config.ok_or_else(|| err("missing config"))?;
    let mut models = models.expect("set with config");
    models.skeletons = skeletons;
    let projection = projection.ok_or_else(|| err("missing encoder projection"))?;
    models.encoder =
        RelationEncoder::from_parts(config.encoder(), projection, trained).map_err(|e| err(e.to_string()))?;
    models.scorer = match (scorer_w, scorer_b) {
        (Some(weights), Some(bias)) => Some(CrossScorer { weights, bias }),
        (None, None) => None,
        _ => return Err(err("incomplete scorer")),
    };
    let slots = models.adapter.matrices_mut();
    if slots.len() != adapter.len() {
        return Err(err(format!("expected {} adapter matrices, found {}", slots.len(), adapter.len())));
    }
    for (slot, m) in slots.into_iter().zip(adapter) {
        if slot.shape() != m.shape() {
            return Err(err(format!("adapter matrix shape {:?} != {:?}", m.shape(), slot.shape())));
        }
        *slot = m;
    }
    Ok((models, config))
}
