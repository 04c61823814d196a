use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use clustlda::experiment::{align_truth_authors, evaluate_artifact, EvalInputs};
use clustlda::{load_jsonl, Corpus, FieldMap, ModelArtifact, SyntheticTruth};
use serde::{Deserialize, Serialize};

use crate::fit::{FitPlan, InputSpec};
use crate::manifest::Manifest;
use crate::{manifest, output};

#[derive(Args)]
pub struct EvaluateArgs {
    /// Output directory of a `fit` run.
    #[arg(long)]
    fit: PathBuf,
    /// Generator truth (`truth.json` from `simulate`) for Rand index and MAE.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Read source labels from this field of the JSONL the fit was run on,
    /// instead of the labels stored with the corpus.
    #[arg(long)]
    labels_field: Option<String>,
    /// JSONL to read `--labels-field` from when the fit read a `.json` corpus.
    #[arg(long)]
    labels_input: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    top_n: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvaluatePlan {
    pub fit: PathBuf,
    pub truth: Option<PathBuf>,
    pub labels_field: Option<String>,
    pub labels_input: Option<PathBuf>,
    pub top_n: usize,
    pub out: PathBuf,
}

impl EvaluateArgs {
    pub fn resolve(self) -> EvaluatePlan {
        EvaluatePlan {
            fit: self.fit,
            truth: self.truth,
            labels_field: self.labels_field,
            labels_input: self.labels_input,
            top_n: self.top_n,
            out: self.out,
        }
    }
}

/// Per-document source labels, looked up by document id.
fn source_labels(plan: &EvaluatePlan, corpus: &Corpus) -> Result<Option<Vec<String>>> {
    let Some(field) = &plan.labels_field else {
        let labels: Option<Vec<String>> = corpus.documents.iter().map(|d| d.source_label.clone()).collect();
        return Ok(labels);
    };
    let (path, mut fields) = match &plan.labels_input {
        Some(p) => (p.clone(), FieldMap::default()),
        None => {
            let text = output::read_to_string(&plan.fit.join("manifest.json"))?;
            let manifest: Manifest = serde_json::from_str(&text)?;
            let fit: FitPlan = serde_json::from_value(manifest.plan).context("fit manifest")?;
            match fit.input {
                InputSpec::Jsonl { path, fields, .. } => (path, fields),
                InputSpec::Corpus(_) => bail!("the fit read a corpus file; pass --labels-input with the raw JSONL"),
            }
        }
    };
    fields.label = field.clone();
    let by_id: HashMap<String, Option<String>> = load_jsonl(&path, &fields)?.into_iter().map(|r| (r.id, r.label)).collect();
    let labels = corpus
        .documents
        .iter()
        .map(|d| {
            by_id
                .get(&d.doc_id)
                .cloned()
                .flatten()
                .with_context(|| format!("document {} has no {field:?} label", d.doc_id))
        })
        .collect::<Result<Vec<String>>>()?;
    Ok(Some(labels))
}

#[derive(Serialize)]
struct TopWordRow<'a> {
    topic: usize,
    rank: usize,
    term: &'a str,
    weight: f64,
}

pub fn run(plan: &EvaluatePlan) -> Result<()> {
    let model = ModelArtifact::from_json(&output::read_to_string(&plan.fit.join("model.json"))?)?;
    let corpus = Corpus::from_json(&output::read_to_string(&plan.fit.join("corpus.json"))?)?;
    let truth = match &plan.truth {
        Some(path) => {
            let truth: SyntheticTruth = serde_json::from_str(&output::read_to_string(path)?).with_context(|| format!("parsing {}", path.display()))?;
            Some(align_truth_authors(&truth, &corpus.authors)?)
        }
        None => None,
    };
    let labels = source_labels(plan, &corpus)?;
    let report = evaluate_artifact(
        &model,
        &corpus,
        &EvalInputs {
            source_labels: labels.as_deref(),
            truth: truth.as_ref(),
            top_n: plan.top_n,
        },
    )?;

    output::create_dir(&plan.out)?;
    output::write_json(&plan.out.join("report.json"), &report)?;
    if let Some(table) = &report.contingency {
        output::write_matrix(&plan.out.join("contingency.csv"), "source", "cluster_", &table.sources, &table.percent)?;
    }
    let words: Vec<TopWordRow> = report
        .top_words
        .iter()
        .enumerate()
        .flat_map(|(k, list)| {
            list.iter().enumerate().map(move |(r, w)| TopWordRow {
                topic: k,
                rank: r + 1,
                term: &w.term,
                weight: w.weight,
            })
        })
        .collect();
    output::write_rows(&plan.out.join("top_words.csv"), &words)?;
    let levels: Vec<String> = (0..report.cluster_topic_weights.len()).map(|l| l.to_string()).collect();
    output::write_matrix(&plan.out.join("cluster_topics.csv"), "cluster", "topic_", &levels, &report.cluster_topic_weights)?;
    output::write_rows(&plan.out.join("projection.csv"), &report.projection)?;
    manifest::write(&plan.out, "evaluate", None, plan)?;

    for w in &report.warnings {
        log::warn!("{w}");
    }
    if let Some(ri) = report.rand_index {
        println!("Rand index {ri:.4}");
    }
    if let Some(mae) = report.mae {
        println!("MAE {mae:.4}");
    }
    println!("report written to {}", plan.out.display());
    Ok(())
}
