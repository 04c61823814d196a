use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use clustlda::{simulate, Corpus, Hyperparameters};
use serde::{Deserialize, Serialize};

use crate::{manifest, output};

/// Size and shape of a synthetic corpus; unset flags keep the base value.
#[derive(Args, Debug, Clone, Default)]
pub struct ShapeFlags {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sigma_doc: Option<f64>,
    #[arg(long)]
    pub docs: Option<usize>,
    #[arg(long)]
    pub authors: Option<usize>,
    #[arg(long)]
    pub mean_doc_len: Option<f64>,
}

impl ShapeFlags {
    pub fn apply(&self, hp: &mut Hyperparameters) {
        macro_rules! apply {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { hp.$field = v; })*
            };
        }
        apply!(k => k, clusters => n_clusters, vocab_size => vocab_size, beta => beta, sigma_doc => sigma_doc,
            docs => n_docs, authors => n_authors, mean_doc_len => mean_doc_len);
    }
}

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    toml::from_str(&output::read_to_string(path)?).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Args)]
pub struct SimulateArgs {
    /// TOML file with any subset of the generator settings; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    shape: ShapeFlags,
    #[arg(long)]
    eta: Option<f64>,
    /// Prior standard deviation of the cluster topic weights.
    #[arg(long, conflicts_with = "sigma0_sq")]
    sigma0: Option<f64>,
    #[arg(long)]
    sigma0_sq: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulatePlan {
    pub hp: Hyperparameters,
    pub out: PathBuf,
}

impl SimulateArgs {
    pub fn resolve(self) -> Result<SimulatePlan> {
        let mut hp: Hyperparameters = match &self.config {
            Some(path) => read_toml(path)?,
            None => Hyperparameters::default(),
        };
        self.shape.apply(&mut hp);
        if let Some(eta) = self.eta {
            hp.eta = eta;
        }
        if let Some(v) = self.sigma0_sq {
            hp.sigma0_sq = v;
        }
        if let Some(s) = self.sigma0 {
            hp.sigma0_sq = s * s;
        }
        if let Some(seed) = self.seed {
            hp.seed = seed;
        }
        hp.validate()?;
        Ok(SimulatePlan { hp, out: self.out })
    }
}

#[derive(Serialize)]
struct JsonlRecord<'a> {
    id: &'a str,
    author: &'a str,
    text: String,
    label: Option<&'a str>,
}

/// One JSON object per document with the tokens joined by spaces.
pub fn write_jsonl(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut text = String::new();
    for doc in &corpus.documents {
        let record = JsonlRecord {
            id: &doc.doc_id,
            author: &corpus.authors[doc.author_id],
            text: corpus.decode(doc).join(" "),
            label: doc.source_label.as_deref(),
        };
        text.push_str(&serde_json::to_string(&record)?);
        text.push('\n');
    }
    output::write_text(path, &text)
}

pub fn run(plan: &SimulatePlan) -> Result<()> {
    let (corpus, truth) = simulate(&plan.hp)?;
    output::create_dir(&plan.out)?;
    output::write_text(&plan.out.join("corpus.json"), &corpus.to_json()?)?;
    output::write_json(&plan.out.join("truth.json"), &truth)?;
    write_jsonl(&plan.out.join("documents.jsonl"), &corpus)?;
    manifest::write(&plan.out, "simulate", Some(plan.hp.seed), plan)?;
    println!(
        "simulated {} documents from {} authors into {}",
        corpus.num_docs(),
        corpus.num_authors(),
        plan.out.display()
    );
    Ok(())
}
