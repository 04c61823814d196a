use std::collections::HashSet;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use clustlda::corpus::load_stopwords;
use clustlda::cstep::select_n_clusters;
use clustlda::rng::derive_seed;
use clustlda::{
    build_corpus, fit_author_topic, fit_vanilla_lda, load_jsonl, multi_start, Corpus, CorpusConfig, EcmConfig, FieldMap, GmmOptions, GroupedPoints,
    ModelArtifact, ModelKind, Selector, Tokenizer,
};
use serde::{Deserialize, Serialize};

use crate::{manifest, output};

#[derive(Args)]
pub struct FitArgs {
    /// Raw JSONL records to tokenize, or a `.json` corpus as written by
    /// `simulate` and `fit`.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "id")]
    id_field: String,
    #[arg(long, default_value = "author")]
    author_field: String,
    #[arg(long, default_value = "text")]
    text_field: String,
    #[arg(long, default_value = "label")]
    label_field: String,
    /// Drop terms seen fewer times than this across the corpus.
    #[arg(long, default_value_t = 10)]
    min_count: u64,
    /// Stopword file, one word per line (replaces the built-in list).
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    no_stem: bool,

    #[arg(long, default_value = "clustlda")]
    model: ModelKind,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    /// Choose the cluster count by BIC over an inclusive range, e.g. `2..6`.
    #[arg(long, value_parser = parse_range)]
    bic_range: Option<(usize, usize)>,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value = "lik")]
    selector: Selector,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Prior variance of the cluster topic weights.
    #[arg(long, default_value_t = 1.0)]
    sigma0_sq: f64,
    /// Prior standard deviation; overrides `--sigma0-sq`.
    #[arg(long)]
    sigma0: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 100)]
    outer_max: usize,
    #[arg(long, default_value_t = 200)]
    tstep_max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (lo, hi) = s.split_once("..").ok_or_else(|| format!("expected LO..HI, got {s:?}"))?;
    let lo: usize = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: usize = hi.trim().trim_start_matches('=').parse().map_err(|e| format!("{e}"))?;
    if lo < 1 || hi < lo {
        return Err(format!("empty cluster range {s:?}"));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum InputSpec {
    Corpus(PathBuf),
    Jsonl {
        path: PathBuf,
        fields: FieldMap,
        min_count: u64,
        stopwords: Option<PathBuf>,
        stem: bool,
    },
}

impl InputSpec {
    pub fn load(&self) -> Result<Corpus> {
        match self {
            InputSpec::Corpus(path) => Ok(Corpus::from_json(&output::read_to_string(path)?).with_context(|| format!("parsing {}", path.display()))?),
            InputSpec::Jsonl {
                path,
                fields,
                min_count,
                stopwords,
                stem,
            } => {
                let records = load_jsonl(path, fields)?;
                let words: HashSet<String> = match stopwords {
                    Some(p) => load_stopwords(p)?,
                    None => clustlda::corpus::default_stopwords(),
                };
                let config = CorpusConfig {
                    min_count: *min_count,
                    tokenizer: Tokenizer::new(words, *stem),
                };
                Ok(build_corpus(&records, &config)?)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitPlan {
    pub input: InputSpec,
    pub model: ModelKind,
    pub ecm: EcmConfig,
    pub bic_range: Option<(usize, usize)>,
    pub restarts: usize,
    pub selector: Selector,
    pub seed: u64,
    pub out: PathBuf,
}

impl FitArgs {
    pub fn resolve(self) -> Result<FitPlan> {
        let is_corpus_json = self.corpus.extension().is_some_and(|e| e == "json");
        let input = if is_corpus_json {
            InputSpec::Corpus(self.corpus)
        } else {
            InputSpec::Jsonl {
                path: self.corpus,
                fields: FieldMap {
                    id: self.id_field,
                    author: self.author_field,
                    text: self.text_field,
                    label: self.label_field,
                },
                min_count: self.min_count,
                stopwords: self.stopwords,
                stem: !self.no_stem,
            }
        };
        let ecm = EcmConfig {
            beta: self.beta,
            eta: self.eta,
            sigma0_sq: self.sigma0.map_or(self.sigma0_sq, |s| s * s),
            epsilon: self.epsilon,
            outer_max: self.outer_max,
            tstep_max_iter: self.tstep_max_iter,
            ..EcmConfig::new(self.k, self.clusters)
        };
        if self.bic_range.is_some() && self.model != ModelKind::ClustLda {
            bail!("--bic-range only applies to --model clustlda");
        }
        Ok(FitPlan {
            input,
            model: self.model,
            ecm,
            bic_range: self.bic_range,
            restarts: self.restarts,
            selector: self.selector,
            seed: self.seed,
            out: self.out,
        })
    }
}

#[derive(Serialize)]
struct RestartRow {
    restart: usize,
    seed: u64,
    d_lik: Option<f64>,
    d_disp: Option<f64>,
    converged: bool,
    outer_iters: usize,
    error: Option<String>,
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    d_c: Option<f64>,
    bound: f64,
    gmm_penalized_loglik: f64,
    tstep_iters: usize,
}

#[derive(Serialize)]
struct AssignmentRow<'a> {
    author: &'a str,
    cluster: usize,
}

/// Cluster count by BIC on the per-document modes of a covariate-free fit.
fn choose_clusters(corpus: &Corpus, plan: &FitPlan, (lo, hi): (usize, usize)) -> Result<usize> {
    let tcfg = plan.ecm.tstep_config(derive_seed(plan.seed, "bic-warmup", 0));
    let warm = fit_vanilla_lda(corpus, &tcfg)?;
    let data = GroupedPoints::new(warm.tstep.doc_states.iter().map(|s| s.eta.clone()).collect(), corpus.docs_by_author())?;
    let hi = hi.min(corpus.num_authors());
    let candidates: Vec<usize> = (lo..=hi).collect();
    let (best, table) = select_n_clusters(&data, &candidates, plan.ecm.eta, plan.restarts, &GmmOptions::default(), plan.seed)?;
    output::write_rows(&plan.out.join("bic.csv"), &table)?;
    println!("BIC selects {best} clusters");
    Ok(best)
}

pub fn run(plan: &FitPlan) -> Result<()> {
    let corpus = plan.input.load()?;
    output::create_dir(&plan.out)?;
    output::write_text(&plan.out.join("corpus.json"), &corpus.to_json()?)?;
    let (artifact, thetas) = match plan.model {
        ModelKind::ClustLda => {
            let mut cfg = plan.ecm.clone();
            if let Some(range) = plan.bic_range {
                cfg.n_clusters = choose_clusters(&corpus, plan, range)?;
            }
            let result = multi_start(&corpus, &cfg, plan.restarts, plan.selector, plan.seed)?;
            let rows: Vec<RestartRow> = result
                .summary
                .iter()
                .map(|s| RestartRow {
                    restart: s.restart,
                    seed: s.seed,
                    d_lik: s.d_lik,
                    d_disp: s.d_disp,
                    converged: s.converged,
                    outer_iters: s.outer_iters,
                    error: s.error.clone(),
                })
                .collect();
            output::write_rows(&plan.out.join("restarts.csv"), &rows)?;
            let best = &result.best;
            let trace: Vec<TraceRow> = best
                .trace
                .iter()
                .map(|t| TraceRow {
                    iteration: t.iteration,
                    d_c: t.d_c,
                    bound: t.bound,
                    gmm_penalized_loglik: t.gmm_penalized_loglik,
                    tstep_iters: t.tstep_iters,
                })
                .collect();
            output::write_rows(&plan.out.join("trace.csv"), &trace)?;
            let assignments: Vec<AssignmentRow> = corpus
                .authors
                .iter()
                .zip(&best.assignment.labels)
                .map(|(a, &c)| AssignmentRow { author: a, cluster: c })
                .collect();
            output::write_rows(&plan.out.join("assignments.csv"), &assignments)?;
            for w in &best.warnings {
                log::warn!("{w}");
            }
            println!(
                "best restart {} of {}: d_lik {:.3}, {} outer iterations, converged {}",
                result.best_restart,
                plan.restarts,
                best.d_lik,
                best.outer_iters,
                best.converged
            );
            (ModelArtifact::from_fit(best, &corpus), best.doc_states.iter().map(|d| d.theta.clone()).collect::<Vec<_>>())
        }
        ModelKind::Lda | ModelKind::At => {
            let tcfg = plan.ecm.tstep_config(derive_seed(plan.seed, "baseline", 0));
            let fit = if plan.model == ModelKind::Lda {
                fit_vanilla_lda(&corpus, &tcfg)?
            } else {
                fit_author_topic(&corpus, &tcfg)?
            };
            println!("{} bound {:.3} after {} iterations", plan.model, fit.tstep.bound, fit.tstep.iterations);
            let thetas = fit.tstep.doc_states.iter().map(|d| d.theta.clone()).collect();
            (ModelArtifact::from_baseline(&fit, &corpus, plan.seed), thetas)
        }
    };
    output::write_text(&plan.out.join("model.json"), &artifact.to_json()?)?;
    let doc_ids: Vec<String> = corpus.documents.iter().map(|d| d.doc_id.clone()).collect();
    output::write_matrix(&plan.out.join("doc_topics.csv"), "doc_id", "topic_", &doc_ids, &thetas)?;
    output::write_matrix(&plan.out.join("author_topics.csv"), "author", "topic_", &artifact.authors, &artifact.author_topics)?;
    manifest::write(&plan.out, "fit", Some(plan.seed), plan)
}
