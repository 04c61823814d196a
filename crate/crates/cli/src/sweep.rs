use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::Args;
use clustlda::experiment::{run_replicate, Replicate, ReplicateOutcome};
use clustlda::rng::derive_seed;
use clustlda::{Hyperparameters, ModelArtifact, Selector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::simulate::{read_toml, ShapeFlags};
use crate::{manifest, output};

/// Sweep file layout (TOML). Every key is optional.
///
/// ```toml
/// seed = 1
/// replicates = 5
/// restarts = 10
/// selector = "lik"
/// eta = [0.5, 5.0]
/// sigma0 = [0.5, 10.0]
///
/// [base]
/// k = 5
/// vocab_size = 1000
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepFile {
    seed: Option<u64>,
    replicates: Option<usize>,
    restarts: Option<usize>,
    selector: Option<Selector>,
    eta: Option<Vec<f64>>,
    sigma0: Option<Vec<f64>>,
    save_models: Option<bool>,
    base: Option<Hyperparameters>,
}

#[derive(Args)]
pub struct SweepArgs {
    /// TOML sweep file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated eta grid.
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    /// Comma-separated grid of sigma0 (standard deviation, not variance).
    #[arg(long, value_delimiter = ',')]
    sigma0: Option<Vec<f64>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    selector: Option<Selector>,
    /// Skip writing per-replicate model JSON.
    #[arg(long)]
    no_models: bool,
    #[command(flatten)]
    shape: ShapeFlags,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPlan {
    pub base: Hyperparameters,
    pub eta: Vec<f64>,
    pub sigma0: Vec<f64>,
    pub replicates: usize,
    pub restarts: usize,
    pub selector: Selector,
    pub seed: u64,
    pub save_models: bool,
    pub out: PathBuf,
}

impl SweepArgs {
    pub fn resolve(self) -> Result<SweepPlan> {
        let file: SweepFile = match &self.config {
            Some(path) => read_toml(path)?,
            None => SweepFile::default(),
        };
        let mut base = file.base.unwrap_or_default();
        self.shape.apply(&mut base);
        let plan = SweepPlan {
            eta: self.eta.or(file.eta).unwrap_or_else(|| vec![base.eta]),
            sigma0: self.sigma0.or(file.sigma0).unwrap_or_else(|| vec![base.sigma0_sq.sqrt()]),
            replicates: self.replicates.or(file.replicates).unwrap_or(5),
            restarts: self.restarts.or(file.restarts).unwrap_or(10),
            selector: self.selector.or(file.selector).unwrap_or(Selector::Lik),
            seed: self.seed.or(file.seed).unwrap_or(0),
            save_models: !self.no_models && file.save_models.unwrap_or(true),
            base,
            out: self.out,
        };
        if plan.eta.is_empty() || plan.sigma0.is_empty() || plan.replicates == 0 || plan.restarts == 0 {
            bail!("the sweep grid, replicate count and restart count must be non-empty");
        }
        Ok(plan)
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    index: usize,
    eta: f64,
    sigma0: f64,
}

impl Cell {
    fn name(&self) -> String {
        format!("eta={}_sigma0={}", self.eta, self.sigma0)
    }
}

/// Seeds depend only on the cell's settings and the replicate number, so any
/// (cell, replicate) can be rerun alone.
fn seeds(plan: &SweepPlan, cell: &Cell, replicate: usize) -> (u64, u64) {
    let label = cell.name();
    (
        derive_seed(plan.seed, &format!("dataset/{label}"), replicate as u64),
        derive_seed(plan.seed, &format!("fit/{label}"), replicate as u64),
    )
}

#[derive(Debug, Serialize)]
struct ReplicateRow {
    cell: usize,
    eta: f64,
    sigma0: f64,
    replicate: usize,
    dataset_seed: u64,
    fit_seed: u64,
    status: String,
    rand_index: Option<f64>,
    mae_clustlda: Option<f64>,
    mae_lda: Option<f64>,
    mae_at: Option<f64>,
    converged: Option<bool>,
    outer_iters: Option<usize>,
    best_restart: Option<usize>,
}

#[derive(Debug, Serialize)]
struct CellRow {
    cell: usize,
    eta: f64,
    sigma0: f64,
    completed: usize,
    failed: usize,
    ri_mean: Option<f64>,
    ri_sd: Option<f64>,
    mae_clustlda_mean: Option<f64>,
    mae_clustlda_sd: Option<f64>,
    mae_lda_mean: Option<f64>,
    mae_lda_sd: Option<f64>,
    mae_at_mean: Option<f64>,
    mae_at_sd: Option<f64>,
}

/// Sample mean and standard deviation (n - 1 denominator; zero for n = 1).
fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (Some(mean), Some(var.sqrt()))
}

fn save_replicate(dir: &Path, rep: &Replicate, save_models: bool) -> Result<()> {
    output::create_dir(dir)?;
    output::write_rows(&dir.join("outcome.csv"), std::slice::from_ref(&rep.outcome))?;
    output::write_rows(&dir.join("restarts.csv"), &rep.clustlda.summary)?;
    if save_models {
        let best = &rep.clustlda.best;
        output::write_text(&dir.join("clustlda.json"), &ModelArtifact::from_fit(best, &rep.corpus).to_json()?)?;
        output::write_text(&dir.join("lda.json"), &ModelArtifact::from_baseline(&rep.lda, &rep.corpus, best.seed).to_json()?)?;
        output::write_text(&dir.join("at.json"), &ModelArtifact::from_baseline(&rep.at, &rep.corpus, best.seed).to_json()?)?;
    }
    Ok(())
}

fn run_one(plan: &SweepPlan, cell: &Cell, replicate: usize) -> ReplicateRow {
    let (dataset_seed, fit_seed) = seeds(plan, cell, replicate);
    let hp = Hyperparameters {
        eta: cell.eta,
        sigma0_sq: cell.sigma0 * cell.sigma0,
        seed: dataset_seed,
        ..plan.base.clone()
    };
    let dir = plan.out.join("cells").join(cell.name()).join(format!("rep{replicate:03}"));
    let result: Result<ReplicateOutcome> = run_replicate(&hp, plan.restarts, plan.selector, fit_seed)
        .map_err(anyhow::Error::from)
        .and_then(|rep| {
            save_replicate(&dir, &rep, plan.save_models)?;
            Ok(rep.outcome)
        });
    let mut row = ReplicateRow {
        cell: cell.index,
        eta: cell.eta,
        sigma0: cell.sigma0,
        replicate,
        dataset_seed,
        fit_seed,
        status: "ok".into(),
        rand_index: None,
        mae_clustlda: None,
        mae_lda: None,
        mae_at: None,
        converged: None,
        outer_iters: None,
        best_restart: None,
    };
    match result {
        Ok(o) => {
            row.rand_index = Some(o.rand_index);
            row.mae_clustlda = Some(o.mae_clustlda);
            row.mae_lda = Some(o.mae_lda);
            row.mae_at = Some(o.mae_at);
            row.converged = Some(o.converged);
            row.outer_iters = Some(o.outer_iters);
            row.best_restart = Some(o.best_restart);
        }
        Err(e) => {
            log::warn!("cell {} replicate {replicate} failed: {e:#}", cell.name());
            row.status = format!("error: {e:#}");
        }
    }
    row
}

pub fn run(plan: &SweepPlan) -> Result<()> {
    let mut cells = Vec::new();
    for &eta in &plan.eta {
        for &sigma0 in &plan.sigma0 {
            cells.push(Cell {
                index: cells.len(),
                eta,
                sigma0,
            });
        }
    }
    output::create_dir(&plan.out)?;
    manifest::write(&plan.out, "sweep", Some(plan.seed), plan)?;

    let jobs: Vec<(Cell, usize)> = cells.iter().flat_map(|c| (0..plan.replicates).map(move |r| (*c, r))).collect();
    let rows: Vec<ReplicateRow> = jobs.par_iter().map(|(cell, r)| run_one(plan, cell, *r)).collect();

    let summary: Vec<CellRow> = cells
        .iter()
        .map(|cell| {
            let ok: Vec<&ReplicateRow> = rows.iter().filter(|r| r.cell == cell.index && r.status == "ok").collect();
            let pick = |f: fn(&ReplicateRow) -> Option<f64>| mean_sd(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            let (ri_mean, ri_sd) = pick(|r| r.rand_index);
            let (mae_clustlda_mean, mae_clustlda_sd) = pick(|r| r.mae_clustlda);
            let (mae_lda_mean, mae_lda_sd) = pick(|r| r.mae_lda);
            let (mae_at_mean, mae_at_sd) = pick(|r| r.mae_at);
            CellRow {
                cell: cell.index,
                eta: cell.eta,
                sigma0: cell.sigma0,
                completed: ok.len(),
                failed: plan.replicates - ok.len(),
                ri_mean,
                ri_sd,
                mae_clustlda_mean,
                mae_clustlda_sd,
                mae_lda_mean,
                mae_lda_sd,
                mae_at_mean,
                mae_at_sd,
            }
        })
        .collect();
    output::write_rows(&plan.out.join("replicates.csv"), &rows)?;
    output::write_rows(&plan.out.join("cells.csv"), &summary)?;

    let failed = rows.iter().filter(|r| r.status != "ok").count();
    for c in &summary {
        println!(
            "cell {} (eta {}, sigma0 {}): {}/{} ok, mean RI {}",
            c.cell,
            c.eta,
            c.sigma0,
            c.completed,
            plan.replicates,
            c.ri_mean.map_or("-".into(), |x| format!("{x:.4}"))
        );
    }
    if failed == rows.len() {
        bail!("every replicate failed; see {}", plan.out.join("replicates.csv").display());
    }
    if failed > 0 {
        println!("{failed} of {} replicates failed; see replicates.csv", rows.len());
    }
    Ok(())
}
