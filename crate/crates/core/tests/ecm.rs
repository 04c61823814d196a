use clustlda::ecm::{compute_d_lik, multi_start, run_ecm, EcmConfig, Selector};
use clustlda::eval::rand_index;
use clustlda::experiment::ecm_config_for;
use clustlda::generator::{sample_corpus_with_owners, sample_model, simulate, Hyperparameters};
use clustlda::tstep::total_bound;
use clustlda::{Corpus, ModelArtifact};

fn small_hp(seed: u64) -> Hyperparameters {
    Hyperparameters {
        k: 3,
        n_clusters: 2,
        vocab_size: 40,
        sigma0_sq: 1.0,
        n_docs: 60,
        n_authors: 20,
        mean_doc_len: 30.0,
        seed,
        ..Hyperparameters::default()
    }
}

fn quick_config(hp: &Hyperparameters) -> EcmConfig {
    EcmConfig {
        outer_max: 10,
        tstep_max_iter: 50,
        ..ecm_config_for(hp)
    }
}

#[test]
fn single_author_stops_after_one_outer_iteration() {
    let hp = Hyperparameters {
        n_clusters: 1,
        n_authors: 1,
        n_docs: 15,
        ..small_hp(3)
    };
    let (corpus, _) = simulate(&hp).unwrap();
    let fit = run_ecm(&corpus, &quick_config(&hp), 1).unwrap();
    assert!(fit.converged);
    assert_eq!(fit.outer_iters, 1);
    assert_eq!(fit.assignment.labels, vec![0]);
    assert_eq!(fit.d_disp, None);
}

#[test]
fn halting_rule_and_trace_shape() {
    for seed in 0..4 {
        let hp = small_hp(seed);
        let (corpus, _) = simulate(&hp).unwrap();
        let cfg = quick_config(&hp);
        let fit = run_ecm(&corpus, &cfg, seed).unwrap();
        assert!(fit.trace.len() <= cfg.outer_max + 1);
        assert_eq!(fit.trace.len(), fit.outer_iters + 1);
        assert!(fit.trace[0].d_c.is_none());
        for row in &fit.trace[1..] {
            let d = row.d_c.unwrap();
            assert!((0.0..=1.0).contains(&d));
        }
        // Every stop but the last was below the threshold.
        for row in &fit.trace[1..fit.trace.len() - 1] {
            assert!(row.d_c.unwrap() < 1.0 - cfg.epsilon);
        }
        let last = fit.trace.last().unwrap();
        assert_eq!(fit.converged, last.d_c.unwrap() >= 1.0 - cfg.epsilon);
        if !fit.converged {
            assert!(fit.warnings.iter().any(|w| w.contains("cycle") || w.contains("no convergence")));
        }
        // The reported labels are the final partition.
        assert_eq!(rand_index(&fit.assignment.labels, &last.labels).unwrap(), 1.0);
    }
}

#[test]
fn loose_threshold_stops_immediately_and_tight_budget_warns() {
    let hp = small_hp(9);
    let (corpus, _) = simulate(&hp).unwrap();
    let loose = EcmConfig {
        epsilon: 1.0,
        ..quick_config(&hp)
    };
    let fit = run_ecm(&corpus, &loose, 2).unwrap();
    assert!(fit.converged);
    assert_eq!(fit.outer_iters, 1);

    let tight = EcmConfig {
        outer_max: 1,
        ..quick_config(&hp)
    };
    let fit = run_ecm(&corpus, &tight, 2).unwrap();
    assert_eq!(fit.outer_iters, 1);
    assert!(fit.converged || fit.warnings.iter().any(|w| w.contains("no convergence") || w.contains("cycle")));
}

#[test]
fn too_few_authors_is_rejected() {
    let hp = small_hp(1);
    let (corpus, _) = simulate(&hp).unwrap();
    let cfg = EcmConfig::new(3, corpus.num_authors() + 1);
    assert!(run_ecm(&corpus, &cfg, 0).is_err());
    assert!(multi_start(&corpus, &quick_config(&hp), 0, Selector::Lik, 0).is_err());
}

/// The surrogate recomputed from scratch for two topics, where every
/// document's mode is a scalar.
fn d_lik_two_topics(fit: &clustlda::FitResult, corpus: &Corpus, beta: f64) -> f64 {
    let sigma = fit.prevalence.sigma[(0, 0)];
    let mut total = 0.0;
    for (d, doc) in corpus.documents.iter().enumerate() {
        let state = &fit.doc_states[d];
        let eta = state.eta[0];
        let mean = fit.prevalence.gamma[(fit.assignment.labels[fit.doc_authors[d]], 0)];
        let t0 = eta.exp() / (1.0 + eta.exp());
        let mut f = -0.5 * (2.0 * std::f64::consts::PI * sigma).ln() - 0.5 * (eta - mean).powi(2) / sigma;
        for (w, c) in doc.bag_of_words() {
            f += c * (t0 * fit.phi.get(0, w) + (1.0 - t0) * fit.phi.get(1, w)).ln();
        }
        total += f + 0.5 * (2.0 * std::f64::consts::PI * state.nu[(0, 0)]).ln();
    }
    let phi_prior: f64 = (0..2)
        .flat_map(|k| fit.phi.row(k).iter().map(|p| (beta - 1.0) * p.ln()).collect::<Vec<_>>())
        .sum();
    let gamma_prior = -0.5 * fit.prevalence.gamma.iter().map(|g| g * g).sum::<f64>() / fit.prevalence.sigma0_sq;
    total + phi_prior + gamma_prior + fit.gmm_penalized_loglik
}

#[test]
fn likelihood_surrogate_matches_direct_evaluation() {
    for seed in 0..3 {
        let hp = Hyperparameters {
            k: 2,
            beta: 1.1,
            ..small_hp(20 + seed)
        };
        let (corpus, _) = simulate(&hp).unwrap();
        let fit = run_ecm(&corpus, &quick_config(&hp), seed).unwrap();
        let oracle = d_lik_two_topics(&fit, &corpus, hp.beta);
        assert!((fit.d_lik - oracle).abs() < 1e-8 * oracle.abs(), "{} vs {}", fit.d_lik, oracle);
        assert_eq!(fit.d_lik, compute_d_lik(&fit));
        let bound = total_bound(&fit.doc_states, &fit.phi, &fit.prevalence, hp.beta);
        assert!((bound - fit.tstep_bound).abs() < 1e-9 * bound.abs());
    }
}

#[test]
fn fits_are_deterministic_down_to_the_serialized_model() {
    let hp = small_hp(4);
    let (corpus, _) = simulate(&hp).unwrap();
    let cfg = quick_config(&hp);
    let a = multi_start(&corpus, &cfg, 3, Selector::Lik, 77).unwrap();
    let b = multi_start(&corpus, &cfg, 3, Selector::Lik, 77).unwrap();
    assert_eq!(a.best.d_lik, b.best.d_lik);
    assert_eq!(a.summary, b.summary);
    let ja = ModelArtifact::from_fit(&a.best, &corpus).to_json().unwrap();
    let jb = ModelArtifact::from_fit(&b.best, &corpus).to_json().unwrap();
    assert_eq!(ja, jb);
    let back = ModelArtifact::from_json(&ja).unwrap();
    assert_eq!(back.to_json().unwrap(), ja);
}

#[test]
fn selectors_pick_the_best_restart() {
    let hp = small_hp(6);
    let (corpus, _) = simulate(&hp).unwrap();
    let cfg = quick_config(&hp);
    for selector in [Selector::Lik, Selector::Disp] {
        let res = multi_start(&corpus, &cfg, 4, selector, 5).unwrap();
        let score = |s: &clustlda::RestartSummary| match selector {
            Selector::Lik => s.d_lik.unwrap(),
            Selector::Disp => -s.d_disp.unwrap(),
        };
        let best = res.summary.iter().map(score).fold(f64::NEG_INFINITY, f64::max);
        let chosen = &res.summary[res.best_restart];
        assert_eq!(score(chosen), best);
        let lowest_tied_seed = res.summary.iter().filter(|s| score(s) == best).map(|s| s.seed).min().unwrap();
        assert_eq!(chosen.seed, lowest_tied_seed);
        assert_eq!(res.best.seed, chosen.seed);
    }
}

#[test]
fn noiseless_well_separated_clusters_are_recovered() {
    // Documents sit exactly on their cluster's mean; cluster means are five
    // prior standard deviations apart.
    let sigma0_sq: f64 = 0.25;
    let c = 5.0 * sigma0_sq.sqrt() / 2f64.sqrt();
    let n_authors = 30;
    let hp = Hyperparameters {
        k: 4,
        n_clusters: 3,
        vocab_size: 100,
        sigma0_sq,
        sigma_doc: 0.0,
        n_docs: n_authors * 5,
        n_authors,
        mean_doc_len: 100.0,
        seed: 12,
        ..Hyperparameters::default()
    };
    let mut params = sample_model(&hp).unwrap();
    params.gamma = (0..3).map(|l| (0..3).map(|j| if j == l { c } else { 0.0 }).collect()).collect();
    let owner: Vec<usize> = (0..hp.n_docs).map(|d| d / 5).collect();
    let (corpus, truth) = sample_corpus_with_owners(&hp, &params, &owner).unwrap();
    let fit = run_ecm(&corpus, &ecm_config_for(&hp), 3).unwrap();
    assert_eq!(rand_index(&fit.assignment.labels, &truth.labels).unwrap(), 1.0);
}
