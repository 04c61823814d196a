use clustlda::eval::align_topics;
use clustlda::generator::{sample_corpus, sample_model, simulate, Hyperparameters};
use clustlda::linalg::l1_distance;
use clustlda::{fit_author_topic, fit_conditional_stm, fit_vanilla_lda, ModelKind, TStepConfig};

fn small_hp(seed: u64) -> Hyperparameters {
    Hyperparameters {
        k: 3,
        n_clusters: 2,
        vocab_size: 30,
        sigma0_sq: 1.0,
        n_docs: 60,
        n_authors: 20,
        mean_doc_len: 30.0,
        seed,
        ..Hyperparameters::default()
    }
}

fn config(k: usize, seed: u64) -> TStepConfig {
    TStepConfig {
        max_iter: 60,
        ..TStepConfig::new(k, 1.0, 1.0, seed)
    }
}

#[test]
fn outputs_have_the_documented_shapes() {
    let hp = small_hp(0);
    let (corpus, _) = simulate(&hp).unwrap();
    let lda = fit_vanilla_lda(&corpus, &config(3, 1)).unwrap();
    let at = fit_author_topic(&corpus, &config(3, 1)).unwrap();
    assert_eq!(lda.kind, ModelKind::Lda);
    assert_eq!(at.kind, ModelKind::At);
    for fit in [&lda, &at] {
        assert_eq!(fit.tstep.phi.num_topics(), 3);
        assert_eq!(fit.tstep.phi.vocab_size(), corpus.vocab_size());
        assert_eq!(fit.tstep.doc_states.len(), corpus.num_docs());
        assert_eq!(fit.author_topics.len(), corpus.num_authors());
        for v in &fit.author_topics {
            assert_eq!(v.len(), 3);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(v.iter().all(|&x| x >= 0.0));
        }
    }
    assert_eq!(lda.tstep.prevalence.gamma.nrows(), 1);
    assert_eq!(at.tstep.prevalence.gamma.nrows(), corpus.num_authors());
}

#[test]
fn lda_author_vectors_average_document_proportions() {
    let (corpus, _) = simulate(&small_hp(2)).unwrap();
    let lda = fit_vanilla_lda(&corpus, &config(3, 4)).unwrap();
    for (a, docs) in corpus.docs_by_author().iter().enumerate() {
        for k in 0..3 {
            let mean = docs.iter().map(|&d| lda.tstep.doc_states[d].theta[k]).sum::<f64>() / docs.len() as f64;
            assert!((lda.author_topics[a][k] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn author_topic_with_one_author_reduces_to_lda() {
    let hp = Hyperparameters {
        n_authors: 1,
        n_clusters: 1,
        n_docs: 40,
        ..small_hp(5)
    };
    let (corpus, _) = simulate(&hp).unwrap();
    let lda = fit_vanilla_lda(&corpus, &config(3, 8)).unwrap();
    let at = fit_author_topic(&corpus, &config(3, 8)).unwrap();
    assert_eq!(lda.tstep.phi, at.tstep.phi);
    assert_eq!(lda.tstep.bound, at.tstep.bound);
    assert_eq!(lda.tstep.prevalence.gamma, at.tstep.prevalence.gamma);
}

#[test]
fn author_topic_is_the_engine_with_author_levels() {
    let (corpus, _) = simulate(&small_hp(7)).unwrap();
    let cfg = config(3, 2);
    let at = fit_author_topic(&corpus, &cfg).unwrap();
    let direct = fit_conditional_stm(&corpus, &corpus.doc_authors(), corpus.num_authors(), &cfg, None).unwrap();
    assert_eq!(at.tstep.bound, direct.bound);
    assert_eq!(at.tstep.phi, direct.phi);
}

#[test]
fn disjoint_vocabulary_blocks_are_separated() {
    // Each topic owns its own block of ten words and each cluster leans on
    // a different topic, so document mixtures vary.
    let hp = Hyperparameters {
        k: 3,
        n_clusters: 3,
        vocab_size: 30,
        sigma0_sq: 1.0,
        n_docs: 150,
        n_authors: 50,
        mean_doc_len: 60.0,
        seed: 31,
        ..Hyperparameters::default()
    };
    let mut params = sample_model(&hp).unwrap();
    params.phi = (0..3).map(|k| (0..30).map(|w| if w / 10 == k { 0.1 } else { 0.0 }).collect()).collect();
    params.gamma = vec![vec![3.0, 0.0], vec![0.0, 3.0], vec![-3.0, -3.0]];
    let (corpus, truth) = sample_corpus(&hp, &params).unwrap();
    let truth_phi = clustlda::experiment::truth_phi_on(&corpus.vocabulary, &truth);
    for fit in [fit_vanilla_lda(&corpus, &config(3, 0)).unwrap(), fit_author_topic(&corpus, &config(3, 0)).unwrap()] {
        let rows = fit.tstep.phi.rows();
        let perm = align_topics(&rows, &truth_phi).unwrap();
        for (k, row) in rows.iter().enumerate() {
            assert!(l1_distance(row, &truth_phi[perm[k]]) < 0.1, "{:?} topic {k}: {}", fit.kind, l1_distance(row, &truth_phi[perm[k]]));
        }
    }
}
