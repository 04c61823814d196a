//! Joint topic modeling and author clustering.
//!
//! Authors belong to latent clusters; each cluster carries a vector of
//! topic weights that sets the logistic-normal mean of its authors'
//! document topic proportions. Inference alternates a conditional topic
//! model fit ([`tstep`]) with an author-constrained Gaussian mixture
//! ([`cstep`]), driven by [`ecm`].

pub mod artifact;
pub mod baselines;
pub mod corpus;
pub mod cstep;
pub mod ecm;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod generator;
pub mod linalg;
pub mod rng;
pub mod tstep;

pub use artifact::ModelArtifact;
pub use baselines::{fit_author_topic, fit_vanilla_lda, BaselineFit, ModelKind};
pub use corpus::{build_corpus, load_jsonl, Corpus, CorpusConfig, Document, FieldMap, RawRecord, Tokenizer, Vocabulary};
pub use cstep::{gmm_em, select_n_clusters, BicRow, ClusterAssignment, GmmFit, GmmOptions, GroupedPoints};
pub use ecm::{multi_start, run_ecm, EcmConfig, FitResult, MultiStartResult, RestartSummary, Selector};
pub use error::{Error, Result};
pub use eval::{rand_index, EvalReport};
pub use generator::{sample_corpus, sample_corpus_with_owners, sample_model, simulate, Hyperparameters, SyntheticTruth, TruthParams};
pub use tstep::{fit_conditional_stm, DocTopicState, PrevalenceParams, TStepConfig, TStepFit, TopicMatrix};
