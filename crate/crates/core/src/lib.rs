//! Text-only speaker diarization.
//!
//! Conversations are diarized by deciding, for every pair of consecutive
//! sentences, whether the speaker changes. Decisions come from a
//! [`ChangePredictor`], either one prediction per boundary ([`run_spm`]) or
//! many overlapping window predictions reduced by vote ([`run_mpm`]).
//! Multi-party conversations label sentences per window and reconcile the
//! window label spaces by bipartite matching ([`run_multispeaker`]).
//!
//! Supporting modules align ASR output to reference transcripts, train a
//! hashed-feature logistic baseline, score WDER and WDER-S, and generate
//! synthetic corpora with noisy oracle predictors.

pub mod aggregation;
pub mod alignment;
pub mod assignment;
pub mod error;
pub mod features;
pub mod metrics;
pub mod model;
pub mod multispeaker;
pub mod pipeline;
pub mod predictor;
pub mod synth;
pub mod train;
pub mod transcript;
pub mod windowing;

pub use aggregation::{
    aggregate, efficacy_analysis, run_mpm, run_spm, AggregationKind, AggregationPolicy, EfficacyCategory, EfficacyReport,
    MpmRun, VoteSet,
};
pub use alignment::{align_conversation, align_words, ScoreScheme, TokenStream, WordAlignment};
pub use error::{Error, Result};
pub use features::{Featurizer, FeaturizerConfig};
pub use metrics::{
    evaluate_conversation, optimal_speaker_mapping, summarize, wder, wder_s, BucketMode, BucketReport,
    ConversationResult, CorpusSummary, SpeakerMapping,
};
pub use model::{LinearModel, Mode, ModelFile, SoftmaxModel};
pub use multispeaker::{run_multispeaker, AgreementMode, SpeakerLabelSet, SpeakerLabeler, WindowLabeling};
pub use pipeline::{predict_conversation, Engine, PipelineSettings, PredictionRecord};
pub use predictor::{ChangePredictor, PredictorHandle, RemoteConfig, RemotePredictor, WindowPrediction};
pub use synth::{NoisyOracle, PermutingOracle, SynthConfig};
pub use train::{TrainConfig, TrainReport};
pub use transcript::{
    decode_speakers, derive_change_sequence, ChangeSequence, Conversation, Sentence, SpeakerAssignment,
};
pub use windowing::{MpmWindow, SpmContext, WindowSet};
