//! Labeled corpora: JSONL ingestion, seeded sampling, parallel and
//! non-parallel selection, token counting, machine translation providers
//! and the round-trip translation study.

mod load;
mod regime;
mod roundtrip;
mod sample;
mod sampling;
mod translate;

pub use load::{import_csv, load_corpus, save_corpus, write_corpus, MAX_MALFORMED_FRACTION};
pub use regime::{select_languages, DataRegime};
pub use roundtrip::{quantile, roundtrip_study, RoundtripStage, RoundtripStudy, RoundtripTriple, StageSummary};
pub use sample::{Label, LabeledSample, Origin};
pub use sampling::{count_tokens, partition_unparallel, sample_plan, select_parallel, SamplingPlan, TokenCounts};
pub use translate::{
    mt_mock_handler, translate_batch, CachedProvider, Dictionary, IdentityProvider, LossyProvider, MtProvider,
    RemoteMtProvider, TranslateOptions, TranslatedBatch, TranslationFailure,
};
