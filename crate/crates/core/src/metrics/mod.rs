//! Evaluation metrics.

mod chrf;
mod clme;
mod diversity;
mod emt;

pub use chrf::{chrf_pp, chrf_words, ChrfConfig};
pub use clme::{clme, read_clme_csv, write_clme_csv, ClmeRow, EmtMatrix};
pub use diversity::{continuation_words, distinct_n, fluency};
pub use emt::{emt, emt_with_coverage, relative_emt, Coverage, EmtResult, RelativeEmt, ScoreMatrix};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub distinct_orders: Vec<usize>,
    pub chrf: ChrfConfig,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            distinct_orders: vec![1, 2, 3],
            chrf: ChrfConfig::default(),
        }
    }
}
