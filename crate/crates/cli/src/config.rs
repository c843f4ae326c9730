//! TOML run configuration for `bench-all`.
//!
//! Everything is a flat key-value table per section; all randomness flows
//! from the single top-level `seed`. Environment variables are never
//! consulted.

use std::path::PathBuf;

use serde::Deserialize;

use hnsw_merge::{MergeAlgo, MergeParams};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Default report path; the `--out` flag overrides it.
    pub output: Option<PathBuf>,
    pub data: DataSection,
    #[serde(default)]
    pub build: BuildSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(rename = "merge")]
    pub merges: Vec<MergeSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// fvecs base file; synthetic data is generated when absent.
    pub base: Option<PathBuf>,
    /// fvecs query file; without it, `query_count` vectors are held out
    /// from the tail of the base set.
    pub queries: Option<PathBuf>,
    /// ivecs ground-truth file; computed by brute force when absent.
    pub ground_truth: Option<PathBuf>,
    #[serde(default = "default_split")]
    pub split_fraction: f64,
    #[serde(default = "default_query_count")]
    pub query_count: usize,
    #[serde(default)]
    pub synthetic: SyntheticSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub n: usize,
    pub dim: usize,
    pub clusters: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            n: 20_000,
            dim: 128,
            clusters: 32,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildSection {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_m0")]
    pub m0: usize,
    #[serde(default = "default_efc")]
    pub ef_construction: usize,
}

impl Default for BuildSection {
    fn default() -> Self {
        BuildSection {
            m: default_m(),
            m0: default_m0(),
            ef_construction: default_efc(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_beams")]
    pub beams: Vec<usize>,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            k: default_k(),
            beams: default_beams(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeSection {
    pub algo: String,
    pub label: Option<String>,
    pub m: Option<usize>,
    pub m0: Option<usize>,
    pub search_ef: Option<usize>,
    pub jump_ef: Option<usize>,
    pub local_ef: Option<usize>,
    pub next_step_k: Option<usize>,
    pub next_step_ef: Option<usize>,
    pub m_carry: Option<usize>,
    pub seed: Option<u64>,
}

impl MergeSection {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.algo.clone())
    }

    /// Layer-merge parameters with per-job overrides on top of the build
    /// caps and the run seed.
    pub fn merge_params(&self, build: &BuildSection, run_seed: u64) -> MergeParams {
        let defaults = MergeParams::default();
        MergeParams {
            m: self.m.unwrap_or(build.m),
            m0: self.m0.unwrap_or(build.m0),
            search_ef: self.search_ef.unwrap_or(defaults.search_ef),
            jump_ef: self.jump_ef.unwrap_or(defaults.jump_ef),
            local_ef: self.local_ef.unwrap_or(defaults.local_ef),
            next_step_k: self.next_step_k.unwrap_or(defaults.next_step_k),
            next_step_ef: self.next_step_ef.unwrap_or(defaults.next_step_ef),
            m_carry: self.m_carry.unwrap_or(defaults.m_carry),
            seed: self.seed.unwrap_or(run_seed),
        }
    }

    pub fn algo(&self) -> Result<Option<MergeAlgo>, String> {
        match self.algo.as_str() {
            "sigm" => Ok(None),
            other => other
                .parse::<MergeAlgo>()
                .map(Some)
                .map_err(|e| e.to_string()),
        }
    }
}

fn default_split() -> f64 {
    0.5
}

fn default_query_count() -> usize {
    100
}

fn default_m() -> usize {
    16
}

fn default_m0() -> usize {
    32
}

fn default_efc() -> usize {
    32
}

fn default_k() -> usize {
    5
}

fn default_beams() -> Vec<usize> {
    vec![32, 40, 50, 64, 72]
}
