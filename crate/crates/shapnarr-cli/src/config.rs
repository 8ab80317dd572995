//! Settings resolution: CLI flag > environment variable > config file >
//! built-in default, per flag.

use crate::{CliError, CommonArgs};
use serde::Deserialize;
use shapnarr::GenerationParams;
use std::path::PathBuf;
use std::time::Duration;

pub const ENV_LLM_URL: &str = "SHAPNARR_LLM_URL";
pub const ENV_LLM_TOKEN: &str = "SHAPNARR_LLM_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MethodArg {
    Exact,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BackendArg {
    Http,
    Template,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FormatArg {
    Text,
    Json,
}

/// Optional settings accepted from a `--config` JSON file. Unknown keys are
/// rejected so typos surface instead of silently falling back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<PathBuf>,
    meta: Option<PathBuf>,
    schema: Option<PathBuf>,
    data: Option<PathBuf>,
    row: Option<usize>,
    background_k: Option<usize>,
    seed: Option<u64>,
    method: Option<String>,
    permutations: Option<u64>,
    top_k: Option<usize>,
    backend: Option<String>,
    llm_url: Option<String>,
    llm_model: Option<String>,
    temperature: Option<f64>,
    max_tokens: Option<u32>,
    timeout_secs: Option<f64>,
    retries: Option<u32>,
    format: Option<String>,
}

/// Fully resolved settings for one command invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model_path: Option<PathBuf>,
    pub meta_path: Option<PathBuf>,
    pub schema_path: Option<PathBuf>,
    pub data_path: Option<PathBuf>,
    pub row_index: usize,
    pub background_k: usize,
    pub seed: u64,
    pub method: MethodArg,
    pub n_permutations: u64,
    pub top_k: usize,
    pub backend: BackendArg,
    pub llm_url: Option<String>,
    pub llm_token: Option<String>,
    pub params: GenerationParams,
    pub output_format: FormatArg,
}

fn parse_method(s: &str) -> Result<MethodArg, CliError> {
    match s {
        "exact" => Ok(MethodArg::Exact),
        "permutation" => Ok(MethodArg::Permutation),
        other => Err(CliError::Config(format!("unknown method {other:?}"))),
    }
}

fn parse_backend(s: &str) -> Result<BackendArg, CliError> {
    match s {
        "http" => Ok(BackendArg::Http),
        "template" => Ok(BackendArg::Template),
        other => Err(CliError::Config(format!("unknown backend {other:?}"))),
    }
}

fn parse_format(s: &str) -> Result<FormatArg, CliError> {
    match s {
        "text" => Ok(FormatArg::Text),
        "json" => Ok(FormatArg::Json),
        other => Err(CliError::Config(format!("unknown format {other:?}"))),
    }
}

pub fn resolve(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };

    let method = match args.method {
        Some(m) => m,
        None => file
            .method
            .as_deref()
            .map(parse_method)
            .transpose()?
            .unwrap_or(MethodArg::Exact),
    };
    let backend = match args.backend {
        Some(b) => b,
        None => file
            .backend
            .as_deref()
            .map(parse_backend)
            .transpose()?
            .unwrap_or(BackendArg::Template),
    };
    let output_format = match args.format {
        Some(f) => f,
        None => file
            .format
            .as_deref()
            .map(parse_format)
            .transpose()?
            .unwrap_or(FormatArg::Text),
    };

    let defaults = GenerationParams::default();
    let params = GenerationParams {
        temperature: args
            .temperature
            .or(file.temperature)
            .unwrap_or(defaults.temperature),
        max_tokens: args
            .max_tokens
            .or(file.max_tokens)
            .unwrap_or(defaults.max_tokens),
        model_name: file.llm_model.unwrap_or(defaults.model_name),
        timeout: file
            .timeout_secs
            .map(Duration::from_secs_f64)
            .unwrap_or(defaults.timeout),
        retries: file.retries.unwrap_or(defaults.retries),
    };
    params
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let n_permutations = args.permutations.or(file.permutations).unwrap_or(200);
    if method == MethodArg::Permutation && n_permutations == 0 {
        return Err(CliError::Config(
            "--permutations must be at least 1 for the permutation method".to_string(),
        ));
    }
    let top_k = args.top_k.or(file.top_k).unwrap_or(3);
    if top_k == 0 {
        return Err(CliError::Config("--top-k must be at least 1".to_string()));
    }

    Ok(RunConfig {
        model_path: args.model.clone().or(file.model),
        meta_path: args.meta.clone().or(file.meta),
        schema_path: args.schema.clone().or(file.schema),
        data_path: args.data.clone().or(file.data),
        row_index: args.row.or(file.row).unwrap_or(0),
        background_k: args.background_k.or(file.background_k).unwrap_or(32),
        seed: args.seed.or(file.seed).unwrap_or(7),
        method,
        n_permutations,
        top_k,
        backend,
        llm_url: args
            .llm_url
            .clone()
            .or_else(|| std::env::var(ENV_LLM_URL).ok())
            .or(file.llm_url),
        llm_token: std::env::var(ENV_LLM_TOKEN).ok(),
        params,
        output_format,
    })
}
