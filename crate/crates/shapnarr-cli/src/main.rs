//! Command-line surface: predict, shap, explain, verify, and an end-to-end
//! demo over the committed fixtures.
//!
//! Results go to stdout (text by default, JSON with `--format json`);
//! diagnostics go to stderr as a single `CATEGORY: message` line with a
//! nonzero exit status.

mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use config::{resolve, BackendArg, FormatArg, MethodArg, RunConfig};
use output::{PredictionOut, Provenance, Report};
use shapnarr::data::{load_csv, load_csv_file, load_schema, load_schema_file, select_background};
use shapnarr::explain::DEFAULT_MAX_CHARS;
use shapnarr::{
    build_attribution_payload, exact_shap, permutation_shap, run_explanation, verify_explanation,
    BackgroundSet, Dataset, FeatureVector, GenerationBackend, HttpBackend, Objective,
    PromptTemplate, ShapResult, TemplateBackend, TreeEnsemble,
};
use std::io::Read;
use std::path::PathBuf;

const DEMO_MODEL: &str = include_str!("../../../fixtures/titanic/model.json");
const DEMO_METADATA: &str = include_str!("../../../fixtures/titanic/metadata.json");
const DEMO_SCHEMA: &str = include_str!("../../../fixtures/titanic/schema.json");
const DEMO_CSV: &str = include_str!("../../../fixtures/titanic/passengers.csv");

#[derive(Parser)]
#[command(
    name = "shapnarr",
    version,
    about = "SHAP attributions for tree-ensemble predictions, narrated in plain language"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Margin and probability for one data row
    Predict(CommonArgs),
    /// SHAP attribution for one data row
    Shap(CommonArgs),
    /// Attribution plus a generated, verified explanation
    Explain(CommonArgs),
    /// Re-run faithfulness verification on explanation text from stdin
    Verify(CommonArgs),
    /// End-to-end run over the committed fixtures with the template backend
    Demo(CommonArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// Model dump JSON (array of trees)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Model metadata JSON (base_score, feature_names, objective)
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Column schema JSON
    #[arg(long)]
    schema: Option<PathBuf>,
    /// CSV data file
    #[arg(long)]
    data: Option<PathBuf>,
    /// Zero-based row to explain [default: 0]
    #[arg(long)]
    row: Option<usize>,
    /// Background rows sampled from the data [default: 32]
    #[arg(long = "background-k")]
    background_k: Option<usize>,
    /// Seed for background sampling and the permutation estimator [default: 7]
    #[arg(long)]
    seed: Option<u64>,
    /// Attribution method [default: exact]
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Permutation count for the permutation method [default: 200]
    #[arg(long = "permutations")]
    permutations: Option<u64>,
    /// Features shown in prompts and verified [default: 3]
    #[arg(long = "top-k")]
    top_k: Option<usize>,
    /// Generation backend [default: template]
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Base URL of an OpenAI-compatible completions endpoint
    #[arg(long = "llm-url")]
    llm_url: Option<String>,
    /// Sampling temperature [default: 0.2]
    #[arg(long)]
    temperature: Option<f64>,
    /// Completion token budget [default: 256]
    #[arg(long = "max-tokens")]
    max_tokens: Option<u32>,
    /// Output format [default: text]
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// JSON config file supplying any of the above settings
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Model(shapnarr::ModelError),
    Data(shapnarr::DataError),
    Shap(shapnarr::ShapError),
    Backend(shapnarr::ExplainError),
    Verify(String),
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "CONFIG",
            CliError::Model(_) => "MODEL_PARSE",
            CliError::Data(_) => "DATA",
            CliError::Shap(_) => "SHAP",
            CliError::Backend(_) => "BACKEND",
            CliError::Verify(_) => "VERIFY",
        }
    }

    fn line(&self) -> String {
        let message = match self {
            CliError::Config(m) | CliError::Verify(m) => m.clone(),
            CliError::Model(e) => e.to_string(),
            CliError::Data(e) => e.to_string(),
            CliError::Shap(e) => e.to_string(),
            CliError::Backend(e) => e.to_string(),
        };
        format!("{}: {}", self.category(), message.replace('\n', " "))
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("{}", e.line());
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Predict(args) => {
            let cfg = resolve(&args)?;
            let (model, _, x) = load_inputs(&cfg)?;
            let report = predict_report(&cfg, &model, &x)?;
            emit(&cfg, &report)
        }
        Command::Shap(args) => {
            let cfg = resolve(&args)?;
            let (model, dataset, x) = load_inputs(&cfg)?;
            let background =
                select_background(&dataset, cfg.background_k, cfg.seed).map_err(CliError::Data)?;
            let shap = compute_shap(&cfg, &model, &x, &background)?;
            let report = Report {
                prediction: Some(prediction_out(&model, &x)?),
                shap: Some(Report::shap_section(&shap, model.feature_names(), &x)),
                explanation: None,
                verification: None,
                provenance: shap_provenance("shap", &cfg, &shap),
            };
            emit(&cfg, &report)
        }
        Command::Explain(args) => {
            let cfg = resolve(&args)?;
            let (model, dataset, x) = load_inputs(&cfg)?;
            let report = explain_report("explain", &cfg, &model, &dataset, &x)?;
            emit(&cfg, &report)
        }
        Command::Verify(args) => {
            let cfg = resolve(&args)?;
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| CliError::Verify(format!("cannot read stdin: {e}")))?;
            if text.trim().is_empty() {
                return Err(CliError::Verify("no explanation text on stdin".to_string()));
            }
            let (model, dataset, x) = load_inputs(&cfg)?;
            let background =
                select_background(&dataset, cfg.background_k, cfg.seed).map_err(CliError::Data)?;
            let shap = compute_shap(&cfg, &model, &x, &background)?;
            let probability = probability_of(&model, &x)?;
            let payload =
                build_attribution_payload(&shap, model.feature_names(), &x, probability, None)
                    .map_err(CliError::Backend)?;
            let verification = verify_explanation(&payload, &text, cfg.top_k);
            let report = Report {
                prediction: None,
                shap: None,
                explanation: None,
                verification: Some(verification),
                provenance: shap_provenance("verify", &cfg, &shap),
            };
            emit(&cfg, &report)
        }
        Command::Demo(args) => {
            let cfg = resolve(&args)?;
            let model =
                TreeEnsemble::from_json_strs(DEMO_MODEL, DEMO_METADATA).map_err(CliError::Model)?;
            let schema = load_schema(DEMO_SCHEMA.as_bytes()).map_err(CliError::Data)?;
            let dataset = load_csv(DEMO_CSV.as_bytes(), &schema, true).map_err(CliError::Data)?;
            let x = pick_row(&dataset, cfg.row_index)?;
            let report = explain_report("demo", &cfg, &model, &dataset, &x)?;
            emit(&cfg, &report)
        }
    }
}

fn require(path: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    path.clone()
        .ok_or_else(|| CliError::Config(format!("{flag} is required (flag or config file)")))
}

fn pick_row(dataset: &Dataset, row_index: usize) -> Result<FeatureVector, CliError> {
    dataset.rows.get(row_index).cloned().ok_or_else(|| {
        CliError::Data(shapnarr::DataError::Schema(format!(
            "row {row_index} out of range for {} data rows",
            dataset.n_rows()
        )))
    })
}

fn load_inputs(cfg: &RunConfig) -> Result<(TreeEnsemble, Dataset, FeatureVector), CliError> {
    let model_path = require(&cfg.model_path, "--model")?;
    let meta_path = require(&cfg.meta_path, "--meta")?;
    let schema_path = require(&cfg.schema_path, "--schema")?;
    let data_path = require(&cfg.data_path, "--data")?;

    let model = TreeEnsemble::from_files(model_path, meta_path).map_err(CliError::Model)?;
    let schema = load_schema_file(schema_path).map_err(CliError::Data)?;
    let dataset = load_csv_file(data_path, &schema, true).map_err(CliError::Data)?;
    let data_names = dataset.feature_names();
    if data_names != model.feature_names() {
        return Err(CliError::Data(shapnarr::DataError::Schema(format!(
            "schema columns {:?} do not match model features {:?}",
            data_names,
            model.feature_names()
        ))));
    }
    let x = pick_row(&dataset, cfg.row_index)?;
    Ok((model, dataset, x))
}

fn probability_of(model: &TreeEnsemble, x: &FeatureVector) -> Result<Option<f64>, CliError> {
    match model.objective() {
        Objective::BinaryLogistic => {
            Ok(Some(model.predict_probability(x).map_err(CliError::Model)?))
        }
        Objective::Regression => Ok(None),
    }
}

fn prediction_out(model: &TreeEnsemble, x: &FeatureVector) -> Result<PredictionOut, CliError> {
    Ok(PredictionOut {
        margin: model.predict_margin(x).map_err(CliError::Model)?,
        probability: probability_of(model, x)?,
    })
}

fn predict_report(
    cfg: &RunConfig,
    model: &TreeEnsemble,
    x: &FeatureVector,
) -> Result<Report, CliError> {
    Ok(Report {
        prediction: Some(prediction_out(model, x)?),
        shap: None,
        explanation: None,
        verification: None,
        provenance: Provenance {
            command: "predict".to_string(),
            row_index: Some(cfg.row_index),
            method: None,
            seed: None,
            n_permutations: None,
            background_k: None,
            backend_id: None,
            params: None,
        },
    })
}

fn compute_shap(
    cfg: &RunConfig,
    model: &TreeEnsemble,
    x: &FeatureVector,
    background: &BackgroundSet,
) -> Result<ShapResult, CliError> {
    let result = match cfg.method {
        MethodArg::Exact => exact_shap(model, x, background),
        MethodArg::Permutation => {
            permutation_shap(model, x, background, cfg.n_permutations, cfg.seed)
        }
    };
    result.map_err(CliError::Shap)
}

fn shap_provenance(command: &str, cfg: &RunConfig, shap: &ShapResult) -> Provenance {
    Provenance {
        command: command.to_string(),
        row_index: Some(cfg.row_index),
        method: Some(shap.method),
        // The run seed drives background sampling as well as the estimator,
        // so it is the one that reproduces the run.
        seed: Some(cfg.seed),
        n_permutations: Some(shap.n_permutations),
        background_k: Some(cfg.background_k),
        backend_id: None,
        params: None,
    }
}

fn explain_report(
    command: &str,
    cfg: &RunConfig,
    model: &TreeEnsemble,
    dataset: &Dataset,
    x: &FeatureVector,
) -> Result<Report, CliError> {
    let background =
        select_background(dataset, cfg.background_k, cfg.seed).map_err(CliError::Data)?;
    let shap = compute_shap(cfg, model, x, &background)?;
    let probability = probability_of(model, x)?;
    let payload = build_attribution_payload(&shap, model.feature_names(), x, probability, None)
        .map_err(CliError::Backend)?;

    let backend: Box<dyn GenerationBackend> = match cfg.backend {
        BackendArg::Template => Box::new(TemplateBackend::new(payload.clone(), cfg.top_k)),
        BackendArg::Http => {
            let url = cfg.llm_url.as_deref().ok_or_else(|| {
                CliError::Config(format!(
                    "the http backend needs --llm-url, {} or a config entry",
                    config::ENV_LLM_URL
                ))
            })?;
            Box::new(HttpBackend::new(url, cfg.llm_token.clone()))
        }
    };

    let result = run_explanation(
        &*backend,
        &payload,
        &PromptTemplate::default(),
        &cfg.params,
        cfg.top_k,
        DEFAULT_MAX_CHARS,
    )
    .map_err(CliError::Backend)?;

    let mut provenance = shap_provenance(command, cfg, &shap);
    provenance.backend_id = Some(result.backend_id.clone());
    provenance.params = Some(result.params.clone());

    Ok(Report {
        prediction: Some(prediction_out(model, x)?),
        shap: Some(Report::shap_section(&shap, model.feature_names(), x)),
        explanation: Some(Report::explanation_section(&result)),
        verification: Some(result.verification),
        provenance,
    })
}

fn emit(cfg: &RunConfig, report: &Report) -> Result<(), CliError> {
    match cfg.output_format {
        FormatArg::Json => println!("{}", report.to_json()),
        FormatArg::Text => {
            let mut stdout = std::io::stdout().lock();
            report
                .write_text(&mut stdout)
                .map_err(|e| CliError::Verify(format!("cannot write output: {e}")))?;
        }
    }
    Ok(())
}
