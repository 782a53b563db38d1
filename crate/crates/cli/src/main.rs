//! `csrms` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csrms_core::pipeline::{cmd_cluster, cmd_eval, cmd_export_repr, cmd_graph, cmd_synth, cmd_train, RunConfig};
use csrms_core::CsrmsError;

#[derive(Parser, Debug)]
#[command(name = "csrms", version, about = "Class-aware relational smoothing over precomputed embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Flat JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Field overrides as `--<field> <value>` pairs.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic feature set.
    Synth(Common),
    /// Fit the ART clustering on the training split.
    Cluster(Common),
    /// Derive the relation graph from the cluster model.
    Graph(Common),
    /// Train the smoothing model and classifier.
    Train(Common),
    /// Evaluate the checkpoint on the evaluation split.
    Eval(Common),
    /// Write aligned training representations as CSV.
    ExportRepr {
        #[command(flatten)]
        common: Common,
        /// Output path; defaults to the config's `repr`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, CsrmsError> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| CsrmsError::Config { field: flag.clone(), detail: "expected --<field> <value>".into() })?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CsrmsError::Config { field: key.to_string(), detail: "missing value".into() })?;
                (key.to_string(), v.clone())
            }
        };
        out.push((key, value));
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<String, CsrmsError> {
    let (common, out) = match &cli.command {
        Command::Synth(c) | Command::Cluster(c) | Command::Graph(c) | Command::Train(c) | Command::Eval(c) => (c, None),
        Command::ExportRepr { common, out } => (common, out.as_deref()),
    };
    let cfg = RunConfig::load(&common.config, &parse_overrides(&common.overrides)?)?;
    match cli.command {
        Command::Synth(_) => cmd_synth(&cfg),
        Command::Cluster(_) => cmd_cluster(&cfg),
        Command::Graph(_) => cmd_graph(&cfg),
        Command::Train(_) => cmd_train(&cfg),
        Command::Eval(_) => cmd_eval(&cfg),
        Command::ExportRepr { .. } => cmd_export_repr(&cfg, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(CsrmsError::MissingArtifact(path)) => {
            eprintln!("error: missing artifact: {}", path.display());
            ExitCode::from(2)
        }
        Err(CsrmsError::Config { field, detail }) => {
            eprintln!("error: invalid config field `{field}`: {detail}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
