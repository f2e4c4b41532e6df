use clap::{Parser, Subcommand};
use gaugeid::cli::{self, ExperimentConfig, EXIT_CONFIG, EXIT_OK};
use gaugeid::error::Error;
use gaugeid::field::MatrixField;
use std::path::PathBuf;
use std::process::ExitCode;

/// Gauge identifiability experiments on the unit disk.
#[derive(Parser)]
#[command(name = "gaugeid", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// List the built-in potential corpus.
    Corpus {
        /// Print the entries as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Render a scalar field file as an SVG heatmap.
    Render { field: PathBuf, out: PathBuf },
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(e) = cli::init_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let code = match args.command {
        Command::Run { config } => {
            let result = ExperimentConfig::load(&config).and_then(|c| cli::run(&c));
            match &result {
                Ok(outcome) => {
                    for a in &outcome.artifacts {
                        println!("wrote {a}");
                    }
                    for f in &outcome.flags {
                        println!("flag: {f}");
                    }
                }
                Err(e) => eprintln!("error: {e}"),
            }
            cli::exit_code(&result)
        }
        Command::Corpus { json } => {
            if json {
                match serde_json::to_string_pretty(&cli::corpus()) {
                    Ok(s) => println!("{s}"),
                    Err(e) => eprintln!("error: {e}"),
                }
            } else {
                print!("{}", cli::list_corpus());
            }
            EXIT_OK
        }
        Command::Render { field, out } => {
            let result = std::fs::read(&field)
                .map_err(Error::from)
                .and_then(|b| MatrixField::<f64>::from_bytes(&b))
                .and_then(|f| cli::render_heatmap(&f, &out, &field.display().to_string()));
            match result {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_CONFIG
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
