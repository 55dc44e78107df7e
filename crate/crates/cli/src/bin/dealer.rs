use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mpcflow::io::InputBundle;
use mpcflow::linear::DEFAULT_SLICE;
use mpcflow::pipeline::{dealer_request, load_circuit, preprocess};

#[derive(Parser)]
#[command(name = "mpcflow-dealer", version, about = "Fake preprocessing: writes one triple store per party")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Deal triples and input masks for a circuit.
    Preprocess {
        circuit: PathBuf,
        #[arg(long)]
        entry: Option<String>,
        #[arg(long)]
        parties: usize,
        #[arg(long, default_value_t = DEFAULT_SLICE)]
        slice: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        /// Size the stores for the run these inputs lead to. Needed for
        /// circuits whose loops multiply.
        #[arg(long)]
        inputs: Option<PathBuf>,
        /// Deal at least this many scalar triples.
        #[arg(long, default_value_t = 0)]
        scalar: usize,
    },
}

const WARNING: &str = "warning: fake preprocessing. This dealer knows the MAC key and every triple; \
the stores it writes give no security and are for testing and benchmarking only.";

fn run(cli: Cli) -> Result<()> {
    let Cmd::Preprocess { circuit, entry, parties, slice, seed, out_dir, inputs, scalar } = cli.cmd;
    if parties < 2 {
        anyhow::bail!("--parties must be at least 2");
    }
    eprintln!("{WARNING}");
    let g = load_circuit(&circuit, entry.as_deref())?;
    let inputs = inputs.map(|p| InputBundle::load(&p)).transpose()?;
    let req = dealer_request(&g, parties, slice, inputs.as_ref(), scalar)?;
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for s in preprocess(&req, parties, seed) {
        let path = out_dir.join(format!("p{}.triples", s.party));
        std::fs::write(&path, s.to_bytes()).with_context(|| format!("writing {}", path.display()))?;
    }
    let shapes: Vec<String> = req.matrix.iter().map(|(r, c)| format!("{r}x{c}")).collect();
    println!(
        "{parties} stores in {}: {} scalar triples, {} matrix triples [{}], {} input masks",
        out_dir.display(),
        req.scalar,
        req.matrix.len(),
        shapes.join(" "),
        req.inputs.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
