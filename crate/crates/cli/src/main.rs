use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};
use mpcflow::graph::{serialize_circuit, CircuitGraph};
use mpcflow::io::InputBundle;
use mpcflow::linear::DEFAULT_SLICE;
use mpcflow::net::{parse_party_config, FaultPlan};
use mpcflow::oracle::interpret;
use mpcflow::pipeline::{linear_layer_ir, load_circuit, random_inputs, run_local_pipeline, run_party, Circuit, PartySpec, PipelineRun};
use mpcflow::report::RunReport;
use mpcflow::runtime::RunConfig;
use mpcflow::sched::to_jsonl;
use mpcflow::Fp;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Parser)]
#[command(name = "mpcflow", version, about = "Compile SSA IR to SPDZ circuits and run them")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lower an IR file to a circuit file.
    Compile {
        input: PathBuf,
        /// Function to compile when the module has several.
        #[arg(long)]
        entry: Option<String>,
        /// Defaults to the input path with a `.mpc` extension.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Also write a JSON mirror next to the circuit.
        #[arg(long)]
        emit_json: bool,
    },
    /// Run a circuit, either every party in this process or one party
    /// against its peers.
    Run(RunArgs),
    /// Print node counts, loops and privacy of a circuit.
    Inspect {
        circuit: PathBuf,
        #[arg(long)]
        entry: Option<String>,
        /// Evaluate in the clear on this input file.
        #[arg(long)]
        eval: Option<PathBuf>,
    },
    /// Write an input file for a circuit: the `--set` values, random
    /// values for the rest.
    Inputs {
        circuit: PathBuf,
        #[arg(long)]
        entry: Option<String>,
        #[arg(long, short)]
        out: PathBuf,
        /// `name=v1,v2,..`; repeatable.
        #[arg(long, value_parser = parse_set)]
        set: Vec<(String, Vec<Fp>)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep linear layers over shapes, party counts, workers and slices;
    /// prints CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["local", "party"])))]
struct RunArgs {
    circuit: PathBuf,
    #[arg(long)]
    entry: Option<String>,
    /// Run this many parties over the in-process transport.
    #[arg(long, conflicts_with_all = ["party", "config"])]
    local: Option<usize>,
    #[arg(long, requires_all = ["config", "triples"])]
    party: Option<usize>,
    /// Endpoints file with `index host:port` lines.
    #[arg(long, requires = "party")]
    config: Option<PathBuf>,
    /// This party's triple store (networked runs).
    #[arg(long)]
    triples: Option<PathBuf>,
    /// Input file; local runs draw random inputs when omitted.
    #[arg(long)]
    inputs: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = DEFAULT_SLICE)]
    slice: u64,
    /// Write the scheduler trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Seed for local dealing and random inputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Layer shapes as DINxDOUT.
    #[arg(long, value_delimiter = ',', default_value = "64x32")]
    dims: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    parties: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    threads: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "262140")]
    slice: Vec<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn env_ms(name: &str, default: u64) -> Result<Duration> {
    match std::env::var(name) {
        Ok(v) => Ok(Duration::from_millis(v.trim().parse().with_context(|| format!("{name}={v} is not a number of milliseconds"))?)),
        Err(_) => Ok(Duration::from_millis(default)),
    }
}

fn io_timeout() -> Result<Duration> {
    env_ms("MPCFLOW_IO_TIMEOUT_MS", 60_000)
}

fn connect_timeout() -> Result<Duration> {
    env_ms("MPCFLOW_CONNECT_TIMEOUT_MS", 30_000)
}

fn words(v: &[Fp]) -> String {
    v.iter().map(|x| x.value().to_string()).collect::<Vec<_>>().join(" ")
}

fn compile_cmd(input: &Path, entry: Option<&str>, out: Option<PathBuf>, emit_json: bool) -> Result<()> {
    let g = load_circuit(input, entry)?;
    let out = out.unwrap_or_else(|| input.with_extension("mpc"));
    std::fs::write(&out, serialize_circuit(&g)).with_context(|| format!("writing {}", out.display()))?;
    if emit_json {
        let json = out.with_extension("json");
        std::fs::write(&json, g.to_json()).with_context(|| format!("writing {}", json.display()))?;
    }
    println!("{}: {} nodes, {} blocks, {} loops, {} inputs", out.display(), g.len(), g.labels.len(), g.loops.len(), g.inputs.len());
    Ok(())
}

fn print_report(r: &RunReport, json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string(r)?);
    } else {
        print!("{}", r.render());
    }
    Ok(())
}

fn write_trace(path: &Path, run: &PipelineRun) -> Result<()> {
    std::fs::write(path, to_jsonl(&run.trace)).with_context(|| format!("writing {}", path.display()))
}

fn run_cmd(a: RunArgs) -> Result<()> {
    let cfg = RunConfig { threads: a.threads, slice: a.slice, trace: a.trace.is_some(), seed: a.seed, ..RunConfig::default() };
    match (a.local, a.party, &a.config) {
        (Some(n), _, _) => {
            if n < 2 {
                bail!("--local needs at least 2 parties");
            }
            let circuit = Circuit::File { path: &a.circuit, entry: a.entry.as_deref() };
            let inputs = match &a.inputs {
                Some(p) => InputBundle::load(p)?,
                None => random_inputs(&circuit.load()?, 5, &mut ChaCha20Rng::seed_from_u64(a.seed)),
            };
            let runs = run_local_pipeline(circuit, &inputs, n, &cfg, a.seed, &FaultPlan::none(), io_timeout()?)?;
            for r in &runs {
                print_report(&r.report, a.json)?;
                if let Some(t) = &a.trace {
                    let name = format!("{}.p{}", t.display(), r.report.party);
                    write_trace(Path::new(&name), r)?;
                }
            }
            println!("output: {}", words(&runs[0].output));
        }
        (None, Some(party), Some(config)) => {
            let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
            let spec = PartySpec {
                circuit: a.circuit,
                entry: a.entry,
                party,
                endpoints: parse_party_config(&text)?,
                triples: a.triples.expect("clap requires --triples with --party"),
                inputs: a.inputs,
                connect_timeout: connect_timeout()?,
                io_timeout: io_timeout()?,
                cfg,
            };
            let run = run_party(&spec)?;
            print_report(&run.report, a.json)?;
            if let Some(t) = &a.trace {
                write_trace(t, &run)?;
            }
            println!("output: {}", words(&run.output));
        }
        _ => unreachable!("clap requires --local or --party with --config"),
    }
    Ok(())
}

fn inspect_cmd(path: &Path, entry: Option<&str>, eval: Option<&Path>) -> Result<()> {
    let g = load_circuit(path, entry)?;
    print!("{}", inspect(&g));
    if let Some(p) = eval {
        let inputs = InputBundle::load(p)?;
        let run = interpret(&g, &inputs.params)?;
        let path: Vec<&str> = run.path.iter().map(|&(l, _)| g.label_name(l)).collect();
        println!("path: {}", path.join(" "));
        println!("output: {}", words(&run.output));
    }
    Ok(())
}

fn inspect(g: &CircuitGraph) -> String {
    let mut s = format!("nodes: {}\nblocks: {}\n", g.len(), g.labels.len());
    s.push_str("kinds:\n");
    for (k, n) in g.kind_histogram() {
        s.push_str(&format!("  {k:<14} {n}\n"));
    }
    let private = g.nodes.iter().filter(|n| n.privacy.is_private()).count();
    s.push_str(&format!("privacy:\n  private        {private}\n  public         {}\n", g.len() - private));
    s.push_str("inputs:\n");
    for i in &g.inputs {
        s.push_str(&format!("  {:<14} {} x{}\n", i.name, if i.privacy.is_private() { "private" } else { "public" }, i.len));
    }
    s.push_str("loops:\n");
    let names = |ls: &[u32]| ls.iter().map(|&l| g.label_name(l)).collect::<Vec<_>>().join(",");
    for (h, l) in &g.loops {
        s.push_str(&format!("  header {}  members {}  exits {}\n", g.label_name(*h), names(&l.members), names(&l.exits)));
    }
    s
}

fn parse_set(s: &str) -> Result<(String, Vec<Fp>), String> {
    let (name, vals) = s.split_once('=').ok_or_else(|| format!("{s:?} is not name=v1,v2,.."))?;
    let vals = vals
        .split(',')
        .map(|v| match v.trim().parse::<u32>() {
            Ok(x) if x < mpcflow::P => Ok(Fp::new(x)),
            _ => Err(format!("{v:?} is not a field element")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((name.trim().to_string(), vals))
}

fn inputs_cmd(path: &Path, entry: Option<&str>, out: &Path, set: Vec<(String, Vec<Fp>)>, seed: u64) -> Result<()> {
    let g = load_circuit(path, entry)?;
    let mut bundle = random_inputs(&g, 5, &mut ChaCha20Rng::seed_from_u64(seed));
    for (name, vals) in set {
        let Some(slot) = bundle.params.get_mut(&name) else { bail!("the circuit has no input named {name}") };
        if slot.len() != vals.len() {
            bail!("{name} takes {} values, got {}", slot.len(), vals.len());
        }
        *slot = vals;
    }
    bundle.save(out)?;
    println!("{}: {}", out.display(), bundle.params.iter().map(|(k, v)| format!("{k}[{}]", v.len())).collect::<Vec<_>>().join(" "));
    Ok(())
}

fn parse_dims(s: &str) -> Result<(u32, u32)> {
    let (a, b) = s.split_once(['x', 'X']).with_context(|| format!("bad shape {s:?}, want DINxDOUT"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let dims = a.dims.iter().filter(|d| !d.is_empty()).map(|d| parse_dims(d)).collect::<Result<Vec<_>>>()?;
    println!("din,dout,{}", RunReport::csv_header());
    for &(din, dout) in &dims {
        let text = linear_layer_ir(din, dout);
        let g = Circuit::Ir { text: &text, entry: None }.load()?;
        let inputs = random_inputs(&g, 5, &mut ChaCha20Rng::seed_from_u64(a.seed));
        for &parties in &a.parties {
            for &threads in &a.threads {
                for &slice in &a.slice {
                    let cfg = RunConfig { threads, slice, seed: a.seed, ..RunConfig::default() };
                    let runs = run_local_pipeline(Circuit::Ir { text: &text, entry: None }, &inputs, parties, &cfg, a.seed, &FaultPlan::none(), io_timeout()?)?;
                    println!("{din},{dout},{}", runs[0].report.csv_row());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Compile { input, entry, out, emit_json } => compile_cmd(&input, entry.as_deref(), out, emit_json),
        Cmd::Run(a) => run_cmd(a),
        Cmd::Inspect { circuit, entry, eval } => inspect_cmd(&circuit, entry.as_deref(), eval.as_deref()),
        Cmd::Inputs { circuit, entry, out, set, seed } => inputs_cmd(&circuit, entry.as_deref(), &out, set, seed),
        Cmd::Bench(a) => bench_cmd(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
