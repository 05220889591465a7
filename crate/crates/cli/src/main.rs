//! Command-line front end: run measures over a scenario file or reproduce
//! one of the experiment presets. Exit codes: 0 success, 2 validation or
//! scenario error, 3 tractability cap exceeded.

use clap::{Parser, Subcommand, ValueEnum};
use coarse_ca::error::{Error, Result};
use coarse_ca::harness::{
    self, run_chunking, run_focal_point, run_hopfield_table, run_macro_alphabet,
    FocalPointConfig, MacroAlphabetConfig,
};
use coarse_ca::mechanism::Transfer;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "coarse-ca",
    about = "Coarse-graining and information measures for cellular automata",
    version
)]
struct Cli {
    /// Worker threads for sweeps (default: all cores). Output is identical
    /// for any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Glauber,
    ExpRaw,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    FocalPoint,
    MacroAlphabet,
    Chunking,
    HopfieldTable,
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario JSON file (schema "1").
    #[arg(long)]
    scenario: PathBuf,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Unroll the scenario's model and print the occasion graph.
    Unroll(ScenarioArgs),
    /// Apply the scenario's graining and print the coarse-grained automaton.
    Grain(ScenarioArgs),
    /// Effective information of the graining on the scenario's x_out.
    Ei(ScenarioArgs),
    /// Excess information (over the minimum information partition).
    Xi(ScenarioArgs),
    /// The minimum information partition and its excess information.
    Mip(ScenarioArgs),
    /// Evaluate the emergence conditions over the scenario's family.
    Emergence(ScenarioArgs),
    /// Reproduce one of the built-in experiment presets.
    Experiment {
        preset: Preset,
        /// Write CSV/JSON files into this directory instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Hopfield transfer-function coding (hopfield-table preset).
        #[arg(long, value_enum, default_value_t = Variant::Glauber)]
        variant: Variant,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // A non-default pool is only built on request; sweep output does
        // not depend on it.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            std::process::exit(2);
        }
    }
    match run(cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn load(args: &ScenarioArgs) -> Result<harness::scenario::Resolved> {
    let text = std::fs::read_to_string(&args.scenario).map_err(|e| {
        Error::Scenario(format!("cannot read {}: {e}", args.scenario.display()))
    })?;
    let sc = harness::parse_scenario(&text)?;
    harness::resolve(&sc)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        None => {
            println!("{text}");
            Ok(())
        }
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::Scenario(format!("cannot write {}: {e}", path.display()))),
    }
}

fn measure(args: &ScenarioArgs, which: &str) -> Result<()> {
    let res = load(args)?;
    let v = harness::run_measures(&res, &[which.to_string()])?;
    emit(&args.out, &serde_json::to_string_pretty(&v).unwrap())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Unroll(args) => {
            let res = load(&args)?;
            emit(&args.out, &serde_json::to_string_pretty(&res.graph.to_json()).unwrap())
        }
        Command::Grain(args) => measure(&args, "coarse-grain"),
        Command::Ei(args) => measure(&args, "ei"),
        Command::Xi(args) => measure(&args, "xi"),
        Command::Mip(args) => measure(&args, "mip"),
        Command::Emergence(args) => measure(&args, "emergence"),
        Command::Experiment {
            preset,
            out,
            format,
            variant,
        } => experiment(preset, out, format, variant),
    }
}

/// Write `text` to `<dir>/<name>` when an output directory was given,
/// otherwise print it with a `# <name>` banner so multi-file presets stay
/// readable on stdout.
fn emit_named(out: &Option<PathBuf>, name: &str, text: &str) -> Result<()> {
    match out {
        None => {
            println!("# {name}");
            print!("{text}");
            Ok(())
        }
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| Error::Scenario(format!("cannot create {}: {e}", dir.display())))?;
            let path = dir.join(name);
            std::fs::write(&path, text)
                .map_err(|e| Error::Scenario(format!("cannot write {}: {e}", path.display())))
        }
    }
}

fn experiment(
    preset: Preset,
    out: Option<PathBuf>,
    format: Format,
    variant: Variant,
) -> Result<()> {
    let json = format == Format::Json;
    match preset {
        Preset::FocalPoint => {
            let res = run_focal_point(&FocalPointConfig::default())?;
            if json {
                let rows: Vec<_> = res
                    .rows
                    .iter()
                    .map(|r| serde_json::json!({"row": r.row, "col": r.col, "ei": r.ei}))
                    .collect();
                let doc = serde_json::json!({
                    "window": res.window,
                    "on_trajectory": res.on_trajectory,
                    "t_src": res.t_src,
                    "rows": rows,
                });
                emit_named(&out, "focal_point.json", &serde_json::to_string_pretty(&doc).unwrap())
            } else {
                emit_named(&out, "focal_point.csv", &harness::focal_csv(&res))
            }
        }
        Preset::MacroAlphabet => {
            let rows = run_macro_alphabet(&MacroAlphabetConfig::default())?;
            if json {
                let doc: Vec<_> = rows
                    .iter()
                    .map(|r| {
                        serde_json::json!({
                            "size": r.size, "n": r.n, "classes": r.count,
                            "blank_class": r.blank_class, "phase_classes": r.phase_classes,
                        })
                    })
                    .collect();
                emit_named(
                    &out,
                    "macro_alphabet.json",
                    &serde_json::to_string_pretty(&doc).unwrap(),
                )
            } else {
                emit_named(&out, "macro_alphabet.csv", &harness::macro_alphabet_csv(&rows))
            }
        }
        Preset::Chunking => {
            let rep = run_chunking()?;
            if json {
                let rows: Vec<_> = rep
                    .rows
                    .iter()
                    .map(|r| serde_json::json!({"case": r.case, "xi": r.xi, "partition": r.partition}))
                    .collect();
                let placements: Vec<_> = rep
                    .placements
                    .iter()
                    .map(|p| serde_json::json!({"case": p.case, "dr": p.dr, "dc": p.dc, "xi": p.xi}))
                    .collect();
                let argmax: serde_json::Map<String, serde_json::Value> = rep
                    .argmax
                    .iter()
                    .map(|(&k, &v)| (k.to_string(), serde_json::json!(v)))
                    .collect();
                let doc = serde_json::json!({
                    "cases": rows,
                    "placements": placements,
                    "argmax": argmax,
                });
                emit_named(&out, "chunking.json", &serde_json::to_string_pretty(&doc).unwrap())
            } else {
                emit_named(&out, "chunking.csv", &harness::chunking_csv(&rep))?;
                emit_named(&out, "chunking_placements.csv", &harness::placements_csv(&rep))
            }
        }
        Preset::HopfieldTable => {
            let transfer = match variant {
                Variant::Glauber => Transfer::Glauber,
                Variant::ExpRaw => Transfer::ExpRaw,
            };
            let table = run_hopfield_table(harness::hopfield::default_variant(transfer))?;
            if json {
                let rows: Vec<_> = table
                    .rows
                    .iter()
                    .map(|r| {
                        serde_json::json!({
                            "t": r.t, "ei_int": r.ei_int, "max_xi_int": r.max_xi_int,
                            "ei_ext": r.ei_ext, "max_xi_ext": r.max_xi_ext,
                        })
                    })
                    .collect();
                let doc = serde_json::json!({
                    "variant": table.variant.name(),
                    "max_deviation": table.max_deviation,
                    "rows": rows,
                });
                emit_named(&out, "hopfield_table.json", &serde_json::to_string_pretty(&doc).unwrap())
            } else {
                emit_named(&out, "hopfield_table.csv", &harness::hopfield_csv(&table))
            }
        }
    }
}
