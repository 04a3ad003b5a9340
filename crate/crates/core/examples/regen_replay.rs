//! Regenerates the replay fixtures from the simulated modeler.
//!
//! Usage: cargo run -p smforge-core --example regen_replay [-- <workspace root>]

use std::fs;
use std::path::{Path, PathBuf};

use smforge_core::bench::{run_bench, summary_markdown, BenchConfig};
use smforge_core::corpus::{example_pool, load_corpus, Scenario};
use smforge_core::gateway::{record_wrap, Backend, GatewayError, ReplayBackend, Transcript};
use smforge_core::sim::{Fault, SimStep, SimulatedModeler};
use smforge_core::strategies::{run_strategy, GenerationConfig, Strategy, Templates};

const MODEL: &str = "sim-modeler-1";

fn record(
    dir: &Path,
    strategy: Strategy,
    scenario: &Scenario,
    corpus: &[Scenario],
    backend: &dyn Backend,
) -> Result<(), Box<dyn std::error::Error>> {
    let config = GenerationConfig::new(strategy, MODEL, example_pool(corpus));
    let mut result = run_strategy(scenario, corpus, &config, &Templates::default(), backend)?;
    for e in result.transcript.entries.iter_mut() {
        e.ms = 0;
    }
    let path = dir.join(Transcript::file_name(strategy.key(), &scenario.id));
    result.transcript.save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Like `record`, for a run that is expected to fail after its last call.
fn record_failing(
    dir: &Path,
    strategy: Strategy,
    scenario: &Scenario,
    corpus: &[Scenario],
    backend: &dyn Backend,
) -> Result<(), Box<dyn std::error::Error>> {
    let path = dir.join(Transcript::file_name(strategy.key(), &scenario.id));
    let recorder = record_wrap(backend, &path)?;
    let config = GenerationConfig::new(strategy, MODEL, example_pool(corpus));
    if run_strategy(scenario, corpus, &config, &Templates::default(), &recorder).is_ok() {
        return Err(format!("{} was expected to fail", path.display()).into());
    }
    let mut transcript = Transcript::load(&path)?;
    for e in transcript.entries.iter_mut() {
        e.ms = 0;
    }
    transcript.save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../.."));
    let corpus = load_corpus(&root.join("corpus"))?;
    let replay = root.join("fixtures/replay");
    let corrupt = root.join("fixtures/corrupt");
    fs::create_dir_all(&replay)?;
    fs::create_dir_all(&corrupt)?;

    let sim = SimulatedModeler::new(&corpus);
    for strategy in Strategy::ALL {
        for scenario in &corpus {
            record(&replay, strategy, scenario, &corpus, &sim)?;
        }
    }

    let faulty = SimulatedModeler::new(&corpus).with_fault(Fault::NoTable(SimStep::Actions));
    let garage = corpus.iter().find(|s| s.id == "garage_door").ok_or("garage_door missing")?;
    record(&corrupt, Strategy::StructureDriven, garage, &corpus, &faulty)?;
    let stateless = SimulatedModeler::new(&corpus).with_fault(Fault::NoTable(SimStep::StatesAndEvents));
    let failing = root.join("fixtures/failing");
    fs::create_dir_all(&failing)?;
    record_failing(&failing, Strategy::StructureDriven, garage, &corpus, &stateless)?;

    let golden = root.join("fixtures/golden/bench_2x2");
    fs::create_dir_all(&golden)?;
    let mut cfg = BenchConfig::new(MODEL);
    cfg.strategies = vec![Strategy::SinglePrompt, Strategy::StructureDriven];
    cfg.scenarios = vec!["microwave".into(), "garage_door".into()];
    let factory = |st: Strategy, s: &Scenario| -> Result<Box<dyn Backend>, GatewayError> {
        Ok(Box::new(ReplayBackend::from_file(
            &replay.join(Transcript::file_name(st.key(), &s.id)),
        )?))
    };
    let result = run_bench(&corpus, &cfg, &Templates::default(), &factory)?;
    let path = golden.join("summary.md");
    fs::write(&path, summary_markdown(&result))?;
    println!("wrote {}", path.display());
    Ok(())
}
