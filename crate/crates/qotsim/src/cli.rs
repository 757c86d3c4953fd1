//! Command-line interface: protocol runs, Monte Carlo batches,
//! trace-distance sweeps and cheating-bound reports, all machine-readable.
//!
//! Every subcommand is deterministic given its full flag set. Protocol
//! aborts are results, not failures: `run` exits 0 on any concluded run and
//! nonzero only on configuration errors.

use crate::bit::Bit;
use crate::discrimination::{helstrom_report, sweep_trace_distance};
use crate::error::{Error, Result};
use crate::geometry::ProtocolGeometry;
use crate::montecarlo::{
    noise_grid_csv, noise_sensitivity, run_experiment, BitPolicy, ExperimentSpec,
};
use crate::protocol::{run_protocol, AdversaryConfig, BobStrategy, NoiseModel};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "qotsim",
    version,
    about = "Simulate and analyze a single-photon time-bin oblivious transfer protocol"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one protocol instance and emit its transcript as JSON Lines.
    Run(RunArgs),
    /// Estimate protocol statistics over many seeded runs.
    Montecarlo(MontecarloArgs),
    /// Trace distance between the receiver's two mixtures per slot count.
    Tracedist(TracedistArgs),
    /// Receiver-cheating bounds for one geometry.
    Helstrom(HelstromArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Jsonl,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdversaryKind {
    Honest,
    StoreAndWait,
    ImmediateGuess,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Number of time slots in the transmission window.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Delay in slots.
    #[arg(long, default_value_t = 1)]
    pub delta: usize,
    /// Sender's secret bit; drawn from the seeded generator when omitted.
    #[arg(long)]
    pub b: Option<u8>,
    /// RNG seed (also via QOT_SEED).
    #[arg(long, env = "QOT_SEED", default_value_t = crate::DEFAULT_SEED)]
    pub seed: u64,
    /// Receiver strategy.
    #[arg(long, value_enum, default_value_t = AdversaryKind::Honest)]
    pub adversary: AdversaryKind,
    /// Memory lifetime for store-and-wait, in ticks or multiples of the
    /// announcement delay (e.g. `200` or `2T`).
    #[arg(long)]
    pub lifetime: Option<String>,
    /// Photon loss probability.
    #[arg(long, default_value_t = 0.0)]
    pub p_loss: f64,
    /// Dark-count probability per run.
    #[arg(long, default_value_t = 0.0)]
    pub p_dark: f64,
    /// Output format (run emits jsonl).
    #[arg(long, value_enum, default_value_t = OutputFormat::Jsonl)]
    pub format: OutputFormat,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MontecarloArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub delta: usize,
    /// Number of protocol runs.
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    /// Fix the sender's bit; per-trial uniform draw when omitted.
    #[arg(long)]
    pub b: Option<u8>,
    #[arg(long, env = "QOT_SEED", default_value_t = crate::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = AdversaryKind::Honest)]
    pub adversary: AdversaryKind,
    #[arg(long)]
    pub lifetime: Option<String>,
    /// Loss probabilities; a comma list sweeps a noise grid.
    #[arg(long, default_value = "0")]
    pub p_loss: String,
    /// Dark-count probabilities; a comma list sweeps a noise grid.
    #[arg(long, default_value = "0")]
    pub p_dark: String,
    /// json for a single stats object, csv for a noise grid.
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TracedistArgs {
    /// Slot counts: comma-separated values and lo:hi ranges, e.g.
    /// `1,2,10:20,1000`.
    #[arg(long, required = true)]
    pub n: String,
    #[arg(long, default_value_t = 1)]
    pub delta: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HelstromArgs {
    /// Number of time slots (required).
    #[arg(long, required = true)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub delta: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `200` -> 200 ticks; `2T` or `0.5T` -> multiples of the announcement
/// delay.
pub fn parse_lifetime(input: &str, announce_delay: u64) -> Result<u64> {
    let trimmed = input.trim();
    if let Some(multiple) = trimmed.strip_suffix(['T', 't']) {
        let factor: f64 = multiple
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("invalid lifetime multiple '{input}'")))?;
        if factor < 0.0 || !factor.is_finite() {
            return Err(Error::InvalidConfig(format!("invalid lifetime '{input}'")));
        }
        Ok((factor * announce_delay as f64).round() as u64)
    } else {
        trimmed
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("invalid lifetime '{input}'")))
    }
}

/// Comma list of slot counts where each item is a value or an inclusive
/// `lo:hi` range; the result is sorted and deduplicated.
pub fn parse_slot_counts(input: &str) -> Result<Vec<usize>> {
    let mut values = Vec::new();
    for item in input.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        if let Some((lo, hi)) = item.split_once(':') {
            let lo: usize = lo.trim().parse().map_err(|_| bad_slot_item(item))?;
            let hi: usize = hi.trim().parse().map_err(|_| bad_slot_item(item))?;
            if lo > hi {
                return Err(bad_slot_item(item));
            }
            values.extend(lo..=hi);
        } else {
            values.push(item.parse().map_err(|_| bad_slot_item(item))?);
        }
    }
    if values.is_empty() {
        return Err(Error::InvalidConfig("no slot counts given".to_string()));
    }
    values.sort_unstable();
    values.dedup();
    Ok(values)
}

fn bad_slot_item(item: &str) -> Error {
    Error::InvalidConfig(format!("invalid slot count '{item}'"))
}

fn parse_probability_list(input: &str, name: &'static str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for item in input.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let value: f64 = item
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("invalid {name} '{item}'")))?;
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidProbability { name, value });
        }
        values.push(value);
    }
    if values.is_empty() {
        return Err(Error::InvalidConfig(format!("no {name} values given")));
    }
    Ok(values)
}

fn parse_bit(value: Option<u8>) -> Result<Option<Bit>> {
    value.map(Bit::new).transpose()
}

fn build_adversary(kind: AdversaryKind, lifetime: &Option<String>) -> Result<AdversaryConfig> {
    let announce_delay = crate::DEFAULT_ANNOUNCE_DELAY;
    let strategy = match kind {
        AdversaryKind::Honest => {
            if lifetime.is_some() {
                return Err(Error::InvalidConfig(
                    "--lifetime only applies to --adversary store-and-wait".to_string(),
                ));
            }
            BobStrategy::Honest
        }
        AdversaryKind::ImmediateGuess => {
            if lifetime.is_some() {
                return Err(Error::InvalidConfig(
                    "--lifetime only applies to --adversary store-and-wait".to_string(),
                ));
            }
            BobStrategy::ImmediateGuess
        }
        AdversaryKind::StoreAndWait => {
            let spec = lifetime.as_deref().ok_or_else(|| {
                Error::InvalidConfig("--adversary store-and-wait requires --lifetime".to_string())
            })?;
            BobStrategy::StoreAndWait {
                memory_lifetime: parse_lifetime(spec, announce_delay)?,
            }
        }
    };
    Ok(AdversaryConfig {
        bob_strategy: strategy,
        announce_delay,
    })
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn require_format(actual: OutputFormat, allowed: &[OutputFormat], context: &str) -> Result<()> {
    if allowed.contains(&actual) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{context} does not support --format {actual:?}"
        )))
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Montecarlo(args) => cmd_montecarlo(args),
        Command::Tracedist(args) => cmd_tracedist(args),
        Command::Helstrom(args) => cmd_helstrom(args),
    }
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    require_format(args.format, &[OutputFormat::Jsonl], "run")?;
    let geometry = ProtocolGeometry::new(args.n, args.delta)?;
    if !geometry.supports_protocol_run() {
        return Err(Error::InvalidGeometry {
            n: args.n,
            delta: args.delta,
            reason: "run requires n - delta >= 1 (empty send window)",
        });
    }
    let adversary = build_adversary(args.adversary, &args.lifetime)?;
    let noise = NoiseModel::new(args.p_loss, args.p_dark)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let b = match parse_bit(args.b)? {
        Some(bit) => bit,
        None => Bit::from(rng.gen_bool(0.5)),
    };
    let transcript = run_protocol::<f64, _>(&mut rng, b, geometry, &adversary, &noise)?;
    write_output(&args.out, &transcript.to_jsonl())
}

fn cmd_montecarlo(args: &MontecarloArgs) -> Result<()> {
    let geometry = ProtocolGeometry::new(args.n, args.delta)?;
    if !geometry.supports_protocol_run() {
        return Err(Error::InvalidGeometry {
            n: args.n,
            delta: args.delta,
            reason: "montecarlo requires n - delta >= 1 (empty send window)",
        });
    }
    if args.trials < 1 {
        return Err(Error::InvalidConfig("--trials must be >= 1".to_string()));
    }
    let adversary = build_adversary(args.adversary, &args.lifetime)?;
    let p_loss = parse_probability_list(&args.p_loss, "p_loss")?;
    let p_dark = parse_probability_list(&args.p_dark, "p_dark")?;
    let b_policy = match parse_bit(args.b)? {
        Some(bit) => BitPolicy::Fixed(bit),
        None => BitPolicy::UniformRandom,
    };
    let spec = ExperimentSpec {
        trials: args.trials,
        seed: args.seed,
        geometry,
        adversary,
        noise: NoiseModel::new(p_loss[0], p_dark[0])?,
        b_policy,
    };
    let is_grid = p_loss.len() > 1 || p_dark.len() > 1;
    if is_grid {
        require_format(
            args.format.unwrap_or(OutputFormat::Csv),
            &[OutputFormat::Csv],
            "montecarlo noise grid",
        )?;
        let mut grid = Vec::new();
        for &pl in &p_loss {
            for &pd in &p_dark {
                grid.push((pl, pd));
            }
        }
        let points = noise_sensitivity::<f64>(&spec, &grid)?;
        write_output(&args.out, &noise_grid_csv(&points))
    } else {
        require_format(
            args.format.unwrap_or(OutputFormat::Json),
            &[OutputFormat::Json],
            "montecarlo",
        )?;
        let stats = run_experiment::<f64>(&spec)?;
        let mut json = stats.to_json();
        json.push('\n');
        write_output(&args.out, &json)
    }
}

fn cmd_tracedist(args: &TracedistArgs) -> Result<()> {
    require_format(args.format, &[OutputFormat::Csv], "tracedist")?;
    let n_values = parse_slot_counts(&args.n)?;
    let curve = sweep_trace_distance::<f64>(&n_values, args.delta)?;
    write_output(&args.out, &curve.to_csv())
}

fn cmd_helstrom(args: &HelstromArgs) -> Result<()> {
    require_format(args.format, &[OutputFormat::Json], "helstrom")?;
    let geometry = ProtocolGeometry::new(args.n, args.delta)?;
    let report = helstrom_report::<f64>(geometry);
    let mut json = report.to_json();
    json.push('\n');
    write_output(&args.out, &json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifetime_parsing() {
        assert_eq!(parse_lifetime("200", 100).unwrap(), 200);
        assert_eq!(parse_lifetime("2T", 100).unwrap(), 200);
        assert_eq!(parse_lifetime("0.5T", 100).unwrap(), 50);
        assert_eq!(parse_lifetime(" 3t ", 10).unwrap(), 30);
        assert!(parse_lifetime("abc", 100).is_err());
        assert!(parse_lifetime("-1T", 100).is_err());
    }

    #[test]
    fn slot_count_parsing() {
        assert_eq!(parse_slot_counts("1,2").unwrap(), vec![1, 2]);
        assert_eq!(parse_slot_counts("2,1,2").unwrap(), vec![1, 2]);
        assert_eq!(parse_slot_counts("5:8,3").unwrap(), vec![3, 5, 6, 7, 8]);
        assert!(parse_slot_counts("8:5").is_err());
        assert!(parse_slot_counts("x").is_err());
        assert!(parse_slot_counts("").is_err());
    }

    #[test]
    fn probability_list_parsing() {
        assert_eq!(
            parse_probability_list("0,0.5", "p_loss").unwrap(),
            vec![0.0, 0.5]
        );
        assert!(parse_probability_list("1.5", "p_loss").is_err());
        assert!(parse_probability_list("nope", "p_dark").is_err());
    }

    #[test]
    fn adversary_building() {
        let honest = build_adversary(AdversaryKind::Honest, &None).unwrap();
        assert_eq!(honest.bob_strategy, BobStrategy::Honest);
        assert!(build_adversary(AdversaryKind::Honest, &Some("2T".into())).is_err());
        assert!(build_adversary(AdversaryKind::StoreAndWait, &None).is_err());
        let attack = build_adversary(AdversaryKind::StoreAndWait, &Some("2T".to_string())).unwrap();
        assert_eq!(
            attack.bob_strategy,
            BobStrategy::StoreAndWait {
                memory_lifetime: 2 * crate::DEFAULT_ANNOUNCE_DELAY
            }
        );
    }

    #[test]
    fn run_rejects_empty_send_window() {
        let cli = Cli::try_parse_from(["qotsim", "run", "--n", "1", "--delta", "1"]).unwrap();
        assert!(execute(&cli).is_err());
    }

    #[test]
    fn run_rejects_non_bit() {
        // --b 2 parses as a u8 flag value but fails domain validation.
        let cli = Cli::try_parse_from(["qotsim", "run", "--n", "8", "--b", "2"]).unwrap();
        assert!(matches!(execute(&cli), Err(Error::InvalidBit(2))));
    }

    #[test]
    fn tracedist_rejects_n_not_above_delta() {
        let cli =
            Cli::try_parse_from(["qotsim", "tracedist", "--n", "1,2", "--delta", "2"]).unwrap();
        assert!(execute(&cli).is_err());
    }

    #[test]
    fn helstrom_requires_n() {
        assert!(Cli::try_parse_from(["qotsim", "helstrom"]).is_err());
        assert!(Cli::try_parse_from(["qotsim", "helstrom", "--n", "10"]).is_ok());
    }

    #[test]
    fn montecarlo_rejects_zero_trials() {
        let cli =
            Cli::try_parse_from(["qotsim", "montecarlo", "--n", "8", "--trials", "0"]).unwrap();
        assert!(execute(&cli).is_err());
    }

    #[test]
    fn format_mismatches_are_usage_errors() {
        let cli = Cli::try_parse_from(["qotsim", "run", "--n", "8", "--format", "csv"]).unwrap();
        assert!(execute(&cli).is_err());
        let cli =
            Cli::try_parse_from(["qotsim", "tracedist", "--n", "2", "--format", "json"]).unwrap();
        assert!(execute(&cli).is_err());
    }
}
