//! `accompanion`: automatic accompaniment from the command line.

mod eval;
mod inputs;
mod perform;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "accompanion",
    version,
    about = "Follows a soloist and plays the accompaniment"
)]
struct Cli {
    /// Run configuration file (TOML); flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for generated reference performances
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log level: error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Accompany a soloist in real time
    Live(perform::LiveArgs),
    /// Accompany a recorded solo offline and write the result as an SMF
    Replay(perform::ReplayArgs),
    /// Offline experiments
    #[command(subcommand)]
    Eval(eval::EvalCommand),
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut cfg = inputs::load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let seed = cli.seed.or(cli.config.as_ref().map(|_| cfg.seed));
    match &cli.command {
        Command::Live(args) => perform::live(args, &mut cfg),
        Command::Replay(args) => perform::replay(args, &mut cfg),
        Command::Eval(cmd) => eval::run(cmd, &cfg, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp_millis()
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn arguments_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn global_flags_follow_subcommands() {
        let cli = Cli::try_parse_from(["accompanion", "eval", "tempo", "--seed", "3", "--log", "info"]).unwrap();
        assert_eq!(cli.seed, Some(3));
        assert_eq!(cli.log, "info");
    }

    #[test]
    fn variant_names_are_case_insensitive() {
        let cli = Cli::try_parse_from(["accompanion", "eval", "tempo", "--variant", "jadam"]).unwrap();
        assert!(matches!(
            cli.command,
            Command::Eval(eval::EvalCommand::Tempo(eval::TempoArgs {
                variant: eval::VariantChoice::One(accompanion_core::tempo::TempoVariant::JADAM),
                ..
            }))
        ));
    }
}
