use std::path::PathBuf;
use std::process::ExitCode;

use bdimhs::commands::{self, BenchArgs, ServeOptions};
use bdimhs::config::ScenarioConfig;
use bdimhs::demo::{render, run_demo, DemoOptions};
use bdimhs::CliError;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bdimhs", version, about = "Blockchain identity management for healthcare: ledger, agents, demo and load harness")]
struct Cli {
    /// Scenario file.
    #[arg(long, global = true, env = "BDIMHS_CONFIG", default_value = "fixtures/scenario.json")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start the validator pool and the steward agent.
    Bootstrap,
    /// Run the issuance, disclosure, authorization and revocation workflow.
    Demo {
        #[arg(long)]
        auto_bootstrap: bool,
        #[arg(long, conflicts_with = "auto_bootstrap")]
        attach: bool,
        #[arg(long)]
        skip_revoke: bool,
    },
    /// Drive one load scenario and append the summary to a CSV file.
    Bench {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        rampup: u64,
        #[arg(long, default_value = "sequential")]
        mode: String,
        #[arg(long, default_value = "bench-results.csv")]
        out: PathBuf,
        /// Accepted for symmetry with `demo`; this is the default.
        #[arg(long)]
        auto_bootstrap: bool,
        #[arg(long, conflicts_with = "auto_bootstrap")]
        attach: bool,
    },
    /// Run one agent from the scenario file.
    Serve {
        #[arg(long, env = "AGENT_LABEL")]
        agent: String,
        #[arg(long)]
        wallet: Option<PathBuf>,
    },
    /// Download the ledger audit log and check that it replays.
    ExportLog {
        #[arg(long, env = "LEDGER_URL")]
        ledger: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let config = ScenarioConfig::load(&cli.config)?;
    match cli.command {
        Command::Bootstrap => {
            let running = commands::bootstrap(&config)?;
            println!("{}", running.ready_line());
            commands::wait_for_interrupt()
        }
        Command::Demo {
            auto_bootstrap,
            attach,
            skip_revoke,
        } => {
            let opts = DemoOptions {
                auto_bootstrap,
                attach,
                skip_revoke,
            };
            run_demo(&config, opts, &mut |line| println!("{}", render(&line)))
        }
        Command::Bench {
            scenario,
            n,
            rampup,
            mode,
            out,
            attach,
            ..
        } => {
            let args = BenchArgs {
                scenario,
                n,
                rampup,
                mode,
                out,
                attach,
            };
            let report = commands::bench(&config, &args)?;
            print!("{}", bdimhs_bench::report::table(&[report]));
            Ok(())
        }
        Command::Serve { agent, wallet } => {
            let opts = ServeOptions {
                label: agent,
                wallet_path: wallet,
                passphrase: std::env::var("WALLET_PASSPHRASE").ok(),
                webhook_url: std::env::var("WEBHOOK_URL").ok(),
            };
            let running = commands::serve(&config, &opts)?;
            commands::save_wallet(&running, &opts)?;
            println!(
                "{}",
                serde_json::json!({"ready": true, "agent": opts.label, "admin": running.admin_url()})
            );
            commands::wait_for_interrupt()?;
            commands::save_wallet(&running, &opts)
        }
        Command::ExportLog { ledger, out } => {
            let url = ledger.unwrap_or_else(|| config.ledger_url());
            let (text, summary) = commands::export_log(&url)?;
            commands::write_log(&text, out.as_deref())?;
            eprintln!("{summary}");
            Ok(())
        }
    }
}
