use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dyad_cli::commands::{self, NarrateArgs, RecommendArgs};
use dyad_cli::CliError;
use dyad_core::recommend::ConversationState;
use dyad_gateway::GatewayConfig;

#[derive(Parser)]
#[command(name = "dyad", version, about = "Puppet chat server and offline tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the server until interrupted.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Action library tools.
    Library {
        #[command(subcommand)]
        command: LibraryCommand,
    },
    /// Rank actions for a context, offline and with fresh preferences.
    Recommend {
        #[arg(long)]
        text: Option<String>,
        /// The partner's last action id.
        #[arg(long)]
        partner_last: Option<String>,
        #[arg(long, value_enum)]
        state: Option<State>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_noise: bool,
        /// Rank every action instead of the top 4.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Write a micronarrative for one action.
    Narrate {
        #[arg(long)]
        action: String,
        #[arg(long)]
        story: Option<String>,
        #[arg(long)]
        story_file: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        tags: Vec<String>,
        /// Also print the proposed tags.
        #[arg(long)]
        show_tags: bool,
        /// Ignore provider settings in the environment.
        #[arg(long)]
        offline: bool,
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Print the stored records of a conversation.
    Export {
        conversation_id: String,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run a scripted dyad session against an in-process server.
    RunScript {
        /// Script file, or `-` for stdin.
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum LibraryCommand {
    /// Check a library file (the built-in one by default).
    Lint {
        path: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum State {
    Opening,
    PartnerActedLast,
    SelfActedLast,
    Idle,
}

impl From<State> for ConversationState {
    fn from(s: State) -> Self {
        match s {
            State::Opening => ConversationState::Opening,
            State::PartnerActedLast => ConversationState::PartnerActedLast,
            State::SelfActedLast => ConversationState::SelfActedLast,
            State::Idle => ConversationState::Idle,
        }
    }
}

async fn serve(config: Option<PathBuf>, listen: Option<String>) -> Result<String, CliError> {
    let mut cfg = match config {
        Some(p) => GatewayConfig::from_file(&p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => GatewayConfig::default(),
    }
    .with_env_overrides()
    .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(l) = listen {
        cfg.listen = l;
    }
    let server = dyad_gateway::start(cfg).await.map_err(|e| CliError::Failure(e.to_string()))?;
    println!("listening on {}", server.http_url());
    tokio::signal::ctrl_c().await.map_err(|e| CliError::Failure(e.to_string()))?;
    server.stop().await;
    Ok("stopped".into())
}

async fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::Serve { config, listen } => serve(config, listen).await,
        Command::Library { command: LibraryCommand::Lint { path, json } } => commands::library_lint(path.as_deref(), json),
        Command::Recommend { text, partner_last, state, seed, no_noise, all, library, json } => {
            commands::recommend(RecommendArgs { text, partner_last, state: state.map(Into::into), seed, no_noise, all, library, json })
        }
        Command::Narrate { action, story, story_file, tags, show_tags, offline, library, json } => {
            commands::narrate(NarrateArgs { action, story, story_file, tags, show_tags, offline, library, json })
        }
        Command::Export { conversation_id, data_dir, json } => commands::export(&conversation_id, &data_dir, json),
        Command::RunScript { file, json } => commands::run_script(&file, json).await,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("dyad: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(run(cli.command)) {
        Ok(out) => {
            if !out.is_empty() {
                println!("{out}");
            }
            ExitCode::SUCCESS
        }
        Err(CliError::Failure(out)) => {
            println!("{out}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("dyad: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
