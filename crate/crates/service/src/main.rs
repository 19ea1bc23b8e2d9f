use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use segclf_core::ops::SynonymDictionary;
use segclf_service::{router, AppState, BoostedScorer, ServiceConfig};

#[derive(Parser)]
#[command(name = "segclf-serve", version, about = "Annotation service for weighted-bin sampling rounds")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Directory for the event log; state is replayed from it at startup.
    #[arg(long)]
    state_dir: PathBuf,
    /// Root seed for batch draws and the scorer.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Accept labels for images that were not served to the coder.
    #[arg(long)]
    free_labeling: bool,
    /// Directory served under /assets/.
    #[arg(long)]
    assets: Option<PathBuf>,
    /// Object-name dictionary (JSON: name -> [categories]); bundled by default.
    #[arg(long)]
    dictionary: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt::init();
    let args = Args::parse();
    let dictionary = match &args.dictionary {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
            SynonymDictionary::from_json(&text)?
        }
        None => SynonymDictionary::bundled(),
    };
    let config = ServiceConfig {
        state_dir: Some(args.state_dir),
        seed: args.seed,
        free_labeling: args.free_labeling,
        assets: args.assets,
        dictionary,
    };
    let state = AppState::open(config, Arc::new(BoostedScorer::new(args.seed)))?;
    let listener = tokio::net::TcpListener::bind(args.listen).await?;
    tracing::info!("listening on {}", args.listen);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
