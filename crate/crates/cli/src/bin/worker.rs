//! Socket worker: serves one master session, then exits.

use analog_shards::runtime::WorkerServer;
use analog_shards::Execution;
use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "analog-shards-worker", version, about = "One analog-shards server")]
struct Args {
    /// Address to listen on, e.g. 127.0.0.1:7001.
    #[arg(long)]
    listen: String,
    /// This server's 1-based index.
    #[arg(long)]
    server_index: u32,
    #[arg(long)]
    sequential: bool,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let exec = if args.sequential { Execution::Sequential } else { Execution::Parallel };
    let result = WorkerServer::bind(&args.listen, args.server_index, exec).and_then(|s| {
        log::info!("worker {} listening on {}", args.server_index, s.local_addr()?);
        s.run()
    });
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(if e.is_validation() { 2 } else { 3 });
    }
}
