use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;

#[derive(Parser)]
#[command(name = "ccad-serve", about = "Serve drafting sessions over HTTP")]
struct Args {
    #[arg(long, default_value = "./contracts")]
    repo: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    let app = contract_cad_service::router(contract_cad::store::Repository::open(args.repo));
    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    axum::serve(listener, app).await
}
