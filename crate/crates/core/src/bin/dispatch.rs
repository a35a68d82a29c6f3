use clap::Parser;
use sced::expcli::{run, Cli};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let text = run(Cli::parse())?;
    println!("{text}");
    Ok(())
}
