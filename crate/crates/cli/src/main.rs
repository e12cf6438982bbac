use clap::Parser;

fn main() -> anyhow::Result<()> {
    insitu_cli::run(insitu_cli::Cli::parse())
}
