use clap::Parser;

use mrk_cli::commands::{dispatch, Cli};

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    dispatch(cli, &mut std::io::stdout().lock())
}
