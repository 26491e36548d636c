use std::path::PathBuf;

use clap::Args;

use gaitmixer_core::checkpoint;
use gaitmixer_core::Result;

#[derive(Args, Debug)]
pub struct InspectArgs {
    /// Checkpoint file to describe.
    #[arg(long)]
    pub checkpoint: PathBuf,
}

pub fn run(args: InspectArgs) -> Result<()> {
    let ckpt = checkpoint::load(&args.checkpoint, None)?;
    print!("{}", checkpoint::describe(&ckpt));
    Ok(())
}
