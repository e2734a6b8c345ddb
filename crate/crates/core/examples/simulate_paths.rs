//! Sample a few walks in one environment and write them as CSV.

use rwre_lab::env::{EnvironmentView, SiteLaw};
use rwre_lab::walk::{sample_batch, write_paths_csv};

fn main() -> rwre_lab::Result<()> {
    let env = EnvironmentView::new(SiteLaw::uniform_dirichlet(1), 42)?;
    let paths = sample_batch(&env, 64, 4, 7)?;
    for p in &paths {
        println!(
            "replica seed {:#018x}: X_64 = {:?}",
            p.replica_seed,
            p.end().coords(1)
        );
    }
    let mut out = Vec::new();
    write_paths_csv(&mut out, env.nu(), &paths[..1])?;
    let text = String::from_utf8(out).expect("utf-8");
    println!("first rows of the CSV:");
    for line in text.lines().take(6) {
        println!("  {line}");
    }
    Ok(())
}
