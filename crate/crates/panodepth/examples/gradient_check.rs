//! Finite-difference verification of every loss gradient.
//!
//! ```bash
//! cargo run -p panodepth --example gradient_check
//! ```

use panodepth::gradcheck::{grad_check, LossKind};
use panodepth::losses::LossConfig;

fn main() -> panodepth::Result<()> {
    let cfg = LossConfig {
        df_patch_size: 16,
        ..LossConfig::default()
    };
    println!("loss    seed  max rel err   checked  skipped  kinks  pass");
    for kind in LossKind::ALL {
        for seed in [0u64, 1] {
            let r = grad_check(kind, 32, 16, seed, 1e-3, &cfg)?;
            println!(
                "{:<7} {seed:>4}  {:>11.3e}  {:>7}  {:>7}  {:>5}  {}",
                kind.name(),
                r.max_rel_err,
                r.n_checked,
                r.n_skipped,
                r.n_nonsmooth,
                if r.pass { "yes" } else { "NO" },
            );
        }
    }
    Ok(())
}
