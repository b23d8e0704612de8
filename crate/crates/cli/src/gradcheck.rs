use anyhow::{bail, Result};
use clap::Args;
use rayon::prelude::*;
use seld_core::se_block::{seeded_gradcheck, GradcheckReport, SeVariant};

use crate::InvariantViolation;

/// Acceptance bound on the relative gradient error.
pub const TOLERANCE: f64 = 1e-6;

fn parse_shape(s: &str) -> Result<(usize, usize, usize), String> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|d| d.trim().parse::<usize>().map_err(|_| format!("bad dimension {d:?}")))
        .collect::<Result<_, _>>()?;
    match dims[..] {
        [c, f, t] if c > 0 && f > 0 && t > 0 => Ok((c, f, t)),
        _ => Err(format!("expected three positive sizes C,F,T, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Input shape as C,F,T.
    #[arg(long, default_value = "4,6,5", value_parser = parse_shape)]
    shape: (usize, usize, usize),
    /// Reduction ratio for both bottlenecks; must divide C and F.
    #[arg(long, default_value_t = 2)]
    ratio: usize,
    /// Number of random seeds per variant (0..n).
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Skew the analytic input gradient so every check fails.
    #[arg(long, hide = true)]
    corrupt_backward: bool,
}

pub fn run(args: GradcheckArgs) -> Result<()> {
    let (c, f, t) = args.shape;
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    for v in SeVariant::ALL {
        if !v.accepts(args.shape, args.ratio) {
            bail!("ratio {} does not divide the axes {} SE squeezes in shape {c},{f},{t}", args.ratio, v.name());
        }
    }

    let mut failures = Vec::new();
    let mut checks = 0;
    for v in SeVariant::ALL {
        let reports: Vec<GradcheckReport> = (0..args.seeds)
            .into_par_iter()
            .map(|seed| seeded_gradcheck(v, args.shape, args.ratio, seed, args.corrupt_backward))
            .collect::<seld_core::Result<_>>()?;
        checks += reports.len();
        let worst = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
        let refined: usize = reports.iter().map(|r| r.refined).sum();
        let verdict = if worst < TOLERANCE { "PASS" } else { "FAIL" };
        let cmp = if worst < TOLERANCE { "<" } else { ">=" };
        println!(
            "{:<10} {verdict} max_rel_err {cmp} 1e-6 (worst {worst:.3e}, {} seeds, {refined} refined steps)",
            v.name(),
            reports.len()
        );
        if worst >= TOLERANCE {
            failures.push(v.name());
        }
    }
    println!("{checks} checks total");
    if !failures.is_empty() {
        return Err(InvariantViolation(format!("gradient check failed for {}", failures.join(", "))).into());
    }
    Ok(())
}
