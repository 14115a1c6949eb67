use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use certbound::oracles::{pgd_attack, PgdConfig};
use certbound::{MarginSpec, PerturbationSpec};

use crate::context;
use crate::AttackArgs;

#[derive(Debug, Serialize)]
struct AttackRow {
    sample_id: usize,
    label: usize,
    prediction: usize,
    pgd_margin: f64,
    broken: bool,
}

pub fn run(args: AttackArgs) -> Result<()> {
    let (net, samples) = context::load_inputs(&args.model, &args.data)?;
    let spec = PerturbationSpec::new(args.perturbation.norm, args.perturbation.eps)?;
    let base = PgdConfig {
        steps: args.steps,
        restarts: args.restarts,
        step_size: args.step_size,
        seed: context::seed(args.seed, 0)?,
    };
    let rows: Vec<AttackRow> = samples
        .par_iter()
        .enumerate()
        .map(|(id, s)| -> Result<AttackRow> {
            let x = s.input()?;
            let cfg = PgdConfig {
                seed: base.seed.wrapping_add(id as u64),
                ..base
            };
            let mut margin = f64::INFINITY;
            for t in MarginSpec::all_targets(s.y, net.output_width())? {
                margin = margin.min(pgd_attack(&net, &x, &spec, t.objective(), &cfg)?.margin);
            }
            let prediction = net.predict(&x)?;
            Ok(AttackRow {
                sample_id: id,
                label: s.y,
                prediction,
                pgd_margin: margin,
                broken: prediction != s.y || margin < 0.0,
            })
        })
        .collect::<Result<_>>()?;

    if let Some(path) = &args.out {
        let mut w = csv::Writer::from_writer(context::sink(Some(path))?);
        for row in &rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    let n = rows.len();
    let clean = rows.iter().filter(|r| r.prediction != r.label).count();
    let broken = rows.iter().filter(|r| r.broken).count();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    println!("standard error {clean}/{n} = {:.4}", frac(clean));
    println!(
        "pgd error ({} steps, {} restarts) {broken}/{n} = {:.4}",
        args.steps,
        args.restarts,
        frac(broken)
    );
    Ok(())
}
