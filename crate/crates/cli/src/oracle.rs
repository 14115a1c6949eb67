use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use certbound::bounds::certify;
use certbound::oracles::{grid_oracle, pattern_oracle, pgd_attack, Bracket, PgdConfig};
use certbound::{Error, MarginSpec, Norm, PerturbationSpec};

use crate::context::{self, InvariantViolation};
use crate::OracleArgs;

const ORDER_TOL: f64 = 1e-9;

#[derive(Debug, Serialize)]
struct BracketRow {
    sample_id: usize,
    target: usize,
    lower: f64,
    exact: Option<f64>,
    upper: f64,
    ordered: bool,
}

pub fn run(args: OracleArgs) -> Result<()> {
    let (net, samples) = context::load_inputs(&args.model, &args.data)?;
    let spec = PerturbationSpec::new(args.perturbation.norm, args.perturbation.eps)?;
    let exact_mode = net.input_width() == 2 && spec.norm == Norm::Linf;
    let gridded = net.input_width() <= 2;
    let seed = context::seed(args.seed, 0)?;

    let per_sample: Vec<Vec<BracketRow>> = samples
        .par_iter()
        .enumerate()
        .map(|(id, s)| -> Result<Vec<BracketRow>> {
            let x = s.input()?;
            let targets = MarginSpec::all_targets(s.y, net.output_width())?;
            let objectives: Vec<_> = targets.iter().map(|t| t.objective().clone()).collect();
            let cert = certify(args.engine, &net, &x, &spec, &objectives)?;
            let pgd = PgdConfig {
                steps: args.steps,
                restarts: args.restarts,
                seed: seed.wrapping_add(id as u64),
                ..PgdConfig::default()
            };
            let mut rows = Vec::with_capacity(targets.len());
            for ((t, c), &lower) in targets.iter().zip(&objectives).zip(&cert.margins) {
                let exact = if exact_mode {
                    match pattern_oracle(&net, &x, &spec, c) {
                        Ok(m) => Some(m.value),
                        Err(Error::TooManyUnstable { .. }) => None,
                        Err(e) => return Err(e.into()),
                    }
                } else {
                    None
                };
                let mut upper = pgd_attack(&net, &x, &spec, c, &pgd)?.margin;
                if gridded {
                    upper = upper.min(grid_oracle(&net, &x, &spec, c, args.resolution)?.0);
                }
                let bracket = Bracket { lower, exact, upper };
                rows.push(BracketRow {
                    sample_id: id,
                    target: t.target,
                    lower,
                    exact,
                    upper,
                    ordered: bracket.is_ordered(ORDER_TOL),
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let rows: Vec<BracketRow> = per_sample.into_iter().flatten().collect();
    let mut w = csv::Writer::from_writer(context::sink(args.out.as_deref())?);
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    drop(w);

    let bad: Vec<&BracketRow> = rows.iter().filter(|r| !r.ordered).collect();
    let with_exact = rows.iter().filter(|r| r.exact.is_some()).count();
    context::summary(
        args.out.is_some(),
        &format!(
            "{} brackets ({with_exact} with an exact minimum), {} out of order",
            rows.len(),
            bad.len()
        ),
    );
    if let Some(first) = bad.first() {
        return Err(InvariantViolation(format!(
            "{} brackets out of order, first at sample {} target {}",
            bad.len(),
            first.sample_id,
            first.target
        ))
        .into());
    }
    Ok(())
}
