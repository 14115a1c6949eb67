use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use certbound::bounds::certify;
use certbound::data::Sample;
use certbound::oracles::{pgd_attack, PgdConfig};
use certbound::tightness::report_for_target;
use certbound::{Engine, MarginSpec, Network, PerturbationSpec};

use crate::context::{self, InvariantViolation};
use crate::CertifyArgs;

/// Slack allowed between a feasible attack margin and the certified bound.
const ATTACK_SLACK: f64 = 1e-9;

/// One sample's certification summary. `d_sum` and `r_mean` are empty for
/// engines without a linear relaxation.
#[derive(Debug, Clone, Serialize)]
pub struct CertRow {
    pub sample_id: usize,
    pub label: usize,
    pub worst_target: usize,
    pub p_c_star: f64,
    pub certified: bool,
    pub d_sum: Option<f64>,
    pub r_mean: Option<f64>,
    pub pgd_margin: f64,
    pub clean_margin: f64,
}

pub fn certify_sample(
    net: &Network,
    id: usize,
    sample: &Sample,
    spec: &PerturbationSpec,
    engine: Engine,
    pgd: &PgdConfig,
) -> Result<CertRow> {
    let x = sample.input()?;
    let targets = MarginSpec::all_targets(sample.y, net.output_width())?;
    let objectives: Vec<_> = targets.iter().map(|t| t.objective().clone()).collect();
    let cert = certify(engine, net, &x, spec, &objectives)?;

    let (worst, p_c_star) = cert
        .margins
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (t, p)| if p < best.1 { (t, p) } else { best });

    let (d_sum, r_mean) = match cert.relaxation {
        Some(_) => {
            let (mut d, mut r) = (0.0, 0.0);
            for (t, c) in objectives.iter().enumerate() {
                let rep = report_for_target(net, &x, spec, &cert, t, c)?;
                d += rep.d;
                r += rep.r;
            }
            (Some(d), Some(r / objectives.len() as f64))
        }
        None => (None, None),
    };

    let cfg = PgdConfig {
        seed: pgd.seed.wrapping_add(id as u64),
        ..*pgd
    };
    let mut pgd_margin = f64::INFINITY;
    let mut clean_margin = f64::INFINITY;
    for c in &objectives {
        pgd_margin = pgd_margin.min(pgd_attack(net, &x, spec, c, &cfg)?.margin);
        clean_margin = clean_margin.min(net.objective_value(&x, c)?);
    }
    if pgd_margin < p_c_star - ATTACK_SLACK {
        return Err(InvariantViolation(format!(
            "sample {id}: attack margin {pgd_margin} is below the certified bound {p_c_star}"
        ))
        .into());
    }

    Ok(CertRow {
        sample_id: id,
        label: sample.y,
        worst_target: targets[worst].target,
        p_c_star,
        certified: p_c_star > 0.0,
        d_sum,
        r_mean,
        pgd_margin,
        clean_margin,
    })
}

pub fn run(args: CertifyArgs) -> Result<()> {
    let (net, samples) = context::load_inputs(&args.model, &args.data)?;
    let spec = PerturbationSpec::new(args.perturbation.norm, args.perturbation.eps)?;
    let pgd = PgdConfig {
        steps: args.steps,
        restarts: args.restarts,
        seed: context::seed(args.seed, 0)?,
        ..PgdConfig::default()
    };
    let rows: Vec<CertRow> = samples
        .par_iter()
        .enumerate()
        .map(|(id, s)| certify_sample(&net, id, s, &spec, args.engine, &pgd))
        .collect::<Result<_>>()?;

    let mut w = csv::Writer::from_writer(context::sink(args.out.as_deref())?);
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;

    let n = rows.len();
    let open = rows.iter().filter(|r| !r.certified).count();
    let robust = if n == 0 { 0.0 } else { open as f64 / n as f64 };
    context::summary(
        args.out.is_some(),
        &format!(
            "engine {} at {} radius {}: robust error {open}/{n} = {robust:.4}",
            args.engine, args.perturbation.norm, args.perturbation.eps
        ),
    );
    Ok(())
}
