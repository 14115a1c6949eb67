use anyhow::{ensure, Result};
use rayon::prelude::*;

use certbound::tightness::tightness_report;
use certbound::training::sample_s1;
use certbound::{Network, PerturbationSpec, Tensor};

use crate::context;
use crate::ToyArgs;

const TIGHT_TOL: f64 = 1e-12;

struct Outcome {
    tight: bool,
    unstable: usize,
    near_axis: bool,
}

pub fn run(args: ToyArgs) -> Result<()> {
    ensure!(args.b > 0.0 && args.b < 1.0, "--b must lie in (0, 1), got {}", args.b);
    ensure!(args.n > 0, "--n must be positive");
    let seed = context::seed(args.seed, 0)?;
    let net = Network::toy_max_margin();
    let spec = PerturbationSpec::linf(args.eps)?;
    let c = Tensor::vector(vec![1.0])?;
    let points = sample_s1(args.b, args.n, seed)?;

    let outcomes: Vec<Outcome> = points
        .par_iter()
        .map(|p| -> Result<Outcome> {
            let rep = tightness_report(&net, &Tensor::vector(p.to_vec())?, &spec, &c)?;
            Ok(Outcome {
                tight: rep.d.abs() <= TIGHT_TOL && rep.r <= TIGHT_TOL,
                unstable: rep.unstable_count(),
                near_axis: p[0].abs() < args.eps,
            })
        })
        .collect::<Result<_>>()?;

    let n = outcomes.len();
    let tight = outcomes.iter().filter(|o| o.tight).count();
    let unstable: usize = outcomes.iter().map(|o| o.unstable).sum();
    let with_unstable = outcomes.iter().filter(|o| o.unstable > 0).count();
    let near = outcomes.iter().filter(|o| o.near_axis).count();
    let near_unstable = outcomes.iter().filter(|o| o.near_axis && o.unstable > 0).count();

    println!("b = {}, eps = {}, n = {n}, seed = {seed}", args.b, args.eps);
    println!("tight-fraction {:.3} ({tight}/{n})", tight as f64 / n as f64);
    println!("unstable neurons {unstable} over {with_unstable} samples");
    println!("samples with |x1| < eps: {near}, of which {near_unstable} have unstable neurons");
    Ok(())
}
