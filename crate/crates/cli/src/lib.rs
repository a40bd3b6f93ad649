//! Command implementations behind the `hoverpost` binary. Each command is a
//! plain function returning a typed report so it can be driven from tests.

pub mod args;
pub mod arrays;
pub mod commands;
pub mod error;

use std::path::Path;

use serde::Serialize;

use args::{Cli, Command};
use commands::bench::{run_bench, BenchOptions};
use commands::evaluate::{mean_line, run_evaluate, EvaluateOptions};
use commands::gen_targets::{run_gen_targets, GenTargetsOptions};
use commands::loss_check::{run_loss_check, LossCheckOptions};
use commands::postprocess::{run_postprocess, summary, PostprocessOptions};
use commands::toy_distill::{run_toy_distill, ToyDistillOptions};
pub use error::{CliError, CliResult};

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    // through Value so that keys come out sorted
    let value = serde_json::to_value(v).map_err(|e| CliError::Core(e.into()))?;
    let mut s = serde_json::to_string_pretty(&value).map_err(|e| CliError::Core(e.into()))?;
    s.push('\n');
    Ok(s)
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    print!("{text}");
    if let Some(path) = out {
        std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn parse_size(s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::Input(format!("size `{s}` is not HxW"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((h.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?))
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Postprocess(a) => {
            let result = run_postprocess(&PostprocessOptions {
                np: a.np,
                hv: a.hv,
                tp: a.tp,
                tp_are_probs: a.tp_probs,
                out: a.out,
                overlay: a.overlay,
                image: a.image,
                config: a.postproc.config(),
            })?;
            println!("{}", summary(&result)?);
            Ok(())
        }
        Command::Evaluate(a) => {
            let report = run_evaluate(&EvaluateOptions {
                gt_dir: a.gt,
                pred_dir: a.pred,
                remap: a.remap,
                num_classes: a.num_classes,
                radius: a.radius,
                threads: a.threads.unwrap_or_else(default_threads),
            })?;
            let json = report.to_json()?;
            if let Some(path) = &a.out {
                std::fs::write(path, &json).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                println!("{}", mean_line(&report));
            } else {
                print!("{json}");
            }
            Ok(())
        }
        Command::GenTargets(a) => {
            let report = run_gen_targets(&GenTargetsOptions {
                instances: a.instances,
                out: a.out,
                num_types: a.num_types,
            })?;
            emit(&to_json(&report)?, None)
        }
        Command::LossCheck(a) => {
            let sizes = a.sizes.iter().map(|s| parse_size(s)).collect::<CliResult<Vec<_>>>()?;
            let report = run_loss_check(&LossCheckOptions {
                seed: a.seed,
                sizes,
                fixtures: a.fixtures,
                classes: a.classes,
                tolerance: a.tolerance,
                corrupt_gradient: a.corrupt_gradient,
                ..Default::default()
            })?;
            emit(&to_json(&report)?, a.out.as_deref())?;
            if !report.pass {
                return Err(CliError::CheckFailed(format!(
                    "max relative gradient error {:e} exceeds {:e}",
                    report.max_relative_error.max(),
                    report.tolerance
                )));
            }
            Ok(())
        }
        Command::ToyDistill(a) => {
            let report = run_toy_distill(&ToyDistillOptions {
                seed: a.seed,
                steps: a.steps,
                alpha: a.alpha,
                temperature: a.temperature,
                learning_rate: a.learning_rate,
                ..Default::default()
            })?;
            emit(&to_json(&report)?, a.out.as_deref())?;
            if !report.pass {
                return Err(CliError::CheckFailed(format!(
                    "loss ratio {:.4} (need <= 0.5), NP agreement {:.4} (need >= 0.9)",
                    report.loss_ratio, report.np_agreement
                )));
            }
            Ok(())
        }
        Command::Bench(a) => {
            let report = run_bench(&BenchOptions {
                size: a.size,
                tiles: a.tiles,
                repetitions: a.repetitions,
                threads: a.threads,
                cell: a.cell,
                seed: a.seed,
                config: a.postproc.config(),
            })?;
            emit(&to_json(&report)?, a.out.as_deref())
        }
    }
}
