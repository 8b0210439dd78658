//! The six commands. Each one runs the shared pipeline, writes its artifacts
//! under the configured output directory, and prints a short progress line
//! unless `--quiet` is set. CSV tables are deterministic given the config;
//! wall times live in the `.meta` sidecars.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use opc::baselines::linear_rollout;
use opc::dynamics::TrajectoryGrid;
use opc::generate::generate_averaged;

use crate::config::{ExperimentConfig, FitMode};
use crate::error::CliError;
use crate::model_file;
use crate::output::{series_header, Meta, Table};
use crate::pipeline;
use crate::plot::{self, Series};

macro_rules! note {
    ($quiet:expr, $($arg:tt)*) => {
        if !$quiet {
            println!($($arg)*);
        }
    };
}

pub fn simulate(cfg: &ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let started = Instant::now();
    let traj = pipeline::measure(cfg)?;
    let states = traj.states();

    let mut table = Table::new(&series_header("y", states.nrows()));
    let mut cells = vec![0.0; states.nrows() + 1];
    for k in 0..traj.grid().steps() {
        cells[0] = traj.grid().t(k);
        for r in 0..states.nrows() {
            cells[r + 1] = states[(r, k)];
        }
        table.row(&cells);
    }
    let path = cfg.out_dir.join("measured.csv");
    table.write(&path)?;
    Meta::new("simulate", &cfg.name)
        .push("seed", cfg.init_seed)
        .wall_time(started.elapsed())
        .write(&cfg.out_dir.join("measured.meta"))?;

    note!(
        quiet,
        "measured {} samples of {} into {}",
        traj.grid().steps(),
        cfg.system().name(),
        path.display()
    );
    Ok(())
}

pub fn mc(cfg: &ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let started = Instant::now();
    let avg = pipeline::monte_carlo(cfg)?;

    let path = cfg.out_dir.join("mc_mean.csv");
    write_mean(&path, avg.mean(), avg.grid())?;
    Meta::new("mc", &cfg.name)
        .push("seed", cfg.mc_seed)
        .push("members", avg.count())
        .wall_time(started.elapsed())
        .write(&cfg.out_dir.join("mc_mean.meta"))?;

    note!(
        quiet,
        "averaged {} members in {:.0?} into {}",
        avg.count(),
        started.elapsed(),
        path.display()
    );
    Ok(())
}

pub fn fit(cfg: &ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let started = Instant::now();
    let traj = pipeline::measure(cfg)?;
    let s = pipeline::snapshot_set(cfg, &traj)?;
    let (model, report) = pipeline::fit(cfg, &s)?;

    model_file::save(&cfg.out_dir.join("model.txt"), &model)?;

    let mut history = Table::new("iteration,objective");
    for (i, value) in report.history.iter().enumerate() {
        history.row(&[i as f64, *value]);
    }
    history.write(&cfg.out_dir.join("history.csv"))?;

    let mut spectrum = Table::new("re,im");
    for ev in &report.spectrum {
        spectrum.row(&[ev.re, ev.im]);
    }
    spectrum.write(&cfg.out_dir.join("spectrum.csv"))?;

    Meta::new("fit", &cfg.name)
        .push("seed", cfg.fit_seed)
        .push("mode", cfg.mode.name())
        .push("iterations", cfg.iterations)
        .push(
            "fit_seconds",
            format_args!("{:.6}", report.wall_time.as_secs_f64()),
        )
        .wall_time(started.elapsed())
        .write(&cfg.out_dir.join("fit.meta"))?;

    note!(
        quiet,
        "fitted {} in {} iterations, objective {:.3e}, model at {}",
        cfg.mode.name(),
        cfg.iterations,
        report.final_objective,
        cfg.out_dir.join("model.txt").display()
    );
    Ok(())
}

pub fn generate(cfg: &ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let started = Instant::now();
    let model_path = cfg.out_dir.join("model.txt");
    let model = model_file::load(&model_path)?;
    let stored_mode = if model.b().is_some() {
        FitMode::UnknownB
    } else {
        FitMode::KnownB
    };
    if stored_mode != cfg.mode {
        return Err(CliError::Model {
            path: model_path,
            line: None,
            what: format!(
                "model was fitted {} but [opc] mode says {}",
                stored_mode.name(),
                cfg.mode.name()
            ),
        });
    }

    let traj = pipeline::measure(cfg)?;
    let s = pipeline::snapshot_set(cfg, &traj)?;
    let record = pipeline::control_record(cfg, &s)?;
    let avg = generate_averaged(&model, &pipeline::resolved_x0(cfg), &record, &cfg.grid())?;

    let path = cfg.out_dir.join("opc_mean.csv");
    write_mean(&path, avg.mean(), avg.grid())?;
    Meta::new("generate", &cfg.name)
        .push("seed", model.seed_cfg().seed)
        .push("members", avg.count())
        .wall_time(started.elapsed())
        .write(&cfg.out_dir.join("opc_mean.meta"))?;

    note!(
        quiet,
        "generated {} members in {:.0?} into {}",
        avg.count(),
        started.elapsed(),
        path.display()
    );
    Ok(())
}

pub fn compare(cfg: &ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let started = Instant::now();
    let traj = pipeline::measure(cfg)?;
    let s = pipeline::snapshot_set(cfg, &traj)?;
    let record = pipeline::control_record(cfg, &s)?;
    let (model, _) = pipeline::fit(cfg, &s)?;
    let baseline = pipeline::dmdc(cfg, &s)?;

    let grid = cfg.grid();
    let x0 = pipeline::resolved_x0(cfg);
    let opc_avg = generate_averaged(&model, &x0, &record, &grid)?;
    let rollout = linear_rollout(&baseline, &x0, &record, grid.steps())?;
    let mc_avg = pipeline::monte_carlo(cfg)?;

    let t: Vec<f64> = grid.times().collect();
    let d_r = mc_avg.mean().nrows();
    for r in 0..d_r {
        let coord = r + 1;
        let mut table = Table::new("t,mc,opc,dmdc");
        for k in 0..grid.steps() {
            table.row(&[
                t[k],
                mc_avg.mean()[(r, k)],
                opc_avg.mean()[(r, k)],
                rollout[(r, k)],
            ]);
        }
        table.write(&cfg.out_dir.join(format!("compare_x{coord}.csv")))?;

        let mc_row: Vec<f64> = mc_avg.mean().row(r).iter().copied().collect();
        let opc_row: Vec<f64> = opc_avg.mean().row(r).iter().copied().collect();
        let dmdc_row: Vec<f64> = rollout.row(r).iter().copied().collect();
        let svg = plot::line_plot(
            &format!("x{coord}"),
            &t,
            &[
                Series {
                    label: "mc",
                    color: "#1a1a1a",
                    dashed: false,
                    values: &mc_row,
                },
                Series {
                    label: "opc",
                    color: "#1f6fce",
                    dashed: false,
                    values: &opc_row,
                },
                Series {
                    label: "dmdc",
                    color: "#c23b22",
                    dashed: true,
                    values: &dmdc_row,
                },
            ],
        );
        crate::output::write_text(&cfg.out_dir.join(format!("compare_x{coord}.svg")), &svg)?;
    }

    let opc_rmse = rmse_rows(opc_avg.mean(), mc_avg.mean());
    let dmdc_rmse = rmse_rows(&rollout, mc_avg.mean());
    let mut summary = Table::new(&{
        let mut h = String::from("pair");
        for i in 1..=d_r {
            h.push_str(&format!(",x{i}"));
        }
        h
    });
    summary.labeled_row("opc_vs_mc", &opc_rmse);
    summary.labeled_row("dmdc_vs_mc", &dmdc_rmse);
    summary.write(&cfg.out_dir.join("rmse_summary.csv"))?;

    Meta::new("compare", &cfg.name)
        .push("seed_init", cfg.init_seed)
        .push("seed_mc", cfg.mc_seed)
        .push("seed_fit", cfg.fit_seed)
        .wall_time(started.elapsed())
        .write(&cfg.out_dir.join("compare.meta"))?;

    note!(
        quiet,
        "compared {} coordinates in {:.0?}: rmse opc {:?} vs dmdc {:?}",
        d_r,
        started.elapsed(),
        opc_rmse.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>(),
        dmdc_rmse.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>()
    );
    Ok(())
}

pub fn bench(cfg: &ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let started = Instant::now();
    let traj = pipeline::measure(cfg)?;
    let s = pipeline::snapshot_set(cfg, &traj)?;
    let record = pipeline::control_record(cfg, &s)?;
    let (model, _) = pipeline::fit(cfg, &s)?;
    let grid = cfg.grid();
    let x0 = pipeline::resolved_x0(cfg);

    let mc_seconds = timed(|| pipeline::monte_carlo(cfg).map(drop))?;
    let gen_seconds = timed(|| {
        generate_averaged(&model, &x0, &record, &grid)?;
        Ok(())
    })?;

    let mut table = Table::new("experiment,method,seconds");
    table.labeled_row(&format!("{},mc_projection", cfg.name), &[mc_seconds]);
    table.labeled_row(&format!("{},opc_generation", cfg.name), &[gen_seconds]);
    table.write(&cfg.out_dir.join("bench.csv"))?;

    Meta::new("bench", &cfg.name)
        .push("mc_members", cfg.mc_samples)
        .push("generated_members", cfg.n_gen_count)
        .wall_time(started.elapsed())
        .write(&cfg.out_dir.join("bench.meta"))?;

    note!(
        quiet,
        "{}: mc_projection {:.3}s, opc_generation {:.3}s ({:.1}x)",
        cfg.name,
        mc_seconds,
        gen_seconds,
        mc_seconds / gen_seconds
    );
    Ok(())
}

/// Runs `work` once as a discarded warm-up and once timed.
fn timed(mut work: impl FnMut() -> Result<(), CliError>) -> Result<f64, CliError> {
    work()?;
    let t0 = Instant::now();
    work()?;
    Ok(t0.elapsed().as_secs_f64())
}

fn write_mean(path: &Path, mean: &DMatrix<f64>, grid: &TrajectoryGrid) -> Result<(), CliError> {
    let mut table = Table::new(&series_header("x", mean.nrows()));
    let mut cells = vec![0.0; mean.nrows() + 1];
    for k in 0..grid.steps() {
        cells[0] = grid.t(k);
        for r in 0..mean.nrows() {
            cells[r + 1] = mean[(r, k)];
        }
        table.row(&cells);
    }
    table.write(path)
}

fn rmse_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    (0..a.nrows())
        .map(|r| {
            let sum: f64 = (0..a.ncols())
                .map(|k| (a[(r, k)] - b[(r, k)]).powi(2))
                .sum();
            (sum / a.ncols() as f64).sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_of_a_trajectory_against_itself_is_zero() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 3.0, 0.5, 0.25, -0.125]);
        assert_eq!(rmse_rows(&m, &m), vec![0.0, 0.0]);
    }

    #[test]
    fn rmse_matches_the_hand_computed_value() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DMatrix::from_row_slice(1, 2, &[0.0, 2.0]);
        assert_eq!(rmse_rows(&a, &b), vec![1.0]);
    }
}
