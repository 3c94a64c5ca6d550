use std::fs;

use glaa::estimator::{gla_tensor, gla_tensor_with_fallback, sample_covariance_z};
use glaa::simulation::{aggregate, check_design, run_replications, FKind, ScenarioSpec, SimulationOptions};
use glaa::tuning::{init_eta_from_quantile, refit_config, tune as tune_grid};
use glaa::{fit as fit_delta, sample_delta, Dataset, GlaaConfig, GlaaError};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::input::{load_dataset, Preprocess};
use crate::output::{
    to_json, write_atomic, FitDocument, FitSection, InputSection, TensorDocument, TuneDocument,
};
use crate::tables::{aggregate_csv, aggregate_text, replications_csv};
use crate::{DataArgs, Design, FitArgs, GlaArgs, Ridge, SimulateArgs, TuneArgs};

fn check_ranks(ranks: [usize; 3]) -> CliResult<()> {
    match ranks.iter().position(|&r| r == 0) {
        Some(k) => Err(CliError::Usage(format!("rank of mode {} must be positive", k + 1))),
        None => Ok(()),
    }
}

fn load(data: &DataArgs) -> CliResult<(Dataset, InputSection)> {
    let pre = Preprocess {
        log: data.log,
        standardize: data.standardize,
    };
    let ds = load_dataset(&data.x, &data.y, &data.z, pre)?;
    let input = InputSection {
        n: ds.n(),
        dims: ds.dims(),
        log: data.log,
        standardize: data.standardize,
    };
    Ok((ds, input))
}

pub fn fit(a: FitArgs) -> CliResult<()> {
    check_ranks(a.ranks)?;
    if !(a.init_keep > 0.0 && a.init_keep <= 1.0) {
        return Err(CliError::Usage("--init-keep must lie in (0, 1]".into()));
    }
    let (data, input) = load(&a.data)?;
    let delta = sample_delta(&data)?;
    let eta = match a.eta {
        Some(eta) => eta,
        None => init_eta_from_quantile(&delta, a.init_keep)?,
    };
    let config = GlaaConfig {
        max_iter: a.max_iter,
        tol: a.tol,
        ..GlaaConfig::new(a.ranks)
    }
    .with_eta(eta)
    .with_eta_tilde(a.eta_tilde);
    let result = fit_delta(&delta, &config)?;
    let doc = FitDocument {
        command: "fit".into(),
        input,
        fit: FitSection::new(&result, &config, &data),
    };
    write_atomic(&a.data.out, &to_json(&doc)?)
}

pub fn tune(a: TuneArgs) -> CliResult<()> {
    check_ranks(a.ranks)?;
    let grid = a.grid.grid();
    let (data, input) = load(&a.data)?;
    grid.validate(data.n())?;
    let base = GlaaConfig {
        max_iter: a.max_iter,
        tol: a.tol,
        ..GlaaConfig::new(a.ranks)
    };
    base.validate(data.dims())?;
    let tuned = tune_grid(&data, &base, &grid)?;
    let refit_section = if a.refit {
        let delta = sample_delta(&data)?;
        let config = refit_config(&delta, data.n(), &base, &grid, &tuned)?;
        let result = fit_delta(&delta, &config)?;
        Some(FitSection::new(&result, &config, &data))
    } else {
        None
    };
    let doc = TuneDocument {
        command: "tune".into(),
        input,
        grid,
        ranks: a.ranks,
        tuning: tuned,
        refit: refit_section,
    };
    write_atomic(&a.data.out, &to_json(&doc)?)
}

#[derive(Serialize)]
struct ScenarioDocument<'a> {
    command: &'static str,
    scenario: u8,
    spec: &'a ScenarioSpec,
    options: &'a SimulationOptions,
    reps: usize,
    files: [&'static str; 3],
}

pub fn simulate(a: SimulateArgs) -> CliResult<()> {
    if a.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let mut spec = ScenarioSpec::preset(a.scenario)?.with_seed(a.seed);
    if let Some(n) = a.n {
        spec.n = n;
    }
    for (k, p) in [a.p1, a.p2, a.p3].into_iter().enumerate() {
        if let Some(p) = p {
            spec.p[k] = p;
        }
    }
    if a.p3.is_some() {
        // One active Z variable when Z is scalar, five otherwise.
        spec.s[2] = if spec.p[2] == 1 { 1 } else { 5.min(spec.p[2]) };
    }
    spec.f_kind = match a.f {
        Design::Sign => FKind::Sign,
        Design::Sigmoid => FKind::Sigmoid { xi: a.xi },
    };
    if let Some(rho) = a.rho {
        spec.rho = rho.0;
    }
    let mut options = SimulationOptions::default();
    options.grid.grid_size = a.grid_size;
    options.grid.split_fraction = a.split_frac;
    options.grid.validate(spec.n)?;
    check_design(&spec)?;

    let outcomes = run_replications(&spec, &options, a.reps)?;
    let rows = aggregate(&outcomes);
    fs::create_dir_all(&a.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", a.out.display())))?;
    write_atomic(&a.out.join("replications.csv"), &replications_csv(&outcomes)?)?;
    write_atomic(&a.out.join("aggregate.csv"), &aggregate_csv(&rows)?)?;
    let title = format!(
        "Scenario {}: n = {}, p = ({}, {}, {}), {} replications, seed {}",
        a.scenario, spec.n, spec.p[0], spec.p[1], spec.p[2], a.reps, a.seed
    );
    write_atomic(&a.out.join("aggregate.txt"), aggregate_text(&rows, &title).as_bytes())?;
    let doc = ScenarioDocument {
        command: "simulate",
        scenario: a.scenario,
        spec: &spec,
        options: &options,
        reps: a.reps,
        files: ["replications.csv", "aggregate.csv", "aggregate.txt"],
    };
    write_atomic(&a.out.join("scenario.json"), &to_json(&doc)?)
}

pub fn gla(a: GlaArgs) -> CliResult<()> {
    let (data, input) = load(&a.data)?;
    let delta = sample_delta(&data)?;
    let sigma_z = sample_covariance_z(&data)?;
    let (phi, ridge) = match a.ridge {
        None => gla_tensor(&delta, &sigma_z, 0.0)
            .map(|phi| (phi, 0.0))
            .map_err(|e| match e {
                GlaaError::Singular(msg) => CliError::Numerical(format!(
                    "{msg}; rerun with --ridge EPS or --ridge auto"
                )),
                other => other.into(),
            })?,
        Some(Ridge::Value(r)) => (gla_tensor(&delta, &sigma_z, r)?, r),
        Some(Ridge::Auto) => gla_tensor_with_fallback(&delta, &sigma_z)?,
    };
    let doc = TensorDocument::new(input, &phi, ridge);
    write_atomic(&a.data.out, &to_json(&doc)?)
}
