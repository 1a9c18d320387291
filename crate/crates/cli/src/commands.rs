use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use stcif_core::diagnostics::{incidence_envelope, reproduction_numbers, rescaled_residuals};
use stcif_core::io::{self, Bundle, ConfigFile, EventsFile, GridFile};
use stcif_core::likelihood::{fit_with_evaluator, model_search, Evaluator, FitResult};
use stcif_core::simulate::{simulate_replicates, MarkSampler};
use stcif_core::{Error, Model, ParameterVector, SpaceTimeGrid};

use crate::error::{CliError, Result};
use crate::{Command, Common};

/// Significance level reported in ks.json.
const KS_ALPHA: f64 = 0.05;

pub fn dispatch(command: Command) -> Result<()> {
    let common = match &command {
        Command::Fit { common, .. }
        | Command::Simulate { common, .. }
        | Command::Diagnose { common, .. }
        | Command::Search { common, .. }
        | Command::Repro { common, .. }
        | Command::Synth { common, .. } => common.clone(),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| {
        CliError::Usage(format!(
            "cannot start {} worker threads: {e}",
            common.threads.unwrap_or(0)
        ))
    })?;
    std::fs::create_dir_all(&common.out).map_err(|source| CliError::Io {
        path: common.out.display().to_string(),
        source,
    })?;
    pool.install(|| match command {
        Command::Fit { events, common } => fit(&events, &common),
        Command::Simulate {
            events,
            replicates,
            end,
            common,
        } => simulate(events.as_deref(), replicates, end, &common),
        Command::Diagnose {
            events,
            replicates,
            common,
        } => diagnose(&events, replicates, &common),
        Command::Search { events, common } => search(&events, &common),
        Command::Repro {
            events,
            draws,
            common,
        } => repro(&events, draws, &common),
        Command::Synth { end, common } => synth(end, &common),
    })
}

fn load(events: &Path, common: &Common) -> Result<Bundle> {
    let bundle = io::load_validate(events, &common.grid, &common.config)?;
    eprintln!("loaded {}", bundle.summary());
    if bundle.ties_adjusted > 0 {
        eprintln!("tie breaking moved {} event times", bundle.ties_adjusted);
    }
    Ok(bundle)
}

fn load_model(common: &Common) -> Result<(ConfigFile, Model)> {
    let config: ConfigFile = io::read_json(&common.config)?;
    config.model.validate()?;
    let grid: GridFile = io::read_json(&common.grid)?;
    let model = Model::new(config.model.clone(), Arc::new(grid.to_grid()?))?;
    Ok((config, model))
}

fn seed(common: &Common, config: &ConfigFile) -> u64 {
    common.seed.unwrap_or(config.model.seed)
}

fn out_path(common: &Common, name: &str) -> PathBuf {
    common.out.join(name)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let err = |source| CliError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_fit(dir: &Path, result: &FitResult) -> Result<()> {
    io::write_json(&dir.join("fit.json"), result)?;
    write_text(&dir.join("table.txt"), &result.table_text())
}

fn required_theta(config: &ConfigFile, model: &Model) -> Result<ParameterVector> {
    config.theta_for(model)?.ok_or_else(|| {
        Error::Validation(format!(
            "configuration has no 'theta'; expected values for: {}",
            model.layout().names().join(", ")
        ))
        .into()
    })
}

fn end_time(end: Option<f64>, config: &ConfigFile, grid: &SpaceTimeGrid) -> f64 {
    end.or(config.simulation.end_time)
        .unwrap_or_else(|| grid.end_time())
}

fn converged(result: &FitResult) -> Result<()> {
    if result.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(result.message.clone()))
    }
}

fn fit(events: &Path, common: &Common) -> Result<()> {
    let bundle = load(events, common)?;
    let ev = Evaluator::new(&bundle.model, &bundle.events)?;
    let init = bundle.config.theta_for(&bundle.model)?;
    let result = fit_with_evaluator(&ev, init.as_ref())?;
    write_fit(&common.out, &result)?;
    print!("{}", result.table_text());
    converged(&result)
}

fn simulate(
    events: Option<&Path>,
    replicates: usize,
    end: Option<f64>,
    common: &Common,
) -> Result<()> {
    if replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    let (config, model, observed) = match events {
        Some(path) => {
            let b = load(path, common)?;
            (b.config, b.model, b.events)
        }
        None => {
            let (c, m) = load_model(common)?;
            (c, m, Vec::new())
        }
    };
    let theta = required_theta(&config, &model)?;
    let marks: Box<dyn MarkSampler> = config.simulation.marks.build(&observed, model.n_types())?;
    let t_end = end_time(end, &config, model.grid());
    let sims = simulate_replicates(
        &model,
        &theta,
        marks.as_ref(),
        t_end,
        seed(common, &config),
        replicates,
    )?;
    for (r, sim) in sims.iter().enumerate() {
        let name = if replicates == 1 {
            "events.json".to_string()
        } else {
            format!("events_{r:04}.json")
        };
        let file = EventsFile::from_events(&sim.events, &config.model, Some(&sim.sources));
        io::write_json(&out_path(common, &name), &file)?;
        let note = if sim.complete {
            ""
        } else {
            " (stopped at the event cap)"
        };
        println!("replicate {r}: {} events{note}", sim.events.len());
    }
    Ok(())
}

/// Fitted parameters, or the configured ones when given.
fn parameters(
    bundle: &Bundle,
    ev: &Evaluator<'_>,
    common: &Common,
) -> Result<(ParameterVector, Option<FitResult>)> {
    match bundle.config.theta_for(&bundle.model)? {
        Some(theta) => Ok((theta, None)),
        None => {
            let result = fit_with_evaluator(ev, None)?;
            write_fit(&common.out, &result)?;
            Ok((result.theta(), Some(result)))
        }
    }
}

#[derive(Serialize)]
struct ResidualRow {
    i: usize,
    t: f64,
    y: f64,
    u: f64,
}

#[derive(Serialize)]
struct KsReport {
    m: usize,
    statistic: f64,
    p_value: f64,
    band: f64,
    exact: bool,
    alpha: f64,
    pass: bool,
}

fn diagnose(events: &Path, replicates: usize, common: &Common) -> Result<()> {
    let bundle = load(events, common)?;
    let ev = Evaluator::new(&bundle.model, &bundle.events)?;
    let (theta, fitted) = parameters(&bundle, &ev, common)?;
    let res = rescaled_residuals(&ev, &theta)?;
    write_csv(
        &out_path(common, "residuals.csv"),
        (0..res.y.len()).map(|k| ResidualRow {
            i: k + 2,
            t: res.times[k],
            y: res.y[k],
            u: res.u[k],
        }),
    )?;
    write_csv(&out_path(common, "cdf.csv"), res.cdf_points())?;
    let ks = KsReport {
        m: res.ks.m,
        statistic: res.ks.statistic,
        p_value: res.ks.p_value,
        band: res.ks.band,
        exact: res.ks.exact,
        alpha: KS_ALPHA,
        pass: !res.ks.rejects_at(KS_ALPHA),
    };
    io::write_json(&out_path(common, "ks.json"), &ks)?;
    println!(
        "KS D = {:.4}, p = {:.4}, band ±{:.4}: {}",
        ks.statistic,
        ks.p_value,
        ks.band,
        if ks.pass { "pass" } else { "reject" }
    );
    let marks = bundle
        .config
        .simulation
        .marks
        .build(&bundle.events, bundle.model.n_types())?;
    let env = incidence_envelope(
        &bundle.model,
        &theta,
        &bundle.events,
        marks.as_ref(),
        replicates,
        seed(common, &bundle.config),
    )?;
    write_csv(&out_path(common, "envelope.csv"), &env.tiles)?;
    io::write_json(&out_path(common, "envelope.json"), &env)?;
    println!(
        "envelope: {} of {} tiles outside the simulated 95% range, {} excluded",
        env.n_outside(),
        env.tiles.len(),
        env.excluded.len()
    );
    for w in &env.warnings {
        eprintln!("warning: {w}");
    }
    fitted.as_ref().map_or(Ok(()), converged)
}

#[derive(Serialize)]
struct RankingRow<'a> {
    rank: usize,
    id: &'a str,
    stage: u8,
    endemic: String,
    epidemic: String,
    spatial: &'static str,
    n_params: Option<usize>,
    loglik: Option<f64>,
    aic: Option<f64>,
    converged: Option<bool>,
    error: &'a str,
}

fn search(events: &Path, common: &Common) -> Result<()> {
    let bundle = load(events, common)?;
    let lattice = bundle
        .config
        .search
        .clone()
        .ok_or_else(|| Error::Validation("configuration has no 'search' lattice".into()))?;
    let result = model_search(
        &bundle.config.model,
        &bundle.grid(),
        &bundle.events,
        &lattice,
    );
    let rows = result.ranking.iter().enumerate().map(|(r, c)| RankingRow {
        rank: r + 1,
        id: &c.id,
        stage: c.stage,
        endemic: c.endemic_terms.join("+"),
        epidemic: c.epidemic_terms.as_ref().map_or("none".to_string(), |t| {
            if t.is_empty() {
                "1".to_string()
            } else {
                t.join("+")
            }
        }),
        spatial: match c.spatial {
            stcif_core::model::SpatialFamily::Constant => "constant",
            stcif_core::model::SpatialFamily::Gaussian { per_type: false } => "gaussian",
            stcif_core::model::SpatialFamily::Gaussian { per_type: true } => "gaussian_per_type",
        },
        n_params: c.n_params(),
        loglik: c.fit.as_ref().map(|f| f.loglik),
        aic: c.aic(),
        converged: c.fit.as_ref().map(|f| f.converged),
        error: c.error.as_deref().unwrap_or(""),
    });
    write_csv(&out_path(common, "ranking.csv"), rows)?;
    for c in &result.ranking {
        if let Some(f) = &c.fit {
            let dir = common.out.join("models").join(&c.id);
            std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            write_fit(&dir, f)?;
        }
    }
    match result.best() {
        Some(best) => println!(
            "{} candidates; best {} with AIC {:.4}",
            result.ranking.len(),
            best.id,
            best.aic().unwrap_or(f64::NAN)
        ),
        None => println!("{} candidates; none could be fitted", result.ranking.len()),
    }
    Ok(())
}

fn repro(events: &Path, draws: usize, common: &Common) -> Result<()> {
    let bundle = load(events, common)?;
    let ev = Evaluator::new(&bundle.model, &bundle.events)?;
    let init = bundle.config.theta_for(&bundle.model)?;
    let result = fit_with_evaluator(&ev, init.as_ref())?;
    write_fit(&common.out, &result)?;
    let report = reproduction_numbers(
        &bundle.model,
        &result.theta(),
        &result.covariance_matrix(),
        &bundle.events,
        draws,
        seed(common, &bundle.config),
    )?;
    io::write_json(&out_path(common, "mu.json"), &report)?;
    for s in &report.summaries {
        println!(
            "mu[{}] = {:.4} (95% CI {:.4} to {:.4})",
            s.kind, s.estimate, s.lower, s.upper
        );
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    converged(&result)
}

fn synth(end: Option<f64>, common: &Common) -> Result<()> {
    let (config, model) = load_model(common)?;
    let theta = required_theta(&config, &model)?;
    let t_end = end_time(end, &config, model.grid());
    let (file, sim) = io::synth(
        &config,
        model.grid_arc(),
        &theta,
        t_end,
        seed(common, &config),
    )?;
    io::write_json(&out_path(common, "events.json"), &file)?;
    let endemic = sim.sources.iter().filter(|s| s.parent().is_none()).count();
    println!(
        "{} events ({} endemic, {} triggered) on (0, {t_end}]",
        sim.events.len(),
        endemic,
        sim.events.len() - endemic
    );
    Ok(())
}
