use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use headway::delay::{delay_sweep, write_delay_csv};
use headway::experiments::{self, ReproduceOptions};
use headway::fit::{fit_bivariate, fit_gamma, fit_shifted_gamma};
use headway::mc::{
    empirical_kth_nearest, empirical_mrc, empirical_outage, simulate_interference, with_threads, McSettings,
};
use headway::model::validate;
use headway::moments::{
    quadrature_moments, spatial_correlation, spatial_correlation_quadrature, CorrelationForm, MomentSummary,
    PcfQuadrature, Provenance,
};
use headway::outage::{
    mrc_success, mrc_success_ppp, mrc_success_shifted, outage_gamma, outage_jensen, outage_ppp, outage_shifted_gamma,
    OutageCurve, OutageModel,
};
use headway::process::{nearest_distance_cdf, nearest_distance_pdf};
use headway::specfun::QuadratureSpec;
use headway::{LinkConfig, TrafficModel, VERSION};

use crate::args::{num, pick, Cli, Command, Config, CorrelationChoice, Flags, McArgs, MomentSource};
use crate::Failure;

pub fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    with_threads(cli.threads, || dispatch(cli.command, &cfg))?
}

/// A CSV body plus the comment lines that precede it.
struct Csv {
    command: &'static str,
    flags: Flags,
    notes: Vec<String>,
    body: Vec<u8>,
}

impl Csv {
    fn new(command: &'static str) -> Self {
        Self {
            command,
            flags: Flags::default(),
            notes: Vec::new(),
            body: Vec::new(),
        }
    }

    fn row(&mut self, cells: &[String]) {
        self.body.extend_from_slice(cells.join(",").as_bytes());
        self.body.push(b'\n');
    }

    fn note_validation(&mut self, traffic: &TrafficModel, link: &LinkConfig) {
        self.notes.extend(
            validate(traffic, link)
                .warnings
                .into_iter()
                .map(|w| format!("warning: {w}")),
        );
    }

    fn emit(self, dest: Option<PathBuf>) -> Result<(), Failure> {
        let mut text = format!(
            "# headway {VERSION}\n# headway {} {}\n",
            self.command,
            self.flags.line()
        )
        .into_bytes();
        for n in &self.notes {
            text.extend_from_slice(format!("# {n}\n").as_bytes());
        }
        text.extend_from_slice(&self.body);
        match dest {
            Some(path) => {
                fs::write(&path, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
            }
            None => Ok(std::io::stdout().write_all(&text)?),
        }
    }
}

fn cells<const N: usize>(v: [f64; N]) -> Vec<String> {
    v.iter().map(|&x| num(x)).collect()
}

fn moments_for(
    source: MomentSource,
    traffic: &TrafficModel,
    link: &LinkConfig,
    mc: &McArgs,
    cfg: &Config,
    flags: &mut Flags,
) -> Result<MomentSummary, Failure> {
    Ok(match source {
        MomentSource::Analytic => MomentSummary::analytic(traffic, link),
        MomentSource::Ppp => MomentSummary::analytic(&traffic.poisson_equivalent(), link),
        MomentSource::Quadrature => quadrature_moments(traffic, link, &PcfQuadrature::default())?.summary(),
        MomentSource::Empirical => {
            let settings = mc.resolve(cfg, traffic, link, flags);
            simulate_interference(traffic, link, &settings, 1)?.moments()
        }
    })
}

fn provenance_label(p: Provenance) -> String {
    serde_json::to_value(p)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| format!("{p:?}"))
}

fn dispatch(command: Command, cfg: &Config) -> Result<(), Failure> {
    match command {
        Command::Moments { model, source, mc, out } => {
            let mut csv = Csv::new("moments");
            let (tr, link) = model.resolve(cfg, &mut csv.flags)?;
            csv.note_validation(&tr, &link);
            let src = source.resolve(cfg, &mut csv.flags);
            let m = moments_for(src, &tr, &link, &mc, cfg, &mut csv.flags)?;
            csv.row(&["source", "mean", "variance", "skewness", "cov"].map(String::from));
            let mut row = vec![provenance_label(m.provenance)];
            row.extend(cells([m.mean, m.variance, m.skewness.unwrap_or(f64::NAN), m.cov()]));
            csv.row(&row);
            csv.emit(out.resolve(cfg))
        }
        Command::Fit { model, source, mc, out } => {
            let mut csv = Csv::new("fit");
            let (tr, link) = model.resolve(cfg, &mut csv.flags)?;
            let src = source.resolve(cfg, &mut csv.flags);
            let m = moments_for(src, &tr, &link, &mc, cfg, &mut csv.flags)?;
            let g = fit_gamma(&m)?;
            csv.row(&["model", "k", "beta", "epsilon", "mean", "variance", "skewness"].map(String::from));
            let mut row = vec!["gamma".to_string()];
            row.extend(cells([g.k, g.beta, 0.0, g.mean(), g.variance(), g.skewness()]));
            csv.row(&row);
            if m.skewness.is_some() {
                let s = fit_shifted_gamma(&m)?;
                if s.shift_is_negative() {
                    csv.notes.push("warning: shifted-gamma fit has a negative shift".into());
                }
                let mut row = vec!["shifted-gamma".to_string()];
                row.extend(cells([s.k, s.beta, s.epsilon, s.mean(), s.variance(), s.skewness()]));
                csv.row(&row);
            }
            csv.emit(out.resolve(cfg))
        }
        Command::Distance {
            model,
            points,
            x_max,
            sim,
            mc,
            out,
        } => {
            let mut csv = Csv::new("distance");
            let (tr, link) = model.resolve(cfg, &mut csv.flags)?;
            csv.note_validation(&tr, &link);
            let n = pick(points, cfg.points, 200);
            let hi = pick(x_max, cfg.x_max, link.r0() + tr.hardcore() + 5.0 / tr.mu());
            if n < 2 || hi.is_nan() || hi <= link.r0() {
                return Err(Failure::Usage(format!(
                    "points must be at least 2 and x-max above r0 = {}, got {n} and {hi}",
                    link.r0()
                )));
            }
            csv.flags.push("points", n);
            csv.flags.push("x-max", num(hi));
            let simulated = if sim.resolve(cfg, &mut csv.flags) {
                let s = mc.resolve(cfg, &tr, &link, &mut csv.flags);
                Some(empirical_kth_nearest(&tr, &link, 1, &s)?)
            } else {
                None
            };
            let mut header = vec!["x", "cdf", "pdf"];
            if simulated.is_some() {
                header.push("mc_cdf");
            }
            csv.row(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>());
            for i in 0..n {
                let x = link.r0() + (hi - link.r0()) * i as f64 / (n - 1) as f64;
                let mut row = cells([
                    x,
                    nearest_distance_cdf(&tr, &link, x)?,
                    nearest_distance_pdf(&tr, &link, x)?,
                ]);
                if let Some(k) = &simulated {
                    row.push(num(k.ecdf(1, x)));
                }
                csv.row(&row);
            }
            csv.emit(out.resolve(cfg))
        }
        Command::Outage {
            model,
            source,
            grid,
            sim,
            mc,
            out,
        } => {
            let mut csv = Csv::new("outage");
            let (tr, link) = model.resolve(cfg, &mut csv.flags)?;
            csv.note_validation(&tr, &link);
            let thetas = grid.resolve(cfg, &mut csv.flags)?;
            let src = source.resolve(cfg, &mut csv.flags);
            let m = moments_for(src, &tr, &link, &mc, cfg, &mut csv.flags)?;
            let pr = link.pr();
            let mut curve = OutageCurve::new(thetas.clone());
            curve.push_model(OutageModel::Ppp, |t| outage_ppp(&tr, &link, t))?;
            curve.push_model(OutageModel::Jensen, |t| outage_jensen(&tr, &link, t))?;
            let g = fit_gamma(&m)?;
            curve.push_model(OutageModel::Gamma, |t| outage_gamma(&g, t, pr))?;
            if m.skewness.is_some() {
                let s = fit_shifted_gamma(&m)?;
                curve.push_model(OutageModel::ShiftedGamma, |t| outage_shifted_gamma(&s, t, pr))?;
            }
            if sim.resolve(cfg, &mut csv.flags) {
                let settings = simulation_settings(&mc, cfg, &tr, &link, &mut csv.flags, src);
                let ens = simulate_interference(&tr, &link, &settings, 1)?;
                let emp = empirical_outage(&ens, &thetas);
                curve.push_column(OutageModel::Empirical, emp.columns[0].1.clone());
            }
            curve.write_csv(&mut csv.body)?;
            csv.emit(out.resolve(cfg))
        }
        Command::Delay {
            model,
            grid,
            series,
            out,
        } => {
            let mut csv = Csv::new("delay");
            let (tr, link) = model.resolve(cfg, &mut csv.flags)?;
            csv.note_validation(&tr, &link);
            let thetas = grid.resolve(cfg, &mut csv.flags)?;
            let spec = series.resolve(cfg, &mut csv.flags)?;
            let rows = delay_sweep(&tr, &link, &thetas, &spec)?;
            for r in rows.iter().filter(|r| r.static_hardcore.is_none()) {
                csv.notes.push(format!(
                    "warning: static hardcore series not converged at {} dB; last partial sum reported",
                    r.theta_db
                ));
            }
            write_delay_csv(&rows, &mut csv.body)?;
            csv.emit(out.resolve(cfg))
        }
        Command::Mrc {
            model,
            grid,
            correlation,
            sim,
            mc,
            out,
        } => {
            let mut csv = Csv::new("mrc");
            let (tr, link) = model.resolve(cfg, &mut csv.flags)?;
            csv.note_validation(&tr, &link);
            let thetas = grid.resolve(cfg, &mut csv.flags)?;
            let choice = pick(correlation, cfg.correlation, CorrelationChoice::Exact);
            let rho = match choice {
                CorrelationChoice::Exact => spatial_correlation(&tr, CorrelationForm::ExactRatio),
                CorrelationChoice::Linearized => spatial_correlation(&tr, CorrelationForm::Linearized),
                CorrelationChoice::Quadrature => spatial_correlation_quadrature(&tr, &link, &PcfQuadrature::default())?,
            };
            csv.flags.push(
                "correlation",
                match choice {
                    CorrelationChoice::Exact => "exact",
                    CorrelationChoice::Linearized => "linearized",
                    CorrelationChoice::Quadrature => "quadrature",
                },
            );
            csv.notes.push(format!("branch correlation {rho}"));
            let m = MomentSummary::analytic(&tr, &link);
            let bg = fit_bivariate(&m, rho)?;
            let sg = fit_shifted_gamma(&m)?;
            let spec = QuadratureSpec::default();
            let pr = link.pr();
            let mut curve = OutageCurve::new(thetas.clone());
            curve.push_model(OutageModel::MrcBivariate, |t| Ok(1.0 - mrc_success(&bg, t, pr, &spec)?))?;
            curve.push_model(OutageModel::MrcShiftedGamma, |t| {
                Ok(1.0 - mrc_success_shifted(&sg, rho, t, pr, &spec)?)
            })?;
            curve.push_model(
                OutageModel::MrcPpp,
                |t| Ok(1.0 - mrc_success_ppp(&tr, &link, t, &spec)?),
            )?;
            if sim.resolve(cfg, &mut csv.flags) {
                let settings = mc.resolve(cfg, &tr, &link, &mut csv.flags);
                let e = empirical_mrc(&tr, &link, &thetas, &settings)?;
                csv.notes
                    .push(format!("simulated branch correlation {}", e.correlation));
                curve.push_column(OutageModel::EmpiricalMrc, e.curve.columns[0].1.clone());
            }
            curve.write_csv(&mut csv.body)?;
            csv.emit(out.resolve(cfg))
        }
        Command::Simulate {
            model,
            mc,
            fading_shape,
            summary,
            out,
        } => {
            let mut csv = Csv::new("simulate");
            let (tr, link) = model.resolve(cfg, &mut csv.flags)?;
            csv.note_validation(&tr, &link);
            let settings = mc.resolve(cfg, &tr, &link, &mut csv.flags);
            let shape = pick(fading_shape, cfg.fading_shape, 1);
            csv.flags.push("fading-shape", shape);
            let ens = simulate_interference(&tr, &link, &settings, shape)?;
            let s = ens.summary();
            eprintln!(
                "mean {:e} +/- {:e}, variance {:e}, skewness {:.4} +/- {:.4}",
                s.mean, s.se_mean, s.variance, s.skewness, s.se_skewness
            );
            if let Some(path) = summary {
                let json = serde_json::to_string_pretty(&ens.summary_json()).expect("summary serializes");
                fs::write(&path, json).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
            }
            ens.write_csv(&mut csv.body)?;
            csv.emit(out.resolve(cfg))
        }
        Command::Reproduce {
            experiment,
            trials,
            seed,
            series,
            out_dir,
        } => {
            let exp = experiment.experiment();
            let mut flags = Flags::default();
            let trials = trials.or(cfg.trials).unwrap_or_else(|| exp.default_trials());
            let seed = pick(seed, cfg.seed, ReproduceOptions::default().seed);
            flags.push("trials", trials);
            flags.push("seed", seed);
            let spec = series.resolve(cfg, &mut flags)?;
            let dir = out_dir
                .or_else(|| cfg.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("reproduce-out"));
            let options = ReproduceOptions {
                trials: Some(trials),
                seed,
                series: spec,
            };
            let report = experiments::run(exp, &options)?;
            fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
            for table in &report.tables {
                let mut body = Vec::new();
                table.write_csv(&mut body)?;
                let header = format!("# headway {VERSION}\n# headway reproduce {exp} {}\n", flags.line());
                let path = dir.join(format!("{exp}_{}.csv", table.name));
                write_file(&path, [header.into_bytes(), body].concat())?;
            }
            let json = serde_json::to_string_pretty(&report.summary_json()).expect("summary serializes");
            write_file(&dir.join(format!("{exp}_summary.json")), json.into_bytes())?;
            for c in &report.checks {
                println!("{c}");
            }
            for n in &report.notes {
                println!("note: {n}");
            }
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            println!(
                "{exp}: {} of {} checks passed in {:.1} s; tables in {}",
                report.checks.len() - failed,
                report.checks.len(),
                report.seconds,
                dir.display()
            );
            Ok(())
        }
    }
}

fn simulation_settings(
    mc: &McArgs,
    cfg: &Config,
    traffic: &TrafficModel,
    link: &LinkConfig,
    flags: &mut Flags,
    source: MomentSource,
) -> McSettings {
    // the empirical moment source has already recorded its settings
    let mut scratch = Flags::default();
    let f = if source == MomentSource::Empirical {
        &mut scratch
    } else {
        flags
    };
    mc.resolve(cfg, traffic, link, f)
}

fn write_file(path: &Path, bytes: Vec<u8>) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}
