use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use cptkit::broadening::{phononic_component, BroadeningInputs, BroadeningReport};
use cptkit::constants::angular_to_hz;
use cptkit::cpt::{
    dephasing_upper_bound, estimate_dip_fwhm_hz, fit_cpt, linspace, sensitivity, simulate_cpt_spectrum,
    CptFitParams, CptFitReport, CptSpectrum, DephasingBound, FitParameter, SteadyStateMethod,
};
use cptkit::curvefit::{fit_model, fit_saturation, Curve1D, LineFitResult, LineModel};
use cptkit::scan::{read_population_csv, reduce_scans, write_population_csv, FrequencyLog, Reduction, ScanRecord};
use cptkit::thermal::{analyze, ThermalReport, ThermalSeries};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::plot::{xy_plot, Series, Style};
use crate::report::{create_parent, InputFile, Report};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    create_parent(path)?;
    let f = File::create(path).map_err(|e| CliError::Validation(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Validation(format!("cannot open {}: {e}", path.display())))
}

fn points(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    x.iter().copied().zip(y.iter().copied()).collect()
}

#[derive(Debug, Serialize)]
pub struct SimulationResult {
    pub params: CptFitParams,
    pub method: SteadyStateMethod,
    pub grid_points: usize,
    pub grid_half_width_hz: f64,
    pub output: String,
}

pub fn simulate_cpt(config: &RunConfig, out: &Path, plot: bool) -> Result<(), CliError> {
    let optical = config.optical()?;
    let params = config.simulation_params();
    let half = config
        .simulate
        .grid_half_width_hz
        .unwrap_or_else(|| 6.0 * estimate_dip_fwhm_hz(&params, &optical));
    let grid = linspace(-half, half, config.simulate.grid_points);
    let spectrum = simulate_cpt_spectrum(&params, &optical, &grid, config.method())?;
    write_population_csv(&spectrum, create(out)?)?;
    let result = SimulationResult {
        params,
        method: config.method(),
        grid_points: grid.len(),
        grid_half_width_hz: grid.last().copied().unwrap_or(0.0),
        output: out.display().to_string(),
    };
    Report::new("simulate-cpt", config, Vec::new(), result).write(&out.with_extension("json"))?;
    if plot {
        xy_plot(
            &out.with_extension("svg"),
            "Simulated CPT spectrum",
            "Δ_D (Hz)",
            "ρ₃₃",
            &[Series {
                label: "model",
                points: points(&spectrum.detunings_d, &spectrum.values),
                style: Style::Line,
            }],
        )?;
    }
    Ok(())
}

/// Fitted parameters in laboratory units alongside the raw report.
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub omega_c_2pi_mhz: f64,
    pub omega_c_uncertainty_2pi_mhz: f64,
    pub omega_d_2pi_mhz: f64,
    pub omega_d_uncertainty_2pi_mhz: f64,
    pub t_minus_ps: f64,
    pub t_minus_uncertainty_ps: f64,
    pub t_plus_ns: f64,
    pub t_plus_uncertainty_ns: f64,
    pub dephasing_bound_ps: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitCptResult {
    pub summary: FitSummary,
    pub report: CptFitReport,
    pub dephasing_bound: DephasingBound,
}

pub fn run_fit(config: &RunConfig, spectrum: &CptSpectrum) -> Result<FitCptResult, CliError> {
    let optical = config.optical()?;
    let mut report = fit_cpt(spectrum, &optical, &config.fit_guess(), &config.fit_settings())?;
    report.uncertainties = sensitivity(&report, config.fit.sensitivity_fraction)?;
    let bound = dephasing_upper_bound(&report, config.fit.visibility_drop)?;
    let unc = |p: FitParameter| {
        report
            .uncertainties
            .iter()
            .find(|s| s.parameter == p)
            .expect("sensitivity covers every parameter")
    };
    let t_minus_unc = unc(FitParameter::GammaMinus).reciprocal_uncertainty();
    let summary = FitSummary {
        omega_c_2pi_mhz: angular_to_hz(report.params.omega_c) / 1e6,
        omega_c_uncertainty_2pi_mhz: angular_to_hz(unc(FitParameter::OmegaC).uncertainty) / 1e6,
        omega_d_2pi_mhz: angular_to_hz(report.params.omega_d) / 1e6,
        omega_d_uncertainty_2pi_mhz: angular_to_hz(unc(FitParameter::OmegaD).uncertainty) / 1e6,
        t_minus_ps: report.t_minus * 1e12,
        t_minus_uncertainty_ps: t_minus_unc * 1e12,
        t_plus_ns: report.t_plus * 1e9,
        // T₊ is T₋ times a fixed Boltzmann factor.
        t_plus_uncertainty_ns: t_minus_unc * report.t_plus / report.t_minus * 1e9,
        dephasing_bound_ps: bound.time * 1e12,
    };
    Ok(FitCptResult {
        summary,
        report,
        dephasing_bound: bound,
    })
}

pub fn read_spectrum(path: &Path) -> Result<CptSpectrum, CliError> {
    read_population_csv(open(path)?).map_err(|e| CliError::from(e).context(path.display()))
}

fn fit_overlay(path: &Path, spectrum: &CptSpectrum, result: &FitCptResult) -> Result<(), CliError> {
    let x0 = spectrum.detunings_d[0];
    let x1 = spectrum.detunings_d[spectrum.len() - 1];
    let grid = linspace(x0, x1, 400);
    let model = result.report.model().spectrum(&grid)?;
    xy_plot(
        path,
        "CPT fit",
        "Δ_D (Hz)",
        "ρ₃₃",
        &[
            Series {
                label: "data",
                points: points(&spectrum.detunings_d, &spectrum.values),
                style: Style::Points,
            },
            Series {
                label: "fit",
                points: points(&grid, &model),
                style: Style::Line,
            },
        ],
    )
}

pub fn fit_cpt_file(config: &RunConfig, input: &Path, out: &Path, plot: bool) -> Result<FitCptResult, CliError> {
    let inputs = vec![InputFile::hash(input)?];
    let spectrum = read_spectrum(input)?;
    let result = run_fit(config, &spectrum)?;
    Report::new("fit-cpt", config, inputs, &result).write(out)?;
    if plot {
        fit_overlay(&out.with_extension("svg"), &spectrum, &result)?;
    }
    Ok(result)
}

pub fn reduce_files(
    config: &RunConfig,
    scans: &[PathBuf],
    log: &Path,
    out: &Path,
    plot: bool,
) -> Result<Reduction, CliError> {
    if scans.is_empty() {
        return Err(CliError::Validation("no scan files given".into()));
    }
    let mut inputs = Vec::new();
    let mut records = Vec::new();
    for path in scans {
        inputs.push(InputFile::hash(path)?);
        records.push(ScanRecord::from_reader(open(path)?).map_err(|e| CliError::from(e).context(path.display()))?);
    }
    inputs.push(InputFile::hash(log)?);
    let log_data = FrequencyLog::from_reader(open(log)?).map_err(|e| CliError::from(e).context(log.display()))?;
    let reduction = reduce_scans(&records, &log_data, &config.reduction())?;
    match &reduction.population {
        Some((population, _)) => write_population_csv(population, create(out)?)?,
        None => {
            let mut w = csv::Writer::from_writer(create(out)?);
            w.write_record(["detuning_hz", "counts_per_s", "n_contributing"])?;
            let s = &reduction.spectrum;
            for k in 0..s.bin_centers.len() {
                if let Some(c) = s.mean_counts[k] {
                    w.write_record([s.bin_centers[k].to_string(), c.to_string(), s.n_contributing[k].to_string()])?;
                }
            }
            w.flush()?;
        }
    }
    Report::new("reduce-scans", config, inputs, &reduction).write(&out.with_extension("json"))?;
    if plot {
        let (x, y): (Vec<f64>, Vec<f64>) = reduction.spectrum.populated().unzip();
        xy_plot(
            &out.with_extension("svg"),
            "Reduced spectrum",
            "detuning (Hz)",
            "counts/s",
            &[Series {
                label: "mean",
                points: points(&x, &y),
                style: Style::Points,
            }],
        )?;
    }
    Ok(reduction)
}

pub fn thermal_model(config: &RunConfig, input: &Path, out: &Path, plot: bool) -> Result<ThermalReport, CliError> {
    let inputs = vec![InputFile::hash(input)?];
    let series = ThermalSeries::from_csv_reader(open(input)?).map_err(|e| CliError::from(e).context(input.display()))?;
    let report = analyze(&series, config.thermal.n_fit_points)?;
    Report::new("thermal-model", config, inputs, &report).write(out)?;
    if plot {
        let t0 = series.temperatures[0];
        let t1 = series.temperatures[series.len() - 1];
        let grid = linspace(t0, t1, 200);
        let mut all = vec![Series {
            label: "data",
            points: points(&series.temperatures, &series.linewidths),
            style: Style::Points,
        }];
        for fit in &report.fits {
            all.push(Series {
                label: fit.model.name(),
                points: grid.iter().map(|&t| (t, fit.evaluate(t))).collect(),
                style: Style::Line,
            });
        }
        xy_plot(&out.with_extension("svg"), "Linewidth vs temperature", "T (K)", "linewidth (Hz)", &all)?;
    }
    Ok(report)
}

pub fn d_broadening(config: &RunConfig, input: &Path, out: &Path) -> Result<BroadeningReport, CliError> {
    let inputs = vec![InputFile::hash(input)?];
    let parsed: BroadeningInputs = serde_json::from_reader(open(input)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", input.display())))?;
    let report = phononic_component(&parsed)?;
    Report::new("d-broadening", config, inputs, &report).write(out)?;
    Ok(report)
}

/// Reads `x,y[,y_err]` with a header row.
pub fn read_curve(path: &Path) -> Result<Curve1D, CliError> {
    let bad = |m: String| CliError::Validation(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let (mut x, mut y, mut err) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("row {}: '{s}' is not a number", line + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        match values.as_slice() {
            [a, b] => {
                x.push(*a);
                y.push(*b);
            }
            [a, b, e] => {
                x.push(*a);
                y.push(*b);
                err.push(*e);
            }
            _ => return Err(bad(format!("row {}: expected 2 or 3 columns", line + 1))),
        }
    }
    if !err.is_empty() && err.len() != x.len() {
        return Err(bad("y_err must be given on every row or none".into()));
    }
    Curve1D::new(x, y, (!err.is_empty()).then_some(err)).map_err(|e| bad(e.to_string()))
}

pub fn fit_line(config: &RunConfig, input: &Path, model: LineModel, out: &Path, plot: bool) -> Result<LineFitResult, CliError> {
    let inputs = vec![InputFile::hash(input)?];
    let mut data = read_curve(input)?;
    if !config.fit_line.use_errors {
        data = data.unweighted();
    }
    let result = match model {
        LineModel::Saturation => fit_saturation(&data, config.fit_line.saturation_background)?,
        m => fit_model(m, &data)?,
    };
    Report::new("fit-line", config, inputs, &result).write(out)?;
    if plot {
        let grid = linspace(data.x[0], data.x[data.len() - 1], 400);
        xy_plot(
            &out.with_extension("svg"),
            &format!("{} fit", model.name()),
            "x",
            "y",
            &[
                Series {
                    label: "data",
                    points: points(&data.x, &data.y),
                    style: Style::Points,
                },
                Series {
                    label: "fit",
                    points: grid.iter().map(|&v| (v, result.evaluate(v))).collect(),
                    style: Style::Line,
                },
            ],
        )?;
    }
    Ok(result)
}
