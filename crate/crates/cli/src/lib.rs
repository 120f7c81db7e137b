//! Command-line front end: argument parsing and subcommand dispatch.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use dualtherm::crossval::{
    channel_regression, expected_channel_slope, monitor_tumbling, ArtifactConfig,
};
use dualtherm::io::{
    format_g9, load_config, read_records_csv, read_trace_csv, write_precision, write_records,
    write_trace, Format,
};
use dualtherm::peakfit::{fit_odmr_dips, fit_pl_peak, select_dip_count, FitResult};
use dualtherm::scenarios::{run, simulate_spectra, ScenarioConfig, ScenarioKind, ScenarioOutput};
use dualtherm::spectral::{AxisKind, NvCalibration, SivCalibration};
use dualtherm::thermometry::{
    nv_shot_noise_sensitivity, temperature_from_odmr, temperature_from_zpl, Channel,
    TemperatureEstimate,
};
use dualtherm::Error;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (bad flags, missing subcommand or argument)
  3  configuration error (schema or validation; the message names the key)
  4  I/O or runtime error";

#[derive(Debug, Parser, PartialEq)]
#[command(name = "dualtherm", version, about = "Dual-channel diamond thermometry simulator and estimator", after_help = EXIT_CODES)]
pub struct CliCommand {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SpectrumChannel {
    Odmr,
    Pl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DipCount {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Auto,
}

#[derive(Debug, Subcommand, PartialEq)]
pub enum Command {
    /// Generate one seeded spectrum as a trace file.
    Simulate {
        #[arg(long, value_enum, default_value_t = SpectrumChannel::Odmr)]
        channel: SpectrumChannel,
        #[arg(long, default_value_t = 25.0)]
        temperature_c: f64,
        /// Static field projection on the NV axis, mT.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        b_mt: f64,
    },
    /// Fit a trace file and convert it to a temperature.
    Fit {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// ODMR dips to fit; `auto` selects by BIC.
        #[arg(long, value_enum, default_value_t = DipCount::One)]
        dips: DipCount,
        /// PL fit window `lo,hi` in nm; defaults to the config window.
        #[arg(
            long,
            value_delimiter = ',',
            value_name = "LO,HI",
            allow_negative_numbers = true
        )]
        window: Option<Vec<f64>>,
    },
    /// Run the scenario named by `--config`.
    Scenario,
    /// Shot-noise-limited NV sensitivity Δω / (C·√R·|dD/dT|) in K/√Hz.
    Sensitivity {
        #[arg(long)]
        contrast: f64,
        #[arg(long)]
        fwhm_mhz: f64,
        /// Photon count rate, counts/s.
        #[arg(long)]
        rate_cps: f64,
        #[arg(long, default_value_t = 0.07379)]
        slope_mhz_per_k: f64,
    },
    /// Cross-check the two channels of a record CSV.
    Crossval {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
    },
}

/// Parse `argv` (including the program name).
pub fn parse_args<I, S>(argv: I) -> Result<CliCommand, clap::Error>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    CliCommand::try_parse_from(argv)
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const RUNTIME: i32 = 4;

    fn usage(message: impl Into<String>) -> Self {
        let usage = CliCommand::command().render_usage();
        CliError {
            code: Self::USAGE,
            message: format!("{}\n\n{usage}", message.into()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config { .. } => Self::CONFIG,
            _ => Self::RUNTIME,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

impl CliCommand {
    fn load(&self, required: bool) -> Result<Option<ScenarioConfig>, CliError> {
        let config = match &self.config {
            Some(path) => Some(load_config(path)?),
            None if required => {
                return Err(CliError::usage("this subcommand needs --config <PATH>"))
            }
            None => None,
        };
        Ok(config.map(|mut c| {
            if let Some(seed) = self.seed {
                c.seed = seed;
            }
            c
        }))
    }

    fn load_or_default(&self) -> Result<ScenarioConfig, CliError> {
        Ok(self.load(false)?.unwrap_or_else(|| {
            let mut c = ScenarioConfig::with_kind(ScenarioKind::Ramp);
            c.seed = self.seed.unwrap_or(c.seed);
            c
        }))
    }

    fn emit(
        &self,
        write: impl FnOnce(&mut Vec<u8>) -> dualtherm::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        match &self.out {
            Some(path) => fs::write(path, buf).map_err(|e| CliError {
                code: CliError::RUNTIME,
                message: format!("{}: {e}", path.display()),
            }),
            None => Ok(io::stdout().write_all(&buf)?),
        }
    }
}

fn number(v: f64) -> Value {
    if v.is_finite() {
        format_g9(v)
            .parse::<f64>()
            .map(Value::from)
            .unwrap_or(Value::Null)
    } else {
        Value::Null
    }
}

fn table(format: Format, columns: &[&str], rows: &[Vec<Value>]) -> String {
    match format {
        Format::Json => {
            let objects: Vec<Value> = rows
                .iter()
                .map(|r| {
                    Value::Object(
                        columns
                            .iter()
                            .map(|c| c.to_string())
                            .zip(r.iter().cloned())
                            .collect(),
                    )
                })
                .collect();
            serde_json::to_string_pretty(&objects).expect("json") + "\n"
        }
        Format::Csv => {
            let mut s = columns.join(",") + "\n";
            for r in rows {
                let cells: Vec<String> = r
                    .iter()
                    .map(|v| match v {
                        Value::Number(n) => format_g9(n.as_f64().unwrap_or(f64::NAN)),
                        Value::Null => "NaN".into(),
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                s += &(cells.join(",") + "\n");
            }
            s
        }
    }
}

fn fit_rows(fit: &FitResult<f64>, estimate: Option<TemperatureEstimate<f64>>) -> Vec<Vec<Value>> {
    let mut rows: Vec<Vec<Value>> = fit
        .names
        .iter()
        .zip(fit.params.iter().zip(&fit.std_errors))
        .map(|(n, (&v, &e))| vec![json!(n), number(v), number(e)])
        .collect();
    for d in &fit.derived {
        rows.push(vec![json!(d.name), number(d.value), number(d.std_error)]);
    }
    let (t, s) = estimate.map_or((f64::NAN, f64::NAN), |e| (e.value, e.sigma));
    rows.push(vec![json!("temperature_C"), number(t), number(s)]);
    rows.push(vec![
        json!("reduced_chi2"),
        number(fit.reduced_chi2),
        Value::Null,
    ]);
    rows.push(vec![
        json!("converged"),
        json!(u8::from(fit.converged)),
        Value::Null,
    ]);
    rows
}

/// Execute a parsed command.
pub fn run_command(cmd: &CliCommand) -> Result<(), CliError> {
    let format = Format::from(cmd.format);
    match &cmd.command {
        Command::Simulate {
            channel,
            temperature_c,
            b_mt,
        } => {
            let config = cmd.load_or_default()?;
            let spectra = simulate_spectra(&config, *temperature_c, *b_mt)?;
            let trace = match channel {
                SpectrumChannel::Odmr => spectra.odmr,
                SpectrumChannel::Pl => spectra.pl,
            };
            cmd.emit(|buf| write_trace(&trace, buf, format))
        }
        Command::Fit {
            input,
            dips,
            window,
        } => {
            let config = cmd.load_or_default()?;
            let trace = read_trace_csv(
                File::open(input).map_err(|e| Error::Io(format!("{}: {e}", input.display())))?,
            )?;
            let (fit, estimate) = match trace.axis_kind {
                AxisKind::FrequencyMhz => {
                    let fit = match dips {
                        DipCount::One => fit_odmr_dips(&trace, 1)?,
                        DipCount::Two => fit_odmr_dips(&trace, 2)?,
                        DipCount::Auto => select_dip_count(&trace)?.1,
                    };
                    let est =
                        temperature_from_odmr(&fit, &config.calibration.nv, trace.timestamp_s).ok();
                    (fit, est)
                }
                AxisKind::WavelengthNm => {
                    let [lo, hi] = match window.as_deref() {
                        Some(&[lo, hi]) => [lo, hi],
                        Some(_) => {
                            return Err(CliError::usage("--window takes exactly two values: LO,HI"))
                        }
                        None => config.pl.window_nm,
                    };
                    let fit = fit_pl_peak(&trace, (lo, hi))?;
                    let est =
                        temperature_from_zpl(&fit, &config.calibration.siv, trace.timestamp_s).ok();
                    (fit, est)
                }
            };
            let text = table(
                format,
                &["name", "value", "std_error"],
                &fit_rows(&fit, estimate),
            );
            cmd.emit(|buf| {
                buf.extend_from_slice(text.as_bytes());
                Ok(())
            })
        }
        Command::Scenario => {
            let config = cmd.load(true)?.expect("required");
            match run(&config)? {
                ScenarioOutput::Records(records) => {
                    cmd.emit(|buf| write_records(&records, buf, format))
                }
                ScenarioOutput::Precision(sweep) => {
                    for (name, floor) in [("nv", &sweep.nv_floor), ("siv", &sweep.siv_floor)] {
                        if let Some(f) = floor {
                            eprintln!(
                                "{name}: noise floor {} K/√Hz, exponent {} ± {}",
                                format_g9(f.noise_floor),
                                format_g9(f.exponent),
                                format_g9(f.exponent_std_error)
                            );
                        }
                    }
                    cmd.emit(|buf| write_precision(&sweep, buf, format))
                }
            }
        }
        Command::Sensitivity {
            contrast,
            fwhm_mhz,
            rate_cps,
            slope_mhz_per_k,
        } => {
            let eta =
                nv_shot_noise_sensitivity(*contrast, *fwhm_mhz, *rate_cps, slope_mhz_per_k.abs())?;
            let text = table(format, &["sensitivity_K_per_rtHz"], &[vec![number(eta)]]);
            cmd.emit(|buf| {
                buf.extend_from_slice(text.as_bytes());
                Ok(())
            })
        }
        Command::Crossval { input } => {
            let config = cmd.load(false)?;
            let (nv_cal, siv_cal, artifact) = match &config {
                Some(c) => (c.calibration.nv, c.calibration.siv, c.artifact),
                None => (
                    NvCalibration::default(),
                    SivCalibration::default(),
                    ArtifactConfig::default(),
                ),
            };
            let records = read_records_csv(
                File::open(input).map_err(|e| Error::Io(format!("{}: {e}", input.display())))?,
            )?;
            crossval_report(&records, &nv_cal, &siv_cal, &artifact, format).and_then(|text| {
                cmd.emit(|buf| {
                    buf.extend_from_slice(text.as_bytes());
                    Ok(())
                })
            })
        }
    }
}

fn crossval_report(
    records: &[dualtherm::scenarios::ScenarioRecord],
    nv_cal: &NvCalibration<f64>,
    siv_cal: &SivCalibration<f64>,
    artifact: &ArtifactConfig<f64>,
    format: Format,
) -> Result<String, CliError> {
    let (f, l): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.nv_f0_mhz.is_finite() && r.siv_pos_nm.is_finite())
        .map(|r| (r.nv_f0_mhz, r.siv_pos_nm))
        .unzip();
    match channel_regression(&f, &l, expected_channel_slope(nv_cal, siv_cal)) {
        Ok(rep) => eprintln!(
            "channel regression: slope {} nm/MHz (expected {}), r² {}, slope z {}",
            format_g9(rep.regression.slope),
            format_g9(rep.expected_slope),
            format_g9(rep.regression.r_squared),
            format_g9(rep.slope_z)
        ),
        Err(e) => eprintln!("channel regression unavailable: {e}"),
    }
    let pairs: Vec<_> = records
        .iter()
        .map(|r| {
            (
                TemperatureEstimate {
                    value: r.t_nv_c,
                    sigma: r.t_nv_sigma_c,
                    channel: Channel::NvOdmr,
                    timestamp_s: r.time_s,
                },
                TemperatureEstimate {
                    value: r.t_siv_c,
                    sigma: r.t_siv_sigma_c,
                    channel: Channel::SivZpl,
                    timestamp_s: r.time_s,
                },
            )
        })
        .collect();
    let rows: Vec<Vec<Value>> = monitor_tumbling(&pairs, artifact)
        .iter()
        .map(|v| {
            vec![
                number(v.window_start_s),
                number(v.window_end_s),
                number(v.variance_ratio),
                number(v.max_abs_z),
                json!(u8::from(v.flagged)),
                json!(v.reason.as_str()),
            ]
        })
        .collect();
    if rows.is_empty() {
        return Err(
            Error::InvalidInput("too few records for a single artifact window".into()).into(),
        );
    }
    Ok(table(
        format,
        &[
            "window_start_s",
            "window_end_s",
            "variance_ratio",
            "max_abs_z",
            "flagged",
            "reason",
        ],
        &rows,
    ))
}

/// Exit code for a clap parse failure: 0 for help/version, 2 otherwise.
pub fn parse_exit_code(e: &clap::Error) -> i32 {
    if e.use_stderr() {
        CliError::USAGE
    } else {
        0
    }
}
