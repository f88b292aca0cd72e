//! `rosesim`: pulse design, ensemble simulation, efficiency models, fits and
//! orientation maps from the command line.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod range;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rose_core::anchors::{render_report, run_anchors};
use rose_core::bloch::inversion_profile;
use rose_core::chs::{design_pulse, PulseDescriptor, WavevectorTag};
use rose_core::fitting::{
    fit_exponential_decay, fit_isd_quadratic, fit_scrambler_linear, read_dataset_csv, IsdNuisance, ModelKind,
};
use rose_core::isd::estimate_isd;
use rose_core::material::MaterialParams;
use rose_core::perf_map::{performance_map, AngleScan, KappaCalibration};
use rose_core::rose::{min_timing, pulse_capacity, write_rose_csv, Eta0, RoseScenario};
use rose_core::sequence::{Pulse, SequenceConfig};
use rose_core::units::{to_us, AngularFrequency, IsdCoefficient};
use rose_core::Tolerance;

use config::{config_err, read_text, resolve, write_file, write_manifest, CliError, CliResult};

const THREADS_ENV: &str = "ROSESIM_THREADS";

#[derive(Parser)]
#[command(name = "rosesim", version, about = "Chirped-pulse photon-echo memory toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON file whose keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; a `<out>.manifest.json` is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Design a CHS pulse for a bandwidth and Rabi frequency.
    Pulse {
        #[arg(long, default_value_t = 800.0)]
        bandwidth_khz: f64,
        #[arg(long, default_value_t = 800.0)]
        rabi_khz: f64,
        #[arg(long, default_value_t = 0.0)]
        center_khz: f64,
        /// Detunings in the inversion profile written to --out.
        #[arg(long, default_value_t = 241)]
        profile_points: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Integrate an ion ensemble through a pulse sequence.
    Simulate {
        #[arg(long, default_value_t = 2001)]
        n_ions: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Report the raw field instead of the phase-cycled one.
        #[arg(long)]
        raw: bool,
        #[arg(long, default_value_t = 1e-9)]
        rtol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Three-pulse scheme efficiency models.
    Rose {
        #[command(subcommand)]
        action: RoseAction,
    },
    /// Instantaneous spectral diffusion estimates.
    Isd {
        #[command(subcommand)]
        action: IsdAction,
    },
    /// Fit a dataset: `decay` (t23_us,eta), `scrambler` (b_khz,inv_t2_per_s), `isd` (b_khz,eta).
    Fit {
        model: String,
        csv: PathBuf,
        #[arg(long, default_value_t = 0.34)]
        eta0: f64,
        #[arg(long, default_value_t = 138.0)]
        t2_ref_us: f64,
        #[arg(long, default_value_t = 800.0)]
        b_ref_khz: f64,
        #[arg(long, default_value_t = 800.0)]
        rabi_khz: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Efficiency and time-bandwidth maps over field angle and bandwidth.
    Map {
        #[arg(long)]
        material: Option<PathBuf>,
        #[arg(long, default_value = "0:180:1")]
        angles: String,
        /// Range or list; bare numbers are MHz.
        #[arg(long, default_value = "0.5:10:0.1MHz")]
        bandwidths: String,
        #[arg(long, default_value_t = 0.34)]
        eta0: f64,
        #[arg(long, default_value_t = 800.0)]
        rabi_khz: f64,
        #[arg(long, default_value_t = 135.0)]
        theta_cal_deg: f64,
        #[arg(long, default_value_t = 0.8)]
        kappa_total_cal: f64,
        #[arg(long, default_value_t = 0.33)]
        kappa_mag_cal: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Re-run the reference anchors.
    Reproduce {
        #[command(subcommand)]
        target: ReproduceTarget,
    },
}

#[derive(Subcommand)]
enum RoseAction {
    /// One CSV row per (bandwidth, storage time).
    Eval {
        /// Measured zero-delay efficiency; ignored when --alpha-l is given.
        #[arg(long, default_value_t = 0.34)]
        eta0: f64,
        #[arg(long)]
        alpha_l: Option<f64>,
        #[arg(long, default_value_t = 800.0)]
        rabi_khz: f64,
        #[arg(long, default_value_t = 138.0)]
        t2_us: f64,
        /// Range or list; bare numbers are kHz.
        #[arg(long, default_value = "800")]
        bandwidths: String,
        /// Comma list of storage times; empty means the minimum per bandwidth.
        #[arg(long, default_value = "")]
        t23_us: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum IsdAction {
    /// Magnetic, electric and total κ at one field angle.
    Estimate {
        #[arg(long)]
        material: Option<PathBuf>,
        #[arg(long, default_value_t = 135.0)]
        theta_deg: f64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum ReproduceTarget {
    /// Published-value anchors as a pass/fail table.
    Paper {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the anchors as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = configure_threads().and_then(|_| run(cli.command));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| config_err(THREADS_ENV, format!("expected a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Numeric(e.to_string()))
}

fn run(cmd: Command) -> CliResult<u8> {
    match cmd {
        Command::Pulse {
            bandwidth_khz,
            rabi_khz,
            center_khz,
            profile_points,
            common,
        } => cmd_pulse(
            PulseParams {
                bandwidth_khz,
                rabi_khz,
                center_khz,
                profile_points,
            },
            &common,
        ),
        Command::Simulate {
            n_ions,
            seed,
            raw,
            rtol,
            common,
        } => {
            let mut flags = SequenceConfig::rose_default(n_ions, seed);
            flags.phase_cycle = !raw;
            flags.rtol = rtol;
            cmd_simulate(flags, &common)
        }
        Command::Rose {
            action:
                RoseAction::Eval {
                    eta0,
                    alpha_l,
                    rabi_khz,
                    t2_us,
                    bandwidths,
                    t23_us,
                    common,
                },
        } => {
            let bandwidths_khz = range::parse_frequencies(&bandwidths, 1e3, 1e3).map_err(|e| config_err("--bandwidths", e))?;
            let t23 = if t23_us.trim().is_empty() {
                Vec::new()
            } else {
                t23_us
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| config_err("--t23-us", format!("'{s}' is not a number"))))
                    .collect::<CliResult<_>>()?
            };
            let scenario = RoseScenario {
                eta0: match alpha_l {
                    Some(alpha_l) => Eta0::Computed { alpha_l },
                    None => Eta0::Measured { eta0 },
                },
                rabi_khz,
                t2_us,
                bandwidths_khz,
                t23_us: t23,
            };
            cmd_rose_eval(scenario, &common)
        }
        Command::Isd {
            action: IsdAction::Estimate { material, theta_deg, common },
        } => cmd_isd_estimate(IsdParams { material, theta_deg }, &common),
        Command::Fit {
            model,
            csv,
            eta0,
            t2_ref_us,
            b_ref_khz,
            rabi_khz,
            common,
        } => cmd_fit(
            FitParams {
                model,
                csv,
                eta0,
                t2_ref_us,
                b_ref_khz,
                rabi_khz,
            },
            &common,
        ),
        Command::Map {
            material,
            angles,
            bandwidths,
            eta0,
            rabi_khz,
            theta_cal_deg,
            kappa_total_cal,
            kappa_mag_cal,
            common,
        } => cmd_map(
            MapParams {
                material,
                angles,
                bandwidths,
                eta0,
                rabi_khz,
                theta_cal_deg,
                kappa_total_cal,
                kappa_mag_cal,
            },
            &common,
        ),
        Command::Reproduce {
            target: ReproduceTarget::Paper { out, json },
        } => cmd_reproduce(out.as_deref(), json.as_deref()),
    }
}

fn print_json<T: Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Numeric(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Print a JSON document, and with --out also write it plus a manifest.
fn emit_json<C: Serialize, T: Serialize>(command: &str, cfg: &C, doc: &T, out: Option<&Path>) -> CliResult<()> {
    let text = print_json(doc)?;
    print!("{text}");
    if let Some(out) = out {
        write_file(out, text.as_bytes())?;
        write_manifest(command, cfg, &[out])?;
    }
    Ok(())
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Numeric(format!("cannot create {}: {e}", path.display())))
}

fn require_out<'a>(common: &'a Common, command: &str) -> CliResult<&'a Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| config_err("--out", format!("`{command}` writes a CSV and needs an output path")))
}

fn load_material(path: Option<&Path>) -> CliResult<MaterialParams> {
    match path {
        None => Ok(MaterialParams::er_yso()),
        Some(p) => {
            let text = read_text(p, "--material")?;
            MaterialParams::from_json_str(&text).map_err(|e| config_err("--material", format!("{}: {e}", p.display())))
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PulseParams {
    bandwidth_khz: f64,
    rabi_khz: f64,
    center_khz: f64,
    profile_points: usize,
}

#[derive(Serialize)]
struct PulseSummary {
    bandwidth_khz: f64,
    rabi_khz: f64,
    mu: f64,
    beta_khz: f64,
    t12_min_us: f64,
    t23_min_us: f64,
    adiabaticity_ratio: f64,
    protocol_valid: bool,
    capacity: f64,
    descriptor: PulseDescriptor,
}

fn cmd_pulse(flags: PulseParams, common: &Common) -> CliResult<u8> {
    let p = resolve(&flags, common.config.as_deref())?;
    let bw = AngularFrequency::from_khz(p.bandwidth_khz);
    let rabi = AngularFrequency::from_khz(p.rabi_khz);
    let pulse = design_pulse(bw, rabi, AngularFrequency::from_khz(p.center_khz), 0.0, WavevectorTag::Rephase)?;
    let timing = min_timing(pulse.rate)?;
    let summary = PulseSummary {
        bandwidth_khz: p.bandwidth_khz,
        rabi_khz: p.rabi_khz,
        mu: pulse.chirp_factor,
        beta_khz: pulse.rate.khz(),
        t12_min_us: to_us(timing.t12),
        t23_min_us: to_us(timing.t23),
        adiabaticity_ratio: pulse.adiabaticity_ratio()?,
        protocol_valid: pulse.is_protocol_valid(),
        capacity: pulse_capacity(bw, rabi),
        descriptor: pulse.to_descriptor(),
    };
    print!("{}", print_json(&summary)?);
    if let Some(out) = common.out.as_deref() {
        if p.profile_points < 2 {
            return Err(config_err("profile_points", "must be ≥ 2"));
        }
        // detunings over ±3B around the pulse centre
        let half = 3.0 * bw.rad_per_s();
        let n = p.profile_points;
        let dets: Vec<f64> = (0..n)
            .map(|k| pulse.omega0.rad_per_s() - half + 2.0 * half * k as f64 / (n - 1) as f64)
            .collect();
        let w = inversion_profile(&pulse, &dets, &Tolerance::default())?;
        let mut csv = String::from("detuning_khz,w,w_closed_form\n");
        for (d, w) in dets.iter().zip(&w) {
            csv.push_str(&format!(
                "{:.6},{:.9},{:.9}\n",
                AngularFrequency(*d).khz(),
                w,
                pulse.analytic_inversion(*d)
            ));
        }
        write_file(out, csv.as_bytes())?;
        write_manifest("pulse", &p, &[out])?;
    }
    Ok(0)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct IntervalPeak {
    from_us: f64,
    to_us: f64,
    peak_t_us: f64,
    peak_abs_field: f64,
}

#[derive(Serialize)]
struct SimulateSummary {
    n_ions: usize,
    samples: usize,
    phase_cycle: bool,
    /// Largest |field| between consecutive pulses and after the last one.
    intervals: Vec<IntervalPeak>,
}

fn cmd_simulate(flags: SequenceConfig, common: &Common) -> CliResult<u8> {
    let cfg = resolve(&flags, common.config.as_deref())?;
    let out = require_out(common, "simulate")?;
    let (_, pulses, opts) = cfg.build()?;
    let result = cfg.run()?;
    let mut w = create(out)?;
    result.write_csv(&mut w)?;
    w.flush().map_err(|e| CliError::Numeric(e.to_string()))?;

    let mut sorted: Vec<Pulse> = pulses.clone();
    sorted.sort_by(|a, b| a.support().0.total_cmp(&b.support().0));
    let mut intervals = Vec::new();
    for (i, p) in sorted.iter().enumerate() {
        let from = p.support().1;
        let to = sorted.get(i + 1).map_or(opts.span.1, |q| q.support().0);
        if let Some((t, a)) = result.peak_in_window(from, to) {
            intervals.push(IntervalPeak {
                from_us: to_us(from),
                to_us: to_us(to),
                peak_t_us: to_us(t),
                peak_abs_field: a,
            });
        }
    }
    let summary = SimulateSummary {
        n_ions: cfg.ensemble.n_ions,
        samples: result.times.len(),
        phase_cycle: cfg.phase_cycle,
        intervals,
    };
    print!("{}", print_json(&summary)?);
    write_manifest("simulate", &cfg, &[out])?;
    Ok(0)
}

// ---------------------------------------------------------------------------

fn cmd_rose_eval(flags: RoseScenario, common: &Common) -> CliResult<u8> {
    let scenario = resolve(&flags, common.config.as_deref())?;
    let out = require_out(common, "rose eval")?;
    let rows = scenario.evaluate()?;
    let mut w = create(out)?;
    write_rose_csv(&rows, &mut w)?;
    w.flush().map_err(|e| CliError::Numeric(e.to_string()))?;
    write_manifest("rose eval", &scenario, &[out])?;
    if rows.iter().any(|r| r.below_minimum) {
        eprintln!("warning: some storage times are below the overlap-free minimum (below_minimum = true)");
    }
    println!("{} rows written to {}", rows.len(), out.display());
    Ok(0)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IsdParams {
    material: Option<PathBuf>,
    theta_deg: f64,
}

fn cmd_isd_estimate(flags: IsdParams, common: &Common) -> CliResult<u8> {
    let p = resolve(&flags, common.config.as_deref())?;
    let m = load_material(p.material.as_deref())?;
    if !(0.0..=180.0).contains(&p.theta_deg) {
        return Err(config_err("theta_deg", "must lie in [0, 180]"));
    }
    let est = estimate_isd(&m, p.theta_deg)?;
    emit_json("isd estimate", &p, &est, common.out.as_deref())?;
    Ok(0)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitParams {
    model: String,
    csv: PathBuf,
    eta0: f64,
    t2_ref_us: f64,
    b_ref_khz: f64,
    rabi_khz: f64,
}

fn cmd_fit(flags: FitParams, common: &Common) -> CliResult<u8> {
    let p = resolve(&flags, common.config.as_deref())?;
    let kind = ModelKind::parse(&p.model)?;
    let file = File::open(&p.csv).map_err(|e| config_err("csv", format!("cannot open {}: {e}", p.csv.display())))?;
    let points = read_dataset_csv(kind, io::BufReader::new(file))?;
    let fit = match kind {
        ModelKind::Decay => fit_exponential_decay(&points)?,
        ModelKind::Scrambler => fit_scrambler_linear(&points)?,
        ModelKind::Isd => fit_isd_quadratic(
            &points,
            &IsdNuisance {
                eta0: p.eta0,
                t2_at_ref: p.t2_ref_us * 1e-6,
                b_ref: AngularFrequency::from_khz(p.b_ref_khz),
                rabi: AngularFrequency::from_khz(p.rabi_khz),
            },
        )?,
    };
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    emit_json("fit", &p, &fit, common.out.as_deref())?;
    Ok(0)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapParams {
    material: Option<PathBuf>,
    angles: String,
    bandwidths: String,
    eta0: f64,
    rabi_khz: f64,
    theta_cal_deg: f64,
    kappa_total_cal: f64,
    kappa_mag_cal: f64,
}

fn cmd_map(flags: MapParams, common: &Common) -> CliResult<u8> {
    let p = resolve(&flags, common.config.as_deref())?;
    let out = require_out(common, "map")?;
    let thetas = range::parse_angles(&p.angles).map_err(|e| config_err("angles", e))?;
    let bands: Vec<AngularFrequency> = range::parse_frequencies(&p.bandwidths, 1e6, 1e6)
        .map_err(|e| config_err("bandwidths", e))?
        .into_iter()
        .map(AngularFrequency::from_mhz)
        .collect();
    if !(p.eta0 > 0.0 && p.eta0 <= 1.0) {
        return Err(config_err("eta0", "must lie in (0, 1]"));
    }
    if !(p.rabi_khz > 0.0) {
        return Err(config_err("rabi_khz", "must be > 0"));
    }
    let m = load_material(p.material.as_deref())?;
    let cal = KappaCalibration {
        theta_cal_deg: p.theta_cal_deg,
        kappa_total_cal: IsdCoefficient::from_per_s_per_khz(p.kappa_total_cal),
        kappa_mag_cal: IsdCoefficient::from_per_s_per_khz(p.kappa_mag_cal),
    };
    let scan = AngleScan::from_material(&m, &thetas, &cal)?;
    let grid = performance_map(&scan, &bands, p.eta0, AngularFrequency::from_khz(p.rabi_khz))?;
    let mut w = create(out)?;
    grid.write_csv(&mut w)?;
    w.flush().map_err(|e| CliError::Numeric(e.to_string()))?;
    write_manifest("map", &p, &[out])?;
    println!("{} x {} grid written to {}", thetas.len(), bands.len(), out.display());
    Ok(0)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ReproduceConfig {
    target: &'static str,
}

fn cmd_reproduce(out: Option<&Path>, json: Option<&Path>) -> CliResult<u8> {
    let anchors = run_anchors()?;
    let report = render_report(&anchors);
    print!("{report}");
    let cfg = ReproduceConfig { target: "paper" };
    if let Some(out) = out {
        write_file(out, report.as_bytes())?;
        let mut outputs = vec![out];
        if let Some(j) = json {
            write_file(j, print_json(&anchors)?.as_bytes())?;
            outputs.push(j);
        }
        write_manifest("reproduce paper", &cfg, &outputs)?;
    } else if let Some(j) = json {
        write_file(j, print_json(&anchors)?.as_bytes())?;
        write_manifest("reproduce paper", &cfg, &[j])?;
    }
    let failed = anchors.iter().filter(|a| !a.pass).count();
    Ok(if failed == 0 { 0 } else { 1 })
}
