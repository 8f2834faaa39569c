//! Subcommand implementations.

use donorspin::clock::{find_all_cts, Quantity, ScanOptions};
use donorspin::decoherence::{fit_echo_decay, fit_t2_model, FitScope, T2FitOptions, T2Point};
use donorspin::export::{
    self, ct_rows, level_rows, read_decay_points, read_model_json, read_t2_points, write_ct_table,
    write_levels, write_spectrum, write_t2_rows, OutputFormat, T2Abscissa, T2EvalRow,
};
use donorspin::spectra::{field_sweep, LineShape, LinewidthModel};
use donorspin::transitions::all_transitions;
use donorspin::{build_operators, solve_at, sweep_levels, DecoherenceModel, SpinSystem};

use crate::config::{emit, RunConfig};
use crate::{CliError, SpectrumArgs, T2Args, T2Mode};

pub fn cmd_levels(config: &RunConfig) -> Result<(), CliError> {
    let ops = build_operators(&config.system)?;
    let sweep = sweep_levels(
        &config.system,
        &ops,
        config.range.0,
        config.range.1,
        config.grid,
    )?;
    let rows = level_rows(&sweep);
    emit(config, &write_levels(&rows, config.format))
}

pub fn cmd_find_ct(config: &RunConfig, quantity: Quantity) -> Result<(), CliError> {
    let ops = build_operators(&config.system)?;
    let opts = ScanOptions {
        n_grid: config.grid,
        ..ScanOptions::default()
    };
    let scan = find_all_cts(
        &config.system,
        &ops,
        config.range.0,
        config.range.1,
        quantity,
        &opts,
    )?;
    if scan.cts.is_empty() {
        eprintln!(
            "notice: no {quantity} clock transitions in [{}, {}] T",
            config.range.0, config.range.1
        );
    }
    for g in &scan.grazing {
        eprintln!(
            "notice: grazing |{}| = {:e} at B = {:e} T on {:?} (no sign change)",
            g.quantity, g.value, g.b, g.pair
        );
    }
    for (pair, why) in &scan.failures {
        eprintln!("warning: refinement failed on {pair:?}: {why}");
    }
    emit(config, &write_ct_table(&ct_rows(&scan), config.format))
}

pub fn cmd_spectrum(config: &RunConfig, args: &SpectrumArgs) -> Result<(), CliError> {
    let shape = match args.shape.to_ascii_lowercase().as_str() {
        "gaussian" => LineShape::Gaussian,
        "lorentzian" => LineShape::Lorentzian,
        other => return Err(CliError::config(format!("unknown lineshape '{other}'"))),
    };
    let model = if args.width_f0.is_none() && args.width_a.is_none() && args.width_b.is_none() {
        // measured-width preset when nothing is specified
        LinewidthModel {
            shape,
            ..LinewidthModel::si28()
        }
    } else {
        LinewidthModel::new(
            args.width_f0.unwrap_or(0.0),
            args.width_a.unwrap_or(0.0),
            args.width_b.unwrap_or(0.0),
            shape,
        )?
    };
    let ops = build_operators(&config.system)?;
    let spec = field_sweep(
        &config.system,
        &ops,
        args.fmw,
        config.range.0,
        config.range.1,
        args.points,
        &model,
    )?;
    if spec.components.is_empty() {
        eprintln!(
            "notice: no resonance of any transition with f_mw = {} GHz in [{}, {}] T",
            args.fmw, config.range.0, config.range.1
        );
    }
    emit(config, &write_spectrum(&spec, config.format))
}

/// Convert a field-valued data point to the normalized slope x using the
/// transition closest in frequency to the spectrometer frequency.
fn x_from_field(
    sys: &SpinSystem<f64>,
    ops: &donorspin::SpinOperators<f64>,
    b: f64,
    f_mw: f64,
) -> Result<f64, CliError> {
    let sol = solve_at(sys, ops, b)?;
    let trans = all_transitions(&sol, sys, ops);
    let nearest = trans
        .iter()
        .min_by(|a, b| {
            (a.f - f_mw)
                .abs()
                .partial_cmp(&(b.f - f_mw).abs())
                .unwrap()
        })
        .ok_or_else(|| CliError::config("no transitions at this field".into()))?;
    Ok((nearest.dfdb.abs() / sys.gamma_e).min(1.0))
}

pub fn cmd_t2(config: &RunConfig, args: &T2Args) -> Result<(), CliError> {
    match args.mode {
        T2Mode::Eval => {
            let mut model: DecoherenceModel<f64> = match &args.model {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| {
                        CliError::config(format!("cannot read {}: {e}", path.display()))
                    })?;
                    read_model_json(&text)?
                }
                None => DecoherenceModel::si_bi_example(args.conc.unwrap_or(3.6e14)),
            };
            if let Some(c) = args.conc {
                model = DecoherenceModel::new(model.k_dff, model.k_iff, model.k_id, c)?;
            }
            if args.x.is_empty() {
                return Err(CliError::config(
                    "eval mode needs at least one --x value".into(),
                ));
            }
            let mut rows = Vec::new();
            for &x in &args.x {
                rows.push(T2EvalRow {
                    x,
                    concentration_cm3: model.concentration,
                    t2_s: model.t2(x)?,
                });
            }
            emit(config, &write_t2_rows(&rows, config.format))
        }
        T2Mode::Fit => {
            let path = args
                .data
                .as_ref()
                .ok_or_else(|| CliError::config("fit mode needs --data".into()))?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            if is_decay_file(&text) {
                return fit_decay(config, &text);
            }
            let input = read_t2_points(&text)?;
            let ops = build_operators(&config.system)?;
            let mut points = Vec::with_capacity(input.len());
            for row in &input {
                let x = match row.abscissa {
                    T2Abscissa::X(x) => x,
                    T2Abscissa::FieldT(b) => {
                        let f_mw = args.fmw.ok_or_else(|| {
                            CliError::config(
                                "field-valued data needs --fmw to pick the measured transition"
                                    .into(),
                            )
                        })?;
                        x_from_field(&config.system, &ops, b, f_mw)?
                    }
                };
                points.push(T2Point {
                    x,
                    concentration: row.concentration_cm3,
                    t2: row.t2_s,
                });
            }
            let scope = if args.per_concentration {
                FitScope::PerConcentration
            } else {
                FitScope::Shared
            };
            let fit = fit_t2_model(&points, scope, T2FitOptions::default())?;
            for name in &fit.unidentifiable {
                eprintln!("warning: {name} channel is unidentifiable from this dataset");
            }
            eprintln!(
                "notice: rms log-residual {:e} over {} points",
                fit.residual_rms_log,
                points.len()
            );
            let text = match config.format {
                OutputFormat::Json => export::write_models_json(&fit.models),
                OutputFormat::Csv => {
                    let mut out =
                        String::from("k_dff_s1cm3,k_iff_s1cm3,k_id_s1cm3,concentration_cm3\n");
                    for m in &fit.models {
                        out.push_str(&format!(
                            "{:e},{:e},{:e},{:e}\n",
                            m.k_dff, m.k_iff, m.k_id, m.concentration
                        ));
                    }
                    out
                }
            };
            emit(config, &text)
        }
    }
}

fn is_decay_file(text: &str) -> bool {
    let head = text.trim_start();
    if head.starts_with('[') || head.starts_with('{') {
        return head.contains("tau_s");
    }
    head.lines()
        .next()
        .map(|h| h.to_ascii_lowercase().contains("tau_s"))
        .unwrap_or(false)
}

fn fit_decay(config: &RunConfig, text: &str) -> Result<(), CliError> {
    let rows = read_decay_points(text)?;
    let delays: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let amps: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let fit = fit_echo_decay(&delays, &amps)?;
    let text = match config.format {
        OutputFormat::Json => {
            export::write_decay_fit_json(&fit)
        }
        OutputFormat::Csv => format!(
            "t2_s,n,t2_err_s,n_err,amplitude,baseline\n{:e},{:e},{:e},{:e},{:e},{:e}\n",
            fit.t2, fit.n, fit.t2_err, fit.n_err, fit.amplitude, fit.baseline
        ),
    };
    emit(config, &text)
}
