//! Table export (CSV/JSON) and data ingestion for the file-facing surfaces:
//! level sweeps, transition tables, clock-transition tables, spectra,
//! decoherence data and models.
//!
//! CSV uses a header row, `.` decimal separator and shortest round-trip
//! float formatting in scientific notation; JSON uses stable struct key
//! order. Both are locale independent and byte deterministic.

use serde::{Deserialize, Serialize};

use crate::clock::CtScan;
use crate::decoherence::{DecoherenceModel, T2Point};
use crate::error::{Error, Result};
use crate::levels::{EigenSolution, LevelSweep};
use crate::real::Real;
use crate::spectra::Spectrum;
use crate::transitions::Transition;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Parse(format!("unknown format '{other}'"))),
        }
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelRow {
    pub b_t: f64,
    pub branch: usize,
    pub energy_ghz: f64,
    pub f: f64,
    pub m_f: f64,
    pub purity: f64,
}

pub fn level_rows<R: Real>(sweep: &LevelSweep<R>) -> Vec<LevelRow> {
    let mut rows = Vec::new();
    for (k, &b) in sweep.fields.iter().enumerate() {
        for branch in 0..sweep.branch_ids.len() {
            let label = sweep.labels[branch][k];
            rows.push(LevelRow {
                b_t: b.to_f64_lossy(),
                branch,
                energy_ghz: sweep.energies[branch][k].to_f64_lossy(),
                f: label.f.to_f64_lossy(),
                m_f: label.m_f.to_f64_lossy(),
                purity: label.purity.to_f64_lossy(),
            });
        }
    }
    rows
}

pub fn write_levels(rows: &[LevelRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => serde_json::to_string_pretty(rows).expect("serialize") + "\n",
        OutputFormat::Csv => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        fmt_f64(r.b_t),
                        r.branch.to_string(),
                        fmt_f64(r.energy_ghz),
                        fmt_f64(r.f),
                        fmt_f64(r.m_f),
                        fmt_f64(r.purity),
                    ]
                })
                .collect();
            csv_table(
                &["b_t", "branch", "energy_ghz", "f", "m_f", "purity"],
                &body,
            )
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionRow {
    pub b0_t: f64,
    pub i: usize,
    pub j: usize,
    pub f_ghz: f64,
    pub dfdb_ghz_per_t: f64,
    pub d2fdb2_ghz_per_t2: Option<f64>,
    pub dfda: f64,
    pub intensity: f64,
    pub kind: String,
    pub selection: String,
    pub weak: bool,
}

pub fn transition_rows<R: Real>(
    sol: &EigenSolution<R>,
    transitions: &[Transition<R>],
) -> Vec<TransitionRow> {
    transitions
        .iter()
        .map(|t| TransitionRow {
            b0_t: sol.b0.to_f64_lossy(),
            i: t.level_i,
            j: t.level_j,
            f_ghz: t.f.to_f64_lossy(),
            dfdb_ghz_per_t: t.dfdb.to_f64_lossy(),
            d2fdb2_ghz_per_t2: t.d2fdb2.map(|c| c.to_f64_lossy()),
            dfda: t.dfda.to_f64_lossy(),
            intensity: t.intensity.to_f64_lossy(),
            kind: t.kind.to_string(),
            selection: t.selection.to_string(),
            weak: t.weak,
        })
        .collect()
}

pub fn write_transitions(rows: &[TransitionRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => serde_json::to_string_pretty(rows).expect("serialize") + "\n",
        OutputFormat::Csv => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        fmt_f64(r.b0_t),
                        r.i.to_string(),
                        r.j.to_string(),
                        fmt_f64(r.f_ghz),
                        fmt_f64(r.dfdb_ghz_per_t),
                        r.d2fdb2_ghz_per_t2.map(fmt_f64).unwrap_or_default(),
                        fmt_f64(r.dfda),
                        fmt_f64(r.intensity),
                        r.kind.clone(),
                        r.selection.clone(),
                        r.weak.to_string(),
                    ]
                })
                .collect();
            csv_table(
                &[
                    "b0_t",
                    "i",
                    "j",
                    "f_ghz",
                    "dfdb_ghz_per_t",
                    "d2fdb2_ghz_per_t2",
                    "dfda",
                    "intensity",
                    "kind",
                    "selection",
                    "weak",
                ],
                &body,
            )
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CtRow {
    pub quantity: String,
    pub kind: String,
    pub b_star_t: f64,
    pub f_star_ghz: f64,
    pub curvature_ghz_per_t2: f64,
    pub level_i: usize,
    pub level_j: usize,
    pub selection: String,
}

pub fn ct_rows<R: Real>(scan: &CtScan<R>) -> Vec<CtRow> {
    scan.cts
        .iter()
        .map(|ct| CtRow {
            quantity: ct.quantity.to_string(),
            kind: ct.kind.to_string(),
            b_star_t: ct.b_star.to_f64_lossy(),
            f_star_ghz: ct.f_star.to_f64_lossy(),
            curvature_ghz_per_t2: ct.curvature.to_f64_lossy(),
            level_i: ct.level_i,
            level_j: ct.level_j,
            selection: ct.selection.to_string(),
        })
        .collect()
}

pub fn write_ct_table(rows: &[CtRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => serde_json::to_string_pretty(rows).expect("serialize") + "\n",
        OutputFormat::Csv => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.quantity.clone(),
                        r.kind.clone(),
                        fmt_f64(r.b_star_t),
                        fmt_f64(r.f_star_ghz),
                        fmt_f64(r.curvature_ghz_per_t2),
                        r.level_i.to_string(),
                        r.level_j.to_string(),
                        r.selection.clone(),
                    ]
                })
                .collect();
            csv_table(
                &[
                    "quantity",
                    "kind",
                    "b_star_t",
                    "f_star_ghz",
                    "curvature_ghz_per_t2",
                    "level_i",
                    "level_j",
                    "selection",
                ],
                &body,
            )
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct SpectrumJson {
    f_mw_ghz: f64,
    components: Vec<String>,
    rows: Vec<SpectrumJsonRow>,
}

#[derive(Debug, Clone, Serialize)]
struct SpectrumJsonRow {
    b_t: f64,
    amplitude: f64,
    component_amplitudes: Vec<f64>,
}

pub fn write_spectrum<R: Real>(spec: &Spectrum<R>, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let doc = SpectrumJson {
                f_mw_ghz: spec.f_mw.to_f64_lossy(),
                components: spec.components.iter().map(|c| c.label.clone()).collect(),
                rows: spec
                    .fields
                    .iter()
                    .enumerate()
                    .map(|(k, &b)| SpectrumJsonRow {
                        b_t: b.to_f64_lossy(),
                        amplitude: spec.amplitude[k].to_f64_lossy(),
                        component_amplitudes: spec
                            .components
                            .iter()
                            .map(|c| c.amplitude[k].to_f64_lossy())
                            .collect(),
                    })
                    .collect(),
            };
            serde_json::to_string_pretty(&doc).expect("serialize") + "\n"
        }
        OutputFormat::Csv => {
            let mut header: Vec<&str> = vec!["b_t", "amplitude"];
            for c in &spec.components {
                header.push(c.label.as_str());
            }
            let body: Vec<Vec<String>> = spec
                .fields
                .iter()
                .enumerate()
                .map(|(k, &b)| {
                    let mut row = vec![
                        fmt_f64(b.to_f64_lossy()),
                        fmt_f64(spec.amplitude[k].to_f64_lossy()),
                    ];
                    for c in &spec.components {
                        row.push(fmt_f64(c.amplitude[k].to_f64_lossy()));
                    }
                    row
                })
                .collect();
            csv_table(&header, &body)
        }
    }
}

/// T2 dataset row as it appears in files: either a precomputed normalized
/// slope `x` or a field value to be converted through the transitions
/// machinery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum T2Abscissa {
    X(f64),
    FieldT(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct T2InputRow {
    pub abscissa: T2Abscissa,
    pub concentration_cm3: f64,
    pub t2_s: f64,
}

/// Prediction/eval output row; re-ingestable as fit input (column `x`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct T2EvalRow {
    pub x: f64,
    pub concentration_cm3: f64,
    pub t2_s: f64,
}

pub fn write_t2_rows(rows: &[T2EvalRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => serde_json::to_string_pretty(rows).expect("serialize") + "\n",
        OutputFormat::Csv => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        fmt_f64(r.x),
                        fmt_f64(r.concentration_cm3),
                        fmt_f64(r.t2_s),
                    ]
                })
                .collect();
            csv_table(&["x", "concentration_cm3", "t2_s"], &body)
        }
    }
}

pub fn t2_points_from_rows(rows: &[T2EvalRow]) -> Vec<T2Point<f64>> {
    rows.iter()
        .map(|r| T2Point {
            x: r.x,
            concentration: r.concentration_cm3,
            t2: r.t2_s,
        })
        .collect()
}

fn parse_f64(cell: &str, what: &str) -> Result<f64> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad {what} value '{cell}'")))
}

fn looks_like_json(text: &str) -> bool {
    matches!(text.trim_start().chars().next(), Some('[') | Some('{'))
}

/// Read a T2 dataset. CSV needs a header with columns `x` or `b_t`, plus
/// `concentration_cm3` and `t2_s`; JSON is an array of objects with the
/// same keys.
pub fn read_t2_points(text: &str) -> Result<Vec<T2InputRow>> {
    if looks_like_json(text) {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let arr = value
            .as_array()
            .ok_or_else(|| Error::Parse("expected a JSON array of rows".into()))?;
        let mut out = Vec::new();
        for row in arr {
            let obj = row
                .as_object()
                .ok_or_else(|| Error::Parse("expected row objects".into()))?;
            let get = |key: &str| -> Result<f64> {
                obj.get(key)
                    .and_then(|v| v.as_f64())
                    .ok_or_else(|| Error::Parse(format!("missing numeric '{key}'")))
            };
            let abscissa = if obj.contains_key("x") {
                T2Abscissa::X(get("x")?)
            } else if obj.contains_key("b_t") {
                T2Abscissa::FieldT(get("b_t")?)
            } else {
                return Err(Error::Parse("rows need an 'x' or 'b_t' key".into()));
            };
            out.push(T2InputRow {
                abscissa,
                concentration_cm3: get("concentration_cm3")?,
                t2_s: get("t2_s")?,
            });
        }
        return Ok(out);
    }

    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty T2 data file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| cols.iter().position(|c| c.eq_ignore_ascii_case(name));
    let x_col = find("x");
    let b_col = find("b_t");
    let c_col = find("concentration_cm3")
        .ok_or_else(|| Error::Parse("missing 'concentration_cm3' column".into()))?;
    let t_col = find("t2_s").ok_or_else(|| Error::Parse("missing 't2_s' column".into()))?;
    if x_col.is_none() && b_col.is_none() {
        return Err(Error::Parse("need an 'x' or 'b_t' column".into()));
    }
    let mut out = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let need = |col: usize| -> Result<&str> {
            cells
                .get(col)
                .copied()
                .ok_or_else(|| Error::Parse(format!("short row '{line}'")))
        };
        let abscissa = if let Some(col) = x_col {
            T2Abscissa::X(parse_f64(need(col)?, "x")?)
        } else {
            T2Abscissa::FieldT(parse_f64(need(b_col.unwrap())?, "b_t")?)
        };
        out.push(T2InputRow {
            abscissa,
            concentration_cm3: parse_f64(need(c_col)?, "concentration")?,
            t2_s: parse_f64(need(t_col)?, "t2")?,
        });
    }
    Ok(out)
}

/// Read an echo decay dataset: columns `tau_s`, `amplitude` (CSV) or an
/// array of {tau_s, amplitude} objects (JSON). `tau_s` holds the 2τ delay.
pub fn read_decay_points(text: &str) -> Result<Vec<(f64, f64)>> {
    if looks_like_json(text) {
        #[derive(Deserialize)]
        struct Row {
            tau_s: f64,
            amplitude: f64,
        }
        let rows: Vec<Row> =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        return Ok(rows.into_iter().map(|r| (r.tau_s, r.amplitude)).collect());
    }
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty decay data file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let tau_col = cols
        .iter()
        .position(|c| c.eq_ignore_ascii_case("tau_s"))
        .ok_or_else(|| Error::Parse("missing 'tau_s' column".into()))?;
    let amp_col = cols
        .iter()
        .position(|c| c.eq_ignore_ascii_case("amplitude"))
        .ok_or_else(|| Error::Parse("missing 'amplitude' column".into()))?;
    let mut out = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let tau = parse_f64(
            cells
                .get(tau_col)
                .ok_or_else(|| Error::Parse(format!("short row '{line}'")))?,
            "tau",
        )?;
        let amp = parse_f64(
            cells
                .get(amp_col)
                .ok_or_else(|| Error::Parse(format!("short row '{line}'")))?,
            "amplitude",
        )?;
        out.push((tau, amp));
    }
    Ok(out)
}

pub fn write_model_json(model: &DecoherenceModel<f64>) -> String {
    serde_json::to_string_pretty(model).expect("serialize") + "\n"
}

pub fn write_models_json(models: &[DecoherenceModel<f64>]) -> String {
    serde_json::to_string_pretty(models).expect("serialize") + "\n"
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFitRow {
    pub t2_s: f64,
    pub n: f64,
    pub t2_err_s: f64,
    pub n_err: f64,
    pub amplitude: f64,
    pub baseline: f64,
}

pub fn write_decay_fit_json(fit: &crate::decoherence::DecayFit<f64>) -> String {
    let row = DecayFitRow {
        t2_s: fit.t2,
        n: fit.n,
        t2_err_s: fit.t2_err,
        n_err: fit.n_err,
        amplitude: fit.amplitude,
        baseline: fit.baseline,
    };
    serde_json::to_string_pretty(&row).expect("serialize") + "\n"
}

pub fn read_model_json(text: &str) -> Result<DecoherenceModel<f64>> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}
