//! Run configuration: TOML config file plus CLI flag overrides.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use donorspin::export::OutputFormat;
use donorspin::SpinSystem;

use crate::CliError;

/// Options shared by every subcommand. Flags override config-file values;
/// units are fixed (T, GHz, s, cm⁻³).
#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// TOML config file; CLI flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Named system preset (built in: "Si:Bi")
    #[arg(long)]
    pub system: Option<String>,

    /// Inline system: electron spin quantum number S
    #[arg(long = "spin-s", requires_all = ["spin_i", "gamma_e", "gamma_n", "hyperfine_a"])]
    pub spin_s: Option<f64>,

    /// Inline system: nuclear spin quantum number I
    #[arg(long = "spin-i")]
    pub spin_i: Option<f64>,

    /// Inline system: electron gyromagnetic ratio (GHz/T)
    #[arg(long = "gamma-e")]
    pub gamma_e: Option<f64>,

    /// Inline system: nuclear gyromagnetic ratio (GHz/T)
    #[arg(long = "gamma-n", allow_hyphen_values = true)]
    pub gamma_n: Option<f64>,

    /// Inline system: isotropic hyperfine constant (GHz)
    #[arg(long = "hyperfine-a")]
    pub hyperfine_a: Option<f64>,

    /// Field range in T: LO HI
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub range: Option<Vec<f64>>,

    /// Field grid points
    #[arg(long)]
    pub grid: Option<usize>,

    /// Output format: csv | json
    #[arg(long)]
    pub format: Option<String>,

    /// Output file (stdout when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Seed for stochastic fixtures (reserved; all commands here are
    /// deterministic)
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    system: Option<FileSystem>,
    scan: Option<FileScan>,
    output: Option<FileOutput>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileSystem {
    name: Option<String>,
    s: Option<f64>,
    i: Option<f64>,
    gamma_e: Option<f64>,
    gamma_n: Option<f64>,
    a: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileScan {
    range: Option<[f64; 2]>,
    grid: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileOutput {
    format: Option<String>,
    path: Option<String>,
    seed: Option<u64>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub system: SpinSystem<f64>,
    pub range: (f64, f64),
    pub grid: usize,
    pub format: OutputFormat,
    pub output: Option<PathBuf>,
    #[allow(dead_code)]
    pub seed: u64,
}

pub fn resolve(common: &CommonArgs, default_grid: usize) -> Result<RunConfig, CliError> {
    let file: FileConfig = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::config(format!("bad config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let fsys = file.system.unwrap_or_default();
    let fscan = file.scan.unwrap_or_default();
    let fout = file.output.unwrap_or_default();

    let inline = [
        common.spin_s.or(fsys.s),
        common.spin_i.or(fsys.i),
        common.gamma_e.or(fsys.gamma_e),
        common.gamma_n.or(fsys.gamma_n),
        common.hyperfine_a.or(fsys.a),
    ];
    let system = if inline.iter().any(Option::is_some) {
        let [s, i, ge, gn, a] = inline.map(|v| {
            v.ok_or_else(|| {
                CliError::config(
                    "inline systems need all of spin-s, spin-i, gamma-e, gamma-n, hyperfine-a"
                        .into(),
                )
            })
        });
        SpinSystem::new(s?, i?, ge?, gn?, a?).map_err(|e| CliError::config(e.to_string()))?
    } else {
        let name = common
            .system
            .clone()
            .or(fsys.name)
            .unwrap_or_else(|| "Si:Bi".into());
        SpinSystem::by_name(&name)
            .ok_or_else(|| CliError::config(format!("unknown system preset '{name}'")))?
    };

    let range = match (&common.range, fscan.range) {
        (Some(r), _) => (r[0], r[1]),
        (None, Some([lo, hi])) => (lo, hi),
        (None, None) => (0.0, 0.6),
    };
    // the negated comparison also rejects NaN bounds
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(range.0 <= range.1) || !range.0.is_finite() || !range.1.is_finite() {
        return Err(CliError::config(format!(
            "field range [{}, {}] is not ordered",
            range.0, range.1
        )));
    }

    let grid = common.grid.or(fscan.grid).unwrap_or(default_grid);
    if grid < 16 {
        return Err(CliError::config(format!("grid = {grid} must be >= 16")));
    }

    let format: OutputFormat = common
        .format
        .clone()
        .or(fout.format)
        .unwrap_or_else(|| "csv".into())
        .parse()
        .map_err(|e: donorspin::Error| CliError::config(e.to_string()))?;

    let output = common
        .output
        .clone()
        .or_else(|| fout.path.map(PathBuf::from));
    let seed = common.seed.or(fout.seed).unwrap_or(0);

    Ok(RunConfig {
        system,
        range,
        grid,
        format,
        output,
        seed,
    })
}

pub fn emit(config: &RunConfig, text: &str) -> Result<(), CliError> {
    match &config.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
