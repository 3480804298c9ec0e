//! Command-line driver: list and show the built-in spacetimes, run check
//! batteries with machine-readable JSON reports, scan symplectic quantities
//! over coordinate grids, and integrate field flows.
//!
//! Exit codes: 0 all checks pass, 1 check failure, 2 usage or spec error,
//! 3 numerical breakdown (NaN or step underflow).

use clap::{Parser, Subcommand, ValueEnum};
use nullsymp_core::catalog::{self, CatalogEntry};
use nullsymp_core::checks::{
    fmt_f64, report_to_json, run_checks, scan_csv, scan_grid, CheckOptions, GridAxis, ScanGrid,
};
use nullsymp_core::flows::{integrate_flow, monitor_along, FlowOptions, FlowResult, Termination};
use nullsymp_core::spec::parse_spacetime;
use nullsymp_core::SpacetimeSpec;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "nullsymp",
    version,
    about = "Exact symplectic forms from null vector fields on Lorentzian manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScanField {
    Iota2,
    Pfaffian,
    DetResidual,
    RicKk,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in spacetimes
    List,
    /// Show a built-in spacetime; --dsl prints its source
    Show {
        name: String,
        #[arg(long)]
        dsl: bool,
    },
    /// Run the validation manifest and the universal check suite
    Check {
        /// Catalog entry name or path to a DSL file
        target: String,
        /// Random in-domain points (distributed over charts)
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Multiply every tolerance by this factor
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
        /// Suppress the timestamp for byte-identical reruns
        #[arg(long)]
        reproducible: bool,
        /// Test hook: corrupt the assembled 2-form so closedness must fail
        #[arg(long, hide = true)]
        corrupt_alpha: bool,
        /// Parameter overrides, name=value (repeatable)
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
    /// Evaluate symplectic quantities over a 2-d coordinate grid (CSV)
    Scan {
        name: String,
        /// Which column the summary line reports
        #[arg(long, value_enum)]
        field: ScanField,
        /// Two axes: coord=lo:hi:n,coord=lo:hi:n
        #[arg(long)]
        grid: String,
        /// Fixed values for the remaining coordinates: coord=value,...
        #[arg(long)]
        fix: Option<String>,
        /// Chart to scan (default: the first chart)
        #[arg(long)]
        chart: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
    /// Integrate a declared field's flow; CSV samples plus a JSON trailer
    Flow {
        name: String,
        /// Start point: coord=value,... (all coordinates)
        #[arg(long)]
        start: String,
        #[arg(long, default_value = "k")]
        field: String,
        #[arg(long)]
        chart: Option<String>,
        /// Target parameter (signed: negative integrates backward)
        #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
        smax: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Attach optical/curvature monitors to every sample
        #[arg(long)]
        monitors: bool,
        /// Stop with a period estimate on first return to the start point
        #[arg(long)]
        detect_closed_orbit: bool,
        /// Uniform output spacing (default: one sample per accepted step)
        #[arg(long)]
        output_every: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
}

fn main() -> ExitCode {
    // die quietly when stdout goes away (e.g. piping into `head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn parse_overrides(items: &[String]) -> Result<Vec<(String, f64)>, String> {
    items
        .iter()
        .map(|item| {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| format!("expected NAME=VALUE, got `{item}`"))?;
            let value: f64 = value
                .parse()
                .map_err(|_| format!("invalid number in `{item}`"))?;
            Ok((name.to_string(), value))
        })
        .collect()
}

/// Resolve a check target: catalog entry by name, otherwise a DSL file.
fn load_target(
    target: &str,
    overrides: &[(String, f64)],
) -> Result<(SpacetimeSpec, Option<CatalogEntry>), String> {
    if catalog::names().contains(&target) {
        let (spec, entry) =
            catalog::get_spacetime(target, overrides).map_err(|e| e.to_string())?;
        return Ok((spec, Some(entry)));
    }
    let path = PathBuf::from(target);
    if !path.exists() {
        return Err(format!(
            "`{target}` is neither a catalog entry nor a readable file"
        ));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let spec = parse_spacetime(&text)
        .and_then(|s| s.with_params(overrides))
        .map_err(|e| e.to_string())?;
    Ok((spec, None))
}

fn env_tol_scale() -> f64 {
    std::env::var("NULLSYMP_TOL_SCALE")
        .ok()
        .and_then(|v| v.parse::<f64>().ok())
        .unwrap_or(1.0)
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::List => {
            for name in catalog::names() {
                let entry = catalog::entry(name).expect("catalog names are valid");
                let spec = parse_spacetime(&entry.source).expect("catalog sources parse");
                println!(
                    "{:<22} dim {}  charts {:>2}  k: {:<8} f: {:<4} {}",
                    name,
                    spec.dim,
                    spec.charts.len(),
                    entry.k_field.unwrap_or("-"),
                    entry.f_field.unwrap_or("-"),
                    if entry.contact_field.is_some() {
                        "(contact)"
                    } else {
                        ""
                    }
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Show { name, dsl } => {
            let entry = catalog::entry(&name).map_err(|e| e.to_string())?;
            if dsl {
                print!("{}", entry.source);
                return Ok(ExitCode::SUCCESS);
            }
            let spec = parse_spacetime(&entry.source).expect("catalog sources parse");
            println!("name: {}", entry.name);
            println!("dim: {}", spec.dim);
            for (pname, pval) in spec.param_names.iter().zip(&spec.param_values) {
                println!("param: {} = {}", pname, pval);
            }
            for chart in &spec.charts {
                println!(
                    "chart {} [{}]  vectors: {}  scalars: {}",
                    chart.name,
                    chart.coords.join(", "),
                    chart
                        .vectors
                        .keys()
                        .cloned()
                        .collect::<Vec<_>>()
                        .join(", "),
                    chart
                        .scalars
                        .keys()
                        .cloned()
                        .collect::<Vec<_>>()
                        .join(", "),
                );
            }
            println!("transitions: {}", spec.transitions.len());
            println!("manifest checks: {}", entry.manifest.len());
            println!("notes: {}", entry.notes);
            Ok(ExitCode::SUCCESS)
        }
        Command::Check {
            target,
            points,
            seed,
            tol_scale,
            reproducible,
            corrupt_alpha,
            params,
        } => {
            let overrides = parse_overrides(&params)?;
            let (spec, entry) = load_target(&target, &overrides)?;
            let opts = CheckOptions {
                points,
                seed,
                tol_scale: tol_scale * env_tol_scale(),
                corrupt_alpha,
            };
            let report = run_checks(&spec, entry.as_ref(), &opts);
            print!("{}", report_to_json(&report, VERSION, reproducible));
            if report.numerical_breakdown {
                Ok(ExitCode::from(3))
            } else if report.counts().1 > 0 {
                Ok(ExitCode::from(1))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Scan {
            name,
            field,
            grid,
            fix,
            chart,
            output,
            params,
        } => {
            let overrides = parse_overrides(&params)?;
            let (spec, entry) = load_target(&name, &overrides)?;
            let chart = match &chart {
                Some(c) => spec.chart(c).map_err(|e| e.to_string())?,
                None => &spec.charts[0],
            };
            let k_field = entry
                .as_ref()
                .and_then(|e| e.k_field)
                .unwrap_or("k")
                .to_string();
            let f_field = entry
                .as_ref()
                .and_then(|e| e.f_field)
                .unwrap_or("f")
                .to_string();

            let mut base_point = vec![0.0; chart.dim()];
            if let Some(fix) = &fix {
                for part in fix.split(',') {
                    let (cname, value) = part
                        .split_once('=')
                        .ok_or_else(|| format!("bad --fix entry `{part}`"))?;
                    let idx = chart
                        .coord_index(cname.trim())
                        .ok_or_else(|| format!("unknown coordinate `{cname}`"))?;
                    base_point[idx] = value
                        .trim()
                        .parse()
                        .map_err(|_| format!("invalid number in `{part}`"))?;
                }
            }
            let axes: Vec<GridAxis> = grid
                .split(',')
                .map(|part| parse_axis(part, chart))
                .collect::<Result<_, _>>()?;
            if axes.len() != 2 {
                return Err(format!(
                    "--grid needs exactly two axes, got {}",
                    axes.len()
                ));
            }
            if axes[0].coord == axes[1].coord {
                return Err("--grid axes must use two different coordinates".to_string());
            }
            let grid = ScanGrid {
                axis_a: axes[0].clone(),
                axis_b: axes[1].clone(),
                base_point,
            };
            let with_ric = field == ScanField::RicKk;
            let rows = scan_grid(&spec, chart, &k_field, &f_field, &grid, with_ric)
                .map_err(|e| e.to_string())?;
            let csv = scan_csv(chart, &rows, with_ric);
            match output {
                Some(path) => std::fs::write(&path, csv).map_err(|e| e.to_string())?,
                None => print!("{csv}"),
            }

            // summary of the requested field on stderr
            let pick = |row: &nullsymp_core::checks::ScanRow| -> Option<f64> {
                match field {
                    ScanField::Iota2 => row.iota2,
                    ScanField::Pfaffian => row.pfaffian,
                    ScanField::DetResidual => row.det_identity_residual,
                    ScanField::RicKk => row.ric_kk,
                }
            };
            let values: Vec<f64> = rows.iter().filter_map(pick).collect();
            if let (Some(min), Some(max)) = (
                values.iter().cloned().reduce(f64::min),
                values.iter().cloned().reduce(f64::max),
            ) {
                eprintln!(
                    "scan: {} cells, {} evaluated, field range [{}, {}]",
                    rows.len(),
                    values.len(),
                    fmt_f64(min),
                    fmt_f64(max)
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Flow {
            name,
            start,
            field,
            chart,
            smax,
            tol,
            monitors,
            detect_closed_orbit,
            output_every,
            output,
            params,
        } => {
            let overrides = parse_overrides(&params)?;
            let (spec, _) = load_target(&name, &overrides)?;
            let chart_name = match &chart {
                Some(c) => c.clone(),
                None => spec.charts[0].name.clone(),
            };
            let chart_ref = spec.chart(&chart_name).map_err(|e| e.to_string())?;
            let mut p0 = vec![0.0; chart_ref.dim()];
            let mut seen = vec![false; chart_ref.dim()];
            for part in start.split(',') {
                let (cname, value) = part
                    .split_once('=')
                    .ok_or_else(|| format!("bad --start entry `{part}`"))?;
                let idx = chart_ref
                    .coord_index(cname.trim())
                    .ok_or_else(|| format!("unknown coordinate `{cname}`"))?;
                p0[idx] = value
                    .trim()
                    .parse()
                    .map_err(|_| format!("invalid number in `{part}`"))?;
                seen[idx] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err("--start must set every coordinate".to_string());
            }
            if matches!(output_every, Some(d) if d <= 0.0) {
                return Err("--output-every must be positive".to_string());
            }
            let opts = FlowOptions {
                tol,
                output_every,
                detect_closed_orbit,
                ..Default::default()
            };
            let flow = integrate_flow(&spec, &chart_name, &p0, &field, smax, &opts)
                .map_err(|e| e.to_string())?;
            let flow = if monitors {
                monitor_along(&spec, flow, &field).map_err(|e| e.to_string())?
            } else {
                flow
            };
            let csv = flow_csv(&spec, &flow);
            match output {
                Some(path) => std::fs::write(&path, csv).map_err(|e| e.to_string())?,
                None => print!("{csv}"),
            }
            println!("{}", termination_json(&flow));
            let code = match flow.termination {
                Termination::StepUnderflow { .. } => ExitCode::from(3),
                _ => ExitCode::SUCCESS,
            };
            Ok(code)
        }
    }
}

fn parse_axis(part: &str, chart: &nullsymp_core::Chart) -> Result<GridAxis, String> {
    let (cname, range) = part
        .split_once('=')
        .ok_or_else(|| format!("bad --grid entry `{part}`"))?;
    let coord = chart
        .coord_index(cname.trim())
        .ok_or_else(|| format!("unknown coordinate `{cname}`"))?;
    let pieces: Vec<&str> = range.split(':').collect();
    if pieces.len() != 3 {
        return Err(format!("grid axis `{part}` must be coord=lo:hi:n"));
    }
    let lo: f64 = pieces[0]
        .parse()
        .map_err(|_| format!("invalid number in `{part}`"))?;
    let hi: f64 = pieces[1]
        .parse()
        .map_err(|_| format!("invalid number in `{part}`"))?;
    let n: usize = pieces[2]
        .parse()
        .map_err(|_| format!("invalid cell count in `{part}`"))?;
    if n < 2 || hi <= lo {
        return Err(format!("grid axis `{part}` needs lo < hi and n >= 2"));
    }
    Ok(GridAxis { coord, lo, hi, n })
}

fn flow_csv(spec: &SpacetimeSpec, flow: &FlowResult) -> String {
    let coords = spec.charts[0].coords.join(",");
    let mut out = String::new();
    let _ = writeln!(out, "s,chart,{coords},iota2,theta,ric_kk,r1,r2,rho2");
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for sample in &flow.samples {
        let mut cols = vec![fmt_f64(sample.s), spec.charts[sample.chart].name.clone()];
        cols.extend(sample.point.iter().map(|v| fmt_f64(*v)));
        match &sample.monitors {
            Some(m) => {
                cols.push(opt(m.iota2));
                cols.push(opt(m.theta));
                cols.push(opt(m.ric_kk));
                cols.push(opt(m.r1));
                cols.push(opt(m.r2));
                cols.push(opt(m.rho2));
            }
            None => cols.extend(std::iter::repeat_n(String::new(), 6)),
        }
        let _ = writeln!(out, "{}", cols.join(","));
    }
    out
}

fn termination_json(flow: &FlowResult) -> String {
    let samples = flow.samples.len();
    match &flow.termination {
        Termination::ReachedSmax => {
            let s = flow.samples.last().map(|c| c.s).unwrap_or(0.0);
            format!(
                "{{\"termination\": \"reached_smax\", \"s\": {}, \"samples\": {samples}}}",
                fmt_f64(s)
            )
        }
        Termination::LeftAtlas { s } => format!(
            "{{\"termination\": \"left_atlas\", \"s\": {}, \"samples\": {samples}}}",
            fmt_f64(*s)
        ),
        Termination::SingularEvent { s, event } => format!(
            "{{\"termination\": \"singular_event\", \"s\": {}, \"event\": \"{event}\", \"samples\": {samples}}}",
            fmt_f64(*s)
        ),
        Termination::StepUnderflow { s } => format!(
            "{{\"termination\": \"step_underflow\", \"s\": {}, \"samples\": {samples}}}",
            fmt_f64(*s)
        ),
        Termination::ClosedOrbit { period } => format!(
            "{{\"termination\": \"closed_orbit\", \"period\": {}, \"samples\": {samples}}}",
            fmt_f64(*period)
        ),
    }
}
