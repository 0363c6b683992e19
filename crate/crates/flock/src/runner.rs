//! Scenario execution with file artifacts, and comparison of two runs.
//!
//! A run writes into its output directory:
//!
//! - `config.json`       resolved scenario configuration
//! - `trajectory.csv`    one row per integrator step (schema below)
//! - `dataset_agent_<i>.csv`  per-agent training data (learning mode)
//! - `bound.json`        error-bound report
//! - `summary.json`      terminal metrics and flags
//! - `plots/*.svg`       optional charts
//!
//! Trajectory CSV schema: header
//! `t,q_1_x,..,q_n_<axis>,v_1_x,..,u_1_x,..,e_1,..,e_E,V,delta_norm,bound`
//! (column count `1 + 3dn + |E| + 3`), `\n` line endings, `.` decimal
//! separator, 17-significant-digit floats.

use std::fs;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::RunnerError;
use crate::metrics::{average_neighbor_distance_trace, average_velocity_trace, fit_exponential_rate};
use crate::sim::{edot_identity_check, run_scenario, ScenarioResult, TrajectoryRecord};
use crate::svg::{Chart, Series, PALETTE};
use crate::util::format_float;

/// Terminal `||e||` and `||delta||` below this count as converged.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-3;

const AXES: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TerminalMetrics {
    pub t: f64,
    pub e_norm: f64,
    pub delta_norm: f64,
    pub lyapunov: f64,
    pub stacked_error: f64,
    pub avg_neighbor_distance: f64,
    pub desired_mean_distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BoundSummary {
    pub b: f64,
    pub epsilon: f64,
    pub violated_post_freeze: bool,
    pub max_post_freeze_stacked_error: f64,
    pub t_eps: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub mode: String,
    pub seed: u64,
    pub rows: usize,
    pub converged: bool,
    pub terminal: TerminalMetrics,
    pub bound: BoundSummary,
    pub edot_max_residual: f64,
    /// Least-squares log-rate of V over the middle two thirds of the run.
    pub lyapunov_rate: Option<f64>,
    /// `||v_mean(t_end) - v_mean(0)||`.
    pub mean_velocity_drift: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub b: f64,
    pub epsilon: f64,
    pub grid_points_per_axis: usize,
    pub truncated_grid: bool,
    pub argmax: Vec<f64>,
    pub t_eps: Option<f64>,
    pub dataset_sizes: Vec<usize>,
    pub gamma: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub rkhs_bounds: Vec<Vec<f64>>,
    pub omega_min: Vec<f64>,
    pub omega_max: Vec<f64>,
    pub lambda_min_rrt: f64,
    pub lambda2: f64,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunnerError> {
    fs::write(path, bytes).map_err(|source| RunnerError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String, RunnerError> {
    fs::read_to_string(path).map_err(|source| RunnerError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Runs a validated scenario and writes all artifacts into `out_dir`.
pub fn run(cfg: &ScenarioConfig, out_dir: &Path, svg: bool) -> Result<RunSummary, RunnerError> {
    let mut cfg = cfg.clone();
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|source| RunnerError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let result = run_scenario(&cfg)?;
    let summary = summarize(&cfg, &result)?;

    write_file(&out_dir.join("config.json"), cfg.to_json_string().as_bytes())?;
    write_trajectory_csv(&out_dir.join("trajectory.csv"), &result.record)?;
    if cfg.mode() == crate::control::ControlMode::Learning {
        for (i, model) in result.models.iter().enumerate() {
            write_file(
                &out_dir.join(format!("dataset_agent_{}.csv", i + 1)),
                model.dataset().to_csv_string().as_bytes(),
            )?;
        }
    }
    let report = BoundReport {
        b: result.bound.b,
        epsilon: result.bound.epsilon,
        grid_points_per_axis: result.bound.grid_points_per_axis,
        truncated_grid: result.bound.truncated_grid,
        argmax: result.bound.argmax.clone(),
        t_eps: result.bound.t_eps,
        dataset_sizes: result.models.iter().map(|m| m.len()).collect(),
        gamma: result.gammas.clone(),
        beta: result.betas.clone(),
        rkhs_bounds: result.rkhs_bounds.clone(),
        omega_min: result.omega.min().to_vec(),
        omega_max: result.omega.max().to_vec(),
        lambda_min_rrt: result.lambda_min_rrt,
        lambda2: result.lambda2,
    };
    write_file(
        &out_dir.join("bound.json"),
        (serde_json::to_string_pretty(&report)? + "\n").as_bytes(),
    )?;
    write_file(
        &out_dir.join("summary.json"),
        (serde_json::to_string_pretty(&summary)? + "\n").as_bytes(),
    )?;
    if svg {
        write_plots(&cfg, &result, &out_dir.join("plots"))?;
    }
    Ok(summary)
}

fn summarize(cfg: &ScenarioConfig, result: &ScenarioResult) -> Result<RunSummary, RunnerError> {
    let record = &result.record;
    let fw = cfg.framework()?;
    let last = record.sample_count() - 1;
    let settings = cfg.sim_settings();

    let distances = average_neighbor_distance_trace(&fw, record);
    let desired_mean = fw.desired_lengths().iter().sum::<f64>() / fw.edge_count() as f64;

    let mut max_post_freeze = 0.0_f64;
    for s in 0..record.sample_count() {
        if record.time(s) >= settings.freeze_time {
            max_post_freeze = max_post_freeze.max(record.stacked_error_norm(s));
        }
    }
    let violated = max_post_freeze > result.bound.b;

    let window = (settings.t_end / 6.0, settings.t_end * 5.0 / 6.0);
    let lyapunov_rate = fit_exponential_rate(record.times(), record.lyapunov_row(), window).ok();

    let vbar = average_velocity_trace(record);
    let drift = vbar[last]
        .iter()
        .zip(&vbar[0])
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();

    let e_norm = record.error_norm(last);
    let delta_norm = record.disagreement_norm(last);
    Ok(RunSummary {
        name: cfg.name.clone(),
        mode: match cfg.control.mode {
            crate::config::ModeConfig::Nominal => "nominal".into(),
            crate::config::ModeConfig::Learning => "learning".into(),
        },
        seed: cfg.sim.seed,
        rows: record.sample_count(),
        converged: e_norm < CONVERGENCE_TOLERANCE && delta_norm < CONVERGENCE_TOLERANCE,
        terminal: TerminalMetrics {
            t: record.time(last),
            e_norm,
            delta_norm,
            lyapunov: record.lyapunov_at(last),
            stacked_error: record.stacked_error_norm(last),
            avg_neighbor_distance: distances[last],
            desired_mean_distance: desired_mean,
        },
        bound: BoundSummary {
            b: result.bound.b,
            epsilon: result.bound.epsilon,
            violated_post_freeze: violated,
            max_post_freeze_stacked_error: max_post_freeze,
            t_eps: result.bound.t_eps,
        },
        edot_max_residual: edot_identity_check(&fw, record)?,
        lyapunov_rate,
        mean_velocity_drift: drift,
    })
}

/// Trajectory CSV header for the given layout.
pub fn trajectory_header(n: usize, d: usize, edges: usize) -> String {
    let mut cols = vec!["t".to_string()];
    for prefix in ["q", "v", "u"] {
        for i in 1..=n {
            for axis in AXES.iter().take(d) {
                cols.push(format!("{prefix}_{i}_{axis}"));
            }
        }
    }
    for k in 1..=edges {
        cols.push(format!("e_{k}"));
    }
    cols.push("V".into());
    cols.push("delta_norm".into());
    cols.push("bound".into());
    cols.join(",")
}

fn write_trajectory_csv(path: &Path, record: &TrajectoryRecord) -> Result<(), RunnerError> {
    let file = fs::File::create(path).map_err(|source| RunnerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = std::io::BufWriter::new(file);
    let wrap = |source: std::io::Error| RunnerError::Io { path: path.display().to_string(), source };
    let n = record.agent_count();
    let d = record.dimension();
    writeln!(w, "{}", trajectory_header(n, d, record.edge_count())).map_err(wrap)?;
    let mut row: Vec<String> = Vec::with_capacity(1 + 3 * n * d + record.edge_count() + 3);
    for s in 0..record.sample_count() {
        row.clear();
        row.push(format_float(record.time(s)));
        row.extend(record.positions(s).as_slice().iter().map(|&x| format_float(x)));
        row.extend(record.velocities(s).as_slice().iter().map(|&x| format_float(x)));
        row.extend(record.controls_row(s).iter().map(|&x| format_float(x)));
        row.extend(record.errors_row(s).iter().map(|&x| format_float(x)));
        row.push(format_float(record.lyapunov_at(s)));
        row.push(format_float(record.disagreement_norm(s)));
        row.push(format_float(record.error_bound_at(s)));
        writeln!(w, "{}", row.join(",")).map_err(wrap)?;
    }
    w.flush().map_err(wrap)?;
    Ok(())
}

/// A parsed trajectory CSV: column names and data in column-major order.
#[derive(Debug, Clone)]
pub struct TrajectoryTable {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.header
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
    }
}

/// Parses the CSV written by a run. Rejects malformed headers, ragged rows
/// and non-numeric fields.
pub fn parse_trajectory_csv(text: &str) -> Result<TrajectoryTable, RunnerError> {
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or(RunnerError::TrajectoryCsv { line: 1, msg: "missing header".into() })?;
    let header: Vec<String> = header_line.split(',').map(|s| s.trim().to_string()).collect();
    if header.is_empty() || header[0] != "t" {
        return Err(RunnerError::TrajectoryCsv { line: 1, msg: "first column must be t".into() });
    }
    if header.iter().any(String::is_empty) {
        return Err(RunnerError::TrajectoryCsv { line: 1, msg: "empty column name".into() });
    }
    let mut columns = vec![Vec::new(); header.len()];
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for (j, field) in line.split(',').enumerate() {
            if j >= header.len() {
                return Err(RunnerError::TrajectoryCsv {
                    line: idx + 1,
                    msg: format!("expected {} fields", header.len()),
                });
            }
            let v: f64 = field.trim().parse().map_err(|e| RunnerError::TrajectoryCsv {
                line: idx + 1,
                msg: format!("bad float {field:?}: {e}"),
            })?;
            columns[j].push(v);
            count += 1;
        }
        if count != header.len() {
            return Err(RunnerError::TrajectoryCsv {
                line: idx + 1,
                msg: format!("expected {} fields, got {count}", header.len()),
            });
        }
    }
    Ok(TrajectoryTable { header, columns })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunBrief {
    pub dir: String,
    pub name: String,
    pub mode: String,
    pub terminal_e_norm: f64,
    pub terminal_lyapunov: f64,
    pub terminal_delta_norm: f64,
    pub terminal_avg_neighbor_distance: f64,
    pub desired_mean_distance: f64,
    /// Largest relative deviation of the mean neighbor distance from its
    /// desired value over the trailing window (settling check).
    pub max_tail_distance_deviation: f64,
    pub lyapunov_rate: Option<f64>,
    pub bound_b: f64,
    pub bound_violated_post_freeze: bool,
}

/// Trailing window length for the settling check.
fn tail_window(t_end: f64) -> f64 {
    3.0_f64.min(t_end / 5.0)
}

/// Side-by-side report; ratios are `a / b` per quantity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub run_a: RunBrief,
    pub run_b: RunBrief,
    pub terminal_e_ratio: f64,
    pub terminal_lyapunov_ratio: f64,
    pub distance_deviation_ratio: f64,
}

fn load_brief(dir: &Path) -> Result<(ScenarioConfig, RunBrief), RunnerError> {
    let cfg = ScenarioConfig::parse_config_str(&read_file(&dir.join("config.json"))?)?;
    let summary: RunSummary = serde_json::from_str(&read_file(&dir.join("summary.json"))?)?;
    let table = parse_trajectory_csv(&read_file(&dir.join("trajectory.csv"))?)?;

    // Terminal metrics recomputed from the trajectory table; the summary
    // provides the bound fields.
    let rows = table.rows();
    if rows == 0 {
        return Err(RunnerError::TrajectoryCsv { line: 2, msg: "no data rows".into() });
    }
    let fw = cfg.framework()?;
    let mut e_sq = 0.0;
    for k in 1..=fw.edge_count() {
        let col = table
            .column(&format!("e_{k}"))
            .ok_or(RunnerError::TrajectoryCsv { line: 1, msg: format!("missing column e_{k}") })?;
        e_sq += col[rows - 1] * col[rows - 1];
    }
    let v_col = table
        .column("V")
        .ok_or(RunnerError::TrajectoryCsv { line: 1, msg: "missing column V".into() })?;
    let delta_col = table
        .column("delta_norm")
        .ok_or(RunnerError::TrajectoryCsv { line: 1, msg: "missing column delta_norm".into() })?;
    // Mean neighbor distance from positions, per sample over the tail.
    let times = table
        .column("t")
        .ok_or(RunnerError::TrajectoryCsv { line: 1, msg: "missing column t".into() })?
        .to_vec();
    let desired_mean = fw.desired_lengths().iter().sum::<f64>() / fw.edge_count() as f64;
    let tail_start = times[rows - 1] - tail_window(times[rows - 1] - times[0]);
    let mut dist_sum = 0.0;
    let mut max_tail_deviation = 0.0_f64;
    let mut q_cols = Vec::new();
    for i in 1..=fw.agent_count() {
        for axis in AXES.iter().take(fw.dimension()) {
            q_cols.push(
                table
                    .column(&format!("q_{i}_{axis}"))
                    .ok_or(RunnerError::TrajectoryCsv { line: 1, msg: format!("missing column q_{i}_{axis}") })?,
            );
        }
    }
    let d = fw.dimension();
    for s in 0..rows {
        if times[s] < tail_start && s != rows - 1 {
            continue;
        }
        let mut total = 0.0;
        for &(tail, head) in fw.edges() {
            let mut sq = 0.0;
            for a in 0..d {
                let diff = q_cols[tail * d + a][s] - q_cols[head * d + a][s];
                sq += diff * diff;
            }
            total += sq.sqrt();
        }
        let mean_dist = total / fw.edge_count() as f64;
        max_tail_deviation = max_tail_deviation.max((mean_dist - desired_mean).abs() / desired_mean);
        if s == rows - 1 {
            dist_sum = total;
        }
    }
    let brief = RunBrief {
        dir: dir.display().to_string(),
        name: cfg.name.clone(),
        mode: summary.mode.clone(),
        terminal_e_norm: e_sq.sqrt(),
        terminal_lyapunov: v_col[rows - 1],
        terminal_delta_norm: delta_col[rows - 1],
        terminal_avg_neighbor_distance: dist_sum / fw.edge_count() as f64,
        desired_mean_distance: desired_mean,
        max_tail_distance_deviation: max_tail_deviation,
        lyapunov_rate: summary.lyapunov_rate,
        bound_b: summary.bound.b,
        bound_violated_post_freeze: summary.bound.violated_post_freeze,
    };
    Ok((cfg, brief))
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

/// Compares two run directories that share framework, initial state and
/// disturbances.
pub fn compare(dir_a: &Path, dir_b: &Path) -> Result<CompareReport, RunnerError> {
    let (cfg_a, brief_a) = load_brief(dir_a)?;
    let (cfg_b, brief_b) = load_brief(dir_b)?;
    if !cfg_a.same_scenario(&cfg_b) {
        return Err(RunnerError::ScenarioMismatch);
    }
    let dev_a = brief_a.max_tail_distance_deviation;
    let dev_b = brief_b.max_tail_distance_deviation;
    Ok(CompareReport {
        terminal_e_ratio: ratio(brief_a.terminal_e_norm, brief_b.terminal_e_norm),
        terminal_lyapunov_ratio: ratio(brief_a.terminal_lyapunov, brief_b.terminal_lyapunov),
        distance_deviation_ratio: ratio(dev_a, dev_b),
        run_a: brief_a,
        run_b: brief_b,
    })
}

/// Writes the comparison report and the normalized Lyapunov chart of both
/// runs into `out_dir`.
pub fn write_compare_artifacts(
    report: &CompareReport,
    dir_a: &Path,
    dir_b: &Path,
    out_dir: &Path,
) -> Result<PathBuf, RunnerError> {
    fs::create_dir_all(out_dir).map_err(|source| RunnerError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let path = out_dir.join("compare.json");
    write_file(&path, (serde_json::to_string_pretty(report)? + "\n").as_bytes())?;

    let mut chart = Chart::new("normalized Lyapunov function", "t", "V(t) / V(0)");
    for (idx, (dir, brief)) in [(dir_a, &report.run_a), (dir_b, &report.run_b)].iter().enumerate() {
        let table = parse_trajectory_csv(&read_file(&dir.join("trajectory.csv"))?)?;
        let t = table
            .column("t")
            .ok_or(RunnerError::TrajectoryCsv { line: 1, msg: "missing column t".into() })?;
        let v = table
            .column("V")
            .ok_or(RunnerError::TrajectoryCsv { line: 1, msg: "missing column V".into() })?;
        let v0 = v.first().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
        let points = downsample(t, v, 2000).into_iter().map(|(x, y)| (x, y / v0)).collect();
        let label = format!("{} ({})", brief.mode, if idx == 0 { "A" } else { "B" });
        let series = Series::new(label, PALETTE[idx], points);
        chart.push(if idx == 0 { series.dashed() } else { series });
    }
    write_file(&out_dir.join("lyapunov_compare.svg"), chart.render().as_bytes())?;
    Ok(path)
}

fn downsample(x: &[f64], y: &[f64], max_points: usize) -> Vec<(f64, f64)> {
    let n = x.len().min(y.len());
    if n == 0 {
        return Vec::new();
    }
    let stride = (n / max_points).max(1);
    let mut points: Vec<(f64, f64)> = (0..n).step_by(stride).map(|i| (x[i], y[i])).collect();
    if points.last().map(|p| p.0) != Some(x[n - 1]) {
        points.push((x[n - 1], y[n - 1]));
    }
    points
}

fn write_plots(cfg: &ScenarioConfig, result: &ScenarioResult, dir: &Path) -> Result<(), RunnerError> {
    fs::create_dir_all(dir).map_err(|source| RunnerError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let record = &result.record;
    let fw = cfg.framework()?;
    let n = fw.agent_count();
    let d = fw.dimension();
    let rows = record.sample_count();
    let stride = (rows / 2000).max(1);
    let sampled: Vec<usize> = (0..rows).step_by(stride).collect();

    // Agent paths in the plane (xy projection for d = 3).
    let mut chart = Chart::new("agent trajectories", "x", "y");
    for i in 0..n {
        let points: Vec<(f64, f64)> = sampled
            .iter()
            .map(|&s| {
                let q = record.positions(s);
                (q.block(i)[0], q.block(i)[1])
            })
            .collect();
        chart.push(Series::new(format!("agent {}", i + 1), PALETTE[i % PALETTE.len()], points));
    }
    write_file(&dir.join("trajectories.svg"), chart.render().as_bytes())?;

    // Real vs predicted disturbance per agent.
    for i in 0..n {
        let mut chart = Chart::new(
            format!("agent {}: real vs predicted external force", i + 1),
            "t",
            "force",
        );
        for a in 0..d {
            let real: Vec<(f64, f64)> = sampled
                .iter()
                .map(|&s| (record.time(s), record.true_force(s, i)[a]))
                .collect();
            let predicted: Vec<(f64, f64)> = sampled
                .iter()
                .map(|&s| (record.time(s), record.predicted_force(s, i)[a]))
                .collect();
            chart.push(Series::new(format!("f_{} real", AXES[a]), PALETTE[a], real));
            chart.push(Series::new(format!("f_{} predicted", AXES[a]), PALETTE[a], predicted).dashed());
        }
        write_file(&dir.join(format!("forces_agent_{}.svg", i + 1)), chart.render().as_bytes())?;
    }

    // Average velocity components.
    let vbar = average_velocity_trace(record);
    let mut chart = Chart::new("average velocity", "t", "v_mean");
    for a in 0..d {
        let points: Vec<(f64, f64)> = sampled
            .iter()
            .map(|&s| (record.time(s), vbar[s][a]))
            .collect();
        chart.push(Series::new(format!("v_mean_{}", AXES[a]), PALETTE[a], points));
    }
    write_file(&dir.join("avg_velocity.svg"), chart.render().as_bytes())?;

    // Average neighbor distance with the desired mean for reference.
    let distances = average_neighbor_distance_trace(&fw, record);
    let desired = fw.desired_lengths().iter().sum::<f64>() / fw.edge_count() as f64;
    let mut chart = Chart::new("average neighbor distance", "t", "distance");
    chart.push(Series::new(
        "mean ||z_k||",
        PALETTE[0],
        sampled.iter().map(|&s| (record.time(s), distances[s])).collect(),
    ));
    chart.push(
        Series::new(
            "desired mean",
            PALETTE[1],
            vec![(record.time(0), desired), (record.time(rows - 1), desired)],
        )
        .dashed(),
    );
    write_file(&dir.join("avg_distance.svg"), chart.render().as_bytes())?;

    // Normalized Lyapunov trace.
    let v0 = record.lyapunov_at(0).max(f64::MIN_POSITIVE);
    let mut chart = Chart::new("normalized Lyapunov function", "t", "V(t) / V(0)");
    chart.push(Series::new(
        "V / V(0)",
        PALETTE[0],
        sampled
            .iter()
            .map(|&s| (record.time(s), record.lyapunov_at(s) / v0))
            .collect(),
    ));
    write_file(&dir.join("lyapunov.svg"), chart.render().as_bytes())?;
    Ok(())
}
