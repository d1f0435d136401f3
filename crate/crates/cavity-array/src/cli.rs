//! Scenario configuration, execution and artifact persistence.
//!
//! Every run resolves a [`ScenarioConfig`] (declarative file plus flag
//! overrides, strict schema), executes it, and writes CSV artifacts with
//! a `manifest.json` carrying the resolved config, the output inventory
//! and convergence diagnostics. Re-running from a manifest's embedded
//! config reproduces the outputs byte-for-byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    amplitude_scan, box_count, default_tau_grid, estimate_gc, fit_dimension, inversion_time,
    scan_inversion_vs_g, SampledSeries, ScanNumerics, WindowPolicy,
};
use crate::analytic;
use crate::error::SimError;
use crate::fock::{build_space, InitialState};
use crate::io::{
    write_amplitude_csv, write_boxcount_csv, write_scan_csv, write_trajectory_csv,
    RunManifest,
};
use crate::model::{SystemParams, Variant};
use crate::observe;
use crate::propagate::{
    converge_cutoff, evolve, trotter_for, Observable, ObservableRegistry, Scenario, Trajectory,
};
use crate::Result;

/// What a run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Single trajectory of photon numbers and monitors.
    Transfer,
    /// Inversion time versus cavity-qubit coupling.
    SweepG,
    /// Transfer amplitude versus the second hopping.
    SweepJ2,
    /// Trajectory plus box-counting fractal analysis of `N_1(t)`.
    Boxcount,
    /// Trajectory with the rightmost-cavity transfer fidelity.
    Fidelity,
    /// Degenerate-qubit effective model against `cos(sqrt(2) J t)`.
    Degenerate,
}

fn default_omega_q() -> f64 {
    1.0
}
fn default_variant() -> Variant {
    Variant::Full
}

/// Physical parameters section of a scenario.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ParamsConfig {
    #[serde(default = "default_omega_q")]
    pub omega_q: f64,
    #[serde(default)]
    pub g: f64,
    #[serde(default)]
    pub j1: f64,
    #[serde(default)]
    pub j2: f64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            omega_q: 1.0,
            g: 0.0,
            j1: 0.0,
            j2: 0.0,
            variant: Variant::Full,
        }
    }
}

impl ParamsConfig {
    pub fn to_params(self) -> Result<SystemParams> {
        SystemParams::new(self.omega_q, self.g, self.j1, self.j2, self.variant)
    }
}

fn default_dt() -> f64 {
    crate::propagate::DEFAULT_DT
}
fn default_dt_sample() -> f64 {
    crate::propagate::DEFAULT_DT_SAMPLE
}

/// Numerical knobs: photon cutoff, step sizes and horizon.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct NumericsConfig {
    /// Explicit cutoff; when absent the regime default applies
    /// (8 below g = 0.4, 12 at or above) unless `auto-nmax` is set.
    #[serde(default)]
    pub n_max: Option<usize>,
    /// Determine the cutoff by convergence (photon numbers stable to
    /// `auto-tol` when raising the cutoff by 2).
    #[serde(default)]
    pub auto_nmax: bool,
    #[serde(default = "default_auto_tol")]
    pub auto_tol: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_dt_sample")]
    pub dt_sample: f64,
    /// Horizon; when absent the scenario default applies.
    #[serde(default)]
    pub t_end: Option<f64>,
}

fn default_auto_tol() -> f64 {
    1e-6
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            n_max: None,
            auto_nmax: false,
            auto_tol: default_auto_tol(),
            dt: default_dt(),
            dt_sample: default_dt_sample(),
            t_end: None,
        }
    }
}

/// Grid section for the sweep scenarios.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SweepConfig {
    #[serde(default)]
    pub g_min: f64,
    #[serde(default = "default_g_max")]
    pub g_max: f64,
    #[serde(default = "default_g_step")]
    pub step: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default)]
    pub j2_min: f64,
    #[serde(default = "default_j2_max")]
    pub j2_max: f64,
    #[serde(default = "default_j2_step")]
    pub j2_step: f64,
    /// Cross-check Eq.-style amplitudes with a numerical evolution.
    #[serde(default)]
    pub numeric: bool,
}

fn default_g_max() -> f64 {
    1.0
}
fn default_g_step() -> f64 {
    0.005
}
fn default_t_max() -> f64 {
    3000.0
}
fn default_j2_max() -> f64 {
    0.02
}
fn default_j2_step() -> f64 {
    0.0005
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            g_min: 0.0,
            g_max: default_g_max(),
            step: default_g_step(),
            t_max: default_t_max(),
            j2_min: 0.0,
            j2_max: default_j2_max(),
            j2_step: default_j2_step(),
            numeric: false,
        }
    }
}

fn default_initial() -> InitialState {
    InitialState::SinglePhoton
}

/// A fully declarative run description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default = "default_initial")]
    pub initial: InitialState,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl ScenarioConfig {
    pub fn new(scenario: ScenarioKind) -> Self {
        ScenarioConfig {
            scenario,
            params: ParamsConfig::default(),
            initial: default_initial(),
            numerics: NumericsConfig::default(),
            sweep: SweepConfig::default(),
        }
    }

    /// Parse a config file (strict). A manifest file is accepted too: its
    /// embedded `config` section is extracted.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        let config_value = match value.get("config") {
            Some(inner) => inner.clone(),
            None => value,
        };
        serde_json::from_value(config_value)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))
    }

    fn default_t_end(&self) -> f64 {
        match self.scenario {
            ScenarioKind::Transfer | ScenarioKind::Boxcount => 1000.0,
            ScenarioKind::Degenerate => 200.0,
            ScenarioKind::Fidelity => {
                let p = &self.params;
                let lambda = (p.g * p.g + p.j1 * p.j1 + p.j2 * p.j2).sqrt();
                if lambda > 0.0 {
                    20.0 * 2.0 * std::f64::consts::PI / lambda
                } else {
                    100.0
                }
            }
            ScenarioKind::SweepG | ScenarioKind::SweepJ2 => self.sweep.t_max,
        }
    }

    fn t_end(&self) -> f64 {
        self.numerics.t_end.unwrap_or_else(|| self.default_t_end())
    }
}

/// Outcome of a run: written files plus diagnostics.
pub struct RunArtifacts {
    pub files: Vec<PathBuf>,
    pub diagnostics: serde_json::Value,
}

fn regime_default_n_max(g: f64) -> usize {
    if g >= 0.4 {
        12
    } else {
        8
    }
}

fn resolve_n_max(config: &ScenarioConfig, params: &SystemParams) -> Result<(usize, serde_json::Value)> {
    if let Some(n) = config.numerics.n_max {
        build_space(n)?;
        return Ok((n, serde_json::json!({ "n_max": n, "source": "explicit" })));
    }
    if config.numerics.auto_nmax {
        let scenario = Scenario {
            initial: config.initial,
            t_end: config.t_end().min(200.0),
            dt: config.numerics.dt,
            dt_sample: config.numerics.dt_sample,
        };
        let start = if params.g >= 0.4 { 8 } else { 4 };
        let (n, diag) = converge_cutoff(params, &scenario, start, config.numerics.auto_tol)?;
        return Ok((
            n,
            serde_json::json!({
                "n_max": n,
                "source": "converged",
                "tested": diag.tested,
                "leakage": diag.leakage,
            }),
        ));
    }
    let n = regime_default_n_max(params.g);
    Ok((n, serde_json::json!({ "n_max": n, "source": "regime-default" })))
}

fn fidelity_registry(
    space: crate::fock::SpaceDescriptor,
    initial: InitialState,
) -> Result<ObservableRegistry> {
    let psi0 = initial.build(space)?;
    let rho0 = observe::reduced_cavity_state(&psi0, 1)?;
    let rho0_purity = rho0.clone();
    let mut registry = ObservableRegistry::standard(space);
    registry.push(
        "fidelity",
        Observable::Custom(Box::new(move |s| {
            observe::transfer_fidelity(&rho0, s).unwrap_or(f64::NAN)
        })),
    );
    registry.push(
        "purity3",
        Observable::Custom(Box::new(move |s| {
            let _ = &rho0_purity;
            observe::reduced_cavity_state(s, 3)
                .map(|r| r.purity())
                .unwrap_or(f64::NAN)
        })),
    );
    Ok(registry)
}

fn run_trajectory(
    config: &ScenarioConfig,
    params: &SystemParams,
    n_max: usize,
    with_fidelity: bool,
) -> Result<Trajectory> {
    let space = build_space(n_max)?;
    let state0 = config.initial.build(space)?;
    let prop = trotter_for(space, params, config.numerics.dt)?;
    let registry = if with_fidelity {
        fidelity_registry(space, config.initial)?
    } else {
        ObservableRegistry::standard(space)
    };
    evolve(
        &state0,
        &prop,
        params,
        config.t_end(),
        config.numerics.dt_sample,
        &registry,
    )
}

/// Execute a scenario and persist its artifacts under `out_dir`.
pub fn run(config: &ScenarioConfig, out_dir: &Path) -> Result<RunArtifacts> {
    fs::create_dir_all(out_dir)?;
    let mut params = config.params.to_params()?;
    if config.scenario == ScenarioKind::Degenerate {
        params.variant = Variant::DegenerateEffective;
    }
    let (n_max, n_max_diag) = resolve_n_max(config, &params)?;

    let mut files = Vec::new();
    let mut diagnostics = serde_json::json!({ "cutoff": n_max_diag });

    match config.scenario {
        ScenarioKind::Transfer => {
            let traj = run_trajectory(config, &params, n_max, false)?;
            let path = out_dir.join("trajectory.csv");
            write_trajectory_csv(&traj, &path)?;
            files.push(path);
            diagnostics["norm_drift"] = serde_json::json!(traj.meta.norm_drift);
            if let Ok(inv) = inversion_time(&traj) {
                diagnostics["t_inv"] = serde_json::json!(inv.time());
            }
        }
        ScenarioKind::Boxcount => {
            let traj = run_trajectory(config, &params, n_max, false)?;
            let path = out_dir.join("trajectory.csv");
            write_trajectory_csv(&traj, &path)?;
            files.push(path);
            let series = SampledSeries::from_trajectory(&traj, "n1")?;
            let taus = default_tau_grid(&series, 25);
            let table = box_count(&series, &taus)?;
            let fit = fit_dimension(&table, WindowPolicy::default())?;
            let path = out_dir.join("boxcount.csv");
            write_boxcount_csv(&table, &fit, &path)?;
            files.push(path);
            diagnostics["fractal_fit"] = serde_json::to_value(&fit)?;
            diagnostics["norm_drift"] = serde_json::json!(traj.meta.norm_drift);
        }
        ScenarioKind::Fidelity => {
            let traj = run_trajectory(config, &params, n_max, true)?;
            let path = out_dir.join("trajectory.csv");
            write_trajectory_csv(&traj, &path)?;
            files.push(path);
            let fmax = traj
                .column("fidelity")?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            diagnostics["max_fidelity"] = serde_json::json!(fmax);
            diagnostics["norm_drift"] = serde_json::json!(traj.meta.norm_drift);
        }
        ScenarioKind::Degenerate => {
            let traj = run_trajectory(config, &params, n_max, false)?;
            let path = out_dir.join("trajectory.csv");
            write_trajectory_csv(&traj, &path)?;
            files.push(path);
            // Compare Delta N against the closed form.
            let n1 = traj.column("n1")?;
            let n3 = traj.column("n3")?;
            let j = params.j1;
            let mut worst = 0.0f64;
            let mut comparison = String::from("t,delta_n,analytic\n");
            for (k, t) in traj.times.iter().enumerate() {
                let dn = n1[k] - n3[k];
                let reference = analytic::degenerate_delta_n(j, *t);
                worst = worst.max((dn - reference).abs());
                comparison.push_str(&format!("{t:.12e},{dn:.12e},{reference:.12e}\n"));
            }
            let path = out_dir.join("delta_n.csv");
            fs::write(&path, comparison)?;
            files.push(path);
            diagnostics["max_delta_n_error"] = serde_json::json!(worst);
            diagnostics["homogeneous"] = serde_json::json!((params.j1 - params.j2).abs() < 1e-12);
        }
        ScenarioKind::SweepG => {
            let sweep = &config.sweep;
            let n_points = ((sweep.g_max - sweep.g_min) / sweep.step).round() as usize + 1;
            let grid: Vec<f64> = (0..n_points)
                .map(|k| sweep.g_min + k as f64 * sweep.step)
                .collect();
            let numerics = ScanNumerics {
                n_max,
                dt: config.numerics.dt,
                dt_sample: config.numerics.dt_sample,
            };
            let points = scan_inversion_vs_g(&params, &grid, sweep.t_max, &numerics);
            let path = out_dir.join("scan.csv");
            write_scan_csv(&points, &path)?;
            files.push(path);
            match estimate_gc(&points) {
                Ok(est) => diagnostics["gc"] = serde_json::to_value(&est)?,
                Err(e) => diagnostics["gc_error"] = serde_json::json!(e.to_string()),
            }
        }
        ScenarioKind::SweepJ2 => {
            let sweep = &config.sweep;
            let n_points = ((sweep.j2_max - sweep.j2_min) / sweep.j2_step).round() as usize + 1;
            let grid: Vec<f64> = (0..n_points)
                .map(|k| sweep.j2_min + k as f64 * sweep.j2_step)
                .collect();
            let points = amplitude_scan(params.g, params.j1, &grid, sweep.numeric, n_max.min(4))?;
            let path = out_dir.join("amplitude.csv");
            write_amplitude_csv(&points, &path)?;
            files.push(path);
            if sweep.numeric {
                let worst = points
                    .iter()
                    .filter_map(|p| p.sqrt_max_n3.map(|n| (n - p.t_analytic).abs()))
                    .fold(0.0f64, f64::max);
                diagnostics["max_amplitude_error"] = serde_json::json!(worst);
            }
        }
    }

    let manifest = RunManifest::new(
        config.clone(),
        files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect(),
        diagnostics.clone(),
    );
    files.push(manifest.write(out_dir)?);
    Ok(RunArtifacts {
        files,
        diagnostics,
    })
}

// ---------------------------------------------------------------------------
// Figure reproduction presets
// ---------------------------------------------------------------------------

/// Identifiers of the reproducible figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    Fig2a,
    Fig2b,
    Fig3a,
    Fig3b,
    Fig4,
    Fig5,
    S1,
    S2,
    S3,
}

impl std::str::FromStr for FigureId {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "fig2a" => FigureId::Fig2a,
            "fig2b" => FigureId::Fig2b,
            "fig3a" => FigureId::Fig3a,
            "fig3b" => FigureId::Fig3b,
            "fig4" => FigureId::Fig4,
            "fig5" => FigureId::Fig5,
            "s1" => FigureId::S1,
            "s2" => FigureId::S2,
            "s3" => FigureId::S3,
            other => {
                return Err(SimError::Config(format!(
                    "unknown figure id '{other}' (expected fig2a, fig2b, fig3a, fig3b, fig4, fig5, s1, s2, s3)"
                )))
            }
        })
    }
}

fn j2_grid() -> Vec<f64> {
    (0..=40).map(|k| k as f64 * 0.0005).collect()
}

fn amplitude_preset(
    out_dir: &Path,
    curves: &[(f64, f64)], // (g, j1)
    label: &str,
) -> Result<RunArtifacts> {
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut report = Vec::new();
    for &(g, j1) in curves {
        let grid = j2_grid();
        let points = amplitude_scan(g, j1, &grid, false, 2)?;
        // Numeric spot check on a few grid points.
        let spot: Vec<f64> = vec![0.0005, 0.001, 0.005, 0.01, 0.02];
        let spot_points = amplitude_scan(g, j1, &spot, true, 2)?;
        let worst = spot_points
            .iter()
            .filter_map(|p| p.sqrt_max_n3.map(|n| (n - p.t_analytic).abs()))
            .fold(0.0f64, f64::max);
        let path = out_dir.join(format!("{label}_g{g}_j1{j1}.csv"));
        write_amplitude_csv(&points, &path)?;
        files.push(path);
        report.push(serde_json::json!({
            "g": g,
            "j1": j1,
            "max_numeric_deviation": worst,
            "peak_t": points.iter().map(|p| p.t_analytic).fold(0.0f64, f64::max),
        }));
    }
    let diagnostics = serde_json::json!({ "curves": report });
    let manifest = RunManifest::new(
        serde_json::json!({ "preset": label, "curves": curves }),
        files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect(),
        diagnostics.clone(),
    );
    files.push(manifest.write(out_dir)?);
    Ok(RunArtifacts { files, diagnostics })
}

fn boxcount_preset(out_dir: &Path, g: f64, expected_dim: Option<f64>) -> Result<RunArtifacts> {
    let mut config = ScenarioConfig::new(ScenarioKind::Boxcount);
    config.params = ParamsConfig {
        omega_q: 1.0,
        g,
        j1: 0.1,
        j2: 0.1,
        variant: Variant::Full,
    };
    config.numerics.n_max = Some(12);
    config.numerics.dt = 0.02;
    config.numerics.t_end = Some(1000.0);
    let mut artifacts = run(&config, out_dir)?;
    if let Some(expected) = expected_dim {
        artifacts.diagnostics["expected_dimension"] = serde_json::json!(expected);
        let manifest = RunManifest::new(
            config,
            artifacts
                .files
                .iter()
                .filter(|p| p.file_name().unwrap() != "manifest.json")
                .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
                .collect(),
            artifacts.diagnostics.clone(),
        );
        manifest.write(out_dir)?;
    }
    Ok(artifacts)
}

fn fidelity_preset(
    out_dir: &Path,
    cases: &[(f64, f64)], // (g, j)
    initial: InitialState,
    t_end: f64,
    label: &str,
) -> Result<RunArtifacts> {
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut report = Vec::new();
    for &(g, j) in cases {
        let mut config = ScenarioConfig::new(ScenarioKind::Fidelity);
        config.params = ParamsConfig {
            omega_q: 1.0,
            g,
            j1: j,
            j2: j,
            variant: Variant::Full,
        };
        config.initial = initial;
        config.numerics.dt = 0.02;
        config.numerics.dt_sample = 0.04;
        config.numerics.t_end = Some(t_end);
        let sub = out_dir.join(format!("{label}_g{g}_j{j}"));
        let artifacts = run(&config, &sub)?;
        report.push(serde_json::json!({
            "g": g,
            "j": j,
            "max_fidelity": artifacts.diagnostics.get("max_fidelity"),
            "dir": sub.file_name().unwrap().to_string_lossy(),
        }));
        files.extend(artifacts.files);
    }
    let diagnostics = serde_json::json!({ "cases": report });
    let manifest = RunManifest::new(
        serde_json::json!({ "preset": label, "initial": initial, "t_end": t_end }),
        report.iter().map(|c| c["dir"].as_str().unwrap().to_string()).collect(),
        diagnostics.clone(),
    );
    files.push(manifest.write(out_dir)?);
    Ok(RunArtifacts { files, diagnostics })
}

/// Run the preset matching a figure's stated parameters and emit both the
/// data and a comparison report against closed-form values where they
/// exist.
pub fn reproduce(figure: FigureId, out_dir: &Path) -> Result<RunArtifacts> {
    let dir = out_dir.join(format!("{figure:?}").to_lowercase());
    match figure {
        FigureId::Fig2a => amplitude_preset(
            &dir,
            &[(0.0, 0.001), (0.0, 0.005), (0.0, 0.01)],
            "fig2a",
        ),
        FigureId::Fig2b => amplitude_preset(
            &dir,
            &[(0.0, 0.001), (0.002, 0.001), (0.01, 0.001)],
            "fig2b",
        ),
        FigureId::Fig3a => boxcount_preset(&dir, 0.9, Some(1.66)),
        FigureId::Fig3b => boxcount_preset(&dir, 0.85, None),
        FigureId::Fig4 => {
            let mut config = ScenarioConfig::new(ScenarioKind::SweepG);
            config.params = ParamsConfig {
                omega_q: 1.0,
                g: 0.0,
                j1: 0.1,
                j2: 0.1,
                variant: Variant::Full,
            };
            config.numerics.n_max = Some(12);
            config.numerics.dt = 0.05;
            run(&config, &dir)
        }
        FigureId::Fig5 => reproduce_fig5(&dir),
        FigureId::S1 => fidelity_preset(
            &dir,
            &[(0.01, 0.01), (0.01, 0.1), (0.2, 0.01), (0.2, 0.1)],
            InitialState::Superposition { p: 0.2, theta: 0.63 },
            1200.0,
            "s1",
        ),
        FigureId::S2 => fidelity_preset(
            &dir,
            &[(0.0, 0.1)],
            InitialState::Coherent { alpha: 1.0 },
            60.0,
            "s2",
        ),
        FigureId::S3 => {
            let a = fidelity_preset(
                &dir.join("sc"),
                &[(0.02, 0.01)],
                InitialState::Coherent { alpha: 1.0 },
                1200.0,
                "s3_sc",
            )?;
            let b = fidelity_preset(
                &dir.join("usc"),
                &[(0.2, 0.1)],
                InitialState::Coherent { alpha: 1.0 },
                120.0,
                "s3_usc",
            )?;
            let mut files = a.files;
            files.extend(b.files);
            Ok(RunArtifacts {
                files,
                diagnostics: serde_json::json!({ "sc": a.diagnostics, "usc": b.diagnostics }),
            })
        }
    }
}

/// Crossover curves: RWA closed form versus full-model inversion times
/// for the homogeneous case and two representative inhomogeneous J2.
fn reproduce_fig5(out_dir: &Path) -> Result<RunArtifacts> {
    fs::create_dir_all(out_dir)?;
    let grid: Vec<f64> = (0..=60).map(|k| k as f64 * 0.005).collect();
    let j1 = 0.1;
    let j2_cases = [0.1, 0.05, 0.15];
    let mut columns: Vec<Vec<Option<f64>>> = Vec::new();

    // RWA closed form for the homogeneous case.
    let rwa: Vec<Option<f64>> = grid
        .iter()
        .map(|&g| analytic::rwa_inversion_time(g, j1, 0.1).ok().and_then(|i| i.time()))
        .collect();
    columns.push(rwa);

    let numerics = ScanNumerics {
        n_max: 10,
        dt: 0.02,
        dt_sample: 0.1,
    };
    for &j2 in &j2_cases {
        let params = SystemParams::full(1.0, 0.0, j1, j2)?;
        let points = scan_inversion_vs_g(&params, &grid, 500.0, &numerics);
        columns.push(points.iter().map(|p| p.t_inv).collect());
    }

    let path = out_dir.join("fig5.csv");
    let mut text = String::from("g,t_inv_rwa,t_inv_full_j2_0.1,t_inv_full_j2_0.05,t_inv_full_j2_0.15\n");
    for (k, &g) in grid.iter().enumerate() {
        text.push_str(&format!("{g:.12e}"));
        for col in &columns {
            match col[k] {
                Some(t) => text.push_str(&format!(",{t:.12e}")),
                None => text.push(','),
            }
        }
        text.push('\n');
    }
    fs::write(&path, text)?;

    let diagnostics = serde_json::json!({
        "j1": j1,
        "j2_cases": j2_cases,
        "crossover_g": (j1 * j1 + 0.1 * 0.1_f64).sqrt(),
    });
    let manifest = RunManifest::new(
        serde_json::json!({ "preset": "fig5", "j1": j1, "j2_cases": j2_cases }),
        vec!["fig5.csv".into()],
        diagnostics.clone(),
    );
    let mut files = vec![path];
    files.push(manifest.write(out_dir)?);
    Ok(RunArtifacts { files, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_strictness() {
        let text = r#"{ "scenario": "transfer", "params": { "g": 0.9, "j1": 0.1, "j2": 0.1 } }"#;
        let config: ScenarioConfig = serde_json::from_str(text).unwrap();
        assert_eq!(config.scenario, ScenarioKind::Transfer);
        assert_eq!(config.params.omega_q, 1.0);
        assert_eq!(config.numerics.dt, 0.01);
        // Unknown keys are rejected.
        let bad = r#"{ "scenario": "transfer", "params": { "gg": 0.9 } }"#;
        assert!(serde_json::from_str::<ScenarioConfig>(bad).is_err());
        let bad = r#"{ "scenario": "transfer", "typo": 1 }"#;
        assert!(serde_json::from_str::<ScenarioConfig>(bad).is_err());
    }

    #[test]
    fn figure_ids_parse() {
        assert_eq!("fig4".parse::<FigureId>().unwrap(), FigureId::Fig4);
        assert_eq!("S2".parse::<FigureId>().unwrap(), FigureId::S2);
        assert!("fig9".parse::<FigureId>().is_err());
    }

    #[test]
    fn transfer_run_writes_artifacts() {
        let dir = std::env::temp_dir().join("cavity-array-test-transfer");
        let _ = fs::remove_dir_all(&dir);
        let mut config = ScenarioConfig::new(ScenarioKind::Transfer);
        config.params.g = 0.3;
        config.params.j1 = 0.1;
        config.params.j2 = 0.1;
        config.numerics.n_max = Some(3);
        config.numerics.t_end = Some(5.0);
        let artifacts = run(&config, &dir).unwrap();
        for f in &artifacts.files {
            assert!(f.exists(), "{f:?} missing");
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        assert!(manifest["outputs"].as_array().unwrap().len() >= 1);
        let _ = fs::remove_dir_all(&dir);
    }
}
