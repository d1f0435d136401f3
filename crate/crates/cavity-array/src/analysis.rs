//! Trajectory post-processing: modified box-counting fractal dimension,
//! population-inversion detection, and coupling scans.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic;
use crate::error::SimError;
use crate::fock::{build_space, InitialState};
use crate::model::{SystemParams, Variant};

use crate::propagate::{
    evolve, evolve_opts, exact_for, trotter_for, EvolveOptions, ObservableRegistry, Trajectory,
};
use crate::Result;

// ---------------------------------------------------------------------------
// Box counting
// ---------------------------------------------------------------------------

/// A uniformly sampled real-valued series, `t_k = k * dt`.
#[derive(Debug, Clone)]
pub struct SampledSeries {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl SampledSeries {
    pub fn from_trajectory(traj: &Trajectory, column: &str) -> Result<Self> {
        Ok(SampledSeries {
            dt: traj.dt_sample(),
            values: traj.column(column)?,
        })
    }

    /// Total covered time `(len - 1) * dt`.
    pub fn span(&self) -> f64 {
        if self.values.len() < 2 {
            0.0
        } else {
            (self.values.len() - 1) as f64 * self.dt
        }
    }
}

/// `M(tau) = sum_i Delta_i / tau` per segment size tau.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxCountTable {
    pub taus: Vec<f64>,
    pub m_values: Vec<f64>,
}

/// Minimum number of segments the smallest tau must produce.
const MIN_SEGMENTS: usize = 8;

/// Average-excursion box count.
///
/// For each tau: partition `[0, T]` into `floor(T/tau)` segments,
/// take `Delta_i = max - min` of the samples inside segment i (segment
/// boundaries included) and sum `Delta_i / tau`.
pub fn box_count(series: &SampledSeries, taus: &[f64]) -> Result<BoxCountTable> {
    let t_total = series.span();
    let dt = series.dt;
    if taus.is_empty() {
        return Err(SimError::DegenerateWindow("empty tau grid".into()));
    }
    let mut sorted = taus.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &tau in &sorted {
        if tau < 2.0 * dt - 1e-12 || tau > t_total / 4.0 + 1e-12 {
            return Err(SimError::TauOutOfRange {
                tau,
                min: 2.0 * dt,
                max: t_total / 4.0,
            });
        }
    }
    let smallest = sorted[0];
    let have = (t_total / smallest).floor() as usize;
    if have < MIN_SEGMENTS {
        return Err(SimError::SeriesTooShort {
            need: MIN_SEGMENTS,
            have,
        });
    }

    let mut m_values = Vec::with_capacity(sorted.len());
    for &tau in &sorted {
        let n_seg = (t_total / tau).floor() as usize;
        let mut m = 0.0;
        for i in 0..n_seg {
            let t_lo = i as f64 * tau;
            let t_hi = (i + 1) as f64 * tau;
            // Boundary samples belong to both neighboring segments.
            let k_lo = ((t_lo / dt) - 1e-9).ceil().max(0.0) as usize;
            let k_hi = (((t_hi / dt) + 1e-9).floor() as usize).min(series.values.len() - 1);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &v in &series.values[k_lo..=k_hi] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            m += (hi - lo) / tau;
        }
        m_values.push(m);
    }
    Ok(BoxCountTable {
        taus: sorted,
        m_values,
    })
}

/// Geometric tau grid over `[4 dt, T/8]` (default box-count abscissae).
pub fn default_tau_grid(series: &SampledSeries, points: usize) -> Vec<f64> {
    let lo = 4.0 * series.dt;
    let hi = series.span() / 8.0;
    geometric_grid(lo, hi, points)
}

fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

/// Window selection for the log-log fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum WindowPolicy {
    /// Longest contiguous run of local slopes whose spread stays below
    /// `max_slope_spread`, restricted to `tau >= tau_floor`; falls back
    /// to the minimum-spread run of the minimal admissible length when
    /// no run qualifies.
    ///
    /// The floor masks out segments shorter than the fundamental cavity
    /// period: below it any sampled observable looks smooth and the local
    /// slope sits near 1 regardless of the longer-time structure, which
    /// is the regime the power-law fit must exclude.
    Auto {
        max_slope_spread: f64,
        tau_floor: f64,
    },
    /// Fixed tau window (inclusive).
    Fixed { tau_min: f64, tau_max: f64 },
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy::Auto {
            max_slope_spread: 0.5,
            tau_floor: 2.0 * std::f64::consts::PI,
        }
    }
}

/// Fitted fractal dimension with diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FractalFit {
    pub dimension: f64,
    pub fit_window: (f64, f64),
    pub r_squared: f64,
    /// `-d(log M)/d(log tau)` between adjacent tau points.
    pub local_slopes: Vec<f64>,
}

/// Minimum number of tau points inside a fit window.
const MIN_WINDOW_POINTS: usize = 5;

/// Least-squares `log M` vs `log tau` slope; dimension = -slope.
pub fn fit_dimension(table: &BoxCountTable, policy: WindowPolicy) -> Result<FractalFit> {
    let n = table.taus.len();
    if n < MIN_WINDOW_POINTS {
        return Err(SimError::DegenerateWindow(format!(
            "need at least {MIN_WINDOW_POINTS} tau points, have {n}"
        )));
    }
    if table.m_values.iter().any(|&m| m <= 0.0) {
        return Err(SimError::DegenerateSeries);
    }
    let log_tau: Vec<f64> = table.taus.iter().map(|t| t.ln()).collect();
    let log_m: Vec<f64> = table.m_values.iter().map(|m| m.ln()).collect();

    let local_slopes: Vec<f64> = (0..n - 1)
        .map(|i| -(log_m[i + 1] - log_m[i]) / (log_tau[i + 1] - log_tau[i]))
        .collect();

    let (start, end) = match policy {
        WindowPolicy::Fixed { tau_min, tau_max } => {
            let start = table.taus.iter().position(|&t| t >= tau_min - 1e-12);
            let end = table.taus.iter().rposition(|&t| t <= tau_max + 1e-12);
            match (start, end) {
                (Some(s), Some(e)) if e >= s + MIN_WINDOW_POINTS - 1 => (s, e),
                _ => {
                    return Err(SimError::DegenerateWindow(format!(
                        "fixed window [{tau_min}, {tau_max}] holds fewer than {MIN_WINDOW_POINTS} points"
                    )))
                }
            }
        }
        WindowPolicy::Auto {
            max_slope_spread,
            tau_floor,
        } => {
            // Clamp the floor so at least a minimal window remains.
            let first = table
                .taus
                .iter()
                .position(|&t| t >= tau_floor)
                .unwrap_or(n)
                .min(n - MIN_WINDOW_POINTS);
            let (s, e) = auto_window(
                &local_slopes[first..],
                max_slope_spread,
                MIN_WINDOW_POINTS - 1,
            );
            (first + s, first + e)
        }
    };

    // Fit over tau points start..=end.
    let xs = &log_tau[start..=end];
    let ys = &log_m[start..=end];
    let (slope, intercept) = least_squares(xs, ys);
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
    for (&x, &y) in xs.iter().zip(ys) {
        let fit = slope * x + intercept;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    Ok(FractalFit {
        dimension: -slope,
        fit_window: (table.taus[start], table.taus[end]),
        r_squared,
        local_slopes,
    })
}

/// Stable power-law run of adjacent local slopes: among maximal runs with
/// spread below the threshold and at least `min_run` slopes, the one
/// reaching the largest tau wins (longest on ties). Returns (start, end)
/// as indices into the tau grid (end inclusive).
///
/// Preferring the largest-tau run reads each curve's characteristic
/// plateau: a quasi-periodic series transits quickly to the covering
/// regime (slope 2), while a fractal series holds a long non-integer
/// scaling regime below its saturation scale.
fn auto_window(local_slopes: &[f64], max_spread: f64, min_run: usize) -> (usize, usize) {
    let n = local_slopes.len();
    let spread_of = |i: usize, j: usize| {
        let window = &local_slopes[i..=j];
        let lo = window.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let mut best: Option<(usize, usize)> = None;
    for i in 0..n {
        // Maximal qualifying run starting at i.
        let mut j = i;
        while j + 1 < n && spread_of(i, j + 1) <= max_spread {
            j += 1;
        }
        if spread_of(i, j) > max_spread || j - i + 1 < min_run {
            continue;
        }
        let better = match best {
            None => true,
            Some((bi, bj)) => j > bj || (j == bj && j - i > bj - bi),
        };
        if better {
            best = Some((i, j));
        }
    }
    match best {
        Some((i, j)) => (i, j + 1),
        None => {
            // Fall back to the min-spread run of the minimal length.
            let mut best_i = 0;
            let mut best_spread = f64::INFINITY;
            if n >= min_run {
                for i in 0..=n - min_run {
                    let s = spread_of(i, i + min_run - 1);
                    if s < best_spread {
                        best_spread = s;
                        best_i = i;
                    }
                }
            }
            (best_i, (best_i + min_run).min(n))
        }
    }
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

// ---------------------------------------------------------------------------
// Inversion detection
// ---------------------------------------------------------------------------

/// First time at which `N_3 > N_1`, interpolated between samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Inversion {
    At {
        t_inv: f64,
        /// Largest |Delta N| at the two bracketing samples.
        crossing_margin: f64,
    },
    NoInversion,
}

impl Inversion {
    pub fn time(&self) -> Option<f64> {
        match self {
            Inversion::At { t_inv, .. } => Some(*t_inv),
            Inversion::NoInversion => None,
        }
    }
}

/// Detect the first sign change of `Delta N(t) = N_1(t) - N_3(t)` and
/// refine it by linear interpolation.
pub fn inversion_time(traj: &Trajectory) -> Result<Inversion> {
    let n1 = traj.column("n1")?;
    let n3 = traj.column("n3")?;
    for k in 1..traj.times.len() {
        let prev = n1[k - 1] - n3[k - 1];
        let cur = n1[k] - n3[k];
        if cur < 0.0 && prev >= 0.0 {
            let frac = if (prev - cur).abs() > 0.0 { prev / (prev - cur) } else { 0.0 };
            let t_inv = traj.times[k - 1] + frac * (traj.times[k] - traj.times[k - 1]);
            return Ok(Inversion::At {
                t_inv,
                crossing_margin: prev.abs().max(cur.abs()),
            });
        }
    }
    Ok(Inversion::NoInversion)
}

// ---------------------------------------------------------------------------
// Coupling scans
// ---------------------------------------------------------------------------

/// Numerics knobs shared by the scan drivers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScanNumerics {
    pub n_max: usize,
    pub dt: f64,
    pub dt_sample: f64,
}

impl Default for ScanNumerics {
    fn default() -> Self {
        ScanNumerics {
            n_max: 12,
            dt: 0.05,
            dt_sample: 0.1,
        }
    }
}

/// One point of an inversion-time scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanPoint {
    pub g: f64,
    /// Inversion time when observed before `t_max`.
    pub t_inv: Option<f64>,
    /// True when no inversion occurred before `t_max`.
    pub censored: bool,
    /// Per-point propagation failure, if any.
    pub error: Option<String>,
}

fn scan_point(params: &SystemParams, numerics: &ScanNumerics, t_max: f64) -> Result<ScanPoint> {
    let space = build_space(numerics.n_max)?;
    let state0 = InitialState::SinglePhoton.build(space)?;
    let prop = trotter_for(space, params, numerics.dt)?;
    let registry = ObservableRegistry::standard(space);
    let idx_n1 = registry.index_of("n1").expect("standard registry");
    let idx_n3 = registry.index_of("n3").expect("standard registry");
    let stop = move |row: &[f64]| row[idx_n3] > row[idx_n1];
    let traj = evolve_opts(
        &state0,
        &prop,
        params,
        t_max,
        numerics.dt_sample,
        &registry,
        &EvolveOptions {
            stop: Some(&stop),
            snapshot_every: None,
        },
    )?;
    let inv = inversion_time(&traj)?;
    Ok(match inv {
        Inversion::At { t_inv, .. } => ScanPoint {
            g: params.g,
            t_inv: Some(t_inv),
            censored: false,
            error: None,
        },
        Inversion::NoInversion => ScanPoint {
            g: params.g,
            t_inv: None,
            censored: true,
            error: None,
        },
    })
}

/// Inversion time versus cavity-qubit coupling, sweep-parallel.
///
/// Each grid point evolves the full trajectory (with an early stop at the
/// first inversion) and records `T_inv`, a censored flag when no inversion
/// occurs before `t_max`, or a per-point error. Results come back in grid
/// order regardless of completion order.
pub fn scan_inversion_vs_g(
    params_base: &SystemParams,
    g_grid: &[f64],
    t_max: f64,
    numerics: &ScanNumerics,
) -> Vec<ScanPoint> {
    g_grid
        .par_iter()
        .map(|&g| {
            let mut params = *params_base;
            params.g = g;
            match params
                .validate()
                .and_then(|_| scan_point(&params, numerics, t_max))
            {
                Ok(point) => point,
                Err(e) => ScanPoint {
                    g,
                    t_inv: None,
                    censored: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Critical-coupling estimate from an inversion-time scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcEstimate {
    pub g_c: f64,
    /// Largest finite inversion time; `None` when the spike is censored.
    pub t_inv_max: Option<f64>,
    /// Number of censored points treated as +infinity.
    pub censored_points: usize,
}

/// Locate the T_inv spike: argmax over the grid with censored points
/// treated as +infinity (the middle of the longest censored run wins).
/// A spike at the grid boundary is an error asking for a wider grid.
pub fn estimate_gc(points: &[ScanPoint]) -> Result<GcEstimate> {
    let usable: Vec<&ScanPoint> = points.iter().filter(|p| p.error.is_none()).collect();
    if usable.len() < 2 {
        return Err(SimError::GridTooSmall(usable.len()));
    }
    let censored_points = usable.iter().filter(|p| p.censored).count();

    let (idx, t_inv_max) = if censored_points > 0 {
        // Longest contiguous censored run; take its midpoint.
        let mut best: Option<(usize, usize)> = None;
        let mut run_start = None;
        for (i, p) in usable.iter().enumerate() {
            if p.censored {
                run_start.get_or_insert(i);
            }
            let run_ends = !p.censored || i == usable.len() - 1;
            if run_ends {
                if let Some(s) = run_start.take() {
                    let e = if p.censored { i } else { i - 1 };
                    if best.map(|(bs, be)| e - s > be - bs).unwrap_or(true) {
                        best = Some((s, e));
                    }
                }
            }
        }
        let (s, e) = best.expect("censored run exists");
        ((s + e) / 2, None)
    } else {
        let mut best_idx = 0;
        let mut best_t = f64::NEG_INFINITY;
        for (i, p) in usable.iter().enumerate() {
            if let Some(t) = p.t_inv {
                if t > best_t {
                    best_t = t;
                    best_idx = i;
                }
            }
        }
        (best_idx, Some(best_t))
    };

    if idx == 0 || idx == usable.len() - 1 {
        return Err(SimError::SpikeAtBoundary(usable[idx].g));
    }
    Ok(GcEstimate {
        g_c: usable[idx].g,
        t_inv_max,
        censored_points,
    })
}

// ---------------------------------------------------------------------------
// Amplitude scan (Eq.-2 curves)
// ---------------------------------------------------------------------------

/// One point of a transfer-amplitude scan over J2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmplitudePoint {
    pub j2: f64,
    /// Closed-form amplitude `T`.
    pub t_analytic: f64,
    /// `sqrt(max_t N_3)` from a numerical RWA evolution, when requested.
    pub sqrt_max_n3: Option<f64>,
}

/// Closed-form transfer amplitude versus J2, optionally cross-checked by
/// numerically evolving the fully rotating-wave model and extracting
/// `sqrt(max_t N_3)`.
pub fn amplitude_scan(
    g: f64,
    j1: f64,
    j2_grid: &[f64],
    numeric: bool,
    n_max: usize,
) -> Result<Vec<AmplitudePoint>> {
    j2_grid
        .par_iter()
        .map(|&j2| {
            let t_analytic = if g == 0.0 && j1 == 0.0 && j2 == 0.0 {
                0.0
            } else {
                analytic::rwa_amplitude(g, j1, j2)?
            };
            let sqrt_max_n3 = if numeric {
                Some(numeric_max_n3(g, j1, j2, n_max)?.sqrt())
            } else {
                None
            };
            Ok(AmplitudePoint {
                j2,
                t_analytic,
                sqrt_max_n3,
            })
        })
        .collect()
}

/// max_t N_3 under the fully rotating-wave model over three periods.
fn numeric_max_n3(g: f64, j1: f64, j2: f64, n_max: usize) -> Result<f64> {
    if g == 0.0 && j1 == 0.0 && j2 == 0.0 {
        return Ok(0.0);
    }
    let lambda = (g * g + j1 * j1 + j2 * j2).sqrt();
    let period = 2.0 * std::f64::consts::PI / lambda;
    let dt_sample = period / 1000.0;
    let t_end = 3.0 * period;
    let space = build_space(n_max)?;
    let params = SystemParams::new(1.0, g, j1, j2, Variant::FullRwa)?;
    let state0 = InitialState::SinglePhoton.build(space)?;
    let prop = exact_for(space, &params, dt_sample)?;
    let registry = ObservableRegistry::standard(space);
    let traj = evolve(&state0, &prop, &params, t_end, dt_sample, &registry)?;
    Ok(traj
        .column("n3")?
        .into_iter()
        .fold(0.0f64, f64::max))
}

/// Expectation values needed by figure-style comparisons: run one full
/// trajectory of the configured variant and return it.
pub fn transfer_trajectory(
    params: &SystemParams,
    initial: InitialState,
    numerics: &ScanNumerics,
    t_end: f64,
) -> Result<Trajectory> {
    let space = build_space(numerics.n_max)?;
    let state0 = initial.build(space)?;
    let prop = trotter_for(space, params, numerics.dt)?;
    let registry = ObservableRegistry::standard(space);
    evolve(&state0, &prop, params, t_end, numerics.dt_sample, &registry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line_series(c: f64, dt: f64, n: usize) -> SampledSeries {
        SampledSeries {
            dt,
            values: (0..n).map(|k| c * k as f64 * dt).collect(),
        }
    }

    #[test]
    fn box_count_straight_line() {
        let series = line_series(0.7, 0.01, 10_001); // T = 100
        // Sample-aligned taus make Delta_i = c tau exact.
        let taus = [0.4, 0.8, 1.6, 2.4, 4.0, 6.0, 8.0, 12.0];
        let table = box_count(&series, &taus).unwrap();
        for (&tau, &m) in table.taus.iter().zip(&table.m_values) {
            let n_seg = (series.span() / tau).floor();
            assert_abs_diff_eq!(m, n_seg * 0.7, epsilon = 1e-6 * m.abs());
        }
        let fit = fit_dimension(&table, WindowPolicy::default()).unwrap();
        assert!(
            (fit.dimension - 1.0).abs() < 0.05,
            "line dimension {} != 1",
            fit.dimension
        );
    }

    #[test]
    fn box_count_fast_periodic_curve() {
        // Period 0.5 sampled at dt = 0.005 over T = 200; tau >> period
        // covers the peak-to-peak band: M ~ A T / tau^2, dimension 2.
        let dt = 0.005;
        let n = 40_001;
        let series = SampledSeries {
            dt,
            values: (0..n)
                .map(|k| (2.0 * std::f64::consts::PI * (k as f64 * dt) / 0.5).sin())
                .collect(),
        };
        let taus = geometric_grid(2.0, 40.0, 12);
        let table = box_count(&series, &taus).unwrap();
        let fit = fit_dimension(
            &table,
            WindowPolicy::Fixed {
                tau_min: 2.0,
                tau_max: 40.0,
            },
        )
        .unwrap();
        assert!(
            (fit.dimension - 2.0).abs() < 0.05,
            "periodic dimension {} != 2",
            fit.dimension
        );
    }

    #[test]
    fn box_count_scaling_invariance() {
        let dt = 0.01;
        let n = 20_001;
        let base = SampledSeries {
            dt,
            values: (0..n)
                .map(|k| {
                    let t = k as f64 * dt;
                    (1.3 * t).sin() + 0.4 * (7.7 * t).cos()
                })
                .collect(),
        };
        let scaled = SampledSeries {
            dt,
            values: base.values.iter().map(|v| 5.0 * v).collect(),
        };
        let taus = geometric_grid(0.5, 20.0, 10);
        let t1 = box_count(&base, &taus).unwrap();
        let t2 = box_count(&scaled, &taus).unwrap();
        for (a, b) in t1.m_values.iter().zip(&t2.m_values) {
            assert_abs_diff_eq!(5.0 * a, *b, epsilon = 1e-9 * b.abs());
        }
        let f1 = fit_dimension(&t1, WindowPolicy::default()).unwrap();
        let f2 = fit_dimension(&t2, WindowPolicy::default()).unwrap();
        assert_abs_diff_eq!(f1.dimension, f2.dimension, epsilon = 1e-9);
    }

    #[test]
    fn box_count_rejects_bad_tau() {
        let series = line_series(1.0, 0.1, 1001);
        assert!(matches!(
            box_count(&series, &[0.1]),
            Err(SimError::TauOutOfRange { .. })
        ));
        assert!(matches!(
            box_count(&series, &[60.0]),
            Err(SimError::TauOutOfRange { .. })
        ));
    }

    #[test]
    fn constant_series_rejected_by_fit() {
        let series = SampledSeries {
            dt: 0.1,
            values: vec![2.5; 2001],
        };
        let taus = geometric_grid(1.0, 25.0, 8);
        let table = box_count(&series, &taus).unwrap();
        assert!(matches!(
            fit_dimension(&table, WindowPolicy::default()),
            Err(SimError::DegenerateSeries)
        ));
    }

    #[test]
    fn weierstrass_dimension_recovered() {
        // W(t) = sum_k b^{-kH} cos(2 pi b^k t) has box dimension 2 - H.
        let b: f64 = 2.0;
        let h = 0.5;
        let k_max = 7;
        let dt = 0.002;
        let n = 25_001; // T = 50
        let series = SampledSeries {
            dt,
            values: (0..n)
                .map(|i| {
                    let t = i as f64 * dt;
                    (0..=k_max)
                        .map(|k| {
                            b.powf(-(k as f64) * h)
                                * (2.0 * std::f64::consts::PI * b.powi(k) * t).cos()
                        })
                        .sum()
                })
                .collect(),
        };
        // Fractal scales live between 1/b^k_max and 1.
        let taus = geometric_grid(0.012, 0.8, 14);
        let table = box_count(&series, &taus).unwrap();
        let fit = fit_dimension(
            &table,
            WindowPolicy::Fixed {
                tau_min: 0.012,
                tau_max: 0.8,
            },
        )
        .unwrap();
        let expected = 2.0 - h;
        assert!(
            (fit.dimension - expected).abs() < 0.1,
            "weierstrass dimension {} vs expected {}",
            fit.dimension,
            expected
        );
    }

    #[test]
    fn line_plus_noise_dimension_near_one() {
        // Deterministic pseudo-noise on top of a line.
        let dt = 0.01;
        let n = 20_001;
        let mut rng = 0x853c49e6748fea9bu64;
        let series = SampledSeries {
            dt,
            values: (0..n)
                .map(|k| {
                    rng ^= rng << 13;
                    rng ^= rng >> 7;
                    rng ^= rng << 17;
                    let noise = (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                    2.0 * k as f64 * dt + 1e-4 * noise
                })
                .collect(),
        };
        let taus = geometric_grid(0.5, 25.0, 10);
        let table = box_count(&series, &taus).unwrap();
        let fit = fit_dimension(&table, WindowPolicy::default()).unwrap();
        assert!(
            fit.dimension >= 0.98 && fit.dimension <= 1.1,
            "noisy line dimension {}",
            fit.dimension
        );
    }

    #[test]
    fn inversion_time_matches_closed_form_hopping_chain() {
        // RWA hopping chain (g = 0): Delta N = cos(sqrt(2) J t).
        let params = SystemParams::full_rwa(1.0, 0.0, 0.1, 0.1).unwrap();
        let numerics = ScanNumerics {
            n_max: 2,
            dt: 0.01,
            dt_sample: 0.05,
        };
        let traj = transfer_trajectory(&params, InitialState::SinglePhoton, &numerics, 30.0).unwrap();
        let inv = inversion_time(&traj).unwrap();
        let expect = std::f64::consts::PI / (2.0 * std::f64::consts::SQRT_2 * 0.1);
        match inv {
            Inversion::At { t_inv, .. } => {
                assert!((t_inv - expect).abs() <= 2.0 * numerics.dt_sample)
            }
            Inversion::NoInversion => panic!("expected inversion"),
        }
    }

    #[test]
    fn rwa_beyond_crossover_never_inverts() {
        let params = SystemParams::full_rwa(1.0, 0.2, 0.1, 0.1).unwrap();
        let numerics = ScanNumerics {
            n_max: 2,
            dt: 0.01,
            dt_sample: 0.1,
        };
        let traj = transfer_trajectory(&params, InitialState::SinglePhoton, &numerics, 200.0).unwrap();
        assert_eq!(inversion_time(&traj).unwrap(), Inversion::NoInversion);
    }

    #[test]
    fn estimate_gc_picks_spike_and_flags_boundaries() {
        let mk = |g: f64, t: Option<f64>, censored: bool| ScanPoint {
            g,
            t_inv: t,
            censored,
            error: None,
        };
        // Finite spike in the interior.
        let points: Vec<ScanPoint> = (0..9)
            .map(|i| {
                let g = i as f64 * 0.1;
                let t = 10.0 + if i == 5 { 100.0 } else { 0.0 };
                mk(g, Some(t), false)
            })
            .collect();
        let est = estimate_gc(&points).unwrap();
        assert_abs_diff_eq!(est.g_c, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(est.t_inv_max.unwrap(), 110.0, epsilon = 1e-12);

        // Censored run wins over finite values.
        let points: Vec<ScanPoint> = (0..9)
            .map(|i| {
                let g = i as f64 * 0.1;
                if (4..=6).contains(&i) {
                    mk(g, None, true)
                } else {
                    mk(g, Some(10.0), false)
                }
            })
            .collect();
        let est = estimate_gc(&points).unwrap();
        assert_abs_diff_eq!(est.g_c, 0.5, epsilon = 1e-12);
        assert_eq!(est.censored_points, 3);
        assert!(est.t_inv_max.is_none());

        // Spike at the boundary.
        let points: Vec<ScanPoint> = (0..5)
            .map(|i| mk(i as f64 * 0.1, Some(10.0 + i as f64), false))
            .collect();
        assert!(matches!(
            estimate_gc(&points),
            Err(SimError::SpikeAtBoundary(_))
        ));

        // Single point.
        assert!(matches!(
            estimate_gc(&points[..1]),
            Err(SimError::GridTooSmall(1))
        ));
    }

    #[test]
    fn amplitude_scan_analytic_profile() {
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.001).collect();
        let points = amplitude_scan(0.0, 0.001, &grid, false, 2).unwrap();
        // J2 = 0 -> T = 0; peak T = 1 at J2 = J1.
        assert_abs_diff_eq!(points[0].t_analytic, 0.0, epsilon = 1e-14);
        let peak = points
            .iter()
            .max_by(|a, b| a.t_analytic.partial_cmp(&b.t_analytic).unwrap())
            .unwrap();
        assert_abs_diff_eq!(peak.j2, 0.001, epsilon = 1e-12);
        assert_abs_diff_eq!(peak.t_analytic, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn amplitude_scan_numeric_agrees_with_closed_form() {
        let grid = [0.0005, 0.001, 0.002];
        let points = amplitude_scan(0.002, 0.001, &grid, true, 2).unwrap();
        for p in &points {
            let numeric = p.sqrt_max_n3.unwrap();
            assert!(
                (numeric - p.t_analytic).abs() < 1e-3,
                "J2 = {}: numeric {} vs analytic {}",
                p.j2,
                numeric,
                p.t_analytic
            );
        }
    }
}
