//! The solution operator S_α(t) on a periodic grid, realized as the Fourier
//! multiplier s(t, |ξ|²).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frac::{ContourSpec, FracParams, TimeMesh};
use crate::relaxation::{accurate_mesh, solve_contour, VolterraSolver};

/// Periodic box [−L, L)^dim with `points_per_axis` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    half_length: f64,
}

impl Grid {
    pub fn new(dim: usize, points_per_axis: usize, half_length: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Input(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if points_per_axis < 64 || !points_per_axis.is_power_of_two() {
            return Err(Error::Input(format!(
                "points_per_axis must be a power of two >= 64, got {points_per_axis}"
            )));
        }
        if !(half_length > 0.0) || !half_length.is_finite() {
            return Err(Error::Input(format!("box half length must be > 0, got {half_length}")));
        }
        Ok(Self {
            dim,
            n: points_per_axis,
            half_length,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.dx()
    }

    /// Coordinates of the flat (row-major) index.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.coord(idx), 0.0]
        } else {
            [self.coord(idx / self.n), self.coord(idx % self.n)]
        }
    }

    pub fn radius(&self, idx: usize) -> f64 {
        let p = self.point(idx);
        (p[0] * p[0] + p[1] * p[1]).sqrt()
    }

    /// ξ = π m / L with m the signed FFT frequency of index i.
    pub fn wavenumber(&self, i: usize) -> f64 {
        let m = if i <= self.n / 2 {
            i as f64
        } else {
            i as f64 - self.n as f64
        };
        PI * m / self.half_length
    }

    /// |ξ|² for every flat Fourier index.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let xi2: Vec<f64> = (0..self.n).map(|i| self.wavenumber(i).powi(2)).collect();
        if self.dim == 1 {
            xi2
        } else {
            (0..self.len())
                .map(|idx| xi2[idx / self.n] + xi2[idx % self.n])
                .collect()
        }
    }
}

/// Real values on a [`Grid`], row-major in 2D.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Input(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite field value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x)` with x the point coordinates (second entry 0 in 1D).
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        Self::new(grid, (0..grid.len()).map(|i| f(grid.point(i))).collect())
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// ∫ f over the box (cell-volume rectangle rule, exact for periodic trig polynomials).
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }
}

/// Discrete L^p norm; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(field: &Field, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("norm exponent must be >= 1, got {p}")));
    }
    let v = field.values();
    if p.is_infinite() {
        return Ok(v.iter().fold(0.0f64, |a, x| a.max(x.abs())));
    }
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    // scaled sum avoids overflow for large p
    let sum: f64 = v.iter().map(|x| (x.abs() / scale).powf(p)).sum();
    Ok(scale * (sum * field.grid().cell_volume()).powf(1.0 / p))
}

/// Forward and inverse transforms for a grid (unnormalized forward).
#[derive(Clone)]
pub struct Fourier {
    grid: Grid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("grid", &self.grid).finish()
    }
}

impl Fourier {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            fwd: planner.plan_fft_forward(grid.points_per_axis()),
            inv: planner.plan_fft_inverse(grid.points_per_axis()),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.points_per_axis();
        if self.grid.dim() == 1 {
            plan.process(data);
            return;
        }
        data.par_chunks_mut(n).for_each(|row| plan.process(row));
        transpose(data, n);
        data.par_chunks_mut(n).for_each(|row| plan.process(row));
        transpose(data, n);
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.fwd);
        data
    }

    /// Inverse transform; returns the real part and max|Im|/max|Re|.
    pub fn inverse(&self, mut data: Vec<Complex64>) -> (Vec<f64>, f64) {
        self.transform(&mut data, &self.inv);
        let scale = 1.0 / data.len() as f64;
        let mut max_re = 0.0f64;
        let mut max_im = 0.0f64;
        let re = data
            .iter()
            .map(|c| {
                max_re = max_re.max(c.re.abs());
                max_im = max_im.max(c.im.abs());
                c.re * scale
            })
            .collect();
        let residue = if max_re > 0.0 { max_im / max_re } else { max_im };
        (re, residue)
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Table of s(t, μ) for requested times and eigenvalues: `table[μ][t]`.
pub trait Multiplier: Send + Sync {
    fn table(&self, times: &[f64], mus: &[f64]) -> Result<Vec<Vec<f64>>>;
}

/// Volterra-based multiplier, one relaxation solve per eigenvalue on a shared mesh.
#[derive(Debug, Clone)]
pub struct VolterraMultiplier {
    params: FracParams,
    mesh: MeshChoice,
}

#[derive(Debug, Clone)]
enum MeshChoice {
    Auto { intervals: usize },
    Fixed(TimeMesh),
}

impl VolterraMultiplier {
    /// Graded accurate mesh on [0, max t] with the requested times merged in.
    pub fn new(params: FracParams) -> Self {
        Self::with_intervals(params, 800)
    }

    pub fn with_intervals(params: FracParams, intervals: usize) -> Self {
        Self {
            params,
            mesh: MeshChoice::Auto { intervals },
        }
    }

    /// Fixed mesh; every requested time must be one of its nodes.
    pub fn on_mesh(params: FracParams, mesh: TimeMesh) -> Self {
        Self {
            params,
            mesh: MeshChoice::Fixed(mesh),
        }
    }
}

impl Multiplier for VolterraMultiplier {
    fn table(&self, times: &[f64], mus: &[f64]) -> Result<Vec<Vec<f64>>> {
        let t_max = times.iter().copied().fold(0.0, f64::max);
        if t_max == 0.0 {
            return Ok(vec![vec![1.0; times.len()]; mus.len()]);
        }
        let mesh = match &self.mesh {
            MeshChoice::Auto { intervals } => accurate_mesh(t_max, *intervals)?.with_times(times),
            MeshChoice::Fixed(m) => m.clone(),
        };
        let idx = times
            .iter()
            .map(|&t| {
                mesh.position(t)
                    .ok_or_else(|| Error::Input(format!("time {t} is not a node of the multiplier mesh")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let solver = VolterraSolver::new(&self.params, &mesh)?;
        Ok(mus
            .par_iter()
            .map(|&mu| {
                let s = solver.solve(mu);
                idx.iter().map(|&i| s[i]).collect()
            })
            .collect())
    }
}

/// Contour-quadrature multiplier with the default contour for each time.
#[derive(Debug, Clone)]
pub struct ContourMultiplier {
    params: FracParams,
}

impl ContourMultiplier {
    pub fn new(params: FracParams) -> Self {
        Self { params }
    }
}

impl Multiplier for ContourMultiplier {
    fn table(&self, times: &[f64], mus: &[f64]) -> Result<Vec<Vec<f64>>> {
        mus.par_iter()
            .map(|&mu| {
                times
                    .iter()
                    .map(|&t| {
                        if t == 0.0 {
                            Ok(1.0)
                        } else {
                            Ok(solve_contour(mu, t, &self.params, &ContourSpec::for_time(t)?)?.value)
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Multiplier from a closure s(t, μ); used for oracles and test doubles.
pub struct FnMultiplier<F>(pub F);

impl<F: Fn(f64, f64) -> f64 + Send + Sync> Multiplier for FnMultiplier<F> {
    fn table(&self, times: &[f64], mus: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(mus
            .iter()
            .map(|&mu| times.iter().map(|&t| (self.0)(t, mu)).collect())
            .collect())
    }
}

/// S_α(t) on a grid. Distinct eigenvalues are grouped by a relative quantum
/// of 1e−12, so each one is solved once per call.
pub struct SolutionOperator<M: Multiplier> {
    fourier: Fourier,
    multiplier: M,
    slot: Vec<usize>,
    distinct: Vec<f64>,
}

fn quantize(mu: f64) -> i64 {
    if mu == 0.0 {
        i64::MIN
    } else {
        (mu.ln() / 1e-12).round() as i64
    }
}

impl<M: Multiplier> SolutionOperator<M> {
    pub fn new(grid: Grid, multiplier: M) -> Self {
        let eig = grid.eigenvalues();
        let mut map: BTreeMap<i64, usize> = BTreeMap::new();
        let mut distinct = Vec::new();
        let slot = eig
            .iter()
            .map(|&mu| {
                *map.entry(quantize(mu)).or_insert_with(|| {
                    distinct.push(mu);
                    distinct.len() - 1
                })
            })
            .collect();
        Self {
            fourier: Fourier::new(grid),
            multiplier,
            slot,
            distinct,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.fourier.grid()
    }

    pub fn distinct_eigenvalues(&self) -> &[f64] {
        &self.distinct
    }

    /// Applies S_α(t) for every time in `times` to one field.
    pub fn apply_many(&self, times: &[f64], field: &Field) -> Result<Vec<Field>> {
        if field.grid() != self.grid() {
            return Err(Error::Input("field grid does not match operator grid".into()));
        }
        if let Some(&t) = times.iter().find(|&&t| !(t >= 0.0)) {
            return Err(Error::Domain(format!("apply_s requires t >= 0, got {t}")));
        }
        let positive: Vec<f64> = times.iter().copied().filter(|&t| t > 0.0).collect();
        let table = if positive.is_empty() {
            vec![]
        } else {
            self.multiplier.table(&positive, &self.distinct)?
        };
        let spec = self.fourier.forward(field.values());
        let mut out = Vec::with_capacity(times.len());
        let mut col = 0;
        for &t in times {
            if t == 0.0 {
                out.push(field.clone());
                continue;
            }
            let data: Vec<Complex64> = spec.iter().zip(&self.slot).map(|(c, &s)| c * table[s][col]).collect();
            col += 1;
            let (values, _) = self.fourier.inverse(data);
            out.push(Field::new(*self.grid(), values)?);
        }
        Ok(out)
    }

    pub fn apply(&self, t: f64, field: &Field) -> Result<Field> {
        Ok(self.apply_many(&[t], field)?.pop().unwrap())
    }

    /// Same as [`apply`](Self::apply) but also returns the relative imaginary residue.
    pub fn apply_with_residue(&self, t: f64, field: &Field) -> Result<(Field, f64)> {
        let table = self.multiplier.table(&[t], &self.distinct)?;
        let spec = self.fourier.forward(field.values());
        let data = spec.iter().zip(&self.slot).map(|(c, &s)| c * table[s][0]).collect();
        let (values, residue) = self.fourier.inverse(data);
        Ok((Field::new(*self.grid(), values)?, residue))
    }
}

/// S_α(t) u with the Volterra multiplier.
pub fn apply_s(t: f64, field: &Field, params: &FracParams) -> Result<Field> {
    SolutionOperator::new(*field.grid(), VolterraMultiplier::new(*params)).apply(t, field)
}

/// Observed decay of ‖S_α(t)u₀‖_p.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecaySample {
    pub t: f64,
    pub bracket_t: f64,
    pub norm_p: f64,
    /// ‖u₀‖_r ⟨t⟩^{−N/2(1/r−1/p)} (unit constant).
    pub predicted_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub predicted: f64,
    /// sup_t ⟨t⟩^{N/2(1/r−1/p)} ‖S_α(t)u₀‖_p / ‖u₀‖_r.
    pub sup_ratio: f64,
    /// Share of ∫|u|^p in the outer shell max_i |x_i| > 3L/4 at the final time.
    pub boundary_mass: f64,
    pub warnings: Vec<String>,
    pub samples: Vec<DecaySample>,
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub(crate) fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    least_squares_slope(x, y)
}

fn boundary_share(field: &Field, p: f64) -> f64 {
    let g = field.grid();
    let cut = 0.75 * g.half_length();
    let q = if p.is_finite() { p } else { 2.0 };
    let mut outer = 0.0;
    let mut total = 0.0;
    for (i, v) in field.values().iter().enumerate() {
        let x = g.point(i);
        let w = v.abs().powf(q);
        total += w;
        if x[0].abs() > cut || x[1].abs() > cut {
            outer += w;
        }
    }
    if total > 0.0 {
        outer / total
    } else {
        0.0
    }
}

/// Fits the slope of log‖S_α(t)u₀‖_p against log⟨t⟩ using `op`.
pub fn measure_decay_exponent_with<M: Multiplier>(
    op: &SolutionOperator<M>,
    u0: &Field,
    params: &FracParams,
    r: f64,
    p: f64,
    times: &[f64],
) -> Result<DecayFit> {
    if !(r > 1.0 && p > r) {
        return Err(Error::Precondition(format!(
            "decay study needs 1 < r < p, got r = {r}, p = {p}"
        )));
    }
    let dim = u0.grid().dim() as f64;
    let beta = 0.5 * dim * (1.0 / r - 1.0 / p);
    if !(beta < 1.0) {
        return Err(Error::Precondition(format!(
            "admissibility N/2(1/r - 1/p) < 1 violated ({beta})"
        )));
    }
    if times.len() < 2 || times.iter().any(|&t| !(t > 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(
            "times must be positive and strictly increasing".into(),
        ));
    }
    if times[times.len() - 1] / times[0] < 10f64.powf(1.5) * (1.0 - 1e-12) {
        return Err(Error::Precondition("times must span at least 1.5 decades".into()));
    }
    let norm0 = lp_norm(u0, r)?;
    let fields = op.apply_many(times, u0)?;
    let mut samples = Vec::with_capacity(times.len());
    for (t, f) in times.iter().zip(&fields) {
        let b = params.angle_bracket(*t);
        samples.push(DecaySample {
            t: *t,
            bracket_t: b,
            norm_p: lp_norm(f, p)?,
            predicted_bound: norm0 * b.powf(-beta),
        });
    }
    let x: Vec<f64> = samples.iter().map(|s| s.bracket_t.ln()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.norm_p.ln()).collect();
    let slope = least_squares_slope(&x, &y);
    let sup_ratio = samples
        .iter()
        .map(|s| s.bracket_t.powf(beta) * s.norm_p / norm0)
        .fold(0.0, f64::max);
    let boundary_mass = boundary_share(fields.last().unwrap(), p);
    let mut warnings = vec![];
    if boundary_mass > 0.01 {
        warnings.push(format!(
            "boundary mass {boundary_mass:.3e} exceeds 1% at final time; box may be too small"
        ));
    }
    Ok(DecayFit {
        slope,
        predicted: -beta,
        sup_ratio,
        boundary_mass,
        warnings,
        samples,
    })
}

/// [`measure_decay_exponent_with`] using the Volterra multiplier.
pub fn measure_decay_exponent(u0: &Field, params: &FracParams, r: f64, p: f64, times: &[f64]) -> Result<DecayFit> {
    let op = SolutionOperator::new(*u0.grid(), VolterraMultiplier::with_intervals(*params, 400));
    measure_decay_exponent_with(&op, u0, params, r, p, times)
}

/// Box half length satisfying L ≥ 8 √⟨t_max⟩.
pub fn auto_box_half_length(params: &FracParams, t_max: f64) -> f64 {
    8.0 * params.angle_bracket(t_max).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityReport {
    pub times: Vec<f64>,
    /// ‖S_α(t)u₀ − u₀‖₂ / ‖u₀‖₂ per time.
    pub errors: Vec<f64>,
    /// Errors do not increase along the decreasing time sequence.
    pub monotone: bool,
    pub final_below: bool,
}

/// Relative L² distance to the data along a decreasing time sequence.
pub fn check_strong_continuity_with<M: Multiplier>(
    op: &SolutionOperator<M>,
    u0: &Field,
    t_sequence: &[f64],
) -> Result<ContinuityReport> {
    if t_sequence.windows(2).any(|w| w[1] >= w[0]) || t_sequence.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Precondition(
            "t_sequence must be positive and strictly decreasing".into(),
        ));
    }
    let n0 = lp_norm(u0, 2.0)?;
    let fields = op.apply_many(t_sequence, u0)?;
    let errors: Vec<f64> = fields
        .iter()
        .map(|f| {
            let diff: Vec<f64> = f.values().iter().zip(u0.values()).map(|(a, b)| a - b).collect();
            let d = lp_norm(&Field::new(*u0.grid(), diff)?, 2.0)?;
            Ok(if n0 > 0.0 { d / n0 } else { d })
        })
        .collect::<Result<_>>()?;
    let monotone = errors.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
    let final_below = errors.last().is_some_and(|&e| e < 0.01);
    Ok(ContinuityReport {
        times: t_sequence.to_vec(),
        errors,
        monotone,
        final_below,
    })
}

pub fn check_strong_continuity(u0: &Field, params: &FracParams, t_sequence: &[f64]) -> Result<ContinuityReport> {
    let op = SolutionOperator::new(*u0.grid(), VolterraMultiplier::new(*params));
    check_strong_continuity_with(&op, u0, t_sequence)
}
