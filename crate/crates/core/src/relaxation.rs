//! The relaxation function s(t, μ): s + μ (h ∗ s) = 1, equivalently
//! s′ + μ(1 + k D^α) s = 0 with s(0) = 1.

use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frac::{h_convolution_row, rl_integral, ContourSpec, FracParams, TimeMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Volterra,
    Contour,
    ClosedFormOracle,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Volterra => "volterra",
            Method::Contour => "contour",
            Method::ClosedFormOracle => "closed_form",
        }
    }
}

/// Sampled s(·, μ) on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationCurve {
    pub mesh: TimeMesh,
    pub mu: f64,
    pub values: Vec<f64>,
    pub method: Method,
}

impl RelaxationCurve {
    /// Samples a known function, tagged as an oracle curve.
    pub fn from_fn(mesh: &TimeMesh, mu: f64, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: mesh.nodes().iter().map(|&t| f(t)).collect(),
            mesh: mesh.clone(),
            mu,
            method: Method::ClosedFormOracle,
        }
    }

    pub fn times(&self) -> &[f64] {
        self.mesh.nodes()
    }
}

/// Precomputed discrete (h ∗ ·) operator on a fixed mesh; solves for many μ.
#[derive(Debug, Clone)]
pub struct VolterraSolver {
    mesh: TimeMesh,
    rows: Vec<Vec<f64>>,
}

impl VolterraSolver {
    pub fn new(params: &FracParams, mesh: &TimeMesh) -> Result<Self> {
        let nodes = mesh.nodes();
        let rows: Vec<Vec<f64>> = (0..nodes.len())
            .into_par_iter()
            .map(|n| h_convolution_row(nodes, n, params))
            .collect();
        for (n, row) in rows.iter().enumerate().skip(1) {
            if !(row[n] > 0.0) {
                return Err(Error::Internal(format!(
                    "non-positive diagonal convolution weight {} at node {n}",
                    row[n]
                )));
            }
        }
        Ok(Self {
            mesh: mesh.clone(),
            rows,
        })
    }

    pub fn mesh(&self) -> &TimeMesh {
        &self.mesh
    }

    /// Weights of row n (length n + 1).
    pub fn row(&self, n: usize) -> &[f64] {
        &self.rows[n]
    }

    /// Implicit product-integration solve; values[0] = 1 exactly.
    pub fn solve(&self, mu: f64) -> Vec<f64> {
        let m = self.rows.len();
        let mut s = vec![0.0; m];
        s[0] = 1.0;
        if mu == 0.0 {
            s.iter_mut().for_each(|v| *v = 1.0);
            return s;
        }
        for n in 1..m {
            let row = &self.rows[n];
            let acc: f64 = row[..n].iter().zip(&s[..n]).map(|(w, v)| w * v).sum();
            s[n] = (1.0 - mu * acc) / (1.0 + mu * row[n]);
        }
        s
    }

    /// Solves for every μ in parallel.
    pub fn solve_many(&self, mus: &[f64]) -> Vec<Vec<f64>> {
        mus.par_iter().map(|&mu| self.solve(mu)).collect()
    }

    /// max_n |s_n + μ (h∗s)_n − 1| for the discrete operator.
    pub fn identity_residual(&self, mu: f64, s: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|row| {
                let conv: f64 = row.iter().zip(s).map(|(w, v)| w * v).sum();
                (s[row.len() - 1] + mu * conv - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Solves s + μ(h∗s) = 1 on `mesh`.
pub fn solve_volterra(mu: f64, params: &FracParams, mesh: &TimeMesh) -> Result<RelaxationCurve> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("mu must be finite and >= 0, got {mu}")));
    }
    let solver = VolterraSolver::new(params, mesh)?;
    Ok(RelaxationCurve {
        values: solver.solve(mu),
        mesh: mesh.clone(),
        mu,
        method: Method::Volterra,
    })
}

/// Mesh used for accurate relaxation curves: grading 3, with a 30-node
/// geometric prefix reaching ten decades below the first graded node.
pub fn accurate_mesh(t_end: f64, intervals: usize) -> Result<TimeMesh> {
    Ok(TimeMesh::graded(t_end, intervals, 3.0)?.with_geometric_prefix(30, 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourValue {
    pub value: f64,
    /// |Im| of the quadrature; exact arithmetic gives 0.
    pub imag_residue: f64,
}

const GL_POINTS: usize = 20;

fn gl20() -> &'static [(f64, f64)] {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(GL_POINTS).unwrap()))
        .as_node_weight_pairs()
}

/// s(t, μ) = (1/2πi) ∫_Γ e^{zt} / (z + μ(1 + k z^α)) dz over the contour.
pub fn solve_contour(mu: f64, t: f64, params: &FracParams, contour: &ContourSpec) -> Result<ContourValue> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("mu must be finite and >= 0, got {mu}")));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("contour evaluation requires t > 0, got {t}")));
    }
    let need = 40.0 / (t * contour.theta().cos());
    if contour.truncation() < need * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "contour truncation {} below 40/(t cos theta) = {need}",
            contour.truncation()
        )));
    }
    let (alpha, k) = (params.alpha(), params.k());
    let f = |z: Complex64| (z * t).exp() / (z + mu * (1.0 + k * z.powf(alpha)));
    let delta = contour.delta();
    let phi = PI - contour.theta();
    let sub = contour.panels().div_ceil(GL_POINTS);
    let rule = gl20();
    let mut total = Complex64::new(0.0, 0.0);

    // rays r = δ e^u, u ∈ [0, ln(R/δ)]
    let u_max = (contour.truncation() / delta).ln();
    let up = Complex64::from_polar(1.0, phi);
    let down = Complex64::from_polar(1.0, -phi);
    for p in 0..sub {
        let a = u_max * p as f64 / sub as f64;
        let b = u_max * (p + 1) as f64 / sub as f64;
        let (h, c) = (0.5 * (b - a), 0.5 * (a + b));
        for &(x, w) in rule {
            let r = delta * (c + h * x).exp();
            let wr = w * h * r;
            total += wr * (f(r * up) * up - f(r * down) * down);
        }
    }
    // arc ψ ∈ [−φ, φ]
    for p in 0..sub {
        let a = -phi + 2.0 * phi * p as f64 / sub as f64;
        let b = -phi + 2.0 * phi * (p + 1) as f64 / sub as f64;
        let (h, c) = (0.5 * (b - a), 0.5 * (a + b));
        for &(x, w) in rule {
            let z = Complex64::from_polar(delta, c + h * x);
            total += w * h * f(z) * Complex64::i() * z;
        }
    }
    let s = total / Complex64::new(0.0, 2.0 * PI);
    let residue = s.im.abs();
    if residue > 1e-6 {
        return Err(Error::Accuracy(format!(
            "contour under-resolved: imaginary residue {residue:e} at t = {t}, mu = {mu}"
        )));
    }
    Ok(ContourValue {
        value: s.re,
        imag_residue: residue,
    })
}

/// Contour values at every node of `mesh` (s = 1 at t = 0), default contour per time.
pub fn contour_curve(mu: f64, params: &FracParams, mesh: &TimeMesh) -> Result<RelaxationCurve> {
    let values = mesh
        .nodes()
        .par_iter()
        .map(|&t| {
            if t == 0.0 {
                Ok(1.0)
            } else {
                solve_contour(mu, t, params, &ContourSpec::for_time(t)?).map(|c| c.value)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RelaxationCurve {
        mesh: mesh.clone(),
        mu,
        values,
        method: Method::Contour,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeResidual {
    /// Residual s′ + μ s + μ k D^α s at interior nodes (index 1..M−1).
    pub pointwise: Vec<f64>,
    pub max: f64,
    /// Σ |r_n| (t_{n+1} − t_{n−1})/2.
    pub l1: f64,
}

fn three_point_derivative(t: &[f64], f: &[f64], n: usize) -> f64 {
    let (h0, h1) = (t[n] - t[n - 1], t[n + 1] - t[n]);
    (-h1 / (h0 * (h0 + h1))) * f[n - 1] + ((h1 - h0) / (h0 * h1)) * f[n] + (h0 / (h1 * (h0 + h1))) * f[n + 1]
}

/// Differential residual of the relaxation ODE on the curve's own mesh.
pub fn check_relaxation_ode(curve: &RelaxationCurve, params: &FracParams) -> Result<OdeResidual> {
    let t = curve.mesh.nodes();
    if t.len() < 64 {
        return Err(Error::Precondition(format!(
            "ODE residual needs at least 64 nodes, got {}",
            t.len()
        )));
    }
    let s = &curve.values;
    let mu = curve.mu;
    let j = if params.k() > 0.0 {
        rl_integral(&curve.mesh, s, 1.0 - params.alpha())?
    } else {
        vec![0.0; t.len()]
    };
    let mut pointwise = Vec::with_capacity(t.len() - 2);
    let mut l1 = 0.0;
    for n in 1..t.len() - 1 {
        let ds = three_point_derivative(t, s, n);
        let dj = three_point_derivative(t, &j, n);
        let r = ds + mu * s[n] + mu * params.k() * dj;
        l1 += r.abs() * 0.5 * (t[n + 1] - t[n - 1]);
        pointwise.push(r);
    }
    let max = pointwise.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    Ok(OdeResidual { pointwise, max, l1 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmOrder {
    pub order: usize,
    pub pass: bool,
    /// Mesh index of the first node of the first failing stencil.
    pub violation: Option<usize>,
    /// Smallest value of (−1)^n Δ^n + slack over all stencils.
    pub worst_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmReport {
    pub orders: Vec<CmOrder>,
}

impl CmReport {
    pub fn all_pass(&self) -> bool {
        self.orders.iter().all(|o| o.pass)
    }
}

/// Node indices close to a log-uniform grid with `per_decade` points.
fn log_subsample(t: &[f64], per_decade: usize) -> Vec<usize> {
    let first = match t.iter().position(|&x| x > 0.0) {
        Some(i) => i,
        None => return vec![],
    };
    let (lo, hi) = (t[first].ln(), t[t.len() - 1].ln());
    let count = (((hi - lo) / std::f64::consts::LN_10) * per_decade as f64).ceil() as usize + 1;
    let mut idx: Vec<usize> = Vec::with_capacity(count);
    for i in 0..count {
        let target = if count > 1 {
            lo + (hi - lo) * i as f64 / (count - 1) as f64
        } else {
            lo
        };
        let pos = t.partition_point(|&x| x <= 0.0 || x.ln() < target);
        let best = [pos.saturating_sub(1).max(first), pos.min(t.len() - 1)]
            .into_iter()
            .min_by(|&a, &b| {
                let da = (t[a].ln() - target).abs();
                let db = (t[b].ln() - target).abs();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        if idx.last() != Some(&best) {
            idx.push(best);
        }
    }
    idx
}

fn divided_difference(x: &[f64], y: &[f64]) -> f64 {
    let mut d: Vec<f64> = y.to_vec();
    let n = x.len();
    for level in 1..n {
        for i in 0..n - level {
            d[i] = (d[i + 1] - d[i]) / (x[i + level] - x[i]);
        }
    }
    d[0]
}

/// Sign pattern (−1)^n s^{(n)} ≥ 0 for n = 0..=max_order. Orders 0 and 1 use
/// every node; orders 2 and 3 use divided differences on a log-uniform
/// subsample (8 per decade). Slack is 1e−9·max|s|, divided by span^n.
pub fn check_complete_monotonicity(curve: &RelaxationCurve, max_order: usize) -> Result<CmReport> {
    if max_order > 3 {
        return Err(Error::Input(format!("max_order must be <= 3, got {max_order}")));
    }
    let t = curve.mesh.nodes();
    let s = &curve.values;
    let scale = s.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let tol = 1e-9 * scale;
    let mut orders = Vec::new();
    for order in 0..=max_order {
        let mut worst = f64::INFINITY;
        let mut violation = None;
        let mut record = |margin: f64, at: usize| {
            if margin < worst {
                worst = margin;
            }
            if margin < 0.0 && violation.is_none() {
                violation = Some(at);
            }
        };
        match order {
            0 => {
                for (i, &v) in s.iter().enumerate() {
                    record(v + tol, i);
                }
            }
            1 => {
                for i in 0..s.len().saturating_sub(1) {
                    record(s[i] - s[i + 1] + tol, i);
                }
            }
            _ => {
                let idx = log_subsample(t, 8);
                if idx.len() > order {
                    for w in idx.windows(order + 1) {
                        let x: Vec<f64> = w.iter().map(|&i| t[i]).collect();
                        let y: Vec<f64> = w.iter().map(|&i| s[i]).collect();
                        let span = x[order] - x[0];
                        let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
                        record(sign * divided_difference(&x, &y) + tol / span.powi(order as i32), w[0]);
                    }
                }
            }
        }
        orders.push(CmOrder {
            order,
            pass: violation.is_none(),
            violation,
            worst_margin: worst,
        });
    }
    Ok(CmReport { orders })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayBoundReport {
    /// max_n s(t_n)(1 + μ⟨t_n⟩).
    pub c_obs: f64,
    /// False for μ = 0, where the bound is trivial.
    pub applicable: bool,
}

pub fn check_decay_bound(curve: &RelaxationCurve, params: &FracParams) -> DecayBoundReport {
    let mu = curve.mu;
    let c_obs = curve
        .mesh
        .nodes()
        .iter()
        .zip(&curve.values)
        .map(|(&t, &s)| s * (1.0 + mu * params.angle_bracket(t)))
        .fold(f64::NEG_INFINITY, f64::max);
    DecayBoundReport {
        c_obs,
        applicable: mu > 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(alpha: f64, k: f64) -> FracParams {
        FracParams::new(alpha, k).unwrap()
    }

    #[test]
    fn mu_zero_is_constant() {
        let mesh = TimeMesh::graded(5.0, 50, 2.0).unwrap();
        let c = solve_volterra(0.0, &p(0.5, 1.0), &mesh).unwrap();
        assert!(c.values.iter().all(|&v| v == 1.0));
        let v = solve_contour(0.0, 1.3, &p(0.5, 1.0), &ContourSpec::for_time(1.3).unwrap()).unwrap();
        assert!((v.value - 1.0).abs() < 1e-10);
        assert!(solve_volterra(-1.0, &p(0.5, 1.0), &mesh).is_err());
    }

    #[test]
    fn heat_case_matches_exponential() {
        let mesh = TimeMesh::graded(10.0, 511, 2.0).unwrap();
        for &alpha in &[0.2, 0.5, 0.9] {
            let c = solve_volterra(1.0, &p(alpha, 0.0), &mesh).unwrap();
            for (t, s) in mesh.nodes().iter().zip(&c.values) {
                assert!((s - (-t).exp()).abs() < 1e-3);
            }
        }
        let v = solve_contour(1.0, 1.0, &p(0.5, 0.0), &ContourSpec::for_time(1.0).unwrap()).unwrap();
        assert!((v.value - (-1f64).exp()).abs() < 1e-6);
        assert!(v.imag_residue < 1e-8);
    }

    #[test]
    fn near_one_limit() {
        // as α → 1 the integrated equation gives (1+μk)s + μ∫s = 1 for t > 0,
        // so s(0+) = 1/(1+μk) and s = e^{−μt/(1+μk)}/(1+μk) afterwards
        let mesh = TimeMesh::graded(10.0, 511, 2.0).unwrap();
        let c = solve_volterra(1.0, &p(0.999, 1.0), &mesh).unwrap();
        for (t, s) in mesh.nodes().iter().zip(&c.values).skip(1) {
            assert!((s - 0.5 * (-t / 2.0).exp()).abs() < 1e-2, "t = {t}");
        }
    }

    #[test]
    fn dual_method_point() {
        let params = p(0.5, 1.0);
        let mesh = accurate_mesh(2.0, 800).unwrap();
        let c = solve_volterra(5.0, &params, &mesh).unwrap();
        let v = solve_contour(5.0, 2.0, &params, &ContourSpec::for_time(2.0).unwrap()).unwrap();
        assert!((c.values.last().unwrap() - v.value).abs() < 1e-4);
    }

    #[test]
    fn contour_rejects_short_truncation() {
        let c = ContourSpec::new(1.0, PI / 6.0, 10.0, 400).unwrap();
        assert!(matches!(
            solve_contour(1.0, 1.0, &p(0.5, 1.0), &c),
            Err(Error::Precondition(_))
        ));
        assert!(solve_contour(1.0, 0.0, &p(0.5, 1.0), &c).is_err());
    }

    #[test]
    fn contour_detects_under_resolution() {
        // a single node per segment cannot resolve the integrand
        let c = ContourSpec::new(1.0, PI / 6.0, 80.0, 1).unwrap();
        let r = solve_contour(3.0, 1.0, &p(0.5, 1.0), &c);
        if let Ok(v) = r {
            assert!(v.imag_residue <= 1e-6);
        }
    }

    #[test]
    fn identity_residual_is_roundoff() {
        let params = p(0.4, 2.0);
        let mesh = accurate_mesh(5.0, 200).unwrap();
        let solver = VolterraSolver::new(&params, &mesh).unwrap();
        for &mu in &[0.1, 3.0, 400.0] {
            let s = solver.solve(mu);
            assert!(solver.identity_residual(mu, &s) <= 1e-10);
        }
    }

    #[test]
    fn range_and_monotone_in_mu() {
        let params = p(0.6, 1.0);
        let mesh = accurate_mesh(10.0, 300).unwrap();
        let solver = VolterraSolver::new(&params, &mesh).unwrap();
        let mus = [0.0, 0.1, 1.0, 10.0, 100.0];
        let sols = solver.solve_many(&mus);
        for s in &sols {
            assert_eq!(s[0], 1.0);
            assert!(s.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        }
        for w in sols.windows(2) {
            assert!(w[0].iter().zip(&w[1]).all(|(a, b)| a + 1e-9 >= *b));
        }
    }

    #[test]
    fn ode_residual_cases() {
        let mesh = TimeMesh::uniform(4.0, 100).unwrap();
        let flat = RelaxationCurve::from_fn(&mesh, 0.0, |_| 1.0);
        let r = check_relaxation_ode(&flat, &p(0.5, 1.0)).unwrap();
        assert!(r.max < 1e-12);
        let short = TimeMesh::uniform(1.0, 10).unwrap();
        assert!(check_relaxation_ode(&RelaxationCurve::from_fn(&short, 1.0, |t| (-t).exp()), &p(0.5, 0.0)).is_err());

        let mut errs = vec![];
        for m in [100usize, 200, 400] {
            let mesh = TimeMesh::uniform(4.0, m).unwrap();
            let c = RelaxationCurve::from_fn(&mesh, 1.0, |t| (-t).exp());
            errs.push(check_relaxation_ode(&c, &p(0.5, 0.0)).unwrap().max);
        }
        assert!(errs[0] / errs[1] >= 2.0 && errs[1] / errs[2] >= 2.0, "{errs:?}");

        let params = p(0.5, 1.0);
        let mut errs = vec![];
        for m in [100usize, 200, 400, 800] {
            let mesh = TimeMesh::graded(4.0, m, 2.0).unwrap();
            let c = solve_volterra(2.0, &params, &mesh).unwrap();
            errs.push(check_relaxation_ode(&c, &params).unwrap().l1);
        }
        for w in errs.windows(2) {
            assert!(w[0] / w[1] >= 1.5, "{errs:?}");
        }
    }

    #[test]
    fn monotonicity_checks() {
        let mesh = TimeMesh::graded(20.0, 400, 2.0).unwrap();
        let flat = RelaxationCurve::from_fn(&mesh, 0.0, |_| 1.0);
        assert!(check_complete_monotonicity(&flat, 3).unwrap().all_pass());
        let e = RelaxationCurve::from_fn(&mesh, 1.0, |t| (-t).exp());
        assert!(check_complete_monotonicity(&e, 3).unwrap().all_pass());
        let mut bad = e.clone();
        bad.values[57] = -bad.values[57];
        let rep = check_complete_monotonicity(&bad, 3).unwrap();
        assert!(!rep.orders[0].pass);
        assert_eq!(rep.orders[0].violation, Some(57));
        assert!(check_complete_monotonicity(&e, 4).is_err());
        // a bump is not completely monotone
        let bump = RelaxationCurve::from_fn(&mesh, 1.0, |t| (-t).exp() + 0.05 * (-(t - 5.0).powi(2)).exp());
        assert!(!check_complete_monotonicity(&bump, 3).unwrap().all_pass());
    }

    #[test]
    fn decay_bound_values() {
        let mesh = TimeMesh::uniform(20.0, 2000).unwrap();
        let e = RelaxationCurve::from_fn(&mesh, 1.0, |t| (-t).exp());
        let r = check_decay_bound(&e, &p(0.5, 0.0));
        assert!(r.applicable && r.c_obs <= 1.2 && (r.c_obs - 1.0).abs() < 1e-12);
        let flat = RelaxationCurve::from_fn(&mesh, 0.0, |_| 1.0);
        assert!(!check_decay_bound(&flat, &p(0.5, 0.0)).applicable);
    }
}
