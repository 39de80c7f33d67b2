//! Critical exponents, the test-function machinery θ(t)ξ_R(x), and the
//! dichotomy sweep.

use std::collections::BTreeMap;

use quadrature::double_exponential;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frac::{linear_panel_weights, FracParams};
use crate::mild::{
    admissible_q, contraction_radius, critical_r, duhamel_evolve, duhamel_evolve_system, EvolutionRecord,
    EvolveOptions, Exponents, NonlinearitySpec, Status, Stepping,
};
use crate::special::gamma_fn;
use crate::spectral::{auto_box_half_length, fit_slope, Field, Fourier, Grid};

fn check_standing(dim: usize, sigma: f64, gamma: f64) -> Result<()> {
    if dim == 0 {
        return Err(Error::Domain("dimension must be >= 1".into()));
    }
    if !(sigma <= 0.0 && gamma <= 0.0) {
        return Err(Error::Domain(format!("need sigma, gamma <= 0, got ({sigma}, {gamma})")));
    }
    if !(sigma + 2.0 * (gamma + 1.0) > 0.0) {
        return Err(Error::Domain(format!(
            "sigma+2(gamma+1)>0 violated (sigma = {sigma}, gamma = {gamma})"
        )));
    }
    Ok(())
}

/// ρ_c = 1 + (σ + 2(γ+1))/N.
pub fn critical_exponent(dim: usize, sigma: f64, gamma: f64) -> Result<f64> {
    check_standing(dim, sigma, gamma)?;
    Ok(1.0 + (sigma + 2.0 * (gamma + 1.0)) / dim as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalCurve {
    /// (ρ₁ρ₂)_c.
    pub product_c: f64,
    /// (r₁)_c and (r₂)_c.
    pub r1_c: f64,
    pub r2_c: f64,
}

/// (ρ₁ρ₂)_c = 1 + (σ+2γ+2)/N · max(ρ₁+1, ρ₂+1) and the critical r_i.
pub fn critical_curve_system(dim: usize, sigma: f64, gamma: f64, rho1: f64, rho2: f64) -> Result<CriticalCurve> {
    check_standing(dim, sigma, gamma)?;
    if !(rho1 >= 1.0 && rho2 >= 1.0 && rho1 * rho2 > 1.0) {
        return Err(Error::Domain(format!(
            "need rho1, rho2 >= 1 and rho1*rho2 > 1, got ({rho1}, {rho2})"
        )));
    }
    let s = sigma + 2.0 * gamma + 2.0;
    let n = dim as f64;
    Ok(CriticalCurve {
        product_c: 1.0 + s / n * (rho1 + 1.0).max(rho2 + 1.0),
        r1_c: n * (rho1 * rho2 - 1.0) / ((rho1 + 1.0) * s),
        r2_c: n * (rho1 * rho2 - 1.0) / ((rho2 + 1.0) * s),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffKind {
    SmoothBump,
    EigenfunctionProfile,
}

/// θ on [0, T] with exponent λ, and the spatial cutoff radius R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestFunctionSpec {
    t_end: f64,
    lambda: f64,
    radius: f64,
    cutoff: CutoffKind,
}

impl TestFunctionSpec {
    pub fn new(t_end: f64, lambda: f64, radius: f64, cutoff: CutoffKind) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::Domain(format!("T must be > 0, got {t_end}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
        }
        if !(radius > 1.0 && radius.is_finite()) {
            return Err(Error::Domain(format!("R must be > 1, got {radius}")));
        }
        Ok(Self {
            t_end,
            lambda,
            radius,
            cutoff,
        })
    }

    /// T = R².
    pub fn coupled(radius: f64, lambda: f64, cutoff: CutoffKind) -> Result<Self> {
        Self::new(radius * radius, lambda, radius, cutoff)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn cutoff(&self) -> CutoffKind {
        self.cutoff
    }
}

/// λ = max(2, ⌈q⌉ + 1), large enough for both lemma checks.
pub fn default_lambda(q: f64) -> f64 {
    (q.ceil() + 1.0).max(2.0)
}

pub fn theta(t: f64, spec: &TestFunctionSpec) -> f64 {
    let tt = spec.t_end;
    if t < 0.5 * tt {
        1.0
    } else if t >= tt {
        0.0
    } else {
        (2.0 * (tt - t) / tt).powf(spec.lambda)
    }
}

/// θ′, taken as the right derivative at T/2.
pub fn theta_prime(t: f64, spec: &TestFunctionSpec) -> f64 {
    let tt = spec.t_end;
    if t < 0.5 * tt || t >= tt {
        0.0
    } else {
        -spec.lambda * 2f64.powf(spec.lambda) * tt.powf(-spec.lambda) * (tt - t).powf(spec.lambda - 1.0)
    }
}

fn frac_ratio(lambda: f64, alpha: f64) -> Result<f64> {
    Ok(gamma_fn(lambda + 1.0)? / gamma_fn(lambda + 1.0 - alpha)?)
}

fn check_lambda_alpha(spec: &TestFunctionSpec, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in open (0,1), got {alpha}")));
    }
    if !(spec.lambda > alpha) {
        return Err(Error::Domain(format!(
            "right derivative of theta needs lambda > alpha, got lambda = {}, alpha = {alpha}",
            spec.lambda
        )));
    }
    Ok(())
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, scale: f64) -> f64 {
    double_exponential::integrate(f, a, b, 1e-14 * scale.max(f64::MIN_POSITIVE)).integral
}

/// Right-sided Riemann-Liouville derivative D^α_{T−}θ at t.
///
/// Closed form on [T/2, T]; below T/2 the integral
/// λ2^λT^{−λ}/Γ(1−α) ∫_{T/2}^T (s−t)^{−α}(T−s)^{λ−1} ds is evaluated by quadrature.
pub fn theta_frac_derivative(t: f64, spec: &TestFunctionSpec, alpha: f64) -> Result<f64> {
    check_lambda_alpha(spec, alpha)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t must be >= 0, got {t}")));
    }
    let (tt, lam) = (spec.t_end, spec.lambda);
    if t >= tt {
        return Ok(0.0);
    }
    let pref = 2f64.powf(lam) * tt.powf(-lam);
    if t >= 0.5 * tt {
        return Ok(pref * frac_ratio(lam, alpha)? * (tt - t).powf(lam - alpha));
    }
    let g1 = gamma_fn(1.0 - alpha)?;
    let e = 1.0 / (1.0 - alpha);
    // s ∈ [T/2, 3T/4] with z = (s − t)^{1−α}
    let (z0, z1) = ((0.5 * tt - t).powf(1.0 - alpha), (0.75 * tt - t).powf(1.0 - alpha));
    let scale1 = (z1 - z0) * (0.5 * tt).powf(lam - 1.0).max((0.25 * tt).powf(lam - 1.0));
    let near = integrate(|z| (tt - t - z.powf(e)).max(0.0).powf(lam - 1.0), z0, z1, scale1) * e;
    // s ∈ [3T/4, T] with w = (T − s)^λ
    let w1 = (0.25 * tt).powf(lam);
    let far = integrate(
        |w| (tt - t - w.powf(1.0 / lam)).powf(-alpha),
        0.0,
        w1,
        w1 * (0.25 * tt).powf(-alpha),
    );
    Ok(pref / g1 * (lam * near + far))
}

/// Upper bound 2^αT^{−α}Γ(λ+1)/Γ(λ+1−α) for D^α_{T−}θ on [0, T/2).
pub fn theta_frac_derivative_bound(spec: &TestFunctionSpec, alpha: f64) -> Result<f64> {
    check_lambda_alpha(spec, alpha)?;
    Ok(2f64.powf(alpha) * spec.t_end.powf(-alpha) * frac_ratio(spec.lambda, alpha)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma43Report {
    pub t_end: f64,
    pub lambda: f64,
    pub q: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// ∫₀^T t^{γ(1−q)}θ^{1−q}(D^α_{T−}θ)^q dt with the true derivative.
    pub lhs: f64,
    /// Same integral with D^α_{T−}θ replaced by its bound on [0, T/2).
    pub lhs_bounded: f64,
    /// C(λ,q,α,γ).
    pub constant: f64,
    /// C · T^{γ(1−q)+1−qα}.
    pub rhs: f64,
    pub ratio: f64,
    pub holds: bool,
    /// C plus the [T/2, T] contribution, which dominates `lhs` by construction.
    pub sufficient_constant: f64,
    pub holds_sufficient: bool,
    /// lhs / T^{γ(1−q)+1−qα}.
    pub scaled_lhs: f64,
}

fn check_q_gamma(q: f64, gamma: f64) -> Result<f64> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::Domain(format!("q must be > 1, got {q}")));
    }
    let c = gamma * (1.0 - q);
    if !(c + 1.0 > 0.0) {
        return Err(Error::Domain(format!("gamma(1-q)+1 > 0 violated ({})", c + 1.0)));
    }
    Ok(c)
}

/// Numerical check of ∫₀^T t^{γ(1−q)}θ^{1−q}(D^α_{T−}θ)^q ≤ C T^{γ(1−q)+1−qα}.
pub fn verify_lemma43(spec: &TestFunctionSpec, q: f64, alpha: f64, gamma: f64) -> Result<Lemma43Report> {
    let c = check_q_gamma(q, gamma)?;
    check_lambda_alpha(spec, alpha)?;
    let (tt, lam) = (spec.t_end, spec.lambda);
    if lam < q * alpha * (1.0 - 1e-12) {
        return Err(Error::Domain(format!(
            "lambda >= q*alpha violated ({lam} < {})",
            q * alpha
        )));
    }
    let g = frac_ratio(lam, alpha)?;
    let e = c + 1.0 - q * alpha;
    let power = tt.powf(e);

    let upper_scale = 2f64.powf(lam) * tt.powf(-lam) * g.powf(q);
    let upper = upper_scale
        * integrate(
            |t| t.powf(c) * (tt - t).max(0.0).powf(lam - q * alpha),
            0.5 * tt,
            tt,
            tt.powf(c + 1.0 + lam - q * alpha),
        );
    let bound = theta_frac_derivative_bound(spec, alpha)?;
    let lower_bounded = bound.powf(q) * (0.5 * tt).powf(c + 1.0) / (c + 1.0);
    let failure = std::cell::RefCell::new(None);
    let lower = integrate(
        |t| match theta_frac_derivative(t, spec, alpha) {
            Ok(d) => t.powf(c) * d.powf(q),
            Err(err) => {
                failure.borrow_mut().get_or_insert(err);
                0.0
            }
        },
        0.0,
        0.5 * tt,
        lower_bounded,
    );
    if let Some(err) = failure.into_inner() {
        return Err(err);
    }
    let constant = g.powf(q) * 2f64.powf(q * alpha - c - 1.0) / (c + 1.0);
    let sufficient_constant =
        constant + g.powf(q) * 2f64.powf(q * alpha - 1.0) * 2f64.powf(-c).max(1.0) / (lam - q * alpha + 1.0);
    let lhs = lower + upper;
    let rhs = constant * power;
    Ok(Lemma43Report {
        t_end: tt,
        lambda: lam,
        q,
        alpha,
        gamma,
        lhs,
        lhs_bounded: lower_bounded + upper,
        constant,
        rhs,
        ratio: lhs / rhs,
        holds: lhs <= rhs,
        sufficient_constant,
        holds_sufficient: lhs <= sufficient_constant * power,
        scaled_lhs: lhs / power,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma44Report {
    pub t_end: f64,
    pub lambda: f64,
    pub q: f64,
    pub gamma: f64,
    /// ∫_{T/2}^T t^{γ(1−q)}θ^{1−q}|θ′|^q dt.
    pub lhs: f64,
    /// C(λ,q,γ).
    pub constant: f64,
    /// C · T^{(γ+1)(1−q)}.
    pub rhs: f64,
    pub ratio: f64,
    pub holds: bool,
    /// λ^q 2^{q−1} max(1, 2^{−γ(1−q)})/(λ−q+1), which dominates `lhs` by construction.
    pub sufficient_constant: f64,
    pub holds_sufficient: bool,
    /// lhs / T^{(γ+1)(1−q)}.
    pub scaled_lhs: f64,
}

/// Numerical check of ∫_{T/2}^T t^{γ(1−q)}θ^{1−q}|θ′|^q ≤ C T^{(γ+1)(1−q)}.
pub fn verify_lemma44(spec: &TestFunctionSpec, q: f64, gamma: f64) -> Result<Lemma44Report> {
    let c = check_q_gamma(q, gamma)?;
    let (tt, lam) = (spec.t_end, spec.lambda);
    if lam < q * (1.0 - 1e-12) {
        return Err(Error::Domain(format!("lambda >= q violated ({lam} < {q})")));
    }
    let power = tt.powf((gamma + 1.0) * (1.0 - q));
    let scale = 2f64.powf(lam) * tt.powf(-lam) * lam.powf(q);
    let lhs = scale
        * integrate(
            |t| t.powf(c) * (tt - t).max(0.0).powf(lam - q),
            0.5 * tt,
            tt,
            tt.powf(c + 1.0 + lam - q),
        );
    let constant = 2f64.powf((gamma + 1.0) * (q - 1.0)) * lam.powf(q) / (c + 1.0);
    let sufficient_constant = lam.powf(q) * 2f64.powf(q - 1.0) * 2f64.powf(-c).max(1.0) / (lam - q + 1.0);
    let rhs = constant * power;
    Ok(Lemma44Report {
        t_end: tt,
        lambda: lam,
        q,
        gamma,
        lhs,
        constant,
        rhs,
        ratio: lhs / rhs,
        holds: lhs <= rhs,
        sufficient_constant,
        holds_sufficient: lhs <= sufficient_constant * power,
        scaled_lhs: lhs / power,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaGridReport {
    pub lemma43: Vec<Lemma43Report>,
    pub lemma44: Vec<Lemma44Report>,
    /// Grid points with λ < q, where the second lemma does not apply.
    pub skipped44: usize,
}

impl LemmaGridReport {
    pub fn all_hold(&self) -> bool {
        self.lemma43.iter().all(|r| r.holds) && self.lemma44.iter().all(|r| r.holds)
    }

    pub fn all_hold_sufficient(&self) -> bool {
        self.lemma43.iter().all(|r| r.holds_sufficient) && self.lemma44.iter().all(|r| r.holds_sufficient)
    }
}

/// Runs both lemma checks over λ ∈ {qα, 2qα, 5}, q ∈ {1.5, 2, 3},
/// α ∈ {0.3, 0.5, 0.8}, γ ∈ {0, −0.2}.
pub fn verify_lemma_grid(t_end: f64) -> Result<LemmaGridReport> {
    let mut out = LemmaGridReport {
        lemma43: Vec::new(),
        lemma44: Vec::new(),
        skipped44: 0,
    };
    for q in [1.5, 2.0, 3.0] {
        for alpha in [0.3, 0.5, 0.8] {
            for lambda in [q * alpha, 2.0 * q * alpha, 5.0] {
                for gamma in [0.0, -0.2] {
                    let spec = TestFunctionSpec::new(t_end, lambda, 2.0, CutoffKind::SmoothBump)?;
                    out.lemma43.push(verify_lemma43(&spec, q, alpha, gamma)?);
                    if lambda >= q {
                        out.lemma44.push(verify_lemma44(&spec, q, gamma)?);
                    } else {
                        out.skipped44 += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Radial cutoff: 1 on |x| ≤ R/2, 0 on |x| ≥ R.
pub fn cutoff_xi(x: [f64; 2], radius: f64, kind: CutoffKind) -> f64 {
    let rr = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let s = (rr - 0.5 * radius) / (0.5 * radius);
    if s <= 0.0 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    match kind {
        CutoffKind::SmoothBump => (1.0 - 1.0 / (1.0 - s * s)).exp(),
        CutoffKind::EigenfunctionProfile => 0.5 * (1.0 + (std::f64::consts::PI * s).cos()),
    }
}

pub fn cutoff_field(grid: Grid, radius: f64, kind: CutoffKind) -> Result<Field> {
    Field::from_fn(grid, |x| cutoff_xi(x, radius, kind))
}

/// Δf by Fourier multiplication with −|ξ|².
pub fn spectral_laplacian(field: &Field) -> Result<Field> {
    let grid = *field.grid();
    let fourier = Fourier::new(grid);
    let mut hat = fourier.forward(field.values());
    for (h, mu) in hat.iter_mut().zip(grid.eigenvalues()) {
        *h *= -mu;
    }
    let (vals, _) = fourier.inverse(hat);
    Field::new(grid, vals)
}

fn snapshot_index(record: &EvolutionRecord, t: f64) -> Result<usize> {
    record
        .mesh
        .position(t)
        .ok_or_else(|| Error::Input(format!("t = {t} is not a node of the evolution mesh")))
}

fn snapshots(record: &EvolutionRecord) -> Result<&Vec<Vec<Field>>> {
    record
        .snapshots
        .as_ref()
        .ok_or_else(|| Error::Input("evolution record carries no snapshots".into()))
}

/// I_ρ = ∫₀^T∫ w_σ t^γ u^ρ ξ_R θ dx dt on the evolution mesh; the system uses v^{ρ₁}.
pub fn blowup_functional(record: &EvolutionRecord, nl: &NonlinearitySpec, spec: &TestFunctionSpec) -> Result<f64> {
    let snaps = snapshots(record)?;
    let n_end = snapshot_index(record, spec.t_end)?;
    let (comp, rho) = match nl.exponents {
        Exponents::Scalar { rho } => (0, rho),
        Exponents::System { rho1, .. } => (1, rho1),
    };
    if comp >= snaps.len() {
        return Err(Error::Input("record has fewer components than the nonlinearity".into()));
    }
    let grid = *snaps[comp][0].grid();
    let xi = cutoff_field(grid, spec.radius, spec.cutoff)?;
    let weight: Vec<f64> = (0..grid.len())
        .map(|i| nl.weight(grid.radius(i)) * xi.values()[i])
        .collect();
    let nodes = record.mesh.nodes();
    let f: Vec<f64> = (0..=n_end)
        .map(|j| {
            let s: f64 = snaps[comp][j]
                .values()
                .iter()
                .zip(&weight)
                .map(|(&u, &w)| w * u.max(0.0).powf(rho))
                .sum();
            theta(nodes[j], spec) * s * grid.cell_volume()
        })
        .collect();
    let mut total = 0.0;
    for j in 1..=n_end {
        let (wa, wb) = linear_panel_weights(nodes[j - 1], nodes[j] - nodes[j - 1], nl.gamma);
        total += wa * f[j - 1] + wb * f[j];
    }
    Ok(total)
}

/// N − (σ+2γ+2)/(ρ−1), or N − max(ρ₁+1, ρ₂+1)(σ+2γ+2)/(ρ₁ρ₂−1) for the system.
pub fn blowup_exponent(nl: &NonlinearitySpec, dim: usize) -> f64 {
    let s = nl.sigma + 2.0 * nl.gamma + 2.0;
    let n = dim as f64;
    match nl.exponents {
        Exponents::Scalar { rho } => n - s / (rho - 1.0),
        Exponents::System { rho1, rho2 } => n - (rho1 + 1.0).max(rho2 + 1.0) * s / (rho1 * rho2 - 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupInequalityReport {
    pub exponent: f64,
    pub slope: f64,
    pub holds: bool,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// (2+k)^{ρ/(ρ−1)} (scalar case; unit generic constant).
    pub rhs_factor: Option<f64>,
    /// rhs_factor · R_max^exponent.
    pub implied_bound: Option<f64>,
}

/// Fits log I_ρ against log R and compares with the exponent of R.
pub fn verify_blowup_inequality(
    radii: &[f64],
    values: &[f64],
    params: &FracParams,
    nl: &NonlinearitySpec,
    dim: usize,
) -> Result<BlowupInequalityReport> {
    if radii.len() != values.len() || radii.len() < 2 {
        return Err(Error::Input("need at least two (R, I) pairs of equal length".into()));
    }
    if radii.iter().chain(values).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Input(
            "radii and functional values must be positive and finite".into(),
        ));
    }
    let exponent = blowup_exponent(nl, dim);
    if exponent > 1e-12 {
        return Err(Error::Regime(format!(
            "exponent of R is {exponent} > 0: supercritical, inequality not claimed"
        )));
    }
    let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let slope = fit_slope(&lx, &ly);
    let rhs_factor = match nl.exponents {
        Exponents::Scalar { rho } => Some((2.0 + params.k()).powf(rho / (rho - 1.0))),
        Exponents::System { .. } => None,
    };
    let rmax = radii.iter().copied().fold(0.0, f64::max);
    Ok(BlowupInequalityReport {
        exponent,
        slope,
        holds: slope <= exponent + 0.1,
        radii: radii.to_vec(),
        values: values.to_vec(),
        rhs_factor,
        implied_bound: rhs_factor.map(|f| f * rmax.powf(exponent)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakResidual {
    /// θ(0)∫u₀ξ.
    pub initial_term: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// |lhs − rhs| / max(|rhs|, |initial_term|).
    pub residual: f64,
}

fn trapezoid(t: &[f64], f: &[f64]) -> f64 {
    t.windows(2)
        .zip(f.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
        .sum()
}

/// Residual of the weak identity tested with φ = ξ_R(x)θ(t).
///
/// `nl = None` treats the run as linear (zero source). T and T/2 must be mesh
/// nodes and the record must carry snapshots.
pub fn weak_form_residual(
    record: &EvolutionRecord,
    u0: &Field,
    params: &FracParams,
    nl: Option<&NonlinearitySpec>,
    spec: &TestFunctionSpec,
) -> Result<WeakResidual> {
    if params.k() > 0.0 {
        check_lambda_alpha(spec, params.alpha())?;
    }
    if nl.is_some_and(|n| n.components() != 1) || record.components != 1 {
        return Err(Error::Input("weak-form residual is implemented for scalar runs".into()));
    }
    let snaps = &snapshots(record)?[0];
    let n_end = snapshot_index(record, spec.t_end)?;
    let n_half = snapshot_index(record, 0.5 * spec.t_end)?;
    let grid = *u0.grid();
    let vol = grid.cell_volume();
    let xi = cutoff_field(grid, spec.radius, spec.cutoff)?;
    let lap = spectral_laplacian(&xi)?;
    let dot = |a: &Field, b: &Field| a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>() * vol;

    let nodes = &record.mesh.nodes()[..=n_end];
    let initial_term = theta(0.0, spec) * dot(u0, &xi);

    let a: Vec<f64> = (n_half..=n_end)
        .map(|j| dot(&snaps[j], &xi) * theta_prime(nodes[j], spec))
        .collect();
    let time_term = trapezoid(&nodes[n_half..], &a);

    let mut b = Vec::with_capacity(n_end + 1);
    for (j, &t) in nodes.iter().enumerate() {
        let d = if params.k() > 0.0 {
            params.k() * theta_frac_derivative(t, spec, params.alpha())?
        } else {
            0.0
        };
        b.push(dot(&snaps[j], &lap) * (theta(t, spec) + d));
    }
    let diffusion_term = trapezoid(nodes, &b);

    let rhs = match nl {
        Some(nl) => blowup_functional(record, nl, spec)?,
        None => 0.0,
    };
    let lhs = -initial_term - time_term - diffusion_term;
    let denom = rhs.abs().max(initial_term.abs());
    Ok(WeakResidual {
        initial_term,
        lhs,
        rhs,
        residual: if denom > 0.0 {
            (lhs - rhs).abs() / denom
        } else {
            (lhs - rhs).abs()
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Scalar runs, one per ρ.
    Scalar { rhos: Vec<f64> },
    /// System runs with fixed ρ₁, one per ρ₂.
    System { rho1: f64, rho2s: Vec<f64> },
}

impl SweepAxis {
    pub fn values(&self) -> &[f64] {
        match self {
            SweepAxis::Scalar { rhos } => rhos,
            SweepAxis::System { rho2s, .. } => rho2s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Amplitude {
    /// factor · contraction_radius(C_op).
    Contraction {
        factor: f64,
        c_op: f64,
    },
    Explicit {
        value: f64,
    },
}

/// Gaussian data A·exp(−|x|²/w²) swept over the exponent axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dim: usize,
    pub sigma: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub k: f64,
    pub axis: SweepAxis,
    pub points_per_axis: usize,
    /// None sizes the box as 8√⟨T⟩.
    pub box_half_length: Option<f64>,
    pub t_end: f64,
    pub dt_max: f64,
    pub cfl: f64,
    pub gaussian_width: f64,
    pub amplitude: Amplitude,
    pub blow_factor: f64,
    pub positivity_tol: f64,
    pub picard_tol: f64,
    pub picard_max_iterations: usize,
    /// None uses one grid cell.
    pub epsilon: Option<f64>,
    /// A run reaching T is Global when its final sup norm is below
    /// `tie_low` times the initial one; otherwise Inconclusive.
    pub tie_low: f64,
    pub tie_high: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            sigma: 0.0,
            gamma: 0.0,
            alpha: 0.5,
            k: 1.0,
            axis: SweepAxis::Scalar {
                rhos: vec![2.0, 2.5, 4.0, 5.0],
            },
            points_per_axis: 256,
            box_half_length: None,
            t_end: 40000.0,
            dt_max: 100.0,
            cfl: 0.1,
            gaussian_width: 100.0,
            amplitude: Amplitude::Contraction { factor: 0.1, c_op: 1.0 },
            blow_factor: 1e6,
            positivity_tol: 1e-3,
            picard_tol: 1e-10,
            picard_max_iterations: 50,
            epsilon: None,
            tie_low: 0.5,
            tie_high: 2.0,
        }
    }
}

impl SweepConfig {
    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        crate::config::hash_hex(json.as_bytes())
    }

    pub fn params(&self) -> Result<FracParams> {
        FracParams::new(self.alpha, self.k)
    }

    pub fn grid(&self) -> Result<Grid> {
        let half = match self.box_half_length {
            Some(l) => l,
            None => auto_box_half_length(&self.params()?, self.t_end),
        };
        Grid::new(self.dim, self.points_per_axis, half)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    /// ρ for scalar sweeps, ρ₂ for system sweeps.
    pub value: f64,
    /// ρ₁ρ₂ for system sweeps.
    pub product: Option<f64>,
    /// ρ_c, or (ρ₁ρ₂)_c at this point.
    pub critical: f64,
    pub status: String,
    pub t_blow: Option<f64>,
    pub reason: Option<String>,
    pub amplitude: f64,
    pub r: f64,
    pub p: f64,
    pub final_time: f64,
    /// Final over initial sup norm (largest component).
    pub sup_ratio: f64,
    pub steps: usize,
    pub min_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub axis: Vec<f64>,
    pub statuses: Vec<String>,
    pub rho_c: f64,
    pub points: Vec<SweepPoint>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

pub const SWEEP_SCHEMA_VERSION: u32 = 1;

/// (r, p) used for the scalar run at ρ: r = r_c when r_c > 1 (else 1.5),
/// p the midpoint of (max(r, ρ), rρ).
pub fn sweep_exponents(dim: usize, sigma: f64, gamma: f64, rho: f64) -> (f64, f64) {
    let rc = critical_r(dim, sigma, gamma, rho);
    let r = if rc > 1.0 { rc } else { 1.5 };
    let p = 0.5 * (r.max(rho) + r * rho);
    (r, p)
}

fn classify(record: &EvolutionRecord, cfg: &SweepConfig) -> (String, Option<f64>, Option<String>, f64) {
    let last = record.mesh.len() - 1;
    let ratio = (0..record.components)
        .map(|c| {
            let s0 = record.sup_norms[c][0];
            if s0 > 0.0 {
                record.sup_norms[c][last] / s0
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    match &record.status {
        Status::BlewUp { t_blow } => ("BlewUp".into(), Some(*t_blow), None, ratio),
        Status::Inconclusive { reason } => ("Inconclusive".into(), None, Some(reason.clone()), ratio),
        Status::Global => {
            if ratio < cfg.tie_low {
                ("Global".into(), None, None, ratio)
            } else if ratio <= cfg.tie_high {
                (
                    "Inconclusive".into(),
                    None,
                    Some(format!("final/initial sup ratio {ratio:.3} in the tie zone")),
                    ratio,
                )
            } else {
                (
                    "Inconclusive".into(),
                    None,
                    Some(format!("grew by {ratio:.3} without crossing the blow-up threshold")),
                    ratio,
                )
            }
        }
    }
}

fn run_point(cfg: &SweepConfig, grid: Grid, params: &FracParams, value: f64) -> Result<SweepPoint> {
    let epsilon = cfg.epsilon.unwrap_or(grid.dx());
    let (nl, r, p, critical, product) = match &cfg.axis {
        SweepAxis::Scalar { .. } => {
            let nl = NonlinearitySpec::scalar(cfg.sigma, cfg.gamma, value, epsilon)?;
            let (r, p) = sweep_exponents(cfg.dim, cfg.sigma, cfg.gamma, value);
            (nl, r, p, critical_exponent(cfg.dim, cfg.sigma, cfg.gamma)?, None)
        }
        SweepAxis::System { rho1, .. } => {
            let nl = NonlinearitySpec::system(cfg.sigma, cfg.gamma, *rho1, value, epsilon)?;
            let curve = critical_curve_system(cfg.dim, cfg.sigma, cfg.gamma, *rho1, value)?;
            (nl, 1.5, 3.0, curve.product_c, Some(rho1 * value))
        }
    };
    let amplitude = match &cfg.amplitude {
        Amplitude::Explicit { value } => *value,
        Amplitude::Contraction { factor, c_op } => {
            let q = admissible_q(cfg.dim, r, p)?;
            factor * contraction_radius(&nl, cfg.dim, p, r, q, *c_op)?.radius
        }
    };
    let w = cfg.gaussian_width;
    let u0 = Field::from_fn(grid, |x| amplitude * (-(x[0] * x[0] + x[1] * x[1]) / (w * w)).exp())?;
    let opts = EvolveOptions {
        stepping: Stepping::Adaptive {
            t_end: cfg.t_end,
            dt_max: cfg.dt_max,
            cfl: cfg.cfl,
            stops: Vec::new(),
        },
        blow_factor: cfg.blow_factor,
        positivity_tol: cfg.positivity_tol,
        picard_tol: cfg.picard_tol,
        picard_max_iterations: cfg.picard_max_iterations,
        source: true,
        keep_snapshots: false,
    };
    let record = if nl.components() == 1 {
        duhamel_evolve(&u0, params, &nl, r, p, &opts)?
    } else {
        duhamel_evolve_system(&u0, &u0, params, &nl, r, p, &opts)?
    };
    let (status, t_blow, reason, sup_ratio) = classify(&record, cfg);
    Ok(SweepPoint {
        value,
        product,
        critical,
        status,
        t_blow,
        reason,
        amplitude,
        r,
        p,
        final_time: record.mesh.t_end(),
        sup_ratio,
        steps: record.mesh.len() - 1,
        min_ratio: record.min_ratio,
    })
}

/// Runs every axis point and assembles the report; points run in parallel.
pub fn dichotomy_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    let params = cfg.params()?;
    let rho_c = critical_exponent(cfg.dim, cfg.sigma, cfg.gamma)?;
    let grid = cfg.grid()?;
    if !(cfg.gaussian_width > 0.0 && cfg.t_end > 0.0 && cfg.dt_max > 0.0) {
        return Err(Error::Input("gaussian_width, t_end and dt_max must be > 0".into()));
    }
    let values = cfg.axis.values().to_vec();
    let points: Vec<SweepPoint> = values
        .par_iter()
        .map(|&v| {
            run_point(cfg, grid, &params, v).map_err(|e| Error::Sweep {
                value: v,
                inner: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut metadata = BTreeMap::new();
    metadata.insert("config".into(), serde_json::to_value(cfg).expect("config serializes"));
    metadata.insert("config_hash".into(), cfg.hash().into());
    metadata.insert("box_half_length".into(), grid.half_length().into());
    metadata.insert("dx".into(), grid.dx().into());
    metadata.insert("blow_threshold_factor".into(), cfg.blow_factor.into());
    metadata.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    Ok(SweepReport {
        schema_version: SWEEP_SCHEMA_VERSION,
        axis: values,
        statuses: points.iter().map(|p| p.status.clone()).collect(),
        rho_c,
        points,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frac::{rl_right_derivative, TimeMesh};
    use crate::special::beta_fn;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn critical_values() {
        assert_eq!(critical_exponent(1, 0.0, 0.0).unwrap(), 3.0);
        assert_eq!(critical_exponent(2, 0.0, 0.0).unwrap(), 2.0);
        assert!((critical_exponent(1, -0.5, -0.25).unwrap() - 2.0).abs() < 1e-15);
        assert!(critical_exponent(1, -3.0, 0.0).is_err());
        assert_eq!(critical_curve_system(1, 0.0, 0.0, 3.0, 1.0).unwrap().product_c, 9.0);
        assert_eq!(critical_curve_system(2, 0.0, 0.0, 2.0, 2.0).unwrap().product_c, 4.0);
        let c = critical_curve_system(1, -0.5, 0.0, 1.5, 1.5).unwrap();
        assert!((c.product_c - (1.0 + 1.5 * 2.5)).abs() < 1e-14);
        assert!(critical_curve_system(1, 0.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn critical_equivalences_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let dim = rng.random_range(1..=3usize);
            let gamma = -rng.random_range(0.0..0.9);
            let sigma = -rng.random_range(0.0..(2.0 * (gamma + 1.0)) * 0.999);
            let rho = 1.0 + rng.random_range(0.01..5.0);
            let rc = critical_exponent(dim, sigma, gamma).unwrap();
            assert_eq!(rho > rc, critical_r(dim, sigma, gamma, rho) > 1.0);
            let (r1, r2) = (rng.random_range(1.0..4.0), rng.random_range(1.0..4.0));
            let c = critical_curve_system(dim, sigma, gamma, r1, r2).unwrap();
            assert_eq!(r1 * r2 > c.product_c, c.r1_c > 1.0 && c.r2_c > 1.0);
        }
    }

    #[test]
    fn theta_values() {
        let s = TestFunctionSpec::new(2.0, 3.0, 2.0, CutoffKind::SmoothBump).unwrap();
        assert_eq!(theta(0.0, &s), 1.0);
        assert_eq!(theta(1.0, &s), 1.0);
        assert!((theta(1.5, &s) - 2f64.powf(-3.0)).abs() < 1e-15);
        assert_eq!(theta(2.0, &s), 0.0);
        assert_eq!(theta(5.0, &s), 0.0);
        // θ′ against a central difference
        let h = 1e-6;
        let fd = (theta(1.4 + h, &s) - theta(1.4 - h, &s)) / (2.0 * h);
        assert!((theta_prime(1.4, &s) - fd).abs() < 1e-7);
        assert!(TestFunctionSpec::new(1.0, 2.0, 1.0, CutoffKind::SmoothBump).is_err());
        assert_eq!(default_lambda(1.5), 3.0);
        assert_eq!(default_lambda(3.0), 4.0);
    }

    #[test]
    fn frac_derivative_closed_form() {
        let s = TestFunctionSpec::new(2.0, 1.0, 2.0, CutoffKind::SmoothBump).unwrap();
        let v = theta_frac_derivative(1.0, &s, 0.5).unwrap();
        assert!((v - 1.0 / gamma_fn(1.5).unwrap()).abs() < 1e-12);
        assert!((v - std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-12);
        assert_eq!(theta_frac_derivative(2.0, &s, 0.5).unwrap(), 0.0);
        assert!(theta_frac_derivative(
            1.0,
            &TestFunctionSpec::new(2.0, 0.4, 2.0, CutoffKind::SmoothBump).unwrap(),
            0.5
        )
        .is_err());
        // continuity across T/2 and the bound on [0, T/2)
        let b = theta_frac_derivative_bound(&s, 0.5).unwrap();
        assert!((b - v).abs() < 1e-12);
        let below = theta_frac_derivative(1.0 - 1e-9, &s, 0.5).unwrap();
        assert!((below - v).abs() < 1e-3);
        for t in [0.0, 0.3, 0.7, 0.99] {
            let d = theta_frac_derivative(t, &s, 0.5).unwrap();
            assert!(d > 0.0 && d <= b);
        }
    }

    #[test]
    fn frac_derivative_lower_half_oracle() {
        // λ = 1: ∫_{T/2}^T (s−t)^{−α} ds = ((T−t)^{1−α} − (T/2−t)^{1−α})/(1−α)
        let (tt, alpha) = (3.0, 0.3);
        let s = TestFunctionSpec::new(tt, 1.0, 2.0, CutoffKind::SmoothBump).unwrap();
        for t in [0.0, 0.5, 1.2, 1.49] {
            let exact = 2.0 / tt / gamma_fn(1.0 - alpha).unwrap()
                * ((tt - t).powf(1.0 - alpha) - (0.5 * tt - t).powf(1.0 - alpha))
                / (1.0 - alpha);
            let v = theta_frac_derivative(t, &s, alpha).unwrap();
            assert!((v - exact).abs() < 1e-12 * exact, "{t}: {v} vs {exact}");
        }
        // λ = 2, α = 0.5 at t = 0: expand (T−s) = (s−t)·0 + ... via Beta form on [T/2,T]
        // ∫_{T/2}^T s^{-1/2}(T−s) ds = T^{3/2} ∫_{1/2}^1 x^{-1/2}(1−x) dx
        let s2 = TestFunctionSpec::new(1.0, 2.0, 2.0, CutoffKind::SmoothBump).unwrap();
        let inner = (2.0 - 2.0 * 0.5f64.sqrt()) - (2.0 / 3.0) * (1.0 - 0.5f64.powf(1.5));
        let exact = 4.0 * 2.0 / gamma_fn(0.5).unwrap() * inner;
        assert!((theta_frac_derivative(0.0, &s2, 0.5).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn frac_derivative_matches_numeric() {
        let (tt, alpha) = (1.0, 0.5);
        let s = TestFunctionSpec::new(tt, 2.0, 2.0, CutoffKind::SmoothBump).unwrap();
        let mut errs = Vec::new();
        for m in [64, 128, 256, 512] {
            let mesh = TimeMesh::uniform(tt, m).unwrap();
            let samples: Vec<f64> = mesh.nodes().iter().map(|&t| theta(t, &s)).collect();
            let num = rl_right_derivative(&mesh, &samples, alpha).unwrap();
            let mut err = 0.0f64;
            let mut scale = 0.0f64;
            for (i, &t) in mesh.nodes().iter().enumerate() {
                let exact = theta_frac_derivative(t, &s, alpha).unwrap();
                err = err.max((num.values[i] - exact).abs());
                scale = scale.max(exact.abs());
            }
            errs.push(err / scale);
        }
        for w in errs.windows(2) {
            assert!(w[0] / w[1] >= 1.5, "{errs:?}");
        }
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn lemma43_direct_point() {
        let s = TestFunctionSpec::new(1.0, 2.0, 2.0, CutoffKind::SmoothBump).unwrap();
        let rep = verify_lemma43(&s, 2.0, 0.5, 0.0).unwrap();
        // independent oracle: upper part closed form, lower part by Simpson in u = (T/2 − t)^{1/2}
        let g = gamma_fn(3.0).unwrap() / gamma_fn(2.5).unwrap();
        let upper = 4.0 * g * g * 0.5f64.powi(2) / 2.0;
        let lower = simpson(
            |u| {
                let t = (0.5 - u * u).max(0.0);
                2.0 * u * theta_frac_derivative(t, &s, 0.5).unwrap().powi(2)
            },
            0.0,
            0.5f64.sqrt(),
            2000,
        );
        assert!(
            (rep.lhs - (upper + lower)).abs() < 1e-8 * rep.lhs,
            "{} {}",
            rep.lhs,
            upper + lower
        );
        assert_eq!(rep.holds, rep.lhs <= rep.rhs);
        assert!(rep.holds_sufficient);
        assert!(rep.lhs <= rep.lhs_bounded);
        let c = g * g * 2f64.powf(1.0 - 1.0) / 1.0;
        assert!((rep.constant - c).abs() < 1e-12);
    }

    #[test]
    fn lemma_scaling_in_t() {
        let mut scaled43 = Vec::new();
        let mut scaled44 = Vec::new();
        for tt in [1.0, 4.0, 16.0] {
            let s = TestFunctionSpec::new(tt, 3.0, 2.0, CutoffKind::SmoothBump).unwrap();
            scaled43.push(verify_lemma43(&s, 2.0, 0.5, -0.2).unwrap().scaled_lhs);
            scaled44.push(verify_lemma44(&s, 2.0, -0.2).unwrap().scaled_lhs);
        }
        for v in [scaled43, scaled44] {
            assert!(
                (v[1] / v[0] - 1.0).abs() < 1e-8 && (v[2] / v[0] - 1.0).abs() < 1e-8,
                "{v:?}"
            );
        }
    }

    #[test]
    fn lemma44_gamma_zero_oracle() {
        for (lam, q) in [(2.0, 1.5), (5.0, 3.0), (3.0, 3.0)] {
            let s = TestFunctionSpec::new(2.0, lam, 2.0, CutoffKind::SmoothBump).unwrap();
            let rep = verify_lemma44(&s, q, 0.0).unwrap();
            // τ = 2 − 2t/T maps [T/2, T] onto [0, 1]
            let exact = lam.powf(q) * 2f64.powf(q - 1.0) * 2f64.powf(1.0 - q) / (lam - q + 1.0);
            assert!((rep.lhs - exact).abs() < 1e-10 * exact, "{} {}", rep.lhs, exact);
            assert!(rep.holds_sufficient);
        }
        let s = TestFunctionSpec::new(1.0, 1.2, 2.0, CutoffKind::SmoothBump).unwrap();
        assert!(verify_lemma44(&s, 1.5, 0.0).is_err());
        assert!(verify_lemma43(&s, 3.0, 0.5, 0.0).is_err());
        assert!(verify_lemma43(&s, 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn lemma_q_near_one_finite() {
        let s = TestFunctionSpec::new(1.0, 2.0, 2.0, CutoffKind::SmoothBump).unwrap();
        let rep = verify_lemma43(&s, 1.0 + 1e-9, 0.5, 0.0).unwrap();
        assert!(rep.constant.is_finite() && rep.lhs.is_finite());
    }

    #[test]
    fn lemma_grid_sufficient_constants() {
        let rep = verify_lemma_grid(1.0).unwrap();
        assert_eq!(rep.lemma43.len(), 54);
        assert_eq!(rep.lemma44.len() + rep.skipped44, 54);
        assert!(rep.all_hold_sufficient());
    }

    #[test]
    fn cutoff_shape() {
        for kind in [CutoffKind::SmoothBump, CutoffKind::EigenfunctionProfile] {
            assert_eq!(cutoff_xi([0.0, 0.0], 4.0, kind), 1.0);
            assert_eq!(cutoff_xi([2.0, 0.0], 4.0, kind), 1.0);
            assert_eq!(cutoff_xi([4.0, 0.0], 4.0, kind), 0.0);
            assert_eq!(cutoff_xi([3.0, 3.0], 4.0, kind), 0.0);
            let mut prev = 1.0;
            for i in 0..=100 {
                let v = cutoff_xi([2.0 + 0.02 * i as f64, 0.0], 4.0, kind);
                assert!(v <= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn cutoff_laplacian_scales_like_r_minus_two() {
        // finite differences on the radial profile, 1D and 2D
        for dim in [1usize, 2] {
            let mut ratios = Vec::new();
            for radius in [2.0, 4.0, 8.0] {
                let h = radius * 1e-4;
                let f = |r: f64| cutoff_xi([r, 0.0], radius, CutoffKind::SmoothBump);
                let mut worst = 0.0f64;
                for i in 1..2000 {
                    let r = 0.5 * radius + 0.5 * radius * i as f64 / 2000.0;
                    let xi = f(r);
                    if xi < 1e-6 {
                        continue;
                    }
                    let d2 = (f(r + h) - 2.0 * xi + f(r - h)) / (h * h);
                    let d1 = (f(r + h) - f(r - h)) / (2.0 * h);
                    let lap = d2 + (dim as f64 - 1.0) * d1 / r;
                    worst = worst.max(radius * radius * lap.abs() / xi);
                }
                ratios.push(worst);
            }
            assert!(ratios.iter().all(|r| r.is_finite()));
            assert!((ratios[2] / ratios[0] - 1.0).abs() < 0.05, "{ratios:?}");
        }
    }

    #[test]
    fn spectral_laplacian_of_gaussian() {
        let g = Grid::new(1, 256, 20.0).unwrap();
        let f = Field::from_fn(g, |x| (-x[0] * x[0]).exp()).unwrap();
        let lap = spectral_laplacian(&f).unwrap();
        for i in 0..g.len() {
            let x = g.coord(i);
            let exact = (4.0 * x * x - 2.0) * (-x * x).exp();
            assert!((lap.values()[i] - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn blowup_exponents() {
        let nl = NonlinearitySpec::scalar(0.0, 0.0, 2.0, 0.0).unwrap();
        assert_eq!(blowup_exponent(&nl, 1), -1.0);
        let nl = NonlinearitySpec::scalar(0.0, 0.0, 3.0, 0.0).unwrap();
        assert_eq!(blowup_exponent(&nl, 1), 0.0);
        let nl = NonlinearitySpec::system(0.0, 0.0, 3.0, 3.0, 0.0).unwrap();
        assert_eq!(blowup_exponent(&nl, 1), 0.0);
        let params = FracParams::new(0.5, 1.0).unwrap();
        let sup = NonlinearitySpec::scalar(0.0, 0.0, 4.0, 0.0).unwrap();
        assert!(matches!(
            verify_blowup_inequality(&[2.0, 4.0], &[1.0, 1.0], &params, &sup, 1),
            Err(Error::Regime(_))
        ));
        let nl = NonlinearitySpec::scalar(0.0, 0.0, 2.0, 0.0).unwrap();
        let radii = [2.0, 4.0, 8.0, 16.0];
        let vals: Vec<f64> = radii.iter().map(|r: &f64| 3.0 * r.powf(-1.2)).collect();
        let rep = verify_blowup_inequality(&radii, &vals, &params, &nl, 1).unwrap();
        assert!((rep.slope + 1.2).abs() < 1e-12 && rep.holds);
        assert!((rep.rhs_factor.unwrap() - 9.0).abs() < 1e-12);
    }

    fn const_record(grid: Grid, value: f64, mesh: TimeMesh) -> EvolutionRecord {
        let f = Field::from_fn(grid, |_| value).unwrap();
        let n = mesh.len();
        EvolutionRecord {
            mesh,
            norms_r: vec![vec![0.0; n]],
            norms_p: vec![vec![0.0; n]],
            sup_norms: vec![vec![value; n]],
            r: 1.5,
            p: 3.0,
            status: Status::Global,
            blow_threshold: 1.0,
            components: 1,
            min_ratio: 0.0,
            max_picard_iterations: 0,
            snapshots: Some(vec![vec![f; n]]),
        }
    }

    #[test]
    fn functional_separable_and_zero() {
        let g = Grid::new(1, 512, 8.0).unwrap();
        let spec = TestFunctionSpec::new(4.0, 3.0, 4.0, CutoffKind::SmoothBump).unwrap();
        let mesh = TimeMesh::uniform(4.0, 400).unwrap();
        let nl = NonlinearitySpec::scalar(0.0, 0.0, 2.0, 0.0).unwrap();
        assert_eq!(
            blowup_functional(&const_record(g, 0.0, mesh.clone()), &nl, &spec).unwrap(),
            0.0
        );
        let one = blowup_functional(&const_record(g, 1.0, mesh.clone()), &nl, &spec).unwrap();
        // ∫θ = T/2 + T/(2(λ+1)); ∫ξ by Simpson on the radial profile
        let time = 2.0 + 2.0 / 4.0;
        let space = 2.0 * (2.0 + simpson(|r| cutoff_xi([r, 0.0], 4.0, CutoffKind::SmoothBump), 2.0, 4.0, 4000));
        assert!((one - time * space).abs() < 1e-4 * one, "{one} {}", time * space);
        let two = blowup_functional(&const_record(g, 2.0, mesh.clone()), &nl, &spec).unwrap();
        assert!(two > one);
        let off = TestFunctionSpec::new(3.995, 3.0, 4.0, CutoffKind::SmoothBump).unwrap();
        assert!(blowup_functional(&const_record(g, 1.0, mesh), &nl, &off).is_err());
    }

    #[test]
    fn beta_oracle_for_lemma44_gamma_nonzero() {
        // γ(1−q) = c: ∫_{T/2}^T t^c (T−t)^{λ−q} dt with T = 1 equals an incomplete Beta; check
        // against Simpson after τ = 1 − t
        let (lam, q, gamma) = (5.0, 2.0, -0.2);
        let s = TestFunctionSpec::new(1.0, lam, 2.0, CutoffKind::SmoothBump).unwrap();
        let rep = verify_lemma44(&s, q, gamma).unwrap();
        let c = gamma * (1.0 - q);
        let oracle =
            2f64.powf(lam) * lam.powf(q) * simpson(|tau| (1.0 - tau).powf(c) * tau.powf(lam - q), 0.0, 0.5, 2000);
        assert!((rep.lhs - oracle).abs() < 1e-10 * oracle);
        let _ = beta_fn;
    }

    #[test]
    fn weak_residual_zero_data() {
        let g = Grid::new(1, 128, 16.0).unwrap();
        let spec = TestFunctionSpec::new(4.0, 3.0, 4.0, CutoffKind::SmoothBump).unwrap();
        let mesh = TimeMesh::uniform(4.0, 40).unwrap();
        let params = FracParams::new(0.5, 1.0).unwrap();
        let rec = const_record(g, 0.0, mesh);
        let res = weak_form_residual(&rec, &Field::zeros(g), &params, None, &spec).unwrap();
        assert_eq!(res.residual, 0.0);
    }

    #[test]
    fn weak_residual_heat_converges() {
        let params = FracParams::new(0.5, 0.0).unwrap();
        let spec = TestFunctionSpec::new(4.0, 3.0, 2.0, CutoffKind::SmoothBump).unwrap();
        let mut res = Vec::new();
        for m in [20, 40, 80] {
            let g = Grid::new(1, 128, 16.0).unwrap();
            let u0 = Field::from_fn(g, |x| (-x[0] * x[0]).exp()).unwrap();
            let mut opts = EvolveOptions::fixed(TimeMesh::uniform(4.0, m).unwrap());
            opts.source = false;
            opts.keep_snapshots = true;
            let nl = NonlinearitySpec::scalar(0.0, 0.0, 2.0, 0.0).unwrap();
            let rec = duhamel_evolve(&u0, &params, &nl, 1.5, 3.0, &opts).unwrap();
            res.push(weak_form_residual(&rec, &u0, &params, None, &spec).unwrap().residual);
        }
        assert!(res[2] < res[1] && res[1] < res[0], "{res:?}");
        assert!(res[2] < 1e-3, "{res:?}");
    }

    #[test]
    fn sweep_empty_and_config_hash() {
        let cfg = SweepConfig {
            axis: SweepAxis::Scalar { rhos: vec![] },
            ..SweepConfig::default()
        };
        let rep = dichotomy_sweep(&cfg).unwrap();
        assert!(rep.statuses.is_empty() && rep.points.is_empty());
        assert_eq!(rep.rho_c, 3.0);
        assert_eq!(cfg.hash(), cfg.clone().hash());
        let other = SweepConfig { k: 0.0, ..cfg.clone() };
        assert_ne!(cfg.hash(), other.hash());
        assert_eq!(rep.metadata["config_hash"], serde_json::Value::from(cfg.hash()));
    }

    #[test]
    fn sweep_exponent_choice() {
        let (r, p) = sweep_exponents(1, 0.0, 0.0, 2.0);
        assert_eq!((r, p), (1.5, 2.5));
        let (r, p) = sweep_exponents(1, 0.0, 0.0, 5.0);
        assert_eq!((r, p), (2.0, 7.5));
        assert!(admissible_q(1, r, p).is_ok());
    }

    #[test]
    fn sweep_small_quick() {
        // short horizon: large data blows up quickly, tiny data decays
        let base = SweepConfig {
            points_per_axis: 64,
            box_half_length: Some(200.0),
            t_end: 200.0,
            dt_max: 5.0,
            gaussian_width: 10.0,
            ..SweepConfig::default()
        };
        let big = SweepConfig {
            amplitude: Amplitude::Explicit { value: 3.0 },
            axis: SweepAxis::Scalar { rhos: vec![2.0] },
            ..base.clone()
        };
        assert_eq!(dichotomy_sweep(&big).unwrap().statuses, vec!["BlewUp"]);
        let tiny = SweepConfig {
            amplitude: Amplitude::Explicit { value: 1e-3 },
            axis: SweepAxis::Scalar { rhos: vec![4.0] },
            ..base
        };
        assert_eq!(dichotomy_sweep(&tiny).unwrap().statuses, vec!["Global"]);
    }
}
