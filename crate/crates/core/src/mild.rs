//! Mild solutions of u_t − (1 + k D^α)Δu = w_σ(x) t^γ u^ρ and of the coupled
//! system, marched in Fourier space.
//!
//! Each mode obeys û(t) + μ (h ∗ û)(t) = û₀ + ∫₀ᵗ τ^γ Ĝ(τ) dτ, which is the
//! Duhamel formula written through the relaxation equation. Both convolutions
//! use product integration on the (possibly nonuniform) step sequence, so the
//! linear part reproduces the Volterra relaxation solver exactly and steps can
//! shrink as the solution grows.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frac::{h_convolution_row, linear_panel_weights, FracParams, TimeMesh};
use crate::special::beta_fn;
use crate::spectral::{lp_norm, Field, Fourier, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exponents {
    Scalar { rho: f64 },
    System { rho1: f64, rho2: f64 },
}

/// Source |x|^σ t^γ u^ρ (or the coupled pair) with weight regularization ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonlinearitySpec {
    pub sigma: f64,
    pub gamma: f64,
    pub exponents: Exponents,
    /// w_σ(x) = (|x|² + ε²)^{σ/2}.
    pub epsilon: f64,
}

fn check_weights(sigma: f64, gamma: f64, epsilon: f64) -> Result<()> {
    if !(sigma <= 0.0) {
        return Err(Error::Domain(format!("sigma must be <= 0, got {sigma}")));
    }
    if !(gamma <= 0.0) {
        return Err(Error::Domain(format!("gamma must be <= 0, got {gamma}")));
    }
    if !(sigma + 2.0 * (gamma + 1.0) > 0.0) {
        return Err(Error::Domain(format!(
            "sigma+2(gamma+1)>0 violated (sigma = {sigma}, gamma = {gamma})"
        )));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("epsilon must be >= 0, got {epsilon}")));
    }
    Ok(())
}

impl NonlinearitySpec {
    pub fn scalar(sigma: f64, gamma: f64, rho: f64, epsilon: f64) -> Result<Self> {
        check_weights(sigma, gamma, epsilon)?;
        if !(rho > 1.0) || !rho.is_finite() {
            return Err(Error::Domain(format!("rho must be > 1, got {rho}")));
        }
        Ok(Self {
            sigma,
            gamma,
            exponents: Exponents::Scalar { rho },
            epsilon,
        })
    }

    pub fn system(sigma: f64, gamma: f64, rho1: f64, rho2: f64, epsilon: f64) -> Result<Self> {
        check_weights(sigma, gamma, epsilon)?;
        if !(rho1 >= 1.0 && rho2 >= 1.0) || !(rho1 * rho2 > 1.0) || !(rho1 * rho2).is_finite() {
            return Err(Error::Domain(format!(
                "system exponents need rho1, rho2 >= 1 and rho1*rho2 > 1, got ({rho1}, {rho2})"
            )));
        }
        Ok(Self {
            sigma,
            gamma,
            exponents: Exponents::System { rho1, rho2 },
            epsilon,
        })
    }

    pub fn components(&self) -> usize {
        match self.exponents {
            Exponents::Scalar { .. } => 1,
            Exponents::System { .. } => 2,
        }
    }

    /// Scalar exponent; errors for the system.
    pub fn rho(&self) -> Result<f64> {
        match self.exponents {
            Exponents::Scalar { rho } => Ok(rho),
            Exponents::System { .. } => Err(Error::Input("scalar exponent requested from a system nonlinearity".into())),
        }
    }

    /// Regularized spatial weight at radius r.
    pub fn weight(&self, r: f64) -> f64 {
        if self.sigma == 0.0 {
            1.0
        } else {
            (r * r + self.epsilon * self.epsilon).powf(0.5 * self.sigma)
        }
    }

    /// (partner component, exponent) feeding the source of component c.
    fn source_of(&self, c: usize) -> (usize, f64) {
        match self.exponents {
            Exponents::Scalar { rho } => (0, rho),
            Exponents::System { rho1, rho2 } => {
                if c == 0 {
                    (1, rho1)
                } else {
                    (0, rho2)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Global,
    BlewUp { t_blow: f64 },
    Inconclusive { reason: String },
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Global => "Global",
            Status::BlewUp { .. } => "BlewUp",
            Status::Inconclusive { .. } => "Inconclusive",
        }
    }
}

/// Time series of norms and the final classification of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionRecord {
    pub mesh: TimeMesh,
    /// `norms_r[c][n]` for component c at node n.
    pub norms_r: Vec<Vec<f64>>,
    pub norms_p: Vec<Vec<f64>>,
    pub sup_norms: Vec<Vec<f64>>,
    pub r: f64,
    pub p: f64,
    pub status: Status,
    pub blow_threshold: f64,
    pub components: usize,
    /// Most negative min/max ratio seen over all nodes and components.
    pub min_ratio: f64,
    /// Largest Picard iteration count over all steps.
    pub max_picard_iterations: usize,
    /// `snapshots[c][n]`, present when requested.
    pub snapshots: Option<Vec<Vec<Field>>>,
}

impl EvolutionRecord {
    pub fn times(&self) -> &[f64] {
        self.mesh.nodes()
    }

    /// Largest component L^r norm at each node.
    pub fn max_norm_r(&self) -> Vec<f64> {
        (0..self.mesh.len())
            .map(|n| self.norms_r.iter().map(|c| c[n]).fold(0.0, f64::max))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stepping {
    /// March on the given nodes.
    Fixed(TimeMesh),
    /// Steps dt = min(dt_max, cfl / growth rate), preceded by a geometric
    /// start of 17 nodes spanning eight decades below the first step.
    /// Every time in `stops` becomes a node.
    Adaptive {
        t_end: f64,
        dt_max: f64,
        cfl: f64,
        stops: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub stepping: Stepping,
    /// Blow-up is declared once ‖u‖_r ≥ blow_factor · ‖u₀‖_r.
    pub blow_factor: f64,
    /// Runs stop with an error once min u < −positivity_tol · max u.
    pub positivity_tol: f64,
    pub picard_tol: f64,
    pub picard_max_iterations: usize,
    /// False disables the source (linear flow).
    pub source: bool,
    pub keep_snapshots: bool,
}

impl EvolveOptions {
    pub fn adaptive(t_end: f64, dt_max: f64) -> Self {
        Self {
            stepping: Stepping::Adaptive {
                t_end,
                dt_max,
                cfl: 0.1,
                stops: Vec::new(),
            },
            ..Self::fixed(TimeMesh::uniform(1.0, 1).unwrap())
        }
    }

    pub fn fixed(mesh: TimeMesh) -> Self {
        Self {
            stepping: Stepping::Fixed(mesh),
            blow_factor: 1e6,
            positivity_tol: 1e-3,
            picard_tol: 1e-10,
            picard_max_iterations: 50,
            source: true,
            keep_snapshots: false,
        }
    }
}

/// 1/q = N/2 (1/r − 1/p); requires r < p and 1/q ∈ (0, 1).
pub fn admissible_q(dim: usize, r: f64, p: f64) -> Result<f64> {
    if !(r >= 1.0 && p > r) {
        return Err(Error::Precondition(format!(
            "admissible triplet needs 1 <= r < p, got r = {r}, p = {p}"
        )));
    }
    let inv_q = 0.5 * dim as f64 * (1.0 / r - 1.0 / p);
    if !(inv_q < 1.0) {
        return Err(Error::Precondition(format!(
            "N/2(1/r - 1/p) = {inv_q} must be < 1 (p < Nr/(N-2r)_+)"
        )));
    }
    Ok(1.0 / inv_q)
}

/// r_c = N(ρ−1)/(σ+2γ+2).
pub fn critical_r(dim: usize, sigma: f64, gamma: f64, rho: f64) -> f64 {
    dim as f64 * (rho - 1.0) / (sigma + 2.0 * gamma + 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Radius {
    pub radius: f64,
    pub b1: f64,
}

fn b1(nl: &NonlinearitySpec, dim: usize, p: f64, q: f64) -> Result<(f64, f64)> {
    let rho = nl.rho()?;
    let x = 1.0 - dim as f64 * (rho - 1.0) / (2.0 * p) + 0.5 * nl.sigma;
    if !(x > 0.0) {
        return Err(Error::Regime(format!(
            "1 - N(rho-1)/(2p) + sigma/2 > 0 violated ({x}); p too small for rho = {rho}"
        )));
    }
    let y = 1.0 + nl.gamma - rho / q;
    if !(y > 0.0) {
        return Err(Error::Regime(format!(
            "1 + gamma - rho/q > 0 violated ({y}); p too large for rho = {rho}"
        )));
    }
    Ok((rho, beta_fn(x, y)?))
}

/// B₁ = B(1 − N(ρ−1)/(2p) + σ/2, 1 + γ − ρ/q) and radius (2 C_op B₁)^{1/(1−ρ)}.
pub fn contraction_radius(nl: &NonlinearitySpec, dim: usize, p: f64, r: f64, q: f64, c_op: f64) -> Result<Radius> {
    let _ = r;
    if !(c_op > 0.0) {
        return Err(Error::Domain(format!("C_op must be > 0, got {c_op}")));
    }
    let (rho, b1) = b1(nl, dim, p, q)?;
    Ok(Radius {
        radius: (2.0 * c_op * b1).powf(1.0 / (1.0 - rho)),
        b1,
    })
}

/// Upper bound on ⟨T⟩ for the local existence time; requires r > r_c.
#[allow(clippy::too_many_arguments)]
pub fn local_existence_horizon(
    norm_u0_r: f64,
    nl: &NonlinearitySpec,
    dim: usize,
    r: f64,
    p: f64,
    q: f64,
    c_op: f64,
) -> Result<f64> {
    let rho = nl.rho()?;
    let rc = critical_r(dim, nl.sigma, nl.gamma, rho);
    if !(r > rc) {
        return Err(Error::Regime(format!("horizon needs r > r_c = {rc}, got r = {r}")));
    }
    if !(norm_u0_r >= 0.0) {
        return Err(Error::Domain(format!("norm must be >= 0, got {norm_u0_r}")));
    }
    let (_, b1) = b1(nl, dim, p, q)?;
    let denom = dim as f64 * (rho - 1.0) / (2.0 * r) - 0.5 * nl.sigma - nl.gamma - 1.0;
    if norm_u0_r == 0.0 {
        return Ok(f64::INFINITY);
    }
    let base = 2f64.powf(rho) * c_op.powf(rho) * b1 * norm_u0_r.powf(rho - 1.0);
    Ok(base.powf(1.0 / denom))
}

struct Marcher<'a> {
    params: FracParams,
    nl: &'a NonlinearitySpec,
    fourier: Fourier,
    mu: Vec<f64>,
    weight: Vec<f64>,
    comps: usize,
}

impl Marcher<'_> {
    /// w_σ · max(f, 0)^ρ in physical space, transformed.
    fn source_hat(&self, fields: &[Vec<f64>], c: usize) -> Vec<Complex64> {
        let (src, rho) = self.nl.source_of(c);
        let g: Vec<f64> = fields[src]
            .iter()
            .zip(&self.weight)
            .map(|(&u, &w)| w * u.max(0.0).powf(rho))
            .collect();
        self.fourier.forward(&g)
    }

    /// ρ_c max(source_c)/max(field_c), the relative growth rate used for step control.
    fn growth_rate(&self, fields: &[Vec<f64>], t: f64) -> f64 {
        let tg = if t > 0.0 { t.powf(self.nl.gamma) } else { 1.0 };
        (0..self.comps)
            .map(|c| {
                let (src, rho) = self.nl.source_of(c);
                let smax = fields[src]
                    .iter()
                    .zip(&self.weight)
                    .map(|(&u, &w)| w * u.max(0.0).powf(rho))
                    .fold(0.0, f64::max);
                let fmax = fields[c].iter().copied().fold(0.0, f64::max).max(1e-300);
                rho * tg * smax / fmax
            })
            .fold(0.0, f64::max)
    }
}

fn validate_inputs(u0: &[&Field], nl: &NonlinearitySpec, r: f64, p: f64) -> Result<()> {
    let grid = u0[0].grid();
    if u0.iter().any(|f| f.grid() != grid) {
        return Err(Error::Input("initial fields live on different grids".into()));
    }
    for f in u0 {
        if f.min() < 0.0 {
            return Err(Error::Input("initial data must be nonnegative".into()));
        }
    }
    if nl.sigma < 0.0 && nl.epsilon == 0.0 {
        return Err(Error::Input(
            "sigma < 0 needs a positive weight regularization epsilon on a grid containing the origin".into(),
        ));
    }
    admissible_q(grid.dim(), r, p)?;
    Ok(())
}

fn march(
    u0: &[&Field],
    params: &FracParams,
    nl: &NonlinearitySpec,
    r: f64,
    p: f64,
    opts: &EvolveOptions,
) -> Result<EvolutionRecord> {
    validate_inputs(u0, nl, r, p)?;
    let grid: Grid = *u0[0].grid();
    let comps = u0.len();
    let m = Marcher {
        params: *params,
        nl,
        fourier: Fourier::new(grid),
        mu: grid.eigenvalues(),
        weight: (0..grid.len()).map(|i| nl.weight(grid.radius(i))).collect(),
        comps,
    };
    let nmodes = grid.len();

    let mut fields: Vec<Vec<f64>> = u0.iter().map(|f| f.values().to_vec()).collect();
    let u0_hat: Vec<Vec<Complex64>> = fields.iter().map(|f| m.fourier.forward(f)).collect();
    let mut history: Vec<Vec<Vec<Complex64>>> = u0_hat.iter().map(|h| vec![h.clone()]).collect();
    let mut g_prev: Vec<Vec<Complex64>> = (0..comps)
        .map(|c| {
            if opts.source {
                m.source_hat(&fields, c)
            } else {
                vec![Complex64::new(0.0, 0.0); nmodes]
            }
        })
        .collect();
    let mut q_acc: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); nmodes]; comps];

    let norm = |f: &[f64], e: f64| -> Result<f64> { lp_norm(&Field::new(grid, f.to_vec())?, e) };
    let mut norms_r: Vec<Vec<f64>> = Vec::with_capacity(comps);
    let mut norms_p: Vec<Vec<f64>> = Vec::with_capacity(comps);
    let mut sup_norms: Vec<Vec<f64>> = Vec::with_capacity(comps);
    for f in &fields {
        norms_r.push(vec![norm(f, r)?]);
        norms_p.push(vec![norm(f, p)?]);
        sup_norms.push(vec![norm(f, f64::INFINITY)?]);
    }
    let n0 = norms_r.iter().map(|v| v[0]).fold(0.0, f64::max);
    let blow_threshold = if n0 > 0.0 {
        opts.blow_factor * n0
    } else {
        opts.blow_factor
    };
    let mut snapshots: Option<Vec<Vec<Field>>> = opts
        .keep_snapshots
        .then(|| u0.iter().map(|f| vec![(*f).clone()]).collect());

    let mut times = vec![0.0];
    let (t_end, mut pending, mut stops): (f64, Vec<f64>, Vec<f64>) = match &opts.stepping {
        Stepping::Fixed(mesh) => (
            mesh.t_end(),
            mesh.nodes()[1..].iter().rev().copied().collect(),
            Vec::new(),
        ),
        Stepping::Adaptive {
            t_end,
            dt_max,
            cfl,
            stops,
        } => {
            if !(*t_end > 0.0 && *dt_max > 0.0 && *cfl > 0.0) {
                return Err(Error::Input(
                    "adaptive stepping needs positive t_end, dt_max and cfl".into(),
                ));
            }
            let rate = if opts.source { m.growth_rate(&fields, 0.0) } else { 0.0 };
            let first = if rate > 0.0 { (cfl / rate).min(*dt_max) } else { *dt_max }.min(*t_end);
            let start: Vec<f64> = (0..=16).map(|i| first * 10f64.powf(-8.0 + 0.5 * i as f64)).collect();
            let mut stops: Vec<f64> = stops.iter().copied().filter(|&s| s > 0.0 && s < *t_end).collect();
            stops.sort_by(|a, b| b.total_cmp(a));
            (*t_end, start.into_iter().rev().collect(), stops)
        }
    };

    let mut status = Status::Global;
    let mut min_ratio = 0.0f64;
    let mut max_iters = 0usize;
    loop {
        let t_prev = *times.last().unwrap();
        if t_prev >= t_end * (1.0 - 1e-14) {
            break;
        }
        let near = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(a.abs());
        while pending.last().is_some_and(|&t| t <= t_prev || near(t, t_prev)) {
            pending.pop();
        }
        while stops.last().is_some_and(|&t| t <= t_prev || near(t, t_prev)) {
            stops.pop();
        }
        let (candidate, from_pending) = match pending.last() {
            Some(&t) => (t, true),
            None => match &opts.stepping {
                Stepping::Fixed(_) => break,
                Stepping::Adaptive { dt_max, cfl, .. } => {
                    let rate = if opts.source {
                        m.growth_rate(&fields, t_prev)
                    } else {
                        0.0
                    };
                    let dt = if rate > 0.0 { (cfl / rate).min(*dt_max) } else { *dt_max };
                    let dt = dt.min(t_end - t_prev);
                    if dt <= 1e-15 * t_prev {
                        status = Status::Inconclusive {
                            reason: format!("step size underflow at t = {t_prev}"),
                        };
                        break;
                    }
                    if t_end - (t_prev + dt) < 1e-12 * t_end {
                        (t_end, false)
                    } else {
                        (t_prev + dt, false)
                    }
                }
            },
        };
        let t_n = match stops.last() {
            Some(&s) if s < candidate || near(s, candidate) => {
                if from_pending && near(s, candidate) {
                    pending.pop();
                }
                stops.pop();
                s
            }
            _ => {
                if from_pending {
                    pending.pop();
                }
                candidate
            }
        };
        times.push(t_n);
        let n = times.len() - 1;
        let d = t_n - t_prev;
        let row = h_convolution_row(&times, n, &m.params);
        let (wa, wb) = if opts.source {
            linear_panel_weights(t_prev, d, nl.gamma)
        } else {
            (0.0, 0.0)
        };

        // explicit part of every mode
        let base: Vec<Vec<Complex64>> = (0..comps)
            .map(|c| {
                let mut b: Vec<Complex64> = u0_hat[c]
                    .iter()
                    .zip(&q_acc[c])
                    .zip(&g_prev[c])
                    .map(|((u, q), g)| u + q + wa * g)
                    .collect();
                for (j, hj) in history[c].iter().enumerate() {
                    let w = row[j];
                    for ((bi, h), mu) in b.iter_mut().zip(hj).zip(&m.mu) {
                        *bi -= (w * mu) * h;
                    }
                }
                b
            })
            .collect();
        let denom: Vec<f64> = m.mu.iter().map(|mu| 1.0 + mu * row[n]).collect();

        let mut hats: Vec<Vec<Complex64>> = vec![vec![]; comps];
        let mut g_new: Vec<Vec<Complex64>> = vec![vec![]; comps];
        let mut converged = !opts.source;
        let mut iters = 0;
        let mut guess = fields.clone();
        loop {
            iters += 1;
            let g_iter: Vec<Vec<Complex64>> = (0..comps)
                .map(|c| {
                    if opts.source {
                        m.source_hat(&guess, c)
                    } else {
                        vec![Complex64::new(0.0, 0.0); nmodes]
                    }
                })
                .collect();
            let mut change = 0.0f64;
            let mut next = Vec::with_capacity(comps);
            for c in 0..comps {
                let h: Vec<Complex64> = base[c]
                    .iter()
                    .zip(&g_iter[c])
                    .zip(&denom)
                    .map(|((b, g), dn)| (b + wb * g) / dn)
                    .collect();
                let (vals, _) = m.fourier.inverse(h.clone());
                let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
                let diff = vals
                    .iter()
                    .zip(&guess[c])
                    .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
                change = change.max(diff / scale);
                hats[c] = h;
                next.push(vals);
            }
            guess = next;
            g_new = g_iter;
            if !opts.source || change < opts.picard_tol {
                converged = true;
                break;
            }
            if iters >= opts.picard_max_iterations || !change.is_finite() {
                break;
            }
        }
        max_iters = max_iters.max(iters);
        fields = guess;
        if !converged {
            times.pop();
            status = Status::Inconclusive {
                reason: format!("fixed-point iteration did not converge at t = {t_n}"),
            };
            break;
        }
        if opts.source {
            // source at the new node from the converged field
            g_new = (0..comps).map(|c| m.source_hat(&fields, c)).collect();
            for c in 0..comps {
                for ((q, a), b) in q_acc[c].iter_mut().zip(&g_prev[c]).zip(&g_new[c]) {
                    *q += wa * a + wb * b;
                }
            }
        }
        g_prev = g_new;
        for c in 0..comps {
            history[c].push(std::mem::take(&mut hats[c]));
        }

        let finite = fields.iter().all(|f| f.iter().all(|v| v.is_finite()));
        if !finite {
            for c in 0..comps {
                norms_r[c].push(f64::INFINITY);
                norms_p[c].push(f64::INFINITY);
                sup_norms[c].push(f64::INFINITY);
            }
            status = Status::BlewUp { t_blow: t_n };
            break;
        }
        for c in 0..comps {
            norms_r[c].push(norm(&fields[c], r)?);
            norms_p[c].push(norm(&fields[c], p)?);
            sup_norms[c].push(norm(&fields[c], f64::INFINITY)?);
            if let Some(s) = snapshots.as_mut() {
                s[c].push(Field::new(grid, fields[c].clone())?);
            }
        }
        for f in &fields {
            let (lo, hi) = f.iter().fold((0.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
            if hi > 0.0 {
                let ratio = lo / hi;
                min_ratio = min_ratio.min(ratio);
                if ratio < -opts.positivity_tol {
                    return Err(Error::Positivity { t: t_n, ratio });
                }
            }
        }
        if norms_r.iter().any(|v| v[n] >= blow_threshold) {
            status = Status::BlewUp { t_blow: t_n };
            break;
        }
    }

    Ok(EvolutionRecord {
        mesh: TimeMesh::from_nodes(times)?,
        norms_r,
        norms_p,
        sup_norms,
        r,
        p,
        status,
        blow_threshold,
        components: comps,
        min_ratio,
        max_picard_iterations: max_iters,
        snapshots,
    })
}

/// Evolves the scalar problem from `u0`.
pub fn duhamel_evolve(
    u0: &Field,
    params: &FracParams,
    nl: &NonlinearitySpec,
    r: f64,
    p: f64,
    opts: &EvolveOptions,
) -> Result<EvolutionRecord> {
    if nl.components() != 1 {
        return Err(Error::Input("duhamel_evolve needs a scalar nonlinearity".into()));
    }
    march(&[u0], params, nl, r, p, opts)
}

/// Evolves the coupled system u_t − LΔu = w t^γ v^{ρ₁}, v_t − LΔv = w t^γ u^{ρ₂}.
pub fn duhamel_evolve_system(
    u0: &Field,
    v0: &Field,
    params: &FracParams,
    nl: &NonlinearitySpec,
    r: f64,
    p: f64,
    opts: &EvolveOptions,
) -> Result<EvolutionRecord> {
    if nl.components() != 2 {
        return Err(Error::Input("duhamel_evolve_system needs a system nonlinearity".into()));
    }
    march(&[u0, v0], params, nl, r, p, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{SolutionOperator, VolterraMultiplier};

    fn gaussian(grid: Grid, amp: f64, w: f64) -> Field {
        Field::from_fn(grid, |x| amp * (-(x[0] * x[0] + x[1] * x[1]) / (w * w)).exp()).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(NonlinearitySpec::scalar(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(NonlinearitySpec::scalar(0.5, 0.0, 2.0, 0.0).is_err());
        assert!(NonlinearitySpec::scalar(-3.0, 0.0, 2.0, 0.0).is_err());
        assert!(NonlinearitySpec::scalar(0.0, 0.1, 2.0, 0.0).is_err());
        assert!(NonlinearitySpec::system(0.0, 0.0, 1.0, 1.0, 0.0).is_err());
        assert!(NonlinearitySpec::system(0.0, 0.0, 0.5, 4.0, 0.0).is_err());
        let s = NonlinearitySpec::system(0.0, 0.0, 3.0, 1.0, 0.0).unwrap();
        assert_eq!(s.components(), 2);
        assert!(s.rho().is_err());
        let w = NonlinearitySpec::scalar(-1.0, 0.0, 2.0, 0.5).unwrap();
        assert!((w.weight(0.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn q_from_triplet() {
        assert!((admissible_q(1, 1.5, 2.0).unwrap() - 12.0).abs() < 1e-12);
        assert!(admissible_q(1, 2.0, 2.0).is_err());
        // 1/q < 1 iff p < Nr/(N-2r)_+
        assert!(admissible_q(3, 1.0, 3.0).is_err());
        assert!(admissible_q(3, 1.0, 2.9).is_ok());
    }

    #[test]
    fn radius_properties() {
        let nl = NonlinearitySpec::scalar(0.0, 0.0, 4.0, 0.0).unwrap();
        let q = admissible_q(1, 1.5, 2.0).unwrap();
        let rad = contraction_radius(&nl, 1, 2.0, 1.5, q, 1.0).unwrap();
        let expect = crate::special::beta_fn(0.25, 2.0 / 3.0).unwrap();
        assert!((rad.b1 - expect).abs() < 1e-12 * expect);
        let doubled = contraction_radius(&nl, 1, 2.0, 1.5, q, 2.0).unwrap();
        assert!((doubled.radius / rad.radius - 2f64.powf(1.0 / (1.0 - 4.0))).abs() < 1e-12);
        // p below the regime
        assert!(matches!(
            contraction_radius(&nl, 1, 1.0, 0.9, 3.0, 1.0),
            Err(Error::Regime(_))
        ));
        assert!(matches!(
            contraction_radius(&nl, 1, 2.0, 1.5, 2.0, 1.0),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn horizon_properties() {
        let nl = NonlinearitySpec::scalar(0.0, 0.0, 2.0, 0.0).unwrap();
        let q = admissible_q(1, 2.0, 3.0).unwrap();
        let h1 = local_existence_horizon(1.0, &nl, 1, 2.0, 3.0, q, 1.0).unwrap();
        let h2 = local_existence_horizon(2.0, &nl, 1, 2.0, 3.0, q, 1.0).unwrap();
        let e = 1.0 / (1.0 / 4.0 - 1.0);
        assert!(h1.is_finite() && h1 > 0.0);
        assert!((h2 / h1 - 2f64.powf(e)).abs() < 1e-12);
        assert!(local_existence_horizon(1e-12, &nl, 1, 2.0, 3.0, q, 1.0).unwrap() > 1e14);
        assert_eq!(
            local_existence_horizon(0.0, &nl, 1, 2.0, 3.0, q, 1.0).unwrap(),
            f64::INFINITY
        );
        assert!(matches!(
            local_existence_horizon(1.0, &nl, 1, 0.5, 3.0, q, 1.0),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = Grid::new(1, 64, 10.0).unwrap();
        let params = FracParams::new(0.5, 1.0).unwrap();
        let nl = NonlinearitySpec::scalar(0.0, 0.0, 2.0, 0.0).unwrap();
        let rec = duhamel_evolve(
            &Field::zeros(g),
            &params,
            &nl,
            1.5,
            3.0,
            &EvolveOptions::adaptive(10.0, 1.0),
        )
        .unwrap();
        assert_eq!(rec.status, Status::Global);
        assert!(rec.norms_r[0].iter().all(|&v| v == 0.0));
        let nls = NonlinearitySpec::system(0.0, 0.0, 3.0, 1.0, 0.0).unwrap();
        let rec = duhamel_evolve_system(
            &Field::zeros(g),
            &Field::zeros(g),
            &params,
            &nls,
            1.5,
            3.0,
            &EvolveOptions::adaptive(10.0, 1.0),
        )
        .unwrap();
        assert_eq!(rec.status, Status::Global);
        assert!(rec.norms_r.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn stops_become_nodes() {
        let g = Grid::new(1, 64, 30.0).unwrap();
        let params = FracParams::new(0.5, 1.0).unwrap();
        let nl = NonlinearitySpec::scalar(0.0, 0.0, 2.0, 0.0).unwrap();
        let mut opts = EvolveOptions::adaptive(10.0, 0.7);
        if let Stepping::Adaptive { stops, .. } = &mut opts.stepping {
            *stops = vec![2.5, 5.0, 1e-9];
        }
        let rec = duhamel_evolve(&gaussian(g, 0.1, 5.0), &params, &nl, 1.5, 3.0, &opts).unwrap();
        for t in [1e-9, 2.5, 5.0, 10.0] {
            assert!(rec.times().contains(&t), "{t}");
        }
        assert!(rec.times().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn linear_cut_matches_operator() {
        let g = Grid::new(1, 128, 20.0).unwrap();
        let params = FracParams::new(0.5, 1.0).unwrap();
        let nl = NonlinearitySpec::scalar(0.0, 0.0, 2.0, 0.0).unwrap();
        let u0 = gaussian(g, 1.0, 2.0);
        let mesh = TimeMesh::graded(3.0, 60, 2.0).unwrap();
        let mut opts = EvolveOptions::fixed(mesh.clone());
        opts.source = false;
        opts.keep_snapshots = true;
        let rec = duhamel_evolve(&u0, &params, &nl, 1.5, 3.0, &opts).unwrap();
        let op = SolutionOperator::new(g, VolterraMultiplier::on_mesh(params, mesh.clone()));
        let lin = op.apply_many(mesh.nodes(), &u0).unwrap();
        let snaps = &rec.snapshots.as_ref().unwrap()[0];
        for (a, b) in snaps.iter().zip(&lin) {
            let gap = a
                .values()
                .iter()
                .zip(b.values())
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(gap < 1e-10);
        }
    }

    #[test]
    fn heat_blowup_large_data() {
        // ODE comparison: U' = U² from U(0) = 5 blows up at t = 0.2
        let g = Grid::new(1, 128, 40.0).unwrap();
        let params = FracParams::new(0.5, 0.0).unwrap();
        let nl = NonlinearitySpec::scalar(0.0, 0.0, 2.0, 0.0).unwrap();
        let rec = duhamel_evolve(
            &gaussian(g, 5.0, 10.0),
            &params,
            &nl,
            1.5,
            3.0,
            &EvolveOptions::adaptive(5.0, 0.05),
        )
        .unwrap();
        match rec.status {
            Status::BlewUp { t_blow } => assert!(t_blow > 0.15 && t_blow < 0.4, "{t_blow}"),
            ref s => panic!("{s:?}"),
        }
        assert!(*rec.norms_r[0].last().unwrap() >= rec.blow_threshold);
    }

    #[test]
    fn monotone_in_data() {
        let g = Grid::new(1, 64, 30.0).unwrap();
        let params = FracParams::new(0.5, 1.0).unwrap();
        let nl = NonlinearitySpec::scalar(0.0, 0.0, 2.0, 0.0).unwrap();
        let mesh = TimeMesh::graded(5.0, 80, 2.0).unwrap();
        let small = duhamel_evolve(
            &gaussian(g, 0.1, 5.0),
            &params,
            &nl,
            1.5,
            3.0,
            &EvolveOptions::fixed(mesh.clone()),
        )
        .unwrap();
        let big = duhamel_evolve(
            &gaussian(g, 0.2, 5.0),
            &params,
            &nl,
            1.5,
            3.0,
            &EvolveOptions::fixed(mesh),
        )
        .unwrap();
        for (a, b) in small.norms_r[0].iter().zip(&big.norms_r[0]) {
            assert!(a <= &(b + 1e-8));
        }
    }

    #[test]
    fn symmetric_system_reduces() {
        let g = Grid::new(1, 64, 30.0).unwrap();
        let params = FracParams::new(0.5, 1.0).unwrap();
        let u0 = gaussian(g, 0.3, 5.0);
        let mesh = TimeMesh::graded(4.0, 60, 2.0).unwrap();
        let scalar = duhamel_evolve(
            &u0,
            &params,
            &NonlinearitySpec::scalar(0.0, 0.0, 2.0, 0.0).unwrap(),
            1.5,
            3.0,
            &EvolveOptions::fixed(mesh.clone()),
        )
        .unwrap();
        let sys = duhamel_evolve_system(
            &u0,
            &u0,
            &params,
            &NonlinearitySpec::system(0.0, 0.0, 2.0, 2.0, 0.0).unwrap(),
            1.5,
            3.0,
            &EvolveOptions::fixed(mesh),
        )
        .unwrap();
        for n in 0..scalar.mesh.len() {
            assert!((sys.norms_r[0][n] - sys.norms_r[1][n]).abs() <= 1e-14 * sys.norms_r[0][n]);
            assert!((sys.norms_r[0][n] - scalar.norms_r[0][n]).abs() <= 1e-12 * scalar.norms_r[0][n]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = Grid::new(1, 64, 30.0).unwrap();
        let params = FracParams::new(0.5, 1.0).unwrap();
        let nl = NonlinearitySpec::scalar(-0.5, 0.0, 2.0, 0.0).unwrap();
        let opts = EvolveOptions::adaptive(1.0, 0.1);
        assert!(duhamel_evolve(&gaussian(g, 1.0, 1.0), &params, &nl, 1.5, 3.0, &opts).is_err());
        let nl = NonlinearitySpec::scalar(0.0, 0.0, 2.0, 0.0).unwrap();
        let neg = gaussian(g, -1.0, 1.0);
        assert!(duhamel_evolve(&neg, &params, &nl, 1.5, 3.0, &opts).is_err());
        assert!(duhamel_evolve(&gaussian(g, 1.0, 1.0), &params, &nl, 3.0, 3.0, &opts).is_err());
    }
}
