//! Fractional-calculus primitives: the memory kernel, time meshes, contour
//! geometry and product-integration Riemann-Liouville operators.

use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};
use crate::special::gamma_fn;

/// Fractional order and memory strength of the operator (1 + k D^α).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracParams {
    alpha: f64,
    k: f64,
    gamma_1ma: f64,
    gamma_2ma: f64,
}

impl FracParams {
    /// `alpha` must lie in (0, 1). `k = 0` is accepted and gives the heat equation.
    pub fn new(alpha: f64, k: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must lie in open (0,1), got {alpha}")));
        }
        if !(k >= 0.0) || !k.is_finite() {
            return Err(Error::Domain(format!("k must be finite and >= 0, got {k}")));
        }
        Ok(Self {
            alpha,
            k,
            gamma_1ma: gamma_fn(1.0 - alpha)?,
            gamma_2ma: gamma_fn(2.0 - alpha)?,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Γ(1−α).
    pub fn gamma_one_minus_alpha(&self) -> f64 {
        self.gamma_1ma
    }

    /// h(t) = 1 + k t^{−α}/Γ(1−α).
    pub fn kernel_h(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("kernel_h requires t > 0, got {t}")));
        }
        Ok(1.0 + self.k * t.powf(-self.alpha) / self.gamma_1ma)
    }

    /// ⟨t⟩ = t + k t^{1−α}.
    pub fn angle_bracket(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        t + self.k * t.powf(1.0 - self.alpha)
    }

    /// (1∗h)(t) = t + k t^{1−α}/Γ(2−α).
    pub fn one_star_h(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        t + self.k * t.powf(1.0 - self.alpha) / self.gamma_2ma
    }
}

/// Free-function form of [`FracParams::kernel_h`].
pub fn kernel_h(t: f64, params: &FracParams) -> Result<f64> {
    params.kernel_h(t)
}

/// Free-function form of [`FracParams::angle_bracket`].
pub fn angle_bracket(t: f64, params: &FracParams) -> f64 {
    params.angle_bracket(t)
}

/// Strictly increasing time nodes starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMesh {
    nodes: Vec<f64>,
    grading: f64,
}

impl TimeMesh {
    /// t_j = T (j/M)^grading for j = 0..=M.
    pub fn graded(t_end: f64, intervals: usize, grading: f64) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::Input(format!("mesh end time must be > 0, got {t_end}")));
        }
        if intervals < 1 {
            return Err(Error::Input("mesh needs at least one interval".into()));
        }
        if !(grading >= 1.0) {
            return Err(Error::Input(format!("grading must be >= 1, got {grading}")));
        }
        let m = intervals as f64;
        let mut nodes: Vec<f64> = (0..=intervals).map(|j| t_end * (j as f64 / m).powf(grading)).collect();
        nodes[intervals] = t_end;
        Ok(Self { nodes, grading })
    }

    pub fn uniform(t_end: f64, intervals: usize) -> Result<Self> {
        Self::graded(t_end, intervals, 1.0)
    }

    /// Arbitrary nodes; the recorded grading is nominal (1).
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Input("mesh needs at least two nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::Input(format!("mesh must start at 0, got {}", nodes[0])));
        }
        for (i, w) in nodes.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::Input(format!(
                    "mesh nodes must be strictly increasing (index {})",
                    i + 1
                )));
            }
        }
        Ok(Self { nodes, grading: 1.0 })
    }

    /// Inserts `levels` geometrically spaced nodes between 0 and t₁, the
    /// smallest at t₁·10^{−decades}. Resolves the initial layer of stiff modes.
    pub fn with_geometric_prefix(&self, levels: usize, decades: f64) -> Self {
        if levels == 0 || self.nodes.len() < 2 {
            return self.clone();
        }
        let t1 = self.nodes[1];
        let mut nodes = Vec::with_capacity(self.nodes.len() + levels);
        nodes.push(0.0);
        for i in 0..levels {
            let e = -decades * (levels - i) as f64 / levels as f64;
            nodes.push(t1 * 10f64.powf(e));
        }
        nodes.extend_from_slice(&self.nodes[1..]);
        Self {
            nodes,
            grading: self.grading,
        }
    }

    /// Merges extra times into the mesh (times within 1e-12 relative of an
    /// existing node are snapped to it). Times outside (0, T] are ignored.
    pub fn with_times(&self, extra: &[f64]) -> Self {
        let t_end = self.t_end();
        let mut all: Vec<f64> = self.nodes.clone();
        all.extend(extra.iter().copied().filter(|&t| t > 0.0 && t <= t_end));
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut nodes: Vec<f64> = Vec::with_capacity(all.len());
        for t in all {
            match nodes.last() {
                Some(&last) if (t - last).abs() <= 1e-12 * t.abs().max(1e-300) => {}
                _ => nodes.push(t),
            }
        }
        Self {
            nodes,
            grading: self.grading,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    /// Index of the node equal to `t` within 1e-12 relative tolerance.
    pub fn position(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * t.abs().max(1e-300);
        let i = self.nodes.partition_point(|&x| x < t - tol);
        (i < self.nodes.len() && (self.nodes[i] - t).abs() <= tol).then_some(i)
    }
}

/// Default mesh exponent when a t^γ weight is present.
pub fn default_grading(gamma: f64) -> f64 {
    (2.0 / (1.0 + gamma)).max(1.0)
}

/// Hankel-type contour: arc of radius `delta` plus two rays at angle ±(π−θ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourSpec {
    delta: f64,
    theta: f64,
    truncation: f64,
    panels: usize,
}

impl ContourSpec {
    pub fn new(delta: f64, theta: f64, truncation: f64, panels: usize) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Input(format!("contour delta must be > 0, got {delta}")));
        }
        if !(theta > 0.0 && theta < PI / 2.0) {
            return Err(Error::Input(format!(
                "contour theta must lie in (0, pi/2), got {theta}"
            )));
        }
        if !(truncation > delta) {
            return Err(Error::Input(format!(
                "contour truncation {truncation} must exceed delta {delta}"
            )));
        }
        if panels == 0 {
            return Err(Error::Input("contour needs at least one node per segment".into()));
        }
        Ok(Self {
            delta,
            theta,
            truncation,
            panels,
        })
    }

    /// δ = 1/t, θ = π/6, truncation 40/(t cos θ), 400 nodes per segment.
    pub fn for_time(t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("contour requires t > 0, got {t}")));
        }
        let theta = PI / 6.0;
        Self::new(1.0 / t, theta, 40.0 / (t * theta.cos()), 400)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn panels(&self) -> usize {
        self.panels
    }
}

fn gl8() -> &'static [(f64, f64)] {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(8).unwrap()))
        .as_node_weight_pairs()
}

/// ∫_a^{a+d} σ^p dσ for a ≥ 0, d > 0, p > −1.
pub(crate) fn power_moment(a: f64, d: f64, p: f64) -> f64 {
    if a > 0.0 && d < a {
        let h = 0.5 * d;
        return gl8().iter().map(|&(x, w)| w * h * (a + h * (1.0 + x)).powf(p)).sum();
    }
    let b = a + d;
    (b.powf(p + 1.0) - a.powf(p + 1.0)) / (p + 1.0)
}

/// Weights (w_a, w_b) with ∫_a^{a+d} σ^p f(σ) dσ ≈ w_a f(a) + w_b f(a+d) for
/// the linear interpolant of f. Exact moments; panels far from the
/// singularity use Gauss-Legendre because the closed form cancels there.
/// The width is passed separately so that tiny panels far from the origin
/// keep their size.
pub(crate) fn linear_panel_weights(a: f64, d: f64, p: f64) -> (f64, f64) {
    if a > 0.0 && d < a {
        let h = 0.5 * d;
        let mut wa = 0.0;
        let mut wb = 0.0;
        for &(x, w) in gl8() {
            let v = w * h * (a + h * (1.0 + x)).powf(p);
            wa += v * 0.5 * (1.0 - x);
            wb += v * 0.5 * (1.0 + x);
        }
        return (wa, wb);
    }
    let b = a + d;
    let m0 = (b.powf(p + 1.0) - a.powf(p + 1.0)) / (p + 1.0);
    let m1 = (b.powf(p + 2.0) - a.powf(p + 2.0)) / (p + 2.0);
    ((b * m0 - m1) / d, (m1 - a * m0) / d)
}

/// Row n of the product-integration matrix for ∫₀^{t_n} (t_n−τ)^p f(τ) dτ
/// with f piecewise linear on the nodes; returns weights for f_0..=f_n.
pub(crate) fn convolution_row(nodes: &[f64], n: usize, p: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    let tn = nodes[n];
    for j in 1..=n {
        let (wa, wb) = linear_panel_weights(tn - nodes[j], nodes[j] - nodes[j - 1], p);
        w[j] += wa;
        w[j - 1] += wb;
    }
    w
}

/// Row n of the discrete (h ∗ ·) operator: trapezoid for the constant part of
/// h, exact singular moments for k t^{−α}/Γ(1−α).
pub(crate) fn h_convolution_row(nodes: &[f64], n: usize, params: &FracParams) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    let tn = nodes[n];
    let c = params.k / params.gamma_1ma;
    for j in 1..=n {
        let d = nodes[j] - nodes[j - 1];
        w[j] += 0.5 * d;
        w[j - 1] += 0.5 * d;
        if c > 0.0 {
            let (wa, wb) = linear_panel_weights(tn - nodes[j], d, -params.alpha);
            w[j] += c * wa;
            w[j - 1] += c * wb;
        }
    }
    w
}

fn check_samples(mesh: &TimeMesh, samples: &[f64], order: f64) -> Result<()> {
    if mesh.len() < 2 {
        return Err(Error::Input("mesh must have at least 2 nodes".into()));
    }
    if samples.len() != mesh.len() {
        return Err(Error::Input(format!(
            "{} samples for a mesh of {} nodes",
            samples.len(),
            mesh.len()
        )));
    }
    if !(order > 0.0 && order < 1.0) {
        return Err(Error::Domain(format!("order must lie in (0,1), got {order}")));
    }
    Ok(())
}

/// Left Riemann-Liouville integral I^a_{0+} f at every mesh node.
pub fn rl_integral(mesh: &TimeMesh, samples: &[f64], order: f64) -> Result<Vec<f64>> {
    check_samples(mesh, samples, order)?;
    let g = gamma_fn(order)?;
    let nodes = mesh.nodes();
    let mut out = vec![0.0; nodes.len()];
    for (n, o) in out.iter_mut().enumerate().skip(1) {
        let row = convolution_row(nodes, n, order - 1.0);
        *o = row.iter().zip(samples).map(|(w, f)| w * f).sum::<f64>() / g;
    }
    Ok(out)
}

/// Right-sided derivative with its contract diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RightDerivative {
    pub values: Vec<f64>,
    /// Set when f(T) is not zero; the formula then drops the boundary term.
    pub warning: Option<String>,
}

/// D^α_{T−} f = −I^{1−α}_{T−} f′ with f′ taken from the piecewise-linear
/// interpolant (exact moments of (τ−t)^{−α} per panel).
pub fn rl_right_derivative(mesh: &TimeMesh, samples: &[f64], order: f64) -> Result<RightDerivative> {
    check_samples(mesh, samples, order)?;
    let nodes = mesh.nodes();
    let m = nodes.len();
    let scale = samples.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let warning = (samples[m - 1].abs() > 1e-12 * scale.max(1e-300)).then(|| {
        format!(
            "f(T) = {:e} is not zero; D^alpha_(T-) computed without the boundary term",
            samples[m - 1]
        )
    });
    let g = gamma_fn(1.0 - order)?;
    let slopes: Vec<f64> = (1..m)
        .map(|j| (samples[j] - samples[j - 1]) / (nodes[j] - nodes[j - 1]))
        .collect();
    let values = (0..m)
        .map(|n| {
            let tn = nodes[n];
            let acc: f64 = (n + 1..m)
                .map(|j| slopes[j - 1] * power_moment(nodes[j - 1] - tn, nodes[j] - nodes[j - 1], -order))
                .sum();
            -acc / g
        })
        .collect();
    Ok(RightDerivative { values, warning })
}
