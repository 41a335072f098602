//! Discrete operators.
//!
//! Two families share the residual convention `L w = (elliptic part) + h`:
//!
//! * **Variational**: `L w = -Δ_p w + h`, the first variation of the energy
//!   `E(w) = (1/p)∫|∇w|^p + ∫h w`. The energy is discretized with
//!   forward-difference cell gradients and trapezoid node volumes, and the
//!   residual is the energy gradient divided by the node volume, so for
//!   `p = 2` it is the classical 3/5-point Laplacian.
//! * **Normalized p-Laplacian**: `L w = -βΔw - αΔ∞w + h`, with `Δ∞` realized
//!   by the min–max stencil `(max N + min N - 2w_i)/h²` over the axis and
//!   diagonal neighbours `N` of node `i`. The stencil is monotone and exact on
//!   linear functions.
//!
//! A residual `>= 0` at every interior node means the field is a discrete
//! supersolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{Grid, ScalarField};

/// Smoothing of `|∇w|` in the flux coefficient for `p < 2`.
pub const GRADIENT_REGULARIZATION: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpec {
    Variational {
        p: f64,
        source: ScalarField,
    },
    NormalizedPLaplacian {
        alpha: f64,
        beta: f64,
        source: ScalarField,
    },
}

impl OperatorSpec {
    pub fn variational(p: f64, source: ScalarField) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidOperator(format!(
                "exponent p = {p} must lie in (1, ∞)"
            )));
        }
        Ok(Self::Variational { p, source })
    }

    pub fn normalized(alpha: f64, beta: f64, source: ScalarField) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0 && alpha + beta > 0.0) {
            return Err(Error::InvalidOperator(format!(
                "weights alpha = {alpha}, beta = {beta} must be nonnegative with positive sum"
            )));
        }
        Ok(Self::NormalizedPLaplacian {
            alpha,
            beta,
            source,
        })
    }

    pub fn source(&self) -> &ScalarField {
        match self {
            Self::Variational { source, .. } | Self::NormalizedPLaplacian { source, .. } => source,
        }
    }

    pub fn grid(&self) -> Grid {
        self.source().grid()
    }

    pub fn is_variational(&self) -> bool {
        matches!(self, Self::Variational { .. })
    }

    pub fn exponent(&self) -> Option<f64> {
        match self {
            Self::Variational { p, .. } => Some(*p),
            Self::NormalizedPLaplacian { .. } => None,
        }
    }

    /// Same operator with the source negated; `L(-w)` under the result equals
    /// `-L(w)` under `self`.
    pub fn with_negated_source(&self) -> Self {
        match self {
            Self::Variational { p, source } => Self::Variational {
                p: *p,
                source: source.negated(),
            },
            Self::NormalizedPLaplacian {
                alpha,
                beta,
                source,
            } => Self::NormalizedPLaplacian {
                alpha: *alpha,
                beta: *beta,
                source: source.negated(),
            },
        }
    }
}

/// Grid-independent operator description; sampled onto a grid on demand.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorForm {
    Variational { p: f64, source: Expr },
    Normalized { alpha: f64, beta: f64, source: Expr },
}

impl OperatorForm {
    pub fn instantiate(&self, grid: Grid) -> Result<OperatorSpec> {
        match self {
            Self::Variational { p, source } => {
                OperatorSpec::variational(*p, ScalarField::sample(grid, source)?)
            }
            Self::Normalized {
                alpha,
                beta,
                source,
            } => OperatorSpec::normalized(*alpha, *beta, ScalarField::sample(grid, source)?),
        }
    }
}

/// Operator residual at interior nodes, zero on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField(ScalarField);

impl ResidualField {
    pub fn field(&self) -> &ScalarField {
        &self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn at(&self, node: usize) -> f64 {
        self.0.at(node)
    }

    pub fn grid(&self) -> Grid {
        self.0.grid()
    }
}

// Energy density per cell and the matching flux coefficient `φ'(|g|)/|g|`.
#[derive(Clone, Copy)]
struct PowerLaw {
    p: f64,
}

impl PowerLaw {
    fn density(&self, g2: f64) -> f64 {
        let p = self.p;
        if p >= 2.0 {
            g2.powf(0.5 * p) / p
        } else {
            let e2 = GRADIENT_REGULARIZATION * GRADIENT_REGULARIZATION;
            // Offset by ε^p so that the density vanishes at zero gradient.
            ((g2 + e2).powf(0.5 * p) - e2.powf(0.5 * p)) / p
        }
    }

    fn coefficient(&self, g2: f64) -> f64 {
        let p = self.p;
        if p == 2.0 {
            1.0
        } else if p > 2.0 {
            g2.powf(0.5 * (p - 2.0))
        } else {
            let e2 = GRADIENT_REGULARIZATION * GRADIENT_REGULARIZATION;
            (g2 + e2).powf(0.5 * (p - 2.0))
        }
    }
}

fn variational_parts(spec: &OperatorSpec) -> Result<(f64, &ScalarField)> {
    match spec {
        OperatorSpec::Variational { p, source } => Ok((*p, source)),
        _ => Err(Error::Precondition("operator is not variational".into())),
    }
}

fn check_grid(w: &ScalarField, spec: &OperatorSpec) -> Result<()> {
    w.ensure_same_grid(spec.source())
}

/// Discrete energy `Σ_cells (1/p)|∇_h w|^p |cell| + Σ_nodes h w |node|`.
pub fn energy(w: &ScalarField, spec: &OperatorSpec) -> Result<f64> {
    let (gradient_part, source_part, _) = energy_parts(w, spec)?;
    Ok(gradient_part + source_part)
}

/// Gradient term, source term, and `Σ|h w| |node|` (a rounding scale).
pub(crate) fn energy_parts(w: &ScalarField, spec: &OperatorSpec) -> Result<(f64, f64, f64)> {
    let (p, source) = variational_parts(spec)?;
    check_grid(w, spec)?;
    let grid = w.grid();
    let law = PowerLaw { p };
    let vals = w.values();
    let h = grid.spacing();
    let n = grid.n_per_axis();

    let mut gradient_part = 0.0;
    match grid.dim() {
        1 => {
            for i in 0..n - 1 {
                let g = (vals[i + 1] - vals[i]) / h;
                gradient_part += law.density(g * g) * h;
            }
        }
        _ => {
            let cell = h * h;
            for ix in 0..n - 1 {
                for iy in 0..n - 1 {
                    let k = grid.flat_index(ix, iy);
                    let gx = (vals[k + n] - vals[k]) / h;
                    let gy = (vals[k + 1] - vals[k]) / h;
                    gradient_part += law.density(gx * gx + gy * gy) * cell;
                }
            }
        }
    }
    let (mut source_part, mut source_abs) = (0.0, 0.0);
    for i in 0..grid.len() {
        let t = source.at(i) * vals[i] * grid.node_volume(i);
        source_part += t;
        source_abs += t.abs();
    }
    Ok((gradient_part, source_part, source_abs))
}

/// Partial derivatives of [`energy`] with respect to interior node values.
pub fn energy_gradient(w: &ScalarField, spec: &OperatorSpec) -> Result<ScalarField> {
    let (p, source) = variational_parts(spec)?;
    check_grid(w, spec)?;
    let grid = w.grid();
    let mut grad = vec![0.0; grid.len()];
    accumulate_flux(grid, p, w.values(), &mut grad);
    for (i, g) in grad.iter_mut().enumerate() {
        if grid.is_boundary(i) {
            *g = 0.0;
        } else {
            *g += source.at(i) * grid.node_volume(i);
        }
    }
    ScalarField::from_values(grid, grad)
}

fn accumulate_flux(grid: Grid, p: f64, vals: &[f64], grad: &mut [f64]) {
    let law = PowerLaw { p };
    let h = grid.spacing();
    let n = grid.n_per_axis();
    match grid.dim() {
        1 => {
            for i in 0..n - 1 {
                let g = (vals[i + 1] - vals[i]) / h;
                // d/dw of (φ(g) h) with g = (w[i+1]-w[i])/h
                let flux = law.coefficient(g * g) * g;
                grad[i + 1] += flux;
                grad[i] -= flux;
            }
        }
        _ => {
            for ix in 0..n - 1 {
                for iy in 0..n - 1 {
                    let k = grid.flat_index(ix, iy);
                    let gx = (vals[k + n] - vals[k]) / h;
                    let gy = (vals[k + 1] - vals[k]) / h;
                    let a = law.coefficient(gx * gx + gy * gy) * h;
                    grad[k + n] += a * gx;
                    grad[k + 1] += a * gy;
                    grad[k] -= a * (gx + gy);
                }
            }
        }
    }
}

/// Discrete `-Δ_{p,h} w + h` at interior nodes.
pub fn residual_variational(w: &ScalarField, spec: &OperatorSpec) -> Result<ResidualField> {
    let grad = energy_gradient(w, spec)?;
    let grid = grad.grid();
    let mut values = grad.into_values();
    for (i, v) in values.iter_mut().enumerate() {
        if !grid.is_boundary(i) {
            *v /= grid.node_volume(i);
        }
    }
    Ok(ResidualField(ScalarField::from_values(grid, values)?))
}

/// `-β Δ_h w - α Δ∞_h w + h` at one interior node.
pub(crate) fn viscosity_residual_at(
    grid: Grid,
    vals: &[f64],
    node: usize,
    alpha: f64,
    beta: f64,
    source: f64,
) -> f64 {
    let h2 = grid.spacing() * grid.spacing();
    let wi = vals[node];
    let (axis, na) = grid.axis_neighbors(node);
    let sum: f64 = axis[..na].iter().map(|&j| vals[j]).sum();
    let laplacian = (sum - na as f64 * wi) / h2;
    let (hi, lo) = stencil_extremes(grid, vals, node);
    let infinity = (hi + lo - 2.0 * wi) / h2;
    -beta * laplacian - alpha * infinity + source
}

/// Largest and smallest neighbour value over the min–max stencil.
pub(crate) fn stencil_extremes(grid: Grid, vals: &[f64], node: usize) -> (f64, f64) {
    let (nbrs, k) = grid.stencil_neighbors(node);
    nbrs[..k]
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), &j| {
            (hi.max(vals[j]), lo.min(vals[j]))
        })
}

/// Discrete `-βΔw - αΔ∞w + h` at interior nodes.
pub fn residual_viscosity(w: &ScalarField, spec: &OperatorSpec) -> Result<ResidualField> {
    let OperatorSpec::NormalizedPLaplacian {
        alpha,
        beta,
        source,
    } = spec
    else {
        return Err(Error::Precondition(
            "operator is not a normalized p-Laplacian".into(),
        ));
    };
    check_grid(w, spec)?;
    let grid = w.grid();
    let vals = w.values();
    let values = (0..grid.len())
        .map(|i| {
            if grid.is_boundary(i) {
                0.0
            } else {
                viscosity_residual_at(grid, vals, i, *alpha, *beta, source.at(i))
            }
        })
        .collect();
    Ok(ResidualField(ScalarField::from_values(grid, values)?))
}

/// Residual of whichever family `spec` belongs to.
pub fn residual(w: &ScalarField, spec: &OperatorSpec) -> Result<ResidualField> {
    match spec {
        OperatorSpec::Variational { .. } => residual_variational(w, spec),
        OperatorSpec::NormalizedPLaplacian { .. } => residual_viscosity(w, spec),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Solution,
    Supersolution,
    Subsolution,
    Neither,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub class: Classification,
    pub min_node: usize,
    pub min_residual: f64,
    pub max_node: usize,
    pub max_residual: f64,
}

impl ClassifyReport {
    pub fn is_supersolution(&self) -> bool {
        matches!(
            self.class,
            Classification::Solution | Classification::Supersolution
        )
    }

    pub fn is_subsolution(&self) -> bool {
        matches!(
            self.class,
            Classification::Solution | Classification::Subsolution
        )
    }
}

/// Classifies `w` by the sign of its interior residual.
pub fn classify(w: &ScalarField, spec: &OperatorSpec, tol: f64) -> Result<ClassifyReport> {
    if !(tol >= 0.0) {
        return Err(Error::Precondition(format!(
            "tolerance {tol} must be nonnegative"
        )));
    }
    let res = residual(w, spec)?;
    let grid = w.grid();
    let (mut min_node, mut max_node) = (usize::MAX, usize::MAX);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in grid.interior_nodes() {
        let r = res.at(i);
        if r < lo {
            lo = r;
            min_node = i;
        }
        if r > hi {
            hi = r;
            max_node = i;
        }
    }
    let class = if lo >= -tol && hi <= tol {
        Classification::Solution
    } else if lo >= -tol {
        Classification::Supersolution
    } else if hi <= tol {
        Classification::Subsolution
    } else {
        Classification::Neither
    };
    Ok(ClassifyReport {
        class,
        min_node,
        min_residual: lo,
        max_node,
        max_residual: hi,
    })
}
