//! Discrete first integrals of the drift: the kernel of the skew drift
//! matrix, constrained minimization of the Dirichlet form over it, flow
//! integration, invariance and truncation checks, and the conditioning
//! identity.
//!
//! The raw SVD kernel of B contains lattice artifacts (checkerboard-type
//! null vectors of the centered stencil) that no continuum first
//! integral shadows. They are removed by diagonalizing the Dirichlet
//! form on the kernel and keeping only modes below an energy cutoff:
//! genuine first integrals have bounded form energy as h → 0, while the
//! artifacts' energies diverge like h^{−α}.

use crate::drift::{DriftOperator, VectorField};
use crate::error::FracError;
use crate::fractional::{dirichlet_form, DiffusionOperator};
use crate::geometry::{Grid, Point};
use nalgebra::{DMatrix, DVector};

/// Orthonormal basis (h²-weighted inner product) of the discrete
/// first-integral space.
#[derive(Debug, Clone)]
pub struct FirstIntegralSpace {
    /// interior × k; columns orthonormal with weight h².
    pub basis: DMatrix<f64>,
    pub k: usize,
    /// Full singular-value spectrum of B, descending.
    pub singular_values: Vec<f64>,
    /// Relative SVD threshold used for the kernel split.
    pub threshold: f64,
    /// Dirichlet-form energy of each kept basis column.
    pub energies: Vec<f64>,
    /// Raw kernel dimension before the energy filter.
    pub k_raw: usize,
}

/// Result of minimizing the Dirichlet form over the space.
#[derive(Debug, Clone)]
pub struct MinimizerResult {
    /// Minimal form value; `f64::INFINITY` when the space is trivial.
    pub e_star: f64,
    pub w_star: Option<DVector<f64>>,
    pub k: usize,
}

/// Kernel of the skew drift matrix, energy-filtered.
///
/// Singular values ≤ threshold·σ_max are classified as kernel; the
/// kernel is then rotated to diagonalize the Dirichlet form and modes
/// with energy above `energy_cutoff` are dropped (lattice artifacts).
pub fn first_integral_space(
    b: &DriftOperator,
    l0: &DiffusionOperator,
    svd_threshold: f64,
    energy_cutoff: f64,
) -> Result<FirstIntegralSpace, FracError> {
    if !(svd_threshold > 0.0 && svd_threshold < 1.0) {
        return Err(FracError::Config(format!(
            "svd threshold must lie in (0,1), got {svd_threshold}"
        )));
    }
    let n = b.matrix.nrows();
    let h = l0.grid.h;
    let skew = (&b.matrix + b.matrix.transpose()).abs().max();
    let scale = b.matrix.abs().max();
    if scale > 0.0 && skew > 1e-10 * scale {
        return Err(FracError::Config(format!(
            "drift matrix is not skew (defect {skew:.3e}): the field is compressible"
        )));
    }
    if scale == 0.0 {
        // Zero drift: every grid function is a first integral.
        let mut basis = DMatrix::zeros(n, n);
        for i in 0..n {
            basis[(i, i)] = 1.0 / h;
        }
        let energies = (0..n)
            .map(|i| {
                let col = DVector::from_column_slice(basis.column(i).as_slice());
                dirichlet_form(&col, &col, l0).unwrap()
            })
            .collect();
        return Ok(FirstIntegralSpace {
            basis,
            k: n,
            singular_values: vec![0.0; n],
            threshold: svd_threshold,
            energies,
            k_raw: n,
        });
    }
    let svd = b.matrix.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut sigma: Vec<f64> = svd.singular_values.iter().cloned().collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let smax = sigma[0];
    // nalgebra returns singular values unsorted in general; collect the
    // kernel rows of V^T directly by their σ.
    let mut kernel_cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= svd_threshold * smax)
        .collect();
    kernel_cols.sort_unstable();
    let k_raw = kernel_cols.len();
    if k_raw == 0 {
        return Ok(FirstIntegralSpace {
            basis: DMatrix::zeros(n, 0),
            k: 0,
            singular_values: sigma,
            threshold: svd_threshold,
            energies: vec![],
            k_raw: 0,
        });
    }
    // V columns spanning the raw kernel, ℓ²-orthonormal.
    let mut v = DMatrix::zeros(n, k_raw);
    for (c, &row) in kernel_cols.iter().enumerate() {
        for i in 0..n {
            v[(i, c)] = v_t[(row, i)];
        }
    }
    // Diagonalize the form on the kernel: K = Vᵀ(−L)V · h².
    let minus_l = -&l0.matrix;
    // V columns are ℓ²-orthonormal, so the h²-weighted Rayleigh values
    // equal the plain projected quotients.
    let k_proj = v.transpose() * &minus_l * &v;
    let k_sym = (&k_proj + k_proj.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(k_sym);
    // Energies in the h²-weighted sense equal the ℓ² Rayleigh values.
    let mut order: Vec<usize> = (0..k_raw).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] <= energy_cutoff)
        .collect();
    let k = kept.len();
    let mut basis = DMatrix::zeros(n, k);
    let mut energies = Vec::with_capacity(k);
    for (c, &i) in kept.iter().enumerate() {
        let dir = &v * eig.eigenvectors.column(i);
        let nrm = dir.norm() * h;
        for r in 0..n {
            basis[(r, c)] = dir[r] / nrm;
        }
        energies.push(eig.eigenvalues[i]);
    }
    Ok(FirstIntegralSpace {
        basis,
        k,
        singular_values: sigma,
        threshold: svd_threshold,
        energies,
        k_raw,
    })
}

/// Minimize the Dirichlet form over the first-integral space.
pub fn min_rayleigh(l0: &DiffusionOperator, space: &FirstIntegralSpace) -> MinimizerResult {
    if space.k == 0 {
        return MinimizerResult { e_star: f64::INFINITY, w_star: None, k: 0 };
    }
    let h = l0.grid.h;
    let minus_l = -&l0.matrix;
    let k_proj = (space.basis.transpose() * &minus_l * &space.basis) * (h * h);
    let k_sym = (&k_proj + k_proj.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(k_sym);
    let mut best = 0;
    for i in 1..space.k {
        if eig.eigenvalues[i] < eig.eigenvalues[best] {
            best = i;
        }
    }
    let mut w = &space.basis * eig.eigenvectors.column(best);
    let nrm = w.norm() * h;
    w /= nrm;
    if w.sum() < 0.0 {
        w = -w;
    }
    MinimizerResult { e_star: eig.eigenvalues[best], w_star: Some(w), k: space.k }
}

/// Classical fourth-order one-step flow integration of dX/dt = b(X).
///
/// Supports negative `t` (time reversal). Errors when the trajectory
/// leaves the given bounding box, reporting the escape time.
pub fn integrate_flow(
    field: &VectorField,
    x0: Point,
    t: f64,
    dt: f64,
    bounds: (Point, Point),
) -> Result<Point, FracError> {
    if dt <= 0.0 {
        return Err(FracError::Config("flow step dt must be positive".into()));
    }
    let steps = (t.abs() / dt).ceil() as u64;
    if steps > 10_000_000 {
        return Err(FracError::Config("flow horizon exceeds 1e7 steps".into()));
    }
    let sign = t.signum();
    let mut x = x0;
    let mut elapsed = 0.0;
    let (lo, hi) = bounds;
    for _ in 0..steps {
        let step = dt.min(t.abs() - elapsed);
        if step <= 0.0 {
            break;
        }
        let hstep = sign * step;
        let k1 = field.eval(x);
        let k2 = field.eval([x[0] + 0.5 * hstep * k1[0], x[1] + 0.5 * hstep * k1[1]]);
        let k3 = field.eval([x[0] + 0.5 * hstep * k2[0], x[1] + 0.5 * hstep * k2[1]]);
        let k4 = field.eval([x[0] + hstep * k3[0], x[1] + hstep * k3[1]]);
        x = [
            x[0] + hstep / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] + hstep / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        elapsed += step;
        if x[0] < lo[0] || x[0] > hi[0] || x[1] < lo[1] || x[1] > hi[1] {
            return Err(FracError::Estimator(format!(
                "flow trajectory escaped the bounding box at t = {:.6}",
                sign * elapsed
            )));
        }
    }
    Ok(x)
}

/// Bilinear interpolation of an interior grid field; exterior corners
/// contribute zero (the Dirichlet extension).
pub fn interpolate(grid: &Grid, field: &DVector<f64>, p: Point) -> f64 {
    let c = grid.domain.center();
    let fx = (p[0] - c[0]) / grid.h;
    let fy = (p[1] - c[1]) / grid.h;
    let i0 = fx.floor() as i32;
    let j0 = fy.floor() as i32;
    let tx = fx - i0 as f64;
    let ty = fy - j0 as f64;
    let get = |i: i32, j: i32| grid.node_of.get(&(i, j)).map(|&k| field[k]).unwrap_or(0.0);
    get(i0, j0) * (1.0 - tx) * (1.0 - ty)
        + get(i0 + 1, j0) * tx * (1.0 - ty)
        + get(i0, j0 + 1) * (1.0 - tx) * ty
        + get(i0 + 1, j0 + 1) * tx * ty
}

/// Max deviation |w(X(t,x)) − w(x)| over interior nodes with δ_D > rho.
pub fn invariance_check(
    w: &DVector<f64>,
    field: &VectorField,
    grid: &Grid,
    sample_count: usize,
    t: f64,
    dt: f64,
    rho: f64,
) -> Result<f64, FracError> {
    let bounds = (grid.box_lo, grid.box_hi);
    let eligible: Vec<usize> = (0..grid.len()).filter(|&k| grid.delta[k] > rho).collect();
    if eligible.is_empty() {
        return Ok(0.0);
    }
    let stride = (eligible.len() / sample_count.max(1)).max(1);
    let mut worst: f64 = 0.0;
    for &k in eligible.iter().step_by(stride) {
        let x = grid.coords[k];
        let xt = integrate_flow(field, x, t, dt, bounds)?;
        worst = worst.max((interpolate(grid, w, xt) - w[k]).abs());
    }
    Ok(worst)
}

/// Truncate w at ±level, project back onto the space, and return the
/// h-weighted norm of the projection residual.
pub fn truncation_closure(
    w: &DVector<f64>,
    level: f64,
    space: &FirstIntegralSpace,
    grid: &Grid,
) -> Result<f64, FracError> {
    if space.k == 0 {
        return Err(FracError::Config("truncation closure needs a nontrivial space".into()));
    }
    let h = grid.h;
    // Verify w lies in the span.
    let coeff = space.basis.transpose() * w * (h * h);
    let back = &space.basis * &coeff;
    let in_span = (&back - w).norm() * h;
    if in_span > 1e-8 * (w.norm() * h).max(1e-300) {
        return Err(FracError::Config(format!(
            "truncation input is not in the first-integral span (residual {in_span:.3e})"
        )));
    }
    let wn = w.map(|v| v.clamp(-level, level));
    let cn = space.basis.transpose() * &wn * (h * h);
    let proj = &space.basis * cn;
    Ok((&proj - &wn).norm() * h)
}

/// Both sides of the discrete conditioning identity with test function
/// w²/(φ+ε): lhs = λ·Σ φ w²/(φ+ε) h², rhs = the double-sum (kernel)
/// form of ((−L)φ, w²/(φ+ε)).
pub fn conditioning_identity_check(
    w: &DVector<f64>,
    pair: &crate::spectral::EigenPair,
    epsilon: f64,
    op: &DiffusionOperator,
) -> Result<(f64, f64), FracError> {
    if epsilon <= 0.0 {
        return Err(FracError::Config("conditioning epsilon must be positive".into()));
    }
    let n = op.matrix.nrows();
    if w.len() != n || pair.phi.len() != n {
        return Err(FracError::Config("conditioning check: field sizes mismatch".into()));
    }
    let h2 = op.grid.h * op.grid.h;
    let phi = &pair.phi;
    let g = DVector::from_fn(n, |i, _| w[i] * w[i] / (phi[i] + epsilon));
    let lhs = pair.lambda * phi.iter().zip(g.iter()).map(|(&p, &gv)| p * gv).sum::<f64>() * h2;
    // Double-sum form with the operator's own coupling kernel.
    let mut rhs = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let wij = op.matrix[(i, j)];
            if wij != 0.0 {
                rhs += wij * (phi[i] - phi[j]) * (g[i] - g[j]) * h2;
            }
        }
        rhs += op.killing[i] * phi[i] * g[i] * h2;
    }
    Ok((lhs, rhs))
}

/// The elementary pointwise identity underlying the conditioning bound:
/// (x−y)² − (u−v)(x²/(u+ε) − y²/(v+ε)) = (x·√((v+ε)/(u+ε)) − y·√((u+ε)/(v+ε)))²
/// for u, v ≥ 0 and ε > 0. Returns the two sides.
pub fn elementary_identity(u: f64, v: f64, x: f64, y: f64, epsilon: f64) -> (f64, f64) {
    let a = u + epsilon;
    let b = v + epsilon;
    let lhs = (x - y).powi(2) - (u - v) * (x * x / a - y * y / b);
    let s = x * (b / a).sqrt() - y * (a / b).sqrt();
    (lhs, s * s)
}
