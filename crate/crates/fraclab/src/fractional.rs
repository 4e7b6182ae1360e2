//! The Lévy density ν, the discrete fractional Laplacian with Dirichlet
//! exterior condition, the associated Dirichlet form, and the free-space
//! stable kernel.
//!
//! Discretization: pairwise couplings ν(x_i−x_j)·h²·ā_ij between
//! interior nodes at Chebyshev distance > 1, where ā_ij averages the
//! two cell-coverage fractions; the singular patch |y|_∞ ≤ 3h/2 is
//! replaced by a five-point Laplacian whose coefficient carries the
//! exact patch second moment plus a near-ring moment correction (this
//! lifts interior consistency to second order). Exterior mass is exact:
//! a per-node polar integral of ν over the true domain complement,
//! plus killing through boundary-straddling cell slivers and through
//! stencil legs that leave the interior.

use crate::error::FracError;
use crate::geometry::{Grid, Point};
use crate::util::{bessel_j0, bessel_j1, gamma, gauss_legendre_on};
use nalgebra::{DMatrix, DVector};

/// Dimension is fixed at 2 throughout.
pub const DIM: usize = 2;

/// Order and normalization of the rotation-invariant α-stable density.
#[derive(Debug, Clone, Copy)]
pub struct StableParams {
    pub alpha: f64,
    /// A_{2,α} = α·2^{α−1}·Γ((2+α)/2) / (π·Γ(1−α/2)).
    pub coefficient: f64,
}

impl StableParams {
    pub fn new(alpha: f64) -> Result<Self, FracError> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(FracError::Config(format!("alpha must lie in (1, 2), got {alpha}")));
        }
        Ok(Self { alpha, coefficient: levy_coefficient(alpha) })
    }
}

/// Normalizing constant A_{2,α} making the symbol of Δ^{α/2} equal −|ξ|^α.
pub fn levy_coefficient(alpha: f64) -> f64 {
    let d = DIM as f64;
    alpha * 2f64.powf(alpha - 1.0) * gamma((d + alpha) / 2.0)
        / (std::f64::consts::PI.powf(d / 2.0) * gamma(1.0 - alpha / 2.0))
}

/// Jump density ν(y) = A_{2,α}·|y|^{−2−α}.
pub fn levy_density(y: Point, p: &StableParams) -> Result<f64, FracError> {
    let r2 = y[0] * y[0] + y[1] * y[1];
    if r2 == 0.0 {
        return Err(FracError::Config("levy density undefined at y = 0".into()));
    }
    Ok(p.coefficient * r2.powf(-(2.0 + p.alpha) / 2.0))
}

/// ∫₀^{π/4} cos^{α−2}θ dθ, smooth integrand, Gauss-Legendre.
fn quarter_integral(alpha: f64) -> f64 {
    let (x, w) = gauss_legendre_on(64, 0.0, std::f64::consts::FRAC_PI_4);
    x.iter().zip(&w).map(|(&t, &wt)| wt * t.cos().powf(alpha - 2.0)).sum()
}

/// Second moment of ν over the square |y|_∞ ≤ s.
fn second_moment_square(alpha: f64, s: f64) -> f64 {
    let a = levy_coefficient(alpha);
    a * s.powf(2.0 - alpha) / (2.0 - alpha) * 8.0 * quarter_integral(alpha)
}

/// Patch coefficient: second moment of ν over |y|_∞ ≤ 3h/2, divided by 2d.
fn patch_coefficient(alpha: f64, h: f64) -> f64 {
    second_moment_square(alpha, 1.5 * h) / (2.0 * DIM as f64)
}

/// Near-ring moment correction: the lattice quadrature of ν carries a
/// second-moment defect on the ring 3h/2 < |y|_∞ ≤ (K0+½)h; matching it
/// exactly (and folding the mismatch into the five-point coefficient)
/// cancels the leading O(h^{2−α}) consistency error.
fn ring_moment_correction(alpha: f64, h: f64, k0: i32) -> f64 {
    let exact = second_moment_square(alpha, (k0 as f64 + 0.5) * h) - second_moment_square(alpha, 1.5 * h);
    let a = levy_coefficient(alpha);
    let mut lattice = 0.0;
    for i in -k0..=k0 {
        for j in -k0..=k0 {
            if i.abs().max(j.abs()) >= 2 {
                let r2 = (i * i + j * j) as f64 * h * h;
                lattice += a * r2.powf(-(DIM as f64 + alpha) / 2.0) * r2 * h * h;
            }
        }
    }
    (exact - lattice) / (2.0 * DIM as f64)
}

/// The discrete generator −(−Δ)^{α/2} restricted to interior nodes with
/// zero exterior condition.
#[derive(Debug, Clone)]
pub struct DiffusionOperator {
    /// Matrix of L (negative semidefinite, symmetric).
    pub matrix: DMatrix<f64>,
    /// Total killing rate per node: (L·1)_i = −κ_i.
    pub killing: DVector<f64>,
    pub alpha: f64,
    pub grid: Grid,
}

/// Exterior-mass integral at node p: ∫ ν(y−p) dy over the part of the
/// domain complement outside the singular patch, by a polar angular
/// quadrature (64 segments × 8 Gauss points) with the radial integral
/// taken in closed form on each exterior interval of the ray.
fn exterior_killing(grid: &Grid, p: Point, params: &StableParams) -> f64 {
    let alpha = params.alpha;
    let h = grid.h;
    let mut total = 0.0;
    let nseg = 64;
    for seg in 0..nseg {
        let a0 = 2.0 * std::f64::consts::PI * seg as f64 / nseg as f64;
        let a1 = 2.0 * std::f64::consts::PI * (seg + 1) as f64 / nseg as f64;
        let (th, w) = gauss_legendre_on(8, a0, a1);
        for (&t, &wt) in th.iter().zip(&w) {
            let u = [t.cos(), t.sin()];
            // Patch boundary along this direction (square of half-side 3h/2).
            let rho_patch = 1.5 * h / u[0].abs().max(u[1].abs());
            let mut ray = 0.0;
            for iv in grid.domain.exterior_intervals(p, u) {
                let lo = iv.start.max(rho_patch);
                match iv.end {
                    Some(end) => {
                        if end > lo {
                            ray += lo.powf(-alpha) - end.powf(-alpha);
                        }
                    }
                    None => ray += lo.powf(-alpha),
                }
            }
            total += wt * ray;
        }
    }
    params.coefficient / alpha * total
}

/// Assemble the Dirichlet fractional Laplacian on a grid.
pub fn assemble_fraclap(grid: &Grid, params: &StableParams) -> Result<DiffusionOperator, FracError> {
    let n = grid.len();
    let h = grid.h;
    let alpha = params.alpha;
    let a_coeff = params.coefficient;
    let k0 = ((0.25 / h).floor() as i32).max(2);
    let ch = patch_coefficient(alpha, h) + ring_moment_correction(alpha, h, k0);
    let ch_w = ch / (h * h);
    let power = -(DIM as f64 + alpha) / 2.0;

    // Cell-coverage fractions for interior nodes near the boundary.
    let mut frac = vec![1.0; n];
    for k in 0..n {
        if grid.delta[k] < h {
            frac[k] = grid.domain.cell_inside_fraction(grid.coords[k], h);
        }
    }

    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        let (ik, jk) = grid.index[k];
        let pk = grid.coords[k];
        for l in (k + 1)..n {
            let (il, jl) = grid.index[l];
            let di = il - ik;
            let dj = jl - jk;
            let cheb = di.abs().max(dj.abs());
            let w = if cheb > 1 {
                let dx = grid.coords[l][0] - pk[0];
                let dy = grid.coords[l][1] - pk[1];
                let abar = 0.5 * (frac[k] + frac[l]);
                a_coeff * (dx * dx + dy * dy).powf(power) * h * h * abar
            } else if di.abs() + dj.abs() == 1 {
                ch_w
            } else {
                0.0
            };
            if w != 0.0 {
                m[(k, l)] = w;
                m[(l, k)] = w;
            }
        }
    }

    // Killing through stencil legs leaving the interior.
    let mut kill = vec![0.0; n];
    for k in 0..n {
        let (i, j) = grid.index[k];
        for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            if !grid.node_of.contains_key(&(i + di, j + dj)) {
                kill[k] += ch_w;
            }
        }
    }

    // Killing through slivers of boundary-straddling exterior cells.
    let c = grid.domain.center();
    let (lo, hi) = grid.domain.bounding_box();
    let ni = ((hi[0] - lo[0]) / (2.0 * h)).ceil() as i32 + 2;
    let nj = ((hi[1] - lo[1]) / (2.0 * h)).ceil() as i32 + 2;
    let mut straddlers: Vec<(i32, i32, Point, f64)> = Vec::new();
    for i in -ni..=ni {
        for j in -nj..=nj {
            if grid.node_of.contains_key(&(i, j)) {
                continue;
            }
            let p = [c[0] + i as f64 * h, c[1] + j as f64 * h];
            let sd = grid.domain.signed_distance(p);
            if sd > -h {
                let f = grid.domain.cell_inside_fraction(p, h);
                if f > 0.0 {
                    straddlers.push((i, j, p, f));
                }
            }
        }
    }
    for k in 0..n {
        let (ik, jk) = grid.index[k];
        let pk = grid.coords[k];
        for &(i, j, p, f) in &straddlers {
            if (i - ik).abs().max((j - jk).abs()) > 1 {
                let dx = p[0] - pk[0];
                let dy = p[1] - pk[1];
                kill[k] += a_coeff * (dx * dx + dy * dy).powf(power) * h * h * f;
            }
        }
    }

    // Exact exterior mass beyond the singular patch.
    for k in 0..n {
        kill[k] += exterior_killing(grid, grid.coords[k], params);
    }

    for (k, &kv) in kill.iter().enumerate() {
        if !(kv > 0.0) {
            return Err(FracError::Solver(format!(
                "nonpositive killing rate {kv} at node {k}; exterior mass unreachable"
            )));
        }
    }

    // Diagonal closes the rows: L·1 = −κ.
    for k in 0..n {
        let row_sum: f64 = m.row(k).sum();
        m[(k, k)] = -(row_sum + kill[k]);
    }

    Ok(DiffusionOperator {
        matrix: m,
        killing: DVector::from_vec(kill),
        alpha,
        grid: grid.clone(),
    })
}

/// The Dirichlet form E(f, g) = (−Lf, g) in the h²-weighted inner product.
pub fn dirichlet_form(f: &DVector<f64>, g: &DVector<f64>, op: &DiffusionOperator) -> Result<f64, FracError> {
    let n = op.matrix.nrows();
    if f.len() != n || g.len() != n {
        return Err(FracError::Config(format!(
            "field length {} / {} does not match operator size {n}",
            f.len(),
            g.len()
        )));
    }
    let h2 = op.grid.h * op.grid.h;
    Ok(-(&op.matrix * f).dot(g) * h2)
}

/// Free-space stable kernel p_t(x), radially symmetric, by the Fourier
/// inversion p_t(r) = (2π)^{-1} ∫₀^∞ e^{−t ρ^α} J₀(ρ r) ρ dρ, truncated
/// at ρ = 50·t^{−1/α} (integrand below 1e-20 there) with 4096 nodes.
pub fn free_kernel(t: f64, x: Point, p: &StableParams) -> Result<f64, FracError> {
    if t <= 0.0 {
        return Err(FracError::Config(format!("free kernel requires t > 0, got {t}")));
    }
    let r = x[0].hypot(x[1]);
    Ok(radial_fourier(t, r, p.alpha, false))
}

/// Radial derivative ∂_r p_t(r) by the same quadrature.
pub fn free_kernel_radial_derivative(t: f64, r: f64, p: &StableParams) -> Result<f64, FracError> {
    if t <= 0.0 {
        return Err(FracError::Config(format!("free kernel requires t > 0, got {t}")));
    }
    Ok(radial_fourier(t, r, p.alpha, true))
}

/// Shared quadrature: 512 panels × 8 Gauss points on [0, 50 t^{−1/α}].
pub(crate) fn radial_fourier(t: f64, r: f64, alpha: f64, derivative: bool) -> f64 {
    let rho_max = 50.0 * t.powf(-1.0 / alpha);
    let panels = 512;
    let mut acc = 0.0;
    for s in 0..panels {
        let a = rho_max * s as f64 / panels as f64;
        let b = rho_max * (s + 1) as f64 / panels as f64;
        let (x, w) = gauss_legendre_on(8, a, b);
        for (&rho, &wt) in x.iter().zip(&w) {
            let e = (-t * rho.powf(alpha)).exp();
            acc += if derivative {
                -wt * e * bessel_j1(rho * r) * rho * rho
            } else {
                wt * e * bessel_j0(rho * r) * rho
            };
        }
    }
    acc / (2.0 * std::f64::consts::PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};
    use rand::Rng;
    use rand::SeedableRng;

    const ALPHA: f64 = 1.5;

    fn op_at(h: f64) -> DiffusionOperator {
        let grid = build_grid(&Domain::disk(1.0), h, 0.3).unwrap();
        assemble_fraclap(&grid, &StableParams::new(ALPHA).unwrap()).unwrap()
    }

    #[test]
    fn coefficient_matches_high_precision_reference() {
        // Frozen from an arbitrary-precision gamma evaluation.
        assert!((levy_coefficient(1.5) - 0.171_167_129_690_552_34).abs() < 1e-15);
        let p = StableParams::new(1.5).unwrap();
        let nu = levy_density([0.6, 0.8], &p).unwrap();
        assert!((nu - p.coefficient).abs() < 1e-15);
        // Even function.
        let a = levy_density([0.3, 0.4], &p).unwrap();
        let b = levy_density([-0.3, -0.4], &p).unwrap();
        assert_eq!(a, b);
        assert!(levy_density([0.0, 0.0], &p).is_err());
        assert!(StableParams::new(2.0).is_err());
        assert!(StableParams::new(0.9).is_err());
    }

    #[test]
    fn levy_symbol_normalization_by_quadrature() {
        // ∫ (1 − cos(ξ·y)) ν(y) dy = |ξ|^α = 1 at ξ = (1,0): radially,
        // ∫₀^∞ A r^{−1−α} [2π − 2π J₀(r)] ... evaluated in polar form.
        let p = StableParams::new(1.5).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut acc = 0.0;
        // Geometric panels resolve the r^{1−α} behaviour at the origin;
        // uniform panels lose ~1e-2 there.
        let eps = 1e-6;
        let n_panels = 2000;
        let ratio = (400.0_f64 / eps).powf(1.0 / n_panels as f64);
        let mut a = eps;
        for _ in 0..n_panels {
            let b = a * ratio;
            let (x, w) = gauss_legendre_on(8, a, b);
            for (&r, &wt) in x.iter().zip(&w) {
                acc += wt * (1.0 - bessel_j0(r)) * p.coefficient * r.powf(-1.0 - p.alpha) * two_pi;
            }
            a = b;
        }
        // Below eps: 1 − J0(r) ≈ r²/4.
        acc += two_pi * p.coefficient / 4.0 * eps.powf(2.0 - p.alpha) / (2.0 - p.alpha);
        // Tail beyond 400: ∫ A r^{−1−α} 2π dr = 2πA/(α·400^α).
        acc += two_pi * p.coefficient / (p.alpha * 400f64.powf(p.alpha));
        assert!((acc - 1.0).abs() < 1e-4, "symbol normalization {acc}");
    }

    #[test]
    fn operator_symmetric_and_m_matrix() {
        let op = op_at(0.1);
        let n = op.matrix.nrows();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(op.matrix[(i, j)], op.matrix[(j, i)]);
                if i != j {
                    assert!(op.matrix[(i, j)] >= 0.0);
                }
            }
            // −L diagonally dominant with strict slack = killing.
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| op.matrix[(i, j)]).sum();
            assert!(-op.matrix[(i, i)] >= off);
            assert!(op.killing[i] > 0.0);
        }
    }

    #[test]
    fn constant_field_sees_only_killing() {
        let op = op_at(0.1);
        let ones = DVector::from_element(op.matrix.nrows(), 1.0);
        let lf = &op.matrix * &ones;
        for i in 0..lf.len() {
            assert!((lf[i] + op.killing[i]).abs() < 1e-12 * op.killing[i].max(1.0));
            assert!(lf[i] < 0.0);
        }
    }

    #[test]
    fn interior_consistency_on_smooth_bump() {
        // Continuum reference values of Δ^{α/2}(1−|x|²)^4_+ computed by
        // high-accuracy quadrature (frozen before the build).
        let exact = [([0.0, 0.0], -7.530_171), ([0.5, 0.0], -0.435_126)];
        let op = op_at(0.05);
        let g = &op.grid;
        let f = DVector::from_fn(g.len(), |k, _| {
            let u: f64 = 1.0 - g.coords[k][0].powi(2) - g.coords[k][1].powi(2);
            u.max(0.0).powi(4)
        });
        let lf = &op.matrix * &f;
        for (pt, ex) in exact {
            let k = g.node_of[&((pt[0] / 0.05_f64).round() as i32, (pt[1] / 0.05_f64).round() as i32)];
            let err = (lf[k] - ex).abs();
            // Second-order interior consistency: at h = 0.05 the
            // truncation error sits at the 5e-3 scale for this profile.
            assert!(err < 1e-2, "consistency at {pt:?}: err {err}");
        }
    }

    #[test]
    fn quadratic_form_identity() {
        // E(f,f) = ½ΣΣ w_ij (f_i−f_j)² h² + Σ κ_i f_i² h² with the
        // operator's own coupling weights.
        let op = op_at(0.1);
        let n = op.matrix.nrows();
        let h2 = op.grid.h * op.grid.h;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let f = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0_f64));
            let e = dirichlet_form(&f, &f, &op).unwrap();
            let mut q = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        q += 0.5 * op.matrix[(i, j)] * (f[i] - f[j]).powi(2) * h2;
                    }
                }
                q += op.killing[i] * f[i] * f[i] * h2;
            }
            assert!((e - q).abs() < 1e-10 * q.abs().max(1.0), "form {e} vs sum {q}");
            assert!(e > 0.0);
        }
        // Bilinear identity and symmetry.
        let f = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0_f64));
        let g = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0_f64));
        let efg = dirichlet_form(&f, &g, &op).unwrap();
        let egf = dirichlet_form(&g, &f, &op).unwrap();
        assert!((efg - egf).abs() < 1e-12 * efg.abs().max(1.0));
        let bad = DVector::zeros(3);
        assert!(dirichlet_form(&bad, &bad, &op).is_err());
    }

    #[test]
    fn ball_profile_closed_form() {
        // The profile (1 − |x|²)^{α/2}_+ on the unit disk is mapped by
        // the operator to the constant −2^α Γ(1+α/2) Γ(1+α/2) (d = 2),
        // and it vanishes outside, so the Dirichlet matrix applied to
        // its samples must reproduce that constant in the interior.
        let op = op_at(0.05);
        let g = &op.grid;
        let f = DVector::from_fn(g.len(), |k, _| {
            let u: f64 = 1.0 - g.coords[k][0].powi(2) - g.coords[k][1].powi(2);
            u.max(0.0).powf(ALPHA / 2.0)
        });
        let lf = &op.matrix * &f;
        let c = 2f64.powf(ALPHA) * crate::util::gamma(1.0 + ALPHA / 2.0).powi(2);
        let mut checked = 0;
        for k in 0..g.len() {
            let p = g.coords[k];
            if p[0].hypot(p[1]) < 0.5 {
                let rel = (lf[k] + c).abs() / c;
                assert!(rel < 5e-3, "ball profile residual {rel:.3e} at {p:?}");
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn free_kernel_scaling_normalization_comparability() {
        let p = StableParams::new(1.5).unwrap();
        // Scaling law p_t(x) = t^{−2/α} p_1(t^{−1/α} x).
        let t = 0.5;
        let x = [0.3, 0.0];
        let lhs = free_kernel(t, x, &p).unwrap();
        let s = t.powf(-1.0 / p.alpha);
        let rhs = t.powf(-2.0 / p.alpha) * free_kernel(1.0, [s * x[0], s * x[1]], &p).unwrap();
        assert!((lhs - rhs).abs() < 1e-8 * lhs, "scaling {lhs} vs {rhs}");
        // Normalization: radial Riemann sum of p_1 over radius 40.
        let mut mass = 0.0;
        let dr = 0.01;
        let mut r = 0.5 * dr;
        while r < 40.0 {
            mass += 2.0 * std::f64::consts::PI * r * free_kernel(1.0, [r, 0.0], &p).unwrap() * dr;
            r += dr;
        }
        // Analytic heavy tail beyond the truncation radius:
        // p_1(y) → A|y|^{−2−α}, so the missing mass is 2πA/(α·40^α)
        // ≈ 2.8e-3 — larger than the tolerance, hence added back.
        mass += 2.0 * std::f64::consts::PI * p.coefficient / (p.alpha * 40f64.powf(p.alpha));
        assert!((mass - 1.0).abs() < 1e-3, "kernel mass {mass}");
        // Comparability with min(1, r^{−2−α}) over r ∈ [0.1, 20].
        let mut ratios = Vec::new();
        for i in 0..40 {
            let r = 0.1 * (20.0f64 / 0.1).powf(i as f64 / 39.0);
            let bound = 1.0f64.min(r.powf(-2.0 - p.alpha));
            ratios.push(free_kernel(1.0, [r, 0.0], &p).unwrap() / bound);
        }
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(min > 0.0, "kernel positivity violated: {min}");
        assert!(max / min < 50.0, "comparability band [{min}, {max}]");
        assert!(free_kernel(0.0, [1.0, 0.0], &p).is_err());
        assert!(free_kernel(-1.0, [1.0, 0.0], &p).is_err());
    }

    #[test]
    fn free_kernel_radial_derivative_matches_differences() {
        let p = StableParams::new(1.5).unwrap();
        for r in [0.3, 1.0, 3.0] {
            let d = free_kernel_radial_derivative(1.0, r, &p).unwrap();
            let eps = 1e-4;
            let fd = (free_kernel(1.0, [r + eps, 0.0], &p).unwrap()
                - free_kernel(1.0, [r - eps, 0.0], &p).unwrap())
                / (2.0 * eps);
            assert!((d - fd).abs() < 1e-6, "derivative {d} vs fd {fd} at r {r}");
        }
    }

    #[test]
    fn solving_yields_positive_exit_profile() {
        // M-matrix inverse positivity: u = (−L)^{-1} 1 > 0 everywhere.
        let op = op_at(0.1);
        let n = op.matrix.nrows();
        let m = -op.matrix.clone();
        let chol = m.cholesky().expect("−L positive definite");
        let u = chol.solve(&DVector::from_element(n, 1.0));
        assert!(u.iter().all(|&v| v > 0.0));
        // Larger where the boundary is far.
        let center = op.grid.node_of[&(0, 0)];
        let near = (0..n).max_by(|&a, &b| op.grid.coords[a][0].total_cmp(&op.grid.coords[b][0])).unwrap();
        assert!(u[center] > u[near]);
    }
}
