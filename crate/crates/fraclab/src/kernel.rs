//! Perturbation series p_n for the drift-perturbed free-space heat
//! kernel and its structural identities.
//!
//! p_0 is the free α-stable kernel; p_n(t,x,y) = ∫₀^t ds ∫ p_{n−1}(t−s,x,z)
//! b(z)·∇_z p(s,z,y) dz. Space integrals are lattice sums over the
//! support of b; time integrals use plain Gauss-Legendre nodes on (0,t).
//! The integrand has finite one-sided limits at both endpoints once the
//! lattice sum is in place, and endpoint-clustered substitutions place
//! nodes at times whose kernel width s^{1/α} the lattice cannot resolve,
//! so uniform nodes are both simpler and more accurate at fixed lattice
//! spacing. The lattice spacing must stay coarser than the width of the
//! kernel at the smallest time node (h_q ≳ s_min^{1/α}); refining one
//! without the other degrades accuracy.

use crate::drift::VectorField;
use crate::error::FracError;
use crate::fractional::radial_fourier;
use crate::geometry::Point;
use crate::util::{gauss_legendre_on, LinearTable};

/// Radial tables of the unit-time kernel p_1(r) and its derivative,
/// rescaled to any t through the stable scaling law.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub alpha: f64,
    p1: LinearTable,
    dp1: LinearTable,
}

impl KernelTable {
    /// Tabulate p(1,·) and ∂_r p(1,·) on a geometric radius grid by the
    /// 4096-node Fourier-Bessel quadrature.
    pub fn build(alpha: f64) -> Self {
        let mut rs = vec![0.0];
        let n = 4000;
        for i in 0..n {
            rs.push(1e-3 * (120.0f64 / 1e-3).powf(i as f64 / (n - 1) as f64));
        }
        let ps: Vec<f64> = rs.iter().map(|&r| radial_fourier(1.0, r, alpha, false)).collect();
        let dps: Vec<f64> = rs.iter().map(|&r| radial_fourier(1.0, r, alpha, true)).collect();
        KernelTable {
            alpha,
            p1: LinearTable::new(rs.clone(), ps),
            dp1: LinearTable::new(rs, dps),
        }
    }

    /// p_t(r) = t^{−2/α} p_1(t^{−1/α} r).
    pub fn p(&self, t: f64, r: f64) -> f64 {
        let ts = t.powf(-1.0 / self.alpha);
        t.powf(-2.0 / self.alpha) * self.p1.eval(r * ts)
    }

    /// ∂_r p_t(r) = t^{−3/α} p_1'(t^{−1/α} r).
    pub fn dp(&self, t: f64, r: f64) -> f64 {
        let (pref, ts) = self.dp_scaling(t);
        pref * self.dp1.eval(r * ts)
    }

    /// (prefactor, radius scale) of the stable rescaling of ∂_r p_t, so
    /// hot loops at fixed t can skip the two powf calls per evaluation.
    fn dp_scaling(&self, t: f64) -> (f64, f64) {
        (t.powf(-3.0 / self.alpha), t.powf(-1.0 / self.alpha))
    }
}

/// Quadrature resolution for the series terms.
#[derive(Debug, Clone, Copy)]
pub struct QuadSpec {
    /// Lattice spacing of the spatial sum over the drift support.
    pub hq: f64,
    /// Gauss-Legendre node count per time integral.
    pub m: usize,
    /// Half-width of the sampled square (must cover the support of b).
    pub support_radius: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { hq: 0.025, m: 16, support_radius: 0.72 }
    }
}

/// Lattice points inside the drift support with their velocities and
/// integer grid coordinates (for difference-indexed kernel tables).
struct DriftLattice {
    z: Vec<Point>,
    b: Vec<[f64; 2]>,
    idx: Vec<(i64, i64)>,
    n_side: i64,
    hq: f64,
    cell: f64,
}

fn build_lattice(field: &VectorField, quad: &QuadSpec) -> DriftLattice {
    let n = (2.0 * quad.support_radius / quad.hq).round() as i64;
    let mut z = Vec::new();
    let mut b = Vec::new();
    let mut idx = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            let p = [
                -quad.support_radius + i as f64 * quad.hq,
                -quad.support_radius + j as f64 * quad.hq,
            ];
            let v = field.eval(p);
            if v[0] != 0.0 || v[1] != 0.0 {
                z.push(p);
                b.push(v);
                idx.push((i, j));
            }
        }
    }
    DriftLattice { z, b, idx, n_side: n, hq: quad.hq, cell: quad.hq * quad.hq }
}

/// The gradient-leg vector kernel u(v) = (v/|v|)·∂_r p_s(|v|) tabulated
/// on the lattice difference grid at one time node, so the inner double
/// sum over lattice pairs is a plain indexed multiply-add.
struct DiffKernel {
    ux: Vec<f64>,
    uy: Vec<f64>,
    width: usize,
    offset: i64,
}

impl DiffKernel {
    fn build(sk: f64, latt: &DriftLattice, table: &KernelTable) -> Self {
        let n = latt.n_side;
        let width = (2 * n + 1) as usize;
        let (pref, ts) = table.dp_scaling(sk);
        let mut ux = vec![0.0; width * width];
        let mut uy = vec![0.0; width * width];
        for di in -n..=n {
            for dj in -n..=n {
                let vx = di as f64 * latt.hq;
                let vy = dj as f64 * latt.hq;
                let r = vx.hypot(vy);
                if r == 0.0 {
                    continue;
                }
                let g = pref * table.dp1.eval(r * ts) / r;
                let k = ((di + n) * (2 * n + 1) + (dj + n)) as usize;
                ux[k] = vx * g;
                uy[k] = vy * g;
            }
        }
        DiffKernel { ux, uy, width, offset: n }
    }

    #[inline]
    fn at(&self, d: (i64, i64)) -> (f64, f64) {
        let k = ((d.0 + self.offset) as usize) * self.width + (d.1 + self.offset) as usize;
        (self.ux[k], self.uy[k])
    }
}

/// p_n(t, x, z_j) for every lattice point z_j, by direct recursion.
fn term_table(
    n: usize,
    t: f64,
    x: Point,
    latt: &DriftLattice,
    table: &KernelTable,
    m: usize,
) -> Vec<f64> {
    let nz = latt.z.len();
    if n == 0 {
        return latt
            .z
            .iter()
            .map(|&z| table.p(t, (x[0] - z[0]).hypot(x[1] - z[1])))
            .collect();
    }
    let (s, w) = gauss_legendre_on(m, 0.0, t);
    let mut out = vec![0.0; nz];
    for (&sk, &wk) in s.iter().zip(&w) {
        let left = term_table(n - 1, t - sk, x, latt, table, m);
        let diff = DiffKernel::build(sk, latt, table);
        // out_j += wk Σ_i left_i · b(z_i)·u(z_i−z_j) · cell
        for i in 0..nz {
            if left[i] == 0.0 {
                continue;
            }
            let (ii, ij) = latt.idx[i];
            let bi = latt.b[i];
            let amp_x = wk * left[i] * latt.cell * bi[0];
            let amp_y = wk * left[i] * latt.cell * bi[1];
            for (j, oj) in out.iter_mut().enumerate() {
                let (ji, jj) = latt.idx[j];
                let (ux, uy) = diff.at((ii - ji, ij - jj));
                *oj += amp_x * ux + amp_y * uy;
            }
        }
    }
    out
}

/// Contract a (n−1)-term table against the final gradient leg toward y.
fn contract(
    n: usize,
    t: f64,
    x: Point,
    y: Point,
    latt: &DriftLattice,
    table: &KernelTable,
    m: usize,
) -> f64 {
    let (s, w) = gauss_legendre_on(m, 0.0, t);
    let mut tot = 0.0;
    for (&sk, &wk) in s.iter().zip(&w) {
        let left = term_table(n - 1, t - sk, x, latt, table, m);
        let (pref, ts) = table.dp_scaling(sk);
        let mut acc = 0.0;
        for i in 0..latt.z.len() {
            let dx = latt.z[i][0] - y[0];
            let dy = latt.z[i][1] - y[1];
            let r = dx.hypot(dy).max(1e-12);
            acc += left[i] * (latt.b[i][0] * dx + latt.b[i][1] * dy) / r * table.dp1.eval(r * ts);
        }
        tot += wk * acc * latt.cell * pref;
    }
    tot
}

/// One signed series term p_n(t, x, y).
pub fn series_term(
    n: usize,
    t: f64,
    x: Point,
    y: Point,
    field: &VectorField,
    quad: &QuadSpec,
    table: &KernelTable,
) -> Result<f64, FracError> {
    if n > 3 {
        return Err(FracError::Config(format!("series order {n} above the desk-scale cap 3")));
    }
    if !(t > 0.0 && t <= 2.0) {
        return Err(FracError::Config(format!("series time must lie in (0, 2], got {t}")));
    }
    if n == 0 {
        return Ok(table.p(t, (x[0] - y[0]).hypot(x[1] - y[1])));
    }
    let latt = build_lattice(field, quad);
    if latt.z.is_empty() {
        return Ok(0.0);
    }
    Ok(contract(n, t, x, y, &latt, table, quad.m))
}

/// A series term with a refinement consistency check: the value is
/// recomputed with a finer lattice and more time nodes together (the
/// two resolutions must move in lockstep; see the module notes);
/// disagreement above 5% relative is a quadrature error.
pub fn series_term_checked(
    n: usize,
    t: f64,
    x: Point,
    y: Point,
    field: &VectorField,
    quad: &QuadSpec,
    table: &KernelTable,
) -> Result<f64, FracError> {
    let a = series_term(n, t, x, y, field, quad, table)?;
    if n == 0 {
        return Ok(a);
    }
    let finer = QuadSpec { hq: quad.hq / 1.5, m: quad.m + 8, ..*quad };
    let b = series_term(n, t, x, y, field, &finer, table)?;
    let scale = a.abs().max(b.abs());
    if scale > 1e-12 && (a - b).abs() > 0.05 * scale {
        return Err(FracError::Quadrature(format!(
            "series term n={n} unstable under time refinement: {a:.6e} vs {b:.6e}"
        )));
    }
    Ok(a)
}

/// Evaluation of the partial series at one probe.
#[derive(Debug, Clone)]
pub struct SeriesEvaluation {
    pub t: f64,
    pub x: Point,
    pub y: Point,
    pub terms: Vec<f64>,
    pub partial_sum: f64,
    /// p̃_N / p_0.
    pub ratio: f64,
    pub quad: QuadSpec,
}

/// Partial sums p̃_N = Σ_{n≤N} p_n at a probe point.
pub fn kernel_sum(
    t: f64,
    x: Point,
    y: Point,
    field: &VectorField,
    n_max: usize,
    quad: &QuadSpec,
    table: &KernelTable,
) -> Result<SeriesEvaluation, FracError> {
    let mut terms = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        terms.push(series_term(n, t, x, y, field, quad, table)?);
    }
    let partial_sum: f64 = terms.iter().sum();
    let ratio = partial_sum / terms[0];
    Ok(SeriesEvaluation { t, x, y, terms, partial_sum, ratio, quad: *quad })
}

/// Lattice-sum mass of p̃_N(t, x, ·): the p_0 part integrated radially
/// over a radius-30 disk, the perturbation terms summed over a y-lattice
/// covering the region where they are non-negligible (they decay like
/// |y|^{−3−α} beyond the drift support).
pub fn series_mass(
    t: f64,
    x: Point,
    field: &VectorField,
    n_max: usize,
    quad: &QuadSpec,
    table: &KernelTable,
) -> Result<f64, FracError> {
    // Radial Riemann sum of p_0 over |y − x| ≤ 30.
    let mut mass = 0.0;
    let dr = 0.02;
    let mut r = 0.5 * dr;
    while r < 30.0 {
        mass += 2.0 * std::f64::consts::PI * r * table.p(t, r) * dr;
        r += dr;
    }
    if n_max == 0 {
        return Ok(mass);
    }
    let latt = build_lattice(field, quad);
    if latt.z.is_empty() {
        return Ok(mass);
    }
    // Perturbation terms on a coarse y-lattice over a radius-6 box:
    // the integrands are smooth on the scale t^{1/α}.
    let hy = 0.15_f64;
    let ny = (6.0 / hy).round() as i64;
    let (s, w) = gauss_legendre_on(quad.m, 0.0, t);
    for n in 1..=n_max {
        // Precompute the left tables once per time node.
        let lefts: Vec<Vec<f64>> = s
            .iter()
            .map(|&sk| term_table(n - 1, t - sk, x, &latt, table, quad.m))
            .collect();
        let scalings: Vec<(f64, f64)> = s.iter().map(|&sk| table.dp_scaling(sk)).collect();
        let mut term_mass = 0.0;
        for iy in -ny..=ny {
            for jy in -ny..=ny {
                let y = [iy as f64 * hy, jy as f64 * hy];
                let mut val = 0.0;
                for (k, &(pref, ts)) in scalings.iter().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..latt.z.len() {
                        let dx = latt.z[i][0] - y[0];
                        let dy = latt.z[i][1] - y[1];
                        let r = dx.hypot(dy).max(1e-12);
                        acc += lefts[k][i] * (latt.b[i][0] * dx + latt.b[i][1] * dy) / r
                            * table.dp1.eval(r * ts);
                    }
                    val += w[k] * acc * latt.cell * pref;
                }
                term_mass += val * hy * hy;
            }
        }
        mass += term_mass;
    }
    Ok(mass)
}
