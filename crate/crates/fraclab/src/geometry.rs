//! Bounded planar domains, uniform lattices, interior masks, and the
//! boundary distance function.
//!
//! Domains expose three geometric primitives used by the nonlocal
//! assembly: a signed distance (positive inside), the exterior ray
//! decomposition (the portions of a ray lying outside the domain), and
//! exact-or-adaptive cell coverage fractions for lattice cells cut by
//! the boundary.

use crate::error::FracError;
use std::collections::HashMap;

pub type Point = [f64; 2];

/// A bounded planar domain.
#[derive(Debug, Clone, serde::Serialize)]
pub enum Domain {
    /// Disk of given radius.
    Disk { center: Point, radius: f64 },
    /// Annulus with inner and outer radii.
    Annulus { center: Point, r_inner: f64, r_outer: f64 },
    /// Axis-aligned rectangle with rounded corners (C^{1,1} boundary).
    SmoothedRect { center: Point, half_widths: [f64; 2], corner_radius: f64 },
}

/// One maximal sub-interval of a ray lying outside the domain, as
/// distances from the ray origin. `end = None` means unbounded.
#[derive(Debug, Clone, Copy)]
pub struct ExteriorInterval {
    pub start: f64,
    pub end: Option<f64>,
}

impl Domain {
    pub fn disk(radius: f64) -> Self {
        Domain::Disk { center: [0.0, 0.0], radius }
    }

    pub fn center(&self) -> Point {
        match self {
            Domain::Disk { center, .. }
            | Domain::Annulus { center, .. }
            | Domain::SmoothedRect { center, .. } => *center,
        }
    }

    /// Signed distance to the boundary, positive inside the domain.
    ///
    /// Exact for disk and annulus; exact for the smoothed rectangle as
    /// well (standard rounded-box distance).
    pub fn signed_distance(&self, p: Point) -> f64 {
        match *self {
            Domain::Disk { center, radius } => radius - dist(p, center),
            Domain::Annulus { center, r_inner, r_outer } => {
                let r = dist(p, center);
                (r_outer - r).min(r - r_inner)
            }
            Domain::SmoothedRect { center, half_widths, corner_radius } => {
                let qx = (p[0] - center[0]).abs() - (half_widths[0] - corner_radius);
                let qy = (p[1] - center[1]).abs() - (half_widths[1] - corner_radius);
                let outside = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
                let inside = qx.max(qy).min(0.0);
                corner_radius - (outside + inside)
            }
        }
    }

    /// Tight axis-aligned bounding box of the closure.
    pub fn bounding_box(&self) -> (Point, Point) {
        match *self {
            Domain::Disk { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            Domain::Annulus { center, r_outer, .. } => (
                [center[0] - r_outer, center[1] - r_outer],
                [center[0] + r_outer, center[1] + r_outer],
            ),
            Domain::SmoothedRect { center, half_widths, .. } => (
                [center[0] - half_widths[0], center[1] - half_widths[1]],
                [center[0] + half_widths[0], center[1] + half_widths[1]],
            ),
        }
    }

    /// Decomposition of the ray p + t·u (t > 0, |u| = 1) into maximal
    /// intervals outside the domain. `p` must lie inside.
    pub fn exterior_intervals(&self, p: Point, u: Point) -> Vec<ExteriorInterval> {
        match *self {
            Domain::Disk { center, radius } => {
                vec![ExteriorInterval { start: ray_circle_exit(p, u, center, radius), end: None }]
            }
            Domain::Annulus { center, r_inner, r_outer } => {
                let mut out = Vec::with_capacity(2);
                // Chord through the inner hole, if the ray meets it.
                let cx = [center[0] - p[0], center[1] - p[1]];
                let proj = cx[0] * u[0] + cx[1] * u[1];
                let d2 = cx[0] * cx[0] + cx[1] * cx[1] - proj * proj;
                if d2 < r_inner * r_inner && proj > 0.0 {
                    let half = (r_inner * r_inner - d2).sqrt();
                    out.push(ExteriorInterval { start: proj - half, end: Some(proj + half) });
                }
                out.push(ExteriorInterval { start: ray_circle_exit(p, u, center, r_outer), end: None });
                out
            }
            Domain::SmoothedRect { .. } => {
                // Convex domain: single exit point, located by bisection
                // on the signed distance along the ray.
                let (lo, hi) = self.bounding_box();
                let diam = dist(lo, hi) + 1.0;
                let mut a = 0.0;
                let mut b = diam;
                debug_assert!(self.signed_distance(p) > 0.0);
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    if self.signed_distance([p[0] + m * u[0], p[1] + m * u[1]]) > 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                vec![ExteriorInterval { start: 0.5 * (a + b), end: None }]
            }
        }
    }

    /// Fraction of the axis-aligned square cell (center `c`, side `h`)
    /// covered by the domain, in [0, 1].
    pub fn cell_inside_fraction(&self, c: Point, h: f64) -> f64 {
        match *self {
            Domain::Disk { center, radius } => disk_cell_fraction(c, h, center, radius),
            Domain::Annulus { center, r_inner, r_outer } => {
                disk_cell_fraction(c, h, center, r_outer) - disk_cell_fraction(c, h, center, r_inner)
            }
            Domain::SmoothedRect { .. } => self.cell_fraction_adaptive(c, h, 0),
        }
    }

    fn cell_fraction_adaptive(&self, c: Point, h: f64, depth: u32) -> f64 {
        let sd = self.signed_distance(c);
        let rad = h * std::f64::consts::SQRT_2 / 2.0;
        if sd >= rad {
            return 1.0;
        }
        if sd <= -rad {
            return 0.0;
        }
        if depth >= 9 {
            return if sd > 0.0 { 1.0 } else { 0.0 };
        }
        let q = h / 4.0;
        let mut acc = 0.0;
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                acc += self.cell_fraction_adaptive([c[0] + sx * q, c[1] + sy * q], h / 2.0, depth + 1);
            }
        }
        acc / 4.0
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Distance from an interior point to the circle |x - c| = r along unit
/// direction u (the positive root of the ray-circle equation).
fn ray_circle_exit(p: Point, u: Point, c: Point, r: f64) -> f64 {
    let d = [p[0] - c[0], p[1] - c[1]];
    let pu = d[0] * u[0] + d[1] * u[1];
    let disc = pu * pu + r * r - (d[0] * d[0] + d[1] * d[1]);
    debug_assert!(disc >= 0.0);
    -pu + disc.sqrt()
}

/// Exact area fraction of a square cell inside a disk, by analytic
/// strip integration of the circle arc.
fn disk_cell_fraction(c: Point, h: f64, center: Point, radius: f64) -> f64 {
    let half = 0.5 * h;
    let x0 = c[0] - center[0] - half;
    let x1 = c[0] - center[0] + half;
    let y0 = c[1] - center[1] - half;
    let y1 = c[1] - center[1] + half;
    // Area of {(x,y) in cell : x^2 + y^2 <= r^2}. Split the x-range at
    // the abscissae where the circle crosses the horizontal cell edges
    // so each piece has a smooth integrand.
    let r = radius;
    if x0 >= r || x1 <= -r {
        return 0.0;
    }
    let (x0, x1) = (x0.max(-r), x1.min(r));
    let mut cuts = vec![x0, x1];
    for &ye in &[y0, y1] {
        if ye.abs() < r {
            let xc = (r * r - ye * ye).sqrt();
            for &s in &[-xc, xc] {
                if s > x0 && s < x1 {
                    cuts.push(s);
                }
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Antiderivative of sqrt(r^2 - x^2).
    let f = |x: f64| 0.5 * (x * (r * r - x * x).max(0.0).sqrt() + r * r * (x / r).clamp(-1.0, 1.0).asin());
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let xm = 0.5 * (a + b);
        let ytop = (r * r - xm * xm).max(0.0).sqrt();
        // Circle upper arc clipped to [y0, y1], lower arc is -ytop.
        let hi = ytop.min(y1);
        let lo = (-ytop).max(y0);
        if hi <= lo {
            continue;
        }
        // Integrate the clipped height over [a, b]; each clip case is
        // constant over the piece by construction of the cuts.
        let top_is_arc = ytop < y1;
        let bot_is_arc = -ytop > y0;
        let mut seg = 0.0;
        seg += if top_is_arc { f(b) - f(a) } else { y1 * (b - a) };
        seg -= if bot_is_arc { -(f(b) - f(a)) } else { y0 * (b - a) };
        area += seg;
    }
    (area / (h * h)).clamp(0.0, 1.0)
}

/// Uniform node-centered lattice restricted to the interior of a domain.
///
/// Node (i, j) sits at center + (i·h, j·h); a node is interior when its
/// signed distance is strictly positive. The lattice is anchored at the
/// domain center so symmetric domains produce symmetric node sets.
#[derive(Debug, Clone)]
pub struct Grid {
    pub domain: Domain,
    pub h: f64,
    /// Bounding box of the lattice (domain box plus margin).
    pub box_lo: Point,
    pub box_hi: Point,
    /// Lattice indices of interior nodes.
    pub index: Vec<(i32, i32)>,
    /// Coordinates of interior nodes.
    pub coords: Vec<Point>,
    /// Boundary distance per interior node.
    pub delta: Vec<f64>,
    /// Map from lattice index to interior node number.
    pub node_of: HashMap<(i32, i32), usize>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn node_coord(&self, ij: (i32, i32)) -> Point {
        let c = self.domain.center();
        [c[0] + ij.0 as f64 * self.h, c[1] + ij.1 as f64 * self.h]
    }
}

/// Build the interior lattice for a domain at spacing `h`.
///
/// The margin only affects the stored bounding box (used by flow
/// integration as an escape guard); the operator assembly integrates
/// the exterior analytically and needs no padding nodes.
pub fn build_grid(domain: &Domain, h: f64, margin: f64) -> Result<Grid, FracError> {
    if h <= 0.0 {
        return Err(FracError::Config("grid spacing h must be positive".into()));
    }
    if margin < 2.0 * h {
        return Err(FracError::Config("grid margin must be at least 2h".into()));
    }
    let (lo, hi) = domain.bounding_box();
    let c = domain.center();
    let ni = ((hi[0] - lo[0]) / (2.0 * h)).ceil() as i32 + 2;
    let nj = ((hi[1] - lo[1]) / (2.0 * h)).ceil() as i32 + 2;
    let mut index = Vec::new();
    let mut coords = Vec::new();
    let mut delta = Vec::new();
    let mut node_of = HashMap::new();
    for i in -ni..=ni {
        for j in -nj..=nj {
            let p = [c[0] + i as f64 * h, c[1] + j as f64 * h];
            let sd = domain.signed_distance(p);
            if sd > 0.0 {
                node_of.insert((i, j), coords.len());
                index.push((i, j));
                coords.push(p);
                delta.push(sd);
            }
        }
    }
    if coords.is_empty() {
        return Err(FracError::Config("grid too coarse: zero interior nodes".into()));
    }
    Ok(Grid {
        domain: domain.clone(),
        h,
        box_lo: [lo[0] - margin, lo[1] - margin],
        box_hi: [hi[0] + margin, hi[1] + margin],
        index,
        coords,
        delta,
        node_of,
    })
}

/// Boundary distance of an interior node.
pub fn boundary_distance(grid: &Grid, node: usize) -> Result<f64, FracError> {
    grid.delta
        .get(node)
        .copied()
        .ok_or_else(|| FracError::Config(format!("node {node} out of range")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_interior_nodes_match_predicate_at_coarse_h() {
        let d = Domain::disk(1.0);
        let g = build_grid(&d, 0.5, 1.0).unwrap();
        for i in -4..=4_i32 {
            for j in -4..=4_i32 {
                let inside = ((i as f64 * 0.5).powi(2) + (j as f64 * 0.5).powi(2)).sqrt() < 1.0;
                assert_eq!(g.node_of.contains_key(&(i, j)), inside, "node ({i},{j})");
            }
        }
    }

    #[test]
    fn disk_interior_count_tracks_area() {
        let g = build_grid(&Domain::disk(1.0), 0.05, 0.3).unwrap();
        let expect = std::f64::consts::PI / (0.05 * 0.05);
        assert!((g.len() as f64 - expect).abs() < 13.0, "count {} vs {expect}", g.len());
    }

    #[test]
    fn annulus_has_no_nodes_in_hole() {
        let d = Domain::Annulus { center: [0.0, 0.0], r_inner: 0.5, r_outer: 1.0 };
        let g = build_grid(&d, 0.05, 0.2).unwrap();
        assert!(g.coords.iter().all(|p| dist(*p, [0.0, 0.0]) > 0.5));
        assert!(!g.is_empty());
    }

    #[test]
    fn boundary_distance_radial_formula() {
        let g = build_grid(&Domain::disk(1.0), 0.05, 0.2).unwrap();
        let origin = g.node_of[&(0, 0)];
        assert!((boundary_distance(&g, origin).unwrap() - 1.0).abs() < 1e-15);
        let n = g.node_of[&(12, 0)];
        assert!((boundary_distance(&g, n).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn signed_distance_is_lipschitz_on_samples() {
        let d = Domain::SmoothedRect {
            center: [0.0, 0.0],
            half_widths: [1.0, 0.7],
            corner_radius: 0.2,
        };
        let mut pts = Vec::new();
        for i in -12..=12 {
            for j in -9..=9 {
                pts.push([i as f64 * 0.1, j as f64 * 0.1]);
            }
        }
        for (a, pa) in pts.iter().enumerate() {
            for pb in pts.iter().skip(a + 1) {
                let ds = (d.signed_distance(*pa) - d.signed_distance(*pb)).abs();
                assert!(ds <= dist(*pa, *pb) + 1e-12);
            }
        }
    }

    #[test]
    fn smoothed_rect_distance_matches_brute_boundary_sampling() {
        let d = Domain::SmoothedRect {
            center: [0.0, 0.0],
            half_widths: [1.0, 0.7],
            corner_radius: 0.25,
        };
        // Dense polyline sample of the boundary: march the zero level
        // set along many directions from the center.
        let mut boundary = Vec::new();
        for k in 0..4000 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 4000.0;
            let u = [th.cos(), th.sin()];
            let t = d.exterior_intervals([0.0, 0.0], u)[0].start;
            boundary.push([t * u[0], t * u[1]]);
        }
        for p in [[0.3, 0.2], [0.0, 0.0], [-0.8, 0.5], [0.9, -0.6]] {
            let sd = d.signed_distance(p);
            let brute = boundary.iter().map(|b| dist(p, *b)).fold(f64::INFINITY, f64::min);
            assert!((sd.abs() - brute).abs() < 1e-5, "sd {sd} brute {brute}");
        }
    }

    #[test]
    fn disk_cell_fraction_cases() {
        let d = Domain::disk(1.0);
        assert!((d.cell_inside_fraction([0.0, 0.0], 0.1) - 1.0).abs() < 1e-14);
        assert!((d.cell_inside_fraction([2.0, 0.0], 0.1)).abs() < 1e-14);
        // Cell centered on the boundary at the rightmost point: the
        // covered area is a thin lens; compare against fine subsampling.
        let c = [1.0, 0.0];
        let h = 0.1;
        let mut acc = 0.0;
        let m = 400;
        for i in 0..m {
            for j in 0..m {
                let x = c[0] - h / 2.0 + (i as f64 + 0.5) * h / m as f64;
                let y = c[1] - h / 2.0 + (j as f64 + 0.5) * h / m as f64;
                if x * x + y * y < 1.0 {
                    acc += 1.0;
                }
            }
        }
        let brute = acc / (m * m) as f64;
        let exact = d.cell_inside_fraction(c, h);
        assert!((exact - brute).abs() < 5e-4, "exact {exact} brute {brute}");
    }

    #[test]
    fn exterior_intervals_disk_and_annulus() {
        let d = Domain::disk(1.0);
        let iv = d.exterior_intervals([0.5, 0.0], [1.0, 0.0]);
        assert_eq!(iv.len(), 1);
        assert!((iv[0].start - 0.5).abs() < 1e-14);
        let a = Domain::Annulus { center: [0.0, 0.0], r_inner: 0.5, r_outer: 1.0 };
        // Ray from (0.75, 0) pointing in -x crosses the hole then exits.
        let iv = a.exterior_intervals([0.75, 0.0], [-1.0, 0.0]);
        assert_eq!(iv.len(), 2);
        assert!((iv[0].start - 0.25).abs() < 1e-13);
        assert!((iv[0].end.unwrap() - 1.25).abs() < 1e-13);
        assert!((iv[1].start - 1.75).abs() < 1e-13);
        assert!(iv[1].end.is_none());
    }

    #[test]
    fn refining_h_only_adds_interior_nodes() {
        let d = Domain::disk(1.0);
        let coarse = build_grid(&d, 0.1, 0.3).unwrap();
        let fine = build_grid(&d, 0.05, 0.3).unwrap();
        for &(i, j) in &coarse.index {
            assert!(fine.node_of.contains_key(&(2 * i, 2 * j)));
        }
    }

    #[test]
    fn disk_grid_reflection_symmetry() {
        let g = build_grid(&Domain::disk(1.0), 0.05, 0.2).unwrap();
        for &(i, j) in &g.index {
            assert!(g.node_of.contains_key(&(-i, j)));
            assert!(g.node_of.contains_key(&(i, -j)));
        }
    }

    #[test]
    fn build_grid_rejects_bad_input() {
        assert!(build_grid(&Domain::disk(1.0), -0.1, 0.5).is_err());
        assert!(build_grid(&Domain::disk(1.0), 0.1, 0.1).is_err());
        // A domain smaller than the spacing still yields the anchored
        // center node (the lattice is anchored at the domain center).
        let tiny = build_grid(&Domain::disk(0.01), 0.1, 0.3).unwrap();
        assert_eq!(tiny.len(), 1);
    }
}
