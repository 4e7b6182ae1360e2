//! Flat key-value run configuration.
//!
//! The on-disk format is one `key = value` pair per line with `#`
//! comments. Flatness keeps the file trivially parseable from any
//! language. Documented keys:
//!
//! ```text
//! domain.kind        disk | annulus | smoothed-rect
//! domain.radius      disk radius (default 1.0)
//! domain.r_inner     annulus inner radius
//! domain.r_outer     annulus outer radius
//! domain.half_width_x / domain.half_width_y / domain.corner_radius
//! alpha              stability order in (1, 2)
//! grid.h             lattice spacing
//! grid.margin        bounding-box margin (default 4h)
//! field.kind         rotational | stream | constant | custom-stream-table | none
//! field.profile      one | bump | gaussian       (rotational/stream profile)
//! field.r0           bump support radius (default 0.7)
//! field.power        bump exponent (default 3)
//! field.rate         gaussian decay rate (default 4)
//! field.e1/field.e2  constant-field components
//! field.csv          stream-table CSV path (x1,x2,psi rows)
//! sweep.A            comma-separated amplitudes, ascending
//! tol.eigen          eigenvalue increment tolerance (default 1e-9)
//! tol.identity       identity-residual tolerance (default 1e-10)
//! tol.svd            relative SVD kernel threshold (default 0.02)
//! tol.energy_cutoff  Dirichlet-energy cutoff for first integrals (default 50)
//! mc.n_paths / mc.dt / mc.t_max / mc.start (center | uniform | "x,y")
//! kernel.t           series evaluation time (default 0.5)
//! kernel.n_max       highest series term (default 2, capped at 3)
//! kernel.hq          series lattice spacing (default 0.025)
//! kernel.time_nodes  Gauss nodes per time integral (default 16)
//! seed               64-bit RNG seed
//! out.dir            output directory
//! ```

use crate::error::FracError;
use crate::geometry::Domain;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum FieldKind {
    None,
    Rotational,
    Stream,
    Constant,
    CustomStreamTable,
    /// b = (x₁, 0): deliberately compressible, used as a negative
    /// control in the structural checks.
    CompressibleControl,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum Profile {
    One,
    /// g(u) = (r0^2 - u)^power for u < r0^2, else 0 (u = r^2).
    Bump { r0: f64, power: i32 },
    /// g(u) = exp(-rate * u).
    Gaussian { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum StartDist {
    Center,
    UniformInDomain,
    Fixed([f64; 2]),
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RunConfig {
    pub domain: Domain,
    pub alpha: f64,
    pub h: f64,
    pub margin: f64,
    pub field_kind: FieldKind,
    pub profile: Profile,
    pub constant_dir: [f64; 2],
    pub stream_csv: Option<String>,
    pub amplitudes: Vec<f64>,
    pub tol_eigen: f64,
    pub tol_identity: f64,
    pub svd_threshold: f64,
    pub energy_cutoff: f64,
    pub mc_n_paths: u64,
    pub mc_dt: f64,
    pub mc_t_max: f64,
    pub mc_start: StartDist,
    pub kernel_t: f64,
    pub kernel_n_max: usize,
    pub kernel_hq: f64,
    pub kernel_time_nodes: usize,
    pub seed: u64,
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            domain: Domain::disk(1.0),
            alpha: 1.5,
            h: 0.05,
            margin: 0.3,
            field_kind: FieldKind::Rotational,
            profile: Profile::Bump { r0: 0.7, power: 3 },
            constant_dir: [1.0, 0.0],
            stream_csv: None,
            amplitudes: vec![0.0, 10.0, 40.0, 160.0],
            tol_eigen: 1e-9,
            tol_identity: 1e-10,
            svd_threshold: 0.02,
            energy_cutoff: 50.0,
            mc_n_paths: 200_000,
            mc_dt: 1e-3,
            mc_t_max: 4.0,
            mc_start: StartDist::Center,
            kernel_t: 0.5,
            kernel_n_max: 2,
            kernel_hq: 0.025,
            kernel_time_nodes: 16,
            seed: 7,
            out_dir: "out".into(),
        }
    }
}

fn parse_f64(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>, FracError> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<f64>()
            .map(Some)
            .map_err(|_| FracError::Config(format!("key '{key}': cannot parse '{v}' as a number"))),
    }
}

fn parse_u64(map: &BTreeMap<String, String>, key: &str) -> Result<Option<u64>, FracError> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<u64>()
            .map(Some)
            .map_err(|_| FracError::Config(format!("key '{key}': cannot parse '{v}' as an integer"))),
    }
}

impl RunConfig {
    /// Parse the flat key-value text format.
    pub fn parse(text: &str) -> Result<Self, FracError> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FracError::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_map(&map)
    }

    pub fn load(path: &Path) -> Result<Self, FracError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FracError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn from_map(map: &BTreeMap<String, String>) -> Result<Self, FracError> {
        let mut cfg = RunConfig::default();
        const KNOWN_KEYS: [&str; 35] = [
            "domain.kind",
            "domain.center_x",
            "domain.center_y",
            "domain.radius",
            "domain.r_inner",
            "domain.r_outer",
            "domain.half_width_x",
            "domain.half_width_y",
            "domain.corner_radius",
            "alpha",
            "grid.h",
            "grid.margin",
            "field.kind",
            "field.profile",
            "field.r0",
            "field.power",
            "field.rate",
            "field.e1",
            "field.e2",
            "field.csv",
            "sweep.A",
            "tol.eigen",
            "tol.identity",
            "tol.svd",
            "tol.energy_cutoff",
            "mc.n_paths",
            "mc.dt",
            "mc.t_max",
            "mc.start",
            "kernel.t",
            "kernel.n_max",
            "kernel.hq",
            "kernel.time_nodes",
            "seed",
            "out.dir",
        ];
        for k in map.keys() {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(FracError::Config(format!("unknown config key '{k}'")));
            }
        }
        let center = [
            parse_f64(map, "domain.center_x")?.unwrap_or(0.0),
            parse_f64(map, "domain.center_y")?.unwrap_or(0.0),
        ];
        cfg.domain = match map.get("domain.kind").map(String::as_str).unwrap_or("disk") {
            "disk" => Domain::Disk {
                center,
                radius: parse_f64(map, "domain.radius")?.unwrap_or(1.0),
            },
            "annulus" => Domain::Annulus {
                center,
                r_inner: parse_f64(map, "domain.r_inner")?.unwrap_or(0.5),
                r_outer: parse_f64(map, "domain.r_outer")?.unwrap_or(1.0),
            },
            "smoothed-rect" => Domain::SmoothedRect {
                center,
                half_widths: [
                    parse_f64(map, "domain.half_width_x")?.unwrap_or(1.0),
                    parse_f64(map, "domain.half_width_y")?.unwrap_or(0.7),
                ],
                corner_radius: parse_f64(map, "domain.corner_radius")?.unwrap_or(0.2),
            },
            other => {
                return Err(FracError::Config(format!("domain.kind: unknown value '{other}'")));
            }
        };
        if let Domain::Annulus { r_inner, r_outer, .. } = cfg.domain {
            if !(r_inner > 0.0 && r_outer > r_inner) {
                return Err(FracError::Config("annulus radii must satisfy 0 < r_inner < r_outer".into()));
            }
        }
        if let Some(a) = parse_f64(map, "alpha")? {
            cfg.alpha = a;
        }
        if !(cfg.alpha > 1.0 && cfg.alpha < 2.0) {
            return Err(FracError::Config(format!("alpha must lie in (1, 2), got {}", cfg.alpha)));
        }
        if let Some(h) = parse_f64(map, "grid.h")? {
            cfg.h = h;
        }
        if cfg.h <= 0.0 {
            return Err(FracError::Config("grid.h must be positive".into()));
        }
        cfg.margin = parse_f64(map, "grid.margin")?.unwrap_or(4.0 * cfg.h).max(2.0 * cfg.h);
        cfg.field_kind = match map.get("field.kind").map(String::as_str).unwrap_or("rotational") {
            "none" => FieldKind::None,
            "rotational" => FieldKind::Rotational,
            "stream" => FieldKind::Stream,
            "constant" => FieldKind::Constant,
            "custom-stream-table" => FieldKind::CustomStreamTable,
            "compressible-control" => FieldKind::CompressibleControl,
            other => return Err(FracError::Config(format!("field.kind: unknown value '{other}'"))),
        };
        cfg.profile = match map.get("field.profile").map(String::as_str).unwrap_or("bump") {
            "one" => Profile::One,
            "bump" => Profile::Bump {
                r0: parse_f64(map, "field.r0")?.unwrap_or(0.7),
                power: parse_u64(map, "field.power")?.unwrap_or(3) as i32,
            },
            "gaussian" => Profile::Gaussian { rate: parse_f64(map, "field.rate")?.unwrap_or(4.0) },
            other => return Err(FracError::Config(format!("field.profile: unknown value '{other}'"))),
        };
        cfg.constant_dir = [
            parse_f64(map, "field.e1")?.unwrap_or(1.0),
            parse_f64(map, "field.e2")?.unwrap_or(0.0),
        ];
        cfg.stream_csv = map.get("field.csv").cloned();
        if cfg.field_kind == FieldKind::CustomStreamTable && cfg.stream_csv.is_none() {
            return Err(FracError::Config("field.csv is required for custom-stream-table".into()));
        }
        if let Some(list) = map.get("sweep.A") {
            let mut amps = Vec::new();
            for tok in list.split(',') {
                let t = tok.trim();
                if t.is_empty() {
                    continue;
                }
                amps.push(t.parse::<f64>().map_err(|_| {
                    FracError::Config(format!("sweep.A: cannot parse '{t}' as a number"))
                })?);
            }
            cfg.amplitudes = amps;
        }
        if cfg.amplitudes.is_empty() {
            return Err(FracError::Config("sweep.A must contain at least one amplitude".into()));
        }
        if cfg.amplitudes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FracError::Config("sweep.A must be strictly ascending".into()));
        }
        cfg.tol_eigen = parse_f64(map, "tol.eigen")?.unwrap_or(cfg.tol_eigen);
        cfg.tol_identity = parse_f64(map, "tol.identity")?.unwrap_or(cfg.tol_identity);
        cfg.svd_threshold = parse_f64(map, "tol.svd")?.unwrap_or(cfg.svd_threshold);
        cfg.energy_cutoff = parse_f64(map, "tol.energy_cutoff")?.unwrap_or(cfg.energy_cutoff);
        if !(cfg.svd_threshold > 0.0 && cfg.svd_threshold < 1.0) {
            return Err(FracError::Config("tol.svd must lie in (0, 1)".into()));
        }
        cfg.mc_n_paths = parse_u64(map, "mc.n_paths")?.unwrap_or(cfg.mc_n_paths);
        cfg.mc_dt = parse_f64(map, "mc.dt")?.unwrap_or(cfg.mc_dt);
        cfg.mc_t_max = parse_f64(map, "mc.t_max")?.unwrap_or(cfg.mc_t_max);
        cfg.mc_start = match map.get("mc.start").map(String::as_str) {
            None | Some("center") => StartDist::Center,
            Some("uniform") => StartDist::UniformInDomain,
            Some(s) => {
                let (a, b) = s
                    .split_once(',')
                    .ok_or_else(|| FracError::Config(format!("mc.start: bad value '{s}'")))?;
                StartDist::Fixed([
                    a.trim().parse().map_err(|_| FracError::Config(format!("mc.start: bad value '{s}'")))?,
                    b.trim().parse().map_err(|_| FracError::Config(format!("mc.start: bad value '{s}'")))?,
                ])
            }
        };
        cfg.kernel_t = parse_f64(map, "kernel.t")?.unwrap_or(cfg.kernel_t);
        cfg.kernel_n_max = parse_u64(map, "kernel.n_max")?.unwrap_or(2) as usize;
        if cfg.kernel_n_max > 3 {
            return Err(FracError::Config("kernel.n_max is capped at 3".into()));
        }
        cfg.kernel_hq = parse_f64(map, "kernel.hq")?.unwrap_or(cfg.kernel_hq);
        cfg.kernel_time_nodes = parse_u64(map, "kernel.time_nodes")?.unwrap_or(16) as usize;
        cfg.seed = parse_u64(map, "seed")?.unwrap_or(cfg.seed);
        if let Some(d) = map.get("out.dir") {
            cfg.out_dir = d.clone();
        }
        Ok(cfg)
    }

    /// Serialize back to the flat format; `parse(to_flat())` is
    /// semantically identical to the original config.
    pub fn to_flat(&self) -> String {
        let mut s = String::new();
        let c = self.domain.center();
        s.push_str(&format!("domain.center_x = {:.17e}\n", c[0]));
        s.push_str(&format!("domain.center_y = {:.17e}\n", c[1]));
        match self.domain {
            Domain::Disk { radius, .. } => {
                s.push_str("domain.kind = disk\n");
                s.push_str(&format!("domain.radius = {radius:.17e}\n"));
            }
            Domain::Annulus { r_inner, r_outer, .. } => {
                s.push_str("domain.kind = annulus\n");
                s.push_str(&format!("domain.r_inner = {r_inner:.17e}\n"));
                s.push_str(&format!("domain.r_outer = {r_outer:.17e}\n"));
            }
            Domain::SmoothedRect { half_widths, corner_radius, .. } => {
                s.push_str("domain.kind = smoothed-rect\n");
                s.push_str(&format!("domain.half_width_x = {:.17e}\n", half_widths[0]));
                s.push_str(&format!("domain.half_width_y = {:.17e}\n", half_widths[1]));
                s.push_str(&format!("domain.corner_radius = {corner_radius:.17e}\n"));
            }
        }
        s.push_str(&format!("alpha = {:.17e}\n", self.alpha));
        s.push_str(&format!("grid.h = {:.17e}\n", self.h));
        s.push_str(&format!("grid.margin = {:.17e}\n", self.margin));
        let kind = match self.field_kind {
            FieldKind::None => "none",
            FieldKind::Rotational => "rotational",
            FieldKind::Stream => "stream",
            FieldKind::Constant => "constant",
            FieldKind::CustomStreamTable => "custom-stream-table",
            FieldKind::CompressibleControl => "compressible-control",
        };
        s.push_str(&format!("field.kind = {kind}\n"));
        match self.profile {
            Profile::One => s.push_str("field.profile = one\n"),
            Profile::Bump { r0, power } => {
                s.push_str("field.profile = bump\n");
                s.push_str(&format!("field.r0 = {r0:.17e}\n"));
                s.push_str(&format!("field.power = {power}\n"));
            }
            Profile::Gaussian { rate } => {
                s.push_str("field.profile = gaussian\n");
                s.push_str(&format!("field.rate = {rate:.17e}\n"));
            }
        }
        s.push_str(&format!("field.e1 = {:.17e}\n", self.constant_dir[0]));
        s.push_str(&format!("field.e2 = {:.17e}\n", self.constant_dir[1]));
        if let Some(csv) = &self.stream_csv {
            s.push_str(&format!("field.csv = {csv}\n"));
        }
        let amps: Vec<String> = self.amplitudes.iter().map(|a| format!("{a:.17e}")).collect();
        s.push_str(&format!("sweep.A = {}\n", amps.join(", ")));
        s.push_str(&format!("tol.eigen = {:.17e}\n", self.tol_eigen));
        s.push_str(&format!("tol.identity = {:.17e}\n", self.tol_identity));
        s.push_str(&format!("tol.svd = {:.17e}\n", self.svd_threshold));
        s.push_str(&format!("tol.energy_cutoff = {:.17e}\n", self.energy_cutoff));
        s.push_str(&format!("mc.n_paths = {}\n", self.mc_n_paths));
        s.push_str(&format!("mc.dt = {:.17e}\n", self.mc_dt));
        s.push_str(&format!("mc.t_max = {:.17e}\n", self.mc_t_max));
        match self.mc_start {
            StartDist::Center => s.push_str("mc.start = center\n"),
            StartDist::UniformInDomain => s.push_str("mc.start = uniform\n"),
            StartDist::Fixed(p) => s.push_str(&format!("mc.start = {:.17e}, {:.17e}\n", p[0], p[1])),
        }
        s.push_str(&format!("kernel.t = {:.17e}\n", self.kernel_t));
        s.push_str(&format!("kernel.n_max = {}\n", self.kernel_n_max));
        s.push_str(&format!("kernel.hq = {:.17e}\n", self.kernel_hq));
        s.push_str(&format!("kernel.time_nodes = {}\n", self.kernel_time_nodes));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("out.dir = {}\n", self.out_dir));
        s
    }

    /// Stable hash of the serialized config, for the output manifest.
    pub fn digest(&self) -> String {
        // FNV-1a over the canonical serialization; collision resistance
        // is irrelevant here, reproducibility is the point.
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_flat().bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}
