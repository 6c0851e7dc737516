//! Run configuration and potential files (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use manakov_core::linalg::c;
use manakov_core::potential::DEFAULT_K_MAX;
use manakov_core::zs::ZsPotential;
use manakov_core::{PeriodicPotential, C64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// One Fourier mode `v̂_k = (v1, v2)` of a vector potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub k: i64,
    pub v1_re: f64,
    pub v1_im: f64,
    pub v2_re: f64,
    pub v2_im: f64,
}

/// One Fourier mode `û_k` of a scalar ZS potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarMode {
    pub k: i64,
    pub re: f64,
    pub im: f64,
}

/// A potential as written in a potential file. Exactly one source is given:
/// `modes`, `preset = "zs"` with `u_modes` and `e`, or `samples` (rows
/// `[v1_re, v1_im, v2_re, v2_im]` on an equispaced grid of `[0, 1)`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// `[[e1_re, e1_im], [e2_re, e2_im]]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<ModeRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub u_modes: Vec<ScalarMode>,
}

/// What a potential file resolves to.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub v: PeriodicPotential,
    /// Present for the ZS preset.
    pub zs: Option<ZsPotential>,
    /// Discarded `L²` mass of a sampled input.
    pub projection_residual: Option<f64>,
}

fn cx(p: [f64; 2]) -> C64 {
    c(p[0], p[1])
}

impl PotentialSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Canonical text; `parse` followed by `to_text` is the identity on it.
    pub fn to_text(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        crate::output::write_atomic(path, self.to_text()?.as_bytes())
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let sources = [!self.modes.is_empty(), self.preset.is_some(), !self.samples.is_empty()];
        if sources.iter().filter(|&&s| s).count() > 1 {
            return Err(CliError::Config("give exactly one of modes, preset or samples".into()));
        }
        let k_max = self.k_max.unwrap_or(DEFAULT_K_MAX);
        if let Some(p) = &self.preset {
            if p != "zs" {
                return Err(CliError::Config(format!("unknown preset {p:?}")));
            }
            let e = self.e.ok_or_else(|| CliError::Config("preset zs needs e".into()))?;
            let u: Vec<(i64, C64)> = self.u_modes.iter().map(|m| (m.k, c(m.re, m.im))).collect();
            let zs = ZsPotential::new(k_max, u, [cx(e[0]), cx(e[1])])?;
            return Ok(Resolved { v: zs.to_vector()?, zs: Some(zs), projection_residual: None });
        }
        if !self.u_modes.is_empty() || self.e.is_some() {
            return Err(CliError::Config("u_modes and e belong to preset = \"zs\"".into()));
        }
        if !self.samples.is_empty() {
            let s: Vec<[C64; 2]> = self.samples.iter().map(|r| [c(r[0], r[1]), c(r[2], r[3])]).collect();
            let (v, res) = PeriodicPotential::from_samples(&s, k_max)?;
            return Ok(Resolved { v, zs: None, projection_residual: Some(res) });
        }
        let modes = self.modes.iter().map(|m| (m.k, [c(m.v1_re, m.v1_im), c(m.v2_re, m.v2_im)]));
        Ok(Resolved { v: PeriodicPotential::new(k_max, modes)?, zs: None, projection_residual: None })
    }
}

/// Real-line scan and identity strip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub scan_from: f64,
    pub scan_to: f64,
    /// Points per unit λ on the scan.
    pub density: f64,
    /// Constant imaginary part of the scan line.
    pub scan_im: f64,
    /// Half-height of the strip used by `verify`.
    pub strip_height: f64,
    pub strip_points: usize,
    /// Radius of the discs around `πn`.
    pub disc_radius: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            scan_from: 0.0,
            scan_to: 10.0,
            density: 20.0,
            scan_im: 0.0,
            strip_height: 2.0,
            strip_points: 200,
            disc_radius: manakov_core::spectra::DISC_RADIUS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonodromyConfig {
    /// `[re, im]` pairs.
    pub lambdas: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TracesConfig {
    /// Chebyshev nodes per gap for the 𝔮 profiles.
    pub gap_nodes: usize,
    /// Gauss–Legendre order of the gap integrals.
    pub order: usize,
    /// Test points of the Herglotz representation, `[re, im]`.
    pub herglotz: Vec<[f64; 2]>,
}

impl Default for TracesConfig {
    fn default() -> Self {
        Self { gap_nodes: 24, order: 48, herglotz: vec![[0.0, 30.0], [5.0, 10.0]] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZsCheckConfig {
    /// A second unit vector for the reduction check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_e: Option<[[f64; 2]; 2]>,
    /// Also locate the 3x3 branch points and match them to the ZS
    /// eigenvalues.
    pub compare_branch_points: bool,
}

impl Default for ZsCheckConfig {
    fn default() -> Self {
        Self { second_e: None, compare_branch_points: true }
    }
}

/// Inclusive range of disc indices, written `a:b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NRange {
    pub from: i64,
    pub to: i64,
}

impl NRange {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| CliError::Config(format!("n-range {s:?} is not of the form a:b")))?;
        let p = |t: &str| t.trim().parse::<i64>().map_err(|_| CliError::Config(format!("bad n-range bound {t:?}")));
        let r = Self { from: p(a)?, to: p(b)? };
        if r.from > r.to {
            return Err(CliError::Config(format!("empty n-range {s}")));
        }
        Ok(r)
    }

    pub fn indices(&self) -> Vec<i64> {
        (self.from..=self.to).collect()
    }
}

impl std::fmt::Display for NRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.from, self.to)
    }
}

/// The config file. `potential_file` is resolved relative to the config's
/// directory and inlined into `potential` on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential_file: Option<PathBuf>,
    pub n_range: String,
    /// Worker threads; 0 leaves the choice to the pool.
    pub threads: usize,
    pub tol_scale: f64,
    pub out: PathBuf,
    pub potential: PotentialSpec,
    pub grid: GridConfig,
    pub monodromy: MonodromyConfig,
    pub traces: TracesConfig,
    pub zs: ZsCheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            potential_file: None,
            n_range: "5:10".into(),
            threads: 0,
            tol_scale: 1.0,
            out: PathBuf::from("out"),
            potential: PotentialSpec::default(),
            grid: GridConfig::default(),
            monodromy: MonodromyConfig::default(),
            traces: TracesConfig::default(),
            zs: ZsCheckConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(p) = cfg.potential_file.take() {
            if cfg.potential != PotentialSpec::default() {
                return Err(CliError::Config("give either potential_file or [potential], not both".into()));
            }
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.potential = PotentialSpec::load(&base.join(p))?;
        }
        Ok(cfg)
    }

    pub fn n_range(&self) -> Result<NRange, CliError> {
        NRange::parse(&self.n_range)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.n_range()?;
        let g = &self.grid;
        let positive = [
            ("tol_scale", self.tol_scale),
            ("grid.strip_height", g.strip_height),
            ("grid.disc_radius", g.disc_radius),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(CliError::Config(format!("{name} = {x} must be positive")));
            }
        }
        if !(g.density >= 2.0) {
            return Err(CliError::Config(format!("grid.density = {} below 2 points per unit", g.density)));
        }
        if !(g.scan_to > g.scan_from) {
            return Err(CliError::Config("grid.scan_to must exceed grid.scan_from".into()));
        }
        if g.strip_points < 2 {
            return Err(CliError::Config("grid.strip_points must be at least 2".into()));
        }
        if !(g.disc_radius < std::f64::consts::FRAC_PI_2) {
            return Err(CliError::Config("grid.disc_radius must stay below π/2 so discs are disjoint".into()));
        }
        if self.traces.gap_nodes == 0 || self.traces.order < 2 {
            return Err(CliError::Config("traces.gap_nodes ≥ 1 and traces.order ≥ 2 required".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML of the resolved config, leaving out
    /// the output directory and the thread count, which do not affect
    /// results.
    pub fn digest(&self) -> Result<String, CliError> {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.threads = 0;
        let text = toml::to_string(&c).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(format!("{:x}", Sha256::digest(text.as_bytes())))
    }

    /// Evenly spaced real scan points, `density` per unit length.
    pub fn scan_grid(&self) -> Vec<f64> {
        let g = &self.grid;
        let n = ((g.scan_to - g.scan_from) * g.density).ceil() as usize + 1;
        (0..n).map(|i| g.scan_from + (g.scan_to - g.scan_from) * i as f64 / (n - 1) as f64).collect()
    }

    /// `strip_points` points in `0 ≤ Re λ ≤ 10`, `|Im λ| ≤ strip_height`,
    /// from a fixed low-discrepancy sequence; every fifth point is real.
    pub fn strip_grid(&self) -> Vec<C64> {
        let g = &self.grid;
        let phi = 0.5 * (1.0 + 5f64.sqrt());
        (0..g.strip_points)
            .map(|i| {
                let a = (i as f64 / phi).fract();
                let b = (i as f64 / (phi * phi)).fract();
                let im = if i % 5 == 0 { 0.0 } else { g.strip_height * (2.0 * b - 1.0) };
                c(10.0 * a, im)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_range_parses_and_rejects() {
        assert_eq!(NRange::parse("-3:4").unwrap().indices().len(), 8);
        assert!(NRange::parse("4:3").is_err());
        assert!(NRange::parse("4").is_err());
    }

    #[test]
    fn spec_round_trip() {
        let spec = PotentialSpec {
            k_max: Some(8),
            modes: vec![ModeRecord { k: 1, v1_re: 0.4, v1_im: 0.0, v2_re: 0.0, v2_im: -0.1 }],
            ..Default::default()
        };
        let text = spec.to_text().unwrap();
        assert_eq!(PotentialSpec::parse(&text).unwrap().to_text().unwrap(), text);
    }

    #[test]
    fn mixed_sources_rejected() {
        let spec = PotentialSpec {
            preset: Some("zs".into()),
            modes: vec![ModeRecord { k: 0, v1_re: 0.1, v1_im: 0.0, v2_re: 0.0, v2_im: 0.0 }],
            ..Default::default()
        };
        assert!(spec.resolve().is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        b.threads = 3;
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        b.tol_scale = 2.0;
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.grid.density = 1.0;
        assert!(cfg.validate().is_err());
        cfg.grid.density = 20.0;
        cfg.tol_scale = 0.0;
        assert!(cfg.validate().is_err());
    }
}
