use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use maslov_core::maslov::MaslovOptions;
use maslov_core::pde::Perturbation;
use maslov_core::wave::BvpOptions;
use maslov_core::Params;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsSection {
    pub a: f64,
    pub gamma: f64,
    pub eps: f64,
    /// Used by `solve-wave`; empty means just `eps`.
    pub eps_list: Vec<f64>,
}

impl Default for ParamsSection {
    fn default() -> Self {
        ParamsSection { a: 0.25, gamma: 1.0, eps: 1e-4, eps_list: vec![] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSection {
    pub left_length: f64,
    pub tail_decay: f64,
    pub arc_step: f64,
    pub h_max: f64,
}

impl Default for DomainSection {
    fn default() -> Self {
        let b = BvpOptions::default();
        DomainSection { left_length: b.left_length, tail_decay: b.tail_decay, arc_step: b.arc_step, h_max: b.h_max }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TolSection {
    pub newton: f64,
    pub boundary: f64,
    pub crossing_z: f64,
    pub regularity: f64,
    pub margin: f64,
}

impl Default for TolSection {
    fn default() -> Self {
        let m = MaslovOptions::default();
        let b = BvpOptions::default();
        TolSection { newton: b.tol, boundary: b.tol_bc, crossing_z: m.z_tol, regularity: m.regularity, margin: m.margin_min }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaslovSection {
    pub tau_fraction: f64,
    pub corner_radius: f64,
    pub fast_w: f64,
}

impl Default for MaslovSection {
    fn default() -> Self {
        let m = MaslovOptions::default();
        MaslovSection { tau_fraction: m.tau_fraction, corner_radius: m.corner_radius, fast_w: m.fast_w }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points: usize,
    pub z_match: f64,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection { lambda_min: 0.01, lambda_max: 1.0, points: 50, z_match: 0.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CornerSection {
    pub a_min: f64,
    pub a_max: f64,
    pub points: usize,
    /// u_tau values as fractions of the landing value u* - 1.
    pub u_tau_fractions: Vec<f64>,
}

impl Default for CornerSection {
    fn default() -> Self {
        CornerSection { a_min: 0.01, a_max: 0.49, points: 50, u_tau_fractions: vec![0.02, 0.5, 0.98] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeSection {
    pub dx: f64,
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: f64,
    pub shift_window: f64,
    /// Bump centre; null puts it halfway to the back.
    pub bump_center: Option<f64>,
    pub bump_width: f64,
    pub bump_amp: f64,
    pub translation_amp: f64,
}

impl Default for PdeSection {
    fn default() -> Self {
        PdeSection {
            dx: 0.2,
            dt: 0.05,
            t_end: 200.0,
            sample_every: 5.0,
            shift_window: 2.0,
            bump_center: None,
            bump_width: 2.0,
            bump_amp: 0.05,
            translation_amp: 0.01,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub params: ParamsSection,
    pub domain: DomainSection,
    pub tolerances: TolSection,
    pub maslov: MaslovSection,
    pub scan: ScanSection,
    pub corners: CornerSection,
    pub pde: PdeSection,
    pub out: Option<PathBuf>,
}

pub struct Overrides {
    pub a: Option<f64>,
    pub gamma: Option<f64>,
    pub eps: Option<f64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path, o: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(a) = o.a {
            cfg.params.a = a;
        }
        if let Some(g) = o.gamma {
            cfg.params.gamma = g;
        }
        if let Some(e) = o.eps {
            cfg.params.eps = e;
            cfg.params.eps_list.clear();
        }
        if let Some(d) = &o.out {
            cfg.out = Some(d.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        Params::singular(self.params.a, self.params.gamma, self.params.eps)?;
        for &e in &self.params.eps_list {
            if !(e > 0.0) {
                bail!("eps_list entries must be positive, got {e}");
            }
        }
        let positive = [
            ("domain.left_length", self.domain.left_length),
            ("domain.tail_decay", self.domain.tail_decay),
            ("domain.arc_step", self.domain.arc_step),
            ("domain.h_max", self.domain.h_max),
            ("tolerances.newton", self.tolerances.newton),
            ("tolerances.boundary", self.tolerances.boundary),
            ("tolerances.crossing_z", self.tolerances.crossing_z),
            ("tolerances.regularity", self.tolerances.regularity),
            ("tolerances.margin", self.tolerances.margin),
            ("maslov.corner_radius", self.maslov.corner_radius),
            ("maslov.fast_w", self.maslov.fast_w),
            ("scan.lambda_min", self.scan.lambda_min),
            ("pde.dx", self.pde.dx),
            ("pde.dt", self.pde.dt),
            ("pde.t_end", self.pde.t_end),
            ("pde.sample_every", self.pde.sample_every),
            ("pde.shift_window", self.pde.shift_window),
            ("pde.bump_width", self.pde.bump_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} must be positive, got {v}");
            }
        }
        if !(self.maslov.tau_fraction > 0.0 && self.maslov.tau_fraction < 1.0) {
            bail!("maslov.tau_fraction must lie in (0, 1)");
        }
        if !(self.scan.lambda_max > self.scan.lambda_min) || self.scan.points == 0 {
            bail!("scan range is empty");
        }
        if !(self.corners.a_min > 0.0 && self.corners.a_max < 0.5 && self.corners.a_min < self.corners.a_max) || self.corners.points == 0 {
            bail!("corners a-range must satisfy 0 < a_min < a_max < 1/2");
        }
        if self.corners.u_tau_fractions.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            bail!("corners.u_tau_fractions must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn params(&self) -> Params {
        Params::singular(self.params.a, self.params.gamma, self.params.eps).expect("validated")
    }

    pub fn bvp(&self) -> BvpOptions {
        BvpOptions {
            tol: self.tolerances.newton,
            tol_bc: self.tolerances.boundary,
            arc_step: self.domain.arc_step,
            h_max: self.domain.h_max,
            left_length: self.domain.left_length,
            tail_decay: self.domain.tail_decay,
            ..BvpOptions::default()
        }
    }

    pub fn maslov(&self) -> MaslovOptions {
        MaslovOptions {
            tau_fraction: self.maslov.tau_fraction,
            margin_min: self.tolerances.margin,
            regularity: self.tolerances.regularity,
            z_tol: self.tolerances.crossing_z,
            corner_radius: self.maslov.corner_radius,
            fast_w: self.maslov.fast_w,
            ..MaslovOptions::default()
        }
    }

    pub fn perturbations(&self, z_back: f64) -> Vec<(&'static str, Perturbation)> {
        let p = &self.pde;
        vec![
            ("zero", Perturbation::Zero),
            ("translation", Perturbation::Translation { amp: p.translation_amp }),
            ("bump", Perturbation::Bump { amp: p.bump_amp, center: p.bump_center.unwrap_or(z_back / 2.0), width: p.bump_width }),
        ]
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}
