//! Experiment configuration: parsing and up-front validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nlw_core::analysis::{Band, FitWindow};
use nlw_core::geometry::PowerParams;
use nlw_core::profiles::{InitialData, Profile};
use nlw_core::solver::{Model, RadialGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    FullSpace,
    CompactCone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diagnostic {
    Energy,
    Decay,
    Scattering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationSection {
    #[serde(default)]
    pub variant: Variant,
    /// Cone height for the compact variant.
    pub cone_height: Option<f64>,
    pub p: f64,
    pub gamma0: f64,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub r_max: f64,
    pub dr: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

fn default_cfl() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSection {
    Gaussian { amplitude: f64, width: f64 },
    Bump { amplitude: f64, inner: f64, outer: f64 },
    Tail { amplitude: f64, rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    pub cadence: f64,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

/// Sweep axes; an empty axis keeps the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub amplitude: Vec<f64>,
    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default)]
    pub gamma0: Vec<f64>,
}

/// Cone-flux apexes: an explicit grid plus `random` points drawn with the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ApexSection {
    #[serde(default)]
    pub t0: Vec<f64>,
    #[serde(default)]
    pub r0: Vec<f64>,
    #[serde(default)]
    pub random: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySection {
    pub t_lo: f64,
    pub t_hi: f64,
    #[serde(default)]
    pub fixed_r: Vec<f64>,
    #[serde(default)]
    pub fixed_u: Vec<f64>,
    #[serde(default = "default_per_band")]
    pub per_band: usize,
}

fn default_per_band() -> usize {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub equation: EquationSection,
    pub grid: GridSection,
    pub data: DataSection,
    pub run: RunSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub apexes: ApexSection,
    pub decay: Option<DecaySection>,
}

/// Every violation found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// One fully specified run of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPoint {
    pub index: usize,
    pub amplitude: f64,
    pub params: PowerParams,
    pub model: Model,
    pub grid: RadialGrid,
    pub data: InitialData,
}

impl RunPoint {
    /// Stable description used to decide whether a persisted trajectory can be reused.
    pub fn fingerprint(&self, cfg: &ExperimentConfig) -> String {
        format!(
            "variant = {:?}\ncone_height = {:?}\np = {:e}\ngamma0 = {:e}\nepsilon = {:e}\namplitude = {:e}\ndata = {:?}\nr_max = {:e}\nn = {}\ncfl = {:e}\nt_end = {:e}\ncadence = {:e}\n",
            cfg.equation.variant,
            cfg.equation.cone_height,
            self.params.p(),
            self.params.gamma0(),
            self.params.epsilon(),
            self.amplitude,
            cfg.data,
            self.grid.r_max,
            self.grid.n,
            self.grid.cfl,
            cfg.run.t_end,
            cfg.run.cadence,
        )
    }

    pub fn dir_name(&self) -> String {
        format!("point_{:03}", self.index)
    }
}

impl DataSection {
    fn amplitude(&self) -> f64 {
        match *self {
            DataSection::Gaussian { amplitude, .. }
            | DataSection::Bump { amplitude, .. }
            | DataSection::Tail { amplitude, .. } => amplitude,
        }
    }

    fn profile(&self, amplitude: f64) -> nlw_core::Result<Profile> {
        match *self {
            DataSection::Gaussian { width, .. } => Profile::gaussian(amplitude, width),
            DataSection::Bump { inner, outer, .. } => Profile::bump(amplitude, inner, outer),
            DataSection::Tail { rate, .. } => Profile::tail(amplitude, rate),
        }
    }
}

fn axis(values: &[f64], base: f64) -> Vec<f64> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigErrors> {
        toml::from_str(text).map_err(|e| ConfigErrors(vec![e.message().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::from_toml(&text)
    }

    /// Expands the sweep into run points, checking every precondition first.
    pub fn validate(&self, grid_scale: usize) -> Result<Vec<RunPoint>, ConfigErrors> {
        let mut errs = Vec::new();
        let grid =
            match RadialGrid::with_spacing(self.grid.r_max, self.grid.dr / grid_scale.max(1) as f64, self.grid.cfl) {
                Ok(g) => Some(g),
                Err(e) => {
                    errs.push(format!("grid: {e}"));
                    None
                }
            };
        if !(self.run.t_end >= 0.0) {
            errs.push(format!("run.t_end = {} must be nonnegative", self.run.t_end));
        }
        if !(self.run.cadence > 0.0) {
            errs.push(format!("run.cadence = {} must be positive", self.run.cadence));
        }
        if self.jobs == Some(0) {
            errs.push("jobs must be at least 1".into());
        }
        let cone_height = match (self.equation.variant, self.equation.cone_height) {
            (Variant::CompactCone, None) => {
                errs.push("equation.cone_height is required for the compact-cone variant".into());
                None
            }
            (Variant::CompactCone, Some(h)) if !(h > self.run.t_end) => {
                errs.push(format!(
                    "equation.cone_height = {h} must exceed run.t_end = {}",
                    self.run.t_end
                ));
                None
            }
            (Variant::FullSpace, Some(_)) => {
                errs.push("equation.cone_height only applies to the compact-cone variant".into());
                None
            }
            (_, h) => h,
        };
        if self.run.diagnostics.contains(&Diagnostic::Decay) && self.decay.is_none() {
            errs.push("the decay diagnostic needs a [decay] section".into());
        }
        if let Some(d) = &self.decay {
            if !(d.t_hi > d.t_lo && d.t_lo >= 0.0) || d.t_hi > self.run.t_end {
                errs.push(format!(
                    "decay window [{}, {}] must lie inside [0, {}]",
                    d.t_lo, d.t_hi, self.run.t_end
                ));
            }
            if d.fixed_r.is_empty() && d.fixed_u.is_empty() {
                errs.push("decay needs at least one fixed_r or fixed_u band".into());
            }
        }
        for (i, &t0) in self.apexes.t0.iter().enumerate() {
            if !(t0 > 0.0 && t0 <= self.run.t_end) {
                errs.push(format!("apexes.t0[{i}] = {t0} must lie in (0, {}]", self.run.t_end));
            }
        }
        if self.apexes.t0.is_empty() != self.apexes.r0.is_empty() {
            errs.push("apexes.t0 and apexes.r0 must both be given or both be empty".into());
        }
        if let Some(g) = &grid {
            for (i, (t0, r0)) in self.apex_grid().into_iter().enumerate() {
                if r0 < 0.0 || t0 + r0 > g.r_max {
                    errs.push(format!("apex {i} at ({t0}, {r0}) leaves the grid"));
                }
            }
        }

        let mut params_axis = Vec::new();
        for &p in &axis(&self.sweep.p, self.equation.p) {
            for &gamma0 in &axis(&self.sweep.gamma0, self.equation.gamma0) {
                let params = match self.equation.epsilon {
                    Some(eps) => PowerParams::new(p, gamma0, eps),
                    None => PowerParams::with_default_epsilon(p, gamma0),
                };
                match params {
                    Ok(x) => params_axis.push(x),
                    Err(e) => errs.push(format!("equation (p = {p}, gamma0 = {gamma0}): {e}")),
                }
            }
        }
        let mut profiles = Vec::new();
        for &amplitude in &axis(&self.sweep.amplitude, self.data.amplitude()) {
            match self.data.profile(amplitude) {
                Ok(x) => profiles.push((amplitude, x)),
                Err(e) => errs.push(format!("data (amplitude {amplitude}): {e}")),
            }
        }

        let mut points = Vec::new();
        if let Some(grid) = grid {
            for params in &params_axis {
                for &(amplitude, profile) in &profiles {
                    let model = match cone_height {
                        Some(h) => Model::compact(params, h),
                        None => Model::full_space(params),
                    };
                    points.push(RunPoint {
                        index: points.len(),
                        amplitude,
                        params: *params,
                        model,
                        grid,
                        data: InitialData::at_rest(profile),
                    });
                }
            }
        }
        if errs.is_empty() {
            Ok(points)
        } else {
            Err(ConfigErrors(errs))
        }
    }

    pub fn apex_grid(&self) -> Vec<(f64, f64)> {
        self.apexes
            .t0
            .iter()
            .flat_map(|&t| self.apexes.r0.iter().map(move |&r| (t, r)))
            .collect()
    }

    pub fn fit_window(&self) -> Option<FitWindow> {
        self.decay.as_ref().map(|d| FitWindow {
            t_lo: d.t_lo,
            t_hi: d.t_hi,
            bands: d
                .fixed_r
                .iter()
                .map(|&r| Band::FixedR(r))
                .chain(d.fixed_u.iter().map(|&u| Band::FixedU(u)))
                .collect(),
            per_band: d.per_band,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 7

[equation]
p = 3.0
gamma0 = 1.5

[grid]
r_max = 16.0
dr = 0.0625

[data]
profile = "gaussian"
amplitude = 1.0
width = 1.0

[run]
t_end = 2.0
cadence = 0.5
diagnostics = ["energy"]
"#;

    #[test]
    fn parses_base() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.grid.cfl, 0.5);
        let pts = cfg.validate(1).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].grid.n, 256);
        assert_eq!(cfg.validate(2).unwrap()[0].grid.n, 512);
    }

    #[test]
    fn sweep_is_cartesian() {
        let text = format!("{BASE}\n[sweep]\namplitude = [0.5, 1.0, 2.0]\np = [3.0, 4.0]\n");
        let pts = ExperimentConfig::from_toml(&text).unwrap().validate(1).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[5].index, 5);
        assert_eq!(pts[5].params.p(), 4.0);
        assert_eq!(pts[5].amplitude, 2.0);
    }

    #[test]
    fn reports_every_violation() {
        let text = BASE
            .replace("gamma0 = 1.5", "gamma0 = 3.0")
            .replace("cadence = 0.5", "cadence = 0.0")
            .replace("width = 1.0", "width = -1.0")
            .replace("dr = 0.0625", "dr = 4.0");
        let errs = ExperimentConfig::from_toml(&text).unwrap().validate(1).unwrap_err();
        assert!(errs.0.len() >= 4, "{errs}");
        let all = errs.to_string();
        for key in ["grid", "cadence", "gamma0", "data"] {
            assert!(all.contains(key), "missing {key} in {all}");
        }
    }

    #[test]
    fn compact_needs_height() {
        let text = BASE.replace("gamma0 = 1.5", "gamma0 = 1.5\nvariant = \"compact-cone\"");
        let errs = ExperimentConfig::from_toml(&text).unwrap().validate(1).unwrap_err();
        assert!(errs.to_string().contains("cone_height"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = BASE.replace("seed = 7", "seed = 7\nbogus = 1");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}
