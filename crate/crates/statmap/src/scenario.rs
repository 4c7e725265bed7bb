//! Scenario files: strict JSON describing a domain, a target, a map and the
//! analyses to run on it.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::MapField;
use crate::geometry::{make_manifold, ChartManifold, ManifoldDescriptor};
use crate::grid::{DiffScheme, DomainGrid};

pub const SCENARIO_VERSION: u32 = 1;
pub const MIN_RESOLUTION: usize = 8;
pub const MAX_RESOLUTION_1D: usize = 2048;
pub const MAX_RESOLUTION_2D: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Structure,
    Flow,
    Tension,
    Energy,
    FirstVariation,
    HessianCheck,
    Spectrum,
    Stability,
}

impl Analysis {
    /// Analyses that draw random samples and therefore need a seed.
    pub fn samples(self) -> bool {
        matches!(
            self,
            Analysis::Structure | Analysis::FirstVariation | Analysis::HessianCheck | Analysis::Stability
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode {
    /// Integer wave vector, one entry per domain axis.
    pub k: Vec<i64>,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Constant {
        point: Vec<f64>,
    },
    Identity,
    /// `center + radius·(cos kθ, sin kθ)`, `θ = 2πx₀/L₀`.
    CircleEmbed {
        k: i64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default = "one")]
        radius: f64,
    },
    /// Equator of the sphere chart traversed `k` times along axis 0.
    GreatCircle {
        #[serde(default = "one_i")]
        k: i64,
    },
    /// `u^c = constant_c + Σ_a slopes_c,a·x_a + Σ_modes (cos_c cos φ + sin_c sin φ)`,
    /// `φ = Σ_a 2π k_a x_a / L_a`.
    Fourier {
        constant: Vec<f64>,
        #[serde(default)]
        slopes: Vec<Vec<f64>>,
        #[serde(default)]
        modes: Vec<FourierMode>,
    },
    /// CSV in the `i[,j],u0,u1,…` layout, relative to the scenario file.
    File {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

fn one_i() -> i64 {
    1
}

fn version_default() -> u32 {
    SCENARIO_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSettings {
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "FlowSettings::default_tol")]
    pub tol: f64,
    #[serde(default = "FlowSettings::default_max_steps")]
    pub max_steps: usize,
}

impl FlowSettings {
    fn default_tol() -> f64 {
        1e-6
    }
    fn default_max_steps() -> usize {
        200_000
    }
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self {
            dt: None,
            tol: Self::default_tol(),
            max_steps: Self::default_max_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstVariationSettings {
    #[serde(default = "FirstVariationSettings::default_steps")]
    pub steps: Vec<f64>,
    /// Random directions `V` to test.
    #[serde(default = "FirstVariationSettings::default_directions")]
    pub directions: usize,
    #[serde(default = "default_max_mode")]
    pub max_mode: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

impl FirstVariationSettings {
    fn default_steps() -> Vec<f64> {
        crate::variational::DEFAULT_FD_STEPS.to_vec()
    }
    fn default_directions() -> usize {
        3
    }
}

impl Default for FirstVariationSettings {
    fn default() -> Self {
        Self {
            steps: Self::default_steps(),
            directions: Self::default_directions(),
            max_mode: default_max_mode(),
            amplitude: default_amplitude(),
        }
    }
}

fn default_max_mode() -> usize {
    3
}

fn default_amplitude() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HessianSettings {
    #[serde(default = "HessianSettings::default_pairs")]
    pub pairs: usize,
    #[serde(default = "HessianSettings::default_step")]
    pub step: f64,
    #[serde(default = "default_max_mode")]
    pub max_mode: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

impl HessianSettings {
    fn default_pairs() -> usize {
        20
    }
    fn default_step() -> f64 {
        crate::spectral::DEFAULT_HESSIAN_STEP
    }
}

impl Default for HessianSettings {
    fn default() -> Self {
        Self {
            pairs: Self::default_pairs(),
            step: Self::default_step(),
            max_mode: default_max_mode(),
            amplitude: default_amplitude(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSettings {
    #[serde(default)]
    pub tau_zero: Option<f64>,
    #[serde(default = "SpectrumSettings::default_cap")]
    pub cap: usize,
}

impl SpectrumSettings {
    fn default_cap() -> usize {
        crate::spectral::DEFAULT_DOF_CAP
    }
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        Self {
            tau_zero: None,
            cap: Self::default_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySettings {
    #[serde(default = "StabilitySettings::default_samples")]
    pub samples: usize,
    #[serde(default = "StabilitySettings::default_sections")]
    pub sections: usize,
    #[serde(default = "default_max_mode")]
    pub max_mode: usize,
}

impl StabilitySettings {
    fn default_samples() -> usize {
        2000
    }
    fn default_sections() -> usize {
        200
    }
}

impl Default for StabilitySettings {
    fn default() -> Self {
        Self {
            samples: Self::default_samples(),
            sections: Self::default_sections(),
            max_mode: default_max_mode(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSettings {
    #[serde(default = "StructureSettings::default_points")]
    pub points: usize,
}

impl StructureSettings {
    fn default_points() -> usize {
        100
    }
}

impl Default for StructureSettings {
    fn default() -> Self {
        Self {
            points: Self::default_points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "Tolerances::default_first_variation")]
    pub first_variation: f64,
    /// Largest Codazzi residual accepted by the structure check.
    #[serde(default = "Tolerances::default_structure")]
    pub structure: f64,
}

impl Tolerances {
    fn default_first_variation() -> f64 {
        1e-6
    }
    fn default_structure() -> f64 {
        1e-6
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            first_variation: Self::default_first_variation(),
            structure: Self::default_structure(),
        }
    }
}

/// Target value with a relative tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Approx {
    pub value: f64,
    pub rel_tol: f64,
}

impl Approx {
    pub fn holds(&self, x: f64) -> bool {
        (x - self.value).abs() <= self.rel_tol * self.value.abs().max(f64::MIN_POSITIVE)
    }
}

/// Expected outcomes turned into report assertions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nullity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<crate::spectral::Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_min: Option<Approx>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smallest_positive: Option<Approx>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<Approx>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "version_default")]
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub domain: ManifoldDescriptor,
    pub target: ManifoldDescriptor,
    pub map: MapSpec,
    pub n: usize,
    #[serde(default)]
    pub scheme: DiffScheme,
    pub analyses: Vec<Analysis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub structure: StructureSettings,
    #[serde(default)]
    pub flow: FlowSettings,
    #[serde(default)]
    pub first_variation: FirstVariationSettings,
    #[serde(default)]
    pub hessian_check: HessianSettings,
    #[serde(default)]
    pub spectrum: SpectrumSettings,
    #[serde(default)]
    pub stability: StabilitySettings,
    #[serde(default)]
    pub expect: Expectations,
}

/// Parses and validates scenario JSON. Schema errors carry the JSON pointer
/// of the offending value.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut pointer = json_pointer(e.path());
        let message = e.inner().to_string();
        if let Some(field) = missing_field(&message) {
            pointer.push('/');
            pointer.push_str(field);
        }
        Error::Schema { pointer, message }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut s = String::new();
    for seg in path.iter() {
        s.push('/');
        match seg {
            Segment::Seq { index } => s.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                s.push_str(&key.replace('~', "~0").replace('/', "~1"))
            }
            Segment::Unknown => s.push('?'),
        }
    }
    s
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.version != SCENARIO_VERSION {
            return cfg(format!("unsupported scenario version {} (expected {SCENARIO_VERSION})", self.version));
        }
        let m = match &self.domain {
            ManifoldDescriptor::FlatTorus { dim, .. } => *dim,
            other => return cfg(format!("domain must be a flat_torus, got {}", descriptor_name(other))),
        };
        let max_n = if m == 1 { MAX_RESOLUTION_1D } else { MAX_RESOLUTION_2D };
        if self.n < MIN_RESOLUTION || self.n > max_n || !self.n.is_multiple_of(2) {
            return cfg(format!("n = {} must be even and within [{MIN_RESOLUTION}, {max_n}]", self.n));
        }
        if matches!(self.map, MapSpec::Identity) && self.domain != self.target {
            return cfg("identity map requires the target descriptor to equal the domain descriptor".into());
        }
        if self.seed.is_none() {
            if let Some(a) = self.analyses.iter().find(|a| a.samples()) {
                return cfg(format!("analysis {a:?} samples randomly and needs a \"seed\""));
            }
        }
        if let Some(dt) = self.flow.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return cfg(format!("flow dt = {dt} must be positive"));
            }
        }
        if !(self.flow.tol > 0.0) {
            return cfg("flow tol must be positive".into());
        }
        if self.spectrum.cap == 0 || self.spectrum.cap > crate::spectral::DEFAULT_DOF_CAP {
            return cfg(format!(
                "spectrum cap {} must be within [1, {}]",
                self.spectrum.cap,
                crate::spectral::DEFAULT_DOF_CAP
            ));
        }
        if let Some(t) = self.spectrum.tau_zero {
            if !(t > 0.0) {
                return cfg("spectrum tau_zero must be positive".into());
            }
        }
        let steps = &self.first_variation.steps;
        if steps.is_empty() || steps.iter().any(|h| !(*h > 0.0)) || steps.windows(2).any(|w| w[1] >= w[0]) {
            return cfg("first_variation steps must be positive and strictly decreasing".into());
        }
        if !(self.hessian_check.step > 0.0) {
            return cfg("hessian_check step must be positive".into());
        }
        Ok(())
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            format!("{} -> {}", descriptor_name(&self.domain), descriptor_name(&self.target))
        })
    }

    pub fn domain_manifold(&self) -> Result<Arc<ChartManifold>> {
        Ok(Arc::new(make_manifold(&self.domain)?))
    }

    pub fn target_manifold(&self) -> Result<Arc<ChartManifold>> {
        Ok(Arc::new(make_manifold(&self.target)?))
    }

    pub fn grid(&self) -> Result<Arc<DomainGrid>> {
        Ok(Arc::new(DomainGrid::new(self.domain_manifold()?, self.n, self.scheme)?))
    }

    /// Builds the initial map; `base_dir` resolves relative `file` paths. A map
    /// leaving the target's validity box is a configuration error here.
    pub fn build_map(&self, grid: Arc<DomainGrid>, target: Arc<ChartManifold>, base_dir: &Path) -> Result<MapField> {
        build_map(&self.map, grid, target, base_dir).map_err(|e| match e {
            Error::DomainViolation { .. } => Error::Config(format!("initial map: {e}")),
            other => other,
        })
    }
}

pub fn descriptor_name(d: &ManifoldDescriptor) -> String {
    match d {
        ManifoldDescriptor::Euclidean { dim, .. } => format!("euclidean({dim})"),
        ManifoldDescriptor::FlatTorus { dim, .. } => format!("flat_torus({dim})"),
        ManifoldDescriptor::Sphere { radius, .. } => format!("sphere({radius})"),
        ManifoldDescriptor::NormalFamily { alpha, .. } => format!("normal_family({alpha})"),
        ManifoldDescriptor::Simplex { dim, alpha, .. } => format!("simplex({dim}, {alpha})"),
    }
}

pub fn build_map(spec: &MapSpec, grid: Arc<DomainGrid>, target: Arc<ChartManifold>, base_dir: &Path) -> Result<MapField> {
    let d = target.dim();
    let m = grid.dim();
    let lengths = grid.lengths().to_vec();
    let dim_err = |what: &str, got: usize, want: usize| {
        Err(Error::Config(format!("{what} has {got} entries, expected {want}")))
    };
    match spec {
        MapSpec::Constant { point } => {
            if point.len() != d {
                return dim_err("constant point", point.len(), d);
            }
            MapField::constant(grid, target, point)
        }
        MapSpec::Identity => {
            if d != m {
                return dim_err("identity target", d, m);
            }
            MapField::from_fn(grid, target, |x| x.to_vec())
        }
        MapSpec::CircleEmbed { k, center, radius } => {
            if d != 2 {
                return Err(Error::Config(format!("circle_embed needs a 2-dimensional target, got {d}")));
            }
            let c = center.clone().unwrap_or_else(|| vec![0.0, 0.0]);
            if c.len() != 2 {
                return dim_err("circle_embed center", c.len(), 2);
            }
            let kf = *k as f64;
            let l0 = lengths[0];
            let r = *radius;
            MapField::from_fn(grid, target, move |x| {
                let t = kf * 2.0 * PI * x[0] / l0;
                vec![c[0] + r * t.cos(), c[1] + r * t.sin()]
            })
        }
        MapSpec::GreatCircle { k } => {
            if !matches!(target.descriptor(), ManifoldDescriptor::Sphere { .. }) {
                return Err(Error::Config("great_circle maps need a sphere target".into()));
            }
            let kf = *k as f64;
            let l0 = lengths[0];
            MapField::from_fn(grid, target, move |x| vec![PI / 2.0, (kf * 2.0 * PI * x[0] / l0).rem_euclid(2.0 * PI)])
        }
        MapSpec::Fourier {
            constant,
            slopes,
            modes,
        } => {
            if constant.len() != d {
                return dim_err("fourier constant", constant.len(), d);
            }
            if !slopes.is_empty() && (slopes.len() != d || slopes.iter().any(|s| s.len() != m)) {
                return Err(Error::Config(format!("fourier slopes must be a {d}×{m} matrix")));
            }
            for mode in modes {
                if mode.k.len() != m {
                    return dim_err("fourier mode k", mode.k.len(), m);
                }
                for (name, v) in [("cos", &mode.cos), ("sin", &mode.sin)] {
                    if !v.is_empty() && v.len() != d {
                        return dim_err(&format!("fourier mode {name}"), v.len(), d);
                    }
                }
            }
            let periods = target.periods();
            MapField::from_fn(grid, target, |x| {
                (0..d)
                    .map(|c| {
                        let mut v = constant[c];
                        if !slopes.is_empty() {
                            v += (0..m).map(|a| slopes[c][a] * x[a]).sum::<f64>();
                        }
                        for mode in modes {
                            let phase: f64 = (0..m).map(|a| 2.0 * PI * mode.k[a] as f64 * x[a] / lengths[a]).sum();
                            if !mode.cos.is_empty() {
                                v += mode.cos[c] * phase.cos();
                            }
                            if !mode.sin.is_empty() {
                                v += mode.sin[c] * phase.sin();
                            }
                        }
                        match periods[c] {
                            Some(p) => v.rem_euclid(p),
                            None => v,
                        }
                    })
                    .collect()
            })
        }
        MapSpec::File { path } => {
            let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            let text = std::fs::read_to_string(&full)
                .map_err(|e| Error::Config(format!("cannot read map file {}: {e}", full.display())))?;
            MapField::from_csv(grid, target, &text)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{"domain":{"type":"flat_torus","dim":1,"lengths":[6.283185307]},"target":{"type":"euclidean","dim":2},"map":{"type":"circle_embed","k":1},"n":128,"analyses":["tension","energy"]}"#;

    fn pointer(text: &str) -> String {
        match parse_scenario(text) {
            Err(Error::Schema { pointer, .. }) => pointer,
            other => panic!("expected a schema error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_scenario_parses() {
        let s = parse_scenario(EXAMPLE).unwrap();
        assert_eq!(s.version, 1);
        assert_eq!(s.analyses, [Analysis::Tension, Analysis::Energy]);
        assert_eq!(s.scheme, DiffScheme::Spectral);
        let u = s.build_map(s.grid().unwrap(), s.target_manifold().unwrap(), Path::new(".")).unwrap();
        assert!((u.value(0)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn schema_errors_name_the_pointer() {
        assert_eq!(pointer(&EXAMPLE.replace(r#""target":{"type":"euclidean","dim":2},"#, "")), "/target");
        assert_eq!(pointer(&EXAMPLE.replace(r#""k":1"#, r#""k":1,"kk":2"#)), "/map");
        assert_eq!(pointer(&EXAMPLE.replace(r#""n":128"#, r#""n":-3"#)), "/n");
        assert_eq!(pointer(&EXAMPLE.replace(r#""dim":2}"#, r#""dim":2,"colour":1}"#)), "/target");
        assert_eq!(pointer(&EXAMPLE.replace(r#""energy"]"#, r#""energy","nonsense"]"#)), "/analyses/2");
        assert_eq!(pointer(&EXAMPLE.replace(r#""n":128"#, r#""n":128,"extra":0"#)), "/extra");
    }

    #[test]
    fn identity_needs_matching_descriptors() {
        let text = EXAMPLE.replace(r#"{"type":"circle_embed","k":1}"#, r#"{"type":"identity"}"#);
        assert!(matches!(parse_scenario(&text), Err(Error::Config(_))));
        let same = text.replace(r#"{"type":"euclidean","dim":2}"#, r#"{"type":"flat_torus","dim":1,"lengths":[6.283185307]}"#);
        assert!(parse_scenario(&same).is_ok());
    }

    #[test]
    fn sampling_analyses_need_a_seed() {
        let text = EXAMPLE.replace(r#""energy"]"#, r#""energy","stability"]"#);
        assert!(matches!(parse_scenario(&text), Err(Error::Config(_))));
        assert!(parse_scenario(&text.replace(r#""n":128"#, r#""n":128,"seed":4"#)).is_ok());
    }

    #[test]
    fn bounds_are_enforced() {
        for bad in [r#""n":7"#, r#""n":9"#, r#""n":4096"#] {
            assert!(matches!(parse_scenario(&EXAMPLE.replace(r#""n":128"#, bad)), Err(Error::Config(_))), "{bad}");
        }
        let text = EXAMPLE.replace(r#""n":128"#, r#""n":128,"flow":{"dt":-1}"#);
        assert!(matches!(parse_scenario(&text), Err(Error::Config(_))));
        let text = EXAMPLE.replace(r#""n":128"#, r#""n":128,"version":2"#);
        assert!(matches!(parse_scenario(&text), Err(Error::Config(_))));
    }

    #[test]
    fn fourier_and_file_maps() {
        let dir = tempfile::tempdir().unwrap();
        let text = EXAMPLE
            .replace(r#"{"type":"euclidean","dim":2}"#, r#"{"type":"sphere","radius":1}"#)
            .replace(
                r#"{"type":"circle_embed","k":1}"#,
                r#"{"type":"fourier","constant":[1.5,0.0],"slopes":[[0.0],[1.0]],"modes":[{"k":[2],"sin":[0.2,0.0]}]}"#,
            );
        let s = parse_scenario(&text).unwrap();
        let grid = s.grid().unwrap();
        let u = s.build_map(grid.clone(), s.target_manifold().unwrap(), dir.path()).unwrap();
        let x = grid.coords(5)[0];
        let phase = 4.0 * PI * x / grid.lengths()[0];
        assert!((u.value(5)[0] - (1.5 + 0.2 * phase.sin())).abs() < 1e-12);
        assert!((u.value(5)[1] - x).abs() < 1e-12);

        std::fs::write(dir.path().join("u.csv"), u.to_csv()).unwrap();
        let file = MapSpec::File { path: "u.csv".into() };
        let back = build_map(&file, grid.clone(), s.target_manifold().unwrap(), dir.path()).unwrap();
        assert_eq!(back.values(), u.values());
        let missing = MapSpec::File { path: "nope.csv".into() };
        assert!(build_map(&missing, grid, s.target_manifold().unwrap(), dir.path()).is_err());
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let s = parse_scenario(EXAMPLE).unwrap();
        let again = parse_scenario(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, again);
    }
}
