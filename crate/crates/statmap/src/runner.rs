//! Executes scenarios and writes their reports and plot data.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{MapField, Section};
use crate::flow::{harmonic_flow, FlowConfig, FlowOutcome};
use crate::geometry::{structure_report, StructureReport};
use crate::pullback::PullbackGeometry;
use crate::scenario::{load_scenario, Analysis, Approx, Scenario};
use crate::spectral::{
    hessian_check, spectrum, stability_report, HessianCheck, JacobiOperator, SpectrumConfig, SpectrumReport,
    StabilityConfig, StabilityReport, Verdict,
};
use crate::variational::{energy_report, first_variation_check, EnergyReport, FirstVariationReport, VariationFamily};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Order in which requested analyses execute.
pub const ANALYSIS_ORDER: [Analysis; 8] = [
    Analysis::Structure,
    Analysis::Flow,
    Analysis::Tension,
    Analysis::Energy,
    Analysis::FirstVariation,
    Analysis::HessianCheck,
    Analysis::Spectrum,
    Analysis::Stability,
];

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ASSERTION: i32 = 2;

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pointer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    pub exit_code: i32,
}

impl From<&Error> for ErrorReport {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
            pointer: match e {
                Error::Schema { pointer, .. } => Some(pointer.clone()),
                _ => None,
            },
            node: match e {
                Error::DomainViolation { node, .. } => *node,
                _ => None,
            },
            exit_code: e.exit_code(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureResult {
    pub domain: StructureReport,
    pub target: StructureReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct TensionResult {
    pub tension_sup: f64,
    pub tension_l2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HessianCheckResult {
    pub pairs: Vec<HessianCheck>,
    /// Largest `residual / tolerance` over the pairs.
    pub worst_ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Results {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tension: Option<TensionResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_variation: Option<Vec<FirstVariationReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hessian_check: Option<HessianCheckResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityReport>,
    /// Second-variation results computed at a map above the harmonicity gate.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub advisory: bool,
}

/// Deterministic part of a run: no timings, no absolute paths.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    pub results: Results,
    pub assertions: Vec<Assertion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorReport>,
    pub passed: bool,
    pub exit_code: i32,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub name: String,
    pub total_seconds: f64,
    pub analyses: Vec<AnalysisTiming>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AnalysisTiming {
    pub analysis: Analysis,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub timing: Timing,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }
}

fn sub_seed(seed: u64, analysis: Analysis) -> u64 {
    seed ^ (analysis as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn normalized_direction(grid: &crate::grid::DomainGrid, dim: usize, max_mode: usize, amplitude: f64, rng: &mut ChaCha8Rng) -> Section {
    let v = Section::random_smooth(grid, dim, max_mode, rng);
    let m = v.max_abs();
    if m > 0.0 {
        v.scaled(amplitude / m)
    } else {
        v
    }
}

struct Runner<'a> {
    scenario: &'a Scenario,
    base_dir: &'a Path,
    results: Results,
    assertions: Vec<Assertion>,
    map: Option<MapField>,
    op: Option<JacobiOperator>,
}

impl<'a> Runner<'a> {
    fn assert(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn assert_approx(&mut self, name: &str, expected: &Option<Approx>, got: Option<f64>) {
        if let Some(a) = expected {
            let passed = got.is_some_and(|x| a.holds(x));
            self.assert(name, passed, format!("{got:?} vs {} ± {} (relative)", a.value, a.rel_tol));
        }
    }

    fn seed(&self, analysis: Analysis) -> u64 {
        sub_seed(self.scenario.seed.unwrap_or(0), analysis)
    }

    fn map(&mut self) -> Result<&MapField> {
        if self.map.is_none() {
            let grid = self.scenario.grid()?;
            let target = self.scenario.target_manifold()?;
            self.map = Some(self.scenario.build_map(grid, target, self.base_dir)?);
        }
        Ok(self.map.as_ref().expect("map built"))
    }

    fn operator(&mut self) -> Result<&JacobiOperator> {
        if self.op.is_none() {
            let op = JacobiOperator::new(self.map()?)?;
            self.results.advisory |= !op.is_harmonic();
            self.op = Some(op);
        }
        Ok(self.op.as_ref().expect("operator built"))
    }

    fn spectrum(&mut self) -> Result<SpectrumReport> {
        if let Some(s) = &self.results.spectrum {
            return Ok(s.clone());
        }
        let cfg = SpectrumConfig {
            tau_zero: self.scenario.spectrum.tau_zero,
            cap: self.scenario.spectrum.cap,
            prefer_circulant: false,
        };
        spectrum(self.operator()?, &cfg)
    }

    fn run(&mut self, analysis: Analysis) -> Result<()> {
        let sc = self.scenario;
        match analysis {
            Analysis::Structure => {
                let n = sc.structure.points;
                let seed = self.seed(analysis);
                let domain = structure_report(&*sc.domain_manifold()?, n, seed)?;
                let target = structure_report(&*sc.target_manifold()?, n, seed)?;
                let tol = sc.tolerances.structure;
                for (label, r) in [("domain", &domain), ("target", &target)] {
                    self.assert(
                        format!("structure.{label}"),
                        r.passed(tol),
                        format!(
                            "codazzi {:.2e}, duality {:.2e}, involution {:?}",
                            r.codazzi_max, r.duality_max, r.involution_max
                        ),
                    );
                }
                self.results.structure = Some(StructureResult { domain, target });
            }
            Analysis::Flow => {
                let cfg = FlowConfig {
                    dt: sc.flow.dt,
                    tol: sc.flow.tol,
                    max_steps: sc.flow.max_steps,
                };
                let out = harmonic_flow(self.map()?, &cfg)?;
                let expected = sc.expect.flow_converged.unwrap_or(true);
                self.assert(
                    "flow.converged",
                    out.converged == expected,
                    format!("converged = {} after {} steps, sup|τ| = {:.3e}", out.converged, out.steps, out.tension_sup),
                );
                self.map = Some(out.map.clone());
                self.op = None;
                self.results.flow = Some(out);
            }
            Analysis::Tension => {
                let pb = PullbackGeometry::new(self.map()?, false)?;
                let tau = crate::variational::tension_of(&pb);
                self.results.tension = Some(TensionResult {
                    tension_sup: crate::variational::tension_sup(&pb, &tau),
                    tension_l2: pb.l2_norm(&tau),
                });
            }
            Analysis::Energy => {
                let mut rep = energy_report(self.map()?)?;
                rep.converged = self.results.flow.as_ref().map(|f| f.converged);
                self.assert_approx("expect.energy", &sc.expect.energy, Some(rep.energy));
                self.results.energy = Some(rep);
            }
            Analysis::FirstVariation => {
                let s = &sc.first_variation;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed(analysis));
                let base = self.map()?.clone();
                let mut reports = Vec::with_capacity(s.directions);
                for i in 0..s.directions {
                    let v = normalized_direction(base.grid(), base.target_dim(), s.max_mode, s.amplitude, &mut rng);
                    let zero = Section::zeros(v.nodes(), v.dim());
                    let fam = VariationFamily::chart_linear(base.clone(), v, zero)?;
                    let rep = first_variation_check(&fam, &s.steps, sc.tolerances.first_variation)?;
                    self.assert(
                        format!("first_variation.{i}"),
                        rep.passed,
                        format!(
                            "residual {:.3e}, order {:?}, exact {}",
                            rep.residuals.last().copied().unwrap_or(f64::NAN),
                            rep.observed_order,
                            rep.exact
                        ),
                    );
                    reports.push(rep);
                }
                self.results.first_variation = Some(reports);
            }
            Analysis::HessianCheck => {
                let s = &sc.hessian_check;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed(analysis));
                let base = self.map()?.clone();
                let op = self.operator()?;
                let mut pairs = Vec::with_capacity(s.pairs);
                for _ in 0..s.pairs {
                    let v = normalized_direction(base.grid(), base.target_dim(), s.max_mode, s.amplitude, &mut rng);
                    let w = normalized_direction(base.grid(), base.target_dim(), s.max_mode, s.amplitude, &mut rng);
                    let fam = VariationFamily::chart_linear(base.clone(), v, w)?;
                    pairs.push(hessian_check(op, &fam, s.step)?);
                }
                let worst_ratio = pairs.iter().map(|c| c.residual / c.tolerance).fold(0.0, f64::max);
                let passed = pairs.iter().all(|c| c.passed);
                self.assert("hessian_check", passed, format!("{} pairs, worst residual/tolerance {worst_ratio:.3e}", pairs.len()));
                self.results.hessian_check = Some(HessianCheckResult {
                    pairs,
                    worst_ratio,
                    passed,
                });
            }
            Analysis::Spectrum => {
                let rep = self.spectrum()?;
                if self.operator()?.geometry().target().is_levi_civita() {
                    self.assert(
                        "spectrum.self_adjoint",
                        rep.asymmetry < 1e-8,
                        format!("asymmetry {:.3e}", rep.asymmetry),
                    );
                }
                let e = &sc.expect;
                if let Some(k) = e.index {
                    self.assert("expect.index", rep.index == k, format!("index {} vs {k}", rep.index));
                }
                if let Some(k) = e.min_index {
                    self.assert("expect.min_index", rep.index >= k, format!("index {} vs ≥ {k}", rep.index));
                }
                if let Some(k) = e.nullity {
                    self.assert("expect.nullity", rep.nullity == k, format!("nullity {} vs {k}", rep.nullity));
                }
                self.assert_approx("expect.lambda_min", &e.lambda_min, Some(rep.lambda_min()));
                self.assert_approx("expect.smallest_positive", &e.smallest_positive, rep.smallest_positive());
                if let (Some(v), false) = (e.verdict, sc.analyses.contains(&Analysis::Stability)) {
                    self.assert("expect.verdict", rep.verdict == v, format!("{:?} vs {v:?}", rep.verdict));
                }
                self.results.spectrum = Some(rep);
            }
            Analysis::Stability => {
                let spec = self.spectrum()?;
                let s = &sc.stability;
                let cfg = StabilityConfig {
                    samples: s.samples,
                    sections: s.sections,
                    max_mode: s.max_mode,
                    seed: self.seed(analysis),
                };
                let rep = stability_report(self.operator()?, &spec, &cfg)?;
                self.assert(
                    "stability.consistent",
                    !rep.contradiction,
                    rep.advice.clone().unwrap_or_else(|| format!("λ_min {:.3e}", rep.lambda_min)),
                );
                if let Some(v) = sc.expect.verdict {
                    self.assert("expect.verdict", rep.verdict == v, format!("{:?} vs {v:?}", rep.verdict));
                }
                self.results.stability = Some(rep);
            }
        }
        Ok(())
    }
}

/// Runs every requested analysis in [`ANALYSIS_ORDER`]. Relative `file` maps
/// resolve against `base_dir`. Errors end the run and land in the report.
pub fn run(scenario: &Scenario, base_dir: &Path) -> RunOutcome {
    let start = Instant::now();
    let mut runner = Runner {
        scenario,
        base_dir,
        results: Results::default(),
        assertions: Vec::new(),
        map: None,
        op: None,
    };
    let mut timings = Vec::new();
    let mut error = None;
    for analysis in ANALYSIS_ORDER.into_iter().filter(|a| scenario.analyses.contains(a)) {
        let t = Instant::now();
        let res = runner.run(analysis);
        timings.push(AnalysisTiming {
            analysis,
            seconds: t.elapsed().as_secs_f64(),
        });
        if let Err(e) = res {
            error = Some(e);
            break;
        }
    }
    let name = scenario.display_name();
    let report = finish(name.clone(), Some(scenario.clone()), runner.results, runner.assertions, error.as_ref());
    RunOutcome {
        report,
        timing: Timing {
            name,
            total_seconds: start.elapsed().as_secs_f64(),
            analyses: timings,
        },
    }
}

fn finish(
    name: String,
    scenario: Option<Scenario>,
    results: Results,
    assertions: Vec<Assertion>,
    error: Option<&Error>,
) -> RunReport {
    let all = assertions.iter().all(|a| a.passed);
    let exit_code = match error {
        Some(e) => e.exit_code(),
        None if all => EXIT_PASS,
        None => EXIT_ASSERTION,
    };
    RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        name,
        scenario,
        results,
        assertions,
        error: error.map(ErrorReport::from),
        passed: exit_code == EXIT_PASS,
        exit_code,
    }
}

/// Loads and runs one scenario file; load failures become error reports.
pub fn run_path(path: &Path) -> RunOutcome {
    let base = path.parent().unwrap_or(Path::new("."));
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match load_scenario(path) {
        Ok(sc) => {
            let mut out = run(&sc, base);
            if sc.name.is_none() {
                out.report.name = name.clone();
                out.timing.name = name;
            }
            out
        }
        Err(e) => RunOutcome {
            report: finish(name.clone(), None, Results::default(), Vec::new(), Some(&e)),
            timing: Timing {
                name,
                total_seconds: 0.0,
                analyses: Vec::new(),
            },
        },
    }
}

/// Parses a scenario and builds its grid and initial map without running
/// any analysis.
pub fn check_path(path: &Path) -> Result<Scenario> {
    let sc = load_scenario(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    sc.build_map(sc.grid()?, sc.target_manifold()?, base)?;
    Ok(sc)
}

/// Runs scenario files on `jobs` worker threads; results keep input order.
pub fn run_many(paths: &[PathBuf], jobs: usize) -> Vec<RunOutcome> {
    let jobs = jobs.clamp(1, paths.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RunOutcome>>> = Mutex::new(vec![None; paths.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = paths.get(i) else { break };
                let out = run_path(path);
                slots.lock().expect("no poisoned workers")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|o| o.expect("every slot filled"))
        .collect()
}

/// Environment variable capping the worker threads of a process.
pub const THREADS_ENV: &str = "STATMAP_THREADS";

/// Parses a thread cap such as the value of [`THREADS_ENV`].
pub fn parse_thread_cap(value: Option<&str>) -> Result<Option<usize>> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

/// Sizes the global rayon pool from [`THREADS_ENV`]; returns the cap in force.
pub fn configure_threads() -> Result<usize> {
    let cap = parse_thread_cap(std::env::var(THREADS_ENV).ok().as_deref())?;
    if let Some(k) = cap {
        // fails only when the pool already exists, which keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    Ok(cap.unwrap_or_else(rayon::current_num_threads))
}

/// `*.json` files directly inside `dir`, sorted by name.
pub fn suite_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Aggregate exit code: the most severe code among the runs.
pub fn aggregate_exit_code(outcomes: &[RunOutcome]) -> i32 {
    outcomes.iter().map(RunOutcome::exit_code).max().unwrap_or(EXIT_PASS)
}

/// Writes `report.json`, `timing.json` and the plot data into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let report = dir.join("report.json");
    std::fs::write(&report, outcome.report.to_json())?;
    let timing = dir.join("timing.json");
    std::fs::write(&timing, serde_json::to_string_pretty(&outcome.timing).expect("timing serializes") + "\n")?;
    let mut files = vec![report, timing];
    files.extend(emit_plot_data(&outcome.report, dir)?);
    Ok(files)
}

/// CSV series for plotting: spectra, first-variation convergence, flow
/// energies and the flowed map. Reports without series produce no files.
pub fn emit_plot_data(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut write = |name: String, body: String| -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        files.push(path);
        Ok(())
    };
    let r = &report.results;
    if let Some(spec) = &r.spectrum {
        write("spectrum.csv".into(), spectrum_csv(spec))?;
        write("eigenvalues.csv".into(), spec.eigenvalues_csv())?;
    }
    if let Some(list) = &r.first_variation {
        for (i, fv) in list.iter().enumerate() {
            write(format!("first_variation_{i}.csv"), first_variation_csv(fv))?;
        }
    }
    if let Some(flow) = &r.flow {
        let mut s = String::from("step,energy\n");
        for (i, e) in flow.energies.iter().enumerate() {
            s.push_str(&format!("{i},{e:?}\n"));
        }
        write("flow_energy.csv".into(), s)?;
        write("map.csv".into(), flow.map.to_csv())?;
    }
    Ok(files)
}

pub fn spectrum_csv(spec: &SpectrumReport) -> String {
    let mut s = String::from("rank,eigenvalue\n");
    for (i, v) in spec.eigenvalues.iter().enumerate() {
        s.push_str(&format!("{i},{v:?}\n"));
    }
    s
}

/// `h,residual,order`; the order column is empty on the first row and where
/// the residual sits at round-off.
pub fn first_variation_csv(fv: &FirstVariationReport) -> String {
    let mut s = String::from("h,residual,order\n");
    for (i, (h, r)) in fv.steps.iter().zip(&fv.residuals).enumerate() {
        let order = i
            .checked_sub(1)
            .and_then(|j| fv.orders.get(j).copied().flatten())
            .map(|o| format!("{o:?}"))
            .unwrap_or_default();
        s.push_str(&format!("{h:?},{r:?},{order}\n"));
    }
    s
}

/// Verdict of the most authoritative stability analysis in a report.
pub fn report_verdict(report: &RunReport) -> Option<Verdict> {
    let r = &report.results;
    r.stability.as_ref().map(|s| s.verdict).or(r.spectrum.as_ref().map(|s| s.verdict))
}
