//! End-to-end runs: phantom, data, noise, reconstruction (QRM or FBP),
//! post-processing and inclusion metrics.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use log::info;

use crate::basis::{build_basis, BasisSet, DEFAULT_QUAD_ORDER};
use crate::domain::{build_grid, source_positions, DomainConfig, Grid, SourceSet};
use crate::error::{Error, Result};
use crate::export;
use crate::fbp::{build_sinogram, fbp_reconstruct, Sinogram};
use crate::forward::{add_noise, boundary_coefficients, simulate_raw, AlphaProjection, RawData};
use crate::operators::{assemble_a_b, OperatorMatrices};
use crate::phantom::{test_case, Inclusion, Phantom, TestCase};
use crate::recon::{post_process, reconstruct_f, ImageField, ImageMeta};
use crate::solver::{
    assemble_functional_matrix, boundary_constraints, difference_matrices, solve_qrm, QrmSolution,
    SolveDiagnostics, SolverConfig, SparseSystem,
};

/// Run parameters. Geometry left as `None` comes from the test definition.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub test_id: u32,
    pub half_width: Option<f64>,
    pub y_min: Option<f64>,
    pub y_max: Option<f64>,
    pub source_half_len: Option<f64>,
    pub cells: usize,
    pub source_cells: usize,
    pub basis_len: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub noise: f64,
    pub seed: u64,
    pub threshold: f64,
    pub window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            test_id: 1,
            half_width: None,
            y_min: None,
            y_max: None,
            source_half_len: None,
            cells: 60,
            source_cells: 100,
            basis_len: 10,
            eps1: 0.1,
            eps2: 0.01,
            noise: 0.05,
            seed: 2019,
            threshold: 0.2,
            window: 7,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value for {key}: {value:?}")))
}

impl RunConfig {
    /// Full-size lattice and basis (T_x = 150, N = 15).
    pub fn full_scale(mut self) -> Self {
        self.cells = 150;
        self.basis_len = 15;
        self
    }

    /// Parse `key = value` lines; `#` starts a comment. Keys not present
    /// keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "R" => self.half_width = Some(parse_value(key, value)?),
            "a" => self.y_min = Some(parse_value(key, value)?),
            "b" => self.y_max = Some(parse_value(key, value)?),
            "d" => self.source_half_len = Some(parse_value(key, value)?),
            "T_x" => self.cells = parse_value(key, value)?,
            "T_alpha" => self.source_cells = parse_value(key, value)?,
            "N" => self.basis_len = parse_value(key, value)?,
            "eps1" => self.eps1 = parse_value(key, value)?,
            "eps2" => self.eps2 = parse_value(key, value)?,
            "noise" => self.noise = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "test_id" => self.test_id = parse_value(key, value)?,
            "threshold" => self.threshold = parse_value(key, value)?,
            "window" => self.window = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Complete `key = value` listing that parses back to an equal config.
    pub fn echo(&self) -> Result<String> {
        let tc = test_case(self.test_id)?;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("test_id", self.test_id.to_string());
        put("R", format!("{:?}", self.half_width.unwrap_or(tc.half_width)));
        put("a", format!("{:?}", self.y_min.unwrap_or(tc.y_min)));
        put("b", format!("{:?}", self.y_max.unwrap_or(tc.y_max)));
        put("d", format!("{:?}", self.source_half_len.unwrap_or(tc.source_half_len)));
        put("T_x", self.cells.to_string());
        put("T_alpha", self.source_cells.to_string());
        put("N", self.basis_len.to_string());
        put("eps1", format!("{:?}", self.eps1));
        put("eps2", format!("{:?}", self.eps2));
        put("noise", format!("{:?}", self.noise));
        put("seed", self.seed.to_string());
        put("threshold", format!("{:?}", self.threshold));
        put("window", self.window.to_string());
        Ok(s)
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig { eps1: self.eps1, eps2: self.eps2, ..SolverConfig::default() }
    }

    pub fn domain(&self) -> Result<DomainConfig> {
        let tc = test_case(self.test_id)?;
        DomainConfig::new(
            self.half_width.unwrap_or(tc.half_width),
            self.y_min.unwrap_or(tc.y_min),
            self.y_max.unwrap_or(tc.y_max),
            self.source_half_len.unwrap_or(tc.source_half_len),
            self.cells,
            self.source_cells,
            self.basis_len,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Qrm,
    Fbp,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Qrm => "qrm",
            Method::Fbp => "fbp",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qrm" => Ok(Method::Qrm),
            "fbp" => Ok(Method::Fbp),
            other => Err(Error::Config(format!("unknown method {other:?} (expected qrm or fbp)"))),
        }
    }
}

/// Everything that does not depend on the noise realization.
pub struct Problem {
    pub config: RunConfig,
    pub test: TestCase,
    pub domain: DomainConfig,
    pub grid: Grid,
    pub sources: SourceSet,
    pub basis: BasisSet,
    pub phantom: Phantom,
    pub ops: OperatorMatrices,
    /// Noiseless data.
    pub clean: RawData,
    template: SparseSystem,
}

impl Problem {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let test = test_case(config.test_id)?;
        let domain = config.domain()?;
        let grid = build_grid(&domain)?;
        let sources = source_positions(&domain)?;
        let basis = build_basis(domain.basis_len, domain.source_half_len, DEFAULT_QUAD_ORDER)?;
        let phantom = test.phantom(&domain);
        let ops = assemble_a_b(&grid, &basis)?;
        let clean = simulate_raw(&phantom, &grid, &sources);
        let p = grid.len_per_axis();
        let m = assemble_functional_matrix(&grid, &ops);
        let (dx, dy) = difference_matrices(p, domain.basis_len, grid.hx, grid.hy);
        let template = SparseSystem {
            m,
            dx,
            dy,
            constrained: Vec::new(),
            per_axis: p,
            basis_len: domain.basis_len,
        };
        Ok(Self { config: config.clone(), test, domain, grid, sources, basis, phantom, ops, clean, template })
    }

    pub fn noisy(&self, delta: f64, seed: u64) -> Result<RawData> {
        add_noise(&self.clean, delta, seed)
    }

    /// Functional pieces with the boundary values of `raw`.
    pub fn system(&self, raw: &RawData) -> SparseSystem {
        let data = boundary_coefficients(raw.clone(), &self.basis, AlphaProjection::Spline);
        SparseSystem { constrained: boundary_constraints(self.grid.len_per_axis(), &data), ..self.template.clone() }
    }

    pub fn solve(&self, raw: &RawData, cfg: &SolverConfig) -> Result<QrmSolution> {
        solve_qrm(&self.system(raw), cfg)
    }

    pub fn truth_image(&self) -> ImageField {
        ImageField::from_fn(&self.grid, |x, y| self.phantom.eval(x, y))
    }
}

/// Sign-matched extreme of the image near one inclusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extreme {
    pub location: (f64, f64),
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionResult {
    pub inclusion: Inclusion,
    /// `None` when no lattice point falls in the search window.
    pub found: Option<Extreme>,
}

impl InclusionResult {
    pub fn location_error(&self) -> Option<f64> {
        self.found.map(|e| {
            let c = self.inclusion.center;
            (e.location.0 - c.0).hypot(e.location.1 - c.1)
        })
    }

    pub fn relative_value_error(&self) -> Option<f64> {
        self.found.map(|e| (e.value - self.inclusion.value).abs() / self.inclusion.value.abs())
    }
}

/// Window side as a multiple of the inclusion radius.
pub const WINDOW_FACTOR: f64 = 3.0;

/// For each inclusion, the extreme of its sign inside the square of side
/// `3 r` centred on the true centre.
pub fn locate_extremes(image: &ImageField, inclusions: &[Inclusion]) -> Vec<InclusionResult> {
    inclusions
        .iter()
        .map(|inc| {
            let half = 0.5 * WINDOW_FACTOR * inc.radius;
            let s = inc.sign();
            let mut best: Option<Extreme> = None;
            for (i, &x) in image.xs.iter().enumerate() {
                if (x - inc.center.0).abs() > half {
                    continue;
                }
                for (j, &y) in image.ys.iter().enumerate() {
                    if (y - inc.center.1).abs() > half {
                        continue;
                    }
                    let v = image.get(i, j);
                    if best.is_none_or(|b| s * v > s * b.value) {
                        best = Some(Extreme { location: (x, y), value: v });
                    }
                }
            }
            InclusionResult { inclusion: *inc, found: best }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub test_id: u32,
    pub method: Method,
    pub noise: f64,
    pub inclusions: Vec<InclusionResult>,
    /// Relative `L^2` error of the post-processed image on the interior lattice.
    pub relative_l2_error: f64,
    pub runtime: Duration,
    pub config_echo: String,
    pub diagnostics: Option<SolveDiagnostics>,
    pub image: ImageField,
    pub processed: ImageField,
    pub sinogram: Option<Sinogram>,
}

/// Reconstruct from `raw` with the given method and score the result.
pub fn reconstruct(problem: &Problem, raw: &RawData, method: Method, noise: f64) -> Result<ExperimentResult> {
    let cfg = &problem.config;
    let start = Instant::now();
    let meta = ImageMeta { test_id: Some(cfg.test_id), method: method.tag().into(), noise };
    let (image, diagnostics, sinogram) = match method {
        Method::Qrm => {
            let sol = problem.solve(raw, &cfg.solver())?;
            let img = reconstruct_f(&sol.field, &problem.basis, &problem.grid);
            (img, Some(sol.diagnostics), None)
        }
        Method::Fbp => {
            let sino = build_sinogram(raw, &problem.domain, &problem.grid);
            (fbp_reconstruct(&sino, &problem.grid), None, Some(sino))
        }
    };
    let image = image.with_meta(meta);
    let processed = post_process(&image, cfg.threshold, cfg.window);
    let relative_l2_error = processed.relative_l2_error(&problem.truth_image());
    Ok(ExperimentResult {
        test_id: cfg.test_id,
        method,
        noise,
        inclusions: locate_extremes(&processed, &problem.test.inclusions),
        relative_l2_error,
        runtime: start.elapsed(),
        config_echo: cfg.echo()?,
        diagnostics,
        image,
        processed,
        sinogram,
    })
}

/// Full run for one test, method and noise level. Artifacts are written
/// to `out_dir` when given.
pub fn run_test(cfg: &RunConfig, method: Method, out_dir: Option<&Path>) -> Result<ExperimentResult> {
    let start = Instant::now();
    let problem = Problem::new(cfg)?;
    let raw = problem.noisy(cfg.noise, cfg.seed)?;
    let mut result = reconstruct(&problem, &raw, method, cfg.noise)?;
    result.runtime = start.elapsed();
    info!(
        "test {} {} noise {}: {:.2?}, relative L2 error {:.4}",
        cfg.test_id,
        method.tag(),
        cfg.noise,
        result.runtime,
        result.relative_l2_error
    );
    if let Some(dir) = out_dir {
        write_artifacts(dir, &problem, &raw, &result)?;
    }
    Ok(result)
}

/// Stem shared by the files of one run, e.g. `test1_qrm_noise0.05`.
pub fn run_stem(test_id: u32, method: Method, noise: f64) -> String {
    format!("test{test_id}_{}_noise{noise}", method.tag())
}

fn write_artifacts(dir: &Path, problem: &Problem, raw: &RawData, result: &ExperimentResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let stem = run_stem(result.test_id, result.method, result.noise);
    let path = |suffix: &str| dir.join(format!("{stem}_{suffix}"));
    std::fs::write(path("config.txt"), &result.config_echo)?;
    problem.clean.write_csv(&mut export::create(&path("data_clean.csv"))?)?;
    raw.write_csv(&mut export::create(&path("data_noisy.csv"))?)?;
    export::write_image_csv(&result.image, &mut export::create(&path("image.csv"))?)?;
    export::write_image_pgm(&result.image, &path("image.pgm"))?;
    export::write_image_csv(&result.processed, &mut export::create(&path("image_post.csv"))?)?;
    export::write_image_pgm(&result.processed, &path("image_post.pgm"))?;
    if let Some(sino) = &result.sinogram {
        export::write_sinogram_csv(sino, &mut export::create(&path("sinogram.csv"))?)?;
        export::write_sinogram_pgm(sino, &path("sinogram.pgm"))?;
    }
    if let Some(d) = &result.diagnostics {
        d.write_csv(&mut export::create(&path("solver.csv"))?, true)?;
    }
    let mut out = export::create(&path("metrics.csv"))?;
    write_metrics_csv(std::slice::from_ref(result), &mut out)?;
    out.flush()?;
    Ok(())
}

/// One row per inclusion and run, with true and computed location and value plus error columns.
pub fn write_metrics_csv<W: Write>(results: &[ExperimentResult], out: &mut W) -> Result<()> {
    writeln!(
        out,
        "test,inclusion,method,noise,loc_true_x,loc_true_y,f_true,loc_comp_x,loc_comp_y,f_comp,loc_error,rel_value_error,rel_l2_error"
    )?;
    for r in results {
        for inc in &r.inclusions {
            let i = inc.inclusion;
            let (cx, cy, fv) = match inc.found {
                Some(e) => (format!("{:.4}", e.location.0), format!("{:.4}", e.location.1), format!("{:.4}", e.value)),
                None => (String::new(), String::new(), String::new()),
            };
            let opt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{cx},{cy},{fv},{},{},{:.4}",
                r.test_id,
                i.number,
                r.method.tag(),
                r.noise,
                i.center.0,
                i.center.1,
                i.value,
                opt(inc.location_error()),
                opt(inc.relative_value_error()),
                r.relative_l2_error
            )?;
        }
    }
    Ok(())
}

/// A row of the published comparison table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub test_id: u32,
    pub inclusion: u32,
    pub method: Method,
    pub noise: f64,
    pub location: (f64, f64),
    pub value: f64,
}

/// Published computed locations and values for Tests 1 and 2, used as
/// reference targets.
pub fn reference_table() -> Vec<ReferenceRow> {
    let row = |test_id, inclusion, method, noise, location, value| ReferenceRow {
        test_id,
        inclusion,
        method,
        noise,
        location,
        value,
    };
    use Method::{Fbp, Qrm};
    vec![
        row(1, 1, Qrm, 0.05, (0.000, 1.973), 0.9781),
        row(1, 1, Qrm, 0.15, (0.013, 1.973), 0.9361),
        row(1, 1, Fbp, 0.05, (0.053, 2.000), 0.9751),
        row(2, 2, Qrm, 0.05, (-0.4, 4.0), -4.373),
        row(2, 3, Qrm, 0.05, (-0.107, 3.507), 4.615),
        row(2, 4, Qrm, 0.05, (0.4, 4.0), 5.261),
        row(2, 2, Qrm, 0.15, (-0.4, 4.0), -4.378),
        row(2, 3, Qrm, 0.15, (-0.107, 3.52), 4.574),
        row(2, 4, Qrm, 0.15, (0.4, 4.0), 5.16),
        row(2, 2, Fbp, 0.05, (-0.4, 3.96), -4.644),
        row(2, 3, Fbp, 0.05, (-0.067, 3.56), 3.829),
        row(2, 4, Fbp, 0.05, (0.413, 4.027), 4.617),
    ]
}

/// Merged QRM / FBP table for one test and noise level.
pub fn compare_methods<W: Write>(qrm: &ExperimentResult, fbp: &ExperimentResult, out: &mut W) -> Result<()> {
    write_metrics_csv(&[qrm.clone(), fbp.clone()], out)
}

/// Plain-text table: true vs computed location and value per inclusion.
pub fn summary(results: &[ExperimentResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6} {:<10} {:<18} {:>8} {:<7} {:>5} {:<18} {:>9} {:>9} {:>9}",
        "test", "inclusion", "loc_true", "f_true", "method", "noise", "loc_comp", "f_comp", "loc_err", "rel_err"
    );
    for r in results {
        for inc in &r.inclusions {
            let i = inc.inclusion;
            let (loc, val) = match inc.found {
                Some(e) => (format!("({:.3}, {:.3})", e.location.0, e.location.1), format!("{:.4}", e.value)),
                None => ("-".into(), "-".into()),
            };
            let _ = writeln!(
                s,
                "{:<6} {:<10} {:<18} {:>8} {:<7} {:>5} {:<18} {:>9} {:>9} {:>9}",
                r.test_id,
                i.number,
                format!("({:.3}, {:.3})", i.center.0, i.center.1),
                i.value,
                r.method.tag(),
                format!("{:.0}%", 100.0 * r.noise),
                loc,
                val,
                inc.location_error().map(|v| format!("{v:.3}")).unwrap_or_default(),
                inc.relative_value_error().map(|v| format!("{:.1}%", 100.0 * v)).unwrap_or_default(),
            );
        }
    }
    s
}
