//! Fits, classification, run configuration, CSV output and the saddle cache.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::{reported, Branch, FcsResult};
use crate::contour::{ContourGrid, TwistSpec};
use crate::error::{Error, Result};
use crate::saddle::ModelParams;
use crate::solver::{EqualTimeGreens, SelfEnergy, SolveMeta, SolveOptions, Solution, Tracks};

type C = Complex64;

/// `L sin(pi |A| / L) / pi`.
pub fn chord_length(a_size: usize, l: usize) -> Result<f64> {
    if a_size == 0 || a_size >= l {
        return Err(Error::Domain(format!("chord length needs 0 < |A| < L, got |A|={a_size}, L={l}")));
    }
    // fold so that |A| and L-|A| give bit-identical results
    let a = a_size.min(l - a_size) as f64;
    let l = l as f64;
    Ok(l * (PI * a / l).sin() / PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitModel {
    /// `y` against `x` unchanged.
    Linear,
    /// `y` against `ln x`, with `x` the chord length.
    LogChord,
    /// `y` against `x^2`.
    PhiSquared,
    /// `y` against `1 - cos x`.
    OneMinusCos,
    /// Same transform as `LogChord`; the slope is read as a saturation diagnostic.
    AreaSaturation,
}

impl FitModel {
    fn transform(self, x: f64) -> f64 {
        match self {
            FitModel::Linear => x,
            FitModel::LogChord | FitModel::AreaSaturation => x.ln(),
            FitModel::PhiSquared => x * x,
            FitModel::OneMinusCos => 1.0 - x.cos(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: FitModel,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residual_max: f64,
}

/// Ordinary least squares of `y` on the transformed `x`.
pub fn fit_scaling(points: &[(f64, f64)], model: FitModel) -> Result<FitReport> {
    if points.len() < 3 {
        return Err(Error::Domain(format!("fit needs at least 3 points, got {}", points.len())));
    }
    let xs: Vec<f64> = points.iter().map(|p| model.transform(p.0)).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
        return Err(Error::Domain("fit input is not finite".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("fit abscissa is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (slope * x + intercept)).collect();
    let ss_res: f64 = res.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { if ss_res == 0.0 { 1.0 } else { 0.0 } } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    let residual_max = res.iter().map(|r| r.abs()).fold(0.0, f64::max);
    Ok(FitReport { model, slope, intercept, r_squared, residual_max })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingLaw {
    LogLaw,
    AreaLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub law: ScalingLaw,
    /// All values were zero.
    pub degenerate: bool,
    pub phi: f64,
    pub a_size: usize,
    /// `Re F` against log-chord at fixed `phi`.
    pub log_fit: FitReport,
    pub cos_fit: FitReport,
    pub phi2_fit: FitReport,
    /// Slope times the log-chord span, over the largest `|F|`.
    pub relative_slope: f64,
}

/// Minimum `r^2` of a log-chord fit for a log law.
pub const LOG_R2: f64 = 0.98;
/// Default relative-slope threshold when no scan threshold is supplied.
pub const RELATIVE_THRESHOLD: f64 = 0.1;

fn pick<T: Copy + PartialOrd>(groups: &[(T, usize)], target: f64, key: impl Fn(T) -> f64) -> Option<T> {
    groups
        .iter()
        .filter(|g| g.1 >= 4)
        .min_by(|a, b| (key(a.0) - target).abs().partial_cmp(&(key(b.0) - target).abs()).unwrap())
        .map(|g| g.0)
}

/// The two slices used for classification: `Re F` vs chord at the `phi`
/// closest to `pi/2`, and `Re F` vs `phi >= 0` at the `|A|` closest to `L/2`.
pub fn classification_slices(sweep: &[FcsResult], l: usize) -> Result<(f64, Vec<(f64, f64)>, usize, Vec<(f64, f64)>)> {
    let rep = reported(sweep);
    let mut phis: Vec<(f64, usize)> = Vec::new();
    let mut sizes: Vec<(usize, usize)> = Vec::new();
    for r in &rep {
        if r.a_size == 0 || r.a_size >= l {
            continue;
        }
        match phis.iter_mut().find(|p| p.0 == r.phi) {
            Some(p) => p.1 += 1,
            None => phis.push((r.phi, 1)),
        }
        if r.phi > 0.0 {
            match sizes.iter_mut().find(|p| p.0 == r.a_size) {
                Some(p) => p.1 += 1,
                None => sizes.push((r.a_size, 1)),
            }
        }
    }
    let phi = pick(&phis, PI / 2.0, |p| p).ok_or_else(|| Error::Domain("need one phi with at least 4 subsystem sizes".into()))?;
    let a = pick(&sizes, l as f64 / 2.0, |a| a as f64).ok_or_else(|| Error::Domain("need one |A| with at least 4 positive phi values".into()))?;
    let mut by_a: Vec<(f64, f64)> = rep
        .iter()
        .filter(|r| r.phi == phi && r.a_size > 0 && r.a_size < l)
        .map(|r| (chord_length(r.a_size, l).unwrap(), r.f_per_n.re))
        .collect();
    by_a.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut by_phi: Vec<(f64, f64)> = rep.iter().filter(|r| r.a_size == a && r.phi > 0.0).map(|r| (r.phi, r.f_per_n.re)).collect();
    by_phi.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok((phi, by_a, a, by_phi))
}

/// Log law when the log-chord slope is above `threshold` with `r^2 > 0.98`,
/// area law otherwise. `threshold` is an absolute slope (see [`scan_threshold`]);
/// without one the slope is compared relative to the data's own scale.
pub fn classify_from_data(sweep: &[FcsResult], l: usize, threshold: Option<f64>) -> Result<Classification> {
    let (phi, by_a, a_size, by_phi) = classification_slices(sweep, l)?;
    let fmax = by_a.iter().chain(&by_phi).map(|p| p.1.abs()).fold(0.0, f64::max);
    let log_fit = fit_scaling(&by_a, FitModel::LogChord)?;
    let cos_fit = fit_scaling(&by_phi, FitModel::OneMinusCos)?;
    let phi2_fit = fit_scaling(&by_phi, FitModel::PhiSquared)?;
    let span = by_a.last().unwrap().0.ln() - by_a[0].0.ln();
    let relative_slope = if fmax > 0.0 { log_fit.slope * span / fmax } else { 0.0 };
    let degenerate = fmax == 0.0;
    let above = match threshold {
        Some(t) => log_fit.slope > t,
        None => relative_slope > RELATIVE_THRESHOLD,
    };
    let law = if !degenerate && above && log_fit.r_squared > LOG_R2 { ScalingLaw::LogLaw } else { ScalingLaw::AreaLaw };
    Ok(Classification { law, degenerate, phi, a_size, log_fit, cos_fit, phi2_fit, relative_slope })
}

/// `10%` of the largest log-chord slope across a scan of runs.
pub fn scan_threshold(runs: &[&[FcsResult]], l: usize) -> Result<f64> {
    let mut best: f64 = 0.0;
    for run in runs {
        let (_, by_a, _, _) = classification_slices(run, l)?;
        best = best.max(fit_scaling(&by_a, FitModel::LogChord)?.slope);
    }
    Ok(0.1 * best)
}

fn default_phis() -> Vec<f64> {
    (1..=8).map(|i| i as f64 * PI / 8.0).collect()
}

fn default_sizes() -> Vec<usize> {
    (2..=18).step_by(2).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_phis")]
    pub phis: Vec<f64>,
    #[serde(default = "default_sizes")]
    pub a_sizes: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { phis: default_phis(), a_sizes: default_sizes() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub cache: bool,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_out(), cache: true }
    }
}

/// Everything one run needs, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: GridConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.solver.validate()?;
        self.grid()?;
        for &a in &self.sweep.a_sizes {
            TwistSpec { phi: 0.0, a_size: a }.validate(self.model.l)?;
        }
        if self.sweep.phis.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("phis must be finite".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<ContourGrid> {
        ContourGrid::for_model(&self.model, self.grid.n_t)
    }
}

/// One line of the sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub zeta: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub n_t: usize,
    pub phi: f64,
    #[serde(rename = "A_size")]
    pub a_size: usize,
    #[serde(rename = "reF_perN")]
    pub re_f_per_n: f64,
    #[serde(rename = "imF_perN")]
    pub im_f_per_n: f64,
    pub branch: String,
    pub iters: usize,
    pub converged: bool,
}

pub fn csv_rows(params: &ModelParams, grid: &ContourGrid, results: &[FcsResult]) -> Vec<CsvRow> {
    results
        .iter()
        .map(|r| CsvRow {
            zeta: params.zeta,
            v: params.v,
            mu: params.mu,
            l: params.l,
            t: grid.t,
            n_t: grid.n_t,
            phi: r.phi,
            a_size: r.a_size,
            re_f_per_n: r.f_per_n.re,
            im_f_per_n: r.f_per_n.im,
            branch: r.branch.as_str().to_string(),
            iters: r.meta.as_ref().map_or(0, |m| m.iters),
            converged: r.converged,
        })
        .collect()
}

pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for r in rd.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

/// Rows back to sweep results, for refitting.
pub fn results_from_rows(rows: &[CsvRow]) -> Result<Vec<FcsResult>> {
    rows.iter()
        .map(|r| {
            let branch = match r.branch.as_str() {
                "below" => Branch::FromBelow,
                "above" => Branch::FromAbove,
                other => return Err(Error::Config(format!("unknown branch '{other}'"))),
            };
            Ok(FcsResult {
                phi: r.phi,
                a_size: r.a_size,
                f_per_n: C::new(r.re_f_per_n, r.im_f_per_n),
                branch,
                converged: r.converged,
                meta: None,
                error: None,
            })
        })
        .collect()
}

pub const CACHE_MAGIC: &[u8; 4] = b"FCSG";
pub const CACHE_VERSION: u32 = 1;
pub const CACHE_HEADER: usize = 64;

/// SHA-256 of everything that determines a converged saddle.
pub fn parameter_hash(params: &ModelParams, grid: &ContourGrid, twist: &TwistSpec, opts: &SolveOptions) -> [u8; 32] {
    let text = format!(
        "j={:e};v={:e};zeta={:e};mu={:e};l={};t={:e};n_t={};phi={:e};a={};alpha={:e};tol={:e};max={};backend={:?};boundary={:?}",
        params.j, params.v, params.zeta, params.mu, params.l, grid.t, grid.n_t, twist.phi, twist.a_size, opts.alpha, opts.tol, opts.max_iters, opts.backend, opts.boundary
    );
    Sha256::digest(text.as_bytes()).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes a solution: the header, then per site the self-energy tracks,
/// the equal-time tracks and the `log det`, then `(final delta, wall time)`.
pub fn encode_cache(sol: &Solution, hash: &[u8; 32]) -> Vec<u8> {
    let n = sol.grid.n_t;
    let l = sol.params.l;
    let mut buf = Vec::with_capacity(CACHE_HEADER + 16 * (l * (8 * n + 1) + 1));
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(sol.grid.dim() as u64).to_le_bytes());
    buf.extend_from_slice(&(l as u64).to_le_bytes());
    buf.extend_from_slice(hash);
    buf.extend_from_slice(&(sol.meta.iters as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    debug_assert_eq!(buf.len(), CACHE_HEADER);
    let mut push = |z: C| {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    };
    for x in 0..l {
        for t in [&sol.sigma.sites[x], &sol.eq.sites[x]] {
            for track in [&t.uu, &t.dd, &t.ud, &t.du] {
                track.iter().for_each(|&z| push(z));
            }
        }
        push(sol.logdet[x]);
    }
    push(C::new(sol.meta.final_delta, sol.meta.wall_seconds));
    buf
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

/// Inverse of [`encode_cache`]; rejects any mismatch in magic, version, shape or hash.
pub fn decode_cache(bytes: &[u8], params: &ModelParams, grid: &ContourGrid, twist: &TwistSpec, opts: &SolveOptions) -> Result<Solution> {
    if bytes.len() < CACHE_HEADER || &bytes[0..4] != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    if u32_at(bytes, 4) != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported version {}", u32_at(bytes, 4))));
    }
    let d = u64_at(bytes, 8) as usize;
    let l = u64_at(bytes, 16) as usize;
    if d != grid.dim() || l != params.l {
        return Err(Error::Cache(format!("shape D={d}, L={l} does not match D={}, L={}", grid.dim(), params.l)));
    }
    let hash = parameter_hash(params, grid, twist, opts);
    if bytes[24..56] != hash {
        return Err(Error::Cache("parameter hash mismatch".into()));
    }
    let iters = u32_at(bytes, 56) as usize;
    let n = grid.n_t;
    let want = CACHE_HEADER + 16 * (l * (8 * n + 1) + 1);
    if bytes.len() != want {
        return Err(Error::Cache(format!("expected {want} bytes, found {}", bytes.len())));
    }
    let mut at = CACHE_HEADER;
    let mut next = || {
        let z = C::new(f64_at(bytes, at), f64_at(bytes, at + 8));
        at += 16;
        z
    };
    let mut sig = Vec::with_capacity(l);
    let mut eq = Vec::with_capacity(l);
    let mut lds = Vec::with_capacity(l);
    for _ in 0..l {
        for dest in [&mut sig, &mut eq] {
            let mut t = Tracks::zeros(n);
            for track in [&mut t.uu, &mut t.dd, &mut t.ud, &mut t.du] {
                for z in track.iter_mut() {
                    *z = next();
                }
            }
            dest.push(t);
        }
        lds.push(next());
    }
    let tail = next();
    Ok(Solution {
        params: *params,
        grid: *grid,
        twist: *twist,
        boundary: opts.boundary,
        sigma: SelfEnergy { sites: sig },
        eq: EqualTimeGreens { sites: eq },
        logdet: lds,
        meta: SolveMeta { iters, final_delta: tail.re, wall_seconds: tail.im, trace: vec![], v_path: vec![] },
    })
}

/// Cache location for a saddle under `dir`.
pub fn cache_path(dir: &Path, hash: &[u8; 32]) -> PathBuf {
    dir.join(format!("{}.fcsg", hex(hash)))
}

/// Writes to a temporary name and renames, so readers never see a partial file.
pub fn store_cache(dir: &Path, sol: &Solution, opts: &SolveOptions) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let hash = parameter_hash(&sol.params, &sol.grid, &sol.twist, opts);
    let path = cache_path(dir, &hash);
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode_cache(sol, &hash))?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

/// `Ok(None)` when nothing is cached for these inputs.
pub fn load_cache(dir: &Path, params: &ModelParams, grid: &ContourGrid, twist: &TwistSpec, opts: &SolveOptions) -> Result<Option<Solution>> {
    let path = cache_path(dir, &parameter_hash(params, grid, twist, opts));
    match fs::read(&path) {
        Ok(bytes) => decode_cache(&bytes, params, grid, twist, opts).map(Some),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}
