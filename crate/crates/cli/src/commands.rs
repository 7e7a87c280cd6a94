//! Subcommand implementations. Each reads the config and upstream artifacts
//! from the output directory and writes its own artifacts there.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use bdod_core::dod::{dod_bound_report, verify_h_identity, BoundReport, DodVerdict};
use bdod_core::geometry::{t_star, SurfaceMesh, Vec3};
use bdod_core::incident::IncidentPulse;
use bdod_core::observables::{
    field_norm_series, local_energy_series, DecayQuantity, DecayReport, VolumeRegion,
    nested_decay_fits,
};
use bdod_core::operators::{AssemblyOptions, AssemblyPlan};
use bdod_core::oracle::{default_n_max, modal_spectrum, sphere_resolvent_norm, ModalSpectrum};
use bdod_core::resolvent::{q_fit, q_fit_norms, PointSolve, QGrowthFit, SweepResult};
use bdod_core::synthesis::{
    check_omega_grid, parseval_energies, solve_frequency, sweep_from_points, synthesize_time_density_with,
    DensityHistory, SweepNorms,
};
use serde::Serialize;

use crate::cache::{write_atomic, PointCache, SolveContext};
use crate::config::{ExperimentConfig, Shape};

/// Outcome of a subcommand: verdict-style commands may fail without error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

/// Inputs shared by every subcommand.
pub struct Ctx {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub cache: Option<PathBuf>,
}

/// Full-precision float formatting for CSV: 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> anyhow::Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt17).collect();
        writeln!(text, "{}", cells.join(",")).unwrap();
    }
    write_atomic(path, text.as_bytes())
}

fn require(path: &Path, producer: &str) -> anyhow::Result<()> {
    if !path.exists() {
        bail!("missing upstream artifact {} (run `bdod {producer}` first)", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct MeshSummary {
    n_panels: usize,
    n_vertices: usize,
    total_area: f64,
    signed_volume: f64,
    diameter: f64,
    max_panel_diameter: f64,
    content_hash: String,
}

pub fn cmd_mesh(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let mesh = ctx.config.build_mesh()?;
    fs::create_dir_all(&ctx.out)?;
    write_atomic(&ctx.out.join("mesh.txt"), mesh.to_text().as_bytes())?;
    write_json(
        &ctx.out.join("mesh.json"),
        &MeshSummary {
            n_panels: mesh.n_panels(),
            n_vertices: mesh.vertices().len(),
            total_area: mesh.total_area(),
            signed_volume: mesh.signed_volume(),
            diameter: mesh.diameter(),
            max_panel_diameter: mesh.max_panel_diameter(),
            content_hash: mesh.content_hash_hex(),
        },
    )?;
    println!("mesh: {} panels, hash {}", mesh.n_panels(), mesh.content_hash_hex());
    Ok(Outcome::Pass)
}

/// Cache statistics of one sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

/// Runs the sweep of `omegas` with per-frequency caching.
pub fn run_sweep(
    mesh: &SurfaceMesh,
    pulse: &IncidentPulse,
    omegas: &[f64],
    omega0: f64,
    norms: bool,
    cache: Option<&PointCache>,
    mut progress: impl FnMut(usize, f64, bool),
) -> anyhow::Result<(SweepResult, CacheStats)> {
    check_omega_grid(omegas, omega0)?;
    let options = AssemblyOptions::default();
    let ctx = SolveContext {
        mesh,
        pulse,
        options: &options,
        omega0,
        norms,
    };
    let mode = if norms { SweepNorms::Estimate } else { SweepNorms::Skip };
    let mut stats = CacheStats::default();
    let mut plan: Option<AssemblyPlan> = None;
    let mut points: Vec<PointSolve> = Vec::with_capacity(omegas.len());
    for (i, &w) in omegas.iter().enumerate() {
        let key = ctx.key(w);
        if let Some(hit) = cache.map(|c| c.get(&key)).transpose()?.flatten() {
            stats.hits += 1;
            progress(i, w, true);
            points.push(hit);
            continue;
        }
        if plan.is_none() {
            plan = Some(AssemblyPlan::with_options(mesh, options)?);
        }
        let p = solve_frequency(plan.as_ref().unwrap(), pulse, w, omega0, mode)
            .with_context(|| format!("solve failed at omega = {w}"))?;
        if let Some(c) = cache {
            c.put(&key, &p)?;
        }
        stats.misses += 1;
        progress(i, w, false);
        points.push(p);
    }
    Ok((sweep_from_points(omegas.to_vec(), mesh.areas().to_vec(), points), stats))
}

const SWEEP_MAGIC: &[u8; 8] = b"BDODSWP1";

pub fn save_sweep(path: &Path, s: &SweepResult) -> anyhow::Result<()> {
    let n = s.weights.len();
    let mut out = Vec::with_capacity(24 + 8 * n + s.len() * (48 + 16 * n));
    out.extend_from_slice(SWEEP_MAGIC);
    out.extend_from_slice(&(s.len() as u64).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for w in &s.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for i in 0..s.len() {
        for v in [s.omegas[i], s.resolvent_norms[i], s.operator_norms[i], s.rhs_norms[i], s.solve_residuals[i]] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for z in &s.densities[i] {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    write_atomic(path, &out)
}

pub fn load_sweep(path: &Path) -> anyhow::Result<SweepResult> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut words = bytes.get(8..).unwrap_or_default().chunks_exact(8).map(|c| c.try_into().unwrap());
    if bytes.get(..8) != Some(&SWEEP_MAGIC[..]) {
        bail!("{} is not a sweep file", path.display());
    }
    let mut next = || -> anyhow::Result<[u8; 8]> { words.next().context("truncated sweep file") };
    let m = u64::from_le_bytes(next()?) as usize;
    let n = u64::from_le_bytes(next()?) as usize;
    let mut f = || -> anyhow::Result<f64> { Ok(f64::from_le_bytes(next()?)) };
    let weights = (0..n).map(|_| f()).collect::<anyhow::Result<Vec<_>>>()?;
    let mut points = Vec::with_capacity(m);
    let mut omegas = Vec::with_capacity(m);
    for _ in 0..m {
        omegas.push(f()?);
        let (resolvent_norm, operator_norm, rhs_norm, residual) = (f()?, f()?, f()?, f()?);
        let density = (0..n)
            .map(|_| Ok(bdod_core::Complex64::new(f()?, f()?)))
            .collect::<anyhow::Result<Vec<_>>>()?;
        points.push(PointSolve {
            density,
            resolvent_norm,
            operator_norm,
            rhs_norm,
            residual,
        });
    }
    if f().is_ok() {
        bail!("trailing data in {}", path.display());
    }
    Ok(sweep_from_points(omegas, weights, points))
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    mesh_hash: String,
    n_panels: usize,
    omega0: f64,
    norms_estimated: bool,
    omegas: &'a [f64],
}

pub fn cmd_sweep(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let cfg = &ctx.config;
    let s = cfg.sweep.as_ref().context("config has no [sweep] block")?;
    let mesh = cfg.build_mesh()?;
    let pulse = cfg.pulse(&mesh)?;
    let omegas = cfg.omegas()?;
    let cache = ctx.cache.as_ref().map(PointCache::new).transpose()?;
    let (sweep, stats) = run_sweep(&mesh, &pulse, &omegas, s.omega0, s.norms, cache.as_ref(), |i, w, hit| {
        eprintln!("[{}/{}] omega = {w:.6}{}", i + 1, omegas.len(), if hit { " (cached)" } else { "" });
    })?;
    fs::create_dir_all(&ctx.out)?;
    save_sweep(&ctx.out.join("sweep.bin"), &sweep)?;
    write_csv(
        &ctx.out.join("resolvent.csv"),
        "omega,resolvent_norm,operator_norm,rhs_norm,solve_residual",
        (0..sweep.len()).map(|i| {
            vec![
                sweep.omegas[i],
                sweep.resolvent_norms[i],
                sweep.operator_norms[i],
                sweep.rhs_norms[i],
                sweep.solve_residuals[i],
            ]
        }),
    )?;
    write_json(
        &ctx.out.join("sweep.json"),
        &SweepSummary {
            mesh_hash: mesh.content_hash_hex(),
            n_panels: mesh.n_panels(),
            omega0: s.omega0,
            norms_estimated: s.norms,
            omegas: &sweep.omegas,
        },
    )?;
    let total = stats.hits + stats.misses;
    println!(
        "sweep: {total} frequencies, cache hits {}/{total} ({:.0}%)",
        stats.hits,
        if total > 0 { 100.0 * stats.hits as f64 / total as f64 } else { 0.0 }
    );
    Ok(Outcome::Pass)
}

#[derive(Serialize)]
struct QfitOutput {
    fit: QGrowthFit,
    /// Same fit applied to exact unit-sphere norms on the sweep grid.
    oracle: Option<QGrowthFit>,
}

/// Reads `(omega, norm)` pairs from the first two columns of a CSV file.
pub fn read_norms_csv(path: &Path) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut omegas = Vec::new();
    let mut norms = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.chars().next().is_some_and(|c| c.is_alphabetic())) {
            continue;
        }
        let mut cells = line.split(',');
        let mut cell = || -> anyhow::Result<f64> {
            let c = cells.next().context("too few columns")?;
            c.trim().parse().with_context(|| format!("line {}: bad number {c:?}", i + 1))
        };
        omegas.push(cell()?);
        norms.push(cell()?);
    }
    Ok((omegas, norms))
}

pub fn cmd_qfit(ctx: &Ctx, injected: Option<&Path>) -> anyhow::Result<Outcome> {
    let cfg = &ctx.config;
    let omega0 = cfg.sweep.as_ref().context("config has no [sweep] block")?.omega0;
    let (fit, oracle) = if let Some(path) = injected {
        let (w, n) = read_norms_csv(path)?;
        (q_fit_norms(&w, &n, omega0)?, None)
    } else {
        let path = ctx.out.join("sweep.bin");
        require(&path, "sweep")?;
        let sweep = load_sweep(&path)?;
        let fit = q_fit(&sweep, omega0)?;
        let oracle = if cfg.mesh.shape == Shape::Sphere && cfg.mesh.radius == 1.0 {
            let c = cfg.pulse.as_ref().map_or(1.0, |p| p.c);
            let pairs: Vec<(f64, f64)> = sweep
                .omegas
                .iter()
                .filter(|&&w| w > 0.0)
                .map(|&w| {
                    let kappa = w / c;
                    let eta = bdod_core::operators::KernelParams::coupling(w, omega0);
                    Ok((w, sphere_resolvent_norm(kappa, eta, default_n_max(kappa, eta))?))
                })
                .collect::<anyhow::Result<_>>()?;
            let (w, n): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            Some(q_fit_norms(&w, &n, omega0)?)
        } else {
            None
        };
        (fit, oracle)
    };
    fs::create_dir_all(&ctx.out)?;
    println!("qfit: q_hat = {:.4}, residual = {:.4}, {} points", fit.q_hat, fit.residual, fit.n_points);
    write_json(&ctx.out.join("qfit.json"), &QfitOutput { fit, oracle })?;
    Ok(Outcome::Pass)
}

#[derive(Serialize)]
struct SynthesisSummary {
    t_start: f64,
    t_end: f64,
    n_samples: usize,
    time_energy: f64,
    freq_energy: f64,
    parseval_relative: f64,
    imag_residual: f64,
}

/// Aliasing margin for a pulse: twice its `1e-8` half duration.
pub fn signal_margin(pulse: &IncidentPulse) -> f64 {
    2.0 * pulse.half_duration(1e-8)
}

pub fn cmd_synthesize(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let cfg = &ctx.config;
    let path = ctx.out.join("sweep.bin");
    require(&path, "sweep")?;
    let sweep = load_sweep(&path)?;
    let mesh = cfg.build_mesh()?;
    let pulse = cfg.pulse(&mesh)?;
    let grid = cfg.time_grid()?;
    let history = synthesize_time_density_with(&sweep, &grid, signal_margin(&pulse))?;
    let (time_energy, freq_energy) = parseval_energies(&sweep, &history)?;
    history.save(ctx.out.join("history.bin"))?;
    let norms = history.norms();
    write_csv(
        &ctx.out.join("density_norms.csv"),
        "t,density_norm",
        norms.iter().enumerate().map(|(k, n)| vec![grid.time(k), *n]),
    )?;
    let summary = SynthesisSummary {
        t_start: grid.t_start,
        t_end: grid.t_end,
        n_samples: grid.n_samples,
        time_energy,
        freq_energy,
        parseval_relative: (time_energy - freq_energy).abs() / freq_energy.max(f64::MIN_POSITIVE),
        imag_residual: history.imag_residual,
    };
    println!(
        "synthesize: {} samples, Parseval mismatch {:.3e}, imaginary residual {:.3e}",
        grid.n_samples, summary.parseval_relative, summary.imag_residual
    );
    write_json(&ctx.out.join("synthesis.json"), &summary)?;
    Ok(Outcome::Pass)
}

fn load_history(ctx: &Ctx, mesh: &SurfaceMesh) -> anyhow::Result<DensityHistory> {
    let path = ctx.out.join("history.bin");
    require(&path, "synthesize")?;
    let h = DensityHistory::load(&path)?;
    if h.n_panels() != mesh.n_panels() {
        bail!("history has {} panels but the mesh has {}", h.n_panels(), mesh.n_panels());
    }
    Ok(h)
}

fn vec3(p: &[f64; 3]) -> Vec3 {
    Vec3::new(p[0], p[1], p[2])
}

#[derive(Serialize)]
struct DodOutput {
    t0: f64,
    verdict: DodVerdict,
    bounds: Vec<BoundReport>,
}

pub fn cmd_dod_verify(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let cfg = &ctx.config;
    let d = cfg.dod.as_ref().context("config has no [dod] block")?;
    let mesh = cfg.build_mesh()?;
    let pulse = cfg.pulse(&mesh)?;
    let history = load_history(ctx, &mesh)?;
    let t0 = cfg.observation_time(&mesh, &pulse)?;
    let probes: Vec<Vec3> = d.probes.iter().map(vec3).collect();
    let verdict = verify_h_identity(&mesh, &pulse, &history, t0, d.tau, &probes, d.tol_dod)?;
    let ts = t_star(&mesh, pulse.c);
    let bounds = [t0, t0 + 2.0]
        .iter()
        .filter(|&&t| t <= history.grid.t_end)
        .map(|&t| dod_bound_report(&history, t, d.tau, ts, d.p, d.q))
        .collect::<Result<Vec<_>, _>>()?;
    println!(
        "dod-verify: identity {:.3e}, pre-interval {:.3e}, post-support {:.3e} (tol {:.1e}) -> {}",
        verdict.maxima.identity,
        verdict.maxima.pre_interval,
        verdict.maxima.post_support,
        verdict.tol,
        if verdict.pass { "PASS" } else { "FAIL" }
    );
    let pass = verdict.pass;
    write_json(&ctx.out.join("dod.json"), &DodOutput { t0, verdict, bounds })?;
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}

#[derive(Serialize)]
pub struct DecayOutput {
    pub t0: f64,
    pub offset: f64,
    pub density_fits: Vec<DecayReport>,
    pub nondecreasing: bool,
    pub field_fits: Vec<DecayReport>,
    pub energy_fits: Vec<DecayReport>,
}

/// Nested fits `[start, end_k]` in clock time `t - T0 - offset`.
#[allow(clippy::too_many_arguments)]
pub fn nested_fits(
    times: &[f64],
    norms: &[f64],
    t0: f64,
    offset: f64,
    quantity: DecayQuantity,
    start: f64,
    ends: &[f64],
    floor: f64,
) -> anyhow::Result<Vec<DecayReport>> {
    let base = t0 + offset;
    let rights: Vec<f64> = ends.iter().map(|e| base + e).collect();
    Ok(nested_decay_fits(times, norms, t0, offset, quantity, base + start, &rights, floor)?)
}

pub fn is_nondecreasing(fits: &[DecayReport]) -> bool {
    fits.windows(2).all(|w| w[1].fitted_n >= w[0].fitted_n)
}

pub fn cmd_decay(ctx: &Ctx) -> anyhow::Result<Outcome> {
    let cfg = &ctx.config;
    let o = cfg.observables.as_ref().context("config has no [observables] block")?;
    let mesh = cfg.build_mesh()?;
    let pulse = cfg.pulse(&mesh)?;
    let history = load_history(ctx, &mesh)?;
    let t0 = cfg.observation_time(&mesh, &pulse)?;
    let region = match o.radius {
        Some(r) => Some(VolumeRegion::new(&mesh, r, o.h_vol.expect("validated"))?),
        None => None,
    };
        let offset = o.offset.unwrap_or(mesh.max_radius() / pulse.c);
    let times = history.grid.times();
    let density = history.norms();
    let density_fits = nested_fits(&times, &density, t0, offset, DecayQuantity::Norm, o.fit_start, &o.fit_ends, o.noise_floor)?;
    write_csv(
        &ctx.out.join("decay_density.csv"),
        "t,density_norm",
        times.iter().zip(&density).map(|(t, n)| vec![*t, *n]),
    )?;
    let (mut field_fits, mut energy_fits) = (Vec::new(), Vec::new());
    if let Some(region) = &region {
        // Field and energy traces on a strided subset of samples after T0.
        let sub: Vec<f64> = times
            .iter()
            .copied()
            .step_by(o.stride)
            .filter(|&t| t > t0)
            .collect();
        let field = field_norm_series(&mesh, &history, pulse.c, region, &sub, 0)?;
        let energy = local_energy_series(&mesh, &history, pulse.c, region, &sub)?;
        write_csv(
            &ctx.out.join("decay_volume.csv"),
            "t,field_norm,local_energy",
            sub.iter().zip(field.iter().zip(&energy)).map(|(t, (f, e))| vec![*t, *f, *e]),
        )?;
        field_fits = nested_fits(&sub, &field, t0, offset, DecayQuantity::Norm, o.fit_start, &o.fit_ends, o.noise_floor)?;
        energy_fits = nested_fits(&sub, &energy, t0, offset, DecayQuantity::Energy, o.fit_start, &o.fit_ends, o.noise_floor)?;
    }
    for p in &o.probes {
        let r = vec3(p);
        let tgt = bdod_core::dod::RetardedTarget::new(&mesh, r, pulse.c);
        let rows: Vec<Vec<f64>> = times
            .iter()
            .map(|&t| Ok(vec![t, tgt.eval(&history, t)?]))
            .collect::<anyhow::Result<_>>()?;
        let name = format!("decay_probe_{}_{}_{}.csv", fmt17(p[0]), fmt17(p[1]), fmt17(p[2]));
        write_csv(&ctx.out.join(name), "t,u", rows)?;
    }
    let nondecreasing = is_nondecreasing(&density_fits);
    let ns: Vec<String> = density_fits.iter().map(|f| format!("{:.3}", f.fitted_n)).collect();
    println!("decay: density fitted_n over nested windows [{}] -> {}", ns.join(", "), if nondecreasing { "PASS" } else { "FAIL" });
    write_json(
        &ctx.out.join("decay.json"),
        &DecayOutput {
            t0,
            offset,
            density_fits,
            nondecreasing,
            field_fits,
            energy_fits,
        },
    )?;
    Ok(if nondecreasing { Outcome::Pass } else { Outcome::Fail })
}

#[derive(Serialize)]
struct OracleOutput {
    spectra: Vec<ModalSpectrum>,
    resolvent_norms: Vec<f64>,
}

pub fn cmd_oracle(out: &Path, kappas: &[f64], eta: Option<f64>, n_max: Option<usize>) -> anyhow::Result<Outcome> {
    if kappas.iter().any(|k| !(*k > 0.0)) {
        bail!("wavenumbers must be positive");
    }
    let mut spectra = Vec::new();
    let mut norms = Vec::new();
    for &k in kappas {
        let e = eta.unwrap_or(k);
        let n = n_max.unwrap_or_else(|| default_n_max(k, e));
        spectra.push(modal_spectrum(k, e, n));
        norms.push(sphere_resolvent_norm(k, e, n)?);
        println!("oracle: kappa = {k}, eta = {e}, ||A^-1|| = {}", fmt17(*norms.last().unwrap()));
    }
    fs::create_dir_all(out)?;
    write_json(
        &out.join("oracle.json"),
        &OracleOutput {
            spectra,
            resolvent_norms: norms,
        },
    )?;
    Ok(Outcome::Pass)
}
