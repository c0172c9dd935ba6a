//! The five subcommands. Each one loads a problem, does its work through
//! the library crate, prints a human summary, and (where asked) writes a
//! reproducible output directory: identical inputs give byte-identical
//! files, so no timestamps or wall-clock data ever land in them.

use std::fmt;
use std::fs;
use std::io;
use std::process::ExitCode;
use std::time::Instant;

use camber_core::solve::{self, CriticalPoint, SolverConfig};
use camber_core::{energy, fiber, hypo};
use camber_core::{
    AuditReport, DiscreteSpace, EnergyBreakdown, Field, ModifiedProblem, ProblemSpec,
    WeightProfile,
};
use serde::Serialize;

use crate::out::{sha256_hex, OutDir};
use crate::{bundled, probfile};
use crate::{CheckArgs, Example4Args, FiberArgs, NormsArgs, SolveArgs, Source};

/// Sample count for the piecewise weight profile; matches what the library
/// tests use and resolves H(t) well past the quadrature tolerances.
const WEIGHT_SAMPLES: usize = 256;

/// Scale samples per seed direction when `solve` exports fibering scans.
const SEED_SCAN_GRID: usize = 240;

#[derive(Debug)]
pub enum CliError {
    /// The problem file (or a flag describing it) is unusable. Exit 2.
    Input(String),
    /// The input was fine but the run failed mathematically. Exit 1.
    Math(String),
    Io(io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Math(_) => ExitCode::from(1),
            CliError::Input(_) | CliError::Io(_) => ExitCode::from(2),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Math(m) => f.write_str(m),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

struct Loaded {
    spec: ProblemSpec,
    /// Display path, or `<bundled example4>` for the built-in data.
    label: String,
    /// Hash of the file bytes, before any --epsilon override.
    sha256: String,
}

fn load(source: &Source, epsilon: Option<f64>) -> Result<Loaded, CliError> {
    let (text, label) = if source.example4 {
        (
            bundled::EXAMPLE4.to_string(),
            String::from("<bundled example4>"),
        )
    } else {
        let path = source.problem.as_ref().expect("clap enforces the source group");
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        (text, path.display().to_string())
    };
    let sha256 = sha256_hex(text.as_bytes());
    let mut spec =
        probfile::parse(&text).map_err(|e| CliError::Input(format!("{label}: {e}")))?;
    if let Some(eps) = epsilon {
        if !eps.is_finite() {
            return Err(CliError::Input(format!("--epsilon must be finite, got {eps}")));
        }
        spec.epsilon = eps;
    }
    Ok(Loaded { spec, label, sha256 })
}

fn build_weights(spec: &ProblemSpec) -> Result<WeightProfile, CliError> {
    WeightProfile::build(spec, WEIGHT_SAMPLES).map_err(|e| CliError::Input(e.to_string()))
}

fn exit(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

// ---- manifest records ----

#[derive(Serialize)]
struct MeshConfig {
    elements_per_segment: usize,
}

#[derive(Serialize)]
struct Tolerances {
    gradient: Option<f64>,
    distinctness: Option<f64>,
    quadrature: Option<f64>,
}

/// Invocation echo written into every manifest. Fields a subcommand does
/// not use serialize as null rather than inventing a value.
#[derive(Serialize)]
struct RunConfig {
    format_version: u32,
    command: &'static str,
    problem_path: String,
    problem_sha256: String,
    k: Option<usize>,
    epsilon_override: Option<f64>,
    mesh: Option<MeshConfig>,
    rng_seed: Option<u64>,
    samples: Option<usize>,
    direction: Option<usize>,
    grid: Option<usize>,
    jobs: Option<usize>,
    out_dir: Option<String>,
    tolerances: Tolerances,
}

fn base_config(loaded: &Loaded, epsilon_override: Option<f64>) -> RunConfig {
    RunConfig {
        format_version: 1,
        command: "",
        problem_path: loaded.label.clone(),
        problem_sha256: loaded.sha256.clone(),
        k: None,
        epsilon_override,
        mesh: None,
        rng_seed: None,
        samples: None,
        direction: None,
        grid: None,
        jobs: None,
        out_dir: None,
        tolerances: Tolerances {
            gradient: None,
            distinctness: None,
            quadrature: None,
        },
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("manifest data serializes");
    s.push('\n');
    s
}

// ---- report rendering ----

fn fmt_margin(x: f64) -> String {
    if x.is_nan() {
        String::from("--")
    } else if x.is_infinite() {
        String::from(if x > 0.0 { "+inf" } else { "-inf" })
    } else {
        format!("{x:.4e}")
    }
}

fn render_report(title: &str, r: &AuditReport) -> String {
    use fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    for e in &r.entries {
        let mark = if e.pass { "pass" } else { "FAIL" };
        let tag = if e.mandatory { ' ' } else { '*' };
        let _ = write!(s, "  {mark}{tag} {:<9} margin {:>11}", e.id, fmt_margin(e.margin));
        if !e.pass && e.witness_t.is_finite() {
            let _ = write!(s, "  at (t, u) = ({:.6}, {:+.6e})", e.witness_t, e.witness_u);
        }
        if !e.note.is_empty() {
            let _ = write!(s, "  [{}]", e.note);
        }
        let _ = writeln!(s);
    }
    s
}

fn mandatory_failures(reports: &[&AuditReport]) -> Vec<String> {
    let mut v = Vec::new();
    for r in reports {
        for e in &r.entries {
            if !e.pass && e.mandatory {
                v.push(e.id.clone());
            }
        }
    }
    v
}

// ---- check ----

#[derive(Serialize)]
struct CheckReport<'a> {
    format_version: u32,
    config: &'a RunConfig,
    pass: bool,
    failing: &'a [String],
    raw: &'a AuditReport,
    modified: &'a AuditReport,
}

#[derive(Serialize)]
struct CheckManifest<'a> {
    format_version: u32,
    config: &'a RunConfig,
    pass: bool,
    files: [&'static str; 2],
}

pub fn check(a: CheckArgs) -> Result<ExitCode, CliError> {
    let loaded = load(&a.source, a.epsilon)?;
    let spec = &loaded.spec;

    let raw = hypo::audit(spec, a.samples, a.seed);
    let weights = build_weights(spec)?;
    let mp = ModifiedProblem::new(spec, &weights).with_quad_tol(a.tol_quadrature);
    let modified = mp.audit(a.samples, a.seed);
    let pass = raw.pass && modified.pass;
    let failing = mandatory_failures(&[&raw, &modified]);

    println!("problem: {}  sha256 {}", loaded.label, &loaded.sha256[..12]);
    println!("samples: {}  seed: {}  epsilon: {}", a.samples, a.seed, spec.epsilon);
    println!();
    let raw_txt = render_report("structural conditions on the raw data", &raw);
    let mod_txt = render_report("derived conditions on the cutoff-modified data", &modified);
    print!("{raw_txt}");
    println!();
    print!("{mod_txt}");
    if raw.entries.iter().chain(&modified.entries).any(|e| !e.mandatory) {
        println!("  (* informational; not required for the multiplicity result)");
    }
    println!();
    if pass {
        println!("overall: pass");
    } else {
        println!("overall: FAIL ({})", failing.join(", "));
    }

    if let Some(dir) = &a.out {
        let config = RunConfig {
            command: "check",
            samples: Some(a.samples),
            rng_seed: Some(a.seed),
            out_dir: Some(dir.display().to_string()),
            tolerances: Tolerances {
                gradient: None,
                distinctness: None,
                quadrature: Some(a.tol_quadrature),
            },
            ..base_config(&loaded, a.epsilon)
        };
        let od = OutDir::stage(dir, a.force)?;
        od.write(
            "report.json",
            &to_json(&CheckReport {
                format_version: 1,
                config: &config,
                pass,
                failing: &failing,
                raw: &raw,
                modified: &modified,
            }),
        )?;
        od.write(
            "report.txt",
            &format!(
                "{raw_txt}\n{mod_txt}\noverall: {}\n",
                if pass { "pass" } else { "FAIL" }
            ),
        )?;
        od.write(
            "manifest.json",
            &to_json(&CheckManifest {
                format_version: 1,
                config: &config,
                pass,
                files: ["report.json", "report.txt"],
            }),
        )?;
        od.commit()?;
        println!("wrote {}", dir.display());
    }
    Ok(exit(pass))
}

// ---- norms ----

#[derive(Serialize)]
struct NormsManifest<'a> {
    format_version: u32,
    config: &'a RunConfig,
    pass: bool,
    report: &'a AuditReport,
}

pub fn norms(a: NormsArgs) -> Result<ExitCode, CliError> {
    let loaded = load(&a.source, None)?;
    let weights = build_weights(&loaded.spec)?;
    let space = DiscreteSpace::build(&loaded.spec, &weights, a.elements_per_segment)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let report = space.check_embeddings(a.trials, a.seed);

    println!("problem: {}  sha256 {}", loaded.label, &loaded.sha256[..12]);
    println!(
        "mesh: {} elements per segment ({} free dofs)  trials: {}  seed: {}",
        a.elements_per_segment,
        space.n_free(),
        a.trials,
        a.seed
    );
    println!();
    let txt = render_report("embedding inequalities on random mesh fields", &report);
    print!("{txt}");
    println!();
    println!("overall: {}", if report.pass { "pass" } else { "FAIL" });

    if let Some(dir) = &a.out {
        let config = RunConfig {
            command: "norms",
            mesh: Some(MeshConfig {
                elements_per_segment: a.elements_per_segment,
            }),
            samples: Some(a.trials),
            rng_seed: Some(a.seed),
            out_dir: Some(dir.display().to_string()),
            ..base_config(&loaded, None)
        };
        let od = OutDir::stage(dir, a.force)?;
        od.write("report.txt", &txt)?;
        od.write(
            "manifest.json",
            &to_json(&NormsManifest {
                format_version: 1,
                config: &config,
                pass: report.pass,
                report: &report,
            }),
        )?;
        od.commit()?;
        println!("wrote {}", dir.display());
    }
    Ok(exit(report.pass))
}

// ---- fiber ----

#[derive(Serialize)]
struct FiberManifest<'a> {
    format_version: u32,
    config: &'a RunConfig,
    root: f64,
    bracket: (f64, f64),
    upsilon_at_root: f64,
    pass: bool,
    certificate: &'a AuditReport,
}

/// Unit-energy bump sin(jπ t/T)·(t/T)(1 − t/T): the same family the solver
/// seeds from, but normalized rather than scaled to the fibering root.
fn bump_direction(space: &DiscreteSpace, j: usize) -> Result<Field<'_>, CliError> {
    if j == 0 {
        return Err(CliError::Input(String::from("--direction is 1-based")));
    }
    let t_total = space.total_time();
    let jf = j as f64;
    let mut u = space.interpolate(|t| {
        let s = t / t_total;
        let w = s * (1.0 - s);
        let angle = jf * std::f64::consts::PI * s;
        let v = angle.sin() * w;
        let dv =
            (jf * std::f64::consts::PI * angle.cos() * w + angle.sin() * (1.0 - 2.0 * s)) / t_total;
        (v, dv)
    });
    let ne = u.norm_e();
    if !(ne > 0.0) || !ne.is_finite() {
        return Err(CliError::Math(format!(
            "direction {j} interpolates to zero on this mesh; refine it or pick another"
        )));
    }
    for c in u.coeffs_mut() {
        *c /= ne;
    }
    Ok(u)
}

fn scan_csv(grid: &[f64], values: &[f64]) -> String {
    let mut csv = String::from("c,upsilon\n");
    for (c, v) in grid.iter().zip(values) {
        csv.push_str(&format!("{c},{v}\n"));
    }
    csv
}

pub fn fiber(a: FiberArgs) -> Result<ExitCode, CliError> {
    let loaded = load(&a.source, None)?;
    let weights = build_weights(&loaded.spec)?;
    let mp = ModifiedProblem::new(&loaded.spec, &weights).with_quad_tol(a.tol_quadrature);
    let space = DiscreteSpace::build(&loaded.spec, &weights, a.elements_per_segment)
        .map_err(|e| CliError::Input(e.to_string()))?;

    let unit = bump_direction(&space, a.direction)?;
    let scan = fiber::scan(&unit, &mp, a.grid)
        .map_err(|e| CliError::Math(format!("fiber scan: {e}")))?;
    let cert = fiber::monotonicity_certificate(&unit, &mp, a.grid)
        .map_err(|e| CliError::Math(format!("monotonicity certificate: {e}")))?;
    let at_root = fiber::upsilon(&unit, &mp, scan.root)
        .map_err(|e| CliError::Math(format!("fiber value at root: {e}")))?;

    println!("problem: {}  sha256 {}", loaded.label, &loaded.sha256[..12]);
    println!(
        "direction: bump {} normalized to unit energy norm  grid: {}",
        a.direction, a.grid
    );
    println!(
        "root: c = {:.12e}  bracket [{:.6e}, {:.6e}]  upsilon there {:+.3e}",
        scan.root, scan.bracket.0, scan.bracket.1, at_root
    );
    println!();
    print!("{}", render_report("fibering monotonicity certificate", &cert));
    println!();
    println!("overall: {}", if cert.pass { "pass" } else { "FAIL" });

    let config = RunConfig {
        command: "fiber",
        mesh: Some(MeshConfig {
            elements_per_segment: a.elements_per_segment,
        }),
        direction: Some(a.direction),
        grid: Some(a.grid),
        out_dir: Some(a.out.display().to_string()),
        tolerances: Tolerances {
            gradient: None,
            distinctness: None,
            quadrature: Some(a.tol_quadrature),
        },
        ..base_config(&loaded, None)
    };
    let od = OutDir::stage(&a.out, a.force)?;
    od.write("fiber.csv", &scan_csv(&scan.grid, &scan.values))?;
    od.write(
        "manifest.json",
        &to_json(&FiberManifest {
            format_version: 1,
            config: &config,
            root: scan.root,
            bracket: scan.bracket,
            upsilon_at_root: at_root,
            pass: cert.pass,
            certificate: &cert,
        }),
    )?;
    od.commit()?;
    println!("wrote {}", a.out.display());
    Ok(exit(cert.pass))
}

// ---- solve ----

#[derive(Serialize)]
struct EnergyFile {
    format_version: u32,
    index: usize,
    energy: f64,
    breakdown: EnergyBreakdown,
    norm_e: f64,
    norm_inf: f64,
    grad_dual_norm: f64,
    accepted: bool,
    trivial: bool,
    within_energy_ball: bool,
}

#[derive(Serialize)]
struct ResultEntry {
    index: usize,
    energy: f64,
    norm_e: f64,
    norm_inf: f64,
    grad_dual_norm: f64,
    accepted: bool,
    trivial: bool,
    within_energy_ball: bool,
    negative_energy: bool,
    /// Index of an earlier point this one mirrors (u ≈ -other), if any.
    mirror_of: Option<usize>,
    solution_csv: String,
    energy_json: String,
}

#[derive(Serialize)]
struct SeedEntry {
    index: usize,
    fiber_csv: Option<String>,
    root: Option<f64>,
    bracket: Option<(f64, f64)>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SolveManifest<'a> {
    format_version: u32,
    config: &'a RunConfig,
    requested: usize,
    accepted_count: usize,
    shortfall: Option<String>,
    results: &'a [ResultEntry],
    seeds: &'a [SeedEntry],
    log: &'a [String],
}

struct PointExport {
    csv_name: String,
    csv: String,
    json_name: String,
    json: String,
}

fn point_files(i: usize, p: &CriticalPoint, mp: &ModifiedProblem) -> Result<PointExport, String> {
    let mut csv = String::from("t,u,du\n");
    for (t, u, du) in p.field.sample(16) {
        csv.push_str(&format!("{t},{u},{du}\n"));
    }
    let breakdown = energy::energy(&p.field, mp)
        .map_err(|e| format!("energy breakdown for solution {i}: {e}"))?;
    Ok(PointExport {
        csv_name: format!("solution_{i:02}.csv"),
        csv,
        json_name: format!("energy_{i:02}.json"),
        json: to_json(&EnergyFile {
            format_version: 1,
            index: i,
            energy: p.energy,
            breakdown,
            norm_e: p.norm_e,
            norm_inf: p.norm_inf,
            grad_dual_norm: p.grad_norm,
            accepted: p.accepted,
            trivial: p.trivial,
            within_energy_ball: p.within_energy_ball,
        }),
    })
}

fn seed_scan(j: usize, u: &Field, mp: &ModifiedProblem) -> Result<(String, f64, (f64, f64)), String> {
    let sc = fiber::scan(u, mp, SEED_SCAN_GRID).map_err(|e| format!("seed {}: {e}", j + 1))?;
    Ok((scan_csv(&sc.grid, &sc.values), sc.root, sc.bracket))
}

/// First earlier point whose negation coincides with this one in the energy
/// norm, up to the distinctness tolerance.
fn mirror_pairs(points: &[CriticalPoint], space: &DiscreteSpace, tol: f64) -> Vec<Option<usize>> {
    let stiff = space.stiffness();
    (0..points.len())
        .map(|i| {
            (0..i).find(|&j| {
                let a = points[i].field.coeffs();
                let b = points[j].field.coeffs();
                let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                let dist = stiff.quadratic_form(&sum, &sum).max(0.0).sqrt();
                dist <= tol * points[i].norm_e.max(points[j].norm_e).max(1.0)
            })
        })
        .collect()
}

pub fn solve(a: SolveArgs) -> Result<ExitCode, CliError> {
    let started = Instant::now();
    let loaded = load(&a.source, a.epsilon)?;
    let spec = &loaded.spec;
    let weights = build_weights(spec)?;
    let mp = ModifiedProblem::new(spec, &weights).with_quad_tol(a.tol_quadrature);
    let space = DiscreteSpace::build(spec, &weights, a.elements_per_segment)
        .map_err(|e| CliError::Input(e.to_string()))?;

    println!("problem: {}  sha256 {}", loaded.label, &loaded.sha256[..12]);
    println!(
        "mesh: {} elements per segment ({} free dofs)  epsilon: {}  k: {}",
        a.elements_per_segment,
        space.n_free(),
        spec.epsilon,
        a.k
    );

    let cfg = SolverConfig {
        grad_tol: a.tol_gradient,
        distinct_tol: a.tol_distinctness,
        ..SolverConfig::default()
    };
    let res = solve::multiplicity_search(&space, &mp, a.k, &cfg)
        .map_err(|e| CliError::Math(e.to_string()))?;
    for line in &res.log {
        println!("  {line}");
    }

    let mirrors = mirror_pairs(&res.points, &space, a.tol_distinctness);

    // The search itself is sequential (deflation is order-dependent); the
    // exports below are embarrassingly parallel and index-merged, so --jobs
    // never changes the bytes written.
    let exports = wave_map(&res.points, a.jobs, |i, p| point_files(i, p, &mp));
    let n_dirs = (a.k + 2).max(4);
    let (seeds, _) = solve::seed_starts(&space, &mp, n_dirs);
    let scans = wave_map(&seeds, a.jobs, |j, u| seed_scan(j, u, &mp));

    let mut results = Vec::new();
    let mut files: Vec<(String, String)> = Vec::new();
    for (i, (p, ex)) in res.points.iter().zip(exports).enumerate() {
        let ex = ex.map_err(CliError::Input)?;
        let status = if p.trivial {
            "trivial"
        } else if p.accepted {
            "accepted"
        } else {
            "rejected"
        };
        let mirror = match mirrors[i] {
            Some(j) => format!("  mirror of #{j:02}"),
            None => String::new(),
        };
        println!(
            "  #{i:02}  energy {:+.6e}  norm_e {:.6e}  norm_inf {:.3e}  grad {:.1e}  {status}{mirror}",
            p.energy, p.norm_e, p.norm_inf, p.grad_norm
        );
        results.push(ResultEntry {
            index: i,
            energy: p.energy,
            norm_e: p.norm_e,
            norm_inf: p.norm_inf,
            grad_dual_norm: p.grad_norm,
            accepted: p.accepted,
            trivial: p.trivial,
            within_energy_ball: p.within_energy_ball,
            negative_energy: p.energy < 0.0,
            mirror_of: mirrors[i],
            solution_csv: ex.csv_name.clone(),
            energy_json: ex.json_name.clone(),
        });
        files.push((ex.csv_name, ex.csv));
        files.push((ex.json_name, ex.json));
    }

    let mut seed_entries = Vec::new();
    for (j, s) in scans.into_iter().enumerate() {
        match s {
            Ok((csv, root, bracket)) => {
                let name = format!("fiber_seed_{j:02}.csv");
                files.push((name.clone(), csv));
                seed_entries.push(SeedEntry {
                    index: j,
                    fiber_csv: Some(name),
                    root: Some(root),
                    bracket: Some(bracket),
                    error: None,
                });
            }
            Err(e) => seed_entries.push(SeedEntry {
                index: j,
                fiber_csv: None,
                root: None,
                bracket: None,
                error: Some(e),
            }),
        }
    }

    let config = RunConfig {
        command: "solve",
        k: Some(a.k),
        mesh: Some(MeshConfig {
            elements_per_segment: a.elements_per_segment,
        }),
        jobs: Some(a.jobs),
        out_dir: Some(a.out.display().to_string()),
        tolerances: Tolerances {
            gradient: Some(a.tol_gradient),
            distinctness: Some(a.tol_distinctness),
            quadrature: Some(a.tol_quadrature),
        },
        ..base_config(&loaded, a.epsilon)
    };
    let od = OutDir::stage(&a.out, a.force)?;
    for (name, contents) in &files {
        od.write(name, contents)?;
    }
    od.write(
        "manifest.json",
        &to_json(&SolveManifest {
            format_version: 1,
            config: &config,
            requested: res.requested,
            accepted_count: res.accepted_count(),
            shortfall: res.shortfall(),
            results: &results,
            seeds: &seed_entries,
            log: &res.log,
        }),
    )?;
    od.commit()?;

    println!(
        "accepted {} of {} requested ({} stationary candidates) in {:.2}s",
        res.accepted_count(),
        res.requested,
        res.points.len(),
        started.elapsed().as_secs_f64()
    );
    println!("wrote {}", a.out.display());
    match res.shortfall() {
        Some(s) => {
            println!("shortfall: {s}");
            Ok(ExitCode::from(1))
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

// ---- example4 ----

pub fn example4(a: Example4Args) -> Result<ExitCode, CliError> {
    if a.out.exists() && !a.force {
        return Err(CliError::Input(format!(
            "{} already exists; pass --force to replace it",
            a.out.display()
        )));
    }
    fs::write(&a.out, bundled::EXAMPLE4)?;
    println!("wrote {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

// ---- parallel export helper ----

/// Index-preserving parallel map: worker w takes items w, w+jobs, …, and the
/// results are merged by index, so output never depends on scheduling.
fn wave_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let mut out: Vec<Option<R>> = Vec::new();
    out.resize_with(items.len(), || None);
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                s.spawn(move || {
                    let mut local = Vec::new();
                    let mut i = w;
                    while i < items.len() {
                        local.push((i, f(i, &items[i])));
                        i += jobs;
                    }
                    local
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("export worker panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter().map(|o| o.expect("all indices visited")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wave_map_is_order_stable_across_job_counts() {
        let items: Vec<usize> = (0..23).collect();
        let one = wave_map(&items, 1, |i, &x| (i, x * x));
        for jobs in [2, 3, 8, 64] {
            assert_eq!(wave_map(&items, jobs, |i, &x| (i, x * x)), one);
        }
        assert!(wave_map(&Vec::<usize>::new(), 4, |_, &x: &usize| x).is_empty());
    }

    #[test]
    fn mirror_detection_pairs_negated_fields() {
        let spec = camber_core::example::reference();
        let weights = WeightProfile::build(&spec, 64).unwrap();
        let space = DiscreteSpace::build(&spec, &weights, 2).unwrap();
        let mp = ModifiedProblem::new(&spec, &weights);
        let u = bump_direction(&space, 1).unwrap();
        let mut v = u.clone();
        for c in v.coeffs_mut() {
            *c = -*c;
        }
        let w = bump_direction(&space, 2).unwrap();
        fn mk<'a>(field: &Field<'a>, space: &DiscreteSpace, mp: &ModifiedProblem) -> CriticalPoint<'a> {
            let g = energy::gradient(field, mp).unwrap();
            CriticalPoint {
                field: field.clone(),
                energy: 0.0,
                grad_norm: solve::dual_norm(space, &g),
                norm_e: field.norm_e(),
                norm_inf: field.norm_inf(),
                accepted: false,
                trivial: false,
                within_energy_ball: false,
            }
        }
        let pts = vec![mk(&u, &space, &mp), mk(&v, &space, &mp), mk(&w, &space, &mp)];
        let mirrors = mirror_pairs(&pts, &space, 1e-6);
        assert_eq!(mirrors, vec![None, Some(0), None]);
    }
}
