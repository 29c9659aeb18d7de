//! Subcommand implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde_json::json;

use rfid_core::diagnostics::{
    homogeneity_curves_with, save_homogeneity_csv, MemberOrder,
};
use rfid_core::fitting::{
    fit_families, pick_best, save_fit_report, load_fit_report, CandidateSummary, FitOptions,
    FitReport,
};
use rfid_core::grid::{
    format_value, load_grid, load_scattered, project_scattered, save_grid, trim_margin,
    Projection,
};
use rfid_core::microstructure::{
    equivalent_grain_diameter, load_surrogate_config, sample_orientations, save_orientations,
    surrogate_stress_field, voronoi_tessellation, SurrogateConfig,
};
use rfid_core::models::{load_model, ModelRecord};
use rfid_core::rng::derive_seed;
use rfid_core::spectral::{average_periodogram, load_periodogram, save_periodogram};
use rfid_core::synthesis::{SynthesisMethod, SynthesisPlan, Synthesizer, MAX_EMBEDDING_FACTOR};
use rfid_core::{Ensemble, Family, GridField, GridSpec, WindowKind};

use crate::cuts::{cut_rows, CutKind};
use crate::manifest::{manifest_path, Manifest};
use crate::{
    usage, CliError, Command, FitArgs, GridArgs, HomogeneityArgs, MicrostructureArgs,
    PeriodogramArgs, ProjectArgs, ReportArgs, SimulateArgs,
};

type CmdResult = Result<(), CliError>;

pub fn dispatch(command: &Command, argv: &[String]) -> CmdResult {
    match command {
        Command::Simulate(a) => simulate(a, argv),
        Command::Microstructure(a) => microstructure(a, argv),
        Command::Project(a) => project(a, argv),
        Command::Periodogram(a) => periodogram(a, argv),
        Command::Fit(a) => fit(a, argv),
        Command::Homogeneity(a) => homogeneity(a, argv),
        Command::Report(a) => report(a, argv),
    }
}

fn grid_spec(g: &GridArgs) -> Result<GridSpec, CliError> {
    GridSpec::with_origin(g.nx, g.ny, g.dx, g.dy, g.origin_x, g.origin_y)
        .map_err(|e| usage(e.to_string()))
}

fn grid_json(g: &GridArgs) -> serde_json::Value {
    json!({
        "nx": g.nx, "ny": g.ny, "dx": g.dx, "dy": g.dy,
        "origin_x": g.origin_x, "origin_y": g.origin_y,
    })
}

fn require_file(path: &Path) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("input file {} does not exist", path.display())))
    }
}

fn create_dir(path: &Path) -> CmdResult {
    fs::create_dir_all(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(CliError::Compute)
}

/// Realization file name, 1-based.
pub fn realization_name(index: usize) -> String {
    format!("real_{:04}.rfg", index + 1)
}

/// Files named directly, plus `*.rfg` files of named directories in name
/// order.
fn collect_grids(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().is_some_and(|x| x == "rfg"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            require_file(p)?;
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(usage("no RFGRID (*.rfg) inputs found"));
    }
    Ok(out)
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<GridField>, CliError> {
    paths
        .par_iter()
        .map(|p| load_grid(p).map_err(CliError::from))
        .collect()
}

fn simulate(a: &SimulateArgs, argv: &[String]) -> CmdResult {
    require_file(&a.model)?;
    let spec = grid_spec(&a.grid)?;
    let method: SynthesisMethod = a.method.parse().map_err(|e: rfid_core::Error| usage(e.to_string()))?;
    if a.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    if !(1..=MAX_EMBEDDING_FACTOR).contains(&a.embedding_factor) {
        return Err(usage(format!(
            "--embedding-factor must lie in 1..={MAX_EMBEDDING_FACTOR}"
        )));
    }
    if !a.mean.is_finite() {
        return Err(usage("--mean must be finite"));
    }
    let model = load_model(&a.model)?;
    let plan = SynthesisPlan::new(model, spec)
        .with_method(method)
        .with_mean(a.mean)
        .with_seed(a.seed)
        .with_embedding_factor(a.embedding_factor);
    let synth = Synthesizer::new(plan)?;
    create_dir(&a.out)?;
    let names: Vec<PathBuf> = (0..a.count).map(|i| a.out.join(realization_name(i))).collect();
    names
        .par_iter()
        .enumerate()
        .try_for_each(|(i, path)| save_grid(&synth.realization(i as u64), path))?;
    if synth.clipped_fraction() > 0.0 {
        eprintln!(
            "note: clipped {:.3e} of the embedding eigenvalue mass",
            synth.clipped_fraction()
        );
    }

    let mut m = Manifest::new(
        "simulate",
        argv,
        json!({
            "model": ModelRecord::from_model(&model, None),
            "grid": grid_json(&a.grid),
            "mean": a.mean,
            "method": method.to_string(),
            "embedding_factor": a.embedding_factor,
            "count": a.count,
            "clipped_fraction": synth.clipped_fraction(),
        }),
    )
    .with_seed(a.seed);
    m.input(&a.model)?;
    names.iter().for_each(|p| m.output(p));
    m.write(&manifest_path(&a.out, true))?;
    println!("wrote {} realization(s) to {}", a.count, a.out.display());
    Ok(())
}

fn microstructure(a: &MicrostructureArgs, argv: &[String]) -> CmdResult {
    let spec = grid_spec(&a.grid)?;
    if a.grains == 0 || a.grains > spec.len() {
        return Err(usage(format!(
            "--grains must lie in 1..={} for this grid",
            spec.len()
        )));
    }
    if a.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let config = match &a.surrogate {
        Some(p) => {
            require_file(p)?;
            load_surrogate_config(p)?
        }
        None => SurrogateConfig::default(),
    };
    config.intra.to_model()?;
    create_dir(&a.out)?;
    let grain_dir = a.out.join("grains");
    create_dir(&grain_dir)?;

    let seed_of = |r: usize| derive_seed(a.seed, r as u64);
    let outputs: Vec<Vec<PathBuf>> = (0..a.count)
        .into_par_iter()
        .map(|r| -> rfid_core::Result<Vec<PathBuf>> {
            let geometry_seed = if a.fixed_geometry { seed_of(0) } else { seed_of(r) };
            let tess = voronoi_tessellation(a.grains, spec, geometry_seed)?;
            let orient = sample_orientations(a.grains, geometry_seed, config.orientation_law)?;
            let field = surrogate_stress_field(&tess, &orient, &config.params(seed_of(r))?)?;
            let mut written = vec![a.out.join(realization_name(r))];
            save_grid(&field, &written[0])?;
            if !a.fixed_geometry || r == 0 {
                let g = grain_dir.join(format!("grains_{:04}.rfg", r + 1));
                let o = grain_dir.join(format!("orientations_{:04}.csv", r + 1));
                save_grid(&tess.grain_field(), &g)?;
                save_orientations(&orient, &o)?;
                written.extend([g, o]);
            }
            Ok(written)
        })
        .collect::<rfid_core::Result<_>>()?;

    let (w, h) = spec.extent();
    let diameter = equivalent_grain_diameter(w * h, a.grains)?;
    let mut params = json!({
        "grains": a.grains,
        "grid": grid_json(&a.grid),
        "count": a.count,
        "fixed_geometry": a.fixed_geometry,
        "surrogate": config,
        "equivalent_grain_diameter": diameter,
    });
    if a.surrogate.is_none() {
        params["surrogate_source"] = json!("built-in defaults");
    }
    let mut m = Manifest::new("microstructure", argv, params).with_seed(a.seed);
    if let Some(p) = &a.surrogate {
        m.input(p)?;
    }
    outputs.iter().flatten().for_each(|p| m.output(p));
    m.write(&manifest_path(&a.out, true))?;
    println!(
        "wrote {} surrogate field(s) to {} (equivalent grain diameter {})",
        a.count,
        a.out.display(),
        format_value(diameter)
    );
    Ok(())
}

fn project(a: &ProjectArgs, argv: &[String]) -> CmdResult {
    require_file(&a.input)?;
    let spec = grid_spec(&a.grid)?;
    let method = match a.method.as_str() {
        "nearest" => Projection::Nearest,
        "idw" => {
            if !(a.power > 0.0 && a.power.is_finite()) || a.neighbors == 0 {
                return Err(usage("--power must be positive and --neighbors at least 1"));
            }
            Projection::InverseDistance {
                power: a.power,
                neighbors: a.neighbors,
            }
        }
        other => return Err(usage(format!("unknown projection `{other}` (nearest or idw)"))),
    };
    let data = load_scattered(&a.input)?;
    let field = project_scattered(&data, &spec, method)?;
    save_grid(&field, &a.out)?;

    let mut m = Manifest::new(
        "project",
        argv,
        json!({
            "grid": grid_json(&a.grid),
            "method": a.method,
            "power": a.power,
            "neighbors": a.neighbors,
            "points": data.len(),
        }),
    );
    m.input(&a.input)?;
    m.output(&a.out);
    m.write(&manifest_path(&a.out, false))?;
    println!("projected {} points onto {}", data.len(), a.out.display());
    Ok(())
}

fn periodogram(a: &PeriodogramArgs, argv: &[String]) -> CmdResult {
    let window: WindowKind = a.window.parse().map_err(|e: rfid_core::Error| usage(e.to_string()))?;
    if !(0.0..0.5).contains(&a.trim) {
        return Err(usage("--trim must lie in [0, 0.5)"));
    }
    let paths = collect_grids(&a.input)?;
    let fields = load_all(&paths)?;
    let trimmed: Vec<GridField> = fields
        .iter()
        .map(|f| trim_margin(f, a.trim))
        .collect::<rfid_core::Result<_>>()?;
    let labels = paths.iter().map(|p| p.display().to_string()).collect();
    let ens = Ensemble::with_labels(trimmed, labels)?;
    let p = average_periodogram(&ens, window, a.demean)?;
    save_periodogram(&p, &a.out)?;

    let mut m = Manifest::new(
        "periodogram",
        argv,
        json!({
            "window": window.name(),
            "demean": a.demean,
            "trim": a.trim,
            "n_averaged": p.n_averaged(),
            "trimmed_grid": { "nx": ens.spec().nx, "ny": ens.spec().ny },
        }),
    );
    for path in &paths {
        m.input(path)?;
    }
    m.output(&a.out);
    let mut meta = a.out.as_os_str().to_owned();
    meta.push(".meta");
    m.output(Path::new(&meta));
    m.write(&manifest_path(&a.out, false))?;
    println!(
        "averaged {} periodogram(s) into {}",
        p.n_averaged(),
        a.out.display()
    );
    Ok(())
}

fn parse_families(list: &str) -> Result<Vec<Family>, CliError> {
    let families: Vec<Family> = list
        .split(',')
        .map(|s| s.trim().parse::<Family>().map_err(|e| usage(e.to_string())))
        .collect::<Result<_, _>>()?;
    if families.is_empty() {
        return Err(usage("--family needs at least one family"));
    }
    Ok(families)
}

fn fit(a: &FitArgs, argv: &[String]) -> CmdResult {
    require_file(&a.periodogram)?;
    let families = parse_families(&a.family)?;
    let options = FitOptions {
        max_iterations: a.max_iterations,
        n_multistarts: a.multistarts,
        seed: a.seed,
        ..FitOptions::default()
    };
    options.validate().map_err(|e| usage(e.to_string()))?;
    let p = load_periodogram(&a.periodogram)?;
    let fits = fit_families(&p, &families, &options);
    let best = match pick_best(fits.iter().filter_map(|(_, r)| r.as_ref().ok())) {
        Some(b) => b.clone(),
        None => {
            let (_, first) = fits.into_iter().next().expect("families is nonempty");
            return Err(first.expect_err("no successful fit").into());
        }
    };
    let mut report = FitReport::new(&best, &options, a.units.as_deref());
    if families.len() > 1 {
        report = report.with_candidates(
            fits.iter()
                .map(|(f, r)| CandidateSummary::from_fit(*f, r))
                .collect(),
        );
    }
    save_fit_report(&report, &a.out)?;

    let mut m = Manifest::new(
        "fit",
        argv,
        json!({ "families": a.family, "options": options, "units": a.units }),
    )
    .with_seed(a.seed);
    m.input(&a.periodogram)?;
    let mut meta = a.periodogram.as_os_str().to_owned();
    meta.push(".meta");
    m.input(Path::new(&meta))?;
    m.output(&a.out);
    m.write(&manifest_path(&a.out, false))?;
    for (f, r) in &fits {
        match r {
            Ok(r) => println!(
                "{:<12} epsilon {} converged {}",
                f.name(),
                format_value(r.epsilon),
                r.converged
            ),
            Err(e) => println!("{:<12} failed: {e}", f.name()),
        }
    }
    println!("selected {} -> {}", best.family(), a.out.display());
    Ok(())
}

fn homogeneity(a: &HomogeneityArgs, argv: &[String]) -> CmdResult {
    let paths = collect_grids(&a.input)?;
    if paths.len() < 3 {
        return Err(usage(format!(
            "homogeneity needs at least 3 realizations, found {}",
            paths.len()
        )));
    }
    let fields = load_all(&paths)?;
    let ens = Ensemble::new(fields)?;
    let order = match a.shuffle_seed {
        Some(seed) => MemberOrder::Shuffled { seed },
        None => MemberOrder::Prefix,
    };
    let r = homogeneity_curves_with(&ens, order)?;
    create_dir(&a.out)?;
    let csv = a.out.join("homogeneity.csv");
    let mean = a.out.join("mean_field.rfg");
    let var = a.out.join("var_field.rfg");
    save_homogeneity_csv(&r, &csv)?;
    save_grid(&r.final_mean_field, &mean)?;
    save_grid(&r.final_var_field, &var)?;

    let fraction = |f: Option<f64>| f.map_or("n/a".to_string(), format_value);
    let mut m = Manifest::new(
        "homogeneity",
        argv,
        json!({
            "members": paths.len(),
            "order": match order { MemberOrder::Prefix => "prefix", MemberOrder::Shuffled { .. } => "shuffled" },
            "decreasing_fraction_mean": r.decreasing_fraction_mean(),
            "decreasing_fraction_var": r.decreasing_fraction_var(),
        }),
    );
    if let Some(s) = a.shuffle_seed {
        m = m.with_seed(s);
    }
    for p in &paths {
        m.input(p)?;
    }
    for p in [&csv, &mean, &var] {
        m.output(p);
    }
    m.write(&manifest_path(&a.out, true))?;
    println!(
        "K = 2..{}: decreasing steps {} (mean), {} (variance)",
        paths.len(),
        fraction(r.decreasing_fraction_mean()),
        fraction(r.decreasing_fraction_var())
    );
    Ok(())
}

fn report(a: &ReportArgs, argv: &[String]) -> CmdResult {
    require_file(&a.fit)?;
    require_file(&a.periodogram)?;
    let cuts: Vec<CutKind> = a
        .cuts
        .split(',')
        .map(|s| s.parse().map_err(usage))
        .collect::<Result<_, _>>()?;
    let offsets: Vec<i64> = a
        .offsets
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| usage(format!("bad offset `{s}`")))
        })
        .collect::<Result<_, _>>()?;
    let fit = load_fit_report(&a.fit)?;
    let model = fit.model()?;
    let p = load_periodogram(&a.periodogram)?;
    let rows = cut_rows(&p, &model, &cuts, &offsets).map_err(usage)?;

    let write = || -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(fs::File::create(&a.out)?);
        writeln!(w, "cut,fixed_frequency,frequency,empirical,fitted")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.cut,
                format_value(r.fixed_frequency),
                format_value(r.frequency),
                format_value(r.empirical),
                format_value(r.fitted)
            )?;
        }
        w.flush()
    };
    write().with_context(|| format!("writing {}", a.out.display()))?;

    let mut m = Manifest::new(
        "report",
        argv,
        json!({ "cuts": a.cuts, "offsets": offsets, "family": fit.family }),
    );
    m.input(&a.fit)?;
    m.input(&a.periodogram)?;
    m.output(&a.out);
    m.write(&manifest_path(&a.out, false))?;
    println!("wrote {} cut rows to {}", rows.len(), a.out.display());
    Ok(())
}
