//! Subcommand implementations. Each writes one JSON report (embedding the
//! resolved config and the schema tag) and exits 0, or 3 when a flow is
//! flagged unconverged.

use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use serde::Serialize;

use sphere_symm::{
    classify_triple, converge_to_caps, dist_to_orbit, evaluate_t, measure_deficit, random_set,
    spectral_check, t_caps, PerturbationFamily, Schedule, SphericalSet,
};

use crate::config::{OutputSpec, ScenarioConfig};
use crate::{EXIT_NO_CONVERGENCE, EXIT_OK, SCHEMA};

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema: &'static str,
    config: &'a ScenarioConfig,
    result: T,
}

fn emit_json<T: Serialize>(
    config: &ScenarioConfig,
    out: &OutputSpec,
    result: T,
) -> anyhow::Result<()> {
    let report = Report {
        schema: SCHEMA,
        config,
        result,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    match &out.json {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn emit_csv(
    out: &OutputSpec,
    write: impl FnOnce(&mut dyn Write) -> sphere_symm::Result<()>,
) -> anyhow::Result<()> {
    if let Some(path) = &out.csv {
        let file =
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut buf = std::io::BufWriter::new(file);
        write(&mut buf)?;
    }
    Ok(())
}

pub fn triple_info(config: &ScenarioConfig, out: &OutputSpec) -> anyhow::Result<u8> {
    let triple = classify_triple(config.e1, config.e2, config.a, config.d)?;
    #[derive(Serialize)]
    struct Payload {
        triple: sphere_symm::AdmissibleTriple,
        t_caps: f64,
    }
    emit_json(
        config,
        out,
        Payload {
            t_caps: t_caps(&triple),
            triple,
        },
    )?;
    Ok(EXIT_OK)
}

pub fn spectrum(config: &ScenarioConfig, out: &OutputSpec) -> anyhow::Result<u8> {
    let triple = classify_triple(config.e1, config.e2, config.a, config.d)?;
    let report = spectral_check(&triple, config.n_max)?;
    emit_json(config, out, report)?;
    Ok(EXIT_OK)
}

pub fn verify_inequality(config: &ScenarioConfig, out: &OutputSpec) -> anyhow::Result<u8> {
    use rand::{Rng, SeedableRng};
    use rayon::prelude::*;

    #[derive(Serialize)]
    struct Row {
        seed: u64,
        e1: f64,
        e2: f64,
        a: f64,
        t_value: f64,
        t_caps: f64,
        margin: f64,
    }
    #[derive(Serialize)]
    struct Payload {
        seeds: u64,
        eps_grid: f64,
        violations: usize,
        worst_margin: f64,
        rows: Vec<Row>,
    }

    let grid = config.grid();
    let eps = grid.eps_grid();
    let rows: Vec<Row> = (0..config.seeds)
        .into_par_iter()
        .map(|i| -> anyhow::Result<Row> {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(i));
            let e1m = 0.05 + 0.9 * rng.random::<f64>();
            let e2m = 0.05 + 0.9 * rng.random::<f64>();
            let a = -0.9 + 1.8 * rng.random::<f64>();
            let s1 = random_set(e1m, rng.random(), &grid)?;
            let s2 = random_set(e2m, rng.random(), &grid)?;
            let triple = classify_triple(s1.measure(), s2.measure(), a, config.d)?;
            let t_value = evaluate_t(&s1, &s2, a)?;
            let caps = t_caps(&triple);
            Ok(Row {
                seed: i,
                e1: s1.measure(),
                e2: s2.measure(),
                a,
                t_value,
                t_caps: caps,
                margin: caps - t_value,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let violations = rows.iter().filter(|r| r.margin < -eps).count();
    let worst = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    emit_csv(out, |w| {
        writeln!(w, "seed,e1,e2,a,T_value,T_caps,margin")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.seed, r.e1, r.e2, r.a, r.t_value, r.t_caps, r.margin
            )?;
        }
        Ok(())
    })?;
    emit_json(
        config,
        out,
        Payload {
            seeds: config.seeds,
            eps_grid: eps,
            violations,
            worst_margin: worst,
            rows,
        },
    )?;
    Ok(if violations == 0 {
        EXIT_OK
    } else {
        EXIT_PRECONDITION_VIOLATED
    })
}

// A violated inequality is a failed check, reported like a precondition.
const EXIT_PRECONDITION_VIOLATED: u8 = 2;

pub fn polarize_flow(
    config: &ScenarioConfig,
    out: &OutputSpec,
    save_sets: Option<PathBuf>,
) -> anyhow::Result<u8> {
    let grid = config.grid();
    let e1 = random_set(config.e1, config.seed, &grid)?;
    let e2 = random_set(config.e2, config.seed.wrapping_add(1), &grid)?;
    let flow = converge_to_caps(
        &e1,
        &e2,
        config.a,
        Schedule::Random { seed: config.seed },
        config.max_steps,
        config.target,
    )?;

    emit_csv(out, |w| flow.write_csv(w))?;
    if let Some(prefix) = save_sets {
        let mut p1 = prefix.clone();
        p1.set_extension("e1.set");
        let mut p2 = prefix;
        p2.set_extension("e2.set");
        flow.terminal.0.save(&p1)?;
        flow.terminal.1.save(&p2)?;
    }

    #[derive(Serialize)]
    struct Payload {
        converged: bool,
        steps: usize,
        initial_t: f64,
        final_t: f64,
        initial_dist: [f64; 2],
        final_dist: [f64; 2],
    }
    let final_t = flow
        .steps
        .last()
        .map(|s| s.t_value)
        .unwrap_or(flow.initial_t);
    emit_json(
        config,
        out,
        Payload {
            converged: flow.converged,
            steps: flow.steps.len(),
            initial_t: flow.initial_t,
            final_t,
            initial_dist: flow.initial_dist,
            final_dist: flow.final_dist(),
        },
    )?;
    Ok(if flow.converged {
        EXIT_OK
    } else {
        EXIT_NO_CONVERGENCE
    })
}

pub fn distance(
    config: &ScenarioConfig,
    out: &OutputSpec,
    set1: Option<PathBuf>,
    set2: Option<PathBuf>,
) -> anyhow::Result<u8> {
    let grid = config.grid();
    let load =
        |path: Option<PathBuf>, fallback_seed: u64, e: f64| -> anyhow::Result<SphericalSet> {
            match path {
                Some(p) => Ok(SphericalSet::load(&p)?),
                None => Ok(random_set(e, fallback_seed, &grid)?),
            }
        };
    let s1 = load(set1, config.seed, config.e1)?;
    let s2 = load(set2, config.seed.wrapping_add(1), config.e2)?;
    let triple = classify_triple(s1.measure(), s2.measure(), config.a, s1.grid().dim())?;
    let result = dist_to_orbit(&s1, &s2, &triple)?;

    #[derive(Serialize)]
    struct Payload {
        measures: [f64; 2],
        distance: sphere_symm::DistanceResult,
    }
    emit_json(
        config,
        out,
        Payload {
            measures: [s1.measure(), s2.measure()],
            distance: result,
        },
    )?;
    Ok(EXIT_OK)
}

fn family_for(config: &ScenarioConfig) -> anyhow::Result<PerturbationFamily> {
    let triple = classify_triple(config.e1, config.e2, config.a, config.d)?;
    let grid = config.grid();
    Ok(if config.degree == 0 {
        PerturbationFamily::rotation(triple, grid, config.s_values.clone())?
    } else {
        PerturbationFamily::pure_harmonic(triple, grid, config.degree, config.s_values.clone())?
    })
}

pub fn expand(config: &ScenarioConfig, out: &OutputSpec) -> anyhow::Result<u8> {
    let family = family_for(config)?;
    let report = measure_deficit(&family)?;

    #[derive(Serialize)]
    struct Row {
        s: f64,
        t_value: f64,
        deficit: f64,
        quadratic_model: f64,
    }
    #[derive(Serialize)]
    struct Payload {
        degree: u32,
        t_star: f64,
        predicted_c2: f64,
        rows: Vec<Row>,
    }
    let rows: Vec<Row> = report
        .s_values
        .iter()
        .zip(report.t_values.iter().zip(&report.deficits))
        .map(|(&s, (&t, &d))| Row {
            s,
            t_value: t,
            deficit: d,
            quadratic_model: report.predicted_c2 * s * s,
        })
        .collect();
    emit_csv(out, |w| {
        writeln!(w, "s,T_value,deficit,quadratic_model")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{}",
                r.s, r.t_value, r.deficit, r.quadratic_model
            )?;
        }
        Ok(())
    })?;
    emit_json(
        config,
        out,
        Payload {
            degree: report.degree,
            t_star: report.t_star,
            predicted_c2: report.predicted_c2,
            rows,
        },
    )?;
    Ok(EXIT_OK)
}

pub fn deficit_sweep(config: &ScenarioConfig, out: &OutputSpec) -> anyhow::Result<u8> {
    let family = family_for(config)?;
    let report = measure_deficit(&family)?;
    emit_csv(out, |w| {
        writeln!(w, "s,T_value,deficit")?;
        for ((s, t), d) in report
            .s_values
            .iter()
            .zip(&report.t_values)
            .zip(&report.deficits)
        {
            writeln!(w, "{s},{t},{d}")?;
        }
        Ok(())
    })?;
    emit_json(config, out, report)?;
    Ok(EXIT_OK)
}
