use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use osp_core::graph::{parse_edge_list, preferential_attachment};
use osp_core::instance::{randomize_weights, read_instance, write_instance};
use osp_core::oracle::{brute_force_optimum, MAX_EXHAUSTIVE_CHECK};
use osp_core::report::{sweep_rows, write_sweep, write_trace, ResultFile};
use osp_core::search::VerifyMode;
use osp_core::{
    generate_instance, objective, solve, solve_budgeted, verify_local_optimality, BudgetConfig, EquilibriumPath, Error,
    InteractionMatrix, ProblemInstance, Result, SolverConfig, Strategy, VerifyOptions,
};
use rayon::prelude::*;
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{BenchArgs, BudgetArgs, Cli, Command, GenArgs, SolveArgs, Status, VerifyArgs};

pub fn run(cli: &Cli, threads: usize) -> Result<Status> {
    match &cli.command {
        Command::Gen(a) => gen(a, threads),
        Command::Solve(a) => solve_cmd(a, threads),
        Command::Budget(a) => budget(a, threads),
        Command::Verify(a) => verify(a),
        Command::Bench(a) => bench(a, threads),
    }
}

fn load(path: &Path) -> Result<ProblemInstance> {
    read_instance(BufReader::new(File::open(path)?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn gen(a: &GenArgs, threads: usize) -> Result<Status> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("gen", threads);
    let (edges, ids) = match (&a.edges, a.preferential) {
        (Some(path), _) => {
            let parsed = parse_edge_list(BufReader::new(File::open(path)?))?;
            manifest.inputs.push(path.clone());
            (parsed.edges, Some(parsed.ids))
        }
        (None, Some((n, m))) => {
            manifest.set("preferential", json!([n, m]));
            (preferential_attachment(n, m, a.seed)?, None)
        }
        (None, None) => {
            return Err(Error::InvalidConfig(
                "either --edges or --preferential is required".into(),
            ))
        }
    };
    let edges = if a.random_weights {
        randomize_weights(&edges, a.seed)
    } else {
        edges
    };
    let matrix = InteractionMatrix::from_edge_list(&edges, !a.directed)?;
    let inst = generate_instance(matrix, a.seed, a.profile);

    let mut out = create(&a.out)?;
    write_instance(&inst, &mut out)?;
    out.flush()?;
    manifest.outputs.push(a.out.clone());
    if let Some(ids) = ids {
        let mut idmap_path = a.out.as_os_str().to_owned();
        idmap_path.push(".idmap");
        let mut w = create(Path::new(&idmap_path))?;
        writeln!(w, "# index id")?;
        for (i, id) in ids.iter().enumerate() {
            writeln!(w, "{i} {id}")?;
        }
        w.flush()?;
        manifest.outputs.push(idmap_path.into());
    }
    manifest
        .set("profile", a.profile.name())
        .set("directed", a.directed)
        .set("random_weights", a.random_weights);
    manifest.seeds.push(a.seed);
    manifest.finish(started.elapsed());
    manifest.write(&a.out)?;
    println!(
        "wrote {} agents, {} matrix entries to {}",
        inst.n(),
        inst.matrix.nnz(),
        a.out.display()
    );
    Ok(Status::Ok)
}

fn solve_cmd(a: &SolveArgs, threads: usize) -> Result<Status> {
    let started = Instant::now();
    let inst = load(&a.instance)?;
    let config = SolverConfig {
        strategy: a.strategy,
        seed: a.seed,
        perturb_magnitude: a.perturb,
        dense_limit: a.dense_limit,
        max_phase_iterations: a.max_phase_iterations,
        slope_window: a.slope_window,
        slope_factor: a.slope_factor,
        ..SolverConfig::default()
    };
    let result = solve(&inst, &config)?;

    let mut manifest = RunManifest::new("solve", threads);
    manifest.inputs.push(a.instance.clone());
    let mut out = create(&a.out)?;
    ResultFile::from_solve(&result).write(&mut out)?;
    out.flush()?;
    manifest.outputs.push(a.out.clone());
    if let Some(path) = &a.trace_out {
        let mut w = create(path)?;
        write_trace(&result.trace, &mut w)?;
        w.flush()?;
        manifest.outputs.push(path.clone());
    }
    manifest
        .set("strategy", a.strategy.name())
        .set("perturb", a.perturb)
        .set("dense_limit", a.dense_limit)
        .set("max_phase_iterations", a.max_phase_iterations)
        .set("slope_window", a.slope_window)
        .set("slope_factor", a.slope_factor);
    manifest.seeds.push(a.seed);
    manifest.finish(started.elapsed());
    manifest.write(&a.out)?;
    println!(
        "{}: objective {:.12} (± {:.1e}), {} of {} agents lowered, {} iterations, {} mistakes",
        a.strategy,
        result.objective,
        result.objective_err,
        result.lowered(),
        inst.n(),
        result.iterations,
        result.trace.mistakes
    );
    Ok(Status::Ok)
}

fn budget(a: &BudgetArgs, threads: usize) -> Result<Status> {
    let started = Instant::now();
    let inst = load(&a.instance)?;
    if a.runs == 0 {
        return Err(Error::InvalidConfig("--runs must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..a.runs).map(|r| a.seed + r).collect();
    let base = BudgetConfig {
        k: a.k,
        batch: a.batch,
        seed: a.seed,
        perturb_magnitude: a.perturb,
        max_phase_iterations: a.max_phase_iterations,
        max_separation_iterations: None,
    };
    base.validate(inst.n())?;
    let results = seeds
        .par_iter()
        .map(|&seed| solve_budgeted(&inst, a.strategy, &BudgetConfig { seed, ..base.clone() }))
        .collect::<Result<Vec<_>>>()?;

    let mut manifest = RunManifest::new("budget", threads);
    manifest.inputs.push(a.instance.clone());
    let mut out = create(&a.out)?;
    ResultFile::from_budgeted(&inst, &results[0]).write(&mut out)?;
    out.flush()?;
    manifest.outputs.push(a.out.clone());
    if let Some(path) = &a.sweep_out {
        let rows: Vec<_> = results
            .iter()
            .zip(&seeds)
            .flat_map(|(r, &s)| sweep_rows(r, s))
            .collect();
        let mut w = create(path)?;
        write_sweep(&rows, &mut w)?;
        w.flush()?;
        manifest.outputs.push(path.clone());
    }
    manifest
        .set("strategy", a.strategy.name())
        .set("k", a.k)
        .set("batch", a.batch.to_string())
        .set("perturb", a.perturb)
        .set("max_phase_iterations", a.max_phase_iterations);
    manifest.seeds = seeds.clone();
    manifest.finish(started.elapsed());
    manifest.write(&a.out)?;
    let n = inst.n() as f64;
    for (r, seed) in results.iter().zip(&seeds) {
        println!(
            "{} seed {seed}: {} selected, average equilibrium {:.9}{}",
            a.strategy,
            r.order.len(),
            r.objective / n,
            if r.stalled { " (stalled)" } else { "" }
        );
    }
    Ok(Status::Ok)
}

fn verify(a: &VerifyArgs) -> Result<Status> {
    let inst = load(&a.instance)?;
    let file = ResultFile::read(BufReader::new(File::open(&a.result)?))?;
    let n = inst.n();
    if file.alpha.len() != n {
        println!("FAIL: result has {} agents, instance has {n}", file.alpha.len());
        return Ok(Status::VerificationFailed);
    }
    if let Some(selected) = &file.selected {
        return verify_budgeted(&inst, &file, selected);
    }

    let off_corner: Vec<usize> = (0..n)
        .filter(|&i| file.alpha[i] != inst.lower[i] && file.alpha[i] != inst.upper[i])
        .collect();
    if !off_corner.is_empty() {
        println!("FAIL: resistance not at a bound for agents {off_corner:?}");
        return Ok(Status::VerificationFailed);
    }

    let dense = EquilibriumPath::Dense { limit: a.dense_limit };
    if n <= MAX_EXHAUSTIVE_CHECK {
        println!("mode: exhaustive ({} corners)", 1u64 << n);
        let (mask, best) = brute_force_optimum(&inst)?;
        let f = objective(&inst, &file.alpha, dense)?;
        println!("objective {f:.12}, corner minimum {best:.12} (mask {mask:b})");
        // Slack for the opinion perturbation used while solving.
        if f > best + 1e-8 * n as f64 {
            let violators = local_violators(&inst, &file.alpha, a)?;
            println!("FAIL: not a global minimizer; improving flips at agents {violators:?}");
            return Ok(Status::VerificationFailed);
        }
        println!("PASS");
        return Ok(Status::Ok);
    }

    let opts = VerifyOptions {
        dense_limit: a.dense_limit,
        sample: a.sample,
        seed: a.seed,
        ..VerifyOptions::default()
    };
    let report = verify_local_optimality(&inst, &file.alpha, &opts)?;
    match report.mode {
        VerifyMode::FlipObjective => println!("mode: single-flip objective comparison"),
        VerifyMode::DenseSign => println!("mode: dense derivative signs"),
        VerifyMode::SampledSign => {
            println!("mode: spot-check ({} sampled coordinates)", report.checked.len());
            let listed: Vec<String> = report.checked.iter().map(|i| i.to_string()).collect();
            println!("sampled: {}", listed.join(" "));
        }
    }
    if report.passed() {
        println!("PASS: {} coordinates checked", report.checked.len());
        Ok(Status::Ok)
    } else {
        println!("FAIL: improving flips at agents {:?}", report.violators);
        Ok(Status::VerificationFailed)
    }
}

fn local_violators(inst: &ProblemInstance, alpha: &[f64], a: &VerifyArgs) -> Result<Vec<usize>> {
    let opts = VerifyOptions {
        dense_limit: a.dense_limit,
        ..VerifyOptions::default()
    };
    Ok(verify_local_optimality(inst, alpha, &opts)?.violators)
}

fn verify_budgeted(inst: &ProblemInstance, file: &ResultFile, selected: &[bool]) -> Result<Status> {
    println!("mode: budgeted structure");
    let Some(alpha0) = &inst.alpha0 else {
        println!("FAIL: instance has no initial resistance");
        return Ok(Status::VerificationFailed);
    };
    let k = file.budget.as_ref().map_or(usize::MAX, |b| b.k);
    let count = selected.iter().filter(|&&s| s).count();
    let mut bad = Vec::new();
    for i in 0..inst.n() {
        let a = file.alpha[i];
        let ok = if selected[i] {
            a == inst.lower[i] || a == inst.upper[i]
        } else {
            a == alpha0[i]
        };
        if !ok {
            bad.push(i);
        }
    }
    if count > k || !bad.is_empty() {
        println!("FAIL: {count} selected with budget {k}; inconsistent agents {bad:?}");
        return Ok(Status::VerificationFailed);
    }
    let path = EquilibriumPath::Iterative {
        tol: 1e-9,
        max_iterations: 100_000_000,
    };
    let f = objective(inst, &file.alpha, path)?;
    println!("PASS: {count} of at most {k} agents changed, objective {f:.12}");
    Ok(Status::Ok)
}

fn bench(a: &BenchArgs, threads: usize) -> Result<Status> {
    let inst = load(&a.instance)?;
    let strategies = if a.strategy.is_empty() {
        Strategy::ALL.to_vec()
    } else {
        a.strategy.clone()
    };
    let counts = if a.thread_counts.is_empty() {
        vec![threads]
    } else {
        a.thread_counts.clone()
    };
    let mut rows = vec!["strategy,threads,repeat,iterations,phases,mistakes,seconds".to_string()];
    for &t in &counts {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for &strategy in &strategies {
            for rep in 0..a.repeat {
                let config = SolverConfig {
                    seed: a.seed,
                    verify: false,
                    ..SolverConfig::with_strategy(strategy)
                };
                let r = pool.install(|| solve(&inst, &config))?;
                let row = format!(
                    "{},{t},{rep},{},{},{},{:.6}",
                    strategy,
                    r.iterations,
                    r.trace.phases.len(),
                    r.trace.mistakes,
                    r.wall_time.as_secs_f64()
                );
                println!("{row}");
                rows.push(row);
            }
        }
    }
    if let Some(path) = &a.out {
        std::fs::write(path, rows.join("\n") + "\n")?;
    }
    Ok(Status::Ok)
}
