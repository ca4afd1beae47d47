//! Command implementations.

use std::fs;
use std::io::Write;
use std::path::Path;

use vn_hgcn_core::{
    augment, evaluate_model, fit, fit_plain, load_checkpoint, load_dataset, make_split,
    metrics_to_csv, perturbation_study, save_checkpoint, sweep, sweep_to_csv, AssignmentMode,
    AugmentationConfig, Error, F1Report, HeteroGraph, NodeTypeId, Result, SweepAxis,
};

use crate::args;
use crate::config::{manifest_path, resolve};

/// Writes via a temp file in the target directory plus rename, so output
/// files are never observed half-written.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn load(data: &Path) -> Result<HeteroGraph> {
    load_dataset(&manifest_path(data))
}

pub fn train(args: &args::TrainArgs) -> Result<()> {
    let cfg = resolve("train", &args.data, &args.hyper)?;
    let graph = load(&args.data)?;
    let labels = graph
        .labels()
        .ok_or_else(|| Error::data("dataset has no labels".to_string()))?;
    let split = make_split(labels, cfg.ratio, cfg.train.seed)?;
    let out = fit(&graph, &cfg.train, &split)?;

    fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    write_atomic(
        &args.out.join("metrics.csv"),
        metrics_to_csv(&out.metrics).as_bytes(),
    )?;
    save_checkpoint(&args.out.join("model.ckpt"), &out.model)?;

    let best = &out.metrics[out.best_epoch - 1];
    println!(
        "trained {} epochs; best epoch {} (val micro-F1 {:.4}, macro-F1 {:.4})",
        out.metrics.len(),
        out.best_epoch,
        best.val_micro_f1,
        best.val_macro_f1
    );
    println!("artifacts in {}", args.out.display());
    Ok(())
}

fn print_report(report: &F1Report) {
    println!("micro-F1 {:.6}", report.micro_f1);
    println!("macro-F1 {:.6}", report.macro_f1);
    for (c, m) in report.per_class.iter().enumerate() {
        println!(
            "class {c}: precision {:.4} recall {:.4} f1 {:.4} support {}",
            m.precision, m.recall, m.f1, m.support
        );
    }
}

pub fn eval(args: &args::EvalArgs) -> Result<()> {
    let graph = load(&args.data)?;
    let model = load_checkpoint(&args.checkpoint)?;
    let labels = graph
        .labels()
        .ok_or_else(|| Error::data("dataset has no labels".to_string()))?;
    let split = make_split(labels, args.ratio, args.split_seed)?;
    let mask = match args.subset.as_str() {
        "train" => &split.train,
        "val" => &split.val,
        "test" => &split.test,
        other => {
            return Err(Error::config(format!(
                "unknown subset '{other}'; valid: train, val, test"
            )))
        }
    };
    let report = evaluate_model(&graph, &model, mask)?;
    print_report(&report);
    if let Some(out) = &args.out {
        write_atomic(out, report.to_csv().as_bytes())?;
    }
    Ok(())
}

pub fn perturb(args: &args::PerturbArgs) -> Result<()> {
    let cfg = resolve("perturb", &args.data, &args.hyper)?;
    let graph = load(&args.data)?;

    let (vn_model, plain_model) = if args.train_both {
        let labels = graph
            .labels()
            .ok_or_else(|| Error::data("dataset has no labels".to_string()))?;
        let split = make_split(labels, cfg.ratio, cfg.train.seed)?;
        let vn = fit(&graph, &cfg.train, &split)?.model;
        let plain = fit_plain(&graph, &cfg.train, &split)?.model;
        save_checkpoint(&args.out.join("model_vn.ckpt"), &vn)?;
        save_checkpoint(&args.out.join("model_plain.ckpt"), &plain)?;
        (vn, plain)
    } else {
        let vn_path = args.checkpoint_vn.as_ref().ok_or_else(|| {
            Error::config("provide --checkpoint-vn and --checkpoint-plain, or --train-both".to_string())
        })?;
        let plain_path = args.checkpoint_plain.as_ref().ok_or_else(|| {
            Error::config("provide --checkpoint-plain alongside --checkpoint-vn".to_string())
        })?;
        (load_checkpoint(vn_path)?, load_checkpoint(plain_path)?)
    };

    let (vn_grid, plain_grid) = perturbation_study(
        &graph,
        &vn_model,
        &plain_model,
        args.target,
        &args.hops,
        &args.variances,
        args.noise_seed,
    )?;
    fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    write_atomic(&args.out.join("perturb_vn.csv"), vn_grid.to_csv().as_bytes())?;
    write_atomic(
        &args.out.join("perturb_plain.csv"),
        plain_grid.to_csv().as_bytes(),
    )?;
    println!(
        "perturbation grids over hops {:?} written to {}",
        args.hops,
        args.out.display()
    );
    Ok(())
}

pub fn sweep_cmd(args: &args::SweepArgs) -> Result<()> {
    let cfg = resolve("sweep", &args.data, &args.hyper)?;
    let axis: SweepAxis = args.axis.parse()?;
    if args.jobs == 0 {
        return Err(Error::config("--jobs must be at least 1".to_string()));
    }
    let graph = load(&args.data)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let rows = pool.install(|| {
        sweep(&graph, &cfg.train, axis, &args.values, &args.seeds, cfg.ratio)
    })?;

    let csv = sweep_to_csv(axis, &rows);
    fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    write_atomic(&args.out.join("sweep.csv"), csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}

pub fn augment_inspect(args: &args::AugmentInspectArgs) -> Result<()> {
    let graph = load(&args.data)?;
    let assignment = match args.assignment.as_str() {
        "uniform-random" => AssignmentMode::UniformRandom,
        "round-robin" => AssignmentMode::RoundRobin,
        other => {
            return Err(Error::config(format!(
                "unknown assignment mode '{other}'; valid: uniform-random, round-robin"
            )))
        }
    };
    let cfg = AugmentationConfig {
        n_virtual: args.n_virtual,
        central_dim: args.central_dim,
        assignment,
        seed: args.seed,
    };
    let aug = augment(&graph, &cfg)?;
    let schema = aug.graph().schema();
    println!(
        "augmented schema: {} node types ({} real + {} virtual + central)",
        schema.num_types(),
        aug.num_real_types(),
        aug.num_real_types()
    );
    for t in schema.node_types() {
        println!(
            "  type {:3} {:24} {:6} nodes  {}-d features",
            t.0,
            schema.type_name(t),
            aug.graph().node_count(t),
            aug.graph().feature_dim(t)
        );
    }
    let virtual_set: std::collections::HashSet<_> =
        aug.virtual_edge_relations().iter().copied().collect();
    for r in schema.relation_ids() {
        let def = schema.relation(r);
        println!(
            "  relation {:3} {:32} {} -> {} ({} edges){}",
            r.0,
            def.name,
            schema.type_name(def.src),
            schema.type_name(def.dst),
            aug.graph().adjacency(r).nnz(),
            if virtual_set.contains(&r) { "  [drop-edge eligible]" } else { "" }
        );
    }
    println!("assignment table (type,node,virtual):");
    for (t, assign) in aug.assignment().iter().enumerate() {
        let name = schema.type_name(NodeTypeId(t));
        for (node, &v) in assign.iter().enumerate() {
            println!("{name},{node},{v}");
        }
    }
    Ok(())
}

pub fn validate_data(args: &args::ValidateDataArgs) -> Result<()> {
    let graph = load(&args.data)?;
    graph.validate()?;
    let schema = graph.schema();
    println!("dataset valid: {} node types, {} relations", schema.num_types(), schema.num_relations());
    for t in schema.node_types() {
        println!(
            "  {:24} {:6} nodes  {}-d features",
            schema.type_name(t),
            graph.node_count(t),
            graph.feature_dim(t)
        );
    }
    for r in schema.relation_ids() {
        let def = schema.relation(r);
        println!(
            "  {:32} {} -> {}: {} edges",
            def.name,
            schema.type_name(def.src),
            schema.type_name(def.dst),
            graph.adjacency(r).nnz()
        );
    }
    if let Some(labels) = graph.labels() {
        println!(
            "  labels: {} labeled {} nodes, {} classes",
            labels.labeled_nodes().len(),
            schema.type_name(labels.node_type),
            labels.num_classes
        );
    }
    Ok(())
}
