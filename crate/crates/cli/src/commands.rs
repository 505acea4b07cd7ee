use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};

use meshgnn::datagen::{enumerate_load_cases, generate_dataset, GraphSample, Split};
use meshgnn::gnn::{write_checkpoint, Checkpoint, Model};
use meshgnn::mesh::{generate_synthetic_mesh, surface_normals, Aabb, MeshGraph, MeshSummary, Point};
use meshgnn::train::{
    ablation_table, ablation_variants, benchmark_inference, evaluate, manifest_sha256, prepare_features,
    run_ablation, train_model, AblationData, EvalOptions, ModelPredictor, OraclePredictor, ZeroPredictor,
};
use meshgnn::vtk::export_vtk;

use crate::artifacts::{
    boundary_sets, import_mesh, load_checkpoint, load_data_dir, load_mesh, write_mesh, write_resolved_config,
    DataDir, Staging, CHECKPOINT, HISTORY,
};
use crate::config::RunConfig;
use crate::{Baseline, BenchArgs, Common, EvalArgs, MeshAction, PredictArgs, SimulateArgs, SplitArg, TrainArgs};

fn setup_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    Ok(())
}

fn resolve(config: Option<&Path>, common: &Common) -> anyhow::Result<RunConfig> {
    let mut c = RunConfig::load_or_default(config)?;
    c.apply_overrides(common.seed, common.threads, common.out.clone());
    setup_threads(c.threads)?;
    Ok(c)
}

fn print_summary(s: &MeshSummary) {
    println!(
        "mesh: {} nodes, {} tets, {} edges, {} faces ({} exterior), {} tumour tets, volume {:.3} mm^3",
        s.points, s.tetrahedra, s.edges, s.faces, s.exterior_faces, s.tumour_tetrahedra, s.volume_mm3
    );
}

pub fn mesh(action: MeshAction, common: &Common) -> anyhow::Result<()> {
    let out = common.out.clone().context("mesh needs --out")?;
    let mesh = match action {
        MeshAction::Gen {
            nx,
            ny,
            nz,
            spacing,
            tumour_box,
        } => {
            let tumour = tumour_box.map(|b| Aabb {
                min: [b[0], b[1], b[2]],
                max: [b[3], b[4], b[5]],
            });
            generate_synthetic_mesh(nx, ny, nz, spacing, tumour)?
        }
        MeshAction::Import { node, ele } => import_mesh(&node, &ele)?,
    };
    let stage = Staging::new(&out)?;
    let summary = write_mesh(&stage, &mesh)?;
    stage.commit()?;
    print_summary(&summary);
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let mut config = resolve(Some(&args.config), &args.common)?;
    if let Some(dir) = &args.mesh {
        config.mesh.dir = Some(dir.clone());
        config.mesh.node = None;
        config.mesh.ele = None;
        config.mesh.grid = None;
    }
    let dataset_config = config.dataset.clone().context("the config has no [dataset] section")?;
    let mesh = load_mesh(&config.mesh)?;
    let graph = MeshGraph::build(&mesh)?;
    let boundary = boundary_sets(&mesh, &config.mesh)?;
    let normals = surface_normals(&mesh)?;
    let spec = dataset_config.spec();

    if args.dry_run {
        let cases = enumerate_load_cases(&graph, &boundary, &normals, &spec, config.seed)?;
        println!("{} cases", cases.cases.len());
        return Ok(());
    }

    let out = config.out_dir()?;
    let stage = Staging::new(&out)?;
    let dataset = generate_dataset(
        &mesh,
        &graph,
        &boundary,
        &normals,
        &config.materials.table(),
        &spec,
        dataset_config.options(config.seed),
    )?;
    dataset.save(stage.path())?;
    write_mesh(&stage, &mesh)?;
    write_resolved_config(&stage, &config)?;
    stage.commit()?;
    let sizes = dataset.manifest.split_sizes();
    println!(
        "{} samples on {} nodes (train {}, validation {}, test {}) -> {}",
        dataset.samples.len(),
        mesh.node_count(),
        sizes[&Split::Train],
        sizes[&Split::Validation],
        sizes[&Split::Test],
        out.display()
    );
    Ok(())
}

fn split_of(arg: SplitArg) -> Split {
    match arg {
        SplitArg::Train => Split::Train,
        SplitArg::Validation => Split::Validation,
        SplitArg::Test => Split::Test,
    }
}

pub fn train(args: &TrainArgs) -> anyhow::Result<()> {
    let mut config = resolve(args.config.as_deref(), &args.common)?;
    if let Some(e) = args.max_epochs {
        config.train.max_epochs = e;
    }
    let out = config.out_dir()?;
    let data = load_data_dir(&args.data)?;
    let train_set = data.dataset.split(Split::Train);
    let val_set = data.dataset.split(Split::Validation);
    let std = data.dataset.manifest.standardization.as_ref();

    let stage = Staging::new(&out)?;
    let model = Model::new(config.model.config(), config.seed)?;
    let outcome = train_model(model, &data.graph, &train_set, &val_set, std, &config.train, |r| {
        eprintln!(
            "epoch {:>4}  train {:.6}  val {:.6}  lr {:.1e}",
            r.epoch, r.train_loss, r.val_loss, r.lr
        );
    })?;

    let mut history = String::new();
    for r in &outcome.history {
        history.push_str(&serde_json::to_string(r)?);
        history.push('\n');
    }
    stage.write(HISTORY, history)?;
    let ck = Checkpoint {
        model: outcome.model,
        manifest_sha256: manifest_sha256(&data.dataset.manifest),
    };
    write_checkpoint(&stage.file(CHECKPOINT), &ck)?;
    write_resolved_config(&stage, &config)?;
    stage.commit()?;
    println!(
        "trained {} epochs (best epoch {}, val loss {:.6}{}) -> {}",
        outcome.history.len(),
        outcome.best_epoch,
        outcome.best_val_loss,
        if outcome.stopped_early { ", stopped early" } else { "" },
        out.join(CHECKPOINT).display()
    );
    Ok(())
}

fn eval_options(config: &RunConfig, data: &DataDir) -> EvalOptions {
    if config.eval.free_only {
        let fixed: BTreeSet<usize> = data.dataset.manifest.fixed_nodes.iter().copied().collect();
        EvalOptions::free_nodes(config.eval.threshold_mm, &fixed)
    } else {
        EvalOptions::all_nodes(config.eval.threshold_mm)
    }
}

pub fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let mut config = resolve(args.config.as_deref(), &args.common)?;
    if let Some(t) = args.threshold_mm {
        config.eval.threshold_mm = t;
    }
    config.eval.free_only |= args.free_only;
    let data = load_data_dir(&args.data)?;
    let split = split_of(args.split);
    let samples = data.dataset.split(split);
    if samples.is_empty() {
        bail!("the {} split is empty", split.name());
    }
    let opts = eval_options(&config, &data);
    let report = match (args.baseline, &args.checkpoint) {
        (Some(Baseline::Zero), _) => evaluate(&ZeroPredictor, &samples, &opts)?,
        (Some(Baseline::Oracle), _) => evaluate(&OraclePredictor, &samples, &opts)?,
        (None, Some(path)) => {
            let ck = load_checkpoint(path, &data)?;
            let predictor = ModelPredictor {
                model: &ck.model,
                graph: &data.graph,
                standardization: data.dataset.manifest.standardization.as_ref(),
            };
            evaluate(&predictor, &samples, &opts)?
        }
        (None, None) => bail!("eval needs --checkpoint or --baseline"),
    };
    let table = report.to_table();
    print!("{table}");
    if let Some(out) = &config.out {
        let stage = Staging::new(out)?;
        stage.write("metrics.txt", &table)?;
        stage.write("metrics.json", serde_json::to_string_pretty(&report)? + "\n")?;
        write_resolved_config(&stage, &config)?;
        stage.commit()?;
    }
    Ok(())
}

fn sample_at(data: &DataDir, index: usize) -> anyhow::Result<&GraphSample> {
    data.dataset
        .samples
        .get(index)
        .with_context(|| format!("sample {index} out of range for {} samples", data.dataset.samples.len()))
}

fn points(flat: &[f64]) -> Vec<Point> {
    flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

pub fn predict(args: &PredictArgs) -> anyhow::Result<()> {
    let config = resolve(None, &args.common)?;
    let out = config.out_dir()?;
    let data = load_data_dir(&args.data)?;
    let ck = load_checkpoint(&args.checkpoint, &data)?;
    let sample = sample_at(&data, args.sample)?;
    let features = prepare_features(sample, data.dataset.manifest.standardization.as_ref());
    let pred = ck.model.predict(&features, &data.graph)?;

    let stage = Staging::new(&out)?;
    let mut csv = String::from("node,dx,dy,dz,true_dx,true_dy,true_dz\n");
    for (v, (p, y)) in pred.chunks_exact(3).zip(sample.labels.chunks_exact(3)).enumerate() {
        let _ = writeln!(csv, "{v},{},{},{},{},{},{}", p[0], p[1], p[2], y[0], y[1], y[2]);
    }
    stage.write("prediction.csv", csv)?;
    if args.vtk {
        stage.write("prediction.vtk", export_vtk(&data.mesh, &points(&pred), "predicted_displacement")?)?;
        stage.write("label.vtk", export_vtk(&data.mesh, &points(&sample.labels), "displacement")?)?;
    }
    stage.commit()?;
    let err = meshgnn::train::mean_euclidean(&pred, &sample.labels)?;
    println!(
        "sample {} (selection {}, direction {}, step {}): mean Euclidean error {:.6} mm -> {}",
        args.sample,
        sample.provenance.selection,
        sample.provenance.direction,
        sample.provenance.time_step,
        err,
        out.display()
    );
    Ok(())
}

pub fn bench(args: &BenchArgs) -> anyhow::Result<()> {
    let config = resolve(None, &args.common)?;
    let data = load_data_dir(&args.data)?;
    let ck = load_checkpoint(&args.checkpoint, &data)?;
    let sample = sample_at(&data, 0)?;
    let features = prepare_features(sample, data.dataset.manifest.standardization.as_ref());
    let report = benchmark_inference(&ck.model, &data.graph, &features, args.repeats, args.warmup)?;
    println!("{}", report.summary());
    if let Some(out) = &config.out {
        let stage = Staging::new(out)?;
        stage.write("latency.json", serde_json::to_string_pretty(&report)? + "\n")?;
        stage.commit()?;
    }
    Ok(())
}

pub fn ablate(args: &TrainArgs) -> anyhow::Result<()> {
    let mut config = resolve(args.config.as_deref(), &args.common)?;
    if let Some(e) = args.max_epochs {
        config.train.max_epochs = e;
    }
    let out = config.out_dir()?;
    let data = load_data_dir(&args.data)?;
    let (train_set, val_set, test_set) = (
        data.dataset.split(Split::Train),
        data.dataset.split(Split::Validation),
        data.dataset.split(Split::Test),
    );
    if test_set.is_empty() {
        bail!("the test split is empty");
    }
    let inputs = AblationData {
        graph: &data.graph,
        train: &train_set,
        val: &val_set,
        test: &test_set,
        standardization: data.dataset.manifest.standardization.as_ref(),
    };
    let variants = ablation_variants(&config.model.config());
    let opts = eval_options(&config, &data);
    let stage = Staging::new(&out)?;
    let rows = run_ablation(&variants, &inputs, &config.train, config.seed, &opts)?;
    let table = ablation_table(&rows);
    print!("{table}");
    stage.write("ablation.txt", &table)?;
    stage.write("ablation.json", serde_json::to_string_pretty(&rows)? + "\n")?;
    write_resolved_config(&stage, &config)?;
    stage.commit()?;
    Ok(())
}
