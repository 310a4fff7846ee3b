use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use log::info;

use super::{CliError, RunConfig};
use crate::expr_data::{
    align_genes, dropout_rate, load_expression_matrix, load_labels, normalize_log1p, select_marker_genes,
};
use crate::metrics::{benchmark_table, evaluate, load_proportions};
use crate::model::{load_checkpoint, predict, save_checkpoint, train};
use crate::simulation::{simulate_pseudospots, SimulatedST};
use crate::tsv;

pub const SIM_EXPRESSION_FILE: &str = "simulated_expression.tsv";
pub const SIM_PROPORTIONS_FILE: &str = "simulated_proportions.tsv";
pub const CHECKPOINT_FILE: &str = "model.macd";
pub const LOSS_HISTORY_FILE: &str = "loss_history.tsv";
pub const PREDICTION_FILE: &str = "predicted_proportions.tsv";
pub const EVALUATION_FILE: &str = "evaluation.tsv";
pub const BENCHMARK_FILE: &str = "benchmark.tsv";

type CmdResult = Result<(), CliError>;

fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    let path = value
        .as_deref()
        .ok_or_else(|| CliError::invalid(format!("missing required key `{key}`")))?;
    if !path.is_file() {
        return Err(CliError::invalid(format!("{key}: file not found: {}", path.display())));
    }
    Ok(path)
}

fn prepare_output_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

pub fn cmd_simulate(cfg: &RunConfig) -> CmdResult {
    let sc_path = require(&cfg.sc_expression, "sc_expression")?;
    let labels_path = require(&cfg.sc_labels, "sc_labels")?;
    cfg.simulation.validate()?;
    prepare_output_dir(&cfg.output_dir)?;

    let sc = load_expression_matrix(sc_path)?;
    let labels = load_labels(labels_path)?;
    let sim = simulate_pseudospots(&sc, &labels, &cfg.simulation)?;
    sim.expression.write_tsv(&cfg.output_dir.join(SIM_EXPRESSION_FILE))?;
    sim.proportions.write_tsv(&cfg.output_dir.join(SIM_PROPORTIONS_FILE))?;
    println!(
        "spots={}\tgenes={}\tdropout_rate={:.6}",
        sim.expression.n_rows(),
        sim.expression.n_genes(),
        dropout_rate(&sim.expression)?
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> CmdResult {
    let sc_path = require(&cfg.sc_expression, "sc_expression")?;
    let labels_path = require(&cfg.sc_labels, "sc_labels")?;
    let st_path = require(&cfg.st_expression, "st_expression")?;
    let presimulated = match (&cfg.sim_expression, &cfg.sim_proportions) {
        (None, None) => None,
        (Some(_), Some(_)) => Some((
            require(&cfg.sim_expression, "sim_expression")?,
            require(&cfg.sim_proportions, "sim_proportions")?,
        )),
        _ => {
            return Err(CliError::invalid(
                "sim_expression and sim_proportions must be given together",
            ))
        }
    };
    cfg.model.validate()?;
    cfg.simulation.validate()?;
    prepare_output_dir(&cfg.output_dir)?;

    let sc = load_expression_matrix(sc_path)?;
    let labels = load_labels(labels_path)?;
    let st = load_expression_matrix(st_path)?;

    let panel = select_marker_genes(&normalize_log1p(&sc, cfg.target_sum)?, &labels, cfg.top_k)?;
    if panel.truncated {
        log::warn!("top_k={} exceeds the gene count; using all genes", cfg.top_k);
    }
    let (sc_aligned, st_aligned) = align_genes(&sc.select_genes(&panel.genes)?, &st)?;
    info!(
        "marker panel: {} genes, {} shared with the spatial data",
        panel.genes.len(),
        sc_aligned.n_genes()
    );

    let sim = match presimulated {
        Some((expr_path, prop_path)) => SimulatedST {
            expression: load_expression_matrix(expr_path)?.select_genes(st_aligned.gene_names())?,
            proportions: load_proportions(prop_path)?,
            composition: Vec::new(),
        },
        None => simulate_pseudospots(&sc_aligned, &labels, &cfg.simulation)?,
    };
    let sim = SimulatedST {
        expression: normalize_log1p(&sim.expression, cfg.target_sum)?,
        ..sim
    };
    let real = normalize_log1p(&st_aligned, cfg.target_sum)?;

    let mut model = train(&real, &sim, &cfg.model)?;
    model.target_sum = Some(cfg.target_sum);

    let checkpoint = cfg
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join(CHECKPOINT_FILE));
    save_checkpoint(&model, &checkpoint)?;
    let mut history = String::from("epoch\tstage1\tstage2\n");
    for (i, l) in model.loss_history.iter().enumerate() {
        writeln!(history, "{}\t{}\t{}", i + 1, l.stage1, l.stage2).unwrap();
    }
    tsv::write(&cfg.output_dir.join(LOSS_HISTORY_FILE), &history)?;
    let last = model.loss_history.last().expect("at least one epoch");
    println!(
        "epochs={}\tgenes={}\tcell_types={}\tstage1_loss={:.6}\tstage2_loss={:.6}",
        model.loss_history.len(),
        model.gene_order.len(),
        model.type_order.len(),
        last.stage1,
        last.stage2
    );
    Ok(())
}

pub fn cmd_predict(cfg: &RunConfig) -> CmdResult {
    let checkpoint = cfg
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join(CHECKPOINT_FILE));
    let checkpoint = require(&Some(checkpoint), "checkpoint")?.to_path_buf();
    let st_path = require(&cfg.st_expression, "st_expression")?;
    prepare_output_dir(&cfg.output_dir)?;

    let model = load_checkpoint(&checkpoint)?;
    let st = load_expression_matrix(st_path)?.select_genes(&model.gene_order)?;
    let st = match model.target_sum {
        Some(target) => normalize_log1p(&st, target)?,
        None => st,
    };
    let proportions = predict(&model, &st)?;
    proportions.write_tsv(&cfg.output_dir.join(PREDICTION_FILE))?;
    println!("spots={}\tcell_types={}", proportions.n_spots(), proportions.type_order().len());
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> CmdResult {
    let default_prediction = cfg.output_dir.join(PREDICTION_FILE);
    let pred_path = require(
        &Some(cfg.prediction.clone().unwrap_or(default_prediction)),
        "prediction",
    )?
    .to_path_buf();
    let truth_path = require(&cfg.truth, "truth")?;
    prepare_output_dir(&cfg.output_dir)?;

    let report = evaluate(&load_proportions(&pred_path)?, &load_proportions(truth_path)?)?;
    tsv::write(&cfg.output_dir.join(EVALUATION_FILE), &report.to_tsv_string())?;
    println!("{}", report.summary());
    Ok(())
}

pub fn cmd_benchmark(cfg: &RunConfig) -> CmdResult {
    let truth_path = require(&cfg.truth, "truth")?;
    if cfg.methods.is_empty() {
        return Err(CliError::invalid("benchmark needs at least one entry in `methods`"));
    }
    for (name, path) in &cfg.methods {
        if !path.is_file() {
            return Err(CliError::invalid(format!(
                "method `{name}`: file not found: {}",
                path.display()
            )));
        }
    }
    prepare_output_dir(&cfg.output_dir)?;

    let truth = load_proportions(truth_path)?;
    let mut table = IndexMap::new();
    for (name, path) in &cfg.methods {
        let pred = load_proportions(path).map_err(|e| CliError::invalid(format!("method `{name}`: {e}")))?;
        let report = evaluate(&pred, &truth).map_err(|e| CliError::invalid(format!("method `{name}`: {e}")))?;
        if table.insert(name.clone(), report.averages).is_some() {
            return Err(CliError::invalid(format!("method `{name}` listed twice")));
        }
    }
    let rendered = benchmark_table(&table)?;
    tsv::write(&cfg.output_dir.join(BENCHMARK_FILE), &rendered)?;
    print!("{rendered}");
    Ok(())
}
