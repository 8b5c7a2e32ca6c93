use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;
use tsdist::analysis::{
    self, correlate_source, load_losses, load_matrix, pairwise_from_sketches, pairwise_matrix,
    CorrelationPair, CorrelationReport, MatrixFormat, Metric, PairwiseOptions,
};
use tsdist::ingest::load_samples;
use tsdist::layout::{export_layout, kamada_kawai_layout, load_color_map};
use tsdist::{fit_mvn, round_significant, Error, MvnParams, Result, SamplingConfig};

use crate::manifest::RunManifest;
use crate::SamplingArgs;

const SKETCH_SUFFIX: &str = ".sketch.json";

fn sampling_config(args: &SamplingArgs) -> Result<SamplingConfig> {
    let cfg = SamplingConfig {
        window_length: args.window_length,
        sample_count: args.samples,
        seed: args.seed,
        max_resample_attempts: args.max_resample_attempts,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.into(),
        source,
    })
}

fn is_sketch(path: &Path) -> bool {
    path.to_string_lossy().ends_with(SKETCH_SUFFIX)
}

fn check_unique<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::InvalidConfig(format!("dataset name '{n}' appears more than once")));
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    tsdist::svg::write_atomic(path, text.as_bytes())
}

pub fn fit(inputs: &[PathBuf], sampling: &SamplingArgs, out: &Path) -> Result<()> {
    let cfg = sampling_config(sampling)?;
    prepare_out(out)?;
    let sketches = inputs
        .par_iter()
        .map(|p| load_samples(p, &cfg).and_then(|s| fit_mvn(&s)))
        .collect::<Result<Vec<MvnParams>>>()?;
    check_unique(sketches.iter().map(MvnParams::dataset_name))?;

    let mut written = Vec::new();
    for sketch in &sketches {
        let path = out.join(format!("{}{SKETCH_SUFFIX}", sketch.dataset_name()));
        let mut text = sketch.map_values(round_significant)?.to_json()?;
        text.push('\n');
        write_text(&path, &text)?;
        log::info!("{}: wrote {}", sketch.dataset_name(), path.display());
        written.push(path);
    }

    let mut manifest = RunManifest::new("fit", json!({ "sampling": cfg }));
    manifest.add_inputs(inputs.iter().map(PathBuf::as_path))?;
    manifest.add_outputs(written.iter().map(PathBuf::as_path))?;
    manifest.write(out, "fit")
}

pub fn matrix(
    inputs: &[PathBuf],
    metric: Metric,
    sampling: &SamplingArgs,
    subsample_linkage: Option<usize>,
    out: &Path,
) -> Result<()> {
    let sketch_inputs = inputs.iter().filter(|p| is_sketch(p)).count();
    if sketch_inputs != 0 && sketch_inputs != inputs.len() {
        return Err(Error::InvalidConfig(
            "inputs must be all sketches or all datasets, not a mix".into(),
        ));
    }
    let from_sketches = sketch_inputs > 0;
    if from_sketches && metric.needs_raw_data() {
        return Err(Error::MetricNeedsRawData(metric.name().into()));
    }
    if subsample_linkage == Some(0) {
        return Err(Error::InvalidConfig("--subsample-linkage must be positive".into()));
    }
    let cfg = sampling_config(sampling)?;
    prepare_out(out)?;

    let start = Instant::now();
    let m = if from_sketches {
        let sketches = inputs
            .iter()
            .map(MvnParams::load)
            .collect::<Result<Vec<_>>>()?;
        check_unique(sketches.iter().map(MvnParams::dataset_name))?;
        pairwise_from_sketches(&sketches, metric)?
    } else {
        let samples = inputs
            .par_iter()
            .map(|p| load_samples(p, &cfg))
            .collect::<Result<Vec<_>>>()?;
        check_unique(samples.iter().map(|s| s.dataset_name()))?;
        let opts = PairwiseOptions {
            linkage_subsample: subsample_linkage,
            seed: cfg.seed,
        };
        pairwise_matrix(&samples, metric, &opts)?
    };
    let n = m.len();
    let pairs = if metric.has_zero_diagonal() {
        n * (n - 1) / 2
    } else {
        n * (n + 1) / 2
    };
    log::info!(
        "{metric}: {pairs} pairs over {n} datasets in {:.3} s",
        start.elapsed().as_secs_f64()
    );

    let m = m.map_values(round_significant)?;
    let stem = metric.name();
    let csv = out.join(format!("{stem}.matrix.csv"));
    let json_path = out.join(format!("{stem}.matrix.json"));
    let svg = out.join(format!("{stem}.heatmap.svg"));
    analysis::export_matrix(&m, &csv, MatrixFormat::Csv)?;
    analysis::export_matrix(&m, &json_path, MatrixFormat::Json)?;
    analysis::export_heatmap(&m, &svg)?;

    let config = if from_sketches {
        json!({ "metric": stem, "input_kind": "sketches" })
    } else {
        json!({
            "metric": stem,
            "input_kind": "datasets",
            "sampling": cfg,
            "subsample_linkage": subsample_linkage,
        })
    };
    let mut manifest = RunManifest::new("matrix", config);
    manifest.add_inputs(inputs.iter().map(PathBuf::as_path))?;
    manifest.add_outputs([csv.as_path(), json_path.as_path(), svg.as_path()])?;
    manifest.write(out, &format!("{stem}.matrix"))
}

pub fn layout(matrix: &Path, color_map: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let m = load_matrix(matrix)?;
    let colors = color_map.map(load_color_map).transpose()?;
    if let Some(colors) = &colors {
        for label in m.labels().iter().filter(|l| !colors.contains_key(*l)) {
            log::warn!("no color given for '{label}', using the default");
        }
    }
    prepare_out(out)?;

    let lc = kamada_kawai_layout(&m, seed)?;
    log::info!(
        "layout: stress {:.3e} after {} passes{}",
        lc.final_stress,
        lc.passes,
        if lc.converged { "" } else { " (pass limit reached)" }
    );
    let lc = lc.map_values(round_significant);
    let json_path = out.join("layout.json");
    let svg = out.join("layout.svg");
    write_text(&json_path, &lc.to_json()?)?;
    export_layout(&lc, &m, &svg, colors.as_ref())?;

    let mut manifest = RunManifest::new("layout", json!({ "seed": seed }));
    manifest.add_inputs(std::iter::once(matrix).chain(color_map))?;
    manifest.add_outputs([json_path.as_path(), svg.as_path()])?;
    manifest.write(out, "layout")
}

fn rounded_report(r: &CorrelationReport) -> CorrelationReport {
    CorrelationReport {
        pearson_r: round_significant(r.pearson_r),
        spearman_r: round_significant(r.spearman_r),
        slope: round_significant(r.slope),
        intercept: round_significant(r.intercept),
        n: r.n,
        pairs: r
            .pairs
            .iter()
            .map(|p| CorrelationPair {
                label: p.label.clone(),
                distance: round_significant(p.distance),
                loss: round_significant(p.loss),
            })
            .collect(),
    }
}

pub fn correlate(matrix: &Path, source: &str, losses: &Path, out: &Path) -> Result<()> {
    let m = load_matrix(matrix)?;
    let loss_rows = load_losses(losses)?;
    let result = correlate_source(&m, source, &loss_rows)?;
    if !result.missing.is_empty() {
        log::warn!("no loss given for: {}", result.missing.join(", "));
    }
    for (label, _) in loss_rows.iter().filter(|(l, _)| m.index_of(l).is_none()) {
        log::warn!("loss for '{label}' ignored, label not in the matrix");
    }
    prepare_out(out)?;

    let report = rounded_report(&result.report);
    log::info!(
        "source {source}: pearson r = {}, spearman r = {}, n = {}",
        report.pearson_r,
        report.spearman_r,
        report.n
    );
    let json_path = out.join("correlation.json");
    let svg = out.join("scatter.svg");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_text(&json_path, &text)?;
    analysis::export_scatter(&report, source, &svg)?;

    let mut manifest = RunManifest::new("correlate", json!({ "source": source }));
    manifest.add_inputs([matrix, losses])?;
    manifest.add_outputs([json_path.as_path(), svg.as_path()])?;
    manifest.write(out, "correlate")
}
