//! Runnable experiment matrices: the block-size sweep, the modality-count
//! sweep, and paired-significance comparison of two evaluated runs. Runs
//! inside one matrix share the seed and the subject split, so the swept
//! variable is the only difference between them.

mod plot;

pub use plot::{write_bar_plot, Panel};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Modality, SliceSample};
use crate::error::{Error, Result};
use crate::metrics::{paired_t_test, MetricReport};
use crate::networks::GeneratorConfig;
use crate::training::{evaluate_generator, train, TrainConfig};

/// Train/test slice samples for one modality configuration.
pub struct SlicedDataset {
    pub train: Vec<SliceSample>,
    pub test: Vec<SliceSample>,
}

/// Supplies slice samples for a requested modality configuration. The
/// provider owns the subject split; it must hand out the same split for
/// every request so matrix runs stay comparable.
pub trait DatasetProvider: Sync {
    fn samples(
        &self,
        sources: &[Modality],
        target: Modality,
        image_size: usize,
    ) -> Result<SlicedDataset>;
}

/// Shared base configuration of a matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentBase {
    pub train: TrainConfig,
    pub gen: GeneratorConfig,
    pub sources: Vec<Modality>,
    pub target: Modality,
    pub out_dir: PathBuf,
}

#[derive(Debug)]
pub struct SweepRow {
    pub name: String,
    pub report: MetricReport,
    /// Full-scale published reference, where one exists for this row.
    pub reference: Option<&'static str>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub table_markdown: String,
    pub table_csv: String,
    pub plot_path: PathBuf,
    pub notes: Vec<String>,
}

fn run_once(
    base: &ExperimentBase,
    run_name: &str,
    gen_cfg: &GeneratorConfig,
    sources: &[Modality],
    provider: &dyn DatasetProvider,
) -> Result<MetricReport> {
    let data = provider.samples(sources, base.target, gen_cfg.image_size)?;
    let mut train_cfg = base.train.clone();
    train_cfg.out_dir = base.out_dir.join(run_name);
    let outcome = train(&train_cfg, gen_cfg, &data.train, &[])?;
    evaluate_generator(&outcome.generator, &data.test)
}

fn render_tables(rows: &[SweepRow], swept: &str) -> (String, String) {
    let mut md = format!("| {swept} | psnr | ssim | nrmse | reference |\n|---|---|---|---|---|\n");
    let mut csv = format!("{swept},psnr_mean,psnr_std,ssim_mean,ssim_std,nrmse_mean,nrmse_std\n");
    for row in rows {
        let p = row.report.psnr_stats();
        let s = row.report.ssim_stats();
        let n = row.report.nrmse_stats();
        writeln!(
            md,
            "| {} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:.4} ± {:.4} | {} |",
            row.name,
            p.mean,
            p.std,
            s.mean,
            s.std,
            n.mean,
            n.std,
            row.reference.unwrap_or("—"),
        )
        .unwrap();
        writeln!(
            csv,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            row.name, p.mean, p.std, s.mean, s.std, n.mean, n.std
        )
        .unwrap();
    }
    (md, csv)
}

fn emit_outputs(
    dir: &Path,
    rows: Vec<SweepRow>,
    swept: &str,
    notes: Vec<String>,
) -> Result<SweepOutcome> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (mut md, csv) = render_tables(&rows, swept);
    for note in &notes {
        md.push_str("\n> ");
        md.push_str(note);
        md.push('\n');
    }
    let plot_path = dir.join("plot.png");
    let metric_means: [(&str, fn(&SweepRow) -> f64); 3] = [
        ("PSNR", |r| r.report.psnr_stats().mean),
        ("SSIM", |r| r.report.ssim_stats().mean),
        ("NRMSE", |r| r.report.nrmse_stats().mean),
    ];
    let panels: Vec<Panel> = metric_means
        .into_iter()
        .map(|(title, value)| Panel {
            title: title.to_string(),
            bars: rows.iter().map(|r| (r.name.clone(), value(r))).collect(),
        })
        .collect();
    write_bar_plot(&plot_path, &panels)?;
    std::fs::write(dir.join("table.md"), &md).map_err(|e| Error::io(dir, e))?;
    std::fs::write(dir.join("table.csv"), &csv).map_err(|e| Error::io(dir, e))?;
    for row in &rows {
        row.report.write_csv(&dir.join(format!("{}_slices.csv", row.name)))?;
    }
    Ok(SweepOutcome {
        rows,
        table_markdown: md,
        table_csv: csv,
        plot_path,
        notes,
    })
}

/// One trained run per LAF block size, identical otherwise. The no-chunking
/// benchmark is the run whose block size equals the image size.
pub fn run_block_size_sweep(
    base: &ExperimentBase,
    sizes: &[usize],
    provider: &dyn DatasetProvider,
) -> Result<SweepOutcome> {
    if sizes.is_empty() {
        return Err(Error::Config("block-size sweep needs at least one size".into()));
    }
    // reject bad sizes before any training happens
    for &size in sizes {
        if size == 0 || base.gen.image_size % size != 0 {
            return Err(Error::Divisibility {
                op: "run_block_size_sweep",
                size: base.gen.image_size,
                divisor: size.max(1),
            });
        }
    }
    let dir = base.out_dir.clone();
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let name = format!("block_{size}");
        let gen_cfg = GeneratorConfig {
            laf_block_size: size,
            ..base.gen.clone()
        };
        let report = run_once(base, &name, &gen_cfg, &base.sources, provider)?;
        rows.push(SweepRow {
            name,
            report,
            reference: None,
        });
    }
    let notes = vec![
        "At full scale, quality tends to rise and then decline as blocks shrink; \
         the trend is dataset-dependent, so it is reported here, not asserted."
            .to_string(),
    ];
    emit_outputs(&dir, rows, "block_size", notes)
}

/// Published full-scale results for FLAIR synthesis (BRATS2015, 200
/// epochs); printed as context only — desk-scale runs do not reproduce
/// them.
pub const MODALITY_SWEEP_REFERENCES: [(&str, &str); 3] = [
    ("T1>FLAIR", "PSNR 23.7 ± 2.16, SSIM 0.86 ± 0.02, NRMSE 0.30 ± 0.11"),
    ("T1+T2>FLAIR", "PSNR 24.8 ± 1.85, SSIM 0.88 ± 0.02, NRMSE 0.25 ± 0.09"),
    (
        "T1+T2+T1c>FLAIR",
        "PSNR 24.93 ± 1.96, SSIM 0.87 ± 0.02, NRMSE 0.24 ± 0.11",
    ),
];

/// Incremental-input sweep: T1, then T1+T2, then T1+T2+T1c, all
/// synthesizing FLAIR. Each run differs from its predecessor by exactly
/// one added modality.
pub fn run_modality_sweep(
    base: &ExperimentBase,
    provider: &dyn DatasetProvider,
) -> Result<SweepOutcome> {
    let steps: [&[Modality]; 3] = [
        &[Modality::T1],
        &[Modality::T1, Modality::T2],
        &[Modality::T1, Modality::T2, Modality::T1c],
    ];
    let dir = base.out_dir.clone();
    let mut rows = Vec::with_capacity(steps.len());
    for (i, sources) in steps.iter().enumerate() {
        let name = format!(
            "{}>FLAIR",
            sources
                .iter()
                .map(Modality::as_str)
                .collect::<Vec<_>>()
                .join("+")
        );
        let gen_cfg = GeneratorConfig {
            modality_count: sources.len(),
            ..base.gen.clone()
        };
        let run_dir_name = name.replace('>', "_to_");
        let data_name = run_dir_name.clone();
        let report = run_once(
            &ExperimentBase {
                out_dir: base.out_dir.clone(),
                ..base.clone()
            },
            &data_name,
            &gen_cfg,
            sources,
            provider,
        )?;
        rows.push(SweepRow {
            name,
            report,
            reference: Some(MODALITY_SWEEP_REFERENCES[i].1),
        });
    }
    let notes = vec![
        "Reference columns are published full-scale results (BRATS2015, 200 epochs) \
         shown for context — not reproduced at desk scale."
            .to_string(),
    ];
    emit_outputs(&dir, rows, "inputs", notes)
}

/// Per-metric paired t-test between two evaluated runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricComparison {
    pub metric: &'static str,
    pub t: f64,
    pub p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone)]
pub struct SignificanceSummary {
    pub comparisons: Vec<MetricComparison>,
    pub rendered: String,
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Compare two reports over the identical slice set; `*` marks metrics
/// where the difference is significant at 0.05.
pub fn compare_methods(a: &MetricReport, b: &MetricReport) -> Result<SignificanceSummary> {
    if a.len() != b.len() {
        return Err(Error::Data(format!(
            "reports cover {} vs {} slices",
            a.len(),
            b.len()
        )));
    }
    for (x, y) in a.slices.iter().zip(b.slices.iter()) {
        if x.subject_id != y.subject_id || x.slice_index != y.slice_index {
            return Err(Error::Data(format!(
                "slice sets differ: {}/{} vs {}/{}",
                x.subject_id, x.slice_index, y.subject_id, y.slice_index
            )));
        }
    }
    type Getter = fn(&crate::metrics::SliceMetrics) -> f64;
    let collect = |f: Getter, r: &MetricReport| -> Vec<f64> { r.slices.iter().map(f).collect() };
    let getters: [(&'static str, Getter); 3] = [
        ("psnr", |s| s.psnr),
        ("ssim", |s| s.ssim),
        ("nrmse", |s| s.nrmse),
    ];
    let mut comparisons = Vec::new();
    for (metric, getter) in getters {
        let (t, p) = paired_t_test(&collect(getter, a), &collect(getter, b))?;
        comparisons.push(MetricComparison {
            metric,
            t,
            p,
            significant: p < SIGNIFICANCE_LEVEL,
        });
    }
    let mut rendered = String::from("metric,t,p,significant\n");
    for c in &comparisons {
        writeln!(
            rendered,
            "{},{:.6},{:.6},{}",
            c.metric,
            c.t,
            c.p,
            if c.significant { "*" } else { "" }
        )
        .unwrap();
    }
    Ok(SignificanceSummary {
        comparisons,
        rendered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::SliceMetrics;

    fn report(offset: f64, noise: &[f64]) -> MetricReport {
        MetricReport::new(
            noise
                .iter()
                .enumerate()
                .map(|(i, &e)| SliceMetrics {
                    subject_id: "s".into(),
                    slice_index: i,
                    psnr: 24.0 + offset + e,
                    ssim: 0.85 + offset / 100.0 + e / 100.0,
                    nrmse: 0.3 - offset / 100.0 + e / 200.0,
                })
                .collect(),
        )
    }

    #[test]
    fn report_vs_itself_is_not_significant() {
        let noise = [0.1, -0.2, 0.05, 0.0, 0.12, -0.07];
        let r = report(0.0, &noise);
        let summary = compare_methods(&r, &r).unwrap();
        for c in &summary.comparisons {
            assert_eq!(c.p, 1.0, "{:?}", c);
            assert!(!c.significant);
        }
    }

    #[test]
    fn constant_offset_with_noise_is_detected() {
        let noise_a = [0.10, -0.20, 0.05, 0.00, 0.12, -0.07, 0.02, -0.15];
        let noise_b = [-0.05, 0.08, -0.12, 0.03, -0.02, 0.09, -0.11, 0.06];
        let a = report(0.5, &noise_a);
        let b = report(0.0, &noise_b);
        let summary = compare_methods(&a, &b).unwrap();
        let psnr = &summary.comparisons[0];
        assert!(psnr.significant, "p = {}", psnr.p);
        assert!(summary.rendered.contains('*'));
    }

    #[test]
    fn mismatched_slice_sets_rejected() {
        let a = report(0.0, &[0.1, 0.2]);
        let mut b = report(0.0, &[0.1, 0.2]);
        b.slices[1].slice_index = 99;
        assert!(compare_methods(&a, &b).is_err());
        let short = report(0.0, &[0.1]);
        assert!(compare_methods(&a, &short).is_err());
    }

    #[test]
    fn block_sweep_rejects_bad_sizes_before_training() {
        struct NeverProvider;
        impl DatasetProvider for NeverProvider {
            fn samples(&self, _: &[Modality], _: Modality, _: usize) -> Result<SlicedDataset> {
                panic!("provider must not be consulted when sizes are invalid");
            }
        }
        let base = ExperimentBase {
            train: TrainConfig::default(),
            gen: GeneratorConfig::default(),
            sources: vec![Modality::T1, Modality::T2],
            target: Modality::Flair,
            out_dir: std::env::temp_dir().join("never"),
        };
        let err = run_block_size_sweep(&base, &[100], &NeverProvider).unwrap_err();
        assert!(matches!(err, Error::Divisibility { .. }));
    }
}
