//! Single training runs: data loading, the epoch loop and metrics output.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{resolve_data_path, ExperimentConfig, Preset, DATA_DIR_ENV};
use crate::data::{load_char_corpus, load_mnist_dir, toy_blobs, CharCorpus, LabeledSet, MnistSplit};
use crate::error::{Result, ResultExt, SimError};
use crate::nn::{TrainMode, Trainer};
use crate::rng::substream_seed;

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub epoch: u32,
    pub train_loss: f64,
    /// Test error in percent, or mean per-character cross-entropy for text.
    pub test_metric: f64,
    /// Forward, backward and update cycles summed over layers.
    pub sgd_cycles: u64,
    /// As `sgd_cycles` plus the transfer cycles.
    pub tt_cycles: u64,
    pub pulse_prob_clamps: u64,
    pub wall_seconds: Option<f64>,
}

pub enum Datasets {
    Labeled { train: LabeledSet, test: LabeledSet },
    Text(CharCorpus),
}

fn subset(set: LabeledSet, n: Option<usize>) -> Result<LabeledSet> {
    match n {
        Some(n) => set.truncated(n),
        None => Ok(set),
    }
}

/// Load the data a preset trains on. Relative paths are resolved under
/// `data_root` when given.
pub fn load_datasets(cfg: &ExperimentConfig, data_root: Option<&Path>) -> Result<Datasets> {
    let d = &cfg.data;
    match cfg.preset {
        Preset::Toy => {
            let n = &cfg.network;
            let all = toy_blobs(
                d.toy_train + d.toy_test,
                n.toy_features,
                n.toy_classes,
                substream_seed(cfg.seed, &[100]),
            )?;
            let (train, test) = all.split_at(d.toy_train)?;
            Ok(Datasets::Labeled { train, test })
        }
        Preset::FcnMnist | Preset::CnnMnist => {
            let dir = resolve_data_path(d.mnist_dir.as_deref().expect("validated"), data_root);
            let train = subset(load_mnist_dir(&dir, MnistSplit::Train)?, d.train_subset_size)?;
            let test = subset(load_mnist_dir(&dir, MnistSplit::Test)?, d.test_subset_size)?;
            Ok(Datasets::Labeled { train, test })
        }
        Preset::LstmWp => {
            let path = resolve_data_path(d.corpus_path.as_deref().expect("validated"), data_root);
            let mut c = load_char_corpus(&path, d.corpus_split())?;
            if let Some(n) = d.train_subset_size {
                if n > c.train.len() {
                    return Err(SimError::InvalidConfig(format!(
                        "train_subset_size {n} exceeds {} training characters",
                        c.train.len()
                    )));
                }
                c.train.truncate(n);
            }
            if let Some(n) = d.test_subset_size {
                if n > c.test.len() {
                    return Err(SimError::InvalidConfig(format!(
                        "test_subset_size {n} exceeds {} test characters",
                        c.test.len()
                    )));
                }
                c.test.truncate(n);
            }
            Ok(Datasets::Text(c))
        }
    }
}

/// Data root from the environment, if set.
pub fn env_data_root() -> Option<std::path::PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(Into::into)
}

/// Train and evaluate per the config, writing `config.toml`, the metrics CSV
/// and the optional plot into `cfg.output.dir`. Data paths resolve under
/// `$RPU_DATA_DIR` when it is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    run_experiment_with(cfg, env_data_root().as_deref())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, data_root: Option<&Path>) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let data = load_datasets(cfg, data_root).context(|| format!("loading data for {:?}", cfg.preset))?;
    let vocab = match &data {
        Datasets::Text(c) => Some(c.vocab.len()),
        Datasets::Labeled { .. } => None,
    };
    let spec = cfg.network_spec(vocab)?;
    let out = &cfg.output;
    fs::create_dir_all(&out.dir).map_err(|e| SimError::io(&out.dir, e))?;
    let cfg_path = out.dir.join("config.toml");
    fs::write(&cfg_path, cfg.to_toml_string()?).map_err(|e| SimError::io(&cfg_path, e))?;

    let mut trainer: Trainer<f64> = Trainer::build(spec, cfg.trainer.clone(), &cfg.hardware(), cfg.seed)
        .context(|| format!("building {:?} network in {:?} mode", cfg.preset, cfg.trainer.mode))?;

    let metrics_path = out.metrics_path();
    let mut writer = csv::Writer::from_path(&metrics_path)
        .map_err(|e| SimError::format(&metrics_path, e.to_string()))?;
    let mut records = Vec::with_capacity(cfg.trainer.epochs as usize);
    let started = Instant::now();
    for epoch in 1..=cfg.trainer.epochs {
        let (train_loss, test_metric) = match &data {
            Datasets::Labeled { train, test } => (
                trainer.train_epoch_labeled(train),
                trainer.evaluate_labeled(test),
            ),
            Datasets::Text(c) => (trainer.train_epoch_text(&c.train), trainer.evaluate_text(&c.test)),
        };
        let train_loss = train_loss.context(|| format!("epoch {epoch}"))?;
        let test_metric = test_metric.context(|| format!("evaluating epoch {epoch}"))?;
        let cycles = trainer.network().cycles();
        let rec = RunRecord {
            epoch,
            train_loss,
            test_metric,
            sgd_cycles: cycles.iter().map(|c| c.sgd_cycles()).sum(),
            tt_cycles: cycles.iter().map(|c| c.total()).sum(),
            pulse_prob_clamps: trainer.network().prob_clamps(),
            wall_seconds: out.record_wall_time.then(|| started.elapsed().as_secs_f64()),
        };
        writer
            .serialize(&rec)
            .and_then(|_| writer.flush().map_err(Into::into))
            .map_err(|e| SimError::format(&metrics_path, e.to_string()))?;
        records.push(rec);
    }
    if let Some(p) = out.plot_path() {
        let label = match cfg.preset {
            Preset::LstmWp => "test cross-entropy",
            _ => "test error (%)",
        };
        let title = format!("{:?} / {}", cfg.preset, mode_name(cfg.trainer.mode));
        fs::write(&p, learning_curve_svg(&title, label, &records)).map_err(|e| SimError::io(&p, e))?;
    }
    Ok(records)
}

pub fn mode_name(m: TrainMode) -> &'static str {
    match m {
        TrainMode::Fp => "fp",
        TrainMode::AnalogSgd => "analog_sgd",
        TrainMode::AnalogTikiTaka => "analog_tiki_taka",
    }
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| SimError::format(path, e.to_string()))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| SimError::format(path, e.to_string()))
}

/// Test metric against epoch as a standalone SVG polyline.
pub fn learning_curve_svg(title: &str, y_label: &str, records: &[RunRecord]) -> String {
    let (w, h, m) = (480.0, 320.0, 50.0);
    let ys: Vec<f64> = records.iter().map(|r| r.test_metric).collect();
    let (lo, hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0), lo.max(0.0) + 1.0) };
    let n = records.len().max(2) as f64 - 1.0;
    let pts: Vec<String> = ys
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let x = m + (w - 2.0 * m) * i as f64 / n;
            let yy = h - m - (h - 2.0 * m) * (y - lo) / (hi - lo);
            format!("{x:.1},{yy:.1}")
        })
        .collect();
    format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">
<rect width="100%" height="100%" fill="white"/>
<text x="{cx}" y="20" text-anchor="middle" font-size="13">{title}</text>
<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>
<line x1="{m}" y1="{m}" x2="{m}" y2="{b}" stroke="black"/>
<text x="{cx}" y="{xl}" text-anchor="middle">epoch (1..{ne})</text>
<text x="12" y="{cy}" transform="rotate(-90 12 {cy})" text-anchor="middle">{y_label}</text>
<text x="{lx}" y="{b}" text-anchor="end">{lo:.3}</text>
<text x="{lx}" y="{m}" text-anchor="end">{hi:.3}</text>
<polyline fill="none" stroke="steelblue" stroke-width="2" points="{pts}"/>
</svg>
"##,
        cx = w / 2.0,
        cy = h / 2.0,
        b = h - m,
        r = w - m,
        xl = h - 15.0,
        lx = m - 4.0,
        ne = records.len(),
        pts = pts.join(" "),
    )
}
