//! Epoch loop, evaluation and run artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use htnet_core::nn::{softmax_cross_entropy, Adadelta, Mode, Model};
use htnet_core::perceptron::HtBackend;
use htnet_core::{derive_seed, seeded_rng};

use crate::checkpoint::{Checkpoint, EpochMetrics};
use crate::config::TrainConfig;
use crate::dataset::{shuffled_indices, Dataset, CLASSES};
use crate::error::{Error, Result};
use crate::mnist::Split;

pub const METRICS_HEADER: &str = "epoch,train_loss,test_acc,seconds";
pub const CHECKPOINT_FILE: &str = "best.htck";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const EVAL_BATCH: usize = 500;

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Result of a training run; `best` holds the weights of the most accurate epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochMetrics>,
    pub best: Checkpoint,
}

impl TrainOutcome {
    pub fn best_metrics(&self) -> EpochMetrics {
        self.best.manifest.metrics
    }
}

/// Top-1 accuracy in `[0, 1]` with dropout disabled.
pub fn evaluate(model: &Model<f32>, data: &Dataset, backend: HtBackend) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, y) = data.batch::<f32>(chunk);
        let predicted = model.predict(&x, backend)?;
        correct += predicted.iter().zip(&y).filter(|(p, t)| p == t).count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Trains from scratch; `on_epoch` sees each epoch's metrics as they are produced.
pub fn train(
    config: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    let spec = config.model_spec();
    if train_set.image_size() != spec.image_size || test_set.image_size() != spec.image_size {
        return Err(Error::Config(format!(
            "model expects {0}x{0} images",
            spec.image_size
        )));
    }
    let mut model: Model<f32> = Model::new(
        spec,
        &mut seeded_rng(derive_seed(config.seed, &[INIT_STREAM])),
    )?;
    let mut optimizer = Adadelta::new(config.adadelta());
    let mut dropout_rng = seeded_rng(derive_seed(config.seed, &[DROPOUT_STREAM]));
    let backend = HtBackend::from(config.ht_backend);

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<Checkpoint> = None;
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let lr = config.lr_at(epoch);
        let order = shuffled_indices(
            train_set.len(),
            &mut seeded_rng(derive_seed(config.seed, &[SHUFFLE_STREAM, epoch as u64])),
        );
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, y) = train_set.batch::<f32>(chunk);
            let (logits, cache) = model.forward(&x, Mode::Train(&mut dropout_rng))?;
            let (loss, grad) = softmax_cross_entropy(&logits, &y, CLASSES)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            loss_sum += loss * chunk.len() as f64;
            let grads = model.backward(&cache, &grad)?;
            optimizer.step(model.parameters_mut(), &grads, lr)?;
        }
        let test_acc = evaluate(&model, test_set, backend)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            test_acc,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&metrics);
        if best
            .as_ref()
            .map_or(true, |b| test_acc > b.manifest.metrics.test_acc)
        {
            best = Some(Checkpoint::capture(&model, metrics, config.seed));
        }
        history.push(metrics);
    }
    Ok(TrainOutcome {
        history,
        best: best.expect("at least one epoch"),
    })
}

pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in history {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.3}\n",
            m.epoch, m.train_loss, m.test_acc, m.seconds
        ));
    }
    out
}

/// Paths written by [`run`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub config: PathBuf,
    pub outcome: TrainOutcome,
}

/// Loads MNIST, trains, and writes the best checkpoint, the metrics CSV and
/// the effective configuration into `config.output_dir`. The CSV is
/// rewritten after every epoch.
pub fn run(config: &TrainConfig) -> Result<RunArtifacts> {
    run_with(config, |_| {})
}

/// [`run`] with a per-epoch observer.
pub fn run_with(
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<RunArtifacts> {
    config.validate()?;
    let dir = config.resolved_data_dir()?;
    let mut train_set = Dataset::load(&dir, Split::Train)?;
    let mut test_set = Dataset::load(&dir, Split::Test)?;
    if let Some(n) = config.train_limit {
        train_set = train_set.head(n);
    }
    if let Some(n) = config.test_limit {
        test_set = test_set.head(n);
    }
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let paths = (
        out.join(CHECKPOINT_FILE),
        out.join(METRICS_FILE),
        out.join(CONFIG_FILE),
    );
    write_file(&paths.2, config.to_json().as_bytes())?;

    let mut history = Vec::new();
    let mut io_error = None;
    let outcome = train(config, &train_set, &test_set, |m| {
        history.push(*m);
        on_epoch(m);
        if let Err(e) = write_file(&paths.1, metrics_csv(&history).as_bytes()) {
            io_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }
    outcome.best.save(&paths.0)?;
    Ok(RunArtifacts {
        checkpoint: paths.0,
        metrics: paths.1,
        config: paths.2,
        outcome,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
