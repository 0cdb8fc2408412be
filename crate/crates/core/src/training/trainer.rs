use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::{augment, resize_pair};
use super::checkpoint::{Checkpoint, RngState};
use super::schedule::{poly_lr, theoretical_cost_factor};
use super::sgd::Sgd;
use crate::arch::Model;
use crate::config::RunConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::label::LabelMap;
use crate::losses::segmentation_loss;
use crate::metrics::evaluate;
use crate::nn::{Mode, ParamKind};
use crate::tensor::Tensor;

/// Batches in one pass over `n` samples. A trailing batch of a single
/// sample is dropped, since batch norm needs more than one value per channel.
pub fn batches_per_epoch(n: usize, batch: usize) -> usize {
    if n > 1 && n % batch == 1 {
        n / batch
    } else {
        n.div_ceil(batch)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage_factor: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Learning rate of the last step.
    pub lr: f64,
    pub loss: f64,
    pub miou: Option<f64>,
    /// Training time, excluding evaluation and checkpointing.
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainingReport {
    pub epochs: Vec<EpochRecord>,
    pub theoretical_cost_factor: f64,
}

impl TrainingReport {
    pub fn train_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }

    /// Measured time against `total_epochs` epochs at the mean full-size epoch
    /// time of this run; `None` without a full-size epoch.
    pub fn measured_cost_ratio(&self, total_epochs: usize) -> Option<f64> {
        let full: Vec<f64> = self.epochs.iter().filter(|e| e.stage_factor == 1.0).map(|e| e.seconds).collect();
        if full.is_empty() {
            return None;
        }
        let per_epoch = full.iter().sum::<f64>() / full.len() as f64;
        Some(self.train_seconds() / (per_epoch * total_epochs as f64))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,stage_factor,lr,loss,mIoU,seconds,steps,batch_size\n");
        for e in &self.epochs {
            let miou = e.miou.map(|m| format!("{m:.6}")).unwrap_or_default();
            s += &format!(
                "{},{},{:.6e},{:.6},{},{:.3},{},{}\n",
                e.epoch, e.stage_factor, e.lr, e.loss, miou, e.seconds, e.steps, e.batch_size
            );
        }
        s
    }
}

pub struct Trainer {
    cfg: RunConfig,
    model: Model,
    sgd: Sgd,
    rng: ChaCha8Rng,
    epoch: usize,
    iter: usize,
    total_iters: usize,
    /// Loss of every step taken by this instance.
    pub step_losses: Vec<f32>,
}

impl Trainer {
    pub fn new(cfg: RunConfig, train_len: usize) -> Result<Self> {
        cfg.validate()?;
        if train_len == 0 {
            return Err(Error::Invalid("training set is empty".into()));
        }
        let s = &cfg.schedule;
        let total_iters = s.total_iters.unwrap_or_else(|| s.derived_total_iters(train_len));
        let model = Model::new(&cfg.network, cfg.seed)?;
        let sgd = Sgd::new(&model.store, s.momentum as f32, s.weight_decay as f32);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Trainer {
            cfg,
            model,
            sgd,
            rng,
            epoch: 0,
            iter: 0,
            total_iters,
            step_losses: Vec::new(),
        })
    }

    pub fn resume(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.config.validate()?;
        let model = ckpt.model()?;
        let s = &ckpt.config.schedule;
        let mut sgd = Sgd::new(&model.store, s.momentum as f32, s.weight_decay as f32);
        for (name, v) in &ckpt.optimizer {
            let id = model.store.find(name).ok_or_else(|| Error::Checkpoint(format!("velocity for unknown parameter {name}")))?;
            sgd.set_velocity(&model.store, id, v.data().to_vec())?;
        }
        Ok(Trainer {
            cfg: ckpt.config.clone(),
            model,
            sgd,
            rng: ckpt.rng.restore(),
            epoch: ckpt.epoch as usize,
            iter: ckpt.iter as usize,
            total_iters: ckpt.total_iters as usize,
            step_losses: Vec::new(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn total_iters(&self) -> usize {
        self.total_iters
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.cfg.schedule.total_epochs || self.iter >= self.total_iters
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let store = &self.model.store;
        let params = store.ids().map(|id| (store.name(id).to_string(), store.tensor(id).clone())).collect();
        let optimizer = store
            .ids()
            .filter(|&id| store.kind(id) == ParamKind::Trainable)
            .map(|id| {
                let t = store.tensor(id);
                let v = Tensor::new(t.shape().to_vec(), self.sgd.velocity(id).to_vec()).expect("velocity matches parameter");
                (store.name(id).to_string(), v)
            })
            .collect();
        Checkpoint {
            config: self.cfg.clone(),
            params,
            optimizer,
            rng: RngState::capture(&self.rng),
            epoch: self.epoch as u64,
            iter: self.iter as u64,
            total_iters: self.total_iters as u64,
        }
    }

    /// One forward/backward/update on a prepared batch; returns the loss.
    pub fn step(&mut self, images: &Tensor, labels: &[LabelMap]) -> Result<f32> {
        let mut g = Graph::new();
        let x = g.leaf(images.clone());
        let logits = self.model.forward(&mut g, x, Mode::Train)?;
        let loss = segmentation_loss(&mut g, logits, labels, &self.cfg.loss_spec())?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: self.epoch,
                iter: self.iter,
            });
        }
        g.backward(loss)?;
        let s = &self.cfg.schedule;
        let lr = poly_lr(self.iter, s.base_lr, s.power, self.total_iters)?;
        let updates = g.take_stat_updates();
        self.sgd.step(&mut self.model.store, &g.param_grads(), lr as f32)?;
        self.model.store.apply_stat_updates(&updates);
        self.iter += 1;
        self.step_losses.push(value);
        Ok(value)
    }

    fn reset_bn_stats(&mut self) {
        let ids: Vec<_> = self.model.store.ids().collect();
        for id in ids {
            let name = self.model.store.name(id);
            let fill = if name.ends_with(".running_mean") {
                0.0
            } else if name.ends_with(".running_var") {
                1.0
            } else {
                continue;
            };
            self.model.store.tensor_mut(id).data_mut().fill(fill);
        }
    }

    /// Augment, rescale to the stage factor and stack the given samples.
    fn prepare_batch(&mut self, data: &Dataset, idx: &[usize], factor: f64) -> Result<(Tensor, Vec<LabelMap>)> {
        let mut images = Vec::with_capacity(idx.len());
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            let s = &data.samples[i];
            let (img, lm) = augment(&s.image, &s.labels, &self.cfg.augmentation, &mut self.rng)?;
            let (img, lm) = if factor == 1.0 { (img, lm) } else { resize_pair(&img, &lm, factor)? };
            let (_, _, h, w) = img.dims4()?;
            self.cfg.network.check_input(h, w)?;
            images.push(img);
            labels.push(lm);
        }
        Ok((Tensor::concat_batch(&images)?, labels))
    }

    /// Train one epoch (no evaluation). On a non-finite loss the model is left
    /// as it was before the failing step.
    pub fn train_epoch(&mut self, data: &Dataset) -> Result<EpochRecord> {
        if data.num_classes() != self.cfg.network.num_classes {
            return Err(Error::config(
                "network.num_classes",
                format!("{} classes, dataset has {}", self.cfg.network.num_classes, data.num_classes()),
            ));
        }
        let start = Instant::now();
        let sched = self.cfg.schedule.clone();
        let stage_idx = sched.stage_index(self.epoch);
        let stage = sched.stages[stage_idx];
        if sched.reset_bn_stats_on_stage_change && stage_idx > 0 && stage.start_epoch == self.epoch {
            self.reset_bn_stats();
        }
        let bs = sched.batch_size(self.epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        order.truncate(if batches_per_epoch(data.len(), bs) * bs < data.len() { data.len() - 1 } else { data.len() });
        let (mut loss_sum, mut steps, mut lr) = (0.0f64, 0usize, 0.0f64);
        for chunk in order.chunks(bs) {
            if self.iter >= self.total_iters {
                break;
            }
            let (images, labels) = self.prepare_batch(data, chunk, stage.resize_factor)?;
            lr = poly_lr(self.iter, sched.base_lr, sched.power, self.total_iters)?;
            loss_sum += self.step(&images, &labels)? as f64;
            steps += 1;
        }
        let record = EpochRecord {
            epoch: self.epoch,
            stage_factor: stage.resize_factor,
            batch_size: bs,
            steps,
            lr,
            loss: if steps > 0 { loss_sum / steps as f64 } else { f64::NAN },
            miou: None,
            seconds: start.elapsed().as_secs_f64(),
        };
        self.epoch += 1;
        Ok(record)
    }
}

/// Run (or continue) training to the end of the schedule. With `out_dir`, a
/// checkpoint and `report.csv` are written after every epoch, and a
/// `diagnostic.rgpn` checkpoint if the loss becomes non-finite.
pub fn train(
    trainer: &mut Trainer,
    train: &Dataset,
    val: Option<&Dataset>,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainingReport> {
    let sched = &trainer.cfg.schedule;
    let mut report = TrainingReport {
        epochs: Vec::new(),
        theoretical_cost_factor: theoretical_cost_factor(&sched.stages, sched.total_epochs)?,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    while !trainer.is_finished() {
        let mut record = match trainer.train_epoch(train) {
            Ok(r) => r,
            Err(e @ Error::NonFiniteLoss { .. }) => {
                if let Some(dir) = out_dir {
                    trainer.checkpoint().save(&dir.join("diagnostic.rgpn"))?;
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        if let Some(v) = val {
            record.miou = Some(evaluate(trainer.model(), v, &[1.0], false)?.miou);
        }
        on_epoch(&record);
        report.epochs.push(record);
        if let Some(dir) = out_dir {
            trainer.checkpoint().save(&dir.join(format!("epoch_{:03}.rgpn", trainer.epoch)))?;
            let csv = dir.join("report.csv");
            fs::write(&csv, report.to_csv()).map_err(|e| Error::io(&csv, e))?;
        }
    }
    Ok(report)
}
