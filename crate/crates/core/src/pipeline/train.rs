use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::TrainedModel;
use crate::augment::{mine_batch, perturb_rows, shannon_entropy, train_contrastive, ContrastiveNet};
use crate::data::{class_prototypes, Dataset};
use crate::error::{Error, Result};
use crate::flow::{nll_loss_grad, prototype_loss_grad, FlowModel};
use crate::numcore::{AdamConfig, AdamState, Matrix};
use crate::rng::{self, streams};
use crate::semantics::SemanticEmbedder;
use crate::Scalar;

/// Mean loss terms over one epoch of flow training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub nll: f64,
    pub prior_penalty: f64,
    pub proto: f64,
    pub total: f64,
}

/// Outcome of stage 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningLog {
    /// Contrastive loss before training, then after each epoch.
    pub contrastive_loss: Vec<f64>,
    pub n_mined: usize,
    pub entropy_before: f64,
    pub entropy_after: f64,
    pub contrastive_fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub mining: Option<MiningLog>,
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    /// One JSON object per line: the mining summary (if any), then one line
    /// per epoch.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        if let Some(m) = &self.mining {
            let mut v = serde_json::to_value(m).expect("mining log serializes");
            v["stage"] = "mining".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        for e in &self.epochs {
            let mut v = serde_json::to_value(e).expect("epoch log serializes");
            v["stage"] = "flow".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }
}

fn mean_entropy<T: Scalar>(cn: &ContrastiveNet<T>, xs: &Matrix<T>, attrs: &Matrix<T>) -> Result<f64> {
    let scores = cn.scores_batch(xs, attrs)?;
    let total: f64 = scores.iter_rows().map(|r| shannon_entropy(r).as_f64()).sum();
    Ok(total / xs.rows().max(1) as f64)
}

fn at_epoch(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Divergence(msg) => Error::Divergence(format!("epoch {epoch}: {msg}")),
        other => other,
    }
}

/// Trains the generator on the seen training split.
///
/// Stage 1 fits the contrastive network and appends one mined boundary
/// sample per selected training sample. Stage 2 minimizes
/// `NLL(perturbed batch) + weight_decay·½‖θ‖² + lambda_proto·L_proto` with
/// Adam over the flow and embedder parameters. With `epochs = 0` the model is
/// returned as initialized and nothing is logged.
pub fn train_gsmflow<T: Scalar>(ds: &Dataset<T>, cfg: &TrainConfig) -> Result<(TrainedModel<T>, TrainingLog)> {
    cfg.validate()?;
    let train = &ds.split.train_seen;
    if train.is_empty() || ds.seen_classes.is_empty() {
        return Err(Error::input("training needs a non-empty seen training split"));
    }
    let seed = cfg.seed;
    let seen_attrs = ds.seen_attributes();
    let (mut xs, labels) = ds.subset(train);
    let mut targets: Vec<usize> =
        labels.iter().map(|&l| ds.seen_position(l).expect("validated seen label")).collect();
    let prototypes = class_prototypes(ds, train)?;

    let embedder = if cfg.relative_positioning {
        Some(SemanticEmbedder::fit(&seen_attrs, cfg.d_g, &mut rng::stream(seed, streams::INIT_EMBEDDER))?)
    } else {
        None
    };
    let d_cond = embedder.as_ref().map_or(ds.d_a(), |e| e.d_g());
    let flow = FlowModel::init(
        ds.d_v(),
        d_cond,
        cfg.n_layers,
        cfg.hidden_dim,
        cfg.s_cap.map(T::lit),
        &mut rng::stream(seed, streams::INIT_FLOW),
    )?;
    let mut model = TrainedModel { flow, embedder, contrastive: None };
    let mut log = TrainingLog::default();
    if cfg.epochs == 0 {
        return Ok((model, log));
    }

    if let Some(mcfg) = cfg.mining_config() {
        let mut cn = ContrastiveNet::init(
            ds.d_v(),
            ds.d_a(),
            cfg.contrastive.hidden_dim,
            &mut rng::stream(seed, streams::INIT_CONTRASTIVE),
        )?;
        let mut mrng = rng::stream(seed, streams::MINING);
        let history = train_contrastive(&mut cn, &xs, &targets, &seen_attrs, &cfg.contrastive, &mut mrng)?;
        let n_mine = ((xs.rows() as f64) * mcfg.cap_fraction).round() as usize;
        let mut pick = rng::permutation(&mut mrng, xs.rows());
        pick.truncate(n_mine);
        pick.sort_unstable();
        let src = xs.select_rows(&pick);
        let src_targets: Vec<usize> = pick.iter().map(|&i| targets[i]).collect();
        let mined = mine_batch(&cn, &src, &src_targets, &seen_attrs, &mcfg)?;
        log.mining = Some(MiningLog {
            contrastive_loss: history,
            n_mined: pick.len(),
            entropy_before: mean_entropy(&cn, &src, &seen_attrs)?,
            entropy_after: mean_entropy(&cn, &mined, &seen_attrs)?,
            contrastive_fingerprint: cn.fingerprint(),
        });
        xs = xs.vcat(&mined)?;
        targets.extend(src_targets);
        model.contrastive = Some(cn);
    }

    fit_flow(&mut model, &xs, &targets, &seen_attrs, &prototypes, cfg, &mut log)?;
    Ok((model, log))
}

fn fit_flow<T: Scalar>(
    model: &mut TrainedModel<T>,
    xs: &Matrix<T>,
    targets: &[usize],
    seen_attrs: &Matrix<T>,
    prototypes: &Matrix<T>,
    cfg: &TrainConfig,
    log: &mut TrainingLog,
) -> Result<()> {
    let n_flow = model.flow.num_params();
    let mut params = model.flow.params();
    if let Some(e) = &model.embedder {
        params.extend(e.params());
    }
    let mut adam = AdamState::new(params.len(), AdamConfig::with_lr(cfg.lr));
    let mut shuffle = rng::stream(cfg.seed, streams::SHUFFLE);
    let mut noise = rng::stream(cfg.seed, streams::PERTURB);
    let pcfg = cfg.perturb_config();
    let wd = T::lit(cfg.weight_decay);
    let lambda_proto = T::lit(cfg.lambda_proto);
    let n_classes = seen_attrs.rows();

    for epoch in 0..cfg.epochs {
        let order = rng::permutation(&mut shuffle, xs.rows());
        let (mut nll_sum, mut prior_sum, mut proto_sum, mut total_sum) = (0.0, 0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut xb = xs.select_rows(chunk);
            if cfg.lambda_perturb > 0.0 {
                xb = perturb_rows(&xb, &pcfg, &mut noise);
            }
            let tb: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            let (cond_all, mut etrace) = match &model.embedder {
                Some(e) => {
                    let (c, t) = e.embed_traced(seen_attrs)?;
                    (c, Some(t))
                }
                None => (seen_attrs.clone(), None),
            };
            let cb = cond_all.select_rows(&tb);

            let (nll, g) = nll_loss_grad(&model.flow, &xb, &cb).map_err(at_epoch(epoch))?;
            let mut grad = g.params;
            let mut grad_cond = Matrix::zeros(n_classes, cond_all.cols());
            for (r, &t) in tb.iter().enumerate() {
                for (acc, &v) in grad_cond.row_mut(t).iter_mut().zip(g.condition.row(r)) {
                    *acc += v;
                }
            }
            let mut proto = T::zero();
            if cfg.lambda_proto > 0.0 {
                let (pl, pg) = prototype_loss_grad(&model.flow, prototypes, &cond_all).map_err(at_epoch(epoch))?;
                proto = pl;
                for (a, b) in grad.iter_mut().zip(&pg.params) {
                    *a += lambda_proto * *b;
                }
                grad_cond.add_assign(&pg.condition.map(|v| v * lambda_proto));
            }
            if let (Some(e), Some(t)) = (&model.embedder, etrace.as_mut()) {
                grad.extend(e.backward(t, &grad_cond)?);
            }
            let sq: T = params.iter().map(|&p| p * p).sum();
            let prior = wd * T::lit(0.5) * sq;
            for (gv, &p) in grad.iter_mut().zip(&params) {
                *gv += wd * p;
            }
            let total = nll + prior + lambda_proto * proto;
            if !total.is_finite() || grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence(format!("epoch {epoch}: loss or gradient is not finite")));
            }
            adam.step(&mut params, &grad)?;
            model.flow.set_params(&params[..n_flow])?;
            if let Some(e) = model.embedder.as_mut() {
                e.set_params(&params[n_flow..])?;
            }
            nll_sum += nll.as_f64();
            prior_sum += prior.as_f64();
            proto_sum += proto.as_f64();
            total_sum += total.as_f64();
            batches += 1;
        }
        let b = batches as f64;
        log.epochs.push(EpochLog {
            epoch,
            nll: nll_sum / b,
            prior_penalty: prior_sum / b,
            proto: proto_sum / b,
            total: total_sum / b,
        });
    }
    Ok(())
}

/// Draws `n_per_class` features for each class in `classes`, whose attribute
/// rows are `attributes`. Noise is drawn class by class, row-major.
pub fn generate_unseen<T: Scalar>(
    model: &TrainedModel<T>,
    attributes: &Matrix<T>,
    classes: &[usize],
    n_per_class: usize,
    seed: u64,
) -> Result<(Matrix<T>, Vec<usize>)> {
    if attributes.rows() != classes.len() {
        return Err(Error::Config(format!(
            "{} attribute rows for {} classes",
            attributes.rows(),
            classes.len()
        )));
    }
    let d_v = model.flow.d_v();
    let n = n_per_class * classes.len();
    if n == 0 {
        return Ok((Matrix::zeros(0, d_v), Vec::new()));
    }
    let mut r = rng::stream(seed, streams::GENERATE);
    let z: Matrix<T> = Matrix::from_fn(n, d_v, |_, _| rng::normal(&mut r));
    let cond = model.conditions(attributes)?;
    let rows: Vec<usize> = (0..classes.len()).flat_map(|c| std::iter::repeat_n(c, n_per_class)).collect();
    let x = model.flow.generate(&z, &cond.select_rows(&rows))?;
    let labels = rows.iter().map(|&c| classes[c]).collect();
    Ok((x, labels))
}
