//! The full two-branch network and its training-time forward/backward passes.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::TrainConfig;
use crate::align::{infonce_backward, infonce_bidirectional, AttentionPool, PoolOutput, ProjectionHead};
use crate::error::{Error, Result};
use crate::fusion::{cross_entropy, cross_entropy_grad, ClassifierHead, FusionEncoder, Prediction};
use crate::latent::LatentTransform;
use crate::nn::Linear;
use crate::par;
use crate::params::{accumulate, join, Parameters};
use crate::qnn::{Mode, QTensor, QseEncoder, QseTrace};
use crate::seq::FrameSeq;

/// One utterance ready for the network: standardised quartet and latents.
#[derive(Clone, Debug)]
pub struct Sample {
    pub x: QTensor,
    pub latent: FrameSeq,
    pub label: usize,
}

/// Top-level prefixes of the parameter names, in traversal order.
pub const COMPONENTS: [&str; 10] = [
    "qse",
    "vocal_pool",
    "latent_transform",
    "latent_pool",
    "vocal_head",
    "latent_head",
    "vocal_adapter",
    "latent_adapter",
    "fusion",
    "head",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub qse: QseEncoder,
    pub vocal_pool: AttentionPool,
    pub latent_transform: LatentTransform,
    pub latent_pool: AttentionPool,
    pub vocal_head: ProjectionHead,
    pub latent_head: ProjectionHead,
    /// Present when the vocal utterance width differs from the fusion width.
    pub vocal_adapter: Option<Linear>,
    pub latent_adapter: Option<Linear>,
    pub fusion: FusionEncoder,
    pub head: ClassifierHead,
    pub temperature: f64,
}

/// Activations kept by a training-mode pass through both branches.
pub struct BranchTrace {
    qse: QseTrace,
    vocal_seqs: Vec<FrameSeq>,
    vocal_pools: Vec<PoolOutput>,
    latent_seqs: Vec<FrameSeq>,
    latent_pre: Vec<Array2<f64>>,
    latent_pools: Vec<PoolOutput>,
    inputs: Vec<FrameSeq>,
}

/// Utterance-level outputs of every stage, for inspection and export.
#[derive(Clone, Debug)]
pub struct Embeddings {
    pub z_vocal: Array2<f64>,
    pub z_latent: Array2<f64>,
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub fused: Array2<f64>,
    pub logits: Array2<f64>,
}

fn stack(rows: &[Array1<f64>]) -> Array2<f64> {
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    ndarray::stack(Axis(0), &views).expect("rows share a width")
}

fn adapt(adapter: &Option<Linear>, z: &Array2<f64>) -> Result<Array2<f64>> {
    match adapter {
        Some(l) => l.forward(z),
        None => Ok(z.clone()),
    }
}

impl Model {
    /// Randomly initialised network for `latent_dim`-wide latents and `classes` labels.
    pub fn init<R: Rng + ?Sized>(cfg: &TrainConfig, latent_dim: usize, classes: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if classes == 0 || latent_dim == 0 {
            return Err(Error::InvalidConfig("need at least one class and a non-empty latent width".into()));
        }
        let d_q = cfg.qse.embedding_dim(cfg.bins())?;
        let d_m = cfg.fusion.d_model;
        let (hidden, d_align) = (cfg.cpa.hidden, cfg.cpa.d_align);
        let qse = QseEncoder::init(&cfg.qse, rng)?;
        let latent_transform = LatentTransform::init(latent_dim, rng);
        let vocal_head = ProjectionHead::init(d_q, hidden, d_align, rng);
        let latent_head = ProjectionHead::init(latent_dim, hidden, d_align, rng);
        let vocal_adapter = (d_q != d_m).then(|| Linear::init(d_q, d_m, true, rng));
        let latent_adapter = (latent_dim != d_m).then(|| Linear::init(latent_dim, d_m, true, rng));
        let fusion = FusionEncoder::init(&cfg.fusion, rng)?;
        let head = ClassifierHead::init(d_m, cfg.fusion.classifier_hidden, classes, rng);
        Ok(Model {
            qse,
            vocal_pool: AttentionPool::new(d_q),
            latent_transform,
            latent_pool: AttentionPool::new(latent_dim),
            vocal_head,
            latent_head,
            vocal_adapter,
            latent_adapter,
            fusion,
            head,
            temperature: cfg.cpa.temperature,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Model {
            qse: self.qse.zeros_like(),
            vocal_pool: self.vocal_pool.zeros_like(),
            latent_transform: self.latent_transform.zeros_like(),
            latent_pool: self.latent_pool.zeros_like(),
            vocal_head: self.vocal_head.zeros_like(),
            latent_head: self.latent_head.zeros_like(),
            vocal_adapter: self.vocal_adapter.as_ref().map(Linear::zeros_like),
            latent_adapter: self.latent_adapter.as_ref().map(Linear::zeros_like),
            fusion: self.fusion.zeros_like(),
            head: self.head.zeros_like(),
            temperature: self.temperature,
        }
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_transform.dim()
    }

    fn inputs(batch: &[&Sample]) -> Result<Vec<QTensor>> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(batch.iter().map(|s| s.x.clone()).collect())
    }

    /// Pooled utterance vectors `(z_vocal, z_latent)` with running statistics.
    pub fn utterance_vectors(&self, batch: &[&Sample]) -> Result<(Array2<f64>, Array2<f64>)> {
        let seqs = self.qse.encode(&Self::inputs(batch)?)?;
        let zv = par::try_map(&seqs, |s| self.vocal_pool.forward(s).map(|o| o.z))?;
        let zl = par::try_map(batch, |s| {
            let (h, _) = self.latent_transform.forward(&s.latent)?;
            self.latent_pool.forward(&h).map(|o| o.z)
        })?;
        Ok((stack(&zv), stack(&zl)))
    }

    fn branches(&self, batch: &[&Sample], mode: Mode) -> Result<(Array2<f64>, Array2<f64>, BranchTrace)> {
        let (vocal_seqs, qse) = self.qse.forward(&Self::inputs(batch)?, mode)?;
        let vocal_pools = par::try_map(&vocal_seqs, |s| self.vocal_pool.forward(s))?;
        let latent = par::try_map(batch, |s| self.latent_transform.forward(&s.latent))?;
        let (latent_seqs, latent_pre): (Vec<_>, Vec<_>) = latent.into_iter().unzip();
        let latent_pools = par::try_map(&latent_seqs, |s| self.latent_pool.forward(s))?;
        let zv: Vec<_> = vocal_pools.iter().map(|o| o.z.clone()).collect();
        let zl: Vec<_> = latent_pools.iter().map(|o| o.z.clone()).collect();
        let trace = BranchTrace {
            qse,
            vocal_seqs,
            vocal_pools,
            latent_seqs,
            latent_pre,
            latent_pools,
            inputs: batch.iter().map(|s| s.latent.clone()).collect(),
        };
        Ok((stack(&zv), stack(&zl), trace))
    }

    fn branches_backward(&self, trace: &BranchTrace, dzv: &Array2<f64>, dzl: &Array2<f64>, grads: &mut Model) -> Result<()> {
        let idx: Vec<usize> = (0..trace.vocal_seqs.len()).collect();
        let vocal = par::try_map(&idx, |&i| {
            self.vocal_pool
                .backward(&trace.vocal_seqs[i], &trace.vocal_pools[i], &dzv.row(i).to_owned())
        })?;
        let mut d_seq = Vec::with_capacity(idx.len());
        for (d, g) in vocal {
            accumulate(&mut grads.vocal_pool, &g);
            d_seq.push(d);
        }
        grads.qse = self.qse.backward(&trace.qse, &d_seq)?;
        let latent = par::try_map(&idx, |&i| {
            let (dh, gp) = self.latent_pool.backward(
                &trace.latent_seqs[i],
                &trace.latent_pools[i],
                &dzl.row(i).to_owned(),
            )?;
            let (_, gt) = self
                .latent_transform
                .backward(&trace.inputs[i], &trace.latent_pre[i], &dh)?;
            Ok::<_, Error>((gp, gt))
        })?;
        for (gp, gt) in latent {
            accumulate(&mut grads.latent_pool, &gp);
            accumulate(&mut grads.latent_transform, &gt);
        }
        Ok(())
    }

    /// Alignment loss of a batch with running statistics, no gradients.
    pub fn cpa_loss(&self, batch: &[&Sample]) -> Result<f64> {
        let (zv, zl) = self.utterance_vectors(batch)?;
        let (u, _) = self.vocal_head.forward(&zv)?;
        let (v, _) = self.latent_head.forward(&zl)?;
        Ok(infonce_bidirectional(&u, &v, self.temperature)?.l_cpa)
    }

    /// Training-mode alignment loss, its gradients, and the encoder trace
    /// whose batch statistics the caller may commit.
    pub fn cpa_step(&self, batch: &[&Sample]) -> Result<(f64, Model, QseTrace)> {
        let (zv, zl, trace) = self.branches(batch, Mode::Train)?;
        let (u, cv) = self.vocal_head.forward(&zv)?;
        let (v, cl) = self.latent_head.forward(&zl)?;
        let out = infonce_bidirectional(&u, &v, self.temperature)?;
        let (du, dv) = infonce_backward(&u, &v, self.temperature, &out);
        let mut grads = self.zeros_like();
        let (dzv, gv) = self.vocal_head.backward(&cv, &du)?;
        let (dzl, gl) = self.latent_head.backward(&cl, &dv)?;
        grads.vocal_head = gv;
        grads.latent_head = gl;
        self.branches_backward(&trace, &dzv, &dzl, &mut grads)?;
        Ok((out.l_cpa, grads, trace.qse))
    }

    fn fuse_batch(&self, zv: &Array2<f64>, zl: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>, Vec<crate::fusion::FusionCache>)> {
        let av = adapt(&self.vocal_adapter, zv)?;
        let al = adapt(&self.latent_adapter, zl)?;
        let idx: Vec<usize> = (0..av.nrows()).collect();
        let fused = par::try_map(&idx, |&i| self.fusion.fuse(&al.row(i).to_owned(), &av.row(i).to_owned()))?;
        let (rows, caches): (Vec<_>, Vec<_>) = fused.into_iter().unzip();
        Ok((stack(&rows), av, al, caches))
    }

    /// Class logits `[B, C]` with running statistics.
    pub fn logits(&self, batch: &[&Sample]) -> Result<Array2<f64>> {
        let (zv, zl) = self.utterance_vectors(batch)?;
        let (fused, ..) = self.fuse_batch(&zv, &zl)?;
        Ok(self.head.forward(&fused)?.0)
    }

    pub fn predict(&self, batch: &[&Sample]) -> Result<Vec<Prediction>> {
        let logits = self.logits(batch)?;
        Ok(logits.rows().into_iter().map(|r| Prediction::from_logits(r.to_vec())).collect())
    }

    /// Every utterance-level representation of a batch.
    pub fn embeddings(&self, batch: &[&Sample]) -> Result<Embeddings> {
        let (z_vocal, z_latent) = self.utterance_vectors(batch)?;
        let (u, _) = self.vocal_head.forward(&z_vocal)?;
        let (v, _) = self.latent_head.forward(&z_latent)?;
        let (fused, ..) = self.fuse_batch(&z_vocal, &z_latent)?;
        let logits = self.head.forward(&fused)?.0;
        Ok(Embeddings {
            z_vocal,
            z_latent,
            u,
            v,
            fused,
            logits,
        })
    }

    /// Mean cross-entropy, its gradients, and the encoder trace. The vocal
    /// encoder's batch norm runs in `vocal_mode`.
    pub fn ce_step(&self, batch: &[&Sample], vocal_mode: Mode) -> Result<(f64, Model, QseTrace)> {
        let (zv, zl, trace) = self.branches(batch, vocal_mode)?;
        let (fused, av, al, caches) = self.fuse_batch(&zv, &zl)?;
        let (logits, cc) = self.head.forward(&fused)?;
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let mut dlogits = Array2::zeros(logits.raw_dim());
        for (i, s) in batch.iter().enumerate() {
            let row = logits.row(i).to_vec();
            loss += cross_entropy(&row, s.label)?;
            let g = cross_entropy_grad(&row, s.label)?;
            dlogits.row_mut(i).iter_mut().zip(g).for_each(|(d, g)| *d = g / n);
        }
        let mut grads = self.zeros_like();
        let (dfused, gh) = self.head.backward(&cc, &dlogits)?;
        grads.head = gh;
        let idx: Vec<usize> = (0..batch.len()).collect();
        let parts = par::try_map(&idx, |&i| self.fusion.backward(&caches[i], &dfused.row(i).to_owned()))?;
        let mut dal = Array2::zeros(al.raw_dim());
        let mut dav = Array2::zeros(av.raw_dim());
        for (i, (dl, dv, g)) in parts.into_iter().enumerate() {
            dal.row_mut(i).assign(&dl);
            dav.row_mut(i).assign(&dv);
            accumulate(&mut grads.fusion, &g);
        }
        let dzv = match &self.vocal_adapter {
            Some(a) => {
                let (dz, g) = a.backward(&zv, &dav)?;
                grads.vocal_adapter = Some(g);
                dz
            }
            None => dav,
        };
        let dzl = match &self.latent_adapter {
            Some(a) => {
                let (dz, g) = a.backward(&zl, &dal)?;
                grads.latent_adapter = Some(g);
                dz
            }
            None => dal,
        };
        self.branches_backward(&trace, &dzv, &dzl, &mut grads)?;
        Ok((loss / n, grads, trace.qse))
    }
}

impl Parameters for Model {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        self.qse.visit(&join(prefix, "qse"), f);
        self.vocal_pool.visit(&join(prefix, "vocal_pool"), f);
        self.latent_transform.visit(&join(prefix, "latent_transform"), f);
        self.latent_pool.visit(&join(prefix, "latent_pool"), f);
        self.vocal_head.visit(&join(prefix, "vocal_head"), f);
        self.latent_head.visit(&join(prefix, "latent_head"), f);
        if let Some(a) = &self.vocal_adapter {
            a.visit(&join(prefix, "vocal_adapter"), f);
        }
        if let Some(a) = &self.latent_adapter {
            a.visit(&join(prefix, "latent_adapter"), f);
        }
        self.fusion.visit(&join(prefix, "fusion"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.qse.visit_mut(&join(prefix, "qse"), f);
        self.vocal_pool.visit_mut(&join(prefix, "vocal_pool"), f);
        self.latent_transform.visit_mut(&join(prefix, "latent_transform"), f);
        self.latent_pool.visit_mut(&join(prefix, "latent_pool"), f);
        self.vocal_head.visit_mut(&join(prefix, "vocal_head"), f);
        self.latent_head.visit_mut(&join(prefix, "latent_head"), f);
        if let Some(a) = &mut self.vocal_adapter {
            a.visit_mut(&join(prefix, "vocal_adapter"), f);
        }
        if let Some(a) = &mut self.latent_adapter {
            a.visit_mut(&join(prefix, "latent_adapter"), f);
        }
        self.fusion.visit_mut(&join(prefix, "fusion"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }

    fn visit_buffers<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        self.qse.visit_buffers(&join(prefix, "qse"), f);
    }

    fn visit_buffers_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.qse.visit_buffers_mut(&join(prefix, "qse"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients_sampled;
    use crate::qnn::FreqPadding;
    use crate::params::param_count;
    use ndarray::Array4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config() -> TrainConfig {
        let mut cfg = TrainConfig::compact();
        cfg.stft.fft_size = 16;
        cfg.stft.win_length = 16;
        cfg.stft.hop_length = 8;
        cfg.qse.channels = vec![1, 2];
        cfg.qse.pool_win = 2;
        cfg.qse.pool_stride = 2;
        cfg.qse.later_padding = FreqPadding::Same;
        cfg.cpa.d_align = 4;
        cfg.cpa.hidden = 6;
        cfg.fusion.d_model = 4;
        cfg.fusion.heads = 2;
        cfg.fusion.classifier_hidden = 5;
        cfg
    }

    fn samples(rng: &mut ChaCha8Rng, n: usize, latent_dim: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let frames = 4 + i % 2;
                let valid = frames - i % 2;
                let mask: Vec<bool> = (0..frames).map(|t| t < valid).collect();
                let x = QTensor::new(
                    Array4::from_shape_fn((1, 4, frames, 9), |_| rng.random_range(-1.0..1.0)),
                    mask.clone(),
                )
                .unwrap();
                let latent = FrameSeq::new(
                    Array2::from_shape_fn((frames, latent_dim), |_| rng.random_range(-1.0..1.0)),
                    mask,
                )
                .unwrap();
                Sample { x, latent, label: i % 3 }
            })
            .collect()
    }

    fn perturb_pools(m: &mut Model, rng: &mut ChaCha8Rng) {
        m.vocal_pool.w.iter_mut().for_each(|w| *w = rng.random_range(-0.5..0.5));
        m.latent_pool.w.iter_mut().for_each(|w| *w = rng.random_range(-0.5..0.5));
    }

    #[test]
    fn names_cover_every_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Model::init(&tiny_config(), 3, 3, &mut rng).unwrap();
        let mut names = Vec::new();
        m.visit("", &mut |n, _, _| names.push(n.to_string()));
        for c in COMPONENTS {
            assert!(names.iter().any(|n| n.starts_with(&format!("{c}."))), "{c}");
        }
        assert!(param_count(&m) > 0);
    }

    #[test]
    fn alignment_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = Model::init(&tiny_config(), 3, 3, &mut rng).unwrap();
        perturb_pools(&mut m, &mut rng);
        let data = samples(&mut rng, 3, 3);
        let batch: Vec<&Sample> = data.iter().collect();
        let (_, grads, _) = m.cpa_step(&batch).unwrap();
        check_gradients_sampled(&m, &grads, |p| p.cpa_step(&batch).unwrap().0, 1e-4, 6).unwrap();
    }

    #[test]
    fn classification_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = Model::init(&tiny_config(), 3, 3, &mut rng).unwrap();
        perturb_pools(&mut m, &mut rng);
        let data = samples(&mut rng, 3, 3);
        let batch: Vec<&Sample> = data.iter().collect();
        let (_, grads, _) = m.ce_step(&batch, Mode::Train).unwrap();
        check_gradients_sampled(&m, &grads, |p| p.ce_step(&batch, Mode::Train).unwrap().0, 1e-4, 6).unwrap();
        let mut head = Vec::new();
        grads.visit("", &mut |n, _, v| {
            if n.starts_with("vocal_head") || n.starts_with("latent_head") {
                head.extend_from_slice(v);
            }
        });
        assert!(head.iter().all(|&g| g == 0.0));
    }
}
