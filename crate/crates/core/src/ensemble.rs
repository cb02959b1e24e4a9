//! Uncertainty-driven two-model ensembling: per test view, serve the render
//! from the model whose dropout ensemble is less uncertain there, and score
//! the selection with E_ME, the mean ratio of chosen-view SSIM to the better
//! model's SSIM (1 = every choice picked the stronger render).

use crate::fields::FieldModel;
use crate::fields::RenderOpts;
use crate::img::Image;
use crate::metrics::{psnr, ssim, MetricsError};
use crate::phd::{estimate_key, estimate_uncertainty, find_r_drop, PhdConfig, PhdError};
use crate::rng::{mix, tag};
use crate::scene::{SceneDataset, View};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("mismatched inputs: {0}")]
    Mismatch(String),
    #[error("view {view}: best ssim {denom} is not positive")]
    NonPositiveSsim { view: u32, denom: f64 },
    #[error(transparent)]
    Phd(#[from] PhdError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Which of the two models serves a view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pick {
    A,
    B,
}

/// One model's per-view evaluation artifacts, index-aligned with the shared
/// view id list: dropout-ensemble mean renders, zeta maps, and scores of the
/// mean render against ground truth.
#[derive(Clone, Debug)]
pub struct ModelViews {
    pub renders: Vec<Image>,
    pub zetas: Vec<Image>,
    pub ssim: Vec<f64>,
    pub psnr: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EnsembleInput {
    pub view_ids: Vec<u32>,
    pub a: ModelViews,
    pub b: ModelViews,
}

impl EnsembleInput {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        let n = self.view_ids.len();
        if n == 0 {
            return Err(EnsembleError::Mismatch("no views".into()));
        }
        for (label, m) in [("a", &self.a), ("b", &self.b)] {
            for (what, len) in [
                ("renders", m.renders.len()),
                ("zeta maps", m.zetas.len()),
                ("ssim scores", m.ssim.len()),
                ("psnr scores", m.psnr.len()),
            ] {
                if len != n {
                    return Err(EnsembleError::Mismatch(format!(
                        "model {label} has {len} {what} for {n} views"
                    )));
                }
            }
        }
        for i in 0..n {
            let r = &self.a.renders[i];
            if !r.same_shape(&self.b.renders[i])
                || !r.same_shape(&self.a.zetas[i])
                || !r.same_shape(&self.b.zetas[i])
            {
                return Err(EnsembleError::Mismatch(format!(
                    "view {}: image shapes differ between the models",
                    self.view_ids[i]
                )));
            }
        }
        Ok(())
    }
}

fn mean_of(img: &Image) -> f64 {
    img.data.iter().map(|&v| v as f64).sum::<f64>() / img.data.len() as f64
}

/// Per-view choice: the model with the lower mean zeta over all pixels and
/// channels. Ties go to `a`.
pub fn select_views(input: &EnsembleInput) -> Result<Vec<Pick>, EnsembleError> {
    input.validate()?;
    Ok((0..input.view_ids.len())
        .map(|i| {
            if mean_of(&input.b.zetas[i]) < mean_of(&input.a.zetas[i]) {
                Pick::B
            } else {
                Pick::A
            }
        })
        .collect())
}

/// E_ME plus the selected-set fidelity summary.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EmeScore {
    pub eme: f64,
    pub ssim_selected: f64,
    pub psnr_selected: f64,
}

/// E_ME = mean over views of SSIM(chosen render, GT) / max(SSIM_a, SSIM_b).
/// Equals 1 exactly when every choice attains the per-view best SSIM.
pub fn eme(input: &EnsembleInput, choices: &[Pick]) -> Result<EmeScore, EnsembleError> {
    input.validate()?;
    let n = input.view_ids.len();
    if choices.len() != n {
        return Err(EnsembleError::Mismatch(format!(
            "{} choices for {n} views",
            choices.len()
        )));
    }
    let (mut ratio_sum, mut ssim_sum, mut psnr_sum) = (0.0f64, 0.0, 0.0);
    for (i, pick) in choices.iter().enumerate() {
        let denom = input.a.ssim[i].max(input.b.ssim[i]);
        if denom <= 0.0 {
            return Err(EnsembleError::NonPositiveSsim {
                view: input.view_ids[i],
                denom,
            });
        }
        let (s, p) = match pick {
            Pick::A => (input.a.ssim[i], input.a.psnr[i]),
            Pick::B => (input.b.ssim[i], input.b.psnr[i]),
        };
        ratio_sum += s / denom;
        ssim_sum += s;
        psnr_sum += p;
    }
    Ok(EmeScore {
        eme: ratio_sum / n as f64,
        ssim_selected: ssim_sum / n as f64,
        psnr_selected: psnr_sum / n as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceEntry {
    pub view: u32,
    pub pick: Pick,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub eme: f64,
    pub ssim_a: f64,
    pub ssim_b: f64,
    pub ssim_selected: f64,
    pub psnr_a: f64,
    pub psnr_b: f64,
    pub psnr_selected: f64,
    pub choices: Vec<ChoiceEntry>,
}

/// One side of the ensemble: a model plus the train views its ratio search
/// gates on (the views it was fit to, not necessarily the whole train set).
#[derive(Clone, Copy)]
pub struct EnsembleMember<'a> {
    pub model: &'a FieldModel,
    pub train: &'a [View],
}

fn model_views(
    member: EnsembleMember,
    dataset: &SceneDataset,
    cfg: &PhdConfig,
    opts: &RenderOpts,
) -> Result<ModelViews, EnsembleError> {
    let r_drop = find_r_drop(member.model, member.train, cfg, opts)?;
    let maps = estimate_uncertainty(
        member.model,
        &dataset.test,
        r_drop,
        cfg.n_est,
        estimate_key(cfg.seed),
        opts,
    );
    let mut mv = ModelViews {
        renders: Vec::with_capacity(maps.len()),
        zetas: Vec::with_capacity(maps.len()),
        ssim: Vec::with_capacity(maps.len()),
        psnr: Vec::with_capacity(maps.len()),
    };
    for (map, view) in maps.into_iter().zip(&dataset.test) {
        mv.ssim.push(ssim(&map.mean, &view.image)?);
        mv.psnr.push(psnr(&map.mean, &view.image)?);
        mv.renders.push(map.mean);
        mv.zetas.push(map.zeta);
    }
    Ok(mv)
}

/// Runs the dropout-uncertainty pipeline on both members over the same scene
/// (each finds its own maximal ratio on its own train split), selects per
/// test view by mean zeta, and scores the selection. Mask and jitter keys
/// are shared, so two identical members produce identical maps and tie
/// every view toward `a`.
pub fn run_ensemble(
    a: EnsembleMember,
    b: EnsembleMember,
    dataset: &SceneDataset,
    cfg: &PhdConfig,
) -> Result<EnsembleReport, EnsembleError> {
    if a.model.kind() != b.model.kind() {
        return Err(EnsembleError::Mismatch(format!(
            "model families differ: {} vs {}",
            a.model.kind(),
            b.model.kind()
        )));
    }
    let radius = dataset.spec.bounding_radius;
    for (label, m) in [("a", a), ("b", b)] {
        if m.model.bound() != radius {
            return Err(EnsembleError::Mismatch(format!(
                "model {label} bound {} does not match the scene radius {radius}",
                m.model.bound()
            )));
        }
        if m.train.is_empty() {
            return Err(EnsembleError::Mismatch(format!(
                "model {label} has no train views to gate on"
            )));
        }
    }
    let opts = RenderOpts::new(dataset.spec.background, mix(&[cfg.seed, tag("phd-jitter")]));
    let input = EnsembleInput {
        view_ids: (0..dataset.test.len() as u32).collect(),
        a: model_views(a, dataset, cfg, &opts)?,
        b: model_views(b, dataset, cfg, &opts)?,
    };
    let choices = select_views(&input)?;
    let score = eme(&input, &choices)?;
    let n = input.view_ids.len() as f64;
    Ok(EnsembleReport {
        eme: score.eme,
        ssim_a: input.a.ssim.iter().sum::<f64>() / n,
        ssim_b: input.b.ssim.iter().sum::<f64>() / n,
        ssim_selected: score.ssim_selected,
        psnr_a: input.a.psnr.iter().sum::<f64>() / n,
        psnr_b: input.b.psnr.iter().sum::<f64>() / n,
        psnr_selected: score.psnr_selected,
        choices: input
            .view_ids
            .iter()
            .zip(&choices)
            .map(|(&view, &pick)| ChoiceEntry { view, pick })
            .collect(),
    })
}
