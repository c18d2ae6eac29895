//! Region image-text contrastive losses.
//!
//! For each present class the activation plane is upsampled, split into
//! foreground/background region masks, and multiplied into the image. The
//! foreground region competes for its class text against the background
//! texts (FRC); the background region competes for the background texts
//! against the class text (BRC); a mean-activation term (REG) keeps maps
//! from saturating. The total is the weighted sum of the three.

use std::collections::BTreeMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::activation::{fat_threshold, mask_image, upsample_map, ActivationMap};
use crate::autodiff::{Tape, VarId};
use crate::corpus::ClassCorpus;
use crate::encoders::{Embedding, EncoderPair, TextEmbeddingCache, TraceEncoder};
use crate::error::{Error, Result};
use crate::image_io::RasterImage;
use crate::tensor::Tensor;

/// Loss weighting and the contrast temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Whether the temperature also divides the cross term of the
    /// background contrast. The printed form of that loss omits it, which
    /// reads like a typo; both variants are available.
    pub brc_tau_on_bf: bool,
}

impl LossWeights {
    /// The 20-class preset: alpha 10, beta 8, gamma 0.2, tau 0.7.
    pub fn voc() -> Self {
        Self { alpha: 10.0, beta: 8.0, gamma: 0.2, tau: 0.7, brc_tau_on_bf: true }
    }

    /// The 80-class preset: alpha 30, beta 24, gamma 0.2, tau 0.7.
    pub fn coco() -> Self {
        Self { alpha: 30.0, beta: 24.0, gamma: 0.2, tau: 0.7, brc_tau_on_bf: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".to_string()));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::voc()
    }
}

/// The three components and their weighted total for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub frc: f64,
    pub brc: f64,
    pub reg: f64,
    pub total: f64,
}

pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cosine of {} vs {} dims", a.len(), b.len())));
    }
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Componentwise mean of the foreground text embeddings.
pub fn mean_fg_text(embeddings: &[Embedding]) -> Result<Embedding> {
    let first = embeddings.first().ok_or_else(|| {
        Error::Shape("mean of an empty embedding list".to_string())
    })?;
    let dim = first.len();
    let mut out = vec![0.0; dim];
    for e in embeddings {
        if e.len() != dim {
            return Err(Error::Shape("embedding dimensions disagree".to_string()));
        }
        for (o, v) in out.iter_mut().zip(e) {
            *o += v;
        }
    }
    for o in out.iter_mut() {
        *o /= embeddings.len() as f64;
    }
    Ok(out)
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Foreground contrast: softmax of the positive similarity over the
/// positive plus all background-text similarities.
pub fn frc_loss(s_ff: f64, s_fb: &[f64], tau: f64) -> f64 {
    assert!(tau > 0.0, "temperature must be positive");
    assert!(!s_fb.is_empty(), "at least one negative similarity required");
    let pos = s_ff / tau;
    let mut logits: Vec<f64> = s_fb.iter().map(|s| s / tau).collect();
    logits.push(pos);
    logsumexp(&logits) - pos
}

/// Background contrast: the mean background similarity competes against
/// the (foreground text, background region) cross similarity.
pub fn brc_loss(s_bf: f64, s_bb: &[f64], tau: f64, tau_on_bf: bool) -> f64 {
    assert!(tau > 0.0, "temperature must be positive");
    assert!(!s_bb.is_empty(), "at least one background similarity required");
    let mean_bb = s_bb.iter().sum::<f64>() / s_bb.len() as f64;
    let pos = mean_bb / tau;
    let neg = if tau_on_bf { s_bf / tau } else { s_bf };
    logsumexp(&[neg, pos]) - pos
}

/// Mean activation across all present planes and pixels.
pub fn reg_loss(maps: &ActivationMap) -> f64 {
    assert!(!maps.is_empty(), "at least one activation plane required");
    let mut sum = 0.0;
    let mut count = 0usize;
    for (_, plane) in maps.iter() {
        sum += plane.iter().sum::<f64>();
        count += plane.len();
    }
    sum / count as f64
}

/// Combine already-aggregated components into the weighted objective.
pub fn total_loss(frc: f64, brc: f64, reg: f64, weights: &LossWeights) -> LossBreakdown {
    LossBreakdown {
        frc,
        brc,
        reg,
        total: weights.alpha * frc + weights.beta * brc + weights.gamma * reg,
    }
}

/// Similarities for one class: the inputs to `frc_loss` and `brc_loss`.
#[derive(Debug, Clone)]
pub struct ClassSimilarities {
    pub s_ff: f64,
    pub s_fb: Vec<f64>,
    pub s_bf: f64,
    pub s_bb: Vec<f64>,
}

/// Evaluate the full per-image objective without gradients.
///
/// The activation map holds feature-resolution planes for exactly the
/// classes present in the image; `corpora` must cover the same classes.
pub fn step_losses(
    image: &RasterImage,
    cam: &ActivationMap,
    corpora: &BTreeMap<u32, ClassCorpus>,
    omega: f64,
    weights: &LossWeights,
    encoders: &dyn EncoderPair,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let classes = cam.classes();
    if classes.is_empty() {
        return Err(Error::Shape("activation map has no planes".to_string()));
    }
    for k in &classes {
        if !corpora.contains_key(k) {
            return Err(Error::MissingCorpus { image_id: "<in-memory>".to_string(), class_id: *k });
        }
    }
    if corpora.len() != classes.len() {
        return Err(Error::Corpus("corpus classes do not match activation classes".to_string()));
    }

    let mut frc_sum = 0.0;
    let mut brc_sum = 0.0;
    for &k in &classes {
        let sims = class_similarities(image, cam, k, corpora[&k].clone(), omega, encoders)?;
        frc_sum += frc_loss(sims.s_ff, &sims.s_fb, weights.tau);
        brc_sum += brc_loss(sims.s_bf, &sims.s_bb, weights.tau, weights.brc_tau_on_bf);
    }
    let frc = frc_sum / classes.len() as f64;
    let brc = brc_sum / classes.len() as f64;
    let reg = reg_loss(cam);
    Ok(total_loss(frc, brc, reg, weights))
}

fn class_similarities(
    image: &RasterImage,
    cam: &ActivationMap,
    class_id: u32,
    corpus: ClassCorpus,
    omega: f64,
    encoders: &dyn EncoderPair,
) -> Result<ClassSimilarities> {
    let plane = cam.plane(class_id).expect("caller validated presence");
    let up = upsample_map(plane, cam.height(), cam.width(), image.height(), image.width())?;
    if up.iter().all(|&v| v == 0.0) {
        log::debug!("class {class_id}: all-zero activation plane, degenerate regions");
    }
    let regions = fat_threshold(&up, omega);
    let fg_image = mask_image(image, &regions.foreground)?;
    let bg_image = mask_image(image, &regions.background)?;

    let v_fg = encoders.encode_image(&fg_image)?;
    let v_bg = encoders.encode_image(&bg_image)?;
    let fg_embs: Vec<Embedding> = corpus
        .fg_texts()
        .iter()
        .map(|t| encoders.encode_text(t))
        .collect::<Result<_>>()?;
    let bg_embs: Vec<Embedding> = corpus
        .bg_texts()
        .iter()
        .map(|t| encoders.encode_text(t))
        .collect::<Result<_>>()?;
    let fg_mean = mean_fg_text(&fg_embs)?;

    let s_ff = cosine_sim(&v_fg, &fg_mean)?;
    let s_fb = bg_embs.iter().map(|e| cosine_sim(&v_fg, e)).collect::<Result<Vec<f64>>>()?;
    let s_bf = cosine_sim(&v_bg, &fg_mean)?;
    let s_bb = bg_embs.iter().map(|e| cosine_sim(&v_bg, e)).collect::<Result<Vec<f64>>>()?;
    Ok(ClassSimilarities { s_ff, s_fb, s_bf, s_bb })
}

/// The traced counterpart of [`step_losses`]: appends the per-image
/// objective to a tape so gradients reach the activation planes. The
/// binary plane from thresholding is held constant, so gradients flow
/// only through the activation factors of the region masks.
pub struct TracedStep {
    pub frc: VarId,
    pub brc: VarId,
    pub reg: VarId,
    pub total: VarId,
}

#[allow(clippy::too_many_arguments)]
pub fn trace_step_losses(
    tape: &mut Tape,
    planes: &BTreeMap<u32, VarId>,
    image: &RasterImage,
    corpora: &BTreeMap<u32, &ClassCorpus>,
    omega: f64,
    weights: &LossWeights,
    fat_enabled: bool,
    encoder: &dyn TraceEncoder,
    texts: &mut TextEmbeddingCache,
) -> Result<TracedStep> {
    weights.validate()?;
    if planes.is_empty() {
        return Err(Error::Shape("no activation planes to trace".to_string()));
    }
    let text_encoder: &dyn EncoderPair = encoder;
    let image_tensor = image.to_shared_tensor();
    let (img_h, img_w) = (image.height(), image.width());
    let inv_k = 1.0 / planes.len() as f64;

    let mut frc_terms = Vec::new();
    let mut brc_terms = Vec::new();
    let mut reg_terms = Vec::new();

    for (&class_id, &plane) in planes {
        let corpus = corpora
            .get(&class_id)
            .ok_or(Error::MissingCorpus { image_id: "<traced>".to_string(), class_id })?;

        let plane_mean = tape.mean_all(plane);
        reg_terms.push((plane_mean, inv_k));

        let up = tape.bilinear_up(plane, img_h, img_w);
        let (fg_mask, bg_mask) = if fat_enabled {
            // The binary plane is a constant here: gradients flow only
            // through the activation factors of the region masks.
            let regions = fat_threshold(tape.value(up).data(), omega);
            let b = Tensor::new(vec![img_h, img_w], regions.binary.clone());
            let inv_b: Vec<f64> = regions.binary.iter().map(|&b| 1.0 - b).collect();
            let fg = tape.mul_const(up, b);
            let inv = tape.one_minus(up);
            let bg = tape.mul_const(inv, Tensor::new(vec![img_h, img_w], inv_b));
            (fg, bg)
        } else {
            let inv = tape.one_minus(up);
            (up, inv)
        };

        let fg_image = tape.mask_image(fg_mask, image_tensor.clone());
        let bg_image = tape.mask_image(bg_mask, image_tensor.clone());
        let v_fg = encoder.trace_image(tape, fg_image);
        let v_bg = encoder.trace_image(tape, bg_image);

        let fg_embs: Vec<Rc<Embedding>> = corpus
            .fg_texts()
            .iter()
            .map(|t| texts.get(text_encoder, t))
            .collect::<Result<_>>()?;
        let bg_embs: Vec<Rc<Embedding>> = corpus
            .bg_texts()
            .iter()
            .map(|t| texts.get(text_encoder, t))
            .collect::<Result<_>>()?;
        let fg_mean = Rc::new(mean_fg_text(
            &fg_embs.iter().map(|e| (**e).clone()).collect::<Vec<_>>(),
        )?);

        // Foreground contrast.
        let tau = weights.tau;
        let s_ff = tape.cosine_const(v_fg, fg_mean.clone());
        let pos = tape.lin_comb(&[(s_ff, 1.0 / tau)]);
        let mut logits = Vec::with_capacity(bg_embs.len() + 1);
        for e in &bg_embs {
            let s = tape.cosine_const(v_fg, e.clone());
            logits.push(tape.lin_comb(&[(s, 1.0 / tau)]));
        }
        logits.push(pos);
        let lse = tape.logsumexp(&logits);
        let frc_k = tape.lin_comb(&[(lse, 1.0), (pos, -1.0)]);
        frc_terms.push((frc_k, inv_k));

        // Background contrast.
        let s_bf = tape.cosine_const(v_bg, fg_mean);
        let bf_scale = if weights.brc_tau_on_bf { 1.0 / tau } else { 1.0 };
        let neg = tape.lin_comb(&[(s_bf, bf_scale)]);
        let bb_terms: Vec<(VarId, f64)> = bg_embs
            .iter()
            .map(|e| {
                let s = tape.cosine_const(v_bg, e.clone());
                (s, 1.0 / (bg_embs.len() as f64 * tau))
            })
            .collect();
        let pos_b = tape.lin_comb(&bb_terms);
        let lse_b = tape.logsumexp(&[neg, pos_b]);
        let brc_k = tape.lin_comb(&[(lse_b, 1.0), (pos_b, -1.0)]);
        brc_terms.push((brc_k, inv_k));
    }

    let frc = tape.lin_comb(&frc_terms);
    let brc = tape.lin_comb(&brc_terms);
    let reg = tape.lin_comb(&reg_terms);
    let total =
        tape.lin_comb(&[(frc, weights.alpha), (brc, weights.beta), (reg, weights.gamma)]);
    Ok(TracedStep { frc, brc, reg, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_baseline_corpus;
    use crate::encoders::{ConstEncoder, MockEncoder};
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn cosine_basics() {
        assert!((cosine_sim(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap()).abs() < 1e-15);
        assert!((cosine_sim(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm)));
        assert!(cosine_sim(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mean_fg_text_basics() {
        let single = vec![vec![0.3, -0.4]];
        assert_eq!(mean_fg_text(&single).unwrap(), vec![0.3, -0.4]);
        let pair = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(mean_fg_text(&pair).unwrap(), vec![0.5, 0.5]);
        assert!(mean_fg_text(&[]).is_err());
    }

    #[test]
    fn mean_fg_text_matches_loop_oracle() {
        let embs: Vec<Embedding> = (0..7)
            .map(|i| (0..5).map(|j| ((i * 5 + j) as f64 * 0.37).sin()).collect())
            .collect();
        let mean = mean_fg_text(&embs).unwrap();
        for j in 0..5 {
            let mut acc = 0.0;
            for e in &embs {
                acc += e[j];
            }
            assert!((mean[j] - acc / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn frc_symmetry_gives_ln2() {
        for v in [-3.0, 0.0, 0.9, 17.0] {
            assert!((frc_loss(v, &[v], 0.7) - LN2).abs() < 1e-12);
        }
    }

    #[test]
    fn frc_matches_scalar_oracle() {
        // -ln(e^{10/7} / (1 + e^{10/7})) evaluated independently.
        let expected = (1.0f64 + (-10.0f64 / 7.0).exp()).ln();
        assert!((expected - 0.21482991778590604).abs() < 1e-15);
        assert!((frc_loss(1.0, &[0.0], 0.7) - expected).abs() < 1e-12);
    }

    #[test]
    fn frc_vanishes_as_positive_dominates() {
        let mut last = frc_loss(0.0, &[0.0], 0.7);
        for s in [2.0, 5.0, 10.0, 30.0] {
            let l = frc_loss(s, &[0.0], 0.7);
            assert!(l < last);
            last = l;
        }
        assert!(last < 1e-10);
    }

    #[test]
    fn frc_ignores_minus_infinity_negative() {
        let base = frc_loss(0.6, &[0.1], 0.7);
        let extended = frc_loss(0.6, &[0.1, f64::NEG_INFINITY], 0.7);
        assert_eq!(base, extended);
        // A negative equal to the positive strictly increases the loss.
        let harder = frc_loss(0.6, &[0.1, 0.6], 0.7);
        assert!(harder > base);
    }

    #[test]
    fn brc_symmetry_and_oracle() {
        assert!((brc_loss(0.4, &[0.4], 0.7, true) - LN2).abs() < 1e-12);
        // -ln(1 / (1 + e^{10/7})) evaluated independently.
        let expected = (1.0f64 + (10.0f64 / 7.0).exp()).ln();
        assert!((expected - 1.6434013463573345).abs() < 1e-15);
        assert!((brc_loss(1.0, &[0.0], 0.7, true) - expected).abs() < 1e-12);
    }

    #[test]
    fn brc_averages_before_exponentiating() {
        let a = brc_loss(0.3, &[0.1, 0.7], 0.7, true);
        let b = brc_loss(0.3, &[(0.1 + 0.7) / 2.0], 0.7, true);
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn brc_tau_flag_changes_the_cross_term() {
        let with_tau = brc_loss(0.9, &[0.2], 0.7, true);
        let without = brc_loss(0.9, &[0.2], 0.7, false);
        // Removing the temperature shrinks the cross logit (0.9 < 0.9/0.7).
        assert!(without < with_tau);
    }

    #[test]
    fn reg_loss_basics() {
        let mut maps = ActivationMap::new(2, 2);
        maps.insert(1, vec![0.5; 4]).unwrap();
        assert_eq!(reg_loss(&maps), 0.5);

        let mut maps = ActivationMap::new(2, 2);
        maps.insert(1, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(reg_loss(&maps), 0.5);
    }

    #[test]
    fn reg_loss_matches_triple_loop_oracle() {
        let mut maps = ActivationMap::new(3, 4);
        for k in 1..=3u32 {
            let plane: Vec<f64> =
                (0..12).map(|i| ((i as f64 + k as f64) * 0.31).sin().abs()).collect();
            maps.insert(k, plane).unwrap();
        }
        let mut acc = 0.0;
        let mut count = 0;
        for (_, plane) in maps.iter() {
            for &v in plane {
                acc += v;
                count += 1;
            }
        }
        assert!((reg_loss(&maps) - acc / count as f64).abs() < 1e-15);
        // Extremes: all zeros and all ones.
        let mut zeros = ActivationMap::new(2, 2);
        zeros.insert(1, vec![0.0; 4]).unwrap();
        assert_eq!(reg_loss(&zeros), 0.0);
        let mut ones = ActivationMap::new(2, 2);
        ones.insert(1, vec![1.0; 4]).unwrap();
        assert_eq!(reg_loss(&ones), 1.0);
    }

    #[test]
    fn total_loss_weighting() {
        let w = LossWeights::voc();
        let b = total_loss(1.0, 1.0, 1.0, &w);
        assert!((b.total - 18.2).abs() < 1e-12);
        let b = total_loss(0.0, 0.0, 0.0, &w);
        assert_eq!(b.total, 0.0);
        let b = total_loss(1.0, 1.0, 1.0, &LossWeights::coco());
        assert!((b.total - 54.2).abs() < 1e-12);
    }

    #[test]
    fn step_losses_collapse_to_ln2_with_constant_encoder() {
        // Every similarity equals 1, so both contrasts sit at the
        // two-way symmetric point.
        let image = RasterImage::filled(8, 8, [0.5, 0.2, 0.7]);
        let mut cam = ActivationMap::new(4, 4);
        cam.insert(1, (0..16).map(|i| 0.2 + 0.04 * (i as f64)).collect::<Vec<_>>()).unwrap();
        let corpora = BTreeMap::from([(1u32, build_baseline_corpus(1, "ruby").unwrap())]);
        let enc = ConstEncoder(vec![0.3, -0.2, 0.9]);
        let weights = LossWeights::voc();
        let out = step_losses(&image, &cam, &corpora, 0.5, &weights, &enc).unwrap();
        assert!((out.frc - LN2).abs() < 1e-12);
        assert!((out.brc - LN2).abs() < 1e-12);
    }

    #[test]
    fn step_losses_reject_mismatched_corpora() {
        let image = RasterImage::filled(8, 8, [0.5; 3]);
        let mut cam = ActivationMap::new(4, 4);
        cam.insert(2, vec![0.5; 16]).unwrap();
        let corpora = BTreeMap::from([(1u32, build_baseline_corpus(1, "ruby").unwrap())]);
        let enc = ConstEncoder(vec![1.0, 0.0]);
        assert!(step_losses(&image, &cam, &corpora, 0.1, &LossWeights::voc(), &enc).is_err());
    }

    #[test]
    fn traced_step_matches_plain_step_losses() {
        let palette = crate::dataset::palette_for(3);
        let enc = MockEncoder::palette_aligned(palette, 24, 6, 42);
        let image = {
            let mut img = RasterImage::filled(12, 12, [0.2, 0.5, 0.3]);
            for y in 3..8 {
                for x in 4..9 {
                    img.set_pixel(y, x, [0.9, 0.1, 0.1]);
                }
            }
            img
        };
        let mut cam = ActivationMap::new(6, 6);
        cam.insert(1, (0..36).map(|i| ((i as f64 * 0.41).sin() * 0.5 + 0.5) * 0.9).collect::<Vec<_>>())
            .unwrap();
        let corpora_owned = BTreeMap::from([(1u32, build_baseline_corpus(1, "ruby").unwrap())]);
        let weights = LossWeights::voc();

        let plain = step_losses(&image, &cam, &corpora_owned, 0.3, &weights, &enc).unwrap();

        let mut tape = Tape::new();
        let plane = tape.param(Tensor::new(vec![6, 6], cam.plane(1).unwrap().to_vec()));
        let planes = BTreeMap::from([(1u32, plane)]);
        let corpora: BTreeMap<u32, &ClassCorpus> =
            corpora_owned.iter().map(|(k, v)| (*k, v)).collect();
        let mut cache = TextEmbeddingCache::new();
        let traced = trace_step_losses(
            &mut tape, &planes, &image, &corpora, 0.3, &weights, true, &enc, &mut cache,
        )
        .unwrap();
        assert!((tape.value(traced.frc).item() - plain.frc).abs() < 1e-12);
        assert!((tape.value(traced.brc).item() - plain.brc).abs() < 1e-12);
        assert!((tape.value(traced.reg).item() - plain.reg).abs() < 1e-12);
        assert!((tape.value(traced.total).item() - plain.total).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn contrast_losses_are_positive_finite_and_monotone(
            s_ff in -1.0f64..=1.0,
            negs in proptest::collection::vec(-1.0f64..=1.0, 1..8),
            tau in 0.2f64..=2.0,
        ) {
            let l = frc_loss(s_ff, &negs, tau);
            prop_assert!(l.is_finite() && l > 0.0);
            let better = frc_loss(s_ff + 0.25, &negs, tau);
            prop_assert!(better < l);

            let b = brc_loss(s_ff, &negs, tau, true);
            prop_assert!(b.is_finite() && b > 0.0);
        }

        #[test]
        fn frc_is_shift_invariant(
            s_ff in -1.0f64..=1.0,
            negs in proptest::collection::vec(-1.0f64..=1.0, 1..6),
            shift in -5.0f64..=5.0,
        ) {
            let a = frc_loss(s_ff, &negs, 0.7);
            let shifted: Vec<f64> = negs.iter().map(|s| s + shift).collect();
            let b = frc_loss(s_ff + shift, &shifted, 0.7);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
