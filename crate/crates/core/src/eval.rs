//! Pseudo-mask construction from activation maps and mIoU scoring, plus
//! the ablation and filter-ratio sweep drivers.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::activation::{compute_cam, ActivationMap, ClassifierWeights};
use crate::corpus::store::CorpusStore;
use crate::corpus::CorpusVariant;
use crate::dataset::DatasetManifest;
use crate::encoders::TraceEncoder;
use crate::error::{Error, Result};
use crate::image_io::{load_index_mask, RasterImage};
use crate::training::{
    forward_features, train_ritc, Backbone, BackboneConfig, LoadedDataset, ModelState,
    RitcOptions, TrainConfig,
};

/// Ground-truth pixels with this value are excluded from every count.
pub const IGNORE_INDEX: u8 = 255;

/// A plane of class indices; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    pub height: usize,
    pub width: usize,
    data: Vec<u8>,
}

impl SegMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "mask data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// Per-class IoU and their mean; classes with an empty union are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Index 0 is background, then one slot per foreground class.
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    /// Pixels that entered the counts (ignored pixels excluded).
    pub pixels: u64,
    pub fingerprint: String,
}

/// Accumulated pred/gt pixel counts over any number of images.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    /// `n_fg_classes` foreground classes plus background.
    pub fn new(n_fg_classes: usize) -> Self {
        let n = n_fg_classes + 1;
        Self { n, counts: vec![0; n * n] }
    }

    pub fn accumulate(&mut self, pred: &SegMask, gt: &SegMask) -> Result<()> {
        if pred.height != gt.height || pred.width != gt.width {
            return Err(Error::Shape(format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.height, pred.width, gt.height, gt.width
            )));
        }
        for (&p, &g) in pred.data.iter().zip(gt.data.iter()) {
            if g == IGNORE_INDEX {
                continue;
            }
            if (p as usize) >= self.n || (g as usize) >= self.n {
                return Err(Error::Eval(format!(
                    "mask index out of range: pred {p}, gt {g}, classes {}",
                    self.n
                )));
            }
            self.counts[g as usize * self.n + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn pixels(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.n)
            .map(|c| {
                let tp = self.counts[c * self.n + c];
                let row: u64 = (0..self.n).map(|j| self.counts[c * self.n + j]).sum();
                let col: u64 = (0..self.n).map(|j| self.counts[j * self.n + c]).sum();
                let union = row + col - tp;
                if union == 0 {
                    None
                } else {
                    Some(tp as f64 / union as f64)
                }
            })
            .collect()
    }

    pub fn report(&self, fingerprint: impl Into<String>) -> EvalReport {
        let per_class_iou = self.per_class_iou();
        let present: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
        let miou = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        EvalReport { per_class_iou, miou, pixels: self.pixels(), fingerprint: fingerprint.into() }
    }
}

/// Per-pixel argmax over the background threshold and the class planes;
/// background wins ties, earlier classes win class ties.
pub fn cam_to_mask(maps: &ActivationMap, bg_threshold: f64) -> SegMask {
    assert!((0.0..=1.0).contains(&bg_threshold));
    let (h, w) = (maps.height(), maps.width());
    let mut data = vec![0u8; h * w];
    for i in 0..h * w {
        let mut best = bg_threshold;
        let mut label = 0u8;
        for (class_id, plane) in maps.iter() {
            if plane[i] > best {
                best = plane[i];
                label = class_id as u8;
            }
        }
        data[i] = label;
    }
    SegMask { height: h, width: w, data }
}

/// Score one prediction against one ground truth.
pub fn miou(pred: &SegMask, gt: &SegMask, n_fg_classes: usize) -> Result<EvalReport> {
    let mut cm = ConfusionMatrix::new(n_fg_classes);
    cm.accumulate(pred, gt)?;
    Ok(cm.report(""))
}

/// Feature-resolution activation map for the classes present in `present`.
pub fn infer_activation(
    backbone: &dyn Backbone,
    state: &ModelState,
    image: &RasterImage,
    present: &BTreeSet<u32>,
) -> Result<ActivationMap> {
    let features = forward_features(backbone, &state.params, image)?;
    let weights = ClassifierWeights::new(state.classifier.clone())?;
    compute_cam(&features, &weights, present)
}

/// Image-resolution activation map (bilinearly upsampled planes).
pub fn infer_upsampled(
    backbone: &dyn Backbone,
    state: &ModelState,
    image: &RasterImage,
    present: &BTreeSet<u32>,
) -> Result<ActivationMap> {
    let cam = infer_activation(backbone, state, image, present)?;
    cam.resized(image.height(), image.width())
}

/// Evaluate pseudo-masks from a model against a dataset's ground truth.
/// Activation planes are produced for each image's labelled classes, as
/// the maps only exist for present labels.
pub fn evaluate_dataset(
    backbone: &dyn Backbone,
    state: &ModelState,
    manifest: &DatasetManifest,
    bg_threshold: f64,
    fingerprint: &str,
) -> Result<EvalReport> {
    let mut cm = ConfusionMatrix::new(manifest.classes.len());
    for entry in &manifest.entries {
        let mask_path = entry
            .mask
            .as_ref()
            .ok_or_else(|| Error::Eval(format!("entry `{}` has no ground-truth mask", entry.id)))?;
        let (h, w, gt_data) = load_index_mask(mask_path)?;
        let gt = SegMask::new(h, w, gt_data)?;
        let image = RasterImage::load_png(&entry.image)?;
        let present: BTreeSet<u32> = entry.labels.iter().copied().collect();
        if present.is_empty() {
            return Err(Error::Eval(format!("entry `{}` has no labels", entry.id)));
        }
        let maps = infer_upsampled(backbone, state, &image, &present)?;
        let pred = cam_to_mask(&maps, bg_threshold);
        cm.accumulate(&pred, &gt)?;
    }
    Ok(cm.report(fingerprint))
}

/// Sweep the pseudo-mask background threshold and report each score.
pub fn sweep_bg_threshold(
    backbone: &dyn Backbone,
    state: &ModelState,
    manifest: &DatasetManifest,
    thresholds: &[f64],
    fingerprint: &str,
) -> Result<Vec<(f64, EvalReport)>> {
    thresholds
        .iter()
        .map(|&t| Ok((t, evaluate_dataset(backbone, state, manifest, t, fingerprint)?)))
        .collect()
}

/// One cell of the ablation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub frc: bool,
    pub brc: bool,
    pub reg: bool,
    pub corpus: CorpusVariant,
    pub fat: bool,
}

impl AblationSpec {
    pub fn full() -> Self {
        Self { frc: true, brc: true, reg: true, corpus: CorpusVariant::full(), fat: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.frc && !self.brc && !self.reg {
            return Err(Error::Config("ablation needs at least one loss term".into()));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        let mut losses = Vec::new();
        if self.frc {
            losses.push("frc");
        }
        if self.brc {
            losses.push("brc");
        }
        if self.reg {
            losses.push("reg");
        }
        format!(
            "losses={} corpus={} fat={}",
            losses.join("+"),
            self.corpus.describe(),
            if self.fat { "on" } else { "off" }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub spec: AblationSpec,
    pub miou: f64,
    pub report: EvalReport,
}

/// Train one model per spec from a common initialization and evaluate
/// each; every run reuses the same seed and schedule.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    specs: &[AblationSpec],
    backbone: &dyn Backbone,
    backbone_config: &BackboneConfig,
    init: &ModelState,
    store: &CorpusStore,
    train_data: &LoadedDataset,
    eval_manifest: &DatasetManifest,
    config: &TrainConfig,
    encoder: &dyn TraceEncoder,
    bg_threshold: f64,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.validate()?;
        let mut cfg = *config;
        if !spec.frc {
            cfg.alpha = 0.0;
        }
        if !spec.brc {
            cfg.beta = 0.0;
        }
        if !spec.reg {
            cfg.gamma = 0.0;
        }
        let filtered = store.filtered(&spec.corpus)?;
        let opts = RitcOptions { fat_disabled: !spec.fat, ..Default::default() };
        let (ckpt, _) = train_ritc(
            backbone,
            init,
            &filtered,
            train_data,
            &cfg,
            encoder,
            &opts,
            backbone_config,
        )?;
        let state = ModelState { params: ckpt.params, classifier: ckpt.classifier };
        let fingerprint = crate::fingerprint::fingerprint(&(&cfg, spec));
        let report = evaluate_dataset(backbone, &state, eval_manifest, bg_threshold, &fingerprint)?;
        rows.push(AblationRow { spec: spec.clone(), miou: report.miou, report });
    }
    Ok(rows)
}

/// Train and evaluate once per filter ratio; returns (omega, mIoU) pairs.
#[allow(clippy::too_many_arguments)]
pub fn sweep_omega(
    omegas: &[f64],
    backbone: &dyn Backbone,
    backbone_config: &BackboneConfig,
    init: &ModelState,
    store: &CorpusStore,
    train_data: &LoadedDataset,
    eval_manifest: &DatasetManifest,
    config: &TrainConfig,
    encoder: &dyn TraceEncoder,
    bg_threshold: f64,
) -> Result<Vec<(f64, f64)>> {
    let mut points = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::Config(format!("omega {omega} outside [0,1]")));
        }
        let mut cfg = *config;
        cfg.omega = omega;
        let (ckpt, _) = train_ritc(
            backbone,
            init,
            store,
            train_data,
            &cfg,
            encoder,
            &RitcOptions::default(),
            backbone_config,
        )?;
        let state = ModelState { params: ckpt.params, classifier: ckpt.classifier };
        let fingerprint = crate::fingerprint::fingerprint(&cfg);
        let report = evaluate_dataset(backbone, &state, eval_manifest, bg_threshold, &fingerprint)?;
        points.push((omega, report.miou));
    }
    Ok(points)
}

/// Human-readable ablation table.
pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::from("miou    spec\n");
    for row in rows {
        out.push_str(&format!("{:<7.4} {}\n", row.miou, row.spec.describe()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(h: usize, w: usize, data: Vec<u8>) -> SegMask {
        SegMask::new(h, w, data).unwrap()
    }

    #[test]
    fn identical_masks_score_one() {
        let m = mask(2, 3, vec![0, 1, 1, 2, 0, 2]);
        let r = miou(&m, &m, 2).unwrap();
        assert_eq!(r.miou, 1.0);
        for iou in r.per_class_iou.iter().flatten() {
            assert_eq!(*iou, 1.0);
        }
    }

    #[test]
    fn half_covered_object_scores_half() {
        // 4 foreground pixels in gt, prediction covers exactly 2 of them.
        let gt = mask(2, 4, vec![1, 1, 1, 1, 0, 0, 0, 0]);
        let pred = mask(2, 4, vec![1, 1, 0, 0, 0, 0, 0, 0]);
        let r = miou(&pred, &gt, 1).unwrap();
        assert_eq!(r.per_class_iou[1], Some(0.5));
        // Background: intersection 4, union 6.
        assert_eq!(r.per_class_iou[0], Some(4.0 / 6.0));
        assert!((r.miou - (0.5 + 4.0 / 6.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn ignored_pixels_do_not_count() {
        let gt = mask(1, 4, vec![1, IGNORE_INDEX, 0, 0]);
        let pred = mask(1, 4, vec![1, 2, 0, 0]);
        let r = miou(&pred, &gt, 2).unwrap();
        assert_eq!(r.pixels, 3);
        assert_eq!(r.miou, 1.0);
        assert_eq!(r.per_class_iou[2], None);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = mask(1, 4, vec![0; 4]);
        let b = mask(2, 2, vec![0; 4]);
        assert!(miou(&a, &b, 1).is_err());
    }

    #[test]
    fn accumulation_is_additive() {
        let gt1 = mask(1, 4, vec![0, 1, 1, 0]);
        let pr1 = mask(1, 4, vec![0, 1, 0, 0]);
        let gt2 = mask(1, 4, vec![1, 1, 0, 0]);
        let pr2 = mask(1, 4, vec![1, 0, 0, 1]);

        let mut joint = ConfusionMatrix::new(1);
        joint.accumulate(&pr1, &gt1).unwrap();
        joint.accumulate(&pr2, &gt2).unwrap();

        let mut a = ConfusionMatrix::new(1);
        a.accumulate(&pr1, &gt1).unwrap();
        let mut b = ConfusionMatrix::new(1);
        b.accumulate(&pr2, &gt2).unwrap();
        a.merge(&b);
        assert_eq!(a, joint);
    }

    #[test]
    fn cam_to_mask_cases() {
        let mut maps = ActivationMap::new(1, 3);
        maps.insert(1, vec![0.1, 0.5, 0.9]).unwrap();
        maps.insert(2, vec![0.05, 0.7, 0.2]).unwrap();
        let m = cam_to_mask(&maps, 0.15);
        assert_eq!(m.data(), &[0, 2, 1]);

        // All below threshold: all background.
        let mut maps = ActivationMap::new(1, 2);
        maps.insert(1, vec![0.1, 0.12]).unwrap();
        assert_eq!(cam_to_mask(&maps, 0.15).data(), &[0, 0]);

        // Saturated plane: all foreground.
        let mut maps = ActivationMap::new(1, 2);
        maps.insert(1, vec![1.0, 1.0]).unwrap();
        assert_eq!(cam_to_mask(&maps, 0.15).data(), &[1, 1]);
    }

    #[test]
    fn threshold_one_yields_all_background() {
        let mut maps = ActivationMap::new(2, 2);
        maps.insert(1, vec![1.0, 0.3, 0.9, 1.0]).unwrap();
        let m = cam_to_mask(&maps, 1.0);
        assert!(m.data().iter().all(|&v| v == 0), "ties go to background");
    }

    /// Brute-force per-class counting, independent of ConfusionMatrix.
    fn miou_oracle(pred: &SegMask, gt: &SegMask, n_fg: usize) -> f64 {
        let mut sum = 0.0;
        let mut used = 0;
        for c in 0..=n_fg as u8 {
            let mut tp = 0u64;
            let mut fp = 0u64;
            let mut fn_ = 0u64;
            for (&p, &g) in pred.data().iter().zip(gt.data()) {
                if g == IGNORE_INDEX {
                    continue;
                }
                match (p == c, g == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            if tp + fp + fn_ > 0 {
                sum += tp as f64 / (tp + fp + fn_) as f64;
                used += 1;
            }
        }
        if used == 0 {
            0.0
        } else {
            sum / used as f64
        }
    }

    proptest! {
        #[test]
        fn miou_matches_brute_force(
            pred_raw in proptest::collection::vec(0u8..4, 36),
            gt_raw in proptest::collection::vec(prop_oneof![Just(255u8), (0u8..4).prop_map(|v| v)], 36),
        ) {
            let pred = mask(6, 6, pred_raw);
            let gt = mask(6, 6, gt_raw);
            let r = miou(&pred, &gt, 3).unwrap();
            let oracle = miou_oracle(&pred, &gt, 3);
            prop_assert!((r.miou - oracle).abs() < 1e-12);
        }

        #[test]
        fn miou_is_permutation_symmetric(
            pred_raw in proptest::collection::vec(0u8..3, 16),
            gt_raw in proptest::collection::vec(0u8..3, 16),
        ) {
            // Swap classes 1 and 2 in both masks.
            let swap = |v: u8| match v { 1 => 2, 2 => 1, other => other };
            let pred = mask(4, 4, pred_raw.clone());
            let gt = mask(4, 4, gt_raw.clone());
            let pred_s = mask(4, 4, pred_raw.iter().map(|&v| swap(v)).collect());
            let gt_s = mask(4, 4, gt_raw.iter().map(|&v| swap(v)).collect());
            let a = miou(&pred, &gt, 2).unwrap();
            let b = miou(&pred_s, &gt_s, 2).unwrap();
            prop_assert!((a.miou - b.miou).abs() < 1e-12);
        }

        #[test]
        fn perfect_score_iff_equal(
            data in proptest::collection::vec(0u8..3, 16),
            at0 in 0usize..16,
        ) {
            let gt = mask(4, 4, data.clone());
            let r = miou(&gt, &gt, 2).unwrap();
            prop_assert_eq!(r.miou, 1.0);
            let mut other = data.clone();
            other[at0] = (other[at0] + 1) % 3;
            let pred = mask(4, 4, other);
            let r = miou(&pred, &gt, 2).unwrap();
            prop_assert!(r.miou < 1.0);
        }
    }
}
