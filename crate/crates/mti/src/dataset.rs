//! Volume ingestion and slice-sample assembly.
//!
//! The pipeline is: load co-registered modality stacks plus labels, stretch
//! intensities per modality to `[0, 255]`, then per scenario assemble one
//! sample for every `(slice, augmentation[, bias field])` combination.
//! Samples are realized lazily — a [`SliceSample`] holds a reference to its
//! volume and the transform recipe, and produces pixel data on demand, so a
//! contaminated full-scale scenario (8960 samples of 512x512) never needs to
//! be materialized at once. Realization is a pure function of the recipe.
//!
//! Per-sample realization order: resize to the working resolution, then
//! augment (rotation, zoom, translation about the center), then contaminate
//! the input if the scenario demands. Bias-correction targets are the
//! augmented-but-clean input slices.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::biasfield::{BiasField, BiasMode};
use crate::error::{Error, Result};
use crate::raster;
use crate::scenarios::{ScenarioSpec, TaskKind};

/// MRI contrast names used throughout the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    T1,
    T2Flair,
    T1Ir,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::T1, Modality::T2Flair, Modality::T1Ir];

    /// File stem in the on-disk layout.
    pub fn stem(self) -> &'static str {
        match self {
            Modality::T1 => "t1",
            Modality::T2Flair => "flair",
            Modality::T1Ir => "ir",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Modality::T1 => "T1",
            Modality::T2Flair => "T2-FLAIR",
            Modality::T1Ir => "T1-IR",
        };
        f.write_str(name)
    }
}

/// Canonical label ids.
pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_GM: u8 = 1;
pub const LABEL_WM: u8 = 2;
pub const LABEL_CSF: u8 = 3;

/// Raw-id remapping applied at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMapping {
    /// Ids are already `{0: other, 1: gm, 2: wm, 3: csf}`.
    Canonical,
    /// MRBrainS18-style ids: cortical GM and basal ganglia fold into gm,
    /// WM and WM lesions into wm, CSF and ventricles into csf, the
    /// infratentorial classes into background/other.
    MrBrains18,
}

impl LabelMapping {
    pub fn map(self, raw: u8) -> Result<u8> {
        match self {
            LabelMapping::Canonical => {
                if raw <= 3 {
                    Ok(raw)
                } else {
                    Err(Error::UnknownLabel { id: raw as u32 })
                }
            }
            LabelMapping::MrBrains18 => match raw {
                0 => Ok(LABEL_BACKGROUND),
                1 | 2 => Ok(LABEL_GM),
                3 | 4 => Ok(LABEL_WM),
                5 | 6 => Ok(LABEL_CSF),
                7 | 8 => Ok(LABEL_BACKGROUND),
                _ => Err(Error::UnknownLabel { id: raw as u32 }),
            },
        }
    }
}

/// One subject's co-registered slice stacks plus tissue labels.
#[derive(Debug, Clone)]
pub struct MultimodalVolume {
    pub subject_id: String,
    pub modalities: BTreeMap<Modality, Array3<f64>>,
    pub labels: Array3<u8>,
}

impl MultimodalVolume {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.labels.dim()
    }

    pub fn slices(&self) -> usize {
        self.labels.dim().0
    }

    pub fn modality(&self, m: Modality) -> Result<&Array3<f64>> {
        self.modalities.get(&m).ok_or(Error::MissingModality {
            subject: self.subject_id.clone(),
            path: std::path::PathBuf::from(m.stem()),
        })
    }
}

/// Options for [`load_volume`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Enforce the expected raw dimensions.
    pub strict: bool,
    pub expected_dims: (usize, usize, usize),
    pub label_map: LabelMapping,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            strict: true,
            expected_dims: (40, 240, 240),
            label_map: LabelMapping::Canonical,
        }
    }
}

fn find_stack(dir: &Path, stem: &str) -> Option<std::path::PathBuf> {
    ["mtir", "nii"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.exists())
}

/// Loads one subject from `<root>/<subject_id>/{t1,flair,ir,labels}.<ext>`.
///
/// Stacks must agree in dimensions (always fatal); the expected raw
/// dimensions are additionally enforced when `strict` is set. Label ids are
/// remapped to the canonical `{0..3}` set.
pub fn load_volume(root: &Path, subject_id: &str, opts: &LoadOptions) -> Result<MultimodalVolume> {
    let dir = root.join(subject_id);
    let mut modalities = BTreeMap::new();
    for m in Modality::ALL {
        let path = find_stack(&dir, m.stem()).ok_or_else(|| Error::MissingModality {
            subject: subject_id.to_string(),
            path: dir.join(format!("{}.mtir", m.stem())),
        })?;
        modalities.insert(m, raster::read_volume_any(&path)?);
    }
    let labels_path = find_stack(&dir, "labels").ok_or_else(|| Error::MissingModality {
        subject: subject_id.to_string(),
        path: dir.join("labels.mtir"),
    })?;
    let labels_raw = raster::read_volume_any(&labels_path)?;

    let dims = labels_raw.dim();
    for (m, stack) in &modalities {
        if stack.dim() != dims {
            return Err(Error::DimensionMismatch {
                subject: subject_id.to_string(),
                detail: format!("{m} is {:?}, labels are {:?}", stack.dim(), dims),
            });
        }
    }
    if opts.strict && dims != opts.expected_dims {
        return Err(Error::DimensionMismatch {
            subject: subject_id.to_string(),
            detail: format!("expected {:?}, found {:?}", opts.expected_dims, dims),
        });
    }
    let mut labels = Array3::zeros(dims);
    for (dst, &src) in labels.iter_mut().zip(labels_raw.iter()) {
        if src < 0.0 || src.fract() != 0.0 || src > 255.0 {
            return Err(Error::UnknownLabel { id: src as u32 });
        }
        *dst = opts.label_map.map(src as u8)?;
    }
    Ok(MultimodalVolume {
        subject_id: subject_id.to_string(),
        modalities,
        labels,
    })
}

/// Subject directories under a data root, sorted for determinism.
pub fn list_subjects(root: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            out.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    out.sort();
    Ok(out)
}

/// Per-modality affine min/max stretch to `[0, 255]`. Labels are untouched.
pub fn stretch_intensity(mut volume: MultimodalVolume) -> Result<MultimodalVolume> {
    for (m, stack) in volume.modalities.iter_mut() {
        let lo = stack.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = stack.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo <= f64::EPSILON {
            return Err(Error::DegenerateRange {
                modality: m.to_string(),
                value: lo,
            });
        }
        let scale = 255.0 / (hi - lo);
        stack.mapv_inplace(|v| (v - lo) * scale);
    }
    Ok(volume)
}

/// Whether a resize/augment treats values as intensities or class ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceKind {
    Image,
    Label,
}

/// Resamples a slice: bilinear for images, nearest-neighbor for labels (so
/// no class id is invented). Half-pixel-center convention.
pub fn resize_slice(
    slice: &Array2<f64>,
    out_h: usize,
    out_w: usize,
    kind: SliceKind,
) -> Result<Array2<f64>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("resize target must be positive".into()));
    }
    let (h, w) = slice.dim();
    if (h, w) == (out_h, out_w) {
        return Ok(slice.clone());
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let out = Array2::from_shape_fn((out_h, out_w), |(r, c)| {
        let src_y = (r as f64 + 0.5) * sy - 0.5;
        let src_x = (c as f64 + 0.5) * sx - 0.5;
        match kind {
            SliceKind::Label => {
                let iy = (src_y + 0.5).floor().clamp(0.0, (h - 1) as f64) as usize;
                let ix = (src_x + 0.5).floor().clamp(0.0, (w - 1) as f64) as usize;
                slice[[iy, ix]]
            }
            SliceKind::Image => bilinear(slice, src_y, src_x),
        }
    });
    Ok(out)
}

fn bilinear(slice: &Array2<f64>, y: f64, x: f64) -> f64 {
    let (h, w) = slice.dim();
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    slice[[y0, x0]] * (1.0 - fy) * (1.0 - fx)
        + slice[[y0, x1]] * (1.0 - fy) * fx
        + slice[[y1, x0]] * fy * (1.0 - fx)
        + slice[[y1, x1]] * fy * fx
}

/// Deterministic geometric augmentation: rotation, then zoom, then
/// translation, all about the image center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationParams {
    pub rotation_deg: f64,
    pub zoom_factor: f64,
    /// Shift as a fraction of width/height.
    pub translate_xy: (f64, f64),
    pub seed: u64,
}

impl AugmentationParams {
    pub fn identity() -> Self {
        AugmentationParams {
            rotation_deg: 0.0,
            zoom_factor: 1.0,
            translate_xy: (0.0, 0.0),
            seed: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation_deg == 0.0 && self.zoom_factor == 1.0 && self.translate_xy == (0.0, 0.0)
    }
}

/// The four frozen training variants: identity plus three mild perturbations.
pub fn default_augmentations() -> Vec<AugmentationParams> {
    vec![
        AugmentationParams::identity(),
        AugmentationParams {
            rotation_deg: 5.0,
            zoom_factor: 1.0,
            translate_xy: (0.0, 0.0),
            seed: 1,
        },
        AugmentationParams {
            rotation_deg: -5.0,
            zoom_factor: 1.05,
            translate_xy: (0.0, 0.0),
            seed: 2,
        },
        AugmentationParams {
            rotation_deg: 0.0,
            zoom_factor: 0.95,
            translate_xy: (0.03, 0.03),
            seed: 3,
        },
    ]
}

/// Applies the augmentation to one slice. Out-of-frame regions fill with 0;
/// labels resample nearest-neighbor.
pub fn augment_slice(
    slice: &Array2<f64>,
    params: &AugmentationParams,
    kind: SliceKind,
) -> Result<Array2<f64>> {
    if params.zoom_factor <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "zoom_factor must be positive, got {}",
            params.zoom_factor
        )));
    }
    if params.is_identity() {
        return Ok(slice.clone());
    }
    let (h, w) = slice.dim();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let theta = params.rotation_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let z = params.zoom_factor;
    let (tx, ty) = (params.translate_xy.0 * w as f64, params.translate_xy.1 * h as f64);
    let out = Array2::from_shape_fn((h, w), |(r, c)| {
        // invert: the forward map sends p to c + z*R*(p - c) + t
        let dx = (c as f64 - cx - tx) / z;
        let dy = (r as f64 - cy - ty) / z;
        let src_x = cx + cos * dx + sin * dy;
        let src_y = cy - sin * dx + cos * dy;
        if src_x < -0.5 || src_y < -0.5 || src_x > (w as f64 - 0.5) || src_y > (h as f64 - 0.5) {
            return 0.0;
        }
        match kind {
            SliceKind::Label => {
                let iy = (src_y + 0.5).floor().clamp(0.0, (h - 1) as f64) as usize;
                let ix = (src_x + 0.5).floor().clamp(0.0, (w - 1) as f64) as usize;
                slice[[iy, ix]]
            }
            SliceKind::Image => bilinear(slice, src_y, src_x),
        }
    });
    Ok(out)
}

/// Encodes a canonical label slice as an RGB image: gray matter red, white
/// matter blue, CSF green, background black.
pub fn encode_segmentation(labels: &Array2<u8>) -> Result<Array3<f64>> {
    let (h, w) = labels.dim();
    let mut out = Array3::zeros((3, h, w));
    for r in 0..h {
        for c in 0..w {
            match labels[[r, c]] {
                LABEL_BACKGROUND => {}
                LABEL_GM => out[[0, r, c]] = 255.0,
                LABEL_WM => out[[2, r, c]] = 255.0,
                LABEL_CSF => out[[1, r, c]] = 255.0,
                other => return Err(Error::UnknownLabel { id: other as u32 }),
            }
        }
    }
    Ok(out)
}

/// Metadata identifying one sample's provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub subject_id: String,
    pub slice_index: usize,
    pub augmentation_id: u8,
    pub bias_field_id: Option<u32>,
    pub scenario_id: String,
    pub task_names: Vec<String>,
}

/// One training/testing unit: an input slice and one or two target slices.
///
/// Pixel data is produced on demand by [`SliceSample::input`] and
/// [`SliceSample::targets`]; the sample itself stores only the volume handle
/// and the transform recipe, so large contaminated scenarios stay cheap.
#[derive(Clone)]
pub struct SliceSample {
    pub meta: SampleMeta,
    volume: Arc<MultimodalVolume>,
    input_modality: Modality,
    tasks: Vec<crate::scenarios::TaskSpec>,
    augmentation: AugmentationParams,
    bias: Option<Arc<BiasField>>,
    bias_mode: BiasMode,
    out_size: usize,
}

impl fmt::Debug for SliceSample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SliceSample").field("meta", &self.meta).finish()
    }
}

fn replicate3(slice: &Array2<f64>) -> Array3<f64> {
    let (h, w) = slice.dim();
    let mut out = Array3::zeros((3, h, w));
    for ch in 0..3 {
        out.index_axis_mut(ndarray::Axis(0), ch).assign(slice);
    }
    out
}

impl SliceSample {
    /// Processed clean slice of `m` at working resolution (resized, augmented).
    fn processed_modality(&self, m: Modality) -> Result<Array2<f64>> {
        let stack = self.volume.modality(m)?;
        let raw = stack
            .index_axis(ndarray::Axis(0), self.meta.slice_index)
            .to_owned();
        let resized = resize_slice(&raw, self.out_size, self.out_size, SliceKind::Image)?;
        augment_slice(&resized, &self.augmentation, SliceKind::Image)
    }

    /// Augmented label slice at working resolution.
    pub fn label_slice(&self) -> Result<Array2<u8>> {
        let raw = self
            .volume
            .labels
            .index_axis(ndarray::Axis(0), self.meta.slice_index)
            .mapv(|v| v as f64);
        let resized = resize_slice(&raw, self.out_size, self.out_size, SliceKind::Label)?;
        let aug = augment_slice(&resized, &self.augmentation, SliceKind::Label)?;
        Ok(aug.mapv(|v| v as u8))
    }

    /// Network input `[3, H, W]` in `[0, 255]`, contaminated when the
    /// scenario demands it.
    pub fn input(&self) -> Result<Array3<f64>> {
        let mut slice = self.processed_modality(self.input_modality)?;
        if let Some(field) = &self.bias {
            slice = crate::biasfield::contaminate(&slice, field, self.bias_mode)?;
        }
        Ok(replicate3(&slice))
    }

    /// Targets in task order, each `[3, H, W]` in `[0, 255]`.
    pub fn targets(&self) -> Result<Vec<Array3<f64>>> {
        self.tasks
            .iter()
            .map(|task| match task.kind {
                TaskKind::Convert => {
                    let m = task.target_modality.expect("convert task has target");
                    Ok(replicate3(&self.processed_modality(m)?))
                }
                TaskKind::BiasCorrect => {
                    Ok(replicate3(&self.processed_modality(self.input_modality)?))
                }
                TaskKind::Segment => encode_segmentation(&self.label_slice()?),
            })
            .collect()
    }

    pub fn out_size(&self) -> usize {
        self.out_size
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn tasks(&self) -> &[crate::scenarios::TaskSpec] {
        &self.tasks
    }
}

/// Assembles samples for a scenario: one per
/// `(subject, slice, augmentation[, bias field])`. Inputs are contaminated
/// iff the scenario is contaminated; targets follow the scenario's task
/// order; segmentation targets go through [`encode_segmentation`].
pub fn build_samples(
    volumes: &[Arc<MultimodalVolume>],
    scenario: &ScenarioSpec,
    augmentations: &[AugmentationParams],
    bias_fields: &[BiasField],
    bias_mode: BiasMode,
    out_size: usize,
) -> Result<Vec<SliceSample>> {
    for volume in volumes {
        volume.modality(scenario.input_modality)?;
        for task in &scenario.tasks {
            if let Some(m) = task.target_modality {
                volume.modality(m)?;
            }
        }
    }
    if scenario.contaminated && bias_fields.is_empty() {
        return Err(Error::InvalidArgument(
            "contaminated scenario needs at least one bias field".into(),
        ));
    }
    let fields: Vec<Arc<BiasField>> = bias_fields.iter().cloned().map(Arc::new).collect();
    let task_names: Vec<String> = scenario.tasks.iter().map(|t| t.name()).collect();
    let mut out = Vec::new();
    for volume in volumes {
        for slice_index in 0..volume.slices() {
            for (aug_id, aug) in augmentations.iter().enumerate() {
                let field_slots: Vec<Option<Arc<BiasField>>> = if scenario.contaminated {
                    fields.iter().cloned().map(Some).collect()
                } else {
                    vec![None]
                };
                for field in field_slots {
                    out.push(SliceSample {
                        meta: SampleMeta {
                            subject_id: volume.subject_id.clone(),
                            slice_index,
                            augmentation_id: aug_id as u8,
                            bias_field_id: field.as_ref().map(|f| f.field_id),
                            scenario_id: scenario.id(),
                            task_names: task_names.clone(),
                        },
                        volume: Arc::clone(volume),
                        input_modality: scenario.input_modality,
                        tasks: scenario.tasks.clone(),
                        augmentation: *aug,
                        bias: field,
                        bias_mode,
                        out_size,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::builtin_scenarios;
    use ndarray::array;
    use tempfile::tempdir;

    pub(crate) fn synth_volume(subject: &str, slices: usize, size: usize) -> MultimodalVolume {
        let mut modalities = BTreeMap::new();
        for (i, m) in Modality::ALL.into_iter().enumerate() {
            modalities.insert(
                m,
                Array3::from_shape_fn((slices, size, size), |(d, r, c)| {
                    ((d * 37 + r * 11 + c * 5 + i * 101) % 256) as f64
                }),
            );
        }
        MultimodalVolume {
            subject_id: subject.to_string(),
            modalities,
            labels: Array3::from_shape_fn((slices, size, size), |(d, r, c)| {
                ((d + r + c) % 4) as u8
            }),
        }
    }

    fn write_volume(dir: &Path, vol: &MultimodalVolume) {
        let subdir = dir.join(&vol.subject_id);
        std::fs::create_dir_all(&subdir).unwrap();
        for (m, stack) in &vol.modalities {
            raster::write_stack(
                &subdir.join(format!("{}.mtir", m.stem())),
                stack,
                raster::Dtype::F32,
            )
            .unwrap();
        }
        raster::write_stack(
            &subdir.join("labels.mtir"),
            &vol.labels.mapv(|v| v as f64),
            raster::Dtype::U8,
        )
        .unwrap();
    }

    #[test]
    fn load_roundtrip_bit_identical() {
        let dir = tempdir().unwrap();
        let vol = synth_volume("s1", 4, 16);
        write_volume(dir.path(), &vol);
        let opts = LoadOptions {
            strict: true,
            expected_dims: (4, 16, 16),
            label_map: LabelMapping::Canonical,
        };
        let back = load_volume(dir.path(), "s1", &opts).unwrap();
        assert_eq!(back.labels, vol.labels);
        for m in Modality::ALL {
            assert_eq!(back.modalities[&m], vol.modalities[&m]);
        }
    }

    #[test]
    fn load_rejects_missing_modality() {
        let dir = tempdir().unwrap();
        let vol = synth_volume("s1", 2, 8);
        write_volume(dir.path(), &vol);
        std::fs::remove_file(dir.path().join("s1/ir.mtir")).unwrap();
        let opts = LoadOptions {
            strict: false,
            ..Default::default()
        };
        assert!(matches!(
            load_volume(dir.path(), "s1", &opts),
            Err(Error::MissingModality { .. })
        ));
    }

    #[test]
    fn load_rejects_depth_mismatch() {
        let dir = tempdir().unwrap();
        let vol = synth_volume("s1", 4, 8);
        write_volume(dir.path(), &vol);
        let short = Array3::zeros((3, 8, 8));
        raster::write_stack(&dir.path().join("s1/t1.mtir"), &short, raster::Dtype::F32).unwrap();
        let opts = LoadOptions {
            strict: true,
            expected_dims: (4, 8, 8),
            label_map: LabelMapping::Canonical,
        };
        assert!(matches!(
            load_volume(dir.path(), "s1", &opts),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mrbrains_label_mapping() {
        assert_eq!(LabelMapping::MrBrains18.map(2).unwrap(), LABEL_GM);
        assert_eq!(LabelMapping::MrBrains18.map(4).unwrap(), LABEL_WM);
        assert_eq!(LabelMapping::MrBrains18.map(6).unwrap(), LABEL_CSF);
        assert_eq!(LabelMapping::MrBrains18.map(8).unwrap(), LABEL_BACKGROUND);
        assert!(LabelMapping::MrBrains18.map(9).is_err());
        assert!(LabelMapping::Canonical.map(4).is_err());
    }

    #[test]
    fn stretch_maps_endpoints() {
        let mut vol = synth_volume("s1", 1, 4);
        vol.modalities.insert(
            Modality::T1,
            Array3::from_shape_fn((1, 4, 4), |(_, r, c)| {
                100.0 + (r * 4 + c) as f64 * (512.0 / 15.0)
            }),
        );
        let out = stretch_intensity(vol).unwrap();
        let t1 = &out.modalities[&Modality::T1];
        let lo = t1.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = t1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((lo - 0.0).abs() < 1e-12 && (hi - 255.0).abs() < 1e-12);
    }

    #[test]
    fn stretch_three_value_stack() {
        let mut vol = synth_volume("s1", 1, 2);
        vol.modalities.insert(
            Modality::T1,
            Array3::from_shape_vec((1, 2, 2), vec![10.0, 20.0, 30.0, 10.0]).unwrap(),
        );
        let out = stretch_intensity(vol).unwrap();
        let t1 = &out.modalities[&Modality::T1];
        assert!((t1[[0, 0, 0]] - 0.0).abs() < 1e-12);
        assert!((t1[[0, 0, 1]] - 127.5).abs() < 1e-12);
        assert!((t1[[0, 1, 0]] - 255.0).abs() < 1e-12);
    }

    #[test]
    fn stretch_is_idempotent_within_rounding() {
        let vol = synth_volume("s1", 2, 8);
        let once = stretch_intensity(vol).unwrap();
        let twice = stretch_intensity(once.clone()).unwrap();
        for m in Modality::ALL {
            let d = (&once.modalities[&m] - &twice.modalities[&m])
                .mapv(f64::abs)
                .iter()
                .cloned()
                .fold(0.0, f64::max);
            assert!(d <= 1.0, "modality {m} drifted by {d}");
        }
    }

    #[test]
    fn stretch_rejects_constant_modality() {
        let mut vol = synth_volume("s1", 1, 2);
        vol.modalities
            .insert(Modality::T1Ir, Array3::from_elem((1, 2, 2), 7.0));
        assert!(matches!(
            stretch_intensity(vol),
            Err(Error::DegenerateRange { .. })
        ));
    }

    #[test]
    fn resize_identity_is_copy() {
        let s = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(resize_slice(&s, 2, 2, SliceKind::Image).unwrap(), s);
    }

    #[test]
    fn resize_label_2x_nearest() {
        let s = array![[0.0, 1.0], [2.0, 3.0]];
        let out = resize_slice(&s, 4, 4, SliceKind::Label).unwrap();
        let expect = array![
            [0.0, 0.0, 1.0, 1.0],
            [0.0, 0.0, 1.0, 1.0],
            [2.0, 2.0, 3.0, 3.0],
            [2.0, 2.0, 3.0, 3.0]
        ];
        assert_eq!(out, expect);
    }

    #[test]
    fn resize_image_preserves_range() {
        let s = Array2::from_shape_fn((24, 24), |(r, c)| ((r * 24 + c) % 256) as f64);
        let out = resize_slice(&s, 51, 51, SliceKind::Image).unwrap();
        assert!(out.iter().all(|&v| (0.0..=255.0).contains(&v)));
    }

    #[test]
    fn resize_label_never_invents_ids() {
        let s = Array2::from_shape_fn((9, 9), |(r, c)| ((r * 3 + c) % 4) as f64);
        for (oh, ow) in [(4, 7), (18, 18), (13, 5)] {
            let out = resize_slice(&s, oh, ow, SliceKind::Label).unwrap();
            assert!(out
                .iter()
                .all(|&v| v == 0.0 || v == 1.0 || v == 2.0 || v == 3.0));
        }
    }

    #[test]
    fn resize_rejects_zero_target() {
        let s = Array2::zeros((2, 2));
        assert!(resize_slice(&s, 0, 2, SliceKind::Image).is_err());
    }

    #[test]
    fn augment_identity_is_exact() {
        let s = Array2::from_shape_fn((7, 7), |(r, c)| (r * 7 + c) as f64);
        let out = augment_slice(&s, &AugmentationParams::identity(), SliceKind::Image).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn augment_rotation_90_matches_hand_enumeration() {
        let s = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]];
        let params = AugmentationParams {
            rotation_deg: 90.0,
            zoom_factor: 1.0,
            translate_xy: (0.0, 0.0),
            seed: 0,
        };
        let out = augment_slice(&s, &params, SliceKind::Image).unwrap();
        // output (r, c) samples source (row 2-c, col r), enumerated by hand
        let expect = array![[7.0, 4.0, 1.0], [8.0, 5.0, 2.0], [9.0, 6.0, 3.0]];
        for r in 0..3 {
            for c in 0..3 {
                assert!(
                    (out[[r, c]] - expect[[r, c]]).abs() < 1e-9,
                    "at ({r},{c}): {} vs {}",
                    out[[r, c]],
                    expect[[r, c]]
                );
            }
        }
    }

    #[test]
    fn augment_rejects_nonpositive_zoom() {
        let s = Array2::zeros((4, 4));
        let params = AugmentationParams {
            zoom_factor: 0.0,
            ..AugmentationParams::identity()
        };
        assert!(augment_slice(&s, &params, SliceKind::Image).is_err());
    }

    #[test]
    fn default_augmentations_are_four_with_identity_first() {
        let augs = default_augmentations();
        assert_eq!(augs.len(), 4);
        assert!(augs[0].is_identity());
    }

    #[test]
    fn encode_all_background_is_zero() {
        let labels = Array2::zeros((4, 4));
        let rgb = encode_segmentation(&labels).unwrap();
        assert_eq!(rgb.sum(), 0.0);
    }

    #[test]
    fn encode_single_gm_pixel() {
        let mut labels = Array2::zeros((3, 3));
        labels[[1, 2]] = LABEL_GM;
        let rgb = encode_segmentation(&labels).unwrap();
        assert_eq!(rgb[[0, 1, 2]], 255.0);
        assert_eq!(rgb[[1, 1, 2]], 0.0);
        assert_eq!(rgb[[2, 1, 2]], 0.0);
        assert_eq!(rgb.sum(), 255.0);
    }

    #[test]
    fn encode_mixed_2x2_per_pixel_table() {
        let labels = array![[0u8, 1], [2, 3]];
        let rgb = encode_segmentation(&labels).unwrap();
        // background: all zero; gm: red; wm: blue; csf: green
        assert_eq!(
            (rgb[[0, 0, 0]], rgb[[1, 0, 0]], rgb[[2, 0, 0]]),
            (0.0, 0.0, 0.0)
        );
        assert_eq!(
            (rgb[[0, 0, 1]], rgb[[1, 0, 1]], rgb[[2, 0, 1]]),
            (255.0, 0.0, 0.0)
        );
        assert_eq!(
            (rgb[[0, 1, 0]], rgb[[1, 1, 0]], rgb[[2, 1, 0]]),
            (0.0, 0.0, 255.0)
        );
        assert_eq!(
            (rgb[[0, 1, 1]], rgb[[1, 1, 1]], rgb[[2, 1, 1]]),
            (0.0, 255.0, 0.0)
        );
    }

    #[test]
    fn encode_rejects_unknown_id() {
        let labels = array![[5u8]];
        assert!(matches!(
            encode_segmentation(&labels),
            Err(Error::UnknownLabel { id: 5 })
        ));
    }

    fn arc_volumes(n: usize, slices: usize, size: usize) -> Vec<Arc<MultimodalVolume>> {
        (0..n)
            .map(|i| {
                Arc::new(stretch_intensity(synth_volume(&format!("s{i}"), slices, size)).unwrap())
            })
            .collect()
    }

    #[test]
    fn build_samples_counts() {
        let volumes = arc_volumes(2, 4, 16);
        let augs = default_augmentations();
        let scenarios = builtin_scenarios();
        let clean = &scenarios[0]; // 1A, uncontaminated
        let samples =
            build_samples(&volumes, clean, &augs, &[], BiasMode::Multiplicative, 32).unwrap();
        assert_eq!(samples.len(), 2 * 4 * 4);
        assert!(samples.iter().all(|s| s.meta.bias_field_id.is_none()));
        assert!(samples.iter().all(|s| s.task_count() == 2));

        let fields: Vec<_> = (1..=8)
            .map(|id| crate::biasfield::generate_bias_field(id, 32, 32).unwrap())
            .collect();
        let dirty = scenarios.iter().find(|s| s.scenario_id == 2).unwrap();
        let samples =
            build_samples(&volumes, dirty, &augs, &fields, BiasMode::Multiplicative, 32).unwrap();
        assert_eq!(samples.len(), 2 * 4 * 4 * 8);
        assert!(samples
            .iter()
            .all(|s| matches!(s.meta.bias_field_id, Some(1..=8))));
    }

    #[test]
    fn realized_sample_shapes_and_ranges() {
        let volumes = arc_volumes(1, 2, 16);
        let scenarios = builtin_scenarios();
        let seg = scenarios.iter().find(|s| s.scenario_id == 3).unwrap();
        let samples = build_samples(
            &volumes,
            seg,
            &[AugmentationParams::identity()],
            &[],
            BiasMode::Multiplicative,
            32,
        )
        .unwrap();
        let s = &samples[0];
        let input = s.input().unwrap();
        assert_eq!(input.dim(), (3, 32, 32));
        let targets = s.targets().unwrap();
        assert_eq!(targets.len(), 2);
        for t in &targets {
            assert_eq!(t.dim(), (3, 32, 32));
            assert!(t.iter().all(|&v| (0.0..=255.0).contains(&v)));
        }
        assert!(input.iter().all(|&v| (0.0..=255.0).contains(&v)));
    }

    #[test]
    fn build_samples_rejects_missing_modality_request() {
        let mut vol = synth_volume("s1", 2, 8);
        vol.modalities.remove(&Modality::T1Ir);
        let volumes = vec![Arc::new(stretch_intensity(vol).unwrap())];
        let scenarios = builtin_scenarios();
        // scenario 1A needs T1-IR as a conversion target
        let err = build_samples(
            &volumes,
            &scenarios[0],
            &[AugmentationParams::identity()],
            &[],
            BiasMode::Multiplicative,
            16,
        );
        assert!(matches!(err, Err(Error::MissingModality { .. })));
    }
}
