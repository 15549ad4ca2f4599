//! Trajectory data, emotion points, and the two triplet constructions used
//! for training: *single* (every input comes from one reference emotion) and
//! *joint* (every observed emotion serves as an input once).

mod embedding;
pub mod io;

pub use embedding::{default_emotion_embedding, embed_dataset, EmbeddingTable, NEUTRAL_LABEL};

use rand::seq::SliceRandom;

use crate::error::{dim, invalid, Result, VitlError};
use crate::rng;

/// Coordinate tolerance used when an emotion is selected by location.
pub const EMOTION_MATCH_TOL: f64 = 1e-10;

fn check_finite(what: &str, coords: &[f64]) -> Result<()> {
    if let Some(v) = coords.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("{what} has a non-finite coordinate ({v})")));
    }
    Ok(())
}

/// A style parameter θ, by default a point of the 2-D valence/arousal plane.
#[derive(Clone, Debug, PartialEq)]
pub struct EmotionPoint {
    coords: Vec<f64>,
    label: Option<String>,
}

impl EmotionPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_finite("emotion point", &coords)?;
        if coords.is_empty() {
            return Err(invalid("emotion point must have at least one coordinate"));
        }
        Ok(Self { coords, label: None })
    }

    pub fn labeled(label: impl Into<String>, coords: Vec<f64>) -> Result<Self> {
        let mut e = Self::new(coords)?;
        e.label = Some(label.into());
        Ok(e)
    }

    pub fn origin(p: usize) -> Self {
        Self { coords: vec![0.0; p], label: None }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn without_label(&self) -> Self {
        Self { coords: self.coords.clone(), label: None }
    }

    fn near(&self, other: &[f64]) -> bool {
        self.coords.len() == other.len()
            && self.coords.iter().zip(other).all(|(a, b)| (a - b).abs() <= EMOTION_MATCH_TOL)
    }
}

/// Landmark coordinates of one face, interleaved as `(x₁, y₁, …, x_M, y_M)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkVector(Vec<f64>);

impl LandmarkVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_finite("landmark vector", &coords)?;
        if coords.is_empty() {
            return Err(invalid("landmark vector must have at least one coordinate"));
        }
        Ok(Self(coords))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub emotion: EmotionPoint,
    pub landmarks: LandmarkVector,
}

/// One person's observed trajectory `θ̃_{i,j} ↦ z_i(θ̃_{i,j})`.
#[derive(Clone, Debug, PartialEq)]
pub struct Identity {
    pub id: String,
    pub observations: Vec<Observation>,
}

/// `n` identities observed at `m` emotions each, with an optional `n × m`
/// observation mask (`true` = usable for learning).
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    identities: Vec<Identity>,
    mask: Option<Vec<Vec<bool>>>,
    m: usize,
    d: usize,
    p: usize,
}

impl TrajectoryDataset {
    pub fn new(identities: Vec<Identity>) -> Result<Self> {
        let first = identities.first().ok_or_else(|| VitlError::Data("dataset has no identities".into()))?;
        let m = first.observations.len();
        let head = first
            .observations
            .first()
            .ok_or_else(|| VitlError::Data(format!("identity '{}' has no observations", first.id)))?;
        let (d, p) = (head.landmarks.dim(), head.emotion.dim());
        for ident in &identities {
            if ident.observations.len() != m {
                return Err(VitlError::Data(format!(
                    "identity '{}' has {} observations but '{}' has {m}; ragged trajectories must be expressed with a mask",
                    ident.id,
                    ident.observations.len(),
                    first.id
                )));
            }
            for obs in &ident.observations {
                if obs.landmarks.dim() != d || obs.emotion.dim() != p {
                    return Err(dim(format!(
                        "identity '{}' mixes dimensions (landmarks {} vs {d}, emotion {} vs {p})",
                        ident.id,
                        obs.landmarks.dim(),
                        obs.emotion.dim()
                    )));
                }
            }
        }
        Ok(Self { identities, mask: None, m, d, p })
    }

    /// Attaches an `n × m` mask, replacing any existing one.
    pub fn with_mask(mut self, mask: Vec<Vec<bool>>) -> Result<Self> {
        if mask.len() != self.n() || mask.iter().any(|row| row.len() != self.m) {
            return Err(dim(format!("mask must be {}x{}", self.n(), self.m)));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn identities(&self) -> &[Identity] {
        &self.identities
    }

    pub fn n(&self) -> usize {
        self.identities.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Landmark dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Emotion dimension.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn mask(&self) -> Option<&[Vec<bool>]> {
        self.mask.as_deref()
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask.as_ref().is_none_or(|mask| mask[i][j])
    }

    pub fn observed_count(&self) -> usize {
        match &self.mask {
            None => self.n() * self.m,
            Some(mask) => mask.iter().flatten().filter(|&&b| b).count(),
        }
    }

    /// Dataset restricted to the given identity indices (mask rows follow).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(VitlError::Data("subset selects no identities".into()));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(invalid(format!("identity index {i} out of range")));
        }
        Ok(Self {
            identities: indices.iter().map(|&i| self.identities[i].clone()).collect(),
            mask: self.mask.as_ref().map(|mask| indices.iter().map(|&i| mask[i].clone()).collect()),
            m: self.m,
            d: self.d,
            p: self.p,
        })
    }

    /// Slot `j` at which identity `i` was observed at `selector`.
    pub fn find_emotion(&self, i: usize, selector: &EmotionSelector) -> Option<usize> {
        self.identities[i].observations.iter().position(|o| selector.matches(&o.emotion))
    }
}

/// Identifies the reference emotion θ̃₀ by label or by location.
#[derive(Clone, Debug, PartialEq)]
pub enum EmotionSelector {
    Label(String),
    Point(EmotionPoint),
}

impl EmotionSelector {
    pub fn matches(&self, e: &EmotionPoint) -> bool {
        match self {
            EmotionSelector::Label(l) => e.label() == Some(l.as_str()),
            EmotionSelector::Point(p) => e.near(p.coords()),
        }
    }
}

impl std::fmt::Display for EmotionSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmotionSelector::Label(l) => write!(f, "'{l}'"),
            EmotionSelector::Point(p) => write!(f, "{:?}", p.coords()),
        }
    }
}

/// Where a triplet row came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowSource {
    /// Index of the identity in the source [`TrajectoryDataset`].
    pub identity: usize,
    /// Observation slot that supplied the input landmarks.
    pub input_slot: usize,
}

/// Training triplets `(x_i, Y_i, (θ_{i,j})_j)` with per-entry observation flags.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletDataset {
    inputs: Vec<LandmarkVector>,
    outputs: Vec<Vec<LandmarkVector>>,
    emotions: Vec<Vec<EmotionPoint>>,
    observed: Vec<Vec<bool>>,
    sources: Vec<RowSource>,
    m: usize,
    d: usize,
    p: usize,
}

impl TripletDataset {
    /// Assembles triplets directly; every entry is marked observed.
    pub fn new(
        inputs: Vec<LandmarkVector>,
        outputs: Vec<Vec<LandmarkVector>>,
        emotions: Vec<Vec<EmotionPoint>>,
    ) -> Result<Self> {
        let t = inputs.len();
        let observed = outputs.iter().map(|row| vec![true; row.len()]).collect();
        let sources = (0..t).map(|i| RowSource { identity: i, input_slot: 0 }).collect();
        Self::from_parts(inputs, outputs, emotions, observed, sources)
    }

    fn from_parts(
        inputs: Vec<LandmarkVector>,
        outputs: Vec<Vec<LandmarkVector>>,
        emotions: Vec<Vec<EmotionPoint>>,
        observed: Vec<Vec<bool>>,
        sources: Vec<RowSource>,
    ) -> Result<Self> {
        let t = inputs.len();
        if t == 0 {
            return Err(VitlError::Data("no triplets: every input observation is masked or the dataset is empty".into()));
        }
        if outputs.len() != t || emotions.len() != t || observed.len() != t || sources.len() != t {
            return Err(dim("triplet fields disagree on the number of rows"));
        }
        let m = outputs[0].len();
        let d = inputs[0].dim();
        let p = emotions[0].first().map(EmotionPoint::dim).unwrap_or(0);
        if m == 0 {
            return Err(invalid("triplet rows must have at least one output"));
        }
        for i in 0..t {
            if outputs[i].len() != m || emotions[i].len() != m || observed[i].len() != m {
                return Err(dim(format!("triplet row {i} does not have {m} entries")));
            }
            if inputs[i].dim() != d || outputs[i].iter().any(|y| y.dim() != d) {
                return Err(dim(format!("triplet row {i} has landmark dimension other than {d}")));
            }
            if emotions[i].iter().any(|e| e.dim() != p) {
                return Err(dim(format!("triplet row {i} has emotion dimension other than {p}")));
            }
        }
        Ok(Self { inputs, outputs, emotions, observed, sources, m, d, p })
    }

    pub fn t(&self) -> usize {
        self.inputs.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn inputs(&self) -> &[LandmarkVector] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Vec<LandmarkVector>] {
        &self.outputs
    }

    pub fn emotions(&self) -> &[Vec<EmotionPoint>] {
        &self.emotions
    }

    pub fn observed(&self) -> &[Vec<bool>] {
        &self.observed
    }

    pub fn sources(&self) -> &[RowSource] {
        &self.sources
    }

    pub fn all_observed(&self) -> bool {
        self.observed.iter().flatten().all(|&b| b)
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().flatten().filter(|&&b| b).count()
    }

    /// Observed `(row, slot)` pairs in identity-major, emotion-minor order.
    pub fn observed_pairs(&self) -> Vec<(usize, usize)> {
        observed_pairs(&self.observed)
    }

    /// Replaces the observation flags (e.g. to hide entries from training).
    pub fn with_observed(mut self, observed: Vec<Vec<bool>>) -> Result<Self> {
        if observed.len() != self.t() || observed.iter().any(|r| r.len() != self.m) {
            return Err(dim(format!("observation flags must be {}x{}", self.t(), self.m)));
        }
        self.observed = observed;
        Ok(self)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.t()) {
            return Err(invalid(format!("row {r} out of range")));
        }
        Self::from_parts(
            rows.iter().map(|&r| self.inputs[r].clone()).collect(),
            rows.iter().map(|&r| self.outputs[r].clone()).collect(),
            rows.iter().map(|&r| self.emotions[r].clone()).collect(),
            rows.iter().map(|&r| self.observed[r].clone()).collect(),
            rows.iter().map(|&r| self.sources[r]).collect(),
        )
    }
}

pub(crate) fn observed_pairs(observed: &[Vec<bool>]) -> Vec<(usize, usize)> {
    observed
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().filter(|(_, &b)| b).map(move |(j, _)| (i, j)))
        .collect()
}

/// Joint-construction row index of identity `i`, input slot `l` (zero-based).
pub fn joint_row(i: usize, l: usize, m: usize) -> usize {
    m * i + l
}

/// Inverse of [`joint_row`].
pub fn joint_coords(row: usize, m: usize) -> (usize, usize) {
    (row / m, row % m)
}

fn trajectory_row(data: &TrajectoryDataset, i: usize, input_slot: usize) -> (LandmarkVector, Vec<LandmarkVector>, Vec<EmotionPoint>, Vec<bool>, RowSource) {
    let ident = &data.identities[i];
    (
        ident.observations[input_slot].landmarks.clone(),
        ident.observations.iter().map(|o| o.landmarks.clone()).collect(),
        ident.observations.iter().map(|o| o.emotion.clone()).collect(),
        (0..data.m).map(|j| data.is_observed(i, j)).collect(),
        RowSource { identity: i, input_slot },
    )
}

fn assemble(rows: Vec<(LandmarkVector, Vec<LandmarkVector>, Vec<EmotionPoint>, Vec<bool>, RowSource)>) -> Result<TripletDataset> {
    let mut inputs = Vec::with_capacity(rows.len());
    let mut outputs = Vec::with_capacity(rows.len());
    let mut emotions = Vec::with_capacity(rows.len());
    let mut observed = Vec::with_capacity(rows.len());
    let mut sources = Vec::with_capacity(rows.len());
    for (x, y, e, o, s) in rows {
        inputs.push(x);
        outputs.push(y);
        emotions.push(e);
        observed.push(o);
        sources.push(s);
    }
    TripletDataset::from_parts(inputs, outputs, emotions, observed, sources)
}

/// Single-emotional-input triplets: `x_i = z_i(θ̃₀)`, `Y_i = (z_i(θ̃_{i,j}))_j`.
///
/// An identity whose reference observation is masked contributes no row.
pub fn build_single(data: &TrajectoryDataset, reference: &EmotionSelector) -> Result<TripletDataset> {
    let mut rows = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let slot = data.find_emotion(i, reference).ok_or_else(|| {
            VitlError::Data(format!(
                "identity '{}' has no observation at reference emotion {reference}",
                data.identities[i].id
            ))
        })?;
        if data.is_observed(i, slot) {
            rows.push(trajectory_row(data, i, slot));
        }
    }
    assemble(rows)
}

/// Joint-emotional-input triplets: row `m·i + l` uses `z_i(θ̃_{i,l})` as input
/// and the whole trajectory of identity `i` as outputs. Rows whose input
/// observation is masked are dropped.
pub fn build_joint(data: &TrajectoryDataset) -> Result<TripletDataset> {
    let mut rows = Vec::with_capacity(data.n() * data.m);
    for i in 0..data.n() {
        for l in 0..data.m {
            if data.is_observed(i, l) {
                rows.push(trajectory_row(data, i, l));
            }
        }
    }
    assemble(rows)
}

/// Training-set construction mode.
#[derive(Clone, Debug, PartialEq)]
pub enum Mode {
    Single(EmotionSelector),
    Joint,
}

impl Mode {
    pub fn build(&self, data: &TrajectoryDataset) -> Result<TripletDataset> {
        match self {
            Mode::Single(sel) => build_single(data, sel),
            Mode::Joint => build_joint(data),
        }
    }
}

/// Keeps a uniformly drawn subset of exactly `round(observed_fraction · n · m)`
/// entries, intersected with any mask already present. The kept entries are a
/// prefix of a seeded permutation, so masks drawn with one seed are nested
/// across fractions.
pub fn apply_mask(data: &TrajectoryDataset, observed_fraction: f64, seed: u64) -> Result<TrajectoryDataset> {
    if !(0.0..=1.0).contains(&observed_fraction) {
        return Err(invalid(format!("observed fraction must lie in [0, 1], got {observed_fraction}")));
    }
    let (n, m) = (data.n(), data.m);
    let total = n * m;
    let keep = (observed_fraction * total as f64).round() as usize;
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng::stream(seed, rng::Domain::Mask, 0));
    let mut drawn = vec![false; total];
    for &k in &order[..keep] {
        drawn[k] = true;
    }
    let mask = (0..n)
        .map(|i| (0..m).map(|j| drawn[m * i + j] && data.is_observed(i, j)).collect())
        .collect();
    data.clone().with_mask(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn toy(n: usize, m: usize, d: usize) -> TrajectoryDataset {
        let labels = ["neutral", "happy", "sad", "angry", "surprised", "fearful", "disgusted"];
        let identities = (0..n)
            .map(|i| Identity {
                id: format!("id{i}"),
                observations: (0..m)
                    .map(|j| Observation {
                        emotion: if j == 0 {
                            EmotionPoint::labeled("neutral", vec![0.0, 0.0]).unwrap()
                        } else {
                            let a = j as f64;
                            EmotionPoint::labeled(labels[j % labels.len()], vec![a.cos(), a.sin()]).unwrap()
                        },
                        landmarks: LandmarkVector::new((0..d).map(|k| (100 * i + 10 * j + k) as f64).collect()).unwrap(),
                    })
                    .collect(),
            })
            .collect();
        TrajectoryDataset::new(identities).unwrap()
    }

    fn neutral() -> EmotionSelector {
        EmotionSelector::Label("neutral".into())
    }

    #[test]
    fn single_uses_reference_inputs() {
        let data = toy(2, 3, 4);
        let s = build_single(&data, &neutral()).unwrap();
        assert_eq!(s.t(), 2);
        for i in 0..2 {
            assert_eq!(s.inputs()[i], data.identities()[i].observations[0].landmarks);
            assert_eq!(s.outputs()[i].len(), 3);
            assert_eq!(s.emotions()[i][2], data.identities()[i].observations[2].emotion);
        }
    }

    #[test]
    fn single_by_location() {
        let data = toy(2, 3, 4);
        let sel = EmotionSelector::Point(EmotionPoint::new(vec![1f64.cos(), 1f64.sin() + 1e-12]).unwrap());
        let s = build_single(&data, &sel).unwrap();
        assert_eq!(s.inputs()[1], data.identities()[1].observations[1].landmarks);
    }

    #[test]
    fn single_missing_reference_names_identity() {
        let mut data = toy(2, 3, 2);
        let mut idents = data.identities().to_vec();
        idents[1].observations[0].emotion = EmotionPoint::labeled("calm", vec![0.0, 0.0]).unwrap();
        data = TrajectoryDataset::new(idents).unwrap();
        match build_single(&data, &neutral()) {
            Err(VitlError::Data(msg)) => assert!(msg.contains("id1"), "{msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn single_degenerate_case() {
        let data = toy(1, 1, 3);
        let s = build_single(&data, &neutral()).unwrap();
        assert_eq!(s.t(), 1);
        assert_eq!(s.inputs()[0], s.outputs()[0][0]);
    }

    #[test]
    fn joint_sizes_and_self_outputs() {
        let data = toy(2, 3, 2);
        let j = build_joint(&data).unwrap();
        assert_eq!(j.t(), 6);
        for i in 0..2 {
            for l in 0..3 {
                let row = joint_row(i, l, 3);
                assert_eq!(j.outputs()[row][l], j.inputs()[row]);
                assert_eq!(j.sources()[row], RowSource { identity: i, input_slot: l });
            }
        }
        let one = build_joint(&toy(1, 2, 2)).unwrap();
        assert_eq!(one.outputs()[0], one.outputs()[1]);
    }

    #[test]
    fn joint_filtered_to_reference_equals_single() {
        let data = toy(4, 5, 3);
        let joint = build_joint(&data).unwrap();
        let rows: Vec<usize> =
            (0..joint.t()).filter(|&r| neutral().matches(&joint.emotions()[r][joint.sources()[r].input_slot])).collect();
        assert_eq!(joint.select_rows(&rows).unwrap(), build_single(&data, &neutral()).unwrap());
    }

    #[test]
    fn joint_index_round_trip() {
        for m in 1..6 {
            for i in 0..7 {
                for l in 0..m {
                    assert_eq!(joint_coords(joint_row(i, l, m), m), (i, l));
                }
            }
        }
    }

    #[test]
    fn ragged_and_mixed_dimension_data_rejected() {
        let data = toy(2, 3, 2);
        let mut idents = data.identities().to_vec();
        idents[1].observations.pop();
        assert!(matches!(TrajectoryDataset::new(idents), Err(VitlError::Data(_))));
        let mut idents = data.identities().to_vec();
        idents[1].observations[2].landmarks = LandmarkVector::new(vec![1.0]).unwrap();
        assert!(matches!(TrajectoryDataset::new(idents), Err(VitlError::Dimension(_))));
    }

    #[test]
    fn full_mask_is_identity() {
        let data = toy(3, 4, 2);
        let masked = apply_mask(&data, 1.0, 7).unwrap();
        assert!(masked.mask().unwrap().iter().flatten().all(|&b| b));
        assert_eq!(build_joint(&masked).unwrap(), build_joint(&data).unwrap());
    }

    #[test]
    fn half_mask_counts_exactly() {
        let data = toy(4, 5, 2);
        let a = apply_mask(&data, 0.5, 1234).unwrap();
        let b = apply_mask(&data, 0.5, 1234).unwrap();
        assert_eq!(a.observed_count(), 10);
        assert_eq!(a.mask(), b.mask());
        assert_ne!(apply_mask(&data, 0.5, 1235).unwrap().mask(), a.mask());
    }

    #[test]
    fn masks_with_one_seed_are_nested() {
        let data = toy(6, 5, 2);
        let mut prev = apply_mask(&data, 1.0, 11).unwrap();
        for f in [0.8, 0.6, 0.4, 0.2, 0.0] {
            let next = apply_mask(&data, f, 11).unwrap();
            for i in 0..6 {
                for j in 0..5 {
                    assert!(!next.is_observed(i, j) || prev.is_observed(i, j));
                }
            }
            prev = next;
        }
    }

    #[test]
    fn mask_rejects_bad_fraction() {
        assert!(apply_mask(&toy(2, 2, 1), 1.5, 0).is_err());
        assert!(apply_mask(&toy(2, 2, 1), -0.1, 0).is_err());
    }

    #[test]
    fn masked_inputs_drop_rows_and_zero_mask_is_data_error() {
        let data = toy(2, 3, 2).with_mask(vec![vec![false, true, true], vec![true, false, true]]).unwrap();
        let single = build_single(&data, &neutral()).unwrap();
        assert_eq!(single.t(), 1);
        assert_eq!(single.observed()[0], vec![true, false, true]);
        let joint = build_joint(&data).unwrap();
        assert_eq!(joint.t(), 4);
        let none = apply_mask(&data, 0.0, 1).unwrap();
        assert!(matches!(build_joint(&none), Err(VitlError::Data(_))));
    }

    proptest! {
        #[test]
        fn mask_composition(frac in 0.0f64..=1.0, seed in any::<u64>(), n in 1usize..6, m in 1usize..6) {
            let data = toy(n, m, 1);
            let once = apply_mask(&data, frac, seed).unwrap();
            prop_assert_eq!(
                once.observed_count(),
                (frac * (n * m) as f64).round() as usize
            );
            let twice = apply_mask(&once, 1.0, seed.wrapping_add(1)).unwrap();
            prop_assert_eq!(once.mask(), twice.mask());
        }
    }
}

#[cfg(test)]
pub(crate) use tests::toy;
