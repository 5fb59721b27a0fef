//! Similarity voting: one Siamese model compares a test image with K correct
//! references and the majority of per-reference decisions gives the verdict.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{to_batch, InstallClass, LabeledImage};
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::seed::{self, Stream};
use crate::tensor::Tensor;
use crate::train::{similarity_decision, ConfusionCounts, MetricsReport};

pub const DEFAULT_K: usize = 5;

/// K distinct correct-class reference images.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePanel {
    pub members: Vec<LabeledImage>,
    pub seed: u64,
}

impl ReferencePanel {
    pub fn new(members: Vec<LabeledImage>, seed: u64) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("reference panel needs at least one image".into()));
        }
        for (i, m) in members.iter().enumerate() {
            if m.class != InstallClass::Correct {
                return Err(Error::Contract(format!("panel member `{}` is not correct-class", m.id)));
            }
            if members[..i].iter().any(|o| o.id == m.id) {
                return Err(Error::Contract(format!("panel member `{}` appears twice", m.id)));
            }
        }
        Ok(Self { members, seed })
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn manifest(&self) -> PanelManifest {
        PanelManifest {
            k: self.k(),
            seed: self.seed,
            ids: self.members.iter().map(|m| m.id.clone()).collect(),
        }
    }

    /// Rebuilds a panel from a manifest by looking its ids up in `pool`.
    pub fn from_manifest(manifest: &PanelManifest, pool: &[LabeledImage]) -> Result<Self> {
        if manifest.ids.len() != manifest.k {
            return Err(Error::Format(format!(
                "panel manifest lists {} ids but K = {}",
                manifest.ids.len(),
                manifest.k
            )));
        }
        let members = manifest
            .ids
            .iter()
            .map(|id| {
                pool.iter()
                    .find(|img| &img.id == id)
                    .cloned()
                    .ok_or_else(|| Error::Contract(format!("panel image `{id}` is not in the training split")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(members, manifest.seed)
    }
}

/// Reloadable record of a panel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelManifest {
    pub k: usize,
    pub seed: u64,
    pub ids: Vec<String>,
}

impl PanelManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Draws `k` distinct correct-class images uniformly without replacement from
/// a training split, in draw order.
pub fn select_reference_panel(train: &[LabeledImage], k: usize, seed: u64) -> Result<ReferencePanel> {
    let correct: Vec<&LabeledImage> = train.iter().filter(|i| i.class == InstallClass::Correct).collect();
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if k > correct.len() {
        return Err(Error::Config(format!(
            "K = {k} exceeds the {} correct-class training images available for the panel",
            correct.len()
        )));
    }
    let mut rng = seed::rng(Stream::Panel, seed, 0, 0);
    let picks = rand::seq::index::sample(&mut rng, correct.len(), k);
    ReferencePanel::new(picks.into_iter().map(|i| correct[i].clone()).collect(), seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResult {
    pub scores: Vec<f32>,
    /// `true` where the reference judged the test image the same class.
    pub decisions: Vec<bool>,
    pub same_votes: usize,
    pub different_votes: usize,
    pub verdict: InstallClass,
}

/// Correct iff strictly more than half of the `k` votes are "same"; an exact tie is incorrect.
pub fn majority_verdict(same_votes: usize, k: usize) -> InstallClass {
    if 2 * same_votes > k {
        InstallClass::Correct
    } else {
        InstallClass::Incorrect
    }
}

/// Turns per-reference similarities into decisions and a verdict.
pub fn tally(scores: Vec<f32>, threshold: f32) -> Result<VoteResult> {
    if scores.is_empty() {
        return Err(Error::Config("cannot vote with an empty panel".into()));
    }
    let decisions: Vec<bool> = scores
        .iter()
        .map(|&s| similarity_decision(s, threshold) == InstallClass::Correct)
        .collect();
    let same_votes = decisions.iter().filter(|&&d| d).count();
    let k = scores.len();
    Ok(VoteResult {
        scores,
        decisions,
        same_votes,
        different_votes: k - same_votes,
        verdict: majority_verdict(same_votes, k),
    })
}

/// Produces, for each test image, one similarity per panel member.
pub trait PanelScorer {
    fn panel_scores(&self, tests: &[LabeledImage]) -> Result<Vec<Vec<f32>>>;
}

/// Scores with a Siamese graph, embedding the panel once.
pub struct SnnPanelScorer<'a> {
    graph: &'a ModelGraph,
    panel_features: Tensor,
}

impl<'a> SnnPanelScorer<'a> {
    pub fn new(graph: &'a ModelGraph, panel: &ReferencePanel) -> Result<Self> {
        let batch = to_batch(&panel.members.iter().map(|m| &m.pixels).collect::<Vec<_>>())?;
        Ok(Self {
            graph,
            panel_features: graph.embed_batch(&batch)?,
        })
    }
}

impl PanelScorer for SnnPanelScorer<'_> {
    fn panel_scores(&self, tests: &[LabeledImage]) -> Result<Vec<Vec<f32>>> {
        let k = self.panel_features.shape()[0];
        let d = self.graph.feature_width();
        let mut out = Vec::with_capacity(tests.len());
        for chunk in tests.chunks(32) {
            let batch = to_batch(&chunk.iter().map(|i| &i.pixels).collect::<Vec<_>>())?;
            let feats = self.graph.embed_batch(&batch)?;
            for row in feats.data().chunks(d) {
                let q = Tensor::new(vec![k, d], row.repeat(k))?;
                out.push(self.graph.similarity_from_features(&self.panel_features, &q)?);
            }
        }
        Ok(out)
    }
}

pub fn similarity_vote(
    graph: &ModelGraph,
    panel: &ReferencePanel,
    test_image: &LabeledImage,
    threshold: f32,
) -> Result<VoteResult> {
    let scores = SnnPanelScorer::new(graph, panel)?.panel_scores(std::slice::from_ref(test_image))?;
    tally(scores.into_iter().next().unwrap_or_default(), threshold)
}

/// Votes on every image with any scorer; positive class is "incorrectly installed".
pub fn vote_evaluate_with(
    scorer: &dyn PanelScorer,
    images: &[LabeledImage],
    threshold: f32,
) -> Result<(MetricsReport, Vec<VoteResult>)> {
    if images.is_empty() {
        return Err(Error::EmptyClass("evaluation split is empty".into()));
    }
    let all = scorer.panel_scores(images)?;
    let mut counts = ConfusionCounts::default();
    let mut votes = Vec::with_capacity(images.len());
    for (img, scores) in images.iter().zip(all) {
        let v = tally(scores, threshold)?;
        counts.record(img.class, v.verdict);
        votes.push(v);
    }
    Ok((MetricsReport::from_counts(counts)?, votes))
}

pub fn vote_evaluate(
    graph: &ModelGraph,
    panel: &ReferencePanel,
    images: &[LabeledImage],
    threshold: f32,
) -> Result<MetricsReport> {
    let scorer = SnnPanelScorer::new(graph, panel)?;
    Ok(vote_evaluate_with(&scorer, images, threshold)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic;

    #[test]
    fn hand_counted_majority() {
        let v = tally(vec![0.9, 0.8, 0.6, 0.4, 0.3], 0.5).unwrap();
        assert_eq!((v.same_votes, v.different_votes), (3, 2));
        assert_eq!(v.verdict, InstallClass::Correct);
        let v = tally(vec![0.9, 0.5, 0.4, 0.1], 0.5).unwrap();
        assert_eq!(v.same_votes, 2);
        assert_eq!(v.verdict, InstallClass::Incorrect);
        for k in 1..7 {
            assert_eq!(tally(vec![0.7; k], 0.5).unwrap().verdict, InstallClass::Correct);
        }
        assert!(tally(Vec::new(), 0.5).is_err());
    }

    #[test]
    fn panel_selection() {
        let ds = synthetic::separable(6, 1, 64, 0);
        let a = select_reference_panel(&ds.train, 3, 11).unwrap();
        assert_eq!(a, select_reference_panel(&ds.train, 3, 11).unwrap());
        assert!(a.members.iter().all(|m| m.class == InstallClass::Correct));
        let all = select_reference_panel(&ds.train, 6, 1).unwrap();
        let mut ids: Vec<_> = all.members.iter().map(|m| m.id.clone()).collect();
        ids.sort();
        let mut expect: Vec<_> = ds.train.iter().filter(|i| i.class == InstallClass::Correct).map(|i| i.id.clone()).collect();
        expect.sort();
        assert_eq!(ids, expect);
        assert!(matches!(select_reference_panel(&ds.train, 7, 1), Err(Error::Config(_))));
        let m = a.manifest();
        assert_eq!(ReferencePanel::from_manifest(&m, &ds.train).unwrap(), a);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("panel.json");
        m.save(&p).unwrap();
        assert_eq!(PanelManifest::load(&p).unwrap(), m);
    }
}
