use std::io::Read;
use std::path::Path;

use super::{EmotionPoint, Identity, Observation, TrajectoryDataset};
use crate::error::{Result, VitlError};

/// Label of the emotion embedded at the origin.
pub const NEUTRAL_LABEL: &str = "neutral";

const BUILTIN: &str = include_str!("../../data/emotion_embedding.csv");

/// Label → emotion coordinates. Non-neutral entries are ℓ2-normalized on
/// load; `neutral` always sits at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    entries: Vec<(String, Vec<f64>)>,
    p: usize,
}

fn config(msg: impl Into<String>) -> VitlError {
    VitlError::Config(msg.into())
}

impl EmbeddingTable {
    /// The bundled placeholder table: unit vectors at distinct valence/arousal angles.
    pub fn builtin() -> Self {
        Self::from_reader(BUILTIN.as_bytes()).expect("bundled embedding table is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| config(format!("cannot open embedding file {}: {e}", path.display())))?;
        Self::from_reader(file)
    }

    /// Parses `label,c1,…,cp` rows after a header line.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| config(format!("embedding header: {e}")))?.clone();
        if header.len() < 2 {
            return Err(config("embedding header needs a label column and at least one coordinate"));
        }
        let p = header.len() - 1;
        let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| config(format!("embedding line {line}: {e}")))?;
            if rec.len() != p + 1 {
                return Err(config(format!("embedding line {line}: expected {} fields, found {}", p + 1, rec.len())));
            }
            let label = rec[0].to_string();
            if label.is_empty() {
                return Err(config(format!("embedding line {line}: empty label")));
            }
            if entries.iter().any(|(l, _)| *l == label) {
                return Err(config(format!("embedding line {line}: duplicate label '{label}'")));
            }
            let mut coords = Vec::with_capacity(p);
            for field in rec.iter().skip(1) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| config(format!("embedding line {line}: '{field}' is not a number")))?;
                if !v.is_finite() {
                    return Err(config(format!("embedding line {line}: non-finite coordinate")));
                }
                coords.push(v);
            }
            if label == NEUTRAL_LABEL {
                coords.iter_mut().for_each(|c| *c = 0.0);
            } else {
                let scale = coords.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
                let norm = scale * coords.iter().map(|c| (c / scale).powi(2)).sum::<f64>().sqrt();
                if !(norm > 0.0) {
                    return Err(config(format!("embedding line {line}: '{label}' has a zero vector")));
                }
                coords.iter_mut().for_each(|c| *c /= norm);
            }
            entries.push((label, coords));
        }
        if entries.is_empty() {
            return Err(config("embedding table has no entries"));
        }
        Ok(Self { entries, p })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }

    pub fn get(&self, label: &str) -> Result<EmotionPoint> {
        if label == NEUTRAL_LABEL {
            return EmotionPoint::labeled(label, vec![0.0; self.p]);
        }
        let (l, coords) = self
            .entries
            .iter()
            .find(|(l, _)| l == label)
            .ok_or_else(|| config(format!("unknown emotion label '{label}'")))?;
        EmotionPoint::labeled(l.clone(), coords.clone())
    }
}

/// Embeds each label with `table`; unknown labels are a configuration error.
pub fn default_emotion_embedding<S: AsRef<str>>(labels: &[S], table: &EmbeddingTable) -> Result<Vec<EmotionPoint>> {
    labels.iter().map(|l| table.get(l.as_ref())).collect()
}

/// Replaces every observation's emotion coordinates with the table entry for
/// its label. The mask is kept.
pub fn embed_dataset(data: &TrajectoryDataset, table: &EmbeddingTable) -> Result<TrajectoryDataset> {
    let identities = data
        .identities()
        .iter()
        .map(|ident| {
            let observations = ident
                .observations
                .iter()
                .map(|o| {
                    let label = o.emotion.label().ok_or_else(|| {
                        config(format!("identity '{}' has an unlabeled observation; cannot embed", ident.id))
                    })?;
                    Ok(Observation { emotion: table.get(label)?, landmarks: o.landmarks.clone() })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Identity { id: ident.id.clone(), observations })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = TrajectoryDataset::new(identities)?;
    match data.mask() {
        Some(mask) => out.with_mask(mask.to_vec()),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy;

    #[test]
    fn embedding_a_dataset_replaces_coordinates() {
        let data = toy(2, 3, 2);
        let table = EmbeddingTable::builtin();
        let out = embed_dataset(&data, &table).unwrap();
        for ident in out.identities() {
            for o in &ident.observations {
                assert_eq!(o.emotion, table.get(o.emotion.label().unwrap()).unwrap());
            }
        }
        let small = EmbeddingTable::from_reader("label,v,a\nneutral,0,0\n".as_bytes()).unwrap();
        assert!(matches!(embed_dataset(&data, &small), Err(VitlError::Config(_))));
    }

    #[test]
    fn neutral_is_origin() {
        let e = default_emotion_embedding(&["neutral"], &EmbeddingTable::builtin()).unwrap();
        assert_eq!(e[0].coords(), &[0.0, 0.0]);
        assert_eq!(e[0].label(), Some("neutral"));
    }

    #[test]
    fn non_neutral_entries_have_unit_norm() {
        let table = EmbeddingTable::builtin();
        let labels: Vec<String> = table.labels().filter(|l| *l != NEUTRAL_LABEL).map(String::from).collect();
        assert!(labels.len() >= 6);
        for e in default_emotion_embedding(&labels, &table).unwrap() {
            assert!((e.norm() - 1.0).abs() <= 1e-10, "{:?}", e);
        }
    }

    #[test]
    fn unknown_label_is_config_error() {
        let err = default_emotion_embedding(&["bored"], &EmbeddingTable::builtin()).unwrap_err();
        assert!(matches!(err, VitlError::Config(_)));
    }

    #[test]
    fn custom_table_is_normalized() {
        let t = EmbeddingTable::from_reader("label,v,a\nneutral,0.3,0.1\njoy,3,4\n".as_bytes()).unwrap();
        assert_eq!(t.get("joy").unwrap().coords(), &[0.6, 0.8]);
        assert_eq!(t.get("neutral").unwrap().coords(), &[0.0, 0.0]);
        let t = EmbeddingTable::from_reader("label,v,a\nbig,3e200,4e200\ntiny,3e-200,-4e-200\n".as_bytes()).unwrap();
        for (label, want) in [("big", [0.6, 0.8]), ("tiny", [0.6, -0.8])] {
            let got = t.get(label).unwrap();
            assert!(got.coords().iter().zip(want).all(|(g, w)| (g - w).abs() < 1e-15), "{label}: {:?}", got.coords());
        }
    }

    #[test]
    fn malformed_tables_rejected() {
        for bad in [
            "label\nfoo\n",
            "label,v,a\njoy,1\n",
            "label,v,a\njoy,1,x\n",
            "label,v,a\njoy,0,0\n",
            "label,v,a\njoy,1,0\njoy,0,1\n",
            "label,v,a\n",
            "label,v,a\njoy,inf,0\n",
        ] {
            assert!(matches!(EmbeddingTable::from_reader(bad.as_bytes()), Err(VitlError::Config(_))), "{bad:?}");
        }
    }
}
