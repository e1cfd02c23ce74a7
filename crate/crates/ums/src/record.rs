use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, UmsError};

/// Finding vocabulary in canonical order, with optional per-finding
/// prevalence (positive rate).
#[derive(Clone, Debug, PartialEq)]
pub struct SchemaConfig {
    finding_names: Vec<String>,
    prevalence: Option<Vec<f64>>,
    index: HashMap<String, usize>,
}

/// On-disk form: `{"findings": [...], "prevalence": {...}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaFile {
    pub findings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prevalence: Option<BTreeMap<String, f64>>,
}

impl SchemaConfig {
    pub fn new(finding_names: Vec<String>, prevalence: Option<Vec<f64>>) -> Result<Self> {
        if finding_names.is_empty() {
            return Err(UmsError::InvalidSchema("no findings".into()));
        }
        let mut index = HashMap::new();
        for (i, name) in finding_names.iter().enumerate() {
            if name.is_empty() {
                return Err(UmsError::InvalidSchema(format!("finding {i} has an empty name")));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(UmsError::InvalidSchema(format!("duplicate finding {name:?}")));
            }
        }
        if let Some(p) = &prevalence {
            if p.len() != finding_names.len() {
                return Err(UmsError::InvalidSchema(format!(
                    "prevalence has {} entries for {} findings",
                    p.len(),
                    finding_names.len()
                )));
            }
            if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(UmsError::InvalidSchema(format!(
                    "prevalence of {:?} is {v}, outside [0, 1]",
                    finding_names[i]
                )));
            }
        }
        Ok(Self {
            finding_names,
            prevalence,
            index,
        })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        Self::new(names.iter().map(|s| s.as_ref().to_string()).collect(), None)
    }

    pub fn from_file(file: SchemaFile) -> Result<Self> {
        let prevalence = match file.prevalence {
            None => None,
            Some(map) => {
                if let Some(unknown) = map.keys().find(|k| !file.findings.contains(k)) {
                    return Err(UmsError::InvalidSchema(format!(
                        "prevalence given for unknown finding {unknown:?}"
                    )));
                }
                let mut rates = Vec::with_capacity(file.findings.len());
                for name in &file.findings {
                    let rate = map.get(name).ok_or_else(|| {
                        UmsError::InvalidSchema(format!("prevalence missing for {name:?}"))
                    })?;
                    rates.push(*rate);
                }
                Some(rates)
            }
        };
        Self::new(file.findings, prevalence)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SchemaFile =
            serde_json::from_str(text).map_err(|e| UmsError::InvalidSchema(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn to_file(&self) -> SchemaFile {
        SchemaFile {
            findings: self.finding_names.clone(),
            prevalence: self.prevalence.as_ref().map(|p| {
                self.finding_names
                    .iter()
                    .cloned()
                    .zip(p.iter().copied())
                    .collect()
            }),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.finding_names
    }

    pub fn len(&self) -> usize {
        self.finding_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.finding_names.is_empty()
    }

    pub fn prevalence(&self) -> Option<&[f64]> {
        self.prevalence.as_deref()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FindingState {
    Present,
    Absent,
    Uncertain,
    /// Not assessable from the image.
    Null,
}

impl FindingState {
    pub const ALL: [FindingState; 4] = [Self::Present, Self::Absent, Self::Uncertain, Self::Null];

    /// JSON encoding of the state value.
    pub fn json(self) -> &'static str {
        match self {
            Self::Present => "\"present\"",
            Self::Absent => "\"absent\"",
            Self::Uncertain => "\"uncertain\"",
            Self::Null => "null",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "present" => Some(Self::Present),
            "absent" => Some(Self::Absent),
            "uncertain" => Some(Self::Uncertain),
            _ => None,
        }
    }

    /// Null states are exactly the unanswerable ones.
    pub fn consistent_with(self, answerable: bool) -> bool {
        (self == Self::Null) != answerable
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FindingEntry {
    pub name: String,
    pub state: FindingState,
    pub answerable: bool,
}

/// One image's findings and answerability flags, keyed in schema order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UmsRecord {
    pub image_id: String,
    entries: Vec<FindingEntry>,
}

impl UmsRecord {
    /// Validates names against `schema`, canonical order, and
    /// state/answerability consistency.
    pub fn new(image_id: impl Into<String>, entries: Vec<FindingEntry>, schema: &SchemaConfig) -> Result<Self> {
        if entries.is_empty() {
            return Err(UmsError::EmptyQuery);
        }
        let mut last = None;
        for e in &entries {
            let pos = schema
                .position(&e.name)
                .ok_or_else(|| UmsError::UnknownFinding(e.name.clone()))?;
            if last.is_some_and(|l| pos <= l) {
                return Err(UmsError::Structure(format!(
                    "finding {:?} out of schema order or repeated",
                    e.name
                )));
            }
            last = Some(pos);
            if !e.state.consistent_with(e.answerable) {
                return Err(UmsError::Consistency {
                    finding: e.name.clone(),
                    state: e.state,
                    answerable: e.answerable,
                });
            }
        }
        Ok(Self {
            image_id: image_id.into(),
            entries,
        })
    }

    pub fn entries(&self) -> &[FindingEntry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&FindingEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn findings(&self) -> impl Iterator<Item = (&str, FindingState)> {
        self.entries.iter().map(|e| (e.name.as_str(), e.state))
    }

    pub fn answerability(&self) -> impl Iterator<Item = (&str, bool)> {
        self.entries.iter().map(|e| (e.name.as_str(), e.answerable))
    }

    pub fn with_image_id(mut self, image_id: impl Into<String>) -> Self {
        self.image_id = image_id.into();
        self
    }

    /// Keep only `fields` (any order; duplicates ignored).
    pub fn restrict(&self, fields: &[String]) -> Result<Self> {
        if fields.is_empty() {
            return Err(UmsError::EmptyQuery);
        }
        let wanted: HashSet<&str> = fields.iter().map(String::as_str).collect();
        for f in &wanted {
            if self.entry(f).is_none() {
                return Err(UmsError::UnknownFinding((*f).to_string()));
            }
        }
        Ok(Self {
            image_id: self.image_id.clone(),
            entries: self
                .entries
                .iter()
                .filter(|e| wanted.contains(e.name.as_str()))
                .cloned()
                .collect(),
        })
    }
}

/// Raw label in the four-symbol convention: `Some(1.0)`, `Some(0.0)`,
/// `Some(-1.0)` or `None` for blank.
pub type RawLabel = Option<f64>;

/// Compile per-finding raw labels into a full-schema record. Findings absent
/// from `labels` count as blank.
pub fn build_record(
    image_id: impl Into<String>,
    labels: &HashMap<String, RawLabel>,
    schema: &SchemaConfig,
) -> Result<UmsRecord> {
    if let Some(unknown) = labels.keys().find(|k| schema.position(k).is_none()) {
        return Err(UmsError::UnknownFinding(unknown.clone()));
    }
    let mut entries = Vec::with_capacity(schema.len());
    for name in schema.names() {
        let raw = labels.get(name).copied().flatten();
        let state = match raw {
            None => FindingState::Null,
            Some(v) if v == 1.0 => FindingState::Present,
            Some(v) if v == 0.0 => FindingState::Absent,
            Some(v) if v == -1.0 => FindingState::Uncertain,
            Some(v) => {
                return Err(UmsError::LabelFormat {
                    finding: name.clone(),
                    value: v.to_string(),
                })
            }
        };
        entries.push(FindingEntry {
            name: name.clone(),
            state,
            answerable: state != FindingState::Null,
        });
    }
    UmsRecord::new(image_id, entries, schema)
}
