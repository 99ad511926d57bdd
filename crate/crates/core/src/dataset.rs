//! Label datasets, CSV I/O, synthetic class-count profiles and retention
//! metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::types::{BlockMapping, Label, MechanismMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: u64,
    pub label: Label,
}

/// Records with unique ids and labels in `0..k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelDataset {
    k: usize,
    records: Vec<LabelRecord>,
}

impl LabelDataset {
    pub fn new(k: usize, records: Vec<LabelRecord>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidLabelSpace("k must be at least 1".into()));
        }
        let mut seen = BTreeSet::new();
        for r in &records {
            if r.label >= k {
                return Err(Error::LabelOutOfRange { label: r.label, k });
            }
            if !seen.insert(r.id) {
                return Err(Error::DuplicateId(r.id));
            }
        }
        Ok(Self { k, records })
    }

    /// Builds a dataset with ids `0..labels.len()`.
    pub fn from_labels(k: usize, labels: &[Label]) -> Result<Self> {
        let records = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| LabelRecord { id: i as u64, label })
            .collect();
        Self::new(k, records)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn records(&self) -> &[LabelRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn ids(&self) -> BTreeSet<u64> {
        self.records.iter().map(|r| r.id).collect()
    }

    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.k];
        for r in &self.records {
            counts[r.label] += 1;
        }
        counts
    }

    /// Subset in the given order; the label space is kept.
    pub fn subset(&self, records: Vec<LabelRecord>) -> Self {
        Self {
            k: self.k,
            records,
        }
    }

    /// Reads `id,label` CSV with integer labels. Without `k`, the label space
    /// is `0..=max label`.
    pub fn read_csv<R: Read>(reader: R, k: Option<usize>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        check_header(rdr.headers()?, &["id", "label"])?;
        let mut records = Vec::new();
        for row in rdr.deserialize::<LabelRecord>() {
            records.push(row?);
        }
        let k = match k {
            Some(k) => k,
            None => records.iter().map(|r| r.label + 1).max().unwrap_or(1),
        };
        Self::new(k, records)
    }

    /// Reads `id,label` CSV whose labels are arbitrary names, canonicalizing
    /// them through a dictionary sorted by name.
    pub fn read_csv_named<R: Read>(reader: R) -> Result<(Self, LabelDictionary)> {
        #[derive(Deserialize)]
        struct Named {
            id: u64,
            label: String,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        check_header(rdr.headers()?, &["id", "label"])?;
        let rows = rdr
            .deserialize::<Named>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let dict = LabelDictionary::from_names(rows.iter().map(|r| r.label.clone()))?;
        let records = rows
            .iter()
            .map(|r| {
                Ok(LabelRecord {
                    id: r.id,
                    label: dict.encode(&r.label)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((Self::new(dict.len(), records)?, dict))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(["id", "label"])?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_header(headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse(format!(
            "expected CSV header `{}`, found `{}`",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

/// Bijection between external label names and `0..k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDictionary {
    names: Vec<String>,
}

impl LabelDictionary {
    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Result<Self> {
        let names: Vec<String> = names.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if names.is_empty() {
            return Err(Error::InvalidLabelSpace("no labels".into()));
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn encode(&self, name: &str) -> Result<Label> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(name))
            .map_err(|_| Error::Parse(format!("unknown label name `{name}`")))
    }

    pub fn decode(&self, label: Label) -> Option<&str> {
        self.names.get(label).map(String::as_str)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomizedRecord {
    pub id: u64,
    pub label: Label,
    /// Row position of the record in the input file.
    pub original_index: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RandomizedDataset {
    pub records: Vec<RandomizedRecord>,
}

impl RandomizedDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn by_id(&self) -> BTreeMap<u64, Label> {
        self.records.iter().map(|r| (r.id, r.label)).collect()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        check_header(rdr.headers()?, &["id", "label", "original_index"])?;
        let records = rdr
            .deserialize::<RandomizedRecord>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { records })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(["id", "label", "original_index"])?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-class record counts for synthetic data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCountProfile {
    counts: Vec<u64>,
}

impl ClassCountProfile {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::EmptyProfile);
        }
        Ok(Self { counts })
    }

    /// Six full classes and four reduced ones.
    pub fn cifar10_1() -> Self {
        Self {
            counts: vec![5000, 4900, 4700, 4600, 4500, 4800, 1000, 1500, 1000, 1500],
        }
    }

    /// Six full classes and four strongly reduced ones.
    pub fn cifar10_2() -> Self {
        Self {
            counts: vec![5000, 4900, 4700, 4600, 4500, 4800, 600, 500, 700, 400],
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Records with exactly the profile's class counts, in seeded random order.
/// Ids follow the shuffled order.
pub fn generate_synthetic(profile: &ClassCountProfile, stream: &mut RandomStream) -> Result<LabelDataset> {
    if profile.counts.iter().all(|&c| c == 0) {
        return Err(Error::EmptyProfile);
    }
    let mut labels: Vec<Label> = profile
        .counts
        .iter()
        .enumerate()
        .flat_map(|(y, &c)| std::iter::repeat_n(y, c as usize))
        .collect();
    stream.shuffle(&mut labels);
    LabelDataset::from_labels(profile.k(), &labels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub overall_retention: f64,
    /// `None` for classes with no records.
    pub per_class_retention: Vec<Option<f64>>,
    pub analytic_retention: Vec<f64>,
    pub abs_gap: Vec<Option<f64>>,
    pub per_class_count: Vec<u64>,
}

/// Analytic retention `Σ_{ỹ∈B(y)} p(ỹ|y)` for every row of `matrix`.
pub fn analytic_retention(matrix: &MechanismMatrix, mapping: &BlockMapping) -> Vec<f64> {
    matrix
        .input_labels()
        .iter()
        .zip(matrix.rows())
        .map(|(&y, row)| {
            matrix
                .output_labels()
                .iter()
                .zip(row)
                .filter(|(o, _)| mapping.block(y).contains(o))
                .map(|(_, p)| p)
                .sum()
        })
        .collect()
}

/// Fraction of records whose privatized label lands in `B(y)`, per class and
/// overall, next to the analytic value.
pub fn measure_retention(
    dataset: &LabelDataset,
    randomized: &RandomizedDataset,
    matrix: &MechanismMatrix,
    mapping: &BlockMapping,
) -> Result<RetentionReport> {
    if dataset.len() != randomized.len() {
        return Err(Error::IdMismatch(format!(
            "{} original records but {} randomized",
            dataset.len(),
            randomized.len()
        )));
    }
    let noisy: HashMap<u64, Label> = randomized.records.iter().map(|r| (r.id, r.label)).collect();
    if noisy.len() != randomized.len() {
        return Err(Error::IdMismatch("duplicate id in randomized data".into()));
    }
    let k = dataset.k();
    let mut kept = vec![0u64; k];
    let mut total = vec![0u64; k];
    for r in dataset.records() {
        let y_tilde = *noisy
            .get(&r.id)
            .ok_or_else(|| Error::IdMismatch(format!("id {} missing from randomized data", r.id)))?;
        total[r.label] += 1;
        if mapping.block(r.label).contains(&y_tilde) {
            kept[r.label] += 1;
        }
    }
    let analytic_rows = analytic_retention(matrix, mapping);
    let analytic: Vec<f64> = (0..k)
        .map(|y| {
            matrix
                .input_index(y)
                .map_or(f64::NAN, |i| analytic_rows[i])
        })
        .collect();
    let per_class: Vec<Option<f64>> = (0..k)
        .map(|y| (total[y] > 0).then(|| kept[y] as f64 / total[y] as f64))
        .collect();
    let abs_gap = per_class
        .iter()
        .zip(&analytic)
        .map(|(e, a)| e.map(|e| (e - a).abs()))
        .collect();
    let n: u64 = total.iter().sum();
    Ok(RetentionReport {
        overall_retention: if n == 0 {
            0.0
        } else {
            kept.iter().sum::<u64>() as f64 / n as f64
        },
        per_class_retention: per_class,
        analytic_retention: analytic,
        abs_gap,
        per_class_count: total,
    })
}
