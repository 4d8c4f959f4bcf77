//! Loading the breast-cancer diagnostic table and splitting it across nodes.

use crate::seeding::{self, Stream};
use crate::NodeId;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const FEATURE_COUNT: usize = 30;

/// Column names of the 30 diagnostic features, in file order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "radius_mean",
    "texture_mean",
    "perimeter_mean",
    "area_mean",
    "smoothness_mean",
    "compactness_mean",
    "concavity_mean",
    "concave_points_mean",
    "symmetry_mean",
    "fractal_dimension_mean",
    "radius_se",
    "texture_se",
    "perimeter_se",
    "area_se",
    "smoothness_se",
    "compactness_se",
    "concavity_se",
    "concave_points_se",
    "symmetry_se",
    "fractal_dimension_se",
    "radius_worst",
    "texture_worst",
    "perimeter_worst",
    "area_worst",
    "smoothness_worst",
    "compactness_worst",
    "concavity_worst",
    "concave_points_worst",
    "symmetry_worst",
    "fractal_dimension_worst",
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },
    #[error("row {row} has {found} feature columns, expected {FEATURE_COUNT}")]
    Schema { row: usize, found: usize },
    #[error("need at least {needed} examples for {nodes} nodes, have {available}")]
    InsufficientData { needed: usize, available: usize, nodes: usize },
    #[error("test fraction must lie in [0, 1), got {0}")]
    InvalidTestFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Malignant,
    Benign,
}

impl Label {
    /// Signed target for the margin classifier; malignant is the positive class.
    pub fn sign(self) -> f64 {
        match self {
            Label::Malignant => 1.0,
            Label::Benign => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: [f64; FEATURE_COUNT],
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePartition {
    pub node_id: NodeId,
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    Iid,
    #[serde(alias = "non_iid", alias = "non-iid")]
    NonIid,
}

pub fn load_wdbc(path: &Path) -> Result<Vec<LabeledExample>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    parse_wdbc(&text)
}

/// Parses the `id, diagnosis, 30 features` layout and standardizes every
/// feature column to zero mean and unit variance. A leading header line is
/// skipped when its first field is not numeric.
pub fn parse_wdbc(text: &str) -> Result<Vec<LabeledExample>, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| DataError::Parse { row, column: 0, message: e.to_string() })?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if idx == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() != FEATURE_COUNT + 2 {
            return Err(DataError::Schema { row, found: record.len().saturating_sub(2) });
        }
        let label = match record.get(1) {
            Some("M") => Label::Malignant,
            Some("B") => Label::Benign,
            other => return Err(DataError::Parse { row, column: 2, message: format!("diagnosis must be M or B, got {other:?}") }),
        };
        let mut features = [0.0; FEATURE_COUNT];
        for (j, slot) in features.iter_mut().enumerate() {
            let raw = &record[j + 2];
            *slot = raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| DataError::Parse {
                row,
                column: j + 3,
                message: format!("not a finite number: {raw:?}"),
            })?;
        }
        out.push(LabeledExample { features, label });
    }
    if out.is_empty() {
        return Err(DataError::Parse { row: 0, column: 0, message: "no data rows".into() });
    }
    standardize(&mut out);
    Ok(out)
}

fn standardize(data: &mut [LabeledExample]) {
    let n = data.len() as f64;
    for j in 0..FEATURE_COUNT {
        let mean = data.iter().map(|e| e.features[j]).sum::<f64>() / n;
        let var = data.iter().map(|e| (e.features[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for e in data.iter_mut() {
            e.features[j] = if sd > 0.0 { (e.features[j] - mean) / sd } else { 0.0 };
        }
    }
}

/// Splits `data` across `n_nodes`, then carves each node's test set from
/// its own share.
///
/// IID shuffles globally and slices into near-equal contiguous chunks.
/// Non-IID sorts by label and deals two contiguous label-sorted shards to
/// each node.
pub fn partition(
    data: &[LabeledExample],
    n_nodes: usize,
    mode: PartitionMode,
    test_fraction: f64,
    seed: u64,
) -> Result<Vec<NodePartition>, DataError> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(DataError::InvalidTestFraction(test_fraction));
    }
    let nodes = n_nodes.max(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seeding::rng(seed, Stream::Partition, 0, 0));

    let shares: Vec<Vec<usize>> = match mode {
        PartitionMode::Iid => even_chunks(&order, nodes),
        PartitionMode::NonIid => {
            order.sort_by_key(|&i| data[i].label);
            let shards = even_chunks(&order, 2 * nodes);
            let mut ids: Vec<usize> = (0..shards.len()).collect();
            ids.shuffle(&mut seeding::rng(seed, Stream::Partition, 1, 0));
            ids.chunks(2).map(|pair| pair.iter().flat_map(|&s| shards[s].iter().copied()).collect()).collect()
        }
    };

    let smallest = shares.iter().map(Vec::len).min().unwrap_or(0);
    if n_nodes == 0 || smallest - test_count(smallest, test_fraction) < 2 {
        return Err(DataError::InsufficientData { needed: 2 * nodes, available: data.len(), nodes: n_nodes });
    }

    Ok(shares
        .into_iter()
        .enumerate()
        .map(|(node, mut share)| {
            share.shuffle(&mut seeding::rng(seed, Stream::Partition, 2, node as u64));
            let n_test = test_count(share.len(), test_fraction);
            let test = share[..n_test].iter().map(|&i| data[i].clone()).collect();
            let train = share[n_test..].iter().map(|&i| data[i].clone()).collect();
            NodePartition { node_id: node as NodeId, train, test }
        })
        .collect())
}

fn test_count(len: usize, fraction: f64) -> usize {
    ((len as f64 * fraction).floor() as usize).min(len.saturating_sub(1))
}

/// `parts` contiguous chunks whose sizes differ by at most one.
fn even_chunks(items: &[usize], parts: usize) -> Vec<Vec<usize>> {
    let base = items.len() / parts;
    let extra = items.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Shannon entropy (bits) of the label distribution in `examples`.
pub fn label_entropy<'a>(examples: impl IntoIterator<Item = &'a LabeledExample>) -> f64 {
    let (mut m, mut b) = (0usize, 0usize);
    for e in examples {
        match e.label {
            Label::Malignant => m += 1,
            Label::Benign => b += 1,
        }
    }
    let n = (m + b) as f64;
    [m, b]
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Vec<LabeledExample> {
        (0..n)
            .map(|i| {
                let mut features = [0.0; FEATURE_COUNT];
                features[0] = i as f64;
                LabeledExample { features, label: if i % 3 == 0 { Label::Malignant } else { Label::Benign } }
            })
            .collect()
    }

    fn row(id: usize, diag: &str, fill: f64) -> String {
        let feats: Vec<String> = (0..FEATURE_COUNT).map(|j| format!("{}", fill + j as f64)).collect();
        format!("{id},{diag},{}", feats.join(","))
    }

    #[test]
    fn parses_and_standardizes() {
        let text = [row(1, "M", 1.0), row(2, "B", 2.0), row(3, "B", 6.0)].join("\n");
        let data = parse_wdbc(&text).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data[0].label, Label::Malignant);
        for j in 0..FEATURE_COUNT {
            let mean: f64 = data.iter().map(|e| e.features[j]).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn header_is_skipped() {
        let header = format!("id,diagnosis,{}", FEATURE_NAMES.join(","));
        let text = [header, row(1, "M", 1.0), row(2, "B", 2.0)].join("\n");
        assert_eq!(parse_wdbc(&text).unwrap().len(), 2);
    }

    #[test]
    fn empty_and_malformed_inputs() {
        assert!(matches!(parse_wdbc(""), Err(DataError::Parse { .. })));
        let bad_diag = row(1, "X", 1.0);
        assert!(matches!(parse_wdbc(&bad_diag), Err(DataError::Parse { row: 1, column: 2, .. })));
        let short = "1,M,1.0,2.0";
        assert!(matches!(parse_wdbc(short), Err(DataError::Schema { row: 1, found: 2 })));
        let mut bad_num = row(1, "M", 1.0);
        bad_num.push('x');
        let text = [row(2, "B", 0.0), bad_num].join("\n");
        assert!(matches!(parse_wdbc(&text), Err(DataError::Parse { row: 2, column: 32, .. })));
    }

    #[test]
    fn single_node_iid_holds_everything() {
        let data = toy(20);
        let parts = partition(&data, 1, PartitionMode::Iid, 0.2, 1).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].train.len() + parts[0].test.len(), 20);
        assert_eq!(parts[0].test.len(), 4);
    }

    #[test]
    fn iid_sizes_differ_by_at_most_one() {
        let data = toy(569);
        let parts = partition(&data, 100, PartitionMode::Iid, 0.2, 3).unwrap();
        let sizes: Vec<usize> = parts.iter().map(|p| p.train.len() + p.test.len()).collect();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(hi - lo <= 1);
        assert!(parts.iter().all(|p| p.train.len() >= 2));
    }

    #[test]
    fn conservation_and_disjointness() {
        let data = toy(200);
        for mode in [PartitionMode::Iid, PartitionMode::NonIid] {
            let parts = partition(&data, 17, mode, 0.25, 9).unwrap();
            let mut keys: Vec<i64> = parts.iter().flat_map(|p| p.train.iter().chain(p.test.iter())).map(|e| e.features[0] as i64).collect();
            keys.sort();
            assert_eq!(keys, (0..200).collect::<Vec<_>>());
            for p in &parts {
                for t in &p.test {
                    assert!(!p.train.contains(t));
                }
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let data = toy(120);
        let a = partition(&data, 10, PartitionMode::NonIid, 0.2, 5).unwrap();
        let b = partition(&data, 10, PartitionMode::NonIid, 0.2, 5).unwrap();
        assert_eq!(a, b);
        let c = partition(&data, 10, PartitionMode::NonIid, 0.2, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn non_iid_skews_labels() {
        let data = toy(569);
        let median = |mode| {
            let parts = partition(&data, 100, mode, 0.2, 2).unwrap();
            let mut h: Vec<f64> = parts.iter().map(|p| label_entropy(p.train.iter().chain(&p.test))).collect();
            h.sort_by(f64::total_cmp);
            h[h.len() / 2]
        };
        assert!(median(PartitionMode::NonIid) < median(PartitionMode::Iid));
    }

    #[test]
    fn insufficient_data() {
        let data = toy(5);
        assert!(matches!(partition(&data, 3, PartitionMode::Iid, 0.2, 1), Err(DataError::InsufficientData { .. })));
        assert!(matches!(partition(&data, 0, PartitionMode::Iid, 0.2, 1), Err(DataError::InsufficientData { .. })));
        assert!(matches!(partition(&data, 1, PartitionMode::Iid, 1.0, 1), Err(DataError::InvalidTestFraction(_))));
    }
}
