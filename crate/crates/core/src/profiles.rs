//! Per-node scores the global server uses for clustering and driver
//! election: schema-based feature scores and device performance indices.

use crate::geo::GeoPoint;
use crate::NodeId;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

/// Base of the positional attribute encoding.
pub const SCORE_BASE: u64 = 35;
/// Number of symbols consumed from a canonical attribute name.
pub const MAX_SYMBOLS: usize = 7;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("attribute name {0:?} is empty after canonicalization")]
    EmptyAfterCanonicalization(String),
    #[error("symbol {0:?} has no assigned value")]
    InvalidSymbol(char),
    #[error("attribute {0:?} is longer than {MAX_SYMBOLS} symbols")]
    TooLong(String),
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("schema has no columns")]
    EmptySchema,
    #[error("degenerate range: min == max == {0}")]
    DegenerateRange(f64),
    #[error("non-positive input {name} = {value}")]
    NonPositiveInput { name: &'static str, value: f64 },
    #[error("weight group {group} is invalid: {reason}")]
    InvalidWeights { group: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataType {
    Numeric,
    Categorical,
    Text,
}

impl DataType {
    pub fn code(self) -> f64 {
        match self {
            DataType::Numeric => 0.0,
            DataType::Categorical => 1.0,
            DataType::Text => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub dtype: DataType,
}

/// Column metadata of a node's local dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDescriptor {
    columns: Vec<Column>,
}

impl SchemaDescriptor {
    pub fn new(columns: Vec<Column>) -> Result<Self, ScoreError> {
        if columns.is_empty() {
            return Err(ScoreError::EmptySchema);
        }
        let mut seen = HashSet::new();
        for c in &columns {
            canonicalize_attribute(&c.name)?;
            if !seen.insert(c.name.as_str()) {
                return Err(ScoreError::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(Self { columns })
    }

    /// All columns numeric, as in the tabular breast-cancer data.
    pub fn numeric<S: AsRef<str>>(names: &[S]) -> Result<Self, ScoreError> {
        Self::new(names.iter().map(|n| Column { name: n.as_ref().to_string(), dtype: DataType::Numeric }).collect())
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }
}

/// Raw device measurements reported by a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceMetrics {
    pub computational_power: f64,
    pub energy_efficiency: f64,
    pub latency: f64,
    pub network_bandwidth: f64,
    pub concurrency_level: f64,
    pub cpu_utilization: f64,
    pub energy_consumption: f64,
    pub network_efficiency: f64,
}

impl DeviceMetrics {
    pub fn validate(&self) -> Result<(), ScoreError> {
        let fields = [
            ("computational_power", self.computational_power),
            ("energy_efficiency", self.energy_efficiency),
            ("latency", self.latency),
            ("network_bandwidth", self.network_bandwidth),
            ("concurrency_level", self.concurrency_level),
            ("cpu_utilization", self.cpu_utilization),
            ("energy_consumption", self.energy_consumption),
            ("network_efficiency", self.network_efficiency),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(ScoreError::NonPositiveInput { name, value });
            }
        }
        for (name, value) in [("cpu_utilization", self.cpu_utilization), ("network_efficiency", self.network_efficiency)] {
            if value > 1.0 {
                return Err(ScoreError::InvalidWeights { group: name, reason: format!("ratio {value} exceeds 1") });
            }
        }
        Ok(())
    }

    /// Values in compute-ability order: power, energy efficiency, latency,
    /// bandwidth, concurrency.
    fn compute_inputs(&self) -> [f64; 5] {
        [self.computational_power, self.energy_efficiency, self.latency, self.network_bandwidth, self.concurrency_level]
    }
}

/// Weight groups for the metadata score and both performance indices.
/// Each group is normalized to sum to 1 on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScoreWeights", into = "RawScoreWeights")]
pub struct ScoreWeights {
    sorted_weight: f64,
    type_weight: f64,
    compute_weights: [f64; 5],
    efficiency_weights: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawScoreWeights {
    pub sorted_weight: f64,
    pub type_weight: f64,
    pub compute_weights: [f64; 5],
    pub efficiency_weights: [f64; 4],
}

impl Default for RawScoreWeights {
    fn default() -> Self {
        Self { sorted_weight: 0.7, type_weight: 0.3, compute_weights: [0.2; 5], efficiency_weights: [1.0; 4] }
    }
}

impl TryFrom<RawScoreWeights> for ScoreWeights {
    type Error = ScoreError;
    fn try_from(raw: RawScoreWeights) -> Result<Self, ScoreError> {
        ScoreWeights::new(raw.sorted_weight, raw.type_weight, raw.compute_weights, raw.efficiency_weights)
    }
}

impl From<ScoreWeights> for RawScoreWeights {
    fn from(w: ScoreWeights) -> Self {
        Self {
            sorted_weight: w.sorted_weight,
            type_weight: w.type_weight,
            compute_weights: w.compute_weights,
            efficiency_weights: w.efficiency_weights,
        }
    }
}

fn normalize<const N: usize>(group: &'static str, w: [f64; N]) -> Result<[f64; N], ScoreError> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(ScoreError::InvalidWeights { group, reason: "weights must be finite and >= 0".into() });
    }
    let sum: f64 = w.iter().sum();
    if sum <= 0.0 {
        return Err(ScoreError::InvalidWeights { group, reason: "weights sum to zero".into() });
    }
    Ok(w.map(|x| x / sum))
}

impl ScoreWeights {
    pub fn new(sorted_weight: f64, type_weight: f64, compute_weights: [f64; 5], efficiency_weights: [f64; 4]) -> Result<Self, ScoreError> {
        let [sorted_weight, type_weight] = normalize("metadata", [sorted_weight, type_weight])?;
        Ok(Self {
            sorted_weight,
            type_weight,
            compute_weights: normalize("compute", compute_weights)?,
            efficiency_weights: normalize("efficiency", efficiency_weights)?,
        })
    }

    pub fn sorted_weight(&self) -> f64 {
        self.sorted_weight
    }
    pub fn type_weight(&self) -> f64 {
        self.type_weight
    }
    pub fn compute_weights(&self) -> [f64; 5] {
        self.compute_weights
    }
    pub fn efficiency_weights(&self) -> [f64; 4] {
        self.efficiency_weights
    }
}

impl Default for ScoreWeights {
    fn default() -> Self {
        RawScoreWeights::default().try_into().expect("default weights are valid")
    }
}

/// Everything a node reports to the global server before clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeProfile {
    pub node_id: NodeId,
    pub schema_score: f64,
    pub metadata_score: f64,
    pub compute_pi: f64,
    pub log_pi: f64,
    pub location: GeoPoint,
    pub metrics: DeviceMetrics,
}

/// Uppercases, drops everything outside `A-Z0-9`, keeps the last 7 symbols.
pub fn canonicalize_attribute(name: &str) -> Result<String, ScoreError> {
    let kept: Vec<char> = name.chars().map(|c| c.to_ascii_uppercase()).filter(|c| c.is_ascii_uppercase() || c.is_ascii_digit()).collect();
    if kept.is_empty() {
        return Err(ScoreError::EmptyAfterCanonicalization(name.to_string()));
    }
    let start = kept.len().saturating_sub(MAX_SYMBOLS);
    Ok(kept[start..].iter().collect())
}

/// A=0..Z=25, '0'..'8' = 26..34, '9' folds onto 34 so every value stays
/// below the base.
fn symbol_value(c: char) -> Result<u64, ScoreError> {
    match c {
        'A'..='Z' => Ok(c as u64 - 'A' as u64),
        '0'..='8' => Ok(26 + (c as u64 - '0' as u64)),
        '9' => Ok(34),
        _ => Err(ScoreError::InvalidSymbol(c)),
    }
}

/// Positional base-35 value of a canonical name, most significant symbol first.
pub fn schema_score(name: &str) -> Result<u64, ScoreError> {
    if name.is_empty() {
        return Err(ScoreError::EmptyAfterCanonicalization(String::new()));
    }
    if name.chars().count() > MAX_SYMBOLS {
        return Err(ScoreError::TooLong(name.to_string()));
    }
    name.chars().try_fold(0u64, |acc, c| Ok(acc * SCORE_BASE + symbol_value(c)?))
}

/// Mean column score over the alphabetically sorted canonical names.
pub fn dataset_feature_score(schema: &SchemaDescriptor) -> Result<f64, ScoreError> {
    let mut names = schema.columns().iter().map(|c| canonicalize_attribute(&c.name)).collect::<Result<Vec<_>, _>>()?;
    names.sort();
    let mut total = 0u64;
    for n in &names {
        total += schema_score(n)?;
    }
    Ok(total as f64 / names.len() as f64)
}

fn mean_type_code(schema: &SchemaDescriptor) -> f64 {
    let cols = schema.columns();
    cols.iter().map(|c| c.dtype.code()).sum::<f64>() / cols.len() as f64
}

/// `w_sorted * C_sorted + w_type * C_type`.
pub fn metadata_score_from_parts(c_sorted: f64, c_type: f64, weights: &ScoreWeights) -> f64 {
    weights.sorted_weight * c_sorted + weights.type_weight * c_type
}

pub fn combined_metadata_score(schema: &SchemaDescriptor, weights: &ScoreWeights) -> Result<f64, ScoreError> {
    Ok(metadata_score_from_parts(dataset_feature_score(schema)?, mean_type_code(schema), weights))
}

/// Affine map of `[x_min, x_max]` onto `[a, b]`.
///
/// A degenerate range is reported as an error; [`min_max_scale_or_mid`]
/// resolves it to the midpoint.
pub fn min_max_scale(x: f64, x_min: f64, x_max: f64, a: f64, b: f64) -> Result<f64, ScoreError> {
    if x_max == x_min {
        return Err(ScoreError::DegenerateRange(x_min));
    }
    Ok(a + (x - x_min) * (b - a) / (x_max - x_min))
}

pub fn min_max_scale_or_mid(x: f64, x_min: f64, x_max: f64, a: f64, b: f64) -> f64 {
    min_max_scale(x, x_min, x_max, a, b).unwrap_or((a + b) / 2.0)
}

/// Closed range of one metric across the fleet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Range> {
        values.into_iter().fold(None, |acc, v| match acc {
            None => Some(Range { min: v, max: v }),
            Some(r) => Some(Range { min: r.min.min(v), max: r.max.max(v) }),
        })
    }

    pub fn unit(&self, x: f64) -> f64 {
        min_max_scale_or_mid(x, self.min, self.max, 0.0, 1.0)
    }
}

/// Fleet-wide ranges of the five compute-ability metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetRanges {
    pub ranges: [Range; 5],
}

impl FleetRanges {
    pub fn from_metrics<'a>(metrics: impl IntoIterator<Item = &'a DeviceMetrics>) -> Option<Self> {
        let mut acc: Option<[Range; 5]> = None;
        for m in metrics {
            let v = m.compute_inputs();
            acc = Some(match acc {
                None => v.map(|x| Range { min: x, max: x }),
                Some(mut r) => {
                    for (r, x) in r.iter_mut().zip(v) {
                        r.min = r.min.min(x);
                        r.max = r.max.max(x);
                    }
                    r
                }
            });
        }
        acc.map(|ranges| Self { ranges })
    }
}

/// Weighted sum of the five metrics scaled to `[0, 1]` across the fleet.
/// Latency is inverted so faster devices score higher.
pub fn compute_ability_score(metrics: &DeviceMetrics, fleet: &FleetRanges, weights: &ScoreWeights) -> f64 {
    let raw = metrics.compute_inputs();
    let mut scaled = [0.0; 5];
    for (i, (x, r)) in raw.iter().zip(fleet.ranges.iter()).enumerate() {
        scaled[i] = if i == 2 { min_max_scale_or_mid(r.max - x, 0.0, r.max - r.min, 0.0, 1.0) } else { r.unit(*x) };
    }
    weighted_sum(&scaled, &weights.compute_weights)
}

pub fn weighted_sum(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v * w).sum()
}

/// Operational-efficiency index: `psi`, the local index `4 / psi` and its
/// natural log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyIndex {
    pub psi: f64,
    pub local_pi: f64,
    pub log_pi: f64,
}

pub fn operational_efficiency_pi(metrics: &DeviceMetrics, weights: &ScoreWeights) -> Result<EfficiencyIndex, ScoreError> {
    let inputs = [
        ("cpu_utilization", metrics.cpu_utilization),
        ("energy_consumption", metrics.energy_consumption),
        ("network_efficiency", metrics.network_efficiency),
        ("energy_efficiency", metrics.energy_efficiency),
    ];
    let mut psi = 0.0;
    for ((name, value), w) in inputs.into_iter().zip(weights.efficiency_weights) {
        let term = value * w;
        if !(term.is_finite() && term > 0.0) {
            return Err(ScoreError::NonPositiveInput { name, value: term });
        }
        psi += 1.0 / term;
    }
    let local_pi = 1.0 / (psi / 4.0);
    Ok(EfficiencyIndex { psi, local_pi, log_pi: local_pi.ln() })
}

/// Builds the profile a node uploads to the server.
pub fn build_profile(
    node_id: NodeId,
    schema: &SchemaDescriptor,
    metrics: DeviceMetrics,
    location: GeoPoint,
    fleet: &FleetRanges,
    weights: &ScoreWeights,
) -> Result<NodeProfile, ScoreError> {
    metrics.validate()?;
    Ok(NodeProfile {
        node_id,
        schema_score: dataset_feature_score(schema)?,
        metadata_score: combined_metadata_score(schema, weights)?,
        compute_pi: compute_ability_score(&metrics, fleet, weights),
        log_pi: operational_efficiency_pi(&metrics, weights)?.log_pi,
        location,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn metrics(power: f64, eff: f64, lat: f64, bw: f64, conc: f64) -> DeviceMetrics {
        DeviceMetrics {
            computational_power: power,
            energy_efficiency: eff,
            latency: lat,
            network_bandwidth: bw,
            concurrency_level: conc,
            cpu_utilization: 0.5,
            energy_consumption: 1.0,
            network_efficiency: 0.5,
        }
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(canonicalize_attribute("radius_mean").unwrap(), "IUSMEAN");
        assert_eq!(canonicalize_attribute("A").unwrap(), "A");
        assert_eq!(canonicalize_attribute("a-b").unwrap(), "AB");
        assert!(matches!(canonicalize_attribute("__-"), Err(ScoreError::EmptyAfterCanonicalization(_))));
    }

    #[test]
    fn schema_score_examples() {
        assert_eq!(schema_score("A").unwrap(), 0);
        assert_eq!(schema_score("B").unwrap(), 1);
        assert_eq!(schema_score("BA").unwrap(), 35);
        assert_eq!(schema_score("9").unwrap(), schema_score("8").unwrap());
        assert_eq!(schema_score("a"), Err(ScoreError::InvalidSymbol('a')));
        assert!(matches!(schema_score("ABCDEFGH"), Err(ScoreError::TooLong(_))));
    }

    #[test]
    fn dataset_score_examples() {
        let one = SchemaDescriptor::numeric(&["A"]).unwrap();
        assert_eq!(dataset_feature_score(&one).unwrap(), 0.0);
        let ab = SchemaDescriptor::numeric(&["A", "B"]).unwrap();
        let ba = SchemaDescriptor::numeric(&["B", "A"]).unwrap();
        assert_eq!(dataset_feature_score(&ab).unwrap(), 0.5);
        assert_eq!(dataset_feature_score(&ba).unwrap(), 0.5);
        let b_ba = SchemaDescriptor::numeric(&["B", "BA"]).unwrap();
        assert_eq!(dataset_feature_score(&b_ba).unwrap(), 18.0);
    }

    #[test]
    fn schema_rejects_duplicates() {
        assert_eq!(SchemaDescriptor::numeric(&["x", "x"]), Err(ScoreError::DuplicateColumn("x".into())));
        assert_eq!(SchemaDescriptor::numeric::<&str>(&[]), Err(ScoreError::EmptySchema));
    }

    #[test]
    fn metadata_score_examples() {
        let w = ScoreWeights::default();
        assert_eq!(metadata_score_from_parts(0.0, 0.0, &w), 0.0);
        let sorted_only = ScoreWeights::new(1.0, 0.0, [0.2; 5], [1.0; 4]).unwrap();
        let ab = SchemaDescriptor::numeric(&["A", "B"]).unwrap();
        assert_eq!(combined_metadata_score(&ab, &sorted_only).unwrap(), 0.5);
        let half = ScoreWeights::new(0.5, 0.5, [0.2; 5], [1.0; 4]).unwrap();
        assert_eq!(metadata_score_from_parts(0.5, 1.0, &half), 0.75);
        let mixed = SchemaDescriptor::new(vec![
            Column { name: "A".into(), dtype: DataType::Categorical },
            Column { name: "B".into(), dtype: DataType::Categorical },
        ])
        .unwrap();
        assert_eq!(combined_metadata_score(&mixed, &half).unwrap(), 0.75);
    }

    #[test]
    fn weights_are_normalized() {
        let w = ScoreWeights::new(7.0, 3.0, [1.0; 5], [2.0; 4]).unwrap();
        assert_relative_eq!(w.sorted_weight(), 0.7);
        assert_eq!(w.compute_weights(), [0.2; 5]);
        assert_eq!(w.efficiency_weights(), [0.25; 4]);
        assert!(ScoreWeights::new(0.0, 0.0, [1.0; 5], [1.0; 4]).is_err());
        assert!(ScoreWeights::new(1.0, -0.1, [1.0; 5], [1.0; 4]).is_err());
    }

    #[test]
    fn min_max_examples() {
        assert_eq!(min_max_scale(0.0, 0.0, 10.0, 2.0, 3.0).unwrap(), 2.0);
        assert_eq!(min_max_scale(10.0, 0.0, 10.0, 2.0, 3.0).unwrap(), 3.0);
        assert_eq!(min_max_scale(5.0, 0.0, 10.0, 0.0, 1.0).unwrap(), 0.5);
        assert_eq!(min_max_scale(4.0, 4.0, 4.0, 0.0, 1.0), Err(ScoreError::DegenerateRange(4.0)));
        assert_eq!(min_max_scale_or_mid(4.0, 4.0, 4.0, 0.0, 1.0), 0.5);
    }

    #[test]
    fn compute_ability_extremes() {
        let lo = metrics(1.0, 1.0, 100.0, 1.0, 1.0);
        let hi = metrics(10.0, 5.0, 10.0, 50.0, 8.0);
        let fleet = FleetRanges::from_metrics([&lo, &hi]).unwrap();
        let w = ScoreWeights::default();
        assert_relative_eq!(compute_ability_score(&hi, &fleet, &w), 1.0, epsilon = 1e-12);
        assert_relative_eq!(compute_ability_score(&lo, &fleet, &w), 0.0, epsilon = 1e-12);
        // power, efficiency and latency at best; bandwidth and concurrency at worst
        let mixed = metrics(10.0, 5.0, 10.0, 1.0, 1.0);
        assert_relative_eq!(compute_ability_score(&mixed, &fleet, &w), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn efficiency_unit_and_double_terms() {
        // Weights normalize to 0.25 each, so inputs of 4 give weighted terms of 1.
        let w = ScoreWeights::default();
        let m = DeviceMetrics {
            computational_power: 1.0,
            energy_efficiency: 4.0,
            latency: 1.0,
            network_bandwidth: 1.0,
            concurrency_level: 1.0,
            cpu_utilization: 4.0,
            energy_consumption: 4.0,
            network_efficiency: 4.0,
        };
        let e = operational_efficiency_pi(&m, &w).unwrap();
        assert_relative_eq!(e.psi, 4.0);
        assert_relative_eq!(e.local_pi, 1.0);
        assert_relative_eq!(e.log_pi, 0.0, epsilon = 1e-15);
        let m2 = DeviceMetrics { energy_efficiency: 8.0, cpu_utilization: 8.0, energy_consumption: 8.0, network_efficiency: 8.0, ..m };
        let e2 = operational_efficiency_pi(&m2, &w).unwrap();
        assert_relative_eq!(e2.psi, 2.0);
        assert_relative_eq!(e2.local_pi, 2.0);
        assert_relative_eq!(e2.log_pi, std::f64::consts::LN_2, max_relative = 1e-12);
    }

    #[test]
    fn efficiency_rejects_non_positive() {
        let mut m = metrics(1.0, 1.0, 1.0, 1.0, 1.0);
        m.energy_consumption = 0.0;
        assert!(matches!(
            operational_efficiency_pi(&m, &ScoreWeights::default()),
            Err(ScoreError::NonPositiveInput { name: "energy_consumption", .. })
        ));
    }

    #[test]
    fn local_pi_is_harmonic_mean_of_terms() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.01..10.0));
            let wr: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.01..1.0));
            let w = ScoreWeights::new(0.5, 0.5, [0.2; 5], wr).unwrap();
            let wn = w.efficiency_weights();
            let m = DeviceMetrics {
                computational_power: 1.0,
                energy_efficiency: x[3],
                latency: 1.0,
                network_bandwidth: 1.0,
                concurrency_level: 1.0,
                cpu_utilization: x[0],
                energy_consumption: x[1],
                network_efficiency: x[2],
            };
            let terms: Vec<f64> = x.iter().zip(wn).map(|(a, b)| a * b).collect();
            let harmonic = terms.len() as f64 / terms.iter().map(|t| t.recip()).sum::<f64>();
            let got = operational_efficiency_pi(&m, &w).unwrap().local_pi;
            assert!(((got - harmonic) / harmonic).abs() <= 1e-12, "{got} vs {harmonic}");
        }
    }

    fn short_name() -> impl Strategy<Value = String> {
        proptest::collection::vec(0u8..26, 1..=7).prop_map(|v| v.into_iter().map(|b| (b'A' + b) as char).collect())
    }

    proptest! {
        #[test]
        fn distinct_alpha_names_score_distinctly(
            (a, b) in (1usize..=7).prop_flat_map(|n| (
                proptest::collection::vec(b'A'..=b'Z', n),
                proptest::collection::vec(b'A'..=b'Z', n),
            )),
        ) {
            // Leading 'A' is a zero digit, so compare names of equal length.
            let (a, b) = (String::from_utf8(a).unwrap(), String::from_utf8(b).unwrap());
            prop_assume!(a != b);
            prop_assert_ne!(schema_score(&a).unwrap(), schema_score(&b).unwrap());
        }

        #[test]
        fn feature_score_permutation_invariant(names in proptest::collection::hash_set(short_name(), 1..12), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let names: Vec<String> = names.into_iter().collect();
            let mut shuffled = names.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = dataset_feature_score(&SchemaDescriptor::numeric(&names).unwrap()).unwrap();
            let b = dataset_feature_score(&SchemaDescriptor::numeric(&shuffled).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn min_max_round_trip(lo in -1e3f64..1e3, span in 1e-3f64..1e3, t in 0.0f64..=1.0,
                              a in -10.0f64..10.0, width in 0.1f64..10.0) {
            let hi = lo + span;
            let x = lo + t * span;
            let y = min_max_scale(x, lo, hi, a, a + width).unwrap();
            prop_assert!(y >= a - 1e-12 && y <= a + width + 1e-12);
            let back = min_max_scale(y, a, a + width, lo, hi).unwrap();
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(span).max(1.0) * 10.0);
        }

        #[test]
        fn compute_score_monotone(p1 in 1.0f64..10.0, p2 in 1.0f64..10.0, l1 in 1.0f64..100.0, l2 in 1.0f64..100.0) {
            let lo = metrics(1.0, 1.0, 1.0, 1.0, 1.0);
            let hi = metrics(10.0, 5.0, 100.0, 50.0, 8.0);
            let fleet = FleetRanges::from_metrics([&lo, &hi]).unwrap();
            let w = ScoreWeights::default();
            let (plo, phi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            prop_assert!(compute_ability_score(&metrics(plo, 2.0, 50.0, 10.0, 4.0), &fleet, &w)
                <= compute_ability_score(&metrics(phi, 2.0, 50.0, 10.0, 4.0), &fleet, &w));
            let (llo, lhi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
            prop_assert!(compute_ability_score(&metrics(5.0, 2.0, lhi, 10.0, 4.0), &fleet, &w)
                <= compute_ability_score(&metrics(5.0, 2.0, llo, 10.0, 4.0), &fleet, &w));
        }
    }
}
