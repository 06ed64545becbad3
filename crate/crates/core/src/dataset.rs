//! Delimited categorical data ingestion.
//!
//! Every retained column is encoded to `0..|J|` in order of first appearance.
//! That order is the category ranking used for every tie-break downstream:
//! code `a` ranks below code `b` iff `a < b`. Changing the order can change
//! which of several optimal clusterings is found, never the optimal objective.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer category code within one column.
pub type Code = u32;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("row {row} has {found} fields, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("input needs at least 1 row and 2 columns (got {rows} rows, {columns} columns)")]
    TooSmall { rows: usize, columns: usize },
    #[error("every feature column was dropped during preprocessing")]
    EmptyFeatures,
    #[error("label column {0} not found")]
    UnknownLabelColumn(String),
    #[error("code {code} out of range for column {column} with {cardinality} categories")]
    CodeOutOfRange {
        column: usize,
        code: Code,
        cardinality: usize,
    },
    #[error("rows must all have {expected} coordinates, row {row} has {found}")]
    Shape {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("label vector has length {found}, expected {expected}")]
    LabelLength { expected: usize, found: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// How a column is picked out of the input table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    /// Zero-based position. Negative values count from the end (`-1` is the last column).
    Index(i64),
    Name(String),
}

impl FromStr for ColumnRef {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse::<i64>() {
            Ok(i) => ColumnRef::Index(i),
            Err(_) => ColumnRef::Name(s.to_string()),
        })
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRef::Index(i) => write!(f, "{i}"),
            ColumnRef::Name(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Remove every column that contains the missing token.
    #[default]
    DropColumns,
    /// Remove every row that contains the missing token.
    DropRows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseOptions {
    pub delimiter: u8,
    pub has_header: bool,
    pub label_column: Option<ColumnRef>,
    pub missing_token: Option<String>,
    pub missing_policy: MissingPolicy,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: false,
            label_column: None,
            missing_token: Some("?".to_string()),
            missing_policy: MissingPolicy::DropColumns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Missing,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub name: String,
    pub reason: DropReason,
}

/// True class labels carried alongside the features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    /// Per-observation class id, in first-appearance order of `names`.
    pub ids: Vec<usize>,
    pub names: Vec<String>,
}

/// Column-encoded categorical matrix. Immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    n: usize,
    p: usize,
    codes: Vec<Code>,
    categories: Vec<Vec<String>>,
    column_names: Vec<String>,
    dropped_columns: Vec<DroppedColumn>,
    dropped_rows: Vec<usize>,
    labels: Option<Labels>,
}

/// JSON-friendly description of a parsed dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub p: usize,
    pub columns: Vec<String>,
    pub cardinalities: Vec<usize>,
    pub dropped_columns: Vec<DroppedColumn>,
    pub dropped_rows: Vec<usize>,
    pub label_classes: Option<usize>,
}

impl Dataset {
    /// Build a dataset straight from code rows.
    ///
    /// `cardinalities` fixes `|J_l|` per column; when `None` each column gets
    /// `max code + 1` categories (at least 2). Category labels are the decimal codes.
    pub fn from_codes(
        rows: &[Vec<Code>],
        cardinalities: Option<&[usize]>,
    ) -> Result<Self, DatasetError> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if n == 0 || p == 0 {
            return Err(DatasetError::TooSmall {
                rows: n,
                columns: p,
            });
        }
        for (row, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(DatasetError::Shape {
                    row,
                    expected: p,
                    found: r.len(),
                });
            }
        }
        let cards: Vec<usize> = match cardinalities {
            Some(c) => {
                if c.len() != p {
                    return Err(DatasetError::Shape {
                        row: 0,
                        expected: p,
                        found: c.len(),
                    });
                }
                c.to_vec()
            }
            None => (0..p)
                .map(|l| {
                    let max = rows.iter().map(|r| r[l]).max().unwrap_or(0) as usize;
                    (max + 1).max(2)
                })
                .collect(),
        };
        let mut codes = Vec::with_capacity(n * p);
        for r in rows {
            for (l, &c) in r.iter().enumerate() {
                if c as usize >= cards[l] {
                    return Err(DatasetError::CodeOutOfRange {
                        column: l,
                        code: c,
                        cardinality: cards[l],
                    });
                }
                codes.push(c);
            }
        }
        Ok(Self {
            n,
            p,
            codes,
            categories: cards
                .iter()
                .map(|&j| (0..j).map(|c| c.to_string()).collect())
                .collect(),
            column_names: (1..=p).map(|l| format!("x{l}")).collect(),
            dropped_columns: Vec::new(),
            dropped_rows: Vec::new(),
            labels: None,
        })
    }

    /// Attach class labels given as integer ids.
    pub fn with_label_ids(mut self, ids: Vec<usize>) -> Result<Self, DatasetError> {
        if ids.len() != self.n {
            return Err(DatasetError::LabelLength {
                expected: self.n,
                found: ids.len(),
            });
        }
        let classes = ids.iter().max().map_or(0, |m| m + 1);
        self.labels = Some(Labels {
            ids,
            names: (0..classes).map(|c| c.to_string()).collect(),
        });
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Code] {
        &self.codes[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Code]> {
        self.codes.chunks_exact(self.p)
    }

    pub fn cardinality(&self, column: usize) -> usize {
        self.categories[column].len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.categories.iter().map(Vec::len).collect()
    }

    pub fn categories(&self) -> &[Vec<String>] {
        &self.categories
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn dropped_columns(&self) -> &[DroppedColumn] {
        &self.dropped_columns
    }

    pub fn dropped_rows(&self) -> &[usize] {
        &self.dropped_rows
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    /// Raw category labels of one code vector.
    pub fn decode<'s>(&'s self, codes: &[Code]) -> Vec<&'s str> {
        codes
            .iter()
            .enumerate()
            .map(|(l, &c)| self.categories[l][c as usize].as_str())
            .collect()
    }

    /// Indices of the first occurrence of every distinct row, in row order.
    pub fn distinct_rows(&self) -> Vec<usize> {
        let mut seen: HashMap<&[Code], ()> = HashMap::with_capacity(self.n);
        let mut out = Vec::new();
        for i in 0..self.n {
            if seen.insert(self.row(i), ()).is_none() {
                out.push(i);
            }
        }
        out
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            n: self.n,
            p: self.p,
            columns: self.column_names.clone(),
            cardinalities: self.cardinalities(),
            dropped_columns: self.dropped_columns.clone(),
            dropped_rows: self.dropped_rows.clone(),
            label_classes: self.labels.as_ref().map(|l| l.names.len()),
        }
    }
}

/// Parse delimited text into a [`Dataset`].
///
/// The label column (if any) is split off first. Missing cells are handled by
/// `missing_policy`, then constant columns are dropped. Codes are assigned
/// afterwards, so first-appearance order refers to retained rows only.
pub fn parse_delimited(bytes: &[u8], opts: &ParseOptions) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);

    let mut table: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        table.push(record.iter().map(str::to_string).collect());
    }

    let header: Option<Vec<String>> = if opts.has_header && !table.is_empty() {
        Some(table.remove(0))
    } else {
        None
    };

    let width = header
        .as_ref()
        .map(Vec::len)
        .or_else(|| table.first().map(Vec::len))
        .unwrap_or(0);
    if table.is_empty() || width < 2 {
        return Err(DatasetError::TooSmall {
            rows: table.len(),
            columns: width,
        });
    }
    for (row, r) in table.iter().enumerate() {
        if r.len() != width {
            return Err(DatasetError::Ragged {
                row,
                expected: width,
                found: r.len(),
            });
        }
    }

    let names: Vec<String> = header.unwrap_or_else(|| (1..=width).map(|c| format!("V{c}")).collect());

    let label_idx = match &opts.label_column {
        None => None,
        Some(ColumnRef::Index(i)) => {
            let idx = if *i < 0 { width as i64 + i } else { *i };
            if idx < 0 || idx as usize >= width {
                return Err(DatasetError::UnknownLabelColumn(i.to_string()));
            }
            Some(idx as usize)
        }
        Some(ColumnRef::Name(name)) => Some(
            names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| DatasetError::UnknownLabelColumn(name.clone()))?,
        ),
    };

    let feature_cols: Vec<usize> = (0..width).filter(|&c| Some(c) != label_idx).collect();
    let is_missing = |cell: &str| opts.missing_token.as_deref() == Some(cell);

    let mut dropped_columns = Vec::new();
    let mut dropped_rows = Vec::new();
    let mut keep_rows: Vec<usize> = (0..table.len()).collect();
    let mut keep_cols = feature_cols.clone();

    match opts.missing_policy {
        MissingPolicy::DropColumns => {
            keep_cols.retain(|&c| {
                let missing = table.iter().any(|r| is_missing(&r[c]));
                if missing {
                    dropped_columns.push(DroppedColumn {
                        name: names[c].clone(),
                        reason: DropReason::Missing,
                    });
                }
                !missing
            });
        }
        MissingPolicy::DropRows => {
            keep_rows.retain(|&r| {
                let missing = (0..width).any(|c| is_missing(&table[r][c]));
                if missing {
                    dropped_rows.push(r);
                }
                !missing
            });
            if keep_rows.is_empty() {
                return Err(DatasetError::TooSmall {
                    rows: 0,
                    columns: width,
                });
            }
        }
    }

    keep_cols.retain(|&c| {
        let first = &table[keep_rows[0]][c];
        let constant = keep_rows.iter().all(|&r| &table[r][c] == first);
        if constant {
            dropped_columns.push(DroppedColumn {
                name: names[c].clone(),
                reason: DropReason::Constant,
            });
        }
        !constant
    });

    if keep_cols.is_empty() {
        return Err(DatasetError::EmptyFeatures);
    }

    let n = keep_rows.len();
    let p = keep_cols.len();
    let mut codes = vec![0 as Code; n * p];
    let mut categories = Vec::with_capacity(p);
    for (l, &c) in keep_cols.iter().enumerate() {
        let (col_codes, cats) = encode_column(keep_rows.iter().map(|&r| table[r][c].as_str()));
        for (i, code) in col_codes.into_iter().enumerate() {
            codes[i * p + l] = code;
        }
        categories.push(cats);
    }

    let labels = label_idx.map(|c| {
        let (ids, names) = encode_column(keep_rows.iter().map(|&r| table[r][c].as_str()));
        Labels {
            ids: ids.into_iter().map(|id| id as usize).collect(),
            names,
        }
    });

    Ok(Dataset {
        n,
        p,
        codes,
        categories,
        column_names: keep_cols.iter().map(|&c| names[c].clone()).collect(),
        dropped_columns,
        dropped_rows,
        labels,
    })
}

fn encode_column<'a>(cells: impl Iterator<Item = &'a str>) -> (Vec<Code>, Vec<String>) {
    let mut index: HashMap<&'a str, Code> = HashMap::new();
    let mut cats = Vec::new();
    let codes = cells
        .map(|cell| {
            *index.entry(cell).or_insert_with(|| {
                cats.push(cell.to_string());
                (cats.len() - 1) as Code
            })
        })
        .collect();
    (codes, cats)
}

/// Uniform random processing order for the observations of `ds`.
pub fn shuffle_order<R: Rng + ?Sized>(ds: &Dataset, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ds.n()).collect();
    order.shuffle(rng);
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn parse(text: &str, opts: &ParseOptions) -> Result<Dataset, DatasetError> {
        parse_delimited(text.as_bytes(), opts)
    }

    #[test]
    fn first_appearance_encoding() {
        let ds = parse("a,x\nb,x\na,y\n", &ParseOptions::default()).unwrap();
        assert_eq!((ds.n(), ds.p()), (3, 2));
        let col0: Vec<Code> = ds.rows().map(|r| r[0]).collect();
        let col1: Vec<Code> = ds.rows().map(|r| r[1]).collect();
        assert_eq!(col0, vec![0, 1, 0]);
        assert_eq!(col1, vec![0, 0, 1]);
        assert_eq!(ds.categories()[1], vec!["x", "y"]);
    }

    #[test]
    fn order_is_first_appearance_not_lexicographic() {
        let ds = parse("z,1\na,2\n", &ParseOptions::default()).unwrap();
        assert_eq!(ds.categories()[0], vec!["z", "a"]);
        assert_eq!(ds.row(1)[0], 1);
    }

    #[test]
    fn constant_column_dropped() {
        let ds = parse("a,k,x\nb,k,y\na,k,y\n", &ParseOptions::default()).unwrap();
        assert_eq!(ds.p(), 2);
        assert_eq!(
            ds.dropped_columns(),
            &[DroppedColumn {
                name: "V2".into(),
                reason: DropReason::Constant
            }]
        );
    }

    #[test]
    fn missing_column_dropped_then_constant() {
        // second column has a missing cell, third is constant
        let text = "a,?,q,1\nb,u,q,2\na,v,q,1\n";
        let ds = parse(text, &ParseOptions::default()).unwrap();
        assert_eq!(ds.column_names(), &["V1".to_string(), "V4".to_string()]);
        let reasons: Vec<_> = ds.dropped_columns().iter().map(|d| d.reason).collect();
        assert_eq!(reasons, vec![DropReason::Missing, DropReason::Constant]);
    }

    #[test]
    fn missing_rows_policy() {
        let opts = ParseOptions {
            missing_policy: MissingPolicy::DropRows,
            ..Default::default()
        };
        let ds = parse("a,x\n?,y\nb,y\n", &opts).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.dropped_rows(), &[1]);
        assert!(ds.dropped_columns().is_empty());
    }

    #[test]
    fn label_column_by_name_and_index() {
        let text = "f1,f2,class\na,x,D1\nb,y,D2\na,y,D1\n";
        let by_name = ParseOptions {
            has_header: true,
            label_column: Some(ColumnRef::Name("class".into())),
            ..Default::default()
        };
        let ds = parse(text, &by_name).unwrap();
        assert_eq!(ds.p(), 2);
        let labels = ds.labels().unwrap();
        assert_eq!(labels.ids, vec![0, 1, 0]);
        assert_eq!(labels.names, vec!["D1", "D2"]);

        let by_index = ParseOptions {
            label_column: Some(ColumnRef::Index(-1)),
            ..by_name
        };
        let ds2 = parse(text, &by_index).unwrap();
        assert_eq!(ds2.labels(), ds.labels());
    }

    #[test]
    fn ragged_row_reports_index() {
        let err = parse("a,b\nc\n", &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, DatasetError::Ragged { row: 1, .. }));
    }

    #[test]
    fn all_columns_dropped() {
        let err = parse("a,b\na,b\n", &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, DatasetError::EmptyFeatures));
    }

    #[test]
    fn too_small_inputs() {
        assert!(matches!(
            parse("", &ParseOptions::default()),
            Err(DatasetError::TooSmall { .. })
        ));
        assert!(matches!(
            parse("a\nb\n", &ParseOptions::default()),
            Err(DatasetError::TooSmall { .. })
        ));
    }

    #[test]
    fn unknown_label_column() {
        let opts = ParseOptions {
            label_column: Some(ColumnRef::Index(7)),
            ..Default::default()
        };
        assert!(matches!(
            parse("a,b\nc,d\n", &opts),
            Err(DatasetError::UnknownLabelColumn(_))
        ));
    }

    #[test]
    fn numeric_values_are_categories() {
        let ds = parse("4,a\n2,b\n4,b\n0,a\n", &ParseOptions::default()).unwrap();
        assert_eq!(ds.categories()[0], vec!["4", "2", "0"]);
    }

    #[test]
    fn decode_round_trip() {
        let text = "red,s,t\nblue,m,t\ngreen,s,f\nred,l,f\n";
        let ds = parse(text, &ParseOptions::default()).unwrap();
        let decoded: Vec<String> = (0..ds.n()).map(|i| ds.decode(ds.row(i)).join(",")).collect();
        let expected: Vec<&str> = text.lines().collect();
        assert_eq!(decoded, expected);
    }

    #[test]
    fn reparse_is_identical() {
        let text = "a,x,1\nb,y,2\nc,x,1\n";
        let a = parse(text, &ParseOptions::default()).unwrap();
        let b = parse(text, &ParseOptions::default()).unwrap();
        assert_eq!(a.codes, b.codes);
        assert_eq!(a.categories, b.categories);
    }

    #[test]
    fn from_codes_validates() {
        assert!(Dataset::from_codes(&[vec![0, 1], vec![1]], None).is_err());
        assert!(Dataset::from_codes(&[vec![0, 3]], Some(&[2, 2])).is_err());
        let ds = Dataset::from_codes(&[vec![0, 0], vec![0, 1]], None).unwrap();
        assert_eq!(ds.cardinalities(), vec![2, 2]);
    }

    #[test]
    fn distinct_rows_first_occurrence() {
        let ds = Dataset::from_codes(&[vec![0, 1], vec![1, 1], vec![0, 1], vec![1, 0]], None).unwrap();
        assert_eq!(ds.distinct_rows(), vec![0, 1, 3]);
    }

    #[test]
    fn shuffle_singleton_and_determinism() {
        let one = Dataset::from_codes(&[vec![0, 1]], None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(shuffle_order(&one, &mut rng), vec![0]);

        let four = Dataset::from_codes(&[vec![0], vec![1], vec![0], vec![1]], None).unwrap();
        let a = shuffle_order(&four, &mut ChaCha8Rng::seed_from_u64(11));
        let b = shuffle_order(&four, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn shuffle_position_of_first_element_is_uniform() {
        // Chi-square goodness of fit of where element 0 lands, over 10^4 seeds.
        let rows: Vec<Vec<Code>> = (0..10).map(|i| vec![i as Code]).collect();
        let ds = Dataset::from_codes(&rows, None).unwrap();
        let seeds = 10_000;
        let mut hist = [0usize; 10];
        for s in 0..seeds {
            let order = shuffle_order(&ds, &mut ChaCha8Rng::seed_from_u64(s));
            hist[order.iter().position(|&x| x == 0).unwrap()] += 1;
        }
        let expected = seeds as f64 / 10.0;
        let chi2: f64 = hist
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square 0.99 quantile with 9 degrees of freedom
        assert!(chi2 < 21.666, "chi2 = {chi2}");
    }
}
