//! Reading NSL-KDD style flow records.
//!
//! A record is one comma-separated line: 41 feature fields, then (optionally)
//! the label token and (optionally) the difficulty column. Three of the
//! features are categorical (protocol, service, flag); the remaining 38 are
//! non-negative reals and are kept in file order in [`RawFlow::numeric`].

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Feature fields per record, excluding label and difficulty.
pub const FEATURE_COUNT: usize = 41;
/// Numeric feature fields per record (every feature except the three categorical ones).
pub const NUMERIC_COUNT: usize = 38;

const PROTOCOL_COLUMN: usize = 1;
const SERVICE_COLUMN: usize = 2;
const FLAG_COLUMN: usize = 3;

/// Names of the 38 numeric columns, in file order.
pub const NUMERIC_COLUMNS: [&str; NUMERIC_COUNT] = [
    "duration",
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
];

const STANDARD_CATEGORIES: &str = include_str!("../data/attack_categories.csv");

/// One flow record before encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFlow {
    pub protocol: String,
    pub service: String,
    pub flag: String,
    /// The 38 numeric attributes in file order; `numeric[0]` is the duration.
    pub numeric: [f64; NUMERIC_COUNT],
    /// Label token as it appeared in the file, when the schema carries one.
    pub label: Option<String>,
    pub difficulty: Option<u32>,
}

impl RawFlow {
    pub fn duration(&self) -> f64 {
        self.numeric[0]
    }

    /// Serializes the record back to a line in the same column layout it was read with.
    pub fn to_csv_line(&self) -> String {
        let mut fields: Vec<String> = Vec::with_capacity(FEATURE_COUNT + 2);
        fields.push(self.numeric[0].to_string());
        fields.push(self.protocol.clone());
        fields.push(self.service.clone());
        fields.push(self.flag.clone());
        fields.extend(self.numeric[1..].iter().map(f64::to_string));
        if let Some(label) = &self.label {
            fields.push(label.clone());
        }
        if let Some(difficulty) = self.difficulty {
            fields.push(difficulty.to_string());
        }
        fields.join(",")
    }
}

/// Binary class used for detection and evaluation. Anomaly is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Class {
    Normal,
    Anomaly,
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Class::Normal => f.write_str("Normal"),
            Class::Anomaly => f.write_str("Anomaly"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackCategory {
    DoS,
    Probing,
    R2L,
    U2R,
    /// An attack name missing from the category table.
    Unknown,
}

impl AttackCategory {
    pub const KNOWN: [AttackCategory; 4] = [
        AttackCategory::DoS,
        AttackCategory::Probing,
        AttackCategory::R2L,
        AttackCategory::U2R,
    ];

    fn parse(token: &str) -> Option<Self> {
        match token.trim().to_ascii_lowercase().as_str() {
            "dos" => Some(AttackCategory::DoS),
            "probing" | "probe" => Some(AttackCategory::Probing),
            "r2l" => Some(AttackCategory::R2L),
            "u2r" => Some(AttackCategory::U2R),
            _ => None,
        }
    }
}

impl fmt::Display for AttackCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AttackCategory::DoS => "DoS",
            AttackCategory::Probing => "Probing",
            AttackCategory::R2L => "R2L",
            AttackCategory::U2R => "U2R",
            AttackCategory::Unknown => "UnknownCategory",
        };
        f.write_str(name)
    }
}

/// Ground-truth label of a flow. Only anomalies carry a category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowLabel {
    Normal,
    Anomaly(AttackCategory),
}

impl FlowLabel {
    pub fn class(self) -> Class {
        match self {
            FlowLabel::Normal => Class::Normal,
            FlowLabel::Anomaly(_) => Class::Anomaly,
        }
    }

    pub fn category(self) -> Option<AttackCategory> {
        match self {
            FlowLabel::Normal => None,
            FlowLabel::Anomaly(category) => Some(category),
        }
    }
}

/// Attack name to category table, loaded from `attack_name,category` lines.
#[derive(Debug, Clone, Default)]
pub struct CategoryMap {
    entries: HashMap<String, AttackCategory>,
}

impl CategoryMap {
    /// The standard NSL-KDD table shipped with the crate.
    pub fn standard() -> Self {
        Self::parse(STANDARD_CATEGORIES.as_bytes()).expect("bundled category table is valid")
    }

    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|source| IngestError::Open {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(file)
    }

    /// Parses `attack_name,category` lines. Blank lines and `#` comments are ignored.
    pub fn parse<R: Read>(reader: R) -> Result<Self, IngestError> {
        let mut entries = HashMap::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, category) = line.split_once(',').ok_or_else(|| IngestError::Mapping {
                line: idx + 1,
                message: format!("expected `attack_name,category`, got {line:?}"),
            })?;
            let category = AttackCategory::parse(category).ok_or_else(|| IngestError::Mapping {
                line: idx + 1,
                message: format!("unknown category {:?}", category.trim()),
            })?;
            entries.insert(normalize_token(name), category);
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Maps a label token to a [`FlowLabel`]. Total: unknown attack names are
    /// anomalies of [`AttackCategory::Unknown`].
    pub fn map_label(&self, token: &str) -> FlowLabel {
        let token = normalize_token(token);
        if token == "normal" {
            return FlowLabel::Normal;
        }
        FlowLabel::Anomaly(
            self.entries
                .get(&token)
                .copied()
                .unwrap_or(AttackCategory::Unknown),
        )
    }
}

// Some distributions of the files end labels with a period (KDDCUP'99 style).
fn normalize_token(token: &str) -> String {
    token.trim().trim_end_matches('.').to_ascii_lowercase()
}

/// Which trailing columns a file carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnSchema {
    pub labeled: bool,
    pub difficulty: bool,
}

impl ColumnSchema {
    /// The published KDDTrain+/KDDTest+ layout: features, label, difficulty.
    pub const NSL_KDD: ColumnSchema = ColumnSchema {
        labeled: true,
        difficulty: true,
    };
    pub const LABELED: ColumnSchema = ColumnSchema {
        labeled: true,
        difficulty: false,
    };
    pub const UNLABELED: ColumnSchema = ColumnSchema {
        labeled: false,
        difficulty: false,
    };

    pub fn field_count(&self) -> usize {
        FEATURE_COUNT + usize::from(self.labeled) + usize::from(self.difficulty)
    }
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self::NSL_KDD
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Abort on the first malformed record.
    #[default]
    Strict,
    /// Skip malformed records and report them as diagnostics.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordErrorKind {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("column {column} ({name}): cannot parse {value:?} as a finite non-negative number")]
    Numeric {
        column: usize,
        name: &'static str,
        value: String,
    },
    #[error("column {column}: empty {name} token")]
    EmptyToken { column: usize, name: &'static str },
    #[error("difficulty column: cannot parse {0:?} as an integer")]
    Difficulty(String),
}

/// A malformed record, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct RecordError {
    pub line: usize,
    pub kind: RecordErrorKind,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("read failure: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("category table line {line}: {message}")]
    Mapping { line: usize, message: String },
    #[error("schema has no label column; labeled records are required here")]
    Unlabeled,
}

/// One successfully parsed line.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRecord {
    pub line: usize,
    pub flow: RawFlow,
    pub label: Option<FlowLabel>,
}

/// Per-line parse outcome: either a record, a record-level error, or a fatal
/// read failure (which ends iteration).
#[derive(Debug)]
pub enum LineOutcome {
    Record(ParsedRecord),
    Invalid(RecordError),
}

/// Streaming record reader. Yields one [`LineOutcome`] per input line, in order.
pub struct RecordReader<'a, R> {
    lines: io::Lines<R>,
    line: usize,
    schema: ColumnSchema,
    categories: &'a CategoryMap,
}

impl<'a, R: BufRead> RecordReader<'a, R> {
    pub fn new(reader: R, schema: ColumnSchema, categories: &'a CategoryMap) -> Self {
        Self {
            lines: reader.lines(),
            line: 0,
            schema,
            categories,
        }
    }
}

impl<R: BufRead> Iterator for RecordReader<'_, R> {
    type Item = Result<LineOutcome, io::Error>;

    fn next(&mut self) -> Option<Self::Item> {
        let text = match self.lines.next()? {
            Ok(text) => text,
            Err(err) => return Some(Err(err)),
        };
        self.line += 1;
        let outcome = match parse_line(&text, self.schema) {
            Ok(flow) => {
                let label = flow
                    .label
                    .as_deref()
                    .map(|token| self.categories.map_label(token));
                LineOutcome::Record(ParsedRecord {
                    line: self.line,
                    flow,
                    label,
                })
            }
            Err(kind) => LineOutcome::Invalid(RecordError {
                line: self.line,
                kind,
            }),
        };
        Some(Ok(outcome))
    }
}

/// Result of parsing a whole stream.
#[derive(Debug, Default)]
pub struct Parsed {
    pub records: Vec<ParsedRecord>,
    /// Record-level errors skipped in lenient mode (always empty in strict mode).
    pub skipped: Vec<RecordError>,
}

/// Parses every line of `input`. Strict mode fails on the first malformed record.
pub fn parse_records<R: BufRead>(
    input: R,
    schema: ColumnSchema,
    categories: &CategoryMap,
    mode: ParseMode,
) -> Result<Parsed, IngestError> {
    let mut parsed = Parsed::default();
    for outcome in RecordReader::new(input, schema, categories) {
        match outcome? {
            LineOutcome::Record(record) => parsed.records.push(record),
            LineOutcome::Invalid(err) => match mode {
                ParseMode::Strict => return Err(err.into()),
                ParseMode::Lenient => parsed.skipped.push(err),
            },
        }
    }
    Ok(parsed)
}

fn parse_line(text: &str, schema: ColumnSchema) -> Result<RawFlow, RecordErrorKind> {
    let text = text.trim_end_matches('\r');
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    let expected = schema.field_count();
    if fields.len() != expected {
        return Err(RecordErrorKind::FieldCount {
            expected,
            found: fields.len(),
        });
    }

    let token = |column: usize, name: &'static str| -> Result<String, RecordErrorKind> {
        let value = fields[column];
        if value.is_empty() {
            Err(RecordErrorKind::EmptyToken { column, name })
        } else {
            Ok(value.to_string())
        }
    };
    let protocol = token(PROTOCOL_COLUMN, "protocol")?;
    let service = token(SERVICE_COLUMN, "service")?;
    let flag = token(FLAG_COLUMN, "flag")?;

    let mut numeric = [0.0; NUMERIC_COUNT];
    let numeric_columns = (0..FEATURE_COUNT)
        .filter(|&c| c != PROTOCOL_COLUMN && c != SERVICE_COLUMN && c != FLAG_COLUMN);
    for (slot, column) in numeric_columns.enumerate() {
        let raw = fields[column];
        numeric[slot] = raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| RecordErrorKind::Numeric {
                column: column + 1,
                name: NUMERIC_COLUMNS[slot],
                value: raw.to_string(),
            })?;
    }

    let label = if schema.labeled {
        Some(token(FEATURE_COUNT, "label")?)
    } else {
        None
    };
    let difficulty = if schema.difficulty {
        let raw = fields[expected - 1];
        Some(
            raw.parse::<u32>()
                .map_err(|_| RecordErrorKind::Difficulty(raw.to_string()))?,
        )
    } else {
        None
    };

    Ok(RawFlow {
        protocol,
        service,
        flag,
        numeric,
        label,
        difficulty,
    })
}

/// A flow together with its ground-truth label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFlow {
    pub flow: RawFlow,
    pub label: FlowLabel,
}

/// An in-memory labeled dataset.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<LabeledFlow>,
    /// Lines skipped in lenient mode.
    pub skipped: Vec<RecordError>,
}

impl Dataset {
    pub fn from_reader<R: BufRead>(
        input: R,
        schema: ColumnSchema,
        categories: &CategoryMap,
        mode: ParseMode,
    ) -> Result<Self, IngestError> {
        if !schema.labeled {
            return Err(IngestError::Unlabeled);
        }
        let parsed = parse_records(input, schema, categories, mode)?;
        let records = parsed
            .records
            .into_iter()
            .map(|r| LabeledFlow {
                label: r.label.expect("labeled schema yields labels"),
                flow: r.flow,
            })
            .collect();
        Ok(Self {
            records,
            skipped: parsed.skipped,
        })
    }

    pub fn from_path(
        path: &Path,
        schema: ColumnSchema,
        categories: &CategoryMap,
        mode: ParseMode,
    ) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|source| IngestError::Open {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(BufReader::new(file), schema, categories, mode)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn summary(&self) -> DatasetSummary {
        summarize(self.records.iter().map(|r| r.label))
    }

    pub fn normals(&self) -> impl Iterator<Item = &LabeledFlow> {
        self.records
            .iter()
            .filter(|r| r.label == FlowLabel::Normal)
    }
}

/// Per-class record counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub total: usize,
    pub normal: usize,
    pub dos: usize,
    pub probing: usize,
    pub r2l: usize,
    pub u2r: usize,
    pub unknown_category: usize,
}

impl DatasetSummary {
    pub fn anomalies(&self) -> usize {
        self.dos + self.probing + self.r2l + self.u2r + self.unknown_category
    }

    pub fn category(&self, category: AttackCategory) -> usize {
        match category {
            AttackCategory::DoS => self.dos,
            AttackCategory::Probing => self.probing,
            AttackCategory::R2L => self.r2l,
            AttackCategory::U2R => self.u2r,
            AttackCategory::Unknown => self.unknown_category,
        }
    }
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16}{:>8}", "Normal", self.normal)?;
        writeln!(f, "{:<16}{:>8}", "DoS", self.dos)?;
        writeln!(f, "{:<16}{:>8}", "Probing", self.probing)?;
        writeln!(f, "{:<16}{:>8}", "R2L", self.r2l)?;
        writeln!(f, "{:<16}{:>8}", "U2R", self.u2r)?;
        if self.unknown_category > 0 {
            writeln!(f, "{:<16}{:>8}", "UnknownCategory", self.unknown_category)?;
        }
        write!(f, "{:<16}{:>8}", "Total", self.total)
    }
}

pub fn summarize<I: IntoIterator<Item = FlowLabel>>(labels: I) -> DatasetSummary {
    let mut summary = DatasetSummary::default();
    for label in labels {
        summary.total += 1;
        match label {
            FlowLabel::Normal => summary.normal += 1,
            FlowLabel::Anomaly(AttackCategory::DoS) => summary.dos += 1,
            FlowLabel::Anomaly(AttackCategory::Probing) => summary.probing += 1,
            FlowLabel::Anomaly(AttackCategory::R2L) => summary.r2l += 1,
            FlowLabel::Anomaly(AttackCategory::U2R) => summary.u2r += 1,
            FlowLabel::Anomaly(AttackCategory::Unknown) => summary.unknown_category += 1,
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIRST_TRAIN_LINE: &str = "0,tcp,ftp_data,SF,491,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,2,2,0.00,0.00,0.00,0.00,1.00,0.00,0.00,150,25,0.17,0.03,0.17,0.00,0.00,0.00,0.05,0.00,normal,20";
    const HTTP_LINE: &str = "0,tcp,http,SF,232,8153,0,0,0,0,0,1,0,0,0,0,0,0,0,0,0,0,5,5,0.20,0.20,0.00,0.00,1.00,0.00,0.00,30,255,1.00,0.00,0.03,0.04,0.03,0.01,0.00,0.01,normal,21";
    const NEPTUNE_LINE: &str = "0,tcp,private,S0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,123,6,1.00,1.00,0.00,0.00,0.05,0.07,0.00,255,26,0.10,0.05,0.00,0.00,1.00,1.00,0.00,0.00,neptune,19";

    fn parse(text: &str, mode: ParseMode) -> Result<Parsed, IngestError> {
        parse_records(
            text.as_bytes(),
            ColumnSchema::NSL_KDD,
            &CategoryMap::standard(),
            mode,
        )
    }

    #[test]
    fn empty_input_yields_nothing() {
        let parsed = parse("", ParseMode::Strict).unwrap();
        assert!(parsed.records.is_empty());
        assert!(parsed.skipped.is_empty());
    }

    #[test]
    fn parses_http_normal_record() {
        let parsed = parse(HTTP_LINE, ParseMode::Strict).unwrap();
        let record = &parsed.records[0];
        assert_eq!(record.flow.protocol, "tcp");
        assert_eq!(record.flow.service, "http");
        assert_eq!(record.flow.flag, "SF");
        assert_eq!(record.flow.numeric[1], 232.0);
        assert_eq!(record.flow.numeric[2], 8153.0);
        assert_eq!(record.flow.difficulty, Some(21));
        assert_eq!(record.label, Some(FlowLabel::Normal));
    }

    #[test]
    fn preserves_order_and_line_numbers() {
        let text = format!("{FIRST_TRAIN_LINE}\n{NEPTUNE_LINE}\n{HTTP_LINE}\n");
        let parsed = parse(&text, ParseMode::Strict).unwrap();
        let services: Vec<_> = parsed.records.iter().map(|r| r.flow.service.as_str()).collect();
        assert_eq!(services, ["ftp_data", "private", "http"]);
        assert_eq!(parsed.records[1].line, 2);
        assert_eq!(parsed.records[1].label, Some(FlowLabel::Anomaly(AttackCategory::DoS)));
    }

    #[test]
    fn short_line_is_a_record_error_naming_the_line() {
        let short = HTTP_LINE.split(',').skip(1).collect::<Vec<_>>().join(",");
        let text = format!("{FIRST_TRAIN_LINE}\n{short}\n");
        let err = parse(&text, ParseMode::Strict).unwrap_err();
        match err {
            IngestError::Record(RecordError { line, kind }) => {
                assert_eq!(line, 2);
                assert_eq!(
                    kind,
                    RecordErrorKind::FieldCount {
                        expected: 43,
                        found: 42
                    }
                );
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn forty_field_line_is_rejected() {
        let fields: Vec<&str> = HTTP_LINE.split(',').take(40).collect();
        let err = parse_records(
            fields.join(",").as_bytes(),
            ColumnSchema::UNLABELED,
            &CategoryMap::standard(),
            ParseMode::Strict,
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("line 1:"), "{err}");
    }

    #[test]
    fn lenient_mode_skips_and_counts() {
        let bad_numeric = HTTP_LINE.replacen(",232,", ",abc,", 1);
        let negative = HTTP_LINE.replacen(",232,", ",-5,", 1);
        let text = format!("{bad_numeric}\n{HTTP_LINE}\n{negative}\n");
        let parsed = parse(&text, ParseMode::Lenient).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.records[0].line, 2);
        assert_eq!(parsed.skipped.len(), 2);
        assert_eq!(parsed.skipped[0].line, 1);
        assert!(matches!(
            parsed.skipped[1].kind,
            RecordErrorKind::Numeric { column: 5, name: "src_bytes", .. }
        ));
        assert!(parse(&text, ParseMode::Strict).is_err());
    }

    #[test]
    fn empty_categorical_token_is_rejected() {
        let text = HTTP_LINE.replacen(",http,", ",,", 1);
        let err = parse(&text, ParseMode::Strict).unwrap_err();
        assert!(err.to_string().contains("service"), "{err}");
    }

    #[test]
    fn difficulty_column_is_optional() {
        let without: Vec<&str> = HTTP_LINE.split(',').take(42).collect();
        let parsed = parse_records(
            without.join(",").as_bytes(),
            ColumnSchema::LABELED,
            &CategoryMap::standard(),
            ParseMode::Strict,
        )
        .unwrap();
        assert_eq!(parsed.records[0].flow.difficulty, None);
        assert_eq!(parsed.records[0].label, Some(FlowLabel::Normal));
    }

    #[test]
    fn unlabeled_schema_has_no_label() {
        let features: Vec<&str> = HTTP_LINE.split(',').take(41).collect();
        let parsed = parse_records(
            features.join(",").as_bytes(),
            ColumnSchema::UNLABELED,
            &CategoryMap::standard(),
            ParseMode::Strict,
        )
        .unwrap();
        assert_eq!(parsed.records[0].label, None);
        assert_eq!(parsed.records[0].flow.label, None);
    }

    #[test]
    fn label_mapping() {
        let map = CategoryMap::standard();
        assert_eq!(map.map_label("normal"), FlowLabel::Normal);
        assert_eq!(map.map_label("neptune"), FlowLabel::Anomaly(AttackCategory::DoS));
        assert_eq!(map.map_label("satan"), FlowLabel::Anomaly(AttackCategory::Probing));
        assert_eq!(map.map_label("guess_passwd"), FlowLabel::Anomaly(AttackCategory::R2L));
        assert_eq!(map.map_label("rootkit"), FlowLabel::Anomaly(AttackCategory::U2R));
        assert_eq!(
            map.map_label("some_future_attack"),
            FlowLabel::Anomaly(AttackCategory::Unknown)
        );
        assert_eq!(map.map_label("Normal."), FlowLabel::Normal);
    }

    #[test]
    fn standard_table_covers_all_nsl_kdd_attack_names() {
        // 22 training-set attack names plus the 17 that only appear in the test set.
        assert_eq!(CategoryMap::standard().len(), 39);
    }

    #[test]
    fn custom_category_table() {
        let map = CategoryMap::parse("# comment\nzeroday,dos\n\nfoo, U2R\n".as_bytes()).unwrap();
        assert_eq!(map.map_label("zeroday"), FlowLabel::Anomaly(AttackCategory::DoS));
        assert_eq!(map.map_label("foo"), FlowLabel::Anomaly(AttackCategory::U2R));
        assert!(CategoryMap::parse("zeroday\n".as_bytes()).is_err());
        assert!(CategoryMap::parse("zeroday,worm\n".as_bytes()).is_err());
    }

    #[test]
    fn summary_of_empty_dataset_is_zero() {
        assert_eq!(summarize(std::iter::empty()), DatasetSummary::default());
    }

    #[test]
    fn summary_counts_classes() {
        let text = format!("{FIRST_TRAIN_LINE}\n{NEPTUNE_LINE}\n{HTTP_LINE}\n");
        let dataset = Dataset::from_reader(
            text.as_bytes(),
            ColumnSchema::NSL_KDD,
            &CategoryMap::standard(),
            ParseMode::Strict,
        )
        .unwrap();
        let summary = dataset.summary();
        assert_eq!(summary.total, 3);
        assert_eq!(summary.normal, 2);
        assert_eq!(summary.dos, 1);
        assert_eq!(summary.anomalies(), 1);
    }

    fn arb_flow() -> impl Strategy<Value = RawFlow> {
        (
            prop::sample::select(vec!["tcp", "udp", "icmp"]),
            "[a-z_]{1,10}",
            prop::sample::select(vec!["SF", "S0", "REJ", "RSTO"]),
            prop::collection::vec(0.0f64..1e9, NUMERIC_COUNT),
            prop::sample::select(vec!["normal", "neptune", "mscan", "xyz"]),
            prop::option::of(0u32..22),
        )
            .prop_map(|(protocol, service, flag, numeric, label, difficulty)| RawFlow {
                protocol: protocol.to_string(),
                service,
                flag: flag.to_string(),
                numeric: numeric.try_into().unwrap(),
                label: Some(label.to_string()),
                difficulty,
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip(flow in arb_flow()) {
            let schema = ColumnSchema { labeled: true, difficulty: flow.difficulty.is_some() };
            let line = flow.to_csv_line();
            let parsed = parse_records(line.as_bytes(), schema, &CategoryMap::standard(), ParseMode::Strict).unwrap();
            prop_assert_eq!(&parsed.records[0].flow, &flow);
        }

        #[test]
        fn summary_is_permutation_invariant(
            labels in prop::collection::vec(prop::sample::select(vec!["normal", "neptune", "satan", "imap", "perl", "zzz"]), 0..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let map = CategoryMap::standard();
            let mapped: Vec<FlowLabel> = labels.iter().map(|l| map.map_label(l)).collect();
            let mut shuffled = mapped.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = summarize(mapped);
            let b = summarize(shuffled);
            prop_assert_eq!(a, b);
            prop_assert_eq!(a.normal + a.anomalies(), a.total);
        }
    }
}
