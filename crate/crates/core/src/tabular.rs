//! Typed heterogeneous tables: schema inference, categorical encoding, CSV
//! ingestion and single-level parent/child flattening.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Category assigned to empty cells of categorical columns.
pub const MISSING_CATEGORY: &str = "<NA>";

pub const SCHEMA_VERSION: &str = "schema-v1";

/// Integer literals at or beyond 2^53 may not survive the round trip through
/// `f64`.
const MAX_EXACT_INT: f64 = 9_007_199_254_740_992.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

impl ColumnSchema {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
            categories: None,
        }
    }

    /// Builds a categorical column; categories are sorted and deduplicated.
    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        let set: BTreeSet<String> = categories.into_iter().map(Into::into).collect();
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            categories: Some(set.into_iter().collect()),
        }
    }

    pub fn n_categories(&self) -> usize {
        self.categories.as_ref().map_or(0, Vec::len)
    }

    pub fn category_index(&self, value: &str) -> Option<u32> {
        let cats = self.categories.as_ref()?;
        cats.binary_search_by(|c| c.as_str().cmp(value))
            .ok()
            .map(|i| i as u32)
    }

    fn validate(&self) -> Result<()> {
        match (self.kind, &self.categories) {
            (ColumnKind::Numeric, None) => Ok(()),
            (ColumnKind::Numeric, Some(_)) => Err(Error::InvalidSchema(format!(
                "numeric column `{}` must not list categories",
                self.name
            ))),
            (ColumnKind::Categorical, None) => Err(Error::InvalidSchema(format!(
                "categorical column `{}` has no categories",
                self.name
            ))),
            (ColumnKind::Categorical, Some(cats)) => {
                if cats.is_empty() {
                    return Err(Error::InvalidSchema(format!(
                        "categorical column `{}` has no categories",
                        self.name
                    )));
                }
                if cats.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidSchema(format!(
                        "categories of `{}` are not strictly sorted",
                        self.name
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    /// Column of the child table holding the reference.
    pub column: String,
    pub parent_table: String,
    pub parent_key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<ColumnSchema>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub foreign_keys: Vec<ForeignKey>,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    version: String,
    #[serde(flatten)]
    schema: TableSchema,
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnSchema>) -> Result<Self> {
        let schema = Self {
            columns,
            key: None,
            foreign_keys: Vec::new(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn with_key(mut self, key: impl Into<String>) -> Result<Self> {
        self.key = Some(key.into());
        self.validate()?;
        Ok(self)
    }

    pub fn with_foreign_key(mut self, fk: ForeignKey) -> Result<Self> {
        self.foreign_keys.push(fk);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::DuplicateColumn(col.name.clone()));
            }
            col.validate()?;
        }
        if let Some(key) = &self.key {
            if !seen.contains(key.as_str()) {
                return Err(Error::InvalidSchema(format!("key column `{key}` not found")));
            }
        }
        for fk in &self.foreign_keys {
            if !seen.contains(fk.column.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "foreign key column `{}` not found",
                    fk.column
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Key and foreign-key columns never enter feature extraction.
    pub fn is_excluded(&self, index: usize) -> bool {
        let name = &self.columns[index].name;
        self.key.as_deref() == Some(name.as_str())
            || self.foreign_keys.iter().any(|fk| &fk.column == name)
    }

    /// Indices of columns usable as predictor inputs and targets.
    pub fn feature_columns(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| !self.is_excluded(i))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SchemaFile {
            version: SCHEMA_VERSION.to_string(),
            schema: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SchemaFile = serde_json::from_str(text)?;
        if file.version != SCHEMA_VERSION {
            return Err(Error::InvalidSchema(format!(
                "unsupported schema version `{}`",
                file.version
            )));
        }
        file.schema.validate()?;
        Ok(file.schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Num(f64),
    /// Index into the column's sorted categories.
    Cat(u32),
}

impl Cell {
    /// Value seen by the tree learner: numbers as-is, categories as ordinals.
    pub fn as_f64(self) -> f64 {
        match self {
            Cell::Num(v) => v,
            Cell::Cat(i) => i as f64,
        }
    }
}

/// Where a table came from. Attribute predictors refuse anything that is not
/// synthetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Synthetic,
}

/// Encoded table. Each row carries a record identity used to check split
/// disjointness.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: TableSchema,
    rows: Vec<Vec<Cell>>,
    ids: Vec<u64>,
    provenance: Provenance,
}

impl Dataset {
    /// Validates every row against the schema. Record ids default to row
    /// positions.
    pub fn new(schema: TableSchema, rows: Vec<Vec<Cell>>, provenance: Provenance) -> Result<Self> {
        let ids = (0..rows.len() as u64).collect();
        Self::with_ids(schema, rows, ids, provenance)
    }

    pub fn with_ids(
        schema: TableSchema,
        rows: Vec<Vec<Cell>>,
        ids: Vec<u64>,
        provenance: Provenance,
    ) -> Result<Self> {
        schema.validate()?;
        if ids.len() != rows.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} ids for {} rows",
                ids.len(),
                rows.len()
            )));
        }
        for (r, row) in rows.iter().enumerate() {
            check_row(&schema, r, row)?;
        }
        Ok(Self {
            schema,
            rows,
            ids,
            provenance,
        })
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn row(&self, index: usize) -> &[Cell] {
        &self.rows[index]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Rows at `indices`, in that order, keeping their ids.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
            provenance: self.provenance,
        }
    }

    pub fn column(&self, index: usize) -> impl Iterator<Item = Cell> + '_ {
        self.rows.iter().map(move |r| r[index])
    }

    pub fn decode_cell(&self, column: usize, cell: Cell) -> String {
        decode_cell(&self.schema.columns[column], cell)
    }

    /// Inverse of [`encode_dataset`]. Numbers are rendered with the shortest
    /// round-tripping representation; `<NA>` decodes to an empty cell.
    pub fn to_raw(&self) -> RawTable {
        RawTable {
            headers: self.schema.columns.iter().map(|c| c.name.clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .map(|(c, &cell)| self.decode_cell(c, cell))
                        .collect()
                })
                .collect(),
        }
    }
}

fn check_row(schema: &TableSchema, r: usize, row: &[Cell]) -> Result<()> {
    if row.len() != schema.columns.len() {
        return Err(Error::RowWidth {
            row: r,
            found: row.len(),
            expected: schema.columns.len(),
        });
    }
    for (col, cell) in schema.columns.iter().zip(row) {
        match (col.kind, *cell) {
            (ColumnKind::Numeric, Cell::Num(v)) if v.is_finite() => {}
            (ColumnKind::Numeric, Cell::Num(_)) => return Err(Error::NonFinite(r)),
            (ColumnKind::Categorical, Cell::Cat(i)) if (i as usize) < col.n_categories() => {}
            _ => {
                return Err(Error::SchemaMismatch(format!(
                    "row {r}: cell {cell:?} does not fit column `{}`",
                    col.name
                )))
            }
        }
    }
    Ok(())
}

fn decode_cell(col: &ColumnSchema, cell: Cell) -> String {
    match cell {
        Cell::Num(v) => format!("{v}"),
        Cell::Cat(i) => {
            let s = &col.categories.as_ref().expect("categorical column")[i as usize];
            if s == MISSING_CATEGORY {
                String::new()
            } else {
                s.clone()
            }
        }
    }
}

/// Header plus string cells, as read from CSV.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in rdr.records() {
            rows.push(record?.iter().map(str::to_string).collect());
        }
        Ok(Self { headers, rows })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn write_to(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&self.headers)?;
        for row in &self.rows {
            wtr.write_record(row)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Removes a column, returning its cells.
    pub fn take_column(&mut self, name: &str) -> Result<Vec<String>> {
        let idx = self
            .column_index(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        self.headers.remove(idx);
        Ok(self.rows.iter_mut().map(|r| r.remove(idx)).collect())
    }
}

/// Strict decimal parse: optional sign, digits with optional fraction, optional
/// exponent. Rejects `inf`, `nan`, hex and integers outside the exact `f64`
/// range.
pub fn parse_number(s: &str) -> Option<f64> {
    let bytes = s.as_bytes();
    let mut i = 0;
    if matches!(bytes.first(), Some(b'+' | b'-')) {
        i += 1;
    }
    let int_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let int_digits = i - int_start;
    let mut frac_digits = 0;
    let mut integral = true;
    if i < bytes.len() && bytes[i] == b'.' {
        integral = false;
        i += 1;
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        frac_digits = i - start;
    }
    if int_digits + frac_digits == 0 {
        return None;
    }
    if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
        integral = false;
        i += 1;
        if matches!(bytes.get(i), Some(b'+' | b'-')) {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == start {
            return None;
        }
    }
    if i != bytes.len() {
        return None;
    }
    let value: f64 = s.parse().ok()?;
    if !value.is_finite() || (integral && value.abs() >= MAX_EXACT_INT) {
        return None;
    }
    Some(value)
}

/// Infers column kinds and category sets from a raw table.
pub fn infer_schema(raw: &RawTable) -> Result<TableSchema> {
    if raw.headers.is_empty() || raw.rows.is_empty() {
        return Err(Error::EmptyTable("need a header and at least one data row".into()));
    }
    let mut seen = BTreeSet::new();
    for h in &raw.headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    for (r, row) in raw.rows.iter().enumerate() {
        if row.len() != raw.headers.len() {
            return Err(Error::RowWidth {
                row: r,
                found: row.len(),
                expected: raw.headers.len(),
            });
        }
    }

    let mut columns = Vec::with_capacity(raw.headers.len());
    for (c, name) in raw.headers.iter().enumerate() {
        let cells = raw.rows.iter().map(|row| row[c].as_str());
        let numeric = cells
            .clone()
            .filter(|s| !s.is_empty())
            .all(|s| parse_number(s).is_some());
        if numeric {
            if let Some(row) = cells.clone().position(str::is_empty) {
                return Err(Error::EmptyNumericCell {
                    column: name.clone(),
                    row,
                });
            }
            columns.push(ColumnSchema::numeric(name.clone()));
        } else {
            let cats = cells.map(|s| if s.is_empty() { MISSING_CATEGORY } else { s });
            columns.push(ColumnSchema::categorical(name.clone(), cats));
        }
    }
    TableSchema::new(columns)
}

/// Encodes a raw table under a fixed schema. Raw columns are matched by name
/// and reordered to schema order; row order is preserved.
pub fn encode_dataset(raw: &RawTable, schema: &TableSchema) -> Result<Dataset> {
    schema.validate()?;
    if raw.headers.len() != schema.columns.len() {
        return Err(Error::SchemaMismatch(format!(
            "table has {} columns, schema has {}",
            raw.headers.len(),
            schema.columns.len()
        )));
    }
    let positions = schema
        .columns
        .iter()
        .map(|col| {
            raw.column_index(&col.name)
                .ok_or_else(|| Error::UnknownColumn(col.name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(raw.rows.len());
    for (r, raw_row) in raw.rows.iter().enumerate() {
        if raw_row.len() != raw.headers.len() {
            return Err(Error::RowWidth {
                row: r,
                found: raw_row.len(),
                expected: raw.headers.len(),
            });
        }
        let mut row = Vec::with_capacity(schema.columns.len());
        for (col, &p) in schema.columns.iter().zip(&positions) {
            let value = raw_row[p].as_str();
            let cell = match col.kind {
                ColumnKind::Numeric => {
                    if value.is_empty() {
                        return Err(Error::EmptyNumericCell {
                            column: col.name.clone(),
                            row: r,
                        });
                    }
                    Cell::Num(parse_number(value).ok_or_else(|| Error::BadNumber {
                        column: col.name.clone(),
                        row: r,
                        value: value.to_string(),
                    })?)
                }
                ColumnKind::Categorical => {
                    let lookup = if value.is_empty() { MISSING_CATEGORY } else { value };
                    Cell::Cat(col.category_index(lookup).ok_or_else(|| {
                        Error::UnseenCategory {
                            column: col.name.clone(),
                            row: r,
                            value: value.to_string(),
                        }
                    })?)
                }
            };
            row.push(cell);
        }
        rows.push(row);
    }
    Dataset::new(schema.clone(), rows, Provenance::Real)
}

/// Comparable text form of a key cell, so numeric `1` and categorical `"1"`
/// match.
fn key_string(data: &Dataset, column: usize, cell: Cell) -> String {
    data.decode_cell(column, cell)
}

/// Joins every child row to its parent row. Output columns are the child's
/// followed by the parent's non-key columns renamed `parent.<name>`.
pub fn denormalize(parent: &Dataset, child: &Dataset, fk: &ForeignKey) -> Result<Dataset> {
    let fk_col = child
        .schema
        .column_index(&fk.column)
        .ok_or_else(|| Error::UnknownColumn(fk.column.clone()))?;
    let pk_col = parent
        .schema
        .column_index(&fk.parent_key)
        .ok_or_else(|| Error::UnknownColumn(fk.parent_key.clone()))?;
    if parent.provenance != child.provenance {
        return Err(Error::SchemaMismatch(
            "parent and child tables have different provenance".into(),
        ));
    }

    let mut index: HashMap<String, usize> = HashMap::with_capacity(parent.len());
    for (r, row) in parent.rows.iter().enumerate() {
        let key = key_string(parent, pk_col, row[pk_col]);
        if index.insert(key.clone(), r).is_some() {
            return Err(Error::DuplicateParentKey(key));
        }
    }

    let parent_cols: Vec<usize> = (0..parent.schema.columns.len())
        .filter(|&c| c != pk_col)
        .collect();
    let mut columns = child.schema.columns.clone();
    for &c in &parent_cols {
        let mut col = parent.schema.columns[c].clone();
        col.name = format!("parent.{}", col.name);
        columns.push(col);
    }
    let mut foreign_keys = child.schema.foreign_keys.clone();
    if !foreign_keys.iter().any(|f| f.column == fk.column) {
        foreign_keys.push(fk.clone());
    }
    for pfk in &parent.schema.foreign_keys {
        foreign_keys.push(ForeignKey {
            column: format!("parent.{}", pfk.column),
            ..pfk.clone()
        });
    }
    let schema = TableSchema {
        columns,
        key: child.schema.key.clone(),
        foreign_keys,
    };
    schema.validate()?;

    let mut rows = Vec::with_capacity(child.len());
    for row in &child.rows {
        let key = key_string(child, fk_col, row[fk_col]);
        let &p = index.get(&key).ok_or_else(|| Error::DanglingForeignKey {
            column: fk.column.clone(),
            value: key.clone(),
        })?;
        let mut out = row.clone();
        out.extend(parent_cols.iter().map(|&c| parent.rows[p][c]));
        rows.push(out);
    }
    Dataset::with_ids(schema, rows, child.ids.clone(), child.provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(headers: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    fn column(values: &[&str]) -> RawTable {
        raw(&["v"], &values.iter().map(std::slice::from_ref).collect::<Vec<_>>())
    }

    #[test]
    fn infers_numeric_column() {
        let schema = infer_schema(&column(&["1.5", "2", "30"])).unwrap();
        assert_eq!(schema.columns[0].kind, ColumnKind::Numeric);
    }

    #[test]
    fn infers_sorted_categories() {
        let schema = infer_schema(&column(&["b", "a", "b"])).unwrap();
        assert_eq!(schema.columns[0].kind, ColumnKind::Categorical);
        assert_eq!(schema.columns[0].categories.as_deref().unwrap(), ["a", "b"]);
    }

    #[test]
    fn mixed_content_is_categorical() {
        let schema = infer_schema(&column(&["1", "2", "x"])).unwrap();
        assert_eq!(
            schema.columns[0].categories.as_deref().unwrap(),
            ["1", "2", "x"]
        );
    }

    #[test]
    fn empty_categorical_cell_becomes_na() {
        let schema = infer_schema(&column(&["b", "", "a"])).unwrap();
        assert_eq!(
            schema.columns[0].categories.as_deref().unwrap(),
            ["<NA>", "a", "b"]
        );
    }

    #[test]
    fn inference_errors() {
        assert!(matches!(
            infer_schema(&column(&["1", "", "3"])),
            Err(Error::EmptyNumericCell { row: 1, .. })
        ));
        assert!(matches!(
            infer_schema(&raw(&["a", "a"], &[&["1", "2"]])),
            Err(Error::DuplicateColumn(_))
        ));
        assert!(matches!(
            infer_schema(&raw(&["a"], &[])),
            Err(Error::EmptyTable(_))
        ));
    }

    #[test]
    fn number_parsing_rules() {
        assert_eq!(parse_number("2.50"), Some(2.5));
        assert_eq!(parse_number("-1e3"), Some(-1000.0));
        assert_eq!(parse_number(".5"), Some(0.5));
        assert_eq!(parse_number("9007199254740991"), Some(9007199254740991.0));
        for bad in ["", "inf", "NaN", "1e", "0x10", "1.2.3", " 1", "+", "9007199254740992", "9007199254740993", "1e400"] {
            assert_eq!(parse_number(bad), None, "{bad:?}");
        }
    }

    #[test]
    fn encodes_cells() {
        let schema = TableSchema::new(vec![
            ColumnSchema::categorical("c", ["a", "b", "c"]),
            ColumnSchema::numeric("n"),
        ])
        .unwrap();
        let data = encode_dataset(&raw(&["c", "n"], &[&["b", "2.50"]]), &schema).unwrap();
        assert_eq!(data.row(0), [Cell::Cat(1), Cell::Num(2.5)]);

        let err = encode_dataset(&raw(&["c", "n"], &[&["z", "1"]]), &schema).unwrap_err();
        assert!(matches!(err, Error::UnseenCategory { .. }));
        assert!(err.to_string().contains("unseen category"));

        let err = encode_dataset(&raw(&["c", "n"], &[&["a", "abc"]]), &schema).unwrap_err();
        assert!(matches!(err, Error::BadNumber { .. }));
    }

    #[test]
    fn encode_reorders_columns_by_name() {
        let schema = TableSchema::new(vec![
            ColumnSchema::numeric("n"),
            ColumnSchema::categorical("c", ["a"]),
        ])
        .unwrap();
        let data = encode_dataset(&raw(&["c", "n"], &[&["a", "7"]]), &schema).unwrap();
        assert_eq!(data.row(0), [Cell::Num(7.0), Cell::Cat(0)]);
    }

    #[test]
    fn schema_invariants() {
        let bad = TableSchema::new(vec![ColumnSchema {
            name: "c".into(),
            kind: ColumnKind::Categorical,
            categories: Some(vec!["b".into(), "a".into()]),
        }]);
        assert!(bad.is_err());
        let schema = TableSchema::new(vec![ColumnSchema::numeric("a")]).unwrap();
        assert!(schema.clone().with_key("missing").is_err());
        assert!(schema
            .with_foreign_key(ForeignKey {
                column: "zz".into(),
                parent_table: "p".into(),
                parent_key: "id".into()
            })
            .is_err());
    }

    #[test]
    fn schema_json_round_trip() {
        let schema = TableSchema::new(vec![
            ColumnSchema::numeric("id"),
            ColumnSchema::categorical("c", ["x", "y"]),
            ColumnSchema::numeric("fk"),
        ])
        .unwrap()
        .with_key("id")
        .unwrap()
        .with_foreign_key(ForeignKey {
            column: "fk".into(),
            parent_table: "accounts".into(),
            parent_key: "id".into(),
        })
        .unwrap();
        let json = schema.to_json().unwrap();
        assert!(json.contains("\"version\": \"schema-v1\""));
        assert_eq!(TableSchema::from_json(&json).unwrap(), schema);
        assert_eq!(schema.feature_columns(), vec![1]);

        let wrong = json.replace("schema-v1", "schema-v9");
        assert!(TableSchema::from_json(&wrong).is_err());
    }

    fn tables(parent_rows: &[&[&str]], child_rows: &[&[&str]]) -> (Dataset, Dataset, ForeignKey) {
        let p_raw = raw(&["id", "region"], parent_rows);
        let p_schema = infer_schema(&p_raw).unwrap().with_key("id").unwrap();
        let parent = encode_dataset(&p_raw, &p_schema).unwrap();
        let c_raw = raw(&["aid", "cust", "bal"], child_rows);
        let fk = ForeignKey {
            column: "cust".into(),
            parent_table: "customers".into(),
            parent_key: "id".into(),
        };
        let c_schema = infer_schema(&c_raw)
            .unwrap()
            .with_key("aid")
            .unwrap()
            .with_foreign_key(fk.clone())
            .unwrap();
        let child = encode_dataset(&c_raw, &c_schema).unwrap();
        (parent, child, fk)
    }

    #[test]
    fn denormalize_joins_parent_columns() {
        let (parent, child, fk) = tables(&[&["1", "N"], &["2", "S"]], &[&["7", "1", "50"]]);
        let joined = denormalize(&parent, &child, &fk).unwrap();
        let raw = joined.to_raw();
        assert_eq!(raw.headers, ["aid", "cust", "bal", "parent.region"]);
        assert_eq!(raw.rows, vec![vec!["7", "1", "50", "N"]]);
        assert_eq!(joined.schema().feature_columns(), vec![2, 3]);
        assert_eq!(joined.len(), child.len());
    }

    #[test]
    fn denormalize_errors() {
        let (parent, child, fk) = tables(&[&["1", "N"]], &[&["7", "9", "50"]]);
        let err = denormalize(&parent, &child, &fk).unwrap_err();
        assert!(err.to_string().contains("dangling foreign key"));

        let (parent, child, fk) = tables(&[&["1", "N"], &["1", "S"]], &[&["7", "1", "50"]]);
        let err = denormalize(&parent, &child, &fk).unwrap_err();
        assert!(err.to_string().contains("duplicate parent keys"));
    }

    #[test]
    fn csv_io_round_trip() {
        let table = raw(&["a", "b"], &[&["1", "x,y"], &["2", "\"q\""]]);
        let mut buf = Vec::new();
        table.write_to(&mut buf).unwrap();
        assert_eq!(RawTable::from_reader(buf.as_slice()).unwrap(), table);
    }
}
