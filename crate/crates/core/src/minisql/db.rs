use super::error::RuntimeError;
use super::value::SqlValue;

/// Catalog type code for TEXT columns.
pub const XTYPE_TEXT: i64 = 99;
/// Legacy TEXT code, accepted on input.
pub const XTYPE_TEXT_ALIAS: i64 = 35;
pub const XTYPE_VARCHAR: i64 = 167;
pub const XTYPE_INT: i64 = 56;

const FIRST_OBJECT_ID: i64 = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Int,
    Text,
    /// `None` is the unbounded `MAX` marker.
    Varchar(Option<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnDef {
    pub name: String,
    pub col_type: ColumnType,
    pub xtype_code: i64,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, col_type: ColumnType) -> Self {
        let xtype_code = match col_type {
            ColumnType::Int => XTYPE_INT,
            ColumnType::Text => XTYPE_TEXT,
            ColumnType::Varchar(_) => XTYPE_VARCHAR,
        };
        ColumnDef { name: name.into(), col_type, xtype_code }
    }

    /// A TEXT column carrying the legacy catalog code 35.
    pub fn text_legacy(name: impl Into<String>) -> Self {
        ColumnDef { xtype_code: XTYPE_TEXT_ALIAS, ..ColumnDef::new(name, ColumnType::Text) }
    }

    pub fn is_textual(&self) -> bool {
        !matches!(self.col_type, ColumnType::Int)
    }

    /// Coerce a value for storage in this column. VARCHAR(n) truncates
    /// silently.
    pub fn coerce(&self, value: SqlValue) -> Result<SqlValue, RuntimeError> {
        match (&self.col_type, value) {
            (_, SqlValue::Null) => Ok(SqlValue::Null),
            (ColumnType::Int, SqlValue::Int(i)) => Ok(SqlValue::Int(i)),
            (ColumnType::Int, v) => {
                Err(RuntimeError::TypeMismatch(format!("cannot store {} in int column {}", v.type_name(), self.name)))
            }
            (ColumnType::Text, SqlValue::Text(b) | SqlValue::Binary(b)) => Ok(SqlValue::Text(b)),
            (ColumnType::Varchar(limit), SqlValue::Text(mut b) | SqlValue::Binary(mut b)) => {
                if let Some(n) = limit {
                    b.truncate(*n);
                }
                Ok(SqlValue::Text(b))
            }
            (_, SqlValue::Int(i)) => Ok(SqlValue::Text(i.to_string().into_bytes())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    User,
    System,
}

impl TableKind {
    pub fn xtype(self) -> &'static str {
        match self {
            TableKind::User => "u",
            TableKind::System => "S",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: String,
    pub object_id: i64,
    pub kind: TableKind,
    pub columns: Vec<ColumnDef>,
    pub rows: Vec<Vec<SqlValue>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// Read-only catalog views derived from the table set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogView {
    SysObjects,
    SysColumns,
}

impl CatalogView {
    pub fn lookup(name: &str) -> Option<Self> {
        if name.eq_ignore_ascii_case("sysobjects") {
            Some(CatalogView::SysObjects)
        } else if name.eq_ignore_ascii_case("syscolumns") {
            Some(CatalogView::SysColumns)
        } else {
            None
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        &["name", "id", "xtype"]
    }
}

/// The miniature relational store. Tables keep creation order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Database {
    tables: Vec<Table>,
    next_id: i64,
}

impl Database {
    pub fn new() -> Self {
        Database { tables: Vec::new(), next_id: FIRST_OBJECT_ID }
    }

    pub fn create_table(&mut self, name: &str, columns: Vec<ColumnDef>) -> Result<i64, RuntimeError> {
        self.add_table(name, TableKind::User, columns)
    }

    pub fn create_system_table(&mut self, name: &str, columns: Vec<ColumnDef>) -> Result<i64, RuntimeError> {
        self.add_table(name, TableKind::System, columns)
    }

    fn add_table(&mut self, name: &str, kind: TableKind, columns: Vec<ColumnDef>) -> Result<i64, RuntimeError> {
        if self.table(name).is_some() || CatalogView::lookup(name).is_some() {
            return Err(RuntimeError::Catalog(format!("table {name} already exists")));
        }
        if columns.is_empty() {
            return Err(RuntimeError::Catalog(format!("table {name} has no columns")));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|d| d.name.eq_ignore_ascii_case(&c.name)) {
                return Err(RuntimeError::Catalog(format!("duplicate column {} in {name}", c.name)));
            }
            if c.col_type == ColumnType::Varchar(Some(0)) {
                return Err(RuntimeError::Catalog(format!("varchar(0) column {}", c.name)));
            }
        }
        if self.next_id == 0 {
            self.next_id = FIRST_OBJECT_ID;
        }
        let object_id = self.next_id;
        self.next_id += 1;
        self.tables.push(Table { name: name.to_string(), object_id, kind, columns, rows: Vec::new() });
        Ok(object_id)
    }

    pub fn insert_row(&mut self, table: &str, values: Vec<SqlValue>) -> Result<(), RuntimeError> {
        let t = self.table_mut(table).ok_or_else(|| RuntimeError::UnknownTable(table.to_string()))?;
        if values.len() != t.columns.len() {
            return Err(RuntimeError::TypeMismatch(format!(
                "row has {} values, table {} has {} columns",
                values.len(),
                t.name,
                t.columns.len()
            )));
        }
        let row = t.columns.iter().zip(values).map(|(c, v)| c.coerce(v)).collect::<Result<Vec<_>, _>>()?;
        t.rows.push(row);
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn table_mut(&mut self, name: &str) -> Option<&mut Table> {
        self.tables.iter_mut().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    /// Materialize a catalog view. Row order is table creation order, then
    /// column ordinal.
    pub fn catalog_rows(&self, view: CatalogView) -> Vec<Vec<SqlValue>> {
        match view {
            CatalogView::SysObjects => self
                .tables
                .iter()
                .map(|t| vec![SqlValue::text(&t.name), SqlValue::Int(t.object_id), SqlValue::text(t.kind.xtype())])
                .collect(),
            CatalogView::SysColumns => self
                .tables
                .iter()
                .flat_map(|t| {
                    t.columns.iter().map(move |c| {
                        vec![SqlValue::text(&c.name), SqlValue::Int(t.object_id), SqlValue::Int(c.xtype_code)]
                    })
                })
                .collect(),
        }
    }

    /// Every (table, column, row) cell of textual columns in user tables.
    pub fn text_cells(&self) -> impl Iterator<Item = (&Table, &ColumnDef, usize, &SqlValue)> {
        self.tables.iter().filter(|t| t.kind == TableKind::User).flat_map(|t| {
            t.columns
                .iter()
                .enumerate()
                .filter(|(_, c)| c.is_textual())
                .flat_map(move |(ci, c)| t.rows.iter().enumerate().map(move |(ri, row)| (t, c, ri, &row[ci])))
        })
    }
}
