use proptest::prelude::*;
use quinelab::minisql::{
    exec_batch, exec_dynamic, parse_batch, ColumnDef, ColumnType, Database, ExecContext, Expr, Limits, RuntimeError,
    SqlError, SqlValue, Statement,
};

const CATALOG_QUERY: &str = "DECLARE c CURSOR FOR select a.name,b.name from sysobjects a, syscolumns b \
    where a.id=b.id and a.xtype='u' and (b.xtype = 99 or b.xtype = 35)";

fn run(db: &mut Database, sql: &str) -> Result<quinelab::minisql::BatchResult, quinelab::minisql::BatchError> {
    exec_batch(db, sql.as_bytes(), &mut ExecContext::default())
}

fn single(db: &mut Database, sql: &str) -> SqlValue {
    let r = run(db, sql).unwrap();
    r.result_sets.last().unwrap().rows[0][0].clone()
}

/// Every (table, column) pair the catalog cursor yields.
fn catalog_pairs(db: &mut Database) -> Vec<(String, String)> {
    let sql = format!(
        "{CATALOG_QUERY}\nDECLARE @T varchar(255),@C varchar(255)\nOPEN c\nFETCH NEXT FROM c INTO @T,@C\n\
         WHILE(@@FETCH_STATUS=0) BEGIN select @T,@C; FETCH NEXT FROM c INTO @T,@C END\nCLOSE c\nDEALLOCATE c"
    );
    run(db, &sql)
        .unwrap()
        .result_sets
        .iter()
        .map(|rs| {
            let name = |v: &SqlValue| String::from_utf8(v.bytes().unwrap().to_vec()).unwrap();
            (name(&rs.rows[0][0]), name(&rs.rows[0][1]))
        })
        .collect()
}

#[test]
fn select_literal_on_empty_db() {
    let mut db = Database::new();
    let r = run(&mut db, "SELECT 1;").unwrap();
    assert_eq!(r.result_sets.len(), 1);
    assert_eq!(r.result_sets[0].rows, vec![vec![SqlValue::Int(1)]]);
}

#[test]
fn catalog_cursor_enumerates_text_columns() {
    let mut db = Database::new();
    db.create_table("T1", vec![ColumnDef::new("a", ColumnType::Text), ColumnDef::new("b", ColumnType::Int)]).unwrap();
    db.create_table("T2", vec![ColumnDef::new("c", ColumnType::Text)]).unwrap();
    // Hand enumeration: the only TEXT columns of user tables, in creation order.
    assert_eq!(catalog_pairs(&mut db), vec![("T1".into(), "a".into()), ("T2".into(), "c".into())]);
}

#[test]
fn catalog_accepts_legacy_text_code_and_skips_system_tables() {
    let mut db = Database::new();
    assert!(catalog_pairs(&mut db).is_empty());
    db.create_system_table("sysfiles", vec![ColumnDef::new("path", ColumnType::Text)]).unwrap();
    assert!(catalog_pairs(&mut db).is_empty());
    db.create_table("legacy", vec![ColumnDef::text_legacy("body"), ColumnDef::new("v", ColumnType::Varchar(None))])
        .unwrap();
    assert_eq!(catalog_pairs(&mut db), vec![("legacy".into(), "body".into())]);
}

#[test]
fn update_without_where_touches_every_row() {
    let mut db = Database::new();
    db.create_table("t", vec![ColumnDef::new("k", ColumnType::Int), ColumnDef::new("s", ColumnType::Text)]).unwrap();
    for k in 0..3 {
        db.insert_row("t", vec![SqlValue::Int(k), SqlValue::text("x")]).unwrap();
    }
    let r = run(&mut db, "update t set s=s+'!'").unwrap();
    assert_eq!(r.mutations, 3);
    let r = run(&mut db, "update t set s='z' where k=1").unwrap();
    assert_eq!(r.mutations, 1);
    let col: Vec<_> = db.table("t").unwrap().rows.iter().map(|r| r[1].clone()).collect();
    assert_eq!(col, vec![SqlValue::text("x!"), SqlValue::text("z"), SqlValue::text("x!")]);
}

#[test]
fn runtime_error_keeps_earlier_mutations() {
    let mut db = Database::new();
    db.create_table("t", vec![ColumnDef::new("s", ColumnType::Text)]).unwrap();
    db.insert_row("t", vec![SqlValue::text("a")]).unwrap();
    let err = run(&mut db, "update t set s='b'; SELECT @missing; update t set s='c'").unwrap_err();
    assert!(matches!(err.error, SqlError::Runtime(RuntimeError::UnknownVariable(_))));
    assert_eq!(err.partial.mutations, 1);
    assert_eq!(db.table("t").unwrap().rows[0][0], SqlValue::text("b"));
}

#[test]
fn syntax_error_has_no_effect() {
    let mut db = Database::new();
    db.create_table("t", vec![ColumnDef::new("s", ColumnType::Text)]).unwrap();
    db.insert_row("t", vec![SqlValue::text("a")]).unwrap();
    let err = run(&mut db, "update t set s='b'; SET @a = 'unterminated").unwrap_err();
    assert!(matches!(err.error, SqlError::Syntax(_)));
    assert_eq!(db.table("t").unwrap().rows[0][0], SqlValue::text("a"));
}

#[test]
fn exec_dynamic_literal() {
    let mut db = Database::new();
    let r = run(&mut db, "EXEC('SELECT 7;')").unwrap();
    assert_eq!(r.result_sets[0].rows, vec![vec![SqlValue::Int(7)]]);
    let mut ctx = ExecContext::default();
    let r = exec_dynamic(&mut db, &mut ctx, &SqlValue::text("SELECT 8")).unwrap();
    assert_eq!(r.result_sets[0].rows, vec![vec![SqlValue::Int(8)]]);
    assert_eq!(ctx.exec_depth(), 0);
}

#[test]
fn dynamic_scope_is_fresh() {
    let mut db = Database::new();
    let err = run(&mut db, "DECLARE @a int; SET @a=1; EXEC('SELECT @a')").unwrap_err();
    assert!(matches!(err.error, SqlError::Runtime(RuntimeError::UnknownVariable(_))));
    let mut ctx = ExecContext::default();
    exec_batch(&mut db, b"EXEC('DECLARE @inner int; SET @inner = 3')", &mut ctx).unwrap();
    assert!(ctx.variable("inner").is_none());
}

#[test]
fn dynamic_update_with_names_from_variables() {
    let mut db = Database::new();
    db.create_table("greet", vec![ColumnDef::new("msg", ColumnType::Text)]).unwrap();
    db.insert_row("greet", vec![SqlValue::text("hi   ")]).unwrap();
    run(
        &mut db,
        "DECLARE @T varchar(255),@C varchar(255); SET @T='greet'; SET @C='msg';
         exec('update '+@T+' set '+@C+'=rtrim(convert(varchar(255),'+@C+'))+''EGG''')",
    )
    .unwrap();
    assert_eq!(db.table("greet").unwrap().rows[0][0], SqlValue::text("hiEGG"));
}

fn nested_exec(levels: usize) -> String {
    let mut code = "SELECT 1".to_string();
    for _ in 0..levels {
        code = format!("EXEC('{}')", code.replace('\'', "''"));
    }
    code
}

#[test]
fn exec_depth_is_bounded() {
    let mut db = Database::new();
    assert!(run(&mut db, &nested_exec(8)).is_ok());
    let err = run(&mut db, &nested_exec(9)).unwrap_err();
    assert_eq!(err.error, SqlError::Runtime(RuntimeError::ExecDepth(8)));
}

#[test]
fn dynamic_syntax_error_is_a_runtime_error() {
    let mut db = Database::new();
    let err = run(&mut db, "EXEC('SELECT ''open')").unwrap_err();
    assert!(matches!(err.error, SqlError::Runtime(RuntimeError::DynamicSyntax(_))));
}

#[test]
fn budget_stops_infinite_loops() {
    let mut db = Database::new();
    let mut ctx = ExecContext::new(Limits { step_budget: 500, ..Limits::default() });
    let err = exec_batch(&mut db, b"WHILE 1=1 SELECT 1", &mut ctx).unwrap_err();
    assert_eq!(err.error, SqlError::Runtime(RuntimeError::BudgetExhausted));
    assert_eq!(ctx.step_budget(), 0);
    assert_eq!(err.partial.executed, 500);
}

#[test]
fn value_growth_is_capped() {
    let mut db = Database::new();
    let err = run(&mut db, "DECLARE @a varchar(MAX); SET @a='x'; WHILE 1=1 SET @a=@a+@a").unwrap_err();
    assert!(matches!(err.error, SqlError::Runtime(RuntimeError::ValueTooLarge(_))));
}

#[test]
fn cursor_misuse_is_reported() {
    let mut db = Database::new();
    for sql in [
        "FETCH NEXT FROM nope INTO @a",
        "DECLARE c CURSOR FOR SELECT 1; DECLARE @a int; FETCH NEXT FROM c INTO @a",
        "DECLARE c CURSOR FOR SELECT 1; OPEN c; OPEN c",
        "DECLARE c CURSOR FOR SELECT 1; CLOSE c",
    ] {
        let err = run(&mut db, sql).unwrap_err();
        assert!(matches!(err.error, SqlError::Runtime(RuntimeError::Cursor(_))), "{sql}: {err:?}");
    }
}

#[test]
fn typed_variables_truncate() {
    let mut db = Database::new();
    let v = single(&mut db, "DECLARE @t varchar(3); SET @t='abcdef'; SELECT @t");
    assert_eq!(v, SqlValue::text("abc"));
    let v = single(&mut db, "DECLARE @x varbinary(MAX); SET @x=cast('AB' as varbinary(MAX)); SELECT @x");
    assert_eq!(v, SqlValue::Binary(b"AB".to_vec()));
}

#[test]
fn hex_builtin_and_reassembly_idiom() {
    let mut db = Database::new();
    let v = single(&mut db, "SELECT lab_hex(1, cast('AB' as varbinary(MAX)))");
    assert_eq!(v, SqlValue::text("0x4142"));
    let v = single(
        &mut db,
        "DECLARE @S VARCHAR(MAX); SET @S=CAST(0x4142 AS VARCHAR(MAX)); SELECT @S+CAST(0x AS VARCHAR(MAX))",
    );
    assert_eq!(v, SqlValue::text("AB"));
}

#[test]
fn mixed_type_concat_is_an_error() {
    let mut db = Database::new();
    let err = run(&mut db, "SELECT 'a' + 1").unwrap_err();
    assert!(matches!(err.error, SqlError::Runtime(RuntimeError::TypeMismatch(_))));
    assert_eq!(single(&mut db, "SELECT NULL + 'a'"), SqlValue::Null);
}

#[test]
fn string_compare_is_case_sensitive_but_identifiers_are_not() {
    let mut db = Database::new();
    db.create_table("T", vec![ColumnDef::new("s", ColumnType::Text)]).unwrap();
    db.insert_row("t", vec![SqlValue::text("Abc")]).unwrap();
    assert_eq!(run(&mut db, "select S from t where s='abc'").unwrap().result_sets[0].rows.len(), 0);
    assert_eq!(run(&mut db, "SELECT s FROM T WHERE S='Abc'").unwrap().result_sets[0].rows.len(), 1);
}

/// Four hex fragments of `t` at fixed 1000-byte offsets, as reassembly SQL.
fn reassembly_of(t: &[u8]) -> String {
    let frag = |k: usize| {
        let lo = (k * 1000).min(t.len());
        let hi = ((k + 1) * 1000).min(t.len());
        format!("0x{}", String::from_utf8(quinelab::minisql::to_hex(&t[lo..hi])).unwrap())
    };
    format!(
        ";DECLARE @S VARCHAR(MAX),@S2 VARCHAR(MAX),@S3 VARCHAR(MAX),@S4 VARCHAR(MAX);\
         SET @S=CAST({} AS VARCHAR(MAX));SET @S2=CAST({} AS VARCHAR(MAX));\
         SET @S3=CAST({} AS VARCHAR(MAX));SET @S4=CAST({} AS VARCHAR(MAX));exec(@S+@S2+@S3+@S4);--",
        frag(0),
        frag(1),
        frag(2),
        frag(3)
    )
}

fn fresh_db() -> Database {
    let mut db = Database::new();
    db.create_table("t", vec![ColumnDef::new("k", ColumnType::Int), ColumnDef::new("s", ColumnType::Text)]).unwrap();
    db.insert_row("t", vec![SqlValue::Int(1), SqlValue::text("one")]).unwrap();
    db.insert_row("t", vec![SqlValue::Int(2), SqlValue::text("two")]).unwrap();
    db
}

/// Small random batches: literal selects, declarations, updates.
fn batch_strategy() -> impl Strategy<Value = String> {
    let word = "[a-zA-Z' ]{0,12}";
    let stmt = prop_oneof![
        (0i64..1000).prop_map(|n| format!("SELECT {n};")),
        word.prop_map(|w| format!("SELECT '{}';", w.replace('\'', "''"))),
        word.prop_map(|w| format!("update t set s=s+'{}';", w.replace('\'', "''"))),
        (1i64..3, word).prop_map(|(k, w)| format!("update t set s='{}' where k={k};", w.replace('\'', "''"))),
        word.prop_map(|w| format!("DECLARE @vN varchar(MAX);SET @vN='{}';SELECT @vN+@vN;", w.replace('\'', "''"))),
    ];
    proptest::collection::vec(stmt, 1..40).prop_map(|v| {
        v.iter().enumerate().map(|(i, s)| s.replace("@vN", &format!("@v{i}"))).collect::<Vec<_>>().join("\r\n")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn quote_round_trip(s in proptest::collection::vec(any::<u8>(), 0..64)) {
        let mut lit = vec![b'\''];
        for &b in &s {
            if b == b'\'' { lit.push(b'\''); }
            lit.push(b);
        }
        lit.push(b'\'');
        let mut src = b"SELECT ".to_vec();
        src.extend(&lit);
        let stmts = parse_batch(&src).unwrap();
        match &stmts[0] {
            Statement::Select(sel) => prop_assert_eq!(&sel.projection[0], &Expr::StringLit(s)),
            other => prop_assert!(false, "unexpected {:?}", other),
        }
    }

    #[test]
    fn hex_round_trip(b in proptest::collection::vec(any::<u8>(), 0..200)) {
        let mut db = Database::new();
        let mut ctx = ExecContext::default();
        // hex_literal(1, b) through the engine, then parsed back as a HexLit.
        let hex_text = {
            let mut src = b"SELECT lab_hex(1, 0x".to_vec();
            src.extend(quinelab::minisql::to_hex(&b));
            src.extend(b")");
            let r = exec_batch(&mut db, &src, &mut ctx).unwrap();
            r.result_sets[0].rows[0][0].bytes().unwrap().to_vec()
        };
        let mut src = b"SELECT CAST(".to_vec();
        src.extend(&hex_text);
        src.extend(b" AS VARCHAR(MAX))");
        let r = exec_batch(&mut db, &src, &mut ctx).unwrap();
        prop_assert_eq!(&r.result_sets[0].rows[0][0], &SqlValue::Text(b));
    }

    #[test]
    fn substring_tiling(s in proptest::collection::vec(any::<u8>(), 0..=4000)) {
        let v = SqlValue::Text(s.clone());
        let mut joined = Vec::new();
        for start in [1i64, 1001, 2001, 3001] {
            let part = quinelab::minisql::builtins::substring(&v, &start.into(), &1000.into()).unwrap();
            joined.extend_from_slice(part.bytes().unwrap());
        }
        prop_assert_eq!(joined, s);
    }

    #[test]
    fn reassembly_matches_direct_execution(batch in batch_strategy()) {
        prop_assume!(batch.len() <= 4000);
        let mut direct = fresh_db();
        let mut ctx = ExecContext::default();
        let d = exec_batch(&mut direct, batch.as_bytes(), &mut ctx).unwrap();
        let mut via = fresh_db();
        let mut ctx = ExecContext::default();
        let r = exec_batch(&mut via, reassembly_of(batch.as_bytes()).as_bytes(), &mut ctx).unwrap();
        prop_assert_eq!(&direct, &via);
        prop_assert_eq!(d.result_sets, r.result_sets);
    }

    #[test]
    fn catalog_stays_consistent(ops in proptest::collection::vec((0usize..4, 1usize..4), 0..12)) {
        let mut db = Database::new();
        let mut expected = Vec::new();
        for (i, (kind, ncols)) in ops.into_iter().enumerate() {
            let name = format!("t{i}");
            let cols: Vec<_> = (0..ncols)
                .map(|c| ColumnDef::new(format!("c{c}"), if (c + kind) % 2 == 0 { ColumnType::Text } else { ColumnType::Int }))
                .collect();
            db.create_table(&name, cols.clone()).unwrap();
            for c in cols.iter().filter(|c| c.col_type == ColumnType::Text) {
                expected.push((name.clone(), c.name.clone()));
            }
            let _ = exec_batch(&mut db, b"SELECT 1; update nope set x=1", &mut ExecContext::default());
        }
        prop_assert_eq!(catalog_pairs(&mut db), expected);
        let objs = db.catalog_rows(quinelab::minisql::CatalogView::SysObjects);
        prop_assert_eq!(objs.len(), db.tables().len());
    }

    #[test]
    fn adversarial_batches_terminate(body in "[a-z@'()+; ]{0,40}") {
        let mut db = fresh_db();
        let mut ctx = ExecContext::new(Limits { step_budget: 2_000, ..Limits::default() });
        let src = format!("DECLARE @q varchar(MAX); SET @q='{}'; WHILE 1=1 BEGIN EXEC(@q) SET @q=@q+@q END", body.replace('\'', "''"));
        let _ = exec_batch(&mut db, src.as_bytes(), &mut ctx);
        prop_assert!(ctx.step_budget() <= 2_000);
    }
}
