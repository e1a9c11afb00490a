//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{count, count_at, scenario, EGG, SHIPPED};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use quinelab::minisql::{
    builtins, exec_batch, from_hex, parse_batch, to_hex, ColumnDef, ColumnType, Database, ExecContext, Expr, SqlValue,
    Statement,
};
use quinelab::pagescript::ScriptEffects;
use quinelab::quineforge::{
    build_injection, escape_sql_string, hex_fragments, url_decode_param, url_encode_egg, verify_fixed_point,
    verify_generations, QuineTemplates, EGG_MARKER,
};
use quinelab::scenario::{run_scenario, RunOptions, ScenarioConfig};
use quinelab::sentinel::{default_signatures, scan_request_log};
use quinelab::websim::{marker_count, write_event_log, write_metrics, Event, EventKind, Route, Site, WorldState};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($why:tt)+) => {
        if !$cond {
            return Err(format!($($why)+));
        }
    };
}

/// A fresh runner per suite: a runner that has finished once runs no
/// further cases.
fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn within(limit: Duration, start: Instant) -> Check {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:?}, limit {limit:?}");
    Ok(())
}

fn run(config: &ScenarioConfig) -> Result<WorldState, String> {
    run_scenario(config, RunOptions::default()).map(|r| r.world).map_err(|e| e.to_string())
}

/// Same as a scenario run, with the egg forged once up front.
fn run_with_canonical_egg(config: &ScenarioConfig) -> Result<WorldState, String> {
    let mut w = config.build_world(None).map_err(|e| e.to_string())?;
    w.inject_seed(&config.seed.site, &config.seed.route, &EGG).map_err(|e| e.to_string())?;
    w.run();
    Ok(w)
}

fn fixed_point() -> Check {
    let start = Instant::now();
    let one = verify_fixed_point(&EGG);
    ensure!(one.ok, "fixed point: {one}");
    let three = verify_generations(&EGG, 3);
    ensure!(three.ok && three.generations_passed == 3, "three generations: {three}");
    within(Duration::from_secs(1), start)
}

fn two_site_end_to_end() -> Check {
    let start = Instant::now();
    let w = run(&scenario("fig1_two_sites"))?;
    ensure!(w.clock == 1, "expected one client visit, ran {}", w.clock);
    let state = w.infection_state();
    ensure!(state.values().all(|s| s.infected), "not all sites infected: {state:?}");

    let ev = &w.events;
    let find = |kind: EventKind, site: &str, after: u64| {
        ev.iter().find(|e| e.kind == kind && e.site == site && e.seq > after).map(|e| e.seq)
    };
    let seed = ev
        .first()
        .filter(|e| e.kind == EventKind::SeedInjection && e.site == "alice.test")
        .map(|e| e.seq)
        .ok_or("log does not open with the seed")?;
    let exec_a = find(EventKind::SqlExec, "alice.test", seed).ok_or("no SQL_EXEC on alice")?;
    let write_a = find(EventKind::InfectionWrite, "alice.test", exec_a).ok_or("no INFECTION_WRITE on alice")?;
    let served = ev
        .iter()
        .find(|e| e.kind == EventKind::PageServed && e.step == 1 && e.detail.scripts.unwrap_or(0) > 0)
        .map(|e| e.seq)
        .ok_or("no infected page served")?;
    let script = find(EventKind::ScriptRun, "alice.test", served).ok_or("no SCRIPT_RUN")?;
    let blind = find(EventKind::BlindRequest, "alice.test", script).ok_or("no BLIND_REQUEST")?;
    let write_b = find(EventKind::InfectionWrite, "bob.test", blind).ok_or("no INFECTION_WRITE on bob")?;
    ensure!(write_a > exec_a && served > write_a, "alice events out of order");

    // The same order must hold along the logged causes.
    let cause = |s: u64| ev[s as usize].detail.cause_seq;
    let get_a = cause(exec_a).ok_or("SQL_EXEC without cause")?;
    ensure!(cause(get_a) == Some(seed), "seed GET not caused by the seed");
    ensure!(cause(write_a) == Some(exec_a), "alice write not caused by its SQL_EXEC");
    ensure!(cause(script) == Some(served), "script not caused by the served page");
    ensure!(cause(blind) == Some(script), "blind request not caused by the script");
    let exec_b = cause(write_b).ok_or("bob write without cause")?;
    let get_b = cause(exec_b).ok_or("bob SQL_EXEC without cause")?;
    ensure!(cause(get_b) == Some(blind), "bob GET not caused by the blind request");
    within(Duration::from_secs(1), start)
}

fn size_regime() -> Check {
    let n = EGG.url_param_suffix.len();
    ensure!(n > 4096 && n <= 8192, "suffix length {n} outside (4096, 8192]");
    let full = run(&scenario("fig1_two_sites"))?;
    ensure!(count_at(&full.events, EventKind::InfectionWrite, "bob.test") > 0, "no propagation at 8192");
    let cut = run(&scenario("truncated4096"))?;
    ensure!(cut.site("alice.test").map(|s| s.read_truncation_limit) == Some(4096), "truncated4096 is not cut at 4096");
    let downstream = count_at(&cut.events, EventKind::InfectionWrite, "bob.test");
    ensure!(downstream == 0, "{downstream} downstream infections at 4096");
    Ok(())
}

/// Three tables with 2, 2 and 1 text columns, four rows each.
fn twenty_field_site() -> Result<Site, String> {
    let mut db = Database::new();
    let layouts: [(&str, &[&str]); 3] =
        [("users", &["name", "bio"]), ("posts", &["title", "body"]), ("tags", &["label"])];
    for (t, cols) in layouts {
        let mut defs = vec![ColumnDef::new("id", ColumnType::Int)];
        defs.extend(cols.iter().map(|c| ColumnDef::text_legacy(*c)));
        db.create_table(t, defs).map_err(|e| e.to_string())?;
        for r in 0..4 {
            let mut row = vec![SqlValue::Int(r)];
            row.extend(cols.iter().map(|c| SqlValue::text(format!("{t}.{c}.{r}"))));
            db.insert_row(t, row).map_err(|e| e.to_string())?;
        }
    }
    let mut site = Site::new("lab.test", db);
    site.routes.push(Route {
        path: "/greetUser".into(),
        param: "numid".into(),
        query_template: "SELECT name FROM users WHERE id={PARAM}".into(),
        page_template: "<p>{FIELD}</p>".into(),
    });
    Ok(site)
}

fn text_cells(w: &WorldState) -> Vec<Vec<u8>> {
    w.sites[0].db.text_cells().filter_map(|(_, _, _, v)| v.bytes().map(<[u8]>::to_vec)).collect()
}

fn all_field_infection() -> Check {
    let mut w = WorldState::new(vec![twenty_field_site()?], vec![], 0).map_err(|e| e.to_string())?;
    let before = text_cells(&w);
    ensure!(before.len() == 20, "expected 20 text fields, found {}", before.len());
    w.inject_seed("lab.test", "/greetUser", &EGG).map_err(|e| e.to_string())?;
    let once = text_cells(&w);
    let writes = count(&w.events, EventKind::InfectionWrite);
    ensure!(writes == 20, "{writes} INFECTION_WRITE events after one run");
    for (b, c) in before.iter().zip(&once) {
        ensure!(marker_count(c) == 1, "field holds {} markers after one run", marker_count(c));
        ensure!(*c == [b.as_slice(), &EGG.js_egg].concat(), "field is not original + script");
    }
    w.inject_seed("lab.test", "/greetUser", &EGG).map_err(|e| e.to_string())?;
    for (prev, c) in once.iter().zip(text_cells(&w)) {
        ensure!(marker_count(&c) == 2, "field holds {} markers after two runs", marker_count(&c));
        ensure!(c.ends_with(&EGG.js_egg), "second run did not append the script");
        let kept = &c[..c.len() - EGG.js_egg.len()];
        ensure!(kept.len() <= 255, "kept {} bytes of prior content", kept.len());
        ensure!(*kept == prev[..prev.len().min(255)], "prior content is not a 255-byte prefix");
    }
    Ok(())
}

/// Everything the visiting script could observe: its statement trace,
/// final variables, and what it asked for.
fn script_view(w: &WorldState) -> (Vec<String>, Vec<Option<String>>) {
    let urls = w
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::ScriptRun | EventKind::BlindRequest | EventKind::Alert))
        .map(|e| e.detail.url.clone().or(e.detail.message.clone()))
        .collect();
    (w.trace.clone(), urls)
}

fn same_origin_blindness() -> Check {
    // Adding a field to the effects type breaks this destructuring.
    let ScriptEffects { blind_requests, alerts, writes } = ScriptEffects::default();
    let _: [Vec<Vec<u8>>; 3] = [blind_requests, alerts, writes];

    let config = scenario("fig1_two_sites");
    let mut views = Vec::new();
    for variant in ["vulnerable", "patched", "absent"] {
        let mut w = config.build_world(None).map_err(|e| e.to_string())?;
        w.script_limits.trace = true;
        match variant {
            "patched" => w.site_mut("bob.test").ok_or("no bob")?.sqli_vulnerable = false,
            "absent" => w.sites.retain(|s| s.domain != "bob.test"),
            _ => {}
        }
        w.inject_seed(&config.seed.site, &config.seed.route, &EGG).map_err(|e| e.to_string())?;
        w.run();
        let bob = count_at(&w.events, EventKind::InfectionWrite, "bob.test");
        ensure!((bob > 0) == (variant == "vulnerable"), "{variant}: {bob} writes on bob");
        ensure!(count(&w.events, EventKind::BlindRequest) == 1, "{variant}: expected one blind request");
        ensure!(!w.trace.is_empty(), "{variant}: no script trace");
        views.push(script_view(&w));
    }
    ensure!(views[0] == views[1] && views[1] == views[2], "script-visible state depends on the target");
    Ok(())
}

fn countermeasures() -> Check {
    let schedules = prop::collection::vec((0usize..5, any::<bool>()), 0..12);
    for name in ["fig1_two_sites", "ring5"] {
        let base = scenario(name);
        runner(200)
            .run(&schedules, |visits| {
                let mut c = base.clone();
                let urls: Vec<String> = c.clients[0].visits.clone();
                c.clients[0].visits = visits.iter().map(|(i, _)| urls[i % urls.len()].clone()).collect();
                c.clients[0].rounds = 1;
                let mut validated = c.clone();
                for s in &mut validated.sites {
                    s.defense.insert("numid".into(), vec!["integer_only".into()]);
                }
                let w = run_with_canonical_egg(&validated).map_err(TestCaseError::fail)?;
                prop_assert_eq!(count(&w.events, EventKind::InfectionWrite), 0);
                let mut escaped = c;
                escaped.sites.iter_mut().for_each(|s| s.xss_vulnerable = false);
                let w = run_with_canonical_egg(&escaped).map_err(TestCaseError::fail)?;
                prop_assert_eq!(count(&w.events, EventKind::BlindRequest), 0);
                Ok(())
            })
            .map_err(|e| format!("{name}: {e}"))?;
    }

    let config = scenario("fig1_two_sites");
    let mut events: Vec<Event> = run(&config)?.events;
    let mut clean = config.build_world(Some(99)).map_err(|e| e.to_string())?;
    clean.background_traffic(100);
    ensure!(count(&clean.events, EventKind::HttpGet) == 100, "clean log is not 100 requests");
    events.extend(clean.events);
    let r = scan_request_log(&events, &default_signatures());
    ensure!(r.true_positives > 0, "no egg requests in the merged log");
    ensure!(r.recall() == 1.0, "recall {}", r.recall());
    ensure!(r.false_positives == 0, "{} false positives", r.false_positives);
    Ok(())
}

fn ring_propagation() -> Check {
    let start = Instant::now();
    let base = scenario("ring5");
    let domains: Vec<String> = base.sites.iter().map(|s| s.domain.clone()).collect();
    ensure!(domains.len() == 5 && base.clients.len() == 1, "ring5 is not 5 sites and 1 client");
    ensure!(base.clients[0].visits.len() == 5 && base.clients[0].rounds >= 5, "client does not sweep 5 rounds");

    let w = run(&base)?;
    let full = w.metrics.iter().find(|m| m.infected_sites == 5).ok_or("ring never fully infected")?;
    ensure!(full.step <= 25, "fully infected only at step {}", full.step);

    for a in 0..5 {
        for b in a + 1..5 {
            let mut c = base.clone();
            c.sites[a].sqli_vulnerable = false;
            c.sites[b].sqli_vulnerable = false;
            if c.seed.site == domains[a] || c.seed.site == domains[b] {
                let first = (0..5).find(|&i| i != a && i != b).unwrap_or(0);
                c.seed.site = domains[first].clone();
            }
            let w = run(&c)?;
            for (i, d) in domains.iter().enumerate() {
                let infected = w.infection_state()[d].infected;
                let patched = i == a || i == b;
                ensure!(infected != patched, "patched {{{a},{b}}}: {d} infected={infected}");
            }
        }
    }
    within(Duration::from_secs(2), start)
}

fn suite<T: std::fmt::Debug>(name: &str, r: Result<(), proptest::test_runner::TestError<T>>) -> Check {
    r.map_err(|e| format!("{name}: {e}"))
}

fn property_suites() -> Check {
    suite(
        "hex round trip",
        runner(1000).run(&prop::collection::vec(any::<u8>(), 0..300), |b| {
            let h = to_hex(&b);
            let oracle: String = b.iter().map(|x| format!("{x:02x}")).collect();
            prop_assert_eq!(&h, oracle.as_bytes());
            prop_assert_eq!(from_hex(&h), Some(b.clone()));
            let mut db = Database::new();
            let src = [b"SELECT CAST(0x".as_slice(), &h, b" AS VARCHAR(MAX))"].concat();
            let r = exec_batch(&mut db, &src, &mut ExecContext::default())
                .map_err(|e| TestCaseError::fail(e.error.to_string()))?;
            prop_assert_eq!(&r.result_sets[0].rows[0][0], &SqlValue::Text(b));
            Ok(())
        }),
    )?;

    let alphabet = prop::collection::vec(
        prop_oneof![8 => (0x20u8..=0x7e).prop_filter("no percent", |b| *b != b'%'), 1 => Just(b'\r'), 1 => Just(b'\n')],
        0..300,
    );
    suite(
        "URL encode/decode",
        runner(1000).run(&alphabet, |s| {
            let enc = url_encode_egg(&s).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(url_decode_param(&enc), s);
            Ok(())
        }),
    )?;

    suite(
        "quote escape",
        runner(1000).run(&prop::collection::vec(any::<u8>(), 0..100), |s| {
            let src = [b"SELECT '".as_slice(), &escape_sql_string(&s), b"'"].concat();
            let stmts = parse_batch(&src).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let Some(Statement::Select(sel)) = stmts.first() else { return Err(TestCaseError::fail("not a select")) };
            prop_assert_eq!(&sel.projection[0], &Expr::StringLit(s));
            Ok(())
        }),
    )?;

    suite(
        "substring tiling",
        runner(1000).run(&(prop::collection::vec(any::<u8>(), 0..=4000), 1i64..1200), |(s, k)| {
            let v = SqlValue::Text(s.clone());
            let mut joined = Vec::new();
            let mut start = 1;
            while start <= s.len() as i64 {
                let part = builtins::substring(&v, &start.into(), &k.into())
                    .map_err(|e| TestCaseError::fail(e.to_string()))?;
                joined.extend_from_slice(part.bytes().unwrap_or_default());
                start += k;
            }
            prop_assert_eq!(&joined, &s);
            let frags = hex_fragments(&s).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let hexed: Vec<u8> = frags.iter().flat_map(|f| from_hex(&f[2..]).unwrap_or_default()).collect();
            prop_assert_eq!(hexed, s);
            Ok(())
        }),
    )?;

    let word = "[a-zA-Z' ]{0,12}";
    let stmt = prop_oneof![
        (0i64..1000).prop_map(|n| format!("SELECT {n};")),
        word.prop_map(|w| format!("SELECT '{}';", w.replace('\'', "''"))),
        word.prop_map(|w| format!("update t set s=s+'{}';", w.replace('\'', "''"))),
        (1i64..3, word).prop_map(|(k, w)| format!("update t set s='{}' where k={k};", w.replace('\'', "''"))),
    ];
    let templates = QuineTemplates::canonical();
    suite(
        "reassembly vs direct execution",
        runner(1000).run(&prop::collection::vec(stmt, 1..30).prop_map(|v| v.join("\r\n")), |batch| {
            let fresh = || {
                let mut db = Database::new();
                db.create_table(
                    "t",
                    vec![ColumnDef::new("k", ColumnType::Int), ColumnDef::new("s", ColumnType::Text)],
                )?;
                db.insert_row("t", vec![SqlValue::Int(1), SqlValue::text("one")])?;
                db.insert_row("t", vec![SqlValue::Int(2), SqlValue::text("two")])?;
                Ok::<_, quinelab::minisql::RuntimeError>(db)
            };
            let fail = |e: String| TestCaseError::fail(e);
            let mut direct = fresh().map_err(|e| fail(e.to_string()))?;
            let d = exec_batch(&mut direct, batch.as_bytes(), &mut ExecContext::default())
                .map_err(|e| fail(e.error.to_string()))?;
            let injection = build_injection(&templates, batch.as_bytes()).map_err(|e| fail(e.to_string()))?;
            let mut via = fresh().map_err(|e| fail(e.to_string()))?;
            let r =
                exec_batch(&mut via, &injection, &mut ExecContext::default()).map_err(|e| fail(e.error.to_string()))?;
            prop_assert_eq!(&direct, &via);
            prop_assert_eq!(d.result_sets, r.result_sets);
            Ok(())
        }),
    )?;
    Ok(())
}

fn determinism() -> Check {
    for name in SHIPPED {
        let c = scenario(name);
        let (a, b) = (run(&c)?, run(&c)?);
        ensure!(write_event_log(&a.events) == write_event_log(&b.events), "{name}: event logs differ");
        ensure!(write_metrics(&a.metrics) == write_metrics(&b.metrics), "{name}: metrics differ");
    }
    Ok(())
}

fn main() {
    // Make sure the forged egg is built before any timed criterion.
    let _ = EGG.js_egg.starts_with(EGG_MARKER);
    let criteria: [Criterion; 9] = [
        ("two-stage quine fixed point", fixed_point),
        ("two-site end-to-end propagation", two_site_end_to_end),
        ("size regime and truncation", size_regime),
        ("all-field infection and reinfection", all_field_infection),
        ("same-origin blindness", same_origin_blindness),
        ("countermeasures", countermeasures),
        ("graph propagation", ring_propagation),
        ("engine property suites", property_suites),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let ms = start.elapsed().as_millis();
        match outcome {
            Ok(()) => println!("criterion {} {name}: PASS ({ms} ms)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
