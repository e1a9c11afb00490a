#![allow(dead_code)]

use std::sync::LazyLock;

use quinelab::minisql::{ColumnDef, ColumnType, Database, SqlValue};
use quinelab::quineforge::{forge_egg, Egg, Payloads, QuineTemplates};
use quinelab::scenario::{parse_scenario, ScenarioConfig};
use quinelab::websim::{Event, EventKind, Route, Site};

pub const SHIPPED: [&str; 4] = ["fig1_two_sites", "ring5", "defended", "truncated4096"];

pub static EGG: LazyLock<Egg> =
    LazyLock::new(|| forge_egg(&QuineTemplates::canonical(), &Payloads::default()).expect("canonical egg forges"));

pub fn scenario_text(name: &str) -> Vec<u8> {
    let path = format!("{}/../../scenarios/{name}.toml", env!("CARGO_MANIFEST_DIR"));
    std::fs::read(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn scenario(name: &str) -> ScenarioConfig {
    parse_scenario(&scenario_text(name)).expect("shipped scenario parses")
}

pub fn link(domain: &str) -> String {
    format!("http://{domain}/greetUser?numid=1")
}

/// A site with one `users` table of two rows and a page linking to `links`.
pub fn site(domain: &str, links: &[&str]) -> Site {
    let mut db = Database::new();
    db.create_table("users", vec![ColumnDef::new("numid", ColumnType::Int), ColumnDef::text_legacy("greeting")])
        .unwrap();
    for (n, g) in [(1, "hello"), (2, "hi there")] {
        db.insert_row("users", vec![SqlValue::Int(n), SqlValue::text(g)]).unwrap();
    }
    let anchors: String = links.iter().map(|d| format!("<a href=\"{}\">{d}</a>\n", link(d))).collect();
    let mut s = Site::new(domain, db);
    s.routes.push(Route {
        path: "/greetUser".into(),
        param: "numid".into(),
        query_template: "SELECT greeting FROM users WHERE numid={PARAM}".into(),
        page_template: format!("<html><p>{{FIELD}}</p>\n{anchors}</html>"),
    });
    s
}

pub fn count(events: &[Event], kind: EventKind) -> usize {
    events.iter().filter(|e| e.kind == kind).count()
}

pub fn count_at(events: &[Event], kind: EventKind, site: &str) -> usize {
    events.iter().filter(|e| e.kind == kind && e.site == site).count()
}
