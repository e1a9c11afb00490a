//! A discrete-event model of a handful of web sites: request handlers over
//! [`minisql`](crate::minisql) databases, pages rendered from templates,
//! and browser clients that run the scripts found in those pages.
//!
//! Time advances one client visit per step. Requests a script issues are
//! delivered within the same step and their responses thrown away.

mod event;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::minisql::{exec_batch, Database, ExecContext, SqlValue};
use crate::pagescript::{extract_scripts, run_source, PageDocument, ScriptLimits};
use crate::quineforge::{url_decode_param, Egg, EGG_MARKER};
use crate::sentinel::{html_escape, is_integer, validate_param, ValidationPolicy};

pub use event::{
    ascii_text, parse_event_log, write_event_log, write_metrics, Detail, Event, EventKind, LogParseError, MetricsRow,
    METRICS_HEADER,
};

pub const PARAM_SLOT: &str = "{PARAM}";
pub const FIELD_SLOT: &str = "{FIELD}";
pub const DEFAULT_READ_LIMIT: usize = 8192;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub path: String,
    pub param: String,
    /// SQL text with one `{PARAM}` slot.
    pub query_template: String,
    /// Markup with `{FIELD}` slots, filled row by row from the first
    /// result set.
    pub page_template: String,
}

#[derive(Debug, Clone)]
pub struct Site {
    pub domain: String,
    pub routes: Vec<Route>,
    pub db: Database,
    pub sqli_vulnerable: bool,
    pub xss_vulnerable: bool,
    pub read_truncation_limit: usize,
    pub defense: Option<ValidationPolicy>,
}

impl Site {
    /// A site vulnerable to both stages, with the default read limit.
    pub fn new(domain: impl Into<String>, db: Database) -> Self {
        Site {
            domain: domain.into(),
            routes: Vec::new(),
            db,
            sqli_vulnerable: true,
            xss_vulnerable: true,
            read_truncation_limit: DEFAULT_READ_LIMIT,
            defense: None,
        }
    }

    pub fn route(&self, path: &str) -> Option<&Route> {
        self.routes.iter().find(|r| r.path == path)
    }

    /// Text cells holding at least one egg marker.
    pub fn infected_fields(&self) -> usize {
        self.db.text_cells().filter(|(_, _, _, v)| v.bytes().is_some_and(|b| marker_count(b) > 0)).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Client {
    pub id: String,
    pub schedule: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub body: Vec<u8>,
    /// Sequence number of the last event of this request.
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteInfection {
    pub infected_fields: usize,
    pub infected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("duplicate site domain {0}")]
    DuplicateDomain(String),
    #[error("unknown site {0}")]
    UnknownSite(String),
    #[error("site {site} has no route {route}")]
    UnknownRoute { site: String, route: String },
    #[error("site {0} has a read truncation limit of zero")]
    ZeroReadLimit(String),
}

pub fn marker_count(cell: &[u8]) -> usize {
    cell.windows(EGG_MARKER.len()).filter(|w| *w == EGG_MARKER).count()
}

/// Who is asking. `egg` is the ground-truth label stored on request events.
#[derive(Debug, Clone, Default)]
struct Origin {
    egg: bool,
    client: Option<String>,
    cause_seq: Option<u64>,
}

pub struct WorldState {
    pub sites: Vec<Site>,
    pub clients: Vec<Client>,
    pub clock: u64,
    pub events: Vec<Event>,
    pub rng_seed: u64,
    pub max_steps: u64,
    pub metrics: Vec<MetricsRow>,
    pub script_limits: ScriptLimits,
    /// Per-statement script traces, filled when `script_limits.trace` is on.
    pub trace: Vec<String>,
    visits: Vec<(usize, String)>,
    next_visit: usize,
    seq: u64,
    requests_total: usize,
    rng: ChaCha8Rng,
}

impl WorldState {
    pub fn new(sites: Vec<Site>, clients: Vec<Client>, rng_seed: u64) -> Result<Self, WorldError> {
        for (i, s) in sites.iter().enumerate() {
            if sites[..i].iter().any(|o| o.domain.eq_ignore_ascii_case(&s.domain)) {
                return Err(WorldError::DuplicateDomain(s.domain.clone()));
            }
            if s.read_truncation_limit == 0 {
                return Err(WorldError::ZeroReadLimit(s.domain.clone()));
            }
        }
        // Round-robin: the k-th visit of every client before any (k+1)-th.
        let longest = clients.iter().map(|c| c.schedule.len()).max().unwrap_or(0);
        let mut visits = Vec::new();
        for k in 0..longest {
            for (ci, c) in clients.iter().enumerate() {
                if let Some(u) = c.schedule.get(k) {
                    visits.push((ci, u.clone()));
                }
            }
        }
        Ok(WorldState {
            sites,
            clients,
            clock: 0,
            events: Vec::new(),
            rng_seed,
            max_steps: u64::MAX,
            metrics: Vec::new(),
            script_limits: ScriptLimits::default(),
            trace: Vec::new(),
            visits,
            next_visit: 0,
            seq: 0,
            requests_total: 0,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        })
    }

    pub fn site(&self, domain: &str) -> Option<&Site> {
        self.sites.iter().find(|s| s.domain.eq_ignore_ascii_case(domain))
    }

    pub fn site_mut(&mut self, domain: &str) -> Option<&mut Site> {
        self.sites.iter_mut().find(|s| s.domain.eq_ignore_ascii_case(domain))
    }

    pub fn pending_visits(&self) -> usize {
        self.visits.len() - self.next_visit
    }

    fn emit(&mut self, kind: EventKind, site: &str, detail: Detail) -> u64 {
        let seq = self.seq;
        self.seq += 1;
        self.events.push(Event { step: self.clock, seq, kind, site: site.to_string(), detail });
        seq
    }

    pub fn resolve(&self, url: &str) -> Option<(usize, String, String)> {
        resolve_url(self.sites.iter().map(|s| s.domain.as_str()), url)
    }

    fn text_markers(&self, site: usize) -> BTreeMap<(String, String, usize), usize> {
        self.sites[site]
            .db
            .text_cells()
            .map(|(t, c, r, v)| ((t.name.clone(), c.name.clone(), r), v.bytes().map_or(0, marker_count)))
            .collect()
    }

    fn handle(&mut self, url: &str, origin: Origin) -> Option<(usize, Response)> {
        let Some((si, path, query)) = self.resolve(url) else {
            self.emit(
                EventKind::Error,
                "",
                Detail {
                    url: Some(ascii_text(url.as_bytes())),
                    cause_seq: origin.cause_seq,
                    message: Some("request to an unknown site dropped".into()),
                    ..Default::default()
                },
            );
            return None;
        };
        let domain = self.sites[si].domain.clone();
        self.requests_total += 1;
        let get = self.emit(
            EventKind::HttpGet,
            &domain,
            Detail {
                url: Some(ascii_text(url.as_bytes())),
                egg: Some(origin.egg),
                client: origin.client.clone(),
                cause_seq: origin.cause_seq,
                ..Default::default()
            },
        );
        let Some(route) = self.sites[si].route(&path).cloned() else {
            let seq = self.emit(
                EventKind::Error,
                &domain,
                Detail {
                    cause_seq: Some(get),
                    status: Some(404),
                    message: Some(format!("no route {path}")),
                    ..Default::default()
                },
            );
            return Some((si, Response { status: 404, body: Vec::new(), seq }));
        };
        let raw = query
            .split('&')
            .filter_map(|kv| kv.split_once('=').or(Some((kv, ""))))
            .find(|(k, _)| *k == route.param)
            .map(|(_, v)| url_decode_param(v.as_bytes()))
            .unwrap_or_default();
        let mut param = raw;
        if let Some(policy) = &self.sites[si].defense {
            if let Err(rej) = validate_param(policy, &route.param, &param) {
                self.emit(
                    EventKind::DefenseReject,
                    &domain,
                    Detail {
                        cause_seq: Some(get),
                        route: Some(route.path.clone()),
                        rule: Some(rej.rule.to_string()),
                        message: Some(rej.to_string()),
                        ..Default::default()
                    },
                );
                param = b"0".to_vec();
            }
        }
        let mut status = 200;
        let mut rows = Vec::new();
        if !self.sites[si].sqli_vulnerable && !is_integer(&param) {
            status = 400;
            self.emit(
                EventKind::Error,
                &domain,
                Detail {
                    cause_seq: Some(get),
                    status: Some(400),
                    message: Some("parameter is not an integer".into()),
                    ..Default::default()
                },
            );
        } else {
            rows = self.run_query(si, &route, &param, get);
        }
        let page = render_page(&self.sites[si], &route, &rows);
        let seq = self.emit(
            EventKind::PageServed,
            &domain,
            Detail {
                url: Some(ascii_text(url.as_bytes())),
                cause_seq: Some(get),
                bytes: Some(page.len()),
                scripts: Some(extract_scripts(&page).len()),
                status: Some(status),
                ..Default::default()
            },
        );
        Some((si, Response { status, body: page, seq }))
    }

    fn run_query(&mut self, si: usize, route: &Route, param: &[u8], get: u64) -> Vec<Vec<SqlValue>> {
        let domain = self.sites[si].domain.clone();
        let (pre, post) = route.query_template.split_once(PARAM_SLOT).unwrap_or((&route.query_template, ""));
        let sql = [pre.as_bytes(), param, post.as_bytes()].concat();
        let before = self.text_markers(si);
        let mut ctx = ExecContext::default();
        let (result, error) = match exec_batch(&mut self.sites[si].db, &sql, &mut ctx) {
            Ok(r) => (r, None),
            Err(e) => (e.partial, Some(e.error.to_string())),
        };
        let n_sets = result.result_sets.len();
        let exec = self.emit(
            EventKind::SqlExec,
            &domain,
            Detail {
                cause_seq: Some(get),
                route: Some(route.path.clone()),
                statements: Some(result.statements),
                executed: Some(result.executed),
                result_sets: Some(n_sets),
                discarded_result_sets: Some(n_sets.saturating_sub(1)),
                ..Default::default()
            },
        );
        if let Some(message) = error {
            self.emit(
                EventKind::Error,
                &domain,
                Detail { cause_seq: Some(exec), message: Some(message), ..Default::default() },
            );
        }
        let after = self.text_markers(si);
        for ((table, column, row), n) in after {
            if n > before.get(&(table.clone(), column.clone(), row)).copied().unwrap_or(0) {
                let bytes = self.sites[si]
                    .db
                    .table(&table)
                    .and_then(|t| Some(t.rows.get(row)?.get(t.column_index(&column)?)?.byte_len()));
                self.emit(
                    EventKind::InfectionWrite,
                    &domain,
                    Detail {
                        cause_seq: Some(exec),
                        table: Some(table),
                        column: Some(column),
                        row: Some(row),
                        bytes,
                        markers: Some(n),
                        ..Default::default()
                    },
                );
            }
        }
        result.result_sets.into_iter().next().map(|rs| rs.rows).unwrap_or_default()
    }

    /// Serve `url` as an ordinary, egg-free request.
    pub fn handle_get(&mut self, url: &str) -> Option<Response> {
        self.handle(url, Origin::default()).map(|(_, r)| r)
    }

    /// Mallory's request: the route's parameter set to `1` followed by the
    /// egg.
    pub fn inject_seed(&mut self, domain: &str, route_path: &str, egg: &Egg) -> Result<(), WorldError> {
        let site = self.site(domain).ok_or_else(|| WorldError::UnknownSite(domain.to_string()))?;
        let route = site
            .route(route_path)
            .ok_or_else(|| WorldError::UnknownRoute { site: domain.to_string(), route: route_path.to_string() })?;
        let url =
            format!("http://{}{}?{}=1{}", site.domain, route.path, route.param, ascii_text(&egg.url_param_suffix));
        let seed = self.emit(
            EventKind::SeedInjection,
            &site.domain.clone(),
            Detail {
                url: Some(url.clone()),
                egg: Some(true),
                route: Some(route_path.to_string()),
                bytes: Some(egg.url_param_suffix.len()),
                ..Default::default()
            },
        );
        self.handle(&url, Origin { egg: true, client: None, cause_seq: Some(seed) });
        Ok(())
    }

    /// Fetch a page as `client` would, run its scripts, and deliver every
    /// request they make.
    pub fn client_visit(&mut self, client: usize, url: &str) {
        let id = self.clients.get(client).map(|c| c.id.clone());
        let Some((si, resp)) = self.handle(url, Origin { egg: false, client: id, cause_seq: None }) else {
            return;
        };
        let domain = self.sites[si].domain.clone();
        let doc = PageDocument::new(domain.clone(), resp.body.clone());
        for body in extract_scripts(&resp.body) {
            let out = run_source(&body, &doc, &self.script_limits);
            if self.script_limits.trace {
                self.trace.extend(out.trace.iter().map(|t| format!("step {} {domain}: {t}", self.clock)));
                self.trace.extend(
                    out.globals.iter().map(|(k, v)| format!("step {} {domain}: var {k}={}", self.clock, ascii_text(v))),
                );
            }
            let run = self.emit(
                EventKind::ScriptRun,
                &domain,
                Detail {
                    url: Some(ascii_text(url.as_bytes())),
                    bytes: Some(body.len()),
                    requests: Some(out.effects.blind_requests.len()),
                    alerts: Some(out.effects.alerts.len()),
                    message: out.error.as_ref().map(ToString::to_string),
                    cause_seq: Some(resp.seq),
                    ..Default::default()
                },
            );
            for req in &out.effects.blind_requests {
                let target = String::from_utf8(req.clone()).ok().and_then(|u| self.resolve(&u)).map(|(i, _, _)| i);
                let req_url = ascii_text(req);
                let blind = self.emit(
                    EventKind::BlindRequest,
                    &domain,
                    Detail {
                        url: Some(req_url.clone()),
                        egg: Some(true),
                        cause_seq: Some(run),
                        target: target.map(|i| self.sites[i].domain.clone()),
                        ..Default::default()
                    },
                );
                // The response never reaches the script.
                let _ = self.handle(&req_url, Origin { egg: true, client: None, cause_seq: Some(blind) });
            }
            for a in &out.effects.alerts {
                self.emit(
                    EventKind::Alert,
                    &domain,
                    Detail { cause_seq: Some(run), message: Some(ascii_text(a)), ..Default::default() },
                );
            }
        }
    }

    /// Run the next scheduled visit. False when the schedule or the step
    /// budget is exhausted.
    pub fn step(&mut self) -> bool {
        if self.next_visit >= self.visits.len() || self.clock >= self.max_steps {
            return false;
        }
        self.clock += 1;
        let (client, url) = self.visits[self.next_visit].clone();
        self.next_visit += 1;
        self.client_visit(client, &url);
        self.record_metrics();
        true
    }

    /// Step until nothing is left to do.
    pub fn run(&mut self) {
        while self.step() {}
    }

    pub fn record_metrics(&mut self) {
        let state = self.infection_state();
        self.metrics.push(MetricsRow {
            step: self.clock,
            infected_sites: state.values().filter(|s| s.infected).count(),
            infected_fields: state.values().map(|s| s.infected_fields).sum(),
            requests_total: self.requests_total,
        });
    }

    pub fn infection_state(&self) -> BTreeMap<String, SiteInfection> {
        self.sites
            .iter()
            .map(|s| {
                let n = s.infected_fields();
                (s.domain.clone(), SiteInfection { infected_fields: n, infected: n > 0 })
            })
            .collect()
    }

    /// `n` ordinary requests with random integer parameters to random
    /// routes, drawn from the world's seeded generator.
    pub fn background_traffic(&mut self, n: usize) {
        let targets: Vec<(usize, usize)> =
            self.sites.iter().enumerate().flat_map(|(si, s)| (0..s.routes.len()).map(move |ri| (si, ri))).collect();
        if targets.is_empty() {
            return;
        }
        for _ in 0..n {
            let (si, ri) = targets[self.rng.gen_range(0..targets.len())];
            let value: u32 = self.rng.gen_range(1..=1000);
            let s = &self.sites[si];
            let r = &s.routes[ri];
            let url = format!("http://{}{}?{}={value}", s.domain, r.path, r.param);
            self.handle(&url, Origin { egg: false, client: Some("background".into()), cause_seq: None });
        }
    }
}

/// Index into `domains`, path and query of a URL. The scheme is optional;
/// the host is the longest domain the remainder starts with.
pub fn resolve_url<'a>(domains: impl IntoIterator<Item = &'a str>, url: &str) -> Option<(usize, String, String)> {
    let lower = url.to_ascii_lowercase();
    let rest_start = ["http://", "https://"].iter().find(|p| lower.starts_with(*p)).map_or(0, |p| p.len());
    let rest = &url[rest_start..];
    let (idx, dlen) = domains
        .into_iter()
        .enumerate()
        .filter(|(_, d)| {
            let n = d.len();
            rest.len() >= n
                && rest.as_bytes()[..n].eq_ignore_ascii_case(d.as_bytes())
                && matches!(rest.as_bytes().get(n), None | Some(b'/' | b'?'))
        })
        .map(|(i, d)| (i, d.len()))
        .max_by_key(|&(_, l)| l)?;
    let tail = &rest[dlen..];
    let (path, query) = tail.split_once('?').unwrap_or((tail, ""));
    let path = if path.is_empty() { "/" } else { path };
    Some((idx, path.to_string(), query.to_string()))
}

/// Fill the route's `{FIELD}` slots from `rows`, row-major. Values are cut
/// to the site's read limit and escaped unless the site is XSS-vulnerable.
pub fn render_page(site: &Site, route: &Route, rows: &[Vec<SqlValue>]) -> Vec<u8> {
    let mut values = rows.iter().flatten().map(|v| {
        let mut b = match v {
            SqlValue::Null => Vec::new(),
            SqlValue::Text(t) => t.clone(),
            other => other.render(),
        };
        b.truncate(site.read_truncation_limit);
        if site.xss_vulnerable {
            b
        } else {
            html_escape(&b)
        }
    });
    let mut out = Vec::new();
    let mut parts = route.page_template.split(FIELD_SLOT);
    out.extend_from_slice(parts.next().unwrap_or_default().as_bytes());
    for p in parts {
        out.extend(values.next().unwrap_or_default());
        out.extend_from_slice(p.as_bytes());
    }
    out
}
