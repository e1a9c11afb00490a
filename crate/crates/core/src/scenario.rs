//! Declarative scenarios: a TOML document describing sites, clients, the
//! seed injection and run limits. See `docs/scenario.md` for the schema.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::minisql::{ColumnDef, ColumnType, Database, SqlValue};
use crate::pagescript::{match_all, LINK_PATTERN};
use crate::quineforge::{forge_egg, Egg, ForgeError, Payloads, QuineTemplates};
use crate::sentinel::{Rule, ValidationPolicy};
use crate::websim::{resolve_url, Client, Route, Site, WorldError, WorldState, DEFAULT_READ_LIMIT, PARAM_SLOT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub sites: Vec<SiteConfig>,
    pub clients: Vec<ClientConfig>,
    pub seed: SeedConfig,
    pub limits: LimitsConfig,
}

fn yes() -> bool {
    true
}

fn default_read_limit() -> usize {
    DEFAULT_READ_LIMIT
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    pub domain: String,
    #[serde(default = "yes")]
    pub sqli_vulnerable: bool,
    #[serde(default = "yes")]
    pub xss_vulnerable: bool,
    #[serde(default = "default_read_limit")]
    pub read_truncation_limit: usize,
    /// Parameter name to rule strings (`integer_only`, `max_length:N`,
    /// `charset:BYTES`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub defense: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub tables: Vec<TableConfig>,
    pub routes: Vec<RouteConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub name: String,
    pub columns: Vec<ColumnConfig>,
    #[serde(default)]
    pub rows: Vec<Vec<CellValue>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnConfig {
    pub name: String,
    /// `INT`, `TEXT`, `NTEXT`, `VARCHAR(n)` or `VARCHAR(MAX)`.
    #[serde(rename = "type")]
    pub col_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellValue {
    Int(i64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteConfig {
    pub path: String,
    pub param: String,
    pub query_template: String,
    pub page_template: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientConfig {
    pub id: String,
    pub visits: Vec<String>,
    /// The visit list is repeated this many times.
    #[serde(default = "one")]
    pub rounds: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub site: String,
    pub route: String,
    #[serde(default)]
    pub sql_payload: String,
    #[serde(default)]
    pub js_payload: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsConfig {
    pub max_steps: u64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Ordinary requests issued at step 0, before the seed.
    #[serde(default)]
    pub background_requests: usize,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario is not valid UTF-8")]
    Encoding,
    #[error("{0}")]
    Syntax(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { path: path.into(), message: message.into() }
}

pub fn parse_column_type(s: &str) -> Option<ColumnDef> {
    let up = s.trim().to_ascii_uppercase();
    Some(match up.as_str() {
        "INT" => ColumnDef::new("", ColumnType::Int),
        "TEXT" => ColumnDef::text_legacy(""),
        "NTEXT" => ColumnDef::new("", ColumnType::Text),
        "VARCHAR(MAX)" => ColumnDef::new("", ColumnType::Varchar(None)),
        _ => {
            let n = up.strip_prefix("VARCHAR(")?.strip_suffix(')')?.parse().ok().filter(|&n| n > 0)?;
            ColumnDef::new("", ColumnType::Varchar(Some(n)))
        }
    })
}

pub fn parse_scenario(bytes: &[u8]) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ScenarioError::Encoding)?;
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn serialize_scenario(config: &ScenarioConfig) -> String {
    toml::to_string(config).expect("scenario serializes")
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.sites.is_empty() {
            return Err(invalid("sites", "at least one site is required"));
        }
        for (i, s) in self.sites.iter().enumerate() {
            let at = format!("sites[{i}]");
            let d = &s.domain;
            if d.is_empty() || !d.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'.' || b == b'-') {
                return Err(invalid(format!("{at}.domain"), format!("bad domain {d:?}")));
            }
            if self.sites[..i].iter().any(|o| o.domain.eq_ignore_ascii_case(d)) {
                return Err(invalid(format!("{at}.domain"), format!("duplicate domain {d}")));
            }
            if s.read_truncation_limit == 0 {
                return Err(invalid(format!("{at}.read_truncation_limit"), "must be at least 1"));
            }
            for (param, rules) in &s.defense {
                for (k, r) in rules.iter().enumerate() {
                    Rule::parse(r).map_err(|e| invalid(format!("{at}.defense.{param}[{k}]"), e.to_string()))?;
                }
            }
            build_db(s, &at)?;
            if s.routes.is_empty() {
                return Err(invalid(format!("{at}.routes"), "at least one route is required"));
            }
            for (k, r) in s.routes.iter().enumerate() {
                let rat = format!("{at}.routes[{k}]");
                if !r.path.starts_with('/') || r.path.contains('?') {
                    return Err(invalid(format!("{rat}.path"), "must start with '/' and hold no query"));
                }
                if s.routes[..k].iter().any(|o| o.path == r.path) {
                    return Err(invalid(format!("{rat}.path"), format!("duplicate route {}", r.path)));
                }
                if r.param.is_empty() || r.param.contains(['=', '&']) {
                    return Err(invalid(format!("{rat}.param"), "bad parameter name"));
                }
                if r.query_template.matches(PARAM_SLOT).count() != 1 {
                    return Err(invalid(format!("{rat}.query_template"), format!("needs exactly one {PARAM_SLOT}")));
                }
                let links = match_all(LINK_PATTERN, r.page_template.as_bytes()).expect("link pattern compiles");
                for l in links {
                    let l = String::from_utf8_lossy(&l);
                    self.check_url(&l, &format!("{rat}.page_template"))?;
                }
            }
        }
        for (i, c) in self.clients.iter().enumerate() {
            if c.id.is_empty() {
                return Err(invalid(format!("clients[{i}].id"), "must not be empty"));
            }
            for (k, v) in c.visits.iter().enumerate() {
                self.check_url(v, &format!("clients[{i}].visits[{k}]"))?;
            }
        }
        let site = self
            .sites
            .iter()
            .find(|s| s.domain.eq_ignore_ascii_case(&self.seed.site))
            .ok_or_else(|| invalid("seed.site", format!("unknown site {}", self.seed.site)))?;
        if !site.routes.iter().any(|r| r.path == self.seed.route) {
            return Err(invalid("seed.route", format!("{} has no route {}", site.domain, self.seed.route)));
        }
        self.payloads().validate().map_err(|e| invalid("seed", e.to_string()))?;
        if self.limits.max_steps == 0 {
            return Err(invalid("limits.max_steps", "must be at least 1"));
        }
        Ok(())
    }

    /// A URL must name a declared site and one of its routes.
    fn check_url(&self, url: &str, at: &str) -> Result<(), ScenarioError> {
        let (i, path, _) = resolve_url(self.sites.iter().map(|s| s.domain.as_str()), url)
            .ok_or_else(|| invalid(at, format!("{url} names no declared site")))?;
        if !self.sites[i].routes.iter().any(|r| r.path == path) {
            return Err(invalid(at, format!("{} has no route {path}", self.sites[i].domain)));
        }
        Ok(())
    }

    pub fn payloads(&self) -> Payloads {
        Payloads { sql: self.seed.sql_payload.as_bytes().to_vec(), js: self.seed.js_payload.as_bytes().to_vec() }
    }

    /// Assemble the world described by the scenario. `rng_seed` overrides
    /// the configured one.
    pub fn build_world(&self, rng_seed: Option<u64>) -> Result<WorldState, ScenarioError> {
        self.validate()?;
        let mut sites = Vec::new();
        for (i, s) in self.sites.iter().enumerate() {
            let mut site = Site::new(s.domain.clone(), build_db(s, &format!("sites[{i}]"))?);
            site.sqli_vulnerable = s.sqli_vulnerable;
            site.xss_vulnerable = s.xss_vulnerable;
            site.read_truncation_limit = s.read_truncation_limit;
            if !s.defense.is_empty() {
                let rules = s
                    .defense
                    .iter()
                    .map(|(p, rs)| (p.clone(), rs.iter().map(|r| Rule::parse(r).expect("validated")).collect()))
                    .collect();
                site.defense = Some(ValidationPolicy { rules });
            }
            site.routes = s
                .routes
                .iter()
                .map(|r| Route {
                    path: r.path.clone(),
                    param: r.param.clone(),
                    query_template: r.query_template.clone(),
                    page_template: r.page_template.clone(),
                })
                .collect();
            sites.push(site);
        }
        let clients = self
            .clients
            .iter()
            .map(|c| Client {
                id: c.id.clone(),
                schedule: (0..c.rounds).flat_map(|_| c.visits.iter().cloned()).collect(),
            })
            .collect();
        let mut world =
            WorldState::new(sites, clients, rng_seed.unwrap_or(self.limits.rng_seed)).map_err(|e| match e {
                WorldError::DuplicateDomain(d) => invalid("sites", format!("duplicate domain {d}")),
                other => invalid("sites", other.to_string()),
            })?;
        world.max_steps = self.limits.max_steps;
        Ok(world)
    }
}

fn build_db(s: &SiteConfig, at: &str) -> Result<Database, ScenarioError> {
    let mut db = Database::new();
    for (t, table) in s.tables.iter().enumerate() {
        let tat = format!("{at}.tables[{t}]");
        let mut cols = Vec::new();
        for (c, col) in table.columns.iter().enumerate() {
            let def = parse_column_type(&col.col_type).ok_or_else(|| {
                invalid(format!("{tat}.columns[{c}].type"), format!("unknown type {:?}", col.col_type))
            })?;
            cols.push(ColumnDef { name: col.name.clone(), ..def });
        }
        let types: Vec<ColumnType> = cols.iter().map(|c| c.col_type).collect();
        db.create_table(&table.name, cols).map_err(|e| invalid(format!("{tat}.name"), e.to_string()))?;
        for (r, row) in table.rows.iter().enumerate() {
            let rat = format!("{tat}.rows[{r}]");
            if row.len() != types.len() {
                return Err(invalid(rat, format!("expected {} values, found {}", types.len(), row.len())));
            }
            let values = row
                .iter()
                .zip(&types)
                .enumerate()
                .map(|(k, (v, ty))| match (v, ty) {
                    (CellValue::Int(n), ColumnType::Int) => Ok(SqlValue::Int(*n)),
                    (CellValue::Text(s), ColumnType::Text | ColumnType::Varchar(_)) => Ok(SqlValue::text(s)),
                    _ => Err(invalid(format!("{rat}[{k}]"), "value does not fit the column type")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            db.insert_row(&table.name, values).map_err(|e| invalid(rat, e.to_string()))?;
        }
    }
    Ok(db)
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("forge: {0}")]
    Forge(#[from] ForgeError),
}

pub struct ScenarioRun {
    pub world: WorldState,
    pub egg: Egg,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub rng_seed: Option<u64>,
    pub trace: bool,
}

/// Build the world, forge the egg, issue background traffic, seed, and
/// step until the schedule or the step budget runs out.
pub fn run_scenario(config: &ScenarioConfig, opts: RunOptions) -> Result<ScenarioRun, RunError> {
    let mut world = config.build_world(opts.rng_seed)?;
    world.script_limits.trace = opts.trace;
    let egg = forge_egg(&QuineTemplates::canonical(), &config.payloads())?;
    world.background_traffic(config.limits.background_requests);
    world.inject_seed(&config.seed.site, &config.seed.route, &egg).map_err(|e| invalid("seed", e.to_string()))?;
    world.record_metrics();
    world.run();
    Ok(ScenarioRun { world, egg })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[[sites]]
domain = "a.test"
routes = [{ path = "/p", param = "n", query_template = "SELECT 1 WHERE 1={PARAM}", page_template = "<a href='http://a.test/p?n=1'>x</a>" }]

[[clients]]
id = "c"
visits = ["http://a.test/p?n=1"]
rounds = 2

[seed]
site = "a.test"
route = "/p"

[limits]
max_steps = 10
"#;

    #[test]
    fn defaults() {
        let c = parse_scenario(SMALL.as_bytes()).unwrap();
        assert!(c.sites[0].sqli_vulnerable && c.sites[0].xss_vulnerable);
        assert_eq!(c.sites[0].read_truncation_limit, 8192);
        assert_eq!(c.limits.rng_seed, 0);
        assert_eq!(c.build_world(None).unwrap().pending_visits(), 2);
    }

    #[test]
    fn strictness() {
        assert!(matches!(parse_scenario(b""), Err(ScenarioError::Syntax(_))));
        let extra = SMALL.replace("max_steps = 10", "max_steps = 10\nspeed = 3");
        assert!(matches!(parse_scenario(extra.as_bytes()), Err(ScenarioError::Syntax(_))));
        let zero = SMALL.replace("max_steps = 10", "max_steps = 0");
        assert!(
            matches!(parse_scenario(zero.as_bytes()), Err(ScenarioError::Invalid { path, .. }) if path == "limits.max_steps")
        );
    }

    #[test]
    fn references() {
        let bad_visit = SMALL.replace("visits = [\"http://a.test/p?n=1\"]", "visits = [\"http://b.test/p?n=1\"]");
        let e = parse_scenario(bad_visit.as_bytes()).unwrap_err();
        assert!(matches!(&e, ScenarioError::Invalid { path, .. } if path == "clients[0].visits[0]"), "{e}");
        let bad_link = SMALL.replace("href='http://a.test/p?n=1'", "href='http://z.test/p?n=1'");
        assert!(parse_scenario(bad_link.as_bytes()).is_err());
        let bad_seed = SMALL.replace("route = \"/p\"", "route = \"/q\"");
        assert!(parse_scenario(bad_seed.as_bytes()).is_err());
    }

    #[test]
    fn payload_schema() {
        let ok = SMALL.replace("route = \"/p\"\n", "route = \"/p\"\nsql_payload = \"SELECT 999;\"\n");
        assert!(parse_scenario(ok.as_bytes()).is_ok());
        let bad = SMALL.replace("route = \"/p\"\n", "route = \"/p\"\nsql_payload = \"DROP TABLE x;\"\n");
        assert!(parse_scenario(bad.as_bytes()).is_err());
    }

    #[test]
    fn column_types() {
        assert_eq!(parse_column_type("int").unwrap().col_type, ColumnType::Int);
        assert_eq!(parse_column_type("VARCHAR(40)").unwrap().col_type, ColumnType::Varchar(Some(40)));
        assert_eq!(parse_column_type("varchar(max)").unwrap().col_type, ColumnType::Varchar(None));
        assert!(parse_column_type("VARCHAR(0)").is_none());
        assert!(parse_column_type("BLOB").is_none());
    }
}
