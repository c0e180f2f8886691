//! Flat key=value configuration: parsing, validation with key-named
//! diagnostics, canonical emission, and the run manifest. A manifest JSON
//! is itself accepted wherever a config file is, so a recorded run can be
//! replayed from its manifest alone.

use crate::dynamics::{GameParams, IntegratorConfig};
use crate::error::{Error, Result};
use crate::experiments::{DomainShape, ScenarioConfig, SweepAxis, SweepParam, SweepSpec};
use crate::model::ChannelParams;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

const SCALAR_KEYS: &[&str] = &[
    "domain",
    "n",
    "rho",
    "seed",
    "coop_threshold",
    "replicates",
    "channel.eta",
    "channel.eps",
    "channel.r0",
    "game.m",
    "game.mu",
    "game.tau",
    "integrator.s",
    "integrator.max_steps",
    "integrator.convergence_tol",
    "integrator.record_every",
];

const SWEEP_KEYS: &[&str] = &[
    "sweep.axis1.param",
    "sweep.axis1.values",
    "sweep.axis2.param",
    "sweep.axis2.values",
];

fn is_known_key(key: &str) -> bool {
    SCALAR_KEYS.contains(&key) || SWEEP_KEYS.contains(&key)
}

/// A parsed configuration: a single scenario, or a sweep when any
/// `sweep.*` key is present.
#[derive(Clone, Debug, PartialEq)]
pub enum ParsedConfig {
    Scenario(ScenarioConfig),
    Sweep(SweepSpec),
}

impl ParsedConfig {
    pub fn seed(&self) -> u64 {
        match self {
            ParsedConfig::Scenario(c) => c.seed,
            ParsedConfig::Sweep(s) => s.base.seed,
        }
    }

    pub fn base(&self) -> &ScenarioConfig {
        match self {
            ParsedConfig::Scenario(c) => c,
            ParsedConfig::Sweep(s) => &s.base,
        }
    }

    /// The full resolved key -> value map, suitable for the manifest and
    /// for re-parsing.
    pub fn resolved_map(&self) -> BTreeMap<String, String> {
        let (cfg, sweep) = match self {
            ParsedConfig::Scenario(c) => (c, None),
            ParsedConfig::Sweep(s) => (&s.base, Some(s)),
        };
        let mut map = BTreeMap::new();
        map.insert("domain".into(), cfg.domain_shape.to_string());
        map.insert("n".into(), cfg.n.to_string());
        map.insert("rho".into(), fmt_value(cfg.rho));
        map.insert("seed".into(), cfg.seed.to_string());
        map.insert("coop_threshold".into(), fmt_value(cfg.coop_threshold));
        map.insert("replicates".into(), cfg.replicate_count.to_string());
        map.insert("channel.eta".into(), fmt_value(cfg.channel.eta()));
        map.insert("channel.eps".into(), fmt_value(cfg.channel.eps()));
        map.insert("channel.r0".into(), fmt_value(cfg.channel.r0()));
        map.insert("game.m".into(), fmt_value(cfg.game.m()));
        map.insert("game.mu".into(), fmt_value(cfg.game.mu()));
        map.insert("game.tau".into(), fmt_value(cfg.game.tau()));
        map.insert("integrator.s".into(), fmt_value(cfg.integrator.s()));
        map.insert(
            "integrator.max_steps".into(),
            cfg.integrator.max_steps().to_string(),
        );
        map.insert(
            "integrator.convergence_tol".into(),
            fmt_value(cfg.integrator.convergence_tol()),
        );
        map.insert(
            "integrator.record_every".into(),
            cfg.integrator.record_every().to_string(),
        );
        if let Some(s) = sweep {
            map.insert("sweep.axis1.param".into(), s.axis1.param.to_string());
            map.insert("sweep.axis1.values".into(), fmt_values(&s.axis1.values));
            if let Some(a2) = &s.axis2 {
                map.insert("sweep.axis2.param".into(), a2.param.to_string());
                map.insert("sweep.axis2.values".into(), fmt_values(&a2.values));
            }
        }
        map
    }

    /// Canonical flat-text rendering of the resolved config.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.resolved_map() {
            out.push_str(&k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

/// Canonical value rendering: shortest round-trip decimal, `inf` for the
/// hard-disk exponent.
fn fmt_value(x: f64) -> String {
    if x.is_infinite() {
        "inf".to_string()
    } else {
        format!("{x}")
    }
}

fn fmt_values(xs: &[f64]) -> String {
    xs.iter()
        .map(|&x| fmt_value(x))
        .collect::<Vec<_>>()
        .join(",")
}

/// Splits a `KEY=VALUE` override argument.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::invalid(format!(
            "override `{s}` is not of the form KEY=VALUE"
        ))),
    }
}

/// Parses a config file (flat key=value text, or a manifest JSON whose
/// `config` object holds the same keys), applies overrides in order, and
/// builds the validated configuration. Defaults fill every key that
/// neither the file nor an override sets.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<ParsedConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| {
            Error::config(p.display().to_string(), format!("cannot read config: {e}"))
        })?,
        None => String::new(),
    };
    parse_config_str(&text, overrides)
}

/// [`parse_config`] over in-memory text.
pub fn parse_config_str(text: &str, overrides: &[(String, String)]) -> Result<ParsedConfig> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    if text.trim_start().starts_with('{') {
        let manifest: Manifest = serde_json::from_str(text)
            .map_err(|e| Error::config("<manifest>", format!("invalid manifest JSON: {e}")))?;
        for (k, v) in manifest.config {
            insert_known(&mut map, &k, v)?;
        }
    } else {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("line {}", lineno + 1),
                    format!("expected KEY=VALUE, got `{line}`"),
                )
            })?;
            insert_known(&mut map, k.trim(), v.trim().to_string())?;
        }
    }
    for (k, v) in overrides {
        insert_known(&mut map, k, v.clone())?;
    }
    build(&map)
}

fn insert_known(map: &mut BTreeMap<String, String>, key: &str, value: String) -> Result<()> {
    if !is_known_key(key) {
        return Err(Error::config(key, "unknown key"));
    }
    map.insert(key.to_string(), value);
    Ok(())
}

fn build(map: &BTreeMap<String, String>) -> Result<ParsedConfig> {
    let defaults = ScenarioConfig::default();
    let domain_shape = match map.get("domain") {
        Some(v) => DomainShape::from_str(v).map_err(|e| Error::config("domain", e.to_string()))?,
        None => defaults.domain_shape,
    };
    let n = get_parse::<usize>(map, "n", defaults.n)?;
    let rho = get_f64(map, "rho", defaults.rho)?;
    let seed = get_parse::<u64>(map, "seed", defaults.seed)?;
    let coop_threshold = get_f64(map, "coop_threshold", defaults.coop_threshold)?;
    let replicates = get_parse::<u32>(map, "replicates", defaults.replicate_count)?;

    let eta = get_f64(map, "channel.eta", defaults.channel.eta())?;
    let eps = get_f64(map, "channel.eps", defaults.channel.eps())?;
    let r0 = get_f64(map, "channel.r0", defaults.channel.r0())?;
    let channel =
        ChannelParams::new(eta, eps, r0).map_err(|e| Error::config("channel", e.to_string()))?;

    let m = get_f64(map, "game.m", defaults.game.m())?;
    let mu = get_f64(map, "game.mu", defaults.game.mu())?;
    let tau = get_f64(map, "game.tau", defaults.game.tau())?;
    let game = GameParams::new(m, mu, tau).map_err(|e| Error::config("game", e.to_string()))?;

    let s = get_f64(map, "integrator.s", defaults.integrator.s())?;
    let max_steps = get_parse::<u64>(map, "integrator.max_steps", defaults.integrator.max_steps())?;
    let tol = match map.get("integrator.convergence_tol") {
        Some(v) => Some(parse_f64("integrator.convergence_tol", v)?),
        None => None,
    };
    let record_every = get_parse::<u64>(
        map,
        "integrator.record_every",
        defaults.integrator.record_every(),
    )?;
    let integrator = IntegratorConfig::new(s, max_steps, tol, record_every)
        .map_err(|e| Error::config("integrator", e.to_string()))?;

    let cfg = ScenarioConfig {
        n,
        rho,
        domain_shape,
        channel,
        game,
        integrator,
        coop_threshold,
        seed,
        replicate_count: replicates,
    };
    cfg.validate()
        .map_err(|e| Error::config("<scenario>", e.to_string()))?;

    let has_sweep = map.keys().any(|k| k.starts_with("sweep."));
    if !has_sweep {
        return Ok(ParsedConfig::Scenario(cfg));
    }

    let axis1 = parse_axis(map, "sweep.axis1")?
        .ok_or_else(|| Error::config("sweep.axis1.param", "sweep requires axis1"))?;
    let axis2 = parse_axis(map, "sweep.axis2")?;
    let spec = SweepSpec {
        base: cfg,
        axis1,
        axis2,
    };
    spec.validate()
        .map_err(|e| Error::config("<sweep>", e.to_string()))?;
    Ok(ParsedConfig::Sweep(spec))
}

fn parse_axis(map: &BTreeMap<String, String>, prefix: &str) -> Result<Option<SweepAxis>> {
    let param_key = format!("{prefix}.param");
    let values_key = format!("{prefix}.values");
    match (map.get(&param_key), map.get(&values_key)) {
        (None, None) => Ok(None),
        (Some(p), Some(v)) => {
            let param =
                SweepParam::from_str(p).map_err(|e| Error::config(&param_key, e.to_string()))?;
            let values = v
                .split(',')
                .map(|tok| parse_f64(&values_key, tok.trim()))
                .collect::<Result<Vec<f64>>>()?;
            let axis =
                SweepAxis::new(param, values).map_err(|e| Error::config(&values_key, e.to_string()))?;
            Ok(Some(axis))
        }
        (Some(_), None) => Err(Error::config(values_key, "missing values for sweep axis")),
        (None, Some(_)) => Err(Error::config(param_key, "missing param for sweep axis")),
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::config(key, format!("`{value}` is not a number")))
}

fn get_f64(map: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64> {
    match map.get(key) {
        Some(v) => parse_f64(key, v),
        None => Ok(default),
    }
}

fn get_parse<T: FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match map.get(key) {
        Some(v) => v
            .parse::<T>()
            .map_err(|_| Error::config(key, format!("`{v}` is not a valid value"))),
        None => Ok(default),
    }
}

/// Run manifest: everything needed to reproduce an invocation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub tool: String,
    #[serde(default)]
    pub version: String,
    #[serde(default)]
    pub command: String,
    #[serde(default)]
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    #[serde(default)]
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, parsed: &ParsedConfig, outputs: &[&str]) -> Self {
        Manifest {
            tool: "coopnet".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: parsed.seed(),
            config: parsed.resolved_map(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default_scenario() {
        let parsed = parse_config_str("", &[]).unwrap();
        match parsed {
            ParsedConfig::Scenario(cfg) => assert_eq!(cfg, ScenarioConfig::default()),
            _ => panic!("expected scenario"),
        }
    }

    #[test]
    fn default_scenario_matches_reference_parameterization() {
        let cfg = ScenarioConfig::default();
        assert_eq!(cfg.n, 36);
        assert_eq!(cfg.rho, 4.0);
        assert_eq!(cfg.channel.eta(), 4.0);
        assert_eq!(cfg.channel.eps(), 0.1);
        assert_eq!(cfg.channel.r0(), 1.0);
        assert_eq!(cfg.game.m(), 1.0);
        assert_eq!(cfg.game.mu(), 1.0);
        assert_eq!(cfg.game.tau(), 1.0);
        assert_eq!(cfg.integrator.s(), 1e-4);
    }

    #[test]
    fn overrides_apply_after_file() {
        let text = "game.m=2\n# comment\n\nchannel.eta=6\n";
        let overrides = vec![("game.m".to_string(), "0".to_string())];
        let parsed = parse_config_str(text, &overrides).unwrap();
        let cfg = match parsed {
            ParsedConfig::Scenario(c) => c,
            _ => panic!(),
        };
        assert_eq!(cfg.game.m(), 0.0);
        assert_eq!(cfg.channel.eta(), 6.0);
    }

    #[test]
    fn unknown_key_is_rejected_with_name() {
        let err = parse_config_str("bogus.key=1\n", &[]).unwrap_err();
        assert!(err.to_string().contains("bogus.key"));
        let err = parse_config_str("", &[("nope".to_string(), "1".to_string())]).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn invalid_value_names_key() {
        let err = parse_config_str("game.tau=-1\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("game") && msg.contains("tau"), "{msg}");
    }

    #[test]
    fn convergence_tol_defaults_to_s_squared() {
        let parsed = parse_config_str("integrator.s=0.001\n", &[]).unwrap();
        let cfg = match parsed {
            ParsedConfig::Scenario(c) => c,
            _ => panic!(),
        };
        assert_eq!(cfg.integrator.convergence_tol(), 1e-6);
    }

    #[test]
    fn hard_disk_eta_roundtrips_as_inf() {
        let parsed = parse_config_str("channel.eta=inf\n", &[]).unwrap();
        assert!(parsed.base().channel.is_hard_disk());
        let emitted = parsed.emit();
        assert!(emitted.contains("channel.eta=inf\n"));
        let again = parse_config_str(&emitted, &[]).unwrap();
        assert_eq!(parsed, again);
    }

    #[test]
    fn emit_parse_roundtrip_scenario_and_sweep() {
        let text = "n=20\nrho=2.5\nseed=9\ngame.mu=0.7\nintegrator.s=0.0002\n";
        let parsed = parse_config_str(text, &[]).unwrap();
        let again = parse_config_str(&parsed.emit(), &[]).unwrap();
        assert_eq!(parsed, again);

        let sweep_text =
            "sweep.axis1.param=m\nsweep.axis1.values=0.1,1,3,6\nsweep.axis2.param=eta\nsweep.axis2.values=2,4\n";
        let parsed = parse_config_str(sweep_text, &[]).unwrap();
        assert!(matches!(parsed, ParsedConfig::Sweep(_)));
        let again = parse_config_str(&parsed.emit(), &[]).unwrap();
        assert_eq!(parsed, again);
    }

    #[test]
    fn manifest_json_is_accepted_as_config() {
        let parsed = parse_config_str("game.m=3\nseed=77\n", &[]).unwrap();
        let manifest = Manifest::new("evolve", &parsed, &["trajectory.csv"]);
        let json = serde_json::to_string_pretty(&manifest).unwrap();
        let reparsed = parse_config_str(&json, &[]).unwrap();
        assert_eq!(parsed, reparsed);
    }

    #[test]
    fn sweep_axis_requires_both_keys() {
        let err = parse_config_str("sweep.axis1.param=m\n", &[]).unwrap_err();
        assert!(err.to_string().contains("sweep.axis1.values"));
    }

    #[test]
    fn override_parsing() {
        assert_eq!(
            parse_override("a.b=c=d").unwrap(),
            ("a.b".to_string(), "c=d".to_string())
        );
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("=x").is_err());
    }
}
