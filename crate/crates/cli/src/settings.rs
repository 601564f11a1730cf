//! Flat `key = value` settings shared by every subcommand.
//!
//! Keys come from the serialized library configs plus a few CLI-only keys.
//! Layering: defaults, then the config file, then command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{parser::ValueSource, Arg, ArgAction, ArgMatches};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use spermtrack::config::CalibrationConfig;
use spermtrack::ingest::BlobDetectorParams;
use spermtrack::sot::CorrelationFilterParams;
use spermtrack::synth::{PerturbSpec, RandomScenario};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    Text,
    Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Calibration,
    Detector,
    Tracker,
    Synth,
    Other,
}

#[derive(Debug, Clone)]
pub struct Key {
    pub name: String,
    pub kind: Kind,
    pub group: Group,
    pub default: Option<String>,
    pub help: &'static str,
}

impl Key {
    pub fn flag(&self) -> String {
        self.name.replace('_', "-")
    }
}

/// Synth keys whose names differ from the scenario field they set.
const SYNTH_RENAMES: [(&str, &str); 1] = [("num_frames", "frames")];
/// Scenario fields served by keys shared with other subcommands.
const SHARED_FRAME_KEYS: [&str; 2] = ["width", "height"];

fn from_struct<T: Serialize>(value: &T, group: Group, keys: &mut Vec<Key>) {
    let Value::Object(map) = serde_json::to_value(value).expect("config structs serialize") else {
        unreachable!("config structs serialize to objects");
    };
    for (name, v) in map {
        let kind = match &v {
            Value::Number(n) if n.is_u64() => Kind::Int,
            Value::Number(_) => Kind::Float,
            Value::String(_) => Kind::Text,
            // Lists (dropout windows) are only reachable through scenario files.
            _ => continue,
        };
        let default = match v {
            Value::String(s) => s,
            other => other.to_string(),
        };
        keys.push(Key {
            name: name.clone(),
            kind,
            group,
            default: Some(default),
            help: "",
        });
    }
}

fn extra(name: &str, kind: Kind, default: Option<&str>, help: &'static str) -> Key {
    Key {
        name: name.into(),
        kind,
        group: Group::Other,
        default: default.map(str::to_string),
        help,
    }
}

/// Every key accepted in a config file.
pub fn registry() -> Vec<Key> {
    let mut keys = Vec::new();
    from_struct(&CalibrationConfig::default(), Group::Calibration, &mut keys);
    from_struct(&BlobDetectorParams::default(), Group::Detector, &mut keys);
    from_struct(&CorrelationFilterParams::default(), Group::Tracker, &mut keys);

    let mut synth = Vec::new();
    from_struct(&RandomScenario::default(), Group::Synth, &mut synth);
    from_struct(&PerturbSpec::default(), Group::Synth, &mut synth);
    for mut k in synth {
        if SHARED_FRAME_KEYS.contains(&k.name.as_str()) || keys.iter().any(|e| e.name == k.name) {
            continue;
        }
        if let Some((new, _)) = SYNTH_RENAMES.iter().find(|(_, old)| *old == k.name) {
            k.name = new.to_string();
        }
        keys.push(k);
    }

    keys.extend([
        extra("width", Kind::Int, Some("768"), "frame width in px when no frames are given"),
        extra("height", Kind::Int, Some("576"), "frame height in px when no frames are given"),
        extra("tracker", Kind::Text, Some("correlation"), "single-object tracker: correlation or hold"),
        extra("min_score", Kind::Float, Some("0.5"), "drop detections scoring below this before tracking"),
        extra("stack_channels", Kind::Int, Some("1"), "odd number of consecutive frames fed to the detector"),
        extra("center", Kind::Int, None, "export only the stack centered on this frame"),
        extra("ap_mode", Kind::Text, Some("standard"), "average precision variant: standard or literal_product"),
        extra("frames", Kind::Path, None, "directory of frame_<index>.png|pgm images"),
        extra("detections", Kind::Path, None, "detections CSV"),
        extra("tracks", Kind::Path, None, "tracks CSV"),
        extra("gt", Kind::Path, None, "ground-truth CSV"),
        extra("out", Kind::Path, None, "output file or directory"),
        extra("decisions", Kind::Path, None, "write the join decision log (JSON) here"),
        extra("summary", Kind::Path, None, "write the motility summary (JSON) here"),
        extra("scenario", Kind::Path, None, "scenario JSON to render instead of a random one"),
    ]);
    keys
}

#[derive(Debug, Clone)]
enum Origin {
    Default,
    File { path: PathBuf, line: usize },
    Flag(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => f.write_str("default"),
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Flag(flag) => write!(f, "--{flag}"),
        }
    }
}

/// Resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    keys: Vec<Key>,
    values: BTreeMap<String, (Vec<String>, Origin)>,
}

/// Parses a flat config file: `key = value` per line, `#` comments.
/// Dashes in keys are accepted in place of underscores.
pub fn parse_config(text: &str, path: &Path, keys: &[Key]) -> Result<Vec<(String, String, usize)>, CliError> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(CliError::Usage(format!(
                "{}:{line}: expected `key = value`",
                path.display()
            )));
        };
        let key = k.trim().replace('-', "_");
        if !keys.iter().any(|d| d.name == key) {
            return Err(CliError::Usage(format!("{}:{line}: unknown key '{}'", path.display(), k.trim())));
        }
        if out.iter().any(|(seen, _, _)| *seen == key) {
            return Err(CliError::Usage(format!("{}:{line}: duplicate key '{key}'", path.display())));
        }
        out.push((key, v.trim().to_string(), line));
    }
    Ok(out)
}

/// Flags for the given keys, plus the options every subcommand takes.
pub fn flags(keys: &[Key], exposed: &[&str], multi: &[&str]) -> Vec<Arg> {
    let mut args = vec![
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("flat `key = value` config file; flags override it"),
        Arg::new("json")
            .long("json")
            .action(ArgAction::SetTrue)
            .help("print a JSON report on stdout"),
    ];
    for key in keys.iter().filter(|k| exposed.contains(&k.name.as_str())) {
        let value_name = match key.kind {
            Kind::Float => "NUM",
            Kind::Int => "INT",
            Kind::Text => "NAME",
            Kind::Path => "PATH",
        };
        let mut help = key.help.to_string();
        if let Some(d) = &key.default {
            help = if help.is_empty() { format!("[default: {d}]") } else { format!("{help} [default: {d}]") };
        }
        let mut arg = Arg::new(key.name.clone()).long(key.flag()).value_name(value_name).help(help);
        if multi.contains(&key.name.as_str()) {
            arg = arg.action(ArgAction::Append).num_args(1..);
        }
        args.push(arg);
    }
    args
}

/// Names of all keys in `groups`, for building flag lists.
pub fn group_keys(keys: &[Key], groups: &[Group]) -> Vec<String> {
    keys.iter().filter(|k| groups.contains(&k.group)).map(|k| k.name.clone()).collect()
}

impl Settings {
    pub fn resolve(keys: Vec<Key>, matches: &ArgMatches) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for k in &keys {
            if let Some(d) = &k.default {
                values.insert(k.name.clone(), (vec![d.clone()], Origin::Default));
            }
        }
        if let Some(path) = matches.get_one::<String>("config") {
            let path = PathBuf::from(path);
            let text = std::fs::read_to_string(&path).map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    CliError::Usage(format!("{}: not found", path.display()))
                } else {
                    CliError::Usage(format!("{}: {e}", path.display()))
                }
            })?;
            for (key, value, line) in parse_config(&text, &path, &keys)? {
                values.insert(key, (vec![value], Origin::File { path: path.clone(), line }));
            }
        }
        for k in &keys {
            let id = k.name.as_str();
            if matches.try_get_raw(id).ok().flatten().is_none() {
                continue;
            }
            if matches.value_source(id) == Some(ValueSource::CommandLine) {
                let vals: Vec<String> = matches.get_many::<String>(id).into_iter().flatten().cloned().collect();
                values.insert(k.name.clone(), (vals, Origin::Flag(k.flag())));
            }
        }
        let settings = Settings { keys, values };
        settings.check_types()?;
        Ok(settings)
    }

    fn check_types(&self) -> Result<(), CliError> {
        for k in &self.keys {
            if let Some((vals, origin)) = self.values.get(&k.name) {
                for v in vals {
                    typed(k.kind, v).map_err(|m| CliError::Usage(format!("{origin}: {}: {m}", k.name)))?;
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).and_then(|(v, _)| v.first()).map(String::as_str)
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        self.get(name).map(PathBuf::from)
    }

    pub fn paths(&self, name: &str) -> Vec<PathBuf> {
        self.values.get(name).map(|(v, _)| v.iter().map(PathBuf::from).collect()).unwrap_or_default()
    }

    pub fn require(&self, name: &str) -> Result<PathBuf, CliError> {
        self.path(name)
            .ok_or_else(|| CliError::Usage(format!("missing required option --{}", name.replace('_', "-"))))
    }

    pub fn float(&self, name: &str) -> f64 {
        self.get(name).and_then(|v| v.parse().ok()).expect("checked at resolve time")
    }

    pub fn int(&self, name: &str) -> Option<usize> {
        self.get(name).map(|v| v.parse().expect("checked at resolve time"))
    }

    /// Builds a library config from the keys of `group`, renaming keys back
    /// to field names where needed.
    pub fn build<T: DeserializeOwned>(&self, group: Group) -> Result<T, CliError> {
        let mut map = Map::new();
        for k in self.keys.iter().filter(|k| k.group == group || (group == Group::Synth && SHARED_FRAME_KEYS.contains(&k.name.as_str()))) {
            let Some(v) = self.get(&k.name) else { continue };
            let field = SYNTH_RENAMES
                .iter()
                .find(|(new, _)| group == Group::Synth && *new == k.name)
                .map_or(k.name.as_str(), |(_, old)| old);
            map.insert(field.to_string(), typed(k.kind, v).expect("checked at resolve time"));
        }
        serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Usage(format!("invalid settings: {e}")))
    }
}

fn typed(kind: Kind, v: &str) -> Result<Value, String> {
    match kind {
        Kind::Float => v
            .parse::<f64>()
            .ok()
            .and_then(serde_json::Number::from_f64)
            .map(Value::Number)
            .ok_or_else(|| format!("expected a number, got '{v}'")),
        Kind::Int => v
            .parse::<u64>()
            .map(|n| Value::Number(n.into()))
            .map_err(|_| format!("expected a non-negative integer, got '{v}'")),
        Kind::Text | Kind::Path => Ok(Value::String(v.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_unique_names() {
        let keys = registry();
        let mut names: Vec<_> = keys.iter().map(|k| k.name.as_str()).collect();
        let n = names.len();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), n);
        for expected in ["association_radius_px", "log_sigma", "regularizer", "seed", "num_frames", "fp_rate", "out"] {
            assert!(names.contains(&expected), "{expected}");
        }
        assert!(!names.contains(&"dropout_windows"));
    }

    #[test]
    fn config_file_rules() {
        let keys = registry();
        let p = Path::new("c.txt");
        let ok = parse_config("# comment\nfps = 25\n\nassociation-radius-px=12 # inline\n", p, &keys).unwrap();
        assert_eq!(ok[0], ("fps".into(), "25".into(), 2));
        assert_eq!(ok[1].0, "association_radius_px");
        let e = parse_config("fps = 25\nbogus = 1\n", p, &keys).unwrap_err();
        assert_eq!(e.to_string(), "c.txt:2: unknown key 'bogus'");
        assert!(parse_config("fps 25\n", p, &keys).is_err());
        assert!(parse_config("fps = 1\nfps = 2\n", p, &keys).is_err());
    }

    #[test]
    fn values_are_typed() {
        assert_eq!(typed(Kind::Int, "7").unwrap(), Value::from(7u64));
        assert!(typed(Kind::Int, "-1").is_err());
        assert!(typed(Kind::Float, "nan").is_err());
        assert_eq!(typed(Kind::Float, "1e-3").unwrap(), Value::from(1e-3));
    }
}
