//! Run configuration: `key = value` lines under `[section]` headers.
//!
//! ```text
//! [profile]
//! builtin = explicit
//! epsilon = 0.2
//!
//! [grid]
//! s_min = 3
//! s_max = 9
//! n_s = 120
//! n_t = 16
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use crate::io::Format;
use crate::CliError;

const SECTIONS: [&str; 5] = ["profile", "chart", "grid", "experiment", "output"];

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSource {
    /// The closed-form family with parameter `epsilon`.
    Explicit {
        epsilon: f64,
    },
    Circle,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    Simple,
    Flattened,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSection {
    pub kind: ChartKind,
    /// `C` in the 2-form; `None` picks the default from `sup q^2`.
    pub c: Option<f64>,
    pub bound: f64,
    pub theta_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub s_range: (f64, f64),
    pub n_s: usize,
    pub n_t: usize,
    /// Starting field as grid CSV.
    pub initial: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: ProfileSource,
    pub chart: ChartSection,
    pub grid: Option<GridSection>,
    pub experiment: String,
    /// Remaining `[experiment]` keys, read by the subcommand.
    pub params: BTreeMap<String, String>,
    pub output: OutputSection,
}

fn err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

struct Section<'a> {
    name: &'a str,
    map: BTreeMap<String, String>,
}

impl Section<'_> {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| err(format!("[{}] {key} = `{raw}` is not valid", self.name))),
        }
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T, CliError> {
        self.take(key)?
            .ok_or_else(|| err(format!("[{}] is missing `{key}`", self.name)))
    }

    fn finish(self) -> Result<(), CliError> {
        match self.map.keys().next() {
            Some(k) => Err(err(format!("[{}] has unknown key `{k}`", self.name))),
            None => Ok(()),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| err(format!("config: {e}")))?;
        let mut sections: BTreeMap<&str, BTreeMap<String, String>> = BTreeMap::new();
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if props.is_empty() {
                    continue;
                }
                return Err(err("config keys must sit under a [section] header"));
            };
            let Some(known) = SECTIONS.iter().find(|s| **s == name) else {
                return Err(err(format!("unknown section [{name}]")));
            };
            let map = sections.entry(known).or_default();
            for (k, v) in props.iter() {
                map.insert(k.to_string(), v.trim_matches('"').to_string());
            }
        }
        let mut section = |name: &'static str| Section {
            name,
            map: sections.remove(name).unwrap_or_default(),
        };
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

        let mut prof = section("profile");
        let builtin: Option<String> = prof.take("builtin")?;
        let file: Option<PathBuf> = prof.take("path")?;
        let profile = match (builtin.as_deref(), file) {
            (Some("explicit"), None) => {
                let epsilon: f64 = prof.require("epsilon")?;
                if epsilon == 0.0 || !epsilon.is_finite() {
                    return Err(err("[profile] epsilon must be finite and nonzero"));
                }
                ProfileSource::Explicit { epsilon }
            }
            (Some("circle"), None) => ProfileSource::Circle,
            (Some(other), None) => return Err(err(format!("[profile] unknown builtin `{other}`"))),
            (None, Some(p)) => {
                let p = resolve(p);
                if !p.is_file() {
                    return Err(err(format!(
                        "[profile] file {} does not exist",
                        p.display()
                    )));
                }
                ProfileSource::File(p)
            }
            (Some(_), Some(_)) => {
                return Err(err("[profile] give either `builtin` or `path`, not both"))
            }
            (None, None) => return Err(err("[profile] needs `builtin` or `path`")),
        };
        prof.finish()?;

        let mut ch = section("chart");
        let kind = match ch.take::<String>("kind")?.as_deref() {
            None | Some("simple") => ChartKind::Simple,
            Some("flattened") => ChartKind::Flattened,
            Some(other) => return Err(err(format!("[chart] unknown kind `{other}`"))),
        };
        let c: Option<f64> = ch.take("c")?;
        let bound: f64 = ch.take("bound")?.unwrap_or(1.0);
        let theta_min: Option<f64> = ch.take("theta_min")?;
        let theta_max: Option<f64> = ch.take("theta_max")?;
        ch.finish()?;
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(err("[chart] bound must be positive"));
        }
        if let Some(c) = c {
            if !(c > 0.0 && c.is_finite()) {
                return Err(err("[chart] c must be positive"));
            }
        }
        let theta_range =
            match (theta_min, theta_max) {
                (Some(a), Some(b)) if b > a => Some((a, b)),
                (None, None) => None,
                _ => return Err(err(
                    "[chart] theta_min and theta_max must come together with theta_min < theta_max",
                )),
            };
        let chart = ChartSection {
            kind,
            c,
            bound,
            theta_range,
        };

        let mut gr = section("grid");
        let grid = if gr.map.is_empty() {
            None
        } else {
            let s_range = (gr.require("s_min")?, gr.require("s_max")?);
            let n_s: usize = gr.require("n_s")?;
            let n_t: usize = gr.require("n_t")?;
            let initial = gr.take::<PathBuf>("initial")?.map(resolve);
            if !(s_range.1 > s_range.0) {
                return Err(err("[grid] needs s_min < s_max"));
            }
            if n_s < 3 || n_t < 3 {
                return Err(err("[grid] needs n_s, n_t >= 3"));
            }
            if let Some(p) = &initial {
                if !p.is_file() {
                    return Err(err(format!(
                        "[grid] initial file {} does not exist",
                        p.display()
                    )));
                }
            }
            Some(GridSection {
                s_range,
                n_s,
                n_t,
                initial,
            })
        };
        gr.finish()?;

        let mut ex = section("experiment");
        let experiment: String = ex.require("name")?;
        let params = std::mem::take(&mut ex.map);

        let mut out = section("output");
        let dir = out.take::<PathBuf>("dir")?.map(resolve);
        let formats = match out.take::<String>("formats")? {
            None => vec![Format::Json],
            Some(list) => list
                .split(',')
                .map(|f| match f.trim() {
                    "json" => Ok(Format::Json),
                    "csv" => Ok(Format::Csv),
                    other => Err(err(format!("[output] unknown format `{other}`"))),
                })
                .collect::<Result<_, _>>()?,
        };
        out.finish()?;

        Ok(RunConfig {
            profile,
            chart,
            grid,
            experiment,
            params,
            output: OutputSection { dir, formats },
        })
    }

    /// Typed `[experiment]` parameter with a default.
    pub fn param<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.params.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| err(format!("[experiment] {key} = `{raw}` is not valid"))),
        }
    }

    /// Fails on `[experiment]` keys outside `allowed`.
    pub fn check_params(&self, allowed: &[&str]) -> Result<(), CliError> {
        match self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(err(format!(
                "[experiment] has unknown key `{k}` for `{}`",
                self.experiment
            ))),
            None => Ok(()),
        }
    }
}
