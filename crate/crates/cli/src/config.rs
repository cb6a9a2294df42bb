//! Run configuration: plain `key = value` lines, `#` comments, dotted
//! prefixes for grouped settings (`ca.adherence`, `scenario.next.repeats`).
//! Paths are resolved relative to the config file's directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use lavamap::{Bandwidth, CaParams, Error, RealizationMode, Result, ScenarioConfig};

/// Vent-field stage parameters (`field.*` keys).
#[derive(Debug, Clone)]
pub struct FieldParams {
    /// Number of danger classes.
    pub classes: usize,
    /// KDE bandwidth: `auto` or a fixed value in map units.
    pub bandwidth: Bandwidth,
    /// Vent lattice spacing for the highest-danger class, map units.
    pub base_spacing: f64,
}

/// One forecast scenario (`scenario.<label>.*` keys) plus the horizon
/// length it represents, used by `fit`.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub config: ScenarioConfig,
    pub time_years: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dem: PathBuf,
    pub vents: PathBuf,
    pub event_table: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub field: FieldParams,
    pub ca: CaParams,
    /// In order of first appearance in the file; labels are unique.
    pub scenarios: Vec<ScenarioSpec>,
}

/// Per-scenario values collected during parsing, resolved in [`RunConfig::load`].
#[derive(Default)]
struct PartialScenario {
    poisson_mean: Option<f64>,
    repeats: Option<usize>,
    seed: Option<u64>,
    time_years: Option<f64>,
    realization: Option<RealizationMode>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
            .map_err(|e| e.in_file(path))
    }

    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut dem = None;
        let mut vents = None;
        let mut event_table = None;
        let mut output_dir = None;
        let mut seed = 0_u64;
        let mut classes = 4_usize;
        let mut bandwidth = Bandwidth::Auto;
        let mut base_spacing = None;
        let mut ca = CaParams::default();
        let mut order: Vec<String> = Vec::new();
        let mut partials: HashMap<String, PartialScenario> = HashMap::new();

        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno, "expected 'key = value'"))?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::parse(lineno, "empty key"));
            }
            if value.is_empty() {
                return Err(Error::parse(lineno, format!("empty value for key '{key}'")));
            }
            if let Some(first) = seen.insert(key.to_string(), lineno) {
                return Err(Error::parse(
                    lineno,
                    format!("duplicate key '{key}' (first set on line {first})"),
                ));
            }

            match key {
                "dem" => dem = Some(value.to_string()),
                "vents" => vents = Some(value.to_string()),
                "event_table" => event_table = Some(value.to_string()),
                "output_dir" => output_dir = Some(value.to_string()),
                "seed" => seed = parse_u64(lineno, key, value)?,
                "field.classes" => classes = parse_usize(lineno, key, value)?,
                "field.bandwidth" => {
                    bandwidth = if value.eq_ignore_ascii_case("auto") {
                        Bandwidth::Auto
                    } else {
                        Bandwidth::Fixed(parse_f64(lineno, key, value)?)
                    }
                }
                "field.base_spacing" => base_spacing = Some(parse_f64(lineno, key, value)?),
                "ca.adherence" => ca.adherence = parse_f64(lineno, key, value)?,
                "ca.relaxation" => ca.relaxation = parse_f64(lineno, key, value)?,
                "ca.step_dt" => ca.step_dt = parse_f64(lineno, key, value)?,
                "ca.halt_flux" => ca.halt_flux = parse_f64(lineno, key, value)?,
                "ca.invasion_threshold" => {
                    ca.invasion_threshold = parse_f64(lineno, key, value)?
                }
                "ca.max_steps_factor" => ca.max_steps_factor = parse_usize(lineno, key, value)?,
                _ => {
                    let Some(rest) = key.strip_prefix("scenario.") else {
                        return Err(Error::parse(lineno, format!("unknown key '{key}'")));
                    };
                    let Some((label, field)) = rest.split_once('.') else {
                        return Err(Error::parse(
                            lineno,
                            format!("expected 'scenario.<label>.<field>', got '{key}'"),
                        ));
                    };
                    if label.is_empty()
                        || !label
                            .chars()
                            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
                    {
                        return Err(Error::parse(
                            lineno,
                            format!(
                                "scenario label '{label}' must be alphanumeric with '_' or '-'"
                            ),
                        ));
                    }
                    if !partials.contains_key(label) {
                        order.push(label.to_string());
                    }
                    let p = partials.entry(label.to_string()).or_default();
                    match field {
                        "poisson_mean" => p.poisson_mean = Some(parse_f64(lineno, key, value)?),
                        "repeats" => p.repeats = Some(parse_usize(lineno, key, value)?),
                        "seed" => p.seed = Some(parse_u64(lineno, key, value)?),
                        "time_years" => p.time_years = Some(parse_f64(lineno, key, value)?),
                        "realization" => {
                            p.realization = Some(match value {
                                "uniform" => RealizationMode::Uniform,
                                "midpoint" => RealizationMode::Midpoint,
                                _ => {
                                    return Err(Error::parse(
                                        lineno,
                                        format!(
                                            "realization must be 'uniform' or 'midpoint', \
                                             got '{value}'"
                                        ),
                                    ))
                                }
                            })
                        }
                        _ => {
                            return Err(Error::parse(
                                lineno,
                                format!("unknown scenario field '{field}' in '{key}'"),
                            ))
                        }
                    }
                }
            }
        }

        let require = |name: &str, v: Option<String>| {
            v.ok_or_else(|| Error::invalid(format!("missing required key '{name}'")))
        };
        let dem = resolve(base_dir, &require("dem", dem)?);
        let vents = resolve(base_dir, &require("vents", vents)?);
        let event_table = resolve(base_dir, &require("event_table", event_table)?);
        let output_dir = resolve(base_dir, &require("output_dir", output_dir)?);
        let base_spacing = base_spacing
            .ok_or_else(|| Error::invalid("missing required key 'field.base_spacing'"))?;

        for (name, p) in [
            ("dem", &dem),
            ("vents", &vents),
            ("event_table", &event_table),
        ] {
            if !p.is_file() {
                return Err(Error::invalid(format!(
                    "{name} file not found: {}",
                    p.display()
                )));
            }
        }

        let mut scenarios = Vec::with_capacity(order.len());
        for label in order {
            let p = partials.remove(&label).expect("label registered");
            let missing = |field: &str| {
                Error::invalid(format!("scenario '{label}' is missing key '{field}'"))
            };
            let time_years = p.time_years.ok_or_else(|| missing("time_years"))?;
            if !time_years.is_finite() || time_years <= 0.0 {
                return Err(Error::invalid(format!(
                    "scenario '{label}': time_years must be positive, got {time_years}"
                )));
            }
            let config = ScenarioConfig {
                label: label.clone(),
                poisson_mean: p.poisson_mean.ok_or_else(|| missing("poisson_mean"))?,
                repeats: p.repeats.ok_or_else(|| missing("repeats"))?,
                seed: p.seed.unwrap_or(seed),
                realization: p.realization.unwrap_or(RealizationMode::Uniform),
            };
            config.validate()?;
            scenarios.push(ScenarioSpec { config, time_years });
        }

        Ok(RunConfig {
            dem,
            vents,
            event_table,
            output_dir,
            seed,
            field: FieldParams {
                classes,
                bandwidth,
                base_spacing,
            },
            ca,
            scenarios,
        })
    }

    /// Applies command-line overrides. A seed override replaces the global
    /// seed and every scenario's effective seed.
    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<PathBuf>) {
        if let Some(s) = seed {
            self.seed = s;
            for sc in &mut self.scenarios {
                sc.config.seed = s;
            }
        }
        if let Some(dir) = out {
            self.output_dir = dir;
        }
    }

    pub fn scenario(&self, label: &str) -> Result<&ScenarioSpec> {
        self.scenarios
            .iter()
            .find(|s| s.config.label == label)
            .ok_or_else(|| {
                let known = if self.scenarios.is_empty() {
                    "none".to_string()
                } else {
                    self.scenarios
                        .iter()
                        .map(|s| s.config.label.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                };
                Error::invalid(format!(
                    "unknown scenario label '{label}'; known labels: {known}"
                ))
            })
    }
}

fn resolve(base_dir: &Path, value: &str) -> PathBuf {
    let p = Path::new(value);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

fn parse_f64(lineno: usize, key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::parse(lineno, format!("invalid number '{value}' for {key}")))
}

fn parse_u64(lineno: usize, key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| Error::parse(lineno, format!("invalid integer '{value}' for {key}")))
}

fn parse_usize(lineno: usize, key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::parse(lineno, format!("invalid integer '{value}' for {key}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    /// Writes the referenced data files so existence checks pass.
    fn stage(dir: &Path) {
        fs::write(
            dir.join("d.asc"),
            "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n5\n",
        )
        .unwrap();
        fs::write(dir.join("v.csv"), "x,y\n0.5,0.5\n").unwrap();
        fs::write(dir.join("t.csv"), lavamap::BUILTIN_TABLE_CSV).unwrap();
    }

    fn base_text() -> &'static str {
        "dem = d.asc\n\
         vents = v.csv\n\
         event_table = t.csv\n\
         output_dir = out\n\
         field.base_spacing = 10\n"
    }

    #[test]
    fn parses_full_config() {
        let dir = tempfile::tempdir().unwrap();
        stage(dir.path());
        let text = format!(
            "{}seed = 9\nfield.classes = 3\nfield.bandwidth = 55\n\
             ca.adherence = 1.25\nca.max_steps_factor = 7\n\
             # comment\n\n\
             scenario.next.poisson_mean = 0\n\
             scenario.next.repeats = 10\n\
             scenario.next.time_years = 7.76\n\
             scenario.next.realization = midpoint\n\
             scenario.century.poisson_mean = 13\n\
             scenario.century.repeats = 78\n\
             scenario.century.time_years = 100\n\
             scenario.century.seed = 123\n",
            base_text()
        );
        let cfg = RunConfig::parse(&text, dir.path()).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.field.classes, 3);
        assert_eq!(cfg.field.bandwidth, Bandwidth::Fixed(55.0));
        assert_eq!(cfg.field.base_spacing, 10.0);
        assert_eq!(cfg.ca.adherence, 1.25);
        assert_eq!(cfg.ca.max_steps_factor, 7);
        assert_eq!(cfg.ca.relaxation, CaParams::default().relaxation);
        assert_eq!(cfg.scenarios.len(), 2);
        let next = &cfg.scenarios[0];
        assert_eq!(next.config.label, "next");
        assert_eq!(next.config.seed, 9);
        assert_eq!(next.config.realization, RealizationMode::Midpoint);
        assert_eq!(next.time_years, 7.76);
        let century = &cfg.scenarios[1];
        assert_eq!(century.config.seed, 123);
        assert_eq!(century.config.realization, RealizationMode::Uniform);
        assert_eq!(cfg.dem, dir.path().join("d.asc"));
    }

    #[test]
    fn unknown_key_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        stage(dir.path());
        let text = format!("{}bogus = 1\n", base_text());
        let err = RunConfig::parse(&text, dir.path()).unwrap_err().to_string();
        assert_eq!(err, "line 6: unknown key 'bogus'");
    }

    #[test]
    fn duplicate_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        stage(dir.path());
        let text = format!("{}seed = 1\nseed = 2\n", base_text());
        let err = RunConfig::parse(&text, dir.path()).unwrap_err().to_string();
        assert!(err.contains("duplicate key 'seed'"), "{err}");
        assert!(err.contains("line 6"), "{err}");
    }

    #[test]
    fn missing_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        stage(dir.path());
        fs::remove_file(dir.path().join("d.asc")).unwrap();
        let err = RunConfig::parse(base_text(), dir.path())
            .unwrap_err()
            .to_string();
        assert!(err.contains("dem file not found"), "{err}");
        assert!(err.contains("d.asc"), "{err}");
    }

    #[test]
    fn missing_scenario_field_rejected() {
        let dir = tempfile::tempdir().unwrap();
        stage(dir.path());
        let text = format!(
            "{}scenario.a.poisson_mean = 1\nscenario.a.repeats = 5\n",
            base_text()
        );
        let err = RunConfig::parse(&text, dir.path()).unwrap_err().to_string();
        assert_eq!(err, "scenario 'a' is missing key 'time_years'");
    }

    #[test]
    fn bad_realization_lists_choices() {
        let dir = tempfile::tempdir().unwrap();
        stage(dir.path());
        let text = format!("{}scenario.a.realization = random\n", base_text());
        let err = RunConfig::parse(&text, dir.path()).unwrap_err().to_string();
        assert!(
            err.contains("must be 'uniform' or 'midpoint'"),
            "{err}"
        );
    }

    #[test]
    fn seed_override_hits_every_scenario() {
        let dir = tempfile::tempdir().unwrap();
        stage(dir.path());
        let text = format!(
            "{}scenario.a.poisson_mean = 1\nscenario.a.repeats = 5\n\
             scenario.a.time_years = 10\nscenario.a.seed = 77\n",
            base_text()
        );
        let mut cfg = RunConfig::parse(&text, dir.path()).unwrap();
        assert_eq!(cfg.scenarios[0].config.seed, 77);
        cfg.apply_overrides(Some(5), None);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.scenarios[0].config.seed, 5);
    }

    #[test]
    fn unknown_label_lists_known() {
        let dir = tempfile::tempdir().unwrap();
        stage(dir.path());
        let text = format!(
            "{}scenario.a.poisson_mean = 1\nscenario.a.repeats = 5\n\
             scenario.a.time_years = 10\n",
            base_text()
        );
        let cfg = RunConfig::parse(&text, dir.path()).unwrap();
        let err = cfg.scenario("b").unwrap_err().to_string();
        assert_eq!(err, "unknown scenario label 'b'; known labels: a");
    }
}
