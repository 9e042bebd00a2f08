//! Run configuration files.
//!
//! Plain `key = value` lines grouped under `[shape]`, `[step]`, `[flow]` and
//! `[output]`. `#` and `;` start comments. Every key may appear at most once,
//! unknown keys and keys that do not apply to the chosen shape are rejected,
//! and every error names the key and the line (or override) it came from.
//!
//! | section    | key              | default              | meaning |
//! |------------|------------------|----------------------|---------|
//! | `[shape]`  | `kind`           | required             | `circle`, `ellipse`, `perturbed_circle`, `sphere`, `perturbed_sphere`, `ellipsoid`, `file` |
//! |            | `R`              | `1`                  | radius (circle and sphere kinds) |
//! |            | `a`, `b`         | required             | semi-axes (`ellipse`, `ellipsoid`) |
//! |            | `c`              | required             | third semi-axis (`ellipsoid`) |
//! |            | `n`              | `256`                | vertices per curve (2D kinds) |
//! |            | `subdiv`         | `3`                  | icosphere subdivision level (3D kinds) |
//! |            | `mode`           | `2`                  | Fourier mode (`perturbed_circle`) |
//! |            | `degree`, `order`| `2`, `0`             | harmonic `Y_lm` (`perturbed_sphere`) |
//! |            | `amplitude`      | `0.05`               | perturbation size (perturbed kinds) |
//! |            | `path`           | required             | `.off`, `.obj` or `.json` file (`file`), relative to the config file |
//! | `[step]`   | `h`              | `1e-4`               | time step |
//! |            | `delta`          | none                 | cap on the constraint radius; the effective radius is `min(delta, r/8)` |
//! |            | `max_picard`     | `50`                 | fixed-point iterations per step |
//! |            | `picard_tol`     | `1e-10`              | relative update tolerance |
//! |            | `fallback`       | `gradient_descent`   | or `none` |
//! | `[flow]`   | `steps`          | none                 | number of steps |
//! |            | `t_final`        | none                 | final time; at least one of `steps`, `t_final` is required and they must agree |
//! |            | `remesh`         | `off`                | `off`, `arc_length_2d`, `quality_3d` |
//! |            | `remesh_ratio`   | `1.5`                | edge-length ratio trigger (`arc_length_2d`) |
//! |            | `min_angle`      | `15`                 | smallest angle in degrees (`quality_3d`) |
//! |            | `edge_ratio`     | `4`                  | longest/shortest edge trigger (`quality_3d`) |
//! |            | `snapshot_every` | `0`                  | write every k-th surface; seed and final are always written |
//! | `[output]` | `diagnostics`    | `diagnostics.csv`    | CSV file name under `--out` |
//! |            | `snapshots`      | `true`               | write snapshot files |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flatflow::flow::FlowConfig;
use flatflow::geometry::remesh::RemeshPolicy;
use flatflow::geometry::ShapeSpec;
use flatflow::mm_step::{Fallback, StepConfig};

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "shape",
        &["kind", "R", "a", "b", "c", "n", "subdiv", "mode", "degree", "order", "amplitude", "path"],
    ),
    ("step", &["h", "delta", "max_picard", "picard_tol", "fallback"]),
    (
        "flow",
        &["steps", "t_final", "remesh", "remesh_ratio", "min_angle", "edge_ratio", "snapshot_every"],
    ),
    ("output", &["diagnostics", "snapshots"]),
];

/// Where a value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override(usize),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override(n) => write!(f, "override #{n}"),
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Res<T> = Result<T, ConfigError>;

fn err<T>(msg: String) -> Res<T> {
    Err(ConfigError(msg))
}

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    origin: Origin,
    used: bool,
}

/// Key/value pairs keyed by `section.key`, before interpretation.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

fn check_key(section: &str, key: &str, origin: Origin) -> Res<()> {
    match SECTIONS.iter().find(|(s, _)| *s == section) {
        None => err(format!("{origin}: unknown section [{section}]")),
        Some((_, keys)) if !keys.contains(&key) => {
            err(format!("{origin}: unknown key '{key}' in section [{section}]"))
        }
        Some(_) => Ok(()),
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Res<Self> {
        let mut raw = RawConfig::default();
        let mut section: Option<String> = None;
        for (idx, line) in text.lines().enumerate() {
            let origin = Origin::Line(idx + 1);
            let line = line.split(['#', ';']).next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError(format!("{origin}: malformed section header '{line}'")))?
                    .trim();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return err(format!("{origin}: unknown section [{name}]"));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("{origin}: expected 'key = value', got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let Some(sec) = &section else {
                return err(format!("{origin}: key '{key}' appears before any section header"));
            };
            check_key(sec, key, origin)?;
            let full = format!("{sec}.{key}");
            if let Some(prev) = raw.entries.get(&full) {
                return err(format!("duplicate key '{key}' in [{sec}] on {} and {origin}", prev.origin));
            }
            raw.entries.insert(
                full,
                Entry {
                    value: value.to_string(),
                    origin,
                    used: false,
                },
            );
        }
        Ok(raw)
    }

    /// Apply `section.key=value` overrides in order; later ones win.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Res<()> {
        for (i, o) in overrides.iter().enumerate() {
            let origin = Origin::Override(i + 1);
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("{origin}: expected section.key=value, got '{o}'")))?;
            let (sec, k) = key
                .trim()
                .split_once('.')
                .ok_or_else(|| ConfigError(format!("{origin}: key '{key}' must be written as section.key")))?;
            check_key(sec, k, origin)?;
            self.entries.insert(
                format!("{sec}.{k}"),
                Entry {
                    value: value.trim().to_string(),
                    origin,
                    used: false,
                },
            );
        }
        Ok(())
    }

    fn take(&mut self, key: &str) -> Option<(String, Origin)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.origin)
        })
    }

    fn get<T: FromStr>(&mut self, key: &str, default: Option<T>) -> Res<T> {
        match self.take(key) {
            Some((v, origin)) => parse_value(key, &v, origin),
            None => default.ok_or_else(|| ConfigError(format!("missing required key '{key}'"))),
        }
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Res<Option<T>> {
        match self.take(key) {
            Some((v, origin)) => parse_value(key, &v, origin).map(Some),
            None => Ok(None),
        }
    }

    fn origin(&self, key: &str) -> String {
        self.entries
            .get(key)
            .map(|e| e.origin.to_string())
            .unwrap_or_else(|| "default".into())
    }
}

fn short(key: &str) -> &str {
    key.split_once('.').map_or(key, |(_, k)| k)
}

fn parse_value<T: FromStr>(key: &str, v: &str, origin: Origin) -> Res<T> {
    v.parse::<T>().map_err(|_| {
        ConfigError(format!(
            "{origin}: key '{}' has invalid value '{v}' (expected {})",
            short(key),
            std::any::type_name::<T>()
        ))
    })
}

/// Everything a config file describes.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub flow: FlowConfig,
    pub diagnostics: String,
    pub snapshots: bool,
}

/// Parse, apply overrides, and validate. `base` resolves relative shape paths.
pub fn parse_config(text: &str, overrides: &[String], base: &Path) -> Res<RunConfig> {
    let mut raw = RawConfig::parse(text)?;
    raw.apply_overrides(overrides)?;
    build(&mut raw, base)
}

fn positive(raw: &RawConfig, key: &str, v: f64) -> Res<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        err(format!("{}: key '{}' must be positive, got {v}", raw.origin(key), short(key)))
    }
}

fn build(raw: &mut RawConfig, base: &Path) -> Res<RunConfig> {
    let kind: String = raw.get("shape.kind", None)?;
    let shape = match kind.as_str() {
        "circle" => ShapeSpec::Circle {
            radius: raw.get("shape.R", Some(1.0))?,
            n: raw.get("shape.n", Some(256))?,
        },
        "ellipse" => ShapeSpec::Ellipse {
            a: raw.get("shape.a", None)?,
            b: raw.get("shape.b", None)?,
            n: raw.get("shape.n", Some(256))?,
        },
        "perturbed_circle" => ShapeSpec::PerturbedCircle {
            radius: raw.get("shape.R", Some(1.0))?,
            mode: raw.get("shape.mode", Some(2))?,
            amplitude: raw.get("shape.amplitude", Some(0.05))?,
            n: raw.get("shape.n", Some(256))?,
        },
        "sphere" => ShapeSpec::Sphere {
            radius: raw.get("shape.R", Some(1.0))?,
            subdiv: raw.get("shape.subdiv", Some(3))?,
        },
        "perturbed_sphere" => ShapeSpec::PerturbedSphere {
            radius: raw.get("shape.R", Some(1.0))?,
            degree: raw.get("shape.degree", Some(2))?,
            order: raw.get("shape.order", Some(0))?,
            amplitude: raw.get("shape.amplitude", Some(0.05))?,
            subdiv: raw.get("shape.subdiv", Some(3))?,
        },
        "ellipsoid" => ShapeSpec::Ellipsoid {
            a: raw.get("shape.a", None)?,
            b: raw.get("shape.b", None)?,
            c: raw.get("shape.c", None)?,
            subdiv: raw.get("shape.subdiv", Some(3))?,
        },
        "file" => {
            let p: PathBuf = raw.get("shape.path", None)?;
            ShapeSpec::File {
                path: if p.is_absolute() { p } else { base.join(p) },
            }
        }
        other => {
            return err(format!(
                "{}: key 'kind' has unknown shape '{other}'",
                raw.origin("shape.kind")
            ))
        }
    };

    let h = raw.get("step.h", Some(1e-4))?;
    positive(raw, "step.h", h)?;
    let delta: Option<f64> = raw.opt("step.delta")?;
    if let Some(d) = delta {
        positive(raw, "step.delta", d)?;
    }
    let max_picard: usize = raw.get("step.max_picard", Some(50))?;
    if max_picard == 0 {
        return err(format!("{}: key 'max_picard' must be at least 1", raw.origin("step.max_picard")));
    }
    let picard_tol = raw.get("step.picard_tol", Some(1e-10))?;
    positive(raw, "step.picard_tol", picard_tol)?;
    let fallback = match raw.get::<String>("step.fallback", Some("gradient_descent".into()))?.as_str() {
        "gradient_descent" => Fallback::GradientDescent,
        "none" => Fallback::None,
        other => {
            return err(format!(
                "{}: key 'fallback' must be gradient_descent or none, got '{other}'",
                raw.origin("step.fallback")
            ))
        }
    };

    let n_steps: Option<usize> = raw.opt("flow.steps")?;
    let t_final: Option<f64> = raw.opt("flow.t_final")?;
    if let Some(t) = t_final {
        positive(raw, "flow.t_final", t)?;
    }
    let remesh_kind: String = raw.get("flow.remesh", Some("off".into()))?;
    let remesh = match remesh_kind.as_str() {
        "off" => RemeshPolicy::Off,
        "arc_length_2d" => RemeshPolicy::ArcLength2d {
            ratio: raw.get("flow.remesh_ratio", Some(1.5))?,
        },
        "quality_3d" => RemeshPolicy::Quality3d {
            min_angle_deg: raw.get("flow.min_angle", Some(15.0))?,
            edge_ratio: raw.get("flow.edge_ratio", Some(4.0))?,
        },
        other => {
            return err(format!(
                "{}: key 'remesh' must be off, arc_length_2d or quality_3d, got '{other}'",
                raw.origin("flow.remesh")
            ))
        }
    };
    let snapshot_every = raw.get("flow.snapshot_every", Some(0))?;
    let diagnostics: String = raw.get("output.diagnostics", Some("diagnostics.csv".into()))?;
    if diagnostics.is_empty() || diagnostics.contains(['/', '\\']) {
        return err(format!(
            "{}: key 'diagnostics' must be a plain file name",
            raw.origin("output.diagnostics")
        ));
    }
    let snapshots = raw.get("output.snapshots", Some(true))?;

    if let Some((key, e)) = raw.entries.iter().find(|(_, e)| !e.used) {
        return err(format!(
            "{}: key '{}' does not apply here (shape kind '{kind}', remesh '{remesh_kind}')",
            e.origin,
            short(key)
        ));
    }

    let flow = FlowConfig {
        shape,
        step: StepConfig {
            h,
            delta,
            max_picard,
            picard_tol,
            fallback,
        },
        n_steps,
        t_final,
        remesh,
        snapshot_every,
    };
    if n_steps.is_none() && t_final.is_none() {
        return err("missing key 'steps' or 't_final' in [flow]".into());
    }
    flow.validate().map_err(|e| {
        let (key, origin) = if t_final.is_some() {
            ("t_final", raw.origin("flow.t_final"))
        } else if matches!(remesh, RemeshPolicy::Off) {
            ("steps", raw.origin("flow.steps"))
        } else {
            ("remesh", raw.origin("flow.remesh"))
        };
        ConfigError(format!("{origin}: key '{key}': {e}"))
    })?;
    Ok(RunConfig {
        flow,
        diagnostics,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[shape]\nkind = circle\nR = 1\nn = 256\n[step]\nh = 1e-4\n[flow]\nsteps = 100\n";

    fn parse(text: &str) -> Res<RunConfig> {
        parse_config(text, &[], Path::new("."))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.flow.shape, ShapeSpec::Circle { radius: 1.0, n: 256 });
        assert_eq!(c.flow.step, StepConfig { h: 1e-4, ..Default::default() });
        assert_eq!(c.flow.n_steps, Some(100));
        assert_eq!(c.flow.remesh, RemeshPolicy::Off);
        assert_eq!(c.diagnostics, "diagnostics.csv");
        assert!(c.snapshots);
    }

    #[test]
    fn negative_delta_names_the_key() {
        let e = parse(&MINIMAL.replace("h = 1e-4", "h = 1e-4\ndelta = -0.1")).unwrap_err();
        assert!(e.0.contains("'delta'") && e.0.contains("line 7"), "{e}");
    }

    #[test]
    fn duplicates_name_both_lines() {
        let e = parse(&MINIMAL.replace("n = 256", "n = 256\nn = 128")).unwrap_err();
        assert!(e.0.contains("'n'") && e.0.contains("line 4") && e.0.contains("line 5"), "{e}");
    }

    #[test]
    fn unknown_and_inapplicable_keys_are_rejected() {
        let e = parse(&MINIMAL.replace("R = 1", "radius = 1")).unwrap_err();
        assert!(e.0.contains("unknown key 'radius'") && e.0.contains("line 3"), "{e}");
        let e = parse(&MINIMAL.replace("R = 1", "R = 1\nsubdiv = 3")).unwrap_err();
        assert!(e.0.contains("'subdiv'") && e.0.contains("does not apply"), "{e}");
        let e = parse("[mesh]\nkind = circle\n").unwrap_err();
        assert!(e.0.contains("[mesh]"), "{e}");
    }

    #[test]
    fn type_mismatch_names_key_and_line() {
        let e = parse(&MINIMAL.replace("n = 256", "n = many")).unwrap_err();
        assert!(e.0.contains("'n'") && e.0.contains("line 4") && e.0.contains("many"), "{e}");
    }

    #[test]
    fn overrides_equal_edits() {
        let o = parse_config(MINIMAL, &["step.h=5e-5".into(), "shape.n=128".into()], Path::new(".")).unwrap();
        let edited = parse(&MINIMAL.replace("h = 1e-4", "h = 5e-5").replace("n = 256", "n = 128")).unwrap();
        assert_eq!(o, edited);
        let e = parse_config(MINIMAL, &["step.hh=1".into()], Path::new(".")).unwrap_err();
        assert!(e.0.contains("override #1"), "{e}");
    }

    #[test]
    fn steps_and_final_time_must_agree() {
        let e = parse(&MINIMAL.replace("steps = 100", "steps = 100\nt_final = 0.5")).unwrap_err();
        assert!(e.0.contains("t_final"), "{e}");
        assert!(parse(&MINIMAL.replace("steps = 100", "t_final = 0.01")).is_ok());
        assert!(parse(&MINIMAL.replace("steps = 100", "")).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let c = parse_config("[shape]\nkind = file\npath = seed.off\n[flow]\nsteps = 1\n", &[], Path::new("/data")).unwrap();
        assert_eq!(c.flow.shape, ShapeSpec::File { path: "/data/seed.off".into() });
    }
}
