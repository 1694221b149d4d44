//! Experiment configuration: an INI file, then `SKELHAR_<SECTION>_<KEY>`
//! environment variables, then command-line flags.
//!
//! ```ini
//! [corpus]
//! source = synthetic        ; synthetic | cad60 | cache
//! path = /data/cad60        ; cad60 and cache only
//! subjects = 4              ; synthetic only
//! classes = 14
//! frames = 60
//!
//! [experiment]
//! seed = 42
//! methods = svm, knn, gng, gwr
//! modes = none, centre_mirror, centre_mirror_normalize
//! scene_policy = per_scene
//!
//! [gwr]
//! max_nodes = 1000
//! classify_at = l1_pose
//! ```
//!
//! Method sections (`[knn]`, `[svm]`, `[gwr]`, `[gng]`) accept every
//! parameter of the corresponding model; see [`KEYS`] for the rest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ini::Ini;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use skelhar::baselines::SvmParams;
use skelhar::eval::{MethodSpec, ScenePolicy};
use skelhar::gas::{GngParams, GwrParams};
use skelhar::hierarchy::{ClassifyAt, GasEngine, HierarchyConfig};
use skelhar::PreconditionMode;

pub const ENV_PREFIX: &str = "SKELHAR_";

/// Keys outside the method sections, with their defaults (`None`: required).
pub const KEYS: &[(&str, &str, Option<&str>)] = &[
    ("corpus", "source", None),
    ("corpus", "path", Some("")),
    ("corpus", "scene_table", Some("")),
    ("corpus", "subjects", Some("4")),
    ("corpus", "classes", Some("14")),
    ("corpus", "frames", Some("60")),
    ("experiment", "seed", None),
    ("experiment", "methods", Some("svm, knn, gng, gwr")),
    ("experiment", "modes", Some("none, centre_mirror, centre_mirror_normalize")),
    ("experiment", "scene_policy", Some("per_scene")),
    ("experiment", "include_extras", Some("false")),
    ("experiment", "out", Some("results")),
    ("experiment", "jobs", Some("0")),
    ("knn", "k", Some("1")),
    ("knn", "sweep", Some("")),
    ("gwr", "classify_at", Some("l1_pose")),
    ("gwr", "train_upper_layers", Some("false")),
    ("gng", "classify_at", Some("l1_pose")),
    ("gng", "train_upper_layers", Some("false")),
];

const METHODS: [&str; 4] = ["svm", "knn", "gng", "gwr"];

#[derive(Clone, Debug, PartialEq)]
pub enum CorpusSource {
    Synthetic { subjects: usize, classes: usize, frames: usize },
    Cad60(PathBuf),
    Cache(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    pub scene_table: Option<PathBuf>,
    pub seed: u64,
    pub methods: Vec<MethodSpec>,
    pub modes: Vec<PreconditionMode>,
    pub scene_policy: ScenePolicy,
    pub include_extras: bool,
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub knn_sweep: Vec<usize>,
    /// Every key after defaults and overrides, for the run manifest.
    pub effective: BTreeMap<String, BTreeMap<String, String>>,
}

/// Command-line values that take precedence over file and environment.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn read_ini(path: &Path) -> Result<Sections> {
    let ini = Ini::load_from_file(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let mut out = Sections::new();
    for (section, props) in ini.iter() {
        let Some(section) = section else {
            if props.iter().next().is_some() {
                bail!("{}: keys must follow a [section] header", path.display());
            }
            continue;
        };
        let entry = out.entry(section.trim().to_ascii_lowercase()).or_default();
        for (k, v) in props.iter() {
            entry.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
    }
    Ok(out)
}

/// `SKELHAR_GWR_MAX_NODES=500` becomes `[gwr] max_nodes = 500`.
fn apply_env(sections: &mut Sections, vars: impl Iterator<Item = (String, String)>) -> Result<()> {
    for (name, value) in vars {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
        let rest = rest.to_ascii_lowercase();
        let (section, key) = rest
            .split_once('_')
            .ok_or_else(|| anyhow!("environment variable {name}: expected {ENV_PREFIX}<SECTION>_<KEY>"))?;
        sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.trim().to_string());
    }
    Ok(())
}

fn parse<T: FromStr>(section: &str, key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow!("[{section}] {key} = {v:?}: {e}"))
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_ascii_lowercase()).filter(|s| !s.is_empty()).collect()
}

/// Overlays `keys` onto the serialized defaults of `T`; unknown keys fail.
fn with_overrides<T: Serialize + DeserializeOwned>(
    section: &str,
    defaults: &T,
    keys: &BTreeMap<String, String>,
    effective: &mut BTreeMap<String, String>,
) -> Result<T> {
    let mut value = serde_json::to_value(defaults)?;
    let obj = value.as_object_mut().expect("parameter structs serialize to objects");
    for (k, v) in keys {
        let slot = obj
            .get_mut(k)
            .ok_or_else(|| anyhow!("[{section}] unknown key `{k}`"))?;
        *slot = serde_json::from_str::<Value>(v).unwrap_or_else(|_| Value::String(v.clone()));
    }
    let parsed: T = serde_json::from_value(value).map_err(|e| anyhow!("[{section}] {e}"))?;
    if let Value::Object(obj) = serde_json::to_value(&parsed)? {
        for (k, v) in obj {
            let text = match v {
                Value::String(s) => s,
                other => other.to_string(),
            };
            effective.insert(k, text);
        }
    }
    Ok(parsed)
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let mut sections = read_ini(path)?;
        apply_env(&mut sections, std::env::vars())?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_sections(sections, overrides, base)
    }

    /// Builds a config from parsed sections; relative paths resolve against `base`.
    pub fn from_sections(mut sections: Sections, overrides: &Overrides, base: &Path) -> Result<Self> {
        if let Some(seed) = overrides.seed {
            sections.entry("experiment".into()).or_default().insert("seed".into(), seed.to_string());
        }
        if let Some(out) = &overrides.out {
            sections
                .entry("experiment".into())
                .or_default()
                .insert("out".into(), out.display().to_string());
        }
        if let Some(jobs) = overrides.jobs {
            sections.entry("experiment".into()).or_default().insert("jobs".into(), jobs.to_string());
        }
        for (section, keys) in &sections {
            let generic = ["corpus", "experiment"].contains(&section.as_str());
            if !generic && !METHODS.contains(&section.as_str()) {
                bail!("unknown section [{section}]");
            }
            if generic {
                for key in keys.keys() {
                    if !KEYS.iter().any(|(s, k, _)| s == section && k == key) {
                        bail!("[{section}] unknown key `{key}`");
                    }
                }
            }
        }

        let mut effective = Sections::new();
        let mut get = |section: &str, key: &str| -> Result<String> {
            let (_, _, default) = KEYS
                .iter()
                .find(|(s, k, _)| *s == section && *k == key)
                .expect("declared key");
            let v = sections
                .get(section)
                .and_then(|s| s.get(key))
                .cloned()
                .or_else(|| default.map(str::to_string))
                .ok_or_else(|| anyhow!("[{section}] {key} is required"))?;
            effective.entry(section.into()).or_default().insert(key.into(), v.clone());
            Ok(v)
        };
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        let source = get("corpus", "source")?;
        let corpus_path = get("corpus", "path")?;
        let corpus = match source.to_ascii_lowercase().as_str() {
            "synthetic" => CorpusSource::Synthetic {
                subjects: parse("corpus", "subjects", &get("corpus", "subjects")?)?,
                classes: parse("corpus", "classes", &get("corpus", "classes")?)?,
                frames: parse("corpus", "frames", &get("corpus", "frames")?)?,
            },
            "cad60" | "cache" if corpus_path.is_empty() => bail!("[corpus] path is required for source = {source}"),
            "cad60" => CorpusSource::Cad60(resolve(&corpus_path)),
            "cache" => CorpusSource::Cache(resolve(&corpus_path)),
            other => bail!("[corpus] source = {other:?}: expected synthetic, cad60 or cache"),
        };
        let scene_table = Some(get("corpus", "scene_table")?).filter(|s| !s.is_empty()).map(|s| resolve(&s));

        let seed: u64 = parse("experiment", "seed", &get("experiment", "seed")?)?;
        let modes = list(&get("experiment", "modes")?)
            .iter()
            .map(|m| parse::<PreconditionMode>("experiment", "modes", m))
            .collect::<Result<Vec<_>>>()?;
        let scene_policy = parse("experiment", "scene_policy", &get("experiment", "scene_policy")?)?;
        let include_extras = parse("experiment", "include_extras", &get("experiment", "include_extras")?)?;
        let out = resolve(&get("experiment", "out")?);
        let jobs = parse("experiment", "jobs", &get("experiment", "jobs")?)?;
        let method_names = list(&get("experiment", "methods")?);
        if method_names.is_empty() || modes.is_empty() {
            bail!("[experiment] needs at least one method and one preconditioning mode");
        }

        let k: usize = parse("knn", "k", &get("knn", "k")?)?;
        let knn_sweep = list(&get("knn", "sweep")?)
            .iter()
            .map(|v| parse::<usize>("knn", "sweep", v))
            .collect::<Result<Vec<_>>>()?;
        if k == 0 || knn_sweep.contains(&0) {
            bail!("[knn] k must be >= 1");
        }

        let mut hierarchy_opts = BTreeMap::new();
        for gas in ["gwr", "gng"] {
            let at = match get(gas, "classify_at")?.to_ascii_lowercase().as_str() {
                "l1_pose" => ClassifyAt::L1Pose,
                "l3_combined" => ClassifyAt::L3Combined,
                other => bail!("[{gas}] classify_at = {other:?}: expected l1_pose or l3_combined"),
            };
            let upper: bool = parse(gas, "train_upper_layers", &get(gas, "train_upper_layers")?)?;
            hierarchy_opts.insert(gas, (at, upper));
        }

        let section_keys = |name: &str, extra: &[&str]| -> BTreeMap<String, String> {
            sections
                .get(name)
                .map(|s| {
                    s.iter()
                        .filter(|(k, _)| !extra.contains(&k.as_str()))
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect()
                })
                .unwrap_or_default()
        };
        let knn_keys = section_keys("knn", &["k", "sweep"]);
        if let Some(key) = knn_keys.keys().next() {
            bail!("[knn] unknown key `{key}`");
        }
        let svm_keys = section_keys("svm", &[]);
        let gwr_keys = section_keys("gwr", &["classify_at", "train_upper_layers"]);
        let gng_keys = section_keys("gng", &["classify_at", "train_upper_layers"]);

        let mut methods = Vec::new();
        for name in &method_names {
            let eff = effective.entry(name.clone()).or_default();
            let method = match name.as_str() {
                "knn" => MethodSpec::Knn { k },
                "svm" => MethodSpec::Svm(with_overrides("svm", &SvmParams::default(), &svm_keys, eff)?),
                "gwr" | "gng" => {
                    let (at, upper) = hierarchy_opts[name.as_str()];
                    let engine = if name == "gwr" {
                        GasEngine::Gwr(with_overrides("gwr", &GwrParams::default(), &gwr_keys, eff)?)
                    } else {
                        GasEngine::Gng(with_overrides("gng", &GngParams::default(), &gng_keys, eff)?)
                    };
                    let mut config = HierarchyConfig::uniform(engine, at);
                    config.train_upper_layers = upper;
                    if name == "gwr" {
                        MethodSpec::Gwr(config)
                    } else {
                        MethodSpec::Gng(config)
                    }
                }
                other => bail!("[experiment] methods: unknown method {other:?} (svm, knn, gng, gwr)"),
            };
            if methods.iter().any(|m: &MethodSpec| m.name() == method.name()) {
                bail!("[experiment] methods: {name} listed twice");
            }
            methods.push(method);
        }
        // validate parameters of methods that are not run, so typos still surface
        let mut scratch = BTreeMap::new();
        with_overrides("svm", &SvmParams::default(), &svm_keys, &mut scratch)?;
        with_overrides("gwr", &GwrParams::default(), &gwr_keys, &mut scratch)?;
        with_overrides("gng", &GngParams::default(), &gng_keys, &mut scratch)?;

        Ok(Self {
            corpus,
            scene_table,
            seed,
            methods,
            modes,
            scene_policy,
            include_extras,
            out,
            jobs,
            knn_sweep,
            effective,
        })
    }

    /// The effective configuration as INI text; running it reproduces the run.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        for (section, keys) in &self.effective {
            s.push_str(&format!("[{section}]\n"));
            for (k, v) in keys {
                s.push_str(&format!("{k} = {v}\n"));
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sections(text: &str) -> Sections {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ini");
        std::fs::write(&p, text).unwrap();
        read_ini(&p).unwrap()
    }

    fn build(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_sections(sections(text), &Overrides::default(), Path::new("/base"))
    }

    #[test]
    fn defaults_and_required_keys() {
        let c = build("[corpus]\nsource = synthetic\n[experiment]\nseed = 5\n").unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.methods.len(), 4);
        assert_eq!(c.modes.len(), 3);
        assert_eq!(c.scene_policy, ScenePolicy::PerScene);
        assert_eq!(c.out, PathBuf::from("/base/results"));
        assert!(build("[corpus]\nsource = synthetic\n").is_err());
        assert!(build("[experiment]\nseed = 1\n").is_err());
    }

    #[test]
    fn method_parameters() {
        let c = build(
            "[corpus]\nsource = synthetic\n[experiment]\nseed = 1\nmethods = gwr, svm\n\
             [gwr]\nmax_nodes = 77\ngate = off\nclassify_at = l3_combined\n[svm]\nbatch = full\n",
        )
        .unwrap();
        let MethodSpec::Gwr(h) = &c.methods[0] else { panic!() };
        let GasEngine::Gwr(p) = &h.combined_l3.engine else { panic!() };
        assert_eq!(p.max_nodes, 77);
        assert_eq!(h.classify_at, ClassifyAt::L3Combined);
        assert_eq!(c.effective["gwr"]["max_nodes"], "77");
        let MethodSpec::Svm(s) = &c.methods[1] else { panic!() };
        assert_eq!(s.batch, skelhar::baselines::SvmBatch::Full);
    }

    #[test]
    fn unknown_keys_and_values_fail() {
        let base = "[corpus]\nsource = synthetic\n[experiment]\nseed = 1\n";
        assert!(build(&format!("{base}[gwr]\nmax_node = 3\n")).is_err());
        assert!(build(&format!("{base}[gwr]\nmax_nodes = many\n")).is_err());
        assert!(build(&format!("{base}[extra]\nx = 1\n")).is_err());
        assert!(build(&format!("{base}[knn]\nk = 0\n")).is_err());
        assert!(build("[corpus]\nsource = cad60\n[experiment]\nseed = 1\n").is_err());
    }

    #[test]
    fn environment_and_flags_override_the_file() {
        let mut s = sections("[corpus]\nsource = synthetic\n[experiment]\nseed = 1\n[gng]\nepochs = 3\n");
        apply_env(
            &mut s,
            [
                ("SKELHAR_GNG_MAX_NODES".to_string(), "12".to_string()),
                ("SKELHAR_EXPERIMENT_SEED".to_string(), "2".to_string()),
                ("PATH".to_string(), "/bin".to_string()),
            ]
            .into_iter(),
        )
        .unwrap();
        let flags = Overrides {
            seed: Some(3),
            ..Overrides::default()
        };
        let c = ExperimentConfig::from_sections(s.clone(), &Overrides::default(), Path::new(".")).unwrap();
        assert_eq!(c.seed, 2);
        assert_eq!(c.effective["gng"]["max_nodes"], "12");
        assert_eq!(c.effective["gng"]["epochs"], "3");
        let c = ExperimentConfig::from_sections(s, &flags, Path::new(".")).unwrap();
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn effective_ini_round_trips() {
        let c = build("[corpus]\nsource = synthetic\nframes = 30\n[experiment]\nseed = 9\nmethods = knn, gng\n").unwrap();
        let again = build(&c.to_ini()).unwrap();
        assert_eq!(again.methods, c.methods);
        assert_eq!(again.to_ini(), c.to_ini());
    }
}
