use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::events::check_version;
use super::FORMAT_VERSION;
use crate::error::{Error, Result};
use crate::model::{validate_all, BadgeSpec, ModelConfig, UserParams};

/// Stack Overflow threshold badges with illustrative bandwidths.
pub const EXAMPLE_BADGES: &str = include_str!("../../data/stackoverflow_badges.json");

/// Parse a versioned JSON document; field errors carry their path.
pub fn from_json_reader<T: DeserializeOwned, R: Read>(input: R) -> Result<T> {
    let value: serde_json::Value = serde_json::from_reader(input)?;
    check_version(&value)?;
    from_json_value(value)
}

/// Parse an unversioned JSON config; field errors carry their path.
pub fn from_json_value<T: DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| Error::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn to_json_writer<T: Serialize, W: Write>(doc: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Fitted or generating parameters together with the model structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDocument {
    pub format_version: u64,
    pub config: ModelConfig,
    pub users: Vec<UserParams>,
}

impl ParamsDocument {
    pub fn new(config: ModelConfig, users: Vec<UserParams>) -> Self {
        ParamsDocument { format_version: FORMAT_VERSION, config, users }
    }

    pub fn num_tags(&self) -> usize {
        self.users.first().map_or(0, |u| u.alpha.len())
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        validate_all(&self.users, self.users.len(), self.num_tags())
    }
}

pub fn read_params<R: Read>(input: R) -> Result<ParamsDocument> {
    let doc: ParamsDocument = from_json_reader(input)?;
    doc.validate()?;
    Ok(doc)
}

pub fn load_params(path: &Path) -> Result<ParamsDocument> {
    read_params(super::open(path)?)
}

pub fn save_params(path: &Path, config: &ModelConfig, users: &[UserParams]) -> Result<()> {
    let doc = ParamsDocument::new(config.clone(), users.to_vec());
    to_json_writer(&doc, std::io::BufWriter::new(super::create(path)?))
}

/// A standalone badge specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BadgeFile {
    pub format_version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub decay_w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_cutoff: Option<f64>,
    pub badges: Vec<BadgeSpec>,
}

impl BadgeFile {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        BadgeFile {
            format_version: FORMAT_VERSION,
            note: None,
            decay_w: cfg.decay_w,
            cross_cutoff: Some(cfg.cross_cutoff),
            badges: cfg.badges_q.iter().chain(&cfg.badges_a).cloned().collect(),
        }
    }

    /// Split the badges by action into a model configuration.
    pub fn to_config(&self) -> Result<ModelConfig> {
        let (q, a): (Vec<BadgeSpec>, Vec<BadgeSpec>) =
            self.badges.iter().cloned().partition(|b| b.action == crate::model::Action::Question);
        let mut cfg = ModelConfig::new(q, a, self.decay_w);
        if let Some(c) = self.cross_cutoff {
            cfg.cross_cutoff = c;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn read_badges<R: Read>(input: R) -> Result<BadgeFile> {
    let file: BadgeFile = from_json_reader(input)?;
    file.to_config()?;
    Ok(file)
}

pub fn load_badges(path: &Path) -> Result<BadgeFile> {
    read_badges(super::open(path)?)
}

pub fn example_badges() -> BadgeFile {
    read_badges(EXAMPLE_BADGES.as_bytes()).expect("bundled badge file is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Action, KernelKind, ProgressFeature};

    fn doc() -> ParamsDocument {
        let cfg = ModelConfig::new(
            vec![BadgeSpec::new(Action::Question, 5.0, ProgressFeature::ActiveDays, KernelKind::Gaussian, 2.0)],
            vec![BadgeSpec::new(Action::Answer, 50.0, ProgressFeature::EventCount, KernelKind::Exponential, 0.1)],
            1.5,
        );
        let mut u = UserParams::uniform(3, 0.1 / 3.0, std::f64::consts::PI);
        u.rho_q = 1e-300;
        u.alpha = vec![0.2, 0.3, 0.5];
        ParamsDocument::new(cfg, vec![u.clone(), u])
    }

    #[test]
    fn params_round_trip() {
        let d = doc();
        let mut buf = Vec::new();
        to_json_writer(&d, &mut buf).unwrap();
        let back = read_params(&buf[..]).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn missing_field_names_its_path() {
        let mut v = serde_json::to_value(doc()).unwrap();
        v["users"][1].as_object_mut().unwrap().remove("mu_a");
        match read_params(v.to_string().as_bytes()) {
            Err(Error::Schema { path, message }) => {
                assert_eq!(path, "users[1]", "{message}");
                assert!(message.contains("mu_a"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let mut v = serde_json::to_value(doc()).unwrap();
        v["config"]["badges_q"][0].as_object_mut().unwrap().remove("threshold");
        match read_params(v.to_string().as_bytes()) {
            Err(Error::Schema { path, message }) => {
                assert!(path.starts_with("config.badges_q[0]"), "{path}");
                assert!(message.contains("threshold"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let mut v = serde_json::to_value(doc()).unwrap();
        v["format_version"] = 7.into();
        assert!(matches!(read_params(v.to_string().as_bytes()), Err(Error::UnsupportedVersion { found: 7, expected: 1 })));
    }

    #[test]
    fn example_badges_have_three_per_action() {
        let file = example_badges();
        let cfg = file.to_config().unwrap();
        assert_eq!(cfg.badges_q.len(), 3);
        assert_eq!(cfg.badges_a.len(), 3);
        let names: Vec<_> = file.badges.iter().map(|b| b.name.clone().unwrap()).collect();
        assert_eq!(names, ["Curious", "Inquisitive", "Socratic", "Explainer", "Refiner", "Illuminator"]);
        let thresholds: Vec<_> = file.badges.iter().map(|b| b.threshold).collect();
        assert_eq!(thresholds, [5.0, 30.0, 100.0, 1.0, 50.0, 500.0]);
        assert!(cfg.badges_q.iter().all(|b| b.feature == ProgressFeature::ActiveDays));
        assert!(cfg.badges_a.iter().all(|b| b.feature == ProgressFeature::EventCount));
    }

    #[test]
    fn badge_file_round_trip() {
        let cfg = doc().config;
        let file = BadgeFile::from_config(&cfg);
        let mut buf = Vec::new();
        to_json_writer(&file, &mut buf).unwrap();
        let back = read_badges(&buf[..]).unwrap();
        assert_eq!(back.to_config().unwrap(), cfg);
    }
}
