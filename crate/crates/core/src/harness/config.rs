//! Run configuration: defaults, `key = value` config text, and the
//! ordered echo used by report files.

use crate::harness::shapes::TargetShape;
use crate::harness::visibility::VisibilitySpec;
use crate::objective::FitObjectiveConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub shape: TargetShape,
    pub visibility: VisibilitySpec,
    pub objective: FitObjectiveConfig,
    /// Feature plane resolution N (both triplanes).
    pub plane_resolution: usize,
    /// Feature channels C per plane.
    pub channels: usize,
    /// Decoder hidden width.
    pub hidden: usize,
    /// Tetrahedral grid resolution for mesh extraction.
    pub tet_resolution: usize,
    /// Surface samples per cloud when evaluating chamfer.
    pub eval_samples: usize,
    pub use_vsa: bool,
    pub use_tex_sym: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            shape: TargetShape::CapsuleChair,
            visibility: VisibilitySpec::full(),
            objective: FitObjectiveConfig::default(),
            plane_resolution: 32,
            channels: 16,
            hidden: 64,
            tet_resolution: 32,
            eval_samples: 4096,
            use_vsa: true,
            use_tex_sym: true,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::InvalidInput(format!("bad boolean {other:?} for {key}"))),
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "shape" => self.shape = TargetShape::from_name(value.trim())?,
            "azimuth_range" => {
                let (a, b) = VisibilitySpec::parse_range(value)?;
                self.visibility = VisibilitySpec::new(a, b, self.visibility.mirror_augment)?;
            }
            "mirror_augment" => {
                let mirror = parse_bool(key, value)?;
                self.visibility = VisibilitySpec::new(
                    self.visibility.min_deg(),
                    self.visibility.max_deg(),
                    mirror,
                )?;
            }
            "alpha" => self.objective.alpha = parse(key, value)?,
            "beta" => self.objective.beta = parse(key, value)?,
            "samples_per_step" => self.objective.samples_per_step = parse(key, value)?,
            "learning_rate" => self.objective.learning_rate = parse(key, value)?,
            "steps" => self.objective.steps = parse(key, value)?,
            "seed" => self.objective.seed = parse(key, value)?,
            "plane_resolution" => self.plane_resolution = parse(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "tet_resolution" => self.tet_resolution = parse(key, value)?,
            "eval_samples" => self.eval_samples = parse(key, value)?,
            "use_vsa" => self.use_vsa = parse_bool(key, value)?,
            "use_tex_sym" => self.use_tex_sym = parse_bool(key, value)?,
            other => {
                return Err(Error::InvalidInput(format!("unknown config key {other:?}")))
            }
        }
        Ok(())
    }

    /// Applies a whole config text: one `key = value` per line, with
    /// blank lines and `#` comments ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("config line {}: expected key = value", lineno + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        if self.plane_resolution < 2 {
            return Err(Error::InvalidInput("plane_resolution must be >= 2".into()));
        }
        if self.channels == 0 || self.hidden == 0 {
            return Err(Error::InvalidInput("channels and hidden must be positive".into()));
        }
        if self.tet_resolution == 0 {
            return Err(Error::InvalidInput("tet_resolution must be >= 1".into()));
        }
        if self.eval_samples == 0 {
            return Err(Error::InvalidInput("eval_samples must be positive".into()));
        }
        Ok(())
    }

    /// Ordered key/value pairs echoed into reports; values use the same
    /// spellings `set` accepts.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        vec![
            ("shape", self.shape.name().to_string()),
            (
                "azimuth_range",
                format!("{}:{}", self.visibility.min_deg(), self.visibility.max_deg()),
            ),
            ("mirror_augment", self.visibility.mirror_augment.to_string()),
            ("alpha", self.objective.alpha.to_string()),
            ("beta", self.objective.beta.to_string()),
            ("samples_per_step", self.objective.samples_per_step.to_string()),
            ("learning_rate", self.objective.learning_rate.to_string()),
            ("steps", self.objective.steps.to_string()),
            ("seed", self.objective.seed.to_string()),
            ("plane_resolution", self.plane_resolution.to_string()),
            ("channels", self.channels.to_string()),
            ("hidden", self.hidden.to_string()),
            ("tet_resolution", self.tet_resolution.to_string()),
            ("eval_samples", self.eval_samples.to_string()),
            ("use_vsa", self.use_vsa.to_string()),
            ("use_tex_sym", self.use_tex_sym.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.objective.alpha, 100.0);
        assert_eq!(cfg.objective.beta, 10.0);
        assert_eq!(cfg.plane_resolution, 32);
        assert!(cfg.visibility.is_full());
    }

    #[test]
    fn config_text_overrides_defaults() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "# fitting setup\n\
             shape = winged\n\
             azimuth_range = 0:120\n\
             mirror_augment = true  # like S2\n\
             alpha = 50\n\
             steps = 10\n\
             use_vsa = false\n\
             \n\
             eval_samples = 128\n",
        )
        .unwrap();
        assert_eq!(cfg.shape, TargetShape::Winged);
        assert_eq!(cfg.visibility.min_deg(), 0.0);
        assert_eq!(cfg.visibility.max_deg(), 120.0);
        assert!(cfg.visibility.mirror_augment);
        assert_eq!(cfg.objective.alpha, 50.0);
        assert_eq!(cfg.objective.steps, 10);
        assert!(!cfg.use_vsa);
        assert_eq!(cfg.eval_samples, 128);
    }

    #[test]
    fn bad_config_lines_are_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_text("unknown_key = 3").is_err());
        assert!(cfg.apply_text("steps ten").is_err());
        assert!(cfg.apply_text("steps = ten").is_err());
        assert!(cfg.apply_text("use_vsa = maybe").is_err());
        assert!(cfg.apply_text("azimuth_range = 10:370").is_err());
        assert!(cfg.apply_text("steps = 0").is_err());
    }

    #[test]
    fn echo_round_trips_through_set() {
        let mut cfg = RunConfig::default();
        cfg.set("shape", "sphere").unwrap();
        cfg.set("azimuth_range", "0:180").unwrap();
        cfg.set("mirror_augment", "true").unwrap();
        cfg.set("alpha", "12.5").unwrap();
        let mut rebuilt = RunConfig::default();
        for (k, v) in cfg.echo() {
            rebuilt.set(k, &v).unwrap();
        }
        assert_eq!(rebuilt, cfg);
    }
}
