use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SeldError};

/// Which time-dimension augmentations the pipeline runs alongside mixup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AugmentMode {
    /// Frame shift + moderate mixup.
    #[default]
    FsMm,
    /// Time masking + moderate mixup.
    TmMm,
    /// Frame shift, time masking and moderate mixup together.
    All,
    /// Every stage runs according to its own probability.
    Custom,
}

impl AugmentMode {
    pub fn uses_frame_shift(self) -> bool {
        !matches!(self, AugmentMode::TmMm)
    }

    pub fn uses_time_mask(self) -> bool {
        !matches!(self, AugmentMode::FsMm)
    }
}

impl FromStr for AugmentMode {
    type Err = SeldError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fs+mm" | "fs_mm" | "fsmm" => Ok(AugmentMode::FsMm),
            "tm+mm" | "tm_mm" | "tmmm" => Ok(AugmentMode::TmMm),
            "all" => Ok(AugmentMode::All),
            "custom" => Ok(AugmentMode::Custom),
            other => Err(SeldError::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for AugmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AugmentMode::FsMm => "fs+mm",
            AugmentMode::TmMm => "tm+mm",
            AugmentMode::All => "all",
            AugmentMode::Custom => "custom",
        })
    }
}

/// Probabilities and ranges for [`augment_pipeline`](super::augment_pipeline).
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub cs_prob: f64,
    /// Maximum absolute frequency shift in bins.
    pub ps_range: usize,
    pub fs_prob: f64,
    pub tm_prob: f64,
    pub tm_ratio_min: f64,
    pub tm_ratio_max: f64,
    pub mm_prob: f64,
    pub mm_beta_alpha: f64,
    pub mode: AugmentMode,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            cs_prob: 0.5,
            ps_range: 10,
            fs_prob: 0.5,
            tm_prob: 0.5,
            tm_ratio_min: 1.0 / 20.0,
            tm_ratio_max: 1.0 / 10.0,
            mm_prob: 0.5,
            mm_beta_alpha: 0.2,
            mode: AugmentMode::FsMm,
        }
    }
}

/// Keys accepted in config files and as overrides.
pub const CONFIG_KEYS: [&str; 10] = [
    "cs_prob",
    "ps_range",
    "fs_prob",
    "tm_prob",
    "tm_ratio_min",
    "tm_ratio_max",
    "mm_prob",
    "mm_beta_alpha",
    "mode",
    "seed",
];

impl AugmentConfig {
    /// Every stage disabled.
    pub fn identity() -> Self {
        Self {
            cs_prob: 0.0,
            ps_range: 0,
            fs_prob: 0.0,
            tm_prob: 0.0,
            mm_prob: 0.0,
            mode: AugmentMode::Custom,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("cs_prob", self.cs_prob),
            ("fs_prob", self.fs_prob),
            ("tm_prob", self.tm_prob),
            ("mm_prob", self.mm_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SeldError::InvalidConfig(format!("{name} = {p} not in [0, 1]")));
            }
        }
        if !(self.tm_ratio_min > 0.0
            && self.tm_ratio_min <= self.tm_ratio_max
            && self.tm_ratio_max < 1.0)
        {
            return Err(SeldError::InvalidConfig(format!(
                "mask ratio range [{}, {}] must satisfy 0 < min <= max < 1",
                self.tm_ratio_min, self.tm_ratio_max
            )));
        }
        if !(self.mm_beta_alpha > 0.0 && self.mm_beta_alpha.is_finite()) {
            return Err(SeldError::InvalidConfig(format!(
                "mm_beta_alpha = {} must be > 0",
                self.mm_beta_alpha
            )));
        }
        Ok(())
    }

    pub fn frame_shift_active(&self) -> bool {
        self.mode.uses_frame_shift() && self.fs_prob > 0.0
    }

    pub fn time_mask_active(&self) -> bool {
        self.mode.uses_time_mask() && self.tm_prob > 0.0
    }

    /// Human-readable warnings about combinations known to hurt accuracy.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.mode == AugmentMode::All
            || (self.frame_shift_active() && self.time_mask_active())
        {
            out.push(
                "warning: frame shift and time masking are both enabled; combining both \
                 time-dimension augmentations with mixup tends to over-transform the data \
                 and degrade accuracy"
                    .to_string(),
            );
        }
        out
    }

    /// Sets one key. `seed` is not part of the augmentation config and is
    /// returned to the caller.
    pub fn set(&mut self, key: &str, value: &str) -> Result<Option<u64>> {
        let bad = |what: &str| SeldError::InvalidConfig(format!("{key}: cannot parse {value:?} as {what}"));
        let float = || value.trim().parse::<f64>().map_err(|_| bad("a number"));
        match key.trim() {
            "cs_prob" => self.cs_prob = float()?,
            "ps_range" => self.ps_range = value.trim().parse().map_err(|_| bad("a bin count"))?,
            "fs_prob" => self.fs_prob = float()?,
            "tm_prob" => self.tm_prob = float()?,
            "tm_ratio_min" => self.tm_ratio_min = float()?,
            "tm_ratio_max" => self.tm_ratio_max = float()?,
            "mm_prob" => self.mm_prob = float()?,
            "mm_beta_alpha" => self.mm_beta_alpha = float()?,
            "mode" => self.mode = value.parse()?,
            "seed" => return Ok(Some(value.trim().parse().map_err(|_| bad("a u64 seed"))?)),
            other => return Err(SeldError::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(None)
    }

    /// Parses a flat `key=value` file on top of the defaults. Blank lines and
    /// `#` comments are ignored. Returns the config and the seed, if given.
    pub fn parse(text: &str) -> Result<(Self, Option<u64>)> {
        let mut config = Self::default();
        let mut seed = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| SeldError::MalformedRow {
                line: idx + 1,
                reason: "expected key=value".into(),
            })?;
            if let Some(s) = config.set(key, value)? {
                seed = Some(s);
            }
        }
        config.validate()?;
        Ok((config, seed))
    }

    pub fn to_kv(&self, seed: Option<u64>) -> String {
        let mut out = format!(
            "cs_prob={}\nps_range={}\nfs_prob={}\ntm_prob={}\ntm_ratio_min={}\ntm_ratio_max={}\nmm_prob={}\nmm_beta_alpha={}\nmode={}\n",
            self.cs_prob,
            self.ps_range,
            self.fs_prob,
            self.tm_prob,
            self.tm_ratio_min,
            self.tm_ratio_max,
            self.mm_prob,
            self.mm_beta_alpha,
            self.mode
        );
        if let Some(seed) = seed {
            out.push_str(&format!("seed={seed}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = AugmentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.cs_prob, 0.5);
        assert_eq!(c.ps_range, 10);
        assert_eq!(c.fs_prob, 0.5);
        assert_eq!(c.mm_prob, 0.5);
        assert_eq!((c.tm_ratio_min, c.tm_ratio_max), (0.05, 0.1));
        assert!(c.warnings().is_empty());
        AugmentConfig::identity().validate().unwrap();
    }

    #[test]
    fn parse_and_round_trip() {
        let (c, seed) = AugmentConfig::parse(
            "# best TM + MM\nmode = tm+mm\ntm_prob=0.7\nps_range=4\nseed=99\n",
        )
        .unwrap();
        assert_eq!(c.mode, AugmentMode::TmMm);
        assert_eq!(c.tm_prob, 0.7);
        assert_eq!(c.ps_range, 4);
        assert_eq!(seed, Some(99));
        assert_eq!(AugmentConfig::parse(&c.to_kv(seed)).unwrap(), (c, seed));
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(AugmentConfig::parse("cs_prob=1.5").is_err());
        assert!(AugmentConfig::parse("bogus=1").is_err());
        assert!(AugmentConfig::parse("mode=everything").is_err());
        assert!(AugmentConfig::parse("tm_ratio_min=0.2\ntm_ratio_max=0.1").is_err());
        assert!(AugmentConfig::parse("mm_beta_alpha=0").is_err());
        assert!(AugmentConfig::parse("cs_prob").is_err());
    }

    #[test]
    fn all_mode_warns() {
        let c = AugmentConfig {
            mode: AugmentMode::All,
            ..AugmentConfig::default()
        };
        assert_eq!(c.warnings().len(), 1);
        let custom = AugmentConfig {
            mode: AugmentMode::Custom,
            ..AugmentConfig::default()
        };
        assert_eq!(custom.warnings().len(), 1);
        let custom_fs_only = AugmentConfig {
            tm_prob: 0.0,
            ..custom
        };
        assert!(custom_fs_only.warnings().is_empty());
    }
}
