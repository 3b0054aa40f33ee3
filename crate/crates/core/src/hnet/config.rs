use serde::{Deserialize, Serialize};

use crate::brdf::FbetaMode;
use crate::error::{FuseError, Result};
use crate::ops::ConvVariant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Lite,
}

/// How HR G-buffers are brought down to the LR grid before fusion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    #[default]
    Unshuffle,
    AvgPool,
    MaxPool,
}

/// G-buffer features the network can consume.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GChannel {
    Fbeta,
    Albedo,
    Roughness,
    Ndotv,
    Normal,
    Emissive,
    Depth,
}

impl GChannel {
    pub fn width(self) -> usize {
        match self {
            GChannel::Fbeta | GChannel::Albedo | GChannel::Normal | GChannel::Emissive => 3,
            GChannel::Roughness | GChannel::Ndotv | GChannel::Depth => 1,
        }
    }
}

pub fn schema_width(channels: &[GChannel]) -> usize {
    channels.iter().map(|c| c.width()).sum()
}

pub fn default_gbuffer_schema() -> Vec<GChannel> {
    vec![
        GChannel::Fbeta,
        GChannel::Roughness,
        GChannel::Ndotv,
        GChannel::Normal,
        GChannel::Emissive,
    ]
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HNetConfig {
    pub r: usize,
    pub variant: Variant,
    /// Output channels of each encoder layer. `F_s` is the first, `F_i` the last.
    pub encoder_channels: Vec<usize>,
    pub fusion_blocks: usize,
    pub fusion_channels: usize,
    #[serde(default)]
    pub use_history: bool,
    #[serde(default)]
    pub history_frames: usize,
    #[serde(default = "default_gbuffer_schema")]
    pub g_lr_channels: Vec<GChannel>,
    /// Empty disables the HR branch entirely.
    #[serde(default = "default_gbuffer_schema")]
    pub g_hr_channels: Vec<GChannel>,
    #[serde(default)]
    pub alignment: Alignment,
    /// Predict demodulated radiance and remodulate with HR F_β.
    #[serde(default = "yes")]
    pub demodulate: bool,
    #[serde(default)]
    pub fbeta_mode: FbetaMode,
}

impl HNetConfig {
    pub fn full(r: usize) -> Self {
        HNetConfig {
            r,
            variant: Variant::Full,
            encoder_channels: vec![64, 64, 32, 24, 24, 32],
            fusion_blocks: 6,
            fusion_channels: 128,
            use_history: true,
            history_frames: 2,
            g_lr_channels: default_gbuffer_schema(),
            g_hr_channels: default_gbuffer_schema(),
            alignment: Alignment::Unshuffle,
            demodulate: true,
            fbeta_mode: FbetaMode::DiffuseSpecular,
        }
    }

    /// Halved fusion width, separable fusion convolutions, no history.
    pub fn lite(r: usize) -> Self {
        HNetConfig {
            variant: Variant::Lite,
            fusion_channels: 64,
            use_history: false,
            history_frames: 0,
            ..Self::full(r)
        }
    }

    /// Small network for desk-scale training runs.
    pub fn toy(r: usize) -> Self {
        HNetConfig {
            encoder_channels: vec![32, 24, 16],
            fusion_blocks: 2,
            fusion_channels: 32,
            use_history: false,
            history_frames: 0,
            ..Self::full(r)
        }
    }

    pub fn fusion_variant(&self) -> ConvVariant {
        match self.variant {
            Variant::Full => ConvVariant::Standard,
            Variant::Lite => ConvVariant::DepthwiseSeparable,
        }
    }

    pub fn skip_channels(&self) -> usize {
        self.encoder_channels[0]
    }

    pub fn encoder_out_channels(&self) -> usize {
        *self.encoder_channels.last().expect("validated non-empty encoder")
    }

    pub fn g_lr_width(&self) -> usize {
        schema_width(&self.g_lr_channels)
    }

    pub fn g_hr_width(&self) -> usize {
        schema_width(&self.g_hr_channels)
    }

    pub fn uses_hr(&self) -> bool {
        !self.g_hr_channels.is_empty()
    }

    /// Channels of one frame's encoder input: radiance plus LR G-buffer.
    pub fn frame_channels(&self) -> usize {
        3 + self.g_lr_width()
    }

    pub fn encoder_in_channels(&self) -> usize {
        self.frame_channels() * (1 + if self.use_history { self.history_frames } else { 0 })
    }

    /// Channels contributed by the aligned HR G-buffer.
    pub fn aligned_hr_channels(&self) -> usize {
        match self.alignment {
            Alignment::Unshuffle => self.g_hr_width() * self.r * self.r,
            Alignment::AvgPool | Alignment::MaxPool => self.g_hr_width(),
        }
    }

    pub fn fusion_in_channels(&self) -> usize {
        self.encoder_out_channels() + self.aligned_hr_channels()
    }

    /// Channels per HR pixel after the pixel shuffle, before the head.
    pub fn head_in_channels(&self) -> usize {
        (self.skip_channels() + self.fusion_channels) / (self.r * self.r)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FuseError::Config(m));
        if self.r == 0 {
            return bad("upscale factor r must be at least 1".into());
        }
        if self.encoder_channels.is_empty() || self.encoder_channels.contains(&0) {
            return bad(format!("encoder channels must be non-empty and positive, got {:?}", self.encoder_channels));
        }
        if self.fusion_channels == 0 {
            return bad("fusion_channels must be positive".into());
        }
        if self.g_lr_channels.is_empty() {
            return bad("g_lr_channels must not be empty".into());
        }
        match (self.use_history, self.history_frames) {
            (true, 2) | (false, 0) => {}
            (u, n) => return bad(format!("use_history={u} requires history_frames {}, got {n}", if u { 2 } else { 0 })),
        }
        if self.variant == Variant::Lite && self.use_history {
            return bad("lite variant does not reuse history".into());
        }
        let cat = self.skip_channels() + self.fusion_channels;
        if cat % (self.r * self.r) != 0 {
            return bad(format!(
                "skip ({}) + fusion ({}) channels must be divisible by r^2 = {}",
                self.skip_channels(),
                self.fusion_channels,
                self.r * self.r
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: HNetConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_for_paper_factors() {
        for r in [1, 2, 4, 8] {
            HNetConfig::full(r).validate().unwrap();
            HNetConfig::lite(r).validate().unwrap();
        }
        HNetConfig::toy(4).validate().unwrap();
    }

    #[test]
    fn hr_schema_fills_fusion_input() {
        let c = HNetConfig::full(4);
        assert_eq!(c.g_hr_width(), 11);
        assert_eq!(c.fusion_in_channels(), 32 + 11 * 16);
    }

    #[test]
    fn lite_with_history_rejected() {
        let c = HNetConfig {
            use_history: true,
            history_frames: 2,
            ..HNetConfig::lite(4)
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip_fills_defaults() {
        let c = HNetConfig::from_json(
            r#"{"r":4,"variant":"lite","encoder_channels":[16,16],"fusion_blocks":1,"fusion_channels":16}"#,
        )
        .unwrap();
        assert!(c.demodulate && c.g_hr_channels == default_gbuffer_schema());
        assert_eq!(HNetConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
