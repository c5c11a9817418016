//! `key = value` model configuration files.
//!
//! ```text
//! # comments run to end of line
//! preset = tiny          # optional, must come before any other key
//! input_size = 320
//! rgb.channels = 16, 32, 48, 64
//! use_eem = false
//! ```
//!
//! Keys not listed in [`KEYS`] are rejected, as are repeated keys.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use tanet_core::config::{ModelConfig, Preset};

use crate::error::{Error, Result};

pub const KEYS: [&str; 19] = [
    "preset",
    "input_size",
    "seed",
    "use_cmffm",
    "use_eem",
    "rgb.channels",
    "rgb.depths",
    "rgb.heads",
    "rgb.sr_ratios",
    "rgb.mlp_ratios",
    "depth.base_channels",
    "depth.adjust_channels",
    "depth.expansion",
    "depth.channels",
    "depth.strides",
    "rfeb_heads",
    "rfeb_mlp_ratio",
    "gate_reduction",
    "decoder_width",
];

fn scalar<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(line, format!("`{key}`: cannot parse `{v}`")))
}

fn four(line: usize, key: &str, v: &str) -> Result<[usize; 4]> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(Error::config(line, format!("`{key}` needs 4 comma-separated values, got {}", parts.len())));
    }
    let mut out = [0; 4];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = scalar(line, key, p)?;
    }
    Ok(out)
}

fn flag(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::config(line, format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

/// Parse config text starting from the tiny preset (or the preset named on
/// the first setting line) and validate the result.
pub fn parse(text: &str) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::tiny();
    let mut seen = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::config(line, format!("expected `key = value`, got `{body}`")))?;
        if !KEYS.contains(&key) {
            return Err(Error::config(line, format!("unknown key `{key}`")));
        }
        if !seen.insert(key.to_owned()) {
            return Err(Error::config(line, format!("`{key}` set twice")));
        }
        match key {
            "preset" => {
                if seen.len() > 1 {
                    return Err(Error::config(line, "`preset` must come before other keys"));
                }
                let p = Preset::parse(value).map_err(|e| Error::config(line, e.to_string()))?;
                cfg = ModelConfig::preset(p);
            }
            "input_size" => cfg.input_size = scalar(line, key, value)?,
            "seed" => cfg.seed = scalar(line, key, value)?,
            "use_cmffm" => cfg.use_cmffm = flag(line, key, value)?,
            "use_eem" => cfg.use_eem = flag(line, key, value)?,
            "rgb.channels" => cfg.rgb.channels = four(line, key, value)?,
            "rgb.depths" => cfg.rgb.depths = four(line, key, value)?,
            "rgb.heads" => cfg.rgb.heads = four(line, key, value)?,
            "rgb.sr_ratios" => cfg.rgb.sr_ratios = four(line, key, value)?,
            "rgb.mlp_ratios" => cfg.rgb.mlp_ratios = four(line, key, value)?,
            "depth.base_channels" => cfg.depth.base_channels = scalar(line, key, value)?,
            "depth.adjust_channels" => cfg.depth.adjust_channels = scalar(line, key, value)?,
            "depth.expansion" => cfg.depth.expansion = scalar(line, key, value)?,
            "depth.channels" => cfg.depth.channels = four(line, key, value)?,
            "depth.strides" => cfg.depth.strides = four(line, key, value)?,
            "rfeb_heads" => cfg.rfeb_heads = four(line, key, value)?,
            "rfeb_mlp_ratio" => cfg.rfeb_mlp_ratio = scalar(line, key, value)?,
            "gate_reduction" => cfg.gate_reduction = scalar(line, key, value)?,
            "decoder_width" => cfg.decoder_width = scalar(line, key, value)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

fn join(v: &[usize; 4]) -> String {
    format!("{}, {}, {}, {}", v[0], v[1], v[2], v[3])
}

/// Render every field; `parse(&render(c))` gives back `c`.
pub fn render(c: &ModelConfig) -> String {
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    put("preset", c.preset.name().into());
    put("input_size", c.input_size.to_string());
    put("seed", c.seed.to_string());
    put("use_cmffm", c.use_cmffm.to_string());
    put("use_eem", c.use_eem.to_string());
    put("rgb.channels", join(&c.rgb.channels));
    put("rgb.depths", join(&c.rgb.depths));
    put("rgb.heads", join(&c.rgb.heads));
    put("rgb.sr_ratios", join(&c.rgb.sr_ratios));
    put("rgb.mlp_ratios", join(&c.rgb.mlp_ratios));
    put("depth.base_channels", c.depth.base_channels.to_string());
    put("depth.adjust_channels", c.depth.adjust_channels.to_string());
    put("depth.expansion", c.depth.expansion.to_string());
    put("depth.channels", join(&c.depth.channels));
    put("depth.strides", join(&c.depth.strides));
    put("rfeb_heads", join(&c.rfeb_heads));
    put("rfeb_mlp_ratio", c.rfeb_mlp_ratio.to_string());
    put("gate_reduction", c.gate_reduction.to_string());
    put("decoder_width", c.decoder_width.to_string());
    s
}
