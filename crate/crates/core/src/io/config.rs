//! Plain-text `key = value` run configuration with `#` comments.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optim::TrainConfig;

/// First line written by [`RunConfig::to_text`].
pub const CONFIG_MAGIC: &str = "# splatprio config v1";

/// One `key = value` entry with its 1-based source line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits a config text into entries; `source` only labels errors.
pub fn parse_key_values(text: &str, source: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Text {
            path: source.to_string(),
            line: i + 1,
            message: format!("expected 'key = value', found '{line}'"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Text {
                path: source.to_string(),
                line: i + 1,
                message: "empty key".into(),
            });
        }
        out.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

/// Pipeline switches mirroring the ablation axes: staged pruning (SP),
/// stochastic dropout (SD), semantic pruning and regularization (SPR) and
/// priority-driven rendering (PDR).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Toggles {
    pub sp: bool,
    pub sd: bool,
    pub spr: bool,
    pub pdr: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self {
            sp: false,
            sd: false,
            spr: true,
            pdr: true,
        }
    }
}

impl Toggles {
    /// Sets one toggle from `NAME=on|off`.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (name, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("toggle '{assignment}' is not NAME=on|off")))?;
        let on = parse_switch(value.trim())?;
        match name.trim().to_ascii_uppercase().as_str() {
            "SP" => self.sp = on,
            "SD" => self.sd = on,
            "SPR" => self.spr = on,
            "PDR" => self.pdr = on,
            other => return Err(Error::Config(format!("unknown toggle '{other}'"))),
        }
        Ok(())
    }

    /// SPR already contains pruning and dropout, so it cannot be combined
    /// with SP or SD.
    pub fn validate(&self) -> Result<()> {
        if self.spr && (self.sp || self.sd) {
            return Err(Error::Config("SPR supersedes SP and SD; turn SPR off to use them".into()));
        }
        Ok(())
    }

    /// Derives the training switches these toggles imply.
    pub fn apply(&self, base: &TrainConfig) -> Result<TrainConfig> {
        self.validate()?;
        let mut cfg = base.clone();
        if self.spr {
            cfg.pruning = true;
            cfg.dropout = true;
            cfg.semantic_dropout = true;
        } else {
            cfg.pruning = self.sp;
            if self.sp {
                cfg.alpha = 0.0;
            }
            cfg.dropout = self.sd;
            cfg.semantic_dropout = false;
        }
        Ok(cfg)
    }
}

impl fmt::Display for Toggles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |b: bool| if b { "on" } else { "off" };
        write!(f, "SP={} SD={} SPR={} PDR={}", s(self.sp), s(self.sd), s(self.spr), s(self.pdr))
    }
}

fn parse_switch(v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("expected on/off, found '{v}'"))),
    }
}

/// Training parameters plus file locations, render size and toggles.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Dataset directory as written by `save_dataset`.
    pub scene: Option<PathBuf>,
    pub ply_in: Option<PathBuf>,
    pub ply_out: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Overrides the view resolution when rendering.
    pub render_width: Option<usize>,
    pub render_height: Option<usize>,
    pub toggles: Toggles,
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        for e in parse_key_values(&text, &path.display().to_string())? {
            cfg.set(&e.key, &e.value).map_err(|err| Error::Text {
                path: path.display().to_string(),
                line: e.line,
                message: err.to_string(),
            })?;
        }
        Ok(cfg)
    }

    /// Applies one setting by key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "alpha" => t.alpha = num(key, v)?,
            "beta" => t.beta = num(key, v)?,
            "gamma" => t.gamma = num(key, v)?,
            "iterations" => t.iterations = num(key, v)?,
            "schedule_scale" => t.schedule_scale = num(key, v)?,
            "densify_milestones" => {
                t.densify_milestones = v
                    .split(',')
                    .map(|m| num(key, m.trim()))
                    .collect::<Result<_>>()?
            }
            "densify_prune_rate" => t.densify_prune_rate = num(key, v)?,
            "finetune_start" => t.finetune_start = num(key, v)?,
            "finetune_interval" => t.finetune_interval = num(key, v)?,
            "finetune_prune_rate" => t.finetune_prune_rate = num(key, v)?,
            "lambda_dssim" => t.lambda_dssim = num(key, v)?,
            "seed" => t.seed = num(key, v)?,
            "lr.position" => t.lr.position = num(key, v)?,
            "lr.position_final" => t.lr.position_final = num(key, v)?,
            "lr.sh" => t.lr.sh = num(key, v)?,
            "lr.opacity" => t.lr.opacity = num(key, v)?,
            "lr.scale" => t.lr.scale = num(key, v)?,
            "lr.rotation" => t.lr.rotation = num(key, v)?,
            "lr.pose" => t.lr.pose = num(key, v)?,
            "densify.grad_threshold" => t.densify.grad_threshold = num(key, v)?,
            "densify.split_scale" => t.densify.split_scale = num(key, v)?,
            "densify.max_gaussians" => t.densify.max_gaussians = num(key, v)?,
            "scene" => self.scene = Some(v.into()),
            "ply_in" => self.ply_in = Some(v.into()),
            "ply_out" => self.ply_out = Some(v.into()),
            "out" => self.out = Some(v.into()),
            "render_width" => self.render_width = Some(num(key, v)?),
            "render_height" => self.render_height = Some(num(key, v)?),
            "SP" | "SD" | "SPR" | "PDR" => self.toggles.set(&format!("{key}={v}"))?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Training configuration after toggles, validated.
    pub fn effective_train(&self) -> Result<TrainConfig> {
        let cfg = self.toggles.apply(&self.train)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let t = &self.train;
        let milestones: Vec<String> = t.densify_milestones.iter().map(|m| m.to_string()).collect();
        let mut s = format!("{CONFIG_MAGIC}\n");
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("alpha", t.alpha.to_string());
        kv("beta", t.beta.to_string());
        kv("gamma", t.gamma.to_string());
        kv("iterations", t.iterations.to_string());
        kv("schedule_scale", t.schedule_scale.to_string());
        kv("densify_milestones", milestones.join(","));
        kv("densify_prune_rate", t.densify_prune_rate.to_string());
        kv("finetune_start", t.finetune_start.to_string());
        kv("finetune_interval", t.finetune_interval.to_string());
        kv("finetune_prune_rate", t.finetune_prune_rate.to_string());
        kv("lambda_dssim", t.lambda_dssim.to_string());
        kv("seed", t.seed.to_string());
        kv("lr.position", t.lr.position.to_string());
        kv("lr.position_final", t.lr.position_final.to_string());
        kv("lr.sh", t.lr.sh.to_string());
        kv("lr.opacity", t.lr.opacity.to_string());
        kv("lr.scale", t.lr.scale.to_string());
        kv("lr.rotation", t.lr.rotation.to_string());
        kv("lr.pose", t.lr.pose.to_string());
        kv("densify.grad_threshold", t.densify.grad_threshold.to_string());
        kv("densify.split_scale", t.densify.split_scale.to_string());
        kv("densify.max_gaussians", t.densify.max_gaussians.to_string());
        for (k, p) in [("scene", &self.scene), ("ply_in", &self.ply_in), ("ply_out", &self.ply_out), ("out", &self.out)] {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        for (k, v) in [("render_width", self.render_width), ("render_height", self.render_height)] {
            if let Some(v) = v {
                kv(k, v.to_string());
            }
        }
        let on = |b: bool| if b { "on" } else { "off" }.to_string();
        kv("SP", on(self.toggles.sp));
        kv("SD", on(self.toggles.sd));
        kv("SPR", on(self.toggles.spr));
        kv("PDR", on(self.toggles.pdr));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let e = parse_key_values("# top\n\nalpha = 0.3 # inline\n  seed=4\n", "t").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].key.as_str(), e[0].value.as_str(), e[0].line), ("alpha", "0.3", 3));
        assert_eq!((e[1].key.as_str(), e[1].value.as_str()), ("seed", "4"));
        assert!(matches!(parse_key_values("oops\n", "t"), Err(Error::Text { line: 1, .. })));
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.set("alpha", "0.25").unwrap();
        c.set("densify_milestones", "100, 200").unwrap();
        c.set("out", "runs/a").unwrap();
        c.set("SPR", "off").unwrap();
        c.set("SP", "on").unwrap();
        let mut back = RunConfig::default();
        for e in parse_key_values(&c.to_text(), "t").unwrap() {
            back.set(&e.key, &e.value).unwrap();
        }
        assert_eq!(back, c);
    }

    #[test]
    fn toggles_map_to_training_switches() {
        let base = TrainConfig::default();
        let spr = Toggles::default().apply(&base).unwrap();
        assert!(spr.pruning && spr.dropout && spr.semantic_dropout);
        assert_eq!(spr.alpha, base.alpha);

        let mut t = Toggles::default();
        t.set("SPR=off").unwrap();
        t.set("SP=on").unwrap();
        t.set("SD=on").unwrap();
        let baseline = t.apply(&base).unwrap();
        assert!(baseline.pruning && baseline.dropout);
        assert_eq!(baseline.alpha, 0.0);
        assert_eq!(baseline.effective_beta(), 0.0);

        let mut bad = Toggles::default();
        bad.set("SP=on").unwrap();
        assert!(bad.validate().is_err());
        assert!(Toggles::default().set("XY=on").is_err());
        assert!(Toggles::default().set("SP=maybe").is_err());
    }
}
