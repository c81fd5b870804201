//! Scenario configuration.
//!
//! The file format is flat `key = value` lines grouped under `[section]`
//! headers; `#` starts a comment. Every key is optional and falls back to
//! the built-in default scenario (10 Mbps uplink, 30 ms one-way delay,
//! 1,400-byte packets, adaptive frame rate for a 2 FPS MLLM). See
//! `scenarios/default.conf` for the annotated full list.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::allocator::{CorrelationMap, RateModelParams, SemanticAllocator, DEFAULT_GAMMA, DEFAULT_PATCH_SIZE};
use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::mapfile;
use crate::netem::{LinkConfig, LossModel};
use crate::transport::{SamplerConfig, SubstituteWindow, DEFAULT_MTU_PAYLOAD_BITS};

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("scenario", &["id", "duration_s", "tail_s", "seeds"]),
    (
        "link",
        &[
            "bandwidth_mbps",
            "one_way_delay_ms",
            "loss_model",
            "loss",
            "ge_p_good_to_bad",
            "ge_p_bad_to_good",
            "ge_loss_in_bad",
            "queue_cap_bytes",
            "feedback_delay_ms",
            "feedback_loss",
        ],
    ),
    (
        "transport",
        &["mtu_payload_bytes", "nack_delay_ms", "suppress_skipped_retransmissions"],
    ),
    (
        "controller",
        &["mode", "fixed_rate", "epsilon", "r_max", "alpha", "epoch_ms", "initial_loss"],
    ),
    ("sampler", &["mllm_rate", "grace_ms", "substitute_window"]),
    ("video", &["source", "bitrate_kbps", "width", "height"]),
    (
        "allocator",
        &[
            "gamma",
            "patch_size",
            "ref_bits_per_patch",
            "ref_qp",
            "halving_step",
            "correlation",
            "rho",
            "map_file",
        ],
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub enum RatePolicy {
    Adaptive(ControllerConfig),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationSource {
    /// No chat context: neutral ρ = 0 everywhere, flagged as a fallback.
    None,
    Uniform(f64),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum VideoSource {
    /// Frame size from the allocator's budget.
    Allocator,
    /// Constant bitrate split evenly over the frames.
    Bitrate { kbps: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocatorSettings {
    pub gamma: f64,
    pub patch_size: u16,
    pub params: RateModelParams,
    pub correlation: CorrelationSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub duration_s: f64,
    pub tail_s: f64,
    pub seeds: Vec<u64>,
    pub link: LinkConfig,
    pub feedback_delay_ms: f64,
    pub feedback_loss: f64,
    pub mtu_payload_bits: f64,
    pub nack_delay_ms: f64,
    pub suppress_skipped_retransmissions: bool,
    pub rate: RatePolicy,
    pub sampler: SamplerConfig,
    pub video: VideoSource,
    pub width: u32,
    pub height: u32,
    pub allocator: AllocatorSettings,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::parse("", Path::new(".")).expect("built-in defaults are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Bitrate,
    Loss,
    FrameRate,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bitrate" => Ok(SweepAxis::Bitrate),
            "loss" => Ok(SweepAxis::Loss),
            "frame_rate" => Ok(SweepAxis::FrameRate),
            other => Err(Error::param(
                "axis",
                format!("unknown axis `{other}` (expected bitrate, loss or frame_rate)"),
            )),
        }
    }
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Bitrate => "bitrate",
            SweepAxis::Loss => "loss",
            SweepAxis::FrameRate => "frame_rate",
        }
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative map paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let doc = Doc::parse(text)?;
        let one_way = doc.f64_or("link", "one_way_delay_ms", 30.0)?;
        let feedback_delay_ms = doc.f64_auto("link", "feedback_delay_ms", one_way)?;
        let rtt = one_way + feedback_delay_ms;

        let loss_p = doc.f64_or("link", "loss", 0.0)?;
        let loss = match doc.str_or("link", "loss_model", "bernoulli").1 {
            "bernoulli" | "iid" => LossModel::Bernoulli { p: loss_p },
            "gilbert_elliott" => LossModel::GilbertElliott {
                p: loss_p,
                p_good_to_bad: doc.f64_or("link", "ge_p_good_to_bad", 0.0)?,
                p_bad_to_good: doc.f64_or("link", "ge_p_bad_to_good", 1.0)?,
                loss_in_bad: doc.f64_or("link", "ge_loss_in_bad", 1.0)?,
            },
            other => return Err(doc.error("link", "loss_model", format!("unknown model `{other}`"))),
        };
        let queue_cap_bits = match doc.str_or("link", "queue_cap_bytes", "unbounded").1 {
            "unbounded" => None,
            _ => Some(doc.f64_or("link", "queue_cap_bytes", 0.0)? * 8.0),
        };
        let link = LinkConfig {
            bandwidth_bps: doc.f64_or("link", "bandwidth_mbps", 10.0)? * 1e6,
            one_way_delay_ms: one_way,
            loss,
            queue_cap_bits,
            seed: 0,
        };
        link.validate().map_err(|e| {
            let key = match &e {
                Error::InvalidParameter { name, .. } => match *name {
                    "bandwidth" => "bandwidth_mbps",
                    "queue_cap" => "queue_cap_bytes",
                    "p_good_to_bad" => "ge_p_good_to_bad",
                    "p_bad_to_good" => "ge_p_bad_to_good",
                    "loss_in_bad" => "ge_loss_in_bad",
                    other => other,
                },
                _ => "",
            };
            doc.error("link", key, e.to_string())
        })?;

        let mllm_rate = doc.f64_or("sampler", "mllm_rate", 2.0)?;
        let rate = match doc.str_or("controller", "mode", "adaptive").1 {
            "adaptive" => {
                let cfg = ControllerConfig {
                    mllm_rate,
                    epsilon: doc.f64_or("controller", "epsilon", 0.001)?,
                    r_max: doc.f64_or("controller", "r_max", 30.0)?,
                    alpha: doc.f64_or("controller", "alpha", 0.3)?,
                    epoch_ms: doc.f64_or("controller", "epoch_ms", 1000.0)?,
                    initial_loss: doc.f64_or("controller", "initial_loss", 0.0)?,
                    initial_kappa: 1.0,
                };
                cfg.validate().map_err(|e| {
                    let (section, key) = match &e {
                        Error::InvalidParameter { name: "mllm_rate", .. } => ("sampler", "mllm_rate"),
                        Error::InvalidParameter { name, .. } => ("controller", *name),
                        _ => ("controller", ""),
                    };
                    doc.error(section, key, e.to_string())
                })?;
                RatePolicy::Adaptive(cfg)
            }
            "fixed" => {
                let r = doc.f64_or("controller", "fixed_rate", mllm_rate)?;
                if !(r.is_finite() && r > 0.0) {
                    return Err(doc.error("controller", "fixed_rate", "must be a positive rate"));
                }
                RatePolicy::Fixed(r)
            }
            other => {
                return Err(doc.error(
                    "controller",
                    "mode",
                    format!("unknown mode `{other}` (expected adaptive or fixed)"),
                ))
            }
        };

        let window = match doc.str_or("sampler", "substitute_window", "group").1 {
            "group" => SubstituteWindow::Group,
            "any" => SubstituteWindow::Any,
            other => {
                return Err(doc.error(
                    "sampler",
                    "substitute_window",
                    format!("unknown window `{other}` (expected group or any)"),
                ))
            }
        };
        let grace_ms = doc.f64_or("sampler", "grace_ms", 0.0)?;
        let sampler = SamplerConfig::new(mllm_rate, grace_ms, window)
            .map_err(|e| doc.error("sampler", "", e.to_string()))?;

        let video = match doc.str_or("video", "source", "allocator").1 {
            "allocator" => VideoSource::Allocator,
            "bitrate" => {
                let kbps = doc.f64_or("video", "bitrate_kbps", 2000.0)?;
                if !(kbps.is_finite() && kbps > 0.0) {
                    return Err(doc.error("video", "bitrate_kbps", "must be positive"));
                }
                VideoSource::Bitrate { kbps }
            }
            other => {
                return Err(doc.error(
                    "video",
                    "source",
                    format!("unknown source `{other}` (expected allocator or bitrate)"),
                ))
            }
        };

        let correlation = match doc.str_or("allocator", "correlation", "none").1 {
            "none" => CorrelationSource::None,
            "uniform" => CorrelationSource::Uniform(doc.f64_or("allocator", "rho", 0.0)?),
            "file" => {
                let (line, raw) = doc.str_or("allocator", "map_file", "");
                if raw.is_empty() {
                    return Err(Error::Config {
                        line,
                        field: "allocator.map_file".into(),
                        message: "required when correlation = file".into(),
                    });
                }
                CorrelationSource::File(base_dir.join(raw))
            }
            other => {
                return Err(doc.error(
                    "allocator",
                    "correlation",
                    format!("unknown source `{other}` (expected none, uniform or file)"),
                ))
            }
        };
        let params = RateModelParams::new(
            doc.f64_or("allocator", "ref_bits_per_patch", 3000.0)?,
            doc.int_or("allocator", "ref_qp", 30)?,
            doc.f64_or("allocator", "halving_step", 6.0)?,
        )
        .map_err(|e| doc.error("allocator", "", e.to_string()))?;

        let seeds = match doc.get("scenario", "seeds") {
            None => vec![1],
            Some((line, raw)) => raw
                .split(',')
                .map(|s| s.trim().parse::<u64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .ok()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| Error::Config {
                    line,
                    field: "scenario.seeds".into(),
                    message: format!("`{raw}` is not a comma-separated list of seeds"),
                })?,
        };

        let scenario = Scenario {
            id: doc.str_or("scenario", "id", "default").1.to_string(),
            duration_s: doc.f64_or("scenario", "duration_s", 60.0)?,
            tail_s: doc.f64_or("scenario", "tail_s", 2.0)?,
            seeds,
            link,
            feedback_delay_ms,
            feedback_loss: doc.f64_or("link", "feedback_loss", 0.0)?,
            mtu_payload_bits: doc.f64_or("transport", "mtu_payload_bytes", DEFAULT_MTU_PAYLOAD_BITS / 8.0)? * 8.0,
            nack_delay_ms: doc.f64_auto("transport", "nack_delay_ms", (0.5 * rtt).max(10.0))?,
            suppress_skipped_retransmissions: doc.bool_or("transport", "suppress_skipped_retransmissions", true)?,
            rate,
            sampler,
            video,
            width: doc.int_or("video", "width", 1280)?,
            height: doc.int_or("video", "height", 720)?,
            allocator: AllocatorSettings {
                gamma: doc.f64_or("allocator", "gamma", DEFAULT_GAMMA)?,
                patch_size: doc.int_or("allocator", "patch_size", DEFAULT_PATCH_SIZE)?,
                params,
                correlation,
            },
        };
        scenario.validate(&doc)?;
        Ok(scenario)
    }

    fn validate(&self, doc: &Doc) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.duration_s) {
            return Err(doc.error("scenario", "duration_s", "must be positive"));
        }
        if !(self.tail_s.is_finite() && self.tail_s >= 0.0) {
            return Err(doc.error("scenario", "tail_s", "must be non-negative"));
        }
        if !positive(self.mtu_payload_bits) {
            return Err(doc.error("transport", "mtu_payload_bytes", "must be positive"));
        }
        if !(self.nack_delay_ms.is_finite() && self.nack_delay_ms >= 0.0) {
            return Err(doc.error("transport", "nack_delay_ms", "must be non-negative"));
        }
        if !(self.feedback_delay_ms.is_finite() && self.feedback_delay_ms >= 0.0) {
            return Err(doc.error("link", "feedback_delay_ms", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.feedback_loss) {
            return Err(doc.error("link", "feedback_loss", "must lie in [0, 1]"));
        }
        if !(positive(self.allocator.gamma)) {
            return Err(doc.error("allocator", "gamma", "must be positive"));
        }
        if let CorrelationSource::Uniform(rho) = self.allocator.correlation {
            if !(-1.0..=1.0).contains(&rho) {
                return Err(doc.error("allocator", "rho", "must lie in [-1, 1]"));
            }
        }
        self.build_allocator()
            .map(|_| ())
            .map_err(|e| match e {
                Error::MissingFile(_) => e,
                other => doc.error("allocator", "", other.to_string()),
            })
    }

    /// Loads the configured correlation source into an allocator.
    pub fn build_allocator(&self) -> Result<SemanticAllocator> {
        let a = &self.allocator;
        match &a.correlation {
            CorrelationSource::None => {
                let grid = CorrelationMap::uniform_for_frame(self.width, self.height, a.patch_size, 0.0)?;
                SemanticAllocator::without_context(grid.rows(), grid.cols(), a.patch_size, a.gamma, a.params)
            }
            CorrelationSource::Uniform(rho) => {
                let map = CorrelationMap::uniform_for_frame(self.width, self.height, a.patch_size, *rho)?;
                SemanticAllocator::new(&map, a.gamma, a.params)
            }
            CorrelationSource::File(path) => {
                let map = mapfile::load(path)?;
                map.check_frame(self.width, self.height)?;
                SemanticAllocator::new(&map, a.gamma, a.params)
            }
        }
    }

    pub fn rtt_ms(&self) -> f64 {
        self.link.one_way_delay_ms + self.feedback_delay_ms
    }

    /// Configured packet loss rate (long-run mean for bursty models).
    pub fn loss_rate(&self) -> f64 {
        self.link.loss.mean_loss_rate()
    }

    /// Copy of this scenario with one axis pinned to `value`.
    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut s = self.clone();
        s.id = format!("{}/{}={}", self.id, axis.name(), value);
        match axis {
            SweepAxis::Bitrate => {
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::param("bitrate", format!("{value} kbps is not positive")));
                }
                s.video = VideoSource::Bitrate { kbps: value };
            }
            SweepAxis::Loss => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::param("loss", format!("{value} is outside [0, 1]")));
                }
                s.link.loss = match s.link.loss {
                    LossModel::GilbertElliott {
                        p_good_to_bad,
                        p_bad_to_good,
                        loss_in_bad,
                        ..
                    } => LossModel::GilbertElliott {
                        p: value,
                        p_good_to_bad,
                        p_bad_to_good,
                        loss_in_bad,
                    },
                    LossModel::Bernoulli { .. } => LossModel::Bernoulli { p: value },
                };
            }
            SweepAxis::FrameRate => {
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::param("frame_rate", format!("{value} is not a positive rate")));
                }
                s.rate = RatePolicy::Fixed(value);
            }
        }
        Ok(s)
    }
}

struct Doc {
    entries: HashMap<(String, String), (usize, String)>,
    section_lines: HashMap<String, usize>,
}

impl Doc {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        let mut section_lines = HashMap::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').map(str::trim).ok_or_else(|| Error::Config {
                    line: line_no,
                    field: line.to_string(),
                    message: "unterminated section header".into(),
                })?;
                if !KNOWN_KEYS.iter().any(|(s, _)| *s == name) {
                    return Err(Error::Config {
                        line: line_no,
                        field: format!("[{name}]"),
                        message: "unknown section".into(),
                    });
                }
                section_lines.entry(name.to_string()).or_insert(line_no);
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                field: line.to_string(),
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let sec = section.clone().ok_or_else(|| Error::Config {
                line: line_no,
                field: key.to_string(),
                message: "key outside of any [section]".into(),
            })?;
            let known = KNOWN_KEYS
                .iter()
                .find(|(s, _)| *s == sec)
                .is_some_and(|(_, keys)| keys.contains(&key));
            if !known {
                return Err(Error::Config {
                    line: line_no,
                    field: format!("{sec}.{key}"),
                    message: "unknown key".into(),
                });
            }
            let slot = (sec.clone(), key.to_string());
            if let Some((first, _)) = entries.get(&slot) {
                return Err(Error::Config {
                    line: line_no,
                    field: format!("{sec}.{key}"),
                    message: format!("duplicate key (first set on line {first})"),
                });
            }
            entries.insert(slot, (line_no, value.trim().to_string()));
        }
        Ok(Self {
            entries,
            section_lines,
        })
    }

    fn get(&self, section: &str, key: &str) -> Option<(usize, &str)> {
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .map(|(l, v)| (*l, v.as_str()))
    }

    fn line_of(&self, section: &str, key: &str) -> usize {
        self.get(section, key)
            .map(|(l, _)| l)
            .or_else(|| self.section_lines.get(section).copied())
            .unwrap_or(0)
    }

    fn error(&self, section: &str, key: &str, message: impl Into<String>) -> Error {
        Error::Config {
            line: self.line_of(section, key),
            field: if key.is_empty() {
                format!("[{section}]")
            } else {
                format!("{section}.{key}")
            },
            message: message.into(),
        }
    }

    fn str_or<'a>(&'a self, section: &str, key: &str, default: &'a str) -> (usize, &'a str) {
        self.get(section, key).unwrap_or((0, default))
    }

    fn parsed<T: FromStr>(&self, section: &str, key: &str, default: T, what: &str) -> Result<T> {
        match self.get(section, key) {
            None => Ok(default),
            Some((line, raw)) => raw.parse().map_err(|_| Error::Config {
                line,
                field: format!("{section}.{key}"),
                message: format!("`{raw}` is not {what}"),
            }),
        }
    }

    fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.parsed(section, key, default, "a number")?;
        if v.is_nan() {
            return Err(self.error(section, key, "NaN is not allowed"));
        }
        Ok(v)
    }

    /// Like [`Doc::f64_or`], with `auto` meaning the derived default.
    fn f64_auto(&self, section: &str, key: &str, auto: f64) -> Result<f64> {
        match self.get(section, key) {
            Some((_, "auto")) | None => Ok(auto),
            Some(_) => self.f64_or(section, key, auto),
        }
    }

    fn int_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        self.parsed(section, key, default, "an integer in range")
    }

    fn bool_or(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        self.parsed(section, key, default, "true or false")
    }
}
