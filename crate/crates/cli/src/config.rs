//! Experiment settings shared by command-line flags and `key = value` files.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;

use crate::error::{CliError, Result};

macro_rules! settings {
    ($( $(#[$m:meta])* $field:ident : $ty:ty ),* $(,)?) => {
        #[derive(Debug, Clone, Default, PartialEq, Args)]
        pub struct Settings {
            /// Flat key = value file; flags take precedence over it.
            #[arg(long, global = true)]
            pub config: Option<PathBuf>,
            /// Use the four-jot path instead of ADMM.
            #[arg(long, global = true)]
            pub fast: bool,
            $( $(#[$m])* #[arg(long, global = true)] pub $field: Option<$ty>, )*
        }

        pub const KEYS: &[&str] = &["fast", $( stringify!($field) ),*];

        impl Settings {
            fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
                match key {
                    "fast" => self.fast = parse::<bool>(value)?,
                    $( stringify!($field) => self.$field = Some(parse::<$ty>(value)?), )*
                    _ => return Err(format!("unknown key '{key}'")),
                }
                Ok(())
            }

            /// Fill unset fields from `lower`.
            pub fn or(self, lower: Settings) -> Settings {
                Settings {
                    config: self.config.or(lower.config),
                    fast: self.fast || lower.fast,
                    $( $field: self.$field.or(lower.$field), )*
                }
            }
        }
    };
}

settings! {
    /// Scene image (P5/P6), or "builtin" for the generated test scene.
    scene: String,
    stack: PathBuf,
    out: PathBuf,
    /// Ground-truth image for PSNR reporting.
    reference: PathBuf,
    /// 1 selects single-bit readout, 2..=16 multi-bit.
    bits: u32,
    /// Single-bit threshold q.
    threshold: u32,
    frames: u32,
    /// Mean photons per jot per frame.
    photons: f64,
    seed: u64,
    read_noise: f64,
    dark_rate: f64,
    /// Side of the builtin scene.
    size: usize,
    /// Undo this display gamma when reading the scene.
    scene_gamma: f64,
    denoiser: String,
    rho: f64,
    lambda: f64,
    /// Frame count the lambda value is tuned for.
    lambda_frames: u32,
    max_iters: usize,
    tol: f64,
    gamma: f64,
    /// algebraic or unbiased.
    inverse: String,
    /// Patch chart used to fit a color-correction matrix.
    ccm: PathBuf,
    /// Comma-separated photon levels for the sweep, one per bit depth.
    levels: String,
    /// Comma-separated sweep seeds.
    seeds: String,
    /// Report PSNR when a reference is available.
    psnr: bool,
    peak: f64,
}

fn parse<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse '{value}' as {}", std::any::type_name::<T>()))
}

impl Settings {
    /// Parse a config file body. Relative paths resolve against `base`.
    pub fn parse_config(text: &str, base: &Path) -> Result<Settings> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
            s.set(key.trim(), value.trim())
                .map_err(|e| CliError::Usage(format!("config line {}: {e}", i + 1)))?;
        }
        s.resolve_paths(base);
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let s = Self::parse_config(&text, base)?;
        s.check_inputs_exist()?;
        Ok(s)
    }

    /// Flags over config file over nothing.
    pub fn resolve(self) -> Result<Settings> {
        match self.config.clone() {
            Some(path) => Ok(self.or(Settings::load(&path)?)),
            None => Ok(self),
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        join(&mut self.stack);
        join(&mut self.out);
        join(&mut self.reference);
        join(&mut self.ccm);
        if let Some(scene) = &mut self.scene {
            if scene != "builtin" && Path::new(scene).is_relative() {
                *scene = base.join(&*scene).to_string_lossy().into_owned();
            }
        }
    }

    fn check_inputs_exist(&self) -> Result<()> {
        let scene = self.scene.as_deref().filter(|s| *s != "builtin").map(PathBuf::from);
        for p in [scene.as_ref(), self.reference.as_ref(), self.ccm.as_ref()].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file does not exist"),
                ));
            }
        }
        Ok(())
    }
}

pub fn parse_list<T: FromStr>(what: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| CliError::Usage(format!("{what}: cannot parse '{t}'")))
        })
        .collect()
}
