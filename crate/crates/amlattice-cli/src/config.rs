//! Key-value run configuration: `key = value` lines with `#` comments, or a
//! previously emitted manifest.json whose resolved config is reused verbatim.

use amlattice::program::{Burst, ModulationProgram};
use amlattice::protocol::{Backend, EnsembleSpec};
use amlattice::tdse::Resolution;
use amlattice::units::{LatticeConfig, ModulationParams, PhysicalParams};
use amlattice::{Error, Result, F};
use std::collections::BTreeMap;
use std::path::Path;

/// Keys that must be present in every config.
pub const REQUIRED_KEYS: [&str; 8] =
    ["mass_u", "lambda_nm", "gravity", "depth_Er", "harmonic", "alpha", "phase_deg", "t0"];

/// Optional keys with built-in defaults, all recorded back into manifests.
pub const OPTIONAL_KEYS: [&str; 18] = [
    "band",
    "sigma0_sites",
    "n_k",
    "k_center",
    "k_rms",
    "k0",
    "burst_taub",
    "points_per_site",
    "steps_per_taub",
    "box_sites",
    "guard_amplitude",
    "echo_points",
    "tfr_max_tauell",
    "t0_points",
    "t0_max_taub",
    "mirror_tfr_taub",
    "mirror_samples",
    "alphas",
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    map: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(path: &Path, lax: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let trimmed = text.trim_start();
        let map = if trimmed.starts_with('{') {
            Self::from_manifest_json(&text)?
        } else {
            Self::parse_key_value(&text, lax)?
        };
        let cfg = RunConfig { map };
        cfg.check_required()?;
        Ok(cfg)
    }

    fn from_manifest_json(text: &str) -> Result<BTreeMap<String, String>> {
        let v: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Config { line: None, message: format!("manifest parse: {e}") })?;
        let cfg = v.get("config").ok_or_else(|| Error::Config {
            line: None,
            message: "manifest has no `config` object".into(),
        })?;
        let obj = cfg.as_object().ok_or_else(|| Error::Config {
            line: None,
            message: "`config` is not an object".into(),
        })?;
        let mut map = BTreeMap::new();
        for (k, val) in obj {
            let s = match val {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            map.insert(k.clone(), s);
        }
        Ok(map)
    }

    fn parse_key_value(text: &str, lax: bool) -> Result<BTreeMap<String, String>> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: Some(lineno + 1),
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = k.trim().to_string();
            let known =
                REQUIRED_KEYS.contains(&key.as_str()) || OPTIONAL_KEYS.contains(&key.as_str());
            if !known {
                if lax {
                    eprintln!("warning: ignoring unknown config key `{key}`");
                    continue;
                }
                return Err(Error::Config {
                    line: Some(lineno + 1),
                    message: format!("unknown key `{key}` (use --lax to ignore)"),
                });
            }
            map.insert(key, v.trim().to_string());
        }
        Ok(map)
    }

    fn check_required(&self) -> Result<()> {
        let missing: Vec<&str> = REQUIRED_KEYS
            .iter()
            .copied()
            .filter(|k| !self.map.contains_key(*k))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config {
                line: None,
                message: format!("missing required keys: {}", missing.join(", ")),
            });
        }
        Ok(())
    }

    pub fn get_f64(&self, key: &str) -> Result<F> {
        let s = self.map.get(key).ok_or_else(|| Error::Config {
            line: None,
            message: format!("missing required key `{key}`"),
        })?;
        s.parse().map_err(|_| Error::Config {
            line: None,
            message: format!("key `{key}`: `{s}` is not a number"),
        })
    }

    pub fn get_f64_or(&self, key: &str, default: F) -> Result<F> {
        match self.map.get(key) {
            None => Ok(default),
            Some(_) => self.get_f64(key),
        }
    }

    pub fn get_usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.map.get(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| Error::Config {
                line: None,
                message: format!("key `{key}`: `{s}` is not an integer"),
            }),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    /// Physical parameters and derived scales.
    pub fn lattice(&self) -> Result<LatticeConfig<F>> {
        let p = PhysicalParams::new(
            self.get_f64("mass_u")?,
            self.get_f64("lambda_nm")? * 1e-9,
            self.get_f64("gravity")?,
            self.get_f64("depth_Er")?,
        )?;
        LatticeConfig::new(p)
    }

    /// Modulation parameters; the drive is resonant at `harmonic * omega_B`.
    pub fn modulation(&self, lattice: &LatticeConfig<F>) -> Result<ModulationParams<F>> {
        let harmonic = self.get_usize_or("harmonic", 1)? as u32;
        ModulationParams::resonant(
            &lattice.scales,
            harmonic,
            self.get_f64("alpha")?,
            self.get_f64("phase_deg")?.to_radians(),
            self.get_f64("t0")?,
        )
    }

    pub fn harmonic(&self) -> Result<u32> {
        Ok(self.get_usize_or("harmonic", 1)? as u32)
    }

    pub fn ensemble(&self, backend: Backend, seed: u64) -> Result<EnsembleSpec<F>> {
        Ok(EnsembleSpec {
            backend,
            n_k: self.get_usize_or("n_k", 32)?,
            sigma0_sites: self.get_f64_or("sigma0_sites", 5.0)?,
            band: self.get_usize_or("band", 1)?,
            seed,
            k_center: self.get_f64_or("k_center", 0.0)?,
            k_rms: match self.get_str("k_rms") {
                None | Some("none") => None,
                Some(_) => Some(self.get_f64("k_rms")?),
            },
        })
    }

    pub fn resolution(&self) -> Result<Resolution> {
        let steps = self.get_usize_or("steps_per_taub", 0)?;
        Ok(Resolution {
            points_per_site: self.get_usize_or("points_per_site", 32)?,
            steps_per_bloch_period: if steps == 0 { None } else { Some(steps) },
            guard_amplitude: self.get_f64_or(
                "guard_amplitude",
                amlattice::tdse::DEFAULT_EDGE_GUARD,
            )?,
        })
    }

    pub fn box_sites(&self) -> Result<Option<usize>> {
        let b = self.get_usize_or("box_sites", 0)?;
        Ok(if b == 0 { None } else { Some(b) })
    }

    /// Burst duration in seconds; `paper_scale` switches to the published
    /// 287 Bloch periods.
    pub fn burst_duration(&self, lattice: &LatticeConfig<F>, paper_scale: bool) -> Result<F> {
        let taub = if paper_scale { 287.0 } else { self.get_f64_or("burst_taub", 20.0)? };
        Ok(taub * lattice.scales.bloch_period)
    }

    pub fn alphas(&self) -> Result<Vec<F>> {
        match self.get_str("alphas") {
            None => Ok((1..=9).map(|i| i as F / 10.0).collect()),
            Some(s) => s
                .split(',')
                .map(|tok| {
                    tok.trim().parse().map_err(|_| Error::Config {
                        line: None,
                        message: format!("alphas: `{tok}` is not a number"),
                    })
                })
                .collect(),
        }
    }

    /// The fully resolved map (defaults included) for the manifest.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut out = self.map.clone();
        let defaults: &[(&str, String)] = &[
            ("band", "1".into()),
            ("sigma0_sites", "5".into()),
            ("n_k", "32".into()),
            ("k_center", "0".into()),
            ("k_rms", "none".into()),
            ("k0", "0".into()),
            ("burst_taub", "20".into()),
            ("points_per_site", "32".into()),
            ("steps_per_taub", "0".into()),
            ("box_sites", "0".into()),
            (
                "guard_amplitude",
                format!("{}", amlattice::tdse::DEFAULT_EDGE_GUARD),
            ),
            ("echo_points", "10".into()),
            ("tfr_max_tauell", "1.2".into()),
            ("t0_points", "12".into()),
            ("t0_max_taub", "1.3".into()),
            ("mirror_tfr_taub", "0.5".into()),
            ("mirror_samples", "8".into()),
        ];
        for (k, v) in defaults {
            out.entry(k.to_string()).or_insert_with(|| v.clone());
        }
        out
    }

    /// Program built from the config's modulation block: a single burst of
    /// `burst_taub` Bloch periods after a `t0` hold.
    pub fn single_burst_program(
        &self,
        lattice: &LatticeConfig<F>,
        paper_scale: bool,
    ) -> Result<ModulationProgram<F>> {
        let m = self.modulation(lattice)?;
        let burst = self.burst_duration(lattice, paper_scale)?;
        let mut p = ModulationProgram::new();
        if m.start_time > 0.0 {
            p = p.hold(m.start_time);
        }
        Ok(p.burst(Burst::resonant(burst, m.harmonic, m.amplitude, m.phase)))
    }
}

/// Parses a pulse-program file: one segment per line,
/// `hold <dur_tauB>` or `burst <dur_tauB> <ell> <alpha> <phase_deg>`.
pub fn parse_program(text: &str, lattice: &LatticeConfig<F>) -> Result<ModulationProgram<F>> {
    let taub = lattice.scales.bloch_period;
    let mut program = ModulationProgram::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::Config {
            line: Some(lineno + 1),
            message: format!("{msg} in `{line}`"),
        };
        let parse_f = |tok: &str| -> Result<F> {
            tok.parse().map_err(|_| bad("bad number"))
        };
        match toks[0] {
            "hold" => {
                if toks.len() != 2 {
                    return Err(bad("hold takes one duration"));
                }
                program = program.hold(parse_f(toks[1])? * taub);
            }
            "burst" => {
                if toks.len() != 5 {
                    return Err(bad("burst takes <dur_tauB> <ell> <alpha> <phase_deg>"));
                }
                let dur = parse_f(toks[1])? * taub;
                let ell: u32 = toks[2].parse().map_err(|_| bad("bad harmonic"))?;
                let alpha = parse_f(toks[3])?;
                let phase = parse_f(toks[4])?.to_radians();
                program = program.burst(Burst::resonant(dur, ell, alpha, phase));
            }
            other => {
                return Err(Error::Config {
                    line: Some(lineno + 1),
                    message: format!("unknown segment `{other}`"),
                });
            }
        }
    }
    program.validate()?;
    Ok(program)
}
