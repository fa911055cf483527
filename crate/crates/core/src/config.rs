//! Hardware configuration files.
//!
//! ```toml
//! [array]
//! rows = 64
//! cols = 64
//! freq_mhz = 400.0
//!
//! [memory]
//! input_sram_kib = 512
//! weight_sram_kib = 512
//! output_sram_kib = 1024
//! accum_bytes = 4          # optional, default 4
//! double_buffered = true   # optional, default true
//!
//! [energy]                 # optional, defaults below
//! e_mac_int8_pj = 0.25
//! e_mac_fp32_pj = 1.0
//! e_sram_read_pj_per_byte = 2.0
//! e_sram_write_pj_per_byte = 2.5
//! e_dram_pj_per_byte = 80.0
//! p_static_w = 0.2
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyConfig;
use crate::error::{Error, Result};
use crate::simcore::{ArrayConfig, MemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    pub array: ArrayConfig,
    pub memory: MemConfig,
    #[serde(default)]
    pub energy: EnergyConfig,
}

/// A file holding only an `[energy]` table.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnergyFile {
    energy: EnergyConfig,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::ConfigParse(format!("{origin}: {e}")))
}

impl HardwareConfig {
    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        self.memory.validate()?;
        self.energy.validate()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = parse(s, "hardware config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let cfg: Self = parse(&read(path)?, &path.display().to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces the energy constants with the `[energy]` table of another file.
    pub fn with_energy_file(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file: EnergyFile = parse(&read(path)?, &path.display().to_string())?;
        file.energy.validate()?;
        self.energy = file.energy;
        Ok(self)
    }
}
