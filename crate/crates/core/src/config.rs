//! System configuration file: devices, addresses, catalog and cell settings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::cell::CellConfig;
use crate::fb::DeviceDecl;
use crate::holon::{Directory, DirectoryEntry, ResourceHolonSpec};
use crate::messaging::ChannelId;
use crate::protocol::{parse_product, parse_services, EpochTime, ServiceDef};
use crate::scheduling::{NegotiationConfig, ProductCatalog, StockTable};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("unsupported configuration version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: u32,
    start_time: u64,
    #[serde(default)]
    seed: u64,
    catalog: RawCatalog,
    directory: RawDirectory,
    #[serde(default)]
    negotiation: RawNegotiation,
    addresses: Addresses,
    cell: RawCell,
    devices: DeviceLayout,
    #[serde(default)]
    extra_devices: Vec<DeviceDecl>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    products: Vec<PathBuf>,
    services: PathBuf,
    #[serde(default)]
    stock: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDirectory {
    file: PathBuf,
    #[serde(default)]
    persist: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNegotiation {
    timeout: u64,
    max_conflicts: u32,
}

impl Default for RawNegotiation {
    fn default() -> Self {
        let d = NegotiationConfig::default();
        Self {
            timeout: d.timeout,
            max_conflicts: d.max_conflicts,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCell {
    name: String,
    inbox: ChannelId,
    ctrl: ChannelId,
    status: ChannelId,
    hmi_out: ChannelId,
    hmi_in: ChannelId,
    controllers: Vec<String>,
    memory_capacity: usize,
    load_time: u64,
    #[serde(default)]
    preloaded: Vec<String>,
    magazine_capacity: u32,
    magazine_initial: u32,
    layout: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Addresses {
    pub gateway: ChannelId,
    pub manager: ChannelId,
    pub coordinator: ChannelId,
    pub first_order_inbox: ChannelId,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevicePlace {
    pub name: String,
    pub resource: String,
    pub management: ChannelId,
}

/// The four devices of the control application.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceLayout {
    /// User interface, order holon manager and coordinator.
    pub hmi: DevicePlace,
    /// Dynamically created order holons.
    pub orders: DevicePlace,
    /// Intelligent control of the assembly cell.
    pub cell: DevicePlace,
    /// Hardware-independent interfaces of the cell controllers.
    pub net: DevicePlace,
}

#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub start_time: EpochTime,
    pub seed: u64,
    pub catalog: ProductCatalog,
    pub stock: StockTable,
    pub services: Vec<ServiceDef>,
    pub directory: Vec<DirectoryEntry>,
    /// Directory file registrations are appended to, when persisting.
    pub directory_file: Option<PathBuf>,
    pub negotiation: NegotiationConfig,
    pub addresses: Addresses,
    pub cell: ResourceHolonSpec,
    pub controllers: Vec<String>,
    pub cell_sim: CellConfig,
    pub devices: DeviceLayout,
    pub extra_devices: Vec<DeviceDecl>,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl SystemConfig {
    /// Loads a configuration file; referenced files are relative to it.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        if raw.version != 1 {
            return Err(ConfigError::Version(raw.version));
        }
        let invalid = |path: &Path, message: String| ConfigError::Invalid {
            path: path.to_path_buf(),
            message,
        };

        let mut catalog = ProductCatalog::new();
        for rel in &raw.catalog.products {
            let path = base.join(rel);
            let spec = parse_product(&read(&path)?).map_err(|e| invalid(&path, e.to_string()))?;
            catalog.insert(spec.name.clone(), spec);
        }
        let mut stock = StockTable::new();
        for (product, n) in &raw.catalog.stock {
            stock.set(product, *n);
        }
        let services_path = base.join(&raw.catalog.services);
        let services = parse_services(&read(&services_path)?)
            .map_err(|e| invalid(&services_path, e.to_string()))?;

        let dir_path = base.join(&raw.directory.file);
        let directory = if dir_path.exists() {
            Directory::parse_jsonl(&read(&dir_path)?)
                .map_err(|e| invalid(&dir_path, e.to_string()))?
        } else if raw.directory.persist {
            Vec::new()
        } else {
            return Err(invalid(&dir_path, "directory file not found".into()));
        };

        let c = raw.cell;
        for s in &c.preloaded {
            if !services.iter().any(|d| &d.serv_id == s) {
                return Err(invalid(
                    &services_path,
                    format!("preloaded service {s} is not defined"),
                ));
            }
        }
        if c.magazine_initial > c.magazine_capacity {
            return Err(invalid(
                base,
                "magazine_initial exceeds magazine_capacity".into(),
            ));
        }
        let cell_sim = CellConfig {
            services: services.clone(),
            memory_capacity: c.memory_capacity,
            load_time: c.load_time,
            preloaded: c.preloaded,
            magazine_capacity: c.magazine_capacity,
            magazine_initial: c.magazine_initial,
            layout: c.layout,
        };
        let cell = ResourceHolonSpec {
            name: c.name,
            inbox: c.inbox,
            ctrl: c.ctrl,
            status: c.status,
            hmi_out: c.hmi_out,
            hmi_in: c.hmi_in,
            coordinator: raw.addresses.coordinator,
        };
        Ok(Self {
            start_time: EpochTime(raw.start_time),
            seed: raw.seed,
            catalog,
            stock,
            services,
            directory,
            directory_file: raw.directory.persist.then_some(dir_path),
            negotiation: NegotiationConfig {
                timeout: raw.negotiation.timeout,
                max_conflicts: raw.negotiation.max_conflicts,
            },
            addresses: raw.addresses,
            cell,
            controllers: c.controllers,
            cell_sim,
            devices: raw.devices,
            extra_devices: raw.extra_devices,
        })
    }
}
