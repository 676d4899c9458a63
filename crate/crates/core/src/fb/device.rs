use std::collections::BTreeMap;

use crate::messaging::ChannelId;

use super::{DeviceDecl, FbError, MgmtCommand, Resource, TypeRegistry};

/// A control unit hosting zero or more resources.
#[derive(Debug)]
pub struct Device {
    pub name: String,
    pub management_endpoint: ChannelId,
    resources: BTreeMap<String, Resource>,
}

impl Device {
    pub fn new(name: impl Into<String>, management_endpoint: ChannelId) -> Self {
        Self {
            name: name.into(),
            management_endpoint,
            resources: BTreeMap::new(),
        }
    }

    pub fn add_resource(&mut self, resource: Resource) -> Result<(), FbError> {
        if self.resources.contains_key(resource.name()) {
            return Err(FbError::DuplicateResource(resource.name().to_string()));
        }
        self.resources.insert(resource.name().to_string(), resource);
        Ok(())
    }

    pub fn resource(&self, name: &str) -> Option<&Resource> {
        self.resources.get(name)
    }

    pub fn resource_mut(&mut self, name: &str) -> Option<&mut Resource> {
        self.resources.get_mut(name)
    }

    pub fn resources(&self) -> impl Iterator<Item = &Resource> {
        self.resources.values()
    }

    pub fn resources_mut(&mut self) -> impl Iterator<Item = &mut Resource> {
        self.resources.values_mut()
    }

    pub fn mgmt(
        &mut self,
        registry: &TypeRegistry,
        resource: &str,
        command: MgmtCommand,
    ) -> Result<(), FbError> {
        self.resources
            .get_mut(resource)
            .ok_or_else(|| FbError::UnknownResource(resource.to_string()))?
            .mgmt(registry, command)
    }

    /// Builds a device from its declaration, creating the declared
    /// instances and connections through management commands.
    pub fn from_decl(decl: &DeviceDecl, registry: &TypeRegistry) -> Result<Device, FbError> {
        let mut device = Device::new(&decl.name, decl.management);
        for rdecl in &decl.resources {
            device.add_resource(Resource::new(&rdecl.name))?;
            for command in rdecl.commands()? {
                device.mgmt(registry, &rdecl.name, command)?;
            }
        }
        Ok(device)
    }
}
