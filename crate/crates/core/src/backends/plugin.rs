//! Adapter contract for pretrained backends.
//!
//! A plugin is a named factory that builds a [`DualEncoder`] or
//! [`QueryFusion`] from an adapter-specific JSON configuration (weights
//! location, freezing, decode settings). The crate registers none; binaries
//! embedding real models register theirs before dispatching commands.

use std::collections::BTreeMap;

use serde_json::Value;

use super::{BackendError, DualEncoder, QueryFusion};

pub type DualFactory = Box<dyn Fn(&Value) -> Result<Box<dyn DualEncoder>, BackendError> + Send + Sync>;
pub type FusionFactory = Box<dyn Fn(&Value) -> Result<Box<dyn QueryFusion>, BackendError> + Send + Sync>;

pub enum PluginBackend {
    Dual(Box<dyn DualEncoder>),
    Fusion(Box<dyn QueryFusion>),
}

#[derive(Default)]
pub struct PluginRegistry {
    dual: BTreeMap<String, DualFactory>,
    fusion: BTreeMap<String, FusionFactory>,
}

impl PluginRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_dual(&mut self, name: impl Into<String>, factory: DualFactory) {
        self.dual.insert(name.into(), factory);
    }

    pub fn register_fusion(&mut self, name: impl Into<String>, factory: FusionFactory) {
        self.fusion.insert(name.into(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.dual.keys().chain(self.fusion.keys()).map(String::as_str).collect()
    }

    pub fn build(&self, name: &str, config: &Value) -> Result<PluginBackend, BackendError> {
        if let Some(f) = self.dual.get(name) {
            return Ok(PluginBackend::Dual(f(config)?));
        }
        if let Some(f) = self.fusion.get(name) {
            return Ok(PluginBackend::Fusion(f(config)?));
        }
        Err(BackendError::Config(format!("no plugin registered as {name:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{dual_match, ToyDualEncoder};

    #[test]
    fn registered_factory_builds_backend() {
        let mut reg = PluginRegistry::new();
        reg.register_dual(
            "toy-as-plugin",
            Box::new(|cfg: &Value| {
                let seed = cfg.get("seed").and_then(Value::as_u64).unwrap_or(0);
                Ok(Box::new(ToyDualEncoder::new(seed, 8)?) as Box<dyn DualEncoder>)
            }),
        );
        assert_eq!(reg.names(), ["toy-as-plugin"]);
        match reg.build("toy-as-plugin", &serde_json::json!({"seed": 4})).unwrap() {
            PluginBackend::Dual(b) => {
                let direct = ToyDualEncoder::new(4, 8).unwrap();
                assert_eq!(
                    dual_match(b.as_ref(), "img", "a dog").unwrap(),
                    dual_match(&direct, "img", "a dog").unwrap()
                );
            }
            PluginBackend::Fusion(_) => panic!("expected dual backend"),
        }
        assert!(reg.build("missing", &Value::Null).is_err());
    }
}
