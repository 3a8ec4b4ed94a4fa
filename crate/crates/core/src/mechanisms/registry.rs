//! Name-keyed registry of jump families.
//!
//! Model files name the Lévy jump family of each factor (`"none"`, `"cgmy"`,
//! `"tempered_stable"`); the registry turns that tag plus its parameters into
//! a [`JumpKernel`] trait object.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use super::kernels::{Cgmy, JumpFamily, JumpKernel, NoJumps, TemperedStable};
use crate::error::{Error, Result};

pub type KernelBuilder = fn(&JumpFamily) -> Result<Arc<dyn JumpKernel>>;

#[derive(Clone)]
pub struct KernelRegistry {
    builders: BTreeMap<String, KernelBuilder>,
}

impl KernelRegistry {
    pub fn empty() -> Self {
        Self {
            builders: BTreeMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register("none", |_| Ok(Arc::new(NoJumps)));
        r.register("cgmy", |f| {
            Ok(Arc::new(Cgmy::new(f.get("G")?, f.get("M")?, f.get("Y")?)?))
        });
        r.register("tempered_stable", |f| {
            Ok(Arc::new(TemperedStable::new(
                f.get("eta")?,
                f.get("theta")?,
                f.get("alpha")?,
            )?))
        });
        r
    }

    pub fn register(&mut self, name: &str, builder: KernelBuilder) {
        self.builders.insert(name.to_string(), builder);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn build(&self, family: &JumpFamily) -> Result<Arc<dyn JumpKernel>> {
        let builder = self
            .builders
            .get(&family.family)
            .ok_or_else(|| Error::InvalidParams(format!("unknown jump family `{}`", family.family)))?;
        builder(family)
    }
}

impl Default for KernelRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

/// Process-wide registry with the built-in families.
pub fn registry() -> &'static KernelRegistry {
    static REGISTRY: OnceLock<KernelRegistry> = OnceLock::new();
    REGISTRY.get_or_init(KernelRegistry::with_defaults)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_registered_families_by_name() {
        let r = registry();
        let names: Vec<_> = r.names().collect();
        assert_eq!(names, vec!["cgmy", "none", "tempered_stable"]);
        let k = r.build(&JumpFamily::cgmy(0.5, 0.4, 1.3)).unwrap();
        assert_eq!(k.family(), JumpFamily::cgmy(0.5, 0.4, 1.3));
        assert_eq!(k.domain(), (-0.5, 0.4));
    }

    #[test]
    fn unknown_family_and_missing_params_are_rejected() {
        let r = registry();
        let bad = JumpFamily {
            family: "meixner".into(),
            params: Default::default(),
        };
        assert!(matches!(r.build(&bad), Err(Error::InvalidParams(_))));
        let mut missing = JumpFamily::cgmy(1.0, 1.0, 1.5);
        missing.params.remove("Y");
        assert!(matches!(r.build(&missing), Err(Error::InvalidParams(_))));
    }
}
