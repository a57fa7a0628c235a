//! Name-keyed registries of interchangeable strategies.

use std::collections::BTreeMap;
use std::sync::Arc;

/// Something that can be looked up by a stable name.
pub trait Named {
    fn name(&self) -> &'static str;
}

pub struct Registry<T: ?Sized> {
    entries: BTreeMap<&'static str, Arc<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn empty() -> Self {
        Registry {
            entries: BTreeMap::new(),
        }
    }

    /// Adds or replaces the entry under its own name.
    pub fn register(&mut self, entry: Arc<T>) {
        self.entries.insert(entry.name(), entry);
    }

    pub fn get(&self, name: &str) -> Option<Arc<T>> {
        self.entries.get(name).cloned()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("unknown {kind} `{name}` (available: {available})")]
pub struct UnknownStrategy {
    pub kind: &'static str,
    pub name: String,
    pub available: String,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn resolve(&self, kind: &'static str, name: &str) -> Result<Arc<T>, UnknownStrategy> {
        self.get(name).ok_or_else(|| UnknownStrategy {
            kind,
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter: Named {
        fn greet(&self) -> String;
    }

    struct Hello;
    impl Named for Hello {
        fn name(&self) -> &'static str {
            "hello"
        }
    }
    impl Greeter for Hello {
        fn greet(&self) -> String {
            "hi".into()
        }
    }

    #[test]
    fn register_and_resolve() {
        let mut reg: Registry<dyn Greeter> = Registry::empty();
        reg.register(Arc::new(Hello));
        assert_eq!(reg.names(), vec!["hello"]);
        assert_eq!(reg.resolve("greeter", "hello").unwrap().greet(), "hi");
        let err = reg.resolve("greeter", "bye").err().unwrap();
        assert_eq!(err.to_string(), "unknown greeter `bye` (available: hello)");
    }
}
