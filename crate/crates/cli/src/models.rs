//! Name-keyed registry of the built-in cycle maps.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;
use tskit_core::models::{AdsorptionColumnModel, ForcedOscillatorModel, LinearMapModel, QuadraticMap, SpectrumEntry};
use tskit_core::{CycleMap, StateVector};

use crate::config::decode;
use crate::error::ConfigError;

/// A constructed model together with its default starting state.
#[derive(Clone)]
pub struct BuiltModel {
    pub map: Arc<dyn CycleMap>,
    pub initial: StateVector,
}

impl std::fmt::Debug for BuiltModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltModel")
            .field("map", &self.map)
            .field("initial", &self.initial.as_slice())
            .finish()
    }
}

pub trait ModelFactory: Send + Sync {
    fn kind(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    fn build(&self, params: &toml::Table, seed: u64) -> Result<BuiltModel, ConfigError>;
}

pub struct ModelRegistry {
    factories: BTreeMap<&'static str, Box<dyn ModelFactory>>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, factory: Box<dyn ModelFactory>) {
        self.factories.insert(factory.kind(), factory);
    }

    pub fn get(&self, kind: &str) -> Option<&dyn ModelFactory> {
        self.factories.get(kind).map(|f| f.as_ref())
    }

    pub fn kinds(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, kind: &str, params: &toml::Table, seed: u64) -> Result<BuiltModel, ConfigError> {
        let factory = self.get(kind).ok_or_else(|| {
            let known: Vec<_> = self.kinds().collect();
            ConfigError::new(format!("unknown model kind `{kind}` (known: {})", known.join(", "))).with_key("kind")
        })?;
        factory.build(params, seed)
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register(Box::new(LinearFactory));
        registry.register(Box::new(OscillatorFactory));
        registry.register(Box::new(QuadraticFactory));
        registry.register(Box::new(AdsorptionFactory));
        registry
    }
}

fn invalid(err: tskit_core::Error) -> ConfigError {
    ConfigError::new(format!("[model] {err}"))
}

/// A spectrum entry: a real number, `{ modulus, angle }`, or `"lambda"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SpectrumItem {
    Real(f64),
    Pair { modulus: f64, angle: f64 },
    Name(String),
}

/// `count` real multipliers spread evenly over `(0, max]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FastModes {
    count: usize,
    max: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    spectrum: Vec<SpectrumItem>,
    #[serde(default)]
    fast: Option<FastModes>,
    #[serde(default)]
    offset: Option<Vec<f64>>,
    /// Conjugate by a seeded orthogonal matrix.
    #[serde(default)]
    conjugate: bool,
    #[serde(default)]
    lambda: f64,
}

struct LinearFactory;

impl ModelFactory for LinearFactory {
    fn kind(&self) -> &'static str {
        "linear"
    }

    fn summary(&self) -> &'static str {
        "affine map with a prescribed spectrum"
    }

    fn build(&self, params: &toml::Table, seed: u64) -> Result<BuiltModel, ConfigError> {
        let p: LinearParams = decode("model", params)?;
        let mut spectrum = Vec::new();
        for item in p.spectrum {
            spectrum.push(match item {
                SpectrumItem::Real(x) => SpectrumEntry::Real(x),
                SpectrumItem::Pair { modulus, angle } => SpectrumEntry::Pair { modulus, angle },
                SpectrumItem::Name(name) if name == "lambda" => SpectrumEntry::Continuation,
                SpectrumItem::Name(name) => {
                    return Err(ConfigError::new(format!("[model] unknown spectrum entry `{name}`")).with_key("spectrum"))
                }
            });
        }
        if let Some(fast) = p.fast {
            for i in 0..fast.count {
                spectrum.push(SpectrumEntry::Real(fast.max * (fast.count - i) as f64 / fast.count as f64));
            }
        }
        let dim: usize = spectrum
            .iter()
            .map(|e| if matches!(e, SpectrumEntry::Pair { .. }) { 2 } else { 1 })
            .sum();
        let offset = p.offset.unwrap_or_else(|| vec![0.0; dim]);
        let model = LinearMapModel::new(spectrum, &offset, p.conjugate.then_some(seed))
            .map_err(invalid)?
            .with_default_lambda(p.lambda);
        Ok(BuiltModel {
            initial: StateVector::zeros(dim),
            map: Arc::new(model),
        })
    }
}

struct OscillatorFactory;

impl ModelFactory for OscillatorFactory {
    fn kind(&self) -> &'static str {
        "oscillator"
    }

    fn summary(&self) -> &'static str {
        "stroboscopic map of a forced damped oscillator"
    }

    fn build(&self, params: &toml::Table, _seed: u64) -> Result<BuiltModel, ConfigError> {
        let model: ForcedOscillatorModel = decode("model", params)?;
        model.validate().map_err(invalid)?;
        Ok(BuiltModel {
            initial: StateVector::zeros(2),
            map: Arc::new(model),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct QuadraticParams {
    dim: usize,
    lambda: f64,
}

impl Default for QuadraticParams {
    fn default() -> Self {
        Self { dim: 1, lambda: 0.0 }
    }
}

struct QuadraticFactory;

impl ModelFactory for QuadraticFactory {
    fn kind(&self) -> &'static str {
        "quadratic"
    }

    fn summary(&self) -> &'static str {
        "componentwise u^2 + lambda with a fold at (1/2, 1/4)"
    }

    fn build(&self, params: &toml::Table, _seed: u64) -> Result<BuiltModel, ConfigError> {
        let p: QuadraticParams = decode("model", params)?;
        if p.dim == 0 {
            return Err(ConfigError::new("[model] dim must be at least 1").with_key("dim"));
        }
        Ok(BuiltModel {
            initial: StateVector::zeros(p.dim),
            map: Arc::new(QuadraticMap::new(p.dim).with_default_lambda(p.lambda)),
        })
    }
}

struct AdsorptionFactory;

impl ModelFactory for AdsorptionFactory {
    fn kind(&self) -> &'static str {
        "adsorption"
    }

    fn summary(&self) -> &'static str {
        "two-step cyclic adsorption column"
    }

    fn build(&self, params: &toml::Table, _seed: u64) -> Result<BuiltModel, ConfigError> {
        let model: AdsorptionColumnModel = decode("model", params)?;
        model.validate().map_err(invalid)?;
        Ok(BuiltModel {
            initial: model.clean_state(),
            map: Arc::new(model),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> toml::Table {
        text.parse().unwrap()
    }

    #[test]
    fn registry_knows_all_models() {
        let r = ModelRegistry::default();
        assert_eq!(r.kinds().collect::<Vec<_>>(), ["adsorption", "linear", "oscillator", "quadratic"]);
        assert!(r.build("nope", &toml::Table::new(), 0).is_err());
    }

    #[test]
    fn linear_spectrum_forms() {
        let r = ModelRegistry::default();
        let m = r
            .build(
                "linear",
                &table("spectrum = [0.9, { modulus = 0.5, angle = 0.3 }, \"lambda\"]\nfast = { count = 3, max = 0.3 }"),
                0,
            )
            .unwrap();
        assert_eq!(m.map.dim(), 7);
        let err = r.build("linear", &table("spectrum = [0.9]\noffst = [1.0]"), 0).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("offst"));
    }

    #[test]
    fn adsorption_defaults_and_validation() {
        let r = ModelRegistry::default();
        let m = r.build("adsorption", &toml::Table::new(), 0).unwrap();
        assert_eq!(m.map.dim(), 180);
        assert!(r.build("adsorption", &table("n_cells = 0"), 0).is_err());
    }
}
