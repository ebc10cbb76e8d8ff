//! Named multi-resource vectors.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Non-negative demand or capacity per named resource kind. Conventional
/// kinds are `cpu`, `decode`, `accel` and `net`, but any names work.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceVector(pub BTreeMap<String, f64>);

impl ResourceVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn of(pairs: &[(&str, f64)]) -> Self {
        Self(
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        )
    }

    pub fn get(&self, kind: &str) -> f64 {
        self.0.get(kind).copied().unwrap_or(0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.0.values().all(|v| v.is_finite() && *v >= 0.0)
    }

    pub fn l1(&self) -> f64 {
        self.0.values().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.l1() == 0.0
    }

    /// Elementwise: does `self` fit within `capacity`? A small epsilon
    /// absorbs accumulated subtraction error.
    pub fn fits_within(&self, capacity: &ResourceVector) -> bool {
        self.0
            .iter()
            .all(|(kind, demand)| *demand <= capacity.get(kind) + 1e-9)
    }

    pub fn subtract(&mut self, other: &ResourceVector) {
        for (kind, demand) in &other.0 {
            let entry = self.0.entry(kind.clone()).or_insert(0.0);
            *entry = (*entry - demand).max(0.0);
        }
    }

    pub fn add(&mut self, other: &ResourceVector) {
        for (kind, amount) in &other.0 {
            *self.0.entry(kind.clone()).or_insert(0.0) += amount;
        }
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}
