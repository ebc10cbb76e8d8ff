//! Pipeline definition document.
//!
//! The JSON shape is `{stages: [{name, kind, demand, service_time_hint,
//! queue_capacity}], edges: [[from, to]]}`. The executable topology is a
//! chain: every stage has at most one downstream edge and exactly one stage
//! has no upstream.

use serde::{Deserialize, Serialize};

use super::{PipelineError, ResourceVector, StageKind, StageSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageDef {
    pub name: String,
    pub kind: StageKind,
    #[serde(default)]
    pub demand: ResourceVector,
    pub service_time_hint: f64,
    pub queue_capacity: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineDef {
    pub stages: Vec<StageDef>,
    pub edges: Vec<(String, String)>,
}

impl PipelineDef {
    /// Validates the graph and returns the stage specs in execution order.
    pub fn ordered_specs(&self) -> Result<Vec<StageSpec>, PipelineError> {
        if self.stages.is_empty() {
            return Err(PipelineError::InvalidGraph("no stages".into()));
        }
        let names: Vec<&str> = self.stages.iter().map(|s| s.name.as_str()).collect();
        for window in 0..names.len() {
            if names[window + 1..].contains(&names[window]) {
                return Err(PipelineError::InvalidGraph(format!(
                    "duplicate stage name {}",
                    names[window]
                )));
            }
        }
        let index_of = |name: &str| -> Result<usize, PipelineError> {
            names
                .iter()
                .position(|&n| n == name)
                .ok_or_else(|| PipelineError::InvalidGraph(format!("edge names unknown stage {name}")))
        };

        let mut downstream: Vec<Option<usize>> = vec![None; self.stages.len()];
        let mut indegree = vec![0usize; self.stages.len()];
        for (from, to) in &self.edges {
            let f = index_of(from)?;
            let t = index_of(to)?;
            if downstream[f].is_some() {
                return Err(PipelineError::InvalidGraph(format!(
                    "stage {from} has more than one downstream edge"
                )));
            }
            downstream[f] = Some(t);
            indegree[t] += 1;
        }
        let heads: Vec<usize> = (0..self.stages.len())
            .filter(|&i| indegree[i] == 0)
            .collect();
        if heads.len() != 1 {
            return Err(PipelineError::InvalidGraph(format!(
                "expected exactly one source stage, found {}",
                heads.len()
            )));
        }
        if indegree.iter().any(|&d| d > 1) {
            return Err(PipelineError::InvalidGraph(
                "merging edges are not supported; stages must form a chain".into(),
            ));
        }

        let mut order = Vec::with_capacity(self.stages.len());
        let mut cursor = Some(heads[0]);
        let mut seen = vec![false; self.stages.len()];
        while let Some(i) = cursor {
            if seen[i] {
                return Err(PipelineError::InvalidGraph("cycle detected".into()));
            }
            seen[i] = true;
            order.push(i);
            cursor = downstream[i];
        }
        if order.len() != self.stages.len() {
            return Err(PipelineError::InvalidGraph(
                "stages are not connected into a single chain".into(),
            ));
        }

        let specs: Vec<StageSpec> = order
            .into_iter()
            .map(|i| {
                let def = &self.stages[i];
                StageSpec {
                    name: def.name.clone(),
                    kind: def.kind,
                    demand: def.demand.clone(),
                    service_time: def.service_time_hint,
                    queue_capacity: def.queue_capacity,
                }
            })
            .collect();
        for spec in &specs {
            spec.validate()?;
        }
        Ok(specs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn def(json: &str) -> PipelineDef {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn parses_and_orders_a_chain() {
        let pipeline = def(r#"{
            "stages": [
                {"name": "b", "kind": "streaming", "demand": {"cpu": 1.0}, "service_time_hint": 0.1, "queue_capacity": 8},
                {"name": "a", "kind": "streaming", "demand": {"cpu": 1.0}, "service_time_hint": 0.2, "queue_capacity": 8}
            ],
            "edges": [["a", "b"]]
        }"#);
        let specs = pipeline.ordered_specs().unwrap();
        assert_eq!(specs[0].name, "a");
        assert_eq!(specs[1].name, "b");
    }

    #[test]
    fn rejects_cycles_and_forks() {
        let cyclic = def(r#"{
            "stages": [
                {"name": "a", "kind": "streaming", "demand": {"cpu": 1.0}, "service_time_hint": 0.1, "queue_capacity": 8},
                {"name": "b", "kind": "streaming", "demand": {"cpu": 1.0}, "service_time_hint": 0.1, "queue_capacity": 8}
            ],
            "edges": [["a", "b"], ["b", "a"]]
        }"#);
        assert!(cyclic.ordered_specs().is_err());

        let forked = def(r#"{
            "stages": [
                {"name": "a", "kind": "streaming", "demand": {"cpu": 1.0}, "service_time_hint": 0.1, "queue_capacity": 8},
                {"name": "b", "kind": "streaming", "demand": {"cpu": 1.0}, "service_time_hint": 0.1, "queue_capacity": 8},
                {"name": "c", "kind": "streaming", "demand": {"cpu": 1.0}, "service_time_hint": 0.1, "queue_capacity": 8}
            ],
            "edges": [["a", "b"], ["a", "c"]]
        }"#);
        assert!(forked.ordered_specs().is_err());
    }
}
