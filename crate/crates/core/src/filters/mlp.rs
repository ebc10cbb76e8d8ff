//! MLP inference for embedding-based classifiers (text overlay detection,
//! video type taxonomy).
//!
//! Weights load from a JSON file: a list of layers `{rows, cols,
//! data(row-major), bias}` plus a head tag (`sigmoid` or `softmax`).
//! Hidden activations are ReLU.

use std::io::Read;

use serde::{Deserialize, Serialize};

use super::FilterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpHead {
    Sigmoid,
    Softmax,
}

/// One dense layer computing `y = W x + b` with `W` of shape
/// `rows x cols` (output x input), row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpLayer {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpWeights {
    pub layers: Vec<MlpLayer>,
    pub head: MlpHead,
}

impl MlpWeights {
    pub fn from_json<R: Read>(reader: R) -> Result<Self, FilterError> {
        let weights: MlpWeights = serde_json::from_reader(reader)
            .map_err(|e| FilterError::DimensionMismatch(format!("weights file: {e}")))?;
        weights.validate()?;
        Ok(weights)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.layers.is_empty() {
            return Err(FilterError::DimensionMismatch("no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.data.len() != layer.rows * layer.cols || layer.bias.len() != layer.rows {
                return Err(FilterError::DimensionMismatch(format!(
                    "layer {i}: {}x{} with {} weights, {} biases",
                    layer.rows,
                    layer.cols,
                    layer.data.len(),
                    layer.bias.len()
                )));
            }
            if layer.data.iter().chain(&layer.bias).any(|w| !w.is_finite()) {
                return Err(FilterError::NonFiniteWeight(i));
            }
            if i > 0 && layer.cols != self.layers[i - 1].rows {
                return Err(FilterError::DimensionMismatch(format!(
                    "layer {i} expects {} inputs but layer {} emits {}",
                    layer.cols,
                    i - 1,
                    self.layers[i - 1].rows
                )));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    /// Forward pass. Outputs are probabilities: elementwise sigmoid for the
    /// sigmoid head, max-shifted softmax (summing to 1) for the softmax head.
    pub fn infer(&self, input: &[f32]) -> Result<Vec<f64>, FilterError> {
        if input.len() != self.input_dim() {
            return Err(FilterError::DimensionMismatch(format!(
                "input dim {} != expected {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut activations: Vec<f64> = input.iter().map(|&x| f64::from(x)).collect();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.rows);
            for row in 0..layer.rows {
                let weights = &layer.data[row * layer.cols..(row + 1) * layer.cols];
                let mut sum = layer.bias[row];
                for (w, a) in weights.iter().zip(&activations) {
                    sum += w * a;
                }
                next.push(if i < last { sum.max(0.0) } else { sum });
            }
            activations = next;
        }

        match self.head {
            MlpHead::Sigmoid => Ok(activations
                .into_iter()
                .map(|z| 1.0 / (1.0 + (-z).exp()))
                .collect()),
            MlpHead::Softmax => {
                let max = activations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = activations.iter().map(|z| (z - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                Ok(exps.into_iter().map(|e| e / total).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn binary_head(rows: usize, cols: usize, data: Vec<f64>, bias: Vec<f64>) -> MlpLayer {
        MlpLayer {
            rows,
            cols,
            data,
            bias,
        }
    }

    #[test]
    fn zero_weights_binary_head_gives_half() {
        let w = MlpWeights {
            layers: vec![binary_head(1, 4, vec![0.0; 4], vec![0.0])],
            head: MlpHead::Sigmoid,
        };
        let out = w.infer(&[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(out, vec![0.5]);
    }

    #[test]
    fn hand_computed_two_layer_forward_pass() {
        // x = [1, 0], W1 = I2, b1 = 0, W2 = [1, -1], b2 = 0
        // hidden = relu([1, 0]) = [1, 0]; logit = 1; sigmoid(1) = 0.731058...
        let w = MlpWeights {
            layers: vec![
                binary_head(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]),
                binary_head(1, 2, vec![1.0, -1.0], vec![0.0]),
            ],
            head: MlpHead::Sigmoid,
        };
        let out = w.infer(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(out[0], 0.731_058_578_630_004_9, epsilon = 1e-12);
    }

    #[test]
    fn equal_logits_softmax_is_uniform() {
        let w = MlpWeights {
            layers: vec![binary_head(3, 2, vec![0.0; 6], vec![2.0, 2.0, 2.0])],
            head: MlpHead::Softmax,
        };
        let out = w.infer(&[5.0, -3.0]).unwrap();
        for p in &out {
            assert_abs_diff_eq!(*p, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn softmax_sums_to_one_and_shift_preserves_argmax() {
        let base = MlpWeights {
            layers: vec![binary_head(
                4,
                3,
                vec![
                    0.3, -1.2, 0.7, //
                    1.1, 0.4, -0.2, //
                    -0.5, 0.9, 0.6, //
                    0.0, -0.3, 1.4,
                ],
                vec![0.1, -0.4, 0.2, 0.0],
            )],
            head: MlpHead::Softmax,
        };
        let mut shifted = base.clone();
        for b in shifted.layers[0].bias.iter_mut() {
            *b += 7.5;
        }
        let x = [0.8f32, -0.1, 0.44];
        let p = base.infer(&x).unwrap();
        let q = shifted.infer(&x).unwrap();
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(q.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
        };
        assert_eq!(argmax(&p), argmax(&q));
    }

    #[test]
    fn input_dimension_mismatch_rejected() {
        let w = MlpWeights {
            layers: vec![binary_head(1, 4, vec![0.0; 4], vec![0.0])],
            head: MlpHead::Sigmoid,
        };
        assert!(matches!(
            w.infer(&[1.0, 2.0]),
            Err(FilterError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn non_finite_weight_rejected_on_load() {
        let w = MlpWeights {
            layers: vec![binary_head(1, 2, vec![1.0, f64::NAN], vec![0.0])],
            head: MlpHead::Sigmoid,
        };
        assert!(matches!(w.validate(), Err(FilterError::NonFiniteWeight(0))));
    }

    #[test]
    fn chained_layer_mismatch_rejected() {
        let w = MlpWeights {
            layers: vec![
                binary_head(2, 2, vec![0.0; 4], vec![0.0; 2]),
                binary_head(1, 3, vec![0.0; 3], vec![0.0]),
            ],
            head: MlpHead::Sigmoid,
        };
        assert!(w.validate().is_err());
    }

    #[test]
    fn loads_from_json() {
        let json = r#"{
            "layers": [
                {"rows": 1, "cols": 2, "data": [0.5, -0.5], "bias": [0.0]}
            ],
            "head": "sigmoid"
        }"#;
        let w = MlpWeights::from_json(json.as_bytes()).unwrap();
        assert_eq!(w.input_dim(), 2);
        let out = w.infer(&[1.0, 1.0]).unwrap();
        assert_eq!(out, vec![0.5]);
    }
}
