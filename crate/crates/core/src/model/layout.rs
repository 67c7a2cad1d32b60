use super::{ModelConfig, MLP_RATIO};
use serde::{Deserialize, Serialize};

/// Parameter family, used to decide which tensors quantisation leaves alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorRole {
    Weight,
    Bias,
    Gain,
    Embedding,
}

impl TensorRole {
    fn from_name(name: &str) -> Self {
        if name.starts_with("embed.") {
            TensorRole::Embedding
        } else if name.ends_with(".bias") {
            TensorRole::Bias
        } else if name.ends_with(".gain") {
            TensorRole::Gain
        } else {
            TensorRole::Weight
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub role: TensorRole,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }
}

/// Named tensors in lexicographic name order with their flat offsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    tensors: Vec<TensorSpec>,
    total: usize,
}

impl ParamLayout {
    pub fn for_config(cfg: &ModelConfig) -> Self {
        let (d, v, c) = (cfg.hidden_dim, cfg.vocab_size, cfg.context_len);
        let f = MLP_RATIO * d;
        let mut named: Vec<(String, Vec<usize>)> = vec![
            ("embed.tok".into(), vec![v, d]),
            ("embed.pos".into(), vec![c, d]),
            ("ln_f.gain".into(), vec![d]),
            ("lm_head.weight".into(), vec![d, v]),
        ];
        for l in 0..cfg.layers {
            let p = |n: &str| format!("blocks.{l}.{n}");
            named.extend([
                (p("ln1.gain"), vec![d]),
                (p("attn.qkv.weight"), vec![d, 3 * d]),
                (p("attn.qkv.bias"), vec![3 * d]),
                (p("attn.proj.weight"), vec![d, d]),
                (p("attn.proj.bias"), vec![d]),
                (p("ln2.gain"), vec![d]),
                (p("mlp.fc.weight"), vec![d, f]),
                (p("mlp.fc.bias"), vec![f]),
                (p("mlp.proj.weight"), vec![f, d]),
                (p("mlp.proj.bias"), vec![d]),
            ]);
        }
        Self::from_named(named)
    }

    /// Sorts by name and assigns offsets.
    pub fn from_named(mut named: Vec<(String, Vec<usize>)>) -> Self {
        named.sort_by(|a, b| a.0.cmp(&b.0));
        let mut offset = 0;
        let tensors = named
            .into_iter()
            .map(|(name, shape)| {
                let role = TensorRole::from_name(&name);
                let spec = TensorSpec { name, shape, offset, role };
                offset += spec.len();
                spec
            })
            .collect();
        Self { tensors, total: offset }
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.binary_search_by(|t| t.name.as_str().cmp(name)).ok().map(|i| &self.tensors[i])
    }
}
