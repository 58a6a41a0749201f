use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, MlpSpec, SerializedTensor};
use crate::error::{Error, Result};
use crate::physics::{BodyProperties, FluidProperties};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Fhnn,
    NeuralOde,
    NoAddedMass,
    NoLinearDrag,
    NoFlowField,
    Shallow,
    Relu,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Fhnn,
        Variant::NeuralOde,
        Variant::NoAddedMass,
        Variant::NoLinearDrag,
        Variant::NoFlowField,
        Variant::Shallow,
        Variant::Relu,
    ];

    pub const ABLATIONS: [Variant; 5] =
        [Variant::NoAddedMass, Variant::NoLinearDrag, Variant::NoFlowField, Variant::Shallow, Variant::Relu];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Fhnn => "fhnn",
            Variant::NeuralOde => "neural_ode",
            Variant::NoAddedMass => "no_added_mass",
            Variant::NoLinearDrag => "no_linear_drag",
            Variant::NoFlowField => "no_flow_field",
            Variant::Shallow => "shallow",
            Variant::Relu => "relu",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Fhnn => "FHNN",
            Variant::NeuralOde => "Neural ODE",
            Variant::NoAddedMass => "No Added Mass",
            Variant::NoLinearDrag => "No Linear Drag",
            Variant::NoFlowField => "No Flow Field",
            Variant::Shallow => "Shallow Net",
            Variant::Relu => "ReLU",
        }
    }

    /// Whether the variant carries a streamfunction network.
    pub fn has_flow(self) -> bool {
        !matches!(self, Variant::NoFlowField | Variant::NeuralOde)
    }

    pub fn is_structured(self) -> bool {
        self != Variant::NeuralOde
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown model variant `{s}`")))
    }
}

/// Upper caps for the coefficient map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapConfig {
    pub m_ax: f64,
    pub m_ay: f64,
    pub c_q: f64,
    pub c_l: f64,
}

impl Default for CapConfig {
    fn default() -> Self {
        Self { m_ax: 60.0, m_ay: 60.0, c_q: 2.0, c_l: 10.0 }
    }
}

impl CapConfig {
    pub fn to_array(self) -> [f64; 4] {
        [self.m_ax, self.m_ay, self.c_q, self.c_l]
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().all(|&c| c > 0.0 && c.is_finite()) {
            Ok(())
        } else {
            Err(Error::config(format!("caps must be positive: {self:?}")))
        }
    }
}

/// Architecture and seed of a learnable model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    pub variant: Variant,
    /// Hidden widths of the coefficient network `(r, sigma) -> 4`.
    pub coeff_hidden: Vec<usize>,
    /// Hidden widths of the streamfunction network `(x, y) -> psi`.
    pub stream_hidden: Vec<usize>,
    /// Hidden widths of the black-box network `(x, y, vx, vy) -> (ax, ay)`.
    pub node_hidden: Vec<usize>,
    pub activation: Activation,
    pub caps: CapConfig,
    /// Forces `m_ay = m_ax`; used for isotropy checks only.
    #[serde(default)]
    pub tied_added_mass: bool,
    pub seed: u64,
}

impl ModelDescriptor {
    /// The default architecture for `variant`, with the ablation rules applied.
    pub fn for_variant(variant: Variant, seed: u64) -> Self {
        let mut d = Self {
            variant,
            coeff_hidden: vec![64, 64],
            stream_hidden: vec![64, 64],
            node_hidden: vec![64, 64],
            activation: Activation::Tanh,
            caps: CapConfig::default(),
            tied_added_mass: false,
            seed,
        };
        d.apply_variant_rules();
        d
    }

    /// Shallow: one hidden layer of width 16 in both nets. ReLU: ReLU activation.
    pub fn apply_variant_rules(&mut self) {
        match self.variant {
            Variant::Shallow => {
                self.coeff_hidden = vec![16];
                self.stream_hidden = vec![16];
            }
            Variant::Relu => self.activation = Activation::Relu,
            _ => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.caps.validate()?;
        for (name, w) in [("coeff_hidden", &self.coeff_hidden), ("stream_hidden", &self.stream_hidden), ("node_hidden", &self.node_hidden)] {
            if w.contains(&0) {
                return Err(Error::config(format!("model.{name} has a zero width")));
            }
        }
        if self.variant == Variant::Relu && self.activation != Activation::Relu {
            return Err(Error::config("variant `relu` requires activation = relu"));
        }
        Ok(())
    }

    fn spec(prefix: &str, input: usize, hidden: &[usize], output: usize, act: Activation) -> MlpSpec {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        MlpSpec::new(prefix, sizes, act)
    }

    pub fn coeff_spec(&self) -> MlpSpec {
        Self::spec("coeff", 2, &self.coeff_hidden, 4, self.activation)
    }

    pub fn stream_spec(&self) -> MlpSpec {
        Self::spec("stream", 2, &self.stream_hidden, 1, self.activation)
    }

    pub fn node_spec(&self) -> MlpSpec {
        Self::spec("node", 4, &self.node_hidden, 2, self.activation)
    }
}

/// Known physics handed to a model: dry mass, forcing and fluid constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalContext {
    pub body: BodyProperties,
    pub fluid: FluidProperties,
}

pub const CHECKPOINT_FORMAT: &str = "fhnn-checkpoint/1";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Epoch the weights come from (1-based; 0 for untrained).
    pub epoch: usize,
    pub val_total: Option<f64>,
    pub train_total: Option<f64>,
}

/// Serialized model: descriptor, physics context and named tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub descriptor: ModelDescriptor,
    pub context: PhysicalContext,
    pub params: BTreeMap<String, SerializedTensor>,
    #[serde(default)]
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact { path: path.to_path_buf(), producer: "fhnn train".into() });
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::config(format!("unsupported checkpoint format `{}`", ckpt.format)));
        }
        Ok(ckpt)
    }
}
