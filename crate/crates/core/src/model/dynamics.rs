//! The learnable dynamics `f_theta(s, t)`: FHNN, its ablations and the
//! black-box Neural ODE, evaluated in batches on a tape.

use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::descriptor::{CapConfig, Checkpoint, CheckpointMeta, ModelDescriptor, PhysicalContext, Variant, CHECKPOINT_FORMAT};
use super::stream::{stream_eval, StreamEval};
use crate::autodiff::{sigmoid, softplus, BoundMlp, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::physics::{
    acceleration, relative_kinematics, FlowField, FlowFieldProvider, HydroCoefficients, OdeState, State, Vec2,
};

/// The cap map on one coefficient: `C * sigmoid(softplus(z) / C)` with the
/// raw input scaled as `z = C * o`, so one unit of network output moves every
/// coefficient by a comparable fraction of its range.
pub fn cap_map(o: f64, cap: f64) -> f64 {
    cap * sigmoid(softplus(cap * o) / cap)
}

/// Inverse of [`cap_map`] on `(C/2, C)`.
pub fn cap_inverse(value: f64, cap: f64) -> Result<f64> {
    let p = value / cap;
    if !(p > 0.5 && p < 1.0) {
        return Err(Error::config(format!("{value} is outside the reachable range ({}, {cap})", cap / 2.0)));
    }
    let sp = cap * (p / (1.0 - p)).ln();
    // softplus^-1(sp) = sp + ln(1 - e^-sp)
    let z = sp + (-(-sp).exp()).ln_1p();
    Ok(z / cap)
}

fn cap_map_var<'t>(o: Var<'t>, cap: f64) -> Var<'t> {
    ((o * cap).softplus() / cap).sigmoid() * cap
}

/// A batch of states as four `n x 1` tape columns.
#[derive(Clone, Copy, Debug)]
pub struct BatchState<'t> {
    pub x: Var<'t>,
    pub y: Var<'t>,
    pub vx: Var<'t>,
    pub vy: Var<'t>,
}

impl<'t> BatchState<'t> {
    pub fn constant(tape: &'t Tape, states: &[State]) -> Self {
        let col = |f: fn(&State) -> f64| tape.constant_column(&states.iter().map(f).collect::<Vec<_>>());
        Self { x: col(|s| s.x), y: col(|s| s.y), vx: col(|s| s.vx), vy: col(|s| s.vy) }
    }

    pub fn rows(&self) -> usize {
        self.x.shape().0
    }

    pub fn components(&self) -> [Var<'t>; 4] {
        [self.x, self.y, self.vx, self.vy]
    }

    pub fn to_states(&self) -> Vec<State> {
        let [x, y, vx, vy] = self.components().map(|c| c.column_values());
        (0..x.len()).map(|i| State::new(x[i], y[i], vx[i], vy[i])).collect()
    }

    /// Mean over rows and all four components of the squared difference.
    pub fn mse(&self, target: &BatchState<'t>) -> Var<'t> {
        let a = self.components();
        let b = target.components();
        let sq = (0..4).map(|i| (a[i] - b[i]).square().mean()).reduce(|p, q| p + q).expect("four terms");
        sq * 0.25
    }
}

impl<'t> OdeState for BatchState<'t> {
    fn axpy(&self, h: f64, k: &Self) -> Self {
        Self { x: self.x + k.x * h, y: self.y + k.y * h, vx: self.vx + k.vx * h, vy: self.vy + k.vy * h }
    }

    fn all_finite(&self) -> bool {
        self.components().iter().all(|c| c.is_finite())
    }
}

/// A learnable model: architecture, weights and the known physics.
#[derive(Clone, Debug)]
pub struct Model {
    pub descriptor: ModelDescriptor,
    pub params: ParamStore,
    pub context: PhysicalContext,
    /// Replaces the stream net by an analytic field. Plug-in oracle only;
    /// never serialized.
    pub flow_override: Option<FlowField>,
}

impl Model {
    /// Fresh model with seeded Glorot weights and the coefficient pre-bias.
    pub fn new(descriptor: ModelDescriptor, context: PhysicalContext) -> Result<Self> {
        descriptor.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(descriptor.seed);
        let mut params = ParamStore::new();
        if descriptor.variant.is_structured() {
            let coeff = descriptor.coeff_spec();
            coeff.init(&mut params, &mut rng)?;
            let caps = descriptor.caps.to_array();
            let bias = params.get_mut(&coeff.bias_name(coeff.n_layers() - 1)).expect("just created");
            for (b, c) in bias.iter_mut().zip(caps) {
                *b = cap_inverse(0.75 * c, c)?;
            }
            if descriptor.variant.has_flow() {
                descriptor.stream_spec().init(&mut params, &mut rng)?;
            }
        } else {
            descriptor.node_spec().init(&mut params, &mut rng)?;
        }
        Ok(Self { descriptor, params, context, flow_override: None })
    }

    pub fn variant(&self) -> Variant {
        self.descriptor.variant
    }

    pub fn caps(&self) -> CapConfig {
        self.descriptor.caps
    }

    /// Sets the coefficient net to output `coeffs` everywhere: zero output
    /// weights and the inverse-capped bias.
    pub fn set_constant_coefficients(&mut self, coeffs: HydroCoefficients) -> Result<()> {
        let spec = self.descriptor.coeff_spec();
        let last = spec.n_layers() - 1;
        let w = self
            .params
            .get_mut(&spec.weight_name(last))
            .ok_or_else(|| Error::config("model has no coefficient network"))?;
        w.fill(0.0);
        let caps = self.descriptor.caps.to_array();
        let target = coeffs.to_array();
        let bias = self.params.get_mut(&spec.bias_name(last)).expect("bias exists with weight");
        for j in 0..4 {
            bias[[0, j]] = cap_inverse(target[j], caps[j])?;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, meta: CheckpointMeta) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            descriptor: self.descriptor.clone(),
            context: self.context.clone(),
            params: self.params.to_serialized(),
            meta,
        }
    }

    /// Rebuilds the architecture from the descriptor and loads the weights;
    /// any name or shape mismatch is an error.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut model = Model::new(ckpt.descriptor.clone(), ckpt.context.clone())?;
        model.params.load_serialized(&ckpt.params)?;
        Ok(model)
    }

    /// Loads a checkpoint file, refusing one of a different variant.
    pub fn load(path: &Path, expected: Option<Variant>) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        if let Some(v) = expected {
            if ckpt.descriptor.variant != v {
                return Err(Error::config(format!(
                    "{} holds a `{}` model, expected `{v}`",
                    path.display(),
                    ckpt.descriptor.variant
                )));
            }
        }
        Model::from_checkpoint(&ckpt)
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> Result<BoundModel<'_, 't>> {
        let d = &self.descriptor;
        let (mut coeff, mut stream, mut node) = (None, None, None);
        if d.variant.is_structured() {
            coeff = Some(d.coeff_spec().bind(tape, &self.params)?);
            if d.variant.has_flow() && self.flow_override.is_none() {
                stream = Some(d.stream_spec().bind(tape, &self.params)?);
            }
        } else {
            node = Some(d.node_spec().bind(tape, &self.params)?);
        }
        Ok(BoundModel { model: self, tape, coeff, stream, node })
    }

    /// State derivatives for plain states, all at time `t`.
    pub fn derivatives(&self, states: &[State], t: f64) -> Result<Vec<State>> {
        let tape = Tape::new();
        let bound = self.bind(&tape)?;
        let s = BatchState::constant(&tape, states);
        let (d, _) = bound.derivative(&s, &vec![t; states.len()], false)?;
        Ok(d.to_states())
    }

    /// Learned flow velocity at `points` (zero for flow-free variants).
    pub fn flow_velocities(&self, points: &[[f64; 2]], t: f64) -> Result<Vec<[f64; 2]>> {
        let tape = Tape::new();
        let bound = self.bind(&tape)?;
        let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        let u = bound.flow(tape.constant_column(&xs), tape.constant_column(&ys), &vec![t; points.len()], false)?;
        let (ux, uy) = (u.velocity.x.column_values(), u.velocity.y.column_values());
        Ok(ux.into_iter().zip(uy).map(|(a, b)| [a, b]).collect())
    }

    /// Learned coefficients at `states`, with sigma from the learned flow.
    pub fn coefficients(&self, states: &[State], t: f64) -> Result<Vec<HydroCoefficients>> {
        let tape = Tape::new();
        let bound = self.bind(&tape)?;
        let s = BatchState::constant(&tape, states);
        let flow = bound.flow(s.x, s.y, &vec![t; states.len()], false)?;
        let (c, _) = bound.coefficients(&s, flow.velocity)?;
        let cols = [c.m_ax, c.m_ay, c.c_q, c.c_l].map(|v| v.column_values());
        Ok((0..states.len())
            .map(|i| HydroCoefficients::from_array([cols[0][i], cols[1][i], cols[2][i], cols[3][i]]))
            .collect())
    }
}

/// Flow velocity columns plus the stream evaluation they came from.
pub struct FlowEval<'t> {
    pub velocity: Vec2<Var<'t>>,
    pub stream: Option<StreamEval<'t>>,
}

/// A model whose weights are loaded on a tape.
pub struct BoundModel<'m, 't> {
    pub model: &'m Model,
    pub tape: &'t Tape,
    pub coeff: Option<BoundMlp<'t>>,
    pub stream: Option<BoundMlp<'t>>,
    pub node: Option<BoundMlp<'t>>,
}

impl<'t> BoundModel<'_, 't> {
    /// Flow at `(x, y)`: `u = (-psi_y, psi_x)` from the stream net, the
    /// override field, or zero.
    pub fn flow(&self, x: Var<'t>, y: Var<'t>, times: &[f64], hessian: bool) -> Result<FlowEval<'t>> {
        if let Some(net) = &self.stream {
            let e = stream_eval(net, x, y, hessian)?;
            let [ux, uy] = e.velocity();
            return Ok(FlowEval { velocity: Vec2::new(ux, uy), stream: Some(e) });
        }
        if let (Some(field), true) = (&self.model.flow_override, self.model.variant().has_flow()) {
            let (xs, ys) = (x.column_values(), y.column_values());
            let u: Vec<[f64; 2]> = (0..xs.len()).map(|i| field.velocity(xs[i], ys[i], times[i])).collect();
            let ux = self.tape.constant_column(&u.iter().map(|v| v[0]).collect::<Vec<_>>());
            let uy = self.tape.constant_column(&u.iter().map(|v| v[1]).collect::<Vec<_>>());
            return Ok(FlowEval { velocity: Vec2::new(ux, uy), stream: None });
        }
        let zero = x.full_like(0.0);
        Ok(FlowEval { velocity: Vec2::new(zero, zero), stream: None })
    }

    /// Capped coefficients from features `(r, sigma)`, with the variant
    /// switches applied. Also returns the relative kinematics used.
    pub fn coefficients(
        &self,
        s: &BatchState<'t>,
        u: Vec2<Var<'t>>,
    ) -> Result<(HydroCoefficients<Var<'t>>, crate::physics::RelativeKinematics<Var<'t>>)> {
        let net = self.coeff.as_ref().ok_or_else(|| Error::Usage("variant has no coefficient network".into()))?;
        let fluid = &self.model.context.fluid;
        let kin = relative_kinematics(Vec2::new(s.vx, s.vy), u, fluid);
        let r = (s.x.square() + s.y.square()).sqrt();
        let raw = net.forward(self.tape.concat(&[r, kin.sigma]))?;
        let caps = self.model.descriptor.caps.to_array();
        let [m_ax, m_ay, c_q, c_l] = [0, 1, 2, 3].map(|j| cap_map_var(raw.column(j), caps[j]));
        let zero = r.full_like(0.0);
        let mut c = HydroCoefficients { m_ax, m_ay, c_q, c_l };
        if self.model.descriptor.tied_added_mass {
            c.m_ay = c.m_ax;
        }
        match self.model.variant() {
            Variant::NoAddedMass => {
                c.m_ax = zero;
                c.m_ay = zero;
            }
            Variant::NoLinearDrag => c.c_l = zero,
            _ => {}
        }
        Ok((c, kin))
    }

    /// `(vx, vy, ax, ay)` for every row; `times` are the rows' absolute times.
    /// With `hessian` the stream evaluation carries second derivatives.
    pub fn derivative(
        &self,
        s: &BatchState<'t>,
        times: &[f64],
        hessian: bool,
    ) -> Result<(BatchState<'t>, Option<StreamEval<'t>>)> {
        if let Some(net) = &self.node {
            let out = net.forward(self.tape.concat(&[s.x, s.y, s.vx, s.vy]))?;
            let d = BatchState { x: s.vx, y: s.vy, vx: out.column(0), vy: out.column(1) };
            return Ok((d, None));
        }
        let flow = self.flow(s.x, s.y, times, hessian)?;
        let (coeffs, _) = self.coefficients(s, flow.velocity)?;
        let ctx = &self.model.context;
        let v = Vec2::new(s.vx, s.vy);
        let external = match ctx.body.forcing.wave(times[0]) {
            None => None,
            Some(_) => {
                let waves: Vec<([f64; 2], [f64; 2])> =
                    times.iter().map(|&t| ctx.body.forcing.wave(t).expect("forcing is time-independent in kind")).collect();
                let col = |f: fn(&([f64; 2], [f64; 2])) -> f64| {
                    self.tape.constant_column(&waves.iter().map(f).collect::<Vec<_>>())
                };
                let u_w = Vec2::new(col(|w| w.0[0]), col(|w| w.0[1]));
                let du_w = Vec2::new(col(|w| w.1[0]), col(|w| w.1[1]));
                ctx.body.forcing.force(v, u_w, du_w, &ctx.fluid)
            }
        };
        let a = acceleration(v, flow.velocity, &coeffs, ctx.body.mass, &ctx.fluid, external)?;
        Ok((BatchState { x: s.vx, y: s.vy, vx: a.x, vy: a.y }, flow.stream))
    }
}

/// The learned flow as a [`FlowFieldProvider`]; evaluation failures yield NaN.
pub struct LearnedFlow<'a>(pub &'a Model);

impl FlowFieldProvider for LearnedFlow<'_> {
    fn velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        self.0.flow_velocities(&[[x, y]], t).map(|u| u[0]).unwrap_or([f64::NAN; 2])
    }

    fn streamfunction(&self, x: f64, y: f64, _t: f64) -> Option<f64> {
        let tape = Tape::new();
        let bound = self.0.bind(&tape).ok()?;
        let net = bound.stream.as_ref()?;
        stream_eval(net, tape.constant_scalar(x), tape.constant_scalar(y), false).ok().map(|e| e.psi.scalar())
    }
}

/// Overwrites all weights with zeros (biases included).
pub fn zero_weights(params: &mut ParamStore) {
    for v in params.values_mut() {
        *v = Array2::zeros(v.raw_dim());
    }
}
