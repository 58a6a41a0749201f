//! Finite-difference and convergence oracles shared by the integration
//! tests and the acceptance harness.
#![allow(dead_code)]

use fhnn::autodiff::{Activation, MlpSpec, ParamStore, Tape, Tensor, Var};
use fhnn::model::{stream_eval, LearnedFlow, Model, ModelDescriptor, PhysicalContext, Variant};
use fhnn::physics::{
    generate_dataset, integrate, numerical_divergence, DatasetConfig, Scenario, ScenarioConfig, ScenarioKind, State,
};
use fhnn::training::{batch_losses, transitions, LossWeights, Transition};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `< 1` iff the analytic value matches the finite difference with relative
/// error below `rel` or absolute error below `abs`.
pub fn fd_score(analytic: f64, fd: f64, rel: f64, abs: f64) -> f64 {
    let d = (analytic - fd).abs();
    let scale = analytic.abs().max(fd.abs());
    let r = if scale > 0.0 { d / scale } else { 0.0 };
    (d / abs).min(r / rel)
}

/// Pins a closure to the higher-ranked tape signature.
fn graph<F: for<'t> Fn(&'t Tape, &ParamStore) -> Var<'t>>(f: F) -> F {
    f
}

/// Central-difference check of every parameter entry of `store` against the
/// tape gradient of `f`. Returns the worst `fd_score` (rel 1e-4, abs 1e-6).
pub fn check_param_gradients(store: &mut ParamStore, f: impl for<'t> Fn(&'t Tape, &ParamStore) -> Var<'t>, h: f64) -> f64 {
    let tape = Tape::new();
    let root = f(&tape, store);
    let grads = tape.backward(root).unwrap().params(store);
    let mut worst: f64 = 0.0;
    let names: Vec<String> = store.names().to_vec();
    for (id, name) in names.iter().enumerate() {
        let n = store.get(name).unwrap().len();
        for k in 0..n {
            let eval = |store: &mut ParamStore, delta: f64| {
                let orig = store.get(name).unwrap().as_slice().unwrap()[k];
                store.get_mut(name).unwrap().as_slice_mut().unwrap()[k] = orig + delta;
                let tape = Tape::new();
                let v = f(&tape, store).scalar();
                store.get_mut(name).unwrap().as_slice_mut().unwrap()[k] = orig;
                v
            };
            let fd = (eval(store, h) - eval(store, -h)) / (2.0 * h);
            let g = grads.get(id).as_slice().unwrap()[k];
            worst = worst.max(fd_score(g, fd, 1e-4, 1e-6));
        }
    }
    worst
}

fn random_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
}

/// Gradient check of a random composite of every smooth tape operation.
pub fn random_graph_score(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, cols, k) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3));
    let mut store = ParamStore::new();
    store.insert("a", random_tensor(&mut rng, rows, cols)).unwrap();
    store.insert("b", random_tensor(&mut rng, rows, cols)).unwrap();
    store.insert("c", random_tensor(&mut rng, 1, cols)).unwrap();
    store.insert("w", random_tensor(&mut rng, cols, k)).unwrap();
    store.insert("v", random_tensor(&mut rng, k, cols)).unwrap();
    store.insert("s", random_tensor(&mut rng, 1, 1)).unwrap();
    let n_ops = rng.random_range(3..=8);
    let ops: Vec<u8> = (0..n_ops).map(|_| rng.random_range(0..16)).collect();
    let f = graph(move |tape, st| {
        let p = |n: &str| tape.param(st, n).unwrap();
        let (b, c, w, v, s) = (p("b"), p("c"), p("w"), p("v"), p("s"));
        let mut x = p("a");
        for &op in &ops {
            x = match op {
                0 => x + b,
                1 => x - c,
                2 => x * b,
                3 => x / (b.square() + 1.0),
                4 => x.tanh(),
                5 => x.sigmoid(),
                6 => x.softplus(),
                7 => (x * 0.3).exp(),
                8 => (x.square() + 1.0).ln(),
                9 => (x.square() + 0.5).sqrt(),
                10 => x.square() * 0.5,
                11 => x.matmul(w).matmul(v) * 0.5,
                12 => x * s,
                13 => {
                    let cols: Vec<_> = (0..x.shape().1).rev().map(|j| x.column(j)).collect();
                    tape.concat(&cols)
                }
                14 => x + x.row_sum() * 0.1,
                _ => -x + x.mean() * s - 0.2,
            };
        }
        x.sum() * 0.5 + (x * c).mean()
    });
    check_param_gradients(&mut store, f, 1e-6)
}

/// A small dataset and model for loss-level gradient checks.
pub fn small_problem(variant: Variant, seed: u64) -> (Model, Vec<Transition>, f64) {
    let ds_cfg = DatasetConfig { n_train: 2, n_test: 1, duration: 1.0, ..DatasetConfig::default() };
    let ds = generate_dataset(&ScenarioConfig::with_kind(ScenarioKind::MorisonWave), &ds_cfg, seed, false).unwrap();
    let sc = ds.manifest.scenario_for(ds.manifest.seed).unwrap();
    let mut d = ModelDescriptor::for_variant(variant, seed);
    d.coeff_hidden = vec![5];
    d.stream_hidden = vec![5];
    d.node_hidden = vec![5];
    let model = Model::new(d, PhysicalContext { body: sc.body, fluid: sc.fluid }).unwrap();
    let batch: Vec<Transition> = transitions(&ds.train()[0]).unwrap().into_iter().step_by(4).collect();
    (model, batch, ds.manifest.dataset.dt_sample)
}

/// Gradient check of the composite loss (all three terms) of `variant`.
pub fn loss_gradient_score(variant: Variant, seed: u64) -> f64 {
    let (mut model, batch, dt) = small_problem(variant, seed);
    let weights = LossWeights { flow: if variant.has_flow() { 1e-2 } else { 0.0 }, ..LossWeights::default() };
    let descriptor = model.descriptor.clone();
    let context = model.context.clone();
    let f = graph(|tape, st| {
        let m = Model { descriptor: descriptor.clone(), params: st.clone(), context: context.clone(), flow_override: None };
        let bound = m.bind(tape).unwrap();
        batch_losses(&bound, &batch, dt, &weights).unwrap().total
    });
    check_param_gradients(&mut model.params, f, 1e-6)
}

/// A randomly initialised stream network `2 -> widths -> 1`.
pub fn random_stream_net(seed: u64, widths: &[usize], act: Activation) -> (MlpSpec, ParamStore) {
    let mut sizes = vec![2];
    sizes.extend_from_slice(widths);
    sizes.push(1);
    let spec = MlpSpec::new("stream", sizes.clone(), act);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for l in 0..spec.n_layers() {
        store.insert(spec.weight_name(l), random_tensor(&mut rng, sizes[l], sizes[l + 1])).unwrap();
        store.insert(spec.bias_name(l), random_tensor(&mut rng, 1, sizes[l + 1]) * 0.5).unwrap();
    }
    (spec, store)
}

/// `(psi, grad, [hxx, hxy, hyy])` at one point.
pub fn stream_at(spec: &MlpSpec, store: &ParamStore, x: f64, y: f64) -> (f64, [f64; 2], [f64; 3]) {
    let tape = Tape::new();
    let net = spec.bind(&tape, store).unwrap();
    let e = stream_eval(&net, tape.input_scalar(x), tape.input_scalar(y), true).unwrap();
    let h = e.hess.unwrap();
    (e.psi.scalar(), [e.grad[0].scalar(), e.grad[1].scalar()], [h[0].scalar(), h[1].scalar(), h[2].scalar()])
}

/// Worst gradient `fd_score` (rel 1e-6) and worst absolute Hessian error,
/// where both off-diagonal FD estimates are compared with `hxy`.
pub fn stream_fd_errors(seed: u64, act: Activation, points: &[[f64; 2]]) -> (f64, f64) {
    let (spec, store) = random_stream_net(seed, &[8, 8], act);
    let h = 1e-5;
    let (mut g_worst, mut h_worst): (f64, f64) = (0.0, 0.0);
    for &[x, y] in points {
        let (_, g, hs) = stream_at(&spec, &store, x, y);
        let psi = |x, y| stream_at(&spec, &store, x, y).0;
        let grad = |x, y| stream_at(&spec, &store, x, y).1;
        let fd_g = [(psi(x + h, y) - psi(x - h, y)) / (2.0 * h), (psi(x, y + h) - psi(x, y - h)) / (2.0 * h)];
        for i in 0..2 {
            g_worst = g_worst.max(fd_score(g[i], fd_g[i], 1e-6, 1e-9));
        }
        let (gxp, gxm, gyp, gym) = (grad(x + h, y), grad(x - h, y), grad(x, y + h), grad(x, y - h));
        let fd_h = [
            (gxp[0] - gxm[0]) / (2.0 * h),
            (gyp[0] - gym[0]) / (2.0 * h),
            (gxp[1] - gxm[1]) / (2.0 * h),
            (gyp[1] - gym[1]) / (2.0 * h),
        ];
        for (a, fd) in [(hs[0], fd_h[0]), (hs[1], fd_h[1]), (hs[1], fd_h[2]), (hs[2], fd_h[3])] {
            h_worst = h_worst.max((a - fd).abs());
        }
    }
    (g_worst, h_worst)
}

/// Cell centres of an `n x n` grid on `[-4, 4]^2`.
pub fn grid(n: usize) -> Vec<[f64; 2]> {
    let step = 8.0 / n as f64;
    (0..n * n).map(|k| [-4.0 + ((k % n) as f64 + 0.5) * step, -4.0 + ((k / n) as f64 + 0.5) * step]).collect()
}

/// Largest `|div u|` of a randomly initialised FHNN's learned flow on the 20 x 20 grid.
pub fn learned_divergence_max(seed: u64) -> f64 {
    let sc = fhnn::physics::make_scenario(&ScenarioConfig::default(), 0).unwrap();
    let model = Model::new(
        ModelDescriptor::for_variant(Variant::Fhnn, seed),
        PhysicalContext { body: sc.body, fluid: sc.fluid },
    )
    .unwrap();
    let flow = LearnedFlow(&model);
    grid(20).iter().map(|p| numerical_divergence(&flow, p[0], p[1], 0.0, 1e-4).abs()).fold(0.0, f64::max)
}

/// Observed order from three step sizes `h, h/2, h/4` of a self-convergence study.
pub fn observed_order(coarse: f64, mid: f64, fine: f64) -> f64 {
    ((coarse - mid).abs() / (mid - fine).abs()).log2()
}

fn endpoint(f: impl FnMut(&State, f64) -> fhnn::Result<State>, s0: State, horizon: f64, h: f64) -> State {
    *integrate(f, s0, 0.0, horizon, h, 1).unwrap().states.last().unwrap()
}

/// RK4 order on `y' = -y` against the exact solution, from `h = 0.2` and `0.1`.
pub fn rk4_order_decay() -> f64 {
    let f = |s: &State, _t: f64| Ok(State::new(-s.x, 0.0, 0.0, 0.0));
    let err = |h: f64| (endpoint(f, State::new(1.0, 0.0, 0.0, 0.0), 2.0, h).x - (-2f64).exp()).abs();
    (err(0.2) / err(0.1)).log2()
}

/// RK4 self-convergence order on the steady-vortex system (position error norm).
pub fn rk4_order_vortex() -> f64 {
    let sc: Scenario = fhnn::physics::make_scenario(&ScenarioConfig::default(), 0).unwrap();
    let s0 = State::new(1.5, 0.5, 0.3, -0.2);
    let run = |h: f64| endpoint(|s: &State, t: f64| sc.derivative(s, t), s0, 4.0, h);
    let (a, b, c) = (run(0.2), run(0.1), run(0.05));
    let d1 = (a.x - b.x).hypot(a.y - b.y);
    let d2 = (b.x - c.x).hypot(b.y - c.y);
    (d1 / d2).log2()
}
