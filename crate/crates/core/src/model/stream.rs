//! Streamfunction evaluation with forward-propagated input derivatives.

use ndarray::array;

use crate::autodiff::{BoundMlp, Var};
use crate::error::{Error, Result};

/// `psi`, its gradient and (optionally) its Hessian for a batch of points,
/// each an `n x 1` column on the tape.
#[derive(Clone, Copy, Debug)]
pub struct StreamEval<'t> {
    pub psi: Var<'t>,
    /// `[psi_x, psi_y]`
    pub grad: [Var<'t>; 2],
    /// `[psi_xx, psi_xy, psi_yy]`
    pub hess: Option<[Var<'t>; 3]>,
}

impl<'t> StreamEval<'t> {
    /// Flow velocity `u = (-psi_y, psi_x)`.
    pub fn velocity(&self) -> [Var<'t>; 2] {
        [-self.grad[1], self.grad[0]]
    }

    /// `|H psi|_F^2` per point.
    pub fn hessian_frobenius_sq(&self) -> Option<Var<'t>> {
        self.hess.map(|[xx, xy, yy]| xx.square() + xy.square() * 2.0 + yy.square())
    }
}

/// Value and input-derivative channels of one layer's activations.
struct Channels<'t> {
    v: Var<'t>,
    dx: Var<'t>,
    dy: Var<'t>,
    /// Second derivatives; `None` means identically zero.
    dxx: Option<Var<'t>>,
    dxy: Option<Var<'t>>,
    dyy: Option<Var<'t>>,
}

fn add_opt<'t>(a: Option<Var<'t>>, b: Option<Var<'t>>) -> Option<Var<'t>> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a + b),
        (a, None) => a,
        (None, b) => b,
    }
}

fn mul_opt<'t>(a: Option<Var<'t>>, b: Var<'t>) -> Option<Var<'t>> {
    a.map(|a| a * b)
}

/// Evaluates the stream net at points `(x, y)` (`n x 1` columns). The
/// derivative channels are built from the same parameter nodes, so any loss
/// on `psi`, its gradient or Hessian differentiates back to the weights.
pub fn stream_eval<'t>(net: &BoundMlp<'t>, x: Var<'t>, y: Var<'t>, hessian: bool) -> Result<StreamEval<'t>> {
    if net.input_dim() != 2 {
        return Err(Error::config(format!("stream net takes 2 inputs, has {}", net.input_dim())));
    }
    let tape = x.tape();
    let input = tape.concat(&[x, y]);
    let first = &net.layers[0];
    let mut ch = Channels {
        v: first.affine(input),
        dx: tape.constant(array![[1.0, 0.0]]).matmul(first.weight),
        dy: tape.constant(array![[0.0, 1.0]]).matmul(first.weight),
        dxx: None,
        dxy: None,
        dyy: None,
    };

    let last = net.layers.len() - 1;
    for (l, layer) in net.layers.iter().enumerate() {
        if l > 0 {
            ch = Channels {
                v: layer.affine(ch.v),
                dx: ch.dx.matmul(layer.weight),
                dy: ch.dy.matmul(layer.weight),
                dxx: ch.dxx.map(|d| d.matmul(layer.weight)),
                dxy: ch.dxy.map(|d| d.matmul(layer.weight)),
                dyy: ch.dyy.map(|d| d.matmul(layer.weight)),
            };
        }
        if l == last && !net.activate_output {
            break;
        }
        let a = net.activation.apply(ch.v);
        let (d1, d2) = net.activation.derivatives(ch.v, a);
        let (dx, dy) = (ch.dx, ch.dy);
        let (dxx, dxy, dyy) = if hessian {
            let curv = |p: Var<'t>, q: Var<'t>| d2.map(|d2| d2 * p * q);
            (
                add_opt(curv(dx, dx), mul_opt(ch.dxx, d1)),
                add_opt(curv(dx, dy), mul_opt(ch.dxy, d1)),
                add_opt(curv(dy, dy), mul_opt(ch.dyy, d1)),
            )
        } else {
            (None, None, None)
        };
        ch = Channels { v: a, dx: d1 * dx, dy: d1 * dy, dxx, dxy, dyy };
    }

    let psi = ch.v;
    // gradient channels can be a broadcast row for a purely affine net
    let grad = [psi.full_like(0.0) + ch.dx, psi.full_like(0.0) + ch.dy];
    let hess = hessian.then(|| {
        let fill = |d: Option<Var<'t>>| match d {
            Some(d) => psi.full_like(0.0) + d,
            None => psi.full_like(0.0),
        };
        [fill(ch.dxx), fill(ch.dxy), fill(ch.dyy)]
    });
    Ok(StreamEval { psi, grad, hess })
}
