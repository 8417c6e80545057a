//! The joint training objective on one `(X, Y, P_c)` patch triple: both the
//! within-domain reconstruction workflow and the translate / re-encode /
//! cycle workflow, scored by the four loss terms.

use std::sync::Arc;

use crate::autograd::{Eager, Exec, Graph};
use crate::error::{Error, Result};
use crate::losses::{LossBreakdown, LossToggles, ALIGN_SCALE};
use crate::map::BinaryMap;
use crate::model::{content_net, decoder_net, style_net, Domain, ModelParameters, Patch};
use crate::tensor::{Real, Tensor};

struct Terms<V> {
    recon: Option<V>,
    trans: Option<V>,
    cyc: Option<V>,
    align: Option<V>,
    total: V,
}

fn build<T: Real, E: Exec<T>>(
    ex: &mut E,
    params: &ModelParameters<T>,
    x: Tensor<T>,
    y: Tensor<T>,
    mask: &Arc<BinaryMap>,
    toggles: LossToggles,
) -> Terms<E::Var> {
    let x = ex.constant(x);
    let y = ex.constant(y);

    let cx = content_net(ex, params, Domain::X, &x);
    let cy = content_net(ex, params, Domain::Y, &y);
    let sx = style_net(ex, params, Domain::X, &x);
    let sy = style_net(ex, params, Domain::Y, &y);

    let recon = toggles.recon.then(|| {
        let x_rec = decoder_net(ex, params, Domain::X, &cx, &sx);
        let y_rec = decoder_net(ex, params, Domain::Y, &cy, &sy);
        let a = ex.mse(&x, &x_rec);
        let b = ex.mse(&y, &y_rec);
        ex.sum(&[a, b])
    });

    let mut trans = None;
    let mut cyc = None;
    let mut align = None;
    if toggles.trans || toggles.cyc || toggles.align {
        let x_hat = decoder_net(ex, params, Domain::X, &cy, &sx);
        let y_hat = decoder_net(ex, params, Domain::Y, &cx, &sy);
        // codes recovered from the translated images
        let cx_rec = content_net(ex, params, Domain::Y, &y_hat);
        let cy_rec = content_net(ex, params, Domain::X, &x_hat);

        if toggles.trans || toggles.cyc {
            let sy_rec = style_net(ex, params, Domain::Y, &y_hat);
            let sx_rec = style_net(ex, params, Domain::X, &x_hat);
            if toggles.trans {
                let terms = [
                    ex.mse(&cx, &cx_rec),
                    ex.mse(&cy, &cy_rec),
                    ex.mse(&sx, &sx_rec),
                    ex.mse(&sy, &sy_rec),
                ];
                trans = Some(ex.sum(&terms));
            }
            if toggles.cyc {
                let x_cyc = decoder_net(ex, params, Domain::X, &cx_rec, &sx_rec);
                let y_cyc = decoder_net(ex, params, Domain::Y, &cy_rec, &sy_rec);
                let a = ex.mse(&x, &x_cyc);
                let b = ex.mse(&y, &y_cyc);
                cyc = Some(ex.sum(&[a, b]));
            }
        }
        if toggles.align {
            let m = T::from_f64_lossy(ALIGN_SCALE);
            align = Some(ex.align([&cx, &cy_rec, &cx_rec, &cy], mask, m));
        }
    }

    let parts: Vec<E::Var> = [&recon, &trans, &cyc, &align]
        .into_iter()
        .flatten()
        .cloned()
        .collect();
    let total = ex.sum(&parts);
    Terms {
        recon,
        trans,
        cyc,
        align,
        total,
    }
}

fn breakdown<T: Real, E: Exec<T>>(ex: &E, t: &Terms<E::Var>) -> LossBreakdown {
    let get = |v: &Option<E::Var>| v.as_ref().map_or(0.0, |v| ex.scalar(v).to_f64_lossy());
    LossBreakdown {
        recon: get(&t.recon),
        trans: get(&t.trans),
        cyc: get(&t.cyc),
        align: get(&t.align),
        total: ex.scalar(&t.total).to_f64_lossy(),
    }
}

fn check_inputs<T: Real>(
    params: &ModelParameters<T>,
    x: &Patch<T>,
    y: &Patch<T>,
    mask: &BinaryMap,
) -> Result<()> {
    let arch = params.arch();
    if x.domain() != Domain::X || y.domain() != Domain::Y {
        return Err(Error::validation("expected an (X, Y) patch pair"));
    }
    if x.channels() != arch.channels_x || y.channels() != arch.channels_y {
        return Err(Error::shape(format!(
            "channel counts ({}, {}) do not match the architecture ({}, {})",
            x.channels(),
            y.channels(),
            arch.channels_x,
            arch.channels_y
        )));
    }
    let dims = (x.height(), x.width());
    if dims != (y.height(), y.width()) || dims != mask.dims() {
        return Err(Error::shape(format!(
            "patch/mask spatial dims differ: {:?}, {:?}, {:?}",
            dims,
            (y.height(), y.width()),
            mask.dims()
        )));
    }
    Ok(())
}

/// Loss components on one patch triple, forward only.
pub fn evaluate<T: Real>(
    params: &ModelParameters<T>,
    x: &Patch<T>,
    y: &Patch<T>,
    mask: &BinaryMap,
    toggles: LossToggles,
) -> Result<LossBreakdown> {
    check_inputs(params, x, y, mask)?;
    let mut ex = Eager::new(params);
    let mask = Arc::new(mask.clone());
    let terms = build(
        &mut ex,
        params,
        x.tensor().clone(),
        y.tensor().clone(),
        &mask,
        toggles,
    );
    Ok(breakdown(&ex, &terms))
}

/// Loss components and the gradient of the total with respect to every
/// parameter tensor (zeros for parameters the enabled terms do not reach).
pub fn gradients<T: Real>(
    params: &ModelParameters<T>,
    x: &Patch<T>,
    y: &Patch<T>,
    mask: &BinaryMap,
    toggles: LossToggles,
) -> Result<(LossBreakdown, Vec<Tensor<T>>)> {
    check_inputs(params, x, y, mask)?;
    let mut graph = Graph::new(params);
    let mask = Arc::new(mask.clone());
    let terms = build(
        &mut graph,
        params,
        x.tensor().clone(),
        y.tensor().clone(),
        &mask,
        toggles,
    );
    let parts = breakdown(&graph, &terms);
    let grads = graph
        .backward(terms.total)
        .into_iter()
        .zip(params.tensors())
        .map(|(g, p)| g.unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    Ok((parts, grads))
}
