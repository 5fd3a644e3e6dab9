//! Cartesian grids over selection, hallucination, correction and SSL knobs.

use serde::Serialize;

use super::config::RunConfig;
use crate::error::Result;

/// Grid coordinates of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub percent: f64,
    pub lambda_p: f64,
    pub lambda_conf: f64,
    pub k: usize,
    pub lambda_mse: f64,
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Every combination of the `[sweep]` lists, last axis fastest. Each
/// returned config is validated and carries an empty grid.
pub fn expand(base: &RunConfig) -> Result<Vec<(SweepPoint, RunConfig)>> {
    let g = &base.sweep;
    let mut out = Vec::new();
    for &percent in &axis(&g.percent, base.selection.percent) {
        for &lambda_p in &axis(&g.lambda_p, base.hallucinator.lambda_p) {
            for &lambda_conf in &axis(&g.lambda_conf, base.correction.lambda_conf) {
                for &k in &axis(&g.k, base.correction.k) {
                    for &lambda_mse in &axis(&g.lambda_mse, base.ssl.lambda_mse) {
                        let mut cfg = base.clone();
                        cfg.sweep = Default::default();
                        cfg.selection.percent = percent;
                        cfg.hallucinator.lambda_p = lambda_p;
                        cfg.correction.lambda_conf = lambda_conf;
                        cfg.correction.k = k;
                        cfg.ssl.lambda_mse = lambda_mse;
                        cfg.validate()?;
                        out.push((
                            SweepPoint {
                                percent,
                                lambda_p,
                                lambda_conf,
                                k,
                                lambda_mse,
                            },
                            cfg,
                        ));
                    }
                }
            }
        }
    }
    Ok(out)
}
