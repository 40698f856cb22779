use crate::error::{Error, Result};
use crate::hypernet::ResidualWeights;
use crate::synthgen::{LayerRole, LayerSpec};
use crate::tensor::Tensor;

pub const STATS_HEADER: &str = "layer,role,resolution,mean_abs";

/// Mean absolute residual of one generator layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualRow {
    pub layer: usize,
    pub role: LayerRole,
    pub resolution: usize,
    pub mean_abs: f64,
}

impl ResidualRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{}",
            self.layer,
            self.role.tag(),
            self.resolution,
            self.mean_abs
        )
    }
}

pub fn residual_stats(residuals: &ResidualWeights, layers: &[LayerSpec]) -> Result<Vec<ResidualRow>> {
    if residuals.deltas.len() != layers.len() {
        return Err(Error::shape(
            "residual_stats",
            &[residuals.deltas.len()],
            &[layers.len()],
        ));
    }
    Ok(layers
        .iter()
        .zip(&residuals.deltas)
        .map(|(l, d)| ResidualRow {
            layer: l.index,
            role: l.role,
            resolution: l.resolution,
            mean_abs: d.mean_abs(),
        })
        .collect())
}

/// Averages per-image stats row by row.
pub fn aggregate_stats(per_image: &[Vec<ResidualRow>]) -> Result<Vec<ResidualRow>> {
    let Some(first) = per_image.first() else {
        return Ok(Vec::new());
    };
    let mut out = first.clone();
    for row in out.iter_mut() {
        row.mean_abs = 0.0;
    }
    for rows in per_image {
        if rows.len() != out.len() {
            return Err(Error::shape("aggregate_stats", &[rows.len()], &[out.len()]));
        }
        for (o, r) in out.iter_mut().zip(rows) {
            o.mean_abs += r.mean_abs;
        }
    }
    for o in out.iter_mut() {
        o.mean_abs /= per_image.len() as f64;
    }
    Ok(out)
}

pub fn stats_csv(rows: &[ResidualRow]) -> String {
    let mut s = format!("{STATS_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() || a.shape().len() != 3 {
        return Err(Error::shape("difference_map", a.shape(), b.shape()));
    }
    Ok(())
}

/// Channel mean of |x̂ − x̂_w| for `[C, H, W]` images, as `[H, W]`.
pub fn difference_map(xhat: &Tensor, xw: &Tensor) -> Result<Tensor> {
    mean_difference_map(&[(xhat.clone(), xw.clone())])
}

/// Averages |x̂ − x̂_w| over pairs, then takes the equal-weight channel mean.
pub fn mean_difference_map(pairs: &[(Tensor, Tensor)]) -> Result<Tensor> {
    let Some((first, _)) = pairs.first() else {
        return Err(Error::InvalidArgument("no image pairs".into()));
    };
    let shape = first.shape().to_vec();
    let mut acc = Tensor::zeros(&shape);
    for (a, b) in pairs {
        check_pair(a, b)?;
        if a.shape() != shape.as_slice() {
            return Err(Error::shape("mean_difference_map", a.shape(), &shape));
        }
        for ((s, p), q) in acc.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
            *s += (p - q).abs();
        }
    }
    let (c, hw) = (shape[0], shape[1] * shape[2]);
    let n = pairs.len() as f64;
    let mut map = vec![0.0; hw];
    for ch in acc.data().chunks(hw) {
        for (m, v) in map.iter_mut().zip(ch) {
            *m += v / n;
        }
    }
    for m in map.iter_mut() {
        *m /= c as f64;
    }
    Tensor::new(vec![shape[1], shape[2]], map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ToyDims;
    use crate::rng::Rng;
    use crate::synthgen::{layer_table, GeneratorHash};

    #[test]
    fn stats_rows_and_roles() {
        let layers = layer_table(&ToyDims::default());
        let mut res = ResidualWeights {
            deltas: layers.iter().map(|l| Tensor::zeros(&l.kernel_shape())).collect(),
            generator: GeneratorHash(0),
        };
        let rows = residual_stats(&res, &layers).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.mean_abs == 0.0));
        assert_eq!(rows[0].role, LayerRole::MainConv);
        assert_eq!(rows[1].role, LayerRole::ToRgb);
        for (i, v) in res.deltas[2].data_mut().iter_mut().enumerate() {
            *v = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let rows = residual_stats(&res, &layers).unwrap();
        assert_eq!(rows[2].mean_abs, 1.0);
        let agg = aggregate_stats(&[
            rows.clone(),
            residual_stats(
                &ResidualWeights {
                    deltas: layers.iter().map(|l| Tensor::zeros(&l.kernel_shape())).collect(),
                    generator: GeneratorHash(0),
                },
                &layers,
            )
            .unwrap(),
        ])
        .unwrap();
        assert_eq!(agg[2].mean_abs, 0.5);
        assert!(stats_csv(&agg).lines().nth(2).unwrap().starts_with("2,torgb-conv,4,"));
    }

    #[test]
    fn difference_map_properties() {
        let mut rng = Rng::new(3);
        let a = Tensor::randn(&[3, 5, 5], 1.0, &mut rng);
        let b = Tensor::randn(&[3, 5, 5], 1.0, &mut rng);
        assert!(difference_map(&a, &a).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(difference_map(&a, &b).unwrap().bit_eq(&difference_map(&b, &a).unwrap()));
        let shifted = a.map(|v| v + 0.25);
        let m = difference_map(&shifted, &a).unwrap();
        assert!(m.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(difference_map(&a, &Tensor::zeros(&[3, 4, 4])).is_err());
    }
}
