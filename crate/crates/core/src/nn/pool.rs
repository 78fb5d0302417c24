use super::{NnError, Result, Tensor};

/// Row index of each column maximum, for routing gradients.
#[derive(Debug, Clone)]
pub struct PoolCache {
    steps: usize,
    argmax: Vec<usize>,
}

/// Concatenated column means and column maxima of `H: T × k`.
pub fn mean_max_pool(hs: &Tensor) -> Result<(Vec<f64>, PoolCache)> {
    let steps = hs.rows();
    if steps == 0 || hs.is_empty() {
        return Err(NnError::EmptySequence);
    }
    let k = hs.cols();
    let mut mean = vec![0.0; k];
    let mut max = hs.row(0).to_vec();
    let mut argmax = vec![0; k];
    for t in 0..steps {
        for (j, &v) in hs.row(t).iter().enumerate() {
            mean[j] += v;
            if v > max[j] {
                max[j] = v;
                argmax[j] = t;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= steps as f64);
    mean.extend(max);
    Ok((mean, PoolCache { steps, argmax }))
}

/// `dout` has length `2k`; returns `dL/dH` as `T × k`.
pub fn mean_max_pool_backward(cache: &PoolCache, dout: &[f64]) -> Vec<f64> {
    let k = cache.argmax.len();
    let inv = 1.0 / cache.steps as f64;
    let mut dh = Vec::with_capacity(cache.steps * k);
    for _ in 0..cache.steps {
        dh.extend(dout[..k].iter().map(|g| g * inv));
    }
    for (j, &t) in cache.argmax.iter().enumerate() {
        dh[t * k + j] += dout[k + j];
    }
    dh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Rng;

    #[test]
    fn small_example() {
        let h = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 0.0]).unwrap();
        assert_eq!(mean_max_pool(&h).unwrap().0, vec![2.0, 1.0, 3.0, 2.0]);
    }

    #[test]
    fn single_row_is_duplicated() {
        let h = Tensor::new(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        assert_eq!(mean_max_pool(&h).unwrap().0, vec![0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn matches_loop_oracle() {
        let mut rng = Rng::new(9);
        let (t, k) = (7, 5);
        let data: Vec<f64> = (0..t * k).map(|_| rng.normal(0.0, 1.0)).collect();
        let h = Tensor::new(vec![t, k], data.clone()).unwrap();
        let (out, _) = mean_max_pool(&h).unwrap();
        for j in 0..k {
            let mut sum = 0.0;
            let mut max = f64::NEG_INFINITY;
            for r in 0..t {
                sum += data[r * k + j];
                if data[r * k + j] > max {
                    max = data[r * k + j];
                }
            }
            assert_eq!(out[j], sum / t as f64);
            assert_eq!(out[k + j], max);
        }
    }

    #[test]
    fn empty_is_rejected() {
        assert!(matches!(mean_max_pool(&Tensor::zeros(&[0, 4])), Err(NnError::EmptySequence)));
    }
}
