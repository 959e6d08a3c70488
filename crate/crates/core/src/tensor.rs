//! Operators on tensor products of several factors. Factor 0 is the most
//! significant digit of a row or column index.

use crate::error::{Error, Result};
use crate::linalg::{CMat, ZERO};

fn check_square(m: &CMat, dims: &[usize]) -> Result<usize> {
    let total: usize = dims.iter().product();
    if m.nrows() != total || m.ncols() != total {
        return Err(Error::Dimension(format!(
            "operator is {}x{} but factor dimensions {:?} multiply to {}",
            m.nrows(),
            m.ncols(),
            dims,
            total
        )));
    }
    Ok(total)
}

fn check_factors(factors: &[usize], n: usize) -> Result<()> {
    for (k, &f) in factors.iter().enumerate() {
        if f >= n || factors[..k].contains(&f) {
            return Err(Error::Dimension(format!(
                "factor list {factors:?} is not a set of distinct factors below {n}"
            )));
        }
    }
    Ok(())
}

fn digits(mut idx: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = idx % dims[k];
        idx /= dims[k];
    }
}

fn compose(ds: impl Iterator<Item = (usize, usize)>) -> usize {
    ds.fold(0, |acc, (d, dim)| acc * dim + d)
}

/// Traces out the listed factors; the remaining factors keep their order.
pub fn partial_trace(m: &CMat, dims: &[usize], traced: &[usize]) -> Result<CMat> {
    let total = check_square(m, dims)?;
    check_factors(traced, dims.len())?;
    let kept: Vec<usize> = (0..dims.len()).filter(|k| !traced.contains(k)).collect();
    let kept_dim: usize = kept.iter().map(|&k| dims[k]).product();
    let mut out = CMat::from_element(kept_dim, kept_dim, ZERO);
    let mut rd = vec![0; dims.len()];
    let mut cd = vec![0; dims.len()];
    for r in 0..total {
        digits(r, dims, &mut rd);
        let ro = compose(kept.iter().map(|&k| (rd[k], dims[k])));
        for c in 0..total {
            digits(c, dims, &mut cd);
            if traced.iter().all(|&k| rd[k] == cd[k]) {
                let co = compose(kept.iter().map(|&k| (cd[k], dims[k])));
                out[(ro, co)] += m[(r, c)];
            }
        }
    }
    Ok(out)
}

/// Transposes the listed factors in the computational basis.
pub fn partial_transpose(m: &CMat, dims: &[usize], transposed: &[usize]) -> Result<CMat> {
    let total = check_square(m, dims)?;
    check_factors(transposed, dims.len())?;
    let mut out = CMat::from_element(total, total, ZERO);
    let mut rd = vec![0; dims.len()];
    let mut cd = vec![0; dims.len()];
    for r in 0..total {
        digits(r, dims, &mut rd);
        for c in 0..total {
            digits(c, dims, &mut cd);
            for &k in transposed {
                std::mem::swap(&mut rd[k], &mut cd[k]);
            }
            let nr = compose(rd.iter().copied().zip(dims.iter().copied()));
            let nc = compose(cd.iter().copied().zip(dims.iter().copied()));
            out[(nr, nc)] = m[(r, c)];
            for &k in transposed {
                std::mem::swap(&mut rd[k], &mut cd[k]);
            }
        }
    }
    Ok(out)
}

/// Reorders factors: factor `k` of the result is factor `perm[k]` of `m`.
pub fn permute_factors(m: &CMat, dims: &[usize], perm: &[usize]) -> Result<CMat> {
    let total = check_square(m, dims)?;
    if perm.len() != dims.len() {
        return Err(Error::Dimension(format!(
            "permutation {perm:?} does not match {} factors",
            dims.len()
        )));
    }
    check_factors(perm, dims.len())?;
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let mut out = CMat::from_element(total, total, ZERO);
    let mut rd = vec![0; dims.len()];
    let mut cd = vec![0; dims.len()];
    for r in 0..total {
        digits(r, dims, &mut rd);
        let nr = compose(perm.iter().zip(&new_dims).map(|(&p, &d)| (rd[p], d)));
        for c in 0..total {
            digits(c, dims, &mut cd);
            let nc = compose(perm.iter().zip(&new_dims).map(|(&p, &d)| (cd[p], d)));
            out[(nr, nc)] = m[(r, c)];
        }
    }
    Ok(out)
}

/// Places `op`, acting on `factors` (in the listed order), into the full space
/// with identities on every other factor.
pub fn embed(op: &CMat, factors: &[usize], dims: &[usize]) -> Result<CMat> {
    check_factors(factors, dims.len())?;
    let op_dims: Vec<usize> = factors.iter().map(|&k| dims[k]).collect();
    check_square(op, &op_dims)?;
    let rest: Vec<usize> = (0..dims.len()).filter(|k| !factors.contains(k)).collect();
    let rest_dim: usize = rest.iter().map(|&k| dims[k]).product();
    let big = op.kronecker(&CMat::identity(rest_dim, rest_dim));
    // big has factor order `factors ++ rest`; invert that ordering.
    let order: Vec<usize> = factors.iter().chain(rest.iter()).copied().collect();
    let big_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    let mut perm = vec![0; dims.len()];
    for (pos, &k) in order.iter().enumerate() {
        perm[k] = pos;
    }
    permute_factors(&big, &big_dims, &perm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, kron, max_abs_diff, to_dyn, sigma_x, sigma_y, sigma_z};

    fn sample(n: usize, seed: f64) -> CMat {
        CMat::from_fn(n, n, |i, j| c64((i as f64 + seed).sin() * (j as f64 + 1.0), (seed * j as f64 - i as f64).cos()))
    }

    #[test]
    fn trace_of_product_over_second_factor() {
        let a = sample(2, 0.3);
        let b = sample(3, 1.7);
        let got = partial_trace(&kron(&a, &b), &[2, 3], &[1]).unwrap();
        let tr_b: crate::linalg::C64 = b.diagonal().iter().sum();
        assert!(max_abs_diff(&got, &a.scale(1.0).map(|z| z * tr_b)) < 1e-13);
    }

    #[test]
    fn trace_of_product_over_first_factor() {
        let a = sample(2, 0.3);
        let b = sample(3, 1.7);
        let got = partial_trace(&kron(&a, &b), &[2, 3], &[0]).unwrap();
        let tr_a: crate::linalg::C64 = a.diagonal().iter().sum();
        assert!(max_abs_diff(&got, &b.map(|z| z * tr_a)) < 1e-13);
    }

    #[test]
    fn partial_transpose_is_involution() {
        let m = sample(12, 0.9);
        let once = partial_transpose(&m, &[2, 3, 2], &[0, 2]).unwrap();
        assert!(max_abs_diff(&once, &m) > 0.1);
        let twice = partial_transpose(&once, &[2, 3, 2], &[0, 2]).unwrap();
        assert_eq!(twice, m);
    }

    #[test]
    fn full_transpose_matches_matrix_transpose() {
        let m = sample(6, 0.2);
        let t = partial_transpose(&m, &[2, 3], &[0, 1]).unwrap();
        assert_eq!(t, m.transpose());
    }

    #[test]
    fn permutation_swaps_kron_factors() {
        let a = to_dyn(&sigma_x());
        let b = sample(3, 0.4);
        let swapped = permute_factors(&kron(&a, &b), &[2, 3], &[1, 0]).unwrap();
        assert!(max_abs_diff(&swapped, &kron(&b, &a)) < 1e-15);
    }

    #[test]
    fn embed_places_operators_on_named_factors() {
        let x = to_dyn(&sigma_x());
        let y = to_dyn(&sigma_y());
        let z = to_dyn(&sigma_z());
        let id = CMat::identity(2, 2);
        let got = embed(&kron(&x, &z), &[2, 0], &[2, 2, 2]).unwrap();
        let want = crate::linalg::kron_all(&[z.clone(), id.clone(), x.clone()]);
        assert!(max_abs_diff(&got, &want) < 1e-15);
        let got = embed(&y, &[1], &[2, 2, 2]).unwrap();
        let want = crate::linalg::kron_all(&[id.clone(), y, id]);
        assert!(max_abs_diff(&got, &want) < 1e-15);
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let m = sample(4, 0.1);
        assert!(partial_trace(&m, &[2, 3], &[0]).is_err());
        assert!(partial_trace(&m, &[2, 2], &[2]).is_err());
        assert!(partial_transpose(&m, &[2, 2], &[0, 0]).is_err());
    }
}
