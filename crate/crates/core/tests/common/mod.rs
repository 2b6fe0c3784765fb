#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nep::game::{BoxSet, QuadraticGame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random quadratic game with the blocks it was built from.
pub struct RandomGame {
    pub game: QuadraticGame,
    pub dims: Vec<usize>,
    pub blocks: Vec<(usize, usize, DMatrix<f64>)>,
    pub linear: Vec<DVector<f64>>,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Two-agent game with strongly monotone pseudo-gradient. Own Hessians are
/// diagonal when `diagonal` is set; `bounds` boxes every coordinate.
pub fn random_two_agent_game(seed: u64, diagonal: bool, bounds: Option<(f64, f64)>) -> RandomGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let dims: Vec<usize> = (0..2).map(|_| rng.random_range(1..=2)).collect();
        let mut blocks = Vec::new();
        for i in 0..2 {
            let d = dims[i];
            let a = if diagonal {
                DMatrix::from_fn(d, d, |r, c| {
                    if r == c {
                        uniform(&mut rng, 0.5, 2.0)
                    } else {
                        0.0
                    }
                })
            } else {
                let b = DMatrix::from_fn(d, d, |_, _| uniform(&mut rng, -1.0, 1.0));
                b.transpose() * &b + DMatrix::identity(d, d) * 0.5
            };
            blocks.push((i, i, a));
            let j = 1 - i;
            blocks.push((
                i,
                j,
                DMatrix::from_fn(d, dims[j], |_, _| uniform(&mut rng, -0.6, 0.6)),
            ));
        }
        let linear: Vec<DVector<f64>> = dims
            .iter()
            .map(|&d| DVector::from_fn(d, |_, _| uniform(&mut rng, -2.0, 2.0)))
            .collect();
        let g = hand_jacobian(&dims, &blocks);
        let sym = (&g + g.transpose()) * 0.5;
        if sym.symmetric_eigen().eigenvalues.min() < 0.2 {
            continue;
        }
        let sets = dims
            .iter()
            .map(|&d| match bounds {
                Some((lo, hi)) => BoxSet::uniform(d, lo, hi).unwrap(),
                None => BoxSet::unbounded(d),
            })
            .collect();
        let game = QuadraticGame::from_blocks(dims.clone(), &blocks, &linear, sets).unwrap();
        return RandomGame {
            game,
            dims,
            blocks,
            linear,
        };
    }
}

/// `G` assembled from cost blocks: `2A_ii` on the diagonal, `A_ij` off it.
pub fn hand_jacobian(dims: &[usize], blocks: &[(usize, usize, DMatrix<f64>)]) -> DMatrix<f64> {
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let n: usize = dims.iter().sum();
    let mut g = DMatrix::zeros(n, n);
    for (i, j, a) in blocks {
        let scale = if i == j { 2.0 } else { 1.0 };
        let mut v = g.view_mut((offsets[*i], offsets[*j]), (dims[*i], dims[*j]));
        v += a * scale;
    }
    g
}

pub fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}

/// Equilibrium of `Gx + g` over the box `[lo, hi]` by enumerating which
/// coordinates sit at a bound and checking the sign conditions.
pub fn kkt_enumeration(
    g: &DMatrix<f64>,
    offset: &DVector<f64>,
    lo: &[f64],
    hi: &[f64],
) -> DVector<f64> {
    let n = offset.len();
    let patterns = 3usize.pow(n as u32);
    let mut found = Vec::new();
    for p in 0..patterns {
        // 0 free, 1 lower, 2 upper
        let state: Vec<usize> = (0..n).map(|k| (p / 3usize.pow(k as u32)) % 3).collect();
        if state
            .iter()
            .enumerate()
            .any(|(k, s)| (*s == 1 && !lo[k].is_finite()) || (*s == 2 && !hi[k].is_finite()))
        {
            continue;
        }
        let mut x = DVector::zeros(n);
        for k in 0..n {
            match state[k] {
                1 => x[k] = lo[k],
                2 => x[k] = hi[k],
                _ => {}
            }
        }
        let free: Vec<usize> = (0..n).filter(|k| state[*k] == 0).collect();
        if !free.is_empty() {
            let sub = DMatrix::from_fn(free.len(), free.len(), |a, b| g[(free[a], free[b])]);
            let rhs = DVector::from_fn(free.len(), |a, _| {
                let k = free[a];
                -(offset[k]
                    + (0..n)
                        .filter(|c| state[*c] != 0)
                        .map(|c| g[(k, c)] * x[c])
                        .sum::<f64>())
            });
            let Some(sol) = sub.lu().solve(&rhs) else {
                continue;
            };
            for (a, &k) in free.iter().enumerate() {
                x[k] = sol[a];
            }
        }
        let f = g * &x + offset;
        let eps = 1e-12;
        let ok = (0..n).all(|k| match state[k] {
            0 => x[k] >= lo[k] - eps && x[k] <= hi[k] + eps,
            1 => f[k] >= -eps,
            _ => f[k] <= eps,
        });
        if ok {
            found.push(x);
        }
    }
    assert!(!found.is_empty(), "no KKT point found");
    found.swap_remove(0)
}

/// `A ⊗ I_n` built entry by entry.
pub fn dense_kron_identity(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let m = a.nrows();
    DMatrix::from_fn(m * n, m * n, |r, c| {
        if r % n == c % n {
            a[(r / n, c / n)]
        } else {
            0.0
        }
    })
}
