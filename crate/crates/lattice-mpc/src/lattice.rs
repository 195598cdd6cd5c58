//! Lattice (max-min) piecewise-affine representation of a sampled
//! control law.
//!
//! From samples `(x_i, u_i)` where `u_i` is the local affine law at
//! `x_i`, one term is built per sample as the min over every literal
//! that dominates the local one at that point, and the function is the
//! max over all terms:
//!
//! ```text
//!     f(x) = max_i  min_{j : l_j(x_i) >= l_loc(i)(x_i)}  l_j(x)
//! ```
//!
//! By construction the term of sample i attains `u_i(x_i)` at `x_i` and
//! no other term exceeds it there, so the lattice interpolates every
//! sample. Simplification removes duplicate terms and terms whose
//! literal set contains another term's set (their min can never win the
//! max alone).

use crate::error::{Error, Result};
use crate::explicit::AffinePiece;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

/// Tie tolerance when comparing literal values at a sample: equal values
/// include the literal, reproducing continuity across region boundaries.
pub const TOL_CMP: f64 = 1e-9;

/// One affine literal `l(x) = a'x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Literal {
    pub a: DVector<f64>,
    pub b: f64,
}

impl Literal {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.a.dot(x) + self.b
    }

    fn approx_eq(&self, other: &Literal, tol: f64) -> bool {
        self.a.len() == other.a.len()
            && (self.b - other.b).abs() <= tol
            && self.a.iter().zip(other.a.iter()).all(|(p, q)| (p - q).abs() <= tol)
    }
}

/// Max-min lattice for one output channel.
#[derive(Debug, Clone)]
pub struct LatticePwa {
    pub literals: Vec<Literal>,
    /// Literal-index sets; one term per construction sample before
    /// simplification.
    pub terms: Vec<Vec<usize>>,
    pub channel: usize,
}

/// One lattice per input channel.
#[derive(Debug, Clone)]
pub struct LatticeBundle {
    pub lattices: Vec<LatticePwa>,
    pub dim: usize,
}

/// Builds the lattice for output channel `channel` from samples paired
/// with their local first-input laws (m rows each).
pub fn build_lattice(
    samples: &[(DVector<f64>, AffinePiece)],
    channel: usize,
) -> Result<LatticePwa> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = samples[0].0.len();
    // channel literals, deduped; loc[i] = literal index of sample i
    let mut literals: Vec<Literal> = Vec::new();
    let mut loc = Vec::with_capacity(samples.len());
    for (x, piece) in samples {
        if piece.f.nrows() <= channel {
            return Err(Error::DimensionMismatch {
                context: "build_lattice channel",
                expected: format!("> {channel} rows"),
                got: format!("{}", piece.f.nrows()),
            });
        }
        if x.len() != n || piece.f.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "build_lattice sample",
                expected: format!("{n}"),
                got: format!("{}/{}", x.len(), piece.f.ncols()),
            });
        }
        let lit = Literal {
            a: piece.f.row(channel).transpose(),
            b: piece.g[channel],
        };
        let idx = match literals
            .iter()
            .position(|l| l.approx_eq(&lit, crate::explicit::TOL_PIECE))
        {
            Some(i) => i,
            None => {
                literals.push(lit);
                literals.len() - 1
            }
        };
        loc.push(idx);
    }
    // term_i = { j : l_j(x_i) >= l_loc(i)(x_i) - tol }
    let mut terms = Vec::with_capacity(samples.len());
    for (i, (x, _)) in samples.iter().enumerate() {
        let base = literals[loc[i]].eval(x);
        let mut set: Vec<usize> = Vec::new();
        for (j, l) in literals.iter().enumerate() {
            if l.eval(x) >= base - TOL_CMP {
                set.push(j);
            }
        }
        debug_assert!(set.contains(&loc[i]));
        terms.push(set);
    }
    Ok(LatticePwa {
        literals,
        terms,
        channel,
    })
}

impl LatticePwa {
    /// Max over terms of min over the term's literals. Terms whose
    /// running min falls below the best max so far are abandoned early;
    /// literal values are computed lazily and memoized, so with a good
    /// term order only a fraction of the literals is ever touched.
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        let mut vals = vec![f64::NAN; self.literals.len()];
        let mut best = f64::NEG_INFINITY;
        for term in &self.terms {
            let mut m = f64::INFINITY;
            for &j in term {
                let mut v = vals[j];
                if v.is_nan() {
                    v = self.literals[j].eval(x);
                    vals[j] = v;
                }
                if v < m {
                    m = v;
                    if m <= best {
                        break;
                    }
                }
            }
            if m > best {
                best = m;
            }
        }
        best
    }

    /// Number of literal references across all terms (evaluation cost).
    pub fn size(&self) -> usize {
        self.terms.iter().map(|t| t.len()).sum()
    }

    /// Largest literal gradient norm, a Lipschitz constant of the lattice.
    pub fn lipschitz(&self) -> f64 {
        self.literals.iter().fold(0.0, |acc, l| acc.max(l.a.norm()))
    }

    /// Reorders terms by how often they attain the max over the given
    /// states and each term's literals by ascending mean value, so the
    /// early-abort evaluation discards losing terms after one or two
    /// comparisons. The represented function is unchanged (max and min
    /// are order-invariant).
    pub fn order_for_eval(&mut self, xs: &[DVector<f64>]) {
        if xs.is_empty() {
            return;
        }
        let nl = self.literals.len();
        let mut mean = vec![0.0f64; nl];
        let mut wins = vec![0usize; self.terms.len()];
        for x in xs {
            let vals: Vec<f64> = self.literals.iter().map(|l| l.eval(x)).collect();
            for (v, acc) in vals.iter().zip(mean.iter_mut()) {
                *acc += v;
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_t = 0;
            for (t, term) in self.terms.iter().enumerate() {
                let m = term.iter().fold(f64::INFINITY, |a, &j| a.min(vals[j]));
                if m > best {
                    best = m;
                    best_t = t;
                }
            }
            wins[best_t] += 1;
        }
        for term in self.terms.iter_mut() {
            term.sort_by(|&a, &b| mean[a].partial_cmp(&mean[b]).unwrap());
        }
        let mut order: Vec<usize> = (0..self.terms.len()).collect();
        order.sort_by_key(|&t| std::cmp::Reverse(wins[t]));
        self.terms = order.into_iter().map(|t| self.terms[t].clone()).collect();
    }

    /// Removes duplicate terms and terms whose literal set is a superset
    /// of another term's set, then drops unreferenced literals. The
    /// evaluation is unchanged.
    pub fn simplify(&self) -> LatticePwa {
        // dedupe sorted index sets
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        let mut sets: Vec<Vec<usize>> = Vec::new();
        for t in &self.terms {
            let mut s = t.clone();
            s.sort_unstable();
            s.dedup();
            if seen.insert(s.clone()) {
                sets.push(s);
            }
        }
        // superset removal: a term containing another term's set never
        // attains the max alone (its min is pointwise <=)
        let mut keep = vec![true; sets.len()];
        for i in 0..sets.len() {
            if !keep[i] {
                continue;
            }
            for j in 0..sets.len() {
                if i == j || !keep[j] {
                    continue;
                }
                if is_subset(&sets[j], &sets[i]) {
                    // set j is contained in set i and they are not equal
                    // (dedupe removed equals), so term i is redundant
                    keep[i] = false;
                    break;
                }
            }
        }
        let kept_sets: Vec<&Vec<usize>> = sets
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(s, _)| s)
            .collect();
        // reindex literals
        let mut used = vec![false; self.literals.len()];
        for s in &kept_sets {
            for &j in s.iter() {
                used[j] = true;
            }
        }
        let mut remap = vec![usize::MAX; self.literals.len()];
        let mut literals = Vec::new();
        for (j, u) in used.iter().enumerate() {
            if *u {
                remap[j] = literals.len();
                literals.push(self.literals[j].clone());
            }
        }
        let terms = kept_sets
            .into_iter()
            .map(|s| s.iter().map(|&j| remap[j]).collect())
            .collect();
        LatticePwa {
            literals,
            terms,
            channel: self.channel,
        }
    }
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    if small.len() >= big.len() {
        return false;
    }
    // both sorted
    let mut it = big.iter();
    'outer: for s in small {
        for b in it.by_ref() {
            match b.cmp(s) {
                std::cmp::Ordering::Equal => continue 'outer,
                std::cmp::Ordering::Greater => return false,
                std::cmp::Ordering::Less => {}
            }
        }
        return false;
    }
    true
}

impl LatticeBundle {
    pub fn input_dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.lattices.len()
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.lattices.len(), |k, _| self.lattices[k].eval(x))
    }

    pub fn simplify(&self) -> LatticeBundle {
        LatticeBundle {
            lattices: self.lattices.iter().map(|l| l.simplify()).collect(),
            dim: self.dim,
        }
    }

    pub fn order_for_eval(&mut self, xs: &[DVector<f64>]) {
        for lat in self.lattices.iter_mut() {
            lat.order_for_eval(xs);
        }
    }

    pub fn size(&self) -> usize {
        self.lattices.iter().map(|l| l.size()).sum()
    }
}

/// Builds one lattice per channel from first-input samples.
pub fn build_bundle(samples: &[(DVector<f64>, AffinePiece)]) -> Result<LatticeBundle> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let m = samples[0].1.f.nrows();
    let dim = samples[0].0.len();
    let mut lattices = Vec::with_capacity(m);
    for k in 0..m {
        lattices.push(build_lattice(samples, k)?);
    }
    Ok(LatticeBundle { lattices, dim })
}

/// Channel-wise evaluation of a bundle.
pub fn eval_bundle(bundle: &LatticeBundle, x: &DVector<f64>) -> DVector<f64> {
    bundle.eval(x)
}

/// Worst gap between the max-min (upper) and min-max (lower) lattice
/// forms over the validation set; zero gap certifies the approximation
/// equals the sampled law wherever both forms agree.
///
/// The lower form `min_i max_{j in J<=,i} l_j` is evaluated through the
/// identity `min max l = -(max min (-l))`.
pub fn estimate_error_bound(
    samples: &[(DVector<f64>, AffinePiece)],
    channel: usize,
    validation: &[DVector<f64>],
) -> Result<f64> {
    let upper = build_lattice(samples, channel)?.simplify();
    let negated: Vec<(DVector<f64>, AffinePiece)> = samples
        .iter()
        .map(|(x, p)| {
            (
                x.clone(),
                AffinePiece {
                    f: -&p.f,
                    g: -&p.g,
                },
            )
        })
        .collect();
    let lower_neg = build_lattice(&negated, channel)?.simplify();
    let mut worst = 0.0f64;
    for x in validation {
        let hi = upper.eval(x);
        let lo = -lower_neg.eval(x);
        worst = worst.max(hi - lo);
    }
    Ok(worst)
}

/// Per-channel error bounds for a whole bundle.
pub fn estimate_error_bound_bundle(
    samples: &[(DVector<f64>, AffinePiece)],
    validation: &[DVector<f64>],
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let m = samples[0].1.f.nrows();
    (0..m)
        .map(|k| estimate_error_bound(samples, k, validation))
        .collect()
}

// ---- file format ----

const LATTICE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LiteralFile {
    a: Vec<f64>,
    b: f64,
}

#[derive(Serialize, Deserialize)]
struct ChannelFile {
    literals: Vec<LiteralFile>,
    terms: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    version: u32,
    n: usize,
    m: usize,
    channels: Vec<ChannelFile>,
}

/// Serializes a bundle as JSON (`{version, n, m, channels}`; 0-based
/// literal indices).
pub fn save(bundle: &LatticeBundle, path: &Path) -> Result<()> {
    let file = BundleFile {
        version: LATTICE_FORMAT_VERSION,
        n: bundle.dim,
        m: bundle.lattices.len(),
        channels: bundle
            .lattices
            .iter()
            .map(|lat| ChannelFile {
                literals: lat
                    .literals
                    .iter()
                    .map(|l| LiteralFile {
                        a: l.a.iter().cloned().collect(),
                        b: l.b,
                    })
                    .collect(),
                terms: lat.terms.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file).expect("serialization cannot fail");
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(json.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Loads and validates a bundle written by [`save`].
pub fn load(path: &Path) -> Result<LatticeBundle> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: BundleFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: format!("{e}"),
    })?;
    if file.version != LATTICE_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: file.version,
            expected: LATTICE_FORMAT_VERSION,
        });
    }
    if file.channels.is_empty() || file.m == 0 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            detail: "empty bundle".into(),
        });
    }
    if file.channels.len() != file.m {
        return Err(Error::Parse {
            path: path.display().to_string(),
            detail: format!("m = {} but {} channels", file.m, file.channels.len()),
        });
    }
    let mut lattices = Vec::with_capacity(file.m);
    for (k, ch) in file.channels.iter().enumerate() {
        if ch.literals.is_empty() || ch.terms.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                detail: format!("channel {k} has no literals or terms"),
            });
        }
        for (li, l) in ch.literals.iter().enumerate() {
            if l.a.len() != file.n {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    detail: format!(
                        "channel {k} literal {li}: {} coefficients, expected {}",
                        l.a.len(),
                        file.n
                    ),
                });
            }
            if !l.a.iter().all(|v| v.is_finite()) || !l.b.is_finite() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    detail: format!("channel {k} literal {li}: non-finite coefficient"),
                });
            }
        }
        for (ti, t) in ch.terms.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    detail: format!("channel {k} term {ti} is empty"),
                });
            }
            if let Some(bad) = t.iter().find(|j| **j >= ch.literals.len()) {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    detail: format!(
                        "channel {k} term {ti}: literal index {bad} out of range (have {})",
                        ch.literals.len()
                    ),
                });
            }
        }
        lattices.push(LatticePwa {
            literals: ch
                .literals
                .iter()
                .map(|l| Literal {
                    a: DVector::from_vec(l.a.clone()),
                    b: l.b,
                })
                .collect(),
            terms: ch.terms.clone(),
            channel: k,
        });
    }
    Ok(LatticeBundle {
        lattices,
        dim: file.n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn lit(a: &[f64], b: f64) -> AffinePiece {
        AffinePiece {
            f: DMatrix::from_row_slice(1, a.len(), a),
            g: DVector::from_element(1, b),
        }
    }

    fn x2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    /// The worked two-dimensional example: three samples, literals
    /// l1 = 2 (saturated high), l2 = [-5.72,-3.73]x, l3 = -2, terms
    /// {min{l1,l2}, min{l1,l2}, min{l1,l3}}.
    fn example1_samples() -> Vec<(DVector<f64>, AffinePiece)> {
        vec![
            (x2(-1.5, 0.5), lit(&[0.0, 0.0], 2.0)),
            (x2(0.0, 0.0), lit(&[-5.72, -3.73], 0.0)),
            (x2(1.0, 0.5), lit(&[0.0, 0.0], -2.0)),
        ]
    }

    #[test]
    fn example1_term_structure() {
        let lat = build_lattice(&example1_samples(), 0).unwrap();
        assert_eq!(lat.literals.len(), 3);
        assert_eq!(lat.terms.len(), 3);
        // literal order of first occurrence: l1, l2, l3
        assert_eq!(lat.terms[0], vec![0, 1]);
        assert_eq!(lat.terms[1], vec![0, 1]);
        assert_eq!(lat.terms[2], vec![0, 2]);
        let simple = lat.simplify();
        assert_eq!(simple.terms.len(), 2);

        // evaluation spot checks: saturated plateau and the origin
        assert_abs_diff_eq!(lat.eval(&x2(0.0, 0.0)), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lat.eval(&x2(-1.5, 0.5)), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(simple.eval(&x2(-1.5, 0.5)), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn single_sample_is_its_literal() {
        let samples = vec![(x2(0.3, -0.2), lit(&[1.5, -0.5], 0.25))];
        let lat = build_lattice(&samples, 0).unwrap();
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..100 {
            let x = x2(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            assert_abs_diff_eq!(lat.eval(&x), 1.5 * x[0] - 0.5 * x[1] + 0.25, epsilon = 1e-12);
        }
        assert!(build_lattice(&[], 0).is_err());
    }

    /// One-dimensional four-literal fixture whose base-region orderings
    /// reproduce the published term table; simplification must reach the
    /// irredundant two-term form max{min{l1,l2}, min{l1,l3,l4}}.
    pub(crate) fn one_dim_fixture() -> (Vec<(DVector<f64>, AffinePiece)>, Vec<Literal>) {
        let l1 = |x: f64| 2.0 * x;
        let l2 = |x: f64| x + 1.0;
        let l3 = |x: f64| 2.0 * x - 2.0;
        let l4 = |x: f64| 1.5 * x + 0.25;
        let f = |x: f64| {
            if x <= 1.0 {
                l1(x)
            } else if x <= 3.0 {
                l2(x)
            } else if x <= 4.5 {
                l3(x)
            } else {
                l4(x)
            }
        };
        let lits = [
            (vec![2.0], 0.0),
            (vec![1.0], 1.0),
            (vec![2.0], -2.0),
            (vec![1.5], 0.25),
        ];
        // one sample in each base region O1..O6
        let samples_x = [0.25, 0.75, 1.25, 2.25, 3.75, 5.25];
        let loc = [0usize, 0, 1, 1, 2, 3];
        let samples: Vec<(DVector<f64>, AffinePiece)> = samples_x
            .iter()
            .zip(loc)
            .map(|(x, li)| {
                let (a, b) = &lits[li];
                assert_abs_diff_eq!(f(*x), a[0] * x + b, epsilon = 1e-12);
                (DVector::from_vec(vec![*x]), lit(a, *b))
            })
            .collect();
        let literals = lits
            .iter()
            .map(|(a, b)| Literal {
                a: DVector::from_vec(a.clone()),
                b: *b,
            })
            .collect();
        (samples, literals)
    }

    #[test]
    fn one_dim_terms_match_table() {
        let (samples, _) = one_dim_fixture();
        let lat = build_lattice(&samples, 0).unwrap();
        assert_eq!(lat.literals.len(), 4);
        let expect: Vec<Vec<usize>> = vec![
            vec![0, 1, 3],
            vec![0, 1],
            vec![0, 1],
            vec![0, 1, 3],
            vec![0, 2, 3],
            vec![0, 2, 3],
        ];
        assert_eq!(lat.terms, expect);

        let simple = lat.simplify();
        let mut sets: Vec<Vec<usize>> = simple
            .terms
            .iter()
            .map(|t| t.iter().map(|&j| remap_to_original(&simple, &lat, j)).collect())
            .collect();
        for s in sets.iter_mut() {
            s.sort_unstable();
        }
        sets.sort();
        assert_eq!(sets, vec![vec![0, 1], vec![0, 2, 3]]);
    }

    fn remap_to_original(simple: &LatticePwa, orig: &LatticePwa, j: usize) -> usize {
        let l = &simple.literals[j];
        orig.literals
            .iter()
            .position(|o| o.approx_eq(l, 1e-12))
            .expect("simplified literal must exist in the original")
    }

    #[test]
    fn one_dim_grid_equivalence() {
        let (samples, _) = one_dim_fixture();
        let lat = build_lattice(&samples, 0).unwrap();
        let simple = lat.simplify();
        let f = |x: f64| {
            if x <= 1.0 {
                2.0 * x
            } else if x <= 3.0 {
                x + 1.0
            } else if x <= 4.5 {
                2.0 * x - 2.0
            } else {
                1.5 * x + 0.25
            }
        };
        for k in 0..=1000 {
            let x = 6.0 * k as f64 / 1000.0;
            let xv = DVector::from_vec(vec![x]);
            assert_abs_diff_eq!(lat.eval(&xv), f(x), epsilon = 1e-12);
            assert_abs_diff_eq!(simple.eval(&xv), lat.eval(&xv), epsilon = 1e-12);
        }
        // idempotence
        let twice = simple.simplify();
        assert_eq!(twice.terms, simple.terms);
        assert_eq!(twice.literals.len(), simple.literals.len());
    }

    /// Interpolation: the lattice reproduces every construction sample.
    #[test]
    fn interpolates_samples() {
        let (samples, _) = one_dim_fixture();
        let lat = build_lattice(&samples, 0).unwrap();
        for (x, piece) in &samples {
            assert_abs_diff_eq!(lat.eval(x), piece.eval(x)[0], epsilon = 1e-9);
        }
        // monotone refinement: adding a sample keeps old samples exact
        let mut more = samples.clone();
        more.push((DVector::from_vec(vec![2.0]), lit(&[1.0], 1.0)));
        let lat2 = build_lattice(&more, 0).unwrap();
        for (x, piece) in &samples {
            assert_abs_diff_eq!(lat2.eval(x), piece.eval(x)[0], epsilon = 1e-9);
        }
    }

    /// Permuting samples changes nothing about the evaluated function.
    #[test]
    fn order_invariance() {
        let (samples, _) = one_dim_fixture();
        let lat = build_lattice(&samples, 0).unwrap();
        let mut shuffled = samples.clone();
        shuffled.reverse();
        shuffled.swap(1, 3);
        let lat2 = build_lattice(&shuffled, 0).unwrap();
        for k in 0..=1000 {
            let x = DVector::from_vec(vec![6.0 * k as f64 / 1000.0]);
            assert_abs_diff_eq!(lat.eval(&x), lat2.eval(&x), epsilon = 1e-12);
        }
    }

    /// Empirical continuity: small steps move the value by at most the
    /// Lipschitz constant times the step.
    #[test]
    fn continuity_bound() {
        let (samples, _) = one_dim_fixture();
        let lat = build_lattice(&samples, 0).unwrap();
        let lip = lat.lipschitz();
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..10_000 {
            let x = rng.random_range(0.0..6.0);
            let d = 1e-6;
            let a = lat.eval(&DVector::from_vec(vec![x]));
            let b = lat.eval(&DVector::from_vec(vec![x + d]));
            assert!((a - b).abs() <= lip * d + 1e-12);
        }
    }

    #[test]
    fn error_bound_zero_when_pieces_cover() {
        let (samples, _) = one_dim_fixture();
        let grid: Vec<DVector<f64>> = (0..=500)
            .map(|k| DVector::from_vec(vec![6.0 * k as f64 / 500.0]))
            .collect();
        let eps = estimate_error_bound(&samples, 0, &grid).unwrap();
        assert!(eps.abs() <= 1e-9, "eps_d = {eps}");
        // dropping the middle regions leaves a detectable gap: the first
        // region's term claims its literal far beyond where it is cut
        let partial = vec![samples[0].clone(), samples[4].clone()];
        let eps_partial = estimate_error_bound(&partial, 0, &grid).unwrap();
        assert!(eps_partial > 0.5, "missing pieces must be detected");
        // a single sample makes both forms the same literal: zero gap
        // (and no coverage guarantee whatsoever)
        let single = vec![samples[1].clone()];
        let eps_single = estimate_error_bound(&single, 0, &grid).unwrap();
        assert!(eps_single.abs() <= 1e-12);
    }

    #[test]
    fn upper_lower_sandwich() {
        let (samples, _) = one_dim_fixture();
        let upper = build_lattice(&samples, 0).unwrap();
        let negated: Vec<(DVector<f64>, AffinePiece)> = samples
            .iter()
            .map(|(x, p)| {
                (
                    x.clone(),
                    AffinePiece {
                        f: -&p.f,
                        g: -&p.g,
                    },
                )
            })
            .collect();
        let lower_neg = build_lattice(&negated, 0).unwrap();
        for k in 0..=1000 {
            let x = DVector::from_vec(vec![6.0 * k as f64 / 1000.0]);
            let hi = upper.eval(&x);
            let lo = -lower_neg.eval(&x);
            assert!(lo <= hi + TOL_CMP, "sandwich violated at {x:?}");
        }
    }

    #[test]
    fn bundle_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.json");
        let (samples, _) = one_dim_fixture();
        let bundle = build_bundle(&samples).unwrap().simplify();
        save(&bundle, &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.dim, bundle.dim);
        assert_eq!(loaded.lattices[0].terms, bundle.lattices[0].terms);
        for k in 0..=100 {
            let x = DVector::from_vec(vec![6.0 * k as f64 / 100.0]);
            assert_eq!(loaded.eval(&x), bundle.eval(&x));
        }
        // re-serialization is byte-identical
        let path2 = dir.path().join("bundle2.json");
        save(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );

        // rejected inputs
        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, "{\"version\":1,\"n\":1,\"m\":0,\"channels\":[]}").unwrap();
        assert!(matches!(load(&bad), Err(Error::Parse { .. })));
        std::fs::write(
            &bad,
            "{\"version\":7,\"n\":1,\"m\":1,\"channels\":[{\"literals\":[{\"a\":[1.0],\"b\":0.0}],\"terms\":[[0]]}]}",
        )
        .unwrap();
        assert!(matches!(load(&bad), Err(Error::VersionMismatch { found: 7, .. })));
        std::fs::write(
            &bad,
            "{\"version\":1,\"n\":1,\"m\":1,\"channels\":[{\"literals\":[{\"a\":[1.0],\"b\":0.0}],\"terms\":[[3]]}]}",
        )
        .unwrap();
        let err = load(&bad).unwrap_err();
        assert!(format!("{err}").contains("out of range"));
        std::fs::write(&bad, "{not json").unwrap();
        let err = load(&bad).unwrap_err();
        assert!(format!("{err}").contains("line"), "{err}");
    }
}
