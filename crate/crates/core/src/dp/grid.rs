//! Regular grids on the probability simplex with piecewise-linear
//! interpolation over the Freudenthal (Kuhn) triangulation.
//!
//! A point `z` of the `d`-part simplex maps to the staircase coordinates
//! `y_j = k * sum_{l >= j} z_l`, `j = 1..d`, which satisfy
//! `k >= y_1 >= ... >= y_{d-1} >= 0`. Grid points are the integer staircase
//! points, and each unit cube is split into simplices by sorting fractional
//! parts.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Staircase direction and the vertex positions spanning it, if any.
type Slope = (usize, Option<(usize, usize)>);

/// All compositions of `resolution` into `dimension` parts, scaled by `1/resolution`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexGrid {
    dimension: usize,
    resolution: usize,
    #[serde(skip)]
    binom: Vec<Vec<u64>>,
    #[serde(skip)]
    points: Vec<u16>,
}

fn binomial_table(n: usize) -> Vec<Vec<u64>> {
    let mut c = vec![vec![0u64; n + 1]; n + 1];
    for i in 0..=n {
        c[i][0] = 1;
        for j in 1..=i {
            c[i][j] = c[i - 1][j - 1].saturating_add(c[i - 1][j]);
        }
    }
    c
}

/// `C(k + d - 1, d - 1)` without overflow.
pub fn grid_size(dimension: usize, resolution: usize) -> u128 {
    if dimension == 0 {
        return 0;
    }
    let (n, r) = ((resolution + dimension - 1) as u128, (dimension - 1) as u128);
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

impl SimplexGrid {
    /// Builds the grid if it has at most `max_points` points.
    pub fn new(dimension: usize, resolution: usize, max_points: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Incompatible("simplex grid needs at least one coordinate".into()));
        }
        if resolution == 0 || resolution > u16::MAX as usize {
            return Err(Error::Incompatible(format!("grid resolution {resolution} out of range")));
        }
        let size = grid_size(dimension, resolution);
        if size > max_points as u128 {
            return Err(Error::Budget {
                what: "simplex grid points",
                required: size,
                limit: max_points as u128,
            });
        }
        let mut grid = Self {
            dimension,
            resolution,
            binom: binomial_table(resolution + dimension),
            points: Vec::with_capacity(size as usize * dimension),
        };
        let mut comp = vec![0u16; dimension];
        grid.fill(0, resolution, &mut comp);
        Ok(grid)
    }

    fn fill(&mut self, i: usize, remaining: usize, comp: &mut [u16]) {
        if i + 1 == self.dimension {
            comp[i] = remaining as u16;
            self.points.extend_from_slice(comp);
            return;
        }
        for v in 0..=remaining {
            comp[i] = v as u16;
            self.fill(i + 1, remaining - v, comp);
        }
    }

    /// Rebuilds the point table after deserialization.
    pub fn rebuild(&self) -> Result<Self> {
        Self::new(self.dimension, self.resolution, usize::MAX)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn composition(&self, i: usize) -> &[u16] {
        &self.points[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        let k = self.resolution as f64;
        self.composition(i).iter().map(|&c| c as f64 / k).collect()
    }

    fn count(&self, n: usize, parts: usize) -> u64 {
        // compositions of n into `parts` non-negative parts
        self.binom[n + parts - 1][parts - 1]
    }

    /// Index of a composition in generation order.
    pub fn rank(&self, comp: &[u16]) -> usize {
        let d = self.dimension;
        let mut rank = 0u64;
        let mut rem = self.resolution;
        for (i, &u) in comp.iter().enumerate().take(d - 1) {
            for v in 0..u as usize {
                rank += self.count(rem - v, d - i - 1);
            }
            rem -= u as usize;
        }
        rank as usize
    }

    /// Grid point nearest to `z` in the staircase coordinates.
    pub fn nearest(&self, z: &[f64]) -> usize {
        let stair = self.staircase(z);
        let mut rounded: Vec<usize> = stair.iter().map(|y| y.round() as usize).collect();
        for j in (0..rounded.len().saturating_sub(1)).rev() {
            rounded[j] = rounded[j].max(rounded[j + 1]);
        }
        self.rank(&self.staircase_point(&rounded))
    }

    fn staircase(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dimension;
        let k = self.resolution as f64;
        let total: f64 = z.iter().sum();
        let mut suffix = 0.0;
        let mut y = vec![0.0; d - 1];
        for j in (1..d).rev() {
            suffix += z[j].max(0.0);
            y[j - 1] = (k * suffix / total).min(k);
        }
        y
    }

    fn staircase_point(&self, v: &[usize]) -> Vec<u16> {
        let d = self.dimension;
        let mut comp = vec![0u16; d];
        if d == 1 {
            comp[0] = self.resolution as u16;
            return comp;
        }
        comp[0] = (self.resolution - v[0]) as u16;
        for j in 1..d - 1 {
            comp[j] = (v[j - 1] - v[j]) as u16;
        }
        comp[d - 1] = v[d - 2] as u16;
        comp
    }

    /// Barycentric decomposition of `z`: grid indices and weights of the
    /// vertices of the containing simplex (zero-weight vertices dropped).
    pub fn locate(&self, z: &[f64]) -> Vec<(usize, f64)> {
        let mut verts = self.simplex_of(z).0;
        verts.retain(|&(_, w)| w > 0.0);
        verts
    }

    /// Interpolated value at `z`.
    pub fn interpolate(&self, values: &[f64], z: &[f64]) -> f64 {
        self.locate(z).iter().map(|&(i, w)| w * values[i]).sum()
    }

    /// Interpolated value and a vector `g` with `value = sum_l z_l g_l` on the
    /// containing simplex (for normalized `z`). `g` is the gradient of the
    /// degree-one homogeneous extension `t V(n / t)`.
    pub fn interpolate_with_gradient(&self, values: &[f64], z: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dimension;
        let (verts_all, slopes) = self.simplex_of(z);
        let value: f64 = verts_all.iter().map(|&(i, w)| w * values[i]).sum();
        if d == 1 {
            return (value, vec![values[0]]);
        }
        let k = self.resolution as f64;
        // c_j: value step along staircase direction j
        let mut c = vec![0.0; d - 1];
        for &(j, pair) in &slopes {
            if let Some((a, b)) = pair {
                c[j] = values[verts_all[b].0] - values[verts_all[a].0];
            }
        }
        let y = self.staircase(z);
        // value = const + sum_j c_j * y_j with y_j = k * sum_{l >= j+1} z_l
        let lin: f64 = c.iter().zip(&y).map(|(cj, yj)| cj * yj).sum();
        let constant = value - lin;
        let mut g = vec![constant; d];
        let mut acc = 0.0;
        for l in 1..d {
            acc += c[l - 1];
            g[l] += k * acc;
        }
        (value, g)
    }

    /// Vertices of the containing simplex (zero weights kept) and, per
    /// staircase direction, the pair of vertex positions whose value
    /// difference is the local slope (`None` where the step leaves the domain).
    fn simplex_of(&self, z: &[f64]) -> (Vec<(usize, f64)>, Vec<Slope>) {
        let d = self.dimension;
        if d == 1 {
            return (vec![(0, 1.0)], Vec::new());
        }
        let k = self.resolution;
        let y = self.staircase(z);
        let mut base: Vec<usize> = y.iter().map(|v| (v.floor() as usize).min(k)).collect();
        for j in (0..d - 2).rev() {
            base[j] = base[j].max(base[j + 1]);
        }
        let frac: Vec<f64> = y.iter().zip(&base).map(|(v, b)| (v - *b as f64).clamp(0.0, 1.0)).collect();
        let mut order: Vec<usize> = (0..d - 1).collect();
        order.sort_by(|&a, &b| frac[b].partial_cmp(&frac[a]).unwrap().then(a.cmp(&b)));
        let mut verts = Vec::with_capacity(d);
        let mut slopes = Vec::with_capacity(d - 1);
        let mut v = base.clone();
        verts.push((self.rank(&self.staircase_point(&v)), 1.0 - frac[order[0]]));
        let mut prev = Some(0usize);
        for i in 0..d - 1 {
            let j = order[i];
            v[j] += 1;
            let valid = v[j] <= k && (j == 0 || v[j] <= v[j - 1]);
            if !valid {
                for &jj in &order[i..] {
                    slopes.push((jj, None));
                }
                break;
            }
            let w = if i + 1 < d - 1 { frac[j] - frac[order[i + 1]] } else { frac[j] };
            verts.push((self.rank(&self.staircase_point(&v)), w));
            let pos = verts.len() - 1;
            slopes.push((j, prev.map(|p| (p, pos))));
            prev = Some(pos);
        }
        (verts, slopes)
    }
}
