use serde::{Deserialize, Serialize};

use super::{intensity_to_bin, Image, BINS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ClaheParams<T: Scalar> {
    /// Relative clip limit: bins are capped at `clip_limit * tile_pixels / 256`.
    pub clip_limit: T,
    pub tiles_x: usize,
    pub tiles_y: usize,
}

impl<T: Scalar> Default for ClaheParams<T> {
    fn default() -> Self {
        Self {
            clip_limit: T::lit(2.0),
            tiles_x: 8,
            tiles_y: 8,
        }
    }
}

const MAX_REDISTRIBUTIONS: usize = 100;

/// Tile equalisation function. Tiles whose histogram occupies a single bin
/// have nothing to equalise and pass intensities through unchanged.
enum TileMap {
    Identity,
    Table(Vec<f64>),
}

impl TileMap {
    #[inline]
    fn eval<T: Scalar>(&self, v: T) -> T {
        match self {
            TileMap::Identity => v,
            TileMap::Table(t) => T::lit(t[intensity_to_bin(v)]),
        }
    }
}

/// Contrast-limited adaptive histogram equalisation.
pub fn clahe<T: Scalar>(
    img: &Image<T>,
    clip_limit: T,
    tiles_x: usize,
    tiles_y: usize,
) -> Result<Image<T>> {
    let (w, h) = img.dims();
    if !(clip_limit.is_finite() && clip_limit > T::zero()) {
        return Err(Error::param(
            "clip_limit",
            format!("must be > 0, got {clip_limit}"),
        ));
    }
    if tiles_x == 0 || tiles_y == 0 {
        return Err(Error::param("tiles", "tile counts must be >= 1"));
    }
    if w / tiles_x < 2 || h / tiles_y < 2 {
        return Err(Error::param(
            "tiles",
            format!("{tiles_x}x{tiles_y} tiles do not fit a {w}x{h} image with sides >= 2 px"),
        ));
    }
    let clip = clip_limit.as_f64();
    let x_edges: Vec<usize> = (0..=tiles_x).map(|i| i * w / tiles_x).collect();
    let y_edges: Vec<usize> = (0..=tiles_y).map(|j| j * h / tiles_y).collect();

    let mut maps = Vec::with_capacity(tiles_x * tiles_y);
    for j in 0..tiles_y {
        for i in 0..tiles_x {
            let mut hist = [0f64; BINS];
            for y in y_edges[j]..y_edges[j + 1] {
                for x in x_edges[i]..x_edges[i + 1] {
                    hist[intensity_to_bin(img.get(x, y))] += 1.0;
                }
            }
            maps.push(tile_map(&mut hist, clip));
        }
    }

    let x_centres = centres(&x_edges);
    let y_centres = centres(&y_edges);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (j0, j1, wy) = bracket(&y_centres, y as f64);
        for x in 0..w {
            let (i0, i1, wx) = bracket(&x_centres, x as f64);
            let v = img.get(x, y);
            let at = |i: usize, j: usize| maps[j * tiles_x + i].eval(v);
            let top = lerp(at(i0, j0), at(i1, j0), T::lit(wx));
            let bottom = lerp(at(i0, j1), at(i1, j1), T::lit(wx));
            out.push(lerp(top, bottom, T::lit(wy)));
        }
    }
    Ok(Image::from_raw(w, h, out))
}

fn tile_map(hist: &mut [f64; BINS], clip_limit: f64) -> TileMap {
    if hist.iter().filter(|&&c| c > 0.0).count() <= 1 {
        return TileMap::Identity;
    }
    let total: f64 = hist.iter().sum();
    let limit = clip_limit * total / BINS as f64;
    for _ in 0..MAX_REDISTRIBUTIONS {
        let excess: f64 = hist.iter().map(|&c| (c - limit).max(0.0)).sum();
        if excess < 1.0 {
            break;
        }
        let share = excess / BINS as f64;
        for c in hist.iter_mut() {
            *c = c.min(limit) + share;
        }
    }
    let mass: f64 = hist.iter().sum();
    let mut cdf = 0.0;
    let table = hist
        .iter()
        .map(|&c| {
            cdf += c;
            (cdf / mass).min(1.0)
        })
        .collect();
    TileMap::Table(table)
}

fn centres(edges: &[usize]) -> Vec<f64> {
    edges
        .windows(2)
        .map(|e| (e[0] + e[1] - 1) as f64 / 2.0)
        .collect()
}

/// Neighbouring tile indices and blend weight for a coordinate; clamps
/// beyond the outermost centres.
fn bracket(centres: &[f64], p: f64) -> (usize, usize, f64) {
    let last = centres.len() - 1;
    if p <= centres[0] {
        return (0, 0, 0.0);
    }
    if p >= centres[last] {
        return (last, last, 0.0);
    }
    let i = centres.partition_point(|&c| c <= p) - 1;
    let wgt = (p - centres[i]) / (centres[i + 1] - centres[i]);
    (i, i + 1, wgt)
}

#[inline]
fn lerp<T: Scalar>(a: T, b: T, t: T) -> T {
    if a == b {
        a
    } else {
        a + (b - a) * t
    }
}
