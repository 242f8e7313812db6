//! 2D layout of shortcuts for the statistics scatter.
//!
//! Shortcuts are compared by productivity, normalized coverage and
//! prediction label, embedded with classical metric scaling, and then
//! separated so no two glyphs overlap.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::ShortcutNode;

/// Largest number of shortcuts the projection accepts.
pub const MAX_POINTS: usize = 300;

/// Pairwise separation tolerance after collision resolution.
pub const OVERLAP_EPS: f64 = 1e-6;

pub const MAX_COLLISION_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProjectionError {
    #[error("{0} shortcuts exceed the projection limit of {MAX_POINTS}; tighten the filters")]
    TooMany(usize),
    #[error("split {0:?} not present in the shortcut statistics")]
    UnknownSplit(String),
}

/// The statistics a glyph and the distance depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphStats {
    pub productivity: f64,
    pub coverage: usize,
    pub prediction: String,
}

/// Min-max coverage normalization over the current set of shortcuts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormContext {
    pub min: usize,
    pub max: usize,
}

impl NormContext {
    pub fn from_coverages(coverages: impl IntoIterator<Item = usize>) -> Self {
        let mut min = usize::MAX;
        let mut max = 0;
        for c in coverages {
            min = min.min(c);
            max = max.max(c);
        }
        if min > max {
            min = max;
        }
        Self { min, max }
    }

    /// Maps coverage to `[0, 1]`; a degenerate range maps to 0.
    pub fn norm(&self, coverage: usize) -> f64 {
        if self.max <= self.min {
            return 0.0;
        }
        let c = coverage.clamp(self.min, self.max);
        (c - self.min) as f64 / (self.max - self.min) as f64
    }
}

/// `|prod_a - prod_b|^2 + |norm(cov_a) - norm(cov_b)|^2 + [pred_a != pred_b]`.
pub fn shortcut_distance(a: &GlyphStats, b: &GlyphStats, ctx: &NormContext) -> f64 {
    let dp = a.productivity - b.productivity;
    let dc = ctx.norm(a.coverage) - ctx.norm(b.coverage);
    let label = if a.prediction != b.prediction { 1.0 } else { 0.0 };
    dp * dp + dc * dc + label
}

/// Classical metric scaling into two dimensions, scaled uniformly into the
/// unit square and centered. Deterministic for a given matrix.
pub fn embed(distances: &[Vec<f64>]) -> Result<Vec<[f64; 2]>, ProjectionError> {
    let n = distances.len();
    if n > MAX_POINTS {
        return Err(ProjectionError::TooMany(n));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![[0.5, 0.5]]);
    }
    // double centering of the squared distances
    let sq = DMatrix::from_fn(n, n, |i, j| distances[i][j] * distances[i][j]);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut coords = vec![[0.0; 2]; n];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[k];
        if lambda <= 1e-12 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        // fix the sign: largest-magnitude component positive
        let pivot = (0..n)
            .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap().then(b.cmp(&a)))
            .unwrap();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let scale = lambda.sqrt() * sign;
        for i in 0..n {
            coords[i][axis] = v[i] * scale;
        }
    }
    Ok(fit_unit_square(&coords))
}

fn fit_unit_square(coords: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in coords {
        for a in 0..2 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if extent <= 1e-12 {
        return vec![[0.5, 0.5]; coords.len()];
    }
    coords
        .iter()
        .map(|c| {
            let mut out = [0.0; 2];
            for a in 0..2 {
                let offset = (1.0 - (hi[a] - lo[a]) / extent) / 2.0;
                out[a] = (c[a] - lo[a]) / extent + offset;
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlyphScale {
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for GlyphScale {
    fn default() -> Self {
        Self {
            r_min: 0.01,
            r_max: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    pub radius: f64,
    /// Fraction of the ring filled; the productivity.
    pub arc: f64,
    pub label: String,
}

/// Radius grows with the square root of normalized coverage so glyph area
/// tracks coverage.
pub fn glyph_geometry(stats: &GlyphStats, ctx: &NormContext, scale: &GlyphScale) -> Glyph {
    Glyph {
        radius: scale.r_min + (scale.r_max - scale.r_min) * ctx.norm(stats.coverage).sqrt(),
        arc: stats.productivity,
        label: stats.prediction.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionReport {
    pub iterations: usize,
    /// Largest remaining overlap (`r_i + r_j - distance`), 0 when resolved.
    pub max_residual: f64,
}

impl CollisionReport {
    pub fn resolved(&self) -> bool {
        self.max_residual <= OVERLAP_EPS
    }
}

fn max_overlap(circles: &[Circle]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..circles.len() {
        for j in (i + 1)..circles.len() {
            let (a, b) = (circles[i], circles[j]);
            let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
            worst = worst.max(a.r + b.r - d);
        }
    }
    worst
}

/// Pushes overlapping circles apart pairwise, each moving half the overlap
/// along the line between centers. Coincident centers separate in a seeded
/// random direction. After a few sweeps without convergence the layout is
/// also expanded slightly about its centroid, which never creates overlaps.
pub fn resolve_collisions(circles: &mut [Circle], seed: u64) -> CollisionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = circles.len();
    for iteration in 0..MAX_COLLISION_ITERATIONS {
        let mut moved = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (circles[i], circles[j]);
                let (mut dx, mut dy) = (b.x - a.x, b.y - a.y);
                let mut d = (dx * dx + dy * dy).sqrt();
                let target = a.r + b.r;
                if d >= target {
                    continue;
                }
                if d < 1e-12 {
                    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    (dx, dy) = (angle.cos(), angle.sin());
                    d = 1.0;
                    circles[j].x = circles[i].x;
                    circles[j].y = circles[i].y;
                    let push = target / 2.0 * (1.0 + 1e-9);
                    circles[i].x -= dx * push;
                    circles[i].y -= dy * push;
                    circles[j].x += dx * push;
                    circles[j].y += dy * push;
                } else {
                    let push = (target - d) / 2.0 * (1.0 + 1e-9) + 1e-12;
                    let (ux, uy) = (dx / d, dy / d);
                    circles[i].x -= ux * push;
                    circles[i].y -= uy * push;
                    circles[j].x += ux * push;
                    circles[j].y += uy * push;
                }
                moved = true;
            }
        }
        if !moved {
            return CollisionReport {
                iterations: iteration,
                max_residual: 0.0,
            };
        }
        if iteration >= 20 {
            expand(circles, 1.02);
        }
    }
    CollisionReport {
        iterations: MAX_COLLISION_ITERATIONS,
        max_residual: max_overlap(circles).max(0.0),
    }
}

fn expand(circles: &mut [Circle], factor: f64) {
    let n = circles.len() as f64;
    let cx = circles.iter().map(|c| c.x).sum::<f64>() / n;
    let cy = circles.iter().map(|c| c.y).sum::<f64>() / n;
    for c in circles.iter_mut() {
        c.x = cx + (c.x - cx) * factor;
        c.y = cy + (c.y - cy) * factor;
    }
}

/// Uniformly shrinks (never enlarges) and translates the layout, radii
/// included, so every circle lies inside the unit square.
pub fn fit_to_view(circles: &mut [Circle]) {
    if circles.is_empty() {
        return;
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in circles.iter() {
        lo[0] = lo[0].min(c.x - c.r);
        lo[1] = lo[1].min(c.y - c.r);
        hi[0] = hi[0].max(c.x + c.r);
        hi[1] = hi[1].max(c.y + c.r);
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let s = if extent > 1.0 { 1.0 / extent } else { 1.0 };
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let inside = lo[0] >= 0.0 && lo[1] >= 0.0 && hi[0] <= 1.0 && hi[1] <= 1.0;
    if inside {
        return;
    }
    for c in circles.iter_mut() {
        c.x = 0.5 + (c.x - mid[0]) * s;
        c.y = 0.5 + (c.y - mid[1]) * s;
        c.r *= s;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub arc: f64,
    pub label: String,
}

/// Glyph statistics of a node for a split (or the whole set); `None` when
/// the node covers nothing there.
pub fn glyph_stats(node: &ShortcutNode, split: Option<&str>) -> Result<Option<GlyphStats>, ProjectionError> {
    let stats = node
        .stats
        .get(split)
        .ok_or_else(|| ProjectionError::UnknownSplit(split.unwrap_or_default().to_string()))?;
    Ok(match (stats.productivity.value(), &stats.prediction) {
        (Some(productivity), Some(prediction)) => Some(GlyphStats {
            productivity,
            coverage: stats.coverage,
            prediction: prediction.clone(),
        }),
        _ => None,
    })
}

/// Full layout: distances, embedding, glyphs, collision resolution and
/// fitting into the unit square. Nodes without coverage on the split are
/// left out.
pub fn project(
    nodes: &[&ShortcutNode],
    split: Option<&str>,
    scale: &GlyphScale,
    seed: u64,
) -> Result<Vec<ProjectionPoint>, ProjectionError> {
    if nodes.len() > MAX_POINTS {
        return Err(ProjectionError::TooMany(nodes.len()));
    }
    let mut entries = Vec::with_capacity(nodes.len());
    for node in nodes {
        if let Some(gs) = glyph_stats(node, split)? {
            entries.push((node.id.clone(), gs));
        }
    }
    let ctx = NormContext::from_coverages(entries.iter().map(|e| e.1.coverage));
    let dist: Vec<Vec<f64>> = entries
        .iter()
        .map(|a| entries.iter().map(|b| shortcut_distance(&a.1, &b.1, &ctx)).collect())
        .collect();
    let coords = embed(&dist)?;
    let glyphs: Vec<Glyph> = entries.iter().map(|e| glyph_geometry(&e.1, &ctx, scale)).collect();
    let mut circles: Vec<Circle> = coords
        .iter()
        .zip(&glyphs)
        .map(|(c, g)| Circle {
            x: c[0],
            y: c[1],
            r: g.radius,
        })
        .collect();
    let report = resolve_collisions(&mut circles, seed);
    if !report.resolved() {
        log::warn!(
            "collision resolution stopped with residual overlap {:.3e}",
            report.max_residual
        );
    }
    fit_to_view(&mut circles);
    Ok(entries
        .into_iter()
        .zip(glyphs)
        .zip(circles)
        .map(|(((id, _), g), c)| ProjectionPoint {
            id,
            x: c.x,
            y: c.y,
            radius: c.r,
            arc: g.arc,
            label: g.label,
        })
        .collect())
}
