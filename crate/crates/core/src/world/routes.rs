use rayon::prelude::*;

use super::{MapGraph, Route, TagSet, TurnPattern};
use crate::error::{Error, Result};

pub const DEFAULT_TURN_THRESHOLD_DEG: f64 = 30.0;

/// Compass bearing of the segment `from -> to`, degrees clockwise from +y
/// in `[0, 360)`.
pub fn bearing_deg(from: [f64; 2], to: [f64; 2]) -> f64 {
    let b = (to[0] - from[0]).atan2(to[1] - from[1]).to_degrees();
    if b < 0.0 {
        b + 360.0
    } else {
        b
    }
}

/// Absolute bearing change in `[0, 180]`.
pub fn bearing_change(b1: f64, b2: f64) -> f64 {
    let d = (b2 - b1).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// Turn bit at the interior location `cur` of the path `prev -> cur -> next`
/// (dense indices).
pub fn turn_bit(g: &MapGraph, prev: usize, cur: usize, next: usize, threshold_deg: f64) -> bool {
    let p = g.at(prev).position;
    let c = g.at(cur).position;
    let n = g.at(next).position;
    bearing_change(bearing_deg(p, c), bearing_deg(c, n)) > threshold_deg
}

/// Turn pattern of a route: `m - 1` bits, bit 0 always clear, bit `i`
/// (for `1 <= i <= m - 2`) set when the bearing changes by more than the
/// threshold at the route's `i`-th location.
pub fn turn_pattern(route: &Route, g: &MapGraph, threshold_deg: f64) -> Result<TurnPattern> {
    let m = route.len();
    if m < 2 {
        return Err(Error::invalid(format!("turn pattern needs a route of length >= 2, got {m}")));
    }
    let idx: Vec<usize> = route.ids().iter().map(|&id| g.index_of(id)).collect::<Result<_>>()?;
    let mut bits = vec![false; m - 1];
    for i in 1..m - 1 {
        bits[i] = turn_bit(g, idx[i - 1], idx[i], idx[i + 1], threshold_deg);
    }
    Ok(TurnPattern(bits))
}

fn allowed(g: &MapGraph, index: usize, exclusions: TagSet) -> bool {
    !g.at(index).tags.intersects(exclusions)
}

/// Every directed length-`m` route with distinct locations, consecutive
/// adjacency and no excluded tags, in lexicographic id order.
pub fn enumerate_routes(g: &MapGraph, m: usize, exclusions: TagSet) -> Vec<Route> {
    if m == 0 {
        return Vec::new();
    }
    let per_start: Vec<Vec<Route>> = (0..g.len())
        .into_par_iter()
        .filter(|&s| allowed(g, s, exclusions))
        .map(|s| {
            let mut out = Vec::new();
            let mut path = vec![s];
            let mut on_path = vec![false; g.len()];
            on_path[s] = true;
            dfs(g, m, exclusions, &mut path, &mut on_path, &mut out);
            out
        })
        .collect();
    per_start.into_iter().flatten().collect()
}

fn dfs(
    g: &MapGraph,
    m: usize,
    exclusions: TagSet,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Route>,
) {
    if path.len() == m {
        out.push(Route::new(path.iter().map(|&i| g.id_at(i)).collect()));
        return;
    }
    let last = *path.last().expect("path is never empty");
    for &next in g.adjacent(last) {
        if on_path[next] || !allowed(g, next, exclusions) {
            continue;
        }
        on_path[next] = true;
        path.push(next);
        dfs(g, m, exclusions, path, on_path, out);
        path.pop();
        on_path[next] = false;
    }
}

/// Extends each route by every legal next location. Output is sorted.
pub fn extend_routes(routes: &[Route], g: &MapGraph, exclusions: TagSet) -> Result<Vec<Route>> {
    let Some(first) = routes.first() else {
        return Ok(Vec::new());
    };
    let m = first.len();
    if let Some(bad) = routes.iter().find(|r| r.len() != m) {
        return Err(Error::invalid(format!(
            "mixed route lengths: {m} and {}",
            bad.len()
        )));
    }
    if m == 0 {
        return Err(Error::invalid("cannot extend empty routes"));
    }
    let mut out = Vec::new();
    for r in routes {
        let last = g.index_of(r.last().expect("non-empty"))?;
        for &next in g.adjacent(last) {
            let id = g.id_at(next);
            if r.ids().contains(&id) || !allowed(g, next, exclusions) {
                continue;
            }
            let mut ids = Vec::with_capacity(m + 1);
            ids.extend_from_slice(r.ids());
            ids.push(id);
            out.push(Route::new(ids));
        }
    }
    out.sort_unstable();
    Ok(out)
}
