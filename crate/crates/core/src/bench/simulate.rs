use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::world::{MapGraph, Route, TagSet};

const ATTEMPTS_PER_ROUTE: usize = 1000;

/// `count` distinct random walks of `max_length` locations that never
/// revisit a location or touch a tag in `exclusions`.
pub fn simulate_routes(
    g: &MapGraph,
    count: usize,
    max_length: usize,
    exclusions: TagSet,
    seed: u64,
) -> Result<Vec<Route>> {
    if max_length == 0 {
        return Err(Error::invalid("max_length must be >= 1"));
    }
    let allowed: Vec<bool> = g.locations().iter().map(|l| !l.tags.intersects(exclusions)).collect();
    let starts: Vec<usize> = (0..g.len()).filter(|&i| allowed[i]).collect();
    if starts.is_empty() {
        return Err(Error::invalid("every location is excluded"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    let mut visited = vec![false; g.len()];
    let budget = count.saturating_mul(ATTEMPTS_PER_ROUTE);
    let mut walk = Vec::with_capacity(max_length);
    for _ in 0..budget {
        if out.len() == count {
            break;
        }
        walk.clear();
        walk.push(*starts.choose(&mut rng).unwrap());
        visited[walk[0]] = true;
        while walk.len() < max_length {
            let last = *walk.last().unwrap();
            let options: Vec<usize> =
                g.adjacent(last).iter().copied().filter(|&n| allowed[n] && !visited[n]).collect();
            match options.choose(&mut rng) {
                Some(&n) => {
                    visited[n] = true;
                    walk.push(n);
                }
                None => break,
            }
        }
        for &i in &walk {
            visited[i] = false;
        }
        if walk.len() == max_length {
            let route = Route::new(walk.iter().map(|&i| g.id_at(i)).collect());
            if seen.insert(route.clone()) {
                out.push(route);
            }
        }
    }
    if out.len() < count {
        return Err(Error::invalid(format!(
            "could only simulate {} of {count} distinct routes of length {max_length} after {budget} attempts",
            out.len()
        )));
    }
    Ok(out)
}
