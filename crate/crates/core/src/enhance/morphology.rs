//! Binary morphology on ridge maps: pore filling, thinning and branch
//! removal. Black (0) is foreground.

use std::sync::OnceLock;

use crate::error::Result;
use crate::imgproc::{GrayImage, BLACK, WHITE};

/// 8-neighborhood in ring order, counter-clockwise from east (image y points
/// down, so "north" is `dy = -1`). Consecutive entries share an edge.
pub const RING: [(isize, isize); 8] =
    [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];

/// Bit `k` is set when `RING[k]` is black. Outside pixels count as white.
#[inline]
pub fn neighbor_mask(img: &GrayImage, x: usize, y: usize) -> u8 {
    let mut mask = 0u8;
    for (k, (dx, dy)) in RING.iter().enumerate() {
        if img.get_checked(x as isize + dx, y as isize + dy) == Some(BLACK) {
            mask |= 1 << k;
        }
    }
    mask
}

/// Number of maximal runs of black pixels around the ring.
#[inline]
pub fn neighbor_groups(mask: u8) -> u32 {
    if mask == 0xFF {
        return 1;
    }
    // a run starts wherever a black bit follows a white one
    (mask & !mask.rotate_left(1)).count_ones()
}

/// Yokoi 8-connectivity number equals one exactly for simple points.
fn yokoi8(mask: u8) -> u32 {
    let x = |k: usize| 1 - ((mask >> (k % 8)) & 1) as i32;
    let n: i32 = [0, 2, 4, 6].iter().map(|&k| x(k) - x(k) * x(k + 1) * x(k + 2)).sum();
    n as u32
}

fn simple_table() -> &'static [bool; 256] {
    static TABLE: OnceLock<[bool; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [false; 256];
        for (m, slot) in t.iter_mut().enumerate() {
            *slot = yokoi8(m as u8) == 1;
        }
        t
    })
}

/// Whether deleting a black pixel with this neighborhood leaves the 8-connected
/// topology of the foreground (and 4-connected background) unchanged.
#[inline]
pub fn is_simple(mask: u8) -> bool {
    simple_table()[mask as usize]
}

/// Fills pores: a white pixel with more than 15 black pixels among its 24
/// neighbors turns black. Decisions use the input image only.
pub fn fill_pores(binary: &GrayImage) -> Result<GrayImage> {
    binary.check_binary()?;
    let mut out = binary.clone();
    for y in 0..binary.height() {
        for x in 0..binary.width() {
            if binary.get(x, y) != WHITE {
                continue;
            }
            let mut black = 0;
            for dy in -2isize..=2 {
                for dx in -2isize..=2 {
                    if (dx, dy) != (0, 0)
                        && binary.get_checked(x as isize + dx, y as isize + dy) == Some(BLACK)
                    {
                        black += 1;
                    }
                }
            }
            if black > 15 {
                out.set(x, y, BLACK);
            }
        }
    }
    Ok(out)
}

/// Topology-preserving thinning to one-pixel-wide curves.
///
/// Each pass visits the border pixels facing one compass direction and
/// deletes, one at a time, those that are simple and not curve ends. Passes
/// cycle N, S, E, W until nothing changes.
pub fn thin(binary: &GrayImage) -> Result<GrayImage> {
    binary.check_binary()?;
    let mut img = binary.clone();
    let (w, h) = (img.width(), img.height());
    let mut candidates = Vec::new();
    loop {
        let mut changed = false;
        for (dx, dy) in [(0isize, -1isize), (0, 1), (1, 0), (-1, 0)] {
            candidates.clear();
            for y in 0..h {
                for x in 0..w {
                    if img.get(x, y) == BLACK
                        && img.get_checked(x as isize + dx, y as isize + dy) != Some(BLACK)
                    {
                        candidates.push((x, y));
                    }
                }
            }
            for &(x, y) in &candidates {
                let mask = neighbor_mask(&img, x, y);
                if mask.count_ones() >= 2 && is_simple(mask) {
                    img.set(x, y, WHITE);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(img)
}

/// Deletes branch points (three or more neighbor groups) in synchronous
/// passes until none remain.
pub fn remove_y_junctions(skel: &GrayImage) -> Result<GrayImage> {
    skel.check_binary()?;
    let mut img = skel.clone();
    let mut branch = Vec::new();
    loop {
        branch.clear();
        for y in 0..img.height() {
            for x in 0..img.width() {
                if img.get(x, y) == BLACK && neighbor_groups(neighbor_mask(&img, x, y)) >= 3 {
                    branch.push((x, y));
                }
            }
        }
        if branch.is_empty() {
            return Ok(img);
        }
        for &(x, y) in &branch {
            img.set(x, y, WHITE);
        }
    }
}

/// Number of 8-connected black components.
pub fn count_components(img: &GrayImage) -> usize {
    let (w, h) = (img.width(), img.height());
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut count = 0;
    for start in 0..w * h {
        if seen[start] || img.data()[start] != BLACK {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in RING {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !seen[j] && img.data()[j] == BLACK {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

/// Whether any 2x2 window is entirely black.
pub fn has_black_2x2(img: &GrayImage) -> bool {
    (0..img.height().saturating_sub(1)).any(|y| {
        (0..img.width().saturating_sub(1)).any(|x| {
            img.get(x, y) == BLACK
                && img.get(x + 1, y) == BLACK
                && img.get(x, y + 1) == BLACK
                && img.get(x + 1, y + 1) == BLACK
        })
    })
}
