//! Binary morphology and connected-component utilities shared by the
//! detection, feature and evaluation stages. All connectivity is 8-connected.

use crate::image::BinaryMask;

/// Component labelling of a binary mask. Labels start at 1 and follow the
/// raster order of each component's first pixel; 0 is background.
#[derive(Debug, Clone)]
pub struct Components {
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
    pub width: usize,
    pub height: usize,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Pixel indices per component, each list in raster order.
    pub fn pixel_lists(&self) -> Vec<Vec<usize>> {
        let mut lists: Vec<Vec<usize>> = self.sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                lists[l as usize - 1].push(i);
            }
        }
        lists
    }
}

#[inline]
pub(crate) fn neighbours8(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let x = (i % w) as isize;
    let y = (i / w) as isize;
    const OFFSETS: [(isize, isize); 8] = [
        (-1, -1),
        (0, -1),
        (1, -1),
        (-1, 0),
        (1, 0),
        (-1, 1),
        (0, 1),
        (1, 1),
    ];
    OFFSETS.iter().filter_map(move |&(dx, dy)| {
        let (nx, ny) = (x + dx, y + dy);
        (nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize).then(|| ny as usize * w + nx as usize)
    })
}

pub fn label_components(mask: &BinaryMask) -> Components {
    let (w, h) = mask.dims();
    let data = mask.data();
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !data[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            for n in neighbours8(i, w, h) {
                if data[n] && labels[n] == 0 {
                    labels[n] = label;
                    stack.push(n);
                }
            }
        }
        sizes.push(size);
    }
    Components {
        labels,
        sizes,
        width: w,
        height: h,
    }
}

pub fn count_components(mask: &BinaryMask) -> usize {
    label_components(mask).count()
}

/// The largest component (earliest in raster order on ties); empty mask
/// if there is none.
pub fn largest_component(mask: &BinaryMask) -> BinaryMask {
    let cc = label_components(mask);
    let (w, h) = mask.dims();
    let Some(best) = (0..cc.count()).max_by(|&a, &b| cc.sizes[a].cmp(&cc.sizes[b]).then(b.cmp(&a))) else {
        return BinaryMask::empty(w, h);
    };
    let keep = best as u32 + 1;
    BinaryMask::new(w, h, cc.labels.iter().map(|&l| l == keep).collect()).expect("same size")
}

/// Drops components with fewer than `min_size` pixels.
pub fn remove_small_components(mask: &BinaryMask, min_size: usize) -> BinaryMask {
    let cc = label_components(mask);
    let (w, h) = mask.dims();
    BinaryMask::new(
        w,
        h,
        cc.labels
            .iter()
            .map(|&l| l > 0 && cc.sizes[l as usize - 1] >= min_size)
            .collect(),
    )
    .expect("same size")
}

/// Offsets `(dx, dy)` of a digital disk: all integer points within
/// Euclidean distance `radius` of the origin.
pub fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let r2 = (radius * radius) as isize;
    (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dx * dx + dy * dy <= r2)
        .collect()
}

/// Binary dilation by a symmetric structuring element.
pub fn dilate(mask: &BinaryMask, offsets: &[(isize, isize)]) -> BinaryMask {
    let (w, h) = mask.dims();
    let mut out = BinaryMask::empty(w, h);
    for i in mask.indices() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for &(dx, dy) in offsets {
            let (nx, ny) = (x + dx, y + dy);
            if nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize {
                out.set(nx as usize, ny as usize, true);
            }
        }
    }
    out
}

/// Binary erosion by a symmetric structuring element; pixels outside the
/// frame count as foreground so the border does not erode.
pub fn erode(mask: &BinaryMask, offsets: &[(isize, isize)]) -> BinaryMask {
    let (w, h) = mask.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        offsets.iter().all(|&(dx, dy)| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize || mask.get(nx as usize, ny as usize)
        })
    })
}

/// Closing with a disk of the given radius.
pub fn close_disk(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let se = disk_offsets(radius);
    erode(&dilate(mask, &se), &se)
}
