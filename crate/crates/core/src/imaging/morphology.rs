use super::BinaryMask;
use crate::error::{Error, Result};

/// Digital disk: offsets `(dx, dy)` with `dx^2 + dy^2 <= r^2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    radius: usize,
    offsets: Vec<(isize, isize)>,
}

impl StructuringElement {
    pub fn disk(radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::param("radius", "disk radius must be >= 1"));
        }
        let r = radius as isize;
        let offsets = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| dx * dx + dy * dy <= r * r)
            .collect();
        Ok(Self { radius, offsets })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn diameter(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    fn check(&self, mask: &BinaryMask) -> Result<()> {
        if mask.width() < self.diameter() || mask.height() < self.diameter() {
            return Err(Error::param(
                "structuring_element",
                format!(
                    "disk of diameter {} does not fit a {}x{} mask",
                    self.diameter(),
                    mask.width(),
                    mask.height()
                ),
            ));
        }
        Ok(())
    }
}

/// Out-of-bounds pixels count as background, so erosion shrinks at borders.
pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> Result<BinaryMask> {
    se.check(mask)?;
    Ok(sweep(mask, se, true))
}

pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> Result<BinaryMask> {
    se.check(mask)?;
    Ok(sweep(mask, se, false))
}

/// Erosion followed by dilation.
pub fn morph_open(mask: &BinaryMask, se: &StructuringElement) -> Result<BinaryMask> {
    se.check(mask)?;
    Ok(sweep(&sweep(mask, se, true), se, false))
}

/// Dilation followed by erosion.
pub fn morph_close(mask: &BinaryMask, se: &StructuringElement) -> Result<BinaryMask> {
    se.check(mask)?;
    Ok(sweep(&sweep(mask, se, false), se, true))
}

fn sweep(mask: &BinaryMask, se: &StructuringElement, erosion: bool) -> BinaryMask {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let probe = |x: isize, y: isize| -> bool {
        x >= 0 && y >= 0 && x < w && y < h && mask.get(x as usize, y as usize)
    };
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        if erosion {
            se.offsets().iter().all(|&(dx, dy)| probe(x + dx, y + dy))
        } else {
            se.offsets().iter().any(|&(dx, dy)| probe(x + dx, y + dy))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    type Set = BTreeSet<(isize, isize)>;

    fn to_set(m: &BinaryMask) -> Set {
        let mut s = Set::new();
        for y in 0..m.height() {
            for x in 0..m.width() {
                if m.get(x, y) {
                    s.insert((x as isize, y as isize));
                }
            }
        }
        s
    }

    fn disk_set(r: isize) -> Vec<(isize, isize)> {
        let mut v = vec![];
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    v.push((dx, dy));
                }
            }
        }
        v
    }

    // Minkowski sum/difference on point sets, clipped to the frame.
    fn minkowski_dilate(s: &Set, b: &[(isize, isize)], w: isize, h: isize) -> Set {
        let mut out = Set::new();
        for &(x, y) in s {
            for &(dx, dy) in b {
                let p = (x + dx, y + dy);
                if p.0 >= 0 && p.1 >= 0 && p.0 < w && p.1 < h {
                    out.insert(p);
                }
            }
        }
        out
    }

    fn minkowski_erode(s: &Set, b: &[(isize, isize)], w: isize, h: isize) -> Set {
        let mut out = Set::new();
        for y in 0..h {
            for x in 0..w {
                if b.iter().all(|&(dx, dy)| s.contains(&(x + dx, y + dy))) {
                    out.insert((x, y));
                }
            }
        }
        out
    }

    #[test]
    fn disk_is_rotation_symmetric() {
        let se = StructuringElement::disk(3).unwrap();
        let set: BTreeSet<_> = se.offsets().iter().copied().collect();
        for &(dx, dy) in se.offsets() {
            assert!(set.contains(&(-dy, dx)));
        }
        assert_eq!(StructuringElement::disk(2).unwrap().offsets().len(), 13);
        assert!(StructuringElement::disk(0).is_err());
    }

    #[test]
    fn open_removes_small_components_close_fills_small_holes() {
        let se = StructuringElement::disk(2).unwrap();
        let speck =
            BinaryMask::from_fn(20, 20, |x, y| (9..11).contains(&x) && (9..11).contains(&y));
        assert!(morph_open(&speck, &se).unwrap().is_empty());

        let holed = BinaryMask::from_fn(30, 30, |x, y| {
            let inside = (5..25).contains(&x) && (5..25).contains(&y);
            inside && !((14..16).contains(&x) && (14..16).contains(&y))
        });
        let closed = morph_close(&holed, &se).unwrap();
        assert!(closed.get(14, 14) && closed.get(15, 15));
    }

    #[test]
    fn open_close_square_matches_minkowski_oracle() {
        let (w, h) = (40usize, 40usize);
        let square =
            BinaryMask::from_fn(w, h, |x, y| (10..30).contains(&x) && (10..30).contains(&y));
        let se = StructuringElement::disk(2).unwrap();
        let got = morph_close(&morph_open(&square, &se).unwrap(), &se).unwrap();

        let b = disk_set(2);
        let (wi, hi) = (w as isize, h as isize);
        let s = to_set(&square);
        let opened = minkowski_dilate(&minkowski_erode(&s, &b, wi, hi), &b, wi, hi);
        let expect = minkowski_erode(&minkowski_dilate(&opened, &b, wi, hi), &b, wi, hi);
        assert_eq!(to_set(&got), expect);
        // the digital r=2 disk trims three pixels from each square corner
        assert_eq!(expect.len(), 400 - 4 * 3);
        assert!(!got.get(10, 10) && !got.get(11, 10) && !got.get(10, 11) && got.get(11, 11));
    }

    #[test]
    fn rejects_element_larger_than_mask() {
        let m = BinaryMask::empty(4, 10);
        let se = StructuringElement::disk(2).unwrap();
        assert!(morph_open(&m, &se).is_err());
        assert!(morph_close(&BinaryMask::empty(5, 5), &se).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn open_and_close_are_idempotent(bits in proptest::collection::vec(any::<bool>(), 16 * 12),
                                         r in 1usize..3) {
            let m = BinaryMask::new(16, 12, bits).unwrap();
            let se = StructuringElement::disk(r).unwrap();
            let o = morph_open(&m, &se).unwrap();
            prop_assert_eq!(morph_open(&o, &se).unwrap(), o.clone());
            let c = morph_close(&m, &se).unwrap();
            prop_assert_eq!(morph_close(&c, &se).unwrap(), c);
            prop_assert_eq!(o.dims(), m.dims());
        }
    }
}
