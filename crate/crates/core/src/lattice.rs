//! Integer sites of the spatial lattice Z^ν and the dense boxes the
//! dynamic programs run on.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_NU: usize = 4;

/// A point of Z^ν, padded with zeros up to [`MAX_NU`] coordinates.
///
/// The derived ordering is lexicographic, which is the canonical order used
/// for every deterministic summation in the crate.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Site(pub [i64; MAX_NU]);

impl Site {
    pub const ORIGIN: Site = Site([0; MAX_NU]);

    pub fn new(coords: &[i64]) -> Result<Site> {
        if coords.is_empty() || coords.len() > MAX_NU {
            return Err(Error::InvalidArgument(format!(
                "site needs between 1 and {MAX_NU} coordinates, got {}",
                coords.len()
            )));
        }
        let mut s = [0; MAX_NU];
        s[..coords.len()].copy_from_slice(coords);
        Ok(Site(s))
    }

    /// Panicking shorthand for literals in tests and examples.
    pub fn at(coords: &[i64]) -> Site {
        Site::new(coords).expect("site literal")
    }

    pub fn coords(&self, nu: usize) -> &[i64] {
        &self.0[..nu]
    }

    pub fn to_vec(&self, nu: usize) -> Vec<i64> {
        self.0[..nu].to_vec()
    }

    pub fn as_f64(&self, nu: usize) -> Vec<f64> {
        self.0[..nu].iter().map(|&c| c as f64).collect()
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|c| c * c).sum()
    }
}

impl Add for Site {
    type Output = Site;
    #[inline]
    fn add(self, o: Site) -> Site {
        let mut s = self.0;
        for (a, b) in s.iter_mut().zip(o.0) {
            *a += b;
        }
        Site(s)
    }
}

impl Sub for Site {
    type Output = Site;
    #[inline]
    fn sub(self, o: Site) -> Site {
        let mut s = self.0;
        for (a, b) in s.iter_mut().zip(o.0) {
            *a -= b;
        }
        Site(s)
    }
}

impl Neg for Site {
    type Output = Site;
    fn neg(self) -> Site {
        Site(self.0.map(|c| -c))
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Axis-aligned box `lo ..= hi` in the first `nu` coordinates, stored
/// row-major with the first coordinate slowest so that linear order equals
/// the lexicographic order of [`Site`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeBox {
    pub nu: usize,
    pub lo: [i64; MAX_NU],
    pub hi: [i64; MAX_NU],
    strides: [usize; MAX_NU],
    len: usize,
}

impl LatticeBox {
    /// Returns `None` when the box is empty in some coordinate.
    pub fn new(nu: usize, lo: [i64; MAX_NU], hi: [i64; MAX_NU]) -> Option<LatticeBox> {
        let mut strides = [0usize; MAX_NU];
        let mut len = 1usize;
        for c in (0..nu).rev() {
            if hi[c] < lo[c] {
                return None;
            }
            strides[c] = len;
            len = len.checked_mul((hi[c] - lo[c] + 1) as usize)?;
        }
        Some(LatticeBox {
            nu,
            lo,
            hi,
            strides,
            len,
        })
    }

    pub fn point(nu: usize, s: Site) -> LatticeBox {
        LatticeBox::new(nu, s.0, s.0).expect("single point box")
    }

    /// Number of cells, or `None` on overflow; used for cap checks before
    /// allocating.
    pub fn cells(nu: usize, lo: &[i64; MAX_NU], hi: &[i64; MAX_NU]) -> Option<u64> {
        let mut n: u64 = 1;
        for c in 0..nu {
            if hi[c] < lo[c] {
                return Some(0);
            }
            n = n.checked_mul((hi[c] - lo[c] + 1) as u64)?;
        }
        Some(n)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    /// Linear stride of coordinate `c`.
    #[inline]
    pub fn stride(&self, c: usize) -> usize {
        self.strides[c]
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn contains(&self, s: &Site) -> bool {
        (0..self.nu).all(|c| s.0[c] >= self.lo[c] && s.0[c] <= self.hi[c])
    }

    #[inline]
    pub fn index(&self, s: &Site) -> Option<usize> {
        if !self.contains(s) {
            return None;
        }
        Some(self.index_unchecked(s))
    }

    #[inline]
    pub fn index_unchecked(&self, s: &Site) -> usize {
        let mut i = 0usize;
        for c in 0..self.nu {
            i += (s.0[c] - self.lo[c]) as usize * self.strides[c];
        }
        i
    }

    /// Linear offset of a displacement; valid for cells whose image stays in
    /// the box.
    #[inline]
    pub fn offset(&self, d: &Site) -> isize {
        (0..self.nu)
            .map(|c| d.0[c] as isize * self.strides[c] as isize)
            .sum()
    }

    pub fn site(&self, mut i: usize) -> Site {
        let mut s = [0i64; MAX_NU];
        for c in 0..self.nu {
            let q = i / self.strides[c];
            i -= q * self.strides[c];
            s[c] = self.lo[c] + q as i64;
        }
        Site(s)
    }

    /// Sites in canonical (lexicographic) order.
    #[inline]
    pub fn sites(&self) -> BoxSites<'_> {
        BoxSites {
            b: self,
            cur: Site(self.lo),
            left: self.len,
        }
    }
}

pub struct BoxSites<'a> {
    b: &'a LatticeBox,
    cur: Site,
    left: usize,
}

impl Iterator for BoxSites<'_> {
    type Item = Site;

    #[inline]
    fn next(&mut self) -> Option<Site> {
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        let out = self.cur;
        let last = self.b.nu - 1;
        if self.cur.0[last] < self.b.hi[last] {
            self.cur.0[last] += 1;
        } else if self.left > 0 {
            self.carry(last);
        }
        Some(out)
    }

    #[inline]
    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.left, Some(self.left))
    }
}

impl BoxSites<'_> {
    #[cold]
    fn carry(&mut self, mut c: usize) {
        loop {
            self.cur.0[c] = self.b.lo[c];
            c -= 1;
            if self.cur.0[c] < self.b.hi[c] {
                self.cur.0[c] += 1;
                return;
            }
        }
    }
}

impl ExactSizeIterator for BoxSites<'_> {}

/// A maximal run of cells that differ only in the last coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Row {
    /// First site of the run.
    pub first: Site,
    /// Linear index of `first`.
    pub start: usize,
    pub len: usize,
}

impl Row {
    /// Site `j` of the run.
    #[inline(always)]
    pub fn site(&self, nu: usize, j: usize) -> Site {
        let mut s = self.first;
        s.0[nu - 1] += j as i64;
        s
    }
}

impl LatticeBox {
    /// Rows in canonical order; hot loops walk each row by index.
    pub fn rows(&self) -> impl Iterator<Item = Row> + '_ {
        let last = self.nu - 1;
        let row_len = (self.hi[last] - self.lo[last] + 1) as usize;
        let outer = LatticeBox::new(self.nu, self.lo, {
            let mut h = self.hi;
            h[last] = self.lo[last];
            h
        })
        .expect("non-empty box");
        let count = self.len / row_len;
        let mut it = outer.sites().collect::<Vec<_>>().into_iter();
        (0..count).map(move |r| Row {
            first: it.next().expect("row start"),
            start: r * row_len,
            len: row_len,
        })
    }
}

/// Basis of the integer span of `vectors` in echelon form, by integer row
/// reduction (Euclid on each column). Zero vectors are ignored.
pub fn integer_basis(nu: usize, vectors: &[Site]) -> Vec<Site> {
    let mut rows: Vec<Site> = vectors.to_vec();
    let mut r = 0;
    for c in 0..nu {
        loop {
            let Some(p) = (r..rows.len())
                .filter(|&i| rows[i].0[c] != 0)
                .min_by_key(|&i| rows[i].0[c].abs())
            else {
                break;
            };
            rows.swap(r, p);
            let mut clear = true;
            for i in r + 1..rows.len() {
                let q = rows[i].0[c] / rows[r].0[c];
                if q != 0 {
                    for k in 0..nu {
                        rows[i].0[k] -= q * rows[r].0[k];
                    }
                }
                clear &= rows[i].0[c] == 0;
            }
            if clear {
                r += 1;
                break;
            }
        }
    }
    rows.truncate(r);
    rows
}
