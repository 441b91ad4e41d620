//! Anatomical axis codes.
//!
//! A code names, for each grid axis, the anatomical direction that axis points
//! toward in RAS+ world space. The identity affine is `RAS`; the canonical
//! spine orientation used by preprocessing is `PIR`.

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix4;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    R,
    L,
    A,
    P,
    S,
    I,
}

impl Direction {
    /// World axis this direction lies on (0 = x/RL, 1 = y/AP, 2 = z/SI).
    pub fn world_axis(self) -> usize {
        match self {
            Direction::R | Direction::L => 0,
            Direction::A | Direction::P => 1,
            Direction::S | Direction::I => 2,
        }
    }

    /// +1 when the direction points along the positive RAS world axis.
    pub fn sign(self) -> f64 {
        match self {
            Direction::R | Direction::A | Direction::S => 1.0,
            Direction::L | Direction::P | Direction::I => -1.0,
        }
    }

    pub fn from_axis_sign(axis: usize, positive: bool) -> Self {
        match (axis, positive) {
            (0, true) => Direction::R,
            (0, false) => Direction::L,
            (1, true) => Direction::A,
            (1, false) => Direction::P,
            (2, true) => Direction::S,
            _ => Direction::I,
        }
    }

    fn letter(self) -> char {
        match self {
            Direction::R => 'R',
            Direction::L => 'L',
            Direction::A => 'A',
            Direction::P => 'P',
            Direction::S => 'S',
            Direction::I => 'I',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        Some(match c.to_ascii_uppercase() {
            'R' => Direction::R,
            'L' => Direction::L,
            'A' => Direction::A,
            'P' => Direction::P,
            'S' => Direction::S,
            'I' => Direction::I,
            _ => return None,
        })
    }
}

/// Three-letter orientation code, one direction per grid axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Orientation(pub [Direction; 3]);

impl Orientation {
    pub const RAS: Orientation = Orientation([Direction::R, Direction::A, Direction::S]);
    pub const PIR: Orientation = Orientation([Direction::P, Direction::I, Direction::R]);

    pub fn new(dirs: [Direction; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for d in dirs {
            let axis = d.world_axis();
            if seen[axis] {
                return Err(Error::Orientation(format!(
                    "{} uses world axis {} twice",
                    Orientation(dirs),
                    axis
                )));
            }
            seen[axis] = true;
        }
        Ok(Orientation(dirs))
    }

    /// Derives the code from the upper-left 3x3 block of a voxel-to-world
    /// affine: each grid axis takes the letter of its largest-magnitude
    /// component. Ties and collisions are errors.
    pub fn from_affine(affine: &Matrix4<f64>) -> Result<Self> {
        let mut dirs = [Direction::R; 3];
        for (col, dir) in dirs.iter_mut().enumerate() {
            let c = [affine[(0, col)], affine[(1, col)], affine[(2, col)]];
            let mags = c.map(f64::abs);
            let mut best = 0;
            for k in 1..3 {
                if mags[k] > mags[best] {
                    best = k;
                }
            }
            if mags[best] == 0.0 {
                return Err(Error::Orientation(format!("affine column {col} is zero")));
            }
            let tie = (0..3).any(|k| k != best && (mags[k] - mags[best]).abs() <= 1e-9 * mags[best]);
            if tie {
                return Err(Error::Orientation(format!(
                    "affine column {col} has no dominant world axis: {c:?}"
                )));
            }
            *dir = Direction::from_axis_sign(best, c[best] > 0.0);
        }
        Orientation::new(dirs)
    }

    /// For each target axis, the source axis it is taken from and whether
    /// it is reversed.
    pub fn transform_to(&self, target: &Orientation) -> [(usize, bool); 3] {
        let mut plan = [(0, false); 3];
        for (t, tdir) in target.0.iter().enumerate() {
            let s = self
                .0
                .iter()
                .position(|d| d.world_axis() == tdir.world_axis())
                .expect("valid orientations cover all world axes");
            plan[t] = (s, self.0[s] != *tdir);
        }
        plan
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.0 {
            write!(f, "{}", d.letter())?;
        }
        Ok(())
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.trim().chars().collect();
        if chars.len() != 3 {
            return Err(Error::Orientation(format!("{s:?} is not a 3-letter code")));
        }
        let mut dirs = [Direction::R; 3];
        for (d, c) in dirs.iter_mut().zip(chars) {
            *d = Direction::from_letter(c)
                .ok_or_else(|| Error::Orientation(format!("{s:?}: unknown letter {c:?}")))?;
        }
        Orientation::new(dirs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_affine_is_ras() {
        assert_eq!(Orientation::from_affine(&Matrix4::identity()).unwrap(), Orientation::RAS);
    }

    #[test]
    fn parse_and_display() {
        let o: Orientation = "pir".parse().unwrap();
        assert_eq!(o, Orientation::PIR);
        assert_eq!(o.to_string(), "PIR");
    }

    #[test]
    fn conflicting_codes_rejected() {
        for bad in ["RLA", "RRS", "PIX", "PI", "PIRS"] {
            assert!(bad.parse::<Orientation>().is_err(), "{bad}");
        }
    }

    #[test]
    fn oblique_tie_rejected() {
        let mut a = Matrix4::identity();
        a[(0, 0)] = 1.0;
        a[(1, 0)] = 1.0;
        assert!(Orientation::from_affine(&a).is_err());
    }

    #[test]
    fn ras_to_pir_plan() {
        let plan = Orientation::RAS.transform_to(&Orientation::PIR);
        assert_eq!(plan, [(1, true), (2, true), (0, false)]);
    }
}
