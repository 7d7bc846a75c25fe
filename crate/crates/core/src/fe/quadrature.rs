//! Symmetric quadrature rules on the reference triangle (0,0), (1,0), (0,1).

use super::FeError;

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    /// Weights sum to 1/2, the reference-triangle area.
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Highest exactness degree available.
pub const MAX_DEGREE: usize = 6;

impl QuadratureRule {
    fn from_orbits(degree: usize, orbits: &[(Orbit, f64)]) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(orbit, w) in orbits {
            for p in orbit.points() {
                points.push(p);
                // tabulated weights are normalized to sum 1
                weights.push(0.5 * w);
            }
        }
        Self {
            points,
            weights,
            degree,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrate `f` over the reference triangle.
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }
}

/// Barycentric symmetry orbit, given in the (x, y) reference coordinates.
#[derive(Clone, Copy)]
enum Orbit {
    Centroid,
    /// (a, a, 1 - 2a) and permutations: 3 points.
    S21(f64),
    /// (a, b, 1 - a - b) and permutations: 6 points.
    S111(f64, f64),
}

impl Orbit {
    fn points(self) -> Vec<[f64; 2]> {
        match self {
            Orbit::Centroid => vec![[1.0 / 3.0, 1.0 / 3.0]],
            Orbit::S21(a) => {
                let c = 1.0 - 2.0 * a;
                vec![[a, a], [c, a], [a, c]]
            }
            Orbit::S111(a, b) => {
                let c = 1.0 - a - b;
                vec![[a, b], [b, a], [b, c], [c, b], [c, a], [a, c]]
            }
        }
    }
}

/// Smallest supported symmetric rule with exactness at least `required_degree`.
pub fn quad_rule(required_degree: usize) -> Result<QuadratureRule, FeError> {
    let rule = match required_degree {
        0 | 1 => QuadratureRule::from_orbits(1, &[(Orbit::Centroid, 1.0)]),
        2 => QuadratureRule::from_orbits(2, &[(Orbit::S21(1.0 / 6.0), 1.0 / 3.0)]),
        3 | 4 => QuadratureRule::from_orbits(
            4,
            &[
                (
                    Orbit::S21(0.445_948_490_915_964_886_318_329_253_883_3),
                    0.223_381_589_678_011_465_944_640_017_491_5,
                ),
                (
                    Orbit::S21(0.091_576_213_509_770_743_459_571_463_402_2),
                    0.109_951_743_655_321_867_388_693_315_841_8,
                ),
            ],
        ),
        5 => {
            let s = 15f64.sqrt();
            QuadratureRule::from_orbits(
                5,
                &[
                    (Orbit::Centroid, 9.0 / 40.0),
                    (Orbit::S21((6.0 - s) / 21.0), (155.0 - s) / 1200.0),
                    (Orbit::S21((6.0 + s) / 21.0), (155.0 + s) / 1200.0),
                ],
            )
        }
        6 => QuadratureRule::from_orbits(
            6,
            &[
                (
                    Orbit::S21(0.063_089_014_491_502_228_340_331_602_870_819),
                    0.050_844_906_370_206_816_920_936_809_106_869,
                ),
                (
                    Orbit::S21(0.249_286_745_170_910_421_291_638_553_107_02),
                    0.116_786_275_726_379_366_030_690_538_961_84,
                ),
                (
                    Orbit::S111(
                        0.053_145_049_844_816_947_353_249_671_631_398,
                        0.310_352_451_033_784_405_416_607_733_956_55,
                    ),
                    0.082_851_075_618_373_575_193_553_456_420_442,
                ),
            ],
        ),
        d => return Err(FeError::UnsupportedQuadrature(d)),
    };
    Ok(rule)
}
