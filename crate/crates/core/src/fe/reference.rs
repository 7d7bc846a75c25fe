//! Lagrange bases of degree 1 and 2 on the reference triangle.
//!
//! Node order: the three vertices (0,0), (1,0), (0,1), then for degree 2
//! the midpoints of the local edges (0,1), (1,2), (2,0).

use super::FeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceElement {
    degree: usize,
}

/// Basis values and reference gradients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

const P2_NODES: [[f64; 2]; 6] = [
    [0.0, 0.0],
    [1.0, 0.0],
    [0.0, 1.0],
    [0.5, 0.0],
    [0.5, 0.5],
    [0.0, 0.5],
];

/// Local vertex pairs of the edge nodes.
pub const EDGE_VERTICES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

impl ReferenceElement {
    pub fn new(degree: usize) -> Result<Self, FeError> {
        match degree {
            1 | 2 => Ok(Self { degree }),
            k => Err(FeError::UnsupportedDegree(k)),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_nodes(&self) -> usize {
        if self.degree == 1 {
            3
        } else {
            6
        }
    }

    pub fn nodes(&self) -> &'static [[f64; 2]] {
        &P2_NODES[..self.n_nodes()]
    }

    pub fn eval(&self, x: f64, y: f64) -> BasisEval {
        let l = [1.0 - x - y, x, y];
        // d lambda / d(x, y)
        let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        if self.degree == 1 {
            return BasisEval {
                values: l.to_vec(),
                grads: dl.to_vec(),
            };
        }
        let mut values = Vec::with_capacity(6);
        let mut grads = Vec::with_capacity(6);
        for i in 0..3 {
            values.push(l[i] * (2.0 * l[i] - 1.0));
            let c = 4.0 * l[i] - 1.0;
            grads.push([c * dl[i][0], c * dl[i][1]]);
        }
        for [i, j] in EDGE_VERTICES {
            values.push(4.0 * l[i] * l[j]);
            grads.push([
                4.0 * (dl[i][0] * l[j] + l[i] * dl[j][0]),
                4.0 * (dl[i][1] * l[j] + l[i] * dl[j][1]),
            ]);
        }
        BasisEval { values, grads }
    }
}

/// Evaluate the degree-`k` basis at a reference point.
pub fn eval_basis(k: usize, point: [f64; 2]) -> Result<BasisEval, FeError> {
    Ok(ReferenceElement::new(k)?.eval(point[0], point[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kronecker() {
        for k in [1, 2] {
            let e = ReferenceElement::new(k).unwrap();
            for (j, node) in e.nodes().iter().enumerate() {
                let b = e.eval(node[0], node[1]);
                for (i, v) in b.values.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((v - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn named_points() {
        let b = eval_basis(1, [0.0, 0.0]).unwrap();
        assert_eq!(b.values, vec![1.0, 0.0, 0.0]);
        let b = eval_basis(2, [0.5, 0.0]).unwrap();
        assert_eq!(&b.values[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(b.values[3], 1.0);
        let b = eval_basis(2, [1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((b.values.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(matches!(eval_basis(3, [0.0, 0.0]), Err(FeError::UnsupportedDegree(3))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let e = ReferenceElement::new(2).unwrap();
        let (x, y, d) = (0.21, 0.33, 1e-6);
        let b = e.eval(x, y);
        let bx = e.eval(x + d, y);
        let bxm = e.eval(x - d, y);
        let by = e.eval(x, y + d);
        let bym = e.eval(x, y - d);
        for i in 0..6 {
            let gx = (bx.values[i] - bxm.values[i]) / (2.0 * d);
            let gy = (by.values[i] - bym.values[i]) / (2.0 * d);
            assert!((gx - b.grads[i][0]).abs() < 1e-8);
            assert!((gy - b.grads[i][1]).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(u in 0.0f64..1.0, v in 0.0f64..1.0, k in 1usize..=2) {
            let (x, y) = if u + v <= 1.0 { (u, v) } else { (1.0 - u, 1.0 - v) };
            let b = eval_basis(k, [x, y]).unwrap();
            prop_assert!((b.values.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let gx: f64 = b.grads.iter().map(|g| g[0]).sum();
            let gy: f64 = b.grads.iter().map(|g| g[1]).sum();
            prop_assert!(gx.abs() < 1e-14 && gy.abs() < 1e-14);
        }
    }
}
