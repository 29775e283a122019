//! Ground-truth relative attributes between classes.

use crate::data::{ClassAttribute, ClassInfo};
use crate::error::{Error, Result};

/// Ternary relation of `a` to `b`: +1 when `a` has more of the attribute, −1 when less, 0 when equal.
pub fn relation(a: ClassAttribute, b: ClassAttribute) -> Result<i8> {
    match (a, b) {
        (ClassAttribute::EdgeCount(x), ClassAttribute::EdgeCount(y)) => Ok(x.cmp(&y) as i8),
        (ClassAttribute::Liveliness(x), ClassAttribute::Liveliness(y)) => Ok(x as i8 - y as i8),
        _ => Err(Error::MixedAttributes),
    }
}

/// `C × C` target matrix with `z[i][j] = relation(class i, class j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationTargets {
    z: Vec<Vec<f32>>,
}

impl RelationTargets {
    pub fn from_classes(classes: &[ClassInfo]) -> Result<Self> {
        let z = classes
            .iter()
            .map(|a| classes.iter().map(|b| relation(a.attribute, b.attribute).map(f32::from)).collect())
            .collect::<Result<Vec<Vec<f32>>>>()?;
        Ok(Self { z })
    }

    /// Wraps an explicit matrix; it must be square and skew-symmetric.
    pub fn from_matrix(z: Vec<Vec<f32>>) -> Result<Self> {
        let c = z.len();
        for (i, row) in z.iter().enumerate() {
            if row.len() != c {
                return Err(crate::error::invalid("relation matrix must be square"));
            }
            for j in 0..c {
                if row[j] != -z[j][i] {
                    return Err(crate::error::invalid(format!("relation matrix not skew-symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { z })
    }

    pub fn num_classes(&self) -> usize {
        self.z.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.z[i][j]
    }

    pub fn rows(&self) -> &[Vec<f32>] {
        &self.z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::cifar::class_table;
    use crate::data::shapes::ShapeClass;
    use proptest::prelude::*;

    fn edges(n: u32) -> ClassAttribute {
        ClassAttribute::EdgeCount(n)
    }

    #[test]
    fn shape_relations() {
        assert_eq!(relation(edges(3), edges(1)).unwrap(), 1);
        assert_eq!(relation(edges(4), edges(4)).unwrap(), 0);
        let angle = ShapeClass::Angle.info().attribute;
        let sig: Vec<i8> = ShapeClass::KNOWN.iter().map(|c| relation(c.info().attribute, angle).unwrap()).collect();
        assert_eq!(sig, vec![-1, 1, 1, 1]);
        let tri = ShapeClass::Triangle.info().attribute;
        let sig: Vec<i8> = ShapeClass::KNOWN.iter().map(|c| relation(c.info().attribute, tri).unwrap()).collect();
        assert_eq!(sig, vec![-1, 0, 1, 1]);
    }

    #[test]
    fn liveliness_relations() {
        let t = class_table();
        let attr = |name: &str| t.iter().find(|c| c.name == name).unwrap().attribute;
        assert_eq!(relation(attr("truck"), attr("automobile")).unwrap(), 0);
        assert_eq!(relation(attr("horse"), attr("truck")).unwrap(), 1);
        assert_eq!(relation(attr("truck"), attr("bird")).unwrap(), -1);
        assert_eq!(relation(attr("dog"), attr("bird")).unwrap(), 0);
        assert!(matches!(relation(attr("dog"), edges(3)), Err(Error::MixedAttributes)));
    }

    #[test]
    fn explicit_matrix_checked() {
        assert!(RelationTargets::from_matrix(vec![vec![0.0, 0.5], vec![-0.5, 0.0]]).is_ok());
        assert!(RelationTargets::from_matrix(vec![vec![0.0, 0.5], vec![0.5, 0.0]]).is_err());
        assert!(RelationTargets::from_matrix(vec![vec![0.0, 0.5]]).is_err());
    }

    proptest! {
        #[test]
        fn skew_symmetric(a in 0u32..10, b in 0u32..10, x in 0u8..2, y in 0u8..2) {
            prop_assert_eq!(relation(edges(a), edges(b)).unwrap(), -relation(edges(b), edges(a)).unwrap());
            let (lx, ly) = (ClassAttribute::Liveliness(x), ClassAttribute::Liveliness(y));
            prop_assert_eq!(relation(lx, ly).unwrap(), -relation(ly, lx).unwrap());
            prop_assert_eq!(relation(lx, lx).unwrap(), 0);
        }
    }
}
