use serde::{Deserialize, Serialize};

use crate::dataset::{Code, FeatureSpec};

/// Dummy coding with the lowest allowed code of each feature as reference.
/// Codes outside the schema encode like the reference level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    /// Non-reference codes per feature, ascending.
    levels: Vec<Vec<Code>>,
}

impl OneHotEncoder {
    pub fn from_schema(schema: &[FeatureSpec]) -> Self {
        OneHotEncoder {
            levels: schema
                .iter()
                .map(|f| f.allowed_codes.iter().skip(1).copied().collect())
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn encode(&self, row: &[Code]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        for (levels, &code) in self.levels.iter().zip(row) {
            out.extend(levels.iter().map(|&l| if l == code { 1.0 } else { 0.0 }));
        }
        out
    }

    /// Column labels `name=code`.
    pub fn column_names(&self, schema: &[FeatureSpec]) -> Vec<String> {
        schema
            .iter()
            .zip(&self.levels)
            .flat_map(|(f, levels)| levels.iter().map(move |l| format!("{}={l}", f.name)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_reference_level() {
        let schema = vec![FeatureSpec::new("a", 0..2), FeatureSpec::new("b", [1, 2, 3])];
        let enc = OneHotEncoder::from_schema(&schema);
        assert_eq!(enc.width(), 3);
        assert_eq!(enc.encode(&[1, 1]), vec![1.0, 0.0, 0.0]);
        assert_eq!(enc.encode(&[0, 3]), vec![0.0, 0.0, 1.0]);
        assert_eq!(enc.encode(&[9, 9]), vec![0.0; 3]);
        assert_eq!(enc.column_names(&schema), vec!["a=1", "b=2", "b=3"]);
    }
}
