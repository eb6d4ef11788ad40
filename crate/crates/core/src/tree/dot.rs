use std::fmt::Write as _;

use super::{DecisionTree, TreeNode};

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz digraph of the tree. Nodes are numbered in preorder and show the
/// split variable (or the predicted class at leaves), the class counts and
/// the share of training rows reaching the node; edges carry code labels.
pub fn export_dot(tree: &DecisionTree) -> String {
    let total = tree.root.counts.total().max(1) as f64;
    let mut out = String::from("digraph tree {\n  node [shape=box, fontname=\"Helvetica\"];\n");
    let mut next = 0usize;
    write_node(tree, &tree.root, total, &mut next, &mut out);
    out.push_str("}\n");
    out
}

fn write_node(tree: &DecisionTree, node: &TreeNode, total: f64, next: &mut usize, out: &mut String) -> usize {
    let id = *next;
    *next += 1;
    let head = match &node.split {
        Some(s) => escape(&tree.schema[s.feature].name),
        None => format!("class {}", node.prediction),
    };
    let counts: Vec<String> = node.counts.as_slice().iter().map(u64::to_string).collect();
    let share = 100.0 * node.counts.total() as f64 / total;
    let _ = writeln!(
        out,
        "  n{id} [label=\"{head}\\n[{}]\\n{share:.1}%\"];",
        counts.join(", ")
    );
    if let Some(split) = &node.split {
        let spec = &tree.schema[split.feature];
        for (codes, child) in split.branches.iter().zip(&node.children) {
            let child_id = write_node(tree, child, total, next, out);
            let label: Vec<String> = codes.iter().map(|&c| escape(&spec.label(c))).collect();
            let _ = writeln!(out, "  n{id} -> n{child_id} [label=\"{}\"];", label.join(", "));
        }
    }
    id
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::super::{train_c50, TreeParams};
    use super::*;
    use crate::dataset::{binary_schema, CategoricalTable};

    fn count(dot: &str) -> (usize, usize) {
        let edges = dot.lines().filter(|l| l.contains("->")).count();
        let nodes = dot.lines().filter(|l| l.trim_start().starts_with('n') && !l.contains("->") && !l.contains("node [")).count();
        (nodes, edges)
    }

    #[test]
    fn single_leaf() {
        let t = CategoricalTable::new(binary_schema(1), vec![vec![0], vec![1]], vec![1, 1]).unwrap();
        let dot = export_dot(&train_c50(&t, &TreeParams::default()).unwrap());
        assert_eq!(count(&dot), (1, 0));
        assert!(dot.starts_with("digraph"));
    }

    #[test]
    fn xor_tree_shape_and_determinism() {
        let tree = train_c50(&xor_table(), &TreeParams { min_records_per_branch: 1, ..TreeParams::default() }).unwrap();
        let dot = export_dot(&tree);
        assert_eq!(count(&dot), (7, 6));
        assert_eq!(dot, export_dot(&tree));
        assert!(dot.contains("n0 -> n1"));
    }
}
