use statrs::function::beta::beta_reg;

use super::{DecisionTree, TreeNode};

/// Upper limit `p` of the one-sided binomial confidence interval for an error
/// rate: the `p` at which observing at most `errors` in `n` trials has
/// probability `cf`.
pub fn upper_error_bound(errors: u64, n: u64, cf: f64) -> f64 {
    if n == 0 || errors >= n {
        return 1.0;
    }
    if cf >= 1.0 {
        return errors as f64 / n as f64;
    }
    if cf <= 0.0 {
        return 1.0;
    }
    if errors == 0 {
        return 1.0 - cf.powf(1.0 / n as f64);
    }
    // P(X <= e | p) = 1 - I_p(e + 1, n - e), decreasing in p
    let (a, b) = ((errors + 1) as f64, (n - errors) as f64);
    let cdf = |p: f64| 1.0 - beta_reg(a, b, p);
    let (mut lo, mut hi) = (errors as f64 / n as f64, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) > cf {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Predicted number of errors at a node treated as a leaf: `n` times the
/// larger of the observed error rate and its upper confidence bound.
pub fn pessimistic_errors(node: &TreeNode, cf: f64) -> f64 {
    let n = node.counts.total();
    if n == 0 {
        return 0.0;
    }
    let e = node.counts.errors();
    n as f64 * (e as f64 / n as f64).max(upper_error_bound(e, n, cf))
}

/// Predicted-error margin a collapse must win by.
const PRUNE_EPS: f64 = 1e-9;

fn subtree_errors(node: &TreeNode, cf: f64) -> f64 {
    if node.is_leaf() {
        pessimistic_errors(node, cf)
    } else {
        node.children.iter().map(|c| subtree_errors(c, cf)).sum()
    }
}

/// Collapse internal nodes whose leaf replacement has fewer predicted errors
/// than what they replace. The local stage works bottom-up on nodes whose
/// children are all leaves; the global stage then walks top-down comparing
/// each remaining subtree as a whole against a single leaf. Severity `s`
/// maps to confidence factor `(100 - s) / 100`.
pub fn prune_c50(tree: &DecisionTree, severity: f64) -> DecisionTree {
    let cf = ((100.0 - severity) / 100.0).clamp(0.0, 1.0);
    let mut pruned = tree.clone();
    pruned.params.pruning_severity = severity;
    prune_local(&mut pruned.root, cf);
    prune_global(&mut pruned.root, cf);
    pruned
}

fn prune_local(node: &mut TreeNode, cf: f64) {
    if node.is_leaf() {
        return;
    }
    for c in &mut node.children {
        prune_local(c, cf);
    }
    if node.children.iter().all(TreeNode::is_leaf) {
        let children: f64 = node.children.iter().map(|c| pessimistic_errors(c, cf)).sum();
        if pessimistic_errors(node, cf) < children - PRUNE_EPS {
            node.collapse();
        }
    }
}

fn prune_global(node: &mut TreeNode, cf: f64) {
    if node.is_leaf() {
        return;
    }
    if pessimistic_errors(node, cf) < subtree_errors(node, cf) - PRUNE_EPS {
        node.collapse();
        return;
    }
    for c in &mut node.children {
        prune_global(c, cf);
    }
}
