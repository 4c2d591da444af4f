"""Bayesian networks with decision-tree CPTs.

Structured arc reversal, two-slice dynamic network evidence integration,
conditional-irrelevance sample scheduling, and seeded likelihood-weighting
simulation, with exhaustive-enumeration oracles for verification.
"""

__version__ = "0.1.0"

from .errors import TreebnError
from .trees import (ATOL, Context, CptTree, Distribution, Leaf, Node,
                    TabularCpt, Variable, distinct_entries, eval_tree, graft,
                    merge_trees, reduce_tree, table_to_tree, tree_to_table)
from .network import BayesNet, ReversalPartition, joint_probability, partition, validate
from .reversal import ReversalStats, reverse_arc_tabular, reverse_arc_tree, verify_csi
from .exact import OracleReport, compare_joints, joint_table

__all__ = [
    "ATOL", "BayesNet", "Context", "CptTree", "Distribution", "Leaf", "Node",
    "OracleReport", "ReversalPartition", "ReversalStats", "TabularCpt",
    "TreebnError", "Variable", "compare_joints", "distinct_entries",
    "eval_tree", "graft", "joint_probability", "joint_table", "merge_trees",
    "partition", "reduce_tree", "reverse_arc_tabular", "reverse_arc_tree",
    "table_to_tree", "tree_to_table", "validate", "verify_csi",
]
