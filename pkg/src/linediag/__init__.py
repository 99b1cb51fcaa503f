"""Multi-agent causal diagnostics for manufacturing line data."""

from .catalog import ProcessGraph, Tolerance, VariableCatalog, VariableInfo, load_catalog
from .graphs import CausalGraph, Edge
from .reports import AnomalyReport, RcaReport, Recommendation
from .rules import EdgeQuery, Rule, RuleSet, default_ruleset, forbidden_edges, is_admissible, load_rules, stage_order
from .state import StepSpec, WorkflowState, validate_state
from .table import DataTable

__version__ = "0.1.0"

__all__ = [
    "AnomalyReport",
    "CausalGraph",
    "DataTable",
    "Edge",
    "EdgeQuery",
    "ProcessGraph",
    "RcaReport",
    "Recommendation",
    "Rule",
    "RuleSet",
    "StepSpec",
    "Tolerance",
    "VariableCatalog",
    "VariableInfo",
    "WorkflowState",
    "default_ruleset",
    "forbidden_edges",
    "is_admissible",
    "load_catalog",
    "load_rules",
    "stage_order",
    "validate_state",
    "__version__",
]
