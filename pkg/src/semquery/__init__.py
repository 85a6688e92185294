"""Semantic query engine over unstructured data.

Filters vague natural-language queries, plans and executes a
dependency-correct chain of annotation functions to build a structured
table, then generates and runs SQL over it, with per-stage cost accounting.
"""

from .api import Runner, leap
from .config import Config, load_config
from .filtering import Clear, NumericUnderspecified, Vague, filter_query
from .gateway import CostLedger, Gateway
from .providers import MockProvider, RemoteProvider
from .registry import FunctionRegistry
from .session import SessionAborted
from .table import Table, load_data

__version__ = "0.1.0"

__all__ = [
    "Clear",
    "Config",
    "CostLedger",
    "FunctionRegistry",
    "Gateway",
    "MockProvider",
    "NumericUnderspecified",
    "RemoteProvider",
    "Runner",
    "SessionAborted",
    "Table",
    "Vague",
    "filter_query",
    "leap",
    "load_config",
    "load_data",
    "__version__",
]
