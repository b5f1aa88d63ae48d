"""Qualitative spatio-temporal narratives from timestamped polygon observations.
"""

from .calculus import RCC8, SIZE, Calculus
from .qcn import ConstraintNetwork, Variable, algebraic_closure
from .integrate import resolve
from .events import EventOccurrence, Narrative
from .abduce import explain
from .rules import match_rules
from .pipeline import PipelineConfig, run_pipeline

__all__ = [
    'RCC8', 'SIZE', 'Calculus', 'ConstraintNetwork', 'Variable', 'algebraic_closure',
    'resolve', 'EventOccurrence', 'Narrative', 'explain', 'match_rules',
    'PipelineConfig', 'run_pipeline',
]
__version__ = '1.0.0'
