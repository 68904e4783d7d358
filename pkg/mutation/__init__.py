"""
Benign mutations and candidate-set generation
"""

from .transforms import MUTATION_KINDS, MutationSpec, MutationSpecError, mutate, sample_spec
from .candidates import CandidatePair, CandidateSet, generate_candidates

__all__ = [
    'MUTATION_KINDS', 'MutationSpec', 'MutationSpecError', 'mutate', 'sample_spec',
    'CandidatePair', 'CandidateSet', 'generate_candidates',
]
