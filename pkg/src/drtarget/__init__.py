"""Counterfactual estimation of residential demand-response reductions.

Stages: :mod:`ingest` raw CSVs, :mod:`prep` features, :mod:`forecast`
counterfactual models, :mod:`effects` reduction estimates and tests,
:mod:`segment` load-shape variability, :mod:`synth` synthetic ground truth and
:mod:`report` aggregate tables.
"""

__version__ = "0.1.0"
