"""Backdoor poisoning of skeleton-based human motion predictors.

The modules split along the experiment: :mod:`badhmp.motion` (skeletons and
the scaling transform), :mod:`badhmp.poisoning`, :mod:`badhmp.metrics`,
:mod:`badhmp.predictor`, :mod:`badhmp.data` and :mod:`badhmp.synth`, with the
command-line driver in :mod:`badhmp.cli`.
"""

__version__ = "0.1.0"
