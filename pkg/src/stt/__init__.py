"""Factorized space-time attention classifier, verified end to end.

The package is layered bottom-up: ``tensor`` (autodiff core) -> ``embed``
(frame sampling, stems, token assembly) -> ``model`` (attention blocks) ->
``losses``/``metrics`` -> ``synthetic``/``train``/``checkpoint``/``cli``.
"""

from .tensor import PrecisionMode, Tensor

__all__ = ["PrecisionMode", "Tensor"]
__version__ = "0.1.0"
