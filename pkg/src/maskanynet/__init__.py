"""Dual-branch image classification that re-learns masked regions.

Masking strategies and mask application live in :mod:`maskanynet.masking`;
stitching masked content into a compact reuse image in
:mod:`maskanynet.reuse`; entropy/similarity strategy analysis in
:mod:`maskanynet.metrics`; the dual-branch model and backbones in
:mod:`maskanynet.model` / :mod:`maskanynet.backbones`; class-activation
heatmaps in :mod:`maskanynet.explain`; the experiment engine in
:mod:`maskanynet.harness`; and the command line in :mod:`maskanynet.cli`.
"""

__version__ = "0.1.0"

from maskanynet.backend import HAVE_COMPILED, backend_name

__all__ = ["HAVE_COMPILED", "backend_name", "__version__"]
