"""Typology-conditioned low-rank adapters with Sinkhorn-divergence alignment.

The package is organized as a small numpy/scipy library:

- :mod:`hyperlora.typology` — dialect feature vectors, Manhattan distance,
  coverage, source-set selection.
- :mod:`hyperlora.transform` — probabilistic morphosyntactic rewriting and
  parallel pseudo-dialect corpora.
- :mod:`hyperlora.encoder` — a frozen toy transformer encoder with low-rank
  adapter injection points on the query/value projections.
- :mod:`hyperlora.hypernet` — the two hypernetworks mapping feature vectors
  to adapter factors.
- :mod:`hyperlora.ot` — entropic optimal transport: log-domain Sinkhorn,
  the debiased Sinkhorn divergence, and an exact small-instance solver.
- :mod:`hyperlora.tape` / :mod:`hyperlora.grad` — reverse-mode
  differentiation of the full loss with respect to hypernetwork weights.
- :mod:`hyperlora.trainer` — the alignment training loop.
- :mod:`hyperlora.evaluation` — zero-shot evaluation, the paired bootstrap,
  and source-selection sweeps.
- :mod:`hyperlora.cli` — the ``hyperlora`` command-line entry point.
"""

__version__ = "0.1.0"
