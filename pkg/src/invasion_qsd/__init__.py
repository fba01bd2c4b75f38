"""Invasion and voter opinion dynamics on complete bipartite graphs.

Quasistationary distributions and survival rates by exact spectral
computation, the coalescing dual, and Monte-Carlo estimation, plus
numerical checks of the large-n limit of the QSD.
"""

__version__ = "0.1.0"
