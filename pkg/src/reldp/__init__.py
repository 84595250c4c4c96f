"""Entity-level differentially private relational learning.

Subpackages cover the pipeline end to end: edge-list graphs with degree
capping (:mod:`reldp.graph`), coupled positive/negative minibatch sampling
(:mod:`reldp.sampling`), frequency-aware gradient clipping
(:mod:`reldp.clipping`), Renyi-DP accounting with amplification bounds
(:mod:`reldp.accountant`), encoder models and the DP-SGD loop
(:mod:`reldp.models`, :mod:`reldp.training`), empirical sensitivity and
moment verification (:mod:`reldp.oracle`), synthetic benchmark graphs
(:mod:`reldp.synth`), and the command line (:mod:`reldp.cli`).
"""

__version__ = "0.1.0"
