"""Meta-learned surrogate initialization for expensive dynamic optimization.

Subpackages: ``mpb`` (Moving Peaks benchmark), ``surrogates`` (GPR and a
ReLU network with analytic gradients), ``metalearn`` (first-order and exact
meta-learning of surrogate parameters), ``optim`` (acquisition search and
CMA-ES/PSO/DE), ``engine`` (dynamic-optimization runs), ``analysis``
(metrics and statistical tests) and ``campaign``/``cli`` (experiment harness).
"""
__version__ = "0.1.0"
