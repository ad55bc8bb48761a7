"""Mixed singular Wishart distributions and deep Wishart process regression.

The package has three layers: exact samplers and log-densities for the
factor-parameterised Wishart families (:mod:`dwpkit.distributions`,
backed by :mod:`dwpkit.linalg` and verified through
:mod:`dwpkit.jacobians`), a variational-inference engine for the deep
Wishart process (:mod:`dwpkit.vi`, with a scikit-learn style wrapper in
:mod:`dwpkit.estimator`), and a command-line front end
(:mod:`dwpkit.cli`) exposing sampling, density queries, the verification
suites, and toy training runs.
"""

from .estimator import DeepWishartProcessRegressor

__all__ = ["DeepWishartProcessRegressor"]
__version__ = "0.1.0"
