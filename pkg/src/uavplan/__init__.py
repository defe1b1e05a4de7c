"""UAV trajectory planning by Chebyshev pseudospectral collocation.

Modules: ``cheb`` (collocation grids), ``dynamics`` (quadrotor model),
``environment`` (scenarios and obstacles), ``lazy_theta`` (grid path search),
``guess`` (initial guesses), ``transcribe`` (NLP construction), ``solver``
(augmented-Lagrangian NLP solver), ``refine`` (error estimates and the
planning loop), ``metrics`` (evaluation tables) and ``cli``.
"""

__version__ = "0.1.0"
