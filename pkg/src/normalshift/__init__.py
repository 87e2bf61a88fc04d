"""Force fields and hypersurface shifts for Newtonian dynamical systems
admitting the normal shift on Riemannian manifolds.

Submodules, in dependency order: ``errors``, ``tensor_core``,
``extended_fields``, ``force_builder``, ``normality_verifier``,
``shift_engine``, ``expressions``, ``cli``.  Import what you need from
the submodule that owns it; nothing is re-exported here.
"""

__version__ = "0.1.0"
