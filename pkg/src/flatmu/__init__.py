"""Flat modal fixpoint logics with converse: formula machinery, Kripke
semantics, atom networks, and a budgeted model construction."""

__version__ = '0.1.0'
