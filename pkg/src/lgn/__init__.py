"""Differentiable logic gate networks with learnable connections.

Modules: ``gates`` (the 16 two-input operators and their relaxations),
``model`` (soft network, forward and backward), ``train`` (Adam and
temperature annealing), ``hard`` (discretization, bit-packed inference,
netlist optimization and export), ``datasets``, ``checkpoint``, ``config``
and ``cli``.
"""

__version__ = "0.1.0"
