"""Desk-scale compiler from public-coin quantum interactive proofs to classical arguments.

Modules: :mod:`~qiparg.sim` (real statevector simulation), :mod:`~qiparg.pauli`
(Y-free Pauli algebra), :mod:`~qiparg.clock` (circuit-to-Hamiltonian
compilation), :mod:`~qiparg.mf` (X/Z energy verification), :mod:`~qiparg.flatten`
(QIP flattening and amplification), :mod:`~qiparg.commit` (state commitments),
:mod:`~qiparg.protocol` (the argument) and :mod:`~qiparg.cli`.
"""

__version__ = "0.1.0"
