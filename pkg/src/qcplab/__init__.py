"""qcplab: exact simulation lab for quantum copy-protection and copy-detection.

Everything runs at desk scale with dense linear algebra: subspace states
over GF(2)^n, instrumented reversible oracles with query-weight
transcripts, projective/threshold implementations of goodness POVMs, the
copy-protection and copy-detection schemes, their security-game harnesses,
and a quantum-money construction on top.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    DimensionError,
    ProtocolViolationError,
    QcpError,
    ResourceLimitError,
)
from .f2 import F2Subspace, F2Vector, rand_subspace  # noqa: F401
from .qsim import QuantumState, RegisterLayout, prepare_subspace_state  # noqa: F401
