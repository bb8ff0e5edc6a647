"""Discrete-modulated CV-QKD: bench simulation, finite-size security, post-processing.

Subsystems
----------
constellation   QPSK state preparation, shot-noise-unit conventions, Stokes algebra
pulse, dsp      temporal-mode synthesis and receiver-side digital processing
records         symbol-record binary format and run sidecars
channel         optical channel and heterodyne detection simulation
estimators      displaced-moment estimation from heterodyne data
security_tests  energy test and parameter-acceptance test
fock, regions   truncated Fock-space operators and key-map region POVMs
sdp             conditional-entropy lower bound (Frank-Wolfe + certified dual)
accounting      finite-size corrections, epsilon budget, key-length arithmetic
ldpc            low-rate LDPC codes for reverse reconciliation
hashing         GF(2) Toeplitz hashing, confirmation, transcript authentication
wire            length-prefixed peer-to-peer message framing
pipeline        two-party post-processing session
config, cli     run configuration and command-line orchestration
"""

__version__ = "0.1.0"
