"""Privacy-preserving shared energy-storage scheduling and settlement.

Modules:
  groups       group parameters, fixed-point encoding
  commitments  Pedersen commitments
  zkp          sigma-protocol proofs (interactive and Fiat-Shamir)
  mpc          authenticated secret sharing, openings, coin tossing
  simplex      exact rational LP solver
  scheduler    storage schedule optimization and cost sharing
  ledger       simulated confidential ledger
  protocol     multi-party protocol runner
  cli          command-line entry points
"""

__version__ = "0.1.0"
