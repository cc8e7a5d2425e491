"""Model-specific simulators, posteriors and contraction measurements."""
