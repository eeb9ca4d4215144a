"""Post-hoc analysis of LinBFT run reports (pandas/NumPy)."""
