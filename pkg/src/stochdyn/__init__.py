"""Ensemble-average dynamics of closed quantum systems under stochastic Hamiltonians."""
