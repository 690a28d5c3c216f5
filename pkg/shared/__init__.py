"""Shared simulation library: grid, mobility, network, location service, analytic model, experiments."""
