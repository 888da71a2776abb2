"""State-constrained singular stochastic control toolkit."""
__version__ = "0.1.0"
