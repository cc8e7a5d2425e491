"""Monte Carlo laboratory for posterior contraction rates."""

__version__ = "0.1.0"
