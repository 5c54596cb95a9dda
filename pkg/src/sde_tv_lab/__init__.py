"""Total-variation and Wasserstein distances between SDE laws and their
one-step Euler-Maruyama proxies."""

__version__ = "0.1.0"
