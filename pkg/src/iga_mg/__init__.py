"""Isogeometric Poisson discretisations solved by geometric multigrid with
overlapping multiplicative Schwarz smoothers, plus local Fourier analysis."""

__version__ = "0.1.0"
