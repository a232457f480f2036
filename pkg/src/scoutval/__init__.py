"""scoutval: market-value estimation and mispricing-based shortlisting."""

__version__ = "0.1.0"
