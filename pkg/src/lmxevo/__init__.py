"""Evolution of text genotypes with language-model crossover.

Parents are formatted into a few-shot prompt, a pluggable completion engine
generates text, and offspring are parsed from the output. The package
bundles GA and MAP-Elites loops, bitstring and symbolic-regression domains,
deterministic mock engines for testing, and analysis tools that compare the
operator's implicit parent model against explicit univariate marginals.
"""

from .core import Individual, Population, RngStream, RunConfig, RunLog

__all__ = ["Individual", "Population", "RngStream", "RunConfig", "RunLog"]

__version__ = "0.1.0"
