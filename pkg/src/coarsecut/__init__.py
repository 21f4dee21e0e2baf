"""Random low-diameter decompositions, multi-scale L1 embeddings of graphs and
expansion certificates for proximity graphs."""

__version__ = "0.1.0"
