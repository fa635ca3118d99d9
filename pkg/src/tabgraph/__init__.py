"""Semi-supervised classification of wide tabular data with latent cosine-similarity graphs and a two-layer GCN."""

__version__ = "0.1.0"
