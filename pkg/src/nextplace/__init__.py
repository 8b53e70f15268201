"""Next-place prediction pipeline: data preparation, graph embeddings,
spatio-temporal priors, a recurrent preference model, baselines and
ranking-metric evaluation."""

__version__ = "0.1.0"
