"""hyfet: noise-robust fine-grained entity typing in hyperbolic space.

The pipeline has two stages. Stage I encodes each entity mention with
character, context, and position LSTMs into a Euclidean vector. Stage II
lifts those vectors onto a constant-curvature manifold (hyperboloid or
Poincare ball), refines them over a cosine-similarity mention graph with
hyperbolic graph layers, and scores them against per-type embeddings with
margin losses that treat cleanly- and noisily-labelled mentions
differently.
"""

__version__ = "0.1.0"
