"""This is the naforest package.

Random forests whose leaf and tree aggregation weights are produced by small
trainable attention networks, trained end-to-end, with example-based
explanation of the predictions.
"""
from naforest.__version__ import __version__ as __version__
