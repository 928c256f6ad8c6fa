"""naforest/naforest/__version__.py.

Current version.
"""
__version__ = "0.1.0"
