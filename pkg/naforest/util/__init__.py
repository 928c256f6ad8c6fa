"""Utility modules of naforest.

Logging setup, deferred optional imports, type definitions and helpers which
can not be attributed to a single sub module.
"""
