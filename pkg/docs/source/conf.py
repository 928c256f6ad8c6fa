"""Sphinx configuration of the naforest documentation."""
from pydantic import BaseModel
from sphinx.ext.napoleon import _skip_member

from naforest.__version__ import __version__

project = "naforest"
copyright = "2026, naforest developers"  # noqa: A001
author = "naforest developers"
release = __version__

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.napoleon",
    "sphinx-jsonschema",
]
autosummary_generate = True
templates_path = ["_templates"]
# heavy numerical packages are not needed to render the docstrings
autodoc_mock_imports = ["torch", "tensorboard"]
exclude_patterns = []

html_theme = "sphinx_rtd_theme"

#: members every pydantic model inherits
PYDANTIC_MEMBERS = frozenset(BaseModel.__dict__)


def skip(app, what, name, obj, would_skip, options):
    """Hide inherited pydantic members and the validators of the models.

    Registering ``autodoc-skip-member`` replaces the napoleon handler, so it
    is called first.

    Returns:
        bool: True if the member is left out of the documentation.
    """
    if _skip_member(app, what, name, obj, would_skip, options):
        return True
    return name in PYDANTIC_MEMBERS or name.startswith(
        ("check_", "validate_", "accept_", "convert_", "default_")
    )


def setup(app):
    """Register the skip handler."""
    app.connect("autodoc-skip-member", skip)
