#
# Configuration file for the Sphinx documentation builder.
#

import os
import sys
from pathlib import Path

package_path = Path("../..").resolve()
sys.path.insert(0, str(package_path))
os.environ["PYTHONPATH"] = ":".join(
    (str(package_path), os.environ.get("PYTHONPATH", "")),
)
docs_path = Path("..").resolve()
sys.path.insert(1, str(docs_path))

import spikemap  # noqa: E402, isort:skip

# -- Project information -----------------------------------------------------

project = "spikemap"
author = "spikemap Developers"
copyright = f"2025, {author}"

version = ".".join(spikemap.__version__.split(".")[:3])
release = version


# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.autosectionlabel",
    "sphinx.ext.intersphinx",
    "sphinx.ext.mathjax",
    "sphinx.ext.viewcode",
    "sphinx.ext.napoleon",
    "sphinx_autodoc_typehints",
    "myst_nb",
    "sphinx_copybutton",
]

templates_path = ["_templates"]
source_suffix = [".rst", ".md"]
master_doc = "index"
language = "en"
pygments_style = "sphinx"


# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_book_theme"
html_static_path = []

# -- Options for HTMLHelp output ---------------------------------------------

htmlhelp_basename = "spikemapdoc"

# -- Extension configuration -------------------------------------------------

default_role = "autolink"

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable", None),
}

autodoc_member_order = "bysource"

# myst-nb configuration
nb_execution_mode = "off"
myst_heading_anchors = 4
myst_enable_extensions = [
    "html_admonition",
    "colon_fence",
]
html_theme_options = {
    "show_toc_level": 2,
    "home_page_in_toc": False,
    "path_to_docs": "docs",
    "show_navbar_depth": 1,
    "navigation_with_keys": False,
}

_ALERTS = {
    "IMPORTANT": "important",
    "NOTE": "note",
    "TIP": "tip",
    "WARNING": "caution",
}


def _change_alerts_to_admonitions(input_text: str) -> str:
    """Turn GitHub ``> [!NOTE]`` alerts into MyST admonitions."""
    edited_text = []
    current = None
    for line in input_text.split("\n"):
        stripped = line.strip()
        marker = next((m for m in _ALERTS if stripped.startswith(f"> [!{m}]")), None)
        if marker is not None:
            current = marker
            edited_text.append("```{" + _ALERTS[marker] + "}")
        elif current and stripped == ">":
            continue
        elif current and not stripped.startswith(">"):
            edited_text.extend(("```", line))
            current = None
        elif current:
            edited_text.append(line.lstrip("> ").rstrip())
        else:
            edited_text.append(line)
    return "\n".join(edited_text)


def process_readme_for_sphinx_docs(readme_path: Path, docs_path: Path) -> None:
    """Copy README.md into the Sphinx source directory with admonitions."""
    output_file = docs_path / "source" / "README.md"
    content = readme_path.read_text(encoding="utf-8")
    output_file.write_text(_change_alerts_to_admonitions(content), encoding="utf-8")


process_readme_for_sphinx_docs(package_path / "README.md", docs_path)

# Group into single streams to prevent multiple output boxes
nb_merge_streams = True
