from pathlib import Path
from typing import Union

from driftbandit.errors import TaxonomyError
from driftbandit.modeling.hierarchy import Taxonomy


def parse_taxonomy(path: Union[str, Path]) -> Taxonomy:
    """Read ``parent<TAB>child`` edges; the root is the only node never listed as a child."""
    edges = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            columns = line.rstrip("\n").split("\t")
            if len(columns) != 2 or not all(columns):
                raise TaxonomyError(f"line {line_no}: expected 'parent<TAB>child', got {line.strip()!r}")
            edges.append((columns[0], columns[1]))
    return Taxonomy.from_edges(edges)


def write_taxonomy(taxonomy: Taxonomy, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for parent in sorted(taxonomy.children):
            for child in taxonomy.children[parent]:
                f.write(f"{parent}\t{child}\n")
