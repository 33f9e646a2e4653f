import pytest

from driftbandit.data.taxonomy_file import parse_taxonomy, write_taxonomy
from driftbandit.errors import MultipleRootsError, TaxonomyError
from driftbandit.modeling.hierarchy import Taxonomy


def test_parse_edges(tmp_path):
    path = tmp_path / "taxonomy.tsv"
    path.write_text("# parent\tchild\nroot\tA\nroot\tB\n\nA\ta1\nA\ta2\nB\tb1\n", encoding="utf-8")
    taxonomy = parse_taxonomy(path)
    assert taxonomy.root == "root"
    assert taxonomy.leaves == ("a1", "a2", "b1")


def test_malformed_line(tmp_path):
    path = tmp_path / "taxonomy.tsv"
    path.write_text("root\tA\nA a1\n", encoding="utf-8")
    with pytest.raises(TaxonomyError, match="line 2"):
        parse_taxonomy(path)


def test_forest_rejected(tmp_path):
    path = tmp_path / "taxonomy.tsv"
    path.write_text("r1\ta\nr2\tb\n", encoding="utf-8")
    with pytest.raises(MultipleRootsError):
        parse_taxonomy(path)


def test_write_then_parse(tmp_path):
    taxonomy = Taxonomy.balanced(3, 2)
    write_taxonomy(taxonomy, tmp_path / "balanced.tsv")
    parsed = parse_taxonomy(tmp_path / "balanced.tsv")
    assert parsed.paths() == taxonomy.paths()
