import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairloop.catalog import (Catalog, budget_rule, build_catalog, default_richness, exposures_of,
                              read_provider_map, write_provider_map)


class TestBuildCatalog:
    def test_even_split(self):
        cat = build_catalog([0, 0, 1, 1], K=1, T=10, richness=1.5)
        np.testing.assert_allclose(cat.gamma, [7.5, 7.5])

    def test_single_provider(self):
        cat = build_catalog([0, 0, 0], K=1, T=1, richness=2.0)
        np.testing.assert_allclose(cat.gamma, [2.0])

    def test_uneven_split(self):
        cat = build_catalog([0, 0, 0, 0, 1, 1], K=2, T=5, richness=1.5)
        np.testing.assert_allclose(cat.gamma, [10.0, 5.0])

    def test_default_richness(self):
        cat = build_catalog([0, 1, 2, 3], K=2, T=8)
        assert default_richness(4) == 1.25
        np.testing.assert_allclose(cat.gamma.sum(), 2 * 8 * 1.25)

    def test_empty_provider_rejected(self):
        with pytest.raises(ValueError, match="without items"):
            build_catalog([0, 2], K=1, T=1)

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            build_catalog([0, 1], K=3, T=1)

    def test_direct_catalog_validation(self):
        with pytest.raises(ValueError):
            Catalog(np.array([0, 1]), np.array([1.0, 0.0]), 1, 1)
        with pytest.raises(ValueError):
            Catalog(np.array([0, 1]), np.array([1.0, 1.0]), 1, 0)

    def test_immutable(self):
        cat = build_catalog([0, 1], K=1, T=1)
        with pytest.raises(ValueError):
            cat.gamma[0] = 5.0

    @given(st.lists(st.integers(1, 6), min_size=1, max_size=6), st.integers(1, 4), st.integers(1, 50))
    def test_budget_total(self, sizes, K, T):
        gamma = budget_rule(sizes, K, T, 1.0)
        np.testing.assert_allclose(gamma.sum(), K * T)


class TestExposures:
    cat = build_catalog([0, 0, 1, 1], K=2, T=1)

    def test_same_provider(self):
        np.testing.assert_array_equal(exposures_of([0, 1], self.cat), [2, 0])

    def test_empty(self):
        np.testing.assert_array_equal(exposures_of([], self.cat), [0, 0])

    def test_split(self):
        np.testing.assert_array_equal(exposures_of([0, 3], self.cat), [1, 1])

    def test_duplicates(self):
        with pytest.raises(ValueError):
            exposures_of([1, 1], self.cat)

    @given(st.permutations(range(6)))
    def test_sum_and_permutation(self, perm):
        cat = build_catalog([0, 1, 1, 2, 2, 2], K=3, T=1)
        chosen = list(perm[:3])
        e = exposures_of(chosen, cat)
        assert e.sum() == 3
        np.testing.assert_array_equal(e, exposures_of(chosen[::-1], cat))


class TestProviderMap:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "map.csv"
        path.write_text("item_id,provider_id\nsku9,acme\nsku2,zeta\nsku5,acme\n")
        provider_of, items, providers = read_provider_map(path)
        np.testing.assert_array_equal(provider_of, [0, 1, 0])
        assert items == ["sku9", "sku2", "sku5"]
        assert providers == ["acme", "zeta"]
        out = tmp_path / "out.csv"
        write_provider_map(out, provider_of, items, providers)
        assert read_provider_map(out)[1:] == (items, providers)

    def test_duplicate_item(self, tmp_path):
        path = tmp_path / "map.csv"
        path.write_text("item_id,provider_id\na,x\na,y\n")
        with pytest.raises(ValueError, match=":3:"):
            read_provider_map(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "map.csv"
        path.write_text("item,provider\na,x\n")
        with pytest.raises(ValueError, match="header"):
            read_provider_map(path)
