import numpy as np
import pytest

from matkit.engine import Rng
from matkit.materials import MaterialMaps, normalize_normals


def random_material(seed: int, res: int = 16) -> MaterialMaps:
    st = Rng(seed).stream("mat")
    normal = normalize_normals(np.stack(
        [st.uniform((res, res)) * 0.6 - 0.3,
         st.uniform((res, res)) * 0.6 - 0.3,
         np.ones((res, res))], axis=-1))
    return MaterialMaps(
        albedo=(st.uniform((res, res, 3)) * 0.9 + 0.05).astype(np.float32),
        normal=normal.astype(np.float32),
        roughness=(st.uniform((res, res, 1)) * 0.85 + 0.08).astype(np.float32),
        metallic=(st.uniform((res, res, 1)) * 0.9).astype(np.float32),
    )


@pytest.fixture
def material16():
    return random_material(3, 16)


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """Small real dataset shared by non-acceptance integration tests."""
    from matkit.dataset import build_dataset

    out = tmp_path_factory.mktemp("tinyds")
    return build_dataset(n_per_class=3, res=32, seed=91, out=out)
