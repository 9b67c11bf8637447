import numpy as np
import pytest

from mompnet.channel_model import SPEED_OF_LIGHT, nominal_subcarriers, nominal_ula
from mompnet.dictionaries import DictionarySet, GridSpec, build_dictionary_set

LAM = SPEED_OF_LIGHT / 28e9


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_dicts(rng, dims=(4, 3, 5), grid=(6, 5, 8)) -> DictionarySet:
    """Unstructured complex dictionaries (no physics, so ties are unlikely)."""
    d = [crandn(rng, n, a) for n, a in zip(dims, grid)]
    return DictionarySet(d[0], d[1], d[2], np.zeros(grid[0]), np.zeros(grid[1]), np.zeros(grid[2]))


def physical_dicts(dims=(8, 4, 16), grid=(16, 8, 32), spacing=1.44e6) -> DictionarySet:
    bs, ms = nominal_ula(dims[0], LAM), nominal_ula(dims[1], LAM)
    sub = nominal_subcarriers(dims[2], spacing, 28e9)
    return build_dictionary_set(bs, ms, sub, GridSpec(*grid), 0, 0)


def flat_matrix(d: DictionarySet) -> np.ndarray:
    """Explicit Kronecker dictionary with columns ordered (i_b, i_m, i_s) row-major."""
    return np.kron(np.kron(d.d_b, d.d_m), d.d_s)


@pytest.fixture(scope="session")
def mod_comparison():
    """Default-config OMPnet/MOD sweep, computed once per session."""
    from mompnet.experiments import ExperimentConfig, compare_mod

    return compare_mod(ExperimentConfig())
