import numpy as np
import pytest

from floquet_sg.config import Tolerances
from floquet_sg.wave import WaveProfile, wave_profile

# (c, E) of one wave per class, plus a standing wave
WAVES = {
    'superluminal_rotational': (2.0, 3.0),
    'superluminal_librational': (np.sqrt(3.0), 1.0),
    'subluminal_rotational': (0.5, -1.0),
    'subluminal_librational': (0.5, 1.0),
    'standing_librational': (0.0, 1.0),
}


@pytest.fixture(scope='session')
def tolerances() -> Tolerances:
    return Tolerances()


@pytest.fixture(scope='session')
def superluminal_rotational() -> WaveProfile:
    return wave_profile(*WAVES['superluminal_rotational'])


@pytest.fixture(scope='session')
def superluminal_librational() -> WaveProfile:
    return wave_profile(*WAVES['superluminal_librational'])


@pytest.fixture(scope='session')
def subluminal_rotational() -> WaveProfile:
    return wave_profile(*WAVES['subluminal_rotational'])


@pytest.fixture(scope='session')
def subluminal_librational() -> WaveProfile:
    return wave_profile(*WAVES['subluminal_librational'])


@pytest.fixture(scope='session')
def standing_librational() -> WaveProfile:
    return wave_profile(*WAVES['standing_librational'])


@pytest.fixture(scope='session', params=sorted(WAVES))
def any_wave(request: pytest.FixtureRequest) -> WaveProfile:
    return wave_profile(*WAVES[request.param])
