"""Synthetic fixtures shared by the CLI bench matrix and the test suite."""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ParameterError
from .field import PRIMITIVES, UNIT_BOX, NoiseSpec, make_primitive_field, sample_grid
from .optimizer import ExtractionConfig

NOISE_SIGMA = 0.005
NOISY_R = 0.01
SUITES = {"synthetic-default": PRIMITIVES}


@dataclass
class Fixture:
    """A named field plus the grid and config used to extract it.

    ``field`` is what the optimizer queries: the analytic distance for clean
    fixtures, the noisy sampled grid for noisy ones. ``reference`` is always
    the noise-free analytic field, used for ground-truth samples.
    """

    name: str
    reference: object
    config: ExtractionConfig
    noise: NoiseSpec = None
    params: dict = dc_field(default_factory=dict)
    _grid: object = dc_field(default=None, repr=False)

    @property
    def grid(self):
        if self._grid is None:
            self._grid = sample_grid(self.reference, self.config.k, np.array(self.config.bbox),
                                     noise=self.noise, threads=self.config.threads)
        return self._grid

    @property
    def field(self):
        return self.grid if self.noise is not None else self.reference

    def ground_truth(self, n=10_000, seed=1):
        return self.reference.sample_surface(n, seed=seed)


def make_fixture(name, k=128, noisy=False, seed=0, config=None, **params):
    """Build fixture ``name`` at resolution ``k``.

    Clean fixtures use r = 0.005; noisy ones add Gaussian noise of sigma 0.005
    to the grid and use r = 0.01. ``config`` overrides the defaults (its ``k``
    and, for noisy fixtures, ``r`` are replaced).
    """
    if name not in PRIMITIVES:
        raise ParameterError(f"unknown fixture {name!r}; expected one of {', '.join(PRIMITIVES)}")
    ref = make_primitive_field(name, **params)
    base = config if config is not None else ExtractionConfig()
    cfg = base.replace(k=k, seed=seed)
    noise = None
    if noisy:
        cfg = cfg.replace(r=NOISY_R)
        noise = NoiseSpec(NOISE_SIGMA, seed)
    return Fixture(name, ref, cfg, noise, dict(params))


def suite(name="synthetic-default", k=128, noisy=False):
    if name not in SUITES:
        raise ParameterError(f"unknown suite {name!r}; expected one of {', '.join(SUITES)}")
    return [make_fixture(n, k=k, noisy=noisy) for n in SUITES[name]]


def bench_configs(config=None):
    """The three ablation configurations: full, components off, DCUDF mode."""
    full = config if config is not None else ExtractionConfig()
    return {"full": full, "components_off": full.components_off(), "dcudf": full.dcudf_mode()}


def signed_sphere_reference(k=128, radius=0.3, bbox=UNIT_BOX):
    """Marching cubes of the signed sphere distance at level 0.

    This is what plain iso-surfacing achieves when the sign is known, and is
    the accuracy yardstick for the unsigned extraction.
    """
    from .field import GridField
    from .isoextract import marching_cubes

    bbox = np.asarray(bbox, dtype=np.float64)
    axes = [np.linspace(bbox[0, a], bbox[1, a], k) for a in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    sd = np.sqrt(X * X + Y * Y + Z * Z) - radius
    # shift so the zero crossing becomes a positive iso-value
    shift = 1.0
    return marching_cubes(GridField(sd + shift, bbox), shift, orient=False)
