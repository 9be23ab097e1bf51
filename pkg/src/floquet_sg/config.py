import dagster as dg
from pydantic import BaseModel, ConfigDict, Field, field_validator

RTOL_ENV_VAR = 'FLOQUET_SG_RTOL'


class Tolerances(BaseModel):
    """Numerical tolerances shared by every analysis.

    ``ode_rtol`` drives the monodromy integrator, ``root_tol`` the band-edge
    bisection, ``gp_tol`` and ``bracket_tol`` the certificate bisection.
    """

    model_config = ConfigDict(frozen=True)

    ode_rtol: float = Field(default=1e-10, ge=1e-13, le=1e-6)
    root_tol: float = Field(default=1e-12, gt=0)
    gp_tol: float = Field(default=1e-10, gt=0)
    bracket_tol: float = Field(default=1e-14, gt=0)
    doubling_cap: float = Field(default=2.0**15, gt=1)
    workers: int = Field(default=1, ge=1)

    @classmethod
    def from_env(cls, **overrides: float | int | None) -> 'Tolerances':
        """Build tolerances from ``FLOQUET_SG_RTOL`` with explicit overrides on top.

        Parameters
        ----------
        **overrides
            Field values; ``None`` entries are ignored so unset CLI flags fall
            through to the environment and then to the defaults

        Returns
        -------
        Tolerances
            Validated tolerances
        """
        values: dict[str, float | int] = {}
        env_rtol = dg.EnvVar(RTOL_ENV_VAR).get_value()
        if env_rtol:
            values['ode_rtol'] = float(env_rtol)
        values |= {name: value for name, value in overrides.items() if value is not None}
        return cls(**values)


class RunConfig(BaseModel):
    """Everything one CLI invocation needs, echoed into each JSON document."""

    model_config = ConfigDict(frozen=True)

    command: str
    c: float
    E: float
    ode_rtol: float = 1e-10
    root_tol: float = 1e-12
    box: tuple[float, float, float, float] = (-1.0, 1.0, -1.5, 1.5)
    nx: int = Field(default=200, ge=16)
    ny: int = Field(default=200, ge=16)
    mu_min: float | None = None
    mu_max: float | None = None
    n: int = Field(default=400, ge=2)
    beta_max: float = Field(default=3.0, gt=0)
    output_path: str = '.'
    format: str = 'json'
    workers: int = Field(default=1, ge=1)

    @field_validator('ode_rtol', 'root_tol')
    @classmethod
    def _positive(cls, value: float) -> float:
        if not value > 0:
            raise ValueError('tolerances must be positive')
        return value

    @field_validator('format')
    @classmethod
    def _known_format(cls, value: str) -> str:
        if value not in ('json', 'csv', 'svg'):
            raise ValueError(f'unknown output format {value!r}')
        return value

    def tolerances(self) -> Tolerances:
        return Tolerances(ode_rtol=self.ode_rtol, root_tol=self.root_tol, workers=self.workers)

    def echo(self) -> dict[str, object]:
        """Plain-data copy of the configuration for embedding in outputs."""
        return self.model_dump(mode='json')
