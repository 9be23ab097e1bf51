from collections.abc import Iterator
from contextlib import contextmanager

import dagster as dg
from typing_extensions import override

from ...config import Tolerances
from ...errors import FloquetError
from ...output import plain


class SolverResource(dg.ConfigurableResource[Tolerances]):
    """Dagster resource handing the numerical tolerances to every asset.

    Unset fields fall through to ``FLOQUET_SG_RTOL`` and then to the
    ``Tolerances`` defaults.
    """

    ode_rtol: float | None = None
    root_tol: float | None = None
    workers: int = 1

    @override
    def create_resource(self, context: dg.InitResourceContext) -> Tolerances:
        return Tolerances.from_env(ode_rtol=self.ode_rtol, root_tol=self.root_tol, workers=self.workers)


@contextmanager
def floquet_failure() -> Iterator[None]:
    """Re-raise a ``FloquetError`` as ``dg.Failure`` carrying its report as metadata."""
    try:
        yield
    except FloquetError as error:
        raise dg.Failure(
            description=error.message,
            metadata={
                'kind': type(error).__name__,
                'report': dg.MetadataValue.json(plain(error.to_dict())),  # pyright: ignore[reportArgumentType]
            }
        ) from error


@dg.definitions
def resources() -> dg.Definitions: # noqa: D103
    return dg.Definitions(
        resources={
            'solver': SolverResource(),
        }
    )
