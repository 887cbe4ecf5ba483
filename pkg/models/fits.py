from typing import Dict, Optional

from pydantic import BaseModel


class FitResult(BaseModel):
    """Outcome of one numeric fit.

    ``params`` names depend on the routine: ``mu``/``sigma2`` for the truncated
    and binned log-normals, ``q``/``c`` for power laws, ``A``/``beta`` for exponential decay,
    ``slope``/``intercept`` for plain regression.
    """

    kind: str
    params: Dict[str, float]
    goodness: float
    goodness_kind: str  # "r2" or "loglik"
    n_points: int
    converged: bool = True
    diagnostics: Dict[str, float] = {}
    flag: Optional[str] = None

    def __getitem__(self, name: str) -> float:
        return self.params[name]
