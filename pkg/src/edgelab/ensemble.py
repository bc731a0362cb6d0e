"""Container for Monte Carlo ensembles and the two-sample KS distance."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ks_2samp

from .errors import EmptySample


def _jsonable(v):
    if hasattr(v, "to_json"):
        return json.loads(v.to_json())
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


@dataclass
class EnsembleResult:
    """N draws of a scalar statistic.  ``R_final`` and ``residual`` are
    filled for limit-law ensembles."""

    label: str
    params: dict
    seed: int
    values: np.ndarray
    flags: list = field(default_factory=list)
    R_final: np.ndarray | None = None
    residual: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not self.flags:
            self.flags = ["ok"] * len(self.values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def unconverged_fraction(self) -> float:
        if len(self.values) == 0:
            return 0.0
        return sum(f == "unconverged" for f in self.flags) / len(self.values)

    def summary(self) -> dict:
        v = self.values
        q = np.percentile(v, [5, 25, 50, 75, 95]) if len(v) else [np.nan] * 5
        return {"N": int(len(v)), "mean": float(np.mean(v)) if len(v) else None,
                "std": float(np.std(v, ddof=1)) if len(v) > 1 else None,
                "quantiles": {k: float(x) for k, x in zip(["5", "25", "50", "75", "95"], q)},
                "unconverged_fraction": self.unconverged_fraction}

    def to_json(self) -> str:
        obj = {"label": self.label, "seed": self.seed, "values": self.values.tolist(),
               "flags": list(self.flags), "params": _jsonable(self.params)}
        if self.R_final is not None:
            obj["R_final"] = np.asarray(self.R_final).tolist()
            obj["cauchy_residual"] = np.asarray(self.residual).tolist()
        return json.dumps(obj, sort_keys=True)

    def to_csv(self, path) -> int:
        if self.R_final is not None:
            rows = ["draw_index,value,R_final,cauchy_residual,converged"]
            rows += [f"{i},{v:.17g},{r:.17g},{e:.17g},{int(f != 'unconverged')}"
                     for i, (v, r, e, f) in enumerate(zip(self.values, self.R_final,
                                                          self.residual, self.flags))]
        else:
            rows = ["draw_index,value,flag"]
            rows += [f"{i},{v:.17g},{f}" for i, (v, f) in enumerate(zip(self.values, self.flags))]
        data = ("\n".join(rows) + "\n").encode()
        with open(path, "wb") as fh:
            fh.write(data)
        return len(data)


def ks_two_sample(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise EmptySample("KS distance needs two nonempty samples")
    return float(ks_2samp(a, b).statistic)
