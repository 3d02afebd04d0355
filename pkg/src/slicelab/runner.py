"""Experiment orchestration: config validation, audit suites, tables and report files.

Every audit produces ``Row`` records with a verdict:

* ``PASS`` / ``FAIL`` for asserted inequalities (additive slack of
  ``SLACK_SE`` combined standard errors) and for ``≃`` relations (ratio in
  ``[1/EQUIV_BAND, EQUIV_BAND]`` unless a tighter band is stated),
* ``REPORT`` for quantities that are recorded but never asserted,
* ``SKIP`` when an oracle needed by the audit is unavailable.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import jsonschema
import numpy as np

from .bodies import OracleUnavailable, body_from_config, unit_volume_radius
from .centroid import ZqEvaluator, sphere_moment_constant, zq_radius, zq_width
from .constructions import (GAMMA_SMALL, InsufficientBudget, build_convolution_body, build_w_body, k1_checks,
                            kb_ratio_report, max_inequality_audit, normalize_k1, rotation_average,
                            section_volume, subset_inclusion_audit, truncation_diagnostics)
from .covering import covering_upper, regularity_profile, start_index
from .estimate import Estimate
from .functionals import (kstar, polar_volume_radius, qstar, radial_moment, slicing_from_samples,
                          slicing_parameter)
from .isotropy import isotropic_constant, isotropic_transform
from .sampling import derive_seed, sample_sphere, sample_uniform

SLACK_SE = 3.0
EQUIV_BAND = 4.0
VERDICTS = ("PASS", "FAIL", "REPORT", "SKIP")
SUITES = ("isotropy", "centroid", "slicing", "lemmas", "construction", "covering", "bq_gamma")
COLUMNS = ("suite", "body", "n", "q", "quantity", "value", "std_error", "bound", "verdict", "margin", "anchor",
           "note")

# audit identifiers carried by report rows, with what each one checks
ANCHORS = {
    "isotropy.closed_form": "L_K against its closed form",
    "isotropy.defect": "inertia-matrix defect after the isotropic map",
    "isotropy.ball_minimal": "L_K >= L of the Euclidean ball",
    "centroid.cube_moment": "h_{Z_q(cube)}(e_1) against (2^{-q}/(q+1))^{1/q}",
    "centroid.z2_identity": "Z_2(K) = L_K B_2^n for isotropic K",
    "centroid.moment_growth": "h_{Z_q} <= q h_{Z_1}",
    "centroid.holder_monotone": "q -> h_{Z_q} nondecreasing",
    "centroid.radius": "R(Z_q(K)) and R/(q L_K)",
    "centroid.inclusion": "max h_{Z_q}/h_{Z_1}",
    "centroid.width": "w_q(Z_q(K)) ≃ sqrt(q) L_K for q <= sqrt(n)",
    "centroid.width_moment": "I_q(K) ≃ sqrt(n/q) w_q(Z_q(K)) for q <= n/2",
    "centroid.kstar": "k_*(Z_2) = n",
    "centroid.qstar": "q_*(K) against the sqrt(n) floor",
    "centroid.negative_moments": "I_{-q}(K) ≃ I_q(K) for q <= q_*(K)",
    "slicing.sqrt_n": "I_1(K, Z_2°(K)) <= sqrt(n) L_K^2",
    "slicing.radius_upper": "I_1(K, Z_q°(K)) <= R(Z_q(K)) I_1(K)",
    "slicing.q_sqrt_n_upper": "I_1/(q sqrt(n) L_K^2) <= 1.01",
    "slicing.holder_floor": "I_1 >= c sqrt(n) L_K L_M",
    "slicing.radius_floor": "I_1 >= c R(Z_q(M)) L_K",
    "slicing.polar_floor": "I_1 >= c n/(n+1) |Z_q°(M)|^{-1/n}",
    "slicing.literal_floor": "I_1 >= c sqrt(qn) (reported)",
    "slicing.unconditional": "I_1/(sqrt(qn) L_K^2) in [0.1, 2 log n] for unconditional bodies",
    "slicing.value": "I_1(K, Z_q°(K))",
    "lemmas.maximal": "(E max_i |<x,z_i>|^q)^{1/q} <= 3e^3 max_i h_{Z_p}(z_i)",
    "lemmas.maximal_crossover": "maximal-inequality crossover ratio (reported)",
    "lemmas.subset_inclusion": "support comparison of K and a large subset",
    "lemmas.rotation_average": "(E_U I_1^q)^{1/q} <= c_{n,q} I_q(K)^2",
    "lemmas.rotation_fraction": "fraction of rotations with I_1 <= C_2 sqrt(qn) L_K^2",
    "construction.markov": "|K minus W| <= 1/C_1",
    "construction.k1_z2": "Z_2(K_1) between Z_2(K)/2 and 2 Z_2(K)",
    "construction.k1_inside": "K_1 within 2K",
    "construction.k1_moment": "n L^2/4 <= E|y|^2 on K_1 <= 4 n L^2",
    "construction.diagnostics": "t_0 / p_0 bookkeeping (reported)",
    "construction.conv_support": "h_C = h_K/L_K + r_n",
    "construction.conv_containment": "c_7 D_n within C within c_8 gamma D_n",
    "construction.conv_ratio": "I_1(K,Z_q°(K)) L_C^2 / (I_1(C,Z_q°(C)) L_K^2) <= 8",
    "construction.ball_body_kb1": "|K cap F^perp|^{1/k} ≃ L_B/L_K",
    "construction.ball_body_kb2": "h_{Z_p(bar B)} ≃ |K cap F^perp|^{1/k} h_{Z_p(K)}",
    "construction.section_length": "1-D section length against [2 L_K, 2 R(K)] (reported)",
    "covering.sandwich": "packing lower <= greedy upper",
    "covering.circumradius": "N = 1 for t >= R(K) + |c0| (c0 the start centre); literal t >= R(K) reported",
    "covering.cube_quarter": "cube n=2, t=1/4 cover in [4, 12]",
    "covering.kappa_fit": "fitted kappa (reported)",
    "bq_gamma.B": "catalog minimum of I_1/(sqrt(qn) L_K^2)",
    "bq_gamma.B2": "B(2) ≃ 1",
    "bq_gamma.Gamma": "catalog maximum of I_1/sqrt(qn) over small-diameter bodies",
    "bq_gamma.A_screen": "I_1 <= rho n L_K^2",
}

DEFAULT_BODIES = [{"shape": "cube"}, {"shape": "ball"}, {"shape": "cross"}, {"shape": "lp", "p": 4},
                  {"shape": "simplex"}]
DEFAULT_BUDGETS = {"samples": 100_000, "outer": 1024, "inner": 8192, "reps": 8, "directions": 1000,
                   "rotations": 32, "isotropy": 200_000, "covering_sample": 10_000}
DEFAULT_CONSTANTS = {"C1": math.e ** 2, "beta2_bar": 1.0, "rho": 0.1, "c7": 0.5, "c8": 4.0, "audit_c": 0.2,
                     "kappa": 1.0, "tau": 1.0, "C2": 1.0}

_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "bodies": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["shape"],
            "properties": {"shape": {"enum": ["cube", "ball", "cross", "lp", "simplex", "hpoly"]},
                           "label": {"type": "string"}, "n": _POS_INT, "p": _POS},
        }},
        "n_grid": {"type": "array", "minItems": 1, "items": _POS_INT},
        "q_grid": {"type": "array", "minItems": 1,
                   "items": {"anyOf": [_POS_INT, {"enum": ["sqrt_n", "n"]}]}},
        "budgets": {"type": "object", "additionalProperties": False,
                    "properties": {k: _POS_INT for k in DEFAULT_BUDGETS}},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "suite": {"type": "array", "minItems": 1, "items": {"enum": list(SUITES)}},
        "constants": {"type": "object", "additionalProperties": False,
                      "properties": {k: _POS for k in DEFAULT_CONSTANTS}},
        "output": {"type": "object", "additionalProperties": False,
                   "properties": {"path": {"type": "string"},
                                  "formats": {"type": "array", "items": {"enum": ["csv", "json", "plot"]}}}},
        "threads": _POS_INT,
    },
}

_NUM_OR_NULL = {"type": ["number", "null"]}
REPORT_SCHEMA = {
    "type": "object",
    "required": ["rows", "summary", "environment"],
    "properties": {
        "rows": {"type": "array", "items": {
            "type": "object", "required": list(COLUMNS),
            "properties": {"suite": {"enum": list(SUITES)}, "body": {"type": "string"},
                           "n": {"type": "integer"}, "q": _NUM_OR_NULL, "quantity": {"type": "string"},
                           "value": _NUM_OR_NULL, "std_error": _NUM_OR_NULL, "bound": _NUM_OR_NULL,
                           "verdict": {"enum": list(VERDICTS)}, "margin": _NUM_OR_NULL,
                           "anchor": {"enum": list(ANCHORS)}, "note": {"type": "string"}},
        }},
        "summary": {"type": "object", "required": list(VERDICTS),
                    "properties": {v: {"type": "integer", "minimum": 0} for v in VERDICTS}},
        "environment": {"type": "object", "required": ["seed", "budgets", "constants", "tolerance"]},
    },
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message carries the offending path."""


@dataclass
class ExperimentConfig:
    bodies: list = field(default_factory=lambda: [dict(b) for b in DEFAULT_BODIES])
    n_grid: list = field(default_factory=lambda: [2, 4, 8, 16])
    q_grid: list = field(default_factory=lambda: [1, 2, 4, 8, "sqrt_n", "n"])
    budgets: dict = field(default_factory=lambda: dict(DEFAULT_BUDGETS))
    seed: int = 0
    suite: list = field(default_factory=lambda: list(SUITES))
    constants: dict = field(default_factory=lambda: dict(DEFAULT_CONSTANTS))
    output: dict = field(default_factory=lambda: {"path": "out", "formats": ["csv", "json", "plot"]})
    threads: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config error at {path}: {exc.message}") from None
        cfg = cls()
        for key, value in data.items():
            if key in ("budgets", "constants"):
                getattr(cfg, key).update(value)
            else:
                setattr(cfg, key, value)
        return cfg

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def q_values(self, n: int) -> list:
        """The q grid at dimension n: tokens resolved, rounded, deduplicated, capped by n."""
        out = set()
        for q in self.q_grid:
            v = {"sqrt_n": round(math.sqrt(n)), "n": n}.get(q, q)
            if 1 <= v <= n:
                out.add(int(v))
        return sorted(out)


@dataclass
class Row:
    suite: str
    body: str
    n: int
    q: Optional[float]
    quantity: str
    value: Optional[float]
    std_error: Optional[float]
    bound: Optional[float]
    verdict: str
    anchor: str
    margin: Optional[float] = None
    note: str = ""

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"bad verdict {self.verdict}")
        if self.anchor not in ANCHORS:
            raise ValueError(f"unknown anchor {self.anchor}")
        for k in ("value", "std_error", "bound", "margin", "q"):
            v = getattr(self, k)
            if v is not None:
                v = float(v)
                setattr(self, k, v if math.isfinite(v) else None)

    def to_dict(self) -> dict:
        return {c: getattr(self, c) for c in COLUMNS}


@dataclass
class ExperimentReport:
    rows: list
    environment: dict

    @property
    def summary(self) -> dict:
        out = {v: 0 for v in VERDICTS}
        for r in self.rows:
            out[r.verdict] += 1
        return out

    @property
    def failed(self) -> bool:
        return self.summary["FAIL"] > 0

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows], "summary": self.summary, "environment": self.environment}

    def select(self, **kw):
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in kw.items())]


# ----------------------------------------------------------------------
# verdict helpers


def _se(x) -> float:
    return float(x.std_error) if isinstance(x, Estimate) else 0.0


def _val(x) -> float:
    return float(x.value) if isinstance(x, Estimate) else float(x)


def leq(lhs, rhs):
    """Verdict and margin of ``lhs <= rhs`` with additive slack."""
    margin = _val(rhs) + SLACK_SE * math.hypot(_se(lhs), _se(rhs)) - _val(lhs)
    return ("PASS" if margin >= 0 else "FAIL"), margin


def geq(lhs, rhs):
    margin = _val(lhs) + SLACK_SE * math.hypot(_se(lhs), _se(rhs)) - _val(rhs)
    return ("PASS" if margin >= 0 else "FAIL"), margin


def in_band(value, lo, hi, se=0.0):
    slack = SLACK_SE * se
    margin = min(value - lo, hi - value) + slack
    return ("PASS" if margin >= 0 else "FAIL"), margin


def equiv(value, se=0.0, band=EQUIV_BAND):
    return in_band(value, 1.0 / band, band, se)


def rel_close(value, target, rtol):
    margin = rtol * abs(target) - abs(value - target)
    return ("PASS" if margin >= 0 else "FAIL"), margin


# ----------------------------------------------------------------------
# cell context


@dataclass
class Cell:
    suite: str
    body_cfg: dict
    label: str
    n: int
    config: ExperimentConfig

    @property
    def seed(self) -> int:
        return derive_seed(self.config.seed, self.suite, self.label, self.n)

    def shared_seed(self, *labels) -> int:
        """Seed independent of the suite, for quantities several suites reuse."""
        return derive_seed(self.config.seed, "shared", self.label, self.n, *labels)

    def row(self, q, quantity, value, anchor, verdict="REPORT", margin=None, std_error=None, bound=None, note=""):
        if isinstance(value, Estimate):
            std_error = value.std_error if std_error is None else std_error
            value = value.value
        if isinstance(bound, Estimate):
            bound = bound.value
        return Row(self.suite, self.label, self.n, q, quantity, value, std_error, bound, verdict, anchor,
                   margin, note)


class _Memo:
    """Run-level cache for expensive shared quantities (bodies, L_K, W bodies).

    Values depend only on their key and the base seed, so whichever cell
    computes them first the result is the same.
    """

    def __init__(self):
        self._data = {}
        self._locks = {}
        self._guard = threading.Lock()

    def get(self, key, fn: Callable):
        with self._guard:
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            if key not in self._data:
                self._data[key] = fn()
            return self._data[key]


def _label(cfg: dict) -> str:
    if "label" in cfg:
        return cfg["label"]
    if cfg["shape"] == "lp":
        return f"lp{cfg['p']:g}"
    return cfg["shape"]


class Runner:
    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.memo = _Memo()

    # shared quantities ------------------------------------------------
    def body(self, cell: Cell):
        cfg = {k: v for k, v in cell.body_cfg.items() if k != "label"}
        cfg["n"] = cell.n
        return self.memo.get(("body", cell.label, cell.n), lambda: body_from_config(cfg))

    def L(self, cell: Cell) -> Estimate:
        def compute():
            K = self.body(cell)
            exact = K.isotropic_constant_exact()
            if exact is not None:
                return Estimate.exact(exact)
            return isotropic_constant(K, self.config.budgets["isotropy"], cell.shared_seed("L"))
        return self.memo.get(("L", cell.label, cell.n), compute)

    def points(self, cell: Cell):
        return self.memo.get(("points", cell.label, cell.n), lambda: sample_uniform(
            self.body(cell), self.config.budgets["samples"], cell.shared_seed("points")).points)

    def slicing(self, cell: Cell, q) -> Estimate:
        b = self.config.budgets
        return self.memo.get(("I1", cell.label, cell.n, q), lambda: slicing_parameter(
            self.body(cell), self.body(cell), q, b["outer"], b["inner"], b["reps"], cell.shared_seed("I1", q)))

    def w_body(self, cell: Cell, q):
        b = self.config.budgets
        return self.memo.get(("W", cell.label, cell.n, q), lambda: build_w_body(
            self.body(cell), q, self.config.constants["C1"], frozen_inner=b["inner"],
            fraction_budget=min(b["samples"], 20_000), seed=cell.shared_seed("W", q),
            slicing=self.slicing(cell, q)))

    # suites -----------------------------------------------------------
    def run_isotropy(self, cell: Cell):
        K = self.body(cell)
        budget = self.config.budgets["isotropy"]
        est = isotropic_constant(K, budget, cell.seed)
        exact = K.isotropic_constant_exact()
        rows = []
        if exact is not None:
            v, m = rel_close(est.value, exact, 0.01)
            rows.append(cell.row(None, "L_K", est, "isotropy.closed_form", v, m, bound=exact))
        else:
            rows.append(cell.row(None, "L_K", est, "isotropy.closed_form", note="no closed form"))
        _, _, rep = isotropic_transform(K, budget, derive_seed(cell.seed, "transform"))
        rows.append(cell.row(None, "defect", rep.defect, "isotropy.defect", *in_band(rep.defect, 1.0, 1.05),
                             bound=1.05))
        L_ball = unit_volume_radius(cell.n) / math.sqrt(cell.n + 2)
        v, m = geq(est, L_ball)
        rows.append(cell.row(None, "L_K - L_ball", est.value - L_ball, "isotropy.ball_minimal", v, m,
                             std_error=est.std_error, bound=0.0))
        return rows

    def run_centroid(self, cell: Cell):
        n, K = cell.n, self.body(cell)
        L = self.L(cell)
        pts = self.points(cell)
        dirs = sample_sphere(n, self.config.budgets["directions"], derive_seed(cell.seed, "dirs")).directions
        h1 = ZqEvaluator(pts, 1).support_many(dirs)
        rows = []
        prev = None
        qs = self.config.q_values(n)
        try:
            qs_est = qstar(K, None, seed=derive_seed(cell.seed, "qstar"), points=pts,
                           direction_count=min(500, self.config.budgets["directions"]))
            q_star = qs_est.value
            rows.append(cell.row(None, "q_star", q_star, "centroid.qstar", bound=math.sqrt(n),
                                 note=f"q_* >= sqrt(n) floor {'met' if q_star >= math.sqrt(n) else 'not met'}"))
        except OracleUnavailable as exc:
            q_star = None
            rows.append(cell.row(None, "q_star", None, "centroid.qstar", "SKIP", note=str(exc)))
        for q in qs:
            ev = ZqEvaluator(pts, q)
            hq, sq = ev.support_many(dirs)
            if cell.body_cfg["shape"] == "cube":
                exact = (2.0 ** -q / (q + 1)) ** (1.0 / q)
                e1 = ev.support(np.eye(n)[0])
                rows.append(cell.row(q, "h_Zq(e1)", e1, "centroid.cube_moment", *rel_close(e1.value, exact, 0.01),
                                     bound=exact))
            if q == 2:
                dev = np.abs(hq / L.value - 1)
                v, m = in_band(float(dev.max()), 0.0, 0.02)
                rows.append(cell.row(q, "max|h_Z2/L_K - 1|", float(dev.max()), "centroid.z2_identity", v, m,
                                     bound=0.02))
            ratio = hq / (q * h1[0])
            rse = ratio * np.hypot(sq / hq, h1[1] / h1[0])
            i = int(np.argmax(ratio - 1 - SLACK_SE * rse))
            v, m = leq(Estimate(float(ratio[i]), float(rse[i]), len(pts)), 1.0)
            rows.append(cell.row(q, "max h_q/(q h_1)", float(ratio.max()), "centroid.moment_growth", v, m, bound=1.0))
            if prev is not None:
                hp, sp = prev
                slack = 2 * np.hypot(sq, sp)
                gap = float(np.min(hq - hp + slack))
                rows.append(cell.row(q, "min(h_q - h_p + 2SE)", gap, "centroid.holder_monotone",
                                     "PASS" if gap >= 0 else "FAIL", gap, bound=0.0))
            prev = (hq, sq)
            R, _ = zq_radius(K, q, min(2000, self.config.budgets["directions"]), seed=derive_seed(cell.seed, "R", q),
                             evaluator=ev)
            rows.append(cell.row(q, "R(Z_q)", R, "centroid.radius"))
            rows.append(cell.row(q, "R(Z_q)/(q L_K)", R.value / (q * L.value), "centroid.radius"))
            rows.append(cell.row(q, "max h_q/h_1", float((hq / h1[0]).max()), "centroid.inclusion"))
            if q <= math.sqrt(n) or q <= n / 2:
                w = zq_width(K, q, q, len(dirs), seed=derive_seed(cell.seed, "width", q), evaluator=ev)
                if q <= math.sqrt(n):
                    r = w.estimate.value / (math.sqrt(q) * L.value)
                    rows.append(cell.row(q, "w_q(Z_q)/(sqrt(q) L_K)", r, "centroid.width", *equiv(r),
                                         note=f"half-budget bias {w.inner_bias:.2e}"))
                if q <= n / 2:
                    iq = radial_moment(K, q, seed=cell.seed, points=pts)
                    r = iq.value / (math.sqrt(n / q) * w.estimate.value)
                    rows.append(cell.row(q, "I_q/(sqrt(n/q) w_q(Z_q))", r, "centroid.width_moment",
                                         *in_band(r, 0.5, 2.0)))
            if q == 2:
                ks = kstar(ev, n, min(2000, self.config.budgets["directions"]), derive_seed(cell.seed, "kstar"))
                rows.append(cell.row(q, "k_*(Z_2)", ks.value, "centroid.kstar", bound=n))
            if q_star is not None and q <= q_star and q < n:
                ip = radial_moment(K, q, seed=derive_seed(cell.seed, "Iq", q), method="radial")
                im = radial_moment(K, -q, seed=derive_seed(cell.seed, "I-q", q))
                r = ip.value / im.value
                se = r * math.hypot(ip.std_error / ip.value, im.std_error / im.value)
                rows.append(cell.row(q, "I_q/I_-q", Estimate(r, se, 1), "centroid.negative_moments",
                                     *in_band(r, 1.0, 4.0, se)))
        return rows

    def run_slicing(self, cell: Cell):
        n, K = cell.n, self.body(cell)
        L = self.L(cell)
        c = self.config.constants["audit_c"]
        pts = self.points(cell)
        i1k = radial_moment(K, 1, points=pts)
        rows = []
        ndirs = min(2000, self.config.budgets["directions"])
        for q in self.config.q_values(n):
            I1 = self.slicing(cell, q)
            ev = ZqEvaluator(pts, q)
            rows.append(cell.row(q, "I1", I1, "slicing.value"))
            L2 = L.value ** 2
            if q == 2:
                v, m = leq(I1, math.sqrt(n) * L2)
                rows.append(cell.row(q, "I1 - sqrt(n) L^2", I1.value - math.sqrt(n) * L2, "slicing.sqrt_n", v, m,
                                     std_error=I1.std_error, bound=0.0))
            R, _ = zq_radius(K, q, ndirs, seed=derive_seed(cell.seed, "R", q), evaluator=ev)
            ub = Estimate(R.value * i1k.value, math.hypot(R.std_error * i1k.value, R.value * i1k.std_error), 1)
            rows.append(cell.row(q, "I1 vs R(Z_q) I_1(K)", I1, "slicing.radius_upper", *leq(I1, ub), bound=ub))
            r = I1.value / (q * math.sqrt(n) * L2)
            rows.append(cell.row(q, "I1/(q sqrt(n) L^2)", Estimate(r, r * I1.relative_error(), 1),
                                 "slicing.q_sqrt_n_upper", *leq(Estimate(r, r * I1.relative_error(), 1), 1.01),
                                 bound=1.01))
            floor = c * math.sqrt(n) * L2
            rows.append(cell.row(q, "I1 vs holder floor", I1, "slicing.holder_floor", *geq(I1, floor), bound=floor))
            floor = c * R.value * L.value
            rows.append(cell.row(q, "I1 vs radius floor", I1, "slicing.radius_floor", *geq(I1, floor), bound=floor))
            pv = polar_volume_radius(ev, n, self.config.budgets["directions"] * 4, derive_seed(cell.seed, "polar", q))
            floor = c * n / (n + 1) * pv.value
            rows.append(cell.row(q, "I1 vs polar floor", I1, "slicing.polar_floor", *geq(I1, floor), bound=floor))
            floor = c * math.sqrt(q * n)
            rows.append(cell.row(q, "I1 vs sqrt(qn) floor", I1, "slicing.literal_floor", bound=floor,
                                 margin=I1.value - floor, note="reported, not asserted"))
            if K.unconditional and n >= 2:
                r = I1.value / (math.sqrt(q * n) * L2)
                se = r * I1.relative_error()
                rows.append(cell.row(q, "I1/(sqrt(qn) L^2)", Estimate(r, se, 1), "slicing.unconditional",
                                     *in_band(r, 0.1, 2 * math.log(n), se), bound=2 * math.log(n)))
                rows.append(cell.row(q, "I1/sqrt(qn)", I1.value / math.sqrt(q * n), "slicing.unconditional",
                                     note="literal ratio, reported"))
        return rows

    def run_lemmas(self, cell: Cell):
        n, K = cell.n, self.body(cell)
        k = self.config.constants
        b = self.config.budgets
        pts = self.points(cell)
        rows = []
        for q in self.config.q_values(n):
            mi = max_inequality_audit(K, q, points=pts, seed=cell.seed)
            v, m = leq(mi.lhs, mi.bound)
            rows.append(cell.row(q, "maximal inequality lhs", mi.lhs, "lemmas.maximal", v, m, bound=mi.bound,
                                 note=f"p={mi.p:.4g}"))
            rows.append(cell.row(q, "lhs/max h_Zq", mi.crossover_ratio, "lemmas.maximal_crossover",
                                 bound=math.log(n) / q if n > 1 else None))
            ra = rotation_average(K, q, b["rotations"], outer=b["outer"], inner=max(2, b["inner"] // 2), reps=2,
                                  seed=derive_seed(cell.seed, "rot", q), C2=k["C2"], L_K=self.L(cell).value,
                                  radial_budget=b["samples"])
            v, m = leq(ra.lhs, Estimate(ra.rhs, ra.rhs_se, 1))
            rows.append(cell.row(q, "(E_U I1^q)^(1/q)", ra.lhs, "lemmas.rotation_average", v, m, bound=ra.rhs,
                                 note=f"c_nq={ra.c_nq:.6g}"))
            rows.append(cell.row(q, "fraction I1 <= C2 sqrt(qn) L^2", ra.fraction_below, "lemmas.rotation_fraction"))
            if 2 <= q <= n:
                w = self.w_body(cell, q)
                for a in subset_inclusion_audit(K, w, q, k["beta2_bar"], min(b["samples"], 20_000),
                                                min(200, b["directions"]), derive_seed(cell.seed, "incl", q)):
                    quantity = f"{a.direction} p={a.p:g}"
                    if not a.applicable:
                        rows.append(cell.row(q, quantity, a.worst_ratio, "lemmas.subset_inclusion", "SKIP",
                                             note=f"|A|={a.fraction:.4f} below the size threshold"))
                    else:
                        rows.append(cell.row(q, quantity, a.worst_ratio, "lemmas.subset_inclusion",
                                             "PASS" if a.passes else "FAIL", 1.0 - a.worst_ratio, bound=1.0,
                                             note=f"|A|={a.fraction:.4f}"))
        return rows

    def run_construction(self, cell: Cell):
        n, K = cell.n, self.body(cell)
        L = self.L(cell)
        k = self.config.constants
        b = self.config.budgets
        rows = []
        for q in self.config.q_values(n):
            if q < 2:
                continue
            w = self.w_body(cell, q)
            f = w.measured_fraction
            v, m = leq(Estimate(1 - f.value, f.std_error, 1), 1.0 / w.C1)
            rows.append(cell.row(q, "1 - |W|", 1 - f.value, "construction.markov", v, m, std_error=f.std_error,
                                 bound=1.0 / w.C1))
            K1 = normalize_k1(w)
            flag = " (out of regime: |W| < 0.5)" if K1.provenance["out_of_regime"] else ""
            ch = k1_checks(K, K1, L.value, min(b["samples"], 20_000), min(500, b["directions"]),
                           derive_seed(cell.seed, "k1", q))
            rows.append(cell.row(q, "h_Z2(K1)/h_Z2(K) range", ch.z2_ratio_max, "construction.k1_z2",
                                 "PASS" if ch.z2_pass else "FAIL",
                                 min(ch.z2_ratio_min - 0.5, 2 - ch.z2_ratio_max) + ch.z2_tol,
                                 note=f"min {ch.z2_ratio_min:.4f}{flag}"))
            rows.append(cell.row(q, "fraction of K1/2 in K", ch.inside_2k_fraction, "construction.k1_inside",
                                 "PASS" if ch.inside_2k_pass else "FAIL", ch.inside_2k_fraction - 1.0, bound=1.0))
            lo, hi = ch.second_moment_bounds
            rows.append(cell.row(q, "E|y|^2 on K1", ch.second_moment, "construction.k1_moment",
                                 *in_band(ch.second_moment.value, lo, hi, ch.second_moment.std_error), bound=hi))
            d = truncation_diagnostics(n, q, self.slicing(cell, q).value, L.value, k["kappa"], k["C1"], 1.0, k["rho"])
            for key in ("t0_sq", "p0"):
                rows.append(cell.row(q, key, d[key], "construction.diagnostics"))
            rows.append(cell.row(q, "p0 >= q", float(d["p0_ge_q"]), "construction.diagnostics",
                                 note=f"q<=rho^2 n: {d['q_le_rho2n']}; I1<=rho n L^2: {d['I1_le_rho_n_L2']}"))
        rows += self._convolution_rows(cell, K, L)
        rows += self._ball_body_rows(cell, K, L)
        return rows

    def _convolution_rows(self, cell, K, L):
        n = cell.n
        k = self.config.constants
        b = self.config.budgets
        if not K.origin_symmetric:
            return [cell.row(None, "convolution body", None, "construction.conv_support", "SKIP",
                             note="parent is not origin-symmetric")]
        try:
            cb = build_convolution_body(K, L.value, b["isotropy"], derive_seed(cell.seed, "conv"))
        except OracleUnavailable as exc:
            return [cell.row(None, "convolution body", None, "construction.conv_support", "SKIP", note=str(exc))]
        dirs = sample_sphere(n, b["directions"], derive_seed(cell.seed, "conv_dirs")).directions
        err = cb.support_additivity_error(dirs)
        rows = [cell.row(None, "max|h_C - h_K/L - r_n|", err, "construction.conv_support",
                         "PASS" if err <= 1e-9 else "FAIL", 1e-9 - err, bound=1e-9)]
        lo, hi, ok = cb.containment_audit(dirs, k["c7"], k["c8"])
        note = f"gamma={cb.gamma:.4f}; min ratio {lo:.4f}"
        if cb.small_diameter:
            rows.append(cell.row(None, "h_C/r_n max", hi, "construction.conv_containment", "PASS" if ok else "FAIL",
                                 min(lo - k["c7"], k["c8"] * cb.gamma - hi), bound=k["c8"] * cb.gamma, note=note))
        else:
            rows.append(cell.row(None, "h_C/r_n max", hi, "construction.conv_containment",
                                 note=note + "; not small-diameter"))
        # one pool of C samples serves every q
        reps, outer, inner = b["reps"], b["outer"], b["inner"]
        # a single draw pays the hit-and-run burn-in once
        pool = sample_uniform(cb.body, reps * (outer + inner), derive_seed(cell.seed, "conv_samples")).points
        xs = [pool[r * outer:(r + 1) * outer] for r in range(reps)]
        ys = np.split(pool[reps * outer:], reps)
        # L_C from the same pool (C is volume one and centred)
        per_rep = np.array([np.mean(np.sum(x * x, axis=1)) / n for x in ys])
        lc2 = Estimate(float(per_rep.mean()), float(per_rep.std(ddof=1) / math.sqrt(reps)), reps * inner)
        rows.append(cell.row(None, "L_C", lc2.power(0.5), "construction.conv_ratio"))
        for q in self.config.q_values(n):
            ic = slicing_from_samples(xs, ys, q)
            ik = self.slicing(cell, q)
            lit = ik.value / (ic.value * L.value ** 2)
            rows.append(cell.row(q, "I1(K)/(I1(C) L_K^2)", lit, "construction.conv_ratio",
                                 note="literal ratio, reported"))
            r = lit * lc2.value
            se = r * math.hypot(ik.relative_error(), ic.relative_error(), lc2.relative_error())
            rows.append(cell.row(q, "I1(K) L_C^2/(I1(C) L_K^2)", Estimate(r, se, 1), "construction.conv_ratio",
                                 *leq(Estimate(r, se, 1), 8.0), bound=8.0))
        return rows

    def _ball_body_rows(self, cell, K, L):
        n = cell.n
        if n < 2:
            return []
        basis = np.eye(n)[:1]
        try:
            kb = kb_ratio_report(K, basis, L.value, p_values=(1,), budget=self.config.budgets["inner"],
                                 sample_budget=min(self.config.budgets["samples"], 50_000),
                                 seed=derive_seed(cell.seed, "kb"))
        except OracleUnavailable as exc:
            return [cell.row(None, "KB1", None, "construction.ball_body_kb1", "SKIP", note=str(exc))]
        rows = [cell.row(None, "KB1 ratio (k=1)", kb.kb1_ratio, "construction.ball_body_kb1",
                         *in_band(kb.kb1_ratio, 1 / 8, 8), bound=8.0,
                         note="section exact" if kb.section_exact else "section by Monte Carlo")]
        lo, hi = kb.kb2_ratios[1]
        v = "PASS" if lo >= 1 / 8 and hi <= 8 else "FAIL"
        rows.append(cell.row(1, "KB2 ratio (k=1)", hi, "construction.ball_body_kb2", v, min(lo - 1 / 8, 8 - hi),
                             bound=8.0))
        length, _ = section_volume(K, np.eye(n)[:1])
        rows.append(cell.row(None, "|K cap e_1 axis|", length, "construction.section_length",
                             bound=2 * K.radius(), note=f"lower reference 2 L_K = {2 * L.value:.5f}"))
        return rows

    def run_covering(self, cell: Cell):
        n, K = cell.n, self.body(cell)
        k = self.config.constants
        sample = sample_uniform(K, self.config.budgets["covering_sample"], derive_seed(cell.seed, "cover"))
        prof = regularity_profile(K, k["kappa"], k["tau"], sample=sample, seed=cell.seed)
        gap = int(np.min(prof.upper - prof.lower))
        rows = [cell.row(None, "min(upper - lower)", gap, "covering.sandwich", "PASS" if gap >= 0 else "FAIL", gap,
                         bound=0.0, note=prof.caveat)]
        # a centre-restricted cover from the start point c0 is one ball once t >= R(K) + |c0|
        pts = sample.points
        c0 = float(np.linalg.norm(pts[start_index(pts)]))
        t1 = K.radius() + c0
        one = covering_upper(K, t1, pts, refine=False)
        rows.append(cell.row(None, "N(K, (R + |c0|) B)", one, "covering.circumradius",
                             "PASS" if one == 1 else "FAIL", 1 - one, bound=1.0,
                             note=f"t = R(K) + |c0| = {t1:.5g}; |c0| = {c0:.3g}"))
        beyond = prof.t_grid >= K.radius()
        if beyond.any():
            rows.append(cell.row(None, "max N for t >= R(K)", int(prof.upper[beyond].max()),
                                 "covering.circumradius", note="literal circumradius, reported"))
        rows.append(cell.row(None, "kappa_fit", prof.kappa_fit, "covering.kappa_fit",
                             note="range empty" if prof.range_empty else f"regular at kappa={k['kappa']:g}: "
                                                                        f"{prof.regular}"))
        if cell.body_cfg["shape"] == "cube" and n == 2:
            c = covering_upper(K, 0.25, sample)
            rows.append(cell.row(None, "N(cube, 1/4)", c, "covering.cube_quarter", *in_band(c, 4, 12), bound=12))
        return rows

    def bq_gamma_rows(self, cells):
        """Catalog surrogates of B(q) and Gamma(q), and the A(n, rho) screen."""
        rho = self.config.constants["rho"]
        rows = []
        for n in self.config.n_grid:
            group = [c for c in cells if c.n == n]
            for q in self.config.q_values(n):
                vals, small = [], []
                for c in group:
                    K, L = self.body(c), self.L(c).value
                    try:
                        I1 = self.slicing(c, q)
                    except OracleUnavailable:
                        continue
                    vals.append((I1.value / (math.sqrt(q * n) * L ** 2), c.label))
                    gamma = K.radius() / (math.sqrt(n) * L)
                    if K.origin_symmetric and gamma <= GAMMA_SMALL:
                        small.append((I1.value / math.sqrt(q * n), c.label))
                    ok = I1.value <= rho * n * L ** 2
                    rows.append(Row("bq_gamma", c.label, n, q, "I1 <= rho n L^2", float(ok), None,
                                    rho * n * L ** 2, "REPORT", "bq_gamma.A_screen", I1.value - rho * n * L ** 2))
                if vals:
                    v, who = min(vals)
                    note = "catalog-restricted surrogate; minimiser " + who
                    rows.append(Row("bq_gamma", "catalog", n, q, "B(q)", v, None, None, "REPORT", "bq_gamma.B",
                                    note=note))
                    if q == 2:
                        verdict, m = equiv(v)
                        rows.append(Row("bq_gamma", "catalog", n, q, "B(2)", v, None, EQUIV_BAND, verdict,
                                        "bq_gamma.B2", m, note))
                if small:
                    v, who = max(small)
                    rows.append(Row("bq_gamma", "catalog", n, q, "Gamma(q)", v, None, None, "REPORT",
                                    "bq_gamma.Gamma",
                                    note=f"catalog-restricted surrogate; gamma <= {GAMMA_SMALL:g}; maximiser {who}"))
        return rows

    # orchestration ----------------------------------------------------
    def cells(self, suite):
        out = []
        for n in self.config.n_grid:
            for cfg in self.config.bodies:
                if "n" in cfg and cfg["n"] != n:
                    continue
                out.append(Cell(suite, cfg, _label(cfg), n, self.config))
        return out

    def run_cell(self, cell: Cell):
        fn = getattr(self, f"run_{cell.suite}")
        first = next(iter(a for a in ANCHORS if a.startswith(cell.suite + ".")))
        try:
            return fn(cell)
        except OracleUnavailable as exc:
            return [cell.row(None, "oracle unavailable", None, first, "SKIP", note=str(exc))]
        except (InsufficientBudget, ArithmeticError, ValueError, RuntimeError) as exc:
            return [cell.row(None, "error", None, first, "FAIL", note=f"{type(exc).__name__}: {exc}")]

    def run(self) -> ExperimentReport:
        t0 = time.time()
        jobs = [c for s in self.config.suite if s != "bq_gamma" for c in self.cells(s)]
        if self.config.threads > 1:
            with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
                parts = list(pool.map(self.run_cell, jobs))
        else:
            parts = [self.run_cell(c) for c in jobs]
        rows = [r for part in parts for r in part]
        if "bq_gamma" in self.config.suite:
            rows += self.bq_gamma_rows(self.cells("bq_gamma"))
        env = {"seed": self.config.seed, "budgets": dict(self.config.budgets),
               "constants": dict(self.config.constants), "n_grid": list(self.config.n_grid),
               "q_grid": list(self.config.q_grid), "suite": list(self.config.suite),
               "bodies": [dict(b) for b in self.config.bodies],
               "tolerance": {"slack_se": SLACK_SE, "equiv_band": EQUIV_BAND}}
        print(f"suite finished in {time.time() - t0:.1f} s", file=sys.stderr)
        return ExperimentReport(rows, env)


def run_suite(config: ExperimentConfig) -> ExperimentReport:
    """Execute every selected audit over the (body, n, q) grid."""
    return Runner(config).run()


def bq_gamma_tables(config: ExperimentConfig) -> ExperimentReport:
    """Only the B(q) / Gamma(q) / A(n, rho) tables (computing the slicing values they need)."""
    runner = Runner(config)
    rows = runner.bq_gamma_rows(runner.cells("bq_gamma"))
    return ExperimentReport(rows, {"seed": config.seed, "budgets": dict(config.budgets),
                                   "constants": dict(config.constants),
                                   "tolerance": {"slack_se": SLACK_SE, "equiv_band": EQUIV_BAND}})


# ----------------------------------------------------------------------
# emission


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in report.rows:
        w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def parse_csv(text: str) -> list:
    """Rows of an emitted CSV back as ``Row`` objects."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        def num(k):
            return float(rec[k]) if rec[k] != "" else None
        out.append(Row(rec["suite"], rec["body"], int(rec["n"]), num("q"), rec["quantity"], num("value"),
                       num("std_error"), num("bound"), rec["verdict"], rec["anchor"], num("margin"), rec["note"]))
    return out


def plot_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["body", "n", "q", "quantity", "value", "std_error"])
    for r in report.rows:
        if r.q is not None and r.value is not None:
            w.writerow([r.body, r.n, _fmt(r.q), r.quantity, _fmt(r.value), _fmt(r.std_error)])
    return buf.getvalue()


def report_json(report: ExperimentReport) -> str:
    data = report.to_dict()
    jsonschema.validate(data, REPORT_SCHEMA)
    return json.dumps(data, indent=1, sort_keys=True)


def emit(report: ExperimentReport, out_dir: str, formats=("csv", "json", "plot"), stem: str = "report") -> list:
    """Write the report files; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    writers = {"csv": (f"{stem}.csv", report_csv), "json": (f"{stem}.json", report_json),
               "plot": (f"{stem}_plot.csv", plot_csv)}
    paths = []
    for f in formats:
        name, fn = writers[f]
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(fn(report))
        paths.append(path)
    return paths
