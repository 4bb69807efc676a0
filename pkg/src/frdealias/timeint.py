"""Classic RK4 with anti-aliasing filter scheduling."""

from dataclasses import dataclass, field
import logging
import math

import numpy as np

from .antialias import (ENTROPY_FILTER, MODAL_FILTER, FilterBracketError, FilterLog,
                        entropy_filter_pass, modal_filter_matrix, neighbor_table)
from .fr_core import NonFiniteStateError, SolutionState
from .physics import InadmissibleStateError, _entropy, pressure

log = logging.getLogger(__name__)

RK4_A = (0.0, 0.5, 0.5, 1.0)
RK4_B = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)


class BlowupError(RuntimeError):
    """The solution became non-finite or inadmissible during a step."""

    def __init__(self, message, step=None, stage=None, element=None, time=None, cause=None):
        super().__init__(message)
        self.step = step
        self.stage = stage
        self.element = element
        self.time = time
        self.cause = cause
        self.records = []       # progress records up to the failure, set by run()
        self.last_state = None  # state at the start of the failing step

    def as_dict(self):
        return {
            "error": str(self),
            "step": self.step,
            "stage": self.stage,
            "element": self.element,
            "time": self.time,
            "cause": type(self.cause).__name__ if self.cause else None,
        }


@dataclass
class TimeIntegrator:
    dt: float
    t_end: float
    a: tuple = RK4_A
    b: tuple = RK4_B
    step_count: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if len(self.b) != 4 or abs(sum(self.b) - 1.0) > 1e-15:
            raise ValueError("expected the four-stage RK4 weights")


@dataclass
class FilterSchedule:
    """Applies the configured filter at the points RK4 needs it and counts calls."""

    antialias: object
    disc: object = None
    filter_log: FilterLog = None
    modal_calls: int = 0
    entropy_calls: int = 0
    zeta_applications: int = 0
    zeta_active: int = 0
    last_max_zeta: float = 0.0
    _modal: np.ndarray = field(default=None, repr=False)
    _table: np.ndarray = field(default=None, repr=False)

    @property
    def mode(self):
        return self.antialias.mode

    def stage_filter(self, u, reference, step, stage):
        if self.mode != ENTROPY_FILTER:
            return u
        if self._table is None:
            self._table = neighbor_table(self.disc.mesh)
        out, report = entropy_filter_pass(u, self.disc.mesh, self.disc.element, self.disc.gas,
                                          self.antialias.tolerances, reference=reference,
                                          table=self._table)
        self.entropy_calls += 1
        self.zeta_applications += report.zeta.size
        self.zeta_active += int(np.count_nonzero(report.zeta))
        self.last_max_zeta = max(self.last_max_zeta, report.max_zeta)
        if self.filter_log is not None:
            self.filter_log.record(step, stage, report)
        return out

    def step_filter(self, u, step):
        """Modal filter once every ``apply_every_n_steps`` completed steps."""
        if self.mode != MODAL_FILTER or step % self.antialias.apply_every_n_steps:
            return u
        if self._modal is None:
            a = self.antialias
            self._modal = modal_filter_matrix(self.disc.element, a.kappa, a.eta_c, a.s)
        self.modal_calls += 1
        return self._modal @ u


def _first_bad_element(u):
    bad = ~np.all(np.isfinite(u), axis=(1, 2))
    return int(np.argmax(bad)) if bad.any() else None


def advance_step(state, residual, antialias=None, schedule=None, dt=None, step=None):
    """One classic RK4 step.

    Parameters
    ----------
    state : SolutionState or ndarray
    residual : callable
        ``residual(u) -> du/dt`` on arrays.
    antialias : AntialiasConfig, optional
        Only used to build a schedule when ``schedule`` is omitted.
    schedule : FilterSchedule, optional
    dt : float
    step : int
        1-based index of the step being taken (drives the modal filter cadence).

    The entropy filter is applied to each stage state before its residual is
    evaluated and to the final combination; bounds come from the state at the
    start of the step. The modal filter runs after the step when ``step`` is a
    multiple of its interval.
    """
    if dt is None:
        raise ValueError("dt is required")
    if schedule is None and antialias is not None:
        schedule = FilterSchedule(antialias)
    is_state = hasattr(state, "u")
    u0 = np.asarray(state.u if is_state else state, dtype=float)
    t0 = state.time if is_state else 0.0
    step = 1 if step is None else step

    stage = 0
    try:
        k = residual(u0)
        acc = RK4_B[0] * k
        for stage in (1, 2, 3):
            ui = u0 + RK4_A[stage] * dt * k
            if schedule is not None:
                ui = schedule.stage_filter(ui, u0, step, stage)
            k = residual(ui)
            acc += RK4_B[stage] * k
        stage = 4
        u1 = u0 + dt * acc
        if not np.all(np.isfinite(u1)):
            raise NonFiniteStateError("non-finite state after update",
                                      element=_first_bad_element(u1))
        if schedule is not None:
            u1 = schedule.stage_filter(u1, u0, step, stage)
            u1 = schedule.step_filter(u1, step)
    except (NonFiniteStateError, InadmissibleStateError, FilterBracketError,
            FloatingPointError) as exc:
        raise BlowupError(f"step {step}, stage {stage}: {exc}", step=step, stage=stage,
                          element=getattr(exc, "element", None), time=t0, cause=exc) from exc
    if is_state:
        return SolutionState(u1, t0 + dt)
    return u1


@dataclass
class RunResult:
    state: SolutionState
    records: list
    steps: int
    schedule: FilterSchedule


def progress_record(step, t, dt, u, gas, disc=None, max_zeta=0.0):
    rec = {
        "step": step,
        "t": t,
        "dt": dt,
        "min_rho": float(u[..., 0].min()),
        "min_p": float(pressure(u, gas).min()),
        "min_sigma": float(_entropy(u, gas).min()) if np.all(u[..., 0] > 0) else float("nan"),
        "max_zeta": max_zeta,
    }
    if disc is not None:
        tot = disc.integrate(u)
        for i, val in enumerate(tot):
            rec[f"total_{i}"] = float(val)
    return rec


def run(state, disc, dt, t_end, antialias=None, cadence=1, callback=None, filter_log=None,
        progress_every=0):
    """Integrate ``state`` to ``t_end`` with fixed steps.

    The final step is shortened so the run lands on ``t_end`` exactly.
    ``callback(step, state)`` is invoked at the record cadence. Raises
    :class:`BlowupError` on failure, carrying the records so far and the last
    good state.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    antialias = antialias or disc.antialias
    schedule = FilterSchedule(antialias, disc, filter_log)
    if not hasattr(state, "u"):
        state = SolutionState(np.asarray(state, dtype=float), 0.0)
    t_start = state.time
    nsteps = max(0, math.ceil((t_end - t_start) / dt - 1e-9))
    records = [progress_record(0, state.time, dt, state.u, disc.gas, disc)]
    if callback is not None:
        callback(0, state)
    for step in range(1, nsteps + 1):
        h = min(dt, t_end - state.time) if step == nsteps else dt
        try:
            new = advance_step(state, disc.residual, schedule=schedule, dt=h, step=step)
        except BlowupError as exc:
            exc.records = records
            exc.last_state = state
            raise
        state = new
        if step == nsteps:
            state = SolutionState(state.u, float(t_end))
        if step % cadence == 0 or step == nsteps:
            records.append(progress_record(step, state.time, h, state.u, disc.gas, disc,
                                           schedule.last_max_zeta))
            schedule.last_max_zeta = 0.0
            if callback is not None:
                callback(step, state)
        if progress_every and step % progress_every == 0:
            r = records[-1]
            log.info("step %d t %.6g dt %.3g min_rho %.4g min_p %.4g max_zeta %.3g",
                     step, state.time, h, r["min_rho"], r["min_p"], r["max_zeta"])
    return RunResult(state, records, nsteps, schedule)
