import itertools
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

from errors import ConfigError, PotentialUnavailable

ModelT = TypeVar("ModelT", bound=BaseModel)


class Tolerances(BaseModel):
    """Every numerical tolerance used across the package."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    plug_rel: float = 1e-12
    membership_rel: float = 1e-10
    antisymmetry: float = 1e-12
    orthogonality: float = 1e-12
    fd_step: float = 1e-6
    gradient_rel: float = 1e-6
    monotone_floor: float = -1e-12
    divergence: float = 1e-12
    cb_residual_rel: float = 1e-10
    channel_plug_floor: float = 1e-8
    coupling_factor: float = 16.0
    rk4_stability: float = 2.5
    advection_cfl: float = 0.5
    bound_rel: float = 1e-9


TOLERANCES = Tolerances()


class FluidParams(BaseModel):
    """Model constants of the viscoplastic stress law.

    ``tau_hat`` is the rescaled yield stress ``tau_star / max(1, nu**(1/q))``,
    computed once after validation.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    mu1: float = Field(gt=0)
    mu2: float = Field(default=0.0, ge=0)
    nu: float = Field(default=0.0, ge=0)
    tau_star: float = Field(default=0.0, ge=0)
    p: float = Field(default=2.0, ge=2)
    q: float = Field(default=2.0, ge=2)
    a1: float = Field(default=0.0, ge=0)
    a2: float = Field(default=0.0, ge=0)

    _tau_hat: float = PrivateAttr(default=0.0)

    def model_post_init(self, __context: Any) -> None:
        self._tau_hat = self.tau_star / max(1.0, self.nu ** (1.0 / self.q))

    @property
    def tau_hat(self) -> float:
        return self._tau_hat

    @property
    def q_dual(self) -> float:
        return self.q / (self.q - 1.0)

    @property
    def potentials_admissible(self) -> bool:
        return self.nu > 0 or self.mu2 == 0

    def require_potential(self) -> None:
        if not self.potentials_admissible:
            raise PotentialUnavailable(self.mu2)

    @classmethod
    def bingham(cls, mu1: float, tau_star: float) -> "FluidParams":
        return cls(mu1=mu1, tau_star=tau_star)

    @classmethod
    def herschel_bulkley(cls, mu1: float, tau_star: float, p: float) -> "FluidParams":
        return cls(mu1=mu1, tau_star=tau_star, p=p, q=2.0)

    @classmethod
    def cosserat_bingham(cls, mu1: float, mu2: float, tau_star: float,
                         nu: Optional[float] = None, a1: float = 0.0, a2: float = 0.0) -> "FluidParams":
        # nu defaults to the viscosity ratio, the value taken by the explicit implicit-law resolution
        return cls(mu1=mu1, mu2=mu2, tau_star=tau_star,
                   nu=mu2 / mu1 if nu is None else nu, a1=a1, a2=a2)


class ChannelConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    half_width: float = Field(default=1.0, gt=0)
    cells: int = Field(default=200, ge=4)
    dt: Optional[float] = Field(default=None, gt=0)
    t_end: float = Field(default=10.0, gt=0)
    body_force: float = 1.0
    friction: float = Field(default=1e8, ge=0)
    params: FluidParams
    reg_n: Optional[int] = Field(default=None, ge=1)
    omega: Union[float, List[float]] = 0.0  # spin rate: constant, per cell or per face
    init: Literal["rest", "steady"] = "rest"
    steady_tol: float = Field(default=1e-6, gt=0)
    cfl_safety: float = Field(default=0.4, gt=0, le=0.5)
    ledger_every: int = Field(default=100, ge=1)
    max_steps: int = Field(default=5_000_000, ge=1)

    @model_validator(mode="after")
    def _omega_profile_length(self) -> "ChannelConfig":
        if isinstance(self.omega, list) and len(self.omega) not in (self.cells, self.cells + 1):
            raise ValueError(f"omega profile needs {self.cells} cell values or {self.cells + 1} face values, "
                             f"got {len(self.omega)}")
        return self


class OmegaSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["constant", "expression", "file"] = "constant"
    value: float = 0.0
    expr: Optional[str] = None
    path: Optional[str] = None

    @model_validator(mode="after")
    def _source_present(self) -> "OmegaSpec":
        if self.kind == "expression" and not self.expr:
            raise ValueError("omega.kind 'expression' needs 'expr'")
        if self.kind == "file" and not self.path:
            raise ValueError("omega.kind 'file' needs 'path'")
        return self


class TorusConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    modes: int = Field(default=16, ge=1)
    grid: Optional[int] = Field(default=None, ge=4)
    dt: Optional[float] = Field(default=None, gt=0)
    t_end: float = Field(default=1.0, gt=0)
    params: FluidParams
    reg_n: int = Field(default=1000, ge=1)
    omega: OmegaSpec = OmegaSpec()
    init: Literal["taylor-green", "random"] = "taylor-green"
    amplitude: float = 1.0
    seed: int = 0
    record_every: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _grid_resolves_modes(self) -> "TorusConfig":
        if self.grid is not None and self.grid < 2 * self.modes + 2:
            raise ValueError(f"grid must be >= 2*modes + 2 = {2 * self.modes + 2}")
        return self

    @property
    def resolved_grid(self) -> int:
        if self.grid is not None:
            return self.grid
        m = 4
        while m < 3 * self.modes + 1:
            m *= 2
        return m


class PlugQuery(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    x_star: List[List[float]]
    plug_matrix: Optional[List[List[float]]] = None


class EvalConfig(BaseModel):
    """Input of ``eval-stress`` and ``check-plug``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    params: FluidParams
    dim: Literal[2, 3] = 3
    omega: Optional[List[List[float]]] = None
    reg_n: int = Field(default=1000, ge=1)
    tol_plug: Optional[float] = Field(default=None, gt=0)
    queries: List[PlugQuery] = []


class SweepGrid(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["channel", "galerkin"]
    base: Dict[str, Any]
    vary: Dict[str, List[Any]] = {}
    out: str = "sweep"

    def expand(self) -> List[Dict[str, Any]]:
        """Cartesian product of ``vary`` applied to ``base``, in sorted-key order."""
        keys = sorted(self.vary)
        runs = []
        for values in itertools.product(*(self.vary[k] for k in keys)):
            config = json.loads(json.dumps(self.base))
            for dotted, value in zip(keys, values):
                _set_dotted(config, dotted, value)
            runs.append(config)
        return runs

    def overrides(self) -> List[Dict[str, Any]]:
        """The ``vary`` assignment of each run, aligned with ``expand()``."""
        keys = sorted(self.vary)
        return [dict(zip(keys, values)) for values in itertools.product(*(self.vary[k] for k in keys))]


def _set_dotted(target: Dict[str, Any], dotted: str, value: Any) -> None:
    *parents, leaf = dotted.split(".")
    node = target
    for part in parents:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"sweep path '{dotted}' crosses a non-object at '{part}'")
    node[leaf] = value


def load_json(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")


def load_config(path: Union[str, Path], model: Type[ModelT]) -> ModelT:
    """Read a JSON file and validate it against ``model``.

    pydantic ``ValidationError`` propagates unchanged so callers can report field paths.
    """
    data = load_json(path)
    config = model.model_validate(data)
    logging.debug(f"Loaded {model.__name__} from {path}")
    return config
