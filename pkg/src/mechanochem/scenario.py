"""Scenario configuration: INI-style files with one section per module.

Unset keys fall back to the defaults below (an empty file is a valid smoke
scenario on a tiny mesh).  ``ScenarioConfig.build`` assembles the meshes and
operators and returns a ready :class:`~mechanochem.coupler.BilayerCoupler`;
``write_effective`` echoes every resolved value so a run can be reproduced
from its own output directory.

Numeric vectors are whitespace-separated (``rho_d = 0 1 1 0.35 1 1`` lists
rho0..rho5; diffusion matrices are row-major, ``diff_d = 1 0 0 30``).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from . import assembly as asm
from . import kinetics as kin
from .coupler import BilayerCoupler, BilayerSystem
from .errors import ConfigurationError
from .integrator import ControllerParams
from .mesh import build_bilayer, pair_interface, read_mesh

SIDES = ("D", "E")


def _example3_dirichlet(x):
    return np.column_stack([0.5 * np.cos(2.5 * np.pi * (x[:, 0] - x[:, 1])),
                            0.75 * np.sin(2.5 * np.pi * (x[:, 0] + x[:, 1]))])


DIRICHLET_DATA = {"zero": None, "example3": _example3_dirichlet}


@dataclass
class ScenarioConfig:
    # [mesh]
    rect_d: tuple = (0.0, 1.0, 0.0, 1.0)
    rect_e: tuple = (0.0, 1.0, 1.0, 1.4)
    nx: int = 4
    ny_d: int = 4
    ny_e: int = 2
    import_d: str = ""
    import_e: str = ""
    # [kinetics]
    model: str = "gm"
    rho_d: tuple = (0.0, 1.0, 1.0, 0.35, 1.0, 1.0)
    rho_e: tuple = (0.0, 1.0, 1.0, 0.35, 1.0, 1.0)
    skin_r: tuple = (1.0, 0.25, 20.0, 5.0, 5.0, 5.0, 20.0, 5.0)
    species: int = 2
    # [crossdiff]
    cd_kind: str = "linear"
    diff_d: tuple = (1.0, 0.0, 0.0, 30.0)
    diff_e: tuple = (1.0, 0.0, 0.0, 30.0)
    eta_d: tuple = ()
    eta_e: tuple = ()
    # [elasticity]
    elasticity: bool = False
    young_d: float = 1000.0
    poisson_d: float = 0.475
    young_e: float = 250.0
    poisson_e: float = 0.3
    alpha_gamma: float = 2.5
    j_d: float = 1.0
    j_e: float = 1.0
    dirichlet: str = "zero"
    # [coupling]
    c_f_d: float = 0.0
    c_f_e: float = 0.0
    c_g_d: float = 0.0
    c_g_e: float = 0.0
    # [transmission]
    k_d: float = 1.0
    k_e: float = 1.0
    # [controller]
    controller: ControllerParams = field(default_factory=ControllerParams)
    # [run]
    t_final: float = 0.1
    dt_init: float = 1e-3
    seed: int = 1234
    perturb_variance: float = 1e-3
    snapshot_every: int = 0
    sweeps: int = 1
    sweep_tol: float = 0.0
    mjcontrol: bool = True
    advection: bool = True
    initial: str = "steady_perturbed"
    out_dir: str = "out"

    def validate(self):
        for name in ("poisson_d", "poisson_e"):
            nu = getattr(self, name)
            if not (0.0 <= nu < 0.5):
                raise ConfigurationError(f"{name} = {nu} must lie in [0, 0.5)")
        for name in ("rho_d", "rho_e", "skin_r"):
            if any(v < 0.0 for v in getattr(self, name)):
                raise ConfigurationError(f"{name} entries must be nonnegative")
        if self.k_d < 0.0 or self.k_e < 0.0 or self.k_d + self.k_e <= 0.0:
            raise ConfigurationError("transmission weights must be nonnegative "
                                     "with a positive sum")
        if self.model not in ("gm", "skin4", "none"):
            raise ConfigurationError(f"unknown kinetics model {self.model!r}")
        if self.dirichlet not in DIRICHLET_DATA:
            raise ConfigurationError(f"unknown dirichlet datum {self.dirichlet!r}")
        self.controller.validate()
        return self

    # -- model assembly -------------------------------------------------------

    @property
    def n_species(self) -> int:
        return {"gm": 2, "skin4": 4}.get(self.model, self.species)

    def reaction(self) -> kin.Reaction:
        if self.model == "gm":
            return kin.GiererMeinhardt({"D": kin.GMParams(*self.rho_d),
                                        "E": kin.GMParams(*self.rho_e)})
        if self.model == "skin4":
            return kin.SkinFourSpecies(kin.Skin4Params(*self.skin_r))
        return kin.NoReaction(self.species)

    def crossdiffusion(self, side: str) -> kin.CrossDiffusion:
        m = self.n_species
        mat = np.asarray(getattr(self, f"diff_{side.lower()}"), dtype=float)
        mat = mat.reshape(m, m)
        eta = np.asarray(getattr(self, f"eta_{side.lower()}") or
                         np.zeros(m * m), dtype=float).reshape(m, m)
        if self.cd_kind == "nonlinear":
            return kin.CrossDiffusion(mat, kind="nonlinear", eta=eta)
        return kin.CrossDiffusion(mat)

    def meshes(self):
        if self.import_d or self.import_e:
            if not (self.import_d and self.import_e):
                raise ConfigurationError("mesh import needs both import_d and import_e")
            md = read_mesh(self.import_d, "D")
            me = read_mesh(self.import_e, "E")
            return md, me, pair_interface(md, me)
        return build_bilayer(self.rect_d, self.rect_e, self.nx, self.ny_d, self.ny_e)

    def build(self):
        """Assemble the scenario into a (system, coupler) pair."""
        md, me, imap = self.meshes()
        meshes = {"D": md, "E": me}
        reaction = self.reaction()
        adr = {}
        for side in SIDES:
            blk = asm.AdrBlocks(meshes[side], self.crossdiffusion(side),
                                getattr(self, f"k_{side.lower()}"), reaction, side)
            adr[side] = blk
        elast = None
        if self.elasticity:
            from .verification import lame_constants
            dirichlet = DIRICHLET_DATA[self.dirichlet]
            elast = {}
            for side in SIDES:
                mu, lam = lame_constants(getattr(self, f"young_{side.lower()}"),
                                         getattr(self, f"poisson_{side.lower()}"))
                elast[side] = asm.ElasticityBlocks(
                    meshes[side], mu, lam,
                    alpha_gamma=self.alpha_gamma if side == "E" else 0.0,
                    j_sigma=getattr(self, f"j_{side.lower()}"),
                    dirichlet=dirichlet, geom=adr[side].geom)
        coupling = {"c_f": {"D": self.c_f_d, "E": self.c_f_e},
                    "c_g": {"D": self.c_g_d, "E": self.c_g_e}}
        system = BilayerSystem(meshes, imap, adr, elasticity=elast,
                               coupling=coupling)
        w0 = self.initial_species(system)
        for side in SIDES:
            adr[side].refresh_diffusion(w0[system.slices[side]])
        coupler = BilayerCoupler(system, self.controller, mjcontrol=self.mjcontrol,
                                 sweeps=self.sweeps, sweep_tol=self.sweep_tol,
                                 advection=self.advection)
        return system, coupler, w0

    def steady_state(self, side: str):
        if self.model == "gm":
            return kin.gm_steady_state(kin.GMParams(*getattr(self, f"rho_{side.lower()}")))
        if self.model == "skin4":
            return kin.skin4_steady_state(kin.Skin4Params(*self.skin_r), side)
        return np.ones(self.species)

    def initial_species(self, system) -> np.ndarray:
        """Per-side steady state, the first species perturbed by a seeded field."""
        rng = np.random.default_rng(self.seed)
        parts = []
        for side in SIDES:
            V = system.meshes[side].n_vertices
            base = self.steady_state(side)
            block = np.repeat(base, V).reshape(self.n_species, V)
            if self.initial == "steady_perturbed":
                eta = kin.uniform_perturbation(V, self.perturb_variance, rng)
                block[0] *= 1.0 + eta
            parts.append(block.ravel())
        return np.concatenate(parts)


_TUPLE_KEYS = {"rect_d", "rect_e", "rho_d", "rho_e", "skin_r", "diff_d", "diff_e",
               "eta_d", "eta_e"}
_INT_KEYS = {"nx", "ny_d", "ny_e", "species", "seed", "snapshot_every", "sweeps"}
_BOOL_KEYS = {"elasticity", "mjcontrol", "advection"}
_STR_KEYS = {"model", "cd_kind", "dirichlet", "initial", "out_dir", "import_d",
             "import_e"}

_SECTION_OF = {
    "mesh": ["rect_d", "rect_e", "nx", "ny_d", "ny_e", "import_d", "import_e"],
    "kinetics": ["model", "rho_d", "rho_e", "skin_r", "species"],
    "crossdiff": ["cd_kind", "diff_d", "diff_e", "eta_d", "eta_e"],
    "elasticity": ["elasticity", "young_d", "poisson_d", "young_e", "poisson_e",
                   "alpha_gamma", "j_d", "j_e", "dirichlet"],
    "coupling": ["c_f_d", "c_f_e", "c_g_d", "c_g_e"],
    "transmission": ["k_d", "k_e"],
    "run": ["t_final", "dt_init", "seed", "perturb_variance", "snapshot_every",
            "sweeps", "sweep_tol", "mjcontrol", "advection", "initial", "out_dir"],
}

_CONTROLLER_KEYS = [f.name for f in dc_fields(ControllerParams)]


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _TUPLE_KEYS:
            return tuple(float(tok) for tok in raw.split())
        if key in _INT_KEYS:
            return int(raw)
        if key in _BOOL_KEYS:
            low = raw.lower()
            if low in ("true", "on", "yes", "1"):
                return True
            if low in ("false", "off", "no", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if key in _STR_KEYS:
            return raw
        return float(raw)
    except ValueError as exc:
        raise ConfigurationError(f"field {key!r}: {exc}") from exc


def load_config(path) -> ScenarioConfig:
    """Parse a scenario file; unknown sections or keys are rejected."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        parser.read_file(fh)
    cfg = ScenarioConfig()
    for section in parser.sections():
        if section == "controller":
            over = {}
            for key, raw in parser.items(section):
                if key not in _CONTROLLER_KEYS:
                    raise ConfigurationError(f"[controller] has no field {key!r}")
                over[key] = int(raw) if key == "max_newton" else float(raw)
            cfg.controller = ControllerParams(**over)
            continue
        if section not in _SECTION_OF:
            raise ConfigurationError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTION_OF[section]:
                raise ConfigurationError(f"[{section}] has no field {key!r}")
            setattr(cfg, key, _parse_value(key, raw))
    return cfg.validate()


def write_effective(cfg: ScenarioConfig, path):
    """Echo the fully resolved configuration (reproducibility record)."""
    parser = configparser.ConfigParser()
    for section, keys in _SECTION_OF.items():
        parser[section] = {}
        for key in keys:
            val = getattr(cfg, key)
            if key in _TUPLE_KEYS:
                parser[section][key] = " ".join(repr(float(v)) for v in val)
            else:
                parser[section][key] = repr(val) if not isinstance(val, str) else val
    parser["controller"] = {name: repr(getattr(cfg.controller, name))
                            for name in _CONTROLLER_KEYS}
    with open(path, "w") as fh:
        parser.write(fh)
