"""Scene files, network checkpoints, and trajectory persistence.

Scenes are JSON: human-diffable, schema-validated with line-precise errors,
unknown fields rejected. Checkpoints are npz blobs with an embedded JSON
descriptor (architecture, scene metadata, weight checksum) so a wrong or
corrupted file is rejected before any weight is used. Trajectories are
newline-delimited text, one frame per line, exact float64 round trip.
All formats carry a version field and reject versions newer than this build.
"""

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .basis import MaterialField, TrainConfig, TrainProblem, train_basis
from .domain import BoxDomain, PolygonDomain
from .field import (FieldNetwork, FieldSpec, flat_to_params, init_network,
                    params_to_flat)
from .geometry import polyline
from .lifting import FAMILY_KINDS, MODES, InterfaceFamily, family
from .sim import (Frame, Simulation, gravity_handle, pair_handle, pin_handle)

SCENE_VERSION = 1
CHECKPOINT_VERSION = 1
TRAJECTORY_VERSION = 1

CHECKPOINT_FORMAT = "creaselift-checkpoint"
TRAJECTORY_FORMAT = "creaselift-trajectory"


class SceneError(ValueError):
    """Scene schema violation, reported with file and line context."""


class CheckpointError(ValueError):
    """Checkpoint rejected: wrong format, version, architecture, or hash."""


# ---------------------------------------------------------------------------
# line-precise JSON validation
# ---------------------------------------------------------------------------

def _line_of(text: str, path: tuple) -> int:
    """Best-effort 1-based line of a key path in the raw JSON text. A key
    that is absent stops the walk, so missing-field errors point at the
    innermost object that does exist."""
    pos = 0
    for part in path:
        if isinstance(part, str):
            m = re.compile(r'"' + re.escape(part) + r'"\s*:').search(text,
                                                                     pos)
            if m is None:
                break
            pos = m.end()
        else:
            # array index: land on the part-th element object
            for _ in range(part):
                j = text.find("{", pos)
                if j < 0:
                    break
                pos = j + 1
    return text.count("\n", 0, pos) + 1


class _Reader:
    """Walks a parsed JSON tree; every failure names the path and line."""

    def __init__(self, text: str, label: str):
        self.text = text
        self.label = label

    def fail(self, path, msg):
        dotted = ".".join(str(p) for p in path) or "scene"
        raise SceneError(
            f"{self.label}:{_line_of(self.text, path)}: {dotted}: {msg}")

    def obj(self, node, path, required, optional=()):
        if not isinstance(node, dict):
            self.fail(path, "expected an object")
        for key in node:
            if key not in required and key not in optional:
                self.fail(path + (key,), "unknown field")
        for key in required:
            if key not in node:
                self.fail(path, f"missing required field '{key}'")
        return node

    def num(self, node, path, positive=False, lo=None, hi=None):
        if isinstance(node, bool) or not isinstance(node, (int, float)):
            self.fail(path, "expected a number")
        v = float(node)
        if positive and v <= 0:
            self.fail(path, "must be positive")
        if lo is not None and v < lo:
            self.fail(path, f"must be >= {lo}")
        if hi is not None and v > hi:
            self.fail(path, f"must be <= {hi}")
        return v

    def integer(self, node, path, lo=None):
        if isinstance(node, bool) or not isinstance(node, int):
            self.fail(path, "expected an integer")
        if lo is not None and node < lo:
            self.fail(path, f"must be >= {lo}")
        return int(node)

    def string(self, node, path):
        if not isinstance(node, str):
            self.fail(path, "expected a string")
        return node

    def choice(self, node, path, options):
        if node not in options:
            self.fail(path, f"expected one of {sorted(options)}")
        return node

    def vec(self, node, path, n):
        ok = isinstance(node, list) and len(node) == n and all(
            isinstance(v, (int, float)) and not isinstance(v, bool)
            for v in node)
        if not ok:
            self.fail(path, f"expected a list of {n} numbers")
        return np.asarray(node, dtype=np.float64)

    def points(self, node, path, d, at_least=0):
        if not isinstance(node, list) or len(node) < at_least:
            self.fail(path, f"expected a list of at least {at_least} points")
        if not node:
            return np.zeros((0, d))
        return np.stack([self.vec(p, path, d) for p in node])


# ---------------------------------------------------------------------------
# scene
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scene:
    """Validated scene description; builder methods derive runtime objects."""

    name: str
    dimension: int
    domain: BoxDomain | PolygonDomain
    family: InterfaceFamily
    alpha: float
    lift_mode: str
    s: float
    cut_vertices: np.ndarray | None   # (m, 2) polyline, combined mode only
    material: MaterialField
    young: float
    poisson: float
    spec: FieldSpec
    net_seed: int
    training: TrainConfig
    h: float
    inner_iterations: int
    max_halvings: int
    n_cubature: int
    handle_specs: tuple               # normalized dicts, see make_handles
    tracers: np.ndarray               # (t, d)
    seed: int

    # -- builders -----------------------------------------------------------

    def train_problem(self) -> TrainProblem:
        cut = None
        if self.cut_vertices is not None:
            cut = polyline(self.cut_vertices)
        return TrainProblem(domain=self.domain, family=self.family, s=self.s,
                            lift_mode=self.lift_mode, cut=cut,
                            material=self.material)

    def network(self) -> FieldNetwork:
        return init_network(self.spec, self.net_seed)

    def train(self, log_every: int = 0, trace_path=None):
        """Fresh network trained per the scene's config: (net, trace)."""
        return train_basis(self.train_problem(), self.network(),
                           self.training, trace_path=trace_path,
                           log_every=log_every)

    def make_handles(self) -> list:
        out = []
        for spec in self.handle_specs:
            if spec["kind"] == "pin":
                out.append(pin_handle(spec["point"], spec["target"],
                                      spec["stiffness"]))
            elif spec["kind"] == "pair":
                out.append(pair_handle(spec["p"], spec["q"],
                                       spec["stiffness"], spec.get("rest")))
            else:
                out.append(gravity_handle(spec["g"], spec["density"]))
        return out

    def simulation(self, net=None, **overrides) -> Simulation:
        kw = dict(problem=self.train_problem(),
                  net=self.network() if net is None else net,
                  alpha=self.alpha, h=self.h, n_cubature=self.n_cubature,
                  seed=self.seed, handles=self.make_handles(),
                  young=self.young, poisson=self.poisson,
                  tracers=self.tracers if self.tracers.size else None,
                  inner_iterations=self.inner_iterations,
                  max_halvings=self.max_halvings)
        kw.update(overrides)
        return Simulation(**kw)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        if isinstance(self.domain, BoxDomain):
            domain = {"kind": "box", "lo": self.domain.lo.tolist(),
                      "hi": self.domain.hi.tolist()}
        else:
            domain = {"kind": "polygon",
                      "vertices": self.domain.vertices.tolist()}
        if self.material.kind == "uniform":
            material = {"kind": "uniform", "w": self.material.w_uniform}
        else:
            material = {"kind": "interface_side",
                        "w_neg": self.material.w_neg,
                        "w_pos": self.material.w_pos}
        out = {
            "version": SCENE_VERSION,
            "name": self.name,
            "dimension": self.dimension,
            "domain": domain,
            "interface": {"family": self.family.kind,
                          "alpha_range": list(self.family.alpha_range),
                          "alpha": self.alpha},
            "lift": {"mode": self.lift_mode, "s": self.s},
            "material": material,
            "elasticity": {"young": self.young, "poisson": self.poisson},
            "network": {"k": self.spec.k, "width": self.spec.width,
                        "layers": self.spec.layers,
                        "omega0": self.spec.omega0,
                        "n_freq": self.spec.n_freq, "seed": self.net_seed},
            "training": {"epochs": self.training.epochs,
                         "batch": self.training.batch,
                         "alpha_draws": self.training.alpha_draws,
                         "lr": self.training.lr,
                         "lr_drop": self.training.lr_drop,
                         "lam_g": self.training.lam_g,
                         "loss": self.training.loss,
                         "seed": self.training.seed,
                         "alphas": None if self.training.alphas is None
                         else list(self.training.alphas)},
            "integrator": {"h": self.h,
                           "inner_iterations": self.inner_iterations,
                           "max_halvings": self.max_halvings,
                           "n_cubature": self.n_cubature},
            "handles": [dict(spec) for spec in self.handle_specs],
            "tracers": self.tracers.tolist(),
            "seed": self.seed,
        }
        if self.cut_vertices is not None:
            out["cut"] = self.cut_vertices.tolist()
        # emitted only when set so dicts of older scenes hash unchanged
        if self.training.lam_alpha:
            out["training"]["lam_alpha"] = self.training.lam_alpha
        return out


_TOP_REQUIRED = ("version", "dimension", "domain", "interface", "lift",
                 "material", "elasticity", "network", "integrator")
_TOP_OPTIONAL = ("name", "cut", "training", "handles", "tracers", "seed")


def _parse_domain(r: _Reader, node, d: int):
    path = ("domain",)
    if not isinstance(node, dict) or "kind" not in node:
        r.fail(path, "expected an object with a 'kind' field")
    kind = r.choice(node["kind"], path + ("kind",), ("box", "polygon"))
    if kind == "box":
        r.obj(node, path, ("kind", "lo", "hi"))
        lo = r.vec(node["lo"], path + ("lo",), d)
        hi = r.vec(node["hi"], path + ("hi",), d)
        try:
            return BoxDomain(lo, hi)
        except ValueError as e:
            r.fail(path, str(e))
    r.obj(node, path, ("kind", "vertices"))
    if d != 2:
        r.fail(path + ("kind",), "polygon domains are 2D only")
    verts = r.points(node["vertices"], path + ("vertices",), 2, at_least=3)
    try:
        return PolygonDomain(verts)
    except ValueError as e:
        r.fail(path, str(e))


def _parse_interface(r: _Reader, node, d: int):
    path = ("interface",)
    r.obj(node, path, ("family", "alpha_range", "alpha"))
    kind = r.choice(node["family"], path + ("family",), FAMILY_KINDS)
    rng = r.vec(node["alpha_range"], path + ("alpha_range",), 2)
    if rng[1] < rng[0]:
        r.fail(path + ("alpha_range",), "empty alpha range")
    fam = family(kind, (rng[0], rng[1]))
    if fam.mesh(rng[0]).dimension != d:
        r.fail(path + ("family",),
               f"family '{kind}' does not live in dimension {d}")
    alpha = r.num(node["alpha"], path + ("alpha",))
    if not rng[0] <= alpha <= rng[1]:
        r.fail(path + ("alpha",), "initial alpha outside alpha_range")
    return fam, alpha


def _parse_material(r: _Reader, node):
    path = ("material",)
    if not isinstance(node, dict) or "kind" not in node:
        r.fail(path, "expected an object with a 'kind' field")
    kind = r.choice(node["kind"], path + ("kind",),
                    ("uniform", "interface_side"))
    if kind == "uniform":
        r.obj(node, path, ("kind", "w"))
        w = r.num(node["w"], path + ("w",), positive=True)
        return MaterialField(kind="uniform", w_uniform=w)
    r.obj(node, path, ("kind", "w_neg", "w_pos"))
    w_neg = r.num(node["w_neg"], path + ("w_neg",), positive=True)
    w_pos = r.num(node["w_pos"], path + ("w_pos",), positive=True)
    return MaterialField(kind="interface_side", w_neg=w_neg, w_pos=w_pos)


def _parse_training(r: _Reader, node, alpha_range):
    path = ("training",)
    fields = ("epochs", "batch", "alpha_draws", "lr", "lr_drop", "lam_g",
              "lam_alpha", "loss", "seed", "alphas")
    r.obj(node, path, (), fields)
    base = TrainConfig()
    kw = {}
    for key, parse in (
            ("epochs", lambda v, p: r.integer(v, p, lo=1)),
            ("batch", lambda v, p: r.integer(v, p, lo=2)),
            ("alpha_draws", lambda v, p: r.integer(v, p, lo=1)),
            ("lr", lambda v, p: r.num(v, p, positive=True)),
            ("lr_drop", lambda v, p: r.num(v, p, positive=True)),
            ("lam_g", lambda v, p: r.num(v, p, lo=0.0)),
            ("lam_alpha", lambda v, p: r.num(v, p, lo=0.0)),
            ("loss", lambda v, p: r.choice(v, p, ("dirichlet", "hessian"))),
            ("seed", lambda v, p: r.integer(v, p, lo=0))):
        kw[key] = parse(node[key], path + (key,)) if key in node \
            else getattr(base, key)
    alphas = node.get("alphas")
    if alphas is not None:
        if not isinstance(alphas, list) or not alphas:
            r.fail(path + ("alphas",), "expected null or a non-empty list")
        vals = tuple(r.num(a, path + ("alphas",)) for a in alphas)
        lo, hi = alpha_range
        if any(not lo <= a <= hi for a in vals):
            r.fail(path + ("alphas",), "training alpha outside alpha_range")
        kw["alphas"] = vals
    return TrainConfig(**kw)


def _parse_handles(r: _Reader, node, d: int) -> tuple:
    path = ("handles",)
    if not isinstance(node, list):
        r.fail(path, "expected a list")
    out = []
    for i, spec in enumerate(node):
        p = path + (i,)
        if not isinstance(spec, dict) or "kind" not in spec:
            r.fail(p, "expected an object with a 'kind' field")
        kind = r.choice(spec["kind"], p + ("kind",),
                        ("pin", "pair", "gravity"))
        if kind == "pin":
            r.obj(spec, p, ("kind", "point", "target", "stiffness"))
            out.append({
                "kind": "pin",
                "point": r.vec(spec["point"], p + ("point",), d).tolist(),
                "target": r.vec(spec["target"], p + ("target",), d).tolist(),
                "stiffness": r.num(spec["stiffness"], p + ("stiffness",),
                                   lo=0.0)})
        elif kind == "pair":
            r.obj(spec, p, ("kind", "p", "q", "stiffness"), ("rest",))
            entry = {
                "kind": "pair",
                "p": r.vec(spec["p"], p + ("p",), d).tolist(),
                "q": r.vec(spec["q"], p + ("q",), d).tolist(),
                "stiffness": r.num(spec["stiffness"], p + ("stiffness",),
                                   lo=0.0)}
            if "rest" in spec:
                entry["rest"] = r.num(spec["rest"], p + ("rest",), lo=0.0)
            out.append(entry)
        else:
            r.obj(spec, p, ("kind", "g"), ("density",))
            out.append({
                "kind": "gravity",
                "g": r.vec(spec["g"], p + ("g",), d).tolist(),
                "density": r.num(spec["density"], p + ("density",),
                                 positive=True) if "density" in spec
                else 1.0})
    return tuple(out)


def parse_scene(text: str, label: str = "<scene>") -> Scene:
    """Parse and validate scene JSON; every error carries a line number."""
    try:
        root = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneError(f"{label}:{e.lineno}: invalid JSON: {e.msg}") \
            from None
    r = _Reader(text, label)
    r.obj(root, (), _TOP_REQUIRED, _TOP_OPTIONAL)

    version = r.integer(root["version"], ("version",))
    if version != SCENE_VERSION:
        r.fail(("version",), f"unsupported scene version {version} "
                             f"(this build reads {SCENE_VERSION})")
    name = r.string(root.get("name", ""), ("name",))
    d = r.integer(root["dimension"], ("dimension",), lo=1)
    if d > 3:
        r.fail(("dimension",), "must be 1, 2, or 3")

    domain = _parse_domain(r, root["domain"], d)
    fam, alpha = _parse_interface(r, root["interface"], d)

    lift = r.obj(root["lift"], ("lift",), ("mode", "s"))
    mode = r.choice(lift["mode"], ("lift", "mode"), MODES)
    s = r.num(lift["s"], ("lift", "s"), positive=True)

    cut = None
    if "cut" in root:
        if mode != "combined":
            r.fail(("cut",), "cut polyline requires 'combined' lift mode")
        cut = r.points(root["cut"], ("cut",), 2, at_least=2)
    elif mode == "combined":
        r.fail(("lift", "mode"), "'combined' lift mode needs a cut polyline")
    if mode == "combined" and d != 2:
        r.fail(("lift", "mode"), "'combined' lift mode is 2D only")

    material = _parse_material(r, root["material"])

    el = r.obj(root["elasticity"], ("elasticity",), ("young", "poisson"))
    young = r.num(el["young"], ("elasticity", "young"), positive=True)
    poisson = r.num(el["poisson"], ("elasticity", "poisson"))
    if not -1.0 < poisson < 0.5:
        r.fail(("elasticity", "poisson"), "must lie in (-1, 0.5)")

    netn = r.obj(root["network"], ("network",), ("k",),
                 ("width", "layers", "omega0", "n_freq", "seed"))
    npath = ("network",)
    spec = FieldSpec(
        dimension=d,
        lifted=2 if mode == "combined" else 1,
        k=r.integer(netn["k"], npath + ("k",), lo=1),
        width=r.integer(netn.get("width", 128), npath + ("width",), lo=1),
        layers=r.integer(netn.get("layers", 5), npath + ("layers",), lo=2),
        omega0=r.num(netn.get("omega0", 30.0), npath + ("omega0",),
                     positive=True),
        n_freq=r.integer(netn.get("n_freq", 6), npath + ("n_freq",), lo=0))
    net_seed = r.integer(netn.get("seed", 0), npath + ("seed",), lo=0)

    training = _parse_training(r, root.get("training", {}),
                               fam.alpha_range)

    integ = r.obj(root["integrator"], ("integrator",), ("h",),
                  ("inner_iterations", "max_halvings", "n_cubature"))
    ipath = ("integrator",)
    h = r.num(integ["h"], ipath + ("h",), positive=True)
    inner = r.integer(integ.get("inner_iterations", 64),
                      ipath + ("inner_iterations",), lo=1)
    halvings = r.integer(integ.get("max_halvings", 8),
                         ipath + ("max_halvings",), lo=0)
    n_cub = r.integer(integ.get("n_cubature", 1024),
                      ipath + ("n_cubature",), lo=1)

    handles = _parse_handles(r, root.get("handles", []), d)
    tracers = r.points(root.get("tracers", []), ("tracers",), d)
    seed = r.integer(root.get("seed", 0), ("seed",), lo=0)

    return Scene(name=name, dimension=d, domain=domain, family=fam,
                 alpha=alpha, lift_mode=mode, s=s, cut_vertices=cut,
                 material=material, young=young, poisson=poisson, spec=spec,
                 net_seed=net_seed, training=training, h=h,
                 inner_iterations=inner, max_halvings=halvings,
                 n_cubature=n_cub, handle_specs=handles, tracers=tracers,
                 seed=seed)


def load_scene(path) -> Scene:
    with open(path) as fh:
        text = fh.read()
    return parse_scene(text, label=str(path))


def save_scene(scene: Scene, path):
    with open(path, "w") as fh:
        json.dump(scene.to_dict(), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------

def fixture_names() -> tuple:
    root = resources.files("creaselift") / "fixtures"
    return tuple(sorted(p.name[:-5] for p in root.iterdir()
                        if p.name.endswith(".json")))


def load_fixture(name: str) -> Scene:
    path = resources.files("creaselift") / "fixtures" / f"{name}.json"
    if not path.is_file():
        raise ValueError(
            f"unknown fixture '{name}'; available: {list(fixture_names())}")
    return parse_scene(path.read_text(), label=f"fixtures/{name}.json")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def save_checkpoint(path, net: FieldNetwork):
    """Write weights plus a self-describing descriptor (architecture, scene
    metadata, weight count, sha256 of the weight bytes)."""
    flat = params_to_flat(net.params)
    spec = net.spec
    desc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": {"dimension": spec.dimension, "lifted": spec.lifted,
                 "k": spec.k, "width": spec.width, "layers": spec.layers,
                 "omega0": spec.omega0, "n_freq": spec.n_freq,
                 "identity": spec.identity},
        "meta": _jsonable(net.meta),
        "count": int(flat.size),
        "sha256": hashlib.sha256(flat.tobytes()).hexdigest(),
    }
    with open(path, "wb") as fh:
        np.savez(fh, descriptor=np.array(json.dumps(desc)), weights=flat)


def load_checkpoint(path, expect: FieldSpec | None = None) -> FieldNetwork:
    """Load and validate a checkpoint; `expect` additionally pins the
    architecture (a wrong-k file is rejected before weights are reshaped)."""
    try:
        data = np.load(path, allow_pickle=False)
    except Exception as e:
        raise CheckpointError(f"unreadable checkpoint: {e}") from None
    with data:
        if "descriptor" not in data or "weights" not in data:
            raise CheckpointError(
                "not a checkpoint (descriptor or weights missing)")
        try:
            desc = json.loads(str(data["descriptor"]))
            flat = np.asarray(data["weights"], dtype=np.float64)
        except json.JSONDecodeError:
            raise CheckpointError("corrupted checkpoint descriptor") \
                from None
        except ValueError as e:
            # npz members load lazily, so pickled payloads surface here
            raise CheckpointError(f"unreadable checkpoint: {e}") from None
    if desc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a creaselift checkpoint")
    version = desc.get("version")
    if not isinstance(version, int) or version > CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {version} not readable by this build "
            f"(reads <= {CHECKPOINT_VERSION})")
    if hashlib.sha256(flat.tobytes()).hexdigest() != desc.get("sha256"):
        raise CheckpointError("corrupted checkpoint (weight checksum "
                              "mismatch)")
    try:
        spec = FieldSpec(**desc["spec"])
    except TypeError:
        raise CheckpointError("corrupted checkpoint descriptor") from None
    if expect is not None and spec != expect:
        raise CheckpointError(
            f"checkpoint architecture k={spec.k} d={spec.dimension} "
            f"lifted={spec.lifted} does not match the scene "
            f"(k={expect.k} d={expect.dimension} lifted={expect.lifted})")
    try:
        params = flat_to_params(spec, flat)
    except ValueError as e:
        raise CheckpointError(str(e)) from None
    return FieldNetwork(spec=spec, params=params,
                        meta=desc.get("meta", {}))


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def _g17(v: float) -> str:
    return format(float(v), ".17g")


def export_trajectory(frames, path):
    """One text line per frame: step index, alpha, flat z, then tracer
    coordinates. The header pins k, d, and the tracer count; floats are
    written with 17 significant digits (exact float64 round trip)."""
    frames = list(frames)
    if frames:
        k, d = frames[0].z.shape[0], frames[0].z.shape[1]
        t = frames[0].tracers.shape[0]
    else:
        k = d = t = 0
    with open(path, "w") as fh:
        fh.write(f"{TRAJECTORY_FORMAT} {TRAJECTORY_VERSION} "
                 f"k={k} d={d} tracers={t}\n")
        for fr in frames:
            if fr.z.shape != (k, d, d + 1) or fr.tracers.shape != (t, d):
                raise ValueError("inconsistent frame shapes in trajectory")
            cols = [str(int(fr.step)), _g17(fr.alpha)]
            cols += [_g17(v) for v in fr.z.ravel()]
            cols += [_g17(v) for v in fr.tracers.ravel()]
            fh.write(" ".join(cols) + "\n")


_TRAJ_HEAD = re.compile(
    rf"^{TRAJECTORY_FORMAT} (\d+) k=(\d+) d=(\d+) tracers=(\d+)$")


def import_trajectory(path) -> list:
    """Inverse of export_trajectory; returns Frame records (notes empty)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}:1: empty file (missing trajectory header)")
    m = _TRAJ_HEAD.match(lines[0])
    if m is None:
        raise ValueError(f"{path}:1: not a trajectory file")
    version, k, d, t = map(int, m.groups())
    if version > TRAJECTORY_VERSION:
        raise ValueError(f"{path}:1: trajectory version {version} not "
                         f"readable by this build "
                         f"(reads <= {TRAJECTORY_VERSION})")
    want = 2 + k * d * (d + 1) + t * d
    frames = []
    for i, line in enumerate(lines[1:], start=2):
        tok = line.split()
        if len(tok) != want:
            raise ValueError(
                f"{path}:{i}: expected {want} fields, got {len(tok)}")
        vals = np.array([float(v) for v in tok[2:]])
        frames.append(Frame(step=int(tok[0]), alpha=float(tok[1]),
                            z=vals[:k * d * (d + 1)].reshape(k, d, d + 1),
                            tracers=vals[k * d * (d + 1):].reshape(t, d)))
    return frames
