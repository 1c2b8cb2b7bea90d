"""Plain-text scenario files.

Format::

    # comment
    horizon = 3
    p_false_alarm = 0.05
    detector = 1

    [subsystem 1]
    A:
      1 0 -1
      0 1 -1
      1 1  1
    B:
      1 0
      0 1
      0 0
    C = I
    Ba:
      1
      0
      0
    Sigma_w = 0.5 I
    Sigma_v = I
    Sigma_x0 = I

    [mechanism 2 full]
    S = I
    Sigma_r = 0 I

    [attack]
    target = 1
    value = 2500

A line ``key:`` opens a matrix whose rows follow, one per line. A line
``key = ...`` gives a scalar or a matrix shorthand: ``I`` / ``c I`` (size
inferred), ``I k`` / ``c I k``, ``zeros r c`` or ``diag a b ...``.
Subsystem and generator numbers in files are 1-based. Mechanism sections
``[mechanism j NAME]`` group into sets by NAME, in order of appearance.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import InvalidInputError
from .privacy import PrivacyMechanism
from .system import AttackSignal, InterconnectedSystem, SubsystemModel


class ConfigError(InvalidInputError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line else msg)


@dataclass
class ScenarioConfig:
    """A loaded scenario; indices are 0-based."""

    system: InterconnectedSystem
    mechanism_sets: dict[str, dict[int, PrivacyMechanism]]
    horizon: int = 1
    p_false_alarm: float = 0.05
    detector: int = 0
    attack: AttackSignal | None = None
    name: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def set_names(self) -> list[str]:
        return list(self.mechanism_sets)


_KEYS = {
    "global": {"name", "horizon", "p_false_alarm", "detector"},
    "system": {"name", "horizon", "p_false_alarm", "detector"},
    "subsystem": {"A", "B", "C", "Ba", "Sigma_w", "Sigma_v", "Sigma_x0"},
    "mechanism": {"S", "Sigma_r"},
    "attack": {"target", "value", "values"},
}
_SECTION = re.compile(r"^\[\s*([A-Za-z_]+)\s*(\d+)?\s*([^\]\s]*)\s*\]$")


def _parse_raw(text: str):
    """Sections as ``(kind, number, label, {key: (value, line)})``."""
    sections = [("global", None, "", {})]
    current_matrix = None
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            sections.append((m.group(1).lower(), int(m.group(2)) if m.group(2) else None, m.group(3), {}))
            current_matrix = None
            continue
        entries = sections[-1][3]
        if line.endswith(":") and "=" not in line:
            key = line[:-1].strip()
            entries[key] = ([], ln)
            current_matrix = key
            continue
        if "=" in line:
            key, val = (s.strip() for s in line.split("=", 1))
            entries[key] = (val, ln)
            current_matrix = None
            continue
        if current_matrix is None:
            raise ConfigError(f"unexpected line {raw.strip()!r}", ln)
        try:
            entries[current_matrix][0].append([float(t) for t in line.split()])
        except ValueError:
            raise ConfigError(f"non-numeric matrix row {raw.strip()!r}", ln) from None
    for kind, num, _, entries in sections:
        allowed = _KEYS.get(kind)
        if allowed is None:
            raise ConfigError(f"unknown section [{kind}]")
        for key, (_, ln) in entries.items():
            if key not in allowed:
                where = "top level" if kind == "global" else f"[{kind}{' ' + str(num) if num else ''}]"
                raise ConfigError(f"unknown key {key!r} in {where}", ln)
    return sections


def _matrix(value, ln, key, shape_hint=None) -> np.ndarray:
    if isinstance(value, list):
        if not value:
            raise ConfigError(f"matrix {key} has no rows", ln)
        widths = {len(r) for r in value}
        if len(widths) != 1:
            raise ConfigError(f"matrix {key} has ragged rows", ln)
        return np.array(value, dtype=float)
    toks = value.split()
    try:
        if toks and toks[0] == "zeros":
            r, c = int(toks[1]), int(toks[2])
            return np.zeros((r, c))
        if toks and toks[0] == "diag":
            return np.diag([float(t) for t in toks[1:]])
        if "I" in toks:
            i = toks.index("I")
            scale = float(toks[0]) if i == 1 else 1.0
            if i > 1:
                raise ValueError
            if len(toks) > i + 1:
                dim = int(toks[i + 1])
            elif shape_hint is not None:
                dim = shape_hint
            else:
                raise ConfigError(f"cannot infer the size of {key}; write 'I k'", ln)
            return scale * np.eye(dim)
        return np.array([[float(t) for t in toks]])
    except (ValueError, IndexError):
        raise ConfigError(f"cannot read {key} = {value!r}", ln) from None


def _scalar(entries, key, cast, default):
    if key not in entries:
        return default
    val, ln = entries[key]
    if isinstance(val, list):
        raise ConfigError(f"{key} must be a scalar", ln)
    try:
        return cast(val)
    except ValueError:
        raise ConfigError(f"cannot read {key} = {val!r}", ln) from None


def _subsystem(entries, number) -> dict:
    def get(key, hint=None, required=True):
        if key not in entries:
            if required:
                raise ConfigError(f"subsystem {number}: missing {key}")
            return None
        val, ln = entries[key]
        return _matrix(val, ln, key, hint)

    A = get("A")
    n = A.shape[0]
    C = get("C", n)
    Ba = get("Ba", n, required=False)
    return dict(
        A=A,
        B=get("B", required=False),
        C=C,
        Ba=np.zeros((n, 0)) if Ba is None else Ba,
        Sigma_w=get("Sigma_w", n),
        Sigma_v=get("Sigma_v", C.shape[0]),
        Sigma_x0=get("Sigma_x0", n, required=False),
    )


def parse_config(text: str) -> ScenarioConfig:
    sections = _parse_raw(text)
    glob = sections[0][3]
    subs, mech_raw, attack_entries = {}, [], None
    for kind, num, label, entries in sections[1:]:
        if kind == "subsystem":
            if num is None or num < 1:
                raise ConfigError("subsystem sections need a 1-based number")
            if num in subs:
                raise ConfigError(f"subsystem {num} defined twice")
            subs[num] = _subsystem(entries, num)
        elif kind == "mechanism":
            if num is None:
                raise ConfigError("mechanism sections need a subsystem number")
            mech_raw.append((num, label or "default", entries))
        elif kind == "attack":
            attack_entries = entries
        elif kind == "system":
            glob.update(entries)
        else:
            raise ConfigError(f"unknown section [{kind}]")
    if sorted(subs) != list(range(1, len(subs) + 1)) or not subs:
        raise ConfigError("subsystems must be numbered 1..N without gaps")

    ns = [subs[k]["A"].shape[0] for k in sorted(subs)]
    models = []
    for k in sorted(subs):
        d = subs[k]
        n = d["A"].shape[0]
        if d["B"] is None:
            d["B"] = np.zeros((n, sum(ns) - n))
        if d["Sigma_x0"] is None:
            d["Sigma_x0"] = np.zeros((n, n))
        try:
            models.append(SubsystemModel(**d))
        except InvalidInputError as exc:
            raise ConfigError(f"subsystem {k}: {exc}") from None
    system = InterconnectedSystem(models)

    sets: dict[str, dict[int, PrivacyMechanism]] = {}
    for num, label, entries in mech_raw:
        j = num - 1
        if not 0 <= j < len(system):
            raise ConfigError(f"mechanism for unknown subsystem {num}")
        p = system[j].p
        if "S" not in entries:
            raise ConfigError(f"mechanism {num} {label}: missing S")
        S = _matrix(*entries["S"], "S", p)
        if S.shape[1] != p:
            raise ConfigError(f"mechanism {num} {label}: S must have {p} columns, got {S.shape[1]}", entries["S"][1])
        Sr = _matrix(*entries["Sigma_r"], "Sigma_r", S.shape[0]) if "Sigma_r" in entries else None
        try:
            sets.setdefault(label, {})[j] = PrivacyMechanism(S, Sr)
        except InvalidInputError as exc:
            raise ConfigError(f"mechanism {num} {label}: {exc}") from None

    horizon = _scalar(glob, "horizon", int, 1)
    detector = _scalar(glob, "detector", int, 1) - 1
    if not 0 <= detector < len(system):
        raise ConfigError(f"detector must be between 1 and {len(system)}")
    attack = None
    if attack_entries is not None:
        target = _scalar(attack_entries, "target", int, detector + 1) - 1
        if not 0 <= target < len(system):
            raise ConfigError("attack target out of range")
        r = system[target].r
        if "values" in attack_entries:
            vals = _matrix(*attack_entries["values"], "values")
            if vals.shape == (1, horizon * r) and horizon > 1:
                vals = vals.reshape(horizon, r)
        else:
            v = _scalar(attack_entries, "value", float, None)
            if v is None:
                raise ConfigError("[attack] needs value or values")
            vals = np.full((horizon, r), v)
        attack = AttackSignal(target, vals)
    return ScenarioConfig(
        system=system,
        mechanism_sets=sets,
        horizon=horizon,
        p_false_alarm=_scalar(glob, "p_false_alarm", float, 0.05),
        detector=detector,
        attack=attack,
        name=_scalar(glob, "name", str, ""),
    )


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def builtin_config(name: str) -> ScenarioConfig:
    """Shipped scenario by name (``masking``, ``powergrid``, ``random``)."""
    fname = f"{name}.cfg"
    path = resources.files("secpriv") / "data" / fname
    if not path.is_file():
        raise ConfigError(f"unknown built-in scenario {name!r}")
    return parse_config(path.read_text())


def _fmt_matrix(key: str, A: np.ndarray) -> list[str]:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return [f"{key} = zeros {A.shape[0]} {A.shape[1]}"]
    if A.shape[0] == A.shape[1] and np.array_equal(A, A[0, 0] * np.eye(A.shape[0])):
        return [f"{key} = {float(A[0, 0])!r} I {A.shape[0]}"]
    return [f"{key}:"] + ["  " + " ".join(repr(float(x)) for x in row) for row in A]


def format_config(cfg: ScenarioConfig, header: str = "") -> str:
    """Inverse of `parse_config` (exact: floats are written with repr)."""
    out = [f"# {line}" for line in header.splitlines()]
    if cfg.name:
        out.append(f"name = {cfg.name}")
    out += [f"horizon = {cfg.horizon}", f"p_false_alarm = {cfg.p_false_alarm!r}", f"detector = {cfg.detector + 1}"]
    for i, s in enumerate(cfg.system.subsystems, 1):
        out += ["", f"[subsystem {i}]"]
        for key in ("A", "B", "C", "Ba", "Sigma_w", "Sigma_v", "Sigma_x0"):
            out += _fmt_matrix(key, getattr(s, key))
    for name, mechs in cfg.mechanism_sets.items():
        for j, m in sorted(mechs.items()):
            out += ["", f"[mechanism {j + 1} {name}]"]
            out += _fmt_matrix("S", m.S) + _fmt_matrix("Sigma_r", m.Sigma_r)
    if cfg.attack is not None:
        out += ["", "[attack]", f"target = {cfg.attack.target + 1}"]
        out += _fmt_matrix("values", cfg.attack.values)
    return "\n".join(out) + "\n"
