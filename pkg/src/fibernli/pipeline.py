"""Config-driven runs: model predictions, simulations and parameter sweeps."""
from __future__ import annotations

import copy
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import _merge, config_hash, link_from, model_from, pulse_from, sim_from, validate
from .errors import ConfigError
from .megn import assemble, eta_and_snr, kernel_bank_for
from .shaping import ShapingScheme, make_composition
from .ssfm import SourceSpec, estimate_eta_sim
from .stats import MomentSet, analytic_covariances, symbol_moments

log = logging.getLogger(__name__)

# sweep axis name -> (config section, key)
AXES = {
    "blocklength": ("signal", "blocklength"),
    "mapping": ("signal", "mapping"),
    "symbol_rate_gbd": ("pulse", "symbol_rate_gbd"),
    "spans": ("link", "num_spans"),
    "memory": ("model", "memory"),
    "mode": ("model", "mode"),
    "launch_power_dbm": ("signal", "launch_power_dbm"),
}
OUTPUTS = ("eta", "snr", "psd", "covariances", "kernels")
SWEEP_COLUMNS = (
    "point", "blocklength", "mapping", "symbol_rate_gbd", "spans", "memory", "mode", "launch_power_dbm",
    "eta_megn", "eta_egn", "eta_sim", "eta_sim_stderr", "delta_eta", "snr_eff_db", "snr_opt_db",
)
PSD_COLUMNS = ("f_hz", "g_egn", "g_spt1", "g_spt2", "g_xpt1", "g_xpt2", "g_xp", "g_total")
COV_COLUMNS = ("kind", "tau", "tau_prime", "value", "stderr")


# --- signal statistics ----------------------------------------------------------------


def launch_power(cfg):
    return 1e-3 * 10 ** (cfg["signal"]["launch_power_dbm"] / 10)


def composition_from(cfg):
    s = cfg["signal"]
    try:
        return make_composition(s["pmf"], s["alphabet"], s["blocklength"])
    except ValueError as exc:
        raise ConfigError(f"invalid signal section: {exc}", key="signal.blocklength") from exc


def scheme_from(cfg):
    s = cfg["signal"]
    try:
        return ShapingScheme(composition_from(cfg), s["mapping"], launch_power(cfg))
    except ValueError as exc:
        raise ConfigError(f"invalid signal section: {exc}", key="signal.blocklength") from exc


def source_from(cfg):
    s = cfg["signal"]
    if s["source"] == "ccdm":
        return SourceSpec("ccdm", scheme_from(cfg))
    return SourceSpec(s["source"], pmf=tuple(s["pmf"]), alphabet=tuple(s["alphabet"]))


def iid_moments(pmf, alphabet, power):
    """Per-polarization moments for i.i.d. amplitudes drawn from ``pmf``."""
    p = np.asarray(pmf, dtype=float)
    u = np.asarray(alphabet, dtype=float)
    E2, E4, E6 = (float(p @ u**k) for k in (2, 4, 6))
    s = power / (2 * E2)
    amp = {2: E2 * s, 4: E4 * s**2, 6: E6 * s**3}
    sym = {2: 2 * amp[2], 4: 2 * amp[4] + 2 * amp[2] ** 2, 6: 2 * amp[6] + 6 * amp[4] * amp[2]}
    return MomentSet(amp, sym, sym[2])


def gaussian_moments(power):
    """Circular complex Gaussian: E|a|^4 = 2P^2, E|a|^6 = 6P^3."""
    return MomentSet(None, {2: power, 4: 2 * power**2, 6: 6 * power**3}, power)


def signal_statistics(cfg, max_tau=None):
    """(moments, covariances) of the configured source.

    i.i.d. and Gaussian sources have no temporal correlation, so the
    covariances are None and the model reduces to EGN (or GN).
    """
    s = cfg["signal"]
    P = launch_power(cfg)
    if s["source"] == "gaussian":
        return gaussian_moments(P), None
    if s["source"] == "iid":
        return iid_moments(s["pmf"], s["alphabet"], P), None
    sch = scheme_from(cfg)
    M = cfg["model"]["memory"] if max_tau is None else max_tau
    mom = symbol_moments(sch.composition, sch.mapping_h, power=P)
    cov = analytic_covariances(sch.composition, sch.mapping_h, 2 * M, 2 * M, power=P)
    return mom, cov


# --- model and simulator --------------------------------------------------------------


@dataclass
class ModelOutput:
    spectrum: object
    result: object
    spectrum_egn: object
    result_egn: object
    covariances: object


def run_model(cfg, workers=1):
    """MEGN prediction for the configured source plus the i.i.d. EGN
    reference with the same target PMF."""
    link, pulse, mcfg = link_from(cfg), pulse_from(cfg), model_from(cfg)
    mom, cov = signal_statistics(cfg)
    bank = kernel_bank_for(link, pulse, mcfg, workers=workers)
    spec = assemble(mcfg.mode, mom, cov, bank, mcfg.memory)
    res = eta_and_snr(spec, float(mom.sym_moments[2]), link, pulse)
    s = cfg["signal"]
    ref = gaussian_moments(launch_power(cfg)) if s["source"] == "gaussian" else iid_moments(
        s["pmf"], s["alphabet"], launch_power(cfg)
    )
    spec_egn = assemble(mcfg.mode, ref, None, bank, mcfg.memory)
    res_egn = eta_and_snr(spec_egn, float(ref.sym_moments[2]), link, pulse)
    return ModelOutput(spec, res, spec_egn, res_egn, cov)


def run_simulation(cfg, workers=1, seed=None):
    link, pulse = link_from(cfg), pulse_from(cfg)
    sim = sim_from(cfg, seed)
    out = estimate_eta_sim(source_from(cfg), link, pulse, sim, workers=workers)
    out.manifest["config_hash"] = config_hash(cfg)
    return out


# --- sweeps ---------------------------------------------------------------------------


def logspace_axis(start, stop, num, multiple_of=1):
    """Log-spaced integers rounded to multiples of ``multiple_of``, deduplicated."""
    vals = np.logspace(math.log10(start), math.log10(stop), int(num))
    out = []
    for v in vals:
        r = max(multiple_of, int(round(v / multiple_of)) * multiple_of)
        if r not in out:
            out.append(r)
    return out


def expand_axis(name, spec):
    """Axis values from a list, ``{range: [a, b(, step)]}`` (inclusive) or
    ``{logspace: [a, b, n], multiple_of: k}``."""
    key = f"sweep.axes.{name}"
    if isinstance(spec, (list, tuple)):
        vals = list(spec)
    elif isinstance(spec, dict) and "range" in spec:
        r = spec["range"]
        if not isinstance(r, (list, tuple)) or len(r) not in (2, 3):
            raise ConfigError(f"{key}: range needs [start, stop] or [start, stop, step]", key=key)
        step = r[2] if len(r) == 3 else 1
        if step <= 0:
            raise ConfigError(f"{key}: range step must be positive", key=key)
        vals = list(np.arange(r[0], r[1] + step / 2, step).tolist())
    elif isinstance(spec, dict) and "logspace" in spec:
        r = spec["logspace"]
        if not isinstance(r, (list, tuple)) or len(r) != 3 or r[0] <= 0 or r[1] < r[0] or r[2] < 1:
            raise ConfigError(f"{key}: logspace needs [start > 0, stop >= start, num >= 1]", key=key)
        vals = logspace_axis(r[0], r[1], r[2], spec.get("multiple_of", 1))
    else:
        raise ConfigError(f"{key}: expected a list, {{range: ...}} or {{logspace: ...}}", key=key)
    if not vals:
        raise ConfigError(f"{key}: axis is empty", key=key)
    return vals


@dataclass
class SweepSpec:
    """Cartesian grid over named axes (in the order given)."""

    axes: dict
    outputs: tuple = ("eta",)
    compare_sim: bool = False

    @classmethod
    def from_config(cls, cfg):
        sw = cfg["sweep"]
        axes = sw.get("axes") or {}
        if not isinstance(axes, dict) or not axes:
            raise ConfigError("sweep.axes must name at least one axis", key="sweep.axes")
        expanded = {}
        for name, spec in axes.items():
            if name not in AXES:
                raise ConfigError(f"unknown sweep axis {name!r}; choose from {sorted(AXES)}", key=f"sweep.axes.{name}")
            expanded[name] = expand_axis(name, spec)
        outputs = tuple(sw.get("outputs") or ("eta",))
        for o in outputs:
            if o not in OUTPUTS:
                raise ConfigError(f"unknown sweep output {o!r}; choose from {OUTPUTS}", key="sweep.outputs")
        return cls(expanded, outputs, bool(sw.get("compare_sim", False)))

    @property
    def size(self):
        return math.prod(len(v) for v in self.axes.values())

    def points(self):
        names = list(self.axes)
        for combo in itertools.product(*(self.axes[n] for n in names)):
            yield dict(zip(names, combo))

    def point_configs(self, cfg):
        """Validated configs for every grid point, in grid order."""
        out = []
        for pt in self.points():
            over = {}
            for name, v in pt.items():
                sec, k = AXES[name]
                over.setdefault(sec, {})[k] = v
            try:
                c = _merge(cfg, over)
                validate(c)
                if c["signal"]["source"] == "ccdm":
                    scheme_from(c)
            except ConfigError as exc:
                # attribute the failure to the axis that set the offending key
                name = next((n for n in pt if exc.key and exc.key == ".".join(AXES[n])), None)
                if name is None:
                    name = next((n for n in pt if exc.key and exc.key.startswith(AXES[n][0])), next(iter(pt)))
                raise ConfigError(f"sweep axis {name}={pt[name]!r}: {exc}", key=f"sweep.axes.{name}") from exc
            out.append(c)
        return out


def _sweep_point(args):
    index, cfg, outputs, compare_sim = args
    m = run_model(cfg)
    row = {
        "point": index,
        "blocklength": cfg["signal"]["blocklength"],
        "mapping": cfg["signal"]["mapping"],
        "symbol_rate_gbd": cfg["pulse"]["symbol_rate_gbd"],
        "spans": cfg["link"]["num_spans"],
        "memory": cfg["model"]["memory"],
        "mode": cfg["model"]["mode"],
        "launch_power_dbm": cfg["signal"]["launch_power_dbm"],
        "eta_megn": m.result.eta,
        "eta_egn": m.result_egn.eta,
        "eta_sim": None,
        "eta_sim_stderr": None,
        "delta_eta": None,
        "snr_eff_db": m.result.snr_eff_db,
        "snr_opt_db": m.result.snr_opt_db,
    }
    extra = {}
    if "psd" in outputs:
        extra["psd"] = m.spectrum.to_rows()
    if "covariances" in outputs and m.covariances is not None:
        extra["covariances"] = m.covariances.to_rows()
    if "kernels" in outputs:
        link, pulse, mcfg = link_from(cfg), pulse_from(cfg), model_from(cfg)
        extra["kernels"] = kernel_rows_from_bank(kernel_bank_for(link, pulse, mcfg))
    if compare_sim:
        sim = run_simulation(cfg)
        row["eta_sim"] = sim.eta
        row["eta_sim_stderr"] = sim.stderr
        row["delta_eta"] = abs(sim.eta - m.result.eta) / sim.eta
    return row, extra


def kernel_rows_from_bank(bank):
    """(kernel_id, tau, tau_prime, f_hz, value) rows of a kernel bank."""
    rows = []
    for i, f in enumerate(bank.f):
        for k, v in bank.phi.items():
            rows.append((k, None, None, float(f), float(v[i])))
        for k, v in bank.single.items():
            for t in range(v.shape[1]):
                rows.append((k, t, None, float(f), float(v[i, t])))
        for k, v in bank.double.items():
            for t in range(1, v.shape[1]):
                for tp in range(t + 1, v.shape[2]):
                    rows.append((k, t, tp, float(f), float(v[i, t, tp])))
    return rows


def run_sweep(spec, cfg, sink, workers=1):
    """Evaluate every grid point and hand rows to ``sink`` in grid order.

    ``sink(row, extra)`` is called once per point as results arrive, so a
    failure part-way leaves every earlier row written. Grid points run on a
    pool of at most ``workers`` processes.
    """
    configs = spec.point_configs(cfg)
    log.info("sweep: %d grid points over %s", len(configs), " x ".join(f"{k}[{len(v)}]" for k, v in spec.axes.items()))
    jobs = [(i, c, spec.outputs, spec.compare_sim) for i, c in enumerate(configs)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            for row, extra in ex.map(_sweep_point, jobs):
                sink(row, extra)
    else:
        for j in jobs:
            sink(*_sweep_point(j))
    return len(jobs)


def sweep_config(cfg, axes, outputs=("eta",), compare_sim=False):
    """Copy of ``cfg`` with the sweep section replaced."""
    c = copy.deepcopy(cfg)
    c["sweep"] = {"axes": axes, "outputs": list(outputs), "compare_sim": compare_sim}
    return c
