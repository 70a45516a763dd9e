"""Static figures from the CSV tables written by the CLI.

Each ``plot_*`` function reads one table, validates its columns and writes
one image. The table kind is detected from its columns by ``plot_csv``.
"""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import SchemaError  # noqa: E402
from .tables import read_csv  # noqa: E402

KERNEL_COLUMNS = ("kernel_id", "tau", "tau_prime", "f_hz", "value")
COV_COLUMNS = ("kind", "tau", "tau_prime", "value")
ETA_COLUMNS = ("eta_megn", "eta_egn")
PSD_COLUMNS = ("f_hz", "g_egn", "g_total")


def _num(rows, col, path):
    out = []
    for r in rows:
        v = r[col]
        if v is not None and not isinstance(v, (int, float)):
            raise SchemaError(f"{path}: column {col!r} holds non-numeric value {v!r}", column=col)
        out.append(np.nan if v is None else float(v))
    return np.asarray(out)


def kernel_heatmap_data(rows, kernel_id, path="<rows>"):
    """(taus, f, Z) for a single-delay kernel, Z normalized to max 1.0.

    Z is divided by its largest value; when a kernel is non-positive
    everywhere it is divided by its largest magnitude instead.
    """
    sel = [r for r in rows if r["kernel_id"] == kernel_id and r["tau"] is not None and r["tau_prime"] is None]
    if not sel:
        raise SchemaError(f"{path}: no single-delay rows for kernel {kernel_id!r}", column="kernel_id")
    tau = _num(sel, "tau", path).astype(int)
    f = _num(sel, "f_hz", path)
    val = _num(sel, "value", path)
    taus = np.unique(tau)
    fs = np.unique(f)
    Z = np.full((taus.size, fs.size), np.nan)
    Z[np.searchsorted(taus, tau), np.searchsorted(fs, f)] = val
    top = np.nanmax(Z)
    scale = top if top > 0 else np.nanmax(np.abs(Z))
    if not scale > 0:
        raise SchemaError(f"{path}: kernel {kernel_id!r} is identically zero", column="value")
    return taus, fs, Z / scale


def plot_kernels(path, out):
    _, rows = read_csv(path, KERNEL_COLUMNS)
    ids = sorted({r["kernel_id"] for r in rows if r["tau"] is not None and r["tau_prime"] is None})
    if not ids:
        raise SchemaError(f"{path}: no single-delay kernel rows", column="tau")
    ncol = min(3, len(ids))
    nrow = -(-len(ids) // ncol)
    fig, axs = plt.subplots(nrow, ncol, figsize=(4.2 * ncol, 3.2 * nrow), squeeze=False)
    for ax, kid in zip(axs.flat, ids):
        taus, fs, Z = kernel_heatmap_data(rows, kid, path)
        im = ax.pcolormesh(fs / 1e9, taus, Z, shading="nearest", cmap="viridis")
        ax.set_title(f"{kid} (normalized)")
        ax.set_xlabel("f [GHz]")
        ax.set_ylabel("tau [symbols]")
        fig.colorbar(im, ax=ax)
    for ax in list(axs.flat)[len(ids):]:
        ax.set_visible(False)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return out


def plot_covariances(path, out):
    """Pair kinds against tau, K_X3(0, tau), and the triple kinds as maps."""
    _, rows = read_csv(path, COV_COLUMNS)
    sources = sorted({r.get("source") or "" for r in rows})
    fig, axs = plt.subplots(2, 4, figsize=(16, 7))
    flat = list(axs.flat)
    for ax, kind in zip(flat[:4], ("S1", "S2", "X1", "X2")):
        for src in sources:
            sel = [r for r in rows if r["kind"] == kind and (r.get("source") or "") == src]
            if sel:
                ax.plot(_num(sel, "tau", path), _num(sel, "value", path), ".-", ms=3, label=src or None)
        ax.set_title(f"K_{kind}(tau)")
        ax.set_xlabel("tau")
    ax = flat[4]
    for src in sources:
        sel = [r for r in rows if r["kind"] == "X3" and r["tau"] == 0 and (r.get("source") or "") == src]
        if sel:
            ax.plot(_num(sel, "tau_prime", path), _num(sel, "value", path), ".-", ms=3, label=src or None)
    ax.set_title("K_X3(0, tau)")
    ax.set_xlabel("tau")
    for ax, kind in zip(flat[5:7], ("S3", "X3")):
        src = sources[0]
        sel = [r for r in rows if r["kind"] == kind and r["tau"] and (r.get("source") or "") == src]
        ax.set_title(f"K_{kind}(tau, tau')")
        if not sel:
            continue
        t = _num(sel, "tau", path).astype(int)
        tp = _num(sel, "tau_prime", path).astype(int)
        Z = np.full((t.max() + 1, tp.max() + 1), np.nan)
        Z[t, tp] = _num(sel, "value", path)
        im = ax.imshow(Z, origin="lower", aspect="auto", cmap="viridis")
        ax.set_xlabel("tau'")
        ax.set_ylabel("tau")
        fig.colorbar(im, ax=ax)
    flat[7].set_visible(False)
    if len(sources) > 1:
        flat[0].legend()
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return out


def _varying(rows, names):
    return [n for n in names if n in rows[0] and len({r[n] for r in rows}) > 1]


def plot_eta(path, out, x=None):
    """eta against the first varying sweep axis, one curve per combination of
    the others; simulated points are drawn as markers with error bars. A
    second figure maps the model error when two axes vary."""
    cols, rows = read_csv(path, ETA_COLUMNS)
    if not rows:
        raise SchemaError(f"{path}: no data rows", column="eta_megn")
    axes = ("blocklength", "mapping", "symbol_rate_gbd", "spans", "memory", "mode", "launch_power_dbm")
    vary = _varying(rows, axes)
    if x is None:
        x = vary[0] if vary else next((a for a in axes if a in cols), None)
    if x is None or x not in cols:
        raise SchemaError(f"{path}: missing x-axis column {x!r}", column=x)
    others = [a for a in vary if a != x]
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[a] for a in others), []).append(r)
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    has_sim = "eta_sim" in cols and any(r["eta_sim"] is not None for r in rows)
    for i, (key, sel) in enumerate(sorted(groups.items(), key=lambda kv: str(kv[0]))):
        sel = sorted(sel, key=lambda r: r[x])
        label = ", ".join(f"{a}={v}" for a, v in zip(others, key))
        c = f"C{i % 10}"
        xs = [r[x] for r in sel]
        ax.plot(xs, _num(sel, "eta_megn", path), "-", color=c, label=f"MEGN {label}".strip())
        ax.plot(xs, _num(sel, "eta_egn", path), ":", color=c, lw=1, label="EGN" if i == 0 else None)
        if has_sim:
            s = [r for r in sel if r["eta_sim"] is not None]
            err = [r.get("eta_sim_stderr") or 0.0 for r in s]
            ax.errorbar([r[x] for r in s], _num(s, "eta_sim", path), yerr=err, fmt="o", color=c, ms=4)
    if x in ("blocklength",):
        ax.set_xscale("log")
    ax.set_xlabel(x)
    ax.set_ylabel("eta [1/W^2]")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    outs = [out]
    if has_sim and "delta_eta" in cols and len(vary) >= 2:
        a, b = vary[0], vary[1]
        av = sorted({r[a] for r in rows})
        bv = sorted({r[b] for r in rows})
        Z = np.full((len(bv), len(av)), np.nan)
        for r in rows:
            if r["delta_eta"] is not None:
                Z[bv.index(r[b]), av.index(r[a])] = 100 * r["delta_eta"]
        fig, ax = plt.subplots(figsize=(6, 4.5))
        im = ax.imshow(Z, origin="lower", aspect="auto", cmap="magma")
        ax.set_xticks(range(len(av)), [str(v) for v in av])
        ax.set_yticks(range(len(bv)), [str(v) for v in bv])
        ax.set_xlabel(a)
        ax.set_ylabel(b)
        fig.colorbar(im, ax=ax, label="delta eta [%]")
        fig.tight_layout()
        root, ext = os.path.splitext(out)
        fig.savefig(root + "_error" + ext)
        plt.close(fig)
        outs.append(root + "_error" + ext)
    return outs if len(outs) > 1 else out


def plot_psd(path, out):
    cols, rows = read_csv(path, PSD_COLUMNS)
    f = _num(rows, "f_hz", path) / 1e9
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for c in ("g_total", "g_egn", "g_spt1", "g_xpt1", "g_xp", "g_spt2", "g_xpt2"):
        if c in cols:
            ax.plot(f, _num(rows, c, path), label=c)
    ax.set_xlabel("f [GHz]")
    ax.set_ylabel("PSD [W/Hz]")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return out


def detect_kind(columns):
    cols = set(columns)
    if "kernel_id" in cols:
        return "kernels"
    if "kind" in cols:
        return "covariances"
    if "eta_megn" in cols:
        return "eta"
    if "g_total" in cols:
        return "psd"
    return None


def plot_csv(path, out_dir, fmt="png"):
    """Plot one CSV, choosing the figure from its columns."""
    cols, _ = read_csv(path)
    kind = detect_kind(cols)
    if kind is None:
        raise SchemaError(f"{path}: unrecognized table; expected a kernel_id, kind, eta_megn or g_total column",
                          column="kernel_id")
    base = os.path.splitext(os.path.basename(path))[0]
    out = os.path.join(out_dir, f"{base}.{fmt}")
    fn = {"kernels": plot_kernels, "covariances": plot_covariances, "eta": plot_eta, "psd": plot_psd}[kind]
    return fn(path, out)
