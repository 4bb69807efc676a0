import numpy as np

from frdealias.basis import reference_element
from frdealias.mesh import build_cartesian
from frdealias.physics import GasModel
from frdealias.plotting import (plot_convergence, plot_error, plot_field, plot_history,
                                plot_psd)

GAS = GasModel()


def png(path):
    return path.exists() and path.read_bytes()[:4] == b"\x89PNG"


def test_field_plots(tmp_path):
    for dim in (1, 2):
        mesh = build_cartesian(dim, [(0, 1)] * dim, [3] * dim, [True] * dim)
        el = reference_element(2, dim)
        x = mesh.map_to_physical(el.nodes)
        u = np.zeros(x.shape[:-1] + (dim + 2,))
        u[..., 0] = 1 + 0.1 * np.sin(2 * np.pi * x[..., 0])
        u[..., -1] = 2.5
        plot_field(tmp_path / f"f{dim}.png", u, mesh, el, GAS, "P", title="P")
        assert png(tmp_path / f"f{dim}.png")


def test_history_and_series_plots(tmp_path):
    recs = [{"t": t, "min_rho": 1.0, "min_p": 0.5, "max_zeta": z, "total_0": 1 + 1e-14 * t}
            for t, z in zip(range(5), (0, 0, 0.1, 0, 0.3))]
    plot_history(tmp_path / "h1.png", recs)
    plot_history(tmp_path / "h2.png", [dict(r, max_zeta=0.0) for r in recs])
    plot_error(tmp_path / "e.png", [0, 1, 2], [[1e-3, 1e-4], [2e-3, 2e-4], [3e-3, 3e-4]],
               labels=["rho", "E"])
    f = np.linspace(0, 1, 50)
    plot_psd(tmp_path / "p.png", f, 1 / (1 + f), peaks=[0.2])
    plot_convergence(tmp_path / "c.png", [1, 0.5, 0.25], [[1e-2, 1e-3, 1e-4]], orders=[3],
                     labels=["p=2"])
    for name in ("h1", "h2", "e", "p", "c"):
        assert png(tmp_path / f"{name}.png"), name
