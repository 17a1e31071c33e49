"""Benchmark: compiled assembly kernels vs the numpy fallback.

Times the three hot kernels on a 128x128 mesh (the largest desk-scale
instance) and one end-to-end forward solve per backend.  Run:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from doublephase import _kernels
from doublephase._kernels import numpy_backend
from doublephase.forward import ProblemSpec, solve_dirichlet
from doublephase.mesh import boundary_values, build_mesh
from doublephase.reconstruct import gaussian_bump
from doublephase.tensorops import ExponentPair


def timeit(fn, repeats=50):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(impl, mesh, values, a_elem, a_mat, f_elem):
    out = {}
    out["element_gradients"] = timeit(lambda: impl.element_gradients(
        mesh.grad_ops, mesh.triangles, values))
    out["double_phase_system"] = timeit(lambda: impl.double_phase_system(
        mesh.grad_ops, mesh.shape_products, mesh.triangles,
        mesh.element_area, a_elem, values, 2.0, 3.0, 1e-8, 1e-6, True,
        mesh.n_nodes))
    out["varcoef_system"] = timeit(lambda: impl.varcoef_system(
        mesh.grad_ops, mesh.triangles, mesh.element_area, a_mat, f_elem,
        mesh.n_nodes), repeats=20)
    return out


def bench_solve(mesh):
    a = gaussian_bump(mesh)
    spec = ProblemSpec(ExponentPair(2.0, 3.0), a)
    f = boundary_values(mesh, lambda x, y: x - 0.5 * y)
    t0 = time.perf_counter()
    sol = solve_dirichlet(spec, f)
    return time.perf_counter() - t0, sol.iterations


def main():
    mesh = build_mesh(128, 128)
    rng = np.random.default_rng(0)
    values = rng.normal(size=mesh.n_nodes)
    a_elem = rng.uniform(0.0, 1.0, mesh.n_elements)
    a_mat = np.broadcast_to(np.eye(2), (mesh.n_elements, 2, 2)).copy()
    f_elem = rng.normal(size=(mesh.n_elements, 2))

    print(f"mesh: 128x128 ({mesh.n_elements} elements, "
          f"{mesh.n_nodes} nodes); active backend: {_kernels.BACKEND}")
    numpy_times = bench_backend(numpy_backend, mesh, values, a_elem, a_mat,
                                f_elem)
    if _kernels.BACKEND == "compiled":
        compiled_times = bench_backend(_kernels._impl, mesh, values, a_elem,
                                       a_mat, f_elem)
    else:
        compiled_times = None
        print("compiled kernels not built; showing numpy only")

    header = f"{'kernel':<22} {'numpy':>10} {'compiled':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, t_np in numpy_times.items():
        if compiled_times:
            t_c = compiled_times[name]
            print(f"{name:<22} {t_np * 1e3:>8.2f}ms {t_c * 1e3:>8.2f}ms "
                  f"{t_np / t_c:>7.1f}x")
        else:
            print(f"{name:<22} {t_np * 1e3:>8.2f}ms {'-':>10} {'-':>8}")

    secs, iters = bench_solve(mesh)
    print(f"\nend-to-end forward solve ({_kernels.BACKEND} backend): "
          f"{secs:.2f}s, {iters} Newton iterations")


if __name__ == "__main__":
    main()
