"""Dense single-rate backward-Euler Nitsche solvers written from scratch.

Nothing here imports the package's assembly code; basis functions,
numbering, geometry and boundary handling are all rebuilt so that a match
with the multirate solvers on single-rate meshes is a genuine cross-check.
"""
import numpy as np
import scipy.linalg


def lagrange(order):
    """Equispaced Lagrange basis on [0, 1]: returns (value, derivative) callables."""
    nodes = np.linspace(0.0, 1.0, order + 1)
    V = np.vander(nodes, order + 1, increasing=True)
    C = np.linalg.inv(V)  # column i: monomial coefficients of basis i

    def val(s):
        s = np.atleast_1d(s)
        return np.vander(s, order + 1, increasing=True) @ C

    def der(s):
        s = np.atleast_1d(s)
        P = np.zeros((s.size, order + 1))
        for p in range(1, order + 1):
            P[:, p] = p * s ** (p - 1)
        return P @ C

    return val, der


def gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


# ------------------------------------------------------------------ heat 1D

def heat_1d(nu, f, n_cells, order, gamma, n_steps, T=1.0):
    """Two heat equations on (0,1/2) | (1/2,1), zero Dirichlet data and start.

    Returns (x1, U1, x2, U2): node coordinates and states after every step.
    """
    val, der = lagrange(order)
    sq, sw = gauss(order + 3)
    B, dB = val(sq), der(sq)
    sides = []
    for j, (a, b) in enumerate([(0.0, 0.5), (0.5, 1.0)]):
        h = (b - a) / n_cells
        n = n_cells * order + 1
        x = a + h / order * np.arange(n)
        M = np.zeros((n, n))
        K = np.zeros((n, n))
        for c in range(n_cells):
            idx = np.arange(c * order, c * order + order + 1)
            M[np.ix_(idx, idx)] += h * np.einsum("q,qi,qj->ij", sw, B, B)
            K[np.ix_(idx, idx)] += nu[j] / h * np.einsum("q,qi,qj->ij", sw, dB, dB)
        sides.append(dict(a=a, b=b, h=h, n=n, x=x, M=M, K=K))
    hmax = max(s["h"] for s in sides)
    # interface at x = 1/2: value and outward normal derivative of every basis
    tr = []
    for j, s in enumerate(sides):
        e = np.zeros(s["n"])
        g = np.zeros(s["n"])
        if j == 0:
            idx = np.arange(s["n"] - order - 1, s["n"])
            e[idx] = val(1.0)[0]
            g[idx] = der(1.0)[0] / s["h"] * (+1.0)
        else:
            idx = np.arange(0, order + 1)
            e[idx] = val(0.0)[0]
            g[idx] = der(0.0)[0] / s["h"] * (-1.0)
        tr.append((e, nu[j] * g))
    n1, n2 = sides[0]["n"], sides[1]["n"]
    N = n1 + n2
    sl = [slice(0, n1), slice(n1, N)]
    A = np.zeros((N, N))
    for j in (0, 1):
        A[sl[j], sl[j]] += sides[j]["K"]
    pen = gamma / hmax
    for j in (0, 1):
        l = 1 - j
        ej, gj = tr[j]
        el, gl = tr[l]
        # -1/2 <G_j u_j - G_l u_l, phi_j> + 1/2 <G_j phi_j, u_j - u_l> + pen <u_j - u_l, phi_j>
        A[sl[j], sl[j]] += -0.5 * np.outer(ej, gj) + 0.5 * np.outer(gj, ej) + pen * np.outer(ej, ej)
        A[sl[j], sl[l]] += 0.5 * np.outer(ej, gl) - 0.5 * np.outer(gj, el) - pen * np.outer(ej, el)
    k = T / n_steps
    Mb = np.zeros((N, N))
    for j in (0, 1):
        Mb[sl[j], sl[j]] = sides[j]["M"]
    S = Mb / k + A
    fixed = [0, N - 1]
    for i in fixed:
        S[i] = 0.0
        S[i, i] = 1.0
    u = np.zeros(N)
    out = []
    for step in range(1, n_steps + 1):
        t = step * k
        rhs = Mb @ u / k
        for j in (0, 1):
            s = sides[j]
            F = np.zeros(s["n"])
            for c in range(n_cells):
                idx = np.arange(c * order, c * order + order + 1)
                X = s["a"] + (c + sq) * s["h"]
                F[idx] += s["h"] * (sw * f[j](X[:, None], t)) @ B
            rhs[sl[j]] += F
        rhs[fixed] = 0.0
        u = np.linalg.solve(S, rhs)
        out.append(u.copy())
    U = np.array(out)
    return sides[0]["x"], U[:, :n1], sides[1]["x"], U[:, n1:]


# --------------------------------------------------------------- stokes 2D

class _Box:
    """Tensor Lagrange space of given order on a rectangle of square cells."""

    def __init__(self, lower, upper, m, order):
        self.lo = np.array(lower, float)
        self.nx = int(round((upper[0] - lower[0]) * m))
        self.ny = int(round((upper[1] - lower[1]) * m))
        self.h = 1.0 / m
        self.order = order
        self.gx = self.nx * order + 1
        self.gy = self.ny * order + 1
        self.n = self.gx * self.gy
        ii, jj = np.meshgrid(np.arange(self.gx), np.arange(self.gy), indexing="ij")
        self.coords = np.column_stack([self.lo[0] + ii.ravel() * self.h / order,
                                       self.lo[1] + jj.ravel() * self.h / order])
        self.val, self.der = lagrange(order)

    def node(self, i, j):
        return i * self.gy + j

    def cell_nodes(self, cx, cy):
        r = self.order
        return np.array([self.node(cx * r + a, cy * r + b)
                         for a in range(r + 1) for b in range(r + 1)])

    def basis(self, sx, sy):
        """Values (nq, nloc) and physical gradients (nq, nloc, 2) at reference points."""
        vx, dx = self.val(sx), self.der(sx)
        vy, dy = self.val(sy), self.der(sy)
        r1 = self.order + 1
        V = np.einsum("qa,qb->qab", vx, vy).reshape(-1, r1 * r1)
        Gx = np.einsum("qa,qb->qab", dx, vy).reshape(-1, r1 * r1) / self.h
        Gy = np.einsum("qa,qb->qab", vx, dy).reshape(-1, r1 * r1) / self.h
        return V, np.stack([Gx, Gy], axis=-1)

    def cells(self):
        for cx in range(self.nx):
            for cy in range(self.ny):
                yield cx, cy, self.lo + self.h * np.array([cx, cy])


def stokes_two_pipe(nu, m, gamma, n_steps, T=1.0, order=2):
    """Single-rate backward Euler for the two-pipe flow with Taylor-Hood pairs.

    Returns per subdomain (velocity coords, pressure coords, states); a
    state row is [u_x at nodes, u_y at nodes, p at pressure nodes].
    """
    doms = [((0.0, 0.0), (4.0, 1.0)), ((1.0, -1.0), (3.0, 0.0))]
    V = [_Box(lo, up, m, order) for lo, up in doms]
    P = [_Box(lo, up, m, order - 1) for lo, up in doms]
    sizes = [2 * v.n + p.n for v, p in zip(V, P)]
    off = [0, sizes[0]]
    N = sum(sizes)

    def uidx(j, node, c):
        return off[j] + c * V[j].n + node

    def pidx(j, node):
        return off[j] + 2 * V[j].n + node

    M = np.zeros((N, N))
    A = np.zeros((N, N))
    q, w = gauss(order + 1)
    QX, QY = np.meshgrid(q, q, indexing="ij")
    WQ = np.outer(w, w).ravel()
    for j in (0, 1):
        v, p = V[j], P[j]
        Bv, Gv = v.basis(QX.ravel(), QY.ravel())
        Bp, _ = p.basis(QX.ravel(), QY.ravel())
        wq = WQ * v.h ** 2
        for cx, cy, _ in v.cells():
            vn = v.cell_nodes(cx, cy)
            pn = p.cell_nodes(cx, cy)
            mass = np.einsum("q,qa,qb->ab", wq, Bv, Bv)
            for c in (0, 1):
                rows = [uidx(j, a, c) for a in vn]
                M[np.ix_(rows, rows)] += mass
            # 2 nu (eps(u), grad(phi)) for u = basis b in component d, phi = basis a in component c
            for c in (0, 1):
                for d in (0, 1):
                    # eps(u)_{cd'} contracted with grad phi: sum_e eps_{ce} dphi_e
                    blk = np.zeros((len(vn), len(vn)))
                    # u = psi_b e_d: eps_{ce} = 1/2 (delta_cd dpsi_e + delta_ed dpsi_c)
                    for e in (0, 1):
                        eps = 0.5 * ((c == d) * Gv[:, :, e] + (e == d) * Gv[:, :, c])
                        blk += np.einsum("q,qb,qa->ab", wq, eps, Gv[:, :, e])
                    rows = [uidx(j, a, c) for a in vn]
                    cols = [uidx(j, b, d) for b in vn]
                    A[np.ix_(rows, cols)] += 2.0 * nu[j] * blk
            # -(div phi, p) and (div u, psi)
            for c in (0, 1):
                D = np.einsum("q,qi,qa->ia", wq, Bp, Gv[:, :, c])
                prow = [pidx(j, i) for i in pn]
                ucol = [uidx(j, a, c) for a in vn]
                A[np.ix_(ucol, prow)] -= D.T
                A[np.ix_(prow, ucol)] += D
    # interface y = 0, 1 < x < 3: subdomain 1 lies above (n1 = (0,-1)), 2 below (n2 = (0,1))
    normals = [np.array([0.0, -1.0]), np.array([0.0, 1.0])]
    pen = gamma / V[0].h
    sq, sw = gauss(order + 1)
    for f in range(2 * m):
        x0 = 1.0 + f / m
        data = []
        for j in (0, 1):
            v, p = V[j], P[j]
            cx = int(round((x0 - v.lo[0]) * m))
            cy = 0 if j == 0 else v.ny - 1
            sy = np.full(sq.size, 0.0 if j == 0 else 1.0)
            Bv, Gv = v.basis(sq, sy)
            Bp, _ = p.basis(sq, sy)
            n = normals[j]
            vn = v.cell_nodes(cx, cy)
            pn = p.cell_nodes(cx, cy)
            # vector basis: index (a, c) -> value e_c psi_a, flux 2 nu eps(phi) n
            vals, flux, dofs = [], [], []
            for c in (0, 1):
                for ai, a in enumerate(vn):
                    val = np.zeros((sq.size, 2))
                    val[:, c] = Bv[:, ai]
                    G = np.zeros((sq.size, 2, 2))
                    G[:, c, :] = Gv[:, ai, :]
                    eps = 0.5 * (G + G.transpose(0, 2, 1))
                    vals.append(val)
                    flux.append(2.0 * nu[j] * eps @ n)
                    dofs.append(uidx(j, a, c))
            data.append(dict(val=np.array(vals), flux=np.array(flux), dofs=dofs,
                             p=Bp.T, pdofs=[pidx(j, i) for i in pn], n=n))
        ww = sw / m
        for j in (0, 1):
            l = 1 - j
            dj, dl = data[j], data[l]

            def ip(a, b):
                return np.einsum("q,iqc,jqc->ij", ww, a, b)

            rj, rl = dj["dofs"], dl["dofs"]
            A[np.ix_(rj, rj)] += -0.5 * ip(dj["val"], dj["flux"]) + 0.5 * ip(dj["flux"], dj["val"]) \
                + pen * ip(dj["val"], dj["val"])
            A[np.ix_(rj, rl)] += 0.5 * ip(dj["val"], dl["flux"]) - 0.5 * ip(dj["flux"], dl["val"]) \
                - pen * ip(dj["val"], dl["val"])
            # pressure in momentum: +1/2 <p_j, n_j . phi_j> - 1/2 <p_l, n_l . phi_j>
            nphi_j = np.einsum("iqc,c->iq", dj["val"], dj["n"])
            nphi_jl = np.einsum("iqc,c->iq", dj["val"], dl["n"])
            A[np.ix_(rj, dj["pdofs"])] += 0.5 * np.einsum("q,iq,kq->ik", ww, nphi_j, dj["p"])
            A[np.ix_(rj, dl["pdofs"])] -= 0.5 * np.einsum("q,iq,kq->ik", ww, nphi_jl, dl["p"])
            # continuity: -1/2 <psi_j n_j, u_j - u_l>
            nu_j = np.einsum("iqc,c->iq", dj["val"], dj["n"])
            nu_l = np.einsum("iqc,c->iq", dl["val"], dj["n"])
            A[np.ix_(dj["pdofs"], rj)] -= 0.5 * np.einsum("q,kq,iq->ki", ww, dj["p"], nu_j)
            A[np.ix_(dj["pdofs"], rl)] += 0.5 * np.einsum("q,kq,iq->ki", ww, dj["p"], nu_l)
    # Dirichlet nodes by geometry
    fixed, inflow = [], []
    for j in (0, 1):
        X = V[j].coords
        x, y = X[:, 0], X[:, 1]
        if j == 0:
            wall = np.isclose(y, 1.0) | (np.isclose(y, 0.0) & ((x <= 1 + 1e-12) | (x >= 3 - 1e-12)))
            inl = np.isclose(x, 0.0) & ~wall
        else:
            wall = np.isclose(y, -1.0)
            inl = np.isclose(x, 1.0) & ~wall
        for a in np.flatnonzero(wall | inl):
            fixed += [uidx(j, a, 0), uidx(j, a, 1)]
        for a in np.flatnonzero(inl):
            inflow.append((j, uidx(j, a, 0), y[a]))
    k = T / n_steps
    S = M / k + A
    for i in fixed:
        S[i] = 0.0
        S[i, i] = 1.0
    lu = scipy.linalg.lu_factor(S)
    u = np.zeros(N)
    out = []
    for step in range(1, n_steps + 1):
        t = step * k
        rhs = M @ u / k
        rhs[fixed] = 0.0
        for j, i, y in inflow:
            prof = y * (1.0 - y) if j == 0 else y * (1.0 + y)
            rhs[i] = np.sin(np.pi * t) * prof
        u = scipy.linalg.lu_solve(lu, rhs)
        out.append(u.copy())
    U = np.array(out)
    res = []
    for j in (0, 1):
        res.append((V[j].coords, P[j].coords, U[:, off[j]:off[j] + sizes[j]]))
    return res
