"""Vectorized Euler path farm with exact jump thinning.

Every path owns a counter-based stream keyed by (seed, path index) and
consumes it in a fixed order, so a path's trajectory does not depend on farm
size, chunking, or execution order.  Per path and per ``run()`` window the
stream is consumed as:

  1. start-point draws (only when a start sampler is configured, first window)
  2. one Poisson variate: the number of jump proposals in the window
  3. the proposal times (uniforms mapped to the window, then sorted)
  4. a (nprop, 3) uniform block: acceptance, family choice, size inversion
  5. a (nprop, dim) normal block: jump size directions
  6. a (nprop, dim) normal block: diffusion increments for split sub-steps
  7. (nsteps, dim) regular step normals, drawn chunk by chunk

Jump proposals come from a Poisson clock at the constant majorant rate; a
proposal at time s is accepted with probability Lambda(X(s-)) / Lambda_bar
where X(s-) is the Euler state diffused up to s.  Proposal times split the
step containing them, so jumps land on their own grid points and the state at
a jump time is the pre-jump Euler value plus the jump.
"""
from __future__ import annotations

import numpy as np

from .fields import ScalarFieldStack
from .model import Model, ensure_valid, total_intensity_bound
from .rng import path_stream

#: budget of floats held by one noise chunk (about 128 MB)
_CHUNK_FLOATS = 16_000_000


class MajorantError(RuntimeError):
    """The total intensity exceeded the thinning majorant at an accept step."""


def spd_sqrt(c: np.ndarray) -> np.ndarray:
    """Symmetric PSD square roots of a batch of symmetric matrices (n, d, d)."""
    d = c.shape[-1]
    if d == 1:
        return np.sqrt(np.clip(c, 0.0, None))
    if d == 2:
        a, b, cc = c[:, 0, 0], c[:, 0, 1], c[:, 1, 1]
        det = np.clip(a * cc - b * b, 0.0, None)
        s = np.sqrt(det)
        t = np.sqrt(np.clip(a + cc + 2.0 * s, 0.0, None))
        out = c.copy()
        out[:, 0, 0] += s
        out[:, 1, 1] += s
        safe = np.where(t > 0.0, t, 1.0)
        out /= safe[:, None, None]
        out[t == 0.0] = 0.0
        return out
    w, v = np.linalg.eigh(c)
    w = np.sqrt(np.clip(w, 0.0, None))
    return np.einsum("nik,nk,njk->nij", v, w, v)


class UniformStart:
    """Start points uniform over one period cell; consumes dim uniforms."""

    def __init__(self, period):
        self.tau = period.tau

    def draw(self, gen: np.random.Generator) -> np.ndarray:
        return gen.random(len(self.tau)) * self.tau


class GridStart:
    """Start points from a cell-weighted law on a torus grid.

    Consumes 1 + dim uniforms: one for the cell (inverse cdf), dim for the
    jitter inside the cell.
    """

    def __init__(self, centers: np.ndarray, widths: np.ndarray, weights: np.ndarray):
        self.centers = np.atleast_2d(centers)
        self.widths = np.asarray(widths, dtype=float)
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        self.cdf = np.cumsum(w / w.sum())

    def draw(self, gen: np.random.Generator) -> np.ndarray:
        u = gen.random()
        i = min(int(np.searchsorted(self.cdf, u, side="right")), len(self.cdf) - 1)
        jitter = gen.random(self.centers.shape[1]) - 0.5
        return self.centers[i] + jitter * self.widths


class TrapezoidObserver:
    """Pathwise trapezoid of t -> g(X_t) over the grid including jump points.

    ``fn`` maps states (m, dim) to integrand values (m, width); integration
    restarts from the post-jump value at jump times (cadlag convention).
    """

    def __init__(self, fn, width: int):
        self.fn = fn
        self.width = width
        self.acc = None
        self.prev = None

    def bind(self, farm: "Farm"):
        if self.acc is not None:
            return  # state persists across run() windows of the same farm
        self.acc = np.zeros((farm.n_paths, self.width))
        self.prev = np.asarray(self.fn(farm.X)).reshape(farm.n_paths, self.width)

    def advance(self, idx, h, x_new, t_new):
        g = np.asarray(self.fn(x_new)).reshape(len(x_new), self.width)
        h = np.asarray(h, dtype=float)
        if idx is None:
            if h.ndim == 0:
                self.acc += (0.5 * h) * (self.prev + g)
            else:
                self.acc += (0.5 * h)[:, None] * (self.prev + g)
            self.prev = g
        else:
            if h.ndim == 0:
                self.acc[idx] += (0.5 * h) * (self.prev[idx] + g)
            else:
                self.acc[idx] += (0.5 * h)[:, None] * (self.prev[idx] + g)
            self.prev[idx] = g

    def jump(self, idx, x_post, t):
        self.prev[idx] = np.asarray(self.fn(x_post)).reshape(len(idx), self.width)


class FeynmanKacObserver:
    """Running exponential weight and source integral for Dirichlet sampling.

    Tracks A_t = int_0^t a(X_s) ds and P_t = int_0^t f(X_s) exp(A_s) ds with
    trapezoid updates; ``a`` must stay nonpositive wherever it is sampled.
    """

    def __init__(self, a_fn=None, f_fn=None):
        self.a_fn = a_fn
        self.f_fn = f_fn
        self.A = None
        self.P = None

    def _eval(self, fn, x, m):
        if fn is None:
            return np.zeros(m)
        return np.asarray(fn(x), dtype=float).reshape(m)

    def bind(self, farm: "Farm"):
        if self.A is not None:
            return  # state persists across run() windows of the same farm
        n = farm.n_paths
        self.A = np.zeros(n)
        self.P = np.zeros(n)
        # copies: user callables may hand back read-only broadcast views
        self._a_prev = self._check_a(self._eval(self.a_fn, farm.X, n)).copy()
        self._u_prev = self._eval(self.f_fn, farm.X, n).copy()  # f * exp(A), A = 0

    def _check_a(self, a):
        if np.any(a > 1e-12):
            raise ValueError("potential a(x) must be <= 0 on the sampled states")
        return a

    def advance(self, idx, h, x_new, t_new):
        if idx is None:
            idx = slice(None)
        m = len(x_new)
        h = np.broadcast_to(np.asarray(h, dtype=float), (m,))
        a_new = self._check_a(self._eval(self.a_fn, x_new, m))
        A_new = self.A[idx] + 0.5 * h * (self._a_prev[idx] + a_new)
        u_new = self._eval(self.f_fn, x_new, m) * np.exp(A_new)
        self.P[idx] += 0.5 * h * (self._u_prev[idx] + u_new)
        self.A[idx] = A_new
        self._a_prev[idx] = a_new
        self._u_prev[idx] = u_new

    def jump(self, idx, x_post, t):
        m = len(idx)
        self._a_prev[idx] = self._check_a(self._eval(self.a_fn, x_post, m))
        self._u_prev[idx] = self._eval(self.f_fn, x_post, m) * np.exp(self.A[idx])


class PathRecorder:
    """Full trajectory recording; intended for small farms."""

    def __init__(self):
        self.times = None
        self.states = None
        self.marks = None

    def bind(self, farm: "Farm"):
        if self.times is not None:
            return
        n = farm.n_paths
        self.times = [[0.0] for _ in range(n)]
        self.states = [[farm.X[i].copy()] for i in range(n)]
        self.marks = [[] for _ in range(n)]

    def advance(self, idx, h, x_new, t_new):
        if idx is None:
            idx = range(len(x_new))
        t_new = np.broadcast_to(np.asarray(t_new, dtype=float), (len(x_new),))
        for j, i in enumerate(idx):
            self.times[i].append(float(t_new[j]))
            self.states[i].append(x_new[j].copy())

    def jump(self, idx, x_post, t):
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(idx),))
        for j, i in enumerate(idx):
            prev = self.states[i][-1]
            self.marks[i].append((float(t[j]), x_post[j] - prev))
            self.states[i][-1] = x_post[j].copy()


class Farm:
    """A set of paths of one model advanced together on a shared time grid."""

    def __init__(self, model: Model, n_paths: int, x0, dt: float, seed: int,
                 path_offset: int = 0, start_sampler=None):
        ensure_valid(model)
        self.model = model
        self.dim = model.dim
        self.n_paths = int(n_paths)
        self.dt = float(dt)
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        self.gens = [path_stream(seed, path_offset + i) for i in range(self.n_paths)]
        self.t = 0.0
        self.active = np.ones(self.n_paths, dtype=bool)
        self.jump_counts = np.zeros(self.n_paths, dtype=np.int64)
        self.exit_time = np.full(self.n_paths, np.nan)
        self.exit_point = np.full((self.n_paths, self.dim), np.nan)
        self.exited = np.zeros(self.n_paths, dtype=bool)
        self._nxt = np.full(self.n_paths, np.inf)

        self._prepare_coefficients()

        if start_sampler is not None:
            self.X = np.stack([start_sampler.draw(g) for g in self.gens])
        else:
            x0 = np.asarray(x0, dtype=float)
            self.X = np.broadcast_to(np.atleast_1d(x0), (self.n_paths, self.dim)).copy()

    # -- model tables ---------------------------------------------------------

    def _prepare_coefficients(self):
        m = self.model
        diff = m.diffusion
        if diff.is_zero():
            self._sigma_kind = "none"
        elif diff.is_diagonal():
            self._sigma_kind = "diag"
        else:
            self._sigma_kind = "full"

        self._families = list(m.jumps)
        self.lam_bar = total_intensity_bound(m)
        self._lam_stack = (ScalarFieldStack([fam.intensity for fam in self._families])
                           if self._families else None)
        # compensator of small jumps: b_eff(x) = b(x) - sum_k lambda_k(x) m1_k
        m1 = np.array([fam.sizes.first_moment_in_unit_ball() for fam in self._families])
        self._m1 = m1.reshape(len(self._families), self.dim)
        self._has_comp = bool(np.any(self._m1))
        self._drift_field = None if m.drift.is_zero() else m.drift
        self._has_drift = self._drift_field is not None or self._has_comp

    def _drift(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        if self._drift_field is not None:
            out += self._drift_field.eval_batch(x)
        if self._has_comp:
            out -= self._lam_stack.eval_batch(x) @ self._m1
        return out

    def _diffuse(self, x: np.ndarray, z: np.ndarray, sqrt_h) -> np.ndarray:
        if self._sigma_kind == "none":
            return np.zeros_like(x)
        if self._sigma_kind == "diag":
            sig = np.sqrt(np.clip(self.model.diffusion.eval_diag_batch(x), 0.0, None))
            noise = sig * z
        else:
            sig = spd_sqrt(self.model.diffusion.eval_batch(x))
            noise = np.einsum("nij,nj->ni", sig, z)
        if np.ndim(sqrt_h) == 0:
            return sqrt_h * noise
        return np.asarray(sqrt_h)[:, None] * noise

    def _intensities(self, x: np.ndarray) -> np.ndarray:
        return self._lam_stack.eval_batch(x)

    # -- stepping -------------------------------------------------------------

    def _advance(self, idx, h, z: np.ndarray) -> np.ndarray:
        """Euler increment over a time h for the paths idx; returns new states.

        idx may be an index array or None for "all paths".
        """
        x = self.X if idx is None else self.X[idx]
        xn = x + self._diffuse(x, z, np.sqrt(h))
        if self._has_drift:
            hh = h if np.ndim(h) == 0 else np.asarray(h)[:, None]
            xn += self._drift(x) * hh
        if idx is None:
            self.X = xn
        else:
            self.X[idx] = xn
        return xn

    def _retire(self, idx: np.ndarray, t_abs, domain) -> np.ndarray:
        """Mark paths that left the domain; returns the surviving subset of idx."""
        inside = domain.contains(self.X[idx])
        if np.all(inside):
            return idx
        out = idx[~inside]
        t_abs = np.broadcast_to(np.asarray(t_abs, dtype=float), (len(idx),))
        self.active[out] = False
        self.exited[out] = True
        self.exit_time[out] = t_abs[~inside]
        self.exit_point[out] = self.X[out]
        self._nxt[out] = np.inf
        return idx[inside]

    def _draw_proposals(self, duration: float, act: np.ndarray):
        """Jump-clock draws for one window, active paths only."""
        counts = np.zeros(self.n_paths, dtype=np.int64)
        times, blocks, size_z, sub_z = [], [], [], []
        for i in act:
            g = self.gens[i]
            c = int(g.poisson(self.lam_bar * duration))
            counts[i] = c
            # map uniforms to (0, duration] so a proposal never lands on time 0
            times.append(np.sort(duration * (1.0 - g.random(c))))
            blocks.append(g.random((c, 3)))
            size_z.append(g.standard_normal((c, self.dim)))
            sub_z.append(g.standard_normal((c, self.dim)))
        offsets = np.zeros(self.n_paths + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        flat = np.concatenate(times) if times else np.zeros(0)
        ends = offsets[1:].copy()
        ptr = offsets[:-1].copy()
        nxt = np.full(self.n_paths, np.inf)
        has = counts > 0
        nxt[has] = flat[ptr[has]]
        self._prop_t = flat
        self._prop_u = np.concatenate(blocks) if blocks else np.zeros((0, 3))
        self._prop_zy = np.concatenate(size_z) if size_z else np.zeros((0, self.dim))
        self._prop_zs = np.concatenate(sub_z) if sub_z else np.zeros((0, self.dim))
        self._ptr = ptr
        self._ends = ends
        self._nxt = nxt

    def _consume_proposal(self, idx: np.ndarray):
        self._ptr[idx] += 1
        more = self._ptr[idx] < self._ends[idx]
        self._nxt[idx] = np.where(more, self._prop_t[np.minimum(self._ptr[idx], len(self._prop_t) - 1)], np.inf)

    def _thin(self, idx: np.ndarray, t_abs: np.ndarray, observers, domain, recorder):
        """Thinning decision at the proposal the paths idx just reached."""
        p = self._ptr[idx]
        lam = self._intensities(self.X[idx])
        total = lam.sum(axis=1)
        if np.any(total > self.lam_bar * (1.0 + 1e-9)):
            raise MajorantError(
                "total intensity exceeded the thinning majorant; "
                "the validation grid missed the intensity maximum"
            )
        u_acc, u_fam, u_size = self._prop_u[p].T
        accepted = u_acc * self.lam_bar <= total
        if not np.any(accepted):
            return
        a_idx = idx[accepted]
        lam_a = lam[accepted]
        cum = np.cumsum(lam_a, axis=1)
        threshold = (u_fam[accepted] * total[accepted])[:, None]
        fam_idx = np.minimum((cum < threshold).sum(axis=1), len(self._families) - 1)
        y = np.zeros((len(a_idx), self.dim))
        pa = p[accepted]
        for k, fam in enumerate(self._families):
            mask = fam_idx == k
            if np.any(mask):
                y[mask] = fam.sizes.decode(u_size[accepted][mask], self._prop_zy[pa[mask]])
        self.X[a_idx] += y
        self.jump_counts[a_idx] += 1
        t_a = np.broadcast_to(t_abs, (len(idx),))[accepted]
        for obs in observers:
            obs.jump(a_idx, self.X[a_idx], t_a)
        if recorder is not None:
            recorder.jump(a_idx, self.X[a_idx], t_a)
        if domain is not None:
            self._retire(a_idx, t_a, domain)

    def run(self, duration: float, observers=(), domain=None, occupation=None,
            recorder=None):
        """Advance all active paths by ``duration``.

        ``occupation`` is an optional (grid, burn_in_time, counts) triple; the
        torus cell of every active path is counted at each regular grid time
        past the burn-in.  ``domain`` stops paths on first exit.
        """
        duration = float(duration)
        if duration < 0.0:
            raise ValueError("duration must be >= 0")
        observers = list(observers)
        if recorder is not None:
            recorder.bind(self)
        for obs in observers:
            obs.bind(self)
        if duration == 0.0:
            self.t += 0.0
            return

        n_steps = int(np.ceil(duration / self.dt - 1e-12))
        all_active = bool(self.active.all())
        act = None if all_active else np.flatnonzero(self.active)
        has_jumps = bool(self._families) and self.lam_bar > 0.0
        if has_jumps:
            self._draw_proposals(duration, act if act is not None else np.arange(self.n_paths))

        chunk_steps = max(1, min(n_steps, _CHUNK_FLOATS // max(1, self.n_paths * self.dim)))
        chunk = None
        chunk_k0 = 0

        if occupation is not None:
            occ_grid, occ_burn, occ_counts = occupation
        tau = self.model.period.tau

        for k in range(n_steps):
            if not all_active:
                act = np.flatnonzero(self.active)
                if len(act) == 0:
                    break
            if chunk is None or k >= chunk_k0 + chunk.shape[0]:
                chunk_k0 = k
                csteps = min(chunk_steps, n_steps - k)
                # time-major layout keeps the per-step slice contiguous
                chunk = np.empty((csteps, self.n_paths, self.dim))
                for i in (range(self.n_paths) if all_active else act):
                    chunk[:, i, :] = self.gens[i].standard_normal((csteps, self.dim))
            z = chunk[k - chunk_k0]
            t0 = k * self.dt
            t1 = duration if k == n_steps - 1 else (k + 1) * self.dt

            nxt_min = np.inf
            if has_jumps:
                nxt_min = np.min(self._nxt) if all_active else np.min(self._nxt[act])
            if nxt_min <= t1:
                sub = np.arange(self.n_paths) if all_active else act
                self._step_with_proposals(sub, t0, t1, z, observers, domain, recorder)
                all_active = bool(self.active.all())
            else:
                h = t1 - t0
                idx = None if all_active else act
                xn = self._advance(idx, h, z if all_active else z[act])
                t_abs = self.t + t1
                for obs in observers:
                    obs.advance(idx, h, xn, t_abs)
                if recorder is not None:
                    recorder.advance(idx, h, xn, t_abs)
                if domain is not None:
                    self._retire(np.arange(self.n_paths) if all_active else act, t_abs, domain)
                    all_active = bool(self.active.all())

            if occupation is not None and self.t + t1 > occ_burn:
                pts = self.X if all_active else self.X[self.active]
                if len(pts):
                    cells = occ_grid.cell_index(np.mod(pts, tau))
                    np.add.at(occ_counts, cells, 1)

        self.t += duration

    def _step_with_proposals(self, act, t0, t1, z, observers, domain, recorder):
        seg_t = np.full(self.n_paths, t0)
        cur_z = z.copy()
        alive = act
        while True:
            alive = alive[self.active[alive]]
            if len(alive) == 0:
                break
            hits = alive[self._nxt[alive] <= t1]
            if len(hits) == 0:
                break
            tj = self._nxt[hits]
            h = tj - seg_t[hits]
            xn = self._advance(hits, h, cur_z[hits])
            t_abs = self.t + tj
            for obs in observers:
                obs.advance(hits, h, xn, t_abs)
            if recorder is not None:
                recorder.advance(hits, h, xn, t_abs)
            surv = hits if domain is None else self._retire(hits, t_abs, domain)
            if len(surv):
                self._thin(surv, self.t + self._nxt[surv], observers, domain, recorder)
            # consume the proposal for every hitter, accepted or not
            seg_t[hits] = tj
            cur_z[hits] = self._prop_zs[np.minimum(self._ptr[hits], len(self._prop_zs) - 1)]
            self._consume_proposal(hits)
        rem = act[self.active[act]]
        if len(rem):
            h = t1 - seg_t[rem]
            xn = self._advance(rem, h, cur_z[rem])
            t_abs = self.t + t1
            for obs in observers:
                obs.advance(rem, h, xn, t_abs)
            if recorder is not None:
                recorder.advance(rem, h, xn, t_abs)
            if domain is not None:
                self._retire(rem, t_abs, domain)
