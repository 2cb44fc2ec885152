"""Levy intensities on (0, inf): moments, truncation windows, admissibility
and the tail-integral inequality oracles."""
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

INF = math.inf


class InvalidWindow(ValueError):
    pass


@dataclass(frozen=True)
class TruncationWindow:
    """Mark range [a, b) kept by a truncated noise."""
    a: float
    b: float = INF

    def __post_init__(self):
        if not (self.a > 0):
            raise InvalidWindow(f"lower cutoff must be positive, got {self.a}")
        if not (self.b > self.a):
            raise InvalidWindow(f"empty window [{self.a}, {self.b})")


class LevyIntensity:
    """Base class. Subclasses provide density, tail mass, power moments and
    mark sampling. Divergent integrals are returned as ``math.inf``."""

    description = ""

    def density(self, v):
        raise NotImplementedError

    def tail_mass(self, a):
        """lambda([a, inf))."""
        raise NotImplementedError

    def moment(self, p, lo, hi=INF):
        """Integral of v**p over [lo, hi)."""
        raise NotImplementedError

    def log_moment(self, p, k, lo, hi=INF):
        """Integral of v**p * |log v|**k over [lo, hi); inf when divergent."""
        raise NotImplementedError

    def sample_log_marks(self, a, n, rng, p=0.0, hi=INF):
        """Logs of n i.i.d. marks from v**p lambda(dv) normalized on [a, hi)."""
        raise NotImplementedError

    def descriptor(self):
        raise NotImplementedError


class AlphaStable(LevyIntensity):
    """lambda(dv) = alpha v**(-1-alpha) dv."""

    def __init__(self, alpha):
        if not (0 < alpha < 2):
            raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
        self.alpha = float(alpha)
        self.description = f"alpha_stable({self.alpha:g})"

    def density(self, v):
        v = np.asarray(v, dtype=float)
        return self.alpha * v ** (-1.0 - self.alpha)

    def tail_mass(self, a):
        return a ** (-self.alpha)

    def moment(self, p, lo, hi=INF):
        al = self.alpha
        e = p - al
        if lo >= hi:
            return 0.0
        if lo == 0 and e <= 0:
            return INF
        if hi == INF and e >= 0:
            return INF
        if e == 0:
            return al * (math.log(hi) - math.log(lo))
        top = 0.0 if hi == INF else hi ** e
        bot = 0.0 if lo == 0 else lo ** e
        return al * (top - bot) / e

    def log_moment(self, p, k, lo, hi=INF):
        if k == 0:
            return self.moment(p, lo, hi)
        e = p - self.alpha
        if (lo == 0 and e <= 0) or (hi == INF and e >= 0):
            return INF
        # substitute s = log v
        f = lambda s: self.alpha * math.exp(e * s) * abs(s) ** k
        slo = -INF if lo == 0 else math.log(lo)
        shi = INF if hi == INF else math.log(hi)
        return _quad_split(f, slo, shi)

    def sample_log_marks(self, a, n, rng, p=0.0, hi=INF):
        e = p - self.alpha
        u = 1.0 - rng.random(n)  # in (0, 1]
        la = math.log(a)
        if hi == INF:
            if e >= 0:
                raise ValueError("tilted intensity is not normalizable")
            return la - np.log(u) / (-e)
        lh = math.log(hi)
        if e == 0:
            return la + u * (lh - la)
        # inverse CDF of v**(e-1) on [a, hi)
        ea, eh = math.exp(e * la), math.exp(e * lh)
        return np.log(ea + u * (eh - ea)) / e

    def descriptor(self):
        return {"kind": "alpha_stable", "alpha": self.alpha}


class Tabulated(LevyIntensity):
    """Piecewise power-law density interpolated log-log between nodes.

    Outside the node range the density is zero unless a head or tail
    extension is requested:
      head='power'      extend the first segment's power law down to 0
      tail='power'      extend the last segment's power law to infinity
      tail='log-power'  A v**-1 (log v)**-(1+theta) beyond the last node,
                        continuous there (needs last node > 1)
    """

    def __init__(self, v, dens, head="none", tail="none", theta=None,
                 description="tabulated"):
        v = np.asarray(v, dtype=float)
        dens = np.asarray(dens, dtype=float)
        if v.ndim != 1 or v.shape != dens.shape or len(v) < 2:
            raise ValueError("need matching 1-d node and density arrays")
        if np.any(v <= 0) or np.any(np.diff(v) <= 0):
            raise ValueError("nodes must be positive and strictly increasing")
        if np.any(dens < 0):
            raise ValueError("density must be nonnegative")
        if head not in ("none", "power") or tail not in ("none", "power", "log-power"):
            raise ValueError("unknown head/tail extension")
        self.v, self.dens = v, dens
        self.head, self.tail, self.theta = head, tail, theta
        self.description = description
        # segment k: dens[k] * (x / v[k]) ** s[k] on [v[k], v[k+1])
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.diff(np.log(dens)) / np.diff(np.log(v))
        self.slopes = np.where((dens[:-1] > 0) & (dens[1:] > 0), s, 0.0)
        self.alive = (dens[:-1] > 0) & (dens[1:] > 0)
        if head == "power" and not self.alive[0]:
            raise ValueError("power head needs positive first segment")
        if tail == "power" and not self.alive[-1]:
            raise ValueError("power tail needs positive last segment")
        if tail == "log-power":
            if theta is None or theta <= 0:
                raise ValueError("log-power tail needs theta > 0")
            if v[-1] <= 1:
                raise ValueError("log-power tail needs last node > 1")
            lv = math.log(v[-1])
            self._tail_amp = dens[-1] * v[-1] * lv ** (1 + theta)

    @classmethod
    def from_file(cls, path):
        """Read the ``# levy-intensity v1`` two-column format. Extra comment
        directives: ``# head power``, ``# tail power``,
        ``# tail log-power <theta>``."""
        head, tail, theta = "none", "none", None
        rows = []
        with open(path) as fh:
            first = fh.readline().strip()
            if first != "# levy-intensity v1":
                raise ValueError(f"{path}:1: expected header '# levy-intensity v1'")
            for lineno, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    words = line[1:].split()
                    if words[:1] == ["head"] and len(words) == 2:
                        head = words[1]
                    elif words[:1] == ["tail"] and len(words) >= 2:
                        tail = words[1]
                        if tail == "log-power":
                            theta = float(words[2])
                    continue
                parts = line.replace(",", " ").split()
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected two columns")
                rows.append((float(parts[0]), float(parts[1])))
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1], head=head, tail=tail, theta=theta,
                   description=f"tabulated({path})")

    def to_file(self, path):
        with open(path, "w") as fh:
            fh.write("# levy-intensity v1\n")
            if self.head != "none":
                fh.write(f"# head {self.head}\n")
            if self.tail == "log-power":
                fh.write(f"# tail log-power {self.theta!r}\n")
            elif self.tail != "none":
                fh.write(f"# tail {self.tail}\n")
            for a, b in zip(self.v, self.dens):
                fh.write(f"{float(a)!r} {float(b)!r}\n")

    def descriptor(self):
        return {"kind": "tabulated", "v": self.v.tolist(), "density": self.dens.tolist(),
                "head": self.head, "tail": self.tail, "theta": self.theta}

    # pieces: list of (lo, hi, c, s) with density c * x**s on [lo, hi)
    def _power_pieces(self):
        out = []
        v, dens, s = self.v, self.dens, self.slopes
        if self.head == "power":
            out.append((0.0, v[0], dens[0] * v[0] ** -s[0], s[0]))
        for k in range(len(v) - 1):
            if self.alive[k]:
                out.append((v[k], v[k + 1], dens[k] * v[k] ** -s[k], s[k]))
        if self.tail == "power":
            out.append((v[-1], INF, dens[-2] * v[-2] ** -s[-1], s[-1]))
        return out

    def density(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        for lo, hi, c, s in self._power_pieces():
            m = (x >= lo) & (x < hi)
            out[m] = c * x[m] ** s
        if self.tail == "log-power":
            m = x >= self.v[-1]
            out[m] = self._tail_amp / (x[m] * np.log(x[m]) ** (1 + self.theta))
        return out

    def tail_mass(self, a):
        return self.moment(0.0, a, INF)

    def moment(self, p, lo, hi=INF):
        if lo >= hi:
            return 0.0
        total = 0.0
        for plo, phi, c, s in self._power_pieces():
            l, h = max(lo, plo), min(hi, phi)
            if l >= h:
                continue
            e = p + s + 1
            if (l == 0 and e <= 0) or (h == INF and e >= 0):
                return INF
            if e == 0:
                total += c * (math.log(h) - math.log(l))
            else:
                total += c * ((0.0 if h == INF else h ** e) - (0.0 if l == 0 else l ** e)) / e
        if self.tail == "log-power":
            l = max(lo, self.v[-1])
            if l < hi:
                if p > 0:
                    if hi == INF:
                        return INF
                    total += self._log_tail_quad(p, 0, l, hi)
                elif p == 0:
                    th = self.theta
                    top = 0.0 if hi == INF else math.log(hi) ** -th
                    total += self._tail_amp * (math.log(l) ** -th - top) / th
                else:
                    total += self._log_tail_quad(p, 0, l, hi)
        return total

    def _log_tail_quad(self, p, k, lo, hi):
        th, amp = self.theta, self._tail_amp
        f = lambda s: amp * math.exp(p * s) * s ** (k - 1 - th)
        return _quad_split(f, math.log(lo), INF if hi == INF else math.log(hi))

    def log_moment(self, p, k, lo, hi=INF):
        if k == 0:
            return self.moment(p, lo, hi)
        total = 0.0
        for plo, phi, c, s in self._power_pieces():
            l, h = max(lo, plo), min(hi, phi)
            if l >= h:
                continue
            e = p + s + 1
            if (l == 0 and e <= 0) or (h == INF and e >= 0):
                return INF
            f = lambda r, c=c, e=e: c * math.exp(e * r) * abs(r) ** k
            total += _quad_split(f, -INF if l == 0 else math.log(l),
                                 INF if h == INF else math.log(h))
        if self.tail == "log-power":
            l = max(lo, self.v[-1])
            if l < hi:
                if hi == INF and (p > 0 or (p == 0 and k >= self.theta)):
                    return INF
                total += self._log_tail_quad(p, k, l, hi)
        return total

    def sample_log_marks(self, a, n, rng, p=0.0, hi=INF):
        pieces = []
        for plo, phi, c, s in self._power_pieces():
            l, h = max(a, plo), min(hi, phi)
            if l < h:
                pieces.append((l, h, c, s + p))
        masses = [self._piece_mass(l, h, c, e) for l, h, c, e in pieces]
        tail_mass = 0.0
        if self.tail == "log-power" and max(a, self.v[-1]) < hi:
            if p != 0:
                raise ValueError("tilted sampling beyond a log-power tail is not supported")
            tail_mass = self.moment(0.0, max(a, self.v[-1]), hi)
        masses.append(tail_mass)
        masses = np.array(masses)
        if not np.all(np.isfinite(masses)) or masses.sum() <= 0:
            raise ValueError("restricted intensity is not normalizable")
        which = rng.choice(len(masses), size=n, p=masses / masses.sum())
        u = 1.0 - rng.random(n)
        out = np.empty(n)
        for k, (l, h, c, e) in enumerate(pieces):
            m = which == k
            out[m] = _sample_power(l, h, e, u[m])
        m = which == len(pieces)
        if m.any():
            # log-power tail: P(V > y) proportional to (log y)**-theta
            l = max(a, self.v[-1])
            th = self.theta
            ll = math.log(l)
            if hi == INF:
                out[m] = ll * u[m] ** (-1.0 / th)
            else:
                lh = math.log(hi)
                top, bot = ll ** -th, lh ** -th
                out[m] = (bot + u[m] * (top - bot)) ** (-1.0 / th)
        return out

    @staticmethod
    def _piece_mass(l, h, c, e):
        # integral of c x**e over [l, h)
        e1 = e + 1
        if (l == 0 and e1 <= 0) or (h == INF and e1 >= 0):
            return INF
        if e1 == 0:
            return c * (math.log(h) - math.log(l))
        return c * ((0.0 if h == INF else h ** e1) - (0.0 if l == 0 else l ** e1)) / e1


def _sample_power(l, h, e, u):
    """log of samples from density proportional to x**e on [l, h); u in (0,1]."""
    e1 = e + 1
    if e1 == 0:
        return math.log(l) + u * (math.log(h) - math.log(l))
    if h == INF:
        return math.log(l) - np.log(u) / (-e1)
    if l == 0:
        return math.log(h) + np.log(u) / e1
    lo, hi = l ** e1, h ** e1
    return np.log(hi + u * (lo - hi)) / e1


def _quad_split(f, lo, hi):
    # quad over possibly infinite range, split at 0 for |s|**k kinks
    pts = [lo, hi]
    if lo < 0 < hi:
        pts = [lo, 0.0, hi]
    total = 0.0
    for l, h in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(f, l, h, epsrel=1e-11, epsabs=0.0, limit=400)
        total += val
    return total


def kappa(lam, a):
    """Compensator mass: integral of v lambda(dv) over [a, 1)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if a >= 1:
        return 0.0
    return lam.moment(1.0, a, 1.0)


def mu(lam, b=INF):
    """Integral of v lambda(dv) over [1, b); may be inf."""
    if b <= 1:
        return 0.0
    return lam.moment(1.0, 1.0, b)


def drift_rate(lam, window):
    """kappa_a - kappa_b, the Lebesgue drift of the truncated noise."""
    kb = 0.0 if window.b == INF else kappa(lam, window.b)
    return kappa(lam, window.a) - kb


def mean_rate(lam, window):
    """Exponent m with E[Z^{[a,b)}_T] = exp(beta m T): window first moment
    minus the drift; equals mu_b whenever a <= 1."""
    first = lam.moment(1.0, window.a, window.b)
    if first == INF:
        return INF
    return first - drift_rate(lam, window)


def second_moment_mass(lam, window):
    """Integral of v**2 lambda(dv) over [a, b)."""
    if not isinstance(window, TruncationWindow):
        window = TruncationWindow(*window)
    return lam.moment(2.0, window.a, window.b)


def critical_alpha(d):
    return 2.0 if d <= 2 else 1.0 + 2.0 / d


@dataclass
class AdmissibilityReport:
    hypolarge_ok: bool
    hyposmall_ok: bool
    hyposmall_p: float
    hyposmall2_ok: bool
    alpha_c: float
    regime: str

    def to_dict(self):
        return dict(self.__dict__)


def check_admissibility(lam, d):
    """Evaluate the large-jump and two small-jump integrability conditions
    and classify the regime."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    ac = critical_alpha(d)
    large = lam.log_moment(0.0, d / 2.0, 1.0, INF) < INF

    def small_finite(p, k=0):
        return lam.log_moment(p, k, 0.0, 1.0) < INF

    if d == 1:
        p_small = 2.0
        small = small_finite(2.0)
    else:
        # integrability at 0 is monotone in p: try a ladder just below 1+2/d
        p_small = math.nan
        small = False
        for delta in (1e-3, 1e-2, 0.05, 0.1, 0.25):
            p = 1.0 + 2.0 / d - delta
            if small_finite(p):
                small, p_small = True, p
                break
        if isinstance(lam, AlphaStable) and lam.alpha < ac:
            small, p_small = True, (lam.alpha + ac) / 2.0
    if d == 1:
        small2 = small_finite(2.0)
    elif d == 2:
        small2 = small_finite(2.0, 1)
    else:
        small2 = small_finite(1.0 + 2.0 / d)

    if not large:
        regime = "degenerate-to-infinity"
    elif small:
        regime = "convergent"
    elif not small2:
        regime = "degenerate-to-zero"
    else:
        regime = "undecided"
    return AdmissibilityReport(large, small, p_small, small2, ac, regime)


# ---- comparison constants and tail-integral oracles ----

def comparison_constant_large(lam, q, p):
    """Constant c for the increasing-test-function comparison: sup over
    u in (0, q) of u**(p-1) * int_{(u,q)} v lambda(dv), inflated by the
    factor (p-1)/(1-2**(1-p)) produced by the boundary term."""
    def neg(lu):
        u = math.exp(lu)
        return -(lam.moment(1.0, u, q) * u ** (p - 1))
    grid = np.linspace(math.log(q) - 40, math.log(q), 801)
    vals = np.array([neg(g) for g in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    best = vals[k]
    if hi > lo:
        res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        best = min(best, res.fun)
    sup = -best
    if not np.isfinite(sup):
        raise ValueError("comparison constant diverges; p too small for this intensity")
    return sup * (p - 1) / (1 - 2 ** (1 - p))


def comparison_constant_small(lam, q, p):
    """Constant C for the decreasing-test-function comparison:
    (2-p) * int_{(0,q]} v**p lambda(dv)."""
    cp = lam.moment(p, 0.0, q)
    if cp == INF:
        raise ValueError("p-th moment near 0 diverges")
    return (2 - p) * cp


@dataclass
class TailBoundResult:
    lhs: float
    lhs_se: float
    rhs: float
    flagged: bool

    @property
    def holds(self):
        return self.lhs <= self.rhs + 4 * self.lhs_se


def tail_bound_upper(lam, q, m, h, eps, variant="large", p=None, n_samples=10 ** 6, rng=None):
    """Constrained m-fold mark integral and its closed-form upper bound.

    variant 'large': int over (0,q)^m of 1{prod u >= h q^m} prod u lambda(du)
    variant 'small': int over (0,q)^m of 1{prod u <= h q^m} prod u^2 lambda(du)
    m = 1 is exact; m >= 2 uses Monte Carlo from the normalized tilted marks.
    """
    if not (0 < h < 1):
        raise ValueError("h must lie in (0, 1)")
    if q < 1 or m < 1:
        raise ValueError("need q >= 1 and m >= 1")
    if p is None:
        p = _default_p(lam)
    if not (1 < p < 2):
        raise ValueError("p must lie in (1, 2)")
    if rng is None:
        rng = np.random.default_rng(0)
    if variant == "large":
        if not (0 < eps < 1):
            raise ValueError("eps must lie in (0, 1)")
        cbold = comparison_constant_large(lam, q, p) * q ** (1 - p)
        rhs = (2 ** eps * cbold / eps) ** m * h ** (1 - p - eps) / (p - 1)
        lo = h * q  # the constraint forces every u_i >= h q
        mass = lam.moment(1.0, lo, q)
        if m == 1:
            return TailBoundResult(mass, 0.0, rhs, False)
        logs = sum(lam.sample_log_marks(lo, n_samples, rng, p=1.0, hi=q) for _ in range(m))
        hit = logs >= math.log(h) + m * math.log(q)
    elif variant == "small":
        if not (0 < eps < 2 - p):
            raise ValueError("eps must lie in (0, 2-p)")
        cbold = comparison_constant_small(lam, q, p) * q ** (2 - p)
        rhs = (cbold / eps) ** m * h ** (2 - p - eps) / (2 - p - eps)
        if m == 1:
            return TailBoundResult(lam.moment(2.0, 0.0, h * q), 0.0, rhs, False)
        mass = lam.moment(2.0, 0.0, q)
        logs = sum(lam.sample_log_marks(1e-300, n_samples, rng, p=2.0, hi=q) for _ in range(m))
        hit = logs <= math.log(h) + m * math.log(q)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    frac = hit.mean()
    lhs = mass ** m * frac
    se = mass ** m * math.sqrt(frac * (1 - frac) / n_samples)
    flagged = frac > 0 and se / lhs > 0.1
    return TailBoundResult(lhs, se, rhs, flagged)


def _default_p(lam):
    if isinstance(lam, AlphaStable):
        return (max(1.0, lam.alpha) + 2.0) / 2.0
    return 1.5


def compare_increasing(lam, q, p, m, threshold):
    """Both sides of the comparison for g = 1{prod u >= threshold}, m in {1,2}:
    (int_{(0,q)^m} g prod u lambda(du), c^m int_{(0,2q)^m} g prod u^-p du)."""
    c = comparison_constant_large(lam, q, p)

    def leb(lo, hi):  # integral of u**-p over [lo, hi)
        return (lo ** (1 - p) - hi ** (1 - p)) / (p - 1) if lo < hi else 0.0

    if m == 1:
        return lam.moment(1.0, min(threshold, q), q), c * leb(min(threshold, 2 * q), 2 * q)
    if m != 2:
        raise ValueError("only m in {1, 2} supported")
    lo1 = threshold / q
    lhs = _integrate_log(lambda u: u * float(np.atleast_1d(lam.density(u))[0]) * lam.moment(1.0, min(threshold / u, q), q),
                         lo1, q)
    lo2 = threshold / (2 * q)
    rhs = _integrate_log(lambda u: u ** -p * leb(min(threshold / u, 2 * q), 2 * q), lo2, 2 * q)
    return lhs, c ** 2 * rhs


def compare_decreasing(lam, q, p, m, threshold):
    """Both sides of the comparison for g = 1{prod u <= threshold}, m in {1,2}:
    (int_{(0,q)^m} g prod u^2 lambda(du), C^m int_{(0,q)^m} g prod u^(1-p) du)."""
    c = comparison_constant_small(lam, q, p)

    def leb(hi):  # integral of u**(1-p) over (0, hi)
        return hi ** (2 - p) / (2 - p)

    if m == 1:
        t = min(threshold, q)
        return lam.moment(2.0, 0.0, t), c * leb(t)
    if m != 2:
        raise ValueError("only m in {1, 2} supported")
    lhs = _integrate_log(lambda u: u * u * float(np.atleast_1d(lam.density(u))[0]) * lam.moment(2.0, 0.0, min(threshold / u, q)),
                         0.0, q)
    rhs = _integrate_log(lambda u: u ** (1 - p) * leb(min(threshold / u, q)), 0.0, q)
    return lhs, c ** 2 * rhs


def _integrate_log(f, lo, hi):
    # integrate f(u) du over (lo, hi) in the variable s = log u
    g = lambda s: f(math.exp(s)) * math.exp(s)
    slo = math.log(hi) - 60 if lo <= 0 else math.log(lo)
    val, _ = integrate.quad(g, slo, math.log(hi), epsrel=1e-10, limit=400)
    return val
