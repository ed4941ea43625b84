"""Conformal deformation of the flat metric by e^{2tf}: weights and deformed spectra.

The deformed Dirac eigenproblem is solved in its substituted form: with
``chi = e^{(n-1)tf/2} phi`` the equation ``D_deformed phi = lambda phi`` is
equivalent to the Hermitian-definite generalized problem

    A chi = lambda B chi,

where A is the flat Dirac matrix and B is the Galerkin matrix of
multiplication by ``e^{tf}``.  Both matrices are Hermitian, B is positive
definite as the compression of multiplication by a positive function, and the
B-inner product of chi equals the deformed-metric inner product of phi, so
B-orthonormal eigenvectors correspond to eigenspinors orthonormal in the
deformed L^2 space.  The direct first-order formula for the deformed operator
is kept as ``apply_deformed_dirac`` and the two routes are reconciled by a
tested pointwise identity rather than by trust.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import eigensolver
from .errors import PositiveDefiniteError
from .spinor_algebra import dirac_symbol
from .torus_dirac import (
    TORUS_DIM,
    ModeSet,
    SpinorField,
    apply_flat_dirac,
    build_mode_set,
    embed_field,
)

#: Deformations are considered well-resolved while |t| * osc(f) stays below
#: this; beyond it a warning is emitted (positive-definiteness failures are
#: hard errors either way).
T_RANGE_LIMIT = 1.0

#: Reality-constraint tolerance for loaded Fourier coefficients.
REALITY_TOL = 1e-14


def _next_pow2(n):
    p = 1
    while p < n:
        p *= 2
    return p


class ConformalFactor:
    """Real trigonometric polynomial f = sum_m fhat(m) e^{i<m,x>}, |m|_inf <= degree.

    Coefficients are stored on a centered cube and symmetrized so that
    ``fhat(-m) == conj(fhat(m))`` holds exactly; constructors reject inputs
    violating the reality constraint by more than ``REALITY_TOL``.
    """

    def __init__(self, degree, values, label=None):
        degree = int(degree)
        if degree < 0:
            raise ValueError("degree must be >= 0")
        side = 2 * degree + 1
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != (side, side, side):
            raise ValueError(
                f"coefficient cube has shape {values.shape}, expected {(side,) * 3}"
            )
        flipped = np.conj(values[::-1, ::-1, ::-1])
        viol = float(np.max(np.abs(values - flipped))) if values.size else 0.0
        scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
        if viol > REALITY_TOL * scale:
            raise ValueError(
                f"reality constraint violated: max |fhat(m) - conj(fhat(-m))| = {viol:.3e}"
            )
        self.degree = degree
        self.values = 0.5 * (values + flipped)
        self.label = label
        self._grid_cache = {}
        self._extrema = None

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls):
        return cls(0, np.zeros((1, 1, 1)), label="zero")

    @classmethod
    def constant(cls, c):
        vals = np.full((1, 1, 1), complex(c))
        if abs(vals[0, 0, 0].imag) > REALITY_TOL * max(1.0, abs(c)):
            raise ValueError("constant factor must be real")
        return cls(0, vals.real.astype(complex), label=f"const:{float(np.real(c))!r}")

    @classmethod
    def from_coeffs(cls, degree, coeff_map, label=None):
        """Build from a {(m1, m2, m3): value} mapping; missing -m entries are
        filled by conjugation, inconsistent ones are rejected."""
        side = 2 * degree + 1
        vals = np.zeros((side, side, side), dtype=np.complex128)
        seen = set()
        for m, v in coeff_map.items():
            m = tuple(int(x) for x in m)
            if any(abs(x) > degree for x in m):
                raise ValueError(f"mode {m} exceeds degree {degree}")
            idx = tuple(x + degree for x in m)
            vals[idx] = complex(v)
            seen.add(m)
        for m in list(seen):
            neg = tuple(-x for x in m)
            if neg not in seen:
                vals[tuple(-x + degree for x in m)] = np.conj(
                    vals[tuple(x + degree for x in m)]
                )
        return cls(degree, vals, label=label)

    @classmethod
    def cosine(cls, m, amplitude=1.0):
        """amplitude * cos(<m, x>)."""
        m = tuple(int(x) for x in m)
        if m == (0, 0, 0):
            return cls.constant(float(amplitude))
        d = max(abs(x) for x in m)
        half = 0.5 * float(amplitude)
        return cls.from_coeffs(d, {m: half, tuple(-x for x in m): half},
                               label=f"cos:{m}:{float(amplitude)!r}")

    @classmethod
    def sine(cls, m, amplitude=1.0):
        """amplitude * sin(<m, x>)."""
        m = tuple(int(x) for x in m)
        if m == (0, 0, 0):
            return cls.zero()
        d = max(abs(x) for x in m)
        half = float(amplitude) / 2.0
        return cls.from_coeffs(
            d,
            {m: -1j * half, tuple(-x for x in m): 1j * half},
            label=f"sin:{m}:{float(amplitude)!r}",
        )

    # -- queries ------------------------------------------------------

    def coeff(self, m):
        m = tuple(int(x) for x in m)
        if any(abs(x) > self.degree for x in m):
            return 0.0 + 0.0j
        return complex(self.values[tuple(x + self.degree for x in m)])

    @property
    def is_zero(self):
        return not np.any(self.values)

    @property
    def is_constant(self):
        if self.degree == 0:
            return True
        center = self.coeff((0, 0, 0))
        probe = self.values.copy()
        probe[self.degree, self.degree, self.degree] = 0.0
        return not np.any(probe) and abs(center.imag) == 0.0

    def grid_values(self, G):
        """Real samples of f on the uniform G^3 grid (cached)."""
        G = int(G)
        if G < 2 * self.degree + 2:
            raise ValueError(f"grid size {G} too small for degree {self.degree}")
        if G not in self._grid_cache:
            arr = np.zeros((G, G, G), dtype=np.complex128)
            d = self.degree
            rng = np.arange(-d, d + 1)
            idx = rng % G
            arr[np.ix_(idx, idx, idx)] = self.values
            vals = np.fft.ifftn(arr) * G**3
            imag = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
            scale = max(1.0, float(np.max(np.abs(vals.real))))
            if imag > 1e-10 * scale:
                raise AssertionError("factor reconstruction is not real")
            self._grid_cache[G] = vals.real
        return self._grid_cache[G]

    def extrema(self):
        """(min f, max f) sampled on a grid fine enough for the band limit."""
        if self._extrema is None:
            g = self.grid_values(max(64, 4 * self.degree + 4))
            self._extrema = (float(g.min()), float(g.max()))
        return self._extrema

    def oscillation(self):
        lo, hi = self.extrema()
        return hi - lo

    def sup_abs(self):
        lo, hi = self.extrema()
        return max(abs(lo), abs(hi))

    def mean(self):
        return float(np.real(self.coeff((0, 0, 0))))

    def describe(self):
        if self.label:
            return self.label
        if self.is_zero:
            return "zero"
        nnz = int(np.count_nonzero(self.values))
        return f"poly:d={self.degree},nnz={nnz}"

    def __eq__(self, other):
        if not isinstance(other, ConformalFactor):
            return NotImplemented
        return self.degree == other.degree and np.array_equal(self.values, other.values)

    # -- serialization ------------------------------------------------

    def to_json_dict(self):
        coeffs = []
        d = self.degree
        for m1 in range(-d, d + 1):
            for m2 in range(-d, d + 1):
                for m3 in range(-d, d + 1):
                    v = self.values[m1 + d, m2 + d, m3 + d]
                    if v != 0:
                        coeffs.append(
                            {"m": [m1, m2, m3], "re": float(v.real), "im": float(v.imag)}
                        )
        return {"degree": d, "coeffs": coeffs}

    @classmethod
    def from_json_dict(cls, doc, label=None):
        degree = int(doc["degree"])
        side = 2 * degree + 1
        vals = np.zeros((side, side, side), dtype=np.complex128)
        for entry in doc.get("coeffs", []):
            m = entry["m"]
            if len(m) != 3 or any(abs(int(x)) > degree for x in m):
                raise ValueError(f"coefficient mode {m} out of range for degree {degree}")
            vals[tuple(int(x) + degree for x in m)] = float(entry["re"]) + 1j * float(
                entry["im"]
            )
        return cls(degree, vals, label=label)


@dataclass
class ExpCoeffs:
    """Fourier coefficients of e^{tf} on a centered cube |m|_inf <= band_used.

    ``recon_error`` is the max-norm error, relative to max |e^{tf}|, of
    reconstructing e^{tf} on the sampling grid from the retained block; the
    band is expanded beyond the request until this is below the tolerance.
    """

    band: int
    band_used: int
    values: np.ndarray  # (2 b + 1,)^3
    grid_size: int
    recon_error: float

    def coeff(self, m):
        b = self.band_used
        if any(abs(int(x)) > b for x in m):
            return 0.0 + 0.0j
        return complex(self.values[tuple(int(x) + b for x in m)])

    def lookup(self, diffs):
        """Coefficients for an integer difference array of shape (..., 3)."""
        b = self.band_used
        diffs = np.asarray(diffs, dtype=np.int64)
        inside = np.all(np.abs(diffs) <= b, axis=-1)
        idx = np.where(inside[..., None], diffs + b, 0)
        out = self.values[idx[..., 0], idx[..., 1], idx[..., 2]]
        return np.where(inside, out, 0.0)


def _centered_block(arr, b, G):
    rng = np.arange(-b, b + 1) % G
    return arr[np.ix_(rng, rng, rng)]


def exp_coeffs(factor, t, band, tol=1e-12):
    """Fourier coefficients of e^{tf} for |m|_inf <= band (expanded as needed).

    The FFT grid is oversampled (G = smallest power of two at or above
    max(64, 4*band + 8*degree)), so aliasing of the analytic weight decays
    spectrally; the returned block is grown beyond ``band`` until the
    reconstruction of e^{tf} from it meets ``tol`` on the sampling grid, and
    the final reconstruction error is measured, not assumed.
    """
    band = int(band)
    if band < 0:
        raise ValueError("band must be >= 0")
    if t == 0 or factor.is_constant:
        side = 2 * band + 1
        vals = np.zeros((side, side, side), dtype=np.complex128)
        vals[band, band, band] = np.exp(t * factor.mean()) if t != 0 else 1.0
        return ExpCoeffs(band, band, vals, 0, 0.0)

    d = max(1, factor.degree)
    G = _next_pow2(max(64, 4 * band + 8 * d))
    h = np.exp(t * factor.grid_values(G))
    hhat = np.fft.fftn(h) / G**3
    scale = float(np.max(np.abs(h)))
    # Kill FFT noise dust: keeps the mass heuristic meaningful and the
    # support of the returned block equal to the analytic support.
    hhat[np.abs(hhat) < 1e-15 * scale] = 0.0
    total = float(np.sum(np.abs(hhat)))
    b = band
    b_max = G // 2 - 1
    # Dropped-mass pre-pass (an upper bound for the max-norm error) ...
    while b < b_max:
        kept = float(np.sum(np.abs(_centered_block(hhat, b, G))))
        if total - kept <= tol * scale:
            break
        b += 1
    # ... then measure the actual reconstruction error and grow if needed.
    while True:
        vals = _centered_block(hhat, b, G).copy()
        vals = 0.5 * (vals + np.conj(vals[::-1, ::-1, ::-1]))
        trunc = np.zeros((G, G, G), dtype=np.complex128)
        rng = np.arange(-b, b + 1) % G
        trunc[np.ix_(rng, rng, rng)] = vals
        recon = np.fft.ifftn(trunc) * G**3
        err = float(np.max(np.abs(recon - h))) / scale
        if err <= tol:
            return ExpCoeffs(band, b, vals, G, err)
        if b >= b_max:
            raise ValueError(
                f"cannot reach reconstruction tolerance {tol:.1e} within the FFT grid "
                f"(got {err:.3e}); deformation parameter likely out of range"
            )
        b += 1


def required_band(mode_set):
    """Largest |kappa - kappa'|_inf over the mode set (per-axis bound 2N)."""
    return 2 * mode_set.N


def assemble_multiplication(mode_set, coeff_lookup):
    """Galerkin matrix of multiplication by a function with the given
    coefficient lookup (callable on an integer difference array)."""
    vals = coeff_lookup(mode_set.mode_diffs)
    out = np.kron(vals, np.eye(2, dtype=np.complex128))
    return 0.5 * (out + out.conj().T)


def factor_multiplication_matrix(factor, mode_set):
    """Exact Galerkin matrix of multiplication by the trig polynomial f."""

    def lookup(diffs):
        d = factor.degree
        diffs = np.asarray(diffs, dtype=np.int64)
        inside = np.all(np.abs(diffs) <= d, axis=-1)
        idx = np.where(inside[..., None], diffs + d, 0)
        out = factor.values[idx[..., 0], idx[..., 1], idx[..., 2]]
        return np.where(inside, out, 0.0)

    return assemble_multiplication(mode_set, lookup)


def assemble_B(factor, t, mode_set, tol=1e-12):
    """Hermitian positive definite Galerkin matrix of multiplication by e^{tf}.

    Entries are ``B[kappa, kappa'] = exp_hat(kappa - kappa') I_2`` (mode
    differences are always integer vectors).  Emits a warning outside the
    accepted deformation range and raises PositiveDefiniteError when the
    Cholesky factorization fails.
    """
    if abs(t) * factor.oscillation() > T_RANGE_LIMIT:
        warnings.warn(
            f"|t| * osc(f) = {abs(t) * factor.oscillation():.3f} exceeds the accepted "
            f"range {T_RANGE_LIMIT}; first-order theory may be unreliable",
            stacklevel=2,
        )
    if t == 0 or factor.is_zero:
        return np.eye(mode_set.dim, dtype=np.complex128)
    try:
        exp = exp_coeffs(factor, t, required_band(mode_set), tol=tol)
    except ValueError as exc:
        # The weight cannot even be resolved on the oversampled grid; treat
        # it like the Cholesky failure it would become.
        raise PositiveDefiniteError(
            f"conformal weight for t={t} is not representable at this truncation: {exc}"
        ) from exc
    B = assemble_multiplication(mode_set, exp.lookup)
    try:
        np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise PositiveDefiniteError(
            f"Galerkin weight for t={t} is not positive definite"
        ) from exc
    return B


@dataclass
class DeformedOperator:
    """The matrix pair (A, B) of one conformal deformation, plus metadata."""

    mode_set: ModeSet
    t: float
    factor: ConformalFactor
    A: np.ndarray
    B: np.ndarray

    @property
    def volume(self):
        """Total volume of the deformed metric, int e^{n t f} dmu."""
        if self.t == 0 or self.factor.is_zero:
            return 1.0
        G = max(64, 4 * self.factor.degree + 4)
        return float(np.mean(np.exp(TORUS_DIM * self.t * self.factor.grid_values(G))))


def build_deformed_operator(factor, t, mode_set):
    A = mode_set.flat_matrix
    B = assemble_B(factor, t, mode_set)
    return DeformedOperator(mode_set, float(t), factor, A, B)


def deformed_spectrum(
    factor, t, mode_set, tau_rel=None, keep_vectors=True, keep_B=True
):
    """Solve the deformed eigenproblem and cluster the spectrum.

    At t = 0 the weight matrix is the exact identity and the flat spectrum is
    reproduced exactly.  The default clustering tolerance is the degeneracy
    tolerance at t = 0 and the split-detection tolerance otherwise.
    """
    if tau_rel is None:
        tau_rel = (
            eigensolver.TAU_REL_DEGENERATE
            if t == 0 or factor.is_zero
            else eigensolver.TAU_REL_SPLIT
        )
    op = build_deformed_operator(factor, t, mode_set)
    identity_B = t == 0 or factor.is_zero
    w, V, residual_max = eigensolver.solve_gen_hermitian(
        op.A, None if identity_B else op.B
    )
    meta = {
        "delta": list(mode_set.spin_structure.delta),
        "N": mode_set.N,
        "t": float(t),
        "f_ref": factor.describe(),
        "volume": op.volume,
    }
    return eigensolver.build_spectrum_result(
        w,
        V,
        residual_max,
        tau_rel,
        meta,
        mode_set=mode_set,
        B=None if (identity_B or not keep_B) else op.B,
        keep_vectors=keep_vectors,
    )


def flat_spectrum(mode_set, tau_rel=eigensolver.TAU_REL_DEGENERATE, keep_vectors=True):
    """Spectrum of the undeformed operator (exact below the truncation radius)."""
    return deformed_spectrum(
        ConformalFactor.zero(), 0.0, mode_set, tau_rel=tau_rel, keep_vectors=keep_vectors
    )


def gradient_clifford_term(factor, phi, out_mode_set):
    """Clifford multiplication by grad f in Fourier space, exactly.

    Mode m of f sends the coefficient at kappa to a contribution
    ``fhat(m) * dirac_symbol(m) @ u_kappa`` at kappa + m.
    """
    out = np.zeros((out_mode_set.n_modes, 2), dtype=np.complex128)
    d = factor.degree
    for m1 in range(-d, d + 1):
        for m2 in range(-d, d + 1):
            for m3 in range(-d, d + 1):
                fm = factor.values[m1 + d, m2 + d, m3 + d]
                if fm == 0:
                    continue
                m = (m1, m2, m3)
                pos = out_mode_set.positions_of(phi.mode_set.modes + np.asarray(m, float))
                if np.any(pos < 0):
                    raise ValueError("output mode set too small for the gradient term")
                sym = dirac_symbol(np.asarray(m, dtype=float))
                np.add.at(out, pos, fm * (phi.coeffs @ sym.T))
    return SpinorField(out_mode_set, out)


def apply_deformed_dirac(factor, t, phi, exp_tol=1e-12):
    """Apply the deformed Dirac operator to a field, on an enlarged mode set.

    Implements ``e^{-tf} (D phi + ((n-1)/2) t c(grad f) phi)`` with n = 3.
    The output mode set is enlarged by the factor degree plus the band of the
    e^{-tf} expansion, so the only truncation loss is the measured spectral
    tail of the weight (below ``exp_tol``).
    """
    ms = phi.mode_set
    if t == 0 or factor.is_zero:
        return apply_flat_dirac(phi)
    d = factor.degree
    exp_neg = exp_coeffs(factor, -t, max(d + 2, 4), tol=exp_tol)
    n_out = ms.N + d + exp_neg.band_used
    out_ms = build_mode_set(n_out, ms.spin_structure)

    inner = embed_field(apply_flat_dirac(phi), out_ms)
    grad = gradient_clifford_term(factor, phi, out_ms)
    halfn = (TORUS_DIM - 1) / 2.0
    psi = inner + (halfn * t) * grad

    # Multiply by e^{-tf} through an oversampled grid; gather back onto the
    # enlarged mode set.
    G = _next_pow2(max(64, 2 * (n_out + 1)))
    arr = np.zeros((G, G, G, 2), dtype=np.complex128)
    idx = out_ms.k_values % G
    arr[idx[:, 0], idx[:, 1], idx[:, 2], :] = psi.coeffs
    vals = np.fft.ifftn(arr, axes=(0, 1, 2)) * G**3
    weight = np.exp(-t * factor.grid_values(G))
    vals *= weight[..., None]
    coeffs = np.fft.fftn(vals, axes=(0, 1, 2)) / G**3
    out = coeffs[idx[:, 0], idx[:, 1], idx[:, 2], :]
    return SpinorField(out_ms, out)


def _grid_dirac(values, spin_structure, G):
    """Apply the flat Dirac operator to gridded spinor values spectrally.

    The half-integer mode shift is handled by factoring out the phase
    e^{i <delta/2, x>}: the remaining integer-frequency part transforms with
    the shifted symbol -sigma . (k + delta/2).
    """
    shift = spin_structure.shift
    n = np.arange(G)
    phase = np.ones((G, G, G), dtype=np.complex128)
    for axis, d in enumerate(spin_structure.delta):
        if d:
            p = np.exp(-1j * np.pi * n / G)
            shape = [1, 1, 1]
            shape[axis] = G
            phase = phase * p.reshape(shape)
    tilde = values * phase[..., None]
    coeffs = np.fft.fftn(tilde, axes=(0, 1, 2)) / G**3
    freqs = np.fft.fftfreq(G, d=1.0 / G)  # integer frequencies in FFT order
    k1, k2, k3 = np.meshgrid(freqs, freqs, freqs, indexing="ij")
    kappa = np.stack([k1 + shift[0], k2 + shift[1], k3 + shift[2]], axis=-1)
    sym = dirac_symbol(kappa)
    out = np.einsum("xyzab,xyzb->xyza", sym, coeffs)
    vals = np.fft.ifftn(out, axes=(0, 1, 2)) * G**3
    return vals * np.conj(phase)[..., None]


def substitution_identity_error(factor, t, phi, G=64):
    """Relative grid error of D(e^{(n-1)tf/2} phi) = e^{(n+1)tf/2} D_deformed phi.

    This identity is the bridge between the direct formula for the deformed
    operator and the generalized eigenproblem actually solved; both sides are
    evaluated by independent grid arithmetic.
    """
    from .torus_dirac import field_on_grid

    ms = phi.mode_set
    dphi = apply_deformed_dirac(factor, t, phi)
    G = max(int(G), _next_pow2(2 * dphi.mode_set.N + 2))
    fg = factor.grid_values(G)
    phi_vals = field_on_grid(phi, G)
    lhs = _grid_dirac(
        phi_vals * np.exp(0.5 * (TORUS_DIM - 1) * t * fg)[..., None],
        ms.spin_structure,
        G,
    )
    rhs = field_on_grid(dphi, G) * np.exp(0.5 * (TORUS_DIM + 1) * t * fg)[..., None]
    scale = float(np.max(np.abs(lhs)))
    return float(np.max(np.abs(lhs - rhs))) / max(scale, 1e-300)
